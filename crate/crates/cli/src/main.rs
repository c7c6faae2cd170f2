use std::process::ExitCode;

fn main() -> ExitCode {
    predtrig_cli::main_with_args(std::env::args_os())
}
