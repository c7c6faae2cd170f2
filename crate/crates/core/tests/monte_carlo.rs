use predtrig::estimation::{kf_step, variance_schedule};
use predtrig::harness::{monte_carlo, sweep, write_sweep_csv};
use predtrig::model::simulate_trajectory;
use predtrig::{
    CostSchedule, FilterState, LtiModel, MonteCarlo, Prior, Purpose, RngStream, TriggerKind,
    TriggerSpec,
};

fn quadratic_root(a: f64, b: f64, c: f64) -> f64 {
    (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
}

#[test]
fn stationary_state_variance() {
    // x_k -> q / (1 - a^2) = 0.1 / 0.0396.
    let model = LtiModel::example1();
    let prior = Prior::example();
    let target = 0.1 / (1.0 - 0.98f64 * 0.98);
    let runs = 100_000u64;
    let mut sum_sq = 0.0;
    for run in 0..runs {
        let traj = simulate_trajectory(
            &model,
            &prior,
            400,
            &mut RngStream::for_run(2, run, Purpose::Trajectory),
        )
        .unwrap();
        sum_sq += traj.state(400)[0].powi(2);
    }
    let var = sum_sq / runs as f64;
    assert!((var - target).abs() / target < 0.03, "{var} vs {target}");
}

#[test]
fn streams_are_decorrelated() {
    let n = 100_000;
    let mut a = RngStream::new(9, 0);
    let mut b = RngStream::new(9, 1);
    let corr: f64 = (0..n)
        .map(|_| a.standard_normal() * b.standard_normal())
        .sum::<f64>()
        / n as f64;
    // Standard error of the sample correlation is 1 / sqrt(n).
    assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "{corr}");
}

#[test]
fn filter_error_matches_posterior_covariance() {
    let model = LtiModel::example1();
    let prior = Prior::example();
    let runs = 100_000u64;
    let k = 30;
    let p = variance_schedule(&model, &prior, k)
        .unwrap()
        .posterior(k)
        .unwrap()
        .get(0, 0);
    let (mut s1, mut s2) = (0.0, 0.0);
    for run in 0..runs {
        let traj = simulate_trajectory(
            &model,
            &prior,
            k,
            &mut RngStream::for_run(3, run, Purpose::Trajectory),
        )
        .unwrap();
        let mut f = FilterState::initial(&prior);
        for j in 1..=k {
            f = kf_step(&f, traj.measurement(j), &model).unwrap();
        }
        let e = traj.state(k)[0] - f.mean()[0];
        s1 += e;
        s2 += e * e;
    }
    let n = runs as f64;
    let mean = s1 / n;
    let var = s2 / n - mean * mean;
    assert!(mean.abs() <= 3.0 * (p / n).sqrt(), "mean {mean}");
    assert!(
        (var - p).abs() <= 3.0 * p * (2.0 / (n - 1.0)).sqrt(),
        "var {var} vs {p}"
    );
}

#[test]
fn full_communication_error_matches_filter() {
    let model = LtiModel::example1();
    let prior = Prior::example();
    let spec = TriggerSpec::new(TriggerKind::Event, CostSchedule::constant(0.0).unwrap());
    let point = monte_carlo(&model, &prior, &spec, &MonteCarlo::new(2000, 200, 1)).unwrap();
    assert_eq!(point.comm_mean, 1.0);
    let steady = quadratic_root(0.9604, 0.10396, -0.01);
    assert!((steady - 0.061383).abs() < 1e-5);
    assert!(
        (point.err_mean - steady).abs() <= 3.0 * point.err_se(),
        "{point:?}"
    );
    // Exact expectation including the transient.
    let sched = variance_schedule(&model, &prior, 200).unwrap();
    let expected = (1..=200)
        .map(|k| sched.posterior(k).unwrap().trace())
        .sum::<f64>()
        / 200.0;
    assert!((point.err_mean - expected).abs() <= 3.0 * point.err_se());
}

#[test]
fn single_run_point_equals_run_metrics() {
    let model = LtiModel::example1();
    let prior = Prior::example();
    let spec = TriggerSpec::new(
        TriggerKind::SelfTrigger,
        CostSchedule::constant(0.6).unwrap(),
    );
    let mc = MonteCarlo::new(1, 200, 4);
    let point = monte_carlo(&model, &prior, &spec, &mc).unwrap();
    let trace =
        predtrig::harness::run_closed_loop(&model, &prior, &spec, 200, &mut mc.stream(0)).unwrap();
    let m = trace.metrics();
    assert_eq!(point.err_mean, m.mse);
    assert_eq!(point.comm_mean, m.comm);
    assert_eq!(point.err_std, 0.0);
}

#[test]
fn worker_count_does_not_change_results() {
    let model = LtiModel::example2();
    let prior = Prior::example();
    let triggers = [
        TriggerKind::Event,
        TriggerKind::Predictive { horizon: 2 },
        TriggerKind::SelfTrigger,
    ];
    let costs = [0.1, 0.5, 2.0];
    let csv = |workers| {
        let mc = MonteCarlo::new(300, 100, 77).with_workers(workers);
        let points = sweep(&model, &prior, &triggers, &costs, 10_000, &mc).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&points, &mut buf).unwrap();
        buf
    };
    let one = csv(1);
    assert_eq!(one, csv(3));
    assert_eq!(one, csv(8));
    assert_eq!(String::from_utf8(one).unwrap().lines().count(), 10);
}

#[test]
fn sweep_of_one_cost_equals_monte_carlo() {
    let model = LtiModel::example1();
    let prior = Prior::example();
    let mc = MonteCarlo::new(200, 200, 5);
    let kind = TriggerKind::Predictive { horizon: 2 };
    let swept = sweep(&model, &prior, &[kind], &[0.3], 10_000, &mc).unwrap();
    let spec = TriggerSpec::new(kind, CostSchedule::constant(0.3).unwrap());
    assert_eq!(
        swept,
        vec![monte_carlo(&model, &prior, &spec, &mc).unwrap()]
    );
}

#[test]
fn tradeoff_spans_both_regimes_and_is_monotone() {
    let model = LtiModel::example1();
    let prior = Prior::example();
    let costs = [
        0.01, 0.05, 0.1, 0.2, 0.3, 0.45, 0.6, 0.8, 1.0, 1.4, 2.0, 2.5,
    ];
    let mc = MonteCarlo::new(500, 200, 13);
    let triggers = [
        TriggerKind::Event,
        TriggerKind::Predictive { horizon: 2 },
        TriggerKind::SelfTrigger,
    ];
    let points = sweep(&model, &prior, &triggers, &costs, 10_000, &mc).unwrap();
    for curve in points.chunks(costs.len()) {
        let mut sorted = curve.to_vec();
        sorted.sort_by(|a, b| a.comm_mean.total_cmp(&b.comm_mean));
        assert!(sorted.last().unwrap().comm_mean > 0.7);
        assert!(sorted[0].comm_mean < 0.05);
        for w in sorted.windows(2) {
            let pooled = (w[0].err_se().powi(2) + w[1].err_se().powi(2)).sqrt();
            assert!(
                w[1].err_mean <= w[0].err_mean + 2.0 * pooled,
                "{:?} {:?}",
                w[0],
                w[1]
            );
        }
    }
}
