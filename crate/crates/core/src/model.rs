//! Linear time-varying Gaussian plant and sensor.
//!
//! ```text
//! x_k = A_{k-1} x_{k-1} + v_{k-1},   v ~ N(0, Q_{k-1})
//! y_k = H_k x_k + w_k,               w ~ N(0, R_k)
//! ```
//!
//! States are indexed from `k = 0` (the prior), measurements from `k = 1`.

use std::borrow::Cow;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymmetricPsd};
use crate::rng::RngStream;

/// Time-indexed system matrices. Implementations must be total for every
/// `k >= 0` and return matrices of the declared dimensions.
pub trait ModelProvider: Send + Sync {
    fn state_dim(&self) -> usize;
    fn measurement_dim(&self) -> usize;
    /// `A_k`, `n_x x n_x`
    fn transition(&self, k: usize) -> Cow<'_, Matrix>;
    /// `H_k`, `n_y x n_x`
    fn observation(&self, k: usize) -> Cow<'_, Matrix>;
    /// `Q_k`
    fn process_noise(&self, k: usize) -> Cow<'_, SymmetricPsd>;
    /// `R_k`
    fn measurement_noise(&self, k: usize) -> Cow<'_, SymmetricPsd>;

    /// Checks the dimensions of every matrix returned for time `k`.
    fn check_at(&self, k: usize) -> Result<()> {
        let (nx, ny) = (self.state_dim(), self.measurement_dim());
        let expect = |m: &Matrix, shape: (usize, usize)| {
            if m.shape() == shape {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    op: "model",
                    lhs: m.shape(),
                    rhs: shape,
                })
            }
        };
        expect(&self.transition(k), (nx, nx))?;
        expect(&self.observation(k), (ny, nx))?;
        expect(self.process_noise(k).as_matrix(), (nx, nx))?;
        expect(self.measurement_noise(k).as_matrix(), (ny, ny))
    }
}

/// Time-invariant model.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiModel {
    a: Matrix,
    h: Matrix,
    q: SymmetricPsd,
    r: SymmetricPsd,
}

impl LtiModel {
    pub fn new(a: Matrix, h: Matrix, q: Matrix, r: Matrix) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() {
            return Err(Error::NotSquare {
                op: "model A",
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        if h.cols() != n {
            return Err(Error::DimensionMismatch {
                op: "model H",
                lhs: h.shape(),
                rhs: (h.rows(), n),
            });
        }
        if q.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                op: "model Q",
                lhs: q.shape(),
                rhs: (n, n),
            });
        }
        if r.shape() != (h.rows(), h.rows()) {
            return Err(Error::DimensionMismatch {
                op: "model R",
                lhs: r.shape(),
                rhs: (h.rows(), h.rows()),
            });
        }
        Ok(Self {
            a,
            h,
            q: q.symmetrize()?,
            r: r.symmetrize()?,
        })
    }

    /// Scalar model `x' = a x + v`, `y = h x + w`.
    pub fn scalar(a: f64, h: f64, q: f64, r: f64) -> Result<Self> {
        Self::new(
            Matrix::scalar(a),
            Matrix::scalar(h),
            Matrix::scalar(q),
            Matrix::scalar(r),
        )
    }

    /// Stable scalar benchmark: `A = 0.98, H = 1, Q = R = 0.1`.
    pub fn example1() -> Self {
        Self::scalar(0.98, 1.0, 0.1, 0.1).expect("valid preset")
    }

    /// Unstable scalar benchmark: `A = 1.1, H = 1, Q = R = 0.1`.
    pub fn example2() -> Self {
        Self::scalar(1.1, 1.0, 0.1, 0.1).expect("valid preset")
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn q(&self) -> &SymmetricPsd {
        &self.q
    }

    pub fn r(&self) -> &SymmetricPsd {
        &self.r
    }
}

impl ModelProvider for LtiModel {
    fn state_dim(&self) -> usize {
        self.a.rows()
    }

    fn measurement_dim(&self) -> usize {
        self.h.rows()
    }

    fn transition(&self, _k: usize) -> Cow<'_, Matrix> {
        Cow::Borrowed(&self.a)
    }

    fn observation(&self, _k: usize) -> Cow<'_, Matrix> {
        Cow::Borrowed(&self.h)
    }

    fn process_noise(&self, _k: usize) -> Cow<'_, SymmetricPsd> {
        Cow::Borrowed(&self.q)
    }

    fn measurement_noise(&self, _k: usize) -> Cow<'_, SymmetricPsd> {
        Cow::Borrowed(&self.r)
    }
}

type MatrixFn = Box<dyn Fn(usize) -> Matrix + Send + Sync>;
type CovFn = Box<dyn Fn(usize) -> SymmetricPsd + Send + Sync>;

/// Time-varying model backed by closures of `k`.
pub struct FnModel {
    state_dim: usize,
    measurement_dim: usize,
    a: MatrixFn,
    h: MatrixFn,
    q: CovFn,
    r: CovFn,
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel")
            .field("state_dim", &self.state_dim)
            .field("measurement_dim", &self.measurement_dim)
            .finish_non_exhaustive()
    }
}

impl FnModel {
    pub fn new(
        state_dim: usize,
        measurement_dim: usize,
        a: impl Fn(usize) -> Matrix + Send + Sync + 'static,
        h: impl Fn(usize) -> Matrix + Send + Sync + 'static,
        q: impl Fn(usize) -> SymmetricPsd + Send + Sync + 'static,
        r: impl Fn(usize) -> SymmetricPsd + Send + Sync + 'static,
    ) -> Self {
        Self {
            state_dim,
            measurement_dim,
            a: Box::new(a),
            h: Box::new(h),
            q: Box::new(q),
            r: Box::new(r),
        }
    }
}

impl ModelProvider for FnModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn measurement_dim(&self) -> usize {
        self.measurement_dim
    }

    fn transition(&self, k: usize) -> Cow<'_, Matrix> {
        Cow::Owned((self.a)(k))
    }

    fn observation(&self, k: usize) -> Cow<'_, Matrix> {
        Cow::Owned((self.h)(k))
    }

    fn process_noise(&self, k: usize) -> Cow<'_, SymmetricPsd> {
        Cow::Owned((self.q)(k))
    }

    fn measurement_noise(&self, k: usize) -> Cow<'_, SymmetricPsd> {
        Cow::Owned((self.r)(k))
    }
}

/// Gaussian prior `N(x_0; mean, cov)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prior {
    pub mean: Vec<f64>,
    pub cov: SymmetricPsd,
}

impl Prior {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) {
            return Err(Error::DimensionMismatch {
                op: "prior",
                lhs: cov.shape(),
                rhs: (mean.len(), mean.len()),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "prior" });
        }
        Ok(Self {
            mean,
            cov: cov.symmetrize()?,
        })
    }

    /// `x_0 ~ N(1, 1)`, shared by both benchmark scenarios.
    pub fn example() -> Self {
        Self::new(vec![1.0], Matrix::scalar(1.0)).expect("valid preset")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Ground truth for `k = 0..=K`: `states[0]` is `x_0`, `measurements[k-1]`
/// is `y_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub initial_state: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub measurements: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.measurements.len()
    }

    /// `x_k` for `k >= 1`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k - 1]
    }

    /// `y_k` for `k >= 1`.
    pub fn measurement(&self, k: usize) -> &[f64] {
        &self.measurements[k - 1]
    }
}

/// `mean + L z` with `L L^T = cov` and `z` standard normal. Always draws
/// `dim` normals, so zero-variance components still advance the stream.
pub fn sample_gaussian(mean: &[f64], cov: &SymmetricPsd, rng: &mut RngStream) -> Result<Vec<f64>> {
    let n = mean.len();
    if cov.dim() != n {
        return Err(Error::DimensionMismatch {
            op: "sample_gaussian",
            lhs: (n, 1),
            rhs: (cov.dim(), cov.dim()),
        });
    }
    let z: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
    if n == 1 {
        return Ok(vec![mean[0] + cov.get(0, 0).max(0.0).sqrt() * z[0]]);
    }
    let l = cov.cholesky()?;
    let lz = l.mul_vec(&z)?;
    Ok(mean.iter().zip(lz).map(|(m, d)| m + d).collect())
}

/// Rolls out `K` steps. Draw order is fixed: `x_0`, then `v_0, w_1, v_1,
/// w_2, ...`; every trigger evaluated on the same stream therefore sees
/// the same realization.
pub fn simulate_trajectory(
    model: &dyn ModelProvider,
    prior: &Prior,
    steps: usize,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::EmptyHorizon);
    }
    let nx = model.state_dim();
    let ny = model.measurement_dim();
    if prior.dim() != nx {
        return Err(Error::DimensionMismatch {
            op: "simulate_trajectory",
            lhs: (prior.dim(), 1),
            rhs: (nx, 1),
        });
    }
    let zero_x = vec![0.0; nx];
    let zero_y = vec![0.0; ny];
    let x0 = sample_gaussian(&prior.mean, &prior.cov, rng)?;
    let mut states = Vec::with_capacity(steps);
    let mut measurements = Vec::with_capacity(steps);
    let mut x = x0.clone();
    for k in 1..=steps {
        let v = sample_gaussian(&zero_x, &model.process_noise(k - 1), rng)?;
        let ax = model.transition(k - 1).mul_vec(&x)?;
        x = ax.iter().zip(&v).map(|(a, b)| a + b).collect();
        let w = sample_gaussian(&zero_y, &model.measurement_noise(k), rng)?;
        let hx = model.observation(k).mul_vec(&x)?;
        let y = hx.iter().zip(&w).map(|(a, b)| a + b).collect();
        states.push(x.clone());
        measurements.push(y);
    }
    Ok(Trajectory {
        initial_state: x0,
        states,
        measurements,
    })
}

/// `Phi_{k2:k1} = A_{k2} ... A_{k1}`. `k2 + 1 == k1` is the empty product.
pub fn transition_product(model: &dyn ModelProvider, k1: usize, k2: usize) -> Result<Matrix> {
    if k2 + 1 < k1 {
        return Err(Error::InvalidTransitionRange { k1, k2 });
    }
    let mut phi = Matrix::identity(model.state_dim());
    for k in k1..=k2 {
        phi = model.transition(k).multiply(&phi)?;
    }
    Ok(phi)
}

/// Applies `A_{from}, ..., A_{from+steps-1}` to `x`, i.e.
/// `Phi_{(from+steps-1):from} x`.
pub fn propagate_mean(
    model: &dyn ModelProvider,
    x: &[f64],
    from: usize,
    steps: usize,
) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    for k in from..from + steps {
        out = model.transition(k).mul_vec(&out)?;
    }
    Ok(out)
}
