//! Unscented transform and the UKF predict / update cycle for the CTRV model.
//!
//! Process noise enters through a 7-dimensional augmented state
//! `[x, y, theta, v, w, v_a, v_w]` so that it passes through the nonlinear
//! dynamics; measurement noise on the `(x, y, theta)` pose is additive.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::motion_model::{ctrv_step_noisy, wrap_angle, ProcessNoiseSpec, State5};
use crate::trajectory::{Measurement3, Trajectory};

/// Index of the heading in the CTRV state and in the pose measurement.
pub const HEADING: usize = 2;

/// Secondary scaling parameter of the sigma-point spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    /// `kappa = 3 - n` for an `n`-dimensional distribution.
    ThreeMinusN,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: Kappa,
}

impl Default for UtConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 2.0,
            kappa: Kappa::ThreeMinusN,
        }
    }
}

impl UtConfig {
    pub fn kappa_for(&self, n: usize) -> f64 {
        match self.kappa {
            Kappa::ThreeMinusN => 3.0 - n as f64,
            Kappa::Value(k) => k,
        }
    }

    /// `lambda = alpha^2 (n + kappa) - n`.
    pub fn lambda(&self, n: usize) -> f64 {
        let n_f = n as f64;
        self.alpha * self.alpha * (n_f + self.kappa_for(n)) - n_f
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "UT alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !self.beta.is_finite() {
            return Err(Error::Config("UT beta must be finite".into()));
        }
        Ok(())
    }
}

/// A Gaussian belief: mean vector and covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Domain(format!(
                "covariance is {}x{} but mean has {} entries",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Interprets a 5-dimensional belief mean as a CTRV state.
    pub fn state(&self) -> State5 {
        State5::from_slice(self.mean.as_slice())
    }

    pub fn from_state(state: &State5, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::from_column_slice(state.to_vector().as_slice()), cov)
    }

    /// Default initial belief around the first pose: speed 8 m/s, zero yaw
    /// rate, covariance `diag(1, 1, 0.5, 16, 1)`.
    pub fn default_init(z0: &Measurement3) -> Self {
        Self::init_with_speed(z0, 8.0)
    }

    pub fn init_with_speed(z0: &Measurement3, speed: f64) -> Self {
        Self {
            mean: DVector::from_vec(vec![z0.x, z0.y, wrap_angle(z0.theta), speed, 0.0]),
            cov: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.5, 16.0, 1.0])),
        }
    }
}

/// Additive pose-measurement noise variances (m^2, m^2, rad^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSpec {
    pub sigma_nx: f64,
    pub sigma_ny: f64,
    pub sigma_ntheta: f64,
}

impl Default for MeasurementSpec {
    fn default() -> Self {
        Self {
            sigma_nx: 0.25,
            sigma_ny: 0.25,
            sigma_ntheta: 0.25,
        }
    }
}

impl MeasurementSpec {
    pub fn new(sigma_nx: f64, sigma_ny: f64, sigma_ntheta: f64) -> Result<Self> {
        let spec = Self {
            sigma_nx,
            sigma_ny,
            sigma_ntheta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero() -> Self {
        Self {
            sigma_nx: 0.0,
            sigma_ny: 0.0,
            sigma_ntheta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.sigma_nx, self.sigma_ny, self.sigma_ntheta];
        if all.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config(format!(
                "measurement variances must be finite and non-negative, got {all:?}"
            )));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(self.sigma_nx, self.sigma_ny, self.sigma_ntheta))
    }
}

/// Everything the filter needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterConfig {
    pub process: ProcessNoiseSpec,
    pub measurement: MeasurementSpec,
    pub ut: UtConfig,
}

/// `2n + 1` sigma points (as matrix columns) with their mean and covariance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSet {
    pub points: DMatrix<f64>,
    pub wm: DVector<f64>,
    pub wc: DVector<f64>,
}

impl SigmaSet {
    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }
}

/// Lower-triangular factor of a symmetric positive semidefinite matrix.
///
/// Zero pivots are accepted (the column is left empty) as long as the rest of
/// the column is zero too, so rank-deficient covariances factor without jitter.
fn psd_cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > tol {
            let root = d.sqrt();
            l[(j, j)] = root;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / root;
            }
        } else if d >= -tol {
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > 1e-9 * scale {
                    return None;
                }
            }
        } else {
            return None;
        }
    }
    l.iter().all(|v| v.is_finite()).then_some(l)
}

/// `V sqrt(D)` for a symmetric matrix whose negative eigenvalues are rounding
/// noise; catches semidefinite inputs the pivoted test above rejects.
fn eigen_sqrt(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = a.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
        return None;
    }
    let mut root = eig.eigenvectors;
    for (mut col, &l) in root.column_iter_mut().zip(eig.eigenvalues.iter()) {
        col *= l.max(0.0).sqrt();
    }
    root.iter().all(|v| v.is_finite()).then_some(root)
}

/// Nearest PSD matrix by eigenvalue clipping. A near-exact measurement drives
/// the posterior to zero and rounding can leave it slightly indefinite.
fn clip_to_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let n = a.nrows();
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    DMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| eig.eigenvectors[(i, k)] * lambda[k] * eig.eigenvectors[(j, k)])
            .sum()
    })
}

/// Matrix square root with the jitter ladder: `1e-9 trace / n` on the
/// diagonal, escalated x10 up to three times.
pub(crate) fn sqrt_psd(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (cov + cov.transpose()) * 0.5;
    if let Some(l) = psd_cholesky(&sym).or_else(|| eigen_sqrt(&sym)) {
        return Ok(l);
    }
    let n = sym.nrows();
    let base = 1e-9 * sym.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    for step in 0..4 {
        let jitter = base * 10f64.powi(step);
        let mut repaired = sym.clone();
        for i in 0..n {
            repaired[(i, i)] += jitter;
        }
        if let Some(l) = psd_cholesky(&repaired) {
            return Ok(l);
        }
    }
    Err(Error::numerical(
        "covariance square root failed after jitter escalation",
        Some(sym),
    ))
}

/// Rounds `c` so that `m + c` and `m - c` are both exact doubles. With the
/// tiny default spread the central weight is about `-1e6`, so rounding either
/// point asymmetrically would show up in the recovered mean.
fn representable_offset(m: f64, c: f64) -> f64 {
    let a = m.abs();
    if c.abs() > a {
        return c;
    }
    // Exact by Sterbenz: a <= a + |c| <= 2a.
    let d = (a + c.abs()) - a;
    d.copysign(c)
}

/// Scaled symmetric sigma points of `g`.
pub fn make_sigma_points(g: &GaussianState, cfg: &UtConfig) -> Result<SigmaSet> {
    cfg.validate()?;
    let n = g.dim();
    // n + lambda = alpha^2 (n + kappa); evaluated directly to avoid cancelling against n.
    let spread = cfg.alpha * cfg.alpha * (n as f64 + cfg.kappa_for(n));
    if spread <= 0.0 {
        return Err(Error::Config(format!(
            "n + lambda = {spread} must be positive for a real sigma-point spread (n = {n})"
        )));
    }
    let root = sqrt_psd(&g.cov)? * spread.sqrt();

    let count = 2 * n + 1;
    let mut points = DMatrix::<f64>::zeros(n, count);
    points.set_column(0, &g.mean);
    for i in 0..n {
        let col = DVector::from_fn(n, |d, _| representable_offset(g.mean[d], root[(d, i)]));
        points.set_column(1 + i, &(&g.mean + &col));
        points.set_column(1 + n + i, &(&g.mean - &col));
    }

    let wi = 1.0 / (2.0 * spread);
    let w0m = 1.0 - 2.0 * n as f64 * wi;
    let mut wm = DVector::from_element(count, wi);
    let mut wc = DVector::from_element(count, wi);
    wm[0] = w0m;
    wc[0] = w0m + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
    Ok(SigmaSet { points, wm, wc })
}

/// Weighted mean of sigma-point columns. Dimensions in `angle_dims` average
/// the wrapped offsets from the first (central) point, so the result is
/// insensitive to the `+-pi` seam.
fn weighted_mean(points: &DMatrix<f64>, wm: &DVector<f64>, angle_dims: &[usize]) -> DVector<f64> {
    let n = points.nrows();
    let mut mean = DVector::zeros(n);
    for d in 0..n {
        let anchor = points[(d, 0)];
        let is_angle = angle_dims.contains(&d);
        let mut acc = 0.0;
        for (i, w) in wm.iter().enumerate().skip(1) {
            let delta = points[(d, i)] - anchor;
            acc += w * if is_angle { wrap_angle(delta) } else { delta };
        }
        mean[d] = if is_angle {
            wrap_angle(anchor + acc)
        } else {
            anchor + acc
        };
    }
    mean
}

/// Deviations of every column from `mean`, angle-wrapped on `angle_dims`.
fn deviations(points: &DMatrix<f64>, mean: &DVector<f64>, angle_dims: &[usize]) -> DMatrix<f64> {
    let mut dev = points.clone();
    for mut col in dev.column_iter_mut() {
        col -= mean;
        for &d in angle_dims {
            col[d] = wrap_angle(col[d]);
        }
    }
    dev
}

fn weighted_outer(a: &DMatrix<f64>, b: &DMatrix<f64>, wc: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = b.clone();
    for (i, mut col) in scaled.column_iter_mut().enumerate() {
        col *= wc[i];
    }
    a * scaled.transpose()
}

/// Pushes every sigma point through `f`, failing on the first non-finite output.
fn propagate(set: &SigmaSet, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Result<DMatrix<f64>> {
    let mut out: Option<DMatrix<f64>> = None;
    for (i, col) in set.points.column_iter().enumerate() {
        let y = f(&col.into_owned());
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Propagation { index: i });
        }
        let m = out.get_or_insert_with(|| DMatrix::zeros(y.len(), set.len()));
        m.set_column(i, &y);
    }
    Ok(out.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

/// Unscented transform of `set` through `f`.
pub fn unscented_transform(
    set: &SigmaSet,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    angle_dims: &[usize],
) -> Result<GaussianState> {
    let ys = propagate(set, f)?;
    let mean = weighted_mean(&ys, &set.wm, angle_dims);
    let dev = deviations(&ys, &mean, angle_dims);
    let cov = symmetrize(weighted_outer(&dev, &dev, &set.wc));
    Ok(GaussianState { mean, cov })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn check_state_belief(belief: &GaussianState) -> Result<()> {
    if belief.dim() != 5 {
        return Err(Error::Domain(format!(
            "CTRV belief must be 5-dimensional, got {}",
            belief.dim()
        )));
    }
    Ok(())
}

/// Time update: propagates the augmented sigma points through the noisy CTRV step.
pub fn ukf_predict(belief: &GaussianState, spec: &ProcessNoiseSpec, dt: f64, cfg: &UtConfig) -> Result<GaussianState> {
    check_state_belief(belief)?;
    spec.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let mut mean = DVector::zeros(7);
    mean.rows_mut(0, 5).copy_from(&belief.mean);
    let mut cov = DMatrix::zeros(7, 7);
    cov.view_mut((0, 0), (5, 5)).copy_from(&belief.cov);
    cov[(5, 5)] = spec.sigma_va;
    cov[(6, 6)] = spec.sigma_vw;
    let augmented = GaussianState { mean, cov };

    let set = make_sigma_points(&augmented, cfg)?;
    unscented_transform(
        &set,
        |p| {
            let s = State5::from_slice(&p.as_slice()[..5]);
            let next = ctrv_step_noisy(&s, (p[5], p[6]), dt);
            DVector::from_column_slice(next.to_vector().as_slice())
        },
        &[HEADING],
    )
}

/// Measurement update with a pose observation `z`.
pub fn ukf_update(
    pred: &GaussianState,
    z: &Measurement3,
    meas: &MeasurementSpec,
    cfg: &UtConfig,
) -> Result<GaussianState> {
    check_state_belief(pred)?;
    meas.validate()?;
    let set = make_sigma_points(pred, cfg)?;
    let ys = set.points.rows(0, 3).into_owned();
    let y_mean = weighted_mean(&ys, &set.wm, &[HEADING]);
    let y_dev = deviations(&ys, &y_mean, &[HEADING]);
    let x_dev = deviations(&set.points, &pred.mean, &[HEADING]);

    let r = DMatrix::from_iterator(3, 3, meas.covariance().iter().copied());
    let p_y = symmetrize(weighted_outer(&y_dev, &y_dev, &set.wc)) + r;
    let p_xy = weighted_outer(&x_dev, &y_dev, &set.wc);

    let chol = p_y
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("innovation covariance is not invertible", Some(p_y.clone())))?;
    // K = P_xy P_y^-1, solved as P_y K^T = P_xy^T.
    let gain = chol.solve(&p_xy.transpose()).transpose();

    let mut innovation = DVector::from_vec(vec![z.x, z.y, z.theta]) - &y_mean;
    innovation[HEADING] = wrap_angle(innovation[HEADING]);

    let mut mean = &pred.mean + &gain * innovation;
    mean[HEADING] = wrap_angle(mean[HEADING]);
    let mut cov = symmetrize(&pred.cov - &gain * p_y * gain.transpose());
    if cov.diagonal().iter().any(|&d| d < 0.0) {
        cov = clip_to_psd(&cov);
    }
    Ok(GaussianState { mean, cov })
}

/// Runs the filter over a measurement series: an update on `init` for the
/// first sample, then predict / update for every later one.
pub fn filter_trajectory(
    z_series: &Trajectory<Measurement3>,
    init: &GaussianState,
    cfg: &FilterConfig,
) -> Result<Trajectory<GaussianState>> {
    if z_series.is_empty() {
        return Err(Error::Domain("cannot filter an empty measurement series".into()));
    }
    let wrap_err = |index: usize| {
        move |e: Error| Error::FilterStep {
            index,
            source: Box::new(e),
        }
    };
    let mut out = Vec::with_capacity(z_series.len());
    let mut belief = ukf_update(init, &z_series[0], &cfg.measurement, &cfg.ut).map_err(wrap_err(0))?;
    out.push(belief.clone());
    for (k, z) in z_series.iter().enumerate().skip(1) {
        let pred = ukf_predict(&belief, &cfg.process, z_series.dt, &cfg.ut).map_err(wrap_err(k))?;
        belief = ukf_update(&pred, z, &cfg.measurement, &cfg.ut).map_err(wrap_err(k))?;
        out.push(belief.clone());
    }
    Ok(Trajectory::new(z_series.t0, z_series.dt, out))
}

/// Filters with the default initial belief built from the first measurement.
pub fn filter_with_default_init(
    z_series: &Trajectory<Measurement3>,
    cfg: &FilterConfig,
) -> Result<Trajectory<GaussianState>> {
    let first = z_series
        .samples
        .first()
        .ok_or_else(|| Error::Domain("cannot filter an empty measurement series".into()))?;
    filter_trajectory(z_series, &GaussianState::default_init(first), cfg)
}

/// Posterior means as CTRV states.
pub fn belief_states(beliefs: &Trajectory<GaussianState>) -> Trajectory<State5> {
    beliefs.map(GaussianState::state)
}

/// Posterior means projected onto the observed pose.
pub fn belief_poses(beliefs: &Trajectory<GaussianState>) -> Trajectory<Measurement3> {
    beliefs.map(|g| Measurement3::from_state(&g.state()))
}
