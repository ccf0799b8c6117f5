//! Ensemble analysis schemes.
//!
//! All schemes take a forecast ensemble (already inflated) and one observation
//! batch and return the analysis ensemble together with diagnostics. The
//! continuous schemes integrate the pseudo-time gradient flow
//!
//! ```text
//! dx_i/ds = -½ (C₁ ∘ P Hᵀ) R⁻¹ (H x_i + H x̄ - 2y),   s ∈ [0, 1]
//! ```
//!
//! with forward Euler and `Δs = 1/L`. `cenkf1` re-evaluates the localized
//! covariance product at every step; `cenkf2` freezes it at `s = 0` and runs
//! the recursion in observation space.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{column_mean, covariance, stats, subtract_mean, Ensemble};
use crate::error::{dim_err, ensure_shape, Error, Result};
use crate::localization::TaperMatrices;
use crate::models::{step_in_place, IntegratorConfig, Model, Workspace};
use crate::observation::{LinearObservation, ObsError, ObservationOperator};

/// Relative slack used when deciding whether the potential went up.
const POTENTIAL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    #[serde(alias = "enkf")]
    EnkfPerturbed,
    #[serde(alias = "esrf")]
    EsrfSequential,
    Denkf,
    Cenkf1,
    Cenkf2,
    KalmanOracle,
}

impl FilterKind {
    pub const PRODUCTION: [FilterKind; 5] = [
        FilterKind::EnkfPerturbed,
        FilterKind::EsrfSequential,
        FilterKind::Denkf,
        FilterKind::Cenkf1,
        FilterKind::Cenkf2,
    ];

    /// Short name used by the CLI and CSV output.
    pub fn name(&self) -> &'static str {
        match self {
            Self::EnkfPerturbed => "enkf",
            Self::EsrfSequential => "esrf",
            Self::Denkf => "denkf",
            Self::Cenkf1 => "cenkf1",
            Self::Cenkf2 => "cenkf2",
            Self::KalmanOracle => "kalman_oracle",
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, Self::Cenkf1 | Self::Cenkf2)
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "enkf" | "enkf_perturbed" => Self::EnkfPerturbed,
            "esrf" | "esrf_sequential" => Self::EsrfSequential,
            "denkf" => Self::Denkf,
            "cenkf1" => Self::Cenkf1,
            "cenkf2" => Self::Cenkf2,
            "kalman_oracle" | "oracle" => Self::KalmanOracle,
            other => return Err(Error::Validation(format!("unknown filter '{other}'"))),
        })
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub kind: FilterKind,
    /// Multiplicative inflation δ ≥ 1, applied by the caller before `analyze`.
    pub inflation: f64,
    /// Pseudo-time steps `L` (`Δs = 1/L`) for the continuous schemes.
    pub steps: usize,
    /// Shift the perturbed-observation draws to zero sample mean.
    #[serde(default)]
    pub recenter_perturbations: bool,
}

impl AnalysisConfig {
    pub fn new(kind: FilterKind) -> Self {
        Self {
            kind,
            inflation: 1.0,
            steps: 4,
            recenter_perturbations: false,
        }
    }

    pub fn with_inflation(mut self, delta: f64) -> Self {
        self.inflation = delta;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Validation("pseudo-time steps must be >= 1".into()));
        }
        if !(self.inflation >= 1.0) || !self.inflation.is_finite() {
            return Err(Error::Validation(format!(
                "inflation must be finite and >= 1, got {}",
                self.inflation
            )));
        }
        Ok(())
    }

    pub fn analyze<R: Rng + ?Sized>(
        &self,
        ens_f: &Ensemble,
        problem: &AnalysisProblem<'_>,
        rng: &mut R,
    ) -> Result<AnalysisReport> {
        self.validate()?;
        match self.kind {
            FilterKind::EnkfPerturbed => enkf_perturbed(ens_f, problem, rng, self.recenter_perturbations),
            FilterKind::EsrfSequential => esrf_sequential(ens_f, problem),
            FilterKind::Denkf => denkf(ens_f, problem),
            FilterKind::Cenkf1 => cenkf1(ens_f, problem, self.steps),
            FilterKind::Cenkf2 => cenkf2(ens_f, problem, self.steps),
            FilterKind::KalmanOracle => kalman_oracle(ens_f, problem),
        }
    }
}

/// One observation batch and everything needed to assimilate it.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisProblem<'a> {
    pub obs: &'a LinearObservation,
    pub error: &'a ObsError,
    pub y: &'a DVector<f64>,
    pub localization: Option<&'a TaperMatrices>,
}

impl<'a> AnalysisProblem<'a> {
    pub fn new(obs: &'a LinearObservation, error: &'a ObsError, y: &'a DVector<f64>) -> Self {
        Self {
            obs,
            error,
            y,
            localization: None,
        }
    }

    pub fn localized(mut self, tapers: Option<&'a TaperMatrices>) -> Self {
        self.localization = tapers;
        self
    }

    fn validate(&self, ens: &Ensemble) -> Result<()> {
        let k = self.obs.k();
        ensure_shape("state dimension vs H", (ens.n(), 1), (self.obs.state_dim(), 1))?;
        ensure_shape("observation vector", (self.y.len(), 1), (k, 1))?;
        ensure_shape("R vs H", (self.error.k(), 1), (k, 1))?;
        if let Some(t) = self.localization {
            ensure_shape("C_loc,1", t.c1.shape(), (ens.n(), k))?;
            ensure_shape("C_loc,2", t.c2.shape(), (k, k))?;
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("observation vector has non-finite entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub analysis: Ensemble,
    /// Analysis mean as tracked by the scheme's own mean update.
    pub mean: DVector<f64>,
    /// Explicit `(I - K H) P_f`; only the Kalman reference fills this in.
    pub covariance: Option<DMatrix<f64>>,
    /// Potential after each pseudo-time step, starting with the forecast
    /// value (length `L + 1`). Empty for the discrete schemes.
    pub potential_trace: Vec<f64>,
    /// Frobenius norm of `X_a - X_f`.
    pub increments_norm: f64,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    fn new(ens_f: &Ensemble, analysis: DMatrix<f64>, mean: DVector<f64>) -> Result<Self> {
        let increments_norm = (&analysis - ens_f.states()).norm();
        let analysis = Ensemble::new(analysis).map_err(|_| Error::StateBlowup { max_abs: f64::INFINITY })?;
        Ok(Self {
            analysis,
            mean,
            covariance: None,
            potential_trace: Vec::new(),
            increments_norm,
            warnings: Vec::new(),
        })
    }

    /// Number of pseudo-time steps over which the potential went up.
    pub fn potential_increases(&self) -> usize {
        count_increases(&self.potential_trace, POTENTIAL_SLACK)
    }
}

pub(crate) fn count_increases(trace: &[f64], rel_slack: f64) -> usize {
    trace
        .windows(2)
        .filter(|w| w[1] > w[0] + rel_slack * w[0].abs())
        .count()
}

/// Warnings for two or more consecutive increases of the potential.
fn monitor_potential(trace: &[f64]) -> Vec<String> {
    let mut warnings = Vec::new();
    let mut run = 0;
    for (l, w) in trace.windows(2).enumerate() {
        if w[1] > w[0] + POTENTIAL_SLACK * w[0].abs() {
            run += 1;
            if run == 2 {
                warnings.push(format!("potential increased over consecutive pseudo-time steps ending at step {}", l + 1));
            }
        } else {
            run = 0;
        }
    }
    warnings
}

/// Observation-space quantities of the current ensemble.
struct ObsSpace {
    mean: DVector<f64>,
    dev: DMatrix<f64>,
    /// `H X`
    hx: DMatrix<f64>,
    /// `H x̄`
    hmean: DVector<f64>,
    /// `H X'`
    hdev: DMatrix<f64>,
}

impl ObsSpace {
    fn new(x: &DMatrix<f64>, obs: &LinearObservation) -> Result<Self> {
        let mean = column_mean(x);
        let dev = subtract_mean(x, &mean);
        let hx = obs.apply_matrix(x)?;
        let hmean = obs.apply(&mean)?;
        let hdev = subtract_mean(&hx, &hmean);
        Ok(Self { mean, dev, hx, hmean, hdev })
    }

    fn m(&self) -> usize {
        self.dev.ncols()
    }

    /// `C₁ ∘ (P Hᵀ)`, `n × k`.
    fn pht(&self, loc: Option<&TaperMatrices>) -> DMatrix<f64> {
        let scale = 1.0 / (self.m() as f64 - 1.0);
        let pht = (&self.dev * self.hdev.transpose()) * scale;
        match loc {
            Some(t) => pht.component_mul(&t.c1),
            None => pht,
        }
    }

    /// `C₂ ∘ (H P Hᵀ)`, `k × k`.
    fn hpht(&self, loc: Option<&TaperMatrices>) -> DMatrix<f64> {
        let scale = 1.0 / (self.m() as f64 - 1.0);
        let hpht = (&self.hdev * self.hdev.transpose()) * scale;
        match loc {
            Some(t) => hpht.component_mul(&t.c2),
            None => hpht,
        }
    }
}

/// `K = (C₁∘PHᵀ)(C₂∘HPHᵀ + R)⁻¹` and the Cholesky factor of the innovation matrix.
fn localized_gain(
    space: &ObsSpace,
    problem: &AnalysisProblem<'_>,
) -> Result<(DMatrix<f64>, Cholesky<f64, nalgebra::Dyn>)> {
    let pht = space.pht(problem.localization);
    let innovation = space.hpht(problem.localization) + problem.error.to_dense();
    let chol = Cholesky::new(innovation).ok_or(Error::NotPositiveDefinite("innovation matrix HPHᵀ + R"))?;
    let gain = chol.solve(&pht.transpose()).transpose();
    Ok((gain, chol))
}

fn add_to_columns(dev: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut x = dev.clone();
    for mut col in x.column_iter_mut() {
        col += mean;
    }
    x
}

/// Closed-form Kalman analysis used as a verification reference.
///
/// The mean follows the (optionally localized) gain; the covariance field
/// holds `(I - K H) P_f`. Deviations are realized by the symmetric square root
/// `T = [I - (HX')ᵀ (HPHᵀ + R)⁻¹ HX' / (m-1)]^{1/2}`, `X'_a = X'_f T`,
/// which reproduces the covariance exactly when no localization is used.
pub fn kalman_oracle(ens_f: &Ensemble, problem: &AnalysisProblem<'_>) -> Result<AnalysisReport> {
    problem.validate(ens_f)?;
    let space = ObsSpace::new(ens_f.states(), problem.obs)?;
    let m = space.m();
    let (gain, chol) = localized_gain(&space, problem)?;

    let innovation = &space.hmean - problem.y;
    let mean = &space.mean - &gain * innovation;

    let pf = covariance(&stats(ens_f));
    let h = problem.obs.to_dense();
    let n = ens_f.n();
    let pa = (DMatrix::identity(n, n) - &gain * h) * pf;

    let mut t = DMatrix::identity(m, m) - space.hdev.transpose() * chol.solve(&space.hdev) / (m as f64 - 1.0);
    t = 0.5 * (&t + t.transpose());
    let eig = SymmetricEigen::new(t);
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let transform = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let dev_a = &space.dev * transform;

    let mut report = AnalysisReport::new(ens_f, add_to_columns(&dev_a, &mean), mean)?;
    report.covariance = Some(pa);
    Ok(report)
}

/// EnKF with perturbed observations: `x_i ← x_i - K (H x_i - y - η_i)`, `η_i ~ N(0, R)`.
pub fn enkf_perturbed<R: Rng + ?Sized>(
    ens_f: &Ensemble,
    problem: &AnalysisProblem<'_>,
    rng: &mut R,
    recenter: bool,
) -> Result<AnalysisReport> {
    problem.validate(ens_f)?;
    let space = ObsSpace::new(ens_f.states(), problem.obs)?;
    let (gain, _) = localized_gain(&space, problem)?;
    let m = space.m();
    let k = problem.obs.k();

    let mut innovations = space.hx.clone();
    let mut perturbations = DMatrix::zeros(k, m);
    for i in 0..m {
        perturbations.set_column(i, &problem.error.sample(rng));
    }
    if recenter {
        let mean = column_mean(&perturbations);
        perturbations = subtract_mean(&perturbations, &mean);
    }
    for (i, mut col) in innovations.column_iter_mut().enumerate() {
        col -= problem.y;
        col -= perturbations.column(i);
    }
    let analysis = ens_f.states() - gain * innovations;
    let mean = column_mean(&analysis);
    AnalysisReport::new(ens_f, analysis, mean)
}

/// Serial square-root filter: observations are assimilated one at a time in
/// index order. Requires uncorrelated observation errors.
pub fn esrf_sequential(ens_f: &Ensemble, problem: &AnalysisProblem<'_>) -> Result<AnalysisReport> {
    problem.validate(ens_f)?;
    if !problem.error.is_diagonal() {
        return Err(Error::Validation("sequential ESRF requires a diagonal R".into()));
    }
    let m = ens_f.m();
    let scale = 1.0 / (m as f64 - 1.0);
    let mut mean = ens_f.mean();
    let mut dev = subtract_mean(ens_f.states(), &mean);

    for o in 0..problem.obs.k() {
        let h = problem.obs.row(o);
        let hdev = dev.tr_mul(&h); // m-vector
        let mut hph = hdev.norm_squared() * scale;
        let mut p_h = &dev * &hdev * scale;
        if let Some(t) = problem.localization {
            hph *= t.c2[(o, o)];
            p_h.component_mul_assign(&t.c1.column(o));
        }
        let r = problem.error.variance(o);
        let s = hph + r;
        let gain = p_h / s;
        let innovation = h.dot(&mean) - problem.y[o];
        mean.axpy(-innovation, &gain, 1.0);
        let alpha = 1.0 / (1.0 + (r / s).sqrt());
        dev.ger(-alpha, &gain, &hdev, 1.0);
    }
    let analysis = add_to_columns(&dev, &mean);
    AnalysisReport::new(ens_f, analysis, mean)
}

/// Deterministic EnKF: Kalman mean update and `X'_a = X'_f - ½ K H X'_f`.
pub fn denkf(ens_f: &Ensemble, problem: &AnalysisProblem<'_>) -> Result<AnalysisReport> {
    problem.validate(ens_f)?;
    let space = ObsSpace::new(ens_f.states(), problem.obs)?;
    let (gain, _) = localized_gain(&space, problem)?;
    let mean = &space.mean - &gain * (&space.hmean - problem.y);
    let dev = &space.dev - 0.5 * &gain * &space.hdev;
    AnalysisReport::new(ens_f, add_to_columns(&dev, &mean), mean)
}

/// `V(X) = (m/2) {S(x̄) + (1/m) Σ S(x_i)}`, `S(x) = ½ (Hx - y)ᵀ R⁻¹ (Hx - y)`.
///
/// Takes the raw member matrix so single-member ensembles can be evaluated.
pub fn potential(
    members: &DMatrix<f64>,
    obs: &LinearObservation,
    error: &ObsError,
    y: &DVector<f64>,
) -> Result<f64> {
    let mut z = obs.apply_matrix(members)?;
    ensure_shape("observation vector", (y.len(), 1), (z.nrows(), 1))?;
    for mut col in z.column_iter_mut() {
        col -= y;
    }
    potential_from_innovations(&z, error)
}

/// Potential from observation-space innovations `z_i = H x_i - y`.
fn potential_from_innovations(z: &DMatrix<f64>, error: &ObsError) -> Result<f64> {
    let m = z.ncols() as f64;
    let zbar = column_mean(z);
    let rz = error.precision_apply_matrix(z)?;
    let members: f64 = z.iter().zip(rz.iter()).map(|(a, b)| a * b).sum::<f64>() * 0.5;
    let at_mean = 0.5 * zbar.dot(&error.precision_apply(&zbar)?);
    Ok(0.5 * m * (at_mean + members / m))
}

fn ensure_finite(x: &DMatrix<f64>, step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { step })
    }
}

/// Continuous update with the localized covariance product re-evaluated at
/// every forward-Euler step.
pub fn cenkf1(ens_f: &Ensemble, problem: &AnalysisProblem<'_>, steps: usize) -> Result<AnalysisReport> {
    problem.validate(ens_f)?;
    if steps == 0 {
        return Err(Error::Validation("pseudo-time steps must be >= 1".into()));
    }
    let ds = 1.0 / steps as f64;
    let mut x = ens_f.states().clone();
    let mut mean = ens_f.mean();
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(potential(&x, problem.obs, problem.error, problem.y)?);

    for l in 0..steps {
        let space = ObsSpace::new(&x, problem.obs)?;
        let pht = space.pht(problem.localization);
        let mut forcing = space.hx.clone();
        for mut col in forcing.column_iter_mut() {
            col += &space.hmean;
            col -= problem.y;
            col -= problem.y;
        }
        let direction = &pht * problem.error.precision_apply_matrix(&forcing)?;
        x -= &direction * (0.5 * ds);

        // The mean obeys dx̄/ds = -(C₁∘PHᵀ) R⁻¹ (H x̄ - y); tracked separately.
        let mean_forcing = problem.error.precision_apply(&(problem.obs.apply(&mean)? - problem.y))?;
        mean.axpy(-ds, &(&pht * mean_forcing), 1.0);

        ensure_finite(&x, l + 1)?;
        trace.push(potential(&x, problem.obs, problem.error, problem.y)?);
    }

    let mut report = AnalysisReport::new(ens_f, x, mean)?;
    report.warnings = monitor_potential(&trace);
    report.potential_trace = trace;
    Ok(report)
}

/// Continuous update with the localized products frozen at `s = 0`.
///
/// Innovations `z_i = H x_i - y` are stepped in observation space with
/// `C₂ ∘ HPHᵀ(0)` and accumulated; the state is touched once at the end.
/// For selection operators whose observation sites are grid points this is
/// algebraically identical to forward Euler on the states.
pub fn cenkf2(ens_f: &Ensemble, problem: &AnalysisProblem<'_>, steps: usize) -> Result<AnalysisReport> {
    problem.validate(ens_f)?;
    if steps == 0 {
        return Err(Error::Validation("pseudo-time steps must be >= 1".into()));
    }
    let ds = 1.0 / steps as f64;
    let space = ObsSpace::new(ens_f.states(), problem.obs)?;
    let pht = space.pht(problem.localization);
    let hpht = space.hpht(problem.localization);
    let m = space.m();

    let mut z = space.hx.clone();
    for mut col in z.column_iter_mut() {
        col -= problem.y;
    }
    let mut accumulated = DMatrix::zeros(z.nrows(), m);
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(potential_from_innovations(&z, problem.error)?);

    for l in 0..steps {
        accumulated += &z;
        let zbar = column_mean(&z);
        let forcing = add_to_columns(&z, &zbar);
        let update = &hpht * problem.error.precision_apply_matrix(&forcing)?;
        z -= &update * (0.5 * ds);
        ensure_finite(&z, l + 1)?;
        trace.push(potential_from_innovations(&z, problem.error)?);
    }

    let acc_mean = column_mean(&accumulated);
    let forcing = add_to_columns(&accumulated, &acc_mean);
    let analysis = ens_f.states() - (0.5 * ds) * (&pht * problem.error.precision_apply_matrix(&forcing)?);
    ensure_finite(&analysis, steps)?;
    let mean = &space.mean - ds * (&pht * problem.error.precision_apply(&acc_mean)?);

    let mut report = AnalysisReport::new(ens_f, analysis, mean)?;
    report.warnings = monitor_potential(&trace);
    report.potential_trace = trace;
    Ok(report)
}

/// `S(x) = ½ (h(x) - y)ᵀ R⁻¹ (h(x) - y)` for a general observation operator.
fn nonlinear_cost(op: &dyn ObservationOperator, error: &ObsError, y: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
    let d = op.observe(x) - y;
    Ok(0.5 * d.dot(&error.precision_apply(&d)?))
}

fn nonlinear_gradient(
    op: &dyn ObservationOperator,
    error: &ObsError,
    y: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let d = op.observe(x) - y;
    Ok(op.jacobian(x).tr_mul(&error.precision_apply(&d)?))
}

/// Largest state dimension for which the dense-covariance nonlinear update is allowed.
pub const NONLINEAR_MAX_DIM: usize = 1000;

/// Continuous update for a nonlinear observation operator,
/// `dx_i/ds = -½ (C ∘ P) {∇S(x_i) + ∇S(x̄)}`, with a dense `n × n` taper `C`.
pub fn cenkf1_nonlinear(
    ens_f: &Ensemble,
    op: &dyn ObservationOperator,
    error: &ObsError,
    y: &DVector<f64>,
    taper: Option<&DMatrix<f64>>,
    steps: usize,
) -> Result<AnalysisReport> {
    let n = ens_f.n();
    if n > NONLINEAR_MAX_DIM {
        return Err(Error::Validation(format!(
            "nonlinear continuous update forms a dense covariance; n = {n} exceeds {NONLINEAR_MAX_DIM}"
        )));
    }
    if steps == 0 {
        return Err(Error::Validation("pseudo-time steps must be >= 1".into()));
    }
    if y.len() != op.k() || error.k() != op.k() {
        return Err(dim_err("nonlinear observation size", op.k(), y.len()));
    }
    if let Some(c) = taper {
        ensure_shape("dense taper", c.shape(), (n, n))?;
    }
    let m = ens_f.m();
    let ds = 1.0 / steps as f64;
    let value = |x: &DMatrix<f64>| -> Result<f64> {
        let mean = column_mean(x);
        let mut total = 0.0;
        for col in x.column_iter() {
            total += nonlinear_cost(op, error, y, &col.into_owned())?;
        }
        Ok(0.5 * m as f64 * (nonlinear_cost(op, error, y, &mean)? + total / m as f64))
    };

    let mut x = ens_f.states().clone();
    let mut trace = vec![value(&x)?];
    for l in 0..steps {
        let s = stats(&Ensemble::new(x.clone()).map_err(|_| Error::Divergence { step: l })?);
        let mut p = covariance(&s);
        if let Some(c) = taper {
            p.component_mul_assign(c);
        }
        let grad_mean = nonlinear_gradient(op, error, y, &s.mean)?;
        let mut grads = DMatrix::zeros(n, m);
        for i in 0..m {
            let g = nonlinear_gradient(op, error, y, &x.column(i).into_owned())? + &grad_mean;
            grads.set_column(i, &g);
        }
        x -= (&p * grads) * (0.5 * ds);
        ensure_finite(&x, l + 1)?;
        trace.push(value(&x)?);
    }
    let mean = column_mean(&x);
    let mut report = AnalysisReport::new(ens_f, x, mean)?;
    report.warnings = monitor_potential(&trace);
    report.potential_trace = trace;
    Ok(report)
}

/// An observation available at model time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedObservation {
    pub time: f64,
    pub y: DVector<f64>,
}

/// Hat-function mollifier `δ_ε(s) = ψ(s/ε)/ε`, `ψ(s) = max(0, 1 - |s|)`.
pub fn mollifier(s: f64, epsilon: f64) -> f64 {
    (1.0 - (s / epsilon).abs()).max(0.0) / epsilon
}

/// Integrates the ensemble over `[0, duration]` with each impulsive analysis
/// replaced by a mollified forcing.
///
/// Each time step applies one model step to every member followed by a
/// forward-Euler step of the assimilation term weighted by
/// `δ_ε(t - t_j)` evaluated at the start of the step; the assimilation term
/// is the localized continuous-update right-hand side for observation `j`.
/// Returns the ensemble after every step, starting with the initial one.
#[allow(clippy::too_many_arguments)]
pub fn mollified_assimilate<M: Model + ?Sized>(
    model: &M,
    integrator: &IntegratorConfig,
    ens: &Ensemble,
    schedule: &[TimedObservation],
    obs: &LinearObservation,
    error: &ObsError,
    localization: Option<&TaperMatrices>,
    epsilon: f64,
    duration: f64,
) -> Result<Vec<Ensemble>> {
    integrator.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::Validation(format!("mollifier width must be positive, got {epsilon}")));
    }
    let dt = integrator.dt;
    if !(dt > 0.0) || dt > 0.5 * epsilon * (1.0 + 1e-12) {
        return Err(Error::Validation(format!(
            "time step {dt} does not resolve the mollifier (need 0 < dt <= ε/2 = {})",
            0.5 * epsilon
        )));
    }
    for w in schedule.windows(2) {
        if w[1].time - w[0].time < 2.0 * epsilon * (1.0 - 1e-12) {
            return Err(Error::Validation(format!(
                "mollifier windows overlap: observations at t = {} and t = {} are closer than 2ε",
                w[0].time, w[1].time
            )));
        }
    }
    let steps = integrator.steps_for(duration)?;
    let mut x = ens.states().clone();
    let mut ws = Workspace::new(ens.n());
    let mut trajectory = Vec::with_capacity(steps + 1);
    trajectory.push(ens.clone());

    for s in 0..steps {
        let t = s as f64 * dt;
        let mut increment: Option<DMatrix<f64>> = None;
        for ob in schedule {
            let weight = mollifier(t - ob.time, epsilon);
            if weight == 0.0 {
                continue;
            }
            let problem = AnalysisProblem::new(obs, error, &ob.y).localized(localization);
            let current = Ensemble::new(x.clone()).map_err(|_| Error::Divergence { step: s })?;
            problem.validate(&current)?;
            let space = ObsSpace::new(&x, obs)?;
            let mut forcing = space.hx.clone();
            for mut col in forcing.column_iter_mut() {
                col += &space.hmean;
                col -= &ob.y;
                col -= &ob.y;
            }
            let term = space.pht(localization) * error.precision_apply_matrix(&forcing)? * (0.5 * weight * dt);
            increment = Some(match increment {
                Some(acc) => acc + term,
                None => term,
            });
        }
        for mut col in x.column_iter_mut() {
            let mut member = col.clone_owned();
            step_in_place(model, integrator, &mut member, &mut ws)?;
            col.copy_from(&member);
        }
        if let Some(inc) = increment {
            x -= inc;
        }
        ensure_finite(&x, s + 1)?;
        trajectory.push(Ensemble::new(x.clone())?);
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_ensemble() -> Ensemble {
        Ensemble::new(DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0])).unwrap()
    }

    fn random_ensemble(seed: u64, n: usize, m: usize) -> Ensemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ensemble::new(DMatrix::from_fn(n, m, |_, _| rng.gen_range(-2.0..2.0))).unwrap()
    }

    #[test]
    fn oracle_two_state_by_hand() {
        // P_f = [[1/3, -1/6], [-1/6, 1/3]], H = (1, 0), R = 1, y = 2, x̄_f = (1/3, 1/3).
        // K = (1/4, -1/8), x̄_a = x̄_f - K (1/3 - 2) = (3/4, 1/8).
        let ens = small_ensemble();
        let h = LinearObservation::selection(vec![0], 2).unwrap();
        let r = ObsError::identity(1);
        let y = DVector::from_vec(vec![2.0]);
        let rep = kalman_oracle(&ens, &AnalysisProblem::new(&h, &r, &y)).unwrap();
        assert!((rep.mean[0] - 0.75).abs() < 1e-14);
        assert!((rep.mean[1] - 0.125).abs() < 1e-14);
        // P_a = (I - K H) P_f = [[1/4, -1/8], [-1/8, 5/16]]
        let pa = rep.covariance.unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.25, -0.125, -0.125, 0.3125]);
        assert!((&pa - &want).amax() < 1e-14);
        let realized = covariance(&stats(&rep.analysis));
        assert!((realized - want).amax() < 1e-12);
    }

    #[test]
    fn uninformative_observations_leave_forecast() {
        let ens = random_ensemble(1, 4, 5);
        let h = LinearObservation::strided(4, 2, 0).unwrap();
        let r = ObsError::scaled_identity(2, 1e15).unwrap();
        let y = DVector::from_vec(vec![3.0, -3.0]);
        let p = AnalysisProblem::new(&h, &r, &y);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for kind in [
            FilterKind::KalmanOracle,
            FilterKind::EnkfPerturbed,
            FilterKind::EsrfSequential,
            FilterKind::Denkf,
            FilterKind::Cenkf1,
            FilterKind::Cenkf2,
        ] {
            let rep = AnalysisConfig::new(kind).analyze(&ens, &p, &mut rng).unwrap();
            let rel = (rep.analysis.states() - ens.states()).norm() / ens.states().norm();
            assert!(rel < 1e-6, "{kind}: {rel}");
        }
    }

    #[test]
    fn perfect_observations_pin_mean() {
        let ens = random_ensemble(2, 3, 6);
        let h = LinearObservation::dense(DMatrix::identity(3, 3)).unwrap();
        let r = ObsError::scaled_identity(3, 1e-12).unwrap();
        let y = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let rep = kalman_oracle(&ens, &AnalysisProblem::new(&h, &r, &y)).unwrap();
        assert!((rep.mean - &y).amax() < 1e-5);
    }

    #[test]
    fn zero_spread_is_fixed_point() {
        let ens = Ensemble::new(DMatrix::from_element(3, 4, 1.25)).unwrap();
        let h = LinearObservation::strided(3, 1, 0).unwrap();
        let r = ObsError::identity(3);
        let y = DVector::from_vec(vec![0.0, 5.0, -2.0]);
        let p = AnalysisProblem::new(&h, &r, &y);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(enkf_perturbed(&ens, &p, &mut rng, false).unwrap().analysis, ens);
        assert_eq!(denkf(&ens, &p).unwrap().analysis, ens);
        assert_eq!(esrf_sequential(&ens, &p).unwrap().analysis, ens);
    }

    #[test]
    fn consistent_observations_and_zero_spread_stay_put() {
        let ens = Ensemble::new(DMatrix::from_element(4, 3, -0.5)).unwrap();
        let h = LinearObservation::strided(4, 2, 1).unwrap();
        let r = ObsError::identity(2);
        let y = h.apply(&ens.mean()).unwrap();
        let p = AnalysisProblem::new(&h, &r, &y);
        assert_eq!(cenkf1(&ens, &p, 4).unwrap().analysis, ens);
        assert_eq!(cenkf2(&ens, &p, 4).unwrap().analysis, ens);
    }

    #[test]
    fn esrf_rejects_correlated_errors() {
        let ens = small_ensemble();
        let h = LinearObservation::selection(vec![0, 1], 2).unwrap();
        let r = ObsError::full(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0])).unwrap();
        let y = DVector::zeros(2);
        assert!(matches!(esrf_sequential(&ens, &AnalysisProblem::new(&h, &r, &y)), Err(Error::Validation(_))));
    }

    #[test]
    fn esrf_single_observation_matches_oracle() {
        let ens = random_ensemble(3, 3, 4);
        let h = LinearObservation::selection(vec![1], 3).unwrap();
        let r = ObsError::diagonal(DVector::from_vec(vec![0.7])).unwrap();
        let y = DVector::from_vec(vec![0.4]);
        let p = AnalysisProblem::new(&h, &r, &y);
        let esrf = esrf_sequential(&ens, &p).unwrap();
        let oracle = kalman_oracle(&ens, &p).unwrap();
        let pa = covariance(&stats(&esrf.analysis));
        let po = oracle.covariance.unwrap();
        assert!((&pa - &po).norm() <= 1e-10 * po.norm());
        assert!((&esrf.mean - &oracle.mean).amax() < 1e-12);
    }

    #[test]
    fn esrf_two_observations_match_oracle() {
        let ens = Ensemble::new(DMatrix::from_row_slice(2, 3, &[0.3, -1.1, 0.9, 1.4, 0.2, -0.5])).unwrap();
        let h = LinearObservation::selection(vec![0, 1], 2).unwrap();
        let r = ObsError::diagonal(DVector::from_vec(vec![0.5, 2.0])).unwrap();
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let p = AnalysisProblem::new(&h, &r, &y);
        let pa = covariance(&stats(&esrf_sequential(&ens, &p).unwrap().analysis));
        let po = kalman_oracle(&ens, &p).unwrap().covariance.unwrap();
        assert!((&pa - &po).norm() <= 1e-10 * po.norm());
    }

    #[test]
    fn denkf_second_order_agreement_for_weak_update() {
        let ens = random_ensemble(4, 3, 6);
        let h = LinearObservation::strided(3, 1, 0).unwrap();
        let r = ObsError::scaled_identity(3, 50.0).unwrap();
        let y = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let p = AnalysisProblem::new(&h, &r, &y);
        let pf = covariance(&stats(&ens));
        let space = ObsSpace::new(ens.states(), &h).unwrap();
        let (gain, _) = localized_gain(&space, &p).unwrap();
        let kh = (&gain * h.to_dense()).norm();
        assert!(kh <= 0.1, "test premise: ‖KH‖ = {kh}");
        let pa_denkf = covariance(&stats(&denkf(&ens, &p).unwrap().analysis));
        let pa_oracle = kalman_oracle(&ens, &p).unwrap().covariance.unwrap();
        assert!((pa_denkf - pa_oracle).norm() <= 2.0 * kh * kh * pf.norm());
    }

    #[test]
    fn potential_examples() {
        let h = LinearObservation::dense(DMatrix::identity(2, 2)).unwrap();
        let r = ObsError::identity(2);
        let y = DVector::zeros(2);
        let single = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        assert!((potential(&single, &h, &r, &y).unwrap() - 12.5).abs() < 1e-14);

        let consistent = DMatrix::from_element(2, 3, 0.0);
        assert_eq!(potential(&consistent, &h, &r, &y).unwrap(), 0.0);

        let x = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.0]);
        let v1 = potential(&x, &h, &r, &y).unwrap();
        let r4 = ObsError::scaled_identity(2, 4.0).unwrap();
        let v4 = potential(&x, &h, &r4, &y).unwrap();
        assert!((v1 / 4.0 - v4).abs() < 1e-14);
    }

    #[test]
    fn cenkf_trace_length_and_monitor() {
        let ens = random_ensemble(5, 6, 5);
        let h = LinearObservation::strided(6, 2, 0).unwrap();
        let r = ObsError::identity(3);
        let y = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let p = AnalysisProblem::new(&h, &r, &y);
        let rep = cenkf1(&ens, &p, 4).unwrap();
        assert_eq!(rep.potential_trace.len(), 5);
        assert!(rep.warnings.is_empty());
        let rep2 = cenkf2(&ens, &p, 8).unwrap();
        assert_eq!(rep2.potential_trace.len(), 9);
        assert!(cenkf1(&ens, &p, 0).is_err());
    }

    #[test]
    fn monitor_flags_two_consecutive_increases_only() {
        assert!(monitor_potential(&[3.0, 2.0, 2.5, 2.0, 1.0]).is_empty());
        assert_eq!(monitor_potential(&[3.0, 3.5, 4.0, 1.0]).len(), 1);
        assert_eq!(count_increases(&[3.0, 3.5, 4.0, 1.0], 0.0), 2);
    }

    #[test]
    fn cenkf_diverges_with_named_step() {
        // Tiny R with one Euler step is violently unstable.
        let ens = random_ensemble(6, 2, 4);
        let h = LinearObservation::strided(2, 1, 0).unwrap();
        let r = ObsError::scaled_identity(2, 1e-300).unwrap();
        let y = DVector::from_vec(vec![1e10, -1e10]);
        let p = AnalysisProblem::new(&h, &r, &y);
        assert!(matches!(cenkf1(&ens, &p, 3), Err(Error::Divergence { step: 1 })));
    }

    #[test]
    fn nonlinear_variant_with_linear_operator_matches_cenkf1() {
        let ens = random_ensemble(7, 5, 4);
        let h = LinearObservation::strided(5, 2, 0).unwrap();
        let r = ObsError::diagonal(DVector::from_vec(vec![0.5, 1.0, 2.0])).unwrap();
        let y = DVector::from_vec(vec![0.3, -0.2, 1.0]);
        let a = cenkf1(&ens, &AnalysisProblem::new(&h, &r, &y), 4).unwrap();
        let b = cenkf1_nonlinear(&ens, &h, &r, &y, None, 4).unwrap();
        assert!((a.analysis.states() - b.analysis.states()).amax() < 1e-12);
        for (u, v) in a.potential_trace.iter().zip(&b.potential_trace) {
            assert!((u - v).abs() < 1e-12 * u.abs().max(1.0));
        }
    }

    struct Squares;

    impl ObservationOperator for Squares {
        fn k(&self) -> usize {
            2
        }
        fn observe(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![x[0] * x[0], x[1] + 0.5 * x[2] * x[2]])
        }
        fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 3, &[2.0 * x[0], 0.0, 0.0, 0.0, 1.0, x[2]])
        }
    }

    #[test]
    fn nonlinear_flow_decreases_potential() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ens = Ensemble::new(DMatrix::from_fn(3, 6, |_, _| 1.0 + 0.3 * rng.gen_range(-1.0..1.0))).unwrap();
        let r = ObsError::identity(2);
        let y = DVector::from_vec(vec![1.5, 1.2]);
        let rep = cenkf1_nonlinear(&ens, &Squares, &r, &y, None, 64).unwrap();
        assert_eq!(rep.potential_increases(), 0);
        assert!(rep.potential_trace.last().unwrap() < &rep.potential_trace[0]);
        let big = random_ensemble(9, NONLINEAR_MAX_DIM + 1, 2);
        assert!(cenkf1_nonlinear(&big, &Squares, &r, &y, None, 1).is_err());
    }

    #[test]
    fn filter_kind_parsing() {
        for kind in FilterKind::PRODUCTION {
            assert_eq!(kind.name().parse::<FilterKind>().unwrap(), kind);
        }
        assert!("kalman".parse::<FilterKind>().is_err());
    }

    #[test]
    fn mollifier_is_unit_hat() {
        assert_eq!(mollifier(0.0, 0.5), 2.0);
        assert_eq!(mollifier(0.5, 0.5), 0.0);
        assert_eq!(mollifier(-0.25, 0.5), 1.0);
        let eps = 0.04;
        let dt = eps / 8.0;
        let total: f64 = (-20..=20).map(|i| dt * mollifier(i as f64 * dt, eps)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mollified_validation() {
        let model = crate::models::Lorenz96::new(4, 8.0).unwrap();
        let ens = random_ensemble(10, 4, 3);
        let h = LinearObservation::strided(4, 1, 0).unwrap();
        let r = ObsError::identity(4);
        let cfg = IntegratorConfig::default();
        let y = DVector::zeros(4);
        let close = [
            TimedObservation { time: 0.05, y: y.clone() },
            TimedObservation { time: 0.06, y },
        ];
        let run = |eps: f64, sched: &[TimedObservation]| {
            mollified_assimilate(&model, &cfg, &ens, sched, &h, &r, None, eps, 0.1)
        };
        assert!(run(0.02, &close).is_err());
        assert!(run(0.009, &[]).is_err());
        assert!(run(0.0, &[]).is_err());
        assert_eq!(run(0.01, &[]).unwrap().len(), 21);
    }
}
