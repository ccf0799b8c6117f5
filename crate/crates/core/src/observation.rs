//! Observation operators, observation-error models and synthetic observations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, ensure_shape, Error, Result};

/// Linear observation operator `H` (`k × n`).
#[derive(Debug, Clone, PartialEq)]
pub enum LinearObservation {
    /// Picks the listed state components.
    Selection { indices: Vec<usize>, state_dim: usize },
    Dense(DMatrix<f64>),
}

impl LinearObservation {
    pub fn selection(indices: Vec<usize>, state_dim: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Validation("selection operator needs at least one index".into()));
        }
        let mut seen = vec![false; state_dim];
        for &i in &indices {
            if i >= state_dim {
                return Err(Error::Validation(format!(
                    "observation index {i} out of range for state dimension {state_dim}"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Validation(format!("duplicate observation index {i}")));
            }
        }
        Ok(Self::Selection { indices, state_dim })
    }

    /// Every `stride`-th grid point starting at `offset`.
    pub fn strided(state_dim: usize, stride: usize, offset: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Validation("stride must be positive".into()));
        }
        Self::selection((offset..state_dim).step_by(stride).collect(), state_dim)
    }

    pub fn dense(h: DMatrix<f64>) -> Result<Self> {
        if h.nrows() == 0 || h.ncols() == 0 {
            return Err(Error::Validation("empty observation matrix".into()));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("observation matrix has non-finite entries".into()));
        }
        #[cfg(debug_assertions)]
        if h.nrows() <= h.ncols() {
            let sv = h.singular_values();
            if sv.iter().any(|&s| s <= 1e-10) {
                return Err(Error::Validation("observation matrix is row-rank deficient".into()));
            }
        }
        Ok(Self::Dense(h))
    }

    pub fn k(&self) -> usize {
        match self {
            Self::Selection { indices, .. } => indices.len(),
            Self::Dense(h) => h.nrows(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Self::Selection { state_dim, .. } => *state_dim,
            Self::Dense(h) => h.ncols(),
        }
    }

    /// Grid locations of the observations, when they sit on grid points.
    pub fn locations(&self) -> Option<&[usize]> {
        match self {
            Self::Selection { indices, .. } => Some(indices),
            Self::Dense(_) => None,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Selection { indices, state_dim } => {
                let mut h = DMatrix::zeros(indices.len(), *state_dim);
                for (row, &col) in indices.iter().enumerate() {
                    h[(row, col)] = 1.0;
                }
                h
            }
            Self::Dense(h) => h.clone(),
        }
    }

    /// Row `o` of `H` as an `n`-vector.
    pub fn row(&self, o: usize) -> DVector<f64> {
        match self {
            Self::Selection { indices, state_dim } => {
                let mut r = DVector::zeros(*state_dim);
                r[indices[o]] = 1.0;
                r
            }
            Self::Dense(h) => h.row(o).transpose(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.state_dim() {
            return Err(dim_err("LinearObservation::apply", self.state_dim(), x.len()));
        }
        Ok(match self {
            Self::Selection { indices, .. } => DVector::from_iterator(indices.len(), indices.iter().map(|&i| x[i])),
            Self::Dense(h) => h * x,
        })
    }

    /// Applies `H` to every column of `x` (`n × m` → `k × m`).
    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.state_dim() {
            return Err(dim_err("LinearObservation::apply_matrix", self.state_dim(), x.nrows()));
        }
        Ok(match self {
            Self::Selection { indices, .. } => x.select_rows(indices.iter()),
            Self::Dense(h) => h * x,
        })
    }

    /// `Hᵀ v` for a `k`-vector `v`.
    pub fn apply_transpose(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.k() {
            return Err(dim_err("LinearObservation::apply_transpose", self.k(), v.len()));
        }
        Ok(match self {
            Self::Selection { indices, state_dim } => {
                let mut out = DVector::zeros(*state_dim);
                for (o, &i) in indices.iter().enumerate() {
                    out[i] += v[o];
                }
                out
            }
            Self::Dense(h) => h.tr_mul(v),
        })
    }
}

pub fn apply_ensemble(obs: &LinearObservation, ens: &crate::Ensemble) -> Result<DMatrix<f64>> {
    obs.apply_matrix(ens.states())
}

/// Observation-error covariance `R`.
#[derive(Debug, Clone)]
pub enum ObsError {
    Diagonal(DVector<f64>),
    Full {
        r: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
    },
}

impl ObsError {
    pub fn diagonal(variances: DVector<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::Validation("empty variance vector".into()));
        }
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation("observation variances must be finite and positive".into()));
        }
        Ok(Self::Diagonal(variances))
    }

    pub fn identity(k: usize) -> Self {
        Self::Diagonal(DVector::from_element(k, 1.0))
    }

    pub fn scaled_identity(k: usize, variance: f64) -> Result<Self> {
        Self::diagonal(DVector::from_element(k, variance))
    }

    pub fn full(r: DMatrix<f64>) -> Result<Self> {
        if !r.is_square() || r.nrows() == 0 {
            return Err(Error::Validation("R must be a non-empty square matrix".into()));
        }
        if (&r - r.transpose()).amax() > 1e-12 * r.amax().max(1.0) {
            return Err(Error::NotPositiveDefinite("R is not symmetric"));
        }
        let chol = Cholesky::new(r.clone()).ok_or(Error::NotPositiveDefinite("R"))?;
        Ok(Self::Full { r, chol })
    }

    pub fn k(&self) -> usize {
        match self {
            Self::Diagonal(v) => v.len(),
            Self::Full { r, .. } => r.nrows(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Self::Diagonal(_))
    }

    pub fn variance(&self, o: usize) -> f64 {
        match self {
            Self::Diagonal(v) => v[o],
            Self::Full { r, .. } => r[(o, o)],
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Self::Diagonal(v) => DMatrix::from_diagonal(v),
            Self::Full { r, .. } => r.clone(),
        }
    }

    /// `R⁻¹ v`.
    pub fn precision_apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.k() {
            return Err(dim_err("ObsError::precision_apply", self.k(), v.len()));
        }
        Ok(match self {
            Self::Diagonal(var) => v.component_div(var),
            Self::Full { chol, .. } => chol.solve(v),
        })
    }

    /// `R⁻¹ M`, column by column.
    pub fn precision_apply_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.k() {
            return Err(dim_err("ObsError::precision_apply_matrix", self.k(), m.nrows()));
        }
        Ok(match self {
            Self::Diagonal(var) => {
                let mut out = m.clone();
                for mut col in out.column_iter_mut() {
                    col.component_div_assign(var);
                }
                out
            }
            Self::Full { chol, .. } => chol.solve(m),
        })
    }

    /// `R^{1/2} ξ` with the Cholesky (lower) factor for full `R`.
    pub fn sqrt_apply(&self, xi: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Diagonal(var) => xi.zip_map(var, |x, v| x * v.sqrt()),
            Self::Full { chol, .. } => chol.l() * xi,
        }
    }

    /// Draws `η ~ N(0, R)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_fn(self.k(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.sqrt_apply(&xi)
    }
}

/// One observation vector tagged with its assimilation cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    pub y: DVector<f64>,
    pub time_index: usize,
}

/// `y = H·truth + R^{1/2} ξ`, `ξ ~ N(0, I)`.
pub fn synthesize<R: Rng + ?Sized>(
    obs: &LinearObservation,
    err: &ObsError,
    truth: &DVector<f64>,
    time_index: usize,
    rng: &mut R,
) -> Result<ObservationBatch> {
    ensure_shape("synthesize: R vs H", (err.k(), 1), (obs.k(), 1))?;
    let y = obs.apply(truth)? + err.sample(rng);
    Ok(ObservationBatch { y, time_index })
}

/// A differentiable (possibly nonlinear) observation operator `h` with Jacobian.
pub trait ObservationOperator: Sync {
    fn k(&self) -> usize;
    fn observe(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

impl ObservationOperator for LinearObservation {
    fn k(&self) -> usize {
        LinearObservation::k(self)
    }

    fn observe(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply(x).expect("observation operator dimension")
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.to_dense()
    }
}
