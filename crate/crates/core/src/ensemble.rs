//! Ensemble container and the ensemble algebra shared by every filter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::observation::LinearObservation;

/// An `n × m` ensemble; column `i` is member `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    states: DMatrix<f64>,
}

/// Mean and deviation matrix `X' = X - x̄ eᵀ` of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub mean: DVector<f64>,
    pub deviations: DMatrix<f64>,
}

impl Ensemble {
    /// Wraps a state matrix. Requires at least two members and finite entries.
    pub fn new(states: DMatrix<f64>) -> Result<Self> {
        if states.ncols() < 2 {
            return Err(Error::Validation(format!(
                "ensemble needs at least 2 members, got {}",
                states.ncols()
            )));
        }
        if states.nrows() == 0 {
            return Err(Error::Validation("ensemble state dimension is zero".into()));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("ensemble contains non-finite entries".into()));
        }
        Ok(Self { states })
    }

    pub fn from_members(members: &[DVector<f64>]) -> Result<Self> {
        let n = members.first().map_or(0, |x| x.len());
        if let Some(bad) = members.iter().find(|x| x.len() != n) {
            return Err(crate::error::dim_err("Ensemble::from_members", n, bad.len()));
        }
        Self::new(DMatrix::from_columns(members))
    }

    /// Rebuilds `x̄ eᵀ + X'`.
    pub fn from_stats(stats: &EnsembleStats) -> Result<Self> {
        Self::new(stats.reconstruct())
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn into_states(self) -> DMatrix<f64> {
        self.states
    }

    pub fn member(&self, i: usize) -> DVector<f64> {
        self.states.column(i).into_owned()
    }

    pub fn n(&self) -> usize {
        self.states.nrows()
    }

    pub fn m(&self) -> usize {
        self.states.ncols()
    }

    pub fn mean(&self) -> DVector<f64> {
        column_mean(&self.states)
    }

    pub fn max_abs(&self) -> f64 {
        self.states.amax()
    }
}

impl EnsembleStats {
    pub fn m(&self) -> usize {
        self.deviations.ncols()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut x = self.deviations.clone();
        for mut col in x.column_iter_mut() {
            col += &self.mean;
        }
        x
    }
}

pub(crate) fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    x.column_mean()
}

pub(crate) fn subtract_mean(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut d = x.clone();
    for mut col in d.column_iter_mut() {
        col -= mean;
    }
    d
}

pub fn stats(ens: &Ensemble) -> EnsembleStats {
    let mean = ens.mean();
    let deviations = subtract_mean(&ens.states, &mean);
    EnsembleStats { mean, deviations }
}

/// Sample covariance `X'(X')ᵀ/(m-1)`. Materializes the dense `n × n` matrix,
/// so it is meant for small problems and verification only.
pub fn covariance(stats: &EnsembleStats) -> DMatrix<f64> {
    let d = &stats.deviations;
    (d * d.transpose()) / (stats.m() as f64 - 1.0)
}

/// `(HP, HPHᵀ)` formed from the `k × m` product `HX'`; `P` is never built.
pub fn cross_products(
    stats: &EnsembleStats,
    obs: &LinearObservation,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let hx = obs.apply_matrix(&stats.deviations)?;
    let scale = 1.0 / (stats.m() as f64 - 1.0);
    let hp = (&hx * stats.deviations.transpose()) * scale;
    let hpht = (&hx * hx.transpose()) * scale;
    Ok((hp, hpht))
}

/// Multiplicative inflation `x̄ eᵀ + δ X'`.
pub fn inflate(ens: &Ensemble, delta: f64) -> Result<Ensemble> {
    if !(delta >= 1.0) || !delta.is_finite() {
        return Err(Error::Validation(format!(
            "inflation factor must be finite and >= 1, got {delta}"
        )));
    }
    if delta == 1.0 {
        return Ok(ens.clone());
    }
    let s = stats(ens);
    let inflated = EnsembleStats {
        mean: s.mean,
        deviations: s.deviations * delta,
    };
    Ensemble::from_stats(&inflated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ens(rows: usize, cols: usize, data: &[f64]) -> Ensemble {
        Ensemble::new(DMatrix::from_row_slice(rows, cols, data)).unwrap()
    }

    #[test]
    fn stats_two_members() {
        let s = stats(&ens(2, 2, &[1.0, 3.0, 2.0, 2.0]));
        assert_eq!(s.mean, DVector::from_vec(vec![2.0, 2.0]));
        assert_eq!(s.deviations, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn stats_zero_spread() {
        let s = stats(&ens(3, 4, &[1.5; 12]));
        assert_eq!(s.mean, DVector::from_element(3, 1.5));
        assert!(s.deviations.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stats_scalar_three_members() {
        let s = stats(&ens(1, 3, &[0.0, 1.0, 2.0]));
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.deviations, DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 1.0]));
        assert_eq!(covariance(&s)[(0, 0)], 1.0);
    }

    #[test]
    fn covariance_cases() {
        let s = EnsembleStats {
            mean: DVector::zeros(2),
            deviations: DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, 1.0]),
        };
        assert_eq!(covariance(&s), DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 2.0]));
        let z = EnsembleStats {
            mean: DVector::zeros(2),
            deviations: DMatrix::zeros(2, 3),
        };
        assert_eq!(covariance(&z), DMatrix::zeros(2, 2));
    }

    #[test]
    fn cross_products_row_selection() {
        let s = EnsembleStats {
            mean: DVector::zeros(2),
            deviations: DMatrix::from_row_slice(2, 3, &[-1.0, 0.0, 1.0, 1.0, 0.0, -1.0]),
        };
        let h = LinearObservation::selection(vec![0], 2).unwrap();
        let (hp, hpht) = cross_products(&s, &h).unwrap();
        assert_eq!(hp, DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
        assert_eq!(hpht, DMatrix::from_row_slice(1, 1, &[1.0]));
    }

    #[test]
    fn cross_products_identity_is_covariance() {
        let e = ens(3, 4, &[0.3, -1.2, 2.0, 0.7, 1.1, 0.4, -0.5, 2.2, 0.0, 0.9, 1.7, -0.8]);
        let s = stats(&e);
        let h = LinearObservation::dense(DMatrix::identity(3, 3)).unwrap();
        let (hp, hpht) = cross_products(&s, &h).unwrap();
        let p = covariance(&s);
        assert!((&hp - &p).norm() <= 1e-12 * p.norm());
        assert!((&hpht - &p).norm() <= 1e-12 * p.norm());
    }

    #[test]
    fn cross_products_dimension_mismatch() {
        let s = stats(&ens(2, 2, &[1.0, 3.0, 2.0, 2.0]));
        let h = LinearObservation::selection(vec![0], 3).unwrap();
        assert!(matches!(cross_products(&s, &h), Err(Error::Dimension { .. })));
    }

    #[test]
    fn inflate_scales_deviations() {
        let e = ens(1, 3, &[0.0, 1.0, 2.0]);
        assert_eq!(inflate(&e, 1.0).unwrap(), e);
        let inflated = inflate(&e, 2.0).unwrap();
        assert_eq!(inflated.states(), &DMatrix::from_row_slice(1, 3, &[-1.0, 1.0, 3.0]));
        let e = ens(2, 3, &[0.2, 1.4, -0.9, 3.0, 2.5, 2.8]);
        let p0 = covariance(&stats(&e));
        let p1 = covariance(&stats(&inflate(&e, 1.05).unwrap()));
        for (a, b) in p1.iter().zip(p0.iter()) {
            assert_abs_diff_eq!(*a, 1.1025 * b, epsilon = 1e-12);
        }
    }

    #[test]
    fn inflate_rejects_deflation() {
        let e = ens(1, 3, &[0.0, 1.0, 2.0]);
        assert!(matches!(inflate(&e, 0.9), Err(Error::Validation(_))));
        assert!(inflate(&e, f64::NAN).is_err());
    }

    #[test]
    fn construction_errors() {
        assert!(Ensemble::new(DMatrix::zeros(3, 1)).is_err());
        assert!(Ensemble::new(DMatrix::from_element(2, 2, f64::INFINITY)).is_err());
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0]);
        assert!(Ensemble::from_members(&[a, b]).is_err());
    }
}
