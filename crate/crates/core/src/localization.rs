//! Distance-based tapers for Schur-product covariance localization.
//!
//! `TaperMatrices::c1` is `n × k` and tapers the state/observation products
//! `P Hᵀ`; `c2` is `k × k` and tapers `H P Hᵀ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Periodic 1-D grid of the given period.
    Ring { period: usize },
    /// Row-major 2-D grid; flat index `i * cols + j`.
    EuclideanGrid { rows: usize, cols: usize },
}

impl DistanceMetric {
    pub fn size(&self) -> usize {
        match *self {
            Self::Ring { period } => period,
            Self::EuclideanGrid { rows, cols } => rows * cols,
        }
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        match *self {
            Self::Ring { period } => {
                let d = a.abs_diff(b) % period;
                d.min(period - d) as f64
            }
            Self::EuclideanGrid { cols, .. } => {
                let (ia, ja) = ((a / cols) as f64, (a % cols) as f64);
                let (ib, jb) = ((b / cols) as f64, (b % cols) as f64);
                (ia - ib).hypot(ja - jb)
            }
        }
    }
}

/// How a user-facing Gaspari–Cohn radius maps onto the half-support `c`
/// (the taper vanishes at distance `2c`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusConvention {
    /// `c = r0`, support ends at `2 r0`.
    #[default]
    HalfSupport,
    /// `c = r0 / 2`, support ends at `r0`.
    FullSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum TaperFunction {
    /// Fifth-order piecewise rational Gaspari–Cohn function with half-support `c`.
    GaspariCohn { c: f64 },
    /// `exp(-r² / (2 r0²))`.
    Gaussian { r0: f64 },
    None,
}

impl TaperFunction {
    pub fn gaspari_cohn(r0: f64, convention: RadiusConvention) -> Result<Self> {
        check_radius(r0)?;
        let c = match convention {
            RadiusConvention::HalfSupport => r0,
            RadiusConvention::FullSupport => 0.5 * r0,
        };
        Ok(Self::GaspariCohn { c })
    }

    pub fn gaussian(r0: f64) -> Result<Self> {
        check_radius(r0)?;
        Ok(Self::Gaussian { r0 })
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Self::None)
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Validation(format!("taper distance must be >= 0, got {r}")));
        }
        Ok(match *self {
            Self::GaspariCohn { c } => gaspari_cohn(r / c),
            Self::Gaussian { r0 } => (-0.5 * r * r / (r0 * r0)).exp(),
            Self::None => 1.0,
        })
    }
}

fn check_radius(r0: f64) -> Result<()> {
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::Validation(format!("localization radius must be positive, got {r0}")));
    }
    Ok(())
}

fn gaspari_cohn(z: f64) -> f64 {
    if z <= 1.0 {
        (((-0.25 * z + 0.5) * z + 0.625) * z - 5.0 / 3.0) * z * z + 1.0
    } else if z < 2.0 {
        let v = ((((z / 12.0 - 0.5) * z + 0.625) * z + 5.0 / 3.0) * z - 5.0) * z + 4.0 - 2.0 / (3.0 * z);
        // Cancellation near z = 2 can leave a tiny negative residue.
        v.max(0.0)
    } else {
        0.0
    }
}

pub fn taper_value(f: &TaperFunction, r: f64) -> Result<f64> {
    f.value(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaperMatrices {
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
}

impl TaperMatrices {
    pub fn n(&self) -> usize {
        self.c1.nrows()
    }

    pub fn k(&self) -> usize {
        self.c2.nrows()
    }
}

pub fn build_tapers(
    metric: &DistanceMetric,
    f: &TaperFunction,
    obs_locations: &[usize],
    n: usize,
) -> Result<TaperMatrices> {
    if metric.size() != n {
        return Err(dim_err("build_tapers: metric size vs state dimension", n, metric.size()));
    }
    if let Some(&bad) = obs_locations.iter().find(|&&o| o >= n) {
        return Err(Error::Validation(format!(
            "observation location {bad} out of range for state dimension {n}"
        )));
    }
    let k = obs_locations.len();
    let mut c1 = DMatrix::zeros(n, k);
    for (o, &loc) in obs_locations.iter().enumerate() {
        for g in 0..n {
            c1[(g, o)] = f.value(metric.distance(g, loc))?;
        }
    }
    let mut c2 = DMatrix::zeros(k, k);
    for a in 0..k {
        c2[(a, a)] = f.value(0.0)?;
        for b in 0..a {
            let v = f.value(metric.distance(obs_locations[a], obs_locations[b]))?;
            c2[(a, b)] = v;
            c2[(b, a)] = v;
        }
    }
    Ok(TaperMatrices { c1, c2 })
}

/// Entrywise product `C ∘ Y`.
pub fn schur(c: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c.shape() != y.shape() {
        return Err(dim_err(
            "schur",
            format!("{:?}", c.shape()),
            format!("{:?}", y.shape()),
        ));
    }
    Ok(c.component_mul(y))
}
