#![allow(dead_code)]

use enkf_core::localization::build_tapers;
use enkf_core::{DistanceMetric, Ensemble, LinearObservation, ObsError, RadiusConvention, TaperFunction, TaperMatrices};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A seeded linear-Gaussian analysis problem on a ring.
pub struct Problem {
    pub ens: Ensemble,
    pub obs: LinearObservation,
    pub err: ObsError,
    pub y: DVector<f64>,
}

pub fn problem(seed: u64, n: usize, m: usize, stride: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ens = Ensemble::new(DMatrix::from_fn(n, m, |_, _| rng.gen_range(-2.0..2.0))).unwrap();
    let obs = LinearObservation::strided(n, stride, 0).unwrap();
    let err = ObsError::diagonal(DVector::from_fn(obs.k(), |_, _| rng.gen_range(0.5..2.0))).unwrap();
    let y = DVector::from_fn(obs.k(), |_, _| rng.gen_range(-2.0..2.0));
    Problem { ens, obs, err, y }
}

pub fn ring_tapers(n: usize, obs: &LinearObservation, radius: f64) -> TaperMatrices {
    let f = TaperFunction::gaspari_cohn(radius, RadiusConvention::HalfSupport).unwrap();
    build_tapers(&DistanceMetric::Ring { period: n }, &f, obs.locations().unwrap(), n).unwrap()
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Component of `v` orthogonal to the column space of `basis`, relative to `‖v‖`.
///
/// Orthonormalizes the columns with two passes of modified Gram–Schmidt and
/// drops columns that are numerically dependent on earlier ones.
pub fn off_subspace(basis: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let scale = basis.amax().max(f64::MIN_POSITIVE);
    let mut q: Vec<DVector<f64>> = Vec::new();
    for col in basis.column_iter() {
        let mut w = col.into_owned();
        for _ in 0..2 {
            for u in &q {
                let c = u.dot(&w);
                w.axpy(-c, u, 1.0);
            }
        }
        let norm = w.norm();
        if norm > 1e-10 * scale {
            q.push(w / norm);
        }
    }
    let mut residual = v.clone();
    for _ in 0..2 {
        for u in &q {
            let c = u.dot(&residual);
            residual.axpy(-c, u, 1.0);
        }
    }
    residual.norm() / v.norm().max(f64::MIN_POSITIVE)
}
