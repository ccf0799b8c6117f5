//! Forecast dynamics: the Lorenz-96 model and model-generic time integrators.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// An autonomous ODE `ẋ = f(x)`.
pub trait Model: Sync {
    fn dimension(&self) -> usize;

    /// Writes `f(x)` into `out`.
    fn rhs_into(&self, x: &DVector<f64>, out: &mut DVector<f64>);

    fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        self.rhs_into(x, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lorenz96 {
    pub n: usize,
    pub forcing: f64,
}

impl Default for Lorenz96 {
    fn default() -> Self {
        Self { n: 40, forcing: 8.0 }
    }
}

impl Lorenz96 {
    pub fn new(n: usize, forcing: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::Validation(format!("Lorenz-96 needs n >= 4, got {n}")));
        }
        if !forcing.is_finite() {
            return Err(Error::Validation("forcing must be finite".into()));
        }
        Ok(Self { n, forcing })
    }
}

impl Model for Lorenz96 {
    fn dimension(&self) -> usize {
        self.n
    }

    fn rhs_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        let x = x.as_slice();
        let out = out.as_mut_slice();
        let f = self.forcing;
        out[0] = (x[1] - x[n - 2]) * x[n - 1] - x[0] + f;
        out[1] = (x[2] - x[n - 1]) * x[0] - x[1] + f;
        for j in 2..n - 1 {
            out[j] = (x[j + 1] - x[j - 2]) * x[j - 1] - x[j] + f;
        }
        out[n - 1] = (x[0] - x[n - 3]) * x[n - 2] - x[n - 1] + f;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scheme {
    /// Implicit midpoint rule solved by fixed-point iteration.
    ImplicitMidpoint { tol: f64, max_iters: usize },
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::ImplicitMidpoint {
                tol: 1e-12,
                max_iters: 50,
            },
            dt: 0.005,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(dt: f64) -> Self {
        Self { scheme: Scheme::Rk4, dt }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt == 0.0 {
            return Err(Error::Validation(format!("time step must be finite and non-zero, got {}", self.dt)));
        }
        if let Scheme::ImplicitMidpoint { tol, max_iters } = self.scheme {
            if !(tol > 0.0) || max_iters == 0 {
                return Err(Error::Validation("implicit midpoint needs tol > 0 and max_iters >= 1".into()));
            }
        }
        Ok(())
    }

    /// Number of steps covering `duration`; errors unless it is an integer multiple of `dt`.
    pub fn steps_for(&self, duration: f64) -> Result<usize> {
        if !(duration >= 0.0) {
            return Err(Error::Validation(format!("duration must be >= 0, got {duration}")));
        }
        let ratio = duration / self.dt.abs();
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Validation(format!(
                "duration {duration} is not a multiple of dt = {}",
                self.dt
            )));
        }
        Ok(steps as usize)
    }
}

/// Reusable buffers for stepping one trajectory.
#[derive(Debug, Clone)]
pub struct Workspace {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        let z = DVector::zeros(n);
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }
}

/// Advances `x` in place by one step.
pub fn step_in_place<M: Model + ?Sized>(
    model: &M,
    cfg: &IntegratorConfig,
    x: &mut DVector<f64>,
    ws: &mut Workspace,
) -> Result<()> {
    let dt = cfg.dt;
    match cfg.scheme {
        Scheme::Rk4 => {
            let Workspace { k1, k2, k3, k4, tmp } = ws;
            model.rhs_into(x, k1);
            tmp.copy_from(x);
            tmp.axpy(0.5 * dt, k1, 1.0);
            model.rhs_into(tmp, k2);
            tmp.copy_from(x);
            tmp.axpy(0.5 * dt, k2, 1.0);
            model.rhs_into(tmp, k3);
            tmp.copy_from(x);
            tmp.axpy(dt, k3, 1.0);
            model.rhs_into(tmp, k4);
            x.axpy(dt / 6.0, k1, 1.0);
            x.axpy(dt / 3.0, k2, 1.0);
            x.axpy(dt / 3.0, k3, 1.0);
            x.axpy(dt / 6.0, k4, 1.0);
            Ok(())
        }
        Scheme::ImplicitMidpoint { tol, max_iters } => {
            // x⁺ = x + dt f((x + x⁺)/2), fixed-point iteration from the Euler predictor.
            let Workspace { k1: f, k2: next, k3: mid, .. } = ws;
            model.rhs_into(x, f);
            next.copy_from(x);
            next.axpy(dt, f, 1.0);
            let mut residual = f64::INFINITY;
            for _ in 0..max_iters {
                for ((m, a), b) in mid.as_mut_slice().iter_mut().zip(x.as_slice()).zip(next.as_slice()) {
                    *m = 0.5 * (a + b);
                }
                model.rhs_into(mid, f);
                residual = 0.0;
                for ((nx, a), fj) in next.as_mut_slice().iter_mut().zip(x.as_slice()).zip(f.as_slice()) {
                    let v = a + dt * fj;
                    residual = f64::max(residual, (v - *nx).abs());
                    *nx = v;
                }
                if !residual.is_finite() {
                    break;
                }
                if residual < tol {
                    x.copy_from(next);
                    return Ok(());
                }
            }
            Err(Error::Integration {
                iterations: max_iters,
                residual,
                iterate: next.as_slice().to_vec(),
            })
        }
    }
}

pub fn step<M: Model + ?Sized>(model: &M, cfg: &IntegratorConfig, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != model.dimension() {
        return Err(dim_err("models::step", model.dimension(), x.len()));
    }
    let mut out = x.clone();
    step_in_place(model, cfg, &mut out, &mut Workspace::new(x.len()))?;
    Ok(out)
}

/// Advances `x` in place over `duration` (an integer multiple of `dt`).
pub fn propagate_in_place<M: Model + ?Sized>(
    model: &M,
    cfg: &IntegratorConfig,
    x: &mut DVector<f64>,
    duration: f64,
    ws: &mut Workspace,
) -> Result<()> {
    for _ in 0..cfg.steps_for(duration)? {
        step_in_place(model, cfg, x, ws)?;
    }
    Ok(())
}

pub fn propagate<M: Model + ?Sized>(
    model: &M,
    cfg: &IntegratorConfig,
    x: &DVector<f64>,
    duration: f64,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    if x.len() != model.dimension() {
        return Err(dim_err("models::propagate", model.dimension(), x.len()));
    }
    let mut out = x.clone();
    propagate_in_place(model, cfg, &mut out, duration, &mut Workspace::new(x.len()))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn l96() -> Lorenz96 {
        Lorenz96::default()
    }

    fn random_state(seed: u64, n: usize) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.gen_range(-5.0..10.0))
    }

    #[test]
    fn rhs_forcing_and_homogeneous() {
        let m = l96();
        assert!(m.rhs(&DVector::zeros(40)).iter().all(|&v| v == 8.0));
        assert!(m.rhs(&DVector::from_element(40, 2.5)).iter().all(|&v| v == 5.5));
    }

    #[test]
    fn rhs_stencil_by_hand() {
        let m = Lorenz96::new(5, 8.0).unwrap();
        let f = m.rhs(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]));
        assert_eq!(f[0], -3.0);
        // component 2: (x3 - x0) x1 - x2 + 8
        assert_eq!(f[2], (4.0 - 1.0) * 2.0 - 3.0 + 8.0);
    }

    #[test]
    fn rhs_rotation_equivariance() {
        let m = l96();
        let x = random_state(1, 40);
        let rotated = DVector::from_fn(40, |j, _| x[(j + 39) % 40]);
        let f = m.rhs(&x);
        let fr = m.rhs(&rotated);
        for j in 0..40 {
            assert_eq!(fr[j], f[(j + 39) % 40]);
        }
    }

    #[test]
    fn small_n_rejected() {
        assert!(Lorenz96::new(3, 8.0).is_err());
    }

    #[test]
    fn tiny_step_is_identity() {
        let x = random_state(2, 40);
        let cfg = IntegratorConfig { dt: 1e-12, ..Default::default() };
        assert!((step(&l96(), &cfg, &x).unwrap() - &x).amax() < 1e-10);
    }

    #[test]
    fn one_step_from_rest() {
        let x = step(&l96(), &IntegratorConfig::default(), &DVector::zeros(40)).unwrap();
        assert!(x.iter().all(|&v| (v - 0.04).abs() < 1e-3));
    }

    #[test]
    fn midpoint_converges_to_rk4_at_second_order() {
        let x = random_state(3, 40);
        let reference = propagate(&l96(), &IntegratorConfig::rk4(0.000625), &x, 0.05).unwrap();
        let err = |dt: f64| {
            let cfg = IntegratorConfig { dt, ..IntegratorConfig::default() };
            (propagate(&l96(), &cfg, &x, 0.05).unwrap() - &reference).amax()
        };
        let (coarse, fine) = (err(0.005), err(0.0025));
        assert!(coarse < 5e-3, "{coarse}");
        let ratio = fine / coarse;
        assert!((0.2..0.3).contains(&ratio), "{ratio}");
    }

    #[test]
    fn midpoint_is_time_symmetric() {
        let x = random_state(4, 40);
        let fwd = IntegratorConfig::default();
        let bwd = IntegratorConfig { dt: -fwd.dt, ..fwd };
        let there = step(&l96(), &fwd, &x).unwrap();
        let back = step(&l96(), &bwd, &there).unwrap();
        assert!((back - x).amax() < 10.0 * 1e-12);
    }

    #[test]
    fn propagate_composition() {
        let m = l96();
        let cfg = IntegratorConfig::default();
        let x = random_state(5, 40);
        assert_eq!(propagate(&m, &cfg, &x, 0.0).unwrap(), x);
        let two = propagate(&m, &cfg, &x, 2.0 * cfg.dt).unwrap();
        assert_eq!(two, step(&m, &cfg, &step(&m, &cfg, &x).unwrap()).unwrap());
        let mut looped = x.clone();
        for _ in 0..10 {
            looped = step(&m, &cfg, &looped).unwrap();
        }
        assert_eq!(propagate(&m, &cfg, &x, 0.05).unwrap(), looped);
    }

    #[test]
    fn propagate_rejects_non_multiple() {
        let cfg = IntegratorConfig::default();
        assert!(matches!(
            propagate(&l96(), &cfg, &DVector::zeros(40), 0.0123),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn non_convergence_reports_iterate() {
        let cfg = IntegratorConfig {
            scheme: Scheme::ImplicitMidpoint { tol: 1e-12, max_iters: 2 },
            dt: 0.005,
        };
        let err = step(&l96(), &cfg, &random_state(6, 40)).unwrap_err();
        match err {
            Error::Integration { iterate, iterations, .. } => {
                assert_eq!(iterations, 2);
                assert_eq!(iterate.len(), 40);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn chaotic_orbit_stays_bounded() {
        let m = l96();
        let cfg = IntegratorConfig::default();
        let mut x = DVector::from_element(40, 8.0);
        x[0] += 0.01;
        let mut ws = Workspace::new(40);
        for _ in 0..2000 {
            step_in_place(&m, &cfg, &mut x, &mut ws).unwrap();
        }
        for _ in 0..10_000 {
            step_in_place(&m, &cfg, &mut x, &mut ws).unwrap();
            assert!(x.amax() < 25.0);
        }
    }
}
