//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The plain functions (`taper_samples`, `potential_decay`) hold the logic and
//! are usable natively; the `#[wasm_bindgen]` items only convert errors.

use enkf_core::ensemble::inflate;
use enkf_core::filters::{cenkf1, cenkf2};
use enkf_core::harness::{stream_rng, ExperimentConfig, Stream, TwinExperiment};
use enkf_core::models::propagate;
use enkf_core::observation::synthesize;
use enkf_core::{AnalysisProblem, Ensemble, Error, FilterKind, RadiusConvention, Result, TaperFunction};
use wasm_bindgen::prelude::*;

fn to_js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn convention(name: &str) -> Result<RadiusConvention> {
    match name {
        "half" => Ok(RadiusConvention::HalfSupport),
        "full" => Ok(RadiusConvention::FullSupport),
        other => Err(Error::Validation(format!("unknown radius convention '{other}'"))),
    }
}

/// Taper values at `samples` evenly spaced distances in `[0, max_r]`.
pub fn taper_samples(family: &str, r0: f64, conv: &str, max_r: f64, samples: usize) -> Result<Vec<f64>> {
    if samples < 2 || !(max_r > 0.0) {
        return Err(Error::Validation("need at least 2 samples over a positive range".into()));
    }
    let f = match family {
        "gc" => TaperFunction::gaspari_cohn(r0, convention(conv)?)?,
        "gaussian" => TaperFunction::gaussian(r0)?,
        "none" => TaperFunction::None,
        other => return Err(Error::Validation(format!("unknown taper '{other}'"))),
    };
    (0..samples)
        .map(|i| f.value(max_r * i as f64 / (samples - 1) as f64))
        .collect()
}

#[wasm_bindgen]
pub fn taper_curve(family: &str, r0: f64, conv: &str, max_r: f64, samples: usize) -> std::result::Result<Vec<f64>, JsError> {
    taper_samples(family, r0, conv, max_r, samples).map_err(to_js)
}

fn demo_config(filter: FilterKind, inflation: f64, radius: f64, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed,
        truth_spinup_steps: 2000,
        ..ExperimentConfig::default()
    };
    cfg.filter.kind = filter;
    cfg.filter.inflation = inflation;
    cfg.localization.radius = radius;
    cfg
}

/// Potential after each pseudo-time step of one Lorenz-96 analysis with `steps`
/// Euler steps. The forecast comes from a twin run cycled for `warmup` analyses.
pub fn potential_decay(filter: &str, steps: usize, inflation: f64, radius: f64, seed: u64, warmup: usize) -> Result<Vec<f64>> {
    let kind: FilterKind = filter.parse()?;
    if !kind.is_continuous() {
        return Err(Error::Validation(format!("{kind} has no pseudo-time potential")));
    }
    let cfg = demo_config(FilterKind::Cenkf1, inflation, radius, seed);
    let mut exp = TwinExperiment::new(cfg.clone())?;
    for _ in 0..warmup {
        exp.advance()?;
    }
    let members = exp
        .members()
        .column_iter()
        .map(|c| propagate(&cfg.model, &cfg.integrator, &c.into_owned(), cfg.obs_interval))
        .collect::<Result<Vec<_>>>()?;
    let forecast = inflate(&Ensemble::from_members(&members)?, inflation)?;
    let truth = propagate(&cfg.model, &cfg.integrator, exp.truth(), cfg.obs_interval)?;
    let obs = cfg.observation_operator()?;
    let err = cfg.obs_error()?;
    let tapers = cfg.tapers()?;
    let batch = synthesize(&obs, &err, &truth, warmup + 1, &mut stream_rng(seed, Stream::Observations))?;
    let problem = AnalysisProblem::new(&obs, &err, &batch.y).localized(tapers.as_ref());
    let report = match kind {
        FilterKind::Cenkf1 => cenkf1(&forecast, &problem, steps)?,
        _ => cenkf2(&forecast, &problem, steps)?,
    };
    Ok(report.potential_trace)
}

#[wasm_bindgen]
pub fn potential_trace(
    filter: &str,
    steps: usize,
    inflation: f64,
    radius: f64,
    seed: u64,
    warmup: usize,
) -> std::result::Result<Vec<f64>, JsError> {
    potential_decay(filter, steps, inflation, radius, seed, warmup).map_err(to_js)
}

/// A Lorenz-96 twin experiment advanced a few cycles at a time.
#[wasm_bindgen]
pub struct TwinRun {
    exp: TwinExperiment,
    forecast_rmse: Vec<f64>,
    analysis_rmse: Vec<f64>,
    failure: Option<String>,
}

impl TwinRun {
    pub fn create(filter: &str, inflation: f64, radius: f64, seed: u64) -> Result<Self> {
        let cfg = demo_config(filter.parse()?, inflation, radius, seed);
        Ok(Self {
            exp: TwinExperiment::new(cfg)?,
            forecast_rmse: Vec::new(),
            analysis_rmse: Vec::new(),
            failure: None,
        })
    }
}

#[wasm_bindgen]
impl TwinRun {
    #[wasm_bindgen(constructor)]
    pub fn new(filter: &str, inflation: f64, radius: f64, seed: u64) -> std::result::Result<TwinRun, JsError> {
        Self::create(filter, inflation, radius, seed).map_err(to_js)
    }

    /// Runs up to `cycles` analyses; returns how many completed. Stops at the
    /// first failure, which is then reported by `failure()`.
    pub fn advance(&mut self, cycles: usize) -> usize {
        let mut done = 0;
        while done < cycles && self.failure.is_none() {
            match self.exp.advance() {
                Ok(rec) => {
                    self.forecast_rmse.push(rec.forecast_rmse);
                    self.analysis_rmse.push(rec.analysis_rmse);
                    done += 1;
                }
                Err(e) => self.failure = Some(e.to_string()),
            }
        }
        done
    }

    pub fn truth(&self) -> Vec<f64> {
        self.exp.truth().as_slice().to_vec()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.exp.mean().as_slice().to_vec()
    }

    /// Member states, member after member.
    pub fn members(&self) -> Vec<f64> {
        self.exp.members().as_slice().to_vec()
    }

    pub fn member_count(&self) -> usize {
        self.exp.members().ncols()
    }

    pub fn observed_indices(&self) -> Vec<u32> {
        self.exp
            .observation_operator()
            .locations()
            .map(|l| l.iter().map(|&i| i as u32).collect())
            .unwrap_or_default()
    }

    pub fn forecast_rmse(&self) -> Vec<f64> {
        self.forecast_rmse.clone()
    }

    pub fn analysis_rmse(&self) -> Vec<f64> {
        self.analysis_rmse.clone()
    }

    pub fn cycles(&self) -> usize {
        self.exp.cycles_done()
    }

    pub fn failure(&self) -> Option<String> {
        self.failure.clone()
    }
}
