//! Monte-Carlo experiments: configuration, instance generation, per-trial
//! simulation, MSE curves and CSV output.
//!
//! `MSE_k = (1/N) Σ_i ‖x̂^i_{k|k} − x_k‖²`, averaged over trials. Curves are
//! written as `step,label,mse` with 17 significant digits.

pub mod verify;

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::build_augmented_pa;
use crate::error::{Error, Result};
use crate::estimator::{run_distributed, simulate_plant, EstimateTrace, PlantTrace};
use crate::gain::{closed_loop_augmented, design_gain, design_gain_delay_tolerant, Design, DesignOptions, GainMatrix};
use crate::linalg::{spectral_radius, Vector};
use crate::model::{
    assign_delays, generate_network, generate_system_with_sensors, DelayMode, DelayProfile, LtiSystem,
    SensorNetwork, Topology, DEFAULT_NOISE_VAR,
};

/// Environment variable that overrides the worker count.
pub const WORKERS_ENV: &str = "DCEST_WORKERS";

const NETWORK_STREAM: u64 = 1;
const DELAY_STREAM: u64 = 2;
const DESIGN_STREAM: u64 = 3;
const TRIAL_STREAM: u64 = 4;
const X0_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Cycle,
    CycleWithChords,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayKind {
    Homogeneous,
    Heterogeneous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub mode: DelayKind,
    pub tau_bar: usize,
}

impl DelaySpec {
    pub fn mode(&self) -> DelayMode {
        match self.mode {
            DelayKind::Homogeneous => DelayMode::Homogeneous(self.tau_bar),
            DelayKind::Heterogeneous => DelayMode::HeterogeneousUniform(self.tau_bar),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    Plain,
    DelayTolerant,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_VAR
}

fn default_topology() -> TopologyKind {
    TopologyKind::Cycle
}

fn default_gain() -> GainMode {
    GainMode::Plain
}

fn default_x0_scale() -> f64 {
    1.0
}

/// Flat experiment description; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub blocks: usize,
    pub target_rho: f64,
    #[serde(default = "default_noise")]
    pub q_var: f64,
    #[serde(default = "default_noise")]
    pub r_var: f64,
    pub sensors: usize,
    #[serde(default = "default_topology")]
    pub topology: TopologyKind,
    #[serde(default)]
    pub chords: usize,
    pub delays: Vec<DelaySpec>,
    #[serde(default = "default_gain")]
    pub gain: GainMode,
    #[serde(default)]
    pub tau_1: usize,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    /// Initial states are drawn from `N(0, x0_scale² I)` per trial.
    #[serde(default = "default_x0_scale")]
    pub x0_scale: f64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n", self.n),
            ("blocks", self.blocks),
            ("sensors", self.sensors),
            ("horizon", self.horizon),
            ("trials", self.trials),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{key} must be positive")));
            }
        }
        if self.delays.is_empty() {
            return Err(Error::Config("at least one delay spec is required".into()));
        }
        let finite_nonneg = [("q_var", self.q_var), ("r_var", self.r_var), ("x0_scale", self.x0_scale)];
        for (key, v) in finite_nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{key} must be finite and non-negative")));
            }
        }
        if !(self.target_rho.is_finite() && self.target_rho > 0.0) {
            return Err(Error::Config("target_rho must be positive".into()));
        }
        let mut labels: Vec<String> = self.delays.iter().map(|d| d.mode().label()).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate delay spec {}", w[0])));
        }
        Ok(())
    }

    pub fn topology(&self) -> Topology {
        match self.topology {
            TopologyKind::Cycle => Topology::Cycle,
            TopologyKind::CycleWithChords => Topology::CycleWithChords(self.chords),
        }
    }
}

/// Independent seed for a named purpose, derived from the master seed.
pub fn sub_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

/// First `trials` trial seeds; a longer run extends a shorter one.
pub fn trial_seeds(master: u64, trials: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(TRIAL_STREAM);
    (0..trials).map(|_| rng.next_u64()).collect()
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub sys: LtiSystem,
    pub net: SensorNetwork,
    /// `(label, profile)` per configured delay spec.
    pub delays: Vec<(String, DelayProfile)>,
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    cfg.validate()?;
    let sys = generate_system_with_sensors(cfg.n, cfg.blocks, cfg.sensors, cfg.target_rho, cfg.seed)?
        .with_noise(cfg.q_var, cfg.r_var)?;
    let net = generate_network(cfg.sensors, cfg.topology(), sub_seed(cfg.seed, NETWORK_STREAM))?;
    let delay_seed = sub_seed(cfg.seed, DELAY_STREAM);
    let delays = cfg
        .delays
        .iter()
        .enumerate()
        .map(|(idx, spec)| {
            let mode = spec.mode();
            (mode.label(), assign_delays(&net, mode, delay_seed.wrapping_add(idx as u64)))
        })
        .collect();
    Ok(Instance { sys, net, delays })
}

pub fn design_for(cfg: &ExperimentConfig, inst: &Instance) -> Result<Design> {
    let opts = DesignOptions {
        seed: sub_seed(cfg.seed, DESIGN_STREAM),
        ..DesignOptions::default()
    };
    match cfg.gain {
        GainMode::Plain => design_gain(&inst.net, &inst.sys, &opts),
        GainMode::DelayTolerant => design_gain_delay_tolerant(&inst.net, &inst.sys, cfg.tau_1, &opts),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MseCurve {
    pub label: String,
    /// `MSE_k` for `k = 0..=T`.
    pub values: Vec<f64>,
    pub trials: usize,
}

impl MseCurve {
    /// Mean over the last `fraction` of the steps.
    pub fn tail_average(&self, fraction: f64) -> f64 {
        let len = self.values.len();
        let take = ((len as f64 * fraction).ceil() as usize).clamp(1, len);
        self.values[len - take..].iter().sum::<f64>() / take as f64
    }

    /// Least-squares slope of `ln MSE_k` over `k ∈ [start, end)`.
    pub fn log_decay_slope(&self, start: usize, end: usize) -> Result<f64> {
        let end = end.min(self.values.len());
        if end < start + 2 {
            return Err(Error::Precondition(format!("slope window {start}..{end} has fewer than 2 points")));
        }
        let pts: Vec<(f64, f64)> = (start..end).map(|k| (k as f64, self.values[k].max(f64::MIN_POSITIVE).ln())).collect();
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Ok(sxy / sxx)
    }
}

/// `MSE_k = (1/N) Σ_i ‖x̂^i_{k|k} − x_k‖²` for one run.
pub fn mse_of_trace(trace: &EstimateTrace, plant: &PlantTrace) -> Result<Vec<f64>> {
    if trace.posteriors.len() != plant.states.len() {
        return Err(Error::Dimension(format!(
            "estimate trace covers {} steps, plant covers {}",
            trace.posteriors.len(),
            plant.states.len()
        )));
    }
    Ok(trace
        .posteriors
        .iter()
        .zip(&plant.states)
        .map(|(ests, x)| ests.iter().map(|e| (x - e).norm_squared()).sum::<f64>() / ests.len() as f64)
        .collect())
}

/// One trial: a shared plant realization run under every delay profile.
pub fn run_trial(
    cfg: &ExperimentConfig,
    inst: &Instance,
    gain: &GainMatrix,
    trial_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(X0_STREAM);
    let x0 = Vector::from_iterator(
        inst.sys.n(),
        (0..inst.sys.n()).map(|_| cfg.x0_scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)),
    );
    let plant = simulate_plant(&inst.sys, &x0, cfg.horizon, trial_seed)?;
    inst.delays
        .iter()
        .map(|(_, profile)| {
            let trace = run_distributed(&inst.sys, &inst.net, profile, gain, &plant)?;
            mse_of_trace(&trace, &plant)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub instance: Instance,
    pub design: Design,
    pub curves: Vec<MseCurve>,
}

/// Worker count: explicit argument, then the environment, then rayon's default.
pub fn resolve_workers(explicit: Option<usize>) -> Option<usize> {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&w| w > 0)
}

/// Averages per-trial MSE curves in trial order, whatever the worker count.
pub fn run_montecarlo(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<Experiment> {
    let instance = build_instance(cfg)?;
    let design = design_for(cfg, &instance)?;
    let seeds = trial_seeds(cfg.seed, cfg.trials);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = resolve_workers(workers) {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let per_trial: Vec<Vec<Vec<f64>>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_trial(cfg, &instance, &design.gain, s))
            .collect::<Result<Vec<_>>>()
    })?;

    let steps = cfg.horizon + 1;
    let mut curves: Vec<MseCurve> = instance
        .delays
        .iter()
        .map(|(label, _)| MseCurve {
            label: label.clone(),
            values: vec![0.0; steps],
            trials: cfg.trials,
        })
        .collect();
    for trial in &per_trial {
        for (curve, mse) in curves.iter_mut().zip(trial) {
            for (acc, v) in curve.values.iter_mut().zip(mse) {
                *acc += v;
            }
        }
    }
    for curve in &mut curves {
        for v in &mut curve.values {
            *v /= cfg.trials as f64;
        }
    }
    Ok(Experiment {
        instance,
        design,
        curves,
    })
}

/// A single trial (the first Monte-Carlo seed) as one-trial curves.
pub fn run_single(cfg: &ExperimentConfig) -> Result<Experiment> {
    let single = ExperimentConfig {
        trials: 1,
        ..cfg.clone()
    };
    run_montecarlo(&single, Some(1))
}

/// Smallest homogeneous `τ̄` in `from..=cap` whose augmented closed loop has
/// `ρ ≥ 1`, with that radius.
pub fn first_unstable_homogeneous_delay(
    net: &SensorNetwork,
    sys: &LtiSystem,
    gain: &GainMatrix,
    from: usize,
    cap: usize,
) -> Result<Option<(usize, f64)>> {
    let dbar = sys.dbar_c();
    for tau in from..=cap {
        let profile = assign_delays(net, DelayMode::Homogeneous(tau), 0);
        let op = build_augmented_pa(net.p(), sys.a(), &profile)?;
        let rho = spectral_radius(&closed_loop_augmented(&op, gain, &dbar)?)?;
        if rho >= 1.0 {
            return Ok(Some((tau, rho)));
        }
    }
    Ok(None)
}

pub fn write_mse_csv<W: Write>(curves: &[MseCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "label", "mse"]).map_err(csv_error)?;
    for curve in curves {
        for (k, v) in curve.values.iter().enumerate() {
            w.write_record([k.to_string(), curve.label.clone(), format!("{v:.16e}")])
                .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
n = 3
blocks = 2
target_rho = 1.02
sensors = 3
delays = [{ mode = "homogeneous", tau_bar = 0 }, { mode = "heterogeneous", tau_bar = 2 }]
horizon = 30
trials = 4
seed = 5
"#;

    #[test]
    fn config_defaults_and_validation() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        assert_eq!(cfg.q_var, DEFAULT_NOISE_VAR);
        assert_eq!(cfg.gain, GainMode::Plain);
        assert!(matches!(
            ExperimentConfig::from_toml(&format!("{SMALL}\nbogus = 1")),
            Err(Error::Toml(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml(&SMALL.replace("trials = 4", "trials = 0")),
            Err(Error::Config(_))
        ));
        let dup = SMALL.replace("heterogeneous\", tau_bar = 2", "homogeneous\", tau_bar = 0");
        assert!(matches!(ExperimentConfig::from_toml(&dup), Err(Error::Config(_))));
    }

    #[test]
    fn mse_of_perfect_and_scalar_estimates() {
        let plant = PlantTrace {
            states: vec![Vector::from_element(1, 2.0); 2],
            outputs: vec![Vector::zeros(1); 2],
            process_noise: vec![Vector::zeros(1); 2],
            measurement_noise: vec![Vector::zeros(1); 2],
            noise_seed: 0,
        };
        let trace = EstimateTrace {
            posteriors: vec![vec![Vector::from_element(1, 2.0)], vec![Vector::from_element(1, -1.0)]],
            priors: vec![vec![Vector::zeros(1)]; 2],
            errors: vec![vec![Vector::zeros(1)]; 2],
        };
        assert_eq!(mse_of_trace(&trace, &plant).unwrap(), vec![0.0, 9.0]);
    }

    #[test]
    fn montecarlo_is_independent_of_workers() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        let a = run_montecarlo(&cfg, Some(1)).unwrap();
        let b = run_montecarlo(&cfg, Some(3)).unwrap();
        assert_eq!(a.curves, b.curves);
        assert_eq!(a.curves.len(), 2);
        assert_eq!(a.curves[0].values.len(), 31);
        assert!(a.curves.iter().all(|c| c.values.iter().all(|v| *v >= 0.0)));
    }

    #[test]
    fn csv_layout() {
        let curve = MseCurve {
            label: "homogeneous-tau0".into(),
            values: vec![1.0, 0.1],
            trials: 1,
        };
        let mut buf = Vec::new();
        write_mse_csv(&[curve], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "step,label,mse\n0,homogeneous-tau0,1.0000000000000000e0\n1,homogeneous-tau0,1.0000000000000001e-1\n"
        );
    }

    #[test]
    fn slope_and_tail() {
        let curve = MseCurve {
            label: "x".into(),
            values: (0..20).map(|k| 0.5f64.powi(k)).collect(),
            trials: 1,
        };
        assert!((curve.log_decay_slope(0, 20).unwrap() - 0.5f64.ln()).abs() < 1e-12);
        assert!(curve.log_decay_slope(3, 4).is_err());
        assert!((curve.tail_average(0.1) - (0.5f64.powi(18) + 0.5f64.powi(19)) / 2.0).abs() < 1e-18);
    }
}
