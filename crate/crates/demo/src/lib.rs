//! Browser bindings: build an instance, design a gain, sweep delays, simulate.

use wasm_bindgen::prelude::*;

use delayed_consensus::augment::build_augmented_pa;
use delayed_consensus::gain::{
    augmented_radius_bound, closed_loop_augmented, design_gain, design_gain_delay_tolerant, DesignOptions, GainMatrix,
};
use delayed_consensus::harness::{
    build_instance, run_trial, sub_seed, trial_seeds, DelayKind, DelaySpec, ExperimentConfig, GainMode, Instance,
    TopologyKind,
};
use delayed_consensus::linalg::spectral_radius;
use delayed_consensus::model::{assign_delays, DelayMode};
use delayed_consensus::Error;

const DELAY_STREAM: u64 = 2;
const DESIGN_STREAM: u64 = 3;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    cfg: ExperimentConfig,
    inst: Instance,
    gain: Option<GainMatrix>,
}

#[wasm_bindgen]
impl Demo {
    /// Random instance: `n` states in `blocks` blocks, one sensor per output row.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, blocks: usize, sensors: usize, chords: usize, target_rho: f64, seed: u64) -> Result<Demo, JsError> {
        let cfg = ExperimentConfig {
            n,
            blocks,
            target_rho,
            q_var: 0.004,
            r_var: 0.004,
            sensors,
            topology: if chords == 0 {
                TopologyKind::Cycle
            } else {
                TopologyKind::CycleWithChords
            },
            chords,
            delays: vec![DelaySpec {
                mode: DelayKind::Homogeneous,
                tau_bar: 0,
            }],
            gain: GainMode::Plain,
            tau_1: 0,
            horizon: 200,
            trials: 20,
            seed,
            x0_scale: 1.0,
        };
        let inst = build_instance(&cfg).map_err(js)?;
        Ok(Demo { cfg, inst, gain: None })
    }

    /// Designs a gain certified up to `tau_1` and returns its report as JSON.
    ///
    /// `tau_1 = 0` gives the plain delay-free design.
    pub fn design(&mut self, tau_1: usize, restarts: usize) -> Result<String, JsError> {
        let opts = DesignOptions {
            seed: sub_seed(self.cfg.seed, DESIGN_STREAM),
            restarts: restarts.max(1),
            report_taus: (0..=20).collect(),
            ..DesignOptions::default()
        };
        let (net, sys) = (&self.inst.net, &self.inst.sys);
        let d = if tau_1 == 0 {
            design_gain(net, sys, &opts)
        } else {
            design_gain_delay_tolerant(net, sys, tau_1, &opts)
        }
        .map_err(js)?;
        let r = &d.report;
        let bounds: Vec<f64> = r.rho_aug_bound_by_tau.values().copied().collect();
        self.gain = Some(d.gain);
        Ok(format!(
            "{{\"rho\":{},\"tau_star\":\"{}\",\"bounds\":{:?}}}",
            r.rho_closed_loop, r.tau_star, bounds
        ))
    }

    /// Bound `ρ(Â_τ̄)^{1/(τ̄+1)}` for `τ̄ = 0..=max_tau`, then the exact
    /// closed-loop radius under homogeneous and heterogeneous delays, concatenated.
    pub fn sweep(&self, max_tau: usize) -> Result<Vec<f64>, JsError> {
        let gain = self.gain()?;
        let (p, a, dbar) = (self.inst.net.p(), self.inst.sys.a(), self.inst.sys.dbar_c());
        let taus: Vec<usize> = (0..=max_tau).collect();
        let mut out = taus
            .iter()
            .map(|&t| augmented_radius_bound(p, a, gain, &dbar, t))
            .collect::<Result<Vec<f64>, Error>>()
            .map_err(js)?;
        let delay_seed = sub_seed(self.cfg.seed, DELAY_STREAM);
        for mode in [DelayMode::Homogeneous as fn(usize) -> DelayMode, DelayMode::HeterogeneousUniform] {
            for &t in &taus {
                let delays = assign_delays(&self.inst.net, mode(t), delay_seed);
                let op = build_augmented_pa(p, a, &delays).map_err(js)?;
                let cl = closed_loop_augmented(&op, gain, &dbar).map_err(js)?;
                out.push(spectral_radius(&cl).map_err(js)?);
            }
        }
        Ok(out)
    }

    /// Mean per-step MSE over `trials` runs, `horizon + 1` values.
    pub fn simulate(&self, tau_bar: usize, heterogeneous: bool, trials: usize, horizon: usize) -> Result<Vec<f64>, JsError> {
        let gain = self.gain()?;
        let mode = if heterogeneous {
            DelayMode::HeterogeneousUniform(tau_bar)
        } else {
            DelayMode::Homogeneous(tau_bar)
        };
        let inst = Instance {
            sys: self.inst.sys.clone(),
            net: self.inst.net.clone(),
            delays: vec![(mode.label(), assign_delays(&self.inst.net, mode, sub_seed(self.cfg.seed, DELAY_STREAM)))],
        };
        let cfg = ExperimentConfig {
            horizon,
            trials,
            ..self.cfg.clone()
        };
        let mut mean = vec![0.0; horizon + 1];
        for seed in trial_seeds(cfg.seed, trials.max(1)) {
            let mse = run_trial(&cfg, &inst, gain, seed).map_err(js)?;
            for (m, v) in mean.iter_mut().zip(&mse[0]) {
                *m += v / trials.max(1) as f64;
            }
        }
        Ok(mean)
    }

    pub fn spectral_radius_a(&self) -> Result<f64, JsError> {
        spectral_radius(self.inst.sys.a()).map_err(js)
    }
}

impl Demo {
    fn gain(&self) -> Result<&GainMatrix, JsError> {
        self.gain.as_ref().ok_or_else(|| JsError::new("design a gain first"))
    }
}
