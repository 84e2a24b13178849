use delayed_consensus::augment::build_augmented_pa;
use delayed_consensus::estimator::{run_distributed, simulate_plant};
use delayed_consensus::gain::{closed_loop_augmented, design_gain_delay_tolerant, DesignOptions};
use delayed_consensus::harness::{build_instance, design_for, run_trial, trial_seeds, DelayKind, DelaySpec, ExperimentConfig, GainMode, TopologyKind};
use delayed_consensus::linalg::spectral_radius;
use delayed_consensus::model::{assign_delays, generate_network, generate_system, DelayMode, Topology};
use delayed_consensus::Vector;

#[test]
fn noise_free_error_decays_at_the_closed_loop_rate() {
    let sys = generate_system(6, 4, 1.04, 17).unwrap().with_noise(0.0, 0.0).unwrap();
    let net = generate_network(4, Topology::Cycle, 17).unwrap();
    let design = design_gain_delay_tolerant(&net, &sys, 2, &DesignOptions::default()).unwrap();
    let delays = assign_delays(&net, DelayMode::HeterogeneousUniform(2), 4);
    let op = build_augmented_pa(net.p(), sys.a(), &delays).unwrap();
    let rho = spectral_radius(&closed_loop_augmented(&op, &design.gain, &sys.dbar_c()).unwrap()).unwrap();
    assert!(rho < 1.0, "instance not stable under its delays: {rho}");

    let horizon = 200;
    let plant = simulate_plant(&sys, &Vector::from_element(6, 1.0), horizon, 0).unwrap();
    let trace = run_distributed(&sys, &net, &delays, &design.gain, &plant).unwrap();
    let norms = trace.max_error_norms();
    let (lo, hi) = (horizon / 2, horizon);
    let xs: Vec<f64> = (lo..=hi).map(|k| k as f64).collect();
    let ys: Vec<f64> = (lo..=hi).map(|k| norms[k].ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    assert!(slope <= rho.ln() + 0.05, "slope {slope} vs ln rho {}", rho.ln());
}

#[test]
fn montecarlo_mean_matches_long_run_average() {
    let cfg = ExperimentConfig {
        n: 6,
        blocks: 4,
        target_rho: 0.98,
        q_var: 0.004,
        r_var: 0.004,
        sensors: 4,
        topology: TopologyKind::Cycle,
        chords: 0,
        delays: vec![DelaySpec {
            mode: DelayKind::Homogeneous,
            tau_bar: 0,
        }],
        gain: GainMode::Plain,
        tau_1: 0,
        horizon: 150,
        trials: 200,
        seed: 2,
        x0_scale: 1.0,
    };
    let inst = build_instance(&cfg).unwrap();
    let design = design_for(&cfg, &inst).unwrap();
    let burn_in = 100;

    let per_trial: Vec<f64> = trial_seeds(cfg.seed, cfg.trials)
        .into_iter()
        .map(|s| {
            let mse = &run_trial(&cfg, &inst, &design.gain, s).unwrap()[0];
            mse[burn_in..].iter().sum::<f64>() / (mse.len() - burn_in) as f64
        })
        .collect();
    let m = per_trial.len() as f64;
    let mean = per_trial.iter().sum::<f64>() / m;
    let sd = (per_trial.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();

    let long = ExperimentConfig {
        horizon: 20_000,
        trials: 1,
        ..cfg.clone()
    };
    let mse = &run_trial(&long, &inst, &design.gain, 12345).unwrap()[0];
    let long_run = mse[burn_in..].iter().sum::<f64>() / (mse.len() - burn_in) as f64;
    assert!(
        (mean - long_run).abs() <= 3.0 * sd / m.sqrt() + 0.05 * long_run,
        "Monte-Carlo {mean} ± {sd} vs long run {long_run}"
    );
}
