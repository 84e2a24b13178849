//! Randomized property suites behind `dcest verify`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{build_augmented, verify_delayed_radius_bound, EntryDelays};
use crate::error::Result;
use crate::estimator::{run_augmented, run_distributed, simulate_plant};
use crate::gain::GainMatrix;
use crate::linalg::{eigenvalues, kron, multiset_mismatch, spectral_radius, verify_shift_register_spectrum, Matrix, Vector, TOL};
use crate::model::{
    assign_delays, generate_network, generate_system_with_sensors, DelayMode, DelayProfile, SensorNetwork, Topology,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed deviation, in the suite's own units.
    pub worst: f64,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

struct Tally {
    name: &'static str,
    cases: usize,
    failures: usize,
    worst: f64,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            cases: 0,
            failures: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, ok: bool, deviation: f64) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
        }
        if deviation.is_finite() {
            self.worst = self.worst.max(deviation);
        } else {
            self.worst = f64::INFINITY;
        }
    }

    fn finish(self) -> SuiteOutcome {
        SuiteOutcome {
            name: self.name,
            cases: self.cases,
            failures: self.failures,
            worst: self.worst,
        }
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

fn random_stochastic(rng: &mut ChaCha8Rng, dim: usize) -> Matrix {
    let mut p = uniform_matrix(rng, dim, dim, 0.0, 1.0);
    for i in 0..dim {
        let s = p.row(i).sum();
        p.row_mut(i).scale_mut(1.0 / s);
    }
    p
}

/// Random network with chords and heterogeneous delays up to `tau_bar`.
fn random_delayed_network(rng: &mut ChaCha8Rng, sensors: usize, tau_bar: usize) -> Result<(SensorNetwork, DelayProfile)> {
    let chords = rng.random_range(0..=sensors);
    let net = generate_network(sensors, Topology::CycleWithChords(chords), rng.random())?;
    let delays = assign_delays(&net, DelayMode::HeterogeneousUniform(tau_bar), rng.random());
    Ok((net, delays))
}

/// Eigenvalues of `P ⊗ A` are the pairwise products of those of `P` and `A`.
pub fn kron_spectra(seeds: u64) -> Result<SuiteOutcome> {
    let mut tally = Tally::new("kron_spectra");
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let np = rng.random_range(1..=5);
        let na = rng.random_range(1..=5);
        let p = random_stochastic(&mut rng, np);
        let a = uniform_matrix(&mut rng, na, na, -1.0, 1.0);
        let sp = eigenvalues(&p)?.eigenvalues;
        let sa = eigenvalues(&a)?.eigenvalues;
        let products: Vec<Complex64> = sp.iter().flat_map(|l| sa.iter().map(move |m| l * m)).collect();
        let sk = eigenvalues(&kron(&p, &a))?;
        let mismatch = multiset_mismatch(&sk.eigenvalues, &products) / sk.spectral_radius.max(1.0);
        tally.record(mismatch <= TOL.rel, mismatch);
    }
    Ok(tally.finish())
}

/// Spectrum of the single-block shift register over the grid `N ≤ 3`, `n ≤ 4`, `i ≤ n`.
pub fn shift_register_spectra(seeds: u64) -> Result<SuiteOutcome> {
    let mut tally = Tally::new("shift_register_spectra");
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for big_n in 1..=3 {
            let a_i = uniform_matrix(&mut rng, big_n, big_n, -1.0, 1.0);
            for n in 1..=4 {
                for i in 1..=n {
                    let check = verify_shift_register_spectrum(&a_i, n, i)?;
                    tally.record(check.passed, check.max_mismatch);
                }
            }
        }
    }
    Ok(tally.finish())
}

/// `ρ(Ā) ≤ ρ(A)^{1/(τ̄+1)}` for entrywise nonnegative stable `A` under random
/// per-entry delays, with equality under a uniform delay.
pub fn delayed_radius_bound(seeds: u64) -> Result<SuiteOutcome> {
    let mut tally = Tally::new("delayed_radius_bound");
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(1..=5);
        let mut a = uniform_matrix(&mut rng, dim, dim, 0.0, 1.0);
        let rho = spectral_radius(&a)?;
        a *= rng.random_range(0.05..0.99) / rho;
        let tau_bar = rng.random_range(0..=4);
        let tau = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j)
            .map(|(i, j)| ((i, j), rng.random_range(0..=tau_bar)))
            .collect();
        let profile = DelayProfile::new(tau, tau_bar)?;
        let r = verify_delayed_radius_bound(&a, &EntryDelays::Profile(profile))?;
        tally.record(r.passed, (r.rho_augmented - r.bound).max(0.0));
        let r = verify_delayed_radius_bound(&a, &EntryDelays::Uniform(tau_bar))?;
        tally.record(r.passed, (r.rho_augmented - r.bound).abs());
    }
    Ok(tally.finish())
}

/// Rows of `P̄` sum to one and `ρ(P̄) = 1`.
pub fn stochasticity(seeds: u64) -> Result<SuiteOutcome> {
    let mut tally = Tally::new("stochasticity");
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sensors = rng.random_range(1..=6);
        let tau_bar = rng.random_range(0..=5);
        let (net, delays) = random_delayed_network(&mut rng, sensors, tau_bar)?;
        let op = build_augmented(net.p(), &delays)?;
        let row_dev = (0..op.dim())
            .map(|r| (op.matrix.row(r).sum() - 1.0).abs())
            .fold(0.0, f64::max);
        let rho_dev = (op.spectral_radius()? - 1.0).abs();
        tally.record(row_dev <= TOL.stochastic && rho_dev <= TOL.rel, row_dev.max(rho_dev));
    }
    Ok(tally.finish())
}

/// The message-passing and augmented estimators agree entrywise.
pub fn dual_path(seeds: u64) -> Result<SuiteOutcome> {
    let mut tally = Tally::new("dual_path");
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sensors = rng.random_range(1..=5);
        let n = rng.random_range(1..=6);
        let blocks = rng.random_range(1..=n.min(sensors));
        let tau_bar = rng.random_range(0..=4);
        let noise = if seed % 2 == 0 { 0.004 } else { 0.0 };
        let sys = generate_system_with_sensors(n, blocks, sensors, rng.random_range(0.8..1.1), rng.random())?
            .with_noise(noise, noise)?;
        let (net, delays) = random_delayed_network(&mut rng, sensors, tau_bar)?;
        let gains: Vec<Vector> = (0..sensors)
            .map(|_| Vector::from_fn(n, |_, _| rng.random_range(-0.5..0.5)))
            .collect();
        let gain = GainMatrix::from_innovation_gains(sys.c(), &gains)?;
        let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let plant = simulate_plant(&sys, &x0, 50, rng.random())?;
        let d = run_distributed(&sys, &net, &delays, &gain, &plant)?;
        let g = run_augmented(&sys, &net, &delays, &gain, &plant)?;
        let mut worst: f64 = 0.0;
        for (sd, sg) in d.posteriors.iter().zip(&g.posteriors) {
            for (vd, vg) in sd.iter().zip(sg) {
                for (x, y) in vd.iter().zip(vg.iter()) {
                    worst = worst.max((x - y).abs() / x.abs().max(1.0));
                }
            }
        }
        tally.record(worst <= TOL.dual_path, worst);
    }
    Ok(tally.finish())
}

pub fn run_all(seeds: u64) -> Result<Vec<SuiteOutcome>> {
    Ok(vec![
        kron_spectra(seeds)?,
        shift_register_spectra(seeds)?,
        delayed_radius_bound(seeds)?,
        stochasticity(seeds)?,
        dual_path(seeds)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_a_few_seeds() {
        for outcome in run_all(5).unwrap() {
            assert!(outcome.passed(), "{outcome:?}");
            assert!(outcome.cases > 0);
        }
    }
}
