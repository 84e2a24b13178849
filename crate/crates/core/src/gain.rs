//! Block-diagonal gain synthesis and delay-tolerance analysis.
//!
//! The delay-free closed loop is `Â = P⊗A − K D̄_C (P⊗A)`. Its delayed twin
//! `Â_τ = P⊗A^{τ+1} − K D̄_C (P⊗A^{τ+1})` bounds the augmented closed loop:
//! `ρ(Â̲) ≤ ρ(Â_τ)^{1/(τ+1)}`. Everything here is expressed through those two
//! families of matrices.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::augment::AugmentedOperator;
use crate::error::{Error, Result};
use crate::linalg::{block_diagonal, kron, powers_up_to, spectral_radius, Matrix, Vector};
use crate::model::{LtiSystem, SensorNetwork};
use crate::observability::is_structurally_observable_networked;

/// `K = blockdiag(K_i)` with one `n x n` block per sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GainMatrix {
    blocks: Vec<Matrix>,
}

impl GainMatrix {
    pub fn new(blocks: Vec<Matrix>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::InvalidModel("a gain needs at least one block".into()));
        };
        let n = first.nrows();
        for (i, b) in blocks.iter().enumerate() {
            if b.shape() != (n, n) {
                return Err(Error::Dimension(format!(
                    "gain block {i} is {}x{}, expected {n}x{n}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            crate::linalg::ensure_valid(b)?;
        }
        Ok(GainMatrix { blocks })
    }

    pub fn zero(n_sensors: usize, n: usize) -> Self {
        GainMatrix {
            blocks: vec![Matrix::zeros(n, n); n_sensors],
        }
    }

    /// Builds `K_i = g_i C_i / (C_i C_iᵀ)` so that sensor `i`'s innovation
    /// gain `K_i C_iᵀ` equals `g_i`.
    pub fn from_innovation_gains(c: &Matrix, gains: &[Vector]) -> Result<Self> {
        if gains.len() != c.nrows() {
            return Err(Error::Dimension(format!(
                "{} innovation gains for {} sensors",
                gains.len(),
                c.nrows()
            )));
        }
        let blocks = gains
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let row = c.row(i);
                let norm2 = row.norm_squared();
                if norm2 == 0.0 {
                    return Err(Error::InvalidModel(format!("sensor {i} has a zero output row")));
                }
                Ok(g * row / norm2)
            })
            .collect::<Result<Vec<_>>>()?;
        GainMatrix::new(blocks)
    }

    pub fn n_sensors(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_dim(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Matrix {
        &self.blocks[i]
    }

    pub fn assembled(&self) -> Matrix {
        block_diagonal(&self.blocks)
    }

    /// `K_i C_iᵀ`, the vector that multiplies sensor `i`'s scalar innovation.
    pub fn innovation_gain(&self, i: usize, c_row: &Matrix) -> Vector {
        &self.blocks[i] * c_row.transpose().column(0)
    }
}

fn check_square(m: &Matrix, dim: usize, what: &str) -> Result<()> {
    if m.shape() != (dim, dim) {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected {dim}x{dim}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `(I − K D̄_C) M` for an `Nn x Nn` matrix `M`.
fn correct(m: &Matrix, k: &GainMatrix, dbar_c: &Matrix) -> Result<Matrix> {
    let dim = k.n_sensors() * k.block_dim();
    check_square(m, dim, "propagation matrix")?;
    check_square(dbar_c, dim, "D̄_C")?;
    let kd = k.assembled() * dbar_c;
    Ok(m - kd * m)
}

/// `Â = P⊗A − K D̄_C (P⊗A)`.
pub fn closed_loop_delay_free(p: &Matrix, a: &Matrix, k: &GainMatrix, dbar_c: &Matrix) -> Result<Matrix> {
    correct(&kron(p, a), k, dbar_c)
}

/// `Â_τ = P⊗A^{τ+1} − K D̄_C (P⊗A^{τ+1})`.
pub fn closed_loop_delay_power(
    p: &Matrix,
    a: &Matrix,
    k: &GainMatrix,
    dbar_c: &Matrix,
    tau: usize,
) -> Result<Matrix> {
    let a_pow = &powers_up_to(a, tau + 1)[tau + 1];
    correct(&kron(p, a_pow), k, dbar_c)
}

/// Augmented closed loop: the correction `K D̄_C (·)` is subtracted from the
/// first block row only; the shift rows are left untouched.
pub fn closed_loop_augmented(pa_bar: &AugmentedOperator, k: &GainMatrix, dbar_c: &Matrix) -> Result<Matrix> {
    let base = pa_bar.base_dim;
    let dim = k.n_sensors() * k.block_dim();
    if base != dim {
        return Err(Error::Dimension(format!(
            "augmented slice dimension {base} does not match gain dimension {dim}"
        )));
    }
    check_square(dbar_c, dim, "D̄_C")?;
    let kd = k.assembled() * dbar_c;
    let mut out = pa_bar.matrix.clone();
    let first = pa_bar.matrix.rows(0, base).into_owned();
    let corrected = &first - kd * &first;
    out.rows_mut(0, base).copy_from(&corrected);
    Ok(out)
}

/// Largest delay bound certified by the spectral condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TauStar {
    /// The condition holds for every `τ ≤ value` and fails at `value + 1`.
    Finite(usize),
    /// The condition holds through the whole scan `0..=value`.
    AtLeast(usize),
}

impl TauStar {
    /// Lower bound usable as a delay certificate.
    pub fn certified(&self) -> usize {
        match *self {
            TauStar::Finite(t) | TauStar::AtLeast(t) => t,
        }
    }
}

impl std::fmt::Display for TauStar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TauStar::Finite(t) => write!(f, "{t}"),
            TauStar::AtLeast(t) => write!(f, ">={t}"),
        }
    }
}

/// Scans `τ = 0, 1, ...` and returns the end of the contiguous prefix on
/// which `ρ(Â_τ) < 1`.
pub fn tau_star(p: &Matrix, a: &Matrix, k: &GainMatrix, dbar_c: &Matrix, tau_max: usize) -> Result<TauStar> {
    let kd = k.assembled() * dbar_c;
    let dim = kd.nrows();
    check_square(&kron(p, a), dim, "P⊗A")?;
    let mut a_pow = a.clone();
    for tau in 0..=tau_max {
        let m = kron(p, &a_pow);
        let rho = spectral_radius(&(&m - &kd * &m))?;
        if rho >= 1.0 {
            if tau == 0 {
                return Err(Error::Precondition(format!(
                    "delay-free closed loop is not Schur stable (ρ = {rho})"
                )));
            }
            return Ok(TauStar::Finite(tau - 1));
        }
        a_pow = &a_pow * a;
    }
    Ok(TauStar::AtLeast(tau_max))
}

/// `ρ(Â_τ)^{1/(τ+1)}`, the upper bound on the augmented closed-loop radius
/// under delays bounded by `τ`.
pub fn augmented_radius_bound(p: &Matrix, a: &Matrix, k: &GainMatrix, dbar_c: &Matrix, tau: usize) -> Result<f64> {
    let rho = spectral_radius(&closed_loop_delay_power(p, a, k, dbar_c, tau)?)?;
    Ok(rho.powf(1.0 / (tau as f64 + 1.0)))
}

/// `1 − ρ(Â_τ)^{1/(τ+1)}`; convergence time scales like its inverse.
pub fn convergence_rate(p: &Matrix, a: &Matrix, k: &GainMatrix, dbar_c: &Matrix, tau_bar: usize) -> Result<f64> {
    Ok(1.0 - augmented_radius_bound(p, a, k, dbar_c, tau_bar)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub rho_closed_loop: f64,
    pub tau_star: TauStar,
    pub rho_aug_bound_by_tau: BTreeMap<usize, f64>,
    pub rate_by_tau: BTreeMap<usize, f64>,
}

pub fn stability_report(
    p: &Matrix,
    a: &Matrix,
    k: &GainMatrix,
    dbar_c: &Matrix,
    taus: &[usize],
    tau_max: usize,
) -> Result<StabilityReport> {
    let rho_closed_loop = spectral_radius(&closed_loop_delay_free(p, a, k, dbar_c)?)?;
    let tau_star = tau_star(p, a, k, dbar_c, tau_max)?;
    let mut rho_aug_bound_by_tau = BTreeMap::new();
    let mut rate_by_tau = BTreeMap::new();
    for &t in taus {
        let bound = augmented_radius_bound(p, a, k, dbar_c, t)?;
        rho_aug_bound_by_tau.insert(t, bound);
        rate_by_tau.insert(t, 1.0 - bound);
    }
    Ok(StabilityReport {
        rho_closed_loop,
        tau_star,
        rho_aug_bound_by_tau,
        rate_by_tau,
    })
}

const RESTART_BATCH: usize = 4;

#[derive(Clone, Debug)]
pub struct DesignOptions {
    /// Required distance of the achieved radius below 1.
    pub margin: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Scan cap for `τ*`.
    pub tau_max: usize,
    /// Delays at which the report lists bounds and rates.
    pub report_taus: Vec<usize>,
    /// Objective evaluations allowed per restart.
    pub max_evals: usize,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            margin: 0.01,
            restarts: 20,
            seed: 0,
            tau_max: 64,
            report_taus: (0..=10).collect(),
            max_evals: 10_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Design {
    pub gain: GainMatrix,
    pub report: StabilityReport,
    /// Value of the synthesis objective at the returned gain.
    pub objective: f64,
    /// Restart that produced the gain.
    pub restart: usize,
}

/// Block-diagonal gain with `ρ(Â) < 1 − margin`.
pub fn design_gain(net: &SensorNetwork, sys: &LtiSystem, opts: &DesignOptions) -> Result<Design> {
    design_gain_delay_tolerant(net, sys, 0, opts)
}

/// Block-diagonal gain with `ρ(Â_τ) < 1 − margin` for every `τ ≤ tau_1`,
/// which certifies `τ* ≥ tau_1`. `tau_1 = 0` is plain delay-free design.
pub fn design_gain_delay_tolerant(
    net: &SensorNetwork,
    sys: &LtiSystem,
    tau_1: usize,
    opts: &DesignOptions,
) -> Result<Design> {
    let verdict = is_structurally_observable_networked(net, sys)?;
    if !verdict.observable {
        return Err(Error::Precondition(format!(
            "networked pair is not certified observable: {}",
            verdict.reasons.join("; ")
        )));
    }
    let problem = SynthesisProblem::new(net.p(), sys, tau_1);
    let target = 1.0 - opts.margin;
    let restarts = opts.restarts.max(1);

    // Restarts run in fixed-size batches and stop after the first batch that
    // reaches the target, so the result does not depend on the thread count.
    let mut results: Vec<(usize, Vec<Vector>, f64)> = Vec::new();
    for batch in (0..restarts).collect::<Vec<_>>().chunks(RESTART_BATCH) {
        let found: Vec<(usize, Vec<Vector>, f64)> = batch
            .par_iter()
            .map(|&r| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ r as u64);
                let (gains, value) = problem.local_search(r, &mut rng, opts.max_evals, target);
                (r, gains, value)
            })
            .collect();
        results.extend(found);
        if results.iter().any(|x| x.2 < target) {
            break;
        }
    }
    // lowest objective, ties to the lowest restart index
    let (restart, gains, objective) = results
        .into_iter()
        .min_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)))
        .expect("at least one restart");

    if !(objective < target) {
        return Err(Error::SynthesisFailed {
            best_rho: objective,
            target,
            restarts,
        });
    }
    let gain = GainMatrix::from_innovation_gains(sys.c(), &gains)?;
    let dbar_c = sys.dbar_c();
    // independent re-verification on the assembled matrices
    for tau in 0..=tau_1 {
        let rho = spectral_radius(&closed_loop_delay_power(net.p(), sys.a(), &gain, &dbar_c, tau)?)?;
        if !(rho < target) {
            return Err(Error::SynthesisFailed {
                best_rho: rho,
                target,
                restarts,
            });
        }
    }
    let report = stability_report(net.p(), sys.a(), &gain, &dbar_c, &opts.report_taus, opts.tau_max)?;
    Ok(Design {
        gain,
        report,
        objective,
        restart,
    })
}

// Closed loops in the form `Â_τ = M_τ − Σ_i e_i g_i (C_i M_τ^{(i)})`, so a
// change to sensor i's gain only touches block row i.
struct SynthesisProblem {
    n: usize,
    n_sensors: usize,
    c: Matrix,
    /// `M_τ = P ⊗ A^{τ+1}` for `τ = 0..=tau_1`.
    propagations: Vec<Matrix>,
    /// `C_i M_τ^{(i)}` (1 x Nn) per τ, per sensor.
    measured_rows: Vec<Vec<Matrix>>,
}

impl SynthesisProblem {
    fn new(p: &Matrix, sys: &LtiSystem, tau_1: usize) -> Self {
        let (n, n_sensors) = (sys.n(), sys.n_sensors());
        let powers = powers_up_to(sys.a(), tau_1 + 1);
        let propagations: Vec<Matrix> = (0..=tau_1).map(|t| kron(p, &powers[t + 1])).collect();
        let measured_rows = propagations
            .iter()
            .map(|m| {
                (0..n_sensors)
                    .map(|i| sys.c_row(i) * m.rows(i * n, n))
                    .collect()
            })
            .collect();
        SynthesisProblem {
            n,
            n_sensors,
            c: sys.c().clone(),
            propagations,
            measured_rows,
        }
    }

    fn dim(&self) -> usize {
        self.n * self.n_sensors
    }

    fn closed_loop(&self, t: usize, theta: &[f64]) -> Matrix {
        let mut m = self.propagations[t].clone();
        for i in 0..self.n_sensors {
            let row = &self.measured_rows[t][i];
            for a in 0..self.n {
                let g = theta[i * self.n + a];
                if g != 0.0 {
                    let r = i * self.n + a;
                    for col in 0..row.ncols() {
                        m[(r, col)] -= g * row[(0, col)];
                    }
                }
            }
        }
        m
    }

    /// Worst radius over the delay family; `+inf` if the eigen-solver fails.
    /// Stops early once the running worst reaches `cutoff`.
    fn objective(&self, theta: &[f64], cutoff: f64) -> f64 {
        let mut worst: f64 = 0.0;
        // the longest delay is usually the binding one
        for t in (0..self.propagations.len()).rev() {
            match spectral_radius(&self.closed_loop(t, theta)) {
                Ok(rho) => worst = worst.max(rho),
                Err(_) => return f64::INFINITY,
            }
            if worst >= cutoff {
                break;
            }
        }
        worst
    }

    fn initial_point(&self, restart: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut theta = vec![0.0; self.dim()];
        for i in 0..self.n_sensors {
            let row = self.c.row(i);
            let norm2 = row.norm_squared().max(f64::MIN_POSITIVE);
            let alpha = if restart == 0 { 0.5 } else { rng.random_range(0.2..1.0) };
            for a in 0..self.n {
                theta[i * self.n + a] = alpha * row[a] / norm2;
                if restart > 0 {
                    let z: f64 = rng.sample(StandardNormal);
                    theta[i * self.n + a] += 0.3 * z;
                }
            }
        }
        theta
    }

    /// Compass search over the gain entries with random-direction probes and
    /// a shrinking step. Keeps refining past `target` for extra margin until
    /// the step is small, the budget is spent, or the margin is ample.
    fn local_search(&self, restart: usize, rng: &mut ChaCha8Rng, max_evals: usize, target: f64) -> (Vec<Vector>, f64) {
        let dim = self.dim();
        let mut theta = self.initial_point(restart, rng);
        let mut best = self.objective(&theta, f64::INFINITY);
        let mut evals = 1usize;
        let mut step = 0.25;
        let min_step = 1e-4;
        let mut order: Vec<usize> = (0..dim).collect();

        while step > min_step && evals < max_evals {
            let mut improved = false;
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
            for &coord in &order {
                for dir in [1.0, -1.0] {
                    let old = theta[coord];
                    theta[coord] = old + dir * step;
                    let value = self.objective(&theta, best);
                    evals += 1;
                    if value < best - 1e-12 {
                        best = value;
                        improved = true;
                        break;
                    }
                    theta[coord] = old;
                }
            }
            if !improved {
                // kinks of ρ defeat axis moves; probe random directions
                for _ in 0..dim {
                    let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d / norm).collect();
                    let value = self.objective(&trial, best);
                    evals += 1;
                    if value < best - 1e-12 {
                        best = value;
                        theta = trial;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
                if best < target && step < 1e-2 {
                    break;
                }
            } else if best < target - 0.3 {
                break;
            }
        }
        let gains = (0..self.n_sensors)
            .map(|i| Vector::from_column_slice(&theta[i * self.n..(i + 1) * self.n]))
            .collect();
        (gains, best)
    }
}
