//! Plant simulation and the distributed estimator, run two ways: as a
//! message-passing protocol with time-stamped delayed mailboxes and as the
//! centralized augmented recursion. The error recursion is a third, purely
//! linear, replay of the same run.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::augment::{build_augmented_pa, AugmentedOperator};
use crate::error::{Error, Result};
use crate::gain::GainMatrix;
use crate::linalg::{powers_up_to, Matrix, Vector};
use crate::model::{DelayProfile, LtiSystem, SensorNetwork};

/// One realization of `x_k = A x_{k−1} + ν_k`, `y^i_k = C_i x_k + ζ^i_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantTrace {
    /// `x_0..=x_T`.
    pub states: Vec<Vector>,
    /// `y_k` stacked over sensors, `k = 0..=T`.
    pub outputs: Vec<Vector>,
    /// `ν_k`; entry 0 is zero.
    pub process_noise: Vec<Vector>,
    /// `ζ_k` stacked over sensors.
    pub measurement_noise: Vec<Vector>,
    pub noise_seed: u64,
}

impl PlantTrace {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }
}

fn gaussian(var: f64, len: usize, rng: &mut ChaCha8Rng) -> Vector {
    if var == 0.0 {
        return Vector::zeros(len);
    }
    let dist = Normal::new(0.0, var.sqrt()).expect("variance validated by LtiSystem");
    Vector::from_iterator(len, (0..len).map(|_| dist.sample(rng)))
}

/// Process and measurement noise come from two streams of one seeded
/// generator, so changing the horizon never reshuffles earlier draws.
pub fn simulate_plant(sys: &LtiSystem, x0: &Vector, horizon: usize, seed: u64) -> Result<PlantTrace> {
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    if x0.len() != sys.n() {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), sys.n())));
    }
    let mut nu_rng = ChaCha8Rng::seed_from_u64(seed);
    nu_rng.set_stream(0);
    let mut zeta_rng = ChaCha8Rng::seed_from_u64(seed);
    zeta_rng.set_stream(1);

    let n_sensors = sys.n_sensors();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut outputs = Vec::with_capacity(horizon + 1);
    let mut process_noise = Vec::with_capacity(horizon + 1);
    let mut measurement_noise = Vec::with_capacity(horizon + 1);

    let zeta0 = gaussian(sys.r_var(), n_sensors, &mut zeta_rng);
    outputs.push(sys.c() * x0 + &zeta0);
    states.push(x0.clone());
    process_noise.push(Vector::zeros(sys.n()));
    measurement_noise.push(zeta0);
    for k in 1..=horizon {
        let nu = gaussian(sys.q_var(), sys.n(), &mut nu_rng);
        let zeta = gaussian(sys.r_var(), n_sensors, &mut zeta_rng);
        let x = sys.a() * &states[k - 1] + &nu;
        outputs.push(sys.c() * &x + &zeta);
        states.push(x);
        process_noise.push(nu);
        measurement_noise.push(zeta);
    }
    Ok(PlantTrace {
        states,
        outputs,
        process_noise,
        measurement_noise,
        noise_seed: seed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub sender: usize,
    pub send_time: usize,
    pub receive_time: usize,
    pub posterior: Vector,
}

#[derive(Clone, Debug)]
pub struct SensorState {
    /// `x̂^i_{k−r|k−r}` for `r = 0..=τ̄`, newest first; zero before time 0.
    pub posterior_history: VecDeque<Vector>,
    pub mailbox: Vec<Message>,
}

impl SensorState {
    fn new(n: usize, tau_bar: usize) -> Self {
        SensorState {
            posterior_history: (0..=tau_bar).map(|_| Vector::zeros(n)).collect(),
            mailbox: Vec::new(),
        }
    }

    fn push_posterior(&mut self, x: Vector) {
        self.posterior_history.pop_back();
        self.posterior_history.push_front(x);
    }

    fn latest(&self) -> &Vector {
        &self.posterior_history[0]
    }
}

/// `x̂^i_{k|k−1}`: own term `p_ii A x̂^i_{k−1}` plus, per in-neighbor `j`, the
/// message that arrived at `k − 1` propagated by `A^{τ_ij+1}`. A message that
/// would have been sent before time 0 counts as the zero vector.
pub fn step_prior(
    i: usize,
    k: usize,
    net: &SensorNetwork,
    delays: &DelayProfile,
    a_powers: &[Matrix],
    states: &[SensorState],
) -> Result<Vector> {
    let p = net.p();
    let mut prior = &a_powers[1] * states[i].latest() * p[(i, i)];
    for j in net.in_neighbors(i) {
        if j == i {
            continue;
        }
        let tau = delays.delay(i, j).ok_or(Error::MissingDelay { from: j, to: i })?;
        if tau + 1 > k {
            continue;
        }
        let send_time = k - 1 - tau;
        let msg = states[i]
            .mailbox
            .iter()
            .find(|m| m.sender == j && m.send_time == send_time);
        if let Some(m) = msg {
            debug_assert_eq!(m.receive_time, send_time + tau);
            prior += &a_powers[tau + 1] * &m.posterior * p[(i, j)];
        }
    }
    Ok(prior)
}

/// `x̂^i_{k|k} = prior + K_i C_iᵀ (y − C_i prior)`.
pub fn step_posterior(i: usize, prior: &Vector, y_ik: f64, sys: &LtiSystem, gain: &GainMatrix) -> Vector {
    let c_row = sys.c().row(i);
    let innovation = y_ik - c_row.dot(&prior.transpose());
    let g = gain.block(i) * c_row.transpose();
    prior + g * innovation
}

/// Per-step, per-sensor estimates, `k = 0..=T`, indexed `[k][i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateTrace {
    pub posteriors: Vec<Vec<Vector>>,
    pub priors: Vec<Vec<Vector>>,
    /// `x_k − x̂^i_{k|k}`.
    pub errors: Vec<Vec<Vector>>,
}

impl EstimateTrace {
    fn new(n_sensors: usize, n: usize, plant: &PlantTrace) -> Self {
        let zero = vec![Vector::zeros(n); n_sensors];
        EstimateTrace {
            posteriors: vec![zero.clone()],
            priors: vec![zero],
            errors: vec![vec![plant.states[0].clone(); n_sensors]],
        }
    }

    fn push(&mut self, priors: Vec<Vector>, posteriors: Vec<Vector>, x: &Vector) {
        self.errors.push(posteriors.iter().map(|p| x - p).collect());
        self.priors.push(priors);
        self.posteriors.push(posteriors);
    }

    pub fn horizon(&self) -> usize {
        self.posteriors.len() - 1
    }

    /// `max_i ‖e^i_k‖` per step.
    pub fn max_error_norms(&self) -> Vec<f64> {
        self.errors
            .iter()
            .map(|es| es.iter().map(|e| e.norm()).fold(0.0, f64::max))
            .collect()
    }
}

fn check_inputs(sys: &LtiSystem, net: &SensorNetwork, gain: &GainMatrix, plant: &PlantTrace) -> Result<()> {
    if net.n_sensors() != sys.n_sensors() || gain.n_sensors() != sys.n_sensors() {
        return Err(Error::Dimension(format!(
            "sensor counts disagree: network {}, outputs {}, gain {}",
            net.n_sensors(),
            sys.n_sensors(),
            gain.n_sensors()
        )));
    }
    if gain.block_dim() != sys.n() {
        return Err(Error::Dimension(format!(
            "gain blocks are {0}x{0}, state dimension is {1}",
            gain.block_dim(),
            sys.n()
        )));
    }
    if plant.states.first().map(|x| x.len()) != Some(sys.n()) || plant.outputs[0].len() != sys.n_sensors() {
        return Err(Error::Dimension("plant trace does not match the system".into()));
    }
    Ok(())
}

/// Synchronous rounds: at step `k` every sensor forms its prior from what
/// arrived by `k − 1`, corrects it with its own output, then sends the new
/// posterior to each out-neighbor for delivery at `k + τ_ij`.
pub fn run_distributed(
    sys: &LtiSystem,
    net: &SensorNetwork,
    delays: &DelayProfile,
    gain: &GainMatrix,
    plant: &PlantTrace,
) -> Result<EstimateTrace> {
    check_inputs(sys, net, gain, plant)?;
    let (n, n_sensors) = (sys.n(), sys.n_sensors());
    let a_powers = powers_up_to(sys.a(), delays.tau_bar() + 1);
    let mut states: Vec<SensorState> = (0..n_sensors).map(|_| SensorState::new(n, delays.tau_bar())).collect();
    let mut trace = EstimateTrace::new(n_sensors, n, plant);
    broadcast(net, delays, &mut states, 0)?;

    for k in 1..=plant.horizon() {
        let mut priors = Vec::with_capacity(n_sensors);
        let mut posteriors = Vec::with_capacity(n_sensors);
        for i in 0..n_sensors {
            let prior = step_prior(i, k, net, delays, &a_powers, &states)?;
            posteriors.push(step_posterior(i, &prior, plant.outputs[k][i], sys, gain));
            priors.push(prior);
        }
        for (state, post) in states.iter_mut().zip(&posteriors) {
            state.push_posterior(post.clone());
            // everything delivered at k − 1 has now been consumed
            state.mailbox.retain(|m| m.receive_time >= k);
        }
        broadcast(net, delays, &mut states, k)?;
        trace.push(priors, posteriors, &plant.states[k]);
    }
    Ok(trace)
}

fn broadcast(net: &SensorNetwork, delays: &DelayProfile, states: &mut [SensorState], k: usize) -> Result<()> {
    for j in 0..states.len() {
        let posterior = states[j].latest().clone();
        for i in net.out_neighbors(j) {
            if i == j {
                continue;
            }
            let tau = delays.delay(i, j).ok_or(Error::MissingDelay { from: j, to: i })?;
            states[i].mailbox.push(Message {
                sender: j,
                send_time: k,
                receive_time: k + tau,
                posterior: posterior.clone(),
            });
        }
    }
    Ok(())
}

/// The same estimator as one recursion on the stacked posterior history:
/// `X ← PA-bar X`, then slice 1 gets `K D_Cᵀ (y − D_C · slice 1)`.
pub fn run_augmented(
    sys: &LtiSystem,
    net: &SensorNetwork,
    delays: &DelayProfile,
    gain: &GainMatrix,
    plant: &PlantTrace,
) -> Result<EstimateTrace> {
    check_inputs(sys, net, gain, plant)?;
    let (n, n_sensors) = (sys.n(), sys.n_sensors());
    let pa_bar = build_augmented_pa(net.p(), sys.a(), delays)?;
    let base = pa_bar.base_dim;
    let d_c = sys.d_c();
    let innovation_gain = gain.assembled() * d_c.transpose();
    let mut x_aug = Vector::zeros(pa_bar.dim());
    let mut trace = EstimateTrace::new(n_sensors, n, plant);

    for k in 1..=plant.horizon() {
        x_aug = &pa_bar.matrix * &x_aug;
        let prior = x_aug.rows(0, base).into_owned();
        let correction = &innovation_gain * (&plant.outputs[k] - &d_c * &prior);
        let mut slice = x_aug.rows_mut(0, base);
        slice += &correction;
        let posterior = x_aug.rows(0, base).into_owned();
        trace.push(split(&prior, n), split(&posterior, n), &plant.states[k]);
    }
    Ok(trace)
}

fn split(v: &Vector, n: usize) -> Vec<Vector> {
    (0..v.len() / n).map(|i| v.rows(i * n, n).into_owned()).collect()
}

/// `(1_N ⊗ x_{k−r})` stacked over `r = 0..=τ̄`. Pre-time-0 states are
/// back-propagated, `x_{−s} = A^{−s} x_0`, so the warm-up adds no spurious
/// noise terms.
pub fn true_augmented_state(sys: &LtiSystem, plant: &PlantTrace, tau_bar: usize, k: usize) -> Result<Vector> {
    let a_inv = sys
        .a()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidMatrix("dynamics matrix is not invertible".into()))?;
    let (n, n_sensors) = (sys.n(), sys.n_sensors());
    let base = n * n_sensors;
    let mut out = Vector::zeros(base * (tau_bar + 1));
    for r in 0..=tau_bar {
        let x = if r <= k {
            plant.states[k - r].clone()
        } else {
            let mut x = plant.states[0].clone();
            for _ in 0..(r - k) {
                x = &a_inv * x;
            }
            x
        };
        for i in 0..n_sensors {
            out.rows_mut(r * base + i * n, n).copy_from(&x);
        }
    }
    Ok(out)
}

/// `e̲_k = x̲_k − x̲̂_{k|k}` with the stacked all-zero initial estimate.
pub fn initial_augmented_error(sys: &LtiSystem, plant: &PlantTrace, tau_bar: usize) -> Result<Vector> {
    true_augmented_state(sys, plant, tau_bar, 0)
}

/// `η_k = b_1 ⊗ (w_k − K D̄_C w_k − K D_Cᵀ ζ_k)` with
/// `w_k = 1_N ⊗ x_k − Ξ_1 PA-bar x̲_{k−1}`, for `k = 1..=T` (entry 0 is zero).
/// Without delays `w_k = 1_N ⊗ ν_k`.
pub fn augmented_noise_terms(
    sys: &LtiSystem,
    net: &SensorNetwork,
    delays: &DelayProfile,
    gain: &GainMatrix,
    plant: &PlantTrace,
) -> Result<Vec<Vector>> {
    let pa_bar = build_augmented_pa(net.p(), sys.a(), delays)?;
    noise_terms_for(sys, &pa_bar, gain, plant)
}

fn noise_terms_for(sys: &LtiSystem, pa_bar: &AugmentedOperator, gain: &GainMatrix, plant: &PlantTrace) -> Result<Vec<Vector>> {
    let base = pa_bar.base_dim;
    let k_mat = gain.assembled();
    let kd = &k_mat * sys.dbar_c();
    let kdt = &k_mat * sys.d_c().transpose();
    let first_row = pa_bar.first_block_row();
    let mut out = vec![Vector::zeros(pa_bar.dim())];
    let mut prev = true_augmented_state(sys, plant, pa_bar.tau_bar, 0)?;
    for k in 1..=plant.horizon() {
        let current = true_augmented_state(sys, plant, pa_bar.tau_bar, k)?;
        let w = current.rows(0, base) - &first_row * &prev;
        let eta1 = &w - &kd * &w - &kdt * &plant.measurement_noise[k];
        let mut eta = Vector::zeros(pa_bar.dim());
        eta.rows_mut(0, base).copy_from(&eta1);
        out.push(eta);
        prev = current;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRecursion {
    /// `e_0..=e_T`.
    pub errors: Vec<Vector>,
}

impl ErrorRecursion {
    pub fn norms(&self) -> Vec<f64> {
        self.errors.iter().map(|e| e.norm()).collect()
    }
}

/// `e_k = closed_loop · e_{k−1} + η_k`; `noise_terms[k]` is `η_k` (entry 0
/// unused). `None` runs the noise-free recursion.
pub fn run_error_recursion(
    closed_loop: &Matrix,
    e0: &Vector,
    noise_terms: Option<&[Vector]>,
    horizon: usize,
) -> Result<ErrorRecursion> {
    let dim = closed_loop.nrows();
    if !closed_loop.is_square() || e0.len() != dim {
        return Err(Error::Dimension(format!(
            "closed loop {}x{} with initial error of length {}",
            closed_loop.nrows(),
            closed_loop.ncols(),
            e0.len()
        )));
    }
    if let Some(eta) = noise_terms {
        if eta.len() <= horizon || eta.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension(format!(
                "need {} noise terms of length {dim}",
                horizon + 1
            )));
        }
    }
    let mut errors = Vec::with_capacity(horizon + 1);
    errors.push(e0.clone());
    for k in 1..=horizon {
        let mut e = closed_loop * &errors[k - 1];
        if let Some(eta) = noise_terms {
            e += &eta[k];
        }
        errors.push(e);
    }
    Ok(ErrorRecursion { errors })
}
