//! Plant, sensor network and link-delay descriptions, plus seeded generators.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{ensure_valid, spectral_radius, Matrix, TOL};

/// Noise variance used when a generator is not told otherwise.
pub const DEFAULT_NOISE_VAR: f64 = 0.004;

/// `x_k = A x_{k-1} + ν_k`, `y^i_k = C_i x_k + ζ^i_k` with isotropic noise.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
    /// Row `i` is sensor `i`'s output row `C_i`.
    c: Matrix,
    q_var: f64,
    r_var: f64,
}

impl LtiSystem {
    pub fn new(a: Matrix, c: Matrix, q_var: f64, r_var: f64) -> Result<Self> {
        ensure_valid(&a)?;
        ensure_valid(&c)?;
        if !a.is_square() {
            return Err(Error::InvalidModel(format!(
                "dynamics matrix is {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if c.ncols() != a.nrows() {
            return Err(Error::InvalidModel(format!(
                "output rows have length {}, state dimension is {}",
                c.ncols(),
                a.nrows()
            )));
        }
        let det = a.determinant();
        if det.abs() <= TOL.det {
            return Err(Error::InvalidModel(format!(
                "dynamics matrix is singular (|det| = {:e})",
                det.abs()
            )));
        }
        for (name, v) in [("q_var", q_var), ("r_var", r_var)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidModel(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(LtiSystem { a, c, q_var, r_var })
    }

    pub fn with_noise(mut self, q_var: f64, r_var: f64) -> Result<Self> {
        self.q_var = q_var;
        self.r_var = r_var;
        LtiSystem::new(self.a, self.c, q_var, r_var)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_sensors(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    /// Stacked output matrix `C` (one row per sensor).
    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// `C_i` as a `1 x n` matrix.
    pub fn c_row(&self, i: usize) -> Matrix {
        self.c.rows(i, 1).into_owned()
    }

    pub fn q_var(&self) -> f64 {
        self.q_var
    }

    pub fn r_var(&self) -> f64 {
        self.r_var
    }

    /// `D_C = blockdiag(C_i)`, `N x Nn`.
    pub fn d_c(&self) -> Matrix {
        let (big_n, n) = (self.n_sensors(), self.n());
        let mut d = Matrix::zeros(big_n, big_n * n);
        for i in 0..big_n {
            d.view_mut((i, i * n), (1, n)).copy_from(&self.c.row(i));
        }
        d
    }

    /// `D̄_C = D_Cᵀ D_C = blockdiag(C_iᵀ C_i)`.
    pub fn dbar_c(&self) -> Matrix {
        let d = self.d_c();
        d.transpose() * d
    }
}

/// Directed sensor graph with its row-stochastic consensus weights.
///
/// `edges` holds `(j, i)` for every link carrying data from sensor `j` to
/// sensor `i`; `p[(i, j)] > 0` exactly on those links and on the diagonal
/// entries that carry a self-loop.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorNetwork {
    edges: BTreeSet<(usize, usize)>,
    p: Matrix,
}

impl SensorNetwork {
    /// Validates row-stochasticity and edge/weight consistency. Self-loops are
    /// not required here so that non-self-damped networks can be analyzed.
    pub fn new(edges: BTreeSet<(usize, usize)>, p: Matrix) -> Result<Self> {
        ensure_valid(&p)?;
        let n = p.nrows();
        if !p.is_square() {
            return Err(Error::InvalidModel(format!("weight matrix is {}x{}", n, p.ncols())));
        }
        for &(j, i) in &edges {
            if i >= n || j >= n {
                return Err(Error::InvalidModel(format!("edge {j} -> {i} outside {n} sensors")));
            }
            if i == j {
                return Err(Error::InvalidModel(format!("self-loop {i} listed as an edge")));
            }
        }
        for i in 0..n {
            let row_sum: f64 = p.row(i).sum();
            if (row_sum - 1.0).abs() > TOL.stochastic {
                return Err(Error::InvalidModel(format!("row {i} sums to {row_sum}")));
            }
            for j in 0..n {
                let w = p[(i, j)];
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::InvalidModel(format!("weight p[{i}][{j}] = {w} outside [0, 1]")));
                }
                if i != j && (w > 0.0) != edges.contains(&(j, i)) {
                    return Err(Error::InvalidModel(format!(
                        "weight p[{i}][{j}] = {w} disagrees with the edge set"
                    )));
                }
            }
        }
        Ok(SensorNetwork { edges, p })
    }

    /// Derives the edge set from the off-diagonal support of `p`.
    pub fn from_weights(p: Matrix) -> Result<Self> {
        let mut edges = BTreeSet::new();
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                if i != j && p[(i, j)] > 0.0 {
                    edges.insert((j, i));
                }
            }
        }
        SensorNetwork::new(edges, p)
    }

    pub fn n_sensors(&self) -> usize {
        self.p.nrows()
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    /// Senders `j` with a link `j -> i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(_, to)| to == i).map(|&(from, _)| from).collect()
    }

    pub fn out_neighbors(&self, j: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(from, _)| from == j).map(|&(_, to)| to).collect()
    }

    pub fn is_self_damped(&self) -> bool {
        (0..self.n_sensors()).all(|i| self.p[(i, i)] > 0.0)
    }

    pub fn is_strongly_connected(&self) -> bool {
        let n = self.n_sensors();
        let mut forward = vec![Vec::new(); n];
        let mut backward = vec![Vec::new(); n];
        for &(j, i) in &self.edges {
            forward[j].push(i);
            backward[i].push(j);
        }
        reaches_all(&forward, 0) && reaches_all(&backward, 0)
    }
}

fn reaches_all(adj: &[Vec<usize>], start: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Fixed integer delay `τ_ij` on every link `j -> i`, bounded by `τ̄`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelayProfile {
    /// Keyed by `(i, j)` = (receiver, sender).
    tau: BTreeMap<(usize, usize), usize>,
    tau_bar: usize,
}

impl DelayProfile {
    pub fn new(tau: BTreeMap<(usize, usize), usize>, tau_bar: usize) -> Result<Self> {
        for (&(i, j), &d) in &tau {
            if i == j && d != 0 {
                return Err(Error::InvalidModel(format!("self delay at sensor {i} must be 0, got {d}")));
            }
            if d > tau_bar {
                return Err(Error::InvalidModel(format!(
                    "delay {d} on link {j} -> {i} exceeds bound {tau_bar}"
                )));
            }
        }
        Ok(DelayProfile { tau, tau_bar })
    }

    /// Delay-free profile over the network's links.
    pub fn zero(net: &SensorNetwork) -> Self {
        DelayProfile {
            tau: net.edges().iter().map(|&(j, i)| ((i, j), 0)).collect(),
            tau_bar: 0,
        }
    }

    pub fn tau_bar(&self) -> usize {
        self.tau_bar
    }

    /// `τ_ij` for the link `j -> i`; self delays are always zero.
    pub fn delay(&self, i: usize, j: usize) -> Option<usize> {
        if i == j {
            return Some(0);
        }
        self.tau.get(&(i, j)).copied()
    }

    pub fn entries(&self) -> &BTreeMap<(usize, usize), usize> {
        &self.tau
    }

    pub fn max_delay(&self) -> usize {
        self.tau.values().copied().max().unwrap_or(0)
    }

    /// Same delays, larger buffer bound.
    pub fn with_tau_bar(&self, tau_bar: usize) -> Result<Self> {
        DelayProfile::new(self.tau.clone(), tau_bar)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelayMode {
    /// Every link delayed by exactly `τ̄`.
    Homogeneous(usize),
    /// Each link delayed by an independent uniform draw from `{0, ..., τ̄}`.
    HeterogeneousUniform(usize),
}

impl DelayMode {
    pub fn tau_bar(&self) -> usize {
        match *self {
            DelayMode::Homogeneous(t) | DelayMode::HeterogeneousUniform(t) => t,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            DelayMode::Homogeneous(t) => format!("homogeneous-tau{t}"),
            DelayMode::HeterogeneousUniform(t) => format!("heterogeneous-tau{t}"),
        }
    }
}

pub fn assign_delays(net: &SensorNetwork, mode: DelayMode, seed: u64) -> DelayProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = net
        .edges()
        .iter()
        .map(|&(j, i)| {
            let d = match mode {
                DelayMode::Homogeneous(t) => t,
                DelayMode::HeterogeneousUniform(t) => rng.random_range(0..=t),
            };
            ((i, j), d)
        })
        .collect();
    DelayProfile {
        tau,
        tau_bar: mode.tau_bar(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// Directed ring `0 -> 1 -> ... -> N-1 -> 0`.
    Cycle,
    /// Ring plus the given number of extra random directed links.
    CycleWithChords(usize),
}

/// Self-damped, strongly connected network with random row-stochastic weights.
///
/// Raw weights are drawn uniformly from `[0.1, 1)` on every self-loop and
/// in-link, then each row is normalized.
pub fn generate_network(n_sensors: usize, topology: Topology, seed: u64) -> Result<SensorNetwork> {
    if n_sensors == 0 {
        return Err(Error::Precondition("a network needs at least one sensor".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = BTreeSet::new();
    if n_sensors > 1 {
        for j in 0..n_sensors {
            edges.insert((j, (j + 1) % n_sensors));
        }
    }
    if let Topology::CycleWithChords(k) = topology {
        let mut candidates: Vec<(usize, usize)> = (0..n_sensors)
            .flat_map(|j| (0..n_sensors).map(move |i| (j, i)))
            .filter(|&(j, i)| j != i && !edges.contains(&(j, i)))
            .collect();
        candidates.shuffle(&mut rng);
        edges.extend(candidates.into_iter().take(k));
    }
    let mut p = Matrix::zeros(n_sensors, n_sensors);
    for i in 0..n_sensors {
        p[(i, i)] = rng.random_range(0.1..1.0);
    }
    for &(j, i) in &edges {
        p[(i, j)] = rng.random_range(0.1..1.0);
    }
    for i in 0..n_sensors {
        let s: f64 = p.row(i).sum();
        p.row_mut(i).iter_mut().for_each(|w| *w /= s);
    }
    SensorNetwork::new(edges, p)
}

/// Random self-damped plant with `blocks` irreducible diagonal blocks (up to a
/// state permutation), rescaled to `ρ(A) = target_rho`, and one sensor per
/// block observing the block's first state.
pub fn generate_system(n: usize, blocks: usize, target_rho: f64, seed: u64) -> Result<LtiSystem> {
    generate_system_with_sensors(n, blocks, blocks, target_rho, seed)
}

/// As [`generate_system`], with `n_sensors >= blocks`; sensors past the first
/// `blocks` observe a random state of a random block.
pub fn generate_system_with_sensors(
    n: usize,
    blocks: usize,
    n_sensors: usize,
    target_rho: f64,
    seed: u64,
) -> Result<LtiSystem> {
    if blocks == 0 || blocks > n {
        return Err(Error::InfeasiblePartition { n, blocks });
    }
    if n_sensors < blocks {
        return Err(Error::Precondition(format!(
            "{n_sensors} sensors cannot cover {blocks} irreducible blocks"
        )));
    }
    if !(target_rho.is_finite() && target_rho > 0.0) {
        return Err(Error::Precondition(format!("target spectral radius {target_rho} must be > 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let groups = random_partition(&mut rng, n, blocks);
        let mut a = Matrix::zeros(n, n);
        for group in &groups {
            fill_irreducible_block(&mut rng, &mut a, group);
        }
        let rho = spectral_radius(&a)?;
        if rho < 1e-9 {
            continue;
        }
        a *= target_rho / rho;
        if a.determinant().abs() <= TOL.det {
            continue;
        }
        let mut c = Matrix::zeros(n_sensors, n);
        for s in 0..n_sensors {
            let state = if s < blocks {
                groups[s][0]
            } else {
                let g = &groups[rng.random_range(0..blocks)];
                g[rng.random_range(0..g.len())]
            };
            c[(s, state)] = 1.0;
        }
        return LtiSystem::new(a, c, DEFAULT_NOISE_VAR, DEFAULT_NOISE_VAR);
    }
    Err(Error::InvalidModel("could not draw a full-rank system in 100 attempts".into()))
}

// Random composition of n into `blocks` nonempty groups over a shuffled state order.
fn random_partition(rng: &mut ChaCha8Rng, n: usize, blocks: usize) -> Vec<Vec<usize>> {
    let mut states: Vec<usize> = (0..n).collect();
    states.shuffle(rng);
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(blocks - 1).collect();
    cuts.sort_unstable();
    cuts.push(n);
    let mut groups = Vec::with_capacity(blocks);
    let mut start = 0;
    for end in cuts {
        groups.push(states[start..end].to_vec());
        start = end;
    }
    groups
}

fn signed_weight(rng: &mut ChaCha8Rng) -> f64 {
    let magnitude = rng.random_range(0.1..1.0);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

// Nonzero diagonal, a random Hamiltonian cycle (irreducibility) and sparse extra links.
fn fill_irreducible_block(rng: &mut ChaCha8Rng, a: &mut Matrix, group: &[usize]) {
    for &s in group {
        a[(s, s)] = signed_weight(rng);
    }
    if group.len() < 2 {
        return;
    }
    let mut order = group.to_vec();
    order.shuffle(rng);
    for k in 0..order.len() {
        let (from, to) = (order[k], order[(k + 1) % order.len()]);
        a[(to, from)] = signed_weight(rng);
    }
    for &i in group {
        for &j in group {
            if i != j && a[(i, j)] == 0.0 && rng.random_bool(0.3) {
                a[(i, j)] = signed_weight(rng);
            }
        }
    }
}
