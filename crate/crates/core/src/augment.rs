//! Delay-augmented operators.
//!
//! A delayed recursion over `τ̄ + 1` time slices is embedded into a delay-free
//! one on the stacked history `(z_k; z_{k-1}; ...; z_{k-τ̄})`, newest slice
//! first. All operators are row augmented: the first block row carries the
//! delay-split weights and the identity shift register sits below it.

use crate::error::{Error, Result};
use crate::linalg::{kron, powers_up_to, spectral_radius, Matrix, Vector, TOL};
use crate::model::DelayProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugmentKind {
    /// `[P_0 P_1 ... P_τ̄]` over identity shifts.
    Plain,
    /// `[P_0 ⊗ A, P_1 ⊗ A², ..., P_τ̄ ⊗ A^{τ̄+1}]` over identity shifts.
    ModifiedKron,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedOperator {
    pub base_dim: usize,
    pub tau_bar: usize,
    pub matrix: Matrix,
    pub kind: AugmentKind,
}

impl AugmentedOperator {
    pub fn slots(&self) -> usize {
        self.tau_bar + 1
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The first block row, `base_dim x base_dim (τ̄ + 1)`.
    pub fn first_block_row(&self) -> Matrix {
        self.matrix.rows(0, self.base_dim).into_owned()
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.matrix)
    }
}

/// `P_r(i, j) = p_ij` when `τ_ij = r`, zero otherwise, for `r = 0..=τ̄`.
/// Diagonal weights always land in `P_0`.
pub fn split_by_delay(p: &Matrix, delays: &DelayProfile) -> Result<Vec<Matrix>> {
    if !p.is_square() {
        return Err(Error::Dimension(format!("weights are {}x{}", p.nrows(), p.ncols())));
    }
    let n = p.nrows();
    let mut slices = vec![Matrix::zeros(n, n); delays.tau_bar() + 1];
    for i in 0..n {
        for j in 0..n {
            let w = p[(i, j)];
            if w == 0.0 {
                continue;
            }
            let r = delays
                .delay(i, j)
                .ok_or(Error::MissingDelay { from: j, to: i })?;
            if r > delays.tau_bar() {
                return Err(Error::InvalidModel(format!(
                    "delay {r} on link {j} -> {i} exceeds bound {}",
                    delays.tau_bar()
                )));
            }
            slices[r][(i, j)] = w;
        }
    }
    Ok(slices)
}

/// Stacks `first_row` (blocks of `base_dim` rows) over identity shift blocks.
fn shift_register(first_row: &[Matrix], base_dim: usize) -> Matrix {
    let slots = first_row.len();
    let dim = base_dim * slots;
    let mut m = Matrix::zeros(dim, dim);
    for (r, block) in first_row.iter().enumerate() {
        m.view_mut((0, r * base_dim), (base_dim, base_dim)).copy_from(block);
    }
    for r in 1..slots {
        m.view_mut((r * base_dim, (r - 1) * base_dim), (base_dim, base_dim))
            .fill_with_identity();
    }
    m
}

pub fn build_augmented(p: &Matrix, delays: &DelayProfile) -> Result<AugmentedOperator> {
    let slices = split_by_delay(p, delays)?;
    Ok(AugmentedOperator {
        base_dim: p.nrows(),
        tau_bar: delays.tau_bar(),
        matrix: shift_register(&slices, p.nrows()),
        kind: AugmentKind::Plain,
    })
}

/// First block row `P_r ⊗ A^{r+1}`: a slice `r` steps old is propagated
/// `r + 1` steps forward through the dynamics.
pub fn build_augmented_pa(p: &Matrix, a: &Matrix, delays: &DelayProfile) -> Result<AugmentedOperator> {
    let slices = split_by_delay(p, delays)?;
    let powers = powers_up_to(a, delays.tau_bar() + 1);
    let first_row: Vec<Matrix> = slices
        .iter()
        .enumerate()
        .map(|(r, pr)| kron(pr, &powers[r + 1]))
        .collect();
    let base_dim = p.nrows() * a.nrows();
    Ok(AugmentedOperator {
        base_dim,
        tau_bar: delays.tau_bar(),
        matrix: shift_register(&first_row, base_dim),
        kind: AugmentKind::ModifiedKron,
    })
}

/// Modified augmentation where every weight, self-loops included, is delayed
/// by `τ̄`: first block row `[0, ..., 0, P ⊗ A^{τ̄+1}]`.
pub fn build_augmented_pa_all_delayed(p: &Matrix, a: &Matrix, tau_bar: usize) -> AugmentedOperator {
    let base_dim = p.nrows() * a.nrows();
    let mut first_row = vec![Matrix::zeros(base_dim, base_dim); tau_bar + 1];
    first_row[tau_bar] = kron(p, &powers_up_to(a, tau_bar + 1)[tau_bar + 1]);
    AugmentedOperator {
        base_dim,
        tau_bar,
        matrix: shift_register(&first_row, base_dim),
        kind: AugmentKind::ModifiedKron,
    }
}

/// How the entries of a matrix are delayed in [`verify_delayed_radius_bound`].
#[derive(Clone, Debug)]
pub enum EntryDelays {
    /// Every entry, diagonal included, delayed by the same amount.
    Uniform(usize),
    /// Per-entry delays; diagonal entries undelayed.
    Profile(DelayProfile),
}

#[derive(Clone, Debug)]
pub struct DelayedBoundReport {
    pub rho: f64,
    pub rho_augmented: f64,
    /// `ρ(A)^{1/(τ̄+1)}`.
    pub bound: f64,
    pub equality_expected: bool,
    pub passed: bool,
}

/// Checks `ρ(Ā) ≤ ρ(A)^{1/(τ̄+1)}` for the plain augmentation of a stable
/// `a`, with equality when every entry carries the same delay `τ̄`.
///
/// The bound is guaranteed for entrywise nonnegative `a`; with mixed signs
/// and per-entry delays it can fail, and the report says so.
pub fn verify_delayed_radius_bound(a: &Matrix, delays: &EntryDelays) -> Result<DelayedBoundReport> {
    let rho = spectral_radius(a)?;
    if rho >= 1.0 {
        return Err(Error::Precondition(format!("ρ(A) = {rho} is not below 1")));
    }
    let n = a.nrows();
    let (aug, tau_bar, equality_expected) = match delays {
        EntryDelays::Uniform(t) => {
            let mut first_row = vec![Matrix::zeros(n, n); t + 1];
            first_row[*t] = a.clone();
            (shift_register(&first_row, n), *t, true)
        }
        EntryDelays::Profile(profile) => {
            let op = build_augmented(a, profile)?;
            (op.matrix, profile.tau_bar(), false)
        }
    };
    let rho_augmented = spectral_radius(&aug)?;
    let bound = rho.powf(1.0 / (tau_bar as f64 + 1.0));
    let within = rho_augmented <= bound + TOL.rel;
    let equal = (rho_augmented - bound).abs() <= TOL.rel;
    Ok(DelayedBoundReport {
        rho,
        rho_augmented,
        bound,
        equality_expected,
        passed: within && (!equality_expected || equal),
    })
}

/// Ξ^m_{slot,τ̄}: picks slice `slot` (1-based, newest first) of a stacked vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selector {
    pub slot: usize,
    pub slice_dim: usize,
}

impl Selector {
    pub fn new(slot: usize, slice_dim: usize, slots: usize) -> Result<Self> {
        if slot == 0 || slot > slots {
            return Err(Error::SlotOutOfRange { slot, slots });
        }
        Ok(Selector { slot, slice_dim })
    }

    pub fn apply(&self, v: &Vector) -> Result<Vector> {
        select_slice(v, self.slot, self.slice_dim)
    }

    /// Dense `m x slots·m` form `(b_slot ⊗ I_m)ᵀ`.
    pub fn matrix(&self, slots: usize) -> Matrix {
        kron(&unit_vector(slots, self.slot).transpose(), &Matrix::identity(self.slice_dim, self.slice_dim))
    }
}

/// `b^len_i` as a column matrix (1-based `i`).
pub fn unit_vector(len: usize, i: usize) -> Matrix {
    let mut b = Matrix::zeros(len, 1);
    b[(i - 1, 0)] = 1.0;
    b
}

pub fn select_slice(v: &Vector, slot: usize, slice_dim: usize) -> Result<Vector> {
    if slice_dim == 0 || v.len() % slice_dim != 0 {
        return Err(Error::Dimension(format!(
            "vector of length {} is not a stack of {slice_dim}-slices",
            v.len()
        )));
    }
    let slots = v.len() / slice_dim;
    if slot == 0 || slot > slots {
        return Err(Error::SlotOutOfRange { slot, slots });
    }
    Ok(v.rows((slot - 1) * slice_dim, slice_dim).into_owned())
}
