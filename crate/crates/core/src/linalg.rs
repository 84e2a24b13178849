//! Dense real-matrix kernels: Kronecker products, eigenvalues, block layouts.
//!
//! The eigenvalue routine is a balanced Householder-Hessenberg reduction followed
//! by the implicit double-shift QR iteration. It only computes eigenvalues; every
//! stability question in this crate reduces to a spectral radius.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Shared numerical tolerances. Tests and acceptance checks read from here.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
    /// Row-sum slack for stochastic matrices.
    pub stochastic: f64,
    /// Minimum |det(A)| accepted for a full-rank dynamics matrix.
    pub det: f64,
    /// Multiset match for the shift-register characteristic-polynomial check.
    pub shift_spectrum: f64,
    /// Agreement between the message-passing and augmented estimators.
    pub dual_path: f64,
}

pub const TOL: Tolerances = Tolerances {
    abs: 1e-10,
    rel: 1e-8,
    stochastic: 1e-12,
    det: 1e-10,
    shift_spectrum: 1e-6,
    dual_path: 1e-10,
};

/// Builds a matrix from row-major data, rejecting empty shapes and non-finite entries.
pub fn matrix_from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidMatrix(format!("empty shape {rows}x{cols}")));
    }
    if data.len() != rows * cols {
        return Err(Error::InvalidMatrix(format!(
            "{} entries for a {rows}x{cols} matrix",
            data.len()
        )));
    }
    let m = Matrix::from_row_slice(rows, cols, data);
    ensure_valid(&m)?;
    Ok(m)
}

pub fn ensure_valid(m: &Matrix) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidMatrix(format!(
            "empty shape {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(pos) = m.iter().position(|x| !x.is_finite()) {
        // column-major storage
        let (r, c) = (pos % m.nrows(), pos / m.nrows());
        return Err(Error::InvalidMatrix(format!("non-finite entry at ({r}, {c})")));
    }
    Ok(())
}

fn ensure_square(m: &Matrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Row-major copy of the entries.
pub fn row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter().copied());
    }
    out
}

/// Kronecker product; block (i, j) of the result is `a[(i, j)] * b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (p, q) = b.shape();
    let mut out = Matrix::zeros(a.nrows() * p, a.ncols() * q);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let s = a[(i, j)];
            if s != 0.0 {
                out.view_mut((i * p, j * q), (p, q)).copy_from(&(b * s));
            }
        }
    }
    out
}

/// `m^k`, with `m^0 = I`.
pub fn matrix_power(m: &Matrix, k: usize) -> Matrix {
    assert!(m.is_square(), "matrix_power needs a square matrix");
    let mut result = Matrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `[m^0, m^1, ..., m^max]`, computed by repeated multiplication.
pub fn powers_up_to(m: &Matrix, max: usize) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(max + 1);
    out.push(Matrix::identity(m.nrows(), m.ncols()));
    for k in 1..=max {
        let next = &out[k - 1] * m;
        out.push(next);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub spectral_radius: f64,
}

pub fn eigenvalues(m: &Matrix) -> Result<Spectrum> {
    ensure_square(m)?;
    let n = m.nrows();
    let mut a = Dense::from_matrix(m);
    let (low, high) = balance(&mut a);
    hessenberg(&mut a, low, high);
    let eigenvalues = hqr(&mut a, 100 * n.max(1))?;
    let spectral_radius = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(Spectrum {
        eigenvalues,
        spectral_radius,
    })
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.spectral_radius)
}

// Row-major scratch copy; the QR sweeps are row oriented.
struct Dense {
    n: usize,
    data: Vec<f64>,
}

impl Dense {
    fn from_matrix(m: &Matrix) -> Self {
        Dense {
            n: m.nrows(),
            data: row_major(m),
        }
    }

    #[inline(always)]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    // swap rows and columns j and m (the similarity keeps the spectrum)
    fn exchange(&mut self, j: usize, m: usize, low: usize, high: usize) {
        if j == m {
            return;
        }
        for i in 0..=high {
            self.data.swap(i * self.n + j, i * self.n + m);
        }
        for i in low..self.n {
            self.data.swap(j * self.n + i, m * self.n + i);
        }
    }

    #[inline(always)]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

// Permutes rows/columns that isolate eigenvalues to the borders, then applies
// Parlett-Reinsch radix-2 scaling to the remaining block. Returns the active
// range `low..=high`; outside it the matrix is already triangular.
fn balance(a: &mut Dense) -> (usize, usize) {
    const RADIX: f64 = 2.0;
    const SQRDX: f64 = RADIX * RADIX;
    let n = a.n;
    if n == 0 {
        return (0, 0);
    }
    let (mut low, mut high) = (0usize, n - 1);

    // rows with an empty off-diagonal part go to the bottom
    loop {
        let isolated = (0..=high)
            .rev()
            .find(|&j| (0..=high).all(|i| i == j || a.at(j, i) == 0.0));
        match isolated {
            Some(j) => {
                a.exchange(j, high, low, high);
                if high == 0 {
                    return (0, 0);
                }
                high -= 1;
            }
            None => break,
        }
    }
    // columns with an empty off-diagonal part go to the left
    loop {
        let isolated = (low..=high).find(|&j| (low..=high).all(|i| i == j || a.at(i, j) == 0.0));
        match isolated {
            Some(j) => {
                a.exchange(j, low, low, high);
                low += 1;
                if low > high {
                    return (high, high);
                }
            }
            None => break,
        }
    }

    let mut done = false;
    while !done {
        done = true;
        for i in low..=high {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in low..=high {
                if j != i {
                    c += a.at(j, i).abs();
                    r += a.at(i, j).abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= SQRDX;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= SQRDX;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in low..n {
                        *a.at_mut(i, j) *= g;
                    }
                    for j in 0..=high {
                        *a.at_mut(j, i) *= f;
                    }
                }
            }
        }
    }
    (low, high)
}

// Householder reduction of rows/columns `low..=high` to upper Hessenberg form.
fn hessenberg(a: &mut Dense, low: usize, high: usize) {
    let n = a.n;
    if high < low + 2 {
        return;
    }
    let mut ort = vec![0.0; n];
    for m in low + 1..high {
        let scale: f64 = (m..=high).map(|i| a.at(i, m - 1).abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut h = 0.0;
        for i in (m..=high).rev() {
            ort[i] = a.at(i, m - 1) / scale;
            h += ort[i] * ort[i];
        }
        let mut g = h.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        h -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * a.at(i, j);
            }
            f /= h;
            for i in m..=high {
                *a.at_mut(i, j) -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * a.at(i, j);
            }
            f /= h;
            for j in m..=high {
                *a.at_mut(i, j) -= f * ort[j];
            }
        }
        *a.at_mut(m, m - 1) = scale * g;
        for i in m + 1..=high {
            *a.at_mut(i, m - 1) = 0.0;
        }
    }
}

// Implicit double-shift QR on an upper Hessenberg matrix; eigenvalues only.
// `cap` bounds the total number of QR sweeps.
fn hqr(a: &mut Dense, cap: usize) -> Result<Vec<Complex64>> {
    let n = a.n;
    let eps = f64::EPSILON;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if n == 0 {
        return Ok(out);
    }
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a.at(i, j).abs();
        }
    }
    let sign = |x: f64, s: f64| if s >= 0.0 { x.abs() } else { -x.abs() };

    let mut total_its = 0usize;
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let nu = nn as usize;
        let mut its = 0;
        loop {
            // find a negligible subdiagonal element
            let mut l = nu;
            while l > 0 {
                let mut s = a.at(l - 1, l - 1).abs() + a.at(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a.at(l, l - 1).abs() <= eps * s {
                    *a.at_mut(l, l - 1) = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a.at(nu, nu);
            if l == nu {
                out[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = a.at(nu - 1, nu - 1);
            let mut w = a.at(nu, nu - 1) * a.at(nu - 1, nu);
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    out[nu - 1] = Complex64::new(x + z, 0.0);
                    out[nu] = if z != 0.0 {
                        Complex64::new(x - w / z, 0.0)
                    } else {
                        Complex64::new(x + z, 0.0)
                    };
                } else {
                    out[nu - 1] = Complex64::new(x + p, -z);
                    out[nu] = Complex64::new(x + p, z);
                }
                nn -= 2;
                break;
            }
            if total_its >= cap {
                return Err(Error::EigenNoConvergence { dim: n, cap });
            }
            if its == 10 || its == 20 {
                // exceptional shift
                t += x;
                for i in 0..=nu {
                    *a.at_mut(i, i) -= x;
                }
                let s = a.at(nu, nu - 1).abs() + a.at(nu - 1, nu - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total_its += 1;

            // two consecutive small subdiagonal elements
            let (mut p, mut q, mut r);
            let mut m = nu - 2;
            loop {
                let z = a.at(m, m);
                let rr = x - z;
                let s = y - z;
                p = (rr * s - w) / a.at(m + 1, m) + a.at(m, m + 1);
                q = a.at(m + 1, m + 1) - z - rr - s;
                r = a.at(m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a.at(m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (a.at(m - 1, m - 1).abs() + z.abs() + a.at(m + 1, m + 1).abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m..nu - 1 {
                *a.at_mut(i + 2, i) = 0.0;
                if i != m {
                    *a.at_mut(i + 2, i - 1) = 0.0;
                }
            }
            // double QR sweep over rows/columns m..=nu
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a.at(k, k - 1);
                    q = a.at(k + 1, k - 1);
                    r = if k + 1 != nu { a.at(k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            *a.at_mut(k, k - 1) = -a.at(k, k - 1);
                        }
                    } else {
                        *a.at_mut(k, k - 1) = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a.at(k, j) + q * a.at(k + 1, j);
                        if k + 1 != nu {
                            pp += r * a.at(k + 2, j);
                            *a.at_mut(k + 2, j) -= pp * z;
                        }
                        *a.at_mut(k + 1, j) -= pp * y;
                        *a.at_mut(k, j) -= pp * x;
                    }
                    let mmin = nu.min(k + 3);
                    for i in l..=mmin {
                        let mut pp = x * a.at(i, k) + y * a.at(i, k + 1);
                        if k + 1 != nu {
                            pp += z * a.at(i, k + 2);
                            *a.at_mut(i, k + 2) -= pp * r;
                        }
                        *a.at_mut(i, k + 1) -= pp * q;
                        *a.at_mut(i, k) -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(out)
}

/// Largest distance in an optimal-ish pairing of two eigenvalue multisets.
///
/// Pairs are taken greedily by increasing distance over all candidate pairs,
/// which is exact whenever the two sets agree to within half their minimum
/// separation. Returns `f64::INFINITY` when the sizes differ.
pub fn multiset_mismatch(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    for (d, i, j) in pairs {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        worst = worst.max(d);
        matched += 1;
        if matched == a.len() {
            break;
        }
    }
    worst
}

/// One cell of a block grid handed to [`block_assemble`].
#[derive(Clone, Debug)]
pub enum Block {
    Zero,
    Dense(Matrix),
}

impl From<Matrix> for Block {
    fn from(m: Matrix) -> Self {
        Block::Dense(m)
    }
}

/// Places dense blocks on a grid; `Block::Zero` cells take the row height and
/// column width implied by the dense blocks sharing their row and column.
pub fn block_assemble(grid: &[Vec<Block>]) -> Result<Matrix> {
    let rows = grid.len();
    if rows == 0 {
        return Err(Error::InvalidMatrix("empty block grid".into()));
    }
    let cols = grid[0].len();
    let mut heights: Vec<Option<usize>> = vec![None; rows];
    let mut widths: Vec<Option<usize>> = vec![None; cols];
    for (r, row) in grid.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::BlockLayout {
                row: r,
                col: row.len().min(cols),
                reason: format!("row has {} blocks, expected {cols}", row.len()),
            });
        }
        for (c, cell) in row.iter().enumerate() {
            if let Block::Dense(m) = cell {
                match heights[r] {
                    Some(h) if h != m.nrows() => {
                        return Err(Error::BlockLayout {
                            row: r,
                            col: c,
                            reason: format!("height {} conflicts with {h}", m.nrows()),
                        })
                    }
                    _ => heights[r] = Some(m.nrows()),
                }
                match widths[c] {
                    Some(w) if w != m.ncols() => {
                        return Err(Error::BlockLayout {
                            row: r,
                            col: c,
                            reason: format!("width {} conflicts with {w}", m.ncols()),
                        })
                    }
                    _ => widths[c] = Some(m.ncols()),
                }
            }
        }
    }
    let heights: Vec<usize> = heights
        .into_iter()
        .enumerate()
        .map(|(r, h)| {
            h.ok_or_else(|| Error::BlockLayout {
                row: r,
                col: 0,
                reason: "block row has no dense block to fix its height".into(),
            })
        })
        .collect::<Result<_>>()?;
    let widths: Vec<usize> = widths
        .into_iter()
        .enumerate()
        .map(|(c, w)| {
            w.ok_or_else(|| Error::BlockLayout {
                row: 0,
                col: c,
                reason: "block column has no dense block to fix its width".into(),
            })
        })
        .collect::<Result<_>>()?;

    let total_rows: usize = heights.iter().sum();
    let total_cols: usize = widths.iter().sum();
    let mut out = Matrix::zeros(total_rows, total_cols);
    let mut r0 = 0;
    for (r, row) in grid.iter().enumerate() {
        let mut c0 = 0;
        for (c, cell) in row.iter().enumerate() {
            if let Block::Dense(m) = cell {
                out.view_mut((r0, c0), (heights[r], widths[c])).copy_from(m);
            }
            c0 += widths[c];
        }
        r0 += heights[r];
    }
    Ok(out)
}

/// Shift-register matrix with `a_i` as the only nonzero block of the first
/// block row (at 1-based block position `i`) and identities on the block
/// sub-diagonal; `n` blocks of size `a_i.nrows()` per side.
pub fn shift_register_matrix(a_i: &Matrix, n: usize, i: usize) -> Result<Matrix> {
    ensure_square(a_i)?;
    if i == 0 || i > n {
        return Err(Error::Precondition(format!(
            "block position {i} outside 1..={n}"
        )));
    }
    let size = a_i.nrows();
    let mut grid: Vec<Vec<Block>> = vec![vec![Block::Zero; n]; n];
    grid[0][i - 1] = Block::Dense(a_i.clone());
    for r in 1..n {
        grid[r][r - 1] = Block::Dense(Matrix::identity(size, size));
    }
    if n == 1 {
        return Ok(a_i.clone());
    }
    // the last block column is empty unless i == n
    if grid.iter().all(|row| matches!(row[n - 1], Block::Zero)) {
        grid[n - 1][n - 1] = Block::Dense(Matrix::zeros(size, size));
    }
    block_assemble(&grid)
}

#[derive(Clone, Debug)]
pub struct SpectrumCheck {
    pub passed: bool,
    pub max_mismatch: f64,
    pub tolerance: f64,
    pub computed: Vec<Complex64>,
    pub expected: Vec<Complex64>,
}

/// The `i`-th roots of every eigenvalue of `a_i`, plus `N(n - i)` zeros: the
/// spectrum predicted for [`shift_register_matrix`].
pub fn shift_register_predicted_spectrum(a_i: &Matrix, n: usize, i: usize) -> Result<Vec<Complex64>> {
    let base = eigenvalues(a_i)?;
    let mut expected = Vec::with_capacity(n * a_i.nrows());
    for mu in &base.eigenvalues {
        expected.extend(complex_roots(*mu, i));
    }
    expected.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), a_i.nrows() * (n - i)));
    Ok(expected)
}

/// All `k` complex `k`-th roots of `z`.
pub fn complex_roots(z: Complex64, k: usize) -> Vec<Complex64> {
    let (r, theta) = z.to_polar();
    let rk = r.powf(1.0 / k as f64);
    (0..k)
        .map(|j| {
            let phi = (theta + 2.0 * std::f64::consts::PI * j as f64) / k as f64;
            Complex64::from_polar(rk, phi)
        })
        .collect()
}

/// Checks that the spectrum of the shift-register matrix is
/// `{λ : λ^i = μ, μ ∈ spec(a_i)} ∪ {0 × N(n-i)}` within `TOL.shift_spectrum`.
pub fn verify_shift_register_spectrum(a_i: &Matrix, n: usize, i: usize) -> Result<SpectrumCheck> {
    let m = shift_register_matrix(a_i, n, i)?;
    let computed = eigenvalues(&m)?.eigenvalues;
    let expected = shift_register_predicted_spectrum(a_i, n, i)?;
    let max_mismatch = multiset_mismatch(&computed, &expected);
    Ok(SpectrumCheck {
        passed: max_mismatch <= TOL.shift_spectrum,
        max_mismatch,
        tolerance: TOL.shift_spectrum,
        computed,
        expected,
    })
}

/// `blockdiag(blocks)`.
pub fn block_diagonal(blocks: &[Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
