//! Dense matrix primitives, a one-sided Jacobi SVD and the rank-one column
//! append update used to maintain the low-rank background prior.
//!
//! Everything here is deterministic: the Jacobi sweep order is fixed, ties in
//! the singular values keep their column order, and every left singular
//! vector has its largest-magnitude entry made nonnegative.

use std::ops::{Index, IndexMut};

use crate::error::{ensure_finite, invalid_input, Result};

/// Largest `min(rows, cols)` accepted by [`svd`].
pub const MAX_SVD_DIM: usize = 4096;

/// `‖δ‖₂` below this is treated as an exact zero when appending a column.
pub const RESIDUAL_ZERO: f64 = 1e-12;

const MAX_SWEEPS: usize = 80;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid_input(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid_input("ragged rows"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    /// Builds an `n x k` matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(invalid_input("columns differ in length"));
        }
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                m.data[i * cols + j] = v;
            }
        }
        Ok(m)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(invalid_input(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * x`
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(invalid_input(format!(
                "vector of length {} does not match {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ * y`
    pub fn tr_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(invalid_input(format!(
                "vector of length {} does not match {} rows",
                y.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            axpy(yi, self.row(i), &mut out);
        }
        Ok(out)
    }

    /// Appends `v` as a new last column.
    pub fn append_column(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.rows {
            return Err(invalid_input("appended column has wrong length"));
        }
        let cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for (i, &x) in v.iter().enumerate() {
            data.extend_from_slice(self.row(i));
            data.push(x);
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(invalid_input("shape mismatch in subtraction"));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Inner product over the common prefix. Eight interleaved partial sums keep
/// the loop vectorizable while fixing the summation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().min(b.len());
    let (a, b) = (&a[..len], &b[..len]);
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Thin SVD `A = U diag(S) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// `rows x r`, orthonormal columns.
    pub u: DenseMatrix,
    /// Nonincreasing, nonnegative, length `r`.
    pub s: Vec<f64>,
    /// `cols x r`, orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for i in 0..us.rows {
            for (j, s) in self.s.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.transpose())
            .expect("factor shapes are consistent")
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.s.iter().sum()
    }
}

/// Column-major scratch used by the Jacobi iteration.
struct ColumnSet {
    len: usize,
    data: Vec<f64>,
}

impl ColumnSet {
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.len..(j + 1) * self.len]
    }

    fn pair_mut(&mut self, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(i < j);
        let (lo, hi) = self.data.split_at_mut(j * self.len);
        (&mut lo[i * self.len..(i + 1) * self.len], &mut hi[..self.len])
    }
}

fn rotate(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xa, yb) = (*x, *y);
        *x = c * xa - s * yb;
        *y = s * xa + c * yb;
    }
}

/// Thin SVD by one-sided (Hestenes) Jacobi with cyclic column-pair sweeps.
pub fn svd(a: &DenseMatrix) -> Result<SvdFactors> {
    if a.is_empty() {
        return Err(invalid_input("svd of an empty matrix"));
    }
    if a.rows.min(a.cols) > MAX_SVD_DIM {
        return Err(invalid_input(format!(
            "svd limited to min(rows, cols) <= {MAX_SVD_DIM}"
        )));
    }
    ensure_finite(&a.data, "svd input")?;
    if a.rows < a.cols {
        let t = svd_tall(&a.transpose());
        let mut f = SvdFactors { u: t.v, s: t.s, v: t.u };
        apply_sign_convention(&mut f);
        return Ok(f);
    }
    Ok(svd_tall(a))
}

fn svd_tall(a: &DenseMatrix) -> SvdFactors {
    let (m, n) = (a.rows, a.cols);
    let mut work = ColumnSet {
        len: m,
        data: a.transpose().data,
    };
    let mut vacc = ColumnSet {
        len: n,
        data: DenseMatrix::identity(n).data,
    };

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let (ai, aj) = (work.col(i), work.col(j));
                let alpha = dot(ai, ai);
                let beta = dot(aj, aj);
                let gamma = dot(ai, aj);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                let (ci, cj) = work.pair_mut(i, j);
                rotate(ci, cj, c, s);
                let (vi, vj) = vacc.pair_mut(i, j);
                rotate(vi, vj, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| norm2(work.col(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));

    let sigma_max = norms[order[0]];
    let cutoff = sigma_max * (m.max(n) as f64) * f64::EPSILON;

    let mut u_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut v = DenseMatrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        s.push(sigma);
        if sigma > cutoff && sigma > 0.0 {
            u_cols.push(Some(work.col(j).iter().map(|x| x / sigma).collect()));
        } else {
            u_cols.push(None);
        }
        for (r, &val) in vacc.col(j).iter().enumerate() {
            v[(r, k)] = val;
        }
    }

    let missing = u_cols.iter().filter(|c| c.is_none()).count();
    if missing > 0 {
        let known: Vec<Vec<f64>> = u_cols.iter().flatten().cloned().collect();
        let mut extra = orthonormal_complement(&known, m, missing).into_iter();
        for c in u_cols.iter_mut().filter(|c| c.is_none()) {
            *c = extra.next();
        }
    }
    let u_cols: Vec<Vec<f64>> = u_cols.into_iter().map(|c| c.expect("completed")).collect();
    let mut f = SvdFactors {
        u: DenseMatrix::from_columns(&u_cols).expect("equal lengths"),
        s,
        v,
    };
    apply_sign_convention(&mut f);
    f
}

/// Flips column pairs so the largest-magnitude entry of each U column is
/// nonnegative (first such entry on ties).
fn apply_sign_convention(f: &mut SvdFactors) {
    for j in 0..f.u.cols {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..f.u.rows {
            let a = f.u[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if f.u[(best, j)] < 0.0 {
            for i in 0..f.u.rows {
                f.u[(i, j)] = -f.u[(i, j)];
            }
            for i in 0..f.v.rows {
                f.v[(i, j)] = -f.v[(i, j)];
            }
        }
    }
}

/// Returns `count` unit vectors of length `len`, orthogonal to `known` and to
/// each other, built from standard basis vectors in index order.
pub fn orthonormal_complement(known: &[Vec<f64>], len: usize, count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = known.to_vec();
    let mut out = Vec::with_capacity(count);
    let mut k = 0;
    while out.len() < count && k < len {
        let remaining = len.saturating_sub(basis.len()).max(1) as f64;
        let threshold = 0.5 * (remaining / len as f64).sqrt();
        let mut cand = vec![0.0; len];
        cand[k] = 1.0;
        k += 1;
        for _ in 0..2 {
            for b in &basis {
                let p = dot(b, &cand);
                axpy(-p, b, &mut cand);
            }
        }
        let nrm = norm2(&cand);
        if nrm > threshold {
            cand.iter_mut().for_each(|x| *x /= nrm);
            basis.push(cand.clone());
            out.push(cand);
        }
    }
    out
}

/// Result of appending one column to an existing thin SVD, kept in its
/// factored `[U q] · Ũ Σ̃ Ṽᵀ · blockdiag(Vᵀ, 1)` form.
///
/// The engine only needs the last column of the (thresholded) product, which
/// costs `O(n r)` from this form; [`AppendedSvd::into_factors`] forms the full
/// `n x (r+1)` left factor when it is actually needed.
#[derive(Debug, Clone)]
pub struct AppendedSvd<'a> {
    prior: &'a SvdFactors,
    /// Leading columns of the prior that take part.
    used: usize,
    /// `δ/‖δ‖`, `None` when the residual vanished or there is no room for it.
    residual_dir: Option<Vec<f64>>,
    /// Whether the middle matrix carries the extra residual row.
    has_extra_row: bool,
    residual_norm: f64,
    middle: SvdFactors,
}

impl<'a> AppendedSvd<'a> {
    /// Factors `[B v]` given the thin SVD of `B`.
    pub fn new(prior: &'a SvdFactors, v: &[f64]) -> Result<Self> {
        Self::with_columns(prior, v, prior.s.len())
    }

    /// Like [`AppendedSvd::new`] but leaves out the directions of `B` whose
    /// singular value is exactly zero. Singular values and
    /// [`AppendedSvd::shrunk_last_column`] are unchanged apart from the
    /// missing zeros; [`AppendedSvd::into_factors`] then returns only the
    /// retained directions.
    pub fn reduced(prior: &'a SvdFactors, v: &[f64]) -> Result<Self> {
        let used = prior.s.iter().take_while(|&&s| s > 0.0).count();
        Self::with_columns(prior, v, used)
    }

    fn with_columns(prior: &'a SvdFactors, v: &[f64], used: usize) -> Result<Self> {
        let n = prior.u.rows;
        let r = prior.s.len();
        if prior.u.cols != r || prior.v.cols != r {
            return Err(invalid_input("prior factors have inconsistent rank"));
        }
        if v.len() != n {
            return Err(invalid_input(format!(
                "appended column has length {}, prior has {n} rows",
                v.len()
            )));
        }
        ensure_finite(v, "appended column")?;

        // e = Uᵀv, δ = v − U e, with one reorthogonalization pass.
        let mut e = leading_tr_mul(&prior.u, used, v);
        let mut delta = v.to_vec();
        subtract_projection(&prior.u, &e, &mut delta);
        let correction = leading_tr_mul(&prior.u, used, &delta);
        subtract_projection(&prior.u, &correction, &mut delta);
        for (ei, ci) in e.iter_mut().zip(&correction) {
            *ei += ci;
        }

        let has_extra_row = used < n;
        let mut rho = norm2(&delta);
        if !has_extra_row || rho < RESIDUAL_ZERO {
            rho = 0.0;
        }
        let residual_dir = if rho > 0.0 {
            Some(delta.iter().map(|x| x / rho).collect())
        } else {
            None
        };

        let rows = if has_extra_row { used + 1 } else { used };
        let mut middle = DenseMatrix::zeros(rows, used + 1);
        for i in 0..used {
            middle[(i, i)] = prior.s[i];
            middle[(i, used)] = e[i];
        }
        if has_extra_row {
            middle[(used, used)] = rho;
        }
        Ok(Self {
            prior,
            used,
            residual_dir,
            has_extra_row,
            residual_norm: rho,
            middle: svd(&middle)?,
        })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.middle.s
    }

    /// `‖δ‖₂` after the zero cutoff.
    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    /// Last column of `U_t Γ_τ(Σ_t) V_tᵀ`, i.e. the appended column after
    /// soft-thresholding every singular value by `tau`.
    pub fn shrunk_last_column(&self, tau: f64) -> Vec<f64> {
        let r = self.used;
        let mid = &self.middle;
        let k = mid.s.len();
        let last = mid.v.rows - 1;
        // coefficients in the [U q] basis
        let mut coeff = vec![0.0; mid.u.rows];
        for j in 0..k {
            let w = (mid.s[j] - tau).max(0.0) * mid.v[(last, j)];
            if w == 0.0 {
                continue;
            }
            for (i, c) in coeff.iter_mut().enumerate() {
                *c += mid.u[(i, j)] * w;
            }
        }
        let u = &self.prior.u;
        let mut out: Vec<f64> = (0..u.rows).map(|i| dot(&u.row(i)[..r], &coeff[..r])).collect();
        if let (Some(q), true) = (&self.residual_dir, self.has_extra_row) {
            axpy(coeff[r], q, &mut out);
        }
        out
    }

    /// Full factors of `[B v]`.
    pub fn into_factors(self) -> SvdFactors {
        let n = self.prior.u.rows;
        let r = self.used;
        let mut basis = self.prior.u.columns();
        basis.truncate(r);
        if self.has_extra_row {
            let q = match self.residual_dir {
                Some(q) => q,
                None => orthonormal_complement(&basis, n, 1)
                    .pop()
                    .expect("r < n leaves room for one more direction"),
            };
            basis.push(q);
        }
        let ext = DenseMatrix::from_columns(&basis).expect("equal lengths");
        let u = ext.matmul(&self.middle.u).expect("shapes agree");

        let c = self.prior.v.rows;
        let mut vext = DenseMatrix::zeros(c + 1, r + 1);
        for i in 0..c {
            for j in 0..r {
                vext[(i, j)] = self.prior.v[(i, j)];
            }
        }
        vext[(c, r)] = 1.0;
        let v = vext.matmul(&self.middle.v).expect("shapes agree");
        let mut f = SvdFactors {
            u,
            s: self.middle.s,
            v,
        };
        apply_sign_convention(&mut f);
        f
    }
}

/// `Uᵀy` restricted to the first `k` columns of `U`.
fn leading_tr_mul(u: &DenseMatrix, k: usize, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for (i, &yi) in y.iter().enumerate() {
        axpy(yi, &u.row(i)[..k], &mut out);
    }
    out
}

/// `target −= U[:, ..coeff.len()] coeff`
fn subtract_projection(u: &DenseMatrix, coeff: &[f64], target: &mut [f64]) {
    let k = coeff.len();
    for (i, t) in target.iter_mut().enumerate() {
        *t -= dot(&u.row(i)[..k], coeff);
    }
}

/// SVD of `[B v]` from the SVD of `B` via the `(r+1) x (r+1)` middle matrix.
pub fn inc_svd(prior: &SvdFactors, v: &[f64]) -> Result<SvdFactors> {
    Ok(AppendedSvd::new(prior, v)?.into_factors())
}

/// Keeps the leading `d` singular triplets, soft-thresholds the kept values
/// by `tau`, and returns their product together with the kept factors.
pub fn truncate_factors(
    f: &SvdFactors,
    d: usize,
    tau: f64,
) -> Result<(DenseMatrix, SvdFactors)> {
    if d == 0 {
        return Err(invalid_input("truncation width must be positive"));
    }
    if d > f.s.len() {
        return Err(invalid_input(format!(
            "cannot keep {d} of {} singular values",
            f.s.len()
        )));
    }
    if tau < 0.0 || !tau.is_finite() {
        return Err(invalid_input("threshold must be finite and nonnegative"));
    }
    let kept = SvdFactors {
        u: leading_columns(&f.u, d),
        s: f.s[..d].iter().map(|s| (s - tau).max(0.0)).collect(),
        v: leading_columns(&f.v, d),
    };
    Ok((kept.reconstruct(), kept))
}

pub(crate) fn leading_columns(m: &DenseMatrix, k: usize) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.rows, k);
    for i in 0..m.rows {
        out.data[i * k..(i + 1) * k].copy_from_slice(&m.row(i)[..k]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let data = (0..rows * cols)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        DenseMatrix::from_vec(rows, cols, data).unwrap()
    }

    fn orthonormality_error(m: &DenseMatrix) -> f64 {
        let g = m.transpose().matmul(m).unwrap();
        g.sub(&DenseMatrix::identity(m.cols())).unwrap().max_abs()
    }

    #[test]
    fn diagonal_matrix() {
        let f = svd(&DenseMatrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(f.s, vec![3.0, 1.0]);
        assert_eq!(f.u, DenseMatrix::identity(2));
        assert_eq!(f.v, DenseMatrix::identity(2));
    }

    #[test]
    fn rotation_has_unit_singular_values() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let f = svd(&DenseMatrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap()).unwrap();
        for sv in &f.s {
            assert!((sv - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        for (rows, cols, seed) in [(8, 5, 1), (5, 8, 2), (30, 30, 3), (64, 9, 4)] {
            let a = lcg_matrix(rows, cols, seed);
            let f = svd(&a).unwrap();
            let err = f.reconstruct().sub(&a).unwrap().frobenius_norm();
            assert!(err <= 1e-10 * a.frobenius_norm().max(1.0), "err {err}");
            assert!(orthonormality_error(&f.u) <= 1e-10);
            assert!(orthonormality_error(&f.v) <= 1e-10);
            assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_matrix_gets_complete_basis() {
        let col = vec![1.0, 2.0, 3.0, 4.0];
        let a = DenseMatrix::from_columns(&[col.clone(), col.clone(), vec![0.0; 4]]).unwrap();
        let f = svd(&a).unwrap();
        assert!(f.s[1].abs() < 1e-12 && f.s[2] == 0.0);
        assert!(orthonormality_error(&f.u) <= 1e-10);
        assert!(f.reconstruct().sub(&a).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let f = svd(&DenseMatrix::zeros(3, 2)).unwrap();
        assert_eq!(f.s, vec![0.0, 0.0]);
        assert!(orthonormality_error(&f.u) <= 1e-12);
    }

    #[test]
    fn sign_convention_holds() {
        let f = svd(&lcg_matrix(10, 4, 9)).unwrap();
        for j in 0..4 {
            let col = f.u.column(j);
            let big = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(big >= 0.0);
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let a = DenseMatrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        assert!(matches!(svd(&a), Err(crate::Error::InvalidInput(_))));
    }

    #[test]
    fn inc_svd_small_example() {
        let prior = SvdFactors {
            u: DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap(),
            s: vec![1.0, 1.0],
            v: DenseMatrix::identity(2),
        };
        let f = inc_svd(&prior, &[0.0, 0.0, 2.0]).unwrap();
        assert!((f.s[0] - 2.0).abs() < 1e-14);
        assert!((f.s[1] - 1.0).abs() < 1e-14);
        assert!((f.s[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inc_svd_zero_column_appends_zero_value() {
        let b = lcg_matrix(12, 3, 5);
        let prior = svd(&b).unwrap();
        let f = inc_svd(&prior, &[0.0; 12]).unwrap();
        assert_eq!(f.s.len(), 4);
        for (a, b) in f.s[..3].iter().zip(&prior.s) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(f.s[3], 0.0);
        assert!(orthonormality_error(&f.u) <= 1e-10);
        let full = b.append_column(&[0.0; 12]).unwrap();
        assert!(f.reconstruct().sub(&full).unwrap().frobenius_norm() < 1e-10);
    }

    #[test]
    fn inc_svd_in_span_column() {
        let b = lcg_matrix(10, 3, 6);
        let prior = svd(&b).unwrap();
        let v: Vec<f64> = (0..10).map(|i| b[(i, 0)] - 2.0 * b[(i, 2)]).collect();
        let app = AppendedSvd::new(&prior, &v).unwrap();
        assert_eq!(app.residual_norm(), 0.0);
        let f = app.into_factors();
        assert!(orthonormality_error(&f.u) <= 1e-10);
        let full = b.append_column(&v).unwrap();
        assert!(f.reconstruct().sub(&full).unwrap().frobenius_norm() < 1e-10);
    }

    #[test]
    fn inc_svd_full_column_space() {
        let b = lcg_matrix(3, 3, 7);
        let prior = svd(&b).unwrap();
        let v = [0.5, -1.0, 0.25];
        let f = inc_svd(&prior, &v).unwrap();
        assert_eq!(f.s.len(), 3);
        let full = b.append_column(&v).unwrap();
        assert!(f.reconstruct().sub(&full).unwrap().frobenius_norm() < 1e-10);
    }

    #[test]
    fn inc_svd_dimension_mismatch() {
        let prior = svd(&lcg_matrix(5, 2, 1)).unwrap();
        assert!(inc_svd(&prior, &[1.0; 4]).is_err());
    }

    #[test]
    fn shrunk_last_column_matches_full_product() {
        let b = lcg_matrix(20, 4, 8);
        let prior = svd(&b).unwrap();
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let app = AppendedSvd::new(&prior, &v).unwrap();
        for tau in [0.0, 0.3, 1.5] {
            let fast = app.shrunk_last_column(tau);
            let f = app.clone().into_factors();
            let s: Vec<f64> = f.s.iter().map(|s| (s - tau).max(0.0)).collect();
            let shrunk = SvdFactors { u: f.u.clone(), s, v: f.v.clone() }.reconstruct();
            let slow = shrunk.column(shrunk.cols() - 1);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncate_examples() {
        let f = SvdFactors {
            u: DenseMatrix::identity(3),
            s: vec![5.0, 1.0, 0.1],
            v: DenseMatrix::identity(3),
        };
        let (_, kept) = truncate_factors(&f, 2, 1.0).unwrap();
        assert_eq!(kept.s, vec![4.0, 0.0]);
        let (full, _) = truncate_factors(&f, 3, 0.0).unwrap();
        assert_eq!(full, f.reconstruct());
        assert!(truncate_factors(&f, 0, 0.0).is_err());
        assert!(truncate_factors(&f, 4, 0.0).is_err());
    }
}
