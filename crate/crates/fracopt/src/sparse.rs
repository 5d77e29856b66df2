//! CSR matrices, preconditioned conjugate gradients, incomplete Cholesky.
//!
//! The anisotropic graded meshes produce stiffness matrices whose diagonal
//! spans ten or more orders of magnitude, so the incomplete factorization
//! works on the symmetrically scaled matrix `S A S`, `S = diag(a_ii^{-1/2})`,
//! and the conjugate gradient loop verifies the *true* residual before it
//! reports convergence.

use std::io::Write;

use crate::{Error, Result};

/// Coordinate-format accumulator; duplicate entries add up on conversion.
#[derive(Debug, Clone)]
pub struct Triplets {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<u32>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Triplets {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self::with_capacity(n_rows, n_cols, 0)
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        assert!(n_rows <= u32::MAX as usize && n_cols <= u32::MAX as usize);
        Triplets {
            n_rows,
            n_cols,
            rows: Vec::with_capacity(cap),
            cols: Vec::with_capacity(cap),
            vals: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n_rows && j < self.n_cols);
        self.rows.push(i as u32);
        self.cols.push(j as u32);
        self.vals.push(v);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Convert by counting sort over rows, then per-row column sort with
    /// duplicate merging. `O(nnz log r)` with `r` the row length.
    pub fn into_csr(self) -> Csr {
        let n_rows = self.n_rows;
        let mut counts = vec![0usize; n_rows + 1];
        for &r in &self.rows {
            counts[r as usize + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut order: Vec<(u32, f64)> = vec![(0, 0.0); self.vals.len()];
        {
            let mut cursor = counts.clone();
            for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
                let slot = cursor[r as usize];
                order[slot] = (c, v);
                cursor[r as usize] += 1;
            }
        }
        drop(self.rows);
        drop(self.cols);
        drop(self.vals);
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for i in 0..n_rows {
            let row = &mut order[counts[i]..counts[i + 1]];
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut iter = row.iter().copied();
            if let Some((mut cur_c, mut cur_v)) = iter.next() {
                for (c, v) in iter {
                    if c == cur_c {
                        cur_v += v;
                    } else {
                        indices.push(cur_c);
                        data.push(cur_v);
                        (cur_c, cur_v) = (c, v);
                    }
                }
                indices.push(cur_c);
                data.push(cur_v);
            }
            indptr.push(indices.len());
        }
        Csr {
            n_rows,
            n_cols: self.n_cols,
            indptr,
            indices,
            data,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<f64>,
}

impl Csr {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.data[span])
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c as usize];
            }
            y[i] = acc;
        }
    }

    /// `y = Aᵀ x` (for rectangular couplings).
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_rows);
        assert_eq!(y.len(), self.n_cols);
        y.fill(0.0);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for (&c, &v) in cols.iter().zip(vals) {
                y[c as usize] += v * xi;
            }
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_rows);
        assert_eq!(y.len(), self.n_cols);
        let mut total = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * y[c as usize];
            }
            total += x[i] * acc;
        }
        total
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        assert_eq!(self.n_rows, self.n_cols);
        (0..self.n_rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                match cols.binary_search(&(i as u32)) {
                    Ok(k) => vals[k],
                    Err(_) => 0.0,
                }
            })
            .collect()
    }

    /// Row sums (the lumped diagonal when `A` is a mass matrix).
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }

    pub fn transpose(&self) -> Csr {
        let mut t = Triplets::with_capacity(self.n_cols, self.n_rows, self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                t.push(c as usize, i, v);
            }
        }
        t.into_csr()
    }

    /// Largest `|a_ij - a_ji|`; zero for structurally symmetric assembly.
    pub fn symmetry_defect(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0_f64;
        for i in 0..self.n_rows {
            let (c1, v1) = self.row(i);
            let (c2, v2) = t.row(i);
            // Patterns may differ; walk both sorted rows.
            let (mut a, mut b) = (0, 0);
            while a < c1.len() || b < c2.len() {
                match (c1.get(a), c2.get(b)) {
                    (Some(&ca), Some(&cb)) if ca == cb => {
                        worst = worst.max((v1[a] - v2[b]).abs());
                        a += 1;
                        b += 1;
                    }
                    (Some(&ca), Some(&cb)) if ca < cb => {
                        worst = worst.max(v1[a].abs());
                        a += 1;
                    }
                    (Some(_), Some(_)) => {
                        worst = worst.max(v2[b].abs());
                        b += 1;
                    }
                    (Some(_), None) => {
                        worst = worst.max(v1[a].abs());
                        a += 1;
                    }
                    (None, Some(_)) => {
                        worst = worst.max(v2[b].abs());
                        b += 1;
                    }
                    (None, None) => unreachable!(),
                }
            }
        }
        worst
    }

    /// Coordinate-format Matrix Market output (1-based indices).
    pub fn write_matrix_market(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.16e}", i + 1, c as usize + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Preconditioners for the conjugate gradient loop.
pub enum Preconditioner {
    Identity,
    Jacobi { inv_diag: Vec<f64> },
    IncompleteCholesky(IcFactor),
}

/// Zero-fill incomplete Cholesky of the symmetrically scaled matrix.
pub struct IcFactor {
    /// Upper-triangular factor `Lᵀ` in CSR, diagonal entry first in each row;
    /// rows of `Lᵀ` are the columns of `L`, which serves both sweeps.
    lt_indptr: Vec<usize>,
    lt_indices: Vec<u32>,
    lt_data: Vec<f64>,
    /// `a_ii^{-1/2}` symmetric scaling.
    scale: Vec<f64>,
    /// Diagonal shift that made the factorization succeed.
    pub shift: f64,
}

impl Preconditioner {
    pub fn jacobi(a: &Csr) -> Result<Self> {
        let diag = a.diagonal();
        let mut inv = Vec::with_capacity(diag.len());
        for (i, d) in diag.iter().enumerate() {
            if *d <= 0.0 || !d.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "Jacobi preconditioner needs a positive diagonal, a[{i},{i}] = {d}"
                )));
            }
            inv.push(1.0 / d);
        }
        Ok(Preconditioner::Jacobi { inv_diag: inv })
    }

    /// IC(0) with escalating diagonal shifts; fails only if even a unit shift
    /// cannot rescue the factorization.
    pub fn incomplete_cholesky(a: &Csr) -> Result<Self> {
        const SHIFTS: [f64; 6] = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0];
        let diag = a.diagonal();
        let mut scale = Vec::with_capacity(diag.len());
        for (i, d) in diag.iter().enumerate() {
            if *d <= 0.0 || !d.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "incomplete Cholesky needs a positive diagonal, a[{i},{i}] = {d}"
                )));
            }
            scale.push(1.0 / d.sqrt());
        }
        let mut last_err = None;
        for shift in SHIFTS {
            match ic0_factor(a, &scale, shift) {
                Ok((indptr, indices, data)) => {
                    return Ok(Preconditioner::IncompleteCholesky(IcFactor {
                        lt_indptr: indptr,
                        lt_indices: indices,
                        lt_data: data,
                        scale,
                        shift,
                    }))
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("shift ladder is non-empty"))
    }

    /// `z = M⁻¹ r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Jacobi { inv_diag } => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv_diag) {
                    *zi = ri * di;
                }
            }
            Preconditioner::IncompleteCholesky(f) => f.apply(r, z),
        }
    }
}

impl IcFactor {
    /// Solve `(S L Lᵀ S) z = r` via one forward and one backward sweep.
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.scale.len();
        for i in 0..n {
            z[i] = r[i] * self.scale[i];
        }
        // Forward L t = z, column-oriented: row j of Lᵀ lists column j of L.
        for j in 0..n {
            let span = self.lt_indptr[j]..self.lt_indptr[j + 1];
            let cols = &self.lt_indices[span.clone()];
            let vals = &self.lt_data[span];
            let tj = z[j] / vals[0]; // diagonal first
            z[j] = tj;
            for (&i, &v) in cols[1..].iter().zip(&vals[1..]) {
                z[i as usize] -= v * tj;
            }
        }
        // Backward Lᵀ t = z, row-oriented on the same structure.
        for j in (0..n).rev() {
            let span = self.lt_indptr[j]..self.lt_indptr[j + 1];
            let cols = &self.lt_indices[span.clone()];
            let vals = &self.lt_data[span];
            let mut acc = z[j];
            for (&i, &v) in cols[1..].iter().zip(&vals[1..]) {
                acc -= v * z[i as usize];
            }
            z[j] = acc / vals[0];
        }
        for i in 0..n {
            z[i] *= self.scale[i];
        }
    }
}

/// Up-looking IC(0) on `S A S + shift·I`, returning `Lᵀ` in CSR with the
/// diagonal leading each row.
#[allow(clippy::type_complexity)]
fn ic0_factor(
    a: &Csr,
    scale: &[f64],
    shift: f64,
) -> Result<(Vec<usize>, Vec<u32>, Vec<f64>)> {
    let n = a.n_rows();
    assert_eq!(n, a.n_cols());
    // Lower-triangle pattern of the scaled matrix, row by row.
    let mut l_indptr = Vec::with_capacity(n + 1);
    let mut l_cols: Vec<u32> = Vec::new();
    let mut l_vals: Vec<f64> = Vec::new();
    l_indptr.push(0);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        let si = scale[i];
        // Strictly-lower entries first, in ascending column order.
        for (&c, &v) in cols.iter().zip(vals) {
            let j = c as usize;
            if j >= i {
                break; // columns sorted
            }
            let target = si * v * scale[j];
            // L_ij = (â_ij - Σ_{k<j} L_ik L_jk) / L_jj
            let (row_i_cols, row_i_vals) = {
                let span = l_indptr[i]..l_cols.len();
                (&l_cols[span.clone()], &l_vals[span])
            };
            let span_j = l_indptr[j]..l_indptr[j + 1];
            let row_j_cols = &l_cols[span_j.clone()];
            let row_j_vals = &l_vals[span_j];
            let mut dot = 0.0;
            let (mut p, mut q) = (0, 0);
            while p < row_i_cols.len() && q < row_j_cols.len() {
                let (cp, cq) = (row_i_cols[p], row_j_cols[q]);
                if cq as usize >= j {
                    break;
                }
                match cp.cmp(&cq) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        dot += row_i_vals[p] * row_j_vals[q];
                        p += 1;
                        q += 1;
                    }
                }
            }
            // Diagonal of row j is its last stored entry.
            let ljj = l_vals[l_indptr[j + 1] - 1];
            l_cols.push(c);
            l_vals.push((target - dot) / ljj);
        }
        // Diagonal: â_ii = 1 after scaling.
        let row_span = l_indptr[i]..l_cols.len();
        let sumsq: f64 = l_vals[row_span].iter().map(|v| v * v).sum();
        let pivot = 1.0 + shift - sumsq;
        if pivot <= 1e-12 || !pivot.is_finite() {
            return Err(Error::FactorBreakdown { row: i, shift });
        }
        l_cols.push(i as u32);
        l_vals.push(pivot.sqrt());
        l_indptr.push(l_cols.len());
    }
    // Transpose L into Lᵀ (CSR, diagonal first since rows of L end on it).
    let mut counts = vec![0usize; n + 1];
    for &c in &l_cols {
        counts[c as usize + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut lt_indices = vec![0u32; l_cols.len()];
    let mut lt_data = vec![0.0; l_vals.len()];
    let mut cursor = counts.clone();
    for i in 0..n {
        // Column j of L holds rows i ≥ j; scanning rows in order makes the
        // diagonal the first entry of each Lᵀ row automatically.
        for k in l_indptr[i]..l_indptr[i + 1] {
            let j = l_cols[k] as usize;
            let slot = cursor[j];
            lt_indices[slot] = i as u32;
            lt_data[slot] = l_vals[k];
            cursor[j] += 1;
        }
    }
    Ok((counts, lt_indices, lt_data))
}

/// Conjugate gradient convergence report.
#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    /// True relative residual `‖b - Ax‖ / ‖b‖` at exit.
    pub rel_residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG for SPD systems. `x` carries the initial guess in and
/// the solution out; convergence is certified on the recomputed residual
/// `b - Ax`, not the recurrence, so round-off drift cannot fake success.
pub fn solve_spd(
    a: &Csr,
    b: &[f64],
    x: &mut [f64],
    pc: &Preconditioner,
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    assert_eq!(a.n_rows(), a.n_cols());
    assert_eq!(b.len(), a.n_rows());
    assert_eq!(x.len(), a.n_rows());
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(CgOutcome {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rel = norm(&r) / b_norm;
    if rel <= rel_tol {
        return Ok(CgOutcome {
            iterations: 0,
            rel_residual: rel,
        });
    }
    let mut z = vec![0.0; n];
    pc.apply(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut history = Vec::with_capacity(8);
    for k in 1..=max_iter {
        a.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 || !pq.is_finite() {
            return Err(Error::SolverStalled {
                iters: k,
                rel_residual: rel,
                history,
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rel = norm(&r) / b_norm;
        if history.len() == 8 {
            history.remove(0);
        }
        history.push(rel);
        if rel <= rel_tol || k % 64 == 0 {
            // Residual replacement: swap in the true residual. Convergence
            // is only declared on this recomputed value; otherwise the loop
            // continues with its direction intact.
            a.matvec(x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            rel = norm(&r) / b_norm;
            if rel <= rel_tol {
                return Ok(CgOutcome {
                    iterations: k,
                    rel_residual: rel,
                });
            }
        }
        pc.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverStalled {
        iters: max_iter,
        rel_residual: rel,
        history,
    })
}
