//! Compressed-sparse-row complex operators over a [`Basis`].

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{Basis, BasisState, HilbertError};

/// Tolerance used when a builder flags its output Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    hermitian: bool,
}

impl OperatorMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, C64::new(1.0, 0.0))))
            .flagged_hermitian_unchecked()
    }

    /// Assemble from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut t: Vec<(usize, usize, C64)> = triplets.into_iter().collect();
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<C64> = Vec::with_capacity(t.len());
        let mut rows = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            if let (Some(&lr), Some(&lc)) = (rows.last(), cols.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            cols.push(c);
            vals.push(v);
        }
        let mut keep_rows = Vec::with_capacity(rows.len());
        let mut keep_cols = Vec::with_capacity(rows.len());
        let mut keep_vals = Vec::with_capacity(rows.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != C64::new(0.0, 0.0) {
                keep_rows.push(r);
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for &r in &keep_rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            cols: keep_cols,
            vals: keep_vals,
            hermitian: false,
        }
    }

    /// Build an operator from its action on basis states. `action` returns
    /// the image of a basis ket as `(state, amplitude)` pairs; images outside
    /// the truncated space are dropped.
    pub fn from_action<F>(basis: &Basis, mut action: F) -> Self
    where
        F: FnMut(&BasisState) -> Vec<(BasisState, C64)>,
    {
        let mut triplets = Vec::new();
        for (col, s) in basis.states().iter().enumerate() {
            for (image, amp) in action(s) {
                if let Some(row) = basis.index_of(&image) {
                    triplets.push((row, col, amp));
                }
            }
        }
        Self::from_triplets(basis.dim(), triplets)
    }

    /// Diagonal operator with entries `f(state)`.
    pub fn diagonal<F>(basis: &Basis, mut f: F) -> Self
    where
        F: FnMut(&BasisState) -> C64,
    {
        Self::from_triplets(
            basis.dim(),
            basis.states().iter().enumerate().map(|(i, s)| (i, i, f(s))),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Set the Hermitian flag after checking `‖A − A†‖_max ≤ 1e-12`.
    pub fn flagged_hermitian(mut self) -> Result<Self, HilbertError> {
        let defect = self.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(HilbertError::NotHermitian(defect));
        }
        self.hermitian = true;
        Ok(self)
    }

    fn flagged_hermitian_unchecked(mut self) -> Self {
        self.hermitian = true;
        self
    }

    /// Iterate stored `(row, col, value)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let adj = self.adjoint();
        self.sub(&adj).max_abs_entry()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::from_triplets(self.dim, self.entries().map(|(r, c, v)| (c, r, v.conj())));
        out.hermitian = self.hermitian;
        out
    }

    pub fn scale(&self, factor: C64) -> Self {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= factor;
        }
        out.hermitian = self.hermitian && factor.im == 0.0;
        if factor == C64::new(0.0, 0.0) {
            return Self::zeros(self.dim);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = Self::from_triplets(self.dim, self.entries().chain(other.entries()));
        out.hermitian = self.hermitian && other.hermitian;
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = Self::from_triplets(
            self.dim,
            self.entries()
                .chain(other.entries().map(|(r, c, v)| (r, c, -v))),
        );
        out.hermitian = self.hermitian && other.hermitian;
        out
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut triplets = Vec::new();
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let mid = self.cols[k];
                let a = self.vals[k];
                for kk in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    triplets.push((r, other.cols[kk], a * other.vals[kk]));
                }
            }
        }
        Self::from_triplets(self.dim, triplets)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.apply_into(x, &mut y);
        y
    }

    /// `y = A x`, overwriting `y`.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    /// `A · M` for a dense column-major square matrix.
    pub fn mul_dense(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.dim;
        debug_assert_eq!(m.nrows(), n);
        let mut out = DMatrix::zeros(n, m.ncols());
        for j in 0..m.ncols() {
            let src = m.column(j);
            let src = src.as_slice();
            let mut dst = out.column_mut(j);
            self.apply_into(src, dst.as_mut_slice());
        }
        out
    }

    /// `⟨x|A|x⟩` (not normalized).
    pub fn expectation(&self, x: &[C64]) -> C64 {
        let ax = self.apply(x);
        x.iter().zip(&ax).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    /// Restriction to a subset of basis indices, as a dense matrix.
    pub fn restrict_dense(&self, indices: &[usize]) -> DMatrix<C64> {
        let n = indices.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &r) in indices.iter().enumerate() {
            for (j, &c) in indices.iter().enumerate() {
                m[(i, j)] = self.get(r, c);
            }
        }
        m
    }
}
