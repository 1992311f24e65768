//! Symmetric sparse matrices stored as their upper triangle.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::operator::LinearOperator;
use crate::oracle::DenseSym;

/// Full (both triangles) compressed rows, built on demand for row-parallel
/// products.
#[derive(Debug, Clone)]
struct FullRows {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// A real symmetric matrix holding only entries with `row <= col`.
///
/// Rows are compressed: the entries of row `i` are
/// `cols[row_ptr[i]..row_ptr[i + 1]]`, sorted by column, all with
/// `col >= i`. No explicit zeros are stored and every `(row, col)` pair
/// appears once. Products expand the lower triangle implicitly.
#[derive(Debug, Clone)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    full: OnceLock<FullRows>,
}

impl PartialEq for SparseSymMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.row_ptr == other.row_ptr
            && self.cols == other.cols
            && self.vals.iter().map(|v| v.to_bits()).eq(other.vals.iter().map(|v| v.to_bits()))
    }
}

fn orient(i: usize, j: usize) -> (usize, usize) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

impl SparseSymMatrix {
    fn from_map(n: usize, map: BTreeMap<(usize, usize), f64>) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(map.len());
        let mut vals = Vec::with_capacity(map.len());
        for (&(i, j), &v) in &map {
            if v == 0.0 {
                continue;
            }
            row_ptr[i + 1] += 1;
            cols.push(j);
            vals.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSymMatrix {
            n,
            row_ptr,
            cols,
            vals,
            full: OnceLock::new(),
        }
    }

    fn checked(n: usize, i: usize, j: usize, v: f64) -> Result<()> {
        if i >= n || j >= n {
            return Err(Error::IndexOutOfBounds { row: i, col: j, n });
        }
        if !v.is_finite() {
            return Err(Error::NonFinite { row: i, col: j });
        }
        Ok(())
    }

    /// Builds a matrix from `(row, col, value)` triplets in either triangle.
    ///
    /// A pair given as both `(i, j)` and `(j, i)` (or repeated) must carry
    /// the same value; a conflicting duplicate is `NonSymmetric`. Zero
    /// values are dropped.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, j, v) in triplets {
            Self::checked(n, i, j, v)?;
            let key = orient(i, j);
            if let Some(&old) = map.get(&key) {
                if old != v {
                    return Err(Error::NonSymmetric {
                        row: key.0,
                        col: key.1,
                        a: old,
                        b: v,
                    });
                }
            } else {
                map.insert(key, v);
            }
        }
        Ok(Self::from_map(n, map))
    }

    /// Builds a matrix by summing all triplets that land on the same
    /// upper-triangle position. Used for assembling sampled matrices where
    /// multi-edges are merged.
    pub fn from_summed_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, j, v) in triplets {
            Self::checked(n, i, j, v)?;
            *map.entry(orient(i, j)).or_insert(0.0) += v;
        }
        Ok(Self::from_map(n, map))
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_map(n, BTreeMap::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::from_map(d.len(), d.iter().enumerate().map(|(i, &v)| ((i, i), v)).collect())
    }

    /// Dense symmetric input; only the upper triangle is read.
    pub fn from_dense(a: &DenseSym) -> Self {
        let n = a.n();
        let mut map = BTreeMap::new();
        for i in 0..n {
            for j in i..n {
                let v = a.get(i, j);
                if v != 0.0 {
                    map.insert((i, j), v);
                }
            }
        }
        Self::from_map(n, map)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored (upper-triangle) entries.
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzeros of the expanded matrix.
    pub fn nnz_full(&self) -> usize {
        self.entries()
            .map(|(i, j, _)| if i == j { 1 } else { 2 })
            .sum()
    }

    /// Off-diagonal stored entries, i.e. undirected edges.
    pub fn num_edges(&self) -> usize {
        self.entries().filter(|&(i, j, _)| i != j).count()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = orient(i, j);
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries().all(|(i, j, _)| i == j)
    }

    /// Sum of each expanded row.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for (i, j, v) in self.entries() {
            s[i] += v;
            if i != j {
                s[j] += v;
            }
        }
        s
    }

    /// Per row, the sum of absolute off-diagonal values.
    pub fn offdiag_abs_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for (i, j, v) in self.entries() {
            if i != j {
                s[i] += v.abs();
                s[j] += v.abs();
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.vals.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Adjacency lists of the expanded matrix (each row sorted by column).
    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, j, v) in self.entries() {
            adj[i].push((j, v));
            if i != j {
                adj[j].push((i, v));
            }
        }
        for row in &mut adj {
            row.sort_by_key(|&(j, _)| j);
        }
        adj
    }

    /// `y = A x` by scattering the stored triangle. Summation order is fixed,
    /// so the result is bit-reproducible.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_len(self.n, x.len())?;
        check_len(self.n, y.len())?;
        self.matvec_raw(x, y);
        Ok(())
    }

    pub(crate) fn matvec_raw(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let xi = x[i];
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let v = self.vals[k];
                acc += v * x[j];
                if j != i {
                    y[j] += v * xi;
                }
            }
            y[i] += acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y)?;
        Ok(y)
    }

    fn full_rows(&self) -> &FullRows {
        self.full.get_or_init(|| {
            let adj = self.neighbors();
            let mut row_ptr = Vec::with_capacity(self.n + 1);
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            row_ptr.push(0);
            for row in adj {
                for (j, v) in row {
                    cols.push(j);
                    vals.push(v);
                }
                row_ptr.push(cols.len());
            }
            FullRows {
                row_ptr,
                cols,
                vals,
            }
        })
    }

    /// Row-parallel product. Each output entry is summed in column order,
    /// so the result does not depend on the thread count.
    pub fn par_matvec(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_len(self.n, x.len())?;
        check_len(self.n, y.len())?;
        let f = self.full_rows();
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut acc = 0.0;
            for k in f.row_ptr[i]..f.row_ptr[i + 1] {
                acc += f.vals[k] * x[f.cols[k]];
            }
            *yi = acc;
        });
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        if alpha == 0.0 {
            return Self::zeros(self.n);
        }
        let mut out = self.clone();
        out.full = OnceLock::new();
        out.vals.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `alpha * self + beta * other`.
    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        check_len(self.n, other.n)?;
        let mut map = BTreeMap::new();
        for (i, j, v) in self.entries() {
            *map.entry((i, j)).or_insert(0.0) += alpha * v;
        }
        for (i, j, v) in other.entries() {
            *map.entry((i, j)).or_insert(0.0) += beta * v;
        }
        Ok(Self::from_map(self.n, map))
    }

    /// `I - self`, returned as a new matrix.
    pub fn identity_minus(&self) -> Self {
        let mut map: BTreeMap<(usize, usize), f64> =
            self.entries().map(|(i, j, v)| ((i, j), -v)).collect();
        for i in 0..self.n {
            *map.entry((i, i)).or_insert(0.0) += 1.0;
        }
        Self::from_map(self.n, map)
    }

    /// Exact square via a dense accumulator per row. Costs
    /// `sum_w deg(w)^2`.
    pub fn square(&self) -> Self {
        let adj = self.neighbors();
        let n = self.n;
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|u| {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for &(w, a_uw) in &adj[u] {
                    for &(v, a_wv) in &adj[w] {
                        if v >= u {
                            *acc.entry(v).or_insert(0.0) += a_uw * a_wv;
                        }
                    }
                }
                acc.into_iter().filter(|&(_, v)| v != 0.0).collect()
            })
            .collect();
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (u, row) in rows.into_iter().enumerate() {
            for (v, x) in row {
                cols.push(v);
                vals.push(x);
            }
            row_ptr[u + 1] = cols.len();
        }
        SparseSymMatrix {
            n,
            row_ptr,
            cols,
            vals,
            full: OnceLock::new(),
        }
    }

    pub fn to_dense(&self) -> DenseSym {
        let mut d = DenseSym::zeros(self.n);
        for (i, j, v) in self.entries() {
            d.set_sym(i, j, v);
        }
        d
    }
}

impl LinearOperator for SparseSymMatrix {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply_to(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_raw(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tri() -> SparseSymMatrix {
        SparseSymMatrix::from_triplets(3, [(0, 0, 2.0), (1, 0, -1.0), (1, 1, 2.0), (2, 1, -1.0), (2, 2, 2.0)])
            .unwrap()
    }

    #[test]
    fn lower_triangle_input_is_flipped() {
        let a = tri();
        assert_eq!(a.nnz(), 5);
        assert_eq!(a.get(0, 1), -1.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert!(a.entries().all(|(i, j, _)| i <= j));
    }

    #[test]
    fn mirrored_duplicates_are_accepted_conflicts_rejected() {
        let ok = SparseSymMatrix::from_triplets(2, [(0, 1, 3.0), (1, 0, 3.0)]).unwrap();
        assert_eq!(ok.nnz(), 1);
        let err = SparseSymMatrix::from_triplets(2, [(0, 1, 3.0), (1, 0, 2.0)]).unwrap_err();
        assert!(matches!(err, Error::NonSymmetric { .. }));
    }

    #[test]
    fn non_finite_and_out_of_range_are_rejected() {
        assert!(matches!(
            SparseSymMatrix::from_triplets(2, [(0, 0, f64::NAN)]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            SparseSymMatrix::from_triplets(2, [(0, 2, 1.0)]),
            Err(Error::IndexOutOfBounds { .. })
        ));
    }

    #[test]
    fn zeros_are_not_stored() {
        let a = SparseSymMatrix::from_summed_triplets(2, [(0, 1, 1.0), (1, 0, -1.0), (0, 0, 1.0)]).unwrap();
        assert_eq!(a.nnz(), 1);
    }

    #[test]
    fn matvec_of_basis_vectors_reads_entries() {
        let a = tri();
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            let col = a.mul_vec(&e).unwrap();
            for j in 0..3 {
                assert_eq!(col[j], a.get(i, j));
            }
        }
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let a = tri();
        assert!(matches!(a.mul_vec(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn square_matches_dense() {
        let a = tri();
        let s = a.square().to_dense();
        let d = a.to_dense();
        let dd = d.matmul(&d);
        for i in 0..3 {
            for j in 0..3 {
                assert!((s.get(i, j) - dd[i * 3 + j]).abs() < 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn parallel_and_scatter_products_agree(
            entries in proptest::collection::vec((0usize..12, 0usize..12, -2.0f64..2.0), 1..40),
            x in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let a = SparseSymMatrix::from_summed_triplets(12, entries).unwrap();
            let y1 = a.mul_vec(&x).unwrap();
            let mut y2 = vec![0.0; 12];
            a.par_matvec(&x, &mut y2).unwrap();
            let d = a.to_dense();
            for i in 0..12 {
                let exact: f64 = (0..12).map(|j| d.get(i, j) * x[j]).sum();
                prop_assert!((y1[i] - exact).abs() < 1e-12);
                prop_assert!((y2[i] - exact).abs() < 1e-12);
            }
        }
    }
}
