//! Compressed sparse row operators.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{CemError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, _) in &triplets {
            if r >= nrows {
                return Err(CemError::IndexOutOfRange { index: r, size: nrows });
            }
            if c >= ncols {
                return Err(CemError::IndexOutOfRange { index: c, size: ncols });
            }
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_add(1.0, x, &mut y);
        y
    }

    /// `y += alpha * A x`
    pub fn mul_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            let s: f64 = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
            *yr += alpha * s;
        }
    }

    /// `A^T x`
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * xr;
            }
        }
        y
    }

    /// `x^T A x`
    pub fn quad(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// `y^T A x`
    pub fn bilinear(&self, y: &[f64], x: &[f64]) -> f64 {
        assert_eq!(y.len(), self.nrows);
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                y[r] * cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum::<f64>()
            })
            .sum()
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, t).expect("indices in range")
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `sum_k alpha_k A_k` on the union pattern.
    pub fn lin_comb(terms: &[(f64, &SparseOperator)]) -> Result<Self> {
        let (nrows, ncols) = match terms.first() {
            Some((_, a)) => (a.nrows, a.ncols),
            None => return Err(CemError::InvalidInput("empty linear combination".into())),
        };
        if terms.iter().any(|(_, a)| a.nrows != nrows || a.ncols != ncols) {
            return Err(CemError::InvalidInput("operator dimensions differ".into()));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut acc: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            acc.clear();
            for (alpha, a) in terms {
                let (cols, vals) = a.row(r);
                acc.extend(cols.iter().zip(vals).map(|(&c, &v)| (c, alpha * v)));
            }
            acc.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < acc.len() {
                let c = acc[k].0;
                let mut v = 0.0;
                while k < acc.len() && acc[k].0 == c {
                    v += acc[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    /// Principal submatrix on `dofs`, in the order given.
    pub fn restrict(&self, dofs: &[usize]) -> Result<Self> {
        self.submatrix(dofs, dofs)
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            if c >= self.ncols {
                return Err(CemError::IndexOutOfRange { index: c, size: self.ncols });
            }
            map[c] = k;
        }
        let mut t = Vec::new();
        for (k, &r) in rows.iter().enumerate() {
            if r >= self.nrows {
                return Err(CemError::IndexOutOfRange { index: r, size: self.nrows });
            }
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                if map[c] != usize::MAX {
                    t.push((k, map[c], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), t)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| CemError::InvalidInput(format!("sparse conversion failed: {e:?}")))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Sparse LU factorization of a square operator.
    pub fn lu(&self) -> Result<SparseLu> {
        if self.nrows != self.ncols {
            return Err(CemError::InvalidInput("LU of a non-square operator".into()));
        }
        let lu = self
            .to_faer()?
            .sp_lu()
            .map_err(|e| CemError::Singular(format!("sparse LU failed: {e:?}")))?;
        Ok(SparseLu { n: self.nrows, lu })
    }
}

pub struct SparseLu {
    n: usize,
    lu: Lu<usize, f64>,
}

impl SparseLu {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves for every column of `rhs` in place.
    pub fn solve_in_place(&self, rhs: &mut Mat<f64>) -> Result<()> {
        self.lu.solve_in_place(rhs.as_mut());
        for j in 0..rhs.ncols() {
            if rhs.col(j).iter().any(|v| !v.is_finite()) {
                return Err(CemError::Singular("non-finite sparse solve".into()));
            }
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut m = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        self.solve_in_place(&mut m)?;
        Ok(m.col(0).iter().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_are_summed() {
        let a = SparseOperator::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0)]).unwrap();
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 0), 2.0);
        assert_eq!(a.nnz(), 2);
        assert!(SparseOperator::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn lu_solves() {
        let a = SparseOperator::from_triplets(3, 3, vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, -1.0), (1, 1, 3.0), (2, 2, 2.0), (2, 0, 1.0)]).unwrap();
        let x = a.lu().unwrap().solve(&[1.0, 2.0, 3.0]).unwrap();
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-14);
        }
        let singular = SparseOperator::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(singular.lu().and_then(|lu| lu.solve(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn restrict_identity() {
        let id = SparseOperator::identity(10);
        let r = id.restrict(&[1, 4, 7]).unwrap();
        assert_eq!(r, SparseOperator::identity(3));
        let all: Vec<usize> = (0..10).collect();
        assert_eq!(id.restrict(&all).unwrap(), id);
        assert!(id.restrict(&[10]).is_err());
    }

    fn arb_matrix() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
        (1usize..8).prop_flat_map(|n| {
            (Just(n), prop::collection::vec((0..n, 0..n, -5.0f64..5.0), 0..30))
        })
    }

    proptest! {
        #[test]
        fn matvec_matches_dense((n, t) in arb_matrix(), x in prop::collection::vec(-1.0f64..1.0, 8)) {
            let a = SparseOperator::from_triplets(n, n, t).unwrap();
            let d = a.to_dense();
            let y = a.mul_vec(&x[..n]);
            for r in 0..n {
                let e: f64 = (0..n).map(|c| d[(r, c)] * x[c]).sum();
                prop_assert!((y[r] - e).abs() < 1e-12);
            }
            let yt = a.mul_vec_transpose(&x[..n]);
            let at = a.transpose().mul_vec(&x[..n]);
            for r in 0..n {
                prop_assert!((yt[r] - at[r]).abs() < 1e-12);
            }
        }

        #[test]
        fn lin_comb_matches_dense((n, t1) in arb_matrix(), t2 in prop::collection::vec((0usize..8, 0usize..8, -5.0f64..5.0), 0..30)) {
            let t2: Vec<_> = t2.into_iter().filter(|&(r, c, _)| r < n && c < n).collect();
            let a = SparseOperator::from_triplets(n, n, t1).unwrap();
            let b = SparseOperator::from_triplets(n, n, t2).unwrap();
            let s = SparseOperator::lin_comb(&[(2.0, &a), (-0.5, &b)]).unwrap();
            let (da, db, ds) = (a.to_dense(), b.to_dense(), s.to_dense());
            for r in 0..n {
                for c in 0..n {
                    prop_assert!((ds[(r, c)] - (2.0 * da[(r, c)] - 0.5 * db[(r, c)])).abs() < 1e-12);
                }
            }
        }
    }
}
