//! Compressed sparse row storage plus the per-surface Laplacian pattern.

use nalgebra::DMatrix;

/// Row-major compressed sparse matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets. Duplicates are summed in input order, so the
    /// result depends only on the triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (r, c, v) = triplets[t];
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
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

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &t)
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[cfg(test)]
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push((j, i, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Submatrix on the given rows and columns, in the order given.
    pub fn extract(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut t = Vec::new();
        for (new_r, &old_r) in rows.iter().enumerate() {
            for (c, v) in self.row(old_r) {
                if col_map[c] != usize::MAX {
                    t.push((new_r, col_map[c], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &t)
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Max absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.ncols];
        for (&c, &v) in self.col_idx.iter().zip(&self.values) {
            sums[c] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Largest |a_ij − a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

/// Sparsity of a vertex Laplacian (adjacency plus diagonal) together with
/// the storage slot of every directed edge of every face.
#[derive(Debug, Clone)]
pub struct LaplacianPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    diag: Vec<usize>,
    /// Per face `[i, j, k]`: slots of (i,j), (j,i), (j,k), (k,j), (k,i), (i,k).
    face_slots: Vec<[usize; 6]>,
}

impl LaplacianPattern {
    pub(crate) fn new(n: usize, faces: &[[usize; 3]], edges: &[[usize; 2]]) -> Self {
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &[a, b] in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut diag = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, cols) in adj.iter_mut().enumerate() {
            cols.sort_unstable();
            cols.dedup();
            let start = col_idx.len();
            diag.push(start + cols.binary_search(&i).unwrap());
            col_idx.extend_from_slice(cols);
            row_ptr.push(col_idx.len());
        }
        let slot = |i: usize, j: usize| -> usize {
            let r = row_ptr[i]..row_ptr[i + 1];
            r.start + col_idx[r].binary_search(&j).expect("edge present in pattern")
        };
        let face_slots = faces
            .iter()
            .map(|&[i, j, k]| [slot(i, j), slot(j, i), slot(j, k), slot(k, j), slot(k, i), slot(i, k)])
            .collect();
        Self {
            n,
            row_ptr,
            col_idx,
            diag,
            face_slots,
        }
    }

    pub fn face_slots(&self, face: usize) -> [usize; 6] {
        self.face_slots[face]
    }

    /// A zero-valued matrix carrying this pattern.
    pub fn zeros(&self) -> CsrMatrix {
        CsrMatrix {
            nrows: self.n,
            ncols: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: vec![0.0; self.col_idx.len()],
        }
    }

    /// Laplacian with off-diagonal (a,b) = −Σ ω over the faces containing
    /// the edge. `weights[t]` follows the order of [`Self::face_slots`].
    /// Faces are scattered in list order; every off-diagonal receives two
    /// contributions, so the result does not depend on the face order.
    pub fn assemble(&self, weights: &[[f64; 6]]) -> CsrMatrix {
        assert_eq!(weights.len(), self.face_slots.len());
        let mut m = self.zeros();
        for (slots, w) in self.face_slots.iter().zip(weights) {
            for c in 0..6 {
                m.values[slots[c]] -= w[c];
            }
        }
        self.close_diagonal(&mut m);
        m
    }

    /// Sets every diagonal entry to minus the sum of the off-diagonals of its
    /// row, summed in column order.
    pub fn close_diagonal(&self, m: &mut CsrMatrix) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                if p != self.diag[i] {
                    s += m.values[p];
                }
            }
            m.values[self.diag[i]] = -s;
        }
    }
}
