//! Compressed sparse row storage for symmetric matrices (both triangles stored).

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles an `n x n` matrix, summing duplicate entries in input order.
    pub fn from_triplets(n: usize, entries: &[(u32, u32, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in entries {
            counts[r as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut buf = vec![(0u32, 0.0f64); entries.len()];
        for &(r, c, v) in entries {
            let slot = &mut next[r as usize];
            buf[*slot] = (c, v);
            *slot += 1;
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(entries.len() / 2);
        let mut values = Vec::with_capacity(entries.len() / 2);
        indptr.push(0);
        for i in 0..n {
            let row = &mut buf[counts[i]..counts[i + 1]];
            // Stable sort keeps the summation order of duplicates fixed.
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut s = 0.0;
                while k < row.len() && row[k].0 == c {
                    s += row[k].1;
                    k += 1;
                }
                indices.push(c);
                values.push(s);
            }
            indptr.push(indices.len());
        }
        CsrMatrix { n, indptr, indices, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, &v)| v * x[c as usize]).sum();
        }
    }

    /// `Y = A X` for `p` column-major vectors of length `n`.
    pub fn mul_block(&self, x: &[f64], y: &mut [f64], p: usize) {
        let n = self.n;
        for j in 0..p {
            self.mul_vec(&x[j * n..(j + 1) * n], &mut y[j * n..(j + 1) * n]);
        }
    }

    /// `a A + b B` for two matrices with identical sparsity patterns.
    pub fn combine(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!(self.indptr, other.indptr, "patterns differ");
        assert_eq!(self.indices, other.indices, "patterns differ");
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        CsrMatrix { n: self.n, indptr: self.indptr.clone(), indices: self.indices.clone(), values }
    }

    /// Keeps rows and columns flagged in `keep`, renumbered in order.
    pub fn restrict(&self, keep: &[bool]) -> CsrMatrix {
        let mut map = vec![u32::MAX; self.n];
        let mut m = 0u32;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                map[i] = m;
                m += 1;
            }
        }
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in (0..self.n).filter(|&i| keep[i]) {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let mc = map[c as usize];
                if mc != u32::MAX {
                    indices.push(mc);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { n: m as usize, indptr, indices, values }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                d[(i, c as usize)] = v;
            }
        }
        d
    }
}
