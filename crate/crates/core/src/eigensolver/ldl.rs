//! Sparse `L D L^T` factorization with a geometric nested-dissection ordering.
//!
//! The factorization is the classic up-looking algorithm: row `k` of `L` is
//! obtained from a sparse triangular solve whose pattern is the reach of row `k`
//! of `A` in the elimination tree. No pivoting is done, so it applies to
//! symmetric indefinite matrices only when every leading minor is nonsingular,
//! which holds generically for `K - sigma M` away from eigenvalues. The signs of
//! `D` give the inertia of the matrix.

use super::sparse::CsrMatrix;
use crate::geometry::Vec2;

const LEAF: usize = 64;
const NONE: usize = usize::MAX;

/// Fill-reducing permutation, returned as `perm[new] = old`.
pub fn nested_dissection(a: &CsrMatrix, coords: &[Vec2]) -> Vec<usize> {
    let n = a.n();
    assert_eq!(coords.len(), n);
    let mut out = Vec::with_capacity(n);
    let mut stamp = vec![0u32; n];
    let mut next_stamp = 0u32;
    let ids: Vec<usize> = (0..n).collect();
    dissect(ids, a, coords, &mut stamp, &mut next_stamp, &mut out);
    out
}

fn dissect(
    mut ids: Vec<usize>,
    a: &CsrMatrix,
    coords: &[Vec2],
    stamp: &mut [u32],
    next_stamp: &mut u32,
    out: &mut Vec<usize>,
) {
    if ids.len() <= LEAF {
        out.extend(ids);
        return;
    }
    let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
    for &i in &ids {
        lo = lo.inf(&coords[i]);
        hi = hi.sup(&coords[i]);
    }
    let axis = if hi.x - lo.x >= hi.y - lo.y { 0 } else { 1 };
    let half = ids.len() / 2;
    ids.select_nth_unstable_by(half, |&p, &q| {
        coords[p][axis].total_cmp(&coords[q][axis]).then(p.cmp(&q))
    });
    let right = ids.split_off(half);
    let left = ids;
    *next_stamp += 1;
    let s = *next_stamp;
    for &i in &left {
        stamp[i] = s;
    }
    let (sep, rest): (Vec<usize>, Vec<usize>) = right.into_iter().partition(|&i| {
        let (cols, _) = a.row(i);
        cols.iter().any(|&c| stamp[c as usize] == s)
    });
    // Keep the order deterministic regardless of the selection algorithm.
    let mut left = left;
    let mut rest = rest;
    let mut sep = sep;
    left.sort_unstable();
    rest.sort_unstable();
    sep.sort_unstable();
    dissect(left, a, coords, stamp, next_stamp, out);
    dissect(rest, a, coords, stamp, next_stamp, out);
    out.extend(sep);
}

/// Elimination tree and column structure of `L` for a fixed pattern and ordering.
#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<usize>,
    lp: Vec<usize>,
}

impl Symbolic {
    pub fn new(a: &CsrMatrix, perm: Vec<usize>) -> Self {
        let n = a.n();
        assert_eq!(perm.len(), n);
        let mut pinv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            let (cols, _) = a.row(perm[k]);
            for &c in cols {
                let mut i = pinv[c as usize];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        Symbolic { n, perm, pinv, parent, lp }
    }

    /// Number of strictly-lower entries of `L`.
    pub fn nnz(&self) -> usize {
        self.lp[self.n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<u32>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

/// Pivot `index` (in the permuted order) was numerically zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroPivot {
    pub index: usize,
}

impl LdlFactor {
    pub fn new(sym: &Symbolic, a: &CsrMatrix) -> Result<Self, ZeroPivot> {
        let n = sym.n;
        assert_eq!(a.n(), n);
        let nnz = sym.nnz();
        let mut li = vec![0u32; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let (cols, vals) = a.row(sym.perm[k]);
            let mut diag_scale = 0.0f64;
            for (&c, &v) in cols.iter().zip(vals) {
                let mut i = sym.pinv[c as usize];
                if i <= k {
                    y[i] += v;
                    if i == k {
                        diag_scale = v.abs();
                    }
                    let mut len = 0;
                    while flag[i] != k {
                        pattern[len] = i;
                        len += 1;
                        flag[i] = k;
                        i = sym.parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        pattern[top] = pattern[len];
                    }
                }
            }
            let mut dk = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let start = sym.lp[i];
                let end = start + lnz[i];
                for p in start..end {
                    y[li[p] as usize] -= lx[p] * yi;
                }
                let lki = yi / d[i];
                dk -= lki * yi;
                li[end] = k as u32;
                lx[end] = lki;
                lnz[i] += 1;
            }
            if dk == 0.0 || !dk.is_finite() || dk.abs() <= 1e-14 * diag_scale {
                return Err(ZeroPivot { index: k });
            }
            d[k] = dk;
        }
        Ok(LdlFactor { n, perm: sym.perm.clone(), lp: sym.lp.clone(), li, lx, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn inertia(&self) -> Inertia {
        let negative = self.d.iter().filter(|&&x| x < 0.0).count();
        let zero = self.d.iter().filter(|&&x| x == 0.0).count();
        Inertia { negative, zero, positive: self.n - negative - zero }
    }

    /// Solves `A X = B` in place for `p` column-major right-hand sides.
    pub fn solve_block(&self, b: &mut [f64], p: usize, work: &mut Vec<f64>) {
        let n = self.n;
        assert_eq!(b.len(), n * p);
        work.clear();
        work.resize(n * p, 0.0);
        // Row-major interleaving keeps the p right-hand sides of a row adjacent.
        for (k, &old) in self.perm.iter().enumerate() {
            for j in 0..p {
                work[k * p + j] = b[j * n + old];
            }
        }
        match p {
            1 => self.solve_rows::<1>(work),
            2 => self.solve_rows::<2>(work),
            4 => self.solve_rows::<4>(work),
            8 => self.solve_rows::<8>(work),
            _ => self.solve_rows_dyn(work, p),
        }
        for (k, &old) in self.perm.iter().enumerate() {
            for j in 0..p {
                b[j * n + old] = work[k * p + j];
            }
        }
    }

    fn solve_rows<const P: usize>(&self, x: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let xj: [f64; P] = x[j * P..(j + 1) * P].try_into().unwrap();
            for p in self.lp[j]..self.lp[j + 1] {
                let r = self.li[p] as usize * P;
                let l = self.lx[p];
                for q in 0..P {
                    x[r + q] -= l * xj[q];
                }
            }
        }
        for j in 0..n {
            let inv = 1.0 / self.d[j];
            for q in 0..P {
                x[j * P + q] *= inv;
            }
        }
        for j in (0..n).rev() {
            let mut acc = [0.0; P];
            for p in self.lp[j]..self.lp[j + 1] {
                let r = self.li[p] as usize * P;
                let l = self.lx[p];
                for q in 0..P {
                    acc[q] += l * x[r + q];
                }
            }
            for q in 0..P {
                x[j * P + q] -= acc[q];
            }
        }
    }

    fn solve_rows_dyn(&self, x: &mut [f64], pw: usize) {
        let n = self.n;
        let mut xj = vec![0.0; pw];
        for j in 0..n {
            xj.copy_from_slice(&x[j * pw..(j + 1) * pw]);
            for p in self.lp[j]..self.lp[j + 1] {
                let r = self.li[p] as usize * pw;
                let l = self.lx[p];
                for q in 0..pw {
                    x[r + q] -= l * xj[q];
                }
            }
        }
        for j in 0..n {
            let inv = 1.0 / self.d[j];
            for q in 0..pw {
                x[j * pw + q] *= inv;
            }
        }
        for j in (0..n).rev() {
            xj.iter_mut().for_each(|v| *v = 0.0);
            for p in self.lp[j]..self.lp[j + 1] {
                let r = self.li[p] as usize * pw;
                let l = self.lx[p];
                for q in 0..pw {
                    xj[q] += l * x[r + q];
                }
            }
            for q in 0..pw {
                x[j * pw + q] -= xj[q];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 5-point Laplacian on a `m x m` grid, shifted by `s`.
    fn grid(m: usize, s: f64) -> (CsrMatrix, Vec<Vec2>) {
        let idx = |i: usize, j: usize| (j * m + i) as u32;
        let mut t = Vec::new();
        let mut coords = Vec::new();
        for j in 0..m {
            for i in 0..m {
                coords.push(Vec2::new(i as f64, j as f64));
                t.push((idx(i, j), idx(i, j), 4.0 - s));
                if i + 1 < m {
                    t.push((idx(i, j), idx(i + 1, j), -1.0));
                    t.push((idx(i + 1, j), idx(i, j), -1.0));
                }
                if j + 1 < m {
                    t.push((idx(i, j), idx(i, j + 1), -1.0));
                    t.push((idx(i, j + 1), idx(i, j), -1.0));
                }
            }
        }
        (CsrMatrix::from_triplets(m * m, &t), coords)
    }

    #[test]
    fn ordering_is_a_permutation() {
        let (a, c) = grid(40, 0.0);
        let mut p = nested_dissection(&a, &c);
        p.sort_unstable();
        assert_eq!(p, (0..1600).collect::<Vec<_>>());
    }

    #[test]
    fn nested_dissection_limits_fill() {
        let (a, c) = grid(60, 0.0);
        let natural = Symbolic::new(&a, (0..a.n()).collect());
        let nd = Symbolic::new(&a, nested_dissection(&a, &c));
        assert!(nd.nnz() * 2 < natural.nnz(), "nd {} natural {}", nd.nnz(), natural.nnz());
    }

    #[test]
    fn solves_indefinite_system_and_counts_negatives() {
        let (a, c) = grid(20, 1.3);
        let sym = Symbolic::new(&a, nested_dissection(&a, &c));
        let f = LdlFactor::new(&sym, &a).unwrap();
        let dense = a.to_dense();
        let eig = dense.clone().symmetric_eigen();
        let neg = eig.eigenvalues.iter().filter(|&&x| x < 0.0).count();
        assert_eq!(f.inertia().negative, neg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [1usize, 3, 4] {
            let xs: Vec<f64> = (0..a.n() * p).map(|_| rng.random::<f64>() - 0.5).collect();
            let x = DMatrix::from_column_slice(a.n(), p, &xs);
            let b = &dense * &x;
            let mut sol = b.as_slice().to_vec();
            f.solve_block(&mut sol, p, &mut Vec::new());
            let err = (DMatrix::from_column_slice(a.n(), p, &sol) - x).norm();
            assert!(err < 1e-9, "p = {p}: {err}");
        }
        let v = DVector::from_element(a.n(), 1.0);
        let mut s = (&dense * &v).as_slice().to_vec();
        f.solve_block(&mut s, 1, &mut Vec::new());
        assert!(s.iter().all(|x| (x - 1.0).abs() < 1e-9));
    }
}
