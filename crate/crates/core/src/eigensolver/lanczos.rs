//! Lowest eigenvalues of a sparse pencil `K u = lambda M u` by spectrum slicing.
//!
//! Each slice runs a block Lanczos iteration on `(K - sigma M)^{-1} M` in the
//! `M` inner product with full reorthogonalization. Consecutive shifts overlap,
//! and every slice is certified by Sylvester's law of inertia: the number of
//! negative pivots of `K - sigma M` counts the eigenvalues below `sigma`, so a
//! slice is accepted only when the eigenvalues found between two shifts match
//! the difference of the two counts.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fem::Pencil;
use super::ldl::{nested_dissection, LdlFactor, Symbolic};
use super::sparse::CsrMatrix;
use super::EigenError;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Lanczos block size.
    pub block: usize,
    /// Converged eigenvalues sought above each shift.
    pub per_shift: usize,
    /// Relative residual tolerance on the shift-inverted operator.
    pub tol: f64,
    pub seed: u64,
    /// Pencils with at most this many unknowns are solved densely.
    pub dense_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { block: 8, per_shift: 40, tol: 1e-8, seed: 0x5eed, dense_limit: 1200 }
    }
}

/// The `count` smallest eigenvalues, ascending. `base_shift` must lie below all of them.
pub fn lowest_eigenvalues(
    pencil: &Pencil,
    count: usize,
    base_shift: f64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>, EigenError> {
    let n = pencil.stiffness.n();
    if count > n {
        return Err(EigenError::InvalidInput(format!("{count} eigenvalues requested from {n} unknowns")));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    if n <= cfg.dense_limit {
        return dense_eigenvalues(&pencil.stiffness, &pencil.mass, count);
    }
    Slicer::new(pencil, cfg).run(count, base_shift)
}

/// Reference solver through a dense Cholesky reduction.
pub fn dense_eigenvalues(k: &CsrMatrix, m: &CsrMatrix, count: usize) -> Result<Vec<f64>, EigenError> {
    let chol = m
        .to_dense()
        .cholesky()
        .ok_or_else(|| EigenError::Convergence("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let kd = k.to_dense();
    let y = l
        .solve_lower_triangular(&kd)
        .ok_or_else(|| EigenError::Convergence("singular mass factor".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| EigenError::Convergence("singular mass factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let mut vals: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals.truncate(count);
    Ok(vals)
}

struct Shift {
    sigma: f64,
    below: usize,
    factor: LdlFactor,
}

struct Slicer<'a> {
    k: &'a CsrMatrix,
    m: &'a CsrMatrix,
    sym: Symbolic,
    cfg: &'a SolverConfig,
    runs: u64,
}

/// Eigenvalues found by one Lanczos run, with the interval they are complete in.
struct Window {
    /// Converged eigenvalues forming an unbroken run around the shift, ascending.
    vals: Vec<f64>,
    /// Every eigenvalue in `(lo, hi)` is in `vals`, barring missed copies.
    lo: f64,
    hi: f64,
}

impl Window {
    fn count_in(&self, a: f64, b: f64) -> usize {
        self.vals.iter().filter(|&&x| x >= a && x < b).count()
    }

    fn take_in(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        self.vals.iter().copied().filter(move |&x| x >= a && x < b)
    }

    fn above(&self, sigma: f64) -> Vec<f64> {
        self.vals.iter().copied().filter(|&x| x >= sigma).collect()
    }
}

#[derive(Clone, Copy)]
struct Goal {
    /// Require `lo < below`.
    below: Option<f64>,
    /// Require this many eigenvalues in `[sigma, hi)`.
    above: usize,
}

impl<'a> Slicer<'a> {
    fn new(p: &'a Pencil, cfg: &'a SolverConfig) -> Self {
        let perm = nested_dissection(&p.stiffness, &p.coords);
        let sym = Symbolic::new(&p.stiffness, perm);
        Slicer { k: &p.stiffness, m: &p.mass, sym, cfg, runs: 0 }
    }

    fn factor(&self, sigma: f64) -> Result<Shift, EigenError> {
        let mut s = sigma;
        for _ in 0..4 {
            let a = self.k.combine(1.0, self.m, -s);
            match LdlFactor::new(&self.sym, &a) {
                Ok(factor) => {
                    let below = factor.inertia().negative;
                    return Ok(Shift { sigma: s, below, factor });
                }
                // The shift sits on an eigenvalue; nudge it.
                Err(_) => s += 1e-7 * (s.abs() + 1.0),
            }
        }
        Err(EigenError::Convergence(format!("K - sigma M is singular near sigma = {sigma}")))
    }

    fn run(&mut self, count: usize, base_shift: f64) -> Result<Vec<f64>, EigenError> {
        let n = self.k.n();
        let mut prev = self.factor(base_shift)?;
        if prev.below != 0 {
            return Err(EigenError::InvalidInput(format!(
                "{} eigenvalues lie below the base shift {base_shift}",
                prev.below
            )));
        }
        let mut target = self.cfg.per_shift.max(8);
        let mut prev_win = self.lanczos(&prev, Goal { below: None, above: target }, None)?;
        let mut out: Vec<f64> = Vec::with_capacity(count + target);
        loop {
            let up = prev_win.above(prev.sigma);
            if up.len() >= n - prev.below || prev.below + up.len() >= count && prev_win.hi == f64::INFINITY {
                out.extend(up);
                break;
            }
            if up.len() < 2 {
                return Err(EigenError::Convergence(format!(
                    "no progress above sigma = {:.6e}",
                    prev.sigma
                )));
            }
            // Hand over between two well-separated trusted eigenvalues.
            let from = ((up.len() as f64 * 0.6).ceil() as usize).clamp(1, up.len() - 1);
            let j = (from..up.len())
                .max_by(|&a, &b| (up[a] - up[a - 1]).total_cmp(&(up[b] - up[b - 1])))
                .unwrap();
            let mu = 0.5 * (up[j - 1] + up[j]);
            let mut step = mu - prev.sigma;
            let mut accepted = None;
            for _ in 0..4 {
                let next = self.factor(mu + step)?;
                let expected = next.below - prev.below;
                let from_prev = prev_win.count_in(prev.sigma, mu);
                let goal = Goal { below: Some(mu), above: target };
                let mut state = None;
                let win = self.lanczos(&next, goal, Some(&mut state))?;
                if win.lo >= mu {
                    // Slice too wide for the subspace cap: move the shift closer.
                    step *= 0.5;
                    target = (target / 2).max(8);
                    continue;
                }
                if from_prev + win.count_in(mu, next.sigma) == expected {
                    let mut vals: Vec<f64> = prev_win.take_in(prev.sigma, mu).collect();
                    vals.extend(win.take_in(mu, next.sigma));
                    accepted = Some((next, win, vals));
                    break;
                }
                // Counts disagree: cover the whole slice from the new shift alone.
                let wide = Goal { below: Some(prev.sigma), above: target };
                let win = self.resume(&next, wide, &mut state)?;
                if win.lo < prev.sigma && win.count_in(prev.sigma, next.sigma) == expected {
                    let vals = win.take_in(prev.sigma, next.sigma).collect();
                    accepted = Some((next, win, vals));
                    break;
                }
                let win = self.lanczos(&next, wide, None)?;
                if win.lo < prev.sigma && win.count_in(prev.sigma, next.sigma) == expected {
                    let vals = win.take_in(prev.sigma, next.sigma).collect();
                    accepted = Some((next, win, vals));
                    break;
                }
                return Err(EigenError::Convergence(format!(
                    "inertia reports {expected} eigenvalues in [{:.6e}, {:.6e}) but {} were found",
                    prev.sigma,
                    next.sigma,
                    win.count_in(prev.sigma, next.sigma)
                )));
            }
            let (next, win, vals) = accepted.ok_or_else(|| {
                EigenError::Convergence(format!("could not cover the slice above sigma = {:.6e}", prev.sigma))
            })?;
            out.extend(vals);
            debug_assert_eq!(out.len(), next.below);
            prev = next;
            prev_win = win;
            if out.len() >= count {
                break;
            }
        }
        out.sort_by(f64::total_cmp);
        out.truncate(count);
        Ok(out)
    }

    fn lanczos(&mut self, shift: &Shift, goal: Goal, keep: Option<&mut Option<Lanczos>>) -> Result<Window, EigenError> {
        self.runs += 1;
        let seed = self.cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(self.runs);
        let mut lz = Lanczos::new(self.m, self.cfg, shift, goal, seed);
        let win = lz.iterate(self.m, shift, goal, self.cfg)?;
        if let Some(slot) = keep {
            *slot = Some(lz);
        }
        Ok(win)
    }

    fn resume(&mut self, shift: &Shift, goal: Goal, state: &mut Option<Lanczos>) -> Result<Window, EigenError> {
        match state {
            Some(lz) => {
                lz.grow(self.m.n(), goal, self.cfg);
                lz.iterate(self.m, shift, goal, self.cfg)
            }
            None => self.lanczos(shift, goal, None),
        }
    }
}

struct Lanczos {
    n: usize,
    p: usize,
    cap: usize,
    v: DMatrix<f64>,
    mv: DMatrix<f64>,
    t: DMatrix<f64>,
    /// Columns of `v` whose images under the operator are folded into `t`.
    done: usize,
    /// Columns of `v` in use; `cols - done` is zero or one block.
    cols: usize,
    /// Coupling from the last processed block to the next one.
    last_r: DMatrix<f64>,
    rng: ChaCha8Rng,
    work: Vec<f64>,
}

/// `basis[:, ..cols]^T w` through a cache-blocked kernel.
fn project(basis: &DMatrix<f64>, cols: usize, w: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = w.shape();
    let mut h = DMatrix::zeros(cols, p);
    // SAFETY: `basis` and `w` are column-major with leading dimension `n`, so
    // `basis^T` has row stride `n`; `h` is a `cols x p` column-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            cols,
            n,
            p,
            1.0,
            basis.as_ptr(),
            n as isize,
            1,
            w.as_ptr(),
            1,
            n as isize,
            0.0,
            h.as_mut_ptr(),
            1,
            cols as isize,
        );
    }
    h
}

fn capacity(n: usize, goal: Goal, cfg: &SolverConfig) -> usize {
    let p = cfg.block.max(1);
    let want = 4 * (goal.above + cfg.per_shift) + 16 * p;
    (want - want % p).min(n - n % p)
}

impl Lanczos {
    fn new(m: &CsrMatrix, cfg: &SolverConfig, shift: &Shift, goal: Goal, seed: u64) -> Self {
        let n = m.n();
        let p = cfg.block.max(1);
        let cap = capacity(n, goal, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lz = Lanczos {
            n,
            p,
            cap,
            v: DMatrix::zeros(n, cap),
            mv: DMatrix::zeros(n, cap),
            t: DMatrix::zeros(cap, cap),
            done: 0,
            cols: p,
            last_r: DMatrix::zeros(p, p),
            rng: ChaCha8Rng::seed_from_u64(0),
            work: Vec::new(),
        };
        let start = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
        lz.rng = rng;
        let _ = shift;
        let (q, mq, _) = lz.orthonormalize(m, start, 0, 0);
        lz.v.columns_mut(0, p).copy_from(&q);
        lz.mv.columns_mut(0, p).copy_from(&mq);
        lz
    }

    fn grow(&mut self, n: usize, goal: Goal, cfg: &SolverConfig) {
        let cap = (2 * self.cap).max(capacity(n, goal, cfg)).min(n - n % self.p);
        if cap <= self.cap {
            return;
        }
        self.v = self.v.clone().resize_horizontally(cap, 0.0);
        self.mv = self.mv.clone().resize_horizontally(cap, 0.0);
        self.t = self.t.clone().resize(cap, cap, 0.0);
        self.cap = cap;
    }

    /// M-orthonormalizes `w` against the first `against` basis vectors and itself.
    ///
    /// Returns the new block, its image under `M`, and `R` with `w_orth = q R`.
    fn orthonormalize(&mut self, m: &CsrMatrix, mut w: DMatrix<f64>, against: usize, passes: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (n, p) = (self.n, self.p);
        for _ in 0..passes {
            if against > 0 {
                let h = project(&self.mv, against, &w);
                w.gemm(-1.0, &self.v.columns(0, against), &h, 1.0);
            }
        }
        let mut r_total = DMatrix::<f64>::identity(p, p);
        let mut q = w;
        let mut mq = DMatrix::zeros(n, p);
        for pass in 0..3 {
            m.mul_block(q.as_slice(), mq.as_mut_slice(), p);
            let g = q.tr_mul(&mq);
            let g = (&g + g.transpose()) * 0.5;
            let scale = g.diagonal().max();
            let chol = (scale > 0.0).then(|| g.clone().cholesky()).flatten();
            let ok = chol.as_ref().is_some_and(|c| {
                let d = c.l_dirty().diagonal();
                d.min() > 1e-7 * d.max()
            });
            if !ok {
                if pass == 0 {
                    // Invariant subspace reached: continue with a fresh random block.
                    let fresh = DMatrix::from_fn(n, p, |_, _| self.rng.random::<f64>() - 0.5);
                    let (q2, mq2, _) = self.orthonormalize(m, fresh, against, 2);
                    return (q2, mq2, DMatrix::zeros(p, p));
                }
                break;
            }
            let r = chol.unwrap().l().transpose();
            let rinv = r.clone().try_inverse().expect("triangular factor is invertible");
            q = &q * &rinv;
            mq = &mq * &rinv;
            r_total = &r * &r_total;
            if pass == 1 {
                break;
            }
        }
        (q, mq, r_total)
    }

    /// Applies the operator to the newest block and appends the next one.
    fn step(&mut self, m: &CsrMatrix, shift: &Shift) {
        let (p, j) = (self.p, self.done);
        let mut w = self.mv.columns(j, p).clone_owned();
        shift.factor.solve_block(w.as_mut_slice(), p, &mut self.work);
        let filled = j + p;
        let h = project(&self.mv, filled, &w);
        w.gemm(-1.0, &self.v.columns(0, filled), &h, 1.0);
        for a in 0..filled {
            for b in 0..p {
                self.t[(a, j + b)] = h[(a, b)];
                self.t[(j + b, a)] = h[(a, b)];
            }
        }
        for a in 0..p {
            for b in 0..a {
                let s = 0.5 * (self.t[(j + a, j + b)] + self.t[(j + b, j + a)]);
                self.t[(j + a, j + b)] = s;
                self.t[(j + b, j + a)] = s;
            }
        }
        self.done = filled;
        // The second Gram-Schmidt pass.
        let (q, mq, r) = self.orthonormalize(m, w, filled, 1);
        if filled + p <= self.cap && filled + p <= self.n {
            self.v.columns_mut(filled, p).copy_from(&q);
            self.mv.columns_mut(filled, p).copy_from(&mq);
            for a in 0..p {
                for b in 0..p {
                    self.t[(filled + a, j + b)] = r[(a, b)];
                    self.t[(j + b, filled + a)] = r[(a, b)];
                }
            }
            self.cols = filled + p;
        }
        self.last_r = r;
    }

    fn window(&self, shift: &Shift, cfg: &SolverConfig, base: bool) -> Window {
        let (d, p) = (self.done, self.p);
        let exhausted = d >= self.n;
        let td = self.t.view((0, 0), (d, d)).clone_owned();
        let eig = SymmetricEigen::new(td);
        let mut ritz: Vec<(f64, bool)> = Vec::with_capacity(d);
        for i in 0..d {
            let theta = eig.eigenvalues[i];
            let converged = if exhausted {
                true
            } else {
                let y = eig.eigenvectors.view((d - p, i), (p, 1));
                (&self.last_r * y).norm() <= cfg.tol * theta.abs()
            };
            if theta != 0.0 {
                ritz.push((shift.sigma + 1.0 / theta, converged));
            }
        }
        ritz.sort_by(|a, b| a.0.total_cmp(&b.0));
        let split = ritz.partition_point(|r| r.0 < shift.sigma);
        let mut vals = Vec::new();
        let mut hi = f64::INFINITY;
        for &(l, c) in &ritz[split..] {
            if !c {
                hi = l;
                break;
            }
            vals.push(l);
        }
        let mut lo = if base { f64::NEG_INFINITY } else { f64::NAN };
        let mut below = Vec::new();
        for &(l, c) in ritz[..split].iter().rev() {
            if !c {
                lo = l;
                break;
            }
            below.push(l);
        }
        if lo.is_nan() {
            // No unconverged value below: completeness reaches the lowest trusted value only.
            lo = below.last().map_or(shift.sigma, |&l| l - 1e-12 * l.abs().max(1.0));
        }
        if hi == f64::INFINITY && !exhausted {
            hi = vals.last().map_or(shift.sigma, |&l| l + 1e-12 * l.abs().max(1.0));
        }
        below.reverse();
        below.extend(vals);
        Window { vals: below, lo, hi }
    }

    fn iterate(&mut self, m: &CsrMatrix, shift: &Shift, goal: Goal, cfg: &SolverConfig) -> Result<Window, EigenError> {
        let base = shift.below == 0;
        let needed = goal.above + goal.below.map_or(0, |_| goal.above);
        let first_check = (needed + needed / 2).max(2 * self.p);
        let every = (4 * self.p).max(needed / 8);
        let mut next_check = first_check.max(self.done + self.p).min(self.cap);
        loop {
            if self.cols > self.done {
                self.step(m, shift);
            }
            let at_cap = self.cols == self.done;
            if self.done >= next_check || at_cap {
                let w = self.window(shift, cfg, base);
                let below_ok = goal.below.is_none_or(|b| w.lo < b);
                let above_ok = w.count_in(shift.sigma, f64::INFINITY) >= goal.above || w.hi == f64::INFINITY;
                if (below_ok && above_ok) || at_cap {
                    return Ok(w);
                }
                next_check = self.done + every;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver::fem::assemble;
    use crate::eigensolver::mesh::{Mesh, MAX_ANGLE_DEG};
    use crate::eigensolver::BoundaryCondition;
    use crate::geometry::Trapezoid;

    fn pencil(h: f64, bc: BoundaryCondition) -> Pencil {
        let t = Trapezoid::new(2.0, 1.0, 75f64.to_radians(), 60f64.to_radians()).unwrap();
        let mesh = Mesh::build(&t.vertices(), h, MAX_ANGLE_DEG).unwrap();
        assemble(&mesh, bc)
    }

    #[test]
    fn slicing_matches_dense_reference() {
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
            let p = pencil(0.06, bc);
            let n = p.stiffness.n();
            assert!(n > 500 && n < 1500, "{n}");
            let reference = dense_eigenvalues(&p.stiffness, &p.mass, 150).unwrap();
            let cfg = SolverConfig { dense_limit: 0, per_shift: 20, ..SolverConfig::default() };
            let base = if bc == BoundaryCondition::Dirichlet { 0.0 } else { -1.0 };
            let got = lowest_eigenvalues(&p, 150, base, &cfg).unwrap();
            assert_eq!(got.len(), 150);
            for (a, b) in got.iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }
}
