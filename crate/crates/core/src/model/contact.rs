//! Bound-constrained convex QP `min 1/2 x'Hx + g'x  s.t. x >= 0` with a
//! symmetric positive semidefinite pentadiagonal `H`.
//!
//! Primal active-set method: iterates stay feasible and the objective never
//! increases. Each pass either moves toward the minimizer of the current face
//! (stopping at the first bound it meets) or releases bounds whose multipliers
//! are negative. All negative bounds are released together when that keeps the
//! step feasible; otherwise only the most negative one, lowest index first on
//! ties, which guarantees strict descent and so termination. Faces whose
//! reduced Hessian is singular (free rigid-body motion) are crossed along the
//! null direction until a bound blocks.

use crate::error::{Error, Result};

/// Symmetric pentadiagonal quadratic plus linear term.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedQp {
    pub diag: Vec<f64>,
    pub off1: Vec<f64>,
    pub off2: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Bound multipliers, `(Hx + g)_i` on the active set and zero elsewhere.
    pub multipliers: Vec<f64>,
    /// Indices held at the bound, ascending.
    pub active: Vec<usize>,
    pub iterations: usize,
}

impl BandedQp {
    pub fn zeros(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off1: vec![0.0; n.saturating_sub(1)],
            off2: vec![0.0; n.saturating_sub(2)],
            g: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Accumulate `value` into `H[i][j]` (and its mirror), `j >= i`.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        match j - i {
            0 => self.diag[i] += value,
            1 => self.off1[i] += value,
            2 => self.off2[i] += value,
            _ => panic!("entry ({i}, {j}) outside the band"),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        match j - i {
            0 => self.diag[i],
            1 => self.off1[i],
            2 => self.off2[i],
            _ => 0.0,
        }
    }

    /// `(Hx + g)_i`.
    pub fn gradient_at(&self, x: &[f64], i: usize) -> f64 {
        let n = self.len();
        let lo = i.saturating_sub(2);
        let hi = (i + 2).min(n - 1);
        let mut acc = self.g[i];
        for j in lo..=hi {
            acc += self.entry(i, j) * x[j];
        }
        acc
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.len();
        let mut q = 0.0;
        for i in 0..n {
            q += 0.5 * self.diag[i] * x[i] * x[i] + self.g[i] * x[i];
            if i + 1 < n {
                q += self.off1[i] * x[i] * x[i + 1];
            }
            if i + 2 < n {
                q += self.off2[i] * x[i] * x[i + 2];
            }
        }
        q
    }
}

/// LDL' factors of the principal submatrix of `H` on `free` (sorted).
struct SubFactor {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl SubFactor {
    fn new(qp: &BandedQp, free: &[usize], shift: f64) -> Option<Self> {
        let m = free.len();
        let scale = qp
            .diag
            .iter()
            .fold(0.0f64, |a, b| a.max(b.abs()))
            .max(f64::MIN_POSITIVE);
        let a = |p: usize, q: usize| -> f64 {
            let (i, j) = (free[p], free[q]);
            if j - i <= 2 {
                qp.entry(i, j)
            } else {
                0.0
            }
        };
        let mut d = vec![0.0; m];
        let mut l1 = vec![0.0; m];
        let mut l2 = vec![0.0; m];
        for k in 0..m {
            let mut dk = a(k, k) + shift;
            if k >= 1 {
                dk -= l1[k] * l1[k] * d[k - 1];
            }
            if k >= 2 {
                dk -= l2[k] * l2[k] * d[k - 2];
            }
            if !(dk > 1e-13 * scale) {
                return None;
            }
            d[k] = dk;
            if k + 1 < m {
                let mut v = a(k, k + 1);
                if k >= 1 {
                    v -= l2[k + 1] * l1[k] * d[k - 1];
                }
                l1[k + 1] = v / dk;
            }
            if k + 2 < m {
                l2[k + 2] = a(k, k + 2) / dk;
            }
        }
        Some(Self { d, l1, l2 })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let m = rhs.len();
        for k in 0..m {
            if k >= 1 {
                rhs[k] -= self.l1[k] * rhs[k - 1];
            }
            if k >= 2 {
                rhs[k] -= self.l2[k] * rhs[k - 2];
            }
        }
        for k in 0..m {
            rhs[k] /= self.d[k];
        }
        for k in (0..m).rev() {
            if k + 1 < m {
                rhs[k] -= self.l1[k + 1] * rhs[k + 1];
            }
            if k + 2 < m {
                rhs[k] -= self.l2[k + 2] * rhs[k + 2];
            }
        }
    }
}

enum Face {
    /// Minimizer of the face.
    Minimizer(Vec<f64>),
    /// Unit direction of zero curvature on the face.
    Flat(Vec<f64>),
}

/// Minimizer of the quadratic on the face `x_i = 0, i in active`, or a
/// zero-curvature direction if that face is unbounded in some direction.
fn face_minimizer(qp: &BandedQp, active: &[bool]) -> Face {
    let n = qp.len();
    let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
    let mut x = vec![0.0; n];
    if free.is_empty() {
        return Face::Minimizer(x);
    }
    match SubFactor::new(qp, &free, 0.0) {
        Some(factor) => {
            let mut rhs: Vec<f64> = free.iter().map(|&i| -qp.g[i]).collect();
            factor.solve(&mut rhs);
            for (k, &i) in free.iter().enumerate() {
                x[i] = rhs[k];
            }
            Face::Minimizer(x)
        }
        None => Face::Flat(null_direction(qp, &free)),
    }
}

/// Approximate null vector of the free block by shifted inverse iteration.
fn null_direction(qp: &BandedQp, free: &[usize]) -> Vec<f64> {
    let n = qp.len();
    let scale = qp.diag.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let factor =
        SubFactor::new(qp, free, 1e-9 * scale).expect("shifted block is positive definite");
    let m = free.len();
    let mut z: Vec<f64> = (0..m)
        .map(|k| 1.0 + (k as f64 * 0.618_033_988_75).fract())
        .collect();
    for _ in 0..3 {
        factor.solve(&mut z);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        z.iter_mut().for_each(|v| *v /= norm);
    }
    let mut d = vec![0.0; n];
    for (k, &i) in free.iter().enumerate() {
        d[i] = z[k];
    }
    d
}

/// Face minimizer orthogonal to the null direction `d`, by iterative
/// refinement on the shifted block until the residual stops shrinking (its
/// floor is a few times `noise`). `None` if the face has no minimizer.
fn balanced_face_point(qp: &BandedQp, active: &[bool], d: &[f64], noise: f64) -> Option<Vec<f64>> {
    let n = qp.len();
    let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
    let scale = qp.diag.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let factor = SubFactor::new(qp, &free, 1e-9 * scale)?;
    let mut x = vec![0.0; n];
    let mut best = (f64::INFINITY, x.clone());
    for _ in 0..200 {
        let mut r: Vec<f64> = free.iter().map(|&i| -qp.gradient_at(&x, i)).collect();
        let along: f64 = free.iter().enumerate().map(|(k, &i)| r[k] * d[i]).sum();
        free.iter()
            .enumerate()
            .for_each(|(k, &i)| r[k] -= along * d[i]);
        let size = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if size >= 0.5 * best.0 {
            break;
        }
        best = (size, x.clone());
        factor.solve(&mut r);
        for (k, &i) in free.iter().enumerate() {
            x[i] += r[k];
        }
        let along: f64 = x.iter().zip(d).map(|(a, b)| a * b).sum();
        x.iter_mut().zip(d).for_each(|(a, b)| *a -= along * b);
    }
    (best.0 <= 1e3 * noise).then_some(best.1)
}

/// Largest step along `dir` from `x` keeping free entries non-negative, and
/// the lowest blocking index.
fn ratio_test(x: &[f64], dir: &[f64], active: &[bool], cap: f64) -> (f64, Option<usize>) {
    let mut step = cap;
    let mut block = None;
    for i in 0..x.len() {
        if active[i] || dir[i] >= 0.0 {
            continue;
        }
        let t = (x[i] / -dir[i]).max(0.0);
        if t < step {
            step = t;
            block = Some(i);
        }
    }
    (step, block)
}

/// Solve `min 1/2 x'Hx + g'x` over `x >= 0`, starting from `x = 0` with every
/// bound in the working set.
pub fn solve_nonnegative_qp(qp: &BandedQp, max_iterations: usize) -> Result<QpSolution> {
    solve_nonnegative_qp_from(qp, &vec![true; qp.len()], max_iterations)
}

/// As [`solve_nonnegative_qp`], with an initial working set. `x = 0` is
/// feasible for any working set, so a guess only changes the path taken, not
/// the answer.
pub fn solve_nonnegative_qp_from(
    qp: &BandedQp,
    initial_active: &[bool],
    max_iterations: usize,
) -> Result<QpSolution> {
    let n = qp.len();
    assert_eq!(
        initial_active.len(),
        n,
        "working set length must match the problem"
    );
    let h_scale = qp
        .diag
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()))
        .max(f64::MIN_POSITIVE);
    let g_scale =
        qp.g.iter()
            .fold(0.0f64, |a, b| a.max(b.abs()))
            .max(f64::MIN_POSITIVE);
    let x_tol = 1e-14 * g_scale / h_scale;
    // Round-off level of gradients, and the release threshold for
    // multipliers; faces pinned by two adjacent nodes are ill-conditioned
    // enough to put noise well above the former.
    let noise = 1e-12 * g_scale;
    let m_tol = 1e-10 * g_scale;

    let mut active = initial_active.to_vec();
    let mut x = vec![0.0; n];
    // Bound released on a multiplier near round-off; if it blocks the very
    // next step at zero length, the release was spurious and `x` is optimal.
    let mut marginal: Option<usize> = None;
    let marginal_tol = 1e-7 * g_scale;

    for iteration in 0..max_iterations {
        let target = match face_minimizer(qp, &active) {
            Face::Minimizer(t) => t,
            Face::Flat(mut d) => {
                let slope: f64 = (0..n).map(|i| qp.gradient_at(&x, i) * d[i]).sum();
                // A body balanced on one node is neutral in tipping; the slope
                // is then pure round-off from the previous face solve, while a
                // real torque gives a slope many orders larger.
                if slope.abs() <= 1e3 * noise {
                    // Every point of the face minimizer line is optimal, take
                    // the one nearest the current iterate.
                    match balanced_face_point(qp, &active, &d, noise) {
                        Some(mut t) => {
                            let along: f64 = x.iter().zip(&d).map(|(a, b)| a * b).sum();
                            t.iter_mut().zip(&d).for_each(|(t, d)| *t += along * d);
                            t
                        }
                        None => {
                            return Err(Error::Unbounded(
                                "free rigid-body mode with no load to fix it".into(),
                            ))
                        }
                    }
                } else {
                    if slope > 0.0 {
                        d.iter_mut().for_each(|v| *v = -*v);
                    }
                    let (step, block) = ratio_test(&x, &d, &active, f64::INFINITY);
                    let Some(b) = block else {
                        return Err(Error::Unbounded("objective decreases without bound".into()));
                    };
                    if step <= 0.0 && marginal == Some(b) {
                        active[b] = true;
                        return Ok(finish(qp, x, active, iteration));
                    }
                    marginal = None;
                    for i in 0..n {
                        x[i] += step * d[i];
                    }
                    x[b] = 0.0;
                    active[b] = true;
                    continue;
                }
            }
        };

        let dir: Vec<f64> = target.iter().zip(&x).map(|(t, v)| t - v).collect();
        let moving = dir.iter().any(|d| d.abs() > x_tol);
        if moving {
            let (step, block) = ratio_test(&x, &dir, &active, 1.0);
            if let Some(b) = block.filter(|_| step <= 0.0 && block == marginal) {
                active[b] = true;
                return Ok(finish(qp, x, active, iteration));
            }
            marginal = None;
            match block {
                Some(b) if step < 1.0 => {
                    for i in 0..n {
                        x[i] += step * dir[i];
                    }
                    x[b] = 0.0;
                    active[b] = true;
                }
                _ => x = target,
            }
            continue;
        }
        x = target;

        let negative: Vec<(usize, f64)> = (0..n)
            .filter(|&i| active[i])
            .map(|i| (i, qp.gradient_at(&x, i)))
            .filter(|&(_, m)| m < -m_tol)
            .collect();
        if negative.is_empty() {
            return Ok(finish(qp, x, active, iteration));
        }

        // Release the negative bounds together, dropping any that the joint
        // face minimizer would push below zero; descent needs every released
        // index to move upward.
        let mut group: Vec<usize> = negative.iter().map(|&(i, _)| i).collect();
        while group.len() > 1 {
            let mut trial = active.clone();
            for &i in &group {
                trial[i] = false;
            }
            let Face::Minimizer(t) = face_minimizer(qp, &trial) else {
                break;
            };
            let keep: Vec<usize> = group.iter().copied().filter(|&i| t[i] > 0.0).collect();
            if keep.len() == group.len() {
                active = trial;
                break;
            }
            group = keep;
        }
        if group.len() > 1 && group.iter().all(|&i| !active[i]) {
            continue;
        }
        let (release, m) = negative
            .iter()
            .copied()
            .fold(
                (usize::MAX, 0.0),
                |best, (i, m)| if m < best.1 { (i, m) } else { best },
            );
        active[release] = false;
        marginal = (m >= -marginal_tol).then_some(release);
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
    })
}

fn finish(qp: &BandedQp, mut x: Vec<f64>, active: Vec<bool>, iterations: usize) -> QpSolution {
    let n = qp.len();
    for (xi, &a) in x.iter_mut().zip(&active) {
        if a || *xi < 0.0 {
            *xi = 0.0;
        }
    }
    let multipliers = (0..n)
        .map(|i| {
            if active[i] {
                qp.gradient_at(&x, i).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let active = (0..n).filter(|&i| active[i]).collect();
    QpSolution {
        x,
        multipliers,
        active,
        iterations,
    }
}
