//! Dual box QP with one equality constraint,
//!
//! ```text
//! maximize   L(α) = −½ αᵀGα + αᵀ1
//! subject to Σ αᵢ yᵢ = 0,  0 ≤ αᵢ ≤ uᵢ
//! ```
//!
//! solved by two-coordinate working-set steps on the maximal violating pair,
//! plus a brute-force grid oracle for `n ≤ 4`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000_000;

const DEGENERATE_CURVATURE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BoxQp {
    g: DMatrix<f64>,
    y: Vec<i8>,
    upper: Vec<f64>,
}

impl BoxQp {
    pub fn new(g: DMatrix<f64>, y: Vec<i8>, upper: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if g.nrows() != n || g.ncols() != n || upper.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.nrows().max(upper.len()),
            });
        }
        if let Some(u) = upper.iter().find(|&&u| !(u > 0.0 && u.is_finite())) {
            return Err(Error::InvalidInput(format!("box cap {u} must be positive and finite")));
        }
        if y.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidInput("labels must be +1 or -1".into()));
        }
        let asym = (&g - g.transpose()).amax();
        if asym > 1e-10 * (1.0 + g.amax()) {
            return Err(Error::InvalidInput(format!("G is not symmetric (max asymmetry {asym:e})")));
        }
        Ok(Self { g, y, upper })
    }

    /// Caps `c0 · W(yᵢ)` with `W = 1` on class `+1` and `n1/n2` on class `-1`.
    pub fn class_weighted(g: DMatrix<f64>, y: Vec<i8>, c0: f64) -> Result<Self> {
        let upper = class_caps(&y, c0);
        Self::new(g, y, upper)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn y(&self) -> &[i8] {
        &self.y
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let a = DVector::from_column_slice(alpha);
        -0.5 * a.dot(&(&self.g * &a)) + a.sum()
    }

    /// Gradient of `½αᵀGα − 1ᵀα`, i.e. of `−L`.
    fn descent_gradient(&self, alpha: &[f64]) -> Vec<f64> {
        let a = DVector::from_column_slice(alpha);
        (&self.g * a).iter().map(|v| v - 1.0).collect()
    }
}

/// Per-sample caps `c0 · W(yᵢ)`.
pub fn class_caps(y: &[i8], c0: f64) -> Vec<f64> {
    let n1 = y.iter().filter(|&&v| v == 1).count() as f64;
    let n2 = y.iter().filter(|&&v| v == -1).count() as f64;
    y.iter()
        .map(|&v| if v == 1 { c0 } else { c0 * n1 / n2 })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// `L(α) = −½αᵀGα + αᵀ1`.
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Index sets of the first-order optimality test. `up` may increase `yᵢαᵢ`,
/// `low` may decrease it.
fn in_up(alpha: f64, upper: f64, y: i8) -> bool {
    if y == 1 {
        alpha < upper
    } else {
        alpha > 0.0
    }
}

fn in_low(alpha: f64, upper: f64, y: i8) -> bool {
    if y == 1 {
        alpha > 0.0
    } else {
        alpha < upper
    }
}

/// Maximal violating pair `(i, j, gap)`; ties go to the lowest index.
fn select_pair(problem: &BoxQp, alpha: &[f64], grad: &[f64]) -> Option<(usize, usize, f64)> {
    let mut best_up: Option<(usize, f64)> = None;
    let mut best_low: Option<(usize, f64)> = None;
    for t in 0..problem.n() {
        let y = problem.y[t];
        let score = -f64::from(y) * grad[t];
        if in_up(alpha[t], problem.upper[t], y) && best_up.is_none_or(|(_, s)| score > s) {
            best_up = Some((t, score));
        }
        if in_low(alpha[t], problem.upper[t], y) && best_low.is_none_or(|(_, s)| score < s) {
            best_low = Some((t, score));
        }
    }
    match (best_up, best_low) {
        (Some((i, hi)), Some((j, lo))) => Some((i, j, hi - lo)),
        _ => None,
    }
}

/// Largest gap `max_{up}(−yᵢ∇ᵢ) − min_{low}(−yⱼ∇ⱼ)` over the feasible
/// directions; zero at an exact optimum.
pub fn kkt_violation(problem: &BoxQp, alpha: &[f64]) -> f64 {
    let grad = problem.descent_gradient(alpha);
    select_pair(problem, alpha, &grad).map_or(0.0, |(_, _, gap)| gap.max(0.0))
}

pub fn solve_smo(problem: &BoxQp, tol: f64, max_iter: usize) -> Result<DualSolution> {
    solve_smo_traced(problem, tol, max_iter, |_, _| {})
}

/// [`solve_smo`] with a callback receiving `(iteration, α)` after each pair
/// update.
pub fn solve_smo_traced(
    problem: &BoxQp,
    tol: f64,
    max_iter: usize,
    mut trace: impl FnMut(usize, &[f64]),
) -> Result<DualSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let n = problem.n();
    let g = &problem.g;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0usize;
    let mut gap = f64::INFINITY;
    let mut converged = false;

    while iterations < max_iter {
        let Some((i, j, pair_gap)) = select_pair(problem, &alpha, &grad) else {
            gap = 0.0;
            converged = true;
            break;
        };
        gap = pair_gap;
        if gap <= tol {
            converged = true;
            break;
        }
        let (yi, yj) = (f64::from(problem.y[i]), f64::from(problem.y[j]));
        // α_i += yi·t, α_j −= yj·t keeps Σ yα fixed
        let bound_i = if yi > 0.0 { problem.upper[i] - alpha[i] } else { alpha[i] };
        let bound_j = if yj > 0.0 { alpha[j] } else { problem.upper[j] - alpha[j] };
        let wall = bound_i.min(bound_j);
        let curvature = g[(i, i)] + g[(j, j)] - 2.0 * yi * yj * g[(i, j)];
        let step = if curvature > DEGENERATE_CURVATURE {
            (gap / curvature).min(wall)
        } else {
            wall
        };
        if !(step > 0.0) {
            // both coordinates already sit on their walls in this direction
            break;
        }
        let old_i = alpha[i];
        let old_j = alpha[j];
        alpha[i] = if step == bound_i {
            if yi > 0.0 { problem.upper[i] } else { 0.0 }
        } else {
            (old_i + yi * step).clamp(0.0, problem.upper[i])
        };
        alpha[j] = if step == bound_j {
            if yj > 0.0 { 0.0 } else { problem.upper[j] }
        } else {
            (old_j - yj * step).clamp(0.0, problem.upper[j])
        };
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for (t, gt) in grad.iter_mut().enumerate() {
            *gt += g[(t, i)] * di + g[(t, j)] * dj;
        }
        iterations += 1;
        trace(iterations, &alpha);
    }

    let objective = problem.objective(&alpha);
    Ok(DualSolution {
        kkt_residual: if converged { gap.max(0.0) } else { kkt_violation(problem, &alpha) },
        alpha,
        objective,
        iterations,
        converged,
    })
}

/// Exhaustive search on a uniform grid of `grid_points` values per free
/// coordinate (`α_1..α_{n-1}` over `[0, uᵢ]`), with `α_n` solved from the
/// equality constraint. Infeasible points are skipped. `n ≤ 4` only.
pub fn brute_force_small(problem: &BoxQp, grid_points: usize) -> Result<DualSolution> {
    let n = problem.n();
    if !(2..=4).contains(&n) {
        return Err(Error::InvalidInput(format!("brute force supports 2 <= n <= 4, got {n}")));
    }
    if !(2..=401).contains(&grid_points) {
        return Err(Error::InvalidInput(format!("grid_points must be in [2, 401], got {grid_points}")));
    }
    let free = n - 1;
    let steps = grid_points - 1;
    let yl = f64::from(problem.y[free]);
    let mut idx = vec![0usize; free];
    let mut alpha = vec![0.0; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    'outer: loop {
        let mut signed = 0.0;
        for k in 0..free {
            alpha[k] = problem.upper[k] * idx[k] as f64 / steps as f64;
            signed += f64::from(problem.y[k]) * alpha[k];
        }
        let last = -yl * signed;
        let slack = 1e-12 * problem.upper[free];
        if last >= -slack && last <= problem.upper[free] + slack {
            alpha[free] = last.clamp(0.0, problem.upper[free]);
            let obj = problem.objective(&alpha);
            if best.as_ref().is_none_or(|(b, _)| obj > *b) {
                best = Some((obj, alpha.clone()));
            }
        }
        for i in idx.iter_mut().take(free) {
            *i += 1;
            if *i <= steps {
                continue 'outer;
            }
            *i = 0;
        }
        break;
    }
    let (objective, alpha) = best.expect("alpha = 0 is always on the grid and feasible");
    Ok(DualSolution {
        kkt_residual: kkt_violation(problem, &alpha),
        alpha,
        objective,
        iterations: grid_points.pow(free as u32),
        converged: true,
    })
}
