//! Central-difference gradients and a BFGS minimizer.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h` for every coordinate. `h` defaults to
/// `1e-6 · max(1, ‖x‖∞)`.
pub fn numerical_gradient<F>(f: F, x: &[f64], h: Option<f64>) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let h = h.unwrap_or_else(|| default_step(x));
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::numeric(format!("objective is not finite near coordinate {i}")));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

pub fn default_step(x: &[f64]) -> f64 {
    1e-6 * x.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeConfig {
    pub grad_tol: f64,
    /// Stop when `|Δf| ≤ rel_f_tol · max(|f|)`.
    pub rel_f_tol: f64,
    pub max_iters: usize,
    /// Finite-difference step; `None` uses [`default_step`].
    pub step: Option<f64>,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig {
            grad_tol: 1e-8,
            rel_f_tol: 1e-10,
            max_iters: 200,
            step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientNorm,
    RelativeChange,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    /// Objective after every accepted step, starting with `f(x0)`.
    pub trace: Vec<f64>,
}

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 60;

/// A point on the search line with its value, gradient and slope along the direction.
struct LinePoint {
    alpha: f64,
    f: f64,
    g: DVector<f64>,
    slope: f64,
}

/// Minimizer of the cubic through two points with known slopes, or `None`
/// when it is not real.
fn cubic_min(a: &LinePoint, b: &LinePoint) -> Option<f64> {
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Strong-Wolfe line search (bracket, then zoom with safeguarded cubic
/// interpolation). The gradient at the accepted point is returned for reuse.
fn line_search<F, G>(f: &F, grad: &G, x: &DVector<f64>, fx: f64, g: &DVector<f64>, dir: &DVector<f64>) -> Option<LinePoint>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let slope0 = g.dot(dir);
    let probe = |alpha: f64| -> Option<LinePoint> {
        let p = x + dir * alpha;
        let fp = f(p.as_slice());
        if !fp.is_finite() {
            return None;
        }
        let gp = grad(&p).ok()?;
        let slope = gp.dot(dir);
        Some(LinePoint { alpha, f: fp, g: gp, slope })
    };
    let armijo = |p: &LinePoint| p.f <= fx + WOLFE_C1 * p.alpha * slope0;
    let curvature = |p: &LinePoint| p.slope.abs() <= -WOLFE_C2 * slope0;

    let origin = LinePoint { alpha: 0.0, f: fx, g: g.clone(), slope: slope0 };
    let mut prev = origin;
    let mut alpha = 1.0;
    let mut evals = 0;
    // Bracketing phase.
    let (mut lo, mut hi) = loop {
        if evals >= MAX_LINE_EVALS {
            return None;
        }
        evals += 1;
        let Some(p) = probe(alpha) else {
            // Outside the domain: shrink toward the last good point.
            alpha = prev.alpha + 0.25 * (alpha - prev.alpha);
            continue;
        };
        if !armijo(&p) || (evals > 1 && p.f >= prev.f) {
            break (prev, p);
        }
        if curvature(&p) {
            return Some(p);
        }
        if p.slope >= 0.0 {
            break (p, prev);
        }
        let next = cubic_min(&prev, &p)
            .filter(|t| *t > 1.1 * p.alpha)
            .unwrap_or(2.0 * p.alpha)
            .min(10.0 * p.alpha);
        prev = p;
        alpha = next;
    };
    // Zoom phase: `lo` satisfies sufficient decrease and has the lowest value so far.
    while evals < MAX_LINE_EVALS {
        evals += 1;
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= f64::EPSILON * b.max(1.0) {
            break;
        }
        let trial = cubic_min(&lo, &hi)
            .filter(|t| *t > a + 0.1 * width && *t < b - 0.1 * width)
            .unwrap_or(0.5 * (a + b));
        let Some(p) = probe(trial) else {
            hi = LinePoint { alpha: trial, f: f64::INFINITY, g: lo.g.clone(), slope: f64::INFINITY };
            continue;
        };
        if !armijo(&p) || p.f >= lo.f {
            hi = p;
        } else {
            if curvature(&p) {
                return Some(p);
            }
            if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
    // Out of budget: settle for any decrease found.
    (lo.alpha > 0.0 && lo.f < fx).then_some(lo)
}

/// Quasi-Newton (BFGS inverse-Hessian) minimization with numerical gradients.
pub fn minimize<F>(f: F, x0: &[f64], config: &MinimizeConfig) -> Result<MinimizeResult>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let gradient = |x: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(DVector::from_vec(numerical_gradient(&f, x.as_slice(), config.step)?))
    };
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x0);
    if !fx.is_finite() {
        return Err(Error::numeric("objective is not finite at the starting point"));
    }
    let mut g = gradient(&x)?;
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;
    let mut trace = vec![fx];
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;

    while iterations < config.max_iters {
        if g.norm() < config.grad_tol {
            stop = StopReason::GradientNorm;
            break;
        }
        let mut dir = -(&h_inv * &g);
        if !(g.dot(&dir) < 0.0) {
            h_inv = DMatrix::identity(n, n);
            first_update = true;
            dir = -g.clone();
        }
        if first_update {
            // Keep the first trial step at unit length in parameter space.
            dir /= dir.norm().max(1.0);
        }
        let Some(next) = line_search(&f, &gradient, &x, fx, &g, &dir) else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        let s = &dir * next.alpha;
        let y = &next.g - &g;
        let sy = s.dot(&y);
        iterations += 1;

        if sy > 1e-12 * s.norm() * y.norm() {
            if first_update {
                h_inv *= sy / y.norm_squared();
                first_update = false;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded.
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }

        let change = (fx - next.f).abs();
        let scale = fx.abs().max(next.f.abs());
        x += &s;
        fx = next.f;
        g = next.g;
        trace.push(fx);
        if change <= config.rel_f_tol * scale {
            stop = StopReason::RelativeChange;
            break;
        }
    }
    if stop != StopReason::GradientNorm && g.norm() < config.grad_tol {
        stop = StopReason::GradientNorm;
    }
    Ok(MinimizeResult {
        x: x.as_slice().to_vec(),
        f: fx,
        iterations,
        converged: matches!(stop, StopReason::GradientNorm | StopReason::RelativeChange),
        stop,
        trace,
    })
}
