//! Limited-memory BFGS minimizer with a strong-Wolfe line search.

use crate::real::Real;
use crate::Result;

#[derive(Debug, Clone)]
pub struct LbfgsOptions<R> {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the gradient sup-norm falls below this.
    pub grad_tol: R,
    /// Stop when the relative objective change falls below this.
    pub f_rel_tol: R,
    pub wolfe_c1: R,
    pub wolfe_c2: R,
}

impl<R: Real> Default for LbfgsOptions<R> {
    fn default() -> Self {
        LbfgsOptions {
            memory: 30,
            max_iters: 2000,
            grad_tol: R::c(1e-6),
            f_rel_tol: R::c(1e-10),
            wolfe_c1: R::c(1e-4),
            wolfe_c2: R::c(0.9),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradTol,
    FunctionTol,
    MaxIters,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Minimum<R> {
    pub x: Vec<R>,
    pub f: R,
    pub grad: Vec<R>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl<R: Real> Minimum<R> {
    pub fn grad_sup_norm(&self) -> R {
        self.grad.iter().fold(R::zero(), |a, g| a.max(g.abs()))
    }

    pub fn converged(&self, opts: &LbfgsOptions<R>) -> bool {
        match self.stop {
            StopReason::GradTol | StopReason::FunctionTol => true,
            _ => self.grad_sup_norm() <= opts.grad_tol,
        }
    }
}

fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sup_norm<R: Real>(v: &[R]) -> R {
    v.iter().fold(R::zero(), |a, g| a.max(g.abs()))
}

/// Minimize a smooth function with analytic gradient. `eval` returns the
/// objective and gradient; an error or non-finite value at a trial point is
/// treated as an infinite objective so the line search backs off.
pub fn minimize<R, F>(opts: &LbfgsOptions<R>, x0: Vec<R>, mut eval: F) -> Result<Minimum<R>>
where
    R: Real,
    F: FnMut(&[R]) -> Result<(R, Vec<R>)>,
{
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut grad) = eval(&x)?;

    let mut s_hist: Vec<Vec<R>> = Vec::new();
    let mut y_hist: Vec<Vec<R>> = Vec::new();
    let mut rho_hist: Vec<R> = Vec::new();

    let mut iterations = 0;
    let mut stop = StopReason::MaxIters;
    let mut stalled = 0usize;

    if sup_norm(&grad) <= opts.grad_tol {
        return Ok(Minimum { x, f, grad, iterations, stop: StopReason::GradTol });
    }

    for iter in 0..opts.max_iters {
        iterations = iter + 1;

        // two-loop recursion
        let mut d: Vec<R> = grad.iter().map(|&g| -g).collect();
        let hist_len = s_hist.len();
        let mut alphas = vec![R::zero(); hist_len];
        for j in (0..hist_len).rev() {
            let a = rho_hist[j] * dot(&s_hist[j], &d);
            alphas[j] = a;
            for (di, yi) in d.iter_mut().zip(&y_hist[j]) {
                *di = *di - a * *yi;
            }
        }
        if hist_len > 0 {
            let j = hist_len - 1;
            let gamma = dot(&s_hist[j], &y_hist[j]) / dot(&y_hist[j], &y_hist[j]);
            for di in d.iter_mut() {
                *di = *di * gamma;
            }
        }
        for j in 0..hist_len {
            let b = rho_hist[j] * dot(&y_hist[j], &d);
            let coef = alphas[j] - b;
            for (di, si) in d.iter_mut().zip(&s_hist[j]) {
                *di = *di + coef * *si;
            }
        }

        let mut slope = dot(&grad, &d);
        if slope >= R::zero() || !slope.is_finite() {
            // not a descent direction: restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = grad.iter().map(|&g| -g).collect();
            slope = dot(&grad, &d);
            if slope >= R::zero() {
                stop = StopReason::GradTol;
                break;
            }
        }

        let ls = line_search(opts, &x, f, slope, &d, &mut eval)?;
        let Some((step, fx, gx)) = ls else {
            stop = StopReason::LineSearchFailed;
            break;
        };

        let mut s = vec![R::zero(); n];
        let mut yv = vec![R::zero(); n];
        for i in 0..n {
            s[i] = step * d[i];
            yv[i] = gx[i] - grad[i];
        }
        let sy = dot(&s, &yv);
        if sy > R::c(1e-12) * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(sy.recip());
            s_hist.push(s.clone());
            y_hist.push(yv);
        }

        let f_prev = f;
        for i in 0..n {
            x[i] += s[i];
        }
        f = fx;
        grad = gx;

        if sup_norm(&grad) <= opts.grad_tol {
            stop = StopReason::GradTol;
            break;
        }
        if (f_prev - f).abs() <= opts.f_rel_tol * (f.abs() + R::one()) {
            // require two consecutive negligible changes so a single short
            // line-search step cannot end the run prematurely
            stalled += 1;
            if stalled >= 2 {
                stop = StopReason::FunctionTol;
                break;
            }
        } else {
            stalled = 0;
        }
    }

    Ok(Minimum { x, f, grad, iterations, stop })
}

type Probe<R> = Option<(R, Vec<R>)>;

/// Strong-Wolfe line search (bracket + zoom). Returns (step, f, grad) or
/// None on failure.
fn line_search<R, F>(
    opts: &LbfgsOptions<R>,
    x: &[R],
    f0: R,
    slope0: R,
    d: &[R],
    eval: &mut F,
) -> Result<Option<(R, R, Vec<R>)>>
where
    R: Real,
    F: FnMut(&[R]) -> Result<(R, Vec<R>)>,
{
    let n = x.len();
    let mut trial = vec![R::zero(); n];
    let mut probe = |step: R, eval: &mut F| -> Result<Probe<R>> {
        for i in 0..n {
            trial[i] = x[i] + step * d[i];
        }
        match eval(&trial) {
            Ok((f, g)) if f.is_finite() => Ok(Some((f, g))),
            Ok(_) => Ok(None),
            Err(_) => Ok(None),
        }
    };

    let c1 = opts.wolfe_c1;
    let c2 = opts.wolfe_c2;
    let max_step = R::c(1e6);

    let mut step_prev = R::zero();
    let mut f_prev = f0;
    let mut step = R::one();
    let mut bracket: Option<(R, R, R, R)> = None; // (lo, f_lo, slope_lo, hi)

    for outer in 0..25 {
        match probe(step, eval)? {
            None => {
                // infinite objective: shrink toward the last good point
                step = step_prev + (step - step_prev) * R::c(0.3);
                if step <= R::c(1e-20) {
                    return Ok(None);
                }
                continue;
            }
            Some((fs, gs)) => {
                let slope = dot(&gs, d);
                if fs > f0 + c1 * step * slope0 || (outer > 0 && fs >= f_prev) {
                    bracket = Some((step_prev, f_prev, R::zero(), step));
                    break;
                }
                if slope.abs() <= -c2 * slope0 {
                    return Ok(Some((step, fs, gs)));
                }
                if slope >= R::zero() {
                    bracket = Some((step, fs, slope, step_prev));
                    break;
                }
                step_prev = step;
                f_prev = fs;
                step = (step * R::c(2.0)).min(max_step);
                if step >= max_step {
                    return Ok(Some((step, fs, gs)));
                }
            }
        }
    }

    let Some((mut lo, mut f_lo, _slope_lo, mut hi)) = bracket else {
        return Ok(None);
    };

    for _ in 0..40 {
        let step = (lo + hi) * R::c(0.5);
        match probe(step, eval)? {
            None => {
                hi = step;
                continue;
            }
            Some((fs, gs)) => {
                let slope = dot(&gs, d);
                if fs > f0 + c1 * step * slope0 || fs >= f_lo {
                    hi = step;
                } else {
                    if slope.abs() <= -c2 * slope0 {
                        return Ok(Some((step, fs, gs)));
                    }
                    if slope * (hi - lo) >= R::zero() {
                        hi = lo;
                    }
                    lo = step;
                    f_lo = fs;
                }
                if (hi - lo).abs() <= R::c(1e-16) * lo.abs().max(R::one()) {
                    // interval collapsed; accept if it improves at all
                    return if fs < f0 { Ok(Some((step, fs, gs))) } else { Ok(None) };
                }
            }
        }
    }
    // zoom exhausted: take the last sufficient-decrease point if any
    if f_lo < f0 && lo > R::zero() {
        if let Some((fs, gs)) = probe(lo, eval)? {
            return Ok(Some((lo, fs, gs)));
        }
    }
    Ok(None)
}
