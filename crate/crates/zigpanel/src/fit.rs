//! Maximum-likelihood fitting, information criteria, and standard errors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ingest::Panel;
use crate::model::{
    loglik, loglik_with_grad, param_names, ModelSpec, ParamLayout, ParameterSet, Variant,
};
use crate::optim::{minimize, LbfgsOptions, Minimum};
use crate::real::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "R: Real", default)]
pub struct FitOptions<R> {
    pub grad_tol: R,
    pub f_rel_tol: R,
    pub max_iters: usize,
    pub memory: usize,
    /// Ridge strength on wallet intercepts, Full variant only. Keeps γ_i
    /// finite for wallets with all-zero or all-positive streams. The
    /// reported NLL always excludes this penalty.
    pub ridge: R,
    /// Hold intercepts at their initial values (bootstrap speed option).
    pub freeze_intercepts: bool,
    /// Hold spline and covariate coefficients at their initial values.
    pub freeze_curves: bool,
    pub compute_se: bool,
}

impl<R: Real> Default for FitOptions<R> {
    fn default() -> Self {
        FitOptions {
            grad_tol: R::c(1e-6),
            f_rel_tol: R::c(1e-10),
            max_iters: 2000,
            memory: 30,
            ridge: R::c(1e-4),
            freeze_intercepts: false,
            freeze_curves: false,
            compute_se: false,
        }
    }
}

/// Standard errors for the reported coefficient block, with the condition
/// number of the profiled information matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct SeReport<R> {
    pub names: Vec<String>,
    pub se: Vec<Option<R>>,
    pub condition_number: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct FitResult<R> {
    pub spec: ModelSpec<R>,
    pub phi_hat: ParameterSet<R>,
    /// Negative log-likelihood at the optimum, ridge penalty excluded.
    pub nll: R,
    pub n_obs: usize,
    pub n_params: usize,
    pub aic: R,
    pub bic: R,
    pub se: Option<SeReport<R>>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: R,
}

/// AIC = 2·n_params + 2·NLL; BIC = n_params·ln(n_obs) + 2·NLL.
pub fn information_criteria<R: Real>(nll: R, n_params: usize, n_obs: usize) -> (R, R) {
    let two = R::c(2.0);
    let p = R::of_usize(n_params);
    let aic = two * p + two * nll;
    let bic = p * R::of_usize(n_obs).ln() + two * nll;
    (aic, bic)
}

fn ridge_for<R: Real>(spec: &ModelSpec<R>, opts: &FitOptions<R>) -> R {
    if spec.variant == Variant::Full {
        opts.ridge
    } else {
        R::zero()
    }
}

/// Penalized objective −ℓ + λ(Σα_i² + Σγ_i²) and its gradient.
fn objective<R: Real>(
    spec: &ModelSpec<R>,
    layout: ParamLayout,
    panel: &Panel<R>,
    lambda: R,
    x: &[R],
) -> Result<(R, Vec<R>)> {
    let phi = ParameterSet::unpack(layout, x)?;
    let (ll, grad_ll) = loglik_with_grad(spec, &phi, panel)?;
    let mut f = -ll;
    let mut g: Vec<R> = grad_ll.iter().map(|&v| -v).collect();
    if lambda > R::zero() {
        let ni = layout.n_intercepts;
        for j in 0..2 * ni {
            f += lambda * x[j] * x[j];
            g[j] += R::c(2.0) * lambda * x[j];
        }
    }
    Ok((f, g))
}

/// Data-driven starting point: γ from the smoothed empirical zero fraction,
/// α from the log mean positive response, k from positive-part method of
/// moments, curves at zero.
pub fn initial_parameters<R: Real>(spec: &ModelSpec<R>, panel: &Panel<R>) -> Result<ParameterSet<R>> {
    let layout = ParamLayout::of(spec, panel);
    let stream = panel.stream(spec.stream);
    let (m, n) = (panel.n_wallets(), panel.n_days);

    let positives: Vec<R> = stream.data.iter().copied().filter(|&v| v > R::zero()).collect();
    if positives.is_empty() {
        return Err(Error::DegenerateStream(spec.stream.label().into()));
    }
    let np = R::of_usize(positives.len());
    let mean_pos = positives.iter().copied().sum::<R>() / np;
    let var_pos = positives.iter().map(|&v| (v - mean_pos) * (v - mean_pos)).sum::<R>()
        / (np - R::one()).max(R::one());
    let k0 = if var_pos > R::zero() {
        (mean_pos * mean_pos / var_pos).max(R::c(0.01)).min(R::c(100.0))
    } else {
        R::one()
    };

    let mut phi = ParameterSet::zeros(layout);
    phi.log_k = k0.ln();

    let global_alpha = mean_pos.ln();
    if layout.n_intercepts == 1 {
        let zeros = stream.data.iter().filter(|&&v| v <= R::zero()).count();
        let zf = (R::of_usize(zeros) + R::one()) / (R::of_usize(m * n) + R::c(2.0));
        phi.gamma[0] = (zf / (R::one() - zf)).ln();
        phi.alpha[0] = global_alpha;
    } else {
        for i in 0..m {
            let row = stream.row(i);
            let zeros = row.iter().filter(|&&v| v <= R::zero()).count();
            let zf = (R::of_usize(zeros) + R::one()) / (R::of_usize(n) + R::c(2.0));
            phi.gamma[i] = (zf / (R::one() - zf)).ln();
            let pos: Vec<R> = row.iter().copied().filter(|&v| v > R::zero()).collect();
            phi.alpha[i] = if pos.is_empty() {
                global_alpha
            } else {
                (pos.iter().copied().sum::<R>() / R::of_usize(pos.len())).ln()
            };
        }
    }
    Ok(phi)
}

/// Indices of coordinates the optimizer may move, honoring freeze options.
fn free_mask<R: Real>(layout: ParamLayout, opts: &FitOptions<R>) -> Vec<bool> {
    let total = layout.total();
    let mut mask = vec![true; total];
    if opts.freeze_intercepts {
        for item in mask.iter_mut().take(2 * layout.n_intercepts) {
            *item = false;
        }
    }
    if opts.freeze_curves {
        let off = layout.shared_offset();
        for item in mask.iter_mut().take(off + 2 * layout.k_basis + 2 * layout.p).skip(off) {
            *item = false;
        }
    }
    mask
}

fn minimize_masked<R, F>(
    lbfgs: &LbfgsOptions<R>,
    x0: &[R],
    mask: &[bool],
    mut eval: F,
) -> Result<Minimum<R>>
where
    R: Real,
    F: FnMut(&[R]) -> Result<(R, Vec<R>)>,
{
    let free: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(j, &f)| if f { Some(j) } else { None })
        .collect();
    let mut full = x0.to_vec();
    let x0_free: Vec<R> = free.iter().map(|&j| x0[j]).collect();
    let res = minimize(lbfgs, x0_free, |xf| {
        for (slot, &j) in xf.iter().zip(&free) {
            full[j] = *slot;
        }
        let (f, g) = eval(&full)?;
        Ok((f, free.iter().map(|&j| g[j]).collect()))
    })?;
    let mut x_full = x0.to_vec();
    for (slot, &j) in res.x.iter().zip(&free) {
        x_full[j] = *slot;
    }
    let (_, g_full) = eval(&x_full)?;
    Ok(Minimum { x: x_full, f: res.f, grad: g_full, iterations: res.iterations, stop: res.stop })
}

/// Fit the model by L-BFGS from the default initialization.
pub fn fit<R: Real>(spec: &ModelSpec<R>, panel: &Panel<R>, opts: &FitOptions<R>) -> Result<FitResult<R>> {
    let init = initial_parameters(spec, panel)?;
    fit_from(spec, panel, opts, &init)
}

/// Fit from an explicit starting point (warm starts).
pub fn fit_from<R: Real>(
    spec: &ModelSpec<R>,
    panel: &Panel<R>,
    opts: &FitOptions<R>,
    init: &ParameterSet<R>,
) -> Result<FitResult<R>> {
    let layout = ParamLayout::of(spec, panel);
    if init.layout() != layout {
        return Err(Error::Dimension("warm-start parameters do not match the model layout".into()));
    }
    let stream = panel.stream(spec.stream);
    if stream.data.iter().all(|&v| v <= R::zero()) {
        return Err(Error::DegenerateStream(spec.stream.label().into()));
    }
    let lambda = ridge_for(spec, opts);
    let lbfgs = LbfgsOptions {
        memory: opts.memory,
        max_iters: opts.max_iters,
        grad_tol: opts.grad_tol,
        f_rel_tol: opts.f_rel_tol,
        ..Default::default()
    };
    let x0 = init.pack();
    let mask = free_mask(layout, opts);
    let result = minimize_masked(&lbfgs, &x0, &mask, |x| objective(spec, layout, panel, lambda, x))?;

    let phi_hat = ParameterSet::unpack(layout, &result.x)?;
    let nll = -loglik(spec, &phi_hat, panel)?;
    let n_obs = panel.n_wallets() * panel.n_days;
    let n_params = spec.n_params(panel.n_wallets(), layout.p);
    let (aic, bic) = information_criteria(nll, n_params, n_obs);
    let mut fitres = FitResult {
        spec: spec.clone(),
        phi_hat,
        nll,
        n_obs,
        n_params,
        aic,
        bic,
        se: None,
        converged: result.converged(&lbfgs),
        iterations: result.iterations,
        grad_norm: result.grad_sup_norm(),
    };
    if opts.compute_se {
        fitres.se = Some(standard_errors(spec, &fitres.phi_hat, panel, opts)?);
    }
    Ok(fitres)
}

/// Lift a fitted parameter set into the next variant of the warm-start path
/// A → B → Full.
pub fn embed<R: Real>(phi: &ParameterSet<R>, target: Variant, m: usize, p: usize) -> ParameterSet<R> {
    let mut out = phi.clone();
    match target {
        Variant::A => {
            out.zeta.clear();
            out.kappa.clear();
            out.alpha.truncate(1);
            out.gamma.truncate(1);
        }
        Variant::B => {
            out.alpha.truncate(1);
            out.gamma.truncate(1);
            out.zeta.resize(p, R::zero());
            out.kappa.resize(p, R::zero());
        }
        Variant::Full => {
            out.alpha = vec![phi.alpha[0]; m];
            out.gamma = vec![phi.gamma[0]; m];
            out.zeta.resize(p, R::zero());
            out.kappa.resize(p, R::zero());
        }
    }
    out
}

/// Observed-information standard errors for the reported coefficient block.
///
/// The information matrix comes from central finite differences of the
/// analytic gradient (step 1e-5). For the Full variant the wallet
/// intercepts are profiled out via the Schur complement; for A/B the global
/// intercepts are part of the reported block.
pub fn standard_errors<R: Real>(
    spec: &ModelSpec<R>,
    phi_hat: &ParameterSet<R>,
    panel: &Panel<R>,
    opts: &FitOptions<R>,
) -> Result<SeReport<R>> {
    let layout = ParamLayout::of(spec, panel);
    let lambda = ridge_for(spec, opts);
    let x = phi_hat.pack();
    let d = x.len();
    let h = R::c(1e-5);

    let mut hess = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let (_, gp) = objective(spec, layout, panel, lambda, &xp)?;
        let (_, gm) = objective(spec, layout, panel, lambda, &xm)?;
        for i in 0..d {
            hess[(i, j)] = ((gp[i] - gm[i]) / (R::c(2.0) * h)).as_f64();
        }
    }
    // symmetrize
    let hess = (&hess + hess.transpose()) * 0.5;

    let n_profile = if spec.variant == Variant::Full { 2 * layout.n_intercepts } else { 0 };
    let all_names = param_names(layout, spec.variant);
    let names: Vec<String> = all_names[n_profile..].to_vec();
    let (se64, condition_number) = profiled_se(hess, n_profile);
    let se = se64.into_iter().map(|o| o.map(R::c)).collect();
    Ok(SeReport { names, se, condition_number })
}

/// Schur-complement the first `n_profile` coordinates out of the observed
/// information, then invert; returns per-coordinate SEs (None when the
/// information is not positive definite) and the condition number of the
/// profiled block.
pub(crate) fn profiled_se(hess: DMatrix<f64>, n_profile: usize) -> (Vec<Option<f64>>, f64) {
    let d = hess.nrows();
    let ns = d - n_profile;
    let s = if n_profile == 0 {
        hess
    } else {
        let hii = hess.view((0, 0), (n_profile, n_profile)).into_owned();
        let his = hess.view((0, n_profile), (n_profile, ns)).into_owned();
        let hss = hess.view((n_profile, n_profile), (ns, ns)).into_owned();
        match hii.clone().cholesky() {
            Some(chol) => {
                let solved = chol.solve(&his);
                hss - his.transpose() * solved
            }
            None => {
                // intercept information not PD: fall back to the unprofiled
                // shared block, reported with its own conditioning
                hss
            }
        }
    };
    let eig = s.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY };
    match s.clone().cholesky() {
        Some(chol) => {
            let inv = chol.inverse();
            let se = (0..ns).map(|j| Some(inv[(j, j)].sqrt())).collect();
            (se, condition)
        }
        None => ((0..ns).map(|_| None).collect(), condition),
    }
}

/// Flat coefficient/SE/z rows for the reported block.
#[derive(Debug, Clone, Serialize)]
pub struct CoefRow<R> {
    pub name: String,
    pub estimate: R,
    pub se: Option<R>,
    pub z: Option<R>,
}

pub fn coef_table<R: Real>(fit: &FitResult<R>) -> Vec<CoefRow<R>> {
    let layout = fit.phi_hat.layout();
    let n_profile = if fit.spec.variant == Variant::Full { 2 * layout.n_intercepts } else { 0 };
    let packed = fit.phi_hat.pack();
    let names = param_names(layout, fit.spec.variant);
    let block = &packed[n_profile..];
    let block_names = &names[n_profile..];
    block_names
        .iter()
        .zip(block)
        .enumerate()
        .map(|(j, (name, &estimate))| {
            let se = fit.se.as_ref().and_then(|r| r.se.get(j).copied().flatten());
            let z = se.map(|s| estimate / s);
            CoefRow { name: name.clone(), estimate, se, z }
        })
        .collect()
}
