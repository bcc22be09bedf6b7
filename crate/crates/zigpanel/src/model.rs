//! Zero-inflated Gamma panel model: parameters, linear predictors,
//! log-likelihood, and its analytic gradient.
//!
//! For each wallet i and day t the response is zero with probability π_it
//! and otherwise Gamma with shape k and mean μ_it (scale μ_it/k):
//!
//!   log μ_it   = α_i + f(t) + ζ'X_t
//!   logit π_it = γ_i + g(t) + κ'X_t
//!
//! f and g share one natural cubic spline basis; k is common across wallets
//! and optimized as log k.

use serde::{Deserialize, Serialize};

use crate::basis::SplineBasis;
use crate::ingest::{Matrix, Panel, DUST};
use crate::real::Real;
use crate::special::{digamma, ln_gamma, log_logistic, logistic};
use crate::{Error, Result};

pub use crate::ingest::Stream;

/// Model variant: A = splines only, B = splines + covariates,
/// Full = B + per-wallet intercepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    A,
    B,
    Full,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::A => "A",
            Variant::B => "B",
            Variant::Full => "full",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Variant::A),
            "b" => Ok(Variant::B),
            "full" => Ok(Variant::Full),
            other => Err(Error::Invalid(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct ModelSpec<R> {
    pub variant: Variant,
    pub stream: Stream,
    pub basis: SplineBasis<R>,
}

impl<R: Real> ModelSpec<R> {
    pub fn new(variant: Variant, stream: Stream, basis: SplineBasis<R>) -> Self {
        Self { variant, stream, basis }
    }

    pub fn use_covariates(&self) -> bool {
        self.variant != Variant::A
    }

    /// Number of free parameters given m wallets and p covariates.
    pub fn n_params(&self, m: usize, p: usize) -> usize {
        n_params(self.variant, self.basis.df(), p, m)
    }
}

/// Free-parameter count: A = 2 + 2K + 1, B adds 2p, Full swaps the two
/// global intercepts for 2m wallet intercepts.
pub fn n_params(variant: Variant, k_basis: usize, p: usize, m: usize) -> usize {
    let a = 2 + 2 * k_basis + 1;
    match variant {
        Variant::A => a,
        Variant::B => a + 2 * p,
        Variant::Full => a + 2 * p - 2 + 2 * m,
    }
}

/// Packing layout of the free parameter vector:
/// [alpha; gamma; beta; delta; zeta; kappa; log_k].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub n_intercepts: usize,
    pub k_basis: usize,
    pub p: usize,
}

impl ParamLayout {
    pub fn of<R: Real>(spec: &ModelSpec<R>, panel: &Panel<R>) -> Self {
        let n_intercepts = match spec.variant {
            Variant::Full => panel.n_wallets(),
            _ => 1,
        };
        let p = if spec.use_covariates() { panel.n_covariates() } else { 0 };
        ParamLayout { n_intercepts, k_basis: spec.basis.df(), p }
    }

    pub fn total(&self) -> usize {
        2 * self.n_intercepts + 2 * self.k_basis + 2 * self.p + 1
    }

    /// Offset of the shared block (beta onwards) in the packed vector.
    pub fn shared_offset(&self) -> usize {
        2 * self.n_intercepts
    }
}

/// The full parameter set Φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct ParameterSet<R> {
    /// Conditional-mean intercepts (log scale); length m, or 1 for A/B.
    pub alpha: Vec<R>,
    /// Zero-inflation intercepts (logit scale); same length as `alpha`.
    pub gamma: Vec<R>,
    pub beta: Vec<R>,
    pub delta: Vec<R>,
    pub zeta: Vec<R>,
    pub kappa: Vec<R>,
    pub log_k: R,
}

impl<R: Real> ParameterSet<R> {
    pub fn zeros(layout: ParamLayout) -> Self {
        ParameterSet {
            alpha: vec![R::zero(); layout.n_intercepts],
            gamma: vec![R::zero(); layout.n_intercepts],
            beta: vec![R::zero(); layout.k_basis],
            delta: vec![R::zero(); layout.k_basis],
            zeta: vec![R::zero(); layout.p],
            kappa: vec![R::zero(); layout.p],
            log_k: R::zero(),
        }
    }

    pub fn shape(&self) -> R {
        self.log_k.exp()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            n_intercepts: self.alpha.len(),
            k_basis: self.beta.len(),
            p: self.zeta.len(),
        }
    }

    pub fn pack(&self) -> Vec<R> {
        let mut v = Vec::with_capacity(self.layout().total());
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.gamma);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.delta);
        v.extend_from_slice(&self.zeta);
        v.extend_from_slice(&self.kappa);
        v.push(self.log_k);
        v
    }

    pub fn unpack(layout: ParamLayout, x: &[R]) -> Result<Self> {
        if x.len() != layout.total() {
            return Err(Error::Dimension(format!(
                "packed vector has {} entries, layout expects {}",
                x.len(),
                layout.total()
            )));
        }
        let (ni, k, p) = (layout.n_intercepts, layout.k_basis, layout.p);
        let mut pos = 0;
        let mut take = |len: usize| {
            let slice = x[pos..pos + len].to_vec();
            pos += len;
            slice
        };
        Ok(ParameterSet {
            alpha: take(ni),
            gamma: take(ni),
            beta: take(k),
            delta: take(k),
            zeta: take(p),
            kappa: take(p),
            log_k: x[x.len() - 1],
        })
    }

    pub fn all_finite(&self) -> bool {
        self.pack().iter().all(|v| v.is_finite())
    }
}

/// Human-readable names for the packed parameter vector, in pack order.
pub fn param_names(layout: ParamLayout, variant: Variant) -> Vec<String> {
    let mut names = Vec::with_capacity(layout.total());
    if variant == Variant::Full {
        names.extend((0..layout.n_intercepts).map(|i| format!("alpha[{i}]")));
        names.extend((0..layout.n_intercepts).map(|i| format!("gamma[{i}]")));
    } else {
        names.push("alpha0".into());
        names.push("gamma0".into());
    }
    names.extend((1..=layout.k_basis).map(|k| format!("mean_spline_{k}")));
    names.extend((1..=layout.k_basis).map(|k| format!("zero_spline_{k}")));
    names.extend((0..layout.p).map(|j| format!("mean_covariate_{j}")));
    names.extend((0..layout.p).map(|j| format!("zero_covariate_{j}")));
    names.push("log_k".into());
    names
}

fn check_dims<R: Real>(spec: &ModelSpec<R>, phi: &ParameterSet<R>, panel: &Panel<R>) -> Result<ParamLayout> {
    let layout = ParamLayout::of(spec, panel);
    if phi.layout() != layout {
        return Err(Error::Dimension(format!(
            "parameter layout {:?} does not match model layout {:?}",
            phi.layout(),
            layout
        )));
    }
    Ok(layout)
}

/// Per-day linear-predictor contributions shared across wallets.
fn day_terms<R: Real>(spec: &ModelSpec<R>, phi: &ParameterSet<R>, panel: &Panel<R>) -> (Vec<R>, Vec<R>) {
    let design = spec.basis.design_days(panel.n_days);
    let mut mean_term = vec![R::zero(); panel.n_days];
    let mut zero_term = vec![R::zero(); panel.n_days];
    for t in 0..panel.n_days {
        let row = &design[t];
        let mut fm = R::zero();
        let mut fz = R::zero();
        for k in 0..row.len() {
            fm += row[k] * phi.beta[k];
            fz += row[k] * phi.delta[k];
        }
        if spec.use_covariates() {
            let x = panel.covariates.row(t);
            for j in 0..x.len() {
                fm += x[j] * phi.zeta[j];
                fz += x[j] * phi.kappa[j];
            }
        }
        mean_term[t] = fm;
        zero_term[t] = fz;
    }
    (mean_term, zero_term)
}

#[inline]
fn intercept_index(variant: Variant, i: usize) -> usize {
    match variant {
        Variant::Full => i,
        _ => 0,
    }
}

/// Conditional-mean matrix μ_it and zero-probability matrix π_it.
pub fn linear_predictors<R: Real>(
    spec: &ModelSpec<R>,
    phi: &ParameterSet<R>,
    panel: &Panel<R>,
) -> Result<(Matrix<R>, Matrix<R>)> {
    check_dims(spec, phi, panel)?;
    let (mean_term, zero_term) = day_terms(spec, phi, panel);
    let (m, n) = (panel.n_wallets(), panel.n_days);
    let mut mu = Matrix::zeros(m, n);
    let mut pi = Matrix::zeros(m, n);
    for i in 0..m {
        let idx = intercept_index(spec.variant, i);
        let (a, g) = (phi.alpha[idx], phi.gamma[idx]);
        for t in 0..n {
            let eta_mu = a + mean_term[t];
            let eta_pi = g + zero_term[t];
            let mu_val = eta_mu.exp();
            if !eta_mu.is_finite() || !eta_pi.is_finite() || !mu_val.is_finite() {
                return Err(Error::NonFinitePredictor { wallet: i, day: t + 1 });
            }
            *mu.at_mut(i, t) = mu_val;
            *pi.at_mut(i, t) = logistic(eta_pi);
        }
    }
    Ok((mu, pi))
}

/// Single-cell log-likelihood contribution given the linear predictors.
/// `y` below the dust threshold is a structural zero.
pub fn cell_loglik<R: Real>(y: R, eta_mu: R, eta_pi: R, k: R) -> Result<R> {
    if !y.is_finite() {
        return Err(Error::Invalid(format!("non-finite response {y}")));
    }
    if y <= R::c(DUST) {
        Ok(log_logistic(eta_pi))
    } else {
        Ok(log_logistic(-eta_pi) + k * (k.ln() - eta_mu) - ln_gamma(k) + (k - R::one()) * y.ln()
            - k * y * (-eta_mu).exp())
    }
}

/// Total log-likelihood ℓ(Φ) over the panel's selected stream.
pub fn loglik<R: Real>(spec: &ModelSpec<R>, phi: &ParameterSet<R>, panel: &Panel<R>) -> Result<R> {
    check_dims(spec, phi, panel)?;
    let (mean_term, zero_term) = day_terms(spec, phi, panel);
    let stream = panel.stream(spec.stream);
    let k = phi.shape();
    let mut total = R::zero();
    for i in 0..panel.n_wallets() {
        let idx = intercept_index(spec.variant, i);
        let (a, g) = (phi.alpha[idx], phi.gamma[idx]);
        for t in 0..panel.n_days {
            let eta_mu = a + mean_term[t];
            let eta_pi = g + zero_term[t];
            if !eta_mu.is_finite() || !eta_pi.is_finite() {
                return Err(Error::NonFinitePredictor { wallet: i, day: t + 1 });
            }
            total += cell_loglik(*stream.at(i, t), eta_mu, eta_pi, k)?;
        }
    }
    Ok(total)
}

/// Analytic gradient of ℓ(Φ), packed in layout order.
pub fn loglik_grad<R: Real>(spec: &ModelSpec<R>, phi: &ParameterSet<R>, panel: &Panel<R>) -> Result<Vec<R>> {
    Ok(loglik_with_grad(spec, phi, panel)?.1)
}

/// ℓ(Φ) and its analytic gradient in one pass.
pub fn loglik_with_grad<R: Real>(
    spec: &ModelSpec<R>,
    phi: &ParameterSet<R>,
    panel: &Panel<R>,
) -> Result<(R, Vec<R>)> {
    let layout = check_dims(spec, phi, panel)?;
    let (mean_term, zero_term) = day_terms(spec, phi, panel);
    let design = spec.basis.design_days(panel.n_days);
    let stream = panel.stream(spec.stream);
    let (m, n) = (panel.n_wallets(), panel.n_days);
    let k = phi.shape();
    let (ln_k, psi_k, lgam_k) = (k.ln(), digamma(k), ln_gamma(k));
    let dust = R::c(DUST);

    let mut ll = R::zero();
    let mut g_alpha = vec![R::zero(); layout.n_intercepts];
    let mut g_gamma = vec![R::zero(); layout.n_intercepts];
    // per-day sums of cell gradients w.r.t. the two linear predictors
    let mut day_dmu = vec![R::zero(); n];
    let mut day_dpi = vec![R::zero(); n];
    let mut g_logk = R::zero();

    for i in 0..m {
        let idx = intercept_index(spec.variant, i);
        let (a, g) = (phi.alpha[idx], phi.gamma[idx]);
        let mut wallet_dmu = R::zero();
        let mut wallet_dpi = R::zero();
        for t in 0..n {
            let y = *stream.at(i, t);
            if !y.is_finite() {
                return Err(Error::Invalid(format!("non-finite response at wallet {i}, day {}", t + 1)));
            }
            let eta_pi = g + zero_term[t];
            if !eta_pi.is_finite() {
                return Err(Error::NonFinitePredictor { wallet: i, day: t + 1 });
            }
            if y <= dust {
                // ℓ += log π;  ∂/∂η_π = 1 − π
                ll += log_logistic(eta_pi);
                let d = logistic(-eta_pi);
                wallet_dpi += d;
                day_dpi[t] += d;
            } else {
                let eta_mu = a + mean_term[t];
                if !eta_mu.is_finite() {
                    return Err(Error::NonFinitePredictor { wallet: i, day: t + 1 });
                }
                let inv_mu_y = y * (-eta_mu).exp(); // y / μ
                let ln_y = y.ln();
                ll += log_logistic(-eta_pi) + k * (ln_k - eta_mu) - lgam_k
                    + (k - R::one()) * ln_y
                    - k * inv_mu_y;
                let dpi = -logistic(eta_pi);
                let dmu = k * (inv_mu_y - R::one());
                wallet_dpi += dpi;
                day_dpi[t] += dpi;
                wallet_dmu += dmu;
                day_dmu[t] += dmu;
                // d/d log k = k · dℓ/dk
                g_logk += k * (ln_k + R::one() - eta_mu - psi_k + ln_y - inv_mu_y);
            }
        }
        g_alpha[idx] += wallet_dmu;
        g_gamma[idx] += wallet_dpi;
    }

    let kb = layout.k_basis;
    let mut g_beta = vec![R::zero(); kb];
    let mut g_delta = vec![R::zero(); kb];
    let mut g_zeta = vec![R::zero(); layout.p];
    let mut g_kappa = vec![R::zero(); layout.p];
    for t in 0..n {
        let row = &design[t];
        for kk in 0..kb {
            g_beta[kk] += day_dmu[t] * row[kk];
            g_delta[kk] += day_dpi[t] * row[kk];
        }
        if layout.p > 0 {
            let x = panel.covariates.row(t);
            for j in 0..layout.p {
                g_zeta[j] += day_dmu[t] * x[j];
                g_kappa[j] += day_dpi[t] * x[j];
            }
        }
    }

    let mut grad = Vec::with_capacity(layout.total());
    grad.extend(g_alpha);
    grad.extend(g_gamma);
    grad.extend(g_beta);
    grad.extend(g_delta);
    grad.extend(g_zeta);
    grad.extend(g_kappa);
    grad.push(g_logk);
    Ok((ll, grad))
}
