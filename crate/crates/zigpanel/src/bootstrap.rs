//! Parametric bootstrap: model simulation and simultaneous confidence
//! bands for the fitted spline curves.
//!
//! Each replicate simulates a response panel from the fitted parameters,
//! refits warm-started at the estimate, and records the sup deviation
//! S*_b = max_t |f̂*_b(t) − f̂(t)| on the daily grid. The (1−α) nearest-rank
//! quantile of {S*_b} is the constant band half-width c_α.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fit::{fit_from, FitOptions, FitResult};
use crate::ingest::{Matrix, Panel};
use crate::model::{linear_predictors, ModelSpec, ParameterSet};
use crate::real::Real;
use crate::{Error, Result};

/// Which spline curve the band covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    /// f(t), the conditional-mean spline (coefficients β).
    MeanCurve,
    /// g(t), the zero-inflation spline (coefficients δ).
    ZeroCurve,
}

impl CurveKind {
    pub fn coefficients<'a, R>(self, phi: &'a ParameterSet<R>) -> &'a [R] {
        match self {
            CurveKind::MeanCurve => &phi.beta,
            CurveKind::ZeroCurve => &phi.delta,
        }
    }
}

impl std::str::FromStr for CurveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" | "mean_curve" | "f" => Ok(CurveKind::MeanCurve),
            "zero" | "zero_curve" | "g" => Ok(CurveKind::ZeroCurve),
            other => Err(Error::Invalid(format!("unknown curve `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct BootstrapOptions<R> {
    /// Number of successful replicates B.
    pub replicates: usize,
    pub alpha: R,
    pub seed: u64,
    pub curve: CurveKind,
}

impl<R: Real> Default for BootstrapOptions<R> {
    fn default() -> Self {
        BootstrapOptions { replicates: 1000, alpha: R::c(0.05), seed: 0, curve: CurveKind::MeanCurve }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct BandResult<R> {
    pub curve: CurveKind,
    pub grid: Vec<R>,
    pub f_hat: Vec<R>,
    pub c_alpha: R,
    pub alpha: R,
    pub replicates: usize,
    /// Sup-deviation statistics of the successful replicates, in replicate order.
    pub deviations: Vec<R>,
    pub n_failed: usize,
}

impl<R: Real> BandResult<R> {
    pub fn lower(&self) -> Vec<R> {
        self.f_hat.iter().map(|&v| v - self.c_alpha).collect()
    }

    pub fn upper(&self) -> Vec<R> {
        self.f_hat.iter().map(|&v| v + self.c_alpha).collect()
    }

    /// True when a reference curve lies entirely inside the band.
    pub fn covers(&self, reference: &[R]) -> bool {
        self.f_hat
            .iter()
            .zip(reference)
            .all(|(&fit, &truth)| (fit - truth).abs() <= self.c_alpha)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Counter-based per-cell seed: generation is order-invariant, so parallel
/// simulation is deterministic for a fixed master seed.
fn cell_seed(master: u64, replicate: u64, wallet: u64, day: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(splitmix64(master) ^ replicate) ^ wallet) ^ day)
}

/// Simulate the spec's response stream from Φ over the template panel's
/// shape and covariates. Deterministic given the seed.
pub fn simulate<R: Real>(
    spec: &ModelSpec<R>,
    phi: &ParameterSet<R>,
    template: &Panel<R>,
    seed: u64,
) -> Result<Matrix<R>> {
    if !phi.all_finite() {
        return Err(Error::Invalid("non-finite parameters in simulation".into()));
    }
    let (mu, pi) = linear_predictors(spec, phi, template)?;
    let (m, n) = (template.n_wallets(), template.n_days);
    let k = phi.shape().as_f64();
    let mut out = Matrix::zeros(m, n);
    for i in 0..m {
        for t in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, 0, i as u64, t as u64));
            let u: f64 = rng.gen();
            let p = pi.at(i, t).as_f64();
            if u >= p {
                let gamma = Gamma::new(k, mu.at(i, t).as_f64() / k)
                    .map_err(|e| Error::Invalid(format!("gamma draw: {e}")))?;
                *out.at_mut(i, t) = R::c(gamma.sample(&mut rng));
            }
        }
    }
    Ok(out)
}

/// Empirical quantile, nearest-rank convention (no interpolation).
pub fn nearest_rank_quantile<R: Real>(values: &[R], q: R) -> R {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite deviations"));
    let n = sorted.len();
    let rank = (q * R::of_usize(n)).ceil().as_f64() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Simultaneous confidence band for the fitted spline curve via the
/// parametric bootstrap. Non-convergent refits are discarded and replaced
/// from fresh replicate seeds, up to a budget of 2B attempts.
pub fn simultaneous_band<R: Real>(
    spec: &ModelSpec<R>,
    fitted: &FitResult<R>,
    panel: &Panel<R>,
    fit_opts: &FitOptions<R>,
    opts: &BootstrapOptions<R>,
) -> Result<BandResult<R>> {
    if !fitted.converged {
        return Err(Error::NonConvergence("refusing to bootstrap a non-converged fit".into()));
    }
    let b = opts.replicates;
    if b < 100 {
        return Err(Error::Invalid(format!("bootstrap needs B >= 100 (got {b})")));
    }
    let n = panel.n_days;
    let grid: Vec<R> = (1..=n).map(R::of_usize).collect();
    let f_hat = spec.basis.curve(opts.curve.coefficients(&fitted.phi_hat), &grid)?;
    let budget = 2 * b;

    let run_attempt = |attempt: usize| -> Option<R> {
        let rep_seed = splitmix64(opts.seed ^ splitmix64(attempt as u64 + 1));
        let stream = simulate(spec, &fitted.phi_hat, panel, rep_seed).ok()?;
        let mut sim_panel = panel.clone();
        *sim_panel.stream_mut(spec.stream) = stream;
        let refit = fit_from(spec, &sim_panel, fit_opts, &fitted.phi_hat).ok()?;
        if !refit.converged {
            return None;
        }
        let curve = spec.basis.curve(opts.curve.coefficients(&refit.phi_hat), &grid).ok()?;
        let sup = curve
            .iter()
            .zip(&f_hat)
            .map(|(&a, &b)| (a - b).abs())
            .fold(R::zero(), R::max);
        Some(sup)
    };

    // Attempts run in fixed-size batches so results and retry seeds do not
    // depend on the worker count.
    let mut deviations: Vec<R> = Vec::with_capacity(b);
    let mut next_attempt = 0;
    while deviations.len() < b && next_attempt < budget {
        let batch = (b - deviations.len()).min(budget - next_attempt);
        let results: Vec<Option<R>> =
            (next_attempt..next_attempt + batch).into_par_iter().map(run_attempt).collect();
        next_attempt += batch;
        deviations.extend(results.into_iter().flatten());
    }
    let n_failed = next_attempt - deviations.len();
    if deviations.len() < b {
        return Err(Error::BootstrapInstability { failed: n_failed, budget });
    }
    let c_alpha = nearest_rank_quantile(&deviations, R::one() - opts.alpha);
    Ok(BandResult {
        curve: opts.curve,
        grid,
        f_hat,
        c_alpha,
        alpha: opts.alpha,
        replicates: b,
        deviations,
        n_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::SplineBasis;
    use crate::ingest::Stream;
    use crate::model::{ParamLayout, Variant};
    use approx::assert_relative_eq;

    fn setup(m: usize, n: usize) -> (ModelSpec<f64>, Panel<f64>, ParameterSet<f64>) {
        let panel = Panel::synthetic(m, n, Matrix::zeros(n, 0));
        let basis = SplineBasis::for_days(n, 3).unwrap();
        let spec = ModelSpec::new(Variant::A, Stream::EthSale, basis);
        let phi = ParameterSet::zeros(ParamLayout::of(&spec, &panel));
        (spec, panel, phi)
    }

    #[test]
    fn degenerate_mixture_gives_all_zero_panel() {
        let (spec, panel, mut phi) = setup(5, 30);
        phi.gamma[0] = 40.0; // π ≈ 1
        let sim = simulate(&spec, &phi, &panel, 7).unwrap();
        assert!(sim.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exponential_mean_and_zero_fraction() {
        // π ≈ 0, k = 1, μ = 2 everywhere
        let (spec, panel, mut phi) = setup(500, 200); // 1e5 cells
        phi.gamma[0] = -40.0;
        phi.alpha[0] = 2.0f64.ln();
        phi.log_k = 0.0;
        let sim = simulate(&spec, &phi, &panel, 11).unwrap();
        let n = sim.data.len() as f64;
        let zeros = sim.data.iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 0);
        let mean = sim.data.iter().sum::<f64>() / n;
        // exponential(mean 2): sd 2, MC 3σ tolerance
        assert!((mean - 2.0).abs() < 3.0 * 2.0 / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn sparsity_matches_the_zero_probability() {
        // mean π = 0.928 ⇒ nonzero fraction ≈ 7.2%
        let (spec, panel, mut phi) = setup(500, 200);
        let p = 0.928f64;
        phi.gamma[0] = (p / (1.0 - p)).ln();
        phi.alpha[0] = 1.0;
        let sim = simulate(&spec, &phi, &panel, 13).unwrap();
        let n = sim.data.len() as f64;
        let nonzero = sim.data.iter().filter(|&&v| v > 0.0).count() as f64 / n;
        let sd = (p * (1.0 - p) / n).sqrt();
        assert!((nonzero - 0.072).abs() < 3.0 * sd, "nonzero fraction {nonzero}");
    }

    #[test]
    fn simulation_is_deterministic_given_seed() {
        let (spec, panel, mut phi) = setup(10, 20);
        phi.gamma[0] = 1.0;
        let a = simulate(&spec, &phi, &panel, 42).unwrap();
        let b = simulate(&spec, &phi, &panel, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate(&spec, &phi, &panel, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn nearest_rank_quantile_convention() {
        let devs: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(nearest_rank_quantile(&devs, 0.95), 95.0);
        // monotone in confidence
        assert!(nearest_rank_quantile(&devs, 0.99) >= nearest_rank_quantile(&devs, 0.95));
        // order does not matter
        let mut shuffled = devs.clone();
        shuffled.reverse();
        assert_eq!(nearest_rank_quantile(&shuffled, 0.95), 95.0);
    }

    #[test]
    fn band_accessors_bracket_the_fit() {
        let band = BandResult {
            curve: CurveKind::MeanCurve,
            grid: vec![1.0, 2.0],
            f_hat: vec![0.5, -0.3],
            c_alpha: 0.2,
            alpha: 0.05,
            replicates: 100,
            deviations: vec![],
            n_failed: 0,
        };
        for (got, want) in band.lower().iter().zip([0.3, -0.5]) {
            assert_relative_eq!(got, &want, epsilon = 1e-12);
        }
        for (got, want) in band.upper().iter().zip([0.7, -0.1]) {
            assert_relative_eq!(got, &want, epsilon = 1e-12);
        }
        assert!(band.covers(&[0.6, -0.2]));
        assert!(!band.covers(&[0.6, 0.2]));
    }

    #[test]
    fn small_b_is_rejected() {
        let (spec, panel, phi) = setup(4, 20);
        let fake_fit = crate::fit::FitResult {
            spec: spec.clone(),
            phi_hat: phi,
            nll: 0.0,
            n_obs: 80,
            n_params: 9,
            aic: 0.0,
            bic: 0.0,
            se: None,
            converged: true,
            iterations: 0,
            grad_norm: 0.0,
        };
        let opts = BootstrapOptions { replicates: 50, ..Default::default() };
        let err =
            simultaneous_band(&spec, &fake_fit, &panel, &FitOptions::default(), &opts).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }
}
