//! Parameter estimation: least-squares and truncated-MLE stretched-exponential
//! tail fits, and GEV/Gumbel maximum likelihood for annual maxima.

use serde::{Deserialize, Serialize};

use crate::distributions::{GevParams, WeibullTail, GUMBEL_SWITCH};
use crate::error::{MevError, Result};
use crate::optim::nelder_mead;

/// Which estimator produced a fit report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Ls,
    Mle,
    GevMle,
    GumbelMle,
}

/// Report of a stretched-exponential tail fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFitReport {
    pub tail: WeibullTail,
    pub method: FitMethod,
    pub n_points: usize,
    pub converged: bool,
    /// Residual sum of squares (LS) or negative log-likelihood (MLE).
    pub objective: f64,
}

/// Report of a GEV or Gumbel fit to a maxima series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GevFitReport {
    pub params: GevParams,
    pub method: FitMethod,
    pub n_points: usize,
    pub converged: bool,
    /// Negative log-likelihood at the optimum.
    pub objective: f64,
}

/// Ordinary least squares of ln(-ln psi_hat) against ln h.
/// Slope is the shape w; intercept is -w ln C.
pub fn fit_weibull_ls(points: &[(f64, f64)], h0: f64) -> Result<TailFitReport> {
    if points.len() < 3 {
        return Err(MevError::InsufficientData(format!(
            "least-squares fit needs at least 3 points, have {}",
            points.len()
        )));
    }
    for &(h, psi) in points {
        if !(h > h0) {
            return Err(MevError::Domain(format!(
                "point h={h} not above the threshold {h0}"
            )));
        }
        if !(psi > 0.0 && psi < 1.0) {
            return Err(MevError::Domain(format!(
                "psi_hat must be in (0,1), got {psi}"
            )));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(h, _)| h.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, p)| (-p.ln()).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(MevError::DegenerateFit("all h values equal".into()));
    }
    let w = sxy / sxx;
    if !(w > 0.0) || !w.is_finite() {
        return Err(MevError::DegenerateFit(format!(
            "non-positive fitted shape {w}"
        )));
    }
    let intercept = my - w * mx;
    let c = (-intercept / w).exp();
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (w * x + intercept);
            r * r
        })
        .sum();
    Ok(TailFitReport {
        tail: WeibullTail::new(c, w, h0)?,
        method: FitMethod::Ls,
        n_points: points.len(),
        converged: true,
        objective: rss,
    })
}

/// Negative log-likelihood of the left-truncated stretched-exponential density
/// p(h | h > h0) = (w/C)(h/C)^(w-1) exp(-[(h/C)^w - (h0/C)^w]).
fn truncated_weibull_nll(values: &[f64], h0: f64, c: f64, w: f64) -> f64 {
    if !(c > 0.0) || !(w > 0.0) {
        return f64::INFINITY;
    }
    let shift = (h0 / c).powf(w);
    let mut nll = 0.0;
    for &h in values {
        let hc = h / c;
        nll -= w.ln() - c.ln() + (w - 1.0) * hc.ln() - (hc.powf(w) - shift);
    }
    if nll.is_finite() {
        nll
    } else {
        f64::INFINITY
    }
}

/// Conditional maximum likelihood for the tail above `h0`. Optimizer failure
/// is soft: the report comes back with `converged = false`.
pub fn fit_weibull_mle(values: &[f64], h0: f64) -> Result<TailFitReport> {
    let retained: Vec<f64> = values.iter().copied().filter(|&v| v > h0).collect();
    if retained.len() < 5 {
        return Err(MevError::InsufficientData(format!(
            "MLE fit needs at least 5 values above {h0}, have {}",
            retained.len()
        )));
    }
    let mean_excess =
        (retained.iter().sum::<f64>() / retained.len() as f64 - h0).max(1e-3);
    // Optimize in log space to keep both parameters positive.
    let x0 = [mean_excess.ln(), 0.0];
    let f = |x: &[f64]| truncated_weibull_nll(&retained, h0, x[0].exp(), x[1].exp());
    let res = nelder_mead(f, &x0, &[0.3, 0.3], 1e-10, 2000);
    let c = res.x[0].exp();
    let w = res.x[1].exp();
    // A runaway shape means the likelihood is unbounded (near-degenerate data).
    let converged = res.converged && res.fx.is_finite() && (0.01..=100.0).contains(&w);
    Ok(TailFitReport {
        tail: WeibullTail::new(c.max(f64::MIN_POSITIVE), w.clamp(1e-6, 1e6), h0)?,
        method: FitMethod::Mle,
        n_points: retained.len(),
        converged,
        objective: res.fx,
    })
}

/// GEV log-density of one observation; -inf outside the support.
fn gev_log_pdf(x: f64, mu: f64, sigma: f64, k: f64) -> f64 {
    if sigma <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = (x - mu) / sigma;
    if k.abs() < GUMBEL_SWITCH {
        -sigma.ln() - z - (-z).exp()
    } else {
        let t = 1.0 + k * z;
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -sigma.ln() - (1.0 + 1.0 / k) * t.ln() - t.powf(-1.0 / k)
    }
}

fn gev_nll(maxima: &[f64], mu: f64, sigma: f64, k: f64) -> f64 {
    let ll: f64 = maxima.iter().map(|&x| gev_log_pdf(x, mu, sigma, k)).sum();
    if ll.is_finite() {
        -ll
    } else {
        f64::INFINITY
    }
}

/// Deterministic moment-based Gumbel initial values (sigma, mu).
fn gumbel_moment_init(maxima: &[f64]) -> (f64, f64) {
    let n = maxima.len() as f64;
    let mean = maxima.iter().sum::<f64>() / n;
    let var = maxima.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sigma = var.sqrt() * 6.0f64.sqrt() / std::f64::consts::PI;
    let mu = mean - 0.5772156649015329 * sigma;
    (sigma, mu)
}

/// Maximum likelihood GEV fit over (mu, sigma, k), simplex search from
/// Gumbel moment initial values.
pub fn fit_gev(maxima: &[f64]) -> Result<GevFitReport> {
    if maxima.len() < 10 {
        return Err(MevError::InsufficientData(format!(
            "GEV fit needs at least 10 maxima, have {}",
            maxima.len()
        )));
    }
    let (sigma0, mu0) = gumbel_moment_init(maxima);
    if !(sigma0 > 0.0) {
        return Err(MevError::NonConvergence(
            "degenerate likelihood: maxima have zero variance".into(),
        ));
    }
    let f = |x: &[f64]| gev_nll(maxima, x[0], x[1].exp(), x[2]);
    let res = nelder_mead(
        f,
        &[mu0, sigma0.ln(), 0.0],
        &[0.1 * sigma0, 0.1, 0.1],
        1e-10,
        2000,
    );
    let params = GevParams::new(res.x[0], res.x[1].exp(), res.x[2])?;
    Ok(GevFitReport {
        params,
        method: FitMethod::GevMle,
        n_points: maxima.len(),
        converged: res.converged && res.fx.is_finite(),
        objective: res.fx,
    })
}

/// Maximum likelihood Gumbel fit (GEV with the shape pinned to zero).
/// Solved through the profile-likelihood equation for sigma, which is exact
/// and location/scale equivariant.
pub fn fit_gumbel(maxima: &[f64]) -> Result<GevFitReport> {
    if maxima.len() < 5 {
        return Err(MevError::InsufficientData(format!(
            "Gumbel fit needs at least 5 maxima, have {}",
            maxima.len()
        )));
    }
    let n = maxima.len() as f64;
    let mean = maxima.iter().sum::<f64>() / n;
    let centered: Vec<f64> = maxima.iter().map(|x| x - mean).collect();
    let spread = centered.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
    if spread <= 0.0 {
        return Err(MevError::NonConvergence(
            "degenerate likelihood: maxima all equal".into(),
        ));
    }
    // sigma solves sigma + sum(x' e^{-x'/sigma}) / sum(e^{-x'/sigma}) = 0
    // with x' centered; the left side is increasing in sigma.
    let g = |sigma: f64| -> f64 {
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for &x in &centered {
            let e = (-x / sigma).exp();
            s0 += e;
            s1 += x * e;
        }
        sigma + s1 / s0
    };
    let mut lo = 1e-12 * spread;
    let mut hi = 2.0 * spread;
    while g(hi) < 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(MevError::NonConvergence("Gumbel scale diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let mu = mean - sigma * (centered.iter().map(|x| (-x / sigma).exp()).sum::<f64>() / n).ln();
    let params = GevParams::new(mu, sigma, 0.0)?;
    Ok(GevFitReport {
        objective: gev_nll(maxima, mu, sigma, 0.0),
        params,
        method: FitMethod::GumbelMle,
        n_points: maxima.len(),
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{gev_quantile, weibull_exceedance, weibull_sample};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model_points(c: f64, w: f64, hs: &[f64]) -> Vec<(f64, f64)> {
        let tail = WeibullTail::new(c, w, 0.0).unwrap();
        hs.iter()
            .map(|&h| (h, weibull_exceedance(h, &tail).unwrap()))
            .collect()
    }

    #[test]
    fn ls_exact_recovery() {
        let hs: Vec<f64> = (1..=15).map(|i| 10.0 * i as f64).collect();
        let points = model_points(15.0, 0.75, &hs);
        let report = fit_weibull_ls(&points, 0.0).unwrap();
        assert_relative_eq!(report.tail.scale_c, 15.0, max_relative = 1e-9);
        assert_relative_eq!(report.tail.shape_w, 0.75, max_relative = 1e-9);
        assert!(report.objective < 1e-18, "rss = {}", report.objective);
    }

    #[test]
    fn ls_exponential_special_case() {
        let hs: Vec<f64> = (1..=10).map(|i| 5.0 * i as f64).collect();
        let points = model_points(10.0, 1.0, &hs);
        let report = fit_weibull_ls(&points, 0.0).unwrap();
        assert_relative_eq!(report.tail.shape_w, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn ls_error_paths() {
        let points = model_points(10.0, 0.8, &[20.0, 30.0]);
        assert!(matches!(
            fit_weibull_ls(&points, 0.0),
            Err(MevError::InsufficientData(_))
        ));
        let same = vec![(20.0, 0.3), (20.0, 0.2), (20.0, 0.1)];
        assert!(matches!(
            fit_weibull_ls(&same, 0.0),
            Err(MevError::DegenerateFit(_))
        ));
    }

    #[test]
    fn ls_scale_equivariance() {
        let hs: Vec<f64> = (1..=12).map(|i| 12.0 * i as f64).collect();
        let points = model_points(15.0, 0.75, &hs);
        let lambda = 3.5;
        let scaled: Vec<(f64, f64)> = points.iter().map(|&(h, p)| (lambda * h, p)).collect();
        let a = fit_weibull_ls(&points, 0.0).unwrap();
        let b = fit_weibull_ls(&scaled, 0.0).unwrap();
        assert_relative_eq!(b.tail.scale_c, lambda * a.tail.scale_c, max_relative = 1e-9);
        assert_relative_eq!(b.tail.shape_w, a.tail.shape_w, max_relative = 1e-9);
    }

    #[test]
    fn mle_recovers_truncated_parameters() {
        let tail = WeibullTail::new(10.0, 0.8, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Rejection-sample the truncated tail directly.
        let mut values = Vec::with_capacity(100_000);
        while values.len() < 100_000 {
            let draws = weibull_sample(&mut rng, &tail, 4096).unwrap();
            values.extend(draws.into_iter().filter(|&h| h > 10.0));
        }
        values.truncate(100_000);
        let report = fit_weibull_mle(&values, 10.0).unwrap();
        assert!(report.converged);
        assert_relative_eq!(report.tail.scale_c, 10.0, max_relative = 0.02);
        assert_relative_eq!(report.tail.shape_w, 0.8, max_relative = 0.02);
    }

    #[test]
    fn mle_exponential_profile_matches_sample_mean() {
        // With h0 = 0 and w pinned at 1 the likelihood is the exponential one,
        // whose scale MLE is the sample mean.
        let tail = WeibullTail::new(7.0, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values = weibull_sample(&mut rng, &tail, 10_000).unwrap();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let f = |x: &[f64]| truncated_weibull_nll(&values, 0.0, x[0].exp(), 1.0);
        let res = nelder_mead(f, &[mean.ln() + 0.5], &[0.2], 1e-14, 2000);
        assert_relative_eq!(res.x[0].exp(), mean, max_relative = 1e-6);
    }

    #[test]
    fn mle_degenerate_input_soft_fails() {
        let values = vec![20.0, 20.000001, 19.999999, 20.0000005, 20.0, 20.0];
        let report = fit_weibull_mle(&values, 10.0).unwrap();
        assert!(!report.converged);
    }

    #[test]
    fn mle_insufficient_data() {
        assert!(matches!(
            fit_weibull_mle(&[11.0, 12.0, 13.0, 14.0], 10.0),
            Err(MevError::InsufficientData(_))
        ));
    }

    #[test]
    fn mle_conditional_density_normalizes() {
        // Numerical quadrature of the truncated density over (h0, inf).
        for &(c, w) in &[(10.0, 0.7), (10.0, 1.0), (15.0, 1.5)] {
            let h0 = 10.0f64;
            let density = |h: f64| {
                let hc: f64 = h / c;
                (w / c) * hc.powf(w - 1.0) * (-(hc.powf(w) - (h0 / c).powf(w))).exp()
            };
            // Simpson on a transformed grid up to a far cutoff.
            let hi = c * (200.0f64).powf(1.0 / w) + h0;
            let steps = 2_000_000;
            let dh = (hi - h0) / steps as f64;
            let mut integral = density(h0) + density(hi);
            for i in 1..steps {
                let h = h0 + i as f64 * dh;
                integral += if i % 2 == 1 { 4.0 } else { 2.0 } * density(h);
            }
            integral *= dh / 3.0;
            assert!((integral - 1.0).abs() < 1e-8, "(C={c}, w={w}): {integral}");
        }
    }

    fn gev_draws(mu: f64, sigma: f64, k: f64, count: usize, seed: u64) -> Vec<f64> {
        let params = GevParams::new(mu, sigma, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                gev_quantile(u, &params).unwrap()
            })
            .collect()
    }

    #[test]
    fn gev_recovers_parameters() {
        let draws = gev_draws(40.0, 10.0, 0.1, 10_000, 17);
        let report = fit_gev(&draws).unwrap();
        assert!(report.converged);
        assert_relative_eq!(report.params.location_mu, 40.0, max_relative = 0.05);
        assert_relative_eq!(report.params.scale_sigma, 10.0, max_relative = 0.05);
        assert!((report.params.shape_k - 0.1).abs() <= 0.05);
    }

    #[test]
    fn gev_on_gumbel_draws_finds_small_shape() {
        let draws = gev_draws(40.0, 10.0, 0.0, 10_000, 23);
        let report = fit_gev(&draws).unwrap();
        assert!(report.params.shape_k.abs() < 0.03, "k = {}", report.params.shape_k);
    }

    #[test]
    fn gev_degenerate_maxima() {
        let flat = vec![42.0; 20];
        assert!(matches!(fit_gev(&flat), Err(MevError::NonConvergence(_))));
    }

    #[test]
    fn gumbel_recovery_and_equivariance() {
        let draws = gev_draws(40.0, 10.0, 0.0, 10_000, 31);
        let report = fit_gumbel(&draws).unwrap();
        assert_relative_eq!(report.params.location_mu, 40.0, max_relative = 0.02);
        assert_relative_eq!(report.params.scale_sigma, 10.0, max_relative = 0.02);

        let shifted: Vec<f64> = draws.iter().map(|x| x + 7.0).collect();
        let rs = fit_gumbel(&shifted).unwrap();
        assert!((rs.params.location_mu - report.params.location_mu - 7.0).abs() < 1e-6);

        let scaled: Vec<f64> = draws.iter().map(|x| 2.0 * x).collect();
        let rc = fit_gumbel(&scaled).unwrap();
        assert!(
            (rc.params.scale_sigma - 2.0 * report.params.scale_sigma).abs()
                < 1e-6 * report.params.scale_sigma.max(1.0)
        );
    }

    #[test]
    fn mle_is_local_optimum() {
        let tail = WeibullTail::new(10.0, 0.8, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let values: Vec<f64> = weibull_sample(&mut rng, &tail, 50_000)
            .unwrap()
            .into_iter()
            .filter(|&h| h > 10.0)
            .collect();
        let report = fit_weibull_mle(&values, 10.0).unwrap();
        let at = truncated_weibull_nll(
            &values,
            10.0,
            report.tail.scale_c,
            report.tail.shape_w,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let dc: f64 = rng.gen_range(-0.1..0.1);
            let dw: f64 = rng.gen_range(-0.1..0.1);
            let perturbed = truncated_weibull_nll(
                &values,
                10.0,
                report.tail.scale_c * (1.0 + dc),
                report.tail.shape_w * (1.0 + dw),
            );
            assert!(perturbed >= at - 1e-9, "perturbation improved the likelihood");
        }
    }
}
