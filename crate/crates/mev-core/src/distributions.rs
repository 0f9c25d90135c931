//! Closed-form probability functions for Weibull-tailed variates and their
//! block maxima: exceedance/quantile/sampling, the exact n-sample maximum CDF,
//! its penultimate approximation, and the GEV/Gumbel family.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MevError, Result};

/// Switch to the Gumbel limit formula below this |k| to avoid cancellation.
pub const GUMBEL_SWITCH: f64 = 1e-8;

/// Lower clamp applied to CDF values before double-log transforms.
pub const CDF_CLAMP_LO: f64 = 1e-300;
/// Upper clamp applied to CDF values before double-log transforms.
pub const CDF_CLAMP_HI: f64 = 1.0 - 1e-16;

/// Stretched-exponential exceedance tail of daily amounts:
/// `Psi(h) = exp(-(h/C)^w)` for `h` above the fitting threshold `h0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullTail {
    /// Scale parameter C, mm.
    pub scale_c: f64,
    /// Shape parameter w, dimensionless.
    pub shape_w: f64,
    /// Lower bound of the fitting domain, mm.
    pub threshold_h0: f64,
}

impl WeibullTail {
    pub fn new(scale_c: f64, shape_w: f64, threshold_h0: f64) -> Result<Self> {
        if !(scale_c > 0.0) || !scale_c.is_finite() {
            return Err(MevError::InvalidParameter(format!(
                "scale C must be positive and finite, got {scale_c}"
            )));
        }
        if !(shape_w > 0.0) || !shape_w.is_finite() {
            return Err(MevError::InvalidParameter(format!(
                "shape w must be positive and finite, got {shape_w}"
            )));
        }
        if !(threshold_h0 >= 0.0) || !threshold_h0.is_finite() {
            return Err(MevError::InvalidParameter(format!(
                "threshold h0 must be non-negative, got {threshold_h0}"
            )));
        }
        Ok(Self {
            scale_c,
            shape_w,
            threshold_h0,
        })
    }

    /// Scale of the preconditioned variable z = x^w: C' = C^w.
    pub fn c_prime(&self) -> f64 {
        self.scale_c.powf(self.shape_w)
    }
}

/// GEV parameters (location mu, scale sigma, shape k); k = 0 degenerates to Gumbel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub location_mu: f64,
    pub scale_sigma: f64,
    pub shape_k: f64,
}

impl GevParams {
    pub fn new(location_mu: f64, scale_sigma: f64, shape_k: f64) -> Result<Self> {
        if !(scale_sigma > 0.0) || !scale_sigma.is_finite() {
            return Err(MevError::InvalidParameter(format!(
                "scale sigma must be positive and finite, got {scale_sigma}"
            )));
        }
        if !location_mu.is_finite() || !shape_k.is_finite() {
            return Err(MevError::InvalidParameter(
                "location and shape must be finite".into(),
            ));
        }
        Ok(Self {
            location_mu,
            scale_sigma,
            shape_k,
        })
    }

    /// Support boundary mu - sigma/k (lower for k > 0, upper for k < 0).
    pub fn support_boundary(&self) -> Option<f64> {
        if self.shape_k.abs() < GUMBEL_SWITCH {
            None
        } else {
            Some(self.location_mu - self.scale_sigma / self.shape_k)
        }
    }

    /// Classical tail index alpha = 1/|k|.
    pub fn alpha(&self) -> Option<f64> {
        if self.shape_k.abs() < GUMBEL_SWITCH {
            None
        } else {
            Some(1.0 / self.shape_k.abs())
        }
    }
}

/// Exceedance probability Psi(h) = exp(-(h/C)^w).
pub fn weibull_exceedance(h: f64, tail: &WeibullTail) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(MevError::Domain(format!("h must be non-negative, got {h}")));
    }
    Ok((-(h / tail.scale_c).powf(tail.shape_w)).exp())
}

/// Level with exceedance probability `p`: C * (-ln p)^(1/w), p in (0, 1).
pub fn weibull_quantile(p: f64, tail: &WeibullTail) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MevError::Domain(format!(
            "exceedance probability must be in (0,1), got {p}"
        )));
    }
    Ok(tail.scale_c * (-p.ln()).powf(1.0 / tail.shape_w))
}

/// One inverse-transform draw from the full Weibull(C, w) distribution.
#[inline]
pub fn weibull_draw<R: Rng + ?Sized>(rng: &mut R, tail: &WeibullTail) -> f64 {
    // p = 1 - u is the exceedance probability, in (0, 1].
    let u: f64 = rng.gen();
    let p = 1.0 - u;
    tail.scale_c * (-p.ln()).powf(1.0 / tail.shape_w)
}

/// `count` i.i.d. inverse-transform draws; deterministic given the stream seed.
pub fn weibull_sample<R: Rng + ?Sized>(
    rng: &mut R,
    tail: &WeibullTail,
    count: usize,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(MevError::Domain("count must be at least 1".into()));
    }
    Ok((0..count).map(|_| weibull_draw(rng, tail)).collect())
}

/// Mode U_n of the n-sample maximum: the level exceeded with probability 1/n.
/// Real-valued n is accepted for the mean-cardinality use case.
pub fn mode_u_n(n: f64, tail: &WeibullTail) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(MevError::Domain(format!("n must be at least 1, got {n}")));
    }
    Ok(tail.scale_c * n.ln().powf(1.0 / tail.shape_w))
}

/// Exact CDF of the maximum of n draws: (1 - exp(-(y/C)^w))^n.
pub fn exact_block_cdf(y: f64, n: u64, tail: &WeibullTail) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(MevError::Domain(format!("y must be non-negative, got {y}")));
    }
    if n < 1 {
        return Err(MevError::Domain("n must be at least 1".into()));
    }
    let f = 1.0 - weibull_exceedance(y, tail)?;
    Ok(f.powf(n as f64))
}

/// Penultimate (preconditioned) CDF of the n-sample maximum:
/// `zeta(y) = exp(-exp(-((y/C)^w - ln n)))`, valid for any shape w.
pub fn penultimate_cdf(y: f64, n: f64, tail: &WeibullTail) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(MevError::Domain(format!("y must be non-negative, got {y}")));
    }
    if !(n >= 1.0) {
        return Err(MevError::Domain(format!("n must be at least 1, got {n}")));
    }
    let g = (y / tail.scale_c).powf(tail.shape_w) - n.ln();
    Ok((-(-g).exp()).exp())
}

/// Relative error of the Cauchy approximation at the mode U_n:
/// |e^-1 - (1 - 1/n)^n| / (1 - 1/n)^n.
pub fn cauchy_rel_error(n: u64) -> Result<f64> {
    if n < 2 {
        return Err(MevError::Domain("n must be at least 2".into()));
    }
    let nf = n as f64;
    let exact = (nf * (1.0 - 1.0 / nf).ln()).exp();
    let approx = (-1.0f64).exp();
    Ok((approx - exact).abs() / exact)
}

/// GEV CDF per the unified family; |k| below the switch uses the Gumbel limit.
pub fn gev_cdf(s: f64, params: &GevParams) -> f64 {
    let z = (s - params.location_mu) / params.scale_sigma;
    let k = params.shape_k;
    if k.abs() < GUMBEL_SWITCH {
        (-(-z).exp()).exp()
    } else {
        let t = 1.0 + k * z;
        if t <= 0.0 {
            // Outside the support: 0 left of the boundary (k>0), 1 right of it (k<0).
            if k > 0.0 {
                0.0
            } else {
                1.0
            }
        } else {
            (-t.powf(-1.0 / k)).exp()
        }
    }
}

/// GEV quantile: mu + sigma * ((-ln p)^-k - 1) / k, Gumbel branch mu - sigma*ln(-ln p).
pub fn gev_quantile(p: f64, params: &GevParams) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MevError::Domain(format!(
            "probability must be in (0,1), got {p}"
        )));
    }
    let k = params.shape_k;
    let lnp = -p.ln();
    if k.abs() < GUMBEL_SWITCH {
        Ok(params.location_mu - params.scale_sigma * lnp.ln())
    } else {
        Ok(params.location_mu + params.scale_sigma * (lnp.powf(-k) - 1.0) / k)
    }
}

/// Clamp a CDF value into the open unit interval used for double-log transforms.
pub fn clamp_cdf(zeta: f64) -> f64 {
    zeta.clamp(CDF_CLAMP_LO, CDF_CLAMP_HI)
}

/// Gumbel-plot reduced variate -ln(-ln zeta), with the CDF clamp applied.
pub fn reduced_variate(zeta: f64) -> f64 {
    -(-clamp_cdf(zeta).ln()).ln()
}

/// True when a CDF value sits at (or beyond) the clamp bounds.
pub fn is_clamped(zeta: f64) -> bool {
    zeta <= CDF_CLAMP_LO || zeta >= CDF_CLAMP_HI
}
