//! Monte Carlo percentile-envelope test of tail-parameter homogeneity:
//! synthesize replicates under a whole-interval tail fit, band the windowed
//! MEV estimates, and check where the observed curves fall.

use std::collections::BTreeMap;

use crate::blocks::{blocks_from_arrays, window_partition, BlockConfig, BlockSummary};
use crate::distributions::{weibull_draw, WeibullTail};
use crate::error::{MevError, Result};
use crate::exec::indexed_map;
use crate::fitting::{fit_weibull_ls, FitMethod, TailFitReport};
use crate::mev::{build_mev_model, mev_cdf};
use crate::montecarlo::{stream_rng, GumbelPlotSeries, STREAM_ENVELOPE};
use crate::blocks::empirical_exceedance;

/// 5/50/95 percentile curves over the level grid, as reduced variates.
#[derive(Debug, Clone)]
pub struct WidthBands {
    pub band_5: Vec<f64>,
    pub band_50: Vec<f64>,
    pub band_95: Vec<f64>,
}

/// Outcome of the envelope test, keyed by window width in years.
#[derive(Debug)]
pub struct EnvelopeResult {
    pub y_grid: Vec<f64>,
    pub bands: BTreeMap<usize, WidthBands>,
    /// Per width, one MEV curve per observed non-overlapping window.
    pub observed: BTreeMap<usize, Vec<GumbelPlotSeries>>,
    /// Fraction of (window, grid point) pairs where the observed windowed
    /// curves lie inside the width's 5-95% band.
    pub inside_fraction: BTreeMap<usize, f64>,
    /// The whole-interval tail fit defining the homogeneity null.
    pub null_fit: TailFitReport,
    pub dropped_replicates: usize,
}

/// Linear-interpolation percentiles per grid point. `matrix[g]` holds the
/// replicate samples at grid point `g`; the result is indexed `[p][g]`.
pub fn percentile_bands(matrix: &[Vec<f64>], percentiles: &[f64]) -> Result<Vec<Vec<f64>>> {
    for &p in percentiles {
        if !(0.0..=100.0).contains(&p) {
            return Err(MevError::Domain(format!(
                "percentile must be in [0, 100], got {p}"
            )));
        }
    }
    let mut bands = vec![Vec::with_capacity(matrix.len()); percentiles.len()];
    for samples in matrix {
        if samples.len() < 2 {
            return Err(MevError::InsufficientData(
                "need at least 2 samples per grid point".into(),
            ));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (band, &p) in bands.iter_mut().zip(percentiles) {
            let pos = p / 100.0 * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            band.push(sorted[lo] + (sorted[hi] - sorted[lo]) * frac);
        }
    }
    Ok(bands)
}

/// One MEV curve per non-overlapping width-year window: each window gets its
/// own tail fit paired with its years' cardinalities.
fn window_curves(
    blocks: &[BlockSummary],
    width: usize,
    h0: f64,
    grid: &[f64],
) -> Result<Vec<(String, Vec<f64>)>> {
    let (windows, _) = window_partition(blocks, width)?;
    windows
        .iter()
        .map(|window| {
            let built = build_mev_model(std::slice::from_ref(window), 1, FitMethod::Ls, h0)?;
            let curve = grid
                .iter()
                .map(|&y| mev_cdf(y, &built.model))
                .collect::<Result<Vec<f64>>>()?;
            Ok((window.label.clone(), curve))
        })
        .collect()
}

/// Run the percentile-envelope homogeneity test.
///
/// The null tail is one LS fit to the whole interval. Each replicate redraws
/// the same per-year cardinalities from that tail, and its windowed MEV
/// estimates are banded pointwise at the 5/50/95 percentiles per width.
pub fn envelope_test(
    blocks: &[BlockSummary],
    widths: &[usize],
    replicates: usize,
    threshold_h0: f64,
    seed: u64,
) -> Result<EnvelopeResult> {
    if widths.is_empty() {
        return Err(MevError::InvalidParameter("no window widths".into()));
    }
    let max_width = *widths.iter().max().unwrap();
    if blocks.len() < max_width {
        return Err(MevError::InsufficientData(format!(
            "{} blocks cannot cover the widest window of {max_width} years",
            blocks.len()
        )));
    }
    if replicates < 2 {
        return Err(MevError::InsufficientData(
            "need at least 2 replicates for percentile bands".into(),
        ));
    }

    // Homogeneity null: one tail for the whole interval. Rescale the
    // conditional plotting positions to wet-day exceedances so the fitted
    // tail describes the full wet-day distribution the replicates draw from.
    let pooled: Vec<f64> = blocks.iter().flat_map(|b| b.tail_values.clone()).collect();
    let total_wet: usize = blocks.iter().map(|b| b.n_wet()).sum();
    let mut points = empirical_exceedance(&pooled, threshold_h0)?;
    let ratio = points.len() as f64 / total_wet as f64;
    for p in &mut points {
        p.1 *= ratio;
    }
    let null_fit = fit_weibull_ls(&points, threshold_h0)?;
    let null_tail = null_fit.tail;

    let wet_counts: Vec<usize> = blocks
        .iter()
        .flat_map(|b| b.yearly_wet_counts.clone())
        .collect();
    let mean_n = wet_counts.iter().sum::<usize>() as f64 / wet_counts.len() as f64;

    // Level grid: uniform in reduced variate under the null homogeneous model,
    // spanning zeta in [0.2, 0.999].
    let grid = null_grid(&null_tail, mean_n, 0.2, 0.999, 100);

    let block_config = BlockConfig {
        trace_threshold: 0.0,
        threshold_h0,
    };
    // Each replicate yields one curve per (width, window); the bands per width
    // pool the curves of every replicate window of that width.
    let replicate_curves: Vec<Option<BTreeMap<usize, Vec<Vec<f64>>>>> =
        indexed_map(replicates, |rep| {
            let mut rng = stream_rng(seed, STREAM_ENVELOPE + rep as u64);
            let years: Vec<Vec<f64>> = wet_counts
                .iter()
                .map(|&n| (0..n).map(|_| weibull_draw(&mut rng, &null_tail)).collect())
                .collect();
            let synthetic = blocks_from_arrays(&years, &block_config);
            let mut per_width = BTreeMap::new();
            for &w in widths {
                let curves = window_curves(&synthetic, w, threshold_h0, &grid)
                    .ok()?
                    .into_iter()
                    .map(|(_, curve)| curve)
                    .collect::<Vec<_>>();
                per_width.insert(w, curves);
            }
            Some(per_width)
        });

    let total = replicate_curves.len();
    let kept: Vec<BTreeMap<usize, Vec<Vec<f64>>>> =
        replicate_curves.into_iter().flatten().collect();
    let dropped = total - kept.len();
    if dropped * 5 > total {
        return Err(MevError::TooManyFailures {
            failed: dropped,
            total,
        });
    }

    let mut bands = BTreeMap::new();
    let mut observed = BTreeMap::new();
    let mut inside_fraction = BTreeMap::new();
    for &w in widths {
        let matrix: Vec<Vec<f64>> = (0..grid.len())
            .map(|g| {
                kept.iter()
                    .flat_map(|r| r[&w].iter().map(move |curve| curve[g]))
                    .collect()
            })
            .collect();
        let pct = percentile_bands(&matrix, &[5.0, 50.0, 95.0])?;

        let observed_windows = window_curves(blocks, w, threshold_h0, &grid)?;
        let mut inside = 0usize;
        for (_, curve) in &observed_windows {
            inside += curve
                .iter()
                .enumerate()
                .filter(|&(g, &z)| z >= pct[0][g] && z <= pct[2][g])
                .count();
        }
        let inside = inside as f64 / (observed_windows.len() * grid.len()) as f64;

        let to_rv = |zs: &[f64]| -> Vec<f64> {
            zs.iter()
                .map(|&z| crate::distributions::reduced_variate(z))
                .collect()
        };
        bands.insert(
            w,
            WidthBands {
                band_5: to_rv(&pct[0]),
                band_50: to_rv(&pct[1]),
                band_95: to_rv(&pct[2]),
            },
        );
        observed.insert(
            w,
            observed_windows
                .into_iter()
                .map(|(label, curve)| GumbelPlotSeries::from_cdf_values(label, &grid, &curve))
                .collect(),
        );
        inside_fraction.insert(w, inside);
    }

    Ok(EnvelopeResult {
        y_grid: grid,
        bands,
        observed,
        inside_fraction,
        null_fit,
        dropped_replicates: dropped,
    })
}

/// Grid uniform in the null model's reduced variate between two CDF levels.
fn null_grid(tail: &WeibullTail, mean_n: f64, zeta_lo: f64, zeta_hi: f64, points: usize) -> Vec<f64> {
    let rv = |z: f64| -(-(z.ln())).ln();
    let (rv_lo, rv_hi) = (rv(zeta_lo), rv(zeta_hi));
    (0..points)
        .map(|i| {
            let r = rv_lo + (rv_hi - rv_lo) * i as f64 / (points - 1) as f64;
            tail.scale_c * (mean_n.ln() + r).powf(1.0 / tail.shape_w)
        })
        .collect()
}
