//! Metastatistical extreme value (MEV) analysis for Weibull-tailed daily
//! precipitation: stretched-exponential tail fitting, penultimate
//! block-maximum distributions, the MEV mixture estimator with return-level
//! inversion, Monte Carlo comparison against GEV/Gumbel fits, and a
//! percentile-envelope homogeneity test.
//!
//! Replicate loops run on rayon when the default `parallel` feature is on;
//! results are identical for any thread count because every work unit derives
//! its own random stream from its index.

pub mod blocks;
pub mod distributions;
pub mod error;
pub mod exec;
pub mod fitting;
pub mod homogeneity;
pub mod ingest;
pub mod mev;
pub mod montecarlo;
pub mod optim;

pub use blocks::{BlockConfig, BlockSummary, DailyRecord, DailySeries};
pub use distributions::{GevParams, WeibullTail};
pub use error::{MevError, Result};
pub use fitting::{FitMethod, GevFitReport, TailFitReport};
pub use mev::{MevComponent, MevModel};
pub use montecarlo::{ExperimentSpec, GumbelPlotSeries, GumbelPoint};
