//! `mev`: metastatistical extreme value analysis of daily precipitation.
//!
//! Exit codes: 0 success, 2 validation error, 3 fit non-convergence, 4 IO.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mev_core::blocks::{partition_years, BlockConfig, BlockSummary};
use mev_core::error::{MevError, Result};
use mev_core::fitting::{fit_gev, fit_gumbel, FitMethod};
use mev_core::homogeneity::envelope_test;
use mev_core::ingest::{
    export_gumbel_plot, fmt_sig10, parse_daily_csv, select_interval, ExportFormat, StationConfig,
};
use mev_core::mev::{build_mev_model, mev_cdf, return_level, return_period, MevModel};
use mev_core::montecarlo::{
    compare_estimators, generate_experiment, stream_rng, ExperimentSpec, GumbelPlotSeries,
};

#[derive(Parser)]
#[command(name = "mev", version, about = "Metastatistical extreme value analysis")]
struct Cli {
    /// Worker threads for the analysis pool (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Daily precipitation CSV (columns per config, default date,amount_mm).
    #[arg(long)]
    input: PathBuf,

    /// Station configuration file (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Restrict to one analysis interval, as start:end years.
    #[arg(long, value_parser = parse_interval)]
    interval: Option<(i32, i32)>,

    /// Tail fitting threshold h0 in mm (overrides the config).
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; stdout summary only when omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output file format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TailMethod {
    Ls,
    Mle,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and its input file without running any analysis.
    Validate {
        /// Station configuration file (TOML or JSON).
        #[arg(long)]
        config: PathBuf,

        /// Daily CSV; defaults to the config's input_path.
        #[arg(long)]
        input: Option<PathBuf>,
    },

    /// Fit the Weibull tail of the daily amounts over one interval.
    FitTail {
        #[command(flatten)]
        input: InputArgs,

        #[arg(long, value_enum, default_value_t = TailMethod::Ls)]
        method: TailMethod,

        /// Write the fit report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Fit GEV and Gumbel distributions to the annual maxima.
    FitGev {
        #[command(flatten)]
        input: InputArgs,

        /// Write both fit reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Evaluate the MEV non-exceedance CDF at given levels.
    MevCdf {
        #[command(flatten)]
        model: ModelArgs,

        /// Levels in mm, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,

        #[command(flatten)]
        output: OutputArgs,
    },

    /// Invert the MEV CDF for given return periods.
    ReturnLevel {
        #[command(flatten)]
        model: ModelArgs,

        /// Return periods in years, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        tr: Vec<f64>,

        #[command(flatten)]
        output: OutputArgs,
    },

    /// Generate a synthetic regime-cycling experiment as daily values.
    Simulate {
        #[command(flatten)]
        experiment: ExperimentArgs,

        /// Output CSV of (year, day, amount_mm).
        #[arg(long)]
        out: PathBuf,
    },

    /// Compare median MEV/GEV/Gumbel estimates against a brute-force truth.
    Compare {
        #[command(flatten)]
        experiment: ExperimentArgs,

        /// Number of brute-force truth maxima.
        #[arg(long, default_value_t = 1_000_000)]
        truth_maxima: usize,

        /// Tail fitting threshold h0 in mm.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,

        /// Truth points kept in the output (evenly thinned).
        #[arg(long, default_value_t = 1000)]
        truth_points: usize,

        #[command(flatten)]
        output: OutputArgs,
    },

    /// Percentile-envelope test of tail homogeneity across window widths.
    Homogeneity {
        /// Daily precipitation CSV; mutually exclusive with --experiment.
        #[arg(long, conflicts_with = "experiment")]
        input: Option<PathBuf>,

        /// Station configuration file (TOML or JSON).
        #[arg(long)]
        config: Option<PathBuf>,

        /// Restrict to one analysis interval, as start:end years.
        #[arg(long, value_parser = parse_interval)]
        interval: Option<(i32, i32)>,

        /// Synthetic input instead of a CSV: experiment number 1-3.
        #[arg(long)]
        experiment: Option<u8>,

        /// Window widths in years, comma separated.
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<usize>>,

        /// Monte Carlo replicates.
        #[arg(long)]
        reps: Option<usize>,

        /// Tail fitting threshold h0 in mm.
        #[arg(long)]
        threshold: Option<f64>,

        #[arg(long)]
        seed: Option<u64>,

        #[command(flatten)]
        output: OutputArgs,
    },
}

/// Model source: a saved model JSON, or a daily CSV to build one from.
#[derive(Args)]
struct ModelArgs {
    /// MEV model JSON ({components:[{n, C, w}], weights:[...]}).
    #[arg(long, conflicts_with_all = ["input", "interval"])]
    model: Option<PathBuf>,

    /// Daily precipitation CSV to build the model from.
    #[arg(long, required_unless_present = "model")]
    input: Option<PathBuf>,

    /// Station configuration file (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Restrict to one analysis interval, as start:end years.
    #[arg(long, value_parser = parse_interval)]
    interval: Option<(i32, i32)>,

    /// Window width in years for per-window tail fits.
    #[arg(long, default_value_t = 1)]
    width: usize,

    #[arg(long, value_enum, default_value_t = TailMethod::Ls)]
    method: TailMethod,

    /// Tail fitting threshold h0 in mm (overrides the config).
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment number: 1 homogeneous, 2 five-year regimes, 3 two-year.
    #[arg(long, default_value_t = 1)]
    experiment: u8,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Monte Carlo replicates.
    #[arg(long, default_value_t = 200)]
    reps: usize,

    #[arg(long, default_value_t = 50)]
    years: usize,

    /// Wet days per year.
    #[arg(long, default_value_t = 100)]
    wet_days: usize,
}

impl ExperimentArgs {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match self.experiment {
            1 => ExperimentSpec::experiment1(self.seed),
            2 => ExperimentSpec::experiment2(self.seed),
            3 => ExperimentSpec::experiment3(self.seed),
            other => {
                return Err(MevError::InvalidParameter(format!(
                    "experiment must be 1, 2, or 3, got {other}"
                )))
            }
        };
        spec.n_years = self.years;
        spec.n_wet_per_year = self.wet_days;
        spec.replicates = self.reps;
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_interval(s: &str) -> std::result::Result<(i32, i32), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected start:end, got '{s}'"))?;
    let start: i32 = a.trim().parse().map_err(|e| format!("bad start year: {e}"))?;
    let end: i32 = b.trim().parse().map_err(|e| format!("bad end year: {e}"))?;
    if end < start {
        return Err(format!("interval {start}:{end} ends before it starts"));
    }
    Ok((start, end))
}

fn exit_code(err: &MevError) -> u8 {
    match err {
        MevError::InvalidParameter(_)
        | MevError::Domain(_)
        | MevError::InsufficientData(_)
        | MevError::EmptyInterval { .. }
        | MevError::Parse { .. }
        | MevError::DuplicateDate { .. }
        | MevError::NegativeAmount { .. } => 2,
        MevError::DegenerateFit(_)
        | MevError::NonConvergence(_)
        | MevError::TooManyFailures { .. } => 3,
        MevError::NonFiniteValue(_) | MevError::Io(_) | MevError::Json(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Thread count affects wall time only; all outputs are stream-keyed.
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Load config (if given), parse the CSV, and select the interval.
fn load_blocks(
    input: &Path,
    config: Option<&Path>,
    interval: Option<(i32, i32)>,
    threshold: Option<f64>,
) -> Result<(Vec<BlockSummary>, f64)> {
    let mut station = match config {
        Some(path) => StationConfig::load(path)?,
        None => StationConfig::default(),
    };
    if let Some(h0) = threshold {
        station.threshold_h0 = h0;
    }
    if station.threshold_h0 < 0.0 {
        return Err(MevError::InvalidParameter(
            "threshold must be non-negative".into(),
        ));
    }
    let mut series = parse_daily_csv(input, &station)?;
    if let Some((start, end)) = interval {
        series = select_interval(&series, start, end)?;
    }
    let block_config = BlockConfig {
        trace_threshold: station.trace_threshold,
        threshold_h0: station.threshold_h0,
    };
    Ok((partition_years(&series, &block_config)?, station.threshold_h0))
}

fn tail_method(m: TailMethod) -> FitMethod {
    match m {
        TailMethod::Ls => FitMethod::Ls,
        TailMethod::Mle => FitMethod::Mle,
    }
}

fn load_model(args: &ModelArgs) -> Result<MevModel> {
    if let Some(path) = &args.model {
        let text = std::fs::read_to_string(path)?;
        return MevModel::from_json(&text);
    }
    let input = args.input.as_ref().expect("clap enforces input xor model");
    let (blocks, h0) = load_blocks(
        input,
        args.config.as_deref(),
        args.interval,
        args.threshold,
    )?;
    let built = build_mev_model(&blocks, args.width, tail_method(args.method), h0)?;
    for ex in &built.excluded {
        eprintln!("warning: window {} excluded: {}", ex.label, ex.reason);
    }
    Ok(built.model)
}

fn write_out(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Validate { config, input } => {
            let station = StationConfig::load(&config)?;
            let input = input
                .or_else(|| station.input_path.as_ref().map(PathBuf::from))
                .ok_or_else(|| {
                    MevError::InvalidParameter(
                        "no input: pass --input or set input_path in the config".into(),
                    )
                })?;
            let series = parse_daily_csv(&input, &station)?;
            let wet = series
                .records
                .iter()
                .filter(|r| r.amount_mm > station.trace_threshold)
                .count();
            let (first, last) = series.year_span().expect("non-empty series");
            println!("station: {}", series.station);
            println!("records: {}", series.records.len());
            println!("wet days: {wet}");
            println!("years: {first}-{last}");
            for &(start, end) in &station.intervals {
                let sel = select_interval(&series, start, end)?;
                println!("interval {start}-{end}: {} records", sel.records.len());
            }
            Ok(())
        }

        Command::FitTail { input, method, out } => {
            let (blocks, h0) = load_blocks(
                &input.input,
                input.config.as_deref(),
                input.interval,
                input.threshold,
            )?;
            // One window covering every block: the pooled whole-interval fit.
            let built = build_mev_model(&blocks, blocks.len(), tail_method(method), h0)?;
            let report = built.window_fits.first().ok_or_else(|| {
                MevError::NonConvergence(
                    built
                        .excluded
                        .first()
                        .map(|e| e.reason.to_string())
                        .unwrap_or_else(|| "tail fit failed".into()),
                )
            })?;
            println!("C: {}", fmt_sig10(report.tail.scale_c));
            println!("w: {}", fmt_sig10(report.tail.shape_w));
            println!("threshold_h0: {h0}");
            println!("n_points: {}", report.n_points);
            println!("converged: {}", report.converged);
            if let Some(path) = out {
                let doc = serde_json::json!({
                    "C": report.tail.scale_c,
                    "w": report.tail.shape_w,
                    "threshold_h0": h0,
                    "method": report.method,
                    "n_points": report.n_points,
                    "converged": report.converged,
                    "objective": report.objective,
                });
                write_out(&path, &format!("{:#}\n", doc))?;
            }
            if !report.converged {
                return Err(MevError::NonConvergence("tail fit did not converge".into()));
            }
            Ok(())
        }

        Command::FitGev { input, out } => {
            let (blocks, _) = load_blocks(
                &input.input,
                input.config.as_deref(),
                input.interval,
                input.threshold,
            )?;
            let maxima: Vec<f64> = blocks.iter().filter_map(|b| b.annual_max).collect();
            let gev = fit_gev(&maxima)?;
            let gumbel = fit_gumbel(&maxima)?;
            println!("maxima: {}", maxima.len());
            println!(
                "gev: mu={} sigma={} k={} converged={}",
                fmt_sig10(gev.params.location_mu),
                fmt_sig10(gev.params.scale_sigma),
                fmt_sig10(gev.params.shape_k),
                gev.converged
            );
            println!(
                "gumbel: mu={} sigma={} converged={}",
                fmt_sig10(gumbel.params.location_mu),
                fmt_sig10(gumbel.params.scale_sigma),
                gumbel.converged
            );
            if let Some(path) = out {
                let doc = serde_json::json!({
                    "gev": {
                        "mu": gev.params.location_mu,
                        "sigma": gev.params.scale_sigma,
                        "k": gev.params.shape_k,
                        "converged": gev.converged,
                        "objective": gev.objective,
                    },
                    "gumbel": {
                        "mu": gumbel.params.location_mu,
                        "sigma": gumbel.params.scale_sigma,
                        "converged": gumbel.converged,
                        "objective": gumbel.objective,
                    },
                    "n_maxima": maxima.len(),
                });
                write_out(&path, &format!("{:#}\n", doc))?;
            }
            if !gev.converged {
                return Err(MevError::NonConvergence("GEV fit did not converge".into()));
            }
            Ok(())
        }

        Command::MevCdf {
            model,
            levels,
            output,
        } => {
            let model = load_model(&model)?;
            let mut rows = Vec::with_capacity(levels.len());
            for &y in &levels {
                let zeta = mev_cdf(y, &model)?;
                println!("zeta({y}) = {}", fmt_sig10(zeta));
                rows.push((y, zeta));
            }
            if let Some(path) = output.out {
                let content = match output.format {
                    Format::Csv => {
                        let mut s = String::from("y_mm,zeta\n");
                        for (y, z) in &rows {
                            s.push_str(&format!("{},{}\n", fmt_sig10(*y), fmt_sig10(*z)));
                        }
                        s
                    }
                    Format::Json => {
                        let doc: Vec<_> = rows
                            .iter()
                            .map(|(y, z)| {
                                serde_json::json!({"y_mm": fmt_sig10(*y), "zeta": fmt_sig10(*z)})
                            })
                            .collect();
                        format!("{:#}\n", serde_json::Value::Array(doc))
                    }
                };
                write_out(&path, &content)?;
            }
            Ok(())
        }

        Command::ReturnLevel { model, tr, output } => {
            let model = load_model(&model)?;
            let mut rows = Vec::with_capacity(tr.len());
            for &t in &tr {
                let y = return_level(t, &model)?;
                let check = return_period(y, &model)?;
                println!("T_r {t} years -> {} mm", fmt_sig10(y));
                rows.push((t, y, check.years));
            }
            if let Some(path) = output.out {
                let content = match output.format {
                    Format::Csv => {
                        let mut s = String::from("t_r_years,level_mm,round_trip_years\n");
                        for (t, y, rt) in &rows {
                            s.push_str(&format!(
                                "{},{},{}\n",
                                fmt_sig10(*t),
                                fmt_sig10(*y),
                                fmt_sig10(*rt)
                            ));
                        }
                        s
                    }
                    Format::Json => {
                        let doc: Vec<_> = rows
                            .iter()
                            .map(|(t, y, rt)| {
                                serde_json::json!({
                                    "t_r_years": fmt_sig10(*t),
                                    "level_mm": fmt_sig10(*y),
                                    "round_trip_years": fmt_sig10(*rt),
                                })
                            })
                            .collect();
                        format!("{:#}\n", serde_json::Value::Array(doc))
                    }
                };
                write_out(&path, &content)?;
            }
            Ok(())
        }

        Command::Simulate { experiment, out } => {
            let spec = experiment.spec()?;
            let years = generate_experiment(&spec, &mut stream_rng(spec.seed, 0))?;
            let mut content = String::from("year,day,amount_mm\n");
            for (year, values) in years.iter().enumerate() {
                for (day, v) in values.iter().enumerate() {
                    content.push_str(&format!("{},{},{}\n", year, day, fmt_sig10(*v)));
                }
            }
            write_out(&out, &content)?;
            println!(
                "wrote {} years ({} values) to {}",
                years.len(),
                years.iter().map(Vec::len).sum::<usize>(),
                out.display()
            );
            Ok(())
        }

        Command::Compare {
            experiment,
            truth_maxima,
            threshold,
            truth_points,
            output,
        } => {
            let spec = experiment.spec()?;
            let result = compare_estimators(&spec, truth_maxima, threshold)?;
            println!(
                "replicates: {} kept, {} failed",
                spec.replicates - result.medians.failed_replicates,
                result.medians.failed_replicates
            );
            if let Some(path) = output.out {
                let truth = thin_series(&result.truth, truth_points);
                let series = [truth, result.mev, result.gev, result.gumbel];
                export_gumbel_plot(&series, &path, output.format.into())?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }

        Command::Homogeneity {
            input,
            config,
            interval,
            experiment,
            widths,
            reps,
            threshold,
            seed,
            output,
        } => {
            let station = match &config {
                Some(path) => StationConfig::load(path)?,
                None => StationConfig::default(),
            };
            let widths = widths.unwrap_or_else(|| station.widths.clone());
            let reps = reps.unwrap_or(station.replicates);
            let h0 = threshold.unwrap_or(station.threshold_h0);
            let seed = seed.unwrap_or(station.seed);

            let blocks = match (&input, experiment) {
                (Some(path), None) => load_blocks(path, config.as_deref(), interval, Some(h0))?.0,
                (None, Some(n)) => {
                    let args = ExperimentArgs {
                        experiment: n,
                        seed,
                        reps,
                        years: 50,
                        wet_days: 100,
                    };
                    let spec = args.spec()?;
                    let years = generate_experiment(&spec, &mut stream_rng(seed, 0))?;
                    mev_core::blocks::blocks_from_arrays(
                        &years,
                        &BlockConfig {
                            trace_threshold: 0.0,
                            threshold_h0: h0,
                        },
                    )
                }
                _ => {
                    return Err(MevError::InvalidParameter(
                        "pass exactly one of --input or --experiment".into(),
                    ))
                }
            };

            let result = envelope_test(&blocks, &widths, reps, h0, seed)?;
            println!(
                "null tail: C={} w={}",
                fmt_sig10(result.null_fit.tail.scale_c),
                fmt_sig10(result.null_fit.tail.shape_w)
            );
            for (&w, &frac) in &result.inside_fraction {
                let verdict = if frac >= 0.9 {
                    "consistent with homogeneity"
                } else {
                    "outside the envelope"
                };
                println!("width {w}: inside fraction {frac:.3} ({verdict})");
            }
            if result.dropped_replicates > 0 {
                println!("dropped replicates: {}", result.dropped_replicates);
            }
            if let Some(path) = output.out {
                write_out(&path, &homogeneity_report(&result, output.format)?)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

/// Evenly thin a truth curve to at most `keep` points (endpoints retained).
fn thin_series(series: &GumbelPlotSeries, keep: usize) -> GumbelPlotSeries {
    let n = series.points.len();
    if keep < 2 || n <= keep {
        return series.clone();
    }
    let points = (0..keep)
        .map(|i| series.points[i * (n - 1) / (keep - 1)])
        .collect();
    GumbelPlotSeries {
        label: series.label.clone(),
        points,
    }
}

/// Long-format envelope table: one row per (width, window, grid point), with
/// the width's reduced-variate bands alongside each window's observed curve.
fn homogeneity_report(
    result: &mev_core::homogeneity::EnvelopeResult,
    format: Format,
) -> Result<String> {
    let widths: Vec<usize> = result.bands.keys().copied().collect();
    match format {
        Format::Csv => {
            let mut out =
                String::from("width,window,y_mm,band5,band50,band95,observed_rv\n");
            for w in &widths {
                let b = &result.bands[w];
                for series in &result.observed[w] {
                    for (g, &y) in result.y_grid.iter().enumerate() {
                        out.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            w,
                            series.label,
                            fmt_sig10(y),
                            fmt_sig10(b.band_5[g]),
                            fmt_sig10(b.band_50[g]),
                            fmt_sig10(b.band_95[g]),
                            fmt_sig10(series.points[g].reduced_variate)
                        ));
                    }
                }
            }
            Ok(out)
        }
        Format::Json => {
            let doc = serde_json::json!({
                "y_grid": result.y_grid.iter().map(|&y| fmt_sig10(y)).collect::<Vec<_>>(),
                "inside_fraction": result
                    .inside_fraction
                    .iter()
                    .map(|(w, f)| (w.to_string(), fmt_sig10(*f)))
                    .collect::<std::collections::BTreeMap<_, _>>(),
                "widths": widths
                    .iter()
                    .map(|w| {
                        let b = &result.bands[w];
                        serde_json::json!({
                            "width": w,
                            "band_5": b.band_5.iter().map(|&v| fmt_sig10(v)).collect::<Vec<_>>(),
                            "band_50": b.band_50.iter().map(|&v| fmt_sig10(v)).collect::<Vec<_>>(),
                            "band_95": b.band_95.iter().map(|&v| fmt_sig10(v)).collect::<Vec<_>>(),
                            "observed": result.observed[w]
                                .iter()
                                .map(|series| serde_json::json!({
                                    "window": series.label,
                                    "reduced_variate": series
                                        .points
                                        .iter()
                                        .map(|p| fmt_sig10(p.reduced_variate))
                                        .collect::<Vec<_>>(),
                                }))
                                .collect::<Vec<_>>(),
                        })
                    })
                    .collect::<Vec<_>>(),
                "dropped_replicates": result.dropped_replicates,
            });
            Ok(format!("{:#}\n", doc))
        }
    }
}
