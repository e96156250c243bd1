//! `fpm` — the flight–pause model pipeline as a command line.
//!
//! Every subcommand is a thin file-to-file wrapper over the library: CSVs
//! and JSON go in, CSVs and JSON come out, and all randomness is seeded,
//! so any invocation is reproducible byte for byte. `simulate` and
//! `pipeline` are driven by a [`RunConfig`] JSON document (every field
//! optional, defaults match the headline synthetic experiment); the other
//! subcommands operate on individual artifact files so a single stage can
//! be rerun or swapped out in isolation.
//!
//! Failures print one `error [stage:<name>] ...` line to stderr and exit
//! nonzero; the stage tag names the innermost pipeline stage that failed,
//! which makes scripted runs easy to triage.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use flight_pause::inference::{fit, moment_initial_guess, FitBounds, FitMode, FitResult};
use flight_pause::io::{
    read_imputed_csv, read_json, read_trajectory_csv, write_imputed_csv, write_json,
    write_trajectory_csv,
};
use flight_pause::pipeline::{run_pipeline, simulate_and_write, summary_json_path};
use flight_pause::seed::derive;
use flight_pause::{
    effective_sample_size, evaluate_exposure_per_trajectory, extract_increments, generate_z,
    impute_gaps, mask_trajectory, Error, Hotspot, ImputeMethod, MechanismConfig, RunConfig, Theta,
    Trajectory,
};

#[derive(Parser)]
#[command(
    name = "fpm",
    version,
    about = "Flight-pause mobility model: simulation, inference under non-ignorable sampling, imputation, and exposure evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories; write motion and trajectory CSVs.
    Simulate(ConfigArgs),
    /// Apply a data-collection mechanism to a complete trajectory CSV.
    Mask(MaskArgs),
    /// Reconstruct increments and gap statistics from a trajectory CSV.
    Extract(ExtractArgs),
    /// Maximize an observed-data likelihood on a trajectory CSV.
    Fit(FitArgs),
    /// Fill the gaps of a trajectory CSV with imputed series.
    Impute(ImputeArgs),
    /// Score imputed series against their true trajectories.
    Exposure(ExposureArgs),
    /// Run the full experiment (simulate through exposure) from one config.
    Pipeline(ConfigArgs),
}

/// Flags shared by the config-driven subcommands.
#[derive(Args)]
struct ConfigArgs {
    /// RunConfig JSON; defaults apply to omitted fields and a missing flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MaskArgs {
    /// Complete trajectory CSV (`t,x,y,observed`, all rows observed).
    #[arg(long)]
    input: PathBuf,
    /// Mechanism JSON, e.g. '{"variant":"on_off","o":25,"u":25}'.
    #[arg(long)]
    mechanism: String,
    /// Seed for mechanisms that draw randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Masked trajectory CSV to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Trajectory CSV, observed or masked.
    #[arg(long)]
    input: PathBuf,
    /// Position-equality tolerance for pause detection (meters).
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    /// ExtractionResult JSON to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Trajectory CSV, observed or masked.
    #[arg(long)]
    input: PathBuf,
    /// Likelihood to maximize.
    #[arg(long, value_parser = parse_mode, default_value = "mnar_adjusted")]
    mode: FitMode,
    /// Position-equality tolerance for pause detection (meters).
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    /// FitResult JSON to write.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ImputeArgs {
    /// Trajectory CSV with gaps to fill.
    #[arg(long)]
    input: PathBuf,
    /// FitResult JSON whose theta_hat drives the sampler.
    #[arg(long, conflicts_with = "theta")]
    fit: Option<PathBuf>,
    /// Inline parameters as a JSON 4-array, e.g. '[0.1,0.1,0.95,1.0]'.
    #[arg(long)]
    theta: Option<String>,
    /// Fill method.
    #[arg(long, value_parser = parse_method, default_value = "adjusted_parametric")]
    method: ImputeMethod,
    /// Number of imputed series to draw.
    #[arg(long, default_value_t = 1)]
    n_imputations: u64,
    /// Master seed for the draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Imputed CSV to write (one block of rows per imputation).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExposureArgs {
    /// Complete true trajectory CSV; repeat the flag for several.
    #[arg(long, required = true)]
    truth: Vec<PathBuf>,
    /// Imputed CSV for the matching --truth, in the same order.
    #[arg(long, required = true)]
    imputed: Vec<PathBuf>,
    /// Hotspots sampled per trajectory.
    #[arg(long, default_value_t = 5)]
    hotspots: u64,
    /// Master seed for hotspot sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ExposureReport JSON to write.
    #[arg(long)]
    output: PathBuf,
}

fn parse_mode(s: &str) -> Result<FitMode, String> {
    match s {
        "naive_mar" => Ok(FitMode::NaiveMar),
        "mnar_adjusted" => Ok(FitMode::MnarAdjusted),
        other => Err(format!(
            "unknown mode {other:?}; expected naive_mar or mnar_adjusted"
        )),
    }
}

fn parse_method(s: &str) -> Result<ImputeMethod, String> {
    match s {
        "linear" => Ok(ImputeMethod::Linear),
        "adjusted_parametric" => Ok(ImputeMethod::AdjustedParametric),
        other => Err(format!(
            "unknown method {other:?}; expected linear or adjusted_parametric"
        )),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error {e}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Mask(args) => cmd_mask(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Impute(args) => cmd_impute(args),
        Command::Exposure(args) => cmd_exposure(args),
        Command::Pipeline(args) => cmd_pipeline(args),
    }
}

/// Load the run configuration and apply command-line overrides.
fn load_config(args: &ConfigArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => read_json::<RunConfig>(path).map_err(|e| e.with_stage("config"))?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &args.out_dir {
        config.out_dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    Ok(config)
}

/// Read a trajectory CSV that must have every row observed, as simulation
/// output does.
fn read_complete_trajectory(path: &Path) -> flight_pause::Result<Trajectory> {
    let obs = read_trajectory_csv(path)?;
    let positions: Option<Vec<[f64; 2]>> = obs.positions.iter().copied().collect();
    match positions {
        Some(positions) => Ok(Trajectory::new(positions)),
        None => Err(Error::Domain(format!(
            "{} has missing rows; a complete trajectory is required here",
            path.display()
        ))),
    }
}

fn cmd_simulate(args: ConfigArgs) -> anyhow::Result<()> {
    let config = load_config(&args)?;
    let motions = simulate_and_write(&config).map_err(|e| e.with_stage("simulate"))?;
    println!(
        "simulated {} trajectories of {} steps under {}",
        motions.len(),
        config.t_max,
        config.out_dir.display()
    );
    Ok(())
}

fn cmd_mask(args: MaskArgs) -> anyhow::Result<()> {
    let staged = |e: Error| e.with_stage("mask");
    let mechanism: MechanismConfig =
        serde_json::from_str(&args.mechanism).map_err(|e| staged(Error::Json(e)))?;
    let traj = read_complete_trajectory(&args.input).map_err(staged)?;
    let z = generate_z(&mechanism, traj.len() as u64, args.seed).map_err(staged)?;
    let masked = mask_trajectory(&traj, &z).map_err(staged)?;
    write_trajectory_csv(&args.output, &masked).map_err(staged)?;
    let kept = masked.positions.iter().filter(|p| p.is_some()).count();
    println!(
        "masked {}: kept {kept} of {} locations -> {}",
        args.input.display(),
        traj.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> anyhow::Result<()> {
    let staged = |e: Error| e.with_stage("extract");
    let obs = read_trajectory_csv(&args.input).map_err(staged)?;
    let res = extract_increments(&obs, args.tolerance);
    write_json(&args.output, &res).map_err(staged)?;
    println!(
        "extracted {}: {} blocks, {} gaps, effective sample size {} -> {}",
        args.input.display(),
        res.blocks.len(),
        res.block_stats.len(),
        effective_sample_size(&res),
        args.output.display()
    );
    Ok(())
}

fn cmd_fit(args: FitArgs) -> anyhow::Result<()> {
    let staged = |e: Error| e.with_stage("fit");
    let obs = read_trajectory_csv(&args.input).map_err(staged)?;
    let res = extract_increments(&obs, args.tolerance);
    let init = moment_initial_guess(&res);
    let result = fit(&res, args.mode, &init, &FitBounds::default()).map_err(staged)?;
    write_json(&args.output, &result).map_err(staged)?;
    let [t1, t2, t3, t4] = result.theta_hat.as_array();
    println!(
        "fit {} ({}): theta_hat = [{t1:.6}, {t2:.6}, {t3:.6}, {t4:.6}], loglik = {:.6}, \
         converged = {}, iterations = {} -> {}",
        args.input.display(),
        result.mode,
        result.log_lik,
        result.converged,
        result.iterations,
        args.output.display()
    );
    Ok(())
}

fn cmd_impute(args: ImputeArgs) -> anyhow::Result<()> {
    let staged = |e: Error| e.with_stage("impute");
    let theta: Theta = match (&args.fit, &args.theta) {
        (Some(path), None) => {
            read_json::<FitResult>(path)
                .map_err(|e| e.with_stage("impute"))?
                .theta_hat
        }
        (None, Some(inline)) => serde_json::from_str(inline).map_err(|e| staged(Error::Json(e)))?,
        _ => {
            return Err(staged(Error::Domain(
                "exactly one of --fit and --theta must be given".to_owned(),
            ))
            .into())
        }
    };
    let obs = read_trajectory_csv(&args.input).map_err(staged)?;
    let res = extract_increments(&obs, 0.0);
    let out = impute_gaps(
        &obs,
        &res,
        &theta,
        args.method,
        args.n_imputations,
        args.seed,
    )
    .map_err(staged)?;
    write_imputed_csv(&args.output, &out.trajectories, Some(&obs)).map_err(staged)?;
    println!(
        "imputed {} with {}: {} series of {} steps ({} edge gaps) -> {}",
        args.input.display(),
        out.metadata.method,
        out.trajectories.len(),
        obs.len(),
        out.metadata.edge_gap_spans.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_exposure(args: ExposureArgs) -> anyhow::Result<()> {
    let staged = |e: Error| e.with_stage("exposure");
    if args.truth.len() != args.imputed.len() {
        return Err(staged(Error::Mismatch(format!(
            "{} truth files but {} imputed files",
            args.truth.len(),
            args.imputed.len()
        )))
        .into());
    }
    let truths: Vec<Trajectory> = args
        .truth
        .iter()
        .map(|p| read_complete_trajectory(p))
        .collect::<flight_pause::Result<_>>()
        .map_err(staged)?;
    let imputed_sets: Vec<Vec<Trajectory>> = args
        .imputed
        .iter()
        .map(|p| read_imputed_csv(p))
        .collect::<flight_pause::Result<_>>()
        .map_err(staged)?;

    // Score in the centered frame, imputations shifted by their own truth's
    // time average, hotspots drawn from the shared bounding box.
    let means: Vec<[f64; 2]> = truths
        .iter()
        .map(flight_pause::exposure::time_average)
        .collect::<flight_pause::Result<_>>()
        .map_err(staged)?;
    let (centered, bbox) = flight_pause::center_and_bound(&truths).map_err(staged)?;
    let centered_sets: Vec<Vec<Trajectory>> = imputed_sets
        .iter()
        .zip(&means)
        .map(|(set, mean)| {
            set.iter()
                .map(|imp| flight_pause::exposure::translate(imp, *mean))
                .collect()
        })
        .collect();
    let hotspot_sets: Vec<Vec<Hotspot>> = (0..truths.len() as u64)
        .map(|i| {
            (0..args.hotspots)
                .map(|h| {
                    flight_pause::sample_hotspot(
                        &bbox,
                        derive(args.seed, "hotspot", i * args.hotspots + h),
                    )
                })
                .collect()
        })
        .collect::<flight_pause::Result<_>>()
        .map_err(staged)?;

    let report = evaluate_exposure_per_trajectory(&centered, &centered_sets, &hotspot_sets)
        .map_err(staged)?;
    write_json(&args.output, &report).map_err(staged)?;
    println!(
        "exposure over {} trajectories x {} hotspots: true-positive rate {:.4}, true-negative \
         rate {:.4}, mean exposure-time error {:.4} -> {}",
        truths.len(),
        args.hotspots,
        report.true_positive_rate,
        report.true_negative_rate,
        report.grand_mean_diff,
        args.output.display()
    );
    Ok(())
}

fn cmd_pipeline(args: ConfigArgs) -> anyhow::Result<()> {
    let config = load_config(&args)?;
    let summary = run_pipeline(&config)?;
    println!(
        "pipeline done: {} replicates, mean effective sample size {:.1}",
        config.n_trajectories, summary.mean_ess
    );
    println!(
        "fits converged: {}/{} ignorable, {}/{} adjusted",
        summary.naive_converged,
        config.n_trajectories,
        summary.adjusted_converged,
        config.n_trajectories
    );
    for rates in &summary.exposure {
        println!(
            "exposure alpha={} {}: true-positive rate {:.4}, true-negative rate {:.4}",
            rates.alpha, rates.method, rates.true_positive_rate, rates.true_negative_rate
        );
    }
    println!(
        "summary -> {}",
        summary_json_path(&config.out_dir).display()
    );
    Ok(())
}
