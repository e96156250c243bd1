//! End-to-end experiment orchestration: simulate → mask → extract → fit
//! (both likelihoods) → impute (both methods) → exposure evaluation, with
//! every artifact written under one output directory.
//!
//! Two experiments run back to back:
//!
//! 1. **Estimation.** Each replicate is simulated, masked with the
//!    configured mechanism, extracted, and fitted under both the ignorable
//!    and the adjusted likelihood. Per-replicate artifacts (motion,
//!    trajectory, masked trajectory, extraction, fits) and aggregate
//!    estimator histograms are emitted.
//! 2. **Exposure.** The same true trajectories are re-masked with an
//!    unscheduled outage at each `alpha` in the grid, refitted, imputed by
//!    both methods, and scored against per-trajectory hotspot sets. Reports
//!    and one long-format CSV are emitted.
//!
//! Replicates run in parallel; all randomness is derived from
//! `master_seed` by (purpose, index), so reruns are byte-identical and any
//! single replicate can be reproduced in isolation. Imputed series are
//! bulky, so only replicate 0's are written as a sample artifact — any
//! other is reproducible from the seeds recorded here and in the metadata.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{in_stage, Error, Result};
use crate::exposure::{
    center_and_bound, evaluate_exposure_per_trajectory, sample_hotspot, time_average, translate,
    ExposureReport, Hotspot,
};
use crate::imputation::{impute_gaps, ImputationOutput, ImputeMethod};
use crate::inference::{fit, moment_initial_guess, FitBounds, FitMode, FitResult};
use crate::io::{
    exposure_rows, write_exposure_csv, write_full_trajectory_csv, write_imputed_csv, write_json,
    write_motion_csv, write_trajectory_csv, ExposureCsvRow,
};
use crate::mechanisms::{generate_z, mask_trajectory, MechanismConfig};
use crate::model::{simulate_motion, InitialIncrementSpec, Theta};
use crate::seed::derive;
use crate::trajectory::{
    effective_sample_size, extract_increments, motion_to_trajectory, ExtractionResult,
    ObservedTrajectory, Trajectory,
};

/// Distance at or below which two positions count as equal during
/// extraction. Simulated trajectories store pause positions bit-exactly,
/// so zero suffices; external traces can pass their own tolerance.
pub const DEFAULT_EXTRACTION_TOLERANCE: f64 = 0.0;

/// Bins per component in the estimator histograms.
const HISTOGRAM_BINS: usize = 20;

/// Headline agreement rates for one (alpha, method) cell of the exposure
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRates {
    /// Outage fraction of the unscheduled-gap mask.
    pub alpha: f64,
    /// Imputation method label.
    pub method: String,
    /// Pooled agreement on truth-exposed pairs.
    pub true_positive_rate: f64,
    /// Pooled agreement on truth-unexposed pairs.
    pub true_negative_rate: f64,
    /// Two-stage (within trajectory, then across) positive rate.
    pub true_positive_rate_by_trajectory: f64,
    /// Two-stage negative rate.
    pub true_negative_rate_by_trajectory: f64,
    /// Mean exposure-time error, true minus imputed.
    pub grand_mean_diff: f64,
}

/// Aggregate results of one full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    /// The configuration that produced this summary.
    pub config: RunConfig,
    /// Mean effective sample size across replicates (0 when there are none).
    pub mean_ess: f64,
    /// Componentwise mean of the ignorable-likelihood estimates.
    pub naive_mean_theta_hat: [f64; 4],
    /// Componentwise mean of the adjusted-likelihood estimates.
    pub adjusted_mean_theta_hat: [f64; 4],
    /// Replicates whose ignorable fit met the optimizer tolerance.
    pub naive_converged: u64,
    /// Replicates whose adjusted fit met the optimizer tolerance.
    pub adjusted_converged: u64,
    /// Headline exposure rates, one entry per (alpha, method).
    pub exposure: Vec<ExposureRates>,
}

// Path layout under `out_dir`; kept in functions so tests and the CLI
// address the same files the pipeline writes.

/// `motions/motion_{i}.csv`
pub fn motion_csv_path(out_dir: &Path, i: u64) -> PathBuf {
    out_dir.join("motions").join(format!("motion_{i:04}.csv"))
}

/// `trajectories/trajectory_{i}.csv`
pub fn trajectory_csv_path(out_dir: &Path, i: u64) -> PathBuf {
    out_dir
        .join("trajectories")
        .join(format!("trajectory_{i:04}.csv"))
}

/// `masked/masked_{i}.csv`
pub fn masked_csv_path(out_dir: &Path, i: u64) -> PathBuf {
    out_dir.join("masked").join(format!("masked_{i:04}.csv"))
}

/// `extractions/extraction_{i}.json`
pub fn extraction_json_path(out_dir: &Path, i: u64) -> PathBuf {
    out_dir
        .join("extractions")
        .join(format!("extraction_{i:04}.json"))
}

/// `fits/fit_{mode}_{i}.json`
pub fn fit_json_path(out_dir: &Path, mode: FitMode, i: u64) -> PathBuf {
    out_dir.join("fits").join(format!("fit_{mode}_{i:04}.json"))
}

/// `histograms/theta_hat_{mode}.csv`
pub fn histogram_csv_path(out_dir: &Path, mode: FitMode) -> PathBuf {
    out_dir
        .join("histograms")
        .join(format!("theta_hat_{mode}.csv"))
}

/// `exposure/exposure.csv` — the long-format table over all alphas.
pub fn exposure_csv_path(out_dir: &Path) -> PathBuf {
    out_dir.join("exposure").join("exposure.csv")
}

/// `exposure/report_{method}_alpha{a}.json`
pub fn exposure_report_path(out_dir: &Path, method: ImputeMethod, alpha: f64) -> PathBuf {
    out_dir
        .join("exposure")
        .join(format!("report_{method}_alpha{alpha}.json"))
}

/// `imputations/sample_imputed_{method}_alpha{a}.csv` — replicate 0 only.
pub fn sample_imputed_path(out_dir: &Path, method: ImputeMethod, alpha: f64) -> PathBuf {
    out_dir
        .join("imputations")
        .join(format!("sample_imputed_{method}_alpha{alpha}.csv"))
}

/// `imputations/sample_metadata_{method}_alpha{a}.json`
pub fn sample_metadata_path(out_dir: &Path, method: ImputeMethod, alpha: f64) -> PathBuf {
    out_dir
        .join("imputations")
        .join(format!("sample_metadata_{method}_alpha{alpha}.json"))
}

/// `summary.json`
pub fn summary_json_path(out_dir: &Path) -> PathBuf {
    out_dir.join("summary.json")
}

fn create_dirs(out_dir: &Path) -> Result<()> {
    for sub in [
        "motions",
        "trajectories",
        "masked",
        "extractions",
        "fits",
        "histograms",
        "imputations",
        "exposure",
    ] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    Ok(())
}

/// Simulate all configured trajectories and write their motion and
/// trajectory CSVs; returns the motions. Idempotent for a fixed config.
pub fn simulate_and_write(config: &RunConfig) -> Result<Vec<crate::model::Motion>> {
    in_stage(config.validate(), "config")?;
    in_stage(
        std::fs::create_dir_all(config.out_dir.join("motions")).map_err(Error::from),
        "simulate",
    )?;
    in_stage(
        std::fs::create_dir_all(config.out_dir.join("trajectories")).map_err(Error::from),
        "simulate",
    )?;
    let motions: Vec<crate::model::Motion> = (0..config.n_trajectories)
        .into_par_iter()
        .map(|i| {
            simulate_motion(
                &config.theta,
                config.t_max,
                &InitialIncrementSpec::default(),
                derive(config.master_seed, "simulate", i),
            )
        })
        .collect();
    let written: Result<Vec<()>> = motions
        .par_iter()
        .enumerate()
        .map(|(i, motion)| {
            write_motion_csv(&motion_csv_path(&config.out_dir, i as u64), motion)?;
            write_full_trajectory_csv(
                &trajectory_csv_path(&config.out_dir, i as u64),
                &motion_to_trajectory(motion),
            )?;
            Ok(())
        })
        .collect();
    in_stage(written, "simulate")?;
    Ok(motions)
}

/// Everything the estimation experiment keeps about one replicate.
struct Replicate {
    truth: Trajectory,
    ess: u64,
    naive: FitResult,
    adjusted: FitResult,
}

fn run_replicate(config: &RunConfig, motion: &crate::model::Motion, i: u64) -> Result<Replicate> {
    let truth = motion_to_trajectory(motion);
    let z = in_stage(
        generate_z(
            &config.mechanism,
            config.t_max,
            derive(config.master_seed, "mask", i),
        ),
        "mask",
    )?;
    let obs = in_stage(mask_trajectory(&truth, &z), "mask")?;
    in_stage(
        write_trajectory_csv(&masked_csv_path(&config.out_dir, i), &obs),
        "mask",
    )?;

    let res = extract_increments(&obs, DEFAULT_EXTRACTION_TOLERANCE);
    in_stage(
        write_json(&extraction_json_path(&config.out_dir, i), &res),
        "extract",
    )?;

    let init = moment_initial_guess(&res);
    let bounds = FitBounds::default();
    let naive = in_stage(fit(&res, FitMode::NaiveMar, &init, &bounds), "fit")?;
    let adjusted = in_stage(fit(&res, FitMode::MnarAdjusted, &init, &bounds), "fit")?;
    in_stage(
        write_json(
            &fit_json_path(&config.out_dir, FitMode::NaiveMar, i),
            &naive,
        ),
        "fit",
    )?;
    in_stage(
        write_json(
            &fit_json_path(&config.out_dir, FitMode::MnarAdjusted, i),
            &adjusted,
        ),
        "fit",
    )?;

    Ok(Replicate {
        truth,
        ess: effective_sample_size(&res),
        naive,
        adjusted,
    })
}

/// One row of the binned estimator histogram CSV.
struct HistogramRow {
    component: &'static str,
    bin_lo: f64,
    bin_hi: f64,
    count: u64,
}

fn histogram_rows(estimates: &[Theta]) -> Vec<HistogramRow> {
    let names = ["theta1", "theta2", "theta3", "theta4"];
    let mut rows = Vec::new();
    for (c, name) in names.into_iter().enumerate() {
        let values: Vec<f64> = estimates.iter().map(|t| t.as_array()[c]).collect();
        let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            // Degenerate range: pad so the single value has a bin.
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        let mut counts = [0u64; HISTOGRAM_BINS];
        for &v in &values {
            let idx = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
            counts[idx] += 1;
        }
        for (b, &count) in counts.iter().enumerate() {
            rows.push(HistogramRow {
                component: name,
                bin_lo: lo + b as f64 * width,
                bin_hi: lo + (b + 1) as f64 * width,
                count,
            });
        }
    }
    rows
}

fn write_histogram_csv(path: &Path, estimates: &[Theta]) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(std::fs::File::create(path)?));
    w.write_record(["component", "bin_lo", "bin_hi", "count"])?;
    for row in histogram_rows(estimates) {
        w.write_record([
            row.component.to_owned(),
            format!("{}", row.bin_lo),
            format!("{}", row.bin_hi),
            row.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Intermediate per-replicate state of the exposure experiment at one alpha.
struct MaskedFit {
    obs: ObservedTrajectory,
    res: ExtractionResult,
    theta_hat: Theta,
}

fn exposure_rates(alpha: f64, method: ImputeMethod, report: &ExposureReport) -> ExposureRates {
    ExposureRates {
        alpha,
        method: method.to_string(),
        true_positive_rate: report.true_positive_rate,
        true_negative_rate: report.true_negative_rate,
        true_positive_rate_by_trajectory: report.true_positive_rate_by_trajectory,
        true_negative_rate_by_trajectory: report.true_negative_rate_by_trajectory,
        grand_mean_diff: report.grand_mean_diff,
    }
}

/// The alpha-independent inputs of the exposure experiment.
struct ExposureInputs<'a> {
    truths: &'a [Trajectory],
    means: &'a [[f64; 2]],
    centered: &'a [Trajectory],
    hotspot_sets: &'a [Vec<Hotspot>],
}

/// Run the exposure experiment for one alpha; returns rates per method and
/// appends this alpha's rows to `rows`.
fn run_exposure_alpha(
    config: &RunConfig,
    a_idx: u64,
    alpha: f64,
    inputs: &ExposureInputs<'_>,
    rows: &mut Vec<ExposureCsvRow>,
) -> Result<Vec<ExposureRates>> {
    let truths = inputs.truths;
    let n = truths.len() as u64;
    let mechanism = MechanismConfig::UnscheduledGap { alpha };

    // Mask, extract, and fit once per replicate; both methods share the fit.
    let fits: Result<Vec<MaskedFit>> = truths
        .par_iter()
        .enumerate()
        .map(|(i, truth)| {
            let combo = a_idx * n + i as u64;
            let z = in_stage(
                generate_z(
                    &mechanism,
                    config.t_max,
                    derive(config.master_seed, "exposure_mask", combo),
                ),
                "mask",
            )?;
            let obs = in_stage(mask_trajectory(truth, &z), "mask")?;
            let res = extract_increments(&obs, DEFAULT_EXTRACTION_TOLERANCE);
            let fitted = in_stage(
                fit(
                    &res,
                    FitMode::MnarAdjusted,
                    &moment_initial_guess(&res),
                    &FitBounds::default(),
                ),
                "fit",
            )?;
            Ok(MaskedFit {
                obs,
                res,
                theta_hat: fitted.theta_hat,
            })
        })
        .collect();
    let fits = fits?;

    let mut out = Vec::with_capacity(2);
    for method in [ImputeMethod::Linear, ImputeMethod::AdjustedParametric] {
        let stage_name = match method {
            ImputeMethod::Linear => "exposure_impute_linear",
            ImputeMethod::AdjustedParametric => "exposure_impute_adjusted",
        };
        let outputs: Result<Vec<ImputationOutput>> = fits
            .par_iter()
            .enumerate()
            .map(|(i, mf)| {
                let combo = a_idx * n + i as u64;
                in_stage(
                    impute_gaps(
                        &mf.obs,
                        &mf.res,
                        &mf.theta_hat,
                        method,
                        config.n_imputations,
                        derive(config.master_seed, stage_name, combo),
                    ),
                    "impute",
                )
            })
            .collect();
        let outputs = outputs?;

        // Sample artifact: replicate 0's full imputation set, in original
        // coordinates.
        in_stage(
            write_imputed_csv(
                &sample_imputed_path(&config.out_dir, method, alpha),
                &outputs[0].trajectories,
                Some(&fits[0].obs),
            ),
            "impute",
        )?;
        in_stage(
            write_json(
                &sample_metadata_path(&config.out_dir, method, alpha),
                &outputs[0].metadata,
            ),
            "impute",
        )?;

        // Score in the centered frame: shift each imputation by its own
        // truth's time average so observed positions stay bit-identical.
        let centered_sets: Vec<Vec<Trajectory>> = outputs
            .iter()
            .enumerate()
            .map(|(i, out)| {
                out.trajectories
                    .iter()
                    .map(|imp| translate(imp, inputs.means[i]))
                    .collect()
            })
            .collect();
        let report = in_stage(
            evaluate_exposure_per_trajectory(inputs.centered, &centered_sets, inputs.hotspot_sets),
            "exposure",
        )?;
        in_stage(
            write_json(
                &exposure_report_path(&config.out_dir, method, alpha),
                &report,
            ),
            "exposure",
        )?;
        rows.extend(exposure_rows(
            &report,
            &method.to_string(),
            Some(alpha),
            "unscheduled_gap",
            method == ImputeMethod::Linear,
        ));
        out.push(self::exposure_rates(alpha, method, &report));
    }
    Ok(out)
}

/// Run the full experiment described by `config`, writing all artifacts
/// under `config.out_dir` and returning the aggregate summary (also written
/// as `summary.json`). Deterministic: identical config (including
/// `master_seed`) produces byte-identical artifacts.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineSummary> {
    in_stage(config.validate(), "config")?;
    in_stage(create_dirs(&config.out_dir), "config")?;

    let motions = simulate_and_write(config)?;
    let replicates: Result<Vec<Replicate>> = motions
        .par_iter()
        .enumerate()
        .map(|(i, motion)| run_replicate(config, motion, i as u64))
        .collect();
    let replicates = replicates?;

    let mut summary = PipelineSummary {
        config: config.clone(),
        mean_ess: 0.0,
        naive_mean_theta_hat: [0.0; 4],
        adjusted_mean_theta_hat: [0.0; 4],
        naive_converged: 0,
        adjusted_converged: 0,
        exposure: Vec::new(),
    };

    let mut exposure_table: Vec<ExposureCsvRow> = Vec::new();
    if !replicates.is_empty() {
        let n = replicates.len() as f64;
        for rep in &replicates {
            summary.mean_ess += rep.ess as f64 / n;
            for c in 0..4 {
                summary.naive_mean_theta_hat[c] += rep.naive.theta_hat.as_array()[c] / n;
                summary.adjusted_mean_theta_hat[c] += rep.adjusted.theta_hat.as_array()[c] / n;
            }
            summary.naive_converged += u64::from(rep.naive.converged);
            summary.adjusted_converged += u64::from(rep.adjusted.converged);
        }

        let naive_estimates: Vec<Theta> = replicates.iter().map(|r| r.naive.theta_hat).collect();
        let adjusted_estimates: Vec<Theta> =
            replicates.iter().map(|r| r.adjusted.theta_hat).collect();
        in_stage(
            write_histogram_csv(
                &histogram_csv_path(&config.out_dir, FitMode::NaiveMar),
                &naive_estimates,
            ),
            "fit",
        )?;
        in_stage(
            write_histogram_csv(
                &histogram_csv_path(&config.out_dir, FitMode::MnarAdjusted),
                &adjusted_estimates,
            ),
            "fit",
        )?;

        // Exposure experiment over the alpha grid, on the same truths.
        let truths: Vec<Trajectory> = replicates.into_iter().map(|r| r.truth).collect();
        let means: Result<Vec<[f64; 2]>> = truths.iter().map(time_average).collect();
        let means = in_stage(means, "exposure")?;
        let (centered, bbox) = in_stage(center_and_bound(&truths), "exposure")?;
        let hotspot_sets: Result<Vec<Vec<Hotspot>>> = (0..truths.len() as u64)
            .map(|i| {
                (0..config.hotspots_per_trajectory)
                    .map(|h| {
                        sample_hotspot(
                            &bbox,
                            derive(
                                config.master_seed,
                                "hotspot",
                                i * config.hotspots_per_trajectory + h,
                            ),
                        )
                    })
                    .collect()
            })
            .collect();
        let hotspot_sets = in_stage(hotspot_sets, "exposure")?;

        let inputs = ExposureInputs {
            truths: &truths,
            means: &means,
            centered: &centered,
            hotspot_sets: &hotspot_sets,
        };
        for (a_idx, &alpha) in config.alpha_grid.iter().enumerate() {
            let rates =
                run_exposure_alpha(config, a_idx as u64, alpha, &inputs, &mut exposure_table)?;
            summary.exposure.extend(rates);
        }
    }

    in_stage(
        write_exposure_csv(&exposure_csv_path(&config.out_dir), &exposure_table),
        "exposure",
    )?;
    in_stage(
        write_json(&summary_json_path(&config.out_dir), &summary),
        "write",
    )?;
    Ok(summary)
}
