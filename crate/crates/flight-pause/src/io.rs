//! Artifact serialization: CSV files for motions, trajectories, imputed
//! series, and exposure observations, plus JSON helpers for reports and
//! configurations.
//!
//! Formats are plain and plot-ready rather than clever. Floats are written
//! in Rust's shortest round-trip decimal form, so write → read recovers
//! every value bit-exactly and rewriting the same data yields byte-identical
//! files — reruns of a seeded experiment can be diffed at the byte level.
//!
//! Read paths validate the schema as they go and report violations as
//! [`Error::Schema`] with a `file:line` location, so a malformed row in a
//! third-party trace names itself.
//!
//! Column layouts:
//!
//! | file             | columns                                                   |
//! |------------------|-----------------------------------------------------------|
//! | motion CSV       | `k,start_time,start_x,start_y,duration,disp_x,disp_y,kind` |
//! | trajectory CSV   | `t,x,y,observed` (missing rows have empty `x,y`, observed=0) |
//! | imputed CSV      | trajectory CSV plus `imputation_id`; `x,y` always filled, `observed` flags the originally observed times |
//! | exposure CSV     | `trajectory_id,hotspot_id,imputation_id,method,alpha,scheme,passed,exposure_time` |

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::ExposureReport;
use crate::model::{Increment, IncrementKind, Motion};
use crate::trajectory::{ObservedTrajectory, Trajectory};

const MOTION_HEADER: [&str; 8] = [
    "k",
    "start_time",
    "start_x",
    "start_y",
    "duration",
    "disp_x",
    "disp_y",
    "kind",
];
const TRAJECTORY_HEADER: [&str; 4] = ["t", "x", "y", "observed"];
const IMPUTED_HEADER: [&str; 5] = ["t", "x", "y", "observed", "imputation_id"];
const EXPOSURE_HEADER: [&str; 8] = [
    "trajectory_id",
    "hotspot_id",
    "imputation_id",
    "method",
    "alpha",
    "scheme",
    "passed",
    "exposure_time",
];

fn schema_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Schema {
        location: format!("{}:{}", path.display(), line),
        message: message.into(),
    }
}

/// Format a float in shortest round-trip decimal form.
fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn parse_f64(path: &Path, line: u64, column: &str, field: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        schema_err(
            path,
            line,
            format!("column {column}: expected a real number, found {field:?}"),
        )
    })
}

fn parse_u64(path: &Path, line: u64, column: &str, field: &str) -> Result<u64> {
    field.parse::<u64>().map_err(|_| {
        schema_err(
            path,
            line,
            format!("column {column}: expected a nonnegative integer, found {field:?}"),
        )
    })
}

/// Read and validate the header row; returns the reader positioned at the
/// first data record.
fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let headers = reader.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(schema_err(
            path,
            1,
            format!("header mismatch: expected {expected:?}, found {got:?}"),
        ));
    }
    Ok(reader)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn expect_fields(path: &Path, record: &csv::StringRecord, n: usize) -> Result<()> {
    if record.len() != n {
        return Err(schema_err(
            path,
            record_line(record),
            format!("expected {n} fields, found {}", record.len()),
        ));
    }
    Ok(())
}

/// Write a motion as CSV.
pub fn write_motion_csv(path: &Path, motion: &Motion) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(MOTION_HEADER)?;
    for (i, inc) in motion.increments.iter().enumerate() {
        let kind = match inc.kind {
            IncrementKind::Flight => "f",
            IncrementKind::Pause => "p",
        };
        w.write_record([
            (i + 1).to_string(),
            inc.start_time.to_string(),
            fmt_f64(inc.start_pos[0]),
            fmt_f64(inc.start_pos[1]),
            inc.duration.to_string(),
            fmt_f64(inc.displacement[0]),
            fmt_f64(inc.displacement[1]),
            kind.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a motion CSV. Validates the schema (header, field counts and types,
/// sequential `k`) but not the motion invariants; run
/// [`crate::model::validate_motion`] on the result when structural validity
/// matters.
pub fn read_motion_csv(path: &Path) -> Result<Motion> {
    let mut reader = open_csv(path, &MOTION_HEADER)?;
    let mut increments = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        expect_fields(path, &record, 8)?;
        let k = parse_u64(path, line, "k", &record[0])?;
        if k != increments.len() as u64 + 1 {
            return Err(schema_err(
                path,
                line,
                format!("column k: expected {}, found {k}", increments.len() + 1),
            ));
        }
        let kind = match &record[7] {
            "f" => IncrementKind::Flight,
            "p" => IncrementKind::Pause,
            other => {
                return Err(schema_err(
                    path,
                    line,
                    format!("column kind: expected \"f\" or \"p\", found {other:?}"),
                ))
            }
        };
        increments.push(Increment {
            start_time: parse_u64(path, line, "start_time", &record[1])?,
            start_pos: [
                parse_f64(path, line, "start_x", &record[2])?,
                parse_f64(path, line, "start_y", &record[3])?,
            ],
            duration: parse_u64(path, line, "duration", &record[4])?,
            displacement: [
                parse_f64(path, line, "disp_x", &record[5])?,
                parse_f64(path, line, "disp_y", &record[6])?,
            ],
            kind,
        });
    }
    Ok(Motion { increments })
}

/// Write an observed trajectory as CSV; missing positions become empty
/// `x,y` fields with `observed = 0`.
pub fn write_trajectory_csv(path: &Path, traj: &ObservedTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(TRAJECTORY_HEADER)?;
    for (i, p) in traj.positions.iter().enumerate() {
        let t = (i + 1).to_string();
        match p {
            Some(pos) => w.write_record([t, fmt_f64(pos[0]), fmt_f64(pos[1]), "1".into()])?,
            None => w.write_record([t, String::new(), String::new(), "0".into()])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Write a fully observed trajectory as CSV (every row `observed = 1`).
pub fn write_full_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let observed = ObservedTrajectory::new(traj.positions.iter().map(|p| Some(*p)).collect());
    write_trajectory_csv(path, &observed)
}

fn parse_trajectory_row(
    path: &Path,
    record: &csv::StringRecord,
    expected_t: u64,
) -> Result<Option<[f64; 2]>> {
    let line = record_line(record);
    let t = parse_u64(path, line, "t", &record[0])?;
    if t != expected_t {
        return Err(schema_err(
            path,
            line,
            format!("column t: expected {expected_t}, found {t}"),
        ));
    }
    match &record[3] {
        "1" => Ok(Some([
            parse_f64(path, line, "x", &record[1])?,
            parse_f64(path, line, "y", &record[2])?,
        ])),
        "0" => {
            if !record[1].is_empty() || !record[2].is_empty() {
                return Err(schema_err(
                    path,
                    line,
                    "unobserved row must leave x and y empty",
                ));
            }
            Ok(None)
        }
        other => Err(schema_err(
            path,
            line,
            format!("column observed: expected 0 or 1, found {other:?}"),
        )),
    }
}

/// Read a trajectory CSV into an [`ObservedTrajectory`]; a fully observed
/// file simply has no `None` entries.
pub fn read_trajectory_csv(path: &Path) -> Result<ObservedTrajectory> {
    let mut reader = open_csv(path, &TRAJECTORY_HEADER)?;
    let mut positions = Vec::new();
    for record in reader.records() {
        let record = record?;
        expect_fields(path, &record, 4)?;
        let expected_t = positions.len() as u64 + 1;
        positions.push(parse_trajectory_row(path, &record, expected_t)?);
    }
    Ok(ObservedTrajectory::new(positions))
}

/// Write a set of imputed series for one trajectory. Every `x,y` is filled;
/// the `observed` column marks the originally observed times when `mask` is
/// given (all 1 otherwise).
pub fn write_imputed_csv(
    path: &Path,
    imputations: &[Trajectory],
    mask: Option<&ObservedTrajectory>,
) -> Result<()> {
    if let Some(m) = mask {
        if imputations.iter().any(|imp| imp.len() != m.len()) {
            return Err(Error::Mismatch(
                "imputation length differs from the observability mask".to_owned(),
            ));
        }
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(IMPUTED_HEADER)?;
    for (id, imp) in imputations.iter().enumerate() {
        for (i, pos) in imp.positions.iter().enumerate() {
            let observed = mask.is_none_or(|m| m.positions[i].is_some());
            w.write_record([
                (i + 1).to_string(),
                fmt_f64(pos[0]),
                fmt_f64(pos[1]),
                if observed { "1" } else { "0" }.to_string(),
                id.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read an imputed CSV back into its series, in `imputation_id` order.
pub fn read_imputed_csv(path: &Path) -> Result<Vec<Trajectory>> {
    let mut reader = open_csv(path, &IMPUTED_HEADER)?;
    let mut series: Vec<Vec<[f64; 2]>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        expect_fields(path, &record, 5)?;
        let id = parse_u64(path, line, "imputation_id", &record[4])? as usize;
        if id == series.len() {
            series.push(Vec::new());
        } else if id > series.len() {
            return Err(schema_err(
                path,
                line,
                format!(
                    "column imputation_id: expected at most {}, found {id}",
                    series.len()
                ),
            ));
        }
        let positions = &mut series[id];
        let t = parse_u64(path, line, "t", &record[0])?;
        if t != positions.len() as u64 + 1 {
            return Err(schema_err(
                path,
                line,
                format!("column t: expected {}, found {t}", positions.len() + 1),
            ));
        }
        if &record[3] != "0" && &record[3] != "1" {
            return Err(schema_err(
                path,
                line,
                format!("column observed: expected 0 or 1, found {:?}", &record[3]),
            ));
        }
        positions.push([
            parse_f64(path, line, "x", &record[1])?,
            parse_f64(path, line, "y", &record[2])?,
        ]);
    }
    Ok(series.into_iter().map(Trajectory::new).collect())
}

/// One row of the long-format exposure CSV. Truth rows carry
/// `imputation_id: None` and `method: "truth"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureCsvRow {
    /// Index into the trajectory list.
    pub trajectory_id: u64,
    /// Index into the hotspot list.
    pub hotspot_id: u64,
    /// Imputed-series index; empty field for truth rows.
    pub imputation_id: Option<u64>,
    /// Imputation method label, or `"truth"`.
    pub method: String,
    /// Mechanism intensity when applicable; empty field otherwise.
    pub alpha: Option<f64>,
    /// Data-collection scheme label.
    pub scheme: String,
    /// Whether the series enters the hotspot.
    pub passed: bool,
    /// Time periods spent inside the hotspot.
    pub exposure_time: u64,
}

/// Flatten a report's observations into long-format rows for one method and
/// scheme. `include_truth` lets callers writing several methods into one
/// file keep a single copy of the truth rows.
pub fn exposure_rows(
    report: &ExposureReport,
    method: &str,
    alpha: Option<f64>,
    scheme: &str,
    include_truth: bool,
) -> Vec<ExposureCsvRow> {
    report
        .observations
        .iter()
        .filter(|obs| include_truth || obs.imputation_id.is_some())
        .map(|obs| ExposureCsvRow {
            trajectory_id: obs.trajectory_id,
            hotspot_id: obs.hotspot_id,
            imputation_id: obs.imputation_id,
            method: if obs.imputation_id.is_none() {
                "truth".to_owned()
            } else {
                method.to_owned()
            },
            alpha,
            scheme: scheme.to_owned(),
            passed: obs.passed,
            exposure_time: obs.exposure_time,
        })
        .collect()
}

/// Write exposure rows as the long-format CSV.
pub fn write_exposure_csv(path: &Path, rows: &[ExposureCsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(EXPOSURE_HEADER)?;
    for row in rows {
        w.write_record([
            row.trajectory_id.to_string(),
            row.hotspot_id.to_string(),
            row.imputation_id
                .map_or_else(String::new, |id| id.to_string()),
            row.method.clone(),
            row.alpha.map_or_else(String::new, fmt_f64),
            row.scheme.clone(),
            if row.passed { "1" } else { "0" }.to_string(),
            row.exposure_time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write any serializable value as pretty-printed JSON with a trailing
/// newline. Field order follows the struct declaration, so identical values
/// produce identical bytes.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

/// Read a JSON artifact back.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}
