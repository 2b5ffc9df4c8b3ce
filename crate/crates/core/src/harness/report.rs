//! Report tables, run manifest and per-point prediction files.
//!
//! A report directory holds:
//! - `coverage.csv`: one row per (t60, snr_db, method, delta, axis), aggregated over repeats
//! - `per_repeat.csv`: the same key plus `repeat`
//! - `manifest.json`: configuration, seeds, width definition, clip counts, failures
//! - `timing.json`: wall time (kept apart so the other files are reproducible byte for byte)

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CellTallies, ExperimentConfig, Method, PointPrediction, Tally};
use crate::error::{Error, Result};
use crate::gpr::Axis;
use crate::interval::{Piece, PredictionInterval};
use crate::sim::Roi;

pub const REPORT_FORMAT: &str = "mmgp-coverage-report";
pub const REPORT_VERSION: u32 = 1;

pub const COVERAGE_COLUMNS: [&str; 10] = [
    "t60", "snr_db", "method", "delta", "axis", "coverage", "mean_width", "n_test", "repeats", "clipped",
];
pub const REPEAT_COLUMNS: [&str; 10] = [
    "t60", "snr_db", "method", "delta", "axis", "repeat", "coverage", "mean_width", "n_test", "clipped",
];

const WIDTH_DEFINITION: &str = "total Lebesgue width of the union of interval pieces; \
unbounded sets are first intersected with the ROI extent of their axis";

/// Aggregate over all completed repeats of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub t60: f64,
    #[serde(with = "crate::serde_float")]
    pub snr_db: f64,
    pub method: Method,
    pub delta: f64,
    pub axis: Axis,
    pub coverage: Option<f64>,
    pub mean_width: Option<f64>,
    pub n_test: usize,
    pub repeats: usize,
    pub clipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRow {
    pub t60: f64,
    #[serde(with = "crate::serde_float")]
    pub snr_db: f64,
    pub method: Method,
    pub delta: f64,
    pub axis: Axis,
    pub repeat: usize,
    pub coverage: Option<f64>,
    pub mean_width: Option<f64>,
    pub n_test: usize,
    pub clipped: usize,
}

/// A (t60, snr, repeat) cell that did not complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub t60: f64,
    #[serde(with = "crate::serde_float")]
    pub snr_db: f64,
    pub repeat: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub generator: String,
    pub config: ExperimentConfig,
    pub repeat_seeds: Vec<u64>,
    pub width_definition: String,
    /// Unbounded intervals clipped to the ROI before width statistics, over all rows.
    pub clipped_intervals: usize,
    pub cells_total: usize,
    pub cells_completed: usize,
    pub failures: Vec<CellFailure>,
    pub columns: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub manifest: RunManifest,
    pub rows: Vec<CoverageRow>,
    pub per_repeat: Vec<RepeatRow>,
    /// Not written to the reproducible files.
    pub wall_time_s: f64,
}

impl CoverageReport {
    /// Builds tables from per-unit results; `results[u][s]` belongs to unit `units[u]` = (t60 index, repeat) and SNR `s`.
    pub(super) fn assemble(
        cfg: &ExperimentConfig,
        units: &[(usize, usize)],
        results: Vec<Vec<std::result::Result<CellTallies, String>>>,
    ) -> Self {
        let mut failures = Vec::new();
        let mut per_repeat = Vec::new();
        // [t60][snr][method][delta][axis]
        let mut totals =
            vec![vec![vec![vec![[Tally::default(); 2]; cfg.deltas.len()]; cfg.methods.len()]; cfg.snrs_db.len()]; cfg.t60s.len()];
        let mut completed = vec![vec![0usize; cfg.snrs_db.len()]; cfg.t60s.len()];

        for (&(t, r), unit) in units.iter().zip(results) {
            for (s, res) in unit.into_iter().enumerate() {
                match res {
                    Err(message) => failures.push(CellFailure {
                        t60: cfg.t60s[t],
                        snr_db: cfg.snrs_db[s],
                        repeat: r,
                        message,
                    }),
                    Ok(tallies) => {
                        completed[t][s] += 1;
                        for (m, by_delta) in tallies.iter().enumerate() {
                            for (d, by_axis) in by_delta.iter().enumerate() {
                                for axis in Axis::BOTH {
                                    let tally = &by_axis[axis.index()];
                                    totals[t][s][m][d][axis.index()].merge(tally);
                                    per_repeat.push(RepeatRow {
                                        t60: cfg.t60s[t],
                                        snr_db: cfg.snrs_db[s],
                                        method: cfg.methods[m],
                                        delta: cfg.deltas[d],
                                        axis,
                                        repeat: r,
                                        coverage: tally.coverage(),
                                        mean_width: tally.mean_width(),
                                        n_test: tally.n,
                                        clipped: tally.clipped,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        per_repeat.sort_by(|a, b| {
            (a.t60, a.snr_db, a.method, a.delta, a.axis.index(), a.repeat)
                .partial_cmp(&(b.t60, b.snr_db, b.method, b.delta, b.axis.index(), b.repeat))
                .expect("finite keys")
        });

        let mut rows = Vec::new();
        let mut clipped_total = 0;
        for (t, &t60) in cfg.t60s.iter().enumerate() {
            for (s, &snr_db) in cfg.snrs_db.iter().enumerate() {
                for (m, &method) in cfg.methods.iter().enumerate() {
                    for (d, &delta) in cfg.deltas.iter().enumerate() {
                        for axis in Axis::BOTH {
                            let tally = totals[t][s][m][d][axis.index()];
                            clipped_total += tally.clipped;
                            rows.push(CoverageRow {
                                t60,
                                snr_db,
                                method,
                                delta,
                                axis,
                                coverage: tally.coverage(),
                                mean_width: tally.mean_width(),
                                n_test: tally.n,
                                repeats: completed[t][s],
                                clipped: tally.clipped,
                            });
                        }
                    }
                }
            }
        }

        let columns = [
            ("coverage.csv", COVERAGE_COLUMNS.as_slice()),
            ("per_repeat.csv", REPEAT_COLUMNS.as_slice()),
        ]
        .into_iter()
        .map(|(f, c)| (f.to_string(), c.iter().map(|s| s.to_string()).collect()))
        .collect();
        let cells_total = cfg.t60s.len() * cfg.snrs_db.len() * cfg.repeats;
        let manifest = RunManifest {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            generator: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            config: cfg.clone(),
            repeat_seeds: (0..cfg.repeats).map(|r| cfg.repeat_seed(r)).collect(),
            width_definition: WIDTH_DEFINITION.into(),
            clipped_intervals: clipped_total,
            cells_total,
            cells_completed: cells_total - failures.len(),
            failures,
            columns,
        };
        CoverageReport {
            manifest,
            rows,
            per_repeat,
            wall_time_s: 0.0,
        }
    }

    pub fn all_completed(&self) -> bool {
        self.manifest.failures.is_empty()
    }

    pub fn row(&self, method: Method, t60: f64, snr_db: f64, delta: f64, axis: Axis) -> Option<&CoverageRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.t60 == t60 && r.snr_db == snr_db && r.delta == delta && r.axis == axis)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&dir.join("coverage.csv"), &self.rows)?;
        write_csv(&dir.join("per_repeat.csv"), &self.per_repeat)?;
        let manifest = serde_json::to_string_pretty(&self.manifest)?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, manifest + "\n").map_err(|e| Error::io(&path, e))?;
        let timing = serde_json::json!({ "wall_time_s": self.wall_time_s });
        let path = dir.join("timing.json");
        std::fs::write(&path, timing.to_string() + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text)?;
        if manifest.format != REPORT_FORMAT || manifest.version != REPORT_VERSION {
            return Err(Error::Format(format!(
                "unsupported report {} v{}",
                manifest.format, manifest.version
            )));
        }
        let wall_time_s = std::fs::read_to_string(dir.join("timing.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|v| v["wall_time_s"].as_f64())
            .unwrap_or(f64::NAN);
        Ok(CoverageReport {
            manifest,
            rows: read_csv(&dir.join("coverage.csv"), &COVERAGE_COLUMNS)?,
            per_repeat: read_csv(&dir.join("per_repeat.csv"), &REPEAT_COLUMNS)?,
            wall_time_s,
        })
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, columns: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != columns {
        return Err(Error::Format(format!(
            "{}: columns {header:?} do not match {columns:?}",
            path.display()
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |c| format!("{:.1}", 100.0 * c))
}

fn meters(v: Option<f64>) -> String {
    v.map_or("-".into(), |w| format!("{w:.3}"))
}

/// Markdown table: one line per (t60, snr, method, axis), coverage % and mean width per delta.
pub fn format_table(rows: &[CoverageRow]) -> String {
    let mut deltas: Vec<f64> = Vec::new();
    for r in rows {
        if !deltas.contains(&r.delta) {
            deltas.push(r.delta);
        }
    }
    let mut out = String::from("| T60 [s] | SNR [dB] | method | axis |");
    for d in &deltas {
        let _ = write!(out, " cov {:.0}% | width {:.0}% [m] |", 100.0 * (1.0 - d), 100.0 * (1.0 - d));
    }
    out.push('\n');
    out.push_str("|---|---|---|---|");
    for _ in &deltas {
        out.push_str("---|---|");
    }
    out.push('\n');
    // bit patterns so that NaN (unknown scene) keys still group
    let mut keys: Vec<(u64, u64, Method, usize)> = Vec::new();
    for r in rows {
        let k = (r.t60.to_bits(), r.snr_db.to_bits(), r.method, r.axis.index());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (t60, snr, method, a) in keys {
        let axis = Axis::BOTH[a];
        let (t60, snr) = (f64::from_bits(t60), f64::from_bits(snr));
        let show = |v: f64| if v.is_nan() { "-".to_string() } else { v.to_string() };
        let _ = write!(out, "| {} | {} | {method} | {axis} |", show(t60), show(snr));
        for &d in &deltas {
            let row = rows
                .iter()
                .find(|r| r.t60.to_bits() == t60.to_bits() && r.snr_db.to_bits() == snr.to_bits() && r.method == method && r.axis == axis && r.delta == d);
            let _ = write!(
                out,
                " {} | {} |",
                pct(row.and_then(|r| r.coverage)),
                meters(row.and_then(|r| r.mean_width))
            );
        }
        out.push('\n');
    }
    out
}

/// One interval of one test point in a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub index: usize,
    pub true_x: Option<f64>,
    pub true_y: Option<f64>,
    pub estimate_x: f64,
    pub estimate_y: f64,
    pub method: Method,
    pub delta: f64,
    pub axis: Axis,
    /// Hull of the set; empty when the set is empty.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Total width before any clipping (may be `inf`).
    pub width: f64,
    /// `lo:hi` pairs separated by `;`.
    pub pieces: String,
    pub covered: Option<bool>,
}

impl PredictionRow {
    pub fn interval(&self) -> Result<PredictionInterval> {
        let pieces = self
            .pieces
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|p| {
                let (lo, hi) = p
                    .split_once(':')
                    .ok_or_else(|| Error::Format(format!("bad interval piece {p:?}")))?;
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad interval bound {s:?}: {e}")))
                };
                Ok(Piece {
                    lo: num(lo)?,
                    hi: num(hi)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PredictionInterval::new(pieces, self.delta))
    }

    pub fn truth(&self) -> Option<f64> {
        match self.axis {
            Axis::X => self.true_x,
            Axis::Y => self.true_y,
        }
    }
}

fn encode_pieces(pi: &PredictionInterval) -> String {
    pi.pieces()
        .iter()
        .map(|p| format!("{:?}:{:?}", p.lo, p.hi))
        .collect::<Vec<_>>()
        .join(";")
}

/// Rows for one prediction, in the prediction's interval order, x before y.
pub fn prediction_rows(index: usize, truth: Option<[f64; 2]>, pred: &PointPrediction) -> Vec<PredictionRow> {
    let mut rows = Vec::new();
    for mi in &pred.intervals {
        for axis in Axis::BOTH {
            let pi = &mi.intervals[axis.index()];
            let hull = pi.hull();
            rows.push(PredictionRow {
                index,
                true_x: truth.map(|t| t[0]),
                true_y: truth.map(|t| t[1]),
                estimate_x: pred.estimate[0],
                estimate_y: pred.estimate[1],
                method: mi.method,
                delta: mi.delta,
                axis,
                lo: hull.map(|h| h.lo),
                hi: hull.map(|h| h.hi),
                width: pi.total_width(),
                pieces: encode_pieces(pi),
                covered: truth.map(|t| pi.contains(t[axis.index()])),
            });
        }
    }
    rows
}

pub fn write_predictions(path: impl AsRef<Path>, rows: &[PredictionRow]) -> Result<()> {
    write_csv(path.as_ref(), rows)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Coverage and mean width per (method, delta, axis) from a predictions file.
/// Rows without a true position are skipped for coverage but counted for width.
pub fn summarize_predictions(rows: &[PredictionRow], roi: &Roi) -> Result<Vec<CoverageRow>> {
    let mut keys: Vec<(Method, f64, usize)> = Vec::new();
    let mut tallies: Vec<(Tally, usize)> = Vec::new();
    for row in rows {
        let key = (row.method, row.delta, row.axis.index());
        let slot = match keys.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                keys.push(key);
                tallies.push((Tally::default(), 0));
                keys.len() - 1
            }
        };
        let pi = row.interval()?;
        let (tally, unscored) = &mut tallies[slot];
        let extent = roi.extent(row.axis.index());
        match row.truth() {
            Some(t) => tally.add(&pi, t, extent),
            None => {
                // width only
                let mut t = Tally::default();
                t.add(&pi, f64::NAN, extent);
                tally.width_sum += t.width_sum;
                tally.clipped += t.clipped;
                *unscored += 1;
            }
        }
    }
    Ok(keys
        .into_iter()
        .zip(tallies)
        .map(|((method, delta, a), (t, unscored))| CoverageRow {
            t60: f64::NAN,
            snr_db: f64::NAN,
            method,
            delta,
            axis: Axis::BOTH[a],
            coverage: t.coverage(),
            mean_width: (t.n + unscored > 0).then(|| t.width_sum / (t.n + unscored) as f64),
            n_test: t.n,
            repeats: 1,
            clipped: t.clipped,
        })
        .collect())
}
