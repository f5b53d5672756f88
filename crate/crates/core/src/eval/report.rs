//! Comma-separated result tables and per-frame traces.
//!
//! `report.csv` holds one row per result, then a blank line and a block of
//! per-cell medians across seeds. Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::experiment::{EvalMode, MetricResult, TracePoint};
use super::metrics::median;
use crate::error::{Error, Result};
use crate::predictor::ModelKind;

pub const REPORT_FILE: &str = "report.csv";
pub const TRACE_DIR: &str = "traces";
pub const TRACE_SUFFIX: &str = ".trace.csv";
pub const RESULT_HEADER: &str =
    "dataset,mode,k_in,k_out,model,mse,fkd,bandwidth_ratio,savings_factor,seed";
pub const AGGREGATE_HEADER: &str =
    "dataset,mode,k_in,k_out,model,seeds,median_mse,median_fkd,median_bandwidth_ratio,median_savings_factor";
pub const TRACE_HEADER: &str = "sequence,frame,mse";

const PREAMBLE: &str = "\
# mse: mean squared error over predicted frames, normalized keypoint space
# fkd: Frechet keypoint distance over predicted frames (a keypoint-space proxy for FVD)
";

/// The columns of one result line.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub mode: EvalMode,
    pub k_in: usize,
    pub k_out: usize,
    pub model: ModelKind,
    pub mse: f64,
    pub fkd: f64,
    pub bandwidth_ratio: f64,
    pub savings_factor: f64,
    pub seed: u64,
}

impl From<&MetricResult> for ResultRow {
    fn from(r: &MetricResult) -> Self {
        ResultRow {
            dataset: r.dataset.clone(),
            mode: r.mode,
            k_in: r.k_in,
            k_out: r.k_out,
            model: r.model,
            mse: r.mse,
            fkd: r.fkd,
            bandwidth_ratio: r.bandwidth_ratio,
            savings_factor: r.savings_factor,
            seed: r.seed,
        }
    }
}

impl ResultRow {
    /// Reattaches the per-frame trace a row was summarized from.
    pub fn with_trace(self, trace: Vec<TracePoint>) -> MetricResult {
        MetricResult {
            dataset: self.dataset,
            mode: self.mode,
            k_in: self.k_in,
            k_out: self.k_out,
            model: self.model,
            seed: self.seed,
            mse: self.mse,
            fkd: self.fkd,
            frames: trace.len(),
            bandwidth_ratio: self.bandwidth_ratio,
            savings_factor: self.savings_factor,
            trace,
        }
    }

    fn cell(&self) -> CellKey {
        (self.dataset.clone(), self.mode, self.k_in, self.k_out, self.model)
    }
}

type CellKey = (String, EvalMode, usize, usize, ModelKind);

/// Medians across seeds of one (dataset, mode, k_in, k_out, model) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub dataset: String,
    pub mode: EvalMode,
    pub k_in: usize,
    pub k_out: usize,
    pub model: ModelKind,
    pub seeds: usize,
    pub median_mse: f64,
    pub median_fkd: f64,
    pub median_bandwidth_ratio: f64,
    pub median_savings_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ResultRow>,
    pub aggregate: Vec<AggregateRow>,
}

pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<CellKey, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        cells.entry(r.cell()).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((dataset, mode, k_in, k_out, model), rs)| {
            let med = |f: fn(&ResultRow) -> f64| {
                median(&rs.iter().map(|r| f(r)).collect::<Vec<_>>()).expect("cell has rows")
            };
            AggregateRow {
                dataset,
                mode,
                k_in,
                k_out,
                model,
                seeds: rs.len(),
                median_mse: med(|r| r.mse),
                median_fkd: med(|r| r.fkd),
                median_bandwidth_ratio: med(|r| r.bandwidth_ratio),
                median_savings_factor: med(|r| r.savings_factor),
            }
        })
        .collect()
}

fn check_name(what: &str, name: &str) -> Result<()> {
    if name.is_empty() || name.contains([',', '\n', '\r', '#']) || name.starts_with(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!(
            "{what} `{name}` cannot be written to a comma-separated file"
        )));
    }
    Ok(())
}

/// The full `report.csv` text: result rows then the median block.
pub fn format_report(rows: &[ResultRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    for r in rows {
        check_name("dataset", &r.dataset)?;
    }
    let mut s = String::from(PREAMBLE);
    s.push_str(RESULT_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.dataset, r.mode, r.k_in, r.k_out, r.model, r.mse, r.fkd, r.bandwidth_ratio, r.savings_factor, r.seed
        )
        .expect("write to string");
    }
    s.push_str("\n# medians across seeds\n");
    s.push_str(AGGREGATE_HEADER);
    s.push('\n');
    for a in aggregate(rows) {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            a.dataset,
            a.mode,
            a.k_in,
            a.k_out,
            a.model,
            a.seeds,
            a.median_mse,
            a.median_fkd,
            a.median_bandwidth_ratio,
            a.median_savings_factor
        )
        .expect("write to string");
    }
    Ok(s)
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, origin: &Path, line: usize) -> Result<T> {
    cols[i].trim().parse().map_err(|_| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message: format!("cannot parse column {} value `{}`", i + 1, cols[i]),
    })
}

fn parse_kind(s: &str, origin: &Path, line: usize) -> Result<ModelKind> {
    s.parse().map_err(|e: Error| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message: e.to_string(),
    })
}

fn parse_mode(s: &str, origin: &Path, line: usize) -> Result<EvalMode> {
    s.parse().map_err(|e: Error| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message: e.to_string(),
    })
}

/// Parses text written by [`format_report`]. A file with only the result
/// block is accepted too.
pub fn parse_report(text: &str, origin: &Path) -> Result<Report> {
    enum Block {
        None,
        Rows,
        Aggregate,
    }
    let mut block = Block::None;
    let mut report = Report {
        rows: Vec::new(),
        aggregate: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if l == RESULT_HEADER {
            block = Block::Rows;
            continue;
        }
        if l == AGGREGATE_HEADER {
            block = Block::Aggregate;
            continue;
        }
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: format!("expected 10 columns, found {}", cols.len()),
            });
        }
        match block {
            Block::None => {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line,
                    message: "data before any header".into(),
                })
            }
            Block::Rows => report.rows.push(ResultRow {
                dataset: cols[0].to_string(),
                mode: parse_mode(cols[1], origin, line)?,
                k_in: field(&cols, 2, origin, line)?,
                k_out: field(&cols, 3, origin, line)?,
                model: parse_kind(cols[4], origin, line)?,
                mse: field(&cols, 5, origin, line)?,
                fkd: field(&cols, 6, origin, line)?,
                bandwidth_ratio: field(&cols, 7, origin, line)?,
                savings_factor: field(&cols, 8, origin, line)?,
                seed: field(&cols, 9, origin, line)?,
            }),
            Block::Aggregate => report.aggregate.push(AggregateRow {
                dataset: cols[0].to_string(),
                mode: parse_mode(cols[1], origin, line)?,
                k_in: field(&cols, 2, origin, line)?,
                k_out: field(&cols, 3, origin, line)?,
                model: parse_kind(cols[4], origin, line)?,
                seeds: field(&cols, 5, origin, line)?,
                median_mse: field(&cols, 6, origin, line)?,
                median_fkd: field(&cols, 7, origin, line)?,
                median_bandwidth_ratio: field(&cols, 8, origin, line)?,
                median_savings_factor: field(&cols, 9, origin, line)?,
            }),
        }
    }
    Ok(report)
}

/// `<dataset>_<model>_<k>_<seed>`; asymmetric blocks write `k` as
/// `<k_in>x<k_out>` and transfer mode appends `.transfer`.
pub fn run_stem(dataset: &str, model: ModelKind, k_in: usize, k_out: usize, seed: u64, mode: EvalMode) -> String {
    let k = if k_in == k_out {
        k_out.to_string()
    } else {
        format!("{k_in}x{k_out}")
    };
    let mode = match mode {
        EvalMode::Reconstruction => "",
        EvalMode::Transfer => ".transfer",
    };
    format!("{dataset}_{model}_{k}_{seed}{mode}")
}

/// [`run_stem`] plus `.trace.csv`.
pub fn trace_file_name(r: &MetricResult) -> String {
    run_stem(&r.dataset, r.model, r.k_in, r.k_out, r.seed, r.mode) + TRACE_SUFFIX
}

pub fn format_trace(trace: &[TracePoint]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for p in trace {
        writeln!(s, "{},{},{}", p.sequence, p.frame, p.mse).expect("write to string");
    }
    s
}

pub fn parse_trace(text: &str, origin: &Path) -> Result<Vec<TracePoint>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l == TRACE_HEADER {
            continue;
        }
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: format!("expected 3 columns, found {}", cols.len()),
            });
        }
        out.push(TracePoint {
            sequence: cols[0].to_string(),
            frame: field(&cols, 1, origin, i + 1)?,
            mse: field(&cols, 2, origin, i + 1)?,
        });
    }
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedReport {
    pub report: PathBuf,
    pub traces: Vec<PathBuf>,
}

/// Writes `report.csv` and one trace file per result under `dir/traces`.
pub fn emit_report(results: &[MetricResult], dir: impl AsRef<Path>) -> Result<EmittedReport> {
    let dir = dir.as_ref();
    let rows: Vec<ResultRow> = results.iter().map(ResultRow::from).collect();
    let text = format_report(&rows)?;
    let trace_dir = dir.join(TRACE_DIR);
    std::fs::create_dir_all(&trace_dir).map_err(|e| Error::io(&trace_dir, e))?;
    let report = dir.join(REPORT_FILE);
    write(&report, &text)?;
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        let path = trace_dir.join(trace_file_name(r));
        write(&path, &format_trace(&r.trace))?;
        traces.push(path);
    }
    Ok(EmittedReport { report, traces })
}

/// Reads a directory written by [`emit_report`] back into results.
pub fn load_report_dir(dir: impl AsRef<Path>) -> Result<Vec<MetricResult>> {
    let dir = dir.as_ref();
    let path = dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report = parse_report(&text, &path)?;
    report
        .rows
        .into_iter()
        .map(|row| {
            let probe = row.clone().with_trace(Vec::new());
            let tpath = dir.join(TRACE_DIR).join(trace_file_name(&probe));
            let text = std::fs::read_to_string(&tpath).map_err(|e| Error::io(&tpath, e))?;
            Ok(row.with_trace(parse_trace(&text, &tpath)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(seed: u64, mse: f64) -> MetricResult {
        MetricResult {
            dataset: "switching".into(),
            mode: EvalMode::Reconstruction,
            k_in: 5,
            k_out: 5,
            model: ModelKind::Vrnn,
            seed,
            mse,
            fkd: 0.1 + mse,
            frames: 2,
            bandwidth_ratio: 4110.0 / 7710.0,
            savings_factor: 2.0,
            trace: vec![
                TracePoint { sequence: "s0".into(), frame: 5, mse: mse * 0.5 },
                TracePoint { sequence: "s0".into(), frame: 6, mse: mse * 1.5 },
            ],
        }
    }

    #[test]
    fn one_row_gives_header_and_one_line() {
        let text = format_report(&[ResultRow::from(&result(0, 0.01))]).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        assert_eq!(lines.next(), Some(RESULT_HEADER));
        assert!(lines.next().unwrap().starts_with("switching,reconstruction,5,5,vrnn,0.01,"));
        assert_eq!(lines.next(), Some(""));
    }

    #[test]
    fn round_trip() {
        let rows: Vec<ResultRow> = [result(0, 0.1 / 3.0), result(1, 1e-17)].iter().map(ResultRow::from).collect();
        let text = format_report(&rows).unwrap();
        let back = parse_report(&text, Path::new("r")).unwrap();
        assert_eq!(back.rows, rows);
        assert_eq!(back.aggregate, aggregate(&rows));
    }

    #[test]
    fn median_block() {
        let rows: Vec<ResultRow> = [result(0, 0.01), result(1, 0.03), result(2, 0.02)]
            .iter()
            .map(ResultRow::from)
            .collect();
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].seeds, 3);
        assert_eq!(agg[0].median_mse, 0.02);
    }

    #[test]
    fn empty_results_rejected() {
        assert!(format_report(&[]).is_err());
    }

    #[test]
    fn trace_names() {
        let mut r = result(3, 0.5);
        assert_eq!(trace_file_name(&r), "switching_vrnn_5_3.trace.csv");
        r.k_in = 8;
        r.mode = EvalMode::Transfer;
        assert_eq!(trace_file_name(&r), "switching_vrnn_8x5_3.transfer.trace.csv");
    }

    #[test]
    fn emit_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let rs = vec![result(0, 0.25), result(1, 0.125)];
        let out = emit_report(&rs, dir.path()).unwrap();
        assert_eq!(out.traces.len(), 2);
        assert_eq!(load_report_dir(dir.path()).unwrap(), rs);
    }

    #[test]
    fn commas_in_names_rejected() {
        let mut r = ResultRow::from(&result(0, 0.1));
        r.dataset = "a,b".into();
        assert!(format_report(&[r]).is_err());
    }
}
