//! Result serialization. One CSV schema (sweep cells) and a JSON renderer
//! that prints every real with 17 significant digits so files round-trip
//! bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::conditioning::EventStats;
use super::{EnvelopeReport, ExperimentError, RateFit, SweepResult};
use crate::analytics::PropertyReport;
use crate::Real;

/// Column order of the sweep CSV.
pub const CSV_COLUMNS: [&str; 11] = [
    "instance",
    "algorithm",
    "eta",
    "T",
    "n",
    "conditioning",
    "replicates",
    "mean_excess",
    "stderr",
    "divergences",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl core::fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for OutputFormat {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(ExperimentError::InvalidParameter(format!(
                "unknown output format {other:?}; known formats: csv, json"
            ))),
        }
    }
}

/// Any result the harness can write out.
#[derive(Clone, Copy)]
pub enum Results<'a> {
    Sweep(&'a SweepResult),
    Fit(&'a RateFit),
    Envelope(&'a EnvelopeReport),
    Events(&'a EventStats),
    Properties(&'a PropertyReport),
}

/// A real with 17 significant digits; parses back to the same bits.
pub(crate) fn real17(x: Real) -> String {
    format!("{x:.16e}")
}

/// Renders `results` to text in the requested format. CSV is defined for
/// sweeps only; everything serializes to JSON. The text ends with a newline.
pub fn render(results: Results<'_>, format: OutputFormat) -> Result<String, ExperimentError> {
    match format {
        OutputFormat::Csv => match results {
            Results::Sweep(sweep) => sweep_csv(sweep),
            _ => Err(ExperimentError::InvalidParameter(
                "csv output is defined for sweep results only; use json".to_string(),
            )),
        },
        OutputFormat::Json => match results {
            Results::Sweep(v) => to_json_string(v),
            Results::Fit(v) => to_json_string(v),
            Results::Envelope(v) => to_json_string(v),
            Results::Events(v) => to_json_string(v),
            Results::Properties(v) => to_json_string(v),
        },
    }
}

/// Renders and writes to `path`.
pub fn write_results(
    results: Results<'_>,
    path: &Path,
    format: OutputFormat,
) -> Result<(), ExperimentError> {
    let text = render(results, format)?;
    fs::write(path, text)?;
    Ok(())
}

fn sweep_csv(sweep: &SweepResult) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for cell in &sweep.cells {
        w.write_record([
            cell.instance.as_str(),
            &cell.algorithm.to_string(),
            &real17(cell.eta),
            &cell.t_iters.to_string(),
            &cell.n.to_string(),
            cell.conditioning.as_deref().unwrap_or(""),
            &cell.replicates.to_string(),
            &cell.mean_excess.map(real17).unwrap_or_default(),
            &cell.stderr.map(real17).unwrap_or_default(),
            &cell.divergences.to_string(),
            &cell.seed.to_string(),
        ])?;
    }
    w.flush().map_err(ExperimentError::Io)?;
    let bytes = w.into_inner().expect("in-memory csv writer cannot fail");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// JSON with two-space indentation, reals at 17 significant digits, and a
/// trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, ExperimentError> {
    let tree = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&tree, 0, &mut out);
    out.push('\n');
    Ok(out)
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Value::Number(n) => {
            if n.is_f64() {
                let _ = write!(out, "{:.16e}", n.as_f64().expect("checked f64"));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serialization"));
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(indent + 1, out);
                write_value(item, indent + 1, out);
            }
            newline(indent, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (key, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(indent + 1, out);
                out.push_str(&serde_json::to_string(key).expect("key serialization"));
                out.push_str(": ");
                write_value(item, indent + 1, out);
            }
            newline(indent, out);
            out.push('}');
        }
    }
}

fn newline(indent: usize, out: &mut String) {
    out.push('\n');
    for _ in 0..indent {
        out.push_str("  ");
    }
}

#[cfg(test)]
mod tests {
    use super::super::{SweepCell, SweepGrid};
    use super::*;
    use crate::optimizers::Algorithm;

    fn empty_sweep() -> SweepResult {
        SweepResult {
            grid: SweepGrid::new("twodim", Algorithm::GD, vec![1.0], vec![2], vec![1], 1, 0),
            cells: Vec::new(),
            total_runtime_secs: 0.0,
        }
    }

    fn one_cell_sweep() -> SweepResult {
        let mut sweep = empty_sweep();
        sweep.cells.push(SweepCell {
            instance: "twodim{lambda=1}".to_string(),
            algorithm: Algorithm::GD,
            eta: 0.5,
            t_iters: 2,
            n: 1,
            conditioning: None,
            replicates: 3,
            mean_excess: Some(0.5625),
            stderr: Some(0.0),
            divergences: 0,
            seed: 42,
            error: None,
        });
        sweep
    }

    #[test]
    fn empty_sweep_gives_header_only_csv() {
        let text = render(Results::Sweep(&empty_sweep()), OutputFormat::Csv).unwrap();
        assert_eq!(
            text,
            "instance,algorithm,eta,T,n,conditioning,replicates,mean_excess,stderr,divergences,seed\n"
        );
    }

    #[test]
    fn one_cell_sweep_gives_two_line_csv() {
        let text = render(Results::Sweep(&one_cell_sweep()), OutputFormat::Csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(text.ends_with('\n'));
        // The instance name holds commas, so the csv writer must quote it.
        assert_eq!(
            lines[1],
            "twodim{lambda=1},GD,5.0000000000000000e-1,2,1,,3,5.6250000000000000e-1,0.0000000000000000e0,0,42"
        );
        // Every formatted real parses back to the same bits.
        assert_eq!("5.6250000000000000e-1".parse::<f64>().unwrap(), 0.5625);
    }

    #[test]
    fn error_cells_leave_mean_and_stderr_empty() {
        let mut sweep = one_cell_sweep();
        sweep.cells[0].mean_excess = None;
        sweep.cells[0].stderr = None;
        sweep.cells[0].error = Some("all 3 replicates diverged".to_string());
        sweep.cells[0].divergences = 3;
        let text = render(Results::Sweep(&sweep), OutputFormat::Csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "twodim{lambda=1},GD,5.0000000000000000e-1,2,1,,3,,,3,42");
    }

    #[test]
    fn json_round_trips_bit_exactly() {
        let sweep = one_cell_sweep();
        let text = render(Results::Sweep(&sweep), OutputFormat::Json).unwrap();
        assert!(text.ends_with('\n'));
        let back: SweepResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back.cells, sweep.cells);
        assert_eq!(back.grid, sweep.grid);
        let again = render(Results::Sweep(&back), OutputFormat::Json).unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn json_mirrors_csv_field_names() {
        let text = render(Results::Sweep(&one_cell_sweep()), OutputFormat::Json).unwrap();
        let tree: Value = serde_json::from_str(&text).unwrap();
        let cell = &tree["cells"][0];
        for column in CSV_COLUMNS {
            assert!(cell.get(column).is_some(), "missing {column}: {cell}");
        }
    }

    #[test]
    fn csv_rejects_non_sweep_payloads() {
        let fit = RateFit {
            swept: super::super::SweptVar::T,
            slope: -1.0,
            intercept: 0.0,
            r_squared: 1.0,
            points_used: 4,
            excluded_zero_cells: 0,
            warnings: Vec::new(),
        };
        assert!(render(Results::Fit(&fit), OutputFormat::Csv).is_err());
        let text = render(Results::Fit(&fit), OutputFormat::Json).unwrap();
        assert!(text.contains("\"slope\""));
    }

    #[test]
    fn files_end_with_newline_and_write_to_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_results(Results::Sweep(&one_cell_sweep()), &path, OutputFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n'));
        let missing = dir.path().join("no/such/dir/out.json");
        assert!(write_results(Results::Sweep(&one_cell_sweep()), &missing, OutputFormat::Json)
            .is_err());
    }

    #[test]
    fn format_names_round_trip() {
        assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
        assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
        assert!("yaml".parse::<OutputFormat>().is_err());
    }
}
