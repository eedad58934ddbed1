//! Plot-data export: `coverage.csv`, `intervals.csv`, and `summary.json`.
//!
//! Everything except the wall-clock runtime column is a deterministic
//! function of (config, seeds), so reruns are byte-identical. Covariate
//! vectors are written as a single semicolon-joined column and floats in
//! shortest round-trip decimal form.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::report::{CoverageReport, IntervalRecord};

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the three plot-data files into `out_dir`.
pub fn export_plot_data(
    report: &CoverageReport,
    intervals: &[IntervalRecord],
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;

    let mut coverage = String::from("scenario,intervention,alpha,seed,coverage,width,runtime_s\n");
    for c in &report.cells {
        coverage.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.scenario,
            c.intervention,
            c.alpha,
            c.seed,
            opt(c.coverage),
            opt(c.mean_width),
            opt(c.runtime_s),
        ));
    }
    std::fs::write(out_dir.join("coverage.csv"), coverage)?;

    let mut iv = String::from("x,a,center,lower,upper,y_true,alpha,method\n");
    for r in intervals {
        let x = r.x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
        iv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            x,
            r.a,
            r.center,
            r.lower,
            r.upper,
            opt(r.y_true),
            r.alpha,
            r.method,
        ));
    }
    std::fs::write(out_dir.join("intervals.csv"), iv)?;

    let summary = serde_json::to_string_pretty(&report.aggregates)?;
    std::fs::write(out_dir.join("summary.json"), summary + "\n")?;
    Ok(())
}

/// Parses `intervals.csv` back into records; exact for values produced by
/// [`export_plot_data`].
pub fn parse_intervals_csv(path: &Path) -> Result<Vec<IntervalRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{}: empty file", path.display())))?;
    if header != "x,a,center,lower,upper,y_true,alpha,method" {
        return Err(Error::InvalidInput(format!("unexpected intervals header {header:?}")));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::InvalidInput(format!(
                "line {}: expected 8 fields, found {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse = |f: &str, name: &str| -> Result<f64> {
            f.parse()
                .map_err(|_| Error::InvalidInput(format!("line {}: bad {name} {f:?}", lineno + 2)))
        };
        let x: Vec<f64> = fields[0]
            .split(';')
            .map(|f| parse(f, "covariate"))
            .collect::<Result<_>>()?;
        records.push(IntervalRecord {
            x,
            a: parse(fields[1], "a")?,
            center: parse(fields[2], "center")?,
            lower: parse(fields[3], "lower")?,
            upper: parse(fields[4], "upper")?,
            y_true: if fields[5].is_empty() {
                None
            } else {
                Some(parse(fields[5], "y_true")?)
            },
            alpha: parse(fields[6], "alpha")?,
            method: fields[7].to_string(),
        });
    }
    Ok(records)
}
