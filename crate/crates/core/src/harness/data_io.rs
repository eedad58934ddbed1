//! On-disk formats: dataset CSV (`x_0..x_{d-1},a,y,y_true,split`), the
//! generator manifest, and calibration-score CSV. All floats are written
//! in shortest round-trip decimal form, so identical values reproduce
//! identical bytes.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::synthdata::GeneratorSpec;
use crate::types::{CalibratedScores, Dataset, LabeledSample, Sample, Split};

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let d = dataset.dim();
    let mut out = String::new();
    for i in 0..d {
        out.push_str(&format!("x_{i},"));
    }
    out.push_str("a,y,y_true,split\n");
    for row in dataset.rows() {
        for v in &row.sample.x {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{},{},", row.sample.a, row.sample.y));
        if let Some(yt) = row.y_true {
            out.push_str(&format!("{yt}"));
        }
        out.push_str(&format!(",{}\n", row.split.as_str()));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_field(field: &str, line: usize, name: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("line {line}: bad {name} value {field:?}")))
}

/// Reads a dataset CSV. Requires `x_*`, `a`, `y`; `y_true` and `split` are
/// optional. Rows without split labels are assigned by shuffling with the
/// given seed and cutting at the train/validation/calibration/test
/// fractions (default 60/10/20/10).
pub fn read_dataset(
    path: &Path,
    split_fractions: Option<[f64; 4]>,
    split_seed: u64,
) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let x_cols: Vec<usize> = columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with("x_"))
        .map(|(i, _)| i)
        .collect();
    let find = |name: &str| columns.iter().position(|c| *c == name);
    let a_col = find("a").ok_or_else(|| Error::InvalidInput("missing column 'a'".into()))?;
    let y_col = find("y").ok_or_else(|| Error::InvalidInput("missing column 'y'".into()))?;
    let y_true_col = find("y_true");
    let split_col = find("split");
    if x_cols.is_empty() {
        return Err(Error::InvalidInput("need at least one x_* column".into()));
    }

    let mut rows = Vec::new();
    let mut unlabeled = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::InvalidInput(format!(
                "line {lineno}: expected {} fields, found {}",
                columns.len(),
                fields.len()
            )));
        }
        let x: Vec<f64> = x_cols
            .iter()
            .map(|&i| parse_field(fields[i], lineno, "covariate"))
            .collect::<Result<_>>()?;
        let a = parse_field(fields[a_col], lineno, "treatment")?;
        let y = parse_field(fields[y_col], lineno, "outcome")?;
        let y_true = match y_true_col {
            Some(i) if !fields[i].trim().is_empty() => {
                Some(parse_field(fields[i], lineno, "y_true")?)
            }
            _ => None,
        };
        let split = match split_col {
            Some(i) if !fields[i].trim().is_empty() => Some(Split::parse(fields[i].trim())?),
            _ => None,
        };
        let idx = rows.len();
        rows.push(LabeledSample {
            sample: Sample::new(x, a, y),
            split: split.unwrap_or(Split::Train),
            y_true,
        });
        if split.is_none() {
            unlabeled.push(idx);
        }
    }

    if !unlabeled.is_empty() {
        let fractions = split_fractions.unwrap_or([0.6, 0.1, 0.2, 0.1]);
        let total: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| *f < 0.0) || total <= 0.0 {
            return Err(Error::InvalidInput(format!("bad split fractions {fractions:?}")));
        }
        let mut order = unlabeled.clone();
        order.shuffle(&mut ChaCha12Rng::seed_from_u64(split_seed));
        let n = order.len() as f64;
        let cut1 = (n * fractions[0] / total).round() as usize;
        let cut2 = cut1 + (n * fractions[1] / total).round() as usize;
        let cut3 = cut2 + (n * fractions[2] / total).round() as usize;
        for (rank, &idx) in order.iter().enumerate() {
            rows[idx].split = if rank < cut1 {
                Split::Train
            } else if rank < cut2 {
                Split::Validation
            } else if rank < cut3 {
                Split::Calibration
            } else {
                Split::Test
            };
        }
    }
    Dataset::new(rows)
}

pub fn write_manifest(path: &Path, spec: &GeneratorSpec) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(spec)? + "\n")?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<GeneratorSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes calibration scores with their contexts (`x_*`, `a`, `score`).
pub fn write_scores(path: &Path, calib: &CalibratedScores) -> Result<()> {
    if calib.is_empty() {
        return Err(Error::InvalidInput("refusing to write an empty calibration set".into()));
    }
    let d = calib.x[0].len();
    let mut out = String::new();
    for i in 0..d {
        out.push_str(&format!("x_{i},"));
    }
    out.push_str("a,score\n");
    for ((x, a), s) in calib.x.iter().zip(&calib.a).zip(&calib.scores) {
        for v in x {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{a},{s}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<CalibratedScores> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = columns.iter().filter(|c| c.starts_with("x_")).count();
    if d == 0 || columns.last() != Some(&"score") {
        return Err(Error::InvalidInput("scores file needs x_*, a, score columns".into()));
    }
    let mut calib = CalibratedScores { x: Vec::new(), a: Vec::new(), scores: Vec::new() };
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(Error::InvalidInput(format!(
                "line {lineno}: expected {} fields, found {}",
                d + 2,
                fields.len()
            )));
        }
        let x: Vec<f64> = fields[..d]
            .iter()
            .map(|f| parse_field(f, lineno, "covariate"))
            .collect::<Result<_>>()?;
        calib.x.push(x);
        calib.a.push(parse_field(fields[d], lineno, "treatment")?);
        calib.scores.push(parse_field(fields[d + 1], lineno, "score")?);
    }
    if calib.is_empty() {
        return Err(Error::InvalidInput("scores file has no rows".into()));
    }
    Ok(calib)
}
