//! Summary reporting over finished run artifacts: the representation
//! comparison table and the sparsity curve data.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::HarnessError;

/// Parsed `best.csv` row of one representation's training run.
#[derive(Clone, Debug)]
pub struct BestRow {
    pub repr: String,
    pub seed: u64,
    pub att: f64,
    pub awt: f64,
    pub ad: f64,
    pub aql: f64,
    pub arrived: usize,
    pub unfinished: usize,
}

#[derive(Clone, Debug)]
pub struct ReportSummary {
    /// Representation rows in reporting order (count, wait, image).
    pub rows: Vec<BestRow>,
    /// (baseline repr, metric, fractional improvement of image over it).
    pub improvements: Vec<(String, &'static str, f64)>,
    pub sparsity_curve_found: bool,
}

const REPR_ORDER: [&str; 3] = ["count", "wait", "image"];
const METRICS: [&str; 4] = ["att", "ad", "awt", "aql"];

fn parse_best_csv(path: &Path) -> Result<BestRow, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::MissingArtifacts(format!("{} is empty", path.display())))?;
    let row = lines
        .next()
        .ok_or_else(|| HarnessError::MissingArtifacts(format!("{} has no data row", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let vals: Vec<&str> = row.split(',').collect();
    if cols.len() != vals.len() {
        return Err(HarnessError::MissingArtifacts(format!(
            "{} is malformed",
            path.display()
        )));
    }
    let get = |name: &str| -> Result<&str, HarnessError> {
        cols.iter()
            .position(|&c| c == name)
            .map(|i| vals[i])
            .ok_or_else(|| {
                HarnessError::MissingArtifacts(format!("{} lacks column {name}", path.display()))
            })
    };
    let f = |name: &str| -> Result<f64, HarnessError> {
        get(name)?
            .parse::<f64>()
            .map_err(|e| HarnessError::MissingArtifacts(format!("{}: {e}", path.display())))
    };
    Ok(BestRow {
        repr: get("repr")?.to_string(),
        seed: get("seed")?.parse().unwrap_or(0),
        att: f("att")?,
        awt: f("awt")?,
        ad: f("ad")?,
        aql: f("aql")?,
        arrived: get("arrived")?.parse().unwrap_or(0),
        unfinished: get("unfinished")?.parse().unwrap_or(0),
    })
}

/// Scan a directory of run artifacts and emit the summary tables.
///
/// Expects per-representation subdirectories (or the directory itself)
/// containing `best.csv`; picks up `prune_sweep.csv` files for the
/// sparsity curve when present. Writes `table.csv`, `improvements.csv`
/// and optionally `sparsity_curve.csv` into `out_dir`.
pub fn report(artifacts_dir: &Path, out_dir: &Path) -> Result<ReportSummary, HarnessError> {
    if !artifacts_dir.is_dir() {
        return Err(HarnessError::MissingArtifacts(format!(
            "{} is not a directory",
            artifacts_dir.display()
        )));
    }

    // Collect best.csv rows keyed by representation.
    let mut by_repr: BTreeMap<String, BestRow> = BTreeMap::new();
    let mut candidates = vec![artifacts_dir.join("best.csv")];
    let mut entries: Vec<_> = fs::read_dir(artifacts_dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in &entries {
        if entry.path().is_dir() {
            candidates.push(entry.path().join("best.csv"));
        }
    }
    for path in candidates {
        if path.is_file() {
            let row = parse_best_csv(&path)?;
            by_repr.insert(row.repr.clone(), row);
        }
    }
    if by_repr.is_empty() {
        return Err(HarnessError::MissingArtifacts(format!(
            "no best.csv found under {}",
            artifacts_dir.display()
        )));
    }

    let rows: Vec<BestRow> = REPR_ORDER
        .iter()
        .filter_map(|r| by_repr.get(*r).cloned())
        .collect();

    fs::create_dir_all(out_dir)?;
    let mut table = String::from("repr,att,ad,awt,aql,seed,arrived,unfinished\n");
    for r in &rows {
        table.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
            r.repr, r.att, r.ad, r.awt, r.aql, r.seed, r.arrived, r.unfinished
        ));
    }
    fs::write(out_dir.join("table.csv"), &table)?;

    // Fractional improvement of the image representation over each vector
    // baseline: (base - image) / base, per metric.
    let mut improvements = Vec::new();
    if let Some(image) = by_repr.get("image") {
        let image_vals = [image.att, image.ad, image.awt, image.aql];
        for base_name in ["count", "wait"] {
            if let Some(base) = by_repr.get(base_name) {
                let base_vals = [base.att, base.ad, base.awt, base.aql];
                for (mi, metric) in METRICS.iter().enumerate() {
                    if base_vals[mi] != 0.0 {
                        improvements.push((
                            base_name.to_string(),
                            *metric,
                            (base_vals[mi] - image_vals[mi]) / base_vals[mi],
                        ));
                    }
                }
            }
        }
    }
    let mut imp_csv = String::from("base_repr,metric,improvement\n");
    for (base, metric, frac) in &improvements {
        imp_csv.push_str(&format!("{base},{metric},{frac:.6}\n"));
    }
    fs::write(out_dir.join("improvements.csv"), &imp_csv)?;

    // Sparsity curve: concatenate any prune_sweep.csv found one level deep.
    let mut sparsity_rows = String::new();
    let mut sparsity_header: Option<String> = None;
    let mut sweep_files = vec![artifacts_dir.join("prune_sweep.csv")];
    for entry in &entries {
        if entry.path().is_dir() {
            sweep_files.push(entry.path().join("prune_sweep.csv"));
        }
    }
    for path in sweep_files {
        if path.is_file() {
            let text = fs::read_to_string(&path)?;
            let mut lines = text.lines();
            if let Some(h) = lines.next() {
                sparsity_header.get_or_insert_with(|| h.to_string());
                for line in lines {
                    sparsity_rows.push_str(line);
                    sparsity_rows.push('\n');
                }
            }
        }
    }
    let sparsity_curve_found = sparsity_header.is_some();
    if let Some(h) = sparsity_header {
        fs::write(out_dir.join("sparsity_curve.csv"), format!("{h}\n{sparsity_rows}"))?;
    }

    Ok(ReportSummary {
        rows,
        improvements,
        sparsity_curve_found,
    })
}
