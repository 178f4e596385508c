//! CSV ingestion/export with a JSON provenance sidecar.
//!
//! Header: `feature_0,...,feature_{D-1},given_label[,true_label]`. Floats are
//! written in shortest round-trip form, labels as base-10 integers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Provenance};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Serialize, Deserialize)]
struct Sidecar {
    num_classes: usize,
    #[serde(flatten)]
    provenance: Provenance,
}

/// `data.csv` -> `data.prov.json`.
pub fn provenance_path(path: &Path) -> PathBuf {
    path.with_extension("prov.json")
}

pub fn save_csv(data: &LabeledDataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.dims()).map(|j| format!("feature_{j}")).collect();
    header.push("given_label".into());
    if data.true_labels().is_some() {
        header.push("true_label".into());
    }
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.features().row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.given_labels()[i].to_string());
        if let Some(t) = data.true_labels() {
            rec.push(t[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let sidecar = Sidecar {
        num_classes: data.num_classes(),
        provenance: data.provenance().clone(),
    };
    let prov = provenance_path(path);
    let json = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&prov, json + "\n").map_err(|e| Error::io(prov, e))
}

/// Loads a dataset. The class count comes from the sidecar when present,
/// else from `num_classes`, else from the largest label seen.
pub fn load_csv(path: &Path, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };

    let prov = provenance_path(path);
    let sidecar: Option<Sidecar> = if prov.exists() {
        let text = fs::read_to_string(&prov).map_err(|e| Error::io(&prov, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };

    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let has_truth = names.last() == Some(&"true_label");
    let dims = names.len().saturating_sub(1 + has_truth as usize);
    let header_ok = dims >= 1
        && names[dims] == "given_label"
        && names[..dims]
            .iter()
            .enumerate()
            .all(|(j, n)| *n == format!("feature_{j}"));
    if !header_ok {
        return Err(parse_err(0, format!("malformed header {names:?}")));
    }

    let mut data = Vec::new();
    let mut given = Vec::new();
    let mut truth = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(parse_err(row, format!("{} cells, expected {}", rec.len(), names.len())));
        }
        for cell in rec.iter().take(dims) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(row, format!("non-numeric feature {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(row, format!("non-finite feature {cell:?}")));
            }
            data.push(v);
        }
        let label = |cell: &str| -> Result<usize> {
            cell.trim()
                .parse()
                .map_err(|_| parse_err(row, format!("non-integer label {cell:?}")))
        };
        given.push(label(&rec[dims])?);
        if has_truth {
            truth.push(label(&rec[dims + 1])?);
        }
    }

    let classes = match (&sidecar, num_classes) {
        (Some(s), _) => s.num_classes,
        (None, Some(c)) => c,
        (None, None) => given.iter().chain(&truth).max().map_or(0, |m| m + 1),
    };
    for (i, (&g, t)) in given
        .iter()
        .zip(truth.iter().map(Some).chain(std::iter::repeat(None)))
        .enumerate()
    {
        if g >= classes || t.is_some_and(|&t| t >= classes) {
            return Err(parse_err(
                i + 1,
                format!("label out of range for {classes} classes"),
            ));
        }
    }

    let features = Matrix::new(given.len(), dims, data)?;
    LabeledDataset::new(
        features,
        given,
        has_truth.then_some(truth),
        classes,
        sidecar.map(|s| s.provenance).unwrap_or_default(),
    )
}
