//! Machine-readable analysis tables: corrector weight curves, margins against
//! class counts, corrected-label accuracy, clean-fraction estimates and
//! sampling dispersion.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::dynamic::{compute_rank_bins, LabelCorrector, MarginGenerator};
use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::Classifier;

/// Header plus string cells; every numeric cell uses shortest round-trip form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::shape(
                "Table::push",
                format!("{} cells for {} columns", row.len(), self.header.len()),
            ));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j].as_str()).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
            .collect::<Result<_>>()?;
        Ok(Self { header, rows })
    }
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant or the inputs have fewer than two entries.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// `bin, class_0, ..., class_{C-1}` rows of `g(r | y)`.
pub fn g_table(corrector: &LabelCorrector) -> Result<Table> {
    let m = corrector.table()?;
    let mut t = Table::new(std::iter::once("bin".to_string()).chain((0..m.cols()).map(|c| format!("class_{c}"))));
    for r in 0..m.rows() {
        let mut row = vec![r.to_string()];
        row.extend(m.row(r).iter().map(f64::to_string));
        t.push(row)?;
    }
    Ok(t)
}

/// Margin vector next to class counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub margins: Vec<f64>,
    pub counts: Vec<usize>,
    pub spearman: Option<f64>,
}

impl MarginReport {
    pub fn new(margins: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if margins.len() != counts.len() {
            return Err(Error::shape(
                "MarginReport",
                format!("{} margins for {} classes", margins.len(), counts.len()),
            ));
        }
        let n: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        Ok(Self {
            spearman: spearman(&margins, &n),
            margins,
            counts,
        })
    }

    pub fn table(&self) -> Result<Table> {
        let mut t = Table::new(["class", "count", "margin"]);
        for (j, (q, n)) in self.margins.iter().zip(&self.counts).enumerate() {
            t.push(vec![j.to_string(), n.to_string(), q.to_string()])?;
        }
        Ok(t)
    }
}

/// Per-class clean fraction estimated as `crossing_bin / R`; `None` when `g`
/// never drops below 0.5.
pub fn clean_fractions(corrector: &LabelCorrector) -> Result<Vec<Option<f64>>> {
    let r = corrector.num_bins() as f64;
    Ok(corrector
        .crossings()?
        .into_iter()
        .map(|c| c.map(|b| b as f64 / r))
        .collect())
}

pub fn clean_fraction_table(corrector: &LabelCorrector) -> Result<Table> {
    let mut t = Table::new(["class", "crossing_bin", "clean_fraction"]);
    for (j, (bin, frac)) in corrector
        .crossings()?
        .into_iter()
        .zip(clean_fractions(corrector)?)
        .enumerate()
    {
        let show = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        t.push(vec![
            j.to_string(),
            show(bin.map(|b| b.to_string())),
            show(frac.map(|f| f.to_string())),
        ])?;
    }
    Ok(t)
}

/// `y*` for every sample under the current classifier, with rank bins from
/// fresh per-sample losses.
pub fn corrected_labels(
    classifier: &Classifier,
    corrector: &LabelCorrector,
    data: &LabeledDataset,
    hard_predictions: bool,
) -> Result<Matrix> {
    let logits = classifier.logits(data.features())?;
    let losses = crate::classifier::cross_entropy_per_sample(&logits, data.given_labels())?;
    let ranks = compute_rank_bins(
        &losses,
        data.given_labels(),
        data.num_classes(),
        corrector.num_bins(),
    )?;
    let predicted = if hard_predictions {
        Matrix::one_hot(&logits.argmax_rows(), logits.cols())?
    } else {
        logits.softmax_rows()
    };
    let given = Matrix::one_hot(data.given_labels(), data.num_classes())?;
    corrector.correct(&given, &predicted, &ranks.bins)
}

/// Fraction of samples whose corrected label's argmax equals the true label.
pub fn corrected_label_accuracy(corrected: &Matrix, true_labels: &[usize]) -> f64 {
    crate::trainer::label_accuracy(corrected, true_labels)
}

/// Everything `inspect` emits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inspection {
    pub g_table: Matrix,
    pub margins: MarginReport,
    pub crossings: Vec<Option<usize>>,
    pub clean_fractions: Vec<Option<f64>>,
    pub corrected_label_acc: Option<f64>,
}

pub fn inspect(
    classifier: &Classifier,
    corrector: &LabelCorrector,
    margins: &MarginGenerator,
    data: &LabeledDataset,
) -> Result<Inspection> {
    if classifier.dims() != data.dims()
        || classifier.num_classes() != data.num_classes()
        || corrector.num_classes() != data.num_classes()
        || margins.num_classes() != data.num_classes()
    {
        return Err(Error::shape(
            "inspect",
            format!(
                "checkpoint expects {} dims / {} classes, dataset has {} / {}",
                classifier.dims(),
                classifier.num_classes(),
                data.dims(),
                data.num_classes()
            ),
        ));
    }
    let corrected_label_acc = match data.true_labels() {
        Some(truth) => Some(corrected_label_accuracy(
            &corrected_labels(classifier, corrector, data, false)?,
            truth,
        )),
        None => None,
    };
    Ok(Inspection {
        g_table: corrector.table()?,
        margins: MarginReport::new(margins.margins()?, data.class_counts())?,
        crossings: corrector.crossings()?,
        clean_fractions: clean_fractions(corrector)?,
        corrected_label_acc,
    })
}

/// Per-seed dispersion of the meta sets drawn by each sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub sampler: String,
    pub seed: u64,
    pub meta_size: usize,
    pub dispersion: f64,
}

pub fn dispersion_table(rows: &[DispersionRow]) -> Result<Table> {
    let mut t = Table::new(["sampler", "seed", "meta_size", "dispersion"]);
    for r in rows {
        t.push(vec![
            r.sampler.clone(),
            r.seed.to_string(),
            r.meta_size.to_string(),
            r.dispersion.to_string(),
        ])?;
    }
    Ok(t)
}

/// Mean dispersion per sampler name, in first-seen order.
pub fn mean_dispersion(rows: &[DispersionRow]) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(s, _, _)| *s == r.sampler) {
            Some(e) => {
                e.1 += r.dispersion;
                e.2 += 1;
            }
            None => out.push((r.sampler.clone(), r.dispersion, 1)),
        }
    }
    out.into_iter().map(|(s, t, n)| (s, t / n as f64)).collect()
}

/// A dataset file as referenced by a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataRef {
    pub path: std::path::PathBuf,
    /// SHA-256 of the CSV bytes.
    pub sha256: String,
    pub provenance: crate::data::Provenance,
}

impl DataRef {
    pub fn of(path: &Path, data: &LabeledDataset) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            sha256: file_sha256(path)?,
            provenance: data.provenance().clone(),
        })
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Everything needed to rerun a training command on the same build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config: crate::trainer::TrainConfig,
    pub seed: u64,
    pub data: DataRef,
    pub holdout: Option<DataRef>,
    /// Output file name -> path.
    pub outputs: std::collections::BTreeMap<String, std::path::PathBuf>,
    /// Seconds since the Unix epoch at start.
    pub started_at: u64,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
