use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample loss-rank bin within its class, and the losses it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankAssignment {
    pub bins: Vec<usize>,
    pub losses: Vec<f64>,
    pub num_bins: usize,
}

/// Sorts each class group by ascending loss (ties by sample index) and assigns
/// `bin = floor(rank · R / group_size)`.
pub fn compute_rank_bins(
    losses: &[f64],
    labels: &[usize],
    num_classes: usize,
    num_bins: usize,
) -> Result<RankAssignment> {
    if num_bins == 0 {
        return Err(Error::InvalidArgument("rank bin count must be >= 1".into()));
    }
    if losses.len() != labels.len() {
        return Err(Error::shape(
            "compute_rank_bins",
            format!("{} losses for {} labels", losses.len(), labels.len()),
        ));
    }
    if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("loss of sample {i} is not finite")));
    }
    let mut groups = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::InvalidArgument(format!("label {y} out of range")));
        }
        groups[y].push(i);
    }
    let mut bins = vec![0; losses.len()];
    for (class, mut members) in groups.into_iter().enumerate() {
        if members.is_empty() {
            warn!("class {class} has no samples; skipped in rank binning");
            continue;
        }
        members.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
        let size = members.len();
        for (rank, &i) in members.iter().enumerate() {
            bins[i] = rank * num_bins / size;
        }
    }
    Ok(RankAssignment {
        bins,
        losses: losses.to_vec(),
        num_bins,
    })
}
