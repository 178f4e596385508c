//! Per-class two-component 1-D Gaussian mixture over losses (clean/noisy split).

use log::warn;

const MAX_ITERS: usize = 200;
const TOLERANCE: f64 = 1e-8;

/// Fitted parameters, component 0 being the lower-mean one.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoComponentFit {
    pub means: [f64; 2],
    pub variances: [f64; 2],
    pub weights: [f64; 2],
    pub iterations: usize,
    pub log_likelihood: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean) * (x - mean) / var)
}

/// EM fit; `None` when fewer than 4 values or fewer than 2 distinct ones.
pub fn fit_two_component(values: &[f64]) -> Option<TwoComponentFit> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if n < 4 || sorted[0] == sorted[n - 1] {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let pooled = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let floor = (pooled * 1e-8).max(1e-300);

    let mut means = [percentile(&sorted, 0.1), percentile(&sorted, 0.9)];
    let mut variances = [pooled, pooled];
    let mut weights = [0.5f64, 0.5];
    let mut resp = vec![[0.0; 2]; n];
    let mut prev_ll = f64::NEG_INFINITY;
    let mut ll = prev_ll;
    let mut iterations = 0;

    for it in 1..=MAX_ITERS {
        iterations = it;
        ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(values) {
            let a = weights[0].ln() + log_normal(x, means[0], variances[0]);
            let b = weights[1].ln() + log_normal(x, means[1], variances[1]);
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            *r = [(a - lse).exp(), (b - lse).exp()];
            ll += lse;
        }
        for k in 0..2 {
            let nk: f64 = resp.iter().map(|r| r[k]).sum();
            if nk <= 0.0 {
                continue;
            }
            weights[k] = nk / n as f64;
            means[k] = resp.iter().zip(values).map(|(r, &x)| r[k] * x).sum::<f64>() / nk;
            variances[k] = (resp
                .iter()
                .zip(values)
                .map(|(r, &x)| r[k] * (x - means[k]) * (x - means[k]))
                .sum::<f64>()
                / nk)
                .max(floor);
        }
        if (ll - prev_ll).abs() < TOLERANCE {
            break;
        }
        prev_ll = ll;
    }

    if means[0] > means[1] {
        means.swap(0, 1);
        variances.swap(0, 1);
        weights.swap(0, 1);
    }
    Some(TwoComponentFit {
        means,
        variances,
        weights,
        iterations,
        log_likelihood: ll,
    })
}

/// Posterior of the lower-mean component for each value.
///
/// Degenerate inputs (too few or all-equal values) get posterior 1.0.
pub fn gmm_clean_posterior(values: &[f64]) -> Vec<f64> {
    let Some(fit) = fit_two_component(values) else {
        if !values.is_empty() {
            warn!("degenerate loss group of {} values; treating all as clean", values.len());
        }
        return vec![1.0; values.len()];
    };
    values
        .iter()
        .map(|&x| {
            let a = fit.weights[0].ln() + log_normal(x, fit.means[0], fit.variances[0]);
            let b = fit.weights[1].ln() + log_normal(x, fit.means[1], fit.variances[1]);
            1.0 / (1.0 + (b - a).exp())
        })
        .collect()
}

/// Fits one mixture per class (by `labels`) and returns per-sample clean posteriors.
pub fn gmm_split(losses: &[f64], labels: &[usize], num_classes: usize) -> Vec<f64> {
    let mut groups = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        groups[y].push(i);
    }
    let mut out = vec![1.0; losses.len()];
    for members in groups {
        let values: Vec<f64> = members.iter().map(|&i| losses[i]).collect();
        for (&i, p) in members.iter().zip(gmm_clean_posterior(&values)) {
            out[i] = p;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_cluster() {
        assert_eq!(gmm_clean_posterior(&[0.3; 8]), vec![1.0; 8]);
        assert_eq!(gmm_clean_posterior(&[0.1, 0.2, 0.3]), vec![1.0; 3]);
        assert!(fit_two_component(&[1.0; 5]).is_none());
    }

    #[test]
    fn lower_component_first() {
        let values = [0.0, 0.1, 0.05, 3.0, 3.1, 2.9, 0.02, 3.05];
        let fit = fit_two_component(&values).unwrap();
        assert!(fit.means[0] < 0.2 && fit.means[1] > 2.8);
        assert!(fit.iterations <= MAX_ITERS);
    }
}
