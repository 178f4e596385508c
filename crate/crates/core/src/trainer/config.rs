//! Training configuration: a flat JSON object with a fixed schema.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Which objective trains the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Label corrector + margin generator, meta-learned.
    Dynamic,
    /// Plain cross-entropy on given labels.
    Ce,
    /// Fixed margins `ln n_j`.
    BalancedSoftmax,
    /// Per-class GMM clean posterior mixes given labels with predictions.
    GmmRelabel,
}

impl Baseline {
    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::Dynamic => "dynamic",
            Baseline::Ce => "ce",
            Baseline::BalancedSoftmax => "balanced_softmax",
            Baseline::GmmRelabel => "gmm_relabel",
        }
    }
}

/// How the meta set is drawn each epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Hierarchical,
    Naive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub meta_lr: f64,
    pub rank_bins: usize,
    pub m0_frac: f64,
    pub m1_frac: f64,
    pub seed: u64,
    pub baseline: Baseline,
    pub sampler: SamplerKind,
    /// Width of both hidden layers of the classifier.
    pub hidden: usize,
    /// Hidden widths of the label corrector.
    pub corrector_hidden: Vec<usize>,
    /// Feed argmax one-hots instead of softmax probabilities as predictions.
    pub hard_predictions: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            warmup_epochs: 5,
            batch_size: 128,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            meta_lr: 3e-3,
            rank_bins: 100,
            m0_frac: 0.5,
            m1_frac: 0.25,
            seed: 0,
            baseline: Baseline::Dynamic,
            sampler: SamplerKind::Hierarchical,
            hidden: crate::classifier::DEFAULT_HIDDEN,
            corrector_hidden: vec![crate::dynamic::CORRECTOR_HIDDEN],
            hard_predictions: false,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "epochs",
        "warmup_epochs",
        "batch_size",
        "lr",
        "momentum",
        "weight_decay",
        "meta_lr",
        "rank_bins",
        "m0_frac",
        "m1_frac",
        "seed",
        "baseline",
        "sampler",
        "hidden",
        "corrector_hidden",
        "hard_predictions",
    ];

    /// Parses and validates a config object; every problem is reported with its key.
    pub fn from_value(value: Value) -> Result<Self> {
        let Value::Object(map) = value else {
            return Err(Error::Config("top level must be a JSON object".into()));
        };
        let mut problems = Vec::new();
        for (key, v) in &map {
            if !Self::KEYS.contains(&key.as_str()) {
                problems.push(format!("{key}: unknown key"));
                continue;
            }
            let single = Value::Object(Map::from_iter([(key.clone(), v.clone())]));
            if let Err(e) = serde_json::from_value::<TrainConfig>(single) {
                problems.push(format!("{key}: {e}"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        let config: TrainConfig = serde_json::from_value(Value::Object(map))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    /// Applies `overrides` on top of `base` (key by key) and re-validates.
    pub fn with_overrides(&self, overrides: Map<String, Value>) -> Result<Self> {
        let Value::Object(mut map) = serde_json::to_value(self)? else {
            unreachable!("config serializes to an object")
        };
        map.extend(overrides);
        Self::from_value(Value::Object(map))
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs: must be >= 1".to_string());
        }
        if self.warmup_epochs >= self.epochs {
            problems.push(format!(
                "warmup_epochs: {} must be below epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if self.batch_size < 2 {
            problems.push("batch_size: must be >= 2".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push("lr: must be positive".into());
        }
        if !(self.meta_lr >= 0.0 && self.meta_lr.is_finite()) {
            problems.push("meta_lr: must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            problems.push("momentum: must lie in [0, 1)".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            problems.push("weight_decay: must be >= 0".into());
        }
        if self.rank_bins == 0 {
            problems.push("rank_bins: must be >= 1".into());
        }
        if !(self.m1_frac > 0.0 && self.m1_frac <= self.m0_frac && self.m0_frac <= 1.0) {
            problems.push(format!(
                "m0_frac/m1_frac: need 0 < m1_frac <= m0_frac <= 1 (got {} / {})",
                self.m0_frac, self.m1_frac
            ));
        }
        if self.hidden == 0 {
            problems.push("hidden: must be >= 1".into());
        }
        if self.corrector_hidden.is_empty() || self.corrector_hidden.contains(&0) {
            problems.push("corrector_hidden: needs at least one positive width".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
