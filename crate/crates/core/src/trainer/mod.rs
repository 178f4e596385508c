//! Warmup, per-epoch refresh and the per-iteration meta/classifier updates.

mod checkpoint;
mod config;
mod metrics;
mod optim;

pub use checkpoint::Checkpoint;
pub use config::{Baseline, SamplerKind, TrainConfig};
pub use metrics::{
    accuracy_report, evaluate, label_accuracy, EpochMetrics, Evaluation, GDigest, InspectionRecord,
};
pub use optim::{cosine_lr, Adam, SgdMomentum};

use log::{debug, error, info};
use rand::seq::SliceRandom;

use crate::classifier::{cross_entropy_per_sample, soft_cross_entropy_graph, Classifier, Standardizer};
use crate::data::LabeledDataset;
use crate::dynamic::{
    balanced_margins, compute_rank_bins, gmm_split, margin_softmax_loss_graph, mix_labels,
    LabelCorrector, MarginGenerator, RankAssignment,
};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::numeric::{meta_gradient, Graph, Matrix, MetaGradient, Var};
use crate::rng::{derive_seed, seeded, Rng};
use crate::sampling::{hierarchical_sample, naive_sample, EpochSplit};

const STREAM_CLASSIFIER: u64 = 1;
const STREAM_CORRECTOR: u64 = 2;
const STREAM_MARGINS: u64 = 3;
const STREAM_SHUFFLE: u64 = 4;
const STREAM_SPLIT: u64 = 5;
const STREAM_META_BATCH: u64 = 6;

/// Learnable parts of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSnapshot {
    pub classifier: Classifier,
    pub corrector: LabelCorrector,
    pub margins: MarginGenerator,
}

impl ModelSnapshot {
    /// Corrector parameters followed by margin-generator parameters.
    pub fn theta(&self) -> Vec<Matrix> {
        let mut t = self.corrector.net().params().to_vec();
        t.extend_from_slice(self.margins.net().params());
        t
    }

    pub fn set_theta(&mut self, mut theta: Vec<Matrix>) -> Result<()> {
        let split = self.corrector.net().params().len();
        let margin = theta.split_off(split);
        self.corrector.net_mut().set_params(theta)?;
        self.margins.net_mut().set_params(margin)
    }
}

/// Inputs of the dynamic loss that do not depend on any parameter.
struct DynamicBatch {
    x: Matrix,
    /// `y'` (detached predictions).
    predicted: Matrix,
    /// `y - y'`, so that `y* = y' + (y - y') ⊙ g`.
    gap: Matrix,
    encoded: Matrix,
}

impl DynamicBatch {
    /// `L(ω, θ)`; `corrector` and `margins` may be inputs or constants.
    fn record(
        &self,
        g: &mut Graph,
        omega: &[Var],
        corrector: &[Var],
        margins: &[Var],
    ) -> Result<Var> {
        let classes = self.gap.cols();
        let x = g.constant(self.x.clone());
        let logits = Mlp::forward_graph(g, omega, x)?;
        let enc = g.constant(self.encoded.clone());
        let w = LabelCorrector::weights_graph(g, corrector, enc)?;
        let w = g.broadcast_cols(w, classes)?;
        let gap = g.constant(self.gap.clone());
        let shift = g.mul(gap, w)?;
        let predicted = g.constant(self.predicted.clone());
        let targets = g.add(predicted, shift)?;
        let q = MarginGenerator::margins_graph(g, margins, classes)?;
        margin_softmax_loss_graph(g, logits, q, targets)
    }
}

/// Endless reshuffling iterator over the meta set.
struct MetaCycler {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl MetaCycler {
    fn new(indices: &[usize], seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut order = indices.to_vec();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        if self.pos + size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let batch = self.order[self.pos..self.pos + size].to_vec();
        self.pos += size;
        batch
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: ModelSnapshot,
    pub sgd: SgdMomentum,
    /// Adam over [`ModelSnapshot::theta`].
    pub adam: Adam,
    pub loss_cache: Vec<f64>,
    pub ranks: Option<RankAssignment>,
    pub split: Option<EpochSplit>,
    /// Per-sample GMM clean posteriors (`gmm_relabel` only).
    pub clean_posterior: Option<Vec<f64>>,
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
}

fn one_hot(data: &LabeledDataset, indices: &[usize]) -> Result<Matrix> {
    let labels: Vec<usize> = indices.iter().map(|&i| data.given_labels()[i]).collect();
    Matrix::one_hot(&labels, data.num_classes())
}

impl TrainState {
    /// Fresh networks for `data`; the classifier's input standardization is fitted on its features.
    pub fn new(data: &LabeledDataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let num_classes = data.num_classes();
        let classifier = Classifier::new(
            data.dims(),
            config.hidden,
            num_classes,
            derive_seed(config.seed, STREAM_CLASSIFIER, 0),
        )?
        .with_standardizer(Standardizer::fit(data.features()))?;
        let corrector = LabelCorrector::new(
            num_classes,
            config.rank_bins,
            &config.corrector_hidden,
            derive_seed(config.seed, STREAM_CORRECTOR, 0),
        )?;
        let margins = MarginGenerator::new(num_classes, derive_seed(config.seed, STREAM_MARGINS, 0))?;
        Ok(Self::from_model(
            ModelSnapshot {
                classifier,
                corrector,
                margins,
            },
            config,
        ))
    }

    /// Fresh optimizer state around existing networks.
    pub fn from_model(model: ModelSnapshot, config: &TrainConfig) -> Self {
        let sgd = SgdMomentum::new(
            model.classifier.params(),
            config.momentum,
            config.weight_decay,
        );
        let adam = Adam::new(&model.theta(), config.meta_lr);
        Self {
            model,
            sgd,
            adam,
            loss_cache: Vec::new(),
            ranks: None,
            split: None,
            clean_posterior: None,
            epoch: 0,
            history: Vec::new(),
        }
    }

    pub fn lr(&self, config: &TrainConfig) -> f64 {
        cosine_lr(config.lr, self.epoch, config.epochs)
    }

    fn shuffled_batches(&self, indices: &[usize], config: &TrainConfig) -> Vec<Vec<usize>> {
        let mut order = indices.to_vec();
        order.shuffle(&mut seeded(derive_seed(
            config.seed,
            STREAM_SHUFFLE,
            self.epoch as u64,
        )));
        order.chunks(config.batch_size).map(<[usize]>::to_vec).collect()
    }

    fn diverged(&self, iteration: usize, batch: &[usize], err: Error) -> Error {
        match err {
            Error::NonFinite { .. } => {
                error!(
                    "non-finite loss at epoch {} iteration {iteration} ({err}); batch {batch:?}",
                    self.epoch
                );
                Error::Diverged {
                    epoch: self.epoch,
                    iteration,
                    batch: batch.to_vec(),
                }
            }
            other => other,
        }
    }

    /// One SGD step on `soft_ce(f(x) + q, targets)` with constant targets and margins.
    fn fixed_target_step(
        &mut self,
        x: Matrix,
        targets: Matrix,
        margins: Option<&[f64]>,
        lr: f64,
    ) -> Result<f64> {
        let mut g = Graph::new();
        let omega = self.model.classifier.net().inputs(&mut g);
        let xv = g.constant(self.model.classifier.prepare(&x)?);
        let mut logits = Mlp::forward_graph(&mut g, &omega, xv)?;
        if let Some(q) = margins {
            let q = g.constant(Matrix::row_vector(q)?);
            logits = g.add_row(logits, q)?;
        }
        let t = g.constant(targets);
        let loss = soft_cross_entropy_graph(&mut g, logits, t)?;
        self.apply_classifier_gradient(&mut g, loss, &omega, lr)
    }

    fn apply_classifier_gradient(
        &mut self,
        g: &mut Graph,
        loss: Var,
        omega: &[Var],
        lr: f64,
    ) -> Result<f64> {
        let value = g.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "training loss" });
        }
        let grads: Vec<Matrix> = g
            .gradient(loss, omega)?
            .into_iter()
            .map(|v| g.value(v).clone())
            .collect();
        self.sgd
            .step(self.model.classifier.net_mut().params_mut(), &grads, lr)?;
        Ok(value)
    }

    /// One pass of plain cross-entropy on given labels; meta networks untouched.
    pub fn warmup_epoch(&mut self, data: &LabeledDataset, config: &TrainConfig) -> Result<f64> {
        let all: Vec<usize> = (0..data.len()).collect();
        self.fixed_target_epoch(data, config, &all, |_, _, batch| one_hot(data, batch), None)
    }

    fn fixed_target_epoch<F>(
        &mut self,
        data: &LabeledDataset,
        config: &TrainConfig,
        indices: &[usize],
        mut targets: F,
        margins: Option<&[f64]>,
    ) -> Result<f64>
    where
        F: FnMut(&Self, &Matrix, &[usize]) -> Result<Matrix>,
    {
        let lr = self.lr(config);
        let mut total = 0.0;
        let batches = self.shuffled_batches(indices, config);
        for (it, batch) in batches.iter().enumerate() {
            let result = (|| {
                let x = data.features().select_rows(batch)?;
                let t = targets(self, &x, batch)?;
                self.fixed_target_step(x, t, margins, lr)
            })();
            total += result.map_err(|e| self.diverged(it, batch, e))? * batch.len() as f64;
        }
        Ok(total / indices.len().max(1) as f64)
    }

    /// Per-sample CE of the current classifier on given labels, no margins.
    pub fn refresh_loss_cache(&mut self, data: &LabeledDataset) -> Result<()> {
        let logits = self.model.classifier.logits(data.features())?;
        self.loss_cache = cross_entropy_per_sample(&logits, data.given_labels())?;
        Ok(())
    }

    /// Loss cache, rank bins and a new meta/train split.
    pub fn refresh_epoch(&mut self, data: &LabeledDataset, config: &TrainConfig) -> Result<()> {
        self.refresh_loss_cache(data)?;
        self.ranks = Some(compute_rank_bins(
            &self.loss_cache,
            data.given_labels(),
            data.num_classes(),
            config.rank_bins,
        )?);
        let mut split = match config.sampler {
            SamplerKind::Hierarchical => hierarchical_sample(
                data,
                &self.loss_cache,
                config.m0_frac,
                config.m1_frac,
                derive_seed(config.seed, STREAM_SPLIT, self.epoch as u64),
            )?,
            SamplerKind::Naive => naive_sample(data, &self.loss_cache, config.m1_frac)?,
        };
        split.epoch = self.epoch;
        debug!(
            "epoch {}: meta set {} ({} per class), train set {}",
            self.epoch,
            split.meta_indices.len(),
            split.per_class,
            split.train_indices.len()
        );
        self.split = Some(split);
        Ok(())
    }

    fn predictions(&self, logits: &Matrix, config: &TrainConfig) -> Result<Matrix> {
        if config.hard_predictions {
            Matrix::one_hot(&logits.argmax_rows(), logits.cols())
        } else {
            Ok(logits.softmax_rows())
        }
    }

    fn dynamic_batch(
        &self,
        data: &LabeledDataset,
        batch: &[usize],
        config: &TrainConfig,
    ) -> Result<DynamicBatch> {
        let ranks = self
            .ranks
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("rank bins not computed; call refresh_epoch".into()))?;
        let x = data.features().select_rows(batch)?;
        let predicted = self.predictions(&self.model.classifier.logits(&x)?, config)?;
        let given = one_hot(data, batch)?;
        let labels: Vec<usize> = batch.iter().map(|&i| data.given_labels()[i]).collect();
        let bins: Vec<usize> = batch.iter().map(|&i| ranks.bins[i]).collect();
        Ok(DynamicBatch {
            gap: given.sub(&predicted)?,
            encoded: self.model.corrector.encode(&labels, &bins)?,
            predicted,
            x: self.model.classifier.prepare(&x)?,
        })
    }

    /// Gradient of the meta loss with respect to [`ModelSnapshot::theta`] after
    /// a virtual plain gradient step of size `alpha` on the dynamic loss.
    pub fn meta_gradient(
        &self,
        data: &LabeledDataset,
        train_batch: &[usize],
        meta_batch: &[usize],
        config: &TrainConfig,
        alpha: f64,
    ) -> Result<MetaGradient> {
        let batch = self.dynamic_batch(data, train_batch, config)?;
        self.meta_gradient_of(&batch, data, meta_batch, alpha)
    }

    fn meta_gradient_of(
        &self,
        batch: &DynamicBatch,
        data: &LabeledDataset,
        meta_batch: &[usize],
        alpha: f64,
    ) -> Result<MetaGradient> {
        let split_at = self.model.corrector.net().params().len();
        let xm = self
            .model
            .classifier
            .prepare(&data.features().select_rows(meta_batch)?)?;
        let ym = one_hot(data, meta_batch)?;
        meta_gradient(
            self.model.classifier.params(),
            &self.model.theta(),
            alpha,
            |g, omega, theta| batch.record(g, omega, &theta[..split_at], &theta[split_at..]),
            |g, omega| {
                let x = g.constant(xm);
                let logits = Mlp::forward_graph(g, omega, x)?;
                let t = g.constant(ym);
                soft_cross_entropy_graph(g, logits, t)
            },
        )
    }

    /// Meta update of the corrector and margin generator through a virtual
    /// classifier step, then the actual classifier step on the dynamic loss.
    /// Returns the dynamic loss of the actual step.
    pub fn meta_step(
        &mut self,
        data: &LabeledDataset,
        train_batch: &[usize],
        meta_batch: &[usize],
        config: &TrainConfig,
    ) -> Result<f64> {
        if train_batch.is_empty() || meta_batch.is_empty() {
            return Err(Error::InvalidArgument("meta_step needs non-empty batches".into()));
        }
        let lr = self.lr(config);
        let batch = self.dynamic_batch(data, train_batch, config)?;

        if config.meta_lr > 0.0 && lr > 0.0 {
            let mg = self.meta_gradient_of(&batch, data, meta_batch, lr)?;
            if !mg.meta_loss.is_finite() {
                return Err(Error::NonFinite { op: "meta loss" });
            }
            let mut theta = self.model.theta();
            self.adam.step(&mut theta, &mg.theta_grads)?;
            self.model.set_theta(theta)?;
        }

        let mut g = Graph::new();
        let omega = self.model.classifier.net().inputs(&mut g);
        let corrector: Vec<Var> = self
            .model
            .corrector
            .net()
            .params()
            .iter()
            .map(|p| g.constant(p.clone()))
            .collect();
        let margins: Vec<Var> = self
            .model
            .margins
            .net()
            .params()
            .iter()
            .map(|p| g.constant(p.clone()))
            .collect();
        let loss = batch.record(&mut g, &omega, &corrector, &margins)?;
        self.apply_classifier_gradient(&mut g, loss, &omega, lr)
    }

    fn dynamic_epoch(&mut self, data: &LabeledDataset, config: &TrainConfig) -> Result<f64> {
        self.refresh_epoch(data, config)?;
        let split = self.split.clone().expect("refresh_epoch sets the split");
        let batches = self.shuffled_batches(&split.train_indices, config);
        let mut meta = MetaCycler::new(
            &split.meta_indices,
            derive_seed(config.seed, STREAM_META_BATCH, self.epoch as u64),
        );
        let mut total = 0.0;
        for (it, batch) in batches.iter().enumerate() {
            let meta_batch = meta.next_batch(config.batch_size);
            let loss = self
                .meta_step(data, batch, &meta_batch, config)
                .map_err(|e| self.diverged(it, batch, e))?;
            total += loss * batch.len() as f64;
        }
        Ok(total / split.train_indices.len().max(1) as f64)
    }

    fn gmm_epoch(&mut self, data: &LabeledDataset, config: &TrainConfig) -> Result<f64> {
        self.refresh_loss_cache(data)?;
        let posterior = gmm_split(&self.loss_cache, data.given_labels(), data.num_classes());
        let all: Vec<usize> = (0..data.len()).collect();
        let loss = self.fixed_target_epoch(
            data,
            config,
            &all,
            |state, x, batch| {
                let predicted = state.predictions(&state.model.classifier.logits(x)?, config)?;
                let w: Vec<f64> = batch.iter().map(|&i| posterior[i]).collect();
                mix_labels(&one_hot(data, batch)?, &predicted, &w)
            },
            None,
        )?;
        self.clean_posterior = Some(posterior);
        Ok(loss)
    }

    /// Runs epoch `self.epoch` and advances the counter. Returns the phase name
    /// and the mean training loss.
    pub fn run_epoch(
        &mut self,
        data: &LabeledDataset,
        config: &TrainConfig,
    ) -> Result<(&'static str, f64)> {
        let all: Vec<usize> = (0..data.len()).collect();
        let out = if self.epoch < config.warmup_epochs {
            ("warmup", self.warmup_epoch(data, config)?)
        } else {
            let loss = match config.baseline {
                Baseline::Dynamic => self.dynamic_epoch(data, config)?,
                Baseline::Ce => self.warmup_epoch(data, config)?,
                Baseline::BalancedSoftmax => {
                    let q = balanced_margins(&data.class_counts())?;
                    self.fixed_target_epoch(
                        data,
                        config,
                        &all,
                        |_, _, batch| one_hot(data, batch),
                        Some(&q),
                    )?
                }
                Baseline::GmmRelabel => self.gmm_epoch(data, config)?,
            };
            ("main", loss)
        };
        self.epoch += 1;
        Ok(out)
    }

    /// Training targets each sample would receive now: `y*` for the dynamic
    /// loss, the GMM mixture for `gmm_relabel`, given labels otherwise.
    pub fn corrected_targets(&self, data: &LabeledDataset, config: &TrainConfig) -> Result<Matrix> {
        let logits = self.model.classifier.logits(data.features())?;
        let given = Matrix::one_hot(data.given_labels(), data.num_classes())?;
        match config.baseline {
            Baseline::Dynamic => {
                let losses = cross_entropy_per_sample(&logits, data.given_labels())?;
                let ranks = compute_rank_bins(
                    &losses,
                    data.given_labels(),
                    data.num_classes(),
                    self.model.corrector.num_bins(),
                )?;
                let predicted = self.predictions(&logits, config)?;
                self.model.corrector.correct(&given, &predicted, &ranks.bins)
            }
            Baseline::GmmRelabel => {
                let losses = cross_entropy_per_sample(&logits, data.given_labels())?;
                let w = gmm_split(&losses, data.given_labels(), data.num_classes());
                mix_labels(&given, &self.predictions(&logits, config)?, &w)
            }
            Baseline::Ce | Baseline::BalancedSoftmax => Ok(given),
        }
    }
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Final state; its `history` holds one entry per epoch.
    pub state: TrainState,
    /// Model with the best holdout accuracy (the final one without a holdout).
    pub best: ModelSnapshot,
    pub best_epoch: usize,
    pub inspections: Vec<InspectionRecord>,
    pub splits: Vec<EpochSplit>,
}

impl TrainOutcome {
    pub fn last_accuracy(&self) -> Option<f64> {
        self.state.history.last().and_then(|m| m.test_acc)
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.state.history.get(self.best_epoch).and_then(|m| m.test_acc)
    }
}

fn epoch_metrics(
    state: &TrainState,
    data: &LabeledDataset,
    holdout: Option<&LabeledDataset>,
    config: &TrainConfig,
    epoch: usize,
    phase: &str,
    train_loss: f64,
) -> Result<EpochMetrics> {
    let eval = holdout
        .map(|h| evaluate(&state.model.classifier, h))
        .transpose()?;
    let corrected_label_acc = match data.true_labels() {
        Some(truth) => Some(label_accuracy(&state.corrected_targets(data, config)?, truth)),
        None => None,
    };
    let dynamic = config.baseline == Baseline::Dynamic;
    Ok(EpochMetrics {
        epoch,
        phase: phase.to_string(),
        lr: cosine_lr(config.lr, epoch, config.epochs),
        train_loss,
        test_acc: eval.as_ref().map(|e| e.accuracy),
        per_class_acc: eval.map(|e| e.per_class),
        corrected_label_acc,
        margins: match config.baseline {
            Baseline::Dynamic => state.model.margins.margins()?,
            Baseline::BalancedSoftmax => balanced_margins(&data.class_counts())?,
            Baseline::Ce | Baseline::GmmRelabel => vec![0.0; data.num_classes()],
        },
        g_digest: dynamic
            .then(|| GDigest::of(&state.model.corrector))
            .transpose()?,
        meta_size: (dynamic && phase == "main")
            .then(|| state.split.as_ref().map(|s| s.meta_indices.len()))
            .flatten(),
    })
}

/// Full run: warmup, then per-epoch refresh and meta/classifier updates.
/// `observer` sees every epoch's metrics as soon as they exist.
pub fn train_with<F>(
    data: &LabeledDataset,
    holdout: Option<&LabeledDataset>,
    config: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochMetrics),
{
    config.validate()?;
    if let Some(h) = holdout {
        if h.dims() != data.dims() || h.num_classes() != data.num_classes() {
            return Err(Error::shape(
                "train",
                format!(
                    "holdout has {} dims / {} classes, training data {} / {}",
                    h.dims(),
                    h.num_classes(),
                    data.dims(),
                    data.num_classes()
                ),
            ));
        }
    }
    let mut state = TrainState::new(data, config)?;
    let mut best = state.model.clone();
    let mut best_epoch = 0;
    let mut best_acc = f64::NEG_INFINITY;
    let mut inspections = Vec::new();
    let mut splits = Vec::new();

    while state.epoch < config.epochs {
        let epoch = state.epoch;
        let (phase, loss) = state.run_epoch(data, config)?;
        let metrics = epoch_metrics(&state, data, holdout, config, epoch, phase, loss)?;
        info!(
            "epoch {epoch} [{phase}] loss {loss:.4} lr {:.4} test_acc {}",
            metrics.lr,
            metrics
                .test_acc
                .map_or_else(|| "-".to_string(), |a| format!("{a:.4}"))
        );
        let acc = metrics.test_acc.unwrap_or(f64::NEG_INFINITY);
        if holdout.is_none() || acc > best_acc {
            best_acc = acc;
            best_epoch = epoch;
            best = state.model.clone();
        }
        if config.baseline == Baseline::Dynamic {
            inspections.push(InspectionRecord {
                epoch,
                g_table: state.model.corrector.table()?,
                margins: state.model.margins.margins()?,
            });
            if phase == "main" {
                splits.extend(state.split.clone());
            }
        }
        observer(&metrics);
        state.history.push(metrics);
    }
    Ok(TrainOutcome {
        state,
        best,
        best_epoch,
        inspections,
        splits,
    })
}

pub fn train(
    data: &LabeledDataset,
    holdout: Option<&LabeledDataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(data, holdout, config, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, inject_symmetric_noise};

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 4,
            warmup_epochs: 1,
            batch_size: 32,
            rank_bins: 10,
            hidden: 16,
            ..TrainConfig::default()
        }
    }

    fn blobs() -> LabeledDataset {
        inject_symmetric_noise(&gen_blobs(3, 60, 4, 6.0, 1).unwrap(), 0.2, 2).unwrap()
    }

    #[test]
    fn warmup_leaves_meta_networks_untouched() {
        let data = blobs();
        let config = small_config();
        let mut state = TrainState::new(&data, &config).unwrap();
        let theta = state.model.theta();
        let omega = state.model.classifier.params().to_vec();
        state.warmup_epoch(&data, &config).unwrap();
        assert_eq!(state.model.theta(), theta);
        assert_ne!(state.model.classifier.params(), &omega[..]);
    }

    #[test]
    fn loss_cache_matches_recomputation() {
        let data = blobs();
        let config = small_config();
        let mut state = TrainState::new(&data, &config).unwrap();
        state.warmup_epoch(&data, &config).unwrap();
        state.epoch = 1;
        state.refresh_epoch(&data, &config).unwrap();
        let logits = state.model.classifier.logits(data.features()).unwrap();
        for (i, &cached) in state.loss_cache.iter().enumerate() {
            let row = logits.row(i);
            let lse = crate::numeric::logsumexp(row);
            assert!((cached - (lse - row[data.given_labels()[i]])).abs() <= 1e-12);
        }
        assert!(state.split.as_ref().unwrap().is_partition(data.len()));
    }

    #[test]
    fn zero_meta_rate_keeps_theta() {
        let data = blobs();
        let config = TrainConfig {
            meta_lr: 0.0,
            ..small_config()
        };
        let mut state = TrainState::new(&data, &config).unwrap();
        state.epoch = 1;
        state.refresh_epoch(&data, &config).unwrap();
        let theta = state.model.theta();
        let split = state.split.clone().unwrap();
        state
            .meta_step(&data, &split.train_indices[..16], &split.meta_indices, &config)
            .unwrap();
        assert_eq!(state.model.theta(), theta);
    }

    #[test]
    fn meta_step_updates_theta_and_is_deterministic() {
        let data = blobs();
        let config = small_config();
        let mut a = TrainState::new(&data, &config).unwrap();
        a.epoch = 1;
        a.refresh_epoch(&data, &config).unwrap();
        let mut b = a.clone();
        let split = a.split.clone().unwrap();
        let theta = a.model.theta();
        for s in [&mut a, &mut b] {
            s.meta_step(&data, &split.train_indices[..16], &split.meta_indices, &config)
                .unwrap();
        }
        assert_ne!(a.model.theta(), theta);
        assert_eq!(a.model, b.model);
        assert_eq!(a.sgd, b.sgd);
    }

    #[test]
    fn ce_baseline_never_touches_theta() {
        let data = blobs();
        let config = TrainConfig {
            baseline: Baseline::Ce,
            ..small_config()
        };
        let out = train(&data, Some(&data), &config).unwrap();
        let fresh = TrainState::new(&data, &config).unwrap();
        assert_eq!(out.state.model.theta(), fresh.model.theta());
        assert_eq!(out.state.history.len(), 4);
        assert!(out.state.history.iter().all(|m| m.g_digest.is_none()));
    }

    #[test]
    fn every_baseline_runs() {
        let data = blobs();
        for baseline in [Baseline::Dynamic, Baseline::BalancedSoftmax, Baseline::GmmRelabel] {
            let config = TrainConfig {
                baseline,
                ..small_config()
            };
            let out = train(&data, Some(&data), &config).unwrap();
            assert!(out.last_accuracy().unwrap() > 0.5, "{baseline:?}");
        }
    }

    #[test]
    fn meta_cycler_reshuffles() {
        let mut c = MetaCycler::new(&[1, 2, 3, 4, 5], 0);
        let a = c.next_batch(3);
        let b = c.next_batch(3);
        assert_eq!(a.len(), 3);
        assert_eq!(b.len(), 3);
        assert_eq!(c.next_batch(10).len(), 5);
    }
}
