//! Dynamic loss: class-wise loss-rank bins, the label corrector, the margin
//! generator and the margin-adjusted softmax, plus two reference baselines
//! (Balanced-Softmax and a per-class two-component GMM split).

mod bins;
mod corrector;
mod gmm;
mod loss;
mod margin;

pub use bins::{compute_rank_bins, RankAssignment};
pub use corrector::{mix_labels, LabelCorrector, CORRECTOR_HIDDEN, CORRECTOR_INIT_BIAS};
pub use gmm::{fit_two_component, gmm_clean_posterior, gmm_split, TwoComponentFit};
pub use loss::{
    balanced_margins, balanced_softmax_loss, margin_softmax_loss, margin_softmax_loss_graph,
};
pub use margin::{MarginGenerator, MARGIN_INIT_SCALE};
