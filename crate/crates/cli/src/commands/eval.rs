use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use dynloss::trainer::{evaluate, Checkpoint};

use super::{load_dataset, print_json};
use crate::failure::{CmdResult, Context, Failure};
use crate::OutRoot;

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Holdout CSV; true labels are used when present.
    #[arg(long)]
    data: PathBuf,
}

pub fn run(args: EvalArgs, _root: &OutRoot) -> CmdResult {
    let checkpoint = Checkpoint::load(&args.checkpoint)
        .runtime(format!("checkpoint {}", args.checkpoint.display()))?;
    let epoch = checkpoint.epoch;
    let model = checkpoint.into_model()?;
    let data = load_dataset(&args.data, None)?;
    let classifier = &model.classifier;
    if classifier.dims() != data.dims() || classifier.num_classes() < data.num_classes() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "checkpoint expects {} dims / {} classes, dataset has {} / {}",
            classifier.dims(),
            classifier.num_classes(),
            data.dims(),
            data.num_classes()
        )));
    }
    let report = evaluate(classifier, &data)?;
    print_json(&json!({
        "checkpoint_epoch": epoch,
        "accuracy": report.accuracy,
        "per_class": report.per_class,
        "class_counts": report.class_counts,
    }));
    Ok(())
}
