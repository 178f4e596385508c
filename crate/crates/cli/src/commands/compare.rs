use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use dynloss::classifier::cross_entropy_per_sample;
use dynloss::report::{dispersion_table, mean_dispersion, DispersionRow};
use dynloss::rng::derive_seed;
use dynloss::sampling::{dispersion, hierarchical_sample, naive_sample};
use dynloss::trainer::Checkpoint;
use dynloss::TrainState;

use super::train::load_config;
use super::{create_dir, load_dataset, print_json};
use crate::failure::{CmdResult, Context, Failure};
use crate::OutRoot;

/// Seed stream for the per-repeat primary draws.
const COMPARE_STREAM: u64 = 7;

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    /// Config supplying m0_frac, m1_frac and (without --checkpoint) the warmup schedule.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Classifier whose losses drive both samplers; otherwise a warmup-only run supplies them.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Number of repeats.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "compare-sampling")]
    out: PathBuf,
}

pub fn run(args: CompareArgs, root: &OutRoot) -> CmdResult {
    if args.seeds == 0 {
        return Err(Failure::usage("--seeds must be at least 1"));
    }
    let config = load_config(args.config.as_deref())?;
    let data = load_dataset(&args.data, None)?;
    let losses = match &args.checkpoint {
        Some(path) => {
            let model = Checkpoint::load(path)
                .runtime(format!("checkpoint {}", path.display()))?
                .into_model()?;
            let logits = model.classifier.logits(data.features())?;
            cross_entropy_per_sample(&logits, data.given_labels())?
        }
        None => {
            let mut state = TrainState::new(&data, &config)?;
            while state.epoch < config.warmup_epochs {
                state.run_epoch(&data, &config)?;
            }
            state.refresh_loss_cache(&data)?;
            state.loss_cache.clone()
        }
    };

    let mut rows = Vec::new();
    for k in 0..args.seeds {
        let seed = derive_seed(args.seed, COMPARE_STREAM, k);
        let hier = hierarchical_sample(&data, &losses, config.m0_frac, config.m1_frac, seed)?;
        let naive = naive_sample(&data, &losses, config.m1_frac)?;
        for (name, split) in [("hierarchical", hier), ("naive", naive)] {
            rows.push(DispersionRow {
                sampler: name.to_string(),
                seed,
                meta_size: split.meta_indices.len(),
                dispersion: dispersion(data.features(), data.given_labels(), &split.meta_indices)?,
            });
        }
    }

    let out = root.resolve(&args.out);
    create_dir(&out)?;
    let table_path = out.join("dispersion.csv");
    dispersion_table(&rows)?.write(&table_path)?;
    let means: serde_json::Map<_, _> = mean_dispersion(&rows)
        .into_iter()
        .map(|(s, m)| (s, json!(m)))
        .collect();
    print_json(&json!({
        "out": table_path,
        "seeds": args.seeds,
        "mean_dispersion": means,
    }));
    Ok(())
}
