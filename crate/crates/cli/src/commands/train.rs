use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Args;
use serde_json::{json, Map, Value};

use dynloss::report::{file_sha256, DataRef, RunManifest};
use dynloss::trainer::{train_with, Checkpoint};
use dynloss::TrainConfig;

use super::{create_dir, load_dataset, print_json};
use crate::failure::{CmdResult, Context, Failure};
use crate::OutRoot;

/// One flag per config key; a set flag replaces the key's value.
#[derive(Args, Debug, Default)]
pub struct Overrides {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    meta_lr: Option<f64>,
    #[arg(long)]
    rank_bins: Option<usize>,
    #[arg(long)]
    m0_frac: Option<f64>,
    #[arg(long)]
    m1_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// dynamic | ce | balanced_softmax | gmm_relabel
    #[arg(long)]
    baseline: Option<String>,
    /// hierarchical | naive
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Comma-separated hidden widths, e.g. "32" or "64,32".
    #[arg(long, value_delimiter = ',')]
    corrector_hidden: Option<Vec<usize>>,
    #[arg(long)]
    hard_predictions: Option<bool>,
}

impl Overrides {
    fn to_map(&self) -> Map<String, Value> {
        let mut map = Map::new();
        let mut put = |key: &str, value: Option<Value>| {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        };
        put("epochs", self.epochs.map(Value::from));
        put("warmup_epochs", self.warmup_epochs.map(Value::from));
        put("batch_size", self.batch_size.map(Value::from));
        put("lr", self.lr.map(Value::from));
        put("momentum", self.momentum.map(Value::from));
        put("weight_decay", self.weight_decay.map(Value::from));
        put("meta_lr", self.meta_lr.map(Value::from));
        put("rank_bins", self.rank_bins.map(Value::from));
        put("m0_frac", self.m0_frac.map(Value::from));
        put("m1_frac", self.m1_frac.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("baseline", self.baseline.clone().map(Value::from));
        put("sampler", self.sampler.clone().map(Value::from));
        put("hidden", self.hidden.map(Value::from));
        put("corrector_hidden", self.corrector_hidden.clone().map(Value::from));
        put("hard_predictions", self.hard_predictions.map(Value::from));
        map
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Flat JSON config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training CSV.
    #[arg(long, required_unless_present = "manifest")]
    data: Option<PathBuf>,
    /// Clean holdout CSV for per-epoch accuracy.
    #[arg(long)]
    holdout: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Replay the config and datasets of an earlier run.
    #[arg(long, conflicts_with_all = ["config", "data", "holdout"])]
    manifest: Option<PathBuf>,
    /// Also write every epoch's meta/train split to splits.jsonl.
    #[arg(long)]
    dump_splits: bool,
    #[command(flatten)]
    overrides: Overrides,
}

pub fn load_config(path: Option<&Path>) -> Result<TrainConfig, Failure> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).usage(format!("reading config {}", p.display()))?;
            TrainConfig::from_json_str(&text).usage(format!("config {}", p.display()))
        }
    }
}

fn check_unchanged(data_ref: &DataRef) -> Result<(), Failure> {
    let sha = file_sha256(&data_ref.path).runtime("hashing manifest dataset")?;
    if sha != data_ref.sha256 {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "{} changed since the manifest was written (sha256 {sha}, expected {})",
            data_ref.path.display(),
            data_ref.sha256
        )));
    }
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path).runtime(format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, item).runtime("serializing")?;
        w.write_all(b"\n").runtime("writing")?;
    }
    w.flush().runtime(format!("writing {}", path.display()))
}

pub fn run(args: TrainArgs, root: &OutRoot) -> CmdResult {
    let overrides = args.overrides.to_map();
    let (config, data_path, holdout_path) = match &args.manifest {
        Some(path) => {
            if !overrides.is_empty() {
                return Err(Failure::usage("config overrides cannot be combined with --manifest"));
            }
            let manifest = RunManifest::load(path).usage(format!("manifest {}", path.display()))?;
            check_unchanged(&manifest.data)?;
            if let Some(h) = &manifest.holdout {
                check_unchanged(h)?;
            }
            (
                manifest.config,
                manifest.data.path,
                manifest.holdout.map(|h| h.path),
            )
        }
        None => {
            let base = load_config(args.config.as_deref())?;
            let config = base.with_overrides(overrides)?;
            let data = args.data.clone().expect("clap requires --data without --manifest");
            (config, data, args.holdout.clone())
        }
    };

    let data = load_dataset(&data_path, None)?;
    let holdout = holdout_path
        .as_deref()
        .map(|p| load_dataset(p, Some(data.num_classes())))
        .transpose()?;

    let out = root.resolve(&args.out);
    create_dir(&out)?;
    let metrics_path = out.join("metrics.jsonl");
    let mut metrics = BufWriter::new(
        File::create(&metrics_path).runtime(format!("creating {}", metrics_path.display()))?,
    );
    let mut write_error = None;

    let started_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let outcome = train_with(&data, holdout.as_ref(), &config, |m| {
        if write_error.is_some() {
            return;
        }
        let line = serde_json::to_string(m).map_err(anyhow::Error::from);
        if let Err(e) = line.and_then(|l| writeln!(metrics, "{l}").and_then(|_| metrics.flush()).map_err(Into::into)) {
            write_error = Some(e);
        }
    });
    drop(metrics);
    if let Some(e) = write_error {
        return Err(Failure::Runtime(e.context(format!("writing {}", metrics_path.display()))));
    }
    let outcome = outcome?;
    let wall_clock_secs = clock.elapsed().as_secs_f64();

    let mut outputs = BTreeMap::new();
    outputs.insert("metrics".to_string(), metrics_path);

    let inspection_path = out.join("inspection.jsonl");
    write_jsonl(&inspection_path, &outcome.inspections)?;
    outputs.insert("inspection".to_string(), inspection_path);

    if args.dump_splits {
        let splits_path = out.join("splits.jsonl");
        write_jsonl(&splits_path, &outcome.splits)?;
        outputs.insert("splits".to_string(), splits_path);
    }

    let last_epoch = outcome.state.epoch.saturating_sub(1);
    let last_path = out.join("checkpoint_last.json");
    Checkpoint::new(&outcome.state.model, &config, last_epoch).save(&last_path)?;
    outputs.insert("checkpoint_last".to_string(), last_path);
    let best_path = out.join("checkpoint_best.json");
    Checkpoint::new(&outcome.best, &config, outcome.best_epoch).save(&best_path)?;
    outputs.insert("checkpoint_best".to_string(), best_path);

    let manifest_path = out.join("manifest.json");
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: "train".to_string(),
        seed: config.seed,
        config,
        data: DataRef::of(&data_path, &data)?,
        holdout: match (&holdout_path, &holdout) {
            (Some(p), Some(h)) => Some(DataRef::of(p, h)?),
            _ => None,
        },
        outputs,
        started_at,
        wall_clock_secs,
    };
    manifest.save(&manifest_path)?;

    print_json(&json!({
        "out": out,
        "epochs": outcome.state.epoch,
        "last_test_acc": outcome.last_accuracy(),
        "best_test_acc": outcome.best_accuracy(),
        "best_epoch": outcome.best_epoch,
        "manifest": manifest_path,
    }));
    Ok(())
}
