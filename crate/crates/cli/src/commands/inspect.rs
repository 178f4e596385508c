use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use dynloss::report::{clean_fraction_table, g_table, inspect};
use dynloss::trainer::Checkpoint;

use super::{create_dir, load_dataset, print_json};
use crate::failure::{CmdResult, Context};
use crate::OutRoot;

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset the checkpoint was trained on (for class counts and rank bins).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the CSV tables and summary.
    #[arg(long, default_value = "inspect")]
    out: PathBuf,
}

pub fn run(args: InspectArgs, root: &OutRoot) -> CmdResult {
    let checkpoint = Checkpoint::load(&args.checkpoint)
        .runtime(format!("checkpoint {}", args.checkpoint.display()))?;
    let model = checkpoint.into_model()?;
    let data = load_dataset(&args.data, None)?;
    let report = inspect(&model.classifier, &model.corrector, &model.margins, &data)?;

    let out = root.resolve(&args.out);
    create_dir(&out)?;
    g_table(&model.corrector)?.write(&out.join("g_table.csv"))?;
    report.margins.table()?.write(&out.join("margins.csv"))?;
    clean_fraction_table(&model.corrector)?.write(&out.join("clean_fraction.csv"))?;
    let summary = serde_json::to_string_pretty(&report).runtime("serializing inspection")?;
    let summary_path = out.join("summary.json");
    fs::write(&summary_path, summary + "\n").runtime(format!("writing {}", summary_path.display()))?;

    let crossings: Vec<String> = report
        .crossings
        .iter()
        .map(|c| c.map_or_else(|| "none".to_string(), |b| b.to_string()))
        .collect();
    print_json(&json!({
        "out": out,
        "crossings": crossings,
        "margin_spearman": report.margins.spearman,
        "corrected_label_acc": report.corrected_label_acc,
    }));
    Ok(())
}
