use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde_json::json;

use dynloss::data::{
    apply_longtail, gen_blobs, inject_asymmetric_noise, inject_distribution_noise,
    inject_symmetric_noise, save_csv, PairMap,
};
use dynloss::rng::derive_seed;

use super::{load_dataset, print_json};
use crate::failure::{CmdResult, Context, Failure};
use crate::OutRoot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseKind {
    None,
    /// Uniform resampling over all classes.
    Sym,
    /// Pair flips given by --pairs.
    Asym,
    /// Reassignment proportional to class frequency.
    Dist,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Generate isotropic Gaussian blobs.
    #[arg(long, conflicts_with = "input")]
    blobs: bool,
    /// Corrupt an existing CSV dataset instead of generating one.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Number of classes (blobs only).
    #[arg(long)]
    classes: Option<usize>,
    /// Samples per class before long-tail subsampling (blobs only).
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    #[arg(long, default_value_t = 8)]
    dims: usize,
    /// Minimum distance between class means.
    #[arg(long, default_value_t = 8.0)]
    sep: f64,
    /// Imbalance ratio of the exponential long-tail profile (1 keeps classes balanced).
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, value_enum, default_value_t = NoiseKind::None)]
    noise: NoiseKind,
    /// Noise rate.
    #[arg(long, default_value_t = 0.0)]
    rate: f64,
    /// Flip map for asymmetric noise, e.g. "3:5,0:1".
    #[arg(long)]
    pairs: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "data.csv")]
    out: PathBuf,
    /// Also write a clean, balanced holdout drawn from the same blobs.
    #[arg(long)]
    holdout: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    holdout_per_class: usize,
}

pub fn parse_pairs(text: &str) -> Result<PairMap, String> {
    let mut map = PairMap::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (s, t) = item
            .split_once(':')
            .ok_or_else(|| format!("pair {item:?} is not of the form source:target"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("pair {item:?}: {v:?} is not a class index"))
        };
        if map.insert(parse(s)?, parse(t)?).is_some() {
            return Err(format!("class {s} is mapped twice"));
        }
    }
    Ok(map)
}

pub fn run(args: GenDataArgs, root: &OutRoot) -> CmdResult {
    if args.noise == NoiseKind::None && args.rate != 0.0 {
        return Err(Failure::usage("--rate needs --noise sym|asym|dist"));
    }
    if args.pairs.is_some() && args.noise != NoiseKind::Asym {
        return Err(Failure::usage("--pairs only applies to --noise asym"));
    }
    let (base, geometry) = match (&args.input, args.blobs) {
        (Some(path), false) => (load_dataset(path, None)?, None),
        (None, true) => {
            let classes = args
                .classes
                .ok_or_else(|| Failure::usage("--blobs needs --classes"))?;
            let data = gen_blobs(classes, args.per_class, args.dims, args.sep, args.seed)
                .usage("invalid blob parameters")?;
            (data, Some(classes))
        }
        _ => return Err(Failure::usage("choose a source: --blobs or --input PATH")),
    };
    let c = base.num_classes();

    let mut data = if args.rho != 1.0 {
        apply_longtail(&base, args.rho, derive_seed(args.seed, 1, 0)).usage("long-tail subsampling")?
    } else {
        base
    };
    let noise_seed = derive_seed(args.seed, 2, 0);
    data = match args.noise {
        NoiseKind::None => data,
        NoiseKind::Sym => inject_symmetric_noise(&data, args.rate, noise_seed).usage("symmetric noise")?,
        NoiseKind::Dist => {
            inject_distribution_noise(&data, args.rate, noise_seed).usage("distribution noise")?
        }
        NoiseKind::Asym => {
            let text = args
                .pairs
                .as_deref()
                .ok_or_else(|| Failure::usage("--noise asym needs --pairs"))?;
            let pairs = parse_pairs(text).map_err(Failure::usage)?;
            if let Some((s, t)) = pairs.iter().find(|(&s, &t)| s >= c || t >= c) {
                return Err(Failure::usage(format!(
                    "--pairs {s}:{t} does not fit {c} classes"
                )));
            }
            inject_asymmetric_noise(&data, args.rate, &pairs, noise_seed).usage("asymmetric noise")?
        }
    };

    let out = root.resolve(&args.out);
    save_csv(&data, &out).runtime(format!("writing {}", out.display()))?;
    let mut summary = json!({
        "out": out,
        "samples": data.len(),
        "class_counts": data.class_counts(),
        "noisy_fraction": data.provenance().noisy_fraction,
    });
    if let Some(path) = &args.holdout {
        let classes = geometry.ok_or_else(|| Failure::usage("--holdout needs --blobs"))?;
        let holdout = gen_blobs(
            classes,
            args.holdout_per_class,
            args.dims,
            args.sep,
            derive_seed(args.seed, 3, 0),
        )
        .usage("invalid holdout parameters")?;
        let path = root.resolve(path);
        save_csv(&holdout, &path).runtime(format!("writing {}", path.display()))?;
        summary["holdout"] = json!(path);
    }
    print_json(&summary);
    Ok(())
}
