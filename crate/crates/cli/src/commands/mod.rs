pub mod compare;
pub mod eval;
pub mod gen_data;
pub mod inspect;
pub mod train;

use std::fs;
use std::path::Path;

use dynloss::data::load_csv;
use dynloss::LabeledDataset;

use crate::failure::{Context, Failure};

pub fn load_dataset(path: &Path, num_classes: Option<usize>) -> Result<LabeledDataset, Failure> {
    load_csv(path, num_classes).runtime(format!("loading {}", path.display()))
}

pub fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).runtime(format!("creating {}", dir.display()))
}

pub fn print_json(value: &serde_json::Value) {
    println!("{value}");
}
