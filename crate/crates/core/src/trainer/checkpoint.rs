use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelSnapshot, TrainConfig};
use crate::classifier::{Classifier, ClassifierCheckpoint, CHECKPOINT_VERSION};
use crate::dynamic::{LabelCorrector, MarginGenerator};
use crate::error::{Error, Result};

/// Classifier, meta networks and the config that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub epoch: usize,
    pub config: TrainConfig,
    pub classifier: ClassifierCheckpoint,
    pub corrector: LabelCorrector,
    pub margin_generator: MarginGenerator,
}

impl Checkpoint {
    pub fn new(model: &ModelSnapshot, config: &TrainConfig, epoch: usize) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            epoch,
            config: config.clone(),
            classifier: model.classifier.to_checkpoint(),
            corrector: model.corrector.clone(),
            margin_generator: model.margins.clone(),
        }
    }

    pub fn into_model(self) -> Result<ModelSnapshot> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let classifier = Classifier::from_checkpoint(self.classifier)?;
        let c = classifier.num_classes();
        let corrector = LabelCorrector::from_net(
            self.corrector.net().clone(),
            self.corrector.num_classes(),
            self.corrector.num_bins(),
        )?;
        let margins = MarginGenerator::from_net(self.margin_generator.net().clone())?;
        if corrector.num_classes() != c || margins.num_classes() != c {
            return Err(Error::shape(
                "Checkpoint",
                format!(
                    "classifier has {c} classes, corrector {}, margin generator {}",
                    corrector.num_classes(),
                    margins.num_classes()
                ),
            ));
        }
        Ok(ModelSnapshot {
            classifier,
            corrector,
            margins,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
