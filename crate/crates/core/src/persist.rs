//! JSON persistence of a trained model together with everything needed to
//! apply it to new data.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{DualDataset, ScalerStats};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::tensor::Matrix;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedModel {
    pub schema_version: u32,
    pub config: TrainConfig,
    pub model: ModelState,
    /// Standardization of the interpretable view, if one was applied.
    pub scaler: Option<ScalerStats>,
    pub scaler_transformed: Option<ScalerStats>,
    pub feature_names: Vec<String>,
    pub seed: u64,
}

impl PersistedModel {
    pub fn new(
        config: TrainConfig,
        model: ModelState,
        scaler: Option<ScalerStats>,
        scaler_transformed: Option<ScalerStats>,
        feature_names: Vec<String>,
        seed: u64,
    ) -> Self {
        PersistedModel {
            schema_version: MODEL_SCHEMA_VERSION,
            config,
            model,
            scaler,
            scaler_transformed,
            feature_names,
            seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        // write-then-rename so an interrupted checkpoint never truncates
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: PersistedModel = serde_json::from_str(&text)?;
        if m.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported model schema version {}",
                path.display(),
                m.schema_version
            )));
        }
        if m.feature_names.len() != m.model.d {
            return Err(Error::Format(format!(
                "{}: {} feature names for a {}-feature model",
                path.display(),
                m.feature_names.len(),
                m.model.d
            )));
        }
        Ok(m)
    }

    /// Applies the stored scaler to raw interpretable features.
    pub fn prepare_interp(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.model.d {
            return Err(Error::shape("model input", format!("{} features", self.model.d), x.cols()));
        }
        match &self.scaler {
            Some(s) => s.transform(x),
            None => Ok(x.clone()),
        }
    }

    /// Applies both stored scalers to a raw dataset.
    pub fn prepare_dataset(&self, data: &DualDataset) -> Result<DualDataset> {
        let xi = self.prepare_interp(data.x_interp())?;
        let xt = match &self.scaler_transformed {
            Some(s) => s.transform(data.x_transformed())?,
            None => data.x_transformed().clone(),
        };
        DualDataset::new(
            xi,
            xt,
            Some(data.feature_names().to_vec()),
            data.labels().map(<[usize]>::to_vec),
        )
    }
}
