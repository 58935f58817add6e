//! The learning agent: state features, the Gaussian policy network, its
//! optimizer, a finite-difference gradient checker and checkpoints.

mod adam;
mod features;
mod gradcheck;
mod mlp;

pub use adam::{AdamConfig, OptimizerState};
pub use features::{StateFeatures, FEATURE_DIM, FEATURE_SCHEMA_VERSION};
pub use gradcheck::grad_check;
pub use mlp::{PolicyModel, WeightedSample, OUTPUT_DIM};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid layer sizes {0:?}")]
    BadArchitecture(Vec<usize>),
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("scale factors must be positive, got {0}")]
    BadScale(f64),
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite value while processing sample {sample}")]
    NonFinite { sample: usize },
    #[error("gradient has {got} entries, model has {expected}")]
    GradientShape { expected: usize, got: usize },
    #[error("checkpoint schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub d_in: usize,
    pub layer_sizes: Vec<usize>,
    pub sigma: f64,
    pub input_scale: f64,
    pub output_scale: f64,
    pub feature_schema_version: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &PolicyModel) -> Self {
        Self {
            header: CheckpointHeader {
                d_in: model.input_dim(),
                layer_sizes: model.layer_sizes().to_vec(),
                sigma: model.sigma(),
                input_scale: model.input_scale(),
                output_scale: model.output_scale(),
                feature_schema_version: FEATURE_SCHEMA_VERSION,
            },
            params: model.params().to_vec(),
        }
    }

    /// Rebuilds the model, refusing checkpoints written for another feature layout.
    pub fn into_model(self) -> Result<PolicyModel, AgentError> {
        let h = self.header;
        if h.feature_schema_version != FEATURE_SCHEMA_VERSION {
            return Err(AgentError::SchemaMismatch(format!(
                "feature schema v{} (this build reads v{FEATURE_SCHEMA_VERSION})",
                h.feature_schema_version
            )));
        }
        if h.d_in != FEATURE_DIM || h.layer_sizes.first() != Some(&h.d_in) {
            return Err(AgentError::SchemaMismatch(format!("input dimension {} (expected {FEATURE_DIM})", h.d_in)));
        }
        PolicyModel::from_parts(h.layer_sizes, self.params, h.sigma)?.with_scales(h.input_scale, h.output_scale)
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
