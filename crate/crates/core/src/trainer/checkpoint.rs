use serde::{Deserialize, Serialize};

use crate::models::FlatParams;

/// Last good state of a run: parameters, the run configuration as JSON and
/// the iteration counter they belong to.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub run_config: serde_json::Value,
    pub params: FlatParams,
}
