//! Knowledge-assisted gait analysis engine.
//!
//! - [`grf`]: vertical ground reaction force processing and STP extraction
//! - [`eks`]: the explicit knowledge store of gait categories
//! - [`analysis`]: category matching, category differences, graphical summary
//! - [`persist`]: store files and the shared transactional store
//! - [`report`]: JSON documents shared by the service and the CLI
//! - [`cohort`]: deterministic synthetic cohorts and trials

pub mod analysis;
pub mod cohort;
pub mod eks;
pub mod grf;
pub mod persist;
pub mod report;
pub mod stats;
pub mod stp;
pub mod trial;

use serde::{Deserialize, Serialize};

pub use analysis::{MatchResult, ParamState, DEFAULT_EPSILON};
pub use eks::{DemographicFilter, GaitCategory, KnowledgeStore, PatientRecord};
pub use grf::{PatientMeta, RawTrial, SegmentationConfig};
pub use stp::{Foot, Parameter, StpId, StpVector};

/// Tunables shared by every front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub epsilon: f64,
    pub segmentation: SegmentationConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            epsilon: DEFAULT_EPSILON,
            segmentation: SegmentationConfig::default(),
        }
    }
}
