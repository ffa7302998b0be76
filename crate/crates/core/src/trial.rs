//! Trial file format.
//!
//! A trial is one JSON document:
//!
//! ```json
//! {
//!   "patient": {"id": "P-001", "age": 34, "body_mass_kg": 72.5,
//!               "body_height_cm": 178, "gender": "female"},
//!   "sample_rate_hz": 1000,
//!   "left_fv_newton": [0.0, 12.5, ...],
//!   "right_fv_newton": [0.0, 0.0, ...],
//!   "spatial": {"step_length_m": [...], "stride_length_m": [...]}
//! }
//! ```
//!
//! `gender` is one of `female`, `male`, `unspecified`. `spatial` is optional.
//! Unknown fields are rejected.

use serde::{Deserialize, Serialize};

use crate::grf::{GrfError, PatientMeta, RawTrial, SpatialMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialFile {
    pub patient: PatientMeta,
    pub sample_rate_hz: f64,
    pub left_fv_newton: Vec<f64>,
    pub right_fv_newton: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<SpatialMeta>,
}

impl From<TrialFile> for RawTrial {
    fn from(f: TrialFile) -> RawTrial {
        RawTrial {
            patient: f.patient,
            left_samples: f.left_fv_newton,
            right_samples: f.right_fv_newton,
            sample_rate_hz: f.sample_rate_hz,
            spatial: f.spatial,
        }
    }
}

impl From<RawTrial> for TrialFile {
    fn from(t: RawTrial) -> TrialFile {
        TrialFile {
            patient: t.patient,
            sample_rate_hz: t.sample_rate_hz,
            left_fv_newton: t.left_samples,
            right_fv_newton: t.right_samples,
            spatial: t.spatial,
        }
    }
}

/// Parses and validates a trial document.
pub fn parse_trial(text: &str) -> Result<RawTrial, GrfError> {
    let file: TrialFile = serde_json::from_str(text).map_err(|e| {
        GrfError::InvalidTrial(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    let trial = RawTrial::from(file);
    trial.validate()?;
    Ok(trial)
}

pub fn trial_to_string(trial: &RawTrial) -> String {
    serde_json::to_string(&TrialFile::from(trial.clone())).expect("trial is serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = r#"{
        "patient": {"id": "P1", "age": 30, "body_mass_kg": 70, "body_height_cm": 170, "gender": "male"},
        "sample_rate_hz": 1000,
        "left_fv_newton": [0, 1, 2],
        "right_fv_newton": [0, 1, 2]
    }"#;

    #[test]
    fn parses_valid_trial() {
        let t = parse_trial(VALID).unwrap();
        assert_eq!(t.patient.id, "P1");
        assert_eq!(t.left_samples.len(), 3);
        assert!(t.spatial.is_none());
        assert_eq!(parse_trial(&trial_to_string(&t)).unwrap(), t);
    }

    #[test]
    fn rejects_unknown_gender() {
        let text = VALID.replace("\"male\"", "\"robot\"");
        assert!(matches!(parse_trial(&text), Err(GrfError::InvalidTrial(_))));
    }

    #[test]
    fn rejects_non_finite_and_missing_fields() {
        let text = VALID.replace(
            "[0, 1, 2],\n        \"right",
            "[0, 1e999, 2],\n        \"right",
        );
        assert!(parse_trial(&text).is_err());
        let text = VALID.replace("\"right_fv_newton\": [0, 1, 2]", "\"x\": 1");
        assert!(parse_trial(&text).is_err());
        assert!(parse_trial("").is_err());
    }

    #[test]
    fn rejects_bad_meta_and_rate() {
        let text = VALID.replace("\"body_mass_kg\": 70", "\"body_mass_kg\": -70");
        assert!(parse_trial(&text).is_err());
        let text = VALID.replace("\"sample_rate_hz\": 1000", "\"sample_rate_hz\": 0");
        assert!(parse_trial(&text).is_err());
        let text = VALID.replace("\"left_fv_newton\": [0, 1, 2]", "\"left_fv_newton\": []");
        assert!(parse_trial(&text).is_err());
    }
}
