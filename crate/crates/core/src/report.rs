//! Wire documents shared by the HTTP service and the command line tool.
//!
//! All documents are JSON. [`to_wire`] is the single encoder, so the same value
//! always produces the same bytes regardless of which front end emits it.

use serde::{Deserialize, Serialize};

use crate::analysis::{rank_categories, AnalysisError, MatchResult};
use crate::eks::{DemographicFilter, KnowledgeStore};
use crate::grf::{amplitude_normalize, ConsistencyGraph, GrfError, PatientMeta, ProcessedTrial};
use crate::stp::{StpId, StpVector};

/// Pretty JSON followed by a newline.
pub fn to_wire<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("wire documents are serializable");
    s.push('\n');
    s
}

/// Ranked categories for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub patient_id: String,
    pub epsilon: f64,
    pub filter: DemographicFilter,
    pub results: Vec<MatchResult>,
}

pub fn match_report(
    patient: &PatientMeta,
    stps: &StpVector,
    store: &KnowledgeStore,
    filter: &DemographicFilter,
    epsilon: f64,
) -> Result<MatchReport, AnalysisError> {
    Ok(MatchReport {
        patient_id: patient.id.clone(),
        epsilon,
        filter: filter.clone(),
        results: rank_categories(stps, store, filter, epsilon)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePatient {
    pub id: String,
    pub gender: crate::grf::Gender,
    pub age: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeCategory {
    pub id: String,
    pub name: String,
    pub patient_count: usize,
    /// Set when any range was overridden by hand.
    pub manual_override: bool,
    pub manual_stps: Vec<StpId>,
    pub patients: Vec<TreePatient>,
}

/// The knowledge tree: categories with member counts and override markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeReport {
    pub schema_version: u32,
    pub categories: Vec<TreeCategory>,
}

pub fn tree_report(store: &KnowledgeStore) -> TreeReport {
    TreeReport {
        schema_version: store.schema_version,
        categories: store
            .categories()
            .map(|c| TreeCategory {
                id: c.id.clone(),
                name: c.name.clone(),
                patient_count: c.patients.len(),
                manual_override: c.has_manual_override(),
                manual_stps: c
                    .ranges
                    .iter()
                    .filter(|r| r.manual)
                    .map(|r| r.stp_id)
                    .collect(),
                patients: c
                    .patients
                    .iter()
                    .map(|p| TreePatient {
                        id: p.meta.id.clone(),
                        gender: p.meta.gender,
                        age: p.meta.age,
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Both feet's amplitude-normalized signals on the shared trial time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedSeries {
    pub sample_rate_hz: f64,
    pub left_bw: Vec<f64>,
    pub right_bw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyView {
    pub left: ConsistencyGraph,
    pub right: ConsistencyGraph,
    pub combined: CombinedSeries,
}

/// What the service returns after loading a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadedPatient {
    pub patient: PatientMeta,
    pub consistency: ConsistencyView,
    pub stps: StpVector,
}

pub fn loaded_patient(processed: &ProcessedTrial) -> Result<LoadedPatient, GrfError> {
    let t = &processed.trial;
    let mass = t.patient.body_mass_kg;
    Ok(LoadedPatient {
        patient: t.patient.clone(),
        consistency: ConsistencyView {
            left: processed.left_graph.clone(),
            right: processed.right_graph.clone(),
            combined: CombinedSeries {
                sample_rate_hz: t.sample_rate_hz,
                left_bw: amplitude_normalize(&t.left_samples, mass)?,
                right_bw: amplitude_normalize(&t.right_samples, mass)?,
            },
        },
        stps: processed.stps.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_marks_overrides() {
        let mut s = KnowledgeStore::with_default_categories();
        s.override_range("hip", StpId::new(3).unwrap(), 0.1, 0.2)
            .unwrap();
        let t = tree_report(&s);
        assert_eq!(t.categories.len(), 5);
        let hip = t.categories.iter().find(|c| c.id == "hip").unwrap();
        assert!(hip.manual_override);
        assert_eq!(hip.manual_stps, vec![StpId::new(3).unwrap()]);
        assert!(t
            .categories
            .iter()
            .filter(|c| c.id != "hip")
            .all(|c| !c.manual_override));
    }

    #[test]
    fn wire_is_stable() {
        let s = KnowledgeStore::with_default_categories();
        assert_eq!(to_wire(&tree_report(&s)), to_wire(&tree_report(&s.clone())));
        assert!(to_wire(&1).ends_with('\n'));
    }
}
