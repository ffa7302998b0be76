//! Patient-to-category matching, the inter-category difference measure and the
//! data behind the graphical summary and the twin box plots.

use serde::{Deserialize, Serialize};

use crate::eks::{DemographicFilter, EksError, KnowledgeStore, ParameterRange};
use crate::stats::DistributionStats;
use crate::stp::{Foot, StpId, StpVector};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("epsilon must be a finite value > 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("distribution of STP {0} is empty")]
    EmptyDistribution(StpId),
    #[error("expected 16 entries, got {0}")]
    WrongLength(usize),
}

/// Three-state comparison of one patient value against a category range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamState {
    InRange,
    OutOfRange,
    NoData,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchScore {
    pub score: f64,
    pub n_used: usize,
}

fn check_epsilon(epsilon: f64) -> Result<(), AnalysisError> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(AnalysisError::InvalidEpsilon(epsilon))
    }
}

/// Matching score `c = Σ σ_i / max((μ_i − x_i)², ε)` over the STPs where the
/// patient has a value and the category distribution is non-empty. Larger
/// means a closer match. `stats` is indexed by `StpId::index`.
pub fn match_score(
    patient: &StpVector,
    stats: &[DistributionStats],
    epsilon: f64,
) -> Result<MatchScore, AnalysisError> {
    check_epsilon(epsilon)?;
    if stats.len() != StpId::COUNT {
        return Err(AnalysisError::WrongLength(stats.len()));
    }
    let mut score = 0.0;
    let mut n_used = 0;
    for id in StpId::all() {
        let (Some(x), Some(s)) = (patient.get(id), stats[id.index()].summary) else {
            continue;
        };
        let dev = s.mean - x;
        score += s.std_dev / (dev * dev).max(epsilon);
        n_used += 1;
    }
    Ok(MatchScore { score, n_used })
}

/// Per-STP state: `NoData` when the range or the patient value is missing,
/// `InRange` for `min <= x <= max`, otherwise `OutOfRange`.
pub fn graphical_summary(
    patient: &StpVector,
    ranges: &[ParameterRange],
) -> Result<Vec<ParamState>, AnalysisError> {
    if ranges.len() != StpId::COUNT {
        return Err(AnalysisError::WrongLength(ranges.len()));
    }
    Ok(StpId::all()
        .map(|id| match (patient.get(id), ranges[id.index()].bounds) {
            (Some(x), Some(b)) if b.contains(x) => ParamState::InRange,
            (Some(_), Some(_)) => ParamState::OutOfRange,
            _ => ParamState::NoData,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub category_id: String,
    pub category_name: String,
    pub score: f64,
    pub n_used: usize,
    pub epsilon: f64,
    pub manual_override: bool,
    pub summary: Vec<ParamState>,
}

/// Scores the patient against every category (norm included) using the members
/// that pass `filter`. Sorted by score descending, ties by name ascending.
pub fn rank_categories(
    patient: &StpVector,
    store: &KnowledgeStore,
    filter: &DemographicFilter,
    epsilon: f64,
) -> Result<Vec<MatchResult>, AnalysisError> {
    check_epsilon(epsilon)?;
    let mut results = store
        .categories()
        .map(|c| {
            let m = match_score(patient, &c.all_stats(filter), epsilon)?;
            Ok(MatchResult {
                category_id: c.id.clone(),
                category_name: c.name.clone(),
                score: m.score,
                n_used: m.n_used,
                epsilon,
                manual_override: c.has_manual_override(),
                summary: graphical_summary(patient, &c.effective_ranges(filter))?,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    results.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.category_name.cmp(&b.category_name))
            .then_with(|| a.category_id.cmp(&b.category_id))
    });
    Ok(results)
}

/// Separation of two distributions of the same STP.
///
/// `d` is `+inf` with `degenerate` set when both variances are zero but the
/// means differ. In JSON an infinite `d` is written as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryDifference {
    pub stp_id: StpId,
    #[serde(with = "finite_or_null")]
    pub d: f64,
    pub degenerate: bool,
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// `d = (μ_k − μ_l)² / (σ_k² + σ_l²)`.
pub fn category_difference(
    k: &DistributionStats,
    l: &DistributionStats,
) -> Result<CategoryDifference, AnalysisError> {
    let sk = k
        .summary
        .ok_or(AnalysisError::EmptyDistribution(k.stp_id))?;
    let sl = l
        .summary
        .ok_or(AnalysisError::EmptyDistribution(l.stp_id))?;
    let num = (sk.mean - sl.mean) * (sk.mean - sl.mean);
    let den = sk.variance() + sl.variance();
    let (d, degenerate) = if den > 0.0 {
        (num / den, false)
    } else if num == 0.0 {
        (0.0, false)
    } else {
        (f64::INFINITY, true)
    };
    Ok(CategoryDifference {
        stp_id: k.stp_id,
        d,
        degenerate,
    })
}

/// Everything one twin box plot row shows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItbpData {
    pub stp_id: StpId,
    pub name: String,
    pub unit: String,
    pub norm_stats: DistributionStats,
    pub selected_stats: DistributionStats,
    /// Range of the selected category as seen through the filter.
    pub selected_range: ParameterRange,
    pub patient_value_left: Option<f64>,
    pub patient_value_right: Option<f64>,
    /// Absent when either distribution is empty.
    pub difference: Option<CategoryDifference>,
}

pub fn itbp_data(
    store: &KnowledgeStore,
    selected_category_id: &str,
    stp_id: StpId,
    patient: Option<&StpVector>,
    filter: &DemographicFilter,
) -> Result<ItbpData, EksError> {
    let selected = store.category(selected_category_id)?;
    let norm_stats = store.norm_category.distribution_stats(stp_id, filter);
    let selected_stats = selected.distribution_stats(stp_id, filter);
    let difference = category_difference(&norm_stats, &selected_stats).ok();
    let parameter = stp_id.parameter();
    Ok(ItbpData {
        stp_id,
        name: stp_id.name(),
        unit: parameter.unit().to_string(),
        selected_range: selected.effective_ranges(filter)[stp_id.index()],
        norm_stats,
        selected_stats,
        patient_value_left: patient.and_then(|p| p.get(StpId::of(Foot::Left, parameter))),
        patient_value_right: patient.and_then(|p| p.get(StpId::of(Foot::Right, parameter))),
        difference,
    })
}

/// Twin box plot rows for all sixteen STPs.
pub fn parameter_explorer(
    store: &KnowledgeStore,
    selected_category_id: &str,
    patient: Option<&StpVector>,
    filter: &DemographicFilter,
) -> Result<Vec<ItbpData>, EksError> {
    StpId::all()
        .map(|id| itbp_data(store, selected_category_id, id, patient, filter))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eks::Bounds;

    fn stats_with(id: StpId, values: &[f64]) -> DistributionStats {
        DistributionStats::from_values(id, values.iter().copied())
    }

    fn single_stp_stats(values: &[f64]) -> Vec<DistributionStats> {
        StpId::all()
            .map(|id| {
                if id.get() == 1 {
                    stats_with(id, values)
                } else {
                    stats_with(id, &[])
                }
            })
            .collect()
    }

    fn patient_with(x: f64) -> StpVector {
        let mut p = StpVector::empty();
        p.set(StpId::new(1).unwrap(), Some(x)).unwrap();
        p
    }

    #[test]
    fn zero_spread_scores_zero() {
        let stats: Vec<_> = StpId::all().map(|id| stats_with(id, &[3.0])).collect();
        let p = StpVector::from_values([Some(1.0); 16]).unwrap();
        let m = match_score(&p, &stats, DEFAULT_EPSILON).unwrap();
        assert_eq!(m.score, 0.0);
        assert_eq!(m.n_used, 16);
    }

    #[test]
    fn single_stp_score() {
        // μ = 10, σ = 2 (population) from {8, 12}
        let stats = single_stp_stats(&[8.0, 12.0]);
        let m = match_score(&patient_with(13.0), &stats, 1e-6).unwrap();
        assert!((m.score - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(m.n_used, 1);
    }

    #[test]
    fn exact_mean_hits_epsilon() {
        // μ = 5, σ = 1 from {4, 6}
        let stats = single_stp_stats(&[4.0, 6.0]);
        let m = match_score(&patient_with(5.0), &stats, 1e-6).unwrap();
        assert!((m.score - 1e6).abs() < 1e-6);
    }

    #[test]
    fn invalid_epsilon() {
        let stats = single_stp_stats(&[1.0]);
        for eps in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                match_score(&patient_with(1.0), &stats, eps),
                Err(AnalysisError::InvalidEpsilon(_))
            ));
        }
    }

    fn ranges(bounds: Option<Bounds>) -> Vec<ParameterRange> {
        StpId::all()
            .map(|stp_id| ParameterRange {
                stp_id,
                bounds,
                manual: false,
            })
            .collect()
    }

    #[test]
    fn summary_states() {
        let p = StpVector::from_values([Some(0.6); 16]).unwrap();
        assert!(graphical_summary(&p, &ranges(None))
            .unwrap()
            .iter()
            .all(|s| *s == ParamState::NoData));

        let r = ranges(Some(Bounds::new(0.6, 0.75).unwrap()));
        assert!(graphical_summary(&p, &r)
            .unwrap()
            .iter()
            .all(|s| *s == ParamState::InRange));

        let p = StpVector::from_values([Some(0.8); 16]).unwrap();
        assert!(graphical_summary(&p, &r)
            .unwrap()
            .iter()
            .all(|s| *s == ParamState::OutOfRange));

        let mut p = StpVector::from_values([Some(0.75); 16]).unwrap();
        p.set(StpId::new(4).unwrap(), None).unwrap();
        let s = graphical_summary(&p, &r).unwrap();
        assert_eq!(s[3], ParamState::NoData);
        assert_eq!(s[0], ParamState::InRange);
    }

    #[test]
    fn difference_examples() {
        let id = StpId::new(1).unwrap();
        // μ = 12, σ² = 2 ; μ = 10, σ² = 2 (population of two values)
        let s2 = 2f64.sqrt();
        let k = stats_with(id, &[12.0 - s2, 12.0 + s2]);
        let l = stats_with(id, &[10.0 - s2, 10.0 + s2]);
        let d = category_difference(&k, &l).unwrap();
        assert!((d.d - 1.0).abs() < 1e-12);
        assert_eq!(category_difference(&l, &k).unwrap().d, d.d);

        let m = stats_with(id, &[9.0, 11.0]);
        assert_eq!(category_difference(&l, &m).unwrap().d, 0.0);

        let a = stats_with(id, &[1.0]);
        let b = stats_with(id, &[2.0]);
        let d = category_difference(&a, &b).unwrap();
        assert!(d.d.is_infinite() && d.degenerate);
        let text = serde_json::to_string(&d).unwrap();
        assert!(text.contains("\"d\":null"));
        let back: CategoryDifference = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);

        assert_eq!(category_difference(&a, &a.clone()).unwrap().d, 0.0);
        assert_eq!(
            category_difference(&a, &stats_with(id, &[])),
            Err(AnalysisError::EmptyDistribution(id))
        );
    }
}
