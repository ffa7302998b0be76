//! Explicit knowledge store: gait categories with their member patients,
//! per-STP value ranges and manual range overrides.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::grf::{Gender, PatientMeta};
use crate::stats::DistributionStats;
use crate::stp::{InvalidStpId, StpId, StpVector};

pub const SCHEMA_VERSION: u32 = 1;
pub const NORM_CATEGORY_ID: &str = "norm";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EksError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("duplicate: {0}")]
    Duplicate(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid patient record: {0}")]
    InvalidRecord(String),
    #[error("inconsistent store: {0}")]
    Inconsistent(String),
}

impl From<InvalidStpId> for EksError {
    fn from(e: InvalidStpId) -> Self {
        EksError::NotFound(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub meta: PatientMeta,
    pub stps: StpVector,
    pub added_at: DateTime<Utc>,
}

/// Closed interval `[min, max]` with `min <= max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds")]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Deserialize)]
struct RawBounds {
    min: f64,
    max: f64,
}

impl TryFrom<RawBounds> for Bounds {
    type Error = EksError;

    fn try_from(raw: RawBounds) -> Result<Self, Self::Error> {
        Bounds::new(raw.min, raw.max)
    }
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Result<Bounds, EksError> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(EksError::InvalidRange(format!(
                "[{min}, {max}] is not finite"
            )));
        }
        if min > max {
            return Err(EksError::InvalidRange(format!(
                "min {min} exceeds max {max}"
            )));
        }
        Ok(Bounds { min, max })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    fn extrema(values: impl IntoIterator<Item = f64>) -> Option<Bounds> {
        values.into_iter().fold(None, |acc, v| {
            Some(match acc {
                None => Bounds { min: v, max: v },
                Some(b) => Bounds {
                    min: b.min.min(v),
                    max: b.max.max(v),
                },
            })
        })
    }
}

/// Value range of one STP in one category. `bounds` is `None` when the
/// category holds no value for the STP and no manual range was set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterRange {
    pub stp_id: StpId,
    pub bounds: Option<Bounds>,
    pub manual: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitCategory {
    pub id: String,
    pub name: String,
    pub patients: Vec<PatientRecord>,
    pub ranges: Vec<ParameterRange>,
}

impl GaitCategory {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> GaitCategory {
        GaitCategory {
            id: id.into(),
            name: name.into(),
            patients: Vec::new(),
            ranges: StpId::all()
                .map(|stp_id| ParameterRange {
                    stp_id,
                    bounds: None,
                    manual: false,
                })
                .collect(),
        }
    }

    pub fn range(&self, stp_id: StpId) -> &ParameterRange {
        &self.ranges[stp_id.index()]
    }

    pub fn has_manual_override(&self) -> bool {
        self.ranges.iter().any(|r| r.manual)
    }

    pub fn contains_patient(&self, patient_id: &str) -> bool {
        self.patients.iter().any(|p| p.meta.id == patient_id)
    }

    /// Exact extrema of the values of `stp_id` over `members`.
    fn extrema<'a>(
        members: impl IntoIterator<Item = &'a PatientRecord>,
        stp_id: StpId,
    ) -> Option<Bounds> {
        Bounds::extrema(members.into_iter().filter_map(|p| p.stps.get(stp_id)))
    }

    /// Range derived from all members, ignoring any manual override.
    pub fn auto_bounds(&self, stp_id: StpId) -> Option<Bounds> {
        GaitCategory::extrema(&self.patients, stp_id)
    }

    fn refresh_auto_ranges(&mut self) {
        for i in 0..self.ranges.len() {
            if !self.ranges[i].manual {
                let stp_id = self.ranges[i].stp_id;
                self.ranges[i].bounds = self.auto_bounds(stp_id);
            }
        }
    }

    pub fn filtered_members(&self, filter: &DemographicFilter) -> Vec<&PatientRecord> {
        self.patients
            .iter()
            .filter(|p| filter.matches(&p.meta))
            .collect()
    }

    pub fn distribution_stats(
        &self,
        stp_id: StpId,
        filter: &DemographicFilter,
    ) -> DistributionStats {
        DistributionStats::from_values(
            stp_id,
            self.patients
                .iter()
                .filter(|p| filter.matches(&p.meta))
                .filter_map(|p| p.stps.get(stp_id)),
        )
    }

    /// Stats for all sixteen STPs, indexed by `StpId::index`.
    pub fn all_stats(&self, filter: &DemographicFilter) -> Vec<DistributionStats> {
        StpId::all()
            .map(|id| self.distribution_stats(id, filter))
            .collect()
    }

    /// Ranges as seen through `filter`: manual ranges are kept as set, automatic
    /// ranges are the extrema of the filtered members. With an empty filter
    /// this equals `self.ranges`.
    pub fn effective_ranges(&self, filter: &DemographicFilter) -> Vec<ParameterRange> {
        if filter.is_empty() {
            return self.ranges.clone();
        }
        let members = self.filtered_members(filter);
        self.ranges
            .iter()
            .map(|r| {
                if r.manual {
                    *r
                } else {
                    ParameterRange {
                        stp_id: r.stp_id,
                        bounds: GaitCategory::extrema(members.iter().copied(), r.stp_id),
                        manual: false,
                    }
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<(), EksError> {
        let bad = |m: String| Err(EksError::Inconsistent(format!("category {}: {m}", self.id)));
        if self.ranges.len() != StpId::COUNT {
            return bad(format!("{} ranges, expected 16", self.ranges.len()));
        }
        for (i, r) in self.ranges.iter().enumerate() {
            if r.stp_id.index() != i {
                return bad(format!("range {} out of order", r.stp_id));
            }
            if !r.manual && r.bounds != self.auto_bounds(r.stp_id) {
                return bad(format!(
                    "automatic range {} does not match members",
                    r.stp_id
                ));
            }
        }
        let mut ids = BTreeSet::new();
        for p in &self.patients {
            p.meta
                .validate()
                .map_err(|e| EksError::InvalidRecord(e.to_string()))?;
            if !ids.insert(p.meta.id.as_str()) {
                return bad(format!("patient {} listed twice", p.meta.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeStore {
    pub schema_version: u32,
    pub norm_category: GaitCategory,
    pub pathology_categories: Vec<GaitCategory>,
}

impl Default for KnowledgeStore {
    fn default() -> Self {
        KnowledgeStore::new()
    }
}

impl KnowledgeStore {
    /// A store holding only an empty norm category.
    pub fn new() -> KnowledgeStore {
        KnowledgeStore {
            schema_version: SCHEMA_VERSION,
            norm_category: GaitCategory::new(NORM_CATEGORY_ID, "Norm"),
            pathology_categories: Vec::new(),
        }
    }

    /// Norm plus the ankle, calcaneus, hip and knee categories, all empty.
    pub fn with_default_categories() -> KnowledgeStore {
        let mut store = KnowledgeStore::new();
        for (id, name) in [
            ("ankle", "Ankle"),
            ("calcaneus", "Calcaneus"),
            ("hip", "Hip"),
            ("knee", "Knee"),
        ] {
            store.add_category(id, name).unwrap();
        }
        store
    }

    pub fn add_category(&mut self, id: &str, name: &str) -> Result<(), EksError> {
        if id.is_empty() {
            return Err(EksError::InvalidRecord("empty category id".into()));
        }
        if self.category(id).is_ok() {
            return Err(EksError::Duplicate(format!("category {id}")));
        }
        self.pathology_categories.push(GaitCategory::new(id, name));
        Ok(())
    }

    /// Norm category first, then the pathology categories in insertion order.
    pub fn categories(&self) -> impl Iterator<Item = &GaitCategory> {
        std::iter::once(&self.norm_category).chain(&self.pathology_categories)
    }

    pub fn category(&self, id: &str) -> Result<&GaitCategory, EksError> {
        self.categories()
            .find(|c| c.id == id)
            .ok_or_else(|| EksError::NotFound(format!("category {id}")))
    }

    fn category_mut(&mut self, id: &str) -> Result<&mut GaitCategory, EksError> {
        if self.norm_category.id == id {
            return Ok(&mut self.norm_category);
        }
        self.pathology_categories
            .iter_mut()
            .find(|c| c.id == id)
            .ok_or_else(|| EksError::NotFound(format!("category {id}")))
    }

    /// Adds `patient` to a category. With `subset`, only those STP values are
    /// stored. Automatic ranges are refreshed; manual ranges stay as they are.
    pub fn apply_patient(
        &mut self,
        category_id: &str,
        patient: PatientRecord,
        subset: Option<&[StpId]>,
    ) -> Result<(), EksError> {
        patient
            .meta
            .validate()
            .map_err(|e| EksError::InvalidRecord(e.to_string()))?;
        let category = self.category_mut(category_id)?;
        if category.contains_patient(&patient.meta.id) {
            return Err(EksError::Duplicate(format!(
                "patient {} in category {category_id}",
                patient.meta.id
            )));
        }
        let record = match subset {
            Some(ids) => PatientRecord {
                stps: patient.stps.restricted_to(ids),
                ..patient
            },
            None => patient,
        };
        category.patients.push(record);
        category.refresh_auto_ranges();
        Ok(())
    }

    /// Recomputes every range from the members and clears all manual flags.
    pub fn reset_category(&mut self, category_id: &str) -> Result<(), EksError> {
        let category = self.category_mut(category_id)?;
        for r in &mut category.ranges {
            r.manual = false;
        }
        category.refresh_auto_ranges();
        Ok(())
    }

    pub fn override_range(
        &mut self,
        category_id: &str,
        stp_id: StpId,
        min: f64,
        max: f64,
    ) -> Result<(), EksError> {
        let bounds = Bounds::new(min, max)?;
        let category = self.category_mut(category_id)?;
        category.ranges[stp_id.index()] = ParameterRange {
            stp_id,
            bounds: Some(bounds),
            manual: true,
        };
        Ok(())
    }

    /// Checks the structural invariants a loaded store must satisfy.
    pub fn validate(&self) -> Result<(), EksError> {
        if self.norm_category.id != NORM_CATEGORY_ID {
            return Err(EksError::Inconsistent(format!(
                "norm category id must be {NORM_CATEGORY_ID:?}"
            )));
        }
        let mut ids = BTreeSet::new();
        for c in self.categories() {
            if !ids.insert(c.id.as_str()) {
                return Err(EksError::Inconsistent(format!(
                    "category id {} repeated",
                    c.id
                )));
            }
            c.validate()?;
        }
        Ok(())
    }

    pub fn patient_count(&self) -> usize {
        self.categories().map(|c| c.patients.len()).sum()
    }
}

/// Closed numeric interval used by demographic filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Deserialize)]
struct RawInterval {
    lo: f64,
    hi: f64,
}

impl TryFrom<RawInterval> for Interval {
    type Error = FilterError;

    fn try_from(raw: RawInterval) -> Result<Self, Self::Error> {
        Interval::new(raw.lo, raw.hi)
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Interval, FilterError> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(FilterError(format!("interval [{lo}, {hi}] is invalid")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

impl std::str::FromStr for Interval {
    type Err = FilterError;

    /// Accepts `lo..hi` or a single value for a point interval.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| FilterError(format!("bad number {t:?}")))
        };
        match s.split_once("..") {
            Some((lo, hi)) => Interval::new(num(lo)?, num(hi)?),
            None => {
                let v = num(s)?;
                Interval::new(v, v)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid filter: {0}")]
pub struct FilterError(pub String);

/// Restricts which category members feed stats, ranges and matching.
/// Absent clauses do not filter; intervals are inclusive.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DemographicFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<BTreeSet<Gender>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_height_cm: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_mass_kg: Option<Interval>,
}

impl DemographicFilter {
    pub fn is_empty(&self) -> bool {
        self == &DemographicFilter::default()
    }

    pub fn matches(&self, meta: &PatientMeta) -> bool {
        self.gender
            .as_ref()
            .is_none_or(|g| g.contains(&meta.gender))
            && self.age.is_none_or(|i| i.contains(meta.age))
            && self
                .body_height_cm
                .is_none_or(|i| i.contains(meta.body_height_cm))
            && self
                .body_mass_kg
                .is_none_or(|i| i.contains(meta.body_mass_kg))
    }

    /// Applies one `key=value` clause. Keys: `gender` (comma separated list),
    /// `age`, `height`, `mass` (each `lo..hi` or a single value).
    pub fn set_clause(&mut self, key: &str, value: &str) -> Result<(), FilterError> {
        match key {
            "gender" => {
                let set = value
                    .split(',')
                    .map(|g| g.trim().parse::<Gender>().map_err(FilterError))
                    .collect::<Result<BTreeSet<_>, _>>()?;
                self.gender = Some(set);
            }
            "age" => self.age = Some(value.parse()?),
            "height" | "body_height_cm" => self.body_height_cm = Some(value.parse()?),
            "mass" | "body_mass_kg" => self.body_mass_kg = Some(value.parse()?),
            other => return Err(FilterError(format!("unknown filter key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` clauses such as `gender=female` or `age=30..40`.
    pub fn from_clauses<'a>(
        clauses: impl IntoIterator<Item = &'a str>,
    ) -> Result<DemographicFilter, FilterError> {
        let mut filter = DemographicFilter::default();
        for clause in clauses {
            let (k, v) = clause
                .split_once('=')
                .ok_or_else(|| FilterError(format!("expected key=value, got {clause:?}")))?;
            filter.set_clause(k.trim(), v.trim())?;
        }
        Ok(filter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stp::{Foot, Parameter};
    use chrono::TimeZone;

    fn stance() -> StpId {
        StpId::of(Foot::Left, Parameter::StanceTime)
    }

    fn record(id: &str, gender: Gender, age: f64, stance_s: f64) -> PatientRecord {
        let mut stps = StpVector::empty();
        stps.set(stance(), Some(stance_s)).unwrap();
        stps.set(StpId::new(2).unwrap(), Some(stance_s * 50.0))
            .unwrap();
        PatientRecord {
            meta: PatientMeta::new(id, age, 70.0, 170.0, gender).unwrap(),
            stps,
            added_at: Utc.timestamp_opt(1_500_000_000, 0).unwrap(),
        }
    }

    fn store_with(values: &[f64]) -> KnowledgeStore {
        let mut s = KnowledgeStore::with_default_categories();
        for (i, v) in values.iter().enumerate() {
            s.apply_patient(
                "ankle",
                record(&format!("p{i}"), Gender::Male, 40.0, *v),
                None,
            )
            .unwrap();
        }
        s
    }

    #[test]
    fn apply_to_empty_category_gives_point_ranges() {
        let s = store_with(&[0.64]);
        let c = s.category("ankle").unwrap();
        assert_eq!(
            c.range(stance()).bounds,
            Some(Bounds {
                min: 0.64,
                max: 0.64
            })
        );
        assert_eq!(c.range(StpId::new(5).unwrap()).bounds, None);
    }

    #[test]
    fn apply_extends_range() {
        let s = store_with(&[0.60, 0.70, 0.75]);
        let r = s.category("ankle").unwrap().range(stance()).bounds.unwrap();
        assert_eq!((r.min, r.max), (0.60, 0.75));
    }

    #[test]
    fn subset_apply_only_adds_chosen_values() {
        let mut s = store_with(&[0.60, 0.70]);
        let before = s
            .category("ankle")
            .unwrap()
            .all_stats(&DemographicFilter::default());
        s.apply_patient(
            "ankle",
            record("new", Gender::Female, 30.0, 0.9),
            Some(&[stance()]),
        )
        .unwrap();
        let after = s
            .category("ankle")
            .unwrap()
            .all_stats(&DemographicFilter::default());
        assert_eq!(after[0].n, before[0].n + 1);
        for i in 1..16 {
            assert_eq!(after[i], before[i]);
        }
    }

    #[test]
    fn apply_errors() {
        let mut s = store_with(&[0.6]);
        let before = s.clone();
        assert!(matches!(
            s.apply_patient("nope", record("x", Gender::Male, 1.0, 0.5), None),
            Err(EksError::NotFound(_))
        ));
        assert!(matches!(
            s.apply_patient("ankle", record("p0", Gender::Male, 1.0, 0.5), None),
            Err(EksError::Duplicate(_))
        ));
        assert_eq!(s, before);
    }

    #[test]
    fn reset_restores_extrema() {
        let mut s = store_with(&[0.6, 0.7]);
        let clean = s.clone();
        s.reset_category("ankle").unwrap();
        assert_eq!(s, clean);

        s.override_range("ankle", stance(), 0.0, 99.0).unwrap();
        assert!(s.category("ankle").unwrap().has_manual_override());
        s.reset_category("ankle").unwrap();
        let r = s.category("ankle").unwrap().range(stance());
        assert_eq!(r.bounds, Some(Bounds { min: 0.6, max: 0.7 }));
        assert!(!r.manual);

        s.reset_category("hip").unwrap();
        assert!(s
            .category("hip")
            .unwrap()
            .ranges
            .iter()
            .all(|r| r.bounds.is_none()));
        assert!(matches!(
            s.reset_category("nope"),
            Err(EksError::NotFound(_))
        ));
    }

    #[test]
    fn manual_range_survives_apply() {
        let mut s = store_with(&[0.6]);
        s.override_range("ankle", stance(), 0.5, 0.8).unwrap();
        s.apply_patient("ankle", record("q", Gender::Male, 50.0, 0.95), None)
            .unwrap();
        let r = s.category("ankle").unwrap().range(stance());
        assert!(r.manual);
        assert_eq!(r.bounds, Some(Bounds { min: 0.5, max: 0.8 }));
        // the other STP stays automatic
        let r2 = s.category("ankle").unwrap().range(StpId::new(2).unwrap());
        assert_eq!(r2.bounds.unwrap().max, 0.95 * 50.0);
    }

    #[test]
    fn override_validation() {
        let mut s = store_with(&[]);
        assert!(matches!(
            s.override_range("hip", stance(), 0.8, 0.5),
            Err(EksError::InvalidRange(_))
        ));
        s.override_range("hip", stance(), 0.7, 0.7).unwrap();
        assert!(EksError::from(StpId::new(0).unwrap_err())
            .to_string()
            .contains("not found"));
    }

    #[test]
    fn filters() {
        let mut s = KnowledgeStore::with_default_categories();
        let people = [
            ("a", Gender::Female, 30.0),
            ("b", Gender::Male, 30.0),
            ("c", Gender::Female, 45.0),
            ("d", Gender::Unspecified, 29.0),
        ];
        for (id, g, age) in people {
            s.apply_patient("knee", record(id, g, age, 0.6), None)
                .unwrap();
        }
        let c = s.category("knee").unwrap();
        assert_eq!(c.filtered_members(&DemographicFilter::default()).len(), 4);

        let f = DemographicFilter::from_clauses(["gender=female"]).unwrap();
        let ids: Vec<_> = c
            .filtered_members(&f)
            .iter()
            .map(|p| p.meta.id.clone())
            .collect();
        assert_eq!(ids, vec!["a", "c"]);

        let f = DemographicFilter::from_clauses(["age=30..30"]).unwrap();
        assert_eq!(c.filtered_members(&f).len(), 2);

        let f = DemographicFilter::from_clauses(["age=100..200"]).unwrap();
        assert!(c.distribution_stats(stance(), &f).is_empty());

        assert!(DemographicFilter::from_clauses(["age=40..30"]).is_err());
        assert!(DemographicFilter::from_clauses(["gender=robot"]).is_err());
        assert!(DemographicFilter::from_clauses(["shoe=42"]).is_err());
    }

    #[test]
    fn effective_ranges_follow_filter() {
        let mut s = KnowledgeStore::with_default_categories();
        s.apply_patient("hip", record("a", Gender::Female, 30.0, 0.6), None)
            .unwrap();
        s.apply_patient("hip", record("b", Gender::Male, 30.0, 0.8), None)
            .unwrap();
        s.override_range("hip", StpId::new(2).unwrap(), 1.0, 2.0)
            .unwrap();
        let c = s.category("hip").unwrap();
        let f = DemographicFilter::from_clauses(["gender=male"]).unwrap();
        let r = c.effective_ranges(&f);
        assert_eq!(r[0].bounds, Some(Bounds { min: 0.8, max: 0.8 }));
        assert_eq!(r[1].bounds, Some(Bounds { min: 1.0, max: 2.0 }));
        assert_eq!(c.effective_ranges(&DemographicFilter::default()), c.ranges);
    }

    #[test]
    fn validate_detects_tampering() {
        let mut s = store_with(&[0.6, 0.7]);
        s.validate().unwrap();
        s.pathology_categories[0].ranges[0].bounds = Some(Bounds { min: 0.0, max: 1.0 });
        assert!(matches!(s.validate(), Err(EksError::Inconsistent(_))));
    }
}
