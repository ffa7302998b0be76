//! Deterministic synthetic cohorts and force-plate trials for testing and demos.
//!
//! Each STP of a cohort member is drawn independently from a normal
//! distribution. A category moves every parameter's mean by `shift_sd` norm
//! standard deviations along that parameter's pathological direction and scales
//! the spread by `sd_scale`.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::eks::{EksError, KnowledgeStore, PatientRecord, NORM_CATEGORY_ID};
use crate::grf::{Gender, PatientMeta, RawTrial, SpatialMeta, G0};
use crate::stp::{Foot, Parameter, StpId, StpVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub parameter: Parameter,
    pub mean: f64,
    pub sd: f64,
    /// +1 or -1: the direction in which pathology moves this parameter.
    pub direction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub id: String,
    pub name: String,
    pub shift_sd: f64,
    pub sd_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub seed: u64,
    pub norm_count: usize,
    pub per_category: usize,
    pub norm: Vec<ParamSpec>,
    pub categories: Vec<CategorySpec>,
}

impl Default for CohortConfig {
    fn default() -> Self {
        use Parameter::*;
        let spec = |parameter, mean, sd, direction| ParamSpec {
            parameter,
            mean,
            sd,
            direction,
        };
        let category = |id: &str, name: &str, shift_sd, sd_scale| CategorySpec {
            id: id.into(),
            name: name.into(),
            shift_sd,
            sd_scale,
        };
        CohortConfig {
            seed: 1,
            norm_count: 489,
            per_category: 50,
            norm: vec![
                spec(StanceTime, 0.62, 0.02, 1.0),
                spec(SwingTime, 41.5, 1.0, -1.0),
                spec(StepTime, 0.53, 0.015, 1.0),
                spec(StrideTime, 1.06, 0.03, 1.0),
                spec(Cadence, 113.0, 3.0, -1.0),
                spec(WalkingSpeed, 1.32, 0.05, -1.0),
                spec(StepLength, 0.70, 0.025, -1.0),
                spec(StrideLength, 1.40, 0.05, -1.0),
            ],
            categories: vec![
                category("ankle", "Ankle", 8.0, 1.1),
                category("calcaneus", "Calcaneus", 16.0, 1.2),
                category("hip", "Hip", -8.0, 1.1),
                category("knee", "Knee", -16.0, 1.2),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CohortError {
    #[error("invalid cohort config: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] EksError),
}

/// Per-parameter (mean, sd) of one category.
pub type CategoryModel = Vec<(Parameter, f64, f64)>;

impl CohortConfig {
    pub fn validate(&self) -> Result<(), CohortError> {
        for p in Parameter::ALL {
            let n = self.norm.iter().filter(|s| s.parameter == p).count();
            if n != 1 {
                return Err(CohortError::Config(format!(
                    "parameter {} must be specified exactly once",
                    p.label()
                )));
            }
        }
        for s in &self.norm {
            if !(s.mean.is_finite() && s.sd.is_finite() && s.sd >= 0.0) {
                return Err(CohortError::Config(format!(
                    "bad spec for {}",
                    s.parameter.label()
                )));
            }
        }
        for c in &self.categories {
            if c.id == NORM_CATEGORY_ID || c.id.is_empty() {
                return Err(CohortError::Config(format!("bad category id {:?}", c.id)));
            }
            if !(c.shift_sd.is_finite() && c.sd_scale.is_finite() && c.sd_scale >= 0.0) {
                return Err(CohortError::Config(format!("bad shift/scale for {}", c.id)));
            }
        }
        Ok(())
    }

    /// Generating model of the norm category (`None`) or a pathology category.
    pub fn model(&self, category: Option<&CategorySpec>) -> CategoryModel {
        Parameter::ALL
            .iter()
            .map(|p| {
                let s = self.norm.iter().find(|s| s.parameter == *p).unwrap();
                match category {
                    None => (*p, s.mean, s.sd),
                    Some(c) => (
                        *p,
                        s.mean + c.shift_sd * s.sd * s.direction,
                        s.sd * c.sd_scale,
                    ),
                }
            })
            .collect()
    }
}

fn base_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2016, 10, 1, 8, 0, 0).unwrap()
}

fn sample_meta(rng: &mut ChaCha8Rng, id: String) -> PatientMeta {
    let gender = if rng.random_bool(0.5) {
        Gender::Female
    } else {
        Gender::Male
    };
    let age = rng.random_range(18..=80) as f64;
    let height = Normal::new(172.0_f64, 9.0)
        .unwrap()
        .sample(rng)
        .clamp(140.0, 205.0);
    let mass = Normal::new(72.0_f64, 12.0)
        .unwrap()
        .sample(rng)
        .clamp(40.0, 140.0);
    // round to the precision a clinic would record
    let height = (height * 10.0).round() / 10.0;
    let mass = (mass * 10.0).round() / 10.0;
    PatientMeta::new(id, age, mass, height, gender).expect("sampled metadata is valid")
}

fn sample_stps(rng: &mut ChaCha8Rng, model: &CategoryModel) -> StpVector {
    let mut v = StpVector::empty();
    for foot in [Foot::Left, Foot::Right] {
        for (p, mean, sd) in model {
            let x = if *sd > 0.0 {
                Normal::new(*mean, *sd).unwrap().sample(rng)
            } else {
                *mean
            };
            v.set(StpId::of(foot, *p), Some(x)).unwrap();
        }
    }
    v
}

/// Builds the store described by `config`: the norm category plus one
/// category per [`CategorySpec`], filled with sampled patients.
pub fn synth_store(config: &CohortConfig) -> Result<KnowledgeStore, CohortError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = KnowledgeStore::new();
    for c in &config.categories {
        store.add_category(&c.id, &c.name)?;
    }
    let mut serial = 0i64;
    let groups = std::iter::once((NORM_CATEGORY_ID.to_string(), None, config.norm_count)).chain(
        config
            .categories
            .iter()
            .map(|c| (c.id.clone(), Some(c), config.per_category)),
    );
    for (category_id, spec, count) in groups {
        let model = config.model(spec);
        for i in 0..count {
            let meta = sample_meta(&mut rng, format!("{category_id}-{:04}", i + 1));
            let stps = sample_stps(&mut rng, &model);
            serial += 1;
            let record = PatientRecord {
                meta,
                stps,
                added_at: base_time() + Duration::seconds(serial),
            };
            store.apply_patient(&category_id, record, None)?;
        }
    }
    Ok(store)
}

/// Target gait timing and geometry for a synthesized trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitShape {
    pub stance_left_s: f64,
    pub stance_right_s: f64,
    pub stride_s: f64,
    /// Time from a left contact to the following right contact.
    pub step_right_s: f64,
    pub step_length_left_m: f64,
    pub step_length_right_m: f64,
    pub stride_length_m: f64,
    pub strides: usize,
    pub sample_rate_hz: f64,
}

impl GaitShape {
    /// A shape reproducing the temporal and spatial means of a category model.
    pub fn from_model(model: &CategoryModel, strides: usize) -> GaitShape {
        let get = |p: Parameter| model.iter().find(|(q, _, _)| *q == p).unwrap().1;
        let stride = get(Parameter::StrideTime);
        GaitShape {
            stance_left_s: get(Parameter::StanceTime),
            stance_right_s: get(Parameter::StanceTime),
            stride_s: stride,
            step_right_s: stride / 2.0,
            step_length_left_m: get(Parameter::StepLength),
            step_length_right_m: get(Parameter::StepLength),
            stride_length_m: get(Parameter::StrideLength),
            strides,
            sample_rate_hz: 1000.0,
        }
    }
}

/// Double-hump vertical force profile over one stance, `u` in [0, 1], in BW.
fn stance_profile(u: f64) -> f64 {
    use std::f64::consts::PI;
    1.25 * ((PI * u).sin() + 0.25 * (3.0 * PI * u).sin())
}

/// Fraction of the nominal stance at each end that lies below `level` BW.
fn sub_threshold_margin(level: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 0.25);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if stance_profile(mid) > level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Synthesizes a two-plate vertical force trial with the given timing.
/// `contact_fraction` is the detection threshold the nominal stance is
/// stretched for, so that detected stance times match the shape.
pub fn synth_trial(
    patient: PatientMeta,
    shape: &GaitShape,
    contact_fraction: f64,
    seed: u64,
) -> RawTrial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = shape.sample_rate_hz;
    let bw = patient.body_mass_kg * G0;
    let margin = sub_threshold_margin(contact_fraction);
    let lead_in = 0.25;
    let total_s = lead_in
        + shape.strides as f64 * shape.stride_s
        + shape.step_right_s
        + shape.stance_left_s.max(shape.stance_right_s) * 1.2
        + 0.25;
    let n = (total_s * rate).ceil() as usize;
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];

    let mut contacts = Vec::new();
    for k in 0..shape.strides {
        let t_left = lead_in + k as f64 * shape.stride_s;
        contacts.push((t_left, Foot::Left));
        contacts.push((t_left + shape.step_right_s, Foot::Right));
    }

    let noise = Normal::new(1.0, 0.02).unwrap();
    for &(t, foot) in &contacts {
        let (stance, signal) = match foot {
            Foot::Left => (shape.stance_left_s, &mut left),
            Foot::Right => (shape.stance_right_s, &mut right),
        };
        let nominal = stance / (1.0 - 2.0 * margin);
        let begin = t - margin * nominal;
        let gain = noise.sample(&mut rng);
        let first = (begin * rate).floor().max(0.0) as usize;
        let last = (((begin + nominal) * rate).ceil() as usize).min(n - 1);
        for (i, slot) in signal.iter_mut().enumerate().take(last + 1).skip(first) {
            let u = (i as f64 / rate - begin) / nominal;
            if (0.0..=1.0).contains(&u) {
                *slot = (stance_profile(u) * gain * bw).max(0.0);
            }
        }
    }

    contacts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let step_length_m = contacts
        .iter()
        .map(|(_, f)| match f {
            Foot::Left => shape.step_length_left_m,
            Foot::Right => shape.step_length_right_m,
        })
        .collect();
    let stride_length_m = contacts.iter().map(|_| shape.stride_length_m).collect();

    RawTrial {
        patient,
        left_samples: left,
        right_samples: right,
        sample_rate_hz: rate,
        spatial: Some(SpatialMeta {
            step_length_m,
            stride_length_m,
        }),
    }
}

/// One demo trial per category of `config`, shaped after the category model.
pub fn sample_trials(config: &CohortConfig, contact_fraction: f64) -> Vec<(String, RawTrial)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6961_6c73);
    let groups = std::iter::once((NORM_CATEGORY_ID.to_string(), None))
        .chain(config.categories.iter().map(|c| (c.id.clone(), Some(c))));
    groups
        .map(|(id, spec)| {
            let meta = sample_meta(&mut rng, format!("probe-{id}"));
            let shape = GaitShape::from_model(&config.model(spec), 10);
            let seed = rng.random();
            (id, synth_trial(meta, &shape, contact_fraction, seed))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grf::{process_trial, SegmentationConfig};

    #[test]
    fn store_shape_and_determinism() {
        let config = CohortConfig {
            norm_count: 30,
            per_category: 5,
            ..CohortConfig::default()
        };
        let a = synth_store(&config).unwrap();
        let b = synth_store(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.norm_category.patients.len(), 30);
        assert_eq!(a.pathology_categories.len(), 4);
        assert!(a.pathology_categories.iter().all(|c| c.patients.len() == 5));
        a.validate().unwrap();
        let other = synth_store(&CohortConfig { seed: 2, ..config }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn bad_config_rejected() {
        let mut config = CohortConfig::default();
        config.norm.pop();
        assert!(matches!(synth_store(&config), Err(CohortError::Config(_))));
        let mut config = CohortConfig::default();
        config.categories[0].id = NORM_CATEGORY_ID.into();
        assert!(synth_store(&config).is_err());
    }

    #[test]
    fn synthesized_trial_recovers_timing() {
        let model = CohortConfig::default().model(None);
        let shape = GaitShape::from_model(&model, 10);
        let meta = PatientMeta::new("t", 40.0, 75.0, 175.0, Gender::Male).unwrap();
        let trial = synth_trial(meta, &shape, 0.05, 9);
        let p = process_trial(trial, &SegmentationConfig::default()).unwrap();
        assert_eq!(p.left_segments.len(), 10);
        assert_eq!(p.right_segments.len(), 10);
        let get = |f, q| p.stps.get(StpId::of(f, q)).unwrap();
        for foot in [Foot::Left, Foot::Right] {
            assert!((get(foot, Parameter::StanceTime) - 0.62).abs() < 0.003);
            assert!((get(foot, Parameter::StrideTime) - 1.06).abs() < 0.002);
            assert!((get(foot, Parameter::StepTime) - 0.53).abs() < 0.002);
            assert!((get(foot, Parameter::StrideLength) - 1.40).abs() < 1e-12);
            assert!((get(foot, Parameter::WalkingSpeed) - 1.40 / 1.06).abs() < 0.01);
        }
        let g = &p.left_graph;
        assert!(g.mean_curve.values.iter().cloned().fold(0.0, f64::max) > 1.0);
    }
}
