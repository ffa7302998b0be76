//! Vertical ground reaction force processing: step segmentation, amplitude and
//! time normalization, consistency graphs and STP extraction.

use serde::{Deserialize, Serialize};

use crate::stp::{Foot, Parameter, StpId, StpVector};

/// Standard gravity in m/s².
pub const G0: f64 = 9.80665;

/// Number of samples in a time-normalized stance curve (0%..=100%).
pub const CURVE_LEN: usize = 101;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrfError {
    #[error("invalid trial: {0}")]
    InvalidTrial(String),
    #[error("invalid patient metadata: {0}")]
    InvalidPatientMeta(String),
    #[error("step segment has {0} samples, at least 2 are required")]
    DegenerateSegment(usize),
    #[error("no steps detected")]
    NoSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Unspecified,
}

impl std::fmt::Display for Gender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Unspecified => "unspecified",
        })
    }
}

impl std::str::FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "female" => Ok(Gender::Female),
            "male" => Ok(Gender::Male),
            "unspecified" => Ok(Gender::Unspecified),
            other => Err(format!("unknown gender {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPatientMeta")]
pub struct PatientMeta {
    pub id: String,
    pub age: f64,
    pub body_mass_kg: f64,
    pub body_height_cm: f64,
    pub gender: Gender,
}

#[derive(Deserialize)]
struct RawPatientMeta {
    id: String,
    age: f64,
    body_mass_kg: f64,
    body_height_cm: f64,
    gender: Gender,
}

impl TryFrom<RawPatientMeta> for PatientMeta {
    type Error = GrfError;

    fn try_from(raw: RawPatientMeta) -> Result<Self, Self::Error> {
        PatientMeta::new(
            raw.id,
            raw.age,
            raw.body_mass_kg,
            raw.body_height_cm,
            raw.gender,
        )
    }
}

impl PatientMeta {
    pub fn new(
        id: impl Into<String>,
        age: f64,
        body_mass_kg: f64,
        body_height_cm: f64,
        gender: Gender,
    ) -> Result<PatientMeta, GrfError> {
        let meta = PatientMeta {
            id: id.into(),
            age,
            body_mass_kg,
            body_height_cm,
            gender,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), GrfError> {
        let bad = |what: &str| Err(GrfError::InvalidPatientMeta(what.to_string()));
        if self.id.is_empty() {
            return bad("empty patient id");
        }
        if !(self.age.is_finite() && self.age >= 0.0) {
            return bad("age must be a finite value >= 0");
        }
        if !(self.body_mass_kg.is_finite() && self.body_mass_kg > 0.0) {
            return bad("body mass must be a finite value > 0");
        }
        if !(self.body_height_cm.is_finite() && self.body_height_cm > 0.0) {
            return bad("body height must be a finite value > 0");
        }
        Ok(())
    }

    /// Body weight in newtons.
    pub fn body_weight_n(&self) -> f64 {
        self.body_mass_kg * G0
    }
}

/// Per-step spatial annotations recorded alongside the force signals.
///
/// Entry `k` of each list annotates the step that ends at the `k`-th initial
/// contact of the trial, counting contacts of both feet in chronological order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpatialMeta {
    #[serde(default)]
    pub step_length_m: Vec<f64>,
    #[serde(default)]
    pub stride_length_m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTrial {
    pub patient: PatientMeta,
    pub left_samples: Vec<f64>,
    pub right_samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub spatial: Option<SpatialMeta>,
}

impl RawTrial {
    pub fn validate(&self) -> Result<(), GrfError> {
        self.patient.validate()?;
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(GrfError::InvalidTrial("sample rate must be > 0".into()));
        }
        for (foot, samples) in [
            (Foot::Left, &self.left_samples),
            (Foot::Right, &self.right_samples),
        ] {
            if samples.is_empty() {
                return Err(GrfError::InvalidTrial(format!(
                    "{foot} force stream is empty"
                )));
            }
            if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
                return Err(GrfError::InvalidTrial(format!(
                    "{foot} force sample {i} is not finite"
                )));
            }
        }
        if let Some(spatial) = &self.spatial {
            let all = spatial.step_length_m.iter().chain(&spatial.stride_length_m);
            if all.into_iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(GrfError::InvalidTrial(
                    "spatial annotations must be finite and non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn samples(&self, foot: Foot) -> &[f64] {
        match foot {
            Foot::Left => &self.left_samples,
            Foot::Right => &self.right_samples,
        }
    }
}

/// Step detection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Contact threshold as a fraction of body weight.
    pub contact_fraction: f64,
    /// Contacts shorter than this are discarded as noise.
    pub min_stance_s: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            contact_fraction: 0.05,
            min_stance_s: 0.1,
        }
    }
}

/// One stance phase. `end_index` is inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSegment {
    pub foot: Foot,
    pub start_index: usize,
    pub end_index: usize,
    pub samples: Vec<f64>,
}

impl StepSegment {
    pub fn duration_s(&self, sample_rate_hz: f64) -> f64 {
        self.samples.len() as f64 / sample_rate_hz
    }

    pub fn start_time_s(&self, sample_rate_hz: f64) -> f64 {
        self.start_index as f64 / sample_rate_hz
    }
}

/// Finds the stance phases of one foot: maximal runs of samples strictly above
/// `contact_fraction · body weight`, ordered by start index.
pub fn segment_steps(
    trial: &RawTrial,
    foot: Foot,
    config: &SegmentationConfig,
) -> Result<Vec<StepSegment>, GrfError> {
    let samples = trial.samples(foot);
    if samples.is_empty() {
        return Err(GrfError::InvalidTrial(format!(
            "{foot} force stream is empty"
        )));
    }
    if !(trial.sample_rate_hz.is_finite() && trial.sample_rate_hz > 0.0) {
        return Err(GrfError::InvalidTrial("sample rate must be > 0".into()));
    }
    trial.patient.validate()?;

    let threshold = config.contact_fraction * trial.patient.body_weight_n();

    let mut segments = Vec::new();
    let mut start = None;
    for i in 0..=samples.len() {
        let above = i < samples.len() && samples[i] > threshold;
        match (above, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let len = i - s;
                // tolerance so that 100 samples at 1000 Hz count as exactly 0.1 s
                let duration = len as f64 / trial.sample_rate_hz;
                if len >= 2 && duration >= config.min_stance_s - 1e-12 {
                    segments.push(StepSegment {
                        foot,
                        start_index: s,
                        end_index: i - 1,
                        samples: samples[s..i].to_vec(),
                    });
                }
                start = None;
            }
            _ => {}
        }
    }
    Ok(segments)
}

/// Divides every force sample by `body_mass · g0`.
pub fn amplitude_normalize(samples: &[f64], body_mass_kg: f64) -> Result<Vec<f64>, GrfError> {
    if !(body_mass_kg.is_finite() && body_mass_kg > 0.0) {
        return Err(GrfError::InvalidPatientMeta(
            "body mass must be a finite value > 0".into(),
        ));
    }
    let bw = body_mass_kg * G0;
    Ok(samples.iter().map(|s| s / bw).collect())
}

/// One stance phase resampled to 101 points, in units of body weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedStepCurve {
    pub foot: Foot,
    pub values: Vec<f64>,
}

impl NormalizedStepCurve {
    pub fn new(foot: Foot, values: Vec<f64>) -> Result<NormalizedStepCurve, GrfError> {
        if values.len() != CURVE_LEN {
            return Err(GrfError::InvalidTrial(format!(
                "normalized curve must have {CURVE_LEN} samples, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(GrfError::InvalidTrial(
                "normalized curve values must be finite and non-negative".into(),
            ));
        }
        Ok(NormalizedStepCurve { foot, values })
    }
}

/// Linear resampling of `values` onto `CURVE_LEN` equally spaced points.
fn resample_101(values: &[f64]) -> Vec<f64> {
    let last = values.len() - 1;
    (0..CURVE_LEN)
        .map(|t| {
            let pos = (t * last) as f64 / 100.0;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = pos - lo as f64;
            if frac == 0.0 {
                values[lo]
            } else {
                values[lo] + (values[hi] - values[lo]) * frac
            }
        })
        .collect()
}

pub fn time_normalize(
    segment: &StepSegment,
    body_mass_kg: f64,
) -> Result<NormalizedStepCurve, GrfError> {
    if segment.samples.len() < 2 {
        return Err(GrfError::DegenerateSegment(segment.samples.len()));
    }
    let normalized = amplitude_normalize(&segment.samples, body_mass_kg)?;
    NormalizedStepCurve::new(segment.foot, resample_101(&normalized))
}

/// All normalized steps of one foot together with their pointwise mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyGraph {
    pub foot: Foot,
    pub step_curves: Vec<NormalizedStepCurve>,
    pub mean_curve: NormalizedStepCurve,
}

pub fn build_consistency_graph(
    segments: &[StepSegment],
    body_mass_kg: f64,
) -> Result<ConsistencyGraph, GrfError> {
    let first = segments.first().ok_or(GrfError::NoSteps)?;
    let step_curves = segments
        .iter()
        .map(|s| time_normalize(s, body_mass_kg))
        .collect::<Result<Vec<_>, _>>()?;
    let n = step_curves.len() as f64;
    let mean = (0..CURVE_LEN)
        .map(|t| step_curves.iter().map(|c| c.values[t]).sum::<f64>() / n)
        .collect();
    Ok(ConsistencyGraph {
        foot: first.foot,
        step_curves,
        mean_curve: NormalizedStepCurve::new(first.foot, mean)?,
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Per-foot spatial values attributed from the chronological contact list.
fn spatial_by_foot(values: &[f64], contacts: &[(usize, Foot)], foot: Foot) -> Option<f64> {
    let own: Vec<f64> = values
        .iter()
        .zip(contacts)
        .filter(|(_, (_, f))| *f == foot)
        .map(|(v, _)| *v)
        .collect();
    mean(&own)
}

/// Derives the sixteen STPs from the segmented stance phases of both feet.
///
/// Temporal values need at least two contacts of the same foot (stride) or a
/// preceding contact of the opposite foot (step). Spatial values come only from
/// `trial.spatial`. Anything that cannot be derived stays missing.
pub fn compute_stps(trial: &RawTrial, left: &[StepSegment], right: &[StepSegment]) -> StpVector {
    let rate = trial.sample_rate_hz;
    let mut out = StpVector::empty();

    let mut contacts: Vec<(usize, Foot)> = left
        .iter()
        .chain(right)
        .map(|s| (s.start_index, s.foot))
        .collect();
    contacts.sort();

    for (foot, segs) in [(Foot::Left, left), (Foot::Right, right)] {
        let mut set = |p: Parameter, v: Option<f64>| {
            // every value here is a ratio of finite, positive quantities
            out.set(StpId::of(foot, p), v.filter(|x| x.is_finite()))
                .unwrap();
        };

        let stance = mean(&segs.iter().map(|s| s.duration_s(rate)).collect::<Vec<_>>());
        let stride = mean(
            &segs
                .windows(2)
                .map(|w| (w[1].start_index - w[0].start_index) as f64 / rate)
                .collect::<Vec<_>>(),
        );

        // step ending at each contact of this foot, started by the latest
        // opposite-foot contact after the previous contact of this foot
        let mut steps = Vec::new();
        let mut prev_own: Option<usize> = None;
        for &(idx, f) in &contacts {
            if f != foot {
                continue;
            }
            let opposite = contacts
                .iter()
                .filter(|(j, g)| *g != foot && *j < idx && prev_own.is_none_or(|p| *j > p))
                .map(|(j, _)| *j)
                .max();
            if let Some(j) = opposite {
                steps.push((idx - j) as f64 / rate);
            }
            prev_own = Some(idx);
        }
        let step = mean(&steps);

        set(Parameter::StanceTime, stance);
        set(Parameter::StrideTime, stride);
        set(Parameter::StepTime, step);
        set(
            Parameter::SwingTime,
            stride.zip(stance).map(|(st, sa)| (st - sa) / st * 100.0),
        );
        set(Parameter::Cadence, step.map(|s| 60.0 / s));

        if let Some(spatial) = &trial.spatial {
            let step_len = spatial_by_foot(&spatial.step_length_m, &contacts, foot);
            let stride_len = spatial_by_foot(&spatial.stride_length_m, &contacts, foot);
            set(Parameter::StepLength, step_len);
            set(Parameter::StrideLength, stride_len);
            set(
                Parameter::WalkingSpeed,
                stride_len.zip(stride).map(|(len, t)| len / t),
            );
        }
    }
    out
}

/// Everything derived from one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedTrial {
    pub trial: RawTrial,
    pub left_segments: Vec<StepSegment>,
    pub right_segments: Vec<StepSegment>,
    pub left_graph: ConsistencyGraph,
    pub right_graph: ConsistencyGraph,
    pub stps: StpVector,
}

/// Segments both feet, builds both consistency graphs and computes the STPs.
/// Fails with [`GrfError::NoSteps`] when either foot has no stance phase.
pub fn process_trial(
    trial: RawTrial,
    config: &SegmentationConfig,
) -> Result<ProcessedTrial, GrfError> {
    trial.validate()?;
    let left_segments = segment_steps(&trial, Foot::Left, config)?;
    let right_segments = segment_steps(&trial, Foot::Right, config)?;
    let mass = trial.patient.body_mass_kg;
    let left_graph = build_consistency_graph(&left_segments, mass)?;
    let right_graph = build_consistency_graph(&right_segments, mass)?;
    let stps = compute_stps(&trial, &left_segments, &right_segments);
    Ok(ProcessedTrial {
        trial,
        left_segments,
        right_segments,
        left_graph,
        right_graph,
        stps,
    })
}
