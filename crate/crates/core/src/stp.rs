//! The sixteen spatio-temporal parameters (STPs) describing one patient's gait.
//!
//! Eight parameters are computed per foot. Ids 1..=8 belong to the left foot and
//! 9..=16 to the right foot, in the order given by [`Parameter::ALL`].

use std::fmt;

use serde::{Deserialize, Serialize};

/// Which foot a signal, step or parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foot {
    Left,
    Right,
}

impl Foot {
    pub fn opposite(self) -> Foot {
        match self {
            Foot::Left => Foot::Right,
            Foot::Right => Foot::Left,
        }
    }
}

impl fmt::Display for Foot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Foot::Left => f.write_str("left"),
            Foot::Right => f.write_str("right"),
        }
    }
}

/// A per-foot gait parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    StanceTime,
    SwingTime,
    StepTime,
    StrideTime,
    Cadence,
    WalkingSpeed,
    StepLength,
    StrideLength,
}

impl Parameter {
    pub const ALL: [Parameter; 8] = [
        Parameter::StanceTime,
        Parameter::SwingTime,
        Parameter::StepTime,
        Parameter::StrideTime,
        Parameter::Cadence,
        Parameter::WalkingSpeed,
        Parameter::StepLength,
        Parameter::StrideLength,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Parameter::StanceTime => "stance time",
            Parameter::SwingTime => "swing time",
            Parameter::StepTime => "step time",
            Parameter::StrideTime => "stride time",
            Parameter::Cadence => "cadence",
            Parameter::WalkingSpeed => "walking speed",
            Parameter::StepLength => "step length",
            Parameter::StrideLength => "stride length",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Parameter::StanceTime | Parameter::StepTime | Parameter::StrideTime => "s",
            Parameter::SwingTime => "% stride",
            Parameter::Cadence => "steps/min",
            Parameter::WalkingSpeed => "m/s",
            Parameter::StepLength | Parameter::StrideLength => "m",
        }
    }

    /// Parameters that can only be derived from spatial annotations.
    pub fn is_spatial(self) -> bool {
        matches!(
            self,
            Parameter::WalkingSpeed | Parameter::StepLength | Parameter::StrideLength
        )
    }

    fn index(self) -> usize {
        Parameter::ALL.iter().position(|p| *p == self).unwrap()
    }
}

/// Identifier of one of the sixteen STPs, always in `1..=16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct StpId(u8);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("STP id {0} is outside 1..=16")]
pub struct InvalidStpId(pub i64);

impl StpId {
    pub const COUNT: usize = 16;

    pub fn new(id: u8) -> Result<StpId, InvalidStpId> {
        if (1..=16).contains(&id) {
            Ok(StpId(id))
        } else {
            Err(InvalidStpId(id as i64))
        }
    }

    pub fn of(foot: Foot, parameter: Parameter) -> StpId {
        let base = match foot {
            Foot::Left => 1,
            Foot::Right => 9,
        };
        StpId(base + parameter.index() as u8)
    }

    pub fn all() -> impl Iterator<Item = StpId> {
        (1..=16).map(StpId)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based position in a 16-slot array.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn foot(self) -> Foot {
        if self.0 <= 8 {
            Foot::Left
        } else {
            Foot::Right
        }
    }

    pub fn parameter(self) -> Parameter {
        Parameter::ALL[(self.index()) % 8]
    }

    /// The same parameter measured on the other foot.
    pub fn mirrored(self) -> StpId {
        StpId::of(self.foot().opposite(), self.parameter())
    }

    pub fn name(self) -> String {
        format!("{} {}", self.foot(), self.parameter().label())
    }
}

impl TryFrom<u8> for StpId {
    type Error = InvalidStpId;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        StpId::new(value)
    }
}

impl From<StpId> for u8 {
    fn from(id: StpId) -> u8 {
        id.0
    }
}

impl fmt::Display for StpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One serialized entry of an [`StpVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StpEntry {
    pub stp_id: StpId,
    pub name: String,
    pub unit: String,
    pub foot: Foot,
    pub value: Option<f64>,
}

/// The sixteen STP values of one patient. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<StpEntry>", into = "Vec<StpEntry>")]
pub struct StpVector {
    values: [Option<f64>; 16],
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StpVectorError {
    #[error("expected 16 STP entries, found {0}")]
    WrongLength(usize),
    #[error("STP id {0} appears more than once")]
    DuplicateId(StpId),
    #[error("STP {0} has a non-finite value")]
    NonFinite(StpId),
}

impl StpVector {
    /// A vector with every entry missing.
    pub fn empty() -> StpVector {
        StpVector::default()
    }

    pub fn from_values(values: [Option<f64>; 16]) -> Result<StpVector, StpVectorError> {
        for id in StpId::all() {
            if matches!(values[id.index()], Some(v) if !v.is_finite()) {
                return Err(StpVectorError::NonFinite(id));
            }
        }
        Ok(StpVector { values })
    }

    pub fn get(&self, id: StpId) -> Option<f64> {
        self.values[id.index()]
    }

    pub fn set(&mut self, id: StpId, value: Option<f64>) -> Result<(), StpVectorError> {
        if matches!(value, Some(v) if !v.is_finite()) {
            return Err(StpVectorError::NonFinite(id));
        }
        self.values[id.index()] = value;
        Ok(())
    }

    pub fn values(&self) -> &[Option<f64>; 16] {
        &self.values
    }

    /// Keeps only the listed ids; every other entry becomes missing.
    pub fn restricted_to(&self, keep: &[StpId]) -> StpVector {
        let mut out = StpVector::empty();
        for id in keep {
            out.values[id.index()] = self.values[id.index()];
        }
        out
    }

    pub fn entries(&self) -> Vec<StpEntry> {
        StpId::all()
            .map(|id| StpEntry {
                stp_id: id,
                name: id.name(),
                unit: id.parameter().unit().to_string(),
                foot: id.foot(),
                value: self.values[id.index()],
            })
            .collect()
    }
}

impl TryFrom<Vec<StpEntry>> for StpVector {
    type Error = StpVectorError;

    fn try_from(entries: Vec<StpEntry>) -> Result<Self, Self::Error> {
        if entries.len() != StpId::COUNT {
            return Err(StpVectorError::WrongLength(entries.len()));
        }
        let mut seen = [false; 16];
        let mut values = [None; 16];
        for entry in entries {
            let i = entry.stp_id.index();
            if seen[i] {
                return Err(StpVectorError::DuplicateId(entry.stp_id));
            }
            seen[i] = true;
            values[i] = entry.value;
        }
        StpVector::from_values(values)
    }
}

impl From<StpVector> for Vec<StpEntry> {
    fn from(v: StpVector) -> Vec<StpEntry> {
        v.entries()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_map_to_foot_and_parameter() {
        assert_eq!(StpId::of(Foot::Left, Parameter::StanceTime).get(), 1);
        assert_eq!(StpId::of(Foot::Right, Parameter::StanceTime).get(), 9);
        assert_eq!(StpId::of(Foot::Right, Parameter::StrideLength).get(), 16);
        for id in StpId::all() {
            assert_eq!(StpId::of(id.foot(), id.parameter()), id);
            assert_eq!(id.mirrored().mirrored(), id);
        }
    }

    #[test]
    fn out_of_range_ids_rejected() {
        assert!(StpId::new(0).is_err());
        assert!(StpId::new(17).is_err());
        assert!(serde_json::from_str::<StpId>("17").is_err());
    }

    #[test]
    fn vector_requires_sixteen_distinct_entries() {
        let mut entries = StpVector::empty().entries();
        entries.pop();
        assert_eq!(
            StpVector::try_from(entries.clone()),
            Err(StpVectorError::WrongLength(15))
        );
        entries.push(entries[0].clone());
        assert!(matches!(
            StpVector::try_from(entries),
            Err(StpVectorError::DuplicateId(_))
        ));
    }

    #[test]
    fn serde_round_trip() {
        let mut v = StpVector::empty();
        v.set(StpId::new(3).unwrap(), Some(0.55)).unwrap();
        let text = serde_json::to_string(&v).unwrap();
        let back: StpVector = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
    }
}
