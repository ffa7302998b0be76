//! Distribution summaries of one STP over a set of patients.

use serde::{Deserialize, Serialize};

use crate::stp::StpId;

/// Box-plot summary plus the raw member values (sorted ascending).
///
/// `std_dev` is the population standard deviation (divide by `n`), so a
/// singleton distribution has `std_dev == 0`. Quartiles are Tukey hinges.
/// The summary is absent when `n == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub stp_id: StpId,
    pub n: usize,
    pub summary: Option<Summary>,
    pub raw_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn variance(&self) -> f64 {
        self.std_dev * self.std_dev
    }
}

impl DistributionStats {
    /// Summarizes `values`. Non-finite inputs are a caller bug; STP vectors
    /// reject them at construction.
    pub fn from_values(stp_id: StpId, values: impl IntoIterator<Item = f64>) -> DistributionStats {
        let mut raw: Vec<f64> = values.into_iter().collect();
        raw.sort_by(f64::total_cmp);
        let n = raw.len();
        let summary = (n > 0).then(|| {
            let rough = raw.iter().sum::<f64>() / n as f64;
            let mean = rough + raw.iter().map(|v| v - rough).sum::<f64>() / n as f64;
            let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let (q1, median, q3) = tukey_hinges(&raw);
            Summary {
                mean,
                std_dev: if n == 1 { 0.0 } else { var.sqrt() },
                min: raw[0],
                q1,
                median,
                q3,
                max: raw[n - 1],
            }
        });
        DistributionStats {
            stp_id,
            n,
            summary,
            raw_values: raw,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mean(&self) -> Option<f64> {
        self.summary.map(|s| s.mean)
    }

    pub fn std_dev(&self) -> Option<f64> {
        self.summary.map(|s| s.std_dev)
    }
}

fn median_of_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Lower hinge, median, upper hinge of a sorted non-empty slice. For odd `n`
/// the median belongs to both halves.
fn tukey_hinges(sorted: &[f64]) -> (f64, f64, f64) {
    let n = sorted.len();
    let half = n.div_ceil(2);
    let lower = &sorted[..half];
    let upper = &sorted[n - half..];
    (
        median_of_sorted(lower),
        median_of_sorted(sorted),
        median_of_sorted(upper),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id() -> StpId {
        StpId::new(1).unwrap()
    }

    #[test]
    fn singleton() {
        let s = DistributionStats::from_values(id(), [5.0]).summary.unwrap();
        assert_eq!(s.mean, 5.0);
        assert_eq!(s.std_dev, 0.0);
        assert_eq!(
            (s.min, s.q1, s.median, s.q3, s.max),
            (5.0, 5.0, 5.0, 5.0, 5.0)
        );
    }

    #[test]
    fn one_to_five() {
        let s = DistributionStats::from_values(id(), [4.0, 2.0, 5.0, 1.0, 3.0])
            .summary
            .unwrap();
        assert_eq!(s.mean, 3.0);
        assert!((s.std_dev - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
    }

    #[test]
    fn even_count_hinges() {
        // halves {1,2,3} and {4,5,6}
        let s = DistributionStats::from_values(id(), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
            .summary
            .unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.5, 5.0));
    }

    #[test]
    fn empty_has_no_summary() {
        let s = DistributionStats::from_values(id(), []);
        assert!(s.is_empty());
        assert_eq!(s.summary, None);
    }

    proptest! {
        #[test]
        fn ordered_and_permutation_invariant(
            mut values in prop::collection::vec(-1e3f64..1e3, 1..40),
            seed in any::<u64>(),
        ) {
            let a = DistributionStats::from_values(id(), values.clone());
            let s = a.summary.unwrap();
            prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
            prop_assert!(s.std_dev >= 0.0);
            // rotate and reverse as cheap permutations
            let k = (seed as usize) % values.len();
            values.rotate_left(k);
            values.reverse();
            let b = DistributionStats::from_values(id(), values);
            prop_assert_eq!(a, b);
        }
    }
}
