use serde::{Deserialize, Serialize};

use crate::audio_dsp::OnsetPeaks;
use crate::error::{Error, Result};

/// Outcome of symmetric tolerance matching between two peak sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Peaks of `A` with some peak of `B` within tolerance.
    pub matched_a: usize,
    /// Peaks of `B` with some peak of `A` within tolerance.
    pub matched_b: usize,
    pub n_a: usize,
    pub n_b: usize,
    /// Number of distinct time values in `A ∪ B`.
    pub n_union: usize,
    pub delta_s: f64,
}

/// Counts, on each side, the peaks that have a partner on the other side
/// within `delta_s`, with one sorted two-pointer pass per side.
pub fn match_peaks(a: &OnsetPeaks, b: &OnsetPeaks, delta_s: f64) -> Result<MatchResult> {
    if !(delta_s >= 0.0) {
        return Err(Error::invalid(format!("tolerance must be >= 0, got {delta_s}")));
    }
    Ok(MatchResult {
        matched_a: count_covered(a.times(), b.times(), delta_s),
        matched_b: count_covered(b.times(), a.times(), delta_s),
        n_a: a.len(),
        n_b: b.len(),
        n_union: union_size(a.times(), b.times()),
        delta_s,
    })
}

fn count_covered(xs: &[f64], ys: &[f64], delta: f64) -> usize {
    let mut j = 0;
    let mut count = 0;
    for &x in xs {
        // skip partners that are too early for this and every later x
        while j < ys.len() && x - ys[j] > delta {
            j += 1;
        }
        if j < ys.len() && (x - ys[j]).abs() <= delta {
            count += 1;
        }
    }
    count
}

fn union_size(xs: &[f64], ys: &[f64]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < xs.len() || j < ys.len() {
        match (xs.get(i), ys.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => i += 1,
            (Some(_), None) => i += 1,
            _ => j += 1,
        }
        n += 1;
    }
    n
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// `(matched_a + matched_b) / (n_a + n_b)`.
    #[default]
    F1,
    /// `(matched_a + matched_b) / (2 |A ∪ B|)` with the union over distinct
    /// time values.
    Paper,
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(ScoreMode::F1),
            "paper" => Ok(ScoreMode::Paper),
            other => Err(Error::Usage(format!("unknown score mode `{other}` (expected f1 or paper)"))),
        }
    }
}

impl std::fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreMode::F1 => "f1",
            ScoreMode::Paper => "paper",
        })
    }
}

/// Normalized CycleSync score in `[0, 1]`. Two empty sets score 1; exactly
/// one empty set scores 0.
pub fn cyclesync_score(m: &MatchResult, mode: ScoreMode) -> f64 {
    match (m.n_a, m.n_b) {
        (0, 0) => return 1.0,
        (0, _) | (_, 0) => return 0.0,
        _ => {}
    }
    let hits = (m.matched_a + m.matched_b) as f64;
    match mode {
        ScoreMode::F1 => hits / (m.n_a + m.n_b) as f64,
        ScoreMode::Paper => hits / (2 * m.n_union) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Rng;
    use proptest::prelude::*;

    fn peaks(v: &[f64]) -> OnsetPeaks {
        OnsetPeaks::new(v.to_vec()).unwrap()
    }

    /// O(n^2) reference for the indicator sums.
    fn brute(a: &[f64], b: &[f64], delta: f64) -> (usize, usize) {
        let cover = |xs: &[f64], ys: &[f64]| xs.iter().filter(|&&x| ys.iter().any(|&y| (x - y).abs() <= delta)).count();
        (cover(a, b), cover(b, a))
    }

    #[test]
    fn identical_sets_fully_match() {
        let a = peaks(&[0.1, 0.4, 1.3]);
        let m = match_peaks(&a, &a, 0.05).unwrap();
        assert_eq!((m.matched_a, m.matched_b), (3, 3));
        assert_eq!(cyclesync_score(&m, ScoreMode::F1), 1.0);
        assert_eq!(cyclesync_score(&m, ScoreMode::Paper), 1.0);
    }

    #[test]
    fn hand_example() {
        let m = match_peaks(&peaks(&[0.10, 0.50, 0.90]), &peaks(&[0.11, 0.70]), 0.05).unwrap();
        assert_eq!((m.matched_a, m.matched_b), (1, 1));
        assert_eq!(m.n_union, 5);
        assert_eq!(cyclesync_score(&m, ScoreMode::F1), 0.4);
        assert_eq!(cyclesync_score(&m, ScoreMode::Paper), 0.2);
    }

    #[test]
    fn gap_beyond_tolerance() {
        let m = match_peaks(&peaks(&[0.1]), &peaks(&[0.3]), 0.05).unwrap();
        assert_eq!((m.matched_a, m.matched_b), (0, 0));
    }

    #[test]
    fn empty_conventions() {
        let e = OnsetPeaks::empty();
        let m = match_peaks(&e, &e, 0.05).unwrap();
        assert_eq!(cyclesync_score(&m, ScoreMode::F1), 1.0);
        let m = match_peaks(&e, &peaks(&[0.2]), 0.05).unwrap();
        assert_eq!(cyclesync_score(&m, ScoreMode::F1), 0.0);
        assert_eq!(cyclesync_score(&m, ScoreMode::Paper), 0.0);
    }

    #[test]
    fn negative_tolerance_rejected() {
        assert!(match_peaks(&OnsetPeaks::empty(), &OnsetPeaks::empty(), -0.1).is_err());
    }

    #[test]
    fn thousand_random_instances_match_brute_force() {
        let mut rng = Rng::new(2024);
        for case in 0..1000 {
            let delta = if case % 2 == 0 { 0.005 } else { 0.05 };
            let draw = |rng: &mut Rng| {
                let n = rng.int_in(0, 50);
                OnsetPeaks::from_unsorted((0..n).map(|_| rng.uniform_in(0.0, 2.0)).collect()).unwrap()
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let m = match_peaks(&a, &b, delta).unwrap();
            assert_eq!((m.matched_a, m.matched_b), brute(a.times(), b.times(), delta), "case {case}");
        }
    }

    fn arb_peaks() -> impl Strategy<Value = OnsetPeaks> {
        prop::collection::vec(0.0f64..2.0, 0..30).prop_map(|v| OnsetPeaks::from_unsorted(v).unwrap())
    }

    proptest! {
        #[test]
        fn f1_is_symmetric_and_bounded(a in arb_peaks(), b in arb_peaks(), delta in 0.0f64..0.2) {
            let ab = match_peaks(&a, &b, delta).unwrap();
            let ba = match_peaks(&b, &a, delta).unwrap();
            let s = cyclesync_score(&ab, ScoreMode::F1);
            prop_assert_eq!(s, cyclesync_score(&ba, ScoreMode::F1));
            prop_assert!((0.0..=1.0).contains(&s));
            let full = ab.matched_a == ab.n_a && ab.matched_b == ab.n_b;
            prop_assert_eq!(s == 1.0, full);
        }

        #[test]
        fn score_monotone_in_tolerance(a in arb_peaks(), b in arb_peaks(), d1 in 0.0f64..0.2, d2 in 0.0f64..0.2) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            for mode in [ScoreMode::F1, ScoreMode::Paper] {
                let s_lo = cyclesync_score(&match_peaks(&a, &b, lo).unwrap(), mode);
                let s_hi = cyclesync_score(&match_peaks(&a, &b, hi).unwrap(), mode);
                prop_assert!(s_lo <= s_hi);
            }
        }
    }
}
