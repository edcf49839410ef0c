//! Edit distances, per-transition accuracy and significance tests.

mod report;

pub use report::{ModelScores, MetricsReport, PairedComparison, TransitionCell};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::seqmodels::PredictionSampleSet;
use crate::synthgen::Window;
use crate::{Error, Result};

/// Unit-cost insert/delete/substitute distance.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Reference horizon (seconds) that normalized distances are scaled to.
pub const REFERENCE_HORIZON: usize = 15;

/// `levenshtein(a, b) * reference_len / T_f`.
pub fn normalized_ld(a: &[usize], b: &[usize], reference_len: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!(
            "normalized_ld: lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Invalid("normalized_ld: empty horizon".into()));
    }
    Ok(levenshtein(a, b) as f64 * reference_len as f64 / a.len() as f64)
}

/// How the `N_s` samples of a window are credited for a transition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HitMode {
    /// Any sample containing the new phase in time counts.
    #[default]
    AnySample,
    /// Only the sample closest to the ground truth in edit distance counts.
    BestTrajectory,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LdMode {
    /// Mean over samples, then over windows.
    #[default]
    AllSamplesMean,
    /// Best sample per window, then mean over windows.
    BestOfSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Segment {
    Overall,
    /// Windows whose future contains a phase change.
    TransitionsOnly,
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Overall => "overall",
            Segment::TransitionsOnly => "transitions-only",
        }
    }
}

fn check_pairing(sets: &[PredictionSampleSet], windows: &[Window]) -> Result<()> {
    if sets.len() != windows.len() {
        return Err(Error::Invalid(format!(
            "{} prediction sets for {} windows",
            sets.len(),
            windows.len()
        )));
    }
    for (s, w) in sets.iter().zip(windows) {
        if s.is_empty() {
            return Err(Error::Invalid(format!("{} t0={}: empty prediction set", w.video_id, w.t0)));
        }
        if s.samples.iter().any(|x| x.len() != w.t_future()) {
            return Err(Error::Invalid(format!(
                "{} t0={}: predictions do not span {} s",
                w.video_id,
                w.t0,
                w.t_future()
            )));
        }
    }
    Ok(())
}

/// Whether a transition to `to` at future index 0 is caught within `delta`
/// seconds by the window's predictions.
pub fn transition_hit(set: &PredictionSampleSet, gt_future: &[usize], to: usize, delta: usize, mode: HitMode) -> bool {
    let contains = |s: &Vec<usize>| s.iter().take(delta + 1).any(|&l| l == to);
    match mode {
        HitMode::AnySample => set.samples.iter().any(contains),
        HitMode::BestTrajectory => set
            .samples
            .iter()
            .min_by_key(|s| levenshtein(s, gt_future))
            .is_some_and(contains),
    }
}

/// Hits and totals per destination phase over transition-anchored windows
/// (the change happens at the first future second).
pub fn per_transition_accuracy(
    sets: &[PredictionSampleSet],
    windows: &[Window],
    n_phases: usize,
    delta: usize,
    mode: HitMode,
) -> Result<Vec<TransitionCell>> {
    if delta == 0 {
        return Err(Error::Invalid("per_transition_accuracy: delta must be > 0".into()));
    }
    check_pairing(sets, windows)?;
    let mut cells = vec![TransitionCell::default(); n_phases];
    for (s, w) in sets.iter().zip(windows) {
        let from = *w.past_labels.last().expect("non-empty past");
        let to = w.future_labels[0];
        if from == to {
            return Err(Error::Invalid(format!(
                "{} t0={}: window is not anchored at a transition",
                w.video_id, w.t0
            )));
        }
        let cell = cells
            .get_mut(to)
            .ok_or_else(|| Error::Invalid(format!("phase {to} out of range")))?;
        cell.total += 1;
        cell.hits += usize::from(transition_hit(s, &w.future_labels, to, delta, mode));
    }
    Ok(cells)
}

/// Per-window edit distance under `mode`.
pub fn window_ld(set: &PredictionSampleSet, gt: &[usize], mode: LdMode) -> f64 {
    let lds = set.samples.iter().map(|s| levenshtein(s, gt));
    match mode {
        LdMode::AllSamplesMean => lds.sum::<usize>() as f64 / set.len() as f64,
        LdMode::BestOfSamples => lds.min().unwrap_or(0) as f64,
    }
}

/// Mean per-window edit distance over the chosen segment.
pub fn avg_ld(sets: &[PredictionSampleSet], windows: &[Window], mode: LdMode, segment: Segment) -> Result<f64> {
    check_pairing(sets, windows)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (s, w) in sets.iter().zip(windows) {
        if segment == Segment::TransitionsOnly && !w.has_future_transition() {
            continue;
        }
        sum += window_ld(s, &w.future_labels, mode);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Invalid(format!("avg_ld: no windows in segment '{}'", segment.as_str())));
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// Paired two-sided t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Invalid("paired_t_test: samples differ in length".into()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Invalid("paired_t_test: need at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::Invalid("paired_t_test: differences have zero variance".into()));
    }
    let t = mean / (var / n as f64).sqrt();
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Invalid(e.to_string()))?;
    let p = 2.0 * dist.cdf(-t.abs());
    Ok(TTest { t, p, df })
}

/// Order-sensitive digest of the windows' identities and horizons.
pub fn window_set_hash(windows: &[Window]) -> String {
    let mut h = Sha256::new();
    for w in windows {
        h.update(format!("{}\t{}\t{}\t{}\n", w.video_id, w.t0, w.t_past(), w.t_future()).as_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    fn window(past: Vec<usize>, future: Vec<usize>) -> Window {
        Window {
            video_id: "v".into(),
            t0: past.len() - 1,
            past_features: Tensor::zeros(past.len(), 1),
            past_labels: past,
            future_labels: future,
        }
    }

    fn set(samples: Vec<Vec<usize>>) -> PredictionSampleSet {
        PredictionSampleSet::from_labels(samples, 4)
    }

    #[test]
    fn kitten_sitting() {
        let enc = |s: &str| s.bytes().map(usize::from).collect::<Vec<_>>();
        assert_eq!(levenshtein(&enc("kitten"), &enc("sitting")), 3);
        assert_eq!(levenshtein(&[], &[1, 2, 3]), 3);
        assert_eq!(levenshtein(&[1, 2], &[1, 2]), 0);
    }

    #[test]
    fn normalized_scaling() {
        let a = vec![0; 15];
        let mut b = a.clone();
        b[..4].fill(1);
        assert_eq!(normalized_ld(&a, &b, 15).unwrap(), 4.0);
        let a30 = vec![0; 30];
        let mut b30 = a30.clone();
        b30[..8].fill(1);
        assert_eq!(normalized_ld(&a30, &b30, 15).unwrap(), 4.0);
        let a10 = vec![0; 10];
        let mut b10 = a10.clone();
        b10[..2].fill(1);
        assert_eq!(normalized_ld(&a10, &b10, 15).unwrap(), 3.0);
        assert!(normalized_ld(&[], &[], 15).is_err());
    }

    #[test]
    fn hit_rule_hand_case() {
        let w = window(vec![0, 0], vec![0, 0, 1, 1]);
        let s = set(vec![vec![0, 1, 1, 1]]);
        assert!(transition_hit(&s, &w.future_labels, 1, 15, HitMode::AnySample));
        assert!(!transition_hit(&s, &w.future_labels, 2, 15, HitMode::AnySample));
        // Outside the delta window.
        let late = set(vec![vec![0, 0, 0, 1]]);
        assert!(!transition_hit(&late, &w.future_labels, 1, 2, HitMode::AnySample));
    }

    #[test]
    fn perfect_predictions_score_everything() {
        let ws = vec![window(vec![0, 0], vec![1, 1, 1]), window(vec![1, 1], vec![2, 2, 3])];
        let sets: Vec<_> = ws.iter().map(|w| set(vec![w.future_labels.clone()])).collect();
        for mode in [HitMode::AnySample, HitMode::BestTrajectory] {
            let cells = per_transition_accuracy(&sets, &ws, 4, 15, mode).unwrap();
            assert_eq!(cells[1], TransitionCell { hits: 1, total: 1 });
            assert_eq!(cells[2], TransitionCell { hits: 1, total: 1 });
            assert_eq!(cells[0].total, 0);
        }
        assert_eq!(avg_ld(&sets, &ws, LdMode::AllSamplesMean, Segment::Overall).unwrap(), 0.0);
        assert_eq!(avg_ld(&sets, &ws, LdMode::BestOfSamples, Segment::TransitionsOnly).unwrap(), 0.0);
    }

    #[test]
    fn best_trajectory_mode_checks_only_the_closest_sample() {
        let w = window(vec![0, 0], vec![1, 1, 2, 2]);
        // Distance 2 without the new phase vs distance 4 with it.
        let s = set(vec![vec![2, 2, 2, 2], vec![0, 0, 0, 1]]);
        assert!(transition_hit(&s, &w.future_labels, 1, 15, HitMode::AnySample));
        assert!(!transition_hit(&s, &w.future_labels, 1, 15, HitMode::BestTrajectory));
        let s = set(vec![vec![0, 0, 0, 0], vec![1, 2, 2, 2]]);
        assert!(transition_hit(&s, &w.future_labels, 1, 15, HitMode::BestTrajectory));
    }

    #[test]
    fn constant_predictions_never_hit() {
        let ws = vec![window(vec![0, 0], vec![1, 1, 1]), window(vec![2, 2], vec![3, 3, 3])];
        let sets: Vec<_> = ws
            .iter()
            .map(|w| set(vec![vec![*w.past_labels.last().unwrap(); 3]]))
            .collect();
        let cells = per_transition_accuracy(&sets, &ws, 4, 15, HitMode::AnySample).unwrap();
        assert!(cells.iter().all(|c| c.hits == 0));
    }

    #[test]
    fn non_transition_window_and_bad_delta_are_rejected() {
        let ws = vec![window(vec![0, 0], vec![0, 1, 1])];
        let sets = vec![set(vec![vec![0, 1, 1]])];
        assert!(per_transition_accuracy(&sets, &ws, 4, 15, HitMode::AnySample).is_err());
        let ws = vec![window(vec![0, 0], vec![1, 1, 1])];
        assert!(per_transition_accuracy(&sets, &ws, 4, 0, HitMode::AnySample).is_err());
    }

    #[test]
    fn avg_ld_arithmetic_and_segments() {
        let ws = vec![window(vec![0], vec![0, 0, 0, 0]), window(vec![0], vec![0, 0, 0, 0])];
        let sets = vec![set(vec![vec![1, 1, 0, 0]]), set(vec![vec![1, 1, 1, 1]])];
        assert_eq!(avg_ld(&sets, &ws, LdMode::AllSamplesMean, Segment::Overall).unwrap(), 3.0);
        let err = avg_ld(&sets, &ws, LdMode::AllSamplesMean, Segment::TransitionsOnly)
            .unwrap_err()
            .to_string();
        assert!(err.contains("transitions-only"), "{err}");
    }

    #[test]
    fn t_test_hand_example() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = paired_t_test(&a, &[0.0; 5]).unwrap();
        assert!((r.t - 3.0 / (2.5f64.sqrt() / 5f64.sqrt())).abs() < 1e-12);
        assert!((r.t - 4.2426).abs() < 1e-3);
        assert_eq!(r.df, 4);
        // scipy.stats.ttest_rel([1, 2, 3, 4, 5], [0] * 5).pvalue
        assert!((r.p - 0.013235599563682695).abs() < 1e-9, "{}", r.p);
    }

    #[test]
    fn t_test_degenerate_inputs() {
        assert!(paired_t_test(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(paired_t_test(&[2.0; 4], &[1.0; 4]).is_err());
        assert!(paired_t_test(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn window_hash_tracks_identity() {
        let a = vec![window(vec![0], vec![1]), window(vec![0, 0], vec![1])];
        let mut b = a.clone();
        assert_eq!(window_set_hash(&a), window_set_hash(&b));
        b[1].t0 = 7;
        assert_ne!(window_set_hash(&a), window_set_hash(&b));
    }

    /// Top-down memoized recursion over suffixes.
    fn oracle(a: &[usize], b: &[usize]) -> usize {
        fn go(a: &[usize], b: &[usize], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
            if let Some(v) = memo[i][j] {
                return v;
            }
            let v = if i == a.len() {
                b.len() - j
            } else if j == b.len() {
                a.len() - i
            } else {
                let sub = go(a, b, i + 1, j + 1, memo) + usize::from(a[i] != b[j]);
                let del = go(a, b, i + 1, j, memo) + 1;
                let ins = go(a, b, i, j + 1, memo) + 1;
                sub.min(del).min(ins)
            };
            memo[i][j] = Some(v);
            v
        }
        let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
        go(a, b, 0, 0, &mut memo)
    }

    fn all_sequences(max_len: usize, alphabet: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        let mut frontier = vec![vec![]];
        for _ in 0..max_len {
            let mut next = vec![];
            for s in &frontier {
                for c in 0..alphabet {
                    let mut t: Vec<usize> = s.clone();
                    t.push(c);
                    next.push(t);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    #[test]
    fn matches_recursive_oracle_on_short_sequences() {
        let seqs = all_sequences(4, 3);
        for a in &seqs {
            for b in &seqs {
                assert_eq!(levenshtein(a, b), oracle(a, b), "{a:?} {b:?}");
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn labels() -> impl Strategy<Value = Vec<usize>> {
            proptest::collection::vec(0usize..4, 0..12)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn levenshtein_is_a_metric(a in labels(), b in labels(), c in labels()) {
                let ab = levenshtein(&a, &b);
                prop_assert_eq!(ab, levenshtein(&b, &a));
                prop_assert_eq!(ab == 0, a == b);
                prop_assert!(levenshtein(&a, &c) <= ab + levenshtein(&b, &c));
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn accuracy_is_invariant_to_relabeling(
                gt in proptest::collection::vec((0usize..4, 1usize..4), 4),
                preds in proptest::collection::vec(proptest::collection::vec(0usize..4, 5), 4 * 3),
                perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
            ) {
                let ws: Vec<Window> = gt
                    .iter()
                    .map(|&(from, step)| window(vec![from; 2], vec![(from + step) % 4; 5]))
                    .collect();
                let sets: Vec<PredictionSampleSet> = preds.chunks(3).map(|c| set(c.to_vec())).collect();
                let relabel = |v: &[usize]| v.iter().map(|&l| perm[l]).collect::<Vec<_>>();
                let ws2: Vec<Window> = ws
                    .iter()
                    .map(|w| window(relabel(&w.past_labels), relabel(&w.future_labels)))
                    .collect();
                let sets2: Vec<PredictionSampleSet> = sets
                    .iter()
                    .map(|s| set(s.samples.iter().map(|x| relabel(x)).collect()))
                    .collect();
                for mode in [HitMode::AnySample, HitMode::BestTrajectory] {
                    let a = per_transition_accuracy(&sets, &ws, 4, 15, mode).unwrap();
                    let b = per_transition_accuracy(&sets2, &ws2, 4, 15, mode).unwrap();
                    for q in 0..4 {
                        prop_assert_eq!(a[q], b[perm[q]]);
                    }
                }
            }

            #[test]
            fn best_of_is_at_most_mean_and_shrinks_with_more_samples(
                gt in proptest::collection::vec(0usize..3, 6),
                preds in proptest::collection::vec(proptest::collection::vec(0usize..3, 6), 1..6),
                extra in proptest::collection::vec(0usize..3, 6),
            ) {
                let w = vec![window(vec![0], gt)];
                let s = vec![set(preds.clone())];
                let best = avg_ld(&s, &w, LdMode::BestOfSamples, Segment::Overall).unwrap();
                let mean = avg_ld(&s, &w, LdMode::AllSamplesMean, Segment::Overall).unwrap();
                prop_assert!(best <= mean + 1e-12);
                let mut more = preds;
                more.push(extra);
                let best2 = avg_ld(&[set(more)], &w, LdMode::BestOfSamples, Segment::Overall).unwrap();
                prop_assert!(best2 <= best);
            }

            #[test]
            fn normalized_equals_raw_at_reference_horizon(
                a in proptest::collection::vec(0usize..3, 15),
                b in proptest::collection::vec(0usize..3, 15),
            ) {
                prop_assert_eq!(normalized_ld(&a, &b, REFERENCE_HORIZON).unwrap(), levenshtein(&a, &b) as f64);
            }
        }
    }
}
