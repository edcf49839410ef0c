use rand::Rng as _;

use super::graph::{DurationModel, WorkflowGraph};
use super::PhaseSequence;
use crate::{Error, Result, Rng};

/// Hard cap on synthetic procedure length in seconds.
pub const MAX_TRAJECTORY_SECONDS: usize = 1_000_000;

pub fn draw_duration(model: DurationModel, rng: &mut Rng) -> usize {
    match model {
        DurationModel::Uniform([lo, hi]) => rng.random_range(lo..=hi) as usize,
        DurationModel::Geometric(mean) => {
            if mean <= 1.0 {
                return 1;
            }
            let p = 1.0 / mean;
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            1 + (u.ln() / (1.0 - p).ln()).floor() as usize
        }
    }
}

/// Index drawn from `weights` (assumed to sum to 1).
pub(crate) fn draw_categorical(weights: impl Iterator<Item = f64>, rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Semi-Markov roll-out of a procedure at 1 Hz, from the start phase until a
/// terminal phase has run its duration.
pub fn sample_trajectory(graph: &WorkflowGraph, video_id: &str, rng: &mut Rng) -> Result<PhaseSequence> {
    graph.validate()?;
    let mut labels = Vec::new();
    let mut phase = graph.start;
    loop {
        let d = draw_duration(graph.durations[phase], rng);
        labels.extend(std::iter::repeat_n(phase, d));
        if labels.len() > MAX_TRAJECTORY_SECONDS {
            return Err(Error::Invalid(format!(
                "graph '{}' produced a trajectory longer than {MAX_TRAJECTORY_SECONDS} s",
                graph.name
            )));
        }
        if graph.is_terminal(phase) {
            break;
        }
        let succ = &graph.successors[phase];
        let k = draw_categorical(succ.iter().map(|(_, p)| *p), rng);
        phase = succ[k].0;
    }
    Ok(PhaseSequence {
        video_id: video_id.to_string(),
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn linear_fixed_durations_are_deterministic() {
        let g = WorkflowGraph::linear(&[10, 10, 10]);
        let s = sample_trajectory(&g, "v", &mut seeded_rng(0)).unwrap();
        let expected: Vec<usize> = [0; 10].into_iter().chain([1; 10]).chain([2; 10]).collect();
        assert_eq!(s.labels, expected);
    }

    #[test]
    fn geometric_durations_have_the_requested_mean() {
        let mut rng = seeded_rng(4);
        let n = 20_000;
        let mean = 12.0;
        let total: usize = (0..n)
            .map(|_| draw_duration(DurationModel::Geometric(mean), &mut rng))
            .sum();
        let est = total as f64 / n as f64;
        // sd of a geometric with p = 1/12 is sqrt(1-p)/p ~ 11.5
        let se = (1.0f64 - 1.0 / mean).sqrt() * mean / (n as f64).sqrt();
        assert!((est - mean).abs() < 4.0 * se, "{est}");
    }

    #[test]
    fn trajectories_end_in_terminal_and_use_only_graph_edges() {
        let g = super::super::graph::mgh12();
        let mut rng = seeded_rng(7);
        for i in 0..50 {
            let s = sample_trajectory(&g, &format!("v{i}"), &mut rng).unwrap();
            assert_eq!(s.labels[0], g.start);
            assert!(g.is_terminal(*s.labels.last().unwrap()));
            for w in s.labels.windows(2) {
                if w[0] != w[1] {
                    assert!(g.edge_probability(w[0], w[1]) > 0.0);
                }
            }
        }
    }
}
