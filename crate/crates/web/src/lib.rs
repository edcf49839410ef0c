//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export returns an SVG string (or plain numbers) so the page needs no
//! drawing code of its own.

use std::fmt::Write as _;

use phasecast::baselines::hmm_predict;
use phasecast::diffcore::{Tape, Tensor};
use phasecast::harness::timeline::{phase_color, segments};
use phasecast::seeded_rng;
use phasecast::seqmodels::gumbel_softmax;
use phasecast::synthgen::{sample_trajectory, WorkflowGraph};
use wasm_bindgen::prelude::*;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `n` sampled procedures from a built-in workflow graph, one bar per video
/// on a shared time axis.
pub fn trajectories(graph: &str, n: usize, seed: u64) -> Result<String, String> {
    let g = WorkflowGraph::builtin(graph).ok_or_else(|| format!("unknown graph '{graph}'"))?;
    if n == 0 || n > 50 {
        return Err("between 1 and 50 videos".into());
    }
    let mut rng = seeded_rng(seed);
    let seqs = (0..n)
        .map(|i| sample_trajectory(&g, &format!("v{i}"), &mut rng).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let longest = seqs.iter().map(|s| s.len()).max().unwrap_or(1).max(1);
    let (left, width, band) = (40.0, 720.0, 14.0);
    let sx = (width - left - 10.0) / longest as f64;
    let legend_top = 20.0 + n as f64 * (band + 4.0) + 10.0;
    let height = legend_top + 16.0 * g.n_phases() as f64;
    let mut s = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(s, r#"<text x="{left}" y="12">0 s</text><text x="{}" y="12" text-anchor="end">{longest} s</text>"#, width - 10.0);
    for (i, seq) in seqs.iter().enumerate() {
        let y = 20.0 + i as f64 * (band + 4.0);
        let _ = write!(s, r#"<text x="4" y="{:.1}">{}</text>"#, y + 11.0, i + 1);
        for (p, a, b) in segments(&seq.labels) {
            let _ = write!(
                s,
                r#"<rect x="{:.2}" y="{y:.1}" width="{:.2}" height="{band}" fill="{}"><title>{}: {a}-{b} s</title></rect>"#,
                left + a as f64 * sx,
                (b - a) as f64 * sx,
                phase_color(p),
                escape(&g.phases[p])
            );
        }
    }
    for (p, name) in g.phases.iter().enumerate() {
        let y = legend_top + 16.0 * p as f64;
        let _ = write!(
            s,
            r#"<rect x="{left}" y="{y:.1}" width="10" height="10" fill="{}"/><text x="{}" y="{:.1}">{}</text>"#,
            phase_color(p),
            left + 16.0,
            y + 9.0,
            escape(name)
        );
    }
    s.push_str("</svg>");
    Ok(s)
}

/// Mean relaxed sample and argmax frequencies over `draws` Gumbel-Softmax
/// draws, concatenated: the first `k` values are the mean soft vector, the
/// next `k` the hard frequencies.
pub fn gumbel_stats(logits: &[f64], tau: f64, draws: usize, seed: u64) -> Result<Vec<f64>, String> {
    let k = logits.len();
    if k < 2 || draws == 0 {
        return Err("need at least two logits and one draw".into());
    }
    let mut rows = Tensor::zeros(draws, k);
    for r in 0..draws {
        rows.data_mut()[r * k..(r + 1) * k].copy_from_slice(logits);
    }
    let mut tape = Tape::new();
    let l = tape.constant(rows);
    let s = gumbel_softmax(&mut tape, l, tau, &mut seeded_rng(seed)).map_err(|e| e.to_string())?;
    let soft = tape.value(s.soft);
    let mut out = vec![0.0; 2 * k];
    for r in 0..draws {
        for j in 0..k {
            out[j] += soft.get(r, j) / draws as f64;
        }
        out[k + s.hard[r]] += 1.0 / draws as f64;
    }
    Ok(out)
}

/// Left-to-right chain where every state keeps itself with probability
/// `stay` and otherwise moves to the next one; the last state is absorbing.
pub fn chain(n_states: usize, stay: f64) -> Vec<Vec<f64>> {
    (0..n_states)
        .map(|i| {
            let mut row = vec![0.0; n_states];
            if i + 1 == n_states {
                row[i] = 1.0;
            } else {
                row[i] = stay;
                row[i + 1] = 1.0 - stay;
            }
            row
        })
        .collect()
}

/// State distribution over a roll-out of [`chain`] from a known start
/// state, drawn as a heat map, with the HMM baseline's label path marked.
pub fn hmm_rollout(n_states: usize, stay: f64, horizon: usize) -> Result<String, String> {
    if !(2..=12).contains(&n_states) || !(0.0..=1.0).contains(&stay) || !(1..=120).contains(&horizon) {
        return Err("need 2-12 states, stay in [0, 1], horizon 1-120".into());
    }
    let a = chain(n_states, stay);
    let mut start = vec![0.0; n_states];
    start[0] = 1.0;
    let path = hmm_predict(&start, &a, horizon);
    let mut dist = start;
    let (left, cell_w, cell_h) = (30.0, (680.0 / horizon as f64).min(24.0), 18.0);
    let width = left + cell_w * horizon as f64 + 10.0;
    let height = 20.0 + cell_h * n_states as f64 + 10.0;
    let mut s = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="10">"#
    );
    for i in 0..n_states {
        let _ = write!(s, r#"<text x="4" y="{:.1}">s{i}</text>"#, 20.0 + cell_h * (i as f64 + 0.7));
    }
    for (t, &label) in path.iter().enumerate() {
        dist = (0..n_states).map(|j| (0..n_states).map(|i| dist[i] * a[i][j]).sum()).collect();
        let x = left + cell_w * t as f64;
        for (i, p) in dist.iter().enumerate() {
            let y = 20.0 + cell_h * i as f64;
            let _ = write!(
                s,
                r#"<rect x="{x:.2}" y="{y:.1}" width="{cell_w:.2}" height="{cell_h}" fill="{}" fill-opacity="{p:.3}"><title>t+{}: P(s{i}) = {p:.3}</title></rect>"#,
                phase_color(i),
                t + 1
            );
        }
        let _ = write!(
            s,
            r#"<circle cx="{:.2}" cy="{:.1}" r="3" fill="black"/>"#,
            x + cell_w / 2.0,
            20.0 + cell_h * (label as f64 + 0.5)
        );
    }
    let _ = write!(s, r#"<text x="{left}" y="12">t+1 ... t+{horizon} s (dots: predicted labels)</text></svg>"#);
    Ok(s)
}

#[wasm_bindgen(js_name = sampleTrajectories)]
pub fn sample_trajectories_js(graph: &str, n: u32, seed: u32) -> Result<String, JsError> {
    trajectories(graph, n as usize, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = gumbelStats)]
pub fn gumbel_stats_js(logits: &[f64], tau: f64, draws: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    gumbel_stats(logits, tau, draws as usize, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = hmmRollout)]
pub fn hmm_rollout_js(n_states: u32, stay: f64, horizon: u32) -> Result<String, JsError> {
    hmm_rollout(n_states as usize, stay, horizon as usize).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_svg_has_one_row_per_video() {
        let svg = trajectories("mgh12", 4, 1).unwrap();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>"));
        assert_eq!(svg.matches(r#"<text x="4""#).count(), 4);
        assert!(trajectories("nope", 4, 1).is_err());
    }

    #[test]
    fn gumbel_frequencies_sum_to_one() {
        let v = gumbel_stats(&[0.0, 1.0, 2.0], 0.5, 2000, 3).unwrap();
        assert!((v[..3].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((v[3..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(v[5] > v[4] && v[4] > v[3]);
    }

    #[test]
    fn chain_rows_are_stochastic() {
        for row in chain(5, 0.9) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let svg = hmm_rollout(4, 0.5, 10).unwrap();
        assert_eq!(svg.matches("<circle").count(), 10);
    }
}
