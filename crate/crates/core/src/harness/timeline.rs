//! Timeline figures: the ground-truth phase band over past and future, and a
//! few sampled futures below it.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;

use crate::seqmodels::PredictionSampleSet;
use crate::synthgen::Window;
use crate::{Error, Result, Rng};

/// Most sampled futures drawn in one figure.
pub const MAX_PLOTTED_SAMPLES: usize = 3;

const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f",
    "#bab0ac", "#1b9e77", "#7570b3",
];

const WIDTH: f64 = 760.0;
const LEFT: f64 = 90.0;
const BAND: f64 = 22.0;
const GAP: f64 = 10.0;

pub fn phase_color(phase: usize) -> &'static str {
    PALETTE[phase % PALETTE.len()]
}

/// Runs of equal labels as `(phase, start, end)` with `end` exclusive.
pub fn segments(labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out: Vec<(usize, usize, usize)> = vec![];
    for (t, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(s) if s.0 == l => s.2 = t + 1,
            _ => out.push((l, t, t + 1)),
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG for one window. Seconds are counted from the window start, so the
/// future begins at `T_p`. Every bar carries `data-phase`, `data-start` and
/// `data-end`.
pub fn timeline_svg(window: &Window, set: &PredictionSampleSet, phase_names: &[String], samples: &[usize]) -> Result<String> {
    let (tp, tf) = (window.t_past(), window.t_future());
    if samples.len() > MAX_PLOTTED_SAMPLES {
        return Err(Error::Invalid(format!("at most {MAX_PLOTTED_SAMPLES} samples per figure")));
    }
    if let Some(&bad) = samples.iter().find(|&&i| i >= set.len()) {
        return Err(Error::Invalid(format!("sample {bad} out of range ({} samples)", set.len())));
    }
    if set.samples.iter().any(|s| s.len() != tf) {
        return Err(Error::Invalid("sample length differs from the window's future".into()));
    }
    let total = (tp + tf) as f64;
    let sx = (WIDTH - LEFT - 10.0) / total;
    let x = |t: usize| LEFT + t as f64 * sx;
    let used: std::collections::BTreeSet<usize> = window
        .past_labels
        .iter()
        .chain(&window.future_labels)
        .chain(samples.iter().flat_map(|&i| &set.samples[i]))
        .copied()
        .collect();
    let rows = 1 + samples.len();
    let legend_y = 30.0 + rows as f64 * (BAND + GAP) + 10.0;
    let height = legend_y + 18.0 * used.len() as f64 + 10.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<title>{} at t={}: past {tp} s, future {tf} s</title>"#,
        escape(&window.video_id),
        window.t0
    );
    let band = |s: &mut String, row: usize, label: &str, class: &str, labels: &[usize], offset: usize| {
        let y = 30.0 + row as f64 * (BAND + GAP);
        let _ = writeln!(s, r#"<g class="{class}">"#);
        let _ = writeln!(s, r#"<text x="4" y="{:.1}">{}</text>"#, y + BAND * 0.7, escape(label));
        for (p, a, b) in segments(labels) {
            let name = phase_names.get(p).map_or_else(|| p.to_string(), |n| escape(n));
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{y:.1}" width="{:.2}" height="{BAND}" fill="{}" data-phase="{p}" data-start="{}" data-end="{}"><title>{name}: {}-{} s</title></rect>"#,
                x(a + offset),
                (b - a) as f64 * sx,
                phase_color(p),
                a + offset,
                b + offset,
                a + offset,
                b + offset,
            );
        }
        let _ = writeln!(s, "</g>");
    };
    let gt: Vec<usize> = window.past_labels.iter().chain(&window.future_labels).copied().collect();
    band(&mut s, 0, "ground truth", "ground-truth", &gt, 0);
    for (r, &i) in samples.iter().enumerate() {
        band(&mut s, r + 1, &format!("sample {i}"), "sample", &set.samples[i], tp);
    }
    let y_end = 30.0 + rows as f64 * (BAND + GAP) - GAP;
    let _ = writeln!(
        s,
        r#"<line class="t0" x1="{0:.2}" y1="22" x2="{0:.2}" y2="{y_end:.1}" stroke="black" stroke-width="1.5" data-t="{tp}"/>"#,
        x(tp)
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="16" text-anchor="middle">now</text>"#, x(tp));
    for (k, p) in used.iter().enumerate() {
        let y = legend_y + 18.0 * k as f64;
        let name = phase_names.get(*p).map_or_else(|| p.to_string(), |n| escape(n));
        let _ = writeln!(
            s,
            r#"<g class="legend"><rect x="{LEFT}" y="{y:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{name}</text></g>"#,
            phase_color(*p),
            LEFT + 18.0,
            y + 10.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes a figure with up to [`MAX_PLOTTED_SAMPLES`] randomly chosen samples.
pub fn emit_timeline(
    window: &Window,
    set: &PredictionSampleSet,
    phase_names: &[String],
    path: &Path,
    rng: &mut Rng,
) -> Result<()> {
    let k = set.len().min(MAX_PLOTTED_SAMPLES);
    let mut chosen = sample(rng, set.len(), k).into_vec();
    chosen.sort_unstable();
    let svg = timeline_svg(window, set, phase_names, &chosen)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn window() -> Window {
        Window {
            video_id: "v<1>".into(),
            t0: 40,
            past_features: Tensor::zeros(4, 2),
            past_labels: vec![0, 0, 1, 1],
            future_labels: vec![1, 2, 2],
        }
    }

    #[test]
    fn runs() {
        assert_eq!(segments(&[0, 0, 1, 1, 1, 0]), vec![(0, 0, 2), (1, 2, 5), (0, 5, 6)]);
        assert!(segments(&[]).is_empty());
    }

    #[test]
    fn bars_cover_their_spans() {
        let set = PredictionSampleSet::from_labels(vec![vec![1, 1, 1], vec![2, 2, 2]], 3);
        let names = vec!["a".to_string(), "b".into(), "c".into()];
        let svg = timeline_svg(&window(), &set, &names, &[1]).unwrap();
        assert!(svg.contains(r#"data-phase="1" data-start="2" data-end="5""#));
        assert!(svg.contains(r#"data-phase="2" data-start="4" data-end="7""#));
        assert!(svg.contains("v&lt;1&gt;"));
        assert!(timeline_svg(&window(), &set, &names, &[0, 1, 0, 1]).is_err());
        assert!(timeline_svg(&window(), &set, &names, &[2]).is_err());
    }
}
