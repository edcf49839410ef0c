use rand::seq::SliceRandom;

use super::{Video, PhaseSequence};
use crate::diffcore::Tensor;
use crate::{seeded_rng, Error, Result};

/// Past seconds `[t0 - T_p + 1, t0]` and future seconds `[t0 + 1, t0 + T_f]`
/// of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub video_id: String,
    pub t0: usize,
    pub past_features: Tensor,
    pub past_labels: Vec<usize>,
    pub future_labels: Vec<usize>,
}

impl Window {
    pub fn t_past(&self) -> usize {
        self.past_labels.len()
    }

    pub fn t_future(&self) -> usize {
        self.future_labels.len()
    }

    /// Whether the label changes anywhere from the last past second through
    /// the future.
    pub fn has_future_transition(&self) -> bool {
        let last = *self.past_labels.last().expect("non-empty past");
        self.future_labels.iter().any(|&l| l != last)
    }
}

fn cut(video: &Video, start: usize, t_past: usize, t_future: usize) -> Window {
    let f = &video.features;
    let dim = f.cols();
    let rows = &f.data()[start * dim..(start + t_past) * dim];
    Window {
        video_id: video.seq.video_id.clone(),
        t0: start + t_past - 1,
        past_features: Tensor::new(vec![t_past, dim], rows.to_vec()).expect("consistent slice"),
        past_labels: video.seq.labels[start..start + t_past].to_vec(),
        future_labels: video.seq.labels[start + t_past..start + t_past + t_future].to_vec(),
    }
}

/// Number of windows `window_dataset` cuts from a sequence of length `len`.
pub fn window_count(len: usize, t_past: usize, t_future: usize, stride: usize) -> usize {
    let span = t_past + t_future;
    if len < span || stride == 0 {
        0
    } else {
        (len - span) / stride + 1
    }
}

/// All windows with full past and future, starting at second 0 and moving by
/// `stride`.
pub fn window_dataset(videos: &[Video], t_past: usize, t_future: usize, stride: usize) -> Result<Vec<Window>> {
    if stride == 0 || t_past == 0 || t_future == 0 {
        return Err(Error::Invalid("stride, T_p and T_f must be >= 1".into()));
    }
    let mut out = vec![];
    for v in videos {
        for k in 0..window_count(v.seq.len(), t_past, t_future, stride) {
            out.push(cut(v, k * stride, t_past, t_future));
        }
    }
    Ok(out)
}

/// One window per ground-truth phase change, anchored so the change falls on
/// the first future second. Changes without a full past or future are skipped.
pub fn transition_windows(videos: &[Video], t_past: usize, t_future: usize) -> Result<Vec<Window>> {
    if t_past == 0 || t_future == 0 {
        return Err(Error::Invalid("T_p and T_f must be >= 1".into()));
    }
    let mut out = vec![];
    for v in videos {
        for (t, _, _) in v.seq.transitions() {
            if t >= t_past && t + t_future <= v.seq.len() {
                out.push(cut(v, t - t_past, t_past, t_future));
            }
        }
    }
    Ok(out)
}

/// Shuffles video ids with `seed` and puts the first `round(fraction * n)`
/// (at least one, at most `n - 1`) into the training split. Both splits are
/// returned sorted by id.
pub fn split_by_video(mut videos: Vec<Video>, fraction: f64, seed: u64) -> (Vec<Video>, Vec<Video>) {
    videos.sort_by(|a, b| a.seq.video_id.cmp(&b.seq.video_id));
    let n = videos.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let n_train = if n < 2 {
        n
    } else {
        ((fraction * n as f64).round() as usize).clamp(1, n - 1)
    };
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let (mut train, mut test) = (vec![], vec![]);
    for (v, t) in videos.into_iter().zip(is_train) {
        if t {
            train.push(v);
        } else {
            test.push(v);
        }
    }
    (train, test)
}

/// Label sequences of `videos`, in order.
pub fn sequences(videos: &[Video]) -> Vec<&PhaseSequence> {
    videos.iter().map(|v| &v.seq).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(id: &str, labels: Vec<usize>) -> Video {
        let n = labels.len();
        Video {
            features: Tensor::from_parts(n, 2, (0..2 * n).map(|x| x as f64).collect()),
            seq: PhaseSequence {
                video_id: id.into(),
                labels,
            },
        }
    }

    #[test]
    fn window_counts() {
        let v = [video("a", vec![0; 100])];
        assert_eq!(window_dataset(&v, 15, 15, 1).unwrap().len(), 71);
        assert_eq!(window_dataset(&v, 15, 15, 10).unwrap().len(), 8);
        let short = [video("b", vec![0; 29])];
        assert!(window_dataset(&short, 15, 15, 1).unwrap().is_empty());
    }

    #[test]
    fn windows_are_contiguous_slices() {
        let v = video("a", (0..40).collect());
        let w = &window_dataset(std::slice::from_ref(&v), 5, 3, 7).unwrap()[2];
        assert_eq!(w.t0, 18);
        assert_eq!(w.past_labels, vec![14, 15, 16, 17, 18]);
        assert_eq!(w.future_labels, vec![19, 20, 21]);
        assert_eq!(w.past_features.row_slice(0), v.features.row_slice(14));
    }

    #[test]
    fn transition_window_puts_change_first() {
        let mut labels = vec![0; 20];
        labels.extend(vec![1; 20]);
        labels[1] = 2;
        let ws = transition_windows(&[video("a", labels)], 5, 5).unwrap();
        // Changes at 1 and 2 lack a full past; the change at 20 is kept.
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].t0, 19);
        assert_eq!(ws[0].future_labels[0], 1);
        assert_eq!(*ws[0].past_labels.last().unwrap(), 0);
    }

    #[test]
    fn split_has_no_leakage() {
        let videos: Vec<Video> = (0..40).map(|i| video(&format!("v{i:02}"), vec![i % 3; 50])).collect();
        let (train, test) = split_by_video(videos, 0.75, 3);
        assert_eq!((train.len(), test.len()), (30, 10));
        let train_w = window_dataset(&train, 5, 5, 1).unwrap();
        let test_ids: std::collections::HashSet<_> = test.iter().map(|v| v.seq.video_id.clone()).collect();
        assert!(train_w.iter().all(|w| !test_ids.contains(&w.video_id)));
    }
}
