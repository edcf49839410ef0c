//! Annotation and feature files.
//!
//! Annotation CSV, one row per second, sorted by `(video_id, second)`, with
//! seconds of each video running `0, 1, 2, ...` without gaps:
//!
//! ```text
//! video_id,second,phase_id
//! vid000,0,0
//! vid000,1,0
//! ```
//!
//! `phase_id` is either an integer in `[0, N_P)` or an exact phase name.
//!
//! Feature CSV uses the same keys followed by `D` feature columns:
//!
//! ```text
//! video_id,second,f0,f1,...,f{D-1}
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::PhaseSequence;
use crate::diffcore::Tensor;
use crate::{Error, Result};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Rows grouped by video, checked for ordering and 1 Hz contiguity.
struct KeyedRows<'a> {
    path: PathBuf,
    videos: Vec<(String, Vec<(usize, Vec<&'a str>)>)>,
}

fn read_keyed<'a>(path: &Path, text: &'a str, header_prefix: &[&str], min_cols: usize) -> Result<KeyedRows<'a>> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i + 1, l),
            None => return Err(parse_err(path, 1, "empty file")),
        }
    };
    let cols: Vec<&str> = header.1.split(',').map(str::trim).collect();
    if cols.len() < min_cols || cols[..header_prefix.len()] != *header_prefix {
        return Err(parse_err(
            path,
            header.0,
            format!("expected header starting with {}", header_prefix.join(",")),
        ));
    }
    let width = cols.len();
    let mut videos: Vec<(String, Vec<(usize, Vec<&str>)>)> = vec![];
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        let vid = fields[0];
        if vid.is_empty() {
            return Err(parse_err(path, lineno, "empty video_id"));
        }
        let second: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad second '{}'", fields[1])))?;
        match videos.last_mut() {
            Some((last, rows)) if last == vid => {
                let expected = rows.len();
                if second != expected {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("video {vid}: expected second {expected}, found {second}"),
                    ));
                }
                rows.push((lineno, fields[2..].to_vec()));
            }
            prev => {
                if let Some((last, _)) = prev {
                    if last.as_str() > vid {
                        return Err(parse_err(
                            path,
                            lineno,
                            format!("rows not sorted by video_id ('{vid}' after '{last}')"),
                        ));
                    }
                }
                if videos.iter().any(|(v, _)| v == vid) {
                    return Err(parse_err(path, lineno, format!("video {vid} is not contiguous")));
                }
                if second != 0 {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("video {vid}: first second must be 0, found {second}"),
                    ));
                }
                videos.push((vid.to_string(), vec![(lineno, fields[2..].to_vec())]));
            }
        }
    }
    Ok(KeyedRows {
        path: path.to_path_buf(),
        videos,
    })
}

pub fn parse_annotations(path: &Path, text: &str, vocabulary: &[String]) -> Result<Vec<PhaseSequence>> {
    let rows = read_keyed(path, text, &["video_id", "second", "phase_id"], 3)?;
    let n_p = vocabulary.len();
    rows.videos
        .into_iter()
        .map(|(vid, rs)| {
            let labels = rs
                .into_iter()
                .map(|(line, f)| {
                    let tok = f[0];
                    let id = match tok.parse::<usize>() {
                        Ok(id) => id,
                        Err(_) => vocabulary.iter().position(|p| p == tok).ok_or_else(|| {
                            parse_err(
                                &rows.path,
                                line,
                                format!(
                                    "unknown phase '{tok}'; vocabulary: {}",
                                    vocabulary.join(", ")
                                ),
                            )
                        })?,
                    };
                    if id >= n_p {
                        return Err(parse_err(
                            &rows.path,
                            line,
                            format!("phase id {id} out of range [0, {n_p})"),
                        ));
                    }
                    Ok(id)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PhaseSequence {
                video_id: vid,
                labels,
            })
        })
        .collect()
}

/// One sequence per video id, in file order.
pub fn load_annotations(path: &Path, vocabulary: &[String]) -> Result<Vec<PhaseSequence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(path, &text, vocabulary)
}

pub fn format_annotations(seqs: &[PhaseSequence]) -> String {
    let mut sorted: Vec<&PhaseSequence> = seqs.iter().collect();
    sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let mut out = String::from("video_id,second,phase_id\n");
    for s in sorted {
        for (t, l) in s.labels.iter().enumerate() {
            let _ = writeln!(out, "{},{t},{l}", s.video_id);
        }
    }
    out
}

pub fn save_annotations(path: &Path, seqs: &[PhaseSequence]) -> Result<()> {
    std::fs::write(path, format_annotations(seqs)).map_err(|e| Error::io(path, e))
}

pub fn parse_features(path: &Path, text: &str) -> Result<BTreeMap<String, Tensor>> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let dim = first.split(',').count().saturating_sub(2);
    let expected: Vec<String> = ["video_id".to_string(), "second".to_string()]
        .into_iter()
        .chain((0..dim).map(|d| format!("f{d}")))
        .collect();
    let expected_ref: Vec<&str> = expected.iter().map(String::as_str).collect();
    if dim == 0 {
        return Err(parse_err(path, 1, "feature file needs at least one column f0"));
    }
    let rows = read_keyed(path, text, &expected_ref, expected.len())?;
    let mut out = BTreeMap::new();
    for (vid, rs) in rows.videos {
        let mut data = Vec::with_capacity(rs.len() * dim);
        let n = rs.len();
        for (line, f) in rs {
            for tok in f {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(&rows.path, line, format!("bad feature value '{tok}'")))?;
                if !v.is_finite() {
                    return Err(parse_err(&rows.path, line, "non-finite feature value"));
                }
                data.push(v);
            }
        }
        out.insert(vid, Tensor::new(vec![n, dim], data)?);
    }
    Ok(out)
}

pub fn load_features(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features(path, &text)
}

pub fn format_features<'a>(videos: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> String {
    let mut videos: Vec<(&str, &Tensor)> = videos.into_iter().collect();
    videos.sort_by(|a, b| a.0.cmp(b.0));
    let dim = videos.first().map_or(0, |(_, t)| t.cols());
    let mut out = String::from("video_id,second");
    for d in 0..dim {
        let _ = write!(out, ",f{d}");
    }
    out.push('\n');
    for (vid, t) in videos {
        for r in 0..t.rows() {
            let _ = write!(out, "{vid},{r}");
            for v in t.row_slice(r) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}
