//! On-disk dataset layout.
//!
//! A directory holds one `dataset.manifest` plus one CSV file per
//! demonstration. The manifest is `key = value` text:
//!
//! ```text
//! format = actseg-dataset
//! version = 1
//! classes = 11
//! feature_width = 64
//! meta.source = synthetic
//! demo = <id> <demonstrator> <trial> <frame_rate> <file>
//! ```
//!
//! Each demonstration file starts with a header
//! `frame,label,truth,f0..f{F-1}[,p0..p15]`. `label` is the training-visible
//! label, `truth` the hidden ground truth of a masked demonstration; `-1`
//! marks absence. Reals are written in scientific notation with 17 significant
//! digits, which round-trips `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Demonstration};
use crate::error::{Error, Result};
use crate::imitation::{EndEffectorPose, POSE_WIDTH};
use crate::seqmodels::SegmentLabel;

pub const MANIFEST_FILE: &str = "dataset.manifest";
const FORMAT: &str = "actseg-dataset";
const VERSION: u32 = 1;

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn demo_file_name(id: u32) -> String {
    format!("demo_{id:05}.csv")
}

/// Writes `dataset` into `dir`, creating it if needed. Returns the manifest path.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    writeln!(manifest, "format = {FORMAT}").unwrap();
    writeln!(manifest, "version = {VERSION}").unwrap();
    writeln!(manifest, "classes = {}", dataset.classes).unwrap();
    writeln!(manifest, "feature_width = {}", dataset.feature_width).unwrap();
    for (k, v) in &dataset.metadata {
        writeln!(manifest, "meta.{k} = {v}").unwrap();
    }
    for demo in &dataset.demos {
        let file = demo_file_name(demo.id);
        writeln!(
            manifest,
            "demo = {} {} {} {} {file}",
            demo.id,
            demo.demonstrator,
            demo.trial,
            fmt_real(demo.frame_rate)
        )
        .unwrap();
        let path = dir.join(&file);
        fs::write(&path, demo_csv(demo, dataset.feature_width)).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn demo_csv(demo: &Demonstration, width: usize) -> String {
    let mut out = String::from("frame,label,truth");
    for i in 0..width {
        write!(out, ",f{i}").unwrap();
    }
    let poses = demo.poses();
    if poses.is_some() {
        for i in 0..POSE_WIDTH {
            write!(out, ",p{i}").unwrap();
        }
    }
    out.push('\n');
    let hidden = demo.hidden_labels();
    for (t, frame) in demo.frames().iter().enumerate() {
        let label = frame.label.map_or(-1, |l| l.get() as i64);
        let truth = hidden.map_or(-1, |h| h[t].get() as i64);
        write!(out, "{t},{label},{truth}").unwrap();
        for v in &frame.values {
            write!(out, ",{}", fmt_real(*v)).unwrap();
        }
        if let Some(p) = poses {
            for v in p[t].to_vec() {
                write!(out, ",{}", fmt_real(v)).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

struct DemoEntry {
    id: u32,
    demonstrator: u32,
    trial: u32,
    frame_rate: f64,
    file: String,
}

fn parse_err(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Loads a dataset from its manifest file.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let mut classes = None;
    let mut width = None;
    let mut format_ok = false;
    let mut metadata = std::collections::BTreeMap::new();
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(manifest_path, line_no, 1, "expected `key = value`"));
        };
        let (key, value) = (key.trim(), value.trim());
        let value_col = raw.find('=').unwrap() + 2;
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| parse_err(manifest_path, line_no, value_col, format!("bad integer `{v}`")))
        };
        match key {
            "format" => {
                if value != FORMAT {
                    return Err(parse_err(manifest_path, line_no, value_col, format!("unknown format `{value}`")));
                }
                format_ok = true;
            }
            "version" => {
                if num(value)? != VERSION as usize {
                    return Err(parse_err(manifest_path, line_no, value_col, format!("unsupported version {value}")));
                }
            }
            "classes" => classes = Some(num(value)?),
            "feature_width" => width = Some(num(value)?),
            "demo" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 5 {
                    return Err(parse_err(
                        manifest_path,
                        line_no,
                        value_col,
                        "demo entry needs `id demonstrator trial frame_rate file`",
                    ));
                }
                let int = |s: &str| {
                    s.parse::<u32>()
                        .map_err(|_| parse_err(manifest_path, line_no, value_col, format!("bad integer `{s}`")))
                };
                let frame_rate = parts[3]
                    .parse::<f64>()
                    .map_err(|_| parse_err(manifest_path, line_no, value_col, format!("bad real `{}`", parts[3])))?;
                entries.push(DemoEntry {
                    id: int(parts[0])?,
                    demonstrator: int(parts[1])?,
                    trial: int(parts[2])?,
                    frame_rate,
                    file: parts[4].to_string(),
                });
            }
            k if k.starts_with("meta.") => {
                metadata.insert(k["meta.".len()..].to_string(), value.to_string());
            }
            other => {
                return Err(parse_err(manifest_path, line_no, 1, format!("unknown key `{other}`")));
            }
        }
    }
    let schema = |m: &str| Error::Schema {
        path: manifest_path.to_path_buf(),
        message: m.to_string(),
    };
    if !format_ok {
        return Err(schema("missing `format` line"));
    }
    let classes = classes.ok_or_else(|| schema("missing `classes`"))?;
    let width = width.ok_or_else(|| schema("missing `feature_width`"))?;

    let mut demos = Vec::with_capacity(entries.len());
    for e in entries {
        let path = dir.join(&e.file);
        let mut demo = read_demo_csv(&path, &e, classes, width)?;
        demo.frame_rate = e.frame_rate;
        demos.push(demo);
    }
    let mut ds = Dataset::new(classes, width, demos).map_err(|err| schema(&err.to_string()))?;
    ds.metadata = metadata;
    Ok(ds)
}

fn read_demo_csv(path: &Path, entry: &DemoEntry, classes: usize, width: usize) -> Result<Demonstration> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, 1, "empty file, expected header"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let with_poses = match columns.len() {
        n if n == 3 + width => false,
        n if n == 3 + width + POSE_WIDTH => true,
        n => {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!(
                    "header has {n} columns; expected {} (features) or {} (features + poses)",
                    3 + width,
                    3 + width + POSE_WIDTH
                ),
            })
        }
    };
    if columns[..3] != ["frame", "label", "truth"] {
        return Err(parse_err(path, 1, 1, "header must start with `frame,label,truth`"));
    }
    let expected = columns.len();

    let mut features = Vec::new();
    let mut visible = Vec::new();
    let mut hidden = Vec::new();
    let mut poses = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(parse_err(
                path,
                line_no,
                fields.len().min(expected) + 1,
                format!("row {line_no} has {} fields, expected {expected}", fields.len()),
            ));
        }
        let frame: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, 1, format!("bad frame index `{}`", fields[0])))?;
        if frame != features.len() {
            return Err(parse_err(path, line_no, 1, format!("frame index {frame} out of sequence")));
        }
        let label = |col: usize| -> Result<Option<SegmentLabel>> {
            let v: i64 = fields[col]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, col + 1, format!("bad label `{}`", fields[col])))?;
            if v == -1 {
                return Ok(None);
            }
            SegmentLabel::checked(v, classes)
                .map(Some)
                .map_err(|e| parse_err(path, line_no, col + 1, e.to_string()))
        };
        visible.push(label(1)?);
        hidden.push(label(2)?);
        let mut reals = Vec::with_capacity(expected - 3);
        for (j, f) in fields[3..].iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, j + 4, format!("bad real `{f}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, j + 4, "non-finite value"));
            }
            reals.push(v);
        }
        if with_poses {
            let p = reals.split_off(width);
            poses.push(
                EndEffectorPose::from_slice(&p)
                    .map_err(|e| parse_err(path, line_no, width + 4, e.to_string()))?,
            );
        }
        features.push(reals);
    }

    let all_or_none = |v: &[Option<SegmentLabel>], what: &str| -> Result<Option<Vec<SegmentLabel>>> {
        let count = v.iter().filter(|l| l.is_some()).count();
        if count == 0 {
            Ok(None)
        } else if count == v.len() {
            Ok(Some(v.iter().map(|l| l.unwrap()).collect()))
        } else {
            Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("{what} labels must be present on all frames or none"),
            })
        }
    };
    let visible = all_or_none(&visible, "visible")?;
    let hidden = all_or_none(&hidden, "hidden")?;
    let mut demo = Demonstration::new(
        entry.id,
        entry.demonstrator,
        entry.trial,
        features,
        visible,
        with_poses.then_some(poses),
    )?;
    demo.set_hidden_labels(hidden)?;
    Ok(demo)
}
