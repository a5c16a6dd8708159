//! Annotation, dataset and manifest files.
//!
//! Annotations are JSON lines, one object per frame-view in frame-major
//! order, each with exactly the keys `W_GT`, `W_Predictions`, `S_Pred`,
//! `BBox` and `confidence`. Unknown coordinates are `null`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{MbwError, Result};
use crate::geometry::{Landmarks2D, Shape3D};
use crate::pipeline::{BBox, FrameRecord};

const KEYS: [&str; 5] = ["W_GT", "W_Predictions", "S_Pred", "BBox", "confidence"];

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| MbwError::io(path, std::io::Error::other("path has no file name")))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        MbwError::io(path, e)
    })
}

fn landmarks_json(w: &Landmarks2D) -> Value {
    Value::Array(
        (0..w.len())
            .map(|i| match w.point(i) {
                Some(p) => json!([p.x, p.y]),
                None => Value::Null,
            })
            .collect(),
    )
}

fn record_json(r: &FrameRecord) -> Value {
    let joints = r.w_gt.len();
    let shape = match &r.s_pred {
        Some(s) => Value::Array(s.points.iter().map(|x| json!([x.x, x.y, x.z])).collect()),
        None => Value::Array(vec![Value::Null; joints]),
    };
    let bbox = match &r.bbox {
        Some(b) => json!([b.x_min, b.y_min, b.x_max, b.y_max]),
        None => json!([null, null, null, null]),
    };
    let mut m = Map::new();
    m.insert("W_GT".into(), landmarks_json(&r.w_gt));
    m.insert("W_Predictions".into(), landmarks_json(&r.w_predictions));
    m.insert("S_Pred".into(), shape);
    m.insert("BBox".into(), bbox);
    m.insert("confidence".into(), Value::Bool(r.confidence));
    Value::Object(m)
}

/// Annotation file contents for `records` (frame-major order).
pub fn render_annotations(records: &[FrameRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &record_json(r)).expect("json values serialize");
        out.push(b'\n');
    }
    out
}

pub fn save_annotations(records: &[FrameRecord], path: &Path) -> Result<()> {
    write_atomic(path, &render_annotations(records))
}

fn schema(line: usize, key: &str, message: impl Into<String>) -> MbwError {
    MbwError::SchemaError {
        line,
        key: key.into(),
        message: message.into(),
    }
}

fn number(v: &Value, line: usize, key: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| schema(line, key, format!("expected a number, got {v}")))
}

fn parse_rows<const D: usize>(v: &Value, line: usize, key: &str) -> Result<Vec<Option<[f64; D]>>> {
    let rows = v.as_array().ok_or_else(|| schema(line, key, "expected an array"))?;
    rows.iter()
        .map(|row| match row {
            Value::Null => Ok(None),
            Value::Array(xs) if xs.len() == D => {
                let mut out = [0.0; D];
                for (o, x) in out.iter_mut().zip(xs) {
                    *o = number(x, line, key)?;
                }
                Ok(Some(out))
            }
            other => Err(schema(line, key, format!("expected null or {D} numbers, got {other}"))),
        })
        .collect()
}

fn parse_landmarks(v: &Value, line: usize, key: &str) -> Result<Landmarks2D> {
    Ok(Landmarks2D::from_options(
        parse_rows::<2>(v, line, key)?
            .into_iter()
            .map(|p| p.map(|[x, y]| nalgebra::Vector2::new(x, y)))
            .collect(),
    ))
}

fn parse_record(text: &str, line: usize) -> Result<FrameRecord> {
    let value: Value = serde_json::from_str(text).map_err(|e| schema(line, "", e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| schema(line, "", "expected an object"))?;
    if let Some(extra) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(schema(line, extra, "unexpected key"));
    }
    let get = |k: &str| obj.get(k).ok_or_else(|| schema(line, k, "missing key"));

    let w_gt = parse_landmarks(get("W_GT")?, line, "W_GT")?;
    let w_predictions = parse_landmarks(get("W_Predictions")?, line, "W_Predictions")?;
    if w_predictions.len() != w_gt.len() {
        return Err(schema(line, "W_Predictions", "point count differs from W_GT"));
    }
    let rows = parse_rows::<3>(get("S_Pred")?, line, "S_Pred")?;
    if rows.len() != w_gt.len() {
        return Err(schema(line, "S_Pred", "point count differs from W_GT"));
    }
    let s_pred = if rows.iter().all(Option::is_none) {
        None
    } else if rows.iter().all(Option::is_some) {
        Some(Shape3D::from_xyz(&rows.into_iter().flatten().collect::<Vec<_>>()))
    } else {
        return Err(schema(line, "S_Pred", "shape is partly null"));
    };
    let b = get("BBox")?
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| schema(line, "BBox", "expected 4 entries"))?;
    let bbox = if b.iter().all(Value::is_null) {
        None
    } else {
        let c: Vec<f64> = b.iter().map(|x| number(x, line, "BBox")).collect::<Result<_>>()?;
        if c[0] > c[2] || c[1] > c[3] {
            return Err(schema(line, "BBox", "min exceeds max"));
        }
        Some(BBox {
            x_min: c[0],
            y_min: c[1],
            x_max: c[2],
            y_max: c[3],
        })
    };
    let confidence = get("confidence")?
        .as_bool()
        .ok_or_else(|| schema(line, "confidence", "expected a boolean"))?;
    Ok(FrameRecord {
        w_gt,
        w_predictions,
        s_pred,
        bbox,
        confidence,
    })
}

/// Parses annotation text; blank lines are skipped.
pub fn parse_annotations(text: &str) -> Result<Vec<FrameRecord>> {
    let mut out: Vec<FrameRecord> = Vec::new();
    for (i, l) in text.lines().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let r = parse_record(l, i + 1)?;
        if let Some(first) = out.first() {
            if first.w_gt.len() != r.w_gt.len() {
                return Err(schema(i + 1, "W_GT", "point count differs from earlier records"));
            }
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<FrameRecord>> {
    let text = fs::read_to_string(path).map_err(|e| MbwError::io(path, e))?;
    parse_annotations(&text)
}

/// Regroups frame-major records into `[frame][view]`.
pub fn group_by_frame(records: Vec<FrameRecord>, views: usize) -> Result<Vec<Vec<FrameRecord>>> {
    if views == 0 || !records.len().is_multiple_of(views) {
        return Err(MbwError::ShapeMismatch(format!(
            "{} records do not split into frames of {views} views",
            records.len()
        )));
    }
    let mut out = Vec::with_capacity(records.len() / views);
    let mut it = records.into_iter();
    loop {
        let frame: Vec<FrameRecord> = it.by_ref().take(views).collect();
        if frame.is_empty() {
            return Ok(out);
        }
        out.push(frame);
    }
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| MbwError::io(path, std::io::Error::other(e)))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| MbwError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| schema(e.line(), "", e.to_string()))
}
