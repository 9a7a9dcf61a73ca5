//! Parsing and serialization of annotation files, detection dumps, and
//! sequence manifests, plus dataset statistics.
//!
//! All formats are UTF-8 text. Lines beginning with `#` are comments and
//! blank lines are ignored, so fixtures stay human-editable.
//!
//! * **Annotation file** — one box per line in the Darknet label convention:
//!   `<class_id> <cx> <cy> <w> <h>`, space-separated, center coordinates and
//!   extents normalized to `[0, 1]`. One file per frame.
//! * **Detection dump** — one JSON object per line with exactly the keys
//!   `frame`, `x`, `y`, `w`, `h`, `objectness`, `scores`, in that order when
//!   serialized. Coordinates are pixels, top-left origin; `scores` holds one
//!   confidence per class and its length must be consistent across records.
//! * **Labeled dump** — the detection dump extended with `voted_class` and
//!   `rank_score` keys (output of the voting stage).
//! * **Manifest** — tab-separated lines
//!   `<frame> <img_w> <img_h> <annotation_path-or-dash>`, frame indices
//!   strictly increasing. Paths are resolved relative to the manifest.
//!
//! Floats are printed in the shortest representation that round-trips, so
//! `parse(serialize(s)) == s` holds field-exactly and golden files stay
//! byte-stable.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

use crate::geometry::{self, BBox};
use crate::model::{Annotation, ClassRegistry, Detection, FrameRecord, Sequence};
use crate::voting::LabeledDetection;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    OutOfRange { line: usize, message: String },
    #[error("line {line}: score vector length {found} differs from {expected} seen earlier")]
    Schema { line: usize, expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn is_content(line: &str) -> bool {
    let t = line.trim();
    !t.is_empty() && !t.starts_with('#')
}

/// Parse one frame's annotation file into pixel-space annotations.
pub fn parse_annotation_text(
    text: &str,
    registry: &ClassRegistry,
    img_w: f64,
    img_h: f64,
    frame: u64,
) -> Result<Vec<Annotation>, IngestError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if !is_content(raw) {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(IngestError::Parse {
                line: line_no,
                message: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let class_index: usize = fields[0].parse().map_err(|e| IngestError::Parse {
            line: line_no,
            message: format!("bad class id {:?}: {e}", fields[0]),
        })?;
        if class_index >= registry.len() {
            return Err(IngestError::OutOfRange {
                line: line_no,
                message: format!(
                    "class id {class_index} outside registry of {} classes",
                    registry.len()
                ),
            });
        }
        let mut vals = [0.0f64; 4];
        for (i, f) in fields[1..].iter().enumerate() {
            vals[i] = f.parse().map_err(|e| IngestError::Parse {
                line: line_no,
                message: format!("bad number {f:?}: {e}"),
            })?;
        }
        let bbox = geometry::from_normalized(vals[0], vals[1], vals[2], vals[3], img_w, img_h)
            .map_err(|e| IngestError::OutOfRange {
                line: line_no,
                message: e.to_string(),
            })?;
        out.push(Annotation {
            frame,
            bbox,
            class_index,
        });
    }
    Ok(out)
}

/// Inverse of [`parse_annotation_text`] for a single frame.
pub fn serialize_annotation_text(annotations: &[Annotation], img_w: f64, img_h: f64) -> String {
    let mut out = String::new();
    for a in annotations {
        let (cx, cy, w, h) = geometry::to_normalized(&a.bbox, img_w, img_h);
        out.push_str(&format!("{} {} {} {} {}\n", a.class_index, cx, cy, w, h));
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpRecord {
    frame: u64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    objectness: f64,
    scores: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct LabeledRecord<'a> {
    frame: u64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    objectness: f64,
    scores: &'a [f64],
    voted_class: usize,
    rank_score: f64,
}

/// Parse a detection dump into a sequence, grouping records by frame and
/// sorting frames ascending. Record order within a frame is preserved.
pub fn parse_detection_dump(reader: impl BufRead) -> Result<Sequence, IngestError> {
    let mut expected_scores: Option<usize> = None;
    let mut detections: Vec<Detection> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if !is_content(&line) {
            continue;
        }
        let rec: DumpRecord = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        match expected_scores {
            None => expected_scores = Some(rec.scores.len()),
            Some(c) if c != rec.scores.len() => {
                return Err(IngestError::Schema {
                    line: line_no,
                    expected: c,
                    found: rec.scores.len(),
                })
            }
            Some(_) => {}
        }
        detections.push(Detection {
            frame: rec.frame,
            bbox: BBox::new(rec.x, rec.y, rec.w, rec.h),
            objectness: rec.objectness,
            scores: rec.scores,
        });
    }

    // stable sort keeps file order within a frame
    detections.sort_by_key(|d| d.frame);
    let mut frames: Vec<FrameRecord> = Vec::new();
    for det in detections {
        match frames.last_mut() {
            Some(fr) if fr.frame == det.frame => fr.detections.push(det),
            _ => frames.push(FrameRecord {
                frame: det.frame,
                image_size: None,
                detections: vec![det],
                annotations: Vec::new(),
            }),
        }
    }
    Ok(Sequence::new(frames))
}

/// Serialize the detections of a sequence, one JSON record per line.
/// Inverse of [`parse_detection_dump`] on the in-memory value.
pub fn serialize_detection_dump(s: &Sequence, mut out: impl Write) -> std::io::Result<()> {
    for fr in &s.frames {
        for d in &fr.detections {
            let rec = DumpRecord {
                frame: d.frame,
                x: d.bbox.x,
                y: d.bbox.y,
                w: d.bbox.w,
                h: d.bbox.h,
                objectness: d.objectness,
                scores: d.scores.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn detection_dump_to_string(s: &Sequence) -> String {
    let mut buf = Vec::new();
    serialize_detection_dump(s, &mut buf).expect("write to Vec cannot fail");
    String::from_utf8(buf).expect("dump is UTF-8")
}

/// Serialize voted detections: the detection dump format extended with
/// `voted_class` and `rank_score`. `labels` must reference detections of `s`.
pub fn serialize_labeled_dump(
    s: &Sequence,
    labels: &[LabeledDetection],
    mut out: impl Write,
) -> std::io::Result<()> {
    static EMPTY: &[f64] = &[];
    for l in labels {
        let scores = s
            .frame(l.frame)
            .and_then(|fr| fr.detections.get(l.det_index))
            .map(|d| d.scores.as_slice())
            .unwrap_or(EMPTY);
        let rec = LabeledRecord {
            frame: l.frame,
            x: l.bbox.x,
            y: l.bbox.y,
            w: l.bbox.w,
            h: l.bbox.h,
            objectness: l.objectness,
            scores,
            voted_class: l.voted_class,
            rank_score: l.rank_score,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One manifest row: a frame with its image dimensions and (optionally) the
/// path of its annotation file.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub frame: u64,
    pub img_w: u32,
    pub img_h: u32,
    pub annotation_path: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

/// Parse a manifest: tab-separated `frame`, `img_w`, `img_h`, path or `-`.
pub fn parse_manifest(text: &str) -> Result<Manifest, IngestError> {
    let mut entries: Vec<ManifestEntry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if !is_content(raw) {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 4 {
            return Err(IngestError::Parse {
                line: line_no,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let frame: u64 = fields[0].trim().parse().map_err(|e| IngestError::Parse {
            line: line_no,
            message: format!("bad frame index {:?}: {e}", fields[0]),
        })?;
        let img_w: u32 = fields[1].trim().parse().map_err(|e| IngestError::Parse {
            line: line_no,
            message: format!("bad image width {:?}: {e}", fields[1]),
        })?;
        let img_h: u32 = fields[2].trim().parse().map_err(|e| IngestError::Parse {
            line: line_no,
            message: format!("bad image height {:?}: {e}", fields[2]),
        })?;
        if img_w == 0 || img_h == 0 {
            return Err(IngestError::OutOfRange {
                line: line_no,
                message: "image dimensions must be positive".into(),
            });
        }
        if let Some(prev) = entries.last() {
            if frame <= prev.frame {
                return Err(IngestError::Parse {
                    line: line_no,
                    message: format!(
                        "frame {frame} not greater than previous {}",
                        prev.frame
                    ),
                });
            }
        }
        let path = fields[3].trim();
        entries.push(ManifestEntry {
            frame,
            img_w,
            img_h,
            annotation_path: (path != "-").then(|| path.to_owned()),
        });
    }
    Ok(Manifest { entries })
}

/// Read every annotation file referenced by a manifest into an
/// annotation-only sequence. `base_dir` anchors relative paths.
pub fn load_annotation_sequence(
    manifest: &Manifest,
    base_dir: &Path,
    registry: &ClassRegistry,
) -> Result<Sequence, IngestError> {
    let mut frames = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let annotations = match &entry.annotation_path {
            Some(p) => {
                let text = std::fs::read_to_string(base_dir.join(p))?;
                parse_annotation_text(
                    &text,
                    registry,
                    entry.img_w as f64,
                    entry.img_h as f64,
                    entry.frame,
                )?
            }
            None => Vec::new(),
        };
        frames.push(FrameRecord {
            frame: entry.frame,
            image_size: Some((entry.img_w, entry.img_h)),
            detections: Vec::new(),
            annotations,
        });
    }
    Ok(Sequence::new(frames))
}

/// Per-class statistics over a set of annotations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub count: usize,
    /// Fraction of boxes with both `w < 32` and `h < 32` pixels (strict).
    pub small_fraction: f64,
    pub mean_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub per_class: Vec<ClassStats>,
    pub total: usize,
    pub mean_area: f64,
}

/// Side length below which a box counts as small, matching the usual
/// "smaller than 32x32" convention for hard-to-detect objects.
pub const SMALL_BOX_EDGE: f64 = 32.0;

/// Count boxes per class and measure how many are smaller than 32x32.
/// Empty classes report fractions and mean areas of 0.
pub fn dataset_stats(annotations: &[Annotation], num_classes: usize) -> DatasetStats {
    let mut counts = vec![0usize; num_classes];
    let mut small = vec![0usize; num_classes];
    let mut area_sums = vec![0.0f64; num_classes];
    for a in annotations {
        if a.class_index >= num_classes {
            continue;
        }
        counts[a.class_index] += 1;
        if a.bbox.w < SMALL_BOX_EDGE && a.bbox.h < SMALL_BOX_EDGE {
            small[a.class_index] += 1;
        }
        area_sums[a.class_index] += a.bbox.area();
    }
    let per_class: Vec<ClassStats> = (0..num_classes)
        .map(|c| ClassStats {
            count: counts[c],
            small_fraction: if counts[c] == 0 {
                0.0
            } else {
                small[c] as f64 / counts[c] as f64
            },
            mean_area: if counts[c] == 0 {
                0.0
            } else {
                area_sums[c] / counts[c] as f64
            },
        })
        .collect();
    let total: usize = counts.iter().sum();
    let mean_area = if total == 0 {
        0.0
    } else {
        area_sums.iter().sum::<f64>() / total as f64
    };
    DatasetStats {
        per_class,
        total,
        mean_area,
    }
}
