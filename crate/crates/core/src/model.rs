//! Core data types shared by the whole pipeline: class registry, detections,
//! annotations, and frame-ordered sequences.
//!
//! Values are immutable once constructed and safe to share across threads.
//! Invariants (frame ordering, score-vector lengths, index ranges) are not
//! enforced by constructors; [`validate_sequence`] reports every violation so
//! callers can decide whether a stream is usable.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("detection has an empty score vector")]
    EmptyScores,
    #[error("class registry must contain at least one name")]
    EmptyRegistry,
    #[error("class names must be non-empty")]
    EmptyName,
    #[error("duplicate class name {0:?}")]
    DuplicateName(String),
    #[error("frame {0} appears with conflicting image dimensions")]
    DimensionMismatch(u64),
}

/// Ordered set of identity labels; index in the list is the class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRegistry {
    names: Vec<String>,
}

impl ClassRegistry {
    /// Names must be unique and non-empty.
    pub fn new(names: Vec<String>) -> Result<Self, ModelError> {
        if names.is_empty() {
            return Err(ModelError::EmptyRegistry);
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(ModelError::EmptyName);
            }
            if names[..i].contains(name) {
                return Err(ModelError::DuplicateName(name.clone()));
            }
        }
        Ok(Self { names })
    }

    /// Parse a classes file: one name per line, `#` comments and blank
    /// lines ignored.
    pub fn from_lines(text: &str) -> Result<Self, ModelError> {
        let names = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect();
        Self::new(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One detector output: a box plus an objectness score and one confidence
/// per class. Scores are independent confidences and need not sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u64,
    pub bbox: BBox,
    pub objectness: f64,
    pub scores: Vec<f64>,
}

impl Detection {
    /// Argmax class and its score; ties break toward the lowest class index.
    pub fn top_class(&self) -> Result<(usize, f64), ModelError> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in self.scores.iter().enumerate() {
            match best {
                Some((_, bs)) if s <= bs => {}
                _ => best = Some((i, s)),
            }
        }
        best.ok_or(ModelError::EmptyScores)
    }
}

/// One ground-truth record: a box with a known identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub frame: u64,
    pub bbox: BBox,
    pub class_index: usize,
}

/// Everything known about one frame of a sequence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub image_size: Option<(u32, u32)>,
    pub detections: Vec<Detection>,
    pub annotations: Vec<Annotation>,
}

/// A frame-ordered stream of detections and/or annotations; one sequence
/// models one video segment. Frame indices must be strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub frames: Vec<FrameRecord>,
}

impl Sequence {
    pub fn new(frames: Vec<FrameRecord>) -> Self {
        Self { frames }
    }

    /// Look up a frame record by frame index (sequence assumed ordered).
    pub fn frame(&self, frame: u64) -> Option<&FrameRecord> {
        self.frames
            .binary_search_by_key(&frame, |f| f.frame)
            .ok()
            .map(|i| &self.frames[i])
    }

    pub fn total_detections(&self) -> usize {
        self.frames.iter().map(|f| f.detections.len()).sum()
    }

    pub fn total_annotations(&self) -> usize {
        self.frames.iter().map(|f| f.annotations.len()).sum()
    }

    pub fn all_annotations(&self) -> Vec<Annotation> {
        self.frames
            .iter()
            .flat_map(|f| f.annotations.iter().cloned())
            .collect()
    }
}

/// Merge a detection stream and an annotation stream into one sequence,
/// aligning frame records by frame index.
pub fn merge_sequences(detections: &Sequence, annotations: &Sequence) -> Result<Sequence, ModelError> {
    let mut frames: Vec<FrameRecord> = Vec::new();
    let mut di = detections.frames.iter().peekable();
    let mut ai = annotations.frames.iter().peekable();
    while di.peek().is_some() || ai.peek().is_some() {
        let next_d = di.peek().map(|f| f.frame);
        let next_a = ai.peek().map(|f| f.frame);
        let merged = match (next_d, next_a) {
            (Some(d), Some(a)) if d == a => {
                let df = di.next().unwrap();
                let af = ai.next().unwrap();
                let image_size = match (df.image_size, af.image_size) {
                    (Some(x), Some(y)) if x != y => return Err(ModelError::DimensionMismatch(d)),
                    (x, y) => x.or(y),
                };
                FrameRecord {
                    frame: d,
                    image_size,
                    detections: df.detections.clone(),
                    annotations: af.annotations.clone(),
                }
            }
            (Some(d), Some(a)) if d < a => di.next().unwrap().clone(),
            (Some(_), Some(_)) | (None, Some(_)) => ai.next().unwrap().clone(),
            (Some(_), None) => di.next().unwrap().clone(),
            (None, None) => unreachable!(),
        };
        frames.push(merged);
    }
    Ok(Sequence::new(frames))
}

/// A single invariant violation found by [`validate_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    FrameOrder { position: usize, frame: u64, previous: u64 },
    FrameFieldMismatch { frame: u64, det_index: usize, found: u64 },
    AnnotationFrameMismatch { frame: u64, ann_index: usize, found: u64 },
    ScoreLength { frame: u64, det_index: usize, found: usize, expected: usize },
    ScoreRange { frame: u64, det_index: usize, class_index: usize, value: f64 },
    ObjectnessRange { frame: u64, det_index: usize, value: f64 },
    ClassIndex { frame: u64, ann_index: usize, class_index: usize, registry_size: usize },
    NegativeExtent { frame: u64, what: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FrameOrder { position, frame, previous } => write!(
                f,
                "frame record #{position}: index {frame} not greater than previous {previous}"
            ),
            Violation::FrameFieldMismatch { frame, det_index, found } => write!(
                f,
                "frame {frame}: detection {det_index} carries frame field {found}"
            ),
            Violation::AnnotationFrameMismatch { frame, ann_index, found } => write!(
                f,
                "frame {frame}: annotation {ann_index} carries frame field {found}"
            ),
            Violation::ScoreLength { frame, det_index, found, expected } => write!(
                f,
                "frame {frame}: detection {det_index} has {found} scores, expected {expected}"
            ),
            Violation::ScoreRange { frame, det_index, class_index, value } => write!(
                f,
                "frame {frame}: detection {det_index} score[{class_index}]={value} outside [0, 1]"
            ),
            Violation::ObjectnessRange { frame, det_index, value } => write!(
                f,
                "frame {frame}: detection {det_index} objectness {value} outside [0, 1]"
            ),
            Violation::ClassIndex { frame, ann_index, class_index, registry_size } => write!(
                f,
                "frame {frame}: annotation {ann_index} class {class_index} outside registry of {registry_size}"
            ),
            Violation::NegativeExtent { frame, what } => {
                write!(f, "frame {frame}: {what} has negative width or height")
            }
        }
    }
}

/// Check every type invariant of a sequence against a registry and return
/// the violations found; an empty report means the sequence is valid.
pub fn validate_sequence(s: &Sequence, registry: &ClassRegistry) -> Vec<Violation> {
    let c = registry.len();
    let mut out = Vec::new();
    let mut prev: Option<u64> = None;
    for (pos, fr) in s.frames.iter().enumerate() {
        if let Some(p) = prev {
            if fr.frame <= p {
                out.push(Violation::FrameOrder {
                    position: pos,
                    frame: fr.frame,
                    previous: p,
                });
            }
        }
        prev = Some(fr.frame);
        for (di, d) in fr.detections.iter().enumerate() {
            if d.frame != fr.frame {
                out.push(Violation::FrameFieldMismatch {
                    frame: fr.frame,
                    det_index: di,
                    found: d.frame,
                });
            }
            if d.scores.len() != c {
                out.push(Violation::ScoreLength {
                    frame: fr.frame,
                    det_index: di,
                    found: d.scores.len(),
                    expected: c,
                });
            }
            if !(0.0..=1.0).contains(&d.objectness) {
                out.push(Violation::ObjectnessRange {
                    frame: fr.frame,
                    det_index: di,
                    value: d.objectness,
                });
            }
            for (ci, &sc) in d.scores.iter().enumerate() {
                if !(0.0..=1.0).contains(&sc) {
                    out.push(Violation::ScoreRange {
                        frame: fr.frame,
                        det_index: di,
                        class_index: ci,
                        value: sc,
                    });
                }
            }
            if d.bbox.w < 0.0 || d.bbox.h < 0.0 {
                out.push(Violation::NegativeExtent {
                    frame: fr.frame,
                    what: format!("detection {di}"),
                });
            }
        }
        for (ai, a) in fr.annotations.iter().enumerate() {
            if a.frame != fr.frame {
                out.push(Violation::AnnotationFrameMismatch {
                    frame: fr.frame,
                    ann_index: ai,
                    found: a.frame,
                });
            }
            if a.class_index >= c {
                out.push(Violation::ClassIndex {
                    frame: fr.frame,
                    ann_index: ai,
                    class_index: a.class_index,
                    registry_size: c,
                });
            }
            if a.bbox.w < 0.0 || a.bbox.h < 0.0 {
                out.push(Violation::NegativeExtent {
                    frame: fr.frame,
                    what: format!("annotation {ai}"),
                });
            }
        }
    }
    out
}
