//! Tracklet identity voting and detection relabeling.
//!
//! Two schemes assign one identity per tracklet: *maximum* takes the class
//! of the single highest score observed anywhere in the tracklet, *average*
//! takes the argmax of the elementwise mean of the member score vectors.
//! Raw scores are averaged without renormalization (they are independent
//! per-class confidences, not a distribution). Ties break toward the lowest
//! class index everywhere.
//!
//! [`relabel`] stamps every detection with its tracklet's identity and a
//! ranking score of `objectness * vote_score`, which is what the evaluation
//! stage sorts on.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::association::Tracklet;
use crate::geometry::BBox;
use crate::model::Sequence;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VoteError {
    #[error("tracklet has no members")]
    EmptyTracklet,
    #[error("tracklet member (frame {frame}, index {det_index}) not found in sequence")]
    DanglingReference { frame: u64, det_index: usize },
    #[error("tracklet member (frame {frame}, index {det_index}) has an empty score vector")]
    EmptyScores { frame: u64, det_index: usize },
    #[error("tracklet member (frame {frame}, index {det_index}) score length differs from the tracklet's first member")]
    ScoreLength { frame: u64, det_index: usize },
    #[error("detection (frame {frame}, index {det_index}) {problem}")]
    Partition {
        frame: u64,
        det_index: usize,
        problem: PartitionProblem,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionProblem {
    Uncovered,
    DoubleCovered,
}

impl fmt::Display for PartitionProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionProblem::Uncovered => write!(f, "is not covered by any tracklet"),
            PartitionProblem::DoubleCovered => write!(f, "is covered by more than one tracklet"),
        }
    }
}

/// How a tracklet's identity is decided from its member score vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteScheme {
    Average,
    Maximum,
}

impl fmt::Display for VoteScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VoteScheme::Average => write!(f, "average"),
            VoteScheme::Maximum => write!(f, "maximum"),
        }
    }
}

impl FromStr for VoteScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "avg" | "average" => Ok(VoteScheme::Average),
            "max" | "maximum" => Ok(VoteScheme::Maximum),
            other => Err(format!("unknown vote scheme {other:?}, expected avg|max")),
        }
    }
}

/// The identity a tracklet voted for and the score backing that vote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VotedIdentity {
    pub class_index: usize,
    pub vote_score: f64,
}

/// A detection stamped with its tracklet's voted identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDetection {
    pub frame: u64,
    pub det_index: usize,
    pub bbox: BBox,
    pub objectness: f64,
    pub voted_class: usize,
    pub vote_score: f64,
    /// `objectness * vote_score`; the confidence predictions are ranked by.
    pub rank_score: f64,
}

/// Decide a tracklet's identity under the given scheme.
pub fn vote(t: &Tracklet, s: &Sequence, scheme: VoteScheme) -> Result<VotedIdentity, VoteError> {
    if t.members.is_empty() {
        return Err(VoteError::EmptyTracklet);
    }
    let mut sums: Option<Vec<f64>> = None;
    let mut best_max: Option<(usize, f64)> = None;
    for m in &t.members {
        let det = s
            .frame(m.frame)
            .and_then(|fr| fr.detections.get(m.det_index))
            .ok_or(VoteError::DanglingReference {
                frame: m.frame,
                det_index: m.det_index,
            })?;
        if det.scores.is_empty() {
            return Err(VoteError::EmptyScores {
                frame: m.frame,
                det_index: m.det_index,
            });
        }
        match &mut sums {
            None => sums = Some(det.scores.clone()),
            Some(acc) => {
                if acc.len() != det.scores.len() {
                    return Err(VoteError::ScoreLength {
                        frame: m.frame,
                        det_index: m.det_index,
                    });
                }
                for (a, &sc) in acc.iter_mut().zip(&det.scores) {
                    *a += sc;
                }
            }
        }
        for (c, &sc) in det.scores.iter().enumerate() {
            let better = match best_max {
                None => true,
                Some((bc, bs)) => sc > bs || (sc == bs && c < bc),
            };
            if better {
                best_max = Some((c, sc));
            }
        }
    }
    match scheme {
        VoteScheme::Maximum => {
            let (class_index, vote_score) = best_max.expect("non-empty tracklet has scores");
            Ok(VotedIdentity {
                class_index,
                vote_score,
            })
        }
        VoteScheme::Average => {
            let sums = sums.expect("non-empty tracklet has scores");
            let len = t.members.len() as f64;
            let mut best = (0usize, f64::NEG_INFINITY);
            for (c, &sum) in sums.iter().enumerate() {
                let mean = sum / len;
                if mean > best.1 {
                    best = (c, mean);
                }
            }
            Ok(VotedIdentity {
                class_index: best.0,
                vote_score: best.1,
            })
        }
    }
}

/// Vote every tracklet and emit one labeled record per detection, sorted by
/// frame then detection index.
///
/// The tracklets must partition the sequence's detections: an uncovered or
/// double-covered detection is a `Partition` error.
pub fn relabel(
    s: &Sequence,
    tracklets: &[Tracklet],
    scheme: VoteScheme,
) -> Result<Vec<LabeledDetection>, VoteError> {
    let mut assigned: HashMap<(u64, usize), usize> = HashMap::new();
    for (tid, t) in tracklets.iter().enumerate() {
        for m in &t.members {
            if assigned.insert((m.frame, m.det_index), tid).is_some() {
                return Err(VoteError::Partition {
                    frame: m.frame,
                    det_index: m.det_index,
                    problem: PartitionProblem::DoubleCovered,
                });
            }
        }
    }

    let votes: Vec<VotedIdentity> = tracklets
        .iter()
        .map(|t| vote(t, s, scheme))
        .collect::<Result<_, _>>()?;

    let mut out = Vec::with_capacity(s.total_detections());
    for fr in &s.frames {
        for (di, det) in fr.detections.iter().enumerate() {
            let tid = assigned
                .get(&(fr.frame, di))
                .copied()
                .ok_or(VoteError::Partition {
                    frame: fr.frame,
                    det_index: di,
                    problem: PartitionProblem::Uncovered,
                })?;
            let v = votes[tid];
            out.push(LabeledDetection {
                frame: fr.frame,
                det_index: di,
                bbox: det.bbox,
                objectness: det.objectness,
                voted_class: v.class_index,
                vote_score: v.vote_score,
                rank_score: det.objectness * v.vote_score,
            });
        }
    }
    Ok(out)
}
