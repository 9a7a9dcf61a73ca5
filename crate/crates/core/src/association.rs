//! Greedy cross-frame detection association and tracklet construction.
//!
//! Two frames are associated by sorting all pairwise IoUs in descending
//! order and accepting a pair when its IoU is strictly greater than the
//! threshold and neither detection is already matched. Chains of accepted
//! pairs form tracklets.
//!
//! Stride semantics: with stride `s`, association runs along the frame
//! lattice `f0, f0+s, f0+2s, ...` anchored at the first frame of the
//! sequence. Detections on frames off that lattice are not linked to
//! anything and come back as singleton tracklets, so every detection is
//! still represented in the output. A missing lattice frame breaks chains;
//! later lattice frames start fresh ones.
//!
//! Chains are truncated at `max_len`: once a chain is full it is closed, and
//! the next detection matched to its tail starts a new chain. The returned
//! tracklets always partition the detections of the sequence.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

use crate::model::{Detection, Sequence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssociationError {
    #[error("invalid tracklet parameters: {0}")]
    InvalidParams(String),
}

/// Tracklet construction parameters: maximum chain length in members,
/// association stride in frames, and the IoU acceptance threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackletParams {
    pub max_len: usize,
    pub stride: u64,
    pub theta: f64,
}

impl Default for TrackletParams {
    fn default() -> Self {
        Self {
            max_len: 5,
            stride: 1,
            theta: 0.5,
        }
    }
}

impl TrackletParams {
    pub fn new(max_len: usize, stride: u64, theta: f64) -> Result<Self, AssociationError> {
        let p = Self {
            max_len,
            stride,
            theta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AssociationError> {
        if self.max_len < 1 {
            return Err(AssociationError::InvalidParams("max_len must be >= 1".into()));
        }
        if self.stride < 1 {
            return Err(AssociationError::InvalidParams("stride must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(AssociationError::InvalidParams(format!(
                "theta {} outside [0, 1]",
                self.theta
            )));
        }
        Ok(())
    }
}

/// Reference to one detection: its frame index and its position within the
/// frame's detection list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DetectionRef {
    pub frame: u64,
    pub det_index: usize,
}

/// An ordered chain of cross-frame associated detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub members: Vec<DetectionRef>,
}

impl Tracklet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Greedy unique matching between the detections of two frames.
///
/// All pairwise IoUs are ranked descending (ties broken by lower index in
/// `dets_a`, then lower index in `dets_b`); a pair is accepted when its IoU
/// exceeds `theta` strictly and neither side is matched yet. Each detection
/// appears in at most one returned pair.
pub fn associate_frames(
    dets_a: &[Detection],
    dets_b: &[Detection],
    theta: f64,
) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in dets_a.iter().enumerate() {
        for (j, b) in dets_b.iter().enumerate() {
            let iou = a.bbox.iou(&b.bbox);
            if iou > theta {
                candidates.push((iou, i, j));
            }
        }
    }
    candidates.sort_by(|l, r| {
        r.0.partial_cmp(&l.0)
            .expect("IoU is never NaN")
            .then(l.1.cmp(&r.1))
            .then(l.2.cmp(&r.2))
    });

    let mut used_a = vec![false; dets_a.len()];
    let mut used_b = vec![false; dets_b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

#[derive(Default)]
struct FrameState {
    /// Open chains keyed by the index of their tail detection in this frame.
    chains: BTreeMap<usize, Vec<DetectionRef>>,
    /// Detections of this frame already inside some chain (open or closed).
    covered: BTreeSet<usize>,
}

/// Chain frame-pair associations into tracklets covering every detection of
/// the sequence exactly once (singletons included).
pub fn build_tracklets(s: &Sequence, p: &TrackletParams) -> Vec<Tracklet> {
    debug_assert!(p.validate().is_ok());
    let mut tracklets: Vec<Tracklet> = Vec::new();
    let anchor = match s.frames.first() {
        Some(f) => f.frame,
        None => return tracklets,
    };
    let on_lattice = |frame: u64| (frame - anchor).is_multiple_of(p.stride);

    let mut pending: HashMap<u64, FrameState> = HashMap::new();
    for fr in &s.frames {
        let mut state = pending.remove(&fr.frame).unwrap_or_default();
        let target_frame = fr.frame.checked_add(p.stride);

        if p.max_len > 1 && on_lattice(fr.frame) {
            if let Some(next) = target_frame.and_then(|t| s.frame(t)) {
                let matches = associate_frames(&fr.detections, &next.detections, p.theta);
                let next_state = pending.entry(next.frame).or_default();
                for (ia, ib) in matches {
                    let tail = DetectionRef {
                        frame: next.frame,
                        det_index: ib,
                    };
                    let chain = if let Some(mut chain) = state.chains.remove(&ia) {
                        chain.push(tail);
                        chain
                    } else if !state.covered.contains(&ia) {
                        // unmatched so far: start a chain at this detection
                        state.covered.insert(ia);
                        vec![
                            DetectionRef {
                                frame: fr.frame,
                                det_index: ia,
                            },
                            tail,
                        ]
                    } else {
                        // tail of a chain closed at max_len: the match
                        // continues the physical track, but a fresh
                        // tracklet starts at the new detection
                        vec![tail]
                    };
                    next_state.covered.insert(ib);
                    if chain.len() == p.max_len {
                        tracklets.push(Tracklet { members: chain });
                    } else {
                        next_state.chains.insert(ib, chain);
                    }
                }
            }
        }

        // chains whose tail found no continuation close here
        for (_, chain) in std::mem::take(&mut state.chains) {
            tracklets.push(Tracklet { members: chain });
        }
        // off-lattice and never-matched detections become singletons
        for i in 0..fr.detections.len() {
            if !state.covered.contains(&i) {
                tracklets.push(Tracklet {
                    members: vec![DetectionRef {
                        frame: fr.frame,
                        det_index: i,
                    }],
                });
            }
        }
    }
    tracklets
}

/// Debug dump: one `tracklet_id,frame,det_index` line per member.
pub fn serialize_tracklets(tracklets: &[Tracklet]) -> String {
    let mut out = String::from("# tracklet_id,frame,det_index\n");
    for (id, t) in tracklets.iter().enumerate() {
        for m in &t.members {
            out.push_str(&format!("{id},{},{}\n", m.frame, m.det_index));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::model::FrameRecord;
    use proptest::prelude::*;

    fn det(frame: u64, x: f64, y: f64, w: f64, h: f64) -> Detection {
        Detection {
            frame,
            bbox: BBox::new(x, y, w, h),
            objectness: 1.0,
            scores: vec![1.0],
        }
    }

    fn seq_of_boxes(frames: &[Vec<(f64, f64, f64, f64)>]) -> Sequence {
        Sequence::new(
            frames
                .iter()
                .enumerate()
                .map(|(f, boxes)| FrameRecord {
                    frame: f as u64,
                    image_size: None,
                    detections: boxes
                        .iter()
                        .map(|&(x, y, w, h)| det(f as u64, x, y, w, h))
                        .collect(),
                    annotations: vec![],
                })
                .collect(),
        )
    }

    #[test]
    fn associate_accepts_above_threshold() {
        let a = vec![det(0, 0.0, 0.0, 10.0, 10.0)];
        let b = vec![det(1, 1.0, 1.0, 10.0, 10.0)];
        // IoU = 81/119 ~ 0.68 > 0.5
        assert_eq!(associate_frames(&a, &b, 0.5), vec![(0, 0)]);
    }

    #[test]
    fn associate_rejects_below_threshold() {
        let a = vec![det(0, 0.0, 0.0, 10.0, 10.0)];
        let b = vec![det(1, 8.0, 8.0, 10.0, 10.0)];
        // IoU = 4/196 < 0.5
        assert!(associate_frames(&a, &b, 0.5).is_empty());
    }

    #[test]
    fn associate_threshold_is_strict() {
        let a = vec![det(0, 0.0, 0.0, 2.0, 2.0)];
        let b = vec![det(1, 1.0, 0.0, 2.0, 2.0)];
        let iou = a[0].bbox.iou(&b[0].bbox); // exactly 1/3
        assert!(associate_frames(&a, &b, iou).is_empty());
        assert_eq!(associate_frames(&a, &b, iou - 1e-12), vec![(0, 0)]);
    }

    #[test]
    fn associate_two_pairs() {
        let a = vec![det(0, 0.0, 0.0, 10.0, 10.0), det(0, 20.0, 20.0, 10.0, 10.0)];
        let b = vec![det(1, 1.0, 1.0, 10.0, 10.0), det(1, 19.0, 19.0, 10.0, 10.0)];
        assert_eq!(associate_frames(&a, &b, 0.5), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn singletons_when_nothing_to_associate() {
        let s = seq_of_boxes(&[vec![(0.0, 0.0, 5.0, 5.0), (50.0, 50.0, 5.0, 5.0)]]);
        let t = build_tracklets(&s, &TrackletParams::default());
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|t| t.len() == 1));
    }

    #[test]
    fn static_box_five_frames_one_tracklet() {
        let frames: Vec<_> = (0..5).map(|_| vec![(0.0, 0.0, 10.0, 10.0)]).collect();
        let t = build_tracklets(&seq_of_boxes(&frames), &TrackletParams::default());
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].len(), 5);
    }

    #[test]
    fn chain_closes_at_max_len_and_restarts() {
        let frames: Vec<_> = (0..10).map(|_| vec![(0.0, 0.0, 10.0, 10.0)]).collect();
        let t = build_tracklets(&seq_of_boxes(&frames), &TrackletParams::default());
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|t| t.len() == 5));
        assert_eq!(t[0].members[0].frame, 0);
        assert_eq!(t[0].members[4].frame, 4);
        assert_eq!(t[1].members[0].frame, 5);
    }

    #[test]
    fn teleporting_box_gives_singletons() {
        let s = seq_of_boxes(&[
            vec![(0.0, 0.0, 5.0, 5.0)],
            vec![(100.0, 0.0, 5.0, 5.0)],
            vec![(0.0, 100.0, 5.0, 5.0)],
        ]);
        let t = build_tracklets(&s, &TrackletParams::default());
        assert_eq!(t.len(), 3);
        assert!(t.iter().all(|t| t.len() == 1));
    }

    #[test]
    fn max_len_one_is_all_singletons() {
        let frames: Vec<_> = (0..6).map(|_| vec![(0.0, 0.0, 10.0, 10.0)]).collect();
        let p = TrackletParams::new(1, 1, 0.5).unwrap();
        let t = build_tracklets(&seq_of_boxes(&frames), &p);
        assert_eq!(t.len(), 6);
        assert!(t.iter().all(|t| t.len() == 1));
    }

    #[test]
    fn stride_two_chains_lattice_frames_only() {
        let frames: Vec<_> = (0..6).map(|_| vec![(0.0, 0.0, 10.0, 10.0)]).collect();
        let p = TrackletParams::new(5, 2, 0.5).unwrap();
        let t = build_tracklets(&seq_of_boxes(&frames), &p);
        // lattice 0,2,4 chains; frames 1,3,5 are singletons
        let mut lens: Vec<usize> = t.iter().map(Tracklet::len).collect();
        lens.sort_unstable();
        assert_eq!(lens, vec![1, 1, 1, 3]);
        let chain = t.iter().find(|t| t.len() == 3).unwrap();
        let frames: Vec<u64> = chain.members.iter().map(|m| m.frame).collect();
        assert_eq!(frames, vec![0, 2, 4]);
    }

    #[test]
    fn frame_gap_breaks_chain() {
        let mut s = seq_of_boxes(&[
            vec![(0.0, 0.0, 10.0, 10.0)],
            vec![(0.0, 0.0, 10.0, 10.0)],
            vec![(0.0, 0.0, 10.0, 10.0)],
        ]);
        // frames 0,1,2 -> 0,1,5
        s.frames[2].frame = 5;
        for d in &mut s.frames[2].detections {
            d.frame = 5;
        }
        let t = build_tracklets(&s, &TrackletParams::default());
        let mut lens: Vec<usize> = t.iter().map(Tracklet::len).collect();
        lens.sort_unstable();
        assert_eq!(lens, vec![1, 2]);
    }

    #[test]
    fn theta_one_gives_singletons() {
        let frames: Vec<_> = (0..4).map(|_| vec![(0.0, 0.0, 10.0, 10.0)]).collect();
        let p = TrackletParams {
            max_len: 5,
            stride: 1,
            theta: 1.0,
        };
        // the threshold is strict, and IoU never exceeds 1.0
        let t = build_tracklets(&seq_of_boxes(&frames), &p);
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn params_validation() {
        assert!(TrackletParams::new(0, 1, 0.5).is_err());
        assert!(TrackletParams::new(1, 0, 0.5).is_err());
        assert!(TrackletParams::new(1, 1, 1.5).is_err());
        assert!(TrackletParams::new(1, 1, 0.0).is_ok());
    }

    /// Brute-force reference for the greedy rule: repeatedly scan the whole
    /// IoU matrix for the best remaining admissible pair.
    fn greedy_reference(a: &[Detection], b: &[Detection], theta: f64) -> Vec<(usize, usize)> {
        let mut used_a = vec![false; a.len()];
        let mut used_b = vec![false; b.len()];
        let mut out = Vec::new();
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..a.len() {
                for j in 0..b.len() {
                    if used_a[i] || used_b[j] {
                        continue;
                    }
                    let iou = a[i].bbox.iou(&b[j].bbox);
                    if iou <= theta {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bi, bii, bjj)) => {
                            iou > bi || (iou == bi && (i, j) < (bii, bjj))
                        }
                    };
                    if better {
                        best = Some((iou, i, j));
                    }
                }
            }
            match best {
                Some((_, i, j)) => {
                    used_a[i] = true;
                    used_b[j] = true;
                    out.push((i, j));
                }
                None => break,
            }
        }
        out.sort_unstable();
        out
    }

    fn arb_dets(frame: u64) -> impl Strategy<Value = Vec<Detection>> {
        proptest::collection::vec(
            (0.0..60.0f64, 0.0..60.0f64, 1.0..30.0f64, 1.0..30.0f64),
            0..6,
        )
        .prop_map(move |boxes| {
            boxes
                .into_iter()
                .map(|(x, y, w, h)| det(frame, x, y, w, h))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn greedy_matches_brute_force(a in arb_dets(0), b in arb_dets(1),
                                      theta in 0.0..0.9f64) {
            let mut got = associate_frames(&a, &b, theta);
            got.sort_unstable();
            prop_assert_eq!(got, greedy_reference(&a, &b, theta));
        }

        #[test]
        fn tracklets_partition_detections(
            frames in proptest::collection::vec(
                proptest::collection::vec(
                    (0.0..40.0f64, 0.0..40.0f64, 2.0..20.0f64, 2.0..20.0f64), 0..5),
                0..8),
            max_len in 1usize..6,
            stride in 1u64..4,
            theta in 0.1..0.9f64,
        ) {
            let s = seq_of_boxes(&frames);
            let p = TrackletParams { max_len, stride, theta };
            let tracklets = build_tracklets(&s, &p);

            let total: usize = tracklets.iter().map(Tracklet::len).sum();
            prop_assert_eq!(total, s.total_detections());

            let mut seen = std::collections::HashSet::new();
            for t in &tracklets {
                prop_assert!(!t.is_empty() && t.len() <= max_len);
                for pair in t.members.windows(2) {
                    prop_assert_eq!(pair[1].frame - pair[0].frame, stride);
                    let a = &s.frame(pair[0].frame).unwrap().detections[pair[0].det_index];
                    let b = &s.frame(pair[1].frame).unwrap().detections[pair[1].det_index];
                    prop_assert!(a.bbox.iou(&b.bbox) > theta);
                }
                for m in &t.members {
                    prop_assert!(seen.insert(*m), "detection referenced twice");
                }
            }
        }

        #[test]
        fn build_is_deterministic(
            frames in proptest::collection::vec(
                proptest::collection::vec(
                    (0.0..30.0f64, 0.0..30.0f64, 2.0..15.0f64, 2.0..15.0f64), 0..4),
                0..6),
        ) {
            let s = seq_of_boxes(&frames);
            let p = TrackletParams::default();
            prop_assert_eq!(build_tracklets(&s, &p), build_tracklets(&s, &p));
        }
    }
}
