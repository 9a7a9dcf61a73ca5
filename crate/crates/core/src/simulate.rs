//! Synthetic ground truth and noisy detection streams with controllable
//! classifier accuracy, detection dropout, and box jitter.
//!
//! # Motion model
//!
//! Tracks move with constant horizontal velocity inside per-track lanes laid
//! out on a grid, wrapping around the image edge. Tracks in one lane share a
//! velocity, so boxes never collide and consecutive-frame IoU stays high by
//! construction; `jitter_sigma` perturbs detected boxes and controls how
//! often association breaks.
//!
//! # Score model
//!
//! The generator and [`vote_accuracy_oracle`] share one score model (the
//! private `draw_score_vector`) so oracle and pipeline measurements are
//! directly comparable. With `C` classes and target top-1 accuracy `a`, let
//! `a0 = (a - 1/C) / (1 - 1/C)` and `delta = (correct - wrong) / 4`:
//!
//! * with probability `a0` the frame is a *hit*: the true class scores
//!   uniform in `correct ± delta`, every other class uniform in
//!   `wrong ± delta`;
//! * otherwise the identity signal is absent: all classes score uniform in
//!   `wrong ± delta`, and the argmax lands on a uniformly random class.
//!
//! Scores are clipped to `[0, 1]`. The argmax equals the true class with
//! probability exactly `a0 + (1 - a0)/C = a` (means near 0 or 1 can clip
//! and bend the calibration slightly). Hit frames always outscore miss
//! frames, which is what lets identity voting across a tracklet outperform
//! single-frame decisions.
//!
//! The random stream order is fixed (frame-major, track-minor; per kept
//! detection: dropout gate, jitter, hit gate, C score draws), so generation
//! is a pure function of the config including its seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::model::{Annotation, Detection, FrameRecord, Sequence};
use crate::voting::VoteScheme;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub num_classes: usize,
    pub num_tracks: usize,
    pub frames: u64,
    pub image_w: u32,
    pub image_h: u32,
    pub per_frame_top1_accuracy: f64,
    pub correct_score_mean: f64,
    pub wrong_score_mean: f64,
    pub detection_dropout: f64,
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_classes: 7,
            num_tracks: 14,
            frames: 50,
            image_w: 1280,
            image_h: 720,
            per_frame_top1_accuracy: 0.85,
            correct_score_mean: 0.8,
            wrong_score_mean: 0.2,
            detection_dropout: 0.0,
            jitter_sigma: 0.0,
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_classes == 0 || self.num_tracks == 0 || self.frames == 0 {
            return Err(SimError::Config("counts must be positive".into()));
        }
        if self.image_w == 0 || self.image_h == 0 {
            return Err(SimError::Config("image dimensions must be positive".into()));
        }
        for (name, v) in [
            ("per_frame_top1_accuracy", self.per_frame_top1_accuracy),
            ("correct_score_mean", self.correct_score_mean),
            ("wrong_score_mean", self.wrong_score_mean),
            ("detection_dropout", self.detection_dropout),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::Config(format!("{name}={v} outside [0, 1]")));
            }
        }
        if self.correct_score_mean <= self.wrong_score_mean {
            return Err(SimError::Config(
                "correct_score_mean must exceed wrong_score_mean".into(),
            ));
        }
        if self.jitter_sigma < 0.0 {
            return Err(SimError::Config("jitter_sigma must be non-negative".into()));
        }
        let chance = 1.0 / self.num_classes as f64;
        if self.num_classes > 1 && self.per_frame_top1_accuracy < chance {
            return Err(SimError::Config(format!(
                "per_frame_top1_accuracy {} below chance level {chance:.4} for {} classes",
                self.per_frame_top1_accuracy, self.num_classes
            )));
        }
        Ok(())
    }

    /// Parse a flat `key=value` config file; unset keys take their defaults.
    pub fn from_key_value_text(text: &str) -> Result<Self, SimError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SimError::Config(format!("line {}: expected key=value", idx + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| {
                SimError::Config(format!("line {}: bad value for {key}: {e}", idx + 1))
            };
            match key {
                "num_classes" => cfg.num_classes = value.parse().map_err(|e| bad(&e))?,
                "num_tracks" => cfg.num_tracks = value.parse().map_err(|e| bad(&e))?,
                "frames" => cfg.frames = value.parse().map_err(|e| bad(&e))?,
                "image_w" => cfg.image_w = value.parse().map_err(|e| bad(&e))?,
                "image_h" => cfg.image_h = value.parse().map_err(|e| bad(&e))?,
                "per_frame_top1_accuracy" => {
                    cfg.per_frame_top1_accuracy = value.parse().map_err(|e| bad(&e))?
                }
                "correct_score_mean" => {
                    cfg.correct_score_mean = value.parse().map_err(|e| bad(&e))?
                }
                "wrong_score_mean" => cfg.wrong_score_mean = value.parse().map_err(|e| bad(&e))?,
                "detection_dropout" => {
                    cfg.detection_dropout = value.parse().map_err(|e| bad(&e))?
                }
                "jitter_sigma" => cfg.jitter_sigma = value.parse().map_err(|e| bad(&e))?,
                "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
                other => {
                    return Err(SimError::Config(format!(
                        "line {}: unknown key {other:?}",
                        idx + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_key_value_text(&self) -> String {
        format!(
            "num_classes={}\nnum_tracks={}\nframes={}\nimage_w={}\nimage_h={}\n\
             per_frame_top1_accuracy={}\ncorrect_score_mean={}\nwrong_score_mean={}\n\
             detection_dropout={}\njitter_sigma={}\nseed={}\n",
            self.num_classes,
            self.num_tracks,
            self.frames,
            self.image_w,
            self.image_h,
            self.per_frame_top1_accuracy,
            self.correct_score_mean,
            self.wrong_score_mean,
            self.detection_dropout,
            self.jitter_sigma,
            self.seed
        )
    }
}

/// Probability that a frame carries the identity signal, derived so the
/// end-to-end top-1 accuracy hits the configured target.
fn hit_probability(top1_accuracy: f64, num_classes: usize) -> f64 {
    if num_classes <= 1 {
        return 1.0;
    }
    let chance = 1.0 / num_classes as f64;
    ((top1_accuracy - chance) / (1.0 - chance)).clamp(0.0, 1.0)
}

/// Draw one score vector for a detection of `true_class`. Shared verbatim
/// between [`generate`] and [`vote_accuracy_oracle`].
fn draw_score_vector(
    rng: &mut ChaCha8Rng,
    num_classes: usize,
    true_class: usize,
    hit_prob: f64,
    correct_mean: f64,
    wrong_mean: f64,
) -> Vec<f64> {
    let delta = (correct_mean - wrong_mean) / 4.0;
    let hit = rng.random::<f64>() < hit_prob;
    (0..num_classes)
        .map(|c| {
            let center = if hit && c == true_class {
                correct_mean
            } else {
                wrong_mean
            };
            rng.random_range(center - delta..center + delta).clamp(0.0, 1.0)
        })
        .collect()
}

struct TrackLayout {
    x0: f64,
    y: f64,
    size: f64,
    velocity: f64,
    class: usize,
}

fn layout_tracks(c: &SimConfig) -> Vec<TrackLayout> {
    let w = c.image_w as f64;
    let h = c.image_h as f64;
    let lanes = ((c.num_tracks as f64 * h / w).sqrt().ceil() as usize).max(1);
    let per_lane = c.num_tracks.div_ceil(lanes);
    let slot_w = w / per_lane as f64;
    let lane_h = h / lanes as f64;
    let size = 0.6 * slot_w.min(lane_h);
    // slow drift: consecutive-frame self-IoU stays ~0.96, and short
    // sequences finish before any track reaches the wrap boundary
    let speed = 0.02 * size;
    (0..c.num_tracks)
        .map(|t| {
            let lane = t / per_lane;
            let slot = t % per_lane;
            TrackLayout {
                x0: slot as f64 * slot_w + (slot_w - size) / 2.0,
                y: lane as f64 * lane_h + (lane_h - size) / 2.0,
                size,
                velocity: speed,
                class: t % c.num_classes,
            }
        })
        .collect()
}

/// Generate a ground-truth sequence and a matching noisy detection stream.
///
/// Per frame, each track emits a detection with probability
/// `1 - detection_dropout`; its box is the true box perturbed by Gaussian
/// jitter, its scores come from the shared score model. Deterministic per
/// seed.
pub fn generate(c: &SimConfig) -> Result<(Sequence, Sequence), SimError> {
    c.validate()?;
    let tracks = layout_tracks(c);
    let hit_prob = hit_probability(c.per_frame_top1_accuracy, c.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let jitter = (c.jitter_sigma > 0.0)
        .then(|| Normal::new(0.0, c.jitter_sigma).expect("validated sigma"));
    let w = c.image_w as f64;

    let mut ann_frames = Vec::with_capacity(c.frames as usize);
    let mut det_frames = Vec::with_capacity(c.frames as usize);
    for frame in 0..c.frames {
        let mut annotations = Vec::with_capacity(tracks.len());
        let mut detections = Vec::new();
        for track in &tracks {
            let x = (track.x0 + track.velocity * frame as f64).rem_euclid(w);
            let bbox = BBox::new(x, track.y, track.size, track.size);
            annotations.push(Annotation {
                frame,
                bbox,
                class_index: track.class,
            });
            if rng.random::<f64>() < c.detection_dropout {
                continue;
            }
            let bbox = match &jitter {
                Some(n) => BBox::new(
                    bbox.x + n.sample(&mut rng),
                    bbox.y + n.sample(&mut rng),
                    bbox.w,
                    bbox.h,
                ),
                None => bbox,
            };
            let scores = draw_score_vector(
                &mut rng,
                c.num_classes,
                track.class,
                hit_prob,
                c.correct_score_mean,
                c.wrong_score_mean,
            );
            detections.push(Detection {
                frame,
                bbox,
                objectness: 1.0,
                scores,
            });
        }
        ann_frames.push(FrameRecord {
            frame,
            image_size: Some((c.image_w, c.image_h)),
            detections: Vec::new(),
            annotations,
        });
        det_frames.push(FrameRecord {
            frame,
            image_size: Some((c.image_w, c.image_h)),
            detections,
            annotations: Vec::new(),
        });
    }
    Ok((Sequence::new(ann_frames), Sequence::new(det_frames)))
}

/// Monte-Carlo estimate of voted-identity accuracy for tracklets of a fixed
/// length under the shared score model, independent of the tracking stack.
///
/// The vote aggregation is implemented inline (per-class mean / global max,
/// ties to the lowest class index) so this is a second route through the
/// voting arithmetic as well.
pub fn vote_accuracy_oracle(
    per_frame_top1_accuracy: f64,
    tracklet_len: usize,
    num_classes: usize,
    scheme: VoteScheme,
    trials: u64,
    seed: u64,
) -> f64 {
    assert!(trials >= 1, "at least one trial required");
    assert!(tracklet_len >= 1 && num_classes >= 1);
    let hit_prob = hit_probability(per_frame_top1_accuracy, num_classes);
    // same spread as the generator's defaults; the oracle compares voting
    // schemes, not score scales, so only the hit/miss structure matters
    let (correct_mean, wrong_mean) = (0.8, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correct = 0u64;
    for trial in 0..trials {
        let true_class = (trial % num_classes as u64) as usize;
        let mut sums = vec![0.0f64; num_classes];
        let mut best = (0usize, f64::NEG_INFINITY);
        for _ in 0..tracklet_len {
            let scores = draw_score_vector(
                &mut rng,
                num_classes,
                true_class,
                hit_prob,
                correct_mean,
                wrong_mean,
            );
            for (c, &s) in scores.iter().enumerate() {
                sums[c] += s;
                if s > best.1 {
                    best = (c, s);
                }
            }
        }
        let voted = match scheme {
            VoteScheme::Maximum => best.0,
            VoteScheme::Average => {
                let mut arg = (0usize, f64::NEG_INFINITY);
                for (c, &s) in sums.iter().enumerate() {
                    if s > arg.1 {
                        arg = (c, s);
                    }
                }
                arg.0
            }
        };
        if voted == true_class {
            correct += 1;
        }
    }
    correct as f64 / trials as f64
}
