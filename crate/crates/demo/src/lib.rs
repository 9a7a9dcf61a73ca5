//! Browser playground for the tracking-by-detection identification pipeline.
//!
//! Three operations are exported to JavaScript, all JSON-string in /
//! JSON-string out so the page needs no binding glue:
//!
//! * [`simulate_scene`] — generate a synthetic stream, build tracklets, vote
//!   identities under both schemes, and return per-frame draw lists for
//!   canvas playback.
//! * [`evaluate_scene`] — metrics reports for the single-frame system and
//!   both multi-frame voting schemes on the same stream.
//! * [`sweep_tracklet_length`] — mAP as a function of maximum tracklet
//!   length, the curve behind the single-frame vs multi-frame comparison.
//!
//! The JSON-level entry points (`*_json`) are plain Rust and unit-tested on
//! the host; the `#[wasm_bindgen]` exports are thin wrappers.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use trackvote::association::{build_tracklets, TrackletParams};
use trackvote::eval::{evaluate_multi_frame, evaluate_single_frame, MetricsReport};
use trackvote::model::{merge_sequences, Sequence};
use trackvote::simulate::{generate, SimConfig};
use trackvote::voting::{relabel, VoteScheme};

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SceneRequest {
    sim: SimConfig,
    params: ParamsRequest,
    iou_thresh: Option<f64>,
    conf: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct ParamsRequest {
    max_len: usize,
    stride: u64,
    theta: f64,
}

impl Default for ParamsRequest {
    fn default() -> Self {
        let p = TrackletParams::default();
        Self {
            max_len: p.max_len,
            stride: p.stride,
            theta: p.theta,
        }
    }
}

impl ParamsRequest {
    fn build(&self) -> Result<TrackletParams, String> {
        TrackletParams::new(self.max_len, self.stride, self.theta).map_err(|e| e.to_string())
    }
}

#[derive(Serialize)]
struct SceneBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    class: usize,
}

#[derive(Serialize)]
struct SceneDetection {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    tracklet: usize,
    top1_class: usize,
    avg_class: usize,
    avg_score: f64,
    max_class: usize,
    max_score: f64,
    true_class: Option<usize>,
}

#[derive(Serialize)]
struct SceneFrame {
    frame: u64,
    annotations: Vec<SceneBox>,
    detections: Vec<SceneDetection>,
}

#[derive(Serialize)]
struct Scene {
    image_w: u32,
    image_h: u32,
    num_classes: usize,
    tracklet_count: usize,
    frames: Vec<SceneFrame>,
}

fn parse_request(config: &str) -> Result<(SceneRequest, TrackletParams), String> {
    let req: SceneRequest = serde_json::from_str(config).map_err(|e| e.to_string())?;
    let params = req.params.build()?;
    Ok((req, params))
}

fn generate_streams(req: &SceneRequest) -> Result<(Sequence, Sequence), String> {
    generate(&req.sim).map_err(|e| e.to_string())
}

/// JSON core of [`simulate_scene`]; host-testable.
pub fn scene_json(config: &str) -> Result<String, String> {
    let (req, params) = parse_request(config)?;
    let (annotations, detections) = generate_streams(&req)?;

    let tracklets = build_tracklets(&detections, &params);
    let avg = relabel(&detections, &tracklets, VoteScheme::Average).map_err(|e| e.to_string())?;
    let max = relabel(&detections, &tracklets, VoteScheme::Maximum).map_err(|e| e.to_string())?;

    // (frame, det_index) -> position in the relabel output (sorted identically)
    let mut tracklet_of = std::collections::HashMap::new();
    for (tid, t) in tracklets.iter().enumerate() {
        for m in &t.members {
            tracklet_of.insert((m.frame, m.det_index), tid);
        }
    }
    let mut label_index = std::collections::HashMap::new();
    for (i, l) in avg.iter().enumerate() {
        label_index.insert((l.frame, l.det_index), i);
    }

    let mut frames = Vec::with_capacity(detections.frames.len());
    for (fr_det, fr_ann) in detections.frames.iter().zip(&annotations.frames) {
        let anns: Vec<SceneBox> = fr_ann
            .annotations
            .iter()
            .map(|a| SceneBox {
                x: a.bbox.x,
                y: a.bbox.y,
                w: a.bbox.w,
                h: a.bbox.h,
                class: a.class_index,
            })
            .collect();
        let dets: Vec<SceneDetection> = fr_det
            .detections
            .iter()
            .enumerate()
            .map(|(di, d)| {
                let key = (fr_det.frame, di);
                let li = label_index[&key];
                // ground truth with the highest overlap names the true class
                let true_class = fr_ann
                    .annotations
                    .iter()
                    .map(|a| (d.bbox.iou(&a.bbox), a.class_index))
                    .filter(|(iou, _)| *iou > 0.0)
                    .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
                    .map(|(_, c)| c);
                SceneDetection {
                    x: d.bbox.x,
                    y: d.bbox.y,
                    w: d.bbox.w,
                    h: d.bbox.h,
                    tracklet: tracklet_of[&key],
                    top1_class: d.top_class().map(|(c, _)| c).unwrap_or(0),
                    avg_class: avg[li].voted_class,
                    avg_score: avg[li].vote_score,
                    max_class: max[li].voted_class,
                    max_score: max[li].vote_score,
                    true_class,
                }
            })
            .collect();
        frames.push(SceneFrame {
            frame: fr_det.frame,
            annotations: anns,
            detections: dets,
        });
    }

    let scene = Scene {
        image_w: req.sim.image_w,
        image_h: req.sim.image_h,
        num_classes: req.sim.num_classes,
        tracklet_count: tracklets.len(),
        frames,
    };
    serde_json::to_string(&scene).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Comparison {
    single: MetricsReport,
    average: MetricsReport,
    maximum: MetricsReport,
}

/// JSON core of [`evaluate_scene`]; host-testable.
pub fn evaluate_json(config: &str) -> Result<String, String> {
    let (req, params) = parse_request(config)?;
    let (annotations, detections) = generate_streams(&req)?;
    let merged = merge_sequences(&detections, &annotations).map_err(|e| e.to_string())?;
    let iou = req.iou_thresh.unwrap_or(0.5);
    let conf = req.conf.unwrap_or(0.25);
    let c = req.sim.num_classes;
    let single = evaluate_single_frame(&merged, c, iou, conf).map_err(|e| e.to_string())?;
    let average = evaluate_multi_frame(&merged, c, &params, VoteScheme::Average, iou, conf)
        .map_err(|e| e.to_string())?;
    let maximum = evaluate_multi_frame(&merged, c, &params, VoteScheme::Maximum, iou, conf)
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&Comparison {
        single,
        average,
        maximum,
    })
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct LengthSweep {
    lengths: Vec<usize>,
    average: Vec<f64>,
    maximum: Vec<f64>,
    single: f64,
}

/// JSON core of [`sweep_tracklet_length`]; host-testable.
pub fn sweep_json(config: &str, max_length: usize) -> Result<String, String> {
    let (req, base) = parse_request(config)?;
    let (annotations, detections) = generate_streams(&req)?;
    let merged = merge_sequences(&detections, &annotations).map_err(|e| e.to_string())?;
    let iou = req.iou_thresh.unwrap_or(0.5);
    let conf = req.conf.unwrap_or(0.25);
    let c = req.sim.num_classes;
    let single = evaluate_single_frame(&merged, c, iou, conf)
        .map_err(|e| e.to_string())?
        .map;
    let lengths: Vec<usize> = (1..=max_length.max(1)).collect();
    let mut average = Vec::with_capacity(lengths.len());
    let mut maximum = Vec::with_capacity(lengths.len());
    for &len in &lengths {
        let params =
            TrackletParams::new(len, base.stride, base.theta).map_err(|e| e.to_string())?;
        for (scheme, out) in [
            (VoteScheme::Average, &mut average),
            (VoteScheme::Maximum, &mut maximum),
        ] {
            out.push(
                evaluate_multi_frame(&merged, c, &params, scheme, iou, conf)
                    .map_err(|e| e.to_string())?
                    .map,
            );
        }
    }
    serde_json::to_string(&LengthSweep {
        lengths,
        average,
        maximum,
        single,
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn simulate_scene(config: &str) -> Result<String, JsError> {
    scene_json(config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn evaluate_scene(config: &str) -> Result<String, JsError> {
    evaluate_json(config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sweep_tracklet_length(config: &str, max_length: usize) -> Result<String, JsError> {
    sweep_json(config, max_length).map_err(|e| JsError::new(&e))
}
