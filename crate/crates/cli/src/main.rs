//! `trackvote` command line: wire detection dumps and annotation manifests
//! through tracklet association, identity voting, and evaluation.
//!
//! Exit codes: 0 success, 1 validation or data error, 2 usage error.

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use trackvote::association::{build_tracklets, serialize_tracklets, TrackletParams};
use trackvote::eval::{evaluate_multi_frame, evaluate_single_frame, render_table, MetricsReport};
use trackvote::ingest;
use trackvote::model::{merge_sequences, validate_sequence, ClassRegistry, Sequence};
use trackvote::partition;
use trackvote::simulate::{generate, SimConfig};
use trackvote::voting::{relabel, VoteScheme};

/// Fixed default seed: omitting --seed always reproduces the same output.
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "trackvote",
    about = "Detection post-processing: IoU tracklets, identity voting, mAP evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrackletArgs {
    /// Maximum tracklet length in members
    #[arg(long, default_value_t = 5)]
    max_len: usize,
    /// Frame stride between associated detections
    #[arg(long, default_value_t = 1)]
    stride: u64,
    /// IoU association threshold (accepted when IoU > theta)
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
}

impl TrackletArgs {
    fn params(&self) -> Result<TrackletParams, String> {
        TrackletParams::new(self.max_len, self.stride, self.theta).map_err(|e| e.to_string())
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Detection dump path
    #[arg(long)]
    detections: PathBuf,
    /// Annotation manifest path
    #[arg(long)]
    annotations: PathBuf,
    /// Classes file (one name per line)
    #[arg(long)]
    classes: PathBuf,
    /// IoU threshold for prediction/ground-truth matching
    #[arg(long, default_value_t = 0.5)]
    iou_thresh: f64,
    /// Operating confidence for point precision/recall
    #[arg(long, default_value_t = 0.25)]
    conf: f64,
    /// Write the report (.json for JSON, anything else key=value text)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build tracklets from a detection dump
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[command(flatten)]
        tracklet: TrackletArgs,
        /// Write the tracklet dump here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vote tracklet identities and emit the labeled detection stream
    Vote {
        #[arg(long)]
        detections: PathBuf,
        #[command(flatten)]
        tracklet: TrackletArgs,
        /// Voting scheme: avg | max
        #[arg(long, default_value = "max")]
        scheme: VoteScheme,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate per-detection argmax identities (no temporal context)
    EvalSingle {
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Evaluate tracklet-voted identities
    EvalMulti {
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        tracklet: TrackletArgs,
        /// Voting scheme: avg | max
        #[arg(long, default_value = "max")]
        scheme: VoteScheme,
    },
    /// Sweep tracklet length, stride, and threshold; print the mAP grid
    Ablate {
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Stratified train/test split of a labeled item list
    Split {
        /// Items file: `<item_id> <class_index>` per line
        #[arg(long)]
        items: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Directory for train.txt / test.txt
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Stratified k-fold assignment of a labeled item list
    Kfold {
        #[arg(long)]
        items: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Directory for fold_<i>.txt
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a synthetic annotated stream and matching detection dump
    Simulate {
        /// key=value config file; flags below override it
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        num_classes: Option<usize>,
        #[arg(long)]
        num_tracks: Option<usize>,
        #[arg(long)]
        frames: Option<u64>,
        #[arg(long)]
        image_w: Option<u32>,
        #[arg(long)]
        image_h: Option<u32>,
        /// Per-frame top-1 identity accuracy
        #[arg(long)]
        accuracy: Option<f64>,
        #[arg(long)]
        correct_mean: Option<f64>,
        #[arg(long)]
        wrong_mean: Option<f64>,
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (detections.jsonl, labels/, manifest.tsv, classes.txt)
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Dataset statistics over an annotation manifest
    Stats {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        classes: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_registry(path: &Path) -> Result<ClassRegistry, String> {
    ClassRegistry::from_lines(&read_to_string(path)?).map_err(|e| e.to_string())
}

fn load_detections(path: &Path) -> Result<Sequence, String> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ingest::parse_detection_dump(BufReader::new(file))
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// Load detections and the annotation manifest, merge them, and check the
/// result against the registry.
fn load_eval_sequence(eval: &EvalArgs) -> Result<(Sequence, ClassRegistry), String> {
    let registry = load_registry(&eval.classes)?;
    let detections = load_detections(&eval.detections)?;
    let manifest_text = read_to_string(&eval.annotations)?;
    let manifest = ingest::parse_manifest(&manifest_text)
        .map_err(|e| format!("{}: {e}", eval.annotations.display()))?;
    let base = eval
        .annotations
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let annotations = ingest::load_annotation_sequence(&manifest, &base, &registry)
        .map_err(|e| format!("{}: {e}", eval.annotations.display()))?;
    let merged = merge_sequences(&detections, &annotations).map_err(|e| e.to_string())?;
    let violations = validate_sequence(&merged, &registry);
    if !violations.is_empty() {
        let mut message = format!("{} invariant violations:", violations.len());
        for v in violations.iter().take(5) {
            message.push_str(&format!("\n  {v}"));
        }
        return Err(message);
    }
    Ok((merged, registry))
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => fs::write(path, content).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn write_report(out: &Option<PathBuf>, report: &MetricsReport) -> Result<(), String> {
    if let Some(path) = out {
        let content = if path.extension().is_some_and(|e| e == "json") {
            let mut json = serde_json::to_string_pretty(report).map_err(|e| e.to_string())?;
            json.push('\n');
            json
        } else {
            report.to_kv_text()
        };
        fs::write(path, content).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), String> {
    match command {
        Command::Track {
            detections,
            tracklet,
            out,
        } => {
            let params = tracklet.params()?;
            let sequence = load_detections(&detections)?;
            let tracklets = build_tracklets(&sequence, &params);
            write_or_print(&out, &serialize_tracklets(&tracklets))
        }
        Command::Vote {
            detections,
            tracklet,
            scheme,
            out,
        } => {
            let params = tracklet.params()?;
            let sequence = load_detections(&detections)?;
            let tracklets = build_tracklets(&sequence, &params);
            let labels = relabel(&sequence, &tracklets, scheme).map_err(|e| e.to_string())?;
            let mut buf = Vec::new();
            ingest::serialize_labeled_dump(&sequence, &labels, &mut buf)
                .map_err(|e| e.to_string())?;
            write_or_print(&out, &String::from_utf8(buf).expect("dump is UTF-8"))
        }
        Command::EvalSingle { eval } => {
            let (merged, registry) = load_eval_sequence(&eval)?;
            let report =
                evaluate_single_frame(&merged, registry.len(), eval.iou_thresh, eval.conf)
                    .map_err(|e| e.to_string())?;
            print!("{}", render_table("single", &report, Some(&registry)));
            write_report(&eval.out, &report)
        }
        Command::EvalMulti {
            eval,
            tracklet,
            scheme,
        } => {
            let params = tracklet.params()?;
            let (merged, registry) = load_eval_sequence(&eval)?;
            let report = evaluate_multi_frame(
                &merged,
                registry.len(),
                &params,
                scheme,
                eval.iou_thresh,
                eval.conf,
            )
            .map_err(|e| e.to_string())?;
            // a length-1 tracklet system is the single-frame system
            let label = if params.max_len == 1 {
                "single".to_string()
            } else {
                scheme.to_string()
            };
            print!("{}", render_table(&label, &report, Some(&registry)));
            write_report(&eval.out, &report)
        }
        Command::Ablate { eval } => {
            let (merged, registry) = load_eval_sequence(&eval)?;
            let table = ablation_table(&merged, registry.len(), eval.iou_thresh, eval.conf)?;
            print!("{table}");
            if let Some(path) = &eval.out {
                fs::write(path, &table).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            Ok(())
        }
        Command::Split {
            items,
            fraction,
            seed,
            out_dir,
        } => {
            let items = partition::parse_items(&read_to_string(&items)?)?;
            let outcome =
                partition::stratified_split(&items, fraction, seed).map_err(|e| e.to_string())?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            fs::create_dir_all(&out_dir).map_err(|e| format!("{}: {e}", out_dir.display()))?;
            partition::write_split_files(&out_dir, &outcome).map_err(|e| e.to_string())?;
            println!(
                "train {} items, test {} items -> {}",
                outcome.train.len(),
                outcome.test.len(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Kfold {
            items,
            k,
            seed,
            out_dir,
        } => {
            let items = partition::parse_items(&read_to_string(&items)?)?;
            let outcome =
                partition::stratified_kfold(&items, k, seed).map_err(|e| e.to_string())?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            fs::create_dir_all(&out_dir).map_err(|e| format!("{}: {e}", out_dir.display()))?;
            partition::write_fold_files(&out_dir, &outcome).map_err(|e| e.to_string())?;
            let sizes: Vec<usize> = outcome.folds.iter().map(Vec::len).collect();
            println!("{} folds of sizes {:?} -> {}", k, sizes, out_dir.display());
            Ok(())
        }
        Command::Simulate {
            config,
            num_classes,
            num_tracks,
            frames,
            image_w,
            image_h,
            accuracy,
            correct_mean,
            wrong_mean,
            dropout,
            jitter,
            seed,
            out_dir,
        } => {
            let mut cfg = match config {
                Some(path) => SimConfig::from_key_value_text(&read_to_string(&path)?)
                    .map_err(|e| e.to_string())?,
                None => SimConfig::default(),
            };
            if let Some(v) = num_classes {
                cfg.num_classes = v;
            }
            if let Some(v) = num_tracks {
                cfg.num_tracks = v;
            }
            if let Some(v) = frames {
                cfg.frames = v;
            }
            if let Some(v) = image_w {
                cfg.image_w = v;
            }
            if let Some(v) = image_h {
                cfg.image_h = v;
            }
            if let Some(v) = accuracy {
                cfg.per_frame_top1_accuracy = v;
            }
            if let Some(v) = correct_mean {
                cfg.correct_score_mean = v;
            }
            if let Some(v) = wrong_mean {
                cfg.wrong_score_mean = v;
            }
            if let Some(v) = dropout {
                cfg.detection_dropout = v;
            }
            if let Some(v) = jitter {
                cfg.jitter_sigma = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            write_simulation(&cfg, &out_dir)
        }
        Command::Stats {
            annotations,
            classes,
        } => {
            let registry = load_registry(&classes)?;
            let manifest = ingest::parse_manifest(&read_to_string(&annotations)?)
                .map_err(|e| format!("{}: {e}", annotations.display()))?;
            let base = annotations
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            let sequence = ingest::load_annotation_sequence(&manifest, &base, &registry)
                .map_err(|e| e.to_string())?;
            let stats = ingest::dataset_stats(&sequence.all_annotations(), registry.len());
            println!(
                "{:<12} {:>7} {:>10} {:>12}",
                "Class", "Count", "Small<32", "MeanArea"
            );
            for (i, c) in stats.per_class.iter().enumerate() {
                println!(
                    "{:<12} {:>7} {:>10.4} {:>12.1}",
                    registry.name(i).unwrap_or("?"),
                    c.count,
                    c.small_fraction,
                    c.mean_area
                );
            }
            println!(
                "\ntotal {} boxes, mean area {:.1}",
                stats.total, stats.mean_area
            );
            Ok(())
        }
    }
}

/// The three one-parameter sweeps around the default operating point
/// (length 5, stride 1, theta 0.5), for both voting schemes.
fn ablation_table(
    merged: &Sequence,
    num_classes: usize,
    iou_thresh: f64,
    conf: f64,
) -> Result<String, String> {
    use std::fmt::Write as _;

    let cell = |max_len: usize, stride: u64, theta: f64, scheme: VoteScheme| {
        let params = TrackletParams::new(max_len, stride, theta).map_err(|e| e.to_string())?;
        let report = evaluate_multi_frame(merged, num_classes, &params, scheme, iou_thresh, conf)
            .map_err(|e| e.to_string())?;
        Ok::<String, String>(format!("{:.4} (± {:.4})", report.map, report.map_std))
    };

    let mut out = String::new();
    let schemes = [
        ("Average", VoteScheme::Average),
        ("Maximum", VoteScheme::Maximum),
    ];

    let _ = writeln!(out, "{:<22} mAP", "");
    let _ = writeln!(
        out,
        "{:<22} {:<18} {:<18} {:<18}",
        "Tracklet Length", "3 frames", "5 frames", "10 frames"
    );
    for (name, scheme) in schemes {
        let _ = writeln!(
            out,
            "{:<22} {:<18} {:<18} {:<18}",
            name,
            cell(3, 1, 0.5, scheme)?,
            cell(5, 1, 0.5, scheme)?,
            cell(10, 1, 0.5, scheme)?
        );
    }
    let _ = writeln!(
        out,
        "{:<22} {:<18} {:<18} {:<18}",
        "Tracklet Stride", "1 frame", "3 frames", "5 frames"
    );
    for (name, scheme) in schemes {
        let _ = writeln!(
            out,
            "{:<22} {:<18} {:<18} {:<18}",
            name,
            cell(5, 1, 0.5, scheme)?,
            cell(5, 3, 0.5, scheme)?,
            cell(5, 5, 0.5, scheme)?
        );
    }
    let _ = writeln!(
        out,
        "{:<22} {:<18} {:<18} {:<18}",
        "Association Threshold", "IoU>0.25", "IoU>0.5", "IoU>0.75"
    );
    for (name, scheme) in schemes {
        let _ = writeln!(
            out,
            "{:<22} {:<18} {:<18} {:<18}",
            name,
            cell(5, 1, 0.25, scheme)?,
            cell(5, 1, 0.5, scheme)?,
            cell(5, 1, 0.75, scheme)?
        );
    }
    Ok(out)
}

/// Write the simulated stream in the standard on-disk layout.
fn write_simulation(cfg: &SimConfig, out_dir: &Path) -> Result<(), String> {
    let (annotations, detections) = generate(cfg).map_err(|e| e.to_string())?;
    let labels_dir = out_dir.join("labels");
    fs::create_dir_all(&labels_dir).map_err(|e| format!("{}: {e}", labels_dir.display()))?;

    let dump_path = out_dir.join("detections.jsonl");
    fs::write(&dump_path, ingest::detection_dump_to_string(&detections))
        .map_err(|e| format!("{}: {e}", dump_path.display()))?;

    let mut manifest = String::new();
    for fr in &annotations.frames {
        let rel = format!("labels/{:06}.txt", fr.frame);
        let text = ingest::serialize_annotation_text(
            &fr.annotations,
            cfg.image_w as f64,
            cfg.image_h as f64,
        );
        fs::write(out_dir.join(&rel), text).map_err(|e| e.to_string())?;
        manifest.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            fr.frame, cfg.image_w, cfg.image_h, rel
        ));
    }
    fs::write(out_dir.join("manifest.tsv"), manifest).map_err(|e| e.to_string())?;

    let classes: String = (0..cfg.num_classes)
        .map(|c| format!("class_{c}\n"))
        .collect();
    fs::write(out_dir.join("classes.txt"), classes).map_err(|e| e.to_string())?;
    fs::write(out_dir.join("sim_config.txt"), cfg.to_key_value_text())
        .map_err(|e| e.to_string())?;

    println!(
        "wrote {} detections over {} frames to {}",
        detections.total_detections(),
        cfg.frames,
        out_dir.display()
    );
    Ok(())
}
