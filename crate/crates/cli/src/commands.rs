use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ctxspot_core::domain::{sample_chunks, Dataset, VideoPrediction};
use ctxspot_core::eval::{average_map, evaluate, EvalVideo};
use ctxspot_core::highlights::{
    build_reel, detect_opportunity_segments, precision_vs_threshold, write_precision_csv, CurveWithTruth,
    HighlightClip, PrecisionRow,
};
use ctxspot_core::model::gradcheck::{check_model_gradients, check_point_gradients, GradCheckReport};
use ctxspot_core::model::{
    chunk_matching, load_checkpoint, predict_video, save_checkpoint, train_with, ChunkTarget, EpochRecord,
};
use ctxspot_core::synth::{generate_dataset, SynthSpec};
use ctxspot_core::tse::tse_video;
use ctxspot_core::{Error as CoreError, SpottingConfig, Video};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::inputs::{self, PREDICTION_SUFFIX};
use crate::manifest::{hash_inputs, resolve_out, write_json, RunManifest};
use crate::{Cli, Command, Failure, InferenceArgs, EXIT_DATA, EXIT_SOFTWARE};

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let config = cli.config.as_deref();
    match cli.command {
        Command::Synth { spec, out } => synth(spec.as_deref(), seed, &out),
        Command::Encode { labels, out } => encode(&labels, config, seed, &out),
        Command::Train {
            data,
            epochs,
            dump_matchings,
            out,
        } => train(&data, config, seed, epochs, dump_matchings, &out),
        Command::Predict {
            model,
            features,
            inference,
            out,
        } => predict(&model, &features, inference, seed, &out),
        Command::Evaluate {
            gt,
            pred,
            thresholds,
            out,
        } => evaluate_cmd(&gt, &pred, thresholds.as_deref(), config, seed, &out),
        Command::Highlights { model_output, gt, out } => highlights(&model_output, &gt, config, seed, &out),
        Command::Gradcheck {
            samples,
            model_seeds,
            out,
        } => gradcheck(samples, &model_seeds, seed, out.as_deref()),
        Command::Sweep {
            data,
            lambdas,
            epochs,
            out,
        } => sweep(&data, &lambdas, epochs, config, seed, &out),
    }
}

fn manifest_inputs(manifest: &mut RunManifest, config: Option<&Path>, data: &[&Path]) -> Result<()> {
    let mut all: Vec<&Path> = data.to_vec();
    all.extend(config);
    manifest.data_hash = hash_inputs(&all)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn synth(spec_path: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let mut m = RunManifest::start("synth", seed);
    let mut spec = match spec_path {
        Some(p) => SynthSpec::load(p)?,
        None => SynthSpec::default(),
    };
    spec.seed = seed;
    spec.validate()?;
    manifest_inputs(&mut m, spec_path, &[])?;
    m.config_hash = spec.hash();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ds = generate_dataset(&spec, out)?;
    m.outputs = vec![out.join("train"), out.join("val"), out.join("test"), out.join("manifest.json")];
    m.finish(out)?;
    println!(
        "{}",
        json!({ "train": ds.train.len(), "val": ds.val.len(), "test": ds.test.len(), "spec_hash": ds.spec_hash })
    );
    Ok(())
}

fn encode(labels: &Path, config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let mut m = RunManifest::start("encode", seed);
    let cfg = inputs::config(config, seed)?;
    manifest_inputs(&mut m, config, &[labels])?;
    m.config_hash = cfg.hash();
    let ann = ctxspot_core::domain::load_annotations(labels)?;
    let map = tse_video(&ann, &cfg)?;
    let (dir, path) = resolve_out(out, &format!("{}.tse.csv", ann.video_id))?;
    let mut w = create(&path)?;
    map.write_csv(&mut w)?;
    w.flush()?;
    m.outputs = vec![path];
    m.finish(&dir)?;
    Ok(())
}

fn load_dataset(data: &Path, cfg: &SpottingConfig) -> Result<Dataset> {
    let ds = Dataset::load(data)?;
    if ds.train.is_empty() {
        return Err(Failure {
            code: EXIT_DATA,
            kind: "invalid_input",
            message: format!("{}: no training videos under train/", data.display()),
        }
        .into());
    }
    for v in ds.train.iter().chain(&ds.val).chain(&ds.test) {
        v.annotations.check_classes(cfg.num_classes)?;
    }
    Ok(ds)
}

fn train(
    data: &Path,
    config: Option<&Path>,
    seed: u64,
    epochs: Option<usize>,
    dump_matchings: bool,
    out: &Path,
) -> Result<()> {
    let mut m = RunManifest::start("train", seed);
    let mut cfg = inputs::config(config, seed)?;
    if let Some(e) = epochs {
        cfg.optimizer.epochs = e;
        cfg.validate()?;
    }
    manifest_inputs(&mut m, config, &[data])?;
    m.config_hash = cfg.hash();
    let ds = load_dataset(data, &cfg)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let total = cfg.optimizer.epochs;
    let outcome = train_with(&ds.train, &ds.val, &cfg, |r: &EpochRecord| {
        let val = r.val_average_map.map_or("-".to_string(), |v| format!("{v:.4}"));
        eprintln!(
            "epoch {}/{total} lr {:.2e} loss {:.4} (spot {:.4}, seg {:.4}) val Average-mAP {val}",
            r.epoch + 1,
            r.learning_rate,
            r.loss.total,
            r.loss.spotting,
            r.loss.segmentation
        );
    })?;

    let model = out.join("model.ckpt");
    save_checkpoint(&model, &outcome.params, &cfg)?;
    let config_out = out.join("config.json");
    cfg.save(&config_out)?;
    let history = out.join("history.json");
    write_json(&history, &json!({ "best_epoch": outcome.best_epoch, "epochs": outcome.history }))?;
    m.outputs = vec![model, config_out, history];

    if dump_matchings {
        let path = out.join("matchings.csv");
        write_matchings(&path, &ds.train, &outcome.params, &cfg)?;
        m.outputs.push(path);
    }
    m.finish(out)?;
    println!("{}", json!({ "best_epoch": outcome.best_epoch, "model": out.join("model.ckpt") }));
    Ok(())
}

fn write_matchings(
    path: &Path,
    videos: &[Video],
    params: &ctxspot_core::model::ModelParams<f32>,
    cfg: &SpottingConfig,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "video_id,chunk_start,gt_row,pred_row")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for v in videos {
        for chunk in sample_chunks(v, cfg, &mut rng) {
            let target = ChunkTarget::new(v, &chunk, cfg)?;
            let matching = chunk_matching(params, chunk.features.view(), &target, cfg)?;
            let mut rows = Vec::new();
            matching.write_csv(&mut rows)?;
            for line in String::from_utf8(rows).expect("ascii").lines().skip(1) {
                writeln!(w, "{},{},{line}", v.id(), chunk.origin.start)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn predict(model: &Path, features: &Path, inference: InferenceArgs, seed: u64, out: &Path) -> Result<()> {
    let mut m = RunManifest::start("predict", seed);
    let (params, mut cfg) = load_checkpoint(model)?;
    if let Some(t) = inference.conf_threshold {
        cfg.inference.conf_threshold = t;
    }
    if let Some(d) = inference.dedup_seconds {
        cfg.inference.dedup_seconds = d;
    }
    cfg.validate()?;
    manifest_inputs(&mut m, None, &[model, features])?;
    m.config_hash = cfg.hash();
    let sequences = inputs::features(features)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for seq in &sequences {
        let pred = predict_video(seq, &params, &cfg)?;
        let path = out.join(format!("{}{PREDICTION_SUFFIX}", pred.video_id));
        pred.save(&path)?;
        m.outputs.push(path);
    }
    m.finish(out)?;
    println!("{}", json!({ "videos": sequences.len() }));
    Ok(())
}

fn common_fps(annotations: &[ctxspot_core::VideoAnnotations], cfg: &SpottingConfig) -> f64 {
    annotations.first().map_or(cfg.fps, |a| a.fps)
}

fn evaluate_cmd(
    gt: &Path,
    pred: &Path,
    thresholds: Option<&[f64]>,
    config: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let mut m = RunManifest::start("evaluate", seed);
    let cfg = inputs::config(config, seed)?;
    manifest_inputs(&mut m, config, &[gt, pred])?;
    m.config_hash = cfg.hash();
    let annotations = inputs::annotations(gt)?;
    for a in &annotations {
        a.check_classes(cfg.num_classes)?;
    }
    let predictions = inputs::predictions(pred)?;
    let videos = EvalVideo::pair(&annotations, &predictions)?;
    let fps = common_fps(&annotations, &cfg);
    let report = evaluate(&videos, cfg.num_classes, fps, &cfg.metric, thresholds)?;

    let (dir, path) = resolve_out(out, "report.json")?;
    report.save(&path)?;
    let curves = dir.join("curves.csv");
    let mut w = create(&curves)?;
    report.write_curves_csv(&mut w)?;
    w.flush()?;
    m.outputs = vec![path, curves];
    m.finish(&dir)?;
    println!("{}", json!({ "average_map": report.average_map }));
    Ok(())
}

#[derive(Serialize)]
struct VideoReel {
    video_id: String,
    clips: Vec<HighlightClip>,
}

#[derive(Serialize)]
struct ReelReport {
    videos: Vec<VideoReel>,
    /// `None` when the annotations carry no opportunity ground truth.
    precision: Option<Vec<PrecisionRow>>,
}

fn highlights(model_output: &Path, gt: &Path, config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let mut m = RunManifest::start("highlights", seed);
    let cfg = inputs::config(config, seed)?;
    manifest_inputs(&mut m, config, &[model_output, gt])?;
    m.config_hash = cfg.hash();
    let h = &cfg.highlights;
    let predictions = inputs::predictions(model_output)?;
    let annotations = inputs::annotations(gt)?;

    let mut videos = Vec::new();
    let mut curves = Vec::new();
    for a in &annotations {
        let p: &VideoPrediction = predictions
            .iter()
            .find(|p| p.video_id == a.video_id)
            .ok_or_else(|| CoreError::InvalidInput(format!("no model output for video {}", a.video_id)))?;
        let curve = p.segmentation.get(h.goal_class).ok_or_else(|| {
            CoreError::ShapeMismatch(format!("{}: no segmentation curve for class {}", p.video_id, h.goal_class))
        })?;
        let spotted: Vec<usize> = p.spots.iter().filter(|s| s.class == h.goal_class).map(|s| s.frame).collect();
        let intervals =
            detect_opportunity_segments(curve, h.segment_threshold, &spotted, h.exclusion_frames, h.merge_gap_frames)?;
        videos.push(VideoReel {
            video_id: p.video_id.clone(),
            clips: build_reel(&p.spots, &intervals, p.fps, h),
        });
        curves.push(CurveWithTruth {
            curve: curve.as_slice(),
            annotations: a,
        });
    }
    let precision = match precision_vs_threshold(&curves, h) {
        Ok(rows) => Some(rows),
        Err(CoreError::NotEvaluable(msg)) => {
            eprintln!("precision table skipped: {msg}");
            None
        }
        Err(e) => return Err(e.into()),
    };

    let (dir, path) = resolve_out(out, "reel.json")?;
    let report = ReelReport { videos, precision };
    write_json(&path, &report)?;
    m.outputs = vec![path];
    if let Some(rows) = &report.precision {
        let csv = dir.join("precision.csv");
        let mut w = create(&csv)?;
        write_precision_csv(rows, &mut w)?;
        w.flush()?;
        m.outputs.push(csv);
    }
    m.finish(&dir)?;
    let clips: usize = report.videos.iter().map(|v| v.clips.len()).sum();
    println!("{}", json!({ "videos": report.videos.len(), "clips": clips }));
    Ok(())
}

fn gradcheck(samples: usize, model_seeds: &[u64], seed: u64, out: Option<&Path>) -> Result<()> {
    let mut m = RunManifest::start("gradcheck", seed);
    let suites: Vec<GradCheckReport> = vec![check_point_gradients(samples, seed)?, check_model_gradients(model_seeds)?];
    let passed = suites.iter().all(|s| s.passed);
    let worst = suites.iter().map(|s| s.worst_rel_err).fold(0.0, f64::max);
    let summary = json!({ "passed": passed, "worst_rel_err": worst, "suites": suites });
    println!("{summary}");
    if let Some(out) = out {
        let (dir, path) = resolve_out(out, "gradcheck.json")?;
        m.config_hash = ctxspot_core::SpottingConfig::tiny().hash();
        write_json(&path, &summary)?;
        m.outputs = vec![path];
        m.finish(&dir)?;
    }
    if !passed {
        return Err(Failure {
            code: EXIT_SOFTWARE,
            kind: "gradient_mismatch",
            message: format!("worst relative error {worst:e} above tolerance"),
        }
        .into());
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct SweepRow {
    lambda_seg: f64,
    average_map: f64,
    best_epoch: usize,
    final_loss: f64,
}

fn sweep_one(ds: &Dataset, cfg: &SpottingConfig, lambda: f64) -> Result<SweepRow> {
    let mut cfg = cfg.clone();
    cfg.lambda_seg = lambda;
    cfg.validate()?;
    let outcome = train_with(&ds.train, &ds.val, &cfg, |_| {})?;
    let eval_set = if ds.test.is_empty() { &ds.val } else { &ds.test };
    let videos = eval_set
        .iter()
        .map(|v| Ok(EvalVideo::new(&v.annotations, predict_video(&v.features, &outcome.params, &cfg)?.spots)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepRow {
        lambda_seg: lambda,
        average_map: average_map(&videos, cfg.num_classes, cfg.fps, &cfg.metric).average_map,
        best_epoch: outcome.best_epoch,
        final_loss: outcome.history.last().map_or(f64::NAN, |r| r.loss.total),
    })
}

fn sweep(
    data: &Path,
    lambdas: &[f64],
    epochs: Option<usize>,
    config: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let mut m = RunManifest::start("sweep", seed);
    let mut cfg = inputs::config(config, seed)?;
    if let Some(e) = epochs {
        cfg.optimizer.epochs = e;
    }
    cfg.validate()?;
    manifest_inputs(&mut m, config, &[data])?;
    m.config_hash = cfg.hash();
    let ds = load_dataset(data, &cfg)?;
    let (ds, cfg) = (&ds, &cfg);
    let rows: Vec<SweepRow> = std::thread::scope(|s| {
        let handles: Vec<_> = lambdas.iter().map(|&l| s.spawn(move || sweep_one(ds, cfg, l))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect::<Result<_>>()
    })?;

    let (dir, path) = resolve_out(out, "sweep.json")?;
    write_json(&path, &rows)?;
    let csv: PathBuf = dir.join("sweep.csv");
    let mut w = create(&csv)?;
    writeln!(w, "lambda_seg,average_map,best_epoch,final_loss")?;
    for r in &rows {
        writeln!(w, "{},{},{},{}", r.lambda_seg, r.average_map, r.best_epoch, r.final_loss)?;
        println!("{}", serde_json::to_string(r).expect("row serializes"));
    }
    w.flush()?;
    m.outputs = vec![path, csv];
    m.finish(&dir)?;
    Ok(())
}
