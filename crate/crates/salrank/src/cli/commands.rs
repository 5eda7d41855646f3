//! Implementations of the CLI subcommands.
//!
//! Clips are processed in sorted clip-id order; clip-level work parallelizes
//! with rayon while writers stay single-owner, so primary outputs (CSV, PNG,
//! checkpoints) are byte-identical across reruns and thread counts.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::cli::{CliConfig, SourceArg};
use crate::curation::{assign_ranks, emit_record, gt_ranking_map};
use crate::dataset::{read_dataset, write_dataset};
use crate::diffusion::checkpoint;
use crate::diffusion::{train, Model, NoiseSchedule};
use crate::error::{Error, Result};
use crate::io::{read_map_png_unit, write_map_png_raw, write_map_png_unit};
use crate::map::{FixationMap, GrayscaleMap, VideoClip};
use crate::metrics::{auc_judd, cc, nss, sim, spearman};
use crate::pipeline::client::{RemoteGrounder, RemoteMllm};
use crate::pipeline::predict::{predict_clip, ClipPrediction, Provenance, RankSource};
use crate::pipeline::stub::{StubConfig, StubServer};
use crate::plot::{save_png, LinePlot, Series};
use crate::rankmap::SidecarEntry;
use crate::synth::{generate, SynthSpec};

/// The conditioning ratios evaluated by `ratio-sweep`.
pub const RATIO_GRID: [f64; 6] = [0.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 1.0];

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Formats a metric cell; undefined metrics render as the word `undefined`.
fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6}"),
        None => "undefined".to_string(),
    }
}

/// Mean over the defined entries, or `None` when every entry is undefined.
fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Runs a metric, turning mathematically-undefined results into `None`.
fn metric_cell(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------- synth

pub fn cmd_synth(spec_file: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = match spec_file {
        Some(path) => SynthSpec::from_json(&read_text(path)?)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let clips = generate(&spec)?;
    write_dataset(&clips, out)?;
    println!(
        "wrote {} clips ({} frames each, {}x{}) to {}",
        clips.len(),
        spec.frames_per_clip,
        spec.width,
        spec.height,
        out.display()
    );
    Ok(())
}

// --------------------------------------------------------------- curate

pub fn cmd_curate(dataset: &Path, captions_file: Option<&Path>, out: &Path) -> Result<()> {
    let clips = read_dataset(dataset)?;
    let captions: HashMap<String, String> = match captions_file {
        Some(path) => serde_json::from_str(&read_text(path)?)?,
        None => HashMap::new(),
    };
    let mut lines = String::new();
    for clip in &clips {
        let placeholder = format!("Synthetic clip {} with ranked salient objects.", clip.id);
        let caption = captions.get(&clip.id).map_or(placeholder.as_str(), |c| c);
        let record = emit_record(clip, caption)?;
        lines.push_str(&record.to_jsonl()?);
        lines.push('\n');
        for (f, (objects, fix)) in clip.annotations.iter().zip(&clip.fixations).enumerate() {
            let ranked = assign_ranks(objects, fix)?;
            let map = gt_ranking_map(&ranked, clip.width(), clip.height())?;
            let path = out.join("rankmaps").join(&clip.id).join(format!("f{f:03}.png"));
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_map_png_raw(&map, &path)?;
        }
    }
    write_text(&out.join("records.jsonl"), &lines)?;
    println!(
        "curated {} clips: records.jsonl + ranking maps under {}",
        clips.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- train

pub fn cmd_train(dataset: &Path, out: &Path, config: &CliConfig, seed: Option<u64>) -> Result<()> {
    let clips = read_dataset(dataset)?;
    let mut train_config = config.train.clone();
    if let Some(seed) = seed {
        train_config.seed = seed;
    }
    eprintln!(
        "training {} steps on {} clips (seed {})",
        train_config.steps,
        clips.len(),
        train_config.seed
    );
    let outcome = train::train(&clips, &train_config)?;

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    checkpoint::save(&out.join("checkpoint.bin"), &outcome.model, &train_config)?;
    let mut csv = String::from("step,loss\n");
    for (i, loss) in outcome.losses.iter().enumerate() {
        csv.push_str(&format!("{},{loss:.9e}\n", i + 1));
    }
    write_text(&out.join("loss.csv"), &csv)?;
    println!(
        "trained {} steps; final loss {:.6}; checkpoint at {}",
        outcome.losses.len(),
        outcome.losses.last().copied().unwrap_or(f64::NAN),
        out.join("checkpoint.bin").display()
    );
    Ok(())
}

// -------------------------------------------------------------- predict

/// Resolves the remote client pair for `--source mllm` from config then
/// environment.
fn remote_clients(config: &CliConfig) -> Result<(RemoteMllm, RemoteGrounder)> {
    let timeout = config.remote.timeout();
    let mllm_url = config
        .remote
        .mllm_url
        .clone()
        .or_else(|| std::env::var(crate::pipeline::client::MLLM_URL_ENV).ok())
        .ok_or_else(|| {
            Error::Config(format!(
                "--source mllm needs a ranking endpoint: set [remote].mllm_url or {}",
                crate::pipeline::client::MLLM_URL_ENV
            ))
        })?;
    let ground_url = config
        .remote
        .ground_url
        .clone()
        .or_else(|| std::env::var(crate::pipeline::client::GROUND_URL_ENV).ok())
        .ok_or_else(|| {
            Error::Config(format!(
                "--source mllm needs a grounding endpoint: set [remote].ground_url or {}",
                crate::pipeline::client::GROUND_URL_ENV
            ))
        })?;
    Ok((
        RemoteMllm::new(mllm_url, timeout),
        RemoteGrounder::new(ground_url, timeout),
    ))
}

/// Predicts every clip in parallel, preserving the dataset's sorted order.
fn predict_dataset(
    clips: &[VideoClip],
    model: &Model,
    sched: &NoiseSchedule,
    ratio: f64,
    source: SourceArg,
    remote: Option<&(RemoteMllm, RemoteGrounder)>,
    seed: u64,
) -> Vec<(String, Result<ClipPrediction>)> {
    clips
        .par_iter()
        .map(|clip| {
            let rank_source = match (source, remote) {
                (SourceArg::Oracle, _) => RankSource::Oracle,
                (SourceArg::Random, _) => RankSource::Random,
                (SourceArg::Mllm, Some((mllm, grounder))) => {
                    RankSource::Remote { mllm, grounder }
                }
                (SourceArg::Mllm, None) => {
                    unreachable!("remote clients resolved before dispatch")
                }
            };
            let result = predict_clip(clip, model, sched, ratio, &rank_source, seed);
            (clip.id.clone(), result)
        })
        .collect()
}

pub fn cmd_predict(
    dataset: &Path,
    checkpoint_path: &Path,
    out: &Path,
    source: SourceArg,
    ratio: f64,
    config: &CliConfig,
    seed: u64,
) -> Result<()> {
    let clips = read_dataset(dataset)?;
    let (model, manifest) = checkpoint::load(checkpoint_path)?;
    let sched = manifest.schedule()?;
    let remote = match source {
        SourceArg::Mllm => Some(remote_clients(config)?),
        _ => None,
    };

    let results = predict_dataset(&clips, &model, &sched, ratio, source, remote.as_ref(), seed);
    let mut failures: Vec<(String, Error)> = Vec::new();
    for (clip_id, result) in results {
        let clip_dir = out.join(&clip_id);
        fs::create_dir_all(&clip_dir).map_err(|e| Error::io(&clip_dir, e))?;
        match result {
            Ok(prediction) => {
                for (f, map) in prediction.maps.iter().enumerate() {
                    write_map_png_unit(map, &clip_dir.join(format!("f{f:03}.png")))?;
                }
                write_json_pretty(&clip_dir.join("provenance.json"), &prediction.provenance)?;
            }
            Err(e) => {
                eprintln!("clip {clip_id}: {e}");
                write_json_pretty(
                    &clip_dir.join("error.json"),
                    &serde_json::json!({ "clip_id": clip_id, "error": e.to_string() }),
                )?;
                failures.push((clip_id, e));
            }
        }
    }
    let total = clips.len();
    if failures.len() == total {
        let (_, first) = failures.swap_remove(0);
        return Err(match first {
            Error::Transport(msg) => {
                Error::Transport(format!("all {total} clips failed; first error: {msg}"))
            }
            other => other,
        });
    }
    println!(
        "predicted {} clips ({} failed) into {}",
        total - failures.len(),
        failures.len(),
        out.display()
    );
    Ok(())
}

// ----------------------------------------------------------------- eval

struct FrameScores {
    auc_j: Option<f64>,
    cc: Option<f64>,
    sim: Option<f64>,
    nss: Option<f64>,
}

fn score_frame(
    pred: &GrayscaleMap,
    gt: &GrayscaleMap,
    fix: &FixationMap,
) -> Result<FrameScores> {
    Ok(FrameScores {
        auc_j: metric_cell(auc_judd(pred, fix))?,
        cc: metric_cell(cc(pred, gt))?,
        sim: metric_cell(sim(pred, gt))?,
        nss: metric_cell(nss(pred, fix))?,
    })
}

/// Sorted prediction clip directories; entries with an `error.json` are
/// skipped (they hold no maps).
fn prediction_dirs(pred: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(pred).map_err(|e| Error::io(pred, e))? {
        let path = entry.map_err(|e| Error::io(pred, e))?.path();
        if path.is_dir() && !path.join("error.json").exists() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no prediction directories under {}",
            pred.display()
        )));
    }
    Ok(dirs)
}

fn clip_for_dir<'a>(
    dir: &Path,
    by_id: &'a HashMap<&str, &'a VideoClip>,
) -> Result<&'a VideoClip> {
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    by_id.get(id.as_str()).copied().ok_or_else(|| {
        Error::IncompleteInput(format!("prediction {id} has no clip in the dataset"))
    })
}

/// Reads the per-frame prediction maps for one clip, enforcing an exact
/// frame-count match with the dataset clip.
fn read_prediction_maps(dir: &Path, clip: &VideoClip) -> Result<Vec<GrayscaleMap>> {
    let frame_files = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.starts_with('f') && name.ends_with(".png")
        })
        .count();
    if frame_files != clip.len() {
        return Err(Error::Dimension(format!(
            "clip {}: {} predicted frames for {} dataset frames",
            clip.id,
            frame_files,
            clip.len()
        )));
    }
    (0..clip.len())
        .map(|f| read_map_png_unit(&dir.join(format!("f{f:03}.png"))))
        .collect()
}

pub fn cmd_eval(pred: &Path, dataset: &Path, out: &Path) -> Result<()> {
    let clips = read_dataset(dataset)?;
    let by_id: HashMap<&str, &VideoClip> =
        clips.iter().map(|c| (c.id.as_str(), c)).collect();

    let mut rows: Vec<(String, FrameScores)> = Vec::new();
    for dir in prediction_dirs(pred)? {
        let clip = clip_for_dir(&dir, &by_id)?;
        let maps = read_prediction_maps(&dir, clip)?;
        for (f, map) in maps.iter().enumerate() {
            let scores = score_frame(map, &clip.saliency[f], &clip.fixations[f])?;
            rows.push((format!("{}/f{f:03}", clip.id), scores));
        }
    }

    let mut csv = String::from("frame,auc_j,cc,sim,nss\n");
    for (frame, s) in &rows {
        csv.push_str(&format!(
            "{frame},{},{},{},{}\n",
            fmt_cell(s.auc_j),
            fmt_cell(s.cc),
            fmt_cell(s.sim),
            fmt_cell(s.nss)
        ));
    }
    let mean_line = format!(
        "mean,{},{},{},{}",
        fmt_cell(mean_defined(&rows.iter().map(|(_, s)| s.auc_j).collect::<Vec<_>>())),
        fmt_cell(mean_defined(&rows.iter().map(|(_, s)| s.cc).collect::<Vec<_>>())),
        fmt_cell(mean_defined(&rows.iter().map(|(_, s)| s.sim).collect::<Vec<_>>())),
        fmt_cell(mean_defined(&rows.iter().map(|(_, s)| s.nss).collect::<Vec<_>>()))
    );
    csv.push_str(&mean_line);
    csv.push('\n');
    write_text(out, &csv)?;
    println!("{mean_line}");
    Ok(())
}

// ---------------------------------------------------------- ratio-sweep

pub fn cmd_ratio_sweep(
    dataset: &Path,
    checkpoint_path: &Path,
    out: &Path,
    source: SourceArg,
    config: &CliConfig,
    seed: u64,
) -> Result<()> {
    let clips = read_dataset(dataset)?;
    let (model, manifest) = checkpoint::load(checkpoint_path)?;
    let sched = manifest.schedule()?;
    let remote = match source {
        SourceArg::Mllm => Some(remote_clients(config)?),
        _ => None,
    };

    let mut csv = String::from("ratio,auc_j,cc,sim,nss\n");
    let mut cc_points = Vec::new();
    for &ratio in &RATIO_GRID {
        let results =
            predict_dataset(&clips, &model, &sched, ratio, source, remote.as_ref(), seed);
        let mut scores = Vec::new();
        for (clip_id, result) in results {
            let prediction = result?;
            let clip = clips
                .iter()
                .find(|c| c.id == clip_id)
                .expect("result ids come from the dataset");
            for (f, map) in prediction.maps.iter().enumerate() {
                scores.push(score_frame(map, &clip.saliency[f], &clip.fixations[f])?);
            }
        }
        let auc = mean_defined(&scores.iter().map(|s| s.auc_j).collect::<Vec<_>>());
        let ccm = mean_defined(&scores.iter().map(|s| s.cc).collect::<Vec<_>>());
        let simm = mean_defined(&scores.iter().map(|s| s.sim).collect::<Vec<_>>());
        let nssm = mean_defined(&scores.iter().map(|s| s.nss).collect::<Vec<_>>());
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            format_ratio(ratio),
            fmt_cell(auc),
            fmt_cell(ccm),
            fmt_cell(simm),
            fmt_cell(nssm)
        ));
        if let Some(ccm) = ccm {
            cc_points.push((ratio, ccm));
        }
        eprintln!("ratio {}: mean cc {}", format_ratio(ratio), fmt_cell(ccm));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("sweep.csv"), &csv)?;
    let plot = LinePlot {
        x_label: "ratio".into(),
        y_label: "cc".into(),
        series: vec![Series {
            label: "cc".into(),
            points: cc_points,
            color: [204, 51, 51],
        }],
    };
    save_png(&plot, &out.join("sweep.png"), 480, 320)?;
    println!(
        "sweep over {} ratios written to {}",
        RATIO_GRID.len(),
        out.display()
    );
    Ok(())
}

/// Exact short form for the grid ratios (0, 0.0625, ..., 1).
fn format_ratio(ratio: f64) -> String {
    let mut s = format!("{ratio:.4}");
    while s.contains('.') && (s.ends_with('0') || s.ends_with('.')) {
        s.pop();
    }
    s
}

// ------------------------------------------------------------ correlate

/// Rebuilds the clip-wide ranking map recorded in a provenance file by
/// summing each object's rank weight over its box (clamped to 1).
fn provenance_rank_map(
    objects: &[SidecarEntry],
    width: usize,
    height: usize,
) -> Result<GrayscaleMap> {
    let mut values = vec![0.0; width * height];
    for entry in objects {
        entry.bbox.check_within(width, height)?;
        for y in entry.bbox.y0 as usize..entry.bbox.y1 as usize {
            for x in entry.bbox.x0 as usize..entry.bbox.x1 as usize {
                values[y * width + x] += entry.rstar;
            }
        }
    }
    for v in &mut values {
        *v = v.min(1.0);
    }
    GrayscaleMap::new(width, height, values)
}

pub fn cmd_correlate(pred: &Path, dataset: &Path, out: &Path) -> Result<()> {
    let clips = read_dataset(dataset)?;
    let by_id: HashMap<&str, &VideoClip> =
        clips.iter().map(|c| (c.id.as_str(), c)).collect();

    let mut rows: Vec<(String, Option<f64>, Option<f64>)> = Vec::new();
    for dir in prediction_dirs(pred)? {
        let clip = clip_for_dir(&dir, &by_id)?;
        let provenance: Provenance =
            serde_json::from_str(&read_text(&dir.join("provenance.json"))?)?;
        let mid = clip.middle_frame();

        let rank_map = provenance_rank_map(&provenance.objects, clip.width(), clip.height())?;
        let map_cc = metric_cell(cc(&rank_map, &clip.saliency[mid]))?;

        // Predicted ↔ ground-truth object matching: exact tag plus IoU ≥ 0.5.
        let gt_ranked = assign_ranks(&clip.annotations[mid], &clip.fixations[mid])?;
        let mut pred_ranks = Vec::new();
        let mut gt_ranks = Vec::new();
        for entry in &provenance.objects {
            if let Some(gt) = gt_ranked
                .iter()
                .find(|g| g.tag == entry.tag && g.bbox.iou(&entry.bbox) >= 0.5)
            {
                pred_ranks.push(i64::from(entry.rank));
                gt_ranks.push(i64::from(gt.rank));
            }
        }
        let rank_corr = if pred_ranks.is_empty() {
            None
        } else {
            metric_cell(spearman(&pred_ranks, &gt_ranks))?
        };
        rows.push((clip.id.clone(), map_cc, rank_corr));
    }

    let mut csv = String::from("clip,map_cc,rank_spearman\n");
    for (clip, map_cc, rank_corr) in &rows {
        csv.push_str(&format!(
            "{clip},{},{}\n",
            fmt_cell(*map_cc),
            fmt_cell(*rank_corr)
        ));
    }
    let mean_line = format!(
        "mean,{},{}",
        fmt_cell(mean_defined(&rows.iter().map(|r| r.1).collect::<Vec<_>>())),
        fmt_cell(mean_defined(&rows.iter().map(|r| r.2).collect::<Vec<_>>()))
    );
    csv.push_str(&mean_line);
    csv.push('\n');
    write_text(out, &csv)?;
    println!("{mean_line}");
    Ok(())
}

// ---------------------------------------------------------- stub-server

pub fn cmd_stub_server(port: u16, responses: Option<&Path>) -> Result<()> {
    let config = match responses {
        Some(path) => StubConfig::from_json(&read_text(path)?)?,
        None => StubConfig::default(),
    };
    let server = StubServer::start(config, port)?;
    println!("ranking endpoint:   {}", server.mllm_url());
    println!("grounding endpoint: {}", server.ground_url());
    println!("serving until interrupted");
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}
