//! Sequence drivers shared by the `track` and `bench` subcommands.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use rayon::prelude::*;
use sht_core::{BoundingBox, Tracker, TrackerConfig};

use crate::metrics::{AggregateReport, MetricsReport};
use crate::sequence::{load_frame, load_sequence, SequenceSpec};

/// One row of `results.csv`.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub frame: usize,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub mode: &'static str,
}

/// Outcome of tracking one sequence.
pub struct TrackRun {
    pub rows: Vec<ResultRow>,
    pub report: MetricsReport,
}

/// Runs the tracker over a loaded sequence. The first groundtruth box
/// initializes the tracker; every frame (including the first) yields a row.
pub fn track_sequence(seq: &SequenceSpec, config: &TrackerConfig) -> anyhow::Result<TrackRun> {
    if seq.groundtruth.is_empty() {
        bail!("sequence {} has no groundtruth to initialize from", seq.name);
    }
    let first = load_frame(&seq.frames[0])?;
    let mut tracker = Tracker::init(&first, seq.groundtruth[0], config.clone())?;
    let mut rows = vec![ResultRow {
        frame: 1,
        bbox: tracker.estimate_box(),
        confidence: 1.0,
        mode: "init",
    }];
    let mut step_seconds = 0.0;
    for (i, path) in seq.frames.iter().enumerate().skip(1) {
        let frame = load_frame(path)?;
        let start = Instant::now();
        let (_, diag) = tracker.step(&frame)?;
        step_seconds += start.elapsed().as_secs_f64();
        rows.push(ResultRow {
            frame: i + 1,
            bbox: tracker.estimate_box(),
            confidence: diag.confidence,
            mode: diag.mode.as_str(),
        });
    }
    let mean_step = if seq.frames.len() > 1 {
        step_seconds / (seq.frames.len() - 1) as f64
    } else {
        0.0
    };
    let predictions: Vec<BoundingBox> = rows.iter().map(|r| r.bbox).collect();
    let report = MetricsReport::compute(&seq.name, &predictions, &seq.groundtruth, mean_step);
    Ok(TrackRun { rows, report })
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> anyhow::Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "frame,x,y,w,h,confidence,mode")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.frame, r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h, r.confidence, r.mode
        )?;
    }
    Ok(())
}

pub fn write_metrics_json(path: &Path, report: &MetricsReport) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Draws the predicted box onto each frame and saves annotated PNGs.
pub fn annotate_sequence(seq: &SequenceSpec, rows: &[ResultRow], out_dir: &Path) -> anyhow::Result<()> {
    let dir = out_dir.join("annotated");
    fs::create_dir_all(&dir)?;
    for (path, row) in seq.frames.iter().zip(rows) {
        let mut img = image::open(path)?.to_rgb8();
        draw_box(&mut img, &row.bbox, image::Rgb([255, 40, 40]));
        img.save(dir.join(format!("{:04}.png", row.frame)))?;
    }
    Ok(())
}

fn draw_box(img: &mut image::RgbImage, b: &BoundingBox, color: image::Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, y0) = (b.x.round() as i64, b.y.round() as i64);
    let (x1, y1) = ((b.x + b.w).round() as i64, (b.y + b.h).round() as i64);
    let mut put = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && x < w && y < h {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    for t in 0..2i64 {
        for x in x0..=x1 {
            put(x, y0 + t);
            put(x, y1 - t);
        }
        for y in y0..=y1 {
            put(x0 + t, y);
            put(x1 - t, y);
        }
    }
}

/// Runs `track` end to end for one sequence directory, writing
/// `results.csv`, `metrics.json` and optional annotated frames.
pub fn run_track(
    seq_dir: &Path,
    out_dir: &Path,
    config: &TrackerConfig,
    annotate: bool,
) -> anyhow::Result<MetricsReport> {
    let seq = load_sequence(seq_dir)?;
    fs::create_dir_all(out_dir)?;
    let run = track_sequence(&seq, config)?;
    write_results_csv(&out_dir.join("results.csv"), &run.rows)?;
    write_metrics_json(&out_dir.join("metrics.json"), &run.report)?;
    if annotate {
        annotate_sequence(&seq, &run.rows, out_dir)?;
    }
    Ok(run.report)
}

/// Runs every sequence in the list (in parallel, one tracker each) and
/// writes per-sequence outputs plus the aggregate `metrics.json`.
pub fn run_bench(
    seq_dirs: &[std::path::PathBuf],
    out_dir: &Path,
    config: &TrackerConfig,
) -> anyhow::Result<AggregateReport> {
    if seq_dirs.is_empty() {
        bail!("sequence list is empty");
    }
    fs::create_dir_all(out_dir)?;
    let reports: Vec<MetricsReport> = seq_dirs
        .par_iter()
        .map(|dir| {
            let seq = load_sequence(dir)?;
            let sub = out_dir.join(&seq.name);
            fs::create_dir_all(&sub)?;
            let run = track_sequence(&seq, config)?;
            write_results_csv(&sub.join("results.csv"), &run.rows)?;
            write_metrics_json(&sub.join("metrics.json"), &run.report)?;
            Ok(run.report)
        })
        .collect::<anyhow::Result<_>>()?;
    let aggregate = AggregateReport::from_reports(reports);
    fs::write(out_dir.join("metrics.json"), serde_json::to_string_pretty(&aggregate)?)?;
    Ok(aggregate)
}
