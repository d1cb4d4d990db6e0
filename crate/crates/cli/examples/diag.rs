//! Prints per-frame diagnostics for a sequence (development aid).

use sht_cli::sequence::{load_frame, load_sequence};
use sht_core::{Tracker, TrackerConfig};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).expect("usage: diag SEQ_DIR [nsgs]");
    let seq = load_sequence(std::path::Path::new(&dir))?;
    let mut cfg = TrackerConfig::default();
    if std::env::args().nth(2).as_deref() == Some("nsgs") {
        cfg.disable_global = true;
    }
    let first = load_frame(&seq.frames[0])?;
    let mut tracker = Tracker::init(&first, seq.groundtruth[0], cfg)?;
    println!("w_S after init: {:?}", tracker.weights().0);
    for (i, path) in seq.frames.iter().enumerate().skip(1) {
        let frame = load_frame(path)?;
        let (est, diag) = tracker.step(&frame)?;
        let b = tracker.estimate_box();
        let gt = seq.groundtruth.get(i);
        let ov = gt.map(|g| sht_cli::metrics::overlap_rate(&b, g)).unwrap_or(-1.0);
        println!(
            "frame {:3} mode {:<14} regions {:2} cand {:2} theta* {:>7} conf {:.3} ov {:.3} est ({:.0},{:.0})",
            i + 1,
            diag.mode.as_str(),
            diag.regions,
            diag.candidates,
            diag.global_confidence.map_or("--".into(), |t| format!("{t:.3}")),
            diag.confidence,
            ov,
            est.d1,
            est.d2,
        );
    }
    Ok(())
}
