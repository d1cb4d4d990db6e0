//! OTB-layout sequence ingestion: an `img/` directory of numbered frames
//! plus a `groundtruth_rect.txt` with one 1-based `x,y,w,h` line per frame.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sht_core::{BoundingBox, RgbFrame};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("sequence directory {0} has no img/ folder")]
    MissingImageDir(PathBuf),

    #[error("no image files found under {0}")]
    NoFrames(PathBuf),

    #[error("missing groundtruth file {0}")]
    MissingGroundtruth(PathBuf),

    #[error("groundtruth file {0} is empty")]
    EmptyGroundtruth(PathBuf),

    #[error("{path}:{line}: malformed groundtruth line {content:?} (expected x,y,w,h)")]
    MalformedLine { path: PathBuf, line: usize, content: String },

    #[error("{path}:{line}: box {content:?} has width or height < 1")]
    DegenerateBox { path: PathBuf, line: usize, content: String },

    #[error("groundtruth has {gt} lines but only {frames} frames exist")]
    CountMismatch { gt: usize, frames: usize },

    #[error("failed to read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("failed to decode {path}: {source}")]
    Decode { path: PathBuf, source: image::ImageError },
}

/// An on-disk sequence: ordered frame paths and 0-based groundtruth boxes.
#[derive(Debug, Clone)]
pub struct SequenceSpec {
    pub name: String,
    pub frames: Vec<PathBuf>,
    pub groundtruth: Vec<BoundingBox>,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Loads a sequence directory; frames sort lexicographically (OTB frames
/// are zero-padded), 1-based groundtruth converts to 0-based.
pub fn load_sequence(dir: &Path) -> Result<SequenceSpec, SequenceError> {
    let img_dir = dir.join("img");
    if !img_dir.is_dir() {
        return Err(SequenceError::MissingImageDir(dir.to_path_buf()));
    }
    let mut frames: Vec<PathBuf> = fs::read_dir(&img_dir)
        .map_err(|source| SequenceError::Io { path: img_dir.clone(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(SequenceError::NoFrames(img_dir));
    }

    let gt_path = dir.join("groundtruth_rect.txt");
    if !gt_path.is_file() {
        return Err(SequenceError::MissingGroundtruth(gt_path));
    }
    let groundtruth = parse_groundtruth(&gt_path)?;
    if groundtruth.len() > frames.len() {
        return Err(SequenceError::CountMismatch { gt: groundtruth.len(), frames: frames.len() });
    }

    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".to_string());
    Ok(SequenceSpec { name, frames, groundtruth })
}

/// Parses `groundtruth_rect.txt`: comma, tab or space separated, 1-based.
pub fn parse_groundtruth(path: &Path) -> Result<Vec<BoundingBox>, SequenceError> {
    let text = fs::read_to_string(path).map_err(|source| SequenceError::Io { path: path.to_path_buf(), source })?;
    let mut boxes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| SequenceError::MalformedLine {
                path: path.to_path_buf(),
                line: idx + 1,
                content: raw.to_string(),
            })?;
        if fields.len() != 4 {
            return Err(SequenceError::MalformedLine {
                path: path.to_path_buf(),
                line: idx + 1,
                content: raw.to_string(),
            });
        }
        if fields[2] < 1.0 || fields[3] < 1.0 {
            return Err(SequenceError::DegenerateBox {
                path: path.to_path_buf(),
                line: idx + 1,
                content: raw.to_string(),
            });
        }
        boxes.push(BoundingBox::new(fields[0] - 1.0, fields[1] - 1.0, fields[2], fields[3]));
    }
    if boxes.is_empty() {
        return Err(SequenceError::EmptyGroundtruth(path.to_path_buf()));
    }
    Ok(boxes)
}

/// Writes boxes back in the OTB format (1-based corner, comma separated).
pub fn write_groundtruth(path: &Path, boxes: &[BoundingBox]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    for b in boxes {
        writeln!(f, "{},{},{},{}", b.x + 1.0, b.y + 1.0, b.w, b.h)?;
    }
    Ok(())
}

/// Decodes an image file into the tracker's normalized frame type.
pub fn load_frame(path: &Path) -> Result<RgbFrame, SequenceError> {
    let img = image::open(path)
        .map_err(|source| SequenceError::Decode { path: path.to_path_buf(), source })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(RgbFrame::from_fn(w, h, |x, y| {
        let p = img.get_pixel(x as u32, y as u32);
        (p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn scaffold(dir: &Path, gt: &str, n_frames: usize) {
        fs::create_dir_all(dir.join("img")).unwrap();
        for i in 0..n_frames {
            let img = image::RgbImage::from_pixel(8, 8, image::Rgb([64, 128, 192]));
            img.save(dir.join("img").join(format!("{:04}.png", i + 1))).unwrap();
        }
        fs::write(dir.join("groundtruth_rect.txt"), gt).unwrap();
    }

    #[test]
    fn one_based_coordinates_convert() {
        let tmp = tempfile::tempdir().unwrap();
        scaffold(tmp.path(), "100,50,30,40\n", 1);
        let seq = load_sequence(tmp.path()).unwrap();
        assert_eq!(seq.groundtruth.len(), 1);
        let b = seq.groundtruth[0];
        assert_eq!((b.x, b.y, b.w, b.h), (99.0, 49.0, 30.0, 40.0));
    }

    #[test]
    fn tabs_and_spaces_parse_identically() {
        let tmp = tempfile::tempdir().unwrap();
        scaffold(tmp.path(), "100\t50\t30\t40\n10 20 5 6\n", 2);
        let seq = load_sequence(tmp.path()).unwrap();
        assert_eq!(seq.groundtruth[0], BoundingBox::new(99.0, 49.0, 30.0, 40.0));
        assert_eq!(seq.groundtruth[1], BoundingBox::new(9.0, 19.0, 5.0, 6.0));
    }

    #[test]
    fn empty_groundtruth_names_the_file() {
        let tmp = tempfile::tempdir().unwrap();
        scaffold(tmp.path(), "", 1);
        let err = load_sequence(tmp.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("groundtruth_rect.txt"), "{msg}");
        assert!(matches!(err, SequenceError::EmptyGroundtruth(_)));
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let tmp = tempfile::tempdir().unwrap();
        scaffold(tmp.path(), "1,2,3,4\n5,6,seven,8\n", 2);
        let err = load_sequence(tmp.path()).unwrap_err();
        match &err {
            SequenceError::MalformedLine { line, .. } => assert_eq!(*line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(err.to_string().contains(":2:"));
    }

    #[test]
    fn missing_pieces_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_sequence(tmp.path()), Err(SequenceError::MissingImageDir(_))));
        fs::create_dir_all(tmp.path().join("img")).unwrap();
        assert!(matches!(load_sequence(tmp.path()), Err(SequenceError::NoFrames(_))));
        let img = image::RgbImage::from_pixel(4, 4, image::Rgb([0, 0, 0]));
        img.save(tmp.path().join("img/0001.png")).unwrap();
        assert!(matches!(load_sequence(tmp.path()), Err(SequenceError::MissingGroundtruth(_))));
    }

    #[test]
    fn too_many_groundtruth_lines_error() {
        let tmp = tempfile::tempdir().unwrap();
        scaffold(tmp.path(), "1,2,3,4\n1,2,3,4\n1,2,3,4\n", 2);
        assert!(matches!(
            load_sequence(tmp.path()),
            Err(SequenceError::CountMismatch { gt: 3, frames: 2 })
        ));
    }

    #[test]
    fn groundtruth_round_trips_bit_exactly() {
        let tmp = tempfile::tempdir().unwrap();
        let text = "100,50,30,40\n7,8,9,10\n3,4,5,6\n";
        scaffold(tmp.path(), text, 3);
        let seq = load_sequence(tmp.path()).unwrap();
        let rewritten = tmp.path().join("groundtruth_rect.txt");
        write_groundtruth(&rewritten, &seq.groundtruth).unwrap();
        assert_eq!(fs::read_to_string(&rewritten).unwrap(), text);
        let reloaded = load_sequence(tmp.path()).unwrap();
        assert_eq!(reloaded.groundtruth, seq.groundtruth);
    }
}
