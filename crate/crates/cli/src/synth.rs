//! Synthetic benchmark sequences with exact groundtruth, rendered to disk
//! in the OTB layout. Everything is a pure function of the seed.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sht_core::BoundingBox;

use crate::sequence::{load_sequence, write_groundtruth, SequenceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Two-tone textured square drifting on a slow closed curve.
    SmoothMotion,
    /// Skin-toned ellipse that teleports more than 50 px every 50 frames.
    AbruptJump,
    /// Smooth motion with a vertical bar the target passes behind.
    Occlusion,
    /// Fixed-color square whose width/height oscillate.
    ColorConstantDeformation,
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "smooth-motion" => Ok(Scenario::SmoothMotion),
            "abrupt-jump" => Ok(Scenario::AbruptJump),
            "occlusion" => Ok(Scenario::Occlusion),
            "color-constant-deformation" => Ok(Scenario::ColorConstantDeformation),
            other => Err(format!(
                "unknown scenario {other:?}; expected smooth-motion, abrupt-jump, occlusion or color-constant-deformation"
            )),
        }
    }
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::SmoothMotion => "smooth-motion",
            Scenario::AbruptJump => "abrupt-jump",
            Scenario::Occlusion => "occlusion",
            Scenario::ColorConstantDeformation => "color-constant-deformation",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub scenario: Scenario,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Smooth-path speed bound in pixels per frame.
    pub speed: f64,
}

impl SynthSpec {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self { scenario, frames: 200, width: 640, height: 360, seed, speed: 3.0 }
    }
}

/// Per-pixel deterministic hash noise in [0, 1) (order-independent).
fn hash_noise(x: usize, y: usize, seed: u64) -> f64 {
    let mut z = seed ^ (x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (y as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

struct Background {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl Background {
    /// Static clutter: cool-hued soft blobs over a dark gradient, plus mild
    /// pixel noise. Hues stay far from skin chromaticity so the saliency
    /// model can discriminate the abrupt-jump target.
    fn render(width: usize, height: usize, rng: &mut ChaCha12Rng, seed: u64) -> Self {
        struct Blob {
            cx: f64,
            cy: f64,
            radius: f64,
            color: [f64; 3],
        }
        let blobs: Vec<Blob> = (0..14)
            .map(|_| {
                let hue_pick: f64 = rng.random();
                // blue/teal/purple palette
                let color = if hue_pick < 0.4 {
                    [0.10 + 0.1 * rng.random::<f64>(), 0.25 + 0.2 * rng.random::<f64>(), 0.45 + 0.3 * rng.random::<f64>()]
                } else if hue_pick < 0.7 {
                    [0.10 + 0.1 * rng.random::<f64>(), 0.40 + 0.25 * rng.random::<f64>(), 0.35 + 0.2 * rng.random::<f64>()]
                } else {
                    [0.30 + 0.15 * rng.random::<f64>(), 0.15 + 0.1 * rng.random::<f64>(), 0.45 + 0.25 * rng.random::<f64>()]
                };
                Blob {
                    cx: rng.random::<f64>() * width as f64,
                    cy: rng.random::<f64>() * height as f64,
                    radius: 25.0 + rng.random::<f64>() * 60.0,
                    color,
                }
            })
            .collect();
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let grad = 0.10 + 0.08 * (y as f64 / height as f64);
                let mut px = [grad * 0.8, grad, grad * 1.3];
                for b in &blobs {
                    let d2 = ((x as f64 - b.cx).powi(2) + (y as f64 - b.cy).powi(2)) / (b.radius * b.radius);
                    let w = (-d2 * 1.8).exp();
                    for c in 0..3 {
                        px[c] = px[c] * (1.0 - w) + b.color[c] * w;
                    }
                }
                let n = (hash_noise(x, y, seed) - 0.5) * 0.04;
                for c in &mut px {
                    *c = (*c + n).clamp(0.0, 1.0);
                }
                data.push(px);
            }
        }
        Self { width, height, data }
    }
}

/// Integer target box per frame (centers and sizes land on whole pixels so
/// the groundtruth is exact).
fn trajectory(spec: &SynthSpec, rng: &mut ChaCha12Rng) -> Vec<BoundingBox> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let (tw, th) = match spec.scenario {
        Scenario::AbruptJump => (44.0, 54.0),
        _ => (40.0, 40.0),
    };
    let margin_x = tw / 2.0 + 12.0;
    let margin_y = th / 2.0 + 12.0;
    let clamp_center = |cx: f64, cy: f64| {
        (cx.clamp(margin_x, w - margin_x), cy.clamp(margin_y, h - margin_y))
    };

    let mut boxes = Vec::with_capacity(spec.frames);
    match spec.scenario {
        Scenario::SmoothMotion | Scenario::Occlusion => {
            let (cx0, cy0) = (w * 0.35, h * 0.5);
            // sinusoid amplitudes chosen so the per-frame step stays under
            // the configured speed: |dc| <= A * 2 pi / period
            let ax = spec.speed * 120.0 / (2.0 * std::f64::consts::PI) * 0.7;
            let ay = spec.speed * 90.0 / (2.0 * std::f64::consts::PI) * 0.5;
            for t in 0..spec.frames {
                let ft = t as f64;
                let cx = cx0 + ax * (2.0 * std::f64::consts::PI * ft / 120.0).sin();
                let cy = cy0 + ay * (2.0 * std::f64::consts::PI * ft / 90.0 + 1.0).sin();
                let (cx, cy) = clamp_center(cx, cy);
                boxes.push(snap_box(cx, cy, tw, th));
            }
        }
        Scenario::AbruptJump => {
            // anchors far apart: every jump moves the center by hundreds of
            // pixels, far beyond the local search radius
            let anchors = [
                (w * 0.22, h * 0.30),
                (w * 0.76, h * 0.62),
                (w * 0.28, h * 0.70),
                (w * 0.74, h * 0.26),
            ];
            let jitter: Vec<(f64, f64)> = (0..anchors.len())
                .map(|_| ((rng.random::<f64>() - 0.5) * 20.0, (rng.random::<f64>() - 0.5) * 16.0))
                .collect();
            for t in 0..spec.frames {
                let k = (t / 50) % anchors.len();
                let (ax, ay) = anchors[k];
                let (jx, jy) = jitter[k];
                let ft = (t % 50) as f64;
                let cx = ax + jx + 6.0 * (2.0 * std::f64::consts::PI * ft / 40.0).sin();
                let cy = ay + jy + 5.0 * (2.0 * std::f64::consts::PI * ft / 33.0 + 0.7).sin();
                let (cx, cy) = clamp_center(cx, cy);
                boxes.push(snap_box(cx, cy, tw, th));
            }
        }
        Scenario::ColorConstantDeformation => {
            let (cx0, cy0) = (w * 0.5, h * 0.5);
            for t in 0..spec.frames {
                let ft = t as f64;
                let cx = cx0 + 30.0 * (2.0 * std::f64::consts::PI * ft / 150.0).sin();
                let cy = cy0 + 20.0 * (2.0 * std::f64::consts::PI * ft / 110.0).sin();
                let wobble = (2.0 * std::f64::consts::PI * ft / 40.0).sin();
                let dw = (tw * (1.0 + 0.25 * wobble)).round();
                let dh = (th * (1.0 - 0.25 * wobble)).round();
                let (cx, cy) = clamp_center(cx, cy);
                boxes.push(snap_box(cx, cy, dw, dh));
            }
        }
    }
    boxes
}

/// Integer box centered as close as possible to the requested center.
fn snap_box(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new((cx - w / 2.0).round(), (cy - h / 2.0).round(), w.round(), h.round())
}

fn draw_square(px: &mut [[f64; 3]], width: usize, b: &BoundingBox, seed: u64) {
    let (x0, y0, x1, y1) = (b.x as usize, b.y as usize, (b.x + b.w) as usize, (b.y + b.h) as usize);
    let mid_x = b.x + b.w / 2.0;
    for y in y0..y1 {
        for x in x0..x1 {
            // warm left half / cream right half plus a checker texture
            let base = if (x as f64) < mid_x {
                [0.85, 0.33, 0.20]
            } else {
                [0.88, 0.78, 0.30]
            };
            let check = if ((x - x0) / 5 + (y - y0) / 5) % 2 == 0 { 0.0 } else { -0.12 };
            let n = (hash_noise(x - x0, y - y0, seed ^ t_noise()) - 0.5) * 0.03;
            let p = &mut px[y * width + x];
            for c in 0..3 {
                p[c] = (base[c] + check + n).clamp(0.0, 1.0);
            }
        }
    }
}

// domain separator for target-texture noise
const fn t_noise() -> u64 {
    0x5d5d_0a0a_1357_9bdf
}

fn draw_ellipse(px: &mut [[f64; 3]], width: usize, b: &BoundingBox, seed: u64) {
    let (cx, cy) = b.center();
    let (a, bb) = (b.w / 2.0, b.h / 2.0);
    let (x0, y0, x1, y1) = (b.x as usize, b.y as usize, (b.x + b.w) as usize, (b.y + b.h) as usize);
    for y in y0..y1 {
        for x in x0..x1 {
            let u = (x as f64 + 0.5 - cx) / a;
            let v = (y as f64 + 0.5 - cy) / bb;
            let r2 = u * u + v * v;
            if r2 > 1.0 {
                continue;
            }
            // skin-toned everywhere (the chromaticity stays uniform so the
            // skin channel lights the whole ellipse); structure lives in the
            // intensity: radial shading plus gentle diagonal banding
            let bands = 1.0 + 0.10 * (6.0 * (u + 0.6 * v)).sin();
            let shade = (1.0 - 0.30 * r2) * bands;
            let base = [0.80 * shade, 0.53 * shade, 0.43 * shade];
            let n = (hash_noise(x - x0, y - y0, seed ^ t_noise()) - 0.5) * 0.03;
            // antialias the rim
            let alpha = ((1.0 - r2) / 0.08).clamp(0.0, 1.0);
            let p = &mut px[y * width + x];
            for c in 0..3 {
                let t = (base[c] + n).clamp(0.0, 1.0);
                p[c] = p[c] * (1.0 - alpha) + t * alpha;
            }
        }
    }
}

fn draw_occluder(px: &mut [[f64; 3]], width: usize, height: usize, bar_x: usize, bar_w: usize) {
    for y in 0..height {
        for x in bar_x..(bar_x + bar_w).min(width) {
            px[y * width + x] = [0.35, 0.37, 0.40];
        }
    }
}

/// Renders the sequence under `out_dir` (an `img/` folder of PNGs plus
/// `groundtruth_rect.txt`) and returns the loaded spec.
pub fn synth_sequence(spec: &SynthSpec, out_dir: &Path) -> anyhow::Result<SequenceSpec> {
    let img_dir = out_dir.join("img");
    fs::create_dir_all(&img_dir)?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let background = Background::render(spec.width, spec.height, &mut rng, spec.seed);
    let boxes = trajectory(spec, &mut rng);

    // bar sits on the smooth path's mean x so the target passes behind it
    let bar_w = 26usize;
    let bar_x = (spec.width as f64 * 0.35) as usize - bar_w / 2;
    for (t, b) in boxes.iter().enumerate() {
        let mut px = background.data.clone();
        match spec.scenario {
            Scenario::AbruptJump => draw_ellipse(&mut px, background.width, b, spec.seed),
            _ => draw_square(&mut px, background.width, b, spec.seed),
        }
        if spec.scenario == Scenario::Occlusion {
            draw_occluder(&mut px, background.width, background.height, bar_x, bar_w);
        }
        let mut img = image::RgbImage::new(spec.width as u32, spec.height as u32);
        for (i, p) in px.iter().enumerate() {
            let (x, y) = (i % spec.width, i / spec.width);
            img.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([
                    (p[0] * 255.0).round() as u8,
                    (p[1] * 255.0).round() as u8,
                    (p[2] * 255.0).round() as u8,
                ]),
            );
        }
        img.save(img_dir.join(format!("{:04}.png", t + 1)))?;
    }
    write_groundtruth(&out_dir.join("groundtruth_rect.txt"), &boxes)?;
    Ok(load_sequence(out_dir)?)
}
