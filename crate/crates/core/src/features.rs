//! Low-level feature extraction: the 19-map stack feeding the saliency model.
//!
//! Stack layout (fixed):
//!
//! | index | map |
//! |-------|-----|
//! | 0..12 | oriented band-pass magnitudes, scale-major: for each dyadic scale 0, 1, 2 the orientations 0, 45, 90, 135 degrees |
//! | 12    | high-pass residual magnitude |
//! | 13..18| broadly tuned color channels `F_R, F_G, F_B, F_Y`, intensity `F_I`, skin likelihood `F_SK` |
//!
//! Orientation is the direction of intensity variation measured from the +x
//! axis: the 0-degree band responds to vertical stripes.

use crate::image::{ScalarMap, RgbFrame};

/// Side of the working resolution all 19 maps are computed at.
pub const MAP_SIDE: usize = 200;
/// Number of maps in the stack.
pub const STACK_SIZE: usize = 19;
/// Oriented band-pass maps (4 orientations x 3 scales) preceding the residual.
pub const ORIENTED_SUBBANDS: usize = 12;

const ORIENTATIONS: [f64; 4] = [0.0, 45.0, 90.0, 135.0];
const SCALES: usize = 3;
const FILTER_RADIUS: i64 = 4;

/// Skin-likelihood model: an unnormalized Gaussian in normalized (r, g)
/// chromaticity, so the value at the mode is exactly 1.
#[derive(Debug, Clone, Copy)]
pub struct SkinParams {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Default for SkinParams {
    fn default() -> Self {
        Self { mean: [0.43, 0.31], std: [0.08, 0.05] }
    }
}

/// The 19 feature maps at [`MAP_SIDE`] resolution, each min-max normalized
/// to `[0, 1]` (constant maps normalize to all zeros).
#[derive(Debug, Clone)]
pub struct FeatureStack {
    maps: Vec<ScalarMap>,
}

impl FeatureStack {
    pub fn maps(&self) -> &[ScalarMap] {
        &self.maps
    }

    pub fn map(&self, i: usize) -> &ScalarMap {
        &self.maps[i]
    }

    /// Test/fixture constructor; panics unless exactly 19 maps of
    /// `MAP_SIDE` x `MAP_SIDE` are supplied.
    pub fn from_maps(maps: Vec<ScalarMap>) -> Self {
        assert_eq!(maps.len(), STACK_SIZE);
        for m in &maps {
            assert_eq!((m.width(), m.height()), (MAP_SIDE, MAP_SIDE));
        }
        Self { maps }
    }
}

/// The four broadly tuned color channels plus intensity, in stack order
/// `(F_R, F_G, F_B, F_Y, F_I)`, computed per pixel at the frame's resolution.
pub fn color_channels(frame: &RgbFrame) -> [ScalarMap; 5] {
    let (w, h) = (frame.width(), frame.height());
    let n = w * h;
    let mut out: [Vec<f64>; 5] = std::array::from_fn(|_| Vec::with_capacity(n));
    for i in 0..n {
        let (r, g, b) = (frame.red()[i], frame.green()[i], frame.blue()[i]);
        out[0].push(r - (g + b) / 2.0);
        out[1].push(g - (r + b) / 2.0);
        out[2].push(b - (r + g) / 2.0);
        out[3].push((r + g) / 2.0 - (r - g).abs() / 2.0 - b);
        out[4].push((r + g + b) / 3.0);
    }
    out.map(|data| ScalarMap::from_vec(w, h, data))
}

/// Per-pixel skin likelihood in `[0, 1]`; zero-intensity pixels score 0.
pub fn skin_map(frame: &RgbFrame, params: &SkinParams) -> ScalarMap {
    let (w, h) = (frame.width(), frame.height());
    let data = (0..w * h)
        .map(|i| {
            let (r, g, b) = (frame.red()[i], frame.green()[i], frame.blue()[i]);
            skin_likelihood(r, g, b, params)
        })
        .collect();
    ScalarMap::from_vec(w, h, data)
}

/// Scalar form of the skin model, exposed for oracle tests.
pub fn skin_likelihood(r: f64, g: f64, b: f64, params: &SkinParams) -> f64 {
    let sum = r + g + b;
    if sum < 1e-12 {
        return 0.0;
    }
    let rn = r / sum;
    let gn = g / sum;
    let zr = (rn - params.mean[0]) / params.std[0];
    let zg = (gn - params.mean[1]) / params.std[1];
    (-0.5 * (zr * zr + zg * zg)).exp().clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Steerable band-pass decomposition.
//
// Three separable 9-tap filters derived from a sigma = 1 Gaussian:
//   g   — the Gaussian itself, normalized to sum 1;
//   g'  — first derivative samples  -x exp(-x^2/2)  (odd, zero sum);
//   g'' — second derivative samples (x^2 - 1) exp(-x^2/2), mean-subtracted
//         so the truncated kernel has exactly zero DC.
// The oriented second-derivative filter at angle t steers as
//   cos^2(t) Gxx + 2 cos(t) sin(t) Gxy + sin^2(t) Gyy
// with the separable bases Gxx = g''(x) g(y), Gxy = g'(x) g'(y),
// Gyy = g(x) g''(y).
// ---------------------------------------------------------------------------

fn gauss_taps() -> Vec<f64> {
    let mut taps: Vec<f64> = (-FILTER_RADIUS..=FILTER_RADIUS)
        .map(|i| (-(i * i) as f64 / 2.0).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

fn deriv1_taps() -> Vec<f64> {
    (-FILTER_RADIUS..=FILTER_RADIUS)
        .map(|i| -(i as f64) * (-(i * i) as f64 / 2.0).exp())
        .collect()
}

fn deriv2_taps() -> Vec<f64> {
    let mut taps: Vec<f64> = (-FILTER_RADIUS..=FILTER_RADIUS)
        .map(|i| ((i * i) as f64 - 1.0) * (-(i * i) as f64 / 2.0).exp())
        .collect();
    let mean: f64 = taps.iter().sum::<f64>() / taps.len() as f64;
    for t in &mut taps {
        *t -= mean;
    }
    taps
}

/// Mirror index for symmetric boundary reflection.
#[inline]
fn reflect(i: i64, n: i64) -> usize {
    let mut i = i;
    if i < 0 {
        i = -i - 1;
    }
    if i >= n {
        i = 2 * n - 1 - i;
    }
    i.clamp(0, n - 1) as usize
}

fn convolve_rows(map: &ScalarMap, taps: &[f64]) -> ScalarMap {
    let (w, h) = (map.width(), map.height());
    let r = (taps.len() / 2) as i64;
    ScalarMap::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (k, &t) in taps.iter().enumerate() {
            let xi = reflect(x as i64 + k as i64 - r, w as i64);
            acc += t * map.get(xi, y);
        }
        acc
    })
}

fn convolve_cols(map: &ScalarMap, taps: &[f64]) -> ScalarMap {
    let (w, h) = (map.width(), map.height());
    let r = (taps.len() / 2) as i64;
    ScalarMap::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (k, &t) in taps.iter().enumerate() {
            let yi = reflect(y as i64 + k as i64 - r, h as i64);
            acc += t * map.get(x, yi);
        }
        acc
    })
}

fn separable(map: &ScalarMap, taps_x: &[f64], taps_y: &[f64]) -> ScalarMap {
    convolve_cols(&convolve_rows(map, taps_x), taps_y)
}

/// Blur with the Gaussian, then keep every second pixel.
fn downsample(map: &ScalarMap, gauss: &[f64]) -> ScalarMap {
    let blurred = separable(map, gauss, gauss);
    let (w, h) = (map.width().div_ceil(2), map.height().div_ceil(2));
    ScalarMap::from_fn(w, h, |x, y| blurred.get(2 * x, 2 * y))
}

/// 13-map band-pass decomposition of an intensity map: 12 oriented
/// second-derivative magnitudes (4 orientations x 3 dyadic scales, each
/// upsampled back to the input resolution) followed by the high-pass
/// residual magnitude.
pub fn steerable_subbands(intensity: &ScalarMap) -> Vec<ScalarMap> {
    let (w, h) = (intensity.width(), intensity.height());
    let g = gauss_taps();
    let g1 = deriv1_taps();
    let g2 = deriv2_taps();

    let mut out = Vec::with_capacity(13);
    let mut level = intensity.clone();
    for scale in 0..SCALES {
        let gxx = separable(&level, &g2, &g);
        let gxy = separable(&level, &g1, &g1);
        let gyy = separable(&level, &g, &g2);
        for deg in ORIENTATIONS {
            let t = deg.to_radians();
            let (ka, kb, kc) = (t.cos() * t.cos(), 2.0 * t.cos() * t.sin(), t.sin() * t.sin());
            let mut resp = ScalarMap::from_fn(level.width(), level.height(), |x, y| {
                (ka * gxx.get(x, y) + kb * gxy.get(x, y) + kc * gyy.get(x, y)).abs()
            });
            if scale > 0 {
                resp = resp.resize(w, h);
            }
            out.push(resp);
        }
        if scale + 1 < SCALES {
            level = downsample(&level, &g);
        }
    }

    let lowpass = separable(intensity, &g, &g);
    out.push(ScalarMap::from_fn(w, h, |x, y| (intensity.get(x, y) - lowpass.get(x, y)).abs()));
    out
}

/// Resizes the frame to [`MAP_SIDE`] and computes all 19 maps in stack
/// order, each independently min-max normalized.
pub fn build_feature_stack(frame: &RgbFrame, skin: &SkinParams) -> FeatureStack {
    let small = frame.resize(MAP_SIDE, MAP_SIDE);
    let colors = color_channels(&small);
    let mut maps = steerable_subbands(&colors[4]);
    maps.extend(colors);
    maps.push(skin_map(&small, skin));
    debug_assert_eq!(maps.len(), STACK_SIZE);
    FeatureStack { maps: maps.iter().map(ScalarMap::normalized).collect() }
}
