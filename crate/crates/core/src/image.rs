//! Frame, patch and scalar-map containers plus the sampling primitives
//! (bilinear lookup, resize, color conversion) shared by the whole pipeline.
//!
//! Conventions used everywhere in this crate:
//! - pixel `(x, y)` of an image occupies the unit square `[x, x+1) x [y, y+1)`
//!   and its sample point sits at the center `(x + 0.5, y + 0.5)`;
//! - sampling outside the image reads 0;
//! - patches are vectorized row-major (`y * side + x`).

use crate::error::{Error, Result};

/// A decoded RGB frame with channel values in `[0, 1]`, stored planar.
#[derive(Debug, Clone)]
pub struct RgbFrame {
    width: usize,
    height: usize,
    r: Vec<f64>,
    g: Vec<f64>,
    b: Vec<f64>,
}

impl RgbFrame {
    pub fn new(width: usize, height: usize, r: Vec<f64>, g: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "frame dimensions must be >= 1, got {width}x{height}"
            )));
        }
        let n = width * height;
        if r.len() != n || g.len() != n || b.len() != n {
            return Err(Error::InvalidImage(format!(
                "channel length mismatch: expected {n}, got {}/{}/{}",
                r.len(),
                g.len(),
                b.len()
            )));
        }
        for plane in [&r, &g, &b] {
            if plane.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidImage("channel value outside [0, 1]".into()));
            }
        }
        Ok(Self { width, height, r, g, b })
    }

    /// Builds a frame by evaluating `f(x, y) -> (r, g, b)`; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f64, f64, f64)) -> Self {
        let n = width * height;
        let (mut r, mut g, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for y in 0..height {
            for x in 0..width {
                let (pr, pg, pb) = f(x, y);
                r.push(pr.clamp(0.0, 1.0));
                g.push(pg.clamp(0.0, 1.0));
                b.push(pb.clamp(0.0, 1.0));
            }
        }
        Self { width, height, r, g, b }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> (f64, f64, f64) {
        let i = y * self.width + x;
        (self.r[i], self.g[i], self.b[i])
    }

    pub fn red(&self) -> &[f64] {
        &self.r
    }

    pub fn green(&self) -> &[f64] {
        &self.g
    }

    pub fn blue(&self) -> &[f64] {
        &self.b
    }

    /// Grayscale intensity `(r + g + b) / 3` as a scalar map.
    pub fn intensity(&self) -> ScalarMap {
        let data = (0..self.r.len())
            .map(|i| (self.r[i] + self.g[i] + self.b[i]) / 3.0)
            .collect();
        ScalarMap::from_vec(self.width, self.height, data)
    }

    /// Bilinear resize of all three channels.
    pub fn resize(&self, width: usize, height: usize) -> RgbFrame {
        RgbFrame {
            width,
            height,
            r: resize_plane(&self.r, self.width, self.height, width, height),
            g: resize_plane(&self.g, self.width, self.height, width, height),
            b: resize_plane(&self.b, self.width, self.height, width, height),
        }
    }
}

/// A single-channel scalar field (feature map, saliency map, intensity plane).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "scalar map length mismatch");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarMap {
        ScalarMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Min-max normalization to `[0, 1]`; a constant map normalizes to all zeros.
    pub fn normalized(&self) -> ScalarMap {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        if span <= f64::EPSILON * lo.abs().max(hi.abs()).max(1.0) {
            return ScalarMap::zeros(self.width, self.height);
        }
        self.map(|v| (v - lo) / span)
    }

    pub fn resize(&self, width: usize, height: usize) -> ScalarMap {
        ScalarMap {
            width,
            height,
            data: resize_plane(&self.data, self.width, self.height, width, height),
        }
    }
}

/// A square grayscale patch with intensities in `[0, 1]`, vectorized row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayPatch {
    side: usize,
    data: Vec<f64>,
}

impl GrayPatch {
    pub fn new(side: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), side * side, "gray patch length mismatch");
        Self { side, data }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.side + x]
    }
}

/// A square RGB patch, planar storage, values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ColorPatch {
    side: usize,
    r: Vec<f64>,
    g: Vec<f64>,
    b: Vec<f64>,
}

impl ColorPatch {
    pub fn new(side: usize, r: Vec<f64>, g: Vec<f64>, b: Vec<f64>) -> Self {
        assert_eq!(r.len(), side * side, "color patch length mismatch");
        assert_eq!(g.len(), side * side, "color patch length mismatch");
        assert_eq!(b.len(), side * side, "color patch length mismatch");
        Self { side, r, g, b }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> (f64, f64, f64) {
        let i = y * self.side + x;
        (self.r[i], self.g[i], self.b[i])
    }

    /// Converts the whole patch to HSV with all channels scaled to `[0, 1]`.
    pub fn to_hsv(&self) -> HsvPatch {
        let n = self.side * self.side;
        let (mut h, mut s, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let (ph, ps, pv) = rgb_to_hsv(self.r[i], self.g[i], self.b[i]);
            h.push(ph);
            s.push(ps);
            v.push(pv);
        }
        HsvPatch { side: self.side, h, s, v }
    }
}

/// A square HSV patch; hue is scaled from degrees to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct HsvPatch {
    side: usize,
    h: Vec<f64>,
    s: Vec<f64>,
    v: Vec<f64>,
}

impl HsvPatch {
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> (f64, f64, f64) {
        let i = y * self.side + x;
        (self.h[i], self.s[i], self.v[i])
    }
}

/// Standard hexcone RGB -> HSV, every output channel in `[0, 1]`.
///
/// Gray pixels (zero chroma) get hue 0 by definition.
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let v = max;
    if chroma <= 0.0 {
        return (0.0, 0.0, v);
    }
    // Hue in units of 60 degrees, then scaled so one full turn is 1.
    let h6 = if max == r {
        ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    let s = if v > 0.0 { chroma / v } else { 0.0 };
    (h6 / 6.0, s, v)
}

/// Inverse of [`rgb_to_hsv`] (hue in `[0, 1]`).
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h * 6.0).rem_euclid(6.0);
    let chroma = v * s;
    let x = chroma * (1.0 - (h6.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match h6 as usize {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = v - chroma;
    (r1 + m, g1 + m, b1 + m)
}

/// Bilinear lookup at continuous coordinates with the pixel-center convention;
/// out-of-bounds contributions read 0.
#[inline]
pub fn sample_bilinear(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let fx = x - 0.5;
    let fy = y - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let wx = fx - x0;
    let wy = fy - y0;
    let x0 = x0 as i64;
    let y0 = y0 as i64;

    let fetch = |xi: i64, yi: i64| -> f64 {
        if xi < 0 || yi < 0 || xi >= width as i64 || yi >= height as i64 {
            0.0
        } else {
            data[yi as usize * width + xi as usize]
        }
    };

    fetch(x0, y0) * (1.0 - wx) * (1.0 - wy)
        + fetch(x0 + 1, y0) * wx * (1.0 - wy)
        + fetch(x0, y0 + 1) * (1.0 - wx) * wy
        + fetch(x0 + 1, y0 + 1) * wx * wy
}

/// Bilinear resample of one plane onto a new grid.
///
/// Output pixel centers map linearly onto the source so the image area is
/// preserved: output center `(i + 0.5) * (src / dst)`. Source lookups clamp at
/// the border rather than reading 0, so constant images stay constant.
pub fn resize_plane(
    data: &[f64],
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> Vec<f64> {
    assert!(dst_w >= 1 && dst_h >= 1);
    let sx = src_w as f64 / dst_w as f64;
    let sy = src_h as f64 / dst_h as f64;
    let mut out = Vec::with_capacity(dst_w * dst_h);
    for j in 0..dst_h {
        let y = (j as f64 + 0.5) * sy - 0.5;
        let y0f = y.floor();
        let wy = y - y0f;
        let y0 = (y0f as i64).clamp(0, src_h as i64 - 1) as usize;
        let y1 = (y0f as i64 + 1).clamp(0, src_h as i64 - 1) as usize;
        for i in 0..dst_w {
            let x = (i as f64 + 0.5) * sx - 0.5;
            let x0f = x.floor();
            let wx = x - x0f;
            let x0 = (x0f as i64).clamp(0, src_w as i64 - 1) as usize;
            let x1 = (x0f as i64 + 1).clamp(0, src_w as i64 - 1) as usize;
            let v = data[y0 * src_w + x0] * (1.0 - wx) * (1.0 - wy)
                + data[y0 * src_w + x1] * wx * (1.0 - wy)
                + data[y1 * src_w + x0] * (1.0 - wx) * wy
                + data[y1 * src_w + x1] * wx * wy;
            out.push(v);
        }
    }
    out
}
