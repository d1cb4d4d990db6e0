//! Affine patch extraction and box/state conversions.

use crate::error::{Error, Result};
use crate::image::{sample_bilinear, ColorPatch, GrayPatch, RgbFrame, ScalarMap};
use crate::particle::{AffineState, TEMPLATE_SIDE};

/// Axis-aligned box, corner `(x, y)` plus size, in frame pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Upright state covering this box exactly.
    pub fn to_state(&self) -> Result<AffineState> {
        if self.w < 1.0 || self.h < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "box must be at least 1x1 pixel, got {}x{}",
                self.w, self.h
            )));
        }
        let (cx, cy) = self.center();
        Ok(AffineState {
            d1: cx,
            d2: cy,
            theta: 0.0,
            scale: self.w / TEMPLATE_SIDE as f64,
            aspect: self.h / self.w,
            skew: 0.0,
        })
    }
}

/// Axis-aligned bounding box of the state's warped rectangle.
pub fn state_to_bbox(state: &AffineState) -> BoundingBox {
    let corners = [(-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)];
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (u, v) in corners {
        let (x, y) = state.to_frame(u, v);
        lo = (lo.0.min(x), lo.1.min(y));
        hi = (hi.0.max(x), hi.1.max(y));
    }
    BoundingBox::new(lo.0, lo.1, hi.0 - lo.0, hi.1 - lo.1)
}

fn check_invertible(state: &AffineState) -> Result<()> {
    let a = state.linear();
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::DegenerateAffine(format!(
            "scale {} aspect {} give |det| = {}",
            state.scale,
            state.aspect,
            det.abs()
        )));
    }
    Ok(())
}

fn warp_plane(
    data: &[f64],
    width: usize,
    height: usize,
    state: &AffineState,
    out_side: usize,
) -> Vec<f64> {
    let a = state.linear();
    let n = out_side as f64;
    let mut out = Vec::with_capacity(out_side * out_side);
    for j in 0..out_side {
        let v = (j as f64 + 0.5) / n - 0.5;
        for i in 0..out_side {
            let u = (i as f64 + 0.5) / n - 0.5;
            let x = state.d1 + a[0][0] * u + a[0][1] * v;
            let y = state.d2 + a[1][0] * u + a[1][1] * v;
            out.push(sample_bilinear(data, width, height, x, y));
        }
    }
    out
}

/// Inverse-warps the region described by `state` onto an `out_side` square
/// grid of the frame's grayscale intensity. Out-of-frame samples read 0.
pub fn affine_crop_gray(frame: &RgbFrame, state: &AffineState, out_side: usize) -> Result<GrayPatch> {
    assert!(out_side >= 1);
    check_invertible(state)?;
    let gray = frame.intensity();
    Ok(GrayPatch::new(
        out_side,
        warp_plane(gray.data(), frame.width(), frame.height(), state, out_side),
    ))
}

/// Same warp applied to a precomputed scalar plane.
pub fn affine_crop_plane(plane: &ScalarMap, state: &AffineState, out_side: usize) -> Result<GrayPatch> {
    assert!(out_side >= 1);
    check_invertible(state)?;
    Ok(GrayPatch::new(
        out_side,
        warp_plane(plane.data(), plane.width(), plane.height(), state, out_side),
    ))
}

/// Inverse-warps all three color channels.
pub fn affine_crop_color(frame: &RgbFrame, state: &AffineState, out_side: usize) -> Result<ColorPatch> {
    assert!(out_side >= 1);
    check_invertible(state)?;
    let (w, h) = (frame.width(), frame.height());
    Ok(ColorPatch::new(
        out_side,
        warp_plane(frame.red(), w, h, state, out_side),
        warp_plane(frame.green(), w, h, state, out_side),
        warp_plane(frame.blue(), w, h, state, out_side),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gradient_frame(w: usize, h: usize) -> RgbFrame {
        RgbFrame::from_fn(w, h, |x, y| {
            let v = ((x * 7 + y * 13) % 97) as f64 / 96.0;
            (v, v, v)
        })
    }

    #[test]
    fn identity_on_uniform_region_is_constant() {
        let frame = RgbFrame::from_fn(64, 64, |_, _| (0.25, 0.25, 0.25));
        let state = BoundingBox::new(16.0, 16.0, 16.0, 16.0).to_state().unwrap();
        let patch = affine_crop_gray(&frame, &state, 16).unwrap();
        assert!(patch.data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn integer_translation_equals_direct_crop() {
        let frame = gradient_frame(80, 60);
        let gray = frame.intensity();
        let side = 16usize;
        let (ox, oy) = (21usize, 9usize);
        let state = BoundingBox::new(ox as f64, oy as f64, side as f64, side as f64)
            .to_state()
            .unwrap();
        let patch = affine_crop_gray(&frame, &state, side).unwrap();
        for y in 0..side {
            for x in 0..side {
                assert_eq!(patch.get(x, y), gray.get(ox + x, oy + y), "at ({x},{y})");
            }
        }
    }

    #[test]
    fn quarter_turn_matches_rotated_image_crop() {
        // Rotating the state by 90 degrees must agree with cropping the
        // frame rotated by -90 degrees about the same center.
        let n = 40usize;
        let frame = gradient_frame(n, n);
        let gray = frame.intensity();
        // Pre-rotate the image about its center so that sampling it with an
        // upright box equals sampling the original with the turned box:
        // rotated(p) = gray(m + R(90)(p - m)).
        let rotated = RgbFrame::from_fn(n, n, |x, y| {
            let sx = n - 1 - y;
            let sy = x;
            let v = gray.get(sx, sy);
            (v, v, v)
        });
        let side = 12usize;
        let c = n as f64 / 2.0;
        let upright = BoundingBox::new(c - 6.0, c - 6.0, side as f64, side as f64)
            .to_state()
            .unwrap();
        let mut turned = upright;
        turned.theta = std::f64::consts::FRAC_PI_2;
        let a = affine_crop_gray(&frame, &turned, side).unwrap();
        let b = affine_crop_gray(&rotated, &upright, side).unwrap();
        for (va, vb) in a.data().iter().zip(b.data()) {
            assert!((va - vb).abs() <= 1.0 / 255.0, "{va} vs {vb}");
        }
    }

    #[test]
    fn degenerate_state_errors() {
        let frame = gradient_frame(10, 10);
        let mut state = BoundingBox::new(1.0, 1.0, 4.0, 4.0).to_state().unwrap();
        state.scale = 0.0;
        assert!(affine_crop_gray(&frame, &state, 8).is_err());
    }

    #[test]
    fn box_state_round_trip() {
        let b = BoundingBox::new(12.0, 34.0, 56.0, 27.0);
        let s = b.to_state().unwrap();
        let back = state_to_bbox(&s);
        assert!((back.x - b.x).abs() < 1e-12);
        assert!((back.y - b.y).abs() < 1e-12);
        assert!((back.w - b.w).abs() < 1e-12);
        assert!((back.h - b.h).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn translation_only_crops_exactly(ox in 0usize..40, oy in 0usize..30) {
            let frame = gradient_frame(64, 48);
            let gray = frame.intensity();
            let side = 8usize;
            let state = BoundingBox::new(ox as f64, oy as f64, side as f64, side as f64)
                .to_state()
                .unwrap();
            let patch = affine_crop_gray(&frame, &state, side).unwrap();
            for y in 0..side {
                for x in 0..side {
                    let expect = if ox + x < 64 && oy + y < 48 { gray.get(ox + x, oy + y) } else { 0.0 };
                    prop_assert_eq!(patch.get(x, y), expect);
                }
            }
        }
    }
}
