//! Affine target state, random-walk proposal sampling and MAP selection.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Side of the grayscale appearance template; the affine scale parameter is
/// expressed relative to this, so a state with `scale = s` covers a region
/// `s * TEMPLATE_SIDE` pixels wide.
pub const TEMPLATE_SIDE: usize = 32;

/// Six-parameter affine target state.
///
/// `(d1, d2)` is the region center in frame pixels; `scale` is the region
/// width divided by [`TEMPLATE_SIDE`]; `aspect` is height over width; `skew`
/// shears the vertical axis into the horizontal one before rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineState {
    pub d1: f64,
    pub d2: f64,
    pub theta: f64,
    pub scale: f64,
    pub aspect: f64,
    pub skew: f64,
}

impl AffineState {
    /// Region width and height in frame pixels.
    pub fn extent(&self) -> (f64, f64) {
        let w = self.scale * TEMPLATE_SIDE as f64;
        (w, w * self.aspect)
    }

    /// The 2x2 linear part of the warp taking normalized patch coordinates
    /// `(u, v) in [-0.5, 0.5]^2` to frame offsets from the center.
    pub fn linear(&self) -> [[f64; 2]; 2] {
        let (w, h) = self.extent();
        let (sin, cos) = self.theta.sin_cos();
        // R(theta) * [[w, skew*h], [0, h]]
        [
            [w * cos, h * (self.skew * cos - sin)],
            [w * sin, h * (self.skew * sin + cos)],
        ]
    }

    /// Maps normalized patch coordinates to frame coordinates.
    pub fn to_frame(&self, u: f64, v: f64) -> (f64, f64) {
        let a = self.linear();
        (self.d1 + a[0][0] * u + a[0][1] * v, self.d2 + a[1][0] * u + a[1][1] * v)
    }

    /// Inverse map from frame coordinates to normalized patch coordinates.
    pub fn to_patch(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let a = self.linear();
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if !det.is_finite() || det.abs() < 1e-12 {
            return Err(Error::DegenerateAffine(format!("det = {det}")));
        }
        let dx = x - self.d1;
        let dy = y - self.d2;
        Ok(((a[1][1] * dx - a[0][1] * dy) / det, (-a[1][0] * dx + a[0][0] * dy) / det))
    }
}

/// Per-parameter standard deviations of the random-walk transition model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionCovariance {
    pub sigma: [f64; 6],
}

impl MotionCovariance {
    pub fn new(sigma: [f64; 6]) -> Result<Self> {
        if sigma.iter().any(|&s| !s.is_finite() || s < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "motion standard deviations must be finite and >= 0, got {sigma:?}"
            )));
        }
        Ok(Self { sigma })
    }
}

/// A proposed state together with its observation likelihood.
#[derive(Debug, Clone)]
pub struct Particle {
    pub state: AffineState,
    pub likelihood: f64,
}

/// Samples `n` states around `center` by adding independent zero-mean
/// Gaussian noise per parameter. Fully determined by `seed`.
pub fn propagate(center: &AffineState, psi: &MotionCovariance, n: usize, seed: u64) -> Vec<AffineState> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dists: Vec<Option<Normal<f64>>> = psi
        .sigma
        .iter()
        .map(|&s| if s > 0.0 { Some(Normal::new(0.0, s).expect("finite std")) } else { None })
        .collect();
    let draw = |rng: &mut ChaCha12Rng, i: usize, base: f64| match &dists[i] {
        Some(d) => base + d.sample(rng),
        None => base,
    };
    (0..n)
        .map(|_| AffineState {
            d1: draw(&mut rng, 0, center.d1),
            d2: draw(&mut rng, 1, center.d2),
            theta: draw(&mut rng, 2, center.theta),
            scale: draw(&mut rng, 3, center.scale),
            aspect: draw(&mut rng, 4, center.aspect),
            skew: draw(&mut rng, 5, center.skew),
        })
        .collect()
}

/// State of the maximum-likelihood particle; ties resolve to the lowest index.
pub fn map_estimate(particles: &[Particle]) -> Result<AffineState> {
    let best = particles
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.likelihood
                .total_cmp(&b.likelihood)
                // On equal likelihoods prefer the earlier particle.
                .then(ib.cmp(ia))
        })
        .ok_or(Error::EmptyParticles)?;
    Ok(best.1.state)
}

/// The `k` highest-likelihood particles in descending order (stable).
pub fn top_k(particles: &[Particle], k: usize) -> Result<Vec<Particle>> {
    if k == 0 || k > particles.len() {
        return Err(Error::KOutOfRange { k, len: particles.len() });
    }
    let mut order: Vec<usize> = (0..particles.len()).collect();
    order.sort_by(|&a, &b| {
        particles[b]
            .likelihood
            .total_cmp(&particles[a].likelihood)
            .then(a.cmp(&b))
    });
    Ok(order[..k].iter().map(|&i| particles[i].clone()).collect())
}

/// Deterministic per-frame seed derivation (splitmix64 over the pair).
pub fn derive_seed(seed: u64, frame_index: u64) -> u64 {
    let mut z = seed ^ frame_index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
