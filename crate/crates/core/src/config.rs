//! Tracker configuration: every tunable in one place, JSON-loadable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All tracker tunables. `TrackerConfig::default()` gives the reference
/// parameterization; JSON config files may override any subset of fields
/// (unknown keys are rejected).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Particles sampled per local search.
    pub n_particles: usize,
    /// Highest-confidence patches passed to superpixel matching.
    pub n_s: usize,
    /// Candidates entering the linear refinement (1..=10).
    pub n_l: usize,
    /// Ridge weight of the saliency weight update.
    pub lambda_s: f64,
    /// Ridge weight of the refinement solver.
    pub kappa: f64,
    /// Center-prior penalty strength.
    pub delta_s: f64,
    /// Histogram template learning rate.
    pub gamma: f64,
    /// Histogram kernel sharpness.
    pub k_o: f64,
    /// Lower confidence threshold of the integration mechanism.
    pub tau_c: f64,
    /// Upper confidence threshold of the integration mechanism.
    pub tau_c_bar: f64,
    /// Saliency-weight update threshold; must satisfy
    /// `tau_c < tau_cw < tau_c_bar`. When absent from a config file it
    /// resolves to the midpoint of the other two (stored as NaN until
    /// [`TrackerConfig::validate`] runs).
    pub tau_cw: f64,
    /// Random-walk standard deviations for
    /// `(d1, d2, theta, scale, aspect, skew)`.
    pub motion_std: [f64; 6],
    /// Binarization threshold on the normalized penalized saliency map.
    pub delta_b: f64,
    /// Minimum connected-region area (pixels on the 200x200 map).
    pub sigma_s: usize,
    /// Histogram error offset: `e_h = 1 / (k_h + similarity)`.
    pub k_h: f64,
    /// Appearance-error weight in the joint likelihood.
    pub mu1: f64,
    /// Histogram-error weight in the joint likelihood (`mu1 + mu2 = 1`).
    pub mu2: f64,
    /// Ridge weight of appearance coding.
    pub lambda: f64,
    /// Trivial-coefficient penalty in the appearance likelihood.
    pub delta_c: f64,
    /// Requested superpixel count per candidate patch.
    pub n_h: usize,
    /// SLIC compactness (spatial vs. color weighting).
    pub compactness: f64,
    /// Refinement stop tolerance on the coefficient change.
    pub refine_tol: f64,
    /// Refinement iteration cap.
    pub refine_max_iter: usize,
    /// Master RNG seed.
    pub seed: u64,
    /// Skin-likelihood mean in normalized (r, g) chromaticity.
    pub skin_mean: [f64; 2],
    /// Skin-likelihood standard deviations in normalized (r, g) chromaticity.
    pub skin_std: [f64; 2],
    /// Use the distance-growing center-prior variant instead of the
    /// exponential-decay one (kept for comparison runs).
    pub use_printed_center_prior: bool,
    /// Ablation: skip the global saliency search entirely.
    pub disable_global: bool,
    /// Ablation: skip superpixel histogram matching.
    pub disable_superpixel: bool,
    /// Ablation: skip linear refinement (plain MAP instead).
    pub disable_refinement: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            n_particles: 600,
            n_s: 70,
            n_l: 5,
            lambda_s: 0.05,
            kappa: 0.005,
            delta_s: 2.0,
            gamma: 0.95,
            k_o: 10.0,
            tau_c: 0.3,
            tau_c_bar: 0.6,
            tau_cw: f64::NAN, // resolved to the midpoint by validate()
            motion_std: [8.0, 8.0, 0.01, 0.02, 0.002, 0.001],
            delta_b: 0.7,
            sigma_s: 40,
            k_h: 0.5,
            mu1: 0.5,
            mu2: 0.5,
            lambda: 0.01,
            delta_c: 0.05,
            n_h: 50,
            compactness: 10.0,
            refine_tol: 1e-6,
            refine_max_iter: 10,
            seed: 0,
            skin_mean: [0.43, 0.31],
            skin_std: [0.08, 0.05],
            use_printed_center_prior: false,
            disable_global: false,
            disable_superpixel: false,
            disable_refinement: false,
        }
    }
}

impl TrackerConfig {
    /// Resolves derived defaults and checks every invariant. Must be called
    /// after construction or deserialization; [`TrackerConfig::from_json`]
    /// does so automatically.
    pub fn validate(mut self) -> Result<Self> {
        if self.tau_cw.is_nan() {
            self.tau_cw = (self.tau_c + self.tau_c_bar) / 2.0;
        }
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_particles == 0 {
            return fail("n_particles must be >= 1".into());
        }
        if self.n_s == 0 || self.n_s > self.n_particles {
            return fail(format!("n_s must lie in 1..={}", self.n_particles));
        }
        if self.n_l == 0 || self.n_l > 10 || self.n_l > self.n_s {
            return fail(format!("n_l must lie in 1..=min(10, n_s={})", self.n_s));
        }
        if !(self.lambda_s > 0.0) {
            return fail("lambda_s must be > 0".into());
        }
        if !(self.kappa > 0.0) {
            return fail("kappa must be > 0".into());
        }
        if !(self.delta_s > 0.0) {
            return fail("delta_s must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]".into());
        }
        if !(self.k_o > 0.0) {
            return fail("k_o must be > 0".into());
        }
        if !(0.2..=0.45).contains(&self.tau_c) {
            return fail(format!("tau_c must lie in [0.2, 0.45], got {}", self.tau_c));
        }
        if !(0.4..=0.8).contains(&self.tau_c_bar) {
            return fail(format!("tau_c_bar must lie in [0.4, 0.8], got {}", self.tau_c_bar));
        }
        if !(self.tau_c < self.tau_cw && self.tau_cw < self.tau_c_bar) {
            return fail(format!(
                "thresholds must satisfy tau_c < tau_cw < tau_c_bar, got {} / {} / {}",
                self.tau_c, self.tau_cw, self.tau_c_bar
            ));
        }
        if self.motion_std.iter().any(|&s| !s.is_finite() || s < 0.0) {
            return fail("motion_std entries must be finite and >= 0".into());
        }
        if !(self.delta_b > 0.0 && self.delta_b < 1.0) {
            return fail("delta_b must lie in (0, 1)".into());
        }
        if self.sigma_s == 0 {
            return fail("sigma_s must be >= 1".into());
        }
        if !(self.k_h > 0.0) {
            return fail("k_h must be > 0".into());
        }
        if self.mu1 < 0.0 || self.mu2 < 0.0 || (self.mu1 + self.mu2 - 1.0).abs() > 1e-12 {
            return fail(format!("mu1 + mu2 must equal 1 with both >= 0, got {} + {}", self.mu1, self.mu2));
        }
        if !(self.lambda > 0.0) {
            return fail("lambda must be > 0".into());
        }
        if self.delta_c < 0.0 {
            return fail("delta_c must be >= 0".into());
        }
        if self.n_h == 0 {
            return fail("n_h must be >= 1".into());
        }
        if !(self.compactness > 0.0) {
            return fail("compactness must be > 0".into());
        }
        if !(self.refine_tol > 0.0) {
            return fail("refine_tol must be > 0".into());
        }
        if self.refine_max_iter == 0 {
            return fail("refine_max_iter must be >= 1".into());
        }
        if self.skin_std.iter().any(|&s| !(s > 0.0)) {
            return fail("skin_std entries must be > 0".into());
        }
        Ok(self)
    }

    /// Parses and validates a JSON configuration. Unknown keys are an error.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrackerConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
