//! Holistic grayscale appearance model: ridge coding against a PCA plus
//! trivial-template dictionary, the resulting observation likelihood, and
//! the incremental subspace update.
//!
//! With the trivial block being the identity, coding splits into two
//! closed-form stages: the basis coefficients solve a ridge system of
//! `rank` unknowns, then the trivial coefficients shrink whatever residual
//! the basis could not explain (so they model occlusion rather than
//! competing with the basis for in-span energy). Coding a patch therefore
//! costs one projection-matrix product.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::image::GrayPatch;

/// Maximum number of retained subspace directions.
pub const MAX_BASIS: usize = 16;
/// Pending patches accumulated before a subspace update.
pub const UPDATE_BATCH: usize = 5;
/// Downweighting of old observations per update.
pub const FORGETTING: f64 = 0.95;

// Directions with singular value below this (relative to the largest) carry
// no usable variance and are dropped.
const RANK_TOL: f64 = 1e-9;

/// Mean plus orthonormal basis over vectorized grayscale patches, updated
/// incrementally (sequential Karhunen-Loeve with a forgetting factor).
#[derive(Debug, Clone)]
pub struct PcaDictionary {
    dim: usize,
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    singular_values: DVector<f64>,
    effective_count: f64,
    buffer: Vec<DVector<f64>>,
}

impl PcaDictionary {
    /// Dictionary with no observations: zero mean, empty basis. The first
    /// absorbed batch defines the mean exactly.
    pub fn empty(side: usize) -> Self {
        let dim = side * side;
        Self {
            dim,
            mean: DVector::zeros(dim),
            basis: DMatrix::zeros(dim, 0),
            singular_values: DVector::zeros(0),
            effective_count: 0.0,
            buffer: Vec::new(),
        }
    }

    /// Dictionary seeded with one patch as the mean.
    pub fn from_patch(patch: &GrayPatch) -> Self {
        let mut d = Self::empty(patch.side());
        d.mean = DVector::from_column_slice(patch.data());
        d.effective_count = 1.0;
        d
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn pending(&self) -> usize {
        self.buffer.len()
    }

    /// Mean-subtracted patch scaled to unit Euclidean norm (zero vectors
    /// pass through unchanged), the representation every coding and
    /// matching step works on.
    pub fn centered_unit(&self, patch: &GrayPatch) -> DVector<f64> {
        assert_eq!(patch.data().len(), self.dim, "patch size mismatch");
        let mut z = DVector::from_column_slice(patch.data()) - &self.mean;
        let norm = z.norm();
        if norm > 1e-12 {
            z /= norm;
        }
        z
    }

    fn absorb(&mut self) {
        let m = self.buffer.len();
        let mut batch = DMatrix::zeros(self.dim, m);
        for (j, col) in self.buffer.iter().enumerate() {
            batch.set_column(j, col);
        }
        self.buffer.clear();

        let batch_mean = batch.column_mean();
        for mut col in batch.column_iter_mut() {
            col -= &batch_mean;
        }

        if self.effective_count == 0.0 {
            self.mean = batch_mean;
            self.effective_count = m as f64;
            let svd = batch.svd(true, false);
            let u = svd.u.expect("svd with u");
            self.install(&u, &svd.singular_values);
            return;
        }

        let n = self.effective_count;
        let f = FORGETTING;

        // mean-shift column keeps the covariance exact under the mean update
        let correction = (&self.mean - &batch_mean) * (n * m as f64 / (n + m as f64)).sqrt();
        let mut aug = DMatrix::zeros(self.dim, m + 1);
        for j in 0..m {
            aug.set_column(j, &batch.column(j));
        }
        aug.set_column(m, &correction);

        self.mean = (&self.mean * (f * n) + batch_mean * m as f64) / (f * n + m as f64);
        self.effective_count = f * n + m as f64;

        // split the augmented data into basis-span and orthogonal parts
        let proj = self.basis.transpose() * &aug;
        let resid = &aug - &self.basis * &proj;
        let q = orthonormal_columns(&resid, &self.basis);
        let r = self.rank();
        let qn = q.ncols();
        if r + qn == 0 {
            // batch carried no variance beyond the existing subspace
            return;
        }

        let mut k = DMatrix::zeros(r + qn, r + m + 1);
        for i in 0..r {
            k[(i, i)] = f * self.singular_values[i];
        }
        k.view_mut((0, r), (r, m + 1)).copy_from(&proj);
        let qt_resid = q.transpose() * &resid;
        k.view_mut((r, r), (qn, m + 1)).copy_from(&qt_resid);

        let svd = k.svd(true, false);
        let uk = svd.u.expect("svd with u");
        let mut joint = DMatrix::zeros(self.dim, r + qn);
        joint.view_mut((0, 0), (self.dim, r)).copy_from(&self.basis);
        joint.view_mut((0, r), (self.dim, qn)).copy_from(&q);
        let full = &joint * &uk;
        self.install(&full, &svd.singular_values);
    }

    fn install(&mut self, directions: &DMatrix<f64>, singular_values: &DVector<f64>) {
        let sigma_max = singular_values.iter().cloned().fold(0.0f64, f64::max);
        // absolute floor guards against pure-roundoff directions when the
        // batch carries no real variance (patch intensities are O(1))
        let cutoff = (RANK_TOL * sigma_max).max(1e-12);
        let keep: Vec<usize> = (0..singular_values.len().min(directions.ncols()))
            .filter(|&i| singular_values[i] > cutoff)
            .take(MAX_BASIS)
            .collect();
        let mut basis = DMatrix::zeros(self.dim, keep.len());
        let mut sv = DVector::zeros(keep.len());
        for (j, &i) in keep.iter().enumerate() {
            basis.set_column(j, &directions.column(i));
            sv[j] = singular_values[i];
        }
        self.basis = basis;
        self.singular_values = sv;
    }
}

/// Gram-Schmidt (two passes) of `cols` against `base` and each other;
/// near-dependent columns are dropped.
fn orthonormal_columns(cols: &DMatrix<f64>, base: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = cols.nrows();
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for j in 0..cols.ncols() {
        let mut v: DVector<f64> = cols.column(j).into();
        for _ in 0..2 {
            let coeffs = base.transpose() * &v;
            v -= base * &coeffs;
            for q in &kept {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let norm = v.norm();
        if norm > 1e-10 {
            kept.push(v / norm);
        }
    }
    let mut out = DMatrix::zeros(dim, kept.len());
    for (j, q) in kept.iter().enumerate() {
        out.set_column(j, q);
    }
    out
}

/// Appends the patch to the pending buffer; once [`UPDATE_BATCH`] patches
/// are queued they are absorbed into the subspace and the buffer clears.
pub fn update_dictionary(dict: &mut PcaDictionary, patch: &GrayPatch) {
    assert_eq!(patch.data().len(), dict.dim, "patch size mismatch");
    dict.buffer.push(DVector::from_column_slice(patch.data()));
    if dict.buffer.len() >= UPDATE_BATCH {
        dict.absorb();
    }
}

/// Ridge coefficients of a coded patch.
#[derive(Debug, Clone)]
pub struct Coefficients {
    /// Loadings on the subspace basis (`rank` entries).
    pub basis: DVector<f64>,
    /// Loadings on the trivial (identity) templates (`dim` entries).
    pub trivial: DVector<f64>,
}

/// Precomputed coding operator for one dictionary state and ridge weight;
/// read-only, so particles can be coded concurrently.
#[derive(Debug, Clone)]
pub struct Coder {
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    /// `(B^T B + lambda I)^-1 B^T`, applied as a single product.
    projection: DMatrix<f64>,
    lambda: f64,
    dim: usize,
}

/// Appearance likelihood and its basis-only reconstruction error.
#[derive(Debug, Clone, Copy)]
pub struct PatchScore {
    pub likelihood: f64,
    /// Squared norm of the residual after basis reconstruction alone,
    /// the appearance component of the joint error vector.
    pub basis_error_sq: f64,
}

impl Coder {
    pub fn new(dict: &PcaDictionary, lambda: f64) -> Self {
        assert!(lambda > 0.0);
        let r = dict.rank();
        let bt = dict.basis.transpose();
        let mut gram = &bt * &dict.basis;
        for i in 0..r {
            gram[(i, i)] += lambda;
        }
        let projection = if r == 0 {
            DMatrix::zeros(0, dict.dim)
        } else {
            Cholesky::new(gram).expect("coding Gram matrix is positive definite").solve(&bt)
        };
        Self {
            mean: dict.mean.clone(),
            basis: dict.basis.clone(),
            projection,
            lambda,
            dim: dict.dim,
        }
    }

    fn centered_unit(&self, patch: &GrayPatch) -> DVector<f64> {
        assert_eq!(patch.data().len(), self.dim, "patch size mismatch");
        let mut z = DVector::from_column_slice(patch.data()) - &self.mean;
        let norm = z.norm();
        if norm > 1e-12 {
            z /= norm;
        }
        z
    }

    /// Two-stage ridge coding of the normalized patch `z`: the basis
    /// loadings solve `min |z - B b|^2 + lambda |b|^2`, the trivial
    /// loadings then solve `min |r - e|^2 + lambda |e|^2` on the residual
    /// `r = z - B b`.
    pub fn code(&self, patch: &GrayPatch) -> Coefficients {
        let z = self.centered_unit(patch);
        let basis = &self.projection * &z;
        let resid = &z - &self.basis * &basis;
        let trivial = resid / (1.0 + self.lambda);
        Coefficients { basis, trivial }
    }

    /// Likelihood plus the basis-only error in one pass (the per-particle
    /// hot path).
    pub fn score(&self, patch: &GrayPatch, delta_c: f64) -> PatchScore {
        let z = self.centered_unit(patch);
        let basis = &self.projection * &z;
        let resid = z - &self.basis * &basis;
        let basis_error_sq = resid.norm_squared();
        // with e = resid / (1 + lambda) the reconstruction residual shrinks
        // by lambda / (1 + lambda) and |e|_1 scales accordingly
        let shrink = self.lambda / (1.0 + self.lambda);
        let recon_sq = basis_error_sq * shrink * shrink;
        let l1 = resid.iter().map(|v| v.abs()).sum::<f64>() / (1.0 + self.lambda);
        PatchScore { likelihood: (-recon_sq - delta_c * l1).exp(), basis_error_sq }
    }
}

/// Spec-shaped coding entry point; builds the operator on the fly.
pub fn code(patch: &GrayPatch, dict: &PcaDictionary, lambda: f64) -> Coefficients {
    Coder::new(dict, lambda).code(patch)
}

/// Observation likelihood `exp(-|z - B b - e|^2 - delta_c |e|_1)` of a coded
/// patch, evaluated on the normalized representation.
pub fn likelihood(patch: &GrayPatch, coeffs: &Coefficients, dict: &PcaDictionary, delta_c: f64) -> f64 {
    assert!(delta_c >= 0.0);
    let z = dict.centered_unit(patch);
    let resid = z - &dict.basis * &coeffs.basis - &coeffs.trivial;
    let l1: f64 = coeffs.trivial.iter().map(|v| v.abs()).sum();
    (-resid.norm_squared() - delta_c * l1).exp()
}
