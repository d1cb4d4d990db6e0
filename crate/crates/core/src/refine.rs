//! Error fusion into the joint observation likelihood and the linear
//! refinement search over the top candidates.
//!
//! The refinement solves
//! `min |M a - D b|^2 + kappa |b|^2  s.t.  sum(a) = 1`
//! by alternating two closed-form steps: a ridge solve for `b` and an
//! equality-constrained least-norm solve for `a`. Both step operators are
//! fixed once `M` and `D` are, so they are assembled a single time per
//! frame and each iteration reduces to matrix-vector products.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::appearance::PcaDictionary;
use crate::error::{Error, Result};
use crate::image::GrayPatch;
use crate::particle::AffineState;

/// Appearance / histogram error pair of one candidate.
#[derive(Debug, Clone, Copy)]
pub struct ErrorPair {
    pub appearance: f64,
    pub histogram: f64,
}

/// Joint observation likelihood of every candidate from its two errors.
///
/// Each error component is normalized by the spread between the best
/// (ideal-point) and worst candidate; a component with zero spread
/// contributes nothing. The candidate at the ideal point scores exactly 1.
pub fn joint_likelihood(errors: &[ErrorPair], mu1: f64, mu2: f64) -> Vec<f64> {
    assert!(!errors.is_empty());
    assert!(mu1 >= 0.0 && mu2 >= 0.0 && (mu1 + mu2 - 1.0).abs() < 1e-9);
    let min1 = errors.iter().map(|e| e.appearance).fold(f64::INFINITY, f64::min);
    let max1 = errors.iter().map(|e| e.appearance).fold(f64::NEG_INFINITY, f64::max);
    let min2 = errors.iter().map(|e| e.histogram).fold(f64::INFINITY, f64::min);
    let max2 = errors.iter().map(|e| e.histogram).fold(f64::NEG_INFINITY, f64::max);
    let term = |v: f64, min: f64, max: f64, mu: f64| {
        if max > min {
            mu * (v - min) / (max - min)
        } else {
            0.0
        }
    };
    errors
        .iter()
        .map(|e| {
            (-(term(e.appearance, min1, max1, mu1) + term(e.histogram, min2, max2, mu2))).exp()
        })
        .collect()
}

/// Candidate patches stacked as unit columns plus the confidence-derived
/// initial coefficients.
#[derive(Debug, Clone)]
pub struct CandidateMatrix {
    /// `dim x n` matrix of centered, unit-normalized candidate patches.
    pub columns: DMatrix<f64>,
    pub states: Vec<AffineState>,
    /// Initial coefficients, normalized to sum 1.
    pub alpha0: DVector<f64>,
}

impl CandidateMatrix {
    /// Builds the candidate set from patches, their states and their joint
    /// likelihoods (used both to order and to initialize the coefficients).
    pub fn new(
        dict: &PcaDictionary,
        patches: &[GrayPatch],
        states: &[AffineState],
        confidences: &[f64],
    ) -> Result<Self> {
        let n = patches.len();
        if n == 0 || n > 10 {
            return Err(Error::InvalidConfig(format!("candidate count must lie in 1..=10, got {n}")));
        }
        assert_eq!(states.len(), n);
        assert_eq!(confidences.len(), n);
        let mut columns = DMatrix::zeros(dict.dim(), n);
        for (j, p) in patches.iter().enumerate() {
            columns.set_column(j, &dict.centered_unit(p));
        }
        let total: f64 = confidences.iter().sum();
        let alpha0 = if total > 0.0 {
            DVector::from_iterator(n, confidences.iter().map(|&c| c / total))
        } else {
            DVector::from_element(n, 1.0 / n as f64)
        };
        Ok(Self { columns, states: states.to_vec(), alpha0 })
    }
}

/// The three fixed operators of the alternating solver.
#[derive(Debug, Clone)]
pub struct RefineOperators {
    /// Ridge step: `b = f_beta y`.
    pub f_beta: DMatrix<f64>,
    /// Constrained step: `a = f_alpha y + g_alpha`.
    pub f_alpha: DMatrix<f64>,
    pub g_alpha: DVector<f64>,
    /// True when `M^T M` needed a diagonal perturbation to factor.
    pub regularized: bool,
}

/// Assembles the per-frame step operators from the candidate columns and
/// the subspace basis.
///
/// A singular `M^T M` (duplicate candidate patches) is nudged by `1e-8` on
/// the diagonal and flagged.
pub fn precompute_operators(m: &DMatrix<f64>, basis: &DMatrix<f64>, kappa: f64) -> Result<RefineOperators> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidConfig("kappa must be > 0".into()));
    }
    let r = basis.ncols();
    let bt = basis.transpose();
    let mut dgram = &bt * basis;
    let f_beta = if r == 0 {
        DMatrix::zeros(0, basis.nrows())
    } else {
        for i in 0..r {
            dgram[(i, i)] += kappa;
        }
        Cholesky::new(dgram)
            .expect("ridge system is positive definite")
            .solve(&bt)
    };

    let n = m.ncols();
    let mgram = m.transpose() * m;
    let (chol, regularized) = match Cholesky::new(mgram.clone()) {
        Some(c) => (c, false),
        None => {
            let mut fixed = mgram;
            for i in 0..n {
                fixed[(i, i)] += 1e-8;
            }
            let c = Cholesky::new(fixed)
                .ok_or_else(|| Error::InvalidConfig("candidate Gram matrix is not factorizable".into()))?;
            (c, true)
        }
    };
    let ones = DVector::from_element(n, 1.0);
    let a = chol.solve(&ones); // (M^T M)^-1 1
    let c = ones.dot(&a);
    let g_inv_mt = chol.solve(&m.transpose());
    // (G^-1 - a a^T / c) M^T with G = M^T M
    let f_alpha = &g_inv_mt - &a * (a.transpose() * m.transpose()) / c;
    let g_alpha = a / c;
    Ok(RefineOperators { f_beta, f_alpha, g_alpha, regularized })
}

/// One recorded iteration of the solver.
#[derive(Debug, Clone)]
pub struct RefineIterate {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    /// `|M a - D b|^2 + kappa |b|^2` after this iteration's alpha step.
    pub objective: f64,
}

/// Outcome of the refinement search.
#[derive(Debug, Clone)]
pub struct RefineSolution {
    /// Nonnegative coefficients summing to 1 (after clipping).
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub iterations: usize,
    /// Objective value per iteration, pre-clipping.
    pub objective_trace: Vec<f64>,
    /// Full per-iteration coefficients, pre-clipping.
    pub iterates: Vec<RefineIterate>,
    pub regularized: bool,
}

/// Alternating solver: ridge step for the subspace coefficients, exact
/// constrained step for the candidate coefficients, starting from the
/// confidence-derived initialization. Stops when the coefficient change
/// drops below `tol` or after `max_iter` iterations, then clips negative
/// entries and renormalizes (falling back to a one-hot on the best initial
/// candidate if everything clips away).
pub fn refine(
    cand: &CandidateMatrix,
    dict: &PcaDictionary,
    kappa: f64,
    max_iter: usize,
    tol: f64,
) -> Result<RefineSolution> {
    assert!(max_iter >= 1, "max_iter must be >= 1");
    let ops = precompute_operators(&cand.columns, dict.basis(), kappa)?;
    let m = &cand.columns;
    let basis = dict.basis();

    let mut alpha = cand.alpha0.clone();
    let mut beta = DVector::zeros(basis.ncols());
    let mut iterates = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter {
        let y = m * &alpha;
        beta = &ops.f_beta * &y;
        let y2 = basis * &beta;
        let next = &ops.f_alpha * &y2 + &ops.g_alpha;
        let delta = (&next - &alpha).amax();
        alpha = next;
        iterations += 1;
        let objective = (m * &alpha - &y2).norm_squared() + kappa * beta.norm_squared();
        trace.push(objective);
        iterates.push(RefineIterate { alpha: alpha.clone(), beta: beta.clone(), objective });
        if delta < tol {
            break;
        }
    }

    let mut clipped = alpha.map(|v| v.max(0.0));
    let total = clipped.sum();
    if total > 0.0 {
        clipped /= total;
    } else {
        clipped.fill(0.0);
        clipped[cand.alpha0.imax()] = 1.0;
    }
    Ok(RefineSolution {
        alpha: clipped,
        beta,
        iterations,
        objective_trace: trace,
        iterates,
        regularized: ops.regularized,
    })
}

/// Convex combination of the candidate states, parameter-wise.
pub fn combine_states(states: &[AffineState], alpha: &DVector<f64>) -> AffineState {
    assert_eq!(states.len(), alpha.len());
    let mut out = AffineState { d1: 0.0, d2: 0.0, theta: 0.0, scale: 0.0, aspect: 0.0, skew: 0.0 };
    for (s, &a) in states.iter().zip(alpha.iter()) {
        out.d1 += a * s.d1;
        out.d2 += a * s.d2;
        out.theta += a * s.theta;
        out.scale += a * s.scale;
        out.aspect += a * s.aspect;
        out.skew += a * s.skew;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn pair(a: f64, h: f64) -> ErrorPair {
        ErrorPair { appearance: a, histogram: h }
    }

    #[test]
    fn ideal_point_candidate_scores_one() {
        let errors = [pair(0.1, 0.2), pair(0.5, 0.9), pair(0.3, 0.4)];
        let l = joint_likelihood(&errors, 0.5, 0.5);
        assert_eq!(l[0], 1.0);
        assert!(l.iter().all(|&v| v <= 1.0));
        // worst on both axes gets exp(-1)
        assert_abs_diff_eq!(l[1], (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn identical_errors_all_score_one() {
        let errors = [pair(0.4, 0.7); 5];
        assert!(joint_likelihood(&errors, 0.5, 0.5).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn single_objective_reduces_to_error_ranking() {
        let errors = [pair(0.5, 0.1), pair(0.2, 0.9), pair(0.8, 0.5), pair(0.1, 0.7)];
        let l = joint_likelihood(&errors, 1.0, 0.0);
        let mut by_likelihood: Vec<usize> = (0..4).collect();
        by_likelihood.sort_by(|&a, &b| l[b].total_cmp(&l[a]));
        let mut by_error: Vec<usize> = (0..4).collect();
        by_error.sort_by(|&a, &b| errors[a].appearance.total_cmp(&errors[b].appearance));
        assert_eq!(by_likelihood, by_error);
    }

    fn random_orthonormal(rng: &mut ChaCha12Rng, dim: usize, cols: usize) -> DMatrix<f64> {
        let raw = DMatrix::from_fn(dim, cols, |_, _| rng.random::<f64>() - 0.5);
        let qr = raw.qr();
        let q = qr.q();
        q.columns(0, cols).into()
    }

    fn random_columns(rng: &mut ChaCha12Rng, dim: usize, cols: usize) -> DMatrix<f64> {
        let mut m = DMatrix::from_fn(dim, cols, |_, _| rng.random::<f64>() - 0.5);
        for mut col in m.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        m
    }

    /// KKT oracle for `min |M a - y|^2 s.t. 1^T a = 1`.
    fn kkt_solve(m: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let n = m.ncols();
        let mut kkt = DMatrix::zeros(n + 1, n + 1);
        kkt.view_mut((0, 0), (n, n)).copy_from(&(m.transpose() * m));
        for i in 0..n {
            kkt[(i, n)] = 1.0;
            kkt[(n, i)] = 1.0;
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(m.transpose() * y));
        rhs[n] = 1.0;
        let sol = kkt.lu().solve(&rhs).unwrap();
        sol.rows(0, n).into()
    }

    #[test]
    fn orthonormal_basis_gives_scaled_transpose() {
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        let d = random_orthonormal(&mut rng, 64, 8);
        let m = random_columns(&mut rng, 64, 4);
        let kappa = 0.005;
        let ops = precompute_operators(&m, &d, kappa).unwrap();
        let want = d.transpose() / (1.0 + kappa);
        assert!((ops.f_beta - want).amax() < 1e-10);
    }

    #[test]
    fn single_candidate_forces_unit_coefficient() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let d = random_orthonormal(&mut rng, 64, 8);
        let m = random_columns(&mut rng, 64, 1);
        let ops = precompute_operators(&m, &d, 0.005).unwrap();
        for _ in 0..3 {
            let y = DVector::from_fn(64, |_, _| rng.random::<f64>() - 0.5);
            let a = &ops.f_alpha * &y + &ops.g_alpha;
            assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn alpha_operator_matches_kkt_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        for _ in 0..10 {
            let d = random_orthonormal(&mut rng, 96, 8);
            let m = random_columns(&mut rng, 96, 5);
            let ops = precompute_operators(&m, &d, 0.005).unwrap();
            let y = DVector::from_fn(96, |_, _| rng.random::<f64>() - 0.5);
            let got = &ops.f_alpha * &y + &ops.g_alpha;
            let want = kkt_solve(&m, &y);
            assert!((got - want).amax() <= 1e-8);
        }
    }

    #[test]
    fn duplicate_candidates_trigger_regularized_fallback() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let d = random_orthonormal(&mut rng, 64, 4);
        let col = random_columns(&mut rng, 64, 1);
        let mut m = DMatrix::zeros(64, 3);
        for j in 0..3 {
            m.set_column(j, &col.column(0));
        }
        let ops = precompute_operators(&m, &d, 0.005).unwrap();
        assert!(ops.regularized);
        // the constrained step must still produce a sum-1 vector
        let y = DVector::from_fn(64, |_, _| rng.random::<f64>() - 0.5);
        let a = &ops.f_alpha * &y + &ops.g_alpha;
        assert_abs_diff_eq!(a.sum(), 1.0, epsilon = 1e-6);
    }

    fn random_instance(rng: &mut ChaCha12Rng, dim: usize, r: usize, n: usize) -> (PcaDictionary, CandidateMatrix) {
        use crate::appearance::update_dictionary;
        let side = (dim as f64).sqrt() as usize;
        assert_eq!(side * side, dim);
        let mut dict = PcaDictionary::empty(side);
        while dict.rank() < r.min(crate::appearance::MAX_BASIS) {
            let patch = GrayPatch::new(side, (0..dim).map(|_| rng.random()).collect());
            update_dictionary(&mut dict, &patch);
        }
        let patches: Vec<GrayPatch> = (0..n)
            .map(|_| GrayPatch::new(side, (0..dim).map(|_| rng.random()).collect()))
            .collect();
        let states: Vec<AffineState> = (0..n)
            .map(|i| AffineState {
                d1: i as f64,
                d2: 2.0 * i as f64,
                theta: 0.0,
                scale: 1.0,
                aspect: 1.0,
                skew: 0.0,
            })
            .collect();
        let confidences: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let cand = CandidateMatrix::new(&dict, &patches, &states, &confidences).unwrap();
        (dict, cand)
    }

    #[test]
    fn refine_single_candidate_is_one_hot() {
        let mut rng = ChaCha12Rng::seed_from_u64(24);
        let (dict, cand) = random_instance(&mut rng, 256, 8, 1);
        let sol = refine(&cand, &dict, 0.005, 10, 1e-6).unwrap();
        assert_eq!(sol.alpha.len(), 1);
        assert_abs_diff_eq!(sol.alpha[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn refine_steps_match_fresh_oracle_solves() {
        let mut rng = ChaCha12Rng::seed_from_u64(25);
        for _ in 0..5 {
            let (dict, cand) = random_instance(&mut rng, 256, 8, 5);
            let kappa = 0.005;
            let sol = refine(&cand, &dict, kappa, 10, 0.0).unwrap();
            let basis = dict.basis();
            let m = &cand.columns;
            let mut alpha = cand.alpha0.clone();
            for it in &sol.iterates {
                // beta step oracle: dense ridge normal equations via LU
                let y = m * &alpha;
                let mut normal = basis.transpose() * basis;
                for i in 0..normal.nrows() {
                    normal[(i, i)] += kappa;
                }
                let beta_want = normal.lu().solve(&(basis.transpose() * &y)).unwrap();
                assert!((&it.beta - &beta_want).amax() <= 1e-8);
                // alpha step oracle: KKT system
                let y2 = basis * &beta_want;
                let alpha_want = kkt_solve(m, &y2);
                assert!((&it.alpha - &alpha_want).amax() <= 1e-8);
                alpha = it.alpha.clone();
            }
        }
    }

    #[test]
    fn objective_is_monotone_and_constraint_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(26);
        for _ in 0..20 {
            let (dict, cand) = random_instance(&mut rng, 256, 8, 5);
            let sol = refine(&cand, &dict, 0.005, 10, 0.0).unwrap();
            for w in sol.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10, "objective increased: {} -> {}", w[0], w[1]);
            }
            for it in &sol.iterates {
                assert!((it.alpha.sum() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn max_iter_one_is_a_single_exact_step() {
        let mut rng = ChaCha12Rng::seed_from_u64(27);
        let (dict, cand) = random_instance(&mut rng, 256, 8, 5);
        let sol = refine(&cand, &dict, 0.005, 1, 1e-12).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.iterates.len(), 1);
    }

    #[test]
    fn alpha0_invariant_to_likelihood_scaling() {
        let mut rng = ChaCha12Rng::seed_from_u64(28);
        let side = 16;
        let dim = side * side;
        let dict = PcaDictionary::empty(side);
        let patches: Vec<GrayPatch> = (0..4)
            .map(|_| GrayPatch::new(side, (0..dim).map(|_| rng.random()).collect()))
            .collect();
        let states = vec![AffineState { d1: 0.0, d2: 0.0, theta: 0.0, scale: 1.0, aspect: 1.0, skew: 0.0 }; 4];
        let conf = [0.2, 0.5, 0.1, 0.9];
        let a = CandidateMatrix::new(&dict, &patches, &states, &conf).unwrap();
        let scaled: Vec<f64> = conf.iter().map(|c| c * 12.5).collect();
        let b = CandidateMatrix::new(&dict, &patches, &states, &scaled).unwrap();
        assert!((a.alpha0 - b.alpha0).amax() < 1e-12);
    }

    #[test]
    fn combine_states_examples() {
        let s = |d1: f64| AffineState { d1, d2: 1.0, theta: 0.2, scale: 1.1, aspect: 0.9, skew: 0.0 };
        let one_hot = DVector::from_column_slice(&[0.0, 1.0, 0.0]);
        let got = combine_states(&[s(1.0), s(5.0), s(9.0)], &one_hot);
        assert_eq!(got, s(5.0));

        let half = DVector::from_column_slice(&[0.5, 0.5]);
        assert_eq!(combine_states(&[s(3.0), s(3.0)], &half), s(3.0));

        let mixed = DVector::from_column_slice(&[0.25, 0.75]);
        assert_eq!(combine_states(&[s(0.0), s(4.0)], &mixed).d1, 3.0);
    }

    #[test]
    fn combined_state_stays_in_convex_hull() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let (dict, cand) = random_instance(&mut rng, 256, 8, 5);
        let sol = refine(&cand, &dict, 0.005, 10, 1e-6).unwrap();
        assert!(sol.alpha.iter().all(|&a| a >= 0.0));
        assert_abs_diff_eq!(sol.alpha.sum(), 1.0, epsilon = 1e-12);
        let out = combine_states(&cand.states, &sol.alpha);
        let lo = cand.states.iter().map(|s| s.d1).fold(f64::INFINITY, f64::min);
        let hi = cand.states.iter().map(|s| s.d1).fold(f64::NEG_INFINITY, f64::max);
        assert!(out.d1 >= lo - 1e-12 && out.d1 <= hi + 1e-12);
    }
}
