//! DPP kernel construction: Gaussian similarity, score weighting, and the
//! conditioning transform.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;
use crate::Subset;

/// Numerical slack allowed below zero for the smallest eigenvalue of a
/// theoretically PSD matrix.
pub const PSD_SLACK: f64 = 1e-8;

/// Condition-number threshold above which conditioning is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Fixed seed for the `default_sigma` Monte-Carlo estimate, so sigma is a
/// deterministic function of `(k, d)`.
pub const DEFAULT_SIGMA_SEED: u64 = 0x5157_u64;

/// Trials for the `default_sigma` Monte-Carlo estimate.
pub const DEFAULT_SIGMA_TRIALS: usize = 10_000;

/// Symmetric similarity matrix with unit diagonal, `S_ij` in `(0, 1]`.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix<S: Scalar> {
    entries: Array2<S>,
    sigma: S,
}

impl<S: Scalar> SimilarityMatrix<S> {
    /// Wrap a precomputed similarity matrix (inner products of unit-norm
    /// similarity features). Asserts symmetry only; PSD checks are on demand.
    pub fn from_inner_products(entries: Array2<S>) -> Result<Self> {
        check_symmetric(&entries)?;
        Ok(Self {
            entries,
            sigma: S::nan(),
        })
    }

    pub fn entries(&self) -> ArrayView2<'_, S> {
        self.entries.view()
    }

    pub fn sigma(&self) -> S {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Smallest eigenvalue; an O(N^3) check, intended for tests.
    pub fn min_eigenvalue(&self) -> S {
        let vals = linalg::sym_eigenvalues(&self.entries.view());
        vals[0]
    }
}

fn check_symmetric<S: Scalar>(m: &Array2<S>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let tol = S::of(1e-12) * S::of(m.nrows().max(1) as f64);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[[i, j]] - m[[j, i]]).abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Gaussian similarity `S_ij = exp(-||x_i - x_j||^2 / (2 sigma^2))` over the
/// rows of `features`.
pub fn gaussian_similarity<S: Scalar>(
    features: &ArrayView2<S>,
    sigma: S,
) -> Result<SimilarityMatrix<S>> {
    if !(sigma > S::zero()) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    let n = features.nrows();
    if n == 0 || features.ncols() == 0 {
        return Err(Error::InvalidInput("features must be non-empty".into()));
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    let denom = S::of(2.0) * sigma * sigma;
    let mut entries = Array2::<S>::zeros((n, n));
    for i in 0..n {
        entries[[i, i]] = S::one();
        let xi = features.row(i);
        for j in 0..i {
            let xj = features.row(j);
            let mut d2 = S::zero();
            for (a, b) in xi.iter().zip(xj.iter()) {
                let t = *a - *b;
                d2 += t * t;
            }
            let s = (-d2 / denom).exp();
            entries[[i, j]] = s;
            entries[[j, i]] = s;
        }
    }
    Ok(SimilarityMatrix { entries, sigma })
}

/// Monte-Carlo estimate of the expected nearest-neighbor distance between `k`
/// points uniform in the unit hypercube `[0,1]^d`.
///
/// Deterministic: fixed seed [`DEFAULT_SIGMA_SEED`] and
/// [`DEFAULT_SIGMA_TRIALS`] trials.
pub fn default_sigma(k: usize, d: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidParameter(
            "default_sigma needs k >= 2 (nearest neighbor undefined)".into(),
        ));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("d must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SIGMA_SEED);
    let mut acc = 0.0f64;
    let mut pts = vec![0.0f64; k * d];
    for _ in 0..DEFAULT_SIGMA_TRIALS {
        for p in pts.iter_mut() {
            *p = rng.random::<f64>();
        }
        let mut best = f64::INFINITY;
        for i in 0..k {
            for j in 0..i {
                let mut d2 = 0.0;
                for t in 0..d {
                    let diff = pts[i * d + t] - pts[j * d + t];
                    d2 += diff * diff;
                }
                best = best.min(d2);
            }
        }
        acc += best.sqrt();
    }
    Ok(acc / DEFAULT_SIGMA_TRIALS as f64)
}

/// Nonnegative per-item informativeness scores.
#[derive(Debug, Clone)]
pub struct ScoreVector<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> ScoreVector<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        if values.iter().any(|q| !q.is_finite() || *q < S::zero()) {
            return Err(Error::InvalidInput(
                "scores must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { values })
    }

    /// All-ones scores (the passive setting).
    pub fn uniform(n: usize) -> Self {
        Self {
            values: vec![S::one(); n],
        }
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Score-weighted DPP kernel `L_ij = q_i^{gamma/alpha} S_ij q_j^{gamma/alpha}`.
#[derive(Debug, Clone)]
pub struct KernelMatrix<S: Scalar> {
    entries: Array2<S>,
    alpha: f64,
    gamma: f64,
}

impl<S: Scalar> KernelMatrix<S> {
    /// Wrap raw entries; asserts symmetry.
    pub fn from_entries(entries: Array2<S>, alpha: f64, gamma: f64) -> Result<Self> {
        check_symmetric(&entries)?;
        Ok(Self {
            entries,
            alpha,
            gamma,
        })
    }

    pub fn entries(&self) -> ArrayView2<'_, S> {
        self.entries.view()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Smallest eigenvalue; O(N^3), intended for tests.
    pub fn min_eigenvalue(&self) -> S {
        linalg::sym_eigenvalues(&self.entries.view())[0]
    }

    /// `log det` of the principal submatrix indexed by `indices`
    /// (negative infinity when singular).
    pub fn log_det_of(&self, indices: &[usize]) -> S {
        let m = indices.len();
        let sub = Array2::from_shape_fn((m, m), |(a, b)| self.entries[[indices[a], indices[b]]]);
        linalg::log_det_psd(&sub.view()).unwrap_or_else(S::neg_infinity)
    }
}

/// Build the kernel of Eq.-3 form. When `alpha == 0` the score exponent is
/// ill-defined; scores are treated as 1 and `L = S`.
pub fn build_kernel<S: Scalar>(
    similarity: &SimilarityMatrix<S>,
    scores: &ScoreVector<S>,
    alpha: f64,
    gamma: f64,
) -> Result<KernelMatrix<S>> {
    let n = similarity.n();
    if scores.len() != n {
        return Err(Error::InvalidInput(format!(
            "score length {} does not match similarity size {}",
            scores.len(),
            n
        )));
    }
    if alpha < 0.0 || gamma < 0.0 {
        return Err(Error::InvalidParameter(
            "alpha and gamma must be nonnegative".into(),
        ));
    }
    let mut entries = similarity.entries.clone();
    if alpha > 0.0 && gamma > 0.0 {
        let expo = S::of(gamma / alpha);
        let w: Vec<S> = scores.values().iter().map(|q| q.powf(expo)).collect();
        for i in 0..n {
            for j in 0..n {
                entries[[i, j] ] = entries[[i, j]] * w[i] * w[j];
            }
        }
    }
    Ok(KernelMatrix {
        entries,
        alpha,
        gamma,
    })
}

/// Condition a DPP kernel on the event that `conditioned` is contained in the
/// sampled subset. Returns the transformed kernel over the complement along
/// with the mapping from local indices to indices in the original kernel.
///
/// Computed as the Schur complement `L' = L_CC - L_CB L_B^{-1} L_BC` with
/// `C` the complement, which equals the resolvent form
/// `([(L + I_C)^{-1}]_C)^{-1} - I`.
pub fn condition_kernel<S: Scalar>(
    kernel: &KernelMatrix<S>,
    conditioned: &Subset,
) -> Result<(KernelMatrix<S>, Vec<usize>)> {
    let n = kernel.n();
    let b: Vec<usize> = conditioned.indices().to_vec();
    if b.iter().any(|&i| i >= n) {
        return Err(Error::InvalidInput(
            "conditioning index out of range".into(),
        ));
    }
    let mut in_b = vec![false; n];
    for &i in &b {
        in_b[i] = true;
    }
    let comp: Vec<usize> = (0..n).filter(|&i| !in_b[i]).collect();
    if b.is_empty() {
        return Ok((kernel.clone(), comp));
    }
    let nb = b.len();
    let nc = comp.len();
    let l = &kernel.entries;
    let lb = Array2::from_shape_fn((nb, nb), |(i, j)| l[[b[i], b[j]]]);
    let chol = match linalg::cholesky(&lb.view()) {
        Some(c) => c,
        None => return Err(Error::SingularConditioning(f64::INFINITY)),
    };
    let cond = linalg::cholesky_condition_estimate(&chol);
    if cond > CONDITION_LIMIT {
        return Err(Error::SingularConditioning(cond));
    }
    // W = L_B^{-1} L_BC via triangular solves, then L' = L_CC - L_CB W
    let mut w = Array2::<S>::zeros((nb, nc));
    let mut col = vec![S::zero(); nb];
    for (jc, &cj) in comp.iter().enumerate() {
        for (ib, &bi) in b.iter().enumerate() {
            col[ib] = l[[bi, cj]];
        }
        linalg::solve_lower_inplace(&chol, &mut col);
        linalg::solve_lower_transpose_inplace(&chol, &mut col);
        for ib in 0..nb {
            w[[ib, jc]] = col[ib];
        }
    }
    let mut entries = Array2::<S>::zeros((nc, nc));
    for (ic, &ci) in comp.iter().enumerate() {
        for (jc, &cj) in comp.iter().enumerate().take(ic + 1) {
            let mut s = l[[ci, cj]];
            for ib in 0..nb {
                s = s - l[[ci, b[ib]]] * w[[ib, jc]];
            }
            entries[[ic, jc]] = s;
            entries[[jc, ic]] = s;
        }
    }
    Ok((
        KernelMatrix {
            entries,
            alpha: kernel.alpha,
            gamma: kernel.gamma,
        },
        comp,
    ))
}

/// Resolvent form of the conditioning transform,
/// `L' = ([(L + I_C)^{-1}]_C)^{-1} - I`. Slower than [`condition_kernel`];
/// kept as the independent route for cross-checking.
pub fn condition_kernel_resolvent<S: Scalar>(
    kernel: &KernelMatrix<S>,
    conditioned: &Subset,
) -> Result<(KernelMatrix<S>, Vec<usize>)> {
    let n = kernel.n();
    let b: Vec<usize> = conditioned.indices().to_vec();
    let mut in_b = vec![false; n];
    for &i in &b {
        if i >= n {
            return Err(Error::InvalidInput(
                "conditioning index out of range".into(),
            ));
        }
        in_b[i] = true;
    }
    let comp: Vec<usize> = (0..n).filter(|&i| !in_b[i]).collect();
    if b.is_empty() {
        return Ok((kernel.clone(), comp));
    }
    let mut aug = kernel.entries.clone();
    for &i in &comp {
        aug[[i, i]] = aug[[i, i]] + S::one();
    }
    let chol = linalg::cholesky(&aug.view())
        .ok_or(Error::SingularConditioning(f64::INFINITY))?;
    let cond = linalg::cholesky_condition_estimate(&chol);
    if cond > CONDITION_LIMIT {
        return Err(Error::SingularConditioning(cond));
    }
    let inv = linalg::cholesky_inverse(&chol);
    let nc = comp.len();
    let sub = Array2::from_shape_fn((nc, nc), |(i, j)| inv[[comp[i], comp[j]]]);
    let chol2 = linalg::cholesky(&sub.view())
        .ok_or(Error::SingularConditioning(f64::INFINITY))?;
    let mut entries = linalg::cholesky_inverse(&chol2);
    for i in 0..nc {
        entries[[i, i]] = entries[[i, i]] - S::one();
    }
    Ok((
        KernelMatrix {
            entries,
            alpha: kernel.alpha,
            gamma: kernel.gamma,
        },
        comp,
    ))
}

/// Euclidean distance between two feature rows (the paper's metric `h`).
pub fn euclidean<S: Scalar>(a: &ArrayView1<S>, b: &ArrayView1<S>) -> S {
    let mut d2 = S::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        let t = *x - *y;
        d2 += t * t;
    }
    d2.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Subset;
    use itertools::Itertools;
    use ndarray::array;
    use rand_chacha::ChaCha8Rng;

    fn random_features(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.random::<f64>())
    }

    fn random_psd_kernel(n: usize, seed: u64) -> KernelMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, n + 1), |_| rng.random_range(-1.0..1.0));
        KernelMatrix::from_entries(x.dot(&x.t()), 1.0, 0.0).unwrap()
    }

    #[test]
    fn identical_rows_give_unit_similarity() {
        let f = array![[0.3, 0.4], [0.3, 0.4], [0.9, 0.1]];
        let s = gaussian_similarity(&f.view(), 0.7).unwrap();
        assert_eq!(s.entries()[[0, 1]], 1.0);
        assert_eq!(s.entries()[[0, 0]], 1.0);
    }

    #[test]
    fn hand_computed_similarity() {
        let f = array![[0.0, 0.0], [1.0, 0.0]];
        let s = gaussian_similarity(&f.view(), 1.0).unwrap();
        assert!((s.entries()[[0, 1]] - (-0.5f64).exp()).abs() < 1e-12);
        assert!((s.entries()[[0, 1]] - 0.606531).abs() < 1e-6);
    }

    #[test]
    fn similarity_is_psd() {
        for seed in 0..5 {
            let f = random_features(12, 3, seed);
            let s = gaussian_similarity(&f.view(), 0.4).unwrap();
            assert!(s.min_eigenvalue() >= -PSD_SLACK);
        }
    }

    #[test]
    fn similarity_rejects_bad_input() {
        let f = array![[0.0, f64::NAN]];
        assert!(matches!(
            gaussian_similarity(&f.view(), 1.0),
            Err(Error::InvalidInput(_))
        ));
        let g = array![[0.0, 1.0]];
        assert!(matches!(
            gaussian_similarity(&g.view(), 0.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn similarity_permutation_equivariant() {
        let f = random_features(6, 2, 7);
        let s = gaussian_similarity(&f.view(), 0.5).unwrap();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let fp = Array2::from_shape_fn((6, 2), |(i, j)| f[[perm[i], j]]);
        let sp = gaussian_similarity(&fp.view(), 0.5).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert!(
                    (sp.entries()[[i, j]] - s.entries()[[perm[i], perm[j]]]).abs() < 1e-15
                );
            }
        }
    }

    #[test]
    fn default_sigma_matches_closed_forms() {
        // E|U - V| = 1/3 for independent uniforms on [0,1]
        let s = default_sigma(2, 1).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 0.01, "got {s}");
        // mean distance of two uniform points in the unit square
        let s2 = default_sigma(2, 2).unwrap();
        assert!((s2 - 0.5214).abs() < 0.01, "got {s2}");
    }

    #[test]
    fn default_sigma_deterministic() {
        assert_eq!(default_sigma(5, 3).unwrap(), default_sigma(5, 3).unwrap());
        assert!(default_sigma(1, 2).is_err());
    }

    #[test]
    fn unit_scores_leave_similarity_unchanged() {
        let f = random_features(5, 2, 1);
        let s = gaussian_similarity(&f.view(), 0.5).unwrap();
        let l = build_kernel(&s, &ScoreVector::uniform(5), 1.0, 3.0).unwrap();
        for (a, b) in l.entries().iter().zip(s.entries().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gamma_zero_gives_similarity() {
        let f = random_features(5, 2, 2);
        let s = gaussian_similarity(&f.view(), 0.5).unwrap();
        let q = ScoreVector::new(vec![0.5, 1.5, 2.0, 0.1, 3.0]).unwrap();
        let l = build_kernel(&s, &q, 1.0, 0.0).unwrap();
        for (a, b) in l.entries().iter().zip(s.entries().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn alpha_zero_treats_scores_as_one() {
        let f = random_features(4, 2, 3);
        let s = gaussian_similarity(&f.view(), 0.5).unwrap();
        let q = ScoreVector::new(vec![2.0, 3.0, 0.5, 1.0]).unwrap();
        let l = build_kernel(&s, &q, 0.0, 2.0).unwrap();
        for (a, b) in l.entries().iter().zip(s.entries().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn hand_computed_kernel() {
        let s =
            SimilarityMatrix::from_inner_products(array![[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let q = ScoreVector::new(vec![2.0, 1.0]).unwrap();
        let l = build_kernel(&s, &q, 1.0, 1.0).unwrap();
        let want: Array2<f64> = array![[4.0, 1.0], [1.0, 1.0]];
        for (a, b) in l.entries().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_scores_rejected() {
        assert!(ScoreVector::<f64>::new(vec![1.0, -0.1]).is_err());
    }

    #[test]
    fn zero_score_zeroes_row_and_column() {
        let f = random_features(4, 2, 5);
        let s = gaussian_similarity(&f.view(), 0.5).unwrap();
        let q = ScoreVector::new(vec![1.0, 0.0, 2.0, 1.0]).unwrap();
        let l = build_kernel(&s, &q, 1.0, 2.0).unwrap();
        for j in 0..4 {
            assert_eq!(l.entries()[[1, j]], 0.0);
            assert_eq!(l.entries()[[j, 1]], 0.0);
        }
    }

    #[test]
    fn kernel_det_factorizes_over_scores() {
        // det(L_A) = prod_{i in A} q_i^{2 gamma / alpha} * det(S_A)
        let f = random_features(6, 2, 8);
        let s = gaussian_similarity(&f.view(), 0.6).unwrap();
        let qv = vec![0.5, 1.5, 2.0, 0.7, 1.2, 0.9];
        let q = ScoreVector::new(qv.clone()).unwrap();
        let (alpha, gamma) = (2.0, 3.0);
        let l = build_kernel(&s, &q, alpha, gamma).unwrap();
        let sref = KernelMatrix::from_entries(s.entries().to_owned(), 1.0, 0.0).unwrap();
        for k in 1..=3 {
            for a in (0..6).combinations(k) {
                let ld_l = l.log_det_of(&a);
                let ld_s = sref.log_det_of(&a);
                let factor: f64 = a
                    .iter()
                    .map(|&i| (2.0 * gamma / alpha) * qv[i].ln())
                    .sum();
                assert!((ld_l - (ld_s + factor)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn conditioning_on_empty_is_identity() {
        let l = random_psd_kernel(5, 11);
        let (lp, map) = condition_kernel(&l, &Subset::empty()).unwrap();
        assert_eq!(map, vec![0, 1, 2, 3, 4]);
        for (a, b) in lp.entries().iter().zip(l.entries().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn conditioning_diagonal_kernel() {
        let l = KernelMatrix::from_entries(
            Array2::from_diag(&array![2.0, 3.0, 4.0]),
            1.0,
            0.0,
        )
        .unwrap();
        let (lp, map) = condition_kernel(&l, &Subset::new(vec![0], 3).unwrap()).unwrap();
        assert_eq!(map, vec![1, 2]);
        let want: Array2<f64> = array![[3.0, 0.0], [0.0, 4.0]];
        for (a, b) in lp.entries().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conditioning_matches_resolvent_route() {
        for seed in 0..5 {
            let l = random_psd_kernel(6, seed + 20);
            let b = Subset::new(vec![1, 4], 6).unwrap();
            let (fast, m1) = condition_kernel(&l, &b).unwrap();
            let (slow, m2) = condition_kernel_resolvent(&l, &b).unwrap();
            assert_eq!(m1, m2);
            for (a, c) in fast.entries().iter().zip(slow.entries().iter()) {
                assert!((a - c).abs() < 1e-8, "{a} vs {c}");
            }
        }
    }

    #[test]
    fn conditioning_matches_brute_force_conditional() {
        // For every A in the complement, det(L'_A) normalized over |A| = 1
        // must equal the brute-force conditional P(X = A u B | B in X).
        let l = random_psd_kernel(3, 33);
        let b = Subset::new(vec![0], 3).unwrap();
        let (lp, map) = condition_kernel(&l, &b).unwrap();
        assert_eq!(map, vec![1, 2]);
        // brute force over subsets of size 2 containing 0
        let dets: Vec<f64> = vec![
            l.log_det_of(&[0, 1]).exp(),
            l.log_det_of(&[0, 2]).exp(),
        ];
        let z: f64 = dets.iter().sum();
        let cp: Vec<f64> = vec![
            lp.log_det_of(&[0]).exp(),
            lp.log_det_of(&[1]).exp(),
        ];
        let zc: f64 = cp.iter().sum();
        for i in 0..2 {
            assert!((dets[i] / z - cp[i] / zc).abs() < 1e-8);
        }
    }

    #[test]
    fn conditioning_on_zero_probability_subset_fails() {
        // rank-1 kernel: any pair has probability 0
        let v = array![1.0, 2.0, 3.0];
        let l = KernelMatrix::from_entries(
            Array2::from_shape_fn((3, 3), |(i, j)| v[i] * v[j]),
            1.0,
            0.0,
        )
        .unwrap();
        let r = condition_kernel(&l, &Subset::new(vec![0, 1], 3).unwrap());
        assert!(matches!(r, Err(Error::SingularConditioning(_))));
    }
}
