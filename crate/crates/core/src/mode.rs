//! Mode approximation for k-DPPs: greedy selection, the convex relaxation of
//! the generating polynomial solved by stochastic mirror descent (or a
//! deterministic fixed point at small N), and maximum coordinate rounding.

use itertools::Itertools;
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{condition_kernel, KernelMatrix};
use crate::linalg;
use crate::sampler::{ExchangeChain, Subset, ENUMERATION_CAP};
use crate::scalar::Scalar;

/// Instance-size threshold (on C(N, k)) below which the relaxation is solved
/// by the deterministic fixed point on the exact generating polynomial.
pub const EXACT_RELAXATION_CAP: f64 = 1e5;

/// Nonnegative vector on the scaled simplex `sum v_i = k`.
#[derive(Debug, Clone)]
pub struct RelaxationPoint<S: Scalar> {
    v: Array1<S>,
    k: usize,
}

impl<S: Scalar> RelaxationPoint<S> {
    pub fn new(v: Array1<S>, k: usize) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite() || *x < S::zero()) {
            return Err(Error::InvalidInput(
                "relaxation point must be finite and nonnegative".into(),
            ));
        }
        let sum = v.sum().to_f64_lossy();
        if (sum - k as f64).abs() > 1e-9 * (k as f64).max(1.0) {
            return Err(Error::InvalidInput(format!(
                "relaxation point sums to {sum}, expected {k}"
            )));
        }
        Ok(Self { v, k })
    }

    /// Uniform point `v_i = k / N`.
    pub fn uniform(n: usize, k: usize) -> Self {
        Self {
            v: Array1::from_elem(n, S::of(k as f64 / n as f64)),
            k,
        }
    }

    pub fn values(&self) -> &Array1<S> {
        &self.v
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Coordinate of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.v.len() {
            if self.v[i] > self.v[best] {
                best = i;
            }
        }
        best
    }
}

/// Which algorithm produced a [`ModeResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeAlgorithm {
    Greedy,
    Mcr,
    Exhaustive,
}

/// An approximate (or exhaustive) mode with its achieved log-determinant.
#[derive(Debug, Clone)]
pub struct ModeResult<S: Scalar> {
    pub subset: Subset,
    pub log_det: S,
    pub algorithm: ModeAlgorithm,
    pub iterations: usize,
}

/// `log g(v)` where `g(v) = sum_{|A|=k} det(L_A) prod_{i in A} v_i`,
/// evaluated as `log e_k` of the eigenvalues of
/// `diag(sqrt v) L diag(sqrt v)`. Negative infinity when `g = 0`.
pub fn generating_polynomial<S: Scalar>(
    l: &KernelMatrix<S>,
    k: usize,
    v: &RelaxationPoint<S>,
) -> Result<S> {
    let n = l.n();
    if v.len() != n {
        return Err(Error::InvalidInput(
            "relaxation point length does not match kernel".into(),
        ));
    }
    if k > n {
        return Err(Error::InvalidParameter("k exceeds ground set".into()));
    }
    let sq: Vec<S> = v.values().iter().map(|x| x.sqrt()).collect();
    let le = l.entries();
    let scaled = Array2::from_shape_fn((n, n), |(i, j)| sq[i] * le[[i, j]] * sq[j]);
    let lambdas = linalg::sym_eigenvalues(&scaled.view());
    let lams: Vec<S> = lambdas.iter().map(|&x| x.max(S::zero())).collect();
    Ok(linalg::log_e_k(&lams, k))
}

/// Exhaustive enumeration of all k-subsets with cached log-determinants.
/// The independent oracle for the generating polynomial, marginals, and the
/// exact mode; guarded by [`ENUMERATION_CAP`].
pub struct KdppEnumeration<S: Scalar> {
    combos: Vec<Vec<usize>>,
    log_dets: Vec<S>,
    n: usize,
    k: usize,
}

impl<S: Scalar> KdppEnumeration<S> {
    pub fn build(l: &KernelMatrix<S>, k: usize) -> Result<Self> {
        let n = l.n();
        if linalg::binomial_f64(n, k) > ENUMERATION_CAP {
            return Err(Error::Capacity(format!(
                "C({n}, {k}) exceeds enumeration cap"
            )));
        }
        let mut combos = Vec::new();
        let mut log_dets = Vec::new();
        for combo in (0..n).combinations(k) {
            log_dets.push(l.log_det_of(&combo));
            combos.push(combo);
        }
        Ok(Self {
            combos,
            log_dets,
            n,
            k,
        })
    }

    /// `log g(v)` by direct summation.
    pub fn log_g(&self, v: &RelaxationPoint<S>) -> S {
        let logv: Vec<S> = v
            .values()
            .iter()
            .map(|x| {
                if *x > S::zero() {
                    x.ln()
                } else {
                    S::neg_infinity()
                }
            })
            .collect();
        let mut terms: Vec<S> = Vec::with_capacity(self.combos.len());
        let mut max_t = S::neg_infinity();
        for (combo, &ld) in self.combos.iter().zip(&self.log_dets) {
            let mut t = ld;
            for &i in combo {
                t = t + logv[i];
            }
            if t > max_t {
                max_t = t;
            }
            terms.push(t);
        }
        if !max_t.is_finite() {
            return S::neg_infinity();
        }
        let mut s = S::zero();
        for t in terms {
            s += (t - max_t).exp();
        }
        max_t + s.ln()
    }

    /// Marginal vector `p_i = P(i in A)` under `P(A) ∝ prod v_i det(L_A)`.
    pub fn marginals(&self, v: &RelaxationPoint<S>) -> Result<Array1<S>> {
        let logv: Vec<S> = v
            .values()
            .iter()
            .map(|x| {
                if *x > S::zero() {
                    x.ln()
                } else {
                    S::neg_infinity()
                }
            })
            .collect();
        let mut terms: Vec<S> = Vec::with_capacity(self.combos.len());
        let mut max_t = S::neg_infinity();
        for (combo, &ld) in self.combos.iter().zip(&self.log_dets) {
            let mut t = ld;
            for &i in combo {
                t = t + logv[i];
            }
            if t > max_t {
                max_t = t;
            }
            terms.push(t);
        }
        if !max_t.is_finite() {
            return Err(Error::Degenerate("g(v) = 0".into()));
        }
        let mut z = S::zero();
        let mut p = Array1::<S>::zeros(self.n);
        for (combo, t) in self.combos.iter().zip(terms) {
            let w = (t - max_t).exp();
            z += w;
            for &i in combo {
                p[i] += w;
            }
        }
        Ok(p.mapv(|x| x / z))
    }

    /// The exact mode subset and its log-determinant.
    pub fn mode(&self) -> Result<(Subset, S)> {
        let mut best = 0;
        for i in 1..self.log_dets.len() {
            if self.log_dets[i] > self.log_dets[best] {
                best = i;
            }
        }
        if !self.log_dets[best].is_finite() {
            return Err(Error::Degenerate("all subsets singular".into()));
        }
        Ok((
            Subset::new(self.combos[best].clone(), self.n)?,
            self.log_dets[best],
        ))
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Marginal probabilities `p_i = P(i in A)` under `P(A) ∝ prod v_i det(L_A)`.
///
/// Exact by enumeration when `C(N, k)` is within [`ENUMERATION_CAP`];
/// otherwise estimated by averaging indicator vectors along an exchange walk
/// seeded by `seed`.
pub fn dpp_marginals<S: Scalar>(
    l: &KernelMatrix<S>,
    k: usize,
    v: &RelaxationPoint<S>,
    seed: u64,
) -> Result<Array1<S>> {
    let n = l.n();
    if linalg::binomial_f64(n, k) <= ENUMERATION_CAP {
        return KdppEnumeration::build(l, k)?.marginals(v);
    }
    let start = greedy_mode(l, k)?.subset.indices().to_vec();
    let mut chain = ExchangeChain::new(l.entries(), k, 1.0, start, seed)?;
    let w: Vec<S> = v.values().to_vec();
    chain.set_weights(&w);
    chain.run(20 * n * k); // burn-in
    let samples = 4000;
    let mut p = Array1::<S>::zeros(n);
    for _ in 0..samples {
        chain.run(k.max(1));
        for &i in chain.state() {
            p[i] += S::one();
        }
    }
    Ok(p.mapv(|x| x / S::of(samples as f64)))
}

/// Greedy mode approximation: repeatedly add the item with the largest
/// incremental squared volume (Schur-complement gain), lowest index on ties.
pub fn greedy_mode<S: Scalar>(l: &KernelMatrix<S>, k: usize) -> Result<ModeResult<S>> {
    let n = l.n();
    if k > n {
        return Err(Error::InvalidParameter("k exceeds ground set".into()));
    }
    let le = l.entries();
    let mut max_diag = S::zero();
    let mut gain: Vec<S> = (0..n).map(|i| le[[i, i]]).collect();
    for g in &gain {
        max_diag = max_diag.max(*g);
    }
    let tol = S::of(n as f64) * S::epsilon() * max_diag.max(S::one());
    // factors[i] holds the growing Cholesky row of item i against the
    // selected set
    let mut factors = vec![S::zero(); n * k.max(1)];
    let mut selected_mask = vec![false; n];
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut log_det = S::zero();

    for step in 0..k {
        let mut best = usize::MAX;
        let mut best_gain = S::neg_infinity();
        for i in 0..n {
            if !selected_mask[i] && gain[i] > best_gain {
                best_gain = gain[i];
                best = i;
            }
        }
        if best == usize::MAX || best_gain <= tol {
            return Err(Error::RankDeficient(format!(
                "greedy stalled after {} of {} items",
                step, k
            )));
        }
        selected_mask[best] = true;
        selected.push(best);
        log_det += best_gain.ln();
        let root = best_gain.sqrt();
        for i in 0..n {
            if selected_mask[i] {
                continue;
            }
            let mut dot = S::zero();
            for t in 0..step {
                dot += factors[i * k + t] * factors[best * k + t];
            }
            let e = (le[[i, best]] - dot) / root;
            factors[i * k + step] = e;
            gain[i] = gain[i] - e * e;
        }
        // keep best's own factor row for later dot products
        factors[best * k + step] = root;
    }
    Ok(ModeResult {
        subset: Subset::new(selected, n)?,
        log_det,
        algorithm: ModeAlgorithm::Greedy,
        iterations: k,
    })
}

/// Exhaustive mode (test oracle), guarded by the enumeration cap.
pub fn exhaustive_mode<S: Scalar>(l: &KernelMatrix<S>, k: usize) -> Result<ModeResult<S>> {
    let enumeration = KdppEnumeration::build(l, k)?;
    let (subset, log_det) = enumeration.mode()?;
    Ok(ModeResult {
        subset,
        log_det,
        algorithm: ModeAlgorithm::Exhaustive,
        iterations: 0,
    })
}

/// Stochastic gradient flavor for mirror descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GradVariant {
    /// Indicator vector of the sampled subset.
    Indicator,
    /// `k` times the add-back transition probabilities of the exchange walk;
    /// same expectation, lower variance.
    Transition,
}

/// Stochastic mirror descent configuration.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SmdConfig {
    pub eta: f64,
    /// `None` selects the default `200 * N / k` iterations.
    pub n_iters: Option<usize>,
    pub seed: u64,
    pub grad_variant: GradVariant,
    /// Iterations of plain indicator gradients before switching to the
    /// transition variant (ignored for `Indicator`).
    pub warmup_indicator: usize,
    /// Chain moves between consecutive stochastic gradients; `None` selects
    /// `4k`.
    pub chain_steps_per_iter: Option<usize>,
    /// Subsets averaged into each stochastic gradient.
    pub grad_samples: usize,
    /// Cadence of exact log-g evaluation for best-iterate tracking.
    pub eval_every: usize,
}

impl Default for SmdConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            n_iters: None,
            seed: 0,
            grad_variant: GradVariant::Transition,
            warmup_indicator: 50,
            chain_steps_per_iter: None,
            grad_samples: 4,
            eval_every: 50,
        }
    }
}

impl SmdConfig {
    pub fn iters_for(&self, n: usize, k: usize) -> usize {
        self.n_iters.unwrap_or((200 * n / k.max(1)).max(1))
    }
}

/// Transition-probability stochastic gradient: the exact one-step
/// transition law of the exchange walk from `A`,
/// `X_j = k * P(j in next state | A)`, averaging over the uniformly dropped
/// element and the weighted add-back `P(add j | A - i) ∝ v_j det(L_{A-i+j})`.
/// Entries sum to `k` exactly.
pub fn transition_gradient<S: Scalar>(
    l: &KernelMatrix<S>,
    k: usize,
    v: &RelaxationPoint<S>,
    a: &Subset,
) -> Result<Array1<S>> {
    let n = l.n();
    if a.k() != k || k == 0 {
        return Err(Error::InvalidInput("subset size must equal k > 0".into()));
    }
    if v.len() != n {
        return Err(Error::InvalidInput(
            "relaxation point length does not match kernel".into(),
        ));
    }
    let le = l.entries();
    let idx = a.indices();
    let sub = Array2::from_shape_fn((k, k), |(x, y)| le[[idx[x], idx[y]]]);
    let chol = linalg::cholesky(&sub.view())
        .ok_or_else(|| Error::Degenerate("subset has zero probability".into()))?;
    let minv = linalg::cholesky_inverse(&chol);

    // For j outside A the Schur complement after dropping row r of A is
    //   s_{r,j} = d_j + c_{r,j}^2 / m_{rr}
    // with d_j = L_jj - b_j' M b_j, c_j = M b_j, M = (L_A)^{-1}; re-adding
    // the dropped element itself has s_{r,r} = 1 / m_{rr}.
    let mut c = Array2::<S>::zeros((k, n));
    let mut d = vec![S::zero(); n];
    let vv = v.values();
    for j in 0..n {
        if a.contains(j) {
            continue;
        }
        let mut dj = le[[j, j]];
        for r in 0..k {
            let mut crj = S::zero();
            for t in 0..k {
                crj += minv[[r, t]] * le[[idx[t], j]];
            }
            c[[r, j]] = crj;
            dj -= crj * le[[idx[r], j]];
        }
        d[j] = dj.max(S::zero());
    }

    let mut x = Array1::<S>::zeros(n);
    let inv_k = S::of(1.0 / k as f64);
    let k_s = S::of(k as f64);
    for r in 0..k {
        let mrr = minv[[r, r]];
        if !(mrr > S::zero()) {
            return Err(Error::Degenerate("subset inverse lost definiteness".into()));
        }
        let self_w = vv[idx[r]] / mrr;
        let mut z = self_w;
        for j in 0..n {
            if !a.contains(j) {
                z += vv[j] * (d[j] + c[[r, j]] * c[[r, j]] / mrr);
            }
        }
        if !(z > S::zero()) {
            return Err(Error::Degenerate("no feasible add-back move".into()));
        }
        let scale = k_s * inv_k / z;
        x[idx[r]] += self_w * scale;
        for j in 0..n {
            if !a.contains(j) {
                x[j] += vv[j] * (d[j] + c[[r, j]] * c[[r, j]] / mrr) * scale;
            }
        }
    }
    Ok(x)
}

/// Stochastic mirror descent on `log g` over the scaled simplex.
///
/// Each iteration samples `A` with `P(A) ∝ prod v_i det(L_A)` from a
/// persistent exchange walk, takes the (indicator or transition) stochastic
/// gradient step `u = v + eta X`, and projects back via `v = k u / sum(u)`.
/// Returns the iterate with the best exactly evaluated `log g`.
pub fn smd_relaxation<S: Scalar>(
    l: &KernelMatrix<S>,
    k: usize,
    cfg: &SmdConfig,
) -> Result<RelaxationPoint<S>> {
    let n = l.n();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter("need 0 < k <= N".into()));
    }
    if cfg.eta <= 0.0 {
        return Err(Error::InvalidParameter("eta must be positive".into()));
    }
    let n_iters = cfg.iters_for(n, k);
    let chain_steps = cfg.chain_steps_per_iter.unwrap_or(4 * k).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let start = greedy_mode(l, k)?.subset.indices().to_vec();
    let mut chain = ExchangeChain::new(l.entries(), k, 1.0, start, rng.random())?;

    let mut v = RelaxationPoint::<S>::uniform(n, k);
    let mut best = v.clone();
    let mut best_log_g = S::neg_infinity();
    let mut weights: Vec<S> = v.values().to_vec();
    // tail average of the iterates; by concavity of log g it scores at least
    // the mean of its constituents and washes out sampling noise
    let avg_from = n_iters / 4;
    let mut avg = Array1::<S>::zeros(n);
    let mut avg_count = 0usize;

    let grad_samples = cfg.grad_samples.max(1);
    for t in 0..n_iters {
        weights.copy_from_slice(v.values().as_slice().unwrap());
        chain.set_weights(&weights);

        let use_transition = cfg.grad_variant == GradVariant::Transition
            && t >= cfg.warmup_indicator;
        let mut x = Array1::<S>::zeros(n);
        for _ in 0..grad_samples {
            chain.run(chain_steps);
            let a = Subset::new(chain.state().to_vec(), n)?;
            if use_transition {
                x += &transition_gradient(l, k, &v, &a)?;
            } else {
                for &i in a.indices() {
                    x[i] += S::one();
                }
            }
        }
        x.mapv_inplace(|t| t / S::of(grad_samples as f64));

        let eta_s = S::of(cfg.eta);
        let mut u = v.values().clone();
        u.zip_mut_with(&x, |ui, xi| *ui += eta_s * *xi);
        let sum = u.sum();
        if !sum.is_finite() || sum <= S::zero() {
            return Err(Error::Divergence {
                iter: t,
                msg: "non-finite iterate".into(),
            });
        }
        let scale = S::of(k as f64) / sum;
        let vnew = u.mapv(|x| x * scale);
        v = RelaxationPoint { v: vnew, k };
        if t >= avg_from {
            avg += v.values();
            avg_count += 1;
        }

        if cfg.eval_every > 0 && (t + 1) % cfg.eval_every == 0 {
            let lg = generating_polynomial(l, k, &v)?;
            if lg > best_log_g {
                best_log_g = lg;
                best = v.clone();
            }
        }
    }
    let lg = generating_polynomial(l, k, &v)?;
    if lg > best_log_g {
        best_log_g = lg;
        best = v;
    }
    if avg_count > 0 {
        avg.mapv_inplace(|x| x / S::of(avg_count as f64));
        let sum = avg.sum();
        let scale = S::of(k as f64) / sum;
        let avg_point = RelaxationPoint {
            v: avg.mapv(|x| x * scale),
            k,
        };
        if generating_polynomial(l, k, &avg_point)? > best_log_g {
            best = avg_point;
        }
    }
    Ok(best)
}

/// Deterministic relaxation solve on the exact generating-polynomial oracle:
/// damped marginal fixed point `v <- (1-beta) v + beta p(v)` (at the optimum
/// `p = v` by first-order optimality). Small-N path of [`mcr_mode`].
pub fn exact_relaxation<S: Scalar>(
    l: &KernelMatrix<S>,
    k: usize,
) -> Result<RelaxationPoint<S>> {
    let enumeration = KdppEnumeration::build(l, k)?;
    let n = l.n();
    let mut v = RelaxationPoint::<S>::uniform(n, k);
    let beta = S::of(0.5);
    let one_m = S::one() - beta;
    let mut best = v.clone();
    let mut best_log_g = enumeration.log_g(&v);
    for _ in 0..5000 {
        let p = enumeration.marginals(&v)?;
        let mut delta = S::zero();
        let mut vnew = v.values().clone();
        for i in 0..n {
            let target = p[i];
            delta = delta.max((vnew[i] - target).abs());
            vnew[i] = one_m * vnew[i] + beta * target;
        }
        // renormalize exactly against accumulated roundoff
        let sum = vnew.sum();
        let scale = S::of(k as f64) / sum;
        vnew.mapv_inplace(|x| x * scale);
        v = RelaxationPoint { v: vnew, k };
        let lg = enumeration.log_g(&v);
        if lg > best_log_g {
            best_log_g = lg;
            best = v.clone();
        }
        if delta < S::of(1e-12) {
            break;
        }
    }
    Ok(best)
}

/// Maximum-coordinate-rounding configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct McrConfig {
    pub smd: SmdConfig,
    /// `C(N, k)` threshold below which the relaxation is solved exactly.
    pub exact_threshold: f64,
}

impl Default for McrConfig {
    fn default() -> Self {
        Self {
            smd: SmdConfig::default(),
            exact_threshold: EXACT_RELAXATION_CAP,
        }
    }
}

/// Maximum coordinate rounding: solve the relaxation, fix the largest
/// coordinate, condition the kernel on it, and recurse on `k - 1`.
pub fn mcr_mode<S: Scalar>(l: &KernelMatrix<S>, k: usize, cfg: &McrConfig) -> Result<ModeResult<S>> {
    let n = l.n();
    if k > n {
        return Err(Error::InvalidParameter("k exceeds ground set".into()));
    }
    let mut current = l.clone();
    let mut mapping: Vec<usize> = (0..n).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut iterations = 0usize;
    for level in 0..k {
        let rem = k - level;
        let n_cur = current.n();
        let v = if linalg::binomial_f64(n_cur, rem) <= cfg.exact_threshold {
            let point = exact_relaxation(&current, rem)?;
            iterations += 1;
            point
        } else {
            let mut smd = cfg.smd;
            smd.seed = cfg
                .smd
                .seed
                .wrapping_add((level as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            iterations += smd.iters_for(n_cur, rem);
            smd_relaxation(&current, rem, &smd)?
        };
        let pick_local = v.argmax();
        chosen.push(mapping[pick_local]);
        if rem > 1 {
            let (next, comp) = condition_kernel(
                &current,
                &Subset::new(vec![pick_local], n_cur)?,
            )?;
            mapping = comp.into_iter().map(|i| mapping[i]).collect();
            current = next;
        }
    }
    let subset = Subset::new(chosen, n)?;
    let log_det = l.log_det_of(subset.indices());
    Ok(ModeResult {
        subset,
        log_det,
        algorithm: ModeAlgorithm::Mcr,
        iterations,
    })
}
