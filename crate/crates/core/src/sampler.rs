//! Subset sampling from (exponentiated) k-DPPs: a brute-force oracle, exact
//! eigendecomposition sampling, and a Metropolis exchange walk for general
//! exponents.

use std::collections::HashMap;

use itertools::Itertools;
use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::linalg;
use crate::mode;
use crate::scalar::Scalar;

/// Cap on C(N, k) for exhaustive enumeration.
pub const ENUMERATION_CAP: f64 = 1e6;

/// A size-k index set over a ground set of size `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subset {
    indices: Vec<usize>,
}

impl Subset {
    /// Build from indices; sorts, and rejects duplicates or out-of-range
    /// entries.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate index in subset".into()));
        }
        if indices.last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidInput(format!(
                "subset index out of range (n = {n})"
            )));
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// A k-DPP with exponent `alpha`: `P(A) ∝ det(L_A)^alpha` over `|A| = k`.
#[derive(Debug, Clone)]
pub struct DppDistribution<S: Scalar> {
    pub kernel: KernelMatrix<S>,
    pub k: usize,
    pub alpha: f64,
}

impl<S: Scalar> DppDistribution<S> {
    /// Uses the kernel's own alpha as the exponent.
    pub fn new(kernel: KernelMatrix<S>, k: usize) -> Result<Self> {
        let alpha = kernel.alpha();
        Self::with_alpha(kernel, k, alpha)
    }

    pub fn with_alpha(kernel: KernelMatrix<S>, k: usize, alpha: f64) -> Result<Self> {
        if k > kernel.n() {
            return Err(Error::InvalidParameter(format!(
                "k = {} exceeds ground set size {}",
                k,
                kernel.n()
            )));
        }
        if alpha < 0.0 {
            return Err(Error::InvalidParameter("alpha must be >= 0".into()));
        }
        Ok(Self { kernel, k, alpha })
    }

    pub fn n(&self) -> usize {
        self.kernel.n()
    }
}

/// Chain start state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum McmcInit {
    /// Greedy mode of the kernel (the likelihood-maximizing start).
    GreedyMode,
    /// Uniform random k-subset, repaired if singular.
    UniformRandom,
}

/// Exchange-walk configuration.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct McmcConfig {
    pub n_steps: usize,
    pub seed: u64,
    pub init: McmcInit,
}

impl McmcConfig {
    pub fn new(n_steps: usize, seed: u64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
        }
        Ok(Self {
            n_steps,
            seed,
            init: McmcInit::GreedyMode,
        })
    }

    /// Default chain length used inside strategies: `50 * N * k` swap moves.
    pub fn default_steps(n: usize, k: usize) -> usize {
        (50 * n * k).max(1)
    }
}

/// Exhaustive pmf over all k-subsets: `P(A) = det(L_A)^alpha / Z`.
pub fn brute_force_pmf<S: Scalar>(dist: &DppDistribution<S>) -> Result<HashMap<Subset, f64>> {
    let n = dist.n();
    let k = dist.k;
    if linalg::binomial_f64(n, k) > ENUMERATION_CAP {
        return Err(Error::Capacity(format!(
            "C({n}, {k}) exceeds enumeration cap"
        )));
    }
    let mut weights: Vec<(Subset, f64)> = Vec::new();
    let mut max_logw = f64::NEG_INFINITY;
    for combo in (0..n).combinations(k) {
        let ld = dist.kernel.log_det_of(&combo).to_f64_lossy();
        let logw = if dist.alpha == 0.0 { 0.0 } else { dist.alpha * ld };
        if logw > max_logw {
            max_logw = logw;
        }
        weights.push((Subset { indices: combo }, logw));
    }
    if !max_logw.is_finite() {
        return Err(Error::Degenerate(
            "all subsets have zero probability (rank < k)".into(),
        ));
    }
    let mut z = 0.0;
    for (_, w) in weights.iter_mut() {
        *w = (*w - max_logw).exp();
        z += *w;
    }
    Ok(weights
        .into_iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(s, w)| (s, w / z))
        .collect())
}

/// Exact k-DPP sampling (alpha = 1 only): elementary-symmetric-polynomial
/// selection of k eigenvectors followed by projection-DPP sampling.
pub fn sample_exact<S: Scalar>(dist: &DppDistribution<S>, seed: u64) -> Result<Subset> {
    if (dist.alpha - 1.0).abs() > 1e-12 {
        return Err(Error::UnsupportedExponent(dist.alpha));
    }
    let n = dist.n();
    let k = dist.k;
    if k == 0 {
        return Ok(Subset::empty());
    }
    let eig = linalg::sym_eigen(&dist.kernel.entries());
    let lambdas: Vec<S> = eig.values.iter().map(|&l| l.max(S::zero())).collect();
    let positive = lambdas.iter().filter(|&&l| l > S::zero()).count();
    if positive < k {
        return Err(Error::Degenerate(format!(
            "kernel rank {positive} is below k = {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // phase 1: pick which k eigenvectors span the projection DPP
    let table = linalg::log_esp_table(&lambdas, k);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut j = k;
    for m in (1..=n).rev() {
        if j == 0 {
            break;
        }
        if m == j {
            // all remaining eigenvalues must be taken
            for t in (0..m).rev() {
                chosen.push(t);
            }
            break;
        }
        let lam = lambdas[m - 1];
        if lam <= S::zero() {
            continue;
        }
        let log_p = lam.ln() + table[[j - 1, m - 1]] - table[[j, m]];
        if S::of(rng.random::<f64>()) < log_p.exp() {
            chosen.push(m - 1);
            j -= 1;
        }
    }
    debug_assert_eq!(chosen.len(), k);

    // phase 2: projection DPP over the chosen eigenvectors
    let mut v = Array2::<S>::zeros((n, k));
    for (c, &idx) in chosen.iter().enumerate() {
        for r in 0..n {
            v[[r, c]] = eig.vectors[[r, idx]];
        }
    }
    let mut picked: Vec<usize> = Vec::with_capacity(k);
    let mut cols = k;
    for _ in 0..k {
        // row norms are selection probabilities (sum to `cols`)
        let mut probs = vec![0.0f64; n];
        let mut total = 0.0;
        for i in 0..n {
            let mut s = S::zero();
            for c in 0..cols {
                s += v[[i, c]] * v[[i, c]];
            }
            let p = s.to_f64_lossy().max(0.0);
            probs[i] = p;
            total += p;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, p) in probs.iter().enumerate() {
            target -= p;
            if target <= 0.0 {
                pick = i;
                break;
            }
        }
        picked.push(pick);

        // eliminate coordinate `pick`: drop the column with the largest
        // component there and orthogonalize the rest against it
        let mut best_c = 0;
        let mut best = S::neg_infinity();
        for c in 0..cols {
            if v[[pick, c]].abs() > best {
                best = v[[pick, c]].abs();
                best_c = c;
            }
        }
        let pivot = v[[pick, best_c]];
        let e: Vec<S> = (0..n).map(|r| v[[r, best_c]] / pivot).collect();
        // move last column into best_c's slot
        if best_c != cols - 1 {
            for r in 0..n {
                let t = v[[r, cols - 1]];
                v[[r, best_c]] = t;
            }
        }
        cols -= 1;
        for c in 0..cols {
            let f = v[[pick, c]];
            for r in 0..n {
                v[[r, c]] = v[[r, c]] - f * e[r];
            }
        }
        // re-orthonormalize remaining columns (Gram-Schmidt) for stability
        for c in 0..cols {
            for p in 0..c {
                let mut dot = S::zero();
                for r in 0..n {
                    dot += v[[r, c]] * v[[r, p]];
                }
                for r in 0..n {
                    v[[r, c]] = v[[r, c]] - dot * v[[r, p]];
                }
            }
            let mut nrm = S::zero();
            for r in 0..n {
                nrm += v[[r, c]] * v[[r, c]];
            }
            let nrm = nrm.sqrt();
            if nrm > S::zero() {
                for r in 0..n {
                    v[[r, c]] = v[[r, c]] / nrm;
                }
            }
        }
    }
    Subset::new(picked, n)
}

/// Metropolis exchange walk over k-subsets.
///
/// Per step: pick `i` in the set and `j` outside it uniformly, accept the swap
/// with probability `min(1, (w_j/w_i) * (det(L_{A-i+j}) / det(L_A))^alpha)`.
/// Per-item weights `w` default to 1; the mode module uses them for
/// relaxation-weighted sampling.
pub(crate) struct ExchangeChain<'a, S: Scalar> {
    l: ArrayView2<'a, S>,
    k: usize,
    alpha: f64,
    weights: Vec<S>,
    state: Vec<usize>,
    comp: Vec<usize>,
    pos: Vec<usize>, // pos[item] = position in state (if member) or comp
    is_member: Vec<bool>,
    minv: Array2<S>, // inverse of L_A (alpha > 0 only)
    log_det: S,
    rng: ChaCha8Rng,
    accepts_since_refresh: usize,
    // scratch
    buf_b: Vec<S>,
    buf_w: Vec<S>,
    buf_c: Vec<S>,
}

impl<'a, S: Scalar> ExchangeChain<'a, S> {
    /// Refresh cadence for the maintained inverse.
    const REFRESH_EVERY: usize = 128;

    pub fn new(
        l: ArrayView2<'a, S>,
        k: usize,
        alpha: f64,
        start: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        let n = l.nrows();
        debug_assert_eq!(start.len(), k);
        let mut is_member = vec![false; n];
        for &i in &start {
            is_member[i] = true;
        }
        let comp: Vec<usize> = (0..n).filter(|&i| !is_member[i]).collect();
        let mut pos = vec![0usize; n];
        for (p, &i) in start.iter().enumerate() {
            pos[i] = p;
        }
        for (p, &i) in comp.iter().enumerate() {
            pos[i] = p;
        }
        let mut chain = Self {
            l,
            k,
            alpha,
            weights: vec![S::one(); n],
            state: start,
            comp,
            pos,
            is_member,
            minv: Array2::zeros((k, k)),
            log_det: S::zero(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            accepts_since_refresh: 0,
            buf_b: vec![S::zero(); k],
            buf_w: vec![S::zero(); k],
            buf_c: vec![S::zero(); k],
        };
        if alpha > 0.0 {
            chain
                .refresh_inverse()
                .map_err(|_| Error::Initialization("start subset has zero determinant".into()))?;
        }
        Ok(chain)
    }

    pub fn set_weights(&mut self, w: &[S]) {
        debug_assert_eq!(w.len(), self.weights.len());
        self.weights.copy_from_slice(w);
    }

    pub fn state(&self) -> &[usize] {
        &self.state
    }

    fn refresh_inverse(&mut self) -> Result<()> {
        let k = self.k;
        let sub = Array2::from_shape_fn((k, k), |(a, b)| {
            self.l[[self.state[a], self.state[b]]]
        });
        let chol = linalg::cholesky(&sub.view())
            .ok_or_else(|| Error::Degenerate("singular chain state".into()))?;
        let mut ld = S::zero();
        for i in 0..k {
            ld += chol[[i, i]].ln();
        }
        self.log_det = ld + ld;
        self.minv = linalg::cholesky_inverse(&chol);
        self.accepts_since_refresh = 0;
        Ok(())
    }

    /// One proposal; returns whether it was accepted.
    pub fn step(&mut self) -> bool {
        let k = self.k;
        if k == 0 || self.comp.is_empty() {
            return false;
        }
        let pi = self.rng.random_range(0..k);
        let pj = self.rng.random_range(0..self.comp.len());
        let i = self.state[pi];
        let j = self.comp[pj];

        let weight_ratio = if self.weights[i] > S::zero() {
            self.weights[j] / self.weights[i]
        } else if self.weights[j] > S::zero() {
            S::infinity()
        } else {
            S::one()
        };

        if self.alpha == 0.0 {
            let acc = weight_ratio >= S::one()
                || S::of(self.rng.random::<f64>()) < weight_ratio;
            if acc {
                self.apply_swap_bookkeeping(pi, pj, i, j);
            }
            return acc;
        }

        let minv = self
            .minv
            .as_slice_mut()
            .expect("inverse is contiguous");
        let mii = minv[pi * k + pi];
        if mii <= S::zero() {
            // numerical drift; rebuild and skip this proposal
            let _ = self.refresh_inverse();
            return false;
        }
        // b: new column restricted to A - i (slot pi zeroed)
        for t in 0..k {
            self.buf_b[t] = if t == pi {
                S::zero()
            } else {
                self.l[[self.state[t], j]]
            };
        }
        // w = M[:, pi]
        for t in 0..k {
            self.buf_w[t] = minv[t * k + pi];
        }
        // b^T M' b with M' = M - w w^T / mii
        let mut btm_b = S::zero();
        let mut btw = S::zero();
        for t in 0..k {
            let mut mb = S::zero();
            let row = &minv[t * k..t * k + k];
            for u in 0..k {
                mb += row[u] * self.buf_b[u];
            }
            self.buf_c[t] = mb;
            btm_b += self.buf_b[t] * mb;
            btw += self.buf_b[t] * self.buf_w[t];
        }
        let s = self.l[[j, j]] - (btm_b - btw * btw / mii);
        if !(s > S::zero()) {
            return false; // proposed set singular: ratio 0
        }
        let det_ratio = mii * s;
        // alpha = 1 with a finite weight ratio needs no log/exp round trip
        let acc = if self.alpha == 1.0 && weight_ratio.is_finite() {
            let ratio = weight_ratio * det_ratio;
            ratio >= S::one() || S::of(self.rng.random::<f64>()) < ratio
        } else {
            let log_acc = weight_ratio.ln() + S::of(self.alpha) * det_ratio.ln();
            log_acc >= S::zero() || S::of(self.rng.random::<f64>()) < log_acc.exp()
        };
        if !acc {
            return false;
        }

        // update inverse: remove i (M' has zero row/col at pi), then add j in
        // slot pi via the block-inverse formula with Schur complement s
        let inv_mii = S::one() / mii;
        for t in 0..k {
            let wt = self.buf_w[t] * inv_mii;
            let row = &mut minv[t * k..t * k + k];
            for u in 0..k {
                row[u] = row[u] - wt * self.buf_w[u];
            }
        }
        // c = M' b (reuse buf_c: adjust for the subtracted rank-one term)
        let scale = btw * inv_mii;
        for t in 0..k {
            self.buf_c[t] = self.buf_c[t] - scale * self.buf_w[t];
        }
        let inv_s = S::one() / s;
        for t in 0..k {
            let ct = self.buf_c[t] * inv_s;
            let row = &mut minv[t * k..t * k + k];
            for u in 0..k {
                row[u] = row[u] + ct * self.buf_c[u];
            }
        }
        for t in 0..k {
            let val = -self.buf_c[t] * inv_s;
            minv[pi * k + t] = val;
            minv[t * k + pi] = val;
        }
        minv[pi * k + pi] = inv_s;
        self.log_det += det_ratio.ln();

        self.apply_swap_bookkeeping(pi, pj, i, j);
        self.accepts_since_refresh += 1;
        if self.accepts_since_refresh >= Self::REFRESH_EVERY {
            let _ = self.refresh_inverse();
        }
        true
    }

    fn apply_swap_bookkeeping(&mut self, pi: usize, pj: usize, i: usize, j: usize) {
        self.state[pi] = j;
        self.comp[pj] = i;
        self.pos[j] = pi;
        self.pos[i] = pj;
        self.is_member[j] = true;
        self.is_member[i] = false;
    }

    pub fn run(&mut self, steps: usize) {
        for _ in 0..steps {
            self.step();
        }
    }

    #[cfg(test)]
    pub fn log_det(&self) -> S {
        self.log_det
    }
}

/// Find a feasible (nonzero-determinant) start for the chain.
fn initial_subset<S: Scalar>(
    dist: &DppDistribution<S>,
    init: McmcInit,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let n = dist.n();
    let k = dist.k;
    match init {
        McmcInit::GreedyMode => {
            let m = mode::greedy_mode(&dist.kernel, k)?;
            Ok(m.subset.indices().to_vec())
        }
        McmcInit::UniformRandom => {
            let mut indices: Vec<usize> = (0..n).collect();
            indices.shuffle(rng);
            let mut current: Vec<usize> = indices[..k].to_vec();
            if dist.alpha == 0.0 {
                return Ok(current);
            }
            let mut ld = dist.kernel.log_det_of(&current);
            if ld.is_finite() {
                return Ok(current);
            }
            // improving random replacements until the determinant is positive
            for _ in 0..n * k {
                let slot = rng.random_range(0..k);
                let cand = rng.random_range(0..n);
                if current.contains(&cand) {
                    continue;
                }
                let old = current[slot];
                current[slot] = cand;
                let ld_new = dist.kernel.log_det_of(&current);
                if ld_new > ld || ld_new.is_finite() {
                    ld = ld_new;
                    if ld.is_finite() {
                        return Ok(current);
                    }
                } else {
                    current[slot] = old;
                }
            }
            Err(Error::Initialization(format!(
                "no feasible start found in {} attempts",
                n * k
            )))
        }
    }
}

/// Draw one subset by running the exchange walk for `cfg.n_steps` moves.
pub fn sample_mcmc<S: Scalar>(dist: &DppDistribution<S>, cfg: &McmcConfig) -> Result<Subset> {
    if cfg.n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
    }
    let n = dist.n();
    let k = dist.k;
    if k == 0 {
        return Ok(Subset::empty());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = initial_subset(dist, cfg.init, &mut rng)?;
    let chain_seed = rng.random::<u64>();
    let mut chain = ExchangeChain::new(dist.kernel.entries(), k, dist.alpha, start, chain_seed)?;
    chain.run(cfg.n_steps);
    Subset::new(chain.state().to_vec(), n)
}
