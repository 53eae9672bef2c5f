//! Batch-selection policies: uniform, passive DPP (sampled and mode),
//! epsilon-greedy, and active DPP (sampled and mode).

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{build_kernel, condition_kernel, gaussian_similarity, KernelMatrix, ScoreVector};
use crate::mode::greedy_mode;
use crate::sampler::{sample_mcmc, DppDistribution, McmcConfig, Subset};
use crate::scalar::Scalar;

/// The six selection policies of the batch active-learning loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Uniform,
    PassiveDpp,
    PassiveDppMode,
    EpsGreedy,
    ActiveDpp,
    ActiveDppMode,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Uniform,
        StrategyKind::PassiveDpp,
        StrategyKind::PassiveDppMode,
        StrategyKind::EpsGreedy,
        StrategyKind::ActiveDpp,
        StrategyKind::ActiveDppMode,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Uniform => "uniform",
            StrategyKind::PassiveDpp => "passive-dpp",
            StrategyKind::PassiveDppMode => "passive-dpp-mode",
            StrategyKind::EpsGreedy => "eps-greedy",
            StrategyKind::ActiveDpp => "active-dpp",
            StrategyKind::ActiveDppMode => "active-dpp-mode",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }

    /// Whether the policy consumes uncertainty scores.
    pub fn uses_uncertainty(&self) -> bool {
        matches!(
            self,
            StrategyKind::EpsGreedy | StrategyKind::ActiveDpp | StrategyKind::ActiveDppMode
        )
    }
}

/// Strategy hyperparameters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub alpha: f64,
    pub gamma: f64,
    /// `None` selects `default_sigma(k, d)`.
    pub sigma: Option<f64>,
    pub epsilon: f64,
    /// `None` selects the `50 N k` MCMC default.
    pub mcmc_steps: Option<usize>,
    /// Condition each draw on everything selected in earlier batches.
    pub condition_across_batches: bool,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            alpha: 1.0,
            gamma: 0.0,
            sigma: None,
            epsilon: 0.0,
            mcmc_steps: None,
            condition_across_batches: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter("alpha must be >= 0".into()));
        }
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter("gamma must be >= 0".into()));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidParameter("sigma must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Exploit/explore sizes: exploit `= ceil((1 - eps) k)`, explore the rest.
pub fn eps_split(k: usize, epsilon: f64) -> (usize, usize) {
    // tolerance so e.g. (1 - 1/3) * 15 = 10.000000000000002 still ceils to 10
    let exploit = (((1.0 - epsilon) * k as f64) - 1e-9).ceil().max(0.0) as usize;
    let exploit = exploit.min(k);
    (exploit, k - exploit)
}

/// The selection view of the pool: features of the ground set plus everything
/// already chosen in earlier batches.
#[derive(Debug, Clone)]
pub struct PoolState<'a, S: Scalar> {
    features: ArrayView2<'a, S>,
    selected: Vec<usize>,
    is_selected: Vec<bool>,
}

impl<'a, S: Scalar> PoolState<'a, S> {
    pub fn new(features: ArrayView2<'a, S>, selected: &[usize]) -> Result<Self> {
        let n = features.nrows();
        let mut is_selected = vec![false; n];
        for &i in selected {
            if i >= n {
                return Err(Error::InvalidInput(format!(
                    "selected index {i} out of range"
                )));
            }
            if is_selected[i] {
                return Err(Error::InvalidInput(format!(
                    "selected index {i} repeated"
                )));
            }
            is_selected[i] = true;
        }
        let mut selected = selected.to_vec();
        selected.sort_unstable();
        Ok(Self {
            features,
            selected,
            is_selected,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'a, S> {
        self.features
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn unselected(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.is_selected[i]).collect()
    }

    fn require_budget(&self, k: usize) -> Result<Vec<usize>> {
        let pool = self.unselected();
        if pool.len() < k {
            return Err(Error::Budget(format!(
                "batch of {k} requested but only {} unselected items remain",
                pool.len()
            )));
        }
        Ok(pool)
    }
}

/// Uniform batch: `k` distinct unselected indices without replacement.
pub fn select_uniform<S: Scalar>(state: &PoolState<S>, k: usize, seed: u64) -> Result<Subset> {
    let mut pool = state.require_budget(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // partial Fisher-Yates for the first k slots
    for t in 0..k {
        let j = rng.random_range(t..pool.len());
        pool.swap(t, j);
    }
    Subset::new(pool[..k].to_vec(), state.n())
}

/// Effective sigma for a pool: configured value or the nearest-neighbor
/// heuristic `default_sigma(k, d)`.
fn effective_sigma<S: Scalar>(cfg: &StrategyConfig, k: usize, state: &PoolState<S>) -> Result<f64> {
    match cfg.sigma {
        Some(s) => Ok(s),
        None => crate::kernel::default_sigma(k.max(2), state.d().max(1)),
    }
}

/// Build the DPP kernel over `pool ∪ conditioned`, condition on the
/// `conditioned` block, and return the kernel over the pool together with the
/// local-to-global index map. Singular conditioning logs a warning and falls
/// back to the unconditioned pool kernel.
fn conditioned_pool_kernel<S: Scalar>(
    state: &PoolState<S>,
    pool: &[usize],
    conditioned: &[usize],
    scores: &ScoreVector<S>,
    sigma: f64,
    alpha: f64,
    gamma: f64,
) -> Result<(KernelMatrix<S>, Vec<usize>)> {
    let d = state.d();
    let mut order: Vec<usize> = pool.to_vec();
    order.extend_from_slice(conditioned);
    let sub = Array2::from_shape_fn((order.len(), d), |(r, c)| {
        state.features()[[order[r], c]]
    });
    let similarity = gaussian_similarity(&sub.view(), S::of(sigma))?;
    // scores of conditioned items cancel from the conditional determinant
    // ratios; use 1 to keep the conditioning block well scaled
    let mut q: Vec<S> = scores.values().to_vec();
    q.extend(std::iter::repeat_n(S::one(), conditioned.len()));
    let kernel = build_kernel(&similarity, &ScoreVector::new(q)?, alpha, gamma)?;

    if conditioned.is_empty() {
        return Ok((kernel, pool.to_vec()));
    }
    let block = Subset::new((pool.len()..order.len()).collect(), order.len())?;
    match condition_kernel(&kernel, &block) {
        Ok((conditioned_kernel, map)) => {
            let global = map.into_iter().map(|i| order[i]).collect();
            Ok((conditioned_kernel, global))
        }
        Err(Error::SingularConditioning(est)) => {
            log::warn!(
                "conditioning singular (condition estimate {est:.3e}); \
                 falling back to the unconditioned kernel"
            );
            let sub = Array2::from_shape_fn((pool.len(), d), |(r, c)| {
                state.features()[[pool[r], c]]
            });
            let similarity = gaussian_similarity(&sub.view(), S::of(sigma))?;
            let q = ScoreVector::new(scores.values().to_vec())?;
            Ok((build_kernel(&similarity, &q, alpha, gamma)?, pool.to_vec()))
        }
        Err(e) => Err(e),
    }
}

/// Draw or extract a size-`k` batch from a kernel, as an MCMC sample
/// (`mode_flag` false) or the greedy mode (`mode_flag` true). Returns global
/// indices.
fn kernel_batch<S: Scalar>(
    kernel: &KernelMatrix<S>,
    map: &[usize],
    k: usize,
    cfg: &StrategyConfig,
    mode_flag: bool,
    seed: u64,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let local = if mode_flag {
        greedy_mode(kernel, k)?.subset
    } else {
        let steps = cfg
            .mcmc_steps
            .unwrap_or_else(|| McmcConfig::default_steps(kernel.n(), k));
        let dist = DppDistribution::with_alpha(kernel.clone(), k, cfg.alpha)?;
        sample_mcmc(&dist, &McmcConfig::new(steps, seed)?)?
    };
    Ok(local.indices().iter().map(|&i| map[i]).collect())
}

/// Passive DPP batch: unit scores, optional across-batch conditioning,
/// MCMC sample or greedy mode per `mode_flag`.
pub fn select_passive_dpp<S: Scalar>(
    state: &PoolState<S>,
    k: usize,
    cfg: &StrategyConfig,
    mode_flag: bool,
    seed: u64,
) -> Result<Subset> {
    cfg.validate()?;
    let pool = state.require_budget(k)?;
    let sigma = effective_sigma(cfg, k, state)?;
    let conditioned: &[usize] = if cfg.condition_across_batches {
        state.selected()
    } else {
        &[]
    };
    let (kernel, map) = conditioned_pool_kernel(
        state,
        &pool,
        conditioned,
        &ScoreVector::uniform(pool.len()),
        sigma,
        cfg.alpha,
        0.0,
    )?;
    Subset::new(kernel_batch(&kernel, &map, k, cfg, mode_flag, seed)?, state.n())
}

/// Epsilon-greedy batch: the `ceil((1-eps) k)` highest-uncertainty items
/// (ties to the lowest index) plus a uniform draw from the remainder.
pub fn select_eps_greedy<S: Scalar>(
    state: &PoolState<S>,
    k: usize,
    epsilon: f64,
    uncertainty: &[S],
    seed: u64,
) -> Result<Subset> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    if uncertainty.len() != state.n() {
        return Err(Error::InvalidInput(
            "uncertainty length does not match pool".into(),
        ));
    }
    let pool = state.require_budget(k)?;
    let (exploit_k, explore_k) = eps_split(k, epsilon);

    let mut ranked = pool.clone();
    // stable by construction: sort by descending q with index as tiebreaker
    ranked.sort_by(|&a, &b| {
        uncertainty[b]
            .partial_cmp(&uncertainty[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut batch: Vec<usize> = ranked[..exploit_k].to_vec();

    let mut rest: Vec<usize> = ranked[exploit_k..].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..explore_k {
        let j = rng.random_range(t..rest.len());
        rest.swap(t, j);
        batch.push(rest[t]);
    }
    Subset::new(batch, state.n())
}

/// Active DPP batch: an uncertainty DPP (scores `q`, exponent `gamma`) for
/// the exploit share and an exploration DPP (unit scores) for the rest, the
/// exploration draw additionally conditioned on the exploit picks.
pub fn select_active_dpp<S: Scalar>(
    state: &PoolState<S>,
    k: usize,
    cfg: &StrategyConfig,
    uncertainty: &[S],
    mode_flag: bool,
    seed: u64,
) -> Result<Subset> {
    cfg.validate()?;
    if uncertainty.len() != state.n() {
        return Err(Error::InvalidInput(
            "uncertainty length does not match pool".into(),
        ));
    }
    let pool = state.require_budget(k)?;
    let sigma = effective_sigma(cfg, k, state)?;
    let (exploit_k, explore_k) = eps_split(k, cfg.epsilon);

    let mut q: Vec<S> = pool.iter().map(|&i| uncertainty[i]).collect();
    if q.iter().all(|&x| !(x > S::zero())) {
        log::warn!("all uncertainty scores are zero; using unit scores for this batch");
        q = vec![S::one(); pool.len()];
    }

    let base_conditioned: Vec<usize> = if cfg.condition_across_batches {
        state.selected().to_vec()
    } else {
        Vec::new()
    };

    let exploit: Vec<usize> = if exploit_k > 0 {
        let (kernel, map) = conditioned_pool_kernel(
            state,
            &pool,
            &base_conditioned,
            &ScoreVector::new(q.clone())?,
            sigma,
            cfg.alpha,
            cfg.gamma,
        )?;
        kernel_batch(&kernel, &map, exploit_k, cfg, mode_flag, seed)?
    } else {
        Vec::new()
    };

    let explore: Vec<usize> = if explore_k > 0 {
        // the exploration DPP treats the fresh exploit picks as selected so
        // the union of the two sub-batches stays jointly diverse
        let mut conditioned = base_conditioned.clone();
        conditioned.extend_from_slice(&exploit);
        let explore_pool: Vec<usize> =
            pool.iter().copied().filter(|i| !exploit.contains(i)).collect();
        let (kernel, map) = conditioned_pool_kernel(
            state,
            &explore_pool,
            &conditioned,
            &ScoreVector::uniform(explore_pool.len()),
            sigma,
            cfg.alpha,
            0.0,
        )?;
        kernel_batch(&kernel, &map, explore_k, cfg, mode_flag, seed ^ 0x9e37_79b9)?
    } else {
        Vec::new()
    };

    let mut batch = exploit;
    batch.extend(explore);
    Subset::new(batch, state.n())
}

/// Dispatch a batch selection for any [`StrategyKind`]. `uncertainty` is
/// required for the uncertainty-driven strategies.
pub fn select_batch<S: Scalar>(
    state: &PoolState<S>,
    k: usize,
    cfg: &StrategyConfig,
    uncertainty: Option<&[S]>,
    seed: u64,
) -> Result<Subset> {
    let need_q = || {
        uncertainty.ok_or_else(|| {
            Error::InvalidInput(format!(
                "strategy {} requires uncertainty scores",
                cfg.kind.name()
            ))
        })
    };
    match cfg.kind {
        StrategyKind::Uniform => select_uniform(state, k, seed),
        StrategyKind::PassiveDpp => select_passive_dpp(state, k, cfg, false, seed),
        StrategyKind::PassiveDppMode => select_passive_dpp(state, k, cfg, true, seed),
        StrategyKind::EpsGreedy => select_eps_greedy(state, k, cfg.epsilon, need_q()?, seed),
        StrategyKind::ActiveDpp => select_active_dpp(state, k, cfg, need_q()?, false, seed),
        StrategyKind::ActiveDppMode => select_active_dpp(state, k, cfg, need_q()?, true, seed),
    }
}
