//! Acquisition functions over GP posteriors.
//!
//! Entropy-search quantities use a Monte-Carlo belief over which of `M`
//! candidate parameters is optimal at a representer context. Fantasized
//! observations are folded in by pathwise conditioning: a joint draw
//! `(f, y_hat)` from the current posterior becomes a draw given `y` via
//! `f + cov(f, y) / var(y) * (y - y_hat)`. The same base draws are reused for
//! every fantasy branch and every query.
//!
//! All inputs here are in the model's own coordinates; callers holding a
//! [`Surrogate`](crate::gp::Surrogate) map to its unit cube first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Cholesky, GpModel};
use crate::optim::SearchSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcqConfig {
    pub kappa: f64,
    /// Candidate parameters per representer context (M).
    pub n_candidates: usize,
    /// Posterior function draws for the p_min estimate (K).
    pub n_function_draws: usize,
    /// Fantasy outcomes per hypothetical query (L).
    pub n_fantasies: usize,
    /// Representer contexts for the active learners (C).
    pub n_representers: usize,
    pub rng_seed: u64,
}

impl Default for AcqConfig {
    fn default() -> Self {
        AcqConfig {
            kappa: 2.0,
            n_candidates: 50,
            n_function_draws: 500,
            n_fantasies: 10,
            n_representers: 200,
            rng_seed: 0,
        }
    }
}

impl AcqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::config(format!("kappa must be finite and non-negative, got {}", self.kappa)));
        }
        if self.n_candidates < 2 {
            return Err(Error::config("need at least 2 candidates per representer"));
        }
        if self.n_function_draws < 100 {
            return Err(Error::config("need at least 100 function draws"));
        }
        if self.n_fantasies < 1 {
            return Err(Error::config("need at least 1 fantasy"));
        }
        if self.n_representers < 1 {
            return Err(Error::config("need at least 1 representer"));
        }
        Ok(())
    }
}

/// Representer contexts and their candidate parameter sets.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresenterSet {
    pub contexts: Vec<Vec<f64>>,
    /// `candidates[c]` holds M parameter vectors for `contexts[c]`.
    pub candidates: Vec<Vec<Vec<f64>>>,
}

impl RepresenterSet {
    /// `count` uniform contexts, each with an `m`-point Latin hypercube over `params`.
    pub fn sample<R: Rng + ?Sized>(
        contexts: &SearchSpace,
        params: &SearchSpace,
        count: usize,
        m: usize,
        rng: &mut R,
    ) -> Self {
        let mut set = RepresenterSet { contexts: Vec::with_capacity(count), candidates: Vec::with_capacity(count) };
        for _ in 0..count {
            let c = if contexts.dim() == 0 { Vec::new() } else { contexts.sample_uniform(rng) };
            set.contexts.push(c);
            set.candidates.push(params.latin_hypercube(m, rng));
        }
        set
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn validate(&self, contexts: &SearchSpace, params: &SearchSpace) -> Result<()> {
        if self.contexts.len() != self.candidates.len() {
            return Err(Error::contract("representer contexts and candidate sets differ in count"));
        }
        for (c, cands) in self.contexts.iter().zip(&self.candidates) {
            if !(contexts.dim() == 0 && c.is_empty()) && !contexts.contains(c) {
                return Err(Error::contract("representer context outside its box"));
            }
            if cands.iter().any(|t| !params.contains(t)) {
                return Err(Error::contract("candidate parameter outside its box"));
            }
        }
        Ok(())
    }
}

/// Upper confidence bound `mean + kappa * std`.
pub fn gp_ucb(mean: f64, std: f64, kappa: f64) -> f64 {
    debug_assert!(std >= 0.0);
    mean + kappa * std
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

fn joined(context: &[f64], theta: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(context.len() + theta.len());
    x.extend_from_slice(context);
    x.extend_from_slice(theta);
    x
}

/// Probability that each candidate is the maximizer at `context`, estimated
/// from `k_draws` joint posterior samples. Ties within a draw are split
/// uniformly at random.
pub fn pmin_estimate<R: Rng + ?Sized>(
    model: &GpModel,
    context: &[f64],
    candidates: &[Vec<f64>],
    k_draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if candidates.len() < 2 {
        return Err(Error::contract("p_min needs at least two candidates"));
    }
    let points: Vec<Vec<f64>> = candidates.iter().map(|t| joined(context, t)).collect();
    let draws = model.sample_posterior(&points, k_draws, rng)?;
    let mut counts = vec![0usize; candidates.len()];
    let mut ties = Vec::with_capacity(candidates.len());
    for f in &draws {
        let best = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ties.clear();
        ties.extend(f.iter().enumerate().filter(|(_, v)| **v == best).map(|(j, _)| j));
        let pick = if ties.len() == 1 { ties[0] } else { ties[rng.gen_range(0..ties.len())] };
        counts[pick] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / k_draws as f64).collect())
}

/// Seed for the substream of one representer, keyed by its content so that
/// identical representers see identical random numbers.
pub fn representer_stream(seed: u64, context: &[f64], candidates: &[Vec<f64>]) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    let mut mix = |v: f64| {
        h ^= v.to_bits();
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        h ^= h >> 29;
    };
    context.iter().for_each(|v| mix(*v));
    candidates.iter().flatten().for_each(|v| mix(*v));
    ChaCha8Rng::seed_from_u64(h)
}

/// Monte-Carlo belief about the optimal candidate at one representer
/// context, ready to score hypothetical queries.
#[derive(Debug, Clone)]
pub struct RepresenterBelief {
    m: usize,
    k: usize,
    /// Candidate input points, `M` rows of model dimension.
    points: Vec<Vec<f64>>,
    /// Whitened cross-covariances `L^{-1} k(X, p_j)`, one per candidate.
    whitened: Vec<Vec<f64>>,
    /// Factor of the candidates' posterior covariance.
    chol: Cholesky,
    /// Base draws `K x M`, row-major, and the standard normals behind them.
    draws: Vec<f64>,
    normals: Vec<f64>,
    /// Per-draw noise for the hypothetical observation.
    xi: Vec<f64>,
    /// Standardized fantasy outcomes.
    fantasy: Vec<f64>,
    base_entropy: f64,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..row.len() {
        if row[j] > row[best] {
            best = j;
        }
    }
    best
}

fn entropy_of_counts(counts: &[u32], total: usize) -> f64 {
    let t = total as f64;
    -counts.iter().filter(|&&c| c > 0).map(|&c| {
        let p = c as f64 / t;
        p * p.ln()
    }).sum::<f64>()
}

impl RepresenterBelief {
    pub fn new<R: Rng + ?Sized>(
        model: &GpModel,
        context: &[f64],
        candidates: &[Vec<f64>],
        cfg: &AcqConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if candidates.len() < 2 {
            return Err(Error::contract("belief needs at least two candidates"));
        }
        let points: Vec<Vec<f64>> = candidates.iter().map(|t| joined(context, t)).collect();
        let joint = model.joint_posterior(&points)?;
        let whitened: Vec<Vec<f64>> = points.iter().map(|p| model.whitened(p)).collect();
        let (m, k) = (points.len(), cfg.n_function_draws);
        let mut draws = vec![0.0; k * m];
        let mut normals = vec![0.0; k * m];
        let mut counts = vec![0u32; m];
        for d in 0..k {
            let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let f = joint.chol.mul_lower(&z);
            for j in 0..m {
                draws[d * m + j] = f[j] + joint.mean[j];
            }
            normals[d * m..(d + 1) * m].copy_from_slice(&z);
            counts[argmax(&draws[d * m..(d + 1) * m])] += 1;
        }
        let xi = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let fantasy = (0..cfg.n_fantasies).map(|_| rng.sample(StandardNormal)).collect();
        let base_entropy = entropy_of_counts(&counts, k);
        Ok(RepresenterBelief { m, k, points, whitened, chol: joint.chol, draws, normals, xi, fantasy, base_entropy })
    }

    /// Entropy of the current p_min estimate.
    pub fn entropy(&self) -> f64 {
        self.base_entropy
    }

    /// Expected entropy reduction from observing `query`. `query_whitened`
    /// is `model.whitened(query)`, shared across representers.
    pub fn gain(&self, model: &GpModel, query: &[f64], query_whitened: &[f64], scratch: &mut Vec<u32>) -> f64 {
        let h = model.hyperparams();
        let (m, k) = (self.m, self.k);
        // cov(f(p_j), f(query)) under the current posterior.
        let s: Vec<f64> = self
            .points
            .iter()
            .zip(&self.whitened)
            .map(|(p, w)| h.eval(p, query) - w.iter().zip(query_whitened).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        if s.iter().all(|v| v.abs() < 1e-300) {
            return 0.0;
        }
        let q_var = (h.signal_variance - query_whitened.iter().map(|v| v * v).sum::<f64>()).max(0.0);
        let obs_var = q_var + h.noise_variance;
        // Joint draw of the noisy observation given the base draw:
        // y_hat - mean_q = w . z + r xi, with w = L_c^{-1} s.
        let w = self.chol.solve_lower(&s);
        let r2 = (obs_var - w.iter().map(|v| v * v).sum::<f64>()).max(0.0);
        let r = r2.sqrt();
        let gain_dir: Vec<f64> = s.iter().map(|v| v / obs_var).collect();
        let offsets: Vec<f64> = (0..k)
            .map(|d| {
                let z = &self.normals[d * m..(d + 1) * m];
                w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + r * self.xi[d]
            })
            .collect();
        let sd = obs_var.sqrt();
        let mut expected = 0.0;
        scratch.clear();
        scratch.resize(m, 0);
        for u in &self.fantasy {
            scratch.iter_mut().for_each(|c| *c = 0);
            // y - y_hat with y = mean_q + sd * u; the mean_q terms cancel.
            for d in 0..k {
                let delta = sd * u - offsets[d];
                let row = &self.draws[d * m..(d + 1) * m];
                let mut best = 0;
                let mut best_v = row[0] + gain_dir[0] * delta;
                for j in 1..m {
                    let v = row[j] + gain_dir[j] * delta;
                    if v > best_v {
                        best_v = v;
                        best = j;
                    }
                }
                scratch[best] += 1;
            }
            expected += entropy_of_counts(scratch, k);
        }
        self.base_entropy - expected / self.fantasy.len() as f64
    }
}

/// Expected information gain at `rep_context` from a hypothetical
/// observation at `query` (a full model input).
pub fn info_gain<R: Rng + ?Sized>(
    model: &GpModel,
    query: &[f64],
    rep_context: &[f64],
    candidates: &[Vec<f64>],
    cfg: &AcqConfig,
    rng: &mut R,
) -> Result<f64> {
    if query.len() != model.dim() {
        return Err(Error::contract("query dimension does not match the model"));
    }
    let belief = RepresenterBelief::new(model, rep_context, candidates, cfg, rng)?;
    Ok(belief.gain(model, query, &model.whitened(query), &mut Vec::new()))
}

/// Precomputed ACES acquisition: one joint model, one belief per representer.
#[derive(Debug, Clone)]
pub struct AcesAcquisition<'a> {
    model: &'a GpModel,
    beliefs: Vec<RepresenterBelief>,
}

impl<'a> AcesAcquisition<'a> {
    pub fn new(model: &'a GpModel, reps: &RepresenterSet, cfg: &AcqConfig) -> Result<Self> {
        let beliefs = reps
            .contexts
            .iter()
            .zip(&reps.candidates)
            .map(|(c, cands)| {
                let mut rng = representer_stream(cfg.rng_seed, c, cands);
                RepresenterBelief::new(model, c, cands, cfg, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AcesAcquisition { model, beliefs })
    }

    /// Sum of information gains over representers for a query `(s, theta)` joined.
    pub fn evaluate(&self, query: &[f64]) -> f64 {
        let qw = self.model.whitened(query);
        let mut scratch = Vec::new();
        self.beliefs.iter().map(|b| b.gain(self.model, query, &qw, &mut scratch)).sum()
    }
}

/// Sum of representer information gains under a single joint model.
pub fn aces_objective(model: &GpModel, query: &[f64], reps: &RepresenterSet, cfg: &AcqConfig) -> Result<f64> {
    if query.len() != model.dim() {
        return Err(Error::contract("query dimension does not match the model"));
    }
    Ok(AcesAcquisition::new(model, reps, cfg)?.evaluate(query))
}

/// Precomputed factored acquisition: one target-specific model per representer.
#[derive(Debug, Clone)]
pub struct FacesAcquisition<'a> {
    models: &'a [GpModel],
    beliefs: Vec<RepresenterBelief>,
}

impl<'a> FacesAcquisition<'a> {
    /// `env_contexts[c]` is the environment part of representer `c`; each
    /// model's inputs are `(s^e, theta)`.
    pub fn new(models: &'a [GpModel], env_contexts: &[Vec<f64>], candidates: &[Vec<Vec<f64>>], cfg: &AcqConfig) -> Result<Self> {
        if models.len() != env_contexts.len() || models.len() != candidates.len() {
            return Err(Error::contract(format!(
                "{} models for {} representers",
                models.len(),
                env_contexts.len()
            )));
        }
        let beliefs = models
            .iter()
            .zip(env_contexts.iter().zip(candidates))
            .map(|(model, (c, cands))| {
                let mut rng = representer_stream(cfg.rng_seed, c, cands);
                RepresenterBelief::new(model, c, cands, cfg, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FacesAcquisition { models, beliefs })
    }

    /// Sum of gains, each under its own representer model, for a query `(s^e, theta)`.
    pub fn evaluate(&self, query: &[f64]) -> f64 {
        let mut scratch = Vec::new();
        let mut last: *const GpModel = std::ptr::null();
        let mut qw = Vec::new();
        let mut total = 0.0;
        for (model, belief) in self.models.iter().zip(&self.beliefs) {
            // Consecutive representers often share a model; reuse its whitened query.
            if !std::ptr::eq(last, model) {
                qw = model.whitened(query);
                last = model;
            }
            total += belief.gain(model, query, &qw, &mut scratch);
        }
        total
    }
}

/// Sum over representers of the gain under each representer's own model.
pub fn faces_objective(models: &[GpModel], query: &[f64], reps: &RepresenterSet, cfg: &AcqConfig) -> Result<f64> {
    if models.len() != reps.len() {
        return Err(Error::contract(format!("{} models for {} representers", models.len(), reps.len())));
    }
    if models.iter().any(|m| m.dim() != query.len()) {
        return Err(Error::contract("query dimension does not match the models"));
    }
    Ok(FacesAcquisition::new(models, &reps.contexts, &reps.candidates, cfg)?.evaluate(query))
}
