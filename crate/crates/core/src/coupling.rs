//! Coupled chains `(X_k, X̄_k)`: one quenched kernel step against one Gaussian
//! kernel step of length `L^2`, glued by an empirical optimal matching.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::environ::Environment;
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::schedule::ScaleTable;
use crate::stats::MeanEstimate;
use crate::walk::{self, Dynamics};

/// Largest batch matched by exact assignment under [`MatchRule::Auto`].
pub const EXACT_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MatchRule {
    Auto,
    Exact,
    Greedy,
}

#[derive(Debug, Clone, Copy)]
pub enum KernelKind<'a> {
    Quenched(&'a Environment),
    Gaussian { alpha: f64 },
}

/// One-step transition kernel over time `step_time`.
#[derive(Debug, Clone, Copy)]
pub struct KernelSampler<'a> {
    pub kind: KernelKind<'a>,
    pub step_time: f64,
    pub substeps: usize,
    pub d: usize,
}

impl<'a> KernelSampler<'a> {
    pub fn quenched(env: &'a Environment, step_time: f64) -> Self {
        Self { kind: KernelKind::Quenched(env), step_time, substeps: 256, d: env.dim() }
    }

    pub fn gaussian(alpha: f64, d: usize, step_time: f64) -> Self {
        Self { kind: KernelKind::Gaussian { alpha }, step_time, substeps: 256, d }
    }

    pub fn with_substeps(self, substeps: usize) -> Self {
        Self { substeps, ..self }
    }

    fn dynamics(&self) -> Dynamics<'a> {
        match self.kind {
            KernelKind::Quenched(env) => Dynamics::Quenched(env),
            KernelKind::Gaussian { alpha } => Dynamics::Wiener { alpha, d: self.d },
        }
    }

    /// `count` endpoints from `x`. Endpoint `j` uses stream `(seed, j)`, so two
    /// samplers drawn with one seed share their driving noise.
    pub fn draw(&self, x: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..count as u64)
            .map(|j| {
                let mut r = rng::path_rng(seed, tag::COUPLING, j);
                walk::kernel_step(self.dynamics(), x, self.step_time, self.substeps, &mut r)
            })
            .collect()
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// `d(x, y) = (|x - y| / scale)^beta`.
pub fn transport_cost(a: &[f64], b: &[f64], scale: f64, beta: f64) -> f64 {
    (dist(a, b) / scale).powf(beta)
}

/// A perfect matching `a[i] <-> b[perm[i]]` of two equal-size clouds.
pub fn match_clouds(a: &[Vec<f64>], b: &[Vec<f64>], scale: f64, beta: f64, rule: MatchRule) -> Result<Vec<usize>> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::InvalidParams(format!("cannot match {} points with {}", n, b.len())));
    }
    let cost: Vec<f64> = a.iter().flat_map(|p| b.iter().map(move |q| transport_cost(p, q, scale, beta))).collect();
    let exact = match rule {
        MatchRule::Auto => n <= EXACT_LIMIT,
        MatchRule::Exact => true,
        MatchRule::Greedy => false,
    };
    if exact {
        let (rows, cols) = lsap::solve(n, n, &cost, false)
            .map_err(|e| Error::SolverFailure(format!("assignment failed: {e}")))?;
        let mut perm = vec![0; n];
        for (r, c) in rows.into_iter().zip(cols) {
            perm[r] = c;
        }
        Ok(perm)
    } else {
        let mut order: Vec<usize> = (0..n * n).collect();
        order.sort_by(|&i, &j| cost[i].total_cmp(&cost[j]));
        let mut perm = vec![usize::MAX; n];
        let mut taken = vec![false; n];
        let mut left = n;
        for k in order {
            let (i, j) = (k / n, k % n);
            if perm[i] == usize::MAX && !taken[j] {
                perm[i] = j;
                taken[j] = true;
                left -= 1;
                if left == 0 {
                    break;
                }
            }
        }
        Ok(perm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledStep {
    pub x: Vec<f64>,
    pub xbar: Vec<f64>,
    /// Cost of the selected pair.
    pub cost: f64,
    /// Mean cost over the whole matching.
    pub matching_cost: f64,
}

/// Draws `batch` endpoints from each kernel, matches them and returns one
/// matched pair chosen uniformly.
#[allow(clippy::too_many_arguments)]
pub fn couple_step(
    q: &KernelSampler<'_>,
    g: &KernelSampler<'_>,
    x: &[f64],
    xbar: &[f64],
    batch: usize,
    scale: f64,
    beta: f64,
    seed: u64,
) -> Result<CoupledStep> {
    if batch < 2 {
        return Err(Error::InvalidParams(format!("batch = {batch} must be at least 2")));
    }
    let a = q.draw(x, batch, seed);
    let b = g.draw(xbar, batch, seed);
    let perm = match_clouds(&a, &b, scale, beta, MatchRule::Auto)?;
    let costs: Vec<f64> = perm.iter().enumerate().map(|(i, &j)| transport_cost(&a[i], &b[j], scale, beta)).collect();
    let i = rng::path_rng(seed, tag::COUPLING, u64::MAX).random_range(0..batch);
    Ok(CoupledStep {
        x: a[i].clone(),
        xbar: b[perm[i]].clone(),
        cost: costs[i],
        matching_cost: costs.iter().sum::<f64>() / batch as f64,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledChain {
    pub start: Vec<f64>,
    /// `(X_k, X̄_k)` for `k = 0..=K`.
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    /// Selected pair cost after each step.
    pub costs: Vec<f64>,
    pub scale: f64,
    pub beta: f64,
}

impl CoupledChain {
    pub fn steps(&self) -> usize {
        self.pairs.len() - 1
    }

    pub fn distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|(a, b)| dist(a, b))
    }

    pub fn max_distance(&self) -> f64 {
        self.distances().fold(0.0, f64::max)
    }

    /// First step with `|X_k - X̄_k| >= gamma`, ignoring the shared start.
    pub fn failure_step(&self, gamma: f64) -> Option<usize> {
        self.distances().enumerate().skip(1).find(|&(_, r)| r >= gamma).map(|(k, _)| k)
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }
}

/// Iterates [`couple_step`] `k` times from `(x, x)`.
#[allow(clippy::too_many_arguments)]
pub fn run_chain(
    q: &KernelSampler<'_>,
    g: &KernelSampler<'_>,
    x: &[f64],
    k: usize,
    batch: usize,
    scale: f64,
    beta: f64,
    seed: u64,
) -> Result<CoupledChain> {
    let mut pairs = vec![(x.to_vec(), x.to_vec())];
    let mut costs = Vec::with_capacity(k);
    for step in 0..k {
        let (cur, curbar) = pairs.last().expect("nonempty");
        let s = couple_step(q, g, cur, curbar, batch, scale, beta, rng::mix(seed, &[step as u64]))?;
        costs.push(s.cost);
        pairs.push((s.x, s.xbar));
    }
    Ok(CoupledChain { start: x.to_vec(), pairs, costs, scale, beta })
}

/// Settings for chains built from a schedule row.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChainSettings {
    pub n: usize,
    pub steps: usize,
    pub batch: usize,
    pub alpha: f64,
    pub substeps: usize,
    pub seed: u64,
}

/// Horizon `2 (L_{n+2} / L_{n-m̄})^2` of the coupling.
pub fn chain_horizon(table: &ScaleTable, n: usize) -> Result<f64> {
    let lag = table.lagged(n).ok_or_else(|| Error::InvalidParams(format!("row {n} has no lagged scale")))?;
    let top = table.row(n + 2).ok_or_else(|| Error::InvalidParams(format!("schedule needs row {}", n + 2)))?;
    Ok(2.0 * (top.l_f64() / table.l(lag)).powi(2))
}

/// Coupled chain at step time `L_{n-m̄}^2` under cost `d_{n-m̄}`.
pub fn run_coupled_chain(env: &Environment, table: &ScaleTable, x: &[f64], s: &ChainSettings) -> Result<CoupledChain> {
    if s.steps as f64 > chain_horizon(table, s.n)? {
        return Err(Error::InvalidParams(format!("K = {} exceeds the coupling horizon", s.steps)));
    }
    let l = table.l(table.lagged(s.n).expect("checked by chain_horizon"));
    let q = KernelSampler::quenched(env, l * l).with_substeps(s.substeps);
    let g = KernelSampler::gaussian(s.alpha, env.dim(), l * l).with_substeps(s.substeps);
    run_chain(&q, &g, x, s.steps, s.batch, l, table.params.beta, s.seed)
}

/// `count` independent chains from `x`, in index order.
pub fn run_coupled_chains(
    env: &Environment,
    table: &ScaleTable,
    x: &[f64],
    count: usize,
    s: &ChainSettings,
) -> Result<Vec<CoupledChain>> {
    walk::run_paths(count, |i| {
        run_coupled_chain(env, table, x, &ChainSettings { seed: rng::mix(s.seed, &[i]), ..*s })
    })
}

/// Fraction of chains whose pair separation ever reaches `gamma`.
pub fn coupling_failure_rate(chains: &[CoupledChain], gamma: f64) -> Result<MeanEstimate> {
    if chains.len() < 30 {
        return Err(Error::TooFewChains { needed: 30, got: chains.len() });
    }
    let hits = chains.iter().filter(|c| c.failure_step(gamma).is_some()).count();
    Ok(MeanEstimate::proportion(hits, chains.len()))
}

/// `C kappa~_{n-m̄} L_{n-m̄}^{16a - delta}` with a caller-supplied constant.
pub fn failure_envelope(table: &ScaleTable, n: usize, constant: f64) -> Option<f64> {
    let row = table.row(table.lagged(n)?)?;
    Some(constant * row.kappa_tilde * row.l_f64().powf(16.0 * table.params.a - table.delta))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChebyshevCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub allowance: f64,
    pub pass: bool,
}

/// `P(max_k |X_k - X̄_k| >= gamma) (gamma/L)^beta <= E sum_k d(X_k, X̄_k)`,
/// both sides estimated from the same chains.
pub fn chebyshev_check(chains: &[CoupledChain], gamma: f64) -> Result<ChebyshevCheck> {
    let rate = coupling_failure_rate(chains, gamma)?;
    let (scale, beta) = (chains[0].scale, chains[0].beta);
    let totals: Vec<f64> = chains.iter().map(CoupledChain::total_cost).collect();
    let cost = MeanEstimate::from_slice(&totals);
    let lhs = rate.mean * (gamma / scale).powf(beta);
    let allowance = 2.0 * cost.stderr;
    Ok(ChebyshevCheck { lhs, rhs: cost.mean, allowance, pass: lhs <= cost.mean + allowance })
}

pub fn write_chains_csv<W: Write>(chains: &[CoupledChain], gamma: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["chain", "k", "max_distance", "total_cost", "failure_step"])?;
    for (i, c) in chains.iter().enumerate() {
        w.write_record([
            i.to_string(),
            c.steps().to_string(),
            format!("{:e}", c.max_distance()),
            format!("{:e}", c.total_cost()),
            c.failure_step(gamma).map(|k| k.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
