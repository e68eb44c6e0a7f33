//! Exit-functional estimators and the experiments built on them: tails,
//! boundary barriers, the homogenization rate study and the audit of the
//! discrete representation.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::analytic::{solve_homogenized, HomogenizedSolution};
use crate::coupling::{couple_step, KernelSampler};
use crate::domain::{Domain, Shape};
use crate::environ::Environment;
use crate::error::{Error, Result};
use crate::registry::NamedFn;
use crate::renorm::{estimate_alpha, AlphaEstimate};
use crate::rng::{self, tag};
use crate::schedule::ScaleTable;
use crate::stats::{LinearFit, MeanEstimate};
use crate::walk::{self, DiscreteRule, Dynamics, SimConfig, StopRules};

/// Horizon share above which an estimate is rejected.
pub const HORIZON_REJECT: f64 = 0.05;
/// Horizon share above which an estimate is flagged.
pub const HORIZON_FLAG: f64 = 0.001;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExitSettings {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub max_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointEstimate {
    pub x: Vec<f64>,
    pub value: f64,
    pub stderr: f64,
    pub horizon_hits: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct UEstimate {
    pub epsilon: f64,
    pub points: Vec<PointEstimate>,
    pub horizon_fraction: f64,
    pub flagged: bool,
}

/// A few query points inside `U`: the center and points at half and most of
/// the way to the boundary.
pub fn default_query(domain: &Domain, d: usize) -> Vec<Vec<f64>> {
    let axis = |i: usize, r: f64| {
        let mut x = vec![0.0; d];
        x[i % d] = r;
        x
    };
    match domain.shape {
        Shape::Ball { radius } => vec![vec![0.0; d], axis(0, 0.5 * radius), axis(1, -0.5 * radius), axis(2, 0.8 * radius)],
        Shape::Annulus { inner, outer } => {
            let mid = 0.5 * (inner + outer);
            vec![axis(0, mid), axis(1, -mid), axis(2, inner + 0.25 * (outer - inner))]
        }
        Shape::Oracle(_) => {
            let b = domain.bounding_radius;
            let mut pts = vec![vec![0.0; d]];
            pts.extend((0..d).map(|i| axis(i, 0.3 * b)));
            pts.retain(|p| domain.contains(p));
            pts
        }
    }
}

/// Per-path exit functional `f(eps X_tau) - eps^2 int_0^tau g(eps X_s) ds`.
fn exit_values(
    env: &Environment,
    domain: &Domain,
    epsilon: f64,
    f: &NamedFn,
    g: &NamedFn,
    x: &[f64],
    s: &ExitSettings,
) -> Result<Vec<(f64, bool)>> {
    let micro = domain.dilate(1.0 / epsilon);
    let start: Vec<f64> = x.iter().map(|v| v / epsilon).collect();
    let gf = g.func();
    let integrand = move |y: &[f64]| {
        let z: Vec<f64> = y.iter().map(|v| v * epsilon).collect();
        gf(&z)
    };
    let use_g = !g.is_zero();
    let cfg = SimConfig::new(s.dt, s.max_time, s.seed);
    walk::run_paths(s.paths, |i| {
        let mut rules = StopRules::exit(&micro);
        if use_g {
            rules = rules.with_integrand(&integrand);
        }
        let p = walk::simulate(Dynamics::Quenched(env), &start, &cfg.with_path(i), &rules, tag::QUENCHED)?;
        let z: Vec<f64> = p.position.iter().map(|v| v * epsilon).collect();
        Ok((f.eval(&z) - epsilon * epsilon * p.integral, p.exit.is_none()))
    })
}

/// Monte Carlo solution `u^eps` of the oscillatory problem at the query points.
pub fn estimate_u_eps(
    env: &Environment,
    domain: &Domain,
    epsilon: f64,
    f: &NamedFn,
    g: &NamedFn,
    query: &[Vec<f64>],
    s: &ExitSettings,
) -> Result<UEstimate> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParams(format!("epsilon = {epsilon} must be positive")));
    }
    let mut points = Vec::with_capacity(query.len());
    let mut hits = 0;
    for (k, x) in query.iter().enumerate() {
        if domain.signed_distance(x) > 0.0 {
            return Err(Error::InvalidParams(format!("query point {x:?} lies outside U")));
        }
        let local = ExitSettings { seed: rng::mix(s.seed, &[k as u64]), ..*s };
        let vals = exit_values(env, domain, epsilon, f, g, x, &local)?;
        let h = vals.iter().filter(|v| v.1).count();
        hits += h;
        let est = MeanEstimate::from_slice(&vals.iter().map(|v| v.0).collect::<Vec<_>>());
        points.push(PointEstimate { x: x.clone(), value: est.mean, stderr: est.stderr, horizon_hits: h });
    }
    let horizon_fraction = hits as f64 / (s.paths * query.len()).max(1) as f64;
    if horizon_fraction > HORIZON_REJECT {
        return Err(Error::HorizonDominated { fraction: horizon_fraction });
    }
    Ok(UEstimate { epsilon, points, horizon_fraction, flagged: horizon_fraction > HORIZON_FLAG })
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub k: usize,
    pub exceedance: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub epsilon: f64,
    pub n: usize,
    /// `L_{n+2}^2`.
    pub unit: f64,
    /// For each `k`, the largest exceedance over the start points.
    pub rows: Vec<TailRow>,
    /// Fit of `log P` against `k` over the positive exceedances.
    pub decay_slope: Option<f64>,
}

impl TailReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "exceedance", "stderr"])?;
        for r in &self.rows {
            w.write_record([r.k.to_string(), format!("{:e}", r.exceedance), format!("{:e}", r.stderr)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `P(tau^eps > k L_{n+2}^2)` for `k = 0..=k_max`, maximized over `starts`.
#[allow(clippy::too_many_arguments)]
pub fn tail_experiment(
    env: &Environment,
    domain: &Domain,
    epsilon: f64,
    table: &ScaleTable,
    k_max: usize,
    starts: &[Vec<f64>],
    paths: usize,
    dt: f64,
    seed: u64,
) -> Result<TailReport> {
    let n = table.locate_scale(epsilon)?;
    let top = table.row(n + 2).ok_or_else(|| Error::InvalidParams(format!("schedule needs row {}", n + 2)))?;
    let unit = top.l_f64().powi(2);
    let micro = domain.dilate(1.0 / epsilon);
    let mut rows: Vec<TailRow> = (0..=k_max).map(|k| TailRow { k, exceedance: 0.0, stderr: 0.0 }).collect();
    for (si, x) in starts.iter().enumerate() {
        let start: Vec<f64> = x.iter().map(|v| v / epsilon).collect();
        let cfg = SimConfig::new(dt, (k_max as f64 * unit).max(dt), rng::mix(seed, &[si as u64]));
        let rules = StopRules::exit(&micro);
        let taus = walk::run_paths(paths, |i| {
            walk::simulate(Dynamics::Quenched(env), &start, &cfg.with_path(i), &rules, tag::TAILS)
                .map(|p| p.exit_time().unwrap_or(f64::INFINITY))
        })?;
        for row in rows.iter_mut() {
            let est = if row.k == 0 {
                MeanEstimate { mean: 1.0, stderr: 0.0, count: paths }
            } else {
                let t = row.k as f64 * unit;
                MeanEstimate::proportion(taus.iter().filter(|&&tau| tau > t).count(), paths)
            };
            if est.mean > row.exceedance || si == 0 {
                row.exceedance = est.mean;
                row.stderr = est.stderr;
            }
        }
    }
    let (ks, logs): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.k > 0 && r.exceedance > 0.0)
        .map(|r| (r.k as f64, r.exceedance.ln()))
        .unzip();
    let decay_slope = LinearFit::fit(&ks, &logs).map(|f| f.slope);
    Ok(TailReport { epsilon, n, unit, rows, decay_slope })
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierPath {
    pub tau: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub tau_tilde: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierReport {
    pub epsilon: f64,
    pub n: usize,
    /// `L_{n-1}^2`.
    pub threshold: f64,
    /// `P(tau - tau1 >= c L_{n-1}^2)` for each multiplier `c`.
    pub quenched: Vec<(f64, MeanEstimate)>,
    /// `P(tau >= c L_{n-1}^2)` for Brownian motion started near the complement.
    pub brownian: Vec<(f64, MeanEstimate)>,
    /// Share of paths with `tau1 <= tau <= tau2` among those with `tau1 <= tau`.
    pub ordered_fraction: f64,
    pub paths: Vec<BarrierPath>,
}

impl BarrierReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path", "tau", "tau1", "tau2", "tau_tilde"])?;
        let cell = |t: Option<f64>| t.map(|v| format!("{v:e}")).unwrap_or_default();
        for (i, p) in self.paths.iter().enumerate() {
            w.write_record([i.to_string(), cell(p.tau), cell(p.tau1), cell(p.tau2), cell(p.tau_tilde)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_exceedance_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["multiple", "quenched", "quenched_stderr", "brownian", "brownian_stderr"])?;
        for ((c, q), (_, b)) in self.quenched.iter().zip(&self.brownian) {
            w.write_record([c, &q.mean, &q.stderr, &b.mean, &b.stderr].map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Multiples of `L_{n-1}^2` at which barrier exceedances are reported.
pub const BARRIER_MULTIPLES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Random point of `U/eps` within `width` of its complement.
fn near_boundary_start(micro: &Domain, width: f64, rng: &mut rng::PathRng, d: usize) -> Vec<f64> {
    let b = micro.bounding_radius;
    loop {
        let x: Vec<f64> = (0..d).map(|_| b * (2.0 * rng.random::<f64>() - 1.0)).collect();
        if micro.contains(&x) && micro.dist_to_complement(&x) <= width {
            return x;
        }
    }
}

/// Time spent between entering the `D~_{n-m̄}` boundary layer and exiting.
#[allow(clippy::too_many_arguments)]
pub fn barrier_experiment(
    env: &Environment,
    domain: &Domain,
    epsilon: f64,
    table: &ScaleTable,
    x: &[f64],
    alpha: f64,
    paths: usize,
    dt: f64,
    seed: u64,
) -> Result<BarrierReport> {
    let n = table.locate_scale(epsilon)?;
    let m = table.lagged(n).filter(|_| n >= 1).ok_or(Error::DegenerateSchedule {
        row: n,
        power: 0.0,
        ell: 0,
    })?;
    let lag = table.row(m).expect("lagged row exists");
    let threshold = table.l(n - 1).powi(2);
    let micro = domain.dilate(1.0 / epsilon);
    let start: Vec<f64> = x.iter().map(|v| v / epsilon).collect();
    let horizon = table.row(n + 2).map(|r| r.l_f64().powi(2)).unwrap_or(1e3 * threshold);
    let cfg = SimConfig::new(dt, horizon, seed);
    let rule = DiscreteRule { spacing: lag.l_f64().powi(2), width: lag.d_tilde, domain: &micro };
    let rules = StopRules::exit(&micro).with_discrete(rule).until_all_fired();
    let records = walk::run_paths(paths, |i| {
        walk::simulate(Dynamics::Quenched(env), &start, &cfg.with_path(i), &rules, tag::BARRIER).map(|p| BarrierPath {
            tau: p.exit_time(),
            tau1: p.tau1.as_ref().map(|h| h.time),
            tau2: p.tau2.as_ref().map(|h| h.time),
            tau_tilde: p.tau_tilde.as_ref().map(|h| h.time),
        })
    })?;
    let gaps: Vec<f64> = records
        .iter()
        .map(|r| match (r.tau, r.tau1) {
            (Some(t), Some(t1)) => t - t1,
            (None, _) => f64::INFINITY,
            (Some(_), None) => f64::NEG_INFINITY,
        })
        .collect();
    let quenched = BARRIER_MULTIPLES
        .iter()
        .map(|&c| (c, MeanEstimate::proportion(gaps.iter().filter(|&&g| g >= c * threshold).count(), paths)))
        .collect();

    let d = start.len();
    let bcfg = SimConfig::new(dt, horizon, rng::mix(seed, &[1]));
    let exit_rules = StopRules::exit(&micro);
    let taus = walk::run_paths(paths, |i| {
        let mut r = rng::path_rng(seed, tag::BARRIER, u64::MAX - i);
        let y = near_boundary_start(&micro, 2.0 * lag.d_tilde, &mut r, d);
        walk::simulate(Dynamics::Wiener { alpha, d }, &y, &bcfg.with_path(i), &exit_rules, tag::BARRIER)
            .map(|p| p.exit_time().unwrap_or(f64::INFINITY))
    })?;
    let brownian = BARRIER_MULTIPLES
        .iter()
        .map(|&c| (c, MeanEstimate::proportion(taus.iter().filter(|&&t| t >= c * threshold).count(), paths)))
        .collect();

    let eligible: Vec<&BarrierPath> =
        records.iter().filter(|r| matches!((r.tau1, r.tau), (Some(a), Some(b)) if a <= b)).collect();
    let ordered = eligible.iter().filter(|r| r.tau2.is_some_and(|t2| r.tau.unwrap() <= t2)).count();
    let ordered_fraction = if eligible.is_empty() { 1.0 } else { ordered as f64 / eligible.len() as f64 };
    Ok(BarrierReport { epsilon, n, threshold, quenched, brownian, ordered_fraction, paths: records })
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub epsilon: f64,
    pub n: usize,
    pub sup_error: f64,
    /// `sup_error / sup |u_bar|` over the query points.
    pub relative_error: f64,
    /// Standard error at the point attaining the sup.
    pub stderr: f64,
    pub horizon_fraction: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub alpha_bar: f64,
    pub alpha: Option<AlphaEstimate>,
    pub rows: Vec<RateRow>,
    pub estimates: Vec<UEstimate>,
    pub slope: Option<f64>,
    pub slope_ci: Option<(f64, f64)>,
}

impl RateReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "n", "sup_error", "relative_error", "stderr", "horizon_fraction"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.epsilon),
                r.n.to_string(),
                format!("{:e}", r.sup_error),
                format!("{:e}", r.relative_error),
                format!("{:e}", r.stderr),
                format!("{:e}", r.horizon_fraction),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_points_csv<W: Write>(&self, reference: &HomogenizedSolution, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "point", "u_eps", "stderr", "u_bar"])?;
        for e in &self.estimates {
            for p in &e.points {
                let pt = p.x.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
                w.write_record([
                    format!("{:e}", e.epsilon),
                    pt,
                    format!("{:e}", p.value),
                    format!("{:e}", p.stderr),
                    format!("{:e}", reference.eval(&p.x)),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Inputs to [`rate_experiment`].
pub struct RateInputs<'a> {
    pub env: &'a Environment,
    pub domain: &'a Domain,
    pub table: &'a ScaleTable,
    pub f: &'a NamedFn,
    pub g: &'a NamedFn,
    pub epsilons: &'a [f64],
    pub query: &'a [Vec<f64>],
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Horizon in units of `L_{n+2}^2`.
    pub horizon: f64,
    pub grid_h: f64,
    /// `alpha_bar` given directly, or measured at `(scale, paths)`.
    pub alpha: std::result::Result<f64, (usize, usize)>,
}

/// Sup-norm error `|u^eps - u_bar|` over the query points for each `eps`,
/// with `u_bar` solved at the measured `alpha_bar`, and a log-log fit.
pub fn rate_experiment(inp: &RateInputs<'_>) -> Result<(RateReport, HomogenizedSolution)> {
    if inp.epsilons.len() < 3 {
        return Err(Error::FitUnstable(format!("{} epsilons given, at least 3 needed", inp.epsilons.len())));
    }
    let d = inp.env.dim();
    let (alpha_bar, alpha) = match inp.alpha {
        Ok(v) => (v, None),
        Err((scale, paths)) => {
            let a = estimate_alpha(inp.env, inp.table, scale, paths, inp.dt, rng::mix(inp.seed, &[tag::ALPHA]))?;
            (a.value, Some(a))
        }
    };
    let reference = solve_homogenized(inp.domain, alpha_bar, inp.g, inp.f, d, inp.grid_h)?;
    let scale = inp.query.iter().map(|x| reference.eval(x).abs()).fold(0.0, f64::max);
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for &eps in inp.epsilons {
        let n = inp.table.locate_scale(eps)?;
        let top = inp.table.row(n + 2).ok_or_else(|| Error::InvalidParams(format!("schedule needs row {}", n + 2)))?;
        let s = ExitSettings {
            paths: inp.paths,
            dt: inp.dt,
            // common random numbers across epsilon
            seed: rng::mix(inp.seed, &[tag::RATE]),
            max_time: inp.horizon * top.l_f64().powi(2),
        };
        let est = estimate_u_eps(inp.env, inp.domain, eps, inp.f, inp.g, inp.query, &s)?;
        let (sup_error, stderr) = est
            .points
            .iter()
            .map(|p| ((p.value - reference.eval(&p.x)).abs(), p.stderr))
            .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
        rows.push(RateRow {
            epsilon: eps,
            n,
            sup_error,
            relative_error: if scale > 0.0 { sup_error / scale } else { sup_error },
            stderr,
            horizon_fraction: est.horizon_fraction,
            flagged: est.flagged,
        });
        estimates.push(est);
    }
    let usable: Vec<&RateRow> = rows.iter().filter(|r| r.sup_error > 0.0).collect();
    let (slope, slope_ci) = if usable.len() >= 3 {
        let x: Vec<f64> = usable.iter().map(|r| r.epsilon.ln()).collect();
        let y: Vec<f64> = usable.iter().map(|r| r.sup_error.ln()).collect();
        match LinearFit::fit(&x, &y) {
            Some(fit) => (Some(fit.slope), Some(fit.slope_interval(0.95))),
            None => (None, None),
        }
    } else {
        (None, None)
    };
    Ok((RateReport { alpha_bar, alpha, rows, estimates, slope, slope_ci }, reference))
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditStage {
    pub name: &'static str,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditDiff {
    pub from: &'static str,
    pub to: &'static str,
    pub diff: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiemannCheck {
    /// Mean of `|eps^2 (Riemann sum - integral)|` on Wiener paths.
    pub mean_gap: f64,
    /// Mean of the per-path envelope `eps^3 |Dg| sum_k L^2 max excursion in step k`.
    pub envelope: f64,
    pub stderr: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub epsilon: f64,
    pub n: usize,
    pub spacing: f64,
    pub stages: Vec<AuditStage>,
    pub diffs: Vec<AuditDiff>,
    pub riemann: RiemannCheck,
}

impl AuditReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["from", "to", "from_value", "to_value", "diff", "stderr"])?;
        for (k, dff) in self.diffs.iter().enumerate() {
            w.write_record([
                dff.from.to_string(),
                dff.to.to_string(),
                format!("{:e}", self.stages[k].value),
                format!("{:e}", self.stages[k + 1].value),
                format!("{:e}", dff.diff),
                format!("{:e}", dff.stderr),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Inputs to [`discrete_representation_audit`].
pub struct AuditInputs<'a> {
    pub env: &'a Environment,
    pub domain: &'a Domain,
    pub table: &'a ScaleTable,
    pub epsilon: f64,
    pub f: &'a NamedFn,
    pub g: &'a NamedFn,
    pub x: &'a [f64],
    pub alpha_bar: f64,
    pub paths: usize,
    pub riemann_paths: usize,
    pub batch: usize,
    pub substeps: usize,
    pub dt: f64,
    pub seed: u64,
    pub grid_h: f64,
}

/// Skeleton exit functional `f(eps Y_K) - eps^2 sum_{k<K} L^2 g(eps Y_k)`
/// with `K` the first grid index outside `U/eps`.
fn skeleton_value(points: &[Vec<f64>], spacing: f64, epsilon: f64, f: &NamedFn, g: &NamedFn) -> f64 {
    let scale = |y: &[f64]| -> Vec<f64> { y.iter().map(|v| v * epsilon).collect() };
    let last = points.last().expect("nonempty skeleton");
    let sum: f64 = points[..points.len() - 1].iter().map(|y| g.eval(&scale(y))).sum();
    f.eval(&scale(last)) - epsilon * epsilon * spacing * sum
}

/// Empirical version of each stage that leads from the quenched exit
/// functional to the homogenized solution, with the gaps between stages.
pub fn discrete_representation_audit(inp: &AuditInputs<'_>) -> Result<AuditReport> {
    let (eps, f, g) = (inp.epsilon, inp.f, inp.g);
    let n = inp.table.locate_scale(eps)?;
    let m = inp.table.lagged(n).ok_or(Error::DegenerateSchedule { row: n, power: 0.0, ell: 0 })?;
    let l = inp.table.l(m);
    let spacing = l * l;
    let top = inp.table.row(n + 2).ok_or_else(|| Error::InvalidParams(format!("schedule needs row {}", n + 2)))?;
    let truncation = top.l_f64().powi(2);
    let micro = inp.domain.dilate(1.0 / eps);
    let start: Vec<f64> = inp.x.iter().map(|v| v / eps).collect();
    let d = start.len();
    let gf = g.func();
    let integrand = move |y: &[f64]| {
        let z: Vec<f64> = y.iter().map(|v| v * eps).collect();
        gf(&z)
    };
    let scale = |y: &[f64]| -> Vec<f64> { y.iter().map(|v| v * eps).collect() };

    // width 0: tau1 and tau2 fire at once and the run ends at the skeleton exit
    let rule = DiscreteRule { spacing, width: 0.0, domain: &micro };
    let rules = StopRules::exit(&micro).with_integrand(&integrand).with_discrete(rule).until_all_fired();
    let mut cfg = SimConfig::new(inp.dt, 2.0 * truncation, inp.seed);
    cfg.record_every = Some(spacing);
    let per_path = walk::run_paths(inp.paths, |i| {
        let p = walk::simulate(Dynamics::Quenched(inp.env), &start, &cfg.with_path(i), &rules, tag::AUDIT)?;
        let exit = p.exit.as_ref();
        let cont = match exit {
            Some(h) => f.eval(&scale(&h.position)) - eps * eps * h.integral,
            None => f.eval(&scale(&p.position)) - eps * eps * p.integral,
        };
        let truncated = match exit {
            Some(h) if h.time <= truncation => cont,
            _ => {
                let snap = p.snapshots.iter().find(|s| s.time >= truncation).or(p.snapshots.last()).expect("recorded");
                f.eval(&scale(&snap.position)) - eps * eps * snap.integral
            }
        };
        let skeleton: Vec<Vec<f64>> = match &p.tau_tilde {
            Some(h) => p.snapshots.iter().take_while(|s| s.time < h.time).map(|s| s.position.clone()).chain(std::iter::once(h.position.clone())).collect(),
            None => p.snapshots.iter().map(|s| s.position.clone()).collect(),
        };
        Ok((cont, truncated, skeleton_value(&skeleton, spacing, eps, f, g)))
    })?;

    let q = KernelSampler::quenched(inp.env, spacing).with_substeps(inp.substeps);
    let gk = KernelSampler::gaussian(inp.alpha_bar, d, spacing).with_substeps(inp.substeps);
    let max_steps = (2.0 * truncation / spacing).ceil() as usize;
    let chains = walk::run_paths(inp.paths, |i| {
        let mut x = start.clone();
        let mut xbar = start.clone();
        let mut skeleton = vec![xbar.clone()];
        for k in 0..max_steps {
            if !micro.contains(&xbar) {
                break;
            }
            let s = couple_step(&q, &gk, &x, &xbar, inp.batch, l, inp.table.params.beta, rng::mix(inp.seed, &[i, k as u64]))?;
            x = s.x;
            xbar = s.xbar;
            skeleton.push(xbar.clone());
        }
        Ok(skeleton_value(&skeleton, spacing, eps, f, g))
    })?;

    let brownian = walk::run_paths(inp.paths, |i| {
        let rules = StopRules::exit(&micro).with_integrand(&integrand);
        let p = walk::simulate(
            Dynamics::Wiener { alpha: inp.alpha_bar, d },
            &start,
            &cfg.with_path(i),
            &rules,
            tag::AUDIT,
        )?;
        Ok(f.eval(&scale(&p.position)) - eps * eps * p.integral)
    })?;
    let reference = solve_homogenized(inp.domain, inp.alpha_bar, g, f, d, inp.grid_h)?.eval(inp.x);

    let col = |k: usize| -> Vec<f64> {
        per_path.iter().map(|v| [v.0, v.1, v.2][k]).collect()
    };
    let (a, b, c) = (col(0), col(1), col(2));
    let est = MeanEstimate::from_slice;
    let stages = vec![
        AuditStage { name: "continuous", value: est(&a).mean, stderr: est(&a).stderr },
        AuditStage { name: "truncated", value: est(&b).mean, stderr: est(&b).stderr },
        AuditStage { name: "skeleton", value: est(&c).mean, stderr: est(&c).stderr },
        AuditStage { name: "coupled_gaussian", value: est(&chains).mean, stderr: est(&chains).stderr },
        AuditStage { name: "brownian", value: est(&brownian).mean, stderr: est(&brownian).stderr },
        AuditStage { name: "homogenized", value: reference, stderr: 0.0 },
    ];
    let paired = |u: &[f64], v: &[f64]| -> f64 {
        let dv: Vec<f64> = u.iter().zip(v).map(|(p, q)| q - p).collect();
        est(&dv).stderr
    };
    let independent = |i: usize, j: usize| (stages[i].stderr.powi(2) + stages[j].stderr.powi(2)).sqrt();
    let errs = [paired(&a, &b), paired(&b, &c), independent(2, 3), independent(3, 4), stages[4].stderr];
    let diffs = (0..5)
        .map(|k| AuditDiff {
            from: stages[k].name,
            to: stages[k + 1].name,
            diff: stages[k + 1].value - stages[k].value,
            stderr: errs[k],
        })
        .collect();

    let riemann = riemann_check(inp, &micro, &start, spacing, &integrand)?;
    Ok(AuditReport { epsilon: eps, n, spacing, stages, diffs, riemann })
}

/// Compares the skeleton Riemann sum of `g` with the trapezoidal integral on
/// Wiener paths, against the Lipschitz envelope built from measured
/// within-step excursions.
fn riemann_check(
    inp: &AuditInputs<'_>,
    micro: &Domain,
    start: &[f64],
    spacing: f64,
    integrand: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<RiemannCheck> {
    let eps = inp.epsilon;
    let d = start.len();
    let lip = inp.g.lipschitz;
    let mut cfg = SimConfig::new(inp.dt, 1e9, rng::mix(inp.seed, &[tag::CHECK]));
    cfg.record_every = Some(inp.dt);
    let rule = DiscreteRule { spacing, width: 0.0, domain: micro };
    let rules = StopRules::exit(micro).with_integrand(integrand).with_discrete(rule).until_all_fired();
    let per_path = walk::run_paths(inp.riemann_paths, |i| {
        let p = walk::simulate(Dynamics::Wiener { alpha: inp.alpha_bar, d }, start, &cfg.with_path(i), &rules, tag::CHECK)?;
        let end = p.tau_tilde.as_ref().map(|h| h.time).unwrap_or(p.time);
        let mut riemann = 0.0;
        let mut envelope = 0.0;
        let mut anchor = &p.snapshots[0];
        let mut excursion: f64 = 0.0;
        let mut integral_end = 0.0;
        for s in &p.snapshots[1..] {
            if s.time > end + 1e-9 {
                break;
            }
            let r = s.position.iter().zip(&anchor.position).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            excursion = excursion.max(r);
            integral_end = s.integral;
            let on_grid = (s.time / spacing - (s.time / spacing).round()).abs() < 1e-9;
            if on_grid {
                riemann += spacing * integrand(&anchor.position);
                envelope += spacing * excursion;
                anchor = s;
                excursion = 0.0;
            }
        }
        Ok(((riemann - integral_end).abs() * eps * eps, envelope * lip * eps.powi(3)))
    })?;
    let gaps: Vec<f64> = per_path.iter().map(|v| v.0).collect();
    let envs: Vec<f64> = per_path.iter().map(|v| v.1).collect();
    let gap = MeanEstimate::from_slice(&gaps);
    let env = MeanEstimate::from_slice(&envs);
    let pass = per_path.iter().all(|(gp, ev)| *gp <= ev + 1e-9 * (1.0 + ev));
    Ok(RiemannCheck { mean_gap: gap.mean, envelope: env.mean, stderr: gap.stderr, pass })
}
