//! Renormalization observables: rescaled Hölder norms, cutoffs, the
//! operators `R_n` (quenched) and `R̄_n` (Gaussian), the effective
//! diffusivity estimate and the control diagnostics.

use std::num::NonZeroUsize;

use gauss_quad::GaussHermite;
use rand::Rng;
use serde::Serialize;

use crate::environ::Environment;
use crate::error::{Error, Result};
use crate::registry::NamedFn;
use crate::rng::{self, tag};
use crate::schedule::ScaleTable;
use crate::stats::MeanEstimate;
use crate::walk::{self, Dynamics, SimConfig, StopRules};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Points plus the pairs on which Hölder quotients are taken.
#[derive(Debug, Clone, Serialize)]
pub struct PointCloud {
    pub points: Vec<Vec<f64>>,
    pub pairs: Vec<(usize, usize)>,
}

impl PointCloud {
    /// All pairs among the given points.
    pub fn all_pairs(points: Vec<Vec<f64>>) -> Self {
        let n = points.len();
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self { points, pairs }
    }

    /// Grid points of the ball `B_radius(center)` with `per_axis` nodes per
    /// axis, plus `dyadic` random pairs at separations `radius * 2^-j`,
    /// `j = 1..=levels`. Every pair of points is used.
    pub fn ball(center: &[f64], radius: f64, per_axis: usize, dyadic: usize, levels: u32, seed: u64) -> Self {
        let d = center.len();
        let mut points = Vec::new();
        if per_axis >= 2 {
            let total = per_axis.pow(d as u32);
            for mut idx in 0..total {
                let mut p = Vec::with_capacity(d);
                for c in center {
                    let k = idx % per_axis;
                    idx /= per_axis;
                    p.push(c - radius + 2.0 * radius * k as f64 / (per_axis - 1) as f64);
                }
                if dist(&p, center) <= radius {
                    points.push(p);
                }
            }
        } else {
            points.push(center.to_vec());
        }
        let mut rng = rng::path_rng(seed, tag::RENORM, 0);
        for k in 0..dyadic {
            let sep = radius * 0.5f64.powi(1 + (k as u32 % levels.max(1)) as i32);
            let dir = unit_vector(&mut rng, d);
            let r = (radius - sep).max(0.0) * rng.random::<f64>().powf(1.0 / d as f64);
            let u = unit_vector(&mut rng, d);
            let a: Vec<f64> = center.iter().zip(&u).map(|(c, v)| c + r * v).collect();
            let b: Vec<f64> = a.iter().zip(&dir).map(|(p, v)| p + sep * v).collect();
            points.push(a);
            points.push(b);
        }
        Self::all_pairs(points)
    }
}

fn unit_vector(rng: &mut rng::PathRng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Values of a scalar function on a point cloud at scale `L_n`.
#[derive(Debug, Clone, Serialize)]
pub struct FieldSample {
    pub cloud: PointCloud,
    pub values: Vec<f64>,
    pub l_n: f64,
    pub beta: f64,
}

impl FieldSample {
    pub fn new(cloud: PointCloud, values: Vec<f64>, l_n: f64, beta: f64) -> Result<Self> {
        if cloud.points.len() < 2 || values.len() != cloud.points.len() {
            return Err(Error::InvalidParams("a field sample needs at least two points with one value each".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("field values must be finite".into()));
        }
        Ok(Self { cloud, values, l_n, beta })
    }

    pub fn of_fn(cloud: PointCloud, f: &NamedFn, l_n: f64, beta: f64) -> Result<Self> {
        let values = cloud.points.iter().map(|p| f.eval(p)).collect();
        Self::new(cloud, values, l_n, beta)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `L_n^beta |f(x) - f(y)| / |x - y|^beta` maximized over the pairs.
    pub fn seminorm(&self) -> f64 {
        let w = self.l_n.powf(self.beta);
        self.cloud
            .pairs
            .iter()
            .filter_map(|&(i, j)| {
                let r = dist(&self.cloud.points[i], &self.cloud.points[j]);
                (r > 0.0).then(|| w * (self.values[i] - self.values[j]).abs() / r.powf(self.beta))
            })
            .fold(0.0, f64::max)
    }
}

/// Sampled lower bound on `|f|_n = sup |f| + sup L_n^beta |f(x)-f(y)| / |x-y|^beta`.
pub fn holder_norm(sample: &FieldSample) -> f64 {
    sample.sup() + sample.seminorm()
}

/// `chi_{n,x}(y) = chi((y - x) / v)` with `chi(z) = 1 ∧ (2 - |z|)_+`.
#[derive(Debug, Clone, Serialize)]
pub struct CutoffFn {
    pub center: Vec<f64>,
    pub v: f64,
}

impl CutoffFn {
    /// The scale `v = 30 sqrt(d) L_n`.
    pub fn at_scale(center: &[f64], l_n: f64) -> Self {
        let d = center.len() as f64;
        Self { center: center.to_vec(), v: 30.0 * d.sqrt() * l_n }
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let z = dist(y, &self.center) / self.v;
        (2.0 - z).clamp(0.0, 1.0)
    }
}

/// Monte Carlo settings shared by the operators.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McSettings {
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// `R_n f(x) = E_x f(X_{L_n^2})` for the quenched diffusion.
pub fn apply_rn(env: &Environment, f: &NamedFn, l_n: f64, x: &[f64], mc: &McSettings) -> Result<MeanEstimate> {
    if f.is_constant() {
        return Ok(MeanEstimate { mean: f.eval(x), stderr: 0.0, count: mc.paths });
    }
    let t = l_n * l_n;
    let cfg = SimConfig::new(mc.dt, 2.0 * t, mc.seed);
    let rules = StopRules::fixed_time(t, None);
    let values = walk::run_paths(mc.paths, |i| {
        walk::simulate(Dynamics::Quenched(env), x, &cfg.with_path(i), &rules, tag::RENORM).map(|p| f.eval(&p.position))
    })?;
    Ok(MeanEstimate::from_slice(&values))
}

/// `R̄_n f(x)`: Gaussian smoothing with covariance `alpha L_n^2 I`, by a
/// tensor Gauss-Hermite rule with `nodes` points per axis.
pub fn apply_rbar(alpha: f64, f: &NamedFn, l_n: f64, x: &[f64], nodes: usize) -> f64 {
    if f.is_constant() {
        return f.eval(x);
    }
    let d = x.len();
    let rule = GaussHermite::new(NonZeroUsize::new(nodes.max(1)).expect("positive"));
    let pairs = rule.as_node_weight_pairs();
    let scale = (2.0 * alpha).sqrt() * l_n;
    let norm = std::f64::consts::PI.powf(-(d as f64) / 2.0);
    let m = pairs.len();
    let mut y = vec![0.0; d];
    let mut total = 0.0;
    for mut idx in 0..m.pow(d as u32) {
        let mut w = 1.0;
        for i in 0..d {
            let (node, weight) = pairs[idx % m];
            idx /= m;
            y[i] = x[i] + scale * node;
            w *= weight;
        }
        total += w * f.eval(&y);
    }
    norm * total
}

/// Outcome of the Hölder control check at one center.
#[derive(Debug, Clone, Serialize)]
pub struct ControlCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Two standard errors propagated through the Hölder norm.
    pub allowance: f64,
    pub pass: bool,
}

/// Compares `|chi_{n,x} (R_n f - R̄_n f)|_n` with `L_n^-delta |f|_n` on a cloud
/// in `B_{60 sqrt(d) L_n}(x)`.
pub fn control_holder_check(
    env: &Environment,
    table: &ScaleTable,
    n: usize,
    alpha_n: f64,
    x: &[f64],
    f: &NamedFn,
    cloud: &PointCloud,
    mc: &McSettings,
) -> Result<ControlCheck> {
    let l_n = table.l(n);
    let beta = table.params.beta;
    let chi = CutoffFn::at_scale(x, l_n);
    let mut values = Vec::with_capacity(cloud.points.len());
    let mut errors = Vec::with_capacity(cloud.points.len());
    for (k, p) in cloud.points.iter().enumerate() {
        let weight = chi.value(p);
        if weight == 0.0 {
            values.push(0.0);
            errors.push(0.0);
            continue;
        }
        let local = McSettings { seed: rng::mix(mc.seed, &[k as u64]), ..*mc };
        let rn = apply_rn(env, f, l_n, p, &local)?;
        let rb = apply_rbar(alpha_n, f, l_n, p, 12);
        values.push(weight * (rn.mean - rb));
        errors.push(weight * rn.stderr);
    }
    let lhs = holder_norm(&FieldSample::new(cloud.clone(), values, l_n, beta)?);
    let noise = FieldSample { cloud: cloud.clone(), values: errors.clone(), l_n, beta };
    // quotient noise: the two endpoint errors add
    let w = l_n.powf(beta);
    let pair_noise = cloud
        .pairs
        .iter()
        .filter_map(|&(i, j)| {
            let r = dist(&cloud.points[i], &cloud.points[j]);
            (r > 0.0).then(|| w * (errors[i] + errors[j]) / r.powf(beta))
        })
        .fold(0.0, f64::max);
    let allowance = 2.0 * (noise.sup() + pair_noise);
    let rhs = l_n.powf(-table.delta) * holder_norm(&FieldSample::of_fn(cloud.clone(), f, l_n, beta)?);
    Ok(ControlCheck { lhs, rhs, allowance, pass: lhs <= rhs + allowance })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaEstimate {
    pub n: usize,
    pub value: f64,
    pub stderr: f64,
    pub paths: usize,
    /// Fraction of paths stopped by the excursion rule before `L_n^2`.
    pub stopped_early: f64,
}

impl AlphaEstimate {
    /// Whether the estimate lies in `[1/(2 nu), 2 nu]` for `nu = 1/(1 - eta)`.
    pub fn admissible(&self, eta: f64) -> bool {
        let nu = 1.0 / (1.0 - eta);
        (1.0 / (2.0 * nu)..=2.0 * nu).contains(&self.value)
    }
}

/// `alpha_n = E |X_{L_n^2 ∧ T_n} - x0|^2 / (d L_n^2)` for any dynamics, with
/// `T_n` the first time the excursion reaches `D~_n`.
pub fn estimate_alpha_with(
    dynamics: Dynamics<'_>,
    table: &ScaleTable,
    n: usize,
    paths: usize,
    dt: f64,
    seed: u64,
) -> Result<AlphaEstimate> {
    let row = table.row(n).ok_or_else(|| Error::InvalidParams(format!("row {n} not in schedule")))?;
    let l = row.l_f64();
    let d = dynamics.dim();
    let x0 = vec![0.0; d];
    let t = l * l;
    let cfg = SimConfig::new(dt, 2.0 * t, seed);
    let rules = StopRules::fixed_time(t, Some(row.d_tilde));
    let results = walk::run_paths(paths, |i| {
        walk::simulate(dynamics, &x0, &cfg.with_path(i), &rules, tag::ALPHA).map(|p| {
            let r2: f64 = p.position.iter().map(|v| v * v).sum();
            (r2 / (d as f64 * t), p.excursion.is_some())
        })
    })?;
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let stopped = results.iter().filter(|r| r.1).count();
    let est = MeanEstimate::from_slice(&values);
    Ok(AlphaEstimate {
        n,
        value: est.mean,
        stderr: est.stderr,
        paths,
        stopped_early: stopped as f64 / paths as f64,
    })
}

pub fn estimate_alpha(
    env: &Environment,
    table: &ScaleTable,
    n: usize,
    paths: usize,
    dt: f64,
    seed: u64,
) -> Result<AlphaEstimate> {
    estimate_alpha_with(Dynamics::Quenched(env), table, n, paths, dt, seed)
}

/// One row of the event diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct EventRow {
    pub center: Vec<f64>,
    pub m: usize,
    pub control: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EventReport {
    pub rows: Vec<EventRow>,
    pub pass_frequency: f64,
}

impl EventReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["center", "m", "control", "lhs", "rhs", "pass"])?;
        for r in &self.rows {
            let center = r.center.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
            w.write_record([
                center,
                r.m.to_string(),
                r.control.to_string(),
                format!("{:e}", r.lhs),
                format!("{:e}", r.rhs),
                (r.pass as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Up to `count` centers on the lattice `L_m Z^d` inside `[-L_{n+2}^2, L_{n+2}^2]^d`.
pub fn sample_centers(table: &ScaleTable, n: usize, m: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let top = table
        .row(n + 2)
        .ok_or_else(|| Error::InvalidParams(format!("schedule needs row {}", n + 2)))?
        .l_f64();
    let spacing = table.l(m);
    let k_max = (top * top / spacing).floor();
    let d = table.params.d;
    let mut rng = rng::path_rng(seed, tag::RENORM, 1);
    Ok((0..count.min(50))
        .map(|_| {
            (0..d)
                .map(|_| spacing * (rng.random_range(-k_max..=k_max)).round())
                .collect()
        })
        .collect())
}

/// Settings for [`event_an_diagnostic`].
#[derive(Debug, Clone)]
pub struct EventSettings {
    pub scales: std::ops::RangeInclusive<usize>,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Also run the Hölder control with this function and cloud size.
    pub holder: Option<(NamedFn, usize)>,
    pub alpha: f64,
}

/// Per-center, per-scale check of the localization control
/// `P_y(X*_{L_m^2} >= D_m) <= exp(-1)` and optionally the Hölder control.
pub fn event_an_diagnostic(
    env: &Environment,
    table: &ScaleTable,
    centers: &[Vec<f64>],
    settings: &EventSettings,
) -> Result<EventReport> {
    let mut rows = Vec::new();
    for (ci, center) in centers.iter().enumerate() {
        for m in settings.scales.clone() {
            let row = table.row(m).ok_or_else(|| Error::InvalidParams(format!("row {m} not in schedule")))?;
            let l = row.l_f64();
            let cfg = SimConfig::new(settings.dt, 2.0 * l * l, rng::mix(settings.seed, &[ci as u64, m as u64]));
            let rules = StopRules::fixed_time(l * l, Some(row.d_n));
            let hits = walk::run_paths(settings.paths, |i| {
                walk::simulate(Dynamics::Quenched(env), center, &cfg.with_path(i), &rules, tag::CHECK)
                    .map(|p| p.excursion.is_some() as usize)
            })?;
            let est = MeanEstimate::proportion(hits.iter().sum(), settings.paths);
            let rhs = (-1.0f64).exp();
            rows.push(EventRow {
                center: center.clone(),
                m,
                control: "localization",
                lhs: est.mean,
                rhs,
                pass: est.mean <= rhs + 2.0 * est.stderr,
            });
            if let Some((f, per_axis)) = &settings.holder {
                let radius = 60.0 * (table.params.d as f64).sqrt() * l;
                let cloud = PointCloud::ball(center, radius, *per_axis, 4, 4, settings.seed);
                let mc = McSettings { paths: settings.paths, dt: settings.dt, seed: cfg.seed };
                let check = control_holder_check(env, table, m, settings.alpha, center, f, &cloud, &mc)?;
                rows.push(EventRow {
                    center: center.clone(),
                    m,
                    control: "holder",
                    lhs: check.lhs,
                    rhs: check.rhs + check.allowance,
                    pass: check.pass,
                });
            }
        }
    }
    let pass_frequency = rows.iter().filter(|r| r.pass).count() as f64 / rows.len().max(1) as f64;
    Ok(EventReport { rows, pass_frequency })
}
