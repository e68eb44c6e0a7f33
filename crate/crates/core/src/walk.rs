//! Euler-Maruyama simulation of the quenched diffusion and of scaled Brownian
//! motion, with the stopping rules used by the experiments.
//!
//! A path runs until its terminal rule fires or the horizon is reached.
//! Continuous rules (domain exit, excursion level) are checked after every
//! step. Discrete rules are checked on the time grid `k * spacing`, which the
//! stepper always lands on exactly.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::Domain;
use crate::environ::{Coeffs, EnvProbe, Environment};
use crate::error::{Error, Result};
use crate::rng::{self, PathRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub max_time: f64,
    pub seed: u64,
    pub path_index: u64,
    /// Snapshots are kept at multiples of this time, if set.
    pub record_every: Option<f64>,
}

impl SimConfig {
    pub fn new(dt: f64, max_time: f64, seed: u64) -> Self {
        Self { dt, max_time, seed, path_index: 0, record_every: None }
    }

    pub fn with_path(self, path_index: u64) -> Self {
        Self { path_index, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::InvalidParams(format!("dt = {} must lie in (0, 0.1]", self.dt)));
        }
        if !(self.max_time > 0.0) || self.max_time / self.dt > 1e15 {
            return Err(Error::InvalidParams(format!("unusable horizon {}", self.max_time)));
        }
        if let Some(r) = self.record_every {
            if !(r > 0.0) {
                return Err(Error::InvalidParams("record spacing must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Which event ends the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    /// Continuous exit from the domain.
    Exit,
    /// Excursion level reached.
    Excursion,
    /// The fixed time `until` is reached, or the excursion level if set first.
    TimeOrExcursion,
    /// Every installed rule has fired.
    AllFired,
}

/// Discrete skeleton rules on the grid `k * spacing`.
#[derive(Debug, Clone)]
pub struct DiscreteRule<'a> {
    pub spacing: f64,
    /// Width of the neighborhoods, `D~_{n - mbar}`.
    pub width: f64,
    pub domain: &'a Domain,
}

pub struct StopRules<'a> {
    pub domain: Option<&'a Domain>,
    pub excursion: Option<f64>,
    pub discrete: Option<DiscreteRule<'a>>,
    pub until: Option<f64>,
    pub terminal: Terminal,
    /// Integrand accumulated by the trapezoidal rule along the path.
    pub integrand: Option<&'a (dyn Fn(&[f64]) -> f64 + Sync)>,
}

impl<'a> StopRules<'a> {
    pub fn exit(domain: &'a Domain) -> Self {
        Self {
            domain: Some(domain),
            excursion: None,
            discrete: None,
            until: None,
            terminal: Terminal::Exit,
            integrand: None,
        }
    }

    /// Stop at time `t` or when the excursion reaches `level`, whichever comes first.
    pub fn fixed_time(t: f64, level: Option<f64>) -> Self {
        Self {
            domain: None,
            excursion: level,
            discrete: None,
            until: Some(t),
            terminal: Terminal::TimeOrExcursion,
            integrand: None,
        }
    }

    pub fn with_integrand(mut self, g: &'a (dyn Fn(&[f64]) -> f64 + Sync)) -> Self {
        self.integrand = Some(g);
        self
    }

    pub fn with_discrete(mut self, rule: DiscreteRule<'a>) -> Self {
        self.discrete = Some(rule);
        self
    }

    pub fn with_excursion(mut self, level: f64) -> Self {
        self.excursion = Some(level);
        self
    }

    pub fn until_all_fired(mut self) -> Self {
        self.terminal = Terminal::AllFired;
        self
    }
}

/// State of the path when a rule fired.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub time: f64,
    pub position: Vec<f64>,
    /// Running integral of the integrand up to `time`.
    pub integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub position: Vec<f64>,
    pub max_excursion: f64,
    pub integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppedPath {
    pub x0: Vec<f64>,
    pub time: f64,
    pub position: Vec<f64>,
    pub max_excursion: f64,
    pub integral: f64,
    pub steps: u64,
    pub snapshots: Vec<Snapshot>,
    /// Continuous exit `tau^eps`.
    pub exit: Option<Hit>,
    /// Excursion stop `T_n`.
    pub excursion: Option<Hit>,
    pub tau1: Option<Hit>,
    pub tau2: Option<Hit>,
    pub tau_tilde: Option<Hit>,
    /// The horizon was reached before the terminal rule fired.
    pub horizon_hit: bool,
}

impl StoppedPath {
    pub fn exit_time(&self) -> Option<f64> {
        self.exit.as_ref().map(|h| h.time)
    }
}

/// Driving dynamics.
#[derive(Clone, Copy)]
pub enum Dynamics<'a> {
    Quenched(&'a Environment),
    /// `sqrt(alpha) B_t`, simulated with exact Gaussian increments.
    Wiener { alpha: f64, d: usize },
}

impl Dynamics<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Dynamics::Quenched(env) => env.dim(),
            Dynamics::Wiener { d, .. } => *d,
        }
    }
}

struct Stepper<'a> {
    probe: Option<EnvProbe<'a>>,
    alpha: f64,
    coeffs: Coeffs,
    z: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(dynamics: Dynamics<'a>) -> Self {
        let d = dynamics.dim();
        match dynamics {
            Dynamics::Quenched(env) => Self {
                probe: (!env.is_trivial()).then(|| env.probe()),
                alpha: 1.0,
                coeffs: Coeffs::identity(d),
                z: vec![0.0; d],
            },
            Dynamics::Wiener { alpha, .. } => {
                Self { probe: None, alpha, coeffs: Coeffs::identity(d), z: vec![0.0; d] }
            }
        }
    }

    #[inline]
    fn step(&mut self, x: &mut [f64], h: f64, rng: &mut PathRng) {
        let d = x.len();
        for zi in self.z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let sq = h.sqrt();
        match self.probe.as_mut() {
            None => {
                let s = (self.alpha * h).sqrt();
                for i in 0..d {
                    x[i] += s * self.z[i];
                }
            }
            Some(probe) => {
                probe.eval_into(x, &mut self.coeffs);
                let c = &self.coeffs;
                for i in 0..d {
                    let mut noise = 0.0;
                    for k in 0..d {
                        noise += c.sigma[i * d + k] * self.z[k];
                    }
                    x[i] += c.b[i] * h + sq * noise;
                }
            }
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Discrete rule bookkeeping shared by simulation and post-hoc evaluation.
#[derive(Debug, Default, Clone)]
struct DiscreteState {
    tau1: Option<Hit>,
    tau2: Option<Hit>,
    tau_tilde: Option<Hit>,
}

impl DiscreteState {
    fn observe(&mut self, rule: &DiscreteRule<'_>, t: f64, x: &[f64], integral: f64) {
        let hit = || Some(Hit { time: t, position: x.to_vec(), integral });
        if self.tau1.is_none() && rule.domain.dist_to_complement(x) <= rule.width {
            self.tau1 = hit();
        }
        if self.tau2.is_none() && rule.domain.dist_to_domain(x) >= rule.width {
            self.tau2 = hit();
        }
        if self.tau_tilde.is_none() && !rule.domain.contains(x) {
            self.tau_tilde = hit();
        }
    }

    fn all_fired(&self) -> bool {
        self.tau1.is_some() && self.tau2.is_some() && self.tau_tilde.is_some()
    }
}

fn next_multiple(t: f64, spacing: f64) -> f64 {
    let k = (t / spacing).floor() + 1.0;
    let mut next = k * spacing;
    if next <= t {
        next += spacing;
    }
    next
}

/// Simulates one path of `dynamics` from `x0`.
pub fn simulate(
    dynamics: Dynamics<'_>,
    x0: &[f64],
    cfg: &SimConfig,
    rules: &StopRules<'_>,
    stream_tag: u64,
) -> Result<StoppedPath> {
    cfg.validate()?;
    let d = dynamics.dim();
    if x0.len() != d {
        return Err(Error::InvalidParams(format!("start point has dimension {}, expected {d}", x0.len())));
    }
    let mut rng = rng::path_rng(cfg.seed, stream_tag, cfg.path_index);
    let mut stepper = Stepper::new(dynamics);

    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut steps = 0u64;
    let mut max_exc: f64 = 0.0;
    let mut integral = 0.0;
    let mut g_prev = rules.integrand.map(|g| g(&x)).unwrap_or(0.0);
    let mut snapshots = Vec::new();
    let mut exit = None;
    let mut excursion = None;
    let mut discrete = DiscreteState::default();

    let horizon = match rules.until {
        Some(u) if rules.terminal == Terminal::TimeOrExcursion => u.min(cfg.max_time),
        _ => cfg.max_time,
    };
    let record = cfg.record_every;
    let spacing = rules.discrete.as_ref().map(|r| r.spacing);
    if record.is_some() {
        snapshots.push(Snapshot { time: 0.0, position: x.clone(), max_excursion: 0.0, integral: 0.0 });
    }
    if let Some(rule) = &rules.discrete {
        // k = 0 is on the grid
        discrete.observe(rule, 0.0, &x, 0.0);
    }
    if let Some(dom) = rules.domain {
        if !dom.contains(&x) {
            exit = Some(Hit { time: 0.0, position: x.clone(), integral: 0.0 });
        }
    }
    let mut next_record = record.map(|r| next_multiple(0.0, r));
    let mut next_grid = spacing.map(|s| next_multiple(0.0, s));

    let done = |exit: &Option<Hit>, excursion: &Option<Hit>, discrete: &DiscreteState| -> bool {
        match rules.terminal {
            Terminal::Exit => exit.is_some(),
            Terminal::Excursion | Terminal::TimeOrExcursion => excursion.is_some(),
            Terminal::AllFired => {
                (rules.domain.is_none() || exit.is_some())
                    && (rules.excursion.is_none() || excursion.is_some())
                    && (rules.discrete.is_none() || discrete.all_fired())
            }
        }
    };

    let mut finished = done(&exit, &excursion, &discrete);
    while !finished && t < horizon {
        let mut target = (t + cfg.dt).min(horizon);
        if let Some(nr) = next_record {
            target = target.min(nr);
        }
        if let Some(ng) = next_grid {
            target = target.min(ng);
        }
        let h = target - t;
        stepper.step(&mut x, h, &mut rng);
        t = target;
        steps += 1;

        if let Some(g) = rules.integrand {
            let g_now = g(&x);
            integral += 0.5 * h * (g_prev + g_now);
            g_prev = g_now;
        }
        let r = distance(&x, x0);
        if r > max_exc {
            max_exc = r;
        }
        if let Some(level) = rules.excursion {
            if excursion.is_none() && max_exc >= level {
                excursion = Some(Hit { time: t, position: x.clone(), integral });
            }
        }
        if let Some(dom) = rules.domain {
            if exit.is_none() && !dom.contains(&x) {
                exit = Some(Hit { time: t, position: x.clone(), integral });
            }
        }
        if let (Some(rule), Some(ng)) = (&rules.discrete, next_grid) {
            if t >= ng {
                discrete.observe(rule, t, &x, integral);
                next_grid = Some(next_multiple(t, rule.spacing));
            }
        }
        if let (Some(r), Some(nr)) = (record, next_record) {
            if t >= nr {
                snapshots.push(Snapshot { time: t, position: x.clone(), max_excursion: max_exc, integral });
                next_record = Some(next_multiple(t, r));
            }
        }
        finished = done(&exit, &excursion, &discrete);
    }

    let reached_until = rules.terminal == Terminal::TimeOrExcursion
        && rules.until.is_some_and(|u| t >= u);
    Ok(StoppedPath {
        x0: x0.to_vec(),
        time: t,
        position: x,
        max_excursion: max_exc,
        integral,
        steps,
        snapshots,
        exit,
        excursion,
        tau1: discrete.tau1,
        tau2: discrete.tau2,
        tau_tilde: discrete.tau_tilde,
        horizon_hit: !finished && !reached_until,
    })
}

/// Quenched diffusion `dX = b dt + sigma dB` in `env`.
pub fn simulate_quenched(
    env: &Environment,
    x0: &[f64],
    cfg: &SimConfig,
    rules: &StopRules<'_>,
) -> Result<StoppedPath> {
    simulate(Dynamics::Quenched(env), x0, cfg, rules, rng::tag::QUENCHED)
}

/// Brownian motion with covariance `alpha * t * I`.
pub fn simulate_wiener(
    alpha: f64,
    x0: &[f64],
    cfg: &SimConfig,
    rules: &StopRules<'_>,
) -> Result<StoppedPath> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParams(format!("alpha = {alpha} must be positive")));
    }
    simulate(Dynamics::Wiener { alpha, d: x0.len() }, x0, cfg, rules, rng::tag::WIENER)
}

/// Endpoint of one kernel step of length `step_time`, taken as `substeps`
/// equal Euler-Maruyama substeps with no stopping rules. Unlike [`simulate`]
/// the substep is not capped, so coarse kernels stay affordable.
pub fn kernel_step(
    dynamics: Dynamics<'_>,
    x: &[f64],
    step_time: f64,
    substeps: usize,
    rng: &mut PathRng,
) -> Vec<f64> {
    let mut stepper = Stepper::new(dynamics);
    let mut y = x.to_vec();
    let h = step_time / substeps.max(1) as f64;
    for _ in 0..substeps.max(1) {
        stepper.step(&mut y, h, rng);
    }
    y
}

/// Runs `count` independent paths in parallel, returned in index order.
pub fn run_paths<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(f).collect()
}

/// Discrete stopping times read off a recorded path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteStops {
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub tau_tilde: Option<f64>,
}

/// Evaluates the skeleton rules on the snapshots of a recorded path.
pub fn discrete_stop_times(path: &StoppedPath, spacing: f64, width: f64, domain: &Domain) -> Result<DiscreteStops> {
    if path.snapshots.is_empty() {
        return Err(Error::NotRecorded("path has no snapshots".into()));
    }
    let stride = if path.snapshots.len() > 1 {
        path.snapshots[1].time - path.snapshots[0].time
    } else {
        spacing
    };
    let ratio = spacing / stride;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
        return Err(Error::NotRecorded(format!(
            "grid spacing {spacing} is not a multiple of the record stride {stride}"
        )));
    }
    let rule = DiscreteRule { spacing, width, domain };
    let mut state = DiscreteState::default();
    let every = ratio.round() as usize;
    for s in path.snapshots.iter().step_by(every) {
        state.observe(&rule, s.time, &s.position, s.integral);
    }
    Ok(DiscreteStops {
        tau1: state.tau1.map(|h| h.time),
        tau2: state.tau2.map(|h| h.time),
        tau_tilde: state.tau_tilde.map(|h| h.time),
    })
}

/// One summary row per path for CSV export.
pub fn write_path_summary<W: std::io::Write>(paths: &[StoppedPath], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = paths.first().map(|p| p.x0.len()).unwrap_or(0);
    let mut header: Vec<String> =
        ["path", "exit", "excursion", "tau1", "tau2", "tau_tilde", "horizon", "time", "max_excursion"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    header.extend((0..d).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    let fmt = |h: &Option<Hit>| h.as_ref().map(|h| format!("{:e}", h.time)).unwrap_or_default();
    for (i, p) in paths.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            fmt(&p.exit),
            fmt(&p.excursion),
            fmt(&p.tau1),
            fmt(&p.tau2),
            fmt(&p.tau_tilde),
            (p.horizon_hit as u8).to_string(),
            format!("{:e}", p.time),
            format!("{:e}", p.max_excursion),
        ];
        row.extend(p.position.iter().map(|v| format!("{v:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environ::{sample_environment, EnvSpec};
    use crate::stats::{ks_test, MeanEstimate};
    use proptest::prelude::*;

    fn trivial() -> Environment {
        sample_environment(&EnvSpec::trivial(3)).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0.2, 1.0, 0).validate().is_err());
        assert!(SimConfig::new(0.0, 1.0, 0).validate().is_err());
        assert!(SimConfig::new(0.01, 1.0, 0).validate().is_ok());
    }

    #[test]
    fn fixed_time_lands_exactly() {
        let cfg = SimConfig::new(0.03, 10.0, 1);
        let p = simulate_wiener(1.0, &[0.0; 3], &cfg, &StopRules::fixed_time(1.0, None)).unwrap();
        assert_eq!(p.time, 1.0);
        assert!(!p.horizon_hit);
    }

    #[test]
    fn trivial_env_is_a_martingale_with_unit_variance() {
        let n = 10_000;
        let env = trivial();
        let cfg = SimConfig::new(1e-3, 2.0, 7);
        let rules = StopRules::fixed_time(1.0, None);
        let ends: Vec<Vec<f64>> = run_paths(n, |i| {
            simulate_quenched(&env, &[0.0; 3], &cfg.with_path(i), &rules).map(|p| p.position)
        })
        .unwrap();
        for i in 0..3 {
            let m: f64 = ends.iter().map(|x| x[i]).sum::<f64>() / n as f64;
            assert!(m.abs() < 4.0 * (1.0 / n as f64).sqrt());
        }
        let sq: Vec<f64> = ends.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>() / 3.0).collect();
        let est = MeanEstimate::from_slice(&sq);
        assert!((est.mean - 1.0).abs() < 0.03, "{est:?}");
    }

    #[test]
    fn wiener_matches_trivial_quenched_and_scales() {
        let n = 4000;
        let env = trivial();
        let cfg = SimConfig::new(0.01, 2.0, 3);
        let rules = StopRules::fixed_time(1.0, None);
        let q: Vec<f64> = run_paths(n, |i| {
            simulate_quenched(&env, &[0.0; 3], &cfg.with_path(i), &rules)
                .map(|p| p.position.iter().map(|v| v * v).sum::<f64>().sqrt())
        })
        .unwrap();
        let other = SimConfig { seed: 99, ..cfg };
        let w: Vec<f64> = run_paths(n, |i| {
            simulate_wiener(1.0, &[0.0; 3], &other.with_path(i), &rules)
                .map(|p| p.position.iter().map(|v| v * v).sum::<f64>().sqrt())
        })
        .unwrap();
        assert!(ks_test(&q, &w, 0.01).pass);

        let w4: Vec<f64> = run_paths(n, |i| {
            simulate_wiener(4.0, &[0.0; 3], &cfg.with_path(i), &rules)
                .map(|p| p.position.iter().map(|v| v * v).sum::<f64>())
        })
        .unwrap();
        let est = MeanEstimate::from_slice(&w4);
        assert!((est.mean / 12.0 - 1.0).abs() < 0.03 + 3.0 * est.stderr / 12.0);
    }

    #[test]
    fn excursion_tail_below_reflection_bound() {
        let n = 10_000;
        let cfg = SimConfig::new(1e-2, 2.0, 5);
        let level = 3.0 * 3f64.sqrt();
        let rules = StopRules::fixed_time(1.0, Some(level));
        let hits: usize = run_paths(n, |i| {
            simulate_wiener(1.0, &[0.0; 3], &cfg.with_path(i), &rules).map(|p| p.excursion.is_some() as usize)
        })
        .unwrap()
        .iter()
        .sum();
        // 2 d P(N(0,1) >= 3)
        let bound = 6.0 * 0.001_349_898;
        assert!((hits as f64 / n as f64) <= bound);
    }

    #[test]
    fn same_stream_same_path() {
        let env = sample_environment(&EnvSpec { eta: 0.2, ..Default::default() }).unwrap();
        let cfg = SimConfig { record_every: Some(0.5), ..SimConfig::new(0.05, 10.0, 4).with_path(12) };
        let dom = Domain::ball(3.0);
        let a = simulate_quenched(&env, &[0.1, 0.0, 0.0], &cfg, &StopRules::exit(&dom)).unwrap();
        let b = simulate_quenched(&env, &[0.1, 0.0, 0.0], &cfg, &StopRules::exit(&dom)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn discrete_stops_never_fire_deep_inside() {
        let dom = Domain::ball(1000.0);
        let cfg = SimConfig { record_every: Some(1.0), ..SimConfig::new(0.1, 20.0, 1) };
        let rules = StopRules::fixed_time(20.0, None);
        let p = simulate_wiener(1.0, &[0.0; 3], &cfg, &rules).unwrap();
        let s = discrete_stop_times(&p, 4.0, 10.0, &dom).unwrap();
        assert_eq!(s, DiscreteStops { tau1: None, tau2: None, tau_tilde: None });
        assert!(matches!(discrete_stop_times(&p, 2.5, 10.0, &dom), Err(Error::NotRecorded(_))));
    }

    #[test]
    fn simultaneous_trigger_on_one_step_jump() {
        let dom = Domain::ball(1.0);
        let path = StoppedPath {
            x0: vec![0.0; 3],
            time: 4.0,
            position: vec![50.0, 0.0, 0.0],
            max_excursion: 50.0,
            integral: 0.0,
            steps: 1,
            snapshots: vec![
                Snapshot { time: 0.0, position: vec![0.0; 3], max_excursion: 0.0, integral: 0.0 },
                Snapshot { time: 4.0, position: vec![50.0, 0.0, 0.0], max_excursion: 50.0, integral: 0.0 },
            ],
            exit: None,
            excursion: None,
            tau1: None,
            tau2: None,
            tau_tilde: None,
            horizon_hit: false,
        };
        let s = discrete_stop_times(&path, 4.0, 0.5, &dom).unwrap();
        assert_eq!(s, DiscreteStops { tau1: Some(4.0), tau2: Some(4.0), tau_tilde: Some(4.0) });
    }

    #[test]
    fn exit_from_scaled_ball() {
        // E[eps^2 tau] = (1 - 0)/d for the unit ball at eps = 1/25
        let n = 2000;
        let dom = Domain::ball(25.0);
        let cfg = SimConfig::new(0.1, 1e5, 8);
        let taus: Vec<f64> = run_paths(n, |i| {
            simulate_wiener(1.0, &[0.0; 3], &cfg.with_path(i), &StopRules::exit(&dom))
                .map(|p| p.exit_time().unwrap() / 625.0)
        })
        .unwrap();
        let est = MeanEstimate::from_slice(&taus);
        assert!((est.mean - 1.0 / 3.0).abs() < 0.05 / 3.0 + 3.0 * est.stderr, "{est:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn stopping_times_are_ordered(seed in 0u64..1000, eta in 0.0f64..0.3, start in 0.0f64..9.0) {
            let env = sample_environment(&EnvSpec { eta, seed, ..Default::default() }).unwrap();
            let dom = Domain::ball(10.0);
            let cfg = SimConfig { record_every: Some(0.5), ..SimConfig::new(0.1, 2000.0, seed) };
            let rule = DiscreteRule { spacing: 1.0, width: 2.0, domain: &dom };
            let rules = StopRules::exit(&dom).with_discrete(rule).until_all_fired();
            let p = simulate_quenched(&env, &[start, 0.0, 0.0], &cfg, &rules).unwrap();
            for w in p.snapshots.windows(2) {
                prop_assert!(w[0].max_excursion <= w[1].max_excursion);
            }
            if let (Some(t1), Some(t2)) = (&p.tau1, &p.tau2) {
                prop_assert!(t1.time <= t2.time);
            }
            if let (Some(e), Some(tt)) = (&p.exit, &p.tau_tilde) {
                prop_assert!(e.time <= tt.time);
            }
            if let (Some(t1), Some(e), Some(t2)) = (&p.tau1, &p.exit, &p.tau2) {
                if t1.time <= e.time {
                    prop_assert!(e.time <= t2.time);
                }
            }
        }
    }
}
