//! Acceptance run. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails. Tolerances are pinned below.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use homlab::analytic::{alpha_perturbation_gap, annulus_mean_exit, solve_homogenized};
use homlab::config::ExperimentConfig;
use homlab::coupling::{self, ChainSettings, KernelSampler};
use homlab::domain::{Domain, DomainSpec};
use homlab::environ::{sample_environment, EnvSpec};
use homlab::harness::{self, ExitSettings, RateInputs};
use homlab::registry::NamedFn;
use homlab::renorm::{estimate_alpha, estimate_alpha_with, event_an_diagnostic, EventSettings};
use homlab::rng;
use homlab::schedule::{build_schedule, kappa, kappa_tilde, ScaleParams};
use homlab::stats::{ks_test, MeanEstimate};
use homlab::walk::{self, DiscreteRule, Dynamics, SimConfig, StopRules};
use homlab::{experiments, Error};

const ANNULUS_EXACT: f64 = 0.125;
const ANNULUS_EXACT_TOL: f64 = 1e-12;
const ANNULUS_MC_TOL: f64 = 0.05;
const BOUNDARY_TOL: f64 = 1e-10;
const BALL_MC_TOL: f64 = 0.05;
const RADIAL_TOL: f64 = 1e-6;
const ALPHA_TOL: f64 = 0.02;
const WIENER_ALPHA_TOL: f64 = 0.03;
const NULL_RATE_TOL: f64 = 0.02;
const COUPLING_RATE_MAX: f64 = 0.01;
const KS_LEVEL: f64 = 0.01;
const CLT_95: f64 = 1.96;
const TAIL_K1_MAX: f64 = 1e-2;
const GAP_TARGET: f64 = 0.0303;
const ENVELOPE_TARGET: f64 = 0.0667;
const GAP_TOL: f64 = 5e-4;

type Outcome = homlab::Result<(bool, String)>;

fn desk() -> ScaleParams {
    ScaleParams::default()
}

fn trivial_env() -> homlab::environ::Environment {
    sample_environment(&EnvSpec::trivial(3)).unwrap()
}

fn annulus_oracle() -> Outcome {
    let exact = annulus_mean_exit(1.0, 2.0, 1.0, 3, 1.5)?;
    let literal = (exact - ANNULUS_EXACT).abs() <= ANNULUS_EXACT_TOL;
    let boundary = annulus_mean_exit(1.0, 2.0, 1.0, 3, 1.0)?.abs().max(annulus_mean_exit(1.0, 2.0, 1.0, 3, 2.0)?.abs());
    let dom = Domain::annulus(1.0, 2.0)?;
    let cfg = SimConfig::new(1e-4, 50.0, 11);
    let rules = StopRules::exit(&dom);
    let taus = walk::run_paths(100_000, |i| {
        walk::simulate_wiener(1.0, &[1.5, 0.0, 0.0], &cfg.with_path(i), &rules).map(|p| p.time)
    })?;
    let mc = MeanEstimate::from_slice(&taus);
    let mc_ok = (mc.mean - exact).abs() <= ANNULUS_MC_TOL * exact;
    Ok((
        literal && mc_ok && boundary <= BOUNDARY_TOL,
        format!(
            "formula {exact:.6} (target {ANNULUS_EXACT}), MC {:.5} ± {:.5} vs formula, boundary {boundary:.1e}",
            mc.mean, mc.stderr
        ),
    ))
}

fn ball_oracle() -> Outcome {
    let env = trivial_env();
    let dom = Domain::ball(1.0);
    let (f, g) = (NamedFn::constant(0.0), NamedFn::constant(-1.0));
    let mut ok = true;
    let mut notes = Vec::new();
    for eps in [1.0 / 25.0, 1.0 / 125.0] {
        let s = ExitSettings { paths: 10_000, dt: 0.1, seed: 21, max_time: 50.0 / (eps * eps) };
        let u = harness::estimate_u_eps(&env, &dom, eps, &f, &g, &[vec![0.0; 3]], &s)?;
        let v = u.points[0].value;
        ok &= (v - 1.0 / 3.0).abs() <= BALL_MC_TOL / 3.0;
        notes.push(format!("eps=1/{:.0}: {v:.5}", 1.0 / eps));
    }
    let bar = solve_homogenized(&dom, 1.0, &g, &f, 3, 0.05)?;
    let centre = bar.eval(&[0.0; 3]);
    ok &= (centre - 1.0 / 3.0).abs() <= RADIAL_TOL;
    notes.push(format!("radial {centre:.9}"));
    Ok((ok, notes.join(", ")))
}

fn alpha_consistency() -> Outcome {
    let env = trivial_env();
    let table = build_schedule(&desk(), 2)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for n in 0..2 {
        let a = estimate_alpha(&env, &table, n, 10_000, 0.1, 31)?;
        ok &= (a.value - 1.0).abs() <= ALPHA_TOL;
        notes.push(format!("alpha_{n} {:.4} ± {:.4}", a.value, a.stderr));
    }
    let w = estimate_alpha_with(Dynamics::Wiener { alpha: 1.5, d: 3 }, &table, 0, 10_000, 0.1, 32)?;
    ok &= (w.value / 1.5 - 1.0).abs() <= WIENER_ALPHA_TOL;
    notes.push(format!("wiener(1.5) {:.4} ± {:.4}", w.value, w.stderr));
    Ok((ok, notes.join(", ")))
}

fn rate_inputs<'a>(
    env: &'a homlab::environ::Environment,
    dom: &'a Domain,
    table: &'a homlab::schedule::ScaleTable,
    fg: &'a (NamedFn, NamedFn),
    query: &'a [Vec<f64>],
    epsilons: &'a [f64],
    paths: usize,
    dt: f64,
) -> RateInputs<'a> {
    RateInputs {
        env,
        domain: dom,
        table,
        f: &fg.0,
        g: &fg.1,
        epsilons,
        query,
        paths,
        dt,
        seed: 41,
        horizon: 1.0,
        grid_h: 0.05,
        alpha: Err((0, 10_000)),
    }
}

const RATE_EPSILONS: [f64; 3] = [1.0 / 25.0, 1.0 / 32.0, 1.0 / 40.0];

fn null_rate() -> Outcome {
    let env = trivial_env();
    let dom = Domain::ball(1.0);
    let table = build_schedule(&desk(), 3)?;
    let fg = (NamedFn::constant(0.0), NamedFn::constant(-1.0));
    let query = harness::default_query(&dom, 3);
    let (report, _) = harness::rate_experiment(&rate_inputs(&env, &dom, &table, &fg, &query, &RATE_EPSILONS, 10_000, 0.02))?;
    let errs: Vec<f64> = report.rows.iter().map(|r| r.relative_error).collect();
    let small = errs.iter().all(|e| *e <= NULL_RATE_TOL);
    let (lo, hi) = report.slope_ci.unwrap_or((f64::NAN, f64::NAN));
    let ci = lo <= 0.0 && 0.0 <= hi;
    Ok((
        small && ci,
        format!("alpha_bar {:.4}, relative errors {errs:.4?}, slope CI [{lo:.2}, {hi:.2}]", report.alpha_bar),
    ))
}

fn perturbed_trend() -> Outcome {
    let env = sample_environment(&EnvSpec { eta: 0.05, ..Default::default() })?;
    let dom = Domain::ball(1.0);
    let table = build_schedule(&desk(), 3)?;
    let fg = (NamedFn::constant(0.0), NamedFn::constant(-1.0));
    let query = harness::default_query(&dom, 3);
    let (report, _) = harness::rate_experiment(&rate_inputs(&env, &dom, &table, &fg, &query, &RATE_EPSILONS, 4000, 0.1))?;
    let errs: Vec<f64> = report.rows.iter().map(|r| r.sup_error).collect();
    let ok = errs.len() >= 3 && errs[0] > errs[errs.len() - 1];
    Ok((ok, format!("alpha_bar {:.4}, sup errors {errs:.5?} (largest eps first)", report.alpha_bar)))
}

fn coupling_self_test() -> Outcome {
    let env = trivial_env();
    let table = build_schedule(&desk(), 3)?;
    let s = ChainSettings { n: 1, steps: 10, batch: 64, alpha: 1.0, substeps: 256, seed: 51 };
    let x = [0.0; 3];
    let chains = coupling::run_coupled_chains(&env, &table, &x, 200, &s)?;
    let l = table.l(table.lagged(s.n).unwrap());
    let rate = coupling::coupling_failure_rate(&chains, l)?;
    let cheb = coupling::chebyshev_check(&chains, l)?;
    let endpoints = |pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> Vec<f64> {
        chains.iter().map(|c| pick(c.pairs.last().unwrap())[0]).collect()
    };
    let reference: Vec<f64> = KernelSampler::gaussian(1.0, 3, s.steps as f64 * l * l)
        .draw(&x, 2000, rng::mix(s.seed, &[u64::MAX]))
        .into_iter()
        .map(|p| p[0])
        .collect();
    let ks_q = ks_test(&endpoints(|p| &p.0), &reference, KS_LEVEL);
    let ks_g = ks_test(&endpoints(|p| &p.1), &reference, KS_LEVEL);
    Ok((
        rate.mean < COUPLING_RATE_MAX && ks_q.pass && ks_g.pass && cheb.pass,
        format!(
            "failure rate {:.4}, KS quenched {:.3}/{:.3}, KS gaussian {:.3}/{:.3}, Chebyshev {:.2e} <= {:.2e}",
            rate.mean, ks_q.statistic, ks_q.critical, ks_g.statistic, ks_g.critical, cheb.lhs, cheb.rhs + cheb.allowance
        ),
    ))
}

fn stopping_order() -> Outcome {
    let configs = [(0.0, Domain::ball(10.0), 2.0), (0.1, Domain::ball(10.0), 1.0), (0.2, Domain::annulus(4.0, 12.0)?, 1.5)];
    let per = 10_000usize.div_ceil(configs.len());
    let (mut both, mut ordered, mut exits, mut exit_ordered) = (0, 0, 0, 0);
    for (ci, (eta, dom, width)) in configs.iter().enumerate() {
        let env = sample_environment(&EnvSpec { eta: *eta, seed: 60 + ci as u64, ..Default::default() })?;
        let start = if ci == 2 { [8.0, 0.0, 0.0] } else { [3.0, 0.0, 0.0] };
        let cfg = SimConfig::new(0.1, 5000.0, 61 + ci as u64);
        let rule = DiscreteRule { spacing: 1.0, width: *width, domain: dom };
        let rules = StopRules::exit(dom).with_discrete(rule).until_all_fired();
        let res = walk::run_paths(per, |i| {
            walk::simulate_quenched(&env, &start, &cfg.with_path(i), &rules).map(|p| {
                let pair = p.tau1.as_ref().zip(p.tau2.as_ref()).map(|(a, b)| a.time <= b.time);
                let exit = p.exit.as_ref().zip(p.tau_tilde.as_ref()).map(|(a, b)| a.time <= b.time);
                (pair, exit)
            })
        })?;
        for (pair, exit) in res {
            if let Some(o) = pair {
                both += 1;
                ordered += o as usize;
            }
            if let Some(o) = exit {
                exits += 1;
                exit_ordered += o as usize;
            }
        }
    }
    Ok((
        both == ordered && exits == exit_ordered && both > 0 && exits > 0,
        format!("tau1 <= tau2 on {ordered}/{both}, tau <= tau~ on {exit_ordered}/{exits}"),
    ))
}

fn localization() -> Outcome {
    let env = trivial_env();
    let table = build_schedule(&ScaleParams { c0: 0.75, ..desk() }, 2)?;
    let kappa0 = table.rows[0].kappa;
    let settings = EventSettings { scales: 0..=0, paths: 10_000, dt: 0.1, seed: 71, holder: None, alpha: 1.0 };
    let report = event_an_diagnostic(&env, &table, &[vec![0.0; 3]], &settings)?;
    let row = &report.rows[0];
    let se = (row.lhs * (1.0 - row.lhs) / settings.paths as f64).sqrt();
    let ok = kappa0 >= 1.5 && row.lhs <= row.rhs + CLT_95 * se;
    Ok((ok, format!("kappa_0 {kappa0:.3}, P(X* >= D_0) = {:.4} vs exp(-1) = {:.4}", row.lhs, row.rhs)))
}

fn tails() -> Outcome {
    let table = build_schedule(&desk(), 3)?;
    let dom = Domain::ball(1.0);
    let starts = harness::default_query(&dom, 3);
    let eps = 1.0 / 25.0;
    let n = table.locate_scale(eps)?;
    let reach = table.l(n + 2) >= 4.0 / eps;
    let mut nested = true;
    let mut k1 = f64::NAN;
    for (run, eta) in [0.0, 0.05, 0.1].into_iter().enumerate() {
        let env = sample_environment(&EnvSpec { eta, seed: 80 + run as u64, ..Default::default() })?;
        let report = harness::tail_experiment(&env, &dom, eps, &table, 4, &starts, 1000, 0.1, 81 + run as u64)?;
        nested &= report.rows.windows(2).all(|w| w[1].exceedance <= w[0].exceedance);
        if eta == 0.0 {
            k1 = report.rows[1].exceedance;
        }
    }
    Ok((
        nested && reach && k1 < TAIL_K1_MAX,
        format!("non-increasing on all runs: {nested}, eta=0 exceedance at k=1: {k1:.2e}, L_(n+2) >= 4/eps: {reach}"),
    ))
}

fn schedule_invariants() -> Outcome {
    let mut rng = rng::path_rng(91, 0, 0);
    use rand::Rng;
    let mut checked = 0;
    let mut ok = true;
    while checked < 20 {
        let a = rng.random_range(0.3..0.7);
        let l0 = 5 * rng.random_range(4u64..200);
        if (l0 as f64).powf(a) < 10.0 {
            continue;
        }
        checked += 1;
        let p = ScaleParams { a, l0, c0: rng.random_range(0.1..1.0), ..desk() };
        let t = match build_schedule(&p, 3) {
            Ok(t) => t,
            Err(Error::ScheduleOverflow { .. }) => build_schedule(&p, 2)?,
            Err(e) => return Err(e),
        };
        for w in t.rows.windows(2) {
            let (r, next) = (&w[0], &w[1]);
            let lf = r.l_f64();
            let target = lf.powf(1.0 + a);
            ok &= next.l == r.l * r.ell && r.ell >= 5 && r.ell % 5 == 0;
            ok &= 0.5 * target <= next.l_f64() && next.l_f64() <= 2.0 * target;
        }
        for r in &t.rows {
            let lf = r.l_f64();
            ok &= (r.kappa / kappa(p.c0, lf) - 1.0).abs() < 1e-12;
            ok &= (r.kappa_tilde / kappa_tilde(p.c0, lf) - 1.0).abs() < 1e-12;
            ok &= (r.d_n / (lf * r.kappa) - 1.0).abs() < 1e-12 && (r.d_tilde / (lf * r.kappa_tilde) - 1.0).abs() < 1e-12;
        }
    }
    let degenerate = [(0.2, 25u64), (0.05, 1000), (0.3, 5)]
        .iter()
        .all(|&(a, l0)| matches!(build_schedule(&ScaleParams { a, l0, ..desk() }, 3), Err(Error::DegenerateSchedule { .. })));
    Ok((ok && degenerate, format!("{checked} random schedules, degenerate inputs rejected: {degenerate}")))
}

fn envelope() -> Outcome {
    let dom = Domain::ball(1.0);
    let one = NamedFn::constant(1.0);
    let main = alpha_perturbation_gap(&dom, 1.0, 1.1, &one, 3, 0.05)?;
    let mut gaps = Vec::new();
    for off in [0.1, 0.01, 0.001] {
        gaps.push(alpha_perturbation_gap(&dom, 1.0, 1.0 + off, &one, 3, 0.05)?.direct_gap);
    }
    let shrinking = gaps.windows(2).all(|w| w[1] < w[0]) && gaps[2] < 1e-3;
    let ok = (main.direct_gap - GAP_TARGET).abs() <= GAP_TOL
        && (main.envelope - ENVELOPE_TARGET).abs() <= GAP_TOL
        && main.direct_gap < main.envelope
        && shrinking;
    Ok((
        ok,
        format!("gap {:.4} < envelope {:.4}; gaps over offsets {gaps:.5?}", main.direct_gap, main.envelope),
    ))
}

fn read_outputs(dir: &Path, names: &[String]) -> Vec<Vec<u8>> {
    names.iter().filter(|n| n.ends_with(".csv")).map(|n| fs::read(dir.join(n)).unwrap()).collect()
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir()?;
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["schedule", "alpha", "tails", "couple", "rate"] {
        let first = root.path().join(format!("{name}-1"));
        let cfg = ExperimentConfig {
            paths: 200,
            out: first.clone(),
            epsilons: vec![1.0 / 25.0, 1.0 / 28.0, 1.0 / 32.0],
            domain: DomainSpec::Ball { radius: 1.0, r0: None },
            alpha: homlab::config::AlphaSection { value: None, scale: 0, paths: 200 },
            coupling: homlab::config::CouplingSection { chains: 40, steps: 4, batch: 16, ..Default::default() },
            ..Default::default()
        };
        let m1 = experiments::run(name, &cfg)?;
        let mut again = ExperimentConfig::load(&first.join("manifest.json"))?;
        let second = root.path().join(format!("{name}-2"));
        again.out = second.clone();
        let m2 = experiments::run(name, &again)?;
        let a = read_outputs(&first, &m1.outputs);
        let b = read_outputs(&second, &m2.outputs);
        let same = !a.is_empty() && a == b && m1.summary == m2.summary;
        ok &= same;
        notes.push(format!("{name}:{}", if same { "identical" } else { "DIFFERENT" }));
    }
    Ok((ok, notes.join(" ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("annulus exit oracle", annulus_oracle),
        ("ball Poisson oracle", ball_oracle),
        ("effective diffusivity consistency", alpha_consistency),
        ("exact homogenization null test", null_rate),
        ("perturbed trend", perturbed_trend),
        ("coupling self-test", coupling_self_test),
        ("stopping-time ordering", stopping_order),
        ("localization", localization),
        ("tail nesting and decay", tails),
        ("schedule invariants", schedule_invariants),
        ("alpha perturbation envelope", envelope),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as usize;
        println!(
            "[{}] {:>2} {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria failed", failed, only.map_or(criteria.len(), |_| 1));
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
