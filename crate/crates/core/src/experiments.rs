//! One runner per CLI subcommand. Each writes its CSV tables, a plot script
//! and `manifest.json` into the configured output directory.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde_json::json;

use crate::analytic::AnnulusExit;
use crate::config::{ExperimentConfig, Manifest, Outputs};
use crate::coupling::{self, ChainSettings};
use crate::domain::{Domain, DomainSpec};
use crate::environ::{sample_environment, Environment};
use crate::error::{Error, Result};
use crate::harness::{self, AuditInputs, RateInputs};
use crate::registry::lookup;
use crate::renorm;
use crate::rng::{self, tag};
use crate::schedule::{build_schedule, ScaleTable};
use crate::stats::MeanEstimate;
use crate::walk::{self, SimConfig, StopRules};

/// Names accepted by [`run`].
pub const EXPERIMENTS: [&str; 9] =
    ["schedule", "env-check", "alpha", "annulus-check", "tails", "barrier", "couple", "rate", "audit"];

struct Setup {
    env: Environment,
    domain: Domain,
    table: ScaleTable,
    query: Vec<Vec<f64>>,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate()?;
    let env = sample_environment(&cfg.env)?;
    let domain = cfg.domain.build()?;
    let table = build_schedule(&cfg.schedule, cfg.n_max)?;
    let query = if cfg.query.is_empty() { harness::default_query(&domain, cfg.env.d) } else { cfg.query.clone() };
    Ok(Setup { env, domain, table, query })
}

fn first_epsilon(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.epsilons.first().copied().ok_or_else(|| Error::Config("epsilons must not be empty".into()))
}

/// Runs the named experiment.
pub fn run(name: &str, cfg: &ExperimentConfig) -> Result<Manifest> {
    let cfg = &ExperimentConfig { experiment: name.to_string(), ..cfg.clone() };
    match name {
        "schedule" => schedule(cfg),
        "env-check" => env_check(cfg),
        "alpha" => alpha(cfg),
        "annulus-check" => annulus_check(cfg),
        "tails" => tails(cfg),
        "barrier" => barrier(cfg),
        "couple" => couple(cfg),
        "rate" => rate(cfg),
        "audit" => audit(cfg),
        other => Err(Error::Config(format!("unknown experiment {other:?}"))),
    }
}

fn schedule(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.schedule.validate()?;
    let table = build_schedule(&cfg.schedule, cfg.n_max)?;
    let mut out = Outputs::create(&cfg.out)?;
    out.file("schedule.csv", |f| table.write_csv(f))?;
    out.plot_script("schedule.csv", "n", &["L_n", "D_n", "D_tilde_n"], false, "scale hierarchy")?;
    out.finish(cfg, json!({"delta": table.delta, "m0": table.m0, "mbar": table.mbar, "rows": table.rows.len()}))
}

fn env_check(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.env.validate()?;
    let env = sample_environment(&cfg.env)?;
    let d = cfg.env.d;
    let eta = cfg.env.eta;
    let line: Vec<Vec<f64>> = (0..400)
        .map(|k| {
            let mut x = vec![0.0; d];
            x[0] = -20.0 + 0.1 * k as f64;
            x
        })
        .collect();
    let mut r = rng::path_rng(cfg.seed, tag::CHECK, 0);
    let samples: Vec<Vec<f64>> = (0..cfg.paths.min(20_000))
        .map(|_| (0..d).map(|_| 100.0 * (r.random::<f64>() - 0.5)).collect())
        .collect();
    let mut probe = env.probe();
    let mut c = crate::environ::Coeffs::identity(d);
    let (mut max_b, mut lo, mut hi, mut max_ratio): (f64, f64, f64, f64) = (0.0, f64::INFINITY, 0.0, 0.0);
    for x in &samples {
        probe.eval_into(x, &mut c);
        max_b = max_b.max(c.b.iter().map(|v| v * v).sum::<f64>().sqrt());
        let eig = DMatrix::from_row_slice(d, d, &c.a).symmetric_eigenvalues();
        lo = lo.min(eig.min());
        hi = hi.max(eig.max());
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| if i == 0 { v + 0.01 } else { *v }).collect();
        let cy = env.eval_coeffs(&y);
        let db = c.b.iter().zip(&cy.b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() / 0.01;
        max_ratio = max_ratio.max(db);
    }
    let lip = env.lipschitz_bound(&vec![0.0; d], 60.0);
    let checks = [
        ("max_drift", max_b, eta, max_b <= eta),
        ("min_eigenvalue", lo, 1.0 - eta, lo >= 1.0 - eta - 1e-12),
        ("max_eigenvalue", hi, 1.0 + eta, hi <= 1.0 + eta + 1e-12),
        ("drift_slope", max_ratio, lip.drift, max_ratio <= lip.drift * (1.0 + 1e-6)),
    ];
    let mut out = Outputs::create(&cfg.out)?;
    out.file("env_field.csv", |f| env.write_field_csv(&line, f))?;
    out.file("env_check.csv", |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["check", "value", "bound", "pass"])?;
        for (name, v, b, p) in checks {
            w.write_record([name.to_string(), format!("{v:e}"), format!("{b:e}"), (p as u8).to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.plot_script("env_field.csv", "x0", &["a00", "a11", "b0"], false, "coefficients along a line")?;
    let pass = checks.iter().all(|c| c.3);
    out.finish(cfg, json!({"pass": pass, "samples": samples.len()}))
}

fn alpha(cfg: &ExperimentConfig) -> Result<Manifest> {
    let s = setup(cfg)?;
    let mut rows = Vec::new();
    for n in 0..=cfg.alpha.scale {
        rows.push(renorm::estimate_alpha(&s.env, &s.table, n, cfg.paths, cfg.dt, rng::mix(cfg.seed, &[n as u64]))?);
    }
    let mut out = Outputs::create(&cfg.out)?;
    out.file("alpha.csv", |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["n", "L_n", "alpha", "stderr", "stopped_early", "admissible"])?;
        for a in &rows {
            w.write_record([
                a.n.to_string(),
                s.table.l(a.n).to_string(),
                format!("{:e}", a.value),
                format!("{:e}", a.stderr),
                format!("{:e}", a.stopped_early),
                (a.admissible(cfg.env.eta) as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.plot_script("alpha.csv", "n", &["alpha"], false, "effective diffusivity")?;
    out.finish(cfg, json!({"alpha": rows}))
}

fn annulus_check(cfg: &ExperimentConfig) -> Result<Manifest> {
    let (r1, r2) = match cfg.domain {
        DomainSpec::Annulus { inner, outer, .. } => (inner, outer),
        _ => (1.0, 2.0),
    };
    let d = cfg.env.d;
    let alpha = cfg.alpha.value.unwrap_or(1.0);
    let a = AnnulusExit::new(r1, r2, alpha, d)?;
    let dom = Domain::annulus(r1, r2)?;
    let radii: Vec<f64> = (1..=5).map(|k| r1 + (r2 - r1) * k as f64 / 6.0).collect();
    let mut rows = Vec::new();
    for (k, &r) in radii.iter().enumerate() {
        let mut x = vec![0.0; d];
        x[0] = r;
        let sim = SimConfig::new(cfg.dt, 1e4, rng::mix(cfg.seed, &[k as u64]));
        let rules = StopRules::exit(&dom);
        let taus = walk::run_paths(cfg.paths, |i| {
            walk::simulate_wiener(alpha, &x, &sim.with_path(i), &rules).map(|p| p.exit_time().unwrap_or(p.time))
        })?;
        rows.push((r, a.value(r), MeanEstimate::from_slice(&taus)));
    }
    let mut out = Outputs::create(&cfg.out)?;
    out.file("annulus.csv", |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["r", "formula", "monte_carlo", "stderr"])?;
        for (r, v, m) in &rows {
            w.write_record([r, v, &m.mean, &m.stderr].map(|t| format!("{t:e}")))?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.plot_script("annulus.csv", "r", &["formula", "monte_carlo"], false, "annulus mean exit time")?;
    out.finish(cfg, json!({"c1": a.c1, "c2": a.c2, "boundary": [a.value(r1), a.value(r2)]}))
}

fn tails(cfg: &ExperimentConfig) -> Result<Manifest> {
    let s = setup(cfg)?;
    let eps = first_epsilon(cfg)?;
    let r = harness::tail_experiment(&s.env, &s.domain, eps, &s.table, cfg.k_max, &s.query, cfg.paths, cfg.dt, cfg.seed)?;
    let mut out = Outputs::create(&cfg.out)?;
    out.file("tails.csv", |f| r.write_csv(f))?;
    out.plot_script("tails.csv", "k", &["exceedance"], false, "exit-time tails")?;
    out.finish(cfg, json!({"n": r.n, "unit": r.unit, "decay_slope": r.decay_slope}))
}

fn barrier(cfg: &ExperimentConfig) -> Result<Manifest> {
    let s = setup(cfg)?;
    let eps = first_epsilon(cfg)?;
    let alpha = cfg.alpha.value.unwrap_or(1.0);
    let r = harness::barrier_experiment(&s.env, &s.domain, eps, &s.table, &s.query[0], alpha, cfg.paths, cfg.dt, cfg.seed)?;
    let mut out = Outputs::create(&cfg.out)?;
    out.file("barrier_paths.csv", |f| r.write_csv(f))?;
    out.file("barrier.csv", |f| r.write_exceedance_csv(f))?;
    out.plot_script("barrier.csv", "multiple", &["quenched", "brownian"], false, "boundary layer exceedance")?;
    out.finish(cfg, json!({"n": r.n, "threshold": r.threshold, "ordered_fraction": r.ordered_fraction}))
}

fn couple(cfg: &ExperimentConfig) -> Result<Manifest> {
    let s = setup(cfg)?;
    let c = &cfg.coupling;
    let settings = ChainSettings {
        n: c.n,
        steps: c.steps,
        batch: c.batch,
        alpha: cfg.alpha.value.unwrap_or(1.0),
        substeps: c.substeps,
        seed: cfg.seed,
    };
    let chains = coupling::run_coupled_chains(&s.env, &s.table, &vec![0.0; cfg.env.d], c.chains, &settings)?;
    let lag = s.table.lagged(c.n).ok_or_else(|| Error::Config(format!("coupling row {} has no lagged scale", c.n)))?;
    let gamma = c.gamma * s.table.l(lag);
    let rate = coupling::coupling_failure_rate(&chains, gamma)?;
    let cheb = coupling::chebyshev_check(&chains, gamma)?;
    let horizon = coupling::chain_horizon(&s.table, c.n)?;
    let mut out = Outputs::create(&cfg.out)?;
    out.file("chains.csv", |f| coupling::write_chains_csv(&chains, gamma, f))?;
    out.plot_script("chains.csv", "chain", &["max_distance"], false, "coupled chain separation")?;
    out.finish(
        cfg,
        json!({
            "gamma": gamma,
            "failure_rate": rate,
            "chebyshev": cheb,
            "envelope_unit_constant": coupling::failure_envelope(&s.table, c.n, 1.0),
            "covered_fraction": c.steps as f64 / horizon,
        }),
    )
}

fn rate(cfg: &ExperimentConfig) -> Result<Manifest> {
    let s = setup(cfg)?;
    let f = lookup(&cfg.f, cfg.env.d)?;
    let g = lookup(&cfg.g, cfg.env.d)?;
    let inp = RateInputs {
        env: &s.env,
        domain: &s.domain,
        table: &s.table,
        f: &f,
        g: &g,
        epsilons: &cfg.epsilons,
        query: &s.query,
        paths: cfg.paths,
        dt: cfg.dt,
        seed: cfg.seed,
        horizon: cfg.horizon,
        grid_h: cfg.grid_h,
        alpha: cfg.alpha.value.ok_or((cfg.alpha.scale, cfg.alpha.paths)),
    };
    let (report, reference) = harness::rate_experiment(&inp)?;
    let mut out = Outputs::create(&cfg.out)?;
    out.file("rate.csv", |f| report.write_csv(f))?;
    out.file("rate_points.csv", |f| report.write_points_csv(&reference, f))?;
    out.file("homogenized.csv", |f| reference.write_csv(f))?;
    out.plot_script("rate.csv", "epsilon", &["sup_error"], true, "homogenization error")?;
    out.finish(
        cfg,
        json!({"alpha_bar": report.alpha_bar, "alpha": report.alpha, "slope": report.slope, "slope_ci": report.slope_ci}),
    )
}

fn audit(cfg: &ExperimentConfig) -> Result<Manifest> {
    let s = setup(cfg)?;
    let f = lookup(&cfg.f, cfg.env.d)?;
    let g = lookup(&cfg.g, cfg.env.d)?;
    let inp = AuditInputs {
        env: &s.env,
        domain: &s.domain,
        table: &s.table,
        epsilon: first_epsilon(cfg)?,
        f: &f,
        g: &g,
        x: &s.query[0],
        alpha_bar: cfg.alpha.value.unwrap_or(1.0),
        paths: cfg.paths,
        riemann_paths: (cfg.paths / 10).max(10),
        batch: cfg.coupling.batch,
        substeps: cfg.coupling.substeps,
        dt: cfg.dt,
        seed: cfg.seed,
        grid_h: cfg.grid_h,
    };
    let r = harness::discrete_representation_audit(&inp)?;
    let mut out = Outputs::create(&cfg.out)?;
    out.file("audit.csv", |f| r.write_csv(f))?;
    out.file("audit_stages.csv", |f| {
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["index", "stage", "value", "stderr"])?;
        for (k, st) in r.stages.iter().enumerate() {
            w.write_record([k.to_string(), st.name.to_string(), format!("{:e}", st.value), format!("{:e}", st.stderr)])?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.plot_script("audit_stages.csv", "index", &["value"], false, "representation ledger")?;
    out.finish(cfg, json!({"n": r.n, "spacing": r.spacing, "riemann": r.riemann}))
}

/// Writes the name of every output file of a manifest, one per line.
pub fn list_outputs<W: Write>(m: &Manifest, mut w: W) -> Result<()> {
    for o in &m.outputs {
        writeln!(w, "{o}")?;
    }
    Ok(())
}
