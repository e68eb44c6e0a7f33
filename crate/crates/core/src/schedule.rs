//! Deterministic multiscale constants.
//!
//! Length scales grow by `L_{n+1} = ell_n * L_n` with `ell_n = 5 * floor(L_n^a / 5)`,
//! together with the log-log inflation factors `kappa_n`, the localization
//! scales `D_n`, and the fixed exponents `delta`, `m0`, `M0`, `mbar`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleParams {
    /// Spatial dimension, at least 3.
    pub d: usize,
    /// Hölder exponent in (0, 1/2].
    pub beta: f64,
    /// Scaling exponent.
    pub a: f64,
    /// Base scale, a positive multiple of five.
    pub l0: u64,
    /// Log-log constant in `kappa_n`.
    pub c0: f64,
    /// Enforce `a <= beta / (1000 d)`.
    #[serde(default)]
    pub strict_paper_mode: bool,
    /// Offset integer used instead of the computed one. Required when
    /// `12a + a^2 >= 1`, where no admissible value exists.
    #[serde(default)]
    pub mbar: Option<u32>,
}

impl Default for ScaleParams {
    fn default() -> Self {
        Self { d: 3, beta: 0.5, a: 0.5, l0: 25, c0: 0.5, strict_paper_mode: false, mbar: Some(1) }
    }
}

impl ScaleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.d < 3 {
            return bad(format!("dimension d = {} must be at least 3", self.d));
        }
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return bad(format!("beta = {} must lie in (0, 1/2]", self.beta));
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            return bad(format!("a = {} must lie in (0, 1)", self.a));
        }
        if self.strict_paper_mode && self.a > self.beta / (1000.0 * self.d as f64) {
            return bad(format!(
                "strict mode requires a <= beta/(1000 d) = {:e}, got {}",
                self.beta / (1000.0 * self.d as f64),
                self.a
            ));
        }
        if self.l0 < 5 || self.l0 % 5 != 0 {
            return bad(format!("L0 = {} must be a positive multiple of 5", self.l0));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return bad(format!("c0 = {} must be positive", self.c0));
        }
        if self.strict_paper_mode && self.mbar.is_some() {
            return bad("strict mode does not accept an mbar override".into());
        }
        Ok(())
    }
}

/// One row of the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub n: usize,
    pub l: u128,
    pub ell: u128,
    pub kappa: f64,
    pub kappa_tilde: f64,
    pub d_n: f64,
    pub d_tilde: f64,
}

impl ScaleRow {
    pub fn l_f64(&self) -> f64 {
        self.l as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleTable {
    pub params: ScaleParams,
    pub rows: Vec<ScaleRow>,
    /// Contraction exponent `5 beta / 32`.
    pub delta: f64,
    pub m0: u32,
    /// Minimal admissible `M0 = 100 d (1+a)^{m0+2}`.
    pub big_m0: f64,
    pub mbar: u32,
}

pub fn kappa(c0: f64, l: f64) -> f64 {
    (c0 * l.ln().ln().powi(2)).exp()
}

pub fn kappa_tilde(c0: f64, l: f64) -> f64 {
    (2.0 * c0 * l.ln().ln().powi(2)).exp()
}

/// Smallest integer strictly greater than `1 - log(1 - 12a - a^2) / log(1 + a)`.
pub fn compute_mbar(a: f64) -> Result<u32> {
    let arg = 1.0 - 12.0 * a - a * a;
    if !(a > 0.0) || arg <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "mbar needs 12a + a^2 < 1, got a = {a}"
        )));
    }
    let bound = 1.0 - arg.ln() / a.ln_1p();
    Ok(bound.floor() as u32 + 1)
}

/// Minimal integer `m0 >= 2` with `(1+a)^{m0-2} <= 100 < (1+a)^{m0-1}`.
pub fn compute_m0(a: f64) -> u32 {
    let base = 1.0 + a;
    let mut k = (100f64.ln() / base.ln()).floor().max(0.0) as i64;
    // floating-point guard at the boundary
    while k > 0 && base.powi(k as i32) > 100.0 {
        k -= 1;
    }
    while base.powi(k as i32 + 1) <= 100.0 {
        k += 1;
    }
    k as u32 + 2
}

pub fn build_schedule(params: &ScaleParams, n_max: usize) -> Result<ScaleTable> {
    params.validate()?;
    let mbar = match params.mbar {
        Some(m) => m,
        None => compute_mbar(params.a)?,
    };
    let m0 = compute_m0(params.a);
    let big_m0 = 100.0 * params.d as f64 * (1.0 + params.a).powi(m0 as i32 + 2);
    let delta = 5.0 * params.beta / 32.0;

    let mut rows = Vec::with_capacity(n_max + 1);
    let mut l: u128 = params.l0 as u128;
    for n in 0..=n_max {
        let lf = l as f64;
        let power = lf.powf(params.a);
        // exact powers such as 25^(1/2) must not round down to the previous multiple
        let ell = 5 * (power / 5.0 * (1.0 + 1e-12)).floor() as u128;
        if ell < 5 {
            return Err(Error::DegenerateSchedule { row: n, power, ell });
        }
        let kappa_n = kappa(params.c0, lf);
        let kappa_t = kappa_tilde(params.c0, lf);
        rows.push(ScaleRow {
            n,
            l,
            ell,
            kappa: kappa_n,
            kappa_tilde: kappa_t,
            d_n: lf * kappa_n,
            d_tilde: lf * kappa_t,
        });
        if n < n_max {
            l = l.checked_mul(ell).ok_or(Error::ScheduleOverflow { row: n + 1 })?;
        }
    }
    Ok(ScaleTable { params: params.clone(), rows, delta, m0, big_m0, mbar })
}

impl ScaleTable {
    pub fn row(&self, n: usize) -> Option<&ScaleRow> {
        self.rows.get(n)
    }

    pub fn l(&self, n: usize) -> f64 {
        self.rows[n].l_f64()
    }

    pub fn n_max(&self) -> usize {
        self.rows.len() - 1
    }

    /// Index `n - mbar`, when it exists.
    pub fn lagged(&self, n: usize) -> Option<usize> {
        n.checked_sub(self.mbar as usize)
    }

    /// The unique `n` with `L_n <= 1/epsilon < L_{n+1}`.
    pub fn locate_scale(&self, epsilon: f64) -> Result<usize> {
        let inverse = 1.0 / epsilon;
        let lower = self.l(0);
        let upper = self.l(self.n_max());
        // 1/epsilon computed in floating point may land a few ulps off an integer L_n
        let at_least = |l: f64| inverse >= l * (1.0 - 1e-12);
        if !(epsilon > 0.0) || !at_least(lower) || at_least(upper) {
            return Err(Error::OutOfRange { inverse, lower, upper });
        }
        let n = (0..self.n_max())
            .rev()
            .find(|&n| at_least(self.l(n)))
            .expect("lower bound checked");
        Ok(n)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "L_n", "ell_n", "kappa_n", "kappa_tilde_n", "D_n", "D_tilde_n"])?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.l.to_string(),
                r.ell.to_string(),
                format!("{:e}", r.kappa),
                format!("{:e}", r.kappa_tilde),
                format!("{:e}", r.d_n),
                format!("{:e}", r.d_tilde),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn desk(n_max: usize) -> ScaleTable {
        build_schedule(&ScaleParams::default(), n_max).unwrap()
    }

    #[test]
    fn strict_constants_collapse_at_desk_scale() {
        let p = ScaleParams {
            d: 3,
            beta: 0.5,
            a: 1.0 / 6000.0,
            l0: 100,
            c0: 0.5,
            strict_paper_mode: true,
            mbar: None,
        };
        assert!(matches!(build_schedule(&p, 1), Err(Error::DegenerateSchedule { row: 0, .. })));
        let relaxed = ScaleParams { strict_paper_mode: false, ..p };
        assert!(matches!(build_schedule(&relaxed, 1), Err(Error::DegenerateSchedule { .. })));
    }

    #[test]
    fn desk_recursion_by_hand() {
        let t = desk(4);
        let ls: Vec<u128> = t.rows.iter().map(|r| r.l).collect();
        assert_eq!(ls, vec![25, 125, 1250, 43750, 8968750]);
        let ells: Vec<u128> = t.rows.iter().map(|r| r.ell).collect();
        assert_eq!(ells, vec![5, 10, 35, 205, 2990]);
        assert!((t.rows[0].kappa - 1.980_438_161_932).abs() < 1e-9);
        assert!((t.delta - 5.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn strict_mode_bound() {
        let p = ScaleParams { a: 0.01, strict_paper_mode: true, mbar: None, ..Default::default() };
        assert!(matches!(build_schedule(&p, 1), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn invalid_params() {
        for p in [
            ScaleParams { d: 2, ..Default::default() },
            ScaleParams { beta: 0.6, ..Default::default() },
            ScaleParams { l0: 24, ..Default::default() },
            ScaleParams { c0: 0.0, ..Default::default() },
            ScaleParams { a: 0.5, mbar: None, ..Default::default() },
        ] {
            assert!(matches!(build_schedule(&p, 1), Err(Error::InvalidParams(_))), "{p:?}");
        }
    }

    #[test]
    fn mbar_values() {
        assert_eq!(compute_mbar(0.01).unwrap(), 14);
        assert_eq!(compute_mbar(0.05).unwrap(), 20);
        assert!(matches!(compute_mbar(0.1), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn m0_values() {
        assert_eq!(compute_m0(0.5), 13);
        assert_eq!(compute_m0(0.1), 50);
        assert_eq!(compute_m0(0.01), 464);
        let t = desk(1);
        assert_eq!(t.m0, 13);
        assert!((t.big_m0 - 300.0 * 1.5f64.powi(15)).abs() < 1e-6);
    }

    #[test]
    fn locate_scale_cases() {
        let t = desk(1);
        assert_eq!(t.locate_scale(1.0 / 25.0).unwrap(), 0);
        assert_eq!(t.locate_scale(1.0 / 124.0).unwrap(), 0);
        assert!(matches!(t.locate_scale(1.0 / 200.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(t.locate_scale(1.0 / 20.0), Err(Error::OutOfRange { .. })));
        let t = desk(3);
        assert_eq!(t.locate_scale(1.0 / 125.0).unwrap(), 1);
        assert_eq!(t.locate_scale(1.0 / 1300.0).unwrap(), 2);
    }

    #[test]
    fn csv_is_deterministic() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        desk(3).write_csv(&mut a).unwrap();
        desk(3).write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("n,L_n,ell_n,kappa_n,kappa_tilde_n,D_n,D_tilde_n\n0,25,5,"));
    }

    #[test]
    fn kappa_subpolynomial_for_large_scales() {
        let p = ScaleParams { a: 0.3, l0: 500, c0: 0.1, ..Default::default() };
        let t = build_schedule(&p, 6).unwrap();
        for r in t.rows.iter().filter(|r| r.l_f64() >= 1e6) {
            assert!(r.kappa <= r.l_f64().powf(0.1), "{r:?}");
        }
    }

    proptest! {
        #[test]
        fn rows_satisfy_identities(a in 0.05f64..0.9, k in 1u64..200, c0 in 0.01f64..1.0) {
            let l0 = 5 * k;
            let params = ScaleParams { a, l0, c0, ..Default::default() };
            match build_schedule(&params, 6) {
                Ok(t) => {
                    for w in t.rows.windows(2) {
                        let (r, s) = (&w[0], &w[1]);
                        prop_assert_eq!(s.l, r.ell * r.l);
                        let target = r.l_f64().powf(1.0 + a);
                        prop_assert!(0.5 * target <= s.l_f64() && s.l_f64() <= 2.0 * target);
                    }
                    for r in &t.rows {
                        prop_assert!(r.ell >= 5 && r.ell % 5 == 0);
                        let q = r.l_f64().powf(a) / 5.0;
                        let k = (r.ell / 5) as f64;
                        prop_assert!(k <= q * (1.0 + 1e-12) && q < k + 1.0);
                        prop_assert!((r.d_n - r.l_f64() * r.kappa).abs() <= 1e-9 * r.d_n);
                        prop_assert!((r.kappa_tilde - r.kappa * r.kappa).abs() <= 1e-9 * r.kappa_tilde);
                    }
                }
                Err(Error::DegenerateSchedule { .. }) => {
                    prop_assert!((l0 as f64).powf(a) < 5.0 + 1e-9);
                }
                Err(Error::ScheduleOverflow { .. }) => {}
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }

        #[test]
        fn locate_is_monotone(e1 in 1.0f64/43_000.0..1.0/25.0, e2 in 1.0f64/43_000.0..1.0/25.0) {
            let t = desk(3);
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(t.locate_scale(lo).unwrap() >= t.locate_scale(hi).unwrap());
        }
    }
}
