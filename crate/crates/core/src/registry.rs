//! Named closed-form functions for boundary data `f` and source terms `g`.
//!
//! Every entry carries its exact sup-norm and Lipschitz constant, so rate
//! envelopes that need `|f|_inf`, `sigma_f` or `|Dg|_inf` can be evaluated.
//!
//! Names:
//! - `zero`, `one`, `neg_one`, `const:<c>`
//! - `coord[:<i>[:<R>]]`: `R tanh(x_i / R)`, a smoothly clipped coordinate (default `i = 0`, `R = 10`)
//! - `radius[:<c>]`: `min(|x|, c)` (default `c = 10`)
//! - `bump[:<h>[:<w>]]`: `h exp(-|x|^2 / w^2)` (default `h = 1`, `w = 0.5`)

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct NamedFn {
    pub name: String,
    eval: PointFn,
    /// `sup |h|` over `R^d`.
    pub sup_norm: f64,
    /// `sup |Dh|` over `R^d`.
    pub lipschitz: f64,
    /// Profile `r -> h` when `h` depends on `|x|` only.
    pub radial: Option<RadialFn>,
}

impl fmt::Debug for NamedFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NamedFn")
            .field("name", &self.name)
            .field("sup_norm", &self.sup_norm)
            .field("lipschitz", &self.lipschitz)
            .field("radial", &self.radial.is_some())
            .finish()
    }
}

impl NamedFn {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn func(&self) -> PointFn {
        self.eval.clone()
    }

    /// Modulus of continuity `sigma(r) = min(Lip r, 2 |h|_inf)`.
    pub fn modulus(&self, r: f64) -> f64 {
        (self.lipschitz * r).min(2.0 * self.sup_norm)
    }

    pub fn is_constant(&self) -> bool {
        self.lipschitz == 0.0
    }

    pub fn is_zero(&self) -> bool {
        self.is_constant() && self.sup_norm == 0.0
    }

    pub fn constant(c: f64) -> Self {
        Self {
            name: format!("const:{c}"),
            eval: Arc::new(move |_| c),
            sup_norm: c.abs(),
            lipschitz: 0.0,
            radial: Some(Arc::new(move |_| c)),
        }
    }

    /// Wraps an arbitrary function with caller-declared bounds.
    pub fn from_fn(name: impl Into<String>, eval: PointFn, sup_norm: f64, lipschitz: f64) -> Self {
        Self { name: name.into(), eval, sup_norm, lipschitz, radial: None }
    }

    /// `x -> h(x) * scale`, used for linearity checks.
    pub fn scaled(&self, scale: f64) -> Self {
        let inner = self.eval.clone();
        let radial = self.radial.clone().map(|r| -> RadialFn { Arc::new(move |t| scale * r(t)) });
        Self {
            name: format!("{scale}*{}", self.name),
            eval: Arc::new(move |x| scale * inner(x)),
            sup_norm: scale.abs() * self.sup_norm,
            lipschitz: scale.abs() * self.lipschitz,
            radial,
        }
    }

    pub fn sum(&self, other: &NamedFn) -> Self {
        let (a, b) = (self.eval.clone(), other.eval.clone());
        let radial = match (&self.radial, &other.radial) {
            (Some(p), Some(q)) => {
                let (p, q) = (p.clone(), q.clone());
                Some(Arc::new(move |t| p(t) + q(t)) as RadialFn)
            }
            _ => None,
        };
        Self {
            name: format!("{}+{}", self.name, other.name),
            eval: Arc::new(move |x| a(x) + b(x)),
            sup_norm: self.sup_norm + other.sup_norm,
            lipschitz: self.lipschitz + other.lipschitz,
            radial,
        }
    }
}

fn arg(parts: &[&str], k: usize, default: f64, name: &str) -> Result<f64> {
    match parts.get(k) {
        None => Ok(default),
        Some(s) => s
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad parameter {s:?} in function {name:?}"))),
    }
}

/// Looks up a registry function by name for dimension `d`.
pub fn lookup(name: &str, d: usize) -> Result<NamedFn> {
    let parts: Vec<&str> = name.split(':').collect();
    let mut out = match parts[0] {
        "zero" => NamedFn::constant(0.0),
        "one" => NamedFn::constant(1.0),
        "neg_one" => NamedFn::constant(-1.0),
        "const" => {
            if parts.len() != 2 {
                return Err(Error::Config(format!("{name:?}: expected const:<value>")));
            }
            NamedFn::constant(arg(&parts, 1, 0.0, name)?)
        }
        "coord" => {
            let i = arg(&parts, 1, 0.0, name)? as usize;
            let r = arg(&parts, 2, 10.0, name)?;
            if i >= d || !(r > 0.0) {
                return Err(Error::Config(format!("{name:?}: need index < {d} and positive clip")));
            }
            NamedFn {
                name: name.to_string(),
                eval: Arc::new(move |x| r * (x[i] / r).tanh()),
                sup_norm: r,
                lipschitz: 1.0,
                radial: None,
            }
        }
        "radius" => {
            let c = arg(&parts, 1, 10.0, name)?;
            if !(c > 0.0) {
                return Err(Error::Config(format!("{name:?}: clip must be positive")));
            }
            NamedFn {
                name: name.to_string(),
                eval: Arc::new(move |x| x.iter().map(|v| v * v).sum::<f64>().sqrt().min(c)),
                sup_norm: c,
                lipschitz: 1.0,
                radial: Some(Arc::new(move |r| r.min(c))),
            }
        }
        "bump" => {
            let h = arg(&parts, 1, 1.0, name)?;
            let w = arg(&parts, 2, 0.5, name)?;
            if !(w > 0.0) {
                return Err(Error::Config(format!("{name:?}: width must be positive")));
            }
            NamedFn {
                name: name.to_string(),
                eval: Arc::new(move |x| h * (-x.iter().map(|v| v * v).sum::<f64>() / (w * w)).exp()),
                sup_norm: h.abs(),
                // max of r exp(-r^2/w^2) * 2/w^2 at r = w / sqrt(2)
                lipschitz: h.abs() * (2.0f64 / std::f64::consts::E).sqrt() / w,
                radial: Some(Arc::new(move |r| h * (-r * r / (w * w)).exp())),
            }
        }
        other => return Err(Error::Config(format!("unknown function {other:?}"))),
    };
    out.name = name.to_string();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        assert_eq!(lookup("neg_one", 3).unwrap().eval(&[1.0, 2.0, 3.0]), -1.0);
        let c = lookup("const:2.5", 3).unwrap();
        assert_eq!(c.eval(&[0.0; 3]), 2.5);
        assert!(c.is_constant());
        assert!(lookup("zero", 3).unwrap().is_zero());
        assert!(lookup("const", 3).is_err());
        assert!(lookup("nope", 3).is_err());
        assert!(lookup("coord:3", 3).is_err());
    }

    #[test]
    fn declared_constants_hold_on_samples() {
        for name in ["coord", "coord:2:1.5", "radius:2", "bump:3:0.7", "bump:-1:2"] {
            let h = lookup(name, 3).unwrap();
            let mut worst_sup: f64 = 0.0;
            let mut worst_lip: f64 = 0.0;
            for k in 0..4000 {
                let t = k as f64 * 0.37;
                let x = [3.0 * t.sin(), 2.0 * (1.3 * t).cos(), (0.7 * t).sin() * 4.0];
                let y = [x[0] + 1e-3 * t.cos(), x[1] - 2e-3, x[2] + 1e-3];
                let dist = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + 1e-6).sqrt();
                worst_sup = worst_sup.max(h.eval(&x).abs());
                worst_lip = worst_lip.max((h.eval(&x) - h.eval(&y)).abs() / dist);
            }
            assert!(worst_sup <= h.sup_norm, "{name}");
            assert!(worst_lip <= h.lipschitz * (1.0 + 1e-6), "{name}: {worst_lip} vs {}", h.lipschitz);
            if let Some(r) = &h.radial {
                let x = [0.3, -0.4, 1.2];
                let norm = (0.09f64 + 0.16 + 1.44).sqrt();
                assert!((r(norm) - h.eval(&x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bump_lipschitz_is_attained() {
        let h = lookup("bump:1:0.5", 3).unwrap();
        let r = 0.5 / 2f64.sqrt();
        let e = 1e-6;
        let slope = (h.eval(&[r - e, 0.0, 0.0]) - h.eval(&[r + e, 0.0, 0.0])) / (2.0 * e);
        assert!((slope - h.lipschitz).abs() < 1e-6);
    }

    #[test]
    fn combinators() {
        let a = lookup("coord", 3).unwrap();
        let b = lookup("bump", 3).unwrap();
        let s = a.sum(&b.scaled(2.0));
        let x = [0.2, 0.1, -0.3];
        assert!((s.eval(&x) - a.eval(&x) - 2.0 * b.eval(&x)).abs() < 1e-15);
        assert_eq!(s.sup_norm, 12.0);
        assert!(s.radial.is_none());
    }
}
