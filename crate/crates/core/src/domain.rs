//! Bounded domains with an exterior ball condition.
//!
//! Balls and annuli are centered at the origin and handled analytically.
//! Anything else goes through a signed-distance oracle with a declared
//! exterior-ball radius.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SignedDistance = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Signed-distance domain `{ scale * phi(x / scale) - offset < 0 }`.
#[derive(Clone)]
pub struct OracleShape {
    pub name: String,
    phi: SignedDistance,
    scale: f64,
    offset: f64,
}

impl OracleShape {
    pub fn new(name: impl Into<String>, phi: SignedDistance) -> Self {
        Self { name: name.into(), phi, scale: 1.0, offset: 0.0 }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().map(|v| v / self.scale).collect();
        self.scale * (self.phi)(&y) - self.offset
    }
}

impl fmt::Debug for OracleShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleShape")
            .field("name", &self.name)
            .field("scale", &self.scale)
            .field("offset", &self.offset)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum Shape {
    Ball { radius: f64 },
    Annulus { inner: f64, outer: f64 },
    Oracle(OracleShape),
}

#[derive(Debug, Clone)]
pub struct Domain {
    pub shape: Shape,
    /// Exterior ball radius.
    pub r0: f64,
    /// `U` is contained in the ball of this radius.
    pub bounding_radius: f64,
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Domain {
    /// Ball of the given radius; the exterior ball radius defaults to the radius.
    pub fn ball(radius: f64) -> Self {
        Self { shape: Shape::Ball { radius }, r0: radius, bounding_radius: radius }
    }

    /// Annulus `inner < |x| < outer`; the hole limits the exterior ball radius to `inner`.
    pub fn annulus(inner: f64, outer: f64) -> Result<Self> {
        if !(0.0 < inner && inner < outer) {
            return Err(Error::InvalidRadii(format!("annulus needs 0 < {inner} < {outer}")));
        }
        Ok(Self { shape: Shape::Annulus { inner, outer }, r0: inner, bounding_radius: outer })
    }

    pub fn with_r0(mut self, r0: f64) -> Self {
        self.r0 = r0;
        self
    }

    pub fn oracle(shape: OracleShape, r0: f64, bounding_radius: f64) -> Self {
        Self { shape: Shape::Oracle(shape), r0, bounding_radius }
    }

    /// Box `|x_i| < half_width_i` with corners rounded by `rounding`.
    pub fn rounded_box(half_widths: Vec<f64>, rounding: f64, r0: f64) -> Self {
        let bound = half_widths.iter().map(|h| (h + rounding).powi(2)).sum::<f64>().sqrt();
        let phi: SignedDistance = Arc::new(move |x: &[f64]| {
            let mut outside = 0.0;
            let mut inside = f64::NEG_INFINITY;
            for (xi, hi) in x.iter().zip(&half_widths) {
                let q = xi.abs() - hi;
                outside += q.max(0.0).powi(2);
                inside = inside.max(q);
            }
            outside.sqrt() + inside.min(0.0) - rounding
        });
        Self::oracle(OracleShape::new("rounded_box", phi), r0, bound)
    }

    /// Signed distance: negative inside, positive outside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball { radius } => norm(x) - radius,
            Shape::Annulus { inner, outer } => {
                let r = norm(x);
                (inner - r).max(r - outer)
            }
            Shape::Oracle(o) => o.eval(x),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// `d(x, U^c)`.
    pub fn dist_to_complement(&self, x: &[f64]) -> f64 {
        (-self.signed_distance(x)).max(0.0)
    }

    /// `d(x, U)`.
    pub fn dist_to_domain(&self, x: &[f64]) -> f64 {
        self.signed_distance(x).max(0.0)
    }

    /// The inflation `U_delta = { d(x, U) < delta }`.
    pub fn enlarge(&self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < self.r0) {
            return Err(Error::InvalidDelta { delta, limit: self.r0 });
        }
        let shape = match &self.shape {
            Shape::Ball { radius } => Shape::Ball { radius: radius + delta },
            Shape::Annulus { inner, outer } => {
                Shape::Annulus { inner: inner - delta, outer: outer + delta }
            }
            Shape::Oracle(o) => {
                let mut o = o.clone();
                o.offset += delta;
                Shape::Oracle(o)
            }
        };
        Ok(Self { shape, r0: self.r0 - delta, bounding_radius: self.bounding_radius + delta })
    }

    /// The set `factor * U`; use `factor = 1/epsilon` for `U/epsilon`.
    pub fn dilate(&self, factor: f64) -> Self {
        assert!(factor > 0.0, "dilation factor must be positive");
        let shape = match &self.shape {
            Shape::Ball { radius } => Shape::Ball { radius: radius * factor },
            Shape::Annulus { inner, outer } => {
                Shape::Annulus { inner: inner * factor, outer: outer * factor }
            }
            Shape::Oracle(o) => {
                let mut o = o.clone();
                o.scale *= factor;
                o.offset *= factor;
                Shape::Oracle(o)
            }
        };
        Self { shape, r0: self.r0 * factor, bounding_radius: self.bounding_radius * factor }
    }

    /// First `t in (0, max_t]` at which `x + t * dir` leaves `U`, for a unit `dir`.
    pub fn exit_along(&self, x: &[f64], dir: &[f64], max_t: f64) -> Option<f64> {
        let at = |t: f64| -> Vec<f64> { x.iter().zip(dir).map(|(a, b)| a + t * b).collect() };
        if self.contains(&at(max_t)) {
            // oracle domains may still be thin; analytic shapes cannot re-enter
            if !matches!(self.shape, Shape::Oracle(_)) {
                return None;
            }
        }
        let xd: f64 = x.iter().zip(dir).map(|(a, b)| a * b).sum();
        let xx: f64 = x.iter().map(|a| a * a).sum();
        // roots of |x + t dir|^2 = r^2
        let hits = |r: f64| -> [Option<f64>; 2] {
            let disc = xd * xd - (xx - r * r);
            if disc < 0.0 {
                return [None, None];
            }
            let s = disc.sqrt();
            [Some(-xd - s), Some(-xd + s)]
        };
        let first_positive = |cands: &[Option<f64>]| {
            cands
                .iter()
                .flatten()
                .copied()
                .filter(|&t| t > 0.0 && t <= max_t)
                .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
        };
        match &self.shape {
            Shape::Ball { radius } => first_positive(&hits(*radius)),
            Shape::Annulus { inner, outer } => {
                let [a, b] = hits(*inner);
                let [c, e] = hits(*outer);
                first_positive(&[a, b, c, e])
            }
            Shape::Oracle(_) => {
                let steps = 64;
                let mut lo = 0.0;
                for k in 1..=steps {
                    let t = max_t * k as f64 / steps as f64;
                    if !self.contains(&at(t)) {
                        let mut hi = t;
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            if self.contains(&at(mid)) {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        return Some(hi);
                    }
                    lo = t;
                }
                None
            }
        }
    }

    /// Checks the exterior ball condition at sampled boundary points: the ball
    /// of radius `r0` touching `x` from outside must not meet `U`.
    pub fn certify_exterior_ball(&self, boundary_points: &[Vec<f64>], tol: f64) -> bool {
        let h = 1e-6;
        boundary_points.iter().all(|x| {
            let mut grad: Vec<f64> = (0..x.len())
                .map(|i| {
                    let mut p = x.clone();
                    let mut m = x.clone();
                    p[i] += h;
                    m[i] -= h;
                    (self.signed_distance(&p) - self.signed_distance(&m)) / (2.0 * h)
                })
                .collect();
            let g = norm(&grad);
            if g == 0.0 {
                return false;
            }
            grad.iter_mut().for_each(|v| *v /= g);
            let center: Vec<f64> = x.iter().zip(&grad).map(|(a, n)| a + self.r0 * n).collect();
            // every point of U is at least r0 from the center
            self.signed_distance(&center) >= self.r0 - tol
                && match &self.shape {
                    Shape::Annulus { inner, .. } => norm(&center) + self.r0 <= *inner + tol
                        || norm(&center) - self.r0 >= self.bounding_radius - tol,
                    _ => true,
                }
        })
    }
}

/// Domain description used in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Ball { radius: f64, r0: Option<f64> },
    Annulus { inner: f64, outer: f64, r0: Option<f64> },
    RoundedBox { half_widths: Vec<f64>, rounding: f64, r0: f64 },
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec::Ball { radius: 1.0, r0: None }
    }
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        match self {
            DomainSpec::Ball { radius, r0 } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidRadii(format!("ball radius {radius}")));
                }
                let d = Domain::ball(*radius);
                Ok(match r0 {
                    Some(r) => d.with_r0(*r),
                    None => d,
                })
            }
            DomainSpec::Annulus { inner, outer, r0 } => {
                let d = Domain::annulus(*inner, *outer)?;
                Ok(match r0 {
                    Some(r) => d.with_r0(*r),
                    None => d,
                })
            }
            DomainSpec::RoundedBox { half_widths, rounding, r0 } => {
                Ok(Domain::rounded_box(half_widths.clone(), *rounding, *r0))
            }
        }
    }
}
