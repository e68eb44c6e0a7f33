//! Closed-form Brownian quantities and the homogenized Dirichlet problem.
//!
//! Conventions: `W` with variance `alpha` is `sqrt(alpha) B_t`, with generator
//! `(alpha/2) Delta` and transition density of covariance `alpha t I`. The
//! mean exit time `u` from a domain solves `(alpha/2) Delta u = -1`, `u = 0`
//! on the boundary.

use std::io::Write;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::domain::{Domain, Shape};
use crate::error::{Error, Result};
use crate::registry::{NamedFn, RadialFn};

fn legendre(n: usize) -> GaussLegendre {
    GaussLegendre::new(NonZeroUsize::new(n).expect("positive degree"))
}

/// Mean exit time of `sqrt(alpha) B` from the annulus `r1 < |x| < r2`:
/// `u(r) = c1 + c2 r^(2-d) - r^2 / (d alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnulusExit {
    pub r1: f64,
    pub r2: f64,
    pub alpha: f64,
    pub d: usize,
    pub c1: f64,
    pub c2: f64,
}

impl AnnulusExit {
    pub fn new(r1: f64, r2: f64, alpha: f64, d: usize) -> Result<Self> {
        if !(0.0 < r1 && r1 < r2 && r2.is_finite()) {
            return Err(Error::InvalidRadii(format!("need 0 < r1 < r2, got r1 = {r1}, r2 = {r2}")));
        }
        if d < 3 || !(alpha > 0.0) {
            return Err(Error::InvalidParams(format!("need d >= 3 and alpha > 0, got d = {d}, alpha = {alpha}")));
        }
        let p = 2.0 - d as f64;
        let k = 1.0 / (d as f64 * alpha);
        let denom = r2.powf(p) - r1.powf(p);
        let c1 = k * (r1 * r1 * r2.powf(p) - r2 * r2 * r1.powf(p)) / denom;
        let c2 = k * (r2 * r2 - r1 * r1) / denom;
        Ok(Self { r1, r2, alpha, d, c1, c2 })
    }

    /// Unchecked evaluation, valid on `[r1, r2]`.
    pub fn value(&self, r: f64) -> f64 {
        let p = 2.0 - self.d as f64;
        self.c1 + self.c2 * r.powf(p) - r * r / (self.d as f64 * self.alpha)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let p = 2.0 - self.d as f64;
        self.c2 * p * r.powf(p - 1.0) - 2.0 * r / (self.d as f64 * self.alpha)
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        let p = 2.0 - self.d as f64;
        self.c2 * p * (p - 1.0) * r.powf(p - 2.0) - 2.0 / (self.d as f64 * self.alpha)
    }

    /// Constant `C` with `u(r) <= C (r - r1)` on `[r1, r2]`, from the Taylor
    /// expansion at `r1` with the negative part of `u''` dropped.
    pub fn linear_constant(&self) -> f64 {
        let d = self.d as f64;
        let curvature = self.c2.abs() * (d - 1.0) * (d - 2.0) * self.r1.powf(-d);
        self.derivative(self.r1) + 0.5 * curvature * (self.r2 - self.r1)
    }
}

/// Expected exit time from the annulus `(r1, r2)` started at radius `r`.
pub fn annulus_mean_exit(r1: f64, r2: f64, alpha: f64, d: usize, r: f64) -> Result<f64> {
    let a = AnnulusExit::new(r1, r2, alpha, d)?;
    if !(r1..=r2).contains(&r) {
        return Err(Error::InvalidRadii(format!("start radius {r} outside [{r1}, {r2}]")));
    }
    Ok(a.value(r).max(0.0))
}

/// Gaussian transition density with covariance `alpha t I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatKernel {
    pub alpha: f64,
    pub t: f64,
    pub d: usize,
}

impl HeatKernel {
    pub fn new(alpha: f64, t: f64, d: usize) -> Self {
        Self { alpha, t, d }
    }

    pub fn variance(&self) -> f64 {
        self.alpha * self.t
    }

    pub fn density(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
        self.radial_density(r2.sqrt())
    }

    pub fn radial_density(&self, r: f64) -> f64 {
        let v = self.variance();
        (2.0 * std::f64::consts::PI * v).powf(-(self.d as f64) / 2.0) * (-r * r / (2.0 * v)).exp()
    }

    /// Mass of the kernel on the ball of radius `radius` around its center.
    pub fn mass_within(&self, radius: f64) -> f64 {
        let d = self.d as f64;
        let sphere = 2.0 * std::f64::consts::PI.powf(d / 2.0) / gamma(d / 2.0);
        let sigma = self.variance().sqrt();
        // split at multiples of sigma so the Gaussian tail is resolved
        let quad = legendre(40);
        let pieces = (radius / sigma).ceil().max(1.0) as usize;
        let step = radius / pieces as f64;
        (0..pieces)
            .map(|k| {
                let (a, b) = (k as f64 * step, (k + 1) as f64 * step);
                quad.integrate(a, b, |r| sphere * r.powf(d - 1.0) * self.radial_density(r))
            })
            .sum()
    }
}

/// Certified bound on the mean exit time near the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryBound {
    pub delta: f64,
    /// Bound on `sup E tau` over `d(x, boundary) <= delta`.
    pub bound: f64,
    /// Linear constant `C`: `bound <= C * 2 delta`.
    pub slope: f64,
    pub r1: f64,
    pub r2: f64,
}

/// Bound on `sup_{d(x, dU) <= delta} E tau_U` for `sqrt(alpha) B`.
///
/// A start point within `delta` of `dU` is within `2 delta` of the boundary
/// of `U_delta`, whose exterior balls have radius `r1 = r0 - delta`. The exit
/// time is dominated by the exit from the annulus between that ball and a
/// sphere of radius `r2 = 2 R_U + r0 + delta` around the same center.
pub fn boundary_exit_linear_bound(domain: &Domain, delta: f64, alpha: f64, d: usize) -> Result<BoundaryBound> {
    let limit = domain.r0 / 2.0;
    if !(delta > 0.0 && delta < limit) {
        return Err(Error::InvalidDelta { delta, limit });
    }
    let r1 = domain.r0 - delta;
    let r2 = 2.0 * domain.bounding_radius + domain.r0 + delta;
    let annulus = AnnulusExit::new(r1, r2, alpha, d)?;
    Ok(BoundaryBound {
        delta,
        bound: annulus.value(r1 + 2.0 * delta),
        slope: annulus.linear_constant(),
        r1,
        r2,
    })
}

/// The same bound for the dilated domain `U / epsilon` with a microscopic
/// boundary distance `delta`: exit times scale by `epsilon^-2`.
pub fn boundary_exit_bound_dilated(
    domain: &Domain,
    epsilon: f64,
    delta: f64,
    alpha: f64,
    d: usize,
) -> Result<BoundaryBound> {
    let base = boundary_exit_linear_bound(domain, epsilon * delta, alpha, d)?;
    let s = epsilon * epsilon;
    Ok(BoundaryBound {
        delta,
        bound: base.bound / s,
        slope: base.slope / epsilon,
        r1: base.r1 / epsilon,
        r2: base.r2 / epsilon,
    })
}

/// Exact radial solution of `(alpha/2) Delta u = g(|x|)` on a ball or annulus
/// with constant boundary values on each sphere.
#[derive(Clone)]
pub struct RadialSolution {
    pub inner: Option<f64>,
    pub outer: f64,
    pub alpha: f64,
    pub d: usize,
    f_inner: f64,
    f_outer: f64,
    g: RadialFn,
    flux: f64,
    quad: GaussLegendre,
}

impl std::fmt::Debug for RadialSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialSolution")
            .field("inner", &self.inner)
            .field("outer", &self.outer)
            .field("alpha", &self.alpha)
            .finish()
    }
}

impl RadialSolution {
    pub fn new(
        inner: Option<f64>,
        outer: f64,
        alpha: f64,
        d: usize,
        g: RadialFn,
        f_inner: f64,
        f_outer: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParams(format!("alpha = {alpha} must be positive")));
        }
        let mut s = Self { inner, outer, alpha, d, f_inner, f_outer, g, flux: 0.0, quad: legendre(48) };
        if let Some(r1) = inner {
            let p = 1.0 - d as f64;
            let particular = s.quad.integrate(r1, outer, |t| t.powf(p) * s.source_integral(t));
            let homogeneous = s.quad.integrate(r1, outer, |t| t.powf(p));
            s.flux = (f_outer - f_inner - particular) / homogeneous;
        }
        Ok(s)
    }

    /// `(2/alpha) int_a^s t^(d-1) g(t) dt` with `a` the inner radius or 0.
    fn source_integral(&self, s: f64) -> f64 {
        let a = self.inner.unwrap_or(0.0);
        let p = self.d as f64 - 1.0;
        2.0 / self.alpha * self.quad.integrate(a, s, |t| t.powf(p) * (self.g)(t))
    }

    pub fn derivative(&self, r: f64) -> f64 {
        r.powf(1.0 - self.d as f64) * (self.source_integral(r) + self.flux)
    }

    pub fn value(&self, r: f64) -> f64 {
        match self.inner {
            None => self.f_outer - self.quad.integrate(r, self.outer, |s| self.derivative(s)),
            Some(r1) => self.f_inner + self.quad.integrate(r1, r, |s| self.derivative(s)),
        }
    }

    pub fn radii(&self, count: usize) -> Vec<f64> {
        let a = self.inner.unwrap_or(0.0);
        (0..count).map(|k| a + (self.outer - a) * k as f64 / (count - 1) as f64).collect()
    }
}

/// Finite-difference solution on a Cartesian grid.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub h: f64,
    pub d: usize,
    /// Nodes per axis; node `k` on each axis sits at `(k - half) * h`.
    pub per_axis: usize,
    half: i64,
    /// Value at every node; nodes outside `U` carry the boundary data.
    pub values: Vec<f64>,
    pub interior: Vec<bool>,
    /// Max-norm residual of the discrete equations at the returned solution.
    pub residual: f64,
    pub iterations: usize,
}

impl GridSolution {
    fn coords(&self, mut index: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        for xi in x.iter_mut() {
            let k = (index % self.per_axis) as i64;
            index /= self.per_axis;
            *xi = (k - self.half) as f64 * self.h;
        }
        x
    }

    pub fn interior_points(&self) -> Vec<(Vec<f64>, f64)> {
        (0..self.values.len())
            .filter(|&i| self.interior[i])
            .map(|i| (self.coords(i), self.values[i]))
            .collect()
    }

    /// Multilinear interpolation inside the grid.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.d;
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for i in 0..d {
            let t = x[i] / self.h + self.half as f64;
            let k = t.floor().clamp(0.0, (self.per_axis - 2) as f64);
            base[i] = k as usize;
            frac[i] = (t - k).clamp(0.0, 1.0);
        }
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            let mut stride = 1;
            for i in 0..d {
                let bit = (corner >> i) & 1;
                w *= if bit == 1 { frac[i] } else { 1.0 - frac[i] };
                idx += (base[i] + bit) * stride;
                stride *= self.per_axis;
            }
            if w != 0.0 {
                total += w * self.values[idx];
            }
        }
        total
    }
}

#[derive(Debug, Clone)]
pub enum HomogenizedSolution {
    Radial(RadialSolution),
    Grid(GridSolution),
}

impl HomogenizedSolution {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            HomogenizedSolution::Radial(s) => s.value(x.iter().map(|v| v * v).sum::<f64>().sqrt()),
            HomogenizedSolution::Grid(g) => g.eval(x),
        }
    }

    /// Largest value over the solution's own sample points.
    pub fn sup(&self) -> f64 {
        self.samples().into_iter().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    /// `(point, value)` pairs: radii on the first axis, or interior grid nodes.
    pub fn samples(&self) -> Vec<(Vec<f64>, f64)> {
        match self {
            HomogenizedSolution::Radial(s) => s
                .radii(201)
                .into_iter()
                .map(|r| {
                    let mut x = vec![0.0; s.d];
                    x[0] = r;
                    (x, s.value(r))
                })
                .collect(),
            HomogenizedSolution::Grid(g) => g.interior_points(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self {
            HomogenizedSolution::Radial(s) => {
                w.write_record(["r", "value"])?;
                for r in s.radii(201) {
                    w.write_record([format!("{r:e}"), format!("{:e}", s.value(r))])?;
                }
            }
            HomogenizedSolution::Grid(g) => {
                let mut header: Vec<String> = (0..g.d).map(|i| format!("x{i}")).collect();
                header.push("value".into());
                w.write_record(&header)?;
                for (x, v) in g.interior_points() {
                    let row: Vec<String> = x.iter().chain(std::iter::once(&v)).map(|t| format!("{t:e}")).collect();
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves `(alpha_bar/2) Delta u = g` in `U`, `u = f` on `dU`.
///
/// Balls and annuli with radial data use the exact radial solve; anything
/// else falls back to [`solve_grid`] with spacing `h`.
pub fn solve_homogenized(
    domain: &Domain,
    alpha_bar: f64,
    g: &NamedFn,
    f: &NamedFn,
    d: usize,
    h: f64,
) -> Result<HomogenizedSolution> {
    if let (Some(gr), Some(fr)) = (&g.radial, &f.radial) {
        match domain.shape {
            Shape::Ball { radius } => {
                return RadialSolution::new(None, radius, alpha_bar, d, gr.clone(), 0.0, fr(radius))
                    .map(HomogenizedSolution::Radial)
            }
            Shape::Annulus { inner, outer } => {
                return RadialSolution::new(Some(inner), outer, alpha_bar, d, gr.clone(), fr(inner), fr(outer))
                    .map(HomogenizedSolution::Radial)
            }
            Shape::Oracle(_) => {}
        }
    }
    solve_grid(domain, alpha_bar, g, f, d, h).map(HomogenizedSolution::Grid)
}

struct Row {
    diag: f64,
    off: Vec<(usize, f64)>,
}

/// Shortley-Weller finite differences: at cut cells the stencil arm is
/// shortened to the boundary crossing and `f` is imposed there.
pub fn solve_grid(domain: &Domain, alpha_bar: f64, g: &NamedFn, f: &NamedFn, d: usize, h: f64) -> Result<GridSolution> {
    if !(h > 0.0 && alpha_bar > 0.0) {
        return Err(Error::InvalidParams("grid spacing and alpha must be positive".into()));
    }
    let half = (domain.bounding_radius / h).ceil() as i64 + 1;
    let per_axis = (2 * half + 1) as usize;
    let total = per_axis
        .checked_pow(d as u32)
        .filter(|&t| t <= 50_000_000)
        .ok_or_else(|| Error::SolverFailure(format!("grid with {per_axis}^{d} nodes is too large")))?;

    let coords = |mut index: usize| -> Vec<f64> {
        let mut x = vec![0.0; d];
        for xi in x.iter_mut() {
            let k = (index % per_axis) as i64;
            index /= per_axis;
            *xi = (k - half) as f64 * h;
        }
        x
    };
    let mut values = vec![0.0; total];
    let mut interior = vec![false; total];
    let mut unknown = vec![usize::MAX; total];
    let mut nodes = Vec::new();
    for i in 0..total {
        let x = coords(i);
        if domain.contains(&x) {
            interior[i] = true;
            unknown[i] = nodes.len();
            nodes.push(i);
        } else {
            values[i] = f.eval(&x);
        }
    }
    if nodes.is_empty() {
        return Err(Error::SolverFailure("no grid node lies inside the domain".into()));
    }

    let mut rows = Vec::with_capacity(nodes.len());
    let mut rhs = Vec::with_capacity(nodes.len());
    for &node in &nodes {
        let x = coords(node);
        let mut row = Row { diag: 0.0, off: Vec::with_capacity(2 * d) };
        let mut b = -g.eval(&x);
        let mut stride = 1usize;
        for axis in 0..d {
            let mut arms = [(h, None, 0.0); 2];
            for (slot, sign) in [(0usize, -1.0f64), (1, 1.0)] {
                let neighbor = if sign > 0.0 { node + stride } else { node - stride };
                if interior[neighbor] {
                    arms[slot] = (h, Some(unknown[neighbor]), 0.0);
                } else {
                    let mut dir = vec![0.0; d];
                    dir[axis] = sign;
                    let theta = domain.exit_along(&x, &dir, h).unwrap_or(h).clamp(1e-6 * h, h);
                    let mut p = x.clone();
                    p[axis] += sign * theta;
                    arms[slot] = (theta, None, f.eval(&p));
                }
            }
            let (hl, hr) = (arms[0].0, arms[1].0);
            let scale = alpha_bar / (hl + hr);
            for &(len, col, boundary) in &arms {
                let c = scale / len;
                row.diag += c;
                match col {
                    Some(j) => row.off.push((j, -c)),
                    None => b += c * boundary,
                }
            }
            stride *= per_axis;
        }
        // unit diagonal: residuals are then measured in units of u
        for (_, c) in row.off.iter_mut() {
            *c /= row.diag;
        }
        b /= row.diag;
        row.diag = 1.0;
        rows.push(row);
        rhs.push(b);
    }

    let apply = |u: &[f64], out: &mut [f64]| {
        for (k, row) in rows.iter().enumerate() {
            let mut s = row.diag * u[k];
            for &(j, c) in &row.off {
                s += c * u[j];
            }
            out[k] = s;
        }
    };
    let (u, iterations) = bicgstab(&apply, &rows.iter().map(|r| r.diag).collect::<Vec<_>>(), &rhs)?;
    let mut check = vec![0.0; u.len()];
    apply(&u, &mut check);
    let residual = check.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if !(residual < 1e-8) {
        return Err(Error::SolverFailure(format!("residual {residual:e} after {iterations} iterations")));
    }
    for (k, &node) in nodes.iter().enumerate() {
        values[node] = u[k];
    }
    Ok(GridSolution { h, d, per_axis, half, values, interior, residual, iterations })
}

/// Jacobi-preconditioned BiCGSTAB.
fn bicgstab(apply: &dyn Fn(&[f64], &mut [f64]), diag: &[f64], b: &[f64]) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(p, q)| p * q).sum::<f64>();
    let inf = |a: &[f64]| a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let precond = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = v[i] / diag[i];
        }
    };
    let target = 1e-11 * inf(b).max(1.0);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let max_iter = 20 * n + 1000;
    for it in 0..max_iter {
        if inf(&r) <= target {
            return Ok((x, it));
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::SolverFailure(format!("BiCGSTAB breakdown at iteration {it}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut y);
        apply(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if inf(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok((x, it + 1));
        }
        precond(&s, &mut z);
        apply(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
    }
    Err(Error::SolverFailure(format!("BiCGSTAB did not converge in {max_iter} iterations")))
}

/// Envelope for replacing `alpha_bar` by `alpha_n` in the homogenized problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaGap {
    /// `(2 / alpha_bar) |g|_inf |alpha_n - alpha_bar| sup E tau_U`.
    pub envelope: f64,
    /// `sup |u_bar - u_n|` from direct solves with `f = 0`.
    pub direct_gap: f64,
    pub sup_exit_time: f64,
}

pub fn alpha_perturbation_gap(
    domain: &Domain,
    alpha_bar: f64,
    alpha_n: f64,
    g: &NamedFn,
    d: usize,
    h: f64,
) -> Result<AlphaGap> {
    let zero = NamedFn::constant(0.0);
    let exit = solve_homogenized(domain, alpha_bar, &NamedFn::constant(-1.0), &zero, d, h)?;
    let sup_exit_time = exit.sup();
    let envelope = 2.0 / alpha_bar * g.sup_norm * (alpha_n - alpha_bar).abs() * sup_exit_time;
    let bar = solve_homogenized(domain, alpha_bar, g, &zero, d, h)?;
    let direct_gap = if alpha_n == alpha_bar {
        0.0
    } else {
        let n = solve_homogenized(domain, alpha_n, g, &zero, d, h)?;
        bar.samples()
            .iter()
            .map(|(x, v)| (v - n.eval(x)).abs())
            .fold(0.0, f64::max)
    };
    Ok(AlphaGap { envelope, direct_gap, sup_exit_time })
}
