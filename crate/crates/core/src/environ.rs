//! Random environments `(A(x), b(x))`.
//!
//! Coefficients are built from i.i.d. Gaussian noise attached to the nodes of
//! a randomly shifted lattice `s Z^d + u`, smoothed by the compactly supported
//! radial kernel `K(y) = (1 - |y|^2 / rho^2)^3`:
//!
//! ```text
//! b_i(x) = eta / sqrt(d) * tanh( sum_z xi_{z,i} K(x - s z - u) )
//! M(x)   = sum_z K(x - s z - u) (G_z + G_z^T) / sqrt(2)
//! A(x)   = I + eta / sqrt(d) * tanh(M(x))        (tanh applied spectrally)
//! ```
//!
//! Both clamps carry the factor `1 / sqrt(d)` so that the Euclidean norm of
//! `b` and the Frobenius norm of `A - I` stay below `eta`.
//!
//! A point only sees nodes within `rho`, so values at points more than
//! `2 rho` apart are driven by disjoint noise. Noise is regenerated on demand
//! from `(seed, node, channel)`; nothing is stored per realization.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSpec {
    pub d: usize,
    /// Perturbation size; `|A - I| < eta` and `|b| < eta`.
    pub eta: f64,
    /// Dependence range `R`.
    pub range_r: f64,
    pub lattice_spacing: f64,
    pub kernel_radius: f64,
    pub seed: u64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self { d: 3, eta: 0.05, range_r: 3.0, lattice_spacing: 1.0, kernel_radius: 1.0, seed: 1 }
    }
}

impl EnvSpec {
    pub fn trivial(d: usize) -> Self {
        Self { d, eta: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.d == 0 {
            return bad("dimension must be positive".into());
        }
        if !(0.0..0.5).contains(&self.eta) {
            return bad(format!("eta = {} must lie in [0, 1/2)", self.eta));
        }
        if !(self.lattice_spacing > 0.0 && self.kernel_radius > 0.0) {
            return bad("lattice spacing and kernel radius must be positive".into());
        }
        if 2.0 * self.kernel_radius + self.lattice_spacing > self.range_r {
            return bad(format!(
                "2 rho + s = {} exceeds the dependence range {}",
                2.0 * self.kernel_radius + self.lattice_spacing,
                self.range_r
            ));
        }
        Ok(())
    }
}

/// Smoothing kernel `(1 - r^2/rho^2)^3` on `r < rho`.
#[inline]
pub fn kernel(r2: f64, rho: f64) -> f64 {
    let t = 1.0 - r2 / (rho * rho);
    if t > 0.0 {
        t * t * t
    } else {
        0.0
    }
}

/// `sup |K'| = 96 / (25 sqrt(5) rho)`, attained at `r = rho / sqrt(5)`.
pub fn kernel_slope_bound(rho: f64) -> f64 {
    96.0 / (25.0 * 5f64.sqrt() * rho)
}

/// Coefficients at one point. Matrices are row-major `d x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coeffs {
    pub d: usize,
    pub a: Vec<f64>,
    pub sigma: Vec<f64>,
    pub b: Vec<f64>,
}

impl Coeffs {
    pub fn identity(d: usize) -> Self {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = 1.0;
        }
        Self { d, sigma: a.clone(), a, b: vec![0.0; d] }
    }

    fn set_identity(&mut self) {
        let d = self.d;
        self.a.iter_mut().for_each(|v| *v = 0.0);
        self.sigma.iter_mut().for_each(|v| *v = 0.0);
        self.b.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            self.a[i * d + i] = 1.0;
            self.sigma[i * d + i] = 1.0;
        }
    }
}

/// Explicit Lipschitz constants of a realization on a bounded region.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LipschitzBound {
    /// Constant for `|b(x) - b(y)|`.
    pub drift: f64,
    /// Constant for the Frobenius norm of `A(x) - A(y)`.
    pub diffusion: f64,
}

impl LipschitzBound {
    pub fn total(&self) -> f64 {
        self.drift + self.diffusion
    }
}

#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvSpec,
    shift: Vec<f64>,
}

pub fn sample_environment(spec: &EnvSpec) -> Result<Environment> {
    spec.validate()?;
    let shift = (0..spec.d)
        .map(|i| {
            let bits = rng::mix(spec.seed, &[rng::tag::ENV_SHIFT, i as u64]);
            spec.lattice_spacing * rng::unit_open(bits)
        })
        .collect();
    Ok(Environment { spec: spec.clone(), shift })
}

impl Environment {
    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.d
    }

    pub fn is_trivial(&self) -> bool {
        self.spec.eta == 0.0
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    fn channels(&self) -> usize {
        self.spec.d + self.spec.d * self.spec.d
    }

    /// Noise at node `z`: `d` drift channels followed by the `d x d` matrix `G_z`.
    pub fn node_noise(&self, z: &[i64], out: &mut [f64]) {
        for (c, v) in out.iter_mut().enumerate() {
            *v = rng::node_normal(self.spec.seed, z, c as u64);
        }
    }

    fn node_position(&self, z: &[i64], out: &mut [f64]) {
        for i in 0..self.spec.d {
            out[i] = self.spec.lattice_spacing * z[i] as f64 + self.shift[i];
        }
    }

    /// Lattice nodes whose kernel support contains `x`.
    pub fn contributing_nodes(&self, x: &[f64]) -> Vec<Vec<i64>> {
        let mut nodes = Vec::new();
        self.for_each_node(x, |z, _| nodes.push(z.to_vec()));
        nodes
    }

    fn for_each_node(&self, x: &[f64], mut visit: impl FnMut(&[i64], f64)) {
        let d = self.spec.d;
        let (s, rho) = (self.spec.lattice_spacing, self.spec.kernel_radius);
        let lo: Vec<i64> =
            (0..d).map(|i| ((x[i] - self.shift[i] - rho) / s).ceil() as i64).collect();
        let hi: Vec<i64> =
            (0..d).map(|i| ((x[i] - self.shift[i] + rho) / s).floor() as i64).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return;
        }
        let mut z = lo.clone();
        let mut pos = vec![0.0; d];
        loop {
            self.node_position(&z, &mut pos);
            let r2: f64 = x.iter().zip(&pos).map(|(a, b)| (a - b) * (a - b)).sum();
            let w = kernel(r2, rho);
            if w > 0.0 {
                visit(&z, w);
            }
            let mut k = 0;
            loop {
                if k == d {
                    return;
                }
                if z[k] < hi[k] {
                    z[k] += 1;
                    break;
                }
                z[k] = lo[k];
                k += 1;
            }
        }
    }

    /// Returns `(A, sigma, b)` at `x`.
    pub fn eval_coeffs(&self, x: &[f64]) -> Coeffs {
        let mut out = Coeffs::identity(self.spec.d);
        self.probe().eval_into(x, &mut out);
        out
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        self.eval_coeffs(x).b
    }

    /// Evaluator with a small node-noise cache, for use inside one path.
    pub fn probe(&self) -> EnvProbe<'_> {
        EnvProbe::new(self)
    }

    /// Upper bound on how many lattice nodes can sit inside one kernel support.
    pub fn max_nodes_per_support(&self) -> usize {
        let per_axis = (2.0 * self.spec.kernel_radius / self.spec.lattice_spacing).floor() as usize + 1;
        per_axis.pow(self.spec.d as u32)
    }

    /// Lipschitz constants valid on the ball of radius `radius` around `center`.
    pub fn lipschitz_bound(&self, center: &[f64], radius: f64) -> LipschitzBound {
        let d = self.spec.d;
        let reach = radius + self.spec.kernel_radius;
        let s = self.spec.lattice_spacing;
        let lo: Vec<i64> =
            (0..d).map(|i| ((center[i] - self.shift[i] - reach) / s).ceil() as i64).collect();
        let hi: Vec<i64> =
            (0..d).map(|i| ((center[i] - self.shift[i] + reach) / s).floor() as i64).collect();
        let mut noise = vec![0.0; self.channels()];
        let (mut max_xi, mut max_g) = (0.0f64, 0.0f64);
        let mut z = lo.clone();
        'outer: loop {
            self.node_noise(&z, &mut noise);
            let xi = noise[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
            let g = &noise[d..];
            let mut sym = 0.0;
            for i in 0..d {
                for j in 0..d {
                    sym += (g[i * d + j] + g[j * d + i]).powi(2);
                }
            }
            max_xi = max_xi.max(xi);
            max_g = max_g.max((sym / 2.0).sqrt());
            let mut k = 0;
            loop {
                if k == d {
                    break 'outer;
                }
                if z[k] < hi[k] {
                    z[k] += 1;
                    break;
                }
                z[k] = lo[k];
                k += 1;
            }
        }
        let base = kernel_slope_bound(self.spec.kernel_radius) * self.max_nodes_per_support() as f64;
        LipschitzBound {
            drift: self.spec.eta / (d as f64).sqrt() * base * max_xi,
            diffusion: self.spec.eta / (d as f64).sqrt() * base * max_g,
        }
    }

    /// Writes `x_1, ..., x_d, A_11, ..., A_dd, b_1, ..., b_d` rows for the given points.
    pub fn write_field_csv<W: std::io::Write>(&self, points: &[Vec<f64>], out: W) -> Result<()> {
        let d = self.spec.d;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        for i in 0..d {
            for j in 0..d {
                header.push(format!("a{i}{j}"));
            }
        }
        header.extend((0..d).map(|i| format!("b{i}")));
        w.write_record(&header)?;
        let mut probe = self.probe();
        let mut c = Coeffs::identity(d);
        for p in points {
            probe.eval_into(p, &mut c);
            let row: Vec<String> =
                p.iter().chain(&c.a).chain(&c.b).map(|v| format!("{v:e}")).collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

const CACHE_SLOTS: usize = 64;

#[derive(Clone)]
struct Slot {
    valid: bool,
    node: Vec<i64>,
    noise: Vec<f64>,
}

/// Memoizing evaluator. Results are identical to [`Environment::eval_coeffs`].
pub struct EnvProbe<'a> {
    env: &'a Environment,
    slots: Vec<Slot>,
    m: Vec<f64>,
    s: Vec<f64>,
    node: Vec<i64>,
    pos: Vec<f64>,
}

impl<'a> EnvProbe<'a> {
    fn new(env: &'a Environment) -> Self {
        let d = env.spec.d;
        let slot = Slot { valid: false, node: vec![0; d], noise: vec![0.0; env.channels()] };
        Self {
            env,
            slots: vec![slot; CACHE_SLOTS],
            m: vec![0.0; d * d],
            s: vec![0.0; d],
            node: vec![0; d],
            pos: vec![0.0; d],
        }
    }

    pub fn env(&self) -> &Environment {
        self.env
    }

    fn slot_for(&mut self) -> usize {
        let mut h = 0u64;
        for &c in &self.node {
            h = rng::splitmix64(h ^ c as u64);
        }
        let idx = (h as usize) % CACHE_SLOTS;
        let slot = &mut self.slots[idx];
        if !slot.valid || slot.node != self.node {
            slot.node.copy_from_slice(&self.node);
            self.env.node_noise(&self.node, &mut slot.noise);
            slot.valid = true;
        }
        idx
    }

    pub fn eval_into(&mut self, x: &[f64], out: &mut Coeffs) {
        let env = self.env;
        let d = env.spec.d;
        if env.is_trivial() {
            out.set_identity();
            return;
        }
        let (s, rho, eta) = (env.spec.lattice_spacing, env.spec.kernel_radius, env.spec.eta);
        self.m.iter_mut().for_each(|v| *v = 0.0);
        self.s.iter_mut().for_each(|v| *v = 0.0);

        let lo: [i64; 8];
        let hi: [i64; 8];
        assert!(d <= 8, "environment evaluation supports d <= 8");
        {
            let mut l = [0i64; 8];
            let mut h = [0i64; 8];
            for i in 0..d {
                l[i] = ((x[i] - env.shift[i] - rho) / s).ceil() as i64;
                h[i] = ((x[i] - env.shift[i] + rho) / s).floor() as i64;
            }
            lo = l;
            hi = h;
        }
        let empty = (0..d).any(|i| lo[i] > hi[i]);
        if !empty {
            self.node.copy_from_slice(&lo[..d]);
            'walk: loop {
                for i in 0..d {
                    self.pos[i] = s * self.node[i] as f64 + env.shift[i];
                }
                let r2: f64 = (0..d).map(|i| (x[i] - self.pos[i]).powi(2)).sum();
                let w = kernel(r2, rho);
                if w > 0.0 {
                    let idx = self.slot_for();
                    let noise = &self.slots[idx].noise;
                    for i in 0..d {
                        self.s[i] += w * noise[i];
                    }
                    let g = &noise[d..];
                    for i in 0..d {
                        for j in 0..d {
                            self.m[i * d + j] +=
                                w * (g[i * d + j] + g[j * d + i]) * std::f64::consts::FRAC_1_SQRT_2;
                        }
                    }
                }
                let mut k = 0;
                loop {
                    if k == d {
                        break 'walk;
                    }
                    if self.node[k] < hi[k] {
                        self.node[k] += 1;
                        break;
                    }
                    self.node[k] = lo[k];
                    k += 1;
                }
            }
        }

        let scale = eta / (d as f64).sqrt();
        for i in 0..d {
            out.b[i] = scale * self.s[i].tanh();
        }
        spectral_coeffs(d, &self.m, eta, &mut out.a, &mut out.sigma);
    }
}

/// From symmetric `m`, writes `a = I + eta/sqrt(d) tanh(m)` and its principal root.
fn spectral_coeffs(d: usize, m: &[f64], eta: f64, a: &mut [f64], sigma: &mut [f64]) {
    let scale = eta / (d as f64).sqrt();
    let mut assemble = |vals: &[f64], vec_at: &dyn Fn(usize, usize) -> f64| {
        let lam_a: Vec<f64> = vals.iter().map(|l| 1.0 + scale * l.tanh()).collect();
        for i in 0..d {
            for j in 0..d {
                let mut sa = 0.0;
                let mut ss = 0.0;
                for k in 0..d {
                    let q = vec_at(i, k) * vec_at(j, k);
                    sa += q * lam_a[k];
                    ss += q * lam_a[k].sqrt();
                }
                a[i * d + j] = sa;
                sigma[i * d + j] = ss;
            }
        }
        // exact symmetry
        for i in 0..d {
            for j in 0..i {
                let va = 0.5 * (a[i * d + j] + a[j * d + i]);
                a[i * d + j] = va;
                a[j * d + i] = va;
                let vs = 0.5 * (sigma[i * d + j] + sigma[j * d + i]);
                sigma[i * d + j] = vs;
                sigma[j * d + i] = vs;
            }
        }
    };
    if d == 3 {
        let eig = SymmetricEigen::new(Matrix3::from_row_slice(m));
        let vecs = eig.eigenvectors;
        assemble(eig.eigenvalues.as_slice(), &|i, k| vecs[(i, k)]);
    } else {
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, m));
        let vecs = eig.eigenvectors.clone();
        assemble(eig.eigenvalues.as_slice(), &|i, k| vecs[(i, k)]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use proptest::prelude::*;

    fn env(eta: f64, seed: u64) -> Environment {
        sample_environment(&EnvSpec { eta, seed, ..Default::default() }).unwrap()
    }

    fn points(n: usize, spread: f64, salt: u64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|k| {
                (0..3)
                    .map(|i| spread * (rng::unit_open(rng::mix(salt, &[k as u64, i])) - 0.5))
                    .collect()
            })
            .collect()
    }

    fn max_entry_gap(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn trivial_environment() {
        let e = env(0.0, 3);
        let c = e.eval_coeffs(&[0.3, -1.2, 4.0]);
        assert_eq!(c, Coeffs::identity(3));
    }

    #[test]
    fn spec_validation() {
        for spec in [
            EnvSpec { eta: 0.5, ..Default::default() },
            EnvSpec { range_r: 2.5, ..Default::default() },
            EnvSpec { kernel_radius: 0.0, ..Default::default() },
        ] {
            assert!(matches!(sample_environment(&spec), Err(Error::InvalidSpec(_))));
        }
    }

    #[test]
    fn same_seed_same_realization() {
        let (e1, e2) = (env(0.2, 11), env(0.2, 11));
        for x in points(100, 40.0, 5) {
            assert_eq!(e1.eval_coeffs(&x), e2.eval_coeffs(&x));
        }
    }

    #[test]
    fn probe_cache_is_transparent() {
        let e = env(0.3, 2);
        let mut probe = e.probe();
        let mut c = Coeffs::identity(3);
        for x in points(500, 6.0, 9) {
            probe.eval_into(&x, &mut c);
            assert_eq!(c, e.eval_coeffs(&x));
        }
    }

    #[test]
    fn root_perturbation_and_ellipticity() {
        let eta = 0.3;
        let e = env(eta, 4);
        let mut probe = e.probe();
        let mut c = Coeffs::identity(3);
        let mut worst: f64 = 0.0;
        for x in points(10_000, 30.0, 1) {
            probe.eval_into(&x, &mut c);
            // sigma sigma^T = A
            let mut ss = vec![0.0; 9];
            for i in 0..3 {
                for j in 0..3 {
                    ss[i * 3 + j] = (0..3).map(|k| c.sigma[i * 3 + k] * c.sigma[j * 3 + k]).sum();
                }
            }
            assert!(max_entry_gap(&ss, &c.a) < 1e-12);
            assert!(c.b.iter().map(|v| v * v).sum::<f64>().sqrt() < eta);
            let mut dev = c.a.clone();
            for i in 0..3 {
                dev[i * 4] -= 1.0;
            }
            let frob = dev.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(frob);
            let eig = SymmetricEigen::new(Matrix3::from_row_slice(&c.a));
            let lmin = eig.eigenvalues.min();
            let lmax = eig.eigenvalues.max();
            assert!(lmin >= 1.0 - eta && lmax <= 1.0 + eta);
            let nu = 1.0 / (1.0 - eta);
            assert!(lmin >= 1.0 / nu && lmax <= nu);
        }
        assert!(worst < eta && worst > 0.0);
    }

    #[test]
    fn finite_range_is_structural() {
        let e = env(0.2, 8);
        let r = e.spec().range_r;
        for x in points(200, 50.0, 3) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + if i == 0 { r * 1.0001 } else { 0.0 }).collect();
            let nx = e.contributing_nodes(&x);
            let ny = e.contributing_nodes(&y);
            assert!(nx.iter().all(|z| !ny.contains(z)));
        }
    }

    #[test]
    fn far_apart_values_uncorrelated() {
        let n = 10_000;
        for seed in [1, 2] {
            let e = env(0.2, seed);
            let mut probe = e.probe();
            let mut c = Coeffs::identity(3);
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for k in 0..n {
                let x = vec![10.0 * k as f64, 0.0, 0.0];
                let y = vec![10.0 * k as f64 + 3.5, 1.0, 0.0];
                probe.eval_into(&x, &mut c);
                let bx = c.b[0];
                probe.eval_into(&y, &mut c);
                let by = c.b[0];
                sxy += bx * by;
                sxx += bx * bx;
                syy += by * by;
            }
            let corr = sxy / (sxx * syy).sqrt();
            assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "seed {seed}: {corr}");
        }
    }

    #[test]
    fn nearby_values_are_correlated() {
        let e = env(0.2, 1);
        let n = 5000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for k in 0..n {
            let bx = e.drift(&[10.0 * k as f64, 0.0, 0.0])[0];
            let by = e.drift(&[10.0 * k as f64 + 0.1, 0.0, 0.0])[0];
            sxy += bx * by;
            sxx += bx * bx;
            syy += by * by;
        }
        assert!(sxy / (sxx * syy).sqrt() > 0.8);
    }

    #[test]
    fn one_point_marginals_are_stationary() {
        let (x, y) = ([0.0, 0.0, 0.0], [0.37, 12.1, -5.55]);
        let mut bx = Vec::new();
        let mut by = Vec::new();
        for seed in 0..1000 {
            let e = env(0.2, seed);
            bx.push(e.drift(&x)[0]);
            by.push(e.drift(&y)[0]);
        }
        let ks = stats::ks_test(&bx, &by, 0.01);
        assert!(ks.pass, "{ks:?}");
    }

    #[test]
    fn octahedral_isotropy_in_law() {
        // r = cyclic axis permutation composed with a reflection
        let apply = |v: &[f64]| vec![-v[2], v[0], v[1]];
        let x = [0.31, -0.77, 1.4];
        let rx = apply(&x);
        let (mut lhs, mut rhs) = (Vec::new(), Vec::new());
        let (mut lhs_a, mut rhs_a) = (Vec::new(), Vec::new());
        for seed in 0..1000 {
            let e = env(0.3, seed);
            let c = e.eval_coeffs(&x);
            lhs.push(apply(&c.b)[0]);
            // (r A r^T)_{00} = A_{22}
            lhs_a.push(c.a[8]);
            let cr = e.eval_coeffs(&rx);
            rhs.push(cr.b[0]);
            rhs_a.push(cr.a[0]);
        }
        assert!(stats::ks_test(&lhs, &rhs, 0.01).pass);
        assert!(stats::ks_test(&lhs_a, &rhs_a, 0.01).pass);
    }

    #[test]
    fn symmetric_node_law_is_conjugation_invariant() {
        let e = env(0.2, 5);
        let n = 400_000;
        let mut noise = vec![0.0; 12];
        let (mut m_orig, mut m_rot) = ([0.0f64; 9], [0.0f64; 9]);
        for k in 0..n {
            e.node_noise(&[k as i64, 3, -1], &mut noise);
            let g = &noise[3..];
            let mut s = [0.0; 9];
            for i in 0..3 {
                for j in 0..3 {
                    s[i * 3 + j] = g[i * 3 + j] + g[j * 3 + i];
                }
            }
            // r S r^T with r = [[0,0,-1],[1,0,0],[0,1,0]]
            let perm = [2usize, 0, 1];
            let sign = [-1.0, 1.0, 1.0];
            for i in 0..3 {
                for j in 0..3 {
                    let v = sign[i] * sign[j] * s[perm[i] * 3 + perm[j]];
                    m_rot[i * 3 + j] += v * v;
                    m_orig[i * 3 + j] += s[i * 3 + j] * s[i * 3 + j];
                }
            }
        }
        for k in 0..9 {
            let (a, b) = (m_orig[k] / n as f64, m_rot[k] / n as f64);
            assert!((a - b).abs() / a < 5e-3, "entry {k}: {a} vs {b}");
        }
        // diagonal entries 2 G_ii have variance 4, off-diagonal G_ij + G_ji have 2
        assert!((m_orig[0] / n as f64 - 4.0).abs() < 0.03);
        assert!((m_orig[1] / n as f64 - 2.0).abs() < 0.02);
    }

    #[test]
    fn sampled_lipschitz_quotients_below_bound() {
        let e = env(0.3, 6);
        let bound = e.lipschitz_bound(&[0.0, 0.0, 0.0], 6.0);
        assert!(bound.total() > 0.0);
        let mut worst: f64 = 0.0;
        for x in points(3000, 8.0, 21) {
            let h: Vec<f64> = points(1, 0.2, rng::mix(x[0].to_bits(), &[1]))[0].clone();
            let y: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
            let (cx, cy) = (e.eval_coeffs(&x), e.eval_coeffs(&y));
            let dist = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            let db = cx.b.iter().zip(&cy.b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let da = cx.a.iter().zip(&cy.a).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(db <= bound.drift * dist * (1.0 + 1e-9));
            assert!(da <= bound.diffusion * dist * (1.0 + 1e-9));
            worst = worst.max((db + da) / dist);
        }
        assert!(worst <= bound.total());
    }

    #[test]
    fn kernel_slope_bound_is_tight() {
        let rho = 1.7;
        let mut best: f64 = 0.0;
        for k in 1..100_000 {
            let r = rho * k as f64 / 100_000.0;
            let h = 1e-7;
            let slope = (kernel((r + h).powi(2), rho) - kernel((r - h).powi(2), rho)).abs() / (2.0 * h);
            best = best.max(slope);
        }
        assert!((best - kernel_slope_bound(rho)).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn coefficients_bounded_everywhere(x in proptest::collection::vec(-100.0f64..100.0, 3), eta in 0.0f64..0.49) {
            let e = env(eta, 12);
            let c = e.eval_coeffs(&x);
            for i in 0..3 {
                prop_assert!(c.b[i].abs() < eta || eta == 0.0);
                for j in 0..3 {
                    prop_assert_eq!(c.a[i * 3 + j], c.a[j * 3 + i]);
                }
            }
        }
    }
}
