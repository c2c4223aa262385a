//! Duhamel/Wick-pairing series for the moments of the compensated wave function.
//!
//! A moment `E{ψ^M ψ*^N}` expands into terms indexed by the Duhamel orders of the factors
//! (a [`Layout`]) and a perfect matching of the potential vertices (a [`Pairing`]). After the
//! momentum integrals each matched edge contributes a one-dimensional kernel of the time lag
//! `τ = |v_l - v_r|`, so every term is a simplex integral of a product of edge kernels. A product
//! of simplices is a union of single simplices (shuffles), which reduces everything to integrals
//! over `Δ_{2k}(t)` of a pairing on ordered points, here called a shape.
//!
//! Edge constants are computed here from their own quadratures and never read from `theory`.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::MediumSpec;
use crate::par::Execution;
use crate::quad::{self, Estimate, Tolerance};
use crate::rng;
use crate::solver::InitialPacket;
use crate::special::{bessel_j0, beta as beta_fn, gamma, ln_gamma, sinc};

/// Largest vertex count accepted by [`pairings`].
pub const MAX_VERTICES: usize = 8;

/// Perfect matching of `2k` vertices, edges `(l, r)` with `l < r`, sorted by `l`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pairing {
    edges: Vec<(usize, usize)>,
}

impl Pairing {
    /// Edges are normalised to `l < r` and sorted.
    pub fn new(edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = 2 * edges.len();
        let mut seen = vec![false; n];
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            let (l, r) = if a < b { (a, b) } else { (b, a) };
            if r >= n || l == r || seen[l] || seen[r] {
                return Err(Error::InvalidArgument(format!("({a},{b}) is not part of a perfect matching")));
            }
            seen[l] = true;
            seen[r] = true;
            norm.push((l, r));
        }
        norm.sort_unstable();
        Ok(Pairing { edges: norm })
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Number of edges `k`.
    pub fn order(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_count(&self) -> usize {
        2 * self.edges.len()
    }

    /// Every edge joins two vertices of the same factor.
    pub fn is_factor_local(&self, layout: &Layout) -> bool {
        self.edges
            .iter()
            .all(|&(l, r)| layout.factor_of(l) == layout.factor_of(r))
    }

    /// Some edge joins two different factors.
    pub fn is_crossing(&self, layout: &Layout) -> bool {
        !self.is_factor_local(layout)
    }
}

fn enumerate(free: &mut Vec<usize>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Pairing>) {
    if free.is_empty() {
        out.push(Pairing { edges: cur.clone() });
        return;
    }
    let first = free.remove(0);
    for j in 0..free.len() {
        let other = free.remove(j);
        cur.push((first, other));
        enumerate(free, cur, out);
        cur.pop();
        free.insert(j, other);
    }
    free.insert(0, first);
}

/// All perfect matchings of `two_k` ordered vertices, `(2k-1)!!` of them.
pub fn pairings(two_k: usize) -> Result<Vec<Pairing>> {
    if two_k == 0 || two_k % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "pairings need a positive even vertex count, got {two_k}"
        )));
    }
    if two_k > MAX_VERTICES {
        return Err(Error::InvalidArgument(format!(
            "at most {MAX_VERTICES} vertices supported, got {two_k}"
        )));
    }
    let mut out = Vec::new();
    enumerate(&mut (0..two_k).collect(), &mut Vec::new(), &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub factor: usize,
    pub position: usize,
    pub conjugate: bool,
}

/// Duhamel orders of the `M` factors `ψ` followed by the `N` factors `ψ*`.
/// Vertices are numbered factor by factor, in time order within each factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layout {
    orders: Vec<usize>,
    conjugate: Vec<bool>,
}

impl Layout {
    pub fn new(m_orders: &[usize], n_orders: &[usize]) -> Self {
        let mut orders = m_orders.to_vec();
        orders.extend_from_slice(n_orders);
        let mut conjugate = vec![false; m_orders.len()];
        conjugate.extend(std::iter::repeat_n(true, n_orders.len()));
        Layout { orders, conjugate }
    }

    /// One unconjugated factor of order `two_k`.
    pub fn first_moment(two_k: usize) -> Self {
        Layout::new(&[two_k], &[])
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn vertex_count(&self) -> usize {
        self.orders.iter().sum()
    }

    pub fn factor_of(&self, v: usize) -> usize {
        let mut acc = 0;
        for (f, &o) in self.orders.iter().enumerate() {
            acc += o;
            if v < acc {
                return f;
            }
        }
        self.orders.len()
    }

    pub fn vertices(&self) -> Vec<Vertex> {
        let mut out = Vec::with_capacity(self.vertex_count());
        for (f, &o) in self.orders.iter().enumerate() {
            for p in 0..o {
                out.push(Vertex {
                    factor: f,
                    position: p,
                    conjugate: self.conjugate[f],
                });
            }
        }
        out
    }

    /// `(-i)^{Σm} i^{Σn}`.
    pub fn phase(&self) -> Complex64 {
        self.orders
            .iter()
            .zip(&self.conjugate)
            .fold(Complex64::new(1.0, 0.0), |acc, (&o, &c)| {
                acc * factor_sign(c).powu(o as u32)
            })
    }
}

fn factor_sign(conjugate: bool) -> Complex64 {
    if conjugate {
        Complex64::new(0.0, 1.0)
    } else {
        Complex64::new(0.0, -1.0)
    }
}

/// Which pairings survive and which edge kernel they carry in the limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum SeriesMode {
    /// Factor-local pairings only, kernel `a(0)K1/(2π)^d · τ^{-a}`.
    Homogenized,
    /// All pairings, kernel `a(0)K1/(2π)^d · τ^{-a}`.
    NoPhase,
    /// All pairings, kernel `a(0) τ^{-a} K2(τ, ξ)`.
    XiPhase { xi: Vec<f64> },
    /// Finite-ε phases; only the first term is available, see [`finite_eps_first_term`].
    FiniteEps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub samples: usize,
    pub batches: usize,
    pub seed: u64,
    /// Use the closed forms for `k ≤ 2` power-kernel shapes.
    pub exact_low_order: bool,
    /// Grid size of the tabulated `K2` used inside Monte Carlo.
    pub table_points: usize,
    pub exec: Execution,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            samples: 200_000,
            batches: 40,
            seed: 0x0dd5_eed5,
            exact_low_order: true,
            table_points: 4001,
            exec: Execution::Parallel,
        }
    }
}

fn omega(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// `Ω_d/(2π)^d ∫₀^∞ ρ^{1-2γ} e^{-μρ^{2β}} j_d(rρ) dρ` along the real axis, with
/// `j_1 = cos`, `j_2 = J₀`, `j_3 = sinc`. At `r = 0` this is `K1/(2π)^d`.
pub fn edge_kernel_k2(spec: &MediumSpec, r: f64) -> Result<f64> {
    let d = spec.d();
    let (g, b, mu) = (spec.gamma(), spec.beta(), spec.mu());
    let lead = 2.0 - 2.0 * g;
    // u = ρ^{2-2γ} absorbs ρ^{1-2γ}dρ = du/(2-2γ).
    let rho_max = (42.0 / mu).powf(1.0 / (2.0 * b));
    let u_max = rho_max.powf(lead);
    let f = |u: f64| {
        let rho = u.powf(1.0 / lead);
        let x = r * rho;
        let j = match d {
            1 => x.cos(),
            2 => bessel_j0(x),
            _ => sinc(x),
        };
        (-mu * rho.powf(2.0 * b)).exp() * j
    };
    let tol = Tolerance {
        abs: 1e-15,
        rel: 1e-12,
        max_intervals: 20_000,
    };
    let est = quad::integrate(f, 0.0, u_max, tol)?;
    Ok(omega(d) / (2.0 * PI).powi(d as i32) / lead * est.value)
}

/// `a(0) K1/(2π)^d`, the limit edge constant.
pub fn edge_constant(spec: &MediumSpec) -> Result<f64> {
    Ok(spec.cutoff().amplitude_at_zero * edge_kernel_k2(spec, 0.0)?)
}

#[derive(Debug, Clone)]
enum EdgeKernel {
    Power { c: f64 },
    Xi { amp: f64, table: K2Table },
}

/// `K2(τ, ξ)` for `τ ∈ [0, t]`, tabulated uniformly in `r = |ξ|τ^{1-1/(2β)}`.
#[derive(Debug, Clone)]
struct K2Table {
    xi_norm: f64,
    power: f64,
    r_max: f64,
    values: Vec<f64>,
}

impl K2Table {
    fn build(spec: &MediumSpec, t: f64, xi: &[f64], points: usize, exec: Execution) -> Result<Self> {
        let xi_norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let power = 1.0 - 1.0 / (2.0 * spec.beta());
        let r_max = xi_norm * t.powf(power);
        let points = points.max(2);
        let values = exec.try_map(points, |j| edge_kernel_k2(spec, r_max * j as f64 / (points - 1) as f64))?;
        Ok(K2Table {
            xi_norm,
            power,
            r_max,
            values,
        })
    }

    fn eval(&self, tau: f64) -> f64 {
        if self.r_max == 0.0 {
            return self.values[0];
        }
        let r = self.xi_norm * tau.powf(self.power);
        let s = (r / self.r_max).clamp(0.0, 1.0) * (self.values.len() - 1) as f64;
        let i = (s.floor() as usize).min(self.values.len() - 2);
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// `∫_{Δ₄(1)}` of `τ₁^{-a}τ₂^{-a}` for the crossing shape `{(0,2),(1,3)}`.
pub fn crossing_shape_unit(a: f64) -> Result<f64> {
    let inner = |x: f64| {
        let m = x.min(1.0 - x);
        let mut v = (1.0 - x) * m.powf(2.0 - a) / (2.0 - a) - m.powf(3.0 - a) / (2.0 * (3.0 - a));
        if x > 0.5 {
            v += 0.5 * (1.0 - x).powi(2) * (x.powf(1.0 - a) - (1.0 - x).powf(1.0 - a)) / (1.0 - a);
        }
        x.powf(-a) * v
    };
    let tol = Tolerance::new(1e-15, 1e-13);
    let lo = quad::integrate(inner, 0.0, 0.5, tol)?.value;
    let hi = quad::integrate(inner, 0.5, 1.0, tol)?.value;
    Ok(2.0 * (lo + hi))
}

/// Closed forms of the unit-time power-kernel integrals for `k ≤ 2`, without edge constants.
fn exact_unit_shape(shape: &Pairing, a: f64) -> Result<Option<f64>> {
    match shape.edges() {
        [(0, 1)] => Ok(Some(1.0 / ((1.0 - a) * (2.0 - a)))),
        [(0, 1), (2, 3)] => Ok(Some(gamma(1.0 - a).powi(2) / gamma(5.0 - 2.0 * a))),
        [(0, 2), (1, 3)] => Ok(Some(crossing_shape_unit(a)?)),
        [(0, 3), (1, 2)] => Ok(Some(beta_fn(3.0 - 2.0 * a, 2.0) / ((1.0 - a) * (2.0 - a)))),
        _ => Ok(None),
    }
}

/// `∫₀^t (t-τ) τ^{-a} K2(τ, ξ) dτ` after `τ = v^{1/(1-a)}`.
fn xi_edge_integral(spec: &MediumSpec, t: f64, xi_norm: f64) -> Result<f64> {
    let a = spec.a_sing();
    let q = 1.0 - a;
    let power = 1.0 - 1.0 / (2.0 * spec.beta());
    let mut err = None;
    let est = quad::integrate(
        |v| {
            let tau = v.powf(1.0 / q);
            let r = if xi_norm == 0.0 { 0.0 } else { xi_norm * tau.powf(power) };
            match edge_kernel_k2(spec, r) {
                Ok(k) => (t - tau) * k,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        t.powf(q),
        Tolerance::new(1e-14, 1e-11),
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(est.value / q)
}

fn covered_gaps(shape: &Pairing) -> Vec<bool> {
    // Gap i (1..n-1) lies between vertices i-1 and i; gaps 0 and n touch the ends.
    let n = shape.vertex_count();
    let mut cov = vec![false; n + 1];
    for &(l, r) in shape.edges() {
        for c in cov.iter_mut().take(r + 1).skip(l + 1) {
            *c = true;
        }
    }
    cov
}

/// Monte Carlo for `∫_{Δ_n(t)} ∏_e κ(τ_e) dv` with gaps drawn from a Dirichlet law whose
/// parameters `1-a` on covered gaps cancel the edge singularities; the weight is bounded.
fn shape_monte_carlo(
    shape: &Pairing,
    a: f64,
    t: f64,
    kernel: &EdgeKernel,
    opts: &McOptions,
    stream_id: u64,
) -> Result<Estimate> {
    let n = shape.vertex_count();
    let k = shape.order();
    let cov = covered_gaps(shape);
    let alphas: Vec<f64> = cov.iter().map(|&c| if c { 1.0 - a } else { 1.0 }).collect();
    let log_c = alphas.iter().map(|&x| ln_gamma(x)).sum::<f64>() - ln_gamma(alphas.iter().sum());
    let norm = log_c.exp();
    let gam = Gamma::new(1.0 - a, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let batches = opts.batches.max(2);
    let per = (opts.samples / batches).max(1);
    let mut rng = rng::stream(opts.seed, stream_id);
    let mut x = vec![0.0; n + 1];
    let mut means = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut acc = 0.0;
        for _ in 0..per {
            let mut s = 0.0;
            for (xi, &c) in x.iter_mut().zip(&cov) {
                *xi = if c { gam.sample(&mut rng) } else { rng.sample::<f64, _>(Exp1) };
                s += *xi;
            }
            let inv = 1.0 / s;
            let mut ratio = 1.0;
            for (xi, &c) in x.iter_mut().zip(&cov) {
                *xi *= inv;
                if c {
                    ratio *= *xi;
                }
            }
            let mut extra = 1.0;
            for &(l, r) in shape.edges() {
                let tau: f64 = x[l + 1..=r].iter().sum();
                ratio /= tau;
                if let EdgeKernel::Xi { table, .. } = kernel {
                    extra *= table.eval(t * tau);
                }
            }
            acc += ratio.powf(a) * extra;
        }
        means.push(acc / per as f64);
    }
    let b = means.len() as f64;
    let mean = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
    let amp = match kernel {
        EdgeKernel::Power { c } => *c,
        EdgeKernel::Xi { amp, .. } => *amp,
    };
    let scale = norm * amp.powi(k as i32) * t.powf(n as f64 - k as f64 * a);
    Ok(Estimate {
        value: scale * mean,
        error: scale * (var / b).sqrt(),
    })
}

fn shape_integral(
    spec: &MediumSpec,
    shape: &Pairing,
    t: f64,
    kernel: &EdgeKernel,
    opts: &McOptions,
    stream_id: u64,
) -> Result<Estimate> {
    if t == 0.0 {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let a = spec.a_sing();
    let k = shape.order();
    match kernel {
        EdgeKernel::Power { c } if opts.exact_low_order => {
            if let Some(unit) = exact_unit_shape(shape, a)? {
                let v = c.powi(k as i32) * t.powf(k as f64 * (2.0 - a)) * unit;
                return Ok(Estimate { value: v, error: 0.0 });
            }
        }
        EdgeKernel::Xi { amp, table } if k == 1 => {
            let v = amp * xi_edge_integral(spec, t, table.xi_norm)?;
            return Ok(Estimate { value: v, error: 0.0 });
        }
        _ => {}
    }
    shape_monte_carlo(shape, a, t, kernel, opts, stream_id)
}

/// Shapes on `Δ_{2k}` reached from a layout pairing through all shuffles of the factors.
fn shuffle_shapes(layout: &Layout, pairing: &Pairing) -> Vec<Pairing> {
    let n = layout.vertex_count();
    let f = layout.orders().len();
    let mut out = Vec::new();
    let mut word = vec![0usize; n];
    let total = f.pow(n as u32);
    let starts: Vec<usize> = layout
        .orders()
        .iter()
        .scan(0, |acc, &o| {
            let s = *acc;
            *acc += o;
            Some(s)
        })
        .collect();
    'words: for code in 0..total {
        let mut c = code;
        let mut counts = vec![0usize; f];
        for w in word.iter_mut() {
            *w = c % f;
            c /= f;
            counts[*w] += 1;
        }
        if counts != layout.orders() {
            continue 'words;
        }
        // Global position of each layout vertex.
        let mut next = starts.clone();
        let mut global = vec![0usize; n];
        for (pos, &w) in word.iter().enumerate() {
            global[next[w]] = pos;
            next[w] += 1;
        }
        let edges = pairing.edges().iter().map(|&(l, r)| (global[l], global[r])).collect();
        out.push(Pairing::new(edges).expect("relabelled matching"));
    }
    out
}

fn check_layout(layout: &Layout, pairing: &Pairing) -> Result<()> {
    if layout.vertex_count() != pairing.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "layout has {} vertices, pairing has {}",
            layout.vertex_count(),
            pairing.vertex_count()
        )));
    }
    if pairing.vertex_count() > MAX_VERTICES {
        return Err(Error::InvalidArgument(format!("at most {MAX_VERTICES} vertices supported")));
    }
    Ok(())
}

fn layout_integral(
    spec: &MediumSpec,
    layout: &Layout,
    pairing: &Pairing,
    t: f64,
    kernel: &EdgeKernel,
    opts: &McOptions,
) -> Result<Estimate> {
    check_layout(layout, pairing)?;
    let shapes = shuffle_shapes(layout, pairing);
    let mut counts: HashMap<Pairing, usize> = HashMap::new();
    for s in shapes {
        *counts.entry(s).or_default() += 1;
    }
    let mut list: Vec<(Pairing, usize)> = counts.into_iter().collect();
    list.sort_by(|a, b| a.0.edges().cmp(b.0.edges()));
    let ests = opts.exec.try_map(list.len(), |i| {
        shape_integral(spec, &list[i].0, t, kernel, opts, stream_key(pairing.order(), i))
    })?;
    let mut value = 0.0;
    let mut var = 0.0;
    for ((_, c), e) in list.iter().zip(ests) {
        value += *c as f64 * e.value;
        var += (*c as f64 * e.error).powi(2);
    }
    Ok(Estimate {
        value,
        error: var.sqrt(),
    })
}

fn stream_key(k: usize, idx: usize) -> u64 {
    ((k as u64) << 32) | idx as u64
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

/// `(a(0)K1/(2π)^d)^k ∫ ∏_e |v_l - v_r|^{-a}` over the product of simplices of the layout.
pub fn limit_term(
    spec: &MediumSpec,
    layout: &Layout,
    pairing: &Pairing,
    t: f64,
    opts: &McOptions,
) -> Result<Estimate> {
    check_time(t)?;
    let kernel = EdgeKernel::Power { c: edge_constant(spec)? };
    layout_integral(spec, layout, pairing, t, &kernel, opts)
}

fn check_xi(spec: &MediumSpec, xi: &[f64]) -> Result<()> {
    if spec.beta() <= 0.5 {
        return Err(Error::InvalidArgument(format!(
            "the ξ-dependent kernel needs β > 1/2, got β = {}",
            spec.beta()
        )));
    }
    if xi.len() != spec.d() {
        return Err(Error::InvalidArgument(format!(
            "frequency has {} components, expected {}",
            xi.len(),
            spec.d()
        )));
    }
    Ok(())
}

/// As [`limit_term`] with edge kernel `a(0) τ^{-a} K2(τ, ξ)`.
pub fn limit_term_xi(
    spec: &MediumSpec,
    layout: &Layout,
    pairing: &Pairing,
    t: f64,
    xi: &[f64],
    opts: &McOptions,
) -> Result<Estimate> {
    check_xi(spec, xi)?;
    check_time(t)?;
    let kernel = xi_kernel(spec, t, xi, pairing.order(), opts)?;
    layout_integral(spec, layout, pairing, t, &kernel, opts)
}

fn xi_kernel(spec: &MediumSpec, t: f64, xi: &[f64], k: usize, opts: &McOptions) -> Result<EdgeKernel> {
    // The table only feeds Monte Carlo; k = 1 is integrated directly.
    let points = if k == 1 { 2 } else { opts.table_points };
    Ok(EdgeKernel::Xi {
        amp: spec.cutoff().amplitude_at_zero,
        table: K2Table::build(spec, t, xi, points, opts.exec)?,
    })
}

/// One composition of Duhamel orders with its assembled value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub m_orders: Vec<usize>,
    pub n_orders: Vec<usize>,
    pub k: usize,
    pub value: Complex64,
    pub error: f64,
    pub mode: SeriesMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSum {
    pub k: usize,
    pub value: Complex64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialSum {
    pub m: u32,
    pub n: u32,
    pub t: f64,
    pub k_max: usize,
    pub value: Complex64,
    pub error: f64,
    pub orders: Vec<OrderSum>,
    pub terms: Vec<SeriesTerm>,
}

/// `Σ_{k ≤ K} ` of the assembled order-`2k` contributions to `E{ψ^M ψ*^N}` in the limit.
#[allow(clippy::too_many_arguments)]
pub fn moment_partial_sum(
    spec: &MediumSpec,
    m: u32,
    n: u32,
    t: f64,
    k_max: usize,
    mode: &SeriesMode,
    phi0_hat: Complex64,
    opts: &McOptions,
) -> Result<PartialSum> {
    check_time(t)?;
    if 2 * k_max > MAX_VERTICES {
        return Err(Error::InvalidArgument(format!("K must be at most {}", MAX_VERTICES / 2)));
    }
    let base = phi0_hat.powu(m) * phi0_hat.conj().powu(n);
    let mut orders = Vec::new();
    let mut terms = Vec::new();
    let mut total = Complex64::new(1.0, 0.0);
    let mut var = 0.0;
    let factors = (m + n) as usize;
    for k in 1..=k_max {
        if factors == 0 {
            orders.push(OrderSum {
                k,
                value: Complex64::new(0.0, 0.0),
                error: 0.0,
            });
            continue;
        }
        let kernel = match mode {
            SeriesMode::Homogenized | SeriesMode::NoPhase => EdgeKernel::Power { c: edge_constant(spec)? },
            SeriesMode::XiPhase { xi } => {
                check_xi(spec, xi)?;
                xi_kernel(spec, t, xi, k, opts)?
            }
            SeriesMode::FiniteEps => {
                return Err(Error::InvalidArgument(
                    "finite-ε phases are only available for the first term".into(),
                ))
            }
        };
        let local_only = matches!(mode, SeriesMode::Homogenized);
        let shapes = pairings(2 * k)?;
        let (by_comp, total_coeff) = shape_coefficients(&shapes, m as usize, n as usize, local_only);
        let live: Vec<usize> = (0..shapes.len()).filter(|&s| total_coeff[s].norm() > 0.0 || by_comp.values().any(|c| c[s].norm() > 0.0)).collect();
        let ests = opts
            .exec
            .try_map(live.len(), |i| shape_integral(spec, &shapes[live[i]], t, &kernel, opts, stream_key(k, live[i])))?;
        let mut integral = vec![Estimate { value: 0.0, error: 0.0 }; shapes.len()];
        for (&s, e) in live.iter().zip(ests) {
            integral[s] = e;
        }
        let assemble = |coeff: &[Complex64]| {
            let mut v = Complex64::new(0.0, 0.0);
            let mut e2 = 0.0;
            for (c, e) in coeff.iter().zip(&integral) {
                v += c * e.value;
                e2 += c.norm_sqr() * e.error * e.error;
            }
            (v, e2)
        };
        let (vk, ek2) = assemble(&total_coeff);
        total += vk;
        var += ek2;
        orders.push(OrderSum {
            k,
            value: base * vk,
            error: base.norm() * ek2.sqrt(),
        });
        let mut comps: Vec<_> = by_comp.into_iter().collect();
        comps.sort_by(|a, b| a.0.cmp(&b.0));
        for (counts, coeff) in comps {
            let (v, e2) = assemble(&coeff);
            if v.norm() == 0.0 && e2 == 0.0 {
                continue;
            }
            terms.push(SeriesTerm {
                m_orders: counts[..m as usize].to_vec(),
                n_orders: counts[m as usize..].to_vec(),
                k,
                value: base * v,
                error: base.norm() * e2.sqrt(),
                mode: mode.clone(),
            });
        }
    }
    Ok(PartialSum {
        m,
        n,
        t,
        k_max,
        value: base * total,
        error: base.norm() * var.sqrt(),
        orders,
        terms,
    })
}

type Coefficients = (HashMap<Vec<usize>, Vec<Complex64>>, Vec<Complex64>);

/// For every shape on `Δ_{2k}`, the signed number of (composition, pairing, shuffle) triples
/// that map onto it. A word assigns each ordered vertex to a factor.
fn shape_coefficients(shapes: &[Pairing], m: usize, n: usize, local_only: bool) -> Coefficients {
    let f = m + n;
    let len = shapes[0].vertex_count();
    let signs: Vec<Complex64> = (0..f).map(|j| factor_sign(j >= m)).collect();
    let mut by_comp: HashMap<Vec<usize>, Vec<Complex64>> = HashMap::new();
    let mut total = vec![Complex64::new(0.0, 0.0); shapes.len()];
    let mut word = vec![0usize; len];
    for code in 0..f.pow(len as u32) {
        let mut c = code;
        let mut counts = vec![0usize; f];
        let mut sign = Complex64::new(1.0, 0.0);
        for w in word.iter_mut() {
            *w = c % f;
            c /= f;
            counts[*w] += 1;
            sign *= signs[*w];
        }
        let entry = by_comp
            .entry(counts)
            .or_insert_with(|| vec![Complex64::new(0.0, 0.0); shapes.len()]);
        for (s, shape) in shapes.iter().enumerate() {
            if local_only && shape.edges().iter().any(|&(l, r)| word[l] != word[r]) {
                continue;
            }
            entry[s] += sign;
            total[s] += sign;
        }
    }
    by_comp.retain(|_, v| v.iter().any(|c| c.norm() > 0.0));
    (by_comp, total)
}

/// Switches that reduce the finite-ε first term to its limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FiniteEpsFlags {
    pub suppress_phase: bool,
    pub force_flat_cutoff: bool,
}

/// `∫₀^t (t-τ) e^{-cτ} dτ = t/c - (1 - e^{-ct})/c²`.
fn lag_transform(c: Complex64, t: f64) -> Complex64 {
    let z = c * t;
    if z.norm() < 1e-3 {
        // t²(1/2 - z/6 + z²/24 - z³/120)
        let s = 0.5 - z / 6.0 + z * z / 24.0 - z * z * z / 120.0;
        return s * t * t;
    }
    t / c - (1.0 - (-z).exp()) / (c * c)
}

struct FirstTermSetup {
    c_lin: f64,
    c_quad: f64,
    w_max: f64,
    pref: f64,
}

fn first_term_setup(spec: &MediumSpec, eps: f64, alpha: f64, flags: FiniteEpsFlags) -> Result<FirstTermSetup> {
    if spec.d() != 1 {
        return Err(Error::InvalidArgument(
            "finite-ε terms are implemented for d = 1 only".into(),
        ));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("ε must lie in (0, 1], got {eps}")));
    }
    let kappa = spec.kappa();
    let ac = spec.alpha_c();
    let (c_lin, c_quad) = if flags.suppress_phase {
        (0.0, 0.0)
    } else {
        (eps.powf(alpha + ac - kappa), eps.powf(2.0 * ac - kappa))
    };
    let w_max = if flags.force_flat_cutoff {
        f64::INFINITY
    } else {
        spec.cutoff().p_max * eps.powf(-ac)
    };
    Ok(FirstTermSetup {
        c_lin,
        c_quad,
        w_max,
        pref: 1.0 / (2.0 * PI),
    })
}

/// `∫_ℝ a(ε^{α_c}w) |w|^{1-2γ} h(w) dw` for complex `h`, through `u = |w|^{2-2γ}` on each half-line.
fn line_integral<H>(spec: &MediumSpec, eps: f64, setup: &FirstTermSetup, flat: bool, h: H) -> Result<Complex64>
where
    H: Fn(f64) -> Complex64,
{
    let lead = 2.0 - 2.0 * spec.gamma();
    let ac = spec.alpha_c();
    let cutoff = *spec.cutoff();
    let a0 = cutoff.amplitude_at_zero;
    let tol = Tolerance {
        abs: 1e-13,
        rel: 1e-10,
        max_intervals: 20_000,
    };
    let mut out = Complex64::new(0.0, 0.0);
    for sign in [1.0, -1.0] {
        for part in 0..2 {
            let g = |u: f64| {
                let w = u.powf(1.0 / lead);
                let amp = if flat { a0 } else { cutoff.eval(eps.powf(ac) * w) };
                let v = amp * h(sign * w);
                if part == 0 {
                    v.re
                } else {
                    v.im
                }
            };
            let est = if setup.w_max.is_finite() {
                quad::integrate(g, 0.0, setup.w_max.powf(lead), tol)?
            } else {
                quad::integrate_to_infinity(g, 0.0, tol)?
            };
            if part == 0 {
                out.re += est.value;
            } else {
                out.im += est.value;
            }
        }
    }
    Ok(out / lead)
}

/// The order-2 Duhamel term of `E ψ_ε(t,ξ)` at finite ε,
/// `-φ̂₀ ∫ dw/(2π)^d a(ε^{α_c}w)|w|^{-(2γ+d-2)} F(c(w))` with
/// `c(w) = μ|w|^{2β} - i(ε^{α+α_c-κ} ξ·w - ε^{2α_c-κ}|w|²/2)`.
pub fn finite_eps_first_term(
    spec: &MediumSpec,
    eps: f64,
    alpha: f64,
    t: f64,
    xi: &[f64],
    phi0_hat: Complex64,
    flags: FiniteEpsFlags,
) -> Result<Complex64> {
    check_time(t)?;
    let setup = first_term_setup(spec, eps, alpha, flags)?;
    if t == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (mu, b) = (spec.mu(), spec.beta());
    let x = xi.first().copied().unwrap_or(0.0);
    let h = |w: f64| {
        let c = Complex64::new(
            mu * w.abs().powf(2.0 * b),
            -(setup.c_lin * x * w - 0.5 * setup.c_quad * w * w),
        );
        lag_transform(c, t)
    };
    let val = line_integral(spec, eps, &setup, flags.force_flat_cutoff, h)?;
    Ok(-phi0_hat * setup.pref * val)
}

/// The `(m,n) = (1,1)` crossing contribution to `E|ψ_ε(t,ξ)|²` at finite ε:
/// `∫ dw/(2π)^d a(ε^{α_c}w)|w|^{-(2γ+d-2)} |φ̂₀(ξ - ε^{α_c-α}w)|² 2Re F(c(w))`.
pub fn finite_eps_crossing_term(
    spec: &MediumSpec,
    eps: f64,
    alpha: f64,
    t: f64,
    xi: &[f64],
    packet: &InitialPacket,
) -> Result<f64> {
    check_time(t)?;
    let setup = first_term_setup(spec, eps, alpha, FiniteEpsFlags::default())?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let (mu, b) = (spec.mu(), spec.beta());
    let x = xi.first().copied().unwrap_or(0.0);
    let shift = eps.powf(spec.alpha_c() - alpha);
    let h = |w: f64| {
        let c = Complex64::new(
            mu * w.abs().powf(2.0 * b),
            -(setup.c_lin * x * w - 0.5 * setup.c_quad * w * w),
        );
        let amp = packet.fourier(&[x - shift * w]).norm_sqr();
        Complex64::new(2.0 * amp * lag_transform(c, t).re, 0.0)
    };
    Ok(setup.pref * line_integral(spec, eps, &setup, false, h)?.re)
}

/// `2∫₀^t (t-τ) τ^{-a} A(τ) dτ` with
/// `A(τ) = Ω/(2π)^d ∫ ρ^{1-2γ} e^{-μρ^{2β}} a(ε^{α_c} ρ τ^{-1/(2β)}) dρ`.
pub fn uniform_bound_integral(spec: &MediumSpec, eps: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("ε must lie in (0, 1], got {eps}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let (g, b, mu) = (spec.gamma(), spec.beta(), spec.mu());
    let d = spec.d();
    let cutoff = *spec.cutoff();
    let lead = 2.0 - 2.0 * g;
    let ea = eps.powf(spec.alpha_c());
    let decay_max = (42.0 / mu).powf(1.0 / (2.0 * b));
    let pref = omega(d) / (2.0 * PI).powi(d as i32) / lead;
    let tol = Tolerance::new(1e-14, 1e-11);
    let inner = |tau: f64| -> Result<f64> {
        let stretch = tau.powf(-1.0 / (2.0 * b));
        let rho_max = decay_max.min(cutoff.p_max / (ea * stretch));
        let est = quad::integrate(
            |u| {
                let rho = u.powf(1.0 / lead);
                (-mu * rho.powf(2.0 * b)).exp() * cutoff.eval(ea * rho * stretch)
            },
            0.0,
            rho_max.powf(lead),
            tol,
        )?;
        Ok(pref * est.value)
    };
    let a = spec.a_sing();
    let mut err = None;
    let est = quad::integrate_power_singular(
        |tau| match inner(tau) {
            Ok(v) => (t - tau) * v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        a,
        t,
        tol,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(2.0 * est.value)
}

/// `∫_{[0,t]²} |s-u|^{-a} ds du`, the quantity whose `k`-th power the pairing sums resum to.
pub fn square_integral(a: f64, t: f64) -> f64 {
    2.0 * t.powf(2.0 - a) / ((1.0 - a) * (2.0 - a))
}

/// `(2k-1)!!/(2k)! = 1/(2^k k!)`.
pub fn pairing_weight(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc / (2.0 * j as f64))
}
