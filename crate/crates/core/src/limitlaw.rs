//! Samplers for the limiting random objects: fractional Brownian phases and the critical
//! functional `ψ̄(t,ξ) = ∫ φ₀(x) e^{-iξx} e^{-iΘ(t,x)} dx`, `Θ(t,x) = ∫₀ᵗ Ẇ(s,x) ds`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::MediumSpec;
use crate::par::Execution;
use crate::quad::{self, gauss_legendre, Tolerance};
use crate::rng;
use crate::solver::InitialPacket;
use crate::theory::big_d;

/// Largest time grid for exact fBm sampling.
pub const MAX_FBM_POINTS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub hurst: f64,
    pub scale: f64,
}

/// `(σ²/2)(t^{2H} + s^{2H} - |t-s|^{2H})`.
pub fn fbm_covariance(times: &[f64], hurst: f64, scale: f64) -> DMatrix<f64> {
    let h2 = 2.0 * hurst;
    let s2 = scale * scale;
    DMatrix::from_fn(times.len(), times.len(), |i, j| {
        let (t, s) = (times[i], times[j]);
        0.5 * s2 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
    })
}

/// Lower Cholesky factor, retrying with growing diagonal jitter.
pub fn cholesky_with_jitter(mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = mat.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    for attempt in 0..6 {
        let mut m = mat.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(c) = nalgebra::Cholesky::new(m) {
            return Ok(c.l());
        }
        jitter = scale * 1e-14 * 10f64.powi(attempt * 2);
    }
    Err(Error::Factorization(format!("covariance of size {} is not positive definite", mat.nrows())))
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid.len() > MAX_FBM_POINTS {
        return Err(Error::InvalidArgument(format!(
            "time grid must have 1..={MAX_FBM_POINTS} points, got {}",
            t_grid.len()
        )));
    }
    if !(t_grid[0] > 0.0) || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(
            "time grid must be strictly increasing and start after 0".into(),
        ));
    }
    Ok(())
}

/// Paths of `scale · B_H` on `t_grid`, one ChaCha stream per path.
pub fn sample_fbm_with(
    hurst: f64,
    scale: f64,
    t_grid: &[f64],
    n_paths: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<FbmPath>> {
    check_grid(t_grid)?;
    if n_paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InvalidArgument(format!("Hurst index must lie in (0,1), got {hurst}")));
    }
    let n = t_grid.len();
    let chol = if scale == 0.0 {
        None
    } else {
        Some(cholesky_with_jitter(&fbm_covariance(t_grid, hurst, scale))?)
    };
    Ok(exec.map(n_paths, |p| {
        let values = match &chol {
            None => vec![0.0; n],
            Some(l) => {
                let mut r = rng::stream(seed, p as u64);
                let z = DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal));
                (l * z).iter().copied().collect()
            }
        };
        FbmPath {
            times: t_grid.to_vec(),
            values,
            hurst,
            scale,
        }
    }))
}

/// `√D B_{1/κ}` on `t_grid`.
pub fn sample_fbm(spec: &MediumSpec, t_grid: &[f64], n_paths: usize, seed: u64, exec: Execution) -> Result<Vec<FbmPath>> {
    sample_fbm_with(1.0 / spec.kappa(), big_d(spec).sqrt(), t_grid, n_paths, seed, exec)
}

/// `n` i.i.d. `N(0, variance)` draws from a single stream.
pub fn sample_normal(variance: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::InvalidArgument(format!("variance must be nonnegative, got {variance}")));
    }
    let sd = variance.sqrt();
    let mut r = rng::stream(seed, 0);
    Ok((0..n).map(|_| sd * r.sample::<f64, _>(StandardNormal)).collect())
}

/// `N(0, D t^{2/κ})` phase samples.
pub fn sample_phase(spec: &MediumSpec, t: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be positive, got {t}")));
    }
    sample_normal(big_d(spec) * t.powf(2.0 / spec.kappa()), n, seed)
}

/// Discretisation of the critical sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalConfig {
    /// Half-width of the spatial window in packet widths.
    pub half_width: f64,
    /// Target spatial step.
    pub dx: f64,
    /// Upper end of the resolved band; above it the field enters as a mean damping.
    pub p_hi: f64,
    /// Decades of log-spaced panels below `π/X`; below them the field is a constant phase.
    pub log_decades: u32,
    pub panel_nodes: usize,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        CriticalConfig {
            half_width: 8.0,
            dx: 0.05,
            p_hi: 20.0,
            log_decades: 6,
            panel_nodes: 8,
        }
    }
}

/// One spectral mode of `Θ(t,·)`: `A cos(px) + B sin(px)`, `A, B ~ N(0, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaMode {
    pub p: f64,
    pub variance: f64,
}

/// Truncated limit field `Ẇ` integrated over `[0,t]`, with the spatial window of the packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitFieldState {
    pub t: f64,
    pub modes: Vec<ThetaMode>,
    /// Variance carried by `p < p_lo` as a spatially constant phase.
    pub ir_variance: f64,
    /// Variance carried by `p > p_hi`, applied as `e^{-σ²/2}`.
    pub uv_variance: f64,
    x0: f64,
    h: f64,
    weights: Vec<Complex64>,
}

/// `∫₀ᵗ∫₀ᵗ e^{-g|s-u|} ds du = 2(gt - 1 + e^{-gt})/g²`.
pub fn ou_time_integral(g: f64, t: f64) -> f64 {
    let z = g * t;
    if z < 1e-3 {
        t * t * (1.0 - z / 3.0 + z * z / 12.0)
    } else {
        2.0 * (z - 1.0 + (-z).exp()) / (g * g)
    }
}

impl LimitFieldState {
    pub fn new(spec: &MediumSpec, packet: &InitialPacket, xi: f64, t: f64, cfg: CriticalConfig) -> Result<Self> {
        if spec.d() != 1 || packet.center.len() != 1 {
            return Err(Error::InvalidArgument("the critical sampler supports d = 1 only".into()));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("t must be finite and nonnegative, got {t}")));
        }
        if !(cfg.dx > 0.0 && cfg.half_width > 0.0 && cfg.panel_nodes > 0) {
            return Err(Error::InvalidArgument("invalid critical sampler discretisation".into()));
        }
        let (g, b, mu) = (spec.gamma(), spec.beta(), spec.mu());
        let a0 = spec.cutoff().amplitude_at_zero;
        let s_pow = 2.0 * g - 1.0;
        // Mode density of Θ on p > 0 (both signs folded): 2/(2π) · a(0) p^{-(2γ-1)} · I(p).
        let density = |p: f64| a0 * p.powf(-s_pow) * ou_time_integral(mu * p.powf(2.0 * b), t) / PI;

        let width = 2.0 * cfg.half_width * packet.width;
        let m = (width / cfg.dx).ceil().max(2.0) as usize;
        let h = width / m as f64;
        let x0 = packet.center[0] - 0.5 * width;
        let weights = (0..=m)
            .map(|i| {
                let x = x0 + i as f64 * h;
                Complex64::from_polar(h * packet.value(&[x]), -xi * x)
            })
            .collect();

        let knee = PI / width;
        let p_hi = cfg.p_hi.max(2.0 * knee);
        let p_lo = knee * 10f64.powi(-(cfg.log_decades as i32));
        let rule = gauss_legendre(cfg.panel_nodes);
        let mut modes = Vec::new();
        for dec in 0..cfg.log_decades as i32 {
            let lo = (p_lo * 10f64.powi(dec)).ln();
            let hi = (p_lo * 10f64.powi(dec + 1)).ln();
            let r = rule.mapped(lo, hi);
            for (u, w) in r.nodes.iter().zip(&r.weights) {
                let p = u.exp();
                modes.push(ThetaMode {
                    p,
                    variance: w * p * density(p),
                });
            }
        }
        let panels = ((p_hi - knee) / knee).ceil().max(1.0) as usize;
        let step = (p_hi - knee) / panels as f64;
        for j in 0..panels {
            let r = rule.mapped(knee + j as f64 * step, knee + (j + 1) as f64 * step);
            for (p, w) in r.nodes.iter().zip(&r.weights) {
                modes.push(ThetaMode {
                    p: *p,
                    variance: w * density(*p),
                });
            }
        }
        let tol = Tolerance::new(1e-15, 1e-11);
        let (ir_variance, uv_variance) = if t == 0.0 {
            (0.0, 0.0)
        } else {
            let ir = quad::integrate_power_singular(
                |p| a0 * ou_time_integral(mu * p.powf(2.0 * b), t) / PI,
                s_pow,
                p_lo,
                tol,
            )?
            .value;
            let uv = quad::integrate_to_infinity(density, p_hi, tol)?.value;
            (ir, uv)
        };
        Ok(LimitFieldState {
            t,
            modes,
            ir_variance,
            uv_variance,
            x0,
            h,
            weights,
        })
    }

    /// `Var Θ(t,x)` on the truncated mode set plus both remainders.
    pub fn total_variance(&self) -> f64 {
        self.resolved_variance() + self.ir_variance + self.uv_variance
    }

    pub fn resolved_variance(&self) -> f64 {
        self.modes.iter().map(|m| m.variance).sum()
    }

    pub fn grid_len(&self) -> usize {
        self.weights.len()
    }

    /// `Θ(t, x_i)` on the spatial window for one draw, plus the constant infrared phase.
    pub fn draw_theta<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        let n = self.weights.len();
        let mut theta = vec![0.0; n];
        for m in &self.modes {
            let sd = m.variance.sqrt();
            let a: f64 = sd * rng.sample::<f64, _>(StandardNormal);
            let b: f64 = sd * rng.sample::<f64, _>(StandardNormal);
            let coef = Complex64::new(a, -b);
            let mut z = Complex64::from_polar(1.0, m.p * self.x0);
            let rot = Complex64::from_polar(1.0, m.p * self.h);
            for th in theta.iter_mut() {
                *th += (coef * z).re;
                z *= rot;
            }
        }
        let ir = self.ir_variance.sqrt() * rng.sample::<f64, _>(StandardNormal);
        (theta, ir)
    }

    /// One sample of `ψ̄(t, ξ)`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Complex64 {
        let (theta, ir) = self.draw_theta(rng);
        let mut acc = Complex64::new(0.0, 0.0);
        for (w, th) in self.weights.iter().zip(&theta) {
            acc += w * Complex64::from_polar(1.0, -th);
        }
        acc * Complex64::from_polar((-0.5 * self.uv_variance).exp(), -ir)
    }

    /// `ψ̄` with the field switched off, i.e. the quadrature of `φ̂₀(ξ)`.
    pub fn unperturbed(&self) -> Complex64 {
        self.weights.iter().sum()
    }
}

/// `n` samples of the critical limit; sample `i` uses stream `i` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn sample_critical_limit(
    spec: &MediumSpec,
    packet: &InitialPacket,
    xi: f64,
    t: f64,
    cfg: CriticalConfig,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Complex64>> {
    let field = LimitFieldState::new(spec, packet, xi, t, cfg)?;
    Ok(exec.map(n, |i| field.sample(&mut rng::stream(seed, i as u64))))
}

/// A sample from an arbitrary distribution of `rand_distr`, seeded per index.
pub fn stream_sample<D: Distribution<f64>>(dist: &D, seed: u64, i: u64) -> f64 {
    dist.sample(&mut rng::stream(seed, i))
}
