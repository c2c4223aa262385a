//! Spectral synthesis of the Gaussian potential on a periodic grid. Each Fourier mode is an
//! independent Ornstein–Uhlenbeck process stepped exactly.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::medium::{MediumSpec, RegimeLabel};
use crate::par::Execution;
use crate::rng;

/// Periodic grid of `n^d` points on the torus `[-L/2, L/2)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    pub length: f64,
}

impl GridSpec {
    pub fn new(d: usize, n: usize, length: f64) -> Result<Self> {
        let g = GridSpec { d, n, length };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(Error::InvalidGrid(format!("d must be 1, 2 or 3, got {}", self.d)));
        }
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n must be a power of two >= 8, got {}",
                self.n
            )));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {}", self.length)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn dq(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.length
    }

    /// Cell volume `Δx^d`.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Signed wavenumber index of FFT position `j` on one axis, in `[-n/2, n/2)`.
    pub fn signed_index(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j < n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Per-axis FFT positions of a flat index (row-major, last axis fastest).
    pub fn axes(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.d];
        let mut rem = flat;
        for a in (0..self.d).rev() {
            out[a] = rem % self.n;
            rem /= self.n;
        }
        out
    }

    pub fn signed_indices(&self, flat: usize) -> Vec<i64> {
        self.axes(flat).into_iter().map(|j| self.signed_index(j)).collect()
    }

    pub fn flat(&self, axes: &[usize]) -> usize {
        axes.iter().fold(0, |acc, &j| acc * self.n + j)
    }

    /// Flat index of the mode with signed indices `k`, if it lies on the grid.
    pub fn flat_of_signed(&self, k: &[i64]) -> Option<usize> {
        let n = self.n as i64;
        let mut axes = Vec::with_capacity(self.d);
        for &ki in k {
            if ki < -n / 2 || ki >= n / 2 {
                return None;
            }
            axes.push(ki.rem_euclid(n) as usize);
        }
        Some(self.flat(&axes))
    }

    pub fn wavevector(&self, flat: usize) -> Vec<f64> {
        let dq = self.dq();
        self.signed_indices(flat).into_iter().map(|k| k as f64 * dq).collect()
    }

    pub fn wavenumber_sq(&self, flat: usize) -> f64 {
        self.wavevector(flat).iter().map(|q| q * q).sum()
    }

    /// Index of `-q`.
    pub fn partner(&self, flat: usize) -> usize {
        let axes: Vec<usize> = self.axes(flat).into_iter().map(|j| (self.n - j) % self.n).collect();
        self.flat(&axes)
    }

    /// Whether any axis sits at the unpaired Nyquist index `-n/2`.
    pub fn is_nyquist(&self, flat: usize) -> bool {
        self.axes(flat).into_iter().any(|j| j == self.n / 2)
    }

    /// Grid mode equal to the probe frequency `xi`, or an error if `xi` is off-grid.
    pub fn mode_of(&self, xi: &[f64]) -> Result<usize> {
        if xi.len() != self.d {
            return Err(Error::OffGrid(xi.to_vec()));
        }
        let mut k = Vec::with_capacity(self.d);
        for &x in xi {
            let f = x / self.dq();
            let r = f.round();
            if (f - r).abs() > 1e-9 * f.abs().max(1.0) {
                return Err(Error::OffGrid(xi.to_vec()));
            }
            k.push(r as i64);
        }
        self.flat_of_signed(&k).ok_or_else(|| Error::OffGrid(xi.to_vec()))
    }

    /// Flat offset of a grid-aligned spatial displacement.
    pub fn shift_of(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.d {
            return Err(Error::InvalidArgument("lag dimension mismatch".into()));
        }
        x.iter()
            .map(|&xi| {
                let f = xi / self.dx();
                let r = f.round();
                if (f - r).abs() > 1e-9 * f.abs().max(1.0) {
                    Err(Error::InvalidArgument(format!("lag {xi} is not a multiple of dx")))
                } else {
                    Ok((r as i64).rem_euclid(self.n as i64) as usize)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Physical,
    Rescaled { eps: f64, alpha: f64 },
}

/// Stationary variance density and relaxation rate of every grid mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMedium {
    pub grid: GridSpec,
    pub mode_density: Vec<f64>,
    pub mode_gap: Vec<f64>,
    pub provenance: Provenance,
    /// Representative `(q, -q)` pairs with nonzero density, in flat-index order.
    pairs: Vec<(usize, usize)>,
}

impl EffectiveMedium {
    fn build(grid: GridSpec, provenance: Provenance, mut eval: impl FnMut(f64) -> (f64, f64)) -> Self {
        let n = grid.len();
        let mut density = vec![0.0; n];
        let mut gap = vec![0.0; n];
        for i in 1..n {
            let r = grid.wavenumber_sq(i).sqrt();
            let (s, g) = eval(r);
            gap[i] = g;
            if !grid.is_nyquist(i) {
                density[i] = s;
            }
        }
        let pairs = (0..n)
            .filter_map(|i| {
                let p = grid.partner(i);
                (i < p && density[i] > 0.0).then_some((i, p))
            })
            .collect();
        EffectiveMedium {
            grid,
            mode_density: density,
            mode_gap: gap,
            provenance,
            pairs,
        }
    }

    /// `E|c_q|²` for the mode amplitudes of the real-space field.
    pub fn mode_variance(&self, flat: usize) -> f64 {
        self.mode_density[flat] / self.grid.length.powi(self.grid.d as i32)
    }

    /// Discrete analogue of `R(t, x)`.
    pub fn mode_sum_covariance(&self, t: f64, x: &[f64]) -> f64 {
        self.pairs
            .iter()
            .map(|&(i, _)| {
                let q = self.grid.wavevector(i);
                let phase: f64 = q.iter().zip(x).map(|(a, b)| a * b).sum();
                2.0 * self.mode_variance(i) * (-self.mode_gap[i] * t.abs()).exp() * phase.cos()
            })
            .sum()
    }

    pub fn variance(&self) -> f64 {
        self.mode_sum_covariance(0.0, &vec![0.0; self.grid.d])
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }
}

/// Physical medium on the grid: density `R̂(q)`, gap `𝔤(q)`.
pub fn physical_medium(spec: &MediumSpec, grid: GridSpec) -> Result<EffectiveMedium> {
    check_grid(spec, &grid)?;
    Ok(EffectiveMedium::build(grid, Provenance::Physical, |r| {
        (spec.density_radial(r), spec.gap_radial(r))
    }))
}

fn check_grid(spec: &MediumSpec, grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    if grid.d != spec.d() {
        return Err(Error::InvalidGrid(format!(
            "grid dimension {} differs from medium dimension {}",
            grid.d,
            spec.d()
        )));
    }
    Ok(())
}

/// Medium of the rescaled potential `ε^{1-κ} V(t/ε^κ, x/ε^α)`:
/// `S_ε(q) = ε^{2-2κ+αd} a(ε^α q)/(ε^α|q|)^{2γ+d-2}`, `g_ε(q) = ε^{2αβ-κ} μ|q|^{2β}`.
pub fn rescaled_medium(spec: &MediumSpec, eps: f64, alpha: f64, grid: GridSpec) -> Result<EffectiveMedium> {
    check_grid(spec, &grid)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0,1], got {eps}")));
    }
    let regime = spec.classify_regime(alpha)?;
    let kappa = spec.kappa();
    let d = spec.d() as f64;
    let amp = eps.powf(2.0 - 2.0 * kappa + alpha * d);
    let scale = eps.powf(alpha);
    // At the critical exponent the gap prefactor is exactly one.
    let gap_exp = if regime.label == RegimeLabel::Critical {
        0.0
    } else {
        2.0 * alpha * spec.beta() - kappa
    };
    let gap_pref = if gap_exp == 0.0 { 1.0 } else { eps.powf(gap_exp) };
    let power = spec.density_power();
    let cutoff = *spec.cutoff();
    Ok(EffectiveMedium::build(
        grid,
        Provenance::Rescaled { eps, alpha },
        |r| {
            let sr = scale * r;
            let s = amp * cutoff.eval(sr) * sr.powf(-power);
            (s, gap_pref * spec.gap_radial(r))
        },
    ))
}

#[derive(Debug, Clone)]
struct OuFactors {
    dt: f64,
    decay: Vec<f64>,
    noise: Vec<f64>,
}

/// Mode amplitudes of the potential at one instant.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub medium: Arc<EffectiveMedium>,
    pub modes: Vec<Complex64>,
    pub time: f64,
    seed: u64,
    stream: u64,
    factors: Option<OuFactors>,
}

impl FieldState {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of random streams consumed so far.
    pub fn streams_used(&self) -> u64 {
        self.stream
    }

    /// A field with every mode set to zero, for deterministic runs.
    pub fn zero(medium: Arc<EffectiveMedium>) -> Self {
        let n = medium.grid.len();
        FieldState {
            medium,
            modes: vec![Complex64::new(0.0, 0.0); n],
            time: 0.0,
            seed: 0,
            stream: 0,
            factors: None,
        }
    }

    /// Exact OU update of every mode over `dt`.
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        if !(dt >= 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be nonnegative, got {dt}")));
        }
        if dt == 0.0 {
            return Ok(());
        }
        let m = &self.medium;
        if self.factors.as_ref().map(|f| f.dt) != Some(dt) {
            let mut decay = Vec::with_capacity(m.pairs.len());
            let mut noise = Vec::with_capacity(m.pairs.len());
            for &(i, _) in &m.pairs {
                let e = (-m.mode_gap[i] * dt).exp();
                decay.push(e);
                let s2 = -(-2.0 * m.mode_gap[i] * dt).exp_m1();
                noise.push((s2 * 0.5 * m.mode_variance(i)).sqrt());
            }
            self.factors = Some(OuFactors { dt, decay, noise });
        }
        let f = self.factors.as_ref().expect("set above");
        let mut rng = rng::stream(self.seed, self.stream);
        self.stream += 1;
        for (k, &(i, p)) in m.pairs.iter().enumerate() {
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            let c = self.modes[i] * f.decay[k] + Complex64::new(x, y) * f.noise[k];
            self.modes[i] = c;
            self.modes[p] = c.conj();
        }
        self.time += dt;
        Ok(())
    }

    /// Real-space values at `x_j = j Δx` using a caller-owned transform and buffer.
    pub fn real_space_into(&self, fft: &FftNd, buf: &mut Vec<Complex64>, out: &mut Vec<f64>) {
        buf.clear();
        buf.extend_from_slice(&self.modes);
        fft.inverse(buf);
        out.clear();
        out.extend(buf.iter().map(|z| z.re));
    }

    pub fn real_space(&self) -> Vec<f64> {
        let g = self.medium.grid;
        let fft = FftNd::new(g.n, g.d);
        let mut buf = Vec::new();
        let mut out = Vec::new();
        self.real_space_into(&fft, &mut buf, &mut out);
        out
    }

    /// Complex real-space values, exposing the (round-off) imaginary part.
    pub fn real_space_complex(&self) -> Vec<Complex64> {
        let g = self.medium.grid;
        let mut buf = self.modes.clone();
        FftNd::new(g.n, g.d).inverse(&mut buf);
        buf
    }
}

/// Draw a field from the stationary law.
pub fn draw_stationary(medium: Arc<EffectiveMedium>, seed: u64) -> FieldState {
    let mut modes = vec![Complex64::new(0.0, 0.0); medium.grid.len()];
    let mut rng = rng::stream(seed, 0);
    for &(i, p) in &medium.pairs {
        let s = (0.5 * medium.mode_variance(i)).sqrt();
        let x: f64 = StandardNormal.sample(&mut rng);
        let y: f64 = StandardNormal.sample(&mut rng);
        let c = Complex64::new(x, y) * s;
        modes[i] = c;
        modes[p] = c.conj();
    }
    FieldState {
        medium,
        modes,
        time: 0.0,
        seed,
        stream: 1,
        factors: None,
    }
}

/// Mode amplitudes of a real field sampled at `x_j = j Δx`.
pub fn modes_from_real_space(grid: &GridSpec, values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftNd::new(grid.n, grid.d).forward(&mut buf);
    let inv = 1.0 / grid.len() as f64;
    buf.iter_mut().for_each(|z| *z *= inv);
    buf
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lag {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub lag: Lag,
    pub mean: f64,
    pub stderr: f64,
    pub oracle: f64,
}

/// Sample mean and standard error `sd/√n`.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimates of `R(t, x)` on the grid. Each sample averages
/// `V(t, y + x) V(0, y)` over all grid points `y`, so samples are i.i.d. and unbiased.
pub fn empirical_covariance(
    medium: Arc<EffectiveMedium>,
    n_samples: usize,
    lags: &[Lag],
    seed: u64,
    exec: Execution,
) -> Result<Vec<CovarianceEstimate>> {
    if n_samples < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 samples, got {n_samples}")));
    }
    let grid = medium.grid;
    let shifts = lags
        .iter()
        .map(|l| {
            if !(l.t >= 0.0) {
                return Err(Error::InvalidArgument(format!("negative time lag {}", l.t)));
            }
            grid.shift_of(&l.x)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..lags.len()).collect();
    order.sort_by(|&a, &b| lags[a].t.total_cmp(&lags[b].t));

    let per_sample: Vec<Vec<f64>> = exec.map(n_samples, |s| {
        let fft = FftNd::new(grid.n, grid.d);
        let mut buf = Vec::new();
        let mut v0 = Vec::new();
        let mut vt = Vec::new();
        let mut field = draw_stationary(medium.clone(), rng::realization_seed(seed, s as u64));
        field.real_space_into(&fft, &mut buf, &mut v0);
        let mut out = vec![0.0; lags.len()];
        for &li in &order {
            let dt = lags[li].t - field.time;
            field.advance(dt.max(0.0)).expect("nonnegative");
            field.real_space_into(&fft, &mut buf, &mut vt);
            out[li] = lag_product(&grid, &v0, &vt, &shifts[li]);
        }
        out
    });
    Ok(lags
        .iter()
        .enumerate()
        .map(|(li, lag)| {
            let vals: Vec<f64> = per_sample.iter().map(|v| v[li]).collect();
            let (mean, stderr) = mean_and_stderr(&vals);
            CovarianceEstimate {
                lag: lag.clone(),
                mean,
                stderr,
                oracle: medium.mode_sum_covariance(lag.t, &lag.x),
            }
        })
        .collect())
}

fn lag_product(grid: &GridSpec, v0: &[f64], vt: &[f64], shift: &[usize]) -> f64 {
    let n = grid.n;
    let mut acc = 0.0;
    for j in 0..v0.len() {
        let axes = grid.axes(j);
        let moved: Vec<usize> = axes.iter().zip(shift).map(|(a, s)| (a + s) % n).collect();
        acc += vt[grid.flat(&moved)] * v0[j];
    }
    acc / v0.len() as f64
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"RSFD";
const SNAPSHOT_VERSION: u32 = 1;

/// Little-endian dump: magic `RSFD`, u32 version, u32 d, u64 n, f64 length, f64 time,
/// then `n^d` pairs of f64 `(re, im)` in flat-index order.
pub fn write_snapshot<W: Write>(state: &FieldState, mut w: W) -> std::io::Result<()> {
    let g = state.medium.grid;
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(g.d as u32).to_le_bytes())?;
    w.write_all(&(g.n as u64).to_le_bytes())?;
    w.write_all(&g.length.to_le_bytes())?;
    w.write_all(&state.time.to_le_bytes())?;
    for z in &state.modes {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub struct Snapshot {
    pub grid: GridSpec,
    pub time: f64,
    pub modes: Vec<Complex64>,
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot> {
    let bad = |m: &str| Error::InvalidArgument(format!("bad snapshot: {m}"));
    let io = |e: std::io::Error| Error::io("<snapshot>", e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(bad("magic"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4).map_err(io)?;
    if u32::from_le_bytes(b4) != SNAPSHOT_VERSION {
        return Err(bad("version"));
    }
    r.read_exact(&mut b4).map_err(io)?;
    let d = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8).map_err(io)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8).map_err(io)?;
    let length = f64::from_le_bytes(b8);
    r.read_exact(&mut b8).map_err(io)?;
    let time = f64::from_le_bytes(b8);
    let grid = GridSpec::new(d, n, length)?;
    let mut modes = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        r.read_exact(&mut b8).map_err(io)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8).map_err(io)?;
        modes.push(Complex64::new(re, f64::from_le_bytes(b8)));
    }
    Ok(Snapshot { grid, time, modes })
}
