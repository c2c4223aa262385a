//! Random-medium parameters, scaling exponents and regime classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide that an exponent sits on a regime boundary.
pub const BOUNDARY_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffKind {
    SharpBall,
    SmoothBump,
}

/// Cut-off profile `a(p)`, radial and compactly supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub kind: CutoffKind,
    pub p_max: f64,
    pub amplitude_at_zero: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        CutoffSpec {
            kind: CutoffKind::SharpBall,
            p_max: 1.0,
            amplitude_at_zero: 1.0,
        }
    }
}

impl CutoffSpec {
    /// `a` at radius `r = |p|`.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        match self.kind {
            CutoffKind::SharpBall => {
                if r <= self.p_max {
                    self.amplitude_at_zero
                } else {
                    0.0
                }
            }
            CutoffKind::SmoothBump => {
                let s = r / self.p_max;
                if s >= 1.0 {
                    0.0
                } else {
                    self.amplitude_at_zero * (1.0 - 1.0 / (1.0 - s * s)).exp()
                }
            }
        }
    }

    pub fn sup(&self) -> f64 {
        self.amplitude_at_zero
    }

    fn check(&self) -> Result<()> {
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return Err(Error::InvalidMedium(format!(
                "cutoff radius must be positive, got {}",
                self.p_max
            )));
        }
        if !(self.amplitude_at_zero > 0.0 && self.amplitude_at_zero.is_finite()) {
            return Err(Error::InvalidMedium(format!(
                "a(0) must be positive, got {}",
                self.amplitude_at_zero
            )));
        }
        Ok(())
    }
}

/// Unvalidated medium parameters as they appear in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMedium {
    pub d: usize,
    pub gamma: f64,
    pub beta: f64,
    pub mu: f64,
    #[serde(default)]
    pub cutoff: CutoffSpec,
}

/// Law of the random potential: power spectrum `a(p)/|p|^{2γ+d-2}` and gap `μ|p|^{2β}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMedium", into = "RawMedium")]
pub struct MediumSpec {
    d: usize,
    gamma: f64,
    beta: f64,
    mu: f64,
    cutoff: CutoffSpec,
}

impl TryFrom<RawMedium> for MediumSpec {
    type Error = Error;

    fn try_from(raw: RawMedium) -> Result<Self> {
        validate(raw)
    }
}

impl From<MediumSpec> for RawMedium {
    fn from(m: MediumSpec) -> Self {
        RawMedium {
            d: m.d,
            gamma: m.gamma,
            beta: m.beta,
            mu: m.mu,
            cutoff: m.cutoff,
        }
    }
}

pub fn validate(raw: RawMedium) -> Result<MediumSpec> {
    if !(1..=3).contains(&raw.d) {
        return Err(Error::InvalidMedium(format!("d must be 1, 2 or 3, got {}", raw.d)));
    }
    if !(raw.gamma > 0.0 && raw.gamma < 1.0) {
        return Err(Error::InvalidMedium(format!("gamma must lie in (0,1), got {}", raw.gamma)));
    }
    if !(raw.beta > 0.0 && raw.beta < 1.0) {
        return Err(Error::InvalidMedium(format!("beta must lie in (0,1), got {}", raw.beta)));
    }
    if raw.gamma + raw.beta <= 1.0 {
        return Err(Error::InvalidMedium(format!(
            "gamma + beta must exceed 1, got {}",
            raw.gamma + raw.beta
        )));
    }
    if !(raw.mu > 0.0 && raw.mu.is_finite()) {
        return Err(Error::InvalidMedium(format!("mu must be positive, got {}", raw.mu)));
    }
    raw.cutoff.check()?;
    Ok(MediumSpec {
        d: raw.d,
        gamma: raw.gamma,
        beta: raw.beta,
        mu: raw.mu,
        cutoff: raw.cutoff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingExponents {
    pub kappa: f64,
    pub alpha_c: f64,
    pub singular_exponent: f64,
    pub hurst: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeLabel {
    Homogenized,
    Critical,
    FractionalPhase,
    FractionalPhaseXi,
    OutOfTheory,
}

impl RegimeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeLabel::Homogenized => "homogenized",
            RegimeLabel::Critical => "critical",
            RegimeLabel::FractionalPhase => "fractional-phase",
            RegimeLabel::FractionalPhaseXi => "fractional-phase-xi",
            RegimeLabel::OutOfTheory => "out-of-theory",
        }
    }

    /// Regimes whose limit is a Gaussian phase `φ̂₀ e^{iθ}`.
    pub fn has_gaussian_phase(&self) -> bool {
        matches!(self, RegimeLabel::FractionalPhase | RegimeLabel::FractionalPhaseXi)
    }
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub label: RegimeLabel,
    pub alpha: f64,
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= BOUNDARY_RTOL * a.abs().max(b.abs()).max(1.0)
}

impl MediumSpec {
    pub fn new(d: usize, gamma: f64, beta: f64, mu: f64, cutoff: CutoffSpec) -> Result<Self> {
        validate(RawMedium {
            d,
            gamma,
            beta,
            mu,
            cutoff,
        })
    }

    /// d=1, γ=3/4, β=1/2, μ=1, sharp cutoff at 1.
    pub fn medium_a() -> Self {
        Self::new(1, 0.75, 0.5, 1.0, CutoffSpec::default()).expect("valid")
    }

    /// d=1, γ=1/2, β=3/4, μ=1, sharp cutoff at 1.
    pub fn medium_b() -> Self {
        Self::new(1, 0.5, 0.75, 1.0, CutoffSpec::default()).expect("valid")
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn cutoff(&self) -> &CutoffSpec {
        &self.cutoff
    }

    pub fn with_cutoff(mut self, cutoff: CutoffSpec) -> Result<Self> {
        cutoff.check()?;
        self.cutoff = cutoff;
        Ok(self)
    }

    pub fn exponents(&self) -> ScalingExponents {
        let denom = 2.0 * self.beta + self.gamma - 1.0;
        let kappa = 2.0 * self.beta / denom;
        ScalingExponents {
            kappa,
            alpha_c: 1.0 / denom,
            singular_exponent: (1.0 - self.gamma) / self.beta,
            hurst: 1.0 / kappa,
        }
    }

    pub fn kappa(&self) -> f64 {
        self.exponents().kappa
    }

    pub fn alpha_c(&self) -> f64 {
        self.exponents().alpha_c
    }

    /// Singular exponent `(1-γ)/β` of the time kernel.
    pub fn a_sing(&self) -> f64 {
        self.exponents().singular_exponent
    }

    /// Power of `|p|` in the spectral density.
    pub fn density_power(&self) -> f64 {
        2.0 * self.gamma + self.d as f64 - 2.0
    }

    /// Total solid angle of the unit sphere in `R^d`.
    pub fn omega(&self) -> f64 {
        match self.d {
            1 => 2.0,
            2 => 2.0 * std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI,
        }
    }

    pub fn classify_regime(&self, alpha: f64) -> Result<Regime> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        let e = self.exponents();
        let lower = e.kappa - e.alpha_c;
        let label = if near(alpha, e.alpha_c) {
            RegimeLabel::Critical
        } else if alpha > e.alpha_c {
            RegimeLabel::Homogenized
        } else if self.beta <= 0.5 {
            RegimeLabel::FractionalPhase
        } else if near(alpha, lower) {
            RegimeLabel::FractionalPhaseXi
        } else if alpha > lower {
            RegimeLabel::FractionalPhase
        } else {
            RegimeLabel::OutOfTheory
        };
        Ok(Regime { label, alpha })
    }

    /// Radial spectral density `a(r)/r^{2γ+d-2}`; `r` must be positive.
    pub fn density_radial(&self, r: f64) -> f64 {
        self.cutoff.eval(r) * r.powf(-self.density_power())
    }

    pub fn gap_radial(&self, r: f64) -> f64 {
        self.mu * r.powf(2.0 * self.beta)
    }

    /// `(R̂(p), 𝔤(p))` for a momentum vector of length `d`.
    pub fn spectral_data(&self, p: &[f64]) -> Result<(f64, f64)> {
        if p.len() != self.d {
            return Err(Error::InvalidArgument(format!(
                "momentum has {} components, expected {}",
                p.len(),
                self.d
            )));
        }
        let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r == 0.0 {
            return Err(Error::InvalidArgument(
                "spectral density is singular at p = 0".into(),
            ));
        }
        Ok((self.density_radial(r), self.gap_radial(r)))
    }

    pub fn gap(&self, p: &[f64]) -> f64 {
        self.gap_radial(p.iter().map(|x| x * x).sum::<f64>().sqrt())
    }
}
