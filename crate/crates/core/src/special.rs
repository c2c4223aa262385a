//! Special functions not covered by `statrs`.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Bessel `J₀(x) = (1/π)∫₀^π cos(x sin θ) dθ` by the trapezoid rule, which is spectrally
/// accurate for this periodic integrand once the point count exceeds `|x|/2` by a margin.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    let n = (x * 0.5 + 30.0).ceil() as usize * 2;
    let h = PI / n as f64;
    // Integrand is even about π/2; midpoints on [0, π].
    let mut s = 0.0;
    for k in 0..n {
        let th = (k as f64 + 0.5) * h;
        s += (x * th.sin()).cos();
    }
    s / n as f64
}

/// `sin(x)/x` with the removable singularity handled.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Beta function through log-gamma.
pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}
