//! Real-argument special functions on the positive axis: `ln Γ`, `ψ₀`, `ln G`
//! (Barnes) and the closed-form antiderivative of `ln Γ(1 + x)`.
//!
//! Everything here is evaluated in double precision without reflection
//! formulas; every function rejects arguments outside its positive domain.

use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};

/// Euler's constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `ζ′(−1) = 1/12 − ln A`, with `A` the Glaisher–Kinkelin constant.
pub const ZETA_PRIME_M1: f64 = -0.165_421_143_700_450_93;

/// `½ ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Named constants used by the closed-form connection formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpecialConstants {
    pub euler_gamma: f64,
    pub zeta_prime_m1: f64,
    pub ln2: f64,
    pub ln_pi: f64,
}

pub const CONSTANTS: SpecialConstants = SpecialConstants {
    euler_gamma: EULER_GAMMA,
    zeta_prime_m1: ZETA_PRIME_M1,
    ln2: LN_2,
    ln_pi: 1.144_729_885_849_400_2,
};

/// Bernoulli numbers `B_2, B_4, ..., B_20`.
const BERNOULLI: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Highest power kept in the Taylor series of `ln Γ(1 + ε)`.
const ZETA_TERMS: usize = 56;

fn check_positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{what} requires a finite positive argument, got {x}"
        )))
    }
}

/// `ζ(k)` for integer `k ≥ 2`, by direct summation plus an Euler–Maclaurin tail.
fn zeta_int(k: u32) -> f64 {
    const CUT: u32 = 16;
    let kf = f64::from(k);
    let n = f64::from(CUT);
    let mut head = 0.0;
    for j in (1..CUT).rev() {
        head += f64::from(j).powf(-kf);
    }
    let mut tail = n.powf(1.0 - kf) / (kf - 1.0) + 0.5 * n.powf(-kf);
    // B_{2j}/(2j)! * k(k+1)...(k+2j-2) * n^{-k-2j+1}
    let mut rising = kf;
    let mut factorial = 2.0;
    for (j, b) in BERNOULLI.iter().enumerate().take(8) {
        let j = (j + 1) as f64;
        tail += b / factorial * rising * n.powf(-kf - 2.0 * j + 1.0);
        rising *= (kf + 2.0 * j - 1.0) * (kf + 2.0 * j);
        factorial *= (2.0 * j + 1.0) * (2.0 * j + 2.0);
    }
    head + tail
}

fn zeta_table() -> &'static [f64; ZETA_TERMS + 1] {
    static TABLE: OnceLock<[f64; ZETA_TERMS + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; ZETA_TERMS + 1];
        for (k, z) in t.iter_mut().enumerate().skip(2) {
            *z = zeta_int(k as u32);
        }
        t
    })
}

/// `ln Γ(1 + ε)` for `|ε| ≤ 1/2` from `−γε + Σ_{k≥2} (−ε)^k ζ(k)/k`.
fn ln_gamma_1p_series(eps: f64) -> f64 {
    let zeta = zeta_table();
    let mut acc = zeta[ZETA_TERMS] / ZETA_TERMS as f64;
    for k in (2..ZETA_TERMS).rev() {
        acc = zeta[k] / k as f64 - eps * acc;
    }
    eps * eps * acc - EULER_GAMMA * eps
}

fn ln_gamma_stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut corr = 0.0;
    let mut p = inv;
    for (k, b) in BERNOULLI.iter().enumerate().take(8) {
        let n = 2.0 * (k as f64 + 1.0);
        corr += b / (n * (n - 1.0)) * p;
        p *= inv2;
    }
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + corr
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_positive(x, "ln_gamma")?;
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        ln_gamma_1p_series(x) - x.ln()
    } else if x < 1.5 {
        ln_gamma_1p_series(x - 1.0)
    } else if x < 2.5 {
        let eps = x - 2.0;
        ln_gamma_1p_series(eps) + eps.ln_1p()
    } else if x < 12.0 {
        // shift down into [1.5, 2.5); every term is positive so nothing cancels
        let m = (x - 1.5).floor();
        let y = x - m;
        let mut prod = 1.0;
        let mut k = 0.0;
        while k < m {
            prod *= y + k;
            k += 1.0;
        }
        ln_gamma_unchecked(y) + prod.ln()
    } else {
        ln_gamma_stirling(x)
    }
}

/// Digamma `ψ₀(x) = Γ′(x)/Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive(x, "digamma")?;
    let mut shift = 0.0;
    let mut y = x;
    while y < 10.0 {
        shift -= 1.0 / y;
        y += 1.0;
    }
    let inv2 = 1.0 / (y * y);
    let mut corr = 0.0;
    let mut p = inv2;
    for (k, b) in BERNOULLI.iter().enumerate().take(8) {
        let n = 2.0 * (k as f64 + 1.0);
        corr += b / n * p;
        p *= inv2;
    }
    Ok(shift + y.ln() - 0.5 / y - corr)
}

/// Argument above which `ln G` uses its asymptotic expansion directly.
const BARNES_SHIFT: f64 = 20.0;

/// `ln G(1 + z)` for large `z` (asymptotic expansion).
fn ln_barnes_g_asymptotic(z: f64) -> f64 {
    let ln_z = z.ln();
    let inv2 = 1.0 / (z * z);
    let mut corr = 0.0;
    let mut p = inv2;
    // Σ B_{2k+2} / (4k(k+1) z^{2k})
    for (k, b) in BERNOULLI.iter().enumerate().take(8).skip(1) {
        let kf = k as f64;
        corr += b / (4.0 * kf * (kf + 1.0)) * p;
        p *= inv2;
    }
    0.5 * z * z * ln_z - 0.75 * z * z + z * HALF_LN_2PI - ln_z / 12.0 + ZETA_PRIME_M1 + corr
}

/// `ln G(x)` of the Barnes G-function for `x > 0`.
///
/// Arguments below the shift threshold are moved up with `G(z+1) = Γ(z) G(z)`
/// and evaluated from the large-argument expansion.
pub fn ln_barnes_g(x: f64) -> Result<f64> {
    check_positive(x, "ln_barnes_g")?;
    let mut y = x;
    let mut acc = 0.0;
    while y < BARNES_SHIFT {
        acc += ln_gamma_unchecked(y);
        y += 1.0;
    }
    Ok(ln_barnes_g_asymptotic(y - 1.0) - acc)
}

/// Closed form of `∫₀^z ln Γ(1 + x) dx` for `z > −1`.
pub fn lngamma_antiderivative(z: f64) -> Result<f64> {
    if !(z > -1.0 && z.is_finite()) {
        return Err(Error::domain(format!(
            "lngamma_antiderivative requires z > -1, got {z}"
        )));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let lg = ln_gamma_unchecked(1.0 + z);
    Ok(z * HALF_LN_2PI - 0.5 * z * (z + 1.0) + z * lg - ln_barnes_g(1.0 + z)?)
}

/// `ln A` (Glaisher–Kinkelin) from the Euler–Maclaurin expansion of
/// `Σ_{k≤n} k ln k`. Used to cross-check [`ZETA_PRIME_M1`].
pub fn ln_glaisher() -> f64 {
    let n = 10usize;
    let nf = n as f64;
    // Neumaier-compensated sum of k ln k
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for k in 2..=n {
        let kf = k as f64;
        let term = kf * kf.ln();
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    let mut ln_a =
        (sum + comp) - (0.5 * nf * nf + 0.5 * nf + 1.0 / 12.0) * nf.ln() + 0.25 * nf * nf;
    // remainder terms -B_{2j} / ((2j)(2j-1)(2j-2)) n^{2-2j}, j >= 2
    for (j, b) in BERNOULLI.iter().enumerate().skip(1) {
        let m = 2.0 * (j as f64 + 1.0);
        ln_a += b / (m * (m - 1.0) * (m - 2.0)) * nf.powf(2.0 - m);
    }
    ln_a
}

/// `Γ(1/2)² = π`; exposed for symmetry with the other constants.
pub fn ln_gamma_half() -> f64 {
    0.5 * PI.ln()
}
