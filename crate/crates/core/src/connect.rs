//! Closed-form connection data.
//!
//! Small-`t` behaviour of the transcendent and its tau-function:
//!
//! ```text
//! u(t/2) = B t^σ (1 − (ν/B)(1−σ)^{−2} t^{1−σ} + Bν(1+σ)^{−2} t^{1+σ} + …),
//! τ(t)   ~ A t^{σ(σ−2)/4},
//! ```
//!
//! the degenerate logarithmic case `σ = 1`, and the large-`t` tau expansion.
//! All products of Gamma and Barnes functions are summed in log space.

use std::f64::consts::{LN_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sinhg::ModelParams;
use crate::specfun::{digamma, ln_barnes_g, ln_gamma, EULER_GAMMA, ZETA_PRIME_M1};

/// Snap `πλ` to 1 within this distance (λ = 1/π typed in decimal).
const UNIT_SNAP: f64 = 1e-10;

/// Direction of the `σ ↔ λ` map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `λ ↦ σ = (2/π) arcsin(πλ)`
    Forward,
    /// `σ ↦ λ = sin(πσ/2)/π`
    Inverse,
}

pub fn sigma_lambda_map(value: f64, direction: Direction) -> Result<f64> {
    match direction {
        Direction::Forward => sigma_of_lambda(value),
        Direction::Inverse => lambda_of_sigma(value),
    }
}

pub fn sigma_of_lambda(lambda: f64) -> Result<f64> {
    let x = PI * lambda;
    if !(0.0..=1.0 + UNIT_SNAP).contains(&x) {
        return Err(Error::domain(format!(
            "lambda must satisfy 0 <= pi*lambda <= 1, got lambda = {lambda}"
        )));
    }
    if (x - 1.0).abs() <= UNIT_SNAP {
        return Ok(1.0);
    }
    Ok(2.0 / PI * x.asin())
}

pub fn lambda_of_sigma(sigma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::domain(format!(
            "sigma must lie in [0, 1], got {sigma}"
        )));
    }
    Ok((0.5 * PI * sigma).sin() / PI)
}

/// `(ln|Γ(x)|, sign Γ(x))` for `x > −1`, `x ≠ 0`.
fn ln_gamma_signed(x: f64) -> Result<(f64, f64)> {
    if x > 0.0 {
        Ok((ln_gamma(x)?, 1.0))
    } else if x > -1.0 && x < 0.0 {
        Ok((ln_gamma(x + 1.0)? - (-x).ln(), -1.0))
    } else {
        Err(Error::domain(format!(
            "Gamma pole or unsupported argument {x}"
        )))
    }
}

/// `B(ν, σ) = 2^{−3σ} Γ²((1−σ)/2)/Γ²((1+σ)/2) · Γ(ν+(1+σ)/2)/Γ(ν+(1−σ)/2)`.
///
/// Negative for `σ > 1 + 2ν`.
pub fn coefficient_b(nu: f64, sigma: f64) -> Result<f64> {
    if !(nu > -0.5) {
        return Err(Error::domain(format!(
            "coefficient_b requires nu > -1/2, got {nu}"
        )));
    }
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::domain(format!(
            "coefficient_b requires sigma in [0, 1), got {sigma}"
        )));
    }
    let lower = nu + 0.5 * (1.0 - sigma);
    if lower == 0.0 {
        return Err(Error::domain(
            "coefficient_b: Gamma pole at nu + (1 - sigma)/2 = 0",
        ));
    }
    let (ln_den, sign) = ln_gamma_signed(lower)?;
    let ln_b = -3.0 * sigma * LN_2 + 2.0 * ln_gamma(0.5 * (1.0 - sigma))?
        - 2.0 * ln_gamma(0.5 * (1.0 + sigma))?
        + ln_gamma(nu + 0.5 * (1.0 + sigma))?
        - ln_den;
    Ok(sign * ln_b.exp())
}

/// Three-term small-`t` expansion of `u(t/2)`.
///
/// Takes the expansion variable `t`; the Painlevé argument is `t/2`.
pub fn u_smallt(t: f64, nu: f64, lambda: f64) -> Result<f64> {
    let p = ModelParams::from_lambda(nu, lambda)?;
    p.require_hypothesis()?;
    if p.sigma >= 1.0 {
        return Err(Error::domain(
            "u_smallt needs sigma < 1; use u_degenerate at lambda = 1/pi",
        ));
    }
    let b = coefficient_b(nu, p.sigma)?;
    if b == 0.0 {
        return Err(Error::domain("u_smallt: B vanishes"));
    }
    let sg = p.sigma;
    Ok(b * t.powf(sg)
        * (1.0 - nu / b / (1.0 - sg).powi(2) * t.powf(1.0 - sg)
            + b * nu / (1.0 + sg).powi(2) * t.powf(1.0 + sg)))
}

fn degenerate_k(nu: f64) -> Result<f64> {
    Ok(3.0 * LN_2 - 2.0 * EULER_GAMMA - digamma(1.0 + nu)?)
}

/// `c(ν) = 1 + 2ν(3 ln 2 − 2γ − ψ₀(1 + ν))`.
pub fn c_of_nu(nu: f64) -> Result<f64> {
    if !(nu > -0.5) {
        return Err(Error::domain(format!(
            "c_of_nu requires nu > -1/2, got {nu}"
        )));
    }
    Ok(1.0 + 2.0 * nu * degenerate_k(nu)?)
}

/// `u(t/2; ν, 1/π) ≈ (t/2){ν ln²t − c ln t + (c² − 1)/(4ν)}`.
///
/// With `c = 1 + 2νk` the last term is `k(1 + νk)`, which is regular at ν = 0.
pub fn u_degenerate(t: f64, nu: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!(
            "u_degenerate requires t > 0, got {t}"
        )));
    }
    let c = c_of_nu(nu)?;
    let k = degenerate_k(nu)?;
    let lt = t.ln();
    Ok(0.5 * t * (nu * lt * lt - c * lt + k * (1.0 + nu * k)))
}

fn check_amplitude_args(p: &ModelParams) -> Result<()> {
    if !(p.sigma > 0.0) {
        return Err(Error::domain("tau amplitude needs sigma > 0 (lambda > 0)"));
    }
    if p.nu != 0.0 {
        p.require_hypothesis()?;
    }
    Ok(())
}

fn ln_tracy_part(s: f64) -> Result<f64> {
    Ok(3.0 * ZETA_PRIME_M1 - (3.0 * s * s + 1.0 / 6.0) * LN_2)
}

/// `ln A(ν, λ)` of the small-`t` tau amplitude.
pub fn ln_coefficient_a(nu: f64, lambda: f64) -> Result<f64> {
    let p = ModelParams::from_lambda(nu, lambda)?;
    check_amplitude_args(&p)?;
    let s = p.s;
    let g_ratio = 2.0 * ln_barnes_g(1.0 + s)? + 2.0 * ln_barnes_g(1.0 - s)?
        - ln_barnes_g(1.0 + s + nu)?
        - ln_barnes_g(1.0 - s + nu)?;
    let half = 2.0 * ln_barnes_g(0.5)? + ln_gamma(0.5)?
        - 2.0 * ln_barnes_g(nu + 0.5)?
        - ln_gamma(nu + 0.5)?;
    let mut ln_a = ln_tracy_part(s)? - g_ratio + half;
    if nu != 0.0 {
        let gam = ln_gamma(1.0 - s + nu)? + ln_gamma(1.0 + s + nu)? - 2.0 * ln_gamma(nu + 0.5)?;
        ln_a += -0.5 * nu * gam + 0.5 * nu * (s + nu).ln();
    }
    Ok(ln_a)
}

/// Small-`t` tau amplitude `A(ν, λ)`.
///
/// Requires `σ > 0` and, for `ν ≠ 0`, `s + ν > 0`. At `ν = 0` the formula is
/// valid on the whole of `s ∈ [0, ½)`.
pub fn coefficient_a(nu: f64, lambda: f64) -> Result<f64> {
    Ok(ln_coefficient_a(nu, lambda)?.exp())
}

/// The `ν = 0` amplitude `e^{3ζ′(−1) − (3s² + 1/6) ln 2} / (G(1+s) G(1−s))`.
pub fn coefficient_a_tracy(lambda: f64) -> Result<f64> {
    let p = ModelParams::from_lambda(0.0, lambda)?;
    check_amplitude_args(&p)?;
    let s = p.s;
    Ok((ln_tracy_part(s)? - ln_barnes_g(1.0 + s)? - ln_barnes_g(1.0 - s)?).exp())
}

/// `τ − 1` from the two-term large-`t` expansion.
pub fn tau_largetime_minus_one(t: f64, nu: f64, lambda: f64) -> Result<f64> {
    if !(t > 0.0) || !(nu > -0.5) {
        return Err(Error::domain("tau_largetime requires t > 0 and nu > -1/2"));
    }
    sigma_of_lambda(lambda)?;
    let lg = ln_gamma(nu + 0.5)?;
    let scale = (2.0 * lg - (2.0 * nu + 1.0) * (2.0 * t).ln() - 2.0 * t).exp();
    let braces = nu - (nu + 0.5) * (nu * nu + 1.5 * nu + 1.0) / t;
    Ok(-0.5 * lambda * lambda * scale * braces)
}

pub fn tau_largetime(t: f64, nu: f64, lambda: f64) -> Result<f64> {
    Ok(1.0 + tau_largetime_minus_one(t, nu, lambda)?)
}

/// `G(½) G(3/2) = e^{3ζ′(−1) + ln 2 / 12}`, the critical diagonal amplitude.
pub fn wu_constant() -> f64 {
    (3.0 * ZETA_PRIME_M1 + LN_2 / 12.0).exp()
}

/// `(F₋(t), F₊(t))`: the tau-function at `(ν, λ) = (0, 1/π)` scaled by
/// `2^{3/8} t^{1/4}`, and the same times `tanh(q/2)`.
pub fn scaling_functions(t: f64) -> Result<(f64, f64)> {
    if t <= 0.01 {
        log::warn!("scaling functions at t = {t}: close to the degenerate small-t regime");
    }
    let traj = crate::tau::critical_trajectory(t.min(crate::sinhg::DEFAULT_T_MIN))?;
    let v = crate::tau::scaling_values(&traj, t)?;
    Ok((v.f_minus, v.f_plus))
}

/// Analytic connection data at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConnectionConstants {
    pub params: ModelParams,
    /// `None` at σ = 1, where `u` is logarithmic.
    #[serde(rename = "B")]
    pub b: Option<f64>,
    /// `None` at σ = 0, where τ ≡ 1.
    #[serde(rename = "A")]
    pub a: Option<f64>,
    pub exponent_u: f64,
    pub exponent_tau: f64,
}

/// All closed-form constants; fails outside `s + ν > 0` except at ν = 0,
/// where the amplitude formula extends to `s = 0`.
pub fn connection_constants(params: ModelParams) -> Result<ConnectionConstants> {
    if params.nu != 0.0 {
        params.require_hypothesis()?;
    }
    let sg = params.sigma;
    let b = if sg < 1.0 {
        Some(coefficient_b(params.nu, sg)?)
    } else {
        None
    };
    let a = if sg > 0.0 {
        Some(coefficient_a(params.nu, params.lambda)?)
    } else {
        None
    };
    Ok(ConnectionConstants {
        params,
        b,
        a,
        exponent_u: sg,
        exponent_tau: 0.25 * sg * (sg - 2.0),
    })
}

/// One sample of the `B(ν, σ)` and `A(ν, σ)` curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub nu: f64,
    pub sigma: f64,
    #[serde(rename = "B")]
    pub b: Option<f64>,
    #[serde(rename = "A")]
    pub a: Option<f64>,
}

/// Default ν values and σ resolution for the B and A curves.
pub const CURVE_NUS: [f64; 6] = [-0.4, -0.2, 0.0, 0.5, 1.0, 2.0];
pub const CURVE_SIGMA_SAMPLES: usize = 101;

/// `B` and `A` on `σ ∈ [0, 1]` for each ν; entries are `None` where a formula
/// does not apply (`A` needs `s + ν > 0`, `B` needs `σ < 1`).
pub fn curves(nus: &[f64], n_sigma: usize) -> Result<Vec<CurvePoint>> {
    if n_sigma < 2 {
        return Err(Error::domain("need at least two sigma samples"));
    }
    let mut out = Vec::with_capacity(nus.len() * n_sigma);
    for &nu in nus {
        for i in 0..n_sigma {
            let sigma = i as f64 / (n_sigma - 1) as f64;
            let p = ModelParams::from_sigma(nu, sigma)?;
            let b = if sigma < 1.0 && (nu + 0.5 * (1.0 - sigma)) != 0.0 {
                Some(coefficient_b(nu, sigma)?)
            } else {
                None
            };
            let a = if sigma > 0.0 && (nu == 0.0 || p.satisfies_hypothesis()) {
                Some(coefficient_a(nu, p.lambda)?)
            } else {
                None
            };
            out.push(CurvePoint { nu, sigma, b, a });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lam(sigma: f64) -> f64 {
        lambda_of_sigma(sigma).unwrap()
    }

    #[test]
    // 0.31830988618 is 1/π as typed on a command line
    #[allow(clippy::approx_constant)]
    fn sigma_map_special_values() {
        assert_eq!(sigma_of_lambda(0.0).unwrap(), 0.0);
        assert!((sigma_of_lambda(1.0 / PI).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(sigma_of_lambda(0.31830988618).unwrap(), 1.0);
        assert!((sigma_of_lambda(0.5 / PI).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(sigma_of_lambda(0.4).unwrap_err().is_domain());
        assert!(lambda_of_sigma(1.5).is_err());
        assert_eq!(
            sigma_lambda_map(1.0 / 3.0, Direction::Inverse).unwrap(),
            lam(1.0 / 3.0)
        );
    }

    #[test]
    fn sigma_map_round_trip() {
        for i in 0..=999 {
            let l = 0.999 * i as f64 / 999.0 / PI;
            let back = lambda_of_sigma(sigma_of_lambda(l).unwrap()).unwrap();
            assert!((back - l).abs() <= 1e-14, "{l}");
        }
    }

    #[test]
    fn b_trivial_and_sign() {
        for nu in [-0.4, 0.0, 0.7, 3.0] {
            assert!((coefficient_b(nu, 0.0).unwrap() - 1.0).abs() < 1e-14);
        }
        for i in 0..25 {
            let nu = -0.49 + 0.06 * i as f64;
            for j in 1..20 {
                let sigma = j as f64 / 20.0;
                if (sigma - (1.0 + 2.0 * nu)).abs() < 1e-9 {
                    continue;
                }
                let b = coefficient_b(nu, sigma).unwrap();
                assert_eq!(
                    b < 0.0,
                    sigma > 1.0 + 2.0 * nu,
                    "nu={nu} sigma={sigma} b={b}"
                );
            }
        }
        assert!(coefficient_b(-0.25, 0.5).unwrap_err().is_domain());
    }

    #[test]
    fn u_smallt_limits() {
        // nu = 0: pure power law
        let (t, l) = (0.03, lam(0.4));
        let b = coefficient_b(0.0, 0.4).unwrap();
        assert!((u_smallt(t, 0.0, l).unwrap() - b * t.powf(0.4)).abs() < 1e-15);
        for nu in [0.2, 1.0, 2.5] {
            assert!((u_smallt(0.07, nu, 0.0).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(u_smallt(0.01, -0.4, lam(0.9)).unwrap_err().is_domain());
    }

    #[test]
    fn degenerate_case() {
        assert_eq!(c_of_nu(0.0).unwrap(), 1.0);
        let c1 = 1.0 + 2.0 * (3.0 * LN_2 - EULER_GAMMA - 1.0);
        assert!((c_of_nu(1.0).unwrap() - c1).abs() < 1e-13);
        assert!((c1 - 2.004_451_8).abs() < 1e-7);
        let t = 0.05;
        let u0 = u_degenerate(t, 0.0).unwrap();
        assert!((u0 - 0.5 * t * (-t.ln() + 3.0 * LN_2 - EULER_GAMMA)).abs() < 1e-15);
        let u_eps = u_degenerate(t, 1e-8).unwrap();
        assert!((u_eps / u0 - 1.0).abs() < 1e-6);
        // raw (c² − 1)/(4ν) form agrees away from ν = 0
        let nu = 0.3;
        let c = c_of_nu(nu).unwrap();
        let raw = 0.5 * t * (nu * t.ln().powi(2) - c * t.ln() + (c * c - 1.0) / (4.0 * nu));
        assert!((u_degenerate(t, nu).unwrap() - raw).abs() < 1e-14);
    }

    #[test]
    fn tracy_values() {
        let a0 = coefficient_a_tracy(1.0 / PI).unwrap();
        assert!((a0 - (3.0 * ZETA_PRIME_M1 - LN_2 / 6.0).exp()).abs() < 1e-14);
        assert!((a0 - 0.5424).abs() < 1e-4);
        assert!((coefficient_a(0.0, 1.0 / PI).unwrap() - a0).abs() < 1e-14);
        let s_to_lambda = |s: f64| lam(1.0 - 2.0 * s);
        let a = coefficient_a_tracy(s_to_lambda(0.49)).unwrap();
        assert!(a.is_finite() && a > 0.0);
        let l = s_to_lambda(0.25);
        assert!(
            (coefficient_a(1e-10, l).unwrap() / coefficient_a_tracy(l).unwrap() - 1.0).abs() < 1e-8
        );
        assert!(coefficient_a_tracy(0.0).unwrap_err().is_domain());
    }

    #[test]
    fn tracy_degeneration_is_linear_in_nu() {
        for s in [0.1, 0.25, 0.4] {
            let l = lam(1.0 - 2.0 * s);
            let tracy = coefficient_a_tracy(l).unwrap();
            let c: Vec<f64> = [1e-6, 1e-4, 1e-2]
                .iter()
                .map(|&nu| (coefficient_a(nu, l).unwrap() - tracy).abs() / nu)
                .collect();
            // |A − A_tracy|/ν stays bounded and roughly constant
            assert!(c.iter().all(|&v| v < 10.0));
            assert!((c[0] / c[1] - 1.0).abs() < 0.05, "s={s}: {c:?}");
        }
    }

    #[test]
    fn amplitude_guard() {
        assert!(coefficient_a(-0.4, lam(0.9)).unwrap_err().is_domain());
        assert!(coefficient_a(0.5, 0.0).unwrap_err().is_domain());
    }

    #[test]
    fn amplitude_positive_on_grid() {
        for i in 0..20 {
            let nu = -0.3 + 2.3 * i as f64 / 19.0;
            let mut prev: Option<f64> = None;
            for j in 0..20 {
                let sigma = 0.05 + 0.9 * j as f64 / 19.0;
                let p = ModelParams::from_sigma(nu, sigma).unwrap();
                if !p.satisfies_hypothesis() {
                    prev = None;
                    continue;
                }
                let a = coefficient_a(nu, p.lambda).unwrap();
                assert!(a > 0.0 && a.is_finite());
                if let Some(pa) = prev {
                    // no jumps between neighbouring σ samples
                    assert!((a / pa).ln().abs() < 1.0, "nu={nu} sigma={sigma}");
                }
                prev = Some(a);
            }
        }
    }

    #[test]
    fn largetime_expansion() {
        assert_eq!(tau_largetime(10.0, 0.3, 0.0).unwrap(), 1.0);
        let (t, l) = (10.0, 0.2);
        let want = 1.0 + 0.5 * l * l * (PI / 20.0) * (-20f64).exp() * 0.5 * 0.1;
        assert!((tau_largetime(t, 0.0, l).unwrap() - want).abs() < 1e-18);
        let d = tau_largetime_minus_one(t, 0.0, l).unwrap();
        assert!((d / (want - 1.0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn wu_identity() {
        let g = (ln_barnes_g(0.5).unwrap() + ln_barnes_g(1.5).unwrap()).exp();
        assert!((g - wu_constant()).abs() < 1e-11);
        let a = coefficient_a(0.0, 1.0 / PI).unwrap();
        assert!((2f64.powf(0.25) * a - wu_constant()).abs() < 1e-13);
    }

    #[test]
    fn constants_record() {
        let c = connection_constants(ModelParams::from_sigma(0.5, 0.4).unwrap()).unwrap();
        assert!(c.b.unwrap() > 0.0 && c.a.unwrap() > 0.0);
        assert!((c.exponent_tau + 0.16).abs() < 1e-15);
        let json = serde_json::to_value(c).unwrap();
        assert!(json.get("B").is_some() && json.get("exponent_u").is_some());
        let at_one =
            connection_constants(ModelParams::from_lambda(0.0, 1.0 / PI).unwrap()).unwrap();
        assert!(at_one.b.is_none());
        assert!(connection_constants(ModelParams::from_sigma(-0.4, 0.9).unwrap()).is_err());
    }

    #[test]
    fn curve_table() {
        let pts = curves(&[-0.3, 0.0, 1.0], 11).unwrap();
        assert_eq!(pts.len(), 33);
        assert!(pts
            .iter()
            .filter(|p| p.nu == -0.3 && p.sigma > 0.45)
            .all(|p| p.a.is_none()));
        assert!(pts.iter().filter(|p| p.sigma == 1.0).all(|p| p.b.is_none()));
    }

    proptest! {
        #[test]
        fn b_positive_under_hypothesis(nu in -0.49f64..3.0, sigma in 0.0f64..0.999) {
            prop_assume!(sigma < 1.0 + 2.0 * nu - 1e-6);
            prop_assert!(coefficient_b(nu, sigma).unwrap() > 0.0);
        }

        #[test]
        fn inverse_consistency(sigma in 0.0f64..=1.0) {
            let back = sigma_of_lambda(lambda_of_sigma(sigma).unwrap()).unwrap();
            prop_assert!((back - sigma).abs() < 1e-7);
        }
    }

    #[test]
    fn scaling_ratio_limits() {
        let (fm, fp) = scaling_functions(12.0).unwrap();
        assert!(fp / fm < 1e-4);
        let (fm, fp) = scaling_functions(1e-3).unwrap();
        assert!(fp / fm > 0.99);
        let (m1, _) = scaling_functions(0.05).unwrap();
        let (m2, _) = scaling_functions(0.1).unwrap();
        assert!(m1 < m2, "F_minus grows with t near the origin");
    }
}
