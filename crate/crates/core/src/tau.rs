//! The generalized tau-function.
//!
//! Two representations are evaluated and compared:
//!
//! ```text
//! exact:       ln τ = −(t/2) H + ½ S − (ν/4)(p ∂q/∂ν + ∂S/∂ν) + ln cosh(q/2)
//! definition:  ln τ = ½ ∫ₜ^∞ H ds − ν ∫ₜ^∞ sinh²(q/2) ds + ln cosh(q/2)
//! ```
//!
//! with the action `S = ∫ₜ^∞ (p q' − H) ds`, which also equals
//! `−∫₀^λ p ∂q/∂λ′ dλ′`. The ν-derivatives come from central differences over
//! re-solved trajectories.
//!
//! The second half of the module extracts `(σ, B, A)` from numerical data by
//! linear least squares on a lattice of correction exponents.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::connect::{lambda_of_sigma, sigma_of_lambda};
use crate::error::{Error, Result};
use crate::quad::{self, QuadSettings};
use crate::sinhg::{self, hamiltonian, ModelParams, PathIntegrals, Trajectory, DEFAULT_TOL};
use crate::specfun::{digamma, ln_barnes_g, ln_gamma, ZETA_PRIME_M1};

/// Step in ν for the central differences.
pub const DEFAULT_H_NU: f64 = 1e-4;
/// Relative step in λ for `∂q/∂λ`.
pub const DEFAULT_H_LAMBDA: f64 = 1e-4;
/// Gauss–Legendre nodes for the λ-integral of the action.
pub const DEFAULT_LAMBDA_NODES: usize = 16;
/// Window of the `u` regression.
pub const DEFAULT_U_WINDOW: (f64, f64) = (0.01, 0.1);
/// Window of the amplitude regression.
pub const DEFAULT_TAU_WINDOW: (f64, f64) = (0.02, 0.1);
pub const DEFAULT_FIT_SAMPLES: usize = 80;
/// Highest correction exponent kept in the `u` and `τ` regressions.
pub const U_FIT_EMAX: f64 = 4.0;
pub const TAU_FIT_EMAX: f64 = 3.0;

/// A value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }
}

/// Integration and differencing parameters shared by a family of trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauSettings {
    /// Start of the backward integration; [`sinhg::default_t0`] when `None`.
    pub t0: Option<f64>,
    pub t_min: f64,
    pub tol: f64,
    pub h_nu: f64,
}

impl Default for TauSettings {
    fn default() -> Self {
        Self {
            t0: None,
            t_min: sinhg::DEFAULT_T_MIN,
            tol: DEFAULT_TOL,
            h_nu: DEFAULT_H_NU,
        }
    }
}

impl TauSettings {
    pub fn with_t_min(self, t_min: f64) -> Self {
        Self { t_min, ..self }
    }

    fn t0_for(&self, params: &ModelParams) -> Result<f64> {
        match self.t0 {
            Some(t0) => Ok(t0),
            None => sinhg::default_t0(params),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauDiagnostics {
    /// Richardson estimate of the differencing error in the ν-term.
    pub nu_term_error: f64,
    /// Propagated error of `ln τ`.
    pub ln_tau_error: f64,
}

/// One evaluation of the exact identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauSample {
    pub t: f64,
    pub params: ModelParams,
    pub tau: f64,
    pub ln_tau: f64,
    /// `τ − 1` without cancellation.
    pub tau_minus_one: f64,
    pub q: f64,
    pub p: f64,
    #[serde(rename = "H_t")]
    pub h_t: f64,
    #[serde(rename = "S_t")]
    pub s_t: f64,
    /// `p ∂q/∂ν + ∂S/∂ν`; exactly zero for ν = 0.
    pub nu_term: f64,
    pub diagnostics: TauDiagnostics,
}

/// `ln cosh(q/2) = ln(1 + 2 sinh²(q/4))`, accurate for small `q`.
fn ln_cosh_half(q: f64) -> f64 {
    let sh = (0.25 * q).sinh();
    (2.0 * sh * sh).ln_1p()
}

/// Base trajectory plus the ν-shifted trajectories needed by the exact identity.
#[derive(Debug, Clone)]
pub struct TauFamily {
    pub params: ModelParams,
    pub h_nu: f64,
    base: Trajectory,
    /// Trajectories at `ν − 2h, ν − h, ν + h, ν + 2h`; absent when ν = 0 or λ = 0.
    shifted: Option<[Trajectory; 4]>,
}

impl TauFamily {
    pub fn new(params: ModelParams, settings: &TauSettings) -> Result<Self> {
        let t0 = settings.t0_for(&params)?;
        let base = sinhg::solve_backward(params, t0, settings.t_min, settings.tol)?;
        let h = settings.h_nu;
        let shifted = if params.nu != 0.0 && params.lambda != 0.0 {
            if !(h > 0.0) || params.nu - 2.0 * h <= -0.5 {
                return Err(Error::domain(format!(
                    "nu differencing needs nu - 2 h_nu > -1/2 (nu = {}, h_nu = {h})",
                    params.nu
                )));
            }
            let solve = |k: f64| {
                sinhg::solve_backward(
                    params.with_nu(params.nu + k * h)?,
                    t0,
                    settings.t_min,
                    settings.tol,
                )
            };
            Some([solve(-2.0)?, solve(-1.0)?, solve(1.0)?, solve(2.0)?])
        } else {
            None
        };
        Ok(Self {
            params,
            h_nu: h,
            base,
            shifted,
        })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.base
    }

    /// `p ∂q/∂ν + ∂S/∂ν` at `t` (Richardson-extrapolated central differences).
    pub fn nu_derivative_term(&self, t: f64) -> Result<Estimate> {
        let Some(sh) = &self.shifted else {
            return Ok(Estimate::exact(0.0));
        };
        let p = self.base.state(t)?.p;
        let f =
            |tr: &Trajectory| -> Result<f64> { Ok(p * tr.state(t)?.q + tr.integrals(t)?.action()) };
        let (m2, m1, p1, p2) = (f(&sh[0])?, f(&sh[1])?, f(&sh[2])?, f(&sh[3])?);
        let h = self.h_nu;
        let d1 = (p1 - m1) / (2.0 * h);
        let d2 = (p2 - m2) / (4.0 * h);
        Ok(Estimate {
            value: (4.0 * d1 - d2) / 3.0,
            error: (d1 - d2).abs() / 3.0,
        })
    }

    /// The exact identity at `t`.
    pub fn sample(&self, t: f64) -> Result<TauSample> {
        let pt = self.base.state(t)?;
        let nu = self.params.nu;
        let h_t = hamiltonian(t, pt.q, pt.p, nu);
        let s_t = self.base.integrals(t)?.action();
        let nu_term = self.nu_derivative_term(t)?;
        let ln_tau = -0.5 * t * h_t + 0.5 * s_t - 0.25 * nu * nu_term.value + ln_cosh_half(pt.q);
        let scale = (0.5 * t * h_t).abs() + (0.5 * s_t).abs() + ln_cosh_half(pt.q);
        Ok(TauSample {
            t,
            params: self.params,
            tau: ln_tau.exp(),
            ln_tau,
            tau_minus_one: ln_tau.exp_m1(),
            q: pt.q,
            p: pt.p,
            h_t,
            s_t,
            nu_term: nu_term.value,
            diagnostics: TauDiagnostics {
                nu_term_error: nu_term.error,
                ln_tau_error: 0.25 * nu.abs() * nu_term.error + 10.0 * self.base.tol * scale,
            },
        })
    }

    /// The definitional form at `t`, from the integrals carried by the solver.
    pub fn tau_direct(&self, t: f64) -> Result<f64> {
        tau_direct(&self.base, t)
    }
}

/// The exact identity at a single point, solving all trajectories it needs.
pub fn tau_exact(t: f64, params: ModelParams) -> Result<TauSample> {
    let settings = TauSettings::default().with_t_min(t.min(sinhg::DEFAULT_T_MIN));
    TauFamily::new(params, &settings)?.sample(t)
}

/// `ln τ` from `exp[½ ∫H − ν ∫ sinh²(q/2)] cosh(q/2)`.
pub fn ln_tau_direct(traj: &Trajectory, t: f64) -> Result<f64> {
    let ints = traj.integrals(t)?;
    let q = traj.state(t)?.q;
    Ok(0.5 * ints.hamiltonian - traj.params.nu * ints.sinh2_half + ln_cosh_half(q))
}

pub fn tau_direct(traj: &Trajectory, t: f64) -> Result<f64> {
    Ok(ln_tau_direct(traj, t)?.exp())
}

/// `S(t) = ∫ₜ^∞ (p q' − H) ds` along one trajectory.
pub fn action_s_direct(traj: &Trajectory, t: f64) -> Result<f64> {
    Ok(traj.integrals(t)?.action())
}

/// `S(t) = −∫₀^λ p ∂q/∂λ′ dλ′` at each `t` in `ts`, by Gauss–Legendre
/// quadrature in λ′ with `n_nodes` nodes. The error estimate compares with
/// the `n_nodes/2` rule.
pub fn action_s_lambda(
    ts: &[f64],
    params: ModelParams,
    n_nodes: usize,
    settings: &TauSettings,
) -> Result<Vec<Estimate>> {
    if n_nodes < 8 {
        return Err(Error::domain(format!(
            "action_s needs at least 8 lambda nodes, got {n_nodes}"
        )));
    }
    if ts.is_empty() {
        return Ok(Vec::new());
    }
    if params.lambda == 0.0 {
        return Ok(vec![Estimate::exact(0.0); ts.len()]);
    }
    let t_min = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let t0 = settings.t0_for(&params)?;
    let lam = params.lambda;
    let rule = |n: usize| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; ts.len()];
        for (x, w) in quad::gauss_legendre(n) {
            let l = 0.5 * lam * (1.0 + x);
            let h = (DEFAULT_H_LAMBDA * lam.max(1.0)).min(0.25 * l);
            let solve =
                |ll: f64| sinhg::solve_backward(params.with_lambda(ll)?, t0, t_min, settings.tol);
            let center = solve(l)?;
            let fam = [
                solve(l - 2.0 * h)?,
                solve(l - h)?,
                solve(l + h)?,
                solve(l + 2.0 * h)?,
            ];
            for (i, &t) in ts.iter().enumerate() {
                let q: Vec<f64> = fam
                    .iter()
                    .map(|tr| tr.state(t).map(|s| s.q))
                    .collect::<Result<_>>()?;
                let d1 = (q[2] - q[1]) / (2.0 * h);
                let d2 = (q[3] - q[0]) / (4.0 * h);
                let dq = (4.0 * d1 - d2) / 3.0;
                acc[i] -= 0.5 * lam * w * center.state(t)?.p * dq;
            }
        }
        Ok(acc)
    };
    let fine = rule(n_nodes)?;
    let coarse = rule(n_nodes / 2)?;
    Ok(fine
        .into_iter()
        .zip(coarse)
        .map(|(f, c)| Estimate {
            value: f,
            error: (f - c).abs(),
        })
        .collect())
}

/// Single-point form of [`action_s_lambda`].
pub fn action_s(t: f64, params: ModelParams, n_nodes: usize) -> Result<Estimate> {
    let settings = TauSettings::default().with_t_min(t.min(sinhg::DEFAULT_T_MIN));
    Ok(action_s_lambda(&[t], params, n_nodes, &settings)?[0])
}

/// `p ∂q/∂ν + ∂S/∂ν` at a single point.
pub fn nu_derivative_term(t: f64, params: ModelParams, h_nu: f64) -> Result<Estimate> {
    let settings = TauSettings {
        h_nu,
        ..TauSettings::default().with_t_min(t.min(sinhg::DEFAULT_T_MIN))
    };
    TauFamily::new(params, &settings)?.nu_derivative_term(t)
}

/// `∫ₜ^∞` of `H`, `sinh²(q/2)` and `p q'` by adaptive quadrature over the
/// dense output (independent of the integrals carried by the solver).
pub fn path_integrals_quadrature(traj: &Trajectory, t: f64) -> Result<PathIntegrals> {
    traj.state(t)?;
    let nu = traj.params.nu;
    let settings = QuadSettings {
        rel_tol: 1e-11,
        abs_tol: 1e-300,
        max_subdivisions: 4000,
        ..QuadSettings::default()
    };
    let (a, b) = (t.ln(), traj.t0.ln());
    let integrate = |f: &dyn Fn(f64, f64, f64) -> f64| -> Result<f64> {
        Ok(quad::try_integrate(
            |x| {
                let s = x.exp().clamp(traj.t_min, traj.t0);
                let pt = traj.state(s)?;
                Ok(s * f(s, pt.q, pt.p))
            },
            a,
            b,
            &settings,
        )?
        .value)
    };
    let tails = traj.tails();
    Ok(PathIntegrals {
        hamiltonian: integrate(&|s, q, p| hamiltonian(s, q, p, nu))? + tails.hamiltonian,
        sinh2_half: integrate(&|_, q, _| (0.5 * q).sinh().powi(2))? + tails.sinh2_half,
        p_dq: integrate(&|s, _, p| -p * p / s)? + tails.p_dq,
    })
}

/// `∫H − (−tH + S + 4ν ∫ sinh²(q/2))` with every integral from quadrature.
pub fn hamiltonian_identity_residual(traj: &Trajectory, t: f64) -> Result<f64> {
    let ints = path_integrals_quadrature(traj, t)?;
    let h = traj.hamiltonian_at(t)?;
    Ok(ints.hamiltonian - (-t * h + ints.action() + 4.0 * traj.params.nu * ints.sinh2_half))
}

fn small_t_args(params: &ModelParams) -> Result<()> {
    params.require_hypothesis()?;
    if !(params.sigma > 0.0 && params.sigma < 1.0) {
        return Err(Error::domain("small-t action needs 0 < sigma < 1"));
    }
    Ok(())
}

/// `J₊ − J₋` in closed form (Barnes G and Gamma values).
pub fn j_difference(nu: f64, sigma: f64) -> Result<f64> {
    let p = ModelParams::from_sigma(nu, sigma)?;
    small_t_args(&p)?;
    let s = p.s;
    let ln_g = 2.0
        * (ln_barnes_g(1.0 - s + nu)? + ln_barnes_g(1.0 + s + nu)? - 2.0 * ln_barnes_g(0.5 + nu)?);
    let ln_gam = ln_gamma(1.0 - s + nu)? + ln_gamma(1.0 + s + nu)? - 2.0 * ln_gamma(0.5 + nu)?;
    Ok(
        0.5 * sigma * sigma + ln_g + (1.0 - 2.0 * nu) * ln_gam - 2.0 * ln_gamma(1.0 + s + nu)?
            + (1.0 + 2.0 * nu) * (s + nu).ln(),
    )
}

/// `J₊ − J₋ = ∫₀^λ σ(λ′) ∂/∂λ′ [ln Γ(ν + (1+σ)/2) − ln Γ(ν + (1−σ)/2)] dλ′`
/// by adaptive quadrature in λ′.
pub fn j_difference_quadrature(nu: f64, lambda: f64) -> Result<Estimate> {
    let p = ModelParams::from_lambda(nu, lambda)?;
    small_t_args(&p)?;
    let settings = QuadSettings::default().with_rel_tol(1e-13);
    let r = quad::try_integrate(
        |l| {
            let sg = sigma_of_lambda(l)?;
            let dsg = 2.0 / (1.0 - (PI * l).powi(2)).sqrt();
            Ok(
                sg * dsg
                    * 0.5
                    * (digamma(nu + 0.5 * (1.0 + sg))? + digamma(nu + 0.5 * (1.0 - sg))?),
            )
        },
        0.0,
        lambda,
        &settings,
    )?;
    Ok(Estimate {
        value: r.value,
        error: r.abs_error,
    })
}

/// Constant term of the small-`t` action, `S(t) − (σ²/2) ln t → const`.
pub fn action_smallt_analytic(params: ModelParams) -> Result<f64> {
    small_t_args(&params)?;
    let (sg, s, nu) = (params.sigma, params.s, params.nu);
    let lg = ln_barnes_g;
    let lgam = ln_gamma;
    let mut c = -1.5 * sg * sg * LN_2 - 0.5 * sg * sg + 6.0 * ZETA_PRIME_M1 + LN_2 / 6.0;
    c += 2.0 * (lg(1.0 - s + nu)? + lg(1.0 + s + nu)? - 2.0 * lg(1.0 - s)? - 2.0 * lg(1.0 + s)?);
    c += 2.0 * (2.0 * lg(0.5)? + lgam(0.5)? - 2.0 * lg(0.5 + nu)? - lgam(0.5 + nu)?);
    c += 2.0 * lgam(s)? - 2.0 * lgam(1.0 - s)? + lgam(1.0 - s + nu)? - lgam(1.0 + s + nu)?;
    c -= 2.0 * nu * (lgam(1.0 - s + nu)? + lgam(1.0 + s + nu)? - 2.0 * lgam(0.5 + nu)?);
    c += (1.0 + 2.0 * nu) * (s + nu).ln();
    Ok(c)
}

/// The same constant assembled as `−(3σ²/2) ln 2 + (J₊ − J₋)(ν) − 2 (J₊ − J₋)(0)`.
pub fn action_smallt_from_j(params: ModelParams) -> Result<f64> {
    small_t_args(&params)?;
    let sg = params.sigma;
    Ok(-1.5 * sg * sg * LN_2 + j_difference(params.nu, sg)? - 2.0 * j_difference(0.0, sg)?)
}

/// Small-`t` limit of `p ∂q/∂ν + ∂S/∂ν`.
pub fn nu_term_smallt_analytic(params: ModelParams) -> Result<f64> {
    small_t_args(&params)?;
    let (s, nu) = (params.s, params.nu);
    let ratio = ln_gamma(1.0 - s + nu)? + ln_gamma(1.0 + s + nu)? - 2.0 * ln_gamma(0.5 + nu)?;
    Ok(-2.0 * ratio + 2.0 * (s + nu).ln())
}

/// Sampling grid for tau comparisons: `STANDARD_GRID.2` log-spaced points on
/// `[STANDARD_GRID.0, STANDARD_GRID.1]`.
pub const STANDARD_GRID: (f64, f64, usize) = (0.05, 10.0, 12);

pub fn standard_grid() -> Vec<f64> {
    log_spaced(STANDARD_GRID.0, STANDARD_GRID.1, STANDARD_GRID.2)
}

/// `n` log-spaced points on `[a, b]`.
pub fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                a
            } else if i == n - 1 {
                b
            } else {
                (la + (lb - la) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Non-negative integer combinations of `generators` in `(0, emax]`, sorted,
/// with coincident exponents merged.
pub fn exponent_lattice(generators: &[f64], emax: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut frontier = vec![0.0];
    while let Some(e) = frontier.pop() {
        for &g in generators {
            if g <= 0.0 {
                continue;
            }
            let f = e + g;
            if f <= emax + 1e-12 && !out.iter().any(|&o| (o - f).abs() < 1e-9) {
                out.push(f);
                frontier.push(f);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    // merge near-duplicates that would make the design matrix singular
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    out
}

/// Least-squares coefficients and the largest absolute residual.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub max_residual: f64,
}

/// Least squares on the given columns (each of length `y.len()`), with column
/// equilibration and an SVD cut-off at `ε · max(m, n) · σ_max`.
pub fn fit_columns(columns: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    let (m, n) = (y.len(), columns.len());
    if n == 0 || m < n + 2 {
        return Err(Error::IllConditioned(format!(
            "{m} samples for {n} unknowns"
        )));
    }
    let norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if norms.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::IllConditioned("degenerate regression column".into()));
    }
    let a = DMatrix::from_fn(m, n, |i, j| columns[j][i] / norms[j]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let cutoff = f64::EPSILON * m.max(n) as f64 * svd.singular_values.max();
    let x = svd
        .solve(&b, cutoff)
        .map_err(|e| Error::IllConditioned(format!("least squares failed: {e}")))?;
    let r = &a * &x - &b;
    Ok(LinearFit {
        coefficients: x.iter().zip(&norms).map(|(c, s)| c / s).collect(),
        max_residual: r.amax(),
    })
}

fn check_window(window: (f64, f64)) -> Result<()> {
    let (a, b) = window;
    if !(a > 0.0 && b > a) {
        return Err(Error::domain(format!(
            "fit window {window:?} must satisfy 0 < a < b"
        )));
    }
    if b > 0.2 {
        return Err(Error::domain(format!(
            "fit window upper end {b} exceeds 0.2"
        )));
    }
    if b / a < 10f64.sqrt() {
        return Err(Error::IllConditioned(format!(
            "fit window {window:?} spans less than half a decade"
        )));
    }
    Ok(())
}

/// Fitted connection data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub sigma_fit: f64,
    #[serde(rename = "B_fit")]
    pub b_fit: f64,
    #[serde(rename = "A_fit")]
    pub a_fit: f64,
    /// Free log-slope of `τ`, to compare with `σ(σ − 2)/4`.
    pub tau_exponent_fit: f64,
    /// Largest deviation of either fitted model from its data, in log space
    /// (relative deviation).
    pub residual: f64,
    pub t_window: (f64, f64),
    pub tau_window: (f64, f64),
}

/// `ln u(t/2) = −q(t) = ln B + σ ln t + Σ c_k t^{e_k}` with `e_k` on the
/// lattice generated by `1 − σ` and `1 + σ`; σ is iterated to a fixed point.
/// Residual level treated as exact, relative to the data scale (below the
/// integration noise of real trajectories, above double rounding).
const FIT_NOISE_FLOOR: f64 = 1e-14;

/// Fit `base` plus the first `k` power columns for increasing `k`, stopping at
/// the first model that reproduces the data to the noise floor. Correction
/// columns are nearly collinear, so unneeded ones cost digits.
fn fit_nested(base: Vec<Vec<f64>>, exps: &[f64], ts: &[f64], y: &[f64]) -> Result<LinearFit> {
    let floor = FIT_NOISE_FLOOR * y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut cols = base;
    let mut fit = fit_columns(&cols, y)?;
    for &e in exps {
        if fit.max_residual <= floor {
            break;
        }
        cols.push(ts.iter().map(|t| t.powf(e)).collect());
        fit = fit_columns(&cols, y)?;
    }
    Ok(fit)
}

fn fit_u(ts: &[f64], minus_q: &[f64], sigma0: f64) -> Result<(f64, f64, f64)> {
    let mut sigma = sigma0;
    let mut result = None;
    for _ in 0..12 {
        let exps = exponent_lattice(&[1.0 - sigma, 1.0 + sigma], U_FIT_EMAX);
        let base = vec![vec![1.0; ts.len()], ts.iter().map(|t| t.ln()).collect()];
        let fit = fit_nested(base, &exps, ts, minus_q)?;
        let new_sigma = fit.coefficients[1];
        let converged = (new_sigma - sigma).abs() < 1e-13;
        sigma = new_sigma.clamp(1e-6, 1.0 - 1e-6);
        result = Some((new_sigma, fit.coefficients[0].exp(), fit.max_residual));
        if converged {
            break;
        }
    }
    result.ok_or_else(|| Error::IllConditioned("u regression produced no iterate".into()))
}

/// Regress `(σ, B)` from the trajectory over `window` and `A` from the tau
/// samples (their `t` values define the amplitude window).
pub fn fit_connection(
    traj: &Trajectory,
    tau_series: &[TauSample],
    window: (f64, f64),
) -> Result<FitResult> {
    check_window(window)?;
    if window.0 < traj.t_min * (1.0 - 1e-12) || window.1 > traj.t0 {
        return Err(Error::domain(format!(
            "fit window {window:?} outside the trajectory range [{}, {}]",
            traj.t_min, traj.t0
        )));
    }
    if traj.params.lambda == 0.0 {
        return Err(Error::domain("nothing to fit at lambda = 0"));
    }
    let ts = log_spaced(window.0, window.1, DEFAULT_FIT_SAMPLES);
    let pts: Vec<_> = ts.iter().map(|&t| traj.state(t)).collect::<Result<_>>()?;
    let minus_q: Vec<f64> = pts.iter().map(|p| -p.q).collect();
    let (sigma_fit, b_fit, res_u) = fit_u(&ts, &minus_q, pts[0].p)?;

    let tt: Vec<f64> = tau_series.iter().map(|s| s.t).collect();
    let tau_window = (
        tt.iter().copied().fold(f64::INFINITY, f64::min),
        tt.iter().copied().fold(0.0, f64::max),
    );
    check_window(tau_window)?;
    let exponent_tau = 0.25 * sigma_fit * (sigma_fit - 2.0);
    // divide out the exact factor (1 + e^{−q}) of cosh(q/2)
    let base: Vec<f64> = tau_series
        .iter()
        .map(|s| s.ln_tau - (-s.q).exp().ln_1p())
        .collect();
    let exps = exponent_lattice(&[1.0 - sigma_fit, 1.0, 1.0 + sigma_fit], TAU_FIT_EMAX);
    let y: Vec<f64> = base
        .iter()
        .zip(&tt)
        .map(|(b, t)| b - exponent_tau * t.ln())
        .collect();
    let fit_a = fit_nested(vec![vec![1.0; tt.len()]], &exps, &tt, &y)?;
    let cols = vec![vec![1.0; tt.len()], tt.iter().map(|t| t.ln()).collect()];
    let fit_slope = fit_nested(cols, &exps, &tt, &base)?;

    Ok(FitResult {
        sigma_fit,
        b_fit,
        a_fit: fit_a.coefficients[0].exp(),
        tau_exponent_fit: fit_slope.coefficients[1],
        residual: res_u.max(fit_a.max_residual),
        t_window: window,
        tau_window,
    })
}

/// Everything needed to compare the fitted and analytic constants at one
/// parameter point, using the default windows.
pub fn fit_point(params: ModelParams, settings: &TauSettings) -> Result<(TauFamily, FitResult)> {
    let t_min = settings
        .t_min
        .min(DEFAULT_U_WINDOW.0)
        .min(DEFAULT_TAU_WINDOW.0);
    let family = TauFamily::new(params, &settings.with_t_min(t_min))?;
    let (a, b) = DEFAULT_TAU_WINDOW;
    let samples: Vec<TauSample> = log_spaced(a, b, DEFAULT_FIT_SAMPLES)
        .into_iter()
        .map(|t| family.sample(t))
        .collect::<Result<_>>()?;
    let fit = fit_connection(family.trajectory(), &samples, DEFAULT_U_WINDOW)?;
    Ok((family, fit))
}

/// Values of the Ising scaling functions at one `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingValues {
    pub t: f64,
    pub f_minus: f64,
    pub f_plus: f64,
}

/// `F₋ = 2^{3/8} t^{1/4} τ(t; 0, 1/π)` and `F₊ = F₋ tanh(q/2)` along a
/// trajectory at `(ν, λ) = (0, 1/π)`.
pub fn scaling_values(traj: &Trajectory, t: f64) -> Result<ScalingValues> {
    let p = &traj.params;
    if p.nu != 0.0 || (p.sigma - 1.0).abs() > 1e-12 {
        return Err(Error::domain(
            "scaling functions live on the (nu, lambda) = (0, 1/pi) trajectory",
        ));
    }
    let pt = traj.state(t)?;
    let h = hamiltonian(t, pt.q, pt.p, 0.0);
    let ln_tau = -0.5 * t * h + 0.5 * traj.integrals(t)?.action() + ln_cosh_half(pt.q);
    let f_minus = (0.375 * LN_2 + 0.25 * t.ln() + ln_tau).exp();
    Ok(ScalingValues {
        t,
        f_minus,
        f_plus: f_minus * (0.5 * pt.q).tanh(),
    })
}

/// Trajectory at `(0, 1/π)` reaching down to `t_min`.
pub fn critical_trajectory(t_min: f64) -> Result<Trajectory> {
    let params = ModelParams::from_sigma(0.0, 1.0)?;
    let t0 = sinhg::default_t0(&params)?;
    sinhg::solve_backward(params, t0, t_min, DEFAULT_TOL)
}

/// Default window for the small-`t` limit of `F₋`.
pub const CRITICAL_WINDOW: (f64, f64) = (1e-3, 0.03);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalAmplitudeFit {
    /// Fitted `2^{−1/8} lim_{t↓0} F₋(t)`.
    pub limit: f64,
    pub residual: f64,
    pub window: (f64, f64),
}

/// Extrapolate `2^{−1/8} F₋(t)` to `t = 0` from `window`.
///
/// At σ = 1 the corrections are powers of `t` times powers of `ln t`; the
/// factor `1 + e^{−q}` of `cosh(q/2)` is divided out exactly first.
pub fn fit_critical_amplitude(window: (f64, f64)) -> Result<CriticalAmplitudeFit> {
    check_window(window)?;
    let traj = critical_trajectory(window.0)?;
    let ts = log_spaced(window.0, window.1, DEFAULT_FIT_SAMPLES);
    let mut y = Vec::with_capacity(ts.len());
    for &t in &ts {
        let v = scaling_values(&traj, t)?;
        let q = traj.state(t)?.q;
        y.push((v.f_minus * 2f64.powf(-0.125)).ln() - (-q).exp().ln_1p());
    }
    let mut cols = vec![vec![1.0; ts.len()]];
    for j in 1..=2 {
        for k in 0..=3 {
            cols.push(ts.iter().map(|t| t.powi(j) * t.ln().powi(k)).collect());
        }
    }
    let fit = fit_columns(&cols, &y)?;
    Ok(CriticalAmplitudeFit {
        limit: fit.coefficients[0].exp(),
        residual: fit.max_residual,
        window,
    })
}

/// `λ` for a given `s = (1 − σ)/2`.
pub fn lambda_of_s(s: f64) -> Result<f64> {
    lambda_of_sigma(1.0 - 2.0 * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connect::{coefficient_a, coefficient_a_tracy, coefficient_b};

    fn params(nu: f64, sigma: f64) -> ModelParams {
        ModelParams::from_sigma(nu, sigma).unwrap()
    }

    #[test]
    fn zero_lambda_is_trivial() {
        let p = ModelParams::from_lambda(0.7, 0.0).unwrap();
        let s = tau_exact(0.3, p).unwrap();
        assert_eq!(s.tau, 1.0);
        assert_eq!(s.nu_term, 0.0);
        assert_eq!(action_s(0.3, p, 8).unwrap().value, 0.0);
        let fam = TauFamily::new(p, &TauSettings::default()).unwrap();
        assert_eq!(fam.tau_direct(0.5).unwrap(), 1.0);
        assert_eq!(nu_derivative_term(0.3, p, 1e-4).unwrap().value, 0.0);
    }

    #[test]
    fn nu_zero_never_differences() {
        let fam = TauFamily::new(params(0.0, 0.5), &TauSettings::default()).unwrap();
        assert!(fam.shifted.is_none());
        let s = fam.sample(0.2).unwrap();
        assert_eq!(s.nu_term, 0.0);
        assert_eq!(s.diagnostics.nu_term_error, 0.0);
    }

    #[test]
    fn exact_and_direct_forms_agree() {
        let fam =
            TauFamily::new(params(0.5, 0.4), &TauSettings::default().with_t_min(0.05)).unwrap();
        for t in standard_grid() {
            let exact = fam.sample(t).unwrap().tau;
            let direct = fam.tau_direct(t).unwrap();
            assert!((exact - direct).abs() <= 1e-6, "t={t}: {exact} vs {direct}");
        }
    }

    #[test]
    fn action_at_t0_vanishes() {
        let fam = TauFamily::new(params(0.5, 0.4), &TauSettings::default()).unwrap();
        let tr = fam.trajectory();
        assert!(action_s_direct(tr, tr.t0).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn lattice_generation() {
        let l = exponent_lattice(&[0.5, 1.5], 2.0);
        assert_eq!(l, vec![0.5, 1.0, 1.5, 2.0]);
        let l = exponent_lattice(&[0.8, 1.0, 1.2], 2.0);
        assert_eq!(l.len(), 6);
        assert!(exponent_lattice(&[0.0], 2.0).is_empty());
    }

    #[test]
    fn synthetic_power_law_recovered() {
        let (b, sg): (f64, f64) = (1.37, 0.4);
        let ts = log_spaced(0.01, 0.1, 80);
        let y: Vec<f64> = ts.iter().map(|t| b.ln() + sg * t.ln()).collect();
        let (s_fit, b_fit, _) = fit_u(&ts, &y, 0.3).unwrap();
        assert!((s_fit - sg).abs() < 1e-12);
        assert!((b_fit / b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn narrow_window_rejected() {
        let fam = TauFamily::new(params(0.0, 0.5), &TauSettings::default()).unwrap();
        let err = fit_connection(fam.trajectory(), &[], (0.05, 0.1)).unwrap_err();
        assert!(matches!(err, Error::IllConditioned(_)));
        assert!(fit_connection(fam.trajectory(), &[], (0.05, 0.5))
            .unwrap_err()
            .is_domain());
    }

    #[test]
    fn fitted_constants_match_closed_forms() {
        let p = params(0.5, 0.4);
        let (_, fit) = fit_point(p, &TauSettings::default()).unwrap();
        assert!((fit.sigma_fit - 0.4).abs() < 1e-3);
        assert!((fit.b_fit / coefficient_b(0.5, 0.4).unwrap() - 1.0).abs() < 1e-4);
        assert!((fit.a_fit / coefficient_a(0.5, p.lambda).unwrap() - 1.0).abs() < 1e-3);
        assert!((fit.tau_exponent_fit + 0.16).abs() < 1e-3);

        let p = params(0.0, 0.5);
        let (_, fit) = fit_point(p, &TauSettings::default()).unwrap();
        assert!((fit.a_fit / coefficient_a_tracy(p.lambda).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn j_difference_two_ways() {
        for (nu, sg) in [(0.5, 0.4), (0.0, 0.5), (1.0, 0.6), (-0.2, 0.2)] {
            let closed = j_difference(nu, sg).unwrap();
            let quad = j_difference_quadrature(nu, lambda_of_sigma(sg).unwrap()).unwrap();
            assert!(
                (closed - quad.value).abs() <= 1e-10,
                "nu={nu}: {closed} vs {}",
                quad.value
            );
        }
    }

    #[test]
    fn action_constant_two_ways() {
        for (nu, sg) in [(0.5, 0.4), (0.0, 0.5), (1.0, 0.6), (-0.2, 0.2)] {
            let p = params(nu, sg);
            let a = action_smallt_analytic(p).unwrap();
            let b = action_smallt_from_j(p).unwrap();
            assert!((a - b).abs() < 1e-11, "nu={nu}: {a} vs {b}");
        }
        // continuity into ν = 0
        let a0 = action_smallt_analytic(params(0.0, 0.5)).unwrap();
        let ae = action_smallt_analytic(params(1e-10, 0.5)).unwrap();
        assert!((a0 - ae).abs() < 1e-8);
        assert!(action_smallt_analytic(params(-0.4, 0.9))
            .unwrap_err()
            .is_domain());
    }

    #[test]
    fn nu_term_small_t_law() {
        let p = params(0.5, 0.4);
        let fam = TauFamily::new(p, &TauSettings::default()).unwrap();
        let lim = nu_term_smallt_analytic(p).unwrap();
        for t in [0.01, 0.02] {
            let n = fam.nu_derivative_term(t).unwrap().value;
            assert!((n - lim).abs() <= 5.0 * t.powf(0.6), "t={t}");
        }
    }

    #[test]
    fn tau_lambda_dependence() {
        // τ rises with λ at ν = 0 and falls with λ at large t for ν > 0
        let sweep = |nu: f64, t: f64| -> Vec<f64> {
            [0.1, 0.3, 0.5, 0.7, 0.9]
                .iter()
                .map(|&sg| tau_exact(t, params(nu, sg)).unwrap().tau)
                .collect()
        };
        for t in [0.5, 2.0] {
            assert!(sweep(0.0, t).windows(2).all(|w| w[1] > w[0]), "nu=0 t={t}");
        }
        assert!(sweep(0.4, 2.0).windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn scaling_function_limits() {
        let tr = critical_trajectory(1e-3).unwrap();
        let large = scaling_values(&tr, 15.0).unwrap();
        assert!(large.f_plus / large.f_minus < 1e-5);
        let small = scaling_values(&tr, 1e-3).unwrap();
        assert!(small.f_plus / small.f_minus > 0.99);
        assert!(scaling_values(&tr, 5e-4).unwrap_err().is_domain());
        let other = sinhg::solve_backward(params(0.0, 0.5), 20.0, 0.1, 1e-10).unwrap();
        assert!(scaling_values(&other, 1.0).is_err());
    }
}
