//! The Hamiltonian form of the ν-modified radial sinh-Gordon equation
//!
//! ```text
//! ψ'' + ψ'/t = ½ sinh 2ψ + (2ν/t) sinh ψ,
//! H = (t/2) sinh² q − p²/(2t) + 4ν sinh²(q/2),   q' = −p/t,  p' = −(t/2) sinh 2q − 2ν sinh q,
//! ```
//!
//! integrated backward from boundary data at large `t`.
//!
//! The solver works in `x = ln t`, where the small-`t` solution is close to
//! linear, and carries three running integrals alongside `(q, p)`:
//! `∫ H ds`, `∫ sinh²(q/2) ds` and `∫ p q' ds`, each taken from `t` up to `t₀`.
//! Everything beyond `t₀` is added as an exponentially small tail.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::connect::{lambda_of_sigma, sigma_of_lambda};
use crate::error::{Error, Result};
use crate::ode::{self, DenseSolution, OdeSettings};
use crate::quad;

/// Default lower end of the backward integration.
pub const DEFAULT_T_MIN: f64 = 1e-2;
/// Default local error tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Smallest admissible starting point.
pub const MIN_T0: f64 = 20.0;
/// Above this σ integration below [`DEGENERATE_T_FLOOR`] is refused.
pub const DEGENERATE_SIGMA: f64 = 0.9;
pub const DEGENERATE_T_FLOOR: f64 = 1e-3;

/// Bound on `q₀²`, the relative size of the neglected nonlinear boundary terms.
const BOUNDARY_Q2: f64 = 1e-14;
const BOUNDARY_WARN_Q2: f64 = 1e-12;

const Q: usize = 0;
const P: usize = 1;
const INT_H: usize = 2;
const INT_SINH2: usize = 3;
const INT_PDQ: usize = 4;

/// The problem coordinates `(ν, λ)` with the derived `σ = (2/π) arcsin(πλ)`
/// and `s = (1 − σ)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub nu: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub s: f64,
}

impl ModelParams {
    pub fn from_lambda(nu: f64, lambda: f64) -> Result<Self> {
        check_nu(nu)?;
        let sigma = sigma_of_lambda(lambda)?;
        Ok(Self {
            nu,
            lambda,
            sigma,
            s: 0.5 * (1.0 - sigma),
        })
    }

    pub fn from_sigma(nu: f64, sigma: f64) -> Result<Self> {
        check_nu(nu)?;
        let lambda = lambda_of_sigma(sigma).map_err(|e| match e {
            Error::Domain(msg) if sigma >= 1.0 + 2.0 * nu => Error::domain(format!(
                "{msg}; connection results also need sigma < 1 + 2 nu = {}",
                1.0 + 2.0 * nu
            )),
            e => e,
        })?;
        Ok(Self {
            nu,
            lambda,
            sigma,
            s: 0.5 * (1.0 - sigma),
        })
    }

    /// Same λ, different ν.
    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        check_nu(nu)?;
        Ok(Self { nu, ..*self })
    }

    /// Same ν, different λ.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::from_lambda(self.nu, lambda)
    }

    /// `s + ν > 0`, equivalently `σ < 1 + 2ν`.
    pub fn satisfies_hypothesis(&self) -> bool {
        self.s + self.nu > 0.0
    }

    /// `σ ≥ 1 + 2ν`, where `u` may vanish and `B ≤ 0`.
    pub fn in_excluded_set(&self) -> bool {
        !self.satisfies_hypothesis()
    }

    /// Domain error unless the small-`t` connection formulas apply.
    pub fn require_hypothesis(&self) -> Result<()> {
        if self.satisfies_hypothesis() {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "connection formulas need sigma < 1 + 2 nu (s + nu > 0); got sigma = {}, nu = {}, s + nu = {}",
                self.sigma,
                self.nu,
                self.s + self.nu
            )))
        }
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > -0.5 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("nu must exceed -1/2, got {nu}")))
    }
}

/// Hamilton's equations in `t`: `(dq/dt, dp/dt)`.
pub fn hamilton_rhs(t: f64, q: f64, p: f64, nu: f64) -> (f64, f64) {
    (-p / t, -0.5 * t * (2.0 * q).sinh() - 2.0 * nu * q.sinh())
}

pub fn hamiltonian(t: f64, q: f64, p: f64, nu: f64) -> f64 {
    let sh = q.sinh();
    let sh_half = (0.5 * q).sinh();
    0.5 * t * sh * sh - p * p / (2.0 * t) + 4.0 * nu * sh_half * sh_half
}

/// Boundary data `(q₀, p₀)` at `t₀`: `q₀ = 2λ W(t₀)`, `p₀ = −t₀ · 2λ W′(t₀)`.
pub fn initial_conditions(t0: f64, params: &ModelParams) -> Result<(f64, f64)> {
    if params.lambda == 0.0 {
        return Ok((0.0, 0.0));
    }
    let w = quad::watson_integral(t0, params.nu)?;
    let dw = quad::watson_integral_dt(t0, params.nu)?;
    let q0 = 2.0 * params.lambda * w;
    if q0 * q0 > BOUNDARY_WARN_Q2 {
        log::warn!(
            "boundary data at t0 = {t0} neglects terms of relative size {:.1e}",
            q0 * q0
        );
    }
    Ok((q0, -t0 * 2.0 * params.lambda * dw))
}

/// Smallest `t₀ ≥ 20` (integer steps) with `q₀² < 1e−14`.
pub fn default_t0(params: &ModelParams) -> Result<f64> {
    let mut t0 = MIN_T0;
    while t0 < 200.0 {
        let q0 = 2.0 * params.lambda * quad::watson_integral(t0, params.nu)?;
        if q0 * q0 < BOUNDARY_Q2 {
            return Ok(t0);
        }
        t0 += 1.0;
    }
    Err(Error::domain("no admissible starting point t0 below 200"))
}

/// A point on a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub t: f64,
    pub q: f64,
    pub p: f64,
}

/// `∫ₜ^∞` integrals along a trajectory (tails beyond `t₀` included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathIntegrals {
    pub hamiltonian: f64,
    pub sinh2_half: f64,
    pub p_dq: f64,
}

impl PathIntegrals {
    /// The action `S = ∫ (p q' − H) ds`.
    pub fn action(&self) -> f64 {
        self.p_dq - self.hamiltonian
    }
}

/// Metadata written in front of exported trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub params: ModelParams,
    pub t0: f64,
    pub t_min: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
struct TrajectoryRecord {
    header: TrajectoryHeader,
    nodes: Vec<PhasePoint>,
}

/// Dense numerical solution on `[t_min, t₀]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ModelParams,
    pub t0: f64,
    pub t_min: f64,
    pub tol: f64,
    tails: PathIntegrals,
    /// `None` for λ = 0, where `q ≡ p ≡ 0`.
    solution: Option<DenseSolution<5>>,
}

fn rhs_log(nu: f64) -> impl Fn(f64, &[f64; 5]) -> [f64; 5] {
    move |x, y| {
        let t = x.exp();
        let (q, p) = (y[Q], y[P]);
        let sh = q.sinh();
        let sh_half = (0.5 * q).sinh();
        let sh2_half = sh_half * sh_half;
        let tsh = t * sh;
        [
            -p,
            -t * tsh * q.cosh() - 2.0 * nu * t * sh,
            -0.5 * tsh * tsh + 0.5 * p * p - 4.0 * nu * t * sh2_half,
            -t * sh2_half,
            p * p,
        ]
    }
}

/// Integrate Hamilton's equations from `t₀` down to `t_min`.
pub fn solve_backward(params: ModelParams, t0: f64, t_min: f64, tol: f64) -> Result<Trajectory> {
    if !(t_min > 0.0 && t_min < t0 && t0.is_finite()) {
        return Err(Error::domain(format!(
            "need 0 < t_min < t0, got t_min = {t_min}, t0 = {t0}"
        )));
    }
    if !(tol > 0.0 && tol < 1e-3) {
        return Err(Error::domain(format!(
            "tolerance must lie in (0, 1e-3), got {tol}"
        )));
    }
    if params.sigma > DEGENERATE_SIGMA && t_min < DEGENERATE_T_FLOOR {
        return Err(Error::domain(format!(
            "t_min = {t_min} is below {DEGENERATE_T_FLOOR} with sigma = {} > {DEGENERATE_SIGMA}; \
             the small-t regime near sigma = 1 is handled analytically",
            params.sigma
        )));
    }
    if params.in_excluded_set() && params.lambda > 0.0 {
        log::warn!(
            "sigma = {} >= 1 + 2 nu = {}: u may vanish on the integration range",
            params.sigma,
            1.0 + 2.0 * params.nu
        );
    }
    let zero = PathIntegrals {
        hamiltonian: 0.0,
        sinh2_half: 0.0,
        p_dq: 0.0,
    };
    if params.lambda == 0.0 {
        return Ok(Trajectory {
            params,
            t0,
            t_min,
            tol,
            tails: zero,
            solution: None,
        });
    }
    let (q0, p0) = initial_conditions(t0, &params)?;
    let settings = OdeSettings::default().with_tolerance(tol);
    let solution = ode::solve(
        rhs_log(params.nu),
        t0.ln(),
        [q0, p0, 0.0, 0.0, 0.0],
        t_min.ln(),
        &settings,
    )
    .map_err(|e| match e {
        Error::StepUnderflow { t } => Error::StepUnderflow { t: t.exp() },
        Error::TooManySteps { t, max_steps } => Error::TooManySteps {
            t: t.exp(),
            max_steps,
        },
        other => other,
    })?;

    // All integrands are quadratic in q to leading order, so they decay at
    // the rate 2|q'/q| = 2p/(t q) beyond t₀.
    let rate = 2.0 * p0 / (t0 * q0);
    let sh_half = (0.5 * q0).sinh();
    let tails = PathIntegrals {
        hamiltonian: hamiltonian(t0, q0, p0, params.nu) / rate,
        sinh2_half: sh_half * sh_half / rate,
        p_dq: -p0 * p0 / t0 / rate,
    };
    Ok(Trajectory {
        params,
        t0,
        t_min,
        tol,
        tails,
        solution: Some(solution),
    })
}

impl Trajectory {
    fn log_t(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * t;
        if !(t >= self.t_min - slack && t <= self.t0 + slack) {
            return Err(Error::domain(format!(
                "t = {t} lies outside the solved range [{}, {}]",
                self.t_min, self.t0
            )));
        }
        Ok(t.ln().clamp(self.t_min.ln(), self.t0.ln()))
    }

    fn raw(&self, t: f64) -> Result<[f64; 5]> {
        let x = self.log_t(t)?;
        match &self.solution {
            Some(sol) => sol.eval(x),
            None => Ok([0.0; 5]),
        }
    }

    pub fn state(&self, t: f64) -> Result<PhasePoint> {
        let y = self.raw(t)?;
        Ok(PhasePoint {
            t,
            q: y[Q],
            p: y[P],
        })
    }

    /// `(dq/dt, dp/dt)` from the interpolant (not from the vector field).
    pub fn phase_derivative(&self, t: f64) -> Result<(f64, f64)> {
        let x = self.log_t(t)?;
        match &self.solution {
            Some(sol) => {
                let d = sol.eval_derivative(x)?;
                Ok((d[Q] / t, d[P] / t))
            }
            None => Ok((0.0, 0.0)),
        }
    }

    pub fn hamiltonian_at(&self, t: f64) -> Result<f64> {
        let pt = self.state(t)?;
        Ok(hamiltonian(t, pt.q, pt.p, self.params.nu))
    }

    /// `∫ₜ^∞` of `H`, `sinh²(q/2)` and `p q'`.
    pub fn integrals(&self, t: f64) -> Result<PathIntegrals> {
        let y = self.raw(t)?;
        Ok(PathIntegrals {
            hamiltonian: y[INT_H] + self.tails.hamiltonian,
            sinh2_half: y[INT_SINH2] + self.tails.sinh2_half,
            p_dq: y[INT_PDQ] + self.tails.p_dq,
        })
    }

    /// Tail contributions beyond `t₀`.
    pub fn tails(&self) -> PathIntegrals {
        self.tails
    }

    /// Step endpoints from `t₀` down to `t_min`.
    pub fn nodes(&self) -> Vec<PhasePoint> {
        match &self.solution {
            Some(sol) => sol
                .nodes()
                .into_iter()
                .map(|(x, y)| PhasePoint {
                    t: x.exp(),
                    q: y[Q],
                    p: y[P],
                })
                .collect(),
            None => vec![
                PhasePoint {
                    t: self.t0,
                    q: 0.0,
                    p: 0.0,
                },
                PhasePoint {
                    t: self.t_min,
                    q: 0.0,
                    p: 0.0,
                },
            ],
        }
    }

    pub fn accepted_steps(&self) -> usize {
        self.solution
            .as_ref()
            .map_or(0, DenseSolution::accepted_steps)
    }

    pub fn header(&self) -> TrajectoryHeader {
        TrajectoryHeader {
            params: self.params,
            t0: self.t0,
            t_min: self.t_min,
            tol: self.tol,
        }
    }

    /// `# {json header}` followed by `t,q,p` rows at the step nodes.
    pub fn to_csv(&self) -> String {
        let header = serde_json::to_string(&self.header()).expect("header serializes");
        let mut out = format!("# {header}\nt,q,p\n");
        for pt in self.nodes() {
            writeln!(out, "{:e},{:e},{:e}", pt.t, pt.q, pt.p).expect("write to string");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let record = TrajectoryRecord {
            header: self.header(),
            nodes: self.nodes(),
        };
        serde_json::to_string_pretty(&record).expect("trajectory serializes")
    }
}

/// Residual of the Painlevé-III equation satisfied by `u(t) = e^{−q(2t)}`,
/// together with `u″` for scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Painleve3Check {
    pub t: f64,
    pub residual: f64,
    pub u_second: f64,
}

impl Painleve3Check {
    /// `|residual| / max(1, |u″|)`.
    pub fn scaled(&self) -> f64 {
        self.residual.abs() / self.u_second.abs().max(1.0)
    }
}

/// `u″ − [u′²/u − u′/t + (2ν/t)(u² − 1) + u³ − 1/u]` at `t`, with
/// `u, u′` from the dense output and `u″` through `q″ = −p′/s + p/s²`.
pub fn painleve3_residual(traj: &Trajectory, t: f64) -> Result<Painleve3Check> {
    let s = 2.0 * t;
    let pt = traj.state(s)?;
    let (q_s, p_s) = traj.phase_derivative(s)?;
    let q_ss = -p_s / s + pt.p / (s * s);
    let u = (-pt.q).exp();
    let u1 = -2.0 * q_s * u;
    let u2 = 4.0 * u * (q_s * q_s - q_ss);
    let nu = traj.params.nu;
    let rhs = u1 * u1 / u - u1 / t + (2.0 * nu / t) * (u * u - 1.0) + u * u * u - 1.0 / u;
    Ok(Painleve3Check {
        t,
        residual: u2 - rhs,
        u_second: u2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(nu: f64, sigma: f64, t_min: f64) -> Trajectory {
        let p = ModelParams::from_sigma(nu, sigma).unwrap();
        solve_backward(p, default_t0(&p).unwrap(), t_min, DEFAULT_TOL).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::from_lambda(-0.5, 0.1).unwrap_err().is_domain());
        assert!(ModelParams::from_lambda(0.0, 0.4).is_err());
        let p = ModelParams::from_sigma(0.5, 0.4).unwrap();
        assert_eq!(p.s, 0.3);
        assert!(p.satisfies_hypothesis());
        assert!(ModelParams::from_sigma(-0.4, 0.9)
            .unwrap()
            .in_excluded_set());
        let err = ModelParams::from_sigma(-0.4, 0.9)
            .unwrap()
            .require_hypothesis()
            .unwrap_err();
        assert!(err.to_string().contains("sigma < 1 + 2 nu"));
    }

    #[test]
    fn equilibrium_and_nu_zero_field() {
        assert_eq!(hamilton_rhs(3.0, 0.0, 0.0, 0.7), (0.0, 0.0));
        let (dq, dp) = hamilton_rhs(1.0, 0.3, 0.2, 0.0);
        assert_eq!(dq, -0.2);
        assert!((dp + 0.5 * 0.6f64.sinh()).abs() < 1e-16);
        assert_eq!(hamiltonian(2.0, 0.0, 0.0, 1.0), 0.0);
        let h = hamiltonian(1.0, 0.3, 0.2, 0.0);
        assert!((h - (0.5 * 0.3f64.sinh().powi(2) - 0.02)).abs() < 1e-16);
    }

    #[test]
    fn second_order_form_recovered() {
        // with p = −t q', Hamilton's equations give q'' + q'/t = ½ sinh 2q + (2ν/t) sinh q
        let (t, q, dq, nu) = (1.7, 0.4, -0.3, 0.6);
        let p = -t * dq;
        let (_, dp) = hamilton_rhs(t, q, p, nu);
        // p' = −q' − t q''
        let d2q = -(dp + dq) / t;
        let lhs = d2q + dq / t;
        let rhs = 0.5 * (2.0 * q).sinh() + 2.0 * nu / t * q.sinh();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn boundary_data_matches_bessel() {
        let p = ModelParams::from_lambda(0.0, 0.1).unwrap();
        let (q0, p0) = initial_conditions(20.0, &p).unwrap();
        // K0(20), K1(20)
        let (k0, k1) = (5.741_237_815_336_524e-10, 5.883_057_969_557_038e-10);
        assert!((q0 / (0.2 * k0) - 1.0).abs() < 1e-11);
        assert!((p0 / (20.0 * 0.2 * k1) - 1.0).abs() < 1e-11);
        assert_eq!(
            initial_conditions(20.0, &p.with_lambda(0.0).unwrap()).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn boundary_data_large_t_law() {
        let p = ModelParams::from_lambda(0.25, 0.2).unwrap();
        let (q0, _) = initial_conditions(30.0, &p).unwrap();
        let lead =
            0.4 / 60f64.powf(0.75) * crate::specfun::ln_gamma(0.75).unwrap().exp() * (-30f64).exp();
        assert!((q0 / lead - 1.0).abs() < 0.02);
    }

    #[test]
    fn zero_lambda_trajectory() {
        let p = ModelParams::from_lambda(0.3, 0.0).unwrap();
        let tr = solve_backward(p, 20.0, 0.01, 1e-12).unwrap();
        assert!(tr.nodes().iter().all(|n| n.q == 0.0 && n.p == 0.0));
        assert_eq!(tr.integrals(0.5).unwrap().action(), 0.0);
        assert_eq!(painleve3_residual(&tr, 0.1).unwrap().residual, 0.0);
    }

    #[test]
    fn invariants_along_trajectory() {
        let tr = traj(0.5, 0.4, 0.01);
        let nodes = tr.nodes();
        assert!(nodes.windows(2).all(|w| w[1].t < w[0].t));
        assert!(nodes.iter().all(|n| n.q > 0.0));
        // q increases as t decreases
        assert!(nodes.windows(2).all(|w| w[1].q > w[0].q));
        for n in nodes.iter().step_by(7) {
            let (dq, _) = tr.phase_derivative(n.t).unwrap();
            assert!(
                (dq + n.p / n.t).abs() <= 1e-9 * (n.p / n.t).abs().max(1e-300),
                "t={}",
                n.t
            );
        }
        let last = nodes.last().unwrap();
        assert!((last.p - 0.4).abs() <= 5.0 * 0.01f64.powf(0.6));
    }

    #[test]
    fn tolerance_and_t0_stability() {
        let p = ModelParams::from_sigma(0.5, 0.4).unwrap();
        let q = |t0: f64, tol: f64| {
            solve_backward(p, t0, 0.01, tol)
                .unwrap()
                .state(0.01)
                .unwrap()
                .q
        };
        let base = q(20.0, 1e-10);
        assert!((q(20.0, 5e-11) - base).abs() < 10.0 * 1e-10);
        assert!((q(30.0, 1e-12) - q(20.0, 1e-12)).abs() <= 1e-10);
    }

    #[test]
    fn painleve_residual_small() {
        for (nu, sigma) in [(0.5, 0.4), (0.0, 0.6), (-0.2, 0.2)] {
            let tr = traj(nu, sigma, 0.01);
            for i in 0..20 {
                let t = 0.005 * (2000f64).powf(i as f64 / 19.0);
                let t = t.min(0.5 * tr.t0);
                let c = painleve3_residual(&tr, t).unwrap();
                assert!(c.scaled() <= 1e-8, "nu={nu} sigma={sigma} t={t}: {c:?}");
            }
        }
        let tr = traj(0.0, 0.6, 0.01);
        assert!(painleve3_residual(&tr, 0.001).unwrap_err().is_domain());
    }

    #[test]
    fn degenerate_refusal_and_range_errors() {
        let p = ModelParams::from_sigma(0.0, 0.95).unwrap();
        assert!(solve_backward(p, 20.0, 5e-4, 1e-12)
            .unwrap_err()
            .is_domain());
        assert!(solve_backward(p, 20.0, 30.0, 1e-12).is_err());
        let tr = solve_backward(p, 20.0, 0.01, 1e-12).unwrap();
        assert!(tr.state(25.0).is_err());
    }

    #[test]
    fn csv_and_json_export() {
        let tr = traj(0.0, 0.5, 0.1);
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        let header: TrajectoryHeader =
            serde_json::from_str(lines.next().unwrap().trim_start_matches("# ")).unwrap();
        assert_eq!(header, tr.header());
        assert_eq!(lines.next().unwrap(), "t,q,p");
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), tr.nodes().len());
        assert_eq!(rows.last().unwrap()[0], tr.nodes().last().unwrap().t);
        let v: serde_json::Value = serde_json::from_str(&tr.to_json()).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), rows.len());
    }
}
