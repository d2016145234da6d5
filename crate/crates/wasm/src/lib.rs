//! Browser bindings. Each export returns a JSON string; the plain functions
//! behind them are native and carry the tests.

use isingtau::connect::{self, connection_constants, ConnectionConstants, CurvePoint};
use isingtau::sinhg::{self, ModelParams, DEFAULT_TOL};
use isingtau::tau::{self, FitResult, TauSettings};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Points per exported trajectory.
pub const TRAJECTORY_POINTS: usize = 160;
/// Largest `t` shown by the trajectory explorer.
pub const TRAJECTORY_T_MAX: f64 = 10.0;

#[derive(Debug, Serialize)]
pub struct CurveData {
    pub points: Vec<CurvePoint>,
}

pub fn curve_data(nus: &[f64], n_sigma: usize) -> Result<CurveData, String> {
    let nus = if nus.is_empty() {
        &connect::CURVE_NUS[..]
    } else {
        nus
    };
    Ok(CurveData {
        points: connect::curves(nus, n_sigma).map_err(|e| e.to_string())?,
    })
}

#[derive(Debug, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub q: f64,
    pub p: f64,
    /// `e^{−q(t)} = u(t/2)`.
    pub u: f64,
    /// Three-term small-`t` expansion of the same quantity, where it applies.
    pub u_smallt: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TrajectoryData {
    pub params: ModelParams,
    pub constants: Option<ConnectionConstants>,
    pub points: Vec<TrajectoryPoint>,
}

pub fn trajectory_data(nu: f64, sigma: f64, t_min: f64) -> Result<TrajectoryData, String> {
    let run = || -> isingtau::Result<TrajectoryData> {
        let p = ModelParams::from_sigma(nu, sigma)?;
        let traj = sinhg::solve_backward(p, sinhg::default_t0(&p)?, t_min, DEFAULT_TOL)?;
        let points = tau::log_spaced(t_min, TRAJECTORY_T_MAX.min(traj.t0), TRAJECTORY_POINTS)
            .into_iter()
            .map(|t| {
                let s = traj.state(t)?;
                Ok(TrajectoryPoint {
                    t,
                    q: s.q,
                    p: s.p,
                    u: (-s.q).exp(),
                    u_smallt: connect::u_smallt(t, nu, p.lambda).ok(),
                })
            })
            .collect::<isingtau::Result<_>>()?;
        Ok(TrajectoryData {
            params: p,
            constants: connection_constants(p).ok(),
            points,
        })
    };
    run().map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct AmplitudePoint {
    pub t: f64,
    pub tau: f64,
    /// `τ(t) t^{−σ(σ−2)/4} / (1 + e^{−q})`, which tends to `A` as `t → 0`.
    pub scaled: f64,
}

#[derive(Debug, Serialize)]
pub struct AmplitudeData {
    pub constants: ConnectionConstants,
    pub fit: FitResult,
    pub points: Vec<AmplitudePoint>,
}

pub fn amplitude_data(nu: f64, sigma: f64) -> Result<AmplitudeData, String> {
    let run = || -> isingtau::Result<AmplitudeData> {
        let p = ModelParams::from_sigma(nu, sigma)?;
        p.require_hypothesis()?;
        let constants = connection_constants(p)?;
        let (family, fit) = tau::fit_point(p, &TauSettings::default())?;
        let points = tau::log_spaced(tau::DEFAULT_U_WINDOW.0, 5.0, 60)
            .into_iter()
            .map(|t| {
                let s = family.sample(t)?;
                Ok(AmplitudePoint {
                    t,
                    tau: s.tau,
                    scaled: (s.ln_tau - constants.exponent_tau * t.ln() - (-s.q).exp().ln_1p())
                        .exp(),
                })
            })
            .collect::<isingtau::Result<_>>()?;
        Ok(AmplitudeData {
            constants,
            fit,
            points,
        })
    };
    run().map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// `B` and `A` against σ for each ν.
#[wasm_bindgen]
pub fn curves(nus: Vec<f64>, n_sigma: usize) -> Result<String, JsError> {
    to_json(curve_data(&nus, n_sigma))
}

/// `q`, `p` and `u` on `[t_min, 10]` with the small-`t` expansion alongside.
#[wasm_bindgen]
pub fn trajectory(nu: f64, sigma: f64, t_min: f64) -> Result<String, JsError> {
    to_json(trajectory_data(nu, sigma, t_min))
}

/// Closed-form and fitted `(σ, B, A)` with the scaled tau-function.
#[wasm_bindgen]
pub fn amplitude(nu: f64, sigma: f64) -> Result<String, JsError> {
    to_json(amplitude_data(nu, sigma))
}
