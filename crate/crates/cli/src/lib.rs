//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a verification criterion failed, 2 invalid
//! input or parameters outside the supported domain, 3 solver or I/O failure.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isingtau::connect::{self, connection_constants, CURVE_NUS, CURVE_SIGMA_SAMPLES};
use isingtau::quad::{self, QuadSettings};
use isingtau::sinhg::{self, ModelParams};
use isingtau::tau::{self, TauFamily, TauSettings, DEFAULT_H_NU};
use isingtau::verify::{self, Criterion};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] isingtau::Error),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_domain() => 2,
            CliError::Usage(_) => 2,
            _ => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "isingtau",
    version,
    about = "Connection problem for the radial sinh-Gordon equation and its tau-function"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the boundary-value problem backwards from large t.
    Solve(SolveArgs),
    /// Evaluate the tau-function on a grid of t.
    Tau(TauArgs),
    /// Closed-form connection constants, optionally checked against a fit.
    Connect(ConnectArgs),
    /// Run the verification criteria.
    Verify(VerifyArgs),
    /// B and A curves over sigma, or fits over the verification grid.
    Sweep(SweepArgs),
    /// Leading series coefficient f2(t, nu).
    F2(F2Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub nu: f64,
    #[arg(long, conflicts_with = "sigma", required_unless_present = "sigma")]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

impl ParamArgs {
    pub fn params(&self) -> CliResult<ModelParams> {
        Ok(match (self.lambda, self.sigma) {
            (Some(l), None) => ModelParams::from_lambda(self.nu, l)?,
            (None, Some(s)) => ModelParams::from_sigma(self.nu, s)?,
            _ => {
                return Err(CliError::Usage(
                    "give exactly one of --lambda or --sigma".into(),
                ))
            }
        })
    }
}

#[derive(Debug, Args)]
pub struct IntegrationArgs {
    /// Start of the backward integration (chosen from the boundary data if absent).
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long, default_value_t = sinhg::DEFAULT_T_MIN)]
    pub t_min: f64,
    /// Relative tolerance of the integrator.
    #[arg(long, env = "CONNECT_TOL", default_value_t = sinhg::DEFAULT_TOL)]
    pub tol: f64,
}

impl IntegrationArgs {
    fn validate(&self) -> CliResult<()> {
        if !(self.t_min > 0.0 && self.t_min.is_finite()) {
            return Err(CliError::Usage(format!(
                "--t-min must be positive, got {}",
                self.t_min
            )));
        }
        if let Some(t0) = self.t0 {
            if !(t0 > self.t_min && t0.is_finite()) {
                return Err(CliError::Usage(format!(
                    "--t0 must exceed --t-min, got {t0}"
                )));
            }
        }
        if !(1e-15..1e-2).contains(&self.tol) {
            return Err(CliError::Usage(format!(
                "--tol must lie in [1e-15, 1e-2), got {}",
                self.tol
            )));
        }
        Ok(())
    }

    fn t0_for(&self, params: &ModelParams) -> CliResult<f64> {
        Ok(match self.t0 {
            Some(t0) => t0,
            None => sinhg::default_t0(params)?,
        })
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TauArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    /// Comma-separated t values (default: the standard comparison grid).
    #[arg(long, value_delimiter = ',')]
    pub t: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_H_NU)]
    pub h_nu: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ConnectArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Also fit sigma, B and A from the numerical solution.
    #[arg(long)]
    pub fit: bool,
    #[arg(long, env = "CONNECT_TOL", default_value_t = sinhg::DEFAULT_TOL)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Criteria to run, by name or number (default: all).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated nu values for the curves.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = CURVE_NUS)]
    pub nus: Vec<f64>,
    #[arg(long, default_value_t = CURVE_SIGMA_SAMPLES)]
    pub n_sigma: usize,
    /// Fit every point of the verification grid instead of tabulating curves.
    #[arg(long)]
    pub fit: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct F2Args {
    #[arg(long)]
    pub t: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub nu: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Result of a successful run: whether every requested criterion passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CriteriaFailed,
}

fn emit(out: &OutputArgs, text: &str) -> CliResult<()> {
    match &out.output {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io {
                path: "stdout".into(),
                source,
            }),
    }
}

fn json<T: Serialize + ?Sized>(value: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn csv_table(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Solve(a) => solve(a),
        Command::Tau(a) => tau_cmd(a),
        Command::Connect(a) => connect_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::F2(a) => f2_cmd(a),
    }
    .map(|o| o.unwrap_or(Outcome::Success))
}

fn solve(a: SolveArgs) -> CliResult<Option<Outcome>> {
    a.integration.validate()?;
    let p = a.params.params()?;
    let traj = sinhg::solve_backward(
        p,
        a.integration.t0_for(&p)?,
        a.integration.t_min,
        a.integration.tol,
    )?;
    let text = match a.output.format.unwrap_or(Format::Csv) {
        Format::Csv => traj.to_csv(),
        Format::Json => traj.to_json(),
    };
    emit(&a.output, &text)?;
    Ok(None)
}

fn tau_cmd(a: TauArgs) -> CliResult<Option<Outcome>> {
    a.integration.validate()?;
    let p = a.params.params()?;
    let ts = if a.t.is_empty() {
        tau::standard_grid()
    } else {
        a.t.clone()
    };
    if let Some(bad) = ts.iter().find(|t| !t.is_finite() || **t <= 0.0) {
        return Err(CliError::Usage(format!(
            "t values must be positive, got {bad}"
        )));
    }
    let t_min = ts.iter().copied().fold(a.integration.t_min, f64::min);
    let settings = TauSettings {
        t0: Some(a.integration.t0_for(&p)?),
        t_min,
        tol: a.integration.tol,
        h_nu: a.h_nu,
    };
    let family = TauFamily::new(p, &settings)?;
    let samples = ts
        .iter()
        .map(|&t| family.sample(t))
        .collect::<Result<Vec<_>, _>>()?;
    let text = match a.output.format.unwrap_or(Format::Json) {
        Format::Json => json(&samples)?,
        Format::Csv => csv_table(
            "t,tau,ln_tau,tau_minus_one,q,p,H_t,S_t,nu_term,nu_term_error",
            samples.iter().map(|s| {
                [
                    s.t,
                    s.tau,
                    s.ln_tau,
                    s.tau_minus_one,
                    s.q,
                    s.p,
                    s.h_t,
                    s.s_t,
                    s.nu_term,
                    s.diagnostics.nu_term_error,
                ]
                .iter()
                .map(|v| format!("{v:e}"))
                .collect()
            }),
        ),
    };
    emit(&a.output, &text)?;
    Ok(None)
}

#[derive(Serialize)]
struct ConnectRecord {
    #[serde(flatten)]
    constants: connect::ConnectionConstants,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<tau::FitResult>,
}

fn connect_cmd(a: ConnectArgs) -> CliResult<Option<Outcome>> {
    let p = a.params.params()?;
    let constants = connection_constants(p)?;
    let fit = if a.fit {
        let settings = TauSettings {
            tol: a.tol,
            ..TauSettings::default()
        };
        Some(tau::fit_point(p, &settings)?.1)
    } else {
        None
    };
    let text = match a.output.format.unwrap_or(Format::Json) {
        Format::Json => json(&ConnectRecord { constants, fit })?,
        Format::Csv => {
            let mut header = "nu,lambda,sigma,s,B,A,exponent_u,exponent_tau".to_string();
            let mut row = vec![
                format!("{:e}", p.nu),
                format!("{:e}", p.lambda),
                format!("{:e}", p.sigma),
                format!("{:e}", p.s),
                opt(constants.b),
                opt(constants.a),
                format!("{:e}", constants.exponent_u),
                format!("{:e}", constants.exponent_tau),
            ];
            if let Some(f) = fit {
                header.push_str(",sigma_fit,B_fit,A_fit,tau_exponent_fit,residual");
                row.extend(
                    [
                        f.sigma_fit,
                        f.b_fit,
                        f.a_fit,
                        f.tau_exponent_fit,
                        f.residual,
                    ]
                    .iter()
                    .map(|v| format!("{v:e}")),
                );
            }
            csv_table(&header, [row])
        }
    };
    emit(&a.output, &text)?;
    Ok(None)
}

fn verify_cmd(a: VerifyArgs) -> CliResult<Option<Outcome>> {
    let selection = a
        .only
        .iter()
        .map(|s| s.parse::<Criterion>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let report = verify::run(&selection)?;
    let text = match a.output.format {
        Some(Format::Json) => json(&report)?,
        Some(Format::Csv) => csv_table(
            "criterion,number,name,analytic,fitted,error,tolerance,pass",
            report.records.iter().map(|r| {
                vec![
                    r.criterion.name().to_string(),
                    r.criterion.number().to_string(),
                    format!("\"{}\"", r.name),
                    format!("{:e}", r.analytic),
                    format!("{:e}", r.fitted),
                    format!("{:e}", r.error),
                    format!("{:e}", r.tolerance),
                    r.pass.to_string(),
                ]
            }),
        ),
        None => report.summary(),
    };
    emit(&a.output, &text)?;
    if a.output.output.is_some() {
        eprint!("{}", report.summary());
    }
    Ok(Some(if report.all_passed() {
        Outcome::Success
    } else {
        Outcome::CriteriaFailed
    }))
}

#[derive(Serialize)]
struct SweepFit {
    nu: f64,
    sigma: f64,
    #[serde(rename = "B")]
    b: f64,
    #[serde(rename = "A")]
    a: f64,
    #[serde(flatten)]
    fit: tau::FitResult,
}

fn sweep(a: SweepArgs) -> CliResult<Option<Outcome>> {
    let format = a.output.format.unwrap_or(Format::Csv);
    let text = if a.fit {
        let rows = verify::grid_fits(&verify::sweep_grid())?
            .into_iter()
            .map(|g| {
                Ok(SweepFit {
                    nu: g.params.nu,
                    sigma: g.params.sigma,
                    b: connect::coefficient_b(g.params.nu, g.params.sigma)?,
                    a: connect::coefficient_a(g.params.nu, g.params.lambda)?,
                    fit: g.fit,
                })
            })
            .collect::<Result<Vec<_>, isingtau::Error>>()?;
        match format {
            Format::Json => json(&rows)?,
            Format::Csv => csv_table(
                "nu,sigma,B,A,sigma_fit,B_fit,A_fit,tau_exponent_fit,residual",
                rows.iter().map(|r| {
                    [
                        r.nu,
                        r.sigma,
                        r.b,
                        r.a,
                        r.fit.sigma_fit,
                        r.fit.b_fit,
                        r.fit.a_fit,
                        r.fit.tau_exponent_fit,
                        r.fit.residual,
                    ]
                    .iter()
                    .map(|v| format!("{v:e}"))
                    .collect()
                }),
            ),
        }
    } else {
        let points = connect::curves(&a.nus, a.n_sigma)?;
        match format {
            Format::Json => json(&points)?,
            Format::Csv => csv_table(
                "nu,sigma,B,A",
                points.iter().map(|p| {
                    vec![
                        format!("{:e}", p.nu),
                        format!("{:e}", p.sigma),
                        opt(p.b),
                        opt(p.a),
                    ]
                }),
            ),
        }
    };
    emit(&a.output, &text)?;
    Ok(None)
}

#[derive(Serialize)]
struct F2Record {
    t: f64,
    nu: f64,
    value: f64,
    abs_error: f64,
    loss_of_precision: bool,
}

fn f2_cmd(a: F2Args) -> CliResult<Option<Outcome>> {
    let e = quad::f2(a.t, a.nu, &QuadSettings::two_dimensional())?;
    let rec = F2Record {
        t: a.t,
        nu: a.nu,
        value: e.value,
        abs_error: e.abs_error,
        loss_of_precision: e.loss_of_precision,
    };
    let text = match a.output.format.unwrap_or(Format::Json) {
        Format::Json => json(&rec)?,
        Format::Csv => {
            let mut s = String::from("t,nu,value,abs_error,loss_of_precision\n");
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e},{}",
                rec.t, rec.nu, rec.value, rec.abs_error, rec.loss_of_precision
            );
            s
        }
    };
    emit(&a.output, &text)?;
    Ok(None)
}
