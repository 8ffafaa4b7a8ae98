//! Orchestration: condition checks, Picard solve, certificates, optional
//! Nemytsky solve, and the artifacts they produce.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use hammerstein::analysis::{certify, CertificateBundle, CertificateOptions};
use hammerstein::kernels::{check_kernel_conditions_with, ConditionReport};
use hammerstein::nemytsky::{check_nemytsky_conditions, solve_nemytsky, NemytskyConditionReport, NemytskyReport};
use hammerstein::nonlinearity::{check_g_conditions, NonlinearityReport};
use hammerstein::{assemble_operator, solve_picard, Error, SolveReport};
use serde::{Deserialize, Serialize};

use crate::config::{Resolved, RunConfig};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Unexpected failure (I/O, internal).
    pub const INTERNAL: i32 = 1;
    pub const CONFIG: i32 = 2;
    /// A condition check or an enabled certificate failed.
    pub const CHECK_FAILED: i32 = 3;
    pub const NON_CONVERGENCE: i32 = 4;
}

pub const REPORT_FILE: &str = "report.json";
pub const PROFILE_FILE: &str = "profile.csv";
pub const META_FILE: &str = "run-meta.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Check,
    Solve,
    SolveNemytsky,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo { name: "hammerstein".into(), version: env!("CARGO_PKG_VERSION").into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub exit_code: i32,
    pub outcome: String,
    pub messages: Vec<String>,
}

/// The report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: ToolInfo,
    pub command: Command,
    pub config: RunConfig,
    pub status: Status,
    pub conditions: Option<ConditionReport>,
    pub nonlinearity: Option<NonlinearityReport>,
    pub nemytsky_conditions: Option<NemytskyConditionReport>,
    pub solve: Option<SolveReport>,
    pub certificates: Option<CertificateBundle>,
    pub nemytsky: Option<NemytskyReport>,
}

/// What a run produced; written out by [`write_artifacts`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Profile file contents, when a solve completed.
    pub profile: Option<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.report.status.exit_code
    }
}

fn certificate_options(config: &RunConfig) -> CertificateOptions {
    let c = &config.certificates;
    CertificateOptions {
        lemma2: c.lemma2,
        lemma3: c.lemma3,
        jensen: c.jensen,
        asymptote: c.asymptote,
        uniqueness: c.uniqueness,
        probe_trials: c.probe_trials,
        probe_scale: c.probe_scale,
        probe_refine: c.probe_refine,
        seed: c.seed,
    }
}

/// Runs `command` on a configuration that has already been resolved.
/// Library failures become exit codes; the report is always produced.
pub fn run(command: Command, config: &RunConfig, resolved: &Resolved) -> RunOutcome {
    let mut report = RunReport {
        tool: ToolInfo::current(),
        command,
        config: config.clone(),
        status: Status { exit_code: exit::OK, outcome: "ok".into(), messages: Vec::new() },
        conditions: None,
        nonlinearity: None,
        nemytsky_conditions: None,
        solve: None,
        certificates: None,
        nemytsky: None,
    };
    let profile = match execute(command, config, resolved, &mut report) {
        Ok(p) => p,
        Err((code, outcome, msg)) => {
            report.status.exit_code = code;
            report.status.outcome = outcome.into();
            report.status.messages.push(msg);
            None
        }
    };
    RunOutcome { report, profile }
}

type Failure = (i32, &'static str, String);

fn fail_from(e: Error, report: &mut RunReport) -> Failure {
    match e {
        Error::NonConvergence(partial) => {
            let msg = format!("successive approximations did not converge in {} iterations", partial.iterations);
            report.solve = Some(*partial);
            (exit::NON_CONVERGENCE, "non-convergence", msg)
        }
        Error::NemytskyNonConvergence(partial) => {
            let msg = format!("Nemytsky iteration did not converge in {} iterations", partial.iterations);
            report.nemytsky = Some(*partial);
            (exit::NON_CONVERGENCE, "non-convergence", msg)
        }
        Error::NumericalBreakdown(msg) => (exit::NON_CONVERGENCE, "numerical-breakdown", msg),
        Error::SpecRejected(msg) | Error::HypothesisNotMet(msg) => (exit::CHECK_FAILED, "conditions-failed", msg),
        Error::SpecInvalid(msg) => (exit::CONFIG, "invalid-config", msg),
        other => (exit::INTERNAL, "internal-error", other.to_string()),
    }
}

fn execute(
    command: Command,
    config: &RunConfig,
    r: &Resolved,
    report: &mut RunReport,
) -> Result<Option<String>, Failure> {
    // conditions
    let conditions = check_kernel_conditions_with(&r.kernel, &r.grid, &r.conditions);
    let nonlinearity = check_g_conditions(&r.g, config.conditions.n_u, config.conditions.n_sigma, r.conditions.tol)
        .map_err(|e| fail_from(e, report))?;
    let mut failures: Vec<String> = conditions.failures.iter().map(|f| format!("kernel: {f}")).collect();
    failures.extend(nonlinearity.failures.iter().map(|f| format!("nonlinearity: {f}")));
    report.conditions = Some(conditions.clone());
    report.nonlinearity = Some(nonlinearity);

    let nemytsky_spec = match command {
        Command::SolveNemytsky => Some(r.nemytsky.clone().ok_or((
            exit::CONFIG,
            "invalid-config",
            "nemytsky: block required by solve-nemytsky".to_string(),
        ))?),
        _ => r.nemytsky.clone(),
    };
    if let (Some(spec), Some(nc)) = (&nemytsky_spec, &config.nemytsky) {
        let rep = check_nemytsky_conditions(spec, &r.grid, nc.n_u, r.conditions.tol).map_err(|e| fail_from(e, report))?;
        failures.extend(rep.failures.iter().map(|f| format!("nemytsky: {f}")));
        report.nemytsky_conditions = Some(rep);
    }
    if !failures.is_empty() {
        return Err((exit::CHECK_FAILED, "conditions-failed", failures.join("; ")));
    }
    if command == Command::Check {
        return Ok(None);
    }

    // solve
    let op = assemble_operator(&r.kernel, &r.grid).map_err(|e| fail_from(e, report))?;
    let solve = solve_picard(&op, &r.g, r.tol, r.max_iter).map_err(|e| fail_from(e, report))?;
    report.solve = Some(solve.clone());

    let nemytsky = match &nemytsky_spec {
        Some(spec) if command == Command::SolveNemytsky => {
            let n = solve_nemytsky(spec, &op, &solve.deficit, r.nemytsky_tol, r.max_iter)
                .map_err(|e| fail_from(e, report))?;
            report.nemytsky = Some(n.clone());
            Some(n)
        }
        _ => None,
    };
    let profile = render_profile(&r.grid.nodes, &solve, &op.gamma, nemytsky.as_ref());

    // certificates
    let bundle = certify(&r.kernel, &op, &r.g, &solve, &conditions, &certificate_options(config), r.max_iter)
        .map_err(|e| fail_from(e, report))?;
    let mut messages = bundle.failures.clone();
    report.certificates = Some(bundle);
    if !solve.rate_bound_ok {
        messages.push("rate bound (13) violated".into());
    }
    if !solve.monotone_ok {
        messages.push(format!("monotonicity violated by {:e}", solve.monotone_max_violation));
    }
    if !solve.interior_ok {
        messages.push("f* leaves the open interval (0, eta)".into());
    }
    if let Some(n) = &nemytsky {
        if !n.sandwich_ok || !n.monotone_ok {
            messages.push(format!(
                "Nemytsky sandwich: lower {:e}, envelope {:e}, decrease {:e}",
                n.lower_max_violation, n.envelope_max_violation, n.monotone_max_violation
            ));
        }
    }
    if !messages.is_empty() {
        report.status = Status {
            exit_code: exit::CHECK_FAILED,
            outcome: "certificates-failed".into(),
            messages,
        };
    }
    Ok(Some(profile))
}

/// Delimited profile: one row per node, values in shortest round-trip form.
pub fn render_profile(
    nodes: &[f64],
    solve: &SolveReport,
    gamma: &[f64],
    nemytsky: Option<&NemytskyReport>,
) -> String {
    let mut s = String::from("x,f_star,gamma,eta_minus_fstar");
    if nemytsky.is_some() {
        s.push_str(",phi,lower_env,upper_env");
    }
    s.push('\n');
    for i in 0..nodes.len() {
        let _ = write!(s, "{:e},{:e},{:e},{:e}", nodes[i], solve.profile[i], gamma[i], solve.deficit[i]);
        if let Some(n) = nemytsky {
            let _ = write!(s, ",{:e},{:e},{:e}", n.profile[i], n.lower_env[i], n.upper_env[i]);
        }
        s.push('\n');
    }
    s
}

pub fn render_report(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Writes the report, the profile (if any) and the timing sidecar.
pub fn write_artifacts(out_dir: &Path, outcome: &RunOutcome, meta: &serde_json::Value) -> io::Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(REPORT_FILE), render_report(&outcome.report))?;
    if let Some(p) = &outcome.profile {
        fs::write(out_dir.join(PROFILE_FILE), p)?;
    }
    let mut m = serde_json::to_string_pretty(meta).expect("metadata serializes");
    m.push('\n');
    fs::write(out_dir.join(META_FILE), m)
}
