//! `actsig`: signatures, stability certificates, and curvature bounds for
//! activation functions, from the command line.
//!
//! Every subcommand is deterministic: fixed flags and seed give byte-identical
//! output. Exit codes: 0 success, 2 bad arguments, 3 a certified property
//! failed, 4 a numerical routine did not converge.

use std::io::Write;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use actsig::activations::{builtin, classified_names, classify, table_names};
use actsig::kernel::bound_stress;
use actsig::lyapunov::{certify_contraction, chebyshev_probes, f_lyapunov_descent, verify_descent};
use actsig::montecarlo::mc_components;
use actsig::propagation::{
    bias_drift_check, criticality_scan, linear_axis, solve_fixed_point,
};
use actsig::quadrature::build_rule;
use actsig::render;
use actsig::signature::{gaussian_components, signature_with_rule};
use actsig::{Error, QuadratureRule64};

/// Reference values of (m1, g1, g2, m2, eta) for the seven tabulated
/// activations at sigma in {0.5, 1, 2}, frozen from adaptive Gauss-Kronrod
/// integration of the defining integrals at absolute tolerance 1e-14.
#[rustfmt::skip]
const GOLDEN: [(&str, f64, [f64; 5]); 21] = [
    ("gelu", 0.5, [8.920620581e-02, 5.000000000e-01, 5.963934437e-01, 8.350672379e-02, 1.250000000e-01]),
    ("gelu", 1.0, [2.820947918e-01, 5.000000000e-01, 6.751672872e-01, 4.252214826e-01, 5.000000000e-01]),
    ("gelu", 2.0, [7.136496465e-01, 5.000000000e-01, 7.113682338e-01, 1.929865016e+00, 2.000000000e+00]),
    ("mish", 0.5, [7.283969846e-02, 5.884130409e-01, 6.473498755e-01, 1.008839886e-01, 1.471032602e-01]),
    ("mish", 1.0, [2.404038884e-01, 5.637475573e-01, 6.921587667e-01, 4.523421924e-01, 5.637475573e-01]),
    ("mish", 2.0, [6.538968153e-01, 5.280254372e-01, 7.162375286e-01, 1.948562654e+00, 2.112101749e+00]),
    ("relu", 0.5, [1.994711402e-01, 5.000000000e-01, 7.071067812e-01, 1.250000000e-01, 1.250000000e-01]),
    ("relu", 1.0, [3.989422804e-01, 5.000000000e-01, 7.071067812e-01, 5.000000000e-01, 5.000000000e-01]),
    ("relu", 2.0, [7.978845608e-01, 5.000000000e-01, 7.071067812e-01, 2.000000000e+00, 2.000000000e+00]),
    ("sigmoid", 0.5, [5.000000000e-01, 2.360444224e-01, 2.367164617e-01, 2.639555776e-01, 5.901110561e-02]),
    ("sigmoid", 1.0, [5.000000000e-01, 2.066209641e-01, 2.117456997e-01, 2.933790359e-01, 2.066209641e-01]),
    ("sigmoid", 2.0, [5.000000000e-01, 1.514263774e-01, 1.703677828e-01, 3.485736226e-01, 6.057055096e-01]),
    ("swish", 0.5, [5.901110561e-02, 5.000000000e-01, 5.480036360e-01, 7.224912421e-02, 1.250000000e-01]),
    ("swish", 1.0, [2.066209641e-01, 5.000000000e-01, 6.160213889e-01, 3.557755198e-01, 5.000000000e-01]),
    ("swish", 2.0, [6.057055096e-01, 5.000000000e-01, 6.829531864e-01, 1.757889867e+00, 2.000000000e+00]),
    ("tanh", 0.5, [0.000000000e+00, 8.264838566e-01, 8.469827989e-01, 1.735161434e-01, 2.066209641e-01]),
    ("tanh", 1.0, [0.000000000e+00, 6.057055096e-01, 6.814711310e-01, 3.942944904e-01, 6.057055096e-01]),
    ("tanh", 2.0, [0.000000000e+00, 3.647387657e-01, 5.059154507e-01, 6.352612343e-01, 1.458955063e+00]),
    ("telu", 0.5, [8.675560489e-02, 6.970145210e-01, 7.636281120e-01, 1.406625252e-01, 1.742536302e-01]),
    ("telu", 1.0, [2.621317250e-01, 6.143856029e-01, 7.491137321e-01, 5.290937036e-01, 6.143856029e-01]),
    ("telu", 2.0, [6.731717528e-01, 5.410085806e-01, 7.328248334e-01, 2.028588418e+00, 2.164034322e+00]),
];

const GOLDEN_TOL: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "actsig", version, about = "Integral signatures of activation functions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Gauss-Hermite rule order.
    #[arg(long, global = true, default_value_t = 160)]
    order: usize,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,

    /// Seed for every randomized routine.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Selection {
    /// Activation names (comma separated); see `builtin` for the accepted set.
    #[arg(long, value_delimiter = ',')]
    activations: Option<Vec<String>>,

    /// Input scales (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    sigmas: Vec<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Full nine-component signature per (activation, sigma).
    Signature {
        /// Activation name.
        #[arg(long, required = true, value_delimiter = ',')]
        activation: Vec<String>,
        /// Input scales (comma separated).
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
        sigma: Vec<f64>,
    },
    /// The five Gaussian components as a table sorted by (activation, sigma).
    Table {
        #[command(flatten)]
        selection: Selection,
        /// Compare against the embedded reference values; exit 3 beyond 1e-5.
        #[arg(long, conflicts_with = "activations", conflicts_with = "sigmas")]
        golden: bool,
    },
    /// Taxonomy class of an activation.
    Classify {
        #[arg(long, value_delimiter = ',')]
        activation: Option<Vec<String>>,
    },
    /// Seeded Monte-Carlo estimates cross-checked against quadrature.
    Mc {
        #[arg(long)]
        activation: String,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 300_000)]
        samples: usize,
    },
    /// Variance-map fixed point for one (sigma_w, sigma_b).
    Propagate {
        #[arg(long)]
        activation: String,
        #[arg(long)]
        sigma_w: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_b: f64,
        #[arg(long, default_value_t = 1.0)]
        q0: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Fixed-point stability over a (sigma_w, sigma_b) grid.
    Criticality {
        #[arg(long)]
        activation: String,
        /// Weight-scale axis, start:end:count.
        #[arg(long)]
        sigma_w: String,
        /// Bias-scale axis, start:end:count.
        #[arg(long, default_value = "0:0:1")]
        sigma_b: String,
        #[arg(long, default_value_t = 1.0)]
        q0: f64,
    },
    /// Contraction certificate and Lyapunov descent for T(x) = phi(a x + b).
    Lyapunov {
        #[arg(long)]
        activation: String,
        #[arg(long)]
        a: f64,
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_ref: f64,
        #[arg(long, default_value_t = 64)]
        probes: usize,
        /// Lower end of the probe interval.
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        lo: f64,
        /// Upper end of the probe interval.
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        hi: f64,
        /// Also run the primitive-based descent check at this lambda.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Randomized stress test of the kernel mixed-Hessian bounds.
    KernelBound {
        #[arg(long)]
        activation: String,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
    },
    /// Mean-shift drift bound per (activation, sigma).
    BiasDrift {
        #[command(flatten)]
        selection: Selection,
    },
}

/// Rendered output plus the process exit code (0 or 3).
struct Outcome {
    body: String,
    code: u8,
}

impl Outcome {
    fn ok(body: String) -> Self {
        Outcome { body, code: 0 }
    }

    fn property(body: String, holds: bool) -> Self {
        Outcome { body, code: if holds { 0 } else { 3 } }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            let written = match &cli.out {
                Some(path) => std::fs::write(path, &outcome.body)
                    .with_context(|| format!("writing {}", path.display())),
                None => std::io::stdout()
                    .write_all(outcome.body.as_bytes())
                    .context("writing standard output"),
            };
            if let Err(e) = written {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Argument(_)
        | Error::Registry(_)
        | Error::Metadata(_)
        | Error::Capability(_)
        | Error::Domain(_) => 2,
        Error::Convergence { .. } | Error::Evaluation { .. } => 4,
        Error::Invariant { .. } => 3,
    }
}

fn run(cli: &Cli) -> actsig::Result<Outcome> {
    let rule = build_rule(cli.order)?;
    match &cli.cmd {
        Cmd::Signature { activation, sigma } => {
            cmd_signature(cli, &rule, activation, sigma)
        }
        Cmd::Table { selection, golden } => cmd_table(cli, &rule, selection, *golden),
        Cmd::Classify { activation } => cmd_classify(cli, activation.as_deref()),
        Cmd::Mc { activation, sigma, samples } => {
            cmd_mc(cli, &rule, activation, *sigma, *samples)
        }
        Cmd::Propagate { activation, sigma_w, sigma_b, q0, max_iters, tol } => {
            cmd_propagate(cli, &rule, activation, *sigma_w, *sigma_b, *q0, *max_iters, *tol)
        }
        Cmd::Criticality { activation, sigma_w, sigma_b, q0 } => {
            cmd_criticality(cli, &rule, activation, sigma_w, sigma_b, *q0)
        }
        Cmd::Lyapunov { activation, a, b, sigma_ref, probes, lo, hi, lambda } => {
            cmd_lyapunov(cli, &rule, activation, *a, *b, *sigma_ref, *probes, *lo, *hi, *lambda)
        }
        Cmd::KernelBound { activation, dim, trials, samples } => {
            cmd_kernel(cli, &rule, activation, *dim, *trials, *samples)
        }
        Cmd::BiasDrift { selection } => cmd_bias_drift(cli, &rule, selection),
    }
}

fn parse_axis(s: &str) -> actsig::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Argument(format!("range `{s}` must be start:end:count or a number"));
    match parts.as_slice() {
        [one] => Ok(vec![one.parse().map_err(|_| bad())?]),
        [start, end, count] => linear_axis(
            start.parse().map_err(|_| bad())?,
            end.parse().map_err(|_| bad())?,
            count.parse().map_err(|_| bad())?,
        ),
        _ => Err(bad()),
    }
}

fn json_doc(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable value");
    s.push('\n');
    s
}

fn csv_doc(lines: &[String]) -> String {
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

fn cmd_signature(
    cli: &Cli,
    rule: &QuadratureRule64,
    names: &[String],
    sigmas: &[f64],
) -> actsig::Result<Outcome> {
    let mut sigs = Vec::new();
    for name in names {
        let act = builtin::<f64>(name)?;
        for &sigma in sigmas {
            sigs.push(signature_with_rule(&act, sigma, rule)?);
        }
    }
    let body = match cli.format {
        Format::Json => json_doc(&Value::Array(sigs.iter().map(render::signature_json).collect())),
        Format::Csv => {
            let mut lines = vec![render::SIGNATURE_CSV_HEADER.to_string()];
            lines.extend(sigs.iter().map(render::signature_csv_row));
            csv_doc(&lines)
        }
    };
    Ok(Outcome::ok(body))
}

fn cmd_table(
    cli: &Cli,
    rule: &QuadratureRule64,
    selection: &Selection,
    golden: bool,
) -> actsig::Result<Outcome> {
    let mut names: Vec<String> = match &selection.activations {
        Some(v) => v.clone(),
        None => table_names().into_iter().map(str::to_string).collect(),
    };
    names.sort();
    let mut sigmas = selection.sigmas.clone();
    sigmas.sort_by(|x, y| x.partial_cmp(y).expect("finite sigma"));

    let mut sigs = Vec::new();
    for name in &names {
        let act = builtin::<f64>(name)?;
        for &sigma in &sigmas {
            sigs.push(signature_with_rule(&act, sigma, rule)?);
        }
    }
    let body = match cli.format {
        Format::Json => {
            let rows: Vec<Value> = sigs
                .iter()
                .map(|s| {
                    json!({
                        "activation": s.name,
                        "sigma": render::num(s.sigma),
                        "m1": render::num(s.m1),
                        "g1": render::num(s.g1),
                        "g2": render::num(s.g2),
                        "m2": render::num(s.m2),
                        "eta": render::num(s.eta),
                    })
                })
                .collect();
            json_doc(&Value::Array(rows))
        }
        Format::Csv => {
            let mut lines = vec![render::TABLE_CSV_HEADER.to_string()];
            lines.extend(sigs.iter().map(render::table_csv_row));
            csv_doc(&lines)
        }
    };
    if !golden {
        return Ok(Outcome::ok(body));
    }
    let mut max_dev = 0.0f64;
    for (sig, (name, sigma, want)) in sigs.iter().zip(GOLDEN) {
        debug_assert_eq!((sig.name.as_str(), sig.sigma), (name, sigma));
        for (got, want) in [sig.m1, sig.g1, sig.g2, sig.m2, sig.eta].iter().zip(want) {
            max_dev = max_dev.max((got - want).abs());
        }
    }
    eprintln!("golden: max absolute deviation {max_dev:.3e} (tolerance {GOLDEN_TOL:.0e})");
    Ok(Outcome::property(body, max_dev < GOLDEN_TOL))
}

fn cmd_classify(cli: &Cli, names: Option<&[String]>) -> actsig::Result<Outcome> {
    let names: Vec<String> = match names {
        Some(v) => v.to_vec(),
        None => classified_names().into_iter().map(str::to_string).collect(),
    };
    let mut rows = Vec::new();
    for name in &names {
        let act = builtin::<f64>(name)?;
        rows.push((name.clone(), classify(&act)?.to_string()));
    }
    let body = match cli.format {
        Format::Json => json_doc(&Value::Array(
            rows.iter()
                .map(|(n, c)| json!({"activation": n, "class": c}))
                .collect(),
        )),
        Format::Csv => {
            let mut lines = vec!["activation,class".to_string()];
            // Class strings contain commas; quote them.
            lines.extend(rows.iter().map(|(n, c)| format!("{n},\"{c}\"")));
            csv_doc(&lines)
        }
    };
    Ok(Outcome::ok(body))
}

fn cmd_mc(
    cli: &Cli,
    rule: &QuadratureRule64,
    name: &str,
    sigma: f64,
    samples: usize,
) -> actsig::Result<Outcome> {
    let act = builtin::<f64>(name)?;
    let mc = mc_components(&act, sigma, samples, cli.seed)?;
    let q = gaussian_components(&act, sigma, rule)?;
    let refs = [q.m1, q.g1, q.g2, q.m2, q.eta];
    let mut consistent = true;
    let mut rows = Vec::new();
    for ((label, est), reference) in mc.as_array().iter().zip(refs) {
        let z = est.z_score(reference);
        consistent &= z.abs() < 4.0;
        rows.push((label.to_string(), *est, reference, z));
    }
    let body = match cli.format {
        Format::Json => json_doc(&json!({
            "activation": name,
            "sigma": render::num(sigma),
            "estimates": render::mc_json(&mc),
            "reference": {
                "m1": render::num(q.m1),
                "g1": render::num(q.g1),
                "g2": render::num(q.g2),
                "m2": render::num(q.m2),
                "eta": render::num(q.eta),
            },
            "z_scores": rows.iter().map(|(l, _, _, z)| (l.clone(), render::num(*z)))
                .collect::<serde_json::Map<_, _>>(),
            "consistent": consistent,
        })),
        Format::Csv => {
            let mut lines = vec!["component,estimate,std_error,reference,z".to_string()];
            for (label, est, reference, z) in &rows {
                lines.push(render::csv_row(&[
                    label.clone(),
                    render::cell(est.value),
                    render::cell(est.std_error),
                    render::cell(*reference),
                    render::cell(*z),
                ]));
            }
            csv_doc(&lines)
        }
    };
    Ok(Outcome::property(body, consistent))
}

#[allow(clippy::too_many_arguments)]
fn cmd_propagate(
    cli: &Cli,
    rule: &QuadratureRule64,
    name: &str,
    sigma_w: f64,
    sigma_b: f64,
    q0: f64,
    max_iters: usize,
    tol: f64,
) -> actsig::Result<Outcome> {
    let act = builtin::<f64>(name)?;
    let report = solve_fixed_point(&act, sigma_w, sigma_b, q0, max_iters, tol, rule)?;
    let body = match cli.format {
        Format::Json => json_doc(&render::fixed_point_json(&report)),
        Format::Csv => {
            let header = "sigma_w,sigma_b,q_star,f_prime,variance_stable,perturbation_stable,\
                          iterations,converged"
                .to_string();
            let row = render::csv_row(&[
                render::cell(report.sigma_w),
                render::cell(report.sigma_b),
                render::cell(report.q_star),
                render::cell(report.f_prime),
                report.variance_stable.to_string(),
                report.perturbation_stable.to_string(),
                report.iterations.to_string(),
                report.converged.to_string(),
            ]);
            csv_doc(&[header, row])
        }
    };
    Ok(Outcome::ok(body))
}

fn cmd_criticality(
    cli: &Cli,
    rule: &QuadratureRule64,
    name: &str,
    sigma_w: &str,
    sigma_b: &str,
    q0: f64,
) -> actsig::Result<Outcome> {
    let act = builtin::<f64>(name)?;
    let grid = criticality_scan(&act, parse_axis(sigma_w)?, parse_axis(sigma_b)?, q0, rule)?;
    let body = match cli.format {
        Format::Json => {
            let cells: Vec<Value> = grid
                .cells
                .iter()
                .flatten()
                .map(|c| {
                    json!({
                        "sigma_w": render::num(c.sigma_w),
                        "sigma_b": render::num(c.sigma_b),
                        "q_star": render::num(c.q_star),
                        "f_prime": render::num(c.f_prime),
                        "variance_stable": c.variance_stable,
                        "perturbation_stable": c.perturbation_stable,
                        "converged": c.converged,
                        "boundary": c.boundary,
                    })
                })
                .collect();
            json_doc(&json!({
                "sigma_w_axis": grid.sigma_w_axis.iter().map(|&v| render::num(v)).collect::<Vec<_>>(),
                "sigma_b_axis": grid.sigma_b_axis.iter().map(|&v| render::num(v)).collect::<Vec<_>>(),
                "cells": cells,
            }))
        }
        Format::Csv => csv_doc(&render::criticality_csv(&grid)),
    };
    Ok(Outcome::ok(body))
}

#[allow(clippy::too_many_arguments)]
fn cmd_lyapunov(
    cli: &Cli,
    rule: &QuadratureRule64,
    name: &str,
    a: f64,
    b: f64,
    sigma_ref: f64,
    probes: usize,
    lo: f64,
    hi: f64,
    lambda: Option<f64>,
) -> actsig::Result<Outcome> {
    if cli.format == Format::Csv {
        return Err(Error::Argument("lyapunov reports are JSON-only".into()));
    }
    let act = builtin::<f64>(name)?;
    let cert = certify_contraction(&act, a, b, sigma_ref, rule)?;
    let points = chebyshev_probes(lo, hi, probes);
    let mut holds = cert.is_contraction;
    let descent = if cert.is_contraction {
        let report = verify_descent(&cert, &act, &points)?;
        holds &= report.passed;
        Some(report)
    } else {
        None
    };
    let f_descent = match lambda {
        Some(lambda) => {
            let report = f_lyapunov_descent(&act, a, lambda, &points)?;
            holds &= report.passed;
            Some(report)
        }
        None => None,
    };
    let body = json_doc(&json!({
        "activation": name,
        "certificate": render::certificate_json(&cert),
        "descent": descent.as_ref().map(render::descent_json).unwrap_or(Value::Null),
        "f_descent": f_descent.as_ref().map(render::descent_json).unwrap_or(Value::Null),
    }));
    Ok(Outcome::property(body, holds))
}

fn cmd_kernel(
    cli: &Cli,
    rule: &QuadratureRule64,
    name: &str,
    dim: usize,
    trials: usize,
    samples: usize,
) -> actsig::Result<Outcome> {
    let act = builtin::<f64>(name)?;
    let reports = bound_stress(&act, dim, trials, samples, cli.seed, rule)?;
    let satisfied = reports.iter().all(|r| r.satisfied);
    let body = match cli.format {
        Format::Json => {
            json_doc(&Value::Array(reports.iter().map(render::kernel_json).collect()))
        }
        Format::Csv => {
            let mut lines =
                vec!["dim,norm_x,norm_y,g4_bound,bv_bound,mc_value,mc_se,satisfied".to_string()];
            for r in &reports {
                lines.push(render::csv_row(&[
                    r.dim.to_string(),
                    render::cell(r.norm_x),
                    render::cell(r.norm_y),
                    render::cell(r.g4_bound),
                    r.bv_bound.map(render::cell).unwrap_or_else(|| "".into()),
                    render::cell(r.mc.value),
                    render::cell(r.mc.std_error),
                    r.satisfied.to_string(),
                ]));
            }
            csv_doc(&lines)
        }
    };
    Ok(Outcome::property(body, satisfied))
}

fn cmd_bias_drift(
    cli: &Cli,
    rule: &QuadratureRule64,
    selection: &Selection,
) -> actsig::Result<Outcome> {
    let names: Vec<String> = match &selection.activations {
        Some(v) => v.clone(),
        None => ["relu", "leaky_relu(0.2)", "swish", "gelu", "mish", "telu"]
            .into_iter()
            .map(str::to_string)
            .collect(),
    };
    let mut rows = Vec::new();
    let mut holds = true;
    for name in &names {
        let act = builtin::<f64>(name)?;
        for &sigma in &selection.sigmas {
            let report = bias_drift_check(&act, sigma, rule)?;
            holds &= report.holds;
            rows.push((name.clone(), report));
        }
    }
    let body = match cli.format {
        Format::Json => json_doc(&Value::Array(
            rows.iter().map(|(n, r)| render::bias_drift_json(n, r)).collect(),
        )),
        Format::Csv => {
            let mut lines = vec!["activation,sigma,lhs,rhs,holds".to_string()];
            for (n, r) in &rows {
                lines.push(render::csv_row(&[
                    n.clone(),
                    render::cell(r.sigma),
                    render::cell(r.lhs),
                    render::cell(r.rhs),
                    r.holds.to_string(),
                ]));
            }
            csv_doc(&lines)
        }
    };
    Ok(Outcome::property(body, holds))
}
