//! Rendering of analysis reports to JSON and CSV with a fixed numeric
//! policy: 9 significant digits, `.` decimal, infinities spelled `inf`.

use serde_json::{json, Map, Value};

use crate::kernel::KernelBoundReport;
use crate::lyapunov::{ContractionCertificate, DescentReport, L2ContractionReport};
use crate::montecarlo::McComponents;
use crate::propagation::{BiasDriftReport, CriticalityGrid, FixedPointReport};
use crate::signature::Signature;

/// Round to 9 significant digits (the serialization precision).
pub fn round_sig9(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

/// A JSON value carrying 9 significant digits; non-finite values become the
/// strings `"inf"`, `"-inf"`, `"nan"` since JSON has no literal for them.
pub fn num(v: f64) -> Value {
    if v.is_nan() {
        Value::String("nan".into())
    } else if v.is_infinite() {
        Value::String(if v > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        json!(round_sig9(v))
    }
}

/// CSV cell with the same numeric policy as [`num`].
pub fn cell(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        (if v > 0.0 { "inf" } else { "-inf" }).into()
    } else {
        let r = round_sig9(v);
        // Plain decimal where compact, scientific otherwise.
        if r == 0.0 || (1e-4..1e9).contains(&r.abs()) {
            format!("{r}")
        } else {
            format!("{r:e}")
        }
    }
}

/// Join cells into one CSV record.
pub fn csv_row(cells: &[String]) -> String {
    cells.join(",")
}

pub fn signature_json(sig: &Signature<f64>) -> Value {
    json!({
        "activation": sig.name,
        "sigma": num(sig.sigma),
        "order": sig.order,
        "m1": num(sig.m1),
        "g1": num(sig.g1),
        "g2": num(sig.g2),
        "m2": num(sig.m2),
        "eta": num(sig.eta),
        "alpha_plus": num(sig.alpha_plus),
        "alpha_minus": num(sig.alpha_minus),
        "tv": num(sig.tv),
        "c_phi": num(sig.c_phi),
        "g4": num(sig.g4),
        "m2_prime": num(sig.m2_prime),
    })
}

pub const SIGNATURE_CSV_HEADER: &str =
    "activation,sigma,m1,g1,g2,m2,eta,alpha_plus,alpha_minus,tv,c_phi,g4,m2_prime";

pub fn signature_csv_row(sig: &Signature<f64>) -> String {
    let mut cells = vec![sig.name.clone()];
    for v in [
        sig.sigma,
        sig.m1,
        sig.g1,
        sig.g2,
        sig.m2,
        sig.eta,
        sig.alpha_plus,
        sig.alpha_minus,
        sig.tv,
        sig.c_phi,
        sig.g4,
        sig.m2_prime,
    ] {
        cells.push(cell(v));
    }
    csv_row(&cells)
}

pub const TABLE_CSV_HEADER: &str = "activation,sigma,m1,g1,g2,m2,eta";

pub fn table_csv_row(sig: &Signature<f64>) -> String {
    let mut cells = vec![sig.name.clone()];
    for v in [sig.sigma, sig.m1, sig.g1, sig.g2, sig.m2, sig.eta] {
        cells.push(cell(v));
    }
    csv_row(&cells)
}

pub fn mc_json(mc: &McComponents) -> Value {
    let mut obj = Map::new();
    for (name, est) in mc.as_array() {
        obj.insert(
            name.to_string(),
            json!({
                "value": num(est.value),
                "std_error": num(est.std_error),
                "samples": est.samples,
                "seed": est.seed,
            }),
        );
    }
    Value::Object(obj)
}

pub fn fixed_point_json(r: &FixedPointReport) -> Value {
    json!({
        "sigma_w": num(r.sigma_w),
        "sigma_b": num(r.sigma_b),
        "q_star": num(r.q_star),
        "f_prime": num(r.f_prime),
        "variance_stable": r.variance_stable,
        "perturbation_stable": r.perturbation_stable,
        "iterations": r.iterations,
        "converged": r.converged,
        "trajectory_head": r.trajectory.iter().take(16).map(|&q| num(q)).collect::<Vec<_>>(),
    })
}

pub const CRITICALITY_CSV_HEADER: &str =
    "sigma_w,sigma_b,q_star,f_prime,variance_stable,perturbation_stable,converged,boundary";

pub fn criticality_csv(grid: &CriticalityGrid) -> Vec<String> {
    let mut rows = Vec::with_capacity(grid.cells.len() * grid.sigma_b_axis.len() + 1);
    rows.push(CRITICALITY_CSV_HEADER.to_string());
    for row in &grid.cells {
        for c in row {
            rows.push(csv_row(&[
                cell(c.sigma_w),
                cell(c.sigma_b),
                cell(c.q_star),
                cell(c.f_prime),
                c.variance_stable.to_string(),
                c.perturbation_stable.to_string(),
                c.converged.to_string(),
                c.boundary.to_string(),
            ]));
        }
    }
    rows
}

pub fn bias_drift_json(name: &str, r: &BiasDriftReport) -> Value {
    json!({
        "activation": name,
        "sigma": num(r.sigma),
        "lhs": num(r.lhs),
        "rhs": num(r.rhs),
        "holds": r.holds,
    })
}

pub fn certificate_json(c: &ContractionCertificate) -> Value {
    json!({
        "a": num(c.a),
        "b": num(c.b),
        "L_T": num(c.lipschitz_t),
        "x_star": c.x_star.map(num).unwrap_or(Value::Null),
        "c": num(c.descent_constant),
        "is_contraction": c.is_contraction,
        "l2_gain": num(c.l2_gain),
        "sigma_ref": num(c.sigma_ref),
        "sup_slope_approx": c.sup_slope_approx,
    })
}

pub fn descent_json(r: &DescentReport) -> Value {
    json!({
        "probes": r.probes,
        "worst_slack": num(r.worst_slack),
        "passed": r.passed,
        "violations": r
            .violations
            .iter()
            .map(|v| json!({"x": num(v.x), "lhs": num(v.lhs), "rhs": num(v.rhs)}))
            .collect::<Vec<_>>(),
    })
}

pub fn l2_json(r: &L2ContractionReport) -> Value {
    json!({
        "sigma": num(r.sigma),
        "a": num(r.a),
        "g2": num(r.g2),
        "gain": num(r.gain),
        "contraction": r.contraction,
        "passed": r.passed,
        "checks": r
            .checks
            .iter()
            .map(|c| json!({
                "h": num(c.h),
                "rho": num(c.rho),
                "ratio": num(c.ratio),
                "std_error": num(c.std_error),
                "holds": c.holds,
            }))
            .collect::<Vec<_>>(),
    })
}

pub fn kernel_json(r: &KernelBoundReport) -> Value {
    json!({
        "dim": r.dim,
        "norm_x": num(r.norm_x),
        "norm_y": num(r.norm_y),
        "g4_bound": num(r.g4_bound),
        "bv_bound": r.bv_bound.map(num).unwrap_or(Value::Null),
        "mc_value": num(r.mc.value),
        "mc_se": num(r.mc.std_error),
        "satisfied": r.satisfied,
    })
}
