//! Contraction certificates and Lyapunov descent verification for the scalar
//! recursion `T(x) = phi(a x + b)`.
//!
//! The quadratic certificate uses `V(x) = (x - x*)^2 / 2` with the global
//! descent constant `c = (1 - L_T) / (2 (1 + L_T))`; the linearization at the
//! fixed point admits the larger `(1 + L_T) / (2 (1 - L_T))`, but that
//! constant is local and fails at finite distance (see the tests), so the
//! certificate carries the one that holds on all of R.

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_interval, GaussianLaw, QuadratureRule};
use crate::rng::{chunked_reduce, standard_normal};
use crate::scalar::Real;
use crate::signature::Expectations;

/// Certificate for `T(x) = phi(a x + b)` being a contraction on R.
#[derive(Debug, Clone)]
pub struct ContractionCertificate {
    pub a: f64,
    pub b: f64,
    /// `L_T = |a| * sup|phi'|`.
    pub lipschitz_t: f64,
    /// Fixed point; present iff `is_contraction`.
    pub x_star: Option<f64>,
    /// Global quadratic descent constant `(1 - L_T) / (2 (1 + L_T))`.
    pub descent_constant: f64,
    pub is_contraction: bool,
    /// `|a| * g2(sigma_ref)`: the L2 contraction gain at the reference scale.
    pub l2_gain: f64,
    pub sigma_ref: f64,
    /// True when sup|phi'| came from the grid fallback, not metadata.
    pub sup_slope_approx: bool,
}

/// Outcome of a probe-based descent check.
#[derive(Debug, Clone)]
pub struct DescentReport {
    pub probes: usize,
    /// Smallest margin `rhs - lhs` over the probes (>= -tolerance on pass).
    pub worst_slack: f64,
    pub violations: Vec<DescentViolation>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DescentViolation {
    pub x: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// One L2 contraction ratio check at Gaussian pair distance `h`.
#[derive(Debug, Clone, Copy)]
pub struct L2Check {
    pub h: f64,
    pub rho: f64,
    pub ratio: f64,
    pub std_error: f64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct L2ContractionReport {
    pub sigma: f64,
    pub a: f64,
    pub g2: f64,
    /// `|a| * g2(sigma)`; strict contraction in L2 when below 1.
    pub gain: f64,
    pub contraction: bool,
    pub checks: Vec<L2Check>,
    pub passed: bool,
}

/// `n` Chebyshev points (first kind) on `[lo, hi]`, ascending. They cluster
/// near the endpoints, where descent slack is smallest.
pub fn chebyshev_probes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut pts: Vec<f64> = (0..n)
        .map(|j| {
            let theta = std::f64::consts::PI * (2.0 * j as f64 + 1.0) / (2.0 * n as f64);
            mid + half * theta.cos()
        })
        .collect();
    pts.reverse();
    pts
}

const SUP_GRID_HALF_WIDTH: f64 = 100.0;
const SUP_GRID_POINTS: usize = 400_001;

/// Global slope bound: metadata when available, otherwise the max of |phi'|
/// over a dense grid on [-100, 100] (flagged approximate).
pub fn sup_slope<R: Real>(act: &Activation<R>) -> (f64, bool) {
    if let Some(m) = act.sup_slope {
        return (m.as_f64(), false);
    }
    let step = 2.0 * SUP_GRID_HALF_WIDTH / (SUP_GRID_POINTS - 1) as f64;
    let mut m = act.alpha_plus.as_f64().abs().max(act.alpha_minus.as_f64().abs());
    for i in 0..SUP_GRID_POINTS {
        let x = -SUP_GRID_HALF_WIDTH + step * i as f64;
        m = m.max(act.deriv(R::c(x)).as_f64().abs());
    }
    (m, true)
}

/// `T(x) = phi(a x + b)`.
pub fn t_map<R: Real>(act: &Activation<R>, a: f64, b: f64, x: f64) -> f64 {
    act.value(R::c(a * x + b)).as_f64()
}

/// Build the contraction certificate for `T(x) = phi(a x + b)`, with the L2
/// gain evaluated at `sigma_ref`.
pub fn certify_contraction<R: Real>(
    act: &Activation<R>,
    a: f64,
    b: f64,
    sigma_ref: f64,
    rule: &QuadratureRule<R>,
) -> Result<ContractionCertificate> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Argument("a and b must be finite".into()));
    }
    if !(sigma_ref > 0.0) {
        return Err(Error::Argument(format!("sigma_ref must be positive, got {sigma_ref}")));
    }
    let (sup, approx) = sup_slope(act);
    if !sup.is_finite() {
        return Err(Error::Domain(format!("{}: slope is unbounded", act.name)));
    }
    let lipschitz_t = a.abs() * sup;

    let law = GaussianLaw::centered(R::c(sigma_ref))?;
    let e = Expectations::new(act, law, rule)?;
    let g2sq = e.expect(|z| {
        let d = act.deriv(z);
        d * d
    })?;
    let l2_gain = a.abs() * g2sq.max(R::zero()).sqrt().as_f64();

    let is_contraction = lipschitz_t < 1.0;
    let x_star = if is_contraction {
        // Banach iteration from 0; geometric at rate L_T.
        let mut x = 0.0f64;
        for _ in 0..100_000 {
            let next = t_map(act, a, b, x);
            if (next - x).abs() <= 1e-13 * x.abs().max(1.0) {
                x = next;
                break;
            }
            x = next;
        }
        let residual = (t_map(act, a, b, x) - x).abs();
        if residual > 1e-10 {
            return Err(Error::Convergence {
                what: format!("fixed point of {} with a={a}, b={b}", act.name),
                last: residual,
            });
        }
        Some(x)
    } else {
        None
    };

    Ok(ContractionCertificate {
        a,
        b,
        lipschitz_t,
        x_star,
        descent_constant: descent_constant(lipschitz_t),
        is_contraction,
        l2_gain,
        sigma_ref,
        sup_slope_approx: approx,
    })
}

/// `(1 - L) / (2 (1 + L))`: valid on all of R, equal to 1/2 at L = 0.
pub fn descent_constant(lipschitz_t: f64) -> f64 {
    (1.0 - lipschitz_t) / (2.0 * (1.0 + lipschitz_t))
}

/// Check `V(T(x)) - V(x) <= -c |T(x) - x|^2` at each probe, with
/// `V(x) = (x - x*)^2 / 2`.
pub fn verify_descent<R: Real>(
    cert: &ContractionCertificate,
    act: &Activation<R>,
    probes: &[f64],
) -> Result<DescentReport> {
    let x_star = cert
        .x_star
        .ok_or_else(|| Error::Argument("certificate is not a contraction".into()))?;
    let c = cert.descent_constant;
    let v = |x: f64| 0.5 * (x - x_star) * (x - x_star);
    let mut worst = f64::INFINITY;
    let mut violations = Vec::new();
    for &x in probes {
        let tx = t_map(act, cert.a, cert.b, x);
        let lhs = v(tx) - v(x);
        let rhs = -c * (tx - x) * (tx - x);
        worst = worst.min(rhs - lhs);
        if lhs > rhs + 1e-12 {
            violations.push(DescentViolation { x, lhs, rhs });
        }
    }
    Ok(DescentReport {
        probes: probes.len(),
        worst_slack: worst,
        passed: violations.is_empty(),
        violations,
    })
}

/// Cumulative primitive `F(y) = int_0^y phi` at each requested point, batched
/// so the adaptive quadrature only covers each gap between sorted points once.
fn primitive_values<R: Real>(act: &Activation<R>, points: &[f64]) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| points[i].partial_cmp(&points[j]).unwrap());
    let mut out = vec![0.0f64; points.len()];
    let f = |y: R| act.value(y);
    // Walk outward from 0 in both directions, accumulating panel integrals.
    let mut acc = 0.0f64;
    let mut prev = 0.0f64;
    for &i in order.iter().filter(|&&i| points[i] >= 0.0) {
        acc += integrate_interval(&f, R::c(prev), R::c(points[i]), R::c(1e-12)).map(|v| v.as_f64())?;
        prev = points[i];
        out[i] = acc;
    }
    acc = 0.0;
    prev = 0.0;
    for &i in order.iter().rev().filter(|&&i| points[i] < 0.0) {
        acc += integrate_interval(&f, R::c(prev), R::c(points[i]), R::c(1e-12)).map(|v| v.as_f64())?;
        prev = points[i];
        out[i] = acc;
    }
    Ok(out)
}

/// Verify the primitive-based descent for `T(x) = phi(a x)` with
/// `V(x) = (lambda/2) x^2 - F(a x)`, `F(y) = int_0^y phi`:
/// `V(T(x)) - V(x) <= -(lambda - a^2 L)/2 * |T(x) - x|^2`.
///
/// Requires phi nondecreasing with phi(0) = 0 and finite `L = sup phi'`,
/// `a >= 0`, and `lambda > a^2 L`.
pub fn f_lyapunov_descent<R: Real>(
    act: &Activation<R>,
    a: f64,
    lambda: f64,
    probes: &[f64],
) -> Result<DescentReport> {
    if !(a >= 0.0) {
        return Err(Error::Argument(format!("a must be nonnegative, got {a}")));
    }
    let phi0 = act.value(R::zero()).as_f64();
    if phi0.abs() > 1e-12 {
        return Err(Error::Argument(format!(
            "{}: phi(0) = {phi0} != 0, so the origin is not a fixed point",
            act.name
        )));
    }
    if act.alpha_plus.as_f64() < 0.0
        || act.alpha_minus.as_f64() < 0.0
        || act.kinks.iter().any(|&(_, j)| j.as_f64() < -1e-12)
    {
        return Err(Error::Argument(format!("{}: phi must be nondecreasing", act.name)));
    }
    // Spot-check monotonicity on a coarse grid; metadata cannot express it.
    for i in 0..=200 {
        let x = -20.0 + 0.2 * i as f64;
        if act.deriv(R::c(x)).as_f64() < -1e-10 {
            return Err(Error::Argument(format!(
                "{}: phi' < 0 at x = {x}, phi must be nondecreasing",
                act.name
            )));
        }
    }
    let (l, _) = sup_slope(act);
    if !l.is_finite() {
        return Err(Error::Domain(format!("{}: slope is unbounded", act.name)));
    }
    if !(lambda > a * a * l) {
        return Err(Error::Argument(format!(
            "need lambda > a^2 L = {}, got lambda = {lambda}",
            a * a * l
        )));
    }

    let txs: Vec<f64> = probes.iter().map(|&x| t_map(act, a, 0.0, x)).collect();
    // F is needed at a*x and a*T(x) for every probe.
    let mut ys: Vec<f64> = Vec::with_capacity(2 * probes.len());
    ys.extend(probes.iter().map(|&x| a * x));
    ys.extend(txs.iter().map(|&tx| a * tx));
    let fs = primitive_values(act, &ys)?;

    let c = 0.5 * (lambda - a * a * l);
    let v = |x: f64, f_ax: f64| 0.5 * lambda * x * x - f_ax;
    let mut worst = f64::INFINITY;
    let mut violations = Vec::new();
    for (i, &x) in probes.iter().enumerate() {
        let tx = txs[i];
        let lhs = v(tx, fs[probes.len() + i]) - v(x, fs[i]);
        let rhs = -c * (tx - x) * (tx - x);
        worst = worst.min(rhs - lhs);
        if lhs > rhs + 1e-10 {
            violations.push(DescentViolation { x, lhs, rhs });
        }
    }
    Ok(DescentReport {
        probes: probes.len(),
        worst_slack: worst,
        passed: violations.is_empty(),
        violations,
    })
}

/// The first `k` iterates of `T` from `x0` (not including `x0`).
pub fn iterate_map<R: Real>(act: &Activation<R>, a: f64, b: f64, x0: f64, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k);
    let mut x = x0;
    for _ in 0..k {
        x = t_map(act, a, b, x);
        out.push(x);
    }
    out
}

#[derive(Clone, Copy)]
struct PairAcc {
    n: usize,
    sum: f64,
    sumsq: f64,
}

/// Monte-Carlo check of the L2 contraction property on jointly Gaussian
/// pairs: for `X, Y ~ N(0, sigma^2)` with correlation `rho`,
/// `E[(phi(X) - phi(Y))^2]^{1/2} <= g2(sigma) E[(X - Y)^2]^{1/2}`.
/// The pair distance `h` fixes `rho = 1 - h^2 / (2 sigma^2)`.
pub fn l2_contraction_check<R: Real>(
    act: &Activation<R>,
    a: f64,
    sigma: f64,
    samples: usize,
    seed: u64,
    rule: &QuadratureRule<R>,
) -> Result<L2ContractionReport> {
    if !(sigma > 0.0) {
        return Err(Error::Argument(format!("sigma must be positive, got {sigma}")));
    }
    if samples < 1000 {
        return Err(Error::Argument(format!("samples must be >= 1000, got {samples}")));
    }
    let law = GaussianLaw::centered(R::c(sigma))?;
    let e = Expectations::new(act, law, rule)?;
    let g2 = e
        .expect(|z| {
            let d = act.deriv(z);
            d * d
        })?
        .max(R::zero())
        .sqrt()
        .as_f64();

    let mut checks = Vec::new();
    for (k, &h) in [0.1, 0.01, 0.001].iter().enumerate() {
        let rho = 1.0 - h * h / (2.0 * sigma * sigma);
        let tail = (1.0 - rho * rho).sqrt();
        let acc = chunked_reduce(
            seed.wrapping_add(k as u64),
            samples,
            |rng, take| {
                let mut acc = PairAcc { n: 0, sum: 0.0, sumsq: 0.0 };
                for _ in 0..take {
                    let z1 = standard_normal(rng);
                    let z2 = standard_normal(rng);
                    let x = sigma * z1;
                    let y = sigma * (rho * z1 + tail * z2);
                    let d = (act.value(R::c(x)) - act.value(R::c(y))).as_f64();
                    let sq = d * d;
                    acc.n += 1;
                    acc.sum += sq;
                    acc.sumsq += sq * sq;
                }
                acc
            },
            |mut l, r| {
                l.n += r.n;
                l.sum += r.sum;
                l.sumsq += r.sumsq;
                l
            },
        )
        .expect("samples >= 1000");
        let n = acc.n as f64;
        let mean = acc.sum / n;
        let var = ((acc.sumsq - n * mean * mean) / (n - 1.0)).max(0.0);
        let mean_se = (var / n).sqrt();
        let ratio = mean.max(0.0).sqrt() / h;
        // Delta method through sqrt(mean)/h.
        let ratio_se = if mean > 0.0 { mean_se / (2.0 * mean.sqrt() * h) } else { 0.0 };
        checks.push(L2Check {
            h,
            rho,
            ratio,
            std_error: ratio_se,
            holds: ratio <= g2 + 3.0 * ratio_se + 1e-12,
        });
    }
    let passed = checks.iter().all(|c| c.holds);
    Ok(L2ContractionReport {
        sigma,
        a,
        g2,
        gain: a.abs() * g2,
        contraction: a.abs() * g2 < 1.0,
        checks,
        passed,
    })
}
