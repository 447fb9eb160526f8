//! Mean-field variance recursion `q_{l+1} = sigma_W^2 m2(sqrt(q_l)) + sigma_b^2`,
//! fixed-point and criticality analysis, and bias-drift certification.

use rayon::prelude::*;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::quadrature::{GaussianLaw, QuadratureRule};
use crate::scalar::Real;
use crate::signature::Expectations;
use crate::tails;

/// Iteration escape threshold: the recursion is declared divergent past this.
const Q_ESCAPE: f64 = 1e12;
/// Variance floor used when evaluating derivatives at `q* -> 0`.
const Q_FLOOR: f64 = 1e-12;

/// Result of iterating the variance map to a fixed point.
#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub sigma_w: f64,
    pub sigma_b: f64,
    pub q_star: f64,
    /// `f'(q*) = sigma_W^2 m2'(sqrt(q*)) / (2 sqrt(q*))`.
    pub f_prime: f64,
    pub variance_stable: bool,
    /// `sigma_W g2(sqrt(q*)) < 1`.
    pub perturbation_stable: bool,
    pub iterations: usize,
    /// The actual iterate sequence starting at `q0`.
    pub trajectory: Vec<f64>,
    pub converged: bool,
}

/// Stability verdicts over a rectangle of `(sigma_W, sigma_b)` values.
#[derive(Debug, Clone)]
pub struct CriticalityGrid {
    pub sigma_w_axis: Vec<f64>,
    pub sigma_b_axis: Vec<f64>,
    /// Row-major: `cells[i][j]` pairs `sigma_w_axis[i]` with `sigma_b_axis[j]`.
    pub cells: Vec<Vec<CriticalityCell>>,
}

#[derive(Debug, Clone)]
pub struct CriticalityCell {
    pub sigma_w: f64,
    pub sigma_b: f64,
    pub q_star: f64,
    pub f_prime: f64,
    pub variance_stable: bool,
    pub perturbation_stable: bool,
    pub converged: bool,
    /// True when either verdict flips against a grid neighbor.
    pub boundary: bool,
}

/// Bias drift certificate at one scale.
#[derive(Debug, Clone, Copy)]
pub struct BiasDriftReport {
    pub sigma: f64,
    /// `|m1(sigma) - (alpha_+ - alpha_-) sigma / sqrt(2 pi)|`.
    pub lhs: f64,
    /// `sqrt(2/pi) C(phi) / sigma`; infinite when `C(phi)` is.
    pub rhs: f64,
    pub holds: bool,
}

/// Expectation evaluator with the verification rule built once, so the
/// per-iteration cost of the recursion stays at two rule sweeps.
struct Engine<'a, R: Real> {
    act: &'a Activation<R>,
    rule: &'a QuadratureRule<R>,
    verify: QuadratureRule<R>,
}

impl<'a, R: Real> Engine<'a, R> {
    fn new(act: &'a Activation<R>, rule: &'a QuadratureRule<R>) -> Result<Self> {
        let verify = crate::quadrature::build_rule(rule.order + 32)?;
        Ok(Self { act, rule, verify })
    }

    fn expect<F: Fn(R) -> R>(&self, sigma: f64, f: F) -> Result<f64> {
        let law = GaussianLaw::centered(R::c(sigma))?;
        let e = Expectations::with_verify(self.act, law, self.rule, self.verify.clone());
        Ok(e.expect(f)?.as_f64())
    }

    fn m2(&self, q: f64) -> Result<f64> {
        if q <= 0.0 {
            let v = self.act.value(R::zero()).as_f64();
            return Ok(v * v);
        }
        let act = self.act;
        self.expect(q.sqrt(), |z| {
            let v = act.value(z);
            v * v
        })
    }

    fn variance_map(&self, q: f64, sigma_w: f64, sigma_b: f64) -> Result<f64> {
        Ok(sigma_w * sigma_w * self.m2(q)? + sigma_b * sigma_b)
    }

    fn f_prime(&self, q: f64, sigma_w: f64) -> Result<f64> {
        let s = q.max(Q_FLOOR).sqrt();
        // m2'(s) = E[2 phi phi' Z] / s with Z ~ N(0, s^2).
        let act = self.act;
        let two = R::c(2.0);
        let m2p = self.expect(s, |z| two * act.value(z) * act.deriv(z) * z)? / s;
        Ok(sigma_w * sigma_w * m2p / (2.0 * s))
    }

    fn g2(&self, q: f64) -> Result<f64> {
        let s = q.max(Q_FLOOR).sqrt();
        let act = self.act;
        let g2sq = self.expect(s, |z| {
            let d = act.deriv(z);
            d * d
        })?;
        Ok(g2sq.max(0.0).sqrt())
    }
}

/// One application of the variance map `f(q) = sigma_W^2 m2(sqrt(q)) + sigma_b^2`.
pub fn variance_map<R: Real>(
    act: &Activation<R>,
    q: f64,
    sigma_w: f64,
    sigma_b: f64,
    rule: &QuadratureRule<R>,
) -> Result<f64> {
    if q < 0.0 {
        return Err(Error::Argument(format!("q must be nonnegative, got {q}")));
    }
    if !(sigma_w > 0.0) {
        return Err(Error::Argument(format!("sigma_w must be positive, got {sigma_w}")));
    }
    Engine::new(act, rule)?.variance_map(q, sigma_w, sigma_b)
}

/// Iterate the variance map from `q0` until the relative step drops below
/// `tol` or `max_iters` is exhausted. Detects escape to infinity and plain
/// 2-cycles (with a bisection fallback for the latter).
pub fn solve_fixed_point<R: Real>(
    act: &Activation<R>,
    sigma_w: f64,
    sigma_b: f64,
    q0: f64,
    max_iters: usize,
    tol: f64,
    rule: &QuadratureRule<R>,
) -> Result<FixedPointReport> {
    if q0 < 0.0 || !(tol > 0.0) {
        return Err(Error::Argument(format!("need q0 >= 0 and tol > 0, got {q0}, {tol}")));
    }
    if !(sigma_w > 0.0) {
        return Err(Error::Argument(format!("sigma_w must be positive, got {sigma_w}")));
    }
    let engine = Engine::new(act, rule)?;
    let f = |q: f64| engine.variance_map(q, sigma_w, sigma_b);
    let mut trajectory = vec![q0];
    let mut q = q0;
    let mut converged = false;
    let mut cycling = false;
    for _ in 0..max_iters {
        let next = f(q)?;
        trajectory.push(next);
        if next > Q_ESCAPE {
            return report(&engine, sigma_w, sigma_b, next, trajectory, false);
        }
        if (next - q).abs() <= tol * q.abs().max(1.0) {
            q = next;
            converged = true;
            break;
        }
        let n = trajectory.len();
        if n >= 3 {
            let back2 = trajectory[n - 3];
            if (next - back2).abs() <= tol * next.abs().max(1.0)
                && (next - q).abs() > 10.0 * tol * next.abs().max(1.0)
            {
                cycling = true;
                q = next;
                break;
            }
        }
        q = next;
    }
    if cycling {
        let n = trajectory.len();
        let (mut lo, mut hi) = if trajectory[n - 2] < trajectory[n - 1] {
            (trajectory[n - 2], trajectory[n - 1])
        } else {
            (trajectory[n - 1], trajectory[n - 2])
        };
        let g = |q: f64| -> Result<f64> { Ok(f(q)? - q) };
        let (glo, ghi) = (g(lo)?, g(hi)?);
        if glo * ghi <= 0.0 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid)? * g(lo)? <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            q = 0.5 * (lo + hi);
            trajectory.push(q);
            converged = (f(q)? - q).abs() <= tol * q.abs().max(1.0);
        }
    }
    report(&engine, sigma_w, sigma_b, q, trajectory, converged)
}

fn report<R: Real>(
    engine: &Engine<'_, R>,
    sigma_w: f64,
    sigma_b: f64,
    q_star: f64,
    trajectory: Vec<f64>,
    converged: bool,
) -> Result<FixedPointReport> {
    let (f_prime, perturbation) = if converged {
        let fp = engine.f_prime(q_star, sigma_w)?;
        let g2 = engine.g2(q_star)?;
        (fp, sigma_w * g2 < 1.0)
    } else {
        (f64::NAN, false)
    };
    Ok(FixedPointReport {
        sigma_w,
        sigma_b,
        q_star,
        f_prime,
        variance_stable: converged && f_prime.abs() < 1.0,
        perturbation_stable: perturbation,
        iterations: trajectory.len() - 1,
        trajectory,
        converged,
    })
}

/// Evenly spaced inclusive axis `start:end:count`.
pub fn linear_axis(start: f64, end: f64, count: usize) -> Result<Vec<f64>> {
    if count < 1 || (count == 1 && start != end) {
        return Err(Error::Argument(format!(
            "axis {start}:{end}:{count} needs count >= 2 (or equal endpoints)"
        )));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (end - start) / (count - 1) as f64;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

/// Solve the fixed point on every `(sigma_w, sigma_b)` grid cell and tag the
/// stability boundaries. Cell divergence is recorded, not fatal.
pub fn criticality_scan<R: Real>(
    act: &Activation<R>,
    sigma_w_axis: Vec<f64>,
    sigma_b_axis: Vec<f64>,
    q0: f64,
    rule: &QuadratureRule<R>,
) -> Result<CriticalityGrid> {
    if sigma_w_axis.is_empty() || sigma_b_axis.is_empty() {
        return Err(Error::Argument("criticality axes must be non-empty".into()));
    }
    let mut cells: Vec<Vec<CriticalityCell>> = sigma_w_axis
        .par_iter()
        .map(|&sw| {
            sigma_b_axis
                .iter()
                .map(|&sb| {
                    let r = solve_fixed_point(act, sw, sb, q0, 50_000, 1e-10, rule)?;
                    Ok(CriticalityCell {
                        sigma_w: sw,
                        sigma_b: sb,
                        q_star: r.q_star,
                        f_prime: r.f_prime,
                        variance_stable: r.variance_stable,
                        perturbation_stable: r.perturbation_stable,
                        converged: r.converged,
                        boundary: false,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = cells.len();
    let cols = cells[0].len();
    for i in 0..rows {
        for j in 0..cols {
            let me = (cells[i][j].variance_stable, cells[i][j].perturbation_stable);
            let mut boundary = false;
            if i + 1 < rows {
                let down = (cells[i + 1][j].variance_stable, cells[i + 1][j].perturbation_stable);
                boundary |= down != me;
            }
            if j + 1 < cols {
                let right = (cells[i][j + 1].variance_stable, cells[i][j + 1].perturbation_stable);
                boundary |= right != me;
            }
            cells[i][j].boundary = boundary;
        }
    }
    Ok(CriticalityGrid { sigma_w_axis, sigma_b_axis, cells })
}

/// Certify `|m1(sigma) - (alpha_+ - alpha_-) sigma / sqrt(2 pi)| <=
/// sqrt(2/pi) C(phi) / sigma`. Infinite `C(phi)` makes the bound vacuous.
pub fn bias_drift_check<R: Real>(
    act: &Activation<R>,
    sigma: f64,
    rule: &QuadratureRule<R>,
) -> Result<BiasDriftReport> {
    if !act.has_finite_slopes() {
        return Err(Error::Domain(format!(
            "{}: bias drift bound needs finite asymptotic slopes",
            act.name
        )));
    }
    let m1 = Engine::new(act, rule)?.expect(sigma, |z| act.value(z))?;
    let gap = act.alpha_plus.as_f64() - act.alpha_minus.as_f64();
    let lhs = (m1 - gap * sigma / (2.0 * std::f64::consts::PI).sqrt()).abs();
    let c_phi = tails::compensated_primitive(act, 1e-10)?.c_phi;
    let rhs = (2.0 / std::f64::consts::PI).sqrt() * c_phi / sigma;
    Ok(BiasDriftReport { sigma, lhs, rhs, holds: lhs <= rhs + 1e-9 })
}

/// `int_0^infty |phi(x) + phi(-x)| dx`; infinite when the integral does not
/// settle (any activation with `alpha_+ + alpha_- != 0`).
pub fn crude_bias_bound<R: Real>(act: &Activation<R>) -> Result<f64> {
    let f = |x: f64| (act.value(R::c(x)) + act.value(R::c(-x))).as_f64().abs();
    match crate::quadrature::integrate_tail(&f, 0.0f64, 1e-10) {
        Ok(v) => Ok(v),
        Err(Error::Convergence { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::builtin;
    use crate::quadrature::{build_rule, DEFAULT_ORDER};

    fn rule() -> QuadratureRule<f64> {
        build_rule(DEFAULT_ORDER).unwrap()
    }

    #[test]
    fn relu_variance_map_closed_form() {
        let act = builtin::<f64>("relu").unwrap();
        let r = rule();
        let v = variance_map(&act, 1.0, 1.0, 0.0, &r).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        let v = variance_map(&act, 1.0, std::f64::consts::SQRT_2, 0.0, &r).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tanh_variance_map_matches_oracle() {
        let act = builtin::<f64>("tanh").unwrap();
        let r = rule();
        let v = variance_map(&act, 1.0, 1.0, 0.0, &r).unwrap();
        assert!((v - 0.394294490).abs() < 1e-8, "got {v}");
    }

    #[test]
    fn relu_fixed_point_closed_form() {
        let act = builtin::<f64>("relu").unwrap();
        let r = rule();
        let rep = solve_fixed_point(&act, 1.0, 0.5, 1.0, 10_000, 1e-12, &r).unwrap();
        assert!(rep.converged);
        assert!((rep.q_star - 0.5).abs() < 1e-9, "q* {}", rep.q_star);
        assert!((rep.f_prime - 0.5).abs() < 1e-9);
        assert!(rep.variance_stable);
        assert_eq!(rep.trajectory.len(), rep.iterations + 1);
    }

    #[test]
    fn relu_marginal_line_is_fixed_everywhere() {
        let act = builtin::<f64>("relu").unwrap();
        let r = rule();
        let rep = solve_fixed_point(&act, std::f64::consts::SQRT_2, 0.0, 1.0, 1000, 1e-10, &r)
            .unwrap();
        assert!(rep.converged);
        assert!((rep.q_star - 1.0).abs() < 1e-9);
        assert!((rep.f_prime - 1.0).abs() < 1e-9, "marginal slope {}", rep.f_prime);
    }

    #[test]
    fn tanh_fixed_point_residual_and_derivative() {
        let act = builtin::<f64>("tanh").unwrap();
        let r = rule();
        let rep = solve_fixed_point(&act, 1.5, 0.1, 1.0, 10_000, 1e-12, &r).unwrap();
        assert!(rep.converged);
        let f_q = variance_map(&act, rep.q_star, 1.5, 0.1, &r).unwrap();
        assert!((f_q - rep.q_star).abs() <= 1e-10 * rep.q_star.max(1.0));
        // Central difference oracle on f.
        let h = 1e-5;
        let fd = (variance_map(&act, rep.q_star + h, 1.5, 0.1, &r).unwrap()
            - variance_map(&act, rep.q_star - h, 1.5, 0.1, &r).unwrap())
            / (2.0 * h);
        assert!(
            (rep.f_prime - fd).abs() < 1e-5 * fd.abs().max(1.0),
            "f' {} vs fd {fd}",
            rep.f_prime
        );
    }

    #[test]
    fn relu_trajectory_contracts_geometrically() {
        let act = builtin::<f64>("relu").unwrap();
        let r = rule();
        let sw = 1.2f64;
        let rep = solve_fixed_point(&act, sw, 0.3, 2.0, 100, 1e-14, &r).unwrap();
        let q_star = rep.q_star;
        let errs: Vec<f64> =
            rep.trajectory.iter().map(|q| (q - q_star).abs()).take(22).collect();
        for w in errs.windows(2).take(20) {
            assert!(w[1] <= w[0] + 1e-15, "not monotone");
        }
        let ratio = errs[20] / errs[19];
        assert!((ratio - sw * sw / 2.0).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn divergent_recursion_is_reported() {
        let act = builtin::<f64>("relu").unwrap();
        let r = rule();
        let rep = solve_fixed_point(&act, 2.0, 0.0, 1.0, 10_000, 1e-10, &r).unwrap();
        assert!(!rep.converged);
        assert!(*rep.trajectory.last().unwrap() > Q_ESCAPE);
    }

    #[test]
    fn relu_criticality_flip_brackets_sqrt_two() {
        let act = builtin::<f64>("relu").unwrap();
        let r = rule();
        let grid = criticality_scan(
            &act,
            linear_axis(1.0, 2.0, 41).unwrap(),
            vec![0.1],
            1.0,
            &r,
        )
        .unwrap();
        let flips: Vec<usize> = (0..40)
            .filter(|&i| {
                grid.cells[i][0].variance_stable != grid.cells[i + 1][0].variance_stable
            })
            .collect();
        assert_eq!(flips.len(), 1, "expected exactly one flip");
        let i = flips[0];
        let (lo, hi) = (grid.sigma_w_axis[i], grid.sigma_w_axis[i + 1]);
        assert!(lo < std::f64::consts::SQRT_2 && std::f64::consts::SQRT_2 < hi);
        assert!(grid.cells[i][0].boundary);
    }

    #[test]
    fn identity_criticality_flip_at_one() {
        let act = builtin::<f64>("identity").unwrap();
        let r = rule();
        let grid = criticality_scan(
            &act,
            linear_axis(0.5, 1.5, 21).unwrap(),
            vec![0.1],
            1.0,
            &r,
        )
        .unwrap();
        for (i, &sw) in grid.sigma_w_axis.iter().enumerate() {
            let stable = grid.cells[i][0].variance_stable;
            assert_eq!(stable, sw < 1.0, "sigma_w {sw}");
        }
    }

    #[test]
    fn tanh_grid_always_converges() {
        let act = builtin::<f64>("tanh").unwrap();
        let r = rule();
        let grid = criticality_scan(
            &act,
            linear_axis(0.5, 3.0, 8).unwrap(),
            linear_axis(0.0, 0.5, 4).unwrap(),
            1.0,
            &r,
        )
        .unwrap();
        for row in &grid.cells {
            for cell in row {
                assert!(cell.converged, "sw {} sb {}", cell.sigma_w, cell.sigma_b);
            }
        }
    }

    #[test]
    fn bias_drift_examples() {
        let r = rule();
        let relu = builtin::<f64>("relu").unwrap();
        let b = bias_drift_check(&relu, 1.0, &r).unwrap();
        assert!(b.lhs < 1e-12 && b.rhs == 0.0 && b.holds, "{b:?}");

        let swish = builtin::<f64>("swish").unwrap();
        let b = bias_drift_check(&swish, 1.0, &r).unwrap();
        // lhs = |0.206621 - 0.398942|, rhs = sqrt(2/pi) pi^2/12.
        assert!((b.lhs - 0.192321316).abs() < 1e-8, "{b:?}");
        assert!((b.rhs - 0.656233283).abs() < 1e-6, "{b:?}");
        assert!(b.holds);
    }

    #[test]
    fn bias_drift_holds_for_finite_c_builtins() {
        let r = rule();
        for name in ["relu", "leaky_relu(0.2)", "swish", "gelu", "mish", "telu"] {
            let act = builtin::<f64>(name).unwrap();
            for sigma in [0.5, 1.0, 2.0] {
                let b = bias_drift_check(&act, sigma, &r).unwrap();
                assert!(b.holds, "{name} sigma {sigma}: {b:?}");
            }
        }
    }

    #[test]
    fn crude_bound_examples() {
        let tanh = builtin::<f64>("tanh").unwrap();
        assert!(crude_bias_bound(&tanh).unwrap().abs() < 1e-10);
        let relu = builtin::<f64>("relu").unwrap();
        assert!(crude_bias_bound(&relu).unwrap().is_infinite());
        // Any activation with alpha_+ + alpha_- != 0 has a linearly growing
        // even part, so the crude bound degenerates for swish as well.
        let swish = builtin::<f64>("swish").unwrap();
        assert!(crude_bias_bound(&swish).unwrap().is_infinite());
    }
}
