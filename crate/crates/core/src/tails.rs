//! Tail and regularity analysis: residual functions after subtracting the
//! linear asymptotes, the tail-compensated primitive and its supremum, slope
//! total variation, and Gaussian moment bounds for polynomially growing
//! slopes.
//!
//! All numeric work here is done in f64 regardless of the activation's
//! scalar type; these quantities feed certificates and must not lose
//! precision to narrow arithmetic.

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_interval, integrate_line, tail_windows};
use crate::scalar::Real;

/// Outcome of expanding the residual integral over doubling windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailVerdict {
    /// The last window's residual mass fell below tolerance.
    Converged,
    /// The residual mass failed to decay (or the primitive blew up).
    Diverged,
    /// The window cap was reached without a clear verdict.
    Capped,
}

/// Sampled residual `D(t)` and its cumulative integral `F_asym(t)` on an
/// expanding grid, one entry per grid point, sorted by `t`.
#[derive(Debug, Clone)]
pub struct ResidualProfile {
    pub name: String,
    pub grid: Vec<f64>,
    pub d_values: Vec<f64>,
    pub f_asym_values: Vec<f64>,
    /// Final half-width reached by the window expansion.
    pub window: f64,
    pub verdict: TailVerdict,
}

/// `sup |F_asym|` together with where it was attained.
#[derive(Debug, Clone, Copy)]
pub struct CompensatedPrimitive {
    /// The supremum; `f64::INFINITY` when the expansion diverged.
    pub c_phi: f64,
    pub argmax: f64,
    /// True when the supremum sits on the truncation boundary, i.e. the
    /// reported location is a limit value rather than an interior maximum.
    pub at_boundary: bool,
    pub verdict: TailVerdict,
}

const SUP_BLOWUP: f64 = 1e6;
const GRID_PER_WINDOW: usize = 2048;

struct SideScan {
    grid: Vec<f64>,
    d_values: Vec<f64>,
    f_values: Vec<f64>,
    sup: f64,
    argmax: f64,
    at_boundary: bool,
    window: f64,
    verdict: TailVerdict,
}

/// Scan one half-line. `sign` is +1 for `t >= 0` and -1 for `t <= 0`;
/// `F_asym(sign * u) = sign * \int_0^u D(sign * v) dv`.
fn scan_side<R: Real>(act: &Activation<R>, sign: f64, abs_tol: f64) -> Result<SideScan> {
    let alpha = if sign > 0.0 { act.alpha_plus } else { act.alpha_minus };
    let alpha = alpha.as_f64();
    let h = |u: f64| {
        let t = sign * u;
        act.value(R::c(t)).as_f64() - alpha * t
    };

    let mut grid = vec![0.0f64];
    let mut d_values = vec![h(0.0)];
    let mut f_values = vec![0.0f64];
    let mut cum = 0.0f64;
    let mut sup = 0.0f64;
    let mut argmax = 0.0f64;
    let mut at_boundary = true;
    let mut prev_mass: Option<f64> = None;
    let mut growth_streak = 0usize;
    let mut verdict = TailVerdict::Capped;
    let mut window_end = 0.0f64;

    'windows: for (lo, hi) in tail_windows(0.0) {
        window_end = hi;
        let mut mass = 0.0f64;
        let step = (hi - lo) / GRID_PER_WINDOW as f64;
        for k in 0..GRID_PER_WINDOW {
            let a = lo + step * k as f64;
            let b = a + step;
            let inc = integrate_interval(&h, a, b, abs_tol * 1e-3)?;
            cum += inc;
            mass += inc.abs();
            grid.push(sign * b);
            d_values.push(h(b));
            f_values.push(sign * cum);
            if cum.abs() > sup {
                sup = cum.abs();
                argmax = sign * b;
                at_boundary = false;
            }
            if sup > SUP_BLOWUP {
                verdict = TailVerdict::Diverged;
                break 'windows;
            }
        }
        // A residual whose windowed mass does not keep halving while the
        // window width doubles is not integrable at the cap scale.
        if let Some(prev) = prev_mass {
            if mass > 0.5 * prev {
                growth_streak += 1;
            } else {
                growth_streak = 0;
            }
            if growth_streak >= 3 {
                verdict = TailVerdict::Diverged;
                break;
            }
        }
        prev_mass = Some(mass);
        if mass < abs_tol * 0.1 {
            verdict = TailVerdict::Converged;
            break;
        }
    }
    // The supremum may be approached monotonically; report the boundary.
    if sup > abs_tol && (sup - cum.abs()).abs() <= abs_tol {
        at_boundary = true;
        argmax = sign * window_end;
    }
    Ok(SideScan { grid, d_values, f_values, sup, argmax, at_boundary, window: window_end, verdict })
}

fn require_finite_slopes<R: Real>(act: &Activation<R>) -> Result<()> {
    if !act.has_finite_slopes() {
        return Err(Error::Domain(format!(
            "{}: compensated primitive undefined for infinite asymptotic slopes",
            act.name
        )));
    }
    Ok(())
}

/// Sample `D(t) = phi(t) - alpha_+ t 1(t>=0) - alpha_- t 1(t<0)` and its
/// cumulative integral over windows doubling from 4 up to 200.
pub fn residual_profile<R: Real>(act: &Activation<R>, abs_tol: f64) -> Result<ResidualProfile> {
    require_finite_slopes(act)?;
    let pos = scan_side(act, 1.0, abs_tol)?;
    let neg = scan_side(act, -1.0, abs_tol)?;

    let verdict = match (pos.verdict, neg.verdict) {
        (TailVerdict::Diverged, _) | (_, TailVerdict::Diverged) => TailVerdict::Diverged,
        (TailVerdict::Capped, _) | (_, TailVerdict::Capped) => TailVerdict::Capped,
        _ => TailVerdict::Converged,
    };

    let mut grid = Vec::with_capacity(pos.grid.len() + neg.grid.len());
    let mut d_values = Vec::with_capacity(grid.capacity());
    let mut f_asym_values = Vec::with_capacity(grid.capacity());
    for i in (1..neg.grid.len()).rev() {
        grid.push(neg.grid[i]);
        d_values.push(neg.d_values[i]);
        f_asym_values.push(neg.f_values[i]);
    }
    grid.extend(&pos.grid);
    d_values.extend(&pos.d_values);
    f_asym_values.extend(&pos.f_values);

    Ok(ResidualProfile {
        name: act.name.clone(),
        grid,
        d_values,
        f_asym_values,
        window: pos.window.max(neg.window),
        verdict,
    })
}

/// `C(phi) = sup_x |F_asym(x)|` with the attaining location.
pub fn compensated_primitive<R: Real>(
    act: &Activation<R>,
    abs_tol: f64,
) -> Result<CompensatedPrimitive> {
    require_finite_slopes(act)?;
    let pos = scan_side(act, 1.0, abs_tol)?;
    let neg = scan_side(act, -1.0, abs_tol)?;
    if pos.verdict == TailVerdict::Diverged || neg.verdict == TailVerdict::Diverged {
        return Ok(CompensatedPrimitive {
            c_phi: f64::INFINITY,
            argmax: if pos.verdict == TailVerdict::Diverged { pos.window } else { -neg.window },
            at_boundary: true,
            verdict: TailVerdict::Diverged,
        });
    }
    let verdict = if pos.verdict == TailVerdict::Capped || neg.verdict == TailVerdict::Capped {
        TailVerdict::Capped
    } else {
        TailVerdict::Converged
    };
    let (side, other) = if pos.sup >= neg.sup { (&pos, &neg) } else { (&neg, &pos) };
    let _ = other;
    Ok(CompensatedPrimitive {
        c_phi: side.sup,
        argmax: side.argmax,
        at_boundary: side.at_boundary,
        verdict,
    })
}

/// Upper bound on `C(phi)` from the weighted slope error:
/// `int_0^inf t |phi'(t) - alpha_+| dt + int_{-inf}^0 |t| |phi'(t) - alpha_-| dt`.
pub fn weighted_slope_bound<R: Real>(act: &Activation<R>) -> Result<f64> {
    require_finite_slopes(act)?;
    let ap = act.alpha_plus.as_f64();
    let am = act.alpha_minus.as_f64();
    let pos = |u: f64| u * (act.deriv(R::c(u)).as_f64() - ap).abs();
    let neg = |u: f64| u * (act.deriv(R::c(-u)).as_f64() - am).abs();
    let tol = 1e-11;
    let a = crate::quadrature::integrate_tail(&pos, 0.0f64, tol).map_err(|e| e.in_component("weighted_slope_bound"))?;
    let b = crate::quadrature::integrate_tail(&neg, 0.0f64, tol).map_err(|e| e.in_component("weighted_slope_bound"))?;
    Ok(a + b)
}

/// Total variation of the slope: analytic value when recorded, otherwise the
/// integral of |phi''| over smooth pieces plus the kink jump magnitudes.
/// Returns infinity when the tail integral fails to settle.
pub fn tv_slope<R: Real>(act: &Activation<R>, abs_tol: f64) -> Result<f64> {
    if let Some(tv) = act.tv_analytic {
        return Ok(tv.as_f64());
    }
    if !act.has_second_deriv() {
        return Err(Error::Capability(format!(
            "{}: no second derivative or analytic slope variation available",
            act.name
        )));
    }
    let jumps: f64 = act.kinks.iter().map(|&(_, j)| j.as_f64().abs()).sum();
    let smooth = integrate_line(
        |x: f64| act.second_deriv(R::c(x)).map(|v| v.as_f64().abs()).unwrap_or(0.0),
        abs_tol,
    );
    match smooth {
        Ok(v) => Ok(v + jumps),
        Err(Error::Convergence { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Absolute moment `M_k = E|N(0,1)|^k = 2^{k/2} Gamma((k+1)/2) / sqrt(pi)`.
pub fn abs_normal_moment(k: f64) -> f64 {
    2.0f64.powf(k / 2.0) * libm::tgamma((k + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// Upper bounds on `(g2, g4)` assuming `|phi'(x)| <= A + B |x|^r`:
/// `g2 <= sqrt(2) (A^2 + B^2 sigma^{2r} M_{2r})^{1/2}` and
/// `g4 <= 2^{3/4} (A^4 + B^4 sigma^{4r} M_{4r})^{1/4}`.
pub fn slope_moment_upper_bounds(a: f64, b: f64, r: f64, sigma: f64) -> (f64, f64) {
    let m2r = abs_normal_moment(2.0 * r);
    let m4r = abs_normal_moment(4.0 * r);
    let g2 = std::f64::consts::SQRT_2
        * (a * a + b * b * sigma.powf(2.0 * r) * m2r).sqrt();
    let g4 = 2.0f64.powf(0.75)
        * (a.powi(4) + b.powi(4) * sigma.powf(4.0 * r) * m4r).powf(0.25);
    (g2, g4)
}
