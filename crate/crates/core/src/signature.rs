//! Assembly of the nine-dimensional integral signature plus the auxiliary
//! quantities `g4` and `m2'`.
//!
//! Gaussian expectations use the supplied Gauss–Hermite rule, verified
//! against a slightly larger rule; when the two disagree (kinked integrands,
//! or bounded activations at large scale where complex poles crowd the real
//! axis) the expectation falls back to kink-split adaptive quadrature in the
//! standardized variable, which is scale-robust.

use crate::activations::{Activation, AffineParams, Finiteness};
use crate::error::{Error, Result};
use crate::quadrature::{
    build_rule, gauss_expect, integrate_interval, integrate_tail, GaussianLaw, QuadratureRule,
};
use crate::scalar::Real;
use crate::tails;

pub use crate::tails::{
    compensated_primitive, residual_profile, slope_moment_upper_bounds, tv_slope,
    weighted_slope_bound, CompensatedPrimitive, ResidualProfile, TailVerdict,
};

/// The five Gaussian components plus the auxiliaries derived from them.
#[derive(Debug, Clone, Copy)]
pub struct GaussianComponents<R: Real> {
    pub m1: R,
    pub g1: R,
    pub g2: R,
    pub m2: R,
    pub eta: R,
    pub g4: R,
    pub m2_prime: R,
}

/// The nine-dimensional signature at scale `sigma`, with auxiliaries.
#[derive(Debug, Clone)]
pub struct Signature<R: Real> {
    pub name: String,
    pub sigma: R,
    pub order: usize,
    pub m1: R,
    pub g1: R,
    pub g2: R,
    pub m2: R,
    pub eta: R,
    pub alpha_plus: R,
    pub alpha_minus: R,
    /// Slope total variation; may be infinite.
    pub tv: R,
    /// Supremum of the tail-compensated primitive; may be infinite.
    pub c_phi: R,
    pub g4: R,
    pub m2_prime: R,
}

impl<R: Real> Signature<R> {
    /// The nine components in definition order.
    pub fn as_nine(&self) -> [R; 9] {
        [
            self.m1, self.g1, self.g2, self.m2, self.eta, self.alpha_plus, self.alpha_minus,
            self.tv, self.c_phi,
        ]
    }
}

/// Gaussian expectation engine shared by every component computation.
pub(crate) struct Expectations<'a, R: Real> {
    rule: &'a QuadratureRule<R>,
    verify: QuadratureRule<R>,
    law: GaussianLaw<R>,
    kinks: Vec<f64>,
}

impl<'a, R: Real> Expectations<'a, R> {
    pub fn new(
        act: &Activation<R>,
        law: GaussianLaw<R>,
        rule: &'a QuadratureRule<R>,
    ) -> Result<Self> {
        let verify = build_rule(rule.order + 32)?;
        Ok(Self::with_verify(act, law, rule, verify))
    }

    /// As [`Expectations::new`] with a caller-supplied verification rule, so
    /// hot loops (variance recursions) can amortize its construction.
    pub fn with_verify(
        act: &Activation<R>,
        law: GaussianLaw<R>,
        rule: &'a QuadratureRule<R>,
        verify: QuadratureRule<R>,
    ) -> Self {
        let mean = law.mean.as_f64();
        let std = law.std.as_f64();
        // Kink locations in the standardized variable.
        let mut kinks: Vec<f64> = act
            .kinks
            .iter()
            .map(|&(loc, _)| (loc.as_f64() - mean) / std)
            .filter(|u| u.abs() < 40.0)
            .collect();
        kinks.sort_by(|x, y| x.partial_cmp(y).unwrap());
        Self { rule, verify, law, kinks }
    }

    /// `E[f(Z)]` for `Z ~ law`. Uses the Hermite rule when self-consistent,
    /// otherwise adaptive quadrature split at the kinks.
    pub fn expect<F: Fn(R) -> R>(&self, f: F) -> Result<R> {
        if self.kinks.is_empty() {
            let v1 = gauss_expect(self.rule, self.law, &f)?;
            let v2 = gauss_expect(&self.verify, self.law, &f)?;
            let tol = R::c(1e-12) * v1.abs().max(R::one());
            if (v1 - v2).abs() <= tol {
                return Ok(v1);
            }
        }
        self.adaptive(&f)
    }

    fn adaptive<F: Fn(R) -> R>(&self, f: &F) -> Result<R> {
        let mean = self.law.mean.as_f64();
        let std = self.law.std.as_f64();
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let g = |u: f64| {
            let z = mean + std * u;
            f(R::c(z)).as_f64() * norm * (-0.5 * u * u).exp()
        };
        // Tolerance scaled to the integrand magnitude near the bulk.
        let scale = [0.0, 1.0, -1.0, 2.0, -2.0, 3.0, -3.0]
            .iter()
            .map(|&u| f(R::c(mean + std * u)).as_f64().abs())
            .fold(1.0f64, f64::max);
        let tol = 1e-13 * scale;

        let mut total = 0.0f64;
        if self.kinks.is_empty() {
            total += integrate_tail(&g, 0.0, tol)?;
            total += integrate_tail(&|u: f64| g(-u), 0.0, tol)?;
        } else {
            let lo = self.kinks[0];
            let hi = *self.kinks.last().unwrap();
            total += integrate_tail(&|u: f64| g(hi + u), 0.0, tol)?;
            total += integrate_tail(&|u: f64| g(lo - u), 0.0, tol)?;
            for w in self.kinks.windows(2) {
                total += integrate_interval(&g, w[0], w[1], tol)?;
            }
        }
        let v = R::c(total);
        if !v.is_finite() {
            return Err(Error::Evaluation { what: "adaptive expectation".into(), at: mean });
        }
        Ok(v)
    }
}

fn fourth_root<R: Real>(v: R) -> R {
    v.max(R::zero()).sqrt().sqrt()
}

/// Compute all Gaussian components of `act` under `Z ~ law`.
pub fn gaussian_components_law<R: Real>(
    act: &Activation<R>,
    law: GaussianLaw<R>,
    rule: &QuadratureRule<R>,
) -> Result<GaussianComponents<R>> {
    let e = Expectations::new(act, law, rule)?;
    let m1 = e.expect(|z| act.value(z))?;
    let g1 = e.expect(|z| act.deriv(z))?;
    let g2sq = e.expect(|z| {
        let d = act.deriv(z);
        d * d
    })?;
    let m2 = e.expect(|z| {
        let v = act.value(z);
        v * v
    })?;
    let eta = e.expect(|z| z * act.value(z))?;
    let g4q = e.expect(|z| {
        let d = act.deriv(z);
        d * d * d * d
    })?;
    // m2'(sigma) = E[2 phi(Z) phi'(Z) Z] / sigma by Gaussian integration by
    // parts; exact under quadrature, no finite-difference step size.
    let two = R::c(2.0);
    let m2p = e.expect(|z| two * act.value(z) * act.deriv(z) * z)? / law.std;
    Ok(GaussianComponents {
        m1,
        g1,
        g2: g2sq.max(R::zero()).sqrt(),
        m2,
        eta,
        g4: fourth_root(g4q),
        m2_prime: m2p,
    })
}

/// Components for centered input `Z ~ N(0, sigma^2)`.
pub fn gaussian_components<R: Real>(
    act: &Activation<R>,
    sigma: R,
    rule: &QuadratureRule<R>,
) -> Result<GaussianComponents<R>> {
    gaussian_components_law(act, GaussianLaw::centered(sigma)?, rule)
}

fn check_invariants<R: Real>(sig: &Signature<R>) -> Result<()> {
    let (m1, m2) = (sig.m1.as_f64(), sig.m2.as_f64());
    let (g1, g2, g4) = (sig.g1.as_f64(), sig.g2.as_f64(), sig.g4.as_f64());
    let (sigma, eta) = (sig.sigma.as_f64(), sig.eta.as_f64());
    let fail = |detail: String| {
        Err(Error::Invariant { component: format!("signature({})", sig.name), detail })
    };
    if m2 < m1 * m1 - 1e-10 {
        return fail(format!("m2 = {m2} below m1^2 = {}", m1 * m1));
    }
    if g2 < g1.abs() - 1e-10 {
        return fail(format!("g2 = {g2} below |g1| = {}", g1.abs()));
    }
    if g4 < g2 - 1e-10 {
        return fail(format!("g4 = {g4} below g2 = {g2}"));
    }
    let eta_gap = (eta - sigma * sigma * g1).abs();
    if eta_gap > 1e-8 * eta.abs().max(1.0) {
        return fail(format!("eta = {eta} vs sigma^2 g1 = {}", sigma * sigma * g1));
    }
    Ok(())
}

/// Tolerance used for the tail and variation integrals inside signatures.
const TAIL_TOL: f64 = 1e-10;

/// The full signature of `act` at scale `sigma` with an order-`order` rule.
pub fn full_signature<R: Real>(act: &Activation<R>, sigma: R, order: usize) -> Result<Signature<R>> {
    let rule = build_rule(order)?;
    signature_with_rule(act, sigma, &rule)
}

/// As [`full_signature`] but reusing a prebuilt rule.
pub fn signature_with_rule<R: Real>(
    act: &Activation<R>,
    sigma: R,
    rule: &QuadratureRule<R>,
) -> Result<Signature<R>> {
    if !(sigma > R::zero()) {
        return Err(Error::Argument(format!("sigma must be positive, got {sigma}")));
    }
    let comps = gaussian_components(act, sigma, rule)
        .map_err(|e| e.in_component("gaussian_components"))?;
    let tv = tails::tv_slope(act, TAIL_TOL).map_err(|e| e.in_component("tv_slope"))?;
    let c_phi = match act.c_phi_finite {
        Finiteness::Infinite => f64::INFINITY,
        _ if !act.has_finite_slopes() => f64::INFINITY,
        _ => {
            tails::compensated_primitive(act, TAIL_TOL)
                .map_err(|e| e.in_component("compensated_primitive"))?
                .c_phi
        }
    };
    let sig = Signature {
        name: act.name.clone(),
        sigma,
        order: rule.order,
        m1: comps.m1,
        g1: comps.g1,
        g2: comps.g2,
        m2: comps.m2,
        eta: comps.eta,
        alpha_plus: act.alpha_plus,
        alpha_minus: act.alpha_minus,
        tv: R::c(tv),
        c_phi: R::c(c_phi),
        g4: comps.g4,
        m2_prime: comps.m2_prime,
    };
    check_invariants(&sig)?;
    Ok(sig)
}

/// Signature of `c * phi(a x + b) + d` at scale `sigma`, computed from base
/// expectations under the shifted law `Y ~ N(b, (a sigma)^2)` via the
/// reparameterization closed formulas rather than by direct quadrature.
pub fn affine_signature_law<R: Real>(
    base: &Activation<R>,
    p: AffineParams<R>,
    sigma: R,
    rule: &QuadratureRule<R>,
) -> Result<Signature<R>> {
    if !(sigma > R::zero()) {
        return Err(Error::Argument(format!("sigma must be positive, got {sigma}")));
    }
    let AffineParams { a, b, c, d } = p;
    let law = GaussianLaw::new(b, a.abs() * sigma)?;
    let e = Expectations::new(base, law, rule)?;

    let ephi = e.expect(|y| base.value(y))?;
    let ephi2 = e.expect(|y| {
        let v = base.value(y);
        v * v
    })?;
    let edphi = e.expect(|y| base.deriv(y))?;
    let edphi2 = e.expect(|y| {
        let dv = base.deriv(y);
        dv * dv
    })?;
    let edphi4 = e.expect(|y| {
        let dv = base.deriv(y);
        dv * dv * dv * dv
    })?;
    let ephidphi = e.expect(|y| base.value(y) * base.deriv(y))?;
    let ephidphiy = e.expect(|y| base.value(y) * base.deriv(y) * y)?;
    let edphiy = e.expect(|y| base.deriv(y) * y)?;

    let ca = c * a;
    let g1 = ca * edphi;
    let m1 = c * ephi + d;
    let m2 = c * c * ephi2 + R::c(2.0) * c * d * ephi + d * d;
    let g2 = ca.abs() * edphi2.max(R::zero()).sqrt();
    let g4 = ca.abs() * fourth_root(edphi4);
    let eta = sigma * sigma * g1;
    // d m2 / d sigma via E[2 phitilde phitilde' X]/sigma with X = (Y - b)/a.
    let two = R::c(2.0);
    let m2p = (two * c * c * (ephidphiy - b * ephidphi) + two * c * d * (edphiy - b * edphi))
        / sigma;

    let (alpha_plus, alpha_minus) = if a > R::zero() {
        (ca * base.alpha_plus, ca * base.alpha_minus)
    } else {
        (ca * base.alpha_minus, ca * base.alpha_plus)
    };
    let tv_base = tails::tv_slope(base, TAIL_TOL).map_err(|e| e.in_component("tv_slope"))?;
    let tv = ca.abs().as_f64() * tv_base;

    // C of the reparameterized activation: a nonzero output shift d, or an
    // input shift b against a nonzero asymptote, leaves a constant residual
    // and the primitive diverges. With b = d = 0 the primitive rescales by
    // |c/a|.
    let shift_residual = b != R::zero()
        && (base.alpha_plus != R::zero() || base.alpha_minus != R::zero());
    let c_phi = if d != R::zero() || base.c_phi_finite == Finiteness::Infinite {
        f64::INFINITY
    } else if shift_residual {
        f64::INFINITY
    } else if b == R::zero() {
        let base_c = tails::compensated_primitive(base, TAIL_TOL)
            .map_err(|e| e.in_component("compensated_primitive"))?
            .c_phi;
        (c / a).abs().as_f64() * base_c
    } else {
        // b != 0 with both asymptotes zero: no closed form; fall back to the
        // wrapped activation.
        let wrapped = crate::activations::affine_wrap(base, p);
        tails::compensated_primitive(&wrapped, TAIL_TOL)
            .map_err(|e| e.in_component("compensated_primitive"))?
            .c_phi
    };

    let sig = Signature {
        name: format!("{}~affine-law(a={a}, b={b}, c={c}, d={d})", base.name),
        sigma,
        order: rule.order,
        m1,
        g1,
        g2,
        m2,
        eta,
        alpha_plus,
        alpha_minus,
        tv: R::c(tv),
        c_phi: R::c(c_phi),
        g4,
        m2_prime: m2p,
    };
    check_invariants(&sig)?;
    Ok(sig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::{affine_wrap, builtin};
    use crate::quadrature::DEFAULT_ORDER;

    fn rule() -> QuadratureRule<f64> {
        build_rule(DEFAULT_ORDER).unwrap()
    }

    fn relu_closed_form(sigma: f64) -> [f64; 5] {
        let m1 = sigma / (2.0 * std::f64::consts::PI).sqrt();
        [m1, 0.5, 1.0 / std::f64::consts::SQRT_2, sigma * sigma / 2.0, sigma * sigma / 2.0]
    }

    #[test]
    fn relu_matches_closed_form_to_1e12() {
        let act = builtin::<f64>("relu").unwrap();
        let r = rule();
        for sigma in [0.5, 1.0, 2.0, 0.173, 3.91] {
            let c = gaussian_components(&act, sigma, &r).unwrap();
            let want = relu_closed_form(sigma);
            for (got, want) in [c.m1, c.g1, c.g2, c.m2, c.eta].iter().zip(want) {
                assert!((got - want).abs() < 1e-12, "sigma {sigma}: {got} vs {want}");
            }
            assert!((c.m2_prime - sigma).abs() < 1e-11, "m2' at {sigma}: {}", c.m2_prime);
        }
    }

    #[test]
    fn leaky_relu_matches_closed_form() {
        let alpha = 0.3f64;
        let act = builtin::<f64>("leaky_relu(0.3)").unwrap();
        let r = rule();
        for sigma in [0.5, 1.0, 2.0] {
            let c = gaussian_components(&act, sigma, &r).unwrap();
            let m1 = (1.0 - alpha) * sigma / (2.0 * std::f64::consts::PI).sqrt();
            let g1 = (1.0 + alpha) / 2.0;
            let g2 = ((1.0 + alpha * alpha) / 2.0).sqrt();
            let m2 = (1.0 + alpha * alpha) * sigma * sigma / 2.0;
            let eta = sigma * sigma * g1;
            for (got, want) in [c.m1, c.g1, c.g2, c.m2, c.eta].iter().zip([m1, g1, g2, m2, eta]) {
                assert!((got - want).abs() < 1e-12, "sigma {sigma}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn tanh_components_match_independent_oracle() {
        // Frozen from adaptive Gauss-Kronrod integration of the closed-form
        // integrands at tolerance 1e-14 (independent of this crate's engine).
        let act = builtin::<f64>("tanh").unwrap();
        let r = rule();
        let cases = [
            (0.5, 0.826483857, 0.846982799, 0.173516143, 0.206620964),
            (1.0, 0.605705510, 0.681471131, 0.394294490, 0.605705510),
            (2.0, 0.364738766, 0.505915451, 0.635261234, 1.458955063),
        ];
        for (sigma, g1, g2, m2, eta) in cases {
            let c = gaussian_components(&act, sigma, &r).unwrap();
            assert!(c.m1.abs() < 1e-12, "tanh m1 at {sigma}");
            assert!((c.g1 - g1).abs() < 1e-7, "g1 at {sigma}: {}", c.g1);
            assert!((c.g2 - g2).abs() < 1e-7, "g2 at {sigma}: {}", c.g2);
            assert!((c.m2 - m2).abs() < 1e-7, "m2 at {sigma}: {}", c.m2);
            assert!((c.eta - eta).abs() < 1e-7, "eta at {sigma}: {}", c.eta);
        }
    }

    #[test]
    fn eta_identity_for_all_builtins() {
        let r = rule();
        for name in ["relu", "leaky_relu(0.2)", "tanh", "sigmoid", "swish", "gelu", "mish", "telu"]
        {
            let act = builtin::<f64>(name).unwrap();
            for sigma in [0.5, 1.0, 2.0] {
                let c = gaussian_components(&act, sigma, &r).unwrap();
                let gap = (c.eta - sigma * sigma * c.g1).abs();
                assert!(gap <= 1e-8 * c.eta.abs().max(1.0), "{name} sigma {sigma}: gap {gap}");
            }
        }
    }

    #[test]
    fn m2_prime_matches_central_difference() {
        let r = rule();
        for name in ["relu", "leaky_relu(0.2)", "tanh", "sigmoid", "swish", "gelu", "mish", "telu"]
        {
            let act = builtin::<f64>(name).unwrap();
            let h = 1e-4;
            let c = gaussian_components(&act, 1.0, &r).unwrap();
            let hi = gaussian_components(&act, 1.0 + h, &r).unwrap().m2;
            let lo = gaussian_components(&act, 1.0 - h, &r).unwrap().m2;
            let fd = (hi - lo) / (2.0 * h);
            let rel = (c.m2_prime - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-5, "{name}: m2' {} vs fd {fd}", c.m2_prime);
        }
    }

    #[test]
    fn identity_signature_is_all_ones_and_zeros() {
        let act = builtin::<f64>("identity").unwrap();
        let sig = full_signature(&act, 1.0, DEFAULT_ORDER).unwrap();
        let want = [0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        for (got, want) in sig.as_nine().iter().zip(want) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn relu_full_signature_row() {
        let act = builtin::<f64>("relu").unwrap();
        let sig = full_signature(&act, 0.5, DEFAULT_ORDER).unwrap();
        assert!((sig.m1 - 0.199471140).abs() < 1e-9);
        assert_eq!(sig.alpha_plus, 1.0);
        assert_eq!(sig.alpha_minus, 0.0);
        assert_eq!(sig.tv, 1.0);
        assert_eq!(sig.c_phi, 0.0);
    }

    #[test]
    fn bounded_activations_have_infinite_c_phi() {
        for name in ["tanh", "sigmoid"] {
            let act = builtin::<f64>(name).unwrap();
            let sig = full_signature(&act, 1.0, DEFAULT_ORDER).unwrap();
            assert!(sig.c_phi.is_infinite(), "{name}");
        }
    }

    #[test]
    fn large_scale_components_remain_accurate() {
        // The raw Hermite rule degrades for tanh near sigma = 2 and beyond;
        // the engine must detect that and still deliver tail-accurate values.
        let act = builtin::<f64>("tanh").unwrap();
        let r = rule();
        let c = gaussian_components(&act, 8.0, &r).unwrap();
        // E[tanh^2] at sigma = 8 from the independent oracle.
        assert!((c.m2 - 0.900896807).abs() < 1e-7, "m2 {}", c.m2);
    }

    #[test]
    fn convergence_between_orders_is_tight() {
        for name in ["relu", "tanh", "sigmoid", "swish", "gelu", "mish", "telu"] {
            let act = builtin::<f64>(name).unwrap();
            for sigma in [0.5, 1.0, 2.0] {
                let lo = full_signature(&act, sigma, 120).unwrap();
                let hi = full_signature(&act, sigma, 160).unwrap();
                for (a, b) in [
                    (lo.m1, hi.m1),
                    (lo.g1, hi.g1),
                    (lo.g2, hi.g2),
                    (lo.m2, hi.m2),
                    (lo.eta, hi.eta),
                ] {
                    let rel = (a - b).abs() / b.abs().max(1.0);
                    assert!(rel < 1e-6, "{name} sigma {sigma}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn affine_law_matches_direct_signature() {
        let r = rule();
        let base = builtin::<f64>("swish").unwrap();
        let p = AffineParams::new(1.4, 0.0, -0.8, 0.0).unwrap();
        let wrapped = affine_wrap(&base, p);
        let direct = signature_with_rule(&wrapped, 0.9, &r).unwrap();
        let law = affine_signature_law(&base, p, 0.9, &r).unwrap();
        for (a, b) in direct.as_nine().iter().zip(law.as_nine()) {
            if a.is_infinite() || b.is_infinite() {
                assert_eq!(a.is_infinite(), b.is_infinite());
            } else {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn affine_shift_makes_c_phi_infinite() {
        let r = rule();
        let base = builtin::<f64>("relu").unwrap();
        let p = AffineParams::new(1.0, 0.0, 1.0, 0.3).unwrap();
        let law = affine_signature_law(&base, p, 1.0, &r).unwrap();
        assert!(law.c_phi.is_infinite());
        assert!((law.m1 - (0.398942280 + 0.3)).abs() < 1e-9);
    }

    #[test]
    fn affine_scaling_example() {
        // ReLU scaled by a = 2 at sigma = 1 equals the sigma = 2 row.
        let r = rule();
        let base = builtin::<f64>("relu").unwrap();
        let p = AffineParams::new(2.0, 0.0, 1.0, 0.0).unwrap();
        let law = affine_signature_law(&base, p, 1.0, &r).unwrap();
        assert!((law.m1 - 0.797884561).abs() < 1e-9);
    }

    #[test]
    fn quadrature_g_moments_respect_bounds() {
        let r = rule();
        for (name, a, b, rr) in
            [("relu", 1.0, 0.0, 0.0), ("tanh", 1.0, 0.0, 0.0), ("identity", 1.0, 0.0, 0.0)]
        {
            let act = builtin::<f64>(name).unwrap();
            for sigma in [0.5, 1.0, 2.0] {
                let c = gaussian_components(&act, sigma, &r).unwrap();
                let (g2b, g4b) = slope_moment_upper_bounds(a, b, rr, sigma);
                assert!(c.g2 <= g2b + 1e-12, "{name}");
                assert!(c.g4 <= g4b + 1e-12, "{name}");
                if let Some(m) = act.sup_slope {
                    assert!(c.g2 <= m + 1e-12);
                    assert!(c.g4 <= m + 1e-12);
                }
            }
        }
    }

    #[test]
    fn invariant_violation_is_reported() {
        // A lying derivative breaks the eta identity.
        let mut act = builtin::<f64>("tanh").unwrap();
        act.name = "broken".into();
        let bad = crate::activations::Activation::test_override_deriv(act, |_| 0.123);
        let err = full_signature(&bad, 1.0, 64).unwrap_err();
        assert!(matches!(err, Error::Invariant { .. }), "{err}");
    }
}
