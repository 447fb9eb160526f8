//! Registry of activation functions with evaluators and analytic tail
//! metadata.
//!
//! Each [`Activation`] packages the value, derivative (an a.e.
//! representative), optional second derivative on smooth pieces, kink
//! locations with slope jumps, the one-sided asymptotic slopes, and
//! finiteness flags used by the tail analysis.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type ScalarFn<R> = Arc<dyn Fn(R) -> R + Send + Sync>;

/// Finiteness verdict for the tail-compensated primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finiteness {
    Finite,
    Infinite,
    Unknown,
}

#[derive(Clone)]
pub struct Activation<R: Real> {
    pub name: String,
    value: ScalarFn<R>,
    deriv: ScalarFn<R>,
    second_deriv: Option<ScalarFn<R>>,
    /// (location, slope jump) at points where the derivative jumps.
    pub kinks: Vec<(R, R)>,
    /// One-sided slope at +inf; may be infinite.
    pub alpha_plus: R,
    /// One-sided slope at -inf; may be infinite.
    pub alpha_minus: R,
    /// Closed-form total variation of the slope, when known.
    pub tv_analytic: Option<R>,
    pub c_phi_finite: Finiteness,
    /// Global bound on |phi'|, when known exactly.
    pub sup_slope: Option<R>,
}

impl<R: Real> fmt::Debug for Activation<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Activation")
            .field("name", &self.name)
            .field("alpha_plus", &self.alpha_plus)
            .field("alpha_minus", &self.alpha_minus)
            .field("kinks", &self.kinks)
            .finish()
    }
}

impl<R: Real> Activation<R> {
    pub fn value(&self, x: R) -> R {
        (self.value)(x)
    }

    pub fn deriv(&self, x: R) -> R {
        (self.deriv)(x)
    }

    pub fn second_deriv(&self, x: R) -> Option<R> {
        self.second_deriv.as_ref().map(|f| f(x))
    }

    pub fn has_second_deriv(&self) -> bool {
        self.second_deriv.is_some()
    }

    pub fn has_finite_slopes(&self) -> bool {
        self.alpha_plus.is_finite() && self.alpha_minus.is_finite()
    }
}

fn sigm<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

/// Softplus computed as `x + ln(1 + e^{-x})` for positive x to avoid overflow.
fn softplus<R: Real>(x: R) -> R {
    if x > R::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `tanh(e^x)` saturates to 1 well before `e^x` overflows.
const TELU_SAT: f64 = 20.0;

/// Look up a builtin activation.
///
/// Accepted names: `relu`, `leaky_relu(alpha)` with `alpha` in (0,1), `tanh`,
/// `sigmoid`, `swish`, `gelu`, `mish`, `telu`, `identity`, `poly(k)`.
pub fn builtin<R: Real>(name: &str) -> Result<Activation<R>> {
    let name = name.trim();
    if let Some(arg) = parse_paren(name, "leaky_relu") {
        let alpha: f64 = arg
            .parse()
            .map_err(|_| Error::Argument(format!("bad leaky_relu parameter `{arg}`")))?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Argument(format!(
                "leaky_relu slope must be in (0, 1), got {alpha}"
            )));
        }
        return Ok(leaky_relu(R::c(alpha)));
    }
    if let Some(arg) = parse_paren(name, "poly") {
        let k: u32 = arg
            .parse()
            .map_err(|_| Error::Argument(format!("bad poly degree `{arg}`")))?;
        if k < 1 {
            return Err(Error::Argument("poly degree must be >= 1".into()));
        }
        return Ok(poly(k));
    }
    match name {
        "relu" => Ok(relu()),
        "tanh" => Ok(tanh()),
        "sigmoid" => Ok(sigmoid()),
        "swish" => Ok(swish()),
        "gelu" => Ok(gelu()),
        "mish" => Ok(mish()),
        "telu" => Ok(telu()),
        "identity" => Ok(identity()),
        other => Err(Error::Registry(other.to_string())),
    }
}

/// The eight activations with classification theorems, in table order.
pub fn classified_names() -> Vec<&'static str> {
    vec!["relu", "leaky_relu(0.2)", "tanh", "sigmoid", "swish", "gelu", "mish", "telu"]
}

/// The seven activations of the numerical table.
pub fn table_names() -> Vec<&'static str> {
    vec!["gelu", "mish", "relu", "sigmoid", "swish", "tanh", "telu"]
}

fn parse_paren<'a>(name: &'a str, prefix: &str) -> Option<&'a str> {
    name.strip_prefix(prefix)?
        .strip_prefix('(')?
        .strip_suffix(')')
}

pub fn relu<R: Real>() -> Activation<R> {
    Activation {
        name: "relu".into(),
        value: Arc::new(|x: R| x.max(R::zero())),
        // Right limit at the kink.
        deriv: Arc::new(|x: R| if x >= R::zero() { R::one() } else { R::zero() }),
        second_deriv: Some(Arc::new(|_| R::zero())),
        kinks: vec![(R::zero(), R::one())],
        alpha_plus: R::one(),
        alpha_minus: R::zero(),
        tv_analytic: Some(R::one()),
        c_phi_finite: Finiteness::Finite,
        sup_slope: Some(R::one()),
    }
}

pub fn leaky_relu<R: Real>(alpha: R) -> Activation<R> {
    Activation {
        name: format!("leaky_relu({alpha})"),
        value: Arc::new(move |x: R| if x >= R::zero() { x } else { alpha * x }),
        deriv: Arc::new(move |x: R| if x >= R::zero() { R::one() } else { alpha }),
        second_deriv: Some(Arc::new(|_| R::zero())),
        kinks: vec![(R::zero(), R::one() - alpha)],
        alpha_plus: R::one(),
        alpha_minus: alpha,
        tv_analytic: Some(R::one() - alpha),
        c_phi_finite: Finiteness::Finite,
        sup_slope: Some(R::one()),
    }
}

pub fn tanh<R: Real>() -> Activation<R> {
    Activation {
        name: "tanh".into(),
        value: Arc::new(|x: R| x.tanh()),
        deriv: Arc::new(|x: R| {
            let t = x.tanh();
            R::one() - t * t
        }),
        second_deriv: Some(Arc::new(|x: R| {
            let t = x.tanh();
            -R::c(2.0) * t * (R::one() - t * t)
        })),
        kinks: vec![],
        alpha_plus: R::zero(),
        alpha_minus: R::zero(),
        tv_analytic: Some(R::c(2.0)),
        c_phi_finite: Finiteness::Infinite,
        sup_slope: Some(R::one()),
    }
}

pub fn sigmoid<R: Real>() -> Activation<R> {
    Activation {
        name: "sigmoid".into(),
        value: Arc::new(sigm),
        deriv: Arc::new(|x: R| {
            let s = sigm(x);
            s * (R::one() - s)
        }),
        second_deriv: Some(Arc::new(|x: R| {
            let s = sigm(x);
            s * (R::one() - s) * (R::one() - R::c(2.0) * s)
        })),
        kinks: vec![],
        alpha_plus: R::zero(),
        alpha_minus: R::zero(),
        tv_analytic: None,
        c_phi_finite: Finiteness::Infinite,
        sup_slope: Some(R::c(0.25)),
    }
}

pub fn swish<R: Real>() -> Activation<R> {
    Activation {
        name: "swish".into(),
        value: Arc::new(|x: R| x * sigm(x)),
        deriv: Arc::new(|x: R| {
            let s = sigm(x);
            s + x * s * (R::one() - s)
        }),
        second_deriv: Some(Arc::new(|x: R| {
            let s = sigm(x);
            s * (R::one() - s) * (R::c(2.0) + x * (R::one() - R::c(2.0) * s))
        })),
        kinks: vec![],
        alpha_plus: R::one(),
        alpha_minus: R::zero(),
        tv_analytic: None,
        c_phi_finite: Finiteness::Finite,
        sup_slope: None,
    }
}

pub fn gelu<R: Real>() -> Activation<R> {
    Activation {
        name: "gelu".into(),
        value: Arc::new(|x: R| x * x.norm_cdf()),
        deriv: Arc::new(|x: R| x.norm_cdf() + x * x.norm_pdf()),
        second_deriv: Some(Arc::new(|x: R| (R::c(2.0) - x * x) * x.norm_pdf())),
        kinks: vec![],
        alpha_plus: R::one(),
        alpha_minus: R::zero(),
        tv_analytic: None,
        c_phi_finite: Finiteness::Finite,
        sup_slope: None,
    }
}

pub fn mish<R: Real>() -> Activation<R> {
    Activation {
        name: "mish".into(),
        value: Arc::new(|x: R| x * softplus(x).tanh()),
        deriv: Arc::new(|x: R| {
            let t = softplus(x).tanh();
            let u = R::one() - t * t;
            t + x * u * sigm(x)
        }),
        second_deriv: Some(Arc::new(|x: R| {
            let t = softplus(x).tanh();
            let u = R::one() - t * t;
            let s = sigm(x);
            R::c(2.0) * u * s + x * u * s * (R::one() - s - R::c(2.0) * t * s)
        })),
        kinks: vec![],
        alpha_plus: R::one(),
        alpha_minus: R::zero(),
        tv_analytic: None,
        c_phi_finite: Finiteness::Finite,
        sup_slope: None,
    }
}

pub fn telu<R: Real>() -> Activation<R> {
    let sat = R::c(TELU_SAT);
    Activation {
        name: "telu".into(),
        value: Arc::new(move |x: R| if x > sat { x } else { x * x.exp().tanh() }),
        deriv: Arc::new(move |x: R| {
            if x > sat {
                return R::one();
            }
            let e = x.exp();
            let t = e.tanh();
            t + x * (R::one() - t * t) * e
        }),
        second_deriv: Some(Arc::new(move |x: R| {
            if x > sat {
                return R::zero();
            }
            let e = x.exp();
            let t = e.tanh();
            let u = R::one() - t * t;
            u * e * (R::c(2.0) + x * (R::one() - R::c(2.0) * t * e))
        })),
        kinks: vec![],
        alpha_plus: R::one(),
        alpha_minus: R::zero(),
        tv_analytic: None,
        c_phi_finite: Finiteness::Finite,
        sup_slope: None,
    }
}

pub fn identity<R: Real>() -> Activation<R> {
    Activation {
        name: "identity".into(),
        value: Arc::new(|x: R| x),
        deriv: Arc::new(|_| R::one()),
        second_deriv: Some(Arc::new(|_| R::zero())),
        kinks: vec![],
        alpha_plus: R::one(),
        alpha_minus: R::one(),
        tv_analytic: Some(R::zero()),
        c_phi_finite: Finiteness::Finite,
        sup_slope: Some(R::one()),
    }
}

pub fn poly<R: Real>(k: u32) -> Activation<R> {
    if k == 1 {
        let mut act = identity::<R>();
        act.name = "poly(1)".into();
        return act;
    }
    let kf = R::c(f64::from(k));
    let km1 = R::c(f64::from(k - 1));
    Activation {
        name: format!("poly({k})"),
        value: Arc::new(move |x: R| x.powi(k as i32)),
        deriv: Arc::new(move |x: R| kf * x.powi(k as i32 - 1)),
        second_deriv: Some(Arc::new(move |x: R| kf * km1 * x.powi(k as i32 - 2))),
        kinks: vec![],
        alpha_plus: R::infinity(),
        alpha_minus: R::infinity(),
        tv_analytic: Some(R::infinity()),
        c_phi_finite: Finiteness::Infinite,
        sup_slope: None,
    }
}

// ---------------------------------------------------------------------------
// Affine reparameterization
// ---------------------------------------------------------------------------

/// Parameters of the reparameterization `c * phi(a x + b) + d`.
#[derive(Debug, Clone, Copy)]
pub struct AffineParams<R: Real> {
    pub a: R,
    pub b: R,
    pub c: R,
    pub d: R,
}

impl<R: Real> AffineParams<R> {
    pub fn new(a: R, b: R, c: R, d: R) -> Result<Self> {
        if a == R::zero() || c == R::zero() {
            return Err(Error::Argument("affine parameters a and c must be nonzero".into()));
        }
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(Error::Argument("affine parameters must be finite".into()));
        }
        Ok(Self { a, b, c, d })
    }
}

/// Wrap `base` as `c * phi(a x + b) + d`, transforming the metadata by the
/// reparameterization laws: TV scales by |c a|, slopes swap sign-aware when
/// a < 0, and a nonzero shift d makes the compensated primitive infinite.
pub fn affine_wrap<R: Real>(base: &Activation<R>, p: AffineParams<R>) -> Activation<R> {
    let AffineParams { a, b, c, d } = p;
    let ca = c * a;
    let (alpha_plus, alpha_minus) = if a > R::zero() {
        (ca * base.alpha_plus, ca * base.alpha_minus)
    } else {
        (ca * base.alpha_minus, ca * base.alpha_plus)
    };
    let mut kinks: Vec<(R, R)> = base
        .kinks
        .iter()
        .map(|&(loc, jump)| ((loc - b) / a, c * a.abs() * jump))
        .collect();
    kinks.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    let v = base.value.clone();
    let dv = base.deriv.clone();
    let ddv = base.second_deriv.clone();
    Activation {
        name: format!("{}~affine(a={a}, b={b}, c={c}, d={d})", base.name),
        value: Arc::new(move |x: R| c * v(a * x + b) + d),
        deriv: Arc::new(move |x: R| ca * dv(a * x + b)),
        second_deriv: ddv.map(|f| {
            let caa = c * a * a;
            Arc::new(move |x: R| caa * f(a * x + b)) as ScalarFn<R>
        }),
        kinks,
        alpha_plus,
        alpha_minus,
        tv_analytic: base.tv_analytic.map(|t| ca.abs() * t),
        // An output shift d, or an input shift b against a nonzero asymptote,
        // leaves a constant residual in the tails.
        c_phi_finite: if d != R::zero()
            || (b != R::zero()
                && (base.alpha_plus != R::zero() || base.alpha_minus != R::zero()))
        {
            Finiteness::Infinite
        } else {
            base.c_phi_finite
        },
        sup_slope: base.sup_slope.map(|m| ca.abs() * m),
    }
}

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaxonomyClass {
    /// Both asymptotic slopes zero.
    A0,
    /// Both slopes finite with a nonzero maximum.
    A1,
    /// At least one slope infinite.
    AGt1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaxonomyStyle {
    Saturating,
    Asymmetric,
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Taxonomy {
    pub class: TaxonomyClass,
    pub style: TaxonomyStyle,
}

impl fmt::Display for Taxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.class {
            TaxonomyClass::A0 => write!(f, "A0 (bounded, saturating)"),
            TaxonomyClass::A1 => match self.style {
                TaxonomyStyle::Smooth => write!(f, "A1 (linear-growth, smooth)"),
                _ => write!(f, "A1 (linear-growth, asymmetric)"),
            },
            TaxonomyClass::AGt1 => write!(f, "A_{{>1}} (superlinear growth)"),
        }
    }
}

/// Place an activation in the taxonomy by its asymptotic slopes, with
/// kink-freeness as the smoothness proxy.
pub fn classify<R: Real>(act: &Activation<R>) -> Result<Taxonomy> {
    let (ap, am) = (act.alpha_plus, act.alpha_minus);
    if ap.is_nan() || am.is_nan() {
        return Err(Error::Metadata(format!("{}: asymptotic slopes unset", act.name)));
    }
    let class = if ap.is_infinite() || am.is_infinite() {
        TaxonomyClass::AGt1
    } else if ap == R::zero() && am == R::zero() {
        TaxonomyClass::A0
    } else {
        TaxonomyClass::A1
    };
    let style = match class {
        TaxonomyClass::A0 => TaxonomyStyle::Saturating,
        _ if act.kinks.is_empty() => TaxonomyStyle::Smooth,
        _ => TaxonomyStyle::Asymmetric,
    };
    Ok(Taxonomy { class, style })
}

#[cfg(test)]
impl<R: Real> Activation<R> {
    /// Replace the derivative evaluator; for negative tests only.
    pub(crate) fn test_override_deriv(
        mut self,
        f: impl Fn(R) -> R + Send + Sync + 'static,
    ) -> Self {
        self.deriv = Arc::new(f);
        self
    }
}
