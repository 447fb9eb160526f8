//! Dimension-free curvature bounds for the Gaussian kernel
//! `K(x, y) = E[phi(w^T x) phi(w^T y)]`, `w ~ N(0, I_d)`, verified by
//! Monte Carlo against the mixed directional Hessian
//! `a^T grad_x grad_y K b = E[phi'(w^T x) phi'(w^T y) (w^T a)(w^T b)]`.

use rayon::prelude::*;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::montecarlo::EstimateWithError;
use crate::quadrature::{GaussianLaw, QuadratureRule};
use crate::rng::{chunked_reduce, standard_normal, stream_rng, uniform_open01};
use crate::scalar::Real;
use crate::signature::Expectations;
use crate::tails;

const SQRT_3: f64 = 1.7320508075688772;
/// Abscissa treated as infinity when reading off one-sided slope limits.
const SLOPE_LIMIT_AT: f64 = 1e6;

/// One verified bound instance.
#[derive(Debug, Clone)]
pub struct KernelBoundReport {
    pub dim: usize,
    pub norm_x: f64,
    pub norm_y: f64,
    pub g4_x: f64,
    pub g4_y: f64,
    /// `sqrt(3) * g4(|x|) * g4(|y|)`.
    pub g4_bound: f64,
    /// `sqrt(3) * M^2`; absent when the slope is unbounded.
    pub bv_bound: Option<f64>,
    pub mc: EstimateWithError,
    pub satisfied: bool,
}

/// `g4(sigma) = E[phi'(Z)^4]^{1/4}` for `Z ~ N(0, sigma^2)`.
pub fn g4_at_norm<R: Real>(
    act: &Activation<R>,
    norm: f64,
    rule: &QuadratureRule<R>,
) -> Result<f64> {
    if !(norm > 0.0) {
        return Err(Error::Argument(format!("norm must be positive, got {norm}")));
    }
    let law = GaussianLaw::centered(R::c(norm))?;
    let e = Expectations::new(act, law, rule)?;
    let q = e.expect(|z| {
        let d = act.deriv(z);
        d * d * d * d
    })?;
    Ok(q.max(R::zero()).as_f64().sqrt().sqrt())
}

/// The mixed-Hessian bound `sqrt(3) * g4(|x|) * g4(|y|)`; the projection
/// `w^T x` of a standard Gaussian is `N(0, |x|^2)`, so only the norms enter.
pub fn g4_bound<R: Real>(
    act: &Activation<R>,
    norm_x: f64,
    norm_y: f64,
    rule: &QuadratureRule<R>,
) -> Result<f64> {
    Ok(SQRT_3 * g4_at_norm(act, norm_x, rule)? * g4_at_norm(act, norm_y, rule)?)
}

/// The slope-based bound `sqrt(3) * M^2` with `M = sup|phi'|` when known,
/// else `M = TV(phi') + |phi'(+inf) - phi'(-inf)|`.
pub fn bv_bound<R: Real>(act: &Activation<R>) -> Result<f64> {
    let m = match act.sup_slope {
        Some(m) => m.as_f64(),
        None => {
            let tv = tails::tv_slope(act, 1e-10)?;
            if !tv.is_finite() {
                return Err(Error::Domain(format!(
                    "{}: slope variation is unbounded",
                    act.name
                )));
            }
            let c_star = (act.deriv(R::c(SLOPE_LIMIT_AT)).as_f64()
                - act.deriv(R::c(-SLOPE_LIMIT_AT)).as_f64())
                .abs();
            tv + c_star
        }
    };
    if !m.is_finite() {
        return Err(Error::Domain(format!("{}: slope is unbounded", act.name)));
    }
    Ok(SQRT_3 * m * m)
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

#[derive(Clone, Copy)]
struct Acc {
    n: usize,
    sum: f64,
    sumsq: f64,
}

/// Monte-Carlo estimate of `|E[phi'(w^T x) phi'(w^T y) (w^T a)(w^T b)]|`
/// over `w ~ N(0, I_d)`; `a` and `b` must be unit vectors.
pub fn mc_mixed_hessian<R: Real>(
    act: &Activation<R>,
    x: &[f64],
    y: &[f64],
    a: &[f64],
    b: &[f64],
    samples: usize,
    seed: u64,
) -> Result<EstimateWithError> {
    let d = x.len();
    if d == 0 || y.len() != d || a.len() != d || b.len() != d {
        return Err(Error::Argument(format!(
            "dimension mismatch: x {}, y {}, a {}, b {}",
            x.len(),
            y.len(),
            a.len(),
            b.len()
        )));
    }
    if (norm(a) - 1.0).abs() > 1e-12 || (norm(b) - 1.0).abs() > 1e-12 {
        return Err(Error::Argument("a and b must be unit vectors".into()));
    }
    if samples < 1000 {
        return Err(Error::Argument(format!("samples must be >= 1000, got {samples}")));
    }
    let acc = chunked_reduce(
        seed,
        samples,
        |rng, take| {
            let mut acc = Acc { n: 0, sum: 0.0, sumsq: 0.0 };
            for _ in 0..take {
                let (mut wx, mut wy, mut wa, mut wb) = (0.0, 0.0, 0.0, 0.0);
                for j in 0..d {
                    let g = standard_normal(rng);
                    wx += g * x[j];
                    wy += g * y[j];
                    wa += g * a[j];
                    wb += g * b[j];
                }
                let v = act.deriv(R::c(wx)).as_f64() * act.deriv(R::c(wy)).as_f64() * wa * wb;
                acc.n += 1;
                acc.sum += v;
                acc.sumsq += v * v;
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
    Ok(EstimateWithError {
        value: mean.abs(),
        std_error: (var / n).sqrt(),
        samples,
        seed,
    })
}

fn unit_vector(rng: &mut rand_chacha::ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Stress the bound on `trials` random configurations: norms log-uniform on
/// [0.25, 4], directions uniform on the sphere. Per-trial seeds are
/// `seed + trial`, so any sub-range reproduces independently.
pub fn bound_stress<R: Real>(
    act: &Activation<R>,
    dim: usize,
    trials: usize,
    samples: usize,
    seed: u64,
    rule: &QuadratureRule<R>,
) -> Result<Vec<KernelBoundReport>> {
    if dim == 0 || trials == 0 {
        return Err(Error::Argument("dim and trials must be positive".into()));
    }
    let bv = bv_bound(act).ok();
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = seed + trial as u64;
            // Geometry stream sits far above the sampling chunk streams.
            let mut rng = stream_rng(trial_seed, u64::MAX);
            let ln_lo = 0.25f64.ln();
            let ln_hi = 4.0f64.ln();
            let mut rnorm =
                || (ln_lo + (ln_hi - ln_lo) * uniform_open01(&mut rng)).exp();
            let (norm_x, norm_y) = (rnorm(), rnorm());
            let x: Vec<f64> = unit_vector(&mut rng, dim).iter().map(|c| c * norm_x).collect();
            let y: Vec<f64> = unit_vector(&mut rng, dim).iter().map(|c| c * norm_y).collect();
            let a = unit_vector(&mut rng, dim);
            let b = unit_vector(&mut rng, dim);

            let g4_x = g4_at_norm(act, norm_x, rule)?;
            let g4_y = g4_at_norm(act, norm_y, rule)?;
            let g4_bound = SQRT_3 * g4_x * g4_y;
            let mc = mc_mixed_hessian(act, &x, &y, &a, &b, samples, trial_seed)?;
            let limit = bv.map_or(g4_bound, |bvb| g4_bound.min(bvb));
            Ok(KernelBoundReport {
                dim,
                norm_x,
                norm_y,
                g4_x,
                g4_y,
                g4_bound,
                bv_bound: bv,
                satisfied: mc.value <= limit + 3.0 * mc.std_error,
                mc,
            })
        })
        .collect()
}
