//! Seeded Monte-Carlo estimators for the Gaussian signature components,
//! serving as an independent cross-check of quadrature.

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::rng::{chunked_reduce, standard_normal};
use crate::scalar::Real;

/// An estimate with its sampling error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

impl EstimateWithError {
    pub fn z_score(&self, reference: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.value == reference { 0.0 } else { f64::INFINITY }
        } else {
            (self.value - reference) / self.std_error
        }
    }
}

/// The five Gaussian components estimated from one sample set.
#[derive(Debug, Clone, Copy)]
pub struct McComponents {
    pub m1: EstimateWithError,
    pub g1: EstimateWithError,
    pub g2: EstimateWithError,
    pub m2: EstimateWithError,
    pub eta: EstimateWithError,
}

impl McComponents {
    pub fn as_array(&self) -> [(&'static str, EstimateWithError); 5] {
        [
            ("m1", self.m1),
            ("g1", self.g1),
            ("g2", self.g2),
            ("m2", self.m2),
            ("eta", self.eta),
        ]
    }
}

const STATS: usize = 5;

#[derive(Clone, Copy)]
struct Acc {
    n: usize,
    sum: [f64; STATS],
    sumsq: [f64; STATS],
}

impl Acc {
    fn zero() -> Self {
        Acc { n: 0, sum: [0.0; STATS], sumsq: [0.0; STATS] }
    }

    fn push(&mut self, xs: [f64; STATS]) {
        self.n += 1;
        for i in 0..STATS {
            self.sum[i] += xs[i];
            self.sumsq[i] += xs[i] * xs[i];
        }
    }

    fn merge(mut self, other: Acc) -> Acc {
        self.n += other.n;
        for i in 0..STATS {
            self.sum[i] += other.sum[i];
            self.sumsq[i] += other.sumsq[i];
        }
        self
    }

    fn mean_se(&self, i: usize) -> (f64, f64) {
        let n = self.n as f64;
        let mean = self.sum[i] / n;
        let var = ((self.sumsq[i] - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Estimate (m1, g1, g2, m2, eta) for `Z ~ N(0, sigma^2)` from `samples`
/// draws of a stream keyed by `seed`. Identical inputs give bit-identical
/// results regardless of thread count.
pub fn mc_components<R: Real>(
    act: &Activation<R>,
    sigma: R,
    samples: usize,
    seed: u64,
) -> Result<McComponents> {
    if samples < 1000 {
        return Err(Error::Argument(format!("samples must be >= 1000, got {samples}")));
    }
    if !(sigma > R::zero()) {
        return Err(Error::Argument(format!("sigma must be positive, got {sigma}")));
    }
    let sig = sigma.as_f64();
    let acc = chunked_reduce(
        seed,
        samples,
        |rng, take| {
            let mut acc = Acc::zero();
            for _ in 0..take {
                let z = sig * standard_normal(rng);
                let zr = R::c(z);
                let v = act.value(zr).as_f64();
                let d = act.deriv(zr).as_f64();
                acc.push([v, d, d * d, v * v, z * v]);
            }
            acc
        },
        Acc::merge,
    )
    .expect("samples >= 1000");

    let est = |i: usize| {
        let (mean, se) = acc.mean_se(i);
        EstimateWithError { value: mean, std_error: se, samples, seed }
    };
    // g2 = sqrt(mean of phi'^2); delta method for the standard error.
    let (msq, msq_se) = acc.mean_se(2);
    let g2_val = msq.max(0.0).sqrt();
    let g2 = EstimateWithError {
        value: g2_val,
        std_error: if g2_val > 0.0 { msq_se / (2.0 * g2_val) } else { 0.0 },
        samples,
        seed,
    };
    Ok(McComponents { m1: est(0), g1: est(1), g2, m2: est(3), eta: est(4) })
}
