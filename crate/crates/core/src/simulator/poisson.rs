//! Poisson variates with a fixed, documented algorithm.
//!
//! - mean `< 10`: sequential inversion of the CDF from `k = 0`.
//! - mean `≥ 10`: PTRS, the transformed rejection method with squeeze of
//!   Hörmann (1993), "The transformed rejection method for generating
//!   Poisson random variables".
//!
//! Both consume uniforms from the caller's generator in a fixed order, so a
//! seeded stream pins the output.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

/// Mean at which sampling switches from inversion to PTRS.
pub const INVERSION_LIMIT: f64 = 10.0;

/// One draw from Poisson(`mean`). `mean` must be finite and nonnegative.
pub fn sample<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    debug_assert!(mean.is_finite() && mean >= 0.0);
    if mean <= 0.0 {
        0
    } else if mean < INVERSION_LIMIT {
        inversion(rng, mean)
    } else {
        ptrs(rng, mean)
    }
}

fn inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    // The tail beyond k = 200 is below 1e-150 for mean < 10; stop there if
    // rounding keeps the CDF under u.
    while u > cdf && k < 200 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

fn ptrs<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}
