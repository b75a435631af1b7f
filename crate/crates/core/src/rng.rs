//! Deterministic random streams and the samplers built on them.
//!
//! Every stream is a ChaCha8 keystream addressed by `(seed, stream id)`. The
//! generator is counter based, so a stream id fully determines the sequence
//! and separate purposes never share state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Folded into the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Environment = 1,
    AdditiveNoise = 2,
    Initial = 3,
    WaitingTime = 4,
    SiteChoice = 5,
    Direction = 6,
    SweepSite = 7,
    SweepFire = 8,
}

/// Opens the stream for `(seed, replica, purpose)`.
pub fn stream(seed: u64, replica: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replica << 8) | purpose as u64);
    rng
}

/// Uniform in (0, 1].
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Exponential variate with the given rate.
#[inline]
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -open_unit(rng).ln() / rate
}

const LN_FACT_TABLE: usize = 256;

fn ln_factorial_table() -> &'static [f64; LN_FACT_TABLE] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[f64; LN_FACT_TABLE]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; LN_FACT_TABLE];
        for k in 1..LN_FACT_TABLE {
            t[k] = t[k - 1] + (k as f64).ln();
        }
        t
    })
}

/// ln(k!) from a table for small k and the Stirling series beyond.
pub fn ln_factorial(k: u64) -> f64 {
    if (k as usize) < LN_FACT_TABLE {
        return ln_factorial_table()[k as usize];
    }
    let x = k as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Means at or above this switch from inversion to transformed rejection.
pub const POISSON_REJECTION_THRESHOLD: f64 = 30.0;

/// Draws a Poisson(`mean`) variate.
///
/// Sequential inversion below [`POISSON_REJECTION_THRESHOLD`], Hörmann's
/// transformed rejection with squeeze (PTRS) above it.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < POISSON_REJECTION_THRESHOLD {
        poisson_inversion(rng, mean)
    } else {
        poisson_ptrs(rng, mean)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    // cdf can saturate just below u through rounding; the cap ends the walk far
    // in the tail where the remaining mass is below f64 resolution.
    let cap = (mean + 40.0 * mean.sqrt() + 100.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
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
        let rhs = -mean + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Poisson(`mean`) probabilities from k = 0 until the cumulative mass
/// reaches `1 - tail` (and at least `min_terms` terms).
///
/// Works in log space so large means do not underflow `exp(-mean)`.
pub fn poisson_weights(mean: f64, tail: f64, min_terms: usize) -> Vec<f64> {
    if mean <= 0.0 {
        let mut w = vec![0.0; min_terms.max(1)];
        w[0] = 1.0;
        return w;
    }
    let ln_mean = mean.ln();
    let cap = (mean + 60.0 * mean.sqrt() + 200.0) as usize;
    let mut weights = Vec::with_capacity(min_terms.max(mean as usize * 2));
    let mut cumulative = 0.0;
    let mut ln_fact = 0.0;
    for k in 0..=cap {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        let w = (-mean + k as f64 * ln_mean - ln_fact).exp();
        weights.push(w);
        cumulative += w;
        if k + 1 >= min_terms && k as f64 > mean && cumulative >= 1.0 - tail {
            break;
        }
    }
    weights
}
