use serde::Serialize;

use crate::lattice::{torus_distance, DensityField};

/// Width of the radial bins.
pub const RING_BIN: f64 = 0.025;
/// Bins at or beyond this radius form the far field.
pub const RING_FAR: f64 = 0.4;
/// Smallest radius searched for the dip.
pub const RING_INNER: f64 = 0.1;
/// The dip has to fall this far below the far field, relatively.
pub const RING_DEPTH: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingCheck {
    pub detected: bool,
    /// `(bin centre, mean density)` for every non-empty bin.
    pub profile: Vec<(f64, f64)>,
    pub far_field: f64,
    /// Lowest intermediate bin as `(radius, density)`.
    pub dip: Option<(f64, f64)>,
    /// Largest bin value inside the dip radius.
    pub inner_peak: Option<f64>,
}

/// Radially averaged profile of `field` about `center`, in bins of `RING_BIN`.
pub fn radial_profile(field: &DensityField, center: &[f64]) -> Vec<(f64, f64)> {
    let bins = (0.5 * (field.shape.d as f64).sqrt() / RING_BIN).ceil() as usize + 1;
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (j, v) in field.values.iter().enumerate() {
        let r = torus_distance(&field.shape.cell_center(j), center);
        let b = ((r / RING_BIN) as usize).min(bins - 1);
        sum[b] += v;
        count[b] += 1;
    }
    (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| ((b as f64 + 0.5) * RING_BIN, sum[b] / count[b] as f64))
        .collect()
}

/// Looks for a ring of depressed density around `center`.
///
/// Detected when some bin with radius in `[RING_INNER, RING_FAR)` lies more
/// than `RING_DEPTH` below the far-field mean and a bin closer to the centre
/// is higher than that dip, so the profile is not monotone.
pub fn ring_transient_check(field: &DensityField, center: &[f64]) -> RingCheck {
    let profile = radial_profile(field, center);
    let far: Vec<f64> = profile.iter().filter(|(r, _)| *r >= RING_FAR).map(|(_, v)| *v).collect();
    let far_field = far.iter().sum::<f64>() / far.len().max(1) as f64;
    let dip = profile
        .iter()
        .copied()
        .filter(|(r, _)| (RING_INNER..RING_FAR).contains(r))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let inner_peak = dip.and_then(|(rd, _)| {
        profile.iter().filter(|(r, _)| *r < rd).map(|(_, v)| *v).reduce(f64::max)
    });
    let detected = match (dip, inner_peak) {
        (Some((_, low)), Some(peak)) => !far.is_empty() && low < (1.0 - RING_DEPTH) * far_field && peak > low,
        _ => false,
    };
    RingCheck { detected, profile, far_field, dip, inner_peak }
}
