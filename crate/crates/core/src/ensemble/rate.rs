use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the interaction `g: ℕ → [0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateShape {
    /// `g(n) = slope · n`; independent walkers for slope 1.
    Linear { slope: f64 },
    /// `g(n) = level` for `n ≥ 1`; the condensing case.
    Constant { level: f64 },
    /// Tabulated `g(0..len)` continued affinely with `tail_slope`.
    Table { values: Vec<f64>, tail_slope: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateKind {
    LinearGrowth,
    ConstantRate(f64),
    Custom,
}

/// The on-site interaction together with its regularity constants.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    shape: RateShape,
    /// sup |g(n+1) - g(n)|
    lipschitz_bound: f64,
    /// inf g(n)/n over n ≥ 1, zero when g does not grow linearly.
    linear_lower: f64,
    kind: RateKind,
}

/// Product magnitude beyond which `g(n)!` switches to log space.
const LOG_SPACE_THRESHOLD: f64 = 1e300;

impl RateFunction {
    pub fn new(shape: RateShape) -> Result<Self> {
        match &shape {
            RateShape::Linear { slope } => {
                if !(*slope > 0.0 && slope.is_finite()) {
                    return Err(Error::InvalidRate(format!("linear slope must be positive, got {slope}")));
                }
                Ok(Self {
                    lipschitz_bound: *slope,
                    linear_lower: *slope,
                    kind: RateKind::LinearGrowth,
                    shape,
                })
            }
            RateShape::Constant { level } => {
                if !(*level > 0.0 && level.is_finite()) {
                    return Err(Error::InvalidRate(format!("constant level must be positive, got {level}")));
                }
                Ok(Self {
                    lipschitz_bound: *level,
                    linear_lower: 0.0,
                    kind: RateKind::ConstantRate(*level),
                    shape,
                })
            }
            RateShape::Table { values, tail_slope } => {
                if values.len() < 2 {
                    return Err(Error::InvalidRate("table needs g(0) and at least g(1)".into()));
                }
                if values[0] != 0.0 {
                    return Err(Error::InvalidRate(format!("g(0) must be 0, got {}", values[0])));
                }
                if let Some((n, v)) = values.iter().enumerate().skip(1).find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidRate(format!("g({n}) must be positive, got {v}")));
                }
                if !(*tail_slope >= 0.0 && tail_slope.is_finite()) {
                    return Err(Error::InvalidRate(format!("tail slope must be nonnegative, got {tail_slope}")));
                }
                let lipschitz = values
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs())
                    .fold(*tail_slope, f64::max);
                let (linear_lower, kind) = if *tail_slope > 0.0 {
                    let table_min = values
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(n, v)| v / n as f64)
                        .fold(f64::INFINITY, f64::min);
                    // along the affine tail g(n)/n is monotone with limit tail_slope
                    (table_min.min(*tail_slope), RateKind::LinearGrowth)
                } else {
                    (0.0, RateKind::Custom)
                };
                Ok(Self {
                    lipschitz_bound: lipschitz,
                    linear_lower,
                    kind,
                    shape,
                })
            }
        }
    }

    /// `g(n) = n`.
    pub fn identity() -> Self {
        Self::linear(1.0)
    }

    pub fn linear(slope: f64) -> Self {
        Self::new(RateShape::Linear { slope }).expect("positive slope")
    }

    pub fn constant(level: f64) -> Self {
        Self::new(RateShape::Constant { level }).expect("positive level")
    }

    pub fn table(values: Vec<f64>, tail_slope: f64) -> Result<Self> {
        Self::new(RateShape::Table { values, tail_slope })
    }

    pub fn shape(&self) -> &RateShape {
        &self.shape
    }

    pub fn kind(&self) -> RateKind {
        self.kind
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn linear_lower(&self) -> f64 {
        self.linear_lower
    }

    /// Slope when `g(n) = slope·n` exactly.
    pub fn linear_slope(&self) -> Option<f64> {
        match self.shape {
            RateShape::Linear { slope } => Some(slope),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, n: u32) -> f64 {
        match &self.shape {
            RateShape::Linear { slope } => slope * n as f64,
            RateShape::Constant { level } => {
                if n == 0 {
                    0.0
                } else {
                    *level
                }
            }
            RateShape::Table { values, tail_slope } => {
                let last = values.len() - 1;
                if (n as usize) <= last {
                    values[n as usize]
                } else {
                    values[last] + tail_slope * (n as usize - last) as f64
                }
            }
        }
    }

    /// Radius of convergence of `Σ φⁿ / g(n)!`, i.e. `lim g(n)`; `None` when infinite.
    pub fn convergence_radius(&self) -> Option<f64> {
        match &self.shape {
            RateShape::Linear { .. } => None,
            RateShape::Constant { level } => Some(*level),
            RateShape::Table { values, tail_slope } => {
                if *tail_slope > 0.0 {
                    None
                } else {
                    values.last().copied()
                }
            }
        }
    }

    /// Checks `g(n) = 0 ⇔ n = 0` and, for linear growth, the Lipschitz and
    /// growth constants up to `n_max`.
    pub fn validate(&self, n_max: u32) -> Result<()> {
        if self.eval(0) != 0.0 {
            return Err(Error::InvalidRate("g(0) != 0".into()));
        }
        let mut prev = 0.0;
        for n in 1..=n_max {
            let gn = self.eval(n);
            if !(gn > 0.0) {
                return Err(Error::InvalidRate(format!("g({n}) = {gn} is not positive")));
            }
            if (gn - prev).abs() > self.lipschitz_bound * (1.0 + 1e-12) {
                return Err(Error::InvalidRate(format!("|g({n}) - g({})| exceeds g* = {}", n - 1, self.lipschitz_bound)));
            }
            if self.kind == RateKind::LinearGrowth && gn / (n as f64) < self.linear_lower * (1.0 - 1e-12) {
                return Err(Error::InvalidRate(format!("g({n})/{n} below g0 = {}", self.linear_lower)));
            }
            prev = gn;
        }
        Ok(())
    }
}

/// ln(g(1)·g(2)⋯g(n)).
pub fn ln_g_factorial(g: &RateFunction, n: u32) -> f64 {
    match g.shape() {
        RateShape::Linear { slope } => n as f64 * slope.ln() + crate::rng::ln_factorial(n as u64),
        RateShape::Constant { level } => n as f64 * level.ln(),
        RateShape::Table { .. } => (1..=n).map(|k| g.eval(k).ln()).sum(),
    }
}

/// `g(n)! = g(1)·g(2)⋯g(n)`, with `g(0)! = 1`.
///
/// Multiplies directly while the running product stays below 1e300 and
/// finishes the remaining factors in log space. Returns `inf` only when the
/// true value exceeds the f64 range; use [`ln_g_factorial`] in that regime.
pub fn g_factorial(g: &RateFunction, n: u32) -> f64 {
    let mut product = 1.0;
    for k in 1..=n {
        let next = product * g.eval(k);
        if next > LOG_SPACE_THRESHOLD {
            let ln_rest: f64 = (k..=n).map(|j| g.eval(j).ln()).sum();
            return (product.ln() + ln_rest).exp();
        }
        product = next;
    }
    product
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_factorial_examples() {
        let id = RateFunction::identity();
        assert_eq!(g_factorial(&id, 0), 1.0);
        assert_eq!(g_factorial(&id, 4), 24.0);
        let c = RateFunction::constant(3.0);
        assert_eq!(g_factorial(&c, 5), 243.0);
    }

    #[test]
    fn g_factorial_log_space_is_continuous() {
        let id = RateFunction::identity();
        // 170! ≈ 7.3e306 crosses the threshold but stays representable
        let direct: f64 = (1..=170).map(|k| k as f64).product();
        let v = g_factorial(&id, 170);
        assert!((v / direct - 1.0).abs() < 1e-12);
        assert!((ln_g_factorial(&id, 170) - direct.ln()).abs() < 1e-10);
        assert!(g_factorial(&id, 400).is_infinite());
        assert!(ln_g_factorial(&id, 400).is_finite());
    }

    #[test]
    fn classification_and_constants() {
        assert_eq!(RateFunction::identity().kind(), RateKind::LinearGrowth);
        assert_eq!(RateFunction::constant(3.0).kind(), RateKind::ConstantRate(3.0));
        let t = RateFunction::table(vec![0.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(t.kind(), RateKind::LinearGrowth);
        assert_eq!(t.eval(5), 6.0);
        assert_eq!(t.lipschitz_bound(), 2.0);
        assert_eq!(t.linear_lower(), 1.0);
        t.validate(1000).unwrap();
        let bounded = RateFunction::table(vec![0.0, 1.0, 2.0], 0.0).unwrap();
        assert_eq!(bounded.kind(), RateKind::Custom);
        assert_eq!(bounded.convergence_radius(), Some(2.0));
    }

    #[test]
    fn rejects_degenerate_tables() {
        assert!(RateFunction::table(vec![1.0, 2.0], 1.0).is_err());
        assert!(RateFunction::table(vec![0.0, 0.0, 1.0], 1.0).is_err());
        assert!(RateFunction::table(vec![0.0], 1.0).is_err());
        assert!(RateFunction::new(RateShape::Linear { slope: 0.0 }).is_err());
    }
}
