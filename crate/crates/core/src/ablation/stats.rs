use statrs::distribution::{ContinuousCDF, Normal};

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProportionTest {
    pub z: f64,
    /// One-sided p-value for the first proportion exceeding the second.
    pub p_greater: f64,
}

/// Pooled two-proportion z-test of `x1/n1` against `x2/n2`.
pub fn two_proportion_test(x1: usize, n1: usize, x2: usize, n2: usize) -> ProportionTest {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let p1 = x1 as f64 / n1f;
    let p2 = x2 as f64 / n2f;
    let pooled = (x1 + x2) as f64 / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = if se > 0.0 {
        (p1 - p2) / se
    } else if p1 > p2 {
        f64::INFINITY
    } else if p1 < p2 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    let normal = Normal::standard();
    ProportionTest {
        z,
        p_greater: 1.0 - normal.cdf(z),
    }
}
