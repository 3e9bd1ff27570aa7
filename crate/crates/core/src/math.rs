//! Scalar helpers shared by every module. All probabilities that reach a
//! logit pass through [`clip_prob`] first.

use libm::{exp, log, log1p};

pub const LN_2: f64 = core::f64::consts::LN_2;
pub(crate) const LN_HALF: f64 = -LN_2;

/// Logistic sigmoid, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]. `p` must lie strictly inside (0, 1).
#[inline]
pub fn logit(p: f64) -> f64 {
    log(p) - log1p(-p)
}

/// Clamp a probability into `[eps, 1 - eps]`.
#[inline]
pub fn clip_prob(p: f64, eps: f64) -> f64 {
    p.max(eps).min(1.0 - eps)
}

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + log1p(exp(lo - hi))
}

/// `ln(sum_i e^{v_i})`; `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = values.iter().map(|v| exp(v - m)).sum();
    m + log(s)
}

/// Natural log of the probability a forecaster assigns to `target`.
#[inline]
pub fn log_prob_of(p_one: f64, target: bool) -> f64 {
    if target {
        log(p_one)
    } else {
        log1p(-p_one)
    }
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    log(x)
}

#[inline]
pub(crate) fn expf(x: f64) -> f64 {
    exp(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_prob_examples() {
        assert_eq!(clip_prob(0.5, 0.01), 0.5);
        assert_eq!(clip_prob(0.0, 0.01), 0.01);
        assert_eq!(clip_prob(0.999, 0.01), 0.99);
    }

    #[test]
    fn logit_inverts_sigmoid() {
        for &x in &[-30.0, -3.0, -0.1, 0.0, 0.7, 4.0, 10.0] {
            assert!((logit(sigmoid(x)) - x).abs() < 1e-9 * (1.0 + x.abs()));
        }
        assert!((sigmoid(4f64.ln()) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_single_element_is_exact() {
        let v = -12.345_678_9;
        assert_eq!(log_sum_exp(&[v]), v);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        let two = log_sum_exp(&[0.0, 0.0]);
        assert!((two - LN_2).abs() < 1e-15);
        assert!((log_add_exp(0.0, 0.0) - LN_2).abs() < 1e-15);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, -3.0), -3.0);
    }
}
