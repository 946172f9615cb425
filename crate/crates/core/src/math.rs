//! Scalar helpers shared by the box measure and the losses.

/// Below this argument `ln(softplus(x))` is evaluated through its asymptotic
/// expansion `x - e^x / 2`; `softplus` itself would underflow near -745.
const LN_SOFTPLUS_TAIL: f64 = -30.0;

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(softplus(x))`, finite for every finite `x`.
#[inline]
pub fn ln_softplus(x: f64) -> f64 {
    if x < LN_SOFTPLUS_TAIL {
        x - 0.5 * x.exp()
    } else {
        softplus(x).ln()
    }
}

/// Derivative of [`ln_softplus`]: `logistic(x) / softplus(x)`.
#[inline]
pub fn d_ln_softplus(x: f64) -> f64 {
    if x < LN_SOFTPLUS_TAIL {
        1.0 - 0.5 * x.exp()
    } else {
        logistic(x) / softplus(x)
    }
}

/// Numerically stable `ln(sum(exp(xs)))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}
