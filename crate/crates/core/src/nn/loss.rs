use super::params::Real;

/// Probabilities are clipped to `[ε, 1-ε]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

fn clip_bounds<F: Real>() -> (F, F) {
    (F::of(PROB_EPS), F::one() - F::of(PROB_EPS))
}

/// Weighted binary cross entropy `-w z log x - (1-z) log(1-x)`.
pub fn weighted_bce<F: Real>(z: bool, x: F, w: F) -> F {
    let (lo, hi) = clip_bounds::<F>();
    let x = if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    };
    if z {
        -w * x.ln()
    } else {
        -(F::one() - x).ln()
    }
}

/// Derivative of [`weighted_bce`] with respect to the sigmoid input, given
/// the sigmoid output `x`. Zero where clipping is active.
pub fn weighted_bce_logit_grad<F: Real>(z: bool, x: F, w: F) -> F {
    let (lo, hi) = clip_bounds::<F>();
    if x < lo || x > hi {
        return F::zero();
    }
    if z {
        -w * (F::one() - x)
    } else {
        x
    }
}
