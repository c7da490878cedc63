//! Log-domain arithmetic shared by the lattice code.

/// `ln(exp(a) + exp(b))` without overflow. Either side may be `-inf`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum(exp(x)))` over a slice; `-inf` for an empty slice or all `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Natural log that maps exact zero to `-inf` (no warnings, no NaN for 0).
#[inline]
pub fn ln0(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_matches_direct() {
        let a: f64 = -3.2;
        let b: f64 = -1.1;
        let direct = (a.exp() + b.exp()).ln();
        assert!((log_add(a, b) - direct).abs() < 1e-14);
        assert_eq!(log_add(f64::NEG_INFINITY, b), b);
        assert_eq!(log_add(a, f64::NEG_INFINITY), a);
    }

    #[test]
    fn log_sum_exp_handles_large_magnitudes() {
        let xs = [-1000.0, -1000.0];
        assert!((log_sum_exp(&xs) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }
}
