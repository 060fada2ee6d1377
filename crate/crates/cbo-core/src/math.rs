//! Scalar math routed through `libm`.
//!
//! `std` float methods dispatch to the platform libm, whose results differ
//! in the last bits across OSes and libc versions. Golden-file tests compare
//! trajectories byte-for-byte, so every transcendental used anywhere in the
//! workspace goes through these wrappers instead. IEEE basic operations
//! (+, -, *, /, abs) are exactly rounded everywhere and need no wrapping.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    // Hardware sqrt on sse2/neon; exactly rounded per IEEE 754 either way.
    libm::sqrt(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    // Exponentiation by squaring, matching `f64::powi` semantics closely
    // enough for moment computations (n is small and positive here).
    let mut acc = 1.0;
    let mut base = x;
    let mut e = n.unsigned_abs();
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    if n < 0 {
        1.0 / acc
    } else {
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn powi_matches_repeated_multiplication() {
        let x = 1.72;
        assert_eq!(powi(x, 1), x);
        assert_eq!(powi(x, 2), x * x);
        assert_eq!(powi(x, 4), (x * x) * (x * x));
        assert_eq!(powi(2.0, 10), 1024.0);
        assert_eq!(powi(3.0, 0), 1.0);
        assert_eq!(powi(2.0, -2), 0.25);
    }

    #[test]
    fn wrappers_agree_with_std_to_ulps() {
        // Not bit-equality (that is the point of the wrappers), but they
        // must compute the same functions.
        for &x in &[0.1, 1.0, 2.5, 10.0] {
            assert!((exp(x) - x.exp()).abs() <= 1e-13 * x.exp());
            assert!((ln(x) - x.ln()).abs() <= 1e-13);
            assert_eq!(sqrt(x), x.sqrt());
            assert!((cos(x) - x.cos()).abs() <= 1e-13);
        }
    }
}
