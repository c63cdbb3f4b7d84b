//! Bessel functions of the first kind.
//!
//! Backed by the `libm` port of the FreeBSD/musl `j0`/`j1`/`jn` routines:
//! for |x| < 2 a rational minimax approximation of the ascending series, and
//! for |x| >= 2 the Hankel asymptotic form
//! `sqrt(2/(πx)) [P(x) cos(x − 3π/4) − Q(x) sin(x − 3π/4)]` with rational
//! approximations of P and Q on the ranges [2, 2.857), [2.857, 4.545),
//! [4.545, 8) and [8, ∞). Both regions are accurate to a few ulp.

/// J₀(x).
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// J₁(x). Odd in x.
pub fn bessel_j1(x: f64) -> f64 {
    libm::j1(x)
}

/// Jₙ(x) for integer order n.
pub fn bessel_jn(n: i32, x: f64) -> f64 {
    libm::jn(n, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ascending series Σ (−1)^m (x/2)^{2m+n} / (m! (m+n)!), 40 terms.
    fn series_jn(n: u32, x: f64) -> f64 {
        let half = 0.5 * x;
        let mut term = half.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
        let mut sum = term;
        for m in 1..40u32 {
            term *= -half * half / (f64::from(m) * f64::from(m + n));
            sum += term;
        }
        sum
    }

    #[test]
    fn frozen_reference_values() {
        // Frozen from the 40-term series oracle.
        assert!((series_jn(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((series_jn(1, 10.0) - 0.043_472_746_168_861_44).abs() < 1e-12);
        assert_eq!(bessel_j1(0.0), 0.0);
        assert!((bessel_j1(1.0) - 0.440_050_585_7).abs() < 1e-10);
        assert!((bessel_j1(10.0) - 0.043_472_746_2).abs() < 1e-10);
    }

    #[test]
    fn matches_series_on_moderate_arguments() {
        let mut x = -12.0;
        while x <= 12.0 {
            for n in 0..3 {
                let got = bessel_jn(n as i32, x);
                let want = series_jn(n, x);
                assert!((got - want).abs() < 1e-11, "J{n}({x}): {got} vs {want}");
            }
            x += 0.173;
        }
    }

    #[test]
    fn derivative_identity_by_finite_differences() {
        // 2 J1'(x) = J0(x) − J2(x)
        let h = 1e-5;
        let mut x = 0.05;
        while x < 1e4 {
            let d = (bessel_j1(x + h) - bessel_j1(x - h)) / (2.0 * h);
            let rhs = 0.5 * (bessel_j0(x) - bessel_jn(2, x));
            assert!((d - rhs).abs() < 1e-6, "x = {x}: {d} vs {rhs}");
            x *= 1.37;
        }
    }

    #[test]
    fn large_argument_asymptotics() {
        // Leading Hankel terms with the first correction; error O(x^{-5/2}).
        for &x in &[500.0, 2_000.0, 9_999.0] {
            let phase = x - 0.75 * std::f64::consts::PI;
            let amp = (2.0 / (std::f64::consts::PI * x)).sqrt();
            let p = 1.0 + 15.0 / (128.0 * x * x);
            let q = 3.0 / (8.0 * x);
            let want = amp * (p * phase.cos() - q * phase.sin());
            assert!((bessel_j1(x) - want).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn odd_symmetry() {
        for &x in &[0.3, 2.5, 7.9, 123.4] {
            assert_eq!(bessel_j1(-x), -bessel_j1(x));
        }
    }
}
