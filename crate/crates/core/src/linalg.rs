//! Small dense helpers on top of nalgebra.

use nalgebra::DMatrix;

/// `Mⁿ` by repeated squaring.
pub fn matrix_power(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let d = m.nrows();
    let mut result = DMatrix::identity(d, d);
    let mut base = m.clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Returns `(Σ_{k<n} Mᵏ, Mⁿ)` in `O(log n)` products.
///
/// Uses `S_{2k} = S_k + Mᵏ S_k` and `S_{k+1} = I + M S_k`.
pub fn geometric_sum(m: &DMatrix<f64>, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = m.nrows();
    if n == 0 {
        return (DMatrix::zeros(d, d), DMatrix::identity(d, d));
    }
    let top = usize::BITS - 1 - n.leading_zeros();
    // Invariant: (s, p) = (S_k, Mᵏ) with k the prefix of n's bits seen so far.
    let mut s = DMatrix::identity(d, d);
    let mut p = m.clone();
    for bit in (0..top).rev() {
        s = &s + &p * &s;
        p = &p * &p;
        if (n >> bit) & 1 == 1 {
            s = DMatrix::identity(d, d) + m * &s;
            p = m * &p;
        }
    }
    (s, p)
}

/// Relative Frobenius distance `‖a − b‖ / max(‖b‖, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_sum(m: &DMatrix<f64>, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = m.nrows();
        let mut s = DMatrix::zeros(d, d);
        let mut p = DMatrix::identity(d, d);
        for _ in 0..n {
            s += &p;
            p = &p * m;
        }
        (s, p)
    }

    #[test]
    fn power_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, -0.5]));
        let p = matrix_power(&m, 10);
        assert_eq!(p[(0, 0)], 1024.0);
        assert_eq!(p[(1, 1)], 0.5f64.powi(10));
        assert_eq!(matrix_power(&m, 0), DMatrix::identity(2, 2));
    }

    proptest! {
        #[test]
        fn doubling_matches_naive(entries in proptest::collection::vec(-0.6f64..0.6, 9), n in 0usize..40) {
            let m = DMatrix::from_vec(3, 3, entries);
            let (s, p) = geometric_sum(&m, n);
            let (s0, p0) = naive_sum(&m, n);
            prop_assert!((&s - &s0).amax() <= 1e-10 * (1.0 + s0.amax()));
            prop_assert!((&p - &p0).amax() <= 1e-10 * (1.0 + p0.amax()));
            prop_assert!((matrix_power(&m, n) - p0).amax() <= 1e-10 * (1.0 + p.amax()));
        }
    }
}
