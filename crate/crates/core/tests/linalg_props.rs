use freqmpc::linalg::{
    cholesky, householder_qr, kronecker, matrix_exponential, solve_discrete_lyapunov, solve_linear, DenseMatrix,
    LinalgError,
};
use proptest::prelude::*;

fn matrix(n: usize, m: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-1.0f64..1.0, n * m).prop_map(move |v| DenseMatrix::new(n, m, v).unwrap())
}

/// Random square matrix rescaled so that its 1-norm equals `radius`, which
/// bounds the spectral radius.
fn stable(n: usize, radius: f64) -> impl Strategy<Value = DenseMatrix> {
    matrix(n, n).prop_map(move |a| {
        let norm = a.norm_one();
        if norm == 0.0 {
            a
        } else {
            a.scale(radius / norm)
        }
    })
}

fn spd(n: usize) -> impl Strategy<Value = DenseMatrix> {
    matrix(n, n).prop_map(move |g| {
        let mut q = &g * &g.transpose();
        for i in 0..n {
            q[(i, i)] += 0.1;
        }
        q
    })
}

fn max_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).max_abs()
}

proptest! {
    #[test]
    fn lyapunov_residual_and_psd(
        (a, q) in (1usize..=5).prop_flat_map(|n| (stable(n, 0.95), spd(n)))
    ) {
        let x = solve_discrete_lyapunov(&a, &q).unwrap();
        let res = (&(&a * &x) * &a.transpose()).sub(&x).add(&q);
        prop_assert!(res.max_abs() <= 1e-10 * q.max_abs().max(1.0));
        prop_assert!(x.is_symmetric(0.0));
        prop_assert!(cholesky(&x, 1e-12 * x.max_abs().max(1.0)).is_ok());
    }

    #[test]
    fn lyapunov_matches_series(
        (a, q) in (1usize..=4).prop_flat_map(|n| (stable(n, 0.6), spd(n)))
    ) {
        // X = Σ A^k Q (Aᵀ)^k, truncated where 0.6^(2k) is negligible
        let mut term = q.clone();
        let mut sum = q.clone();
        for _ in 0..80 {
            term = &(&a * &term) * &a.transpose();
            sum = sum.add(&term);
        }
        let x = solve_discrete_lyapunov(&a, &q).unwrap();
        prop_assert!(max_diff(&x, &sum) <= 1e-10 * sum.max_abs());
    }

    #[test]
    fn expm_inverse_and_squaring(a in (1usize..=5).prop_flat_map(|n| matrix(n, n)), s in 0.1f64..3.0) {
        let a = a.scale(s);
        let n = a.rows();
        let e = matrix_exponential(&a).unwrap();
        let e_neg = matrix_exponential(&a.scale(-1.0)).unwrap();
        let scale = e.max_abs() * e_neg.max_abs();
        prop_assert!(max_diff(&(&e * &e_neg), &DenseMatrix::identity(n)) <= 1e-12 * scale.max(1.0));
        let e2 = matrix_exponential(&a.scale(2.0)).unwrap();
        prop_assert!(max_diff(&e2, &(&e * &e)) <= 1e-12 * e2.max_abs().max(1.0));
    }

    #[test]
    fn solve_linear_residual(
        (a, b) in (1usize..=6).prop_flat_map(|n| (matrix(n, n), matrix(n, 2)))
    ) {
        let n = a.rows();
        let mut a = a;
        for i in 0..n {
            a[(i, i)] += 3.0;
        }
        let x = solve_linear(&a, &b).unwrap();
        prop_assert!(max_diff(&(&a * &x), &b) <= 1e-12);
    }

    #[test]
    fn qr_reconstructs(a in (1usize..=6, 1usize..=6).prop_flat_map(|(m, n)| matrix(m, n))) {
        let (q, r) = householder_qr(&a);
        let m = a.rows();
        prop_assert!(max_diff(&(&q.transpose() * &q), &DenseMatrix::identity(m)) <= 1e-13);
        prop_assert!(max_diff(&(&q * &r), &a) <= 1e-13);
        for i in 0..m {
            for j in 0..i.min(a.cols()) {
                prop_assert!(r[(i, j)].abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn kronecker_mixed_product(
        (a, b, c, d) in (1usize..=3, 1usize..=3).prop_flat_map(|(n, m)| (matrix(n, n), matrix(m, m), matrix(n, n), matrix(m, m)))
    ) {
        let lhs = &kronecker(&a, &b) * &kronecker(&c, &d);
        let rhs = kronecker(&(&a * &c), &(&b * &d));
        prop_assert!(max_diff(&lhs, &rhs) <= 1e-13);
    }
}

#[test]
fn expm_closed_forms() {
    let t = 0.7;
    // scalar
    let e = matrix_exponential(&DenseMatrix::from_diagonal(&[-2.0 * t, 0.5 * t])).unwrap();
    assert!((e[(0, 0)] - (-2.0 * t).exp()).abs() < 1e-15);
    assert!((e[(1, 1)] - (0.5 * t).exp()).abs() < 1e-15);
    // nilpotent
    let n = DenseMatrix::from_rows(&[vec![0.0, t], vec![0.0, 0.0]]).unwrap();
    let e = matrix_exponential(&n).unwrap();
    assert_eq!(e, DenseMatrix::from_rows(&[vec![1.0, t], vec![0.0, 1.0]]).unwrap());
    // rotation
    let w = 3.0;
    let rot = DenseMatrix::from_rows(&[vec![0.0, -w], vec![w, 0.0]]).unwrap();
    let e = matrix_exponential(&rot).unwrap();
    let expect = DenseMatrix::from_rows(&[vec![w.cos(), -w.sin()], vec![w.sin(), w.cos()]]).unwrap();
    assert!(max_diff(&e, &expect) < 1e-14);
    // large norm still accurate
    let e = matrix_exponential(&DenseMatrix::from_diagonal(&[-30.0])).unwrap();
    assert!((e[(0, 0)] / (-30.0f64).exp() - 1.0).abs() < 1e-13);
}

#[test]
fn lyapunov_rejects_unstable() {
    let a = DenseMatrix::from_diagonal(&[1.0]);
    assert!(matches!(
        solve_discrete_lyapunov(&a, &DenseMatrix::identity(1)),
        Err(LinalgError::UnstableSystem)
    ));
    let a = DenseMatrix::from_diagonal(&[1.5]);
    assert!(matches!(
        solve_discrete_lyapunov(&a, &DenseMatrix::identity(1)),
        Err(LinalgError::UnstableSystem)
    ));
}

#[test]
fn lyapunov_scalar_closed_form() {
    let a = 0.9;
    let x = solve_discrete_lyapunov(&DenseMatrix::from_diagonal(&[a]), &DenseMatrix::from_diagonal(&[2.0])).unwrap();
    assert!((x[(0, 0)] - 2.0 / (1.0 - a * a)).abs() < 1e-12);
}

#[test]
fn singular_system_reports_column() {
    let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
    assert!(matches!(
        solve_linear(&a, &DenseMatrix::column(&[1.0, 1.0])),
        Err(LinalgError::SingularMatrix { column: 1, .. })
    ));
}
