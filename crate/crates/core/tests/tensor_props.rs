use aniso_core::response::{response_fs, response_pm};
use aniso_core::tensor::{apply, frobenius, is_psd, project_orth, spectral_bounds};
use aniso_core::{ColorMatrix, ResponseParams, Tensor4};
use proptest::prelude::*;

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=3, 1usize..=3)
}

fn matrix(k: usize, d: usize, scale: f64) -> impl Strategy<Value = ColorMatrix> {
    prop::collection::vec(-1.0..1.0f64, k * d)
        .prop_map(move |v| ColorMatrix::from_vec(k, d, v.into_iter().map(|x| x * scale).collect()).unwrap())
}

fn nonzero_matrix(k: usize, d: usize) -> impl Strategy<Value = ColorMatrix> {
    matrix(k, d, 1.0).prop_filter("nonzero", |m| m.norm() > 1e-3)
}

/// Symmetric `A + Aᵀ` with entries in `[−2, 2]`.
fn symmetric(k: usize, d: usize) -> impl Strategy<Value = Tensor4> {
    let n = k * d;
    prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |a| {
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = a[i * n + j] + a[j * n + i];
            }
        }
        Tensor4::from_matrix(k, d, s).unwrap()
    })
}

/// Cyclic Jacobi rotations; returns all eigenvalues of a symmetric matrix.
fn jacobi_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (arp, arq) = (a[r * n + p], a[r * n + q]);
                    a[r * n + p] = c * arp - s * arq;
                    a[r * n + q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let (apr, aqr) = (a[p * n + r], a[q * n + r]);
                    a[p * n + r] = c * apr - s * aqr;
                    a[q * n + r] = s * apr + c * aqr;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

fn max_abs_diff(a: &ColorMatrix, b: &ColorMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_annihilates_its_direction(seed in shape().prop_flat_map(|(k, d)| nonzero_matrix(k, d))) {
        let p = project_orth(&seed).unwrap();
        let out = apply(&p, &seed).unwrap();
        prop_assert!(out.norm() <= 1e-12 * seed.norm());
    }

    #[test]
    fn projection_is_idempotent(
        (dhat, dm) in shape().prop_flat_map(|(k, d)| (nonzero_matrix(k, d), matrix(k, d, 3.0)))
    ) {
        let p = project_orth(&dhat).unwrap();
        let once = apply(&p, &dm).unwrap();
        let twice = apply(&p, &once).unwrap();
        prop_assert!(max_abs_diff(&once, &twice) <= 1e-12 * dm.norm().max(1.0));
    }

    #[test]
    fn symmetric_tensors_are_self_adjoint(
        (h, a, b) in shape().prop_flat_map(|(k, d)| (symmetric(k, d), matrix(k, d, 1.0), matrix(k, d, 1.0)))
    ) {
        let lhs = frobenius(&apply(&h, &a).unwrap(), &b).unwrap();
        let rhs = frobenius(&a, &apply(&h, &b).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * h.norm().max(1.0));
    }

    #[test]
    fn spectral_bounds_match_jacobi(h in shape().prop_filter("k*d <= 6", |(k, d)| k * d <= 6).prop_flat_map(|(k, d)| symmetric(k, d))) {
        let bounds = spectral_bounds(&h).unwrap();
        let eig = jacobi_eigenvalues(h.as_slice().to_vec(), h.dim());
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((bounds.lambda_min - lo).abs() <= 1e-8);
        prop_assert!((bounds.lambda_max - hi).abs() <= 1e-8);
    }

    #[test]
    fn responses_are_symmetric_and_psd(
        (dm, s, omega) in shape().prop_flat_map(|(k, d)| (
            matrix(k, d, 1.0),
            0.01..1.0f64,
            0.0..1.0f64,
        )),
        scale in -4.0..1.0f64,
    ) {
        let dm = dm.scale(10f64.powf(scale));
        for h in [
            response_fs(&dm, &ResponseParams::thresholded(s, omega)).unwrap(),
            response_pm(&dm, &ResponseParams::perona_malik(s, omega)).unwrap(),
        ] {
            prop_assert!(h.max_asymmetry() <= 1e-12);
            prop_assert!(is_psd(&h, omega));
        }
    }

    #[test]
    fn omega_shifts_by_identity(
        (dm, s, omega) in shape().prop_flat_map(|(k, d)| (matrix(k, d, 0.5), 0.05..1.0f64, 0.0..2.0f64))
    ) {
        for (plain, shifted) in [
            (ResponseParams::thresholded(s, 0.0), ResponseParams::thresholded(s, omega)),
            (ResponseParams::perona_malik(s, 0.0), ResponseParams::perona_malik(s, omega)),
        ] {
            let mut want = plain.evaluate(&dm);
            want.add_identity(omega);
            prop_assert_eq!(shifted.evaluate(&dm), want);
        }
    }

    #[test]
    fn thresholded_response_is_bounded(
        (dm, s, omega) in shape().prop_flat_map(|(k, d)| (matrix(k, d, 1.0), 0.01..1.0f64, 0.0..1.0f64)),
        scale in -3.0..1.0f64,
    ) {
        let h = ResponseParams::thresholded(s, omega).evaluate(&dm.scale(10f64.powf(scale)));
        let b = spectral_bounds(&h).unwrap();
        // operator norm; the Frobenius norm of 3/2·Id grows with k·d
        prop_assert!(b.lambda_max.abs().max(b.lambda_min.abs()) <= 1.5 + omega + 1.0);
    }
}
