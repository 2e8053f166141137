//! Closed-form eigenvalues of symmetric 3x3 matrices.

use super::KeypointError;
use nalgebra::Matrix3;

/// Eigenvalues of a symmetric 3x3 matrix, descending.
///
/// Uses the trigonometric solution of the characteristic polynomial; when the
/// cubic's discriminant is near zero (nearly repeated roots, where the closed
/// form loses digits) it falls back to cyclic Jacobi sweeps. Each eigenvalue
/// is accurate to `1e-9 * max(1, |C|)`.
///
/// Errors when the input deviates from symmetry by more than 1e-9.
pub fn eigen3_sym(c: &Matrix3<f64>) -> Result<[f64; 3], KeypointError> {
    let mut asym = 0.0f64;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        asym = asym.max((c[(i, j)] - c[(j, i)]).abs());
    }
    if asym > 1e-9 {
        return Err(KeypointError::AsymmetricInput { deviation: asym });
    }
    let m = (c + c.transpose()) * 0.5;

    // Scale to keep the cubic well-conditioned.
    let scale = m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if scale == 0.0 {
        return Ok([0.0; 3]);
    }
    let a = m / scale;

    let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
    if p1 == 0.0 {
        // Already diagonal: the diagonal is exact.
        let mut eig = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        eig.sort_unstable_by(|x, y| y.total_cmp(x));
        return Ok(eig);
    }

    let q = a.trace() / 3.0;
    let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2)
        + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = (a - Matrix3::identity() * q) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);

    // |r| -> 1 means a (nearly) repeated root: switch to the iterative path.
    let eig = if 1.0 - r.abs() < 1e-9 {
        jacobi_eigenvalues(a)
    } else {
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3 * 2.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        [e1, e2, e3]
    };

    let mut eig = [eig[0] * scale, eig[1] * scale, eig[2] * scale];
    eig.sort_unstable_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

/// Cyclic Jacobi rotations; converges quadratically for 3x3 symmetric input.
fn jacobi_eigenvalues(mut m: Matrix3<f64>) -> [f64; 3] {
    for _sweep in 0..64 {
        let off = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
        if off < 1e-34 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = m[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut j = Matrix3::identity();
            j[(p, p)] = c;
            j[(q, q)] = c;
            j[(p, q)] = s;
            j[(q, p)] = -s;
            m = j.transpose() * m * j;
            // Symmetrize away the rounding in the similarity product.
            m[(q, p)] = m[(p, q)];
        }
    }
    [m[(0, 0)], m[(1, 1)], m[(2, 2)]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_matrices_are_exact() {
        let eig = eigen3_sym(&Matrix3::from_diagonal(&Vector3::new(3.0, 2.0, 1.0))).unwrap();
        assert_eq!(eig, [3.0, 2.0, 1.0]);
        let eig = eigen3_sym(&Matrix3::from_diagonal(&Vector3::new(1.0, 3.0, 2.0))).unwrap();
        assert_eq!(eig, [3.0, 2.0, 1.0]);
        let eig = eigen3_sym(&Matrix3::identity()).unwrap();
        assert_eq!(eig, [1.0, 1.0, 1.0]);
        let eig = eigen3_sym(&Matrix3::zeros()).unwrap();
        assert_eq!(eig, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn similarity_transform_preserves_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = Matrix3::from_diagonal(&Vector3::new(5.0, 1.0, 0.2));
        for _ in 0..50 {
            let q = Rotation3::from_euler_angles(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let m = q.matrix() * d * q.matrix().transpose();
            let sym = (m + m.transpose()) * 0.5;
            let eig = eigen3_sym(&sym).unwrap();
            for (got, want) in eig.iter().zip([5.0, 1.0, 0.2]) {
                assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let mut m = Matrix3::identity();
        m[(0, 1)] = 1e-3;
        let err = eigen3_sym(&m).unwrap_err();
        assert!(matches!(err, KeypointError::AsymmetricInput { .. }));
    }

    #[test]
    fn near_degenerate_spectra_stay_accurate() {
        // Pairs of close eigenvalues exercise the Jacobi fallback.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for gap in [0.0, 1e-13, 1e-10, 1e-7] {
            for _ in 0..20 {
                let d = Vector3::new(2.0 + gap, 2.0, -1.0);
                let q = Rotation3::from_euler_angles(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                );
                let m = q.matrix() * Matrix3::from_diagonal(&d) * q.matrix().transpose();
                let sym = (m + m.transpose()) * 0.5;
                let eig = eigen3_sym(&sym).unwrap();
                assert!((eig[0] - (2.0 + gap)).abs() < 1e-9);
                assert!((eig[1] - 2.0).abs() < 1e-9);
                assert!((eig[2] + 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn trace_and_determinant_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let mut m = Matrix3::zeros();
            for i in 0..3 {
                for j in i..3 {
                    let v = rng.gen_range(-10.0..10.0);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            let eig = eigen3_sym(&m).unwrap();
            let scale = m.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
            assert!((eig.iter().sum::<f64>() - m.trace()).abs() < 1e-9 * scale);
            assert!(
                (eig[0] * eig[1] * eig[2] - m.determinant()).abs() < 1e-7 * scale.powi(3),
                "determinant mismatch"
            );
            assert!(eig[0] >= eig[1] && eig[1] >= eig[2]);
        }
    }
}
