//! Stacked measurement operators and the identities that turn
//! `diag(s) ⊗ I_n` products into linear functions of `s`.

use nalgebra::{DMatrix, DVector};

use super::{Gains, SynthesisError};

/// `(1_N ⊗ I_n, vec(L))` for a landmark matrix with one landmark per column.
///
/// `vec(L - x 1^T) = Lvec - Istack x`.
pub fn measurement_operator(landmarks: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (n, count) = landmarks.shape();
    let mut istack = DMatrix::zeros(n * count, n);
    for j in 0..count {
        istack.view_mut((j * n, 0), (n, n)).fill_with_identity();
    }
    let lvec = DVector::from_column_slice(landmarks.as_slice());
    (istack, lvec)
}

fn check_len(a: &[f64], n: usize, count: usize) -> Result<(), SynthesisError> {
    if a.len() != n * count {
        return Err(SynthesisError::Dimension(format!(
            "expected length {} (n = {n}, N = {count}), got {}",
            n * count,
            a.len()
        )));
    }
    Ok(())
}

/// Coefficients `c` with `a · (diag(s) ⊗ I_n) · v = s^T c`.
pub fn s_coeff_vec(a: &[f64], v: &[f64], n: usize, count: usize) -> Result<Vec<f64>, SynthesisError> {
    check_len(a, n, count)?;
    check_len(v, n, count)?;
    Ok((0..count)
        .map(|j| (0..n).map(|t| a[j * n + t] * v[j * n + t]).sum())
        .collect())
}

/// Coefficients `c` with `(a · (diag(s) ⊗ I_n) · Istack)[col] = s^T c`.
/// `col` is zero-based.
pub fn s_coeff_unit(a: &[f64], col: usize, n: usize, count: usize) -> Result<Vec<f64>, SynthesisError> {
    check_len(a, n, count)?;
    if col >= n {
        return Err(SynthesisError::Dimension(format!(
            "column {col} out of range for n = {n}"
        )));
    }
    Ok((0..count).map(|j| a[j * n + col]).collect())
}

/// `K' = K (diag(s_min) ⊗ I_n)`, `k' = k`.
pub fn rescale_gains(gains: &Gains, s_min: &[f64]) -> Result<Gains, SynthesisError> {
    let cols = gains.feedback.ncols();
    if s_min.is_empty() || !cols.is_multiple_of(s_min.len()) {
        return Err(SynthesisError::Dimension(format!(
            "{} scale entries do not divide {cols} feedback columns",
            s_min.len()
        )));
    }
    if let Some(bad) = s_min.iter().find(|s| s.is_nan() || **s <= 0.0) {
        return Err(SynthesisError::Config(format!("scale bound {bad} is not positive")));
    }
    let n = cols / s_min.len();
    let mut feedback = gains.feedback.clone();
    for (c, mut col) in feedback.column_iter_mut().enumerate() {
        col *= s_min[c / n];
    }
    Ok(Gains {
        feedback,
        offset: gains.offset.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Explicit `diag(s) ⊗ I_n`.
    fn kron_scale(s: &[f64], n: usize) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(s.len() * n, s.len() * n);
        for (j, sj) in s.iter().enumerate() {
            for t in 0..n {
                d[(j * n + t, j * n + t)] = *sj;
            }
        }
        d
    }

    #[test]
    fn operator_example() {
        let l = DMatrix::from_column_slice(2, 2, &[4.0, 0.0, 0.0, 3.0]);
        let (istack, lvec) = measurement_operator(&l);
        assert_eq!(lvec.as_slice(), &[4.0, 0.0, 0.0, 3.0]);
        assert_eq!(
            istack,
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0])
        );
        let x = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!((lvec - istack * x).as_slice(), &[3.0, -1.0, -1.0, 2.0]);
    }

    #[test]
    fn single_landmark_operator_is_identity() {
        let l = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let (istack, _) = measurement_operator(&l);
        assert_eq!(istack, DMatrix::identity(3, 3));
    }

    #[test]
    fn coeff_vec_example() {
        let c = s_coeff_vec(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0], 2, 2).unwrap();
        assert_eq!(c, vec![17.0, 53.0]);
        let z = s_coeff_vec(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4], 2, 2).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        assert!(s_coeff_vec(&[1.0; 3], &[1.0; 4], 2, 2).is_err());
    }

    #[test]
    fn coeff_unit_examples() {
        assert_eq!(s_coeff_unit(&[1.0, 2.0, 3.0, 4.0], 1, 2, 2).unwrap(), vec![2.0, 4.0]);
        assert_eq!(s_coeff_unit(&[1.0, 0.0, 0.0, 0.0], 0, 2, 2).unwrap(), vec![1.0, 0.0]);
        assert!(s_coeff_unit(&[1.0; 4], 2, 2, 2).is_err());
    }

    #[test]
    fn coeff_identities_match_explicit_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let n = 1 + trial % 3;
            let count = 1 + trial % 4;
            let d = n * count;
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s: Vec<f64> = (0..count).map(|_| rng.random_range(0.2..3.0)).collect();
            let ds = kron_scale(&s, n);
            let row = DMatrix::from_row_slice(1, d, &a);
            let direct = (&row * &ds * DVector::from_column_slice(&v))[0];
            let c = s_coeff_vec(&a, &v, n, count).unwrap();
            let via: f64 = s.iter().zip(&c).map(|(x, y)| x * y).sum();
            assert!((direct - via).abs() <= 1e-12 * (1.0 + direct.abs()));

            let l = DMatrix::from_fn(n, count, |_, _| 0.0);
            let (istack, _) = measurement_operator(&l);
            let prod = &row * &ds * &istack;
            for col in 0..n {
                let c = s_coeff_unit(&a, col, n, count).unwrap();
                let via: f64 = s.iter().zip(&c).map(|(x, y)| x * y).sum();
                assert!((prod[(0, col)] - via).abs() <= 1e-12 * (1.0 + via.abs()));
            }
        }
    }

    fn sample_gains() -> Gains {
        Gains {
            feedback: DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.25, 2.0]),
            offset: DVector::from_vec(vec![0.3, -0.7]),
        }
    }

    #[test]
    fn rescale_identity_and_scalar_cases() {
        let g = sample_gains();
        assert_eq!(rescale_gains(&g, &[1.0, 1.0]).unwrap(), g);
        let scalar = Gains {
            feedback: DMatrix::from_element(1, 1, 2.0),
            offset: DVector::from_element(1, 0.0),
        };
        let r = rescale_gains(&scalar, &[0.5]).unwrap();
        assert_eq!(r.feedback[(0, 0)], 1.0);
    }

    #[test]
    fn rescale_round_trip() {
        let g = sample_gains();
        let s = [0.6, 1.7];
        let inv: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
        let back = rescale_gains(&rescale_gains(&g, &s).unwrap(), &inv).unwrap();
        assert!((back.feedback - &g.feedback).abs().max() <= 1e-12);
        assert_eq!(back.offset, g.offset);
    }

    #[test]
    fn rescale_preserves_control() {
        // K' applied to s' = s / s_min reproduces K applied to s.
        let g = sample_gains();
        let s_min = [0.5, 0.8];
        let s = [0.9, 1.3];
        let y0 = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let kp = rescale_gains(&g, &s_min).unwrap();
        let sp: Vec<f64> = s.iter().zip(&s_min).map(|(a, b)| a / b).collect();
        let u = &g.feedback * (kron_scale(&s, 2) * &y0);
        let up = &kp.feedback * (kron_scale(&sp, 2) * &y0);
        assert!((u - up).norm() <= 1e-12);
    }

    #[test]
    fn rescale_rejects_nonpositive() {
        assert!(rescale_gains(&sample_gains(), &[1.0, 0.0]).is_err());
        assert!(rescale_gains(&sample_gains(), &[1.0, -1.0]).is_err());
    }
}
