//! Dense symmetric positive-definite solves for Newton steps.

/// Tiny pivots are replaced by this value, which zeroes the corresponding
/// component of the step instead of failing the factorization.
const HUGE_PIVOT: f64 = 1e64;

/// Solves `H x = rhs` in place for a symmetric positive (semi)definite `H`
/// stored row-major. `H` is symmetrically scaled to unit diagonal first and
/// then overwritten by its Cholesky factor. `scale` is scratch of length `n`.
pub(crate) fn solve_spd(h: &mut [f64], n: usize, rhs: &mut [f64], scale: &mut [f64]) {
    debug_assert_eq!(h.len(), n * n);
    for i in 0..n {
        let d = h[i * n + i];
        scale[i] = if d > 0.0 && d.is_finite() { 1.0 / d.sqrt() } else { 1.0 };
    }
    for i in 0..n {
        for j in 0..=i {
            h[i * n + j] *= scale[i] * scale[j];
        }
        rhs[i] *= scale[i];
    }

    let tiny = 1e-14;
    for j in 0..n {
        let row_j = &h[j * n..j * n + j];
        let d = h[j * n + j] - row_j.iter().map(|v| v * v).sum::<f64>();
        let d = if d > tiny { d.sqrt() } else { HUGE_PIVOT };
        h[j * n + j] = d;
        for i in j + 1..n {
            let s: f64 = h[i * n..i * n + j].iter().zip(&h[j * n..j * n + j]).map(|(a, b)| a * b).sum();
            h[i * n + j] = (h[i * n + j] - s) / d;
        }
    }

    // forward: L y = rhs
    for i in 0..n {
        let row = &h[i * n..i * n + i];
        let s: f64 = row.iter().zip(&rhs[..i]).map(|(l, y)| l * y).sum();
        rhs[i] = (rhs[i] - s) / h[i * n + i];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for k in i + 1..n {
            s -= h[k * n + i] * rhs[k];
        }
        rhs[i] = s / h[i * n + i];
    }
    for i in 0..n {
        rhs[i] *= scale[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn matches_nalgebra_on_spd_system() {
        let a = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let spd = &a * a.transpose() + DMatrix::identity(6, 6) * 0.5;
        let b: Vec<f64> = (0..6).map(|i| i as f64 - 1.5).collect();
        let expected = spd.clone().cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b.clone()));
        let mut h: Vec<f64> = (0..36).map(|k| spd[(k / 6, k % 6)]).collect();
        let mut x = b;
        let mut scratch = vec![0.0; 6];
        solve_spd(&mut h, 6, &mut x, &mut scratch);
        for i in 0..6 {
            assert!((x[i] - expected[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn badly_scaled_diagonal() {
        let mut h = vec![1e20, 0.0, 0.0, 1e-6];
        let mut x = vec![1e20, 1e-6];
        let mut s = vec![0.0; 2];
        solve_spd(&mut h, 2, &mut x, &mut s);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_direction_is_zeroed() {
        // rank one: [1 1; 1 1]
        let mut h = vec![1.0, 1.0, 1.0, 1.0];
        let mut x = vec![2.0, 2.0];
        let mut s = vec![0.0; 2];
        solve_spd(&mut h, 2, &mut x, &mut s);
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!(x[1].abs() < 1e-40);
    }
}
