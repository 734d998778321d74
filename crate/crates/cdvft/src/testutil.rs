//! Brute-force oracles shared by unit tests. Kept independent of the FFT
//! path: everything here is direct O(n^2) summation over the definition.

use num_complex::Complex64;

/// O(n^2) DFT straight from the definition (forward, no normalization).
pub fn naive_dft(v: &[f64]) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|p| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (q, &x) in v.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (p as f64) * (q as f64) / n as f64;
                acc += x * Complex64::new(angle.cos(), angle.sin());
            }
            acc
        })
        .collect()
}

/// O(n^2) inverse DFT with 1/n normalization.
pub fn naive_idft(v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|p| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (q, &x) in v.iter().enumerate() {
                let angle = 2.0 * std::f64::consts::PI * (p as f64) * (q as f64) / n as f64;
                acc += x * Complex64::new(angle.cos(), angle.sin());
            }
            acc / n as f64
        })
        .collect()
}

pub fn assert_close_complex(got: &[Complex64], want: &[Complex64], tol: f64) {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!(
            (g - w).norm() <= tol * scale,
            "index {i}: {g} vs {w} (tol {tol}, scale {scale})"
        );
    }
}

pub fn assert_close_real(got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().map(|x| x.abs()).fold(1.0f64, f64::max);
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!(
            (g - w).abs() <= tol * scale,
            "index {i}: {g} vs {w} (tol {tol}, scale {scale})"
        );
    }
}
