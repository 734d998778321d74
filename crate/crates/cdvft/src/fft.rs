//! Length-n discrete Fourier transforms and the symmetry identities the
//! backward pass relies on.
//!
//! Conventions are fixed crate-wide:
//! * forward: `X[p] = sum_q x[q] * exp(-i 2 pi p q / n)` (no normalization),
//! * inverse: `x[p] = (1/n) * sum_q X[q] * exp(+i 2 pi p q / n)`.
//!
//! Transform lengths are arbitrary (`n >= 1`), not just powers of two;
//! the planner falls back to mixed-radix / Bluestein internally. All math is
//! in `f64`. Plans are cached per length behind a lock, so transforms are
//! safe to run from multiple threads.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tally;

enum Direction {
    Forward,
    Inverse,
}

struct PlanCache {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<PlanCache>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        Mutex::new(PlanCache {
            planner: FftPlanner::new(),
            forward: HashMap::new(),
            inverse: HashMap::new(),
        })
    });
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let PlanCache {
        planner,
        forward,
        inverse,
    } = &mut *guard;
    match dir {
        Direction::Forward => forward
            .entry(n)
            .or_insert_with(|| planner.plan_fft_forward(n))
            .clone(),
        Direction::Inverse => inverse
            .entry(n)
            .or_insert_with(|| planner.plan_fft_inverse(n))
            .clone(),
    }
}

fn check_nonempty(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("transform length must be >= 1".into()));
    }
    Ok(())
}

fn check_finite_real(v: &[f64]) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite entry {} at index {i}",
            v[i]
        )));
    }
    Ok(())
}

fn check_finite_complex(v: &[Complex64]) -> Result<()> {
    if let Some(i) = v
        .iter()
        .position(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::InvalidInput(format!(
            "non-finite entry {} at index {i}",
            v[i]
        )));
    }
    Ok(())
}

fn run(mut buf: Vec<Complex64>, dir: Direction) -> Vec<Complex64> {
    let n = buf.len();
    match dir {
        Direction::Forward => {
            tally::record_fft(n);
            plan(n, Direction::Forward).process(&mut buf);
        }
        Direction::Inverse => {
            tally::record_ifft(n);
            plan(n, Direction::Inverse).process(&mut buf);
            let scale = 1.0 / n as f64;
            for z in &mut buf {
                *z *= scale;
            }
        }
    }
    buf
}

/// Forward transform of a complex vector.
pub fn fft(v: &[Complex64]) -> Result<Vec<Complex64>> {
    check_nonempty(v.len())?;
    check_finite_complex(v)?;
    Ok(run(v.to_vec(), Direction::Forward))
}

/// Forward transform of a real vector.
pub fn fft_real(v: &[f64]) -> Result<Vec<Complex64>> {
    check_nonempty(v.len())?;
    check_finite_real(v)?;
    let buf = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Ok(run(buf, Direction::Forward))
}

/// Inverse transform, scaled by 1/n.
pub fn ifft(v: &[Complex64]) -> Result<Vec<Complex64>> {
    check_nonempty(v.len())?;
    check_finite_complex(v)?;
    Ok(run(v.to_vec(), Direction::Inverse))
}

/// Extract real parts, asserting the imaginary residue stays below `tol`.
///
/// Chain intermediates are mathematically real (real inputs, real
/// generators), so residue above tolerance means a kernel bug rather than
/// legitimate data, and is reported as corruption.
pub fn real_part_strict(v: &[Complex64], tol: f64) -> Result<Vec<f64>> {
    let mut worst = 0.0f64;
    let mut worst_idx = 0usize;
    for (i, z) in v.iter().enumerate() {
        let im = z.im.abs();
        if im > worst {
            worst = im;
            worst_idx = i;
        }
    }
    if worst > tol {
        return Err(Error::NumericalCorruption(format!(
            "imaginary residue {worst:.3e} at index {worst_idx} exceeds tolerance {tol:.3e}"
        )));
    }
    Ok(v.iter().map(|z| z.re).collect())
}

/// Tolerance used by internal real-part extraction, scaled to the magnitude
/// of the vector so long convolutions with large entries do not trip it.
pub(crate) fn residue_tolerance(v: &[Complex64]) -> f64 {
    let linf = v.iter().map(|z| z.re.abs()).fold(0.0f64, f64::max);
    1e-9 * (1.0 + linf)
}

/// Reindex `(0, 1, ..., n-1)` to `(0, n-1, ..., 1)`.
///
/// For real `v` this realizes the time-reversal identity
/// `fft(time_reverse(v)) = conj(fft(v))`, which is what lets the backward
/// pass reuse forward spectra instead of transforming shifted copies.
pub fn time_reverse(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(v[0]);
    out.extend(v[1..].iter().rev());
    out
}

/// Element-wise product of two spectra. Records one complex multiply per
/// element.
pub(crate) fn hadamard(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    debug_assert_eq!(a.len(), b.len());
    tally::record_complex_mul(a.len() as u64);
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// Element-wise `conj(a) * b`. Conjugation is free under the convention.
pub(crate) fn conj_hadamard(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    debug_assert_eq!(a.len(), b.len());
    tally::record_complex_mul(a.len() as u64);
    a.iter().zip(b).map(|(x, y)| x.conj() * y).collect()
}

/// `acc += v`, recording one complex addition per element.
pub(crate) fn accumulate(acc: &mut [Complex64], v: &[Complex64]) {
    debug_assert_eq!(acc.len(), v.len());
    tally::record_complex_add(acc.len() as u64);
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_close_complex, naive_dft, naive_idft};
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn impulse_transforms_to_ones() {
        let out = fft_real(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        for z in out {
            assert!((z - c(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_transforms_to_scaled_impulse() {
        let out = fft_real(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((out[0] - c(4.0, 0.0)).norm() < 1e-12);
        for z in &out[1..] {
            assert!(z.norm() < 1e-12);
        }
    }

    #[test]
    fn ramp_matches_brute_force_values() {
        // Expected values computed with the O(n^2) DFT sum.
        let out = fft_real(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let expected = [c(6.0, 0.0), c(-2.0, 2.0), c(-2.0, 0.0), c(-2.0, -2.0)];
        for (got, want) in out.iter().zip(expected.iter()) {
            assert!((got - want).norm() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn ifft_of_scaled_impulse_is_constant() {
        let out = ifft(&[c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        for z in out {
            assert!((z - c(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn ifft_of_ones_is_impulse() {
        let out = ifft(&[c(1.0, 0.0); 4]).unwrap();
        assert!((out[0] - c(1.0, 0.0)).norm() < 1e-12);
        for z in &out[1..] {
            assert!(z.norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip_random_n64() {
        let mut rng = StdRng::seed_from_u64(1);
        let v: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let back = ifft(&fft_real(&v).unwrap()).unwrap();
        for (x, z) in v.iter().zip(back.iter()) {
            assert!((z.re - x).abs() <= 1e-12 && z.im.abs() <= 1e-12);
        }
    }

    #[test]
    fn round_trip_large_and_awkward_lengths() {
        let mut rng = StdRng::seed_from_u64(2);
        for n in [1usize, 2, 3, 5, 97, 251, 768, 1000, 2048, 4096] {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let back = ifft(&fft_real(&v).unwrap()).unwrap();
            let err = v
                .iter()
                .zip(back.iter())
                .map(|(x, z)| (z.re - x).abs().max(z.im.abs()))
                .fold(0.0f64, f64::max);
            assert!(err <= 1e-12, "n={n} round-trip error {err}");
        }
    }

    #[test]
    fn matches_naive_dft_up_to_256() {
        let mut rng = StdRng::seed_from_u64(3);
        for n in [1usize, 2, 3, 4, 7, 12, 16, 31, 60, 101, 128, 251, 256] {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = fft_real(&v).unwrap();
            let want = naive_dft(&v);
            assert_close_complex(&got, &want, 1e-9);

            let round = ifft(&got).unwrap();
            let direct = naive_idft(&want);
            assert_close_complex(&round, &direct, 1e-9);
        }
    }

    #[test]
    fn conjugate_symmetry_for_real_input() {
        let mut rng = StdRng::seed_from_u64(4);
        for n in [2usize, 5, 16, 33, 128] {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let spec = fft_real(&v).unwrap();
            for k in 1..n {
                assert!((spec[n - k] - spec[k].conj()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn time_reversal_conjugates_the_spectrum() {
        let mut rng = StdRng::seed_from_u64(5);
        for n in [1usize, 2, 3, 8, 17, 64, 255] {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = fft_real(&time_reverse(&v)).unwrap();
            let rhs: Vec<Complex64> = fft_real(&v).unwrap().iter().map(|z| z.conj()).collect();
            assert_close_complex(&lhs, &rhs, 1e-10);
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        assert!(matches!(
            fft_real(&[1.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            ifft(&[c(1.0, f64::INFINITY)]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(fft_real(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn real_part_strict_behaviour() {
        let ok = real_part_strict(&[c(1.0, 0.0), c(2.0, 0.0)], 1e-9).unwrap();
        assert_eq!(ok, vec![1.0, 2.0]);

        let below = real_part_strict(&[c(1.0, 1e-13)], 1e-9).unwrap();
        assert_eq!(below, vec![1.0]);

        assert!(matches!(
            real_part_strict(&[c(1.0, 0.5)], 1e-9),
            Err(Error::NumericalCorruption(_))
        ));
    }

    #[test]
    fn transforms_record_into_tally() {
        let (_, t) = tally::with_tally(|| {
            let spec = fft_real(&[1.0, 2.0, 3.0, 4.0]).unwrap();
            let _ = ifft(&spec).unwrap();
        });
        assert_eq!(t.fft[&4], 1);
        assert_eq!(t.ifft[&4], 1);
    }

    proptest! {
        #[test]
        fn linearity(n in 2usize..256, seed in 0u64..1_000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mixed: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = fft_real(&mixed).unwrap();
            let fu = fft_real(&u).unwrap();
            let fv = fft_real(&v).unwrap();
            let scale = lhs.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
            for (l, (x, y)) in lhs.iter().zip(fu.iter().zip(fv.iter())) {
                let r = a * x + b * y;
                prop_assert!((l - r).norm() / scale < 1e-10);
            }
        }

        #[test]
        fn round_trip_up_to_4096(exp in 1u32..12, seed in 0u64..1_000) {
            let n = 1usize << exp;
            let mut rng = StdRng::seed_from_u64(seed);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let back = ifft(&fft_real(&v).unwrap()).unwrap();
            for (x, z) in v.iter().zip(back.iter()) {
                prop_assert!((z.re - x).abs() <= 1e-12);
                prop_assert!(z.im.abs() <= 1e-12);
            }
        }
    }
}
