//! Instrumented operation counting.
//!
//! The cost model in [`crate::complexity`] predicts work in terms of abstract
//! operations: FFT/IFFT invocations by transform length, complex multiplies,
//! complex additions, and real multiplies/additions. The kernels in
//! [`crate::fft`] and [`crate::factors`] record exactly those operations into
//! a thread-local tally, so the model can be validated against execution by
//! comparing two [`OpTally`] values for equality rather than eyeballing
//! derived FLOP numbers.
//!
//! FLOP convention (applies to both predicted and measured tallies):
//! * one length-n FFT or IFFT costs `5 n log2(n)` flops,
//! * one complex multiply costs 6 flops,
//! * one complex addition costs 2 flops,
//! * one real multiply or addition costs 1 flop.
//!
//! Conjugation and data movement (padding, truncation, reordering) are free.

use std::cell::RefCell;
use std::collections::BTreeMap;

/// Counts of abstract operations, grouped the way the cost model reasons
/// about them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpTally {
    /// Forward transform invocations, keyed by transform length.
    pub fft: BTreeMap<usize, u64>,
    /// Inverse transform invocations, keyed by transform length.
    pub ifft: BTreeMap<usize, u64>,
    /// Scalar complex multiplies (element-wise spectral products).
    pub complex_mul: u64,
    /// Scalar complex additions (spectral accumulation across blocks).
    pub complex_add: u64,
    /// Scalar real multiplies (diagonal factors).
    pub real_mul: u64,
    /// Scalar real additions.
    pub real_add: u64,
}

impl OpTally {
    /// Total FLOPs under the crate-wide convention.
    ///
    /// Non-power-of-two lengths give a non-integer `5 n log2(n)`, so the
    /// total is a float; round at the presentation layer.
    pub fn flops(&self) -> f64 {
        let transforms = self
            .fft
            .iter()
            .chain(self.ifft.iter())
            .map(|(&n, &count)| count as f64 * fft_flops(n))
            .sum::<f64>();
        transforms
            + 6.0 * self.complex_mul as f64
            + 2.0 * self.complex_add as f64
            + self.real_mul as f64
            + self.real_add as f64
    }

    /// Number of forward FFT invocations across all lengths.
    pub fn fft_calls(&self) -> u64 {
        self.fft.values().sum()
    }

    /// Number of inverse FFT invocations across all lengths.
    pub fn ifft_calls(&self) -> u64 {
        self.ifft.values().sum()
    }

    pub fn add_fft(&mut self, n: usize, count: u64) {
        *self.fft.entry(n).or_insert(0) += count;
    }

    pub fn add_ifft(&mut self, n: usize, count: u64) {
        *self.ifft.entry(n).or_insert(0) += count;
    }

    /// Merge another tally into this one.
    pub fn merge(&mut self, other: &OpTally) {
        for (&n, &c) in &other.fft {
            self.add_fft(n, c);
        }
        for (&n, &c) in &other.ifft {
            self.add_ifft(n, c);
        }
        self.complex_mul += other.complex_mul;
        self.complex_add += other.complex_add;
        self.real_mul += other.real_mul;
        self.real_add += other.real_add;
    }

    /// Scale every count by an integer factor (e.g. per-layer to per-model).
    pub fn scaled(&self, k: u64) -> OpTally {
        let mut out = OpTally::default();
        for (&n, &c) in &self.fft {
            out.add_fft(n, c * k);
        }
        for (&n, &c) in &self.ifft {
            out.add_ifft(n, c * k);
        }
        out.complex_mul = self.complex_mul * k;
        out.complex_add = self.complex_add * k;
        out.real_mul = self.real_mul * k;
        out.real_add = self.real_add * k;
        out
    }
}

/// Cost of one length-n transform under the convention.
pub fn fft_flops(n: usize) -> f64 {
    if n <= 1 {
        // log2(1) = 0; a length-1 transform is a copy.
        return 0.0;
    }
    5.0 * n as f64 * (n as f64).log2()
}

thread_local! {
    static ACTIVE: RefCell<Option<OpTally>> = const { RefCell::new(None) };
}

/// Run `f` with operation counting enabled on this thread and return its
/// result together with everything recorded. Nests: an outer tally resumes
/// when the inner scope ends, and inner counts are not double-reported.
pub fn with_tally<R>(f: impl FnOnce() -> R) -> (R, OpTally) {
    let previous = ACTIVE.with(|a| a.borrow_mut().replace(OpTally::default()));
    let result = f();
    let tally = ACTIVE.with(|a| {
        let mut slot = a.borrow_mut();
        let collected = slot.take().expect("tally scope still active");
        *slot = previous;
        collected
    });
    (result, tally)
}

fn record(f: impl FnOnce(&mut OpTally)) {
    ACTIVE.with(|a| {
        if let Some(tally) = a.borrow_mut().as_mut() {
            f(tally);
        }
    });
}

pub(crate) fn record_fft(n: usize) {
    record(|t| t.add_fft(n, 1));
}

pub(crate) fn record_ifft(n: usize) {
    record(|t| t.add_ifft(n, 1));
}

pub(crate) fn record_complex_mul(count: u64) {
    record(|t| t.complex_mul += count);
}

pub(crate) fn record_complex_add(count: u64) {
    record(|t| t.complex_add += count);
}

pub(crate) fn record_real_mul(count: u64) {
    record(|t| t.real_mul += count);
}

#[allow(dead_code)]
pub(crate) fn record_real_add(count: u64) {
    record(|t| t.real_add += count);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flops_convention() {
        let mut t = OpTally::default();
        t.add_fft(8, 1);
        t.add_ifft(8, 2);
        t.complex_mul = 8;
        t.complex_add = 4;
        t.real_mul = 10;
        // 3 transforms of length 8: 3 * 5*8*3 = 360; 8 cmul = 48; 4 cadd = 8, 10 rmul.
        assert_eq!(t.flops(), 360.0 + 48.0 + 8.0 + 10.0);
    }

    #[test]
    fn length_one_transform_is_free() {
        assert_eq!(fft_flops(1), 0.0);
    }

    #[test]
    fn nested_scopes_do_not_double_count() {
        let ((), outer) = with_tally(|| {
            record_real_mul(1);
            let ((), inner) = with_tally(|| record_real_mul(5));
            assert_eq!(inner.real_mul, 5);
            record_real_mul(2);
        });
        assert_eq!(outer.real_mul, 3);
    }

    #[test]
    fn scaled_multiplies_every_field() {
        let mut t = OpTally::default();
        t.add_fft(4, 2);
        t.real_mul = 3;
        let s = t.scaled(10);
        assert_eq!(s.fft[&4], 20);
        assert_eq!(s.real_mul, 30);
    }
}
