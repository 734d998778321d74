//! Factor primitives: diagonal and (block-)circulant linear operators.
//!
//! Each factor exposes a forward matvec plus analytic gradients with respect
//! to both its generator vector and its input. Circulant matvecs never
//! materialize the matrix: they go through the spectral route
//! `ifft(fft(c) . fft(x))`, and the backward pass reuses forward spectra via
//! the conjugation identity instead of transforming shifted copies.
//!
//! Generator spectra are cached write-once per parameter value; any
//! parameter update drops the cache. Within one forward/backward episode the
//! input spectrum is handed back to the caller so the backward step can
//! reuse it (1 FFT + 2 IFFT per circulant instead of 2 + 2).

use num_complex::Complex64;
use std::sync::OnceLock;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::fft;
use crate::tally;

/// Gradients produced by one factor's backward step.
///
/// `d_params` matches the factor's parameter vector: the diagonal vector, the
/// circulant generator, or the row-major concatenation of a block grid.
#[derive(Debug, Clone)]
pub struct FactorGradients {
    pub d_params: Vec<f64>,
    pub d_input: Vec<f64>,
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidInput(format!("{name} must be non-empty")));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{name} has non-finite entry at index {i}"
        )));
    }
    Ok(())
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what}: expected {want}, got {got}")));
    }
    Ok(())
}

pub(crate) fn zero_extend(v: &[f64], n: usize) -> Vec<f64> {
    debug_assert!(n >= v.len());
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(v);
    out.resize(n, 0.0);
    out
}

fn strict_real(v: &[Complex64]) -> Result<Vec<f64>> {
    fft::real_part_strict(v, fft::residue_tolerance(v))
}

// ---------------------------------------------------------------------------
// Diagonal
// ---------------------------------------------------------------------------

/// `diag(a)`: the matvec is the element-wise product `a . x`.
#[derive(Debug, Clone)]
pub struct DiagonalFactor {
    a: Vec<f64>,
}

impl DiagonalFactor {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        check_finite("diagonal vector", &a)?;
        Ok(DiagonalFactor { a })
    }

    pub fn ones(dim: usize) -> Self {
        DiagonalFactor { a: vec![1.0; dim] }
    }

    pub fn zeros(dim: usize) -> Self {
        DiagonalFactor { a: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.a
    }

    pub fn set_params(&mut self, a: Vec<f64>) -> Result<()> {
        check_finite("diagonal vector", &a)?;
        check_len("diagonal update", a.len(), self.a.len())?;
        self.a = a;
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("diagonal input", x.len(), self.a.len())?;
        tally::record_real_mul(self.a.len() as u64);
        Ok(self.a.iter().zip(x).map(|(a, b)| a * b).collect())
    }

    /// `d_params = d_out . x`, `d_input = d_out . a`.
    pub fn backward(&self, x: &[f64], d_out: &[f64]) -> Result<FactorGradients> {
        check_len("diagonal input", x.len(), self.a.len())?;
        check_len("diagonal output gradient", d_out.len(), self.a.len())?;
        tally::record_real_mul(2 * self.a.len() as u64);
        Ok(FactorGradients {
            d_params: d_out.iter().zip(x).map(|(g, b)| g * b).collect(),
            d_input: d_out.iter().zip(&self.a).map(|(g, a)| g * a).collect(),
        })
    }

    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let d = self.a.len();
        let mut m = DenseMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = self.a[i];
        }
        m
    }
}

// ---------------------------------------------------------------------------
// Circulant
// ---------------------------------------------------------------------------

/// `circ(c)`: first column is `c`, every later column a cyclic shift of it.
/// The matvec is a circular convolution, computed spectrally.
#[derive(Debug, Clone)]
pub struct CirculantFactor {
    c: Vec<f64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl CirculantFactor {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        check_finite("circulant generator", &c)?;
        Ok(CirculantFactor {
            c,
            spectrum: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.c
    }

    pub fn set_params(&mut self, c: Vec<f64>) -> Result<()> {
        check_finite("circulant generator", &c)?;
        check_len("circulant update", c.len(), self.c.len())?;
        self.c = c;
        self.spectrum = OnceLock::new();
        Ok(())
    }

    /// Cached `fft(c)`. Cold on first use after construction or update.
    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum
            .get_or_init(|| fft::fft_real(&self.c).expect("generator validated finite"))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_with_spectrum(x)?.0)
    }

    /// Forward matvec, also returning `fft(x)` for reuse in the backward
    /// step of the same episode.
    pub fn forward_with_spectrum(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Complex64>)> {
        check_len("circulant input", x.len(), self.c.len())?;
        let f_c = self.spectrum().to_vec();
        let f_x = fft::fft_real(x)?;
        let prod = fft::hadamard(&f_c, &f_x);
        let y = strict_real(&fft::ifft(&prod)?)?;
        Ok((y, f_x))
    }

    /// Backward step recomputing the input spectrum (2 FFT + 2 IFFT).
    pub fn backward(&self, x: &[f64], d_out: &[f64]) -> Result<FactorGradients> {
        check_len("circulant input", x.len(), self.c.len())?;
        let f_x = fft::fft_real(x)?;
        self.backward_with_spectrum(&f_x, d_out)
    }

    /// Backward step reusing `fft(x)` from the forward pass (1 FFT + 2 IFFT):
    /// `d_input = ifft(conj(fft(c)) . fft(g))`,
    /// `d_params = ifft(conj(fft(x)) . fft(g))`.
    pub fn backward_with_spectrum(
        &self,
        f_input: &[Complex64],
        d_out: &[f64],
    ) -> Result<FactorGradients> {
        let p = self.c.len();
        check_len("circulant input spectrum", f_input.len(), p)?;
        check_len("circulant output gradient", d_out.len(), p)?;
        let f_y = fft::fft_real(d_out)?;
        let d_input = strict_real(&fft::ifft(&fft::conj_hadamard(self.spectrum(), &f_y))?)?;
        let d_params = strict_real(&fft::ifft(&fft::conj_hadamard(f_input, &f_y))?)?;
        Ok(FactorGradients { d_params, d_input })
    }

    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let p = self.c.len();
        DenseMatrix::from_fn(p, p, |i, j| self.c[(i + p - j) % p])
    }
}

// ---------------------------------------------------------------------------
// Block circulant
// ---------------------------------------------------------------------------

/// Non-square operator tiled into a `q1 x q2` grid of `p x p` circulant
/// blocks. Inputs are zero-extended to `q2*p`, outputs truncated to `d_out`.
/// Generator entries whose rows or columns fall entirely in the truncated
/// region stay trainable but never influence the output.
#[derive(Debug, Clone)]
pub struct BlockCirculantFactor {
    /// Row-major grid of generators, `blocks[i * q2 + j]`, each of length `p`.
    blocks: Vec<Vec<f64>>,
    p: usize,
    d_out: usize,
    d_in: usize,
    q1: usize,
    q2: usize,
    spectra: OnceLock<Vec<Vec<Complex64>>>,
}

impl BlockCirculantFactor {
    pub fn new(d_out: usize, d_in: usize, p: usize, blocks: Vec<Vec<f64>>) -> Result<Self> {
        if d_out == 0 || d_in == 0 || p == 0 {
            return Err(Error::Config(
                "block circulant dimensions must be positive".into(),
            ));
        }
        let q1 = d_out.div_ceil(p);
        let q2 = d_in.div_ceil(p);
        if blocks.len() != q1 * q2 {
            return Err(Error::Shape(format!(
                "block grid: expected {}x{} = {} generators, got {}",
                q1,
                q2,
                q1 * q2,
                blocks.len()
            )));
        }
        for (k, b) in blocks.iter().enumerate() {
            check_finite("block generator", b)?;
            check_len("block generator length", b.len(), p)?;
            let _ = k;
        }
        Ok(BlockCirculantFactor {
            blocks,
            p,
            d_out,
            d_in,
            q1,
            q2,
            spectra: OnceLock::new(),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d_out, self.d_in)
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.q1, self.q2)
    }

    pub fn block_size(&self) -> usize {
        self.p
    }

    /// Row-major concatenation of all block generators.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.q1 * self.q2 * self.p);
        for b in &self.blocks {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.q1 * self.q2 * self.p
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_len("block parameter update", flat.len(), self.param_count())?;
        check_finite("block parameter update", flat)?;
        for (b, chunk) in self.blocks.iter_mut().zip(flat.chunks_exact(self.p)) {
            b.copy_from_slice(chunk);
        }
        self.spectra = OnceLock::new();
        Ok(())
    }

    fn spectra(&self) -> &[Vec<Complex64>] {
        self.spectra.get_or_init(|| {
            self.blocks
                .iter()
                .map(|b| fft::fft_real(b).expect("generator validated finite"))
                .collect()
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_with_spectra(x)?.0)
    }

    /// Forward matvec, also returning the per-block input spectra
    /// `fft(x_j)` for reuse in the backward step.
    ///
    /// Per output row i the spectral accumulation is hoisted through a
    /// single inverse transform: `h_i = ifft(sum_j fft(c_ij) . fft(x_j))`.
    pub fn forward_with_spectra(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
        check_len("block circulant input", x.len(), self.d_in)?;
        let x_pad = zero_extend(x, self.q2 * self.p);
        let f_x: Vec<Vec<Complex64>> = x_pad
            .chunks_exact(self.p)
            .map(fft::fft_real)
            .collect::<Result<_>>()?;
        let spectra = self.spectra();

        let mut out = Vec::with_capacity(self.q1 * self.p);
        for i in 0..self.q1 {
            let mut acc = fft::hadamard(&spectra[i * self.q2], &f_x[0]);
            for j in 1..self.q2 {
                let term = fft::hadamard(&spectra[i * self.q2 + j], &f_x[j]);
                fft::accumulate(&mut acc, &term);
            }
            out.extend(strict_real(&fft::ifft(&acc)?)?);
        }
        out.truncate(self.d_out);
        Ok((out, f_x))
    }

    /// Backward step recomputing input spectra.
    pub fn backward(&self, x: &[f64], d_out: &[f64]) -> Result<FactorGradients> {
        check_len("block circulant input", x.len(), self.d_in)?;
        let x_pad = zero_extend(x, self.q2 * self.p);
        let f_x: Vec<Vec<Complex64>> = x_pad
            .chunks_exact(self.p)
            .map(fft::fft_real)
            .collect::<Result<_>>()?;
        self.backward_with_spectra(&f_x, d_out)
    }

    /// Backward step reusing forward input spectra. The output gradient is
    /// zero-extended to `q1*p`, and per block
    /// `d_c_ij = ifft(conj(fft(x_j)) . fft(g_i))`,
    /// `d_x_j = ifft(sum_i conj(fft(c_ij)) . fft(g_i))` truncated to `d_in`.
    pub fn backward_with_spectra(
        &self,
        f_input: &[Vec<Complex64>],
        d_out: &[f64],
    ) -> Result<FactorGradients> {
        check_len("block input spectra", f_input.len(), self.q2)?;
        check_len("block output gradient", d_out.len(), self.d_out)?;
        let g_pad = zero_extend(d_out, self.q1 * self.p);
        let f_g: Vec<Vec<Complex64>> = g_pad
            .chunks_exact(self.p)
            .map(fft::fft_real)
            .collect::<Result<_>>()?;
        let spectra = self.spectra();

        let mut d_params = Vec::with_capacity(self.param_count());
        for i in 0..self.q1 {
            for j in 0..self.q2 {
                let spec = fft::conj_hadamard(&f_input[j], &f_g[i]);
                d_params.extend(strict_real(&fft::ifft(&spec)?)?);
            }
        }

        let mut d_input = Vec::with_capacity(self.q2 * self.p);
        for j in 0..self.q2 {
            let mut acc = fft::conj_hadamard(&spectra[j], &f_g[0]);
            for i in 1..self.q1 {
                let term = fft::conj_hadamard(&spectra[i * self.q2 + j], &f_g[i]);
                fft::accumulate(&mut acc, &term);
            }
            d_input.extend(strict_real(&fft::ifft(&acc)?)?);
        }
        d_input.truncate(self.d_in);

        Ok(FactorGradients { d_params, d_input })
    }

    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    /// The realized `d_out x d_in` operator: assembled circulant blocks,
    /// truncated at both boundaries.
    pub fn to_dense(&self) -> DenseMatrix {
        let full = self.to_dense_padded();
        full.truncate(self.d_out, self.d_in)
    }

    /// The untruncated `q1*p x q2*p` assembly.
    pub fn to_dense_padded(&self) -> DenseMatrix {
        let p = self.p;
        DenseMatrix::from_fn(self.q1 * p, self.q2 * p, |r, c| {
            let (i, bi) = (r / p, r % p);
            let (j, bj) = (c / p, c % p);
            self.blocks[i * self.q2 + j][(bi + p - bj) % p]
        })
    }
}
