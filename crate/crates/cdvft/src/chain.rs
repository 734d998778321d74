//! Factor chains: the interleaved diagonal/circulant product
//! `A(2m-1) * C(2m-2) * ... * C2 * A1`, applied right-to-left so the dense
//! operator is never materialized, plus its full backward pass,
//! initialization, dense reconstruction, and merging.
//!
//! Shapes: a chain maps `d_in` to `d_out`. Only the first circulant position
//! may be non-square; it is a block-circulant factor sized
//! `q1*p x q2*p` with `q1 = ceil(d_out/p)`, `q2 = ceil(d_in/p)`. Every later
//! factor is square at the working dimension `q1*p`. Inputs are
//! zero-extended to `q2*p` on entry and outputs truncated to `d_out` at the
//! end; the scale `alpha` multiplies the final output once.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::factors::{
    zero_extend, BlockCirculantFactor, CirculantFactor, DiagonalFactor, FactorGradients,
};

/// Structural description of a chain: logical dimensions, factor half-count
/// `m` (m diagonals, m-1 circulants), block size `p`, and output scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainShape {
    pub d_out: usize,
    pub d_in: usize,
    pub m: usize,
    pub p: usize,
    pub alpha: f64,
}

impl ChainShape {
    pub fn square(d: usize, m: usize, alpha: f64) -> Self {
        ChainShape {
            d_out: d,
            d_in: d,
            m,
            p: d,
            alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_out == 0 || self.d_in == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite".into()));
        }
        if self.m == 1 {
            if self.d_out != self.d_in {
                return Err(Error::Config(
                    "m = 1 leaves a single diagonal factor, which is square; d_out must equal d_in"
                        .into(),
                ));
            }
        } else {
            if self.p == 0 {
                return Err(Error::Config("block size p must be >= 1".into()));
            }
            if self.p > self.d_out.max(self.d_in) {
                return Err(Error::Config(format!(
                    "block size p = {} exceeds max(d_out, d_in) = {}",
                    self.p,
                    self.d_out.max(self.d_in)
                )));
            }
        }
        if self.m > self.d_work() {
            return Err(Error::Config(format!(
                "m = {} exceeds the working dimension {}",
                self.m,
                self.d_work()
            )));
        }
        Ok(())
    }

    pub fn q1(&self) -> usize {
        self.d_out.div_ceil(self.p)
    }

    pub fn q2(&self) -> usize {
        self.d_in.div_ceil(self.p)
    }

    /// Dimension shared by all factors after the first circulant.
    pub fn d_work(&self) -> usize {
        if self.m == 1 {
            self.d_out
        } else {
            self.q1() * self.p
        }
    }

    /// Padded input dimension (what the first diagonal operates on).
    pub fn d_pad_in(&self) -> usize {
        if self.m == 1 {
            self.d_in
        } else {
            self.q2() * self.p
        }
    }

    /// Whether the first circulant position needs the block form.
    pub fn blocked(&self) -> bool {
        self.m >= 2 && !(self.d_out == self.d_in && self.p == self.d_in)
    }

    /// Total trainable scalars.
    pub fn param_count(&self) -> usize {
        if self.m == 1 {
            return self.d_out;
        }
        let (q1, q2, p) = (self.q1(), self.q2(), self.p);
        // diagonals: one on the input side, m-1 at the working dimension;
        // circulants: the q1 x q2 block grid plus m-2 square generators.
        q2 * p + (self.m - 1) * q1 * p + q1 * q2 * p + (self.m - 2) * q1 * p
    }
}

/// First-position circulant: square or blocked.
#[derive(Debug, Clone)]
enum ChainCirculant {
    Square(CirculantFactor),
    Block(BlockCirculantFactor),
}

impl ChainCirculant {
    fn forward_with_spectra(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
        match self {
            ChainCirculant::Square(f) => {
                let (y, spec) = f.forward_with_spectrum(x)?;
                Ok((y, vec![spec]))
            }
            ChainCirculant::Block(f) => f.forward_with_spectra(x),
        }
    }

    fn backward_with_spectra(
        &self,
        f_input: &[Vec<Complex64>],
        d_out: &[f64],
    ) -> Result<FactorGradients> {
        match self {
            ChainCirculant::Square(f) => f.backward_with_spectrum(&f_input[0], d_out),
            ChainCirculant::Block(f) => f.backward_with_spectra(f_input, d_out),
        }
    }

    fn params_flat(&self) -> Vec<f64> {
        match self {
            ChainCirculant::Square(f) => f.params().to_vec(),
            ChainCirculant::Block(f) => f.params_flat(),
        }
    }

    fn param_count(&self) -> usize {
        match self {
            ChainCirculant::Square(f) => f.dim(),
            ChainCirculant::Block(f) => f.param_count(),
        }
    }

    fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        match self {
            ChainCirculant::Square(f) => f.set_params(flat.to_vec()),
            ChainCirculant::Block(f) => f.set_params_flat(flat),
        }
    }

    fn to_dense(&self) -> DenseMatrix {
        match self {
            ChainCirculant::Square(f) => f.to_dense(),
            ChainCirculant::Block(f) => f.to_dense(),
        }
    }
}

/// Everything the backward pass needs from one forward episode: the
/// intermediates `y_0 .. y_{2m-1}` and the input spectrum of every circulant
/// position. A tape is valid only until the chain's parameters change.
#[derive(Debug, Clone)]
pub struct ChainTape {
    ys: Vec<Vec<f64>>,
    input_spectra: Vec<Vec<Vec<Complex64>>>,
    version: u64,
}

impl ChainTape {
    /// Intermediate vectors `y_0 .. y_{2m-1}` (inputs to each factor, then
    /// the final pre-scale output).
    pub fn intermediates(&self) -> &[Vec<f64>] {
        &self.ys
    }
}

/// Per-factor parameter gradients plus the input gradient.
#[derive(Debug, Clone)]
pub struct ChainGradients {
    pub d_diagonals: Vec<Vec<f64>>,
    pub d_circulants: Vec<Vec<f64>>,
    pub d_input: Vec<f64>,
}

impl ChainGradients {
    /// Gradients in declared parameter order: a1, c2, a3, c4, ..., a(2m-1).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for j in 0..self.d_diagonals.len() {
            out.extend_from_slice(&self.d_diagonals[j]);
            if j < self.d_circulants.len() {
                out.extend_from_slice(&self.d_circulants[j]);
            }
        }
        out
    }

    /// Element-wise accumulation (used when folding batch columns).
    pub fn accumulate(&mut self, other: &ChainGradients) {
        for (a, b) in self.d_diagonals.iter_mut().zip(&other.d_diagonals) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.d_circulants.iter_mut().zip(&other.d_circulants) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.d_diagonals.iter_mut().chain(self.d_circulants.iter_mut()) {
            for x in v.iter_mut() {
                *x *= s;
            }
        }
        for x in self.d_input.iter_mut() {
            *x *= s;
        }
    }
}

/// The adapter: `m` diagonal factors interleaved with `m-1` circulant
/// factors, with the first circulant optionally blocked for non-square maps.
#[derive(Debug, Clone)]
pub struct FactorChain {
    shape: ChainShape,
    diagonals: Vec<DiagonalFactor>,
    circulants: Vec<ChainCirculant>,
    seed: u32,
    version: u64,
}

impl FactorChain {
    /// Deterministic initialization: the first diagonal is all-ones, interior
    /// diagonals all-ones, circulant generators zero-mean with scale
    /// `1/sqrt(p)`, and the last diagonal all-zeros so a fresh adapter is an
    /// exact no-op.
    pub fn init(shape: &ChainShape, seed: u32) -> Result<FactorChain> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);

        let m = shape.m;
        let mut diagonals = Vec::with_capacity(m);
        let mut circulants = Vec::with_capacity(m.saturating_sub(1));

        if m == 1 {
            diagonals.push(DiagonalFactor::zeros(shape.d_out));
        } else {
            let normal = Normal::new(0.0, 1.0 / (shape.p as f64).sqrt())
                .map_err(|e| Error::Config(format!("init distribution: {e}")))?;
            diagonals.push(DiagonalFactor::ones(shape.d_pad_in()));
            for j in 0..m - 1 {
                let circ = if j == 0 {
                    if shape.blocked() {
                        let (q1, q2) = (shape.q1(), shape.q2());
                        let blocks: Vec<Vec<f64>> = (0..q1 * q2)
                            .map(|_| (0..shape.p).map(|_| normal.sample(&mut rng)).collect())
                            .collect();
                        ChainCirculant::Block(BlockCirculantFactor::new(
                            shape.d_work(),
                            shape.d_pad_in(),
                            shape.p,
                            blocks,
                        )?)
                    } else {
                        let c = (0..shape.p).map(|_| normal.sample(&mut rng)).collect();
                        ChainCirculant::Square(CirculantFactor::new(c)?)
                    }
                } else {
                    let c = (0..shape.d_work())
                        .map(|_| normal.sample(&mut rng))
                        .collect();
                    ChainCirculant::Square(CirculantFactor::new(c)?)
                };
                circulants.push(circ);
                if j + 1 < m - 1 {
                    diagonals.push(DiagonalFactor::ones(shape.d_work()));
                }
            }
            diagonals.push(DiagonalFactor::zeros(shape.d_work()));
        }

        Ok(FactorChain {
            shape: *shape,
            diagonals,
            circulants,
            seed,
            version: 0,
        })
    }

    pub fn shape(&self) -> &ChainShape {
        &self.shape
    }

    pub fn alpha(&self) -> f64 {
        self.shape.alpha
    }

    pub fn seed(&self) -> u32 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.shape.param_count()
    }

    /// Parameters in declared order: a1, c2 (blocks row-major), a3, ..., a(2m-1).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for j in 0..self.diagonals.len() {
            out.extend_from_slice(self.diagonals[j].params());
            if j < self.circulants.len() {
                out.extend(self.circulants[j].params_flat());
            }
        }
        out
    }

    /// Replace every parameter. Invalidate outstanding tapes.
    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "parameter vector: expected {}, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for j in 0..self.diagonals.len() {
            let d = self.diagonals[j].dim();
            self.diagonals[j].set_params(flat[offset..offset + d].to_vec())?;
            offset += d;
            if j < self.circulants.len() {
                let c = self.circulants[j].param_count();
                self.circulants[j].set_params_flat(&flat[offset..offset + c])?;
                offset += c;
            }
        }
        self.version += 1;
        Ok(())
    }

    /// Apply `params += delta` in flat order. Invalidates outstanding tapes.
    pub fn apply_param_delta(&mut self, delta: &[f64]) -> Result<()> {
        let mut params = self.params_flat();
        if delta.len() != params.len() {
            return Err(Error::Shape(format!(
                "parameter delta: expected {}, got {}",
                params.len(),
                delta.len()
            )));
        }
        for (p, d) in params.iter_mut().zip(delta) {
            *p += d;
        }
        self.set_params_flat(&params)
    }

    /// `delta_h = alpha * (A(2m-1) (... C2 (A1 x)))`, with a tape recording
    /// every intermediate and every circulant input spectrum.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ChainTape)> {
        if x.len() != self.shape.d_in {
            return Err(Error::Shape(format!(
                "chain input: expected {}, got {}",
                self.shape.d_in,
                x.len()
            )));
        }
        let mut y = zero_extend(x, self.shape.d_pad_in());
        let mut ys = Vec::with_capacity(2 * self.shape.m);
        ys.push(y.clone());
        y = self.diagonals[0].forward(&y)?;

        let mut input_spectra = Vec::with_capacity(self.circulants.len());
        for j in 0..self.circulants.len() {
            ys.push(y.clone());
            let (next, spectra) = self.circulants[j].forward_with_spectra(&y)?;
            input_spectra.push(spectra);
            y = next;
            ys.push(y.clone());
            y = self.diagonals[j + 1].forward(&y)?;
        }
        ys.push(y.clone());

        let mut delta_h = y;
        delta_h.truncate(self.shape.d_out);
        for v in &mut delta_h {
            *v *= self.shape.alpha;
        }
        Ok((
            delta_h,
            ChainTape {
                ys,
                input_spectra,
                version: self.version,
            },
        ))
    }

    /// Forward pass without keeping the tape.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Walk the factors left to right, feeding each backward step from the
    /// tape. The incoming gradient is scaled by `alpha` once at entry.
    pub fn backward(&self, tape: &ChainTape, d_delta_h: &[f64]) -> Result<ChainGradients> {
        if tape.version != self.version {
            return Err(Error::StaleTape(
                "chain parameters changed since this tape was recorded".into(),
            ));
        }
        if d_delta_h.len() != self.shape.d_out {
            return Err(Error::Shape(format!(
                "chain output gradient: expected {}, got {}",
                self.shape.d_out,
                d_delta_h.len()
            )));
        }
        let m = self.shape.m;
        let scaled: Vec<f64> = d_delta_h.iter().map(|g| g * self.shape.alpha).collect();
        let mut g = zero_extend(&scaled, self.shape.d_work());

        let mut d_diagonals = vec![Vec::new(); m];
        let mut d_circulants = vec![Vec::new(); m.saturating_sub(1)];

        let last = self.diagonals[m - 1].backward(&tape.ys[2 * m - 2], &g)?;
        d_diagonals[m - 1] = last.d_params;
        g = last.d_input;

        for j in (0..m - 1).rev() {
            let circ = self.circulants[j].backward_with_spectra(&tape.input_spectra[j], &g)?;
            d_circulants[j] = circ.d_params;
            g = circ.d_input;

            let diag = self.diagonals[j].backward(&tape.ys[2 * j], &g)?;
            d_diagonals[j] = diag.d_params;
            g = diag.d_input;
        }

        g.truncate(self.shape.d_in);
        Ok(ChainGradients {
            d_diagonals,
            d_circulants,
            d_input: g,
        })
    }

    /// Column-wise batch forward.
    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<ChainTape>)> {
        let mut outs = Vec::with_capacity(xs.len());
        let mut tapes = Vec::with_capacity(xs.len());
        for x in xs {
            let (y, tape) = self.forward(x)?;
            outs.push(y);
            tapes.push(tape);
        }
        Ok((outs, tapes))
    }

    /// Column-wise batch backward; one gradient set per column.
    pub fn backward_batch(
        &self,
        tapes: &[ChainTape],
        d_outs: &[Vec<f64>],
    ) -> Result<Vec<ChainGradients>> {
        if tapes.len() != d_outs.len() {
            return Err(Error::Shape(format!(
                "batch backward: {} tapes vs {} gradients",
                tapes.len(),
                d_outs.len()
            )));
        }
        tapes
            .iter()
            .zip(d_outs)
            .map(|(t, g)| self.backward(t, g))
            .collect()
    }

    /// Explicitly materialize `alpha * A(2m-1) ... C2 A1` as a
    /// `d_out x d_in` matrix. Intended for small dimensions and merging.
    pub fn reconstruct_dense(&self) -> DenseMatrix {
        let mut acc = self.diagonals[0].to_dense();
        for j in 0..self.circulants.len() {
            acc = self
                .circulants[j]
                .to_dense()
                .matmul(&acc)
                .expect("chain factor dims are consistent");
            acc = self.diagonals[j + 1]
                .to_dense()
                .matmul(&acc)
                .expect("chain factor dims are consistent");
        }
        acc.truncate(self.shape.d_out, self.shape.d_in)
            .scale(self.shape.alpha)
    }
}

/// `h' = W x + delta_h`.
pub fn adapter_apply(w: &DenseMatrix, chain: &FactorChain, x: &[f64]) -> Result<Vec<f64>> {
    if w.rows() != chain.shape().d_out || w.cols() != chain.shape().d_in {
        return Err(Error::Shape(format!(
            "adapter_apply: weights are {}x{}, chain maps {} -> {}",
            w.rows(),
            w.cols(),
            chain.shape().d_in,
            chain.shape().d_out
        )));
    }
    let base = w.matvec(x)?;
    let delta = chain.apply(x)?;
    Ok(base.iter().zip(&delta).map(|(a, b)| a + b).collect())
}

/// Fold the trained chain into the base weights.
pub fn merge(w: &DenseMatrix, chain: &FactorChain) -> Result<DenseMatrix> {
    if w.rows() != chain.shape().d_out || w.cols() != chain.shape().d_in {
        return Err(Error::Shape(format!(
            "merge: weights are {}x{}, chain maps {} -> {}",
            w.rows(),
            w.cols(),
            chain.shape().d_in,
            chain.shape().d_out
        )));
    }
    w.add(&chain.reconstruct_dense())
}
