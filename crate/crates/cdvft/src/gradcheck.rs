//! Central finite-difference gradient checking.
//!
//! The checker only ever calls forward evaluations, so it stays independent
//! of the analytic backward path it validates. Used by unit tests, the
//! trainer's verification mode, and the `gradcheck` CLI subcommand.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::chain::{ChainShape, FactorChain};
use crate::error::Result;
use crate::factors::{BlockCirculantFactor, CirculantFactor, DiagonalFactor};

/// Central differences of a scalar function at `point` with step `eps`.
pub fn central_diff<F>(f: &F, point: &[f64], eps: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut perturbed = point.to_vec();
    let mut grads = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        perturbed[i] = point[i] + eps;
        let plus = f(&perturbed);
        perturbed[i] = point[i] - eps;
        let minus = f(&perturbed);
        perturbed[i] = point[i];
        grads.push((plus - minus) / (2.0 * eps));
    }
    grads
}

/// Worst relative disagreement between analytic and numeric gradients.
///
/// Each coordinate is scored as `|a - n| / max(|a|, |n|, floor)` where the
/// floor is a small fraction of the gradient's infinity norm; coordinates
/// that are incidentally near zero are thereby held to a proportional
/// absolute standard instead of an unbounded relative one.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let inf = analytic
        .iter()
        .chain(numeric)
        .map(|x| x.abs())
        .fold(0.0f64, f64::max);
    let floor = (1e-3 * inf).max(1e-10);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0f64, f64::max)
}

/// Finite-difference step used throughout the crate.
pub const FD_STEP: f64 = 1e-6;

/// Worst relative errors per factor kind plus the full chain, as produced by
/// [`run_suite`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub diagonal: f64,
    pub circulant: f64,
    pub block: f64,
    pub chain_params: f64,
    pub chain_input: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.diagonal
            .max(self.circulant)
            .max(self.block)
            .max(self.chain_params)
            .max(self.chain_input)
    }
}

fn randv(rng: &mut StdRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn check_diagonal(rng: &mut StdRng, d: usize) -> f64 {
    let a = randv(rng, d);
    let x = randv(rng, d);
    let v = randv(rng, d);
    let f = DiagonalFactor::new(a.clone()).unwrap();
    let grads = f.backward(&x, &v).unwrap();

    let loss = |av: &[f64]| {
        let f = DiagonalFactor::new(av.to_vec()).unwrap();
        dot(&f.forward(&x).unwrap(), &v)
    };
    let err_p = max_rel_err(&grads.d_params, &central_diff(&loss, &a, FD_STEP));
    let loss_x = |xv: &[f64]| dot(&f.forward(xv).unwrap(), &v);
    let err_x = max_rel_err(&grads.d_input, &central_diff(&loss_x, &x, FD_STEP));
    err_p.max(err_x)
}

fn check_circulant(rng: &mut StdRng, p: usize) -> f64 {
    let c = randv(rng, p);
    let x = randv(rng, p);
    let v = randv(rng, p);
    let f = CirculantFactor::new(c.clone()).unwrap();
    let grads = f.backward(&x, &v).unwrap();

    let loss = |cv: &[f64]| {
        let f = CirculantFactor::new(cv.to_vec()).unwrap();
        dot(&f.forward(&x).unwrap(), &v)
    };
    let err_p = max_rel_err(&grads.d_params, &central_diff(&loss, &c, FD_STEP));
    let loss_x = |xv: &[f64]| dot(&f.forward(xv).unwrap(), &v);
    let err_x = max_rel_err(&grads.d_input, &central_diff(&loss_x, &x, FD_STEP));
    err_p.max(err_x)
}

fn check_block(rng: &mut StdRng, d_out: usize, d_in: usize, p: usize) -> f64 {
    let q = (d_out.div_ceil(p), d_in.div_ceil(p));
    let blocks: Vec<Vec<f64>> = (0..q.0 * q.1).map(|_| randv(rng, p)).collect();
    let f = BlockCirculantFactor::new(d_out, d_in, p, blocks).unwrap();
    let x = randv(rng, d_in);
    let v = randv(rng, d_out);
    let grads = f.backward(&x, &v).unwrap();

    let flat = f.params_flat();
    let loss = |pv: &[f64]| {
        let bl: Vec<Vec<f64>> = pv.chunks_exact(p).map(|c| c.to_vec()).collect();
        let f = BlockCirculantFactor::new(d_out, d_in, p, bl).unwrap();
        dot(&f.forward(&x).unwrap(), &v)
    };
    let err_p = max_rel_err(&grads.d_params, &central_diff(&loss, &flat, FD_STEP));
    let loss_x = |xv: &[f64]| dot(&f.forward(xv).unwrap(), &v);
    let err_x = max_rel_err(&grads.d_input, &central_diff(&loss_x, &x, FD_STEP));
    err_p.max(err_x)
}

/// Check every parameter gradient and the input gradient of one chain
/// against central differences of `L = v . delta_h`. Returns
/// `(worst_param_err, input_err)`.
pub fn check_chain(shape: &ChainShape, seed: u64) -> Result<(f64, f64)> {
    let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(17));
    let chain = random_chain_for_check(shape, &mut rng)?;
    let x = randv(&mut rng, shape.d_in);
    let v = randv(&mut rng, shape.d_out);

    let (_, tape) = chain.forward(&x)?;
    let grads = chain.backward(&tape, &v)?;

    let flat = chain.params_flat();
    let analytic = grads.params_flat();
    let loss = |pv: &[f64]| {
        let mut ch = chain.clone();
        ch.set_params_flat(pv).unwrap();
        dot(&ch.forward(&x).unwrap().0, &v)
    };
    let err_params = max_rel_err(&analytic, &central_diff(&loss, &flat, FD_STEP));

    let loss_x = |xv: &[f64]| dot(&chain.forward(xv).unwrap().0, &v);
    let err_input = max_rel_err(&grads.d_input, &central_diff(&loss_x, &x, FD_STEP));
    Ok((err_params, err_input))
}

/// A chain with every parameter randomized (including the normally
/// zero-initialized last diagonal) so no gradient path is trivially zero.
pub fn random_chain_for_check(shape: &ChainShape, rng: &mut StdRng) -> Result<FactorChain> {
    let mut chain = FactorChain::init(shape, 0)?;
    let n = chain.params_flat().len();
    let params: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    chain.set_params_flat(&params)?;
    Ok(chain)
}

/// Run the full finite-difference suite at the given sizes.
pub fn run_suite(d: usize, m: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut diagonal = 0.0f64;
    let mut circulant = 0.0f64;
    let mut block = 0.0f64;
    for _ in 0..4 {
        diagonal = diagonal.max(check_diagonal(&mut rng, d));
        circulant = circulant.max(check_circulant(&mut rng, d));
        let p = (d / 2).max(1);
        block = block.max(check_block(&mut rng, d + d / 3 + 1, d, p));
    }

    let square = ChainShape {
        d_out: d,
        d_in: d,
        m,
        p: d,
        alpha: 1.0,
    };
    let (mut chain_params, mut chain_input) = check_chain(&square, seed)?;
    let blocked = ChainShape {
        d_out: d + 2,
        d_in: d.div_ceil(2) * 2,
        m: m.max(2),
        p: (d / 2).max(1),
        alpha: 0.75,
    };
    let (bp, bi) = check_chain(&blocked, seed ^ 0xABCD)?;
    chain_params = chain_params.max(bp);
    chain_input = chain_input.max(bi);

    Ok(GradCheckReport {
        diagonal,
        circulant,
        block,
        chain_params,
        chain_input,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_diff_on_quadratic() {
        let f = |v: &[f64]| v[0] * v[0] + 2.0 * v[0] * v[1];
        let g = central_diff(&f, &[1.0, 2.0], 1e-6);
        assert!((g[0] - 6.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn rel_err_uses_scaled_floor() {
        // Identical vectors → zero error even with tiny entries.
        assert_eq!(max_rel_err(&[1e-14], &[1e-14]), 0.0);
        // A genuine mismatch on the dominant coordinate is caught.
        assert!(max_rel_err(&[1.0, 0.0], &[1.1, 0.0]) > 0.05);
    }

    #[test]
    fn suite_passes_at_default_tolerance() {
        let report = run_suite(12, 2, 7).unwrap();
        assert!(
            report.worst() < 1e-5,
            "gradcheck suite exceeded tolerance: {report:?}"
        );
    }
}
