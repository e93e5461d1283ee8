//! Numeric kernels shared by the three trainers.
//!
//! Everything here is deterministic given its inputs, except the samplers,
//! which advance the [`Rng`] they are handed.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Below this the digamma recurrence is applied before the asymptotic series.
const DIGAMMA_SHIFT: f64 = 10.0;

/// Bernoulli-number coefficients B_2n / (2n) of the digamma asymptotic series.
const DIGAMMA_SERIES: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
];

/// The digamma function, d/dx ln Γ(x), for x > 0.
///
/// Small arguments are shifted with ψ(x) = ψ(x + 1) − 1/x until x ≥ 10,
/// then the asymptotic expansion in 1/x² is summed.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires finite x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < DIGAMMA_SHIFT {
        shift += 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // Horner over 1/x^2, highest order first.
    let mut tail = 0.0;
    for c in DIGAMMA_SERIES.iter().rev() {
        tail = tail * inv2 + c;
    }
    x.ln() - 0.5 / x - tail * inv2 - shift
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Componentwise E[ln p_k] under Dirichlet(params): ψ(params_k) − ψ(Σ params).
pub fn dirichlet_log_expectation(params: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; params.len()];
    dirichlet_log_expectation_into(params, &mut out)?;
    Ok(out)
}

pub(crate) fn dirichlet_log_expectation_into(params: &[f64], out: &mut [f64]) -> Result<()> {
    debug_assert_eq!(params.len(), out.len());
    if let Some(bad) = params.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::Domain(format!(
            "Dirichlet parameters must be finite and positive, got {bad}"
        )));
    }
    let total = digamma_unchecked(params.iter().sum());
    for (o, p) in out.iter_mut().zip(params) {
        *o = digamma_unchecked(*p) - total;
    }
    Ok(())
}

/// ln Σ exp(values). Returns −∞ when every entry is −∞.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Maps log-weights to a probability vector, exp(w_k − logsumexp(w)).
pub fn normalize_exp(log_weights: &[f64]) -> Result<Vec<f64>> {
    let mut out = log_weights.to_vec();
    normalize_exp_in_place(&mut out)?;
    Ok(out)
}

/// In-place variant of [`normalize_exp`]; `values` holds log-weights on entry
/// and probabilities on return.
pub fn normalize_exp_in_place(values: &mut [f64]) -> Result<()> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::Degenerate(
            "normalize_exp needs at least one finite log-weight".into(),
        ));
    }
    if max == f64::INFINITY {
        return Err(Error::Degenerate("log-weight of +inf".into()));
    }
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let inv = 1.0 / total;
    for v in values.iter_mut() {
        *v *= inv;
    }
    Ok(())
}

/// Seeded pseudo-random generator.
///
/// Backed by ChaCha8 so draw sequences are identical across platforms and
/// releases of this crate. Independent sub-streams are derived with
/// [`Rng::substream`], keyed by the parent seed and an integer label.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A fresh generator for `(seed, index)`, independent of how far this
    /// generator has advanced.
    pub fn substream(&self, index: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(index.wrapping_add(1));
        Rng {
            seed: self.seed,
            inner,
        }
    }

    /// Uniform draw from [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer from 0..n. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Draws an index with probability proportional to `weights`.
pub fn sample_categorical(weights: &[f64], rng: &mut Rng) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::Domain(format!(
                "categorical weights must be finite and non-negative, got {w}"
            )));
        }
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::Domain("categorical weights sum to zero".into()));
    }
    Ok(draw_from_cumulative(weights, total, rng))
}

/// Inverse-CDF draw; `total` must be the positive sum of `weights`.
pub(crate) fn draw_from_cumulative(weights: &[f64], total: f64, rng: &mut Rng) -> usize {
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = k;
            if target < acc {
                return k;
            }
        }
    }
    // rounding can leave target just above the accumulated sum
    last_positive
}

/// Log of a Gamma(shape, 1) draw, accurate even when the draw itself would
/// underflow (shape ≪ 1).
pub fn sample_log_gamma(shape: f64, rng: &mut Rng) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::Domain(format!("Gamma shape must be positive, got {shape}")));
    }
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
        return Ok(g.sample(rng).ln());
    }
    // G(a) = G(a + 1) · U^(1/a)
    let g = Gamma::new(shape + 1.0, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let boosted = g.sample(rng).ln();
    let u = 1.0 - rng.uniform();
    Ok(boosted + u.ln() / shape)
}

/// Draws from a symmetric Dirichlet(concentration, ..., concentration) over
/// `dim` components by normalizing independent Gamma draws in log space.
pub fn sample_symmetric_dirichlet(dim: usize, concentration: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::Argument("Dirichlet dimension must be at least 1".into()));
    }
    let mut logs = (0..dim)
        .map(|_| sample_log_gamma(concentration, rng))
        .collect::<Result<Vec<_>>>()?;
    normalize_exp_in_place(&mut logs)?;
    Ok(logs)
}
