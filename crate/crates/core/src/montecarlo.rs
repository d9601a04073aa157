//! Seeded joint posterior draws of every edge probability, and scalar
//! sample summaries.
//!
//! Reproducibility: the draw for `(parent, sample)` comes from a ChaCha8
//! stream keyed by the seed, with the parent node index as stream id and a
//! word offset of `sample << 32`. Rows can therefore be produced in any
//! order on any number of threads with bit-identical results.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conjugate::NodePosterior;
use crate::graph::{EdgeId, NodeId};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;
pub const DEFAULT_BINS: usize = 100;

const ROWS_PER_TASK: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("credible level {0} is outside (0, 1)")]
    BadCiLevel(f64),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("cannot summarize an empty sample")]
    Empty,
}

/// How edge probabilities within one parent block are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    /// Each row is one Dirichlet draw: independent gammas, normalized.
    #[default]
    Joint,
    /// Each edge drawn independently from its Beta marginal. Rows do not sum
    /// to one; absorption probabilities are then only normalized on average.
    IndependentMarginals,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub samples: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub histogram_bins: usize,
    pub scheme: SamplingScheme,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            ci_level: DEFAULT_CI_LEVEL,
            histogram_bins: DEFAULT_BINS,
            scheme: SamplingScheme::Joint,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.samples == 0 {
            return Err(SamplerError::NoSamples);
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(SamplerError::BadCiLevel(self.ci_level));
        }
        if self.histogram_bins == 0 {
            return Err(SamplerError::NoBins);
        }
        Ok(())
    }

    /// Lower and upper tail probabilities of the credible interval.
    pub fn quantile_probs(&self) -> (f64, f64) {
        let tail = (1.0 - self.ci_level) / 2.0;
        (tail, 1.0 - tail)
    }
}

/// Log of a Gamma(shape, 1) variate (Marsaglia and Tsang). Shapes below one
/// use the boost `G(a) = G(a + 1) * U^(1/a)`, applied in log space so that
/// tiny shapes do not underflow.
pub fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let u: f64 = rng.sample(Open01);
        return ln_gamma_variate(shape + 1.0, rng) + u.ln() / shape;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.sample(Open01);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// Expands the 64-bit seed into a ChaCha key with SplitMix64.
fn chacha_key(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    key
}

/// Random stream reserved for one `(parent, sample)` pair.
pub fn substream(seed: u64, parent: NodeId, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(chacha_key(seed));
    rng.set_stream(parent.0 as u64);
    rng.set_word_pos((sample as u128) << 32);
    rng
}

fn draw_row(alpha: &[f64], scheme: SamplingScheme, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    if alpha.len() == 1 {
        out[0] = 1.0;
        return;
    }
    match scheme {
        SamplingScheme::Joint => {
            let mut max = f64::NEG_INFINITY;
            for (o, &a) in out.iter_mut().zip(alpha) {
                *o = ln_gamma_variate(a, rng);
                max = max.max(*o);
            }
            let mut total = 0.0;
            for o in out.iter_mut() {
                *o = (*o - max).exp();
                total += *o;
            }
            for o in out.iter_mut() {
                *o /= total;
            }
        }
        SamplingScheme::IndependentMarginals => {
            let sum: f64 = alpha.iter().sum();
            for (o, &a) in out.iter_mut().zip(alpha) {
                let x = ln_gamma_variate(a, rng);
                let y = ln_gamma_variate(sum - a, rng);
                *o = 1.0 / (1.0 + (y - x).exp());
            }
        }
    }
}

/// `samples × dim` draws for one parent, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub parent: NodeId,
    pub edges: Vec<EdgeId>,
    pub values: Vec<f64>,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.edges.len()
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let j = self.dim();
        &self.values[m * j..(m + 1) * j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(j).step_by(self.dim()).copied()
    }
}

/// Joint posterior draws; row `m` of every block together form one sampled
/// world.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    samples: usize,
    edge_count: usize,
    blocks: Vec<Block>,
}

impl SampleMatrix {
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Writes row `m` indexed by [`EdgeId`] into `out`.
    pub fn fill_edge_row(&self, m: usize, out: &mut [f64]) {
        for block in &self.blocks {
            for (&e, &v) in block.edges.iter().zip(block.row(m)) {
                out[e.0] = v;
            }
        }
    }

    pub fn edge_row(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.edge_count];
        self.fill_edge_row(m, &mut out);
        out
    }
}

/// Draws `cfg.samples` joint posterior samples of all edge probabilities.
/// `edge_count` sizes the edge-indexed rows handed to queries.
pub fn draw_joint(
    posteriors: &[NodePosterior],
    edge_count: usize,
    cfg: &SamplerConfig,
) -> Result<SampleMatrix, SamplerError> {
    cfg.validate()?;
    let m_total = cfg.samples;
    let blocks = posteriors
        .iter()
        .map(|post| {
            let dim = post.dim();
            let mut values = vec![0.0; m_total * dim];
            values
                .par_chunks_mut(ROWS_PER_TASK * dim)
                .enumerate()
                .for_each(|(task, chunk)| {
                    for (r, row) in chunk.chunks_mut(dim).enumerate() {
                        let m = task * ROWS_PER_TASK + r;
                        let mut rng = substream(cfg.seed, post.parent, m);
                        draw_row(&post.alpha, cfg.scheme, &mut rng, row);
                    }
                });
            Block {
                parent: post.parent,
                edges: post.edges.clone(),
                values,
            }
        })
        .collect();
    Ok(SampleMatrix {
        samples: m_total,
        edge_count,
        blocks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySummary {
    pub mean: f64,
    pub sd: f64,
    pub ci: (f64, f64),
    pub quantile_probs: (f64, f64),
    pub samples: usize,
    pub histogram: Vec<HistogramBin>,
}

/// Quantile by linear interpolation at zero-based rank `q * (n - 1)` of a
/// sorted sample.
pub fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Equal-width bins over `[min, max]`, right-open except the last.
pub fn histogram(sorted: &[f64], bins: usize) -> Vec<HistogramBin> {
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let width = (max - min) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in sorted {
        let k = if width > 0.0 {
            (((x - min) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            left: min + k as f64 * width,
            right: if k + 1 == bins {
                max
            } else {
                min + (k + 1) as f64 * width
            },
            count,
        })
        .collect()
}

/// Mean, sample standard deviation, equal-tailed interval and histogram.
/// A single value has standard deviation 0.
pub fn summarize(values: &[f64], cfg: &SamplerConfig) -> Result<QuerySummary, SamplerError> {
    if values.is_empty() {
        return Err(SamplerError::Empty);
    }
    if !(cfg.ci_level > 0.0 && cfg.ci_level < 1.0) {
        return Err(SamplerError::BadCiLevel(cfg.ci_level));
    }
    if cfg.histogram_bins == 0 {
        return Err(SamplerError::NoBins);
    }
    let n = values.len();
    // shifted by the first value so a constant sample has its exact mean
    let shift = values[0];
    let mean = shift + values.iter().map(|x| x - shift).sum::<f64>() / n as f64;
    let sd = if n > 1 {
        let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q_lo, q_hi) = cfg.quantile_probs();
    Ok(QuerySummary {
        mean,
        sd,
        ci: (
            interpolated_quantile(&sorted, q_lo),
            interpolated_quantile(&sorted, q_hi),
        ),
        quantile_probs: (q_lo, q_hi),
        samples: n,
        histogram: histogram(&sorted, cfg.histogram_bins),
    })
}
