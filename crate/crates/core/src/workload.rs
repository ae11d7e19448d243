//! Seeded synthetic workloads.
//!
//! Rows are Gaussian logits with an optional heavy-tail mix. The mix decides
//! where the large entries sit: a few isolated dominant tokens, many large
//! tokens spread across the row, or one contiguous cluster.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{AttentionConfig, RealMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// Plain Gaussian, no heavy entries.
    Gaussian,
    /// A few isolated dominant tokens.
    Dominant,
    /// Large tokens evenly spread across the row.
    Spread,
    /// Large tokens packed into one contiguous region.
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowProfile {
    pub kind: ProfileKind,
    /// Standard deviation of the Gaussian body.
    #[serde(default = "unit")]
    pub std: f64,
    /// Fraction of tokens that are heavy.
    #[serde(default = "default_heavy_fraction")]
    pub heavy_fraction: f64,
    /// Offset added to heavy tokens, in units of `std`.
    #[serde(default = "default_heavy_shift")]
    pub heavy_shift: f64,
}

fn unit() -> f64 {
    1.0
}

fn default_heavy_fraction() -> f64 {
    0.05
}

fn default_heavy_shift() -> f64 {
    3.0
}

impl Default for RowProfile {
    fn default() -> Self {
        RowProfile {
            kind: ProfileKind::Spread,
            std: 1.0,
            heavy_fraction: default_heavy_fraction(),
            heavy_shift: default_heavy_shift(),
        }
    }
}

impl RowProfile {
    pub fn gaussian(std: f64) -> Self {
        RowProfile {
            kind: ProfileKind::Gaussian,
            std,
            heavy_fraction: 0.0,
            heavy_shift: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(invalid("profile std must be positive"));
        }
        if !(0.0..=1.0).contains(&self.heavy_fraction) {
            return Err(invalid("heavy_fraction must be in [0, 1]"));
        }
        Ok(())
    }

    /// Token positions that receive the heavy offset.
    pub fn heavy_positions<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let count = ((self.heavy_fraction * len as f64).round() as usize).min(len);
        if count == 0 {
            return Vec::new();
        }
        match self.kind {
            ProfileKind::Gaussian => Vec::new(),
            ProfileKind::Dominant => {
                let mut v = sample(rng, len, count.min(4)).into_vec();
                v.sort_unstable();
                v
            }
            ProfileKind::Spread => (0..count).map(|i| i * len / count).collect(),
            ProfileKind::Clustered => {
                let start = rng.random_range(0..=len - count);
                (start..start + count).collect()
            }
        }
    }

    /// One row of synthetic logits.
    pub fn sample_row<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        let body = Normal::new(0.0, self.std).expect("validated std");
        let mut row: Vec<f64> = (0..len).map(|_| body.sample(rng)).collect();
        for i in self.heavy_positions(len, rng) {
            row[i] += self.heavy_shift * self.std;
        }
        row
    }

    pub fn sample_matrix<R: Rng>(&self, rows: usize, cols: usize, rng: &mut R) -> RealMatrix {
        let data = (0..rows).flat_map(|_| self.sample_row(cols, rng)).collect();
        RealMatrix::new(rows, cols, data).expect("finite samples")
    }
}

/// Input activations, projection weights and queries for one attention head.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    /// `S x H` input.
    pub x: RealMatrix,
    /// `H x d_h` key projection.
    pub wk: RealMatrix,
    /// `H x d_h` value projection.
    pub wv: RealMatrix,
    /// `T x d_h` queries.
    pub q: RealMatrix,
}

fn gaussian<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> RealMatrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect::<Vec<f64>>();
    RealMatrix::new(rows, cols, data).expect("finite samples")
}

/// Builds a workload whose token activations follow `profile` along the
/// sequence: heavy tokens get their activations amplified, which makes their
/// keys (and hence their scores) stand out.
pub fn generate(cfg: &AttentionConfig, profile: &RowProfile, query_gain: f64, seed: u64) -> Result<Workload> {
    cfg.validate()?;
    profile.validate()?;
    let mut r = rng(seed);
    let h = cfg.hidden();
    let mut x = gaussian(cfg.seq_len, h, 1.0, &mut r);
    let gain = 1.0 + profile.heavy_shift.max(0.0) / 2.0;
    for i in profile.heavy_positions(cfg.seq_len, &mut r) {
        for v in x.row_mut(i) {
            *v *= gain;
        }
    }
    let wstd = 1.0 / (h as f64).sqrt();
    let wk = gaussian(h, cfg.head_dim, wstd, &mut r);
    let wv = gaussian(h, cfg.head_dim, wstd, &mut r);
    let q = gaussian(cfg.queries, cfg.head_dim, query_gain, &mut r);
    Ok(Workload { x, wk, wv, q })
}
