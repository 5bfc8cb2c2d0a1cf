//! Simulation draws for the GHK simulator.
//!
//! Each observation owns a block of `R × dims` uniforms that depends only on
//! `(seed, row id, R, kind)`. Halton blocks are consecutive segments of one
//! scrambled sequence (segment `i` starts at point `10 + i·R`); pseudo-random
//! blocks come from a ChaCha stream keyed by the row id.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
const HALTON_SKIP: u64 = 10;
const LOWER: f64 = f64::EPSILON;
const UPPER: f64 = 1.0 - f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Halton,
    Prng,
}

impl std::str::FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "halton" => Ok(Self::Halton),
            "prng" => Ok(Self::Prng),
            other => Err(Error::Domain(format!("unknown sequence kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhkConfig {
    pub draws: usize,
    pub kind: SequenceKind,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for GhkConfig {
    fn default() -> Self {
        Self {
            draws: 200,
            kind: SequenceKind::Halton,
            seed: 12_345,
            antithetic: true,
        }
    }
}

impl GhkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Domain("GHK draw count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn effective_draws(&self) -> usize {
        if self.antithetic {
            2 * self.draws
        } else {
            self.draws
        }
    }

    pub fn with_draws(&self, draws: usize) -> Self {
        Self {
            draws,
            ..self.clone()
        }
    }
}

/// One observation's block of uniforms, row-major `draws × dims`.
#[derive(Clone, Debug, PartialEq)]
pub struct DrawMatrix {
    dims: usize,
    draws: usize,
    antithetic: bool,
    values: Vec<f64>,
}

impl DrawMatrix {
    pub fn new(dims: usize, draws: usize, antithetic: bool, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims * draws {
            return Err(Error::dimension("draw matrix", dims * draws, values.len()));
        }
        if values.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
            return Err(Error::Domain("draws must lie strictly inside (0, 1)".into()));
        }
        Ok(Self {
            dims,
            draws,
            antithetic,
            values,
        })
    }

    pub fn for_observation(config: &GhkConfig, row_id: u64, dims: usize) -> Self {
        DrawGenerator::new(config, dims).block(row_id)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Base (non-antithetic) draw count.
    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn antithetic(&self) -> bool {
        self.antithetic
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.dims..(r + 1) * self.dims]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Reusable generator holding the scrambling tables for one configuration.
#[derive(Clone, Debug)]
pub struct DrawGenerator {
    config: GhkConfig,
    dims: usize,
    // Per dimension, per digit position, a permutation of the base's digits.
    scramble: Vec<Vec<Vec<u32>>>,
}

impl DrawGenerator {
    pub fn new(config: &GhkConfig, dims: usize) -> Self {
        assert!(dims <= PRIMES.len(), "at most {} draw dimensions", PRIMES.len());
        let scramble = match config.kind {
            SequenceKind::Halton => (0..dims)
                .map(|d| digit_permutations(PRIMES[d], config.seed))
                .collect(),
            SequenceKind::Prng => Vec::new(),
        };
        Self {
            config: config.clone(),
            dims,
            scramble,
        }
    }

    pub fn block(&self, row_id: u64) -> DrawMatrix {
        let r = self.config.draws;
        let mut values = Vec::with_capacity(r * self.dims);
        match self.config.kind {
            SequenceKind::Halton => {
                let start = HALTON_SKIP + row_id * r as u64;
                for i in 0..r as u64 {
                    for d in 0..self.dims {
                        let u = scrambled_radical_inverse(start + i, PRIMES[d], &self.scramble[d]);
                        values.push(u.clamp(LOWER, UPPER));
                    }
                }
            }
            SequenceKind::Prng => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.config.seed, row_id));
                for _ in 0..r * self.dims {
                    let u: f64 = rng.sample(rand::distr::Open01);
                    values.push(u.clamp(LOWER, UPPER));
                }
            }
        }
        DrawMatrix {
            dims: self.dims,
            draws: r,
            antithetic: self.config.antithetic,
            values,
        }
    }
}

fn digit_permutations(base: u64, seed: u64) -> Vec<Vec<u32>> {
    let digits = (53.0 / (base as f64).log2()).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x9E37_79B9_0000_0000 ^ base));
    (0..digits)
        .map(|_| {
            let mut perm: Vec<u32> = (0..base as u32).collect();
            perm.shuffle(&mut rng);
            perm
        })
        .collect()
}

fn scrambled_radical_inverse(mut n: u64, base: u64, perms: &[Vec<u32>]) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut scale = inv_base;
    let mut acc = 0.0;
    for perm in perms {
        let digit = (n % base) as usize;
        n /= base;
        acc += perm[digit] as f64 * scale;
        scale *= inv_base;
    }
    acc
}

/// SplitMix64 finalizer over a combined key.
pub(crate) fn mix(seed: u64, key: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(key.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
