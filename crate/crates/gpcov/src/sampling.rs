//! Random spatial designs and deterministic, replication-indexed randomness.
//!
//! All downstream randomness flows through [`SeedPlan`]: sub-seeds are a pure
//! function of (master seed, replication index, stream tag), so replications
//! are order-independent and the whole experiment is reproducible bit for bit
//! from the master seed alone.

use crate::GpError;
use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// The `n` observation points on `[0, n^{1/d}]^d` plus domain metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    dim: usize,
    coords: Vec<f64>, // flat, point i at [i*dim .. (i+1)*dim]
}

impl Design {
    /// Builds a design from flat coordinates, rejecting exact duplicates.
    pub fn from_points(dim: usize, coords: Vec<f64>) -> Result<Self, GpError> {
        assert!(dim >= 1 && coords.len().is_multiple_of(dim));
        let d = Design { dim, coords };
        d.check_distinct()?;
        Ok(d)
    }

    /// For tests that deliberately construct degenerate designs.
    pub fn from_points_unchecked(dim: usize, coords: Vec<f64>) -> Self {
        assert!(dim >= 1 && coords.len().is_multiple_of(dim));
        Design { dim, coords }
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Side length of the observation domain `[0, n^{1/d}]^d`.
    pub fn side(&self) -> f64 {
        (self.n() as f64).powf(1.0 / self.dim as f64)
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Points are almost surely pairwise distinct; an exact duplicate aborts
    /// the replication rather than producing a singular nugget-free matrix.
    fn check_distinct(&self) -> Result<(), GpError> {
        let n = self.n();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .find_map(|(x, y)| {
                    let c = x.total_cmp(y);
                    (c != std::cmp::Ordering::Equal).then_some(c)
                })
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            if self.point(w[0]) == self.point(w[1]) {
                return Err(GpError::DuplicatePoints {
                    i: w[0].min(w[1]),
                    j: w[0].max(w[1]),
                });
            }
        }
        Ok(())
    }
}

/// Enumerated randomness streams of one replication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamTag {
    Design,
    Field,
    Noise,
    Quadrature,
}

impl StreamTag {
    fn index(self) -> u64 {
        match self {
            StreamTag::Design => 0,
            StreamTag::Field => 1,
            StreamTag::Noise => 2,
            StreamTag::Quadrature => 3,
        }
    }
}

/// Master seed and replication counter from which every sub-stream derives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub master_seed: u64,
    pub rep_index: u64,
}

impl SeedPlan {
    pub fn new(master_seed: u64, rep_index: u64) -> Self {
        SeedPlan {
            master_seed,
            rep_index,
        }
    }

    /// Counter-mode sub-seed: a bijective mix of the master seed applied to
    /// the packed (rep, tag) counter, so distinct (rep, tag) pairs give
    /// distinct sub-seeds by construction.
    pub fn sub_seed(&self, tag: StreamTag) -> u64 {
        let counter = self.rep_index.wrapping_shl(2).wrapping_add(tag.index());
        mix64(mix64(self.master_seed).wrapping_add(counter))
    }

    pub fn rng(&self, tag: StreamTag) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.sub_seed(tag))
    }
}

/// Free-standing form of [`SeedPlan::sub_seed`].
pub fn derive_seed(plan: &SeedPlan, tag: StreamTag) -> u64 {
    plan.sub_seed(tag)
}

/// SplitMix64 finalizer; a bijection on u64.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw on the open interval (0, 1), built directly from the top 53
/// bits of the generator so the stream is identical on every platform.
pub fn uniform_open01<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Standard normal through the inverse CDF (Wichura's AS 241, PPND16). The
/// method is fixed for the project: cross-run determinism matters more than
/// the specific transform.
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    inv_norm_cdf(uniform_open01(rng))
}

pub fn standard_normals<R: RngCore>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}

/// Inverse standard-normal CDF, Wichura's algorithm AS 241 (PPND16),
/// accurate to about 1e-16 on (0, 1).
pub fn inv_norm_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&PPND16_A, r) / poly(&PPND16_B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        poly(&PPND16_C, r) / poly(&PPND16_D, r)
    } else {
        r -= 5.0;
        poly(&PPND16_E, r) / poly(&PPND16_F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

#[allow(clippy::excessive_precision)]
const PPND16_A: [f64; 8] = [
    3.387_132_872_796_366_5,
    133.141_667_891_784_38,
    1_971.590_950_306_551_3,
    13_731.693_765_509_461,
    45_921.953_931_549_871,
    67_265.770_927_008_7,
    33_430.575_583_588_128,
    2_509.080_928_730_122_7,
];
#[allow(clippy::excessive_precision)]
const PPND16_B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911,
    687.187_007_492_057_91,
    5_394.196_021_424_751,
    21_213.794_301_586_595,
    39_307.895_800_092_71,
    28_729.085_735_721_942,
    5_226.495_278_852_545_9,
];
#[allow(clippy::excessive_precision)]
const PPND16_C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_545_9,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    0.241_780_725_177_450_6,
    0.022_723_844_989_269_184,
    0.000_774_545_014_278_341_4,
];
#[allow(clippy::excessive_precision)]
const PPND16_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_8,
    1.676_384_830_183_803_8,
    0.689_767_334_985_100_0,
    0.148_103_976_427_480_08,
    0.015_198_666_563_616_457,
    0.000_547_593_808_499_534_5,
    1.050_750_071_644_416_9e-9,
];
#[allow(clippy::excessive_precision)]
const PPND16_E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    0.296_560_571_828_504_87,
    0.026_532_189_526_576_124,
    0.001_242_660_947_388_078_4,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
#[allow(clippy::excessive_precision)]
const PPND16_F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_9,
    0.136_929_880_922_735_8,
    0.014_875_361_290_850_615,
    0.000_786_869_131_145_613_3,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_445_9e-7,
    2.044_263_103_389_939_7e-15,
];

/// `n` iid uniform points on `[0, n^{1/d}]^d`, deterministic given the seed.
pub fn draw_design(n: usize, dim: usize, seed: u64) -> Result<Design, GpError> {
    if n < 1 || dim < 1 {
        return Err(GpError::InvalidParam(format!(
            "draw_design requires n >= 1 and d >= 1, got n = {n}, d = {dim}"
        )));
    }
    let side = (n as f64).powf(1.0 / dim as f64);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let coords = (0..n * dim)
        .map(|_| side * uniform_open01(&mut rng))
        .collect();
    Design::from_points(dim, coords)
}

/// `m` iid uniform points on the same domain as `design`.
pub fn draw_uniform_nodes<R: RngCore>(rng: &mut R, m: usize, design: &Design) -> Vec<f64> {
    let side = design.side();
    (0..m * design.dim())
        .map(|_| side * uniform_open01(rng))
        .collect()
}
