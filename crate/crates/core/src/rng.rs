//! Counter-based random numbers.
//!
//! Every speckle cell owns a Philox4x32-10 stream keyed by the master seed,
//! with the realization index and cell coordinates in the counter; its
//! Gaussian pair comes from `rand_distr`'s ziggurat sampler fed by that
//! stream. A cell's value therefore depends only on `(seed, index, j, k)`,
//! never on evaluation order or thread count.

use std::convert::Infallible;

use rand_core::TryRng;
use rand_distr::{Distribution, StandardNormal};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32_10(mut ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let (mut k0, mut k1) = (key[0], key[1]);
    for round in 0..10 {
        if round > 0 {
            k0 = k0.wrapping_add(PHILOX_W0);
            k1 = k1.wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0];
    }
    ctr
}

/// Largest ring or angle count a cell address can hold.
pub const MAX_CELL_AXIS: usize = 1 << 16;

/// Draws for one realization of one master seed.
#[derive(Clone, Copy, Debug)]
pub struct CellStream {
    key: [u32; 2],
    index: u64,
}

impl CellStream {
    pub fn new(master_seed: u64, index: u64) -> Self {
        Self {
            key: [master_seed as u32, (master_seed >> 32) as u32],
            index,
        }
    }

    /// Independent generator for cell `(j, k)`; both must be below
    /// [`MAX_CELL_AXIS`].
    #[inline]
    pub fn cell(&self, j: u32, k: u32) -> CellRng {
        debug_assert!((j as usize) < MAX_CELL_AXIS && (k as usize) < MAX_CELL_AXIS);
        CellRng {
            key: self.key,
            ctr: [
                0,
                (j << 16) | k,
                self.index as u32,
                (self.index >> 32) as u32,
            ],
            buf: [0; 4],
            pos: 4,
        }
    }

    /// Two independent standard normal draws for cell `(j, k)`.
    #[inline]
    pub fn normals(&self, j: u32, k: u32) -> (f64, f64) {
        let mut rng = self.cell(j, k);
        (
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        )
    }

    /// `out[k] = (g1, g2)` of cell `(j, k)` for every `k`, identical to
    /// calling [`normals`](Self::normals) per cell. First blocks for the
    /// whole row are computed in one tight loop, where the cells' ten
    /// dependent Philox rounds overlap, before the samplers consume them.
    pub fn fill_normals(&self, j: u32, out: &mut [(f64, f64)]) {
        let blocks: Vec<[u32; 4]> = (0..out.len() as u32)
            .map(|k| philox4x32_10(self.cell(j, k).ctr, self.key))
            .collect();
        for (k, (slot, block)) in out.iter_mut().zip(blocks).enumerate() {
            let mut rng = self.cell(j, k as u32);
            rng.buf = block;
            rng.ctr[0] = 1;
            rng.pos = 0;
            *slot = (
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            );
        }
    }
}

/// Philox stream private to one cell: the counter's first word counts blocks,
/// the rest hold the cell address and realization index.
#[derive(Clone, Debug)]
pub struct CellRng {
    key: [u32; 2],
    ctr: [u32; 4],
    buf: [u32; 4],
    pos: usize,
}

impl CellRng {
    #[inline]
    fn word(&mut self) -> u32 {
        if self.pos == 4 {
            self.buf = philox4x32_10(self.ctr, self.key);
            self.ctr[0] = self.ctr[0].wrapping_add(1);
            self.pos = 0;
        }
        let w = self.buf[self.pos];
        self.pos += 1;
        w
    }
}

impl TryRng for CellRng {
    type Error = Infallible;

    #[inline]
    fn try_next_u32(&mut self) -> Result<u32, Infallible> {
        Ok(self.word())
    }

    #[inline]
    fn try_next_u64(&mut self) -> Result<u64, Infallible> {
        let hi = u64::from(self.word());
        Ok((hi << 32) | u64::from(self.word()))
    }

    fn try_fill_bytes(&mut self, dst: &mut [u8]) -> Result<(), Infallible> {
        for chunk in dst.chunks_mut(4) {
            let w = self.word().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
        Ok(())
    }
}
