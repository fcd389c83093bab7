//! Counter-based Brownian increments.
//!
//! Each `(master_seed, replica, particle)` selects an independent ChaCha8
//! stream; the increment of cell `k` is the `k`-th block of `m` standard
//! normals from that stream, scaled by `√h`. Streams are never shared, so the
//! noise seen by one path does not depend on which other paths were drawn, or
//! in which order.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{config, Result};

/// Largest replica index representable in a stream word.
pub const MAX_REPLICA: u64 = (1 << 31) - 1;

const MONITOR_BIT: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamId {
    pub replica: u64,
    pub particle: u32,
}

impl StreamId {
    pub fn new(replica: u64, particle: u32) -> Self {
        Self { replica, particle }
    }

    fn word(self) -> u64 {
        (self.replica << 32) | u64::from(self.particle)
    }

    fn rng(self, master_seed: u64, monitor: bool) -> Result<ChaCha8Rng> {
        if self.replica > MAX_REPLICA {
            return Err(config("replica index exceeds the stream address space"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(self.word() | if monitor { MONITOR_BIT } else { 0 });
        Ok(rng)
    }
}

/// Increments of one `m`-dimensional Brownian motion on `cells` cells of width `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    pub master_seed: u64,
    pub stream: StreamId,
    dim: usize,
    step: f64,
    increments: Vec<f64>,
}

impl NoiseBundle {
    pub fn generate(
        master_seed: u64,
        stream: StreamId,
        dim: usize,
        cells: usize,
        step: f64,
    ) -> Result<Self> {
        if dim == 0 || !(step > 0.0) {
            return Err(config("noise needs a positive dimension and step"));
        }
        let mut rng = stream.rng(master_seed, false)?;
        let scale = libm::sqrt(step);
        let increments = (0..dim * cells)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            master_seed,
            stream,
            dim,
            step,
            increments,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.increments.len() / self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// All increments, cell-major.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn cell(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    /// `W(t_k)` at every node `k = 0..=cells`.
    pub fn brownian_path(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.increments.len() + self.dim);
        out.extend(core::iter::repeat_n(0.0, self.dim));
        for k in 0..self.cells() {
            for i in 0..self.dim {
                let prev = out[k * self.dim + i];
                out.push(prev + self.increments[k * self.dim + i]);
            }
        }
        out
    }
}

/// Uniform variates on `[0, 1)` for bridge-crossing decisions, independent of
/// the increment stream with the same id.
pub struct MonitorStream(ChaCha8Rng);

impl MonitorStream {
    pub fn new(master_seed: u64, stream: StreamId) -> Result<Self> {
        Ok(Self(stream.rng(master_seed, true)?))
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }
}
