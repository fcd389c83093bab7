//! Time grids, grid paths on `[−τ, T]`, segment views and empirical laws.
//!
//! Paths are stored as node values on a uniform grid and read between nodes
//! by linear interpolation. Every sup-norm in the crate is a max over nodes,
//! which is exact for the piecewise-linear representation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::OnceCell;

use crate::error::{config, domain, Result};

/// Relative slack used when deciding that a ratio of times is an integer.
const ALIGN_TOL: f64 = 1e-9;

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let k = libm::round(r);
    if k >= 0.0 && libm::fabs(r - k) <= ALIGN_TOL * k.max(1.0) {
        Some(k as usize)
    } else {
        None
    }
}

/// Uniform grid on `[−τ, T]` with step `h`; both `τ/h` and `T/h` are integers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    tau: f64,
    horizon: f64,
    step: f64,
    lag_steps: usize,
    horizon_steps: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, horizon: f64, step: f64) -> Result<Self> {
        if !(tau > 0.0 && horizon > 0.0 && step > 0.0) || !(tau + horizon + step).is_finite() {
            return Err(config(format!(
                "grid needs positive finite tau, horizon, step (got {tau}, {horizon}, {step})"
            )));
        }
        let lag_steps = integer_ratio(tau, step)
            .filter(|&k| k > 0)
            .ok_or_else(|| config(format!("tau = {tau} is not a multiple of step {step}")))?;
        let horizon_steps = integer_ratio(horizon, step)
            .filter(|&k| k > 0)
            .ok_or_else(|| {
                config(format!(
                    "horizon = {horizon} is not a multiple of step {step}"
                ))
            })?;
        Ok(Self {
            tau,
            horizon,
            step,
            lag_steps,
            horizon_steps,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of cells covering `[−τ, 0]`.
    pub fn lag_steps(&self) -> usize {
        self.lag_steps
    }

    /// Number of cells covering `[0, T]`.
    pub fn horizon_steps(&self) -> usize {
        self.horizon_steps
    }

    pub fn node_count(&self) -> usize {
        self.lag_steps + self.horizon_steps + 1
    }

    /// Time of absolute node `k` (node 0 is `−τ`).
    pub fn time(&self, k: usize) -> f64 {
        (k as f64 - self.lag_steps as f64) * self.step
    }

    /// Index `j` with `t = j·h`, for grid-aligned `t ∈ [0, T]`.
    pub fn anchor_index(&self, t: f64) -> Result<usize> {
        if !(t >= -ALIGN_TOL * self.step && t <= self.horizon + ALIGN_TOL * self.step) {
            return Err(domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        integer_ratio(t.max(0.0), self.step)
            .filter(|&j| j <= self.horizon_steps)
            .ok_or_else(|| domain(format!("time {t} is not on the grid of step {}", self.step)))
    }

    /// Cells per discretization block `1/n`; fails unless `1/n` is a multiple of `h`.
    pub fn block_cells(&self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(config("discretization index n must be positive"));
        }
        integer_ratio(1.0 / n as f64, self.step)
            .filter(|&c| c > 0)
            .ok_or_else(|| config(format!("1/{n} is not a multiple of step {}", self.step)))
    }

    /// Grid index of `t_n = ⌊n t⌋ / n` for anchor index `j`.
    pub(crate) fn frozen_index(j: usize, block: usize) -> usize {
        (j / block) * block
    }
}

/// Read-only window `θ ↦ path(t + θ)`, `θ ∈ [−τ, 0]`, over `lag + 1` nodes.
///
/// Two modifiers exist. A clamp index makes every node past it read the
/// clamped node, which gives the frozen window `θ ↦ path((t + θ) ∧ t_n)`. A
/// head override replaces the value at `θ = 0`; the solvers use it while the
/// newest node is still unknown.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    values: &'a [f64],
    dim: usize,
    start: usize,
    lag: usize,
    clamp: Option<usize>,
    head: Option<&'a [f64]>,
}

impl<'a> Segment<'a> {
    /// A standalone segment whose nodes are `values` (node-major, `dim` per node).
    pub fn from_nodes(values: &'a [f64], dim: usize) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(config(
                "segment values must hold a positive whole number of nodes",
            ));
        }
        Ok(Self {
            values,
            dim,
            start: 0,
            lag: values.len() / dim - 1,
            clamp: None,
            head: None,
        })
    }

    pub(crate) fn window(values: &'a [f64], dim: usize, start: usize, lag: usize) -> Self {
        debug_assert!((start + lag + 1) * dim <= values.len());
        Self {
            values,
            dim,
            start,
            lag,
            clamp: None,
            head: None,
        }
    }

    pub(crate) fn clamped(mut self, abs_index: usize) -> Self {
        self.clamp = Some(abs_index);
        self
    }

    /// Same window with the value at `θ = 0` replaced by `head`.
    pub fn with_head(self, head: &'a [f64]) -> Self {
        debug_assert_eq!(head.len(), self.dim);
        Segment {
            head: Some(head),
            ..self
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of nodes covered (`τ/h + 1`).
    pub fn len(&self) -> usize {
        self.lag + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value at window node `j` (`j = 0` is `θ = −τ`, `j = lag` is `θ = 0`).
    pub fn at(&self, j: usize) -> &'a [f64] {
        debug_assert!(j <= self.lag);
        let mut abs = self.start + j;
        if let Some(c) = self.clamp {
            abs = abs.min(c);
        }
        match self.head {
            Some(h) if abs == self.start + self.lag => h,
            _ => &self.values[abs * self.dim..(abs + 1) * self.dim],
        }
    }

    /// `ξ(0)`
    pub fn head(&self) -> &'a [f64] {
        self.at(self.lag)
    }

    /// `ξ(−τ)`
    pub fn oldest(&self) -> &'a [f64] {
        self.at(0)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        (0..=self.lag).map(move |j| self.at(j))
    }

    /// `‖ξ‖_∞`, the max over covered nodes of the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        self.nodes().map(norm).fold(0.0, f64::max)
    }

    /// `‖ξ − η‖_∞` for segments of equal geometry.
    pub fn sup_distance(&self, other: &Segment<'_>) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        debug_assert_eq!(self.dim, other.dim);
        (0..=self.lag)
            .map(|j| distance(self.at(j), other.at(j)))
            .fold(0.0, f64::max)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.nodes().flat_map(|v| v.iter().copied()).collect()
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

/// A continuous path on `[−τ, T]` stored on the nodes of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl PathGrid {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != grid.node_count() * dim {
            return Err(config(format!(
                "path needs {} values ({} nodes × dim {dim}), got {}",
                grid.node_count() * dim,
                grid.node_count(),
                values.len()
            )));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut values = vec![0.0; grid.node_count() * dim];
        for (k, chunk) in values.chunks_exact_mut(dim).enumerate() {
            f(grid.time(k), chunk);
        }
        Self { grid, dim, values }
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Self {
        Self::from_fn(grid, value.len(), |_, out| out.copy_from_slice(value))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at absolute node `k`.
    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Linear interpolation at `t ∈ [−τ, T]`; exact at nodes.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let g = &self.grid;
        let x = (t + g.tau) / g.step;
        let last = (g.node_count() - 1) as f64;
        if !(x >= -ALIGN_TOL && x <= last + ALIGN_TOL) {
            return Err(domain(format!(
                "time {t} outside [{}, {}]",
                -g.tau, g.horizon
            )));
        }
        let x = x.clamp(0.0, last);
        let near = libm::round(x);
        if libm::fabs(x - near) <= ALIGN_TOL * near.max(1.0) {
            return Ok(self.node(near as usize).to_vec());
        }
        let k = libm::floor(x) as usize;
        let w = x - k as f64;
        let (a, b) = (self.node(k), self.node(k + 1));
        Ok(a.iter()
            .zip(b)
            .map(|(p, q)| (1.0 - w) * p + w * q)
            .collect())
    }

    /// The window `X_t`; `t = 0` gives the initial datum.
    pub fn segment_at(&self, t: f64) -> Result<Segment<'_>> {
        let j = self.grid.anchor_index(t)?;
        Ok(self.segment_at_index(j))
    }

    pub fn segment_at_index(&self, j: usize) -> Segment<'_> {
        Segment::window(&self.values, self.dim, j, self.grid.lag_steps)
    }

    /// The frozen window `θ ↦ path((t + θ) ∧ t_n)` with `t_n = ⌊n t⌋ / n`.
    pub fn frozen_segment_at(&self, t: f64, n: usize) -> Result<Segment<'_>> {
        let block = self.grid.block_cells(n)?;
        let j = self.grid.anchor_index(t)?;
        Ok(self.frozen_segment_at_index(j, block))
    }

    pub(crate) fn frozen_segment_at_index(&self, j: usize, block: usize) -> Segment<'_> {
        let jn = TimeGrid::frozen_index(j, block);
        self.segment_at_index(j).clamped(self.grid.lag_steps + jn)
    }

    pub fn initial_segment(&self) -> Segment<'_> {
        self.segment_at_index(0)
    }

    /// `sup_{t ∈ [−τ,T]} |self(t) − other(t)|`.
    pub fn sup_distance(&self, other: &PathGrid) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values
            .chunks_exact(self.dim)
            .zip(other.values.chunks_exact(self.dim))
            .map(|(a, b)| distance(a, b))
            .fold(0.0, f64::max)
    }

    /// `sup_{t ∈ [−τ,T]} |self(t)|`, which equals `sup_{t∈[0,T]} ‖X_t‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .chunks_exact(self.dim)
            .map(norm)
            .fold(0.0, f64::max)
    }
}

/// Uniformly weighted law on `N ≥ 1` segments of common geometry.
#[derive(Debug, Clone)]
pub struct EmpiricalLaw<'a> {
    atoms: Vec<Segment<'a>>,
    head_mean: OnceCell<Vec<f64>>,
}

impl<'a> EmpiricalLaw<'a> {
    pub fn new(atoms: Vec<Segment<'a>>) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| config("empirical law needs at least one atom"))?;
        if atoms
            .iter()
            .any(|a| a.len() != first.len() || a.dim() != first.dim())
        {
            return Err(config("atoms of an empirical law must share grid geometry"));
        }
        Ok(Self {
            atoms,
            head_mean: OnceCell::new(),
        })
    }

    pub fn dirac(atom: Segment<'a>) -> Self {
        Self {
            atoms: vec![atom],
            head_mean: OnceCell::new(),
        }
    }

    pub fn atoms(&self) -> &[Segment<'a>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `∫ η(0) μ(dη)`, computed once per law.
    pub fn mean_head(&self) -> &[f64] {
        self.head_mean.get_or_init(|| {
            let dim = self.atoms[0].dim();
            let mut acc = vec![0.0; dim];
            for a in &self.atoms {
                for (s, v) in acc.iter_mut().zip(a.head()) {
                    *s += v;
                }
            }
            let n = self.atoms.len() as f64;
            acc.iter_mut().for_each(|s| *s /= n);
            acc
        })
    }

    /// `μ(‖·‖²_∞)`
    pub fn second_moment(&self) -> f64 {
        let n = self.atoms.len() as f64;
        self.atoms
            .iter()
            .map(|a| {
                let s = a.sup_norm();
                s * s
            })
            .sum::<f64>()
            / n
    }
}
