//! Controls, the action functional `I(φ) = ½∫|φ̇|²`, and numerical
//! minimisation of `I` over controls whose skeleton path hits a rare event.
//!
//! The minimiser works on the cell increments `u_k = φ(t_{k+1}) − φ(t_k)`, in
//! which `I = Σ|u_k|²/(2h)` has an exact gradient; the constraint enters as a
//! quadratic penalty `μ·violation(M(φ))²` differentiated by central
//! differences, with `μ` raised tenfold per continuation stage.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{config, Result};
use crate::model::ModelSpec;
use crate::optim::{lbfgs, LbfgsOptions};
use crate::path::{distance, PathGrid, Segment};
use crate::solver::{march, Forcing, LawArg, SolverOptions};

/// Absolutely continuous `φ: [0,T] → R^m`, `φ(0) = 0`, piecewise linear on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    step: f64,
    cells: usize,
    dim: usize,
    nodes: Vec<f64>,
}

impl Control {
    pub fn zero(step: f64, cells: usize, dim: usize) -> Self {
        Self {
            step,
            cells,
            dim,
            nodes: vec![0.0; (cells + 1) * dim],
        }
    }

    /// `φ(t) = slope·t`.
    pub fn linear(step: f64, cells: usize, slope: &[f64]) -> Self {
        Self::from_fn(step, cells, slope.len(), |t, out| {
            out.iter_mut().zip(slope).for_each(|(o, s)| *o = s * t)
        })
    }

    /// Samples `f` at the nodes `t_k = k·step`, `k ≥ 1`; the node at `t = 0` is set to zero.
    pub fn from_fn(
        step: f64,
        cells: usize,
        dim: usize,
        mut f: impl FnMut(f64, &mut [f64]),
    ) -> Self {
        let mut c = Self::zero(step, cells, dim);
        for k in 1..=cells {
            f(k as f64 * step, &mut c.nodes[k * dim..(k + 1) * dim]);
        }
        c
    }

    /// Builds `φ` from its cell increments (cell-major, `m` per cell).
    pub fn from_increments(step: f64, dim: usize, increments: &[f64]) -> Result<Self> {
        if dim == 0 || !increments.len().is_multiple_of(dim) || !(step > 0.0) {
            return Err(config("control increments must hold whole cells"));
        }
        let cells = increments.len() / dim;
        let mut c = Self::zero(step, cells, dim);
        for k in 0..cells {
            for i in 0..dim {
                c.nodes[(k + 1) * dim + i] = c.nodes[k * dim + i] + increments[k * dim + i];
            }
        }
        Ok(c)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.cells as f64 * self.step
    }

    /// `φ(t_k)`
    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    /// `Δφ` per cell, cell-major.
    pub fn increments(&self) -> Vec<f64> {
        (0..self.cells * self.dim)
            .map(|i| self.nodes[i + self.dim] - self.nodes[i])
            .collect()
    }

    /// `c·φ`
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            nodes: self.nodes.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }
}

/// `I(φ) = ½ Σ_k |Δφ_k|²/h`, exact for piecewise-linear `φ`.
pub fn action(phi: &Control) -> f64 {
    increment_action(&phi.increments(), phi.step)
}

fn increment_action(u: &[f64], step: f64) -> f64 {
    0.5 * u.iter().map(|x| x * x).sum::<f64>() / step
}

/// Event whose probability the rate function governs.
#[derive(Debug, Clone, PartialEq)]
pub enum RareEvent {
    /// `|M(T) − target| ≤ tol`
    TerminalTarget { target: Vec<f64>, tol: f64 },
    /// `sup_{t∈[0,T]} |M(t) − reference(t)| ≥ delta`, relaxed by `tol`.
    SupExceed {
        delta: f64,
        reference: PathGrid,
        tol: f64,
    },
}

impl RareEvent {
    pub fn tol(&self) -> f64 {
        match self {
            Self::TerminalTarget { tol, .. } | Self::SupExceed { tol, .. } => *tol,
        }
    }

    fn validate(&self, spec: &ModelSpec, x0: &PathGrid) -> Result<()> {
        match self {
            Self::TerminalTarget { target, tol } => {
                if target.len() != spec.dim_state() || !(*tol > 0.0) {
                    return Err(config(
                        "terminal target needs the state dimension and tol > 0",
                    ));
                }
            }
            Self::SupExceed {
                delta,
                reference,
                tol,
            } => {
                if !(*delta > 0.0) || !(*tol > 0.0) {
                    return Err(config("sup-exceed event needs delta > 0 and tol > 0"));
                }
                if reference.grid() != x0.grid() || reference.dim() != spec.dim_state() {
                    return Err(config("sup-exceed reference must live on the solver grid"));
                }
            }
        }
        Ok(())
    }

    /// Distance of a skeleton path from the event; zero inside it.
    pub fn violation(&self, path: &PathGrid) -> f64 {
        let d = path.dim();
        let lag = path.grid().lag_steps();
        match self {
            Self::TerminalTarget { target, .. } => {
                let last = path.grid().node_count() - 1;
                distance(path.node(last), target)
            }
            Self::SupExceed {
                delta, reference, ..
            } => {
                let sup = path.values()[lag * d..]
                    .chunks_exact(d)
                    .zip(reference.values()[lag * d..].chunks_exact(d))
                    .map(|(a, b)| distance(a, b))
                    .fold(0.0, f64::max);
                (delta - sup).max(0.0)
            }
        }
    }

    pub fn is_satisfied(&self, path: &PathGrid) -> bool {
        self.violation(path) <= self.tol()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    pub penalty_start: f64,
    pub penalty_factor: f64,
    pub stages: usize,
    pub max_iter_per_stage: usize,
    pub fd_step: f64,
    /// Seed for randomised restart controls.
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            penalty_start: 10.0,
            penalty_factor: 10.0,
            stages: 5,
            max_iter_per_stage: 500,
            fd_step: 1e-6,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    /// `I(argmin)`; an upper bound on the rate when `converged`.
    pub value: f64,
    pub argmin: Control,
    pub converged: bool,
    pub iterations: usize,
    /// Event violation of `M(argmin)`.
    pub residual: f64,
}

fn skeleton(
    spec: &ModelSpec,
    xi: &Segment<'_>,
    x0: &PathGrid,
    u: &[f64],
    opts: &SolverOptions,
) -> Result<PathGrid> {
    let forcing = Forcing {
        scale: 1.0,
        increments: u,
    };
    march(
        spec,
        xi,
        x0.grid(),
        opts,
        LawArg::Frozen(x0),
        Some(forcing),
        None,
    )
}

/// Penalty-continuation minimisation of `I(φ)` subject to `M(φ)` hitting `event`.
pub fn minimize_rate(
    spec: &ModelSpec,
    xi: &Segment<'_>,
    x0: &PathGrid,
    event: &RareEvent,
    init: &Control,
    opts: &RateOptions,
) -> Result<RateEstimate> {
    event.validate(spec, x0)?;
    let grid = *x0.grid();
    if init.dim() != spec.dim_noise()
        || init.cells() != grid.horizon_steps()
        || libm::fabs(init.step() - grid.step()) > 1e-12 * grid.step()
    {
        return Err(config("initial control does not match the solver grid"));
    }
    if !(opts.penalty_start > 0.0)
        || !(opts.penalty_factor >= 1.0)
        || opts.stages == 0
        || !(opts.fd_step > 0.0)
    {
        return Err(config("invalid rate-minimisation options"));
    }
    let h = grid.step();
    let fd = opts.fd_step;
    let mut u = init.increments();
    let mut failure = None;
    let mut iterations = 0;
    let mut mu = opts.penalty_start;

    for _ in 0..opts.stages {
        let mut penalty = |v: &[f64]| -> f64 {
            match skeleton(spec, xi, x0, v, &opts.solver) {
                Ok(p) => {
                    let viol = event.violation(&p);
                    mu * viol * viol
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            }
        };
        let lopts = LbfgsOptions {
            max_iter: opts.max_iter_per_stage,
            memory: 10,
            grad_tol: 1e-9,
            rel_tol: 1e-15,
        };
        let result = lbfgs(
            |v, g| {
                let base = increment_action(v, h) + penalty(v);
                let mut probe = v.to_vec();
                for i in 0..v.len() {
                    probe[i] = v[i] + fd;
                    let up = penalty(&probe);
                    probe[i] = v[i] - fd;
                    let down = penalty(&probe);
                    probe[i] = v[i];
                    g[i] = v[i] / h + (up - down) / (2.0 * fd);
                }
                base
            },
            u,
            &lopts,
        );
        u = result.x;
        iterations += result.iterations;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        mu *= opts.penalty_factor;
    }

    let path = skeleton(spec, xi, x0, &u, &opts.solver)?;
    let residual = event.violation(&path);
    let argmin = Control::from_increments(h, spec.dim_noise(), &u)?;
    Ok(RateEstimate {
        value: action(&argmin),
        argmin,
        converged: residual <= event.tol(),
        iterations,
        residual,
    })
}

/// Initial control of restart `index`: index 0 is deterministic (zero for a
/// terminal target, a small ramp for a sup exceedance so that the penalty
/// gradient is not symmetric), later indices draw a random ramp plus a
/// random sine bump.
pub fn restart_init(
    spec: &ModelSpec,
    x0: &PathGrid,
    event: &RareEvent,
    index: u64,
    seed: u64,
) -> Control {
    let grid = x0.grid();
    let (h, cells, m) = (grid.step(), grid.horizon_steps(), spec.dim_noise());
    let horizon = grid.horizon();
    if index == 0 {
        return match event {
            RareEvent::TerminalTarget { .. } => Control::zero(h, cells, m),
            RareEvent::SupExceed { .. } => Control::linear(h, cells, &vec![0.1 / horizon; m]),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let slope: Vec<f64> = (0..m)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let bump: Vec<f64> = (0..m)
        .map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Control::from_fn(h, cells, m, |t, out| {
        for i in 0..m {
            out[i] =
                slope[i] * t / horizon + bump[i] * libm::sin(core::f64::consts::PI * t / horizon);
        }
    })
}

/// Whether `candidate` should replace `best` in a running minimum: converged
/// estimates beat unconverged ones, then lower action wins, ties keep `best`.
pub fn improves(candidate: &RateEstimate, best: &RateEstimate) -> bool {
    match (candidate.converged, best.converged) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => candidate.value < best.value,
        (false, false) => candidate.residual < best.residual,
    }
}

/// Best of `restarts` minimisations started from [`restart_init`], reduced in index order.
pub fn rate_lower_bound_scan(
    spec: &ModelSpec,
    xi: &Segment<'_>,
    x0: &PathGrid,
    event: &RareEvent,
    restarts: usize,
    opts: &RateOptions,
) -> Result<RateEstimate> {
    if restarts == 0 {
        return Err(config("restarts must be at least 1"));
    }
    let mut best: Option<RateEstimate> = None;
    for k in 0..restarts as u64 {
        let init = restart_init(spec, x0, event, k, opts.seed);
        let est = minimize_rate(spec, xi, x0, event, &init, opts)?;
        best = match best {
            Some(b) if !improves(&est, &b) => Some(b),
            _ => Some(est),
        };
    }
    Ok(best.expect("at least one restart"))
}
