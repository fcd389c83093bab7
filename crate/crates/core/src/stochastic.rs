//! Euler–Maruyama schemes driven by [`NoiseBundle`]s: the interacting
//! particle system for `X^ε`, the frozen-law process `Y^ε`, its discretized
//! and truncated variants, and the Itô tail experiment.
//!
//! Every path is a pure function of its inputs and noise; none of the
//! functions here keep state between calls.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bounds::ito_tail_bound;
use crate::error::{config, domain, Result};
use crate::model::{truncate, ModelSpec};
use crate::noise::{MonitorStream, NoiseBundle, StreamId};
use crate::path::{distance, EmpiricalLaw, PathGrid, Segment, TimeGrid};
use crate::solver::{
    check_initial, initial_values, invert_neutral, march, Forcing, LawArg, SolverOptions,
    StepBuffers,
};
use crate::stats::{bridge_exit_probability, brownian_two_sided_exit, wilson_interval, Z95};

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(domain(format!(
            "noise level eps = {eps} must lie in [0, 1]"
        )));
    }
    Ok(())
}

fn check_noise(spec: &ModelSpec, grid: &TimeGrid, noise: &NoiseBundle) -> Result<()> {
    if noise.dim() != spec.dim_noise()
        || noise.cells() != grid.horizon_steps()
        || libm::fabs(noise.step() - grid.step()) > 1e-12 * grid.step()
    {
        return Err(config(
            "noise bundle does not match the grid or noise dimension",
        ));
    }
    Ok(())
}

/// `N` interacting particles sharing the initial segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub eps: f64,
    paths: Vec<PathGrid>,
}

impl ParticleCloud {
    pub fn paths(&self) -> &[PathGrid] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.paths[0].grid()
    }

    /// Empirical law of the `N` segments at `t`.
    pub fn law_at(&self, t: f64) -> Result<EmpiricalLaw<'_>> {
        let j = self.grid().anchor_index(t)?;
        EmpiricalLaw::new(self.paths.iter().map(|p| p.segment_at_index(j)).collect())
    }
}

/// One noise bundle per particle of replica `replica`.
pub fn cloud_noise(
    master_seed: u64,
    replica: u64,
    particles: usize,
    spec: &ModelSpec,
    grid: &TimeGrid,
) -> Result<Vec<NoiseBundle>> {
    (0..particles)
        .map(|i| {
            let particle = u32::try_from(i).map_err(|_| config("too many particles"))?;
            NoiseBundle::generate(
                master_seed,
                StreamId::new(replica, particle),
                spec.dim_noise(),
                grid.horizon_steps(),
                grid.step(),
            )
        })
        .collect()
}

/// Particle approximation of `X^ε`: particle `i` is driven by `noise[i]` and
/// every coefficient reads the cloud's empirical law at the start of the step.
pub fn simulate_particles(
    spec: &ModelSpec,
    xi: &Segment<'_>,
    eps: f64,
    grid: &TimeGrid,
    noise: &[NoiseBundle],
    opts: &SolverOptions,
) -> Result<ParticleCloud> {
    check_eps(eps)?;
    opts.validate()?;
    check_initial(spec, xi, grid)?;
    if noise.is_empty() {
        return Err(config("a particle system needs at least one particle"));
    }
    for nb in noise {
        check_noise(spec, grid, nb)?;
    }
    let (d, m) = (spec.dim_state(), spec.dim_noise());
    let (lag, steps, h) = (grid.lag_steps(), grid.horizon_steps(), grid.step());
    let scale = libm::sqrt(eps);
    let n = noise.len();
    let mut values: Vec<Vec<f64>> = vec![initial_values(xi, grid); n];
    let mut bufs: Vec<StepBuffers> = (0..n).map(|_| StepBuffers::new(d, m)).collect();
    for b in bufs.iter_mut() {
        b.start(spec, xi);
    }

    for k in 0..steps {
        {
            let law = EmpiricalLaw::new(
                values
                    .iter()
                    .map(|v| Segment::window(v, d, k, lag))
                    .collect(),
            )?;
            for (i, buf) in bufs.iter_mut().enumerate() {
                let seg = law.atoms()[i];
                spec.drift(&seg, &law, &mut buf.drift);
                buf.add_drift(h);
                if scale != 0.0 {
                    spec.diffusion(&seg, &law, &mut buf.sigma);
                    buf.add_forcing(scale, noise[i].cell(k));
                }
            }
        }
        let next = lag + k + 1;
        for (v, buf) in values.iter_mut().zip(bufs.iter_mut()) {
            {
                let hist = Segment::window(v, d, k + 1, lag);
                invert_neutral(spec, &buf.z, &hist, opts, &mut buf.x, &mut buf.dval)?;
            }
            v[next * d..(next + 1) * d].copy_from_slice(&buf.x);
        }
    }
    let paths = values
        .into_iter()
        .map(|v| PathGrid::new(*grid, d, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParticleCloud { eps, paths })
}

/// `Y^ε`: the law argument frozen at `δ_{X⁰_t}`.
pub fn simulate_frozen(
    spec: &ModelSpec,
    xi: &Segment<'_>,
    eps: f64,
    grid: &TimeGrid,
    noise: &NoiseBundle,
    x0: &PathGrid,
    opts: &SolverOptions,
) -> Result<PathGrid> {
    check_eps(eps)?;
    check_noise(spec, grid, noise)?;
    let forcing = Forcing {
        scale: libm::sqrt(eps),
        increments: noise.increments(),
    };
    march(
        spec,
        xi,
        grid,
        opts,
        LawArg::Frozen(x0),
        Some(forcing),
        None,
    )
}

/// `Y^{ε,n}`: live drift, diffusion arguments frozen at `t_n = ⌊nt⌋/n`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_frozen_discretized(
    spec: &ModelSpec,
    xi: &Segment<'_>,
    eps: f64,
    n: usize,
    grid: &TimeGrid,
    noise: &NoiseBundle,
    x0: &PathGrid,
    opts: &SolverOptions,
) -> Result<PathGrid> {
    check_eps(eps)?;
    check_noise(spec, grid, noise)?;
    let block = grid.block_cells(n)?;
    let forcing = Forcing {
        scale: libm::sqrt(eps),
        increments: noise.increments(),
    };
    march(
        spec,
        xi,
        grid,
        opts,
        LawArg::Frozen(x0),
        Some(forcing),
        Some(block),
    )
}

/// `Y^{ε,R}`: [`simulate_frozen`] on `truncate(spec, R)`.
///
/// Truncation samples the coefficient bound on every call; Monte Carlo loops
/// should truncate once and call [`simulate_frozen`] with the result.
#[allow(clippy::too_many_arguments)]
pub fn simulate_truncated(
    spec: &ModelSpec,
    xi: &Segment<'_>,
    eps: f64,
    radius: f64,
    grid: &TimeGrid,
    noise: &NoiseBundle,
    x0: &PathGrid,
    opts: &SolverOptions,
) -> Result<PathGrid> {
    simulate_frozen(&truncate(spec, radius)?, xi, eps, grid, noise, x0, opts)
}

/// `sup_{t∈[0,T]} |a(t) − b(t)|` over grid nodes.
pub fn sup_gap(a: &PathGrid, b: &PathGrid) -> f64 {
    let d = a.dim();
    let lag = a.grid().lag_steps();
    a.values()[lag * d..]
        .chunks_exact(d)
        .zip(b.values()[lag * d..].chunks_exact(d))
        .map(|(x, y)| distance(x, y))
        .fold(0.0, f64::max)
}

/// Whether a scalar path leaves the band `|x − reference| < delta` on `[0, T]`.
///
/// Between nodes the path is treated as a Brownian bridge with variance rate
/// `var_rate` relative to the (linear) reference, and a crossing inside a cell
/// is drawn with the exact bridge probability. This is exact for constant
/// diffusion and affine drift. One uniform is consumed per cell whether or
/// not it is needed, so the decision for cell `k` depends only on `k`.
pub fn sup_exceeds_bridged(
    path: &PathGrid,
    reference: &PathGrid,
    delta: f64,
    var_rate: f64,
    monitor: &mut MonitorStream,
) -> Result<bool> {
    if path.dim() != 1 || reference.dim() != 1 {
        return Err(crate::Error::Unsupported(
            "bridge monitoring is implemented for scalar paths only".into(),
        ));
    }
    let grid = path.grid();
    let (lag, h) = (grid.lag_steps(), grid.step());
    let (x, r) = (path.values(), reference.values());
    let mut hit = libm::fabs(x[lag] - r[lag]) >= delta;
    for k in lag..grid.node_count() - 1 {
        let u = monitor.uniform();
        if hit {
            continue;
        }
        let (a, b) = (x[k] - r[k], x[k + 1] - r[k + 1]);
        hit = u < bridge_exit_probability(a, b, 0.0, delta, var_rate, h);
    }
    Ok(hit)
}

/// Outcome of the Itô tail experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItoTail {
    pub hits: u64,
    pub replicas: u64,
    pub p_hat: f64,
    pub ci: (f64, f64),
    /// `2d·exp(−(R − √d·B·T)²/(2A²dT))`
    pub bound: f64,
    /// Exact `P(sup|ξ| ≥ R)` by reflection, available for `d = 1`, `B = 0`.
    pub reflection: Option<f64>,
}

/// Settings of the Itô tail experiment: `ξ(t) = ∫α dW + ∫β ds` with
/// `α = (A/√d)·I` and `β = (B/√d)·(1, …, 1)`, so `‖α‖_HS = A` and `|β| = B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItoTailSpec {
    pub a: f64,
    pub b: f64,
    pub dim: usize,
    pub horizon: f64,
    pub level: f64,
    pub cells: usize,
    /// Brownian-bridge crossing correction between nodes (`d = 1` only).
    pub bridge: bool,
}

impl ItoTailSpec {
    pub fn bound(&self) -> Result<f64> {
        let b = ito_tail_bound(self.a, self.b, self.dim, self.horizon, self.level)?;
        if self.cells == 0 {
            return Err(config("the Itô tail check needs at least one cell"));
        }
        if self.bridge && self.dim != 1 {
            return Err(crate::Error::Unsupported(
                "bridge monitoring needs d = 1".into(),
            ));
        }
        Ok(b)
    }

    /// Whether replica `replica` reaches `|ξ| ≥ R` on `[0, T]`.
    pub fn replica_hits(&self, master_seed: u64, replica: u64) -> Result<bool> {
        let d = self.dim;
        let h = self.horizon / self.cells as f64;
        let noise =
            NoiseBundle::generate(master_seed, StreamId::new(replica, 0), d, self.cells, h)?;
        let sd = libm::sqrt(d as f64);
        let (diff, drift) = (self.a / sd, self.b / sd);
        let mut monitor = if self.bridge {
            Some(MonitorStream::new(master_seed, StreamId::new(replica, 0))?)
        } else {
            None
        };
        let mut x = vec![0.0; d];
        let mut hit = false;
        for k in 0..self.cells {
            let prev = x[0];
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += drift * h + diff * noise.cell(k)[i];
            }
            if let Some(mon) = monitor.as_mut() {
                let u = mon.uniform();
                hit =
                    hit || u < bridge_exit_probability(prev, x[0], 0.0, self.level, diff * diff, h);
            }
            hit = hit || crate::path::norm(&x) >= self.level;
        }
        Ok(hit)
    }

    pub fn summarize(&self, hits: u64, replicas: u64) -> Result<ItoTail> {
        let bound = self.bound()?;
        let reflection = (self.dim == 1 && self.b == 0.0)
            .then(|| brownian_two_sided_exit(self.level / self.a, self.horizon));
        Ok(ItoTail {
            hits,
            replicas,
            p_hat: hits as f64 / replicas.max(1) as f64,
            ci: wilson_interval(hits, replicas, Z95),
            bound,
            reflection,
        })
    }
}

/// Serial Itô tail check over replicas `0..replicas`.
pub fn ito_tail_check(setting: &ItoTailSpec, replicas: u64, master_seed: u64) -> Result<ItoTail> {
    setting.bound()?;
    let mut hits = 0;
    for r in 0..replicas {
        hits += u64::from(setting.replica_hits(master_seed, r)?);
    }
    setting.summarize(hits, replicas)
}
