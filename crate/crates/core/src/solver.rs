//! Explicit Euler on the transformed variable `Z(t) = X(t) − D(X_t)`.
//!
//! Every scheme in the crate (limit ODE, skeletons, frozen-law SDEs, particle
//! systems) advances `Z` by one explicit step and then recovers the new node
//! `X(t_{k+1})` by inverting `x ↦ x − D(segment with head x)`. Since `D` is
//! an `α`-contraction with `α < 1`, the inversion is a fixed-point iteration
//! converging at rate `α`; when `D` does not read `ξ(0)` it is one explicit
//! evaluation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config, Error, Result};
use crate::model::ModelSpec;
use crate::path::{EmpiricalLaw, PathGrid, Segment, TimeGrid};
use crate::rate::Control;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            fixed_point_tol: 1e-12,
            fixed_point_max_iter: 100,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.fixed_point_tol > 0.0) || self.fixed_point_max_iter == 0 {
            return Err(config(
                "fixed-point tolerance must be positive and the iteration cap at least 1",
            ));
        }
        Ok(())
    }
}

/// Solves `x − D(history with head x) = z` for the newest node `x`.
pub fn neutral_step_solve(
    spec: &ModelSpec,
    z: &[f64],
    history: &Segment<'_>,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    if z.len() != spec.dim_state() || history.dim() != spec.dim_state() {
        return Err(config("neutral solve: dimension mismatch"));
    }
    let mut x = vec![0.0; z.len()];
    let mut scratch = vec![0.0; z.len()];
    invert_neutral(spec, z, history, opts, &mut x, &mut scratch)?;
    Ok(x)
}

pub(crate) fn invert_neutral(
    spec: &ModelSpec,
    z: &[f64],
    history: &Segment<'_>,
    opts: &SolverOptions,
    x: &mut [f64],
    dval: &mut [f64],
) -> Result<()> {
    if !spec.head_dependent() {
        spec.neutral(&history.with_head(z), dval);
        for ((xi, zi), di) in x.iter_mut().zip(z).zip(dval.iter()) {
            *xi = zi + di;
        }
        return Ok(());
    }
    let scale = opts.fixed_point_tol * (1.0 + crate::path::norm(z));
    x.copy_from_slice(z);
    let mut residual = f64::INFINITY;
    for _ in 0..opts.fixed_point_max_iter {
        spec.neutral(&history.with_head(x), dval);
        residual = libm::sqrt(
            x.iter()
                .zip(z)
                .zip(dval.iter())
                .map(|((a, b), c)| (a - c - b) * (a - c - b))
                .sum(),
        );
        if residual <= scale {
            return Ok(());
        }
        for ((xi, zi), di) in x.iter_mut().zip(z).zip(dval.iter()) {
            *xi = zi + di;
        }
    }
    spec.neutral(&history.with_head(x), dval);
    let last = libm::sqrt(
        x.iter()
            .zip(z)
            .zip(dval.iter())
            .map(|((a, b), c)| (a - c - b) * (a - c - b))
            .sum(),
    );
    if last <= scale {
        return Ok(());
    }
    Err(Error::FixedPoint {
        iterations: opts.fixed_point_max_iter,
        residual: residual.min(last),
    })
}

/// Which measure enters the coefficients at time `t`.
#[derive(Clone, Copy)]
pub(crate) enum LawArg<'a> {
    /// `δ_{X_t}` of the path being built (the limit ODE).
    OwnDirac,
    /// `δ_{X⁰_t}` of a precomputed limit path.
    Frozen(&'a PathGrid),
}

/// Noise or control forcing: `scale·σ·Δ_k` with `Δ_k` the `m`-vector of cell `k`.
#[derive(Clone, Copy)]
pub(crate) struct Forcing<'a> {
    pub scale: f64,
    pub increments: &'a [f64],
}

pub(crate) fn check_initial(spec: &ModelSpec, xi: &Segment<'_>, grid: &TimeGrid) -> Result<()> {
    if xi.dim() != spec.dim_state() {
        return Err(config(format!(
            "initial segment has dim {}, model has {}",
            xi.dim(),
            spec.dim_state()
        )));
    }
    if xi.len() != grid.lag_steps() + 1 {
        return Err(config(format!(
            "initial segment has {} nodes, grid needs {}",
            xi.len(),
            grid.lag_steps() + 1
        )));
    }
    Ok(())
}

pub(crate) fn check_limit_path(spec: &ModelSpec, x0: &PathGrid, grid: &TimeGrid) -> Result<()> {
    if x0.grid() != grid || x0.dim() != spec.dim_state() {
        return Err(config("limit path does not live on the solver grid"));
    }
    Ok(())
}

pub(crate) fn initial_values(xi: &Segment<'_>, grid: &TimeGrid) -> Vec<f64> {
    let d = xi.dim();
    let mut values = vec![0.0; grid.node_count() * d];
    for (j, v) in xi.nodes().enumerate() {
        values[j * d..(j + 1) * d].copy_from_slice(v);
    }
    values
}

/// Per-path buffers reused across steps.
pub(crate) struct StepBuffers {
    pub z: Vec<f64>,
    pub drift: Vec<f64>,
    pub sigma: Vec<f64>,
    pub x: Vec<f64>,
    pub dval: Vec<f64>,
}

impl StepBuffers {
    pub fn new(d: usize, m: usize) -> Self {
        Self {
            z: vec![0.0; d],
            drift: vec![0.0; d],
            sigma: vec![0.0; d * m],
            x: vec![0.0; d],
            dval: vec![0.0; d],
        }
    }

    /// `Z(0) = ξ(0) − D(ξ)`
    pub fn start(&mut self, spec: &ModelSpec, xi: &Segment<'_>) {
        spec.neutral(xi, &mut self.dval);
        for ((z, h), dv) in self.z.iter_mut().zip(xi.head()).zip(&self.dval) {
            *z = h - dv;
        }
    }

    /// `Z += scale·σ·Δ` using the diffusion matrix already in `self.sigma`.
    pub fn add_forcing(&mut self, scale: f64, increment: &[f64]) {
        if scale == 0.0 {
            return;
        }
        let m = increment.len();
        for (i, z) in self.z.iter_mut().enumerate() {
            let row = &self.sigma[i * m..(i + 1) * m];
            let acc: f64 = row.iter().zip(increment).map(|(s, w)| s * w).sum();
            *z += scale * acc;
        }
    }

    pub fn add_drift(&mut self, step: f64) {
        for (z, b) in self.z.iter_mut().zip(&self.drift) {
            *z += step * b;
        }
    }
}

/// One explicit march over `[0, T]`; see the module docs.
///
/// `freeze_block` switches the diffusion arguments to the frozen windows at
/// `t_n` (own path and limit path); the drift always reads live windows.
pub(crate) fn march(
    spec: &ModelSpec,
    xi: &Segment<'_>,
    grid: &TimeGrid,
    opts: &SolverOptions,
    law: LawArg<'_>,
    forcing: Option<Forcing<'_>>,
    freeze_block: Option<usize>,
) -> Result<PathGrid> {
    opts.validate()?;
    check_initial(spec, xi, grid)?;
    if let LawArg::Frozen(x0) = law {
        check_limit_path(spec, x0, grid)?;
    }
    let (d, m) = (spec.dim_state(), spec.dim_noise());
    let (lag, steps, h) = (grid.lag_steps(), grid.horizon_steps(), grid.step());
    if let Some(f) = forcing {
        if f.increments.len() != steps * m {
            return Err(config(format!(
                "forcing needs {} increments, got {}",
                steps * m,
                f.increments.len()
            )));
        }
    }
    let mut values = initial_values(xi, grid);
    let mut buf = StepBuffers::new(d, m);
    buf.start(spec, xi);

    for k in 0..steps {
        {
            let seg = Segment::window(&values, d, k, lag);
            let live_law = match law {
                LawArg::OwnDirac => EmpiricalLaw::dirac(seg),
                LawArg::Frozen(x0) => EmpiricalLaw::dirac(x0.segment_at_index(k)),
            };
            spec.drift(&seg, &live_law, &mut buf.drift);
            buf.add_drift(h);
            if let Some(f) = forcing {
                match (freeze_block, law) {
                    (Some(block), LawArg::Frozen(x0)) => {
                        let jn = TimeGrid::frozen_index(k, block);
                        let frozen = seg.clamped(lag + jn);
                        let frozen_law = EmpiricalLaw::dirac(x0.frozen_segment_at_index(k, block));
                        spec.diffusion(&frozen, &frozen_law, &mut buf.sigma);
                    }
                    (Some(block), LawArg::OwnDirac) => {
                        let frozen = seg.clamped(lag + TimeGrid::frozen_index(k, block));
                        spec.diffusion(&frozen, &EmpiricalLaw::dirac(frozen), &mut buf.sigma);
                    }
                    (None, _) => spec.diffusion(&seg, &live_law, &mut buf.sigma),
                }
                buf.add_forcing(f.scale, &f.increments[k * m..(k + 1) * m]);
            }
        }
        let next = lag + k + 1;
        {
            let hist = Segment::window(&values, d, k + 1, lag);
            invert_neutral(spec, &buf.z, &hist, opts, &mut buf.x, &mut buf.dval)?;
        }
        values[next * d..(next + 1) * d].copy_from_slice(&buf.x);
    }
    PathGrid::new(*grid, d, values)
}

/// The deterministic limit `d(X⁰ − D(X⁰_t)) = b(X⁰_t, δ_{X⁰_t}) dt`, `X⁰_0 = ξ`.
pub fn solve_limit_ode(
    spec: &ModelSpec,
    xi: &Segment<'_>,
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<PathGrid> {
    march(spec, xi, grid, opts, LawArg::OwnDirac, None, None)
}

fn check_control(spec: &ModelSpec, phi: &Control, grid: &TimeGrid) -> Result<()> {
    if phi.dim() != spec.dim_noise()
        || phi.cells() != grid.horizon_steps()
        || libm::fabs(phi.step() - grid.step()) > 1e-12 * grid.step()
    {
        return Err(config(
            "control does not match the solver grid or noise dimension",
        ));
    }
    Ok(())
}

/// The skeleton `M(φ)`: the limit equation forced by `σ(M_s(φ), δ_{X⁰_s}) φ̇(s) ds`.
pub fn solve_skeleton(
    spec: &ModelSpec,
    xi: &Segment<'_>,
    phi: &Control,
    x0: &PathGrid,
    opts: &SolverOptions,
) -> Result<PathGrid> {
    let grid = *x0.grid();
    check_control(spec, phi, &grid)?;
    let inc = phi.increments();
    march(
        spec,
        xi,
        &grid,
        opts,
        LawArg::Frozen(x0),
        Some(Forcing {
            scale: 1.0,
            increments: &inc,
        }),
        None,
    )
}

/// The discretized skeleton `M^n(φ)`: diffusion arguments frozen at `t_n`.
pub fn solve_skeleton_discretized(
    spec: &ModelSpec,
    xi: &Segment<'_>,
    phi: &Control,
    n: usize,
    x0: &PathGrid,
    opts: &SolverOptions,
) -> Result<PathGrid> {
    let grid = *x0.grid();
    let block = grid.block_cells(n)?;
    check_control(spec, phi, &grid)?;
    let inc = phi.increments();
    march(
        spec,
        xi,
        &grid,
        opts,
        LawArg::Frozen(x0),
        Some(Forcing {
            scale: 1.0,
            increments: &inc,
        }),
        Some(block),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Constants;
    use crate::model::{builtin, head_neutral, zero_model, LinearMeanField};

    fn grid(h: f64) -> TimeGrid {
        TimeGrid::new(0.5, 1.0, h).unwrap()
    }

    fn decay_model() -> ModelSpec {
        // D = 0, b = −ξ(0)
        LinearMeanField {
            delay_weight: 0.0,
            head_weight: 0.0,
            reversion: 1.0,
            mean_field: 0.0,
            sigma_base: 0.0,
            sigma_amp: 0.0,
            drift_cap: None,
        }
        .into_spec(
            "DECAY",
            Constants {
                alpha: 0.01,
                lipschitz: 1.0,
                growth: 1.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn neutral_solve_closed_forms() {
        let opts = SolverOptions::default();
        let hist = [2.0, 7.0, -1.0, 123.0];
        let seg = Segment::from_nodes(&hist, 1).unwrap();
        let x = neutral_step_solve(&zero_model(), &[3.0], &seg, &opts).unwrap();
        assert_eq!(x, vec![3.0]);
        let x = neutral_step_solve(&head_neutral(0.25).unwrap(), &[3.0], &seg, &opts).unwrap();
        assert!((x[0] - 4.0).abs() < 1e-10);
        // pure delay: D = 0.25·ξ(−τ) with ξ(−τ) = 2
        let x = neutral_step_solve(&builtin("TEST-1").unwrap(), &[1.0], &seg, &opts).unwrap();
        assert_eq!(x, vec![1.5]);
    }

    #[test]
    fn neutral_solve_reports_non_convergence() {
        let opts = SolverOptions {
            fixed_point_tol: 1e-15,
            fixed_point_max_iter: 2,
        };
        let hist = [0.0, 0.0];
        let seg = Segment::from_nodes(&hist, 1).unwrap();
        let err = neutral_step_solve(&head_neutral(0.9).unwrap(), &[1.0], &seg, &opts).unwrap_err();
        assert!(matches!(err, Error::FixedPoint { iterations: 2, .. }));
    }

    #[test]
    fn limit_ode_of_schilder_is_constant() {
        let g = grid(0.01);
        let xi = PathGrid::constant(g, &[1.7]);
        let x0 = solve_limit_ode(
            &builtin("SCHILDER").unwrap(),
            &xi.initial_segment(),
            &g,
            &Default::default(),
        )
        .unwrap();
        assert!(x0.values().iter().all(|&v| v == 1.7));
    }

    #[test]
    fn limit_ode_matches_exponential_decay() {
        let h = 1e-3;
        let g = grid(h);
        let xi = PathGrid::constant(g, &[1.0]);
        let x0 = solve_limit_ode(
            &decay_model(),
            &xi.initial_segment(),
            &g,
            &Default::default(),
        )
        .unwrap();
        let end = x0.eval(1.0).unwrap()[0];
        assert!((end - (-1.0f64).exp()).abs() < 2.0 * h, "{end}");
    }

    #[test]
    fn initial_segment_is_preserved() {
        let g = grid(0.0625);
        let xi = PathGrid::from_fn(g, 1, |t, o| o[0] = 1.0 + t);
        let x0 = solve_limit_ode(
            &builtin("TEST-1").unwrap(),
            &xi.initial_segment(),
            &g,
            &Default::default(),
        )
        .unwrap();
        assert_eq!(x0.initial_segment().to_vec(), xi.initial_segment().to_vec());
    }

    #[test]
    fn mismatched_initial_segment_is_rejected() {
        let g = grid(0.0625);
        let short = [1.0, 1.0];
        let seg = Segment::from_nodes(&short, 1).unwrap();
        assert!(matches!(
            solve_limit_ode(&builtin("TEST-1").unwrap(), &seg, &g, &Default::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn schilder_skeleton_reproduces_the_control() {
        let g = grid(1.0 / 64.0);
        let spec = builtin("SCHILDER").unwrap();
        let xi = PathGrid::constant(g, &[0.0]);
        let x0 = solve_limit_ode(&spec, &xi.initial_segment(), &g, &Default::default()).unwrap();
        let phi = Control::from_fn(g.step(), g.horizon_steps(), 1, |t, o| {
            o[0] = libm::sin(3.0 * t) + t * t
        });
        let m =
            solve_skeleton(&spec, &xi.initial_segment(), &phi, &x0, &Default::default()).unwrap();
        for j in 0..=g.horizon_steps() {
            let t = j as f64 * g.step();
            assert!((m.eval(t).unwrap()[0] - phi.node(j)[0]).abs() < 1e-12);
        }
        for n in [1, 4, 16] {
            let mn = solve_skeleton_discretized(
                &spec,
                &xi.initial_segment(),
                &phi,
                n,
                &x0,
                &Default::default(),
            )
            .unwrap();
            assert_eq!(mn, m);
        }
    }

    #[test]
    fn zero_control_reproduces_limit_path() {
        let g = grid(1.0 / 128.0);
        let spec = builtin("TEST-1").unwrap();
        let xi = PathGrid::from_fn(g, 1, |t, o| o[0] = 1.0 + 0.5 * t);
        let x0 = solve_limit_ode(&spec, &xi.initial_segment(), &g, &Default::default()).unwrap();
        let zero = Control::zero(g.step(), g.horizon_steps(), 1);
        let m = solve_skeleton(
            &spec,
            &xi.initial_segment(),
            &zero,
            &x0,
            &Default::default(),
        )
        .unwrap();
        let mn = solve_skeleton_discretized(
            &spec,
            &xi.initial_segment(),
            &zero,
            8,
            &x0,
            &Default::default(),
        )
        .unwrap();
        assert!(m.sup_distance(&x0) <= 1e-12);
        assert!(mn.sup_distance(&x0) <= 1e-12);
    }

    #[test]
    fn discretized_skeleton_requires_aligned_blocks() {
        let g = grid(0.0625);
        let spec = builtin("TEST-1").unwrap();
        let xi = PathGrid::constant(g, &[1.0]);
        let x0 = solve_limit_ode(&spec, &xi.initial_segment(), &g, &Default::default()).unwrap();
        let phi = Control::zero(g.step(), g.horizon_steps(), 1);
        assert!(solve_skeleton_discretized(
            &spec,
            &xi.initial_segment(),
            &phi,
            32,
            &x0,
            &Default::default()
        )
        .is_err());
    }
}
