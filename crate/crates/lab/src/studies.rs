//! Monte Carlo and deterministic studies behind the CLI subcommands.
//!
//! Replicas run through [`Runner::map`]; every reduction walks the returned
//! vector in replica order.

use nmv_core::bounds::compute_paper_bounds;
use nmv_core::model::truncate;
use nmv_core::noise::{MonitorStream, NoiseBundle, StreamId};
use nmv_core::rate::{improves, restart_init};
use nmv_core::solver::{solve_skeleton, solve_skeleton_discretized};
use nmv_core::stats::{brownian_two_sided_exit, mean_and_stderr, wilson_interval, Z95};
use nmv_core::stochastic::{
    cloud_noise, simulate_frozen, simulate_frozen_discretized, simulate_particles,
    sup_exceeds_bridged, sup_gap, ItoTail, ItoTailSpec,
};
use nmv_core::{
    minimize_rate, Control, EmpiricalLaw, ModelSpec, PathGrid, RareEvent, RateEstimate, RateOptions,
};
use serde::Serialize;

use crate::config::{Experiment, Process};
use crate::{LabError, Runner};

/// Binomial tail estimate on one row; `eps_log_p` is `None` without hits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub hits: u64,
    pub samples: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub eps_log_p: Option<f64>,
}

impl TailEstimate {
    pub fn new(eps: f64, hits: u64, samples: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(hits, samples, Z95);
        let p_hat = hits as f64 / samples as f64;
        let eps_log_p = (hits > 0).then(|| eps * p_hat.ln());
        Self {
            hits,
            samples,
            p_hat,
            ci_lo,
            ci_hi,
            eps_log_p,
        }
    }

    pub fn resolved(&self) -> bool {
        self.eps_log_p.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    #[serde(flatten)]
    pub tail: TailEstimate,
    /// Exact probability when a closed form exists for the model and event.
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateSummary {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
}

impl From<&RateEstimate> for RateSummary {
    fn from(e: &RateEstimate) -> Self {
        Self {
            value: e.value,
            converged: e.converged,
            iterations: e.iterations,
            residual: e.residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub rate: RateSummary,
}

fn rate_options(exp: &Experiment) -> RateOptions {
    RateOptions {
        seed: exp.study().master_seed,
        solver: exp.opts,
        ..RateOptions::default()
    }
}

/// Best of the configured restarts, minimised in parallel and reduced in order.
pub fn run_rate(exp: &Experiment, runner: &Runner) -> Result<RateEstimate, LabError> {
    let opts = rate_options(exp);
    let xi = exp.xi.initial_segment();
    let all = runner.map(exp.study().restarts as u64, |k| {
        let init = restart_init(&exp.spec, &exp.x0, &exp.event, k, opts.seed);
        Ok(minimize_rate(
            &exp.spec, &xi, &exp.x0, &exp.event, &init, &opts,
        )?)
    })?;
    let mut iter = all.into_iter();
    let mut best = iter
        .next()
        .ok_or_else(|| LabError::Config("restarts must be positive".into()))?;
    for est in iter {
        if improves(&est, &best) {
            best = est;
        }
    }
    Ok(best)
}

/// `ε·σ(ξ, δ_ξ)²` for a scalar model, the bridge variance rate.
fn bridge_variance(exp: &Experiment, eps: f64) -> f64 {
    let seg = exp.xi.initial_segment();
    let mut sigma = [0.0];
    exp.spec
        .diffusion(&seg, &EmpiricalLaw::dirac(seg), &mut sigma);
    eps * sigma[0] * sigma[0]
}

fn event_hit(
    exp: &Experiment,
    path: &PathGrid,
    var_rate: f64,
    stream: StreamId,
) -> Result<bool, LabError> {
    match &exp.event {
        RareEvent::SupExceed {
            delta, reference, ..
        } => {
            if exp.study().bridge_monitoring {
                let mut monitor = MonitorStream::new(exp.study().master_seed, stream)?;
                Ok(sup_exceeds_bridged(
                    path,
                    reference,
                    *delta,
                    var_rate,
                    &mut monitor,
                )?)
            } else {
                Ok(sup_gap(path, reference) >= *delta)
            }
        }
        RareEvent::TerminalTarget { target, tol } => {
            let end = path.node(path.grid().node_count() - 1);
            let dist = end
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            Ok(dist <= *tol)
        }
    }
}

fn frozen_noise(exp: &Experiment, replica: u64) -> Result<NoiseBundle, LabError> {
    let g = &exp.grid;
    Ok(NoiseBundle::generate(
        exp.study().master_seed,
        StreamId::new(replica, 0),
        exp.spec.dim_noise(),
        g.horizon_steps(),
        g.step(),
    )?)
}

fn particle_stream(replica: u64, i: usize) -> StreamId {
    StreamId::new(replica, i as u32)
}

/// Hits and sample paths of one replica at noise level `eps`.
fn sweep_replica(
    exp: &Experiment,
    eps: f64,
    var_rate: f64,
    replica: u64,
) -> Result<(u64, u64), LabError> {
    let xi = exp.xi.initial_segment();
    match exp.study().process {
        Process::Frozen => {
            let noise = frozen_noise(exp, replica)?;
            let y = simulate_frozen(&exp.spec, &xi, eps, &exp.grid, &noise, &exp.x0, &exp.opts)?;
            Ok((
                u64::from(event_hit(exp, &y, var_rate, StreamId::new(replica, 0))?),
                1,
            ))
        }
        Process::Particles => {
            let noise = cloud_noise(
                exp.study().master_seed,
                replica,
                exp.study().particles,
                &exp.spec,
                &exp.grid,
            )?;
            let cloud = simulate_particles(&exp.spec, &xi, eps, &exp.grid, &noise, &exp.opts)?;
            let mut hits = 0;
            for (i, p) in cloud.paths().iter().enumerate() {
                hits += u64::from(event_hit(exp, p, var_rate, particle_stream(replica, i))?);
            }
            Ok((hits, cloud.len() as u64))
        }
    }
}

fn exact_probability(exp: &Experiment, eps: f64) -> Option<f64> {
    match &exp.event {
        RareEvent::SupExceed { delta, .. }
            if exp.spec.name() == "SCHILDER" && exp.spec.dim_state() == 1 =>
        {
            Some(brownian_two_sided_exit(
                delta / eps.sqrt(),
                exp.grid.horizon(),
            ))
        }
        _ => None,
    }
}

/// `ε log P̂(event)` over the configured noise levels plus the rate estimate.
pub fn run_eps_sweep(exp: &Experiment, runner: &Runner) -> Result<SweepReport, LabError> {
    let s = exp.study();
    let mut rows = Vec::with_capacity(s.epsilons.len());
    for &eps in &s.epsilons {
        let var_rate = bridge_variance(exp, eps);
        let per = runner.map(s.replicas, |r| sweep_replica(exp, eps, var_rate, r))?;
        let (hits, samples) = per.iter().fold((0, 0), |(h, n), (a, b)| (h + a, n + b));
        rows.push(SweepRow {
            epsilon: eps,
            tail: TailEstimate::new(eps, hits, samples),
            exact: exact_probability(exp, eps),
        });
    }
    let rate = run_rate(exp, runner)?;
    Ok(SweepReport {
        rows,
        rate: RateSummary::from(&rate),
    })
}

/// Problems found by `sweep --check`; empty means the check passed.
pub fn sweep_failures(report: &SweepReport) -> Vec<String> {
    let mut out = Vec::new();
    let resolved: Vec<&SweepRow> = report.rows.iter().filter(|r| r.tail.resolved()).collect();
    if resolved.len() < 3 {
        out.push(format!("only {} resolved rows, need 3", resolved.len()));
    }
    if !report.rate.converged {
        out.push("rate minimisation did not converge".into());
    }
    let target = -report.rate.value;
    let dist: Vec<f64> = resolved
        .iter()
        .map(|r| (r.tail.eps_log_p.unwrap_or(f64::NAN) - target).abs())
        .collect();
    if dist.windows(2).any(|w| !(w[1] < w[0])) {
        out.push(format!(
            "|eps log p + I| is not strictly decreasing: {dist:?}"
        ));
    }
    match report.rows.last() {
        Some(last) if report.rate.converged => match last.tail.eps_log_p {
            Some(v) if (v - target).abs() <= 0.25 * target.abs() => {}
            Some(v) => out.push(format!(
                "smallest eps gives {v}, not within 25% of {target}"
            )),
            None => out.push("smallest eps is unresolved".into()),
        },
        _ => {}
    }
    for r in &report.rows {
        if let Some(p) = r.exact {
            if !(r.tail.ci_lo <= p && p <= r.tail.ci_hi) {
                out.push(format!(
                    "eps {}: exact {p} outside [{}, {}]",
                    r.epsilon, r.tail.ci_lo, r.tail.ci_hi
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceRow {
    pub epsilon: f64,
    pub delta: f64,
    pub gap_kind: String,
    #[serde(flatten)]
    pub tail: TailEstimate,
    /// Mean of `sup_t |·|` over all sample paths.
    pub mean_sup_gap: f64,
}

enum GapKind {
    ParticlesVsFrozen,
    Discretized(usize),
    Truncated(f64, ModelSpec),
}

impl GapKind {
    fn label(&self) -> String {
        match self {
            GapKind::ParticlesVsFrozen => "particles_vs_frozen".into(),
            GapKind::Discretized(n) => format!("discretized_n{n}"),
            GapKind::Truncated(r, _) => format!("truncated_R{r}"),
        }
    }
}

fn gap_kinds(exp: &Experiment) -> Result<Vec<GapKind>, LabError> {
    let s = exp.study();
    let mut kinds = Vec::new();
    if s.process == Process::Particles {
        kinds.push(GapKind::ParticlesVsFrozen);
    }
    kinds.extend(s.discretizations.iter().map(|&n| GapKind::Discretized(n)));
    for &r in &s.truncations {
        kinds.push(GapKind::Truncated(r, truncate(&exp.spec, r)?));
    }
    Ok(kinds)
}

/// Per kind: sup gaps of every sample path in the replica.
fn equivalence_replica(
    exp: &Experiment,
    kinds: &[GapKind],
    eps: f64,
    replica: u64,
) -> Result<Vec<Vec<f64>>, LabError> {
    let xi = exp.xi.initial_segment();
    let (spec, grid, x0, opts) = (&exp.spec, &exp.grid, &exp.x0, &exp.opts);
    let (noise, particles) = match exp.study().process {
        Process::Frozen => (vec![frozen_noise(exp, replica)?], None),
        Process::Particles => {
            let noise = cloud_noise(
                exp.study().master_seed,
                replica,
                exp.study().particles,
                spec,
                grid,
            )?;
            let cloud = simulate_particles(spec, &xi, eps, grid, &noise, opts)?;
            (noise, Some(cloud))
        }
    };
    let mut gaps = vec![Vec::with_capacity(noise.len()); kinds.len()];
    for (i, nb) in noise.iter().enumerate() {
        let y = simulate_frozen(spec, &xi, eps, grid, nb, x0, opts)?;
        for (kind, out) in kinds.iter().zip(gaps.iter_mut()) {
            let gap = match kind {
                GapKind::ParticlesVsFrozen => {
                    let cloud = particles.as_ref().expect("particle kind needs a cloud");
                    sup_gap(&cloud.paths()[i], &y)
                }
                GapKind::Discretized(n) => sup_gap(
                    &y,
                    &simulate_frozen_discretized(spec, &xi, eps, *n, grid, nb, x0, opts)?,
                ),
                GapKind::Truncated(_, model) => {
                    sup_gap(&y, &simulate_frozen(model, &xi, eps, grid, nb, x0, opts)?)
                }
            };
            out.push(gap);
        }
    }
    Ok(gaps)
}

/// Tails `P(sup_t |·| > δ)` of the pathwise gaps between the schemes.
pub fn run_equivalence_study(
    exp: &Experiment,
    runner: &Runner,
) -> Result<Vec<EquivalenceRow>, LabError> {
    let s = exp.study();
    let kinds = gap_kinds(exp)?;
    let mut rows = Vec::new();
    for &eps in &s.epsilons {
        let per = runner.map(s.replicas, |r| equivalence_replica(exp, &kinds, eps, r))?;
        for (k, kind) in kinds.iter().enumerate() {
            let (mut hits, mut samples, mut total) = (0u64, 0u64, 0.0);
            for replica in &per {
                for &g in &replica[k] {
                    hits += u64::from(g > s.gap_delta);
                    samples += 1;
                    total += g;
                }
            }
            rows.push(EquivalenceRow {
                epsilon: eps,
                delta: s.gap_delta,
                gap_kind: kind.label(),
                tail: TailEstimate::new(eps, hits, samples),
                mean_sup_gap: total / samples as f64,
            });
        }
    }
    Ok(rows)
}

/// Problems found by `equivalence --check`.
pub fn equivalence_failures(rows: &[EquivalenceRow]) -> Vec<String> {
    let mut out = Vec::new();
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.gap_kind.as_str()) {
            labels.push(&r.gap_kind);
        }
    }
    for label in labels {
        let values: Vec<f64> = rows
            .iter()
            .filter(|r| r.gap_kind == label)
            .filter_map(|r| r.tail.eps_log_p)
            .collect();
        if values.len() < 3 {
            if label == "particles_vs_frozen" {
                out.push(format!(
                    "{label}: only {} resolved rows, need 3",
                    values.len()
                ));
            }
            continue;
        }
        if values.windows(2).any(|w| !(w[1] < w[0])) {
            out.push(format!(
                "{label}: eps log p is not strictly decreasing: {values:?}"
            ));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRow {
    pub epsilon: f64,
    pub samples: u64,
    /// Monte Carlo `E sup_t ‖X_t‖²_∞` with its standard error.
    pub second_moment: f64,
    pub second_moment_se: f64,
    /// Monte Carlo `E sup_t ‖X_t − X⁰_t‖²_∞`.
    pub gap_moment: f64,
    pub gap_moment_se: f64,
    pub l3: f64,
    pub l4: f64,
    pub x0_sup_squared: f64,
    pub x0_bound: f64,
}

impl MomentRow {
    pub fn within_bounds(&self) -> bool {
        self.second_moment <= self.l3
            && self.gap_moment <= self.l4
            && self.x0_sup_squared <= self.x0_bound
    }
}

fn sup_squared(p: &PathGrid) -> f64 {
    let s = p.sup_norm();
    s * s
}

/// Second moments of the particle system against the closed-form bounds.
pub fn run_moment_study(exp: &Experiment, runner: &Runner) -> Result<Vec<MomentRow>, LabError> {
    let s = exp.study();
    let c = exp.spec.constants();
    let xi = exp.xi.initial_segment();
    let norm_xi = xi.sup_norm();
    let mut rows = Vec::new();
    for &eps in &s.epsilons {
        let per = runner.map(s.replicas, |r| {
            let noise = cloud_noise(s.master_seed, r, s.particles, &exp.spec, &exp.grid)?;
            let cloud = simulate_particles(&exp.spec, &xi, eps, &exp.grid, &noise, &exp.opts)?;
            Ok(cloud
                .paths()
                .iter()
                .map(|p| (sup_squared(p), sup_gap(p, &exp.x0).powi(2)))
                .collect::<Vec<_>>())
        })?;
        let (sq, gap): (Vec<f64>, Vec<f64>) = per.into_iter().flatten().unzip();
        let (second_moment, second_moment_se) = mean_and_stderr(&sq);
        let (gap_moment, gap_moment_se) = mean_and_stderr(&gap);
        let b = compute_paper_bounds(
            c.alpha,
            c.lipschitz,
            c.growth,
            exp.grid.horizon(),
            eps,
            norm_xi,
        )?;
        rows.push(MomentRow {
            epsilon: eps,
            samples: sq.len() as u64,
            second_moment,
            second_moment_se,
            gap_moment,
            gap_moment_se,
            l3: b.l3,
            l4: b.l4,
            x0_sup_squared: sup_squared(&exp.x0),
            x0_bound: b.x0_bound,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MnRow {
    pub n: usize,
    /// `sup_t |M(t) − M^n(t)|` for the unit-slope control.
    pub gap: f64,
}

/// Gap between the skeleton and its `n`-discretised version for `φ(t) = t`.
pub fn run_mn_convergence(exp: &Experiment, runner: &Runner) -> Result<Vec<MnRow>, LabError> {
    let g = &exp.grid;
    let xi = exp.xi.initial_segment();
    let phi = Control::linear(
        g.step(),
        g.horizon_steps(),
        &vec![1.0; exp.spec.dim_noise()],
    );
    let m = solve_skeleton(&exp.spec, &xi, &phi, &exp.x0, &exp.opts)?;
    let ns = &exp.study().discretizations;
    let gaps = runner.map(ns.len() as u64, |k| {
        let mn =
            solve_skeleton_discretized(&exp.spec, &xi, &phi, ns[k as usize], &exp.x0, &exp.opts)?;
        Ok(m.sup_distance(&mn))
    })?;
    Ok(ns
        .iter()
        .zip(gaps)
        .map(|(&n, gap)| MnRow { n, gap })
        .collect())
}

/// Worst allowed ratio `gap(4n)/gap(n)`.
pub const MN_RATIO: f64 = 0.7;

/// Every `(n, 4n)` pair must shrink the gap by [`MN_RATIO`].
pub fn mn_failures(rows: &[MnRow]) -> Vec<String> {
    let mut out = Vec::new();
    let mut pairs = 0;
    for a in rows {
        for b in rows.iter().filter(|b| b.n == 4 * a.n) {
            pairs += 1;
            if !(b.gap <= MN_RATIO * a.gap) {
                out.push(format!(
                    "n = {} -> {}: gap {} -> {}",
                    a.n, b.n, a.gap, b.gap
                ));
            }
        }
    }
    if pairs == 0 {
        out.push("no (n, 4n) pair among the discretizations".into());
    }
    out
}

/// Parallel version of the serial Itô tail check, bit-identical to it.
pub fn run_ito_tail(
    setting: &ItoTailSpec,
    replicas: u64,
    seed: u64,
    runner: &Runner,
) -> Result<ItoTail, LabError> {
    setting.bound()?;
    let hits = runner.map(replicas, |r| Ok(setting.replica_hits(seed, r)?))?;
    Ok(setting.summarize(hits.iter().map(|&h| u64::from(h)).sum(), replicas)?)
}
