//! Experiment configuration: a TOML file with fixed sections, every key
//! required except `[solver]`.

use std::path::{Path, PathBuf};

use nmv_core::model::builtin;
use nmv_core::solver::solve_limit_ode;
use nmv_core::{ModelSpec, PathGrid, RareEvent, SolverOptions, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::LabError;

/// Environment variable that replaces `[output] dir`.
pub const OUTPUT_DIR_ENV: &str = "NMV_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub initial: InitialSection,
    pub grid: GridSection,
    pub study: StudySection,
    pub event: EventSection,
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
}

/// The initial segment `ξ` on `[−τ, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    Constant {
        value: Vec<f64>,
    },
    /// One state vector per grid node of `[−τ, 0]`, oldest first.
    Nodes {
        nodes: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub tau: f64,
    pub horizon: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    /// Frozen-law process `Y^ε`.
    Frozen,
    /// Interacting particle system for `X^ε`.
    Particles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub process: Process,
    /// Strictly decreasing noise levels in `(0, 1]`.
    pub epsilons: Vec<f64>,
    pub particles: usize,
    pub discretizations: Vec<usize>,
    pub truncations: Vec<f64>,
    /// Independent replicas; for `particles` each replica is a whole cloud.
    pub replicas: u64,
    pub master_seed: u64,
    /// Threshold `δ` of the pathwise gap tails in the equivalence study.
    pub gap_delta: f64,
    pub restarts: usize,
    /// Brownian-bridge crossing correction for sup-exceed events (scalar models).
    pub bridge_monitoring: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSection {
    /// `sup_{[0,T]} |X − X⁰| ≥ delta`
    SupExceed { delta: f64, tol: f64 },
    /// `|X(T) − target| ≤ tol`
    TerminalTarget { target: Vec<f64>, tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub fixed_point_tol: Option<f64>,
    pub fixed_point_max_iter: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// `[output] dir`, unless overridden by [`OUTPUT_DIR_ENV`].
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output.dir.clone(),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut opts = SolverOptions::default();
        if let Some(s) = self.solver {
            if let Some(tol) = s.fixed_point_tol {
                opts.fixed_point_tol = tol;
            }
            if let Some(it) = s.fixed_point_max_iter {
                opts.fixed_point_max_iter = it;
            }
        }
        opts
    }

    /// Validates the configuration and builds the model, grid, `ξ` and `X⁰`.
    pub fn resolve(&self) -> Result<Experiment, LabError> {
        let spec = builtin(&self.model.name)?;
        let grid = TimeGrid::new(self.grid.tau, self.grid.horizon, self.grid.step)?;
        let d = spec.dim_state();
        let xi = match &self.initial {
            InitialSection::Constant { value } => {
                if value.len() != d {
                    return Err(LabError::Config(format!(
                        "initial value has dim {}, model has {d}",
                        value.len()
                    )));
                }
                PathGrid::constant(grid, value)
            }
            InitialSection::Nodes { nodes } => {
                if nodes.len() != grid.lag_steps() + 1 || nodes.iter().any(|v| v.len() != d) {
                    return Err(LabError::Config(format!(
                        "initial nodes must be {} vectors of dim {d}",
                        grid.lag_steps() + 1
                    )));
                }
                let mut values = vec![0.0; grid.node_count() * d];
                for (k, v) in nodes.iter().enumerate() {
                    values[k * d..(k + 1) * d].copy_from_slice(v);
                }
                let last = nodes.last().expect("at least one node");
                for k in nodes.len()..grid.node_count() {
                    values[k * d..(k + 1) * d].copy_from_slice(last);
                }
                PathGrid::new(grid, d, values)?
            }
        };
        if xi.values().iter().any(|v| !v.is_finite()) {
            return Err(LabError::Config("initial segment must be finite".into()));
        }

        let s = &self.study;
        if s.epsilons.is_empty() || s.epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(LabError::Config(
                "epsilons must be a nonempty list in (0, 1]".into(),
            ));
        }
        if s.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LabError::Config(
                "epsilons must be strictly decreasing".into(),
            ));
        }
        if s.particles == 0 || s.replicas == 0 || s.restarts == 0 {
            return Err(LabError::Config(
                "particles, replicas and restarts must be positive".into(),
            ));
        }
        if s.replicas > nmv_core::noise::MAX_REPLICA + 1 {
            return Err(LabError::Config("too many replicas".into()));
        }
        for &n in &s.discretizations {
            grid.block_cells(n)?;
        }
        if s.truncations.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(LabError::Config(
                "truncation levels must be nonnegative".into(),
            ));
        }
        if !(s.gap_delta > 0.0) {
            return Err(LabError::Config("gap_delta must be positive".into()));
        }
        if s.bridge_monitoring && (spec.dim_state() != 1 || spec.dim_noise() != 1) {
            return Err(LabError::Config(
                "bridge monitoring needs a scalar model".into(),
            ));
        }
        let opts = self.solver_options();
        opts.validate()?;
        let x0 = solve_limit_ode(&spec, &xi.initial_segment(), &grid, &opts)?;
        let event = match &self.event {
            EventSection::SupExceed { delta, tol } => RareEvent::SupExceed {
                delta: *delta,
                reference: x0.clone(),
                tol: *tol,
            },
            EventSection::TerminalTarget { target, tol } => RareEvent::TerminalTarget {
                target: target.clone(),
                tol: *tol,
            },
        };
        let bad_event = match &event {
            RareEvent::SupExceed { delta, tol, .. } => !(*delta > 0.0 && *tol > 0.0),
            RareEvent::TerminalTarget { target, tol } => target.len() != d || !(*tol > 0.0),
        };
        if bad_event {
            return Err(LabError::Config(
                "event needs delta > 0, tol > 0 and a target of the state dimension".into(),
            ));
        }
        Ok(Experiment {
            config: self.clone(),
            spec,
            grid,
            xi,
            x0,
            event,
            opts,
        })
    }
}

/// A validated configuration with everything the studies share.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: ModelSpec,
    pub grid: TimeGrid,
    pub xi: PathGrid,
    pub x0: PathGrid,
    pub event: RareEvent,
    pub opts: SolverOptions,
}

impl Experiment {
    pub fn study(&self) -> &StudySection {
        &self.config.study
    }
}
