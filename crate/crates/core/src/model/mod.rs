//! Coefficient triples `(D, b, σ)` with their declared regularity constants.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use core::fmt;

use crate::error::{config, domain, Result};
use crate::path::{EmpiricalLaw, Segment};

pub mod audit;
mod builtin;

pub use audit::{
    audit_assumptions, AuditReport, AuditSampler, Condition, ConditionReport, Witness,
};
pub use builtin::{
    broken_neutral, builtin, head_neutral, zero_model, LinearMeanField, Schilder, BUILTIN_NAMES,
};

/// The neutral functional `D`, drift `b` and diffusion `σ` of one equation.
///
/// Implementations must be pure: the solvers call them from many threads and
/// rely on identical inputs giving bit-identical outputs.
pub trait Coefficients: Send + Sync {
    /// `D(ξ) ∈ R^d`
    fn neutral(&self, seg: &Segment<'_>, out: &mut [f64]);
    /// `b(ξ, μ) ∈ R^d`
    fn drift(&self, seg: &Segment<'_>, law: &EmpiricalLaw<'_>, out: &mut [f64]);
    /// `σ(ξ, μ) ∈ R^{d×m}`, row-major.
    fn diffusion(&self, seg: &Segment<'_>, law: &EmpiricalLaw<'_>, out: &mut [f64]);
}

/// Declared constants: contraction `α` of `D`, one-sided/diffusion constant
/// `L`, growth constant `L₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub alpha: f64,
    pub lipschitz: f64,
    pub growth: f64,
}

impl Constants {
    /// `L₂ = max{L + (1+α)², L + L₁}`
    pub fn l2(&self) -> f64 {
        let one_plus = 1.0 + self.alpha;
        (self.lipschitz + one_plus * one_plus).max(self.lipschitz + self.growth)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.lipschitz > 0.0 && self.growth > 0.0)
            || !(self.lipschitz + self.growth).is_finite()
        {
            return Err(config("L and L1 must be positive and finite"));
        }
        Ok(())
    }
}

/// One equation instance: coefficients plus everything the schemes and the
/// bound calculators need to know about them.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    dim_state: usize,
    dim_noise: usize,
    constants: Constants,
    bound: Option<f64>,
    head_dependent: bool,
    coefficients: Arc<dyn Coefficients>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("constants", &self.constants)
            .field("bound", &self.bound)
            .field("head_dependent", &self.head_dependent)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// `head_dependent` must be true whenever `D` reads `ξ(0)`; when it is
    /// false the neutral inversion is a single explicit evaluation.
    pub fn new(
        name: impl Into<String>,
        dim_state: usize,
        dim_noise: usize,
        constants: Constants,
        head_dependent: bool,
        coefficients: Arc<dyn Coefficients>,
    ) -> Result<Self> {
        if dim_state == 0 || dim_noise == 0 {
            return Err(config("state and noise dimensions must be positive"));
        }
        constants.validate()?;
        Ok(Self {
            name: name.into(),
            dim_state,
            dim_noise,
            constants,
            bound: None,
            head_dependent,
            coefficients,
        })
    }

    /// Declares `|b| ∨ ‖σ‖_HS ≤ L₅` everywhere.
    pub fn with_bound(mut self, l5: f64) -> Result<Self> {
        if !(l5 > 0.0 && l5.is_finite()) {
            return Err(config("L5 must be positive and finite"));
        }
        self.bound = Some(l5);
        Ok(self)
    }

    /// Same coefficients with other declared constants (audit experiments).
    pub fn with_constants(mut self, constants: Constants) -> Result<Self> {
        constants.validate()?;
        self.constants = constants;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn constants(&self) -> Constants {
        self.constants
    }

    pub fn alpha(&self) -> f64 {
        self.constants.alpha
    }

    pub fn l2(&self) -> f64 {
        self.constants.l2()
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn head_dependent(&self) -> bool {
        self.head_dependent
    }

    pub fn coefficients(&self) -> &Arc<dyn Coefficients> {
        &self.coefficients
    }

    pub fn neutral(&self, seg: &Segment<'_>, out: &mut [f64]) {
        self.coefficients.neutral(seg, out)
    }

    pub fn drift(&self, seg: &Segment<'_>, law: &EmpiricalLaw<'_>, out: &mut [f64]) {
        self.coefficients.drift(seg, law, out)
    }

    pub fn diffusion(&self, seg: &Segment<'_>, law: &EmpiricalLaw<'_>, out: &mut [f64]) {
        self.coefficients.diffusion(seg, law, out)
    }
}

/// Cut-off multiplier: 1 inside the ball of radius `R`, 0 outside `R + 1`,
/// linear in `‖ξ‖_∞` in between.
pub fn chi_r(seg: &Segment<'_>, radius: f64) -> f64 {
    cutoff(seg.sup_norm(), radius)
}

fn cutoff(norm: f64, radius: f64) -> f64 {
    if norm <= radius {
        1.0
    } else if norm < radius + 1.0 {
        radius + 1.0 - norm
    } else {
        0.0
    }
}

struct Truncated {
    base: Arc<dyn Coefficients>,
    radius: f64,
}

impl Coefficients for Truncated {
    fn neutral(&self, seg: &Segment<'_>, out: &mut [f64]) {
        self.base.neutral(seg, out)
    }

    fn drift(&self, seg: &Segment<'_>, law: &EmpiricalLaw<'_>, out: &mut [f64]) {
        let chi = chi_r(seg, self.radius);
        if chi == 0.0 {
            out.fill(0.0);
            return;
        }
        self.base.drift(seg, law, out);
        if chi != 1.0 {
            out.iter_mut().for_each(|v| *v *= chi);
        }
    }

    fn diffusion(&self, seg: &Segment<'_>, law: &EmpiricalLaw<'_>, out: &mut [f64]) {
        let chi = chi_r(seg, self.radius);
        if chi == 0.0 {
            out.fill(0.0);
            return;
        }
        self.base.diffusion(seg, law, out);
        if chi != 1.0 {
            out.iter_mut().for_each(|v| *v *= chi);
        }
    }
}

/// Samples used to estimate the bound `L₅` of a truncated model.
pub const TRUNCATION_BOUND_SAMPLES: usize = 4096;
/// Safety factor applied to the sampled sup of `|b| ∨ ‖σ‖_HS`.
pub const TRUNCATION_BOUND_FACTOR: f64 = 1.5;

/// `b_R = χ_R·b`, `σ_R = χ_R·σ`.
///
/// `L₅` is the sampled sup of `|b| ∨ ‖σ‖_HS` over segments with
/// `‖ξ‖_∞ ≤ R + 1` (laws from the default audit sampler), times
/// [`TRUNCATION_BOUND_FACTOR`]. The declared `L` becomes
/// `max{L + 2L₅(1+α), 2(L + L₅²)}`, which covers the cross terms created by
/// the cut-off; `α` and `L₁` are unchanged since `χ_R(0) = 1`.
pub fn truncate(spec: &ModelSpec, radius: f64) -> Result<ModelSpec> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(domain(format!(
            "truncation radius must be a nonnegative number, got {radius}"
        )));
    }
    let sampled = audit::sampled_coefficient_bound(spec, radius + 1.0, TRUNCATION_BOUND_SAMPLES);
    let mut l5 = (TRUNCATION_BOUND_FACTOR * sampled).max(f64::MIN_POSITIVE);
    if let Some(b) = spec.bound {
        l5 = l5.min(b);
    }
    let c = spec.constants;
    let lipschitz = (c.lipschitz + 2.0 * l5 * (1.0 + c.alpha)).max(2.0 * (c.lipschitz + l5 * l5));
    let truncated = ModelSpec {
        name: format!("{}|R={radius}", spec.name),
        dim_state: spec.dim_state,
        dim_noise: spec.dim_noise,
        constants: Constants { lipschitz, ..c },
        bound: None,
        head_dependent: spec.head_dependent,
        coefficients: Arc::new(Truncated {
            base: spec.coefficients.clone(),
            radius,
        }),
    };
    truncated.with_bound(l5)
}
