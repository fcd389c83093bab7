use alloc::format;
use alloc::sync::Arc;

use super::{Coefficients, Constants, ModelSpec};
use crate::error::{config, Result};
use crate::path::{EmpiricalLaw, Segment};

pub const BUILTIN_NAMES: [&str; 3] = ["SCHILDER", "TEST-1", "TEST-1-BOUNDED"];

/// Declared constants of TEST-1. `calibrate_test1_constants` reports worst
/// ratios 0.156 (drift), 0.010 (diffusion) and 0.240 (growth) over 10⁵ audit
/// samples; `L` is the analytic bound 5/8, which exceeds twice the sampled
/// ratios, and `L₁ = 0.5` is twice the sampled growth ratio, rounded up.
const TEST1_CONSTANTS: Constants = Constants {
    alpha: 0.25,
    lipschitz: 0.625,
    growth: 0.5,
};

/// Cap of the smooth drift clamp in TEST-1-BOUNDED.
pub const TEST1_DRIFT_CAP: f64 = 4.0;

/// Brownian motion: `D = 0`, `b = 0`, `σ = I`.
#[derive(Debug, Clone, Copy)]
pub struct Schilder {
    pub dim: usize,
}

impl Coefficients for Schilder {
    fn neutral(&self, _: &Segment<'_>, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn drift(&self, _: &Segment<'_>, _: &EmpiricalLaw<'_>, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn diffusion(&self, _: &Segment<'_>, _: &EmpiricalLaw<'_>, out: &mut [f64]) {
        out.fill(0.0);
        for i in 0..self.dim {
            out[i * self.dim + i] = 1.0;
        }
    }
}

/// Scalar neutral mean-field equation
///
/// ```text
/// D(ξ)    = delay_weight·ξ(−τ) + head_weight·ξ(0)
/// b(ξ, μ) = −ξ(0) + mean_field·∫η(0)μ(dη)          (optionally cap·tanh(·/cap))
/// σ(ξ, μ) = sigma_base + sigma_amp·sin ξ(0)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMeanField {
    pub delay_weight: f64,
    pub head_weight: f64,
    pub reversion: f64,
    pub mean_field: f64,
    pub sigma_base: f64,
    pub sigma_amp: f64,
    pub drift_cap: Option<f64>,
}

impl LinearMeanField {
    /// The TEST-1 coefficients.
    pub const TEST1: Self = Self {
        delay_weight: 0.25,
        head_weight: 0.0,
        reversion: 1.0,
        mean_field: 0.5,
        sigma_base: 0.3,
        sigma_amp: 0.1,
        drift_cap: None,
    };

    pub fn into_spec(self, name: &str, constants: Constants) -> Result<ModelSpec> {
        ModelSpec::new(
            name,
            1,
            1,
            constants,
            self.head_weight != 0.0,
            Arc::new(self),
        )
    }
}

impl Coefficients for LinearMeanField {
    fn neutral(&self, seg: &Segment<'_>, out: &mut [f64]) {
        out[0] = self.delay_weight * seg.oldest()[0] + self.head_weight * seg.head()[0];
    }

    fn drift(&self, seg: &Segment<'_>, law: &EmpiricalLaw<'_>, out: &mut [f64]) {
        let mut b = -self.reversion * seg.head()[0];
        if self.mean_field != 0.0 {
            b += self.mean_field * law.mean_head()[0];
        }
        if let Some(cap) = self.drift_cap {
            b = cap * libm::tanh(b / cap);
        }
        out[0] = b;
    }

    fn diffusion(&self, seg: &Segment<'_>, _: &EmpiricalLaw<'_>, out: &mut [f64]) {
        out[0] = self.sigma_base + self.sigma_amp * libm::sin(seg.head()[0]);
    }
}

/// Named test models: `SCHILDER`, `TEST-1`, `TEST-1-BOUNDED`.
pub fn builtin(name: &str) -> Result<ModelSpec> {
    match name {
        "SCHILDER" => ModelSpec::new(
            "SCHILDER",
            1,
            1,
            Constants {
                alpha: 0.01,
                lipschitz: 0.01,
                growth: 1.0,
            },
            false,
            Arc::new(Schilder { dim: 1 }),
        ),
        "TEST-1" => LinearMeanField::TEST1.into_spec("TEST-1", TEST1_CONSTANTS),
        "TEST-1-BOUNDED" => {
            let coeffs = LinearMeanField {
                drift_cap: Some(TEST1_DRIFT_CAP),
                ..LinearMeanField::TEST1
            };
            coeffs
                .into_spec("TEST-1-BOUNDED", TEST1_CONSTANTS)?
                .with_bound(TEST1_DRIFT_CAP)
        }
        other => Err(config(format!(
            "unknown model {other:?}; known: {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

/// `D = 0`, `b = 0`, `σ = 0`.
pub fn zero_model() -> ModelSpec {
    let coeffs = LinearMeanField {
        delay_weight: 0.0,
        head_weight: 0.0,
        reversion: 0.0,
        mean_field: 0.0,
        sigma_base: 0.0,
        sigma_amp: 0.0,
        drift_cap: None,
    };
    coeffs
        .into_spec(
            "ZERO",
            Constants {
                alpha: 0.5,
                lipschitz: 1.0,
                growth: 1.0,
            },
        )
        .expect("valid constants")
}

/// TEST-1 with `D(ξ) = 0.5·ξ(−τ)` while still declaring `α = 0.25`.
pub fn broken_neutral() -> ModelSpec {
    LinearMeanField {
        delay_weight: 0.5,
        ..LinearMeanField::TEST1
    }
    .into_spec("BROKEN-NEUTRAL", TEST1_CONSTANTS)
    .expect("valid constants")
}

/// `D(ξ) = weight·ξ(0)`, everything else zero; exercises the implicit inversion.
pub fn head_neutral(weight: f64) -> Result<ModelSpec> {
    let coeffs = LinearMeanField {
        delay_weight: 0.0,
        head_weight: weight,
        reversion: 0.0,
        mean_field: 0.0,
        sigma_base: 0.0,
        sigma_amp: 0.0,
        drift_cap: None,
    };
    coeffs.into_spec(
        "HEAD-NEUTRAL",
        Constants {
            alpha: libm::fabs(weight).max(1e-3),
            lipschitz: 1.0,
            growth: 1.0,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_is_a_config_error() {
        assert!(matches!(builtin("TEST-2"), Err(crate::Error::Config(_))));
    }

    #[test]
    fn declared_metadata() {
        let t = builtin("TEST-1").unwrap();
        assert_eq!(t.alpha(), 0.25);
        assert!(!t.head_dependent());
        assert_eq!(t.bound(), None);
        assert_eq!(builtin("TEST-1-BOUNDED").unwrap().bound(), Some(4.0));
        assert!(head_neutral(0.25).unwrap().head_dependent());
    }
}
