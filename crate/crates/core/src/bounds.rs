//! Closed-form a-priori bounds: the moment constant `L₃(ε)`, the limit-path
//! bound, the convergence constant `L₄(ε)` and the Itô tail bound.

use alloc::format;

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperBounds {
    /// `max{L + (1+α)², L + L₁}`
    pub l2: f64,
    /// Bound on `E sup_t ‖X^ε_t‖²_∞`.
    pub l3: f64,
    /// Bound on `sup_t ‖X⁰_t‖²_∞`.
    pub x0_bound: f64,
    /// Bound on `E sup_t ‖X^ε_t − X⁰_t‖²_∞`.
    pub l4: f64,
}

fn check(name: &str, value: f64, positive: bool) -> Result<()> {
    let ok = value.is_finite() && if positive { value > 0.0 } else { value >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(domain(format!("{name} = {value} is out of range")))
    }
}

/// Bounds for declared constants `α, L, L₁`, horizon `T`, noise `ε` and `‖ξ‖_∞`.
pub fn compute_paper_bounds(
    alpha: f64,
    l: f64,
    l1: f64,
    horizon: f64,
    eps: f64,
    norm_xi: f64,
) -> Result<PaperBounds> {
    check("L1", l1, false)?;
    check("L", l, false)?;
    check("alpha", alpha, false)?;
    let l2 = (l + (1.0 + alpha) * (1.0 + alpha)).max(l + l1);
    bounds_with_l2(alpha, l, l2, horizon, eps, norm_xi)
}

/// Same as [`compute_paper_bounds`] with `L₂` supplied directly; `L` only enters `L₄`.
pub fn bounds_with_l2(
    alpha: f64,
    l: f64,
    l2: f64,
    horizon: f64,
    eps: f64,
    norm_xi: f64,
) -> Result<PaperBounds> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(domain(format!("alpha = {alpha} must lie in [0, 1)")));
    }
    check("L", l, false)?;
    check("L2", l2, false)?;
    check("T", horizon, true)?;
    check("eps", eps, false)?;
    check("norm_xi", norm_xi, false)?;
    let c = (1.0 - alpha) * (1.0 - alpha);
    let xi2 = norm_xi * norm_xi;
    let noise = 1.0 + 65.0 * eps;
    let l3 = ((2.0 * alpha * alpha + 3.0 * alpha + 3.0) * xi2 + 2.0 * l2 * horizon * noise) / c
        * libm::exp(4.0 * l2 * horizon * noise / c);
    let x0_bound = ((alpha * alpha + alpha + 2.0) * xi2 + l2 * horizon) / c
        * libm::exp(2.0 * l2 * horizon / c);
    // The displayed exponent carries no factor T.
    let l4 = 130.0 * eps * l2 * horizon * (1.0 + 2.0 * l3) / c * libm::exp(4.0 * l / c);
    Ok(PaperBounds {
        l2,
        l3,
        x0_bound,
        l4,
    })
}

/// `P(sup_{[0,T]} |ξ| ≥ R) ≤ 2d·exp(−(R − √d·B·T)²/(2A²dT))` for
/// `ξ = ∫α dW + ∫β ds` with `‖α‖ ≤ A`, `|β| ≤ B`; requires `√d·B·T < R`.
pub fn ito_tail_bound(a: f64, b: f64, d: usize, horizon: f64, r: f64) -> Result<f64> {
    check("A", a, true)?;
    check("B", b, false)?;
    check("T", horizon, true)?;
    if d == 0 {
        return Err(domain("dimension must be positive"));
    }
    let dd = d as f64;
    let drift = libm::sqrt(dd) * b * horizon;
    if !(drift < r) {
        return Err(domain(format!(
            "hypothesis √d·B·T < R fails: {drift} ≥ {r}"
        )));
    }
    Ok(2.0 * dd * libm::exp(-(r - drift) * (r - drift) / (2.0 * a * a * dd * horizon)))
}
