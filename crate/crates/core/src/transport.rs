//! Exact Wasserstein-2 distance between uniform empirical laws on segments,
//! with squared sup-norm ground cost.
//!
//! For two uniform laws with the same number of atoms an optimal coupling can
//! be taken to be a permutation, so `W₂² = min_π (1/N) Σ ‖ξ_i − η_π(i)‖²_∞`
//! is a linear assignment problem, solved here by the Hungarian method with
//! row/column potentials in `O(N³)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::path::EmpiricalLaw;

/// Atom count above which [`wasserstein2`] refuses to run.
pub const DEFAULT_MAX_ATOMS: usize = 64;

pub fn wasserstein2(a: &EmpiricalLaw<'_>, b: &EmpiricalLaw<'_>) -> Result<f64> {
    wasserstein2_with_limit(a, b, DEFAULT_MAX_ATOMS)
}

pub fn wasserstein2_with_limit(
    a: &EmpiricalLaw<'_>,
    b: &EmpiricalLaw<'_>,
    max_atoms: usize,
) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::Unsupported(format!(
            "laws with different atom counts ({n} vs {})",
            b.len()
        )));
    }
    if n > max_atoms {
        return Err(Error::Unsupported(format!(
            "{n} atoms exceeds the exact-assignment limit {max_atoms}"
        )));
    }
    if a.atoms()[0].len() != b.atoms()[0].len() || a.atoms()[0].dim() != b.atoms()[0].dim() {
        return Err(Error::Config(
            "laws live on different segment geometries".into(),
        ));
    }
    let cost: Vec<f64> = a
        .atoms()
        .iter()
        .flat_map(|x| {
            b.atoms().iter().map(move |y| {
                let d = x.sup_distance(y);
                d * d
            })
        })
        .collect();
    let (total, _) = min_cost_assignment(&cost, n);
    Ok(libm::sqrt((total / n as f64).max(0.0)))
}

/// Minimum-cost perfect matching on a dense `n × n` row-major cost matrix.
///
/// Returns the optimal total and `assignment[row] = column`.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> (f64, Vec<usize>) {
    assert_eq!(cost.len(), n * n);
    if n == 0 {
        return (0.0, Vec::new());
    }
    // 1-based arrays with a virtual column 0, as in the classical formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r0 - 1) * n + (col - 1)] - u[r0] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for col in 1..=n {
        assignment[owner[col] - 1] = col - 1;
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r * n + c])
        .sum();
    (total, assignment)
}
