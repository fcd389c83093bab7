//! Sample-based audit of the standing assumptions on `(D, b, σ)`.
//!
//! The assumptions quantify over all segments and laws; the audit evaluates
//! them at random points and reports the worst margin (right side minus left
//! side) per condition. Violations are report content, not errors.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ModelSpec;
use crate::path::{EmpiricalLaw, Segment};
use crate::transport::wasserstein2;

/// Random segments and laws for the audit.
///
/// Segments are Brownian-bridge-like curves (or constants, occasionally
/// zero) with values in `[−radius, radius]`; laws carry `1..=max_atoms`
/// atoms. Second points of pairs are either independent or small
/// perturbations of the first, so both far and near regimes are probed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditSampler {
    pub radius: f64,
    pub lag_cells: usize,
    pub max_atoms: usize,
    pub seed: u64,
}

impl Default for AuditSampler {
    fn default() -> Self {
        Self {
            radius: 5.0,
            lag_cells: 16,
            max_atoms: 8,
            seed: 0x6175_6469_7400_0001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// `|D(ξ) − D(η)| ≤ α‖ξ − η‖_∞` and `D(0) = 0`
    NeutralContraction,
    /// `2⟨ξ(0) − η(0) − (D(ξ) − D(η)), b(ξ,μ) − b(η,ν)⟩ ≤ L(‖ξ−η‖² + W₂(μ,ν)²)`
    DriftOneSided,
    /// `‖σ(ξ,μ) − σ(η,ν)‖²_HS ≤ L(‖ξ−η‖² + W₂(μ,ν)²)`
    DiffusionLipschitz,
    /// `|b(0,μ)|² ∨ ‖σ(0,μ)‖²_HS ≤ L₁(1 + μ(‖·‖²))`
    Growth,
    /// `2⟨ξ(0) − D(ξ), b(ξ,μ)⟩ ∨ ‖σ(ξ,μ)‖²_HS ≤ L₂(1 + ‖ξ‖² + μ(‖·‖²))` and `|D(ξ)| ≤ α‖ξ‖`
    Consequence,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::NeutralContraction,
        Condition::DriftOneSided,
        Condition::DiffusionLipschitz,
        Condition::Growth,
        Condition::Consequence,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Condition::NeutralContraction => "A1",
            Condition::DriftOneSided => "A2-drift",
            Condition::DiffusionLipschitz => "A2-diffusion",
            Condition::Growth => "A3",
            Condition::Consequence => "growth-consequence",
        }
    }
}

/// Inputs at which a condition failed (node values, node-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub condition: Condition,
    pub passed: bool,
    /// Smallest `rhs − lhs` observed.
    pub worst_margin: f64,
    pub failures: usize,
    /// The most violating input, when any failed.
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub conditions: Vec<ConditionReport>,
    pub samples: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn condition(&self, which: Condition) -> &ConditionReport {
        self.conditions
            .iter()
            .find(|c| c.condition == which)
            .expect("every condition is reported")
    }
}

struct Sample {
    xi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<Vec<f64>>,
    nu: Vec<Vec<f64>>,
}

pub(crate) struct SampleStream {
    rng: ChaCha8Rng,
    cfg: AuditSampler,
    dim: usize,
}

impl SampleStream {
    pub(crate) fn new(cfg: AuditSampler, dim: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            dim,
        }
    }

    fn nodes(&self) -> usize {
        self.cfg.lag_cells + 1
    }

    pub(crate) fn segment(&mut self, radius: f64) -> Vec<f64> {
        let (n, d) = (self.nodes(), self.dim);
        let kind = self.rng.random_range(0..20u32);
        if kind == 0 {
            return vec![0.0; n * d];
        }
        if kind <= 4 {
            let c: Vec<f64> = (0..d)
                .map(|_| self.rng.random_range(-radius..=radius))
                .collect();
            return (0..n).flat_map(|_| c.iter().copied()).collect();
        }
        let lag = (n - 1).max(1) as f64;
        let scale = self.rng.random_range(0.0..=0.5 * radius);
        let mut out = vec![0.0; n * d];
        for c in 0..d {
            let a = self.rng.random_range(-radius..=radius);
            let b = self.rng.random_range(-radius..=radius);
            let mut walk = vec![0.0; n];
            for j in 1..n {
                let z: f64 = self.rng.sample(StandardNormal);
                walk[j] = walk[j - 1] + z / libm::sqrt(lag);
            }
            let end = walk[n - 1];
            for j in 0..n {
                let s = j as f64 / lag;
                let v = a + (b - a) * s + scale * (walk[j] - s * end);
                out[j * d + c] = v.clamp(-radius, radius);
            }
        }
        out
    }

    fn perturb(&mut self, base: &[f64], radius: f64) -> Vec<f64> {
        let size = radius * libm::pow(10.0, -self.rng.random_range(0.0..4.0));
        base.iter()
            .map(|v| {
                let z: f64 = self.rng.sample(StandardNormal);
                (v + size * z).clamp(-radius, radius)
            })
            .collect()
    }

    fn law(&mut self, atoms: usize, radius: f64) -> Vec<Vec<f64>> {
        (0..atoms).map(|_| self.segment(radius)).collect()
    }

    fn sample(&mut self, radius: f64) -> Sample {
        let xi = self.segment(radius);
        let eta = if self.rng.random_bool(0.5) {
            self.perturb(&xi, radius)
        } else {
            self.segment(radius)
        };
        let atoms = self.rng.random_range(1..=self.cfg.max_atoms.max(1));
        let mu = self.law(atoms, radius);
        let nu = if self.rng.random_bool(0.5) {
            mu.iter()
                .map(|a| self.perturb(a, radius))
                .collect::<Vec<_>>()
        } else {
            self.law(atoms, radius)
        };
        Sample { xi, eta, mu, nu }
    }
}

fn law_view<'a>(atoms: &'a [Vec<f64>], dim: usize) -> EmpiricalLaw<'a> {
    EmpiricalLaw::new(
        atoms
            .iter()
            .map(|a| Segment::from_nodes(a, dim).expect("sampled atom"))
            .collect(),
    )
    .expect("sampled law")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq(a: &[f64]) -> f64 {
    dot(a, a)
}

struct Tally {
    report: ConditionReport,
}

impl Tally {
    fn new(condition: Condition) -> Self {
        Self {
            report: ConditionReport {
                condition,
                passed: true,
                worst_margin: f64::INFINITY,
                failures: 0,
                witness: None,
            },
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, sample: &Sample) {
        let margin = rhs - lhs;
        let ok = margin >= -1e-12 * (1.0 + libm::fabs(rhs)) && !margin.is_nan();
        let worse = margin < self.report.worst_margin || margin.is_nan();
        if !ok {
            self.report.passed = false;
            self.report.failures += 1;
        }
        if worse {
            self.report.worst_margin = margin;
            if !ok {
                self.report.witness = Some(Witness {
                    xi: sample.xi.clone(),
                    eta: sample.eta.clone(),
                    mu: sample.mu.clone(),
                    nu: sample.nu.clone(),
                    lhs,
                    rhs,
                });
            }
        }
    }
}

/// Evaluates every condition at `trials` sampled `(ξ, η, μ, ν)`.
pub fn audit_assumptions(spec: &ModelSpec, sampler: &AuditSampler, trials: usize) -> AuditReport {
    let (d, m) = (spec.dim_state(), spec.dim_noise());
    let c = spec.constants();
    let l2 = c.l2();
    let mut stream = SampleStream::new(*sampler, d);
    let mut tallies: Vec<Tally> = Condition::ALL.iter().map(|&k| Tally::new(k)).collect();

    let zero = vec![0.0; stream.nodes() * d];
    let zero_seg = Segment::from_nodes(&zero, d).expect("zero segment");
    let (mut dx, mut dy, mut d0) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
    let (mut sx, mut sy) = (vec![0.0; d * m], vec![0.0; d * m]);

    for _ in 0..trials.max(1) {
        let sample = stream.sample(sampler.radius);
        let xi = Segment::from_nodes(&sample.xi, d).expect("sampled segment");
        let eta = Segment::from_nodes(&sample.eta, d).expect("sampled segment");
        let mu = law_view(&sample.mu, d);
        let nu = law_view(&sample.nu, d);
        let s = xi.sup_distance(&eta);
        let w = wasserstein2(&mu, &nu).expect("equal atom counts");
        let dist2 = s * s + w * w;

        spec.neutral(&xi, &mut dx);
        spec.neutral(&eta, &mut dy);
        spec.drift(&xi, &mu, &mut bx);
        spec.drift(&eta, &nu, &mut by);
        spec.diffusion(&xi, &mu, &mut sx);
        spec.diffusion(&eta, &nu, &mut sy);

        let diff_d: Vec<f64> = dx.iter().zip(&dy).map(|(a, b)| a - b).collect();
        tallies[0].record(libm::sqrt(sq(&diff_d)), c.alpha * s, &sample);
        spec.neutral(&zero_seg, &mut d0);
        tallies[0].record(libm::sqrt(sq(&d0)), 0.0, &sample);

        let lead: Vec<f64> = (0..d)
            .map(|i| xi.head()[i] - eta.head()[i] - diff_d[i])
            .collect();
        let db: Vec<f64> = bx.iter().zip(&by).map(|(a, b)| a - b).collect();
        tallies[1].record(2.0 * dot(&lead, &db), c.lipschitz * dist2, &sample);

        let ds: Vec<f64> = sx.iter().zip(&sy).map(|(a, b)| a - b).collect();
        tallies[2].record(sq(&ds), c.lipschitz * dist2, &sample);

        let mut b0 = vec![0.0; d];
        let mut s0 = vec![0.0; d * m];
        for law in [&mu, &nu] {
            spec.drift(&zero_seg, law, &mut b0);
            spec.diffusion(&zero_seg, law, &mut s0);
            tallies[3].record(
                sq(&b0).max(sq(&s0)),
                c.growth * (1.0 + law.second_moment()),
                &sample,
            );
        }

        for (seg, law, dv, bv, sv) in [(&xi, &mu, &dx, &bx, &sx), (&eta, &nu, &dy, &by, &sy)] {
            let centered: Vec<f64> = (0..d).map(|i| seg.head()[i] - dv[i]).collect();
            let norm = seg.sup_norm();
            let lhs = (2.0 * dot(&centered, bv)).max(sq(sv));
            tallies[4].record(lhs, l2 * (1.0 + norm * norm + law.second_moment()), &sample);
            tallies[4].record(libm::sqrt(sq(dv)), c.alpha * norm, &sample);
        }
    }

    AuditReport {
        conditions: tallies.into_iter().map(|t| t.report).collect(),
        samples: trials.max(1),
    }
}

/// Sampled sup of `|b| ∨ ‖σ‖_HS` over segments in the ball of radius `radius`
/// and laws from the default sampler.
pub(crate) fn sampled_coefficient_bound(spec: &ModelSpec, radius: f64, samples: usize) -> f64 {
    let (d, m) = (spec.dim_state(), spec.dim_noise());
    let cfg = AuditSampler::default();
    let mut stream = SampleStream::new(cfg, d);
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * m];
    let mut sup = 0.0f64;
    for _ in 0..samples {
        let seg_values = stream.segment(radius);
        let atoms = stream.rng.random_range(1..=cfg.max_atoms);
        let law_values = stream.law(atoms, cfg.radius);
        let seg = Segment::from_nodes(&seg_values, d).expect("sampled segment");
        let law = law_view(&law_values, d);
        spec.drift(&seg, &law, &mut b);
        spec.diffusion(&seg, &law, &mut s);
        sup = sup.max(libm::sqrt(sq(&b))).max(libm::sqrt(sq(&s)));
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{broken_neutral, builtin, truncate, zero_model};
    use std::println;

    #[test]
    fn zero_model_passes_with_slack() {
        let r = audit_assumptions(&zero_model(), &AuditSampler::default(), 500);
        assert!(r.passed());
        assert!(r.condition(Condition::Growth).worst_margin > 0.0);
    }

    #[test]
    fn schilder_and_test_models_pass() {
        for name in ["SCHILDER", "TEST-1", "TEST-1-BOUNDED"] {
            let r = audit_assumptions(&builtin(name).unwrap(), &AuditSampler::default(), 2000);
            assert!(r.passed(), "{name}: {:?}", r.conditions);
        }
    }

    #[test]
    fn broken_neutral_fails_a1_with_witness() {
        let r = audit_assumptions(&broken_neutral(), &AuditSampler::default(), 200);
        let a1 = r.condition(Condition::NeutralContraction);
        assert!(!a1.passed);
        let w = a1.witness.as_ref().expect("witness recorded");
        assert!(w.lhs > w.rhs);
        assert!(!w.xi.is_empty() && !w.mu.is_empty());
    }

    #[test]
    fn truncation_preserves_a_passing_audit() {
        let base = builtin("TEST-1").unwrap();
        for r in [0.5, 1.0, 2.0, 4.0] {
            let tr = truncate(&base, r).unwrap();
            let report = audit_assumptions(
                &tr,
                &AuditSampler {
                    seed: 7,
                    ..AuditSampler::default()
                },
                2000,
            );
            assert!(report.passed(), "R = {r}: {:?}", report.conditions);
        }
    }

    #[test]
    fn bounded_model_stays_below_cap() {
        let spec = builtin("TEST-1-BOUNDED").unwrap();
        let sup = sampled_coefficient_bound(&spec, 5.0, 10_000);
        assert!(sup <= 4.0, "{sup}");
    }

    /// Worst observed ratios lhs / (‖ξ−η‖² + W₂²) and lhs / (1 + μ(‖·‖²)) for
    /// TEST-1 at 10⁵ samples; the declared constants are twice these, or the
    /// analytic bounds when larger.
    #[test]
    #[ignore = "calibration run, prints the TEST-1 constants"]
    fn calibrate_test1_constants() {
        let spec = builtin("TEST-1").unwrap();
        let mut stream = SampleStream::new(AuditSampler::default(), 1);
        let (mut drift_ratio, mut diff_ratio, mut growth_ratio) = (0.0f64, 0.0f64, 0.0f64);
        let zero = vec![0.0; 17];
        let z = Segment::from_nodes(&zero, 1).unwrap();
        for _ in 0..100_000 {
            let s = stream.sample(5.0);
            let xi = Segment::from_nodes(&s.xi, 1).unwrap();
            let eta = Segment::from_nodes(&s.eta, 1).unwrap();
            let (mu, nu) = (law_view(&s.mu, 1), law_view(&s.nu, 1));
            let dist = xi.sup_distance(&eta);
            let w = wasserstein2(&mu, &nu).unwrap();
            let denom = dist * dist + w * w;
            let (mut a, mut b, mut da, mut db) = ([0.0], [0.0], [0.0], [0.0]);
            spec.neutral(&xi, &mut da);
            spec.neutral(&eta, &mut db);
            spec.drift(&xi, &mu, &mut a);
            spec.drift(&eta, &nu, &mut b);
            if denom > 1e-300 {
                let lead = xi.head()[0] - eta.head()[0] - (da[0] - db[0]);
                drift_ratio = drift_ratio.max(2.0 * lead * (a[0] - b[0]) / denom);
                spec.diffusion(&xi, &mu, &mut a);
                spec.diffusion(&eta, &nu, &mut b);
                diff_ratio = diff_ratio.max((a[0] - b[0]).powi(2) / denom);
            }
            spec.drift(&z, &mu, &mut a);
            spec.diffusion(&z, &mu, &mut b);
            growth_ratio =
                growth_ratio.max(a[0].powi(2).max(b[0].powi(2)) / (1.0 + mu.second_moment()));
        }
        println!("drift one-sided ratio {drift_ratio}, diffusion ratio {diff_ratio}, growth ratio {growth_ratio}");
        println!(
            "declare L = max(2·{:.4}, 0.625), L1 = max(2·{:.4}, 0.25)",
            drift_ratio.max(diff_ratio),
            growth_ratio
        );
    }
}
