//! Seeded property suite over random families, run by `qfi verify`.

use std::f64::consts::PI;

use qfi_core::discontinuity::BranchHessian;
use qfi_core::families::GramFamily;
use qfi_core::hermitian::min_eigenvalue_real;
use qfi_core::{
    continuous_qfi, directional_limit, evaluate, evaluate_bundle, jump, kernel_hessian_sum,
    kernel_hessian_sum_direct, numeric_bures_metric, qfi_from_sld, qfi_spectral, sld,
    track_branch_curvatures, truncated_metric, uhlmann_fidelity, vanishing_branch_hessians,
    DerivativeBundle, DirectionVector, FiniteDifferenceConfig, ParameterPoint, StateFamily,
    DEFAULT_TOL_ZERO,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct PropertyResult {
    pub name: &'static str,
    pub tol: f64,
    pub worst: f64,
    pub checks: usize,
    /// Checks that raised an error instead of producing a residual.
    pub errors: Vec<String>,
}

impl PropertyResult {
    fn new(name: &'static str, tol: f64) -> Self {
        Self {
            name,
            tol,
            worst: 0.0,
            checks: 0,
            errors: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.errors.is_empty() && self.worst <= self.tol
    }

    fn record(&mut self, r: qfi_core::Result<f64>) {
        self.checks += 1;
        match r {
            Ok(v) if v.is_nan() => self.worst = f64::INFINITY,
            Ok(v) => self.worst = self.worst.max(v),
            Err(e) => self.errors.push(e.to_string()),
        }
    }
}

/// Distance below zero of the smallest eigenvalue.
fn psd_defect(m: &nalgebra::DMatrix<f64>) -> f64 {
    (-min_eigenvalue_real(m)).max(0.0)
}

struct Suite {
    two_path: PropertyResult,
    oracle: PropertyResult,
    ordering: PropertyResult,
    routes: PropertyResult,
    truncated: PropertyResult,
    full_rank_collapse: PropertyResult,
    fidelity: PropertyResult,
    branch_sum: PropertyResult,
    jump_sign: PropertyResult,
    jump_consistency: PropertyResult,
    branch_oracle: PropertyResult,
}

impl Suite {
    fn new() -> Self {
        Self {
            two_path: PropertyResult::new("two_path_qfi", 1e-8),
            oracle: PropertyResult::new("oracle_equivalence", 1e-5),
            ordering: PropertyResult::new("psd_ordering", 1e-8),
            routes: PropertyResult::new("hessian_sum_routes", 1e-7),
            truncated: PropertyResult::new("truncated_below_qfi", 1e-8),
            full_rank_collapse: PropertyResult::new("full_rank_collapse", 1e-9),
            fidelity: PropertyResult::new("fidelity_axioms", 1e-9),
            branch_sum: PropertyResult::new("branch_sum_identity", 1e-6),
            jump_sign: PropertyResult::new("jump_negative_semidefinite", 1e-7),
            jump_consistency: PropertyResult::new("jump_consistency", 1e-3),
            branch_oracle: PropertyResult::new("branch_oracle", 1e-4),
        }
    }

    fn into_vec(self) -> Vec<PropertyResult> {
        vec![
            self.two_path,
            self.oracle,
            self.ordering,
            self.routes,
            self.truncated,
            self.full_rank_collapse,
            self.fidelity,
            self.branch_sum,
            self.jump_sign,
            self.jump_consistency,
            self.branch_oracle,
        ]
    }

    fn bundle_checks(&mut self, fam: &dyn StateFamily, p: &ParameterPoint, b: &DerivativeBundle) {
        let h = qfi_spectral(b);
        self.two_path
            .record(qfi_from_sld(b, &sld(b)).map(|m| m.max_abs_diff(&h.values)));
        let hc = continuous_qfi(b);
        self.ordering
            .record(hc.clone().map(|hc| psd_defect(&(&hc.values - &h.values))));
        self.routes.record(
            kernel_hessian_sum(b)
                .and_then(|k| Ok(k.max_abs_diff(&kernel_hessian_sum_direct(b)?.values))),
        );
        self.truncated
            .record(Ok(psd_defect(&(&h.values - &truncated_metric(b).values))));
        if b.spectrum.is_full_rank() {
            self.full_rank_collapse.record(hc.clone().map(|hc| {
                hc.max_abs_diff(&h.values)
                    .max(truncated_metric(b).max_abs_diff(&h.values))
            }));
        }
        let fd = FiniteDifferenceConfig::metric_oracle();
        self.oracle.record(
            hc.and_then(|hc| Ok(hc.max_abs_diff(&numeric_bures_metric(fam, p, &fd)?.values))),
        );
    }

    fn kernel_checks(
        &mut self,
        fam: &dyn StateFamily,
        p: &ParameterPoint,
        b: &DerivativeBundle,
        u: &DirectionVector,
    ) {
        let branches = vanishing_branch_hessians(b, Some(u));
        self.branch_sum
            .record(branches.and_then(|br: Vec<BranchHessian>| {
                let mut sum = nalgebra::DMatrix::zeros(b.n_params(), b.n_params());
                for x in &br {
                    sum += &x.hessian;
                }
                Ok(kernel_hessian_sum(b)?.max_abs_diff(&sum))
            }));
        self.jump_sign
            .record(jump(b, u).map(|r| psd_defect(&(-&r.delta.values))));
        let fd = FiniteDifferenceConfig::default();
        self.jump_consistency
            .record(directional_limit(fam, p, u, None, &fd).map(|l| l.residual));
        self.branch_oracle.record(
            track_branch_curvatures(fam, p, u, &fd)
                .map(|t| t.iter().map(|x| x.discrepancy()).fold(0.0, f64::max)),
        );
    }
}

fn random_point(rng: &mut ChaCha8Rng, n: usize) -> ParameterPoint {
    ParameterPoint::new((0..n).map(|_| rng.random_range(-0.3..0.3)).collect()).expect("finite")
}

fn random_direction(rng: &mut ChaCha8Rng) -> DirectionVector {
    let a: f64 = rng.random_range(0.0..2.0 * PI);
    DirectionVector::normalized(&[a.cos(), a.sin()]).expect("non-zero")
}

/// Runs every property on `trials` seeded family pairs: one full-rank family
/// probed at a random point and one rank-deficient family probed at its
/// rank-change point along a random direction.
pub fn verify(seed: u64, trials: usize) -> Result<Vec<PropertyResult>, String> {
    if trials == 0 {
        return Err("--trials must be at least 1".into());
    }
    let mut suite = Suite::new();
    let fd = FiniteDifferenceConfig::default();
    for t in 0..trials {
        let s = seed.wrapping_add(t as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let dim = 2 + t % 4;

        let full = GramFamily::random_full_rank(dim, s, 2).map_err(|e| e.to_string())?;
        let p = random_point(&mut rng, 2);
        match evaluate_bundle(&full, &p, &fd, DEFAULT_TOL_ZERO) {
            Ok(b) => suite.bundle_checks(&full, &p, &b),
            Err(e) => suite.two_path.errors.push(e.to_string()),
        }

        let kernel = 1 + t % (dim - 1);
        let deficient =
            GramFamily::random_rank_deficient(dim, kernel, s, 2).map_err(|e| e.to_string())?;
        let origin = ParameterPoint::new(vec![0.0, 0.0]).expect("finite");
        let u = random_direction(&mut rng);
        match evaluate_bundle(&deficient, &origin, &fd, DEFAULT_TOL_ZERO) {
            Ok(b) => {
                suite.bundle_checks(&deficient, &origin, &b);
                suite.kernel_checks(&deficient, &origin, &b, &u);
            }
            Err(e) => suite.branch_sum.errors.push(e.to_string()),
        }

        let fidelity = (|| {
            let a = evaluate(&full, p.coords())?;
            let b = evaluate(&deficient, origin.coords())?;
            let fab = uhlmann_fidelity(&a, &b)?;
            let fba = uhlmann_fidelity(&b, &a)?;
            let out_of_range = if (0.0..=1.0).contains(&fab) { 0.0 } else { 1.0 };
            let self_a = (uhlmann_fidelity(&a, &a)? - 1.0).abs();
            let self_b = (uhlmann_fidelity(&b, &b)? - 1.0).abs();
            Ok((fab - fba).abs().max(out_of_range).max(self_a).max(self_b))
        })();
        suite.fidelity.record(fidelity);
    }
    Ok(suite.into_vec())
}

pub fn render(results: &[PropertyResult], seed: u64, trials: usize) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut out = format!("verify: seed {seed}, {trials} trials\n");
    for r in results {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        out.push_str(&format!(
            "{:<width$}  {status}  worst {:.3e}  tol {:.0e}  checks {}",
            r.name, r.worst, r.tol, r.checks
        ));
        if let Some(e) = r.errors.first() {
            out.push_str(&format!("  errors {} (first: {e})", r.errors.len()));
        }
        out.push('\n');
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    if failed == 0 {
        out.push_str("all properties pass\n");
    } else {
        out.push_str(&format!("{failed} properties failed\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let results = verify(7, 3).unwrap();
        assert_eq!(results.len(), 11);
        for r in &results {
            assert!(r.passed(), "{r:?}");
            assert!(r.checks > 0, "{}", r.name);
        }
        let text = render(&results, 7, 3);
        assert!(text.ends_with("all properties pass\n"));
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(verify(1, 0).is_err());
    }

    #[test]
    fn failures_are_reported() {
        let mut r = PropertyResult::new("x", 1e-3);
        r.record(Ok(2e-3));
        assert!(!r.passed());
        let mut r = PropertyResult::new("y", 1e-3);
        r.record(Err(qfi_core::Error::ConvergenceFailure));
        assert!(!r.passed());
        assert!(render(&[r], 0, 1).contains("1 properties failed"));
    }
}
