//! Quantum Fisher information, symmetric logarithmic derivatives, fidelity,
//! and the continuous QFI (four times the Bures metric).
//!
//! All closed-form quantities are sums over pairs of eigenvectors of `ρ`.
//! Writing `A_i = <k|∂_iρ|l>` in the eigenbasis, they differ only in which
//! pairs `(k, l)` enter:
//!
//! | quantity          | pairs                          | extra term          |
//! |-------------------|--------------------------------|---------------------|
//! | QFI `H`           | `p_k + p_l > 0`                |                     |
//! | continuous `H_c`  | `p_k > 0, p_l > 0`             | `2 tr[P₀ ∂_ijρ]`    |
//! | truncated `4g`    | `p_k > 0, p_l > 0`             |                     |

use nalgebra::{DMatrix, SymmetricEigen};
use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::error::{Error, Result};
use crate::extrapolate::extrapolate_checked;
use crate::family::{
    evaluate, evaluate_raw, DerivativeBundle, FiniteDifferenceConfig, ParameterPoint, StateFamily,
};
use crate::hermitian::{
    c, frobenius, hermitian_part, is_psd_real, kernel_projector, min_eigenvalue_real, psd_sqrt,
    trace, CMatrix, DensityMatrix, EigenDecomposition, DEFAULT_TOL_ZERO,
};

/// Which quantity a [`MetricMatrix`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricRole {
    QfiH,
    ContinuousQfiHc,
    TruncatedMetric4g,
    HessianSum,
    JumpDelta,
}

/// Real symmetric `n × n` matrix tagged with what it represents and where.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    pub values: DMatrix<f64>,
    pub role: MetricRole,
    pub point: ParameterPoint,
    /// Produced by a finite-difference oracle rather than a closed form.
    pub numeric: bool,
}

impl MetricMatrix {
    pub const SYMMETRY_TOL: f64 = 1e-9;
    pub const PSD_TOL: f64 = 1e-8;

    /// Stores the symmetric part of `values`.
    pub fn new(values: DMatrix<f64>, role: MetricRole, point: ParameterPoint) -> Self {
        let sym = (&values + values.transpose()) * 0.5;
        Self {
            values: sym,
            role,
            point,
            numeric: false,
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        is_psd_real(&self.values, tol)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue_real(&self.values)
    }

    pub fn max_abs_diff(&self, other: &DMatrix<f64>) -> f64 {
        (&self.values - other).abs().max()
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.values.iter().all(|v| v.abs() <= tol)
    }

    /// Upper-left `n × n` block.
    pub fn leading_block(&self, n: usize) -> DMatrix<f64> {
        self.values.view((0, 0), (n, n)).into_owned()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.values[(i, j)]).collect())
            .collect()
    }
}

impl Serialize for MetricMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("MetricMatrix", 4)?;
        st.serialize_field("role", &self.role)?;
        st.serialize_field("point", &self.point)?;
        st.serialize_field("numeric", &self.numeric)?;
        st.serialize_field("values", &self.rows())?;
        st.end()
    }
}

/// `<k|∂_iρ|l>` for every parameter.
fn eigenbasis_derivatives(bundle: &DerivativeBundle) -> Vec<CMatrix> {
    bundle
        .d1
        .iter()
        .map(|d| bundle.spectrum.to_eigenbasis(d))
        .collect()
}

/// `2 Σ_{(k,l) selected} Re(A_i[k,l] A_j[l,k]) / (p_k + p_l)`.
fn pair_sum(
    spec: &EigenDecomposition,
    a: &[CMatrix],
    select: impl Fn(bool, bool) -> bool,
) -> DMatrix<f64> {
    let n = a.len();
    let dim = spec.dim();
    let positive: Vec<bool> = (0..dim).map(|k| !spec.is_zero(k)).collect();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..dim {
        for l in 0..dim {
            if !select(positive[k], positive[l]) {
                continue;
            }
            let denom = spec.eigenvalues[k] + spec.eigenvalues[l];
            if denom <= 0.0 {
                continue;
            }
            for i in 0..n {
                for j in i..n {
                    let v = 2.0 * (a[i][(k, l)] * a[j][(l, k)]).re / denom;
                    out[(i, j)] += v;
                    if i != j {
                        out[(j, i)] += v;
                    }
                }
            }
        }
    }
    out
}

/// Symmetric logarithmic derivatives `L_i` solving `½(L_iρ + ρL_i) = ∂_iρ`
/// on the block reachable from the support.
#[derive(Debug, Clone)]
pub struct SldSet {
    pub operators: Vec<CMatrix>,
    pub basis: EigenDecomposition,
    bundle_id: u64,
}

impl SldSet {
    pub fn bundle_id(&self) -> u64 {
        self.bundle_id
    }

    /// Largest Frobenius residual of the defining equation restricted to
    /// pairs with `p_k + p_l > 0`.
    pub fn residual(&self, bundle: &DerivativeBundle) -> f64 {
        let rho = bundle.rho.matrix();
        let spec = &self.basis;
        let mut worst: f64 = 0.0;
        for (l, d) in self.operators.iter().zip(&bundle.d1) {
            let lhs = (l * rho + rho * l) * c(0.5, 0.0) - d;
            let mut r = spec.to_eigenbasis(&lhs);
            for k in 0..spec.dim() {
                for m in 0..spec.dim() {
                    if spec.is_zero(k) && spec.is_zero(m) {
                        r[(k, m)] = c(0.0, 0.0);
                    }
                }
            }
            worst = worst.max(frobenius(&r));
        }
        worst
    }
}

/// `L_i = 2 Σ_{p_k+p_l>0} <k|∂_iρ|l>/(p_k+p_l) |k><l|`.
pub fn sld(bundle: &DerivativeBundle) -> SldSet {
    let spec = &bundle.spectrum;
    let dim = spec.dim();
    let operators = eigenbasis_derivatives(bundle)
        .into_iter()
        .map(|a| {
            let mut l = CMatrix::zeros(dim, dim);
            for k in 0..dim {
                for m in 0..dim {
                    let denom = spec.eigenvalues[k] + spec.eigenvalues[m];
                    if denom > 0.0 {
                        l[(k, m)] = a[(k, m)] * c(2.0 / denom, 0.0);
                    }
                }
            }
            hermitian_part(&spec.from_eigenbasis(&l))
        })
        .collect();
    SldSet {
        operators,
        basis: spec.clone(),
        bundle_id: bundle.id(),
    }
}

/// QFI matrix from the spectral formula.
pub fn qfi_spectral(bundle: &DerivativeBundle) -> MetricMatrix {
    let a = eigenbasis_derivatives(bundle);
    let values = pair_sum(&bundle.spectrum, &a, |pk, pl| pk || pl);
    MetricMatrix::new(values, MetricRole::QfiH, bundle.point.clone())
}

/// QFI matrix `½ tr[(L_iL_j + L_jL_i)ρ]` from precomputed SLDs.
pub fn qfi_from_sld(bundle: &DerivativeBundle, slds: &SldSet) -> Result<MetricMatrix> {
    if slds.bundle_id != bundle.id() {
        return Err(Error::BasisMismatch);
    }
    let n = slds.operators.len();
    let rho = bundle.rho.matrix();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let li = &slds.operators[i];
            let lj = &slds.operators[j];
            let v = 0.5 * trace(&((li * lj + lj * li) * rho)).re;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(MetricMatrix::new(
        values,
        MetricRole::QfiH,
        bundle.point.clone(),
    ))
}

/// Continuous QFI `H_c = 4g`, from the support-only pair sum plus the
/// kernel trace of the second derivative:
/// `H_c^{ij} = 2 Σ_{p_k,p_l>0} Re(..)/(p_k+p_l) + 2 tr[P₀ ∂_ijρ]`.
pub fn continuous_qfi(bundle: &DerivativeBundle) -> Result<MetricMatrix> {
    let d2 = bundle.second()?;
    let a = eigenbasis_derivatives(bundle);
    let mut values = pair_sum(&bundle.spectrum, &a, |pk, pl| pk && pl);
    values += kernel_trace(bundle, d2) * 2.0;
    Ok(MetricMatrix::new(
        values,
        MetricRole::ContinuousQfiHc,
        bundle.point.clone(),
    ))
}

/// `tr[P₀ ∂_ijρ]`.
fn kernel_trace(bundle: &DerivativeBundle, d2: &[Vec<CMatrix>]) -> DMatrix<f64> {
    let n = bundle.n_params();
    let mut out = DMatrix::zeros(n, n);
    if bundle.spectrum.is_full_rank() {
        return out;
    }
    let p0 = kernel_projector(&bundle.spectrum);
    for i in 0..n {
        for j in i..n {
            let v = trace(&(&p0 * &d2[i][j])).re;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// `Σ_{p_k=0} ∂_ij p_k`, computed as `½(H_c − H)`.
pub fn kernel_hessian_sum(bundle: &DerivativeBundle) -> Result<MetricMatrix> {
    let hc = continuous_qfi(bundle)?;
    let h = qfi_spectral(bundle);
    Ok(MetricMatrix::new(
        (hc.values - h.values) * 0.5,
        MetricRole::HessianSum,
        bundle.point.clone(),
    ))
}

/// `Σ_{p_k=0} ∂_ij p_k` from the kernel trace directly:
/// `tr[P₀ ∂_ijρ] − 2 Σ_{p_k>0, p_l=0} Re(<k|∂_iρ|l><l|∂_jρ|k>)/p_k`.
pub fn kernel_hessian_sum_direct(bundle: &DerivativeBundle) -> Result<MetricMatrix> {
    let d2 = bundle.second()?;
    let a = eigenbasis_derivatives(bundle);
    let mut values = kernel_trace(bundle, d2);
    // pair_sum over (k ∈ support, l ∈ kernel) already carries the factor 2.
    values -= pair_sum(&bundle.spectrum, &a, |pk, pl| pk && !pl);
    Ok(MetricMatrix::new(
        values,
        MetricRole::HessianSum,
        bundle.point.clone(),
    ))
}

/// Support-only metric (four times the truncated `g`), which omits the
/// mixed support/kernel pairs that `H` keeps.
pub fn truncated_metric(bundle: &DerivativeBundle) -> MetricMatrix {
    let a = eigenbasis_derivatives(bundle);
    let values = pair_sum(&bundle.spectrum, &a, |pk, pl| pk && pl);
    MetricMatrix::new(values, MetricRole::TruncatedMetric4g, bundle.point.clone())
}

/// `√F = tr √(√a b √a)`, evaluated as the nuclear norm `‖√a √b‖₁`.
///
/// For nearby states `√a b √a ≈ a²`, whose small eigenvalues lose absolute
/// precision before the square root; the singular values of `√a √b` do not.
/// Eigenvalues within `DEFAULT_TOL_ZERO` of zero are treated as exact zeros.
pub fn root_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let sa = psd_sqrt(a.matrix(), DEFAULT_TOL_ZERO)?;
    let sb = psd_sqrt(b.matrix(), DEFAULT_TOL_ZERO)?;
    let svd = (sa * sb).svd(false, false);
    if svd.singular_values.iter().any(|s| !s.is_finite()) {
        return Err(Error::ConvergenceFailure);
    }
    Ok(svd.singular_values.sum().clamp(0.0, 1.0))
}

/// Uhlmann fidelity `F = (tr √(√a b √a))²`.
pub fn uhlmann_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    let r = root_fidelity(a, b)?;
    Ok(r * r)
}

/// Squared Bures distance `2(1 − √F)`.
pub fn bures_distance_sq(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    Ok(2.0 * (1.0 - root_fidelity(a, b)?))
}

const ORACLE_REL_TOL: f64 = 1e-3;
const ORACLE_FLOOR: f64 = 1e-6;

/// `d_B²(ρ(p), ρ(p + h u))/h²` extrapolated to `h → 0` over `h, h/2, …`.
fn directional_metric(
    fam: &dyn StateFamily,
    p: &ParameterPoint,
    base: &DensityMatrix,
    u: &[f64],
    fd: &FiniteDifferenceConfig,
) -> Result<f64> {
    let steps: Vec<f64> = (0..=fd.richardson_levels)
        .map(|k| fd.h / 2f64.powi(k as i32))
        .collect();
    // The quadratic form is even in u; step backwards off an upper boundary.
    let forward_ok = steps
        .iter()
        .all(|&h| fam.domain().contains(p.shifted(u, h).coords()));
    let sign = if forward_ok { 1.0 } else { -1.0 };
    let samples = steps
        .iter()
        .map(|&h| {
            let q = p.shifted(u, sign * h);
            let other = evaluate(fam, q.coords())?;
            Ok(bures_distance_sq(base, &other)? / (h * h))
        })
        .collect::<Result<Vec<f64>>>()?;
    let e = extrapolate_checked(
        &steps,
        &samples,
        ORACLE_REL_TOL,
        ORACLE_FLOOR,
        "fidelity metric oracle",
    )?;
    Ok(e.value)
}

/// Fidelity-based finite-difference estimate of `4g`.
///
/// Diagonal entries use `u = e_i`; off-diagonal ones use polarization with
/// the unnormalized direction `e_i + e_j`:
/// `g^{ij} = (g_{e_i+e_j} − g_{e_i} − g_{e_j}) / 2`.
pub fn numeric_bures_metric(
    fam: &dyn StateFamily,
    p: &ParameterPoint,
    fd: &FiniteDifferenceConfig,
) -> Result<MetricMatrix> {
    fd.validate()?;
    let n = fam.n_params();
    if p.len() != n {
        return Err(Error::DimensionMismatch(n, p.len()));
    }
    evaluate_raw(fam, p.coords())?;
    let base = evaluate(fam, p.coords())?;
    let unit = |i: usize| {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        e
    };
    let diag: Vec<f64> = (0..n)
        .map(|i| directional_metric(fam, p, &base, &unit(i), fd))
        .collect::<Result<_>>()?;
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = diag[i];
        for j in i + 1..n {
            let mut u = unit(i);
            u[j] = 1.0;
            let gij = 0.5 * (directional_metric(fam, p, &base, &u, fd)? - diag[i] - diag[j]);
            g[(i, j)] = gij;
            g[(j, i)] = gij;
        }
    }
    let mut out = MetricMatrix::new(g * 4.0, MetricRole::ContinuousQfiHc, p.clone());
    out.numeric = true;
    Ok(out)
}

/// Lower bound on the estimator covariance.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CramerRaoBound {
    /// `H⁻¹`, or the pseudo-inverse on the support of `H` when singular.
    pub bound: Vec<Vec<f64>>,
    /// Unit vectors spanning the null space of `H`; no unbiased estimator
    /// has finite variance along them.
    pub singular_directions: Vec<Vec<f64>>,
    pub invertible: bool,
}

/// `Cov ≥ H⁻¹`, with a pseudo-inverse and flagged null directions when `H`
/// has eigenvalues at or below `tol`.
pub fn cramer_rao_lower_bound(h: &MetricMatrix, tol: f64) -> CramerRaoBound {
    let n = h.n();
    let eig = SymmetricEigen::new(h.values.clone());
    let mut inv = DMatrix::zeros(n, n);
    let mut singular = Vec::new();
    for k in 0..n {
        let lambda = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        if lambda > tol {
            inv += (v * v.transpose()) / lambda;
        } else {
            let mut dir: Vec<f64> = v.iter().copied().collect();
            // Fix the sign so the first significant entry is positive.
            if let Some(first) = dir.iter().copied().find(|x| x.abs() > 1e-12) {
                if first < 0.0 {
                    dir.iter_mut().for_each(|x| *x = -*x);
                }
            }
            singular.push(dir);
        }
    }
    let inv = (&inv + inv.transpose()) * 0.5;
    CramerRaoBound {
        bound: (0..n)
            .map(|i| (0..n).map(|j| inv[(i, j)]).collect())
            .collect(),
        invertible: singular.is_empty(),
        singular_directions: singular,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{builtin_family, PurityFamily, QubitRotationFamily};
    use crate::family::evaluate_bundle;
    use crate::hermitian::diag;
    use std::f64::consts::PI;

    fn bundle(name: &str, p: &[f64]) -> DerivativeBundle {
        let fam = builtin_family(name).unwrap();
        evaluate_bundle(
            fam.as_ref(),
            &ParameterPoint::new(p.to_vec()).unwrap(),
            &FiniteDifferenceConfig::default(),
            DEFAULT_TOL_ZERO,
        )
        .unwrap()
    }

    #[test]
    fn sld_of_constant_family_vanishes() {
        let b = bundle("maximally-mixed(3,2)", &[0.1, 0.2]);
        for l in sld(&b).operators {
            assert_eq!(frobenius(&l), 0.0);
        }
    }

    #[test]
    fn sld_full_rank_example1() {
        let b = bundle("example1", &[PI / 4.0]);
        let l = &sld(&b).operators[0];
        assert!(frobenius(&(l - diag(&[2.0, -2.0]))) < 1e-12);
        assert!(sld(&b).residual(&b) < 1e-12);
    }

    #[test]
    fn sld_at_rank_drop_is_zero() {
        let b = bundle("example1", &[0.0]);
        let l = &sld(&b).operators[0];
        assert!(frobenius(l) < 1e-15);
    }

    #[test]
    fn qfi_example1_values() {
        assert!((qfi_spectral(&bundle("example1", &[PI / 4.0])).get(0, 0) - 4.0).abs() < 1e-12);
        assert_eq!(qfi_spectral(&bundle("example1", &[0.0])).get(0, 0), 0.0);
    }

    #[test]
    fn qfi_from_sld_checks_bundle() {
        let a = bundle("example1", &[0.3]);
        let b = bundle("example1", &[0.3]);
        assert_eq!(qfi_from_sld(&a, &sld(&b)), Err(Error::BasisMismatch));
    }

    #[test]
    fn qfi_pure_rotation_is_four() {
        let b = bundle("pure-qubit-rotation", &[0.37]);
        let h = qfi_from_sld(&b, &sld(&b)).unwrap();
        assert!((h.get(0, 0) - 4.0).abs() < 1e-12);
        assert!((qfi_spectral(&b).get(0, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_basics() {
        let a = DensityMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        let b = DensityMatrix::from_diagonal(&[0.0, 1.0]).unwrap();
        assert_eq!(uhlmann_fidelity(&a, &b).unwrap(), 0.0);
        assert!((bures_distance_sq(&a, &b).unwrap() - 2.0).abs() < 1e-15);
        assert!((uhlmann_fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let m = DensityMatrix::maximally_mixed(3);
        assert!(uhlmann_fidelity(&a, &m).is_err());
    }

    #[test]
    fn fidelity_example1_pair() {
        let fam = PurityFamily;
        let a = evaluate(&fam, &[0.3]).unwrap();
        let b = evaluate(&fam, &[0.5]).unwrap();
        let f = uhlmann_fidelity(&a, &b).unwrap();
        // √F = sin(0.3)sin(0.5) + cos(0.3)cos(0.5) = cos(0.2).
        assert!((f - 0.2f64.cos().powi(2)).abs() < 1e-12);
        let d2 = bures_distance_sq(&a, &b).unwrap();
        assert!((d2 - 2.0 * (1.0 - 0.2f64.cos())).abs() < 1e-12);
    }

    #[test]
    fn fidelity_pure_states_is_overlap_squared() {
        let fam = QubitRotationFamily;
        let a = evaluate(&fam, &[0.1]).unwrap();
        let b = evaluate(&fam, &[0.8]).unwrap();
        let f = uhlmann_fidelity(&a, &b).unwrap();
        assert!((f - 0.7f64.cos().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn continuous_qfi_needs_second_derivatives() {
        let b = bundle("example1", &[0.2]);
        let stripped = DerivativeBundle::new(
            b.point.clone(),
            b.rho.clone(),
            b.d1.clone(),
            None,
            DEFAULT_TOL_ZERO,
            b.provenance,
        )
        .unwrap();
        assert_eq!(
            continuous_qfi(&stripped).unwrap_err(),
            Error::MissingSecondDerivatives
        );
    }

    #[test]
    fn continuous_qfi_examples() {
        for x in [0.0, 0.4, PI / 2.0, PI] {
            let hc = continuous_qfi(&bundle("example1", &[x])).unwrap();
            assert!((hc.get(0, 0) - 4.0).abs() < 1e-12, "ε = {x}");
        }
        let hc = continuous_qfi(&bundle("example2", &[0.0, 0.0])).unwrap();
        assert!((hc.get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_hessian_sum_examples() {
        let k = kernel_hessian_sum(&bundle("example1", &[0.0])).unwrap();
        assert!((k.get(0, 0) - 2.0).abs() < 1e-12);
        let k = kernel_hessian_sum(&bundle("example2", &[0.0, 0.0])).unwrap();
        assert!(k.max_abs_diff(&DMatrix::identity(2, 2)) < 1e-12);
        let k = kernel_hessian_sum(&bundle("example1", &[0.7])).unwrap();
        assert!(k.is_zero(1e-12));
    }

    #[test]
    fn truncated_metric_gap() {
        let b = bundle("pure-qubit-rotation", &[0.0]);
        assert_eq!(truncated_metric(&b).get(0, 0), 0.0);
        assert!((qfi_spectral(&b).get(0, 0) - 4.0).abs() < 1e-12);
        let b = bundle("example1", &[1.0]);
        assert!((truncated_metric(&b).get(0, 0) - 4.0).abs() < 1e-12);
        assert_eq!(truncated_metric(&bundle("example1", &[0.0])).get(0, 0), 0.0);
    }

    #[test]
    fn numeric_metric_example1_rank_drop() {
        let fam = PurityFamily;
        let g = numeric_bures_metric(
            &fam,
            &ParameterPoint::scalar(0.0),
            &FiniteDifferenceConfig::metric_oracle(),
        )
        .unwrap();
        assert!((g.get(0, 0) - 4.0).abs() < 1e-4, "{}", g.get(0, 0));
        assert!(g.numeric);
    }

    #[test]
    fn numeric_metric_constant_family() {
        let fam = builtin_family("maximally-mixed(2,2)").unwrap();
        let g = numeric_bures_metric(
            fam.as_ref(),
            &ParameterPoint::new(vec![0.0, 0.0]).unwrap(),
            &FiniteDifferenceConfig::metric_oracle(),
        )
        .unwrap();
        assert!(g.is_zero(1e-9));
    }

    #[test]
    fn cramer_rao_cases() {
        let p = ParameterPoint::scalar(0.0);
        let h = MetricMatrix::new(
            DMatrix::from_element(1, 1, 4.0),
            MetricRole::QfiH,
            p.clone(),
        );
        let b = cramer_rao_lower_bound(&h, 1e-12);
        assert!((b.bound[0][0] - 0.25).abs() < 1e-15);
        assert!(b.invertible);

        let h = MetricMatrix::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
            MetricRole::QfiH,
            ParameterPoint::new(vec![0.0, 0.0]).unwrap(),
        );
        let b = cramer_rao_lower_bound(&h, 1e-12);
        assert!(!b.invertible);
        assert!((b.bound[0][0] - 0.5).abs() < 1e-15);
        assert_eq!(b.bound[1][1], 0.0);
        assert_eq!(b.singular_directions.len(), 1);
        assert!((b.singular_directions[0][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cramer_rao_inverse_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.7]);
        let h = MetricMatrix::new(
            m.clone(),
            MetricRole::QfiH,
            ParameterPoint::new(vec![0.0, 0.0]).unwrap(),
        );
        let b = cramer_rao_lower_bound(&h, 1e-12);
        let inv = DMatrix::from_fn(2, 2, |i, j| b.bound[i][j]);
        assert!(((m * inv) - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-9);
    }
}
