//! Rank-change points: per-branch Hessians of vanishing eigenvalues,
//! directional jumps of `H_c`, directional limits, continuity verdicts and
//! the regularization procedure.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extrapolate::extrapolate_to_zero;
use crate::family::{
    evaluate_bundle, evaluate_raw, DerivativeBundle, Domain, Family, FiniteDifferenceConfig,
    ParameterPoint, Smoothness, StateFamily,
};
use crate::hermitian::{
    c, eigh, frobenius, CMatrix, DensityMatrix, EigenDecomposition, DEFAULT_TOL_ZERO,
};
use crate::metrology::{
    continuous_qfi, kernel_hessian_sum, qfi_spectral, MetricMatrix, MetricRole,
};

/// Unit vector in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DirectionVector(Vec<f64>);

impl DirectionVector {
    pub const NORM_TOL: f64 = 1e-12;

    pub fn new(u: Vec<f64>) -> Result<Self> {
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if u.is_empty() || (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "direction must have unit norm, got {norm}"
            )));
        }
        Ok(Self(u))
    }

    /// Scales `v` to unit length.
    pub fn normalized(v: &[f64]) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidArgument("direction must be non-zero".into()));
        }
        Ok(Self(v.iter().map(|x| x / norm).collect()))
    }

    pub fn axis(n: usize, l: usize) -> Self {
        let mut u = vec![0.0; n];
        u[l] = 1.0;
        Self(u)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `H_k^{ij} = ∂_ij p_k` for one vanishing eigenvalue.
#[derive(Debug, Clone)]
pub struct BranchHessian {
    /// Position in the (possibly rotated) kernel basis.
    pub branch_index: usize,
    pub hessian: DMatrix<f64>,
    pub kernel_vector: Vec<nalgebra::Complex<f64>>,
}

impl BranchHessian {
    pub const PSD_TOL: f64 = 1e-7;

    /// `uᵀ H_k u`.
    pub fn curvature(&self, u: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(u);
        (v.transpose() * &self.hessian * &v)[(0, 0)]
    }

    pub fn is_psd(&self) -> bool {
        crate::hermitian::is_psd_real(&self.hessian, Self::PSD_TOL)
    }
}

fn check_direction(bundle: &DerivativeBundle, u: &DirectionVector) -> Result<()> {
    if u.len() != bundle.n_params() {
        return Err(Error::DimensionMismatch(bundle.n_params(), u.len()));
    }
    Ok(())
}

/// Columns of the kernel basis used for the branches. A multi-dimensional
/// kernel is rotated to diagonalize the direction-contracted form
/// `M_u = <a|∂_uuρ|b> − 2 Σ_{p_k>0} <a|∂_uρ|k><k|∂_uρ|b>/p_k`.
fn branch_basis(bundle: &DerivativeBundle, u: Option<&DirectionVector>) -> Result<CMatrix> {
    let spec = &bundle.spectrum;
    let z = spec.zero_set.len();
    let mut basis = CMatrix::zeros(spec.dim(), z);
    for (col, &k) in spec.zero_set.iter().enumerate() {
        basis.set_column(col, &spec.eigenvectors.column(k));
    }
    if z <= 1 {
        return Ok(basis);
    }
    let u = u.ok_or(Error::DegenerateKernelNeedsDirection(z))?;
    check_direction(bundle, u)?;
    let du = bundle.directional_first(u.coords());
    let duu = bundle.directional_second(u.coords())?;
    let mut m = basis.adjoint() * &duu * &basis;
    for &k in &spec.positive_set {
        let v = spec.eigenvectors.column(k);
        let w = basis.adjoint() * &du * v;
        m -= (&w * w.adjoint()) * c(2.0 / spec.eigenvalues[k], 0.0);
    }
    let rot = eigh(&m, 0.0)?;
    Ok(basis * rot.eigenvectors)
}

/// Per-branch Hessians of the vanishing eigenvalues,
/// `∂_ij p_l = <l|∂_ijρ|l> − 2 Σ_{p_k>0} Re(<l|∂_iρ|k><k|∂_jρ|l>)/p_k`.
///
/// A direction is required when more than one eigenvalue vanishes.
pub fn vanishing_branch_hessians(
    bundle: &DerivativeBundle,
    u: Option<&DirectionVector>,
) -> Result<Vec<BranchHessian>> {
    let d2 = bundle.second()?;
    let basis = branch_basis(bundle, u)?;
    let spec = &bundle.spectrum;
    let n = bundle.n_params();
    let mut out = Vec::with_capacity(basis.ncols());
    for b in 0..basis.ncols() {
        let l = basis.column(b).into_owned();
        // <k|∂_iρ|l> for every positive k and parameter i.
        let couplings: Vec<Vec<nalgebra::Complex<f64>>> = bundle
            .d1
            .iter()
            .map(|d| {
                let dl = d * &l;
                spec.positive_set
                    .iter()
                    .map(|&k| spec.eigenvectors.column(k).dotc(&dl))
                    .collect()
            })
            .collect();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut v = l.dotc(&(&d2[i][j] * &l)).re;
                for (idx, &k) in spec.positive_set.iter().enumerate() {
                    // <l|∂_iρ|k> = conj(<k|∂_iρ|l>).
                    let prod = couplings[i][idx].conj() * couplings[j][idx];
                    v -= 2.0 * prod.re / spec.eigenvalues[k];
                }
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        out.push(BranchHessian {
            branch_index: b,
            hessian: h,
            kernel_vector: l.iter().copied().collect(),
        });
    }
    Ok(out)
}

/// One branch's directional curvature `uᵀ H_k u`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchCurvature {
    pub branch_index: usize,
    pub curvature: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpReport {
    pub point: ParameterPoint,
    pub direction: DirectionVector,
    pub delta: MetricMatrix,
    pub contributing_branches: Vec<BranchCurvature>,
    /// Branches with `uᵀ H_k u ≤ 1e-10·‖H_k‖`; they do not enter `Δ_u`.
    pub excluded_branches: Vec<BranchCurvature>,
    /// `max |lim_{h→0} H_c(p + h u) − (H_c(p) + Δ_u)|` when requested.
    pub numeric_confirmation: Option<f64>,
}

const CONTRIBUTION_REL_TOL: f64 = 1e-10;

/// Directional jump
/// `Δ_u^{ij} = 2 Σ_{uᵀH_ku > tol} [(H_k u)_i (H_k u)_j / (uᵀH_k u) − H_k^{ij}]`
/// plus, for a multi-dimensional kernel, the coherence between branches,
/// `4 Σ_{k≠l} Re(B_i[k,l] B_j[l,k]) / (c_k + c_l)` over pairs with at least
/// one contributing branch. Here `c_k = uᵀH_k u` and `B_i` is the mixed
/// second-order kernel form `K(e_i, u)` in the branch basis.
pub fn jump(bundle: &DerivativeBundle, u: &DirectionVector) -> Result<JumpReport> {
    check_direction(bundle, u)?;
    let branches = vanishing_branch_hessians(bundle, Some(u))?;
    jump_from_branches(bundle, u, &branches)
}

/// `B_i[k,l] = <k|∂_iuρ|l> − Σ_{p_s>0} (<k|∂_iρ|s><s|∂_uρ|l> + <k|∂_uρ|s><s|∂_iρ|l>)/p_s`.
fn kernel_coherences(
    bundle: &DerivativeBundle,
    u: &DirectionVector,
    branches: &[BranchHessian],
) -> Result<Vec<CMatrix>> {
    let d2 = bundle.second()?;
    let spec = &bundle.spectrum;
    let z = CMatrix::from_fn(spec.dim(), branches.len(), |r, col| {
        branches[col].kernel_vector[r]
    });
    let du = bundle.directional_first(u.coords());
    let mut out = Vec::with_capacity(bundle.n_params());
    for (i, di) in bundle.d1.iter().enumerate() {
        let mut diu = CMatrix::zeros(spec.dim(), spec.dim());
        for (row, &uj) in d2[i].iter().zip(u.coords()) {
            diu += row * c(uj, 0.0);
        }
        let mut b = z.adjoint() * diu * &z;
        for &s in &spec.positive_set {
            let v = spec.eigenvectors.column(s);
            let a_i = z.adjoint() * di * v;
            let a_u = z.adjoint() * &du * v;
            b -= (&a_i * a_u.adjoint() + &a_u * a_i.adjoint()) * c(1.0 / spec.eigenvalues[s], 0.0);
        }
        out.push(b);
    }
    Ok(out)
}

fn jump_from_branches(
    bundle: &DerivativeBundle,
    u: &DirectionVector,
    branches: &[BranchHessian],
) -> Result<JumpReport> {
    let n = bundle.n_params();
    let uv = nalgebra::DVector::from_column_slice(u.coords());
    let mut delta = DMatrix::zeros(n, n);
    let mut contributing = Vec::new();
    let mut excluded = Vec::new();
    let mut curvatures = Vec::with_capacity(branches.len());
    for b in branches {
        let curv = b.curvature(u.coords());
        let entry = BranchCurvature {
            branch_index: b.branch_index,
            curvature: curv,
        };
        let counts = curv > CONTRIBUTION_REL_TOL * b.hessian.norm();
        if counts {
            let hu = &b.hessian * &uv;
            delta += (&hu * hu.transpose() / curv - &b.hessian) * 2.0;
            contributing.push(entry);
        } else {
            excluded.push(entry);
        }
        curvatures.push((curv, counts));
    }
    if branches.len() > 1 {
        let coh = kernel_coherences(bundle, u, branches)?;
        for (k, &(ck, in_k)) in curvatures.iter().enumerate() {
            for (l, &(cl, in_l)) in curvatures.iter().enumerate() {
                if k == l || !(in_k || in_l) {
                    continue;
                }
                let denom = ck.max(0.0) + cl.max(0.0);
                for i in 0..n {
                    for j in 0..n {
                        delta[(i, j)] += 4.0 * (coh[i][(k, l)] * coh[j][(l, k)]).re / denom;
                    }
                }
            }
        }
    }
    Ok(JumpReport {
        point: bundle.point.clone(),
        direction: u.clone(),
        delta: MetricMatrix::new(delta, MetricRole::JumpDelta, bundle.point.clone()),
        contributing_branches: contributing,
        excluded_branches: excluded,
        numeric_confirmation: None,
    })
}

/// Default step schedule for directional limits: `1e-2·2^{-k}`, five levels.
pub fn default_step_schedule() -> Vec<f64> {
    (0..5).map(|k| 1e-2 / 2f64.powi(k)).collect()
}

const LIMIT_REL_TOL: f64 = 1e-3;
const LIMIT_FLOOR: f64 = 1e-4;

/// Element-wise extrapolation of a matrix sequence to zero abscissa. Fails
/// when the last two levels disagree by more than `LIMIT_REL_TOL` relative
/// to the largest entry.
fn extrapolate_matrices(
    x: &[f64],
    mats: &[DMatrix<f64>],
    what: &str,
) -> Result<(DMatrix<f64>, f64)> {
    let n = mats[0].nrows();
    let mut limit = DMatrix::zeros(n, n);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            let y: Vec<f64> = mats.iter().map(|m| m[(i, j)]).collect();
            let e = extrapolate_to_zero(x, &y)?;
            if !e.value.is_finite() {
                return Err(Error::ExtrapolationDiverged(format!(
                    "{what}: non-finite limit"
                )));
            }
            limit[(i, j)] = e.value;
            limit[(j, i)] = e.value;
            worst = worst.max(e.residual());
        }
    }
    let scale = limit.abs().max().max(LIMIT_FLOOR);
    if worst / scale > LIMIT_REL_TOL {
        return Err(Error::ExtrapolationDiverged(format!(
            "{what}: last two levels differ by {worst:e} (scale {scale:e})"
        )));
    }
    Ok((limit, worst))
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionalLimit {
    pub steps: Vec<f64>,
    pub samples: Vec<MetricMatrix>,
    /// `lim_{h→0} H_c(p + h u)`.
    pub limit: MetricMatrix,
    /// Disagreement of the last two extrapolation levels.
    pub extrapolation_residual: f64,
    /// `H_c(p) + Δ_u(p)`.
    pub predicted: MetricMatrix,
    /// `max |limit − predicted|`.
    pub residual: f64,
}

/// Zero threshold for samples off the rank-change point. A branch with
/// small curvature `c` sits near `c h²/2`, below the default threshold for
/// the finer steps, yet is still far above round-off.
const SAMPLE_TOL_ZERO: f64 = 1e-14;

/// Evaluates `H_c` at `p + h u` over a decreasing step schedule and
/// extrapolates `h → 0` (the approach is `O(h)`).
pub fn directional_limit(
    fam: &dyn StateFamily,
    p: &ParameterPoint,
    u: &DirectionVector,
    schedule: Option<&[f64]>,
    fd: &FiniteDifferenceConfig,
) -> Result<DirectionalLimit> {
    let default = default_step_schedule();
    let steps = schedule.unwrap_or(&default).to_vec();
    check_schedule(&steps, "step schedule")?;
    if u.len() != fam.n_params() {
        return Err(Error::DimensionMismatch(fam.n_params(), u.len()));
    }
    let domain = fam.domain();
    for &h in &steps {
        if !domain.contains(p.shifted(u.coords(), h).coords()) {
            return Err(Error::DomainError(format!(
                "{} + {h}·u leaves the domain of {}",
                fmt_point(p),
                fam.name()
            )));
        }
    }
    let samples = steps
        .iter()
        .map(|&h| {
            let q = p.shifted(u.coords(), h);
            continuous_qfi(&evaluate_bundle(fam, &q, fd, SAMPLE_TOL_ZERO)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<DMatrix<f64>> = samples.iter().map(|m| m.values.clone()).collect();
    let (limit, extrapolation_residual) =
        extrapolate_matrices(&steps, &values, "directional limit")?;

    let base = evaluate_bundle(fam, p, fd, DEFAULT_TOL_ZERO)?;
    let hc = continuous_qfi(&base)?;
    let report = jump(&base, u)?;
    let predicted = MetricMatrix::new(
        &hc.values + &report.delta.values,
        MetricRole::ContinuousQfiHc,
        p.clone(),
    );
    let residual = (&limit - &predicted.values).abs().max();
    Ok(DirectionalLimit {
        steps,
        samples,
        limit: MetricMatrix::new(limit, MetricRole::ContinuousQfiHc, p.clone()),
        extrapolation_residual,
        predicted,
        residual,
    })
}

/// Runs [`jump`] and attaches the directional-limit residual.
pub fn jump_confirmed(
    fam: &dyn StateFamily,
    p: &ParameterPoint,
    u: &DirectionVector,
    fd: &FiniteDifferenceConfig,
) -> Result<JumpReport> {
    let bundle = evaluate_bundle(fam, p, fd, DEFAULT_TOL_ZERO)?;
    let mut report = jump(&bundle, u)?;
    let lim = directional_limit(fam, p, u, None, fd)?;
    report.numeric_confirmation = Some(lim.residual);
    Ok(report)
}

fn check_schedule(s: &[f64], what: &str) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} is empty")));
    }
    if s.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument(format!("{what} must be positive")));
    }
    if s.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "{what} must be strictly decreasing"
        )));
    }
    Ok(())
}

fn fmt_point(p: &ParameterPoint) -> String {
    format!("{:?}", p.coords())
}

const VERDICT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityVerdict {
    pub axis: usize,
    /// `Δ_{e_l}`; `H_c^{ij}` is continuous in `ε_l` iff its entry vanishes.
    pub delta: MetricMatrix,
    /// Elements `(i, j)`, `i ≤ j`, that jump along the axis.
    pub discontinuous_elements: Vec<(usize, usize)>,
    /// `H_c − H = 2 Σ_k H_k`; a nonzero gap makes `H` itself discontinuous.
    pub qfi_gap: MetricMatrix,
    pub qfi_continuous: bool,
}

impl ContinuityVerdict {
    pub fn hc_continuous(&self) -> bool {
        self.discontinuous_elements.is_empty()
    }
}

/// Continuity of `H_c` along parameter axis `l`, plus the `H`-vs-`H_c` gap.
pub fn continuity_verdict(bundle: &DerivativeBundle, axis: usize) -> Result<ContinuityVerdict> {
    if bundle.at_declared_singularity {
        return Err(Error::RefusedPathologicalPoint(
            bundle.point.coords().to_vec(),
        ));
    }
    let n = bundle.n_params();
    if axis >= n {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for {n} parameters"
        )));
    }
    let report = jump(bundle, &DirectionVector::axis(n, axis))?;
    let mut bad = Vec::new();
    for i in 0..n {
        for j in i..n {
            if report.delta.get(i, j).abs() > VERDICT_TOL {
                bad.push((i, j));
            }
        }
    }
    let k = kernel_hessian_sum(bundle)?;
    let gap = MetricMatrix::new(k.values * 2.0, MetricRole::HessianSum, bundle.point.clone());
    let qfi_continuous = gap.is_zero(VERDICT_TOL);
    Ok(ContinuityVerdict {
        axis,
        delta: report.delta,
        discontinuous_elements: bad,
        qfi_gap: gap,
        qfi_continuous,
    })
}

const COMMUTATOR_TOL: f64 = 1e-8;

/// `(1 − ν) ρ(ε) + ν ρ₀`.
pub struct Regularized {
    inner: Family,
    rho0: DensityMatrix,
    nu: f64,
}

impl fmt::Debug for Regularized {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Regularized")
            .field("inner", &self.inner.name())
            .field("nu", &self.nu)
            .finish()
    }
}

impl Regularized {
    pub fn nu(&self) -> f64 {
        self.nu
    }
}

impl StateFamily for Regularized {
    fn name(&self) -> String {
        format!("regularized({}, nu={})", self.inner.name(), self.nu)
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn n_params(&self) -> usize {
        self.inner.n_params()
    }

    fn domain(&self) -> Domain {
        self.inner.domain()
    }

    fn smoothness(&self) -> Smoothness {
        self.inner.smoothness()
    }

    fn density(&self, p: &[f64]) -> Result<CMatrix> {
        let rho = self.inner.density(p)?;
        let r0 = self.rho0.matrix();
        let comm = frobenius(&(&rho * r0 - r0 * &rho));
        if comm > COMMUTATOR_TOL {
            return Err(Error::Rho0NotCoDiagonal(comm));
        }
        Ok(rho * c(1.0 - self.nu, 0.0) + r0 * c(self.nu, 0.0))
    }

    fn first_derivatives(&self, p: &[f64]) -> Option<Result<Vec<CMatrix>>> {
        let s = c(1.0 - self.nu, 0.0);
        self.inner
            .first_derivatives(p)
            .map(|r| r.map(|v| v.into_iter().map(|m| m * s).collect()))
    }

    fn second_derivatives(&self, p: &[f64]) -> Option<Result<Vec<Vec<CMatrix>>>> {
        let s = c(1.0 - self.nu, 0.0);
        self.inner.second_derivatives(p).map(|r| {
            r.map(|t| {
                t.into_iter()
                    .map(|row| row.into_iter().map(|m| m * s).collect())
                    .collect()
            })
        })
    }

    fn derivative_step(&self) -> Option<f64> {
        self.inner.derivative_step()
    }
}

/// Mixes a family with a full-rank anchor `ρ₀` by weight `ν ∈ (0, 1)`.
/// Every evaluation checks that `ρ(ε)` commutes with `ρ₀`.
pub fn regularize(fam: Family, rho0: DensityMatrix, nu: f64) -> Result<Family> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::InvalidNu(nu));
    }
    if rho0.dim() != fam.dim() {
        return Err(Error::DimensionMismatch(fam.dim(), rho0.dim()));
    }
    let min = rho0.spectrum(DEFAULT_TOL_ZERO)?.min_eigenvalue();
    if min <= DEFAULT_TOL_ZERO {
        return Err(Error::Rho0NotFullRank(min));
    }
    Ok(Arc::new(Regularized {
        inner: fam,
        rho0,
        nu,
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularizationTrace {
    pub nu_schedule: Vec<f64>,
    /// `H(ρ_{ε,ν})` per scheduled `ν`.
    pub qfi_values: Vec<MetricMatrix>,
    pub min_eigenvalues: Vec<f64>,
    /// `lim_{ν→0} H(ρ_{ε,ν})`.
    pub extrapolated_limit: MetricMatrix,
    pub extrapolation_residual: f64,
    pub rho0_description: String,
    /// `Σ_{p_k=0} ∂_ij p_k` of the unregularized family at the point.
    pub kernel_hessian_sum: MetricMatrix,
    /// `limit + 2·kernel_hessian_sum`, to be compared with `H_c`.
    pub limit_plus_hessian: MetricMatrix,
    pub continuous_qfi: MetricMatrix,
}

fn describe_rho0(rho0: &DensityMatrix) -> String {
    let m = rho0.matrix();
    let d = rho0.dim();
    let uniform = 1.0 / d as f64;
    let is_mixed = (0..d).all(|i| {
        (0..d).all(|j| {
            let target = if i == j { uniform } else { 0.0 };
            (m[(i, j)] - c(target, 0.0)).norm() < 1e-14
        })
    });
    if is_mixed {
        return format!("I/{d}");
    }
    let diag: Vec<String> = (0..d).map(|i| format!("{}", m[(i, i)].re)).collect();
    format!("full-rank anchor with diagonal [{}]", diag.join(", "))
}

/// `H` of the regularized family over a decreasing `ν` schedule,
/// extrapolated to `ν → 0`.
pub fn regularization_limit(
    fam: Family,
    p: &ParameterPoint,
    rho0: &DensityMatrix,
    schedule: &[f64],
    fd: &FiniteDifferenceConfig,
) -> Result<RegularizationTrace> {
    check_schedule(schedule, "ν schedule")?;
    if let Some(&last) = schedule.last() {
        if last < 1e-8 {
            return Err(Error::InvalidNu(last));
        }
    }
    let rho0_min = rho0.spectrum(DEFAULT_TOL_ZERO)?.min_eigenvalue();
    let mut qfi_values = Vec::with_capacity(schedule.len());
    let mut min_eigenvalues = Vec::with_capacity(schedule.len());
    for &nu in schedule {
        let reg = regularize(fam.clone(), rho0.clone(), nu)?;
        let b = evaluate_bundle(reg.as_ref(), p, fd, DEFAULT_TOL_ZERO)?;
        let min = b.spectrum.min_eigenvalue();
        if min < nu * rho0_min - 1e-12 {
            return Err(Error::InvariantViolation(format!(
                "regularized state at ν = {nu} has eigenvalue {min:e}"
            )));
        }
        min_eigenvalues.push(min);
        qfi_values.push(qfi_spectral(&b));
    }
    let values: Vec<DMatrix<f64>> = qfi_values.iter().map(|m| m.values.clone()).collect();
    let (limit, extrapolation_residual) =
        extrapolate_matrices(schedule, &values, "regularization limit")?;

    let base = evaluate_bundle(fam.as_ref(), p, fd, DEFAULT_TOL_ZERO)?;
    let k = kernel_hessian_sum(&base)?;
    let hc = continuous_qfi(&base)?;
    let limit = MetricMatrix::new(limit, MetricRole::QfiH, p.clone());
    let sum = MetricMatrix::new(
        &limit.values + &k.values * 2.0,
        MetricRole::ContinuousQfiHc,
        p.clone(),
    );
    Ok(RegularizationTrace {
        nu_schedule: schedule.to_vec(),
        qfi_values,
        min_eigenvalues,
        extrapolated_limit: limit,
        extrapolation_residual,
        rho0_description: describe_rho0(rho0),
        kernel_hessian_sum: k,
        limit_plus_hessian: sum,
        continuous_qfi: hc,
    })
}

/// Zeroth-order approximation of `H_c` near a rank-change base point:
/// `H_c(base) + Δ_ũ(base)`, restricted to the leading `n_estimation`
/// parameters. `ũ` points from the base towards the target in the extended
/// parameter space.
pub fn directional_taylor_zeroth(
    bundle_at_base: &DerivativeBundle,
    u_tilde: &DirectionVector,
    n_estimation: usize,
) -> Result<MetricMatrix> {
    let n = bundle_at_base.n_params();
    if n_estimation == 0 || n_estimation > n {
        return Err(Error::InvalidArgument(format!(
            "estimation block {n_estimation} must lie in 1..={n}"
        )));
    }
    let hc = continuous_qfi(bundle_at_base)?;
    let report = jump(bundle_at_base, u_tilde)?;
    let full = &hc.values + &report.delta.values;
    Ok(MetricMatrix::new(
        full.view((0, 0), (n_estimation, n_estimation)).into_owned(),
        MetricRole::ContinuousQfiHc,
        bundle_at_base.point.clone(),
    ))
}

/// Curvature of one branch recovered by following the eigenvalue itself.
#[derive(Debug, Clone, Serialize)]
pub struct TrackedCurvature {
    pub branch_index: usize,
    /// `uᵀ H_k u` from the perturbative formula.
    pub perturbative: f64,
    /// Second-order coefficient of the tracked eigenvalue, times two.
    pub tracked: f64,
    pub extrapolation_residual: f64,
}

impl TrackedCurvature {
    pub fn discrepancy(&self) -> f64 {
        (self.perturbative - self.tracked).abs()
    }
}

fn tracking_steps() -> Vec<f64> {
    (0..4).map(|k| 1e-2 / 2f64.powi(k)).collect()
}

/// Eigenvalue following `branch` at `p + h u`, matched by maximal overlap.
fn tracked_eigenvalue(
    fam: &dyn StateFamily,
    p: &ParameterPoint,
    u: &[f64],
    h: f64,
    branches: &[BranchHessian],
) -> Result<Vec<f64>> {
    let rho = evaluate_raw(fam, p.shifted(u, h).coords())?;
    let spec: EigenDecomposition = eigh(&rho, 0.0)?;
    let mut taken = vec![false; spec.dim()];
    let mut out = Vec::with_capacity(branches.len());
    for b in branches {
        let v = nalgebra::DVector::from_column_slice(&b.kernel_vector);
        let (best, overlap) = (0..spec.dim())
            .filter(|&k| !taken[k])
            .map(|k| (k, spec.eigenvectors.column(k).dotc(&v).norm_sqr()))
            .fold(
                (usize::MAX, -1.0),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            );
        if best == usize::MAX || overlap < 0.5 {
            return Err(Error::InvariantViolation(format!(
                "branch {} lost at step {h} (overlap {overlap})",
                b.branch_index
            )));
        }
        taken[best] = true;
        out.push(spec.eigenvalues[best]);
    }
    Ok(out)
}

/// Independent check of `uᵀ H_k u`: follows each vanishing eigenvalue along
/// `p + h u` by eigenvector overlap and extracts its second-order coefficient.
///
/// With both `±h` in the domain, `(λ(h) + λ(−h))/h²` is extrapolated in
/// `h²`; otherwise `4(λ(h) − 2λ(h/2))/h²` is extrapolated in `h`. Both forms
/// cancel a first-order slope.
pub fn track_branch_curvatures(
    fam: &dyn StateFamily,
    p: &ParameterPoint,
    u: &DirectionVector,
    fd: &FiniteDifferenceConfig,
) -> Result<Vec<TrackedCurvature>> {
    let bundle = evaluate_bundle(fam, p, fd, DEFAULT_TOL_ZERO)?;
    let branches = vanishing_branch_hessians(&bundle, Some(u))?;
    if branches.is_empty() {
        return Ok(Vec::new());
    }
    let steps = tracking_steps();
    let domain = fam.domain();
    let uc = u.coords();
    let symmetric = steps.iter().all(|&h| {
        domain.contains(p.shifted(uc, -h).coords()) && domain.contains(p.shifted(uc, h).coords())
    });

    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(steps.len()); branches.len()];
    let abscissa: Vec<f64> = if symmetric {
        for &h in &steps {
            let plus = tracked_eigenvalue(fam, p, uc, h, &branches)?;
            let minus = tracked_eigenvalue(fam, p, uc, -h, &branches)?;
            for (s, (a, b)) in series.iter_mut().zip(plus.iter().zip(&minus)) {
                s.push((a + b) / (h * h));
            }
        }
        steps.iter().map(|h| h * h).collect()
    } else {
        for &h in &steps {
            let full = tracked_eigenvalue(fam, p, uc, h, &branches)?;
            let half = tracked_eigenvalue(fam, p, uc, h / 2.0, &branches)?;
            for (s, (a, b)) in series.iter_mut().zip(full.iter().zip(&half)) {
                s.push(4.0 * (a - 2.0 * b) / (h * h));
            }
        }
        steps.clone()
    };

    branches
        .iter()
        .zip(series)
        .map(|(b, y)| {
            let e = extrapolate_to_zero(&abscissa, &y)?;
            Ok(TrackedCurvature {
                branch_index: b.branch_index,
                perturbative: b.curvature(uc),
                tracked: e.value,
                extrapolation_residual: e.residual(),
            })
        })
        .collect()
}
