//! Parameterized density-matrix families and their derivative bundles.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extrapolate::extrapolate_to_zero;
use crate::hermitian::{
    c, eigh, hermitian_part, hermiticity_residual, max_abs, trace, zeros, CMatrix, DensityMatrix,
    EigenDecomposition,
};

/// Estimation parameters `(ε_1, …, ε_n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ParameterPoint(Vec<f64>);

impl ParameterPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument(
                "parameter point has no coordinates".into(),
            ));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite coordinate in {coords:?}"
            )));
        }
        Ok(Self(coords))
    }

    pub fn scalar(x: f64) -> Self {
        Self(vec![x])
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

    /// `self + step * dir`.
    pub fn shifted(&self, dir: &[f64], step: f64) -> Self {
        Self(self.0.iter().zip(dir).map(|(x, d)| x + step * d).collect())
    }
}

impl From<&[f64]> for ParameterPoint {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

/// Closed box of admissible parameter values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Domain {
    pub bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn unbounded(n: usize) -> Self {
        Self {
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
        }
    }

    pub fn boxed(bounds: Vec<(f64, f64)>) -> Self {
        Self { bounds }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.bounds.len()
            && p.iter()
                .zip(&self.bounds)
                .all(|(x, (lo, hi))| x >= lo && x <= hi)
    }
}

/// Declared regularity of a family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Smoothness {
    C2,
    /// Twice differentiable, but the second derivative is discontinuous at these points.
    C2Except(Vec<Vec<f64>>),
}

impl Smoothness {
    pub fn is_singular_at(&self, p: &[f64]) -> bool {
        match self {
            Smoothness::C2 => false,
            Smoothness::C2Except(points) => points.iter().any(|q| {
                q.len() == p.len() && q.iter().zip(p).all(|(a, b)| (a - b).abs() <= 1e-12)
            }),
        }
    }
}

/// A map `ε ↦ ρ(ε)` with optional closed-form derivatives.
///
/// Implementations must be pure: identical inputs give identical outputs.
pub trait StateFamily: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn n_params(&self) -> usize;

    fn domain(&self) -> Domain {
        Domain::unbounded(self.n_params())
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::C2
    }

    /// Unvalidated `ρ(p)`. `p` has already been checked against the domain.
    fn density(&self, p: &[f64]) -> Result<CMatrix>;

    /// `∂_i ρ(p)` for every parameter, if known in closed form.
    fn first_derivatives(&self, _p: &[f64]) -> Option<Result<Vec<CMatrix>>> {
        None
    }

    /// `∂_ij ρ(p)` as an `n × n` table, if known in closed form.
    fn second_derivatives(&self, _p: &[f64]) -> Option<Result<Vec<Vec<CMatrix>>>> {
        None
    }

    /// Grid spacing when the "closed-form" derivatives are themselves
    /// finite differences (tabulated families).
    fn derivative_step(&self) -> Option<f64> {
        None
    }
}

pub type Family = Arc<dyn StateFamily>;

fn check_point(fam: &dyn StateFamily, p: &[f64]) -> Result<()> {
    if p.len() != fam.n_params() {
        return Err(Error::DimensionMismatch(fam.n_params(), p.len()));
    }
    if !fam.domain().contains(p) {
        return Err(Error::DomainError(format!("{} at {p:?}", fam.name())));
    }
    Ok(())
}

/// Raw `ρ(p)` after the domain check, without density-matrix validation.
pub fn evaluate_raw(fam: &dyn StateFamily, p: &[f64]) -> Result<CMatrix> {
    check_point(fam, p)?;
    fam.density(p)
}

/// Validated `ρ(p)`.
pub fn evaluate(fam: &dyn StateFamily, p: &[f64]) -> Result<DensityMatrix> {
    DensityMatrix::new(evaluate_raw(fam, p)?)
}

/// Central-difference settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteDifferenceConfig {
    /// Finest step. Coarser levels use `h·2^k` for derivatives; the metric
    /// oracle instead walks down `h, h/2, h/4, …`.
    pub h: f64,
    pub richardson_levels: usize,
}

impl Default for FiniteDifferenceConfig {
    fn default() -> Self {
        Self {
            h: 1e-4,
            richardson_levels: 2,
        }
    }
}

impl FiniteDifferenceConfig {
    /// Defaults for the fidelity-based metric oracle.
    pub fn metric_oracle() -> Self {
        Self {
            h: 1e-3,
            richardson_levels: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h < 1e-1) {
            return Err(Error::InvalidArgument(format!(
                "finite-difference step must lie in (0, 0.1), got {}",
                self.h
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    FiniteDifference { h: f64 },
}

const D1_HERMITIAN_TOL: f64 = 1e-8;
const D1_TRACE_TOL: f64 = 1e-8;
const D2_SYMMETRY_TOL: f64 = 1e-7;

static NEXT_BUNDLE_ID: AtomicU64 = AtomicU64::new(1);

/// `ρ`, `∂_iρ` and `∂_ijρ` at one parameter point, with the spectrum of `ρ`.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    id: u64,
    pub point: ParameterPoint,
    pub rho: DensityMatrix,
    pub d1: Vec<CMatrix>,
    pub d2: Option<Vec<Vec<CMatrix>>>,
    pub spectrum: EigenDecomposition,
    pub provenance: Provenance,
    /// The family declares this point non-C2.
    pub at_declared_singularity: bool,
    /// `max_{k ∈ kernel, i} |<k|∂_iρ|k>|`. Zero at interior minima of the
    /// vanishing eigenvalues; nonzero on domain boundaries such as `ν = 0`.
    pub max_kernel_slope: f64,
}

impl DerivativeBundle {
    /// Assembles a bundle, enforcing Hermiticity and tracelessness of the
    /// derivatives and symmetrizing `d2` in `(i, j)`.
    pub fn new(
        point: ParameterPoint,
        rho: DensityMatrix,
        d1: Vec<CMatrix>,
        d2: Option<Vec<Vec<CMatrix>>>,
        tol_zero: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        let n = point.len();
        let dim = rho.dim();
        if d1.len() != n {
            return Err(Error::DimensionMismatch(n, d1.len()));
        }
        let mut first = Vec::with_capacity(n);
        for (i, m) in d1.into_iter().enumerate() {
            check_derivative_shape(&m, dim)?;
            let herm = hermiticity_residual(&m);
            if herm > D1_HERMITIAN_TOL {
                return Err(Error::InvariantViolation(format!(
                    "∂_{i}ρ Hermiticity residual {herm:e}"
                )));
            }
            let tr = trace(&m).norm();
            if tr > D1_TRACE_TOL {
                return Err(Error::InvariantViolation(format!("tr ∂_{i}ρ = {tr:e}")));
            }
            first.push(hermitian_part(&m));
        }

        let second = match d2 {
            None => None,
            Some(table) => Some(symmetrize_second(table, n, dim)?),
        };

        let spectrum = rho.spectrum(tol_zero)?;
        let mut max_kernel_slope: f64 = 0.0;
        for &k in &spectrum.zero_set {
            let v = spectrum.eigenvectors.column(k);
            for m in &first {
                let slope = (v.adjoint() * m * v)[(0, 0)].norm();
                max_kernel_slope = max_kernel_slope.max(slope);
            }
        }

        Ok(Self {
            id: NEXT_BUNDLE_ID.fetch_add(1, Ordering::Relaxed),
            point,
            rho,
            d1: first,
            d2: second,
            spectrum,
            provenance,
            at_declared_singularity: false,
            max_kernel_slope,
        })
    }

    /// Identity used to pair derived objects (SLDs) with their bundle.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_params(&self) -> usize {
        self.point.len()
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn second(&self) -> Result<&Vec<Vec<CMatrix>>> {
        self.d2.as_ref().ok_or(Error::MissingSecondDerivatives)
    }

    /// `Σ_s u_s ∂_sρ`.
    pub fn directional_first(&self, u: &[f64]) -> CMatrix {
        let mut m = zeros(self.dim());
        for (ui, d) in u.iter().zip(&self.d1) {
            m += d * c(*ui, 0.0);
        }
        m
    }

    /// `Σ_st u_s u_t ∂_stρ`.
    pub fn directional_second(&self, u: &[f64]) -> Result<CMatrix> {
        let d2 = self.second()?;
        let mut m = zeros(self.dim());
        for (s, us) in u.iter().enumerate() {
            for (t, ut) in u.iter().enumerate() {
                m += &d2[s][t] * c(us * ut, 0.0);
            }
        }
        Ok(m)
    }
}

fn check_derivative_shape(m: &CMatrix, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch(dim, m.nrows()));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvariantViolation(
            "non-finite derivative entry".into(),
        ));
    }
    Ok(())
}

fn symmetrize_second(table: Vec<Vec<CMatrix>>, n: usize, dim: usize) -> Result<Vec<Vec<CMatrix>>> {
    if table.len() != n || table.iter().any(|row| row.len() != n) {
        return Err(Error::InvariantViolation(
            "second-derivative table is not n×n".into(),
        ));
    }
    for row in &table {
        for m in row {
            check_derivative_shape(m, dim)?;
        }
    }
    let mut out = vec![vec![zeros(dim); n]; n];
    for i in 0..n {
        for j in i..n {
            let asym = max_abs(&(&table[i][j] - &table[j][i]));
            let scale = max_abs(&table[i][j]).max(1.0);
            if asym > D2_SYMMETRY_TOL * scale {
                return Err(Error::InvariantViolation(format!(
                    "∂_{i}{j}ρ and ∂_{j}{i}ρ differ by {asym:e}"
                )));
            }
            let avg = hermitian_part(&((&table[i][j] + &table[j][i]) * c(0.5, 0.0)));
            let tr = trace(&avg).norm();
            if tr > D2_SYMMETRY_TOL * scale {
                return Err(Error::InvariantViolation(format!("tr ∂_{i}{j}ρ = {tr:e}")));
            }
            out[i][j] = avg.clone();
            out[j][i] = avg;
        }
    }
    Ok(out)
}

/// Evaluates `ρ`, its first and second derivatives and its spectrum at `p`.
///
/// Closed-form derivatives are used when the family supplies them; otherwise
/// central differences on steps `h, 2h, …, 2^L h` are Richardson-extrapolated
/// (the error series is even in the step).
pub fn evaluate_bundle(
    fam: &dyn StateFamily,
    p: &ParameterPoint,
    fd: &FiniteDifferenceConfig,
    tol_zero: f64,
) -> Result<DerivativeBundle> {
    fd.validate()?;
    let x = p.coords();
    check_point(fam, x)?;
    let rho = evaluate(fam, x)?;

    let mut used_fd = false;
    let d1 = match fam.first_derivatives(x) {
        Some(r) => r?,
        None => {
            used_fd = true;
            fd_first(fam, x, fd)?
        }
    };
    let d2 = match fam.second_derivatives(x) {
        Some(r) => r?,
        None => {
            used_fd = true;
            fd_second(fam, x, rho.matrix(), fd)?
        }
    };
    let provenance = match fam.derivative_step() {
        Some(h) => Provenance::FiniteDifference { h },
        None if used_fd => Provenance::FiniteDifference { h: fd.h },
        None => Provenance::Analytic,
    };
    let mut bundle = DerivativeBundle::new(p.clone(), rho, d1, Some(d2), tol_zero, provenance)?;
    bundle.at_declared_singularity = fam.smoothness().is_singular_at(x);
    Ok(bundle)
}

fn fd_steps(fd: &FiniteDifferenceConfig) -> Vec<f64> {
    (0..=fd.richardson_levels)
        .map(|k| fd.h * 2f64.powi(k as i32))
        .collect()
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

fn at(fam: &dyn StateFamily, x: &[f64], dir: &[f64], step: f64) -> Result<CMatrix> {
    let q: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + step * d).collect();
    evaluate_raw(fam, &q)
}

/// Elementwise Neville extrapolation of matrix samples in `step²`.
fn extrapolate_matrices(steps: &[f64], samples: &[CMatrix]) -> Result<CMatrix> {
    let x: Vec<f64> = steps.iter().map(|h| h * h).collect();
    let (rows, cols) = samples[0].shape();
    let mut out = CMatrix::zeros(rows, cols);
    for r in 0..rows {
        for col in 0..cols {
            let re: Vec<f64> = samples.iter().map(|m| m[(r, col)].re).collect();
            let im: Vec<f64> = samples.iter().map(|m| m[(r, col)].im).collect();
            out[(r, col)] = c(
                extrapolate_to_zero(&x, &re)?.value,
                extrapolate_to_zero(&x, &im)?.value,
            );
        }
    }
    Ok(out)
}

fn fd_first(fam: &dyn StateFamily, x: &[f64], fd: &FiniteDifferenceConfig) -> Result<Vec<CMatrix>> {
    let n = x.len();
    let steps = fd_steps(fd);
    (0..n)
        .map(|i| {
            let e = unit(n, i);
            let samples = steps
                .iter()
                .map(|&h| Ok((at(fam, x, &e, h)? - at(fam, x, &e, -h)?) * c(0.5 / h, 0.0)))
                .collect::<Result<Vec<_>>>()?;
            extrapolate_matrices(&steps, &samples)
        })
        .collect()
}

fn fd_second(
    fam: &dyn StateFamily,
    x: &[f64],
    rho: &CMatrix,
    fd: &FiniteDifferenceConfig,
) -> Result<Vec<Vec<CMatrix>>> {
    let n = x.len();
    let dim = rho.nrows();
    let steps = fd_steps(fd);
    let mut out = vec![vec![zeros(dim); n]; n];
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let ei = unit(n, i);
        let samples = steps
            .iter()
            .map(|&h| {
                let sum = at(fam, x, &ei, h)? + at(fam, x, &ei, -h)? - rho * c(2.0, 0.0);
                Ok(sum * c(1.0 / (h * h), 0.0))
            })
            .collect::<Result<Vec<_>>>()?;
        out[i][i] = extrapolate_matrices(&steps, &samples)?;
        for j in i + 1..n {
            let mut pp = unit(n, i);
            pp[j] = 1.0;
            let mut pm = unit(n, i);
            pm[j] = -1.0;
            let samples = steps
                .iter()
                .map(|&h| {
                    let cross = at(fam, x, &pp, h)? + at(fam, x, &pp, -h)?
                        - at(fam, x, &pm, h)?
                        - at(fam, x, &pm, -h)?;
                    Ok(cross * c(1.0 / (4.0 * h * h), 0.0))
                })
                .collect::<Result<Vec<_>>>()?;
            let m = extrapolate_matrices(&steps, &samples)?;
            out[i][j] = m.clone();
            out[j][i] = m;
        }
    }
    Ok(out)
}

type PointFn<T> = Arc<dyn Fn(&[f64]) -> T + Send + Sync>;

/// A smooth coordinate change `x ↦ y = φ(x)` with closed-form Jacobian
/// `J[a][b] = ∂φ_a/∂x_b` and Hessians `T[a][(b, c)] = ∂²φ_a/∂x_b∂x_c`.
#[derive(Clone)]
pub struct CoordinateMap {
    pub name: String,
    pub n_in: usize,
    pub n_out: usize,
    pub domain: Domain,
    map: PointFn<Vec<f64>>,
    jacobian: PointFn<DMatrix<f64>>,
    hessians: PointFn<Vec<DMatrix<f64>>>,
}

impl fmt::Debug for CoordinateMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoordinateMap")
            .field("name", &self.name)
            .field("n_in", &self.n_in)
            .field("n_out", &self.n_out)
            .finish()
    }
}

impl CoordinateMap {
    pub fn new(
        name: impl Into<String>,
        n_in: usize,
        n_out: usize,
        domain: Domain,
        map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        hessians: impl Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            n_in,
            n_out,
            domain,
            map: Arc::new(map),
            jacobian: Arc::new(jacobian),
            hessians: Arc::new(hessians),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::linear(DMatrix::identity(n, n), vec![0.0; n])
    }

    /// `y = A x + b`.
    pub fn linear(a: DMatrix<f64>, b: Vec<f64>) -> Self {
        let (n_out, n_in) = a.shape();
        let a_map = a.clone();
        let a_jac = a.clone();
        Self::new(
            "linear",
            n_in,
            n_out,
            Domain::unbounded(n_in),
            move |x| {
                let y = &a_map * nalgebra::DVector::from_column_slice(x);
                y.iter().zip(&b).map(|(v, o)| v + o).collect()
            },
            move |_| a_jac.clone(),
            move |_| vec![DMatrix::zeros(n_in, n_in); n_out],
        )
    }

    /// Replaces coordinate `axis` by its square, `y_axis = x_axis²`.
    pub fn square_axis(n: usize, axis: usize, domain: Domain) -> Self {
        Self::new(
            format!("square-axis-{axis}"),
            n,
            n,
            domain,
            move |x| {
                let mut y = x.to_vec();
                y[axis] = x[axis] * x[axis];
                y
            },
            move |x| {
                let mut j = DMatrix::identity(n, n);
                j[(axis, axis)] = 2.0 * x[axis];
                j
            },
            move |_| {
                let mut t = vec![DMatrix::zeros(n, n); n];
                t[axis][(axis, axis)] = 2.0;
                t
            },
        )
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (self.map)(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        (self.jacobian)(x)
    }

    pub fn hessians(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        (self.hessians)(x)
    }
}

/// `x ↦ ρ(φ(x))`.
#[derive(Debug)]
pub struct Reparametrized {
    inner: Family,
    map: CoordinateMap,
    name: String,
}

impl Reparametrized {
    fn inner_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.map.apply(x);
        if !self.inner.domain().contains(&y) {
            return Err(Error::DomainError(format!(
                "{} maps {x:?} to {y:?}, outside {}",
                self.map.name,
                self.inner.name()
            )));
        }
        Ok(y)
    }
}

impl StateFamily for Reparametrized {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn n_params(&self) -> usize {
        self.map.n_in
    }

    fn domain(&self) -> Domain {
        self.map.domain.clone()
    }

    fn smoothness(&self) -> Smoothness {
        match self.inner.smoothness() {
            Smoothness::C2 => Smoothness::C2,
            // Only singular points fixed by the map are carried over.
            Smoothness::C2Except(points) => Smoothness::C2Except(
                points
                    .into_iter()
                    .filter(|q| q.len() == self.map.n_in && self.map.apply(q) == *q)
                    .collect(),
            ),
        }
    }

    fn density(&self, x: &[f64]) -> Result<CMatrix> {
        let y = self.inner_point(x)?;
        self.inner.density(&y)
    }

    fn first_derivatives(&self, x: &[f64]) -> Option<Result<Vec<CMatrix>>> {
        let y = match self.inner_point(x) {
            Ok(y) => y,
            Err(e) => return Some(Err(e)),
        };
        let inner = self.inner.first_derivatives(&y)?;
        Some(inner.map(|dy| {
            let jac = self.map.jacobian(x);
            (0..self.map.n_in)
                .map(|b| {
                    let mut m = zeros(self.dim());
                    for (a, d) in dy.iter().enumerate() {
                        m += d * c(jac[(a, b)], 0.0);
                    }
                    m
                })
                .collect()
        }))
    }

    fn second_derivatives(&self, x: &[f64]) -> Option<Result<Vec<Vec<CMatrix>>>> {
        let y = match self.inner_point(x) {
            Ok(y) => y,
            Err(e) => return Some(Err(e)),
        };
        let d2y = self.inner.second_derivatives(&y)?;
        let d1y = self.inner.first_derivatives(&y)?;
        let (d1y, d2y) = match (d1y, d2y) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return Some(Err(e)),
        };
        let jac = self.map.jacobian(x);
        let hess = self.map.hessians(x);
        let n_in = self.map.n_in;
        let n_out = self.map.n_out;
        let mut out = vec![vec![zeros(self.dim()); n_in]; n_in];
        for b in 0..n_in {
            for cc in 0..n_in {
                let mut m = zeros(self.dim());
                for a in 0..n_out {
                    for d in 0..n_out {
                        let w = jac[(a, b)] * jac[(d, cc)];
                        if w != 0.0 {
                            m += &d2y[a][d] * c(w, 0.0);
                        }
                    }
                    let w = hess[a][(b, cc)];
                    if w != 0.0 {
                        m += &d1y[a] * c(w, 0.0);
                    }
                }
                out[b][cc] = m;
            }
        }
        Some(Ok(out))
    }

    fn derivative_step(&self) -> Option<f64> {
        self.inner.derivative_step()
    }
}

/// The family `x ↦ ρ(map(x))`, with chain-rule derivatives when the inner
/// family has closed-form ones.
pub fn reparametrize(fam: Family, map: CoordinateMap) -> Result<Family> {
    let name = format!("{}∘{}", fam.name(), map.name);
    reparametrize_as(name, fam, map)
}

/// [`reparametrize`] with an explicit family name.
pub fn reparametrize_as(
    name: impl Into<String>,
    fam: Family,
    map: CoordinateMap,
) -> Result<Family> {
    if map.n_out != fam.n_params() {
        return Err(Error::DimensionMismatch(fam.n_params(), map.n_out));
    }
    let name = name.into();
    Ok(Arc::new(Reparametrized {
        inner: fam,
        map,
        name,
    }))
}

/// Per-probe findings of [`validate_family`].
#[derive(Debug, Clone, Serialize)]
pub struct ProbeDiagnostic {
    pub point: Vec<f64>,
    pub rank: Option<usize>,
    pub hermiticity: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyDiagnostics {
    pub probes: Vec<ProbeDiagnostic>,
    pub max_hermiticity: f64,
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
    /// Number of probes that fail a density-matrix invariant.
    pub violations: usize,
}

impl FamilyDiagnostics {
    /// Probe points grouped by rank, ascending rank.
    pub fn rank_profile(&self) -> Vec<(usize, Vec<Vec<f64>>)> {
        let mut groups: std::collections::BTreeMap<usize, Vec<Vec<f64>>> = Default::default();
        for p in &self.probes {
            if let Some(r) = p.rank {
                groups.entry(r).or_default().push(p.point.clone());
            }
        }
        groups.into_iter().collect()
    }
}

/// Evaluates the family at every probe and reports density-matrix invariant
/// violations and the rank at each point. Never fails.
pub fn validate_family(
    fam: &dyn StateFamily,
    probes: &[ParameterPoint],
    tol_zero: f64,
) -> FamilyDiagnostics {
    let mut out = FamilyDiagnostics {
        probes: Vec::with_capacity(probes.len()),
        max_hermiticity: 0.0,
        max_trace_error: 0.0,
        min_eigenvalue: f64::INFINITY,
        violations: 0,
    };
    for p in probes {
        let x = p.coords();
        let mut diag = ProbeDiagnostic {
            point: x.to_vec(),
            rank: None,
            hermiticity: 0.0,
            trace_error: 0.0,
            min_eigenvalue: f64::NAN,
            error: None,
        };
        match evaluate_raw(fam, x) {
            Err(e) => diag.error = Some(e.to_string()),
            Ok(m) => {
                diag.hermiticity = hermiticity_residual(&m);
                let tr = trace(&m);
                diag.trace_error = (tr - c(1.0, 0.0)).norm();
                match eigh(&hermitian_part(&m), tol_zero) {
                    Ok(spec) => {
                        diag.min_eigenvalue = spec.min_eigenvalue();
                        diag.rank = Some(spec.rank());
                    }
                    Err(e) => diag.error = Some(e.to_string()),
                }
            }
        }
        let bad = diag.error.is_some()
            || diag.hermiticity > DensityMatrix::HERMITIAN_TOL
            || diag.trace_error > DensityMatrix::TRACE_TOL
            || diag.min_eigenvalue < -DensityMatrix::PSD_TOL;
        if bad {
            out.violations += 1;
        }
        out.max_hermiticity = out.max_hermiticity.max(diag.hermiticity);
        out.max_trace_error = out.max_trace_error.max(diag.trace_error);
        if diag.min_eigenvalue.is_finite() {
            out.min_eigenvalue = out.min_eigenvalue.min(diag.min_eigenvalue);
        }
        out.probes.push(diag);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{builtin_family, NoisyPurityFamily, PurityFamily};
    use crate::hermitian::{diag, frobenius, DEFAULT_TOL_ZERO};

    /// Hides closed-form derivatives so the finite-difference path is used.
    #[derive(Debug)]
    struct DensityOnly(Family);

    impl StateFamily for DensityOnly {
        fn name(&self) -> String {
            self.0.name()
        }
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn n_params(&self) -> usize {
            self.0.n_params()
        }
        fn density(&self, p: &[f64]) -> Result<CMatrix> {
            self.0.density(p)
        }
    }

    #[test]
    fn point_and_domain() {
        assert!(ParameterPoint::new(vec![]).is_err());
        assert!(ParameterPoint::new(vec![f64::NAN]).is_err());
        let p = ParameterPoint::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(p.shifted(&[1.0, -1.0], 0.5).coords(), &[1.5, 1.5]);
        let d = Domain::boxed(vec![(0.0, 1.0)]);
        assert!(d.contains(&[0.0]) && d.contains(&[1.0]) && !d.contains(&[1.1]));
        assert!(evaluate(&PurityFamily, &[4.0]).is_err());
        assert!(matches!(
            evaluate(&PurityFamily, &[0.1, 0.2]),
            Err(Error::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn finite_differences_match_closed_forms() {
        let fam = builtin_family("random-full-rank(3,5)").unwrap();
        let p = ParameterPoint::new(vec![0.1, -0.2]).unwrap();
        let fd = FiniteDifferenceConfig::default();
        let exact = evaluate_bundle(fam.as_ref(), &p, &fd, DEFAULT_TOL_ZERO).unwrap();
        let approx = evaluate_bundle(&DensityOnly(fam), &p, &fd, DEFAULT_TOL_ZERO).unwrap();
        assert_eq!(exact.provenance, Provenance::Analytic);
        assert_eq!(approx.provenance, Provenance::FiniteDifference { h: 1e-4 });
        for i in 0..2 {
            assert!(frobenius(&(&exact.d1[i] - &approx.d1[i])) < 1e-8);
            for j in 0..2 {
                let a = &exact.second().unwrap()[i][j];
                let b = &approx.second().unwrap()[i][j];
                assert!(frobenius(&(a - b)) < 1e-6);
            }
        }
    }

    #[test]
    fn bundle_rejects_bad_derivatives() {
        let rho = DensityMatrix::from_diagonal(&[0.5, 0.5]).unwrap();
        let p = ParameterPoint::scalar(0.0);
        let traceful = vec![diag(&[1.0, 0.0])];
        assert!(matches!(
            DerivativeBundle::new(
                p.clone(),
                rho.clone(),
                traceful,
                None,
                1e-10,
                Provenance::Analytic
            ),
            Err(Error::InvariantViolation(_))
        ));
        let skew = vec![CMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)],
        )];
        assert!(DerivativeBundle::new(p, rho, skew, None, 1e-10, Provenance::Analytic).is_err());
    }

    #[test]
    fn bundles_get_distinct_ids() {
        let fd = FiniteDifferenceConfig::default();
        let p = ParameterPoint::scalar(0.3);
        let a = evaluate_bundle(&PurityFamily, &p, &fd, DEFAULT_TOL_ZERO).unwrap();
        let b = evaluate_bundle(&PurityFamily, &p, &fd, DEFAULT_TOL_ZERO).unwrap();
        assert_ne!(a.id(), b.id());
    }

    #[test]
    fn kernel_slope_on_boundary() {
        let fd = FiniteDifferenceConfig::default();
        let b = evaluate_bundle(
            &NoisyPurityFamily,
            &ParameterPoint::new(vec![0.0, 0.0]).unwrap(),
            &fd,
            DEFAULT_TOL_ZERO,
        )
        .unwrap();
        assert!((b.max_kernel_slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reparametrized_chain_rule() {
        let map = CoordinateMap::square_axis(2, 1, Domain::unbounded(2));
        let fam = reparametrize(Arc::new(NoisyPurityFamily), map).unwrap();
        let p = ParameterPoint::new(vec![0.4, 0.3]).unwrap();
        let fd = FiniteDifferenceConfig::default();
        let exact = evaluate_bundle(fam.as_ref(), &p, &fd, DEFAULT_TOL_ZERO).unwrap();
        let approx = evaluate_bundle(&DensityOnly(fam), &p, &fd, DEFAULT_TOL_ZERO).unwrap();
        for i in 0..2 {
            assert!(frobenius(&(&exact.d1[i] - &approx.d1[i])) < 1e-8);
            for j in 0..2 {
                let a = &exact.second().unwrap()[i][j];
                let b = &approx.second().unwrap()[i][j];
                assert!(frobenius(&(a - b)) < 1e-6);
            }
        }
        assert!(reparametrize(Arc::new(PurityFamily), CoordinateMap::identity(2)).is_err());
    }

    #[test]
    fn validation_reports_rank_profile() {
        let probes: Vec<ParameterPoint> = [0.0, 0.5, std::f64::consts::FRAC_PI_2, 5.0]
            .iter()
            .map(|&x| ParameterPoint::scalar(x))
            .collect();
        let d = validate_family(&PurityFamily, &probes, DEFAULT_TOL_ZERO);
        assert_eq!(d.violations, 1);
        let profile = d.rank_profile();
        assert_eq!(profile[0].0, 1);
        assert_eq!(profile[0].1.len(), 2);
        assert_eq!(profile[1], (2, vec![vec![0.5]]));
    }
}
