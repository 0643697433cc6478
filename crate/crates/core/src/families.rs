//! Builtin density-matrix families.
//!
//! Every builtin except the tabulated family carries closed-form first and
//! second derivatives.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::family::{reparametrize_as, CoordinateMap, Domain, Family, Smoothness, StateFamily};
use crate::hermitian::{c, diag, identity, trace, CMatrix, DensityMatrix};

use std::f64::consts::PI;

/// `sin²ε |0><0| + cos²ε |1><1|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PurityFamily;

impl StateFamily for PurityFamily {
    fn name(&self) -> String {
        "example1".into()
    }
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        Domain::boxed(vec![(0.0, PI)])
    }
    fn density(&self, p: &[f64]) -> Result<CMatrix> {
        let (s, co) = p[0].sin_cos();
        Ok(diag(&[s * s, co * co]))
    }
    fn first_derivatives(&self, p: &[f64]) -> Option<Result<Vec<CMatrix>>> {
        let s2 = (2.0 * p[0]).sin();
        Some(Ok(vec![diag(&[s2, -s2])]))
    }
    fn second_derivatives(&self, p: &[f64]) -> Option<Result<Vec<Vec<CMatrix>>>> {
        let c2 = 2.0 * (2.0 * p[0]).cos();
        Some(Ok(vec![vec![diag(&[c2, -c2])]]))
    }
}

/// `½(sin²ε₁ + sin²ε₂)|0><0| + ½cos²ε₁|1><1| + ½cos²ε₂|2><2|`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoParameterFamily;

impl StateFamily for TwoParameterFamily {
    fn name(&self) -> String {
        "example2".into()
    }
    fn dim(&self) -> usize {
        3
    }
    fn n_params(&self) -> usize {
        2
    }
    fn domain(&self) -> Domain {
        Domain::boxed(vec![(-1.0, 1.0), (-1.0, 1.0)])
    }
    fn density(&self, p: &[f64]) -> Result<CMatrix> {
        let (s1, c1) = p[0].sin_cos();
        let (s2, c2) = p[1].sin_cos();
        Ok(diag(&[
            0.5 * (s1 * s1 + s2 * s2),
            0.5 * c1 * c1,
            0.5 * c2 * c2,
        ]))
    }
    fn first_derivatives(&self, p: &[f64]) -> Option<Result<Vec<CMatrix>>> {
        let a = 0.5 * (2.0 * p[0]).sin();
        let b = 0.5 * (2.0 * p[1]).sin();
        Some(Ok(vec![diag(&[a, -a, 0.0]), diag(&[b, 0.0, -b])]))
    }
    fn second_derivatives(&self, p: &[f64]) -> Option<Result<Vec<Vec<CMatrix>>>> {
        let a = (2.0 * p[0]).cos();
        let b = (2.0 * p[1]).cos();
        let zero = diag(&[0.0; 3]);
        Some(Ok(vec![
            vec![diag(&[a, -a, 0.0]), zero.clone()],
            vec![zero, diag(&[b, 0.0, -b])],
        ]))
    }
}

/// The purity family mixed with white noise, parameters `(ε, ν)`:
/// `(1−ν)(sin²ε|0><0| + cos²ε|1><1|) + ν I/2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoisyPurityFamily;

impl StateFamily for NoisyPurityFamily {
    fn name(&self) -> String {
        "example3-regularized".into()
    }
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        2
    }
    fn domain(&self) -> Domain {
        Domain::boxed(vec![(0.0, PI), (0.0, 1.0)])
    }
    fn density(&self, p: &[f64]) -> Result<CMatrix> {
        let (s, co) = p[0].sin_cos();
        let nu = p[1];
        Ok(diag(&[
            (1.0 - nu) * s * s + 0.5 * nu,
            (1.0 - nu) * co * co + 0.5 * nu,
        ]))
    }
    fn first_derivatives(&self, p: &[f64]) -> Option<Result<Vec<CMatrix>>> {
        let (s, co) = p[0].sin_cos();
        let nu = p[1];
        let s2 = (2.0 * p[0]).sin();
        Some(Ok(vec![
            diag(&[(1.0 - nu) * s2, -(1.0 - nu) * s2]),
            diag(&[0.5 - s * s, 0.5 - co * co]),
        ]))
    }
    fn second_derivatives(&self, p: &[f64]) -> Option<Result<Vec<Vec<CMatrix>>>> {
        let nu = p[1];
        let c2 = 2.0 * (2.0 * p[0]).cos();
        let s2 = (2.0 * p[0]).sin();
        let cross = diag(&[-s2, s2]);
        Some(Ok(vec![
            vec![diag(&[(1.0 - nu) * c2, -(1.0 - nu) * c2]), cross.clone()],
            vec![cross, diag(&[0.0, 0.0])],
        ]))
    }
}

/// `ε⁴sin²(1/ε)|0><0| + (1 − ε⁴sin²(1/ε))|1><1|`, and `|1><1|` at `ε = 0`.
/// Twice differentiable everywhere, second derivative discontinuous at 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct OscillatingFamily;

impl OscillatingFamily {
    /// `(p, p', p'')` for the small eigenvalue.
    pub fn small_eigenvalue(e: f64) -> (f64, f64, f64) {
        if e == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let (s, co) = (1.0 / e).sin_cos();
        let p = e.powi(4) * s * s;
        let dp = 4.0 * e.powi(3) * s * s - 2.0 * e * e * s * co;
        let ddp = 12.0 * e * e * s * s - 12.0 * e * s * co + 2.0 * (2.0 / e).cos();
        (p, dp, ddp)
    }
}

impl StateFamily for OscillatingFamily {
    fn name(&self) -> String {
        "fig2-pathological".into()
    }
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        Domain::boxed(vec![(-1.0, 1.0)])
    }
    fn smoothness(&self) -> Smoothness {
        Smoothness::C2Except(vec![vec![0.0]])
    }
    fn density(&self, p: &[f64]) -> Result<CMatrix> {
        let (q, _, _) = Self::small_eigenvalue(p[0]);
        Ok(diag(&[q, 1.0 - q]))
    }
    fn first_derivatives(&self, p: &[f64]) -> Option<Result<Vec<CMatrix>>> {
        let (_, dq, _) = Self::small_eigenvalue(p[0]);
        Some(Ok(vec![diag(&[dq, -dq])]))
    }
    fn second_derivatives(&self, p: &[f64]) -> Option<Result<Vec<Vec<CMatrix>>>> {
        let (_, _, ddq) = Self::small_eigenvalue(p[0]);
        Some(Ok(vec![vec![diag(&[ddq, -ddq])]]))
    }
}

/// Pure state `cos ε|0> + sin ε|1>`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QubitRotationFamily;

impl StateFamily for QubitRotationFamily {
    fn name(&self) -> String {
        "pure-qubit-rotation".into()
    }
    fn dim(&self) -> usize {
        2
    }
    fn n_params(&self) -> usize {
        1
    }
    fn density(&self, p: &[f64]) -> Result<CMatrix> {
        let (s, co) = p[0].sin_cos();
        Ok(real_matrix(&[[co * co, co * s], [co * s, s * s]]))
    }
    fn first_derivatives(&self, p: &[f64]) -> Option<Result<Vec<CMatrix>>> {
        let (s2, c2) = (2.0 * p[0]).sin_cos();
        Some(Ok(vec![real_matrix(&[[-s2, c2], [c2, s2]])]))
    }
    fn second_derivatives(&self, p: &[f64]) -> Option<Result<Vec<Vec<CMatrix>>>> {
        let (s2, c2) = (2.0 * p[0]).sin_cos();
        Some(Ok(vec![vec![real_matrix(&[
            [-2.0 * c2, -2.0 * s2],
            [-2.0 * s2, 2.0 * c2],
        ])]]))
    }
}

fn real_matrix(rows: &[[f64; 2]; 2]) -> CMatrix {
    CMatrix::from_fn(2, 2, |i, j| c(rows[i][j], 0.0))
}

/// The constant state `I/dim`.
#[derive(Debug, Clone)]
pub struct ConstantFamily {
    rho: DensityMatrix,
    n_params: usize,
}

impl ConstantFamily {
    pub fn new(rho: DensityMatrix, n_params: usize) -> Self {
        Self { rho, n_params }
    }

    pub fn maximally_mixed(dim: usize, n_params: usize) -> Self {
        Self::new(DensityMatrix::maximally_mixed(dim), n_params)
    }
}

impl StateFamily for ConstantFamily {
    fn name(&self) -> String {
        format!("maximally-mixed({})", self.rho.dim())
    }
    fn dim(&self) -> usize {
        self.rho.dim()
    }
    fn n_params(&self) -> usize {
        self.n_params
    }
    fn density(&self, _p: &[f64]) -> Result<CMatrix> {
        Ok(self.rho.matrix().clone())
    }
    fn first_derivatives(&self, _p: &[f64]) -> Option<Result<Vec<CMatrix>>> {
        let z = CMatrix::zeros(self.dim(), self.dim());
        Some(Ok(vec![z; self.n_params]))
    }
    fn second_derivatives(&self, _p: &[f64]) -> Option<Result<Vec<Vec<CMatrix>>>> {
        let z = CMatrix::zeros(self.dim(), self.dim());
        Some(Ok(vec![vec![z; self.n_params]; self.n_params]))
    }
}

/// `ρ(ε) = A(ε)A(ε)† / tr[A(ε)A(ε)†]` with `A(ε) = B + Σ_i ε_i A_i`.
///
/// The rank of `ρ(0)` equals the rank of `B`. Perturbing a rank-deficient
/// `B` generically restores full rank, so the origin becomes an isolated
/// rank-change point whose vanishing eigenvalues grow quadratically.
#[derive(Debug, Clone)]
pub struct GramFamily {
    name: String,
    base: CMatrix,
    slopes: Vec<CMatrix>,
}

impl GramFamily {
    pub fn new(name: impl Into<String>, base: CMatrix, slopes: Vec<CMatrix>) -> Result<Self> {
        let dim = base.nrows();
        if slopes.is_empty() || slopes.iter().any(|a| a.shape() != base.shape()) {
            return Err(Error::InvalidArgument(
                "Gram family needs matching generators".into(),
            ));
        }
        if base.ncols() == 0 || dim == 0 {
            return Err(Error::InvalidArgument("empty generator".into()));
        }
        Ok(Self {
            name: name.into(),
            base,
            slopes,
        })
    }

    /// Full-rank base: `B = G/√dim + I` with complex Gaussian `G`.
    pub fn random_full_rank(dim: usize, seed: u64, n_params: usize) -> Result<Self> {
        check_random_args(dim, n_params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = gaussian(dim, dim, &mut rng) * c(1.0 / (dim as f64).sqrt(), 0.0) + identity(dim);
        let slopes = (0..n_params)
            .map(|_| gaussian(dim, dim, &mut rng) * c(0.5 / (dim as f64).sqrt(), 0.0))
            .collect();
        Self::new(
            format!("random-full-rank({dim},{seed},{n_params})"),
            base,
            slopes,
        )
    }

    /// Base with a `kernel_dim`-dimensional kernel, so `ρ(0)` has exactly
    /// `kernel_dim` vanishing eigenvalues.
    pub fn random_rank_deficient(
        dim: usize,
        kernel_dim: usize,
        seed: u64,
        n_params: usize,
    ) -> Result<Self> {
        check_random_args(dim, n_params)?;
        if kernel_dim == 0 || kernel_dim >= dim {
            return Err(Error::InvalidArgument(format!(
                "kernel dimension must lie in 1..{dim}, got {kernel_dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let full = gaussian(dim, dim, &mut rng) * c(1.0 / (dim as f64).sqrt(), 0.0) + identity(dim);
        let q = gaussian(dim, kernel_dim, &mut rng).qr().q();
        let base = full * (identity(dim) - &q * q.adjoint());
        let slopes = (0..n_params)
            .map(|_| gaussian(dim, dim, &mut rng) * c(0.5 / (dim as f64).sqrt(), 0.0))
            .collect();
        Self::new(
            format!("random-rank-deficient({dim},{kernel_dim},{seed},{n_params})"),
            base,
            slopes,
        )
    }

    fn generator(&self, p: &[f64]) -> CMatrix {
        let mut a = self.base.clone();
        for (x, s) in p.iter().zip(&self.slopes) {
            a += s * c(*x, 0.0);
        }
        a
    }

    /// `(N, ∂N, ∂∂N)` for `N = A A†`.
    fn gram_parts(&self, p: &[f64]) -> (CMatrix, Vec<CMatrix>, Vec<Vec<CMatrix>>) {
        let a = self.generator(p);
        let n = self.slopes.len();
        let gram = &a * a.adjoint();
        let d1: Vec<CMatrix> = self
            .slopes
            .iter()
            .map(|s| s * a.adjoint() + &a * s.adjoint())
            .collect();
        let d2 = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        &self.slopes[i] * self.slopes[j].adjoint()
                            + &self.slopes[j] * self.slopes[i].adjoint()
                    })
                    .collect()
            })
            .collect();
        (gram, d1, d2)
    }
}

fn check_random_args(dim: usize, n_params: usize) -> Result<()> {
    if !(1..=64).contains(&dim) || n_params == 0 {
        return Err(Error::InvalidArgument(format!(
            "random family needs 1 <= dim <= 64 and n_params >= 1 (got {dim}, {n_params})"
        )));
    }
    Ok(())
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(re * scale, im * scale)
    })
}

impl StateFamily for GramFamily {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn dim(&self) -> usize {
        self.base.nrows()
    }
    fn n_params(&self) -> usize {
        self.slopes.len()
    }
    fn density(&self, p: &[f64]) -> Result<CMatrix> {
        let a = self.generator(p);
        let gram = &a * a.adjoint();
        let t = trace(&gram).re;
        if t <= 0.0 {
            return Err(Error::DomainError(format!(
                "{}: generator vanishes at {p:?}",
                self.name
            )));
        }
        Ok(gram * c(1.0 / t, 0.0))
    }
    fn first_derivatives(&self, p: &[f64]) -> Option<Result<Vec<CMatrix>>> {
        let (gram, d1, _) = self.gram_parts(p);
        let t = trace(&gram).re;
        Some(Ok(d1
            .iter()
            .map(|dn| {
                let ti = trace(dn).re;
                dn * c(1.0 / t, 0.0) - &gram * c(ti / (t * t), 0.0)
            })
            .collect()))
    }
    fn second_derivatives(&self, p: &[f64]) -> Option<Result<Vec<Vec<CMatrix>>>> {
        let (gram, d1, d2) = self.gram_parts(p);
        let n = d1.len();
        let t = trace(&gram).re;
        let tr1: Vec<f64> = d1.iter().map(|m| trace(m).re).collect();
        let mut out = vec![vec![CMatrix::zeros(0, 0); n]; n];
        for i in 0..n {
            for j in 0..n {
                let tij = trace(&d2[i][j]).re;
                out[i][j] = &d2[i][j] * c(1.0 / t, 0.0)
                    - (&d1[i] * c(tr1[j], 0.0) + &d1[j] * c(tr1[i], 0.0)) * c(1.0 / (t * t), 0.0)
                    - &gram * c(tij / (t * t), 0.0)
                    + &gram * c(2.0 * tr1[i] * tr1[j] / (t * t * t), 0.0);
            }
        }
        Some(Ok(out))
    }
}

/// One-parameter family given by density matrices on a uniform grid.
/// Derivatives come from second-order grid differences.
#[derive(Debug, Clone)]
pub struct TabulatedFamily {
    start: f64,
    step: f64,
    nodes: Vec<CMatrix>,
}

impl TabulatedFamily {
    pub fn new(start: f64, step: f64, nodes: Vec<CMatrix>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidArgument(
                "tabulated family needs at least 3 nodes".into(),
            ));
        }
        if step.is_nan() || step <= 0.0 || !start.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bad grid start {start} / step {step}"
            )));
        }
        let dim = nodes[0].nrows();
        for (m, rho) in nodes.iter().enumerate() {
            if rho.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(dim, rho.nrows()));
            }
            DensityMatrix::new(rho.clone())
                .map_err(|e| Error::InvalidArgument(format!("tabulated node {m}: {e}")))?;
        }
        Ok(Self { start, step, nodes })
    }

    fn node_index(&self, x: f64) -> Result<usize> {
        let pos = (x - self.start) / self.step;
        let m = pos.round();
        if (pos - m).abs() > 1e-9 || m < 0.0 || m as usize >= self.nodes.len() {
            return Err(Error::DomainError(format!("{x} is not a grid node")));
        }
        Ok(m as usize)
    }

    fn node(&self, m: usize) -> &CMatrix {
        &self.nodes[m]
    }
}

impl StateFamily for TabulatedFamily {
    fn name(&self) -> String {
        format!("tabulated({} nodes)", self.nodes.len())
    }
    fn dim(&self) -> usize {
        self.nodes[0].nrows()
    }
    fn n_params(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        let end = self.start + self.step * (self.nodes.len() - 1) as f64;
        Domain::boxed(vec![(self.start, end)])
    }
    fn density(&self, p: &[f64]) -> Result<CMatrix> {
        Ok(self.node(self.node_index(p[0])?).clone())
    }
    fn first_derivatives(&self, p: &[f64]) -> Option<Result<Vec<CMatrix>>> {
        Some(self.node_index(p[0]).map(|m| {
            let last = self.nodes.len() - 1;
            let h = self.step;
            let d = if m == 0 {
                (self.node(0) * c(-3.0, 0.0) + self.node(1) * c(4.0, 0.0) - self.node(2))
                    * c(0.5 / h, 0.0)
            } else if m == last {
                (self.node(last) * c(3.0, 0.0) - self.node(last - 1) * c(4.0, 0.0)
                    + self.node(last - 2))
                    * c(0.5 / h, 0.0)
            } else {
                (self.node(m + 1) - self.node(m - 1)) * c(0.5 / h, 0.0)
            };
            vec![d]
        }))
    }
    fn second_derivatives(&self, p: &[f64]) -> Option<Result<Vec<Vec<CMatrix>>>> {
        Some(self.node_index(p[0]).map(|m| {
            let last = self.nodes.len() - 1;
            let centre = m.clamp(1, last - 1);
            let h = self.step;
            let d = (self.node(centre + 1) - self.node(centre) * c(2.0, 0.0)
                + self.node(centre - 1))
                * c(1.0 / (h * h), 0.0);
            vec![vec![d]]
        }))
    }
    fn derivative_step(&self) -> Option<f64> {
        Some(self.step)
    }
}

/// Names accepted by [`builtin_family`], with a one-line description each.
pub const BUILTIN_FAMILIES: &[(&str, &str)] = &[
    ("example1", "sin²ε|0><0| + cos²ε|1><1|, ε ∈ [0, π]"),
    (
        "example2",
        "two-parameter qutrit, rank drop at (0,0), ε ∈ [-1, 1]²",
    ),
    (
        "example3-regularized",
        "(1−ν)·example1 + ν I/2, parameters (ε, ν) ∈ [0, π]×[0, 1]",
    ),
    (
        "example3-sqrt-nu",
        "example3-regularized with ν = ν₁², parameters (ε, ν₁) ∈ [0, π]×[-1, 1]",
    ),
    ("fig2-pathological", "ε⁴sin²(1/ε) family, non-C2 at ε = 0"),
    ("pure-qubit-rotation", "pure state cos ε|0> + sin ε|1>"),
    (
        "maximally-mixed(dim[,n])",
        "constant I/dim with n parameters (default 1)",
    ),
    (
        "random-full-rank(dim,seed[,n])",
        "seeded full-rank Gram family, n parameters (default 2)",
    ),
    (
        "random-rank-deficient(dim,kernel,seed[,n])",
        "seeded Gram family whose state at the origin has `kernel` zero eigenvalues",
    ),
];

/// `example3-regularized` with the mixing weight written as `ν = ν₁²`.
pub fn noisy_purity_sqrt_nu() -> Family {
    let map = CoordinateMap::square_axis(2, 1, Domain::boxed(vec![(0.0, PI), (-1.0, 1.0)]));
    reparametrize_as("example3-sqrt-nu", Arc::new(NoisyPurityFamily), map)
        .expect("matching parameter counts")
}

/// Looks up a builtin by name. Parameterized builtins use call syntax,
/// e.g. `random-full-rank(3,42)`.
pub fn builtin_family(spec: &str) -> Result<Family> {
    let spec = spec.trim();
    let (name, args) = match spec.find('(') {
        Some(open) => {
            let close = spec
                .strip_suffix(')')
                .ok_or_else(|| Error::UnknownFamily(spec.to_string()))?;
            let inner = &close[open + 1..];
            let args = inner
                .split(',')
                .map(|a| a.trim())
                .filter(|a| !a.is_empty())
                .map(|a| {
                    a.parse::<u64>()
                        .map_err(|_| Error::UnknownFamily(format!("{spec}: bad argument `{a}`")))
                })
                .collect::<Result<Vec<u64>>>()?;
            (spec[..open].trim(), args)
        }
        None => (spec, Vec::new()),
    };
    let arity = |lo: usize, hi: usize| -> Result<()> {
        if args.len() < lo || args.len() > hi {
            Err(Error::UnknownFamily(format!(
                "{spec}: expected {lo}..={hi} arguments"
            )))
        } else {
            Ok(())
        }
    };
    let fam: Family = match name {
        "example1" => {
            arity(0, 0)?;
            Arc::new(PurityFamily)
        }
        "example2" => {
            arity(0, 0)?;
            Arc::new(TwoParameterFamily)
        }
        "example3-regularized" => {
            arity(0, 0)?;
            Arc::new(NoisyPurityFamily)
        }
        "example3-sqrt-nu" => {
            arity(0, 0)?;
            noisy_purity_sqrt_nu()
        }
        "fig2-pathological" => {
            arity(0, 0)?;
            Arc::new(OscillatingFamily)
        }
        "pure-qubit-rotation" => {
            arity(0, 0)?;
            Arc::new(QubitRotationFamily)
        }
        "maximally-mixed" => {
            arity(1, 2)?;
            let dim = args[0] as usize;
            if dim == 0 {
                return Err(Error::InvalidArgument("dimension must be positive".into()));
            }
            Arc::new(ConstantFamily::maximally_mixed(
                dim,
                args.get(1).map_or(1, |&n| n as usize),
            ))
        }
        "random-full-rank" => {
            arity(2, 3)?;
            let n = args.get(2).map_or(2, |&n| n as usize);
            Arc::new(GramFamily::random_full_rank(args[0] as usize, args[1], n)?)
        }
        "random-rank-deficient" => {
            arity(3, 4)?;
            let n = args.get(3).map_or(2, |&n| n as usize);
            Arc::new(GramFamily::random_rank_deficient(
                args[0] as usize,
                args[1] as usize,
                args[2],
                n,
            )?)
        }
        _ => return Err(Error::UnknownFamily(spec.to_string())),
    };
    Ok(fam)
}
