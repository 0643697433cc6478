use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use qfi_core::families::GramFamily;
use qfi_core::hermitian::{c, frobenius, identity, kernel_projector, psd_sqrt, trace};
use qfi_core::{
    builtin_family, bures_distance_sq, continuous_qfi, eigh, evaluate_bundle, kernel_hessian_sum,
    kernel_hessian_sum_direct, qfi_from_sld, qfi_spectral, sld, truncated_metric, uhlmann_fidelity,
    CMatrix, DensityMatrix, DerivativeBundle, Family, FiniteDifferenceConfig, ParameterPoint,
    StateFamily, DEFAULT_TOL_ZERO,
};

fn complex_matrix(dim: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| {
        let k = 2 * (i * dim + j);
        c(entries[k], entries[k + 1])
    })
}

fn hermitian(dim: usize, entries: &[f64]) -> CMatrix {
    let m = complex_matrix(dim, entries);
    (&m + m.adjoint()) * c(0.5, 0.0)
}

/// `B B† / tr`, optionally with the last `kernel` columns of `B` removed.
fn density(dim: usize, kernel: usize, entries: &[f64]) -> DensityMatrix {
    let mut b = complex_matrix(dim, entries);
    for col in dim - kernel..dim {
        b.column_mut(col).fill(c(0.0, 0.0));
    }
    let g = &b * b.adjoint();
    let t = trace(&g).re;
    DensityMatrix::new(g * c(1.0 / t, 0.0)).unwrap()
}

fn matrix_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1usize..=6).prop_flat_map(|dim| {
        (
            Just(dim),
            prop::collection::vec(-1.0f64..1.0, 2 * dim * dim),
        )
    })
}

fn random_bundle(
    dim: usize,
    kernel: usize,
    seed: u64,
    n: usize,
    origin: bool,
) -> (Family, DerivativeBundle) {
    let fam: Family = if kernel == 0 {
        Arc::new(GramFamily::random_full_rank(dim, seed, n).unwrap())
    } else {
        Arc::new(GramFamily::random_rank_deficient(dim, kernel, seed, n).unwrap())
    };
    let p = if origin {
        vec![0.0; n]
    } else {
        (0..n).map(|i| 0.05 * (i as f64 + 1.0)).collect()
    };
    let b = evaluate_bundle(
        fam.as_ref(),
        &ParameterPoint::new(p).unwrap(),
        &FiniteDifferenceConfig::default(),
        DEFAULT_TOL_ZERO,
    )
    .unwrap();
    (fam, b)
}

fn bundle_strategy() -> impl Strategy<Value = (usize, usize, u64, usize, bool)> {
    (2usize..=5, any::<u64>(), 1usize..=3, any::<bool>()).prop_flat_map(|(dim, seed, n, origin)| {
        (Just(dim), 0..dim, Just(seed), Just(n), Just(origin))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigh_reconstructs((dim, entries) in matrix_strategy()) {
        let m = hermitian(dim, &entries);
        let spec = eigh(&m, 0.0).unwrap();
        let err = frobenius(&(spec.reconstruct() - &m)) / (dim as f64);
        prop_assert!(err < 1e-10);
        let v = &spec.eigenvectors;
        prop_assert!(frobenius(&(v.adjoint() * v - identity(dim))) < 1e-10);
        prop_assert!(spec.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let again = eigh(&m, 0.0).unwrap();
        prop_assert_eq!(spec.eigenvalues, again.eigenvalues);
    }

    #[test]
    fn psd_sqrt_squares_back((dim, entries) in matrix_strategy()) {
        let b = complex_matrix(dim, &entries);
        let a = b.adjoint() * &b;
        let r = psd_sqrt(&a, DEFAULT_TOL_ZERO).unwrap();
        prop_assert!(frobenius(&(&r * &r - &a)) < 1e-9);
    }

    #[test]
    fn kernel_projector_is_idempotent((dim, entries) in matrix_strategy(), kernel in 0usize..6) {
        let kernel = kernel.min(dim - 1);
        let rho = density(dim, kernel, &entries);
        let spec = rho.spectrum(DEFAULT_TOL_ZERO).unwrap();
        let p = kernel_projector(&spec);
        prop_assert!(frobenius(&(&p * &p - &p)) < 1e-10);
        prop_assert!((trace(&p).re - spec.zero_set.len() as f64).abs() < 1e-10);
        prop_assert_eq!(spec.zero_set.len() + spec.positive_set.len(), dim);
    }

    #[test]
    fn fidelity_axioms(
        (dim, a) in matrix_strategy(),
        b in prop::collection::vec(-1.0f64..1.0, 72),
        ka in 0usize..6,
        kb in 0usize..6,
    ) {
        let ra = density(dim, ka.min(dim - 1), &a);
        let rb = density(dim, kb.min(dim - 1), &b[..2 * dim * dim]);
        let fab = uhlmann_fidelity(&ra, &rb).unwrap();
        let fba = uhlmann_fidelity(&rb, &ra).unwrap();
        prop_assert!((fab - fba).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&fab));
        prop_assert!((uhlmann_fidelity(&ra, &ra).unwrap() - 1.0).abs() < 1e-9);
        prop_assert!(bures_distance_sq(&ra, &ra).unwrap().abs() < 1e-9);
        let d = bures_distance_sq(&ra, &rb).unwrap();
        prop_assert!((0.0..=2.0).contains(&d));
    }

    #[test]
    fn metric_identities((dim, kernel, seed, n, origin) in bundle_strategy()) {
        let (_, b) = random_bundle(dim, kernel, seed, n, origin);
        let h = qfi_spectral(&b);
        let hc = continuous_qfi(&b).unwrap();
        let via_sld = qfi_from_sld(&b, &sld(&b)).unwrap();
        prop_assert!(via_sld.max_abs_diff(&h.values) < 1e-8);
        prop_assert!(sld(&b).residual(&b) < 1e-8);

        let diff = &hc.values - &h.values;
        prop_assert!(qfi_core::hermitian::min_eigenvalue_real(&diff) >= -1e-8);
        prop_assert!(h.is_psd(1e-8) && hc.is_psd(1e-8));

        let k1 = kernel_hessian_sum(&b).unwrap();
        let k2 = kernel_hessian_sum_direct(&b).unwrap();
        prop_assert!(k1.max_abs_diff(&k2.values) < 1e-7);
        prop_assert!(k1.is_psd(1e-8));
        prop_assert_eq!(diff.abs().max() <= 1e-8, k2.is_zero(1e-8));

        let g = truncated_metric(&b);
        prop_assert!(qfi_core::hermitian::min_eigenvalue_real(&(&h.values - &g.values)) >= -1e-8);
        if b.spectrum.is_full_rank() {
            prop_assert!(hc.max_abs_diff(&h.values) < 1e-9);
            prop_assert!(g.max_abs_diff(&h.values) < 1e-9);
            prop_assert!(k1.is_zero(0.0));
        }
        prop_assert!(b.max_kernel_slope < 1e-6);
    }
}

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
    fn density(&self, p: &[f64]) -> qfi_core::Result<CMatrix> {
        self.0.density(p)
    }
}

#[test]
fn finite_differences_agree_with_closed_forms() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let fd = FiniteDifferenceConfig::default();
    let names = [
        "example1",
        "example2",
        "example3-regularized",
        "example3-sqrt-nu",
        "pure-qubit-rotation",
        "random-full-rank(3,11)",
        "random-rank-deficient(4,2,5)",
    ];
    for name in names {
        let fam = builtin_family(name).unwrap();
        let bounds = fam.domain().bounds;
        for _ in 0..20 {
            // Interior points, away from the boundary by more than the stencil.
            let p: Vec<f64> = bounds
                .iter()
                .map(|&(lo, hi)| {
                    let (lo, hi) = (lo.max(-1.0) + 0.01, hi.min(1.0) - 0.01);
                    rng.random_range(lo..hi)
                })
                .collect();
            let p = ParameterPoint::new(p).unwrap();
            let exact = evaluate_bundle(fam.as_ref(), &p, &fd, DEFAULT_TOL_ZERO).unwrap();
            let approx =
                evaluate_bundle(&DensityOnly(fam.clone()), &p, &fd, DEFAULT_TOL_ZERO).unwrap();
            let n = fam.n_params();
            for i in 0..n {
                let e = (&exact.d1[i] - &approx.d1[i])
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                assert!(e < 1e-6, "{name} ∂_{i}ρ at {p:?}: {e:e}");
                for j in 0..n {
                    let a = &exact.second().unwrap()[i][j];
                    let b = &approx.second().unwrap()[i][j];
                    let e = (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max);
                    assert!(e < 1e-6, "{name} ∂_{i}{j}ρ at {p:?}: {e:e}");
                }
            }
        }
    }
}

#[test]
fn random_full_rank_is_bit_reproducible() {
    let a = builtin_family("random-full-rank(5,77)").unwrap();
    let b = builtin_family("random-full-rank(5,77)").unwrap();
    for p in [[0.0, 0.0], [0.3, -0.2], [-0.9, 0.4]] {
        assert_eq!(a.density(&p).unwrap(), b.density(&p).unwrap());
        assert_eq!(
            a.second_derivatives(&p).unwrap().unwrap(),
            b.second_derivatives(&p).unwrap().unwrap()
        );
    }
}

#[test]
fn metric_matrices_are_symmetric() {
    let (_, b) = random_bundle(4, 1, 3, 3, true);
    for m in [
        qfi_spectral(&b).values,
        continuous_qfi(&b).unwrap().values,
        truncated_metric(&b).values,
    ] {
        let asym: DMatrix<f64> = &m - m.transpose();
        assert!(asym.abs().max() < 1e-9);
    }
}
