use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use qfi_core::families::{OscillatingFamily, PurityFamily};
use qfi_core::family::validate_family;
use qfi_core::hermitian::{c, diag, frobenius, is_psd, kernel_projector, psd_sqrt};
use qfi_core::{
    builtin_family, continuous_qfi, eigh, evaluate, evaluate_bundle, kernel_hessian_sum,
    numeric_bures_metric, qfi_spectral, reparametrize, CMatrix, CoordinateMap, DensityMatrix,
    Error, FiniteDifferenceConfig, ParameterPoint, StateFamily, DEFAULT_TOL_ZERO,
};

fn bundle(fam: &dyn StateFamily, p: &[f64]) -> qfi_core::DerivativeBundle {
    evaluate_bundle(
        fam,
        &ParameterPoint::new(p.to_vec()).unwrap(),
        &FiniteDifferenceConfig::default(),
        DEFAULT_TOL_ZERO,
    )
    .unwrap()
}

#[test]
fn eigh_known_spectra() {
    let spec = eigh(&diag(&[0.5, 0.5]), DEFAULT_TOL_ZERO).unwrap();
    assert_eq!(spec.eigenvalues, vec![0.5, 0.5]);
    assert!(spec.zero_set.is_empty());

    let spec = eigh(&diag(&[0.0, 1.0]), 1e-12).unwrap();
    assert_eq!(spec.zero_set, vec![0]);
    assert_eq!(spec.positive_set, vec![1]);

    let skew = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    assert!(matches!(
        eigh(&skew, DEFAULT_TOL_ZERO),
        Err(Error::NotHermitian(_))
    ));
}

#[test]
fn sqrt_and_projector_examples() {
    assert!(frobenius(&(psd_sqrt(&diag(&[4.0, 9.0]), 0.0).unwrap() - diag(&[2.0, 3.0]))) < 1e-14);
    assert!(matches!(
        psd_sqrt(&diag(&[1.0, -1.0]), 1e-10),
        Err(Error::NotPsd(_))
    ));

    let rho = evaluate(&PurityFamily, &[0.0]).unwrap();
    let p0 = kernel_projector(&rho.spectrum(DEFAULT_TOL_ZERO).unwrap());
    assert!(frobenius(&(p0 - diag(&[1.0, 0.0]))) < 1e-15);

    assert!(is_psd(&diag(&[1.0, 2.0]), 0.0).unwrap());
    assert!(!is_psd(&diag(&[1.0, -1.0]), 0.0).unwrap());
}

#[test]
fn density_matrix_invariants() {
    assert!(DensityMatrix::from_diagonal(&[0.6, 0.3]).is_err());
    assert!(DensityMatrix::from_diagonal(&[1.2, -0.2]).is_err());
    assert!(DensityMatrix::from_diagonal(&[1.0, 0.0]).is_ok());
}

#[test]
fn family_examples() {
    let rho = evaluate(&PurityFamily, &[PI / 2.0]).unwrap();
    assert!(frobenius(&(rho.matrix() - diag(&[1.0, 0.0]))) < 1e-15);
    let fam = builtin_family("pure-qubit-rotation").unwrap();
    let rho = evaluate(fam.as_ref(), &[0.0]).unwrap();
    assert!(frobenius(&(rho.matrix() - diag(&[1.0, 0.0]))) < 1e-15);

    let b = bundle(&PurityFamily, &[PI / 4.0]);
    assert!(frobenius(&(&b.d1[0] - diag(&[1.0, -1.0]))) < 1e-15);

    let fam = builtin_family("maximally-mixed(2)").unwrap();
    let b = bundle(fam.as_ref(), &[0.4]);
    assert_eq!(frobenius(&b.d1[0]), 0.0);
    assert_eq!(frobenius(&b.second().unwrap()[0][0]), 0.0);

    let fam = builtin_family("example2").unwrap();
    let b = bundle(fam.as_ref(), &[0.0, 0.0]);
    // ∂_11 p_1 = <0|∂_11ρ|0> with p_1 the vanishing eigenvalue.
    assert!((b.second().unwrap()[0][0][(0, 0)].re - 1.0).abs() < 1e-15);
}

#[test]
fn reparametrization_examples() {
    let fam: qfi_core::Family = Arc::new(PurityFamily);
    let same = reparametrize(fam.clone(), CoordinateMap::identity(1)).unwrap();
    for x in [0.0, 0.3, 1.2] {
        assert_eq!(same.density(&[x]).unwrap(), fam.density(&[x]).unwrap());
    }

    let doubled = reparametrize(
        fam,
        CoordinateMap::linear(DMatrix::from_element(1, 1, 2.0), vec![0.0]),
    )
    .unwrap();
    let h = qfi_spectral(&bundle(doubled.as_ref(), &[0.2])).get(0, 0);
    assert!((h - 16.0).abs() < 1e-12);
    assert!(matches!(
        evaluate(doubled.as_ref(), &[2.0]),
        Err(Error::DomainError(_))
    ));
}

#[test]
fn validation_examples() {
    let probes: Vec<ParameterPoint> = (0..=100)
        .map(|k| ParameterPoint::scalar(PI * k as f64 / 100.0))
        .collect();
    let d = validate_family(&PurityFamily, &probes, DEFAULT_TOL_ZERO);
    assert_eq!(d.violations, 0);
    let profile = d.rank_profile();
    assert_eq!(profile.len(), 2);
    assert_eq!(profile[0].0, 1);
    assert_eq!(profile[0].1, vec![vec![0.0], vec![PI / 2.0], vec![PI]]);
    assert_eq!(profile[1].0, 2);

    let mixed = builtin_family("maximally-mixed(2)").unwrap();
    let d = validate_family(mixed.as_ref(), &probes[..5], DEFAULT_TOL_ZERO);
    assert!(d.rank_profile().iter().all(|(r, _)| *r == 2));

    #[derive(Debug)]
    struct Leaky;
    impl StateFamily for Leaky {
        fn name(&self) -> String {
            "leaky".into()
        }
        fn dim(&self) -> usize {
            2
        }
        fn n_params(&self) -> usize {
            1
        }
        fn density(&self, _p: &[f64]) -> qfi_core::Result<CMatrix> {
            Ok(diag(&[0.45, 0.45]))
        }
    }
    let d = validate_family(&Leaky, &probes[..3], DEFAULT_TOL_ZERO);
    assert_eq!(d.violations, 3);
    assert!((d.max_trace_error - 0.1).abs() < 1e-12);
}

#[test]
fn example1_gap_is_psd() {
    let b = bundle(&PurityFamily, &[0.0]);
    let gap = continuous_qfi(&b).unwrap().values - qfi_spectral(&b).values;
    assert!((gap[(0, 0)] - 4.0).abs() < 1e-12);
    assert!((kernel_hessian_sum(&b).unwrap().get(0, 0) - 2.0).abs() < 1e-12);
}

#[test]
fn oscillating_family_matches_caption_formula() {
    for e in [2.0 / PI, 0.3, -0.55] {
        let hc = continuous_qfi(&bundle(&OscillatingFamily, &[e]))
            .unwrap()
            .get(0, 0);
        let (s, co) = (1.0 / e).sin_cos();
        let expected = 4.0 * (2.0 * e * s - co).powi(2) / (1.0 - e.powi(4) * s * s);
        assert!((hc - expected).abs() < 1e-10, "ε = {e}: {hc} vs {expected}");
    }
    let at_point = 2.0 / PI;
    let hc = continuous_qfi(&bundle(&OscillatingFamily, &[at_point]))
        .unwrap()
        .get(0, 0);
    assert!((hc - 16.0 * at_point * at_point / (1.0 - at_point.powi(4))).abs() < 1e-10);
    assert!((hc - 7.7590).abs() < 1e-4);
    assert_eq!(
        continuous_qfi(&bundle(&OscillatingFamily, &[0.0]))
            .unwrap()
            .get(0, 0),
        0.0
    );
}

#[test]
fn oracle_examples() {
    let fd = FiniteDifferenceConfig::metric_oracle();
    for (name, p) in [
        ("example1", vec![0.0]),
        ("example1", vec![PI / 2.0]),
        ("example2", vec![0.0, 0.0]),
        ("example2", vec![0.3, -0.4]),
        ("random-full-rank(3,4)", vec![0.2, 0.1]),
    ] {
        let fam = builtin_family(name).unwrap();
        let p = ParameterPoint::new(p).unwrap();
        let numeric = numeric_bures_metric(fam.as_ref(), &p, &fd).unwrap();
        let hc = continuous_qfi(&bundle(fam.as_ref(), p.coords())).unwrap();
        assert!(hc.max_abs_diff(&numeric.values) < 1e-5, "{name} at {p:?}");
    }
}
