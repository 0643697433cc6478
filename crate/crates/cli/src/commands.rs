//! One-shot subcommands: `jump`, `regularize` and `list-families`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use qfi_core::{
    builtin_family, continuous_qfi, evaluate_bundle, jump, jump_confirmed, qfi_spectral,
    regularization_limit, DensityMatrix, DirectionVector, Error, FiniteDifferenceConfig,
    ParameterPoint, BUILTIN_FAMILIES, DEFAULT_TOL_ZERO,
};
use serde_json::{json, Value};

use crate::output::round_json;
use crate::scenario::check_schedule;

/// Failure of a subcommand, split by exit status.
#[derive(Debug)]
pub enum CommandError {
    Validation(String),
    Numerical(String),
}

impl CommandError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CommandError::Validation(_) => 2,
            CommandError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CommandError::Validation(m) | CommandError::Numerical(m) => m,
        }
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::UnknownFamily(_)
            | Error::InvalidArgument(_)
            | Error::DomainError(_)
            | Error::DimensionMismatch(..)
            | Error::InvalidNu(_)
            | Error::Rho0NotFullRank(_)
            | Error::Rho0NotCoDiagonal(_)
            | Error::RefusedPathologicalPoint(_)
            | Error::DegenerateKernelNeedsDirection(_)
            | Error::InvalidDensityMatrix(_) => CommandError::Validation(msg),
            _ => CommandError::Numerical(msg),
        }
    }
}

/// Parses one coordinate. Besides plain numbers, multiples and fractions of
/// `pi` are accepted: `pi`, `-pi/2`, `3pi/4`, `0.5pi`.
pub fn parse_coord(s: &str) -> Result<f64, String> {
    let t = s.trim();
    if let Ok(x) = t.parse::<f64>() {
        return if x.is_finite() {
            Ok(x)
        } else {
            Err(format!("`{s}` is not finite"))
        };
    }
    let bad = || format!("cannot read `{s}` as a coordinate");
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a, b.trim().parse::<f64>().map_err(|_| bad())?),
        None => (t, 1.0),
    };
    let factor = num.trim().strip_suffix("pi").ok_or_else(bad)?.trim();
    let factor = match factor {
        "" | "+" => 1.0,
        "-" => -1.0,
        f => f.trim_end_matches('*').parse::<f64>().map_err(|_| bad())?,
    };
    if den == 0.0 {
        return Err(bad());
    }
    Ok(factor * PI / den)
}

pub fn parse_coords(items: &[String]) -> Result<Vec<f64>, CommandError> {
    items
        .iter()
        .map(|s| parse_coord(s))
        .collect::<Result<_, _>>()
        .map_err(CommandError::Validation)
}

fn rows(m: &DMatrix<f64>) -> Value {
    let r: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect();
    json!(r)
}

fn point(coords: Vec<f64>, n: usize) -> Result<ParameterPoint, CommandError> {
    if coords.len() != n {
        return Err(CommandError::Validation(format!(
            "--at: expected {n} coordinates, got {}",
            coords.len()
        )));
    }
    Ok(ParameterPoint::new(coords)?)
}

pub fn jump_cmd(
    family: &str,
    at: &[String],
    dir: &[String],
    confirm: bool,
) -> Result<Value, CommandError> {
    let fam = builtin_family(family)?;
    let p = point(parse_coords(at)?, fam.n_params())?;
    let raw = parse_coords(dir)?;
    if raw.len() != fam.n_params() {
        return Err(CommandError::Validation(format!(
            "--dir: expected {} components, got {}",
            fam.n_params(),
            raw.len()
        )));
    }
    let u = DirectionVector::normalized(&raw)?;
    let fd = FiniteDifferenceConfig::default();
    let bundle = evaluate_bundle(fam.as_ref(), &p, &fd, DEFAULT_TOL_ZERO)?;
    let report = if confirm {
        jump_confirmed(fam.as_ref(), &p, &u, &fd)?
    } else {
        jump(&bundle, &u)?
    };
    let branches = |b: &[qfi_core::discontinuity::BranchCurvature]| -> Value {
        b.iter()
            .map(|c| json!({"branch_index": c.branch_index, "curvature": c.curvature}))
            .collect()
    };
    Ok(round_json(json!({
        "family": fam.name(),
        "point": p.coords(),
        "direction": u.coords(),
        "rank": bundle.spectrum.positive_set.len(),
        "delta": rows(&report.delta.values),
        "qfi": rows(&qfi_spectral(&bundle).values),
        "continuous_qfi": rows(&continuous_qfi(&bundle)?.values),
        "contributing_branches": branches(&report.contributing_branches),
        "excluded_branches": branches(&report.excluded_branches),
        "numeric_confirmation": report.numeric_confirmation,
    })))
}

pub fn regularize_cmd(
    family: &str,
    at: &[String],
    schedule: &[String],
    rho0: Option<&[String]>,
) -> Result<Value, CommandError> {
    let fam = builtin_family(family)?;
    let p = point(parse_coords(at)?, fam.n_params())?;
    let schedule = parse_coords(schedule)?;
    check_schedule(&schedule).map_err(|e| CommandError::Validation(format!("--schedule: {e}")))?;
    let rho0 = match rho0 {
        None => DensityMatrix::maximally_mixed(fam.dim()),
        Some(d) => {
            let d = parse_coords(d)?;
            if d.len() != fam.dim() {
                return Err(CommandError::Validation(format!(
                    "--rho0: expected {} diagonal entries, got {}",
                    fam.dim(),
                    d.len()
                )));
            }
            DensityMatrix::from_diagonal(&d)?
        }
    };
    let t = regularization_limit(
        fam.clone(),
        &p,
        &rho0,
        &schedule,
        &FiniteDifferenceConfig::default(),
    )?;
    let qfi: Vec<Value> = t.qfi_values.iter().map(|m| rows(&m.values)).collect();
    Ok(round_json(json!({
        "family": fam.name(),
        "point": p.coords(),
        "rho0": t.rho0_description,
        "nu_schedule": t.nu_schedule,
        "qfi_values": qfi,
        "min_eigenvalues": t.min_eigenvalues,
        "extrapolated_limit": rows(&t.extrapolated_limit.values),
        "extrapolation_residual": t.extrapolation_residual,
        "kernel_hessian_sum": rows(&t.kernel_hessian_sum.values),
        "limit_plus_hessian": rows(&t.limit_plus_hessian.values),
        "continuous_qfi": rows(&t.continuous_qfi.values),
    })))
}

pub fn list_families() -> String {
    let width = BUILTIN_FAMILIES
        .iter()
        .map(|(n, _)| n.len())
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    for (name, what) in BUILTIN_FAMILIES {
        out.push_str(&format!("{name:<width$}  {what}\n"));
    }
    out
}
