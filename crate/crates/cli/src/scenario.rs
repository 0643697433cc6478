//! Scenario files: one TOML document naming a family, the probe points and
//! the quantities to compute at each of them.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use qfi_core::families::TabulatedFamily;
use qfi_core::hermitian::c;
use qfi_core::{
    builtin_family, CMatrix, DensityMatrix, DirectionVector, Family, FiniteDifferenceConfig,
    ParameterPoint, DEFAULT_TOL_ZERO,
};
use serde::Deserialize;

pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug)]
pub enum ScenarioError {
    Io(String),
    Parse(String),
    Validation(String),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Io(m) => write!(f, "cannot read scenario: {m}"),
            ScenarioError::Parse(m) => write!(f, "scenario parse error: {m}"),
            ScenarioError::Validation(m) => write!(f, "invalid scenario: {m}"),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    family: FamilyFile,
    probe: ProbeFile,
    quantities: Vec<String>,
    jump: Option<JumpFile>,
    fidelity: Option<FidelityFile>,
    regularization: Option<RegularizationFile>,
    fd: Option<FdFile>,
    tolerances: Option<TolerancesFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyFile {
    builtin: Option<String>,
    args: Option<Vec<u64>>,
    tabulated: Option<TabulatedFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TabulatedFile {
    start: f64,
    step: f64,
    nodes: Vec<NodeFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    re: Vec<Vec<f64>>,
    im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeFile {
    base: Vec<f64>,
    #[serde(default)]
    axis: Vec<AxisFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisFile {
    index: usize,
    start: Option<f64>,
    stop: Option<f64>,
    count: Option<usize>,
    values: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JumpFile {
    direction: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FidelityFile {
    reference: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegularizationFile {
    schedule: Vec<f64>,
    rho0_diagonal: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FdFile {
    h: Option<f64>,
    richardson_levels: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TolerancesFile {
    zero: Option<f64>,
    crb: Option<f64>,
}

/// Quantities a scenario may request. Columns are emitted in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Quantity {
    H,
    Hc,
    Truncated,
    Sld,
    HessianSum,
    Jump,
    Crb,
    Fidelity,
    Regularization,
}

impl Quantity {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "H" => Quantity::H,
            "Hc" => Quantity::Hc,
            "truncated" => Quantity::Truncated,
            "sld" => Quantity::Sld,
            "hessian_sum" => Quantity::HessianSum,
            "jump" => Quantity::Jump,
            "crb" => Quantity::Crb,
            "fidelity" => Quantity::Fidelity,
            "regularization" => Quantity::Regularization,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Regularization {
    pub schedule: Vec<f64>,
    pub rho0: DensityMatrix,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub family: Family,
    pub points: Vec<ParameterPoint>,
    pub quantities: Vec<Quantity>,
    pub direction: Option<DirectionVector>,
    pub reference: Option<ParameterPoint>,
    pub regularization: Option<Regularization>,
    pub fd: FiniteDifferenceConfig,
    pub tol_zero: f64,
    pub tol_crb: f64,
}

impl Scenario {
    pub fn n_params(&self) -> usize {
        self.family.n_params()
    }
}

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    parse(&text, &stem)
}

pub fn parse(text: &str, default_name: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    resolve(file, default_name)
}

fn resolve(file: ScenarioFile, default_name: &str) -> Result<Scenario, ScenarioError> {
    let family = resolve_family(&file.family)?;
    let n = family.n_params();

    let mut quantities = Vec::new();
    for q in &file.quantities {
        let parsed =
            Quantity::parse(q).ok_or_else(|| invalid(format!("quantities: unknown `{q}`")))?;
        quantities.push(parsed);
    }
    if quantities.is_empty() {
        return Err(invalid("quantities: at least one is required"));
    }
    quantities.sort();
    quantities.dedup();

    let points = resolve_probe(&file.probe, n)?;

    let direction = match (&file.jump, quantities.contains(&Quantity::Jump)) {
        (Some(j), _) => {
            check_len("jump.direction", &j.direction, n)?;
            Some(
                DirectionVector::normalized(&j.direction)
                    .map_err(|e| invalid(format!("jump.direction: {e}")))?,
            )
        }
        (None, true) => return Err(invalid("quantity `jump` needs a [jump] direction")),
        (None, false) => None,
    };

    let reference = match (&file.fidelity, quantities.contains(&Quantity::Fidelity)) {
        (Some(f), _) => {
            check_len("fidelity.reference", &f.reference, n)?;
            Some(
                ParameterPoint::new(f.reference.clone())
                    .map_err(|e| invalid(format!("fidelity.reference: {e}")))?,
            )
        }
        (None, true) => Some(points[0].clone()),
        (None, false) => None,
    };

    let regularization = match (
        &file.regularization,
        quantities.contains(&Quantity::Regularization),
    ) {
        (Some(r), _) => Some(resolve_regularization(r, family.dim())?),
        (None, true) => {
            return Err(invalid(
                "quantity `regularization` needs a [regularization] schedule",
            ))
        }
        (None, false) => None,
    };

    let mut fd = FiniteDifferenceConfig::default();
    if let Some(f) = &file.fd {
        if let Some(h) = f.h {
            fd.h = h;
        }
        if let Some(l) = f.richardson_levels {
            fd.richardson_levels = l;
        }
    }
    fd.validate().map_err(|e| invalid(format!("fd: {e}")))?;
    if fd.richardson_levels == 0 {
        return Err(invalid("fd.richardson_levels must be at least 1"));
    }

    let tol = file.tolerances.as_ref();
    let tol_zero = tol.and_then(|t| t.zero).unwrap_or(DEFAULT_TOL_ZERO);
    let tol_crb = tol.and_then(|t| t.crb).unwrap_or(DEFAULT_TOL_ZERO);
    for (what, v) in [("tolerances.zero", tol_zero), ("tolerances.crb", tol_crb)] {
        if !(0.0..1.0).contains(&v) {
            return Err(invalid(format!("{what} must lie in [0, 1), got {v}")));
        }
    }

    Ok(Scenario {
        name: file.name.unwrap_or_else(|| default_name.to_string()),
        family,
        points,
        quantities,
        direction,
        reference,
        regularization,
        fd,
        tol_zero,
        tol_crb,
    })
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<(), ScenarioError> {
    if v.len() != n {
        return Err(invalid(format!(
            "{what}: expected {n} coordinates, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{what}: coordinates must be finite")));
    }
    Ok(())
}

fn resolve_family(f: &FamilyFile) -> Result<Family, ScenarioError> {
    match (&f.builtin, &f.tabulated) {
        (Some(name), None) => {
            let spec = match &f.args {
                Some(args) => {
                    let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                    format!("{name}({})", args.join(","))
                }
                None => name.clone(),
            };
            builtin_family(&spec).map_err(|e| invalid(format!("family: {e}")))
        }
        (None, Some(t)) => {
            if f.args.is_some() {
                return Err(invalid("family.args only applies to builtin families"));
            }
            let nodes = t
                .nodes
                .iter()
                .enumerate()
                .map(|(k, node)| node_matrix(k, node))
                .collect::<Result<Vec<_>, _>>()?;
            let fam = TabulatedFamily::new(t.start, t.step, nodes)
                .map_err(|e| invalid(format!("family.tabulated: {e}")))?;
            Ok(Arc::new(fam))
        }
        _ => Err(invalid(
            "family: give exactly one of `builtin` or `[family.tabulated]`",
        )),
    }
}

fn node_matrix(k: usize, node: &NodeFile) -> Result<CMatrix, ScenarioError> {
    let d = node.re.len();
    let square = |m: &Vec<Vec<f64>>| m.len() == d && m.iter().all(|r| r.len() == d);
    if d == 0 || !square(&node.re) || node.im.as_ref().is_some_and(|m| !square(m)) {
        return Err(invalid(format!(
            "family.tabulated.nodes[{k}]: not a square matrix"
        )));
    }
    Ok(CMatrix::from_fn(d, d, |i, j| {
        let im = node.im.as_ref().map_or(0.0, |m| m[i][j]);
        c(node.re[i][j], im)
    }))
}

fn resolve_probe(p: &ProbeFile, n: usize) -> Result<Vec<ParameterPoint>, ScenarioError> {
    check_len("probe.base", &p.base, n)?;
    let mut axes: Vec<(usize, Vec<f64>)> = Vec::new();
    for (a, axis) in p.axis.iter().enumerate() {
        let what = format!("probe.axis[{a}]");
        if axis.index >= n {
            return Err(invalid(format!(
                "{what}: index {} out of range for {n} parameters",
                axis.index
            )));
        }
        if axes.iter().any(|(i, _)| *i == axis.index) {
            return Err(invalid(format!(
                "{what}: parameter {} swept twice",
                axis.index
            )));
        }
        let values = match (axis.start, axis.stop, axis.count, &axis.values) {
            (Some(start), Some(stop), Some(count), None) => {
                if count < 2 {
                    return Err(invalid(format!("{what}: count must be at least 2")));
                }
                if !(start.is_finite() && stop.is_finite()) {
                    return Err(invalid(format!("{what}: bounds must be finite")));
                }
                linspace(start, stop, count)
            }
            (None, None, None, Some(v)) => {
                if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                    return Err(invalid(format!(
                        "{what}: values must be finite and non-empty"
                    )));
                }
                v.clone()
            }
            _ => {
                return Err(invalid(format!(
                    "{what}: give either start/stop/count or values"
                )))
            }
        };
        axes.push((axis.index, values));
    }
    let total = axes
        .iter()
        .try_fold(1usize, |acc, (_, v)| acc.checked_mul(v.len()))
        .filter(|&t| t <= MAX_GRID_POINTS)
        .ok_or_else(|| invalid(format!("probe: more than {MAX_GRID_POINTS} points")))?;

    // Row-major: the last axis varies fastest.
    let mut points = Vec::with_capacity(total);
    for flat in 0..total {
        let mut coords = p.base.clone();
        let mut rest = flat;
        for (index, values) in axes.iter().rev() {
            coords[*index] = values[rest % values.len()];
            rest /= values.len();
        }
        points.push(ParameterPoint::new(coords).map_err(|e| invalid(format!("probe: {e}")))?);
    }
    Ok(points)
}

/// `count` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    let last = (count - 1) as f64;
    (0..count)
        .map(|k| {
            if k == count - 1 {
                stop
            } else {
                start + (stop - start) * (k as f64 / last)
            }
        })
        .collect()
}

/// Checks a `ν` schedule: positive, strictly decreasing, last entry at least `1e-8`.
pub fn check_schedule(s: &[f64]) -> Result<(), String> {
    if s.is_empty() {
        return Err("schedule is empty".into());
    }
    if s.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err("schedule entries must lie in (0, 1)".into());
    }
    if s.windows(2).any(|w| w[1] >= w[0]) {
        return Err("schedule must be strictly decreasing".into());
    }
    if s[s.len() - 1] < 1e-8 {
        return Err("schedule must stop at or above 1e-8".into());
    }
    Ok(())
}

fn resolve_regularization(
    r: &RegularizationFile,
    dim: usize,
) -> Result<Regularization, ScenarioError> {
    check_schedule(&r.schedule).map_err(|e| invalid(format!("regularization: {e}")))?;
    let rho0 = match &r.rho0_diagonal {
        None => DensityMatrix::maximally_mixed(dim),
        Some(d) => {
            if d.len() != dim {
                return Err(invalid(format!(
                    "regularization.rho0_diagonal: expected {dim} entries, got {}",
                    d.len()
                )));
            }
            DensityMatrix::from_diagonal(d)
                .map_err(|e| invalid(format!("regularization.rho0_diagonal: {e}")))?
        }
    };
    Ok(Regularization {
        schedule: r.schedule.clone(),
        rho0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = r#"
name = "s"
quantities = ["Hc", "H", "H"]
[family]
builtin = "example1"
[probe]
base = [0.0]
[[probe.axis]]
index = 0
start = 0.0
stop = 1.0
count = 5
"#;

    fn err(text: &str) -> String {
        match parse(text, "t") {
            Err(e) => e.to_string(),
            Ok(_) => panic!("expected an error"),
        }
    }

    #[test]
    fn sweep_parses() {
        let s = parse(SWEEP, "t").unwrap();
        assert_eq!(s.name, "s");
        assert_eq!(s.quantities, vec![Quantity::H, Quantity::Hc]);
        let xs: Vec<f64> = s.points.iter().map(|p| p.coords()[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn grid_is_row_major() {
        let text = r#"
quantities = ["H"]
[family]
builtin = "example2"
[probe]
base = [0.5, 0.5]
[[probe.axis]]
index = 0
values = [1.0, 2.0]
[[probe.axis]]
index = 1
values = [3.0, 4.0, 5.0]
"#;
        let s = parse(text, "t").unwrap();
        let pts: Vec<Vec<f64>> = s.points.iter().map(|p| p.coords().to_vec()).collect();
        assert_eq!(pts[0], vec![1.0, 3.0]);
        assert_eq!(pts[1], vec![1.0, 4.0]);
        assert_eq!(pts[3], vec![2.0, 3.0]);
        assert_eq!(pts.len(), 6);
        assert_eq!(s.name, "t");
    }

    #[test]
    fn rejects_bad_scenarios() {
        assert!(err("quantities = [").contains("parse error"));
        assert!(err(&SWEEP.replace("\"Hc\"", "\"Hx\"")).contains("unknown `Hx`"));
        assert!(err(&SWEEP.replace("count = 5", "count = 1")).contains("at least 2"));
        assert!(err(&SWEEP.replace("count = 5", "count = 1000001")).contains("more than"));
        assert!(err(&SWEEP.replace("example1", "nope")).contains("unknown family"));
        assert!(err(&SWEEP.replace("\"H\"]", "\"jump\"]")).contains("[jump]"));
        assert!(err(&SWEEP.replace("base = [0.0]", "base = [0.0, 1.0]")).contains("expected 1"));
        assert!(err(&SWEEP.replace("name = \"s\"", "colour = 1")).contains("unknown field"));
    }

    #[test]
    fn parse_errors_carry_location() {
        let e = err("quantities = [\"H\"]\n[family]\nbuiltin = 3\n");
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn schedules() {
        assert!(check_schedule(&[1e-1, 1e-2]).is_ok());
        assert!(check_schedule(&[1e-2, 1e-1]).is_err());
        assert!(check_schedule(&[1e-1, 1e-9]).is_err());
        assert!(check_schedule(&[]).is_err());
    }

    #[test]
    fn tabulated_family() {
        let text = r#"
quantities = ["H"]
[family.tabulated]
start = 0.0
step = 0.5
nodes = [
  { re = [[1.0, 0.0], [0.0, 0.0]] },
  { re = [[0.5, 0.0], [0.0, 0.5]] },
  { re = [[0.0, 0.0], [0.0, 1.0]], im = [[0.0, 0.0], [0.0, 0.0]] },
]
[probe]
base = [0.5]
"#;
        let s = parse(text, "t").unwrap();
        assert_eq!(s.family.dim(), 2);
        assert!(err(&text.replace("[0.0, 0.5]]", "[0.0]]")).contains("square"));
    }
}
