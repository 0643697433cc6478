//! Evaluates a scenario at every probe point and lays the results out as a
//! table with a fixed column set.

use nalgebra::DMatrix;
use qfi_core::{
    bures_distance_sq, continuous_qfi, cramer_rao_lower_bound, evaluate, evaluate_bundle, jump,
    kernel_hessian_sum, qfi_from_sld, qfi_spectral, regularization_limit, sld, truncated_metric,
    uhlmann_fidelity, DerivativeBundle, ParameterPoint,
};
use rayon::prelude::*;

use crate::scenario::{Quantity, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

#[derive(Debug, Clone)]
pub struct Record {
    pub cells: Vec<Cell>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub scenario: String,
    pub family: String,
    pub columns: Vec<String>,
    pub rows: Vec<Record>,
}

impl Table {
    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

fn matrix_columns(prefix: &str, n: usize) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            out.push(format!("{prefix}_{i}_{j}"));
        }
    }
    out
}

fn matrix_cells(m: &DMatrix<f64>) -> Vec<Cell> {
    let n = m.nrows();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            out.push(Cell::Num(m[(i, j)]));
        }
    }
    out
}

fn quantity_columns(sc: &Scenario, q: Quantity) -> Vec<String> {
    let n = sc.n_params();
    match q {
        Quantity::H => matrix_columns("H", n),
        Quantity::Hc => matrix_columns("Hc", n),
        Quantity::Truncated => matrix_columns("truncated", n),
        Quantity::Sld => {
            let mut c = matrix_columns("Hsld", n);
            c.push("sld_residual".into());
            c
        }
        Quantity::HessianSum => matrix_columns("hessian_sum", n),
        Quantity::Jump => {
            let mut c = matrix_columns("delta", n);
            c.push("jump_contributing".into());
            c.push("jump_excluded".into());
            c
        }
        Quantity::Crb => {
            let mut c = matrix_columns("crb", n);
            c.push("crb_singular".into());
            c
        }
        Quantity::Fidelity => vec!["fidelity".into(), "bures_sq".into()],
        Quantity::Regularization => {
            let levels = sc.regularization.as_ref().map_or(0, |r| r.schedule.len());
            let mut c = Vec::new();
            for k in 0..levels {
                c.extend(matrix_columns(&format!("reg_H{k}"), n));
            }
            c.extend(matrix_columns("reg_limit", n));
            c.extend(matrix_columns("reg_limit_plus_hessian", n));
            c.push("reg_residual".into());
            c
        }
    }
}

/// Header shared by every row of a run.
pub fn columns(sc: &Scenario) -> Vec<String> {
    let mut cols: Vec<String> = (0..sc.n_params()).map(|i| format!("p{i}")).collect();
    cols.push("rank".into());
    cols.push("min_eigenvalue".into());
    for &q in &sc.quantities {
        cols.extend(quantity_columns(sc, q));
    }
    cols.push("status".into());
    cols
}

fn quantity_cells(
    sc: &Scenario,
    q: Quantity,
    p: &ParameterPoint,
    b: &DerivativeBundle,
) -> qfi_core::Result<Vec<Cell>> {
    Ok(match q {
        Quantity::H => matrix_cells(&qfi_spectral(b).values),
        Quantity::Hc => matrix_cells(&continuous_qfi(b)?.values),
        Quantity::Truncated => matrix_cells(&truncated_metric(b).values),
        Quantity::Sld => {
            let s = sld(b);
            let mut c = matrix_cells(&qfi_from_sld(b, &s)?.values);
            c.push(Cell::Num(s.residual(b)));
            c
        }
        Quantity::HessianSum => matrix_cells(&kernel_hessian_sum(b)?.values),
        Quantity::Jump => {
            let u = sc.direction.as_ref().expect("validated scenario");
            let r = jump(b, u)?;
            let mut c = matrix_cells(&r.delta.values);
            c.push(Cell::Int(r.contributing_branches.len() as i64));
            c.push(Cell::Int(r.excluded_branches.len() as i64));
            c
        }
        Quantity::Crb => {
            let bound = cramer_rao_lower_bound(&qfi_spectral(b), sc.tol_crb);
            let m = DMatrix::from_fn(sc.n_params(), sc.n_params(), |i, j| bound.bound[i][j]);
            let mut c = matrix_cells(&m);
            c.push(Cell::Int(bound.singular_directions.len() as i64));
            c
        }
        Quantity::Fidelity => {
            let reference = sc.reference.as_ref().expect("validated scenario");
            let a = evaluate(sc.family.as_ref(), reference.coords())?;
            let rho = evaluate(sc.family.as_ref(), p.coords())?;
            vec![
                Cell::Num(uhlmann_fidelity(&a, &rho)?),
                Cell::Num(bures_distance_sq(&a, &rho)?),
            ]
        }
        Quantity::Regularization => {
            let reg = sc.regularization.as_ref().expect("validated scenario");
            let t = regularization_limit(sc.family.clone(), p, &reg.rho0, &reg.schedule, &sc.fd)?;
            let mut c = Vec::new();
            for h in &t.qfi_values {
                c.extend(matrix_cells(&h.values));
            }
            c.extend(matrix_cells(&t.extrapolated_limit.values));
            c.extend(matrix_cells(&t.limit_plus_hessian.values));
            c.push(Cell::Num(t.extrapolation_residual));
            c
        }
    })
}

/// Evaluates one probe point. A failure blanks the affected columns and is
/// reported in `status`; the remaining quantities are still computed.
pub fn evaluate_point(sc: &Scenario, p: &ParameterPoint) -> Record {
    let mut cells: Vec<Cell> = p.coords().iter().map(|&x| Cell::Num(x)).collect();
    let mut errors = Vec::new();
    let bundle = evaluate_bundle(sc.family.as_ref(), p, &sc.fd, sc.tol_zero);
    match &bundle {
        Ok(b) => {
            cells.push(Cell::Int(b.spectrum.positive_set.len() as i64));
            cells.push(Cell::Num(b.spectrum.eigenvalues[0]));
        }
        Err(e) => {
            cells.push(Cell::Empty);
            cells.push(Cell::Empty);
            errors.push(e.to_string());
        }
    }
    for &q in &sc.quantities {
        let width = quantity_columns(sc, q).len();
        let result = match &bundle {
            Ok(b) => quantity_cells(sc, q, p, b),
            Err(_) => {
                cells.extend(std::iter::repeat_n(Cell::Empty, width));
                continue;
            }
        };
        match result {
            Ok(c) => {
                debug_assert_eq!(c.len(), width);
                cells.extend(c);
            }
            Err(e) => {
                cells.extend(std::iter::repeat_n(Cell::Empty, width));
                errors.push(format!("{}: {e}", quantity_name(q)));
            }
        }
    }
    let error = if errors.is_empty() {
        None
    } else {
        Some(errors.join("; "))
    };
    cells.push(Cell::Text(error.clone().unwrap_or_else(|| "ok".into())));
    Record { cells, error }
}

fn quantity_name(q: Quantity) -> &'static str {
    match q {
        Quantity::H => "H",
        Quantity::Hc => "Hc",
        Quantity::Truncated => "truncated",
        Quantity::Sld => "sld",
        Quantity::HessianSum => "hessian_sum",
        Quantity::Jump => "jump",
        Quantity::Crb => "crb",
        Quantity::Fidelity => "fidelity",
        Quantity::Regularization => "regularization",
    }
}

/// Runs every probe point on a pool of `threads` workers. Rows come back in
/// probe order whatever the schedule.
pub fn run(sc: &Scenario, threads: usize) -> Result<Table, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    let rows: Vec<Record> = pool.install(|| {
        sc.points
            .par_iter()
            .map(|p| evaluate_point(sc, p))
            .collect()
    });
    Ok(Table {
        scenario: sc.name.clone(),
        family: sc.family.name(),
        columns: columns(sc),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse;

    fn scenario(quantities: &str, extra: &str) -> Scenario {
        let text = format!(
            "quantities = [{quantities}]\n[family]\nbuiltin = \"example2\"\n[probe]\nbase = [0.0, 0.0]\n{extra}"
        );
        parse(&text, "t").unwrap()
    }

    #[test]
    fn column_layout() {
        let sc = scenario(
            "\"crb\", \"H\", \"jump\"",
            "[jump]\ndirection = [0.0, 2.0]\n",
        );
        assert_eq!(
            columns(&sc),
            vec![
                "p0",
                "p1",
                "rank",
                "min_eigenvalue",
                "H_0_0",
                "H_0_1",
                "H_1_1",
                "delta_0_0",
                "delta_0_1",
                "delta_1_1",
                "jump_contributing",
                "jump_excluded",
                "crb_0_0",
                "crb_0_1",
                "crb_1_1",
                "crb_singular",
                "status"
            ]
        );
        let r = evaluate_point(&sc, &sc.points[0]);
        assert_eq!(r.cells.len(), columns(&sc).len());
        assert!(r.error.is_none());
        let delta = columns(&sc).iter().position(|c| c == "delta_0_0").unwrap();
        match r.cells[delta] {
            Cell::Num(v) => assert!((v + 2.0).abs() < 1e-9),
            ref other => panic!("{other:?}"),
        }
    }

    #[test]
    fn failures_blank_only_their_columns() {
        let mut sc = scenario("\"H\", \"Hc\"", "");
        sc.points = vec![ParameterPoint::new(vec![2.0, 0.0]).unwrap()];
        let r = evaluate_point(&sc, &sc.points[0]);
        assert!(r.error.as_ref().unwrap().contains("outside"));
        assert_eq!(r.cells[0], Cell::Num(2.0));
        assert!(r.cells[2..r.cells.len() - 1]
            .iter()
            .all(|c| *c == Cell::Empty));
    }

    #[test]
    fn thread_count_does_not_change_rows() {
        let text = "quantities = [\"H\", \"Hc\"]\n[family]\nbuiltin = \"example2\"\n[probe]\nbase = [0.0, 0.0]\n[[probe.axis]]\nindex = 0\nstart = -1.0\nstop = 1.0\ncount = 9\n[[probe.axis]]\nindex = 1\nstart = -1.0\nstop = 1.0\ncount = 9\n";
        let sc = parse(text, "t").unwrap();
        let a = run(&sc, 1).unwrap();
        let b = run(&sc, 4).unwrap();
        let cells = |t: &Table| t.rows.iter().map(|r| r.cells.clone()).collect::<Vec<_>>();
        assert_eq!(cells(&a), cells(&b));
    }
}
