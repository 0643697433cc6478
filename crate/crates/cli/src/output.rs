//! CSV and JSON writers. Floats are printed with 12 significant digits so
//! identical runs give identical bytes.

use std::io::Write;

use serde_json::{json, Value};

use crate::run::{Cell, Table};

/// Scientific notation with 12 significant digits.
pub fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        x.to_string()
    }
}

/// The JSON counterpart of [`format_number`]: the value rounded to 12
/// significant digits, or `null` when not finite.
pub fn json_number(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format_number(x).parse().expect("formatted float parses");
    json!(rounded)
}

/// Rounds every float inside a JSON document to 12 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => {
            n.as_f64().map_or(Value::Null, json_number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Num(x) => format_number(*x),
        Cell::Int(i) => i.to_string(),
        Cell::Text(s) => s.clone(),
        Cell::Empty => String::new(),
    }
}

fn cell_json(c: &Cell) -> Value {
    match c {
        Cell::Num(x) => json_number(*x),
        Cell::Int(i) => json!(i),
        Cell::Text(s) => json!(s),
        Cell::Empty => Value::Null,
    }
}

pub fn write_csv<W: Write>(t: &Table, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(&t.columns)?;
    for r in &t.rows {
        w.write_record(r.cells.iter().map(cell_text))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_json(t: &Table) -> Value {
    let rows: Vec<Value> = t
        .rows
        .iter()
        .map(|r| Value::Array(r.cells.iter().map(cell_json).collect()))
        .collect();
    json!({
        "scenario": t.scenario,
        "family": t.family,
        "columns": t.columns,
        "rows": rows,
    })
}

pub fn write_json<W: Write>(t: &Table, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, &to_json(t))?;
    out.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::Record;

    fn table() -> Table {
        Table {
            scenario: "s".into(),
            family: "f".into(),
            columns: vec!["p0".into(), "rank".into(), "status".into()],
            rows: vec![
                Record {
                    cells: vec![Cell::Num(0.1), Cell::Int(2), Cell::Text("ok".into())],
                    error: None,
                },
                Record {
                    cells: vec![Cell::Num(-4.0), Cell::Empty, Cell::Text("a, b".into())],
                    error: Some("a, b".into()),
                },
            ],
        }
    }

    #[test]
    fn numbers() {
        assert_eq!(format_number(4.0), "4.00000000000e0");
        assert_eq!(format_number(-1.0 / 3.0), "-3.33333333333e-1");
        assert_eq!(format_number(0.0), "0.00000000000e0");
        assert_eq!(json_number(1.0 / 3.0), json!(0.333333333333));
        assert_eq!(json_number(f64::NAN), Value::Null);
        assert_eq!(
            round_json(json!({"a": [1.0f64 / 7.0, 3]})),
            json!({"a": [0.142857142857, 3]})
        );
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&table(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "p0,rank,status\n1.00000000000e-1,2,ok\n-4.00000000000e0,,\"a, b\"\n"
        );
    }

    #[test]
    fn json_layout() {
        let v = to_json(&table());
        assert_eq!(v["columns"][2], json!("status"));
        assert_eq!(v["rows"][0], json!([0.1, 2, "ok"]));
        assert_eq!(v["rows"][1][1], Value::Null);
    }
}
