//! Data and result files.
//!
//! Data sets are headerless numeric CSV (one observation per row). Result
//! tables are headered CSV; single-object reports are JSON. Every output file
//! is written to a temporary file in the target directory and renamed into
//! place.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Reads a rectangular, headerless numeric CSV into an `n × d` array.
///
/// Rows and columns in errors are 1-based.
pub fn read_data_csv(path: &Path) -> Result<Array2<f64>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_data_csv(&text)
}

pub fn parse_data_csv(text: &str) -> Result<Array2<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Parse {
            row: r + 1,
            col: 0,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(CliError::Parse {
                row: r + 1,
                col: w.min(record.len()) + 1,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| CliError::Parse {
                row: r + 1,
                col: c + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse {
                    row: r + 1,
                    col: c + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| CliError::InvalidInput("data file is empty".into()))?;
    Ok(Array2::from_shape_vec((rows, width), values).expect("rectangular by construction"))
}

/// Shortest decimal that parses back to the same `f64`, in plain notation
/// for moderate magnitudes and exponent notation otherwise.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Headerless CSV of an array, the inverse of [`read_data_csv`].
pub fn write_data_csv(path: &Path, data: &Array2<f64>) -> Result<(), CliError> {
    let mut out = String::new();
    for row in data.rows() {
        let fields: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Bool(b) => Value::from(*b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

/// A result table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)
            .map_err(|e| CliError::Io(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::to_json).collect()))
            .collect();
        serde_json::json!({ "columns": self.columns, "rows": rows })
    }
}

/// Writes a result table as CSV.
pub fn write_table(path: &Path, table: &Table) -> Result<(), CliError> {
    write_atomic(path, &table.to_csv()?)
}

pub fn to_json_bytes<S: Serialize>(value: &S) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// `field,value` rows for a JSON report, with nested paths like `lambda[0][1]`.
pub fn flatten_json(value: &Value) -> Table {
    fn walk(prefix: String, v: &Value, table: &mut Table) {
        match v {
            Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(key, v, table);
                }
            }
            Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    walk(format!("{prefix}[{i}]"), v, table);
                }
            }
            Value::Number(n) => {
                let cell = n
                    .as_u64()
                    .map(Cell::Int)
                    .unwrap_or_else(|| Cell::Num(n.as_f64().unwrap_or(f64::NAN)));
                table.push(vec![Cell::Text(prefix), cell]);
            }
            Value::String(s) => table.push(vec![Cell::Text(prefix), Cell::Text(s.clone())]),
            Value::Bool(b) => table.push(vec![Cell::Text(prefix), Cell::Bool(*b)]),
            Value::Null => table.push(vec![Cell::Text(prefix), Cell::Empty]),
        }
    }
    let mut table = Table::new(&["field", "value"]);
    walk(String::new(), value, &mut table);
    table
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn parses_a_small_matrix() {
        assert_eq!(
            parse_data_csv("1.0,2.0\n3.0,4.0").unwrap(),
            array![[1.0, 2.0], [3.0, 4.0]]
        );
        assert_eq!(
            parse_data_csv(" 1 , -2e-3 \n\n").unwrap(),
            array![[1.0, -2e-3]]
        );
    }

    #[test]
    fn empty_input_is_invalid() {
        assert!(matches!(parse_data_csv(""), Err(CliError::InvalidInput(_))));
        assert!(matches!(
            parse_data_csv("\n\n"),
            Err(CliError::InvalidInput(_))
        ));
    }

    #[test]
    fn ragged_rows_report_position() {
        match parse_data_csv("1,2\n3,4\n5\n") {
            Err(CliError::Parse { row, col, .. }) => assert_eq!((row, col), (3, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_fields_report_position() {
        match parse_data_csv("1,2\n3,abc\n") {
            Err(CliError::Parse { row, col, .. }) => assert_eq!((row, col), (2, 2)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_data_csv("1,NaN"),
            Err(CliError::Parse { row: 1, col: 2, .. })
        ));
    }

    #[test]
    fn tables_render_in_column_order() {
        let mut t = Table::new(&["name", "value", "ok"]);
        t.push(vec!["a".into(), 0.5.into(), true.into()]);
        t.push(vec!["b".into(), Cell::Empty, false.into()]);
        assert_eq!(
            String::from_utf8(t.to_csv().unwrap()).unwrap(),
            "name,value,ok\na,0.5,true\nb,,false\n"
        );
    }

    #[test]
    fn reports_flatten_to_paths() {
        let v = serde_json::json!({ "m": [[1.5, 2], [3, 4]], "s": "x" });
        let t = flatten_json(&v);
        assert_eq!(t.rows[1], vec![Cell::Text("m[0][1]".into()), Cell::Int(2)]);
        assert_eq!(
            t.rows[4],
            vec![Cell::Text("s".into()), Cell::Text("x".into())]
        );
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            -1e3f64..1e3
        ]
    }

    proptest! {
        #[test]
        fn data_round_trips_exactly(rows in 1usize..12, cols in 1usize..6, seed in prop::collection::vec(finite(), 72)) {
            let data = Array2::from_shape_fn((rows, cols), |(i, j)| seed[i * 6 + j]);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("x.csv");
            write_data_csv(&path, &data).unwrap();
            let back = read_data_csv(&path).unwrap();
            prop_assert_eq!(back.dim(), data.dim());
            for (a, b) in back.iter().zip(data.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
