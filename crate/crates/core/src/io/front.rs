//! Pareto front files.
//!
//! CSV layout, one solution per row, sorted by ascending `f1`:
//!
//! ```text
//! w1,w2,f1,f2,provenance,routes
//! 0.5,0.5,468.2843,1,wadrl,2 1
//! ,,512.5,0.93,nsga2,1;2
//! ```
//!
//! Weights are empty for solutions without a weight pair. Routes are separated by `;`
//! and customer ids inside a route by a space. The JSON form is an array of objects with
//! the same field names, `routes` being a list of lists.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vrptw::RoutePlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Wadrl,
    Nsga2,
    Seed,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Wadrl => "wadrl",
            Provenance::Nsga2 => "nsga2",
            Provenance::Seed => "seed",
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "wadrl" => Ok(Provenance::Wadrl),
            "nsga2" => Ok(Provenance::Nsga2),
            "seed" => Ok(Provenance::Seed),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontRecord {
    pub weights: Option<(f64, f64)>,
    pub f1: f64,
    pub f2: f64,
    pub provenance: Provenance,
    pub routes: RoutePlan,
}

impl FrontRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.f2) {
            return Err(Error::Schema { column: "f2".into(), message: format!("{} is outside [0, 1]", self.f2) });
        }
        if !self.f1.is_finite() {
            return Err(Error::Schema { column: "f1".into(), message: "must be finite".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontFormat {
    Csv,
    Json,
}

impl FrontFormat {
    /// Picks the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => FrontFormat::Json,
            _ => FrontFormat::Csv,
        }
    }
}

const COLUMNS: [&str; 6] = ["w1", "w2", "f1", "f2", "provenance", "routes"];

#[derive(Serialize)]
struct JsonRecordRef<'a> {
    w1: Option<f64>,
    w2: Option<f64>,
    f1: f64,
    f2: f64,
    provenance: Provenance,
    routes: &'a [Vec<usize>],
}

#[derive(Deserialize)]
struct JsonRecord {
    w1: Option<f64>,
    w2: Option<f64>,
    f1: f64,
    f2: f64,
    provenance: Provenance,
    routes: Vec<Vec<usize>>,
}

fn sorted(records: &[FrontRecord]) -> Vec<&FrontRecord> {
    let mut out: Vec<&FrontRecord> = records.iter().collect();
    out.sort_by(|a, b| a.f1.total_cmp(&b.f1));
    out
}

fn routes_cell(plan: &RoutePlan) -> String {
    plan.routes
        .iter()
        .map(|r| r.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_routes(cell: &str) -> std::result::Result<RoutePlan, String> {
    if cell.trim().is_empty() {
        return Ok(RoutePlan::default());
    }
    cell.split(';')
        .map(|r| r.split_whitespace().map(|c| c.parse::<usize>().map_err(|e| format!("`{c}`: {e}"))).collect())
        .collect::<std::result::Result<Vec<Vec<usize>>, String>>()
        .map(RoutePlan::new)
}

/// Renders records as CSV text.
pub fn front_to_csv(records: &[FrontRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in sorted(records) {
        let (w1, w2) = match r.weights {
            Some((a, b)) => (a.to_string(), b.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([w1, w2, r.f1.to_string(), r.f2.to_string(), r.provenance.as_str().into(), routes_cell(&r.routes)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io { path: "<memory>".into(), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Renders records as pretty-printed JSON.
pub fn front_to_json(records: &[FrontRecord]) -> Result<String> {
    let rows: Vec<JsonRecordRef> = sorted(records)
        .into_iter()
        .map(|r| JsonRecordRef {
            w1: r.weights.map(|w| w.0),
            w2: r.weights.map(|w| w.1),
            f1: r.f1,
            f2: r.f2,
            provenance: r.provenance,
            routes: &r.routes.routes,
        })
        .collect();
    Ok(serde_json::to_string_pretty(&rows)? + "\n")
}

pub fn write_front(records: &[FrontRecord], path: &Path, format: FrontFormat) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Config("refusing to write an empty front".into()));
    }
    for r in records {
        r.validate()?;
    }
    let text = match format {
        FrontFormat::Csv => front_to_csv(records)?,
        FrontFormat::Json => front_to_json(records)?,
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn schema(column: &str, message: impl Into<String>) -> Error {
    Error::Schema { column: column.into(), message: message.into() }
}

/// Parses CSV text produced by [`front_to_csv`].
pub fn front_from_csv(text: &str) -> Result<Vec<FrontRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; 6];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers.iter().position(|h| h.trim() == name).ok_or_else(|| schema(name, "missing column"))?;
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let cell = |k: usize| row.get(index[k]).unwrap_or("").trim();
        let num = |k: usize| -> Result<f64> {
            cell(k).parse::<f64>().map_err(|e| schema(COLUMNS[k], format!("`{}`: {e}", cell(k))))
        };
        let weights = match (cell(0).is_empty(), cell(1).is_empty()) {
            (true, true) => None,
            (false, false) => Some((num(0)?, num(1)?)),
            _ => return Err(schema("w1", "w1 and w2 must both be present or both be empty")),
        };
        let record = FrontRecord {
            weights,
            f1: num(2)?,
            f2: num(3)?,
            provenance: cell(4).parse().map_err(|m: String| schema("provenance", m))?,
            routes: parse_routes(cell(5)).map_err(|m| schema("routes", m))?,
        };
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

/// Parses JSON text produced by [`front_to_json`].
pub fn front_from_json(text: &str) -> Result<Vec<FrontRecord>> {
    let rows: Vec<JsonRecord> = serde_json::from_str(text)?;
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let weights = match (r.w1, r.w2) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return Err(schema("w1", "w1 and w2 must both be present or both be null")),
        };
        let record = FrontRecord { weights, f1: r.f1, f2: r.f2, provenance: r.provenance, routes: RoutePlan::new(r.routes) };
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

/// Reads a front file; `.json` files are parsed as JSON, anything else as CSV.
pub fn read_front(path: &Path) -> Result<Vec<FrontRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match FrontFormat::from_path(path) {
        FrontFormat::Csv => front_from_csv(&text),
        FrontFormat::Json => front_from_json(&text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> FrontRecord {
        FrontRecord {
            weights: Some((0.5, 0.5)),
            f1: 468.2843,
            f2: 1.0,
            provenance: Provenance::Wadrl,
            routes: RoutePlan::new(vec![vec![2, 1]]),
        }
    }

    #[test]
    fn single_record_csv_row() {
        let text = front_to_csv(&[example()]).unwrap();
        assert_eq!(text, "w1,w2,f1,f2,provenance,routes\n0.5,0.5,468.2843,1,wadrl,2 1\n");
    }

    #[test]
    fn empty_front_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_front(&[], &dir.path().join("f.csv"), FrontFormat::Csv).is_err());
    }

    #[test]
    fn out_of_range_satisfaction_is_rejected() {
        let text = "w1,w2,f1,f2,provenance,routes\n0.5,0.5,10,1.5,seed,1\n";
        match front_from_csv(text) {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "f2"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let text = "w1,w2,f1,f2,routes\n0.5,0.5,10,0.5,1\n";
        match front_from_csv(text) {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "provenance"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn rows_are_sorted_by_cost() {
        let mut a = example();
        a.f1 = 900.0;
        let mut b = example();
        b.f1 = 100.0;
        b.weights = None;
        b.provenance = Provenance::Nsga2;
        let back = front_from_csv(&front_to_csv(&[a.clone(), b.clone()]).unwrap()).unwrap();
        assert_eq!(back, vec![b, a]);
    }

    fn record() -> impl Strategy<Value = FrontRecord> {
        (
            proptest::option::of((0.0..=1.0f64, 0.0..=1.0f64)),
            0.0..1e5f64,
            0.0..=1.0f64,
            prop_oneof![Just(Provenance::Wadrl), Just(Provenance::Nsga2), Just(Provenance::Seed)],
            proptest::collection::vec(proptest::collection::vec(1usize..200, 1..6), 0..5),
        )
            .prop_map(|(weights, f1, f2, provenance, routes)| FrontRecord {
                weights,
                f1,
                f2,
                provenance,
                routes: RoutePlan::new(routes),
            })
    }

    proptest! {
        #[test]
        fn csv_and_json_round_trip(mut records in proptest::collection::vec(record(), 1..20)) {
            records.sort_by(|a, b| a.f1.total_cmp(&b.f1));
            let dir = tempfile::tempdir().unwrap();
            for (name, fmt) in [("f.csv", FrontFormat::Csv), ("f.json", FrontFormat::Json)] {
                let path = dir.path().join(name);
                write_front(&records, &path, fmt).unwrap();
                let back = read_front(&path).unwrap();
                prop_assert_eq!(&back, &records);
            }
        }
    }
}
