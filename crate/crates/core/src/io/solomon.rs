//! Reader for the Solomon VRPTW text layout.
//!
//! ```text
//! RC101
//!
//! VEHICLE
//! NUMBER     CAPACITY
//!   25         200
//!
//! CUSTOMER
//! CUST NO.   XCOORD.    YCOORD.    DEMAND   READY TIME   DUE DATE   SERVICE TIME
//!
//!     0      40         50          0          0        240          0
//!     1      25         85         20        145        175         10
//! ```

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vrptw::{Customer, Depot, FleetParams, Instance, Point, Window, WindowSlack};

/// Run-time choices that the Solomon file does not carry.
#[derive(Debug, Clone, Copy)]
pub struct SolomonOptions<S> {
    pub slack: WindowSlack<S>,
    pub unit_cost: S,
    pub fixed_cost: S,
    /// Keep only the first `n` customers.
    pub truncate: Option<usize>,
}

impl<S: Scalar> Default for SolomonOptions<S> {
    fn default() -> Self {
        SolomonOptions { slack: WindowSlack::default(), unit_cost: S::of(2.0), fixed_cost: S::of(400.0), truncate: None }
    }
}

/// A parsed Solomon file: the instance plus the raw vehicle header.
#[derive(Debug, Clone)]
pub struct SolomonInstance<S> {
    pub instance: Instance<S>,
    pub vehicle_count: usize,
    pub capacity: S,
}

struct Row {
    line: usize,
    values: [f64; 7],
}

fn parse_numbers(line_no: usize, line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| Error::Parse { line: line_no, message: format!("non-numeric cell `{tok}`") })
        })
        .collect()
}

pub fn parse_solomon<S: Scalar>(text: &str, options: &SolomonOptions<S>) -> Result<SolomonInstance<S>> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).collect();
    let name = lines
        .iter()
        .find(|(_, l)| !l.is_empty())
        .map(|(_, l)| l.to_string())
        .ok_or(Error::Parse { line: 1, message: "empty file".into() })?;

    let section = |key: &str| lines.iter().position(|(_, l)| l.eq_ignore_ascii_case(key));
    let vehicle_at = section("VEHICLE").ok_or(Error::Parse { line: lines.len(), message: "missing VEHICLE section".into() })?;
    let customer_at =
        section("CUSTOMER").ok_or(Error::Parse { line: lines.len(), message: "missing CUSTOMER section".into() })?;

    let header = lines[vehicle_at + 1..customer_at]
        .iter()
        .find(|(_, l)| !l.is_empty() && l.chars().next().is_some_and(|c| c.is_ascii_digit()))
        .ok_or(Error::Parse { line: lines[vehicle_at].0, message: "missing NUMBER/CAPACITY values".into() })?;
    let nums = parse_numbers(header.0, header.1)?;
    if nums.len() != 2 || nums[0] < 1.0 || nums[0].fract() != 0.0 {
        return Err(Error::Parse { line: header.0, message: "expected `NUMBER CAPACITY`".into() });
    }
    let vehicle_count = nums[0] as usize;
    let capacity = nums[1];

    let mut rows = Vec::new();
    for &(no, l) in &lines[customer_at + 1..] {
        if l.is_empty() || l.to_ascii_uppercase().starts_with("CUST") {
            continue;
        }
        let values = parse_numbers(no, l)?;
        let values: [f64; 7] = values
            .try_into()
            .map_err(|v: Vec<f64>| Error::Parse { line: no, message: format!("expected 7 columns, found {}", v.len()) })?;
        rows.push(Row { line: no, values });
    }
    let depot_row =
        rows.first().ok_or(Error::Parse { line: lines.len(), message: "CUSTOMER table has no rows".into() })?;
    let mut ids = HashSet::new();
    for r in &rows {
        if r.values[0] < 0.0 || r.values[0].fract() != 0.0 {
            return Err(Error::Parse { line: r.line, message: format!("invalid customer number {}", r.values[0]) });
        }
        if !ids.insert(r.values[0] as usize) {
            return Err(Error::Parse { line: r.line, message: format!("duplicate customer number {}", r.values[0]) });
        }
    }
    if depot_row.values[0] != 0.0 {
        return Err(Error::Parse { line: depot_row.line, message: "first row must be the depot (number 0)".into() });
    }

    let s = S::of;
    let depot = Depot { coord: Point::new(s(depot_row.values[1]), s(depot_row.values[2])), horizon_end: s(depot_row.values[5]) };
    let take = options.truncate.unwrap_or(usize::MAX);
    let customers: Vec<Customer<S>> = rows[1..]
        .iter()
        .take(take)
        .enumerate()
        .map(|(pos, r)| {
            let v = &r.values;
            if v[0] as usize != pos + 1 {
                return Err(Error::Parse { line: r.line, message: format!("customer numbers must run 1, 2, ...; found {}", v[0]) });
            }
            if !(v[4] < v[5]) {
                return Err(Error::Parse { line: r.line, message: "ready time must precede due date".into() });
            }
            Ok(Customer {
                id: pos + 1,
                coord: Point::new(s(v[1]), s(v[2])),
                demand: s(v[3]),
                soft_window: Window::new(s(v[4]), s(v[5])),
                service_time: s(v[6]),
            })
        })
        .collect::<Result<_>>()?;

    let fleet = FleetParams {
        fleet_size: vehicle_count,
        capacity: s(capacity),
        unit_cost: options.unit_cost,
        fixed_cost: options.fixed_cost,
        speed: S::one(),
    };
    let instance = Instance::new(name, depot, customers, fleet, options.slack)?;
    Ok(SolomonInstance { instance, vehicle_count, capacity: s(capacity) })
}

pub fn read_solomon<S: Scalar>(path: impl AsRef<std::path::Path>, options: &SolomonOptions<S>) -> Result<SolomonInstance<S>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_solomon(&text, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "TINY\n\nVEHICLE\nNUMBER     CAPACITY\n  3         200\n\nCUSTOMER\n\
CUST NO.   XCOORD.    YCOORD.    DEMAND   READY TIME   DUE DATE   SERVICE TIME\n\n\
    0      40         50          0          0        240          0\n\
    1      25         85         20        145        175         10\n";

    #[test]
    fn parses_minimal_file_verbatim() {
        let p = parse_solomon::<f64>(TINY, &SolomonOptions::default()).unwrap();
        let inst = &p.instance;
        assert_eq!(inst.customer_count(), 1);
        assert_eq!(inst.name(), "TINY");
        assert_eq!(inst.depot().coord, Point::new(40.0, 50.0));
        assert_eq!(inst.depot().horizon_end, 240.0);
        let c = inst.customer(1);
        assert_eq!(c.coord, Point::new(25.0, 85.0));
        assert_eq!(c.demand, 20.0);
        assert_eq!(c.soft_window, Window::new(145.0, 175.0));
        assert_eq!(c.service_time, 10.0);
        assert_eq!(inst.hard_window(1), Window::new(137.5, 182.5));
        assert_eq!((p.vehicle_count, p.capacity), (3, 200.0));
    }

    #[test]
    fn truncation_to_zero_is_rejected() {
        let opts = SolomonOptions { truncate: Some(0), ..SolomonOptions::<f64>::default() };
        assert!(matches!(parse_solomon::<f64>(TINY, &opts), Err(Error::InvalidInstance(_))));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = TINY.replace("145", "1x5");
        match parse_solomon::<f64>(&bad, &SolomonOptions::default()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 11);
                assert!(message.contains("1x5"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let dup = format!("{TINY}    1      25         85         20        145        175         10\n");
        assert!(matches!(parse_solomon::<f64>(&dup, &SolomonOptions::default()), Err(Error::Parse { line: 12, .. })));
        let missing = TINY.replace("VEHICLE", "VEHICLES");
        assert!(matches!(parse_solomon::<f64>(&missing, &SolomonOptions::default()), Err(Error::Parse { .. })));
        let no_cust = TINY.replace("CUSTOMER\n", "");
        assert!(parse_solomon::<f64>(&no_cust, &SolomonOptions::default()).is_err());
    }
}
