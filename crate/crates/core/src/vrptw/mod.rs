//! Routing domain model: customers, fleet, derived hard windows, schedules and objectives.

mod schedule;
mod window;

pub use schedule::{
    check_feasible, evaluate, simulate_schedule, ConstraintViolation, FeasibilityReport, ObjectiveValues,
    RouteSchedule, Schedule, Visit,
};
pub use window::{derive_hard_window, satisfaction, Window, WindowSlack};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point<S> {
    pub x: S,
    pub y: S,
}

impl<S: Scalar> Point<S> {
    pub fn new(x: S, y: S) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point<S>) -> S {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Customer<S> {
    /// Vertex index, `1..=h`.
    pub id: usize,
    pub coord: Point<S>,
    pub demand: S,
    pub soft_window: Window<S>,
    pub service_time: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Depot<S> {
    pub coord: Point<S>,
    /// Latest time a vehicle may be back at the depot (`L_0`); the horizon opens at 0.
    pub horizon_end: S,
}

/// Homogeneous fleet description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetParams<S> {
    pub fleet_size: usize,
    pub capacity: S,
    /// Cost per unit of distance travelled.
    pub unit_cost: S,
    /// Cost charged once per vehicle that leaves the depot.
    pub fixed_cost: S,
    pub speed: S,
}

impl<S: Scalar> FleetParams<S> {
    /// Cost parameters used throughout the experiments: `(2.0, 400)` and unit speed.
    pub fn with_default_costs(fleet_size: usize, capacity: S) -> Self {
        FleetParams { fleet_size, capacity, unit_cost: S::of(2.0), fixed_cost: S::of(400.0), speed: S::one() }
    }
}

/// An immutable MOVRPTW instance with derived hard windows and travel matrices.
///
/// Vertex `0` is the depot and vertex `i` (1-based) is `customers[i - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<S> {
    name: String,
    depot: Depot<S>,
    customers: Vec<Customer<S>>,
    fleet: FleetParams<S>,
    slack: WindowSlack<S>,
    hard_windows: Vec<Window<S>>,
    distances: Vec<S>,
    travel_times: Vec<S>,
}

impl<S: Scalar> Instance<S> {
    pub fn new(
        name: impl Into<String>,
        depot: Depot<S>,
        customers: Vec<Customer<S>>,
        fleet: FleetParams<S>,
        slack: WindowSlack<S>,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidInstance(msg));
        if customers.is_empty() {
            return invalid("an instance needs at least one customer".into());
        }
        if !(depot.horizon_end > S::zero()) {
            return invalid(format!("depot horizon must be positive, got {}", depot.horizon_end));
        }
        if fleet.fleet_size < 1 {
            return invalid("fleet size must be at least 1".into());
        }
        if !(fleet.speed > S::zero()) {
            return invalid("vehicle speed must be positive".into());
        }
        if fleet.unit_cost < S::zero() || fleet.fixed_cost < S::zero() {
            return invalid("costs must be non-negative".into());
        }
        let mut hard_windows = Vec::with_capacity(customers.len());
        for (pos, c) in customers.iter().enumerate() {
            if c.id != pos + 1 {
                return invalid(format!("customer at position {} has id {}, expected {}", pos, c.id, pos + 1));
            }
            if !(c.demand > S::zero()) {
                return invalid(format!("customer {} has non-positive demand", c.id));
            }
            if c.service_time < S::zero() {
                return invalid(format!("customer {} has negative service time", c.id));
            }
            if fleet.capacity < c.demand {
                return invalid(format!("capacity {} is below demand {} of customer {}", fleet.capacity, c.demand, c.id));
            }
            let all = [c.coord.x, c.coord.y, c.demand, c.soft_window.start, c.soft_window.end, c.service_time];
            if all.iter().any(|v| !v.is_finite()) {
                return invalid(format!("customer {} has non-finite data", c.id));
            }
            hard_windows.push(derive_hard_window(c.soft_window, slack)?);
        }

        let n = customers.len() + 1;
        let coord = |i: usize| if i == 0 { depot.coord } else { customers[i - 1].coord };
        let mut distances = vec![S::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = coord(i).distance(&coord(j));
                distances[i * n + j] = d;
                distances[j * n + i] = d;
            }
        }
        let travel_times = distances.iter().map(|&d| d / fleet.speed).collect();
        Ok(Instance { name: name.into(), depot, customers, fleet, slack, hard_windows, distances, travel_times })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn depot(&self) -> &Depot<S> {
        &self.depot
    }

    pub fn customers(&self) -> &[Customer<S>] {
        &self.customers
    }

    /// Customer by vertex id (`1..=h`).
    pub fn customer(&self, id: usize) -> &Customer<S> {
        &self.customers[id - 1]
    }

    pub fn fleet(&self) -> &FleetParams<S> {
        &self.fleet
    }

    pub fn slack(&self) -> WindowSlack<S> {
        self.slack
    }

    /// Number of customers `h`.
    pub fn customer_count(&self) -> usize {
        self.customers.len()
    }

    /// Number of vertices including the depot.
    pub fn vertex_count(&self) -> usize {
        self.customers.len() + 1
    }

    pub fn hard_window(&self, id: usize) -> Window<S> {
        self.hard_windows[id - 1]
    }

    pub fn hard_windows(&self) -> &[Window<S>] {
        &self.hard_windows
    }

    pub fn distance(&self, i: usize, j: usize) -> S {
        self.distances[i * self.vertex_count() + j]
    }

    pub fn travel_time(&self, i: usize, j: usize) -> S {
        self.travel_times[i * self.vertex_count() + j]
    }

    /// Earliest service start at a vertex (0 for the depot).
    pub fn earliest_start(&self, vertex: usize) -> S {
        if vertex == 0 {
            S::zero()
        } else {
            self.hard_windows[vertex - 1].start
        }
    }

    pub fn service_time(&self, vertex: usize) -> S {
        if vertex == 0 {
            S::zero()
        } else {
            self.customers[vertex - 1].service_time
        }
    }

    pub fn demand(&self, vertex: usize) -> S {
        if vertex == 0 {
            S::zero()
        } else {
            self.customers[vertex - 1].demand
        }
    }

    pub fn total_demand(&self) -> S {
        self.customers.iter().map(|c| c.demand).sum()
    }

    /// Returns a copy restricted to the first `n` customers.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let customers = self.customers.iter().take(n).cloned().collect();
        Instance::new(self.name.clone(), self.depot, customers, self.fleet, self.slack)
    }

    /// Same instance with a different fleet description.
    pub fn with_fleet(&self, fleet: FleetParams<S>) -> Result<Self> {
        Instance::new(self.name.clone(), self.depot, self.customers.clone(), fleet, self.slack)
    }

    /// Converts every numeric field to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Instance<T> {
        let c = |v: S| T::of(v.as_f64());
        let pt = |p: Point<S>| Point::new(c(p.x), c(p.y));
        let customers = self
            .customers
            .iter()
            .map(|cu| Customer {
                id: cu.id,
                coord: pt(cu.coord),
                demand: c(cu.demand),
                soft_window: Window::new(c(cu.soft_window.start), c(cu.soft_window.end)),
                service_time: c(cu.service_time),
            })
            .collect();
        Instance::new(
            self.name.clone(),
            Depot { coord: pt(self.depot.coord), horizon_end: c(self.depot.horizon_end) },
            customers,
            FleetParams {
                fleet_size: self.fleet.fleet_size,
                capacity: c(self.fleet.capacity),
                unit_cost: c(self.fleet.unit_cost),
                fixed_cost: c(self.fleet.fixed_cost),
                speed: c(self.fleet.speed),
            },
            WindowSlack::new(c(self.slack.early), c(self.slack.late)),
        )
        .expect("casting a valid instance keeps it valid")
    }
}

/// Routes of a solution; each route is the ordered list of customer ids served by one vehicle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RoutePlan {
    pub routes: Vec<Vec<usize>>,
}

impl RoutePlan {
    pub fn new(routes: Vec<Vec<usize>>) -> Self {
        RoutePlan { routes }
    }

    /// Splits an action sequence at depot visits, dropping empty segments.
    pub fn from_actions(actions: &[usize]) -> Self {
        let routes = actions
            .split(|&a| a == 0)
            .filter(|r| !r.is_empty())
            .map(|r| r.to_vec())
            .collect();
        RoutePlan { routes }
    }

    /// Concatenation of all routes in order.
    pub fn giant_tour(&self) -> Vec<usize> {
        self.routes.iter().flatten().copied().collect()
    }

    pub fn route_count(&self) -> usize {
        self.routes.iter().filter(|r| !r.is_empty()).count()
    }
}

impl From<Vec<Vec<usize>>> for RoutePlan {
    fn from(routes: Vec<Vec<usize>>) -> Self {
        RoutePlan { routes }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two customers around a depot at the origin; see the schedule tests for the hand timeline.
    pub fn t2<S: Scalar>(capacity: f64) -> Instance<S> {
        let s = S::of;
        let customers = vec![
            Customer {
                id: 1,
                coord: Point::new(s(10.0), s(0.0)),
                demand: s(5.0),
                soft_window: Window::new(s(20.0), s(40.0)),
                service_time: s(10.0),
            },
            Customer {
                id: 2,
                coord: Point::new(s(0.0), s(10.0)),
                demand: s(5.0),
                soft_window: Window::new(s(10.0), s(30.0)),
                service_time: s(5.0),
            },
        ];
        let fleet = FleetParams {
            fleet_size: 2,
            capacity: s(capacity),
            unit_cost: s(2.0),
            fixed_cost: s(400.0),
            speed: s(1.0),
        };
        let depot = Depot { coord: Point::new(s(0.0), s(0.0)), horizon_end: s(1000.0) };
        Instance::new("T2", depot, customers, fleet, WindowSlack::new(s(0.25), s(0.25))).unwrap()
    }
}
