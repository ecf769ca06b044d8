use serde::{Deserialize, Serialize};

use super::{satisfaction, Instance, RoutePlan};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One customer visit on a simulated route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visit<S> {
    pub customer: usize,
    pub arrival: S,
    pub wait: S,
    /// `max(arrival, E_i)`
    pub service_start: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteSchedule<S> {
    pub visits: Vec<Visit<S>>,
    pub load: S,
    pub distance: S,
    pub return_time: S,
}

/// A constraint broken by a route plan, with the offending route (0-based) or customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintViolation {
    /// Route load above vehicle capacity.
    Capacity { route: usize, load: f64, capacity: f64 },
    /// Customer not served by any route.
    MissingCustomer { customer: usize },
    /// Customer served more than once.
    DuplicateVisit { customer: usize, count: usize },
    UnknownCustomer { route: usize, customer: usize },
    EmptyRoute { route: usize },
    /// Service would start after the hard window closes.
    HardWindow { route: usize, customer: usize, start: f64, latest: f64 },
    DepotReturn { route: usize, time: f64, horizon: f64 },
    FleetSize { routes: usize, fleet: usize },
}

/// Simulated timeline of a route plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<S> {
    pub routes: Vec<RouteSchedule<S>>,
    /// Arrival time of the first visit to each customer, indexed by `id - 1`.
    pub arrivals: Vec<Option<S>>,
    pub feasible: bool,
    pub violations: Vec<ConstraintViolation>,
}

impl<S: Scalar> Schedule<S> {
    pub fn arrival(&self, customer: usize) -> Option<S> {
        self.arrivals.get(customer.wrapping_sub(1)).copied().flatten()
    }

    pub fn visit(&self, customer: usize) -> Option<&Visit<S>> {
        self.routes.iter().flat_map(|r| r.visits.iter()).find(|v| v.customer == customer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValues<S> {
    /// Travel plus vehicle cost (minimised).
    pub cost: S,
    /// Average customer satisfaction in `[0, 1]` (maximised).
    pub satisfaction: S,
}

/// Simulates every route from time 0 at the depot.
///
/// A vehicle waits at a customer until the hard window opens; the next arrival is
/// `arrival + wait + service + travel`. Feasibility is recorded, not enforced.
pub fn simulate_schedule<S: Scalar>(instance: &Instance<S>, plan: &RoutePlan) -> Result<Schedule<S>> {
    let h = instance.customer_count();
    if let Some(&bad) = plan.routes.iter().flatten().find(|&&c| c == 0 || c > h) {
        return Err(Error::UnknownCustomer(bad));
    }
    let fleet = instance.fleet();
    let horizon = instance.depot().horizon_end;
    let mut arrivals = vec![None; h];
    let mut counts = vec![0usize; h];
    let mut violations = Vec::new();
    let mut routes = Vec::with_capacity(plan.routes.len());

    for (r, route) in plan.routes.iter().enumerate() {
        if route.is_empty() {
            violations.push(ConstraintViolation::EmptyRoute { route: r });
        }
        let mut prev = 0usize;
        let mut depart = S::zero();
        let mut load = S::zero();
        let mut distance = S::zero();
        let mut visits = Vec::with_capacity(route.len());
        for &c in route {
            let arrival = depart + instance.travel_time(prev, c);
            distance += instance.distance(prev, c);
            let hard = instance.hard_window(c);
            let service_start = arrival.max(hard.start);
            let visit = Visit { customer: c, arrival, wait: service_start - arrival, service_start };
            if visit.service_start > hard.end {
                violations.push(ConstraintViolation::HardWindow {
                    route: r,
                    customer: c,
                    start: visit.service_start.as_f64(),
                    latest: hard.end.as_f64(),
                });
            }
            counts[c - 1] += 1;
            if arrivals[c - 1].is_none() {
                arrivals[c - 1] = Some(arrival);
            }
            load += instance.demand(c);
            depart = visit.service_start + instance.service_time(c);
            visits.push(visit);
            prev = c;
        }
        let return_time = if route.is_empty() { S::zero() } else { depart + instance.travel_time(prev, 0) };
        if !route.is_empty() {
            distance += instance.distance(prev, 0);
        }
        if load > fleet.capacity {
            violations.push(ConstraintViolation::Capacity {
                route: r,
                load: load.as_f64(),
                capacity: fleet.capacity.as_f64(),
            });
        }
        if return_time > horizon {
            violations.push(ConstraintViolation::DepotReturn {
                route: r,
                time: return_time.as_f64(),
                horizon: horizon.as_f64(),
            });
        }
        routes.push(RouteSchedule { visits, load, distance, return_time });
    }

    for (i, &n) in counts.iter().enumerate() {
        match n {
            0 => violations.push(ConstraintViolation::MissingCustomer { customer: i + 1 }),
            1 => {}
            n => violations.push(ConstraintViolation::DuplicateVisit { customer: i + 1, count: n }),
        }
    }
    let used = plan.route_count();
    if used > fleet.fleet_size {
        violations.push(ConstraintViolation::FleetSize { routes: used, fleet: fleet.fleet_size });
    }

    Ok(Schedule { routes, arrivals, feasible: violations.is_empty(), violations })
}

/// Total cost and average satisfaction of a plan.
///
/// Only routes that leave the depot are charged the fixed vehicle cost; unserved
/// customers contribute zero satisfaction.
pub fn evaluate<S: Scalar>(instance: &Instance<S>, plan: &RoutePlan) -> Result<ObjectiveValues<S>> {
    let schedule = simulate_schedule(instance, plan)?;
    Ok(objectives_of(instance, plan, &schedule))
}

pub(crate) fn objectives_of<S: Scalar>(instance: &Instance<S>, plan: &RoutePlan, schedule: &Schedule<S>) -> ObjectiveValues<S> {
    let fleet = instance.fleet();
    let distance: S = schedule.routes.iter().map(|r| r.distance).sum();
    let cost = fleet.unit_cost * distance + fleet.fixed_cost * S::of_usize(plan.route_count());
    let total: S = schedule
        .arrivals
        .iter()
        .enumerate()
        .map(|(i, a)| match a {
            Some(a) => satisfaction(*a, instance.hard_windows()[i], instance.customers()[i].soft_window),
            None => S::zero(),
        })
        .sum();
    ObjectiveValues { cost, satisfaction: total / S::of_usize(instance.customer_count()) }
}

/// Result of [`check_feasible`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<ConstraintViolation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every routing constraint without failing on malformed plans.
///
/// Walks the plan independently of [`simulate_schedule`]; the two agree by construction
/// of the constraint set and are cross-checked in tests.
pub fn check_feasible<S: Scalar>(instance: &Instance<S>, plan: &RoutePlan) -> FeasibilityReport {
    use ConstraintViolation as V;
    let h = instance.customer_count();
    let fleet = instance.fleet();
    let horizon = instance.depot().horizon_end;
    let mut violations = Vec::new();
    let mut seen = vec![0usize; h + 1];

    for (r, route) in plan.routes.iter().enumerate() {
        if route.is_empty() {
            violations.push(V::EmptyRoute { route: r });
            continue;
        }
        let mut time = S::zero();
        let mut at = 0;
        let mut load = S::zero();
        let mut broken = false;
        for &c in route {
            if c == 0 || c > h {
                violations.push(V::UnknownCustomer { route: r, customer: c });
                broken = true;
                continue;
            }
            seen[c] += 1;
            load += instance.demand(c);
            time = (time + instance.travel_time(at, c)).max(instance.earliest_start(c));
            let latest = instance.hard_window(c).end;
            if time > latest {
                violations.push(V::HardWindow { route: r, customer: c, start: time.as_f64(), latest: latest.as_f64() });
            }
            time += instance.service_time(c);
            at = c;
        }
        if load > fleet.capacity {
            violations.push(V::Capacity { route: r, load: load.as_f64(), capacity: fleet.capacity.as_f64() });
        }
        let back = time + instance.travel_time(at, 0);
        if !broken && back > horizon {
            violations.push(V::DepotReturn { route: r, time: back.as_f64(), horizon: horizon.as_f64() });
        }
    }
    for c in 1..=h {
        match seen[c] {
            0 => violations.push(V::MissingCustomer { customer: c }),
            1 => {}
            n => violations.push(V::DuplicateVisit { customer: c, count: n }),
        }
    }
    let used = plan.route_count();
    if used > fleet.fleet_size {
        violations.push(V::FleetSize { routes: used, fleet: fleet.fleet_size });
    }
    FeasibilityReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vrptw::fixtures::t2;

    const SQRT200: f64 = 14.142135623730951;

    /// Step-by-step timeline written out longhand, independent of the simulator.
    fn oracle_timeline(inst: &Instance<f64>, route: &[usize]) -> (Vec<(f64, f64)>, f64) {
        let mut out = Vec::new();
        let mut clock = 0.0;
        let mut here = 0;
        for &c in route {
            let cu = inst.customer(c);
            let here_pt = if here == 0 { inst.depot().coord } else { inst.customer(here).coord };
            let travel = ((here_pt.x - cu.coord.x).powi(2) + (here_pt.y - cu.coord.y).powi(2)).sqrt();
            let arrival = clock + travel;
            let e_hard = cu.soft_window.start - 0.25 * (cu.soft_window.end - cu.soft_window.start);
            let wait = if arrival < e_hard { e_hard - arrival } else { 0.0 };
            out.push((arrival, wait));
            clock = arrival + wait + cu.service_time;
            here = c;
        }
        let back = if here == 0 { 0.0 } else { clock + inst.customer(here).coord.distance(&inst.depot().coord) };
        (out, back)
    }

    #[test]
    fn timeline_c2_then_c1() {
        let inst = t2::<f64>(10.0);
        let plan = RoutePlan::new(vec![vec![2, 1]]);
        let s = simulate_schedule(&inst, &plan).unwrap();
        let (oracle, back) = oracle_timeline(&inst, &[2, 1]);
        assert!((s.arrival(2).unwrap() - 10.0).abs() < 1e-9);
        assert_eq!(s.visit(2).unwrap().wait, 0.0);
        assert!((s.arrival(1).unwrap() - (15.0 + SQRT200)).abs() < 1e-9);
        assert!((s.arrival(1).unwrap() - oracle[1].0).abs() < 1e-12);
        assert_eq!(s.visit(1).unwrap().wait, 0.0);
        assert!((s.routes[0].return_time - (35.0 + SQRT200)).abs() < 1e-9);
        assert!((s.routes[0].return_time - back).abs() < 1e-12);
        assert!(s.feasible);
        assert_eq!(s.routes[0].load, 10.0);
    }

    #[test]
    fn timeline_separate_routes_waits_for_hard_window() {
        let inst = t2::<f64>(10.0);
        let s = simulate_schedule(&inst, &RoutePlan::new(vec![vec![1], vec![2]])).unwrap();
        let (oracle, _) = oracle_timeline(&inst, &[1]);
        assert_eq!(s.arrival(1), Some(10.0));
        assert_eq!(s.visit(1).unwrap().wait, 5.0);
        assert_eq!(oracle[0], (10.0, 5.0));
        assert!(s.feasible);
    }

    #[test]
    fn capacity_violation_reported() {
        let inst = t2::<f64>(5.0);
        let s = simulate_schedule(&inst, &RoutePlan::new(vec![vec![1, 2]])).unwrap();
        assert!(!s.feasible);
        assert!(s.violations.iter().any(|v| matches!(v, ConstraintViolation::Capacity { route: 0, .. })));
    }

    #[test]
    fn unknown_customer_is_an_error() {
        let inst = t2::<f64>(10.0);
        assert!(matches!(simulate_schedule(&inst, &RoutePlan::new(vec![vec![3]])), Err(Error::UnknownCustomer(3))));
        let report = check_feasible(&inst, &RoutePlan::new(vec![vec![3, 1, 2]]));
        assert!(report.violations.contains(&ConstraintViolation::UnknownCustomer { route: 0, customer: 3 }));
    }

    #[test]
    fn objective_examples() {
        let inst = t2::<f64>(10.0);
        let a = evaluate(&inst, &RoutePlan::new(vec![vec![2, 1]])).unwrap();
        assert!((a.cost - (2.0 * (20.0 + SQRT200) + 400.0)).abs() < 1e-9);
        assert!((a.cost - 468.2843).abs() < 1e-4);
        assert_eq!(a.satisfaction, 1.0);

        let b = evaluate(&inst, &RoutePlan::new(vec![vec![1], vec![2]])).unwrap();
        assert!((b.cost - 880.0).abs() < 1e-9);
        assert_eq!(b.satisfaction, 0.5);
    }

    #[test]
    fn feasibility_examples() {
        let inst = t2::<f64>(10.0);
        assert!(check_feasible(&inst, &RoutePlan::new(vec![vec![2, 1]])).is_feasible());

        let dup = check_feasible(&inst, &RoutePlan::new(vec![vec![2], vec![2]]));
        assert!(dup.violations.contains(&ConstraintViolation::MissingCustomer { customer: 1 }));
        assert!(dup.violations.contains(&ConstraintViolation::DuplicateVisit { customer: 2, count: 2 }));

        // C1 first: arrive 10, wait to 15, serve 10, reach C2 at 25 + sqrt(200) > 35.
        let late = RoutePlan::new(vec![vec![1, 2]]);
        let s = simulate_schedule(&inst, &late).unwrap();
        assert!((s.arrival(2).unwrap() - (25.0 + SQRT200)).abs() < 1e-9);
        let report = check_feasible(&inst, &late);
        assert!(!report.is_feasible());
        assert!(matches!(report.violations[0], ConstraintViolation::HardWindow { customer: 2, .. }));
    }

    #[test]
    fn fleet_and_empty_route_violations() {
        let inst = t2::<f64>(10.0);
        let fleet = crate::vrptw::FleetParams { fleet_size: 1, ..*inst.fleet() };
        let one = inst.with_fleet(fleet).unwrap();
        let r = check_feasible(&one, &RoutePlan::new(vec![vec![1], vec![2]]));
        assert!(r.violations.contains(&ConstraintViolation::FleetSize { routes: 2, fleet: 1 }));
        let r = check_feasible(&inst, &RoutePlan::new(vec![vec![2, 1], vec![]]));
        assert_eq!(r.violations, vec![ConstraintViolation::EmptyRoute { route: 1 }]);
    }

    mod props {
        use super::*;
        use crate::vrptw::{Customer, Depot, FleetParams, Point, Window, WindowSlack};
        use proptest::prelude::*;

        fn instance_strategy() -> impl Strategy<Value = Instance<f64>> {
            (2usize..8).prop_flat_map(|h| {
                prop::collection::vec((0.0..100.0f64, 0.0..100.0f64, 1u32..40, 0.0..200.0f64, 31.0..120.0f64), h)
                    .prop_map(move |rows| {
                        let customers = rows
                            .iter()
                            .enumerate()
                            .map(|(i, &(x, y, d, e, w))| Customer {
                                id: i + 1,
                                coord: Point::new(x, y),
                                demand: d as f64,
                                soft_window: Window::new(e, e + w),
                                service_time: 10.0,
                            })
                            .collect();
                        let depot = Depot { coord: Point::new(50.0, 50.0), horizon_end: 600.0 };
                        let fleet = FleetParams::with_default_costs(3, 100.0);
                        Instance::new("p", depot, customers, fleet, WindowSlack::new(0.25, 0.25)).unwrap()
                    })
            })
        }

        fn plan_strategy(h: usize) -> impl Strategy<Value = RoutePlan> {
            (Just((1..=h).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(0usize..3, h)).prop_map(
                |(perm, cuts)| {
                    let mut routes: Vec<Vec<usize>> = vec![vec![]];
                    for (c, cut) in perm.into_iter().zip(cuts) {
                        if cut == 0 && !routes.last().unwrap().is_empty() {
                            routes.push(vec![]);
                        }
                        routes.last_mut().unwrap().push(c);
                    }
                    RoutePlan::new(routes)
                },
            )
        }

        proptest! {
            #[test]
            fn two_feasibility_paths_agree(
                (inst, plan) in instance_strategy().prop_flat_map(|i| { let h = i.customer_count(); (Just(i), plan_strategy(h)) })
            ) {
                let s = simulate_schedule(&inst, &plan).unwrap();
                let r = check_feasible(&inst, &plan);
                prop_assert_eq!(s.feasible, r.is_feasible());
                let obj = evaluate(&inst, &plan).unwrap();
                prop_assert!((0.0..=1.0).contains(&obj.satisfaction));
                if s.feasible {
                    prop_assert!(obj.cost >= inst.fleet().fixed_cost);
                }
            }

            #[test]
            fn route_order_does_not_change_objectives(
                (inst, plan) in instance_strategy().prop_flat_map(|i| { let h = i.customer_count(); (Just(i), plan_strategy(h)) })
            ) {
                let mut rev = plan.clone();
                rev.routes.reverse();
                let a = evaluate(&inst, &plan).unwrap();
                let b = evaluate(&inst, &rev).unwrap();
                prop_assert!((a.cost - b.cost).abs() < 1e-9);
                prop_assert!((a.satisfaction - b.satisfaction).abs() < 1e-12);
            }
        }
    }
}
