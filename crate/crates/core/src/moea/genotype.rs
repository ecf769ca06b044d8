use rand::seq::SliceRandom;
use rand::Rng;

use super::pareto::Point;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vrptw::{evaluate, simulate_schedule, Instance, ObjectiveValues, RoutePlan};

/// Giant tour: every customer id exactly once, routes implied by the split.
pub type Genotype = Vec<usize>;

/// Checks that `tour` is a permutation of `1..=h`.
pub fn validate_genotype(tour: &[usize], h: usize) -> Result<()> {
    let mut seen = vec![false; h + 1];
    for &c in tour {
        if c == 0 || c > h || std::mem::replace(&mut seen[c], true) {
            return Err(Error::UnknownCustomer(c));
        }
    }
    if tour.len() != h {
        return Err(Error::InvalidInstance(format!("genotype has {} customers, instance has {h}", tour.len())));
    }
    Ok(())
}

/// A decoded member of the population.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual<S> {
    pub genotype: Genotype,
    pub plan: RoutePlan,
    pub objectives: ObjectiveValues<S>,
    /// Number of broken constraints; zero means feasible.
    pub violations: usize,
    /// Front index, starting at 1.
    pub rank: usize,
    pub crowding: f64,
}

impl<S: Scalar> Individual<S> {
    pub fn feasible(&self) -> bool {
        self.violations == 0
    }

    pub fn point(&self) -> Point {
        Point { f1: self.objectives.cost.as_f64(), f2: self.objectives.satisfaction.as_f64(), violations: self.violations }
    }

    /// Wraps an existing route plan; the genotype is its routes concatenated.
    pub fn from_plan(instance: &Instance<S>, plan: RoutePlan) -> Result<Self> {
        let genotype = plan.giant_tour();
        validate_genotype(&genotype, instance.customer_count())?;
        let schedule = simulate_schedule(instance, &plan)?;
        let objectives = evaluate(instance, &plan)?;
        Ok(Individual { genotype, plan, objectives, violations: schedule.violations.len(), rank: 1, crowding: 0.0 })
    }
}

/// Splits a giant tour into routes greedily: a customer joins the current route while
/// load, its hard window and the return to the depot stay feasible, otherwise it opens
/// a new route. Routes beyond the fleet size (and customers that cannot be served even
/// on a fresh route) count as violations.
pub fn decode_genotype<S: Scalar>(instance: &Instance<S>, genotype: &[usize]) -> Result<Individual<S>> {
    validate_genotype(genotype, instance.customer_count())?;
    let cap = instance.fleet().capacity;
    let horizon = instance.depot().horizon_end;
    let mut routes: Vec<Vec<usize>> = Vec::new();
    let mut route: Vec<usize> = Vec::new();
    let (mut load, mut free_at, mut at) = (S::zero(), S::zero(), 0usize);
    let mut unreachable = 0;
    for &c in genotype {
        let fits = |load: S, free_at: S, at: usize| {
            let start = (free_at + instance.travel_time(at, c)).max(instance.hard_window(c).start);
            let ok = load + instance.demand(c) <= cap
                && start <= instance.hard_window(c).end
                && start + instance.service_time(c) + instance.travel_time(c, 0) <= horizon;
            (ok, start)
        };
        let (mut ok, mut start) = fits(load, free_at, at);
        if !ok && !route.is_empty() {
            routes.push(std::mem::take(&mut route));
            (ok, start) = fits(S::zero(), S::zero(), 0);
            load = S::zero();
        }
        if !ok {
            unreachable += 1;
        }
        route.push(c);
        load += instance.demand(c);
        free_at = start + instance.service_time(c);
        at = c;
    }
    if !route.is_empty() {
        routes.push(route);
    }
    let excess = routes.len().saturating_sub(instance.fleet().fleet_size);
    let plan = RoutePlan::new(routes);
    let objectives = evaluate(instance, &plan)?;
    Ok(Individual {
        genotype: genotype.to_vec(),
        plan,
        objectives,
        violations: excess + unreachable,
        rank: 1,
        crowding: 0.0,
    })
}

/// Order crossover (OX1) with an explicit segment `lo..=hi`.
pub fn order_crossover_segment(p1: &[usize], p2: &[usize], lo: usize, hi: usize) -> Genotype {
    let n = p1.len();
    let mut child = vec![0; n];
    let mut taken = vec![false; n + 1];
    for i in lo..=hi {
        child[i] = p1[i];
        taken[p1[i]] = true;
    }
    let mut pos = (hi + 1) % n;
    for k in 0..n {
        let c = p2[(hi + 1 + k) % n];
        if !taken[c] {
            child[pos] = c;
            taken[c] = true;
            pos = (pos + 1) % n;
        }
    }
    child
}

/// Order crossover (OX1) with a random segment.
pub fn order_crossover<R: Rng + ?Sized>(p1: &[usize], p2: &[usize], rng: &mut R) -> Genotype {
    let n = p1.len();
    if n < 2 {
        return p1.to_vec();
    }
    let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
    order_crossover_segment(p1, p2, a.min(b), a.max(b))
}

/// With probability `rate`, swaps two random positions or reverses a random segment
/// (each with probability one half).
pub fn mutate<R: Rng + ?Sized>(genotype: &mut [usize], rate: f64, rng: &mut R) {
    let n = genotype.len();
    if n < 2 || !rng.gen_bool(rate.clamp(0.0, 1.0)) {
        return;
    }
    let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
    if rng.gen_bool(0.5) {
        genotype.swap(a, b);
    } else {
        genotype[a.min(b)..=a.max(b)].reverse();
    }
}

/// Uniformly random giant tour.
pub fn random_genotype<R: Rng + ?Sized>(h: usize, rng: &mut R) -> Genotype {
    let mut tour: Genotype = (1..=h).collect();
    tour.shuffle(rng);
    tour
}
