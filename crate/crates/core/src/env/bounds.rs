use serde::{Deserialize, Serialize};

use super::WeightVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vrptw::{Instance, ObjectiveValues};

/// Reward of an episode that leaves customers unserved.
pub const INCOMPLETE_PENALTY: f64 = -1000.0;

/// Objective ranges used to put cost and satisfaction on a common scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds<S> {
    pub f1_min: S,
    pub f1_max: S,
    pub f2_min: S,
    pub f2_max: S,
}

impl<S: Scalar> NormalizationBounds<S> {
    pub fn new(f1_min: S, f1_max: S) -> Result<Self> {
        if !(f1_min < f1_max) || !f1_min.is_finite() || !f1_max.is_finite() {
            return Err(Error::Bounds(format!("need f1_min < f1_max, got {f1_min} and {f1_max}")));
        }
        Ok(NormalizationBounds { f1_min, f1_max, f2_min: S::zero(), f2_max: S::one() })
    }

    /// Cost mapped to `[0, 1]`, clamped.
    pub fn normalized_cost(&self, f1: S) -> S {
        ((f1 - self.f1_min) / (self.f1_max - self.f1_min)).max(S::zero()).min(S::one())
    }
}

/// Weighted scalar reward; `None` stands for an episode with unserved customers.
pub fn reward<S: Scalar>(
    objectives: Option<&ObjectiveValues<S>>,
    bounds: &NormalizationBounds<S>,
    weights: WeightVector<S>,
) -> S {
    match objectives {
        None => S::of(INCOMPLETE_PENALTY),
        Some(o) => {
            let f2 = (o.satisfaction - bounds.f2_min) / (bounds.f2_max - bounds.f2_min);
            -weights.w1() * bounds.normalized_cost(o.cost) + weights.w2() * f2
        }
    }
}

/// Cost bounds for an instance.
///
/// The lower bound charges one vehicle for a round trip to the farthest customer. The
/// upper bound is the cost of a nearest-neighbour construction that always moves to the
/// feasible customer with the earliest service start and opens a new vehicle (without a
/// fleet limit) on a dead end. When the two coincide the upper bound is widened by one
/// vehicle cost.
pub fn estimate_bounds<S: Scalar>(instance: &Instance<S>) -> Result<NormalizationBounds<S>> {
    let fleet = instance.fleet();
    let h = instance.customer_count();
    let far = (1..=h).map(|c| instance.distance(0, c)).fold(S::zero(), S::max);
    let f1_min = fleet.fixed_cost + fleet.unit_cost * S::of(2.0) * far;

    let horizon = instance.depot().horizon_end;
    let mut served = vec![false; h + 1];
    let mut left = h;
    let mut distance = S::zero();
    let mut routes = 0usize;
    while left > 0 {
        routes += 1;
        let (mut cur, mut depart, mut load) = (0usize, S::zero(), fleet.capacity);
        loop {
            let mut best: Option<(S, usize)> = None;
            for c in 1..=h {
                if served[c] || instance.demand(c) > load {
                    continue;
                }
                let hard = instance.hard_window(c);
                let start = (depart + instance.travel_time(cur, c)).max(hard.start);
                let back = start + instance.service_time(c) + instance.travel_time(c, 0);
                if start > hard.end || back > horizon {
                    continue;
                }
                if best.map_or(true, |(b, _)| start < b) {
                    best = Some((start, c));
                }
            }
            let Some((start, c)) = best else { break };
            distance += instance.distance(cur, c);
            served[c] = true;
            left -= 1;
            load -= instance.demand(c);
            depart = start + instance.service_time(c);
            cur = c;
        }
        if cur == 0 {
            let stuck: Vec<usize> = (1..=h).filter(|&c| !served[c]).collect();
            return Err(Error::Bounds(format!("customers {stuck:?} cannot be served by a single vehicle")));
        }
        distance += instance.distance(cur, 0);
    }
    let mut f1_max = fleet.unit_cost * distance + fleet.fixed_cost * S::of_usize(routes);
    if !(f1_max > f1_min) {
        f1_max = f1_min + fleet.fixed_cost.max(S::one());
    }
    NormalizationBounds::new(f1_min, f1_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vrptw::fixtures::t2;

    #[test]
    fn t2_lower_bound() {
        let b = estimate_bounds(&t2::<f64>(10.0)).unwrap();
        assert_eq!(b.f1_min, 440.0);
        assert_eq!((b.f2_min, b.f2_max), (0.0, 1.0));
        // Oracle: C2 first (start 10), then C1 at 10+5+√200, back 10.
        let oracle = 400.0 + 2.0 * (10.0 + 200f64.sqrt() + 10.0);
        assert!((b.f1_max - oracle).abs() < 1e-9);
    }

    #[test]
    fn penalty_for_unserved() {
        let b = NormalizationBounds::new(0.0, 1.0).unwrap();
        assert_eq!(reward(None, &b, WeightVector::new(0.5, 0.5).unwrap()), -1000.0);
    }

    #[test]
    fn weighted_sum() {
        let b = NormalizationBounds::new(100.0f64, 200.0).unwrap();
        let o = ObjectiveValues { cost: 140.0, satisfaction: 0.8 };
        let r = reward(Some(&o), &b, WeightVector::new(0.5, 0.5).unwrap());
        assert!((r - 0.2).abs() < 1e-12);
        let best = ObjectiveValues { cost: 100.0, satisfaction: 0.3 };
        assert_eq!(reward(Some(&best), &b, WeightVector::new(1.0, 0.0).unwrap()), 0.0);
        let worse = ObjectiveValues { cost: 1e6, satisfaction: 0.3 };
        assert_eq!(reward(Some(&worse), &b, WeightVector::new(1.0, 0.0).unwrap()), -1.0);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(NormalizationBounds::new(5.0, 5.0).is_err());
    }

    #[test]
    fn single_customer_bounds_are_widened() {
        let inst = t2::<f64>(10.0).truncated(1).unwrap();
        let b = estimate_bounds(&inst).unwrap();
        assert_eq!(b.f1_min, 440.0);
        assert_eq!(b.f1_max, 840.0);
    }
}
