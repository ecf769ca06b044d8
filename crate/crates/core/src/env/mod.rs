//! Sequential decision process over an instance: one vehicle at a time builds routes by
//! choosing the next vertex, under feasibility masking.

mod bounds;
mod rollout;

pub use bounds::{estimate_bounds, reward, NormalizationBounds, INCOMPLETE_PENALTY};
pub use rollout::{rollout, select_action, DecodeMode, EpisodeResult, Policy, UniformPolicy};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vrptw::Instance;

/// Preference between cost (`w1`) and satisfaction (`w2`); lies on the unit simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector<S> {
    w1: S,
    w2: S,
}

impl<S: Scalar> WeightVector<S> {
    pub fn new(w1: S, w2: S) -> Result<Self> {
        let tol = S::of(1e-6);
        let ok = w1.is_finite() && w2.is_finite() && w1 >= S::zero() && w2 >= S::zero();
        if !ok || (w1 + w2 - S::one()).abs() > tol {
            return Err(Error::InvalidWeights(w1.as_f64(), w2.as_f64()));
        }
        Ok(WeightVector { w1, w2 })
    }

    /// `(w1, 1 - w1)`.
    pub fn from_cost_weight(w1: S) -> Result<Self> {
        WeightVector::new(w1, S::one() - w1)
    }

    pub fn w1(&self) -> S {
        self.w1
    }

    pub fn w2(&self) -> S {
        self.w2
    }

    pub fn cast<T: Scalar>(&self) -> WeightVector<T> {
        WeightVector { w1: T::of(self.w1.as_f64()), w2: T::of(self.w2.as_f64()) }
    }
}

/// Decision state after `step` actions.
///
/// `time` is the arrival time at the current vertex; per-vertex vectors are indexed by
/// vertex id with the depot at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpState<S> {
    load: S,
    time: S,
    current: usize,
    remaining: Vec<S>,
    visited: Vec<bool>,
    unserved: usize,
    vehicles_dispatched: usize,
    weights: WeightVector<S>,
    step: usize,
}

impl<S: Scalar> MdpState<S> {
    /// Fresh state: one vehicle, full load, at the depot at time 0.
    pub fn reset(instance: &Instance<S>, weights: WeightVector<S>) -> Self {
        let n = instance.vertex_count();
        MdpState {
            load: instance.fleet().capacity,
            time: S::zero(),
            current: 0,
            remaining: (0..n).map(|v| instance.demand(v)).collect(),
            visited: vec![false; n],
            unserved: instance.customer_count(),
            vehicles_dispatched: 1,
            weights,
            step: 0,
        }
    }

    pub fn load(&self) -> S {
        self.load
    }

    pub fn time(&self) -> S {
        self.time
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn remaining_demand(&self, vertex: usize) -> S {
        self.remaining[vertex]
    }

    pub fn remaining(&self) -> &[S] {
        &self.remaining
    }

    pub fn is_visited(&self, vertex: usize) -> bool {
        self.visited[vertex]
    }

    pub fn unserved(&self) -> usize {
        self.unserved
    }

    pub fn vehicles_dispatched(&self) -> usize {
        self.vehicles_dispatched
    }

    pub fn weights(&self) -> WeightVector<S> {
        self.weights
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn all_served(&self) -> bool {
        self.unserved == 0
    }

    /// Time the vehicle leaves the current vertex.
    fn departure(&self, instance: &Instance<S>) -> S {
        self.time.max(instance.earliest_start(self.current)) + instance.service_time(self.current)
    }

    /// Arrival time at `vertex` if the vehicle goes there next.
    pub fn arrival_at(&self, instance: &Instance<S>, vertex: usize) -> S {
        self.departure(instance) + instance.travel_time(self.current, vertex)
    }

    /// `true` marks a vertex that may not be chosen next.
    pub fn mask(&self, instance: &Instance<S>) -> Vec<bool> {
        let horizon = instance.depot().horizon_end;
        let depart = self.departure(instance);
        let mut mask = Vec::with_capacity(instance.vertex_count());
        let depot_masked =
            self.current == 0 || (self.unserved > 0 && self.vehicles_dispatched >= instance.fleet().fleet_size);
        mask.push(depot_masked);
        for v in 1..instance.vertex_count() {
            if self.visited[v] || self.remaining[v] > self.load {
                mask.push(true);
                continue;
            }
            let arrival = depart + instance.travel_time(self.current, v);
            let hard = instance.hard_window(v);
            let start = arrival.max(hard.start);
            let back = start + instance.service_time(v) + instance.travel_time(v, 0);
            mask.push(start > hard.end || back > horizon);
        }
        mask
    }

    pub fn is_terminal(&self, instance: &Instance<S>) -> bool {
        self.mask(instance).iter().all(|&m| m)
    }

    /// Episode finished with every customer served and the vehicle back home.
    pub fn is_success(&self) -> bool {
        self.unserved == 0 && self.current == 0
    }

    /// Moves the vehicle to `action`, which must be unmasked.
    pub fn apply(&mut self, instance: &Instance<S>, action: usize) -> Result<()> {
        if action >= instance.vertex_count() || self.mask(instance)[action] {
            return Err(Error::MaskedAction { action });
        }
        if action == 0 {
            self.time = S::zero();
            self.load = instance.fleet().capacity;
            if self.unserved > 0 {
                self.vehicles_dispatched += 1;
            }
        } else {
            self.time = self.arrival_at(instance, action);
            self.load -= self.remaining[action];
            self.remaining[action] = S::zero();
            self.visited[action] = true;
            self.unserved -= 1;
        }
        self.current = action;
        self.step += 1;
        Ok(())
    }

    /// Functional form of [`MdpState::apply`].
    pub fn step(&self, instance: &Instance<S>, action: usize) -> Result<Self> {
        let mut next = self.clone();
        next.apply(instance, action)?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vrptw::fixtures::t2;
    use proptest::prelude::*;

    fn half() -> WeightVector<f64> {
        WeightVector::new(0.5, 0.5).unwrap()
    }

    #[test]
    fn weights_must_lie_on_simplex() {
        assert!(WeightVector::new(1.0, 0.0).is_ok());
        assert!(WeightVector::new(0.0, 1.0).is_ok());
        assert!(matches!(WeightVector::new(0.6, 0.6), Err(Error::InvalidWeights(..))));
        assert!(WeightVector::new(-0.1, 1.1).is_err());
    }

    #[test]
    fn reset_starts_full_at_depot() {
        let inst = t2::<f64>(10.0);
        let s = MdpState::reset(&inst, half());
        assert_eq!((s.load(), s.time(), s.current(), s.vehicles_dispatched()), (10.0, 0.0, 0, 1));
        assert_eq!(s.remaining(), &[0.0, 5.0, 5.0]);
    }

    #[test]
    fn capacity_rule_masks_large_demand() {
        let inst = t2::<f64>(10.0);
        let mut s = MdpState::reset(&inst, half());
        s.load = 3.0;
        s.remaining[2] = 2.0;
        assert_eq!(s.mask(&inst), vec![true, true, false]);
    }

    #[test]
    fn everything_served_at_depot_is_terminal() {
        let inst = t2::<f64>(10.0);
        let s = MdpState::reset(&inst, half());
        let s = s.step(&inst, 2).unwrap().step(&inst, 1).unwrap().step(&inst, 0).unwrap();
        assert!(s.is_terminal(&inst));
        assert!(s.is_success());
        assert_eq!(s.vehicles_dispatched(), 1);
    }

    #[test]
    fn transition_times() {
        let inst = t2::<f64>(10.0);
        let s = MdpState::reset(&inst, half()).step(&inst, 2).unwrap();
        assert_eq!((s.time(), s.load()), (10.0, 5.0));
        // Service at C2 starts at 10 (E = 5), lasts 5, then √200 to C1.
        let arrival = 10.0 + 5.0 + 200f64.sqrt();
        assert!((s.arrival_at(&inst, 1) - arrival).abs() < 1e-12);
        assert!(!s.mask(&inst)[1]);
        let back = s.step(&inst, 0).unwrap();
        assert_eq!((back.time(), back.load(), back.vehicles_dispatched()), (0.0, 10.0, 2));
    }

    #[test]
    fn depot_self_loop_is_rejected() {
        let inst = t2::<f64>(10.0);
        let s = MdpState::reset(&inst, half());
        assert!(matches!(s.step(&inst, 0), Err(Error::MaskedAction { action: 0 })));
    }

    #[test]
    fn exhausted_fleet_cannot_return_early() {
        let inst = t2::<f64>(10.0);
        let s = MdpState::reset(&inst, half()).step(&inst, 2).unwrap().step(&inst, 0).unwrap();
        assert_eq!(s.vehicles_dispatched(), 2);
        let s = s.step(&inst, 1).unwrap();
        assert!(!s.mask(&inst)[0]);
        let mut third = MdpState::reset(&inst, half()).step(&inst, 1).unwrap();
        third.vehicles_dispatched = 2;
        assert!(third.mask(&inst)[0]);
    }

    proptest! {
        #[test]
        fn random_walks_conserve_demand_and_time(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let inst: Instance<f64> = crate::io::generate_instance(&crate::io::GeneratorConfig::with_customers(8, seed)).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s = MdpState::reset(&inst, half());
            let total = inst.total_demand();
            let mut served = 0.0;
            let mut steps = 0;
            while !s.is_terminal(&inst) {
                let open: Vec<usize> = s.mask(&inst).iter().enumerate().filter(|(_, m)| !**m).map(|(i, _)| i).collect();
                let a = open[rng.gen_range(0..open.len())];
                let before = s.time();
                let was_depot = s.current() == 0;
                served += s.remaining_demand(a);
                s.apply(&inst, a).unwrap();
                steps += 1;
                if a == 0 {
                    prop_assert_eq!(s.time(), 0.0);
                } else if !was_depot {
                    prop_assert!(s.time() >= before);
                }
                let left: f64 = s.remaining().iter().sum();
                prop_assert!((left + served - total).abs() < 1e-9);
                prop_assert!(s.load() >= 0.0 && s.load() <= inst.fleet().capacity);
                prop_assert!(s.vehicles_dispatched() <= inst.fleet().fleet_size);
                for v in 1..inst.vertex_count() {
                    prop_assert_eq!(s.is_visited(v), s.remaining_demand(v) == 0.0);
                }
            }
            prop_assert!(steps <= 2 * inst.customer_count() + 1);
        }
    }
}
