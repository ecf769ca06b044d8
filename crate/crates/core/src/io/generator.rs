use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vrptw::{Customer, Depot, FleetParams, Instance, Point, Window, WindowSlack};

/// Distribution of randomly generated training instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub customer_count: usize,
    pub coord_range: (f64, f64),
    /// Inclusive integer range.
    pub demand_range: (u32, u32),
    pub window_horizon: (f64, f64),
    /// Soft windows are strictly wider than this.
    pub min_window_width: f64,
    pub capacity: f64,
    pub service_time: f64,
    pub slack: (f64, f64),
    pub unit_cost: f64,
    pub fixed_cost: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            customer_count: 20,
            coord_range: (0.0, 100.0),
            demand_range: (1, 40),
            window_horizon: (0.0, 240.0),
            min_window_width: 30.0,
            capacity: 200.0,
            service_time: 10.0,
            slack: (0.25, 0.25),
            unit_cost: 2.0,
            fixed_cost: 400.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn with_customers(customer_count: usize, seed: u64) -> Self {
        GeneratorConfig { customer_count, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.customer_count == 0 {
            return bad("customer_count must be at least 1");
        }
        if !(self.coord_range.0 < self.coord_range.1) {
            return bad("coord_range must be increasing");
        }
        if self.demand_range.0 < 1 || self.demand_range.0 > self.demand_range.1 {
            return bad("demand_range must satisfy 1 <= min <= max");
        }
        if !(self.demand_range.1 as f64 <= self.capacity) {
            return bad("maximum demand must not exceed capacity");
        }
        let span = self.window_horizon.1 - self.window_horizon.0;
        if !(self.min_window_width >= 0.0 && self.min_window_width + 1.0 <= span) {
            return bad("min_window_width must leave room inside the window horizon");
        }
        if self.service_time < 0.0 || self.slack.0 < 0.0 || self.slack.1 < 0.0 {
            return bad("service time and slack must be non-negative");
        }
        Ok(())
    }
}

/// Samples one instance; the same config (including seed) always yields the same instance.
///
/// The depot is placed uniformly in the square. Each soft window starts uniformly in
/// `[h0, h1 - w_min - 1]` and has a width uniform on `(w_min, h1 - e]`; a window is redrawn
/// when its hard end lies before the direct travel time from the depot. The depot horizon
/// is the latest time any customer served inside its hard window can be back.
pub fn generate_instance<S: Scalar>(config: &GeneratorConfig) -> Result<Instance<S>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (c0, c1) = config.coord_range;
    let (h0, h1) = config.window_horizon;
    let w_min = config.min_window_width;
    let coord = |rng: &mut ChaCha8Rng| Point::new(rng.gen_range(c0..=c1), rng.gen_range(c0..=c1));

    let depot_pt: Point<f64> = coord(&mut rng);
    let mut raw = Vec::with_capacity(config.customer_count);
    for id in 1..=config.customer_count {
        let pt = coord(&mut rng);
        let demand = rng.gen_range(config.demand_range.0..=config.demand_range.1) as f64;
        let reach = pt.distance(&depot_pt);
        let window = loop {
            let e = rng.gen_range(h0..=(h1 - w_min - 1.0));
            let max_w = h1 - e;
            let u: f64 = rng.gen();
            let width = max_w - u * (max_w - w_min);
            let late = e + width + config.slack.1 * width;
            if late > reach + 1e-3 {
                break Window::new(e, e + width);
            }
        };
        raw.push((id, pt, demand, window));
    }
    let horizon = raw
        .iter()
        .map(|(_, pt, _, w)| w.end + config.slack.1 * w.width() + config.service_time + pt.distance(&depot_pt))
        .fold(h1, f64::max)
        .ceil();
    let total: f64 = raw.iter().map(|r| r.2).sum();
    let fleet_size = (total / config.capacity).ceil() as usize + 2;

    let s = S::of;
    let customers = raw
        .into_iter()
        .map(|(id, pt, demand, w)| Customer {
            id,
            coord: Point::new(s(pt.x), s(pt.y)),
            demand: s(demand),
            soft_window: Window::new(s(w.start), s(w.end)),
            service_time: s(config.service_time),
        })
        .collect();
    let fleet = FleetParams {
        fleet_size,
        capacity: s(config.capacity),
        unit_cost: s(config.unit_cost),
        fixed_cost: s(config.fixed_cost),
        speed: S::one(),
    };
    Instance::new(
        format!("gen-{}-{}", config.customer_count, config.seed),
        Depot { coord: Point::new(s(depot_pt.x), s(depot_pt.y)), horizon_end: s(horizon) },
        customers,
        fleet,
        WindowSlack::new(s(config.slack.0), s(config.slack.1)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let cfg = GeneratorConfig::with_customers(20, 7);
        let a: Instance<f32> = generate_instance(&cfg).unwrap();
        let b: Instance<f32> = generate_instance(&cfg).unwrap();
        assert_eq!(a, b);
        let c: Instance<f32> = generate_instance(&GeneratorConfig::with_customers(20, 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_customer_instance() {
        let inst: Instance<f64> = generate_instance(&GeneratorConfig::with_customers(1, 0)).unwrap();
        assert_eq!(inst.customer_count(), 1);
        assert_eq!(inst.fleet().fleet_size, 3);
    }

    #[test]
    fn sampled_customers_follow_the_distribution() {
        let mut n = 0;
        let mut seed = 0;
        while n < 10_000 {
            let inst: Instance<f64> = generate_instance(&GeneratorConfig::with_customers(100, seed)).unwrap();
            for c in inst.customers() {
                assert!((1.0..=40.0).contains(&c.demand) && c.demand.fract() == 0.0);
                assert!(c.soft_window.width() > 30.0);
                assert!(c.soft_window.start >= 0.0 && c.soft_window.end <= 240.0);
                assert!(c.coord.x >= 0.0 && c.coord.x <= 100.0 && c.coord.y >= 0.0 && c.coord.y <= 100.0);
                assert!(inst.hard_window(c.id).end >= inst.travel_time(0, c.id));
            }
            n += inst.customer_count();
            seed += 1;
        }
    }

    #[test]
    fn rejects_inconsistent_config() {
        let cfg = GeneratorConfig { capacity: 30.0, ..GeneratorConfig::default() };
        assert!(generate_instance::<f64>(&cfg).is_err());
        let cfg = GeneratorConfig { min_window_width: 240.0, ..GeneratorConfig::default() };
        assert!(generate_instance::<f64>(&cfg).is_err());
    }
}
