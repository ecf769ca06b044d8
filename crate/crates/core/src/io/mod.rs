//! File formats: Solomon benchmarks, generated instances, fronts and instance dumps.

mod front;
mod generator;
mod solomon;

pub use front::{
    front_from_csv, front_from_json, front_to_csv, front_to_json, read_front, write_front, FrontFormat, FrontRecord,
    Provenance,
};
pub use generator::{generate_instance, GeneratorConfig};
pub use solomon::{parse_solomon, read_solomon, SolomonInstance, SolomonOptions};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vrptw::{Customer, Depot, FleetParams, Instance, Window, WindowSlack};

/// Serializable snapshot of an instance.
///
/// ```text
/// { "name": str,
///   "depot": { "coord": {"x","y"}, "horizon_end" },
///   "customers": [ { "id", "coord", "demand", "soft_window": {"start","end"}, "service_time" } ],
///   "fleet": { "fleet_size", "capacity", "unit_cost", "fixed_cost", "speed" },
///   "slack": { "early", "late" },
///   "hard_windows": [ {"start","end"} ] }
/// ```
///
/// `hard_windows` is informational; loading recomputes it from the soft windows and slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDump {
    pub name: String,
    pub depot: Depot<f64>,
    pub customers: Vec<Customer<f64>>,
    pub fleet: FleetParams<f64>,
    pub slack: WindowSlack<f64>,
    pub hard_windows: Vec<Window<f64>>,
}

impl InstanceDump {
    pub fn from_instance<S: Scalar>(instance: &Instance<S>) -> Self {
        let i = instance.cast::<f64>();
        InstanceDump {
            name: i.name().to_string(),
            depot: *i.depot(),
            customers: i.customers().to_vec(),
            fleet: *i.fleet(),
            slack: i.slack(),
            hard_windows: i.hard_windows().to_vec(),
        }
    }

    pub fn to_instance<S: Scalar>(&self) -> Result<Instance<S>> {
        let inst = Instance::new(self.name.clone(), self.depot, self.customers.clone(), self.fleet, self.slack)?;
        Ok(inst.cast())
    }
}

pub fn write_instance_json<S: Scalar>(instance: &Instance<S>, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&InstanceDump::from_instance(instance))? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_instance_json<S: Scalar>(path: &Path) -> Result<Instance<S>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dump: InstanceDump = serde_json::from_str(&text)?;
    dump.to_instance()
}
