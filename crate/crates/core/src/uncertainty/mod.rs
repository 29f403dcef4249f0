//! Stochastic inputs: residential loads, on/off availability and PHEV
//! charging stations, compiled from a scenario file into a sampler.

mod samples;
mod scenario;
pub mod station;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use samples::{build_samples, SampleMatrix};
pub use scenario::{
    AvailabilityTarget, EngineSettings, InputVariable, Scenario, ScenarioSpec, VariableKind,
};
pub use station::{sample_station_demand, PhevStationModel, StationDemand};

/// Normally distributed node load; P and Q share the relative deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadUncertainty {
    pub node: u32,
    /// kW
    pub mean_p: f64,
    /// kvar
    pub mean_q: f64,
    /// Standard deviation as a fraction of the mean.
    pub std_fraction: f64,
}

impl LoadUncertainty {
    /// Relative load level for a standard-normal `draw`, truncated at zero.
    pub fn scale(&self, draw: f64) -> f64 {
        (1.0 + self.std_fraction * draw).max(0.0)
    }
}

/// `(p, q)` for one standard-normal draw.
pub fn sample_load(model: &LoadUncertainty, draw: f64) -> (f64, f64) {
    let k = model.scale(draw);
    (model.mean_p * k, model.mean_q * k)
}

/// Bernoulli on/off state of a station or industrial load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityModel {
    pub node: u32,
    pub probability_on: f64,
    #[serde(default)]
    pub target: AvailabilityTarget,
}

impl AvailabilityModel {
    pub fn std(&self) -> f64 {
        (self.probability_on * (1.0 - self.probability_on)).sqrt()
    }

    /// Skewness of the Bernoulli state; zero when degenerate.
    pub fn skewness(&self) -> f64 {
        let s = self.std();
        if s > 0.0 {
            (1.0 - 2.0 * self.probability_on) / s
        } else {
            0.0
        }
    }
}

pub fn sample_availability<R: Rng + ?Sized>(model: &AvailabilityModel, rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    u8::from(u < model.probability_on)
}
