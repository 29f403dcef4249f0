//! PHEV charging-station demand.
//!
//! A station is a bank of `c` identical chargers fed by Poisson arrivals.
//! Each vehicle's recharge energy follows from its battery size, its daily
//! mileage (lognormal) and the resulting state of charge on arrival; the
//! mean charging time sets the service rate of an M/M/c queue whose number
//! of vehicles in service gives the station demand as a multiple of the
//! charger rating.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

/// Draws used to estimate the mean recharge energy of a fleet.
const FLEET_DRAWS: u64 = 1 << 16;
/// Fixed seed for fleet statistics; they are model constants, not samples.
const FLEET_SEED: u64 = 0x5eed_f1ee_7000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryCapacity {
    pub mean_kwh: f64,
    pub std_kwh: f64,
}

/// Parameters of `ln(daily miles)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MileageLognormal {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum QueueMode {
    /// Stationary M/M/c occupancy at the study hour.
    #[default]
    SteadyState,
    /// Simulate the station from empty for `horizon_hours` with per-vehicle
    /// service times and report the vehicles in service at the end.
    DiscreteEvent { horizon_hours: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhevStationModel {
    pub node: u32,
    pub level: u8,
    /// V
    pub charger_voltage: f64,
    /// A
    pub charger_current: f64,
    /// Number of chargers (servers).
    pub chargers: u32,
    /// Vehicles per hour.
    pub arrival_rate: f64,
    pub battery: BatteryCapacity,
    /// Nominal all-electric range of a vehicle with mean battery, miles.
    pub all_electric_range: f64,
    pub mileage: MileageLognormal,
    /// Nominal consumption, kWh/mile.
    pub energy_per_mile: f64,
    pub charger_efficiency: f64,
    /// Extra kWh/mile per kWh of battery above the fleet mean; links
    /// consumption (operating status) to battery size.
    #[serde(default)]
    pub capacity_slope: f64,
    #[serde(default)]
    pub queue: QueueMode,
}

impl PhevStationModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("station at node {}: {what}", self.node)));
        if !(1..=3).contains(&self.level) {
            return bad("level must be 1, 2 or 3");
        }
        if self.chargers < 1 {
            return bad("needs at least one charger");
        }
        if !(self.arrival_rate > 0.0) {
            return bad("arrival rate must be positive");
        }
        if !(self.mileage.sigma > 0.0) {
            return bad("mileage lognormal sigma must be positive");
        }
        if !(self.charger_efficiency > 0.0 && self.charger_efficiency <= 1.0) {
            return bad("charger efficiency must lie in (0, 1]");
        }
        if !(self.charger_voltage > 0.0 && self.charger_current > 0.0) {
            return bad("charger rating must be positive");
        }
        if !(self.battery.mean_kwh > 0.0 && self.battery.std_kwh >= 0.0) {
            return bad("battery capacity distribution is invalid");
        }
        if !(self.all_electric_range > 0.0 && self.energy_per_mile > 0.0) {
            return bad("range and consumption must be positive");
        }
        Ok(())
    }

    /// Rated power of one charger, kW.
    pub fn charger_power_kw(&self) -> f64 {
        self.charger_voltage * self.charger_current * 1e-3
    }

    /// Consumption of a vehicle with the given battery, kWh/mile.
    pub fn consumption(&self, battery_kwh: f64) -> f64 {
        let epm = self.energy_per_mile + self.capacity_slope * (battery_kwh - self.battery.mean_kwh);
        epm.max(0.05 * self.energy_per_mile)
    }

    /// All-electric range of a vehicle with the given battery, miles.
    pub fn range(&self, battery_kwh: f64) -> f64 {
        self.all_electric_range * (battery_kwh / self.battery.mean_kwh)
            * (self.energy_per_mile / self.consumption(battery_kwh))
    }

    /// Energy needed to refill a battery after `miles` of driving, kWh.
    pub fn recharge_energy(&self, battery_kwh: f64, miles: f64) -> f64 {
        let soc = (1.0 - miles / self.range(battery_kwh)).max(0.0);
        battery_kwh * (1.0 - soc)
    }

    /// One vehicle: battery size (truncated normal, > 0) and recharge energy.
    pub fn sample_vehicle(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let battery = if self.battery.std_kwh > 0.0 {
            let dist = Normal::new(self.battery.mean_kwh, self.battery.std_kwh).unwrap();
            loop {
                let b = dist.sample(rng);
                if b > 0.0 {
                    break b;
                }
            }
        } else {
            self.battery.mean_kwh
        };
        let miles = LogNormal::new(self.mileage.mu, self.mileage.sigma).unwrap().sample(rng);
        (battery, self.recharge_energy(battery, miles))
    }

    /// Charging time of a vehicle needing `energy` kWh, hours.
    pub fn service_time(&self, energy_kwh: f64) -> f64 {
        energy_kwh / (self.charger_efficiency * self.charger_power_kw())
    }

    /// Build the occupancy model used for sampling.
    pub fn prepare(&self) -> Result<StationDemand> {
        self.validate()?;
        let mut rng = substream(FLEET_SEED, u64::from(self.node), 0);
        let mut sum = 0.0;
        for _ in 0..FLEET_DRAWS {
            sum += self.sample_vehicle(&mut rng).1;
        }
        let mean_energy = sum / FLEET_DRAWS as f64;
        let mean_service = self.service_time(mean_energy);
        let service_rate = if mean_service > 0.0 { 1.0 / mean_service } else { f64::INFINITY };
        let c = self.chargers as usize;
        let offered = self.arrival_rate / service_rate;
        let stable = offered < c as f64;
        if !stable {
            log::warn!(
                "station at node {}: offered load {offered:.3} erlang exceeds {c} chargers; occupancy pinned at {c}",
                self.node
            );
        }
        let occupancy = match self.queue {
            QueueMode::SteadyState => mmc_busy_servers(offered, c),
            QueueMode::DiscreteEvent { horizon_hours } => {
                self.simulated_occupancy(horizon_hours)
            }
        };
        Ok(StationDemand {
            model: self.clone(),
            charger_kw: self.charger_power_kw(),
            mean_energy,
            service_rate,
            stable,
            cdf: cumulative(&occupancy),
            occupancy,
        })
    }

    /// Vehicles in service after `horizon` hours from an empty station.
    fn run_station(&self, horizon: f64, rng: &mut ChaCha8Rng) -> usize {
        let c = self.chargers as usize;
        let inter = Exp::new(self.arrival_rate).unwrap();
        let mut free_at = vec![0.0_f64; c];
        let mut t = 0.0;
        loop {
            t += inter.sample(rng);
            if t >= horizon {
                break;
            }
            let (k, start) = free_at
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, &f)| (k, f.max(t)))
                .unwrap();
            let (_, energy) = self.sample_vehicle(rng);
            free_at[k] = start + self.service_time(energy);
        }
        // A charger is delivering power if it started before the horizon and
        // has not finished.
        free_at.iter().filter(|&&f| f > horizon).count()
    }

    fn simulated_occupancy(&self, horizon_hours: u32) -> Vec<f64> {
        let c = self.chargers as usize;
        let mut counts = vec![0u64; c + 1];
        let mut rng = substream(FLEET_SEED, u64::from(self.node), 1);
        let draws = 1u64 << 14;
        for _ in 0..draws {
            counts[self.run_station(f64::from(horizon_hours), &mut rng)] += 1;
        }
        counts.iter().map(|&k| k as f64 / draws as f64).collect()
    }
}

/// Stationary distribution of the number of busy servers of an M/M/c queue
/// with `offered` erlangs; all mass at `c` when the queue is unstable.
pub fn mmc_busy_servers(offered: f64, c: usize) -> Vec<f64> {
    let mut p = vec![0.0; c + 1];
    if offered <= 0.0 {
        p[0] = 1.0;
        return p;
    }
    let rho = offered / c as f64;
    if rho >= 1.0 {
        p[c] = 1.0;
        return p;
    }
    // term_k = a^k / k!, relative to term_0 = 1
    let mut term = 1.0;
    for (k, slot) in p.iter_mut().enumerate().take(c) {
        if k > 0 {
            term *= offered / k as f64;
        }
        *slot = term;
    }
    term *= offered / c as f64;
    p[c] = term / (1.0 - rho);
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = p
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

/// Sampling-ready station: occupancy distribution and charger rating.
#[derive(Debug, Clone)]
pub struct StationDemand {
    model: PhevStationModel,
    charger_kw: f64,
    mean_energy: f64,
    service_rate: f64,
    stable: bool,
    occupancy: Vec<f64>,
    cdf: Vec<f64>,
}

impl StationDemand {
    pub fn model(&self) -> &PhevStationModel {
        &self.model
    }

    pub fn charger_kw(&self) -> f64 {
        self.charger_kw
    }

    /// Fleet mean recharge energy, kWh.
    pub fn mean_energy(&self) -> f64 {
        self.mean_energy
    }

    /// Vehicles per hour one charger completes.
    pub fn service_rate(&self) -> f64 {
        self.service_rate
    }

    pub fn is_stable(&self) -> bool {
        self.stable
    }

    /// P(n vehicles in service), n = 0..=c.
    pub fn occupancy(&self) -> &[f64] {
        &self.occupancy
    }

    pub fn sample_occupancy<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.iter().position(|&f| u < f).unwrap_or(self.cdf.len() - 1)
    }

    /// Mean, standard deviation and skewness of the occupancy count.
    pub fn occupancy_moments(&self) -> (f64, f64, f64) {
        let mean: f64 = self.occupancy.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let central = |j: i32| -> f64 {
            self.occupancy.iter().enumerate().map(|(k, p)| p * (k as f64 - mean).powi(j)).sum()
        };
        let var = central(2);
        let std = var.sqrt();
        let skew = if std > 0.0 { central(3) / (var * std) } else { 0.0 };
        (mean, std, skew)
    }
}

/// Station demand in kW for one realization.
pub fn sample_station_demand<R: Rng + ?Sized>(station: &StationDemand, rng: &mut R) -> f64 {
    station.sample_occupancy(rng) as f64 * station.charger_kw
}
