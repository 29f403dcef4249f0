use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::station::{PhevStationModel, StationDemand};
use super::{AvailabilityModel, LoadUncertainty};
use crate::density::TuningSettings;
use crate::error::{Error, Result};
use crate::feeder::{load_feeder, Feeder, NodeKind};
use crate::solver::{InjectionVector, SolverConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AvailabilityTarget {
    /// Zeroes the charging station(s) at the node.
    #[default]
    Station,
    /// Zeroes the load(s) at the node, e.g. an industrial plant.
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineSettings {
    /// FSDS sample count.
    pub k_n: usize,
    pub mcs_iterations: usize,
    pub seed: u64,
    /// Size of the MCS run used as the reference density when tuning.
    pub calibration_samples: usize,
    /// Fixed FSDS bandwidth, p.u.; tuned per output when absent.
    pub lambda: Option<f64>,
    pub solver: SolverConfig,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            k_n: 45,
            mcs_iterations: 5000,
            seed: 1,
            calibration_samples: 5000,
            lambda: None,
            solver: SolverConfig::default(),
        }
    }
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Feeder file, relative to the scenario file.
    pub feeder: PathBuf,
    /// Relative STD applied to every loaded node not listed in `loads`.
    #[serde(default)]
    pub load_std_fraction: Option<f64>,
    #[serde(default)]
    pub loads: Vec<LoadUncertainty>,
    /// Draw P and Q of a node independently instead of sharing one draw.
    #[serde(default)]
    pub independent_pq: bool,
    #[serde(default)]
    pub availability: Vec<AvailabilityModel>,
    #[serde(default)]
    pub stations: Vec<PhevStationModel>,
    #[serde(default)]
    pub engine: EngineSettings,
    #[serde(default)]
    pub tuning: TuningSettings,
    /// Nodes whose voltage PDFs are reported.
    #[serde(default)]
    pub outputs: Vec<u32>,
}

impl ScenarioSpec {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let mut spec: ScenarioSpec = serde_json::from_str(&text)
            .map_err(|source| Error::Parse { path: path.to_path_buf(), source })?;
        if spec.feeder.is_relative() {
            if let Some(dir) = path.parent() {
                spec.feeder = dir.join(&spec.feeder);
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadComponent {
    Both,
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableKind {
    /// Standard-normal draw of load `load`.
    LoadDraw { load: usize, component: LoadComponent },
    /// Vehicles in service at station `station`.
    Occupancy { station: usize },
    /// On/off state of availability entry `entry`.
    Availability { entry: usize },
}

/// One primitive random input with its first three moments.
#[derive(Debug, Clone, PartialEq)]
pub struct InputVariable {
    pub name: String,
    pub kind: VariableKind,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
}

#[derive(Debug, Clone)]
struct ResolvedLoad {
    node: usize,
    model: LoadUncertainty,
    draw_p: Option<usize>,
    draw_q: Option<usize>,
    switches: Vec<usize>,
}

#[derive(Debug, Clone)]
struct ResolvedStation {
    node: usize,
    demand: StationDemand,
    variable: usize,
    switches: Vec<usize>,
}

/// Scenario compiled against its feeder: the ordered list of primitive
/// random variables and the map from their values to nodal injections.
#[derive(Debug, Clone)]
pub struct Scenario {
    spec: ScenarioSpec,
    feeder: Arc<Feeder>,
    loads: Vec<ResolvedLoad>,
    stations: Vec<ResolvedStation>,
    availability: Vec<AvailabilityModel>,
    switch_vars: Vec<usize>,
    variables: Vec<InputVariable>,
    labels: Vec<String>,
    outputs: Vec<usize>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec = ScenarioSpec::from_file(path)?;
        let feeder = load_feeder(&spec.feeder)?;
        Scenario::new(spec, Arc::new(feeder))
    }

    pub fn new(spec: ScenarioSpec, feeder: Arc<Feeder>) -> Result<Self> {
        let node_index = |id: u32, what: &str| -> Result<usize> {
            let i = feeder
                .index_of(id)
                .ok_or_else(|| Error::InvalidInput(format!("{what} references unknown node {id}")))?;
            if i == feeder.slack() {
                return Err(Error::InvalidInput(format!("{what} placed at the slack node {id}")));
            }
            Ok(i)
        };

        // Loads: explicit entries win, the blanket STD covers the rest.
        let mut load_models: Vec<LoadUncertainty> = Vec::new();
        for model in &spec.loads {
            node_index(model.node, "load")?;
            if !(model.std_fraction >= 0.0) || model.mean_p < 0.0 || model.mean_q < 0.0 {
                return Err(Error::InvalidInput(format!("load at node {} is invalid", model.node)));
            }
            if load_models.iter().any(|m| m.node == model.node) {
                return Err(Error::InvalidInput(format!("load at node {} listed twice", model.node)));
            }
            load_models.push(*model);
        }
        let blanket = spec.load_std_fraction.unwrap_or(0.0);
        if !(blanket >= 0.0) {
            return Err(Error::InvalidInput("load_std_fraction must be non-negative".into()));
        }
        for node in feeder.nodes() {
            let loaded = node.base_load_p > 0.0 || node.base_load_q > 0.0;
            if node.kind != NodeKind::Slack && loaded && !load_models.iter().any(|m| m.node == node.id) {
                load_models.push(LoadUncertainty {
                    node: node.id,
                    mean_p: node.base_load_p,
                    mean_q: node.base_load_q,
                    std_fraction: blanket,
                });
            }
        }
        load_models.sort_by_key(|m| feeder.index_of(m.node));

        for a in &spec.availability {
            node_index(a.node, "availability")?;
            if !(0.0..=1.0).contains(&a.probability_on) {
                return Err(Error::InvalidInput(format!(
                    "availability at node {} must be a probability",
                    a.node
                )));
            }
        }

        let mut variables = Vec::new();
        let mut loads = Vec::with_capacity(load_models.len());
        for (k, model) in load_models.into_iter().enumerate() {
            let node = node_index(model.node, "load")?;
            let mut push = |component: LoadComponent, tag: &str| {
                variables.push(InputVariable {
                    name: format!("{tag}:{}", model.node),
                    kind: VariableKind::LoadDraw { load: k, component },
                    mean: 0.0,
                    std: 1.0,
                    skewness: 0.0,
                });
                variables.len() - 1
            };
            let (draw_p, draw_q) = if model.std_fraction == 0.0 {
                (None, None)
            } else if spec.independent_pq {
                (Some(push(LoadComponent::P, "zp")), Some(push(LoadComponent::Q, "zq")))
            } else {
                let v = push(LoadComponent::Both, "z");
                (Some(v), Some(v))
            };
            loads.push(ResolvedLoad { node, model, draw_p, draw_q, switches: Vec::new() });
        }

        let mut stations = Vec::with_capacity(spec.stations.len());
        for (k, model) in spec.stations.iter().enumerate() {
            let node = node_index(model.node, "station")?;
            let demand = model.prepare()?;
            let (mean, std, skewness) = demand.occupancy_moments();
            variables.push(InputVariable {
                name: format!("ev:{}", model.node),
                kind: VariableKind::Occupancy { station: k },
                mean,
                std,
                skewness,
            });
            stations.push(ResolvedStation { node, demand, variable: variables.len() - 1, switches: Vec::new() });
        }

        let mut switch_vars = Vec::with_capacity(spec.availability.len());
        for (entry, a) in spec.availability.iter().enumerate() {
            variables.push(InputVariable {
                name: format!("on:{}", a.node),
                kind: VariableKind::Availability { entry },
                mean: a.probability_on,
                std: a.std(),
                skewness: a.skewness(),
            });
            let v = variables.len() - 1;
            switch_vars.push(v);
            let node = node_index(a.node, "availability")?;
            let mut hit = false;
            match a.target {
                AvailabilityTarget::Station => {
                    for s in stations.iter_mut().filter(|s| s.node == node) {
                        s.switches.push(v);
                        hit = true;
                    }
                }
                AvailabilityTarget::Load => {
                    for l in loads.iter_mut().filter(|l| l.node == node) {
                        l.switches.push(v);
                        hit = true;
                    }
                }
            }
            if !hit {
                return Err(Error::InvalidInput(format!(
                    "availability at node {} has no {:?} to switch",
                    a.node, a.target
                )));
            }
        }

        let mut labels = Vec::new();
        for l in &loads {
            labels.push(format!("p:{}", l.model.node));
            labels.push(format!("q:{}", l.model.node));
        }
        for s in &stations {
            labels.push(format!("ev:{}", s.demand.model().node));
        }
        for a in &spec.availability {
            labels.push(format!("on:{}", a.node));
        }

        let outputs = spec
            .outputs
            .iter()
            .map(|&id| node_index(id, "output"))
            .collect::<Result<Vec<_>>>()?;

        let availability = spec.availability.clone();
        Ok(Scenario {
            spec,
            feeder,
            loads,
            stations,
            availability,
            switch_vars,
            variables,
            labels,
            outputs,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn feeder(&self) -> &Feeder {
        &self.feeder
    }

    pub fn feeder_arc(&self) -> Arc<Feeder> {
        Arc::clone(&self.feeder)
    }

    pub fn variables(&self) -> &[InputVariable] {
        &self.variables
    }

    /// Labels of the realized columns of a sample row.
    pub fn column_labels(&self) -> &[String] {
        &self.labels
    }

    /// Dense indices of the nodes selected for PDF output.
    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn stations(&self) -> impl Iterator<Item = &StationDemand> {
        self.stations.iter().map(|s| &s.demand)
    }

    pub fn availability(&self) -> &[AvailabilityModel] {
        &self.availability
    }

    /// Values of every variable at its mean.
    pub fn mean_point(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.mean).collect()
    }

    /// Draw the value of variable `v` from its own generator.
    pub(crate) fn draw_variable(&self, v: usize, rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        match self.variables[v].kind {
            VariableKind::LoadDraw { .. } => StandardNormal.sample(rng),
            VariableKind::Occupancy { station } => {
                self.stations[station].demand.sample_occupancy(rng) as f64
            }
            VariableKind::Availability { entry } => {
                f64::from(super::sample_availability(&self.availability[entry], rng))
            }
        }
    }

    fn switch(values: &[f64], switches: &[usize]) -> f64 {
        switches.iter().map(|&v| values[v]).product()
    }

    /// Realized columns (kW, kvar, on/off) for a point in variable space.
    pub fn realize(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.variables.len(), "variable vector length");
        let mut out = Vec::with_capacity(self.labels.len());
        for l in &self.loads {
            let on = Self::switch(values, &l.switches);
            let z = |d: Option<usize>| d.map_or(0.0, |v| values[v]);
            out.push(l.model.mean_p * l.model.scale(z(l.draw_p)) * on);
            out.push(l.model.mean_q * l.model.scale(z(l.draw_q)) * on);
        }
        for s in &self.stations {
            let on = Self::switch(values, &s.switches);
            out.push(values[s.variable] * s.demand.charger_kw() * on);
        }
        out.extend(self.switch_vars.iter().map(|&v| values[v]));
        out
    }

    /// Nodal demand for one row of realized columns.
    pub fn injection_from_columns(&self, columns: &[f64]) -> InjectionVector {
        let mut inj = InjectionVector::zeros(self.feeder.len());
        let mut c = 0;
        for l in &self.loads {
            inj.p[l.node] += columns[c];
            inj.q[l.node] += columns[c + 1];
            c += 2;
        }
        for s in &self.stations {
            inj.p[s.node] += columns[c];
            c += 1;
        }
        inj
    }

    /// Nodal demand at a point in variable space.
    pub fn injection(&self, values: &[f64]) -> InjectionVector {
        self.injection_from_columns(&self.realize(values))
    }
}
