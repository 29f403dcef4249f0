//! Radial feeder model: nodes, branches, per-unit bases and topology.
//!
//! Feeders are loaded from JSON, validated as a spanning tree rooted at the
//! single slack node, and kept immutable afterwards. Node ids in files are
//! arbitrary labels; internally every node is addressed by a dense index in
//! file order.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TopologyError};

/// Positive-sequence reactance coefficient of the modified Carson equations
/// at 60 Hz, in ohm per mile.
pub const CARSON_REACTANCE_60HZ: f64 = 0.12134;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Residential,
    Industrial,
    StationHost,
    Slack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    /// Base active load, kW.
    pub base_load_p: f64,
    /// Base reactive load, kvar.
    pub base_load_q: f64,
    pub kind: NodeKind,
}

/// A line section between two nodes (dense indices), impedance in per-unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub impedance: Complex64,
}

/// Overhead conductor data, lengths in miles and feet as in the usual
/// North American line tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductorSpec {
    /// Resistance, ohm/mile.
    pub resistance: f64,
    /// Outside diameter, inch.
    pub diameter: f64,
    /// Geometric mean radius, ft.
    pub gmr: f64,
    /// Geometric mean distance between phases, ft.
    pub equivalent_spacing: f64,
    /// Section length, mile.
    pub length: f64,
}

/// Positive-sequence series impedance of a transposed overhead line, in ohms.
///
/// `z = (r + j·0.12134·ln(D_eq / GMR)) · L`. The length may be zero; every
/// other field must be strictly positive.
pub fn positive_sequence_impedance(spec: &ConductorSpec) -> Result<Complex64> {
    if !(spec.gmr > 0.0) || !(spec.equivalent_spacing > 0.0) {
        return Err(Error::InvalidInput(format!(
            "conductor gmr ({}) and equivalent spacing ({}) must be positive",
            spec.gmr, spec.equivalent_spacing
        )));
    }
    if !(spec.resistance >= 0.0) || !(spec.length >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "conductor resistance ({}) and length ({}) must be non-negative",
            spec.resistance, spec.length
        )));
    }
    let x_per_mile = CARSON_REACTANCE_60HZ * (spec.equivalent_spacing / spec.gmr).ln();
    Ok(Complex64::new(spec.resistance, x_per_mile) * spec.length)
}

/// Per-unit system of a single-voltage-level feeder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bases {
    /// Three-phase power base, kVA.
    pub s_kva: f64,
    /// Line-to-line voltage base, kV.
    pub v_kv: f64,
}

impl Bases {
    /// Impedance base in ohms.
    pub fn z_base(&self) -> f64 {
        self.v_kv * self.v_kv * 1000.0 / self.s_kva
    }

    pub fn ohm_to_pu(&self, z: Complex64) -> Complex64 {
        z / self.z_base()
    }

    pub fn pu_to_ohm(&self, z: Complex64) -> Complex64 {
        z * self.z_base()
    }
}

/// Parent map and root-first traversal of a radial feeder.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    order: Vec<usize>,
    parent: Vec<Option<usize>>,
    parent_branch: Vec<Option<usize>>,
    depth: Vec<usize>,
}

impl Topology {
    /// Node indices with every parent ahead of its children; slack first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    /// Index of the branch feeding `node` from its parent.
    pub fn parent_branch(&self, node: usize) -> Option<usize> {
        self.parent_branch[node]
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    /// Parent map keyed by node label.
    pub fn parent_map(&self, nodes: &[Node]) -> BTreeMap<u32, u32> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (nodes[i].id, nodes[p].id)))
            .collect()
    }
}

/// Check that `branches` form a spanning tree over `nodes` rooted at the
/// slack node and return the traversal used by the sweeps.
///
/// Branch direction in the input is not significant.
pub fn validate_radial(nodes: &[Node], branches: &[Branch]) -> Result<Topology, TopologyError> {
    let slack = find_slack(nodes)?;
    let n = nodes.len();
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (b, br) in branches.iter().enumerate() {
        if br.from >= n || br.to >= n {
            return Err(TopologyError::Invalid(format!("branch {b} indexes past node list")));
        }
        if br.from == br.to {
            let id = nodes[br.from].id;
            return Err(TopologyError::Cycle { from: id, to: id });
        }
        adjacency[br.from].push((br.to, b));
        adjacency[br.to].push((br.from, b));
    }

    let mut parent = vec![None; n];
    let mut parent_branch = vec![None; n];
    let mut depth = vec![0; n];
    let mut seen = vec![false; n];
    let mut used = vec![false; branches.len()];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([slack]);
    seen[slack] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, b) in &adjacency[u] {
            if used[b] {
                continue;
            }
            used[b] = true;
            if seen[v] {
                let br = &branches[b];
                return Err(TopologyError::Cycle { from: nodes[br.from].id, to: nodes[br.to].id });
            }
            seen[v] = true;
            parent[v] = Some(u);
            parent_branch[v] = Some(b);
            depth[v] = depth[u] + 1;
            queue.push_back(v);
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(TopologyError::Disconnected(nodes[i].id));
    }
    debug_assert_eq!(branches.len(), n - 1);
    Ok(Topology { order, parent, parent_branch, depth })
}

fn find_slack(nodes: &[Node]) -> Result<usize, TopologyError> {
    let mut slack: Option<usize> = None;
    for (i, node) in nodes.iter().enumerate() {
        if node.kind == NodeKind::Slack {
            if let Some(prev) = slack {
                return Err(TopologyError::MultipleSlack(nodes[prev].id, node.id));
            }
            slack = Some(i);
        }
    }
    slack.ok_or(TopologyError::MissingSlack)
}

/// Immutable, validated radial feeder.
#[derive(Debug, Clone)]
pub struct Feeder {
    nodes: Vec<Node>,
    branches: Vec<Branch>,
    slack_voltage: Complex64,
    bases: Bases,
    slack: usize,
    index: HashMap<u32, usize>,
    topology: Topology,
}

impl Feeder {
    pub fn new(
        nodes: Vec<Node>,
        branches: Vec<Branch>,
        slack_voltage: Complex64,
        bases: Bases,
    ) -> Result<Self> {
        if !(bases.s_kva > 0.0) || !(bases.v_kv > 0.0) {
            return Err(TopologyError::Invalid("bases must be positive".into()).into());
        }
        if !(slack_voltage.norm() > 0.0) {
            return Err(TopologyError::Invalid("slack voltage must be non-zero".into()).into());
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id, i).is_some() {
                return Err(TopologyError::DuplicateNode(node.id).into());
            }
            if node.kind != NodeKind::Slack && (node.base_load_p < 0.0 || node.base_load_q < 0.0) {
                return Err(TopologyError::NegativeLoad(node.id).into());
            }
        }
        for br in &branches {
            if br.from >= nodes.len() || br.to >= nodes.len() {
                return Err(TopologyError::Invalid("branch indexes past node list".into()).into());
            }
            let (from, to) = (nodes[br.from].id, nodes[br.to].id);
            if br.impedance.re < 0.0 {
                return Err(TopologyError::NegativeResistance { from, to }.into());
            }
            if br.impedance.norm() == 0.0 {
                return Err(TopologyError::ZeroImpedance { from, to }.into());
            }
        }
        let topology = validate_radial(&nodes, &branches)?;
        let slack = topology.order()[0];
        Ok(Feeder { nodes, branches, slack_voltage, bases, slack, index, topology })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: FeederFile = serde_json::from_str(text)
            .map_err(|source| Error::Parse { path: "<inline>".into(), source })?;
        file.into_feeder()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn slack_voltage(&self) -> Complex64 {
        self.slack_voltage
    }

    pub fn bases(&self) -> Bases {
        self.bases
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Dense index of the node labelled `id`.
    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn id_of(&self, index: usize) -> u32 {
        self.nodes[index].id
    }
}

/// Read and validate a feeder file.
pub fn load_feeder(path: impl AsRef<Path>) -> Result<Feeder> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let file: FeederFile = serde_json::from_str(&text)
        .map_err(|source| Error::Parse { path: path.to_path_buf(), source })?;
    file.into_feeder()
}

// On-disk layout.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeederFile {
    pub bases: FileBases,
    pub nodes: Vec<FileNode>,
    pub branches: Vec<FileBranch>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileBases {
    pub s_kva: f64,
    pub v_kv: f64,
    pub slack_v_pu: f64,
    #[serde(default)]
    pub slack_angle_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileNode {
    pub id: u32,
    #[serde(default)]
    pub p_kw: f64,
    #[serde(default)]
    pub q_kvar: f64,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileBranch {
    pub from: u32,
    pub to: u32,
    #[serde(flatten)]
    pub impedance: FileImpedance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FileImpedance {
    Ohms { r_ohm: f64, x_ohm: f64 },
    Conductor { conductor: FileConductor, length_mi: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConductor {
    pub resistance: f64,
    pub diameter: f64,
    pub gmr: f64,
    pub equivalent_spacing: f64,
}

impl FeederFile {
    pub fn into_feeder(self) -> Result<Feeder> {
        let bases = Bases { s_kva: self.bases.s_kva, v_kv: self.bases.v_kv };
        let index: HashMap<u32, usize> =
            self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let nodes: Vec<Node> = self
            .nodes
            .iter()
            .map(|n| Node { id: n.id, base_load_p: n.p_kw, base_load_q: n.q_kvar, kind: n.kind })
            .collect();
        let mut branches = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let from = *index.get(&b.from).ok_or(TopologyError::UnknownNode(b.from))?;
            let to = *index.get(&b.to).ok_or(TopologyError::UnknownNode(b.to))?;
            let ohms = match b.impedance {
                FileImpedance::Ohms { r_ohm, x_ohm } => Complex64::new(r_ohm, x_ohm),
                FileImpedance::Conductor { conductor, length_mi } => {
                    positive_sequence_impedance(&ConductorSpec {
                        resistance: conductor.resistance,
                        diameter: conductor.diameter,
                        gmr: conductor.gmr,
                        equivalent_spacing: conductor.equivalent_spacing,
                        length: length_mi,
                    })?
                }
            };
            branches.push(Branch { from, to, impedance: bases.ohm_to_pu(ohms) });
        }
        let slack_voltage =
            Complex64::from_polar(self.bases.slack_v_pu, self.bases.slack_angle_deg.to_radians());
        Feeder::new(nodes, branches, slack_voltage, bases)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_json(extra_branch: &str) -> String {
        format!(
            r#"{{
              "bases": {{"s_kva": 1000, "v_kv": 12.47, "slack_v_pu": 1.0}},
              "nodes": [
                {{"id": 0, "kind": "slack"}},
                {{"id": 1, "p_kw": 10, "q_kvar": 5, "kind": "residential"}},
                {{"id": 2, "p_kw": 10, "q_kvar": 5, "kind": "residential"}},
                {{"id": 3, "p_kw": 10, "q_kvar": 5, "kind": "residential"}}
              ],
              "branches": [
                {{"from": 0, "to": 1, "r_ohm": 0.1, "x_ohm": 0.1}},
                {{"from": 1, "to": 2, "r_ohm": 0.1, "x_ohm": 0.1}},
                {{"from": 2, "to": 3, "r_ohm": 0.1, "x_ohm": 0.1}}{extra_branch}
              ]
            }}"#
        )
    }

    #[test]
    fn chain_parent_map() {
        let feeder = Feeder::from_json_str(&chain_json("")).unwrap();
        let map = feeder.topology().parent_map(feeder.nodes());
        assert_eq!(map, BTreeMap::from([(1, 0), (2, 1), (3, 2)]));
        assert_eq!(feeder.topology().order(), &[0, 1, 2, 3]);
        assert_eq!(feeder.topology().depth(3), 3);
    }

    #[test]
    fn loop_is_rejected() {
        let err = Feeder::from_json_str(&chain_json(
            r#", {"from": 3, "to": 0, "r_ohm": 0.1, "x_ohm": 0.1}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, Error::Topology(TopologyError::Cycle { .. })), "{err}");
    }

    #[test]
    fn self_loop_is_rejected() {
        let text = r#"{
          "bases": {"s_kva": 1000, "v_kv": 12.47, "slack_v_pu": 1.0},
          "nodes": [{"id": 4, "kind": "slack"}, {"id": 5, "p_kw": 1, "kind": "residential"}],
          "branches": [
            {"from": 4, "to": 5, "r_ohm": 0.1, "x_ohm": 0.1},
            {"from": 5, "to": 5, "r_ohm": 0.1, "x_ohm": 0.1}
          ]
        }"#;
        let err = Feeder::from_json_str(text).unwrap_err();
        assert!(
            matches!(err, Error::Topology(TopologyError::Cycle { from: 5, to: 5 })),
            "{err}"
        );
    }

    #[test]
    fn disconnected_and_missing_slack() {
        let text = r#"{
          "bases": {"s_kva": 1000, "v_kv": 12.47, "slack_v_pu": 1.0},
          "nodes": [{"id": 1, "kind": "slack"}, {"id": 2, "kind": "residential"},
                    {"id": 3, "kind": "residential"}, {"id": 4, "kind": "residential"}],
          "branches": [
            {"from": 1, "to": 2, "r_ohm": 0.1, "x_ohm": 0.1},
            {"from": 3, "to": 4, "r_ohm": 0.1, "x_ohm": 0.1}
          ]
        }"#;
        let err = Feeder::from_json_str(text).unwrap_err();
        assert!(matches!(err, Error::Topology(TopologyError::Disconnected(3))), "{err}");

        let text = text.replace("\"slack\"", "\"residential\"");
        let err = Feeder::from_json_str(&text).unwrap_err();
        assert!(matches!(err, Error::Topology(TopologyError::MissingSlack)), "{err}");
    }

    #[test]
    fn unknown_node_reference() {
        let text = r#"{
          "bases": {"s_kva": 1000, "v_kv": 12.47, "slack_v_pu": 1.0},
          "nodes": [{"id": 1, "kind": "slack"}],
          "branches": [{"from": 1, "to": 9, "r_ohm": 0.1, "x_ohm": 0.1}]
        }"#;
        let err = Feeder::from_json_str(text).unwrap_err();
        assert!(matches!(err, Error::Topology(TopologyError::UnknownNode(9))), "{err}");
    }

    #[test]
    fn minimal_two_node_feeder() {
        let text = r#"{
          "bases": {"s_kva": 100, "v_kv": 1.0, "slack_v_pu": 1.0},
          "nodes": [{"id": 10, "kind": "slack"}, {"id": 20, "p_kw": 50, "kind": "residential"}],
          "branches": [{"from": 10, "to": 20, "r_ohm": 0.1, "x_ohm": 0.2}]
        }"#;
        let feeder = Feeder::from_json_str(text).unwrap();
        assert_eq!(feeder.branches().len(), 1);
        // z_base = 1^2 * 1000 / 100 = 10 ohm
        assert_eq!(feeder.branches()[0].impedance, Complex64::new(0.01, 0.02));
        assert_eq!(feeder.index_of(20), Some(1));
    }

    #[test]
    fn zero_length_conductor_is_zero() {
        let spec = ConductorSpec {
            resistance: 1.120,
            diameter: 0.398,
            gmr: 0.00446,
            equivalent_spacing: 4.2848,
            length: 0.0,
        };
        assert_eq!(positive_sequence_impedance(&spec).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn bad_conductor_geometry() {
        let spec = ConductorSpec {
            resistance: 1.0,
            diameter: 0.4,
            gmr: 0.0,
            equivalent_spacing: 4.0,
            length: 1.0,
        };
        assert!(positive_sequence_impedance(&spec).is_err());
    }

    #[test]
    fn parse_error_carries_location() {
        let err = Feeder::from_json_str("{\"bases\": {\"s_kva\": 1000,\n \"v_kv\": }").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }
}
