//! Deterministic power flow on a radial feeder.
//!
//! [`solve_fbs`] is the production solver (forward/backward sweep).
//! [`solve_reference`] solves the same constant-power problem by fixed-point
//! iteration on the nodal admittance system and serves as an independent
//! cross-check.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::feeder::Feeder;

/// One realization of nodal demand. Loads are positive; the slack entry is
/// ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionVector {
    /// Active demand per node, kW.
    pub p: Vec<f64>,
    /// Reactive demand per node, kvar.
    pub q: Vec<f64>,
}

impl InjectionVector {
    pub fn zeros(n: usize) -> Self {
        InjectionVector { p: vec![0.0; n], q: vec![0.0; n] }
    }

    /// Base loads of the feeder.
    pub fn base_case(feeder: &Feeder) -> Self {
        InjectionVector {
            p: feeder.nodes().iter().map(|n| n.base_load_p).collect(),
            q: feeder.nodes().iter().map(|n| n.base_load_q).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    fn to_pu(&self, feeder: &Feeder) -> Result<Vec<Complex64>, SolverError> {
        let n = feeder.len();
        if self.p.len() != n || self.q.len() != n {
            return Err(SolverError::LengthMismatch { expected: n, got: self.p.len().min(self.q.len()) });
        }
        let s_base = feeder.bases().s_kva;
        let slack = feeder.slack();
        (0..n)
            .map(|i| {
                if i == slack {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                if !self.p[i].is_finite() || !self.q[i].is_finite() {
                    return Err(SolverError::NonFinite(feeder.id_of(i)));
                }
                Ok(Complex64::new(self.p[i], self.q[i]) / s_base)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Convergence threshold on max |ΔV| between sweeps, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Any |V| below this is reported as voltage collapse, p.u.
    pub voltage_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tolerance: 1e-8, max_iterations: 100, voltage_floor: 0.5 }
    }
}

/// Converged operating point. All quantities per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSolution {
    pub voltages: Vec<Complex64>,
    /// Current in each branch, flowing from parent to child.
    pub branch_currents: Vec<Complex64>,
    /// Complex power entering each branch at its parent end.
    pub branch_flows: Vec<Complex64>,
    pub iterations: usize,
}

impl VoltageSolution {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.voltages.iter().map(|v| v.norm()).collect()
    }

    /// Complex power delivered by the slack node.
    pub fn slack_injection(&self, feeder: &Feeder) -> Complex64 {
        let slack = feeder.slack();
        let topo = feeder.topology();
        (0..feeder.len())
            .filter(|&i| topo.parent(i) == Some(slack))
            .map(|i| self.branch_flows[topo.parent_branch(i).unwrap()])
            .sum()
    }

    /// Series I²Z losses summed over branches.
    pub fn losses(&self, feeder: &Feeder) -> Complex64 {
        feeder
            .branches()
            .iter()
            .zip(&self.branch_currents)
            .map(|(br, i)| br.impedance * i.norm_sqr())
            .sum()
    }
}

fn check_config(cfg: &SolverConfig) {
    assert!(cfg.tolerance > 0.0, "solver tolerance must be positive");
    assert!(cfg.max_iterations >= 1, "max_iterations must be at least 1");
}

/// Forward/backward sweep with constant-power loads.
///
/// Each iteration accumulates load currents from the leaves to the root at
/// the present voltage estimate, then updates voltages outward from the
/// slack. Stops when the largest complex voltage change falls below
/// `cfg.tolerance`.
pub fn solve_fbs(
    feeder: &Feeder,
    injections: &InjectionVector,
    cfg: &SolverConfig,
) -> Result<VoltageSolution, SolverError> {
    check_config(cfg);
    let demand = injections.to_pu(feeder)?;
    let n = feeder.len();
    let slack = feeder.slack();
    let topo = feeder.topology();
    let order = topo.order();
    let branches = feeder.branches();

    let mut v = vec![feeder.slack_voltage(); n];
    let mut current = vec![Complex64::new(0.0, 0.0); n];
    let mut max_delta = f64::INFINITY;

    for iteration in 1..=cfg.max_iterations {
        backward_sweep(feeder, &demand, &v, &mut current);

        max_delta = 0.0;
        for &u in &order[1..] {
            let parent = topo.parent(u).unwrap();
            let z = branches[topo.parent_branch(u).unwrap()].impedance;
            let updated = v[parent] - z * current[u];
            max_delta = max_delta.max((updated - v[u]).norm());
            v[u] = updated;
            let magnitude = updated.norm();
            if !(magnitude >= cfg.voltage_floor) {
                return Err(SolverError::VoltageCollapse { node: feeder.id_of(u), magnitude });
            }
        }

        if max_delta < cfg.tolerance {
            backward_sweep(feeder, &demand, &v, &mut current);
            let mut branch_currents = vec![Complex64::new(0.0, 0.0); branches.len()];
            let mut branch_flows = vec![Complex64::new(0.0, 0.0); branches.len()];
            for u in (0..n).filter(|&u| u != slack) {
                let b = topo.parent_branch(u).unwrap();
                branch_currents[b] = current[u];
                branch_flows[b] = v[topo.parent(u).unwrap()] * current[u].conj();
            }
            return Ok(VoltageSolution { voltages: v, branch_currents, branch_flows, iterations: iteration });
        }
    }
    Err(SolverError::NotConverged { iterations: cfg.max_iterations, max_delta })
}

/// Fills `current[u]` with the current flowing into `u` from its parent.
fn backward_sweep(feeder: &Feeder, demand: &[Complex64], v: &[Complex64], current: &mut [Complex64]) {
    let topo = feeder.topology();
    current.fill(Complex64::new(0.0, 0.0));
    for &u in topo.order()[1..].iter().rev() {
        current[u] += (demand[u] / v[u]).conj();
        let parent = topo.parent(u).unwrap();
        let flowing = current[u];
        current[parent] += flowing;
    }
}

/// Fixed-point iteration on the nodal admittance equations.
///
/// Solves `Y_LL · V_L = I_L(V) − Y_L0 · V_0` with constant-power loads
/// turned into current injections at the previous iterate, using one dense
/// LU factorization of `Y_LL`.
pub fn solve_reference(
    feeder: &Feeder,
    injections: &InjectionVector,
    cfg: &SolverConfig,
) -> Result<VoltageSolution, SolverError> {
    check_config(cfg);
    let demand = injections.to_pu(feeder)?;
    let n = feeder.len();
    let slack = feeder.slack();
    let v0 = feeder.slack_voltage();

    // Dense position of every non-slack node.
    let free: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let mut position = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        position[i] = k;
    }
    let m = free.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut y_ll = DMatrix::from_element(m, m, zero);
    let mut y_l0 = DVector::from_element(m, zero);
    for br in feeder.branches() {
        let y = br.impedance.inv();
        for (a, b) in [(br.from, br.to), (br.to, br.from)] {
            if a == slack {
                continue;
            }
            let pa = position[a];
            y_ll[(pa, pa)] += y;
            if b == slack {
                y_l0[pa] -= y;
            } else {
                y_ll[(pa, position[b])] -= y;
            }
        }
    }
    let lu = y_ll.lu();
    if !lu.is_invertible() {
        return Err(SolverError::Singular);
    }
    let fixed = -y_l0 * v0;

    let mut v = vec![v0; n];
    let mut max_delta = f64::INFINITY;
    for iteration in 1..=cfg.max_iterations {
        let rhs = DVector::from_iterator(
            m,
            free.iter().enumerate().map(|(k, &i)| fixed[k] - (demand[i] / v[i]).conj()),
        );
        let solved = lu.solve(&rhs).ok_or(SolverError::Singular)?;
        max_delta = 0.0;
        for (k, &i) in free.iter().enumerate() {
            max_delta = max_delta.max((solved[k] - v[i]).norm());
            v[i] = solved[k];
            let magnitude = v[i].norm();
            if !(magnitude >= cfg.voltage_floor) {
                return Err(SolverError::VoltageCollapse { node: feeder.id_of(i), magnitude });
            }
        }
        if max_delta < cfg.tolerance {
            let topo = feeder.topology();
            let mut branch_currents = vec![zero; feeder.branches().len()];
            let mut branch_flows = vec![zero; feeder.branches().len()];
            for &child in &free {
                let b = topo.parent_branch(child).unwrap();
                let parent = topo.parent(child).unwrap();
                let i = (v[parent] - v[child]) / feeder.branches()[b].impedance;
                branch_currents[b] = i;
                branch_flows[b] = v[parent] * i.conj();
            }
            return Ok(VoltageSolution { voltages: v, branch_currents, branch_flows, iterations: iteration });
        }
    }
    Err(SolverError::NotConverged { iterations: cfg.max_iterations, max_delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{Bases, Branch, Node, NodeKind};

    pub(crate) fn two_bus(z: Complex64) -> Feeder {
        let nodes = vec![
            Node { id: 0, base_load_p: 0.0, base_load_q: 0.0, kind: NodeKind::Slack },
            Node { id: 1, base_load_p: 0.0, base_load_q: 0.0, kind: NodeKind::Residential },
        ];
        let branches = vec![Branch { from: 0, to: 1, impedance: z }];
        Feeder::new(nodes, branches, Complex64::new(1.0, 0.0), Bases { s_kva: 1000.0, v_kv: 1.0 })
            .unwrap()
    }

    #[test]
    fn zero_load_is_flat() {
        let feeder = two_bus(Complex64::new(0.01, 0.01));
        let cfg = SolverConfig::default();
        for solve in [solve_fbs, solve_reference] {
            let sol = solve(&feeder, &InjectionVector::zeros(2), &cfg).unwrap();
            assert!(sol.voltages.iter().all(|&v| v == feeder.slack_voltage()));
            assert!(sol.branch_flows.iter().all(|f| f.norm() == 0.0));
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let feeder = two_bus(Complex64::new(0.01, 0.01));
        let cfg = SolverConfig { max_iterations: 1, ..SolverConfig::default() };
        let inj = InjectionVector { p: vec![0.0, 1000.0], q: vec![0.0, 500.0] };
        assert!(matches!(solve_fbs(&feeder, &inj, &cfg), Err(SolverError::NotConverged { .. })));
    }

    #[test]
    fn collapse_is_reported() {
        let feeder = two_bus(Complex64::new(0.1, 0.1));
        let inj = InjectionVector { p: vec![0.0, 10_000.0], q: vec![0.0, 5_000.0] };
        let err = solve_fbs(&feeder, &inj, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, SolverError::VoltageCollapse { .. } | SolverError::NotConverged { .. }));
    }

    #[test]
    fn rejects_wrong_length_and_nan() {
        let feeder = two_bus(Complex64::new(0.01, 0.01));
        let cfg = SolverConfig::default();
        assert!(matches!(
            solve_fbs(&feeder, &InjectionVector::zeros(3), &cfg),
            Err(SolverError::LengthMismatch { .. })
        ));
        let inj = InjectionVector { p: vec![0.0, f64::NAN], q: vec![0.0, 0.0] };
        assert_eq!(solve_fbs(&feeder, &inj, &cfg), Err(SolverError::NonFinite(1)));
    }
}
