//! Probabilistic power flow for radial distribution feeders.
//!
//! Random residential loads, charging-station demand and on/off
//! availability are propagated through a forward/backward sweep power flow.
//! Output voltage PDFs come from a kernel estimate over a small number of
//! power-flow samples whose window width is tuned against a reference
//! density. Monte Carlo, two-point estimate and unscented transform engines
//! are provided for comparison.
//!
//! ```
//! use pdpf::feeder::Feeder;
//! use pdpf::solver::{solve_fbs, InjectionVector, SolverConfig};
//!
//! let feeder = Feeder::from_json_str(r#"{
//!     "bases": { "s_kva": 1000, "v_kv": 12.47, "slack_v_pu": 1.0 },
//!     "nodes": [
//!         { "id": 1, "p_kw": 0, "q_kvar": 0, "kind": "slack" },
//!         { "id": 2, "p_kw": 300, "q_kvar": 100, "kind": "residential" }
//!     ],
//!     "branches": [ { "from": 1, "to": 2, "r_ohm": 0.5, "x_ohm": 1.0 } ]
//! }"#)?;
//! let solution = solve_fbs(&feeder, &InjectionVector::base_case(&feeder), &SolverConfig::default())?;
//! assert!(solution.magnitudes()[1] < 1.0);
//! # Ok::<(), pdpf::Error>(())
//! ```

// `!(x > 0.0)` rejects NaN as well; that is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod engines;
pub mod error;
pub mod feeder;
pub mod metrics;
pub mod rng;
pub mod solver;
pub mod uncertainty;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/feeders.md")]
    mod feeders {}
    #[doc = include_str!("../../../book/src/uncertainty.md")]
    mod uncertainty {}
    #[doc = include_str!("../../../book/src/density.md")]
    mod density {}
    #[doc = include_str!("../../../book/src/engines.md")]
    mod engines {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
