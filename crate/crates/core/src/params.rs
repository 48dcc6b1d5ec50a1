use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Infection, recovery, cutting and rewiring rates.
///
/// `psi` is stored once per undirected edge (indexed by [`Graph::edges`]), so
/// `psi_ij = psi_ji` holds structurally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl ModelParams {
    pub fn homogeneous(g: &Graph, beta: f64, delta: f64, phi: f64, psi: f64) -> Self {
        let n = g.node_count();
        Self {
            beta: vec![beta; n],
            delta: vec![delta; n],
            phi: vec![phi; n],
            psi: vec![psi; g.edge_count()],
        }
    }

    /// Dimensions match `g` and every rate is finite and nonnegative.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        let n = g.node_count();
        for (what, v, expected) in [
            ("beta", &self.beta, n),
            ("delta", &self.delta, n),
            ("phi", &self.phi, n),
            ("psi", &self.psi, g.edge_count()),
        ] {
            if v.len() != expected {
                return Err(Error::Dimension {
                    what,
                    expected,
                    got: v.len(),
                });
            }
            if let Some(bad) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(Error::InvalidParameter(format!("{what} contains {bad}")));
            }
        }
        Ok(())
    }

    /// Connected `G0` with positive infection, recovery and rewiring rates.
    pub fn check_standing_assumption(&self, g: &Graph) -> Result<()> {
        self.validate(g)?;
        if !g.is_strongly_connected() {
            return Err(Error::Disconnected);
        }
        for (what, v) in [("beta", &self.beta), ("delta", &self.delta), ("psi", &self.psi)] {
            if v.iter().any(|&x| x <= 0.0) {
                return Err(Error::InvalidParameter(format!("{what} must be strictly positive")));
            }
        }
        Ok(())
    }

    /// `psi` of the edge carried by ordered pair row `k`.
    pub fn psi_of_pair(&self, g: &Graph, k: usize) -> f64 {
        self.psi[g.pair_map().edge_of(k)]
    }

    /// Shared `(beta, delta, phi, psi)` if every rate class is constant.
    pub fn as_homogeneous(&self) -> Option<(f64, f64, f64, f64)> {
        fn constant(v: &[f64]) -> Option<f64> {
            let first = *v.first()?;
            v.iter().all(|&x| x == first).then_some(first)
        }
        let psi = if self.psi.is_empty() {
            0.0
        } else {
            constant(&self.psi)?
        };
        Some((
            constant(&self.beta)?,
            constant(&self.delta)?,
            constant(&self.phi)?,
            psi,
        ))
    }
}
