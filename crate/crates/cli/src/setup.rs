//! Turns a loaded config into a graph and concrete rate vectors.

use std::path::Path;

use asis_core::graph::generate;
use asis_core::sim::NetworkState;
use asis_core::{Graph, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{read_design_phi, GenerateSpec, GraphKind, LoadedConfig, RateSpec};
use crate::error::CliError;

/// Provenance of the graph, echoed into every JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct GraphInfo {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GenerateSpec>,
    pub nodes: usize,
    pub edges: usize,
}

const ER_TRIES: usize = 10_000;

pub fn generate_graph(spec: &GenerateSpec) -> Result<Graph, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    if n == 0 {
        return Err("n must be at least 1".into());
    }
    Ok(match spec.kind {
        GraphKind::Path => generate::path(n),
        GraphKind::Cycle if n < 3 => return Err("a cycle needs at least 3 nodes".into()),
        GraphKind::Cycle => generate::cycle(n),
        GraphKind::Complete => generate::complete(n),
        GraphKind::ErdosRenyi => {
            let p = spec.p.ok_or("erdos_renyi needs p")?;
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("p must lie in [0, 1], got {p}"));
            }
            generate::connected_erdos_renyi(n, p, &mut rng, ER_TRIES)
                .ok_or_else(|| format!("no connected G({n}, {p}) draw in {ER_TRIES} tries"))?
        }
        GraphKind::PreferentialAttachment => {
            let attach = spec.attach.ok_or("preferential_attachment needs attach")?;
            if attach == 0 {
                return Err("attach must be at least 1".into());
            }
            generate::preferential_attachment(n, attach, &mut rng)
        }
    })
}

pub fn read_graph(path: &Path) -> Result<Graph, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read graph {}: {e}", path.display())))?;
    let parsed = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        Graph::parse_json(&text)
    } else {
        Graph::parse_edge_list(&text)
    };
    parsed.map_err(|e| CliError::Validation(format!("graph {}: {e}", path.display())))
}

pub fn load_graph(lc: &LoadedConfig) -> Result<(Graph, GraphInfo), CliError> {
    let gs = &lc.config.graph;
    let (g, path) = match (&gs.path, &gs.generate) {
        (Some(p), None) => (read_graph(&lc.resolve(p))?, Some(p.display().to_string())),
        (None, Some(spec)) => (
            generate_graph(spec).map_err(|m| lc.issue(Some("graph.generate"), m))?,
            None,
        ),
        _ => return Err(lc.issue(Some("graph"), "one of `path` or `generate` is required").into()),
    };
    let info = GraphInfo {
        path,
        generator: gs.generate.clone(),
        nodes: g.node_count(),
        edges: g.edge_count(),
    };
    Ok((g, info))
}

fn constant(v: &[f64]) -> Option<f64> {
    let first = *v.first()?;
    v.iter().all(|&x| x == first).then_some(first)
}

fn node_index(g: &Graph, label: i64) -> Option<usize> {
    g.labels().iter().position(|&l| l == label)
}

/// Rates resolved against the graph.
#[derive(Debug, Clone)]
pub struct Rates {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub phi: Vec<f64>,
    /// `None` when the config leaves `psi` to the designer.
    pub psi: Option<Vec<f64>>,
}

impl Rates {
    pub fn params(&self, lc: &LoadedConfig) -> Result<ModelParams, CliError> {
        let psi = self
            .psi
            .clone()
            .ok_or_else(|| lc.issue(Some("params.psi"), "this command needs `psi`"))?;
        Ok(ModelParams {
            beta: self.beta.clone(),
            delta: self.delta.clone(),
            phi: self.phi.clone(),
            psi,
        })
    }
}

pub fn load_rates(lc: &LoadedConfig, g: &Graph) -> Result<Rates, CliError> {
    let p = lc
        .config
        .params
        .as_ref()
        .ok_or_else(|| lc.issue(None, "missing [params] section"))?;
    let n = g.node_count();
    let m = g.edge_count();
    let plain = |key: &str, spec: &RateSpec, len: usize, unit: &str| -> Result<Vec<f64>, CliError> {
        match spec {
            RateSpec::Scalar(x) => Ok(vec![*x; len]),
            RateSpec::PerItem(v) if v.len() == len => Ok(v.clone()),
            RateSpec::PerItem(v) => Err(lc
                .issue(Some(key), format!("has {} entries, the graph has {len} {unit}", v.len()))
                .into()),
            _ => Err(lc.issue(Some(key), "expected a number or an array").into()),
        }
    };

    let delta = plain("params.delta", &p.delta, n, "nodes")?;
    let beta = match &p.beta {
        RateSpec::TimesDeltaOverRho { times_delta_over_rho: x } => {
            let d = constant(&delta).ok_or_else(|| {
                lc.issue(Some("params.beta"), "times_delta_over_rho needs a homogeneous delta")
            })?;
            let (rho, _) = g.spectral_radius(1e-13)?;
            vec![x * d / rho; n]
        }
        spec => plain("params.beta", spec, n, "nodes")?,
    };
    let phi = match &p.phi {
        None => vec![0.0; n],
        Some(RateSpec::FromDesign { from_design }) => {
            let map = read_design_phi(&lc.resolve(from_design))
                .map_err(|m| lc.issue(Some("params.phi"), m))?;
            let mut phi = Vec::with_capacity(n);
            for &l in g.labels() {
                let v = map.get(&l.to_string()).ok_or_else(|| {
                    lc.issue(Some("params.phi"), format!("design has no rate for node {l}"))
                })?;
                phi.push(*v);
            }
            if map.len() != n {
                return Err(lc
                    .issue(Some("params.phi"), format!("design has {} rates, graph has {n} nodes", map.len()))
                    .into());
            }
            phi
        }
        Some(spec) => plain("params.phi", spec, n, "nodes")?,
    };
    let psi = match &p.psi {
        None => None,
        Some(RateSpec::Alias(a)) if a == "beta" => {
            let b = constant(&beta)
                .ok_or_else(|| lc.issue(Some("params.psi"), "psi = \"beta\" needs a homogeneous beta"))?;
            Some(vec![b; m])
        }
        Some(RateSpec::Alias(a)) => {
            return Err(lc
                .issue(Some("params.psi"), format!("unknown alias `{a}`, only \"beta\" is accepted"))
                .into())
        }
        Some(spec) => Some(plain("params.psi", spec, m, "edges")?),
    };
    for (key, v) in [("params.beta", &beta), ("params.delta", &delta), ("params.phi", &phi)]
        .into_iter()
        .chain(psi.as_ref().map(|v| ("params.psi", v)))
    {
        if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(lc.issue(Some(key), format!("rates must be finite and nonnegative, found {bad}")).into());
        }
    }
    Ok(Rates { beta, delta, phi, psi })
}

/// Initial state from `simulation.initial_infected`, all edges live.
pub fn initial_state(lc: &LoadedConfig, g: &Graph, labels: Option<&[i64]>) -> Result<NetworkState, CliError> {
    let nodes: Vec<usize> = match labels {
        None => (0..g.node_count()).collect(),
        Some(ls) => ls
            .iter()
            .map(|&l| {
                node_index(g, l).ok_or_else(|| {
                    lc.issue(Some("simulation.initial_infected"), format!("node {l} is not in the graph"))
                })
            })
            .collect::<Result<_, _>>()?,
    };
    Ok(NetworkState::with_infected(g, &nodes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seed_deterministic() {
        let spec = GenerateSpec {
            kind: GraphKind::PreferentialAttachment,
            n: 30,
            p: None,
            attach: Some(2),
            seed: 9,
        };
        let a = generate_graph(&spec).unwrap();
        let b = generate_graph(&spec).unwrap();
        assert_eq!(a.edges(), b.edges());
        let c = generate_graph(&GenerateSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn generated_erdos_renyi_is_connected() {
        let g = generate_graph(&GenerateSpec {
            kind: GraphKind::ErdosRenyi,
            n: 12,
            p: Some(0.3),
            attach: None,
            seed: 1,
        })
        .unwrap();
        assert!(g.is_strongly_connected());
    }
}
