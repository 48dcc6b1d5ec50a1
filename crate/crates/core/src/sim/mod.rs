//! Exact stochastic simulation of the adaptive SIS process.
//!
//! Four families of exponential clocks compete:
//!
//! | event   | target          | rate                              |
//! |---------|-----------------|-----------------------------------|
//! | recover | infected `i`    | `delta_i`                         |
//! | infect  | susceptible `i` | `beta_i * #(live infected nbrs)`  |
//! | cut     | live `{i,j}`    | `phi_i x_i + phi_j x_j`           |
//! | rewire  | absent `{i,j}`  | `psi_ij`                          |
//!
//! Events are drawn with the Gillespie direct method. Node clocks and edge
//! clocks live in two sum trees which are updated in `O(deg log n)` after
//! each event.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::params::ModelParams;

mod ensemble;
mod sumtree;

pub use ensemble::{estimate_probabilities, EnsembleConfig, EnsembleEstimate, Execution};
use sumtree::SumTree;

/// Joint Markov state: infection bits per node, live bits per initial edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkState {
    pub infected: Vec<bool>,
    pub live: Vec<bool>,
}

impl NetworkState {
    /// All edges of `G0` present, the given nodes infected.
    pub fn with_infected(g: &Graph, infected_nodes: &[usize]) -> Self {
        let mut infected = vec![false; g.node_count()];
        for &i in infected_nodes {
            infected[i] = true;
        }
        Self {
            infected,
            live: vec![true; g.edge_count()],
        }
    }

    pub fn infected_count(&self) -> usize {
        self.infected.iter().filter(|&&x| x).count()
    }

    pub fn is_disease_free(&self) -> bool {
        !self.infected.iter().any(|&x| x)
    }

    fn check(&self, g: &Graph) -> Result<()> {
        if self.infected.len() != g.node_count() {
            return Err(Error::InconsistentState(format!(
                "{} node bits for {} nodes",
                self.infected.len(),
                g.node_count()
            )));
        }
        if self.live.len() != g.edge_count() {
            return Err(Error::InconsistentState(format!(
                "{} edge bits for {} edges",
                self.live.len(),
                g.edge_count()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Infect,
    Recover,
    Cut,
    Rewire,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Infect => "infect",
            Self::Recover => "recover",
            Self::Cut => "cut",
            Self::Rewire => "rewire",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Node index for infect/recover, undirected edge id for cut/rewire.
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Fired(Event),
    /// Total rate is zero: disease-free with every initial edge present.
    Absorbed,
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Stop as soon as no node is infected instead of running the remaining
    /// rewiring events out to the horizon.
    pub stop_when_disease_free: bool,
}

/// Simulation engine with incremental clock bookkeeping.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    graph: &'a Graph,
    params: &'a ModelParams,
    state: NetworkState,
    time: f64,
    /// Number of infected neighbours through live edges, for every node.
    pressure: Vec<u32>,
    node_clocks: SumTree,
    edge_clocks: SumTree,
}

impl<'a> Simulation<'a> {
    pub fn new(graph: &'a Graph, params: &'a ModelParams, init: NetworkState) -> Result<Self> {
        params.validate(graph)?;
        init.check(graph)?;
        let mut sim = Self {
            graph,
            params,
            state: init,
            time: 0.0,
            pressure: vec![0; graph.node_count()],
            node_clocks: SumTree::new(graph.node_count()),
            edge_clocks: SumTree::new(graph.edge_count()),
        };
        sim.rebuild();
        Ok(sim)
    }

    /// Restarts from `init` at time zero, reusing allocations.
    pub fn reset(&mut self, init: &NetworkState) -> Result<()> {
        init.check(self.graph)?;
        self.state.clone_from(init);
        self.time = 0.0;
        self.rebuild();
        Ok(())
    }

    fn rebuild(&mut self) {
        self.pressure.iter_mut().for_each(|p| *p = 0);
        for (e, &(i, j)) in self.graph.edges().iter().enumerate() {
            if self.state.live[e] {
                if self.state.infected[i] {
                    self.pressure[j] += 1;
                }
                if self.state.infected[j] {
                    self.pressure[i] += 1;
                }
            }
        }
        for i in 0..self.graph.node_count() {
            self.refresh_node(i);
        }
        for e in 0..self.graph.edge_count() {
            self.refresh_edge(e);
        }
    }

    fn refresh_node(&mut self, i: usize) {
        let rate = if self.state.infected[i] {
            self.params.delta[i]
        } else {
            self.params.beta[i] * f64::from(self.pressure[i])
        };
        self.node_clocks.set(i, rate);
    }

    fn refresh_edge(&mut self, e: usize) {
        let (i, j) = self.graph.edges()[e];
        let rate = if self.state.live[e] {
            let mut r = 0.0;
            if self.state.infected[i] {
                r += self.params.phi[i];
            }
            if self.state.infected[j] {
                r += self.params.phi[j];
            }
            r
        } else {
            self.params.psi[e]
        };
        self.edge_clocks.set(e, rate);
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn total_rate(&self) -> f64 {
        self.node_clocks.total() + self.edge_clocks.total()
    }

    /// Rate currently attached to node `i`'s clock (recovery or infection).
    pub fn node_rate(&self, i: usize) -> f64 {
        self.node_clocks.get(i)
    }

    /// Rate currently attached to edge `e`'s clock (cut or rewire).
    pub fn edge_rate(&self, e: usize) -> f64 {
        self.edge_clocks.get(e)
    }

    /// Draws the next event without applying it: `(holding time, kind, target)`.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(f64, EventKind, usize)> {
        let node_total = self.node_clocks.total();
        let total = node_total + self.edge_clocks.total();
        if total <= 0.0 {
            return None;
        }
        let dt = -(1.0 - rng.random::<f64>()).ln() / total;
        let u = rng.random::<f64>() * total;
        let (kind, target) = if u < node_total {
            let i = self.node_clocks.find(u);
            let kind = if self.state.infected[i] {
                EventKind::Recover
            } else {
                EventKind::Infect
            };
            (kind, i)
        } else {
            let e = self.edge_clocks.find(u - node_total);
            let kind = if self.state.live[e] {
                EventKind::Cut
            } else {
                EventKind::Rewire
            };
            (kind, e)
        };
        Some((dt, kind, target))
    }

    fn apply(&mut self, kind: EventKind, target: usize) {
        match kind {
            EventKind::Infect | EventKind::Recover => {
                let i = target;
                let now_infected = kind == EventKind::Infect;
                self.state.infected[i] = now_infected;
                self.refresh_node(i);
                for &(j, e) in self.graph.incident(i) {
                    if self.state.live[e] {
                        if now_infected {
                            self.pressure[j] += 1;
                        } else {
                            self.pressure[j] -= 1;
                        }
                        if !self.state.infected[j] {
                            self.refresh_node(j);
                        }
                        self.refresh_edge(e);
                    }
                }
            }
            EventKind::Cut | EventKind::Rewire => {
                let e = target;
                let (i, j) = self.graph.edges()[e];
                let now_live = kind == EventKind::Rewire;
                self.state.live[e] = now_live;
                for (a, b) in [(i, j), (j, i)] {
                    if self.state.infected[a] {
                        if now_live {
                            self.pressure[b] += 1;
                        } else {
                            self.pressure[b] -= 1;
                        }
                        if !self.state.infected[b] {
                            self.refresh_node(b);
                        }
                    }
                }
                self.refresh_edge(e);
            }
        }
    }

    /// Fires exactly one transition.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        match self.draw(rng) {
            None => StepOutcome::Absorbed,
            Some((dt, kind, target)) => {
                self.time += dt;
                self.apply(kind, target);
                StepOutcome::Fired(Event {
                    time: self.time,
                    kind,
                    target,
                })
            }
        }
    }

    /// Runs until `horizon`, absorption, or (optionally) extinction.
    ///
    /// `on_sample(k)` is called once per grid time `grid[k]` with the state
    /// holding at that time (after every event at or before it). `grid` must
    /// be nondecreasing; points beyond `horizon` are never sampled.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        horizon: f64,
        grid: &[f64],
        opts: &SimOptions,
        rng: &mut R,
        mut on_sample: impl FnMut(usize, &NetworkState),
        mut on_event: impl FnMut(&Event),
    ) {
        let mut k = 0;
        loop {
            let stop_early = opts.stop_when_disease_free && self.state.is_disease_free();
            let next = if stop_early { None } else { self.draw(rng) };
            let t_next = next.map_or(f64::INFINITY, |(dt, _, _)| self.time + dt);
            while k < grid.len() && grid[k] < t_next && grid[k] <= horizon {
                on_sample(k, &self.state);
                k += 1;
            }
            match next {
                Some((_, kind, target)) if t_next <= horizon => {
                    self.time = t_next;
                    self.apply(kind, target);
                    on_event(&Event {
                        time: t_next,
                        kind,
                        target,
                    });
                }
                _ => {
                    self.time = self.time.max(horizon.min(t_next));
                    break;
                }
            }
        }
    }
}

/// Single Gillespie step from an arbitrary state. Convenience wrapper that
/// rebuilds all clocks; use [`Simulation`] for long runs.
pub fn step<R: Rng + ?Sized>(
    state: &NetworkState,
    params: &ModelParams,
    g: &Graph,
    rng: &mut R,
) -> Result<(NetworkState, StepOutcome)> {
    let mut sim = Simulation::new(g, params, state.clone())?;
    let out = sim.step(rng);
    Ok((sim.state, out))
}

/// Event log plus grid samples of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub events: Vec<Event>,
    pub sample_times: Vec<f64>,
    pub samples: Vec<NetworkState>,
    /// True if the run ended in the absorbing all-clear state before the horizon.
    pub absorbed: bool,
}

impl Trajectory {
    /// `t,kind,node_or_edge` with original node labels; edges as `i-j`.
    pub fn to_csv(&self, g: &Graph) -> String {
        let mut out = String::from("t,kind,node_or_edge\n");
        for ev in &self.events {
            let target = match ev.kind {
                EventKind::Infect | EventKind::Recover => g.label(ev.target).to_string(),
                EventKind::Cut | EventKind::Rewire => {
                    let (i, j) = g.edges()[ev.target];
                    format!("{}-{}", g.label(i), g.label(j))
                }
            };
            out.push_str(&format!("{:.17e},{},{}\n", ev.time, ev.kind, target));
        }
        out
    }
}

/// Per-run RNG: ChaCha stream `run` under the master seed.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// One full trajectory, deterministic in `seed`.
pub fn simulate(
    g: &Graph,
    params: &ModelParams,
    init: &NetworkState,
    horizon: f64,
    grid: &[f64],
    seed: u64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let mut sim = Simulation::new(g, params, init.clone())?;
    let mut rng = run_rng(seed, 0);
    let mut events = Vec::new();
    let mut samples = Vec::with_capacity(grid.len());
    sim.run(
        horizon,
        grid,
        opts,
        &mut rng,
        |_, s| samples.push(s.clone()),
        |e| events.push(*e),
    );
    let absorbed = sim.total_rate() == 0.0;
    Ok(Trajectory {
        events,
        sample_times: grid[..samples.len()].to_vec(),
        samples,
        absorbed,
    })
}
