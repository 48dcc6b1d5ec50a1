//! Monte Carlo estimation of `p_i(t) = Pr(x_i(t) = 1)` and
//! `q_ij(t) = E[a_ij(t) x_i(t)]`.
//!
//! Runs are independent: run `r` uses ChaCha stream `r` under the master
//! seed, and per-run results are merged as integer counts, so the estimate
//! is identical whether the runs execute sequentially or on the rayon pool.

use serde::Serialize;

use super::{run_rng, NetworkState, SimOptions, Simulation};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::params::ModelParams;
use crate::stats::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when the `parallel` feature is off.
    #[default]
    Parallel,
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub horizon: f64,
    pub grid: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub options: SimOptions,
    pub execution: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleEstimate {
    pub times: Vec<f64>,
    pub runs: usize,
    /// `infected[k][i]`: runs with `x_i(t_k) = 1`.
    pub infected: Vec<Vec<u64>>,
    /// `pair_infected[k][row]`: runs with `a_ij x_i = 1` at `t_k`, rows in
    /// edge-index order.
    pub pair_infected: Vec<Vec<u64>>,
    /// Runs with no infected node at the horizon.
    pub extinct_runs: u64,
}

#[derive(Debug, Clone)]
struct Tally {
    infected: Vec<Vec<u64>>,
    pair_infected: Vec<Vec<u64>>,
    extinct: u64,
}

impl Tally {
    fn new(k: usize, n: usize, pairs: usize) -> Self {
        Self {
            infected: vec![vec![0; n]; k],
            pair_infected: vec![vec![0; pairs]; k],
            extinct: 0,
        }
    }

    #[cfg_attr(not(feature = "parallel"), allow(dead_code))]
    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.infected.iter_mut().zip(other.infected) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.pair_infected.iter_mut().zip(other.pair_infected) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.extinct += other.extinct;
        self
    }
}

fn run_one(
    sim: &mut Simulation<'_>,
    g: &Graph,
    init: &NetworkState,
    cfg: &EnsembleConfig,
    run: u64,
    tally: &mut Tally,
) {
    sim.reset(init).expect("initial state validated once");
    let mut rng = run_rng(cfg.seed, run);
    let map = g.pair_map();
    sim.run(
        cfg.horizon,
        &cfg.grid,
        &cfg.options,
        &mut rng,
        |k, s| {
            for (i, &x) in s.infected.iter().enumerate() {
                if x {
                    tally.infected[k][i] += 1;
                    for row in map.block(i) {
                        if s.live[map.edge_of(row)] {
                            tally.pair_infected[k][row] += 1;
                        }
                    }
                }
            }
        },
        |_| {},
    );
    if sim.state().is_disease_free() {
        tally.extinct += 1;
    }
}

/// Ensemble of `cfg.runs` independent trajectories sampled on `cfg.grid`.
pub fn estimate_probabilities(
    g: &Graph,
    params: &ModelParams,
    init: &NetworkState,
    cfg: &EnsembleConfig,
) -> Result<EnsembleEstimate> {
    if cfg.runs == 0 {
        return Err(Error::InvalidParameter("runs must be at least 1".into()));
    }
    if !(cfg.horizon > 0.0) {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    if cfg.grid.windows(2).any(|w| w[1] < w[0]) || cfg.grid.iter().any(|&t| t < 0.0 || t > cfg.horizon) {
        return Err(Error::InvalidParameter(
            "grid must be nondecreasing within [0, horizon]".into(),
        ));
    }
    // Validates params and state once.
    let proto = Simulation::new(g, params, init.clone())?;
    let (k, n, pairs) = (cfg.grid.len(), g.node_count(), g.pair_map().len());

    let tally = match cfg.execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..cfg.runs as u64)
                .into_par_iter()
                .fold(
                    || (proto.clone(), Tally::new(k, n, pairs)),
                    |(mut sim, mut tally), run| {
                        run_one(&mut sim, g, init, cfg, run, &mut tally);
                        (sim, tally)
                    },
                )
                .map(|(_, t)| t)
                .reduce(|| Tally::new(k, n, pairs), Tally::merge)
        }
        _ => {
            let mut sim = proto;
            let mut tally = Tally::new(k, n, pairs);
            for run in 0..cfg.runs as u64 {
                run_one(&mut sim, g, init, cfg, run, &mut tally);
            }
            tally
        }
    };

    Ok(EnsembleEstimate {
        times: cfg.grid.clone(),
        runs: cfg.runs,
        infected: tally.infected,
        pair_infected: tally.pair_infected,
        extinct_runs: tally.extinct,
    })
}

impl EnsembleEstimate {
    pub fn p(&self, k: usize, i: usize) -> f64 {
        self.infected[k][i] as f64 / self.runs as f64
    }

    pub fn q(&self, k: usize, row: usize) -> f64 {
        self.pair_infected[k][row] as f64 / self.runs as f64
    }

    /// Normal-approximation half-width of a two-sided interval for a
    /// proportion estimated at `phat`.
    pub fn half_width(&self, phat: f64, level: f64) -> f64 {
        let z = normal_quantile(0.5 + level / 2.0);
        z * (phat * (1.0 - phat) / self.runs as f64).sqrt()
    }

    /// Mean infected fraction at grid point `k`.
    pub fn prevalence(&self, k: usize) -> f64 {
        let n = self.infected[k].len();
        self.infected[k].iter().sum::<u64>() as f64 / (n as f64 * self.runs as f64)
    }

    pub fn extinction_fraction(&self) -> f64 {
        self.extinct_runs as f64 / self.runs as f64
    }

    /// Columns `t, p_<label>...` and, optionally, `q_<i>_<j>...` in edge-index order.
    pub fn to_csv(&self, g: &Graph, with_q: bool) -> String {
        let mut out = String::from("t");
        for &l in g.labels() {
            out.push_str(&format!(",p_{l}"));
        }
        if with_q {
            for &(i, j) in g.pair_map().pairs() {
                out.push_str(&format!(",q_{}_{}", g.label(i), g.label(j)));
            }
        }
        out.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t}"));
            for i in 0..self.infected[k].len() {
                out.push_str(&format!(",{}", self.p(k, i)));
            }
            if with_q {
                for row in 0..self.pair_infected[k].len() {
                    out.push_str(&format!(",{}", self.q(k, row)));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate;

    fn cfg(runs: usize, grid: Vec<f64>, execution: Execution) -> EnsembleConfig {
        EnsembleConfig {
            horizon: *grid.last().unwrap_or(&1.0),
            grid,
            runs,
            seed: 17,
            options: SimOptions::default(),
            execution,
        }
    }

    #[test]
    fn disease_free_start_stays_zero() {
        let g = generate::cycle(4);
        let p = ModelParams::homogeneous(&g, 2.0, 1.0, 1.0, 1.0);
        let init = NetworkState::with_infected(&g, &[]);
        let est = estimate_probabilities(&g, &p, &init, &cfg(1, vec![0.0, 1.0, 2.0], Execution::Sequential)).unwrap();
        assert!(est.infected.iter().flatten().all(|&c| c == 0));
        assert_eq!(est.extinction_fraction(), 1.0);
    }

    #[test]
    fn initial_pairs_match_state() {
        let g = generate::path(3);
        let p = ModelParams::homogeneous(&g, 1.0, 1.0, 1.0, 1.0);
        let mut init = NetworkState::with_infected(&g, &[0, 1]);
        init.live[1] = false;
        let est = estimate_probabilities(&g, &p, &init, &cfg(50, vec![0.0, 0.5], Execution::Sequential)).unwrap();
        for (row, &(i, _)) in g.pair_map().pairs().iter().enumerate() {
            let expect = init.infected[i] && init.live[g.pair_map().edge_of(row)];
            assert_eq!(est.q(0, row), if expect { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn parallel_and_sequential_agree_exactly() {
        let g = generate::cycle(5);
        let p = ModelParams::homogeneous(&g, 1.3, 1.0, 0.5, 0.5);
        let init = NetworkState::with_infected(&g, &[0]);
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 * 0.5).collect();
        let a = estimate_probabilities(&g, &p, &init, &cfg(300, grid.clone(), Execution::Sequential)).unwrap();
        let b = estimate_probabilities(&g, &p, &init, &cfg(300, grid, Execution::Parallel)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn q_never_exceeds_p() {
        let g = generate::complete(4);
        let p = ModelParams::homogeneous(&g, 1.0, 0.8, 1.5, 0.7);
        let init = NetworkState::with_infected(&g, &[0, 1]);
        let grid: Vec<f64> = (0..=8).map(|k| k as f64).collect();
        let est = estimate_probabilities(&g, &p, &init, &cfg(200, grid, Execution::Parallel)).unwrap();
        for k in 0..est.times.len() {
            for (row, &(i, _)) in g.pair_map().pairs().iter().enumerate() {
                assert!(est.q(k, row) <= est.p(k, i));
            }
        }
    }

    #[test]
    fn zero_runs_rejected() {
        let g = generate::path(2);
        let p = ModelParams::homogeneous(&g, 1.0, 1.0, 1.0, 1.0);
        let init = NetworkState::with_infected(&g, &[0]);
        assert!(estimate_probabilities(&g, &p, &init, &cfg(0, vec![0.0], Execution::Sequential)).is_err());
    }
}
