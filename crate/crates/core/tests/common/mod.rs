//! Oracles shared by the integration suites. Everything here is built from
//! the model definitions directly, without going through the library's
//! assembly code.
#![allow(dead_code)]

use std::io::Write;

use asis_core::graph::generate;
use asis_core::{Graph, ModelParams};
use nalgebra::DMatrix;
use rand::Rng;

/// Dense `M` with rows `p_1..p_n`, then one row per ordered pair `(i, j)` in
/// the library's pair order.
pub fn dense_m(g: &Graph, p: &ModelParams) -> DMatrix<f64> {
    let n = g.node_count();
    let pairs: Vec<(usize, usize)> = g.pair_map().pairs().to_vec();
    let col = |a: usize, b: usize| n + pairs.iter().position(|&x| x == (a, b)).unwrap();
    let psi = |a: usize, b: usize| p.psi[g.edge_id(a, b).unwrap()];
    let dim = n + pairs.len();
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..n {
        m[(i, i)] = -p.delta[i];
        for &k in g.neighbors(i) {
            m[(i, col(k, i))] += p.beta[i];
        }
    }
    for (r, &(i, j)) in pairs.iter().enumerate() {
        let row = n + r;
        m[(row, i)] = psi(i, j);
        m[(row, row)] -= p.delta[i] + p.phi[i] + psi(i, j);
        for &k in g.neighbors(i) {
            m[(row, col(k, i))] += p.beta[i];
        }
    }
    m
}

/// Dense `M~` from its block definition, and `sigma = delta_bar + r + psi_bar`.
pub fn dense_m_tilde(g: &Graph, p: &ModelParams, r: f64) -> (DMatrix<f64>, f64) {
    let n = g.node_count();
    let pairs: Vec<(usize, usize)> = g.pair_map().pairs().to_vec();
    let col = |a: usize, b: usize| n + pairs.iter().position(|&x| x == (a, b)).unwrap();
    let psi = |a: usize, b: usize| p.psi[g.edge_id(a, b).unwrap()];
    let dbar = p.delta.iter().copied().fold(0.0, f64::max);
    let pbar = p.psi.iter().copied().fold(0.0, f64::max);
    let dim = n + pairs.len();
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..n {
        m[(i, i)] = (dbar - p.delta[i]) + pbar + r;
        for &k in g.neighbors(i) {
            m[(i, col(k, i))] += p.beta[i];
        }
    }
    for (q, &(i, j)) in pairs.iter().enumerate() {
        let row = n + q;
        m[(row, i)] = psi(i, j);
        m[(row, row)] += (dbar - p.delta[i]) + (r - p.phi[i]) + (pbar - psi(i, j));
        for &k in g.neighbors(i) {
            m[(row, col(k, i))] += p.beta[i];
        }
    }
    (m, dbar + r + pbar)
}

/// Largest real part of the spectrum. If the Schur iteration stalls, retry on
/// a diagonal similarity transform, which has the same spectrum.
pub fn eta_dense(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    for attempt in 0..8u32 {
        let scaled = DMatrix::from_fn(dim, dim, |i, j| {
            let d = |k: usize| 1.0 + 0.5 * (((k as u32 + 1) * (attempt + 3)) % 7) as f64 / 7.0;
            if attempt == 0 { m[(i, j)] } else { m[(i, j)] * d(i) / d(j) }
        });
        if let Some(schur) = nalgebra::linalg::Schur::try_new(scaled, f64::EPSILON, 20_000) {
            return schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    panic!("dense Schur decomposition did not converge");
}

pub fn rho_dense(g: &Graph) -> f64 {
    let n = g.node_count();
    let mut a = DMatrix::zeros(n, n);
    for &(i, j) in g.edges() {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    a.symmetric_eigenvalues().max()
}

pub fn connected_graph<R: Rng>(rng: &mut R, n_lo: usize, n_hi: usize) -> Graph {
    loop {
        let n = rng.random_range(n_lo..=n_hi);
        let p = rng.random_range(0.15..0.7);
        if let Some(g) = generate::connected_erdos_renyi(n, p, rng, 50) {
            if g.edge_count() > 0 {
                return g;
            }
        }
    }
}

/// Heterogeneous rates with positive beta, delta, psi.
pub fn random_params<R: Rng>(g: &Graph, rng: &mut R) -> ModelParams {
    let n = g.node_count();
    ModelParams {
        beta: (0..n).map(|_| rng.random_range(0.02..0.6)).collect(),
        delta: (0..n).map(|_| rng.random_range(0.05..1.0)).collect(),
        phi: (0..n).map(|_| rng.random_range(0.0..0.8)).collect(),
        psi: (0..g.edge_count()).map(|_| rng.random_range(0.02..0.6)).collect(),
    }
}

/// One line per criterion, written past the test harness's capture.
pub fn report(criterion: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance {criterion}: {verdict} ({detail})");
}

/// Exact marginals `p_i(t)` and `q_ij(t)` (pair order of the library) from
/// the full joint chain on infection bits and edge bits, by uniformisation.
/// Only usable for `n + m` up to about 12.
pub fn exact_marginals(
    g: &Graph,
    p: &ModelParams,
    infected: &[bool],
    live: &[bool],
    times: &[f64],
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = g.node_count();
    let m = g.edge_count();
    let states = 1usize << (n + m);
    let x = |s: usize, i: usize| s >> i & 1 == 1;
    let a = |s: usize, e: usize| s >> (n + e) & 1 == 1;
    let mut moves: Vec<Vec<(usize, f64)>> = vec![Vec::new(); states];
    for s in 0..states {
        for i in 0..n {
            if x(s, i) {
                moves[s].push((s ^ 1 << i, p.delta[i]));
            } else {
                let pressure = g
                    .neighbors(i)
                    .iter()
                    .filter(|&&k| x(s, k) && a(s, g.edge_id(i, k).unwrap()))
                    .count();
                if pressure > 0 {
                    moves[s].push((s ^ 1 << i, p.beta[i] * pressure as f64));
                }
            }
        }
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            let bit = 1 << (n + e);
            if a(s, e) {
                let rate = p.phi[i] * f64::from(u8::from(x(s, i))) + p.phi[j] * f64::from(u8::from(x(s, j)));
                if rate > 0.0 {
                    moves[s].push((s ^ bit, rate));
                }
            } else {
                moves[s].push((s ^ bit, p.psi[e]));
            }
        }
    }
    let exit: Vec<f64> = moves.iter().map(|mv| mv.iter().map(|m| m.1).sum()).collect();
    let lambda = exit.iter().copied().fold(0.0, f64::max).max(1e-12) * 1.05;

    let mut start = 0usize;
    for i in 0..n {
        if infected[i] {
            start |= 1 << i;
        }
    }
    for e in 0..m {
        if live[e] {
            start |= 1 << (n + e);
        }
    }
    let mut dist = vec![0.0; states];
    dist[start] = 1.0;
    let uniform_step = |v: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().zip(&exit).map(|(pi, r)| pi * (1.0 - r / lambda)).collect();
        for (s, mv) in moves.iter().enumerate() {
            for &(t, r) in mv {
                out[t] += v[s] * r / lambda;
            }
        }
        out
    };
    let marginals = |d: &[f64]| {
        let mut pv = vec![0.0; n];
        let mut qv = vec![0.0; g.pair_map().len()];
        for (s, &w) in d.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                if x(s, i) {
                    pv[i] += w;
                }
            }
            for (k, &(i, j)) in g.pair_map().pairs().iter().enumerate() {
                if x(s, i) && a(s, g.edge_id(i, j).unwrap()) {
                    qv[k] += w;
                }
            }
        }
        (pv, qv)
    };

    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    for &t in times {
        let h = t - now;
        if h > 0.0 {
            // Split long intervals so the Poisson weights stay representable.
            let pieces = (lambda * h / 20.0).ceil().max(1.0) as usize;
            let tau = h / pieces as f64;
            for _ in 0..pieces {
                let mu = lambda * tau;
                let mut weight = (-mu).exp();
                let mut term = dist.clone();
                let mut acc: Vec<f64> = term.iter().map(|v| v * weight).collect();
                let mut mass = weight;
                let mut k = 0;
                while 1.0 - mass > 1e-15 && k < 10_000 {
                    k += 1;
                    term = uniform_step(&term);
                    weight *= mu / k as f64;
                    mass += weight;
                    for (a, t) in acc.iter_mut().zip(&term) {
                        *a += weight * t;
                    }
                }
                dist = acc;
            }
            now = t;
        }
        out.push(marginals(&dist));
    }
    out
}
