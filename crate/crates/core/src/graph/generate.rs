//! Small graph families for tests and synthetic experiments.

use rand::Rng;

use super::Graph;

pub fn path(n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    Graph::from_edges(n, &edges).expect("path is simple")
}

pub fn cycle(n: usize) -> Graph {
    assert!(n >= 3, "cycle needs at least three nodes");
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Graph::from_edges(n, &edges).expect("cycle is simple")
}

pub fn complete(n: usize) -> Graph {
    let edges: Vec<_> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    Graph::from_edges(n, &edges).expect("complete graph is simple")
}

/// G(n, p).
pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).expect("G(n,p) is simple")
}

/// G(n, p) conditioned on connectivity by rejection. Returns `None` after
/// `max_tries` disconnected draws.
pub fn connected_erdos_renyi<R: Rng + ?Sized>(
    n: usize,
    p: f64,
    rng: &mut R,
    max_tries: usize,
) -> Option<Graph> {
    (0..max_tries)
        .map(|_| erdos_renyi(n, p, rng))
        .find(Graph::is_strongly_connected)
}

/// Preferential attachment: a seed clique on `attach + 1` nodes, then each new
/// node links to `attach` distinct existing nodes chosen proportionally to
/// degree. Connected by construction.
pub fn preferential_attachment<R: Rng + ?Sized>(n: usize, attach: usize, rng: &mut R) -> Graph {
    assert!(attach >= 1, "attach must be positive");
    let seed = (attach + 1).min(n);
    let mut edges = Vec::new();
    // Each endpoint appears once per incident edge.
    let mut urn = Vec::new();
    for i in 0..seed {
        for j in i + 1..seed {
            edges.push((i, j));
            urn.push(i);
            urn.push(j);
        }
    }
    for v in seed..n {
        let mut chosen: Vec<usize> = Vec::with_capacity(attach);
        while chosen.len() < attach.min(v) {
            let t = if urn.is_empty() {
                rng.random_range(0..v)
            } else {
                urn[rng.random_range(0..urn.len())]
            };
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        for t in chosen {
            edges.push((t, v));
            urn.push(t);
            urn.push(v);
        }
    }
    Graph::from_edges(n, &edges).expect("attachment graph is simple")
}
