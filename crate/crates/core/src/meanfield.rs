//! Linear bounding system for the infection probabilities.
//!
//! The state is `z = col(p, q)` with `p_i = Pr(x_i = 1)` and
//! `q_ij = E[a_ij x_i]`, rows of `q` in [`EdgeIndexMap`] order. The bounding
//! matrix is
//!
//! ```text
//! M = [ -D1   B1                  ]
//!     [ Psi1  B2 - D2 - Phi - Psi2 ]
//! ```
//!
//! and satisfies `dz/dt <= M z`. `M` is Metzler, so `z(t) <= exp(M t) z(0)`
//! entrywise and `eta(M) < 0` certifies exponential decay of every `p_i`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{EdgeIndexMap, Graph};
use crate::linalg::{
    dense_spectral_abscissa, perron, strongly_connected_components, CsrMatrix, PerronOptions,
};
use crate::params::ModelParams;

/// Sparse row `T_i` (length `2m`): a one at the column of every pair
/// `(k, i)`, `k ∈ N_i(0)`, so that `T_i q = sum_k q_ki`.
pub fn inflow_row(g: &Graph, i: usize) -> Vec<(usize, f64)> {
    let mut row: Vec<(usize, f64)> = g
        .neighbors(i)
        .iter()
        .map(|&k| (g.pair_index(k, i).expect("symmetric adjacency"), 1.0))
        .collect();
    row.sort_by_key(|&(c, _)| c);
    row
}

/// The individual blocks of `M`.
#[derive(Debug, Clone)]
pub struct MeanFieldBlocks {
    /// `D1`: recovery rate per node.
    pub recovery: Vec<f64>,
    /// `B1` (`n x 2m`), row `i` equal to `beta_i T_i`.
    pub b1: CsrMatrix,
    /// `Psi1` (`2m x n`), `psi_ij` at row `(i, j)`, column `i`.
    pub psi1: CsrMatrix,
    /// `B2` (`2m x 2m`), row `(i, j)` equal to `beta_i T_i`.
    pub b2: CsrMatrix,
    /// Diagonals of `D2`, `Phi`, `Psi2`, one entry per pair row.
    pub pair_recovery: Vec<f64>,
    pub pair_cutting: Vec<f64>,
    pub pair_rewiring: Vec<f64>,
}

impl MeanFieldBlocks {
    pub fn assemble(g: &Graph, params: &ModelParams) -> Result<Self> {
        params.validate(g)?;
        let n = g.node_count();
        let map = g.pair_map();
        let pairs = map.len();
        let rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| inflow_row(g, i)).collect();

        let mut b1 = Vec::new();
        let mut psi1 = Vec::new();
        let mut b2 = Vec::new();
        let mut pair_recovery = vec![0.0; pairs];
        let mut pair_cutting = vec![0.0; pairs];
        let mut pair_rewiring = vec![0.0; pairs];
        for (i, row) in rows.iter().enumerate() {
            let beta = params.beta[i];
            b1.extend(row.iter().map(|&(c, v)| (i, c, beta * v)));
            for r in map.block(i) {
                let psi = params.psi_of_pair(g, r);
                psi1.push((r, i, psi));
                b2.extend(row.iter().map(|&(c, v)| (r, c, beta * v)));
                pair_recovery[r] = params.delta[i];
                pair_cutting[r] = params.phi[i];
                pair_rewiring[r] = psi;
            }
        }
        Ok(Self {
            recovery: params.delta.clone(),
            b1: CsrMatrix::from_triplets(n, pairs, b1),
            psi1: CsrMatrix::from_triplets(pairs, n, psi1),
            b2: CsrMatrix::from_triplets(pairs, pairs, b2),
            pair_recovery,
            pair_cutting,
            pair_rewiring,
        })
    }

    pub fn node_count(&self) -> usize {
        self.recovery.len()
    }

    pub fn pair_count(&self) -> usize {
        self.pair_recovery.len()
    }

    /// Places the two off-diagonal coupling blocks plus the given diagonals
    /// into one `(n + 2m)`-square matrix.
    pub(crate) fn with_diagonals(&self, node_diag: &[f64], pair_diag: &[f64]) -> CsrMatrix {
        let n = self.node_count();
        let dim = n + self.pair_count();
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(
            dim + self.b1.nnz() + self.psi1.nnz() + self.b2.nnz(),
        );
        t.extend(node_diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
        t.extend(pair_diag.iter().enumerate().map(|(r, &d)| (n + r, n + r, d)));
        t.extend(self.b1.triplets().map(|(r, c, v)| (r, n + c, v)));
        t.extend(self.psi1.triplets().map(|(r, c, v)| (n + r, c, v)));
        t.extend(self.b2.triplets().map(|(r, c, v)| (n + r, n + c, v)));
        CsrMatrix::from_triplets(dim, dim, t)
    }
}

/// Assembled bounding matrix with its bookkeeping.
#[derive(Debug, Clone)]
pub struct MeanFieldSystem {
    matrix: CsrMatrix,
    blocks: MeanFieldBlocks,
    pair_map: EdgeIndexMap,
}

impl MeanFieldSystem {
    pub fn assemble(g: &Graph, params: &ModelParams) -> Result<Self> {
        let blocks = MeanFieldBlocks::assemble(g, params)?;
        let node_diag: Vec<f64> = blocks.recovery.iter().map(|d| -d).collect();
        let pair_diag: Vec<f64> = (0..blocks.pair_count())
            .map(|r| -(blocks.pair_recovery[r] + blocks.pair_cutting[r] + blocks.pair_rewiring[r]))
            .collect();
        let matrix = blocks.with_diagonals(&node_diag, &pair_diag);
        Ok(Self {
            matrix,
            blocks,
            pair_map: g.pair_map().clone(),
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn blocks(&self) -> &MeanFieldBlocks {
        &self.blocks
    }

    pub fn pair_map(&self) -> &EdgeIndexMap {
        &self.pair_map
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn node_count(&self) -> usize {
        self.blocks.node_count()
    }

    pub fn is_metzler(&self) -> bool {
        self.matrix.min_offdiagonal() >= 0.0
    }

    /// Perron shift: `1 + max_i |M_ii|`.
    pub fn perron_shift(&self) -> f64 {
        1.0 + self
            .matrix
            .diagonal()
            .iter()
            .map(|d| d.abs())
            .fold(0.0, f64::max)
    }

    /// `z0 = col(p(0), q(0))` for a deterministic initial condition.
    pub fn initial_vector(&self, infected: &[bool], live: &[bool]) -> Vec<f64> {
        let n = self.node_count();
        let mut z = vec![0.0; self.dimension()];
        for (i, &x) in infected.iter().enumerate() {
            if x {
                z[i] = 1.0;
                for r in self.pair_map.block(i) {
                    if live[self.pair_map.edge_of(r)] {
                        z[n + r] = 1.0;
                    }
                }
            }
        }
        z
    }
}

/// Spectral abscissa of `M` with its Perron vector.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityCertificate {
    pub eta: f64,
    pub stable: bool,
    pub dimension: usize,
    pub shift: f64,
    pub iterations: usize,
    /// Required decay rate, when checked against one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip)]
    pub perron_vector: Vec<f64>,
}

impl StabilityCertificate {
    /// `eta <= -alpha + slack`.
    pub fn meets_decay(&self, alpha: f64, slack: f64) -> bool {
        self.eta <= -alpha + slack
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialises")
    }
}

/// `eta(M)` by power iteration on `M + cI`, `c = 1 + max |M_ii|`. `tol` is
/// relative to `max(1, |eta|)`.
pub fn spectral_abscissa(sys: &MeanFieldSystem, tol: f64) -> Result<StabilityCertificate> {
    let c = sys.perron_shift();
    let shifted = sys.matrix.add_identity(c);
    let res = perron(
        sys.dimension(),
        |x, y| shifted.matvec(x, y),
        &PerronOptions {
            tol,
            scale_floor: 1.0,
            shift: c,
            ..PerronOptions::default()
        },
    )?;
    let eta = res.value - c;
    Ok(StabilityCertificate {
        eta,
        stable: eta < 0.0,
        dimension: sys.dimension(),
        shift: c,
        iterations: res.iterations,
        alpha: None,
        perron_vector: res.vector,
    })
}

/// Dense real-Schur cross-check of `eta(M)`.
pub fn spectral_abscissa_dense(sys: &MeanFieldSystem) -> Result<f64> {
    dense_spectral_abscissa(&sys.matrix.to_dense())
}

/// Strong connectivity of the off-diagonal pattern of `M`.
pub fn check_irreducible(sys: &MeanFieldSystem) -> bool {
    strongly_connected_components(&sys.matrix.offdiagonal_pattern()).len() == 1
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum IntegrationMethod {
    /// Taylor series of `exp(tau B)` with `B = M + cI >= 0`, `tau ||B|| <= 1`
    /// per substep. Every term is nonnegative, so there is no cancellation.
    #[default]
    ExpmAction,
    /// Adaptive Dormand-Prince 5(4).
    Rk45 { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundTrajectory {
    pub times: Vec<f64>,
    /// `values[k]` is `z(times[k])`.
    pub values: Vec<Vec<f64>>,
}

/// Solves `dz/dt = M z` from `z(0) = z0` and samples it on `grid`.
pub fn integrate_bound(
    sys: &MeanFieldSystem,
    z0: &[f64],
    grid: &[f64],
    method: IntegrationMethod,
) -> Result<BoundTrajectory> {
    if z0.len() != sys.dimension() {
        return Err(Error::Dimension {
            what: "initial vector",
            expected: sys.dimension(),
            got: z0.len(),
        });
    }
    if let Some(bad) = z0.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidParameter(format!("initial vector has entry {bad}")));
    }
    if grid.iter().any(|&t| !(t >= 0.0)) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("grid must be nondecreasing and nonnegative".into()));
    }
    let mut z = z0.to_vec();
    let mut t = 0.0;
    let mut values = Vec::with_capacity(grid.len());
    let (shifted, c) = nonnegative_shift(&sys.matrix);
    for &tk in grid {
        let h = tk - t;
        if h > 0.0 {
            match method {
                IntegrationMethod::ExpmAction => expm_action(&shifted, c, h, &mut z),
                IntegrationMethod::Rk45 { rtol, atol } => rk45(&sys.matrix, h, rtol, atol, &mut z)?,
            }
            t = tk;
        }
        values.push(z.clone());
    }
    Ok(BoundTrajectory {
        times: grid.to_vec(),
        values,
    })
}

fn nonnegative_shift(m: &CsrMatrix) -> (CsrMatrix, f64) {
    let c = m.diagonal().iter().map(|&d| -d).fold(0.0, f64::max);
    (m.add_identity(c), c)
}

/// `z <- exp((B - cI) h) z` for entrywise nonnegative `B`.
fn expm_action(b: &CsrMatrix, c: f64, h: f64, z: &mut [f64]) {
    let norm = b.norm_inf();
    let substeps = (h * norm).ceil().max(1.0) as usize;
    let tau = h / substeps as f64;
    let decay = (-c * tau).exp();
    let mut term = vec![0.0; z.len()];
    let mut next = vec![0.0; z.len()];
    for _ in 0..substeps {
        term.copy_from_slice(z);
        let mut acc = z.to_vec();
        for k in 1..=60 {
            b.matvec(&term, &mut next);
            let f = tau / k as f64;
            let mut tmax = 0.0f64;
            for (t, nx) in term.iter_mut().zip(&next) {
                *t = nx * f;
                tmax = tmax.max(t.abs());
            }
            let mut amax = 0.0f64;
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += t;
                amax = amax.max(a.abs());
            }
            if tmax <= 1e-18 * amax || tmax == 0.0 {
                break;
            }
        }
        for (zi, a) in z.iter_mut().zip(&acc) {
            *zi = a * decay;
        }
    }
}

/// Dormand-Prince 5(4) over `[0, h]` with embedded error control.
fn rk45(m: &CsrMatrix, h: f64, rtol: f64, atol: f64, z: &mut [f64]) -> Result<()> {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let _ = C;
    let dim = z.len();
    let mut k = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];
    let mut t = 0.0;
    let mut dt = (h / 10.0).min(1.0 / m.norm_inf().max(1e-300));
    let mut steps = 0usize;
    while t < h {
        steps += 1;
        if steps > 10_000_000 {
            return Err(Error::NoConvergence {
                what: "RK45 integration",
                iterations: steps,
            });
        }
        dt = dt.min(h - t);
        m.matvec(z, &mut k[0]);
        for s in 1..7 {
            for d in 0..dim {
                let mut acc = z[d];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += dt * A[s][j] * kj[d];
                }
                stage[d] = acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            m.matvec(&stage, &mut tail[0]);
        }
        let mut err = 0.0f64;
        for d in 0..dim {
            let mut s5 = z[d];
            let mut s4 = z[d];
            for s in 0..7 {
                s5 += dt * B5[s] * k[s][d];
                s4 += dt * B4[s] * k[s][d];
            }
            y5[d] = s5;
            let scale = atol + rtol * z[d].abs().max(s5.abs());
            err = err.max((s5 - s4).abs() / scale);
        }
        if err <= 1.0 {
            t += dt;
            z.copy_from_slice(&y5);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        dt *= factor;
    }
    Ok(())
}
