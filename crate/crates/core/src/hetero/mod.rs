//! Heterogeneous cutting-rate design.
//!
//! With `phi~_i = r - phi_i` the shifted matrix `M~ = M + sigma I`,
//! `sigma = delta_bar + r + psi_bar`, is entrywise nonnegative and each entry
//! is a posynomial in `phi~`. `eta(M) <= -alpha` then holds iff some `v > 0`
//! satisfies `(M~ + alpha I) v <= sigma v`, which together with a posynomial
//! cost is a geometric program.

pub mod barrier;
pub mod cost;
pub mod gp;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::CsrMatrix;
use crate::meanfield::{spectral_abscissa, MeanFieldSystem, StabilityCertificate};
use crate::params::ModelParams;
use crate::stats::spearman;

pub use barrier::BarrierOptions;
pub use cost::{normalized_reciprocal_cost, CutCost, Monomial};
pub use gp::GpProblem;

/// Relative tolerance for spectral abscissa evaluations in this module.
const ETA_TOL: f64 = 1e-11;

/// `M~` and the quantities defining it.
#[derive(Debug, Clone)]
pub struct TildeSystem {
    pub r: f64,
    pub alpha: f64,
    pub delta_bar: f64,
    pub psi_bar: f64,
    /// `delta_bar + r + psi_bar`.
    pub sigma: f64,
    pub tilde_delta: Vec<f64>,
    /// `psi_bar - psi_ij`, one per pair row.
    pub tilde_psi: Vec<f64>,
    pub tilde_phi: Vec<f64>,
    /// Node `i` of pair row `(i, j)`.
    pub pair_owner: Vec<usize>,
    /// `M` at the rates the shift was built from.
    pub system: MeanFieldSystem,
    pub matrix: CsrMatrix,
}

impl TildeSystem {
    /// `max |M~ - M - sigma I|` entrywise.
    pub fn shift_identity_error(&self) -> f64 {
        self.matrix
            .max_abs_diff(&self.system.matrix().add_identity(self.sigma))
    }
}

/// Builds `M~` for the rates in `params`, checking `M~ = M + sigma I`.
pub fn tilde_shift(g: &Graph, params: &ModelParams, r: f64, alpha: f64) -> Result<TildeSystem> {
    let system = MeanFieldSystem::assemble(g, params)?;
    let phi_max = params.phi.iter().copied().fold(0.0, f64::max);
    if !(r > phi_max) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "shift constant r={r} must exceed the largest cutting rate {phi_max}"
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("decay rate alpha={alpha} must be positive")));
    }
    let blocks = system.blocks();
    let delta_bar = params.delta.iter().copied().fold(0.0, f64::max);
    let psi_bar = params.psi.iter().copied().fold(0.0, f64::max);
    let sigma = delta_bar + r + psi_bar;
    let tilde_delta: Vec<f64> = params.delta.iter().map(|d| delta_bar - d).collect();
    let tilde_phi: Vec<f64> = params.phi.iter().map(|p| r - p).collect();
    let tilde_psi: Vec<f64> = blocks.pair_rewiring.iter().map(|p| psi_bar - p).collect();
    let pair_owner: Vec<usize> = g.pair_map().pairs().iter().map(|&(i, _)| i).collect();

    let node_diag: Vec<f64> = tilde_delta.iter().map(|d| d + psi_bar + r).collect();
    let pair_diag: Vec<f64> = pair_owner
        .iter()
        .zip(&tilde_psi)
        .map(|(&i, tp)| tilde_delta[i] + tilde_phi[i] + tp)
        .collect();
    let matrix = blocks.with_diagonals(&node_diag, &pair_diag);
    let out = TildeSystem {
        r,
        alpha,
        delta_bar,
        psi_bar,
        sigma,
        tilde_delta,
        tilde_psi,
        tilde_phi,
        pair_owner,
        system,
        matrix,
    };
    let err = out.shift_identity_error();
    if err > 1e-12 * sigma.max(1.0) {
        return Err(Error::InconsistentState(format!(
            "shift identity violated by {err:e}"
        )));
    }
    if out.matrix.triplets().any(|(_, _, v)| v < 0.0) {
        return Err(Error::InconsistentState("shifted matrix has a negative entry".into()));
    }
    Ok(out)
}

/// Box `phi_lo <= phi_i <= phi_hi`, shift `r > phi_hi`, required decay `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeteroDesignProblem {
    pub alpha: f64,
    pub phi_lo: f64,
    pub phi_hi: f64,
    pub r: f64,
    pub cost: CutCost,
}

impl HeteroDesignProblem {
    /// The diminishing-returns cost normalised to `[0, 1]` over the box.
    pub fn with_normalized_cost(alpha: f64, phi_lo: f64, phi_hi: f64, r: f64) -> Result<Self> {
        Ok(Self {
            alpha,
            phi_lo,
            phi_hi,
            r,
            cost: CutCost::normalized_reciprocal(r, phi_lo, phi_hi)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha={} must be positive", self.alpha)));
        }
        if !(0.0 <= self.phi_lo && self.phi_lo < self.phi_hi && self.phi_hi < self.r) {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= phi_lo < phi_hi < r, got {} {} {}",
                self.phi_lo, self.phi_hi, self.r
            )));
        }
        self.cost.validate()
    }
}

#[derive(Debug, Clone)]
pub struct GpOptions {
    pub barrier: BarrierOptions,
    /// Slack allowed on `eta <= -alpha` in the posterior check.
    pub cert_tol: f64,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            barrier: BarrierOptions::default(),
            cert_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub newton_iterations: usize,
    pub outer_iterations: usize,
    /// Bound on the suboptimality of the log objective.
    pub gap_bound: f64,
    pub stationarity: f64,
    /// `max_k log(((M~ + alpha I) v)_k / (sigma v_k))` at the solution.
    pub max_constraint: f64,
    /// Times the start point was pulled toward `phi_hi` to become feasible.
    pub start_halvings: usize,
}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub phi: Vec<f64>,
    /// Certifying vector, scaled to unit maximum.
    pub v: Vec<f64>,
    /// `sum_i F(phi~_i)`, the quantity the program minimises.
    pub objective: f64,
    /// `sum_i f(phi_i)`, i.e. the objective less `n s`.
    pub cost: f64,
    pub certificate: StabilityCertificate,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize)]
struct DesignJson<'a> {
    alpha: Option<f64>,
    objective: f64,
    cost: f64,
    eta: f64,
    phi: BTreeMap<String, f64>,
    diagnostics: &'a Diagnostics,
}

impl DesignResult {
    /// Rates keyed by original node label.
    pub fn to_json(&self, g: &Graph) -> String {
        let doc = DesignJson {
            alpha: self.certificate.alpha,
            objective: self.objective,
            cost: self.cost,
            eta: self.certificate.eta,
            phi: g
                .labels()
                .iter()
                .zip(&self.phi)
                .map(|(l, p)| (l.to_string(), *p))
                .collect(),
            diagnostics: &self.diagnostics,
        };
        serde_json::to_string_pretty(&doc).expect("design serialises")
    }

    /// `node,degree,phi`.
    pub fn degree_csv(&self, g: &Graph) -> String {
        let mut s = String::from("node,degree,phi\n");
        for (i, p) in self.phi.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", g.label(i), g.degree(i), p));
        }
        s
    }

    /// Spearman correlation between node degree and designed rate.
    pub fn degree_trend(&self, g: &Graph) -> f64 {
        let deg: Vec<f64> = g.degrees().iter().map(|&d| d as f64).collect();
        spearman(&deg, &self.phi)
    }
}

fn with_phi(base: &ModelParams, phi: Vec<f64>) -> ModelParams {
    ModelParams {
        phi,
        ..base.clone()
    }
}

/// Reassembles `M` at the designed rates and certifies it.
pub fn verify_design(g: &Graph, params: &ModelParams, alpha: f64) -> Result<StabilityCertificate> {
    let sys = MeanFieldSystem::assemble(g, params)?;
    Ok(spectral_abscissa(&sys, ETA_TOL)?.with_alpha(alpha))
}

/// Minimum-cost cutting rates with `eta(M) <= -alpha`. The `phi` entries of
/// `base` are ignored.
pub fn solve_gp(
    g: &Graph,
    base: &ModelParams,
    prob: &HeteroDesignProblem,
    opts: &GpOptions,
) -> Result<DesignResult> {
    prob.validate()?;
    base.check_standing_assumption(g)?;
    let n = g.node_count();
    let alpha = prob.alpha;

    let top = with_phi(base, vec![prob.phi_hi; n]);
    let best = verify_design(g, &top, alpha)?;
    if !best.meets_decay(alpha, 0.0) {
        return Err(Error::Infeasible {
            best_decay: -best.eta,
            alpha,
        });
    }

    let tilde = tilde_shift(g, &top, prob.r, alpha)?;
    let gp = GpProblem::build(&tilde, &prob.cost, prob.phi_lo, prob.phi_hi);

    // Start from a uniform rate with the Perron vector of M at that rate.
    let mut y = 0.5 * (gp.y_lo + gp.y_hi);
    let mut start = None;
    for halvings in 0..64 {
        let params = with_phi(base, vec![prob.r - y.exp(); n]);
        let cert = verify_design(g, &params, alpha)?;
        if cert.eta < -alpha {
            let mut z = vec![y; n];
            z.extend(cert.perron_vector.iter().map(|v| v.ln()));
            if z.iter().all(|v| v.is_finite()) && gp.max_constraint(&z) < 0.0 {
                start = Some((z, halvings));
                break;
            }
        }
        y = 0.5 * (y + gp.y_lo);
    }

    let (y_opt, u_opt, diagnostics) = match start {
        Some((z0, halvings)) => {
            let out = barrier::solve(&gp, &z0, n, &opts.barrier)?;
            let diag = Diagnostics {
                newton_iterations: out.newton_iterations,
                outer_iterations: out.outer_iterations,
                gap_bound: out.gap_bound,
                stationarity: out.stationarity,
                max_constraint: out.max_constraint,
                start_halvings: halvings,
            };
            (out.z[..n].to_vec(), out.z[n..].to_vec(), diag)
        }
        None => {
            // No strictly feasible interior: only the top of the box works.
            let z: Vec<f64> = std::iter::repeat_n(gp.y_lo, n)
                .chain(best.perron_vector.iter().map(|v| v.ln()))
                .collect();
            let diag = Diagnostics {
                newton_iterations: 0,
                outer_iterations: 0,
                gap_bound: 0.0,
                stationarity: 0.0,
                max_constraint: gp.max_constraint(&z),
                start_halvings: 64,
            };
            (z[..n].to_vec(), z[n..].to_vec(), diag)
        }
    };

    let phi: Vec<f64> = y_opt
        .iter()
        .map(|y| (prob.r - y.exp()).clamp(prob.phi_lo, prob.phi_hi))
        .collect();
    let umax = u_opt.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v: Vec<f64> = u_opt.iter().map(|u| (u - umax).exp()).collect();
    let objective: f64 = phi.iter().map(|p| prob.cost.shifted(prob.r - p)).sum();
    let cost = objective - n as f64 * prob.cost.offset;

    let params = with_phi(base, phi.clone());
    let certificate = verify_design(g, &params, alpha)?;
    if !certificate.meets_decay(alpha, opts.cert_tol) {
        return Err(Error::Numerical(format!(
            "designed rates give eta={} above -alpha={}",
            certificate.eta, -alpha
        )));
    }
    Ok(DesignResult {
        phi,
        v,
        objective,
        cost,
        certificate,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate;
    use crate::linalg::dense_spectral_abscissa;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(g: &Graph, rng: &mut ChaCha8Rng) -> ModelParams {
        let n = g.node_count();
        ModelParams {
            beta: (0..n).map(|_| rng.random_range(0.05..0.5)).collect(),
            delta: (0..n).map(|_| rng.random_range(0.1..1.0)).collect(),
            phi: (0..n).map(|_| rng.random_range(0.0..0.5)).collect(),
            psi: (0..g.edge_count()).map(|_| rng.random_range(0.05..0.5)).collect(),
        }
    }

    #[test]
    fn homogeneous_rates_have_zero_tilde_terms() {
        let g = generate::cycle(5);
        let p = ModelParams::homogeneous(&g, 0.2, 0.3, 0.1, 0.05);
        let t = tilde_shift(&g, &p, 1.0, 0.01).unwrap();
        assert!(t.tilde_delta.iter().all(|&d| d == 0.0));
        assert!(t.tilde_psi.iter().all(|&d| d == 0.0));
        // Only rounding in the diagonal sums remains.
        assert!(t.shift_identity_error() <= 4.0 * f64::EPSILON * t.sigma);
    }

    #[test]
    fn shift_identity_on_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = generate::path(5);
        for _ in 0..10 {
            let p = random_params(&g, &mut rng);
            let t = tilde_shift(&g, &p, 1.0, 0.01).unwrap();
            // Entrywise comparison against an independently built dense M + sigma I.
            let mut dense = t.system.matrix().to_dense();
            for k in 0..dense.nrows() {
                dense[(k, k)] += t.sigma;
            }
            let err = (t.matrix.to_dense() - dense).abs().max();
            assert!(err <= 1e-12);
        }
    }

    #[test]
    fn stability_equivalence_under_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let g = generate::connected_erdos_renyi(6, 0.5, &mut rng, 100).unwrap();
            let p = random_params(&g, &mut rng);
            let alpha = rng.random_range(0.001..0.2);
            let t = tilde_shift(&g, &p, 1.0, alpha).unwrap();
            let eta = dense_spectral_abscissa(&t.system.matrix().to_dense()).unwrap();
            let eta_t = dense_spectral_abscissa(&t.matrix.to_dense()).unwrap();
            assert!((eta_t - eta - t.sigma).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_small_shift() {
        let g = generate::path(3);
        let p = ModelParams::homogeneous(&g, 0.2, 0.3, 0.5, 0.05);
        assert!(tilde_shift(&g, &p, 0.5, 0.01).is_err());
        assert!(tilde_shift(&g, &p, 0.6, 0.0).is_err());
    }

    #[test]
    fn symmetric_pair_gets_equal_rates() {
        let g = generate::path(2);
        let base = ModelParams::homogeneous(&g, 1.0, 0.5, 0.0, 0.2);
        let prob = HeteroDesignProblem::with_normalized_cost(0.05, 0.0, 2.0, 4.0).unwrap();
        let res = solve_gp(&g, &base, &prob, &GpOptions::default()).unwrap();
        assert!((res.phi[0] - res.phi[1]).abs() < 1e-6 * res.phi[0].max(1.0));
        assert!(res.certificate.eta <= -0.05 + 1e-6);
        // The constraint is active at the optimum.
        assert!(res.certificate.eta > -0.05 - 1e-5);
    }

    #[test]
    fn slack_constraint_gives_lower_bound() {
        let g = generate::cycle(4);
        let base = ModelParams::homogeneous(&g, 0.1, 1.0, 0.0, 0.1);
        let prob = HeteroDesignProblem::with_normalized_cost(1e-4, 0.0, 0.5, 1.0).unwrap();
        let res = solve_gp(&g, &base, &prob, &GpOptions::default()).unwrap();
        assert!(res.phi.iter().all(|&p| p < 1e-6), "{:?}", res.phi);
        assert!(res.cost.abs() < 1e-5);
    }

    #[test]
    fn infeasible_reports_best_decay() {
        let g = generate::complete(4);
        let base = ModelParams::homogeneous(&g, 1.0, 0.1, 0.0, 0.1);
        let prob = HeteroDesignProblem::with_normalized_cost(0.05, 0.0, 0.2, 0.4).unwrap();
        match solve_gp(&g, &base, &prob, &GpOptions::default()) {
            Err(Error::Infeasible { best_decay, alpha }) => {
                assert!(best_decay < alpha);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn exports() {
        let g = generate::path(2);
        let base = ModelParams::homogeneous(&g, 1.0, 0.5, 0.0, 0.2);
        let prob = HeteroDesignProblem::with_normalized_cost(0.05, 0.0, 2.0, 4.0).unwrap();
        let res = solve_gp(&g, &base, &prob, &GpOptions::default()).unwrap();
        let csv = res.degree_csv(&g);
        assert!(csv.starts_with("node,degree,phi\n0,1,"));
        let json: serde_json::Value = serde_json::from_str(&res.to_json(&g)).unwrap();
        assert!(json["phi"]["1"].as_f64().is_some());
        assert_eq!(res.v.iter().copied().fold(0.0, f64::max), 1.0);
    }
}
