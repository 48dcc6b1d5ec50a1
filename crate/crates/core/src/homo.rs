//! Homogeneous populations: closed-form decay rate and cost-optimal
//! `(phi, psi)`.
//!
//! With all rates equal, `eta(M)` equals the larger root `lambda_+` of
//!
//! ```text
//! l^2 + (2 delta + phi + psi - beta rho) l + delta (delta + phi + psi) - beta rho (delta + psi)
//! ```
//!
//! where `rho` is the spectral radius of `A0`. For `alpha < delta` the decay
//! constraint `lambda_+ <= -alpha` is equivalent to the affine condition
//! `phi >= (beta rho - delta + alpha) (psi / (delta - alpha) + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::hetero::cost::normalized_reciprocal_cost;
use crate::meanfield::{spectral_abscissa, MeanFieldSystem, StabilityCertificate};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousParams {
    pub beta: f64,
    pub delta: f64,
    pub phi: f64,
    pub psi: f64,
    pub rho: f64,
}

impl HomogeneousParams {
    fn transmission(&self) -> f64 {
        self.beta * self.rho
    }

    /// `(beta rho + phi + psi)^2 - 4 beta rho phi`, written as a sum of
    /// nonnegative terms so it never rounds below zero.
    fn discriminant(&self) -> f64 {
        let b = self.transmission();
        (b - self.phi).powi(2) + self.psi * self.psi + 2.0 * self.psi * (b + self.phi)
    }

    /// Larger root of the characteristic quadratic; equals `eta(M)`.
    pub fn lambda_plus(&self) -> f64 {
        let b = self.transmission();
        0.5 * (b - 2.0 * self.delta - self.phi - self.psi + self.discriminant().sqrt())
    }

    /// `beta rho == phi` is excluded from the eigenvector argument behind
    /// `eta(M) = lambda_+`. The formula stays continuous there.
    pub fn is_degenerate(&self) -> bool {
        let b = self.transmission();
        (b - self.phi).abs() <= 1e-12 * b.abs().max(self.phi.abs()).max(1e-300)
    }

    /// Right-hand side of the stability threshold `delta > rhs`.
    pub fn threshold(&self) -> f64 {
        0.5 * (self.transmission() - self.phi - self.psi) + 0.5 * self.discriminant().sqrt()
    }

    pub fn is_stable(&self) -> bool {
        self.delta > self.threshold()
    }

    /// `delta - threshold`; positive means stable.
    pub fn margin(&self) -> f64 {
        self.delta - self.threshold()
    }
}

/// Scalar cost of a rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostFunction {
    Zero,
    Linear { weight: f64 },
    /// `weight / x`: cheap to rewire fast, expensive to keep edges cut.
    Reciprocal { weight: f64 },
    /// Normalised `1/(r - x)` cost, 0 at `lo` and 1 at `hi`.
    NormalizedReciprocal { r: f64, lo: f64, hi: f64 },
}

impl CostFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Linear { weight } => weight * x,
            Self::Reciprocal { weight } => weight / x,
            Self::NormalizedReciprocal { r, lo, hi } => {
                normalized_reciprocal_cost(x.clamp(lo, hi), r, lo, hi).unwrap_or(f64::NAN)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub phi_lo: f64,
    pub phi_hi: f64,
    pub psi_lo: f64,
    pub psi_hi: f64,
}

impl RateBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi;
        if !ok(self.phi_lo, self.phi_hi) || !ok(self.psi_lo, self.psi_hi) {
            return Err(Error::InvalidParameter(format!("invalid rate bounds {self:?}")));
        }
        Ok(())
    }
}

/// Minimise `nodes * f(phi) + edges * g(psi)` over the box subject to
/// `lambda_+(phi, psi) <= -alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomoDesignProblem {
    pub alpha: f64,
    pub bounds: RateBounds,
    /// Cutting cost `f`, assumed nondecreasing.
    pub cut_cost: CostFunction,
    /// Rewiring cost `g`.
    pub rewire_cost: CostFunction,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomoOptimum {
    pub phi: f64,
    pub psi: f64,
    pub cost: f64,
    pub lambda_plus: f64,
    pub alpha: f64,
    /// Decay constraint binds at the optimum.
    pub active: bool,
    pub degenerate: bool,
}

/// Smallest cutting rate meeting the decay target for a given `psi`,
/// ignoring bounds. Requires `alpha < delta`.
pub fn min_cutting_rate(beta: f64, delta: f64, rho: f64, alpha: f64, psi: f64) -> f64 {
    let a = delta - alpha;
    (beta * rho - delta + alpha) * (psi / a + 1.0)
}

fn lambda(beta: f64, delta: f64, rho: f64, phi: f64, psi: f64) -> f64 {
    HomogeneousParams {
        beta,
        delta,
        phi,
        psi,
        rho,
    }
    .lambda_plus()
}

/// Largest decay rate `-lambda_+` reachable in the box.
pub fn best_decay(beta: f64, delta: f64, rho: f64, bounds: &RateBounds) -> f64 {
    // lambda_+ is nonincreasing in phi, so phi_hi is optimal for every psi.
    let steps = 2048;
    (0..=steps)
        .map(|k| bounds.psi_lo + (bounds.psi_hi - bounds.psi_lo) * k as f64 / steps as f64)
        .map(|psi| -lambda(beta, delta, rho, bounds.phi_hi, psi))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn optimize_homogeneous(prob: &HomoDesignProblem, beta: f64, delta: f64, rho: f64) -> Result<HomoOptimum> {
    prob.bounds.validate()?;
    let alpha = prob.alpha;
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let b = prob.bounds;
    let infeasible = || Error::Infeasible {
        best_decay: best_decay(beta, delta, rho, &b),
        alpha,
    };
    if alpha >= delta {
        // lambda_+ + delta > 0 whenever beta rho psi > 0.
        return Err(infeasible());
    }

    // Smallest feasible phi for a given psi, or None.
    let required_phi = |psi: f64| -> Option<f64> {
        let mut phi = min_cutting_rate(beta, delta, rho, alpha, psi).max(b.phi_lo);
        if phi > b.phi_hi {
            return None;
        }
        if lambda(beta, delta, rho, phi, psi) > -alpha {
            // Rounding on the closed form; settle by bisection on lambda_+.
            let (mut lo, mut hi) = (phi, b.phi_hi);
            if lambda(beta, delta, rho, hi, psi) > -alpha {
                return None;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if lambda(beta, delta, rho, mid, psi) <= -alpha {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            phi = hi;
        }
        Some(phi)
    };
    let cost = |phi: f64, psi: f64| {
        prob.nodes as f64 * prob.cut_cost.eval(phi) + prob.edges as f64 * prob.rewire_cost.eval(psi)
    };

    // Feasible psi range: required_phi is affine in psi, so it is an interval.
    let kappa = beta * rho - delta + alpha;
    let a = delta - alpha;
    let mut psi_hi = b.psi_hi;
    let mut psi_lo = b.psi_lo;
    if kappa > 0.0 {
        psi_hi = psi_hi.min(a * (b.phi_hi / kappa - 1.0));
    }
    if psi_hi < psi_lo {
        return Err(infeasible());
    }
    if required_phi(psi_lo).is_none() {
        // Only reachable through rounding at a single point.
        if required_phi(psi_hi).is_none() {
            return Err(infeasible());
        }
        psi_lo = psi_hi;
    }

    let objective = |psi: f64| required_phi(psi).map_or(f64::INFINITY, |phi| cost(phi, psi));
    let mut candidates: Vec<f64> = Vec::new();
    let samples = 2048;
    for k in 0..=samples {
        candidates.push(psi_lo + (psi_hi - psi_lo) * k as f64 / samples as f64);
    }
    if kappa > 0.0 {
        let kink = a * (b.phi_lo / kappa - 1.0);
        if kink > psi_lo && kink < psi_hi {
            candidates.push(kink);
        }
    }
    candidates.sort_by(f64::total_cmp);
    let values: Vec<f64> = candidates.iter().map(|&p| objective(p)).collect();
    let best = (0..values.len())
        .min_by(|&x, &y| values[x].total_cmp(&values[y]))
        .expect("non-empty candidate set");
    let mut psi_star = candidates[best];
    let mut f_star = values[best];

    // Golden-section polish inside the neighbouring bracket.
    let (mut lo, mut hi) = (
        candidates[best.saturating_sub(1)],
        candidates[(best + 1).min(candidates.len() - 1)],
    );
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - invphi * (hi - lo);
    let mut x2 = lo + invphi * (hi - lo);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    for _ in 0..120 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = objective(x2);
        }
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f < f_star {
            psi_star = x;
            f_star = f;
        }
    }

    let phi_star = required_phi(psi_star).ok_or_else(infeasible)?;
    let lp = lambda(beta, delta, rho, phi_star, psi_star);
    let params = HomogeneousParams {
        beta,
        delta,
        phi: phi_star,
        psi: psi_star,
        rho,
    };
    Ok(HomoOptimum {
        phi: phi_star,
        psi: psi_star,
        cost: f_star,
        lambda_plus: lp,
        alpha,
        active: phi_star > b.phi_lo,
        degenerate: params.is_degenerate(),
    })
}

/// Optimum plus an independent spectral certificate of the assembled `M`.
#[derive(Debug, Clone)]
pub struct HomoDesign {
    pub optimum: HomoOptimum,
    pub rho: f64,
    pub certificate: StabilityCertificate,
}

/// JSON export shape of a homogeneous design.
#[derive(Debug, Clone, Serialize)]
pub struct HomoDesignReport {
    pub phi: Option<f64>,
    pub psi: Option<f64>,
    pub cost: Option<f64>,
    pub lambda_plus: Option<f64>,
    pub alpha: f64,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_decay: Option<f64>,
}

impl HomoDesign {
    pub fn report(&self) -> HomoDesignReport {
        HomoDesignReport {
            phi: Some(self.optimum.phi),
            psi: Some(self.optimum.psi),
            cost: Some(self.optimum.cost),
            lambda_plus: Some(self.optimum.lambda_plus),
            alpha: self.optimum.alpha,
            feasible: true,
            best_decay: None,
        }
    }
}

pub fn design_homogeneous(g: &Graph, prob: &HomoDesignProblem, beta: f64, delta: f64) -> Result<HomoDesign> {
    let (rho, _) = g.spectral_radius(1e-12)?;
    let mut prob = *prob;
    prob.nodes = g.node_count();
    prob.edges = g.edge_count();
    let optimum = optimize_homogeneous(&prob, beta, delta, rho)?;
    let params = ModelParams::homogeneous(g, beta, delta, optimum.phi, optimum.psi);
    let sys = MeanFieldSystem::assemble(g, &params)?;
    let certificate = spectral_abscissa(&sys, 1e-10)?.with_alpha(prob.alpha);
    Ok(HomoDesign {
        optimum,
        rho,
        certificate,
    })
}
