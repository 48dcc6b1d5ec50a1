//! Log-barrier interior-point method with damped Newton centering.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::gp::GpProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BarrierOptions {
    pub t0: f64,
    /// Barrier parameter growth per outer iteration.
    pub mu: f64,
    /// Stop once the duality-gap bound `#inequalities / t` falls below this.
    pub gap_tol: f64,
    /// Centering stops when half the squared Newton decrement falls below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_outer: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            t0: 1.0,
            mu: 10.0,
            gap_tol: 1e-9,
            newton_tol: 1e-9,
            max_newton: 200,
            max_outer: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierOutcome {
    pub z: Vec<f64>,
    pub newton_iterations: usize,
    pub outer_iterations: usize,
    pub gap_bound: f64,
    /// Infinity norm of the barrier gradient at exit, scaled by `1/t`.
    pub stationarity: f64,
    pub max_constraint: f64,
}

/// Objective, constraints and box, all evaluated at `z` for barrier weight `t`.
struct Model<'a> {
    gp: &'a GpProblem,
    /// Variable held fixed to remove the scale invariance of `v`.
    pinned: usize,
}

impl Model<'_> {
    fn inequality_count(&self) -> usize {
        self.gp.constraints.len() + 2 * self.gp.nodes
    }

    fn strictly_feasible(&self, z: &[f64]) -> bool {
        z[..self.gp.nodes].iter().all(|&y| y > self.gp.y_lo && y < self.gp.y_hi)
            && self.gp.constraints.iter().all(|c| c.value(z) < 0.0)
    }

    fn barrier(&self, z: &[f64], t: f64) -> f64 {
        let mut f = t * self.gp.objective.value(z);
        for c in &self.gp.constraints {
            f -= (-c.value(z)).ln();
        }
        for &y in &z[..self.gp.nodes] {
            f -= (y - self.gp.y_lo).ln() + (self.gp.y_hi - y).ln();
        }
        f
    }

    fn derivatives(&self, z: &[f64], t: f64) -> (Vec<f64>, DMatrix<f64>) {
        let dim = z.len();
        let mut g = vec![0.0; dim];
        let mut h = DMatrix::zeros(dim, dim);
        let obj = self.gp.objective.local(z, true);
        GpProblem::accumulate(&obj, t, 0.0, &mut g, &mut h);
        for c in &self.gp.constraints {
            let d = c.local(z, true);
            let inv = 1.0 / (-d.value);
            GpProblem::accumulate(&d, inv, inv * inv, &mut g, &mut h);
        }
        for i in 0..self.gp.nodes {
            let a = 1.0 / (z[i] - self.gp.y_lo);
            let b = 1.0 / (self.gp.y_hi - z[i]);
            g[i] += -a + b;
            h[(i, i)] += a * a + b * b;
        }
        (g, h)
    }

    fn free(&self, dim: usize) -> Vec<usize> {
        (0..dim).filter(|&k| k != self.pinned).collect()
    }
}

fn newton_direction(h: &DMatrix<f64>, g: &[f64], free: &[usize]) -> Result<Vec<f64>> {
    let m = free.len();
    let hr = DMatrix::from_fn(m, m, |a, b| h[(free[a], free[b])]);
    let gr = DVector::from_fn(m, |a, _| -g[free[a]]);
    let scale = (0..m).map(|a| hr[(a, a)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hh = hr.clone();
        for a in 0..m {
            hh[(a, a)] += reg;
        }
        if let Some(ch) = Cholesky::new(hh) {
            let dx = ch.solve(&gr);
            if dx.iter().all(|v| v.is_finite()) {
                return Ok(dx.iter().copied().collect());
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    Err(Error::Numerical("Newton system is not positive definite".into()))
}

/// Minimises the objective from a strictly feasible `z0`. `pinned` names the
/// variable kept fixed at its initial value.
pub fn solve(gp: &GpProblem, z0: &[f64], pinned: usize, opts: &BarrierOptions) -> Result<BarrierOutcome> {
    let model = Model { gp, pinned };
    if !model.strictly_feasible(z0) {
        return Err(Error::Numerical("barrier start point is not strictly feasible".into()));
    }
    let mut z = z0.to_vec();
    let free = model.free(z.len());
    let ineq = model.inequality_count() as f64;
    let mut t = opts.t0;
    let mut newton_iterations = 0;
    let mut outer_iterations = 0;
    let mut stationarity = f64::INFINITY;
    loop {
        outer_iterations += 1;
        for _ in 0..opts.max_newton {
            newton_iterations += 1;
            let (g, h) = model.derivatives(&z, t);
            let dx = newton_direction(&h, &g, &free)?;
            let slope: f64 = free.iter().zip(&dx).map(|(&k, d)| g[k] * d).sum();
            stationarity = free.iter().map(|&k| g[k].abs()).fold(0.0, f64::max) / t;
            if -slope / 2.0 <= opts.newton_tol {
                break;
            }
            let f0 = model.barrier(&z, t);
            let mut step = 1.0;
            let mut trial = z.clone();
            let accepted = loop {
                for (&k, d) in free.iter().zip(&dx) {
                    trial[k] = z[k] + step * d;
                }
                if model.strictly_feasible(&trial) && model.barrier(&trial, t) <= f0 + 0.01 * step * slope {
                    break true;
                }
                step *= 0.5;
                if step < 1e-16 {
                    break false;
                }
            };
            if !accepted {
                // Decrement is at the resolution of the barrier value.
                break;
            }
            z.copy_from_slice(&trial);
        }
        let gap = ineq / t;
        if gap <= opts.gap_tol {
            return Ok(BarrierOutcome {
                max_constraint: gp.max_constraint(&z),
                z,
                newton_iterations,
                outer_iterations,
                gap_bound: gap,
                stationarity,
            });
        }
        if outer_iterations >= opts.max_outer {
            return Err(Error::NoConvergence {
                what: "barrier method",
                iterations: outer_iterations,
            });
        }
        t *= opts.mu;
    }
}
