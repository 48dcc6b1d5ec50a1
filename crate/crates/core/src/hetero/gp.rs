//! Geometric program for heterogeneous cutting rates, in log variables.
//!
//! Variables are `y_i = log phi~_i` (one per node) and `u_k = log v_k` (one
//! per row of the bounding system), stacked as `z = [y; u]`. Every row of
//! `(M~ + alpha I) v <= sigma v` divided by `sigma v_k` is a posynomial
//! `<= 1`, which becomes the convex constraint `lse(A_k z + b_k) <= 0`.
//! The objective `sum_i F(phi~_i)` likewise becomes a log-sum-exp of affine
//! functions of `y`.

use nalgebra::DMatrix;

use super::cost::CutCost;
use super::TildeSystem;

/// `exp(log_coef + sum_j a_j z_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpTerm {
    pub log_coef: f64,
    pub exponents: Vec<(usize, f64)>,
}

/// `log sum_t exp(log_coef_t + a_t . z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSumExp {
    pub terms: Vec<ExpTerm>,
    /// Sorted variable indices touched by any term.
    support: Vec<usize>,
}

/// Value, gradient and Hessian restricted to the function's support.
#[derive(Debug, Clone)]
pub struct LocalDerivatives {
    pub value: f64,
    pub support: Vec<usize>,
    pub gradient: Vec<f64>,
    /// Row-major `support.len()` square.
    pub hessian: Vec<f64>,
}

impl LogSumExp {
    pub fn new(terms: Vec<ExpTerm>) -> Self {
        let mut support: Vec<usize> = terms
            .iter()
            .flat_map(|t| t.exponents.iter().map(|&(j, _)| j))
            .collect();
        support.sort_unstable();
        support.dedup();
        Self { terms, support }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    fn exponents(&self, z: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| t.log_coef + t.exponents.iter().map(|&(j, a)| a * z[j]).sum::<f64>())
            .collect()
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let e = self.exponents(z);
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + e.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
    }

    /// Dense gradient of length `z.len()`.
    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let d = self.local(z, false);
        let mut g = vec![0.0; z.len()];
        for (&j, &v) in d.support.iter().zip(&d.gradient) {
            g[j] = v;
        }
        g
    }

    /// Softmax-weighted derivatives. The Hessian is
    /// `sum_t pi_t a_t a_t^T - grad grad^T`.
    pub fn local(&self, z: &[f64], with_hessian: bool) -> LocalDerivatives {
        let e = self.exponents(z);
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|x| (x - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let value = max + total.ln();
        let s = self.support.len();
        let pos = |j: usize| self.support.binary_search(&j).expect("index in support");
        let mut gradient = vec![0.0; s];
        let mut hessian = if with_hessian { vec![0.0; s * s] } else { Vec::new() };
        for (t, wt) in self.terms.iter().zip(&w) {
            let pi = wt / total;
            for &(j, a) in &t.exponents {
                let pj = pos(j);
                gradient[pj] += pi * a;
                if with_hessian {
                    for &(l, b) in &t.exponents {
                        hessian[pj * s + pos(l)] += pi * a * b;
                    }
                }
            }
        }
        if with_hessian {
            for a in 0..s {
                for b in 0..s {
                    hessian[a * s + b] -= gradient[a] * gradient[b];
                }
            }
        }
        LocalDerivatives {
            value,
            support: self.support.clone(),
            gradient,
            hessian,
        }
    }
}

/// The log-transformed program.
#[derive(Debug, Clone)]
pub struct GpProblem {
    pub nodes: usize,
    /// Rows of the bounding system, `n + 2m`.
    pub rows: usize,
    pub objective: LogSumExp,
    pub constraints: Vec<LogSumExp>,
    /// Box on `y`: `log(r - phi_hi) <= y_i <= log(r - phi_lo)`.
    pub y_lo: f64,
    pub y_hi: f64,
}

impl GpProblem {
    /// `sigma = delta_bar + r + psi_bar`. `tilde` supplies the constant shift
    /// diagonals; its `phi~` entries are ignored since they become variables.
    pub fn build(tilde: &TildeSystem, cost: &CutCost, phi_lo: f64, phi_hi: f64) -> Self {
        let blocks = tilde.system.blocks();
        let n = blocks.node_count();
        let rows = n + blocks.pair_count();
        let sigma = tilde.sigma;
        let alpha = tilde.alpha;
        let ln_sigma = sigma.ln();
        let u = |k: usize| n + k;
        let mut terms: Vec<Vec<ExpTerm>> = vec![Vec::new(); rows];
        let mut offdiag = |k: usize, l: usize, val: f64| {
            terms[k].push(ExpTerm {
                log_coef: val.ln() - ln_sigma,
                exponents: vec![(u(l), 1.0), (u(k), -1.0)],
            });
        };
        for (r, c, v) in blocks.b1.triplets() {
            offdiag(r, n + c, v);
        }
        for (r, c, v) in blocks.psi1.triplets() {
            offdiag(n + r, c, v);
        }
        for (r, c, v) in blocks.b2.triplets() {
            offdiag(n + r, n + c, v);
        }
        for i in 0..n {
            let c = tilde.tilde_delta[i] + tilde.psi_bar + tilde.r + alpha;
            if c > 0.0 {
                terms[i].push(ExpTerm {
                    log_coef: c.ln() - ln_sigma,
                    exponents: Vec::new(),
                });
            }
        }
        for (r, owner) in tilde.pair_owner.iter().enumerate() {
            let k = n + r;
            let c = tilde.tilde_delta[*owner] + tilde.tilde_psi[r] + alpha;
            if c > 0.0 {
                terms[k].push(ExpTerm {
                    log_coef: c.ln() - ln_sigma,
                    exponents: Vec::new(),
                });
            }
            terms[k].push(ExpTerm {
                log_coef: -ln_sigma,
                exponents: vec![(*owner, 1.0)],
            });
        }
        let constraints = terms.into_iter().map(LogSumExp::new).collect();

        let objective = LogSumExp::new(
            (0..n)
                .flat_map(|i| {
                    cost.terms.iter().map(move |t| ExpTerm {
                        log_coef: t.coef.ln(),
                        exponents: vec![(i, t.exponent)],
                    })
                })
                .collect(),
        );
        Self {
            nodes: n,
            rows,
            objective,
            constraints,
            y_lo: (tilde.r - phi_hi).ln(),
            y_hi: (tilde.r - phi_lo).ln(),
        }
    }

    pub fn variable_count(&self) -> usize {
        self.nodes + self.rows
    }

    /// Largest constraint value; `<= 0` means `(M~ + alpha I) v <= sigma v`.
    pub fn max_constraint(&self, z: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(z))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Adds `weight * hessian` of `f` into the dense matrix `h`, and
    /// `weight * gradient` into `g`.
    pub(crate) fn accumulate(d: &LocalDerivatives, weight: f64, outer: f64, g: &mut [f64], h: &mut DMatrix<f64>) {
        let s = d.support.len();
        for a in 0..s {
            g[d.support[a]] += weight * d.gradient[a];
            for b in 0..s {
                h[(d.support[a], d.support[b])] +=
                    weight * d.hessian[a * s + b] + outer * d.gradient[a] * d.gradient[b];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_direct_formula() {
        let f = LogSumExp::new(vec![
            ExpTerm {
                log_coef: 0.5f64.ln(),
                exponents: vec![(0, 1.0), (2, -1.0)],
            },
            ExpTerm {
                log_coef: 0.0,
                exponents: vec![],
            },
            ExpTerm {
                log_coef: 2f64.ln(),
                exponents: vec![(1, 2.0)],
            },
        ]);
        let z = [0.3, -0.2, 0.7];
        let direct = (0.5 * (0.3f64 - 0.7).exp() + 1.0 + 2.0 * (-0.4f64).exp()).ln();
        assert!((f.value(&z) - direct).abs() < 1e-14);
        assert_eq!(f.support(), &[0, 1, 2]);
    }

    #[test]
    fn hessian_matches_finite_difference_of_gradient() {
        let f = LogSumExp::new(vec![
            ExpTerm {
                log_coef: -0.3,
                exponents: vec![(0, 1.0), (1, -1.0)],
            },
            ExpTerm {
                log_coef: 0.1,
                exponents: vec![(1, 1.0), (2, 0.5)],
            },
            ExpTerm {
                log_coef: 0.0,
                exponents: vec![(2, -2.0)],
            },
        ]);
        let z = [0.1, 0.4, -0.3];
        let d = f.local(&z, true);
        let h = 1e-6;
        for j in 0..3 {
            let mut zp = z;
            let mut zm = z;
            zp[j] += h;
            zm[j] -= h;
            let gp = f.gradient(&zp);
            let gm = f.gradient(&zm);
            for i in 0..3 {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!((fd - d.hessian[i * 3 + j]).abs() < 1e-7);
            }
        }
    }
}
