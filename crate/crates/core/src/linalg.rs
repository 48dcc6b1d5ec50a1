//! Sparse storage, Perron iteration, strongly connected components and the
//! dense eigen-solvers used as cross-checks.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix. Explicit zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicate coordinates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        };
        m.prune_zeros();
        m
    }

    fn prune_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut indptr = vec![0; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, Vec::new())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *o = acc;
        }
    }

    /// `self + c I`.
    pub fn add_identity(&self, c: f64) -> Self {
        let mut t: Vec<_> = self.triplets().collect();
        t.extend((0..self.nrows.min(self.ncols)).map(|i| (i, i, c)));
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    /// Max-row-sum norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Smallest off-diagonal entry including implicit zeros.
    pub fn min_offdiagonal(&self) -> f64 {
        let stored = self
            .triplets()
            .filter(|&(r, c, _)| r != c)
            .map(|(_, _, v)| v)
            .fold(f64::INFINITY, f64::min);
        let offdiag_slots = self.nrows * self.ncols - self.nrows.min(self.ncols);
        let stored_count = self.triplets().filter(|&(r, c, _)| r != c).count();
        if stored_count < offdiag_slots {
            stored.min(0.0)
        } else {
            stored
        }
    }

    /// Entrywise `max |self - other|`; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut diff = 0.0f64;
        for r in 0..self.nrows {
            let mut a = self.row(r).peekable();
            let mut b = other.row(r).peekable();
            loop {
                let d = match (a.peek().copied(), b.peek().copied()) {
                    (None, None) => break,
                    (Some((_, va)), None) => {
                        a.next();
                        va
                    }
                    (None, Some((_, vb))) => {
                        b.next();
                        -vb
                    }
                    (Some((ca, va)), Some((cb, vb))) => {
                        if ca == cb {
                            a.next();
                            b.next();
                            va - vb
                        } else if ca < cb {
                            a.next();
                            va
                        } else {
                            b.next();
                            -vb
                        }
                    }
                };
                diff = diff.max(d.abs());
            }
        }
        diff
    }

    /// Directed adjacency of the off-diagonal nonzero pattern.
    pub fn offdiagonal_pattern(&self) -> Vec<Vec<usize>> {
        (0..self.nrows)
            .map(|r| self.row(r).filter(|&(c, _)| c != r).map(|(c, _)| c).collect())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    /// `row col value` lines, 0-based.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = format!("# {} {} {}\n", self.nrows, self.ncols, self.nnz());
        for (r, c, v) in self.triplets() {
            s.push_str(&format!("{r} {c} {v:.17e}\n"));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct PerronOptions {
    /// Stop once the eigenvalue is pinned to `tol * max(scale_floor, |value - shift|)`.
    pub tol: f64,
    pub scale_floor: f64,
    /// Diagonal shift already folded into the operator; only used for the
    /// tolerance scale.
    pub shift: f64,
    pub max_iter: usize,
}

impl Default for PerronOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            scale_floor: 1.0,
            shift: 0.0,
            max_iter: 500_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerronResult {
    /// Perron root of the (shifted) operator.
    pub value: f64,
    /// Nonnegative eigenvector with unit max entry.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// Collatz-Wielandt bracket at exit; `lower` is 0 when the vector has
    /// zero entries.
    pub lower: f64,
    pub upper: f64,
}

/// Power iteration for the Perron root of a nonnegative operator.
///
/// For a strictly positive iterate `x` the Collatz-Wielandt quotients
/// `min (Bx)_i / x_i <= rho(B) <= max (Bx)_i / x_i` bracket the root; the
/// iteration stops when the bracket closes. Reducible operators whose
/// iterates lose positivity fall back to a Rayleigh-quotient residual test.
pub fn perron(
    dim: usize,
    matvec: impl Fn(&[f64], &mut [f64]),
    opts: &PerronOptions,
) -> Result<PerronResult> {
    if dim == 0 {
        return Err(Error::InvalidParameter("empty operator".into()));
    }
    let mut x = vec![1.0; dim];
    let mut y = vec![0.0; dim];
    for it in 1..=opts.max_iter {
        matvec(&x, &mut y);
        let ymax = y.iter().copied().fold(0.0, f64::max);
        if ymax <= 0.0 {
            return Ok(PerronResult {
                value: 0.0,
                vector: vec![1.0; dim],
                iterations: it,
                lower: 0.0,
                upper: 0.0,
            });
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let mut positive = true;
        for (xi, yi) in x.iter().zip(&y) {
            if *xi > 0.0 {
                let q = yi / xi;
                lo = lo.min(q);
                hi = hi.max(q);
            } else {
                positive = false;
                if *yi > 0.0 {
                    hi = f64::INFINITY;
                }
            }
        }
        if !positive {
            lo = 0.0;
        }
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let mu = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / xx;
        let scale = |v: f64| opts.tol * opts.scale_floor.max((v - opts.shift).abs());
        if positive && hi - lo <= scale(0.5 * (lo + hi)) {
            let value = 0.5 * (lo + hi);
            for v in &mut y {
                *v /= ymax;
            }
            return Ok(PerronResult {
                value,
                vector: y,
                iterations: it,
                lower: lo,
                upper: hi,
            });
        }
        let xmax = x.iter().copied().fold(0.0, f64::max);
        let resid = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (b - mu * a).abs())
            .fold(0.0, f64::max)
            / xmax;
        if !positive && resid <= 0.5 * scale(mu) {
            for v in &mut y {
                *v /= ymax;
            }
            return Ok(PerronResult {
                value: mu,
                vector: y,
                iterations: it,
                lower: lo,
                upper: hi,
            });
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ymax;
        }
    }
    Err(Error::NoConvergence {
        what: "Perron iteration",
        iterations: opts.max_iter,
    })
}

/// Tarjan's algorithm, iterative. Components come out in reverse
/// topological order.
pub fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    // (node, next child position)
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        call.push((root, 0));
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos == 0 {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = adj[v].get(*pos) {
                *pos += 1;
                if index[w] == usize::MAX {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comps.push(comp);
            }
        }
    }
    comps
}

/// Largest real part over the spectrum, via a dense real Schur form.
pub fn dense_spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, 100_000)
        .ok_or(Error::NoConvergence {
            what: "dense Schur decomposition",
            iterations: 100_000,
        })?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn dense_symmetric_max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    nalgebra::linalg::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}
