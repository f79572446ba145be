//! Box discretizations with homogeneous Neumann closure.
//!
//! Nodes are stored row-major over the axes: node `(i0, i1)` has flat index
//! `i0 * counts[1] + i1`; a 1D grid has `counts[1] == 1`.
//!
//! The mirror (ghost-node reflection) Laplacian is not symmetric as a
//! matrix, but `W Δ_h` is, where `W` holds the trapezoidal quadrature
//! weights. Writing `K = −W Δ_h` as a sum over grid edges gives the
//! discrete Dirichlet form `ηᵀ K f = Σ_e c_e (f_b − f_a)(η_b − η_a)` used
//! by the solver, the eigenvalue routine and the weak-form diagnostics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, SymBanded};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("empty support")]
    EmptySupport,
    #[error("field has {got} values, grid has {expected} nodes")]
    Length { expected: usize, got: usize },
    #[error("inverse iteration did not converge in {0} iterations")]
    EigenNotConverged(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    counts: [usize; 2],
}

impl Grid {
    pub fn new(extents: &[f64], counts: &[usize]) -> Result<Self, GridError> {
        let dim = extents.len();
        if !(dim == 1 || dim == 2) || counts.len() != dim {
            return Err(GridError::Invalid(format!(
                "need 1 or 2 axes with matching counts, got {} extents and {} counts",
                extents.len(),
                counts.len()
            )));
        }
        if let Some(e) = extents.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(GridError::Invalid(format!("extent must be positive, got {e}")));
        }
        if let Some(c) = counts.iter().find(|c| **c < 3) {
            return Err(GridError::Invalid(format!("need at least 3 nodes per axis, got {c}")));
        }
        let mut g = Grid { dim, extents: [extents[0], 0.0], counts: [counts[0], 1] };
        if dim == 2 {
            g.extents[1] = extents[1];
            g.counts[1] = counts[1];
        }
        Ok(g)
    }

    pub fn interval(length: f64, nodes: usize) -> Result<Self, GridError> {
        Self::new(&[length], &[nodes])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self, GridError> {
        Self::new(&[lx, ly], &[nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / (self.counts[axis] - 1) as f64
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.extents().iter().product()
    }

    #[inline]
    pub fn split(&self, node: usize) -> (usize, usize) {
        (node / self.counts[1], node % self.counts[1])
    }

    #[inline]
    pub fn node(&self, i0: usize, i1: usize) -> usize {
        i0 * self.counts[1] + i1
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let (i0, i1) = self.split(node);
        let at = |axis: usize, i: usize| i as f64 * self.extents[axis] / (self.counts[axis] - 1) as f64;
        let x = at(0, i0);
        let y = if self.dim == 2 { at(1, i1) } else { 0.0 };
        [x, y]
    }

    pub fn nearest_node(&self, point: &[f64]) -> usize {
        let idx = |axis: usize| {
            let t = (point[axis] / self.spacing(axis)).round();
            (t.max(0.0) as usize).min(self.counts[axis] - 1)
        };
        if self.dim == 1 {
            idx(0)
        } else {
            self.node(idx(0), idx(1))
        }
    }

    fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        let h = self.spacing(axis);
        if i == 0 || i + 1 == self.counts[axis] {
            0.5 * h
        } else {
            h
        }
    }

    /// Tensor-product trapezoidal weights, one per node.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|p| {
                let (i0, i1) = self.split(p);
                let w0 = self.axis_weight(0, i0);
                if self.dim == 2 {
                    w0 * self.axis_weight(1, i1)
                } else {
                    w0
                }
            })
            .collect()
    }

    /// Visits every grid edge `(a, b, c)` with `a < b` and conductance `c`
    /// such that `K = Σ c (e_a − e_b)(e_a − e_b)ᵀ`.
    pub fn for_each_edge(&self, mut f: impl FnMut(usize, usize, f64)) {
        let [n0, n1] = self.counts;
        let h0 = self.spacing(0);
        if self.dim == 1 {
            for i in 0..n0 - 1 {
                f(i, i + 1, 1.0 / h0);
            }
            return;
        }
        let h1 = self.spacing(1);
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                let p = self.node(i0, i1);
                if i0 + 1 < n0 {
                    f(p, self.node(i0 + 1, i1), self.axis_weight(1, i1) / h0);
                }
                if i1 + 1 < n1 {
                    f(p, self.node(i0, i1 + 1), self.axis_weight(0, i0) / h1);
                }
            }
        }
    }

    /// Flat-index distance between edge endpoints.
    pub fn bandwidth(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.counts[1]
        }
    }

    /// Mirror-closed stencil of `Δ_h` at `node`: up to five `(neighbor,
    /// coefficient)` pairs; entries may repeat the same neighbor.
    pub fn stencil(&self, node: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(5);
        let (i0, i1) = self.split(node);
        let mut axis = |i: usize, n: usize, h: f64, step: usize| {
            let c = 1.0 / (h * h);
            out.push((node, -2.0 * c));
            let lo = if i == 0 { node + step } else { node - step };
            let hi = if i + 1 == n { node - step } else { node + step };
            out.push((lo, c));
            out.push((hi, c));
        };
        axis(i0, self.counts[0], self.spacing(0), self.counts[1]);
        if self.dim == 2 {
            axis(i1, self.counts[1], self.spacing(1), 1);
        }
        out
    }

    /// `W·diag + coeff·K` as a symmetric banded matrix. Positive definite
    /// whenever `coeff >= 0`, `diag >= 0` and `diag` is not identically 0.
    pub fn implicit_operator(&self, diag: &[f64], coeff: f64) -> SymBanded {
        let mut m = SymBanded::zeros(self.len(), self.bandwidth());
        for (p, (w, d)) in self.weights().iter().zip(diag).enumerate() {
            m.add(p, p, w * d);
        }
        self.for_each_edge(|a, b, c| {
            let c = coeff * c;
            m.add(a, a, c);
            m.add(b, b, c);
            m.add(b, a, -c);
        });
        m
    }

    /// Discrete Dirichlet form `Σ_e c_e (f_b − f_a)(g_b − g_a)`.
    pub fn dirichlet_form(&self, f: &[f64], g: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_each_edge(|a, b, c| s += c * (f[b] - f[a]) * (g[b] - g[a]));
        s
    }

    /// Axis-aligned 4-neighbors.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> {
        let (i0, i1) = self.split(node);
        let [n0, n1] = self.counts;
        let g = *self;
        let cands = [
            (i0 > 0).then(|| g.node(i0 - 1, i1)),
            (i0 + 1 < n0).then(|| g.node(i0 + 1, i1)),
            (i1 > 0).then(|| g.node(i0, i1 - 1)),
            (i1 + 1 < n1).then(|| g.node(i0, i1 + 1)),
        ];
        cands.into_iter().flatten()
    }
}

/// One real value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|p| f(grid.coords(p))).collect();
        Self { grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }
}

/// One flag per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMask {
    pub grid: Grid,
    pub flags: Vec<bool>,
}

impl SupportMask {
    pub fn from_fn(grid: Grid, f: impl Fn(usize) -> bool) -> Self {
        Self { grid, flags: (0..grid.len()).map(f).collect() }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.flags.iter().any(|&b| b)
    }

    /// Quadrature measure of the flagged nodes.
    pub fn measure(&self) -> f64 {
        let ind: Vec<f64> = self.flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
        integrate_values(&self.grid, &ind)
    }

    pub fn intersects(&self, other: &SupportMask) -> bool {
        self.flags.iter().zip(&other.flags).any(|(a, b)| *a && *b)
    }

    /// Connected components (4-connectivity), each as a sorted node list.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.flags.len()];
        let mut out = Vec::new();
        for start in 0..self.flags.len() {
            if !self.flags[start] || label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut nodes = vec![start];
            label[start] = id;
            let mut head = 0;
            while head < nodes.len() {
                let p = nodes[head];
                head += 1;
                for q in self.grid.neighbors(p) {
                    if self.flags[q] && label[q] == usize::MAX {
                        label[q] = id;
                        nodes.push(q);
                    }
                }
            }
            nodes.sort_unstable();
            out.push(nodes);
        }
        out
    }
}

/// `coeff · Δ_h field` with mirror closure.
pub fn laplacian_neumann(field: &ScalarField, coeff: f64) -> ScalarField {
    let mut out = vec![0.0; field.values.len()];
    laplacian_into(&field.grid, &field.values, coeff, &mut out);
    ScalarField { grid: field.grid, values: out }
}

pub(crate) fn laplacian_into(grid: &Grid, f: &[f64], coeff: f64, out: &mut [f64]) {
    let [n0, n1] = grid.counts;
    let c0 = coeff / (grid.spacing(0) * grid.spacing(0));
    if grid.dim == 1 {
        for i in 0..n0 {
            let l = if i == 0 { f[1] } else { f[i - 1] };
            let r = if i + 1 == n0 { f[n0 - 2] } else { f[i + 1] };
            out[i] = c0 * ((l - f[i]) + (r - f[i]));
        }
        return;
    }
    let c1 = coeff / (grid.spacing(1) * grid.spacing(1));
    for i0 in 0..n0 {
        let up = if i0 == 0 { 1 } else { i0 - 1 };
        let dn = if i0 + 1 == n0 { n0 - 2 } else { i0 + 1 };
        for i1 in 0..n1 {
            let lf = if i1 == 0 { 1 } else { i1 - 1 };
            let rt = if i1 + 1 == n1 { n1 - 2 } else { i1 + 1 };
            let p = i0 * n1 + i1;
            let v = f[p];
            out[p] = c0 * ((f[up * n1 + i1] - v) + (f[dn * n1 + i1] - v))
                + c1 * ((f[i0 * n1 + lf] - v) + (f[i0 * n1 + rt] - v));
        }
    }
}

/// Trapezoidal quadrature over the box.
pub fn integrate(field: &ScalarField) -> f64 {
    integrate_values(&field.grid, &field.values)
}

pub(crate) fn integrate_values(grid: &Grid, values: &[f64]) -> f64 {
    // Sum with the relative weights (1, 1/2, 1/4) first and scale once, so
    // constants integrate to |Ω| without accumulated spacing round-off.
    let [n0, n1] = grid.counts;
    let rel = |i: usize, n: usize| if n == 1 || (i > 0 && i + 1 < n) { 1.0 } else { 0.5 };
    let mut s = 0.0;
    for i0 in 0..n0 {
        let r0 = rel(i0, n0);
        for i1 in 0..n1 {
            s += r0 * rel(i1, n1) * values[i0 * n1 + i1];
        }
    }
    let cells: usize = grid.counts().iter().map(|c| c - 1).product();
    s * grid.measure() / cells as f64
}

pub const LAMBDA1_RTOL: f64 = 1e-8;
const LAMBDA1_MAX_ITERS: usize = 20_000;

/// Smallest eigenvalue of `−Δ_h` on the flagged nodes with zero values on
/// unflagged nodes and mirror closure on the box boundary; the minimum over
/// connected components.
pub fn lambda1_restricted(mask: &SupportMask) -> Result<f64, GridError> {
    let comps = mask.components();
    if comps.is_empty() {
        return Err(GridError::EmptySupport);
    }
    let mut best = f64::INFINITY;
    for comp in &comps {
        best = best.min(lambda1_component(&mask.grid, comp)?);
    }
    Ok(best)
}

fn lambda1_component(grid: &Grid, nodes: &[usize]) -> Result<f64, GridError> {
    let n = nodes.len();
    let mut local = vec![usize::MAX; grid.len()];
    for (l, &p) in nodes.iter().enumerate() {
        local[p] = l;
    }
    let weights = grid.weights();
    let w: Vec<f64> = nodes.iter().map(|&p| weights[p]).collect();

    // Edges touching the component; `None` marks a Dirichlet neighbor.
    let mut edges: Vec<(usize, Option<usize>, f64)> = Vec::new();
    let mut bw = 0;
    grid.for_each_edge(|a, b, c| match (local[a], local[b]) {
        (usize::MAX, usize::MAX) => {}
        (la, usize::MAX) => edges.push((la, None, c)),
        (usize::MAX, lb) => edges.push((lb, None, c)),
        (la, lb) => {
            bw = bw.max(la.abs_diff(lb));
            edges.push((la, Some(lb), c));
        }
    });
    // A component without Dirichlet neighbors is the whole box: K is
    // singular there, so iterate with K + W instead.
    let pure_neumann = edges.iter().all(|e| e.1.is_some());
    let shift = if pure_neumann { 1.0 } else { 0.0 };

    let mut m = SymBanded::zeros(n, bw.max(1));
    for (l, wl) in w.iter().enumerate() {
        m.add(l, l, shift * wl);
    }
    for &(a, b, c) in &edges {
        m.add(a, a, c);
        if let Some(b) = b {
            m.add(b, b, c);
            m.add(b, a, -c);
        }
    }
    let chol = m.cholesky()?;

    let rayleigh = |x: &[f64]| {
        let mut num = 0.0;
        for &(a, b, c) in &edges {
            let d = match b {
                Some(b) => x[a] - x[b],
                None => x[a],
            };
            num += c * d * d;
        }
        let den: f64 = x.iter().zip(&w).map(|(v, wv)| wv * v * v).sum();
        num / den
    };

    let mut x = vec![1.0; n];
    let mut lam = rayleigh(&x);
    for _ in 0..LAMBDA1_MAX_ITERS {
        let mut y: Vec<f64> = x.iter().zip(&w).map(|(v, wv)| v * wv).collect();
        chol.solve_in_place(&mut y);
        let norm = y.iter().zip(&w).map(|(v, wv)| wv * v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        let next = rayleigh(&y);
        let done = (next - lam).abs() <= LAMBDA1_RTOL * next.abs() || (next - lam).abs() <= 1e-15;
        lam = next;
        x = y;
        if done {
            return Ok(lam);
        }
    }
    Err(GridError::EigenNotConverged(LAMBDA1_MAX_ITERS))
}

/// Nodes within Euclidean distance `radius` of `center` (up to a relative
/// rounding slack of 1e-12).
pub fn ball_nodes(grid: &Grid, center: &[f64], radius: f64) -> SupportMask {
    let r2 = radius * radius * (1.0 + 1e-12);
    SupportMask::from_fn(*grid, |p| {
        let x = grid.coords(p);
        let d2: f64 = (0..grid.dim()).map(|a| (x[a] - center[a]).powi(2)).sum();
        d2 <= r2
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::interval(1.0, 2).is_err());
        assert!(Grid::interval(0.0, 10).is_err());
        assert!(Grid::new(&[1.0, 1.0, 1.0], &[3, 3, 3]).is_err());
        assert!(ScalarField::new(Grid::interval(1.0, 5).unwrap(), vec![0.0; 4]).is_err());
    }

    #[test]
    fn constant_maps_to_zero_exactly() {
        for g in [Grid::interval(1.0, 11).unwrap(), Grid::rectangle(2.0, 1.0, 7, 5).unwrap()] {
            let f = ScalarField::constant(g, 3.7);
            assert!(laplacian_neumann(&f, 2.5).values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn cosine_is_a_neumann_eigenfunction() {
        let g = Grid::interval(1.0, 101).unwrap();
        let f = ScalarField::from_fn(g, |x| (PI * x[0]).cos());
        let lap = laplacian_neumann(&f, 1.0);
        let err = lap
            .values
            .iter()
            .zip(&f.values)
            .map(|(l, v)| (l + PI * PI * v).abs())
            .fold(0.0, f64::max);
        assert!(err < 1.5e-3 && err > 1e-5, "{err}");
    }

    #[test]
    fn quadratic_is_exact_in_the_interior() {
        let g = Grid::rectangle(1.0, 1.0, 21, 17).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] * x[0] + x[1] * x[1]);
        let lap = laplacian_neumann(&f, 0.5);
        for p in 0..g.len() {
            let (i0, i1) = g.split(p);
            if i0 > 0 && i1 > 0 && i0 + 1 < 21 && i1 + 1 < 17 {
                assert!((lap.values[p] - 2.0).abs() < 1e-9, "{}", lap.values[p]);
            }
        }
    }

    #[test]
    fn stencil_matches_laplacian() {
        let g = Grid::rectangle(1.0, 2.0, 5, 6).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] * 3.0).sin() + x[1] * x[1] * x[0]);
        let lap = laplacian_neumann(&f, 1.0);
        for p in 0..g.len() {
            let s: f64 = g.stencil(p).iter().map(|&(q, c)| c * f.values[q]).sum();
            assert!((s - lap.values[p]).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_examples() {
        let g = Grid::interval(1.0, 37).unwrap();
        assert_eq!(integrate(&ScalarField::constant(g, 1.0)), 1.0);
        for n in [3, 4, 10, 101] {
            let g = Grid::interval(1.0, n).unwrap();
            let v = integrate(&ScalarField::from_fn(g, |x| x[0]));
            assert!((v - 0.5).abs() < 1e-15, "{n}: {v}");
        }
        let g = Grid::interval(1.0, 101).unwrap();
        assert!(integrate(&ScalarField::from_fn(g, |x| (PI * x[0]).cos())).abs() < 1e-12);
    }

    #[test]
    fn operator_is_weighted_negative_laplacian() {
        let g = Grid::rectangle(1.0, 1.5, 6, 4).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] + 2.0 * x[1]).cos());
        let m = g.implicit_operator(&vec![0.0; g.len()], 1.0);
        let mut kf = vec![0.0; g.len()];
        m.matvec(&f.values, &mut kf);
        let lap = laplacian_neumann(&f, 1.0);
        let w = g.weights();
        for p in 0..g.len() {
            assert!((kf[p] + w[p] * lap.values[p]).abs() < 1e-10);
        }
        let eta = ScalarField::from_fn(g, |x| x[0] * x[1]);
        let lhs = g.dirichlet_form(&f.values, &eta.values);
        let rhs: f64 = eta.values.iter().zip(&kf).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn lambda1_examples() {
        let g = Grid::interval(1.0, 201).unwrap();
        let all = SupportMask::from_fn(g, |_| true);
        assert!(lambda1_restricted(&all).unwrap().abs() < 1e-10);

        let interior = SupportMask::from_fn(g, |p| p != 0 && p != 200);
        let l = lambda1_restricted(&interior).unwrap();
        assert!((l / (PI * PI) - 1.0).abs() < 0.01, "{l}");

        let half = SupportMask::from_fn(g, |p| g.coords(p)[0] < 0.5 - 1e-12);
        let l = lambda1_restricted(&half).unwrap();
        assert!((l / (PI * PI) - 1.0).abs() < 0.01, "{l}");

        let empty = SupportMask::from_fn(g, |_| false);
        assert_eq!(lambda1_restricted(&empty), Err(GridError::EmptySupport));
    }

    #[test]
    fn lambda1_takes_minimum_over_components() {
        let g = Grid::interval(1.0, 201).unwrap();
        // [0, 0.2) touching the Neumann end, and (0.4, 1.0) the longer one.
        let mask = SupportMask::from_fn(g, |p| {
            let x = g.coords(p)[0];
            x < 0.2 - 1e-12 || x > 0.4 + 1e-12
        });
        assert_eq!(mask.components().len(), 2);
        let l = lambda1_restricted(&mask).unwrap();
        let want = (PI / (2.0 * 0.6)).powi(2);
        assert!((l / want - 1.0).abs() < 0.01, "{l} vs {want}");
    }

    #[test]
    fn lambda1_on_a_square() {
        let g = Grid::rectangle(1.0, 1.0, 41, 41).unwrap();
        let mask = SupportMask::from_fn(g, |p| {
            let (i, j) = g.split(p);
            i > 0 && j > 0 && i < 40 && j < 40
        });
        let l = lambda1_restricted(&mask).unwrap();
        assert!((l / (2.0 * PI * PI) - 1.0).abs() < 0.01, "{l}");
    }

    #[test]
    fn ball_examples() {
        let g = Grid::interval(1.0, 101).unwrap();
        assert_eq!(ball_nodes(&g, &[0.5], 0.1).count(), 21);
        assert_eq!(ball_nodes(&g, &[0.5], 2.0).count(), 101);
        let single = ball_nodes(&g, &[0.3], 0.004);
        assert_eq!(single.count(), 1);
        assert!(single.flags[30]);
        let g2 = Grid::rectangle(1.0, 1.0, 11, 11).unwrap();
        assert_eq!(ball_nodes(&g2, &[0.0, 0.0], 1.5).count(), 121);
    }
}
