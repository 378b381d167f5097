//! Piecewise collocation meshes on the time axis.
//!
//! A mesh is an ascending, contiguous list of cells, each carrying the same
//! Gauss–Legendre rule. Cells bounded away from zero can be mapped through
//! `ln|τ|`, which turns the `ln|τ|` and `|τ|^p` behaviour of the singular
//! layer into smooth (often polynomial) functions of the cell coordinate.
//! The last cell of a graded mesh is a short linear "gap" cell touching 0.

use std::ops::{Add, AddAssign, Mul, Sub};
use std::sync::Arc;

use num_traits::Zero;

use super::gauss::GaussRule;

/// Values that can be integrated and interpolated on a mesh.
pub trait MeshValue:
    Copy + Zero + Add<Output = Self> + Sub<Output = Self> + AddAssign + Mul<f64, Output = Self>
{
}

impl<T> MeshValue for T where
    T: Copy + Zero + Add<Output = T> + Sub<Output = T> + AddAssign + Mul<f64, Output = T>
{
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellMap {
    Linear,
    /// Uniform in `ln|τ|`; both ends must be nonzero and share a sign.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub a: f64,
    pub b: f64,
    pub map: CellMap,
}

impl Cell {
    pub fn linear(a: f64, b: f64) -> Self {
        Cell { a, b, map: CellMap::Linear }
    }

    pub fn log(a: f64, b: f64) -> Self {
        debug_assert!(a * b > 0.0, "log cell must not contain zero");
        Cell { a, b, map: CellMap::Log }
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.a && t <= self.b
    }

    /// Reference coordinate `x ∈ [-1, 1]` to time.
    pub fn point(&self, x: f64) -> f64 {
        match self.map {
            CellMap::Linear => 0.5 * (self.a + self.b) + 0.5 * (self.b - self.a) * x,
            CellMap::Log => {
                let (la, lb) = (self.a.abs().ln(), self.b.abs().ln());
                self.a.signum() * (la + 0.5 * (x + 1.0) * (lb - la)).exp()
            }
        }
    }

    /// `dτ/dx` at reference coordinate `x`.
    pub fn jacobian(&self, x: f64) -> f64 {
        match self.map {
            CellMap::Linear => 0.5 * (self.b - self.a),
            CellMap::Log => {
                let (la, lb) = (self.a.abs().ln(), self.b.abs().ln());
                self.point(x) * 0.5 * (lb - la)
            }
        }
    }

    pub fn local(&self, t: f64) -> f64 {
        match self.map {
            CellMap::Linear => (2.0 * t - self.a - self.b) / (self.b - self.a),
            CellMap::Log => {
                let (la, lb) = (self.a.abs().ln(), self.b.abs().ln());
                2.0 * (t.abs().ln() - la) / (lb - la) - 1.0
            }
        }
    }

    pub fn split(&self) -> (Cell, Cell) {
        let mid = self.point(0.0);
        (
            Cell { a: self.a, b: mid, map: self.map },
            Cell { a: mid, b: self.b, map: self.map },
        )
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    cells: Vec<Cell>,
    rule: Arc<GaussRule>,
}

impl Mesh {
    pub fn new(cells: Vec<Cell>, rule: Arc<GaussRule>) -> Self {
        assert!(!cells.is_empty(), "mesh needs at least one cell");
        for w in cells.windows(2) {
            assert!(
                (w[0].b - w[1].a).abs() <= 1e-15 * w[0].b.abs().max(1e-300),
                "mesh cells must be contiguous"
            );
        }
        for c in &cells {
            assert!(c.b > c.a, "cells must have positive width");
        }
        Mesh { cells, rule }
    }

    /// Graded mesh between `edge` (nonzero) and 0: log cells with boundaries
    /// `edge·ratio^k` until `|τ| ≤ floor`, then one linear cell reaching 0.
    pub fn toward_zero(edge: f64, ratio: f64, floor: f64, rule: Arc<GaussRule>) -> Self {
        let bounds = graded_bounds(edge, ratio, floor);
        let mut cells: Vec<Cell> = bounds
            .windows(2)
            .map(|w| Cell::log(w[0].min(w[1]), w[0].max(w[1])))
            .collect();
        let last = *bounds.last().unwrap();
        cells.push(Cell::linear(last.min(0.0), last.max(0.0)));
        if edge > 0.0 {
            cells.reverse();
        }
        Mesh::new(cells, rule)
    }

    /// Same as [`Mesh::toward_zero`] without the gap cell: covers `[edge, ±floor]`.
    pub fn graded(edge: f64, ratio: f64, floor: f64, rule: Arc<GaussRule>) -> Self {
        let bounds = graded_bounds(edge, ratio, floor);
        let mut cells: Vec<Cell> = bounds
            .windows(2)
            .map(|w| Cell::log(w[0].min(w[1]), w[0].max(w[1])))
            .collect();
        if edge > 0.0 {
            cells.reverse();
        }
        Mesh::new(cells, rule)
    }

    pub fn uniform(a: f64, b: f64, n_cells: usize, rule: Arc<GaussRule>) -> Self {
        let n = n_cells.max(1);
        let cells = (0..n)
            .map(|k| {
                let lo = a + (b - a) * k as f64 / n as f64;
                let hi = if k + 1 == n { b } else { a + (b - a) * (k + 1) as f64 / n as f64 };
                Cell::linear(lo, hi)
            })
            .collect();
        Mesh::new(cells, rule)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn rule(&self) -> &Arc<GaussRule> {
        &self.rule
    }

    pub fn order(&self) -> usize {
        self.rule.len()
    }

    pub fn start(&self) -> f64 {
        self.cells[0].a
    }

    pub fn end(&self) -> f64 {
        self.cells[self.cells.len() - 1].b
    }

    pub fn n_nodes(&self) -> usize {
        self.cells.len() * self.rule.len()
    }

    /// Cell boundaries, ascending (`n_cells + 1` values).
    pub fn bounds(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.cells.iter().map(|c| c.a).collect();
        b.push(self.end());
        b
    }

    pub fn nodes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_nodes());
        for c in &self.cells {
            out.extend(self.rule.nodes.iter().map(|&x| c.point(x)));
        }
        out
    }

    /// Quadrature weights in `τ` for every node.
    pub fn weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_nodes());
        for c in &self.cells {
            out.extend(
                self.rule
                    .nodes
                    .iter()
                    .zip(&self.rule.weights)
                    .map(|(&x, &w)| w * c.jacobian(x)),
            );
        }
        out
    }

    pub fn integrate<T: MeshValue>(&self, values: &[T]) -> T {
        let w = self.weights();
        let mut acc = T::zero();
        for (v, wi) in values.iter().zip(w) {
            acc += *v * wi;
        }
        acc
    }

    /// `∫_{start}^{·} f` at every node and at every cell boundary.
    pub fn cumulative<T: MeshValue>(&self, values: &[T]) -> (Vec<T>, Vec<T>) {
        let p = self.rule.len();
        assert_eq!(values.len(), self.n_nodes());
        let mut at_nodes = Vec::with_capacity(values.len());
        let mut at_bounds = Vec::with_capacity(self.cells.len() + 1);
        let mut running = T::zero();
        at_bounds.push(running);
        let mut scaled = vec![T::zero(); p];
        for (ci, c) in self.cells.iter().enumerate() {
            for j in 0..p {
                scaled[j] = values[ci * p + j] * c.jacobian(self.rule.nodes[j]);
            }
            for i in 0..p {
                let mut s = T::zero();
                for j in 0..p {
                    s += scaled[j] * self.rule.cumulative(i, j);
                }
                at_nodes.push(running + s);
            }
            let mut total = T::zero();
            for j in 0..p {
                total += scaled[j] * self.rule.weights[j];
            }
            running += total;
            at_bounds.push(running);
        }
        (at_nodes, at_bounds)
    }

    pub fn locate(&self, t: f64) -> Option<usize> {
        if t < self.start() || t > self.end() {
            return None;
        }
        let idx = self.cells.partition_point(|c| c.b < t);
        Some(idx.min(self.cells.len() - 1))
    }

    pub fn interpolate<T: MeshValue>(&self, values: &[T], t: f64) -> Option<T> {
        let ci = self.locate(t)?;
        Some(self.interpolate_in_cell(values, ci, t))
    }

    pub fn interpolate_in_cell<T: MeshValue>(&self, values: &[T], ci: usize, t: f64) -> T {
        let p = self.rule.len();
        let x = self.cells[ci].local(t);
        let basis = self.rule.lagrange_basis(x);
        let mut acc = T::zero();
        for j in 0..p {
            acc += values[ci * p + j] * basis[j];
        }
        acc
    }

    /// Replace cell `i` by its two halves (in the cell's own coordinate).
    pub fn split_cell(&mut self, i: usize) {
        let (l, r) = self.cells[i].split();
        self.cells[i] = r;
        self.cells.insert(i, l);
    }

    /// A sub-mesh made of cells `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Mesh {
        Mesh::new(self.cells[range].to_vec(), self.rule.clone())
    }

    /// Every cell split into two halves.
    pub fn refined(&self) -> Mesh {
        let mut cells = Vec::with_capacity(2 * self.cells.len());
        for c in &self.cells {
            let (l, r) = c.split();
            cells.push(l);
            cells.push(r);
        }
        Mesh::new(cells, self.rule.clone())
    }
}

fn graded_bounds(edge: f64, ratio: f64, floor: f64) -> Vec<f64> {
    assert!(edge != 0.0, "graded mesh edge must be nonzero");
    assert!(ratio > 0.0 && ratio < 1.0, "grading ratio must lie in (0, 1)");
    let floor = floor.abs().min(edge.abs() * ratio);
    let mut bounds = vec![edge];
    let mut b = edge;
    while b.abs() > floor * (1.0 + 1e-12) {
        b *= ratio;
        bounds.push(b);
    }
    bounds
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_cells_integrate_logarithm_exactly() {
        let rule = GaussRule::shared(12);
        let mesh = Mesh::toward_zero(-0.5, 0.5, 1e-14, rule);
        let vals: Vec<f64> = mesh.nodes().iter().map(|t| t.abs().ln()).collect();
        // ∫_{-1/2}^0 ln|τ| dτ = s ln s - s with s = 1/2
        let exact = 0.5 * 0.5f64.ln() - 0.5;
        assert!((mesh.integrate(&vals) - exact).abs() < 1e-12);
    }

    #[test]
    fn cumulative_matches_antiderivative_on_positive_side() {
        let rule = GaussRule::shared(10);
        let mesh = Mesh::toward_zero(0.8, 0.5, 1e-13, rule);
        assert_eq!(mesh.start(), 0.0);
        let nodes = mesh.nodes();
        let vals: Vec<f64> = nodes.iter().map(|t| 1.0 / t.sqrt()).collect();
        let (cum, bounds) = mesh.cumulative(&vals);
        for (t, c) in nodes.iter().zip(&cum).skip(mesh.order()) {
            assert!((c - 2.0 * t.sqrt()).abs() < 1e-6, "t={t}");
        }
        let total = *bounds.last().unwrap();
        assert!((total - 2.0 * 0.8f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn interpolation_inside_log_cell() {
        let rule = GaussRule::shared(12);
        let mesh = Mesh::graded(-0.3, 0.5, 1e-8, rule);
        let vals: Vec<f64> = mesh.nodes().iter().map(|t| (t.abs()).ln() * 2.0 + t).collect();
        for t in [-0.25, -1e-3, -3.3e-6] {
            let v = mesh.interpolate(&vals, t).unwrap();
            assert!((v - (2.0 * t.abs().ln() + t)).abs() < 1e-13);
        }
        assert!(mesh.interpolate(&vals, 1e-3).is_none());
    }

    #[test]
    fn split_and_refine_preserve_coverage() {
        let rule = GaussRule::shared(4);
        let mut mesh = Mesh::uniform(0.0, 1.0, 3, rule);
        mesh.split_cell(1);
        assert_eq!(mesh.cells().len(), 4);
        let r = mesh.refined();
        assert_eq!(r.cells().len(), 8);
        assert_eq!(r.start(), 0.0);
        assert_eq!(r.end(), 1.0);
    }
}
