//! Node layout of the lateral boundary and normal derivatives on it.
//!
//! Edges come in the order (axis 1 min, axis 1 max, axis 2 min, axis 2 max).
//! Each edge lists its nodes in increasing tangential order, so corners of the
//! square appear once on every edge that meets them. In one dimension there
//! are two single-node edges.

use super::stencil::{trapezoid_weights, DiffOp};
use super::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Min,
    Max,
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Axis the edge is normal to.
    pub axis: usize,
    pub side: Side,
    /// Spatial node indices along the edge.
    pub nodes: Vec<usize>,
    /// Tangential spacing (zero for point edges).
    pub h_tangent: f64,
    /// Position of the first node of this edge in a flattened boundary array.
    pub offset: usize,
}

impl Edge {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Outward normal component along `axis` (+1 or -1).
    pub fn normal_sign(&self) -> f64 {
        match self.side {
            Side::Min => -1.0,
            Side::Max => 1.0,
        }
    }

    /// Trapezoid weights along the edge; a point edge has weight one.
    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.nodes.len(), self.h_tangent)
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryLayout {
    grid: GridSpec,
    edges: Vec<Edge>,
    len: usize,
}

impl BoundaryLayout {
    pub fn new(grid: &GridSpec) -> Self {
        let mut edges = Vec::new();
        let mut offset = 0;
        let [n0, n1] = grid.nx;
        for axis in 0..grid.dim {
            for side in [Side::Min, Side::Max] {
                let nodes: Vec<usize> = if grid.dim == 1 {
                    vec![if side == Side::Min { 0 } else { n0 - 1 }]
                } else if axis == 0 {
                    let i = if side == Side::Min { 0 } else { n0 - 1 };
                    (0..n1).map(|j| grid.node(i, j)).collect()
                } else {
                    let j = if side == Side::Min { 0 } else { n1 - 1 };
                    (0..n0).map(|i| grid.node(i, j)).collect()
                };
                let h_tangent = if grid.dim == 1 { 0.0 } else { grid.h[1 - axis] };
                let len = nodes.len();
                edges.push(Edge { axis, side, nodes, h_tangent, offset });
                offset += len;
            }
        }
        BoundaryLayout { grid: *grid, edges, len: offset }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Total number of boundary entries (corners counted once per edge).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Boundary quadrature weights in flattened order.
    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().flat_map(|e| e.weights()).collect()
    }

    /// Restriction of a spatial array to the boundary.
    pub fn gather(&self, spatial: &[f64]) -> Vec<f64> {
        self.edges
            .iter()
            .flat_map(|e| e.nodes.iter().map(|&k| spatial[k]))
            .collect()
    }

    /// Outward normal derivative of a spatial array, by second-order one-sided
    /// differences into the domain.
    pub fn normal_derivative(&self, spatial: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(self.len);
        for e in &self.edges {
            let (stride, n) = if e.axis == 0 { (g.nx[1], g.nx[0]) } else { (1, g.nx[1]) };
            let op = DiffOp::new(n, g.h[e.axis], 1);
            let i = if e.side == Side::Min { 0 } else { n - 1 };
            for &k in &e.nodes {
                let line_start = k - i * stride;
                out.push(e.normal_sign() * op.at(spatial, line_start, stride, i));
            }
        }
        out
    }

    /// The normal-derivative operator as explicit `(node, coefficient)` rows,
    /// one per boundary entry.
    pub fn normal_stencils(&self) -> Vec<Vec<(usize, f64)>> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(self.len);
        for e in &self.edges {
            let (stride, n) = if e.axis == 0 { (g.nx[1], g.nx[0]) } else { (1, g.nx[1]) };
            let op = DiffOp::new(n, g.h[e.axis], 1);
            let i = if e.side == Side::Min { 0 } else { n - 1 };
            let (start, w) = op.row(i);
            for &k in &e.nodes {
                let line_start = k - i * stride;
                out.push(
                    w.iter()
                        .enumerate()
                        .map(|(j, c)| (line_start + (start + j) * stride, e.normal_sign() * c))
                        .collect(),
                );
            }
        }
        out
    }

    /// Full spatial gradient at boundary nodes, `dim` entries per node.
    pub fn gradient(&self, spatial: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let ops: Vec<DiffOp> = (0..g.dim).map(|a| DiffOp::new(g.nx[a], g.h[a], 1)).collect();
        let mut out = Vec::with_capacity(self.len * g.dim);
        for e in &self.edges {
            for &k in &e.nodes {
                let idx = g.indices(k);
                for a in 0..g.dim {
                    let (stride, i) = if a == 0 { (g.nx[1], idx[0]) } else { (1, idx[1]) };
                    out.push(ops[a].at(spatial, k - i * stride, stride, i));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_layout_counts_corners_per_edge() {
        let g = GridSpec::unit_square(5, 0.5, 10).unwrap();
        let b = BoundaryLayout::new(&g);
        assert_eq!(b.edges().len(), 4);
        assert_eq!(b.len(), 20);
        assert_eq!(b.edges()[0].nodes, vec![0, 1, 2, 3, 4]);
        assert_eq!(b.edges()[3].nodes, vec![4, 9, 14, 19, 24]);
        let total: f64 = b.weights().iter().sum();
        assert!((total - 4.0).abs() < 1e-14);
    }

    #[test]
    fn normal_derivative_of_linear_function() {
        let g = GridSpec::unit_square(7, 0.5, 10).unwrap();
        let b = BoundaryLayout::new(&g);
        let f: Vec<f64> = (0..g.n_space())
            .map(|k| {
                let x = g.coord(k);
                2.0 * x[0] - 3.0 * x[1]
            })
            .collect();
        let dn = b.normal_derivative(&f);
        let expected = [-2.0, 2.0, 3.0, -3.0];
        for (e, want) in b.edges().iter().zip(expected) {
            for v in &dn[e.offset..e.offset + e.len()] {
                assert!((v - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interval_gradient_is_one_sided() {
        let g = GridSpec::unit_interval(11, 1.0, 20).unwrap();
        let b = BoundaryLayout::new(&g);
        let f: Vec<f64> = (0..11).map(|k| (g.coord(k)[0]).powi(2)).collect();
        let grad = b.gradient(&f);
        assert!(grad[0].abs() < 1e-12);
        assert!((grad[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stencils_reproduce_normal_derivative() {
        let g = GridSpec::unit_square(7, 0.5, 10).unwrap();
        let b = BoundaryLayout::new(&g);
        let f: Vec<f64> = (0..g.n_space()).map(|k| (1.3 * k as f64).sin()).collect();
        let direct = b.normal_derivative(&f);
        for (row, want) in b.normal_stencils().iter().zip(direct) {
            let got: f64 = row.iter().map(|&(k, c)| c * f[k]).sum();
            assert!((got - want).abs() < 1e-12);
        }
    }
}
