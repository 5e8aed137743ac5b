//! One-dimensional finite-difference stencils on uniform lines.
//!
//! Every derivative order up to three is second-order accurate: central
//! windows in the interior, shifted (one-sided) windows near the ends. The
//! weights come from Fornberg's recursion on integer offsets, so the classical
//! stencils are reproduced exactly (e.g. `(2, -5, 4, -1)/h²` at a boundary for
//! the second derivative and `(-3, 4, -1)/(2h)` for the first).

const MAX_WIDTH: usize = 6;
const MARGIN: usize = 3;

/// Fornberg weights for the `order`-th derivative at `x0` on `nodes`.
pub fn fornberg_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

fn window(n: usize, i: usize, order: usize) -> (usize, usize) {
    let mut width = if order % 2 == 0 { order + 1 } else { order + 2 };
    if order % 2 == 0 {
        let half = order / 2;
        let centered = i >= half && i + half < n;
        if !centered || width > n {
            width = order + 2;
        }
    }
    let width = width.min(n);
    let start = (i as isize - (width / 2) as isize).clamp(0, (n - width) as isize) as usize;
    (start, width)
}

#[derive(Debug, Clone, Copy)]
struct Row {
    start: usize,
    len: usize,
    weights: [f64; MAX_WIDTH],
}

impl Row {
    fn build(n: usize, i: usize, order: usize, h: f64) -> Self {
        let (start, len) = window(n, i, order);
        let nodes: Vec<f64> = (start..start + len).map(|k| k as f64 - i as f64).collect();
        let raw = fornberg_weights(0.0, &nodes, order);
        let scale = h.powi(order as i32);
        let mut weights = [0.0; MAX_WIDTH];
        for (w, r) in weights.iter_mut().zip(raw) {
            *w = r / scale;
        }
        Row { start, len, weights }
    }
}

/// Derivative operator of a fixed order on a line of `n` nodes with spacing `h`.
#[derive(Debug, Clone)]
pub struct DiffOp {
    n: usize,
    order: usize,
    left: Vec<Row>,
    right: Vec<Row>,
    interior: Option<Row>,
}

impl DiffOp {
    /// Panics if the line is too short to resolve the requested order.
    pub fn new(n: usize, h: f64, order: usize) -> Self {
        assert!(order >= 1 && order <= 3, "derivative order must be 1..=3");
        assert!(n > order, "line of {n} nodes cannot carry a derivative of order {order}");
        if n <= 2 * MARGIN + 1 {
            let left = (0..n).map(|i| Row::build(n, i, order, h)).collect();
            return DiffOp { n, order, left, right: Vec::new(), interior: None };
        }
        let left = (0..MARGIN).map(|i| Row::build(n, i, order, h)).collect();
        let right = (n - MARGIN..n).map(|i| Row::build(n, i, order, h)).collect();
        let mut interior = Row::build(n, MARGIN, order, h);
        // interior row stores offsets relative to the evaluation index
        interior.start = MARGIN - interior.start;
        DiffOp { n, order, left, right, interior: Some(interior) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Returns `(start, weights)` of the stencil used at index `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (usize, &[f64]) {
        match &self.interior {
            None => {
                let r = &self.left[i];
                (r.start, &r.weights[..r.len])
            }
            Some(mid) => {
                if i < MARGIN {
                    let r = &self.left[i];
                    (r.start, &r.weights[..r.len])
                } else if i >= self.n - MARGIN {
                    let r = &self.right[i - (self.n - MARGIN)];
                    (r.start, &r.weights[..r.len])
                } else {
                    (i - mid.start, &mid.weights[..mid.len])
                }
            }
        }
    }

    /// Derivative at index `i` of the line `data[offset + k*stride]`.
    #[inline]
    pub fn at(&self, data: &[f64], offset: usize, stride: usize, i: usize) -> f64 {
        let (start, w) = self.row(i);
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            acc += wk * data[offset + (start + k) * stride];
        }
        acc
    }

    /// Applies the operator to a contiguous line.
    pub fn apply(&self, line: &[f64]) -> Vec<f64> {
        assert_eq!(line.len(), self.n);
        (0..self.n).map(|i| self.at(line, 0, 1, i)).collect()
    }
}

/// Applies `op` along `axis` of a row-major 3-array of the given shape.
pub fn apply_axis(values: &[f64], shape: [usize; 3], axis: usize, op: &DiffOp) -> Vec<f64> {
    let strides = [shape[1] * shape[2], shape[2], 1];
    let n = shape[axis];
    assert_eq!(op.len(), n, "operator length does not match axis {axis}");
    let s = strides[axis];
    let mut out = vec![0.0; values.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let i = (idx / s) % n;
        *o = op.at(values, idx - i * s, s, i);
    }
    out
}

/// Trapezoidal weights on a uniform line; a single node gets weight one.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_boundary_stencils() {
        let d2 = DiffOp::new(10, 1.0, 2);
        let (s, w) = d2.row(0);
        assert_eq!(s, 0);
        assert_eq!(w, &[2.0, -5.0, 4.0, -1.0]);
        let (s, w) = d2.row(5);
        assert_eq!(s, 4);
        assert_eq!(w, &[1.0, -2.0, 1.0]);

        let d1 = DiffOp::new(10, 1.0, 1);
        let (_, w) = d1.row(0);
        assert_eq!(w, &[-1.5, 2.0, -0.5]);
        let (s, w) = d1.row(9);
        assert_eq!(s, 7);
        assert_eq!(w, &[0.5, -2.0, 1.5]);
    }

    #[test]
    fn polynomial_exactness() {
        let n = 12;
        let h = 0.1;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let quad: Vec<f64> = xs.iter().map(|x| x * x - 2.0 * x).collect();
        let cubic: Vec<f64> = xs.iter().map(|x| x * x * x - 2.0 * x * x + x).collect();
        let d1 = DiffOp::new(n, h, 1).apply(&quad);
        let d2 = DiffOp::new(n, h, 2).apply(&cubic);
        let d3 = DiffOp::new(n, h, 3).apply(&cubic);
        for (i, x) in xs.iter().enumerate() {
            assert!((d1[i] - (2.0 * x - 2.0)).abs() < 1e-11, "d1 at {i}");
            assert!((d2[i] - (6.0 * x - 4.0)).abs() < 1e-9, "d2 at {i}");
            assert!((d3[i] - 6.0).abs() < 1e-7, "d3 at {i}");
        }
    }

    #[test]
    fn second_order_convergence_of_third_derivative() {
        let err = |n: usize| {
            let h = 1.0 / (n - 1) as f64;
            let f: Vec<f64> = (0..n).map(|i| (i as f64 * h).sin()).collect();
            let d3 = DiffOp::new(n, h, 3).apply(&f);
            (0..n)
                .map(|i| (d3[i] + (i as f64 * h).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(41) / err(81);
        assert!(ratio > 3.5 && ratio < 4.6, "ratio {ratio}");
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let w = trapezoid_weights(11, 0.1);
        let s: f64 = w.iter().enumerate().map(|(i, wi)| wi * (i as f64 * 0.1)).sum();
        assert!((s - 0.5).abs() < 1e-14);
    }
}
