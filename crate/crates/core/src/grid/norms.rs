//! Discrete Sobolev norms on the cylinder, its lateral boundary and the
//! bottom boundary `∂Ω x {0}`.
//!
//! The `H^k(Σ_T)` norm of a boundary trace sums the squared `L²` norms of all
//! mixed time and tangential derivatives of total order at most `k`; in one
//! dimension only time derivatives exist.

use serde::{Deserialize, Serialize};

use super::boundary::BoundaryLayout;
use super::stencil::{apply_axis, DiffOp};
use super::{GridSpec, ScalarField, SpaceTimeField};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormSet {
    pub l2_interior: f64,
    pub h1_interior: f64,
    pub l2_sigma: f64,
    /// `H^1`, `H^2`, `H^3` norms on the lateral boundary.
    pub hk_sigma: [f64; 3],
    pub l2_boundary0: f64,
    pub h1_boundary0: f64,
}

fn deriv(values: &[f64], shape: [usize; 3], axis: usize, h: f64, order: usize) -> Vec<f64> {
    if order == 0 {
        return values.to_vec();
    }
    if shape[axis] <= order {
        return vec![0.0; values.len()];
    }
    apply_axis(values, shape, axis, &DiffOp::new(shape[axis], h, order))
}

/// Cumulative squared trace norms `[L², H¹, H², H³]` of a boundary array
/// stored time-major with `layout.len()` entries per time level.
pub fn sigma_norm_squares(layout: &BoundaryLayout, trace: &[f64], weight: Option<&[f64]>) -> [f64; 4] {
    let g = layout.grid();
    let nb = layout.len();
    assert_eq!(trace.len(), g.nt * nb, "trace has wrong length");
    let wt = g.time_weights();
    let mut acc = [0.0; 4];
    for e in layout.edges() {
        let ne = e.len();
        let block: Vec<f64> = (0..g.nt)
            .flat_map(|m| trace[m * nb + e.offset..m * nb + e.offset + ne].iter().copied())
            .collect();
        let wblock: Option<Vec<f64>> = weight.map(|w| {
            (0..g.nt)
                .flat_map(|m| w[m * nb + e.offset..m * nb + e.offset + ne].iter().copied())
                .collect()
        });
        let we = e.weights();
        let shape = [1, g.nt, ne];
        let max_tangential = if g.dim == 2 { 3 } else { 0 };
        for i in 0..=3 {
            let dti = deriv(&block, shape, 1, g.tau, i);
            for j in 0..=max_tangential.min(3 - i) {
                let d = deriv(&dti, shape, 2, e.h_tangent, j);
                let mut s = 0.0;
                for m in 0..g.nt {
                    for k in 0..ne {
                        let idx = m * ne + k;
                        let w = wblock.as_ref().map_or(1.0, |wb| wb[idx]);
                        s += wt[m] * we[k] * w * d[idx] * d[idx];
                    }
                }
                for a in acc.iter_mut().skip(i + j) {
                    *a += s;
                }
            }
        }
    }
    acc
}

/// Squared `L²(∂Ω)` and `H¹(∂Ω)` norms of a spatial array. The `H¹` part uses
/// the full spatial gradient at the boundary nodes.
fn boundary0_squares(layout: &BoundaryLayout, spatial: &[f64], weight: Option<&[f64]>) -> (f64, f64) {
    let dim = layout.grid().dim;
    let vals = layout.gather(spatial);
    let grads = layout.gradient(spatial);
    let wts = layout.weights();
    let wfield = weight.map(|w| layout.gather(w));
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for (k, (v, q)) in vals.iter().zip(&wts).enumerate() {
        let w = q * wfield.as_ref().map_or(1.0, |wf| wf[k]);
        let g2: f64 = grads[k * dim..(k + 1) * dim].iter().map(|d| d * d).sum();
        l2 += w * v * v;
        h1 += w * (v * v + g2);
    }
    (l2, h1)
}

fn weighted_sum(values: &[f64], quad: &[f64], weight: Option<&[f64]>) -> f64 {
    match weight {
        Some(w) => values.iter().zip(quad).zip(w).map(|((v, q), w)| v * q * w).sum(),
        None => values.iter().zip(quad).map(|(v, q)| v * q).sum(),
    }
}

fn spacetime_quadrature(g: &GridSpec) -> Vec<f64> {
    let wt = g.time_weights();
    let ws = g.space_weights();
    wt.iter().flat_map(|a| ws.iter().map(move |b| a * b)).collect()
}

/// Norms of a space-time field; a weight multiplies every integrand.
pub fn norms(u: &SpaceTimeField, weight: Option<&SpaceTimeField>) -> NormSet {
    let g = *u.grid();
    if let Some(w) = weight {
        assert!(g.same_spacetime(w.grid()), "weight lives on a different grid");
    }
    let wv = weight.map(|w| w.values());
    let quad = spacetime_quadrature(&g);
    let sq: Vec<f64> = u.values().iter().map(|v| v * v).collect();
    let l2 = weighted_sum(&sq, &quad, wv);
    let mut grad_sq = vec![0.0; g.n_total()];
    for d in super::ops::grad_tx(u) {
        grad_sq.iter_mut().zip(d.values()).for_each(|(s, v)| *s += v * v);
    }
    let h1 = l2 + weighted_sum(&grad_sq, &quad, wv);

    let layout = BoundaryLayout::new(&g);
    let trace: Vec<f64> = (0..g.nt).flat_map(|m| layout.gather(u.slice(m))).collect();
    let wtrace: Option<Vec<f64>> = weight.map(|w| (0..g.nt).flat_map(|m| layout.gather(w.slice(m))).collect());
    let sig = sigma_norm_squares(&layout, &trace, wtrace.as_deref());
    let (b0, b1) = boundary0_squares(&layout, u.slice(0), weight.map(|w| w.slice(0)));
    NormSet {
        l2_interior: l2.sqrt(),
        h1_interior: h1.sqrt(),
        l2_sigma: sig[0].sqrt(),
        hk_sigma: [sig[1].sqrt(), sig[2].sqrt(), sig[3].sqrt()],
        l2_boundary0: b0.sqrt(),
        h1_boundary0: b1.sqrt(),
    }
}

/// Norms of a spatial field; the lateral entries are zero.
pub fn scalar_norms(f: &ScalarField, weight: Option<&ScalarField>) -> NormSet {
    let g = *f.grid();
    let wv = weight.map(|w| w.values());
    let quad = g.space_weights();
    let sq: Vec<f64> = f.values().iter().map(|v| v * v).collect();
    let l2 = weighted_sum(&sq, &quad, wv);
    let mut grad_sq = vec![0.0; g.n_space()];
    for d in super::ops::grad_space(f) {
        grad_sq.iter_mut().zip(d.values()).for_each(|(s, v)| *s += v * v);
    }
    let h1 = l2 + weighted_sum(&grad_sq, &quad, wv);
    let layout = BoundaryLayout::new(&g);
    let (b0, b1) = boundary0_squares(&layout, f.values(), wv);
    NormSet {
        l2_interior: l2.sqrt(),
        h1_interior: h1.sqrt(),
        l2_sigma: 0.0,
        hk_sigma: [0.0; 3],
        l2_boundary0: b0.sqrt(),
        h1_boundary0: b1.sqrt(),
    }
}
