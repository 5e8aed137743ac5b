//! Discrete differential operators on grid fields.
//!
//! Array axis 0 is time (length one for spatial fields), axes 1 and 2 are the
//! spatial axes. All stencils are second-order accurate up to the boundary.

use super::boundary::BoundaryLayout;
use super::stencil::{apply_axis, DiffOp};
use super::{GridSpec, ScalarField, SpaceTimeField};

/// `order`-th derivative along array axis `axis` (0 = time).
///
/// A line too short to carry the requested order yields zeros.
pub fn partial_raw(grid: &GridSpec, values: &[f64], shape: [usize; 3], axis: usize, order: usize) -> Vec<f64> {
    let n = shape[axis];
    let h = if axis == 0 { grid.tau } else { grid.h[axis - 1] };
    if n <= order {
        return vec![0.0; values.len()];
    }
    apply_axis(values, shape, axis, &DiffOp::new(n, h, order))
}

/// Time derivative of order `order`.
pub fn dt(u: &SpaceTimeField, order: usize) -> SpaceTimeField {
    let g = *u.grid();
    SpaceTimeField::from_raw(g, partial_raw(&g, u.values(), g.shape(), 0, order))
}

/// Spatial derivative along `axis` (0-based) of a space-time field.
pub fn dx(u: &SpaceTimeField, axis: usize, order: usize) -> SpaceTimeField {
    let g = *u.grid();
    assert!(axis < g.dim);
    SpaceTimeField::from_raw(g, partial_raw(&g, u.values(), g.shape(), axis + 1, order))
}

/// Spatial derivative along `axis` of a spatial field.
pub fn dx_scalar(f: &ScalarField, axis: usize, order: usize) -> ScalarField {
    let g = *f.grid();
    assert!(axis < g.dim);
    ScalarField::from_raw(g, partial_raw(&g, f.values(), g.space_shape(), axis + 1, order))
}

fn laplacian_raw(grid: &GridSpec, values: &[f64], shape: [usize; 3]) -> Vec<f64> {
    let mut out = partial_raw(grid, values, shape, 1, 2);
    if grid.dim == 2 {
        let d = partial_raw(grid, values, shape, 2, 2);
        out.iter_mut().zip(d).for_each(|(o, v)| *o += v);
    }
    out
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    ScalarField::from_raw(g, laplacian_raw(&g, f.values(), g.space_shape()))
}

/// Spatial Laplacian of every time slice.
pub fn laplacian_st(u: &SpaceTimeField) -> SpaceTimeField {
    let g = *u.grid();
    SpaceTimeField::from_raw(g, laplacian_raw(&g, u.values(), g.shape()))
}

/// `u_tt - Δu`.
pub fn dalembertian(u: &SpaceTimeField) -> SpaceTimeField {
    let g = *u.grid();
    let mut out = partial_raw(&g, u.values(), g.shape(), 0, 2);
    let lap = laplacian_raw(&g, u.values(), g.shape());
    out.iter_mut().zip(lap).for_each(|(o, l)| *o -= l);
    SpaceTimeField::from_raw(g, out)
}

/// `(u_t, u_{x1}, ..)`, `dim + 1` components.
pub fn grad_tx(u: &SpaceTimeField) -> Vec<SpaceTimeField> {
    let g = *u.grid();
    (0..=g.dim)
        .map(|a| SpaceTimeField::from_raw(g, partial_raw(&g, u.values(), g.shape(), a, 1)))
        .collect()
}

pub fn grad_space(f: &ScalarField) -> Vec<ScalarField> {
    (0..f.grid().dim).map(|a| dx_scalar(f, a, 1)).collect()
}

/// `∂_t F^0 + Σ_j ∂_j F^j`.
pub fn divergence_tx(flux: &[SpaceTimeField]) -> SpaceTimeField {
    let g = *flux[0].grid();
    assert_eq!(flux.len(), g.dim + 1, "flux needs dim + 1 components");
    let mut out = vec![0.0; g.n_total()];
    for (a, f) in flux.iter().enumerate() {
        let d = partial_raw(&g, f.values(), g.shape(), a, 1);
        out.iter_mut().zip(d).for_each(|(o, v)| *o += v);
    }
    SpaceTimeField::from_raw(g, out)
}

/// Outward flux `∮ F·ν` through the whole boundary of the space-time box:
/// the top and bottom slices plus the lateral boundary.
pub fn boundary_flux(flux: &[SpaceTimeField]) -> f64 {
    let g = *flux[0].grid();
    let ws = g.space_weights();
    let top: f64 = flux[0].slice(g.nt - 1).iter().zip(&ws).map(|(f, w)| f * w).sum();
    let bottom: f64 = flux[0].slice(0).iter().zip(&ws).map(|(f, w)| f * w).sum();
    let layout = BoundaryLayout::new(&g);
    let wt = g.time_weights();
    let mut lateral = 0.0;
    for e in layout.edges() {
        let we = e.weights();
        let comp = &flux[e.axis + 1];
        for (m, wm) in wt.iter().enumerate() {
            let s: f64 = e.nodes.iter().zip(&we).map(|(&k, w)| w * comp.at(m, k)).sum();
            lateral += wm * e.normal_sign() * s;
        }
    }
    top - bottom + lateral
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn interval(nx: usize, t: f64, nt: usize) -> GridSpec {
        GridSpec::unit_interval(nx, t, nt).unwrap()
    }

    #[test]
    fn laplacian_of_quadratic_and_constant() {
        let g = interval(21, 1.0, 40);
        let f = ScalarField::from_fn(g, |x| x[0] * x[0]);
        assert!(laplacian(&f).values().iter().all(|v| (v - 2.0).abs() < 1e-9));
        let c = ScalarField::constant(g, 3.5);
        assert!(laplacian(&c).max_abs() < 1e-9);
    }

    #[test]
    fn laplacian_of_sine() {
        let g = interval(101, 1.0, 200);
        let h = g.h[0];
        let f = ScalarField::from_fn(g, |x| (PI * x[0]).sin());
        let lap = laplacian(&f);
        let err = lap.values().iter().zip(f.values()).map(|(l, v)| (l + PI * PI * v).abs()).fold(0.0, f64::max);
        assert!(err <= 10.0 * h * h * PI.powi(4), "err {err}");
    }

    #[test]
    fn dalembertian_examples() {
        let g = interval(41, 1.0, 60);
        let u = SpaceTimeField::from_fn(g, |t, x| t * t + x[0] * x[0]);
        assert!(dalembertian(&u).max_abs() < 1e-8);

        let g = interval(101, 1.0, 120);
        let u = SpaceTimeField::from_fn(g, |t, x| t.cos() * (PI * x[0]).sin());
        let box_u = dalembertian(&u);
        let bound = 10.0 * (g.tau * g.tau + g.h[0] * g.h[0]) * PI.powi(4);
        let err = box_u
            .values()
            .iter()
            .zip(u.values())
            .map(|(b, v)| (b - (PI * PI - 1.0) * v).abs())
            .fold(0.0, f64::max);
        assert!(err <= bound, "err {err} bound {bound}");
    }

    #[test]
    fn gradient_examples() {
        let g = GridSpec::unit_square(11, 1.0, 20).unwrap();
        let u = SpaceTimeField::from_fn(g, |t, _| t);
        let gr = grad_tx(&u);
        assert_eq!(gr.len(), 3);
        assert!(gr[0].values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(gr[1].max_abs() < 1e-12 && gr[2].max_abs() < 1e-12);
        let u = SpaceTimeField::from_fn(g, |_, x| x[0]);
        let gr = grad_tx(&u);
        assert!(gr[0].max_abs() < 1e-12 && gr[2].max_abs() < 1e-12);
        assert!(gr[1].values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn gradient_of_trig_field_is_second_order() {
        let err = |nx: usize, nt: usize| {
            let g = interval(nx, 1.0, nt);
            let u = SpaceTimeField::from_fn(g, |t, x| t.cos() * (PI * x[0]).sin());
            let ut = SpaceTimeField::from_fn(g, |t, x| -t.sin() * (PI * x[0]).sin());
            let ux = SpaceTimeField::from_fn(g, |t, x| PI * t.cos() * (PI * x[0]).cos());
            let gr = grad_tx(&u);
            (gr[0].sub(&ut).max_abs(), gr[1].sub(&ux).max_abs())
        };
        let (a0, a1) = err(41, 60);
        let (b0, b1) = err(81, 119);
        assert!(a0 / b0 > 3.5 && a1 / b1 > 3.5, "{} {}", a0 / b0, a1 / b1);
    }

    #[test]
    fn discrete_divergence_theorem() {
        let check = |g: GridSpec| {
            let f0 = SpaceTimeField::from_fn(g, |t, x| (1.3 * t).sin() * (2.0 * x[0]).cos() + x[x.len() - 1]);
            let f1 = SpaceTimeField::from_fn(g, |t, x| (t + x[0]).cos() * (1.0 + x[x.len() - 1] * x[x.len() - 1]));
            let mut flux = vec![f0, f1];
            if g.dim == 2 {
                flux.push(SpaceTimeField::from_fn(g, |t, x| (t * x[1]).sin() - x[0]));
            }
            (divergence_tx(&flux).integrate() - boundary_flux(&flux)).abs()
        };
        let g1 = interval(41, 1.0, 60);
        let e1 = check(g1);
        assert!(e1 < 10.0 * (g1.tau * g1.tau + g1.h[0] * g1.h[0]), "{e1}");
        let g2 = GridSpec::unit_square(31, 1.0, 50).unwrap();
        let e2 = check(g2);
        assert!(e2 < 10.0 * (g2.tau * g2.tau + g2.h[0] * g2.h[0]), "{e2}");
    }
}
