//! Node-by-node check of the pointwise Carleman inequality for a symmetric
//! coefficient matrix `a^{jk}` over space-time.
//!
//! With `v = e^ℓ u` every term is quadratic in `v`, so the common factor
//! `e^{2ℓ}` is divided out: the check works with `V = u`,
//! `V_j = u_j + ℓ_j u` and, for the flux, `e^{-2ℓ} ∂_j F^j = ∂_j G^j + 2ℓ_j G^j`
//! where `G^j` is `F^j` evaluated on `(V, V_j)`. No exponential is ever
//! formed, so large `λ` is harmless.
//!
//! `∂_j G^j` is expanded by the product rule over difference quotients of
//! `u`, `ℓ` and `a^{jk}`. Differencing `G` itself loses accuracy where `u`
//! vanishes, because there `∂_j G^j` and `2ℓ_j G^j` nearly cancel.

use std::collections::BTreeMap;

use crate::carleman::{CarlemanConfig, CoefficientField};
use crate::grid::ops::partial_raw;
use crate::grid::{GridSpec, SpaceTimeField};

use super::{EstimateName, EstimateReport, Verdict};

/// Per-node terms of the inequality, weight removed. `residual` is
/// `lhs - (t1 + t2 + t3 + t4 + div + lower)`.
#[derive(Debug, Clone)]
pub struct PointwiseTerms {
    pub lhs: Vec<f64>,
    /// Quadratic form in `V_j V_k`.
    pub t1: Vec<f64>,
    /// Mixed `V V_k` term.
    pub t2: Vec<f64>,
    /// Positive `V²` group.
    pub t3: Vec<f64>,
    /// Negative `V²` group.
    pub t4: Vec<f64>,
    /// `∂_j G^j`.
    pub div: Vec<f64>,
    /// `2 ℓ_j G^j`.
    pub lower: Vec<f64>,
    pub residual: Vec<f64>,
    /// Largest magnitude of any individual term at the node.
    pub scale: Vec<f64>,
    /// Nodes at least two steps away from every face of the box.
    pub evaluated: Vec<bool>,
}

fn d(g: &GridSpec, f: &[f64], axis: usize, order: usize) -> Vec<f64> {
    partial_raw(g, f, g.shape(), axis, order)
}

/// All second derivatives, `[j * n + k]`.
fn hessian(g: &GridSpec, f: &[f64], first: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); n * n];
    for j in 0..n {
        for k in j..n {
            let h = if j == k { d(g, f, j, 2) } else { d(g, &first[j], k, 1) };
            out[k * n + j] = h.clone();
            out[j * n + k] = h;
        }
    }
    out
}

fn interior_mask(g: &GridSpec) -> Vec<bool> {
    let ns = g.n_space();
    let margin = 2;
    let inside = |i: usize, n: usize| i >= margin && i + margin < n;
    (0..g.n_total())
        .map(|idx| {
            let m = idx / ns;
            let idx2 = g.indices(idx % ns);
            inside(m, g.nt) && (0..g.dim).all(|a| inside(idx2[a], g.nx[a]))
        })
        .collect()
}

/// Evaluates every term of the pointwise inequality on the grid.
pub fn pointwise_terms(
    u: &SpaceTimeField,
    coeffs: &CoefficientField,
    ell: &SpaceTimeField,
    ell_tilde: &SpaceTimeField,
) -> PointwiseTerms {
    let g = *u.grid();
    let n = g.dim + 1;
    let nn = g.n_total();
    let uv = u.values();

    let du: Vec<Vec<f64>> = (0..n).map(|a| d(&g, uv, a, 1)).collect();
    let ddu = hessian(&g, uv, &du, n);
    let l1: Vec<Vec<f64>> = (0..n).map(|a| d(&g, ell.values(), a, 1)).collect();
    let l2 = hessian(&g, ell.values(), &l1, n);
    // ℓ_{jkm} = ∂_m ℓ_{jk}
    let l3: Vec<Vec<f64>> = (0..n * n * n).map(|i| d(&g, &l2[i / n], i % n, 1)).collect();
    let lt = ell_tilde.values();
    let dlt: Vec<Vec<f64>> = (0..n).map(|a| d(&g, lt, a, 1)).collect();
    let a: Vec<&[f64]> = (0..n * n).map(|i| coeffs.get(i / n, i % n).values()).collect();
    let da: Vec<Vec<f64>> = (0..n * n * n).map(|i| d(&g, a[i / n], i % n, 1)).collect();

    let mut lhs = vec![0.0; nn];
    let mut t1 = vec![0.0; nn];
    let mut t2 = vec![0.0; nn];
    let mut t3 = vec![0.0; nn];
    let mut t4 = vec![0.0; nn];
    let mut div = vec![0.0; nn];
    let mut lower = vec![0.0; nn];
    let mut vjk = vec![0.0; n * n];

    let mut aa = vec![0.0; n * n];
    let mut daa = vec![0.0; n * n * n];
    let mut l = vec![0.0; n];
    let mut ll = vec![0.0; n * n];
    let mut lll = vec![0.0; n * n * n];
    let mut vj = vec![0.0; n];
    for idx in 0..nn {
        for i in 0..n * n {
            aa[i] = a[i][idx];
            ll[i] = l2[i][idx];
        }
        for i in 0..n * n * n {
            daa[i] = da[i][idx];
            lll[i] = l3[i][idx];
        }
        for j in 0..n {
            l[j] = l1[j][idx];
            vj[j] = du[j][idx] + l[j] * uv[idx];
        }
        let v = uv[idx];
        let ltv = lt[idx];
        let a_ = |j: usize, k: usize| aa[j * n + k];
        let da_ = |j: usize, k: usize, m: usize| daa[(j * n + k) * n + m];
        let l2_ = |j: usize, k: usize| ll[j * n + k];
        let l3_ = |j: usize, k: usize, m: usize| lll[(j * n + k) * n + m];
        // ∂_m (a^{jk} a^{pq})
        let daa_ = |j: usize, k: usize, p: usize, q: usize, m: usize| da_(j, k, m) * a_(p, q) + a_(j, k) * da_(p, q, m);

        let mut op = 0.0;
        for j in 0..n {
            for k in 0..n {
                op += a_(j, k) * ddu[j * n + k][idx];
            }
        }
        lhs[idx] = op * op;

        // a^{jk} ℓ_{jk} and its derivatives
        let mut tr = 0.0;
        for j in 0..n {
            for k in 0..n {
                tr += a_(j, k) * l2_(j, k);
            }
        }
        let dtr: Vec<f64> = (0..n)
            .map(|m| {
                let mut s = 0.0;
                for p in 0..n {
                    for q in 0..n {
                        s += da_(p, q, m) * l2_(p, q) + a_(p, q) * l3_(p, q, m);
                    }
                }
                s
            })
            .collect();

        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut s3 = 0.0;
        let mut s4 = 0.0;
        for j in 0..n {
            for k in 0..n {
                // coefficient of V_j V_k
                let mut c = -ltv * a_(j, k);
                for kp in 0..n {
                    for jp in 0..n {
                        let d_prod = da_(j, kp, kp) * a_(jp, k) * l[jp]
                            + a_(j, kp) * da_(jp, k, kp) * l[jp]
                            + a_(j, kp) * a_(jp, k) * l2_(jp, kp);
                        c += 2.0 * d_prod - daa_(j, k, jp, kp, kp) * l[jp];
                    }
                }
                s1 += 2.0 * c * vj[j] * vj[k];

                // (a^{jk} a^{j'k'} ℓ_{j'k'} - a^{jk} ℓ̃)_j V V_k
                let coef = da_(j, k, j) * tr + a_(j, k) * dtr[j] - da_(j, k, j) * ltv - a_(j, k) * dlt[j][idx];
                s2 += 2.0 * coef * v * vj[k];

                let ajk = a_(j, k);
                s3 += 2.0 * ajk * l[j] * l[k] * ltv;
                s4 += -2.0 * ajk * l2_(j, k) * ltv;
                for jp in 0..n {
                    for kp in 0..n {
                        let b = a_(jp, kp);
                        let dprod = daa_(j, k, jp, kp, j);
                        s3 += 2.0 * ajk * b * (l2_(jp, j) * l[kp] + l[jp] * l2_(kp, j)) * l[k]
                            + 2.0 * dprod * l[jp] * l[kp] * l[k];
                        s4 += 2.0 * ajk * b * (l2_(k, j) * l2_(jp, kp) + l[k] * l3_(jp, kp, j))
                            + 2.0 * dprod * l2_(jp, kp) * l[k];
                    }
                }
            }
        }
        s4 += ltv * ltv;
        t1[idx] = s1;
        t2[idx] = s2;
        t3[idx] = s3 * v * v;
        t4[idx] = -s4 * v * v;

        // V_{jk} = ∂_k V_j and W_j = ∂_j V
        for j in 0..n {
            for k in 0..n {
                vjk[j * n + k] = ddu[j * n + k][idx] + l2_(j, k) * v + l[j] * du[k][idx];
            }
        }
        let w = |j: usize| du[j][idx];
        let vjk_ = |j: usize, k: usize| vjk[j * n + k];
        let (mut dsum, mut lsum) = (0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                let ajk = a_(j, k);
                let mut gterm = 2.0 * ltv * vj[k] * v;
                let mut dterm = 2.0 * dlt[j][idx] * vj[k] * v + 2.0 * ltv * (vjk_(k, j) * v + vj[k] * w(j));
                let dajk = da_(j, k, j);
                for jp in 0..n {
                    for kp in 0..n {
                        let b = a_(jp, kp);
                        let h = 2.0 * l[k] * vj[jp] * vj[kp] - 4.0 * l[jp] * vj[k] * vj[kp] - 2.0 * l2_(jp, kp) * vj[k] * v
                            - 2.0 * l[jp] * l[kp] * l[k] * v * v
                            + 2.0 * l[k] * l2_(jp, kp) * v * v;
                        let dl3 = l2_(jp, j) * l[kp] * l[k] + l[jp] * l2_(kp, j) * l[k] + l[jp] * l[kp] * l2_(k, j);
                        let dh = 2.0 * l2_(k, j) * vj[jp] * vj[kp]
                            + 2.0 * l[k] * (vjk_(jp, j) * vj[kp] + vj[jp] * vjk_(kp, j))
                            - 4.0 * l2_(jp, j) * vj[k] * vj[kp]
                            - 4.0 * l[jp] * (vjk_(k, j) * vj[kp] + vj[k] * vjk_(kp, j))
                            - 2.0 * l3_(jp, kp, j) * vj[k] * v
                            - 2.0 * l2_(jp, kp) * (vjk_(k, j) * v + vj[k] * w(j))
                            - 2.0 * dl3 * v * v
                            - 4.0 * l[jp] * l[kp] * l[k] * v * w(j)
                            + 2.0 * (l2_(k, j) * l2_(jp, kp) + l[k] * l3_(jp, kp, j)) * v * v
                            + 4.0 * l[k] * l2_(jp, kp) * v * w(j);
                        gterm += b * h;
                        dterm += b * dh;
                        dsum += daa_(j, k, jp, kp, j) * h;
                    }
                }
                dsum += ajk * dterm + dajk * 2.0 * ltv * vj[k] * v;
                lsum += 2.0 * l[j] * ajk * gterm;
            }
        }
        div[idx] = dsum;
        lower[idx] = lsum;
    }

    let mut residual = vec![0.0; nn];
    let mut scale = vec![0.0; nn];
    for idx in 0..nn {
        let terms = [lhs[idx], t1[idx], t2[idx], t3[idx], t4[idx], div[idx], lower[idx]];
        residual[idx] = terms[0] - terms[1..].iter().sum::<f64>();
        scale[idx] = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    }
    PointwiseTerms { lhs, t1, t2, t3, t4, div, lower, residual, scale, evaluated: interior_mask(&g) }
}

/// Checks `lhs - rhs - div F ≥ -tol` at interior nodes with
/// `tol = κ (τ² + h²) S`, `S` the local term scale.
pub fn verify_pointwise(
    u: &SpaceTimeField,
    coeffs: &CoefficientField,
    ell: &SpaceTimeField,
    ell_tilde: &SpaceTimeField,
    lambda: f64,
    kappa: f64,
) -> EstimateReport {
    let g = *u.grid();
    let terms = pointwise_terms(u, coeffs, ell, ell_tilde);
    let h = g.h_max();
    let eps = kappa * (g.tau * g.tau + h * h);
    let mut evaluated = 0usize;
    let mut violations = 0usize;
    let mut margin = f64::INFINITY;
    let mut min_rel = f64::INFINITY;
    let mut lhs_max: f64 = 0.0;
    let mut rhs_max: f64 = 0.0;
    for idx in 0..g.n_total() {
        if !terms.evaluated[idx] {
            continue;
        }
        evaluated += 1;
        let r = terms.residual[idx];
        let tol = eps * terms.scale[idx];
        if r < -tol {
            violations += 1;
        }
        margin = margin.min(r + tol);
        if terms.scale[idx] > 0.0 {
            min_rel = min_rel.min(r / terms.scale[idx]);
        }
        lhs_max = lhs_max.max(terms.lhs[idx]);
        rhs_max = rhs_max.max((terms.lhs[idx] - r).abs());
    }
    let fraction = if evaluated == 0 { 0.0 } else { violations as f64 / evaluated as f64 };
    let all_zero = terms.scale.iter().all(|&s| s == 0.0);
    let verdict = if all_zero {
        Verdict::PassVacuous
    } else if violations == 0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let mut details = BTreeMap::new();
    details.insert("nodes_evaluated".to_owned(), evaluated as f64);
    details.insert("violations".to_owned(), violations as f64);
    details.insert("min_relative_residual".to_owned(), if min_rel.is_finite() { min_rel } else { 0.0 });
    details.insert("tolerance_factor".to_owned(), eps);
    EstimateReport {
        name: EstimateName::Pointwise,
        lambda,
        lhs: lhs_max,
        rhs: rhs_max,
        empirical_constant: if min_rel.is_finite() { min_rel } else { 0.0 },
        margin: if margin.is_finite() { margin } else { 0.0 },
        pointwise_violation_fraction: Some(fraction),
        verdict,
        tolerance_model: format!("residual >= -{kappa}*(tau^2+h^2)*S, S = largest term magnitude at the node; interior nodes"),
        details,
        note: None,
    }
}

/// The wave specialisation: `ℓ = λφ`, `ℓ̃ = λφ̃`.
pub fn wave_weights(config: &CarlemanConfig, grid: &GridSpec) -> (SpaceTimeField, SpaceTimeField) {
    let lam = config.lambda;
    let ell = SpaceTimeField::from_fn(*grid, |t, x| lam * crate::carleman::phase(config, t, x));
    let ell_tilde = SpaceTimeField::from_fn(*grid, |_, _| lam * config.phi_tilde);
    (ell, ell_tilde)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleman::{select_params, sweep_params};
    use crate::testfn::TrigPoly;
    use std::f64::consts::PI;

    /// `(I₂ - ℓ̃v)² + I₁² + (I₀ + ℓ̃v)² - (ℓ̃v)²` from exact derivatives, weight removed.
    fn squares_oracle(p: &TrigPoly, c: &CarlemanConfig, coeff: impl Fn(usize, usize, &[f64]) -> f64, t: f64, x: &[f64]) -> f64 {
        let n = x.len() + 1;
        let lam = c.lambda;
        let mut gl = vec![-lam * c.beta * t];
        gl.extend(x.iter().zip(&c.eta).map(|(a, e)| lam * (a - e)));
        let hl = |j: usize, k: usize| if j != k { 0.0 } else if j == 0 { -lam * c.beta } else { lam };
        let order = |axes: &[usize]| {
            let mut o = vec![0; n];
            for &a in axes {
                o[a] += 1;
            }
            o
        };
        let u = p.eval(t, x);
        let du: Vec<f64> = (0..n).map(|a| p.deriv(&order(&[a]), t, x)).collect();
        let (mut i2, mut i1, mut i0) = (0.0, 0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                let a = coeff(j, k, x);
                let ujk = p.deriv(&order(&[j, k]), t, x);
                i2 += a * (ujk + gl[j] * du[k] + gl[k] * du[j] + hl(j, k) * u + 2.0 * gl[j] * gl[k] * u);
                i1 += -2.0 * a * gl[j] * (du[k] + gl[k] * u);
                i0 += -a * hl(j, k) * u;
            }
        }
        let b = lam * c.phi_tilde * u;
        (i2 - b).powi(2) + i1 * i1 + (i0 + b).powi(2) - b * b
    }

    #[test]
    fn zero_input_is_vacuous() {
        let g = GridSpec::unit_interval(11, 0.5, 12).unwrap();
        let c = select_params(&g, &[-1.0], &[-1.0], None).unwrap();
        let (l, lt) = wave_weights(&c, &g);
        let r = verify_pointwise(&SpaceTimeField::zeros(g), &CoefficientField::minkowski(&g), &l, &lt, c.lambda, 50.0);
        assert_eq!(r.verdict, Verdict::PassVacuous);
        assert_eq!(r.pointwise_violation_fraction, Some(0.0));
    }

    #[test]
    fn residual_matches_sum_of_squares() {
        let g = GridSpec::unit_interval(81, 0.5, 101).unwrap();
        let c = sweep_params(&g, &[-1.0], &[-1.0], 2.0, 4.0, Some(0.05)).unwrap();
        let p = TrigPoly::random(1, 3, 3, 21);
        let u = p.sample(&g);
        let amp = 0.3;
        let coeffs = CoefficientField::anisotropic(&g, amp);
        let (l, lt) = wave_weights(&c, &g);
        let terms = pointwise_terms(&u, &coeffs, &l, &lt);
        let coeff = |j: usize, k: usize, x: &[f64]| match (j, k) {
            (0, 0) => -1.0,
            (1, 1) => 1.0 + amp * (PI * x[0]).sin(),
            _ => 0.0,
        };
        let eps = 50.0 * (g.tau * g.tau + g.h[0] * g.h[0]);
        let ns = g.n_space();
        for idx in 0..g.n_total() {
            if !terms.evaluated[idx] {
                continue;
            }
            let t = g.time(idx / ns);
            let x = g.coord(idx % ns);
            let want = squares_oracle(&p, &c, coeff, t, &x[..1]);
            let err = (terms.residual[idx] - want).abs();
            assert!(err <= eps * terms.scale[idx], "node {idx}: {} vs {want}", terms.residual[idx]);
        }
    }

    #[test]
    fn residual_matches_sum_of_squares_in_2d() {
        let g = GridSpec::unit_square(41, 0.4, 61).unwrap();
        let c = sweep_params(&g, &[-1.0, -1.0], &[-1.0, -1.0], 2.0, 3.0, Some(0.05)).unwrap();
        let p = TrigPoly::random(2, 3, 2, 4);
        let u = p.sample(&g);
        let amp = 0.3;
        let coeffs = CoefficientField::anisotropic(&g, amp);
        let (l, lt) = wave_weights(&c, &g);
        let terms = pointwise_terms(&u, &coeffs, &l, &lt);
        let coeff = |j: usize, k: usize, x: &[f64]| match (j, k) {
            (0, 0) => -1.0,
            (0, _) | (_, 0) => 0.0,
            (j, k) if j == k => 1.0 + amp * (PI * x[j - 1]).sin(),
            _ => 0.5 * amp * (PI * x[0]).sin() * (PI * x[1]).sin(),
        };
        let eps = g.tau * g.tau + g.h[0] * g.h[0];
        let ns = g.n_space();
        let mut worst: f64 = 0.0;
        for idx in (0..g.n_total()).step_by(7) {
            if !terms.evaluated[idx] {
                continue;
            }
            let want = squares_oracle(&p, &c, coeff, g.time(idx / ns), &g.coord(idx % ns));
            let err = (terms.residual[idx] - want).abs();
            worst = worst.max(err / (eps * terms.scale[idx]));
        }
        // second-order truncation: error / ((τ²+h²) S) bounded by the squared wavenumber
        assert!(worst <= 3.0 * (2.0 * PI).powi(2), "{worst}");
    }

    #[test]
    fn theoretical_config_has_no_violations() {
        let g = GridSpec::unit_interval(61, 0.5, 61).unwrap();
        let c = select_params(&g, &[-1.0], &[-1.0], None).unwrap();
        let (l, lt) = wave_weights(&c, &g);
        for seed in 0..4 {
            let u = TrigPoly::random(1, 3, 4, seed).sample(&g);
            for coeffs in [CoefficientField::minkowski(&g), CoefficientField::anisotropic(&g, 0.3)] {
                let r = verify_pointwise(&u, &coeffs, &l, &lt, c.lambda, 50.0);
                assert_eq!(r.pointwise_violation_fraction, Some(0.0), "seed {seed}: {:?}", r.details);
                assert_eq!(r.verdict, Verdict::Pass);
            }
        }
    }
}
