//! Phase function, parameter rules, normalised weights, flux vectors and the
//! boundary term at `t = 0` of the wave Carleman estimate.
//!
//! The phase is `φ(t,x) = ½|x-η|² - (β/2) t²`. Weights are always stored as
//! `exp(2λ(φ - shift))` with `shift ≥ sup φ`, so they never overflow; both
//! sides of every estimate scale by the same positive factor, which leaves
//! verdicts unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::ops::partial_raw;
use crate::grid::{GridSpec, ScalarField, SpaceTimeField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ParamMode {
    /// `T = max(T_override, T0)` and `λ = λ0`.
    Theoretical,
    /// User-chosen `T`, `λ` (and optionally `β`).
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanConfig {
    pub dim: usize,
    pub eta: Vec<f64>,
    pub x0: Vec<f64>,
    pub beta: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub lambda: f64,
    pub lambda0: f64,
    pub phi_tilde: f64,
    #[serde(rename = "M")]
    pub m_const: f64,
    pub sup_grad_phi: f64,
    pub inf_grad_phi: f64,
    pub sup_phi: f64,
    pub mode: ParamMode,
}

/// Largest and smallest distance from `p` to the closed spatial box.
fn box_distances(grid: &GridSpec, p: &[f64]) -> (f64, f64) {
    let mut far = 0.0;
    let mut near = 0.0;
    for a in 0..grid.dim {
        let lo = grid.origin[a];
        let hi = lo + grid.extent[a];
        let f = (p[a] - lo).abs().max((p[a] - hi).abs());
        let n = if p[a] < lo {
            lo - p[a]
        } else if p[a] > hi {
            p[a] - hi
        } else {
            0.0
        };
        far += f * f;
        near += n * n;
    }
    (far.sqrt(), near.sqrt())
}

fn check_points(grid: &GridSpec, eta: &[f64], x0: &[f64]) -> Result<(f64, f64)> {
    if eta.len() != grid.dim || x0.len() != grid.dim {
        return Err(LabError::InvalidConfig(format!("eta and x0 need {} coordinates", grid.dim)));
    }
    let (sup, inf) = box_distances(grid, eta);
    if inf == 0.0 {
        return Err(LabError::InvalidConfig(format!(
            "eta = {eta:?} lies in the closed domain; it must be outside"
        )));
    }
    if inf < 1.0 - 1e-12 {
        return Err(LabError::InvalidConfig(format!(
            "inf |grad phi| = dist(eta, domain) = {inf:.6} < 1"
        )));
    }
    let (_, dx0) = box_distances(grid, x0);
    if dx0 < 1.0 - 1e-12 {
        return Err(LabError::InvalidConfig(format!("dist(x0, domain) = {dx0:.6} < 1")));
    }
    Ok((sup, inf))
}

/// `T0 = 40 (sup|∇φ| + 1)³`.
pub fn t0_of(sup_grad_phi: f64) -> f64 {
    40.0 * (sup_grad_phi + 1.0).powi(3)
}

/// Parameters of the integral Carleman estimate in theoretical mode.
pub fn select_params(grid: &GridSpec, eta: &[f64], x0: &[f64], t_override: Option<f64>) -> Result<CarlemanConfig> {
    let (sup, inf) = check_points(grid, eta, x0)?;
    let t0 = t0_of(sup);
    let t = t_override.map_or(t0, |t| t.max(t0));
    let beta = 2.0 * (sup + 1.0) / t;
    let lambda0 = 1.0 / beta + 1.0;
    Ok(CarlemanConfig {
        dim: grid.dim,
        eta: eta.to_vec(),
        x0: x0.to_vec(),
        beta,
        t_final: t,
        t0,
        lambda: lambda0,
        lambda0,
        phi_tilde: 3.0 * beta,
        m_const: sup * sup + 1.0,
        sup_grad_phi: sup,
        inf_grad_phi: inf,
        sup_phi: 0.5 * sup * sup,
        mode: ParamMode::Theoretical,
    })
}

/// Desk-scale parameters: `T` and `λ` are chosen freely, `β` follows the
/// same rule as in theoretical mode unless overridden.
pub fn sweep_params(
    grid: &GridSpec,
    eta: &[f64],
    x0: &[f64],
    t_final: f64,
    lambda: f64,
    beta_override: Option<f64>,
) -> Result<CarlemanConfig> {
    if !(t_final > 0.0) || !(lambda > 0.0) {
        return Err(LabError::InvalidConfig("T and lambda must be positive".into()));
    }
    let (sup, inf) = check_points(grid, eta, x0)?;
    let beta = beta_override.unwrap_or(2.0 * (sup + 1.0) / t_final);
    if !(beta > 0.0) {
        return Err(LabError::InvalidConfig("beta must be positive".into()));
    }
    Ok(CarlemanConfig {
        dim: grid.dim,
        eta: eta.to_vec(),
        x0: x0.to_vec(),
        beta,
        t_final,
        t0: t0_of(sup),
        lambda,
        lambda0: 1.0 / beta + 1.0,
        phi_tilde: 3.0 * beta,
        m_const: sup * sup + 1.0,
        sup_grad_phi: sup,
        inf_grad_phi: inf,
        sup_phi: 0.5 * sup * sup,
        mode: ParamMode::Sweep,
    })
}

impl CarlemanConfig {
    pub fn with_lambda(&self, lambda: f64) -> Self {
        CarlemanConfig { lambda, ..self.clone() }
    }

    /// `□φ = φ_tt - Δφ = -β - n`.
    pub fn box_phi(&self) -> f64 {
        -self.beta - self.dim as f64
    }

    /// `sup_{Q_T}(|∇_{t,x}φ| + 1)² + sup|□φ| + 1`, evaluated in closed form:
    /// `|∇_{t,x}φ|² = |x-η|² + β²t²` is largest at `t = T` and the far corner.
    pub fn energy_constant(&self) -> f64 {
        let g = (self.sup_grad_phi.powi(2) + (self.beta * self.t_final).powi(2)).sqrt();
        (g + 1.0).powi(2) + self.box_phi().abs() + 1.0
    }

    /// The two scalar inequalities used to absorb lower-order terms.
    pub fn proof_checks(&self) -> ProofChecks {
        let coeff = 4.0 * self.inf_grad_phi.powi(2) - 10.0 * self.beta.powi(3) * self.t_final.powi(2);
        ProofChecks {
            beta_below_third: self.beta < 1.0 / 3.0,
            lambda3_coefficient: coeff,
            lambda3_ok: coeff >= 2.0 - 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProofChecks {
    pub beta_below_third: bool,
    /// `4 inf|∇φ|² - 10 β³ T²`.
    pub lambda3_coefficient: f64,
    pub lambda3_ok: bool,
}

impl ProofChecks {
    pub fn all_hold(&self) -> bool {
        self.beta_below_third && self.lambda3_ok
    }
}

pub fn phase(config: &CarlemanConfig, t: f64, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().zip(&config.eta).map(|(a, e)| (a - e) * (a - e)).sum();
    0.5 * r2 - 0.5 * config.beta * t * t
}

/// `(φ_t, φ_{x_1}, ..)` at a point.
pub fn grad_phase(config: &CarlemanConfig, t: f64, x: &[f64]) -> Vec<f64> {
    std::iter::once(-config.beta * t)
        .chain(x.iter().zip(&config.eta).map(|(a, e)| a - e))
        .collect()
}

pub fn phase_field(config: &CarlemanConfig, grid: &GridSpec) -> SpaceTimeField {
    SpaceTimeField::from_fn(*grid, |t, x| phase(config, t, x))
}

/// Normalised weight `exp(2λ(φ - shift))`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    pub shift: f64,
    pub log_weight: SpaceTimeField,
    pub weight: SpaceTimeField,
}

impl WeightField {
    /// Weight built from an arbitrary phase field.
    pub fn from_phase(phi: &SpaceTimeField, lambda: f64, shift: f64) -> Self {
        let log_weight = phi.map(|p| 2.0 * lambda * (p - shift));
        let weight = log_weight.map(f64::exp);
        WeightField { shift, log_weight, weight }
    }

    /// Wave weight with the default shift `sup φ`.
    pub fn new(config: &CarlemanConfig, grid: &GridSpec) -> Self {
        Self::with_shift(config, grid, config.sup_phi)
    }

    pub fn with_shift(config: &CarlemanConfig, grid: &GridSpec, shift: f64) -> Self {
        Self::from_phase(&phase_field(config, grid), config.lambda, shift)
    }

    /// Spatial weight at `t = 0`.
    pub fn initial(&self) -> ScalarField {
        self.weight.time_slice(0)
    }

    /// `ln` of the dropped factor, `2λ·shift`, to convert integrals back to
    /// the unshifted weight on a log scale.
    pub fn log_scale(&self, lambda: f64) -> f64 {
        2.0 * lambda * self.shift
    }
}

/// `∫_0^T exp(-λβt²) dt` by the trapezoidal rule together with the bound
/// `√π / (2√(λβ))` and the closed form through `erf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayBound {
    pub numeric: f64,
    pub bound: f64,
    pub closed_form: f64,
}

pub fn time_decay_integral(lambda_beta: f64, t_final: f64) -> DecayBound {
    assert!(lambda_beta > 0.0, "lambda * beta must be positive");
    let s = lambda_beta.sqrt();
    let bound = std::f64::consts::PI.sqrt() / (2.0 * s);
    if t_final <= 0.0 {
        return DecayBound { numeric: 0.0, bound, closed_form: 0.0 };
    }
    // beyond 12/√(λβ) the integrand is below e^-144
    let t_eff = t_final.min(12.0 / s);
    let n = ((200.0 * t_eff * s).ceil() as usize).max(1000);
    let dt = t_eff / n as f64;
    let f = |t: f64| (-lambda_beta * t * t).exp();
    let inner: f64 = (1..n).map(|i| f(i as f64 * dt)).sum();
    // trapezoid with the Euler-Maclaurin end correction; f'(0) = 0
    let df_end = -2.0 * lambda_beta * t_eff * f(t_eff);
    let numeric = dt * (inner + 0.5 * (f(0.0) + f(t_eff))) - dt * dt / 12.0 * df_end;
    let closed_form = bound * statrs::function::erf::erf(s * t_final);
    DecayBound { numeric, bound, closed_form }
}

pub fn time_decay_bound(config: &CarlemanConfig) -> DecayBound {
    time_decay_integral(config.lambda * config.beta, config.t_final)
}

/// Result of the algebraic lemma check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaVariant {
    /// `(Σa)² ≥ 2Σ_{j<k} a_j a_k + 2(a_{j0} - a_{k0}) b - b²`.
    AsPrinted,
    /// Same with `-2b²`, which holds for all inputs.
    Double,
}

/// Checks the lemma as printed; `j0`, `k0` are zero-based.
pub fn algebraic_inequality_check(a: &[f64], b: f64, j0: usize, k0: usize) -> LemmaCheck {
    algebraic_inequality_variant(a, b, j0, k0, LemmaVariant::AsPrinted)
}

pub fn algebraic_inequality_variant(a: &[f64], b: f64, j0: usize, k0: usize, variant: LemmaVariant) -> LemmaCheck {
    assert!(j0 < a.len() && k0 < a.len(), "index out of range");
    let s: f64 = a.iter().sum();
    let lhs = s * s;
    let mut cross = 0.0;
    for j in 0..a.len() {
        for k in j + 1..a.len() {
            cross += a[j] * a[k];
        }
    }
    let b2 = match variant {
        LemmaVariant::AsPrinted => b * b,
        LemmaVariant::Double => 2.0 * b * b,
    };
    let rhs = 2.0 * cross + 2.0 * (a[j0] - a[k0]) * b - b2;
    LemmaCheck { lhs, rhs, holds: lhs >= rhs - 1e-9 * lhs.abs().max(1.0) }
}

/// Symmetric coefficient matrix `a^{jk}` over the `dim + 1` space-time axes
/// (index 0 is time).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    n: usize,
    comps: Vec<SpaceTimeField>,
}

impl CoefficientField {
    /// Builds `a^{jk}` from `f(j, k, t, x)`; only `j ≤ k` is queried.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(usize, usize, f64, &[f64]) -> f64) -> Self {
        let n = grid.dim + 1;
        let mut comps = vec![SpaceTimeField::zeros(*grid); n * n];
        for j in 0..n {
            for k in j..n {
                let c = SpaceTimeField::from_fn(*grid, |t, x| f(j, k, t, x));
                comps[j * n + k] = c.clone();
                comps[k * n + j] = c;
            }
        }
        CoefficientField { n, comps }
    }

    /// `diag(-1, 1, .., 1)`, so that `a^{jk}∂_{jk} = -□`.
    pub fn minkowski(grid: &GridSpec) -> Self {
        Self::from_fn(grid, |j, k, _, _| match (j, k) {
            (0, 0) => -1.0,
            (j, k) if j == k => 1.0,
            _ => 0.0,
        })
    }

    /// `diag(-1, 1 + amp·sin(πx_1), ..)` plus, in two dimensions, the
    /// off-diagonal spatial entry `amp/2 · sin(πx_1) sin(πx_2)`.
    pub fn anisotropic(grid: &GridSpec, amp: f64) -> Self {
        use std::f64::consts::PI;
        Self::from_fn(grid, |j, k, _, x| match (j, k) {
            (0, 0) => -1.0,
            (0, _) => 0.0,
            (j, k) if j == k => 1.0 + amp * (PI * x[j - 1]).sin(),
            _ => 0.5 * amp * (PI * x[0]).sin() * (PI * x[1]).sin(),
        })
    }

    /// `a^{00} = 0`, identity in space, so that `a^{jk}∂_{jk} = Δ`.
    pub fn spatial_euclidean(grid: &GridSpec) -> Self {
        Self::from_fn(grid, |j, k, _, _| if j == k && j > 0 { 1.0 } else { 0.0 })
    }

    pub fn axes(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, k: usize) -> &SpaceTimeField {
        &self.comps[j * self.n + k]
    }

    pub fn grid(&self) -> &GridSpec {
        self.comps[0].grid()
    }
}

/// Derivative along space-time axis `a` (0 = t) by second-order stencils.
pub(crate) fn d_axis(f: &SpaceTimeField, a: usize, order: usize) -> Vec<f64> {
    let g = f.grid();
    partial_raw(g, f.values(), g.shape(), a, order)
}

/// Flux vector `F^j` of the pointwise estimate with `ℓ = λφ`, `ℓ̃ = λφ̃`.
///
/// The derivatives of `v` are taken by finite differences, those of the phase
/// exactly.
pub fn flux_f(v: &SpaceTimeField, config: &CarlemanConfig, coeffs: &CoefficientField) -> Vec<SpaceTimeField> {
    let g = *v.grid();
    let n = g.dim + 1;
    let lam = config.lambda;
    let dv: Vec<Vec<f64>> = (0..n).map(|a| d_axis(v, a, 1)).collect();
    // Hessian of ℓ: diag(-λβ, λ, .., λ)
    let l2 = |j: usize, k: usize| -> f64 {
        if j != k {
            0.0
        } else if j == 0 {
            -lam * config.beta
        } else {
            lam
        }
    };
    let lt = lam * config.phi_tilde;
    let ns = g.n_space();
    let mut out = vec![vec![0.0; g.n_total()]; n];
    for m in 0..g.nt {
        let t = g.time(m);
        for node in 0..ns {
            let idx = m * ns + node;
            let x = g.coord(node);
            let l1: Vec<f64> = grad_phase(config, t, &x[..g.dim]).iter().map(|d| lam * d).collect();
            let vj: Vec<f64> = (0..n).map(|a| dv[a][idx]).collect();
            let vv = v.values()[idx];
            let a = |j: usize, k: usize| coeffs.get(j, k).values()[idx];
            for (j, o) in out.iter_mut().enumerate() {
                let mut s = 0.0;
                for k in 0..n {
                    let ajk = a(j, k);
                    if ajk == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for jp in 0..n {
                        for kp in 0..n {
                            let b = a(jp, kp);
                            if b == 0.0 {
                                continue;
                            }
                            inner += b
                                * (2.0 * l1[k] * vj[jp] * vj[kp] - 4.0 * l1[jp] * vj[k] * vj[kp]
                                    - 2.0 * l2(jp, kp) * vj[k] * vv
                                    - 2.0 * l1[jp] * l1[kp] * l1[k] * vv * vv
                                    + 2.0 * l1[k] * l2(jp, kp) * vv * vv);
                        }
                    }
                    s += ajk * (inner + 2.0 * lt * vj[k] * vv);
                }
                o[idx] = s;
            }
        }
    }
    out.into_iter().map(|vals| SpaceTimeField::from_raw(g, vals)).collect()
}

/// The wave-case flux written out with `□φ`, as used for the integral estimate.
pub fn wave_flux(v: &SpaceTimeField, config: &CarlemanConfig) -> Vec<SpaceTimeField> {
    let g = *v.grid();
    let n = g.dim + 1;
    let lam = config.lambda;
    let dv: Vec<Vec<f64>> = (0..n).map(|a| d_axis(v, a, 1)).collect();
    let bphi = config.box_phi();
    let ns = g.n_space();
    let mut out = vec![vec![0.0; g.n_total()]; n];
    for m in 0..g.nt {
        let t = g.time(m);
        for node in 0..ns {
            let idx = m * ns + node;
            let x = g.coord(node);
            let gp = grad_phase(config, t, &x[..g.dim]);
            let vv = v.values()[idx];
            let vt = dv[0][idx];
            let grad_v2: f64 = (1..n).map(|a| dv[a][idx].powi(2)).sum();
            let gphi2: f64 = gp[1..].iter().map(|p| p * p).sum();
            let dot: f64 = (1..n).map(|a| gp[a] * dv[a][idx]).sum();
            let pt = gp[0];
            let common = dot - pt * vt;
            let lower = 2.0 * lam * (bphi + config.phi_tilde) * vv;
            let cubic = 2.0 * lam.powi(3) * (gphi2 - pt * pt) * vv * vv + 2.0 * lam * lam * bphi * vv * vv;
            out[0][idx] = -2.0 * lam * pt * (grad_v2 - vt * vt) + 4.0 * lam * common * vt - lower * vt + pt * cubic;
            for j in 1..n {
                let pj = gp[j];
                out[j][idx] = 2.0 * lam * pj * (grad_v2 - vt * vt) - 4.0 * lam * common * dv[j][idx]
                    + lower * dv[j][idx]
                    - pj * cubic;
            }
        }
    }
    out.into_iter().map(|vals| SpaceTimeField::from_raw(g, vals)).collect()
}

fn boundary_term_with(u: &SpaceTimeField, config: &CarlemanConfig, lower: f64) -> ScalarField {
    let ns = u.grid().n_space();
    let ut = ScalarField::from_raw(*u.grid(), d_axis(u, 0, 1)[..ns].to_vec());
    initial_form(&u.time_slice(0), &ut, config, lower)
}

fn initial_form(a: &ScalarField, b: &ScalarField, config: &CarlemanConfig, lower: f64) -> ScalarField {
    let g = *a.grid();
    let grads = crate::grid::grad_space(a);
    let lam = config.lambda;
    let (u0, ut) = (a.values(), b.values());
    let vals = (0..g.n_space())
        .map(|k| {
            let x = g.coord(k);
            let gp = grad_phase(config, 0.0, &x[..g.dim]);
            let gphi2: f64 = gp[1..].iter().map(|p| p * p).sum();
            let dot: f64 = (0..g.dim).map(|d| gp[d + 1] * grads[d].values()[k]).sum();
            ut[k] * (-4.0 * lam * lam * gphi2 * u0[k] - 4.0 * lam * dot - lower * lam * u0[k])
        })
        .collect();
    ScalarField::from_raw(g, vals)
}

/// `𝓑` from the initial data `u(0) = a`, `u_t(0) = b`; every term carries
/// the factor `b`.
pub fn boundary_term_initial(a: &ScalarField, b: &ScalarField, config: &CarlemanConfig) -> ScalarField {
    initial_form(a, b, config, 2.0 * config.dim as f64 + 4.0 * config.beta)
}

/// `𝓑 = u_t[-4λ²|∇φ|²u - 4λ∇φ·∇u - (2n + 4β)λu]` at `t = 0`; `u_t` by a
/// one-sided difference.
pub fn boundary_term_b(u: &SpaceTimeField, config: &CarlemanConfig) -> ScalarField {
    boundary_term_with(u, config, 2.0 * config.dim as f64 + 4.0 * config.beta)
}

/// `-F⁰|_{t=0}` of the wave flux, expressed in `u` with the weight removed.
/// With `φ̃ = 3β` it carries `(2n - 4β)λ` in place of `(2n + 4β)λ`.
pub fn boundary_term_from_flux(u: &SpaceTimeField, config: &CarlemanConfig) -> ScalarField {
    let lower = -2.0 * (config.box_phi() + config.phi_tilde);
    boundary_term_with(u, config, lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{boundary_flux, divergence_tx};
    use crate::testfn::TrigPoly;
    use std::f64::consts::PI;

    fn unit(nx: usize, t: f64, nt: usize) -> GridSpec {
        GridSpec::unit_interval(nx, t, nt).unwrap()
    }

    #[test]
    fn phase_values() {
        let g = unit(11, 1.0, 20);
        let c = sweep_params(&g, &[-1.0], &[-1.0], 1.0, 1.0, Some(1.0 / 180.0)).unwrap();
        assert_eq!(phase(&c, 0.0, &[0.0]), 0.5);
        assert!((phase(&c, 1.0, &[1.0]) - (2.0 - 1.0 / 360.0)).abs() < 1e-15);
        let c2 = c.with_lambda(3.0);
        let c3 = CarlemanConfig { beta: 0.3, ..c2 };
        assert_eq!(phase(&c, 0.0, &[0.37]), phase(&c3, 0.0, &[0.37]));
    }

    #[test]
    fn theoretical_parameters_on_unit_interval() {
        let g = unit(11, 1.0, 20);
        let c = select_params(&g, &[-1.0], &[-1.0], None).unwrap();
        assert_eq!(c.sup_grad_phi, 2.0);
        assert_eq!(c.inf_grad_phi, 1.0);
        assert_eq!(c.t0, 1080.0);
        assert_eq!(c.t_final, 1080.0);
        assert!((c.beta - 1.0 / 180.0).abs() < 1e-16);
        assert!((c.lambda0 - 181.0).abs() < 1e-12);
        assert!((c.phi_tilde - 1.0 / 60.0).abs() < 1e-16);
        assert_eq!(c.m_const, 5.0);
        assert_eq!(c.sup_phi, 2.0);
        assert!(c.proof_checks().all_hold());
        assert!((c.proof_checks().lambda3_coefficient - 2.0).abs() < 1e-9);

        let longer = select_params(&g, &[-1.0], &[-1.0], Some(2160.0)).unwrap();
        assert!((longer.beta - 6.0 / 2160.0).abs() < 1e-16);
        assert!((longer.lambda0 - 361.0).abs() < 1e-9);
        let shorter = select_params(&g, &[-1.0], &[-1.0], Some(10.0)).unwrap();
        assert_eq!(shorter.t_final, 1080.0);
    }

    #[test]
    fn rejects_bad_points() {
        let g = unit(11, 1.0, 20);
        let e = select_params(&g, &[0.5], &[-1.0], None).unwrap_err();
        assert!(e.to_string().contains("closed domain"));
        assert!(select_params(&g, &[1.0], &[-1.0], None).is_err());
        assert!(select_params(&g, &[-0.5], &[-1.0], None).is_err());
        assert!(select_params(&g, &[-1.0], &[-0.5], None).is_err());
        assert!(select_params(&g, &[-1.0, 0.0], &[-1.0], None).is_err());
    }

    #[test]
    fn phase_time_derivative_vanishes_at_start() {
        let g = GridSpec::unit_square(9, 1.0, 20).unwrap();
        let c = select_params(&g, &[-1.0, -1.0], &[-1.0, -1.0], None).unwrap();
        for k in 0..g.n_space() {
            let x = g.coord(k);
            assert_eq!(grad_phase(&c, 0.0, &x)[0], 0.0);
        }
    }

    #[test]
    fn weights_are_normalised() {
        let g = unit(21, 2.0, 50);
        let c = select_params(&g, &[-1.0], &[-1.0], None).unwrap();
        let w = WeightField::new(&c, &g);
        assert!(w.weight.values().iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(w.weight.values().iter().all(|v| v.is_finite()));
        assert_eq!(w.weight.at(0, 20), 1.0);
    }

    #[test]
    fn decay_integral_examples() {
        let d = time_decay_integral(100.0, 1.0);
        assert!((d.bound - PI.sqrt() / 20.0).abs() < 1e-15);
        assert!((d.numeric - 0.088_622_692_5).abs() < 1e-8);
        assert!(d.numeric <= d.bound + 1e-6);
        assert!((d.numeric - d.closed_form).abs() < 1e-6);
        let d4 = time_decay_integral(400.0, 1.0);
        assert!((d4.bound - 0.5 * d.bound).abs() < 1e-15);
        assert_eq!(time_decay_integral(1.0, 0.0).numeric, 0.0);
        // short horizon: far below the bound, matches erf
        let d = time_decay_integral(1.0, 0.5);
        assert!((d.numeric - d.closed_form).abs() < 1e-9);
    }

    #[test]
    fn lemma_examples() {
        let c = algebraic_inequality_check(&[1.0, 2.0], 0.0, 0, 1);
        assert_eq!((c.lhs, c.rhs, c.holds), (9.0, 4.0, true));
        let c = algebraic_inequality_check(&[1.0, 2.0], 3.0, 0, 1);
        assert_eq!((c.lhs, c.rhs, c.holds), (9.0, -11.0, true));
        let c = algebraic_inequality_check(&[1.0, 2.0], 3.0, 0, 0);
        assert_eq!((c.lhs, c.rhs, c.holds), (9.0, -5.0, true));
    }

    #[test]
    fn printed_lemma_fails_where_doubled_form_holds() {
        let c = algebraic_inequality_check(&[1.0, -1.0], 1.0, 0, 1);
        assert_eq!((c.lhs, c.rhs), (0.0, 1.0));
        assert!(!c.holds);
        let d = algebraic_inequality_variant(&[1.0, -1.0], 1.0, 0, 1, LemmaVariant::Double);
        assert!(d.holds);
    }

    #[test]
    fn general_flux_reduces_to_wave_flux() {
        let g = GridSpec::unit_square(13, 0.5, 20).unwrap();
        let c = sweep_params(&g, &[-1.0, -1.0], &[-1.0, -1.0], 2.0, 3.0, Some(0.1)).unwrap();
        let v = TrigPoly::random(2, 3, 2, 5).sample(&g);
        let a = flux_f(&v, &c, &CoefficientField::minkowski(&g));
        let b = wave_flux(&v, &c);
        for (fa, fb) in a.iter().zip(&b) {
            let scale = fb.max_abs().max(1.0);
            assert!(fa.sub(fb).max_abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn flux_of_zero_and_constant() {
        let g = unit(21, 1.0, 30);
        let c = select_params(&g, &[-1.0], &[-1.0], None).unwrap();
        let m = CoefficientField::minkowski(&g);
        for f in flux_f(&SpaceTimeField::zeros(g), &c, &m) {
            assert_eq!(f.max_abs(), 0.0);
        }
        let one = SpaceTimeField::from_fn(g, |_, _| 1.0);
        let f = flux_f(&one, &c, &m);
        assert!(f[0].slice(0).iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn flux_divergence_matches_boundary_flux() {
        let g = GridSpec::unit_square(41, 1.0, 64).unwrap();
        let c = sweep_params(&g, &[-1.0, -1.0], &[-1.0, -1.0], 1.0, 2.0, Some(0.2)).unwrap();
        let v = TrigPoly::random(2, 3, 2, 9).sample(&g);
        let f = flux_f(&v, &c, &CoefficientField::anisotropic(&g, 0.3));
        let scale = f.iter().map(|x| x.max_abs()).fold(0.0, f64::max);
        let err = (divergence_tx(&f).integrate() - boundary_flux(&f)).abs();
        assert!(err <= 10.0 * (g.tau * g.tau + g.h[0] * g.h[0]) * scale, "{err} vs {scale}");
    }

    #[test]
    fn boundary_term_examples() {
        let g = unit(101, 1.0, 200);
        let c = select_params(&g, &[-1.0], &[-1.0], None).unwrap();
        // velocity given exactly
        let a = ScalarField::from_fn(g, |x| (3.0 * x[0]).exp() - x[0]);
        let zero = boundary_term_initial(&a, &ScalarField::zeros(g), &c);
        assert!(zero.values().iter().all(|v| *v == 0.0));
        let b = ScalarField::from_fn(g, |x| 1.0 + x[0]);
        let u = SpaceTimeField::from_fn(g, |t, x| (3.0 * x[0]).exp() - x[0] + t * (1.0 + x[0]));
        let exact = boundary_term_initial(&a, &b, &c);
        let fd = boundary_term_b(&u, &c);
        for (p, q) in exact.values().iter().zip(fd.values()) {
            assert!((p - q).abs() <= 1e-9 * p.abs().max(1.0), "{p} vs {q}");
        }
        // zero velocity at t = 0
        let u = SpaceTimeField::from_fn(g, |t, x| (1.0 + t * t) * (PI * x[0]).cos());
        assert!(boundary_term_b(&u, &c).max_abs() < 1e-8 * c.lambda.powi(2));
        // u(0) = 0, ∇u(0) = 0
        let u = SpaceTimeField::from_fn(g, |t, x| t * t * x[0] + t);
        assert_eq!(boundary_term_b(&u, &c).max_abs(), 0.0);
        // u = t sin(πx) vanishes with its gradient at t = 0
        let u = SpaceTimeField::from_fn(g, |t, x| t * (PI * x[0]).sin());
        assert_eq!(boundary_term_b(&u, &c).max_abs(), 0.0);
        // u = t sin(πx) + cos(πx)
        let u = SpaceTimeField::from_fn(g, |t, x| t * (PI * x[0]).sin() + (PI * x[0]).cos());
        let b = boundary_term_b(&u, &c);
        let (lam, h) = (c.lambda, g.h[0]);
        for k in 0..g.n_space() {
            let x = g.coord(k)[0];
            let (s, co) = ((PI * x).sin(), (PI * x).cos());
            let exact = s
                * (-4.0 * lam * lam * (x + 1.0).powi(2) * co + 4.0 * lam * (x + 1.0) * PI * s
                    - (2.0 + 4.0 * c.beta) * lam * co);
            assert!((b.values()[k] - exact).abs() <= 10.0 * h * h * lam * PI.powi(3) * 2.0, "{k}");
        }
    }

    #[test]
    fn flux_boundary_term_differs_by_eight_beta() {
        let g = unit(51, 1.0, 80);
        let c = sweep_params(&g, &[-1.0], &[-1.0], 2.0, 5.0, Some(0.1)).unwrap();
        let u = TrigPoly::random(1, 3, 2, 3).sample(&g);
        let printed = boundary_term_b(&u, &c);
        let flux = boundary_term_from_flux(&u, &c);
        let ut = &d_axis(&u, 0, 1)[..g.n_space()];
        for k in 0..g.n_space() {
            let want = -8.0 * c.beta * c.lambda * ut[k] * u.slice(0)[k];
            assert!((printed.values()[k] - flux.values()[k] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn energy_constant_closed_form() {
        let g = unit(11, 1.0, 20);
        let c = select_params(&g, &[-1.0], &[-1.0], None).unwrap();
        // sup |∇φ|² = 4 + (βT)² = 4 + 36
        let want = (40f64.sqrt() + 1.0).powi(2) + (1.0 / 180.0 + 1.0) + 1.0;
        assert!((c.energy_constant() - want).abs() < 1e-12);
    }
}
