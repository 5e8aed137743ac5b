//! Least-squares reconstruction of the potential in the initial-potential
//! problem from lateral Dirichlet and Neumann records.
//!
//! The gradient is the exact gradient of the discrete misfit: the adjoint of
//! the leapfrog recursion is run backwards in time, driven by the weighted
//! Neumann residual. With `P` the restriction to interior nodes and
//! `A = 2I + τ²(L - diag q)`, the forward scheme for `u(0) = 0`, `u_t(0) = q` is
//!
//! `U¹ = P(τq + ½τ²(LU⁰ - qU⁰)) + g¹`, `U^{m+1} = P(AU^m - U^{m-1}) + g^{m+1}`,
//!
//! and the adjoint is `Λ^m = e^m + A P Λ^{m+1} - P Λ^{m+2}` with `e^m` the
//! derivative of the misfit with respect to `U^m`.

use serde::{Deserialize, Serialize};

use crate::forward::{extract_traces, leapfrog, solve_initial_potential, TraceData};
use crate::grid::{BoundaryLayout, GridSpec, ScalarField, SpaceTimeField};
use crate::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Fixed,
    /// Armijo backtracking from a Barzilai-Borwein trial step.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    pub alpha_reg: f64,
    pub max_iters: usize,
    pub step_rule: StepRule,
    pub step0: f64,
    /// Stop once the misfit falls below `tol_rel` times its initial value.
    pub tol_rel: f64,
    pub q_init: ScalarField,
}

impl RecoveryConfig {
    /// Backtracking from `q = 0` with the defaults used for noiseless data.
    pub fn new(grid: &GridSpec) -> Self {
        RecoveryConfig {
            alpha_reg: 1e-8,
            max_iters: 500,
            step_rule: StepRule::Backtracking,
            step0: 1.0,
            tol_rel: 1e-12,
            q_init: ScalarField::zeros(*grid),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(LabError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.step0 > 0.0) || !self.step0.is_finite() {
            return Err(LabError::InvalidConfig(format!("step0 must be positive, got {}", self.step0)));
        }
        if !(self.tol_rel > 0.0) {
            return Err(LabError::InvalidConfig(format!("tol_rel must be positive, got {}", self.tol_rel)));
        }
        if !(self.alpha_reg >= 0.0) {
            return Err(LabError::InvalidConfig(format!("alpha_reg must be non-negative, got {}", self.alpha_reg)));
        }
        Ok(())
    }
}

/// Boundary records of the solution with potential `q_star`, using the
/// Dirichlet data `g`.
pub fn synthesize(q_star: &ScalarField, g: &TraceData, grid: &GridSpec) -> Result<TraceData> {
    Ok(extract_traces(&solve_initial_potential(q_star, g, grid)?))
}

/// Forward run for the current potential; the Dirichlet part of `data` is
/// the boundary condition.
fn forward(q: &ScalarField, data: &TraceData) -> Result<Vec<f64>> {
    let g = data.grid;
    if !q.grid().same_space(&g) {
        return Err(LabError::FieldMismatch("potential and data live on different grids".into()));
    }
    if !data.has_neumann() {
        return Err(LabError::InvalidConfig("data carry no Neumann record".into()));
    }
    leapfrog(&g, q.values(), &vec![0.0; g.n_space()], q.values(), &data.dirichlet, None)
}

/// Quadrature weight of every `(time level, boundary entry)` pair.
fn sigma_weights(g: &GridSpec) -> Vec<f64> {
    let wb = BoundaryLayout::new(g).weights();
    g.time_weights().iter().flat_map(|wt| wb.iter().map(move |wb| wt * wb)).collect()
}

fn neumann_of(g: &GridSpec, u: &[f64]) -> Vec<f64> {
    let layout = BoundaryLayout::new(g);
    let ns = g.n_space();
    (0..g.nt).flat_map(|m| layout.normal_derivative(&u[m * ns..(m + 1) * ns])).collect()
}

/// Parts of the objective at one potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisfitParts {
    pub dirichlet: f64,
    pub neumann: f64,
    pub regularization: f64,
    pub total: f64,
}

fn parts(q: &ScalarField, data: &TraceData, alpha: f64, u: &[f64]) -> (MisfitParts, Vec<f64>) {
    let g = data.grid;
    let w = sigma_weights(&g);
    let layout = BoundaryLayout::new(&g);
    let ns = g.n_space();
    let dir: Vec<f64> = (0..g.nt).flat_map(|m| layout.gather(&u[m * ns..(m + 1) * ns])).collect();
    let dirichlet = 0.5 * dir.iter().zip(&data.dirichlet).zip(&w).map(|((a, b), w)| w * (a - b).powi(2)).sum::<f64>();
    let residual: Vec<f64> = neumann_of(&g, u).iter().zip(&data.neumann).map(|(a, b)| a - b).collect();
    let neumann = 0.5 * residual.iter().zip(&w).map(|(r, w)| w * r * r).sum::<f64>();
    let regularization = 0.5 * alpha * q.dot(q);
    (MisfitParts { dirichlet, neumann, regularization, total: dirichlet + neumann + regularization }, residual)
}

/// `J(q) = ½‖u - d‖² + ½‖∂_ν u - d_ν‖² + (α/2)‖q‖²`, both data terms in
/// `L²` of the lateral boundary.
pub fn misfit(q: &ScalarField, data: &TraceData, alpha: f64) -> Result<f64> {
    Ok(misfit_parts(q, data, alpha)?.total)
}

pub fn misfit_parts(q: &ScalarField, data: &TraceData, alpha: f64) -> Result<MisfitParts> {
    let u = forward(q, data)?;
    Ok(parts(q, data, alpha, &u).0)
}

/// Interior five-point (three-point) Laplacian of `y`, written only at
/// interior nodes.
fn interior_laplacian(g: &GridSpec, y: &[f64], out: &mut [f64]) {
    let [n0, n1] = g.nx;
    let ih0 = 1.0 / (g.h[0] * g.h[0]);
    if g.dim == 1 {
        for i in 1..n0 - 1 {
            out[i] = (y[i - 1] - 2.0 * y[i] + y[i + 1]) * ih0;
        }
        return;
    }
    let ih1 = 1.0 / (g.h[1] * g.h[1]);
    for i in 1..n0 - 1 {
        for j in 1..n1 - 1 {
            let k = i * n1 + j;
            out[k] = (y[k - n1] - 2.0 * y[k] + y[k + n1]) * ih0 + (y[k - 1] - 2.0 * y[k] + y[k + 1]) * ih1;
        }
    }
}

fn interior_mask(g: &GridSpec) -> Vec<bool> {
    (0..g.n_space()).map(|k| !g.is_boundary(k)).collect()
}

/// Raw derivative `∂J_data/∂q_i` for a residual `r` on the Neumann record:
/// `Σ_i (result)_i δq_i = Σ w r·(δ∂_ν u)`.
fn adjoint_raw(g: &GridSpec, q: &[f64], u: &[f64], residual: &[f64]) -> Vec<f64> {
    let ns = g.n_space();
    let nt = g.nt;
    let tau = g.tau;
    let tau2 = tau * tau;
    let w = sigma_weights(g);
    let stencils = BoundaryLayout::new(g).normal_stencils();
    let nb = stencils.len();
    let inside = interior_mask(g);

    // e^m = w_m Nᵀ W_b r^m
    let source = |m: usize| -> Vec<f64> {
        let mut e = vec![0.0; ns];
        for (p, row) in stencils.iter().enumerate() {
            let c = w[m * nb + p] * residual[m * nb + p];
            for &(k, s) in row {
                e[k] += s * c;
            }
        }
        e
    };
    let project = |v: &mut [f64]| {
        for (x, &keep) in v.iter_mut().zip(&inside) {
            if !keep {
                *x = 0.0;
            }
        }
    };

    let mut raw = vec![0.0; ns];
    // P Λ^{m+1}, P Λ^{m+2}
    let mut next = vec![0.0; ns];
    let mut next2 = vec![0.0; ns];
    let mut lap = vec![0.0; ns];
    for m in (1..nt).rev() {
        let mut lam = source(m);
        if m + 1 < nt {
            interior_laplacian(g, &next, &mut lap);
            for k in 0..ns {
                if inside[k] {
                    lam[k] += 2.0 * next[k] + tau2 * (lap[k] - q[k] * next[k]) - next2[k];
                }
            }
            // U^{m+1} = P(... - τ² q U^m)
            for k in 0..ns {
                raw[k] -= tau2 * u[m * ns + k] * next[k];
            }
        }
        project(&mut lam);
        next2 = std::mem::replace(&mut next, lam);
    }
    // U¹ = P(τq - ½τ² q U⁰ + ..)
    for k in 0..ns {
        raw[k] += (tau - 0.5 * tau2 * u[k]) * next[k];
    }
    raw
}

/// Value and `L²` gradient of the objective.
pub fn misfit_and_gradient(q: &ScalarField, data: &TraceData, alpha: f64) -> Result<(MisfitParts, ScalarField)> {
    let g = data.grid;
    let u = forward(q, data)?;
    let (p, residual) = parts(q, data, alpha, &u);
    let raw = adjoint_raw(&g, q.values(), &u, &residual);
    let c = g.space_weights();
    let grad: Vec<f64> = raw.iter().zip(&c).zip(q.values()).map(|((r, c), q)| r / c + alpha * q).collect();
    Ok((p, ScalarField::new(g, grad)?))
}

/// `L²` gradient of [`misfit`]; `⟨∇J, d⟩` is the directional derivative.
pub fn gradient(q: &ScalarField, data: &TraceData, alpha: f64) -> Result<ScalarField> {
    Ok(misfit_and_gradient(q, data, alpha)?.1)
}

/// Linearised map `δq ↦ δ(∂_ν u)` on the lateral boundary, time-major.
pub fn tangent(q: &ScalarField, dq: &ScalarField, data: &TraceData) -> Result<Vec<f64>> {
    let g = data.grid;
    let u = forward(q, data)?;
    let ns = g.n_space();
    let tau2 = g.tau * g.tau;
    let inside = interior_mask(&g);
    let (qv, dv) = (q.values(), dq.values());
    let mut du = vec![0.0; g.n_total()];
    for k in (0..ns).filter(|&k| inside[k]) {
        du[ns + k] = g.tau * dv[k] - 0.5 * tau2 * dv[k] * u[k];
    }
    let mut lap = vec![0.0; ns];
    for m in 1..g.nt - 1 {
        interior_laplacian(&g, &du[m * ns..(m + 1) * ns], &mut lap);
        for k in (0..ns).filter(|&k| inside[k]) {
            let cur = du[m * ns + k];
            du[(m + 1) * ns + k] =
                2.0 * cur - du[(m - 1) * ns + k] + tau2 * (lap[k] - qv[k] * cur - dv[k] * u[m * ns + k]);
        }
    }
    Ok(neumann_of(&g, &du))
}

/// Transpose of [`tangent`] with respect to the lateral quadrature and the
/// plain Euclidean product on nodes: `Σ w r·tangent(δq) = Σ_i δq_i adjoint(r)_i`.
pub fn adjoint(q: &ScalarField, residual: &[f64], data: &TraceData) -> Result<Vec<f64>> {
    let g = data.grid;
    let u = forward(q, data)?;
    if residual.len() != g.nt * BoundaryLayout::new(&g).len() {
        return Err(LabError::FieldMismatch("residual does not match the boundary layout".into()));
    }
    Ok(adjoint_raw(&g, q.values(), &u, residual))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub misfit: f64,
    pub grad_norm: f64,
    /// Accepted step; zero for the initial record.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub q_hat: ScalarField,
    pub history: Vec<IterRecord>,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Steepest descent on [`misfit`] in `L²`.
///
/// Backtracking takes a Barzilai-Borwein trial step (`step0` on the first
/// iteration) and halves it until the Armijo condition holds, so the misfit
/// never increases. A fixed step that increases the misfit aborts the run.
pub fn reconstruct(data: &TraceData, config: &RecoveryConfig) -> Result<Reconstruction> {
    config.validate()?;
    let alpha = config.alpha_reg;
    let mut q = config.q_init.clone();
    let (mut p, mut grad) = misfit_and_gradient(&q, data, alpha)?;
    let j0 = p.total;
    let mut history = vec![IterRecord { iter: 0, misfit: p.total, grad_norm: grad.dot(&grad).sqrt(), step: 0.0 }];
    let mut trial = config.step0;
    let mut converged = j0 == 0.0;
    let mut prev: Option<(ScalarField, ScalarField)> = None;

    for iter in 1..=config.max_iters {
        if converged {
            break;
        }
        let g2 = grad.dot(&grad);
        if g2 == 0.0 {
            converged = true;
            break;
        }
        if config.step_rule == StepRule::Backtracking {
            if let Some((q_old, g_old)) = &prev {
                let s = q.sub(q_old);
                let y = grad.sub(g_old);
                let sy = s.dot(&y);
                if sy > 0.0 {
                    trial = s.dot(&s) / sy;
                }
            }
        }
        let mut step = if config.step_rule == StepRule::Fixed { config.step0 } else { trial };
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = q.zip_with(&grad, |a, b| a - step * b);
            let (pc, gc) = misfit_and_gradient(&cand, data, alpha)?;
            match config.step_rule {
                StepRule::Fixed => {
                    if !(pc.total <= p.total) {
                        return Err(LabError::Diverged(format!(
                            "misfit rose from {:.6e} to {:.6e} at iteration {iter} with fixed step {step}",
                            p.total, pc.total
                        )));
                    }
                    accepted = Some((cand, pc, gc));
                    break;
                }
                StepRule::Backtracking => {
                    if pc.total <= p.total - ARMIJO * step * g2 {
                        accepted = Some((cand, pc, gc));
                        break;
                    }
                    step *= 0.5;
                }
            }
        }
        let Some((cand, pc, gc)) = accepted else {
            // no decrease at any step length: stationary to round-off
            converged = true;
            break;
        };
        prev = Some((std::mem::replace(&mut q, cand), std::mem::replace(&mut grad, gc)));
        p = pc;
        history.push(IterRecord { iter, misfit: p.total, grad_norm: grad.dot(&grad).sqrt(), step });
        if p.total <= config.tol_rel * j0 {
            converged = true;
        }
    }
    Ok(Reconstruction { q_hat: q, history, converged })
}

/// Relative `L²` distance `‖a - b‖ / ‖b‖`.
pub fn relative_error(a: &ScalarField, b: &ScalarField) -> f64 {
    let d = a.sub(b);
    (d.dot(&d) / b.dot(b)).sqrt()
}

/// Potential used by the synthetic inversions: `sin(πx) + ¼ sin(2πx)` per
/// axis, vanishing with its second derivative on the boundary.
pub fn reference_potential(grid: &GridSpec) -> ScalarField {
    use std::f64::consts::PI;
    ScalarField::from_fn(*grid, |x| x.iter().map(|xi| (PI * xi).sin() + 0.25 * (2.0 * PI * xi).sin()).product())
}

/// Dirichlet data of the synthetic inversions: zero, compatible with the
/// reference potential.
pub fn zero_dirichlet(grid: &GridSpec) -> TraceData {
    let mut t = TraceData::zeros(grid);
    t.neumann.clear();
    t
}

/// Solution field for a potential, exposed for diagnostics.
pub fn state(q: &ScalarField, data: &TraceData) -> Result<SpaceTimeField> {
    SpaceTimeField::new(data.grid, forward(q, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> GridSpec {
        GridSpec::unit_interval(41, 0.9, 41).unwrap()
    }

    fn random_field(g: &GridSpec, rng: &mut ChaCha8Rng) -> ScalarField {
        let mut v: Vec<f64> = (0..g.n_space()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for (k, x) in v.iter_mut().enumerate() {
            if g.is_boundary(k) {
                *x = 0.0;
            }
        }
        ScalarField::new(*g, v).unwrap()
    }

    fn setup(g: &GridSpec) -> (ScalarField, TraceData) {
        let q_star = reference_potential(g);
        let data = synthesize(&q_star, &zero_dirichlet(g), g).unwrap();
        (q_star, data)
    }

    #[test]
    fn misfit_at_truth_is_the_regularizer() {
        let g = small();
        let (q_star, data) = setup(&g);
        let alpha = 1e-3;
        let j = misfit(&q_star, &data, alpha).unwrap();
        assert_eq!(j, 0.5 * alpha * q_star.dot(&q_star));
        let bumped = q_star.map(|v| v + 0.01);
        assert!(misfit(&bumped, &data, alpha).unwrap() > j);
    }

    #[test]
    fn zero_problem_has_zero_misfit() {
        let g = small();
        let data = synthesize(&ScalarField::zeros(g), &zero_dirichlet(&g), &g).unwrap();
        assert_eq!(misfit(&ScalarField::zeros(g), &data, 0.0).unwrap(), 0.0);
        let r = reconstruct(&data, &RecoveryConfig::new(&g)).unwrap();
        assert_eq!(r.q_hat.max_abs(), 0.0);
    }

    #[test]
    fn gradient_vanishes_at_truth() {
        let g = small();
        let (q_star, data) = setup(&g);
        let grad = gradient(&q_star, &data, 0.0).unwrap();
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = small();
        let (_, data) = setup(&g);
        let q = ScalarField::from_fn(g, |x| 0.3 * (3.0 * x[0]).sin());
        let alpha = 1e-3;
        let grad = gradient(&q, &data, alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eps = 1e-5;
        for _ in 0..5 {
            let d = random_field(&g, &mut rng);
            let jp = misfit(&q.zip_with(&d, |a, b| a + eps * b), &data, alpha).unwrap();
            let jm = misfit(&q.zip_with(&d, |a, b| a - eps * b), &data, alpha).unwrap();
            let fd = (jp - jm) / (2.0 * eps);
            let an = grad.dot(&d);
            assert!((an - fd).abs() <= 1e-6 * an.abs(), "{an} vs {fd}");
        }
    }

    #[test]
    fn regularizer_adds_alpha_q() {
        let g = small();
        let (_, data) = setup(&g);
        let q = ScalarField::from_fn(g, |x| 0.2 + x[0]);
        let g0 = gradient(&q, &data, 0.0).unwrap();
        let g1 = gradient(&q, &data, 0.5).unwrap();
        let diff = g1.sub(&g0).sub(&q.scale(0.5));
        assert!(diff.max_abs() < 1e-12 * g0.max_abs().max(1.0));
    }

    #[test]
    fn tangent_and_adjoint_are_transposes() {
        let g = GridSpec::unit_square(9, 0.5, 12).unwrap();
        let q = ScalarField::from_fn(g, |x| 1.0 + x[0] * x[1]);
        let data = synthesize(&q, &zero_dirichlet(&g), &g).unwrap();
        let w = sigma_weights(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let dq = random_field(&g, &mut rng);
            let r: Vec<f64> = (0..w.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs: f64 = tangent(&q, &dq, &data).unwrap().iter().zip(&r).zip(&w).map(|((a, b), w)| a * b * w).sum();
            let rhs: f64 = adjoint(&q, &r, &data).unwrap().iter().zip(dq.values()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs(), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn backtracking_is_monotone_and_fixed_step_can_abort() {
        let g = small();
        let (q_star, data) = setup(&g);
        let cfg = RecoveryConfig { max_iters: 50, ..RecoveryConfig::new(&g) };
        let r = reconstruct(&data, &cfg).unwrap();
        for w in r.history.windows(2) {
            assert!(w[1].misfit <= w[0].misfit);
        }
        assert!(relative_error(&r.q_hat, &q_star) < 0.5);
        let bad = RecoveryConfig { step_rule: StepRule::Fixed, step0: 1e6, ..cfg };
        assert!(matches!(reconstruct(&data, &bad), Err(LabError::Diverged(_))));
    }

    #[test]
    fn config_validation() {
        let g = small();
        let c = RecoveryConfig::new(&g);
        assert!(RecoveryConfig { max_iters: 0, ..c.clone() }.validate().is_err());
        assert!(RecoveryConfig { step0: 0.0, ..c.clone() }.validate().is_err());
        assert!(RecoveryConfig { tol_rel: 0.0, ..c }.validate().is_err());
    }
}
