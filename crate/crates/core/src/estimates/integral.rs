//! Integral Carleman, elliptic, energy and combined estimates.
//!
//! All integrals use the normalised weight `exp(2λ(φ - shift))`. Both sides
//! of every estimate carry the same factor, so `Ĉ = lhs / rhs` does not
//! depend on the shift; `ln_lhs_raw` in the details undoes it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::carleman::{boundary_term_b, grad_phase, CarlemanConfig, WeightField};
use crate::grid::{dalembertian, grad_space, grad_tx, laplacian, GridSpec, ScalarField, SpaceTimeField};

use super::{boundary0_integral, sigma_integral_by, space_integral, spacetime_weights, EstimateName, EstimateReport, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Constant subtracted from the phase inside the weight. `None` uses the
    /// supremum of the phase over the grid.
    pub shift: Option<f64>,
    /// Multiplier `m` in front of the lateral boundary integral.
    pub sigma_multiplier: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { shift: None, sigma_multiplier: 1.0 }
    }
}

/// Hypothesis `|Δu(0)| ≤ C(λ^α |∇u(0)| + λ^{α'} |u(0)|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaCondition {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub c: f64,
}

impl DeltaCondition {
    pub fn new(alpha: f64, alpha_prime: f64, c: f64) -> crate::Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) || !(alpha_prime > 0.0 && alpha_prime < 1.5) || !(c > 0.0) {
            return Err(crate::LabError::InvalidConfig(format!(
                "delta condition needs 0 < alpha < 1/2, 0 < alpha' < 3/2, C > 0 (got {alpha}, {alpha_prime}, {c})"
            )));
        }
        Ok(DeltaCondition { alpha, alpha_prime, c })
    }

    /// Checks the hypothesis at interior nodes of `t = 0`. The discrete
    /// Laplacian is given a relative allowance of `κh²` for truncation error.
    /// Returns the number of violating nodes.
    pub fn violations(&self, u0: &ScalarField, lambda: f64) -> usize {
        let g = *u0.grid();
        let lap = laplacian(u0);
        let grad = grad_space(u0);
        let allowance = 1.0 - 50.0 * g.h_max() * g.h_max();
        let la = lambda.powf(self.alpha);
        let lb = lambda.powf(self.alpha_prime);
        (0..g.n_space())
            .filter(|&k| !g.is_boundary(k))
            .filter(|&k| {
                let gn = grad.iter().map(|d| d.values()[k].powi(2)).sum::<f64>().sqrt();
                let bound = self.c * (la * gn + lb * u0.values()[k].abs());
                lap.values()[k].abs() * allowance > bound
            })
            .count()
    }
}

fn shift_of(config: &CarlemanConfig, opts: &VerifyOptions) -> f64 {
    opts.shift.unwrap_or(config.sup_phi)
}

/// Shared weighted quantities of a space-time function.
struct Weighted {
    g: GridSpec,
    lambda: f64,
    w: Vec<f64>,
    grad: Vec<SpaceTimeField>,
    grad2: Vec<f64>,
    u: Vec<f64>,
    /// `(□ + q) u`, or `□u` without a potential.
    op: Vec<f64>,
    /// `q u`, zero without a potential.
    qu: Vec<f64>,
    quad: Vec<f64>,
}

impl Weighted {
    fn new(u: &SpaceTimeField, config: &CarlemanConfig, q: Option<&ScalarField>, shift: f64) -> Self {
        let g = *u.grid();
        let lambda = config.lambda;
        let w = WeightField::with_shift(config, &g, shift).weight.into_values();
        let grad = grad_tx(u);
        let nn = g.n_total();
        let grad2: Vec<f64> = (0..nn).map(|i| grad.iter().map(|d| d.values()[i].powi(2)).sum()).collect();
        let ns = g.n_space();
        let qu: Vec<f64> = match q {
            Some(q) => (0..nn).map(|i| q.values()[i % ns] * u.values()[i]).collect(),
            None => vec![0.0; nn],
        };
        let op: Vec<f64> = dalembertian(u).values().iter().zip(&qu).map(|(b, p)| b + p).collect();
        Weighted { g, lambda, w, grad, grad2, u: u.values().to_vec(), op, qu, quad: spacetime_weights(&g) }
    }

    /// `∫_Q w f(i)`.
    fn q_int(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.quad.iter().enumerate().map(|(i, c)| c * self.w[i] * f(i)).sum()
    }

    /// `∫_{Ω_m} w f(i)` on time level `m`.
    fn level_int(&self, m: usize, f: impl Fn(usize) -> f64) -> f64 {
        let ns = self.g.n_space();
        let vals: Vec<f64> = (0..ns).map(|k| self.w[m * ns + k] * f(m * ns + k)).collect();
        space_integral(&self.g, &vals)
    }

    fn sigma_int(&self, f: impl Fn(usize) -> f64) -> f64 {
        let ns = self.g.n_space();
        sigma_integral_by(&self.g, |m, _, k| self.w[m * ns + k] * f(m * ns + k))
    }

    /// `λ|∇u|² + λ³u²` at node `i`.
    fn carleman_density(&self, i: usize) -> f64 {
        let l = self.lambda;
        l * self.grad2[i] + l.powi(3) * self.u[i] * self.u[i]
    }
}

fn finish(name: EstimateName, lambda: f64, lhs: f64, rhs: f64, shift: f64, mut details: BTreeMap<String, f64>) -> EstimateReport {
    details.insert("shift".to_owned(), shift);
    if lhs > 0.0 {
        details.insert("ln_lhs_raw".to_owned(), lhs.ln() + 2.0 * lambda * shift);
    }
    if rhs > 0.0 {
        details.insert("ln_rhs_raw".to_owned(), rhs.ln() + 2.0 * lambda * shift);
    }
    EstimateReport::ratio(name, lambda, lhs, rhs, details)
}

/// Integral wave Carleman estimate, with the `Ω_T` term and the `t = 0`
/// boundary form `𝓑` on the left. With a potential the source side becomes
/// `2|(□+q)u|² + 2q²u²`.
pub fn verify_wave_carleman(u: &SpaceTimeField, config: &CarlemanConfig, q: Option<&ScalarField>, opts: &VerifyOptions) -> EstimateReport {
    let shift = shift_of(config, opts);
    let s = Weighted::new(u, config, q, shift);
    let l = s.lambda;
    let b = config.beta;
    let top = s.g.nt - 1;

    let interior = s.q_int(|i| b * l * s.grad2[i] + l.powi(3) * s.u[i] * s.u[i]);
    let final_level = s.level_int(top, |i| s.carleman_density(i));
    let bterm = boundary_term_b(u, config);
    let initial_b = s.level_int(0, |i| bterm.values()[i]);
    let source = match q {
        Some(_) => 2.0 * s.q_int(|i| s.op[i] * s.op[i]) + 2.0 * s.q_int(|i| s.qu[i] * s.qu[i]),
        None => s.q_int(|i| s.op[i] * s.op[i]),
    };
    let lateral = opts.sigma_multiplier * s.sigma_int(|i| s.carleman_density(i));

    let lhs = interior + final_level + initial_b;
    let rhs = source + lateral;
    let details = BTreeMap::from([
        ("interior".to_owned(), interior),
        ("final_level".to_owned(), final_level),
        ("initial_boundary_form".to_owned(), initial_b),
        ("source".to_owned(), source),
        ("lateral".to_owned(), lateral),
    ]);
    let mut r = finish(EstimateName::WaveCarleman, l, lhs, rhs, shift, details);
    if lhs < 0.0 {
        r.note = Some("left side negative: the t = 0 boundary form dominates".to_owned());
    }
    r
}

/// Elliptic Carleman estimate at `t = 0` with weight `exp(λ|x - x₀|²)`.
pub fn verify_elliptic(f: &ScalarField, x0: &[f64], lambda: f64, opts: &VerifyOptions) -> EstimateReport {
    let g = *f.grid();
    let psi: Vec<f64> = (0..g.n_space())
        .map(|k| {
            let x = g.coord(k);
            0.5 * (0..g.dim).map(|a| (x[a] - x0[a]).powi(2)).sum::<f64>()
        })
        .collect();
    let shift = opts.shift.unwrap_or_else(|| psi.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let w: Vec<f64> = psi.iter().map(|p| (2.0 * lambda * (p - shift)).exp()).collect();
    let grad = grad_space(f);
    let lap = laplacian(f);
    let fv = f.values();
    let density: Vec<f64> = (0..g.n_space())
        .map(|k| {
            let g2: f64 = grad.iter().map(|d| d.values()[k].powi(2)).sum();
            w[k] * (lambda * g2 + lambda.powi(3) * fv[k] * fv[k])
        })
        .collect();
    let lhs = space_integral(&g, &density);
    let source_vals: Vec<f64> = (0..g.n_space()).map(|k| w[k] * lap.values()[k].powi(2)).collect();
    let source = space_integral(&g, &source_vals);
    let boundary = opts.sigma_multiplier * boundary0_integral(&g, &density);
    let details = BTreeMap::from([("source".to_owned(), source), ("boundary".to_owned(), boundary)]);
    finish(EstimateName::Elliptic, lambda, lhs, source + boundary, shift, details)
}

/// Weighted energy estimate: the `t = 0` energy against the source, the
/// lateral product term, the interior and the final-time terms.
pub fn verify_energy(u: &SpaceTimeField, config: &CarlemanConfig, q: Option<&ScalarField>, opts: &VerifyOptions) -> EstimateReport {
    let shift = shift_of(config, opts);
    let s = Weighted::new(u, config, q, shift);
    let l = s.lambda;
    let cc = config.energy_constant();
    let top = s.g.nt - 1;
    let ns = s.g.n_space();

    let lhs = s.level_int(0, |i| s.grad2[i] + l * l * s.u[i] * s.u[i]);
    let source = s.q_int(|i| s.op[i] * s.op[i]);
    let lateral = opts.sigma_multiplier
        * sigma_integral_by(&s.g, |m, e, k| {
            let i = m * ns + k;
            let x = s.g.coord(k);
            let gp = grad_phase(config, s.g.time(m), &x[..s.g.dim]);
            let sign = e.normal_sign();
            let ut = s.grad[0].values()[i] + l * gp[0] * s.u[i];
            let un = sign * (s.grad[e.axis + 1].values()[i] + l * gp[e.axis + 1] * s.u[i]);
            s.w[i] * (ut * un).abs()
        });
    let interior = cc * s.q_int(|i| l * s.grad2[i] + cc * l.powi(3) * s.u[i] * s.u[i]);
    let final_level = s.level_int(top, |i| s.grad2[i] + cc * l * l * s.u[i] * s.u[i]);
    let rhs = source + lateral + interior + final_level;
    let details = BTreeMap::from([
        ("source".to_owned(), source),
        ("lateral".to_owned(), lateral),
        ("interior".to_owned(), interior),
        ("final_level".to_owned(), final_level),
        ("energy_constant".to_owned(), cc),
    ]);
    finish(EstimateName::Energy, l, lhs, rhs, shift, details)
}

/// The combined estimate in both forms. The first form keeps `∫_{Ω₀} w𝓑` on
/// the left; the second trades it for `∂Ω₀` traces and needs the Laplacian
/// hypothesis, otherwise it is reported as not applicable.
pub fn verify_combined(
    u: &SpaceTimeField,
    config: &CarlemanConfig,
    q: Option<&ScalarField>,
    cond: &DeltaCondition,
    opts: &VerifyOptions,
) -> (EstimateReport, EstimateReport) {
    let shift = shift_of(config, opts);
    let s = Weighted::new(u, config, q, shift);
    let l = s.lambda;
    let ns = s.g.n_space();

    let energy0 = s.level_int(0, |i| s.grad2[i] + l * l * s.u[i] * s.u[i]);
    let bterm = boundary_term_b(u, config);
    let initial_b = s.level_int(0, |i| bterm.values()[i]);
    let source = s.q_int(|i| s.op[i] * s.op[i]);
    let lateral = opts.sigma_multiplier * s.sigma_int(|i| s.carleman_density(i));
    let base = BTreeMap::from([
        ("initial_energy".to_owned(), energy0),
        ("source".to_owned(), source),
        ("lateral".to_owned(), lateral),
    ]);

    let mut d1 = base.clone();
    d1.insert("initial_boundary_form".to_owned(), initial_b);
    let wec1 = finish(EstimateName::CombinedWec1, l, energy0 + initial_b, source + lateral, shift, d1);

    let u0 = u.time_slice(0);
    let violations = cond.violations(&u0, l);
    // spatial gradient only on ∂Ω₀
    let trace: Vec<f64> = (0..ns)
        .map(|k| {
            let g2: f64 = s.grad[1..].iter().map(|d| d.values()[k].powi(2)).sum();
            s.w[k] * (l * l * g2 + l.powi(4) * s.u[k] * s.u[k])
        })
        .collect();
    let corner = boundary0_integral(&s.g, &trace);
    let mut d3 = base;
    d3.insert("initial_trace".to_owned(), corner);
    d3.insert("hypothesis_violations".to_owned(), violations as f64);
    let mut wec3 = finish(EstimateName::CombinedWec3, l, energy0, source + lateral + corner, shift, d3);
    if violations > 0 {
        wec3.verdict = Verdict::NotApplicable;
        wec3.note = Some(format!("Laplacian hypothesis fails at {violations} interior nodes of t = 0"));
    }
    (wec1, wec3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleman::{select_params, sweep_params};
    use crate::grid::make_grid;
    use crate::testfn::{bump, TrigPoly};
    use std::f64::consts::PI;

    fn sweep_1d(lambda: f64) -> (GridSpec, CarlemanConfig) {
        let g = GridSpec::unit_interval(81, 1.0, 101).unwrap();
        let c = sweep_params(&g, &[-1.0], &[-1.0], 1.0, lambda, Some(0.1)).unwrap();
        (g, c)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs())
    }

    #[test]
    fn zero_is_vacuous_everywhere() {
        let (g, c) = sweep_1d(5.0);
        let z = SpaceTimeField::zeros(g);
        let o = VerifyOptions::default();
        assert_eq!(verify_wave_carleman(&z, &c, None, &o).verdict, Verdict::PassVacuous);
        assert_eq!(verify_energy(&z, &c, None, &o).verdict, Verdict::PassVacuous);
        let f = ScalarField::zeros(g);
        assert_eq!(verify_elliptic(&f, &[-1.0], 5.0, &o).verdict, Verdict::PassVacuous);
    }

    #[test]
    fn manufactured_solution_constants_are_stable_in_lambda() {
        let (g, c) = sweep_1d(5.0);
        let u = SpaceTimeField::from_fn(g, |t, x| t.cos() * (PI * x[0]).sin());
        let o = VerifyOptions::default();
        let c1 = verify_wave_carleman(&u, &c, None, &o);
        let c2 = verify_wave_carleman(&u, &c.with_lambda(10.0), None, &o);
        assert_eq!(c1.verdict, Verdict::Pass);
        assert!(c1.empirical_constant > 0.0 && c2.empirical_constant > 0.0);
        let ratio = c1.empirical_constant / c2.empirical_constant;
        assert!(ratio < 10.0 && ratio > 0.1, "{ratio}");
    }

    #[test]
    fn constants_are_shift_invariant_and_homogeneous() {
        let (g, c) = sweep_1d(8.0);
        let u = TrigPoly::random(1, 3, 3, 9).sample(&g);
        let q = ScalarField::from_fn(g, |x| 1.0 + x[0]);
        let a = VerifyOptions::default();
        let b = VerifyOptions { shift: Some(c.sup_phi + 0.3), ..a };
        let cond = DeltaCondition::new(0.25, 1.0, 1e6).unwrap();
        let pairs: Vec<(EstimateReport, EstimateReport)> = vec![
            (verify_wave_carleman(&u, &c, Some(&q), &a), verify_wave_carleman(&u, &c, Some(&q), &b)),
            (verify_energy(&u, &c, Some(&q), &a), verify_energy(&u, &c, Some(&q), &b)),
            (verify_combined(&u, &c, Some(&q), &cond, &a).0, verify_combined(&u, &c, Some(&q), &cond, &b).0),
            (verify_combined(&u, &c, Some(&q), &cond, &a).1, verify_combined(&u, &c, Some(&q), &cond, &b).1),
        ];
        for (x, y) in &pairs {
            assert_eq!(x.verdict, y.verdict);
            assert!(rel(x.empirical_constant, y.empirical_constant) < 1e-9, "{:?}", x.name);
            assert!(rel(x.details["ln_lhs_raw"], y.details["ln_lhs_raw"]) < 1e-9);
        }
        let scaled = u.scale(-3.7);
        let x = verify_energy(&u, &c, Some(&q), &a);
        let y = verify_energy(&scaled, &c, Some(&q), &a);
        assert!(rel(x.empirical_constant, y.empirical_constant) < 1e-12);
    }

    #[test]
    fn theoretical_config_gives_finite_constants() {
        let g = GridSpec::unit_interval(21, 2.0, 60).unwrap();
        let c = select_params(&g, &[-1.0], &[-1.0], Some(2.0)).unwrap();
        let u = SpaceTimeField::from_fn(g, |t, x| t.cos() * (PI * x[0]).sin());
        let r = verify_wave_carleman(&u, &c, None, &VerifyOptions::default());
        assert!(r.empirical_constant.is_finite() && r.empirical_constant > 0.0);
    }

    #[test]
    fn bump_has_negligible_lateral_terms() {
        let (g, c) = sweep_1d(5.0);
        let u = SpaceTimeField::from_fn(g, |t, x| (1.0 + t) * bump(x, &[0.5], 0.3));
        let r = verify_wave_carleman(&u, &c, None, &VerifyOptions::default());
        assert!(r.details["lateral"] < 1e-12 * r.details["source"]);
        assert!(r.empirical_constant > 0.0);
    }

    #[test]
    fn elliptic_constant_stabilises() {
        let g = GridSpec::unit_interval(401, 1.0, 1000).unwrap();
        let f = ScalarField::from_fn(g, |x| (PI * x[0]).sin());
        let cs: Vec<f64> = [5.0, 10.0, 20.0, 40.0]
            .iter()
            .map(|&l| verify_elliptic(&f, &[-1.0], l, &VerifyOptions::default()).empirical_constant)
            .collect();
        assert!(cs.iter().all(|&c| c > 0.0 && c.is_finite()));
        assert!(rel(cs[2], cs[3]) < 0.5, "{cs:?}");
    }

    #[test]
    fn elliptic_interior_bump_has_no_boundary_term() {
        let g = GridSpec::unit_interval(201, 1.0, 400).unwrap();
        let f = ScalarField::from_fn(g, |x| bump(x, &[0.5], 0.3));
        let r = verify_elliptic(&f, &[-1.0], 20.0, &VerifyOptions::default());
        assert!(r.details["boundary"] < 1e-20);
        assert!(r.empirical_constant > 0.0 && r.empirical_constant.is_finite());
    }

    #[test]
    fn zero_initial_value_kills_boundary_form() {
        let (g, c) = sweep_1d(5.0);
        let u = SpaceTimeField::from_fn(g, |t, x| t.sin() * (PI * x[0]).sin());
        let cond = DeltaCondition::new(0.25, 1.0, 1.0).unwrap();
        let (w1, _) = verify_combined(&u, &c, None, &cond, &VerifyOptions::default());
        assert_eq!(w1.details["initial_boundary_form"], 0.0);
        assert_eq!(w1.verdict, Verdict::Pass);
    }

    #[test]
    fn exponential_initial_value_satisfies_hypothesis() {
        let (g, c) = sweep_1d(5.0);
        let u = SpaceTimeField::from_fn(g, |t, x| 2.0 * x[0].exp() * (1.0 + t));
        let cond = DeltaCondition::new(0.25, 1.0, 1.0).unwrap();
        for lam in [1.0, 5.0, 50.0] {
            assert_eq!(cond.violations(&u.time_slice(0), lam), 0);
        }
        let (_, w3) = verify_combined(&u, &c, None, &cond, &VerifyOptions::default());
        assert_eq!(w3.verdict, Verdict::Pass);
    }

    #[test]
    fn quadratic_initial_value_is_not_applicable() {
        let g = make_grid(1, &[-1.0], &[2.0], &[81], 1.0, 101).unwrap();
        let c = sweep_params(&g, &[-2.0], &[-2.0], 1.0, 5.0, Some(0.1)).unwrap();
        let u = SpaceTimeField::from_fn(g, |_, x| x[0] * x[0] * bump(x, &[0.0], 0.8));
        let cond = DeltaCondition::new(0.25, 1.0, 1.0).unwrap();
        let (w1, w3) = verify_combined(&u, &c, None, &cond, &VerifyOptions::default());
        assert_eq!(w3.verdict, Verdict::NotApplicable);
        assert!(w1.verdict.is_pass());
    }

    #[test]
    fn delta_condition_rejects_out_of_range_exponents() {
        assert!(DeltaCondition::new(0.5, 1.0, 1.0).is_err());
        assert!(DeltaCondition::new(0.2, 1.5, 1.0).is_err());
        assert!(DeltaCondition::new(0.2, 1.0, 0.0).is_err());
    }
}
