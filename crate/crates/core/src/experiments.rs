//! Empirical Lipschitz-stability harness for the two inverse problems:
//! simultaneous recovery of `(q, a, b)` from lateral Dirichlet and Neumann
//! data, and recovery of `q` in the initial-potential problem.
//!
//! Every experiment solves two forward problems, differences the lateral
//! traces and reports `ratio = lhs / rhs` of the stability inequality.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman::{CarlemanConfig, WeightField};
use crate::estimates::{boundary0_integral, sigma_integral_by, space_integral, spacetime_weights, EstimateName, EstimateReport};
use crate::forward::{extract_traces, solve_ibvp, solve_initial_potential, IBVPSpec, TraceData};
use crate::grid::{grad_space, grad_tx, laplacian, norms, scalar_norms, BoundaryLayout, GridSpec, ScalarField, SpaceTimeField};
use crate::testfn::bump;
use crate::{LabError, Result};

/// Relative allowance for the truncation error of the discrete Laplacian.
const LAPLACIAN_SLACK: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assumption1Check {
    pub holds: bool,
    /// Spatial node with the largest ratio, `None` without interior nodes.
    pub worst_node: Option<usize>,
    /// `max |Δd| / (|d| + |∇d| + 1e-14)` over interior nodes.
    pub worst_ratio: f64,
}

/// Pointwise check of `|Δd| ≤ C̃(|d| + |∇d|)` at interior nodes. The test
/// allows `κh²` relative truncation error and a round-off floor of the
/// second difference.
pub fn check_assumption1(d: &ScalarField, c_tilde: f64) -> Assumption1Check {
    let g = *d.grid();
    let lap = laplacian(d);
    let grad = grad_space(d);
    let h = g.h_min();
    let floor = 64.0 * f64::EPSILON * d.max_abs() / (h * h);
    let slack = 1.0 + LAPLACIAN_SLACK * g.h_max() * g.h_max();
    let mut holds = true;
    let mut worst_node = None;
    let mut worst_ratio = 0.0;
    for k in (0..g.n_space()).filter(|&k| !g.is_boundary(k)) {
        let gn = grad.iter().map(|c| c.values()[k].powi(2)).sum::<f64>().sqrt();
        let base = d.values()[k].abs() + gn;
        let l = lap.values()[k].abs();
        if l > c_tilde * base * slack + floor {
            holds = false;
        }
        let r = l / (base + 1e-14);
        if worst_node.is_none() || r > worst_ratio {
            worst_ratio = r;
            worst_node = Some(k);
        }
    }
    Assumption1Check { holds, worst_node, worst_ratio }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// Constant differences of the initial data.
    Constants,
    /// Differences proportional to `e^{w·x}`.
    Exponential,
    /// `a_j = 0`, `b_j = q_j`.
    #[value(alias = "zero_initial")]
    ZeroInitial,
}

impl PairKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PairKind::Constants => "constants",
            PairKind::Exponential => "exponential",
            PairKind::ZeroInitial => "zero_initial",
        }
    }
}

/// Which disjunct of the bound on `q` and the lower bound on `a` holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `‖q₁‖_∞ ≤ C₁` and `inf a₂ ≥ C₂`.
    First,
    /// `‖q₂‖_∞ ≤ C₁` and `inf a₁ ≥ C₂`.
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityPair {
    pub kind: PairKind,
    pub amplitude: f64,
    pub seed: u64,
    pub q1: ScalarField,
    pub q2: ScalarField,
    pub a1: ScalarField,
    pub a2: ScalarField,
    pub b1: ScalarField,
    pub b2: ScalarField,
    pub g1: TraceData,
    pub g2: TraceData,
    pub c_tilde: f64,
    pub c1: f64,
    pub c2: f64,
    /// `None` when neither disjunct holds (the initial-potential setting,
    /// where `a_j = 0`).
    pub branch: Option<Branch>,
}

impl StabilityPair {
    pub fn grid(&self) -> &GridSpec {
        self.q1.grid()
    }

    /// Same base fields, every difference multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Result<StabilityPair> {
        let blend = |one: &ScalarField, two: &ScalarField| two.add(&one.sub(two).scale(alpha));
        let q1 = blend(&self.q1, &self.q2);
        let a1 = blend(&self.a1, &self.a2);
        let b1 = blend(&self.b1, &self.b2);
        let g1 = taylor_dirichlet(&q1, &a1, &b1);
        certify(StabilityPair { amplitude: self.amplitude * alpha.abs(), q1, a1, b1, g1, ..self.clone() })
    }

    fn problem(&self, which: usize) -> IBVPSpec {
        let (q, a, b, g) = if which == 1 {
            (&self.q1, &self.a1, &self.b1, &self.g1)
        } else {
            (&self.q2, &self.a2, &self.b2, &self.g2)
        };
        IBVPSpec { grid: *self.grid(), q: q.clone(), a: a.clone(), b: b.clone(), g: g.clone(), source: None }
    }

    pub fn solve(&self) -> Result<(SpaceTimeField, SpaceTimeField)> {
        Ok((solve_ibvp(&self.problem(1))?, solve_ibvp(&self.problem(2))?))
    }
}

/// Dirichlet data `a + tb + t²/2 (Δa - qa) + t³/6 (Δb - qb)` on the lateral
/// boundary: compatible with the initial data up to third order in time.
pub fn taylor_dirichlet(q: &ScalarField, a: &ScalarField, b: &ScalarField) -> TraceData {
    let g = *q.grid();
    let layout = BoundaryLayout::new(&g);
    let acc_a: Vec<f64> = laplacian(a).values().iter().zip(q.values()).zip(a.values()).map(|((l, q), a)| l - q * a).collect();
    let acc_b: Vec<f64> = laplacian(b).values().iter().zip(q.values()).zip(b.values()).map(|((l, q), b)| l - q * b).collect();
    let [c0, c1, c2, c3] = [a.values(), b.values(), &acc_a[..], &acc_b[..]].map(|f| layout.gather(f));
    let mut out = TraceData::zeros(&g);
    out.neumann.clear();
    out.boundary0_values.clear();
    out.boundary0_gradients.clear();
    let nb = layout.len();
    for m in 0..g.nt {
        let t = g.time(m);
        for k in 0..nb {
            out.dirichlet[m * nb + k] = c0[k] + t * c1[k] + 0.5 * t * t * c2[k] + t * t * t / 6.0 * c3[k];
        }
    }
    out
}

fn certify(mut pair: StabilityPair) -> Result<StabilityPair> {
    if pair.kind != PairKind::ZeroInitial {
        for (name, d) in [("a", pair.a1.sub(&pair.a2)), ("b", pair.b1.sub(&pair.b2))] {
            let check = check_assumption1(&d, pair.c_tilde);
            if !check.holds {
                return Err(LabError::InvalidConfig(format!(
                    "generated {name}-difference violates the Laplacian bound (ratio {:.3e} > {})",
                    check.worst_ratio, pair.c_tilde
                )));
            }
        }
    }
    let inf = |f: &ScalarField| f.min();
    let (inf_a1, inf_a2) = (inf(&pair.a1), inf(&pair.a2));
    pair.branch = if inf_a2 > 0.0 {
        pair.c1 = pair.q1.max_abs();
        pair.c2 = inf_a2;
        Some(Branch::First)
    } else if inf_a1 > 0.0 {
        pair.c1 = pair.q2.max_abs();
        pair.c2 = inf_a1;
        Some(Branch::Second)
    } else {
        pair.c1 = pair.q1.max_abs().max(pair.q2.max_abs());
        pair.c2 = 0.0;
        None
    };
    Ok(pair)
}

/// Seeded smooth base potential.
fn base_potential(grid: &GridSpec, rng: &mut ChaCha8Rng) -> ScalarField {
    use std::f64::consts::PI;
    let r0: f64 = rng.gen_range(-1.0..1.0);
    let r1: f64 = rng.gen_range(-1.0..1.0);
    ScalarField::from_fn(*grid, |x| {
        let s: f64 = x.iter().map(|xi| (PI * xi).sin()).product();
        let c: f64 = x.iter().map(|xi| (PI * xi).cos()).product();
        1.0 + 0.5 * r0 * s + 0.25 * r1 * c
    })
}

/// Seeded interior bump for the potential difference.
fn potential_bump(grid: &GridSpec, rng: &mut ChaCha8Rng) -> ScalarField {
    let center: Vec<f64> = (0..grid.dim)
        .map(|a| grid.origin[a] + grid.extent[a] * rng.gen_range(0.4..0.6))
        .collect();
    let radius = 0.3 * grid.extent[..grid.dim].iter().cloned().fold(f64::INFINITY, f64::min);
    ScalarField::from_fn(*grid, |x| std::f64::consts::E * bump(x, &center, radius))
}

/// Builds an admissible pair whose differences have size `amplitude`.
pub fn generate_pair(kind: PairKind, amplitude: f64, seed: u64, grid: &GridSpec) -> Result<StabilityPair> {
    use std::f64::consts::PI;
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(LabError::InvalidConfig(format!("amplitude must be non-negative, got {amplitude}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q2 = base_potential(grid, &mut rng);
    let dq = potential_bump(grid, &mut rng);
    let q1 = q2.add(&dq.scale(amplitude));
    let rb: f64 = rng.gen_range(-1.0..1.0);
    let a2 = ScalarField::from_fn(*grid, |x| 1.0 + 0.25 * (PI * x[0]).sin());
    let b2 = ScalarField::from_fn(*grid, |x| 0.5 * rb * x.iter().map(|xi| (PI * xi).cos()).product::<f64>());

    let (a1, a2, b1, b2, c_tilde) = match kind {
        PairKind::Constants => {
            let a1 = a2.map(|v| v + amplitude);
            let b1 = b2.map(|v| v + amplitude);
            (a1, a2, b1, b2, 0.0)
        }
        PairKind::Exponential => {
            let angle: f64 = rng.gen_range(0.0..2.0 * PI);
            let w: Vec<f64> = if grid.dim == 1 {
                vec![if angle < PI { 1.0 } else { -1.0 }]
            } else {
                vec![angle.cos(), angle.sin()]
            };
            let sb: f64 = rng.gen_range(0.5..1.0);
            let e = ScalarField::from_fn(*grid, |x| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().exp());
            let a1 = a2.add(&e.scale(amplitude));
            let b1 = b2.add(&e.scale(amplitude * sb));
            let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            (a1, a2, b1, b2, wn * wn + wn)
        }
        PairKind::ZeroInitial => {
            let z = ScalarField::zeros(*grid);
            let c = check_assumption1(&q1.sub(&q2), f64::INFINITY).worst_ratio;
            (z.clone(), z, q1.clone(), q2.clone(), c)
        }
    };
    let g1 = taylor_dirichlet(&q1, &a1, &b1);
    let g2 = taylor_dirichlet(&q2, &a2, &b2);
    certify(StabilityPair {
        kind,
        amplitude,
        seed,
        q1,
        q2,
        a1,
        a2,
        b1,
        b2,
        g1,
        g2,
        c_tilde,
        c1: 0.0,
        c2: 0.0,
        branch: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Simultaneous `(q, a, b)` from lateral Dirichlet and Neumann data.
    Thm1,
    /// `q` in the initial-potential problem.
    Thm2,
}

impl Theorem {
    pub fn as_str(&self) -> &'static str {
        match self {
            Theorem::Thm1 => "thm1",
            Theorem::Thm2 => "thm2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub theorem: Theorem,
    pub kind: Option<PairKind>,
    pub seed: u64,
    pub amplitude: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, `None` when `rhs = 0`.
    pub ratio: Option<f64>,
    /// `rhs = 0` with `lhs > 0`.
    pub anomaly: bool,
    /// Individual norms, keyed by name.
    pub components: BTreeMap<String, f64>,
}

impl StabilityReport {
    fn new(theorem: Theorem, kind: Option<PairKind>, seed: u64, amplitude: f64, lhs: f64, rhs: f64, components: BTreeMap<String, f64>) -> Self {
        let ratio = if rhs > 0.0 { Some(lhs / rhs) } else { None };
        StabilityReport { theorem, kind, seed, amplitude, lhs, rhs, ratio, anomaly: rhs == 0.0 && lhs > 0.0, components }
    }
}

/// Left side `‖q₁-q₂‖_{L²} + ‖a₁-a₂‖_{H¹} + ‖b₁-b₂‖_{H¹}` against
/// `‖u₁-u₂‖_{H³(Σ_T)} + ‖∂_ν(u₁-u₂)‖_{H²(Σ_T)}`.
pub fn stability_thm1(pair: &StabilityPair) -> Result<StabilityReport> {
    let (u1, u2) = pair.solve()?;
    let traces = extract_traces(&u1).sub(&extract_traces(&u2));
    let tn = traces.norms();
    let dq = scalar_norms(&pair.q1.sub(&pair.q2), None).l2_interior;
    let da = scalar_norms(&pair.a1.sub(&pair.a2), None).h1_interior;
    let db = scalar_norms(&pair.b1.sub(&pair.b2), None).h1_interior;
    let components = BTreeMap::from([
        ("q_l2".to_owned(), dq),
        ("a_h1".to_owned(), da),
        ("b_h1".to_owned(), db),
        ("dirichlet_h3_sigma".to_owned(), tn.dirichlet[3]),
        ("neumann_h2_sigma".to_owned(), tn.neumann[2]),
    ]);
    Ok(StabilityReport::new(
        Theorem::Thm1,
        Some(pair.kind),
        pair.seed,
        pair.amplitude,
        dq + da + db,
        tn.dirichlet[3] + tn.neumann[2],
        components,
    ))
}

/// `∂_ν u` on the whole cylinder, with `ν` the outer normal of the nearest
/// face of the box.
fn normal_extension(u: &SpaceTimeField) -> SpaceTimeField {
    let g = *u.grid();
    let grads = grad_tx(u);
    let ns = g.n_space();
    let pick: Vec<(usize, f64)> = (0..ns)
        .map(|k| {
            let x = g.coord(k);
            let mut best = (0, -1.0, f64::INFINITY);
            for a in 0..g.dim {
                let lo = x[a] - g.origin[a];
                let hi = g.origin[a] + g.extent[a] - x[a];
                if lo < best.2 {
                    best = (a, -1.0, lo);
                }
                if hi < best.2 {
                    best = (a, 1.0, hi);
                }
            }
            (best.0, best.1)
        })
        .collect();
    let vals = (0..g.n_total())
        .map(|i| {
            let (a, s) = pick[i % ns];
            s * grads[a + 1].values()[i]
        })
        .collect();
    SpaceTimeField::new(g, vals).expect("same grid")
}

/// The initial-potential problem: `‖q₁-q₂‖_{L²(Ω)}` against the four norms
/// as printed (`H¹` and normal-derivative `L²` over the cylinder, `H¹` and
/// normal-derivative `L²` on `∂Ω` at `t = 0`). The lateral-boundary
/// variants are recorded alongside.
pub fn stability_thm2(q1: &ScalarField, q2: &ScalarField, g: &TraceData, grid: &GridSpec) -> Result<StabilityReport> {
    let u1 = solve_initial_potential(q1, g, grid)?;
    let u2 = solve_initial_potential(q2, g, grid)?;
    let u = u1.sub(&u2);
    let n = norms(&u, None);
    let nu = normal_extension(&u);
    let nu_l2 = norms(&nu, None).l2_interior;
    let traces = extract_traces(&u).norms();
    let lhs = scalar_norms(&q1.sub(q2), None).l2_interior;
    let rhs = n.h1_interior + nu_l2 + traces.boundary0_h1 + traces.neumann0_l2;
    let components = BTreeMap::from([
        ("q_l2".to_owned(), lhs),
        ("h1_cylinder".to_owned(), n.h1_interior),
        ("normal_l2_cylinder".to_owned(), nu_l2),
        ("h1_boundary0".to_owned(), traces.boundary0_h1),
        ("normal_l2_boundary0".to_owned(), traces.neumann0_l2),
        ("h1_sigma".to_owned(), n.hk_sigma[0]),
        ("normal_l2_sigma".to_owned(), traces.neumann[0]),
    ]);
    Ok(StabilityReport::new(Theorem::Thm2, None, 0, 0.0, lhs, rhs, components))
}

/// Profile of the potential difference in the initial-potential experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    /// Interior bump.
    Compact,
    /// `1 + ½ sin(πx₁)`, nonzero on the boundary.
    Touching,
}

/// Seeded `(q₁, q₂ = q₁ + ε δq)` and shared Dirichlet data compatible with
/// `u(0) = 0`, `u_t(0) = q₁`.
pub fn thm2_pair(seed: u64, amplitude: f64, support: Support, grid: &GridSpec) -> (ScalarField, ScalarField, TraceData) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q1 = base_potential(grid, &mut rng);
    let dq = match support {
        Support::Compact => potential_bump(grid, &mut rng),
        Support::Touching => ScalarField::from_fn(*grid, |x| 1.0 + 0.5 * (std::f64::consts::PI * x[0]).sin()),
    };
    let q2 = q1.add(&dq.scale(amplitude));
    let g = taylor_dirichlet(&q1, &ScalarField::zeros(*grid), &q1);
    (q1, q2, g)
}

/// `∫_Q w δq² u₂² / ∫_{Ω₀} w δq²`; bounded by a multiple of `(λβ)^{-1/2}`.
pub fn source_decay(dq: &ScalarField, u2: &SpaceTimeField, config: &CarlemanConfig) -> f64 {
    let g = *u2.grid();
    let w = WeightField::new(config, &g).weight;
    let ns = g.n_space();
    let quad = spacetime_weights(&g);
    let dqv = dq.values();
    let num: f64 = (0..g.n_total())
        .map(|i| quad[i] * w.values()[i] * (dqv[i % ns] * u2.values()[i]).powi(2))
        .sum();
    let den_vals: Vec<f64> = (0..ns).map(|k| w.values()[k] * dqv[k] * dqv[k]).collect();
    let den = space_integral(&g, &den_vals);
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Both sides of the initial-data estimate: weighted `H¹ × L²` size of
/// `(a₁-a₂, b₁-b₂)` against `λ^{-1/2}` times the weighted `q`-difference,
/// the lateral Carleman terms and the `∂Ω` terms at `t = 0`.
pub fn lemma_abes_check(pair: &StabilityPair, config: &CarlemanConfig) -> Result<EstimateReport> {
    let g = *pair.grid();
    let (u1, u2) = pair.solve()?;
    let u = u1.sub(&u2);
    let lam = config.lambda;
    let w = WeightField::new(config, &g).weight;
    let wv = w.values();
    let ns = g.n_space();
    let da = pair.a1.sub(&pair.a2);
    let db = pair.b1.sub(&pair.b2);
    let dq = pair.q1.sub(&pair.q2);
    let grad_da = grad_space(&da);

    let lhs_vals: Vec<f64> = (0..ns)
        .map(|k| {
            let g2: f64 = grad_da.iter().map(|c| c.values()[k].powi(2)).sum();
            wv[k] * (g2 + db.values()[k].powi(2) + lam * lam * da.values()[k].powi(2))
        })
        .collect();
    let lhs = space_integral(&g, &lhs_vals);

    let q_vals: Vec<f64> = (0..ns).map(|k| wv[k] * dq.values()[k].powi(2)).collect();
    let q_term = space_integral(&g, &q_vals) / lam.sqrt();
    let grads = grad_tx(&u);
    let lateral = sigma_integral_by(&g, |m, _, k| {
        let i = m * ns + k;
        let g2: f64 = grads.iter().map(|c| c.values()[i].powi(2)).sum();
        wv[i] * (lam * g2 + lam.powi(3) * u.values()[i].powi(2))
    });
    let b0_vals: Vec<f64> = (0..ns)
        .map(|k| {
            let g2: f64 = grads[1..].iter().map(|c| c.values()[k].powi(2)).sum();
            wv[k] * (lam * lam * g2 + lam.powi(4) * u.values()[k].powi(2))
        })
        .collect();
    let corner = boundary0_integral(&g, &b0_vals);
    let decay = source_decay(&dq, &u2, config);
    let details = BTreeMap::from([
        ("q_term".to_owned(), q_term),
        ("lateral".to_owned(), lateral),
        ("initial_trace".to_owned(), corner),
        ("source_decay".to_owned(), decay),
    ]);
    Ok(EstimateReport::ratio(EstimateName::InitialData, lam, lhs, q_term + lateral + corner, details))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearityCheck {
    /// `lhs(αδ) / lhs(δ)`.
    pub lhs_factor: f64,
    /// `rhs(αδ) / rhs(δ)`.
    pub rhs_factor: f64,
    /// The data side departs from `|α|` by more than 10%.
    pub nonlinear_regime: bool,
}

/// Rescales every difference by `alpha` and compares both sides of the
/// first stability inequality.
pub fn linearity_check(pair: &StabilityPair, alpha: f64) -> Result<LinearityCheck> {
    let base = stability_thm1(pair)?;
    let scaled = stability_thm1(&pair.scaled(alpha)?)?;
    let lhs_factor = scaled.lhs / base.lhs;
    let rhs_factor = scaled.rhs / base.rhs;
    let nonlinear_regime = !((rhs_factor / alpha.abs() - 1.0).abs() <= 0.1);
    Ok(LinearityCheck { lhs_factor, rhs_factor, nonlinear_regime })
}

/// Grid used by the stability experiments: unit box, `T = 2`, about 80
/// cells per unit length in 1D and 40 in 2D.
pub fn desk_grid(dim: usize) -> Result<GridSpec> {
    match dim {
        1 => GridSpec::unit_interval(81, 2.0, 201),
        2 => GridSpec::unit_square(41, 2.0, 161),
        _ => Err(LabError::InvalidGrid(format!("dimension must be 1 or 2, got {dim}"))),
    }
}

/// One first-theorem report per `(kind, amplitude, seed)`, in that order.
pub fn run_thm1_ensemble(kinds: &[PairKind], amplitudes: &[f64], seeds: &[u64], grid: &GridSpec) -> Result<Vec<StabilityReport>> {
    let jobs: Vec<(PairKind, f64, u64)> = kinds
        .iter()
        .flat_map(|&k| amplitudes.iter().flat_map(move |&a| seeds.iter().map(move |&s| (k, a, s))))
        .collect();
    jobs.par_iter()
        .map(|&(k, a, s)| stability_thm1(&generate_pair(k, a, s, grid)?))
        .collect()
}

/// One second-theorem report per `(amplitude, seed)`.
pub fn run_thm2_ensemble(amplitudes: &[f64], seeds: &[u64], support: Support, grid: &GridSpec) -> Result<Vec<StabilityReport>> {
    let jobs: Vec<(f64, u64)> = amplitudes.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    jobs.par_iter()
        .map(|&(a, s)| {
            let (q1, q2, g) = thm2_pair(s, a, support, grid);
            let mut r = stability_thm2(&q1, &q2, &g, grid)?;
            r.seed = s;
            r.amplitude = a;
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub finite: usize,
    pub anomalies: usize,
    /// Largest ratio: the empirical Lipschitz constant.
    pub max_ratio: Option<f64>,
    pub median_ratio: Option<f64>,
}

pub fn summarize(reports: &[StabilityReport]) -> EnsembleSummary {
    let mut ratios: Vec<f64> = reports.iter().filter_map(|r| r.ratio).filter(|r| r.is_finite()).collect();
    ratios.sort_by(f64::total_cmp);
    let median = if ratios.is_empty() {
        None
    } else if ratios.len() % 2 == 1 {
        Some(ratios[ratios.len() / 2])
    } else {
        Some(0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2]))
    };
    EnsembleSummary {
        runs: reports.len(),
        finite: ratios.len(),
        anomalies: reports.iter().filter(|r| r.anomaly).count(),
        max_ratio: ratios.last().copied(),
        median_ratio: median,
    }
}
