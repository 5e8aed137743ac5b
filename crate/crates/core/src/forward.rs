//! Explicit leapfrog solver for `(□ + q) u = f` on the grid box with
//! Dirichlet data, and lateral-boundary trace extraction.
//!
//! Interior nodes follow
//! `u^{m+1} = 2u^m - u^{m-1} + τ²(Δ_h u^m - q u^m + f^m)` with the Taylor
//! start `u^1 = a + τb + ½τ²(Δ_h a - q a + f^0)`; boundary nodes take the
//! Dirichlet value at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::io::{Grd1, Grd1Header};
use crate::grid::{make_grid, sigma_norm_squares, BoundaryLayout, GridSpec, ScalarField, SpaceTimeField};

/// Boundary records of a space-time field. Arrays over `(time, boundary
/// node)` are time-major in [`BoundaryLayout`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceData {
    pub grid: GridSpec,
    pub dirichlet: Vec<f64>,
    /// Outward normal derivative; empty when not recorded.
    pub neumann: Vec<f64>,
    pub boundary0_values: Vec<f64>,
    /// `dim` gradient components per boundary node at `t = 0`.
    pub boundary0_gradients: Vec<f64>,
}

/// Cumulative trace norms `[L², H¹, H², H³]` on the lateral boundary and the
/// `t = 0` boundary norms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceNorms {
    pub dirichlet: [f64; 4],
    pub neumann: [f64; 4],
    pub boundary0_l2: f64,
    pub boundary0_h1: f64,
    pub neumann0_l2: f64,
}

impl TraceData {
    pub fn zeros(grid: &GridSpec) -> Self {
        let nb = BoundaryLayout::new(grid).len();
        TraceData {
            grid: *grid,
            dirichlet: vec![0.0; grid.nt * nb],
            neumann: vec![0.0; grid.nt * nb],
            boundary0_values: vec![0.0; nb],
            boundary0_gradients: vec![0.0; nb * grid.dim],
        }
    }

    /// Dirichlet data sampled from `g(t, x)`; the other records stay empty.
    pub fn dirichlet_from_fn(grid: &GridSpec, g: impl Fn(f64, &[f64]) -> f64) -> Self {
        let layout = BoundaryLayout::new(grid);
        let mut dirichlet = Vec::with_capacity(grid.nt * layout.len());
        for m in 0..grid.nt {
            let t = grid.time(m);
            for e in layout.edges() {
                for &k in &e.nodes {
                    let x = grid.coord(k);
                    dirichlet.push(g(t, &x[..grid.dim]));
                }
            }
        }
        TraceData {
            grid: *grid,
            dirichlet,
            neumann: Vec::new(),
            boundary0_values: Vec::new(),
            boundary0_gradients: Vec::new(),
        }
    }

    pub fn n_boundary(&self) -> usize {
        BoundaryLayout::new(&self.grid).len()
    }

    pub fn has_neumann(&self) -> bool {
        !self.neumann.is_empty()
    }

    pub fn dirichlet_at(&self, m: usize) -> &[f64] {
        let nb = self.n_boundary();
        &self.dirichlet[m * nb..(m + 1) * nb]
    }

    fn check(&self) -> Result<()> {
        let nb = self.n_boundary();
        let nt = self.grid.nt;
        let ok = self.dirichlet.len() == nt * nb
            && (self.neumann.is_empty() || self.neumann.len() == nt * nb)
            && (self.boundary0_values.is_empty() || self.boundary0_values.len() == nb)
            && (self.boundary0_gradients.is_empty() || self.boundary0_gradients.len() == nb * self.grid.dim);
        if !ok {
            return Err(LabError::FieldMismatch("trace arrays do not match the boundary layout".into()));
        }
        let all = self
            .dirichlet
            .iter()
            .chain(&self.neumann)
            .chain(&self.boundary0_values)
            .chain(&self.boundary0_gradients);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite("trace data".into()));
        }
        Ok(())
    }

    /// Entry-wise difference of records present in both.
    pub fn sub(&self, other: &TraceData) -> TraceData {
        let diff = |a: &[f64], b: &[f64]| -> Vec<f64> {
            if a.len() == b.len() {
                a.iter().zip(b).map(|(x, y)| x - y).collect()
            } else {
                Vec::new()
            }
        };
        TraceData {
            grid: self.grid,
            dirichlet: diff(&self.dirichlet, &other.dirichlet),
            neumann: diff(&self.neumann, &other.neumann),
            boundary0_values: diff(&self.boundary0_values, &other.boundary0_values),
            boundary0_gradients: diff(&self.boundary0_gradients, &other.boundary0_gradients),
        }
    }

    pub fn norms(&self) -> TraceNorms {
        let layout = BoundaryLayout::new(&self.grid);
        let root = |s: [f64; 4]| s.map(f64::sqrt);
        let dirichlet = root(sigma_norm_squares(&layout, &self.dirichlet, None));
        let neumann = if self.has_neumann() {
            root(sigma_norm_squares(&layout, &self.neumann, None))
        } else {
            [0.0; 4]
        };
        let w = layout.weights();
        let dim = self.grid.dim;
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let v = self.boundary0_values.get(k).copied().unwrap_or(0.0);
            let g2: f64 = if self.boundary0_gradients.is_empty() {
                0.0
            } else {
                self.boundary0_gradients[k * dim..(k + 1) * dim].iter().map(|d| d * d).sum()
            };
            l2 += wk * v * v;
            h1 += wk * (v * v + g2);
        }
        let n0: f64 = if self.has_neumann() {
            w.iter().zip(&self.neumann[..w.len()]).map(|(wk, d)| wk * d * d).sum()
        } else {
            0.0
        };
        TraceNorms {
            dirichlet,
            neumann,
            boundary0_l2: l2.sqrt(),
            boundary0_h1: h1.sqrt(),
            neumann0_l2: n0.sqrt(),
        }
    }

    /// Writes `<prefix>_dirichlet.grd` and, if recorded, `<prefix>_neumann.grd`.
    pub fn write_grd1(&self, prefix: &Path) -> Result<Vec<PathBuf>> {
        let nb = self.n_boundary();
        let mut out = Vec::new();
        let mut write = |kind: &str, values: &[f64]| -> Result<()> {
            let path = PathBuf::from(format!("{}_{kind}.grd", prefix.display()));
            let file = Grd1 {
                header: Grd1Header::for_grid(&self.grid, self.grid.nt, Some(kind)),
                values: values.to_vec(),
            };
            file.write(&path, nb)?;
            out.push(path);
            Ok(())
        };
        write("dirichlet", &self.dirichlet)?;
        if self.has_neumann() {
            write("neumann", &self.neumann)?;
        }
        Ok(out)
    }

    /// Reads trace files written by [`TraceData::write_grd1`].
    pub fn read_grd1(grid: &GridSpec, dirichlet: &Path, neumann: Option<&Path>) -> Result<Self> {
        let load = |path: &Path, kind: &str| -> Result<Vec<f64>> {
            let f = Grd1::read(path)?;
            if f.header.kind.as_deref() != Some(kind) {
                return Err(LabError::Parse(format!("{} is not a {kind} trace", path.display())));
            }
            let g = f.header.grid()?;
            if !g.same_spacetime(grid) {
                return Err(LabError::FieldMismatch(format!("{} was written for another grid", path.display())));
            }
            Ok(f.values)
        };
        let mut t = TraceData {
            grid: *grid,
            dirichlet: load(dirichlet, "dirichlet")?,
            neumann: match neumann {
                Some(p) => load(p, "neumann")?,
                None => Vec::new(),
            },
            boundary0_values: Vec::new(),
            boundary0_gradients: Vec::new(),
        };
        let nb = t.n_boundary();
        if t.dirichlet.len() == grid.nt * nb {
            t.boundary0_values = t.dirichlet[..nb].to_vec();
        }
        t.check()?;
        Ok(t)
    }
}

/// All boundary records of `u`.
pub fn extract_traces(u: &SpaceTimeField) -> TraceData {
    let g = *u.grid();
    let layout = BoundaryLayout::new(&g);
    let mut dirichlet = Vec::with_capacity(g.nt * layout.len());
    let mut neumann = Vec::with_capacity(g.nt * layout.len());
    for m in 0..g.nt {
        dirichlet.extend(layout.gather(u.slice(m)));
        neumann.extend(layout.normal_derivative(u.slice(m)));
    }
    TraceData {
        grid: g,
        dirichlet,
        neumann,
        boundary0_values: layout.gather(u.slice(0)),
        boundary0_gradients: layout.gradient(u.slice(0)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IBVPSpec {
    pub grid: GridSpec,
    pub q: ScalarField,
    pub a: ScalarField,
    pub b: ScalarField,
    pub g: TraceData,
    pub source: Option<SpaceTimeField>,
}

impl IBVPSpec {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        for (name, f) in [("q", &self.q), ("a", &self.a), ("b", &self.b)] {
            if !f.grid().same_space(g) {
                return Err(LabError::FieldMismatch(format!("{name} lives on a different grid")));
            }
        }
        if let Some(f) = &self.source {
            if !f.grid().same_spacetime(g) {
                return Err(LabError::FieldMismatch("source lives on a different grid".into()));
            }
        }
        if !self.g.grid.same_spacetime(g) {
            return Err(LabError::FieldMismatch("boundary data lives on a different grid".into()));
        }
        self.g.check()?;
        let layout = BoundaryLayout::new(g);
        let a_b = layout.gather(self.a.values());
        let worst = a_b
            .iter()
            .zip(self.g.dirichlet_at(0))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if worst > 1e-10 {
            return Err(LabError::InvalidConfig(format!(
                "boundary data and initial position disagree on the boundary at t = 0 (max gap {worst:.3e})"
            )));
        }
        Ok(())
    }
}

/// Applies the interior five-point (three-point in 1D) Laplacian to `u` and
/// accumulates `scale * (Δu - q u + f)` into `out` at interior nodes.
fn accumulate_rhs(g: &GridSpec, u: &[f64], q: &[f64], f: Option<&[f64]>, scale: f64, out: &mut [f64]) {
    let [n0, n1] = g.nx;
    let ih0 = 1.0 / (g.h[0] * g.h[0]);
    if g.dim == 1 {
        for i in 1..n0 - 1 {
            let lap = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * ih0;
            let src = f.map_or(0.0, |f| f[i]);
            out[i] += scale * (lap - q[i] * u[i] + src);
        }
        return;
    }
    let ih1 = 1.0 / (g.h[1] * g.h[1]);
    for i in 1..n0 - 1 {
        for j in 1..n1 - 1 {
            let k = i * n1 + j;
            let lap = (u[k - n1] - 2.0 * u[k] + u[k + n1]) * ih0 + (u[k - 1] - 2.0 * u[k] + u[k + 1]) * ih1;
            let src = f.map_or(0.0, |f| f[k]);
            out[k] += scale * (lap - q[k] * u[k] + src);
        }
    }
}

/// Raw leapfrog on flat arrays. `dirichlet` is time-major in boundary layout
/// order; `source`, if present, is a full space-time array.
pub fn leapfrog(
    grid: &GridSpec,
    q: &[f64],
    a: &[f64],
    b: &[f64],
    dirichlet: &[f64],
    source: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let g = grid;
    let ns = g.n_space();
    let layout = BoundaryLayout::new(g);
    let nb = layout.len();
    let limit = g.cfl_limit();
    if g.tau > limit * (1.0 + 1e-12) {
        return Err(LabError::Cfl {
            tau: g.tau,
            limit,
            min_nt: crate::grid::min_admissible_nt(g.dim, g.h_min(), g.t_final),
        });
    }
    let bnodes: Vec<usize> = layout.edges().iter().flat_map(|e| e.nodes.iter().copied()).collect();
    let tau2 = g.tau * g.tau;
    let src = |m: usize| source.map(|s| &s[m * ns..(m + 1) * ns]);
    let inject = |level: &mut [f64], m: usize| {
        for (p, &k) in bnodes.iter().enumerate() {
            level[k] = dirichlet[m * nb + p];
        }
    };
    let mut u = vec![0.0; g.n_total()];
    u[..ns].copy_from_slice(a);
    inject(&mut u[..ns], 0);

    let mut next: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + g.tau * y).collect();
    accumulate_rhs(g, &u[..ns], q, src(0), 0.5 * tau2, &mut next);
    inject(&mut next, 1);
    u[ns..2 * ns].copy_from_slice(&next);

    for m in 1..g.nt - 1 {
        let (done, rest) = u.split_at_mut((m + 1) * ns);
        let prev = &done[(m - 1) * ns..m * ns];
        let cur = &done[m * ns..(m + 1) * ns];
        let out = &mut rest[..ns];
        for k in 0..ns {
            out[k] = 2.0 * cur[k] - prev[k];
        }
        accumulate_rhs(g, cur, q, src(m), tau2, out);
        inject(out, m + 1);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Diverged(format!(
                "non-finite value at time step {} (t = {:.6})",
                m + 1,
                g.time(m + 1)
            )));
        }
    }
    Ok(u)
}

pub fn solve_ibvp(spec: &IBVPSpec) -> Result<SpaceTimeField> {
    spec.validate()?;
    let u = leapfrog(
        &spec.grid,
        spec.q.values(),
        spec.a.values(),
        spec.b.values(),
        &spec.g.dirichlet,
        spec.source.as_ref().map(|s| s.values()),
    )?;
    SpaceTimeField::new(spec.grid, u)
}

/// `(□ + q) u = 0`, `u = g` on the lateral boundary, `u(0) = 0`, `u_t(0) = q`.
pub fn solve_initial_potential(q: &ScalarField, g: &TraceData, grid: &GridSpec) -> Result<SpaceTimeField> {
    solve_ibvp(&IBVPSpec {
        grid: *grid,
        q: q.clone(),
        a: ScalarField::zeros(*grid),
        b: q.clone(),
        g: g.clone(),
        source: None,
    })
}

/// Manufactured problem: `q = 1 - π²`, `u = cos(t) sin(πx_1)·Π sin(πx_j)`
/// style data on the unit box. Returns the problem and the exact solution.
pub fn manufactured_cos_sin(grid: &GridSpec) -> (IBVPSpec, SpaceTimeField) {
    use std::f64::consts::PI;
    let d = grid.dim as f64;
    let shape = |x: &[f64]| x.iter().map(|xi| (PI * xi).sin()).product::<f64>();
    let q = ScalarField::constant(*grid, 1.0 - d * PI * PI);
    let a = ScalarField::from_fn(*grid, shape);
    let exact = SpaceTimeField::from_fn(*grid, |t, x| t.cos() * shape(x));
    let spec = IBVPSpec {
        grid: *grid,
        q,
        a,
        b: ScalarField::zeros(*grid),
        g: TraceData::dirichlet_from_fn(grid, |t, x| t.cos() * shape(x)),
        source: None,
    };
    (spec, exact)
}

/// Discrete energy `∫ (u_t² + |∇u|² + q u²)` at each interior time level,
/// with centred differences in time.
pub fn discrete_energy(u: &SpaceTimeField, q: &ScalarField) -> Vec<f64> {
    let g = *u.grid();
    let ws = g.space_weights();
    let mut out = Vec::new();
    for m in 1..g.nt - 1 {
        let cur = u.time_slice(m);
        let grads = crate::grid::grad_space(&cur);
        let mut e = 0.0;
        for k in 0..g.n_space() {
            let ut = (u.at(m + 1, k) - u.at(m - 1, k)) / (2.0 * g.tau);
            let g2: f64 = grads.iter().map(|d| d.values()[k].powi(2)).sum();
            e += ws[k] * (ut * ut + g2 + q.values()[k] * cur.values()[k].powi(2));
        }
        out.push(e);
    }
    out
}

/// One level of a refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub nx: usize,
    pub nt: usize,
    pub h: f64,
    pub tau: f64,
    /// `L²(Q_T)` norm of the error.
    pub l2_error: f64,
    /// `L²(Σ_T)` norm of the error in the normal derivative.
    pub trace_error: f64,
    /// Error of the previous (coarser) level divided by this one.
    pub l2_ratio: Option<f64>,
    pub trace_ratio: Option<f64>,
}

/// Solves the manufactured problem on `levels` grids, halving `h` and `τ`
/// each time, starting from `grid`.
pub fn convergence_study(grid: &GridSpec, levels: usize) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    let mut g = *grid;
    for level in 0..levels {
        if level > 0 {
            g = g.refined()?;
        }
        let (spec, exact) = manufactured_cos_sin(&g);
        let e = solve_ibvp(&spec)?.sub(&exact);
        let l2_error = crate::grid::norms(&e, None).l2_interior;
        let trace_error = extract_traces(&e).norms().neumann[0];
        let prev = rows.last();
        rows.push(ConvergenceRow {
            nx: g.nx[0],
            nt: g.nt,
            h: g.h[0],
            tau: g.tau,
            l2_error,
            trace_error,
            l2_ratio: prev.map(|p| p.l2_error / l2_error),
            trace_ratio: prev.map(|p| p.trace_error / trace_error),
        });
    }
    Ok(rows)
}

/// JSON description of a forward problem; field entries are GRD1 paths
/// relative to the JSON file, or omitted for zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbvpFile {
    pub dim: usize,
    #[serde(default)]
    pub origin: Option<Vec<f64>>,
    pub extent: Vec<f64>,
    pub nx: Vec<usize>,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub nt: usize,
    #[serde(default)]
    pub q: Option<PathBuf>,
    #[serde(default)]
    pub a: Option<PathBuf>,
    #[serde(default)]
    pub b: Option<PathBuf>,
    #[serde(default)]
    pub dirichlet: Option<PathBuf>,
    #[serde(default)]
    pub source: Option<PathBuf>,
}

impl IbvpFile {
    pub fn load(path: &Path) -> Result<IBVPSpec> {
        let file: IbvpFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let origin = file.origin.clone().unwrap_or_else(|| vec![0.0; file.dim]);
        let grid = make_grid(file.dim, &origin, &file.extent, &file.nx, file.t_final, file.nt)?;
        let scalar = |p: &Option<PathBuf>| -> Result<ScalarField> {
            match p {
                Some(p) => Grd1::read(&base.join(p))?.into_scalar(&grid),
                None => Ok(ScalarField::zeros(grid)),
            }
        };
        let g = match &file.dirichlet {
            Some(p) => TraceData::read_grd1(&grid, &base.join(p), None)?,
            None => TraceData::zeros(&grid),
        };
        let source = match &file.source {
            Some(p) => Some(Grd1::read(&base.join(p))?.into_spacetime(&grid)?),
            None => None,
        };
        Ok(IBVPSpec { grid, q: scalar(&file.q)?, a: scalar(&file.a)?, b: scalar(&file.b)?, g, source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{dalembertian, norms};
    use std::f64::consts::PI;

    fn l2_error(nx: usize, nt: usize) -> (f64, f64) {
        let g = GridSpec::unit_interval(nx, 2.0, nt).unwrap();
        let (spec, exact) = manufactured_cos_sin(&g);
        let u = solve_ibvp(&spec).unwrap();
        let e = u.sub(&exact);
        let n = norms(&e, None);
        let tr = extract_traces(&e).norms();
        (n.l2_interior, tr.neumann[0])
    }

    #[test]
    fn manufactured_solution_error_is_small() {
        let g = GridSpec::unit_interval(101, 2.0, 401).unwrap();
        let (e, _) = l2_error(101, 401);
        assert!(e <= 10.0 * (g.tau * g.tau + g.h[0] * g.h[0]), "{e}");
    }

    #[test]
    fn second_order_convergence() {
        let (e1, n1) = l2_error(41, 161);
        let (e2, n2) = l2_error(81, 321);
        let r = e1 / e2;
        let rn = n1 / n2;
        assert!((3.5..=4.5).contains(&r), "interior ratio {r}");
        assert!((3.5..=4.5).contains(&rn), "trace ratio {rn}");
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let g = GridSpec::unit_square(11, 1.0, 30).unwrap();
        let spec = IBVPSpec {
            grid: g,
            q: ScalarField::constant(g, 2.0),
            a: ScalarField::zeros(g),
            b: ScalarField::zeros(g),
            g: TraceData::zeros(&g),
            source: None,
        };
        assert_eq!(solve_ibvp(&spec).unwrap().max_abs(), 0.0);
        let q = ScalarField::zeros(g);
        assert_eq!(solve_initial_potential(&q, &TraceData::zeros(&g), &g).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn initial_potential_matches_ibvp_bitwise() {
        let g = GridSpec::unit_interval(41, 1.0, 60).unwrap();
        let q = ScalarField::from_fn(g, |x| 0.1 * (PI * x[0]).sin().powi(2));
        let data = TraceData::dirichlet_from_fn(&g, |t, x| t * x[0]);
        let a = solve_initial_potential(&q, &data, &g).unwrap();
        let b = solve_ibvp(&IBVPSpec {
            grid: g,
            q: q.clone(),
            a: ScalarField::zeros(g),
            b: q.clone(),
            g: data,
            source: None,
        })
        .unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn rejects_incompatible_data_and_cfl() {
        let g = GridSpec::unit_interval(11, 1.0, 20).unwrap();
        let spec = IBVPSpec {
            grid: g,
            q: ScalarField::zeros(g),
            a: ScalarField::constant(g, 1.0),
            b: ScalarField::zeros(g),
            g: TraceData::zeros(&g),
            source: None,
        };
        assert!(matches!(solve_ibvp(&spec), Err(LabError::InvalidConfig(_))));
        let mut bad = g;
        bad.nt = 5;
        bad.tau = 0.25;
        let err = leapfrog(&bad, &[0.0; 11], &[0.0; 11], &[0.0; 11], &[0.0; 10], None).unwrap_err();
        assert!(matches!(err, LabError::Cfl { .. }));
    }

    #[test]
    fn traces_of_simple_fields() {
        let g = GridSpec::unit_interval(21, 1.0, 30).unwrap();
        let u = SpaceTimeField::from_fn(g, |_, x| x[0]);
        let tr = extract_traces(&u);
        for m in 0..g.nt {
            assert!((tr.neumann[2 * m] + 1.0).abs() < 1e-12);
            assert!((tr.neumann[2 * m + 1] - 1.0).abs() < 1e-12);
        }
        let z = extract_traces(&SpaceTimeField::zeros(g));
        assert!(z.dirichlet.iter().chain(&z.neumann).all(|&v| v == 0.0));

        let g = GridSpec::unit_interval(101, 1.0, 150).unwrap();
        let u = SpaceTimeField::from_fn(g, |t, x| t.cos() * (PI * x[0]).sin());
        let tr = extract_traces(&u);
        let h = g.h[0];
        for m in 0..g.nt {
            let want = -PI * g.time(m).cos();
            assert!((tr.neumann[2 * m] - want).abs() <= 10.0 * h * h * PI.powi(3));
        }
    }

    #[test]
    fn energy_is_conserved() {
        let g = GridSpec::unit_interval(101, 2.0, 301).unwrap();
        let q = ScalarField::from_fn(g, |x| 1.0 + x[0]);
        let spec = IBVPSpec {
            grid: g,
            q: q.clone(),
            a: ScalarField::from_fn(g, |x| (PI * x[0]).sin()),
            b: ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin()),
            g: TraceData::zeros(&g),
            source: None,
        };
        let u = solve_ibvp(&spec).unwrap();
        let e = discrete_energy(&u, &q);
        let e0 = e[0];
        let drift = e.iter().map(|v| (v - e0).abs()).fold(0.0, f64::max) / e0;
        assert!(drift < 20.0 * (g.tau * g.tau + g.h[0] * g.h[0]) * PI * PI, "{drift}");
    }

    #[test]
    fn solver_is_linear() {
        let g = GridSpec::unit_square(15, 1.0, 30).unwrap();
        let q = ScalarField::from_fn(g, |x| x[0] * x[1]);
        let mk = |s: f64| IBVPSpec {
            grid: g,
            q: q.clone(),
            a: ScalarField::from_fn(g, |x| s * (x[0] + x[1] * x[1])),
            b: ScalarField::from_fn(g, |x| (s * x[0]).cos()),
            g: TraceData::dirichlet_from_fn(&g, |t, x| s * (x[0] + x[1] * x[1]) + t * (s * x[0]).cos()),
            source: Some(SpaceTimeField::from_fn(g, |t, x| (t * s + x[1]).sin())),
        };
        let (s1, s2, alpha) = (0.7, -1.3, 2.5);
        let u1 = solve_ibvp(&mk(s1)).unwrap();
        let u2 = solve_ibvp(&mk(s2)).unwrap();
        let p1 = mk(s1);
        let p2 = mk(s2);
        let combo = IBVPSpec {
            grid: g,
            q: q.clone(),
            a: p1.a.scale(alpha).add(&p2.a),
            b: p1.b.scale(alpha).add(&p2.b),
            g: TraceData {
                dirichlet: p1.g.dirichlet.iter().zip(&p2.g.dirichlet).map(|(x, y)| alpha * x + y).collect(),
                ..p1.g.clone()
            },
            source: Some(p1.source.unwrap().scale(alpha).add(&p2.source.unwrap())),
        };
        let u = solve_ibvp(&combo).unwrap();
        let want = u1.scale(alpha).add(&u2);
        assert!(u.sub(&want).max_abs() <= 1e-12 * want.max_abs());
    }

    #[test]
    fn difference_system_residual() {
        let g = GridSpec::unit_interval(161, 1.0, 241).unwrap();
        let g_data = TraceData::dirichlet_from_fn(&g, |t, x| t * (1.0 + x[0]));
        let q1 = ScalarField::from_fn(g, |x| 1.0 + (PI * x[0]).sin());
        let q2 = ScalarField::from_fn(g, |x| 1.0 + 0.8 * (PI * x[0]).sin());
        let u1 = solve_initial_potential(&q1, &g_data, &g).unwrap();
        let u2 = solve_initial_potential(&q2, &g_data, &g).unwrap();
        let w = u1.sub(&u2);
        let q1s = SpaceTimeField::from_static(&q1);
        let dq = SpaceTimeField::from_static(&q2.sub(&q1));
        let res = dalembertian(&w).add(&q1s.mul(&w)).sub(&dq.mul(&u2));
        // interior nodes in space and time
        let ns = g.n_space();
        let mut worst: f64 = 0.0;
        for m in 2..g.nt - 2 {
            for k in 2..ns - 2 {
                worst = worst.max(res.at(m, k).abs());
            }
        }
        let scale = u2.max_abs() * dq.max_abs() + w.max_abs();
        assert!(worst <= 10.0 * (g.tau * g.tau + g.h[0] * g.h[0]) * scale * PI.powi(2), "{worst}");
    }

    #[test]
    fn trace_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::unit_square(7, 0.5, 12).unwrap();
        let u = SpaceTimeField::from_fn(g, |t, x| (t + x[0]).sin() * x[1]);
        let tr = extract_traces(&u);
        let files = tr.write_grd1(&dir.path().join("u")).unwrap();
        let back = TraceData::read_grd1(&g, &files[0], Some(&files[1])).unwrap();
        assert_eq!(back.dirichlet, tr.dirichlet);
        assert_eq!(back.neumann, tr.neumann);
        assert!(TraceData::read_grd1(&g, &files[1], None).is_err());
    }
}
