//! Smooth test functions: seeded tensor trigonometric polynomials and
//! compactly supported bumps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{GridSpec, ScalarField, SpaceTimeField};

/// One separable mode `c · Π_a cos(k_a π y_a + θ_a)` over `y = (t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigMode {
    pub coeff: f64,
    pub freq: Vec<f64>,
    pub phase: Vec<f64>,
}

/// Sum of separable cosine modes in `(t, x)`; derivatives are exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub dim: usize,
    pub modes: Vec<TrigMode>,
}

fn cos_deriv(k: f64, y: f64, theta: f64, order: usize) -> f64 {
    let arg = k * y + theta;
    let base = match order % 4 {
        0 => arg.cos(),
        1 => -arg.sin(),
        2 => -arg.cos(),
        _ => arg.sin(),
    };
    base * k.powi(order as i32)
}

impl TrigPoly {
    /// Random polynomial with integer wavenumbers `0..=max_k` (times π),
    /// coefficients in `[-1, 1]` and random phases.
    pub fn random(dim: usize, n_modes: usize, max_k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = (0..n_modes)
            .map(|_| TrigMode {
                coeff: rng.gen_range(-1.0..=1.0),
                freq: (0..=dim)
                    .map(|_| rng.gen_range(0..=max_k) as f64 * std::f64::consts::PI)
                    .collect(),
                phase: (0..=dim).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect(),
            })
            .collect();
        TrigPoly { dim, modes }
    }

    /// Mixed partial derivative; `orders[0]` is the time order.
    pub fn deriv(&self, orders: &[usize], t: f64, x: &[f64]) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let mut p = m.coeff;
                for a in 0..=self.dim {
                    let y = if a == 0 { t } else { x[a - 1] };
                    let o = orders.get(a).copied().unwrap_or(0);
                    p *= cos_deriv(m.freq[a], y, m.phase[a], o);
                }
                p
            })
            .sum()
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.deriv(&[], t, x)
    }

    pub fn sample(&self, grid: &GridSpec) -> SpaceTimeField {
        SpaceTimeField::from_fn(*grid, |t, x| self.eval(t, x))
    }
}

/// `exp(-1/(1-r²))` bump of the given radius, zero outside, `1/e` at the centre.
pub fn bump(x: &[f64], center: &[f64], radius: f64) -> f64 {
    let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / (radius * radius);
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// Bump centred in the spatial box, supported on a ball of `frac` times the
/// half-width of the shortest side.
pub fn centered_bump(grid: &GridSpec, frac: f64) -> ScalarField {
    let d = grid.dim;
    let center: Vec<f64> = (0..d).map(|a| grid.origin[a] + 0.5 * grid.extent[a]).collect();
    let half = (0..d).map(|a| 0.5 * grid.extent[a]).fold(f64::INFINITY, f64::min);
    ScalarField::from_fn(*grid, |x| bump(x, &center, frac * half))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_polynomials_are_reproducible() {
        assert_eq!(TrigPoly::random(2, 3, 4, 7), TrigPoly::random(2, 3, 4, 7));
        assert_ne!(TrigPoly::random(2, 3, 4, 7), TrigPoly::random(2, 3, 4, 8));
    }

    #[test]
    fn derivatives_match_central_differences() {
        let p = TrigPoly::random(2, 3, 4, 11);
        let (t, x) = (0.3, [0.41, 0.77]);
        let e = 1e-5;
        let fd = (p.eval(t, &[x[0] + e, x[1]]) - p.eval(t, &[x[0] - e, x[1]])) / (2.0 * e);
        assert!((fd - p.deriv(&[0, 1, 0], t, &x)).abs() < 1e-6 * (1.0 + fd.abs()));
        let fd = (p.deriv(&[1, 0, 1], t + e, &x) - p.deriv(&[1, 0, 1], t - e, &x)) / (2.0 * e);
        assert!((fd - p.deriv(&[2, 0, 1], t, &x)).abs() < 1e-4 * (1.0 + fd.abs()));
    }

    #[test]
    fn bump_support() {
        assert_eq!(bump(&[1.0], &[0.0], 1.0), 0.0);
        assert!((bump(&[0.0, 0.0], &[0.0, 0.0], 0.5) - (-1.0f64).exp()).abs() < 1e-15);
    }
}
