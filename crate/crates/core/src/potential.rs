//! Jump potentials `V` and the series `φ_V(α) = Σ_{x ≠ 0} e^{-α V(x)}`.
//!
//! The zero vector is excluded from `φ_V` throughout.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::environment::{IntBox, Site};
use crate::error::{Error, Result};

/// A radial potential given as a step function of `‖x‖²`: the value at `x` is
/// the value of the last row whose `r²` does not exceed `‖x‖²`. Past the last
/// row the potential follows the quadratic envelope `c ‖x‖²` when one is
/// supplied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialTable {
    pub dim: usize,
    pub steps: Vec<(f64, f64)>,
    pub envelope: Option<f64>,
}

impl RadialTable {
    pub fn new(dim: usize, steps: Vec<(f64, f64)>, envelope: Option<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("dim must be >= 1".into()));
        }
        if steps.is_empty() || steps[0].0 != 0.0 {
            return Err(Error::Parameter("radial table must start at r² = 0".into()));
        }
        if steps.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Parameter(
                "radial table r² must be strictly increasing".into(),
            ));
        }
        if steps
            .iter()
            .any(|&(_, v)| v.is_nan() || v < 0.0 || !v.is_finite())
        {
            return Err(Error::Parameter(
                "potential values must be finite and >= 0".into(),
            ));
        }
        if let Some(c) = envelope {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Parameter(format!("envelope coefficient {c} must be > 0")));
            }
        }
        Ok(RadialTable { dim, steps, envelope })
    }

    /// Two whitespace-separated columns `r² V`; `#` starts a comment.
    pub fn parse(dim: usize, text: &str, envelope: Option<f64>) -> Result<Self> {
        let mut steps = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parameter(format!("line {}: {e}", lineno + 1)))
            };
            if cols.len() != 2 {
                return Err(Error::Parameter(format!(
                    "line {}: expected two columns",
                    lineno + 1
                )));
            }
            steps.push((parse(cols[0])?, parse(cols[1])?));
        }
        RadialTable::new(dim, steps, envelope)
    }

    pub fn load(dim: usize, path: &Path, envelope: Option<f64>) -> Result<Self> {
        RadialTable::parse(dim, &std::fs::read_to_string(path)?, envelope)
    }

    fn last_r2(&self) -> f64 {
        self.steps.last().map(|s| s.0).unwrap_or(0.0)
    }

    fn eval_r2(&self, r2: f64) -> f64 {
        if r2 > self.last_r2() {
            if let Some(c) = self.envelope {
                return c * r2;
            }
        }
        let idx = self.steps.partition_point(|&(s, _)| s <= r2);
        self.steps[idx.saturating_sub(1)].1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// `V(x) = ‖x‖²`.
    Quadratic {
        dim: usize,
    },
    /// `V(x) = max{‖x‖² − 2√d ‖x‖, 0}`, which satisfies
    /// `‖x − z‖² ≥ V(⌊x⌋ − ⌊z⌋)` for all real `x, z`.
    ContinuumComparison {
        dim: usize,
    },
    CustomRadial(RadialTable),
}

/// A truncated value of `φ_V(α)` together with the cube radius used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Varphi {
    pub value: f64,
    pub radius: i64,
    /// Certified upper bound on the omitted tail.
    pub tail_bound: f64,
}

impl Potential {
    pub fn dim(&self) -> usize {
        match self {
            Potential::Quadratic { dim } | Potential::ContinuumComparison { dim } => *dim,
            Potential::CustomRadial(t) => t.dim,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Potential::Quadratic { dim } => format!("quadratic(d={dim})"),
            Potential::ContinuumComparison { dim } => format!("comparison(d={dim})"),
            Potential::CustomRadial(t) => format!("table(d={}, rows={})", t.dim, t.steps.len()),
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, Potential::Quadratic { .. })
    }

    /// Value as a function of the squared norm.
    pub fn eval_r2(&self, r2: f64) -> f64 {
        match self {
            Potential::Quadratic { .. } => r2,
            Potential::ContinuumComparison { dim } => {
                let r = r2.sqrt();
                (r2 - 2.0 * (*dim as f64).sqrt() * r).max(0.0)
            }
            Potential::CustomRadial(t) => t.eval_r2(r2),
        }
    }

    pub fn eval(&self, delta: &[f64]) -> Result<f64> {
        if delta.len() != self.dim() {
            return Err(Error::Parameter(format!(
                "displacement has dimension {} but potential has dimension {}",
                delta.len(),
                self.dim()
            )));
        }
        Ok(self.eval_r2(delta.iter().map(|c| c * c).sum()))
    }

    /// Value at a lattice displacement.
    pub fn eval_site(&self, delta: &Site) -> f64 {
        debug_assert_eq!(delta.dim(), self.dim());
        self.eval_r2(delta.norm2() as f64)
    }

    /// Upper bound on `Σ_{‖x‖_∞ > radius} e^{-α V(x)}`, or `None` when the
    /// potential gives no certificate at this radius.
    fn tail_bound(&self, alpha: f64, radius: i64) -> Option<f64> {
        let d = self.dim();
        match self {
            Potential::Quadratic { .. } => Some(gaussian_lattice_tail(alpha, d, radius)),
            Potential::ContinuumComparison { .. } => {
                // 2√d r <= r²/2 + 2d, hence V(x) >= ‖x‖²/2 − 2d
                Some((2.0 * alpha * d as f64).exp() * gaussian_lattice_tail(alpha / 2.0, d, radius))
            }
            Potential::CustomRadial(t) => {
                let c = t.envelope?;
                ((radius * radius) as f64 >= t.last_r2()).then(|| gaussian_lattice_tail(alpha * c, d, radius))
            }
        }
    }

    /// `φ_V(α)` over `Z^d \ {0}`, truncated to the cube of the smallest radius
    /// whose certified tail is below `tol`.
    pub fn varphi(&self, alpha: f64, tol: f64) -> Result<Varphi> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha = {alpha} must be positive")));
        }
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::Parameter(format!("tol = {tol} must be positive")));
        }
        if let Potential::CustomRadial(t) = self {
            if t.envelope.is_none() {
                return Err(Error::Divergence(
                    "custom table without a quadratic envelope is eventually constant".into(),
                ));
            }
        }
        const MAX_RADIUS: i64 = 4096;
        let mut radius = 1;
        let tail = loop {
            match self.tail_bound(alpha, radius) {
                Some(t) if t < tol => break t,
                _ if radius >= MAX_RADIUS => {
                    return Err(Error::Divergence(format!(
                        "no certified truncation below {tol} up to radius {MAX_RADIUS}"
                    )))
                }
                _ => radius += 1,
            }
        };
        let cube = IntBox::centered(self.dim(), radius)?;
        let value = cube
            .sites()
            .filter(|x| x.norm2() != 0)
            .map(|x| (-alpha * self.eval_site(&x)).exp())
            .sum();
        Ok(Varphi {
            value,
            radius,
            tail_bound: tail,
        })
    }

    /// `L_V = max{‖x‖ : V(x) = 0, x ≠ 0}` over the cube of the given radius
    /// (0 if there is no such `x`).
    pub fn jump_range(&self, search_radius: i64) -> f64 {
        let Ok(cube) = IntBox::centered(self.dim(), search_radius.max(0)) else {
            return 0.0;
        };
        cube.sites()
            .filter(|x| x.norm2() != 0 && self.eval_site(x) == 0.0)
            .map(|x| (x.norm2() as f64).sqrt())
            .fold(0.0, f64::max)
    }

    /// A search radius that covers `{V = 0}` for the built-in potentials.
    pub fn zero_set_radius(&self) -> i64 {
        match self {
            Potential::Quadratic { .. } => 1,
            Potential::ContinuumComparison { dim } => (2.0 * (*dim as f64).sqrt()).ceil() as i64 + 1,
            Potential::CustomRadial(t) => t.last_r2().sqrt().ceil() as i64 + 1,
        }
    }
}

/// Bound on `Σ_{x ∈ Z^d, ‖x‖_∞ > R} e^{-α ‖x‖²}` by comparison with the
/// Gaussian integral: with `s = Σ_t e^{-αt²}` and `s_R` its truncation,
/// the tail is `s^d − s_R^d <= d (s − s_R) s^{d−1}` and
/// `s − s_R <= 2 ∫_R^∞ e^{-αu²} du = √(π/α) erfc(R√α)`.
fn gaussian_lattice_tail(alpha: f64, dim: usize, radius: i64) -> f64 {
    let s_max = 1.0 + (PI / alpha).sqrt();
    let one_dim = (PI / alpha).sqrt() * erfc(radius as f64 * alpha.sqrt());
    dim as f64 * one_dim * s_max.powi(dim as i32 - 1)
}

/// Closed-form bound `(1 + √(π/α))^d − 1` on the quadratic `φ(α)`.
pub fn varphi_quadratic_bound(alpha: f64, dim: usize) -> f64 {
    (1.0 + (PI / alpha).sqrt()).powi(dim as i32) - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_eval() {
        let v = Potential::Quadratic { dim: 2 };
        assert_eq!(v.eval(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(v.eval(&[1.0, 1.0]).unwrap(), 2.0);
        assert!(v.eval(&[1.0]).is_err());
    }

    #[test]
    fn comparison_eval() {
        let v = Potential::ContinuumComparison { dim: 1 };
        assert_eq!(v.eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(v.eval(&[1.0]).unwrap(), 0.0);
        assert_eq!(v.eval(&[2.0]).unwrap(), 0.0);
        assert!((v.eval(&[3.0]).unwrap() - 3.0).abs() < 1e-15);
        assert!((v.eval(&[-3.0]).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn varphi_quadratic_1d_alpha_1() {
        // oracle: the 1-d series summed directly far past machine precision
        let oracle: f64 = 2.0 * (1..50).map(|t| (-(t * t) as f64).exp()).sum::<f64>();
        assert!((oracle - 0.772637).abs() < 1e-6);
        let got = Potential::Quadratic { dim: 1 }.varphi(1.0, 1e-9).unwrap();
        assert!((got.value - oracle).abs() < 1e-9, "{} vs {oracle}", got.value);
    }

    #[test]
    fn varphi_quadratic_matches_product_formula() {
        // Σ_{x≠0} e^{-α‖x‖²} = s^d − 1 with s the 1-d theta sum
        for &alpha in &[0.5, 1.0, 2.0] {
            let s: f64 = 1.0 + 2.0 * (1..60).map(|t| (-alpha * (t * t) as f64).exp()).sum::<f64>();
            for d in 1..=3 {
                let got = Potential::Quadratic { dim: d }.varphi(alpha, 1e-10).unwrap();
                let want = s.powi(d as i32) - 1.0;
                assert!((got.value - want).abs() < 1e-9, "alpha {alpha} d {d}");
            }
        }
    }

    #[test]
    fn varphi_large_alpha_vanishes() {
        let got = Potential::Quadratic { dim: 1 }.varphi(100.0, 1e-9).unwrap();
        assert!(got.value < 2.1e-43);
        assert!(got.value > 0.0);
    }

    #[test]
    fn varphi_comparison_counts_zero_sites() {
        for &alpha in &[0.1, 1.0, 10.0, 100.0] {
            let got = Potential::ContinuumComparison { dim: 1 }
                .varphi(alpha, 1e-9)
                .unwrap();
            assert!(got.value >= 4.0);
        }
    }

    #[test]
    fn varphi_bound_formula() {
        assert!((varphi_quadratic_bound(1.0, 1) - PI.sqrt()).abs() < 1e-12);
        assert!((varphi_quadratic_bound(1.0, 1) - 1.772454).abs() < 1e-6);
        assert!(varphi_quadratic_bound(1e12, 3) < 1e-5);
    }

    #[test]
    fn varphi_below_closed_bound() {
        for &alpha in &[0.5, 1.0, 2.0, 5.0] {
            for d in 1..=3 {
                let v = Potential::Quadratic { dim: d }.varphi(alpha, 1e-9).unwrap();
                assert!(v.value < varphi_quadratic_bound(alpha, d));
            }
        }
    }

    #[test]
    fn varphi_monotone_in_alpha() {
        for pot in [
            Potential::Quadratic { dim: 2 },
            Potential::ContinuumComparison { dim: 2 },
        ] {
            let mut prev = f64::INFINITY;
            for k in 1..30 {
                let alpha = 0.2 * k as f64;
                let v = pot.varphi(alpha, 1e-10).unwrap().value;
                assert!(v < prev, "{pot:?} not decreasing at {alpha}");
                prev = v;
            }
        }
    }

    #[test]
    fn varphi_truncation_monotone_in_tol() {
        let pot = Potential::Quadratic { dim: 2 };
        let mut prev: Option<Varphi> = None;
        for k in 2..13 {
            let tol = 10f64.powi(-k);
            let v = pot.varphi(0.3, tol).unwrap();
            if let Some(p) = prev {
                assert!(v.radius >= p.radius);
                assert!((v.value - p.value).abs() < 10f64.powi(-k + 1));
            }
            prev = Some(v);
        }
    }

    #[test]
    fn jump_ranges() {
        assert_eq!(Potential::Quadratic { dim: 2 }.jump_range(5), 0.0);
        let c1 = Potential::ContinuumComparison { dim: 1 };
        assert_eq!(c1.jump_range(c1.zero_set_radius()), 2.0);
        let c2 = Potential::ContinuumComparison { dim: 2 };
        assert!((c2.jump_range(3) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn radial_table_steps_and_envelope() {
        let t = RadialTable::parse(1, "# r2 V\n0 0\n1 0.5\n4 3\n", Some(1.0)).unwrap();
        let v = Potential::CustomRadial(t);
        assert_eq!(v.eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(v.eval(&[1.0]).unwrap(), 0.5);
        // between listed values: no interpolation
        assert_eq!(v.eval_r2(3.0), 0.5);
        assert_eq!(v.eval(&[2.0]).unwrap(), 3.0);
        assert_eq!(v.eval(&[3.0]).unwrap(), 9.0);
        let phi = v.varphi(1.0, 1e-9).unwrap();
        let oracle = 2.0 * ((-0.5f64).exp() + (-3.0f64).exp())
            + 2.0 * (3..40).map(|t| (-((t * t) as f64)).exp()).sum::<f64>();
        assert!((phi.value - oracle).abs() < 1e-9);
    }

    #[test]
    fn radial_table_without_envelope_diverges() {
        let t = RadialTable::parse(2, "0 0\n1 1\n", None).unwrap();
        assert!(matches!(
            Potential::CustomRadial(t).varphi(1.0, 1e-6),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn radial_table_validation() {
        assert!(RadialTable::parse(1, "1 0\n", None).is_err());
        assert!(RadialTable::parse(1, "0 0\n0 1\n", None).is_err());
        assert!(RadialTable::parse(1, "0 -1\n", None).is_err());
        assert!(RadialTable::parse(1, "0 0 3\n", None).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(2000))]
            #[test]
            fn comparison_potential_lower_bounds_the_continuum_jump(
                d in 1usize..4,
                xs in proptest::collection::vec(-10.0f64..10.0, 3),
                zs in proptest::collection::vec(-10.0f64..10.0, 3),
            ) {
                let x = &xs[..d];
                let z = &zs[..d];
                let jump: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                let fl = |p: &[f64]| Site::new(p.iter().map(|c| c.floor() as i64));
                let v = Potential::ContinuumComparison { dim: d };
                prop_assert!(jump >= v.eval_site(&fl(x).delta(&fl(z))));
            }
        }
    }
}
