//! The constants and regime conditions of the model, and the counting bound
//! on cycles sharing an ordered support.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cyclegas::OrderedSupport;
use crate::environment::{Environment, PointId, Site};
use crate::error::{Error, Result};
use crate::potential::{varphi_quadratic_bound, Potential};

/// Cap on `Σ_{z ∈ {ȳ}} θ(z)` for [`count_exact`].
pub const COUNT_EXACT_CAP: usize = 10;

fn r0_lhs(r: f64) -> f64 {
    r / ((1.0 - r) * (1.0 - r)) - r
}

/// The root `r₀ ∈ (0, 1)` of `r/(1−r)² − r = 1/2`, by bisection until the
/// bracket is shorter than `tol` and the residual is below `tol`.
pub fn r0(tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Parameter(format!("tol = {tol} must be positive")));
    }
    let (mut lo, mut hi) = (0.0f64, 0.9f64);
    loop {
        let mid = 0.5 * (lo + hi);
        let f = r0_lhs(mid) - 0.5;
        if (hi - lo < tol && f.abs() < tol) || hi - lo <= f64::EPSILON * mid {
            return Ok(mid);
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// `r₀` at full working precision.
pub fn r0_default() -> f64 {
    r0(1e-13).expect("positive tolerance")
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 0.5) {
        return Err(Error::Domain(format!("rho = {rho} must lie in (0, 1/2)")));
    }
    Ok(())
}

/// `C_ρ = ρ e^{−ρ+1/2} / (1 − 2ρ)`.
pub fn c_rho(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(rho * (0.5 - rho).exp() / (1.0 - 2.0 * rho))
}

/// `α* = π / [(r₀/C_ρ + 1)^{1/d} − 1]²`.
pub fn alpha_star(rho: f64, dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    let c = c_rho(rho)?;
    let base = (r0_default() / c + 1.0).powf(1.0 / dim as f64) - 1.0;
    Ok(PI / (base * base))
}

/// `E[M_θ(ȳ)] = C_ρ^m` for `m` distinct sites.
pub fn expected_bound(rho: f64, m: u32) -> Result<f64> {
    Ok(c_rho(rho)?.powi(m as i32))
}

/// One site's factor `(e^{1/2}/2) θ! 2^θ 1{θ ≠ 0}` of `M_θ`.
pub fn bound_factor(theta: u32) -> f64 {
    if theta == 0 {
        return 0.0;
    }
    let fact: f64 = (1..=theta).map(f64::from).product();
    0.5f64.exp() / 2.0 * fact * 2f64.powi(theta as i32)
}

/// `M_θ(ȳ) = Π_{z ∈ {ȳ}} (e^{1/2}/2) θ(z)! 2^{θ(z)} 1{θ(z) ≠ 0}`.
pub fn count_bound(ybar: &OrderedSupport, env: &Environment) -> f64 {
    ybar.distinct_sites()
        .into_iter()
        .map(|z| bound_factor(env.theta(z)))
        .product()
}

/// The multinomial sum `Σ_a Π_j C(θ_j, a_j) a_j! C(a_j − 1, k_j − 1)` that
/// sits between `N_θ(ȳ)` and `M_θ(ȳ)`.
pub fn count_intermediate(ybar: &OrderedSupport, env: &Environment) -> f64 {
    ybar.distinct_sites()
        .into_iter()
        .map(|z| {
            let theta = env.theta(z) as u64;
            let k = ybar.multiplicity(z) as u64;
            if k == 0 || theta < k {
                return 0.0;
            }
            (k..=theta)
                .map(|a| binom(theta, a) * falling(a, a) * binom(a - 1, k - 1))
                .sum::<f64>()
        })
        .product()
}

fn binom(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn falling(n: u64, k: u64) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

/// `N_θ(ȳ)`: the number of cycles whose ordered support is `ȳ`, by
/// exhaustive search over cycles on the points of `{ȳ}`.
pub fn count_exact(ybar: &OrderedSupport, env: &Environment) -> Result<u64> {
    let sites: Vec<&Site> = ybar.distinct_sites().into_iter().collect();
    let total: usize = sites.iter().map(|z| env.theta(z) as usize).sum();
    if total > COUNT_EXACT_CAP {
        return Err(Error::Size {
            what: "ordered support",
            count: total,
            cap: COUNT_EXACT_CAP,
        });
    }
    let points: Vec<PointId> = sites
        .iter()
        .flat_map(|z| (1..=env.theta(z)).map(move |t| PointId::new((*z).clone(), t)))
        .collect();
    let site_id: BTreeMap<&Site, usize> = sites.iter().enumerate().map(|(i, z)| (*z, i)).collect();
    let point_site: Vec<usize> = points.iter().map(|p| site_id[&p.site]).collect();
    let target: Vec<usize> = ybar.sites().iter().map(|z| site_id[z]).collect();
    let mut counter = SupportCounter {
        point_site,
        target,
        count: 0,
    };
    for start in 0..points.len() {
        let s = counter.point_site[start];
        let offsets: Vec<usize> = (0..counter.target.len())
            .filter(|&r| counter.target[r] == s)
            .collect();
        if offsets.is_empty() {
            continue;
        }
        let mut erased = vec![s];
        counter.extend(start, 1u64 << start, &mut erased, &offsets);
    }
    Ok(counter.count)
}

struct SupportCounter {
    point_site: Vec<usize>,
    target: Vec<usize>,
    count: u64,
}

impl SupportCounter {
    /// Extends a path that starts at its smallest point `start`; `erased` is
    /// the path projection with consecutive repeats removed and `offsets` the
    /// rotations of the target it still matches.
    fn extend(&mut self, start: usize, used: u64, erased: &mut Vec<usize>, offsets: &[usize]) {
        let m = self.target.len();
        let n = self.point_site.len();
        for next in start + 1..n {
            if used & (1u64 << next) != 0 {
                continue;
            }
            let s = self.point_site[next];
            let grows = *erased.last().unwrap() != s;
            if grows {
                erased.push(s);
            }
            let pos = erased.len() - 1;
            let keep: Vec<usize> = if grows {
                offsets
                    .iter()
                    .copied()
                    .filter(|&r| pos < m + 1 && self.target[(r + pos) % m] == s)
                    .collect()
            } else {
                offsets.to_vec()
            };
            if !keep.is_empty() {
                // close the cycle after `next`
                let mut len = erased.len();
                if len >= 2 && erased[len - 1] == erased[0] {
                    len -= 1;
                }
                if len == m
                    && keep
                        .iter()
                        .any(|&r| (0..m).all(|i| self.target[(r + i) % m] == erased[i]))
                {
                    self.count += 1;
                }
                if erased.len() <= m + 1 {
                    self.extend(start, used | (1u64 << next), erased, &keep);
                }
            }
            if grows {
                erased.pop();
            }
        }
    }
}

/// Sum of `exp(−α Σ_i ‖y_{i+1} − y_i‖²)` over sequences `(0, y_2, …, y_m)`
/// in the cube of radius `radius` with all cyclic increments nonzero,
/// together with the bound `φ(α)^m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightSumCheck {
    pub partial_sum: f64,
    pub bound: f64,
}

pub fn weight_sum_check(alpha: f64, m: u32, dim: usize, radius: i64) -> Result<WeightSumCheck> {
    if m < 2 {
        return Err(Error::Parameter(format!("support length {m} must be at least 2")));
    }
    if dim == 0 || radius < 0 {
        return Err(Error::Parameter("need dim >= 1 and radius >= 0".into()));
    }
    let phi = Potential::Quadratic { dim }.varphi(alpha, 1e-14)?.value;
    let side = (2 * radius + 1) as usize;
    let cells = side.pow(dim as u32);
    let kernel: Vec<f64> = (0..side).map(|d| (-alpha * (d * d) as f64).exp()).collect();
    let origin = (0..dim).fold(0usize, |acc, _| acc * side + radius as usize);
    // f holds path weights ending at each cell after k nonzero steps
    let mut f = vec![0.0; cells];
    f[origin] = 1.0;
    for _ in 1..m {
        let mut g = f.clone();
        for axis in 0..dim {
            g = convolve_axis(&g, side, dim, axis, &kernel);
        }
        for (gi, fi) in g.iter_mut().zip(&f) {
            *gi -= fi;
            if *gi < 0.0 {
                *gi = 0.0;
            }
        }
        f = g;
    }
    // closing jump back to the origin must be nonzero
    let mut partial = 0.0;
    for (idx, &v) in f.iter().enumerate() {
        if idx == origin || v == 0.0 {
            continue;
        }
        let mut r2 = 0usize;
        let mut rest = idx;
        for _ in 0..dim {
            let c = (rest % side) as i64 - radius;
            r2 += (c * c) as usize;
            rest /= side;
        }
        partial += v * (-alpha * r2 as f64).exp();
    }
    Ok(WeightSumCheck {
        partial_sum: partial,
        bound: phi.powi(m as i32),
    })
}

fn convolve_axis(f: &[f64], side: usize, dim: usize, axis: usize, kernel: &[f64]) -> Vec<f64> {
    let stride = side.pow((dim - 1 - axis) as u32);
    let mut out = vec![0.0; f.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let c = (idx / stride) % side;
        let base = idx - c * stride;
        let mut acc = 0.0;
        for s in 0..side {
            let v = f[base + s * stride];
            if v != 0.0 {
                acc += v * kernel[c.abs_diff(s)];
            }
        }
        *o = acc;
    }
    out
}

/// Whether `ρ` is good for `V`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoodDensity {
    Good,
    NotGood,
    Unknown,
}

/// `Good` when `L_V < 1`, `Unknown` otherwise, unless overridden.
///
/// `ρ` does not enter: the percolation threshold at `L_V ≥ 1` has no
/// constructive criterion, so only the override can settle that case.
pub fn good_density_check(v: &Potential, _rho: f64, override_: Option<GoodDensity>) -> (GoodDensity, bool) {
    if let Some(g) = override_ {
        return (g, true);
    }
    if v.jump_range(v.zero_set_radius()) < 1.0 {
        (GoodDensity::Good, false)
    } else {
        (GoodDensity::Unknown, false)
    }
}

/// Options for [`regime_report`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeOptions {
    /// Truncation tolerance for `φ_V`.
    pub tol: f64,
    /// Replace the quadratic `φ` by `(1 + √(π/α))^d − 1`.
    pub closed_bound: bool,
    pub good_density_override: Option<GoodDensity>,
}

impl Default for RegimeOptions {
    fn default() -> Self {
        RegimeOptions {
            tol: 1e-12,
            closed_bound: false,
            good_density_override: None,
        }
    }
}

/// Constants and condition checks for `(ρ, α, V, d)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    pub rho: f64,
    pub alpha: f64,
    pub dim: usize,
    pub potential: String,
    pub potential_digest: String,
    pub r0: f64,
    #[serde(rename = "C_rho")]
    pub c_rho: f64,
    pub alpha_star: Option<f64>,
    pub varphi_mode: &'static str,
    pub varphi_half: f64,
    pub varphi_full: f64,
    pub jump_range: f64,
    pub existence_ok: bool,
    pub uniqueness_ok: bool,
    pub good_density: GoodDensity,
    pub good_density_overridden: bool,
}

pub fn regime_report(rho: f64, alpha: f64, v: &Potential, opts: &RegimeOptions) -> Result<RegimeReport> {
    let c = c_rho(rho)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("alpha = {alpha} must be positive")));
    }
    let dim = v.dim();
    let r0 = r0_default();
    let closed = opts.closed_bound && v.is_quadratic();
    if opts.closed_bound && !closed {
        return Err(Error::Parameter(
            "the closed bound applies to the quadratic potential only".into(),
        ));
    }
    let phi = |a: f64| -> Result<f64> {
        if closed {
            Ok(varphi_quadratic_bound(a, dim))
        } else {
            Ok(v.varphi(a, opts.tol)?.value)
        }
    };
    let varphi_half = phi(alpha / 2.0)?;
    let varphi_full = phi(alpha)?;
    let (good_density, good_density_overridden) = good_density_check(v, rho, opts.good_density_override);
    let digest = hex::encode(Sha256::digest(serde_json::to_vec(v)?));
    Ok(RegimeReport {
        rho,
        alpha,
        dim,
        potential: v.name(),
        potential_digest: digest,
        r0,
        c_rho: c,
        alpha_star: if v.is_quadratic() {
            Some(alpha_star(rho, dim)?)
        } else {
            None
        },
        varphi_mode: if closed { "closed_bound" } else { "series" },
        varphi_half,
        varphi_full,
        jump_range: v.jump_range(v.zero_set_radius()),
        existence_ok: c * varphi_half < 1.0,
        uniqueness_ok: c * varphi_full < r0,
        good_density,
        good_density_overridden,
    })
}
