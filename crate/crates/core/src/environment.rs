//! The disordered point environment.
//!
//! Every lattice site `x` carries an i.i.d. Poisson multiplicity `θ(x)`; the
//! points of the environment are the tagged pairs `(x, i)` with
//! `1 <= i <= θ(x)`. A continuum Poisson configuration is mapped onto this
//! picture by collecting the points of each unit cube `x + [0,1)^d` at `x`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// A lattice site in `Z^d`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(SmallVec<[i64; 4]>);

impl Site {
    pub fn new(coords: impl IntoIterator<Item = i64>) -> Self {
        Site(coords.into_iter().collect())
    }

    pub fn origin(dim: usize) -> Self {
        Site(smallvec::smallvec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    /// Componentwise difference `self - other`.
    pub fn delta(&self, other: &Site) -> Site {
        debug_assert_eq!(self.dim(), other.dim());
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn norm2(&self) -> i64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn dist2(&self, other: &Site) -> i64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0.as_slice())
    }
}

impl<const N: usize> From<[i64; N]> for Site {
    fn from(c: [i64; N]) -> Self {
        Site::new(c)
    }
}

/// An axis-aligned box of lattice sites, inclusive on both ends of every axis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntBox {
    axes: Vec<(i64, i64)>,
}

impl IntBox {
    pub fn new(axes: Vec<(i64, i64)>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Parameter("box must have dimension >= 1".into()));
        }
        if axes.iter().any(|(lo, hi)| lo > hi) {
            return Err(Error::Parameter(format!("empty box {axes:?}")));
        }
        Ok(IntBox { axes })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: i64, hi: i64) -> Result<Self> {
        IntBox::new(vec![(lo, hi); dim])
    }

    /// `Λ_n = [-n, n]^dim`.
    pub fn centered(dim: usize, n: i64) -> Result<Self> {
        IntBox::cube(dim, -n, n)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[(i64, i64)] {
        &self.axes
    }

    pub fn volume(&self) -> u64 {
        self.axes.iter().map(|(lo, hi)| (hi - lo + 1) as u64).product()
    }

    pub fn contains(&self, site: &Site) -> bool {
        site.dim() == self.dim()
            && self
                .axes
                .iter()
                .zip(site.coords())
                .all(|(&(lo, hi), &c)| lo <= c && c <= hi)
    }

    pub fn is_subset_of(&self, other: &IntBox) -> bool {
        self.dim() == other.dim()
            && self
                .axes
                .iter()
                .zip(&other.axes)
                .all(|(a, b)| b.0 <= a.0 && a.1 <= b.1)
    }

    /// Smallest box containing `self` and `site`.
    pub fn hull_with(&self, site: &Site) -> IntBox {
        IntBox {
            axes: self
                .axes
                .iter()
                .zip(site.coords())
                .map(|(&(lo, hi), &c)| (lo.min(c), hi.max(c)))
                .collect(),
        }
    }

    /// All sites in lexicographic order.
    pub fn sites(&self) -> SiteIter<'_> {
        SiteIter {
            bbox: self,
            next: Some(Site::new(self.axes.iter().map(|a| a.0))),
        }
    }
}

pub struct SiteIter<'a> {
    bbox: &'a IntBox,
    next: Option<Site>,
}

impl Iterator for SiteIter<'_> {
    type Item = Site;

    fn next(&mut self) -> Option<Site> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        // odometer: last axis varies fastest
        for axis in (0..self.bbox.dim()).rev() {
            let (lo, hi) = self.bbox.axes[axis];
            if succ.0[axis] < hi {
                succ.0[axis] += 1;
                self.next = Some(succ);
                return Some(current);
            }
            succ.0[axis] = lo;
        }
        Some(current)
    }
}

/// A point `(x, i)` of the environment.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(Site, u32)", into = "(Site, u32)")]
pub struct PointId {
    pub site: Site,
    pub tag: u32,
}

impl PointId {
    pub fn new(site: impl Into<Site>, tag: u32) -> Self {
        PointId {
            site: site.into(),
            tag,
        }
    }
}

impl From<(Site, u32)> for PointId {
    fn from((site, tag): (Site, u32)) -> Self {
        PointId { site, tag }
    }
}

impl From<PointId> for (Site, u32) {
    fn from(p: PointId) -> Self {
        (p.site, p.tag)
    }
}

/// A realization of the multiplicities `θ` on a finite box.
///
/// Zero multiplicities are not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    dim: usize,
    bbox: IntBox,
    theta: BTreeMap<Site, u32>,
    rho: f64,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct EnvironmentJson {
    dim: usize,
    #[serde(rename = "box")]
    bbox: IntBox,
    rho: f64,
    seed: u64,
    sites: Vec<Vec<i64>>,
}

impl Environment {
    /// Builds an environment from explicit multiplicities. `rho` and `seed`
    /// are metadata only.
    pub fn from_theta(
        bbox: IntBox,
        theta: impl IntoIterator<Item = (Site, u32)>,
        rho: f64,
        seed: u64,
    ) -> Result<Self> {
        let dim = bbox.dim();
        let mut map = BTreeMap::new();
        for (site, m) in theta {
            if !bbox.contains(&site) {
                return Err(Error::Domain(format!("site {site:?} outside box {bbox:?}")));
            }
            if m > 0 {
                map.insert(site, m);
            }
        }
        Ok(Environment {
            dim,
            bbox,
            theta: map,
            rho,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bbox(&self) -> &IntBox {
        &self.bbox
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn theta(&self, site: &Site) -> u32 {
        self.theta.get(site).copied().unwrap_or(0)
    }

    /// Occupied sites with their multiplicities, lexicographically.
    pub fn occupied(&self) -> impl Iterator<Item = (&Site, u32)> {
        self.theta.iter().map(|(s, &m)| (s, m))
    }

    pub fn n_points(&self) -> usize {
        self.theta.values().map(|&m| m as usize).sum()
    }

    pub fn n_points_in(&self, region: &IntBox) -> usize {
        self.theta
            .iter()
            .filter(|(s, _)| region.contains(s))
            .map(|(_, &m)| m as usize)
            .sum()
    }

    pub fn contains_point(&self, p: &PointId) -> bool {
        p.tag >= 1 && p.tag <= self.theta(&p.site)
    }

    pub fn to_json(&self) -> Result<String> {
        let raw = EnvironmentJson {
            dim: self.dim,
            bbox: self.bbox.clone(),
            rho: self.rho,
            seed: self.seed,
            sites: self
                .theta
                .iter()
                .map(|(s, &m)| s.coords().iter().copied().chain([m as i64]).collect())
                .collect(),
        };
        Ok(serde_json::to_string(&raw)?)
    }

    /// Parses the JSON form produced by [`Environment::to_json`]. This is also
    /// the way to supply custom (non-Poisson) multiplicities.
    pub fn from_json(s: &str) -> Result<Self> {
        let raw: EnvironmentJson = serde_json::from_str(s)?;
        if raw.bbox.dim() != raw.dim {
            return Err(Error::Parameter("box dimension does not match dim".into()));
        }
        let mut entries = Vec::with_capacity(raw.sites.len());
        for row in raw.sites {
            if row.len() != raw.dim + 1 {
                return Err(Error::Parameter(format!(
                    "site row {row:?} must have {} entries",
                    raw.dim + 1
                )));
            }
            let m = row[raw.dim];
            if m < 0 {
                return Err(Error::Parameter(format!("negative multiplicity in {row:?}")));
            }
            entries.push((Site::new(row[..raw.dim].iter().copied()), m as u32));
        }
        Environment::from_theta(raw.bbox, entries, raw.rho, raw.seed)
    }
}

/// Draws `θ(x) ~ Poisson(rho)` independently for every site of `bbox`,
/// consuming randomness in lexicographic site order.
pub fn sample_environment(dim: usize, bbox: &IntBox, rho: f64, seed: u64) -> Result<Environment> {
    if bbox.dim() != dim {
        return Err(Error::Parameter(format!(
            "box has dimension {} but dim = {dim}",
            bbox.dim()
        )));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!("rho = {rho} must lie in (0, 1)")));
    }
    let pois = Poisson::new(rho).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = BTreeMap::new();
    for site in bbox.sites() {
        let m = pois.sample(&mut rng) as u32;
        if m > 0 {
            theta.insert(site, m);
        }
    }
    Ok(Environment {
        dim,
        bbox: bbox.clone(),
        theta,
        rho,
        seed,
    })
}

/// The points of `env` located in `region`, ordered by `(site, tag)`.
pub fn points_of(env: &Environment, region: &IntBox) -> Result<Vec<PointId>> {
    if !region.is_subset_of(&env.bbox) {
        return Err(Error::Domain(format!(
            "region {region:?} is not inside the environment box {:?}",
            env.bbox
        )));
    }
    Ok(env
        .theta
        .iter()
        .filter(|(s, _)| region.contains(s))
        .flat_map(|(s, &m)| (1..=m).map(move |tag| PointId::new(s.clone(), tag)))
        .collect())
}

/// A product of half-open real intervals `[lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RealBox {
    axes: Vec<(f64, f64)>,
}

impl RealBox {
    pub fn new(axes: Vec<(f64, f64)>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Parameter("region must have dimension >= 1".into()));
        }
        if axes.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite())) {
            return Err(Error::Parameter("region bounds must be finite".into()));
        }
        Ok(RealBox { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[(f64, f64)] {
        &self.axes
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(|(lo, hi)| (hi - lo).max(0.0)).product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && self.axes.iter().zip(p).all(|(&(lo, hi), &c)| lo <= c && c < hi)
    }
}

/// A finite realization of a homogeneous Poisson process in a real box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuumPointSet {
    pub dim: usize,
    pub region: RealBox,
    pub points: Vec<Vec<f64>>,
    pub rho: f64,
    pub seed: u64,
}

pub fn sample_continuum(dim: usize, region: &RealBox, rho: f64, seed: u64) -> Result<ContinuumPointSet> {
    if region.dim() != dim {
        return Err(Error::Parameter("region dimension does not match dim".into()));
    }
    let vol = region.volume();
    if vol <= 0.0 {
        return Err(Error::Parameter(format!("region volume {vol} must be positive")));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Parameter(format!("rho = {rho} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Poisson::new(rho * vol)
        .map_err(|e| Error::Parameter(e.to_string()))?
        .sample(&mut rng) as usize;
    let points = (0..n)
        .map(|_| {
            region
                .axes
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..hi))
                .collect()
        })
        .collect();
    Ok(ContinuumPointSet {
        dim,
        region: region.clone(),
        points,
        rho,
        seed,
    })
}

/// The bijection between continuum points (by index into
/// [`ContinuumPointSet::points`]) and environment points.
#[derive(Clone, Debug, PartialEq)]
pub struct TagMap {
    by_index: Vec<PointId>,
    by_point: BTreeMap<PointId, usize>,
}

impl TagMap {
    pub fn point_id(&self, index: usize) -> Option<&PointId> {
        self.by_index.get(index)
    }

    pub fn index_of(&self, p: &PointId) -> Option<usize> {
        self.by_point.get(p).copied()
    }

    pub fn len(&self) -> usize {
        self.by_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_index.is_empty()
    }
}

pub fn floor_site(p: &[f64]) -> Site {
    Site::new(p.iter().map(|c| c.floor() as i64))
}

/// Collects the points of each cube `x + [0,1)^d` at `x`. Inside a cube,
/// tags follow increasing Euclidean distance to the corner `x`, ties broken
/// lexicographically by coordinates.
pub fn discretize(pts: &ContinuumPointSet) -> (Environment, TagMap) {
    let axes = pts
        .region
        .axes
        .iter()
        .map(|&(lo, hi)| {
            let lo_i = lo.floor() as i64;
            let hi_i = (hi.ceil() as i64 - 1).max(lo_i);
            (lo_i, hi_i)
        })
        .collect::<Vec<_>>();
    let mut cubes: BTreeMap<Site, Vec<usize>> = BTreeMap::new();
    for (i, p) in pts.points.iter().enumerate() {
        cubes.entry(floor_site(p)).or_default().push(i);
    }
    let mut by_index = vec![None; pts.points.len()];
    let mut by_point = BTreeMap::new();
    let mut theta = Vec::with_capacity(cubes.len());
    let mut axes = axes;
    for (site, mut members) in cubes {
        let corner = site.to_f64();
        let key = |i: &usize| -> f64 {
            pts.points[*i]
                .iter()
                .zip(&corner)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        };
        members.sort_by(|a, b| {
            key(a)
                .total_cmp(&key(b))
                .then_with(|| lex_cmp(&pts.points[*a], &pts.points[*b]))
        });
        for (k, &i) in members.iter().enumerate() {
            let id = PointId::new(site.clone(), k as u32 + 1);
            by_point.insert(id.clone(), i);
            by_index[i] = Some(id);
        }
        // points are inside the region, but keep the box honest for
        // hand-built sets that are not
        for (axis, &c) in axes.iter_mut().zip(site.coords()) {
            axis.0 = axis.0.min(c);
            axis.1 = axis.1.max(c);
        }
        theta.push((site, members.len() as u32));
    }
    let bbox = IntBox { axes };
    let env = Environment {
        dim: pts.dim,
        bbox,
        theta: theta.into_iter().collect(),
        rho: pts.rho,
        seed: pts.seed,
    };
    let tags = TagMap {
        by_index: by_index
            .into_iter()
            .map(|p| p.expect("every point tagged"))
            .collect(),
        by_point,
    };
    (env, tags)
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn fig1_env() -> Environment {
        let bbox = IntBox::cube(1, 0, 10).unwrap();
        let theta =
            [(1, 1), (3, 2), (4, 1), (6, 3), (7, 1), (8, 1), (9, 2)].map(|(x, m)| (Site::from([x]), m));
        Environment::from_theta(bbox, theta, 0.25, 0).unwrap()
    }

    #[test]
    fn site_iteration_is_lexicographic() {
        let b = IntBox::new(vec![(0, 1), (5, 6)]).unwrap();
        let sites: Vec<_> = b.sites().map(|s| s.coords().to_vec()).collect();
        assert_eq!(sites, vec![vec![0, 5], vec![0, 6], vec![1, 5], vec![1, 6]]);
        assert_eq!(b.volume(), 4);
    }

    #[test]
    fn empty_box_rejected() {
        assert!(IntBox::new(vec![(3, 2)]).is_err());
        assert!(IntBox::new(vec![]).is_err());
    }

    #[test]
    fn invalid_rho_rejected() {
        let b = IntBox::cube(1, 0, 9).unwrap();
        assert!(matches!(
            sample_environment(1, &b, 0.0, 1),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            sample_environment(1, &b, 1.0, 1),
            Err(Error::Parameter(_))
        ));
        assert!(sample_environment(2, &b, 0.25, 1).is_err());
    }

    #[test]
    fn tiny_density_gives_empty_environment() {
        let b = IntBox::cube(2, 0, 9).unwrap();
        let env = sample_environment(2, &b, 1e-12, 7).unwrap();
        assert_eq!(env.n_points(), 0);
        assert!(points_of(&env, &b).unwrap().is_empty());
    }

    #[test]
    fn mean_point_count_matches_poisson_mean() {
        let b = IntBox::cube(1, 0, 9).unwrap();
        let reps = 10_000;
        let total: usize = (0..reps)
            .map(|s| sample_environment(1, &b, 0.25, s).unwrap().n_points())
            .sum();
        let mean = total as f64 / reps as f64;
        // Var(N) = 2.5
        let sigma = (2.5f64 / reps as f64).sqrt();
        assert!((mean - 2.5).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn single_site_empty_probability() {
        let b = IntBox::cube(1, 0, 0).unwrap();
        let reps = 20_000;
        let empty = (0..reps)
            .filter(|&s| sample_environment(1, &b, 0.25, s).unwrap().n_points() == 0)
            .count();
        let p = (-0.25f64).exp();
        let phat = empty as f64 / reps as f64;
        let sigma = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((phat - p).abs() < 3.0 * sigma, "{phat} vs {p}");
    }

    #[test]
    fn multiplicity_histogram_passes_chi_square() {
        let b = IntBox::cube(2, 0, 199).unwrap();
        let rho = 0.25;
        let env = sample_environment(2, &b, rho, 2024).unwrap();
        let n_sites = b.volume() as f64;
        let mut counts = [0f64; 4];
        let mut occupied = 0.0;
        for (_, m) in env.occupied() {
            counts[(m as usize).min(3)] += 1.0;
            occupied += 1.0;
        }
        counts[0] = n_sites - occupied;
        let pmf = |k: u32| (-rho).exp() * rho.powi(k as i32) / (1..=k).product::<u32>() as f64;
        let mut probs = [pmf(0), pmf(1), pmf(2), 0.0];
        probs[3] = 1.0 - probs[0] - probs[1] - probs[2];
        let stat: f64 = counts
            .iter()
            .zip(probs)
            .map(|(o, p)| (o - n_sites * p).powi(2) / (n_sites * p))
            .sum();
        let crit = ChiSquared::new(3.0).unwrap().inverse_cdf(0.99);
        assert!(stat < crit, "chi2 {stat} >= {crit}");
    }

    #[test]
    fn environment_sampling_is_reproducible() {
        let b = IntBox::cube(2, -3, 3).unwrap();
        let a = sample_environment(2, &b, 0.4, 99).unwrap();
        let c = sample_environment(2, &b, 0.4, 99).unwrap();
        assert_eq!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn points_of_lists_tags_in_order() {
        let b = IntBox::cube(1, 0, 0).unwrap();
        let env = Environment::from_theta(b.clone(), [(Site::from([0]), 3)], 0.25, 0).unwrap();
        let pts = points_of(&env, &b).unwrap();
        assert_eq!(
            pts,
            vec![PointId::new([0], 1), PointId::new([0], 2), PointId::new([0], 3)]
        );
    }

    #[test]
    fn figure_one_environment_has_eleven_points() {
        let env = fig1_env();
        let region = IntBox::cube(1, 1, 9).unwrap();
        assert_eq!(points_of(&env, &region).unwrap().len(), 11);
    }

    #[test]
    fn points_of_outside_box_is_domain_error() {
        let env = fig1_env();
        let region = IntBox::cube(1, 5, 20).unwrap();
        assert!(matches!(points_of(&env, &region), Err(Error::Domain(_))));
    }

    #[test]
    fn environment_json_round_trip() {
        let env = fig1_env();
        let s = env.to_json().unwrap();
        assert!(s.contains("\"box\":[[0,10]]"));
        assert!(s.contains("[6,3]"));
        assert_eq!(Environment::from_json(&s).unwrap(), env);
    }

    #[test]
    fn continuum_rejects_zero_volume() {
        let r = RealBox::new(vec![(0.0, 0.0)]).unwrap();
        assert!(matches!(
            sample_continuum(1, &r, 0.1, 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn continuum_tiny_volume_is_empty() {
        let r = RealBox::new(vec![(0.0, 1e-12)]).unwrap();
        assert!(sample_continuum(1, &r, 0.1, 1).unwrap().points.is_empty());
    }

    #[test]
    fn continuum_mean_count() {
        let r = RealBox::new(vec![(0.0, 10.0), (0.0, 10.0)]).unwrap();
        let reps = 5_000;
        let total: usize = (0..reps)
            .map(|s| sample_continuum(2, &r, 0.1, s).unwrap().points.len())
            .sum();
        let mean = total as f64 / reps as f64;
        let sigma = (10.0f64 / reps as f64).sqrt();
        assert!((mean - 10.0).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn continuum_is_reproducible_and_inside_region() {
        let r = RealBox::new(vec![(-2.0, 3.0), (0.5, 4.0)]).unwrap();
        let a = sample_continuum(2, &r, 0.7, 5).unwrap();
        let b = sample_continuum(2, &r, 0.7, 5).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(a.points.iter().all(|p| r.contains(p)));
        let back: ContinuumPointSet = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn discretize_floors_points() {
        let pts = ContinuumPointSet {
            dim: 1,
            region: RealBox::new(vec![(0.0, 2.0)]).unwrap(),
            points: vec![vec![0.7], vec![1.5], vec![0.2]],
            rho: 0.1,
            seed: 0,
        };
        let (env, tags) = discretize(&pts);
        assert_eq!(env.theta(&Site::from([0])), 2);
        assert_eq!(env.theta(&Site::from([1])), 1);
        // 0.2 is closer to the corner 0 than 0.7
        assert_eq!(tags.point_id(2), Some(&PointId::new([0], 1)));
        assert_eq!(tags.point_id(0), Some(&PointId::new([0], 2)));
        assert_eq!(tags.point_id(1), Some(&PointId::new([1], 1)));
    }

    #[test]
    fn discretize_empty() {
        let pts = ContinuumPointSet {
            dim: 2,
            region: RealBox::new(vec![(0.0, 3.0), (0.0, 3.0)]).unwrap(),
            points: vec![],
            rho: 0.1,
            seed: 0,
        };
        let (env, tags) = discretize(&pts);
        assert_eq!(env.n_points(), 0);
        assert!(tags.is_empty());
    }

    #[test]
    fn discretize_ties_broken_by_coordinates() {
        // equidistant from the corner (0,0)
        let pts = ContinuumPointSet {
            dim: 2,
            region: RealBox::new(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap(),
            points: vec![vec![0.5, 0.0], vec![0.0, 0.5]],
            rho: 0.1,
            seed: 0,
        };
        let (_, tags) = discretize(&pts);
        assert_eq!(tags.point_id(1).unwrap().tag, 1);
        assert_eq!(tags.point_id(0).unwrap().tag, 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn discretize_is_a_bijection(seed in 0u64..10_000, dim in 1usize..4) {
                let region = RealBox::new(vec![(-3.0, 4.0); dim]).unwrap();
                let pts = sample_continuum(dim, &region, 0.6, seed).unwrap();
                let (env, tags) = discretize(&pts);
                prop_assert_eq!(env.n_points(), pts.points.len());
                for i in 0..pts.points.len() {
                    let id = tags.point_id(i).unwrap();
                    prop_assert!(env.contains_point(id));
                    prop_assert_eq!(&id.site, &floor_site(&pts.points[i]));
                    prop_assert_eq!(tags.index_of(id), Some(i));
                }
            }
        }
    }
}
