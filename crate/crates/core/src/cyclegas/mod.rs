//! Cycle algebra: cycles over environment points, ordered supports,
//! Hamiltonians and weights, compatibility, and the bijection between
//! finite-cycle permutations and gases of cycles.

mod space;

pub use space::CycleSpace;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::environment::{Environment, IntBox, PointId, Site};
use crate::error::{Error, Result};
use crate::potential::Potential;

/// A cycle `(s_1, …, s_n)`, `n >= 2`, stored in canonical rotation (starting
/// at its smallest point).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<PointId>", into = "Vec<PointId>")]
pub struct Cycle {
    points: Vec<PointId>,
}

impl Cycle {
    pub fn new(points: Vec<PointId>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Structure(format!(
                "a cycle needs at least two points, got {}",
                points.len()
            )));
        }
        let distinct: BTreeSet<&PointId> = points.iter().collect();
        if distinct.len() != points.len() {
            return Err(Error::Structure("cycle repeats a point".into()));
        }
        Ok(Cycle::canonical(points))
    }

    fn canonical(mut points: Vec<PointId>) -> Self {
        let start = points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        points.rotate_left(start);
        Cycle { points }
    }

    /// Points in cyclic order; `γ(points[i]) = points[i + 1]`.
    pub fn points(&self) -> &[PointId] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, p: &PointId) -> bool {
        self.points.contains(p)
    }

    /// Consecutive pairs `(s, γ(s))`, including the closing one.
    pub fn jumps(&self) -> impl Iterator<Item = (&PointId, &PointId)> {
        let n = self.points.len();
        (0..n).map(move |i| (&self.points[i], &self.points[(i + 1) % n]))
    }

    pub fn sites(&self) -> BTreeSet<&Site> {
        self.points.iter().map(|p| &p.site).collect()
    }

    /// Uses points of a single site only.
    pub fn is_trivial(&self) -> bool {
        self.points.iter().all(|p| p.site == self.points[0].site)
    }

    /// `H(γ) = Σ_s V(X(γ(s)) − X(s))`.
    pub fn energy(&self, v: &Potential) -> f64 {
        self.jumps()
            .map(|(s, t)| v.eval_site(&t.site.delta(&s.site)))
            .sum()
    }

    /// The part of `H(γ)` contributed by points located in `region`.
    pub fn energy_in(&self, v: &Potential, region: &IntBox) -> f64 {
        self.jumps()
            .filter(|(s, _)| region.contains(&s.site))
            .map(|(s, t)| v.eval_site(&t.site.delta(&s.site)))
            .sum()
    }

    /// `w(γ) = exp(−α H(γ))`.
    pub fn weight(&self, alpha: f64, v: &Potential) -> f64 {
        (-alpha * self.energy(v)).exp()
    }

    pub fn ordered_support(&self) -> OrderedSupport {
        OrderedSupport::from_projection(self.points.iter().map(|p| p.site.clone()).collect())
    }

    /// Largest projected jump `‖X(γ(s)) − X(s)‖`.
    pub fn max_jump(&self) -> f64 {
        self.jumps()
            .map(|(s, t)| (s.site.dist2(&t.site) as f64).sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest distance between two sites visited by the cycle.
    pub fn projected_diameter(&self) -> f64 {
        let sites: Vec<&Site> = self.sites().into_iter().collect();
        let mut best = 0i64;
        for (i, a) in sites.iter().enumerate() {
            for b in &sites[i + 1..] {
                best = best.max(a.dist2(b));
            }
        }
        (best as f64).sqrt()
    }
}

impl TryFrom<Vec<PointId>> for Cycle {
    type Error = Error;

    fn try_from(points: Vec<PointId>) -> Result<Self> {
        Cycle::new(points)
    }
}

impl From<Cycle> for Vec<PointId> {
    fn from(c: Cycle) -> Self {
        c.points
    }
}

impl fmt::Debug for Cycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{:?}#{}", p.site, p.tag)?;
        }
        write!(f, ")")
    }
}

/// The projection of a cycle to sites with consecutive repetitions erased.
///
/// The repetition between the last and the first site is erased as well, so
/// for `m >= 2` consecutive entries differ cyclically. Stored in the
/// lexicographically smallest rotation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrderedSupport {
    sites: Vec<Site>,
}

impl OrderedSupport {
    /// Erases consecutive (and wrap-around) repetitions from a projected site
    /// sequence and canonicalizes the rotation.
    pub fn from_projection(projection: Vec<Site>) -> Self {
        let mut sites: Vec<Site> = Vec::with_capacity(projection.len());
        for s in projection {
            if sites.last() != Some(&s) {
                sites.push(s);
            }
        }
        while sites.len() >= 2 && sites.first() == sites.last() {
            sites.pop();
        }
        OrderedSupport {
            sites: min_rotation(sites),
        }
    }

    /// Builds a candidate ordered support `ȳ`, which must be nonempty with
    /// cyclically distinct neighbours.
    pub fn new(sites: Vec<Site>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Parameter("ordered support must be nonempty".into()));
        }
        let m = sites.len();
        if m >= 2 && (0..m).any(|i| sites[i] == sites[(i + 1) % m]) {
            return Err(Error::Parameter(
                "consecutive sites of an ordered support must differ".into(),
            ));
        }
        Ok(OrderedSupport {
            sites: min_rotation(sites),
        })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// `{ȳ}`: the distinct sites.
    pub fn distinct_sites(&self) -> BTreeSet<&Site> {
        self.sites.iter().collect()
    }

    /// `k_z(ȳ)`: number of occurrences of `z`.
    pub fn multiplicity(&self, z: &Site) -> usize {
        self.sites.iter().filter(|s| *s == z).count()
    }

    /// `Σ_i V(y_{i+1} − y_i)` with `y_{m+1} = y_1`.
    pub fn energy(&self, v: &Potential) -> f64 {
        let m = self.sites.len();
        if m < 2 {
            return 0.0;
        }
        (0..m)
            .map(|i| v.eval_site(&self.sites[(i + 1) % m].delta(&self.sites[i])))
            .sum()
    }

    pub fn weight(&self, alpha: f64, v: &Potential) -> f64 {
        (-alpha * self.energy(v)).exp()
    }

    /// Concatenation `ȳ ȳ'` (not re-validated as an ordered support).
    pub fn concat(&self, other: &OrderedSupport) -> Vec<Site> {
        self.sites.iter().chain(&other.sites).cloned().collect()
    }
}

fn min_rotation<T: Ord + Clone>(v: Vec<T>) -> Vec<T> {
    let n = v.len();
    if n < 2 {
        return v;
    }
    let best = (0..n)
        .min_by(|&a, &b| {
            (0..n)
                .map(|k| v[(a + k) % n].cmp(&v[(b + k) % n]))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let mut out = v;
    out.rotate_left(best);
    out
}

/// Compatibility: disjoint point supports.
pub fn compatible(a: &Cycle, b: &Cycle) -> bool {
    !a.points.iter().any(|p| b.contains(p))
}

/// `γ ⋈ γ'`: the cycles visit a common site.
pub fn neighbors(a: &Cycle, b: &Cycle) -> bool {
    let sa = a.sites();
    b.points.iter().any(|p| sa.contains(&p.site))
}

/// A finite-cycle permutation as a set of pairwise compatible cycles. Fixed
/// points are implicit.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Cycle>", into = "Vec<Cycle>")]
pub struct GasConfig {
    cycles: BTreeSet<Cycle>,
}

impl GasConfig {
    pub fn empty() -> Self {
        GasConfig::default()
    }

    pub fn new(cycles: impl IntoIterator<Item = Cycle>) -> Result<Self> {
        let mut gas = GasConfig::empty();
        for c in cycles {
            gas.insert(c)?;
        }
        Ok(gas)
    }

    pub fn insert(&mut self, c: Cycle) -> Result<()> {
        if !gas_compatible(&c, self) {
            return Err(Error::Structure(format!("cycle {c:?} overlaps the gas")));
        }
        self.cycles.insert(c);
        Ok(())
    }

    pub fn cycles(&self) -> impl Iterator<Item = &Cycle> {
        self.cycles.iter()
    }

    pub fn contains(&self, c: &Cycle) -> bool {
        self.cycles.contains(c)
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.cycles.is_empty()
    }

    /// Every point moved by the permutation.
    pub fn support(&self) -> BTreeSet<&PointId> {
        self.cycles.iter().flat_map(|c| c.points.iter()).collect()
    }
}

impl TryFrom<Vec<Cycle>> for GasConfig {
    type Error = Error;

    fn try_from(v: Vec<Cycle>) -> Result<Self> {
        GasConfig::new(v)
    }
}

impl From<GasConfig> for Vec<Cycle> {
    fn from(g: GasConfig) -> Self {
        g.cycles.into_iter().collect()
    }
}

impl fmt::Debug for GasConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.cycles.iter()).finish()
    }
}

/// `γ ∼ η`.
pub fn gas_compatible(c: &Cycle, gas: &GasConfig) -> bool {
    gas.cycles.iter().all(|g| compatible(c, g))
}

/// Checks that every point of the gas exists in `env`.
pub fn check_gas(env: &Environment, gas: &GasConfig) -> Result<()> {
    for c in gas.cycles() {
        for p in c.points() {
            if !env.contains_point(p) {
                return Err(Error::Consistency(format!(
                    "point {:?}#{} does not exist in the environment",
                    p.site, p.tag
                )));
            }
        }
    }
    Ok(())
}

/// `H_Λ(σ) = Σ_{s ∈ Λ} V(X(σ(s)) − X(s))`; the whole gas when `region` is
/// `None`.
pub fn hamiltonian(
    env: &Environment,
    gas: &GasConfig,
    v: &Potential,
    region: Option<&IntBox>,
) -> Result<f64> {
    check_gas(env, gas)?;
    Ok(gas
        .cycles()
        .map(|c| match region {
            Some(r) => c.energy_in(v, r),
            None => c.energy(v),
        })
        .sum())
}

/// A finite-support permutation table. Only moved points are stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Permutation {
    map: BTreeMap<PointId, PointId>,
}

impl Permutation {
    pub fn identity() -> Self {
        Permutation::default()
    }

    /// Entries `s -> s` are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (PointId, PointId)>) -> Self {
        Permutation {
            map: pairs.into_iter().filter(|(a, b)| a != b).collect(),
        }
    }

    pub fn apply<'a>(&'a self, s: &'a PointId) -> &'a PointId {
        self.map.get(s).unwrap_or(s)
    }

    pub fn moved(&self) -> impl Iterator<Item = (&PointId, &PointId)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub fn gas_from_permutation(pi: &Permutation) -> Result<GasConfig> {
    let images: BTreeSet<&PointId> = pi.map.values().collect();
    if images.len() != pi.map.len() {
        return Err(Error::Structure("permutation table is not injective".into()));
    }
    if images.iter().any(|p| !pi.map.contains_key(*p)) {
        return Err(Error::Structure(
            "permutation table maps onto a fixed point; not a bijection".into(),
        ));
    }
    let mut seen: BTreeSet<&PointId> = BTreeSet::new();
    let mut cycles = Vec::new();
    for start in pi.map.keys() {
        if seen.contains(start) {
            continue;
        }
        let mut orbit = vec![start.clone()];
        seen.insert(start);
        let mut cur = &pi.map[start];
        while cur != start {
            if orbit.len() > pi.map.len() {
                return Err(Error::Structure("orbit exceeds the number of points".into()));
            }
            seen.insert(cur);
            orbit.push(cur.clone());
            cur = pi
                .map
                .get(cur)
                .ok_or_else(|| Error::Structure("orbit leaves the permutation support".into()))?;
        }
        cycles.push(Cycle::new(orbit)?);
    }
    GasConfig::new(cycles)
}

pub fn permutation_from_gas(gas: &GasConfig) -> Permutation {
    Permutation::from_pairs(
        gas.cycles()
            .flat_map(|c| c.jumps().map(|(s, t)| (s.clone(), t.clone()))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: i64, tag: u32) -> PointId {
        PointId::new([x], tag)
    }

    fn cyc(pts: &[(i64, u32)]) -> Cycle {
        Cycle::new(pts.iter().map(|&(x, t)| p(x, t)).collect()).unwrap()
    }

    fn env_1d(theta: &[(i64, u32)]) -> Environment {
        Environment::from_theta(
            IntBox::cube(1, -20, 20).unwrap(),
            theta.iter().map(|&(x, m)| (Site::from([x]), m)),
            0.25,
            0,
        )
        .unwrap()
    }

    #[test]
    fn cycle_rejects_short_and_repeated() {
        assert!(Cycle::new(vec![p(0, 1)]).is_err());
        assert!(Cycle::new(vec![p(0, 1), p(0, 1)]).is_err());
    }

    #[test]
    fn canonical_rotation() {
        let a = cyc(&[(3, 1), (1, 1), (2, 1)]);
        assert_eq!(a.points()[0], p(1, 1));
        assert_eq!(a.points()[1], p(2, 1));
        assert_eq!(a, cyc(&[(2, 1), (3, 1), (1, 1)]));
        // orientation matters
        assert_ne!(a, cyc(&[(1, 1), (3, 1), (2, 1)]));
    }

    #[test]
    fn hamiltonian_examples() {
        let v = Potential::Quadratic { dim: 1 };
        let env = env_1d(&[(0, 3), (1, 1)]);
        assert_eq!(hamiltonian(&env, &GasConfig::empty(), &v, None).unwrap(), 0.0);
        let swap = GasConfig::new([cyc(&[(0, 1), (1, 1)])]).unwrap();
        assert_eq!(hamiltonian(&env, &swap, &v, None).unwrap(), 2.0);
        let trivial = GasConfig::new([cyc(&[(0, 1), (0, 2), (0, 3)])]).unwrap();
        assert_eq!(hamiltonian(&env, &trivial, &v, None).unwrap(), 0.0);
        let dangling = GasConfig::new([cyc(&[(0, 1), (5, 1)])]).unwrap();
        assert!(matches!(
            hamiltonian(&env, &dangling, &v, None),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn hamiltonian_restricted_to_region() {
        let v = Potential::Quadratic { dim: 1 };
        let env = env_1d(&[(0, 1), (3, 1)]);
        let gas = GasConfig::new([cyc(&[(0, 1), (3, 1)])]).unwrap();
        let region = IntBox::cube(1, 0, 1).unwrap();
        assert_eq!(hamiltonian(&env, &gas, &v, Some(&region)).unwrap(), 9.0);
        assert_eq!(hamiltonian(&env, &gas, &v, None).unwrap(), 18.0);
    }

    #[test]
    fn weights() {
        let v = Potential::Quadratic { dim: 1 };
        assert_eq!(cyc(&[(0, 1), (0, 2)]).weight(1.0, &v), 1.0);
        let w = cyc(&[(0, 1), (1, 1)]).weight(1.0, &v);
        assert!((w - (-2.0f64).exp()).abs() < 1e-15);
        assert!((w - 0.135335).abs() < 1e-6);
    }

    #[test]
    fn ordered_support_examples() {
        let one_site = cyc(&[(4, 1), (4, 2), (4, 3)]).ordered_support();
        assert_eq!(one_site.sites(), &[Site::from([4])]);
        let a = cyc(&[(6, 1), (6, 2), (6, 3), (7, 1)]);
        let b = cyc(&[(6, 1), (6, 2), (7, 1)]);
        assert_ne!(a, b);
        assert_eq!(a.ordered_support().sites(), &[Site::from([6]), Site::from([7])]);
        assert_eq!(a.ordered_support(), b.ordered_support());
        // wrap-around repetition erased: 6 7 6 -> (6 7)
        let c = cyc(&[(6, 1), (7, 1), (6, 2)]);
        assert_eq!(c.ordered_support(), a.ordered_support());
    }

    #[test]
    fn ordered_support_validation() {
        assert!(OrderedSupport::new(vec![]).is_err());
        assert!(OrderedSupport::new(vec![Site::from([1]), Site::from([1])]).is_err());
        assert!(OrderedSupport::new(vec![Site::from([1]), Site::from([2]), Site::from([1])]).is_err());
        let y = OrderedSupport::new(vec![Site::from([7]), Site::from([6])]).unwrap();
        assert_eq!(y.sites()[0], Site::from([6]));
    }

    #[test]
    fn compatibility_and_neighbors() {
        let a = cyc(&[(0, 1), (1, 1)]);
        let b = cyc(&[(0, 2), (2, 1)]);
        let c = cyc(&[(5, 1), (6, 1)]);
        let d = cyc(&[(1, 1), (2, 1)]);
        assert!(compatible(&a, &b));
        assert!(!compatible(&a, &a));
        assert!(!compatible(&a, &d));
        assert!(neighbors(&a, &b));
        assert!(!neighbors(&a, &c));
        let trivial = cyc(&[(0, 2), (0, 3)]);
        assert!(neighbors(&trivial, &a));
    }

    #[test]
    fn gas_rejects_overlap() {
        let a = cyc(&[(0, 1), (1, 1)]);
        let d = cyc(&[(1, 1), (2, 1)]);
        assert!(GasConfig::new([a.clone(), d.clone()]).is_err());
        let g = GasConfig::new([a]).unwrap();
        assert!(!gas_compatible(&d, &g));
    }

    #[test]
    fn permutation_gas_examples() {
        assert!(gas_from_permutation(&Permutation::identity()).unwrap().is_empty());
        let t = Permutation::from_pairs([(p(0, 1), p(1, 1)), (p(1, 1), p(0, 1))]);
        let g = gas_from_permutation(&t).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(permutation_from_gas(&g), t);
    }

    #[test]
    fn non_bijective_tables_rejected() {
        let bad = Permutation::from_pairs([(p(0, 1), p(1, 1)), (p(2, 1), p(1, 1))]);
        assert!(gas_from_permutation(&bad).is_err());
        let onto_fixed = Permutation::from_pairs([(p(0, 1), p(1, 1))]);
        assert!(gas_from_permutation(&onto_fixed).is_err());
    }

    #[test]
    fn json_shapes() {
        let c = cyc(&[(1, 1), (0, 2)]);
        assert_eq!(serde_json::to_string(&c).unwrap(), "[[[0],2],[[1],1]]");
        let g = GasConfig::new([cyc(&[(5, 1), (6, 1)]), c]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, "[[[[0],2],[[1],1]],[[[5],1],[[6],1]]]");
        let back: GasConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<GasConfig>("[[[[0],1],[[1],1]],[[[1],1],[[2],1]]]").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        fn point_pool() -> Vec<PointId> {
            let mut v = Vec::new();
            for x in 0..4 {
                for t in 1..=3 {
                    v.push(PointId::new([x], t));
                }
            }
            v
        }

        fn random_perm(seed: u64) -> Permutation {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pool = point_pool();
            let mut shuffled = pool.clone();
            shuffled.shuffle(&mut rng);
            Permutation::from_pairs(pool.into_iter().zip(shuffled))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn permutation_round_trip(seed in any::<u64>()) {
                let pi = random_perm(seed);
                let gas = gas_from_permutation(&pi).unwrap();
                prop_assert_eq!(permutation_from_gas(&gas), pi);
                prop_assert_eq!(gas_from_permutation(&permutation_from_gas(&gas)).unwrap(), gas);
            }

            #[test]
            fn rotations_canonicalize_identically(seed in any::<u64>(), len in 2usize..7) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut pts = point_pool();
                pts.shuffle(&mut rng);
                pts.truncate(len);
                let c = Cycle::new(pts.clone()).unwrap();
                prop_assert_eq!(Cycle::new(c.points().to_vec()).unwrap(), c.clone());
                for k in 0..len {
                    let mut r = pts.clone();
                    r.rotate_left(k);
                    prop_assert_eq!(Cycle::new(r).unwrap(), c.clone());
                }
            }

            #[test]
            fn energy_depends_only_on_ordered_support(seed in any::<u64>(), len in 2usize..8) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut pts = point_pool();
                pts.shuffle(&mut rng);
                pts.truncate(len);
                let c = Cycle::new(pts).unwrap();
                let v = Potential::Quadratic { dim: 1 };
                let y = c.ordered_support();
                prop_assert!((c.energy(&v) - y.energy(&v)).abs() < 1e-12);
                // the ordered support has no zero increments
                let m = y.len();
                if m >= 2 {
                    for i in 0..m {
                        prop_assert_ne!(&y.sites()[i], &y.sites()[(i + 1) % m]);
                    }
                }
            }

            #[test]
            fn compatible_cycles_compose(s1 in any::<u64>(), s2 in any::<u64>()) {
                let a = gas_from_permutation(&random_perm(s1)).unwrap();
                let b = gas_from_permutation(&random_perm(s2)).unwrap();
                let pair = (a.cycles().next().cloned(), b.cycles().next().cloned());
                if let (Some(x), Some(y)) = pair {
                    if compatible(&x, &y) {
                        let pi = Permutation::from_pairs(
                            x.jumps().chain(y.jumps()).map(|(s, t)| (s.clone(), t.clone())),
                        );
                        let gas = gas_from_permutation(&pi).unwrap();
                        prop_assert_eq!(gas, GasConfig::new([x.clone(), y.clone()]).unwrap());
                    }
                }
            }
        }
    }
}
