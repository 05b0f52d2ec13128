//! The free birth-and-death process of cycles, clans of ancestors, the
//! kept/deleted thinning and the perfect sampler built on them.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Poisson};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cyclegas::{Cycle, CycleSpace, GasConfig};
use crate::environment::{Environment, IntBox};
use crate::error::{Error, Result};
use crate::exactgibbs::{boundary_cycles, cycle_space, BoundarySpec};
use crate::potential::Potential;

/// Default number of window doublings before giving up.
pub const DEFAULT_MAX_DOUBLINGS: u32 = 10;

/// A mark `(γ, t, r)`: a copy of cycle `γ` born at `t` living for `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mark {
    /// Index into the cycle space of the owning [`MarkSet`].
    pub cycle: u32,
    pub birth: f64,
    pub lifetime: f64,
}

impl Mark {
    pub fn death(&self) -> f64 {
        self.birth + self.lifetime
    }

    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && t < self.death()
    }
}

/// A realization of the driving Poisson process on a time window.
///
/// Every mark alive at some time in `(horizon, window.1]` is present, so
/// first-generation ancestor sets of marks born after `horizon` are
/// complete. Sets started from an empty free process have an infinite
/// horizon.
#[derive(Clone, Debug)]
pub struct MarkSet {
    space: Arc<CycleSpace>,
    window: (f64, f64),
    horizon: f64,
    marks: Vec<Mark>,
    weights_digest: String,
    max_lifetime: f64,
}

#[derive(Serialize)]
struct MarkJson {
    cycle: Cycle,
    birth: f64,
    lifetime: f64,
}

#[derive(Serialize)]
struct MarkSetJson {
    window: (f64, f64),
    horizon: Option<f64>,
    weights_digest: String,
    marks: Vec<MarkJson>,
}

impl MarkSet {
    fn build(space: Arc<CycleSpace>, window: (f64, f64), horizon: f64, mut marks: Vec<Mark>) -> Self {
        marks.sort_by(|a, b| a.birth.total_cmp(&b.birth).then(a.cycle.cmp(&b.cycle)));
        let max_lifetime = marks.iter().map(|m| m.lifetime).fold(0.0, f64::max);
        MarkSet {
            weights_digest: weights_digest(&space),
            space,
            window,
            horizon,
            marks,
            max_lifetime,
        }
    }

    pub fn space(&self) -> &Arc<CycleSpace> {
        &self.space
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Marks sorted by birth, ties broken by cycle index.
    pub fn marks(&self) -> &[Mark] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn weights_digest(&self) -> &str {
        &self.weights_digest
    }

    pub fn cycle_of(&self, i: usize) -> Cycle {
        self.space.cycle(self.marks[i].cycle as usize)
    }

    /// Indices of marks alive at `t`.
    pub fn alive_at(&self, t: f64) -> Vec<usize> {
        let end = self.marks.partition_point(|m| m.birth <= t);
        (0..end).filter(|&i| self.marks[i].alive_at(t)).collect()
    }

    /// First-generation ancestors `A₁(ζ)`: earlier marks with an
    /// incompatible cycle alive at the birth of mark `i`.
    pub fn first_generation(&self, i: usize) -> Vec<usize> {
        let z = &self.marks[i];
        let mask = self.space.mask(z.cycle as usize);
        let mut out = Vec::new();
        for j in (0..i).rev() {
            let m = &self.marks[j];
            if m.birth < z.birth - self.max_lifetime {
                break;
            }
            if m.death() > z.birth && self.space.mask(m.cycle as usize) & mask != 0 {
                out.push(j);
            }
        }
        out
    }

    fn ancestry_complete(&self, i: usize) -> bool {
        self.marks[i].birth > self.horizon
    }

    /// Times of all births and deaths inside the window, sorted.
    pub fn event_times(&self) -> Vec<f64> {
        let (lo, hi) = self.window;
        let mut t: Vec<f64> = self
            .marks
            .iter()
            .flat_map(|m| [m.birth, m.death()])
            .filter(|&x| x > lo && x <= hi)
            .collect();
        t.sort_by(f64::total_cmp);
        t
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = MarkSetJson {
            window: self.window,
            horizon: self.horizon.is_finite().then_some(self.horizon),
            weights_digest: self.weights_digest.clone(),
            marks: self
                .marks
                .iter()
                .enumerate()
                .map(|(i, m)| MarkJson {
                    cycle: self.cycle_of(i),
                    birth: m.birth,
                    lifetime: m.lifetime,
                })
                .collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }
}

fn weights_digest(space: &CycleSpace) -> String {
    let mut h = Sha256::new();
    for w in space.weights() {
        h.update(w.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// A deterministic seed for replica `index` of a run seeded with `base`
/// (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

fn exp1<R: Rng>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(Exp1)
}

fn cycle_picker(space: &CycleSpace) -> Option<WeightedIndex<f64>> {
    if space.is_empty() {
        None
    } else {
        Some(WeightedIndex::new(space.weights()).expect("weights are positive"))
    }
}

/// One draw from `ν`: independent Poisson(`w(γ)`) copies of every cycle of
/// the space plus one copy of each boundary cycle. Cycles with zero count
/// are omitted.
pub fn nu_sample(space: &CycleSpace, boundary: &[Cycle], seed: u64) -> BTreeMap<Cycle, u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for i in 0..space.len() {
        let k = poisson(&mut rng, space.weight(i));
        if k > 0 {
            out.insert(space.cycle(i), k as u32);
        }
    }
    for c in boundary {
        *out.entry(c.clone()).or_insert(0) += 1;
    }
    out
}

/// Per-index counts of a `ν` draw over the space (boundary copies excluded).
pub fn nu_counts(space: &CycleSpace, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..space.len())
        .map(|i| poisson(&mut rng, space.weight(i)) as u32)
        .collect()
}

/// Marks of the free process started empty at `window.0`: births form a
/// Poisson process of rate `W = Σ w(γ)` on the window, each with cycle drawn
/// proportionally to `w` and an Exp(1) lifetime.
pub fn generate_marks(space: Arc<CycleSpace>, window: (f64, f64), seed: u64) -> Result<MarkSet> {
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Parameter(format!("invalid window [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut marks = Vec::new();
    if let Some(pick) = cycle_picker(&space) {
        let n = poisson(&mut rng, space.total_weight() * (hi - lo));
        for _ in 0..n {
            let birth = rng.random_range(lo..=hi);
            let cycle = pick.sample(&mut rng) as u32;
            let lifetime = exp1(&mut rng);
            marks.push(Mark {
                cycle,
                birth,
                lifetime,
            });
        }
    }
    Ok(MarkSet::build(space, window, f64::NEG_INFINITY, marks))
}

/// Stationary marks on `(−T, 0]` with `T = t0 · 2^levels`.
///
/// Subwindow 0 holds the marks alive at time 0 (Poisson(`W`) many, each with
/// an Exp(1) age and an Exp(1) residual life) and the marks dying in
/// `(−t0, 0]`. Subwindow `k ≥ 1` holds the marks dying in
/// `(−t0·2^k, −t0·2^(k−1)]`. Deaths of a stationary free process form a
/// Poisson process of rate `W` with independent Exp(1) ages, so every mark
/// alive at some time in `(−T, 0]` is present. Subwindow `k` uses stream `k`
/// of the seeded generator and does not depend on `levels`.
pub fn stationary_marks(space: Arc<CycleSpace>, t0: f64, levels: u32, seed: u64) -> Result<MarkSet> {
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::Parameter(format!("initial window {t0} must be positive")));
    }
    let mut marks = Vec::new();
    if let Some(pick) = cycle_picker(&space) {
        for k in 0..=levels {
            subwindow_marks(&space, &pick, t0, k, seed, &mut marks);
        }
    }
    let t = t0 * f64::from(2u32).powi(levels as i32);
    Ok(MarkSet::build(space, (-t, 0.0), -t, marks))
}

fn subwindow_marks(
    space: &CycleSpace,
    pick: &WeightedIndex<f64>,
    t0: f64,
    k: u32,
    seed: u64,
    out: &mut Vec<Mark>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(k));
    let w = space.total_weight();
    if k == 0 {
        for _ in 0..poisson(&mut rng, w) {
            let cycle = pick.sample(&mut rng) as u32;
            let age = exp1(&mut rng);
            let residual = exp1(&mut rng);
            out.push(Mark {
                cycle,
                birth: -age,
                lifetime: age + residual,
            });
        }
    }
    let (lo, hi) = if k == 0 {
        (-t0, 0.0)
    } else {
        let hi = -t0 * f64::from(2u32).powi(k as i32 - 1);
        (2.0 * hi, hi)
    };
    for _ in 0..poisson(&mut rng, w * (hi - lo)) {
        let death = hi - rng.random::<f64>() * (hi - lo);
        let cycle = pick.sample(&mut rng) as u32;
        let lifetime = exp1(&mut rng);
        out.push(Mark {
            cycle,
            birth: death - lifetime,
            lifetime,
        });
    }
}

/// Free-process state at `t`: counts of alive copies per cycle plus one
/// permanent copy per boundary cycle.
pub fn free_state(marks: &MarkSet, t: f64, boundary: &[Cycle]) -> BTreeMap<Cycle, u32> {
    let mut out = BTreeMap::new();
    for i in marks.alive_at(t) {
        *out.entry(marks.cycle_of(i)).or_insert(0) += 1;
    }
    for c in boundary {
        *out.entry(c.clone()).or_insert(0) += 1;
    }
    out
}

/// Per-index alive counts at `t` (boundary copies excluded).
pub fn free_counts(marks: &MarkSet, t: f64) -> Vec<u32> {
    let mut out = vec![0u32; marks.space.len()];
    for i in marks.alive_at(t) {
        out[marks.marks[i].cycle as usize] += 1;
    }
    out
}

/// The clan of ancestors of mark `i`: the transitive closure of first
/// generations, sorted by index.
pub fn clan(marks: &MarkSet, i: usize) -> Result<Vec<usize>> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![i];
    while let Some(j) = stack.pop() {
        if !marks.ancestry_complete(j) {
            return Err(Error::WindowTooSmall {
                mark: j,
                window_start: marks.horizon,
            });
        }
        for a in marks.first_generation(j) {
            if seen.insert(a) {
                stack.push(a);
            }
        }
    }
    Ok(seen.into_iter().collect())
}

/// Kept/deleted classification of the marks relevant to a query.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ThinningResult {
    pub kept: BTreeSet<usize>,
    pub deleted: BTreeSet<usize>,
    /// The step at which a mark first enters the kept family (for kept
    /// marks) or the deleted family (for deleted marks; 0 for the
    /// boundary-incompatible ones).
    pub generations: BTreeMap<usize, u32>,
}

/// Bitmask of the space points used by boundary cycles.
pub fn boundary_mask(space: &CycleSpace, boundary: &[Cycle]) -> u64 {
    boundary
        .iter()
        .flat_map(|c| c.points())
        .filter_map(|p| space.local_index(p))
        .fold(0u64, |m, i| m | (1u64 << i))
}

/// Marks needed to classify `targets`: the targets and the ancestors of every
/// reached mark that is not boundary-incompatible. `Err(j)` names a reached
/// mark whose ancestry lies partly before the horizon.
fn relevant(marks: &MarkSet, d0: u64, targets: &[usize]) -> std::result::Result<Vec<usize>, usize> {
    let mut seen: BTreeSet<usize> = targets.iter().copied().collect();
    let mut stack: Vec<usize> = targets.to_vec();
    while let Some(j) = stack.pop() {
        if marks.space.mask(marks.marks[j].cycle as usize) & d0 != 0 {
            continue;
        }
        if !marks.ancestry_complete(j) {
            return Err(j);
        }
        for a in marks.first_generation(j) {
            if seen.insert(a) {
                stack.push(a);
            }
        }
    }
    Ok(seen.into_iter().collect())
}

fn classify(marks: &MarkSet, d0: u64, relevant: &[usize]) -> ThinningResult {
    let mut res = ThinningResult::default();
    for &j in relevant {
        if marks.space.mask(marks.marks[j].cycle as usize) & d0 != 0 {
            res.deleted.insert(j);
            res.generations.insert(j, 0);
            continue;
        }
        let anc = marks.first_generation(j);
        let kept_anc: Vec<u32> = anc
            .iter()
            .filter(|a| res.kept.contains(a))
            .map(|a| res.generations[a])
            .collect();
        if kept_anc.is_empty() {
            let g = anc.iter().map(|a| res.generations[a]).max().map_or(1, |g| g + 1);
            res.kept.insert(j);
            res.generations.insert(j, g);
        } else {
            res.deleted.insert(j);
            res.generations.insert(j, *kept_anc.iter().min().unwrap());
        }
    }
    res
}

/// Classifies the marks alive at `query` together with their clans.
///
/// Boundary-incompatible marks are deleted outright; every other mark is kept
/// iff all its first-generation ancestors are deleted, resolved in birth
/// order.
pub fn thin(marks: &MarkSet, boundary: &[Cycle], query: f64) -> Result<ThinningResult> {
    let d0 = boundary_mask(&marks.space, boundary);
    let targets = marks.alive_at(query);
    let rel = relevant(marks, d0, &targets).map_err(|j| Error::WindowTooSmall {
        mark: j,
        window_start: marks.horizon,
    })?;
    Ok(classify(marks, d0, &rel))
}

/// Classifies every mark of the set.
pub fn thin_all(marks: &MarkSet, boundary: &[Cycle]) -> Result<ThinningResult> {
    let d0 = boundary_mask(&marks.space, boundary);
    let targets: Vec<usize> = (0..marks.len()).collect();
    let rel = relevant(marks, d0, &targets).map_err(|j| Error::WindowTooSmall {
        mark: j,
        window_start: marks.horizon,
    })?;
    Ok(classify(marks, d0, &rel))
}

/// The loss-network state at `query`: kept marks alive then, plus the
/// boundary cycles.
pub fn loss_network_state(marks: &MarkSet, boundary: &[Cycle], query: f64) -> Result<GasConfig> {
    let res = thin(marks, boundary, query)?;
    let mut gas = GasConfig::new(boundary.iter().cloned())?;
    for i in marks.alive_at(query) {
        if res.kept.contains(&i) {
            gas.insert(marks.cycle_of(i))?;
        }
    }
    Ok(gas)
}

/// One output of the perfect sampler.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerfectDraw {
    pub seed: u64,
    #[serde(rename = "T_final")]
    pub t_final: f64,
    pub n_marks: usize,
    pub sample: GasConfig,
}

/// Perfect sampler for `G^ξ_{θ,Λ}` over a compiled cycle space.
///
/// The stationary marks are generated on `(−T, 0]`, starting from
/// `T = 4 / min(1, W)` and doubling until the clan of every mark alive at 0
/// lies after `−T`. The state at 0 is then a function of marks inside the
/// window only, and doubling never changes it.
#[derive(Clone, Debug)]
pub struct PerfectSampler {
    space: Arc<CycleSpace>,
    boundary: Vec<Cycle>,
    d0: u64,
    t0: f64,
    max_doublings: u32,
}

impl PerfectSampler {
    pub fn new(space: Arc<CycleSpace>, boundary: Vec<Cycle>) -> Self {
        let d0 = boundary_mask(&space, &boundary);
        let w = space.total_weight();
        PerfectSampler {
            space,
            boundary,
            d0,
            t0: 4.0 / w.min(1.0),
            max_doublings: DEFAULT_MAX_DOUBLINGS,
        }
    }

    /// Builds `Γ_{θ,Λ}` and `B(ξ, Λ)` for the instance.
    pub fn for_instance(
        env: &Environment,
        lam: &IntBox,
        xi: &BoundarySpec,
        alpha: f64,
        v: &Potential,
        max_points: usize,
    ) -> Result<Self> {
        xi.check(env)?;
        let space = Arc::new(cycle_space(env, lam, alpha, v, max_points)?);
        Ok(PerfectSampler::new(space, boundary_cycles(xi, lam)))
    }

    pub fn with_max_doublings(mut self, n: u32) -> Self {
        self.max_doublings = n;
        self
    }

    pub fn space(&self) -> &Arc<CycleSpace> {
        &self.space
    }

    pub fn boundary(&self) -> &[Cycle] {
        &self.boundary
    }

    pub fn initial_window(&self) -> f64 {
        self.t0
    }

    /// Grows the window from `min_levels` doublings until every mask in
    /// `d0s` has closed clans; returns the marks and the relevant sets.
    fn resolve(&self, seed: u64, min_levels: u32, d0s: &[u64]) -> Result<(MarkSet, Vec<Vec<usize>>)> {
        let mut levels = min_levels;
        loop {
            let marks = stationary_marks(self.space.clone(), self.t0, levels, seed)?;
            let roots = marks.alive_at(0.0);
            let mut rels = Vec::with_capacity(d0s.len());
            let mut unresolved = 0;
            for &d0 in d0s {
                match relevant(&marks, d0, &roots) {
                    Ok(r) => rels.push(r),
                    Err(_) => {
                        unresolved += roots
                            .iter()
                            .filter(|&&r| relevant(&marks, d0, &[r]).is_err())
                            .count();
                    }
                }
            }
            if unresolved == 0 {
                return Ok((marks, rels));
            }
            if levels >= self.max_doublings.max(min_levels) {
                return Err(Error::Nontermination {
                    window: -marks.window.0,
                    doublings: levels,
                    marks: marks.len(),
                    unresolved,
                });
            }
            levels += 1;
        }
    }

    fn state(&self, marks: &MarkSet, d0: u64, rel: &[usize], boundary: &[Cycle]) -> GasConfig {
        let res = classify(marks, d0, rel);
        let mut gas = GasConfig::new(boundary.iter().cloned()).expect("boundary is a gas");
        for i in marks.alive_at(0.0) {
            if res.kept.contains(&i) {
                gas.insert(marks.cycle_of(i))
                    .expect("kept marks alive together are compatible");
            }
        }
        gas
    }

    pub fn draw(&self, seed: u64) -> Result<PerfectDraw> {
        self.draw_from_level(seed, 0)
    }

    /// As [`PerfectSampler::draw`] with the window pre-extended by
    /// `min_levels` doublings.
    pub fn draw_from_level(&self, seed: u64, min_levels: u32) -> Result<PerfectDraw> {
        if self.space.is_empty() {
            return Ok(PerfectDraw {
                seed,
                t_final: 0.0,
                n_marks: 0,
                sample: GasConfig::new(self.boundary.iter().cloned())?,
            });
        }
        let (marks, rels) = self.resolve(seed, min_levels, &[self.d0])?;
        Ok(PerfectDraw {
            seed,
            t_final: -marks.window.0,
            n_marks: marks.len(),
            sample: self.state(&marks, self.d0, &rels[0], &self.boundary),
        })
    }

    pub fn sample(&self, seed: u64) -> Result<GasConfig> {
        Ok(self.draw(seed)?.sample)
    }

    /// The marks used by a draw, for failure triage.
    pub fn marks_for(&self, seed: u64) -> Result<MarkSet> {
        if self.space.is_empty() {
            return stationary_marks(self.space.clone(), 1.0, 0, seed);
        }
        Ok(self.resolve(seed, 0, &[self.d0])?.0)
    }

    /// The `ξ` and identity constructions driven by the same marks.
    pub fn coupled(&self, seed: u64) -> Result<CoupledDraw> {
        if self.space.is_empty() {
            let marks = stationary_marks(self.space.clone(), 1.0, 0, seed)?;
            return Ok(CoupledDraw {
                xi: GasConfig::new(self.boundary.iter().cloned())?,
                identity: GasConfig::empty(),
                marks,
            });
        }
        let (marks, rels) = self.resolve(seed, 0, &[self.d0, 0])?;
        Ok(CoupledDraw {
            xi: self.state(&marks, self.d0, &rels[0], &self.boundary),
            identity: self.state(&marks, 0, &rels[1], &[]),
            marks,
        })
    }
}

/// Output of [`PerfectSampler::coupled`].
#[derive(Clone, Debug)]
pub struct CoupledDraw {
    pub xi: GasConfig,
    pub identity: GasConfig,
    pub marks: MarkSet,
}

/// One perfect sample of `G^ξ_{θ,Λ}`.
pub fn perfect_sample(
    env: &Environment,
    lam: &IntBox,
    xi: &BoundarySpec,
    alpha: f64,
    v: &Potential,
    seed: u64,
    max_points: usize,
) -> Result<GasConfig> {
    PerfectSampler::for_instance(env, lam, xi, alpha, v, max_points)?.sample(seed)
}

/// Loss-network states at time 0 under boundary `ξ` and under the identity,
/// from one shared set of marks.
pub fn coupled_pair(
    env: &Environment,
    lam: &IntBox,
    xi: &BoundarySpec,
    alpha: f64,
    v: &Potential,
    seed: u64,
    max_points: usize,
) -> Result<(GasConfig, GasConfig)> {
    let d = PerfectSampler::for_instance(env, lam, xi, alpha, v, max_points)?.coupled(seed)?;
    Ok((d.xi, d.identity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{PointId, Site};

    fn p(x: i64, t: u32) -> PointId {
        PointId::new([x], t)
    }

    fn cyc(pts: &[(i64, u32)]) -> Cycle {
        Cycle::new(pts.iter().map(|&(x, t)| p(x, t)).collect()).unwrap()
    }

    fn space(cycles: &[(&[(i64, u32)], f64)]) -> Arc<CycleSpace> {
        Arc::new(CycleSpace::from_weighted(cycles.iter().map(|(c, w)| (cyc(c), *w)).collect()).unwrap())
    }

    fn hand_marks(space: Arc<CycleSpace>, marks: &[(u32, f64, f64)]) -> MarkSet {
        MarkSet::build(
            space,
            (-10.0, 10.0),
            f64::NEG_INFINITY,
            marks
                .iter()
                .map(|&(cycle, birth, lifetime)| Mark {
                    cycle,
                    birth,
                    lifetime,
                })
                .collect(),
        )
    }

    #[test]
    fn nu_sample_shifts_boundary() {
        let s = space(&[(&[(0, 1), (1, 1)], 1e-12)]);
        let b = cyc(&[(5, 1), (6, 1)]);
        for seed in 0..50 {
            let draw = nu_sample(&s, std::slice::from_ref(&b), seed);
            assert!(draw[&b] >= 1);
            assert!(!draw.contains_key(&s.cycle(0)));
        }
    }

    #[test]
    fn nu_sample_mean_matches_weight() {
        let s = space(&[(&[(0, 1), (1, 1)], 0.3), (&[(2, 1), (3, 1)], 0.8)]);
        let n = 100_000;
        let mut sums = [0.0f64; 2];
        for seed in 0..n {
            let c = nu_counts(&s, seed);
            sums[0] += c[0] as f64;
            sums[1] += c[1] as f64;
        }
        for (i, w) in [0.3, 0.8].into_iter().enumerate() {
            let mean = sums[i] / n as f64;
            assert!(
                (mean - w).abs() < 3.0 * (w / n as f64).sqrt(),
                "cycle {i}: {mean}"
            );
        }
    }

    #[test]
    fn poisson_marginals_balance() {
        // ν(k) w = ν(k+1) (k+1) for Poisson(w)
        let w: f64 = 0.37;
        let pmf = |k: u32| (-w).exp() * w.powi(k as i32) / (1..=k).map(f64::from).product::<f64>();
        for k in 0..10 {
            let lhs = pmf(k) * w;
            let rhs = pmf(k + 1) * f64::from(k + 1);
            assert!((lhs - rhs).abs() <= 1e-15 * lhs);
        }
    }

    #[test]
    fn empty_window_has_no_marks() {
        let s = space(&[(&[(0, 1), (1, 1)], 0.5)]);
        assert!(generate_marks(s, (2.0, 2.0), 1).unwrap().is_empty());
    }

    #[test]
    fn mark_count_is_poisson() {
        let s = space(&[(&[(0, 1), (1, 1)], 0.5), (&[(0, 1), (2, 1)], 0.25)]);
        let reps = 2000;
        let total: usize = (0..reps)
            .map(|seed| generate_marks(s.clone(), (0.0, 8.0), seed).unwrap().len())
            .sum();
        let mean = total as f64 / reps as f64;
        let expect = 0.75 * 8.0;
        assert!((mean - expect).abs() < 3.0 * (expect / reps as f64).sqrt());
    }

    #[test]
    fn marks_are_sorted_and_deterministic() {
        let s = space(&[(&[(0, 1), (1, 1)], 0.9)]);
        let a = generate_marks(s.clone(), (0.0, 50.0), 4).unwrap();
        let b = generate_marks(s, (0.0, 50.0), 4).unwrap();
        assert_eq!(a.marks(), b.marks());
        assert!(a.marks().windows(2).all(|w| w[0].birth <= w[1].birth));
        assert!(a
            .marks()
            .iter()
            .all(|m| m.lifetime > 0.0 && (0.0..=50.0).contains(&m.birth)));
    }

    #[test]
    fn clan_examples() {
        let s = space(&[
            (&[(0, 1), (1, 1)], 0.5),
            (&[(1, 1), (2, 1)], 0.5),
            (&[(2, 1), (3, 1)], 0.5),
            (&[(7, 1), (8, 1)], 0.5),
        ]);
        // chain 0 -> 1 -> 2, each alive at the next birth, consecutive ones incompatible
        let m = hand_marks(
            s.clone(),
            &[(0, 0.0, 2.0), (1, 1.0, 2.0), (2, 2.5, 1.0), (3, 0.5, 5.0)],
        );
        let idx: Vec<u32> = m.marks().iter().map(|x| x.cycle).collect();
        let last = idx.iter().position(|&c| c == 2).unwrap();
        let first = idx.iter().position(|&c| c == 0).unwrap();
        let second = idx.iter().position(|&c| c == 1).unwrap();
        assert_eq!(clan(&m, last).unwrap(), {
            let mut v = vec![first, second];
            v.sort();
            v
        });
        let lone = idx.iter().position(|&c| c == 3).unwrap();
        assert!(clan(&m, lone).unwrap().is_empty());
    }

    #[test]
    fn thinning_examples() {
        let s = space(&[
            (&[(0, 1), (1, 1)], 0.5),
            (&[(1, 1), (2, 1)], 0.5),
            (&[(5, 1), (6, 1)], 0.5),
        ]);
        let m = hand_marks(s.clone(), &[(0, 0.0, 3.0), (1, 1.0, 3.0), (2, 2.0, 3.0)]);
        let r = thin_all(&m, &[]).unwrap();
        assert_eq!(r.kept, BTreeSet::from([0, 2]));
        assert_eq!(r.deleted, BTreeSet::from([1]));
        assert_eq!(r.generations[&0], 1);
        assert_eq!(r.generations[&1], 1);
        // boundary through (5,1) deletes the third mark at step 0
        let b = cyc(&[(5, 1), (9, 1)]);
        let r = thin_all(&m, &[b]).unwrap();
        assert!(r.deleted.contains(&2));
        assert_eq!(r.generations[&2], 0);
    }

    #[test]
    fn deleted_ancestor_does_not_block() {
        let s = space(&[
            (&[(0, 1), (1, 1)], 0.5),
            (&[(1, 1), (2, 1)], 0.5),
            (&[(2, 1), (3, 1)], 0.5),
        ]);
        // 0 kept, 1 deleted by 0, 2 conflicts only with 1 and is kept
        let m = hand_marks(s, &[(0, 0.0, 5.0), (1, 1.0, 5.0), (2, 2.0, 5.0)]);
        let r = thin_all(&m, &[]).unwrap();
        assert_eq!(r.kept, BTreeSet::from([0, 2]));
        assert_eq!(r.generations[&2], 2);
    }

    #[test]
    fn unclosed_clan_is_reported() {
        let s = space(&[(&[(0, 1), (1, 1)], 1.0)]);
        let m = MarkSet::build(
            s,
            (-1.0, 0.0),
            -1.0,
            vec![Mark {
                cycle: 0,
                birth: -2.0,
                lifetime: 3.0,
            }],
        );
        assert!(matches!(thin(&m, &[], 0.0), Err(Error::WindowTooSmall { .. })));
        assert!(matches!(clan(&m, 0), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn kept_marks_never_overlap() {
        let s = space(&[
            (&[(0, 1), (1, 1)], 0.9),
            (&[(1, 1), (2, 1)], 0.7),
            (&[(0, 1), (2, 1)], 0.5),
            (&[(0, 1), (1, 1), (2, 1)], 0.4),
        ]);
        for seed in 0..200 {
            let m = generate_marks(s.clone(), (0.0, 30.0), seed).unwrap();
            let r = thin_all(&m, &[]).unwrap();
            assert_eq!(r.kept.len() + r.deleted.len(), m.len());
            let kept: Vec<usize> = r.kept.iter().copied().collect();
            for (a, &i) in kept.iter().enumerate() {
                for &j in &kept[a + 1..] {
                    let (x, y) = (&m.marks()[i], &m.marks()[j]);
                    let overlap = x.birth < y.death() && y.birth < x.death();
                    if overlap {
                        assert_eq!(s.mask(x.cycle as usize) & s.mask(y.cycle as usize), 0);
                    }
                }
            }
        }
    }

    #[test]
    fn stationary_marks_extend_stably() {
        let s = space(&[(&[(0, 1), (1, 1)], 0.9), (&[(1, 1), (2, 1)], 0.7)]);
        let a = stationary_marks(s.clone(), 2.0, 1, 9).unwrap();
        let b = stationary_marks(s, 2.0, 3, 9).unwrap();
        let deep: Vec<&Mark> = b.marks().iter().filter(|m| m.death() > -4.0).collect();
        let shallow: Vec<&Mark> = a.marks().iter().collect();
        assert_eq!(deep, shallow);
        assert_eq!(b.window(), (-16.0, 0.0));
    }

    #[test]
    fn single_point_volume_gives_identity() {
        let env =
            Environment::from_theta(IntBox::cube(1, 0, 3).unwrap(), [(Site::from([1]), 1)], 0.25, 0).unwrap();
        let lam = IntBox::cube(1, 0, 3).unwrap();
        for seed in 0..10 {
            let g = perfect_sample(
                &env,
                &lam,
                &BoundarySpec::identity(),
                1.0,
                &Potential::Quadratic { dim: 1 },
                seed,
                9,
            )
            .unwrap();
            assert!(g.is_identity());
        }
    }

    #[test]
    fn doubling_does_not_change_result() {
        let s = space(&[
            (&[(0, 1), (1, 1)], 0.9),
            (&[(1, 1), (2, 1)], 0.7),
            (&[(0, 1), (1, 1), (2, 1)], 0.4),
        ]);
        let sampler = PerfectSampler::new(s, vec![]);
        for seed in 0..300 {
            let a = sampler.draw(seed).unwrap();
            let b = sampler.draw_from_level(seed, 4).unwrap();
            assert_eq!(a.sample, b.sample);
            assert!(b.t_final >= a.t_final);
        }
    }

    #[test]
    fn nontermination_is_reported() {
        let s = space(&[
            (&[(0, 1), (1, 1)], 1.0),
            (&[(0, 1), (2, 1)], 1.0),
            (&[(1, 1), (2, 1)], 1.0),
        ]);
        let sampler = PerfectSampler::new(s, vec![]).with_max_doublings(0);
        let errs = (0..200)
            .filter(|&seed| matches!(sampler.draw(seed), Err(Error::Nontermination { .. })))
            .count();
        assert!(errs > 0);
    }

    #[test]
    fn identity_coupling_agrees() {
        let s = space(&[(&[(0, 1), (1, 1)], 0.9), (&[(1, 1), (2, 1)], 0.7)]);
        let sampler = PerfectSampler::new(s, vec![]);
        for seed in 0..100 {
            let d = sampler.coupled(seed).unwrap();
            assert_eq!(d.xi, d.identity);
            assert_eq!(d.xi, sampler.sample(seed).unwrap());
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: BTreeSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
