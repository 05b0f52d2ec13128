//! Brute-force ground truth: the cycle space and compatible-permutation set
//! of a finite volume, the exact specification table and sampling from it.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cyclegas::{Cycle, CycleSpace, GasConfig};
use crate::environment::{points_of, Environment, IntBox, PointId};
use crate::error::{Error, Result};
use crate::potential::Potential;

/// Default cap on the number of points of an exactly enumerated volume.
pub const DEFAULT_MAX_POINTS: usize = 9;

/// A finite-cycle boundary permutation `ξ`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundarySpec {
    xi: GasConfig,
}

impl BoundarySpec {
    pub fn identity() -> Self {
        BoundarySpec::default()
    }

    pub fn new(xi: GasConfig) -> Self {
        BoundarySpec { xi }
    }

    pub fn gas(&self) -> &GasConfig {
        &self.xi
    }

    pub fn is_identity(&self) -> bool {
        self.xi.is_empty()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(&self.xi).expect("gas serialization is infallible");
        hex::encode(Sha256::digest(&json))
    }

    /// Every boundary point must exist in `env`.
    pub fn check(&self, env: &Environment) -> Result<()> {
        for c in self.xi.cycles() {
            for p in c.points() {
                if !env.contains_point(p) {
                    return Err(Error::Boundary(format!(
                        "boundary cycle {c:?} uses point {:?}#{} absent from the environment",
                        p.site, p.tag
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `B(ξ, Λ)`: the cycles of `ξ` visiting both `Λ` and its complement.
pub fn boundary_cycles(xi: &BoundarySpec, lam: &IntBox) -> Vec<Cycle> {
    xi.xi
        .cycles()
        .filter(|c| {
            let inside = c.points().iter().filter(|p| lam.contains(&p.site)).count();
            inside > 0 && inside < c.len()
        })
        .cloned()
        .collect()
}

fn capped_points(env: &Environment, lam: &IntBox, max_points: usize) -> Result<Vec<PointId>> {
    let pts = points_of(env, lam)?;
    if pts.len() > max_points {
        return Err(Error::Size {
            what: "volume",
            count: pts.len(),
            cap: max_points,
        });
    }
    Ok(pts)
}

/// `Γ_{θ,Λ}` with weights `exp(−α H(γ))`, compiled into a [`CycleSpace`].
pub fn cycle_space(
    env: &Environment,
    lam: &IntBox,
    alpha: f64,
    v: &Potential,
    max_points: usize,
) -> Result<CycleSpace> {
    check_alpha(alpha)?;
    check_dim(env, v)?;
    CycleSpace::enumerate(capped_points(env, lam, max_points)?, alpha, v)
}

/// All cycles with support in `Λ`, in canonical rotation.
pub fn enumerate_cycles(env: &Environment, lam: &IntBox, max_points: usize) -> Result<Vec<Cycle>> {
    let space = CycleSpace::enumerate(
        capped_points(env, lam, max_points)?,
        0.0,
        &Potential::Quadratic { dim: env.dim() },
    )?;
    Ok((0..space.len()).map(|i| space.cycle(i)).collect())
}

/// The compatible set `S^ξ_{θ,Λ}` as gases: `B(ξ, Λ)` together with every
/// permutation of the `Λ`-points not used by `B(ξ, Λ)`.
pub fn enumerate_compatible(
    env: &Environment,
    lam: &IntBox,
    xi: &BoundarySpec,
    max_points: usize,
) -> Result<Vec<GasConfig>> {
    xi.check(env)?;
    let space = CycleSpace::enumerate(
        capped_points(env, lam, max_points)?,
        0.0,
        &Potential::Quadratic { dim: env.dim() },
    )?;
    let boundary = boundary_cycles(xi, lam);
    let free = free_mask(&space, &boundary);
    let mut out = Vec::new();
    for_each_state(&space, free, &mut |state| {
        let gas = GasConfig::new(
            boundary
                .iter()
                .cloned()
                .chain(state.iter().map(|&i| space.cycle(i as usize))),
        )
        .expect("enumerated cycles are disjoint");
        out.push(gas);
    });
    Ok(out)
}

/// Bitmask of the points of `space` not used by any boundary cycle.
pub fn free_mask(space: &CycleSpace, boundary: &[Cycle]) -> u64 {
    let n = space.points().len();
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let used = boundary
        .iter()
        .flat_map(|c| c.points())
        .filter_map(|p| space.local_index(p))
        .fold(0u64, |m, i| m | (1u64 << i));
    all & !used
}

/// Visits every permutation of the points in `free` as a sorted list of
/// cycle indices. Each cycle is built from its smallest point, so every
/// permutation is produced exactly once.
pub fn for_each_state(space: &CycleSpace, free: u64, f: &mut dyn FnMut(&[u32])) {
    let mut cur = Vec::new();
    let mut sorted = Vec::new();
    states_rec(space, free, &mut cur, &mut sorted, f);
}

fn states_rec(
    space: &CycleSpace,
    free: u64,
    cur: &mut Vec<u32>,
    sorted: &mut Vec<u32>,
    f: &mut dyn FnMut(&[u32]),
) {
    if free == 0 {
        sorted.clear();
        sorted.extend_from_slice(cur);
        sorted.sort_unstable();
        f(sorted);
        return;
    }
    let p = free.trailing_zeros() as u8;
    let rest = free & !(1u64 << p);
    states_rec(space, rest, cur, sorted, f);
    let mut path = vec![p];
    cycles_through(space, rest, &mut path, cur, sorted, f);
}

fn cycles_through(
    space: &CycleSpace,
    avail: u64,
    path: &mut Vec<u8>,
    cur: &mut Vec<u32>,
    sorted: &mut Vec<u32>,
    f: &mut dyn FnMut(&[u32]),
) {
    let mut bits = avail;
    while bits != 0 {
        let q = bits.trailing_zeros() as u8;
        bits &= bits - 1;
        path.push(q);
        let idx = space
            .index_of_local(path)
            .expect("cycle space holds every cycle over its points");
        let left = avail & !(1u64 << q);
        cur.push(idx as u32);
        states_rec(space, left, cur, sorted, f);
        cur.pop();
        cycles_through(space, left, path, cur, sorted, f);
        path.pop();
    }
}

/// Parameters identifying a specification table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecParams {
    pub alpha: f64,
    pub potential: Potential,
    pub lambda: IntBox,
    pub xi_digest: String,
}

/// The exact specification `G^ξ_{θ,Λ}` as an explicit table.
///
/// Entries are stored as sorted lists of indices into the shared cycle space
/// and ordered by descending probability.
#[derive(Clone, Debug)]
pub struct SpecTable {
    space: Arc<CycleSpace>,
    boundary: Vec<Cycle>,
    flat: Vec<u32>,
    offsets: Vec<u32>,
    probs: Vec<f64>,
    partition_value: f64,
    form_defect: f64,
    params: SpecParams,
}

#[derive(Serialize)]
struct EntryJson {
    gas: GasConfig,
    probability: f64,
}

#[derive(Serialize)]
struct SpecTableJson<'a> {
    params: &'a SpecParams,
    partition_value: f64,
    n_entries: usize,
    entries: Vec<EntryJson>,
}

/// Tolerance for the agreement of the point and cycle-product forms.
pub const FORM_TOLERANCE: f64 = 1e-12;

/// Builds the specification table, checking that the point-Hamiltonian form
/// and the cycle-product form agree to [`FORM_TOLERANCE`] on every entry.
pub fn specification(
    env: &Environment,
    lam: &IntBox,
    xi: &BoundarySpec,
    alpha: f64,
    v: &Potential,
    max_points: usize,
) -> Result<SpecTable> {
    xi.check(env)?;
    let space = Arc::new(cycle_space(env, lam, alpha, v, max_points)?);
    specification_on(space, lam, xi, alpha, v)
}

/// As [`specification`], reusing a compiled cycle space of `Λ`.
pub fn specification_on(
    space: Arc<CycleSpace>,
    lam: &IntBox,
    xi: &BoundarySpec,
    alpha: f64,
    v: &Potential,
) -> Result<SpecTable> {
    let boundary = boundary_cycles(xi, lam);
    let free = free_mask(&space, &boundary);
    let n = space.points().len();
    let pts = space.points();
    let mut jump = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            jump[i * n + j] = v.eval_site(&pts[j].site.delta(&pts[i].site));
        }
    }
    let boundary_energy: f64 = boundary.iter().map(|c| c.energy_in(v, lam)).sum();

    let mut flat = Vec::new();
    let mut offsets = vec![0u32];
    let mut product_w = Vec::new();
    let mut point_w = Vec::new();
    let mut sigma: Vec<u8> = (0..n as u8).collect();
    for_each_state(&space, free, &mut |state| {
        let mut w = 1.0;
        for &i in state {
            w *= space.weight(i as usize);
            let cyc = space.local(i as usize);
            for k in 0..cyc.len() {
                sigma[cyc[k] as usize] = cyc[(k + 1) % cyc.len()];
            }
        }
        let h: f64 = (0..n).map(|i| jump[i * n + sigma[i] as usize]).sum::<f64>() + boundary_energy;
        point_w.push((-alpha * h).exp());
        for (i, s) in sigma.iter_mut().enumerate() {
            *s = i as u8;
        }
        product_w.push(w);
        flat.extend_from_slice(state);
        offsets.push(flat.len() as u32);
    });

    let z: f64 = product_w.iter().sum();
    let z_point: f64 = point_w.iter().sum();
    if !(z > 0.0 && z.is_finite() && z_point > 0.0) {
        return Err(Error::Consistency(format!(
            "partition value {z} is not a positive real"
        )));
    }
    let mut form_defect: f64 = 0.0;
    for (k, (a, b)) in product_w.iter().zip(&point_w).enumerate() {
        let (pa, pb) = (a / z, b / z_point);
        if pa.max(pb) > 0.0 {
            form_defect = form_defect.max((pa - pb).abs() / pa.max(pb));
        }
        if (pa - pb).abs() > FORM_TOLERANCE * pa.max(pb) {
            return Err(Error::Consistency(format!(
                "entry {k}: cycle-product probability {pa} differs from point-Hamiltonian probability {pb}"
            )));
        }
    }

    let mut order: Vec<usize> = (0..product_w.len()).collect();
    let state = |k: usize| &flat[offsets[k] as usize..offsets[k + 1] as usize];
    order.sort_by(|&a, &b| {
        product_w[b]
            .total_cmp(&product_w[a])
            .then_with(|| state(a).cmp(state(b)))
    });
    let mut sflat = Vec::with_capacity(flat.len());
    let mut soffsets = vec![0u32];
    let mut probs = Vec::with_capacity(order.len());
    for &k in &order {
        sflat.extend_from_slice(state(k));
        soffsets.push(sflat.len() as u32);
        probs.push(product_w[k] / z);
    }
    Ok(SpecTable {
        space,
        boundary,
        flat: sflat,
        offsets: soffsets,
        probs,
        partition_value: z,
        form_defect,
        params: SpecParams {
            alpha,
            potential: v.clone(),
            lambda: lam.clone(),
            xi_digest: xi.digest(),
        },
    })
}

impl SpecTable {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn space(&self) -> &Arc<CycleSpace> {
        &self.space
    }

    pub fn boundary(&self) -> &[Cycle] {
        &self.boundary
    }

    pub fn params(&self) -> &SpecParams {
        &self.params
    }

    /// `Z^ξ_{θ,Λ}` in the cycle-product normalization.
    pub fn partition_value(&self) -> f64 {
        self.partition_value
    }

    /// Largest relative difference between the point-Hamiltonian and
    /// cycle-product probabilities of an entry.
    pub fn form_defect(&self) -> f64 {
        self.form_defect
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn probability(&self, k: usize) -> f64 {
        self.probs[k]
    }

    /// The free cycles of entry `k` as indices into [`SpecTable::space`].
    pub fn state(&self, k: usize) -> &[u32] {
        &self.flat[self.offsets[k] as usize..self.offsets[k + 1] as usize]
    }

    /// Entry `k` as a gas, boundary cycles included.
    pub fn gas(&self, k: usize) -> GasConfig {
        GasConfig::new(
            self.boundary
                .iter()
                .cloned()
                .chain(self.state(k).iter().map(|&i| self.space.cycle(i as usize))),
        )
        .expect("table entries are valid gases")
    }

    pub fn entries(&self) -> impl Iterator<Item = (GasConfig, f64)> + '_ {
        (0..self.len()).map(|k| (self.gas(k), self.probs[k]))
    }

    /// Map from sorted free-cycle index lists to entry positions.
    pub fn index(&self) -> HashMap<Vec<u32>, usize> {
        (0..self.len()).map(|k| (self.state(k).to_vec(), k)).collect()
    }

    /// The sorted free-cycle index list of `gas`, if every non-boundary cycle
    /// of it belongs to the space.
    pub fn state_key(&self, gas: &GasConfig) -> Option<Vec<u32>> {
        let mut key = Vec::new();
        for c in gas.cycles() {
            if self.boundary.contains(c) {
                continue;
            }
            key.push(self.space.index_of(c)? as u32);
        }
        key.sort_unstable();
        Some(key)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = SpecTableJson {
            params: &self.params,
            partition_value: self.partition_value,
            n_entries: self.len(),
            entries: self
                .entries()
                .map(|(gas, probability)| EntryJson { gas, probability })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Largest relative defect of `G(η) w(γ) = G(η + γ)` over all entries `η`
    /// and cycles `γ` compatible with `η` and the boundary.
    pub fn detailed_balance_defect(&self) -> f64 {
        let index = self.index();
        let free = free_mask(&self.space, &self.boundary);
        let mut worst: f64 = 0.0;
        let mut key = Vec::new();
        for k in 0..self.len() {
            let used = self
                .state(k)
                .iter()
                .fold(0u64, |m, &i| m | self.space.mask(i as usize));
            for g in 0..self.space.len() {
                let mg = self.space.mask(g);
                if mg & !free != 0 || mg & used != 0 {
                    continue;
                }
                key.clear();
                key.extend_from_slice(self.state(k));
                key.push(g as u32);
                key.sort_unstable();
                let lhs = self.probs[k] * self.space.weight(g);
                let rhs = index.get(&key).map_or(0.0, |&j| self.probs[j]);
                let scale = lhs.abs().max(rhs.abs());
                if scale > 0.0 {
                    worst = worst.max((lhs - rhs).abs() / scale);
                }
            }
        }
        worst
    }
}

/// Inverse-CDF sampler over the entries of a table in serialized order.
#[derive(Clone, Debug)]
pub struct ExactSampler {
    cdf: Vec<f64>,
}

impl ExactSampler {
    pub fn new(table: &SpecTable) -> Self {
        let mut acc = 0.0;
        let cdf = table
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        ExactSampler { cdf }
    }

    /// Entry position for a uniform variate `u ∈ [0, 1)`.
    pub fn pick(&self, u: f64) -> usize {
        let total = *self.cdf.last().expect("tables are nonempty");
        let k = self.cdf.partition_point(|&c| c <= u * total);
        k.min(self.cdf.len() - 1)
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        self.pick(rng.random::<f64>())
    }
}

/// One draw from the table, deterministic in `seed`.
pub fn sample_exact(table: &SpecTable, seed: u64) -> GasConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    table.gas(ExactSampler::new(table).draw(&mut rng))
}

/// `n` draws (as entry positions) from one seeded stream.
pub fn sample_exact_many(table: &SpecTable, n: usize, seed: u64) -> Vec<usize> {
    let sampler = ExactSampler::new(table);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sampler.draw(&mut rng)).collect()
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!(
            "alpha = {alpha} must be positive and finite"
        )));
    }
    Ok(())
}

pub(crate) fn check_dim(env: &Environment, v: &Potential) -> Result<()> {
    if env.dim() != v.dim() {
        return Err(Error::Parameter(format!(
            "potential dimension {} does not match environment dimension {}",
            v.dim(),
            env.dim()
        )));
    }
    Ok(())
}
