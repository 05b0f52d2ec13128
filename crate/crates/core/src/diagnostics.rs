//! Sample statistics and the structural events used in the uniqueness
//! argument: `K_f`, separating sets and open paths of cycles.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cyclegas::{neighbors, Cycle, GasConfig};
use crate::environment::{IntBox, Site};
use crate::error::{Error, Result};
use crate::exactgibbs::SpecTable;
use crate::potential::Potential;

/// Outcome of [`kf_event`].
#[derive(Clone, Debug, PartialEq)]
pub struct KfOutcome {
    pub holds: bool,
    pub violations: Vec<(Site, Cycle)>,
}

/// `K̂_f` restricted to `region`: every cycle through a site `x` of the
/// region has `H(γ) <= f(x)`.
pub fn kf_event(eta: &GasConfig, f: impl Fn(&Site) -> f64, v: &Potential, region: &IntBox) -> KfOutcome {
    let mut violations = Vec::new();
    for c in eta.cycles() {
        let h = c.energy(v);
        for x in c.sites() {
            if region.contains(x) && h > f(x) {
                violations.push((x.clone(), c.clone()));
            }
        }
    }
    KfOutcome {
        holds: violations.is_empty(),
        violations,
    }
}

/// Whether the site set `inside` separates `eta`: each cycle lies wholly
/// inside or wholly outside.
pub fn separates(inside: impl Fn(&Site) -> bool, eta: &GasConfig) -> bool {
    eta.cycles().all(|c| {
        let n_in = c.points().iter().filter(|p| inside(&p.site)).count();
        n_in == 0 || n_in == c.len()
    })
}

pub fn separates_pair(inside: impl Fn(&Site) -> bool + Copy, pair: (&GasConfig, &GasConfig)) -> bool {
    separates(inside, pair.0) && separates(inside, pair.1)
}

/// Result of [`separating_set_search`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Separation {
    /// The smallest separating box containing `Λ_n`.
    Found { delta: IntBox },
    /// No separating set of any shape containing `Λ_n` fits in the search
    /// box.
    NoneWithin,
    /// A separating set fits in the search box but no box does.
    Inconclusive { minimal_set_size: usize },
}

/// Closes `region` under absorbing cycles that straddle it; `widen` maps the
/// current region and a straddling cycle to the enlarged region.
fn close_under<R>(
    mut region: R,
    cycles: &[&Cycle],
    contains: impl Fn(&R, &Site) -> bool,
    widen: impl Fn(R, &Cycle) -> R,
) -> R {
    loop {
        let straddling = cycles.iter().find(|c| {
            let n_in = c.points().iter().filter(|p| contains(&region, &p.site)).count();
            n_in > 0 && n_in < c.len()
        });
        match straddling {
            Some(c) => region = widen(region, c),
            None => return region,
        }
    }
}

/// Looks for a separating box containing `Λ_n = [−n, n]^d` inside
/// `search_box`.
///
/// Every separating set containing `Λ_n` contains each cycle it meets, so
/// absorbing straddling cycles from `Λ_n` yields the smallest separating set
/// `S`, and absorbing their hulls yields the smallest separating box `B`.
pub fn separating_set_search(
    pair: (&GasConfig, &GasConfig),
    n: i64,
    search_box: &IntBox,
) -> Result<Separation> {
    let dim = search_box.dim();
    let lam_n = IntBox::centered(dim, n)?;
    if !lam_n.is_subset_of(search_box) {
        return Err(Error::Parameter(format!("Λ_{n} is not inside the search box")));
    }
    let cycles: Vec<&Cycle> = pair.0.cycles().chain(pair.1.cycles()).collect();
    let boxed = close_under(
        lam_n.clone(),
        &cycles,
        |b, x| b.contains(x),
        |b, c| c.points().iter().fold(b, |acc, p| acc.hull_with(&p.site)),
    );
    if boxed.is_subset_of(search_box) {
        return Ok(Separation::Found { delta: boxed });
    }
    let extra = close_under(
        BTreeSet::<Site>::new(),
        &cycles,
        |set, x| lam_n.contains(x) || set.contains(x),
        |mut set, c| {
            set.extend(c.points().iter().map(|p| p.site.clone()));
            set
        },
    );
    if extra.iter().all(|x| search_box.contains(x)) {
        let outside_lam = extra.iter().filter(|x| !lam_n.contains(x)).count();
        Ok(Separation::Inconclusive {
            minimal_set_size: lam_n.volume() as usize + outside_lam,
        })
    } else {
        Ok(Separation::NoneWithin)
    }
}

/// `D(n)`: a path of `n` distinct non-trivial cycles of `η ∪ η'`, each a
/// neighbour of the next, whose first cycle visits `x0`. Exhaustive
/// depth-first search over simple paths.
pub fn open_path_d(pair: (&GasConfig, &GasConfig), x0: &Site, n: usize) -> bool {
    if n == 0 {
        return true;
    }
    let open: Vec<&Cycle> = pair
        .0
        .cycles()
        .chain(pair.1.cycles())
        .filter(|c| !c.is_trivial())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let adj: Vec<Vec<usize>> = (0..open.len())
        .map(|i| {
            (0..open.len())
                .filter(|&j| j != i && neighbors(open[i], open[j]))
                .collect()
        })
        .collect();
    fn walk(adj: &[Vec<usize>], at: usize, used: &mut Vec<bool>, left: usize) -> bool {
        if left == 0 {
            return true;
        }
        for &j in &adj[at] {
            if !used[j] {
                used[j] = true;
                if walk(adj, j, used, left - 1) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    let mut used = vec![false; open.len()];
    (0..open.len()).any(|i| {
        if !open[i].sites().contains(x0) {
            return false;
        }
        used[i] = true;
        let found = walk(&adj, i, &mut used, n - 1);
        used[i] = false;
        found
    })
}

/// Aggregate cycle statistics over a stream of samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub n_samples: u64,
    pub n_cycles: u64,
    /// Cycle length in points.
    pub histogram: BTreeMap<usize, u64>,
    /// Number of distinct sites visited.
    pub site_histogram: BTreeMap<usize, u64>,
    pub n_nontrivial: u64,
    /// Samples containing at least one non-trivial cycle.
    pub samples_with_nontrivial: u64,
    pub max_jump: f64,
    pub max_diameter: f64,
}

impl CycleStats {
    pub fn new() -> Self {
        CycleStats::default()
    }

    pub fn add(&mut self, gas: &GasConfig) {
        self.n_samples += 1;
        let mut any = false;
        for c in gas.cycles() {
            self.n_cycles += 1;
            *self.histogram.entry(c.len()).or_insert(0) += 1;
            *self.site_histogram.entry(c.sites().len()).or_insert(0) += 1;
            if !c.is_trivial() {
                self.n_nontrivial += 1;
                any = true;
            }
            self.max_jump = self.max_jump.max(c.max_jump());
            self.max_diameter = self.max_diameter.max(c.projected_diameter());
        }
        if any {
            self.samples_with_nontrivial += 1;
        }
    }

    /// Order-insensitive merge of two aggregates.
    pub fn merge(&mut self, other: &CycleStats) {
        self.n_samples += other.n_samples;
        self.n_cycles += other.n_cycles;
        for (k, v) in &other.histogram {
            *self.histogram.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &other.site_histogram {
            *self.site_histogram.entry(*k).or_insert(0) += v;
        }
        self.n_nontrivial += other.n_nontrivial;
        self.samples_with_nontrivial += other.samples_with_nontrivial;
        self.max_jump = self.max_jump.max(other.max_jump);
        self.max_diameter = self.max_diameter.max(other.max_diameter);
    }

    /// Fraction of cycles that are non-trivial (0 without cycles).
    pub fn frac_nontrivial(&self) -> f64 {
        if self.n_cycles == 0 {
            0.0
        } else {
            self.n_nontrivial as f64 / self.n_cycles as f64
        }
    }

    pub fn frac_samples_nontrivial(&self) -> f64 {
        if self.n_samples == 0 {
            0.0
        } else {
            self.samples_with_nontrivial as f64 / self.n_samples as f64
        }
    }

    /// `length,count` rows sorted by length.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("length,count\n");
        for (k, v) in &self.histogram {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        v["frac_nontrivial"] = self.frac_nontrivial().into();
        v["frac_samples_nontrivial"] = self.frac_samples_nontrivial().into();
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

pub fn cycle_stats<'a>(samples: impl IntoIterator<Item = &'a GasConfig>) -> CycleStats {
    let mut s = CycleStats::new();
    for g in samples {
        s.add(g);
    }
    s
}

/// `½ Σ |p̂ − p|` for counts indexed by table entry.
pub fn tv_distance_counts(counts: &[u64], table: &SpecTable) -> Result<f64> {
    if counts.len() != table.len() {
        return Err(Error::ContractViolation(format!(
            "{} counts for a table of {} entries",
            counts.len(),
            table.len()
        )));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::Parameter("no samples".into()));
    }
    Ok(0.5
        * counts
            .iter()
            .zip(table.probabilities())
            .map(|(&c, &p)| (c as f64 / n as f64 - p).abs())
            .sum::<f64>())
}

/// Total-variation distance between an empirical law and the exact table.
/// Mass on a state outside the table is a contract violation.
pub fn tv_distance(empirical: &BTreeMap<GasConfig, u64>, table: &SpecTable) -> Result<f64> {
    let index = table.index();
    let mut counts = vec![0u64; table.len()];
    for (gas, &c) in empirical {
        let k = table
            .boundary()
            .iter()
            .all(|b| gas.contains(b))
            .then(|| table.state_key(gas))
            .flatten()
            .and_then(|key| index.get(&key));
        match k {
            Some(&k) => counts[k] += c,
            None => {
                return Err(Error::ContractViolation(format!(
                    "sampled state {gas:?} is not in the exact support"
                )))
            }
        }
    }
    tv_distance_counts(&counts, table)
}
