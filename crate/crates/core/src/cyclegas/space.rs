use std::collections::HashMap;

use smallvec::SmallVec;

use super::Cycle;
use crate::environment::PointId;
use crate::error::{Error, Result};
use crate::potential::Potential;

type LocalCycle = SmallVec<[u8; 12]>;

/// A finite list of cycles over at most 64 points, stored compactly: each
/// cycle is a sequence of local point indices with a precomputed point
/// bitmask and weight.
#[derive(Clone, Debug)]
pub struct CycleSpace {
    points: Vec<PointId>,
    flat: Vec<u8>,
    offsets: Vec<u32>,
    masks: Vec<u64>,
    weights: Vec<f64>,
    lookup: HashMap<LocalCycle, u32>,
}

impl CycleSpace {
    pub const MAX_POINTS: usize = 64;

    /// Every cycle over `points` (the set `Γ` of a finite volume), with
    /// weights `exp(−α H(γ))`. `points` must be sorted and distinct.
    ///
    /// Cycles are produced in depth-first order from their smallest point, so
    /// each appears once, in canonical rotation.
    pub fn enumerate(points: Vec<PointId>, alpha: f64, v: &Potential) -> Result<Self> {
        check_points(&points)?;
        let n = points.len();
        let mut jump = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                jump[i * n + j] = v.eval_site(&points[j].site.delta(&points[i].site));
            }
        }
        let mut space = CycleSpace::with_points(points);
        let mut path: Vec<u8> = Vec::with_capacity(n);
        for start in 0..n {
            path.clear();
            path.push(start as u8);
            space.extend(&mut path, 1u64 << start, 0.0, &jump, alpha);
        }
        Ok(space)
    }

    fn extend(&mut self, path: &mut Vec<u8>, used: u64, open_energy: f64, jump: &[f64], alpha: f64) {
        let n = self.points.len();
        let start = path[0] as usize;
        let last = *path.last().unwrap() as usize;
        for next in start + 1..n {
            if used & (1u64 << next) != 0 {
                continue;
            }
            let e = open_energy + jump[last * n + next];
            path.push(next as u8);
            let closed = e + jump[next * n + start];
            self.push_local(path, used | (1u64 << next), (-alpha * closed).exp());
            self.extend(path, used | (1u64 << next), e, jump, alpha);
            path.pop();
        }
    }

    /// A space over an explicit list of weighted cycles.
    pub fn from_weighted(cycles: Vec<(Cycle, f64)>) -> Result<Self> {
        let mut points: Vec<PointId> = cycles
            .iter()
            .flat_map(|(c, _)| c.points().iter().cloned())
            .collect();
        points.sort();
        points.dedup();
        check_points(&points)?;
        let mut space = CycleSpace::with_points(points);
        for (c, w) in cycles {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Parameter(format!("weight {w} of {c:?} must be positive")));
            }
            let local: LocalCycle = c
                .points()
                .iter()
                .map(|p| space.local_index(p).unwrap() as u8)
                .collect();
            if space.lookup.contains_key(&local) {
                return Err(Error::Parameter(format!("duplicate cycle {c:?}")));
            }
            let mask = local.iter().fold(0u64, |m, &i| m | (1u64 << i));
            space.push_local(&local, mask, w);
        }
        Ok(space)
    }

    fn with_points(points: Vec<PointId>) -> Self {
        CycleSpace {
            points,
            flat: Vec::new(),
            offsets: vec![0],
            masks: Vec::new(),
            weights: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    fn push_local(&mut self, local: &[u8], mask: u64, weight: f64) {
        let idx = self.masks.len() as u32;
        self.flat.extend_from_slice(local);
        self.offsets.push(self.flat.len() as u32);
        self.masks.push(mask);
        self.weights.push(weight);
        self.lookup.insert(SmallVec::from_slice(local), idx);
    }

    pub fn points(&self) -> &[PointId] {
        &self.points
    }

    pub fn local_index(&self, p: &PointId) -> Option<usize> {
        self.points.binary_search(p).ok()
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn local(&self, i: usize) -> &[u8] {
        &self.flat[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    pub fn cycle(&self, i: usize) -> Cycle {
        Cycle {
            points: self
                .local(i)
                .iter()
                .map(|&k| self.points[k as usize].clone())
                .collect(),
        }
    }

    pub fn mask(&self, i: usize) -> u64 {
        self.masks[i]
    }

    pub fn masks(&self) -> &[u64] {
        &self.masks
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// A copy with the weight of cycle `i` multiplied by `factor`.
    pub fn with_scaled_weight(&self, i: usize, factor: f64) -> CycleSpace {
        let mut out = self.clone();
        out.weights[i] *= factor;
        out
    }

    /// Bitmask of the given points; `None` if one is not in the space.
    pub fn mask_of<'a>(&self, pts: impl IntoIterator<Item = &'a PointId>) -> Option<u64> {
        pts.into_iter()
            .try_fold(0u64, |m, p| Some(m | (1u64 << self.local_index(p)?)))
    }

    /// Index of the cycle given by local point indices in canonical rotation.
    pub fn index_of_local(&self, local: &[u8]) -> Option<usize> {
        self.lookup.get(local).map(|&i| i as usize)
    }

    pub fn index_of(&self, c: &Cycle) -> Option<usize> {
        let local: Option<LocalCycle> = c
            .points()
            .iter()
            .map(|p| self.local_index(p).map(|i| i as u8))
            .collect();
        self.lookup.get(&local?).map(|&i| i as usize)
    }
}

fn check_points(points: &[PointId]) -> Result<()> {
    if points.len() > CycleSpace::MAX_POINTS {
        return Err(Error::Size {
            what: "cycle space",
            count: points.len(),
            cap: CycleSpace::MAX_POINTS,
        });
    }
    if points.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(
            "cycle space points must be sorted and distinct".into(),
        ));
    }
    Ok(())
}
