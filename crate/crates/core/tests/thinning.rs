//! The birth-order thinning against the literal kept/deleted recursion, and
//! pathwise properties of the loss network.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use permgibbs_core::cyclegas::compatible;
use permgibbs_core::fixtures::oracle_fixtures;
use permgibbs_core::lossnet::{free_state, generate_marks, loss_network_state, thin_all};
use permgibbs_core::{Cycle, CycleSpace, MarkSet, PointId};
use proptest::prelude::*;

/// `K_n = {ζ ∉ D₀ : A₁(ζ) ⊆ D_{n−1}}`, `D_n = D₀ ∪ {ζ : A₁(ζ) ∩ K_n ≠ ∅}`,
/// iterated to the fixed point.
fn literal_kept(marks: &MarkSet, boundary: &[Cycle]) -> BTreeSet<usize> {
    let n = marks.len();
    let bpts: BTreeSet<&PointId> = boundary.iter().flat_map(|c| c.points()).collect();
    let d0: BTreeSet<usize> = (0..n)
        .filter(|&i| marks.cycle_of(i).points().iter().any(|p| bpts.contains(p)))
        .collect();
    let anc: Vec<Vec<usize>> = (0..n).map(|i| marks.first_generation(i)).collect();
    let mut deleted = d0.clone();
    let mut kept = BTreeSet::new();
    loop {
        let k: BTreeSet<usize> = (0..n)
            .filter(|i| !d0.contains(i) && anc[*i].iter().all(|a| deleted.contains(a)))
            .collect();
        let d: BTreeSet<usize> = d0
            .iter()
            .copied()
            .chain((0..n).filter(|&i| anc[i].iter().any(|a| k.contains(a))))
            .collect();
        if k == kept && d == deleted {
            return kept;
        }
        kept = k;
        deleted = d;
    }
}

fn line_cycle(pts: &[(i64, u32)]) -> Cycle {
    Cycle::new(pts.iter().map(|&(x, t)| PointId::new([x], t)).collect()).unwrap()
}

fn small_space() -> (Arc<CycleSpace>, Vec<Cycle>) {
    let s = CycleSpace::from_weighted(vec![
        (line_cycle(&[(0, 1), (1, 1)]), 0.8),
        (line_cycle(&[(1, 1), (2, 1)]), 1.1),
        (line_cycle(&[(2, 1), (3, 1)]), 0.5),
        (line_cycle(&[(0, 1), (1, 1), (2, 1)]), 0.3),
        (line_cycle(&[(3, 1), (4, 1)]), 0.9),
    ])
    .unwrap();
    (Arc::new(s), vec![line_cycle(&[(4, 1), (5, 1)])])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn thinning_matches_literal_recursion(seed in any::<u64>(), len in 1.0f64..12.0, with_boundary in any::<bool>()) {
        let (space, b) = small_space();
        let boundary = if with_boundary { b } else { Vec::new() };
        let marks = generate_marks(space, (-len, 0.0), seed).unwrap();
        let res = thin_all(&marks, &boundary).unwrap();
        prop_assert_eq!(&res.kept, &literal_kept(&marks, &boundary));
        prop_assert_eq!(res.kept.len() + res.deleted.len(), marks.len());
    }

    #[test]
    fn loss_network_is_dominated_by_free_process(seed in any::<u64>(), with_boundary in any::<bool>()) {
        let (space, b) = small_space();
        let boundary = if with_boundary { b } else { Vec::new() };
        let marks = generate_marks(space, (-8.0, 0.0), seed).unwrap();
        for t in marks.event_times() {
            let loss = loss_network_state(&marks, &boundary, t).unwrap();
            let free = free_state(&marks, t, &boundary);
            for c in loss.cycles() {
                prop_assert!(free.get(c).copied().unwrap_or(0) >= 1);
            }
            let cs: Vec<&Cycle> = loss.cycles().collect();
            for (i, a) in cs.iter().enumerate() {
                for c in &cs[i + 1..] {
                    prop_assert!(compatible(a, c));
                }
            }
        }
    }
}

#[test]
fn fixture_thinning_matches_literal_recursion() {
    for f in oracle_fixtures() {
        let s = f.sampler().unwrap();
        for seed in 0..40u64 {
            let marks = generate_marks(s.space().clone(), (-6.0, 0.0), seed).unwrap();
            let res = thin_all(&marks, s.boundary()).unwrap();
            assert_eq!(
                res.kept,
                literal_kept(&marks, s.boundary()),
                "{} seed {seed}",
                f.name
            );
        }
    }
}

/// Frequencies of an increasing event (some cycle through site 1) under the
/// loss network never exceed those under the free process on the same marks.
#[test]
fn increasing_event_frequency_is_dominated() {
    let (space, b) = small_space();
    let site = permgibbs_core::Site::from([1]);
    let mut counts = BTreeMap::from([("loss", 0u32), ("free", 0u32)]);
    for seed in 0..2000u64 {
        let marks = generate_marks(space.clone(), (-8.0, 0.0), seed).unwrap();
        let loss = loss_network_state(&marks, &b, 0.0).unwrap();
        let free = free_state(&marks, 0.0, &b);
        let hit_loss = loss.cycles().any(|c| c.sites().contains(&site));
        let hit_free = free.keys().any(|c| c.sites().contains(&site));
        assert!(!hit_loss || hit_free);
        *counts.get_mut("loss").unwrap() += u32::from(hit_loss);
        *counts.get_mut("free").unwrap() += u32::from(hit_free);
    }
    assert!(counts["loss"] <= counts["free"]);
}
