//! Small bundled instances with exactly enumerable specifications, shared
//! by the verification suite, the CLI and the benches.

use std::sync::Arc;

use crate::cyclegas::{Cycle, GasConfig};
use crate::environment::{Environment, IntBox, PointId, Site};
use crate::error::Result;
use crate::exactgibbs::{specification, BoundarySpec, SpecTable, DEFAULT_MAX_POINTS};
use crate::lossnet::PerfectSampler;
use crate::potential::Potential;

/// A finite-volume instance: environment, volume, boundary and weights.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub env: Environment,
    pub lambda: IntBox,
    pub xi: BoundarySpec,
    pub alpha: f64,
    pub potential: Potential,
}

impl Fixture {
    pub fn table(&self) -> Result<SpecTable> {
        specification(
            &self.env,
            &self.lambda,
            &self.xi,
            self.alpha,
            &self.potential,
            DEFAULT_MAX_POINTS,
        )
    }

    pub fn sampler(&self) -> Result<PerfectSampler> {
        PerfectSampler::for_instance(
            &self.env,
            &self.lambda,
            &self.xi,
            self.alpha,
            &self.potential,
            DEFAULT_MAX_POINTS,
        )
    }

    /// The sampler and table over one shared cycle space.
    pub fn sampler_and_table(&self) -> Result<(PerfectSampler, SpecTable)> {
        let sampler = self.sampler()?;
        let table = crate::exactgibbs::specification_on(
            Arc::clone(sampler.space()),
            &self.lambda,
            &self.xi,
            self.alpha,
            &self.potential,
        )?;
        Ok((sampler, table))
    }
}

fn build(
    name: &'static str,
    dim: usize,
    bbox: Vec<(i64, i64)>,
    theta: &[(&[i64], u32)],
    lambda: Vec<(i64, i64)>,
    xi: &[&[(&[i64], u32)]],
    alpha: f64,
) -> Fixture {
    let env = Environment::from_theta(
        IntBox::new(bbox).expect("fixture box"),
        theta.iter().map(|(s, m)| (Site::new(s.iter().copied()), *m)),
        0.25,
        0,
    )
    .expect("fixture environment");
    let cycles = xi.iter().map(|c| {
        Cycle::new(
            c.iter()
                .map(|(s, t)| PointId::new(Site::new(s.iter().copied()), *t))
                .collect(),
        )
        .expect("fixture boundary cycle")
    });
    Fixture {
        name,
        env,
        lambda: IntBox::new(lambda).expect("fixture volume"),
        xi: BoundarySpec::new(GasConfig::new(cycles).expect("fixture boundary")),
        alpha,
        potential: Potential::Quadratic { dim },
    }
}

/// The oracle fixtures: dimensions 1 and 2, two to six points, identity
/// and straddling boundaries, `α ∈ {0.5, 1, 2}`.
pub fn oracle_fixtures() -> Vec<Fixture> {
    vec![
        build(
            "pair-d1",
            1,
            vec![(0, 1)],
            &[(&[0], 1), (&[1], 1)],
            vec![(0, 1)],
            &[],
            1.0,
        ),
        build(
            "stacked-d1",
            1,
            vec![(0, 2)],
            &[(&[0], 2), (&[1], 1), (&[2], 1)],
            vec![(0, 2)],
            &[],
            0.5,
        ),
        build(
            "square-d2",
            2,
            vec![(0, 1), (0, 1)],
            &[(&[0, 0], 1), (&[1, 0], 1), (&[0, 1], 1), (&[1, 1], 1)],
            vec![(0, 1), (0, 1)],
            &[],
            1.0,
        ),
        build(
            "stacked-d2",
            2,
            vec![(0, 1), (0, 1)],
            &[(&[0, 0], 2), (&[1, 0], 1)],
            vec![(0, 1), (0, 1)],
            &[],
            2.0,
        ),
        build(
            "straddle-d1",
            1,
            vec![(0, 3)],
            &[(&[0], 2), (&[1], 1), (&[2], 1), (&[3], 1)],
            vec![(0, 2)],
            &[&[(&[2], 1), (&[3], 1)]],
            1.0,
        ),
        build(
            "straddle-d2",
            2,
            vec![(0, 2), (0, 1)],
            &[
                (&[0, 0], 1),
                (&[1, 0], 1),
                (&[0, 1], 1),
                (&[1, 1], 1),
                (&[2, 1], 1),
            ],
            vec![(0, 1), (0, 1)],
            &[&[(&[1, 1], 1), (&[2, 1], 1)]],
            0.5,
        ),
        build(
            "line6-d1",
            1,
            vec![(0, 5)],
            &[(&[0], 1), (&[1], 1), (&[2], 1), (&[3], 1), (&[4], 1), (&[5], 1)],
            vec![(0, 5)],
            &[],
            2.0,
        ),
    ]
}

/// Looks a fixture up by name.
pub fn fixture(name: &str) -> Option<Fixture> {
    oracle_fixtures().into_iter().find(|f| f.name == name)
}
