//! Damage scenarios: circular through-holes with sampling constraints.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point2;

/// Radius range of simulated holes, meters.
pub const MIN_RADIUS: f64 = 0.03;
pub const MAX_RADIUS: f64 = 0.05;
/// Clearance between a hole rim and the domain boundary, meters.
pub const BOUNDARY_MARGIN: f64 = 0.05;
/// Minimum gap between the rims of two holes, meters.
pub const PAIR_GAP: f64 = 0.01;
/// Sides of the polygon approximating a hole boundary in reference meshes.
pub const HOLE_SIDES: usize = 24;
/// Cap on rejection-sampling attempts per scenario.
pub const SAMPLE_ATTEMPT_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub center: Point2,
    pub radius: f64,
}

/// A set of 1 to 3 non-overlapping holes, sorted by center x then y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageScenario {
    pub holes: Vec<Hole>,
}

impl DamageScenario {
    /// Builds a scenario in canonical hole order. Constraints are not
    /// checked here; call [`Self::validate`] for that.
    pub fn new(holes: Vec<Hole>) -> Self {
        let mut scenario = Self { holes };
        scenario.sort_canonical();
        scenario
    }

    pub fn hole_count(&self) -> usize {
        self.holes.len()
    }

    /// Checks radius range, boundary clearance, and pairwise separation
    /// against the sampling constraints for a domain of the given size.
    pub fn validate(&self, domain_size: f64) -> Result<()> {
        if self.holes.is_empty() || self.holes.len() > 3 {
            return Err(Error::InvalidConfig(format!(
                "hole count must be 1..=3, got {}",
                self.holes.len()
            )));
        }
        for h in &self.holes {
            if !(MIN_RADIUS..=MAX_RADIUS).contains(&h.radius) {
                return Err(Error::InvalidConfig(format!("radius {} out of range", h.radius)));
            }
            let lo = h.radius + BOUNDARY_MARGIN;
            let hi = domain_size - h.radius - BOUNDARY_MARGIN;
            let c = h.center;
            if !(c.x >= lo && c.x <= hi && c.y >= lo && c.y <= hi) {
                return Err(Error::HoleTooCloseToBoundary {
                    x: c.x,
                    y: c.y,
                    radius: h.radius,
                });
            }
        }
        for i in 0..self.holes.len() {
            for j in i + 1..self.holes.len() {
                let (a, b) = (&self.holes[i], &self.holes[j]);
                let need = a.radius + b.radius + PAIR_GAP;
                if a.center.dist(&b.center) < need {
                    return Err(Error::InvalidConfig(format!(
                        "holes {i} and {j} closer than the {PAIR_GAP} m rim gap"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sort_canonical(&mut self) {
        self.holes.sort_by(|a, b| {
            (a.center.x, a.center.y).partial_cmp(&(b.center.x, b.center.y)).unwrap()
        });
    }
}

/// Draws a random scenario. `forced_count` pins the hole count (used for
/// class-balanced dataset generation); otherwise the count is uniform in
/// 1..=3. Rejection sampling retries a hole that lands too close to an
/// accepted one, up to [`SAMPLE_ATTEMPT_CAP`] proposals.
pub fn sample_scenario(
    rng: &mut impl Rng,
    forced_count: Option<usize>,
    domain_size: f64,
) -> Result<DamageScenario> {
    let count = match forced_count {
        Some(c) => {
            if !(1..=3).contains(&c) {
                return Err(Error::InvalidConfig(format!("hole count {c} not in 1..=3")));
            }
            c
        }
        None => rng.gen_range(1..=3),
    };
    let mut holes: Vec<Hole> = Vec::with_capacity(count);
    let mut attempts = 0;
    while holes.len() < count {
        if attempts >= SAMPLE_ATTEMPT_CAP {
            return Err(Error::SamplingExhausted(SAMPLE_ATTEMPT_CAP));
        }
        attempts += 1;
        let radius = rng.gen_range(MIN_RADIUS..MAX_RADIUS);
        let lo = radius + BOUNDARY_MARGIN;
        let hi = domain_size - radius - BOUNDARY_MARGIN;
        let center = Point2::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi));
        let ok = holes
            .iter()
            .all(|h| h.center.dist(&center) >= h.radius + radius + PAIR_GAP);
        if ok {
            holes.push(Hole { center, radius });
        }
    }
    let mut scenario = DamageScenario { holes };
    scenario.sort_canonical();
    debug_assert!(scenario.validate(domain_size).is_ok());
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_seed_same_scenario() {
        let a = sample_scenario(&mut ChaCha8Rng::seed_from_u64(9), None, 0.9).unwrap();
        let b = sample_scenario(&mut ChaCha8Rng::seed_from_u64(9), None, 0.9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forced_count_respected() {
        for count in 1..=3 {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let s = sample_scenario(&mut rng, Some(count), 0.9).unwrap();
            assert_eq!(s.hole_count(), count);
        }
    }

    #[test]
    fn bulk_draws_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10_000 {
            let s = sample_scenario(&mut rng, None, 0.9).unwrap();
            s.validate(0.9).unwrap();
            for w in s.holes.windows(2) {
                assert!(
                    (w[0].center.x, w[0].center.y) <= (w[1].center.x, w[1].center.y),
                    "holes not in canonical order"
                );
            }
        }
    }

    #[test]
    fn rejects_overlapping_holes() {
        let s = DamageScenario {
            holes: vec![
                Hole { center: Point2::new(0.4, 0.4), radius: 0.04 },
                Hole { center: Point2::new(0.45, 0.4), radius: 0.04 },
            ],
        };
        assert!(s.validate(0.9).is_err());
    }
}
