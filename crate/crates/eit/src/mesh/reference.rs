//! Fine unstructured meshes used to simulate measurement data.
//!
//! The generator triangulates a point cloud built from three layers: a
//! boundary loop with electrode endpoints at exact ninth-multiples and
//! randomly perturbed subdivision points between them, hole polygons
//! (regular 24-gons with a sub-nanometer radial jitter that breaks exact
//! cocircularity), and a jittered interior grid. Keep-out bands around the
//! boundary and hole polygons guarantee every constraint edge satisfies the
//! Gabriel condition (its diametral disk is empty), so boundary and hole
//! edges appear in the Delaunay triangulation without any edge-recovery
//! pass. Triangles whose centroid falls inside a hole polygon are removed.
//!
//! The random draws are packaged in [`ReferencePerturbations`] so the
//! pristine and damaged meshes of one measurement pair can share them:
//! their nodes then coincide everywhere away from the holes, while both
//! still differ structurally from the coarse reconstruction mesh.

use rand::Rng;

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::geom::{dist_point_segment, point_in_polygon, Point2};
use crate::mesh::delaunay::Triangulation;
use crate::mesh::Mesh;
use crate::scenario::{DamageScenario, HOLE_SIDES};

/// Subdivision of each ninth-of-a-side interval (4 sub-edges of ~0.025 m).
const SUBDIV: usize = 4;
/// Subdivision-point jitter as a fraction of the interval length.
const RATIO_JITTER: f64 = 0.01;
/// Interior grid cells per axis (spacing 0.02 m on the 0.9 m panel).
const GRID_CELLS: usize = 45;
/// Grid jitter as a fraction of the grid spacing.
const GRID_JITTER: f64 = 0.3;
/// Interior points keep this distance from the outer boundary, as a
/// fraction of the domain size (0.015 m on the 0.9 m panel).
const BOUNDARY_KEEPOUT_FRAC: f64 = 1.0 / 60.0;
/// Interior points keep this absolute distance from hole polygon edges, m.
const HOLE_KEEPOUT: f64 = 0.008;
/// Radial jitter of hole polygon vertices, m.
const HOLE_VERTEX_JITTER: f64 = 1e-9;
/// Accepted element-count window for generated reference meshes.
const ELEMENT_RANGE: std::ops::RangeInclusive<usize> = 2500..=5000;

/// The random draws of one reference-mesh build, sampled independently of
/// the damage geometry.
#[derive(Debug, Clone)]
pub struct ReferencePerturbations {
    /// Per boundary interval, `SUBDIV - 1` increasing subdivision ratios.
    boundary_ratios: Vec<f64>,
    /// Per interior grid candidate, jitter in units of the grid spacing.
    grid_jitter: Vec<(f64, f64)>,
}

impl ReferencePerturbations {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let mut boundary_ratios = Vec::with_capacity(4 * 9 * (SUBDIV - 1));
        for _ in 0..4 * 9 {
            for i in 1..SUBDIV {
                let nominal = i as f64 / SUBDIV as f64;
                boundary_ratios.push(nominal + RATIO_JITTER * rng.gen_range(-1.0..1.0));
            }
        }
        let grid_jitter = (0..GRID_CELLS * GRID_CELLS)
            .map(|_| {
                (
                    GRID_JITTER * rng.gen_range(-1.0..1.0),
                    GRID_JITTER * rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        Self { boundary_ratios, grid_jitter }
    }
}

/// Jittered regular polygon around one hole; the jitter is orders of
/// magnitude above predicate roundoff and orders below every geometric
/// tolerance.
fn hole_polygon(center: Point2, radius: f64, rng: &mut impl Rng) -> Vec<Point2> {
    (0..HOLE_SIDES)
        .map(|i| {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / HOLE_SIDES as f64;
            let r = radius + HOLE_VERTEX_JITTER * rng.gen_range(-1.0..1.0);
            Point2::new(center.x + r * theta.cos(), center.y + r * theta.sin())
        })
        .collect()
}

/// Builds a fine mesh; `scenario: None` gives the pristine panel. Hole
/// polygon jitter is drawn from `rng` (after the perturbations, so pristine
/// and damaged builds from one stream stay aligned).
pub fn reference_mesh_with(
    scenario: Option<&DamageScenario>,
    config: &SimConfig,
    perturbations: &ReferencePerturbations,
    rng: &mut impl Rng,
) -> Result<Mesh> {
    config.validate()?;
    if config.n_electrodes != 16 {
        return Err(Error::InvalidConfig(format!(
            "reference mesh supports 16 electrodes, got {}",
            config.n_electrodes
        )));
    }
    let d = config.domain_size;
    if let Some(s) = scenario {
        s.validate(d)?;
    }

    // Boundary loop, counterclockwise from the origin corner. Each side has
    // 9 intervals of d/9 with electrode endpoints exact, each subdivided at
    // the perturbed ratios.
    let param_to_point = |side: usize, t: f64| -> Point2 {
        match side {
            0 => Point2::new(t, 0.0),
            1 => Point2::new(d, t),
            2 => Point2::new(d - t, d),
            _ => Point2::new(0.0, d - t),
        }
    };
    let mut points: Vec<Point2> = Vec::new();
    let mut ratio_iter = perturbations.boundary_ratios.iter();
    for side in 0..4 {
        for interval in 0..9 {
            let t0 = interval as f64 * d / 9.0;
            let t1 = (interval + 1) as f64 * d / 9.0;
            points.push(param_to_point(side, t0));
            for _ in 1..SUBDIV {
                let r = *ratio_iter.next().expect("ratio pool exhausted");
                points.push(param_to_point(side, t0 + r * (t1 - t0)));
            }
        }
    }
    let n_boundary = points.len();
    debug_assert_eq!(n_boundary, 4 * 9 * SUBDIV);

    // Hole polygons.
    let holes: Vec<Vec<Point2>> = match scenario {
        Some(s) => s.holes.iter().map(|h| hole_polygon(h.center, h.radius, rng)).collect(),
        None => Vec::new(),
    };
    for poly in &holes {
        points.extend_from_slice(poly);
    }

    // Jittered interior grid with keep-out bands. Jitter is consumed for
    // every candidate so the accepted points do not depend on the holes.
    let hole_meta = scenario.map(|s| s.holes.as_slice()).unwrap_or(&[]);
    let keepout = BOUNDARY_KEEPOUT_FRAC * d;
    let h = d / GRID_CELLS as f64;
    for iy in 0..GRID_CELLS {
        for ix in 0..GRID_CELLS {
            let (jx, jy) = perturbations.grid_jitter[iy * GRID_CELLS + ix];
            let p = Point2::new((ix as f64 + 0.5 + jx) * h, (iy as f64 + 0.5 + jy) * h);
            if p.x < keepout || p.x > d - keepout || p.y < keepout || p.y > d - keepout {
                continue;
            }
            let near_hole = holes.iter().zip(hole_meta).any(|(poly, hole)| {
                if p.dist(&hole.center) > hole.radius + HOLE_KEEPOUT + h {
                    return false;
                }
                point_in_polygon(p, poly)
                    || (0..poly.len()).any(|i| {
                        dist_point_segment(p, poly[i], poly[(i + 1) % poly.len()]) < HOLE_KEEPOUT
                    })
            });
            if !near_hole {
                points.push(p);
            }
        }
    }

    // Delaunay triangulation of the layered cloud.
    let mut tri = Triangulation::new(Point2::new(d / 2.0, d / 2.0), d);
    for &p in &points {
        tri.insert(p)
            .map_err(|e| Error::MeshGeneration(format!("triangulation failed: {e}")))?;
    }
    let all_tris = tri.triangles();

    // The keep-out construction must have produced every boundary and hole
    // edge; verify rather than assume.
    let mut edges = std::collections::HashSet::new();
    for &[a, b, c] in &all_tris {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    let expect_edge = |a: u32, b: u32| edges.contains(&(a.min(b), a.max(b)));
    for j in 0..n_boundary as u32 {
        let k = (j + 1) % n_boundary as u32;
        if !expect_edge(j, k) {
            return Err(Error::MeshGeneration(format!("boundary edge {j} not recovered")));
        }
    }
    let mut base = n_boundary as u32;
    for poly in &holes {
        let n = poly.len() as u32;
        for i in 0..n {
            if !expect_edge(base + i, base + (i + 1) % n) {
                return Err(Error::MeshGeneration("hole edge not recovered".into()));
            }
        }
        base += n;
    }

    // Cut out the hole interiors.
    let nodes = tri.points().to_vec();
    let elements: Vec<[u32; 3]> = all_tris
        .into_iter()
        .filter(|&[a, b, c]| {
            let (pa, pb, pc) = (nodes[a as usize], nodes[b as usize], nodes[c as usize]);
            let centroid = Point2::new((pa.x + pb.x + pc.x) / 3.0, (pa.y + pb.y + pc.y) / 3.0);
            !holes.iter().any(|poly| point_in_polygon(centroid, poly))
        })
        .collect();

    let boundary_edges: Vec<[u32; 2]> = (0..n_boundary as u32)
        .map(|j| [j, (j + 1) % n_boundary as u32])
        .collect();
    // Per side: 36 sub-edges; electrodes sit on intervals 1, 3, 5, 7 in
    // traversal order on every side (the partition is symmetric).
    let mut electrodes = Vec::with_capacity(16);
    for side in 0..4u32 {
        for e in 0..4u32 {
            let first = side * 36 + SUBDIV as u32 * (2 * e + 1);
            electrodes.push((0..SUBDIV as u32).map(|k| first + k).collect());
        }
    }

    let mesh = Mesh { nodes, elements, boundary_edges, electrodes };
    mesh.validate()?;
    if !ELEMENT_RANGE.contains(&mesh.n_elements()) {
        return Err(Error::MeshGeneration(format!(
            "reference mesh has {} elements, outside {:?}",
            mesh.n_elements(),
            ELEMENT_RANGE
        )));
    }
    Ok(mesh)
}

/// Damaged reference mesh from a seed.
pub fn reference_mesh(scenario: &DamageScenario, config: &SimConfig, seed: u64) -> Result<Mesh> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pert = ReferencePerturbations::sample(&mut rng);
    reference_mesh_with(Some(scenario), config, &pert, &mut rng)
}

/// Pristine reference mesh from a seed.
pub fn pristine_reference_mesh(config: &SimConfig, seed: u64) -> Result<Mesh> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pert = ReferencePerturbations::sample(&mut rng);
    reference_mesh_with(None, config, &pert, &mut rng)
}

/// The pristine/damaged mesh pair for one measurement cycle, sharing node
/// perturbations so they differ only around the holes.
pub fn reference_mesh_pair(
    scenario: &DamageScenario,
    config: &SimConfig,
    seed: u64,
) -> Result<(Mesh, Mesh)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pert = ReferencePerturbations::sample(&mut rng);
    let pristine = reference_mesh_with(None, config, &pert, &mut rng)?;
    // A scenario without holes (a no-damage measurement cycle) yields two
    // identical pristine builds.
    let damage = (!scenario.holes.is_empty()).then_some(scenario);
    let damaged = reference_mesh_with(damage, config, &pert, &mut rng)?;
    Ok((pristine, damaged))
}

/// Area of the regular polygon inscribed in a circle of radius `r`.
pub fn inscribed_polygon_area(r: f64, sides: usize) -> f64 {
    0.5 * sides as f64 * r * r * (2.0 * std::f64::consts::PI / sides as f64).sin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Hole;

    fn config() -> SimConfig {
        SimConfig::default()
    }

    fn one_hole() -> DamageScenario {
        DamageScenario {
            holes: vec![Hole { center: Point2::new(0.45, 0.45), radius: 0.04 }],
        }
    }

    #[test]
    fn pristine_area_is_exact() {
        let mesh = pristine_reference_mesh(&config(), 3).unwrap();
        assert!((mesh.total_area() - 0.81).abs() < 1e-10, "area {}", mesh.total_area());
    }

    #[test]
    fn hole_area_matches_polygon() {
        let mesh = reference_mesh(&one_hole(), &config(), 4).unwrap();
        let expected = 0.81 - inscribed_polygon_area(0.04, HOLE_SIDES);
        assert!(
            (mesh.total_area() - expected).abs() < 1e-6,
            "area {} vs {expected}",
            mesh.total_area()
        );
    }

    #[test]
    fn element_count_on_expected_order() {
        let mesh = reference_mesh(&one_hole(), &config(), 5).unwrap();
        let n = mesh.n_elements();
        assert!((2500..=5000).contains(&n), "element count {n}");
    }

    #[test]
    fn no_centroid_inside_shrunk_hole_disks() {
        let scenario = DamageScenario {
            holes: vec![
                Hole { center: Point2::new(0.3, 0.3), radius: 0.05 },
                Hole { center: Point2::new(0.62, 0.62), radius: 0.03 },
            ],
        };
        let mesh = reference_mesh(&scenario, &config(), 6).unwrap();
        let apothem_frac = (std::f64::consts::PI / HOLE_SIDES as f64).cos();
        for c in mesh.element_centroids() {
            for h in &scenario.holes {
                let shrunk = h.radius * apothem_frac - 2.0 * HOLE_VERTEX_JITTER;
                assert!(c.dist(&h.center) >= shrunk, "centroid inside hole");
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = reference_mesh(&one_hole(), &config(), 7).unwrap();
        let b = reference_mesh(&one_hole(), &config(), 7).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = reference_mesh(&one_hole(), &config(), 8).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn pair_shares_nodes_away_from_holes() {
        let scenario = one_hole();
        let (pristine, damaged) = reference_mesh_pair(&scenario, &config(), 9).unwrap();
        let hole = &scenario.holes[0];
        let far: Vec<&Point2> = pristine
            .nodes
            .iter()
            .filter(|p| p.dist(&hole.center) > hole.radius + 0.03)
            .collect();
        let damaged_set: std::collections::HashSet<(u64, u64)> =
            damaged.nodes.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
        let mut missing = 0;
        for p in &far {
            if !damaged_set.contains(&(p.x.to_bits(), p.y.to_bits())) {
                missing += 1;
            }
        }
        assert_eq!(missing, 0, "{missing} far-field nodes differ between the pair");
        assert_ne!(pristine.fingerprint(), damaged.fingerprint());
    }

    #[test]
    fn electrode_lengths_and_validation() {
        let mesh = reference_mesh(&one_hole(), &config(), 10).unwrap();
        mesh.validate().unwrap();
        assert_eq!(mesh.electrodes.len(), 16);
        for l in 0..16 {
            assert!((mesh.electrode_length(l) - 0.1).abs() < 1e-12, "electrode {l}");
        }
    }

    #[test]
    fn three_holes_supported() {
        let scenario = DamageScenario {
            holes: vec![
                Hole { center: Point2::new(0.2, 0.2), radius: 0.03 },
                Hole { center: Point2::new(0.6, 0.25), radius: 0.045 },
                Hole { center: Point2::new(0.4, 0.66), radius: 0.05 },
            ],
        };
        let mesh = reference_mesh(&scenario, &config(), 11).unwrap();
        mesh.validate().unwrap();
        let poly_area: f64 =
            scenario.holes.iter().map(|h| inscribed_polygon_area(h.radius, HOLE_SIDES)).sum();
        assert!((mesh.total_area() - (0.81 - poly_area)).abs() < 1e-6);
    }
}
