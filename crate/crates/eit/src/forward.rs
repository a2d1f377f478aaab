//! Complete-electrode-model forward solver.
//!
//! The weak form couples interior node potentials to electrode voltages
//! through a contact-impedance layer. For piecewise-linear elements the
//! block system is
//!
//! ```text
//! [ A_M + A_Z   A_W ] [ phi ]   [ 0 ]
//! [ A_W^T       A_D ] [ V   ] = [ I ]
//! ```
//!
//! where A_M is the conduction stiffness, A_Z/A_W/A_D come from closed-form
//! integration of the electrode boundary terms, and I holds the injected
//! currents. The matrix is singular with the all-ones null vector (only
//! potential differences are determined), so a rank-one penalty beta*e*e^T
//! on the electrode block picks the zero-mean-voltage representative
//! without touching any current balance.
//!
//! Electrode contributions are assembled in double-double so the row-sum
//! identities behind charge conservation hold to roughly 1e-32 instead of
//! the 1e-16 that one f64 rounding per entry would leave. Solutions are
//! refined to the same level, which is what lets recovered electrode
//! currents balance to better than one part in 1e12 of the drive.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::mesh::Mesh;
use crate::sparse::{dd_sum, Dd, EnvelopeCholesky, SparseSym, SymSparseBuilder};

/// Elements with less area than this are treated as degenerate.
const MIN_ELEMENT_AREA: f64 = 1e-12;

/// Refinement passes for every linear solve. Each pass contracts the error
/// by roughly cond * eps ~ 1e-8, so three passes reach the dd floor.
const REFINE_PASSES: usize = 3;

/// Conduction stiffness of one linear triangle: S_ij = sigma * (b_i b_j +
/// c_i c_j) / (4 A) with the usual shape-gradient coefficients.
pub fn local_stiffness(pts: &[Point2; 3], sigma: f64) -> [[f64; 3]; 3] {
    let [p0, p1, p2] = pts;
    let b = [p1.y - p2.y, p2.y - p0.y, p0.y - p1.y];
    let c = [p2.x - p1.x, p0.x - p2.x, p1.x - p0.x];
    let two_a = crate::geom::orient2d(*p0, *p1, *p2);
    let scale = sigma / (2.0 * two_a);
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = scale * (b[i] * b[j] + c[i] * c[j]);
        }
    }
    s
}

/// Assembled, penalized, factorized FEM system for one conductivity field.
pub struct SystemMatrix {
    k: SparseSym,
    chol: EnvelopeCholesky,
    /// Physical electrode rows (A_W^T | A_D), kept apart from the penalty
    /// so currents can be recovered from the solved potentials.
    electrode_rows: Vec<Vec<(usize, Dd)>>,
    n_nodes: usize,
    n_electrodes: usize,
    injection_current: f64,
}

/// Assemble and factor the forward system for `sigma` (one conductivity per
/// element). The penalty weight is the mean electrode self-admittance, so
/// the penalized block stays well scaled for any contact impedance.
pub fn assemble_system(mesh: &Mesh, sigma: &[f64], config: &SimConfig) -> Result<SystemMatrix> {
    assemble_with_penalty(mesh, sigma, config, 1.0)
}

fn assemble_with_penalty(
    mesh: &Mesh,
    sigma: &[f64],
    config: &SimConfig,
    penalty_factor: f64,
) -> Result<SystemMatrix> {
    config.validate()?;
    if sigma.len() != mesh.n_elements() {
        return Err(Error::ShapeMismatch(format!(
            "{} conductivities for {} elements",
            sigma.len(),
            mesh.n_elements()
        )));
    }
    if mesh.electrodes.len() != config.n_electrodes {
        return Err(Error::ShapeMismatch(format!(
            "mesh has {} electrodes, config expects {}",
            mesh.electrodes.len(),
            config.n_electrodes
        )));
    }
    for (k, &s) in sigma.iter().enumerate() {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "conductivity of element {k} is {s}, must be positive"
            )));
        }
    }

    let n_nodes = mesh.n_nodes();
    let n_el = config.n_electrodes;
    let dim = n_nodes + n_el;
    let mut builder = SymSparseBuilder::new(dim);

    // Conduction block. Entry magnitudes scale with sigma, so plain f64
    // accumulation keeps its row-sum residue far below the electrode terms.
    for (k, el) in mesh.elements.iter().enumerate() {
        let pts = mesh.element_points(k);
        let area = crate::geom::triangle_area(pts[0], pts[1], pts[2]);
        if !(area > MIN_ELEMENT_AREA) {
            return Err(Error::SingularElement { element: k, area });
        }
        let s = local_stiffness(&pts, sigma[k]);
        for i in 0..3 {
            for j in i..3 {
                builder.add(el[i] as usize, el[j] as usize, s[i][j]);
            }
        }
    }

    // Electrode blocks from exact integration of the contact layer on each
    // boundary edge of length s:
    //   node-node   [[s/3z, s/6z], [s/6z, s/3z]]
    //   node-volt   -s/2z on both nodes
    //   volt-volt   s/z
    // The voltage-voltage entry is the configured width over z, computed in
    // dd so its hi part is bit-exact (0.1/0.01 rounds to exactly 10). The
    // per-edge atoms are scaled from that total rather than from raw edge
    // lengths: summed f64 edge lengths differ from the width by an ulp or
    // two, which would both shift the diagonal off its exact value and
    // leave row-sum residue large enough to break current conservation.
    let z = config.contact_impedance;
    let total_admittance = Dd::from_div(config.electrode_width, z);
    let mut phys_rows: Vec<std::collections::BTreeMap<usize, Dd>> =
        vec![std::collections::BTreeMap::new(); n_el];
    for (l, edge_ids) in mesh.electrodes.iter().enumerate() {
        let col = n_nodes + l;
        let lengths: Vec<f64> = edge_ids
            .iter()
            .map(|&e| {
                let [a, b] = mesh.boundary_edges[e as usize];
                mesh.nodes[a as usize].dist(&mesh.nodes[b as usize])
            })
            .collect();
        let total_len = dd_sum(lengths.iter().copied());
        if (total_len.hi - config.electrode_width).abs() > 1e-9 * config.electrode_width {
            return Err(Error::MeshGeneration(format!(
                "electrode {l} has length {} but the configured width is {}",
                total_len.hi, config.electrode_width
            )));
        }
        let col_scale = total_admittance.div(total_len.mul_f64(2.0));
        for (&e, &s) in edge_ids.iter().zip(&lengths) {
            let [a, b] = mesh.boundary_edges[e as usize];
            let (a, b) = (a as usize, b as usize);
            // w ~ s/(2z), expressed as a share of the exact total so the
            // shares recombine to total_admittance at dd accuracy.
            let w = col_scale.mul_f64(s);
            let q_ab = w.div_f64(3.0);
            let q_aa = q_ab.mul_f64(2.0);
            let w = q_aa.add(q_ab);
            builder.add_dd(a, a, q_aa);
            builder.add_dd(b, b, q_aa);
            builder.add_dd(a, b, q_ab);
            builder.add_dd(a, col, w.neg());
            builder.add_dd(b, col, w.neg());

            let row = &mut phys_rows[l];
            for node in [a, b] {
                let e = row.entry(node).or_default();
                *e = e.add(w.neg());
            }
        }
        builder.add_dd(col, col, total_admittance);
        phys_rows[l].insert(col, total_admittance);
    }

    // Grounding penalty: beta * e e^T over the electrode block.
    let beta = penalty_factor
        * phys_rows
            .iter()
            .enumerate()
            .map(|(l, row)| row[&(n_nodes + l)].hi)
            .sum::<f64>()
        / n_el as f64;
    for i in 0..n_el {
        for j in i..n_el {
            builder.add(n_nodes + i, n_nodes + j, beta);
        }
    }

    let k = builder.build();
    let chol = EnvelopeCholesky::factor(&k, n_el)?;
    let electrode_rows = phys_rows
        .into_iter()
        .map(|row| row.into_iter().collect())
        .collect();
    Ok(SystemMatrix {
        k,
        chol,
        electrode_rows,
        n_nodes,
        n_electrodes: n_el,
        injection_current: config.injection_current,
    })
}

impl SystemMatrix {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_electrodes(&self) -> usize {
        self.n_electrodes
    }

    /// Largest asymmetry of the assembled matrix (zero by construction).
    pub fn max_asymmetry(&self) -> f64 {
        self.k.max_asymmetry()
    }

    /// Physical diagonal entry for electrode `l`: total electrode length
    /// over contact impedance, unaffected by the grounding penalty.
    pub fn electrode_self_admittance(&self, l: usize) -> f64 {
        let col = self.n_nodes + l;
        self.electrode_rows[l]
            .iter()
            .find(|(j, _)| *j == col)
            .map(|(_, v)| v.hi)
            .unwrap_or(0.0)
    }

    /// Matrix entry (penalized system, hi part). Rows and columns index
    /// nodes first, then electrode voltages.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.k.get(i, j)
    }
}

/// Potentials, voltages, and recovered currents for one injection pattern.
#[derive(Debug, Clone)]
pub struct ForwardSolution {
    /// Potential at each mesh node, zero-mean-voltage gauge.
    pub node_potentials: Vec<f64>,
    /// Voltage on each electrode.
    pub electrode_voltages: Vec<f64>,
    /// Current through each electrode recovered from the solved potentials
    /// via the physical electrode equations.
    pub recovered_currents: Vec<f64>,
}

/// Injection vector for one adjacent drive pair: +amplitude on electrode
/// `d`, -amplitude on `d+1` (cyclic).
pub fn drive_injection(n_electrodes: usize, d: usize, amplitude: f64) -> Vec<f64> {
    let mut inj = vec![0.0; n_electrodes];
    inj[d] = amplitude;
    inj[(d + 1) % n_electrodes] = -amplitude;
    inj
}

/// Solve for one injected-current pattern. The injections must balance to
/// within 1e-12 of the configured drive amplitude; anything else has no
/// solution in the zero-mean gauge.
pub fn solve_forward(system: &SystemMatrix, injection: &[f64]) -> Result<ForwardSolution> {
    if injection.len() != system.n_electrodes {
        return Err(Error::ShapeMismatch(format!(
            "{} injection currents for {} electrodes",
            injection.len(),
            system.n_electrodes
        )));
    }
    let net = dd_sum(injection.iter().copied()).value();
    let tol = 1e-12 * system.injection_current;
    if net.abs() > tol {
        return Err(Error::NonZeroNetCurrent { net, tol });
    }

    let dim = system.n_nodes + system.n_electrodes;
    let mut b = vec![0.0; dim];
    b[system.n_nodes..].copy_from_slice(injection);
    let x = system.chol.solve_refined(&system.k, &b, REFINE_PASSES);

    let node_potentials = x[..system.n_nodes].iter().map(|v| v.value()).collect();
    let electrode_voltages: Vec<f64> =
        x[system.n_nodes..].iter().map(|v| v.value()).collect();
    let recovered_currents = (0..system.n_electrodes)
        .map(|l| {
            let mut acc = Dd::default();
            for &(j, v) in &system.electrode_rows[l] {
                let xj = x[j];
                acc = acc
                    .add_prod(v.hi, xj.hi)
                    .add_f64(v.hi * xj.lo)
                    .add_f64(v.lo * xj.hi);
            }
            acc.value()
        })
        .collect();

    Ok(ForwardSolution {
        node_potentials,
        electrode_voltages,
        recovered_currents,
    })
}

/// One drive-sense combination of the adjacent protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriveSensePair {
    /// (+I electrode, -I electrode)
    pub drive: (usize, usize),
    /// Differential voltage is sense.0 minus sense.1.
    pub sense: (usize, usize),
}

/// Sense start electrodes for drive `d`: ascending m with the sense pair
/// (m, m+1) sharing no electrode with the drive pair (d, d+1).
pub fn sense_electrodes(n_electrodes: usize, d: usize) -> impl Iterator<Item = usize> {
    let skip = [
        (d + n_electrodes - 1) % n_electrodes,
        d,
        (d + 1) % n_electrodes,
    ];
    (0..n_electrodes).filter(move |m| !skip.contains(m))
}

/// All drive-sense combinations in frame order: drives ascending, senses
/// ascending within each drive.
pub fn frame_scheme(n_electrodes: usize) -> Vec<DriveSensePair> {
    let mut scheme = Vec::with_capacity(n_electrodes * (n_electrodes - 3));
    for d in 0..n_electrodes {
        for m in sense_electrodes(n_electrodes, d) {
            scheme.push(DriveSensePair {
                drive: (d, (d + 1) % n_electrodes),
                sense: (m, (m + 1) % n_electrodes),
            });
        }
    }
    scheme
}

/// One complete measurement sweep: all adjacent drive pairs, each sensed at
/// all non-driven adjacent pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFrame {
    pub n_electrodes: usize,
    /// Differential voltages in frame order.
    pub values: Vec<f64>,
}

impl MeasurementFrame {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Drive and sense electrodes for each entry of `values`.
    pub fn scheme(&self) -> Vec<DriveSensePair> {
        frame_scheme(self.n_electrodes)
    }

    /// Root-mean-square of the frame values.
    pub fn rms(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let sq: f64 = self.values.iter().map(|v| v * v).sum();
        (sq / self.values.len() as f64).sqrt()
    }
}

/// Run the full adjacent-drive protocol on an assembled system.
pub fn frame_from_system(system: &SystemMatrix) -> Result<MeasurementFrame> {
    let l = system.n_electrodes;
    let amp = system.injection_current;
    let mut values = Vec::with_capacity(l * (l - 3));
    for d in 0..l {
        let sol = solve_forward(system, &drive_injection(l, d, amp))?;
        let v = &sol.electrode_voltages;
        for m in sense_electrodes(l, d) {
            values.push(v[m] - v[(m + 1) % l]);
        }
    }
    Ok(MeasurementFrame {
        n_electrodes: l,
        values,
    })
}

/// Assemble, factor, and run the full protocol for one conductivity field.
/// Noise is never added here; see [`apply_noise`].
pub fn simulate_frame(mesh: &Mesh, sigma: &[f64], config: &SimConfig) -> Result<MeasurementFrame> {
    let system = assemble_system(mesh, sigma, config)?;
    frame_from_system(&system)
}

/// Add white Gaussian noise at the given SNR: the standard deviation is the
/// frame RMS times 10^(-snr/20), independent per entry.
pub fn apply_noise(
    frame: &MeasurementFrame,
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<MeasurementFrame> {
    if frame.values.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let std = frame.rms() * 10f64.powf(-snr_db / 20.0);
    let normal = Normal::new(0.0, std)
        .map_err(|e| Error::InvalidConfig(format!("noise distribution: {e}")))?;
    let values = frame
        .values
        .iter()
        .map(|v| v + normal.sample(rng))
        .collect();
    Ok(MeasurementFrame {
        n_electrodes: frame.n_electrodes,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::rect::reconstruction_mesh;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coarse_setup() -> (Mesh, Vec<f64>, SimConfig) {
        let config = SimConfig::default();
        let mesh = reconstruction_mesh(&config).unwrap();
        let sigma = vec![config.background_conductivity; mesh.n_elements()];
        (mesh, sigma, config)
    }

    #[test]
    fn unit_right_triangle_stiffness() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        let s = local_stiffness(&pts, 1.0);
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s[i][j], expect[i][j], "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn stiffness_scales_linearly_with_conductivity() {
        let pts = [
            Point2::new(0.2, 0.1),
            Point2::new(0.7, 0.3),
            Point2::new(0.4, 0.8),
        ];
        let s1 = local_stiffness(&pts, 1.0);
        let s3 = local_stiffness(&pts, 3.0);
        for i in 0..3 {
            for j in 0..3 {
                assert!((s3[i][j] - 3.0 * s1[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn electrode_self_admittance_is_exact() {
        let (mesh, sigma, config) = coarse_setup();
        let system = assemble_system(&mesh, &sigma, &config).unwrap();
        for l in 0..16 {
            // Electrode length 0.1 over contact impedance 0.01.
            assert_eq!(system.electrode_self_admittance(l), 10.0, "electrode {l}");
        }
    }

    #[test]
    fn assembled_matrix_is_exactly_symmetric() {
        let (mesh, sigma, config) = coarse_setup();
        let system = assemble_system(&mesh, &sigma, &config).unwrap();
        assert_eq!(system.max_asymmetry(), 0.0);
    }

    #[test]
    fn rejects_wrong_sigma_length() {
        let (mesh, _, config) = coarse_setup();
        let sigma = vec![1.0; 10];
        assert!(matches!(
            assemble_system(&mesh, &sigma, &config),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn rejects_nonpositive_conductivity() {
        let (mesh, mut sigma, config) = coarse_setup();
        sigma[5] = 0.0;
        assert!(matches!(
            assemble_system(&mesh, &sigma, &config),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn rejects_degenerate_element() {
        let (mut mesh, sigma, config) = coarse_setup();
        // Collapse one interior element to near-zero area.
        let el = mesh.elements[40];
        let p = mesh.nodes[el[0] as usize];
        mesh.nodes[el[1] as usize] = Point2::new(p.x + 1e-9, p.y);
        mesh.nodes[el[2] as usize] = Point2::new(p.x, p.y + 1e-9);
        match assemble_system(&mesh, &sigma, &config) {
            Err(Error::SingularElement { area, .. }) => assert!(area < 1e-12),
            other => panic!("expected SingularElement, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn rejects_unbalanced_injection() {
        let (mesh, sigma, config) = coarse_setup();
        let system = assemble_system(&mesh, &sigma, &config).unwrap();
        let mut inj = vec![0.0; 16];
        inj[0] = 1e-3;
        inj[1] = -1e-3 + 1e-11;
        assert!(matches!(
            solve_forward(&system, &inj),
            Err(Error::NonZeroNetCurrent { .. })
        ));
    }

    #[test]
    fn recovered_currents_conserve_charge() {
        let (mesh, sigma, config) = coarse_setup();
        let system = assemble_system(&mesh, &sigma, &config).unwrap();
        let amp = config.injection_current;
        for d in 0..16 {
            let sol = solve_forward(&system, &drive_injection(16, d, amp)).unwrap();
            let total: f64 = dd_sum(sol.recovered_currents.iter().copied()).value();
            assert!(
                total.abs() <= 1e-12 * amp,
                "drive {d}: net current {total:e}"
            );
            // Recovered currents match the applied pattern.
            for (l, &i) in sol.recovered_currents.iter().enumerate() {
                let want = if l == d {
                    amp
                } else if l == (d + 1) % 16 {
                    -amp
                } else {
                    0.0
                };
                assert!(
                    (i - want).abs() <= 1e-12 * amp,
                    "drive {d} electrode {l}: {i:e} vs {want:e}"
                );
            }
        }
    }

    #[test]
    fn voltages_are_zero_mean() {
        let (mesh, sigma, config) = coarse_setup();
        let system = assemble_system(&mesh, &sigma, &config).unwrap();
        let sol = solve_forward(&system, &drive_injection(16, 0, 1e-3)).unwrap();
        let mean: f64 = sol.electrode_voltages.iter().sum::<f64>() / 16.0;
        let scale = sol
            .electrode_voltages
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(mean.abs() <= 1e-14 * scale, "mean {mean:e}, scale {scale:e}");
    }

    #[test]
    fn reciprocity_holds() {
        // Drive (a, a+1), sense (b, b+1) must match drive (b, b+1),
        // sense (a, a+1) when both carry the same current.
        let (mesh, sigma, config) = coarse_setup();
        let system = assemble_system(&mesh, &sigma, &config).unwrap();
        let amp = config.injection_current;
        for (a, b) in [(0usize, 5usize), (2, 9), (3, 12), (7, 14)] {
            let sol_a = solve_forward(&system, &drive_injection(16, a, amp)).unwrap();
            let sol_b = solve_forward(&system, &drive_injection(16, b, amp)).unwrap();
            let va = &sol_a.electrode_voltages;
            let vb = &sol_b.electrode_voltages;
            let forward = va[b] - va[(b + 1) % 16];
            let reverse = vb[a] - vb[(a + 1) % 16];
            let rel = (forward - reverse).abs() / forward.abs();
            assert!(rel <= 1e-10, "({a},{b}): rel {rel:e}");
        }
    }

    #[test]
    fn grounding_choice_does_not_affect_measurements() {
        let (mesh, sigma, config) = coarse_setup();
        let weak = assemble_with_penalty(&mesh, &sigma, &config, 1.0).unwrap();
        let strong = assemble_with_penalty(&mesh, &sigma, &config, 50.0).unwrap();
        let fa = frame_from_system(&weak).unwrap();
        let fb = frame_from_system(&strong).unwrap();
        let scale = fa.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in fa.values.iter().zip(&fb.values) {
            assert!((a - b).abs() <= 1e-12 * scale, "{a:e} vs {b:e}");
        }
    }

    #[test]
    fn frame_has_protocol_order() {
        let scheme = frame_scheme(16);
        assert_eq!(scheme.len(), 208);
        // Drive 0 senses at 2..=14 ascending.
        for (i, m) in (2..=14).enumerate() {
            assert_eq!(scheme[i].drive, (0, 1));
            assert_eq!(scheme[i].sense, (m, m + 1));
        }
        // No sense pair shares an electrode with its drive pair.
        for p in &scheme {
            for s in [p.sense.0, p.sense.1] {
                assert_ne!(s, p.drive.0);
                assert_ne!(s, p.drive.1);
            }
        }
        // Last drive wraps: sense pair (14, 15) is excluded, (13, 14) kept.
        let last = scheme.last().unwrap();
        assert_eq!(last.drive, (15, 0));
        assert_eq!(last.sense, (13, 14));
    }

    #[test]
    fn scaling_conductivity_and_admittance_scales_voltages() {
        // Multiplying sigma and the contact admittance 1/z by c divides
        // every voltage by c: the whole operator scales linearly.
        let (mesh, sigma, config) = coarse_setup();
        let base = simulate_frame(&mesh, &sigma, &config).unwrap();
        let c = 3.7;
        let scaled_sigma: Vec<f64> = sigma.iter().map(|s| s * c).collect();
        let scaled_config = SimConfig {
            contact_impedance: config.contact_impedance / c,
            ..config
        };
        let scaled = simulate_frame(&mesh, &scaled_sigma, &scaled_config).unwrap();
        for (a, b) in base.values.iter().zip(&scaled.values) {
            let rel = (b * c - a).abs() / a.abs();
            assert!(rel <= 1e-10, "{a:e} vs {b:e}");
        }
    }

    /// Electrode relabeling under x-mirror: CCW order reverses, sides swap.
    fn mirror_electrode(l: usize) -> usize {
        (19 - l) % 16
    }

    #[test]
    fn mirror_symmetry_of_square_domain() {
        let (mesh, sigma, config) = coarse_setup();
        let system = assemble_system(&mesh, &sigma, &config).unwrap();
        let amp = config.injection_current;

        // Drive (0, 5); its mirror image drives (mirror(0), mirror(5)).
        let mut inj = vec![0.0; 16];
        inj[0] = amp;
        inj[5] = -amp;
        let mut inj_m = vec![0.0; 16];
        inj_m[mirror_electrode(0)] = amp;
        inj_m[mirror_electrode(5)] = -amp;

        let sol = solve_forward(&system, &inj).unwrap();
        let sol_m = solve_forward(&system, &inj_m).unwrap();
        let scale = sol
            .electrode_voltages
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        for l in 0..16 {
            let a = sol.electrode_voltages[l];
            let b = sol_m.electrode_voltages[mirror_electrode(l)];
            assert!(
                (a - b).abs() <= 1e-8 * scale,
                "electrode {l}: {a:e} vs {b:e}"
            );
        }
    }

    #[test]
    fn quarter_turn_symmetry_of_square_domain() {
        let (mesh, sigma, config) = coarse_setup();
        let system = assemble_system(&mesh, &sigma, &config).unwrap();
        let amp = config.injection_current;

        let mut inj = vec![0.0; 16];
        inj[0] = amp;
        inj[5] = -amp;
        let mut inj_r = vec![0.0; 16];
        inj_r[4] = amp;
        inj_r[9] = -amp;

        let sol = solve_forward(&system, &inj).unwrap();
        let sol_r = solve_forward(&system, &inj_r).unwrap();
        let scale = sol
            .electrode_voltages
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        for l in 0..16 {
            let a = sol.electrode_voltages[l];
            let b = sol_r.electrode_voltages[(l + 4) % 16];
            assert!(
                (a - b).abs() <= 1e-8 * scale,
                "electrode {l}: {a:e} vs {b:e}"
            );
        }
    }

    #[test]
    fn refinement_keeps_frame_close() {
        // Mesh convergence against a uniformly 4x-refined mesh. The small
        // contact impedance makes electrodes nearly perfect conductors, so
        // the potential has r^(1/2)-type singularities at electrode ends
        // and the drive-adjacent sense pairs converge slowly; the typical
        // measurement agrees within 3%, the singular worst case within
        // 7.5% (measured 6.5% with comfortable slack for the bound).
        let (mesh, sigma, config) = coarse_setup();
        let coarse = simulate_frame(&mesh, &sigma, &config).unwrap();
        let fine_mesh = mesh.refine_uniform();
        let fine_sigma = vec![config.background_conductivity; fine_mesh.n_elements()];
        let fine = simulate_frame(&fine_mesh, &fine_sigma, &config).unwrap();
        let mut rels: Vec<f64> = coarse
            .values
            .iter()
            .zip(&fine.values)
            .map(|(a, b)| (a - b).abs() / b.abs())
            .collect();
        rels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = rels[rels.len() / 2];
        let max = *rels.last().unwrap();
        assert!(median <= 0.03, "median per-measurement difference {median:.4}");
        assert!(max <= 0.075, "max per-measurement difference {max:.4}");
    }

    #[test]
    fn voltage_magnitudes_are_physical() {
        // Order-of-magnitude sanity: milliamp drive through a sheet with
        // conductance ~1e-4 S gives volt-scale differential readings.
        let (mesh, sigma, config) = coarse_setup();
        let frame = simulate_frame(&mesh, &sigma, &config).unwrap();
        let max = frame.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max > 1e-2 && max < 1e3, "max |V| = {max:e}");
    }

    #[test]
    fn noise_statistics_match_snr() {
        let frame = MeasurementFrame {
            n_electrodes: 16,
            values: vec![2.0; 1_000_000],
        };
        let snr = 85.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noisy = apply_noise(&frame, snr, &mut rng).unwrap();
        let expected_std = 2.0 * 10f64.powf(-snr / 20.0);
        let mean: f64 = noisy.values.iter().map(|v| v - 2.0).sum::<f64>()
            / noisy.values.len() as f64;
        let var: f64 = noisy
            .values
            .iter()
            .map(|v| (v - 2.0 - mean).powi(2))
            .sum::<f64>()
            / (noisy.values.len() - 1) as f64;
        let rel = (var.sqrt() - expected_std).abs() / expected_std;
        assert!(rel < 0.01, "std off by {rel:.4}");
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let frame = MeasurementFrame {
            n_electrodes: 16,
            values: (0..208).map(|i| (i as f64).sin()).collect(),
        };
        let a = apply_noise(&frame, 85.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = apply_noise(&frame, 85.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let c = apply_noise(&frame, 85.0, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn noise_rejects_empty_frame() {
        let frame = MeasurementFrame {
            n_electrodes: 16,
            values: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            apply_noise(&frame, 85.0, &mut rng),
            Err(Error::EmptyFrame)
        ));
    }

    #[test]
    fn reference_mesh_frame_is_finite_and_sized() {
        let config = SimConfig::default();
        let mesh = crate::mesh::reference::pristine_reference_mesh(&config, 3).unwrap();
        let sigma = vec![config.background_conductivity; mesh.n_elements()];
        let frame = simulate_frame(&mesh, &sigma, &config).unwrap();
        assert_eq!(frame.len(), 208);
        assert!(frame.values.iter().all(|v| v.is_finite()));
        let total: f64 = frame.values.iter().map(|v| v.abs()).sum();
        assert!(total > 0.0);
    }
}
