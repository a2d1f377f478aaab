//! Triangle meshes of the square panel: geometry queries, shared-edge
//! adjacency, uniform refinement, and lossless serialization.
//!
//! Two constructions live in submodules: [`rect`] builds the structured
//! coarse mesh used for reconstruction, [`reference`] builds the fine
//! unstructured meshes (with holes as voids) used to simulate data.

pub mod delaunay;
pub mod rect;
pub mod reference;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{triangle_area, Point2};

/// Triangle mesh with electrode metadata.
///
/// `elements` hold node indices in counterclockwise order. `boundary_edges`
/// lists the outer-boundary edges in traversal order; `electrodes[l]` holds
/// indices into `boundary_edges` for the edges covered by electrode `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub nodes: Vec<Point2>,
    pub elements: Vec<[u32; 3]>,
    pub boundary_edges: Vec<[u32; 2]>,
    pub electrodes: Vec<Vec<u32>>,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_points(&self, k: usize) -> [Point2; 3] {
        let [a, b, c] = self.elements[k];
        [self.nodes[a as usize], self.nodes[b as usize], self.nodes[c as usize]]
    }

    pub fn element_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.element_points(k);
        triangle_area(a, b, c)
    }

    pub fn areas(&self) -> Vec<f64> {
        (0..self.n_elements()).map(|k| self.element_area(k)).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.areas().iter().sum()
    }

    pub fn element_centroids(&self) -> Vec<Point2> {
        self.elements
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) =
                    (self.nodes[a as usize], self.nodes[b as usize], self.nodes[c as usize]);
                Point2::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
            })
            .collect()
    }

    /// Shared-edge neighbors per element, each list sorted ascending.
    pub fn element_adjacency(&self) -> Vec<Vec<u32>> {
        let mut by_edge: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        for (k, &[a, b, c]) in self.elements.iter().enumerate() {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                by_edge.entry((u.min(v), u.max(v))).or_default().push(k as u32);
            }
        }
        let mut adj = vec![Vec::new(); self.n_elements()];
        for owners in by_edge.values() {
            if owners.len() == 2 {
                adj[owners[0] as usize].push(owners[1]);
                adj[owners[1] as usize].push(owners[0]);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.boundary_edges[edge];
        self.nodes[a as usize].dist(&self.nodes[b as usize])
    }

    pub fn electrode_length(&self, l: usize) -> f64 {
        self.electrodes[l].iter().map(|&e| self.edge_length(e as usize)).sum()
    }

    /// Node index pairs of electrode `l`'s edges.
    pub fn electrode_edge_nodes(&self, l: usize) -> Vec<[u32; 2]> {
        self.electrodes[l].iter().map(|&e| self.boundary_edges[e as usize]).collect()
    }

    /// Structural checks: index validity, positive element areas, no
    /// duplicate elements, boundary edges belonging to exactly one element,
    /// and pairwise-disjoint electrode edge sets.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes() as u32;
        let fail = |msg: String| Err(Error::MeshGeneration(msg));
        for (k, el) in self.elements.iter().enumerate() {
            if el.iter().any(|&i| i >= n) {
                return fail(format!("element {k} references a missing node"));
            }
            let area = self.element_area(k);
            if !(area > 0.0) {
                return fail(format!("element {k} has non-positive area {area:e}"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (k, &[a, b, c]) in self.elements.iter().enumerate() {
            let mut key = [a, b, c];
            key.sort_unstable();
            if key[0] == key[1] || key[1] == key[2] {
                return fail(format!("element {k} repeats a node"));
            }
            if !seen.insert(key) {
                return fail(format!("element {k} duplicates another element"));
            }
        }
        let mut edge_count: HashMap<(u32, u32), usize> = HashMap::new();
        for &[a, b, c] in &self.elements {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                *edge_count.entry((u.min(v), u.max(v))).or_insert(0) += 1;
            }
        }
        for (i, &[a, b]) in self.boundary_edges.iter().enumerate() {
            if a >= n || b >= n {
                return fail(format!("boundary edge {i} references a missing node"));
            }
            match edge_count.get(&(a.min(b), a.max(b))) {
                Some(1) => {}
                Some(c) => return fail(format!("boundary edge {i} shared by {c} elements")),
                None => return fail(format!("boundary edge {i} is not a mesh edge")),
            }
        }
        let mut used = std::collections::HashSet::new();
        for (l, edges) in self.electrodes.iter().enumerate() {
            if edges.is_empty() {
                return fail(format!("electrode {l} has no edges"));
            }
            for &e in edges {
                if e as usize >= self.boundary_edges.len() {
                    return fail(format!("electrode {l} references a missing boundary edge"));
                }
                if !used.insert(e) {
                    return fail(format!("electrodes overlap on boundary edge {e}"));
                }
            }
        }
        Ok(())
    }

    /// Splits every triangle into four at edge midpoints. Boundary edges
    /// split into two and electrode edge lists are remapped accordingly.
    pub fn refine_uniform(&self) -> Mesh {
        let mut nodes = self.nodes.clone();
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, nodes: &mut Vec<Point2>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (pa, pb) = (nodes[a as usize], nodes[b as usize]);
                nodes.push(Point2::new((pa.x + pb.x) / 2.0, (pa.y + pb.y) / 2.0));
                (nodes.len() - 1) as u32
            })
        };
        let mut elements = Vec::with_capacity(self.elements.len() * 4);
        for &[a, b, c] in &self.elements {
            let mab = mid(a, b, &mut nodes);
            let mbc = mid(b, c, &mut nodes);
            let mca = mid(c, a, &mut nodes);
            elements.push([a, mab, mca]);
            elements.push([b, mbc, mab]);
            elements.push([c, mca, mbc]);
            elements.push([mab, mbc, mca]);
        }
        let mut boundary_edges = Vec::with_capacity(self.boundary_edges.len() * 2);
        for &[a, b] in &self.boundary_edges {
            let m = mid(a, b, &mut nodes);
            boundary_edges.push([a, m]);
            boundary_edges.push([m, b]);
        }
        let electrodes = self
            .electrodes
            .iter()
            .map(|edges| edges.iter().flat_map(|&e| [2 * e, 2 * e + 1]).collect())
            .collect();
        Mesh { nodes, elements, boundary_edges, electrodes }
    }

    /// SHA-256 over a canonical byte encoding; identical meshes (bitwise
    /// node coordinates included) yield identical fingerprints.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.nodes.len() as u64).to_le_bytes());
        for p in &self.nodes {
            h.update(p.x.to_le_bytes());
            h.update(p.y.to_le_bytes());
        }
        h.update((self.elements.len() as u64).to_le_bytes());
        for el in &self.elements {
            for &i in el {
                h.update(i.to_le_bytes());
            }
        }
        h.update((self.boundary_edges.len() as u64).to_le_bytes());
        for e in &self.boundary_edges {
            h.update(e[0].to_le_bytes());
            h.update(e[1].to_le_bytes());
        }
        h.update((self.electrodes.len() as u64).to_le_bytes());
        for edges in &self.electrodes {
            h.update((edges.len() as u64).to_le_bytes());
            for &e in edges {
                h.update(e.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mesh> {
        let file = std::fs::File::open(path)?;
        let mesh: Mesh = serde_json::from_reader(std::io::BufReader::new(file))?;
        mesh.validate()?;
        Ok(mesh)
    }
}
