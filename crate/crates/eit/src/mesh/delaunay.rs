//! Incremental Bowyer-Watson Delaunay triangulation with walk-based point
//! location.
//!
//! Points are inserted inside an enclosing super-triangle; each insertion
//! carves the cavity of triangles whose circumcircle contains the point and
//! re-fans it. The point sets built by the reference-mesh generator are
//! perturbed away from cocircular degeneracies, so plain double-precision
//! predicates are sufficient; the final mesh is validated after extraction.

use crate::error::{Error, Result};
use crate::geom::{in_circle, orient2d, Point2};

const NONE: u32 = u32::MAX;

pub struct Triangulation {
    pts: Vec<Point2>,
    tris: Vec<[u32; 3]>,
    /// adj[t][k] = neighbor across the edge opposite vertex k.
    adj: Vec<[u32; 3]>,
    alive: Vec<bool>,
    /// Walk start: most recently created triangle.
    last: u32,
    /// Cavity marks, keyed by epoch to avoid clearing between insertions.
    mark: Vec<u32>,
    epoch: u32,
}

impl Triangulation {
    /// Creates a triangulation whose super-triangle encloses the disk of
    /// radius `extent` around `center` with generous margin.
    pub fn new(center: Point2, extent: f64) -> Self {
        let r = 8.0 * extent.max(1e-6);
        let a = Point2::new(center.x - 3.0 * r, center.y - 2.0 * r);
        let b = Point2::new(center.x + 3.0 * r, center.y - 2.0 * r);
        let c = Point2::new(center.x, center.y + 3.0 * r);
        Self {
            pts: vec![a, b, c],
            tris: vec![[0, 1, 2]],
            adj: vec![[NONE; 3]],
            alive: vec![true],
            last: 0,
            mark: vec![0],
            epoch: 0,
        }
    }

    pub fn n_points(&self) -> usize {
        self.pts.len() - 3
    }

    fn tri_points(&self, t: u32) -> [Point2; 3] {
        let [a, b, c] = self.tris[t as usize];
        [self.pts[a as usize], self.pts[b as usize], self.pts[c as usize]]
    }

    /// Walks from the last created triangle toward `p`.
    fn locate(&self, p: Point2) -> Result<u32> {
        let mut t = self.last;
        let cap = 4 * self.tris.len() + 64;
        for _ in 0..cap {
            let [pa, pb, pc] = self.tri_points(t);
            let o = [orient2d(pb, pc, p), orient2d(pc, pa, p), orient2d(pa, pb, p)];
            let mut worst = 0usize;
            for k in 1..3 {
                if o[k] < o[worst] {
                    worst = k;
                }
            }
            if o[worst] >= 0.0 {
                return Ok(t);
            }
            let n = self.adj[t as usize][worst];
            if n == NONE {
                break;
            }
            t = n;
        }
        // Deterministic fallback for walk cycles in near-degenerate spots.
        for (t, tri_alive) in self.alive.iter().enumerate() {
            if !tri_alive {
                continue;
            }
            let [pa, pb, pc] = self.tri_points(t as u32);
            if orient2d(pb, pc, p) >= 0.0
                && orient2d(pc, pa, p) >= 0.0
                && orient2d(pa, pb, p) >= 0.0
            {
                return Ok(t as u32);
            }
        }
        Err(Error::MeshGeneration(format!("point ({}, {}) not located", p.x, p.y)))
    }

    /// Inserts a point, returning its index among inserted points.
    pub fn insert(&mut self, p: Point2) -> Result<u32> {
        let p_idx = self.pts.len() as u32;
        self.pts.push(p);
        let t0 = self.locate(p)?;

        // Grow the cavity of circumcircle-violating triangles.
        self.epoch += 1;
        let mut cavity = vec![t0];
        self.mark[t0 as usize] = self.epoch;
        let mut head = 0;
        while head < cavity.len() {
            let t = cavity[head];
            head += 1;
            for k in 0..3 {
                let n = self.adj[t as usize][k];
                if n == NONE || self.mark[n as usize] == self.epoch {
                    continue;
                }
                let [a, b, c] = self.tri_points(n);
                if in_circle(a, b, c, p) > 0.0 {
                    self.mark[n as usize] = self.epoch;
                    cavity.push(n);
                }
            }
        }

        // Directed boundary edges (u, v) seen counterclockwise from inside
        // the cavity, with the dead owner and outer neighbor recorded.
        let mut ring: std::collections::HashMap<u32, (u32, u32, u32)> =
            std::collections::HashMap::new();
        for &t in &cavity {
            let [v0, v1, v2] = self.tris[t as usize];
            for (k, (u, v)) in [(v1, v2), (v2, v0), (v0, v1)].into_iter().enumerate() {
                let n = self.adj[t as usize][k];
                if n == NONE || self.mark[n as usize] != self.epoch {
                    if ring.insert(u, (v, t, n)).is_some() {
                        return Err(Error::MeshGeneration(
                            "cavity boundary is not a simple cycle".into(),
                        ));
                    }
                }
            }
        }
        for &t in &cavity {
            self.alive[t as usize] = false;
        }

        // Re-fan the cavity around p, walking the boundary cycle. The walk
        // must start deterministically (HashMap order is not), so begin at
        // the smallest boundary vertex.
        let ring_len = ring.len();
        let start = *ring.keys().min().unwrap();
        let first_new = self.tris.len() as u32;
        let mut u = start;
        let mut created = 0;
        loop {
            let &(v, dead, outer) = ring
                .get(&u)
                .ok_or_else(|| Error::MeshGeneration("cavity boundary walk broke".into()))?;
            let t_new = first_new + created;
            debug_assert!(
                orient2d(p, self.pts[u as usize], self.pts[v as usize]) > 0.0,
                "degenerate cavity fan triangle"
            );
            self.tris.push([p_idx, u, v]);
            // Neighbor slots: 0 faces the outer triangle, 1 the next fan
            // triangle (shares edge v-p), 2 the previous (shares p-u).
            let next_t = first_new + (created + 1) % ring_len as u32;
            let prev_t = first_new + (created + ring_len as u32 - 1) % ring_len as u32;
            self.adj.push([outer, next_t, prev_t]);
            self.alive.push(true);
            self.mark.push(0);
            if outer != NONE {
                let slots = &mut self.adj[outer as usize];
                let k = slots
                    .iter()
                    .position(|&s| s == dead)
                    .ok_or_else(|| Error::MeshGeneration("adjacency desynchronized".into()))?;
                slots[k] = t_new;
            }
            created += 1;
            u = v;
            if u == start {
                break;
            }
            if created as usize > ring_len {
                return Err(Error::MeshGeneration("cavity boundary walk did not close".into()));
            }
        }
        if created as usize != ring_len {
            return Err(Error::MeshGeneration("cavity boundary cycle incomplete".into()));
        }
        self.last = first_new;
        Ok(p_idx - 3)
    }

    /// Final triangles over the inserted points (super-triangle corners and
    /// every triangle touching them dropped). Vertex indices refer to the
    /// insertion order.
    pub fn triangles(&self) -> Vec<[u32; 3]> {
        let mut out = Vec::new();
        for (t, &tri_alive) in self.alive.iter().enumerate() {
            if !tri_alive {
                continue;
            }
            let [a, b, c] = self.tris[t];
            if a < 3 || b < 3 || c < 3 {
                continue;
            }
            out.push([a - 3, b - 3, c - 3]);
        }
        out
    }

    pub fn points(&self) -> &[Point2] {
        &self.pts[3..]
    }
}
