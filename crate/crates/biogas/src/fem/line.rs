//! Discretization of measures concentrated on embedded polylines (well
//! source terms): either the exact line integral of the test functions or
//! a mass-preserving mollification by a radial tent kernel.
//!
//! A polyline is sampled once into short chunks located in the mesh; all
//! load builders and line integrals then reuse the cached (tet,
//! barycentric) data, which keeps the per-time-step cost independent of
//! point-location.

use super::p1::P1Space;
use super::rt0::Rt0P0Space;
use super::{FemError, Velocity};
use crate::geo::{self, Point3};
use crate::mesh::{Locator, Mesh};

/// A line measure: polyline geometry plus mollification radius. Radius 0
/// spreads each chunk onto the P1 basis of its containing tet (the exact
/// line integral in the chunk-length limit).
#[derive(Debug, Clone)]
pub struct LineSource {
    pub polyline: Vec<Point3>,
    pub r_moll: f64,
}

struct Chunk {
    tet: usize,
    bary: [f64; 4],
    mid: Point3,
    len: f64,
}

/// A polyline sampled into located chunks of length at most one third of
/// the smallest element diameter.
pub struct SampledLine {
    chunks: Vec<Chunk>,
    total_len: f64,
}

impl SampledLine {
    pub fn new(mesh: &Mesh, locator: &Locator, polyline: &[Point3]) -> Result<Self, FemError> {
        let target = mesh.min_diameter() / 3.0;
        let mut chunks = Vec::new();
        let mut total_len = 0.0;
        for seg in polyline.windows(2) {
            let len = geo::dist(seg[0], seg[1]);
            if len == 0.0 {
                continue;
            }
            total_len += len;
            let n = (len / target).ceil().max(1.0) as usize;
            for i in 0..n {
                let t = (i as f64 + 0.5) / n as f64;
                let mid = geo::add(seg[0], geo::scale(geo::sub(seg[1], seg[0]), t));
                let (tet, bary) = locator
                    .locate(mid)
                    .ok_or(FemError::LineOutsideMesh(mid[0], mid[1], mid[2]))?;
                chunks.push(Chunk {
                    tet,
                    bary,
                    mid,
                    len: len / n as f64,
                });
            }
        }
        Ok(SampledLine { chunks, total_len })
    }

    pub fn total_length(&self) -> f64 {
        self.total_len
    }

    /// Line integral of a P1 field along the polyline (midpoint rule per
    /// chunk).
    pub fn integrate_p1(&self, space: &P1Space, dofs: &[f64]) -> f64 {
        self.chunks
            .iter()
            .map(|c| c.len * space.eval(dofs, c.tet, &c.bary))
            .sum()
    }

    /// P1 load vector of the line measure with density `density` per unit
    /// length: f_i = int_L density phi_i dl, mollified by a radial tent of
    /// radius `r_moll` when positive. Mollification preserves each chunk's
    /// mass exactly.
    pub fn p1_load<F: Fn(Point3) -> f64>(
        &self,
        space: &P1Space,
        locator: &Locator,
        density: F,
        r_moll: f64,
    ) -> Vec<f64> {
        let mut out = vec![0.0; space.ndofs()];
        for c in &self.chunks {
            let mass = density(c.mid) * c.len;
            if r_moll > 0.0 {
                let near = locator.vertices_near(c.mid, r_moll);
                let mut weights = Vec::with_capacity(near.len());
                let mut wsum = 0.0;
                for &v in &near {
                    let w = 1.0 - geo::dist(space.mesh.vertices[v], c.mid) / r_moll;
                    weights.push(w);
                    wsum += w;
                }
                if wsum > 0.0 {
                    for (&v, w) in near.iter().zip(&weights) {
                        out[v] += mass * w / wsum;
                    }
                    continue;
                }
                // No vertex inside the kernel: fall back to the element
                // distribution so no mass is lost.
            }
            let tet = space.mesh.tets[c.tet];
            for i in 0..4 {
                out[tet[i]] += mass * c.bary[i];
            }
        }
        out
    }

    /// Streamline part of the SUPG-tested line load:
    /// f_i = int_L density d (u . grad phi_i) dl, distributed on the
    /// containing elements (the mollification applies to the Galerkin part
    /// only).
    pub fn p1_streamline_load<F: Fn(Point3) -> f64, V: Velocity>(
        &self,
        space: &P1Space,
        density: F,
        vel: &V,
        d: f64,
    ) -> Vec<f64> {
        let mut out = vec![0.0; space.ndofs()];
        if d == 0.0 {
            return out;
        }
        for c in &self.chunks {
            let mass = density(c.mid) * c.len;
            let u = vel.at(c.tet, c.mid);
            let g = space.gradients(c.tet);
            let tet = space.mesh.tets[c.tet];
            for i in 0..4 {
                out[tet[i]] += mass * d * geo::dot(u, g[i]);
            }
        }
        out
    }

    /// P0 load: per-tet integral of the line density.
    pub fn p0_load<F: Fn(Point3) -> f64>(&self, mesh: &Mesh, density: F) -> Vec<f64> {
        let mut out = vec![0.0; mesh.ntets()];
        for c in &self.chunks {
            out[c.tet] += density(c.mid) * c.len;
        }
        out
    }

    /// Mollified P0 load: each chunk's mass is spread over the tets whose
    /// centroid lies within `r_moll`, tent-weighted by volume; mass is
    /// preserved chunk by chunk.
    pub fn p0_load_mollified<F: Fn(Point3) -> f64>(
        &self,
        mesh: &Mesh,
        locator: &Locator,
        density: F,
        r_moll: f64,
    ) -> Vec<f64> {
        if r_moll <= 0.0 {
            return self.p0_load(mesh, density);
        }
        let mut out = vec![0.0; mesh.ntets()];
        for c in &self.chunks {
            let mass = density(c.mid) * c.len;
            let near = locator.tets_near(c.mid, r_moll);
            let mut weights = Vec::with_capacity(near.len());
            let mut wsum = 0.0;
            for &k in &near {
                let vs = mesh.tet_vertices(k);
                let centroid = [
                    (vs[0][0] + vs[1][0] + vs[2][0] + vs[3][0]) / 4.0,
                    (vs[0][1] + vs[1][1] + vs[2][1] + vs[3][1]) / 4.0,
                    (vs[0][2] + vs[1][2] + vs[2][2] + vs[3][2]) / 4.0,
                ];
                let w = (1.0 - geo::dist(centroid, c.mid) / r_moll) * mesh.tet_volume(k);
                weights.push(w);
                wsum += w;
            }
            if wsum > 0.0 {
                for (&k, w) in near.iter().zip(&weights) {
                    out[k] += mass * w / wsum;
                }
            } else {
                out[c.tet] += mass;
            }
        }
        out
    }

    /// RT0 load tested with the divergence of the flux basis:
    /// f_f = int_L density div(psi_f) dl (div is elementwise constant).
    pub fn rt0_div_load<F: Fn(Point3) -> f64>(&self, space: &Rt0P0Space, density: F) -> Vec<f64> {
        let mut out = vec![0.0; space.nfluxes()];
        for c in &self.chunks {
            let mass = density(c.mid) * c.len;
            for local in 0..4 {
                let f = space.tet_facets[c.tet][local] as usize;
                out[f] += mass * space.basis_div(c.tet, local);
            }
        }
        out
    }
}

/// Builds the P1 load of a [`LineSource`] with constant density; the
/// common case for wells (density J/L per unit length).
pub fn line_source_load(
    space: &P1Space,
    locator: &Locator,
    src: &LineSource,
    density: f64,
) -> Result<Vec<f64>, FemError> {
    let sampled = SampledLine::new(space.mesh, locator, &src.polyline)?;
    Ok(sampled.p1_load(space, locator, |_| density, src.r_moll))
}
