//! Tetrahedral alveolus meshes with labeled boundaries and embedded pipes.
//!
//! A [`Mesh`] is immutable after construction: every constructor runs the
//! full validation pass (positive volumes after consistent orientation,
//! watertight boundary, one label per boundary facet). Element diameters
//! are the longest edge of each tetrahedron.

mod generate;
mod msh;

pub use generate::{classify_boundary, generate_alveolus, generate_solid, pipe_plan, structured_tets};
pub use msh::{read_msh, write_msh, MshError, TagTable};

use crate::geo::{self, Point3};
use std::collections::HashMap;

/// Boundary region of the alveolus: the covering membrane, the base and
/// the lateral surface in contact with the ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryLabel {
    Top,
    Bottom,
    Lateral,
}

impl BoundaryLabel {
    pub const ALL: [BoundaryLabel; 3] = [Self::Top, Self::Bottom, Self::Lateral];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Top => "TOP",
            Self::Bottom => "BOTTOM",
            Self::Lateral => "LATERAL",
        }
    }
}

/// One triangle of the mesh boundary, oriented outward from its owning tet.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFacet {
    pub verts: [usize; 3],
    pub tet: usize,
    pub label: BoundaryLabel,
}

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("tet {tet} references vertex {vertex} but the mesh has {nverts} vertices")]
    VertexOutOfRange {
        tet: usize,
        vertex: usize,
        nverts: usize,
    },
    #[error("tet {tet} is degenerate (volume {volume:.3e})")]
    DegenerateTet { tet: usize, volume: f64 },
    #[error("facet {verts:?} is shared by more than two tets; mesh is not manifold")]
    NonManifold { verts: [usize; 3] },
    #[error("{count} boundary facets carry no label: {preview}")]
    UnlabeledFacets { count: usize, preview: String },
    #[error("boundary label {label} is void; the boundary must partition into TOP, BOTTOM and LATERAL")]
    VoidLabel { label: &'static str },
    #[error("mesh has no tetrahedra")]
    Empty,
    #[error("pipe {pipe} leaves the mesh at point ({x:.3}, {y:.3}, {z:.3})")]
    PipeOutsideDomain { pipe: usize, x: f64, y: f64, z: f64 },
    #[error("pipe {pipe}: stored length {stored} differs from polyline arc length {measured}")]
    PipeLengthMismatch { pipe: usize, stored: f64, measured: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}

/// Local faces of a tet, ordered so that face `i` is opposite vertex `i`
/// and its vertices wind outward for a positively oriented tet.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    /// Positively oriented 4-tuples of vertex ids.
    pub tets: Vec<[usize; 4]>,
    pub boundary_facets: Vec<BoundaryFacet>,
    /// Longest edge of each tet.
    pub element_diameters: Vec<f64>,
    volumes: Vec<f64>,
}

impl Mesh {
    /// Builds a mesh from raw connectivity. Tets are reoriented to positive
    /// volume; the boundary (facets owned by exactly one tet) is extracted
    /// and labeled via `labeler`. When `require_all_labels` is set, each of
    /// the three labels must be non-void.
    pub fn assemble<F>(
        vertices: Vec<Point3>,
        mut tets: Vec<[usize; 4]>,
        labeler: F,
        require_all_labels: bool,
    ) -> Result<Mesh, MeshError>
    where
        F: Fn(&[usize; 3], usize) -> Option<BoundaryLabel>,
    {
        if tets.is_empty() {
            return Err(MeshError::Empty);
        }
        let nverts = vertices.len();
        for (k, tet) in tets.iter().enumerate() {
            for &v in tet {
                if v >= nverts {
                    return Err(MeshError::VertexOutOfRange {
                        tet: k,
                        vertex: v,
                        nverts,
                    });
                }
            }
        }

        let mut volumes = Vec::with_capacity(tets.len());
        let mut diameters = Vec::with_capacity(tets.len());
        let scale = bbox_extent(&vertices);
        for (k, tet) in tets.iter_mut().enumerate() {
            let mut vol = geo::tet_signed_volume(
                vertices[tet[0]],
                vertices[tet[1]],
                vertices[tet[2]],
                vertices[tet[3]],
            );
            if vol < 0.0 {
                tet.swap(2, 3);
                vol = -vol;
            }
            if vol <= 1e-14 * scale * scale * scale {
                return Err(MeshError::DegenerateTet { tet: k, volume: vol });
            }
            volumes.push(vol);
            let mut diam: f64 = 0.0;
            for a in 0..4 {
                for b in (a + 1)..4 {
                    diam = diam.max(geo::dist(vertices[tet[a]], vertices[tet[b]]));
                }
            }
            diameters.push(diam);
        }

        // A boundary facet is a face seen by exactly one tet.
        let mut seen: HashMap<[usize; 3], (usize, usize, u8)> = HashMap::new();
        for (k, tet) in tets.iter().enumerate() {
            for (local, face) in LOCAL_FACES.iter().enumerate() {
                let mut key = [tet[face[0]], tet[face[1]], tet[face[2]]];
                key.sort_unstable();
                match seen.get_mut(&key) {
                    None => {
                        seen.insert(key, (k, local, 1));
                    }
                    Some(entry) => {
                        entry.2 += 1;
                        if entry.2 > 2 {
                            return Err(MeshError::NonManifold { verts: key });
                        }
                    }
                }
            }
        }

        let mut boundary_facets = Vec::new();
        let mut unlabeled = Vec::new();
        // Deterministic boundary order: walk tets and faces, not the map.
        for (k, tet) in tets.iter().enumerate() {
            for (local, face) in LOCAL_FACES.iter().enumerate() {
                let verts = [tet[face[0]], tet[face[1]], tet[face[2]]];
                let mut key = verts;
                key.sort_unstable();
                let &(owner, owner_local, count) = &seen[&key];
                if count == 1 && owner == k && owner_local == local {
                    match labeler(&verts, k) {
                        Some(label) => boundary_facets.push(BoundaryFacet {
                            verts,
                            tet: k,
                            label,
                        }),
                        None => unlabeled.push(verts),
                    }
                }
            }
        }
        if !unlabeled.is_empty() {
            let preview = unlabeled
                .iter()
                .take(10)
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(", ");
            let suffix = if unlabeled.len() > 10 { ", ..." } else { "" };
            return Err(MeshError::UnlabeledFacets {
                count: unlabeled.len(),
                preview: format!("{preview}{suffix}"),
            });
        }
        if require_all_labels {
            for label in BoundaryLabel::ALL {
                if !boundary_facets.iter().any(|f| f.label == label) {
                    return Err(MeshError::VoidLabel {
                        label: label.as_str(),
                    });
                }
            }
        }

        Ok(Mesh {
            vertices,
            tets,
            boundary_facets,
            element_diameters: diameters,
            volumes,
        })
    }

    pub fn nvertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn ntets(&self) -> usize {
        self.tets.len()
    }

    pub fn tet_volume(&self, k: usize) -> f64 {
        self.volumes[k]
    }

    /// Total mesh volume.
    pub fn volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Largest element diameter.
    pub fn max_diameter(&self) -> f64 {
        self.element_diameters.iter().cloned().fold(0.0, f64::max)
    }

    /// Smallest element diameter.
    pub fn min_diameter(&self) -> f64 {
        self.element_diameters
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn tet_vertices(&self, k: usize) -> [Point3; 4] {
        let t = self.tets[k];
        [
            self.vertices[t[0]],
            self.vertices[t[1]],
            self.vertices[t[2]],
            self.vertices[t[3]],
        ]
    }

    /// Barycentric coordinates of `p` with respect to tet `k`.
    pub fn barycentric(&self, k: usize, p: Point3) -> [f64; 4] {
        let [a, b, c, d] = self.tet_vertices(k);
        let v = self.volumes[k];
        [
            geo::tet_signed_volume(p, b, c, d) / v,
            geo::tet_signed_volume(a, p, c, d) / v,
            geo::tet_signed_volume(a, b, p, d) / v,
            geo::tet_signed_volume(a, b, c, p) / v,
        ]
    }

    pub fn counts_by_label(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for f in &self.boundary_facets {
            match f.label {
                BoundaryLabel::Top => counts[0] += 1,
                BoundaryLabel::Bottom => counts[1] += 1,
                BoundaryLabel::Lateral => counts[2] += 1,
            }
        }
        counts
    }

    /// Vertex ids lying on facets with the given label.
    pub fn label_vertices(&self, labels: &[BoundaryLabel]) -> Vec<usize> {
        let mut flags = vec![false; self.nvertices()];
        for f in &self.boundary_facets {
            if labels.contains(&f.label) {
                for &v in &f.verts {
                    flags[v] = true;
                }
            }
        }
        flags
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect()
    }
}

fn bbox_extent(vertices: &[Point3]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in vertices {
        for d in 0..3 {
            lo[d] = lo[d].min(v[d]);
            hi[d] = hi[d].max(v[d]);
        }
    }
    (0..3).map(|d| hi[d] - lo[d]).fold(0.0f64, f64::max).max(1.0)
}

/// Uniform-grid point locator over the tets of a mesh.
pub struct Locator<'a> {
    mesh: &'a Mesh,
    lo: Point3,
    cell: f64,
    dims: [usize; 3],
    bins: Vec<Vec<u32>>,
}

impl<'a> Locator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &mesh.vertices {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let cell = mesh.max_diameter().max(1e-12);
        let dims = [
            (((hi[0] - lo[0]) / cell).ceil() as usize).max(1),
            (((hi[1] - lo[1]) / cell).ceil() as usize).max(1),
            (((hi[2] - lo[2]) / cell).ceil() as usize).max(1),
        ];
        let mut bins = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        for (k, _) in mesh.tets.iter().enumerate() {
            let vs = mesh.tet_vertices(k);
            let mut tlo = [f64::INFINITY; 3];
            let mut thi = [f64::NEG_INFINITY; 3];
            for v in vs {
                for d in 0..3 {
                    tlo[d] = tlo[d].min(v[d]);
                    thi[d] = thi[d].max(v[d]);
                }
            }
            let idx_lo = Self::clamp_idx(tlo, lo, cell, dims);
            let idx_hi = Self::clamp_idx(thi, lo, cell, dims);
            for i in idx_lo[0]..=idx_hi[0] {
                for j in idx_lo[1]..=idx_hi[1] {
                    for l in idx_lo[2]..=idx_hi[2] {
                        bins[(i * dims[1] + j) * dims[2] + l].push(k as u32);
                    }
                }
            }
        }
        Locator {
            mesh,
            lo,
            cell,
            dims,
            bins,
        }
    }

    fn clamp_idx(p: Point3, lo: Point3, cell: f64, dims: [usize; 3]) -> [usize; 3] {
        let mut out = [0usize; 3];
        for d in 0..3 {
            let i = ((p[d] - lo[d]) / cell).floor();
            out[d] = (i.max(0.0) as usize).min(dims[d] - 1);
        }
        out
    }

    /// Finds the tet containing `p` together with its barycentric
    /// coordinates; `None` when `p` is outside the mesh. Points on shared
    /// facets resolve to the lowest tet id for determinism.
    pub fn locate(&self, p: Point3) -> Option<(usize, [f64; 4])> {
        const TOL: f64 = -1e-9;
        let idx = Self::clamp_idx(p, self.lo, self.cell, self.dims);
        let bin = &self.bins[(idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]];
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for &k in bin {
            let k = k as usize;
            let bary = self.mesh.barycentric(k, p);
            let min = bary.iter().cloned().fold(f64::INFINITY, f64::min);
            if min >= TOL {
                match best {
                    Some((bk, _, bmin)) if bmin >= min || bk < k => {}
                    _ => best = Some((k, bary, min)),
                }
                if min >= 0.0 {
                    // Strictly inside; earlier tets cannot beat this.
                    break;
                }
            }
        }
        best.map(|(k, b, _)| (k, b))
    }

    /// Tet ids whose centroid lies within distance `r` of `p`.
    pub fn tets_near(&self, p: Point3, r: f64) -> Vec<usize> {
        let reach = (r / self.cell).ceil() as isize + 1;
        let center = Self::clamp_idx(p, self.lo, self.cell, self.dims);
        let mut out: Vec<usize> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for di in -reach..=reach {
            for dj in -reach..=reach {
                for dl in -reach..=reach {
                    let i = center[0] as isize + di;
                    let j = center[1] as isize + dj;
                    let l = center[2] as isize + dl;
                    if i < 0
                        || j < 0
                        || l < 0
                        || i as usize >= self.dims[0]
                        || j as usize >= self.dims[1]
                        || l as usize >= self.dims[2]
                    {
                        continue;
                    }
                    let bin = &self.bins
                        [((i as usize) * self.dims[1] + j as usize) * self.dims[2] + l as usize];
                    for &k in bin {
                        let k = k as usize;
                        if !seen.insert(k) {
                            continue;
                        }
                        let vs = self.mesh.tet_vertices(k);
                        let centroid = [
                            (vs[0][0] + vs[1][0] + vs[2][0] + vs[3][0]) / 4.0,
                            (vs[0][1] + vs[1][1] + vs[2][1] + vs[3][1]) / 4.0,
                            (vs[0][2] + vs[1][2] + vs[2][2] + vs[3][2]) / 4.0,
                        ];
                        if geo::dist(centroid, p) <= r {
                            out.push(k);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Vertex ids within distance `r` of `p` (superset candidates filtered
    /// by exact distance).
    pub fn vertices_near(&self, p: Point3, r: f64) -> Vec<usize> {
        let reach = (r / self.cell).ceil() as isize + 1;
        let center = Self::clamp_idx(p, self.lo, self.cell, self.dims);
        let mut flags: Vec<usize> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for di in -reach..=reach {
            for dj in -reach..=reach {
                for dl in -reach..=reach {
                    let i = center[0] as isize + di;
                    let j = center[1] as isize + dj;
                    let l = center[2] as isize + dl;
                    if i < 0
                        || j < 0
                        || l < 0
                        || i as usize >= self.dims[0]
                        || j as usize >= self.dims[1]
                        || l as usize >= self.dims[2]
                    {
                        continue;
                    }
                    let bin =
                        &self.bins[((i as usize) * self.dims[1] + j as usize) * self.dims[2] + l as usize];
                    for &k in bin {
                        for &v in &self.mesh.tets[k as usize] {
                            if seen.insert(v) && geo::dist(self.mesh.vertices[v], p) <= r {
                                flags.push(v);
                            }
                        }
                    }
                }
            }
        }
        flags.sort_unstable();
        flags
    }

    pub fn contains(&self, p: Point3, tol: f64) -> bool {
        let idx = Self::clamp_idx(p, self.lo, self.cell, self.dims);
        let bin = &self.bins[(idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]];
        bin.iter().any(|&k| {
            let bary = self.mesh.barycentric(k as usize, p);
            bary.iter().all(|&b| b >= -tol)
        })
    }
}

/// Role of an embedded pipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipeRole {
    Injector,
    Extractor,
}

/// A horizontal well idealized as a polyline; the 3D cylinder of radius
/// `radius` is never meshed.
#[derive(Debug, Clone)]
pub struct Pipe {
    pub polyline: Vec<Point3>,
    pub role: PipeRole,
    pub length: f64,
    pub radius: f64,
}

impl Pipe {
    pub fn arc_length(&self) -> f64 {
        self.polyline
            .windows(2)
            .map(|w| geo::dist(w[0], w[1]))
            .sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipeNetwork {
    pub pipes: Vec<Pipe>,
}

impl PipeNetwork {
    /// Checks the stored lengths against the polyline arc lengths (1e-9
    /// relative) and that every polyline point lies inside `mesh`.
    pub fn validate(&self, mesh: &Mesh) -> Result<(), MeshError> {
        let locator = Locator::new(mesh);
        for (i, pipe) in self.pipes.iter().enumerate() {
            let measured = pipe.arc_length();
            if (measured - pipe.length).abs() > 1e-9 * pipe.length.max(1.0) {
                return Err(MeshError::PipeLengthMismatch {
                    pipe: i,
                    stored: pipe.length,
                    measured,
                });
            }
            for &p in &pipe.polyline {
                if !locator.contains(p, 1e-9) {
                    return Err(MeshError::PipeOutsideDomain {
                        pipe: i,
                        x: p[0],
                        y: p[1],
                        z: p[2],
                    });
                }
            }
        }
        Ok(())
    }

    pub fn extractors(&self) -> impl Iterator<Item = &Pipe> {
        self.pipes.iter().filter(|p| p.role == PipeRole::Extractor)
    }

    pub fn injectors(&self) -> impl Iterator<Item = &Pipe> {
        self.pipes.iter().filter(|p| p.role == PipeRole::Injector)
    }
}

/// Parameters of the alveolus geometry: a reference cube mapped onto a
/// sheared, reverse-truncated-pyramidal hexahedron with embedded pipe
/// levels.
///
/// Pipe levels default to 1/3 and 2/3 of the height for both networks;
/// injector lines are offset by half a slot in-plane so they interleave
/// with the drains of the same level.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySpec {
    /// Side of the square base (m).
    pub base_side: f64,
    /// Height of the alveolus (m).
    pub height: f64,
    /// Outward slope of the lateral walls from the vertical (rad).
    pub wall_slope: f64,
    /// Optional lateral shear per unit height.
    pub shear: Option<[f64; 2]>,
    pub drain_levels: usize,
    pub injector_levels: usize,
    /// Explicit level heights (m); computed from the level counts when absent.
    pub drain_level_heights: Option<Vec<f64>>,
    pub injector_level_heights: Option<Vec<f64>>,
    pub pipes_per_level: usize,
    /// Length of every pipe (m).
    pub pipe_length: f64,
    /// Physical pipe radius (m); geometry metadata only.
    pub pipe_radius: f64,
    /// Requested element size (m).
    pub target_mesh_size: f64,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec {
            base_side: 90.0,
            height: 90.0,
            wall_slope: std::f64::consts::FRAC_PI_6,
            shear: None,
            drain_levels: 2,
            injector_levels: 2,
            drain_level_heights: None,
            injector_level_heights: None,
            pipes_per_level: 10,
            pipe_length: 25.0,
            pipe_radius: 0.05,
            target_mesh_size: 5.0,
        }
    }
}

impl GeometrySpec {
    /// Cross-section side length at height `z`.
    pub fn side_at(&self, z: f64) -> f64 {
        self.base_side + 2.0 * z * self.wall_slope.tan()
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if !(self.base_side > 0.0) {
            return Err(MeshError::InvalidGeometry(format!(
                "base_side must be positive, got {}",
                self.base_side
            )));
        }
        if !(self.height > 0.0) {
            return Err(MeshError::InvalidGeometry(format!(
                "height must be positive, got {}",
                self.height
            )));
        }
        if !(self.wall_slope.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(MeshError::InvalidGeometry(format!(
                "wall_slope must lie in (-pi/2, pi/2), got {}",
                self.wall_slope
            )));
        }
        if self.side_at(self.height) <= 0.0 {
            return Err(MeshError::InvalidGeometry(format!(
                "slope {} over height {} collapses the top face and inverts elements",
                self.wall_slope, self.height
            )));
        }
        if !(self.target_mesh_size > 0.0) {
            return Err(MeshError::InvalidGeometry(format!(
                "target_mesh_size must be positive, got {}",
                self.target_mesh_size
            )));
        }
        Ok(())
    }

    /// Analytic volume of the solid: a frustum, possibly sheared (shear
    /// preserves volume).
    pub fn analytic_volume(&self) -> f64 {
        let a_base = self.base_side * self.base_side;
        let top = self.side_at(self.height);
        let a_top = top * top;
        self.height / 3.0 * (a_base + a_top + (a_base * a_top).sqrt())
    }
}
