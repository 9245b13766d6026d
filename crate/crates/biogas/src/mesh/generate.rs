//! Structured alveolus mesh generation.
//!
//! The reference cube [0,1]^3 is subdivided into hexahedral cells, each
//! split into 6 tets by the Kuhn decomposition (all tets share the cell
//! diagonal), then mapped onto the sheared/pyramidal solid. The Kuhn split
//! keeps face diagonals consistent between neighboring cells, so the
//! connectivity is deterministic and watertight.

use super::{BoundaryLabel, GeometrySpec, Mesh, MeshError, Pipe, PipeNetwork, PipeRole};
use crate::geo::Point3;

/// The six Kuhn tets of the unit cell, as axis permutations: each tet is
/// (0,0,0) -> +e_a -> +e_b -> (1,1,1).
const KUHN_PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

fn vertex_id(i: usize, j: usize, k: usize, n: [usize; 3]) -> usize {
    (i * (n[1] + 1) + j) * (n[2] + 1) + k
}

/// Structured Kuhn-split tetrahedralization of the reference cube with
/// `n = [nx, ny, nz]` cells per direction, vertices mapped by `map`.
pub fn structured_tets<F>(n: [usize; 3], map: F) -> (Vec<Point3>, Vec<[usize; 4]>)
where
    F: Fn(f64, f64, f64) -> Point3,
{
    let mut vertices = Vec::with_capacity((n[0] + 1) * (n[1] + 1) * (n[2] + 1));
    for i in 0..=n[0] {
        for j in 0..=n[1] {
            for k in 0..=n[2] {
                vertices.push(map(
                    i as f64 / n[0] as f64,
                    j as f64 / n[1] as f64,
                    k as f64 / n[2] as f64,
                ));
            }
        }
    }
    let mut tets = Vec::with_capacity(6 * n[0] * n[1] * n[2]);
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let corner = |d: [usize; 3]| vertex_id(i + d[0], j + d[1], k + d[2], n);
                for perm in KUHN_PERMS {
                    let mut d = [0usize; 3];
                    let v0 = corner(d);
                    d[perm[0]] = 1;
                    let v1 = corner(d);
                    d[perm[1]] = 1;
                    let v2 = corner(d);
                    let v3 = corner([1, 1, 1]);
                    tets.push([v0, v1, v2, v3]);
                }
            }
        }
    }
    (vertices, tets)
}

/// Labels the boundary of a raw mesh by elevation: TOP where all facet
/// vertices sit at `z_min + height` (within 1e-6 of the height), BOTTOM at
/// `z_min`, LATERAL otherwise. Total on valid meshes; label classes may be
/// void (a single tet has no TOP facet).
pub fn classify_boundary(
    vertices: Vec<Point3>,
    tets: Vec<[usize; 4]>,
    geometry: &GeometrySpec,
) -> Result<Mesh, MeshError> {
    let z_min = vertices
        .iter()
        .map(|v| v[2])
        .fold(f64::INFINITY, f64::min);
    let height = geometry.height;
    let tol = 1e-6 * height;
    let verts_ref = vertices.clone();
    Mesh::assemble(
        vertices,
        tets,
        move |facet, _| {
            let zs = facet.map(|v| verts_ref[v][2]);
            if zs.iter().all(|&z| (z - (z_min + height)).abs() <= tol) {
                Some(BoundaryLabel::Top)
            } else if zs.iter().all(|&z| (z - z_min).abs() <= tol) {
                Some(BoundaryLabel::Bottom)
            } else {
                Some(BoundaryLabel::Lateral)
            }
        },
        false,
    )
}

/// Builds the alveolus mesh and its pipe networks from a geometry spec.
///
/// The cross-section is centered on the (possibly sheared) vertical axis;
/// z runs from 0 at the base to `height` at the top. Pipes run along x and
/// are centered on the section axis at their level.
pub fn generate_alveolus(spec: &GeometrySpec) -> Result<(Mesh, PipeNetwork), MeshError> {
    spec.validate()?;
    let size = spec.target_mesh_size;
    let mean_side = spec.side_at(spec.height / 2.0);
    let n_xy = ((mean_side / size).round() as usize).max(1);
    let n_z = ((spec.height / size).round() as usize).max(1);
    let mesh = generate_solid(spec, [n_xy, n_xy, n_z])?;
    let pipes = pipe_plan(spec)?;
    pipes.validate(&mesh)?;
    Ok((mesh, pipes))
}

/// Same as [`generate_alveolus`] with an explicit subdivision count.
pub fn generate_solid(spec: &GeometrySpec, n: [usize; 3]) -> Result<Mesh, MeshError> {
    spec.validate()?;
    let shear = spec.shear.unwrap_or([0.0, 0.0]);
    let (vertices, tets) = structured_tets(n, |x, y, z| {
        let side = spec.side_at(z * spec.height);
        [
            (x - 0.5) * side + shear[0] * z * spec.height,
            (y - 0.5) * side + shear[1] * z * spec.height,
            z * spec.height,
        ]
    });
    classify_boundary(vertices, tets, spec)
}

fn level_heights(explicit: &Option<Vec<f64>>, count: usize, height: f64) -> Vec<f64> {
    match explicit {
        Some(h) => h.clone(),
        None => (1..=count)
            .map(|l| height * l as f64 / (count + 1) as f64)
            .collect(),
    }
}

/// The pipe networks of a geometry spec, without building the mesh.
pub fn pipe_plan(spec: &GeometrySpec) -> Result<PipeNetwork, MeshError> {
    let shear = spec.shear.unwrap_or([0.0, 0.0]);
    let mut pipes = Vec::new();
    let m = spec.pipes_per_level;
    let mut build_level = |z: f64, role: PipeRole, y_offset_slots: f64| -> Result<(), MeshError> {
        let side = spec.side_at(z);
        if spec.pipe_length >= side {
            return Err(MeshError::InvalidGeometry(format!(
                "pipe length {} does not fit in the section of side {side:.3} at z = {z:.3}",
                spec.pipe_length
            )));
        }
        let cx = shear[0] * z;
        let cy = shear[1] * z;
        for i in 0..m {
            let slot = (i as f64 + 1.0 + y_offset_slots) / (m as f64 + 1.0);
            let y = cy + side * (slot - 0.5);
            let half = spec.pipe_length / 2.0;
            pipes.push(Pipe {
                polyline: vec![[cx - half, y, z], [cx + half, y, z]],
                role,
                length: spec.pipe_length,
                radius: spec.pipe_radius,
            });
        }
        Ok(())
    };
    for z in level_heights(&spec.drain_level_heights, spec.drain_levels, spec.height) {
        build_level(z, PipeRole::Extractor, 0.0)?;
    }
    // Injector lines are interleaved half a slot away from the drains.
    for z in level_heights(
        &spec.injector_level_heights,
        spec.injector_levels,
        spec.height,
    ) {
        build_level(z, PipeRole::Injector, -0.5)?;
    }
    Ok(PipeNetwork { pipes })
}
