//! Finite-element spaces and assembly shared by all physics steps:
//! P1 Lagrange scalars, the lowest-order Raviart-Thomas / P0 pair for the
//! mixed Darcy solve, tet quadrature and discretized line sources.

pub mod line;
pub mod p1;
pub mod quadrature;
pub mod rt0;

pub use line::{LineSource, SampledLine};
pub use p1::P1Space;
pub use rt0::{Rt0P0Space, Rt0Velocity};

use crate::geo::Point3;
use crate::mesh::Mesh;

#[derive(Debug, thiserror::Error)]
pub enum FemError {
    #[error("point ({0:.4}, {1:.4}, {2:.4}) lies outside the mesh")]
    PointOutsideMesh(f64, f64, f64),
    #[error("polyline of line source leaves the domain at ({0:.4}, {1:.4}, {2:.4})")]
    LineOutsideMesh(f64, f64, f64),
    #[error("field has {got} dofs, space has {want}")]
    DofMismatch { got: usize, want: usize },
}

/// A velocity field evaluable inside a given tet. Implementations:
/// constant fields, closures of position and RT0 facet-flux fields.
pub trait Velocity {
    fn at(&self, tet: usize, p: Point3) -> Point3;

    /// Root-mean-square magnitude over the domain, sqrt(int |u|^2 / |Omega|).
    fn rms(&self, mesh: &Mesh) -> f64 {
        let rule = quadrature::tet_rule(2);
        let mut acc = 0.0;
        for k in 0..mesh.ntets() {
            let vs = mesh.tet_vertices(k);
            let vol = mesh.tet_volume(k);
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let p = bary_point(&vs, bary);
                let u = self.at(k, p);
                acc += w * vol * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
            }
        }
        (acc / mesh.volume()).sqrt()
    }
}

/// Spatially constant velocity.
#[derive(Debug, Clone, Copy)]
pub struct ConstVelocity(pub Point3);

impl Velocity for ConstVelocity {
    fn at(&self, _tet: usize, _p: Point3) -> Point3 {
        self.0
    }

    fn rms(&self, _mesh: &Mesh) -> f64 {
        crate::geo::norm(self.0)
    }
}

/// Velocity given as an analytic closure of position.
pub struct FnVelocity<F: Fn(Point3) -> Point3>(pub F);

impl<F: Fn(Point3) -> Point3> Velocity for FnVelocity<F> {
    fn at(&self, _tet: usize, p: Point3) -> Point3 {
        self.0(p)
    }
}

/// Physical coordinates of a barycentric point of a tet.
#[inline]
pub fn bary_point(vs: &[Point3; 4], bary: &[f64; 4]) -> Point3 {
    let mut p = [0.0; 3];
    for (v, &b) in vs.iter().zip(bary) {
        for d in 0..3 {
            p[d] += b * v[d];
        }
    }
    p
}
