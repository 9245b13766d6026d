//! Shared oracles for the integration and acceptance suites. Everything
//! here is independent of the library's solution paths: a generic
//! adaptive Dormand-Prince integrator, the closed-form logistic solution
//! of the uniform carbon equation, and small mesh helpers.

#![allow(dead_code)]

use biogas::mesh::{classify_boundary, structured_tets, GeometrySpec, Mesh};

/// Adaptive Dormand-Prince RK45 for scalar autonomous ODEs y' = f(y).
pub fn rk45<F: Fn(f64) -> f64>(f: F, y0: f64, t_end: f64, tol: f64) -> f64 {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    // 5th order solution weights (same as the last A row) and 4th order
    // embedded weights.
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let mut t = 0.0;
    let mut y = y0;
    let mut h = t_end / 100.0;
    let mut k = [0.0f64; 7];
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        k[0] = f(y);
        for stage in 0..6 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(stage + 1) {
                yi += h * A[stage][j] * kj;
            }
            k[stage + 1] = f(yi);
        }
        let mut y5 = y;
        let mut y4 = y;
        for j in 0..7 {
            y5 += h * B5[j] * k[j];
            y4 += h * B4[j] * k[j];
        }
        let err = (y5 - y4).abs().max(1e-300);
        let scale = tol * y.abs().max(1.0);
        if err <= scale {
            t += h;
            y = y5;
        }
        let factor = (0.9 * (scale / err).powf(0.2)).clamp(0.2, 5.0);
        h *= factor;
    }
    y
}

/// Closed-form solution of the uniform carbon equation
/// (1 - phi) C' = -a_b (b0 + c_b (C0 - C)) Psi C, a logistic decay.
pub fn carbon_exact(
    t: f64,
    phi: f64,
    a_b: f64,
    b0: f64,
    c_b: f64,
    c0: f64,
    psi: f64,
) -> f64 {
    let beta = b0 + c_b * c0;
    let kappa = a_b * psi / (1.0 - phi);
    beta * c0 / (c_b * c0 + (beta - c_b * c0) * (beta * kappa * t).exp())
}

/// Right-hand side of the same ODE for the RK45 oracle.
pub fn carbon_rhs(
    c: f64,
    phi: f64,
    a_b: f64,
    b0: f64,
    c_b: f64,
    c0: f64,
    psi: f64,
) -> f64 {
    -a_b * (b0 + c_b * (c0 - c)) * c * psi / (1.0 - phi)
}

/// Corner-anchored cube [0, side]^3 with n cells per edge.
pub fn unit_cube(n: usize, side: f64) -> Mesh {
    let (verts, tets) =
        structured_tets([n, n, n], |x, y, z| [x * side, y * side, z * side]);
    classify_boundary(
        verts,
        tets,
        &GeometrySpec {
            base_side: side,
            height: side,
            wall_slope: 0.0,
            ..GeometrySpec::default()
        },
    )
    .unwrap()
}

/// Small centered test geometry with a single pipe per network, suitable
/// for fast full-scenario runs.
pub fn small_full_geometry() -> GeometrySpec {
    GeometrySpec {
        base_side: 12.0,
        height: 12.0,
        wall_slope: 0.0,
        drain_levels: 1,
        injector_levels: 1,
        pipes_per_level: 1,
        pipe_length: 5.0,
        pipe_radius: 0.05,
        target_mesh_size: 3.0,
        ..GeometrySpec::default()
    }
}
