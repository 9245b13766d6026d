//! Quadrature on the reference tetrahedron.
//!
//! Rules are expressed in barycentric coordinates with weights summing to
//! one (fractions of the element volume). Degrees 1 and 2 use the
//! classical symmetric rules; higher degrees fall back to tensor-product
//! Gauss-Legendre through the collapsed-cube (Duffy) map, which is exact
//! for the requested degree by construction.

#[derive(Debug, Clone)]
pub struct TetRule {
    pub degree: usize,
    /// Barycentric coordinates of the quadrature points.
    pub points: Vec<[f64; 4]>,
    /// Weights summing to 1.
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes/weights on [0, 1], computed by Newton iteration on
/// the Legendre polynomial.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess on [-1, 1].
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes.push(0.5 * (x + 1.0));
        weights.push(0.5 * w);
    }
    (nodes, weights)
}

/// Legendre polynomial P_n and its derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Quadrature rule exact for polynomials of total degree `degree` on the
/// reference tet.
pub fn tet_rule(degree: usize) -> TetRule {
    match degree {
        0 | 1 => TetRule {
            degree: 1,
            points: vec![[0.25; 4]],
            weights: vec![1.0],
        },
        2 => {
            let a = 0.585_410_196_624_968_5;
            let b = 0.138_196_601_125_010_5;
            let mut points = Vec::with_capacity(4);
            for i in 0..4 {
                let mut p = [b; 4];
                p[i] = a;
                points.push(p);
            }
            TetRule {
                degree: 2,
                points,
                weights: vec![0.25; 4],
            }
        }
        d => duffy_rule(d),
    }
}

/// Collapsed-cube Gauss rule; the Jacobian raises the per-axis degree by
/// at most 2, hence n = ceil((d + 3) / 2) points per axis.
fn duffy_rule(degree: usize) -> TetRule {
    let n = (degree + 3).div_ceil(2);
    let (xs, ws) = gauss_legendre_01(n);
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for (i, &xi) in xs.iter().enumerate() {
        for (j, &eta) in xs.iter().enumerate() {
            for (k, &zeta) in xs.iter().enumerate() {
                let x = xi;
                let y = eta * (1.0 - xi);
                let z = zeta * (1.0 - xi) * (1.0 - eta);
                let jac = (1.0 - xi) * (1.0 - xi) * (1.0 - eta);
                // Normalize by the reference volume 1/6.
                weights.push(6.0 * ws[i] * ws[j] * ws[k] * jac);
                points.push([1.0 - x - y - z, x, y, z]);
            }
        }
    }
    TetRule {
        degree,
        points,
        weights,
    }
}
