//! Small numerical helpers shared by the quadrature, the Lévy discretization
//! and the Lyapunov verifier.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Fixed-order Gauss–Legendre rule on `[a, b]`.
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(c + r * x);
        }
        acc * r
    }
}

/// Surface measure of the unit sphere in ℝ^d: 2 for d = 1, 2π for d = 2.
pub fn sphere_measure(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        _ => 2.0 * PI,
    }
}

/// `C(d,s) = s·4^s·Γ(d/2+s) / (π^{d/2}·Γ(1−s))`, the constant in
/// `(−Δ)^s u(x) = C(d,s)·P.V.∫ (u(x)−u(y))/|x−y|^{d+2s} dy`.
pub fn fractional_laplacian_constant(dim: usize, s: f64) -> f64 {
    let d = dim as f64;
    s * 4f64.powf(s) * gamma(0.5 * d + s) / (PI.powf(0.5 * d) * gamma(1.0 - s))
}

/// Kernel factor `k` for which `∫ δ(u,x,y)·k/|y|^{d+2s} dy = −(−Δ)^s u(x)`.
pub fn laplacian_kernel_factor(dim: usize, s: f64) -> f64 {
    0.5 * fractional_laplacian_constant(dim, s)
}
