//! Restarted GMRES with right Jacobi preconditioning for matrix-free
//! frozen-policy systems.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    /// Absolute stopping threshold on `‖b − A x‖₂`.
    pub tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 60,
            max_iter: 3000,
            tol: 1e-11,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(apply: &dyn Fn(&[f64]) -> Vec<f64>, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = apply(x);
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

/// Solves `A x = b` starting from the contents of `x`. `diag` is the Jacobi
/// preconditioner (entries must be nonzero).
pub fn gmres(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x: &mut [f64],
    diag: &[f64],
    opts: &GmresOptions,
) -> GmresOutcome {
    let n = b.len();
    let m = opts.restart.max(1).min(n.max(1));
    let inv: Vec<f64> = diag
        .iter()
        .map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut iterations = 0;
    let mut r = residual(apply, b, x);
    let mut beta = norm(&r);
    let mut stalled = 0;
    while beta > opts.tol && iterations < opts.max_iter {
        let start = beta;
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let z: Vec<f64> = v[k].iter().zip(&inv).map(|(a, d)| a * d).collect();
            let mut w = apply(&z);
            for (j, vj) in v.iter().enumerate() {
                let hj = dot(&w, vj);
                h[j][k] = hj;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hj * vi;
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let den = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if den == 0.0 {
                break;
            }
            cs[k] = h[k][k] / den;
            sn[k] = h[k + 1][k] / den;
            h[k][k] = den;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            iterations += 1;
            if g[k + 1].abs() <= 0.5 * opts.tol || hn == 0.0 || iterations >= opts.max_iter {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        // back substitution
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for ((xi, vi), di) in x.iter_mut().zip(&v[j]).zip(&inv) {
                *xi += yj * vi * di;
            }
        }
        r = residual(apply, b, x);
        beta = norm(&r);
        if k_used == 0 || beta > 0.999 * start {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    GmresOutcome {
        iterations,
        residual: beta,
        converged: beta <= opts.tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 40;
        let a = move |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut s = -4.0 * x[i];
                    if i > 0 {
                        s += 1.5 * x[i - 1];
                    }
                    if i + 1 < n {
                        s += 0.5 * x[i + 1];
                    }
                    s
                })
                .collect()
        };
        let truth: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a(&truth);
        let mut x = vec![0.0; n];
        let out = gmres(&a, &b, &mut x, &vec![-4.0; n], &GmresOptions { restart: 5, ..Default::default() });
        assert!(out.converged, "{out:?}");
        for (xi, ti) in x.iter().zip(&truth) {
            assert!((xi - ti).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_start_needs_no_iterations() {
        let a = |x: &[f64]| x.iter().map(|v| -2.0 * v).collect::<Vec<_>>();
        let mut x = vec![1.0; 5];
        let out = gmres(&a, &[-2.0; 5], &mut x, &[-2.0; 5], &GmresOptions::default());
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }
}
