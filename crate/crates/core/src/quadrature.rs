//! Gauss-Legendre and Gauss-Hermite rules.
//!
//! Nodes are found by Newton iteration on the three-term recurrence of the
//! orthogonal polynomials, which gives nodes and weights to near machine
//! precision for the node counts used here (up to a few hundred).

use std::f64::consts::PI;

const MAX_NEWTON: usize = 100;

/// Gauss-Legendre rule on [-1, 1]; nodes stored in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..MAX_NEWTON {
                let (p, d) = legendre(n, z);
                let step = p / d;
                z -= step;
                if step.abs() <= 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre(n, z);
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped affinely onto `[lo, hi]`.
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        self.mapped(lo, hi).map(|(x, w)| w * f(x)).sum()
    }
}

/// Value and derivative of the Legendre polynomial of degree `n` at `z`.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
    }
    let d = n as f64 * (z * p1 - p2) / (z * z - 1.0);
    (p1, d)
}

/// Gauss-Hermite rule for the weight `exp(-x^2)`; nodes stored in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        // pi^(-1/4)
        const PIM4: f64 = 0.751_125_544_464_942_5;
        let nf = n as f64;
        // roots[i] is the i-th largest positive root
        let mut roots = vec![0.0; n.div_ceil(2)];
        let mut wts = vec![0.0; n.div_ceil(2)];
        let mut z = 0.0;
        for i in 0..roots.len() {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * roots[0],
                3 => 1.91 * z - 0.91 * roots[1],
                _ => 2.0 * z - roots[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..MAX_NEWTON {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let step = p1 / pp;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            roots[i] = z;
            wts[i] = 2.0 / (pp * pp);
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for (i, (&r, &w)) in roots.iter().zip(&wts).enumerate() {
            nodes[i] = -r;
            nodes[n - 1 - i] = r;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Standard-normal abscissae `z_i = sqrt(2) x_i` with probability weights `w_i / sqrt(pi)`.
    pub fn normal_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let scale = 2f64.sqrt();
        let norm = PI.sqrt().recip();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (scale * x, norm * w))
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`.
    pub fn expect_normal<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.normal_points().map(|(z, w)| w * f(z)).sum()
    }
}
