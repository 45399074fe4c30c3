//! Gauss–Legendre rules, panel layouts and pairwise reductions.

use std::f64::consts::PI;
use std::ops::Add;

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
///
/// Nodes are ascending and mirror-symmetric bit-for-bit (`x[n-1-i] == -x[i]`),
/// which the parity checks downstream depend on.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n / 2;
        for i in 0..half {
            // Tricomi-style initial guess, then Newton on P_n
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // the guess runs from +1 downward
            nodes[n - 1 - i] = x;
            nodes[i] = -x;
            weights[n - 1 - i] = w;
            weights[i] = w;
        }
        if n % 2 == 1 {
            let (_, d) = legendre_with_derivative(n, 0.0);
            nodes[half] = 0.0;
            weights[half] = 2.0 / (d * d);
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped affinely onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let x = self.nodes.iter().map(|&t| mid + half * t).collect();
        let w = self.weights.iter().map(|&w| half * w).collect();
        (x, w)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// Splits [a, b] into equal panels no longer than `max_len`, honouring
/// interior breakpoints. Returns panel edges per segment.
pub fn panel_edges(a: f64, b: f64, breaks: &[f64], max_len: f64, refine: usize) -> Vec<(f64, f64)> {
    let mut cuts = vec![a];
    for &x in breaks {
        if x > a && x < b {
            cuts.push(x);
        }
    }
    cuts.push(b);
    let mut out = Vec::new();
    for seg in cuts.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let n = (((hi - lo) / max_len).ceil() as usize).max(1) * refine.max(1);
        let h = (hi - lo) / n as f64;
        for j in 0..n {
            let p0 = lo + j as f64 * h;
            let p1 = if j + 1 == n { hi } else { lo + (j + 1) as f64 * h };
            out.push((p0, p1));
        }
    }
    out
}

const PAIRWISE_BLOCK: usize = 32;

/// Tree summation with a short sequential base case.
pub fn pairwise_sum<T: Copy + Default + Add<Output = T>>(xs: &[T]) -> T {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut acc = T::default();
        for &x in xs {
            acc = acc + x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}
