//! Composite and adaptive Gauss–Legendre rules on top of `gauss-quad`.

use gauss_quad::legendre::GaussLegendre;

pub struct Composite {
    nodes: Vec<(f64, f64)>,
}

impl Composite {
    pub fn new(deg: usize) -> Self {
        let rule = GaussLegendre::new(deg.max(2)).expect("degree >= 2");
        Composite { nodes: rule.iter().map(|(x, w)| (*x, *w)).collect() }
    }

    /// Integrates over `panels` equal sub-intervals of [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let mut s = 0.0;
            for &(x, w) in &self.nodes {
                s += w * f(lo + 0.5 * h * (x + 1.0));
            }
            total += 0.5 * h * s;
        }
        total
    }

    /// Absolute nodes and weights of the composite rule on [a, b].
    pub fn points(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let h = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for &(x, w) in &self.nodes {
                out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
            }
        }
        out
    }
}

/// Adaptive bisection with a 10-point rule, comparing each panel to its two halves.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let rule = Composite::new(10);
    let whole = rule.integrate(a, b, 1, f);
    refine(&rule, f, a, b, whole, tol, 40)
}

fn refine<F: Fn(f64) -> f64>(rule: &Composite, f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(a, mid, 1, f);
    let right = rule.integrate(mid, b, 1, f);
    let split = left + right;
    if depth == 0 || (split - whole).abs() <= tol.max(1e-15 * split.abs()) {
        return split;
    }
    refine(rule, f, a, mid, left, 0.5 * tol, depth - 1) + refine(rule, f, mid, b, right, 0.5 * tol, depth - 1)
}
