//! Truncated half-line grids and composite quadrature.
//!
//! Every integral over `[0, +inf)` in this crate is discretized on a
//! [`HalfLineGrid`] covering `[0, x_max]`, optionally extended past `x_max`
//! by a tail rule with the same panel width. All sums run in ascending node
//! order so results are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Quadrature rule used on each panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Trapezoid,
    /// Composite Gauss-Legendre with the given number of points per panel.
    GaussLegendre(usize),
}

impl Default for Rule {
    fn default() -> Self {
        Rule::GaussLegendre(4)
    }
}

/// Plain node/weight list.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_k w_k f(t_k)` in ascending node order.
    pub fn integrate_fn<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalfLineGrid {
    pub x_max: f64,
    pub n_panels: usize,
    pub rule: Rule,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Builds a composite grid on `[0, x_max]`.
pub fn build_grid(x_max: f64, n_panels: usize, rule: Rule) -> Result<HalfLineGrid> {
    if !(x_max > 0.0) || !x_max.is_finite() {
        return Err(invalid(format!("x_max must be positive and finite, got {x_max}")));
    }
    if n_panels == 0 {
        return Err(invalid("n_panels must be at least 1"));
    }
    let panels = composite(0.0, x_max, n_panels, rule)?;
    Ok(HalfLineGrid {
        x_max,
        n_panels,
        rule,
        nodes: panels.nodes,
        weights: panels.weights,
    })
}

impl HalfLineGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn panel_width(&self) -> f64 {
        self.x_max / self.n_panels as f64
    }

    /// `sum_i w_i s_i`, in ascending node order.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        if samples.len() != self.nodes.len() {
            return Err(invalid(format!(
                "sample count {} does not match node count {}",
                samples.len(),
                self.nodes.len()
            )));
        }
        Ok(self.weights.iter().zip(samples).map(|(w, s)| w * s).sum())
    }

    pub fn integrate_fn<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Same rule with twice as many panels.
    pub fn refined(&self) -> HalfLineGrid {
        build_grid(self.x_max, 2 * self.n_panels, self.rule).expect("refining a valid grid")
    }

    /// Rule over `[x_max, x_max + m h]` with the grid's panel width `h`,
    /// `m = ceil(length / h)`.
    pub fn tail_rule(&self, length: f64) -> QuadratureRule {
        if !(length > 0.0) {
            return QuadratureRule { nodes: Vec::new(), weights: Vec::new() };
        }
        let h = self.panel_width();
        let m = (length / h).ceil().max(1.0) as usize;
        composite(self.x_max, self.x_max + m as f64 * h, m, self.rule)
            .expect("tail rule parameters are valid")
    }

    /// Grid nodes followed by the tail rule: covers `[0, x_max + length]`.
    pub fn extended_rule(&self, length: f64) -> QuadratureRule {
        let tail = self.tail_rule(length);
        let mut nodes = self.nodes.clone();
        let mut weights = self.weights.clone();
        nodes.extend_from_slice(&tail.nodes);
        weights.extend_from_slice(&tail.weights);
        QuadratureRule { nodes, weights }
    }

    pub fn as_rule(&self) -> QuadratureRule {
        QuadratureRule { nodes: self.nodes.clone(), weights: self.weights.clone() }
    }
}

/// Composite rule on `[a, b]` with `n_panels` equal panels.
pub fn composite(a: f64, b: f64, n_panels: usize, rule: Rule) -> Result<QuadratureRule> {
    if !(b > a) {
        return Err(invalid(format!("empty interval [{a}, {b}]")));
    }
    if n_panels == 0 {
        return Err(invalid("n_panels must be at least 1"));
    }
    let h = (b - a) / n_panels as f64;
    match rule {
        Rule::Trapezoid => {
            let nodes: Vec<f64> = (0..=n_panels)
                .map(|k| if k == n_panels { b } else { a + k as f64 * h })
                .collect();
            let weights = (0..=n_panels)
                .map(|k| if k == 0 || k == n_panels { 0.5 * h } else { h })
                .collect();
            Ok(QuadratureRule { nodes, weights })
        }
        Rule::GaussLegendre(p) => {
            let (xi, wi) = gauss_legendre(p)?;
            let mut nodes = Vec::with_capacity(n_panels * p);
            let mut weights = Vec::with_capacity(n_panels * p);
            for k in 0..n_panels {
                let lo = a + k as f64 * h;
                let half = 0.5 * h;
                for (&x, &w) in xi.iter().zip(&wi) {
                    nodes.push(lo + half * (x + 1.0));
                    weights.push(half * w);
                }
            }
            Ok(QuadratureRule { nodes, weights })
        }
    }
}

/// Integrates `f` over `[a, b]` with a composite Gauss-Legendre rule.
pub fn integrate_interval<F: Fn(f64) -> f64>(
    a: f64,
    b: f64,
    n_panels: usize,
    points: usize,
    f: F,
) -> Result<f64> {
    Ok(composite(a, b, n_panels, Rule::GaussLegendre(points))?.integrate_fn(f))
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
///
/// Newton iteration on `P_p` from the Tricomi initial guesses, with the
/// three-term recurrence for `P_p` and its derivative.
pub fn gauss_legendre(p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if p == 0 || p > 128 {
        return Err(invalid(format!("Gauss-Legendre order must be in 1..=128, got {p}")));
    }
    let n = p as f64;
    let mut nodes = vec![0.0; p];
    let mut weights = vec![0.0; p];
    for i in 0..p.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (pn, d) = legendre_with_derivative(p, x);
            dp = d;
            let dx = pn / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(p, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[p - 1 - i] = x;
        weights[i] = w;
        weights[p - 1 - i] = w;
    }
    if p % 2 == 1 {
        nodes[p / 2] = 0.0;
    }
    Ok((nodes, weights))
}

fn legendre_with_derivative(p: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=p {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if p == 0 {
        return (1.0, 0.0);
    }
    let n = p as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
