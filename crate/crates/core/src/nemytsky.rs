//! The Hammerstein-Nemytsky equation
//! `Phi(x) = G0(x, Phi(x)) + int K(x,t) G1(t, Phi(t)) dt`
//! and its increasing iteration from `Phi_0 = xi gamma`.
//!
//! Catalog forms:
//! * g1: `G0 = 2 xi gamma u / (u + xi gamma)`
//! * g2: g1 plus `eps*(x) u^2` with `0 <= eps* <= ((eta-2xi)gamma + xi gamma^2) / (eta (eta + xi gamma))`
//! * g3: `G1 = eta - G(eta - u)`
//! * g4: `G1 = L(x) (eta - G(eta - u))` with `0 <= L <= 1`

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{gamma_profile, KernelSpec};
use crate::nonlinearity::NonlinearitySpec;
use crate::picard::{OperatorMatrix, BREAKDOWN_TOL, MONOTONE_TOL};
use crate::quadrature::HalfLineGrid;

/// Coefficient `eps*(x)` of the quadratic term in g2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Coefficient {
    /// `eps*(x) = c * bound(x)`, `c` in `[0, 1]`.
    FractionOfBound(f64),
    /// One value per grid node.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form")]
pub enum G0Form {
    #[serde(rename = "g1")]
    Rational,
    #[serde(rename = "g2")]
    RationalQuadratic { coefficient: Coefficient },
}

/// The profile `L(x)` of g4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LProfile {
    Constant { value: f64 },
    /// `exp(-rate x)`
    Exponential { rate: f64 },
    /// One value per grid node.
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form")]
pub enum G1Form {
    #[serde(rename = "g3")]
    Envelope,
    #[serde(rename = "g4")]
    Scaled { profile: LProfile },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemytskySpec {
    pub g0: G0Form,
    pub g1: G1Form,
    pub xi: f64,
    pub base_g: NonlinearitySpec,
    pub kernel: KernelSpec,
}

/// Right-hand side of the g2 coefficient bound.
pub fn coefficient_bound(eta: f64, xi: f64, gamma: f64) -> f64 {
    ((eta - 2.0 * xi) * gamma + xi * gamma * gamma) / (eta * (eta + xi * gamma))
}

impl NemytskySpec {
    pub fn new(g0: G0Form, g1: G1Form, xi: f64, base_g: NonlinearitySpec, kernel: KernelSpec) -> Result<Self> {
        let spec = NemytskySpec { g0, g1, xi, base_g, kernel };
        spec.validate()?;
        Ok(spec)
    }

    /// The g1 + g3 pairing with the given `xi`.
    pub fn catalog(xi: f64, base_g: NonlinearitySpec, kernel: KernelSpec) -> Result<Self> {
        Self::new(G0Form::Rational, G1Form::Envelope, xi, base_g, kernel)
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.base_g.eta;
        if !(self.xi > 0.0 && self.xi < 0.5 * eta) {
            return Err(Error::SpecInvalid(format!("xi must lie in (0, eta/2), got {}", self.xi)));
        }
        if let G0Form::RationalQuadratic { coefficient } = &self.g0 {
            match coefficient {
                Coefficient::FractionOfBound(c) if !(0.0..=1.0).contains(c) => {
                    return Err(Error::SpecInvalid(format!("eps* fraction must lie in [0, 1], got {c}")));
                }
                Coefficient::Explicit(v) if v.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) => {
                    return Err(Error::SpecInvalid("eps* must be finite and non-negative".into()));
                }
                _ => {}
            }
        }
        if let G1Form::Scaled { profile } = &self.g1 {
            let bad = match profile {
                LProfile::Constant { value } => !(0.0..=1.0).contains(value),
                LProfile::Exponential { rate } => !(*rate >= 0.0 && rate.is_finite()),
                LProfile::Explicit { values } => values.iter().any(|v| !(0.0..=1.0).contains(v)),
            };
            if bad {
                return Err(Error::SpecInvalid("L must take values in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Node-wise realization of `G0` and `G1` for the given mass defect.
    pub fn forms(&self, grid: &HalfLineGrid, gamma: &[f64]) -> Result<NemytskyForms> {
        self.validate()?;
        let n = grid.len();
        if gamma.len() != n {
            return Err(invalid(format!("gamma has {} values for {n} nodes", gamma.len())));
        }
        let eta = self.base_g.eta;
        let eps_star = match &self.g0 {
            G0Form::Rational => vec![0.0; n],
            G0Form::RationalQuadratic { coefficient: Coefficient::FractionOfBound(c) } => {
                gamma.iter().map(|&g| c * coefficient_bound(eta, self.xi, g)).collect()
            }
            G0Form::RationalQuadratic { coefficient: Coefficient::Explicit(v) } => {
                if v.len() != n {
                    return Err(invalid(format!("eps* has {} values for {n} nodes", v.len())));
                }
                v.clone()
            }
        };
        let l_profile = match &self.g1 {
            G1Form::Envelope => None,
            G1Form::Scaled { profile } => Some(match profile {
                LProfile::Constant { value } => vec![*value; n],
                LProfile::Exponential { rate } => grid.nodes.iter().map(|x| (-rate * x).exp()).collect(),
                LProfile::Explicit { values } => {
                    if values.len() != n {
                        return Err(invalid(format!("L has {} values for {n} nodes", values.len())));
                    }
                    values.clone()
                }
            }),
        };
        Ok(NemytskyForms {
            xi: self.xi,
            g: self.base_g,
            gamma: gamma.to_vec(),
            eps_star,
            l_profile,
        })
    }
}

/// `G0` and `G1` evaluated at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NemytskyForms {
    pub xi: f64,
    pub g: NonlinearitySpec,
    pub gamma: Vec<f64>,
    pub eps_star: Vec<f64>,
    pub l_profile: Option<Vec<f64>>,
}

impl NemytskyForms {
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// `xi gamma(x_i)`, the starting iterate and lower envelope.
    pub fn lower(&self, i: usize) -> f64 {
        self.xi * self.gamma[i]
    }

    #[inline]
    fn g0(&self, i: usize, u: f64) -> f64 {
        let s = self.lower(i);
        // u / (u + xi gamma) is taken as 0 at u = 0 even when gamma = 0
        let rational = if u == 0.0 { 0.0 } else { 2.0 * s * u / (u + s) };
        rational + self.eps_star[i] * u * u
    }

    #[inline]
    fn g1(&self, i: usize, u: f64) -> f64 {
        let env = self.g.deficit_map(u.clamp(0.0, self.g.eta));
        match &self.l_profile {
            None => env,
            Some(l) => l[i] * env,
        }
    }

    fn check(&self, i: usize, u: f64) -> Result<()> {
        if i >= self.len() {
            return Err(invalid(format!("node index {i} out of range")));
        }
        if !(u >= 0.0 && u <= self.g.eta) {
            return Err(invalid(format!("u = {u} outside [0, {}]", self.g.eta)));
        }
        Ok(())
    }

    pub fn eval_g0(&self, i: usize, u: f64) -> Result<f64> {
        self.check(i, u)?;
        Ok(self.g0(i, u))
    }

    pub fn eval_g1(&self, i: usize, u: f64) -> Result<f64> {
        self.check(i, u)?;
        Ok(self.g1(i, u))
    }

    /// `G0(., Phi) + A G1(., Phi)` with the operator's row closure.
    pub fn apply(&self, op: &OperatorMatrix, phi: &[f64]) -> Vec<f64> {
        let g1: Vec<f64> = phi.iter().enumerate().map(|(i, &u)| self.g1(i, u)).collect();
        op.apply(&g1)
            .into_par_iter()
            .enumerate()
            .map(|(i, s)| self.g0(i, phi[i]) + s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemytskyConditionReport {
    pub tol: f64,
    pub n_u: usize,
    /// `max |G0(x,0)|, |G1(x,0)|`
    pub criticality_residual: f64,
    /// `min_x G0(x, xi gamma) - xi gamma` (a1, lower)
    pub a1_lower_margin: f64,
    /// `max_x G0(x, eta) - eta gamma` (a1, upper)
    pub a1_upper_excess: f64,
    /// Smallest sampled increment in `u` of `G0` and `G1` (a2).
    pub min_increment: f64,
    /// `max G1 - (eta - G(eta - u))` (a3, upper)
    pub envelope_excess: f64,
    /// `min G1` (a3, lower)
    pub g1_min: f64,
    /// `max eps* / bound` over nodes with a positive bound.
    pub coefficient_max_ratio: f64,
    /// First node violating the g2 coefficient bound.
    pub coefficient_violation_node: Option<usize>,
    pub caratheodory: String,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Checks a1-a3 and the g2 coefficient bound on the node x `n_u` lattice.
pub fn check_nemytsky_conditions(
    spec: &NemytskySpec,
    grid: &HalfLineGrid,
    n_u: usize,
    tol: f64,
) -> Result<NemytskyConditionReport> {
    let gamma = gamma_profile(&spec.kernel, grid);
    check_nemytsky_forms(&spec.forms(grid, &gamma)?, n_u, tol)
}

/// Same checks on already realized forms.
pub fn check_nemytsky_forms(
    forms: &NemytskyForms,
    n_u: usize,
    tol: f64,
) -> Result<NemytskyConditionReport> {
    if n_u < 2 {
        return Err(invalid("n_u must be at least 2"));
    }
    let eta = forms.g.eta;
    let us: Vec<f64> = (0..n_u).map(|k| eta * k as f64 / (n_u - 1) as f64).collect();

    let per_node: Vec<[f64; 6]> = (0..forms.len())
        .into_par_iter()
        .map(|i| {
            let crit = forms.g0(i, 0.0).abs().max(forms.g1(i, 0.0).abs());
            let low = forms.lower(i);
            let a1_lo = forms.g0(i, low) - low;
            let a1_hi = forms.g0(i, eta) - eta * forms.gamma[i];
            let mut min_inc = f64::INFINITY;
            let mut env_excess = f64::NEG_INFINITY;
            let mut g1_min = f64::INFINITY;
            let (mut p0, mut p1) = (forms.g0(i, us[0]), forms.g1(i, us[0]));
            for &u in &us {
                let (v0, v1) = (forms.g0(i, u), forms.g1(i, u));
                min_inc = min_inc.min(v0 - p0).min(v1 - p1);
                env_excess = env_excess.max(v1 - forms.g.deficit_map(u));
                g1_min = g1_min.min(v1);
                (p0, p1) = (v0, v1);
            }
            [crit, a1_lo, a1_hi, min_inc, env_excess, g1_min]
        })
        .collect();
    let fold = |k: usize, init: f64, f: fn(f64, f64) -> f64| per_node.iter().map(|r| r[k]).fold(init, f);
    let criticality_residual = fold(0, 0.0, f64::max);
    let a1_lower_margin = fold(1, f64::INFINITY, f64::min);
    let a1_upper_excess = fold(2, f64::NEG_INFINITY, f64::max);
    let min_increment = fold(3, f64::INFINITY, f64::min);
    let envelope_excess = fold(4, f64::NEG_INFINITY, f64::max);
    let g1_min = fold(5, f64::INFINITY, f64::min);

    let mut coefficient_max_ratio: f64 = 0.0;
    let mut coefficient_violation_node = None;
    for (i, (&e, &g)) in forms.eps_star.iter().zip(&forms.gamma).enumerate() {
        let bound = coefficient_bound(eta, forms.xi, g);
        if bound > 0.0 {
            coefficient_max_ratio = coefficient_max_ratio.max(e / bound);
        }
        if coefficient_violation_node.is_none() && (e < 0.0 || e > bound * (1.0 + tol)) {
            coefficient_violation_node = Some(i);
        }
    }

    let mut failures = Vec::new();
    if criticality_residual > tol {
        failures.push(format!("criticality: G(x,0) = {criticality_residual:e}"));
    }
    if a1_lower_margin < -tol {
        failures.push(format!("a1: G0(x, xi gamma) - xi gamma = {a1_lower_margin:e}"));
    }
    if a1_upper_excess > tol {
        failures.push(format!("a1: G0(x, eta) - eta gamma = {a1_upper_excess:e}"));
    }
    if min_increment < -tol {
        failures.push(format!("a2: decrement {min_increment:e} in u"));
    }
    if envelope_excess > tol || g1_min < -tol {
        failures.push(format!("a3: envelope excess {envelope_excess:e}, min G1 {g1_min:e}"));
    }
    if let Some(i) = coefficient_violation_node {
        failures.push(format!("g2: eps* exceeds its bound at node {i}"));
    }
    Ok(NemytskyConditionReport {
        tol,
        n_u,
        criticality_residual,
        a1_lower_margin,
        a1_upper_excess,
        min_increment,
        envelope_excess,
        g1_min,
        coefficient_max_ratio,
        coefficient_violation_node,
        caratheodory: "by construction (continuous catalog forms)".into(),
        passed: failures.is_empty(),
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemytskyReport {
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
    pub xi: f64,
    /// `sup |Phi_{n+1} - Phi_n|`
    pub sup_diffs: Vec<f64>,
    pub monotone_ok: bool,
    /// Largest pointwise decrease over all steps.
    pub monotone_max_violation: f64,
    /// Largest `Phi_n - (eta - f*)` over all iterates.
    pub envelope_max_violation: f64,
    /// Largest `xi gamma - Phi` at the final profile.
    pub lower_max_violation: f64,
    pub sandwich_ok: bool,
    /// `Phi(x_max)`
    pub phi_tail: f64,
    pub residual_inf: f64,
    /// `int_0^x_max Phi`
    pub phi_integral: f64,
    pub profile: Vec<f64>,
    pub lower_env: Vec<f64>,
    pub upper_env: Vec<f64>,
}

/// Slack of the final two-sided envelope.
pub const SANDWICH_TOL: f64 = 1e-10;

/// Iterates `Phi_{n+1} = G0(., Phi_n) + A G1(., Phi_n)` from `Phi_0 = xi gamma`.
///
/// `deficit_star` is `eta - f*` from a converged Picard run on the same
/// operator, in the full-precision form [`crate::picard::SolveReport::deficit`].
pub fn solve_nemytsky(
    spec: &NemytskySpec,
    op: &OperatorMatrix,
    deficit_star: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NemytskyReport> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tol must be positive, got {tol}")));
    }
    let n = op.len();
    if deficit_star.len() != n {
        return Err(invalid(format!("f* has {} values for {n} nodes", deficit_star.len())));
    }
    let forms = spec.forms(&op.grid, &op.gamma)?;
    let lower_env: Vec<f64> = (0..n).map(|i| forms.lower(i)).collect();
    let upper_env = deficit_star.to_vec();

    let envelope_excess = |phi: &[f64]| {
        phi.iter().zip(&upper_env).map(|(p, u)| p - u).fold(f64::NEG_INFINITY, f64::max)
    };
    let mut phi = lower_env.clone();
    let mut envelope_max_violation = envelope_excess(&phi);
    let mut monotone_max_violation: f64 = 0.0;
    let mut sup_diffs = Vec::new();
    let mut converged = false;

    for step in 0..max_iter {
        let next = forms.apply(op, &phi);
        let mut diff: f64 = 0.0;
        let mut dec: f64 = 0.0;
        for (a, b) in phi.iter().zip(&next) {
            diff = diff.max((b - a).abs());
            dec = dec.max(a - b);
        }
        monotone_max_violation = monotone_max_violation.max(dec);
        if dec > BREAKDOWN_TOL {
            return Err(Error::NumericalBreakdown(format!(
                "Nemytsky iterate {} decreased by {dec:e}",
                step + 1
            )));
        }
        let excess = envelope_excess(&next);
        envelope_max_violation = envelope_max_violation.max(excess);
        if excess > BREAKDOWN_TOL {
            return Err(Error::NumericalBreakdown(format!(
                "Nemytsky iterate {} exceeds eta - f* by {excess:e}",
                step + 1
            )));
        }
        sup_diffs.push(diff);
        phi = next;
        if diff <= tol {
            converged = true;
            break;
        }
    }

    let residual_inf = forms
        .apply(op, &phi)
        .iter()
        .zip(&phi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let lower_max_violation = lower_env
        .iter()
        .zip(&phi)
        .map(|(l, p)| l - p)
        .fold(f64::NEG_INFINITY, f64::max);
    let final_upper = envelope_excess(&phi);
    let report = NemytskyReport {
        iterations: sup_diffs.len(),
        converged,
        tol,
        xi: spec.xi,
        sup_diffs,
        monotone_ok: monotone_max_violation <= MONOTONE_TOL,
        monotone_max_violation,
        envelope_max_violation,
        lower_max_violation,
        sandwich_ok: lower_max_violation <= SANDWICH_TOL && final_upper <= SANDWICH_TOL,
        phi_tail: phi[n - 1],
        residual_inf,
        phi_integral: op.grid.integrate(&phi)?,
        profile: phi,
        lower_env,
        upper_env,
    };
    if !converged {
        return Err(Error::NemytskyNonConvergence(Box::new(report)));
    }
    Ok(report)
}
