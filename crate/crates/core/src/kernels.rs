//! Kernel catalog and condition checks.
//!
//! Three families on the quarter plane, all built from an even base kernel
//! `K0` with half-line mass 1/2 and a modulation `lambda`:
//!
//! * A: `mu(x,t) K0(x-t)`
//! * B: `mu(x,t) (K0(x-t) - delta K0(x+t))`
//! * C: `(lambda(x)+lambda(t))/2 (K0(x-t) + eps K0(x+t))`
//!
//! with `mu = lambda(x) + lambda(t) - lambda(x) lambda(t)`.
//!
//! The mass defect `gamma(x) = 1 - int_0^inf K(x,t) dt` decays to zero far
//! from the origin, so computing it as `1 - row mass` loses all relative
//! precision there. [`KernelSpec`] evaluates it instead as a sum of
//! non-negative pieces (upper tails of `K0` and integrals of the modulation
//! gap `1 - lambda`), which keeps full relative accuracy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate_interval, HalfLineGrid, QuadratureRule};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Mass of `K0` beyond the support radius used for tail rules.
pub const SUPPORT_TAIL_TOL: f64 = 1e-20;

/// Default minimum for the relative subtraction margin checked by
/// [`check_kernel_conditions`].
pub const DEFAULT_POSITIVITY_FLOOR: f64 = 1e-4;

/// A kernel on `R+ x R+` that can be discretized.
pub trait Kernel: Sync {
    fn eval(&self, x: f64, t: f64) -> f64;

    /// How far past the truncation point `K(x, .)` still carries mass.
    fn tail_length(&self) -> f64;

    /// `gamma(x) = 1 - int_0^inf K(x,t) dt`, integrated with `rule`, which
    /// must cover `[0, x + tail_length()]`.
    fn mass_defect(&self, x: f64, rule: &QuadratureRule) -> f64 {
        1.0 - rule.integrate_fn(|t| self.eval(x, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureAtom {
    /// Coefficient `c_j > 0`.
    pub weight: f64,
    /// Decay rate `s_j > 0`.
    pub rate: f64,
}

/// Even base kernel with `int_0^inf K0 = 1/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "atoms")]
pub enum BaseKernel {
    /// `exp(-x^2) / sqrt(pi)`
    Gaussian,
    /// `sum_j c_j exp(-s_j |x|)` with `sum_j 2 c_j / s_j = 1`
    ExpMixture(Vec<MixtureAtom>),
}

impl BaseKernel {
    pub fn exp_mixture(atoms: Vec<MixtureAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::SpecInvalid("exponential mixture needs at least one atom".into()));
        }
        for (j, a) in atoms.iter().enumerate() {
            if !(a.weight > 0.0 && a.weight.is_finite()) || !(a.rate > 0.0 && a.rate.is_finite()) {
                return Err(Error::SpecInvalid(format!(
                    "mixture atom {j} needs positive finite weight and rate, got ({}, {})",
                    a.weight, a.rate
                )));
            }
        }
        let norm: f64 = atoms.iter().map(|a| 2.0 * a.weight / a.rate).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::SpecInvalid(format!(
                "mixture normalization sum 2c/s = {norm}, expected 1"
            )));
        }
        Ok(BaseKernel::ExpMixture(atoms))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BaseKernel::Gaussian => FRAC_1_SQRT_PI * (-x * x).exp(),
            BaseKernel::ExpMixture(atoms) => {
                let ax = x.abs();
                atoms.iter().map(|a| a.weight * (-a.rate * ax).exp()).sum()
            }
        }
    }

    /// `int_x^inf K0(y) dy` for `x >= 0`, in closed form.
    pub fn upper_tail(&self, x: f64) -> f64 {
        match self {
            BaseKernel::Gaussian => 0.5 * erfc(x),
            BaseKernel::ExpMixture(atoms) => atoms
                .iter()
                .map(|a| a.weight / a.rate * (-a.rate * x).exp())
                .sum(),
        }
    }

    /// Smallest `R` (to within 1e-3) with `upper_tail(R) <= tol`.
    pub fn support_radius(&self, tol: f64) -> f64 {
        let mut hi = 1.0;
        while self.upper_tail(hi) > tol {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-3 {
            let mid = 0.5 * (lo + hi);
            if self.upper_tail(mid) > tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    fn fastest_rate(&self) -> f64 {
        match self {
            BaseKernel::Gaussian => 1.0,
            BaseKernel::ExpMixture(atoms) => atoms.iter().map(|a| a.rate).fold(1.0, f64::max),
        }
    }

    /// `(int_0^inf K0, int_0^inf y K0(y) dy)` by composite Gauss-Legendre.
    pub fn half_line_moments(&self) -> (f64, f64) {
        let r = self.support_radius(SUPPORT_TAIL_TOL);
        let h = 0.125 / self.fastest_rate();
        let panels = ((r / h).ceil() as usize).max(64);
        let mass = integrate_interval(0.0, r, panels, 8, |y| self.eval(y)).expect("valid interval");
        let moment =
            integrate_interval(0.0, r, panels, 8, |y| y * self.eval(y)).expect("valid interval");
        (mass, moment)
    }
}

/// Shape of the modulation gap `1 - lambda(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapForm {
    /// `lambda(x) = 1 - (1-d*) exp(-x)`
    #[serde(rename = "exp-gap")]
    Exponential,
    /// `lambda(x) = 1 - (1-d*) / (1+x^2)`
    #[serde(rename = "rational-gap")]
    Rational,
}

/// `lambda`, the derived `mu`, and the dominating factor `lambda*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub gap_form: GapForm,
    /// `inf lambda`, in `(0, 1]`.
    pub d_star: f64,
    /// Exponent of `lambda*(x) = 1 + exp(-x) / x^l`, in `(0, 1)`.
    pub l: f64,
}

impl Default for Modulation {
    fn default() -> Self {
        Modulation { gap_form: GapForm::Exponential, d_star: 0.5, l: 0.5 }
    }
}

impl Modulation {
    pub fn new(gap_form: GapForm, d_star: f64, l: f64) -> Result<Self> {
        let m = Modulation { gap_form, d_star, l };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_star > 0.0 && self.d_star <= 1.0) {
            return Err(Error::SpecInvalid(format!("d* must lie in (0, 1], got {}", self.d_star)));
        }
        if !(self.l > 0.0 && self.l < 1.0) {
            return Err(Error::SpecInvalid(format!("l must lie in (0, 1), got {}", self.l)));
        }
        Ok(())
    }

    /// `1 - lambda(x)`
    pub fn gap(&self, x: f64) -> f64 {
        let amp = 1.0 - self.d_star;
        match self.gap_form {
            GapForm::Exponential => amp * (-x).exp(),
            GapForm::Rational => amp / (1.0 + x * x),
        }
    }

    pub fn lambda(&self, x: f64) -> f64 {
        1.0 - self.gap(x)
    }

    pub fn mu(&self, x: f64, t: f64) -> f64 {
        let (lx, lt) = (self.lambda(x), self.lambda(t));
        lx + lt - lx * lt
    }

    /// `1 - mu(x,t) = (1 - lambda(x)) (1 - lambda(t))`
    pub fn mu_gap(&self, x: f64, t: f64) -> f64 {
        self.gap(x) * self.gap(t)
    }

    /// `max_t (1 - mu(x,t))` over the given abscissae, computed from `mu`.
    pub fn sup_one_minus_mu(&self, x: f64, ts: &[f64]) -> f64 {
        ts.iter().map(|&t| 1.0 - self.mu(x, t)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `lambda*(t) - 1 = exp(-t) / t^l`; infinite at `t = 0`.
    pub fn lambda_star_excess(&self, t: f64) -> f64 {
        (-t).exp() / t.powf(self.l)
    }

    pub fn lambda_star(&self, t: f64) -> f64 {
        1.0 + self.lambda_star_excess(t)
    }
}

/// `int_0^inf exp(-t) t^(-l) dt` by quadrature.
///
/// The substitution `t = u^m` with `m (1-l) >= 8` turns the integrand into
/// `m u^(m(1-l)-1) exp(-u^m)`, smooth enough at the origin for composite
/// Gauss-Legendre.
pub fn lambda_star_excess_integral(l: f64) -> f64 {
    let m = (8.0 / (1.0 - l)).ceil();
    let p = m * (1.0 - l) - 1.0;
    let upper = 745f64.powf(1.0 / m);
    integrate_interval(0.0, upper, 4000, 8, |u| m * u.powf(p) * (-u.powf(m)).exp())
        .expect("valid interval")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum KernelFamily {
    A,
    B { delta: f64 },
    C { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub base: BaseKernel,
    pub modulation: Modulation,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, base: BaseKernel, modulation: Modulation) -> Result<Self> {
        match family {
            KernelFamily::A => {}
            KernelFamily::B { delta } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::SpecInvalid(format!("delta must lie in (0, 1), got {delta}")));
                }
            }
            KernelFamily::C { epsilon } => {
                if !(epsilon > 0.0 && epsilon < 1.0) {
                    return Err(Error::SpecInvalid(format!(
                        "epsilon must lie in (0, 1), got {epsilon}"
                    )));
                }
            }
        }
        if let BaseKernel::ExpMixture(atoms) = &base {
            BaseKernel::exp_mixture(atoms.clone())?;
        }
        modulation.validate()?;
        Ok(KernelSpec { family, base, modulation })
    }

    /// Gaussian base, exponential gap, `d* = l = 0.5`.
    pub fn catalog(family: KernelFamily) -> Self {
        KernelSpec::new(family, BaseKernel::Gaussian, Modulation::default())
            .expect("catalog parameters are valid")
    }

    /// `K(x,t)`, rejecting negative arguments.
    pub fn eval_checked(&self, x: f64, t: f64) -> Result<f64> {
        if !(x >= 0.0) || !(t >= 0.0) {
            return Err(invalid(format!("kernel arguments must be non-negative, got ({x}, {t})")));
        }
        Ok(self.eval(x, t))
    }

    /// The leading term without the `K0(x+t)` correction.
    fn principal(&self, x: f64, t: f64) -> f64 {
        let m = &self.modulation;
        let k = self.base.eval(x - t);
        match self.family {
            KernelFamily::A | KernelFamily::B { .. } => m.mu(x, t) * k,
            KernelFamily::C { .. } => 0.5 * (m.lambda(x) + m.lambda(t)) * k,
        }
    }

    /// `K*` of the domination condition: `(1+eps) K0` for C, `K0` otherwise.
    pub fn k_star_scale(&self) -> f64 {
        match self.family {
            KernelFamily::C { epsilon } => 1.0 + epsilon,
            _ => 1.0,
        }
    }

    /// `lambda*(t) K*(x-t)`
    pub fn dominating(&self, x: f64, t: f64) -> f64 {
        self.modulation.lambda_star(t) * self.k_star_scale() * self.base.eval(x - t)
    }
}

impl Kernel for KernelSpec {
    fn eval(&self, x: f64, t: f64) -> f64 {
        let m = &self.modulation;
        match self.family {
            KernelFamily::A => m.mu(x, t) * self.base.eval(x - t),
            KernelFamily::B { delta } => {
                m.mu(x, t) * (self.base.eval(x - t) - delta * self.base.eval(x + t))
            }
            KernelFamily::C { epsilon } => {
                0.5 * (m.lambda(x) + m.lambda(t))
                    * (self.base.eval(x - t) + epsilon * self.base.eval(x + t))
            }
        }
    }

    fn tail_length(&self) -> f64 {
        self.base.support_radius(SUPPORT_TAIL_TOL)
    }

    fn mass_defect(&self, x: f64, rule: &QuadratureRule) -> f64 {
        let m = &self.modulation;
        let k0 = &self.base;
        let upper = k0.upper_tail(x);
        match self.family {
            KernelFamily::A => {
                let gx = m.gap(x);
                upper + rule.integrate_fn(|t| gx * m.gap(t) * k0.eval(x - t))
            }
            KernelFamily::B { delta } => {
                let gx = m.gap(x);
                upper
                    + rule.integrate_fn(|t| {
                        gx * m.gap(t) * k0.eval(x - t) + delta * m.mu(x, t) * k0.eval(x + t)
                    })
            }
            KernelFamily::C { epsilon } => {
                let gx = m.gap(x);
                (1.0 - epsilon) * upper
                    + rule.integrate_fn(|t| {
                        0.5 * (gx + m.gap(t)) * (k0.eval(x - t) + epsilon * k0.eval(x + t))
                    })
            }
        }
    }
}

/// `gamma(x_i)` at every grid node.
pub fn gamma_profile<K: Kernel + ?Sized>(kernel: &K, grid: &HalfLineGrid) -> Vec<f64> {
    let ext = grid.extended_rule(kernel.tail_length());
    grid.nodes.par_iter().map(|&x| kernel.mass_defect(x, &ext)).collect()
}

/// `int_0^inf K(x_i, t) dt` at every grid node, summed directly over the grid
/// and its tail extension.
pub fn row_mass_profile<K: Kernel + ?Sized>(kernel: &K, grid: &HalfLineGrid) -> Vec<f64> {
    let ext = grid.extended_rule(kernel.tail_length());
    grid.nodes
        .par_iter()
        .map(|&x| ext.integrate_fn(|t| kernel.eval(x, t)))
        .collect()
}

/// True when the sampled mass defect vanishes everywhere to within `tol`,
/// i.e. the kernel is conservative and violates the nontriviality condition.
pub fn defect_is_trivial(gamma: &[f64], tol: f64) -> bool {
    gamma.iter().all(|g| g.abs() <= tol)
}

/// Right-hand side ingredients of the a-priori integral bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaConstants {
    /// `int_0^inf gamma`
    pub gamma_integral: f64,
    /// `int_0^inf (lambda* - 1)`
    pub lambda_star_excess_integral: f64,
    /// `int_R K*`
    pub k_star_mass: f64,
    /// `int_R |y| K*(y) dy`
    pub k_star_abs_moment: f64,
}

impl LemmaConstants {
    /// `int gamma + int (lambda*-1) int K* + int |y| K*`
    pub fn bracket(&self) -> f64 {
        self.gamma_integral
            + self.lambda_star_excess_integral * self.k_star_mass
            + self.k_star_abs_moment
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub tol: f64,
    pub probe_count: usize,
    pub positivity_ok: bool,
    pub min_kernel_value: f64,
    /// Minimum over probes of `K / principal term`; 1 for family A.
    pub positivity_margin: f64,
    pub positivity_floor: f64,
    pub sup_row_mass: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// `gamma` at the last grid node.
    pub gamma_tail: f64,
    /// `max |row mass + gamma - 1|` between the two evaluation routes.
    pub defect_consistency: f64,
    pub symmetry_residual: f64,
    pub domination_margin: f64,
    pub constants: LemmaConstants,
    pub failures: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionOptions {
    pub probe_count: usize,
    pub tol: f64,
    pub positivity_floor: f64,
}

pub fn check_kernel_conditions(
    spec: &KernelSpec,
    grid: &HalfLineGrid,
    probe_count: usize,
    tol: f64,
) -> ConditionReport {
    check_kernel_conditions_with(
        spec,
        grid,
        &ConditionOptions { probe_count, tol, positivity_floor: DEFAULT_POSITIVITY_FLOOR },
    )
}

/// Evaluates positivity, symmetry and domination on a probe lattice, the row
/// mass and mass defect at every node, and the constants of the integral
/// bound.
pub fn check_kernel_conditions_with(
    spec: &KernelSpec,
    grid: &HalfLineGrid,
    opts: &ConditionOptions,
) -> ConditionReport {
    let tol = opts.tol;
    let probe_count = opts.probe_count.max(2);
    // grid nodes plus the boundary point x = 0, where the subtraction in
    // family B is tightest
    let mut probes: Vec<f64> = probe_indices(grid.len(), probe_count)
        .into_iter()
        .map(|i| grid.nodes[i])
        .collect();
    if probes.first().is_some_and(|&x| x > 0.0) {
        probes.insert(0, 0.0);
    }

    let mut min_kernel_value = f64::INFINITY;
    let mut positivity_margin = f64::INFINITY;
    let mut all_positive = true;
    let mut symmetry_residual: f64 = 0.0;
    let mut domination_margin = f64::INFINITY;
    for &x in &probes {
        for &t in &probes {
            let k = spec.eval(x, t);
            symmetry_residual = symmetry_residual.max((k - spec.eval(t, x)).abs());
            if t > 0.0 {
                domination_margin = domination_margin.min(spec.dominating(x, t) - k);
            }
            let principal = spec.principal(x, t);
            // where K0(x-t) underflows the sign of K cannot be resolved
            if principal < f64::MIN_POSITIVE {
                continue;
            }
            min_kernel_value = min_kernel_value.min(k);
            if !(k > 0.0) {
                all_positive = false;
            }
            positivity_margin = positivity_margin.min(k / principal);
        }
    }

    let gamma = gamma_profile(spec, grid);
    let row_mass = row_mass_profile(spec, grid);
    let sup_row_mass = row_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gamma_min = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    let gamma_max = gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gamma_tail = *gamma.last().expect("grid has nodes");
    let defect_consistency = gamma
        .iter()
        .zip(&row_mass)
        .map(|(g, r)| (g + r - 1.0).abs())
        .fold(0.0, f64::max);

    let (half_mass, half_moment) = spec.base.half_line_moments();
    let scale = spec.k_star_scale();
    let constants = LemmaConstants {
        gamma_integral: grid.integrate(&gamma).expect("profile matches grid"),
        lambda_star_excess_integral: lambda_star_excess_integral(spec.modulation.l),
        k_star_mass: 2.0 * scale * half_mass,
        k_star_abs_moment: 2.0 * scale * half_moment,
    };

    let positivity_ok = all_positive && positivity_margin >= opts.positivity_floor;
    let mut failures = Vec::new();
    if !positivity_ok {
        failures.push(format!(
            "positivity: min K = {min_kernel_value:e}, margin {positivity_margin:e} below floor {:e}",
            opts.positivity_floor
        ));
    }
    if sup_row_mass > 1.0 + tol {
        failures.push(format!("row mass: sup = {sup_row_mass} exceeds 1 + {tol:e}"));
    }
    if gamma_min < -tol {
        failures.push(format!("mass defect: min gamma = {gamma_min:e} is negative"));
    }
    if defect_is_trivial(&gamma, tol) {
        failures.push("mass defect: gamma vanishes identically (conservative kernel)".into());
    }
    if gamma_tail > tol {
        failures.push(format!(
            "mass defect: gamma(x_max) = {gamma_tail:e} exceeds {tol:e}; enlarge x_max"
        ));
    }
    if symmetry_residual > tol {
        failures.push(format!("symmetry: residual {symmetry_residual:e}"));
    }
    if domination_margin < -tol {
        failures.push(format!("domination: margin {domination_margin:e}"));
    }
    let passed = failures.is_empty();
    ConditionReport {
        tol,
        probe_count,
        positivity_ok,
        min_kernel_value,
        positivity_margin,
        positivity_floor: opts.positivity_floor,
        sup_row_mass,
        gamma_min,
        gamma_max,
        gamma_tail,
        defect_consistency,
        symmetry_residual,
        domination_margin,
        constants,
        failures,
        passed,
    }
}

/// `count` indices spread evenly over `0..n`, always including both ends.
fn probe_indices(n: usize, count: usize) -> Vec<usize> {
    if n <= count {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..count)
        .map(|k| ((k as f64) * (n - 1) as f64 / (count - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}
