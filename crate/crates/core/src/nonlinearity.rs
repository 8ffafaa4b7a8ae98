//! The nonlinearity `G`, its inverse, and lattice certification of the
//! structural conditions (monotone, concave, `G(0) = 0`, `G(eta) = eta`,
//! and `G(s u) >= s^alpha G(u)`).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// The three catalog nonlinearities. All fix `u = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum NonlinearityFamily {
    /// `u^alpha`
    #[serde(rename = "I")]
    Power { alpha: f64 },
    /// `(u^alpha_star + u) / 2`
    #[serde(rename = "II")]
    PowerPlusLinear { alpha_star: f64 },
    /// `(u^alpha_tilde + u^alpha_star) / 2` with `alpha_tilde < alpha_star`
    #[serde(rename = "III")]
    TwoPower { alpha_tilde: f64, alpha_star: f64 },
}

impl NonlinearityFamily {
    pub fn validate(&self) -> Result<()> {
        let open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::SpecInvalid(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        match *self {
            NonlinearityFamily::Power { alpha } => open("alpha", alpha),
            NonlinearityFamily::PowerPlusLinear { alpha_star } => open("alpha_star", alpha_star),
            NonlinearityFamily::TwoPower { alpha_tilde, alpha_star } => {
                open("alpha_tilde", alpha_tilde)?;
                open("alpha_star", alpha_star)?;
                if alpha_tilde >= alpha_star {
                    return Err(Error::SpecInvalid(format!(
                        "alpha_tilde ({alpha_tilde}) must be below alpha_star ({alpha_star})"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Exponent for which `G(s u) >= s^alpha G(u)` holds on `[0, eta]`.
    pub fn cond4_alpha(&self) -> f64 {
        match *self {
            NonlinearityFamily::Power { alpha } => alpha,
            NonlinearityFamily::PowerPlusLinear { alpha_star } => 0.5 * (1.0 + alpha_star),
            NonlinearityFamily::TwoPower { alpha_tilde, alpha_star } => {
                0.5 * (alpha_tilde + alpha_star)
            }
        }
    }

    pub fn g(&self, u: f64) -> f64 {
        match *self {
            NonlinearityFamily::Power { alpha } => u.powf(alpha),
            NonlinearityFamily::PowerPlusLinear { alpha_star } => 0.5 * (u.powf(alpha_star) + u),
            NonlinearityFamily::TwoPower { alpha_tilde, alpha_star } => {
                0.5 * (u.powf(alpha_tilde) + u.powf(alpha_star))
            }
        }
    }
}

/// Positive fixed point of `G` by bisection of `G(u) - u` on `[1e-8, 10]`.
pub fn find_eta(family: &NonlinearityFamily) -> Result<f64> {
    family.validate()?;
    let f = |u: f64| family.g(u) - u;
    let (mut lo, mut hi) = (1e-8, 10.0);
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::SpecInvalid(
            "G(u) - u has no sign change on [1e-8, 10]; no positive fixed point".into(),
        ));
    }
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    pub family: NonlinearityFamily,
    /// `G(eta) = eta`; equal to 1 for the catalog.
    pub eta: f64,
    pub cond4_alpha: f64,
}

impl NonlinearitySpec {
    pub fn new(family: NonlinearityFamily) -> Result<Self> {
        family.validate()?;
        // every catalog family fixes 1 exactly; find_eta is the independent check
        let eta = 1.0;
        debug_assert_eq!(family.g(eta), eta);
        Ok(NonlinearitySpec { family, eta, cond4_alpha: family.cond4_alpha() })
    }

    pub fn power(alpha: f64) -> Result<Self> {
        Self::new(NonlinearityFamily::Power { alpha })
    }

    pub fn power_plus_linear(alpha_star: f64) -> Result<Self> {
        Self::new(NonlinearityFamily::PowerPlusLinear { alpha_star })
    }

    pub fn two_power(alpha_tilde: f64, alpha_star: f64) -> Result<Self> {
        Self::new(NonlinearityFamily::TwoPower { alpha_tilde, alpha_star })
    }

    /// `G(u)`, unchecked.
    #[inline]
    pub fn g(&self, u: f64) -> f64 {
        self.family.g(u)
    }

    pub fn eval_g(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(invalid(format!("G is defined on u >= 0, got {u}")));
        }
        Ok(self.g(u))
    }

    /// `eta - G(eta - d)` for a deficit `d` in `[0, eta]`, accurate to full
    /// relative precision as `d -> 0`.
    pub fn deficit_map(&self, d: f64) -> f64 {
        // 1 - (1-d)^a, valid because eta = 1
        let drop = |a: f64| -(a * (-d).ln_1p()).exp_m1();
        match self.family {
            NonlinearityFamily::Power { alpha } => drop(alpha),
            NonlinearityFamily::PowerPlusLinear { alpha_star } => 0.5 * (drop(alpha_star) + d),
            NonlinearityFamily::TwoPower { alpha_tilde, alpha_star } => {
                0.5 * (drop(alpha_tilde) + drop(alpha_star))
            }
        }
    }

    /// Inverse `Q = G^{-1}` on `[0, eta]`.
    pub fn q(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= self.eta {
            return self.eta;
        }
        match self.family {
            NonlinearityFamily::Power { alpha } => v.powf(1.0 / alpha),
            _ => {
                let (mut lo, mut hi) = (0.0, self.eta);
                loop {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi || hi - lo <= 0.5 * f64::EPSILON * hi {
                        break;
                    }
                    if self.g(mid) < v {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if (self.g(lo) - v).abs() <= (self.g(hi) - v).abs() {
                    lo
                } else {
                    hi
                }
            }
        }
    }

    pub fn eval_q(&self, v: f64) -> Result<f64> {
        if !(v >= 0.0 && v <= self.eta) {
            return Err(invalid(format!("Q is defined on [0, {}], got {v}", self.eta)));
        }
        Ok(self.q(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityReport {
    pub tol: f64,
    pub n_u: usize,
    pub n_sigma: usize,
    /// `|find_eta - eta|`
    pub eta_bisection_error: f64,
    pub g_at_zero: f64,
    pub fixed_point_residual: f64,
    /// Minimum forward difference of sampled `G`; must be positive.
    pub min_increment: f64,
    /// Maximum second difference of sampled `G`; concavity needs `<= tol`.
    pub max_second_difference: f64,
    /// `min (G(s u) - s^alpha G(u))` over the `(s, u)` lattice.
    pub scaling_min_margin: f64,
    /// `max |G(s u) - s^alpha G(u)|`; zero up to rounding for family I.
    pub scaling_max_deviation: f64,
    /// `min (u Q(v) - Q(u v))` over the `(u, v)` lattice.
    pub inverse_scaling_min_margin: f64,
    /// Minimum second difference of sampled `Q`; convexity needs `>= -tol`.
    pub q_min_second_difference: f64,
    pub round_trip_max_error: f64,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Certifies conditions 1-4 and `u Q(v) >= Q(u v)` on lattices.
pub fn check_g_conditions(
    spec: &NonlinearitySpec,
    n_u: usize,
    n_sigma: usize,
    tol: f64,
) -> Result<NonlinearityReport> {
    if n_u < 3 || n_sigma < 3 {
        return Err(invalid("lattices need at least 3 points per axis"));
    }
    let eta = spec.eta;
    let us: Vec<f64> = (0..n_u).map(|k| eta * k as f64 / (n_u - 1) as f64).collect();
    let gs: Vec<f64> = us.iter().map(|&u| spec.g(u)).collect();
    let sigmas: Vec<f64> = (1..=n_sigma).map(|k| k as f64 / (n_sigma + 1) as f64).collect();

    let eta_bisection_error = (find_eta(&spec.family)? - eta).abs();
    let g_at_zero = spec.g(0.0);
    let fixed_point_residual = (spec.g(eta) - eta).abs();
    let min_increment = gs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let max_second_difference = gs
        .windows(3)
        .map(|w| w[2] - 2.0 * w[1] + w[0])
        .fold(f64::NEG_INFINITY, f64::max);

    let a = spec.cond4_alpha;
    let mut scaling_min_margin = f64::INFINITY;
    let mut scaling_max_deviation: f64 = 0.0;
    for &s in &sigmas {
        let sa = s.powf(a);
        for (&u, &gu) in us.iter().zip(&gs) {
            let d = spec.g(s * u) - sa * gu;
            scaling_min_margin = scaling_min_margin.min(d);
            scaling_max_deviation = scaling_max_deviation.max(d.abs());
        }
    }

    let units: Vec<f64> = (0..n_u).map(|k| k as f64 / (n_u - 1) as f64).collect();
    let qs: Vec<f64> = us.iter().map(|&v| spec.q(v)).collect();
    let mut inverse_scaling_min_margin = f64::INFINITY;
    for &u in &units {
        for (&v, &qv) in us.iter().zip(&qs) {
            inverse_scaling_min_margin = inverse_scaling_min_margin.min(u * qv - spec.q(u * v));
        }
    }
    let q_min_second_difference = qs
        .windows(3)
        .map(|w| w[2] - 2.0 * w[1] + w[0])
        .fold(f64::INFINITY, f64::min);
    let round_trip_max_error = us
        .iter()
        .map(|&u| (spec.q(spec.g(u)) - u).abs())
        .fold(0.0, f64::max);

    let mut failures = Vec::new();
    if !(min_increment > 0.0) {
        failures.push(format!("monotonicity: min increment {min_increment:e}"));
    }
    if max_second_difference > tol {
        failures.push(format!("concavity: max second difference {max_second_difference:e}"));
    }
    if g_at_zero != 0.0 {
        failures.push(format!("G(0) = {g_at_zero}"));
    }
    if fixed_point_residual > tol || eta_bisection_error > 1e-12 {
        failures.push(format!(
            "fixed point: |G(eta)-eta| = {fixed_point_residual:e}, bisection error {eta_bisection_error:e}"
        ));
    }
    if scaling_min_margin < -tol {
        failures.push(format!("scaling condition: min margin {scaling_min_margin:e}"));
    }
    if inverse_scaling_min_margin < -tol {
        failures.push(format!("inverse scaling: min margin {inverse_scaling_min_margin:e}"));
    }
    if q_min_second_difference < -tol {
        failures.push(format!("inverse convexity: min second difference {q_min_second_difference:e}"));
    }
    let passed = failures.is_empty();
    Ok(NonlinearityReport {
        tol,
        n_u,
        n_sigma,
        eta_bisection_error,
        g_at_zero,
        fixed_point_residual,
        min_increment,
        max_second_difference,
        scaling_min_margin,
        scaling_max_deviation,
        inverse_scaling_min_margin,
        q_min_second_difference,
        round_trip_max_error,
        failures,
        passed,
    })
}

/// `min over sigma of (s^a* - s^a) / (s^a - s)` with `a = (1 + a*) / 2`;
/// the scaling condition for family II follows when this is at least 1.
pub fn power_plus_linear_ratio_min(alpha_star: f64, sigmas: &[f64]) -> f64 {
    let a = 0.5 * (1.0 + alpha_star);
    sigmas
        .iter()
        .map(|&s| (s.powf(alpha_star) - s.powf(a)) / (s.powf(a) - s))
        .fold(f64::INFINITY, f64::min)
}
