//! Post-hoc certificates for a converged solution: the integral bound
//! (Lemma 2), the tail bound (Lemma 3), the discrete Jensen inequality for
//! `Q = G^{-1}`, the asymptote at the truncation point, and a heuristic
//! uniqueness probe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{ConditionReport, Kernel, LemmaConstants};
use crate::nonlinearity::NonlinearitySpec;
use crate::picard::{assemble_operator, iterate_from, NystromInterpolant, OperatorMatrix, SolveReport};
use crate::quadrature::HalfLineGrid;

/// Slack of both lemma certificates.
pub const LEMMA_TOL: f64 = 1e-8;
/// Slack of the Jensen certificate.
pub const JENSEN_TOL: f64 = 1e-12;
/// Kernel symmetry required by Lemma 2 and the uniqueness probe.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// `eta - f*` closer to zero than this makes the Lemma 3 prefactor 0/0.
pub const LEMMA3_DEGENERATE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Certificate {
    /// `int_0^x_max (G(f*) - f*)`
    pub lhs: f64,
    /// `eta (int gamma + int (lambda*-1) int K* + int |y| K*)`
    pub rhs: f64,
    pub passed: bool,
}

/// `G(f*) - f*` from the deficit `d = eta - f*`: `d - (eta - G(eta - d))`.
fn excess_from_deficit(g: &NonlinearitySpec, d: f64) -> f64 {
    let d = d.clamp(0.0, g.eta);
    d - g.deficit_map(d)
}

pub fn lemma2_certificate(
    deficit: &[f64],
    constants: &LemmaConstants,
    g: &NonlinearitySpec,
    grid: &HalfLineGrid,
    symmetry_residual: f64,
) -> Result<Lemma2Certificate> {
    if !(symmetry_residual <= SYMMETRY_TOL) {
        return Err(Error::HypothesisNotMet(format!(
            "Lemma 2 needs a symmetric kernel; symmetry residual {symmetry_residual:e}"
        )));
    }
    let samples: Vec<f64> = deficit.iter().map(|&d| excess_from_deficit(g, d)).collect();
    let lhs = grid.integrate(&samples)?;
    let rhs = g.eta * constants.bracket();
    Ok(Lemma2Certificate { lhs, rhs, passed: lhs <= rhs + LEMMA_TOL })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Certificate {
    /// `int_r^x_max (eta - f*)`
    pub lhs: f64,
    /// `(eta-eps) eta / (G(eps)-eps) * bracket`; `None` when degenerate.
    pub rhs: Option<f64>,
    pub r_index: usize,
    pub r: f64,
    /// `min_{x >= r} f*`
    pub epsilon: f64,
    /// `eps` within [`LEMMA3_DEGENERATE`] of `eta`: the prefactor is 0/0.
    pub degenerate: bool,
    pub passed: bool,
}

pub fn lemma3_certificate(
    deficit: &[f64],
    grid: &HalfLineGrid,
    g: &NonlinearitySpec,
    constants: &LemmaConstants,
) -> Result<Lemma3Certificate> {
    if deficit.len() != grid.len() || deficit.is_empty() {
        return Err(invalid("deficit does not match the grid"));
    }
    let eta = g.eta;
    // f* >= eta/2 <=> deficit <= eta/2; r is the start of the final run
    let r_index = match deficit.iter().rposition(|&d| d > 0.5 * eta) {
        None => 0,
        Some(k) if k + 1 < deficit.len() => k + 1,
        Some(_) => {
            return Err(Error::HypothesisNotMet("f* < eta/2 at the last node".into()));
        }
    };
    let max_deficit = deficit[r_index..].iter().copied().fold(0.0, f64::max);
    let epsilon = eta - max_deficit;
    let lhs: f64 = deficit[r_index..]
        .iter()
        .zip(&grid.weights[r_index..])
        .map(|(d, w)| w * d)
        .sum();
    let degenerate = max_deficit < LEMMA3_DEGENERATE;
    let rhs = (!degenerate).then(|| {
        // G(eps) - eps = (eta - eps) - (eta - G(eps)), computed from the deficit
        let gain = excess_from_deficit(g, max_deficit);
        max_deficit * eta / gain * constants.bracket()
    });
    let passed = rhs.is_some_and(|r| lhs <= r + LEMMA_TOL);
    Ok(Lemma3Certificate {
        lhs,
        rhs,
        r_index,
        r: grid.nodes[r_index],
        epsilon,
        degenerate,
        passed,
    })
}

/// `min_i [ sum_j A_ij Q(g_j) - (sum_j A_ij) Q(sum_j A_ij g_j / sum_j A_ij) ]`
/// over rows with positive mass. Values are clamped into `[0, eta]`.
pub fn jensen_certificate(op: &OperatorMatrix, g: &NonlinearitySpec, values: &[f64]) -> f64 {
    let q: Vec<f64> = values.iter().map(|&v| g.q(v.clamp(0.0, g.eta))).collect();
    (0..op.len())
        .into_par_iter()
        .map(|i| {
            let row = op.row(i);
            let mass: f64 = row.iter().sum();
            if !(mass > 0.0) {
                return f64::INFINITY;
            }
            let lhs: f64 = row.iter().zip(&q).map(|(a, b)| a * b).sum();
            let mean: f64 = row.iter().zip(values).map(|(a, v)| a * v.clamp(0.0, g.eta)).sum::<f64>() / mass;
            lhs - mass * g.q(mean)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoteCertificate {
    /// `eta - f*(x_max)`
    pub gap: f64,
    /// `max(5 eta gamma(x_max), 1e-6)`
    pub bound: f64,
    pub passed: bool,
}

pub fn asymptote_certificate(deficit: &[f64], gamma: &[f64], eta: f64) -> Result<AsymptoteCertificate> {
    let (gap, g_last) = match (deficit.last(), gamma.last()) {
        (Some(&d), Some(&g)) => (d, g),
        _ => return Err(invalid("empty profile")),
    };
    let bound = (5.0 * eta * g_last).max(1e-6);
    Ok(AsymptoteCertificate { gap, bound, passed: gap <= bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    /// Bump height as a fraction of `eta`.
    pub scale: f64,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Also re-solve from `f0 = eta` on the grid with twice the panels.
    pub refine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessProbe {
    /// Sup-norm distance of each restarted solution from `f*`.
    pub trial_deviations: Vec<f64>,
    pub restart_max_dev: f64,
    /// Distance between `f*` and the refined-grid solution at the coarse nodes.
    pub refined_dev: Option<f64>,
    pub max_dev: f64,
    /// Some restart did not converge.
    pub inconclusive: bool,
    pub passed: bool,
}

/// Seed of trial `k`, derived from the master seed.
fn trial_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Positive bump `scale eta a exp(-(x-c)^2 / (2 w^2))` with random `a, c, w`.
fn random_bump(rng: &mut ChaCha8Rng, grid: &HalfLineGrid, scale: f64, eta: f64) -> Vec<f64> {
    let amp = scale * eta * rng.random_range(0.5..=1.0);
    let centre = rng.random_range(0.0..=0.5 * grid.x_max);
    let width: f64 = rng.random_range(0.5..=5.0);
    grid.nodes
        .iter()
        .map(|x| amp * (-(x - centre).powi(2) / (2.0 * width * width)).exp())
        .collect()
}

/// Restarts the iteration from `clamp(f* + bump, 0, eta)` and checks that it
/// returns to `f*`. Heuristic: agreement is evidence for, not proof of,
/// uniqueness.
pub fn uniqueness_probe<K: Kernel + ?Sized>(
    kernel: &K,
    op: &OperatorMatrix,
    g: &NonlinearitySpec,
    deficit_star: &[f64],
    opts: &ProbeOptions,
) -> Result<UniquenessProbe> {
    if deficit_star.len() != op.len() {
        return Err(invalid("f* does not match the operator"));
    }
    if !(opts.scale >= 0.0) || !(opts.tol > 0.0) {
        return Err(invalid("probe scale must be non-negative and tol positive"));
    }
    let sym = op.weighted_symmetry_residual();
    if sym > SYMMETRY_TOL {
        return Err(Error::HypothesisNotMet(format!(
            "uniqueness probe needs a symmetric kernel; weighted residual {sym:e}"
        )));
    }
    let eta = g.eta;
    let sup_dev = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    let mut trial_deviations = Vec::with_capacity(opts.trials);
    let mut inconclusive = false;
    for k in 0..opts.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(opts.seed, k));
        let bump = random_bump(&mut rng, &op.grid, opts.scale, eta);
        // f* + bump in deficit form
        let start: Vec<f64> = deficit_star.iter().zip(&bump).map(|(d, b)| (d - b).clamp(0.0, eta)).collect();
        let r = iterate_from(op, g, &start, opts.tol, opts.max_iter)?;
        inconclusive |= !r.converged;
        trial_deviations.push(sup_dev(&r.deficit, deficit_star));
    }
    let restart_max_dev = trial_deviations.iter().copied().fold(0.0, f64::max);

    let refined_dev = if opts.refine {
        let fine = op.grid.refined();
        let fine_op = assemble_operator(kernel, &fine)?;
        let r = iterate_from(&fine_op, g, &vec![0.0; fine.len()], opts.tol, opts.max_iter)?;
        inconclusive |= !r.converged;
        let interp = NystromInterpolant::new(kernel, &fine_op, g, &r.deficit);
        let at_coarse: Vec<f64> = op.grid.nodes.par_iter().map(|&x| interp.deficit_at(x)).collect();
        Some(sup_dev(&at_coarse, deficit_star))
    } else {
        None
    };
    let max_dev = restart_max_dev.max(refined_dev.unwrap_or(0.0));
    Ok(UniquenessProbe {
        trial_deviations,
        restart_max_dev,
        refined_dev,
        max_dev,
        inconclusive,
        passed: !inconclusive && max_dev <= 10.0 * opts.tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateOptions {
    pub lemma2: bool,
    pub lemma3: bool,
    pub jensen: bool,
    pub asymptote: bool,
    pub uniqueness: bool,
    pub probe_trials: usize,
    pub probe_scale: f64,
    pub probe_refine: bool,
    pub seed: u64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        CertificateOptions {
            lemma2: true,
            lemma3: true,
            jensen: true,
            asymptote: true,
            uniqueness: true,
            probe_trials: 5,
            probe_scale: 0.1,
            probe_refine: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateBundle {
    pub lemma2: Option<Lemma2Certificate>,
    pub lemma3: Option<Lemma3Certificate>,
    pub asymptote: Option<AsymptoteCertificate>,
    pub jensen_min_margin: Option<f64>,
    pub uniqueness: Option<UniquenessProbe>,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Runs every enabled certificate on a converged solve. Hypothesis failures
/// are recorded as certificate failures rather than returned as errors.
pub fn certify<K: Kernel + ?Sized>(
    kernel: &K,
    op: &OperatorMatrix,
    g: &NonlinearitySpec,
    solve: &SolveReport,
    conditions: &ConditionReport,
    opts: &CertificateOptions,
    max_iter: usize,
) -> Result<CertificateBundle> {
    let mut failures = Vec::new();
    let constants = &conditions.constants;
    let grid = &op.grid;
    let hypothesis = |name: &str, e: Error, failures: &mut Vec<String>| -> Result<()> {
        match e {
            Error::HypothesisNotMet(msg) => {
                failures.push(format!("{name}: {msg}"));
                Ok(())
            }
            other => Err(other),
        }
    };

    let lemma2 = if opts.lemma2 {
        match lemma2_certificate(&solve.deficit, constants, g, grid, conditions.symmetry_residual) {
            Ok(c) => {
                if !c.passed || !(c.lhs > 0.0) {
                    failures.push(format!("lemma 2: lhs {} vs rhs {}", c.lhs, c.rhs));
                }
                Some(c)
            }
            Err(e) => {
                hypothesis("lemma 2", e, &mut failures)?;
                None
            }
        }
    } else {
        None
    };
    let lemma3 = if opts.lemma3 {
        match lemma3_certificate(&solve.deficit, grid, g, constants) {
            Ok(c) => {
                if !c.passed {
                    failures.push(format!("lemma 3: lhs {} vs rhs {:?}", c.lhs, c.rhs));
                }
                Some(c)
            }
            Err(e) => {
                hypothesis("lemma 3", e, &mut failures)?;
                None
            }
        }
    } else {
        None
    };
    let asymptote = if opts.asymptote {
        let c = asymptote_certificate(&solve.deficit, &op.gamma, g.eta)?;
        if !c.passed {
            failures.push(format!("asymptote: gap {} exceeds {}", c.gap, c.bound));
        }
        Some(c)
    } else {
        None
    };
    let jensen_min_margin = opts.jensen.then(|| {
        let m = jensen_certificate(op, g, &solve.profile);
        if m < -JENSEN_TOL {
            failures.push(format!("jensen: margin {m:e}"));
        }
        m
    });
    let uniqueness = if opts.uniqueness {
        let probe = ProbeOptions {
            scale: opts.probe_scale,
            trials: opts.probe_trials,
            seed: opts.seed,
            tol: solve.tol,
            max_iter,
            refine: opts.probe_refine,
        };
        match uniqueness_probe(kernel, op, g, &solve.deficit, &probe) {
            Ok(p) => {
                if !p.passed {
                    failures.push(format!(
                        "uniqueness probe: max deviation {:e}{}",
                        p.max_dev,
                        if p.inconclusive { " (inconclusive)" } else { "" }
                    ));
                }
                Some(p)
            }
            Err(e) => {
                hypothesis("uniqueness probe", e, &mut failures)?;
                None
            }
        }
    } else {
        None
    };
    Ok(CertificateBundle {
        lemma2,
        lemma3,
        asymptote,
        jensen_min_margin,
        uniqueness,
        passed: failures.is_empty(),
        failures,
    })
}
