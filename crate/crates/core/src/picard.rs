//! Nyström discretization and the monotone successive approximations
//! `f_{n+1} = int K(x,t) G(f_n(t)) dt`, `f_0 = eta`.
//!
//! The iterates are stored as deficits `d_n = eta - f_n`. In those
//! coordinates the map reads `d_{n+1} = eta gamma + A H(d_n)` with
//! `H(d) = eta - G(eta - d)`, which keeps full relative precision where
//! `f_n` is within rounding of `eta` (far from the origin). The iteration is
//! the same sequence; only its floating-point representation differs.
//!
//! Each operator row is closed in two ways so that its total mass equals
//! `1 - gamma(x_i)` exactly:
//! * a tail term `int_{x_max}^inf K(x_i, t) dt` applied to the value at the
//!   last node (the solution is constant to rounding out there);
//! * a diagonal correction absorbing the quadrature error of the row.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::nonlinearity::NonlinearitySpec;
use crate::quadrature::{HalfLineGrid, QuadratureRule};

/// Pointwise slack for monotonicity and squeeze checks.
pub const MONOTONE_TOL: f64 = 1e-12;
/// Monotonicity violations beyond this abort the iteration.
pub const BREAKDOWN_TOL: f64 = 1e-9;
/// Additive slack of the rate-bound check.
pub const RATE_BOUND_TOL: f64 = 1e-12;
const ASSEMBLY_TOL: f64 = 1e-10;
const DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub grid: HalfLineGrid,
    /// `A[i][j] = w_j K(x_i, t_j)`, row-major.
    entries: Vec<f64>,
    pub diagonal_correction: Vec<f64>,
    /// Kernel mass beyond `x_max` for each row.
    pub tail: Vec<f64>,
    /// Closed row mass, `1 - gamma(x_i)`.
    pub row_mass: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl OperatorMatrix {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.entries[i * n..(i + 1) * n]
    }

    /// Row `i` with its closure terms folded in: the weights actually applied.
    pub fn effective_row(&self, i: usize) -> Vec<f64> {
        let n = self.len();
        let mut row = self.row(i).to_vec();
        row[i] += self.diagonal_correction[i];
        row[n - 1] += self.tail[i];
        row
    }

    /// `max |A[i][j] w_i - A[j][i] w_j|`; zero for a symmetric kernel.
    pub fn weighted_symmetry_residual(&self) -> f64 {
        let n = self.len();
        let w = &self.grid.weights;
        (0..n)
            .map(|i| {
                (i + 1..n)
                    .map(|j| (self.entry(i, j) * w[i] - self.entry(j, i) * w[j]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// `y_i = sum_j A[i][j] v_j + c_i v_i + tail_i v_last`, fixed summation order.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        let last = v[n - 1];
        (0..n)
            .into_par_iter()
            .map(|i| {
                let dot: f64 = self.row(i).iter().zip(v).map(|(a, x)| a * x).sum();
                dot + self.diagonal_correction[i] * v[i] + self.tail[i] * last
            })
            .collect()
    }
}

/// Nyström matrix of `kernel` on `grid`, with row closure.
///
/// Rejects kernels whose discretization is not a positive operator with
/// row mass in `(0, 1]` and a non-trivial mass defect.
pub fn assemble_operator<K: Kernel + ?Sized>(
    kernel: &K,
    grid: &HalfLineGrid,
) -> Result<OperatorMatrix> {
    let n = grid.len();
    let tail_len = kernel.tail_length();
    let ext = grid.extended_rule(tail_len);
    let tail_rule = grid.tail_rule(tail_len);

    let mut entries = vec![0.0; n * n];
    entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let x = grid.nodes[i];
        for ((a, &t), &w) in row.iter_mut().zip(&grid.nodes).zip(&grid.weights) {
            *a = w * kernel.eval(x, t);
        }
    });
    let per_row: Vec<(f64, f64)> = grid
        .nodes
        .par_iter()
        .map(|&x| (tail_rule.integrate_fn(|t| kernel.eval(x, t)), kernel.mass_defect(x, &ext)))
        .collect();
    let (tail, gamma): (Vec<f64>, Vec<f64>) = per_row.into_iter().unzip();

    let mut diagonal_correction = vec![0.0; n];
    let mut row_mass = vec![0.0; n];
    for i in 0..n {
        let row = &entries[i * n..(i + 1) * n];
        if let Some(j) = row.iter().position(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::SpecRejected(format!(
                "kernel value at node pair ({i}, {j}) is {}",
                row[j]
            )));
        }
        let quad: f64 = row.iter().sum::<f64>() + tail[i];
        row_mass[i] = 1.0 - gamma[i];
        diagonal_correction[i] = row_mass[i] - quad;
        if row[i] + diagonal_correction[i] < 0.0 {
            return Err(Error::SpecRejected(format!(
                "row {i}: quadrature error {:e} exceeds the diagonal weight; refine the grid",
                diagonal_correction[i]
            )));
        }
    }
    let gamma_min = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    if gamma_min < -ASSEMBLY_TOL {
        return Err(Error::SpecRejected(format!(
            "row mass exceeds 1: min gamma = {gamma_min:e}"
        )));
    }
    if gamma.iter().all(|g| g.abs() <= ASSEMBLY_TOL) {
        return Err(Error::SpecRejected(
            "mass defect vanishes identically (conservative kernel)".into(),
        ));
    }
    if row_mass.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::SpecRejected("a kernel row has no mass".into()));
    }
    Ok(OperatorMatrix {
        grid: grid.clone(),
        entries,
        diagonal_correction,
        tail,
        row_mass,
        gamma,
    })
}

/// One step of the successive approximations: `A G(f)`.
pub fn apply_hammerstein(
    op: &OperatorMatrix,
    g: &NonlinearitySpec,
    f: &[f64],
) -> Result<Vec<f64>> {
    check_len(op, f)?;
    let eta = g.eta;
    if let Some((index, &value)) = f
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v >= -DOMAIN_TOL && v <= eta + DOMAIN_TOL))
    {
        return Err(Error::DomainViolation { index, value, upper: eta });
    }
    let gv: Vec<f64> = f.iter().map(|&v| g.g(v.clamp(0.0, eta))).collect();
    Ok(op.apply(&gv))
}

/// The same step in deficit coordinates: `d -> eta gamma + A H(d)`.
pub fn apply_deficit(op: &OperatorMatrix, g: &NonlinearitySpec, d: &[f64]) -> Vec<f64> {
    let eta = g.eta;
    let hv: Vec<f64> = d.iter().map(|&v| g.deficit_map(v.clamp(0.0, eta))).collect();
    op.apply(&hv)
        .into_iter()
        .zip(&op.gamma)
        .map(|(s, gm)| eta * gm + s)
        .collect()
}

fn check_len(op: &OperatorMatrix, f: &[f64]) -> Result<()> {
    if f.len() != op.len() {
        return Err(Error::InvalidArgument(format!(
            "vector length {} does not match operator size {}",
            f.len(),
            op.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Number of applications of the operator.
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
    pub eta: f64,
    pub cond4_alpha: f64,
    /// `sup |f_n - f_{n+1}|` for `n = 0, 1, ...`
    pub sup_diffs: Vec<f64>,
    /// `eta alpha^(n-1) ln(1/sigma0)` for `n >= 1`; `None` at `n = 0`.
    pub envelope: Vec<Option<f64>>,
    /// `min_x f_2(x) / f_1(x)`
    pub sigma0: f64,
    /// `f_2 / f_1` at the last node.
    pub sigma0_tail_ratio: f64,
    pub monotone_ok: bool,
    pub monotone_max_violation: f64,
    /// Violation of `sigma0^(alpha^(n-1)) f_n <= f_{n+1} <= f_n` for `n >= 1`.
    pub squeeze_violations: Vec<f64>,
    pub rate_bound_ok: bool,
    pub residual_inf: f64,
    /// `0 < f* < eta` at every node.
    pub interior_ok: bool,
    /// `f*` at the grid nodes.
    pub profile: Vec<f64>,
    /// `eta - f*`, carried separately at full precision.
    pub deficit: Vec<f64>,
}

impl SolveReport {
    pub fn squeeze_max_violation(&self) -> f64 {
        self.squeeze_violations.iter().copied().fold(0.0, f64::max)
    }
}

/// `eta alpha^(n-1) ln(1/sigma0)`, `n >= 1`.
pub fn rate_envelope(eta: f64, alpha: f64, sigma0: f64, n: usize) -> f64 {
    debug_assert!(n >= 1);
    eta * alpha.powi(n as i32 - 1) * (1.0 / sigma0).ln()
}

/// `sigma0 = min_i f2_i / f1_i`, clamped to `(0, 1]`.
pub fn estimate_sigma0(f1: &[f64], f2: &[f64]) -> Result<f64> {
    if f1.len() != f2.len() || f1.is_empty() {
        return Err(Error::InvalidArgument("iterates must be non-empty and equally long".into()));
    }
    let mut sigma = f64::INFINITY;
    for (i, (&a, &b)) in f1.iter().zip(f2).enumerate() {
        if !(a > 0.0) {
            return Err(Error::NumericalBreakdown(format!(
                "first iterate is not positive at node {i}: {a}"
            )));
        }
        sigma = sigma.min(b / a);
    }
    Ok(sigma.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Checks `sup_diffs[n] <= eta alpha^(n-1) ln(1/sigma0) + 1e-12` for every
/// recorded `n >= 1`. The step from `f_0` is not covered by the bound.
pub fn verify_rate_bound(report: &SolveReport, cond4_alpha: f64) -> Result<bool> {
    let sigma0 = report.sigma0;
    if !(sigma0 > 0.0 && sigma0 <= 1.0) {
        return Err(Error::InconsistentReport(format!("sigma0 = {sigma0} outside (0, 1]")));
    }
    let tail = report.sup_diffs.iter().skip(1);
    if sigma0 == 1.0 {
        if tail.clone().any(|&d| d > RATE_BOUND_TOL) {
            return Err(Error::InconsistentReport(
                "sigma0 = 1 forces a zero envelope but the iterates still move".into(),
            ));
        }
        return Ok(true);
    }
    Ok(report.sup_diffs.iter().enumerate().skip(1).all(|(n, &d)| {
        d <= rate_envelope(report.eta, cond4_alpha, sigma0, n) + RATE_BOUND_TOL
    }))
}

/// Runs the successive approximations from `f_0 = eta` until
/// `sup |f_n - f_{n+1}| <= tol`.
pub fn solve_picard(
    op: &OperatorMatrix,
    g: &NonlinearitySpec,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let eta = g.eta;
    let alpha = g.cond4_alpha;
    let n = op.len();
    let to_f = |d: &[f64]| d.iter().map(|v| eta - v).collect::<Vec<f64>>();

    let mut d = vec![0.0; n];
    let mut f_prev = vec![eta; n];
    let mut f1: Vec<f64> = Vec::new();
    let mut sigma0 = 1.0;
    let mut sigma0_tail_ratio = 1.0;
    let mut sup_diffs = Vec::new();
    let mut squeeze_violations = Vec::new();
    let mut monotone_max_violation: f64 = 0.0;
    let mut converged = false;

    for step in 0..max_iter.max(2) {
        let next = apply_deficit(op, g, &d);
        let f_next = to_f(&next);
        let mut diff: f64 = 0.0;
        let mut mono: f64 = 0.0;
        for (a, b) in d.iter().zip(&next) {
            diff = diff.max((b - a).abs());
            // f decreases <=> the deficit grows
            mono = mono.max(a - b);
        }
        monotone_max_violation = monotone_max_violation.max(mono);
        if mono > BREAKDOWN_TOL {
            return Err(Error::NumericalBreakdown(format!(
                "iterate {} exceeds its predecessor by {mono:e}",
                step + 1
            )));
        }
        sup_diffs.push(diff);

        match step {
            0 => f1 = f_next.clone(),
            1 => {
                sigma0 = estimate_sigma0(&f1, &f_next)?;
                sigma0_tail_ratio = f_next[n - 1] / f1[n - 1];
            }
            _ => {}
        }
        if step >= 1 {
            // step s maps f_s to f_{s+1}; the squeeze factor is sigma0^(alpha^(s-1))
            let factor = sigma0.powf(alpha.powi(step as i32 - 1));
            let v = f_prev
                .iter()
                .zip(&f_next)
                .map(|(&fp, &fnx)| (factor * fp - fnx).max(fnx - fp))
                .fold(0.0, f64::max);
            squeeze_violations.push(v);
        }

        d = next;
        f_prev = f_next;
        if step >= 1 && diff <= tol {
            converged = true;
            break;
        }
    }

    let profile = f_prev;
    let residual = apply_hammerstein(op, g, &profile)?;
    let residual_inf = profile
        .iter()
        .zip(&residual)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let envelope = (0..sup_diffs.len())
        .map(|k| (k >= 1).then(|| rate_envelope(eta, alpha, sigma0, k)))
        .collect();
    let mut report = SolveReport {
        iterations: sup_diffs.len(),
        converged,
        tol,
        eta,
        cond4_alpha: alpha,
        sup_diffs,
        envelope,
        sigma0,
        sigma0_tail_ratio,
        monotone_ok: monotone_max_violation <= MONOTONE_TOL,
        monotone_max_violation,
        squeeze_violations,
        rate_bound_ok: false,
        residual_inf,
        interior_ok: d.iter().all(|&v| v > 0.0 && v < eta),
        profile,
        deficit: d,
    };
    report.rate_bound_ok = match verify_rate_bound(&report, alpha) {
        Ok(ok) => ok,
        Err(_) => false,
    };
    if !converged {
        return Err(Error::NonConvergence(Box::new(report)));
    }
    Ok(report)
}

/// Outcome of iterating from an arbitrary starting deficit.
#[derive(Debug, Clone, PartialEq)]
pub struct Restart {
    pub deficit: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates the deficit map from `start` with the same stopping rule as
/// [`solve_picard`], without the monotonicity bookkeeping.
pub fn iterate_from(
    op: &OperatorMatrix,
    g: &NonlinearitySpec,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Restart> {
    check_len(op, start)?;
    let mut d = start.to_vec();
    for it in 1..=max_iter {
        let next = apply_deficit(op, g, &d);
        let diff = d.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        d = next;
        if diff <= tol {
            return Ok(Restart { deficit: d, iterations: it, converged: true });
        }
    }
    Ok(Restart { deficit: d, iterations: max_iter, converged: false })
}

/// Evaluates a discrete solution between grid nodes through the integral
/// equation itself (Nyström interpolation).
pub struct NystromInterpolant<'a, K: Kernel + ?Sized> {
    kernel: &'a K,
    op: &'a OperatorMatrix,
    eta: f64,
    mapped: Vec<f64>,
    ext: QuadratureRule,
    tail: QuadratureRule,
}

impl<'a, K: Kernel + ?Sized> NystromInterpolant<'a, K> {
    pub fn new(kernel: &'a K, op: &'a OperatorMatrix, g: &NonlinearitySpec, deficit: &[f64]) -> Self {
        let len = kernel.tail_length();
        NystromInterpolant {
            kernel,
            op,
            eta: g.eta,
            mapped: deficit.iter().map(|&v| g.deficit_map(v.clamp(0.0, g.eta))).collect(),
            ext: op.grid.extended_rule(len),
            tail: op.grid.tail_rule(len),
        }
    }

    /// `eta - f(x)`
    pub fn deficit_at(&self, x: f64) -> f64 {
        let grid = &self.op.grid;
        let gamma = self.kernel.mass_defect(x, &self.ext);
        let tail = self.tail.integrate_fn(|t| self.kernel.eval(x, t));
        let mut raw = 0.0;
        let mut acc = 0.0;
        for ((&t, &w), &h) in grid.nodes.iter().zip(&grid.weights).zip(&self.mapped) {
            let a = w * self.kernel.eval(x, t);
            raw += a;
            acc += a * h;
        }
        let nearest = grid
            .nodes
            .partition_point(|&t| t < x)
            .min(grid.len() - 1);
        let nearest = if nearest > 0 && (x - grid.nodes[nearest - 1]) < (grid.nodes[nearest] - x) {
            nearest - 1
        } else {
            nearest
        };
        let corr = (1.0 - gamma) - raw - tail;
        let last = *self.mapped.last().expect("non-empty grid");
        self.eta * gamma + acc + corr * self.mapped[nearest] + tail * last
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BaseKernel, GapForm, KernelFamily, KernelSpec, Modulation};
    use crate::quadrature::{build_grid, Rule};
    use proptest::prelude::*;

    fn grid(panels: usize) -> HalfLineGrid {
        build_grid(40.0, panels, Rule::GaussLegendre(4)).unwrap()
    }

    fn unit_lambda_c() -> KernelSpec {
        KernelSpec::new(
            KernelFamily::C { epsilon: 0.5 },
            BaseKernel::Gaussian,
            Modulation::new(GapForm::Exponential, 1.0, 0.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn row_mass_at_origin_family_c() {
        let spec = unit_lambda_c();
        let trap = build_grid(40.0, 400, Rule::Trapezoid).unwrap();
        let op = assemble_operator(&spec, &trap).unwrap();
        assert!((op.row_mass[0] - 0.75).abs() <= 1e-10);
        // the raw quadrature row already matches to within the correction
        assert!(op.diagonal_correction[0].abs() <= 1e-12);

        let op = assemble_operator(&spec, &grid(400)).unwrap();
        let x0 = op.grid.nodes[0];
        let exact = 1.0 - 0.5 * 0.5 * libm::erfc(x0);
        assert!((op.row_mass[0] - exact).abs() <= 1e-10);
    }

    #[test]
    fn single_node_operator() {
        let spec = KernelSpec::catalog(KernelFamily::C { epsilon: 0.5 });
        let g1 = build_grid(2.0, 1, Rule::GaussLegendre(1)).unwrap();
        let op = assemble_operator(&spec, &g1).unwrap();
        assert_eq!(op.len(), 1);
        assert_eq!(op.entry(0, 0), g1.weights[0] * spec.eval(1.0, 1.0));
    }

    #[test]
    fn weighted_symmetry_of_family_a() {
        let op = assemble_operator(&KernelSpec::catalog(KernelFamily::A), &grid(100)).unwrap();
        assert!(op.weighted_symmetry_residual() <= 1e-12);
    }

    #[test]
    fn entries_and_mass_in_range() {
        for fam in [KernelFamily::A, KernelFamily::B { delta: 0.5 }, KernelFamily::C { epsilon: 0.5 }] {
            let op = assemble_operator(&KernelSpec::catalog(fam), &grid(100)).unwrap();
            for i in 0..op.len() {
                assert!(op.row(i).iter().all(|&a| a >= 0.0));
                assert!(op.row_mass[i] > 0.0 && op.row_mass[i] <= 1.0 + 1e-12);
                // quadrature error of the row at 100 panels
                assert!(op.diagonal_correction[i].abs() < 1e-10, "{fam:?} row {i}");
            }
        }
    }

    struct Conservative;
    impl Kernel for Conservative {
        fn eval(&self, x: f64, t: f64) -> f64 {
            BaseKernel::Gaussian.eval(x - t)
        }
        fn tail_length(&self) -> f64 {
            7.0
        }
        fn mass_defect(&self, _x: f64, _rule: &QuadratureRule) -> f64 {
            0.0
        }
    }

    #[test]
    fn conservative_kernel_rejected() {
        let err = assemble_operator(&Conservative, &grid(50)).unwrap_err();
        assert!(matches!(err, Error::SpecRejected(_)));
    }

    #[test]
    fn apply_examples() {
        let spec = KernelSpec::catalog(KernelFamily::C { epsilon: 0.5 });
        let op = assemble_operator(&spec, &grid(100)).unwrap();
        let g = NonlinearitySpec::power(0.5).unwrap();
        let n = op.len();
        let up = apply_hammerstein(&op, &g, &vec![1.0; n]).unwrap();
        for i in 0..n {
            assert!((up[i] - (1.0 - op.gamma[i])).abs() <= 1e-14);
        }
        let zero = apply_hammerstein(&op, &g, &vec![0.0; n]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let mut bad = vec![0.5; n];
        bad[7] = 1.1;
        assert!(matches!(
            apply_hammerstein(&op, &g, &bad),
            Err(Error::DomainViolation { index: 7, .. })
        ));
        assert!(apply_hammerstein(&op, &g, &[0.5; 3]).is_err());
    }

    #[test]
    fn deficit_and_direct_steps_agree() {
        let spec = KernelSpec::catalog(KernelFamily::B { delta: 0.5 });
        let op = assemble_operator(&spec, &grid(80)).unwrap();
        let g = NonlinearitySpec::two_power(0.25, 0.75).unwrap();
        let f: Vec<f64> = op.grid.nodes.iter().map(|x| 1.0 - 0.7 * (-x).exp()).collect();
        let d: Vec<f64> = f.iter().map(|v| 1.0 - v).collect();
        let direct = apply_hammerstein(&op, &g, &f).unwrap();
        let via_deficit = apply_deficit(&op, &g, &d);
        for (a, b) in direct.iter().zip(&via_deficit) {
            assert!((a - (1.0 - b)).abs() <= 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn step_preserves_order(
            seed_a in prop::collection::vec(0.0f64..=1.0, 8),
            seed_b in prop::collection::vec(0.0f64..=1.0, 8),
        ) {
            let spec = KernelSpec::catalog(KernelFamily::C { epsilon: 0.5 });
            let op = assemble_operator(&spec, &build_grid(10.0, 10, Rule::GaussLegendre(4)).unwrap()).unwrap();
            let g = NonlinearitySpec::power(0.5).unwrap();
            let n = op.len();
            // piecewise-constant pair with f <= h
            let f: Vec<f64> = (0..n).map(|i| seed_a[i * 8 / n] * seed_b[i * 8 / n]).collect();
            let h: Vec<f64> = (0..n).map(|i| seed_b[i * 8 / n]).collect();
            let tf = apply_hammerstein(&op, &g, &f).unwrap();
            let th = apply_hammerstein(&op, &g, &h).unwrap();
            for i in 0..n {
                prop_assert!(tf[i] <= th[i] + 1e-15);
            }
        }
    }

    #[test]
    fn sigma0_examples() {
        let f1 = vec![0.3, 0.6, 0.9];
        assert_eq!(estimate_sigma0(&f1, &f1).unwrap(), 1.0);
        let half: Vec<f64> = f1.iter().map(|v| 0.5 * v).collect();
        assert_eq!(estimate_sigma0(&f1, &half).unwrap(), 0.5);
        assert!(matches!(
            estimate_sigma0(&[0.3, 0.0], &[0.1, 0.1]),
            Err(Error::NumericalBreakdown(_))
        ));
    }

    fn synthetic(sigma0: f64, diffs: Vec<f64>) -> SolveReport {
        SolveReport {
            iterations: diffs.len(),
            converged: true,
            tol: 1e-10,
            eta: 1.0,
            cond4_alpha: 0.5,
            envelope: vec![None; diffs.len()],
            sup_diffs: diffs,
            sigma0,
            sigma0_tail_ratio: 1.0,
            monotone_ok: true,
            monotone_max_violation: 0.0,
            squeeze_violations: vec![],
            rate_bound_ok: true,
            residual_inf: 0.0,
            interior_ok: true,
            profile: vec![],
            deficit: vec![],
        }
    }

    #[test]
    fn rate_bound_edge_cases() {
        // sigma0 = 1: zero envelope
        assert!(verify_rate_bound(&synthetic(1.0, vec![0.3, 0.0, 0.0]), 0.5).unwrap());
        assert!(matches!(
            verify_rate_bound(&synthetic(1.0, vec![0.3, 1e-3]), 0.5),
            Err(Error::InconsistentReport(_))
        ));
        // envelope at n = 1 is ln 2 for sigma0 = 0.5
        let ln2 = std::f64::consts::LN_2;
        assert!(verify_rate_bound(&synthetic(0.5, vec![0.9, ln2, 0.5 * ln2]), 0.5).unwrap());
        assert!(!verify_rate_bound(&synthetic(0.5, vec![0.9, ln2, 0.6 * ln2]), 0.5).unwrap());
    }

    #[test]
    fn elementary_log_inequality() {
        // 1 - s^(a^(n-1)) <= a^(n-1) ln(1/s): the step from (29) to (13)
        for &s in &[1e-6, 0.01, 0.3, 0.9, 0.999] {
            for &a in &[0.1, 0.5, 0.9] {
                for n in 1..40 {
                    let p = f64::powi(a, n - 1);
                    assert!(1.0 - f64::powf(s, p) <= p * (1.0 / s).ln() + 1e-15);
                }
            }
        }
    }

    #[test]
    fn catalog_solve_c_i() {
        let spec = KernelSpec::catalog(KernelFamily::C { epsilon: 0.5 });
        let op = assemble_operator(&spec, &grid(200)).unwrap();
        let g = NonlinearitySpec::power(0.5).unwrap();
        let rep = solve_picard(&op, &g, 1e-10, 500).unwrap();
        assert!(rep.converged && rep.monotone_ok && rep.rate_bound_ok && rep.interior_ok);
        assert!(rep.residual_inf <= 2e-10, "{}", rep.residual_inf);
        assert!(rep.sigma0 > 0.0 && rep.sigma0 < 1.0);
        assert!(rep.sigma0_tail_ratio >= 0.99);
        assert!(*rep.profile.last().unwrap() >= 1.0 - 1e-6);
        assert!(rep.squeeze_max_violation() <= 1e-12);
        // first iterate is eta (1 - gamma)
        assert!((rep.sup_diffs[0] - op.gamma.iter().copied().fold(0.0, f64::max)).abs() <= 1e-15);
        let bound = ((1e-10 / (1.0 / rep.sigma0).ln()).ln() / 0.5f64.ln()).ceil() as usize + 2;
        assert!(rep.iterations <= bound, "{} > {bound}", rep.iterations);
    }

    #[test]
    fn non_convergence_carries_partial_report() {
        let spec = KernelSpec::catalog(KernelFamily::C { epsilon: 0.5 });
        let op = assemble_operator(&spec, &grid(50)).unwrap();
        let g = NonlinearitySpec::power(0.5).unwrap();
        match solve_picard(&op, &g, 1e-14, 3) {
            Err(Error::NonConvergence(rep)) => {
                assert_eq!(rep.iterations, 3);
                assert!(!rep.converged);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(solve_picard(&op, &g, 0.0, 10).is_err());
    }

    #[test]
    fn restart_from_fixed_point_stays() {
        let spec = KernelSpec::catalog(KernelFamily::A);
        let op = assemble_operator(&spec, &grid(100)).unwrap();
        let g = NonlinearitySpec::power_plus_linear(0.5).unwrap();
        let rep = solve_picard(&op, &g, 1e-11, 1000).unwrap();
        let r = iterate_from(&op, &g, &rep.deficit, 1e-11, 1000).unwrap();
        assert!(r.converged);
        let dev = r.deficit.iter().zip(&rep.deficit).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-10);
    }

    #[test]
    fn interpolant_reproduces_nodes() {
        let spec = KernelSpec::catalog(KernelFamily::C { epsilon: 0.5 });
        let op = assemble_operator(&spec, &grid(100)).unwrap();
        let g = NonlinearitySpec::power(0.5).unwrap();
        let rep = solve_picard(&op, &g, 1e-12, 500).unwrap();
        let interp = NystromInterpolant::new(&spec, &op, &g, &rep.deficit);
        for i in (0..op.len()).step_by(37) {
            let v = interp.deficit_at(op.grid.nodes[i]);
            assert!((v - rep.deficit[i]).abs() <= 2e-12, "node {i}");
        }
    }
}
