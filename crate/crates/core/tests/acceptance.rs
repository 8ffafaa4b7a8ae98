//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p hammerstein --test acceptance`.

use std::time::Instant;

use hammerstein::analysis::{lemma2_certificate, lemma3_certificate, uniqueness_probe, ProbeOptions};
use hammerstein::kernels::{check_kernel_conditions, lambda_star_excess_integral, ConditionReport};
use hammerstein::nemytsky::{solve_nemytsky, NemytskySpec};
use hammerstein::nonlinearity::{check_g_conditions, power_plus_linear_ratio_min};
use hammerstein::picard::{verify_rate_bound, NystromInterpolant};
use hammerstein::*;

const X_MAX: f64 = 40.0;
const PANELS: usize = 400;
const TOL: f64 = 1e-10;
const MAX_ITER: usize = 10_000;

struct Run {
    name: String,
    kernel: KernelSpec,
    g: NonlinearitySpec,
    conditions: ConditionReport,
    op: OperatorMatrix,
    report: SolveReport,
}

struct Outcome {
    lines: Vec<String>,
    failed: usize,
}

impl Outcome {
    fn record(&mut self, id: usize, title: &str, ok: bool, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        self.failed += usize::from(!ok);
        let line = format!("[{tag}] criterion {id:>2}: {title} -- {detail}");
        println!("{line}");
        self.lines.push(line);
    }
}

fn kernels() -> [(&'static str, KernelSpec); 3] {
    [
        ("A", KernelSpec::catalog(KernelFamily::A)),
        ("B", KernelSpec::catalog(KernelFamily::B { delta: 0.5 })),
        ("C", KernelSpec::catalog(KernelFamily::C { epsilon: 0.5 })),
    ]
}

fn nonlinearities() -> [(&'static str, NonlinearitySpec); 3] {
    [
        ("I", NonlinearitySpec::power(0.5).unwrap()),
        ("II", NonlinearitySpec::power_plus_linear(0.5).unwrap()),
        ("III", NonlinearitySpec::two_power(0.25, 0.75).unwrap()),
    ]
}

fn sup_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn main() {
    let mut out = Outcome { lines: Vec::new(), failed: 0 };
    let grid = build_grid(X_MAX, PANELS, Rule::GaussLegendre(4)).unwrap();

    // 1: all nine catalog runs
    let t0 = Instant::now();
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for (kn, kernel) in kernels() {
        let conditions = check_kernel_conditions(&kernel, &grid, 64, TOL);
        let op = assemble_operator(&kernel, &grid).unwrap();
        for (gn, g) in nonlinearities() {
            match solve_picard(&op, &g, TOL, MAX_ITER) {
                Ok(report) => runs.push(Run {
                    name: format!("{kn}+{gn}"),
                    kernel: kernel.clone(),
                    g,
                    conditions: conditions.clone(),
                    op: op.clone(),
                    report,
                }),
                Err(e) => errors.push(format!("{kn}+{gn}: {e}")),
            }
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let worst_mono = runs.iter().map(|r| r.report.monotone_max_violation).fold(0.0, f64::max);
    let iters: Vec<String> = runs.iter().map(|r| format!("{}:{}", r.name, r.report.iterations)).collect();
    out.record(
        1,
        "monotone iteration, 9 catalog runs",
        errors.is_empty() && runs.len() == 9 && worst_mono <= 1e-12 && elapsed <= 60.0,
        format!(
            "max violation {worst_mono:e}, {elapsed:.2} s, iterations [{}]{}",
            iters.join(" "),
            if errors.is_empty() { String::new() } else { format!(", errors {errors:?}") }
        ),
    );

    // 2: rate bound
    let mut rate_ok = runs.len() == 9;
    let mut worst_ratio: f64 = 0.0;
    for r in &runs {
        rate_ok &= verify_rate_bound(&r.report, r.g.cond4_alpha).unwrap_or(false);
        for (d, e) in r.report.sup_diffs.iter().zip(&r.report.envelope) {
            if let Some(e) = e {
                worst_ratio = worst_ratio.max(d / e);
            }
        }
    }
    out.record(2, "rate bound (13)", rate_ok, format!("max sup_diff/envelope {worst_ratio:.4}"));

    // 3: residual
    let worst_res = runs.iter().map(|r| r.report.residual_inf).fold(0.0, f64::max);
    out.record(
        3,
        "fixed-point residual",
        runs.len() == 9 && worst_res <= 2e-10,
        format!("max residual {worst_res:e}"),
    );

    // 4: interior bounds and asymptote
    let interior = runs.iter().all(|r| r.report.interior_ok);
    let worst_gap = runs.iter().map(|r| *r.report.deficit.last().unwrap()).fold(0.0, f64::max);
    let min_f = runs
        .iter()
        .flat_map(|r| r.report.profile.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let min_deficit = runs
        .iter()
        .flat_map(|r| r.report.deficit.iter().copied())
        .fold(f64::INFINITY, f64::min);
    out.record(
        4,
        "0 < f* < eta and eta - f*(x_max) <= 1e-6",
        runs.len() == 9 && interior && min_f > 0.0 && worst_gap <= 1e-6,
        format!("min f* {min_f:.6}, min eta-f* {min_deficit:e}, max eta-f*(x_max) {worst_gap:e}"),
    );

    // 5: Lemma 2
    let mut ok5 = runs.len() == 9;
    let mut detail5 = Vec::new();
    for r in &runs {
        match lemma2_certificate(&r.report.deficit, &r.conditions.constants, &r.g, &grid, r.conditions.symmetry_residual) {
            Ok(c) => {
                ok5 &= c.passed && c.lhs > 0.0;
                detail5.push(format!("{}:{:.4}/{:.4}", r.name, c.lhs, c.rhs));
            }
            Err(e) => {
                ok5 = false;
                detail5.push(format!("{}: {e}", r.name));
            }
        }
    }
    out.record(5, "Lemma 2 integral bound (lhs/rhs)", ok5, detail5.join(" "));

    // 6: Lemma 3
    let mut ok6 = runs.len() == 9;
    let mut detail6 = Vec::new();
    for r in &runs {
        match lemma3_certificate(&r.report.deficit, &grid, &r.g, &r.conditions.constants) {
            Ok(c) => {
                ok6 &= c.passed;
                detail6.push(format!("{}:{:.4}/{:.4}", r.name, c.lhs, c.rhs.unwrap_or(f64::NAN)));
            }
            Err(e) => {
                ok6 = false;
                detail6.push(format!("{}: {e}", r.name));
            }
        }
    }
    out.record(6, "Lemma 3 tail bound (lhs/rhs)", ok6, detail6.join(" "));

    let ci = runs.iter().find(|r| r.name == "C+I");

    // 7: squeeze on the first 10 iterations of C+I
    match ci {
        Some(r) => {
            let first: Vec<f64> = r.report.squeeze_violations.iter().take(10).copied().collect();
            let worst = first.iter().copied().fold(0.0, f64::max);
            out.record(
                7,
                "squeeze inequalities, C+I, first 10 iterations",
                first.len() == 10 && worst <= 1e-12,
                format!("{} steps checked, max violation {worst:e}, sigma0 {:.6}", first.len(), r.report.sigma0),
            );
        }
        None => out.record(7, "squeeze inequalities", false, "C+I run missing".into()),
    }

    // 8: grid refinement
    match ci {
        Some(r) => {
            let fine = grid.refined();
            let fine_op = assemble_operator(&r.kernel, &fine).unwrap();
            let fine_rep = solve_picard(&fine_op, &r.g, TOL, MAX_ITER).unwrap();
            let interp = NystromInterpolant::new(&r.kernel, &fine_op, &r.g, &fine_rep.deficit);
            let at_coarse: Vec<f64> = grid.nodes.iter().map(|&x| interp.deficit_at(x)).collect();
            let dev = sup_dev(&at_coarse, &r.report.deficit);
            out.record(8, "refinement 400 -> 800 panels, C+I", dev <= 1e-8, format!("sup change {dev:e}"));
        }
        None => out.record(8, "refinement", false, "C+I run missing".into()),
    }

    // 9: uniqueness probe
    match ci {
        Some(r) => {
            let t = Instant::now();
            let opts = ProbeOptions { scale: 0.1, trials: 5, seed: 2024, tol: TOL, max_iter: MAX_ITER, refine: false };
            let probe = uniqueness_probe(&r.kernel, &r.op, &r.g, &r.report.deficit, &opts);
            let secs = t.elapsed().as_secs_f64();
            match probe {
                Ok(p) => out.record(
                    9,
                    "uniqueness probe, 5 restarts at 0.1 eta, C+I",
                    !p.inconclusive && p.trial_deviations.len() == 5 && p.restart_max_dev <= 1e-9 && secs <= 30.0,
                    format!("max deviation {:e}, {secs:.2} s", p.restart_max_dev),
                ),
                Err(e) => out.record(9, "uniqueness probe", false, e.to_string()),
            }
        }
        None => out.record(9, "uniqueness probe", false, "C+I run missing".into()),
    }

    // 10: Nemytsky sandwich
    match ci {
        Some(r) => {
            let spec = NemytskySpec::catalog(0.25, r.g, r.kernel.clone()).unwrap();
            match solve_nemytsky(&spec, &r.op, &r.report.deficit, TOL, MAX_ITER) {
                Ok(n) => {
                    let upper = n
                        .profile
                        .iter()
                        .zip(&n.upper_env)
                        .map(|(p, u)| p - u)
                        .fold(f64::NEG_INFINITY, f64::max);
                    out.record(
                        10,
                        "Nemytsky sandwich, C+I+g1+g3, xi = 0.25",
                        n.lower_max_violation <= 1e-10
                            && upper <= 1e-10
                            && n.phi_tail <= 1e-6
                            && n.monotone_max_violation <= 1e-12,
                        format!(
                            "lower {:e}, upper {upper:e}, Phi(x_max) {:e}, decrease {:e}, {} iterations",
                            n.lower_max_violation, n.phi_tail, n.monotone_max_violation, n.iterations
                        ),
                    );
                }
                Err(e) => out.record(10, "Nemytsky sandwich", false, e.to_string()),
            }
        }
        None => out.record(10, "Nemytsky sandwich", false, "C+I run missing".into()),
    }

    // 11: nonlinearity lattices
    let mut ok11 = true;
    let mut detail11 = Vec::new();
    for (gn, g) in nonlinearities() {
        let rep = check_g_conditions(&g, 200, 200, 1e-12).unwrap();
        ok11 &= rep.passed;
        if gn == "I" {
            ok11 &= rep.scaling_max_deviation <= 1e-14;
            detail11.push(format!("I equality {:e}", rep.scaling_max_deviation));
        } else {
            detail11.push(format!("{gn} margin {:e}", rep.scaling_min_margin));
        }
        if !rep.passed {
            detail11.push(format!("{gn} failures {:?}", rep.failures));
        }
    }
    let sigmas: Vec<f64> = (1..=99).map(|k| k as f64 / 100.0).collect();
    let ratio = power_plus_linear_ratio_min(0.5, &sigmas);
    ok11 &= ratio >= 1.0;
    detail11.push(format!("(69) min ratio {ratio:.6}"));
    out.record(11, "nonlinearity lattice certificates", ok11, detail11.join(", "));

    // 12: closed forms
    let (mass, _) = BaseKernel::Gaussian.half_line_moments();
    let mass_err = (mass - 0.5).abs();
    let gamma_err = [0.25, 0.5, 0.75]
        .iter()
        .map(|&l| (lambda_star_excess_integral(l) - libm::tgamma(1.0 - l)).abs())
        .fold(0.0, f64::max);
    let m = Modulation::default();
    let ts: Vec<f64> = (0..=400).map(|k| 0.05 * k as f64).collect();
    let sup_err = (0..10)
        .map(|k| {
            let x = 0.7 * k as f64;
            (m.sup_one_minus_mu(x, &ts) - (1.0 - m.d_star).powi(2) * (-x).exp()).abs()
        })
        .fold(0.0, f64::max);
    out.record(
        12,
        "closed-form spot checks",
        mass_err <= 1e-12 && gamma_err <= 1e-8 && sup_err <= 1e-12,
        format!("|int K0 - 1/2| {mass_err:e}, |int(lambda*-1) - Gamma(1-l)| {gamma_err:e}, sup(1-mu) {sup_err:e}"),
    );

    println!("acceptance: {} of 12 criteria passed", 12 - out.failed);
    if out.failed > 0 {
        std::process::exit(1);
    }
}
