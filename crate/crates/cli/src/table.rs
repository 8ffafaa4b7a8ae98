//! Convergence table: measured `sup |f_n - f_{n+1}|` against the a-priori
//! envelope `eta alpha^(n-1) ln(1/sigma0)`.

use std::fmt::Write as _;

use hammerstein::picard::rate_envelope;
use hammerstein::SolveReport;

pub const TABLE_HEADER: &str = "n,sup_diff,envelope,ratio";

/// One comma-separated row per recorded step. The `n = 0` step has no
/// envelope; its `envelope` and `ratio` fields are left empty.
pub fn emit_convergence_table(report: &SolveReport) -> String {
    let mut s = format!("{TABLE_HEADER}\n");
    for (n, &d) in report.sup_diffs.iter().enumerate() {
        if n == 0 {
            let _ = writeln!(s, "0,{d:e},,");
            continue;
        }
        let env = rate_envelope(report.eta, report.cond4_alpha, report.sigma0, n);
        let ratio = if env > 0.0 {
            d / env
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let _ = writeln!(s, "{n},{d:e},{env:e},{ratio:e}");
    }
    s
}
