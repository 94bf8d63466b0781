//! Statistical kernel: accuracy, unbiased pass@k, repair gain, and the
//! Pearson chi-square independence test.
//!
//! All math is in 64-bit floats. Combination ratios are computed as running
//! products so nothing overflows for n well beyond any realistic attempt
//! count, and the chi-square p-value comes from a regularized upper
//! incomplete gamma evaluated by series / continued fraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate contingency table: {0}")]
    DegenerateTable(String),
}

/// Per-task fold of attempt records, the input unit for all aggregate metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    /// Attempts generated.
    pub n: usize,
    /// Attempts judged correct before any repair.
    pub c: usize,
    /// Attempts correct after single-pass repair (>= c).
    pub c_after_repair: usize,
    /// Attempts that ended well-formed.
    pub wf_count: usize,
}

impl TaskOutcome {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.c > self.c_after_repair || self.c_after_repair > self.n {
            return Err(MetricsError::Domain(format!(
                "task '{}': require c <= c_after_repair <= n, got {} <= {} <= {}",
                self.task_id, self.c, self.c_after_repair, self.n
            )));
        }
        if self.wf_count > self.n {
            return Err(MetricsError::Domain(format!(
                "task '{}': wf_count {} exceeds n {}",
                self.task_id, self.wf_count, self.n
            )));
        }
        Ok(())
    }
}

/// Unbiased pass@k estimator: 1 - C(n-c, k) / C(n, k).
///
/// The ratio is accumulated multiplicatively as prod (n-c-i)/(n-i) for
/// i in 0..k, which keeps every intermediate value in [0, 1].
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, MetricsError> {
    if k < 1 || k > n {
        return Err(MetricsError::Domain(format!("require 1 <= k <= n, got k={k}, n={n}")));
    }
    if c > n {
        return Err(MetricsError::Domain(format!("require c <= n, got c={c}, n={n}")));
    }
    if c == 0 {
        return Ok(0.0);
    }
    // C(n-c, k) = 0 when n-c < k: some selected sample is always correct.
    if n - c < k {
        return Ok(1.0);
    }
    let mut prod = 1.0_f64;
    for i in 0..k {
        prod *= (n - c - i) as f64 / (n - i) as f64;
    }
    Ok(1.0 - prod)
}

/// Mean per-task pass@k over a set of outcomes.
pub fn aggregate_pass_at_k(
    outcomes: &[TaskOutcome],
    k: usize,
    use_repair: bool,
) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sum = 0.0;
    for outcome in outcomes {
        outcome.validate()?;
        let c = if use_repair { outcome.c_after_repair } else { outcome.c };
        sum += pass_at_k(outcome.n, c, k)?;
    }
    Ok(sum / outcomes.len() as f64)
}

/// Fraction of tasks correct on the first attempt; identical to pass@1.
///
/// Computed through the same pass@k path so the `accuracy == pass@1`
/// identity holds bit-exactly, not just up to rounding.
pub fn accuracy(outcomes: &[TaskOutcome], use_repair: bool) -> Result<f64, MetricsError> {
    aggregate_pass_at_k(outcomes, 1, use_repair)
}

/// Aggregate pass@k gain from enabling single-pass repair.
///
/// Non-negative by the c <= c_after_repair invariant.
pub fn repair_gain(outcomes: &[TaskOutcome], k: usize) -> Result<f64, MetricsError> {
    let with = aggregate_pass_at_k(outcomes, k, true)?;
    let without = aggregate_pass_at_k(outcomes, k, false)?;
    Ok(with - without)
}

/// Result of a chi-square independence test over a contingency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub significant: bool,
    pub alpha: f64,
}

/// Pearson chi-square test of independence on an observed-count table.
///
/// Expected counts are row_total * col_total / grand_total; the null
/// hypothesis (independence) is rejected when p < alpha, which labels the
/// row factor as having a significant effect.
pub fn chi_square_test(observed: &[Vec<f64>], alpha: f64) -> Result<ChiSquareResult, MetricsError> {
    let rows = observed.len();
    if rows < 2 {
        return Err(MetricsError::DegenerateTable(format!("need >= 2 rows, got {rows}")));
    }
    let cols = observed[0].len();
    if cols < 2 {
        return Err(MetricsError::DegenerateTable(format!("need >= 2 columns, got {cols}")));
    }
    if observed.iter().any(|r| r.len() != cols) {
        return Err(MetricsError::DegenerateTable("ragged rows".into()));
    }
    if observed.iter().flatten().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(MetricsError::Domain("observed counts must be finite and >= 0".into()));
    }

    let row_totals: Vec<f64> = observed.iter().map(|r| r.iter().sum()).collect();
    let col_totals: Vec<f64> =
        (0..cols).map(|j| observed.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = row_totals.iter().sum();

    if let Some(i) = row_totals.iter().position(|&t| t == 0.0) {
        return Err(MetricsError::DegenerateTable(format!("row {i} has zero total")));
    }
    if let Some(j) = col_totals.iter().position(|&t| t == 0.0) {
        return Err(MetricsError::DegenerateTable(format!("column {j} has zero total")));
    }

    let mut statistic = 0.0;
    for (i, row) in observed.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = row_totals[i] * col_totals[j] / total;
            let diff = obs - expected;
            statistic += diff * diff / expected;
        }
    }

    let dof = (rows - 1) * (cols - 1);
    let p_value = chi_square_survival(statistic, dof);
    Ok(ChiSquareResult { statistic, dof, p_value, significant: p_value < alpha, alpha })
}

/// Upper-tail probability P(X >= x) for a chi-square distribution with
/// `dof` degrees of freedom: the regularized upper incomplete gamma
/// Q(dof/2, x/2).
pub fn chi_square_survival(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(dof as f64 / 2.0, x / 2.0)
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 500;

/// Regularized upper incomplete gamma Q(a, x) = Γ(a, x) / Γ(a).
///
/// Series expansion of P(a, x) for x < a + 1, Lentz continued fraction for
/// Q(a, x) otherwise; both converge well past the 1e-10 absolute error the
/// reports rely on.
fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut term = sum;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Lanczos approximation of ln Γ(x), g = 7, accurate to ~1e-15 for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &coeff) in COEFFS.iter().enumerate().skip(1) {
        acc += coeff / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
