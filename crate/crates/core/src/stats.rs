//! Questionnaire scoring and the paired-comparison statistics behind the
//! SoundScape vs. CapCut evaluation table.
//!
//! p-values come from the regularized incomplete beta function evaluated by
//! a modified-Lentz continued fraction; no statistics crate is involved.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Participants in the reported evaluation.
pub const STUDY_PARTICIPANTS: usize = 14;

/// Reported `0.000` is read as anything below this.
pub const ZERO_P_BOUND: f64 = 0.0005;

/// Slack for `mean_a - mean_b` versus a two-decimal mean difference.
pub const MEAN_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("value {value} at position {index} outside [-3, 3]")]
    RangeViolation { index: usize, value: i32 },
    #[error("raw Likert value {0} outside 1..=7")]
    RawRangeViolation(i32),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all differences are equal; t is undefined")]
    ZeroVariance,
    #[error("need at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("need at least 2 respondents, got {0}")]
    TooFewRespondents(usize),
    #[error("respondent {row} has {got} items, expected {expected}")]
    RaggedMatrix { row: usize, expected: usize, got: usize },
    #[error("total score variance is zero")]
    ZeroTotalVariance,
    #[error("t is zero")]
    DivisionByZero,
    #[error("csv: {0}")]
    Csv(String),
}

// ---------------------------------------------------------------------------
// special functions

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const CF_EPS: f64 = 1e-15;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 10_000;

/// Continued fraction for `I_x(a, b)`, valid for `x < (a + 1) / (a + b + 2)`.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`. `x_complement` must equal
/// `1 - x`; passing it separately keeps precision when `x` is close to 1.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64, x_complement: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x_complement <= 0.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * x_complement.ln() - ln_beta(a, b)).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, x_complement) / b
    }
}

/// Two-sided Student-t tail `2 P(T_df > |t|)`.
pub fn t_tail_two_sided(t: f64, df: u32) -> f64 {
    assert!(df >= 1, "degrees of freedom must be at least 1");
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let nu = f64::from(df);
    let t2 = t * t;
    let x = nu / (nu + t2);
    let xc = t2 / (nu + t2);
    regularized_incomplete_beta(nu / 2.0, 0.5, x, xc).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// questionnaire

/// Eight UEQ-S items plus the work-quality item, all already on `-3..=3`.
/// Items 1-4 form the pragmatic scale, items 5-8 the hedonic one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UeqResponse {
    items: [i8; 8],
    pqw: i8,
}

fn check_score(index: usize, value: i32) -> Result<i8, StatsError> {
    if (-3..=3).contains(&value) {
        Ok(value as i8)
    } else {
        Err(StatsError::RangeViolation { index, value })
    }
}

impl UeqResponse {
    pub fn new(items: [i32; 8], pqw: i32) -> Result<Self, StatsError> {
        let mut checked = [0i8; 8];
        for (i, v) in items.iter().enumerate() {
            checked[i] = check_score(i, *v)?;
        }
        Ok(UeqResponse {
            items: checked,
            pqw: check_score(8, pqw)?,
        })
    }

    /// Builds a response from raw 1-7 Likert answers (offset -4).
    pub fn from_raw(items: [i32; 8], pqw: i32) -> Result<Self, StatsError> {
        let recode = |v: i32| {
            if (1..=7).contains(&v) {
                Ok(v - 4)
            } else {
                Err(StatsError::RawRangeViolation(v))
            }
        };
        let mut shifted = [0i32; 8];
        for (dst, v) in shifted.iter_mut().zip(items) {
            *dst = recode(v)?;
        }
        UeqResponse::new(shifted, recode(pqw)?)
    }

    pub fn items(&self) -> [i8; 8] {
        self.items
    }

    pub fn pqw(&self) -> i8 {
        self.pqw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleScores {
    pub pq: f64,
    pub hq: f64,
}

pub fn scale_scores(resp: &UeqResponse) -> ScaleScores {
    let mean = |slice: &[i8]| slice.iter().map(|&v| f64::from(v)).sum::<f64>() / slice.len() as f64;
    ScaleScores {
        pq: mean(&resp.items[..4]),
        hq: mean(&resp.items[4..]),
    }
}

/// Validating entry point for loosely typed input.
pub fn scale_scores_checked(items: [i32; 8], pqw: i32) -> Result<ScaleScores, StatsError> {
    Ok(scale_scores(&UeqResponse::new(items, pqw)?))
}

// ---------------------------------------------------------------------------
// paired t-test

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTResult {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t: f64,
    pub df: u32,
    pub p_two_tailed: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` denominator.
fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedTResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().all(|v| *v == d[0]) {
        return Err(StatsError::ZeroVariance);
    }
    let mean_diff = mean(&d);
    let sd_diff = sample_sd(&d);
    if sd_diff == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let t = mean_diff / (sd_diff / (n as f64).sqrt());
    let df = (n - 1) as u32;
    Ok(PairedTResult {
        n,
        mean_diff,
        sd_diff,
        t,
        df,
        p_two_tailed: t_tail_two_sided(t, df),
    })
}

// ---------------------------------------------------------------------------
// reliability

/// Cronbach's alpha over a respondents x items matrix.
pub fn cronbach_alpha(matrix: &[Vec<f64>]) -> Result<f64, StatsError> {
    let k = matrix.first().map_or(0, Vec::len);
    if k < 2 {
        return Err(StatsError::TooFewItems(k));
    }
    if matrix.len() < 2 {
        return Err(StatsError::TooFewRespondents(matrix.len()));
    }
    if let Some((row, r)) = matrix.iter().enumerate().find(|(_, r)| r.len() != k) {
        return Err(StatsError::RaggedMatrix { row, expected: k, got: r.len() });
    }
    let item_var_sum: f64 = (0..k)
        .map(|j| sample_variance(&matrix.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .sum();
    let totals: Vec<f64> = matrix.iter().map(|r| r.iter().sum()).collect();
    let total_var = sample_variance(&totals);
    if total_var == 0.0 {
        return Err(StatsError::ZeroTotalVariance);
    }
    let k = k as f64;
    Ok(k / (k - 1.0) * (1.0 - item_var_sum / total_var))
}

// ---------------------------------------------------------------------------
// table consistency

/// SD of differences implied by a reported mean difference and t.
pub fn implied_sd(mean_diff: f64, t: f64, n: usize) -> Result<f64, StatsError> {
    if t == 0.0 {
        return Err(StatsError::DivisionByZero);
    }
    Ok(mean_diff * (n as f64).sqrt() / t)
}

/// One row of a paired-comparison table as printed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub indicator: String,
    pub mean_a: f64,
    pub sd_a: f64,
    pub mean_b: f64,
    pub sd_b: f64,
    pub mean_diff: f64,
    pub t: f64,
    /// As printed, to three decimals.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowCheck {
    pub indicator: String,
    pub recomputed_p: f64,
    pub p_ok: bool,
    pub mean_gap: f64,
    pub mean_ok: bool,
    pub implied_sd: Option<f64>,
    pub sd_ok: bool,
}

impl RowCheck {
    pub fn passed(&self) -> bool {
        self.p_ok && self.mean_ok && self.sd_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Report {
    pub n: usize,
    pub rows: Vec<RowCheck>,
}

impl Table2Report {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(RowCheck::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RowCheck> {
        self.rows.iter().filter(|r| !r.passed())
    }
}

/// Whether an exact p-value is consistent with a three-decimal printed one.
pub fn p_matches_reported(p: f64, reported: f64) -> bool {
    let reported_milli = (reported * 1000.0).round() as i64;
    if reported_milli == 0 {
        return p < ZERO_P_BOUND;
    }
    (p * 1000.0).round() as i64 == reported_milli
}

/// Checks each row for internal consistency: p against `(t, n - 1)`, the
/// mean difference against the two means, and a positive implied SD.
pub fn verify_table2(rows: &[SummaryRow], n: usize) -> Table2Report {
    assert!(n >= 2, "need at least two participants");
    let df = (n - 1) as u32;
    let rows = rows
        .iter()
        .map(|row| {
            let recomputed_p = t_tail_two_sided(row.t, df);
            let mean_gap = (row.mean_a - row.mean_b - row.mean_diff).abs();
            let implied = implied_sd(row.mean_diff, row.t, n).ok();
            RowCheck {
                indicator: row.indicator.clone(),
                recomputed_p,
                p_ok: p_matches_reported(recomputed_p, row.p),
                mean_gap,
                mean_ok: mean_gap <= MEAN_TOLERANCE + 1e-9,
                implied_sd: implied,
                sd_ok: implied.is_some_and(|s| s > 0.0),
            }
        })
        .collect();
    Table2Report { n, rows }
}

fn row(indicator: &str, a: (f64, f64), b: (f64, f64), mean_diff: f64, t: f64, p: f64) -> SummaryRow {
    SummaryRow {
        indicator: indicator.to_string(),
        mean_a: a.0,
        sd_a: a.1,
        mean_b: b.0,
        sd_b: b.1,
        mean_diff,
        t,
        p,
    }
}

/// The published comparison table (a = SoundScape, b = CapCut, n = 14).
pub fn builtin_table2() -> Vec<SummaryRow> {
    vec![
        row("PQ1", (2.14, 0.66), (0.71, 0.99), 1.43, 4.372, 0.001),
        row("PQ2", (1.21, 0.97), (-0.50, 1.61), 1.71, 3.067, 0.009),
        row("PQ3", (2.00, 0.78), (-0.07, 1.07), 2.07, 5.597, 0.000),
        row("PQ4", (1.21, 0.97), (-0.07, 1.33), 1.29, 2.432, 0.030),
        row("PQ", (1.64, 0.73), (0.02, 1.04), 1.63, 4.064, 0.001),
        row("HQ1", (2.00, 0.78), (0.00, 1.11), 2.00, 5.292, 0.000),
        row("HQ2", (2.21, 0.80), (-0.07, 0.92), 2.29, 5.95, 0.000),
        row("HQ3", (2.29, 0.73), (-1.07, 1.44), 3.36, 7.632, 0.000),
        row("HQ4", (2.29, 0.73), (-0.79, 1.37), 3.07, 7.704, 0.000),
        row("HQ", (2.20, 0.68), (-0.48, 1.14), 2.68, 7.184, 0.000),
        row("PQW", (2.21, 1.05), (-0.07, 1.44), 2.29, 4.824, 0.000),
    ]
}

// ---------------------------------------------------------------------------
// raw data

/// Both conditions' answers from one participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParticipantPair {
    pub a: UeqResponse,
    pub b: UeqResponse,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    a_item1: i32,
    a_item2: i32,
    a_item3: i32,
    a_item4: i32,
    a_item5: i32,
    a_item6: i32,
    a_item7: i32,
    a_item8: i32,
    a_pqw: i32,
    b_item1: i32,
    b_item2: i32,
    b_item3: i32,
    b_item4: i32,
    b_item5: i32,
    b_item6: i32,
    b_item7: i32,
    b_item8: i32,
    b_pqw: i32,
}

/// Reads one row per participant with columns `a_item1..a_item8, a_pqw,
/// b_item1..b_item8, b_pqw` (scores already on `-3..=3`). Extra columns such
/// as a participant id are ignored.
pub fn read_participants_csv(reader: impl Read) -> Result<Vec<ParticipantPair>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<CsvRow>()
        .enumerate()
        .map(|(i, rec)| {
            let r = rec.map_err(|e| StatsError::Csv(format!("row {}: {e}", i + 1)))?;
            Ok(ParticipantPair {
                a: UeqResponse::new(
                    [r.a_item1, r.a_item2, r.a_item3, r.a_item4, r.a_item5, r.a_item6, r.a_item7, r.a_item8],
                    r.a_pqw,
                )?,
                b: UeqResponse::new(
                    [r.b_item1, r.b_item2, r.b_item3, r.b_item4, r.b_item5, r.b_item6, r.b_item7, r.b_item8],
                    r.b_pqw,
                )?,
            })
        })
        .collect()
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

/// Per-indicator paired comparison in table order (PQ1-4, PQ, HQ1-4, HQ,
/// PQW), rounded the way such tables are printed.
pub fn summarize(pairs: &[ParticipantPair]) -> Result<Vec<SummaryRow>, (String, StatsError)> {
    let item = |r: &UeqResponse, i: usize| f64::from(r.items[i]);
    let mut series: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    let collect = |f: &dyn Fn(&UeqResponse) -> f64| -> (Vec<f64>, Vec<f64>) {
        (pairs.iter().map(|p| f(&p.a)).collect(), pairs.iter().map(|p| f(&p.b)).collect())
    };
    for i in 0..4 {
        let (a, b) = collect(&|r| item(r, i));
        series.push((format!("PQ{}", i + 1), a, b));
    }
    let (a, b) = collect(&|r| scale_scores(r).pq);
    series.push(("PQ".into(), a, b));
    for i in 4..8 {
        let (a, b) = collect(&|r| item(r, i));
        series.push((format!("HQ{}", i - 3), a, b));
    }
    let (a, b) = collect(&|r| scale_scores(r).hq);
    series.push(("HQ".into(), a, b));
    let (a, b) = collect(&|r| f64::from(r.pqw));
    series.push(("PQW".into(), a, b));

    series
        .into_iter()
        .map(|(name, a, b)| {
            let test = paired_t(&a, &b).map_err(|e| (name.clone(), e))?;
            Ok(SummaryRow {
                indicator: name,
                mean_a: round_to(mean(&a), 2),
                sd_a: round_to(sample_sd(&a), 2),
                mean_b: round_to(mean(&b), 2),
                sd_b: round_to(sample_sd(&b), 2),
                mean_diff: round_to(test.mean_diff, 2),
                t: round_to(test.t, 3),
                p: round_to(test.p_two_tailed, 3),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reliability {
    pub pq_alpha_a: f64,
    pub hq_alpha_a: f64,
    pub pq_alpha_b: f64,
    pub hq_alpha_b: f64,
}

/// Cronbach's alpha of the pragmatic and hedonic item groups per condition.
pub fn reliability(pairs: &[ParticipantPair]) -> Result<Reliability, StatsError> {
    let matrix = |pick: &dyn Fn(&ParticipantPair) -> &UeqResponse, range: std::ops::Range<usize>| {
        pairs
            .iter()
            .map(|p| pick(p).items[range.clone()].iter().map(|&v| f64::from(v)).collect())
            .collect::<Vec<Vec<f64>>>()
    };
    Ok(Reliability {
        pq_alpha_a: cronbach_alpha(&matrix(&|p| &p.a, 0..4))?,
        hq_alpha_a: cronbach_alpha(&matrix(&|p| &p.a, 4..8))?,
        pq_alpha_b: cronbach_alpha(&matrix(&|p| &p.b, 0..4))?,
        hq_alpha_b: cronbach_alpha(&matrix(&|p| &p.b, 4..8))?,
    })
}
