//! Scoring of assessment attempts.
//!
//! Numbers are taken at their shortest decimal spelling (`0.1` means one
//! tenth), percentages are computed exactly and rounded half-up to two
//! decimals before the pass threshold is applied.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::Assessment;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssessmentError {
    #[error("score {score} is outside 0..={max_score}")]
    ScoreOutOfRange { score: f64, max_score: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAttempt {
    pub assessment_id: String,
    pub raw_score: f64,
    /// Rounded half-up to two decimals.
    pub score_pct: f64,
    pub passed: bool,
}

pub fn score(assessment: &Assessment, raw_score: f64) -> Result<ScoredAttempt, AssessmentError> {
    let out_of_range = || AssessmentError::ScoreOutOfRange {
        score: raw_score,
        max_score: assessment.max_score,
    };
    let raw = decimal(raw_score).ok_or_else(out_of_range)?;
    let max = decimal(assessment.max_score)
        .filter(|m| m.is_positive())
        .ok_or_else(out_of_range)?;
    if raw.is_negative() || raw > max {
        return Err(out_of_range());
    }
    let hundredths = round_half_up(raw * BigRational::from_integer(10_000.into()) / max);
    let pct = BigRational::new(hundredths.clone(), 100.into());
    let threshold = decimal(assessment.pass_threshold_pct).unwrap_or_else(|| big(50));
    Ok(ScoredAttempt {
        assessment_id: assessment.id.clone(),
        raw_score,
        score_pct: hundredths.to_f64().unwrap_or(f64::NAN) / 100.0,
        passed: pct >= threshold,
    })
}

/// Exact value of `x` as written in its shortest round-trip decimal form.
pub(crate) fn decimal(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    // f64's Display never uses exponent notation.
    let text = x.to_string();
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    let numer = BigInt::parse_bytes(format!("{whole}{frac}").as_bytes(), 10)?;
    let denom = num_traits::pow(BigInt::from(10), frac.len());
    let value = BigRational::new(numer, denom);
    Some(if negative { -value } else { value })
}

pub(crate) fn big(n: i64) -> BigRational {
    BigRational::from_integer(n.into())
}

fn round_half_up(x: BigRational) -> BigInt {
    (x + BigRational::new(BigInt::one(), 2.into()))
        .floor()
        .to_integer()
}
