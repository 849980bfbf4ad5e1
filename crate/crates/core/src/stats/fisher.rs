use serde::Serialize;

use super::special::ln_choose;
use super::StatsError;

/// Tables within this relative margin of the observed probability count as
/// "as extreme" in the two-sided sum.
const REL_TIE: f64 = 1.0 + 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FisherResult {
    /// Sample odds ratio a·d / (b·c).
    pub odds_ratio: f64,
    /// P(X ≤ a) under the hypergeometric null.
    pub p_lower: f64,
    /// P(X ≥ a).
    pub p_upper: f64,
    /// Sum over tables no more probable than the observed one.
    pub p_two_sided: f64,
}

/// Fisher's exact test on `[[a, b], [c, d]]`, conditioning on the margins.
/// X counts the top-left cell.
pub fn fisher_exact(table: [[u64; 2]; 2]) -> Result<FisherResult, StatsError> {
    let [[a, b], [c, d]] = table;
    let n = a + b + c + d;
    if n == 0 {
        return Err(StatsError::AllZeroTable);
    }
    let row0 = a + b;
    let col0 = a + c;
    let lo = row0.saturating_sub(n - col0);
    let hi = row0.min(col0);
    let ln_denominator = ln_choose(n, row0);
    let pmf: Vec<f64> = (lo..=hi)
        .map(|k| (ln_choose(col0, k) + ln_choose(n - col0, row0 - k) - ln_denominator).exp())
        .collect();
    let obs = (a - lo) as usize;
    let p_obs = pmf[obs];
    let sum = |it: &mut dyn Iterator<Item = &f64>| it.sum::<f64>().min(1.0);
    let p_lower = sum(&mut pmf[..=obs].iter());
    let p_upper = sum(&mut pmf[obs..].iter());
    let p_two_sided = sum(&mut pmf.iter().filter(|&&p| p <= p_obs * REL_TIE));
    let (ad, bc) = ((a * d) as f64, (b * c) as f64);
    let odds_ratio = if bc > 0.0 {
        ad / bc
    } else if ad > 0.0 {
        f64::INFINITY
    } else {
        f64::NAN
    };
    Ok(FisherResult {
        odds_ratio,
        p_lower,
        p_upper,
        p_two_sided,
    })
}
