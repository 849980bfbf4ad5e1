use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided;
use super::{Method, StatsError, TestResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: f64,
}

impl SummaryStat {
    pub fn from_samples(x: &[f64]) -> Result<Self, StatsError> {
        if x.len() < 2 {
            return Err(StatsError::InsufficientSamples {
                what: "a group",
                need: 2,
                got: x.len(),
            });
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        Ok(Self {
            n: x.len(),
            mean,
            sd: (ss / (n - 1.0)).sqrt(),
        })
    }

    fn var(&self) -> f64 {
        self.sd * self.sd
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TTestVariant {
    #[default]
    Pooled,
    Welch,
}

/// Two-sample t-test from summary statistics. The statistic is signed as
/// group 1 minus group 0.
pub fn t_test_summary(g0: &SummaryStat, g1: &SummaryStat, variant: TTestVariant) -> Result<TestResult, StatsError> {
    for g in [g0, g1] {
        if g.n < 2 {
            return Err(StatsError::InsufficientSamples {
                what: "a group",
                need: 2,
                got: g.n,
            });
        }
        if !(g.sd >= 0.0) || !g.mean.is_finite() || !g.sd.is_finite() {
            return Err(StatsError::Domain(format!("mean {} sd {}", g.mean, g.sd)));
        }
    }
    let (n0, n1) = (g0.n as f64, g1.n as f64);
    let diff = g1.mean - g0.mean;
    let (se, df, method) = match variant {
        TTestVariant::Pooled => {
            let df = n0 + n1 - 2.0;
            let sp2 = ((n0 - 1.0) * g0.var() + (n1 - 1.0) * g1.var()) / df;
            ((sp2 * (1.0 / n0 + 1.0 / n1)).sqrt(), df, Method::PooledT)
        }
        TTestVariant::Welch => {
            let (v0, v1) = (g0.var() / n0, g1.var() / n1);
            let se = (v0 + v1).sqrt();
            let df = if v0 + v1 > 0.0 {
                (v0 + v1).powi(2) / (v0 * v0 / (n0 - 1.0) + v1 * v1 / (n1 - 1.0))
            } else {
                n0 + n1 - 2.0
            };
            (se, df, Method::WelchT)
        }
    };
    if se == 0.0 {
        let degenerate = diff != 0.0;
        return Ok(TestResult {
            statistic: if degenerate { diff.signum() * f64::INFINITY } else { 0.0 },
            df: Some(df),
            p: if degenerate { 0.0 } else { 1.0 },
            method,
            degenerate,
        });
    }
    let t = diff / se;
    Ok(TestResult {
        statistic: t,
        df: Some(df),
        p: student_t_two_sided(t, df)?,
        method,
        degenerate: false,
    })
}

pub fn t_test_raw(x0: &[f64], x1: &[f64], variant: TTestVariant) -> Result<TestResult, StatsError> {
    t_test_summary(
        &SummaryStat::from_samples(x0)?,
        &SummaryStat::from_samples(x1)?,
        variant,
    )
}
