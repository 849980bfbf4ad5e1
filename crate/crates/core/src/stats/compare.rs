use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fisher::{fisher_exact, FisherResult};
use super::shapiro::shapiro_wilk;
use super::ttest::{t_test_summary, SummaryStat, TTestVariant};
use super::{Method, StatsError};
use crate::quant::{CohortTable, Group, Sex, SubjectRecord};
use crate::region::RegionCode;

/// Two-tailed significance level.
pub const SIGNIFICANCE: f64 = 0.05;
/// p-values below this print as "< 0.001".
pub const P_FLOOR: f64 = 0.001;

pub fn format_p(p: f64) -> String {
    if p < P_FLOOR {
        "< 0.001".into()
    } else {
        format!("{p:.3}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub region: String,
    pub group0: SummaryStat,
    pub group1: SummaryStat,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub region: String,
    pub group0: SummaryStat,
    pub group1: SummaryStat,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub method: Method,
    pub degenerate: bool,
}

impl ComparisonRow {
    pub fn significant(&self) -> bool {
        self.p < SIGNIFICANCE
    }

    pub fn p_formatted(&self) -> String {
        format_p(self.p)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareOptions {
    pub variant: TTestVariant,
    /// Divide volumes by body surface area first.
    pub normalized: bool,
}

/// t-test per row, in input order.
pub fn compare_summaries(rows: &[RegionSummary], variant: TTestVariant) -> Result<Vec<ComparisonRow>, StatsError> {
    rows.par_iter()
        .map(|r| {
            let res = t_test_summary(&r.group0, &r.group1, variant)?;
            Ok(ComparisonRow {
                region: r.region.clone(),
                group0: r.group0,
                group1: r.group1,
                t: res.statistic,
                df: res.df.unwrap_or(f64::NAN),
                p: res.p,
                method: res.method,
                degenerate: res.degenerate,
            })
        })
        .collect()
}

fn region_values(cohort: &CohortTable, g: Group, region: RegionCode, normalized: bool) -> Vec<f64> {
    cohort
        .group(g)
        .filter_map(|s| {
            let v = *s.volumes.get(&region)?;
            if normalized {
                Some(v / s.bsa()?)
            } else {
                Some(v)
            }
        })
        .collect()
}

fn check_groups(cohort: &CohortTable) -> Result<(), StatsError> {
    for g in [Group::NonIld, Group::Ild] {
        if cohort.group_sizes[g.index()] == 0 {
            return Err(StatsError::SingleGroup(g.label()));
        }
    }
    Ok(())
}

/// Per-region group comparison of (optionally BSA-normalized) volumes.
pub fn group_compare(
    cohort: &CohortTable,
    regions: &[RegionCode],
    opts: &CompareOptions,
) -> Result<Vec<ComparisonRow>, StatsError> {
    check_groups(cohort)?;
    let summaries = regions
        .iter()
        .map(|&r| {
            let x0 = region_values(cohort, Group::NonIld, r, opts.normalized);
            let x1 = region_values(cohort, Group::Ild, r, opts.normalized);
            if x0.is_empty() && x1.is_empty() {
                return Err(StatsError::UnknownRegion(r.name().into()));
            }
            Ok(RegionSummary {
                region: r.name().into(),
                group0: SummaryStat::from_samples(&x0)?,
                group1: SummaryStat::from_samples(&x1)?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    compare_summaries(&summaries, opts.variant)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalCounts {
    pub variable: String,
    pub n0: u64,
    pub count0: u64,
    pub n1: u64,
    pub count1: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CategoricalRow {
    pub counts: CategoricalCounts,
    pub fisher: FisherResult,
}

/// Fisher's exact test on `[[count0, n0 - count0], [count1, n1 - count1]]`.
pub fn compare_categorical(rows: &[CategoricalCounts]) -> Result<Vec<CategoricalRow>, StatsError> {
    rows.iter()
        .map(|c| {
            if c.count0 > c.n0 || c.count1 > c.n1 {
                return Err(StatsError::Domain(format!("{}: count exceeds group size", c.variable)));
            }
            let fisher = fisher_exact([[c.count0, c.n0 - c.count0], [c.count1, c.n1 - c.count1]])?;
            Ok(CategoricalRow {
                counts: c.clone(),
                fisher,
            })
        })
        .collect()
}

/// Age by t-test and sex (male count) by Fisher's exact test.
pub fn demographic_rows(
    cohort: &CohortTable,
    variant: TTestVariant,
) -> Result<(Vec<ComparisonRow>, Vec<CategoricalRow>), StatsError> {
    check_groups(cohort)?;
    let ages = |g| {
        cohort
            .group(g)
            .filter_map(|s: &SubjectRecord| s.age)
            .collect::<Vec<_>>()
    };
    let (a0, a1) = (ages(Group::NonIld), ages(Group::Ild));
    let mut continuous = vec![];
    if a0.len() >= 2 && a1.len() >= 2 {
        continuous = compare_summaries(
            &[RegionSummary {
                region: "age".into(),
                group0: SummaryStat::from_samples(&a0)?,
                group1: SummaryStat::from_samples(&a1)?,
            }],
            variant,
        )?;
    }
    let sexes = |g| {
        let known: Vec<Sex> = cohort.group(g).filter_map(|s: &SubjectRecord| s.sex).collect();
        let male = known.iter().filter(|&&s| s == Sex::Male).count() as u64;
        (known.len() as u64, male)
    };
    let ((n0, m0), (n1, m1)) = (sexes(Group::NonIld), sexes(Group::Ild));
    let categorical = if n0 + n1 > 0 {
        compare_categorical(&[CategoricalCounts {
            variable: "sex_male".into(),
            n0,
            count0: m0,
            n1,
            count1: m1,
        }])?
    } else {
        vec![]
    };
    Ok((continuous, categorical))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalityRow {
    pub region: String,
    pub group: Group,
    pub n: usize,
    pub w: Option<f64>,
    pub p: Option<f64>,
    pub note: String,
}

/// Shapiro-Wilk per region and group. Annotation only: failures and
/// untestable groups are recorded, never fatal.
pub fn normality_table(cohort: &CohortTable, regions: &[RegionCode], normalized: bool) -> Vec<NormalityRow> {
    let mut out = vec![];
    for &r in regions {
        for g in [Group::NonIld, Group::Ild] {
            let x = region_values(cohort, g, r, normalized);
            let (w, p, note) = match shapiro_wilk(&x) {
                Ok(res) if res.p < SIGNIFICANCE => (Some(res.statistic), Some(res.p), "non-normal".to_string()),
                Ok(res) => (Some(res.statistic), Some(res.p), String::new()),
                Err(e) => (None, None, e.to_string()),
            };
            out.push(NormalityRow {
                region: r.name().into(),
                group: g,
                n: x.len(),
                w,
                p,
                note,
            });
        }
    }
    out
}

#[derive(Deserialize)]
struct SummaryCsvRow {
    region: String,
    n0: usize,
    mean0: f64,
    sd0: f64,
    n1: usize,
    mean1: f64,
    sd1: f64,
}

/// Summary-statistics table with columns region, n0, mean0, sd0, n1, mean1, sd1.
pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<RegionSummary>, StatsError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = vec![];
    for (i, row) in rd.deserialize::<SummaryCsvRow>().enumerate() {
        let r = row.map_err(|e| StatsError::Parse {
            line: i + 2,
            msg: e.to_string(),
        })?;
        out.push(RegionSummary {
            region: r.region,
            group0: SummaryStat {
                n: r.n0,
                mean: r.mean0,
                sd: r.sd0,
            },
            group1: SummaryStat {
                n: r.n1,
                mean: r.mean1,
                sd: r.sd1,
            },
        });
    }
    Ok(out)
}

/// Count table with columns variable, n0, count0, n1, count1.
pub fn read_categorical_csv(path: impl AsRef<Path>) -> Result<Vec<CategoricalCounts>, StatsError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    rd.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| StatsError::Parse {
                line: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

fn flag(b: bool) -> &'static str {
    if b {
        "*"
    } else {
        ""
    }
}

pub fn write_report_csv(rows: &[ComparisonRow], path: impl AsRef<Path>) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "region",
        "n0",
        "mean0",
        "sd0",
        "n1",
        "mean1",
        "sd1",
        "t",
        "df",
        "p",
        "p_formatted",
        "significant",
    ])?;
    for r in rows {
        w.write_record([
            r.region.clone(),
            r.group0.n.to_string(),
            r.group0.mean.to_string(),
            r.group0.sd.to_string(),
            r.group1.n.to_string(),
            r.group1.mean.to_string(),
            r.group1.sd.to_string(),
            r.t.to_string(),
            r.df.to_string(),
            r.p.to_string(),
            r.p_formatted(),
            flag(r.significant()).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Region name and signed t (group 1 minus group 0) for colour-mapped figures.
pub fn write_t_values_csv(rows: &[ComparisonRow], path: impl AsRef<Path>) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["region_code", "t_value"])?;
    for r in rows {
        w.write_record([r.region.clone(), r.t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Publication layout: "mean±sd" cells and a starred p column.
pub fn write_table_layout_csv(rows: &[ComparisonRow], path: impl AsRef<Path>) -> Result<(), StatsError> {
    let cell = |s: &SummaryStat| format!("{:.2}±{:.2}", s.mean, s.sd);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["region", "mean_sd_group0", "mean_sd_group1", "p_value", "method"])?;
    for r in rows {
        w.write_record([
            r.region.clone(),
            cell(&r.group0),
            cell(&r.group1),
            format!("{}{}", r.p_formatted(), flag(r.significant())),
            r.method.label().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_categorical_csv(rows: &[CategoricalRow], path: impl AsRef<Path>) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "variable",
        "n0",
        "count0",
        "n1",
        "count1",
        "odds_ratio",
        "p_lower",
        "p_upper",
        "p_two_sided",
        "p_two_sided_formatted",
    ])?;
    for r in rows {
        let c = &r.counts;
        w.write_record([
            c.variable.clone(),
            c.n0.to_string(),
            c.count0.to_string(),
            c.n1.to_string(),
            c.count1.to_string(),
            r.fisher.odds_ratio.to_string(),
            r.fisher.p_lower.to_string(),
            r.fisher.p_upper.to_string(),
            r.fisher.p_two_sided.to_string(),
            format_p(r.fisher.p_two_sided),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_normality_csv(rows: &[NormalityRow], path: impl AsRef<Path>) -> Result<(), StatsError> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["region", "group", "n", "w", "p", "note"])?;
    for r in rows {
        w.write_record([
            r.region.clone(),
            r.group.label().to_string(),
            r.n.to_string(),
            opt(r.w),
            opt(r.p),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
