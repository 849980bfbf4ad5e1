//! Regional airway volumetry, body-surface-area normalization and cohort tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::OpenOptions;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, LabelMap, Mask};
use crate::region::{RegionCode, UNASSIGNED};

#[derive(Debug, Error)]
pub enum QuantError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("label {code} is not a region code")]
    UnknownLabel { code: u16 },
    #[error("lobar map contains non-lobe code {0}")]
    NotLobe(u16),
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("duplicate subject id '{0}'")]
    DuplicateId(String),
    #[error("unknown group label '{0}' (expected SLE-ILD or SLE-non-ILD)")]
    UnknownGroup(String),
    #[error("unknown sex '{0}'")]
    UnknownSex(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("cohort csv line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Voxelwise AND; the airway outside the lung (the hilum) is dropped.
pub fn restrict_to_lung(airway: &Mask, lung: &Mask) -> Result<Mask, QuantError> {
    Ok(airway.and(lung)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LobarMode {
    /// Counted on a lobar label map.
    Direct,
    /// Sum of the member segments.
    SegmentSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionalVolumes {
    /// mm³ for all 23 codes.
    pub volumes: BTreeMap<RegionCode, f64>,
    pub lobar_mode: LobarMode,
    /// Airway volume carrying label 0, excluded from every region.
    pub unassigned_mm3: f64,
}

impl RegionalVolumes {
    pub fn get(&self, code: RegionCode) -> f64 {
        self.volumes.get(&code).copied().unwrap_or(0.0)
    }

    pub fn segment_total(&self) -> f64 {
        RegionCode::SEGMENTS.iter().map(|&c| self.get(c)).sum()
    }
}

fn tally(airway: &Mask, labels: &LabelMap) -> Result<[usize; 24], QuantError> {
    airway.geom().ensure_matches(labels.geom())?;
    let mut counts = [0usize; 24];
    for (&a, &l) in airway.data().iter().zip(labels.data()) {
        if l != UNASSIGNED && RegionCode::from_code(l).is_none() {
            return Err(QuantError::UnknownLabel { code: l });
        }
        if a {
            counts[l as usize] += 1;
        }
    }
    Ok(counts)
}

/// Airway volume per region. Lobes come from `lobes` when given, otherwise
/// from their member segments plus any voxels labelled with the lobe itself.
pub fn regional_volumes(
    airway: &Mask,
    regions: &LabelMap,
    lobes: Option<&LabelMap>,
) -> Result<RegionalVolumes, QuantError> {
    let vv = airway.geom().voxel_volume();
    let seg = tally(airway, regions)?;
    let mut volumes = BTreeMap::new();
    for c in RegionCode::SEGMENTS {
        volumes.insert(c, seg[c.code() as usize] as f64 * vv);
    }
    let lobar_mode = match lobes {
        Some(map) => {
            let lob = tally(airway, map)?;
            if let Some(bad) =
                (1..24u16).find(|&c| lob[c as usize] > 0 && !RegionCode::from_code(c).is_some_and(|r| r.is_lobe()))
            {
                return Err(QuantError::NotLobe(bad));
            }
            for c in RegionCode::LOBES {
                volumes.insert(c, lob[c.code() as usize] as f64 * vv);
            }
            LobarMode::Direct
        }
        None => {
            for c in RegionCode::LOBES {
                let n = seg[c.code() as usize] + c.members().iter().map(|m| seg[m.code() as usize]).sum::<usize>();
                volumes.insert(c, n as f64 * vv);
            }
            LobarMode::SegmentSum
        }
    };
    Ok(RegionalVolumes {
        volumes,
        lobar_mode,
        unassigned_mm3: seg[0] as f64 * vv,
    })
}

/// DuBois: `W^0.425 · H^0.725 · 0.007184`, weight in kg and height in cm.
pub fn bsa_dubois(weight_kg: f64, height_cm: f64) -> Result<f64, QuantError> {
    if !(weight_kg > 0.0) {
        return Err(QuantError::NonPositive {
            what: "weight",
            value: weight_kg,
        });
    }
    if !(height_cm > 0.0) {
        return Err(QuantError::NonPositive {
            what: "height",
            value: height_cm,
        });
    }
    Ok(weight_kg.powf(0.425) * height_cm.powf(0.725) * 0.007184)
}

pub fn normalize_by_bsa(volume_mm3: f64, bsa_m2: f64) -> Result<f64, QuantError> {
    if !(bsa_m2 > 0.0) {
        return Err(QuantError::NonPositive {
            what: "BSA",
            value: bsa_m2,
        });
    }
    Ok(volume_mm3 / bsa_m2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "SLE-non-ILD")]
    NonIld,
    #[serde(rename = "SLE-ILD")]
    Ild,
}

impl Group {
    pub fn index(self) -> usize {
        match self {
            Group::NonIld => 0,
            Group::Ild => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::NonIld => "SLE-non-ILD",
            Group::Ild => "SLE-ILD",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Group {
    type Err = QuantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sle-non-ild" | "non-ild" | "0" => Ok(Group::NonIld),
            "sle-ild" | "ild" | "1" => Ok(Group::Ild),
            _ => Err(QuantError::UnknownGroup(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
}

impl FromStr for Sex {
    type Err = QuantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Ok(Sex::Male),
            "f" | "female" => Ok(Sex::Female),
            _ => Err(QuantError::UnknownSex(s.to_string())),
        }
    }
}

impl Sex {
    pub fn letter(self) -> &'static str {
        match self {
            Sex::Male => "M",
            Sex::Female => "F",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub group: Group,
    pub sex: Option<Sex>,
    pub age: Option<f64>,
    pub height_cm: Option<f64>,
    pub weight_kg: Option<f64>,
    pub volumes: BTreeMap<RegionCode, f64>,
}

impl SubjectRecord {
    pub fn bsa(&self) -> Option<f64> {
        match (self.weight_kg, self.height_cm) {
            (Some(w), Some(h)) => bsa_dubois(w, h).ok(),
            _ => None,
        }
    }

    /// Volumes divided by BSA, or `None` without height and weight.
    pub fn normalized(&self) -> Option<BTreeMap<RegionCode, f64>> {
        let bsa = self.bsa()?;
        Some(self.volumes.iter().map(|(&k, &v)| (k, v / bsa)).collect())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortTable {
    pub records: Vec<SubjectRecord>,
    /// Subjects per group, indexed by [`Group::index`].
    pub group_sizes: [usize; 2],
    /// `(subject id, field)` pairs that are absent.
    pub missing: Vec<(String, String)>,
}

impl CohortTable {
    pub fn group(&self, g: Group) -> impl Iterator<Item = &SubjectRecord> {
        self.records.iter().filter(move |r| r.group == g)
    }
}

pub fn build_cohort(records: Vec<SubjectRecord>) -> Result<CohortTable, QuantError> {
    let mut ids = BTreeSet::new();
    let mut group_sizes = [0; 2];
    let mut missing = vec![];
    for r in &records {
        if !ids.insert(r.id.clone()) {
            return Err(QuantError::DuplicateId(r.id.clone()));
        }
        group_sizes[r.group.index()] += 1;
        let mut absent = |f: &str| missing.push((r.id.clone(), f.to_string()));
        if r.sex.is_none() {
            absent("sex");
        }
        if r.age.is_none() {
            absent("age");
        }
        if r.height_cm.is_none() {
            absent("height_cm");
        }
        if r.weight_kg.is_none() {
            absent("weight_kg");
        }
        for c in RegionCode::all() {
            if !r.volumes.contains_key(&c) {
                absent(&volume_column(c));
            }
        }
        if r.bsa().is_none() {
            warn!("subject {} has no BSA and is left out of normalized analyses", r.id);
        }
    }
    Ok(CohortTable {
        records,
        group_sizes,
        missing,
    })
}

pub fn volume_column(c: RegionCode) -> String {
    format!("vol_{}_mm3", c.name())
}

pub fn subject_header() -> Vec<String> {
    let mut h: Vec<String> = ["id", "group", "sex", "age", "height_cm", "weight_kg"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(RegionCode::all().map(volume_column));
    h.push("bsa_m2".into());
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn subject_row(r: &SubjectRecord) -> Vec<String> {
    let mut row = vec![
        r.id.clone(),
        r.group.label().to_string(),
        r.sex.map(|s| s.letter().to_string()).unwrap_or_default(),
        opt(r.age),
        opt(r.height_cm),
        opt(r.weight_kg),
    ];
    row.extend(RegionCode::all().map(|c| opt(r.volumes.get(&c).copied())));
    row.push(opt(r.bsa()));
    row
}

pub fn write_subjects_csv(records: &[SubjectRecord], path: impl AsRef<Path>) -> Result<(), QuantError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(subject_header())?;
    for r in records {
        w.write_record(subject_row(r))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Append one subject, writing the header first when the file is new or empty.
pub fn append_subject_csv(record: &SubjectRecord, path: impl AsRef<Path>) -> Result<(), QuantError> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| QuantError::Io {
            path: path.display().to_string(),
            source,
        })?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(subject_header())?;
    }
    w.write_record(subject_row(record))?;
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_subjects_csv(path: impl AsRef<Path>) -> Result<Vec<SubjectRecord>, QuantError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| {
        col(name).ok_or_else(|| QuantError::Parse {
            line: 1,
            msg: format!("missing column {name}"),
        })
    };
    let (ci, cg) = (need("id")?, need("group")?);
    let (cs, ca, ch, cw) = (col("sex"), col("age"), col("height_cm"), col("weight_kg"));
    let vol_cols: Vec<(RegionCode, usize)> = RegionCode::all()
        .filter_map(|c| col(&volume_column(c)).map(|i| (c, i)))
        .collect();
    let mut out = vec![];
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let field = |i: Option<usize>| i.and_then(|i| rec.get(i)).map(str::trim).filter(|s| !s.is_empty());
        let num = |i: Option<usize>| -> Result<Option<f64>, QuantError> {
            field(i)
                .map(|s| {
                    s.parse::<f64>().map_err(|_| QuantError::Parse {
                        line,
                        msg: format!("not a number: {s:?}"),
                    })
                })
                .transpose()
        };
        let mut volumes = BTreeMap::new();
        for &(c, i) in &vol_cols {
            if let Some(v) = num(Some(i))? {
                if v < 0.0 {
                    return Err(QuantError::Parse {
                        line,
                        msg: format!("negative volume for {c}"),
                    });
                }
                volumes.insert(c, v);
            }
        }
        out.push(SubjectRecord {
            id: field(Some(ci))
                .ok_or(QuantError::Parse {
                    line,
                    msg: "empty id".into(),
                })?
                .to_string(),
            group: field(Some(cg)).unwrap_or("").parse()?,
            sex: field(cs).map(str::parse).transpose()?,
            age: num(ca)?,
            height_cm: num(ch)?,
            weight_kg: num(cw)?,
            volumes,
        });
    }
    Ok(out)
}
