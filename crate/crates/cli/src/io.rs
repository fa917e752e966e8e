//! Delimited-text dataset formats, atomic writes, manifests.

use std::fs;
use std::path::{Path, PathBuf};

use biasaware_core::household::{AgeGroup, DetectionStatus, ObservedHousehold, ObservedPerson, Scheme, StudyDataset, Variant};
use biasaware_core::idm::simulator::IdmDataset;
use biasaware_core::idm::{IdmRecord, IdmSubject};
use biasaware_core::prevalence::{Cohort, CohortRecord, CovariateRecord};
use serde::{Deserialize, Serialize};

use crate::config::Application;
use crate::error::{CliError, Result};

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

/// Numeric table with a header row.
pub fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|x| x.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?);
    }
    Ok((header, rows))
}

fn read_rows<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<R>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub file: String,
    pub condition: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub application: Application,
    pub seed: u64,
    pub simulator_seed: u64,
    pub n_requested: usize,
    pub failures: usize,
    pub param_names: Vec<String>,
    pub condition_labels: Vec<String>,
    pub datasets: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.json";

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Err(CliError::Data(format!("dataset manifest {} not found", path.display())));
        }
        read_json(&path)
    }
}

#[derive(Serialize, Deserialize)]
struct CohortRow {
    sex: i32,
    age_group: i32,
    country: i32,
    hh_size: i32,
    y: i32,
    epoch: u32,
}

pub fn cohort_csv(c: &Cohort) -> Result<Vec<u8>> {
    csv_bytes(c.records.iter().map(|r| CohortRow {
        sex: r.covariates.sex(),
        age_group: r.covariates.age_group(),
        country: r.covariates.country_of_birth(),
        hh_size: r.covariates.household_size(),
        y: r.y,
        epoch: c.epoch,
    }))
}

pub fn read_cohort(path: &Path) -> Result<Cohort> {
    let rows: Vec<CohortRow> = read_rows(path)?;
    let epoch = rows.first().map_or(1, |r| r.epoch);
    if rows.iter().any(|r| r.epoch != epoch) {
        return Err(CliError::Data(format!("{}: rows from several epochs", path.display())));
    }
    Ok(Cohort {
        records: rows
            .iter()
            .map(|r| CohortRecord {
                covariates: CovariateRecord::new(r.sex, r.age_group, r.country, r.hh_size),
                y: r.y,
            })
            .collect(),
        epoch,
        sampling_weights: None,
    })
}

#[derive(Serialize, Deserialize)]
struct IdmRow {
    illness_time: f64,
    illness_ind: u8,
    death_time: f64,
    death_ind: u8,
    sex: u8,
    age: f64,
    epoch: u32,
}

pub fn idm_csv(ds: &IdmDataset) -> Result<Vec<u8>> {
    csv_bytes(ds.subjects.iter().zip(&ds.records).map(|(s, r)| IdmRow {
        illness_time: r.illness_time,
        illness_ind: r.illness_observed as u8,
        death_time: r.death_time,
        death_ind: r.death_observed as u8,
        sex: s.sex,
        age: s.age,
        epoch: ds.epoch,
    }))
}

/// Visit times are not part of the record file and come back as NaN.
pub fn read_idm(path: &Path) -> Result<IdmDataset> {
    let rows: Vec<IdmRow> = read_rows(path)?;
    let epoch = rows.first().map_or(1, |r| r.epoch);
    if rows.iter().any(|r| r.epoch != epoch) {
        return Err(CliError::Data(format!("{}: rows from several epochs", path.display())));
    }
    Ok(IdmDataset {
        epoch,
        subjects: rows.iter().map(|r| IdmSubject { sex: r.sex, age: r.age, epoch }).collect(),
        records: rows
            .iter()
            .map(|r| IdmRecord {
                illness_time: r.illness_time,
                illness_observed: r.illness_ind == 1,
                death_time: r.death_time,
                death_observed: r.death_ind == 1,
                visit1: f64::NAN,
                visit2: f64::NAN,
            })
            .collect(),
    })
}

#[derive(Serialize, Deserialize)]
struct PersonRow {
    household: usize,
    roster_index: usize,
    replicate: usize,
    inclusion_case: usize,
    inclusion_day: i64,
    follow_up: String,
    member: usize,
    age_years: f64,
    age_group: u8,
    protected: u8,
    status: u8,
    onset: i64,
    first_positive: i64,
    last_positive: i64,
    last_negative: i64,
    follow_up_end: i64,
    household_size: usize,
    variant: Variant,
    scheme: Scheme,
    /// `day:result` pairs separated by `;`.
    tests: String,
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn household_csv(ds: &StudyDataset) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (h, hh) in ds.households.iter().enumerate() {
        for (m, p) in hh.members.iter().enumerate() {
            rows.push(PersonRow {
                household: h,
                roster_index: hh.roster_index,
                replicate: hh.replicate,
                inclusion_case: hh.inclusion_case,
                inclusion_day: hh.inclusion_day,
                follow_up: join(hh.follow_up_days),
                member: m,
                age_years: p.age_years,
                age_group: p.age_group.code(),
                protected: p.protected as u8,
                status: p.status.code(),
                onset: p.onset.unwrap_or(-1),
                first_positive: p.first_positive().unwrap_or(-1),
                last_positive: p.last_positive().unwrap_or(-1),
                last_negative: p.last_negative().unwrap_or(-1),
                follow_up_end: hh.follow_up_end(),
                household_size: hh.size(),
                variant: ds.variant,
                scheme: ds.scheme,
                tests: join(p.tests.iter().map(|(d, r)| format!("{d}:{}", *r as u8))),
            });
        }
    }
    csv_bytes(rows)
}

fn parse_i64s(s: &str) -> Option<Vec<i64>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(';').map(|x| x.parse().ok()).collect()
}

pub fn read_household(path: &Path) -> Result<StudyDataset> {
    let bad = |what: &str| CliError::Data(format!("{}: {what}", path.display()));
    let rows: Vec<PersonRow> = read_rows(path)?;
    let (variant, scheme) = rows.first().map_or((Variant::Omicron, Scheme::Random), |r| (r.variant, r.scheme));
    let mut households: Vec<ObservedHousehold> = Vec::new();
    for r in &rows {
        if r.variant != variant || r.scheme != scheme {
            return Err(bad("rows disagree on variant or scheme"));
        }
        if r.household == households.len() {
            let f = parse_i64s(&r.follow_up).filter(|v| v.len() == 4).ok_or_else(|| bad("follow_up needs four days"))?;
            households.push(ObservedHousehold {
                roster_index: r.roster_index,
                replicate: r.replicate,
                members: Vec::new(),
                inclusion_case: r.inclusion_case,
                inclusion_day: r.inclusion_day,
                follow_up_days: [f[0], f[1], f[2], f[3]],
            });
        } else if r.household + 1 != households.len() {
            return Err(bad("household ids must be consecutive from 0"));
        }
        let mut tests = Vec::new();
        if !r.tests.is_empty() {
            for t in r.tests.split(';') {
                let (d, res) = t.split_once(':').ok_or_else(|| bad("test entries are day:result"))?;
                let d: i64 = d.parse().map_err(|_| bad("test day"))?;
                tests.push((d, res == "1"));
            }
        }
        let status = DetectionStatus::from_code(r.status).ok_or_else(|| bad("status code"))?;
        households.last_mut().expect("pushed above").members.push(ObservedPerson {
            age_years: r.age_years,
            age_group: AgeGroup::from_code(r.age_group).ok_or_else(|| bad("age group code"))?,
            protected: r.protected == 1,
            status,
            onset: (r.onset >= 0).then_some(r.onset),
            tests,
            true_infection: None,
            true_symptomatic: false,
        });
    }
    Ok(StudyDataset {
        variant,
        scheme,
        households,
    })
}
