//! Person-level feature rows for the household posterior network.

use alloc::vec::Vec;

use super::study::{DetectionStatus, StudyDataset};
use crate::error::{Error, Result};
use crate::npe::set::{EncodedSet, PAD};

pub const MAX_MEMBERS: usize = 8;
pub const PERSON_DIM: usize = 15;

/// Decoded feature row. Dates are shifted; `None` is encoded as `-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonFeatures {
    pub age_group: u8,
    pub status: DetectionStatus,
    pub protected: bool,
    pub household_size: usize,
    pub variant: u8,
    pub scheme: u8,
    pub onset_or_first_positive: Option<i64>,
    pub last_negative: Option<i64>,
    pub first_positive: Option<i64>,
    pub last_positive: Option<i64>,
    pub follow_up_end: i64,
}

pub fn person_features(ds: &StudyDataset) -> Vec<Vec<PersonFeatures>> {
    ds.households
        .iter()
        .map(|h| {
            h.members
                .iter()
                .map(|m| PersonFeatures {
                    age_group: m.age_group.code(),
                    status: m.status,
                    protected: m.protected,
                    household_size: h.size(),
                    variant: ds.variant.code(),
                    scheme: ds.scheme.code(),
                    onset_or_first_positive: m.onset_or_first_positive(),
                    last_negative: m.last_negative(),
                    first_positive: m.first_positive(),
                    last_positive: m.last_positive(),
                    follow_up_end: h.follow_up_end(),
                })
                .collect()
        })
        .collect()
}

impl PersonFeatures {
    pub fn to_row(&self) -> [f64; PERSON_DIM] {
        let date = |d: Option<i64>| d.map_or(PAD, |d| d as f64);
        let mut r = [0.0; PERSON_DIM];
        r[0] = self.age_group as f64;
        r[1 + self.status.code() as usize] = 1.0;
        r[4] = self.protected as u8 as f64;
        r[5] = self.household_size as f64;
        r[6] = self.variant as f64;
        r[7 + self.scheme as usize] = 1.0;
        r[10] = date(self.onset_or_first_positive);
        r[11] = date(self.last_negative);
        r[12] = date(self.first_positive);
        r[13] = date(self.last_positive);
        r[14] = self.follow_up_end as f64;
        r
    }

    pub fn from_row(r: &[f64]) -> Result<Self> {
        let bad = || Error::Encoding(alloc::format!("malformed person row {r:?}"));
        if r.len() != PERSON_DIM {
            return Err(bad());
        }
        let one_hot = |xs: &[f64]| -> Option<usize> {
            let hot: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] == 1.0).collect();
            (hot.len() == 1 && xs.iter().all(|&x| x == 0.0 || x == 1.0)).then(|| hot[0])
        };
        let date = |x: f64| if x == PAD { None } else { Some(x as i64) };
        let status = one_hot(&r[1..4]).and_then(|c| DetectionStatus::from_code(c as u8)).ok_or_else(bad)?;
        let scheme = one_hot(&r[7..10]).ok_or_else(bad)? as u8;
        Ok(Self {
            age_group: r[0] as u8,
            status,
            protected: r[4] == 1.0,
            household_size: r[5] as usize,
            variant: r[6] as u8,
            scheme,
            onset_or_first_positive: date(r[10]),
            last_negative: date(r[11]),
            first_positive: date(r[12]),
            last_positive: date(r[13]),
            follow_up_end: r[14] as i64,
        })
    }
}

/// Households x [`MAX_MEMBERS`] x [`PERSON_DIM`], empty slots filled with
/// `-1`.
pub fn encode_dataset(ds: &StudyDataset) -> Result<Vec<f64>> {
    let feats = person_features(ds);
    let mut out = Vec::with_capacity(feats.len() * MAX_MEMBERS * PERSON_DIM);
    for h in &feats {
        if h.len() > MAX_MEMBERS {
            return Err(Error::Encoding(alloc::format!(
                "household of {} members exceeds the maximum of {MAX_MEMBERS}",
                h.len()
            )));
        }
        for p in h {
            out.extend_from_slice(&p.to_row());
        }
        out.resize(out.len() + (MAX_MEMBERS - h.len()) * PERSON_DIM, PAD);
    }
    Ok(out)
}

pub fn decode_dataset(array: &[f64]) -> Result<Vec<Vec<PersonFeatures>>> {
    let block = MAX_MEMBERS * PERSON_DIM;
    if array.len() % block != 0 {
        return Err(Error::Encoding("array length is not a whole number of households".into()));
    }
    array
        .chunks(block)
        .map(|h| {
            h.chunks(PERSON_DIM)
                .filter(|r| !EncodedSet::is_padding(r))
                .map(PersonFeatures::from_row)
                .collect()
        })
        .collect()
}

/// Grouped network input: persons within households.
pub fn encode_set(ds: &StudyDataset, condition: Vec<f64>) -> Result<EncodedSet> {
    let rows = encode_dataset(ds)?;
    let offsets = (0..=ds.households.len()).map(|h| h * MAX_MEMBERS).collect();
    EncodedSet::grouped(PERSON_DIM, rows, offsets, condition)
}
