//! Participant-level prior trial data.
//!
//! The expected file is comma-separated UTF-8 text with a header row followed
//! by one row per participant: subpopulation (`1` or `2`), treatment arm
//! (`1` treatment, `0` control) and binary outcome. Columns are identified by
//! position; header labels are ignored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PopulationParams;

/// Estimates are clipped into `[EPSILON, 1 - EPSILON]`.
pub const EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub subpopulation: u8,
    pub treated: bool,
    pub success: bool,
}

pub fn parse_dataset(raw: &[u8]) -> Result<Vec<ParticipantRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(raw);
    let mut records = Vec::new();
    for (index, row) in reader.records().enumerate() {
        // Line 1 is the header.
        let line = index + 2;
        let row = row.map_err(|e| Error::DatasetRow {
            row: line,
            reason: e.to_string(),
        })?;
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        if row.len() != 3 {
            return Err(Error::DatasetRow {
                row: line,
                reason: format!("expected 3 columns, found {}", row.len()),
            });
        }
        let field = |col: usize, allowed: &[&str], what: &str| -> Result<u8> {
            let v = &row[col];
            if allowed.contains(&v) {
                Ok(v.parse().expect("allowed values are digits"))
            } else {
                Err(Error::DatasetRow {
                    row: line,
                    reason: format!(
                        "column {} ({what}) must be one of {allowed:?}, found {v:?}",
                        col + 1
                    ),
                })
            }
        };
        records.push(ParticipantRecord {
            subpopulation: field(0, &["1", "2"], "subpopulation")?,
            treated: field(1, &["0", "1"], "treatment")? == 1,
            success: field(2, &["0", "1"], "outcome")? == 1,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(records)
}

/// Participants and successes in one subpopulation-by-arm stratum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumCount {
    pub participants: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    pub population: PopulationParams,
    /// Empirical subpopulation 2 treatment success probability.
    pub p2t: f64,
    pub participants: usize,
    pub subpop1_control: StratumCount,
    pub subpop1_treatment: StratumCount,
    pub subpop2_control: StratumCount,
    pub subpop2_treatment: StratumCount,
    pub warnings: Vec<String>,
}

pub fn estimate_population(records: &[ParticipantRecord]) -> Result<PopulationEstimate> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut strata = [[StratumCount::default(); 2]; 2];
    for r in records {
        let s = &mut strata[(r.subpopulation - 1) as usize][r.treated as usize];
        s.participants += 1;
        s.successes += r.success as usize;
    }
    let mut warnings = Vec::new();
    let mut rate = |sub: usize, arm: usize, name: &str| -> Result<f64> {
        let s = strata[sub][arm];
        if s.participants == 0 {
            return Err(Error::EmptyStratum(name.to_string()));
        }
        let raw = s.successes as f64 / s.participants as f64;
        Ok(clip(raw, name, &mut warnings))
    };
    let p1c = rate(0, 0, "p1c")?;
    let p1t = rate(0, 1, "p1t")?;
    let p2c = rate(1, 0, "p2c")?;
    let p2t = rate(1, 1, "p2t")?;
    let n1 = strata[0][0].participants + strata[0][1].participants;
    let pi1 = clip(n1 as f64 / records.len() as f64, "pi1", &mut warnings);
    Ok(PopulationEstimate {
        population: PopulationParams { pi1, p1c, p1t, p2c },
        p2t,
        participants: records.len(),
        subpop1_control: strata[0][0],
        subpop1_treatment: strata[0][1],
        subpop2_control: strata[1][0],
        subpop2_treatment: strata[1][1],
        warnings,
    })
}

fn clip(value: f64, name: &str, warnings: &mut Vec<String>) -> f64 {
    let clipped = value.clamp(EPSILON, 1.0 - EPSILON);
    if clipped != value {
        warnings.push(format!("{name} estimate {value} clipped to {clipped}"));
    }
    clipped
}
