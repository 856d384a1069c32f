//! Line-delimited session logs.
//!
//! ```text
//! # sharing-effects session-log v1
//! # manifest: {"tool":"sharing-effects",...}
//! trajectory_id,position,variant,reward
//! 0,0,1,1
//! 0,1,0,0
//! 1,0,2,0
//! ```
//!
//! Lines starting with `#` and blank lines are ignored, the header row is
//! optional, and every other line is one session with four unsigned
//! integer fields. The data section (header and rows) is a pure function
//! of the dataset.

use std::io::{BufRead, Write};

use super::manifest::MANIFEST_PREFIX;
use super::{FormatError, RunManifest, FORMAT_VERSION};
use crate::model::{check_trajectory, Dataset, DatasetError, ProductionPolicy, SessionRecord, VariantId};

pub const HEADER: &str = "trajectory_id,position,variant,reward";

pub fn write_session_log<W: Write>(
    mut out: W,
    dataset: &Dataset,
    manifest: Option<&RunManifest>,
) -> std::io::Result<()> {
    writeln!(out, "# sharing-effects session-log v{FORMAT_VERSION}")?;
    if let Some(manifest) = manifest {
        out.write_all(manifest.comment_line().as_bytes())?;
    }
    writeln!(out, "{HEADER}")?;
    for s in dataset.sessions() {
        writeln!(
            out,
            "{},{},{},{}",
            s.trajectory_id, s.position, s.variant.0, s.reward
        )?;
    }
    out.flush()
}

fn parse_record(line: &str, line_no: usize) -> Result<SessionRecord, FormatError> {
    let mut fields = line.split(',').map(str::trim);
    let mut next = |name: &str| {
        fields
            .next()
            .filter(|f| !f.is_empty())
            .ok_or_else(|| FormatError::parse(line_no, format!("missing field '{name}'")))
    };
    let int = |name: &str, text: &str| {
        text.parse::<u64>()
            .map_err(|_| FormatError::parse(line_no, format!("field '{name}' is not a non-negative integer: '{text}'")))
    };
    let trajectory_id = int("trajectory_id", next("trajectory_id")?)?;
    let position = int("position", next("position")?)?;
    let variant = int("variant", next("variant")?)?;
    let reward = int("reward", next("reward")?)?;
    if fields.next().is_some() {
        return Err(FormatError::parse(line_no, "expected 4 fields"));
    }
    let narrow = |name: &str, v: u64| {
        u32::try_from(v).map_err(|_| FormatError::parse(line_no, format!("field '{name}' is out of range: {v}")))
    };
    if reward > 1 {
        return Err(FormatError::parse(line_no, format!("reward must be 0 or 1, got {reward}")));
    }
    Ok(SessionRecord {
        trajectory_id,
        position: narrow("position", position)?,
        variant: VariantId(narrow("variant", variant)?),
        reward: reward as u8,
    })
}

/// Parses a session log into a dataset logged under `policy`. Errors name
/// the 1-based line of the offending record.
pub fn read_session_log<R: BufRead>(input: R, policy: ProductionPolicy) -> Result<Dataset, FormatError> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    let mut seen_data = false;
    for (k, line) in input.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !seen_data {
            seen_data = true;
            if trimmed == HEADER {
                continue;
            }
        }
        let record = parse_record(trimmed, line_no)?;
        if record.variant.index() >= policy.num_variants() {
            return Err(FormatError::Dataset {
                line: line_no,
                source: DatasetError::UnknownVariant {
                    index: records.len(),
                    variant: record.variant.0,
                    num_variants: policy.num_variants(),
                },
            });
        }
        records.push(record);
        lines.push(line_no);
    }

    // Same grouping rule as `Dataset::from_records`, checked here so that
    // errors carry line numbers.
    let mut start = 0;
    let mut trajectory = 0;
    for k in 1..=records.len() {
        let boundary = k == records.len()
            || records[k].trajectory_id != records[k - 1].trajectory_id
            || records[k].position == 0;
        if boundary {
            if let Err(source) = check_trajectory(&records[start..k]) {
                let offset = match source {
                    crate::model::TrajectoryError::Empty => 0,
                    crate::model::TrajectoryError::MixedIds { index, .. }
                    | crate::model::TrajectoryError::BadPosition { index, .. }
                    | crate::model::TrajectoryError::BadReward { index, .. }
                    | crate::model::TrajectoryError::EarlyTermination { index }
                    | crate::model::TrajectoryError::OpenEnded { index } => index,
                };
                return Err(FormatError::Dataset {
                    line: lines[start + offset],
                    source: DatasetError::Trajectory { trajectory, source },
                });
            }
            start = k;
            trajectory += 1;
        }
    }
    Dataset::from_records(policy, records).map_err(|source| FormatError::Dataset { line: 0, source })
}

/// The manifest embedded in a log, if any.
pub fn read_session_log_manifest<R: BufRead>(input: R) -> Result<Option<RunManifest>, FormatError> {
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        if let Some(json) = line.strip_prefix(MANIFEST_PREFIX) {
            return RunManifest::from_json(json)
                .map(Some)
                .map_err(|e| FormatError::parse(k + 1, format!("bad manifest: {e}")));
        }
        if !line.starts_with('#') {
            break;
        }
    }
    Ok(None)
}

/// The part of a text output after its leading comment lines.
pub fn data_section(text: &str) -> &str {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if !line.starts_with('#') {
            break;
        }
        offset += line.len();
    }
    &text[offset..]
}
