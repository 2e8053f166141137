//! Pose-estimate CSV: one row per estimate, with the rotation and translation
//! packed as space-separated floats inside two comma-separated columns.

use super::{pose_from_row_major, pose_to_row_major, BopError};
use crate::raster::Pose;
use std::path::Path;

/// Exact header line of a results CSV.
pub const RESULTS_HEADER: &str = "scene_id,im_id,obj_id,score,R,t,time";

/// One pose estimate row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub scene_id: u64,
    pub im_id: u64,
    pub obj_id: u32,
    /// Estimator confidence; higher wins ground-truth instances first.
    pub score: f64,
    pub pose: Pose,
    /// Reported wall time, seconds (negative means unreported).
    pub time: f64,
}

fn parse_number<T: std::str::FromStr>(
    field: &str,
    value: &str,
    line: usize,
) -> Result<T, BopError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| BopError::BadCsvValue {
        line,
        reason: format!("{field}: {e} (got {value:?})"),
    })
}

fn parse_float_list(field: &str, value: &str, expected: usize, line: usize) -> Result<Vec<f64>, BopError> {
    let values: Vec<f64> = value
        .split_whitespace()
        .map(|v| parse_number::<f64>(field, v, line))
        .collect::<Result<_, _>>()?;
    if values.len() != expected {
        return Err(BopError::BadCsvValue {
            line,
            reason: format!("{field} has {} numbers, expected {expected}", values.len()),
        });
    }
    Ok(values)
}

/// Reads a results CSV. Line numbers in errors are 1-based and include the
/// header; blank lines are ignored. The trailing `time` column may be omitted
/// (a 16-value row: four scalars, nine rotation entries, three translation
/// entries), in which case the time defaults to -1 (unreported).
pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>, BopError> {
    let path = path.as_ref();
    let text = super::read_text(path)?;
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((_, line)) => break line.trim_end_matches('\r').to_string(),
            None => {
                return Err(BopError::BadCsvHeader {
                    found: String::new(),
                    expected: RESULTS_HEADER.into(),
                })
            }
        }
    };
    if header != RESULTS_HEADER {
        return Err(BopError::BadCsvHeader {
            found: header,
            expected: RESULTS_HEADER.into(),
        });
    }

    let mut records = Vec::new();
    for (index, raw_line) in lines {
        let line_no = index + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 && fields.len() != 6 {
            return Err(BopError::WrongColumnCount {
                line: line_no,
                expected: 7,
                found: fields.len(),
            });
        }
        let scene_id = parse_number("scene_id", fields[0], line_no)?;
        let im_id = parse_number("im_id", fields[1], line_no)?;
        let obj_id = parse_number("obj_id", fields[2], line_no)?;
        let score: f64 = parse_number("score", fields[3], line_no)?;
        if !score.is_finite() {
            return Err(BopError::BadCsvValue {
                line: line_no,
                reason: format!("score must be finite, got {score}"),
            });
        }
        let r = parse_float_list("R", fields[4], 9, line_no)?;
        let t = parse_float_list("t", fields[5], 3, line_no)?;
        let time: f64 = match fields.get(6) {
            Some(value) => parse_number("time", value, line_no)?,
            None => -1.0,
        };
        if !time.is_finite() {
            return Err(BopError::BadCsvValue {
                line: line_no,
                reason: format!("time must be finite, got {time}"),
            });
        }
        let pose = pose_from_row_major(&r, &t)
            .map_err(|reason| BopError::BadCsvValue { line: line_no, reason })?;
        records.push(ResultRecord {
            scene_id,
            im_id,
            obj_id,
            score,
            pose,
            time,
        });
    }
    Ok(records)
}

/// Writes a results CSV with shortest-round-trip float formatting, so a
/// read/write cycle is lossless.
pub fn write_results_csv(
    path: impl AsRef<Path>,
    records: &[ResultRecord],
) -> Result<(), BopError> {
    let mut text = String::with_capacity(64 * (records.len() + 1));
    text.push_str(RESULTS_HEADER);
    for record in records {
        let (r, t) = pose_to_row_major(&record.pose);
        let join = |values: &[f64]| {
            values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        text.push('\n');
        text.push_str(&format!(
            "{},{},{},{},{},{},{}",
            record.scene_id,
            record.im_id,
            record.obj_id,
            record.score,
            join(&r),
            join(&t),
            record.time
        ));
    }
    super::write_text(path.as_ref(), &text)
}
