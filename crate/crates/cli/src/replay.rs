use std::io::BufRead;

use fleet_core::bridge::{Frame, Sequencer};
use fleet_core::sim::LogRecord;

use crate::hub::stream_bodies;
use crate::CliError;

pub fn read_log<R: BufRead>(input: R) -> Result<Vec<LogRecord>, CliError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CliError::Log { line: i + 1, reason: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// The frames a single client would have received for this log, numbered
/// from 1 as on a fresh connection.
pub fn replay_frames(records: &[LogRecord]) -> Vec<Frame> {
    let mut seq = Sequencer::new();
    stream_bodies(records).into_iter().map(|b| seq.stamp(b)).collect()
}
