//! Line-delimited dataset files, one request per line.
//!
//! Record fields: `user_id`, `history` (array of `{video_id, action_type,
//! timestamp}`), `targets` (array of `{video_id, request_time}`), `labels`
//! (array of 0/1). Event positions are ordinals derived from array order.
//! A converter accepts flat-triplet files and groups them into requests.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{group_by_request, GroupKey, Request, Triplet};
use crate::error::{Error, Result};
use crate::stca::{HistoryEvent, TargetItem};

#[derive(Serialize, Deserialize)]
struct EventRecord {
    video_id: u32,
    action_type: u32,
    timestamp: i64,
}

#[derive(Serialize, Deserialize)]
struct TargetRecord {
    video_id: u32,
    request_time: i64,
}

#[derive(Serialize, Deserialize)]
struct RequestRecord {
    user_id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    session_id: Option<u64>,
    history: Vec<EventRecord>,
    targets: Vec<TargetRecord>,
    labels: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct TripletRecord {
    user_id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    session_id: Option<u64>,
    history: Vec<EventRecord>,
    target: TargetRecord,
    label: u8,
}

fn events_from_records(records: Vec<EventRecord>) -> Vec<HistoryEvent> {
    records
        .into_iter()
        .enumerate()
        .map(|(i, e)| HistoryEvent {
            video_id: e.video_id,
            action_type: e.action_type,
            position: i as u32,
            timestamp: e.timestamp,
        })
        .collect()
}

fn records_from_events(events: &[HistoryEvent]) -> Vec<EventRecord> {
    events
        .iter()
        .map(|e| EventRecord {
            video_id: e.video_id,
            action_type: e.action_type,
            timestamp: e.timestamp,
        })
        .collect()
}

fn request_from_record(r: RequestRecord) -> Result<Request> {
    let mut req = Request::new(
        r.user_id,
        events_from_records(r.history),
        r.targets
            .into_iter()
            .map(|t| TargetItem {
                video_id: t.video_id,
                request_time: t.request_time,
            })
            .collect(),
        r.labels,
    )?;
    req.session_id = r.session_id;
    Ok(req)
}

pub fn write_requests(path: &Path, requests: &[Request]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for req in requests {
        let record = RequestRecord {
            user_id: req.user_id,
            session_id: req.session_id,
            history: records_from_events(&req.history),
            targets: req
                .targets
                .iter()
                .map(|t| TargetRecord {
                    video_id: t.video_id,
                    request_time: t.request_time,
                })
                .collect(),
            labels: req.labels.clone(),
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_requests(path: &Path) -> Result<Vec<Request>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RequestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        out.push(request_from_record(record)?);
    }
    Ok(out)
}

/// Read a flat-triplet file and group it into requests.
pub fn read_triplets_grouped(path: &Path, key: GroupKey) -> Result<Vec<Request>> {
    let r = BufReader::new(File::open(path)?);
    let mut triplets = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TripletRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        triplets.push(Triplet {
            user_id: record.user_id,
            session_id: record.session_id,
            history: events_from_records(record.history),
            target: TargetItem {
                video_id: record.target.video_id,
                request_time: record.target.request_time,
            },
            label: record.label,
        });
    }
    group_by_request(triplets, key)
}
