use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One annotated event: a time interval and its sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub t_start: f64,
    pub t_end: f64,
    pub sentence: Vec<String>,
}

impl Event {
    pub fn new(t_start: f64, t_end: f64, sentence: &str) -> Self {
        Event {
            t_start,
            t_end,
            sentence: tokenize(sentence),
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }

    pub fn length(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub duration_s: f64,
    pub events: Vec<Event>,
}

impl VideoRecord {
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: String| Error::Validation {
            video_id: self.id.clone(),
            detail,
        };
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(fail(format!("duration {} must be positive", self.duration_s)));
        }
        if self.events.is_empty() {
            return Err(fail("no events".into()));
        }
        for (k, e) in self.events.iter().enumerate() {
            if !(e.t_start.is_finite() && e.t_end.is_finite()) {
                return Err(fail(format!("event {k} has non-finite times")));
            }
            if e.t_start < 0.0 {
                return Err(fail(format!("event {k} starts before 0 ({})", e.t_start)));
            }
            if e.t_end <= e.t_start {
                return Err(fail(format!(
                    "event {k} has t_end {} <= t_start {}",
                    e.t_end, e.t_start
                )));
            }
            if e.t_end > self.duration_s {
                return Err(fail(format!(
                    "event {k} ends at {} beyond duration {}",
                    e.t_end, self.duration_s
                )));
            }
            if e.sentence.is_empty() {
                return Err(fail(format!("event {k} has an empty sentence")));
            }
        }
        Ok(())
    }
}

/// Whitespace tokenization.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence.split_whitespace().map(str::to_string).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVideo {
    duration: f64,
    timestamps: Vec<[f64; 2]>,
    sentences: Vec<String>,
}

pub fn parse_dataset(text: &str) -> Result<Vec<VideoRecord>> {
    let raw: IndexMap<String, RawVideo> =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let mut records = Vec::with_capacity(raw.len());
    for (id, video) in raw {
        if video.timestamps.len() != video.sentences.len() {
            return Err(Error::Schema(format!(
                "video {id}: {} timestamps but {} sentences",
                video.timestamps.len(),
                video.sentences.len()
            )));
        }
        let events = video
            .timestamps
            .iter()
            .zip(&video.sentences)
            .map(|(ts, s)| Event::new(ts[0], ts[1], s))
            .collect();
        let record = VideoRecord {
            id,
            duration_s: video.duration,
            events,
        };
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<VideoRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn dataset_to_json(records: &[VideoRecord]) -> Result<String> {
    let mut out = IndexMap::new();
    for r in records {
        if out.contains_key(&r.id) {
            return Err(Error::Schema(format!("duplicate video id {}", r.id)));
        }
        out.insert(
            r.id.clone(),
            RawVideo {
                duration: r.duration_s,
                timestamps: r.events.iter().map(|e| [e.t_start, e.t_end]).collect(),
                sentences: r.events.iter().map(|e| e.sentence.join(" ")).collect(),
            },
        );
    }
    Ok(serde_json::to_string_pretty(&out)?)
}

pub fn store_dataset(records: &[VideoRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, dataset_to_json(records)?).map_err(|e| Error::io(path, e))
}
