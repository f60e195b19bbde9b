//! Seeded synthetic corpus standing in for real video features.
//!
//! Each activity type owns a fixed Gaussian prototype vector. A feature row
//! is the sum of the prototypes of every event covering it plus Gaussian
//! noise. Captions come from an activity template; with probability
//! `dependency_strength` a non-first event's caption also ends with
//! `after <gerund>` where the gerund is fixed by the previous event's
//! activity, so neighbouring events carry information about the caption.

use serde::{Deserialize, Serialize};

use super::features::{FeatureSequence, DEFAULT_DELTA_FRAMES, DEFAULT_FPS};
use super::record::{Event, VideoRecord};
use crate::error::{Error, Result};
use crate::numerics::{SeededRng, Tensor};

const VERBS: [&str; 16] = [
    "throws", "kicks", "rides", "paints", "climbs", "cooks", "washes", "lifts", "plays", "cuts",
    "pushes", "pulls", "opens", "carries", "cleans", "folds",
];
const NOUNS: [&str; 16] = [
    "ball", "bike", "fence", "wall", "pasta", "car", "weights", "drum", "paper", "cart", "rope",
    "door", "box", "floor", "shirt", "kite",
];
const GERUNDS: [&str; 16] = [
    "stretching", "warming", "resting", "waving", "singing", "laughing", "clapping", "jogging",
    "talking", "walking", "bowing", "sitting", "kneeling", "turning", "smiling", "shouting",
];
const SUBJECTS: [&str; 4] = ["man", "woman", "person", "child"];

/// Dependent-phrase marker preceding the gerund.
pub const DEPENDENCY_MARKER: &str = "after";

fn word(list: &[&str], k: usize) -> String {
    if k < list.len() {
        list[k].to_string()
    } else {
        format!("{}{}", list[k % list.len()], k / list.len())
    }
}

pub fn activity_verb(activity: usize) -> String {
    word(&VERBS, activity)
}

pub fn activity_noun(activity: usize) -> String {
    word(&NOUNS, activity)
}

/// Token appended after [`DEPENDENCY_MARKER`] when the previous event had `activity`.
pub fn dependent_token(activity: usize) -> String {
    word(&GERUNDS, activity)
}

fn default_feature_dim() -> usize {
    32
}
fn default_delta() -> u32 {
    DEFAULT_DELTA_FRAMES
}
fn default_fps() -> f64 {
    DEFAULT_FPS
}
fn default_event_length() -> [f64; 2] {
    [2.0, 12.0]
}
fn default_gap() -> [f64; 2] {
    [0.0, 2.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_videos: usize,
    pub n_activity_types: usize,
    /// Inclusive range of events per video.
    pub events_per_video: [usize; 2],
    /// Inclusive range of video durations in seconds.
    pub duration_s: [f64; 2],
    #[serde(default = "default_event_length")]
    pub event_length_s: [f64; 2],
    /// Range of the gap between consecutive non-overlapping events.
    #[serde(default = "default_gap")]
    pub gap_s: [f64; 2],
    pub overlap_probability: f64,
    pub dependency_strength: f64,
    pub feature_noise_sigma: f64,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_delta")]
    pub delta_frames: u32,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n_videos: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_videos,
            n_activity_types: 8,
            events_per_video: [3, 5],
            duration_s: [20.0, 60.0],
            event_length_s: default_event_length(),
            gap_s: default_gap(),
            overlap_probability: 0.3,
            dependency_strength: 0.9,
            feature_noise_sigma: 0.5,
            feature_dim: default_feature_dim(),
            delta_frames: DEFAULT_DELTA_FRAMES,
            fps: DEFAULT_FPS,
            seed,
        }
    }

    fn window(&self) -> f64 {
        self.delta_frames as f64 / self.fps
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_videos == 0 || self.n_activity_types == 0 || self.feature_dim == 0 || self.delta_frames == 0 {
            return bad("counts must be positive".into());
        }
        if self.events_per_video[0] == 0 || self.events_per_video[0] > self.events_per_video[1] {
            return bad(format!("invalid events_per_video {:?}", self.events_per_video));
        }
        for (name, r) in [("duration_s", self.duration_s), ("event_length_s", self.event_length_s), ("gap_s", self.gap_s)] {
            if !(r[0] >= 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                return bad(format!("invalid {name} {r:?}"));
            }
        }
        if self.duration_s[0] <= 0.0 || self.event_length_s[0] <= 0.0 {
            return bad("durations and event lengths must be positive".into());
        }
        for (name, p) in [
            ("overlap_probability", self.overlap_probability),
            ("dependency_strength", self.dependency_strength),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        if !(self.feature_noise_sigma >= 0.0 && self.fps > 0.0) {
            return bad("noise sigma must be non-negative and fps positive".into());
        }
        Ok(())
    }
}

/// Generated records, their features, and the latent activity of every event.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub records: Vec<VideoRecord>,
    pub features: Vec<FeatureSequence>,
    pub activities: Vec<Vec<usize>>,
}

struct Range {
    lo: usize,
    hi: usize,
}

fn rows_range(r: [f64; 2], window: f64, min: usize) -> Range {
    let lo = ((r[0] / window).ceil() as usize).max(min);
    let hi = ((r[1] / window).floor() as usize).max(lo);
    Range { lo, hi }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let window = spec.window();
    let dur = rows_range(spec.duration_s, window, 1);
    let len = rows_range(spec.event_length_s, window, 1);
    let gap = rows_range(spec.gap_s, window, 0);
    if spec.events_per_video[0] * len.lo > dur.hi {
        return Err(Error::Generation(format!(
            "{} events of at least {} rows cannot fit in {} rows",
            spec.events_per_video[0], len.lo, dur.hi
        )));
    }

    let mut proto_rng = SeededRng::derive(spec.seed, 1);
    let prototypes: Vec<Vec<f64>> = (0..spec.n_activity_types)
        .map(|_| (0..spec.feature_dim).map(|_| proto_rng.gaussian()).collect())
        .collect();

    let mut rng = SeededRng::derive(spec.seed, 2);
    let mut corpus = SyntheticCorpus {
        records: Vec::with_capacity(spec.n_videos),
        features: Vec::with_capacity(spec.n_videos),
        activities: Vec::with_capacity(spec.n_videos),
    };
    let width = spec.n_videos.to_string().len().max(4);
    for v in 0..spec.n_videos {
        let id = format!("v{v:0width$}");
        let layout = sample_layout(spec, &dur, &len, &gap, &mut rng)
            .ok_or_else(|| Error::Generation(format!("could not place events for video {id}")))?;
        let n_rows = layout.rows;

        let mut events = Vec::with_capacity(layout.spans.len());
        for (k, &(s, e)) in layout.spans.iter().enumerate() {
            let a = layout.activities[k];
            let mut words = vec![
                "a".to_string(),
                SUBJECTS[rng.int_inclusive(0, SUBJECTS.len() - 1)].to_string(),
                activity_verb(a),
                "the".to_string(),
                activity_noun(a),
            ];
            if k > 0 && rng.bernoulli(spec.dependency_strength) {
                words.push(DEPENDENCY_MARKER.to_string());
                words.push(dependent_token(layout.activities[k - 1]));
            }
            events.push(Event {
                t_start: s as f64 * window,
                t_end: e as f64 * window,
                sentence: words,
            });
        }

        let d = spec.feature_dim;
        let mut values = vec![0.0; n_rows * d];
        for x in values.iter_mut() {
            *x = spec.feature_noise_sigma * rng.gaussian();
        }
        for (k, &(s, e)) in layout.spans.iter().enumerate() {
            let proto = &prototypes[layout.activities[k]];
            for r in s..e {
                for (x, p) in values[r * d..(r + 1) * d].iter_mut().zip(proto) {
                    *x += p;
                }
            }
        }
        // stored features are f32, so keep in-memory values f32-exact
        for x in values.iter_mut() {
            *x = *x as f32 as f64;
        }

        let record = VideoRecord {
            id: id.clone(),
            duration_s: n_rows as f64 * window,
            events,
        };
        record.validate()?;
        corpus.features.push(FeatureSequence::new(
            id,
            spec.delta_frames,
            spec.fps,
            Tensor::matrix(n_rows, d, values)?,
        )?);
        corpus.records.push(record);
        corpus.activities.push(layout.activities);
    }
    Ok(corpus)
}

struct Layout {
    rows: usize,
    spans: Vec<(usize, usize)>,
    activities: Vec<usize>,
}

fn sample_layout(spec: &SyntheticSpec, dur: &Range, len: &Range, gap: &Range, rng: &mut SeededRng) -> Option<Layout> {
    for _ in 0..100 {
        let n_events = rng.int_inclusive(spec.events_per_video[0], spec.events_per_video[1]);
        let target_rows = rng.int_inclusive(dur.lo, dur.hi);
        let mut spans: Vec<(usize, usize)> = Vec::with_capacity(n_events);
        let mut activities = Vec::with_capacity(n_events);
        for _ in 0..n_events {
            let length = rng.int_inclusive(len.lo, len.hi);
            let start = match spans.last() {
                None => rng.int_inclusive(gap.lo, gap.hi),
                Some(&(ps, pe)) => {
                    if rng.bernoulli(spec.overlap_probability) {
                        let lo = ps + usize::min(1, pe - ps - 1);
                        rng.int_inclusive(lo, pe - 1)
                    } else {
                        pe + rng.int_inclusive(gap.lo, gap.hi)
                    }
                }
            };
            spans.push((start, start + length));
            activities.push(rng.int_inclusive(0, spec.n_activity_types - 1));
        }
        let end = spans.iter().map(|s| s.1).max().unwrap_or(0);
        if end <= dur.hi {
            return Some(Layout {
                rows: target_rows.max(end),
                spans,
                activities,
            });
        }
    }
    None
}

/// Fraction of consecutive event pairs whose intervals overlap.
pub fn overlap_fraction(records: &[VideoRecord]) -> f64 {
    let (mut pairs, mut overlapping) = (0usize, 0usize);
    for r in records {
        for w in r.events.windows(2) {
            pairs += 1;
            if w[1].t_start < w[0].t_end {
                overlapping += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        overlapping as f64 / pairs as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn spec(n: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec::new(n, seed)
    }

    #[test]
    fn counting() {
        let mut s = spec(10, 1);
        s.events_per_video = [3, 3];
        let c = generate_synthetic(&s).unwrap();
        assert_eq!(c.records.iter().map(|r| r.events.len()).sum::<usize>(), 30);
        assert_eq!(c.features.len(), 10);
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&spec(12, 5)).unwrap();
        let b = generate_synthetic(&spec(12, 5)).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.features.iter().zip(&b.features) {
            assert_eq!(x.to_bytes(), y.to_bytes());
        }
        assert_ne!(generate_synthetic(&spec(12, 6)).unwrap().records, a.records);
    }

    #[test]
    fn dependent_token_is_function_of_previous_activity() {
        let mut s = spec(40, 3);
        s.dependency_strength = 1.0;
        let c = generate_synthetic(&s).unwrap();
        // scan: previous event's verb must determine the dependent token
        let mut seen: HashMap<String, String> = HashMap::new();
        for r in &c.records {
            assert!(!r.events[0].sentence.contains(&DEPENDENCY_MARKER.to_string()));
            for w in r.events.windows(2) {
                let prev_verb = w[0].sentence[2].clone();
                let s = &w[1].sentence;
                let pos = s.iter().position(|t| t == DEPENDENCY_MARKER).expect("marker present");
                let dep = s[pos + 1].clone();
                let entry = seen.entry(prev_verb).or_insert_with(|| dep.clone());
                assert_eq!(*entry, dep);
            }
        }
        assert!(seen.len() > 1);
    }

    #[test]
    fn events_respect_invariants_and_features_cover_duration() {
        let c = generate_synthetic(&spec(30, 8)).unwrap();
        for (r, f) in c.records.iter().zip(&c.features) {
            r.validate().unwrap();
            assert_eq!(f.video_id, r.id);
            assert!((f.duration() - r.duration_s).abs() < 1e-12);
            assert!(r.events.windows(2).all(|w| w[0].t_start <= w[1].t_start));
        }
    }

    #[test]
    fn overlap_fraction_tracks_probability() {
        for &p in &[0.0, 0.3, 0.7] {
            let mut s = spec(120, 17);
            s.overlap_probability = p;
            let c = generate_synthetic(&s).unwrap();
            let pairs: usize = c.records.iter().map(|r| r.events.len() - 1).sum();
            assert!(pairs >= 200);
            let f = overlap_fraction(&c.records);
            assert!((f - p).abs() <= 0.1, "p={p} measured {f}");
        }
    }

    #[test]
    fn infeasible_spec() {
        let mut s = spec(2, 0);
        s.duration_s = [5.0, 5.0];
        s.event_length_s = [4.0, 4.0];
        s.events_per_video = [3, 3];
        assert!(matches!(generate_synthetic(&s), Err(Error::Generation(_))));
    }

    #[test]
    fn invalid_probability() {
        let mut s = spec(2, 0);
        s.overlap_probability = 1.5;
        assert!(matches!(generate_synthetic(&s), Err(Error::Config(_))));
    }
}
