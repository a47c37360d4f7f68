//! Trace parsing and fixation segmentation.
//!
//! The trace format is a UTF-8 CSV with header
//! `observer,image,t_ms,x_px,y_px,fixation`, where `fixation` is empty
//! (unlabelled), `0` (saccadic) or `1` (fixation). Screen dimensions come from
//! a `# screen <w> <h>` comment line or, failing that, from [`IngestConfig`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "observer,image,t_ms,x_px,y_px,fixation";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeSample {
    /// Milliseconds since trace start.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// `Some(true)` for fixation samples, `Some(false)` for saccadic ones.
    pub fixation: Option<bool>,
}

impl EyeSample {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self {
            t,
            x,
            y,
            fixation: None,
        }
    }

    pub fn labeled(t: f64, x: f64, y: f64, fixation: bool) -> Self {
        Self {
            t,
            x,
            y,
            fixation: Some(fixation),
        }
    }

    pub fn is_saccadic(&self) -> Option<bool> {
        self.fixation.map(|f| !f)
    }
}

/// Samples for one (observer, image) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeTrace {
    pub observer_id: String,
    pub image_id: String,
    pub screen_w: f64,
    pub screen_h: f64,
    pub samples: Vec<EyeSample>,
    /// Samples lying outside `[0, screen_w] x [0, screen_h]`.
    pub out_of_range: usize,
}

impl EyeTrace {
    pub fn new(
        observer_id: impl Into<String>,
        image_id: impl Into<String>,
        screen_w: f64,
        screen_h: f64,
        samples: Vec<EyeSample>,
    ) -> Self {
        let mut trace = Self {
            observer_id: observer_id.into(),
            image_id: image_id.into(),
            screen_w,
            screen_h,
            samples,
            out_of_range: 0,
        };
        trace.out_of_range = trace.count_out_of_range();
        trace
    }

    fn count_out_of_range(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.x < 0.0 || s.x > self.screen_w || s.y < 0.0 || s.y > self.screen_h)
            .count()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.fixation.is_some())
    }

    pub fn fixation_count(&self) -> usize {
        self.samples.iter().filter(|s| s.fixation == Some(true)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestConfig {
    pub screen_w: f64,
    pub screen_h: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            screen_w: 1280.0,
            screen_h: 1024.0,
        }
    }
}

impl IngestConfig {
    /// Reads a `key=value` sidecar with `screen_w` and `screen_h` entries.
    /// Missing keys keep their defaults.
    pub fn from_sidecar(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_sidecar(&text)
    }

    pub fn parse_sidecar(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            let parse = |v: &str| -> Result<f64> {
                v.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("bad number {v:?}: {e}"),
                })
            };
            match key.trim() {
                "screen_w" => config.screen_w = parse(value)?,
                "screen_h" => config.screen_h = parse(value)?,
                _ => {}
            }
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if !(self.screen_w > 0.0 && self.screen_h > 0.0 && self.screen_w.is_finite() && self.screen_h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "screen dimensions must be positive, got {}x{}",
                self.screen_w, self.screen_h
            )));
        }
        Ok(())
    }
}

pub fn parse_trace_file(path: impl AsRef<Path>, config: &IngestConfig) -> Result<Vec<EyeTrace>> {
    let text = std::fs::read_to_string(path)?;
    parse_traces(&text, config)
}

/// Parses trace CSV text into one trace per (observer, image) group, in order
/// of first appearance.
pub fn parse_traces(text: &str, config: &IngestConfig) -> Result<Vec<EyeTrace>> {
    let mut screen = *config;
    let mut groups: Vec<(String, String, Vec<EyeSample>)> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((w, h)) = parse_screen_comment(comment, line_no)? {
                screen = IngestConfig {
                    screen_w: w,
                    screen_h: h,
                };
                screen.validate()?;
            }
            continue;
        }
        if trimmed == CSV_HEADER {
            continue;
        }

        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 && fields.len() != 5 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let number = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = fields[i].trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad {name} value {:?}", fields[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("{name} is not finite"),
                });
            }
            Ok(v)
        };
        let observer = fields[0].trim();
        let image = fields[1].trim();
        if observer.is_empty() || image.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty observer or image id".into(),
            });
        }
        let t = number(2, "t_ms")?;
        if t < 0.0 {
            return Err(Error::Parse {
                line: line_no,
                message: "negative timestamp".into(),
            });
        }
        let x = number(3, "x_px")?;
        let y = number(4, "y_px")?;
        let fixation = match fields.get(5).map(|s| s.trim()) {
            None | Some("") => None,
            Some("0") => Some(false),
            Some("1") => Some(true),
            Some(other) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("fixation must be empty, 0 or 1, got {other:?}"),
                })
            }
        };

        let key = (observer.to_string(), image.to_string());
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push((observer.to_string(), image.to_string(), Vec::new()));
            groups.len() - 1
        });
        let samples = &mut groups[slot].2;
        if let Some(last) = samples.last() {
            if t <= last.t {
                return Err(Error::NonMonotonic {
                    observer: observer.to_string(),
                    image: image.to_string(),
                    line: line_no,
                });
            }
        }
        samples.push(EyeSample { t, x, y, fixation });
    }

    if groups.is_empty() {
        return Err(Error::NoTraces);
    }
    Ok(groups
        .into_iter()
        .map(|(obs, img, samples)| EyeTrace::new(obs, img, screen.screen_w, screen.screen_h, samples))
        .collect())
}

fn parse_screen_comment(comment: &str, line: usize) -> Result<Option<(f64, f64)>> {
    let mut parts = comment.split_whitespace();
    if parts.next() != Some("screen") {
        return Ok(None);
    }
    let dims: Vec<&str> = parts.collect();
    if dims.len() != 2 {
        return Err(Error::Parse {
            line,
            message: "screen comment must be `# screen <w> <h>`".into(),
        });
    }
    let parse = |s: &str| {
        s.parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("bad screen dimension {s:?}"),
        })
    };
    Ok(Some((parse(dims[0])?, parse(dims[1])?)))
}

/// Writes traces in the CSV format read by [`parse_traces`]. All traces must
/// share one screen size since the format carries a single screen line.
pub fn write_traces<W: Write>(mut out: W, traces: &[EyeTrace]) -> Result<()> {
    let first = traces.first().ok_or(Error::NoTraces)?;
    if traces
        .iter()
        .any(|t| t.screen_w != first.screen_w || t.screen_h != first.screen_h)
    {
        return Err(Error::InvalidInput("traces have differing screen sizes".into()));
    }
    let mut buf = String::new();
    writeln!(buf, "# screen {} {}", first.screen_w, first.screen_h).unwrap();
    writeln!(buf, "{CSV_HEADER}").unwrap();
    for trace in traces {
        for s in &trace.samples {
            let label = match s.fixation {
                None => "",
                Some(false) => "0",
                Some(true) => "1",
            };
            writeln!(
                buf,
                "{},{},{},{},{},{}",
                trace.observer_id, trace.image_id, s.t, s.x, s.y, label
            )
            .unwrap();
        }
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

/// I-DT parameters. Distances in pixels, durations in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    /// Maximum bounding-box width + height of a fixation window.
    pub dispersion_threshold: f64,
    pub min_duration: f64,
    /// Keep labels from the file when every sample carries one.
    pub respect_labels: bool,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            dispersion_threshold: 35.0,
            min_duration: 100.0,
            respect_labels: true,
        }
    }
}

#[derive(Clone, Copy)]
struct BBox {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl BBox {
    fn of(s: &EyeSample) -> Self {
        Self {
            min_x: s.x,
            max_x: s.x,
            min_y: s.y,
            max_y: s.y,
        }
    }

    fn with(mut self, s: &EyeSample) -> Self {
        self.min_x = self.min_x.min(s.x);
        self.max_x = self.max_x.max(s.x);
        self.min_y = self.min_y.min(s.y);
        self.max_y = self.max_y.max(s.y);
        self
    }

    fn dispersion(&self) -> f64 {
        (self.max_x - self.min_x) + (self.max_y - self.min_y)
    }
}

/// Labels every sample as fixation or saccadic using the dispersion-threshold
/// (I-DT) rule.
pub fn segment_fixations(trace: &EyeTrace, params: &SegmentationParams) -> Result<EyeTrace> {
    let samples = &trace.samples;
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    if params.respect_labels && trace.is_fully_labeled() {
        return Ok(trace.clone());
    }
    if !(params.dispersion_threshold >= 0.0 && params.min_duration >= 0.0) {
        return Err(Error::InvalidParameter(
            "segmentation thresholds must be non-negative".into(),
        ));
    }

    let n = samples.len();
    let mut labels = vec![false; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && samples[end].t - samples[start].t < params.min_duration {
            end += 1;
        }
        if end >= n {
            break;
        }
        let mut bbox = samples[start..=end]
            .iter()
            .skip(1)
            .fold(BBox::of(&samples[start]), |b, s| b.with(s));
        if bbox.dispersion() <= params.dispersion_threshold {
            while end + 1 < n {
                let grown = bbox.with(&samples[end + 1]);
                if grown.dispersion() > params.dispersion_threshold {
                    break;
                }
                bbox = grown;
                end += 1;
            }
            labels[start..=end].iter_mut().for_each(|l| *l = true);
            start = end + 1;
        } else {
            start += 1;
        }
    }

    let mut out = trace.clone();
    for (s, fix) in out.samples.iter_mut().zip(labels) {
        s.fixation = Some(fix);
    }
    Ok(out)
}

/// Consecutive sample pairs where both ends are saccadic.
pub fn nonfixation_pairs(trace: &EyeTrace) -> Result<Vec<(EyeSample, EyeSample)>> {
    let mut pairs = Vec::new();
    for (i, w) in trace.samples.windows(2).enumerate() {
        let a = w[0].is_saccadic().ok_or_else(|| unlabeled(trace, i))?;
        let b = w[1].is_saccadic().ok_or_else(|| unlabeled(trace, i + 1))?;
        if a && b {
            pairs.push((w[0], w[1]));
        }
    }
    if trace.samples.len() == 1 && trace.samples[0].fixation.is_none() {
        return Err(unlabeled(trace, 0));
    }
    Ok(pairs)
}

fn unlabeled(trace: &EyeTrace, index: usize) -> Error {
    Error::InvalidInput(format!(
        "sample {index} of ({}, {}) has no fixation label",
        trace.observer_id, trace.image_id
    ))
}
