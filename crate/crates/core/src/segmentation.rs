//! Initial segmentation for clustering (fixed-duration and equal-stroke
//! varying-length) plus the labeled-interval Annotation type and its
//! RTTM-like text format.

use std::fmt::Write as _;
use std::path::Path;

use crate::dsp::OnsetList;
use crate::error::{Error, Result};

/// Half-open time interval [start, end) with an optional label.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: Option<String>,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        Self::labeled(start, end, None)
    }

    pub fn labeled(start: f64, end: f64, label: Option<String>) -> Result<Self> {
        if !(start >= 0.0 && start < end && end.is_finite()) {
            return Err(Error::invalid(format!(
                "segment must satisfy 0 <= start < end, got [{start}, {end})"
            )));
        }
        Ok(Self { start, end, label })
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Overlap duration with another interval.
    pub fn overlap(&self, other: &Segment) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }
}

/// Time-ordered, non-overlapping labeled intervals. Ground truth and
/// hypothesis annotations share this type.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Annotation {
    segments: Vec<Segment>,
}

impl Annotation {
    pub fn new(mut segments: Vec<Segment>) -> Result<Self> {
        segments.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap());
        for w in segments.windows(2) {
            if w[1].start < w[0].end - 1e-9 {
                return Err(Error::invalid(format!(
                    "segments overlap: [{}, {}) and [{}, {})",
                    w[0].start, w[0].end, w[1].start, w[1].end
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.start)
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    /// Label active at time `t`, if any segment contains it.
    pub fn label_at(&self, t: f64) -> Option<&str> {
        self.segments
            .iter()
            .find(|s| s.start <= t && t < s.end)
            .and_then(|s| s.label.as_deref())
    }

    /// Merges adjacent segments that share a label.
    pub fn coalesced(&self) -> Annotation {
        let mut out: Vec<Segment> = Vec::new();
        for seg in &self.segments {
            match out.last_mut() {
                Some(prev)
                    if prev.label == seg.label && (seg.start - prev.end).abs() < 1e-9 =>
                {
                    prev.end = seg.end;
                }
                _ => out.push(seg.clone()),
            }
        }
        Annotation { segments: out }
    }

    /// True when the segments tile [0, total] with no gaps.
    pub fn covers(&self, total: f64, tol: f64) -> bool {
        if self.segments.is_empty() {
            return false;
        }
        if self.start().abs() > tol || (self.end() - total).abs() > tol {
            return false;
        }
        self.segments
            .windows(2)
            .all(|w| (w[1].start - w[0].end).abs() <= tol)
    }
}

/// Contiguous fixed-duration cover of [0, duration_total]; every segment is
/// `seg_len` long except possibly the last.
pub fn segment_fixed(duration_total: f64, seg_len: f64) -> Result<Vec<Segment>> {
    if duration_total <= 0.0 || seg_len <= 0.0 {
        return Err(Error::invalid(
            "duration_total and seg_len must be positive",
        ));
    }
    let mut out = Vec::new();
    let mut start = 0.0;
    let mut i = 1usize;
    while start < duration_total {
        // Accumulate boundaries multiplicatively to avoid drift.
        let end = (i as f64 * seg_len).min(duration_total);
        if end - start > 1e-9 {
            out.push(Segment::new(start, end)?);
        } else {
            break;
        }
        start = end;
        i += 1;
    }
    Ok(out)
}

/// Varying-length cover where every segment except possibly the last spans
/// exactly `min_strokes` consecutive onsets. Boundaries fall at the midpoint
/// between the last onset of one segment and the first of the next. Fewer
/// than `min_strokes` onsets total yields a single covering segment.
pub fn segment_by_strokes(
    onsets: &OnsetList,
    duration_total: f64,
    min_strokes: usize,
) -> Result<Vec<Segment>> {
    if min_strokes == 0 {
        return Err(Error::invalid("min_strokes must be at least 1"));
    }
    if duration_total <= 0.0 {
        return Err(Error::invalid("duration_total must be positive"));
    }
    let times = onsets.times();
    if times.len() < min_strokes {
        return Ok(vec![Segment::new(0.0, duration_total)?]);
    }

    let mut boundaries = vec![0.0];
    let mut idx = min_strokes;
    while idx + 1 <= times.len() {
        if idx == times.len() {
            break;
        }
        let mid = 0.5 * (times[idx - 1] + times[idx]);
        boundaries.push(mid);
        let remaining = times.len() - idx;
        if remaining < min_strokes {
            break;
        }
        idx += min_strokes;
    }
    boundaries.push(duration_total);

    let mut out = Vec::with_capacity(boundaries.len() - 1);
    for w in boundaries.windows(2) {
        out.push(Segment::new(w[0], w[1])?);
    }
    Ok(out)
}

/// Emits the RTTM-like text form: one line per segment with fields
/// `file_id start duration label`, times fixed to 3 decimal places.
pub fn to_rttm(annotation: &Annotation, file_id: &str) -> Result<String> {
    let mut out = String::new();
    for seg in annotation.segments() {
        let label = seg
            .label
            .as_deref()
            .ok_or_else(|| Error::invalid("cannot emit an unlabeled segment"))?;
        writeln!(
            out,
            "{} {:.3} {:.3} {}",
            file_id,
            seg.start,
            seg.duration(),
            label
        )
        .expect("string write");
    }
    Ok(out)
}

/// Parses the RTTM-like text form produced by [`to_rttm`].
pub fn from_rttm(text: &str) -> Result<Annotation> {
    let mut segments = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno + 1,
                reason: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let start: f64 = fields[1].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            reason: format!("bad start time {:?}", fields[1]),
        })?;
        let dur: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            reason: format!("bad duration {:?}", fields[2]),
        })?;
        segments.push(
            Segment::labeled(start, start + dur, Some(fields[3].to_string())).map_err(|e| {
                Error::Parse {
                    line: lineno + 1,
                    reason: e.to_string(),
                }
            })?,
        );
    }
    Annotation::new(segments)
}

pub fn write_rttm(path: impl AsRef<Path>, annotation: &Annotation, file_id: &str) -> Result<()> {
    let text = to_rttm(annotation, file_id)?;
    std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_rttm(path: impl AsRef<Path>) -> Result<Annotation> {
    let text =
        std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    from_rttm(&text)
}
