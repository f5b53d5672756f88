use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpanKind {
    Send,
    Predict,
}

impl fmt::Display for SpanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpanKind::Send => "SEND",
            SpanKind::Predict => "PREDICT",
        })
    }
}

/// Frames `start..end` handled one way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub kind: SpanKind,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{})", self.kind, self.start, self.end)
    }
}

/// Alternating send/predict spans covering a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSchedule {
    pub spans: Vec<Span>,
    /// Frames sent before each predicted block.
    pub k_in: usize,
    /// Frames in each predicted block.
    pub k_out: usize,
    pub len: usize,
}

/// The symmetric schedule with `k_in = k_out = k`.
pub fn schedule_blocks(len: usize, k: usize) -> Result<BlockSchedule> {
    schedule_blocks_asym(len, k, k)
}

/// Greedy left to right: while at least `k_in + k_out` frames remain, send
/// `k_in` then predict `k_out`. The shorter tail is sent as one span.
pub fn schedule_blocks_asym(len: usize, k_in: usize, k_out: usize) -> Result<BlockSchedule> {
    if len == 0 {
        return Err(Error::InvalidArgument("cannot schedule an empty sequence".into()));
    }
    if k_in == 0 || k_out == 0 {
        return Err(Error::InvalidArgument(format!(
            "block sizes must be positive (k_in = {k_in}, k_out = {k_out})"
        )));
    }
    let cycle = k_in + k_out;
    let mut spans = Vec::with_capacity(2 * (len / cycle) + 1);
    let mut t = 0;
    while len - t >= cycle {
        spans.push(Span {
            kind: SpanKind::Send,
            start: t,
            end: t + k_in,
        });
        spans.push(Span {
            kind: SpanKind::Predict,
            start: t + k_in,
            end: t + cycle,
        });
        t += cycle;
    }
    if t < len {
        spans.push(Span {
            kind: SpanKind::Send,
            start: t,
            end: len,
        });
    }
    Ok(BlockSchedule {
        spans,
        k_in,
        k_out,
        len,
    })
}

impl BlockSchedule {
    pub fn frames_sent(&self) -> usize {
        self.count(SpanKind::Send)
    }

    pub fn frames_predicted(&self) -> usize {
        self.count(SpanKind::Predict)
    }

    fn count(&self, kind: SpanKind) -> usize {
        self.spans.iter().filter(|s| s.kind == kind).map(Span::len).sum()
    }

    pub fn sent_fraction(&self) -> f64 {
        self.frames_sent() as f64 / self.len as f64
    }

    /// `L / frames_sent`: how many times fewer frames cross the channel.
    pub fn savings_factor(&self) -> f64 {
        self.len as f64 / self.frames_sent() as f64
    }

    pub fn kind_at(&self, t: usize) -> Option<SpanKind> {
        self.span_at(t).map(|s| s.kind)
    }

    pub fn span_at(&self, t: usize) -> Option<&Span> {
        let i = self.spans.partition_point(|s| s.end <= t);
        self.spans.get(i).filter(|s| s.start <= t)
    }

    pub fn predicted_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.spans
            .iter()
            .filter(|s| s.kind == SpanKind::Predict)
            .flat_map(|s| s.start..s.end)
    }

    /// Checks the partition and span-length invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Protocol(format!("invalid schedule: {msg}")));
        let mut t = 0;
        for (i, s) in self.spans.iter().enumerate() {
            if s.start != t || s.end <= s.start {
                return bad(format!("span {i} {s} does not continue at frame {t}"));
            }
            match s.kind {
                SpanKind::Predict => {
                    if s.len() != self.k_out {
                        return bad(format!("{s} is not {} frames long", self.k_out));
                    }
                    let prev = i.checked_sub(1).map(|j| self.spans[j]);
                    if !matches!(prev, Some(p) if p.kind == SpanKind::Send && p.len() >= self.k_in) {
                        return bad(format!("{s} lacks a preceding send span of {} frames", self.k_in));
                    }
                }
                SpanKind::Send => {
                    let trailing = i + 1 == self.spans.len();
                    if trailing && s.len() >= self.k_in + self.k_out {
                        return bad(format!("trailing {s} could hold another cycle"));
                    }
                }
            }
            t = s.end;
        }
        if t != self.len {
            return bad(format!("spans cover {t} of {} frames", self.len));
        }
        Ok(())
    }
}

impl fmt::Display for BlockSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.spans.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}
