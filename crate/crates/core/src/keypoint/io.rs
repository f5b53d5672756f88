//! Line-oriented keypoint sequence files.
//!
//! A file holds zero or more sequences back to back. Each starts with a header
//!
//! ```text
//! KPSEQ v1 <num_frames> <fps> <source_id>
//! ```
//!
//! followed by `num_frames` lines of 60 space-separated decimals in flatten
//! order. Floats are written with Rust's shortest round-trip formatting, so
//! save-then-load is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{validate_source_id, KeypointFrame, KeypointSequence, FRAME_DIM};
use crate::error::{Error, Result};

pub const HEADER_MAGIC: &str = "KPSEQ";
pub const FORMAT_VERSION: &str = "v1";

pub fn format_sequences(seqs: &[KeypointSequence]) -> Result<String> {
    let mut out = String::new();
    for seq in seqs {
        seq.validate()?;
        writeln!(
            out,
            "{HEADER_MAGIC} {FORMAT_VERSION} {} {} {}",
            seq.frames.len(),
            seq.fps,
            seq.source_id
        )
        .expect("writing to String");
        for frame in &seq.frames {
            let v = frame.flatten();
            let mut first = true;
            for x in v.iter() {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{x}").expect("writing to String");
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn save_sequences(seqs: &[KeypointSequence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = format_sequences(seqs)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_sequences(path: impl AsRef<Path>) -> Result<Vec<KeypointSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sequences(&text, path)
}

/// `origin` only labels errors.
pub fn parse_sequences(text: &str, origin: &Path) -> Result<Vec<KeypointSequence>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let mut out = Vec::new();

    while let Some((line_no, header)) = lines.next() {
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != HEADER_MAGIC {
            return Err(parse_err(
                line_no,
                format!("expected `{HEADER_MAGIC} {FORMAT_VERSION} <num_frames> <fps> <source_id>`"),
            ));
        }
        if fields[1] != FORMAT_VERSION {
            return Err(parse_err(
                line_no,
                format!("unsupported version `{}`", fields[1]),
            ));
        }
        let num_frames: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad frame count `{}`", fields[2])))?;
        let fps: f64 = fields[3]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad fps `{}`", fields[3])))?;
        let source_id = fields[4].to_string();
        validate_source_id(&source_id)?;

        let mut frames = Vec::with_capacity(num_frames);
        for frame_index in 0..num_frames {
            let (frame_line, body) = lines.next().ok_or_else(|| {
                parse_err(
                    line_no,
                    format!("sequence `{source_id}` declares {num_frames} frames, found {frame_index}"),
                )
            })?;
            let values = body
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        parse_err(
                            frame_line,
                            format!("frame {frame_index}: bad number `{tok}`"),
                        )
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != FRAME_DIM {
                return Err(Error::FrameShape {
                    frame: frame_index,
                    expected: FRAME_DIM,
                    found: values.len(),
                });
            }
            let frame = KeypointFrame::from_slice(&values)?;
            frame.validate(frame_index)?;
            frames.push(frame);
        }
        out.push(KeypointSequence::new(frames, fps, source_id)?);
    }
    Ok(out)
}
