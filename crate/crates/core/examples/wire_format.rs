//! The block schedule for one sequence and the bytes each frame costs.

use kpstream::protocol::{decode_stream, encode_frame, schedule_blocks, SpanKind, WireFrame};

fn main() -> kpstream::Result<()> {
    let schedule = schedule_blocks(34, 6)?;
    println!("{schedule}");
    println!("sent {} of {} frames, savings x{:.3}", schedule.frames_sent(), schedule.len, schedule.savings_factor());

    let frame = [0.25; 60];
    let mut bytes = Vec::new();
    for t in 0..schedule.len {
        let wire = match schedule.kind_at(t) {
            Some(SpanKind::Send) => WireFrame::key(9, t as u32, &frame),
            _ => WireFrame::skip(9, t as u32),
        };
        bytes.extend(encode_frame(&wire));
    }
    let frames = decode_stream(&bytes)?;
    println!("{} frames in {} bytes (every frame sent: {})", frames.len(), bytes.len(), 34 * 257);
    println!("first skip header: {:02x?}", &bytes[6 * 257..6 * 257 + 17]);
    Ok(())
}
