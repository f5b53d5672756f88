use kpstream::protocol::{
    decode_frame, decode_stream, encode_frame, DecodeError, WireBody, WireFrame, KEY_FRAME_BYTES, SKIP_FRAME_BYTES,
};
use proptest::prelude::*;

fn any_frame() -> impl Strategy<Value = WireFrame> {
    let key = (any::<u64>(), any::<u32>(), prop::collection::vec(any::<u32>(), 60)).prop_map(|(session, index, bits)| {
        WireFrame {
            session,
            index,
            body: WireBody::Key(std::array::from_fn(|i| f32::from_bits(bits[i]))),
        }
    });
    let skip = (any::<u64>(), any::<u32>()).prop_map(|(s, i)| WireFrame::skip(s, i));
    prop_oneof![3 => key, 1 => skip]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn round_trip_is_bit_exact(frame in any_frame()) {
        let bytes = encode_frame(&frame);
        let len = if frame.body == WireBody::Skip { SKIP_FRAME_BYTES } else { KEY_FRAME_BYTES };
        prop_assert_eq!(bytes.len(), len);
        prop_assert_eq!(decode_frame(&bytes).unwrap(), frame);
    }

    #[test]
    fn streams_split_at_frame_boundaries(frames in prop::collection::vec(any_frame(), 0..20)) {
        let bytes: Vec<u8> = frames.iter().flat_map(encode_frame).collect();
        prop_assert_eq!(decode_stream(&bytes).unwrap(), frames);
    }

    #[test]
    fn truncation_is_reported(frame in any_frame(), cut in 0usize..257) {
        let bytes = encode_frame(&frame);
        if cut < bytes.len() {
            let err = decode_frame(&bytes[..cut]).unwrap_err();
            let is_truncated = matches!(err, DecodeError::Truncated { .. });
            prop_assert!(is_truncated);
        }
    }
}

#[test]
fn garbage_is_rejected() {
    let mut bytes = encode_frame(&WireFrame::skip(1, 2));
    bytes[0] = b'X';
    assert!(matches!(decode_frame(&bytes), Err(DecodeError::BadMagic(_))));
    let mut bytes = encode_frame(&WireFrame::skip(1, 2));
    bytes[4] = 9;
    assert!(matches!(decode_frame(&bytes), Err(DecodeError::UnknownKind(9))));
    let mut bytes = encode_frame(&WireFrame::skip(1, 2));
    bytes.push(0);
    assert!(matches!(decode_frame(&bytes), Err(DecodeError::TrailingBytes(1))));
}
