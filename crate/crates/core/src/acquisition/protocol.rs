//! Wire protocol between a data server and the acquisition client.
//!
//! On connect the server sends one UTF-8 JSON handshake line describing the
//! device, terminated by `\n`. Every frame after that is a 4-byte
//! little-endian `u32` sequence number followed by `channel_count`
//! little-endian IEEE-754 `f32` values. Frames carry no delimiter.

use std::io::{self, BufRead, Read, Write};

use crate::device::DeviceSpec;

use super::AcquisitionError;

/// Handshakes longer than this are treated as malformed.
pub const MAX_HANDSHAKE_BYTES: usize = 64 * 1024;

/// One multichannel reading as it travels over the wire.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleFrame {
    pub seq: u32,
    pub values: Vec<f32>,
}

pub fn frame_size(channel_count: usize) -> usize {
    4 + 4 * channel_count
}

pub fn write_handshake<W: Write>(out: &mut W, spec: &DeviceSpec) -> io::Result<()> {
    let mut line = serde_json::to_vec(spec).map_err(io::Error::other)?;
    line.push(b'\n');
    out.write_all(&line)
}

pub fn read_handshake<R: BufRead>(input: &mut R) -> Result<DeviceSpec, AcquisitionError> {
    let mut line = Vec::new();
    let n = input
        .take(MAX_HANDSHAKE_BYTES as u64)
        .read_until(b'\n', &mut line)
        .map_err(|e| AcquisitionError::HandshakeMalformed(e.to_string()))?;
    if n == 0 || line.last() != Some(&b'\n') {
        return Err(AcquisitionError::HandshakeMalformed(
            "connection closed before the handshake line ended".into(),
        ));
    }
    let spec: DeviceSpec = serde_json::from_slice(&line[..line.len() - 1])
        .map_err(|e| AcquisitionError::HandshakeMalformed(e.to_string()))?;
    spec.validate()
        .map_err(|e| AcquisitionError::HandshakeMalformed(e.to_string()))?;
    Ok(spec)
}

/// Appends the encoding of one frame to `buf`.
pub fn encode_frame(buf: &mut Vec<u8>, seq: u32, values: &[f32]) {
    buf.extend_from_slice(&seq.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Reads one frame. `Ok(None)` means the peer closed the stream exactly on
/// a frame boundary; a partial frame is an error.
pub fn read_frame<R: Read>(
    input: &mut R,
    channel_count: usize,
    scratch: &mut Vec<u8>,
) -> io::Result<Option<SampleFrame>> {
    scratch.resize(frame_size(channel_count), 0);
    let mut filled = 0;
    while filled < scratch.len() {
        match input.read(&mut scratch[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    format!("stream ended inside a frame ({filled} of {} bytes)", scratch.len()),
                ))
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let seq = u32::from_le_bytes(scratch[0..4].try_into().unwrap());
    let values = scratch[4..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Some(SampleFrame { seq, values }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn spec() -> DeviceSpec {
        DeviceSpec::new("T", 300.0, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn handshake_round_trip() {
        let mut bytes = Vec::new();
        write_handshake(&mut bytes, &spec()).unwrap();
        assert_eq!(*bytes.last().unwrap(), b'\n');
        let mut cursor = Cursor::new(bytes);
        assert_eq!(read_handshake(&mut cursor).unwrap(), spec());
    }

    #[test]
    fn truncated_handshake() {
        let mut cursor = Cursor::new(br#"{"name":"T","sample_rate":3"#.to_vec());
        assert!(matches!(
            read_handshake(&mut cursor),
            Err(AcquisitionError::HandshakeMalformed(_))
        ));
    }

    #[test]
    fn invalid_device_in_handshake() {
        let mut cursor = Cursor::new(
            b"{\"name\":\"T\",\"sample_rate\":-1,\"channels\":[\"a\"],\"content_type\":\"EEG\"}\n"
                .to_vec(),
        );
        assert!(read_handshake(&mut cursor).is_err());
    }

    #[test]
    fn frame_layout_is_little_endian() {
        let mut buf = Vec::new();
        encode_frame(&mut buf, 1, &[1.0, -2.5]);
        assert_eq!(buf.len(), frame_size(2));
        assert_eq!(&buf[0..4], &[1, 0, 0, 0]);
        assert_eq!(&buf[4..8], &1.0f32.to_le_bytes());
        let mut scratch = Vec::new();
        let frame = read_frame(&mut Cursor::new(buf), 2, &mut scratch).unwrap().unwrap();
        assert_eq!(frame, SampleFrame { seq: 1, values: vec![1.0, -2.5] });
    }

    #[test]
    fn frames_concatenate() {
        let mut buf = Vec::new();
        for seq in 0..3 {
            encode_frame(&mut buf, seq, &[seq as f32, 0.5]);
        }
        let mut cursor = Cursor::new(buf);
        let mut scratch = Vec::new();
        for seq in 0..3 {
            assert_eq!(read_frame(&mut cursor, 2, &mut scratch).unwrap().unwrap().seq, seq);
        }
        assert!(read_frame(&mut cursor, 2, &mut scratch).unwrap().is_none());
    }

    #[test]
    fn clean_eof_and_partial_frame() {
        let mut scratch = Vec::new();
        assert!(read_frame(&mut Cursor::new(Vec::new()), 2, &mut scratch).unwrap().is_none());
        let err = read_frame(&mut Cursor::new(vec![0u8; 7]), 2, &mut scratch).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::UnexpectedEof);
    }
}
