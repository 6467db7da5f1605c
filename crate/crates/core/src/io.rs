//! Raster I/O: binary PGM/PPM files and the packed raw stream format used
//! to pipe frames between pipeline stages.
//!
//! The packed stream is a 9-byte header — little-endian `u32` width,
//! `u32` height, `u8` channels — followed by frames back-to-back, each
//! `width * height * channels` bytes. All frames in one stream share the
//! header dimensions; frame indices are assigned sequentially on read.

use crate::raster::{Frame, RasterError};
use std::io::{Read, Write};
use thiserror::Error;

pub const STREAM_HEADER_LEN: u64 = 9;

#[derive(Debug, Error)]
pub enum IoFormatError {
    #[error("truncated stream at byte {offset}: {context}")]
    Truncated { offset: u64, context: &'static str },
    #[error("bad channel count {value} in stream header at byte {offset} (must be 1 or 3)")]
    BadChannels { value: u8, offset: u64 },
    #[error("bad dimensions {width}x{height} in stream header")]
    BadDimensions { width: u32, height: u32 },
    #[error("frame shape {0}x{1}x{2} does not match stream header {3}x{4}x{5}")]
    FrameMismatch(u32, u32, u8, u32, u32, u8),
    #[error("not a {expected} file: {reason}")]
    BadMagic { expected: &'static str, reason: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
}

impl StreamHeader {
    pub fn frame_len(&self) -> usize {
        self.width as usize * self.height as usize * self.channels as usize
    }
}

/// Reads packed raw frames, tracking byte offsets for error reporting.
#[derive(Debug)]
pub struct FrameReader<R: Read> {
    inner: R,
    header: StreamHeader,
    next_index: u64,
    offset: u64,
}

impl<R: Read> FrameReader<R> {
    pub fn new(mut inner: R) -> Result<Self, IoFormatError> {
        let mut buf = [0u8; 9];
        let mut got = 0;
        while got < buf.len() {
            let n = inner.read(&mut buf[got..])?;
            if n == 0 {
                return Err(IoFormatError::Truncated { offset: got as u64, context: "stream header" });
            }
            got += n;
        }
        let width = u32::from_le_bytes(buf[0..4].try_into().unwrap());
        let height = u32::from_le_bytes(buf[4..8].try_into().unwrap());
        let channels = buf[8];
        if channels != 1 && channels != 3 {
            return Err(IoFormatError::BadChannels { value: channels, offset: 8 });
        }
        if width == 0 || height == 0 {
            return Err(IoFormatError::BadDimensions { width, height });
        }
        Ok(Self { inner, header: StreamHeader { width, height, channels }, next_index: 0, offset: STREAM_HEADER_LEN })
    }

    pub fn header(&self) -> StreamHeader {
        self.header
    }

    /// Next frame, or `None` at a clean end of stream. A partial frame is an
    /// error carrying the byte offset where data ran out.
    pub fn read_frame(&mut self) -> Result<Option<Frame>, IoFormatError> {
        let mut data = vec![0u8; self.header.frame_len()];
        let mut got = 0;
        while got < data.len() {
            let n = self.inner.read(&mut data[got..])?;
            if n == 0 {
                if got == 0 {
                    return Ok(None);
                }
                return Err(IoFormatError::Truncated {
                    offset: self.offset + got as u64,
                    context: "frame body",
                });
            }
            got += n;
        }
        self.offset += data.len() as u64;
        let frame = Frame::new(self.header.width, self.header.height, self.header.channels, data, self.next_index)?;
        self.next_index += 1;
        Ok(Some(frame))
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<Frame, IoFormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_frame().transpose()
    }
}

/// Writes packed raw frames; the header goes out on construction.
pub struct FrameWriter<W: Write> {
    inner: W,
    header: StreamHeader,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(mut inner: W, header: StreamHeader) -> Result<Self, IoFormatError> {
        if header.channels != 1 && header.channels != 3 {
            return Err(IoFormatError::BadChannels { value: header.channels, offset: 8 });
        }
        inner.write_all(&header.width.to_le_bytes())?;
        inner.write_all(&header.height.to_le_bytes())?;
        inner.write_all(&[header.channels])?;
        Ok(Self { inner, header })
    }

    pub fn header(&self) -> StreamHeader {
        self.header
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), IoFormatError> {
        if frame.width() != self.header.width
            || frame.height() != self.header.height
            || frame.channels() != self.header.channels
        {
            return Err(IoFormatError::FrameMismatch(
                frame.width(),
                frame.height(),
                frame.channels(),
                self.header.width,
                self.header.height,
                self.header.channels,
            ));
        }
        self.inner.write_all(frame.data())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, IoFormatError> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Write a frame as binary PGM (1 channel) or PPM (3 channels).
pub fn write_pnm<W: Write>(w: &mut W, frame: &Frame) -> Result<(), IoFormatError> {
    let magic = if frame.channels() == 1 { "P5" } else { "P6" };
    write!(w, "{}\n{} {}\n255\n", magic, frame.width(), frame.height())?;
    w.write_all(frame.data())?;
    Ok(())
}

/// Read a binary PGM/PPM file. Comment lines (`#`) in the header are skipped.
pub fn read_pnm<R: Read>(r: &mut R, index: u64) -> Result<Frame, IoFormatError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let channels = match bytes.get(0..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => {
            return Err(IoFormatError::BadMagic { expected: "PGM/PPM", reason: "missing P5/P6 magic".into() })
        }
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => {
                    return Err(IoFormatError::BadMagic { expected: "PGM/PPM", reason: "truncated header".into() })
                }
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *field = text.parse().map_err(|_| IoFormatError::BadMagic {
            expected: "PGM/PPM",
            reason: format!("bad header field at byte {start}"),
        })?;
    }
    if fields[2] != 255 {
        return Err(IoFormatError::BadMagic { expected: "PGM/PPM", reason: format!("unsupported maxval {}", fields[2]) });
    }
    // single whitespace byte separates header from data
    pos += 1;
    let (width, height) = (fields[0] as u32, fields[1] as u32);
    let need = width as usize * height as usize * channels as usize;
    let data = bytes
        .get(pos..pos + need)
        .ok_or(IoFormatError::Truncated { offset: bytes.len() as u64, context: "pnm data" })?
        .to_vec();
    Ok(Frame::new(width, height, channels, data, index)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn stream_round_trip_preserves_bytes_and_indices() {
        let frames: Vec<Frame> = (0..3)
            .map(|i| Frame::new(4, 2, 3, (0..24).map(|v| (v + i) as u8).collect(), 99).unwrap())
            .collect();
        let mut buf = Vec::new();
        let header = StreamHeader { width: 4, height: 2, channels: 3 };
        let mut writer = FrameWriter::new(&mut buf, header).unwrap();
        for f in &frames {
            writer.write_frame(f).unwrap();
        }
        writer.finish().unwrap();
        assert_eq!(buf.len(), 9 + 3 * 24);

        let mut reader = FrameReader::new(Cursor::new(&buf)).unwrap();
        assert_eq!(reader.header(), header);
        for (i, want) in frames.iter().enumerate() {
            let got = reader.read_frame().unwrap().unwrap();
            assert_eq!(got.data(), want.data());
            assert_eq!(got.index(), i as u64);
        }
        assert!(reader.read_frame().unwrap().is_none());
    }

    #[test]
    fn truncated_header_reports_offset() {
        let err = FrameReader::new(Cursor::new(vec![1u8, 0, 0])).unwrap_err();
        match err {
            IoFormatError::Truncated { offset, .. } => assert_eq!(offset, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_frame_reports_offset() {
        let mut buf = Vec::new();
        let mut writer = FrameWriter::new(&mut buf, StreamHeader { width: 2, height: 2, channels: 1 }).unwrap();
        writer.write_frame(&Frame::filled(2, 2, 1, 5, 0).unwrap()).unwrap();
        writer.finish().unwrap();
        buf.truncate(9 + 4 + 2); // second frame cut short
        buf.extend_from_slice(&[7, 7]);
        let mut reader = FrameReader::new(Cursor::new(&buf)).unwrap();
        assert!(reader.read_frame().unwrap().is_some());
        match reader.read_frame().unwrap_err() {
            IoFormatError::Truncated { offset, .. } => assert_eq!(offset, 9 + 4 + 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_channel_count_is_rejected() {
        let mut buf = vec![0u8; 9];
        buf[0] = 2;
        buf[4] = 2;
        buf[8] = 4;
        assert!(matches!(
            FrameReader::new(Cursor::new(buf)).unwrap_err(),
            IoFormatError::BadChannels { value: 4, offset: 8 }
        ));
    }

    #[test]
    fn pnm_round_trip() {
        for channels in [1u8, 3] {
            let len = 5 * 4 * channels as usize;
            let frame = Frame::new(5, 4, channels, (0..len).map(|v| v as u8).collect(), 0).unwrap();
            let mut buf = Vec::new();
            write_pnm(&mut buf, &frame).unwrap();
            let back = read_pnm(&mut Cursor::new(&buf), 0).unwrap();
            assert_eq!(back, frame);
        }
    }

    #[test]
    fn pnm_with_comment_header() {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"P5\n# a comment\n2 1\n255\n");
        buf.extend_from_slice(&[9, 8]);
        let frame = read_pnm(&mut Cursor::new(&buf), 0).unwrap();
        assert_eq!(frame.data(), &[9, 8]);
    }
}
