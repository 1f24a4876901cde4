//! Live frame stream: a raw-frames dataset header with a zero sample count,
//! then per frame a `u32` byte length and that many bytes of `f32` samples.
//! Frames are numbered in arrival order.

use std::io::{ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use super::bytes::{put_f32s, Cursor};
use super::{header_bytes, read_header, DatasetKind};
use crate::radar::{FrameCube, RadarConfig};
use crate::{HoodError, Result};

pub fn write_stream_header(w: &mut impl Write, radar: &RadarConfig) -> Result<()> {
    w.write_all(&header_bytes(DatasetKind::RawFrames, 0, &[radar.n_rx, radar.n_chirps, radar.n_samples])?)?;
    Ok(())
}

pub fn write_stream_frame(w: &mut impl Write, frame: &FrameCube) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + frame.data.len() * 4);
    buf.extend_from_slice(&((frame.data.len() * 4) as u32).to_le_bytes());
    put_f32s(&mut buf, &frame.data);
    w.write_all(&buf)?;
    Ok(())
}

pub struct FrameStreamReader<R> {
    inner: R,
    radar: RadarConfig,
    next_index: usize,
    source: PathBuf,
    done: bool,
}

fn truncated(source: &Path, detail: String) -> HoodError {
    HoodError::Truncated { path: source.to_path_buf(), detail }
}

/// Fills `buf`; `Ok(false)` on end of input before the first byte.
fn read_exact_or_eof(r: &mut impl Read, buf: &mut [u8], source: &Path, what: &str) -> Result<bool> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(truncated(source, format!("{what}: got {got} of {} bytes", buf.len()))),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

impl<R: Read> FrameStreamReader<R> {
    /// Reads and checks the header against `radar`.
    pub fn new(mut inner: R, radar: &RadarConfig, source: &Path) -> Result<Self> {
        let mut head = vec![0u8; 24];
        if !read_exact_or_eof(&mut inner, &mut head, source, "stream header")? {
            return Err(truncated(source, "empty stream".into()));
        }
        let rank = u32::from_le_bytes(head[20..24].try_into().unwrap()) as usize;
        if rank > 8 {
            return Err(HoodError::Schema {
                path: source.to_path_buf(),
                detail: format!("rank {rank} is implausible"),
            });
        }
        let mut dims = vec![0u8; 4 * rank];
        if !read_exact_or_eof(&mut inner, &mut dims, source, "stream dims")? && rank > 0 {
            return Err(truncated(source, "stream header ends early".into()));
        }
        head.extend_from_slice(&dims);
        let mut c = Cursor::new(&head, source);
        let (kind, _, dims) = read_header(&mut c)?;
        if kind != DatasetKind::RawFrames {
            return Err(c.schema(format!("live stream must carry raw frames, got {}", kind.as_str())));
        }
        let want = [radar.n_rx, radar.n_chirps, radar.n_samples];
        if dims != want {
            return Err(HoodError::Shape(format!("stream frames are {dims:?}, radar config expects {want:?}")));
        }
        Ok(Self { inner, radar: radar.clone(), next_index: 0, source: source.to_path_buf(), done: false })
    }

    fn read_frame(&mut self) -> Result<Option<FrameCube>> {
        let mut len = [0u8; 4];
        if !read_exact_or_eof(&mut self.inner, &mut len, &self.source, "frame length")? {
            return Ok(None);
        }
        let len = u32::from_le_bytes(len) as usize;
        let want = self.radar.frame_len() * 4;
        if len != want {
            return Err(HoodError::Schema {
                path: self.source.clone(),
                detail: format!("frame {} has {len} bytes, expected {want}", self.next_index),
            });
        }
        let mut raw = vec![0u8; len];
        if !read_exact_or_eof(&mut self.inner, &mut raw, &self.source, "frame payload")? {
            return Err(truncated(&self.source, format!("frame {} has no payload", self.next_index)));
        }
        let mut frame = FrameCube::zeros(&self.radar, self.next_index);
        frame.data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        self.next_index += 1;
        Ok(Some(frame))
    }
}

impl<R: Read> Iterator for FrameStreamReader<R> {
    type Item = Result<FrameCube>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = self.read_frame().transpose();
        if !matches!(out, Some(Ok(_))) {
            self.done = true;
        }
        out
    }
}
