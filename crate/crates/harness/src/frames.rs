//! Binary frame files.
//!
//! Little-endian: magic `MDSF`, u16 version (1), u16 elements (virtual rows
//! per frame), u16 bins (186), f32 fps, u32 frame count, then per frame an f64
//! timestamp followed by interleaved f32 (re, im) for every bin of every row.

use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use num_complex::Complex32;
use thiserror::Error;
use vitalsim_core::radar::{CirFrame, N_BINS};

pub const MAGIC: &[u8; 4] = b"MDSF";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 2 + 4 + 4;

#[derive(Debug, Error)]
pub enum FrameFileError {
    #[error("bad magic: not a frame file")]
    BadMagic,
    #[error("unsupported frame file version {0}")]
    BadVersion(u16),
    #[error("frame file header truncated")]
    TruncatedHeader,
    #[error("frame file has {0} bins per row, expected {N_BINS}")]
    BadBins(u16),
    #[error("truncated at frame {0}")]
    Truncated(usize),
    #[error("trailing bytes after the last frame")]
    Trailing,
    #[error("frame {index} has {rows} rows, file declares {elements}")]
    Shape { index: usize, rows: usize, elements: usize },
    #[error("{0} rows do not fit the u16 element field")]
    TooManyRows(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFile {
    pub fps: f32,
    pub elements: u16,
    pub frames: Vec<CirFrame>,
}

impl FrameFile {
    pub fn new(fps: f64, frames: Vec<CirFrame>) -> Result<Self, FrameFileError> {
        let rows = frames.first().map_or(0, |f| f.rows);
        let elements = u16::try_from(rows).map_err(|_| FrameFileError::TooManyRows(rows))?;
        Ok(Self { fps: fps as f32, elements, frames })
    }
}

pub fn write<W: Write>(file: &FrameFile, mut w: W) -> Result<(), FrameFileError> {
    let elements = file.elements as usize;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&file.elements.to_le_bytes())?;
    w.write_all(&(N_BINS as u16).to_le_bytes())?;
    w.write_all(&file.fps.to_le_bytes())?;
    w.write_all(&(file.frames.len() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 + elements * N_BINS * 8);
    for (index, f) in file.frames.iter().enumerate() {
        if f.rows != elements || f.bins.len() != elements * N_BINS {
            return Err(FrameFileError::Shape { index, rows: f.rows, elements });
        }
        buf.clear();
        buf.extend_from_slice(&f.t.to_le_bytes());
        for c in &f.bins {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, std::io::Error> {
    match r.read_exact(buf) {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(e),
    }
}

pub fn read<R: Read>(mut r: R) -> Result<FrameFile, FrameFileError> {
    let mut magic = [0u8; 4];
    if !fill(&mut r, &mut magic)? || &magic != MAGIC {
        return Err(FrameFileError::BadMagic);
    }
    let mut head = [0u8; HEADER_LEN - 4];
    if !fill(&mut r, &mut head)? {
        return Err(FrameFileError::TruncatedHeader);
    }
    let u16_at = |i: usize| u16::from_le_bytes([head[i], head[i + 1]]);
    let version = u16_at(0);
    if version != VERSION {
        return Err(FrameFileError::BadVersion(version));
    }
    let elements = u16_at(2);
    let bins = u16_at(4);
    if bins as usize != N_BINS {
        return Err(FrameFileError::BadBins(bins));
    }
    let fps = f32::from_le_bytes(head[6..10].try_into().unwrap());
    let count = u32::from_le_bytes(head[10..14].try_into().unwrap()) as usize;
    let rows = elements as usize;
    let mut buf = vec![0u8; 8 + rows * N_BINS * 8];
    let mut frames = Vec::with_capacity(count.min(1 << 16));
    for k in 0..count {
        if !fill(&mut r, &mut buf)? {
            return Err(FrameFileError::Truncated(k));
        }
        let t = f64::from_le_bytes(buf[..8].try_into().unwrap());
        let bins = buf[8..]
            .chunks_exact(8)
            .map(|c| {
                Complex32::new(
                    f32::from_le_bytes(c[..4].try_into().unwrap()),
                    f32::from_le_bytes(c[4..].try_into().unwrap()),
                )
            })
            .collect();
        frames.push(CirFrame { t, rows, bins });
    }
    let mut one = [0u8; 1];
    if r.read(&mut one)? != 0 {
        return Err(FrameFileError::Trailing);
    }
    Ok(FrameFile { fps, elements, frames })
}

pub fn save(file: &FrameFile, path: &Path) -> Result<(), FrameFileError> {
    write(file, BufWriter::new(std::fs::File::create(path)?))
}

pub fn load(path: &Path) -> Result<FrameFile, FrameFileError> {
    read(BufReader::new(std::fs::File::open(path)?))
}
