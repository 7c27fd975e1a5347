//! Minimal binary netpbm codec: P5 grayscale (8- and 16-bit big-endian)
//! and P6 color (8-bit). Writers emit a fixed header layout so identical
//! inputs produce byte-identical files.

use std::io::{Read, Write};
use std::path::Path;

use image::RgbImage;

use crate::error::{Error, Result};

pub struct Pgm {
    pub width: u32,
    pub height: u32,
    pub maxval: u32,
    /// Samples widened to u16 regardless of source depth.
    pub samples: Vec<u16>,
}

struct Header {
    magic: [u8; 2],
    width: u32,
    height: u32,
    maxval: u32,
    data_offset: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    let mut pos = 0usize;
    let err = |reason: &str| Error::parse(path, reason);

    if bytes.len() < 2 {
        return Err(err("truncated header"));
    }
    let magic = [bytes[0], bytes[1]];
    pos += 2;

    // Three decimal fields separated by whitespace/comments, then a single
    // whitespace byte before the raster.
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // skip whitespace and # comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if pos == start {
            return Err(err("expected a decimal header field"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are utf-8");
        *field = text.parse().map_err(|_| err("header field overflow"))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(err("missing whitespace after maxval"));
    }
    pos += 1;

    Ok(Header {
        magic,
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
        data_offset: pos,
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &bytes)?;
    if &header.magic != b"P5" {
        return Err(Error::parse(path, "not a binary PGM (P5)"));
    }
    if header.maxval == 0 || header.maxval > 65_535 {
        return Err(Error::parse(path, "maxval must be in 1..=65535"));
    }
    let n = header.width as usize * header.height as usize;
    let data = &bytes[header.data_offset..];
    let samples = if header.maxval <= 255 {
        if data.len() < n {
            return Err(Error::parse(path, "truncated raster"));
        }
        data[..n].iter().map(|&b| b as u16).collect()
    } else {
        if data.len() < 2 * n {
            return Err(Error::parse(path, "truncated raster"));
        }
        data[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(Pgm {
        width: header.width,
        height: header.height,
        maxval: header.maxval,
        samples,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let run = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    run().map_err(|e| Error::io(path, e))
}

pub fn write_pgm8(path: &Path, width: u32, height: u32, samples: &[u8]) -> Result<()> {
    assert_eq!(samples.len(), width as usize * height as usize);
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(samples);
    write_atomic(path, &bytes)
}

pub fn write_pgm16(path: &Path, width: u32, height: u32, samples: &[u16]) -> Result<()> {
    assert_eq!(samples.len(), width as usize * height as usize);
    let mut bytes = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &s in samples {
        bytes.extend_from_slice(&s.to_be_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &bytes)?;
    if &header.magic != b"P6" {
        return Err(Error::parse(path, "not a binary PPM (P6)"));
    }
    if header.maxval == 0 || header.maxval > 255 {
        return Err(Error::parse(path, "only 8-bit PPM is supported"));
    }
    let n = 3 * header.width as usize * header.height as usize;
    let data = &bytes[header.data_offset..];
    if data.len() < n {
        return Err(Error::parse(path, "truncated raster"));
    }
    RgbImage::from_raw(header.width, header.height, data[..n].to_vec())
        .ok_or_else(|| Error::parse(path, "raster size mismatch"))
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    bytes.extend_from_slice(image.as_raw());
    write_atomic(path, &bytes)
}
