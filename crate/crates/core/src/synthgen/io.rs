//! Disparity interchange formats and on-disk datasets.
//!
//! * PFM: `Pf` (one channel) or `PF` (three channels, first one is read),
//!   `width height`, then a scale whose sign gives the byte order (negative
//!   means little-endian), then `f32` rows stored bottom-up.
//! * 16-bit PNG: stored value = disparity × scale, 0 marks an invalid pixel.
//! * Dataset directory: `manifest.txt` with one sample per line,
//!   `id left right disparity valid occ points`, paths relative to the
//!   directory. Images and disparity are PFM, masks 8-bit PNG, points a text
//!   file of `l|r x y` lines.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::interest::PointSet;
use crate::synthgen::StereoSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ByteOrder {
    Little,
    Big,
}

pub fn write_pfm(map: &Grid<f64>, path: impl AsRef<Path>) -> Result<()> {
    write_pfm_with_order(map, path, ByteOrder::Little)
}

pub fn write_pfm_with_order(map: &Grid<f64>, path: impl AsRef<Path>, order: ByteOrder) -> Result<()> {
    let (h, w) = map.dims();
    let scale = match order {
        ByteOrder::Little => "-1.0",
        ByteOrder::Big => "1.0",
    };
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "Pf\n{w} {h}\n{scale}\n")?;
    for y in (0..h).rev() {
        for x in 0..w {
            let v = *map.get(x, y) as f32;
            let bytes = match order {
                ByteOrder::Little => v.to_le_bytes(),
                ByteOrder::Big => v.to_be_bytes(),
            };
            out.write_all(&bytes)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Grid<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated header"));
        }
        let tok = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        // Exactly one whitespace byte separates a token from what follows.
        pos += 1;
        Ok(tok)
    };
    let channels = match token()?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::format(path, format!("bad PFM magic `{other}`"))),
    };
    let parse_dim = |t: String| -> Result<usize> {
        t.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::format(path, format!("bad dimension `{t}`")))
    };
    let w = parse_dim(token()?)?;
    let h = parse_dim(token()?)?;
    let scale_tok = token()?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| *s != 0.0 && s.is_finite())
        .ok_or_else(|| Error::format(path, format!("bad scale `{scale_tok}`")))?;
    let order = if scale < 0.0 { ByteOrder::Little } else { ByteOrder::Big };

    let header_len = pos;
    let need = w * h * channels * 4;
    let body = bytes
        .get(header_len..header_len + need)
        .ok_or_else(|| Error::format(path, format!("expected {need} data bytes")))?;
    let mut grid = Grid::filled(h, w, 0.0);
    for (row_from_bottom, row) in body.chunks_exact(w * channels * 4).enumerate() {
        let y = h - 1 - row_from_bottom;
        for x in 0..w {
            let off = x * channels * 4;
            let raw: [u8; 4] = row[off..off + 4].try_into().expect("4 bytes");
            let v = match order {
                ByteOrder::Little => f32::from_le_bytes(raw),
                ByteOrder::Big => f32::from_be_bytes(raw),
            };
            grid.set(x, y, v as f64);
        }
    }
    Ok(grid)
}

/// Reads a 16-bit grayscale PNG disparity map; returns the map and its validity.
pub fn read_disp_png16(path: impl AsRef<Path>, scale: f64) -> Result<(Grid<f64>, Grid<bool>)> {
    let path = path.as_ref();
    let (w, h, depth, samples) = read_png_gray(path)?;
    if depth != png::BitDepth::Sixteen {
        return Err(Error::format(path, "disparity PNG must be 16-bit"));
    }
    let raw: Vec<u16> = samples
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    let map = Grid::from_vec(h, w, raw.iter().map(|&v| v as f64 / scale).collect());
    let valid = Grid::from_vec(h, w, raw.iter().map(|&v| v != 0).collect());
    Ok((map, valid))
}

/// Writes a 16-bit disparity PNG. Valid pixels are stored as
/// `round(d * scale)` clamped to `1..=65535`; invalid pixels as 0.
pub fn write_disp_png16(map: &Grid<f64>, valid: &Grid<bool>, path: impl AsRef<Path>, scale: f64) -> Result<()> {
    if !map.same_dims(valid) {
        return Err(Error::Contract("disparity and mask sizes differ".into()));
    }
    let mut buf = Vec::with_capacity(map.data().len() * 2);
    for (&d, &ok) in map.data().iter().zip(valid.data()) {
        let v: u16 = if ok {
            (d * scale).round().clamp(1.0, 65535.0) as u16
        } else {
            0
        };
        buf.extend_from_slice(&v.to_be_bytes());
    }
    write_png_gray(path.as_ref(), map.width(), map.height(), png::BitDepth::Sixteen, &buf)
}

pub fn write_mask_png(mask: &Grid<bool>, path: impl AsRef<Path>) -> Result<()> {
    let buf: Vec<u8> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_png_gray(path.as_ref(), mask.width(), mask.height(), png::BitDepth::Eight, &buf)
}

pub fn read_mask_png(path: impl AsRef<Path>) -> Result<Grid<bool>> {
    let path = path.as_ref();
    let (w, h, depth, samples) = read_png_gray(path)?;
    if depth != png::BitDepth::Eight {
        return Err(Error::format(path, "mask PNG must be 8-bit"));
    }
    Ok(Grid::from_vec(h, w, samples.iter().map(|&v| v > 127).collect()))
}

fn write_png_gray(path: &Path, w: usize, h: usize, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .write_image_data(data)
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer.finish().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(())
}

fn read_png_gray(path: &Path) -> Result<(usize, usize, png::BitDepth, Vec<u8>)> {
    let file = std::io::BufReader::new(File::open(path)?);
    let decoder = png::Decoder::new(file);
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::format(path, "expected a grayscale PNG"));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, info.bit_depth, buf))
}

/// One line of a dataset manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub left: PathBuf,
    pub right: PathBuf,
    pub disparity: PathBuf,
    pub valid: PathBuf,
    pub occ: PathBuf,
    pub points: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(Error::format(
                &path,
                format!("line {}: expected 7 fields, found {}", lineno + 1, f.len()),
            ));
        }
        entries.push(ManifestEntry {
            id: f[0].to_string(),
            left: f[1].into(),
            right: f[2].into(),
            disparity: f[3].into(),
            valid: f[4].into(),
            occ: f[5].into(),
            points: f[6].into(),
        });
    }
    Ok(entries)
}

/// Canonical id of sample `index`.
pub fn sample_id(index: usize) -> String {
    format!("{index:06}")
}

/// Writes samples and a manifest into `dir`. Returns the manifest entries.
pub fn write_dataset(dir: impl AsRef<Path>, samples: &[StereoSample]) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    writeln!(manifest, "# id left right disparity valid occ points")?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let id = sample_id(i);
        let e = ManifestEntry {
            left: format!("{id}_left.pfm").into(),
            right: format!("{id}_right.pfm").into(),
            disparity: format!("{id}_disp.pfm").into(),
            valid: format!("{id}_valid.png").into(),
            occ: format!("{id}_occ.png").into(),
            points: format!("{id}_points.txt").into(),
            id,
        };
        write_pfm(&s.left, dir.join(&e.left))?;
        write_pfm(&s.right, dir.join(&e.right))?;
        write_pfm(&s.disparity, dir.join(&e.disparity))?;
        write_mask_png(&s.valid_mask, dir.join(&e.valid))?;
        write_mask_png(&s.occ_mask, dir.join(&e.occ))?;
        let mut pts = String::new();
        for (tag, set) in [("l", &s.oracle_points_l), ("r", &s.oracle_points_r)] {
            for &(x, y) in set.coords() {
                pts.push_str(&format!("{tag} {x} {y}\n"));
            }
        }
        fs::write(dir.join(&e.points), pts)?;
        writeln!(
            manifest,
            "{} {} {} {} {} {} {}",
            e.id,
            e.left.display(),
            e.right.display(),
            e.disparity.display(),
            e.valid.display(),
            e.occ.display(),
            e.points.display()
        )?;
        entries.push(e);
    }
    manifest.flush()?;
    Ok(entries)
}

pub fn read_sample(dir: impl AsRef<Path>, e: &ManifestEntry) -> Result<StereoSample> {
    let dir = dir.as_ref();
    let left = read_pfm(dir.join(&e.left))?;
    let right = read_pfm(dir.join(&e.right))?;
    let disparity = read_pfm(dir.join(&e.disparity))?;
    let valid_mask = read_mask_png(dir.join(&e.valid))?;
    let occ_mask = read_mask_png(dir.join(&e.occ))?;
    if !(left.same_dims(&right) && left.same_dims(&disparity) && left.same_dims(&valid_mask) && left.same_dims(&occ_mask)) {
        return Err(Error::format(dir.join(&e.left), format!("sample {} has mismatched sizes", e.id)));
    }
    let pts_path = dir.join(&e.points);
    let text = fs::read_to_string(&pts_path)?;
    let (mut l, mut r) = (Vec::new(), Vec::new());
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::format(&pts_path, format!("bad coordinate `{s}`")));
        match f.as_slice() {
            ["l", x, y] => l.push((parse(x)?, parse(y)?)),
            ["r", x, y] => r.push((parse(x)?, parse(y)?)),
            _ => return Err(Error::format(&pts_path, format!("bad point line `{line}`"))),
        }
    }
    Ok(StereoSample {
        left,
        right,
        disparity,
        valid_mask,
        occ_mask,
        oracle_points_l: PointSet::from_coords(l),
        oracle_points_r: PointSet::from_coords(r),
    })
}

/// Loads every sample listed in `dir`'s manifest, with its id.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<(String, StereoSample)>> {
    let dir = dir.as_ref();
    read_manifest(dir)?
        .iter()
        .map(|e| Ok((e.id.clone(), read_sample(dir, e)?)))
        .collect()
}
