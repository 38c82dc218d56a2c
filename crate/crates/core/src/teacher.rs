//! Teacher signals: interest points per view and a soft reference assignment.
//!
//! Records are stored in a binary interchange file next to a text index
//! (`<file>.index`). All multi-byte values are little-endian.
//!
//! ```text
//! file header
//!   magic       8 bytes  "ICGTEACH"
//!   version     u32      1
//!   dtype       u8       1 (float32)
//!   endianness  u8       0 (little)
//!   reserved    u16      0
//!   count       u32      number of records
//! record
//!   id_len u32, id (UTF-8)
//!   height u32, width u32
//!   four point blocks: interest_l, interest_r, points_l, points_r
//!     n u32, then n x (x f32, y f32, score f32)
//!   rows u32, cols u32, then rows*cols f32 in row-major order
//! ```
//!
//! Index lines are `id offset rows cols`, with `#` comments.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::correspondence::{build_gt_matches, DisparityGt, MatchGT, DEFAULT_EPS};
use crate::decoders::{sinkhorn_normalize, Assignment};
use crate::error::{Error, Result};
use crate::interest::{nms_filter, Detector, HarrisDetector, InterestMap, NmsParams, OracleDetector, PointSet};
use crate::synthgen::StereoSample;
use crate::tensor::Tensor;

/// Lowest log-weight handed to Sinkhorn; stands in for an impossible pairing.
pub const LOG_FLOOR: f64 = -1e4;
/// Loaded values this far outside `[0, 1]` are clamped instead of rejected.
pub const CLAMP_TOLERANCE: f64 = 1e-6;

const MAGIC: &[u8; 8] = b"ICGTEACH";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 1;
const LITTLE_ENDIAN: u8 = 0;
const HEADER_LEN: u64 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Oracle,
    Harris,
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "harris" => Ok(Self::Harris),
            _ => Err(Error::Config(format!("unknown detector `{s}` (expected oracle or harris)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub detector: DetectorKind,
    /// Width of the Gaussian matching kernel in pixels.
    pub tau: f64,
    /// Ground-truth match tolerance in pixels.
    pub eps: f64,
    pub sinkhorn_iters: usize,
    pub nms: NmsParams,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            detector: DetectorKind::Oracle,
            tau: 1.0,
            eps: DEFAULT_EPS,
            sinkhorn_iters: 100,
            nms: NmsParams::default(),
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.nms.radius < 1 {
            return Err(Error::Config("nms radius must be at least 1".into()));
        }
        Ok(())
    }
}

/// Log-weights `(m+1, n+1)` of the oracle matcher before normalization.
///
/// A matched left point spreads Gaussian weight over right points near its
/// warped position; unmatched and excluded points only reach their dustbin.
pub fn oracle_kernel(p_l: &PointSet, p_r: &PointSet, gt: &MatchGT, disparity: &DisparityGt<'_>, tau: f64, eps: f64) -> Tensor {
    let (m, n) = (p_l.len(), p_r.len());
    let c = n + 1;
    let mut k = Tensor::full(&[m + 1, c], LOG_FLOOR);
    let log_w = |d2: f64| (-d2 / (tau * tau)).max(LOG_FLOOR);
    let log_delta = log_w(eps * eps);
    let radius = (3.0 * tau).max(eps);

    let mut matched_l = vec![false; m];
    let mut matched_r = vec![false; n];
    for &(i, j) in &gt.pairs {
        matched_l[i] = true;
        matched_r[j] = true;
    }
    for i in 0..m {
        if !matched_l[i] {
            k.set2(i, n, 0.0);
            continue;
        }
        k.set2(i, n, log_delta);
        let (x, y) = p_l.coords()[i];
        let Some(d) = disparity.sample(x, y) else { continue };
        let wx = x - d;
        for (j, &(rx, ry)) in p_r.coords().iter().enumerate() {
            let d2 = (rx - wx).powi(2) + (ry - y).powi(2);
            if d2 <= radius * radius {
                k.set2(i, j, log_w(d2));
            }
        }
    }
    for j in 0..n {
        k.set2(m, j, if matched_r[j] { log_delta } else { 0.0 });
    }
    k.set2(m, n, 0.0);
    k
}

/// Soft reference assignment from ground-truth geometry.
pub fn oracle_matcher(
    p_l: &PointSet,
    p_r: &PointSet,
    gt: &MatchGT,
    disparity: &DisparityGt<'_>,
    tau: f64,
    eps: f64,
    iters: usize,
) -> Result<Assignment> {
    let (m, n) = (p_l.len(), p_r.len());
    gt.check_invariants(m, n)?;
    // Without pairs the exact answer puts zero mass on the corner, which
    // Sinkhorn only approaches sublinearly.
    if gt.pairs.is_empty() {
        return Ok(dustbin_only(m, n));
    }
    let g = Graph::new();
    let logits = g.constant(oracle_kernel(p_l, p_r, gt, disparity, tau, eps));
    let transport = sinkhorn_normalize(logits, iters).value();
    Assignment::from_transport(&transport)
}

fn dustbin_only(m: usize, n: usize) -> Assignment {
    let mut t = Tensor::zeros(&[m + 1, n + 1]);
    for i in 0..m {
        t.set2(i, n, 1.0);
    }
    for j in 0..n {
        t.set2(m, j, 1.0);
    }
    Assignment::new(t).expect("dustbin assignment is valid")
}

/// Teacher output for one stereo pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherRecord {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub interest_l: PointSet,
    pub interest_r: PointSet,
    pub points_l: PointSet,
    pub points_r: PointSet,
    /// Reference assignment `(m+1, n+1)` over `points_l` x `points_r`.
    pub assignment: Tensor,
}

fn q32(v: f64) -> f64 {
    v as f32 as f64
}

fn quantize_points(p: &PointSet) -> PointSet {
    PointSet::new(
        p.coords().iter().map(|&(x, y)| (q32(x), q32(y))).collect(),
        p.scores().iter().map(|&s| q32(s)).collect(),
    )
    .expect("rounding keeps scores in range")
}

impl TeacherRecord {
    /// Rounds every value through `f32`, matching what the file stores.
    pub fn quantized(self) -> Self {
        Self {
            interest_l: quantize_points(&self.interest_l),
            interest_r: quantize_points(&self.interest_r),
            points_l: quantize_points(&self.points_l),
            points_r: quantize_points(&self.points_r),
            assignment: self.assignment.map(q32),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Error::TeacherRecord {
            sample: self.id.clone(),
            msg,
        };
        let (m, n) = (self.points_l.len(), self.points_r.len());
        if self.assignment.shape() != [m + 1, n + 1] {
            return Err(err(format!(
                "assignment is {:?} but point counts are ({m}, {n})",
                self.assignment.shape()
            )));
        }
        for p in [&self.interest_l, &self.interest_r, &self.points_l, &self.points_r] {
            p.check_bounds(self.height, self.width).map_err(|e| err(e.to_string()))?;
        }
        if let Some(v) = self
            .assignment
            .data()
            .iter()
            .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(err(format!("assignment entry {v} outside [0, 1]")));
        }
        Ok(())
    }

    /// Dense teacher map for one view; every recorded point is a positive.
    pub fn interest_map(&self, left: bool) -> InterestMap {
        let pts = if left { &self.interest_l } else { &self.interest_r };
        pts.to_interest_map(self.height, self.width, 0.0)
    }

    pub fn reference(&self) -> Result<Assignment> {
        Assignment::new(self.assignment.clone())
    }
}

fn detect_points(cfg: &TeacherConfig, image: &crate::grid::Grid<f64>, oracle: &PointSet) -> Result<PointSet> {
    let map = match cfg.detector {
        DetectorKind::Oracle => OracleDetector::default().detect(image, Some(oracle)),
        DetectorKind::Harris => HarrisDetector::default().detect(image, None),
    };
    Ok(nms_filter(&map, cfg.nms.radius, cfg.nms.threshold, cfg.nms.max_points)?.into_canonical_order())
}

/// Runs the configured detector and the oracle matcher on one sample.
pub fn build_record(id: &str, sample: &StereoSample, cfg: &TeacherConfig) -> Result<TeacherRecord> {
    cfg.validate()?;
    let pts_l = detect_points(cfg, &sample.left, &sample.oracle_points_l)?;
    let pts_r = detect_points(cfg, &sample.right, &sample.oracle_points_r)?;
    let gt = build_gt_matches(
        &pts_l,
        &pts_r,
        &sample.disparity,
        &sample.valid_mask,
        &sample.occ_mask,
        cfg.eps,
    )?;
    let disp = DisparityGt::new(&sample.disparity, &sample.valid_mask, &sample.occ_mask)?;
    let asg = oracle_matcher(&pts_l, &pts_r, &gt, &disp, cfg.tau, cfg.eps, cfg.sinkhorn_iters)?;
    let (height, width) = sample.dims();
    Ok(TeacherRecord {
        id: id.to_string(),
        height,
        width,
        interest_l: pts_l.clone(),
        interest_r: pts_r.clone(),
        points_l: pts_l,
        points_r: pts_r,
        assignment: asg.into_matrix(),
    }
    .quantized())
}

pub fn index_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".index");
    PathBuf::from(s)
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Contract(format!("value {v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn encode_record(r: &TeacherRecord) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    put_u32(&mut b, r.id.len())?;
    b.extend_from_slice(r.id.as_bytes());
    put_u32(&mut b, r.height)?;
    put_u32(&mut b, r.width)?;
    for p in [&r.interest_l, &r.interest_r, &r.points_l, &r.points_r] {
        put_u32(&mut b, p.len())?;
        for ((x, y), s) in p.iter() {
            for v in [x, y, s] {
                b.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    let (rows, cols) = r.assignment.dims2();
    put_u32(&mut b, rows)?;
    put_u32(&mut b, cols)?;
    for &v in r.assignment.data() {
        b.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(b)
}

/// Writes records and their index. Returns the number written.
pub fn write_teacher_records(records: &[TeacherRecord], path: &Path) -> Result<usize> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut index = String::from("# id offset rows cols\n");
    let mut header = Vec::with_capacity(HEADER_LEN as usize);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&[DTYPE_F32, LITTLE_ENDIAN, 0, 0]);
    put_u32(&mut header, records.len())?;
    out.write_all(&header)?;
    let mut offset = HEADER_LEN;
    for r in records {
        r.validate()?;
        let bytes = encode_record(r)?;
        let (rows, cols) = r.assignment.dims2();
        index.push_str(&format!("{} {offset} {rows} {cols}\n", r.id));
        out.write_all(&bytes)?;
        offset += bytes.len() as u64;
    }
    out.flush()?;
    std::fs::write(index_path(path), index)?;
    Ok(records.len())
}

/// Builds a record for every `(id, sample)` and writes them to `path`.
pub fn export_teacher_records(dataset: &[(String, StereoSample)], cfg: &TeacherConfig, path: &Path) -> Result<usize> {
    let records = dataset
        .iter()
        .map(|(id, s)| build_record(id, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    write_teacher_records(&records, path)
}

/// Streaming reader over a teacher file.
pub struct TeacherReader {
    input: BufReader<File>,
    path: PathBuf,
    remaining: usize,
    offset: u64,
}

impl TeacherReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut header = [0u8; HEADER_LEN as usize];
        input
            .read_exact(&mut header)
            .map_err(|_| Error::format(path, "truncated header"))?;
        if &header[..8] != MAGIC {
            return Err(Error::format(path, "not a teacher record file"));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        if header[12] != DTYPE_F32 || header[13] != LITTLE_ENDIAN {
            return Err(Error::format(path, "only little-endian float32 payloads are supported"));
        }
        let count = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
        Ok(Self {
            input,
            path: path.to_path_buf(),
            remaining: count,
            offset: HEADER_LEN,
        })
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    /// Byte offset of the next record.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn u32(&mut self) -> Result<usize> {
        let mut b = [0u8; 4];
        self.input
            .read_exact(&mut b)
            .map_err(|_| Error::format(&self.path, "unexpected end of file"))?;
        self.offset += 4;
        Ok(u32::from_le_bytes(b) as usize)
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f64>> {
        let mut b = vec![0u8; count * 4];
        self.input
            .read_exact(&mut b)
            .map_err(|_| Error::format(&self.path, "unexpected end of file"))?;
        self.offset += b.len() as u64;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn read_record(&mut self) -> Result<TeacherRecord> {
        let id_len = self.u32()?;
        let mut id = vec![0u8; id_len];
        self.input
            .read_exact(&mut id)
            .map_err(|_| Error::format(&self.path, "unexpected end of file"))?;
        self.offset += id_len as u64;
        let id = String::from_utf8(id).map_err(|_| Error::format(&self.path, "record id is not UTF-8"))?;
        let height = self.u32()?;
        let width = self.u32()?;
        let mut sets = Vec::with_capacity(4);
        for _ in 0..4 {
            let n = self.u32()?;
            let raw = self.f32s(n * 3)?;
            let coords = raw.chunks_exact(3).map(|c| (c[0], c[1])).collect();
            let scores = raw
                .chunks_exact(3)
                .map(|c| clamp_unit(c[2], &id))
                .collect::<Result<Vec<_>>>()?;
            sets.push(PointSet::new(coords, scores)?);
        }
        let rows = self.u32()?;
        let cols = self.u32()?;
        let data = self
            .f32s(rows * cols)?
            .into_iter()
            .map(|v| clamp_unit(v, &id))
            .collect::<Result<Vec<_>>>()?;
        let mut sets = sets.into_iter();
        let record = TeacherRecord {
            id,
            height,
            width,
            interest_l: sets.next().unwrap(),
            interest_r: sets.next().unwrap(),
            points_l: sets.next().unwrap(),
            points_r: sets.next().unwrap(),
            assignment: Tensor::new(&[rows, cols], data),
        };
        record.validate()?;
        Ok(record)
    }
}

fn clamp_unit(v: f64, id: &str) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        return Ok(v);
    }
    if v.is_finite() && v >= -CLAMP_TOLERANCE && v <= 1.0 + CLAMP_TOLERANCE {
        log::warn!("teacher record `{id}`: clamping {v:e} into [0, 1]");
        return Ok(v.clamp(0.0, 1.0));
    }
    Err(Error::TeacherRecord {
        sample: id.to_string(),
        msg: format!("value {v} outside [0, 1]"),
    })
}

impl Iterator for TeacherReader {
    type Item = Result<TeacherRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let r = self.read_record();
        if r.is_err() {
            self.remaining = 0;
        }
        Some(r)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub id: String,
    pub offset: u64,
    pub rows: usize,
    pub cols: usize,
}

pub fn read_index(path: &Path) -> Result<Vec<IndexEntry>> {
    let file = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for (no, line) in file.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::format(path, format!("line {}: expected `id offset rows cols`", no + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        entries.push(IndexEntry {
            id: f[0].to_string(),
            offset: f[1].parse().map_err(|_| bad())?,
            rows: f[2].parse().map_err(|_| bad())?,
            cols: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(entries)
}

/// Loads every record, checks it against the index and, when given, against
/// the dataset's sample ids in order.
pub fn load_teacher_records(path: &Path, expected_ids: Option<&[String]>) -> Result<Vec<TeacherRecord>> {
    let index = read_index(&index_path(path))?;
    let mut reader = TeacherReader::open(path)?;
    if reader.remaining() != index.len() {
        return Err(Error::format(
            path,
            format!("{} records but the index lists {}", reader.remaining(), index.len()),
        ));
    }
    let mut records = Vec::with_capacity(index.len());
    for entry in &index {
        let offset = reader.offset();
        let r = reader.next().expect("count checked above")?;
        if r.id != entry.id || offset != entry.offset || r.assignment.shape() != [entry.rows, entry.cols] {
            return Err(Error::TeacherRecord {
                sample: r.id,
                msg: format!("does not match index entry `{}` at offset {}", entry.id, entry.offset),
            });
        }
        records.push(r);
    }
    if let Some(ids) = expected_ids {
        check_alignment(&records, ids)?;
    }
    Ok(records)
}

/// Errors unless record ids equal `ids` in order.
pub fn check_alignment(records: &[TeacherRecord], ids: &[String]) -> Result<()> {
    for (k, id) in ids.iter().enumerate() {
        match records.get(k) {
            Some(r) if &r.id == id => {}
            Some(r) => {
                return Err(Error::TeacherRecord {
                    sample: r.id.clone(),
                    msg: format!("expected dataset sample `{id}` at position {k}"),
                })
            }
            None => {
                return Err(Error::TeacherRecord {
                    sample: id.clone(),
                    msg: "missing from the teacher file".into(),
                })
            }
        }
    }
    if records.len() > ids.len() {
        return Err(Error::TeacherRecord {
            sample: records[ids.len()].id.clone(),
            msg: "not present in the dataset".into(),
        });
    }
    Ok(())
}
