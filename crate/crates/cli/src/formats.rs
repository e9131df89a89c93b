//! Point clouds (CSV and VFPC binary), flow CSV, dynamic masks and external
//! pillar features.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use pillarvote_core::{CellIndex, FeatureOverrides, FlowField, Point3, PointCloud, Vec3};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Csv,
    Vfpc,
}

impl CloudFormat {
    /// From the file extension; anything but `.vfpc` is read as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("vfpc") => CloudFormat::Vfpc,
            _ => CloudFormat::Csv,
        }
    }
}

/// Shortest of the value rounded to 6 decimals: `0.6`, `-0.4`, `0`.
pub fn fmt6(v: f64) -> String {
    let mut s = format!("{v:.6}");
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(t);
    }
    if s == "-0" {
        s.remove(0);
    }
    s
}

pub fn load_point_cloud(path: &Path, format: CloudFormat) -> CliResult<PointCloud> {
    match format {
        CloudFormat::Csv => load_csv_cloud(path),
        CloudFormat::Vfpc => load_vfpc(path),
    }
}

pub fn save_point_cloud(path: &Path, cloud: &PointCloud, format: CloudFormat) -> CliResult<()> {
    match format {
        CloudFormat::Csv => save_csv_cloud(path, cloud),
        CloudFormat::Vfpc => save_vfpc(path, cloud),
    }
}

const COLUMNS: [&str; 9] = ["x", "y", "z", "fx", "fy", "fz", "class", "dynamic", "foreground"];

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn header_of(path: &Path, rdr: &mut csv::Reader<File>) -> CliResult<Vec<String>> {
    let h = rdr.headers().map_err(|e| CliError::at(path, e))?;
    Ok(h.iter().map(str::to_string).collect())
}

fn parse_f64(path: &Path, line: u64, col: &str, s: &str) -> CliResult<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| CliError::at(path, format!("line {line}: column {col}: not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(CliError::at(path, format!("line {line}: column {col}: non-finite value {s:?}")));
    }
    Ok(v)
}

fn parse_bool(path: &Path, line: u64, col: &str, s: &str) -> CliResult<bool> {
    match s {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        _ => Err(CliError::at(path, format!("line {line}: column {col}: expected 0 or 1, got {s:?}"))),
    }
}

fn records(path: &Path, rdr: &mut csv::Reader<File>, width: usize) -> CliResult<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::at(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(CliError::at(
                path,
                format!("line {line}: expected {width} fields, found {}", rec.len()),
            ));
        }
        out.push((line, rec));
    }
    Ok(out)
}

fn load_csv_cloud(path: &Path) -> CliResult<PointCloud> {
    let mut rdr = reader(path)?;
    let header = header_of(path, &mut rdr)?;
    let mut col = [None; 9];
    for (i, name) in header.iter().enumerate() {
        let Some(j) = COLUMNS.iter().position(|c| c == name) else {
            return Err(CliError::at(path, format!("unknown column {name:?}")));
        };
        if col[j].replace(i).is_some() {
            return Err(CliError::at(path, format!("duplicate column {name:?}")));
        }
    }
    for (j, name) in COLUMNS.iter().enumerate().take(3) {
        if col[j].is_none() {
            return Err(CliError::at(path, format!("missing column {name:?}")));
        }
    }
    let flows_present = col[3..6].iter().filter(|c| c.is_some()).count();
    if flows_present != 0 && flows_present != 3 {
        return Err(CliError::at(path, "flow needs all of fx, fy, fz"));
    }

    let rows = records(path, &mut rdr, header.len())?;
    let mut points = Vec::with_capacity(rows.len());
    let mut flow = Vec::new();
    let mut class = Vec::new();
    let mut dynamic = Vec::new();
    let mut foreground = Vec::new();
    for (line, rec) in &rows {
        let f = |j: usize| parse_f64(path, *line, COLUMNS[j], &rec[col[j].unwrap()]);
        points.push([f(0)?, f(1)?, f(2)?]);
        if flows_present == 3 {
            flow.push([f(3)?, f(4)?, f(5)?]);
        }
        if let Some(c) = col[6] {
            let s = &rec[c];
            class.push(s.parse::<u16>().map_err(|_| {
                CliError::at(path, format!("line {line}: column class: expected 0..65535, got {s:?}"))
            })?);
        }
        if let Some(c) = col[7] {
            dynamic.push(parse_bool(path, *line, "dynamic", &rec[c])?);
        }
        if let Some(c) = col[8] {
            foreground.push(parse_bool(path, *line, "foreground", &rec[c])?);
        }
    }
    let mut cloud = PointCloud::new(points)?;
    if flows_present == 3 {
        cloud = cloud.with_gt_flow(flow)?;
    }
    if col[6].is_some() {
        cloud = cloud.with_class_id(class)?;
    }
    if col[7].is_some() {
        cloud = cloud.with_dynamic(dynamic)?;
    }
    if col[8].is_some() {
        cloud = cloud.with_foreground(foreground)?;
    }
    Ok(cloud)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn save_csv_cloud(path: &Path, cloud: &PointCloud) -> CliResult<()> {
    let mut w = create(path)?;
    let mut header = vec!["x", "y", "z"];
    if cloud.gt_flow().is_some() {
        header.extend(["fx", "fy", "fz"]);
    }
    if cloud.class_id().is_some() {
        header.push("class");
    }
    if cloud.is_dynamic().is_some() {
        header.push("dynamic");
    }
    if cloud.is_foreground().is_some() {
        header.push("foreground");
    }
    let mut buf = header.join(",");
    buf.push('\n');
    for (i, p) in cloud.points().iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| fmt6(*v)).collect();
        if let Some(f) = cloud.gt_flow() {
            row.extend(f[i].iter().map(|v| fmt6(*v)));
        }
        if let Some(c) = cloud.class_id() {
            row.push(c[i].to_string());
        }
        for mask in [cloud.is_dynamic(), cloud.is_foreground()].into_iter().flatten() {
            row.push(u8::from(mask[i]).to_string());
        }
        buf.push_str(&row.join(","));
        buf.push('\n');
    }
    w.write_all(buf.as_bytes()).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

const MAGIC: &[u8; 4] = b"VFPC";
const VERSION: u32 = 1;
const HAS_FLOW: u32 = 1;
const HAS_CLASS: u32 = 2;
const HAS_DYNAMIC: u32 = 4;
const HAS_FOREGROUND: u32 = 8;

/// Encodes a cloud as VFPC. Coordinates and flows are narrowed to `f32`.
pub fn encode_vfpc(cloud: &PointCloud) -> Vec<u8> {
    let mut mask = 0;
    if cloud.gt_flow().is_some() {
        mask |= HAS_FLOW;
    }
    if cloud.class_id().is_some() {
        mask |= HAS_CLASS;
    }
    if cloud.is_dynamic().is_some() {
        mask |= HAS_DYNAMIC;
    }
    if cloud.is_foreground().is_some() {
        mask |= HAS_FOREGROUND;
    }
    let mut out = Vec::with_capacity(20 + cloud.len() * 27);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&mask.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    let mut vec3s = |vs: &[[f64; 3]]| {
        for v in vs {
            for c in v {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
    };
    vec3s(cloud.points());
    if let Some(f) = cloud.gt_flow() {
        vec3s(f);
    }
    if let Some(c) = cloud.class_id() {
        for v in c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for mask in [cloud.is_dynamic(), cloud.is_foreground()].into_iter().flatten() {
        out.extend(mask.iter().map(|b| u8::from(*b)));
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let Some(end) = end else {
            return Err(format!("truncated in {what} at byte {}", self.pos));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn vec3s(&mut self, n: usize, what: &str) -> Result<Vec<[f64; 3]>, String> {
        let raw = self.take(n.checked_mul(12).ok_or("point count overflows")?, what)?;
        let mut out = Vec::with_capacity(n);
        for (i, chunk) in raw.chunks_exact(12).enumerate() {
            let mut v = [0.0; 3];
            for (a, c) in chunk.chunks_exact(4).enumerate() {
                v[a] = f32::from_le_bytes(c.try_into().unwrap()) as f64;
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(format!("{what} of record {i} is not finite"));
            }
            out.push(v);
        }
        Ok(out)
    }

    fn bools(&mut self, n: usize, what: &str) -> Result<Vec<bool>, String> {
        self.take(n, what)?
            .iter()
            .enumerate()
            .map(|(i, b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(format!("{what} of record {i} is {b}, expected 0 or 1")),
            })
            .collect()
    }
}

pub fn decode_vfpc(bytes: &[u8]) -> Result<PointCloud, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err("bad magic, expected \"VFPC\"".into());
    }
    let version = u32::from_le_bytes(c.take(4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let mask = u32::from_le_bytes(c.take(4, "field mask")?.try_into().unwrap());
    if mask & !0xf != 0 {
        return Err(format!("unknown bits in field mask {mask:#x}"));
    }
    let n = u64::from_le_bytes(c.take(8, "point count")?.try_into().unwrap());
    let n = usize::try_from(n).map_err(|_| format!("point count {n} too large"))?;
    let points = c.vec3s(n, "coordinates")?;
    let flow = (mask & HAS_FLOW != 0).then(|| c.vec3s(n, "flow")).transpose()?;
    let class = if mask & HAS_CLASS != 0 {
        let raw = c.take(n.checked_mul(2).ok_or("point count overflows")?, "class")?;
        Some(raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect())
    } else {
        None
    };
    let dynamic = (mask & HAS_DYNAMIC != 0).then(|| c.bools(n, "dynamic")).transpose()?;
    let foreground = (mask & HAS_FOREGROUND != 0).then(|| c.bools(n, "foreground")).transpose()?;
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    let err = |e: pillarvote_core::Error| e.to_string();
    let mut cloud = PointCloud::new(points).map_err(err)?;
    if let Some(f) = flow {
        cloud = cloud.with_gt_flow(f).map_err(err)?;
    }
    if let Some(v) = class {
        cloud = cloud.with_class_id(v).map_err(err)?;
    }
    if let Some(v) = dynamic {
        cloud = cloud.with_dynamic(v).map_err(err)?;
    }
    if let Some(v) = foreground {
        cloud = cloud.with_foreground(v).map_err(err)?;
    }
    Ok(cloud)
}

fn load_vfpc(path: &Path) -> CliResult<PointCloud> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    decode_vfpc(&bytes).map_err(|m| CliError::at(path, m))
}

fn save_vfpc(path: &Path, cloud: &PointCloud) -> CliResult<()> {
    std::fs::write(path, encode_vfpc(cloud)).map_err(|e| CliError::io(path, e))
}

/// Flow CSV: header `dx,dy,dz`, one row per point.
pub fn save_flow(path: &Path, flow: &FlowField) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(flow_csv(flow).as_bytes()).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn flow_csv(flow: &FlowField) -> String {
    let mut s = String::with_capacity(16 + flow.len() * 24);
    s.push_str("dx,dy,dz\n");
    for f in flow.flows() {
        s.push_str(&format!("{},{},{}\n", fmt6(f[0]), fmt6(f[1]), fmt6(f[2])));
    }
    s
}

pub fn load_flow(path: &Path, frame_interval: f64) -> CliResult<FlowField> {
    let mut rdr = reader(path)?;
    let header = header_of(path, &mut rdr)?;
    if header != ["dx", "dy", "dz"] {
        return Err(CliError::at(path, format!("expected header dx,dy,dz, found {}", header.join(","))));
    }
    let flows: Vec<Vec3> = records(path, &mut rdr, 3)?
        .iter()
        .map(|(line, rec)| {
            Ok([
                parse_f64(path, *line, "dx", &rec[0])?,
                parse_f64(path, *line, "dy", &rec[1])?,
                parse_f64(path, *line, "dz", &rec[2])?,
            ])
        })
        .collect::<CliResult<_>>()?;
    Ok(FlowField::new(flows, frame_interval)?)
}

/// Mask CSV: header `dynamic`, one 0/1 row per point.
pub fn load_mask(path: &Path) -> CliResult<Vec<bool>> {
    let mut rdr = reader(path)?;
    let header = header_of(path, &mut rdr)?;
    if header != ["dynamic"] {
        return Err(CliError::at(path, format!("expected header dynamic, found {}", header.join(","))));
    }
    records(path, &mut rdr, 1)?
        .iter()
        .map(|(line, rec)| parse_bool(path, *line, "dynamic", &rec[0]))
        .collect()
}

pub fn save_mask(path: &Path, mask: &[bool]) -> CliResult<()> {
    let mut s = String::from("dynamic\n");
    for m in mask {
        s.push_str(if *m { "1\n" } else { "0\n" });
    }
    std::fs::write(path, s).map_err(|e| CliError::io(path, e))
}

/// Feature CSV: header `cell_index,f0,...,f{K-1}`, one row per pillar.
pub fn load_features(path: &Path) -> CliResult<FeatureOverrides> {
    let mut rdr = reader(path)?;
    let header = header_of(path, &mut rdr)?;
    let dim = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("cell_index".to_string())
        .chain((0..dim).map(|i| format!("f{i}")))
        .collect();
    if dim == 0 || header != expected {
        return Err(CliError::at(
            path,
            format!("expected header cell_index,f0,...,fK, found {}", header.join(",")),
        ));
    }
    let rows = records(path, &mut rdr, header.len())?
        .iter()
        .map(|(line, rec)| {
            let cell: CellIndex = rec[0].parse().map_err(|_| {
                CliError::at(path, format!("line {line}: column cell_index: not an index: {:?}", &rec[0]))
            })?;
            let values = (0..dim)
                .map(|i| parse_f64(path, *line, &header[i + 1], &rec[i + 1]))
                .collect::<CliResult<Vec<f64>>>()?;
            Ok((cell, values))
        })
        .collect::<CliResult<_>>()?;
    Ok(FeatureOverrides { dim, rows })
}

pub fn save_features(path: &Path, overrides: &FeatureOverrides) -> CliResult<()> {
    let mut s = String::from("cell_index");
    for i in 0..overrides.dim {
        s.push_str(&format!(",f{i}"));
    }
    s.push('\n');
    for (cell, row) in &overrides.rows {
        s.push_str(&cell.to_string());
        for v in row {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| CliError::io(path, e))
}

/// Rounds every coordinate through `f32`, as a VFPC round trip does.
pub fn narrow(points: &[Point3]) -> Vec<Point3> {
    points
        .iter()
        .map(|p| [p[0] as f32 as f64, p[1] as f32 as f64, p[2] as f32 as f64])
        .collect()
}
