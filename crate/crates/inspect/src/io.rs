//! PLY and XYZ point-cloud files.
//!
//! PLY support covers what scanners export for point clouds: a `vertex`
//! element with `x`, `y`, `z` as float or double and optional `red`,
//! `green`, `blue` as uchar, in ASCII or binary little-endian. Other vertex
//! properties are skipped, other elements are skipped with a warning.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use scaffold_core::{Point3, PointCloud, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Byte(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Byte(n) => write!(f, "byte {n}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {location}: {message}", path.display())]
    Parse {
        path: PathBuf,
        location: Location,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Cloud { path: PathBuf, source: scaffold_core::Error },
}

/// Input format; `Auto` goes by extension, then by content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum CloudFormat {
    #[default]
    Auto,
    Ply,
    Xyz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SaveFormat {
    PlyAscii,
    #[default]
    PlyBinary,
    Xyz,
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud, IoError> {
    let bytes = fs::read(path).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })?;
    let format = match format {
        CloudFormat::Auto => detect_format(path, &bytes),
        f => f,
    };
    let parsed = match format {
        CloudFormat::Ply => parse_ply(&bytes),
        _ => parse_xyz(&bytes),
    };
    let (points, colors) = parsed.map_err(|(location, message)| IoError::Parse {
        path: path.to_owned(),
        location,
        message,
    })?;
    PointCloud::new(points, colors).map_err(|e| IoError::Cloud {
        path: path.to_owned(),
        source: e,
    })
}

fn detect_format(path: &Path, bytes: &[u8]) -> CloudFormat {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ply") => CloudFormat::Ply,
        Some("xyz" | "txt" | "pts") => CloudFormat::Xyz,
        _ if bytes.starts_with(b"ply\n") || bytes.starts_with(b"ply\r\n") => CloudFormat::Ply,
        _ => CloudFormat::Xyz,
    }
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: SaveFormat) -> Result<(), IoError> {
    let wrap = |source| IoError::Io {
        path: path.to_owned(),
        source,
    };
    let file = fs::File::create(path).map_err(wrap)?;
    let mut w = BufWriter::new(file);
    match format {
        SaveFormat::Xyz => {
            if cloud.colors().is_some() {
                log::warn!("{}: xyz has no colors, dropping them", path.display());
            }
            write_xyz(cloud, &mut w)
        }
        SaveFormat::PlyAscii => write_ply(cloud, &mut w, false),
        SaveFormat::PlyBinary => write_ply(cloud, &mut w, true),
    }
    .and_then(|_| w.flush())
    .map_err(wrap)
}

fn write_xyz(cloud: &PointCloud, w: &mut impl Write) -> std::io::Result<()> {
    for p in cloud.points() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

fn write_ply(cloud: &PointCloud, w: &mut impl Write, binary: bool) -> std::io::Result<()> {
    let format = if binary { "binary_little_endian" } else { "ascii" };
    write!(w, "ply\nformat {format} 1.0\nelement vertex {}\n", cloud.len())?;
    w.write_all(b"property double x\nproperty double y\nproperty double z\n")?;
    if cloud.colors().is_some() {
        w.write_all(b"property uchar red\nproperty uchar green\nproperty uchar blue\n")?;
    }
    w.write_all(b"end_header\n")?;
    let colors = cloud.colors();
    for (i, p) in cloud.points().iter().enumerate() {
        if binary {
            for v in [p.x, p.y, p.z] {
                w.write_all(&v.to_le_bytes())?;
            }
            if let Some(c) = colors {
                w.write_all(&c[i])?;
            }
        } else {
            // shortest round-trip formatting, so ASCII files reload exactly
            write!(w, "{} {} {}", p.x, p.y, p.z)?;
            if let Some(c) = colors {
                write!(w, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
            }
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

type ParseResult<T> = Result<T, (Location, String)>;

fn parse_xyz(bytes: &[u8]) -> ParseResult<(Vec<Point3>, Option<Vec<Rgb>>)> {
    let text = std::str::from_utf8(bytes).map_err(|e| (Location::Byte(e.valid_up_to()), "not valid UTF-8".to_owned()))?;
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = Location::Line(n + 1);
        let mut fields = line.split_whitespace();
        let mut coord = [0.0; 3];
        for (c, name) in coord.iter_mut().zip(["x", "y", "z"]) {
            let token = fields.next().ok_or((loc, format!("missing {name} coordinate")))?;
            *c = parse_finite(token).map_err(|m| (loc, m))?;
        }
        points.push(Point3::new(coord[0], coord[1], coord[2]));
    }
    Ok((points, None))
}

fn parse_finite(token: &str) -> Result<f64, String> {
    let v = f64::from_str(token).map_err(|_| format!("`{token}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite coordinate `{token}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

// Where x, y, z and the colors sit among the vertex properties.
struct VertexLayout {
    coords: [usize; 3],
    colors: Option<[usize; 3]>,
}

fn vertex_layout(e: &Element, header_line: usize) -> ParseResult<VertexLayout> {
    let unsupported = |m: String| (Location::Line(header_line), m);
    let mut slots: Vec<(String, Scalar)> = Vec::new();
    for p in &e.properties {
        match p {
            Property::Scalar { name, ty } => slots.push((name.clone(), *ty)),
            Property::List { name, .. } => return Err(unsupported(format!("unsupported list property `{name}` on vertex"))),
        }
    }
    let find = |name: &str| slots.iter().position(|(n, _)| n == name);
    let mut coords = [0; 3];
    for (c, name) in coords.iter_mut().zip(["x", "y", "z"]) {
        *c = find(name).ok_or_else(|| unsupported(format!("vertex has no `{name}` property")))?;
        if !matches!(slots[*c].1, Scalar::F32 | Scalar::F64) {
            return Err(unsupported(format!("vertex `{name}` must be float or double")));
        }
    }
    let colors = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => {
            for i in [r, g, b] {
                if slots[i].1 != Scalar::U8 {
                    return Err(unsupported(format!("color `{}` must be uchar", slots[i].0)));
                }
            }
            Some([r, g, b])
        }
        (None, None, None) => None,
        _ => return Err(unsupported("vertex colors need all of red, green and blue".to_owned())),
    };
    Ok(VertexLayout { coords, colors })
}

struct Header {
    binary: bool,
    elements: Vec<Element>,
    /// Header line of the vertex element declaration, for error messages.
    vertex_line: usize,
    body_offset: usize,
    body_line: usize,
}

fn parse_header(bytes: &[u8]) -> ParseResult<Header> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut vertex_line = 0;
    loop {
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or((Location::Byte(offset), "header ended without `end_header`".to_owned()))?;
        line_no += 1;
        let loc = Location::Line(line_no);
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| (loc, "header is not valid UTF-8".to_owned()))?
            .trim_end_matches('\r')
            .trim();
        offset += end + 1;
        if line_no == 1 {
            if line != "ply" {
                return Err((loc, "missing `ply` magic".to_owned()));
            }
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", "1.0"] => binary = Some(false),
            ["format", "binary_little_endian", "1.0"] => binary = Some(true),
            ["format", other, ..] => return Err((loc, format!("unsupported format `{other}`"))),
            ["element", name, count] => {
                let count = count.parse().map_err(|_| (loc, format!("bad element count `{count}`")))?;
                if *name == "vertex" {
                    vertex_line = line_no;
                }
                elements.push(Element {
                    name: (*name).to_owned(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count, item, name] => {
                let e = elements.last_mut().ok_or((loc, "property before any element".to_owned()))?;
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err((loc, "unknown list property type".to_owned()));
                };
                e.properties.push(Property::List {
                    name: (*name).to_owned(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let e = elements.last_mut().ok_or((loc, "property before any element".to_owned()))?;
                let ty = Scalar::parse(ty).ok_or((loc, format!("unknown property type `{ty}`")))?;
                e.properties.push(Property::Scalar {
                    name: (*name).to_owned(),
                    ty,
                });
            }
            ["end_header"] => break,
            _ => return Err((loc, format!("unrecognised header line `{line}`"))),
        }
    }
    let binary = binary.ok_or((Location::Line(2), "missing format line".to_owned()))?;
    if !elements.iter().any(|e| e.name == "vertex") {
        return Err((Location::Line(line_no), "no vertex element".to_owned()));
    }
    Ok(Header {
        binary,
        elements,
        vertex_line,
        body_offset: offset,
        body_line: line_no + 1,
    })
}

fn parse_ply(bytes: &[u8]) -> ParseResult<(Vec<Point3>, Option<Vec<Rgb>>)> {
    let header = parse_header(bytes)?;
    for e in header.elements.iter().filter(|e| e.name != "vertex") {
        log::warn!("skipping PLY element `{}` ({} items)", e.name, e.count);
    }
    if header.binary {
        parse_binary_body(bytes, &header)
    } else {
        parse_ascii_body(bytes, &header)
    }
}

fn parse_binary_body(bytes: &[u8], header: &Header) -> ParseResult<(Vec<Point3>, Option<Vec<Rgb>>)> {
    let mut offset = header.body_offset;
    let truncated = |at: usize| (Location::Byte(at), "file ends inside the element data".to_owned());
    let mut points = Vec::new();
    let mut colors = None;
    for e in &header.elements {
        if e.name != "vertex" {
            for _ in 0..e.count {
                for p in &e.properties {
                    match p {
                        Property::Scalar { ty, .. } => offset += ty.size(),
                        Property::List { count, item, .. } => {
                            let b = bytes.get(offset..offset + count.size()).ok_or_else(|| truncated(offset))?;
                            let n = count.read_le(b) as usize;
                            offset += count.size() + n * item.size();
                        }
                    }
                }
            }
            continue;
        }
        let layout = vertex_layout(e, header.vertex_line)?;
        let mut field_offsets = Vec::new();
        let mut types = Vec::new();
        let mut stride = 0;
        for p in &e.properties {
            if let Property::Scalar { ty, .. } = p {
                field_offsets.push(stride);
                types.push(*ty);
                stride += ty.size();
            }
        }
        points.reserve(e.count);
        let mut rgb = layout.colors.map(|_| Vec::with_capacity(e.count));
        for _ in 0..e.count {
            let record = bytes.get(offset..offset + stride).ok_or_else(|| truncated(offset))?;
            let mut c = [0.0; 3];
            for (v, &k) in c.iter_mut().zip(&layout.coords) {
                *v = types[k].read_le(&record[field_offsets[k]..]);
                if !v.is_finite() {
                    return Err((Location::Byte(offset + field_offsets[k]), "non-finite coordinate".to_owned()));
                }
            }
            points.push(Point3::new(c[0], c[1], c[2]));
            if let (Some(rgb), Some(idx)) = (rgb.as_mut(), layout.colors) {
                rgb.push(idx.map(|k| record[field_offsets[k]]));
            }
            offset += stride;
        }
        colors = rgb;
    }
    Ok((points, colors))
}

fn parse_ascii_body(bytes: &[u8], header: &Header) -> ParseResult<(Vec<Point3>, Option<Vec<Rgb>>)> {
    let body = std::str::from_utf8(&bytes[header.body_offset..]).map_err(|e| {
        (
            Location::Byte(header.body_offset + e.valid_up_to()),
            "ASCII body is not valid UTF-8".to_owned(),
        )
    })?;
    let mut lines = body.lines().enumerate().map(|(i, l)| (header.body_line + i, l));
    let mut points = Vec::new();
    let mut colors = None;
    for e in &header.elements {
        if e.name != "vertex" {
            for _ in 0..e.count {
                lines
                    .next()
                    .ok_or((Location::Line(header.body_line), format!("file ends inside element `{}`", e.name)))?;
            }
            continue;
        }
        let layout = vertex_layout(e, header.vertex_line)?;
        let width = e.properties.len();
        points.reserve(e.count);
        let mut rgb = layout.colors.map(|_| Vec::with_capacity(e.count));
        let mut fields: Vec<&str> = Vec::with_capacity(width);
        for _ in 0..e.count {
            let (n, line) = lines.next().ok_or((Location::Line(header.body_line), "file ends inside the vertex data".to_owned()))?;
            let loc = Location::Line(n);
            fields.clear();
            fields.extend(line.split_whitespace());
            if fields.len() < width {
                return Err((loc, format!("expected {width} values, found {}", fields.len())));
            }
            let mut c = [0.0; 3];
            for (v, &k) in c.iter_mut().zip(&layout.coords) {
                *v = parse_finite(fields[k]).map_err(|m| (loc, m))?;
            }
            points.push(Point3::new(c[0], c[1], c[2]));
            if let (Some(rgb), Some(idx)) = (rgb.as_mut(), layout.colors) {
                let mut px = [0u8; 3];
                for (ch, &k) in px.iter_mut().zip(&idx) {
                    *ch = fields[k].parse().map_err(|_| (loc, format!("`{}` is not a uchar color", fields[k])))?;
                }
                rgb.push(px);
            }
        }
        colors = rgb;
    }
    Ok((points, colors))
}
