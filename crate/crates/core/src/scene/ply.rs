//! Standard 3DGS PLY files (ASCII or binary little-endian).
//!
//! Only the DC spherical-harmonic term is kept; `f_rest_*` and any other
//! unknown vertex properties are skipped.

use super::{Gaussian, GaussianScene, MAX_OPACITY, SH_C0};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
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

#[derive(Clone, Debug)]
enum PropKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn perr(offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse { offset: offset as u64, msg: msg.into() }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0usize;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| perr(pos, "header is missing end_header"))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| perr(pos, "header line is not UTF-8"))?
            .trim_end_matches('\r');
        let line_start = pos;
        pos += nl + 1;
        let mut toks = line.split_whitespace();
        let Some(key) = toks.next() else { continue };
        if first {
            if key != "ply" {
                return Err(perr(0, "missing ply magic"));
            }
            first = false;
            continue;
        }
        match key {
            "format" => {
                encoding = Some(match toks.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLe,
                    Some(other) => return Err(perr(line_start, format!("unsupported format {other}"))),
                    None => return Err(perr(line_start, "format line without encoding")),
                });
            }
            "comment" | "obj_info" => {}
            "element" => {
                let name = toks.next().ok_or_else(|| perr(line_start, "element without name"))?;
                let count = toks
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| perr(line_start, "element without valid count"))?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| perr(line_start, "property before any element"))?;
                let ty = toks.next().ok_or_else(|| perr(line_start, "property without type"))?;
                let kind = if ty == "list" {
                    let count = toks.next().and_then(Scalar::parse);
                    let item = toks.next().and_then(Scalar::parse);
                    match (count, item) {
                        (Some(count), Some(item)) => PropKind::List { count, item },
                        _ => return Err(perr(line_start, "bad list property types")),
                    }
                } else {
                    PropKind::Scalar(
                        Scalar::parse(ty).ok_or_else(|| perr(line_start, format!("unknown type {ty}")))?,
                    )
                };
                let name = toks.next().ok_or_else(|| perr(line_start, "property without name"))?;
                el.props.push(Property { name: name.to_string(), kind });
            }
            "end_header" => break,
            other => return Err(perr(line_start, format!("unexpected header keyword {other}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| perr(0, "missing format line"))?;
    Ok(Header { encoding, elements, body_offset: pos })
}

/// Yields the property values of each element row in turn.
trait RowSource {
    fn row(&mut self, el: &Element, out: &mut Vec<f64>) -> Result<()>;
}

struct BinarySource<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BinarySource<'_> {
    fn scalar(&mut self, s: Scalar) -> Result<f64> {
        let n = s.size();
        if self.pos + n > self.bytes.len() {
            return Err(perr(self.pos, "truncated binary body"));
        }
        let v = s.read_le(&self.bytes[self.pos..self.pos + n]);
        self.pos += n;
        Ok(v)
    }
}

impl RowSource for BinarySource<'_> {
    fn row(&mut self, el: &Element, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for p in &el.props {
            match p.kind {
                PropKind::Scalar(s) => out.push(self.scalar(s)?),
                PropKind::List { count, item } => {
                    let n = self.scalar(count)? as usize;
                    for _ in 0..n {
                        self.scalar(item)?;
                    }
                    out.push(f64::NAN);
                }
            }
        }
        Ok(())
    }
}

struct AsciiSource<'a> {
    text: &'a str,
    base: usize,
    pos: usize,
}

impl AsciiSource<'_> {
    fn token(&mut self) -> Result<f64> {
        let rest = &self.text[self.pos..];
        let start = rest.len() - rest.trim_start().len();
        let rest = &rest[start..];
        let len = rest.find(char::is_whitespace).unwrap_or(rest.len());
        if len == 0 {
            return Err(perr(self.base + self.pos, "unexpected end of ASCII body"));
        }
        let tok = &rest[..len];
        let at = self.base + self.pos + start;
        self.pos += start + len;
        tok.parse::<f64>().map_err(|_| perr(at, format!("bad number {tok:?}")))
    }
}

impl RowSource for AsciiSource<'_> {
    fn row(&mut self, el: &Element, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for p in &el.props {
            match p.kind {
                PropKind::Scalar(_) => out.push(self.token()?),
                PropKind::List { .. } => {
                    let n = self.token()? as usize;
                    for _ in 0..n {
                        self.token()?;
                    }
                    out.push(f64::NAN);
                }
            }
        }
        Ok(())
    }
}

struct VertexLayout {
    xyz: [usize; 3],
    scale: [usize; 3],
    rot: [usize; 4],
    opacity: usize,
    color: ColorSource,
}

enum ColorSource {
    ShDc([usize; 3]),
    Rgb8([usize; 3]),
}

fn vertex_layout(el: &Element) -> Result<VertexLayout> {
    let find = |name: &str| el.props.iter().position(|p| p.name == name);
    let need = |name: &str| {
        find(name).ok_or_else(|| perr(0, format!("vertex element lacks property {name}")))
    };
    let color = match (find("f_dc_0"), find("f_dc_1"), find("f_dc_2")) {
        (Some(r), Some(g), Some(b)) => ColorSource::ShDc([r, g, b]),
        _ => ColorSource::Rgb8([need("red")?, need("green")?, need("blue")?]),
    };
    Ok(VertexLayout {
        xyz: [need("x")?, need("y")?, need("z")?],
        scale: [need("scale_0")?, need("scale_1")?, need("scale_2")?],
        rot: [need("rot_0")?, need("rot_1")?, need("rot_2")?, need("rot_3")?],
        opacity: need("opacity")?,
        color,
    })
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn decode_vertex(i: usize, v: &[f64], l: &VertexLayout) -> Result<Gaussian> {
    let bad = |msg: &str| Error::Validation { index: i, msg: msg.to_string() };
    let all = l.xyz.iter().chain(&l.scale).chain(&l.rot).chain(std::iter::once(&l.opacity));
    if all.clone().any(|&k| !v[k].is_finite()) {
        return Err(bad("non-finite geometry value"));
    }
    let mean = l.xyz.map(|k| v[k] as f32);
    let scale = l.scale.map(|k| v[k].exp() as f32);
    if scale.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(bad("scale overflows or underflows"));
    }
    let q = l.rot.map(|k| v[k]);
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-12 {
        return Err(bad("zero-norm rotation"));
    }
    let rotation = q.map(|x| (x / n) as f32);
    let opacity = (logistic(v[l.opacity]) as f32).min(MAX_OPACITY);
    let color = match &l.color {
        ColorSource::ShDc(k) => k.map(|k| (0.5 + SH_C0 * v[k]).clamp(0.0, 1.0) as f32),
        ColorSource::Rgb8(k) => k.map(|k| (v[k] / 255.0).clamp(0.0, 1.0) as f32),
    };
    if color.iter().any(|c| !c.is_finite()) {
        return Err(bad("non-finite color"));
    }
    Ok(Gaussian { mean, scale, rotation, opacity, color })
}

pub fn read_ply(bytes: &[u8], name: String) -> Result<GaussianScene> {
    let header = parse_header(bytes)?;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| perr(0, "no vertex element"))?;
    let layout = vertex_layout(&header.elements[vertex_idx])?;

    let body = &bytes[header.body_offset..];
    let mut source: Box<dyn RowSource> = match header.encoding {
        Encoding::BinaryLe => Box::new(BinarySource { bytes, pos: header.body_offset }),
        Encoding::Ascii => Box::new(AsciiSource {
            text: std::str::from_utf8(body).map_err(|e| {
                perr(header.body_offset + e.valid_up_to(), "ASCII body is not UTF-8")
            })?,
            base: header.body_offset,
            pos: 0,
        }),
    };

    let mut row = Vec::new();
    for el in &header.elements[..vertex_idx] {
        for _ in 0..el.count {
            source.row(el, &mut row)?;
        }
    }
    let el = &header.elements[vertex_idx];
    let mut gaussians = Vec::with_capacity(el.count);
    for i in 0..el.count {
        source.row(el, &mut row)?;
        gaussians.push(decode_vertex(i, &row, &layout)?);
    }
    GaussianScene::from_validated(name, gaussians)
}

const PLY_PROPS: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

/// Encodes a binary little-endian 3DGS PLY. With `styled` set and a
/// populated `styled_color` channel, the stylized colors are written as the
/// DC term so stock splat viewers show the stylized scene.
pub fn write_ply(scene: &GaussianScene, styled: bool) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", scene.len()).as_bytes());
    for p in PLY_PROPS {
        out.extend_from_slice(format!("property float {p}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    let colors = match (styled, scene.styled_color()) {
        (true, Some(c)) => c,
        _ => scene.colors(),
    };
    for (i, g) in scene.gaussians().enumerate() {
        let o = (g.opacity as f64).clamp(1e-7, MAX_OPACITY as f64);
        let mut vals = [0f32; 14];
        vals[..3].copy_from_slice(&g.mean);
        for c in 0..3 {
            vals[3 + c] = ((colors[i][c] as f64 - 0.5) / SH_C0) as f32;
            vals[7 + c] = (g.scale[c] as f64).ln() as f32;
        }
        vals[6] = (o / (1.0 - o)).ln() as f32;
        vals[10..].copy_from_slice(&g.rotation);
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}
