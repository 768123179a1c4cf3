//! PLY (ascii, binary little-endian) and OBJ readers. Only positions and
//! faces are read; every other property is skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{PointCloud, TriangleMesh, Vec3};
use crate::{Error, Location, Result};

/// Loads a mesh, picking the parser from the file's magic bytes.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"ply") {
        parse_ply(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::format(Location::Byte(e.valid_up_to()), "OBJ file is not UTF-8"))?;
        parse_obj(text)
    }
}

/// Loads only the vertex positions of a PLY or OBJ file.
pub fn load_points(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (vertices, _) = if bytes.starts_with(b"ply") {
        read_ply(&bytes)?
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::format(Location::Byte(e.valid_up_to()), "OBJ file is not UTF-8"))?;
        read_obj(text)?
    };
    Ok(PointCloud::new(vertices))
}

/// Writes points as an ascii PLY with shortest round-trip float formatting.
pub fn write_ply_points(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(64 + cloud.len() * 48);
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in &cloud.points {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh> {
    let (vertices, faces) = read_ply(bytes)?;
    TriangleMesh::new(vertices, faces)
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let (vertices, faces) = read_obj(text)?;
    TriangleMesh::new(vertices, faces)
}

type RawMesh = (Vec<Vec3>, Vec<[usize; 3]>);

#[derive(Debug, Clone, Copy, PartialEq)]
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

    fn width(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLittleEndian,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    /// Byte offset of the first body byte.
    body: usize,
    /// Line number of the first body line.
    body_line: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(Location::Line(line_no + 1), "unterminated PLY header"))?;
        line_no += 1;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::format(Location::Line(line_no), "non-UTF-8 header line"))?
            .trim_end_matches('\r');
        pos += end + 1;
        let err = |msg: String| Error::format(Location::Line(line_no), msg);
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("ply") if line_no == 1 => {}
            _ if line_no == 1 => return Err(err("missing 'ply' magic".into())),
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                encoding = Some(match tok.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLittleEndian,
                    Some(other) => return Err(err(format!("unsupported PLY encoding '{other}'"))),
                    None => return Err(err("format line without encoding".into())),
                });
            }
            Some("element") => {
                let name = tok.next().ok_or_else(|| err("element without a name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err(format!("element '{name}' has no valid count")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err("property before any element".into()))?;
                let words: Vec<&str> = tok.collect();
                let scalar = |w: &str| {
                    Scalar::parse(w).ok_or_else(|| err(format!("unknown property type '{w}'")))
                };
                let property = match words.as_slice() {
                    ["list", count, item, name] => {
                        let count = scalar(count)?;
                        if !count.is_integer() {
                            return Err(err("list count type must be an integer".into()));
                        }
                        Property::List {
                            name: name.to_string(),
                            count,
                            item: scalar(item)?,
                        }
                    }
                    [ty, name] => Property::Scalar {
                        name: name.to_string(),
                        ty: scalar(ty)?,
                    },
                    _ => return Err(err(format!("malformed property line '{line}'"))),
                };
                element.properties.push(property);
            }
            Some("end_header") => break,
            Some(other) => return Err(err(format!("unexpected header keyword '{other}'"))),
        }
    }
    let encoding = encoding
        .ok_or_else(|| Error::format(Location::Line(line_no), "PLY header has no format line"))?;
    Ok(Header {
        encoding,
        elements,
        body: pos,
        body_line: line_no + 1,
    })
}

/// Source of scalar values for the PLY body, either text tokens or raw bytes.
trait BodyReader {
    fn next(&mut self, ty: Scalar) -> Result<f64>;
    fn location(&self) -> Location;
    /// Called between element instances (ascii files keep one per line).
    fn end_record(&mut self) -> Result<()> {
        Ok(())
    }
}

struct AsciiBody<'a> {
    lines: std::iter::Enumerate<std::str::Split<'a, char>>,
    first_line: usize,
    tokens: Vec<&'a str>,
    cursor: usize,
    line: usize,
}

impl<'a> AsciiBody<'a> {
    fn new(text: &'a str, first_line: usize) -> Self {
        AsciiBody {
            lines: text.split('\n').enumerate(),
            first_line,
            tokens: Vec::new(),
            cursor: 0,
            line: first_line,
        }
    }
}

impl BodyReader for AsciiBody<'_> {
    fn next(&mut self, ty: Scalar) -> Result<f64> {
        while self.cursor == self.tokens.len() {
            let (i, line) = self
                .lines
                .next()
                .ok_or_else(|| Error::format(Location::Line(self.line), "unexpected end of PLY body"))?;
            self.line = self.first_line + i;
            self.tokens = line.split_whitespace().collect();
            self.cursor = 0;
        }
        let tok = self.tokens[self.cursor];
        self.cursor += 1;
        let value: f64 = tok
            .parse()
            .map_err(|_| Error::format(Location::Line(self.line), format!("invalid number '{tok}'")))?;
        if ty.is_integer() && value.fract() != 0.0 {
            return Err(Error::format(
                Location::Line(self.line),
                format!("expected an integer, found '{tok}'"),
            ));
        }
        Ok(value)
    }

    fn location(&self) -> Location {
        Location::Line(self.line)
    }

    fn end_record(&mut self) -> Result<()> {
        if self.cursor != self.tokens.len() {
            return Err(Error::format(
                Location::Line(self.line),
                "extra values after the last declared property",
            ));
        }
        Ok(())
    }
}

struct BinaryBody<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BodyReader for BinaryBody<'_> {
    fn next(&mut self, ty: Scalar) -> Result<f64> {
        let w = ty.width();
        let raw = self
            .bytes
            .get(self.pos..self.pos + w)
            .ok_or_else(|| Error::format(Location::Byte(self.pos), "unexpected end of PLY body"))?;
        self.pos += w;
        Ok(match ty {
            Scalar::I8 => raw[0] as i8 as f64,
            Scalar::U8 => raw[0] as f64,
            Scalar::I16 => i16::from_le_bytes([raw[0], raw[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([raw[0], raw[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(raw.try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(raw.try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(raw.try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(raw.try_into().unwrap()),
        })
    }

    fn location(&self) -> Location {
        Location::Byte(self.pos)
    }
}

fn read_ply(bytes: &[u8]) -> Result<RawMesh> {
    let header = parse_header(bytes)?;
    let body = &bytes[header.body..];
    match header.encoding {
        Encoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|e| {
                Error::format(Location::Byte(header.body + e.valid_up_to()), "non-UTF-8 ascii PLY body")
            })?;
            read_ply_body(&header, AsciiBody::new(text, header.body_line))
        }
        Encoding::BinaryLittleEndian => read_ply_body(
            &header,
            BinaryBody {
                bytes,
                pos: header.body,
            },
        ),
    }
}

fn read_ply_body(header: &Header, mut body: impl BodyReader) -> Result<RawMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for element in &header.elements {
        let position_slots: Vec<Option<usize>> = element
            .properties
            .iter()
            .map(|p| match p {
                Property::Scalar { name, .. } => ["x", "y", "z"].iter().position(|&n| n == name),
                Property::List { .. } => None,
            })
            .collect();
        let index_list = element.properties.iter().position(|p| {
            matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index")
        });
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        if is_vertex && (0..3).any(|axis| !position_slots.contains(&Some(axis))) {
            return Err(Error::format(body.location(), "vertex element lacks x, y or z"));
        }
        if is_face && index_list.is_none() {
            return Err(Error::format(body.location(), "face element lacks a vertex_indices list"));
        }
        for _ in 0..element.count {
            let mut xyz = [0.0; 3];
            for (k, property) in element.properties.iter().enumerate() {
                match property {
                    Property::Scalar { ty, .. } => {
                        let v = body.next(*ty)?;
                        if let Some(axis) = position_slots[k] {
                            xyz[axis] = v;
                        }
                    }
                    Property::List { count, item, .. } => {
                        let at = body.location();
                        let n = body.next(*count)?;
                        if n < 0.0 {
                            return Err(Error::format(at, "negative list length"));
                        }
                        let n = n as usize;
                        let mut polygon = Vec::with_capacity(n);
                        for _ in 0..n {
                            let at = body.location();
                            let idx = body.next(*item)?;
                            if idx < 0.0 || idx.fract() != 0.0 {
                                return Err(Error::format(at, format!("invalid vertex index {idx}")));
                            }
                            polygon.push(idx as usize);
                        }
                        if is_face && Some(k) == index_list {
                            if polygon.len() < 3 {
                                return Err(Error::format(at, "face with fewer than 3 vertices"));
                            }
                            fan_triangulate(&polygon, &mut faces);
                        }
                    }
                }
            }
            body.end_record()?;
            if is_vertex {
                vertices.push(Vec3::from(xyz));
            }
        }
    }
    Ok((vertices, faces))
}

fn fan_triangulate(polygon: &[usize], faces: &mut Vec<[usize; 3]>) {
    for k in 1..polygon.len() - 1 {
        faces.push([polygon[0], polygon[k], polygon[k + 1]]);
    }
}

fn read_obj(text: &str) -> Result<RawMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: String| Error::format(Location::Line(line_no), msg);
        let line = raw.split('#').next().unwrap_or("");
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let t = tok.next().ok_or_else(|| err("vertex with fewer than 3 coordinates".into()))?;
                    *c = t.parse().map_err(|_| err(format!("invalid coordinate '{t}'")))?;
                }
                vertices.push(Vec3::from(xyz));
            }
            Some("f") => {
                let polygon = tok
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let idx: i64 = first
                            .parse()
                            .map_err(|_| err(format!("invalid face index '{t}'")))?;
                        let n = vertices.len() as i64;
                        let resolved = match idx {
                            0 => return Err(err("face index 0 (OBJ indices are 1-based)".into())),
                            i if i > 0 => i - 1,
                            i => n + i,
                        };
                        if resolved < 0 {
                            return Err(Error::validation(format!(
                                "line {line_no}: relative face index {idx} precedes the first vertex"
                            )));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<Vec<usize>>>()?;
                if polygon.len() < 3 {
                    return Err(err("face with fewer than 3 vertices".into()));
                }
                fan_triangulate(&polygon, &mut faces);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE_PLY: &str = "ply\nformat ascii 1.0\ncomment minimal\nelement vertex 3\n\
        property float x\nproperty float y\nproperty float z\nelement face 1\n\
        property list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";

    #[test]
    fn ascii_ply_triangle() {
        let mesh = parse_ply(TRIANGLE_PLY.as_bytes()).unwrap();
        assert_eq!(mesh.vertices().len(), 3);
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
        assert_eq!(mesh.vertices()[1], Vec3::x());
    }

    #[test]
    fn ascii_ply_out_of_range_face_is_validation_error() {
        let text = TRIANGLE_PLY.replace("3 0 1 2", "3 0 1 5");
        let err = parse_ply(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn ascii_ply_reports_line_of_bad_number() {
        let text = TRIANGLE_PLY.replace("1 0 0\n", "1 zero 0\n");
        match parse_ply(text.as_bytes()).unwrap_err() {
            Error::Format { location, .. } => assert_eq!(location, Location::Line(12)),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn ascii_ply_skips_extra_properties_and_elements() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty double x\nproperty double y\n\
            property double z\nproperty uchar red\nelement face 1\nproperty uchar flags\n\
            property list uchar uint vertex_indices\nelement edge 1\nproperty int a\nproperty int b\n\
            end_header\n0 0 0 255\n1 0 0 1\n1 1 0 2\n0 1 0 3\n7 4 0 1 2 3\n0 1\n";
        let mesh = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    fn binary_ply(face_index: i32) -> Vec<u8> {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\n\
            property float x\nproperty float y\nproperty double z\nelement face 1\n\
            property list uchar int vertex_indices\nend_header\n"
            .to_vec();
        for v in [[0.0f32, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
            bytes.extend_from_slice(&v[0].to_le_bytes());
            bytes.extend_from_slice(&v[1].to_le_bytes());
            bytes.extend_from_slice(&(v[2] as f64).to_le_bytes());
        }
        bytes.push(3);
        for i in [0, 1, face_index] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        bytes
    }

    #[test]
    fn binary_ply_triangle() {
        let mesh = parse_ply(&binary_ply(2)).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
        assert_eq!(mesh.vertices()[2], Vec3::y());
        assert!(matches!(parse_ply(&binary_ply(9)), Err(Error::Validation(_))));
    }

    #[test]
    fn truncated_binary_ply_reports_byte_offset() {
        let bytes = binary_ply(2);
        let cut = &bytes[..bytes.len() - 2];
        match parse_ply(cut).unwrap_err() {
            Error::Format { location: Location::Byte(b), .. } => assert_eq!(b, bytes.len() - 4),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn big_endian_is_rejected() {
        let text = TRIANGLE_PLY.replace("ascii", "binary_big_endian");
        assert!(matches!(parse_ply(text.as_bytes()), Err(Error::Format { .. })));
    }

    #[test]
    fn obj_with_quads_and_negative_indices() {
        let text = "# square\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\nv 0 0 1\nf -1 -5 -4\n";
        let mesh = parse_obj(text).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3], [4, 0, 1]]);
    }

    #[test]
    fn obj_errors() {
        match parse_obj("v 0 0 0\nv 1 x 0\n").unwrap_err() {
            Error::Format { location, .. } => assert_eq!(location, Location::Line(2)),
            other => panic!("{other}"),
        }
        assert!(matches!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n"), Err(Error::Validation(_))));
        assert!(parse_obj("v 0 0 0\nf 0 1 2\n").is_err());
    }
}
