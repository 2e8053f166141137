//! PLY mesh reading and writing.
//!
//! Supports `ascii` and `binary_little_endian` PLY with the usual
//! vertex/face layout: `x y z` (+ optional `nx ny nz`) vertex properties and
//! one index-list face property. Unknown elements and properties are skipped.
//! Values are widened to `f64` on load, so `double` files round-trip exactly.

use super::{GeometryError, TriMesh};
use nalgebra::{Point3, Vector3};
use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// On-disk encodings accepted and produced by this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Errors produced while reading or writing PLY files.
#[derive(Debug, Error)]
pub enum PlyError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a PLY file: first line is not 'ply'")]
    NotPly,
    #[error("unsupported PLY format '{0}' (expected ascii or binary_little_endian)")]
    UnsupportedFormat(String),
    #[error("malformed header at line {line}: {message}")]
    BadHeader { line: usize, message: String },
    #[error("header declares no '{0}' element")]
    MissingElement(&'static str),
    #[error("element '{element}' lacks required property '{property}'")]
    MissingProperty {
        element: &'static str,
        property: &'static str,
    },
    #[error("unexpected end of data in element '{element}' entry {index}")]
    UnexpectedEof { element: String, index: usize },
    #[error("bad value in element '{element}' entry {index}: {message}")]
    BadValue {
        element: String,
        index: usize,
        message: String,
    },
    #[error("face {face} has {count} vertices, only triangles are supported")]
    NonTriangularFace { face: usize, count: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
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
    fn from_name(name: &str) -> Option<Scalar> {
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

    fn decode_le(self, raw: &[u8]) -> f64 {
        match self {
            Scalar::I8 => raw[0] as i8 as f64,
            Scalar::U8 => raw[0] as f64,
            Scalar::I16 => i16::from_le_bytes([raw[0], raw[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([raw[0], raw[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(raw[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(raw[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(raw[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(raw[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PropKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct PropDef {
    name: String,
    kind: PropKind,
}

#[derive(Debug, Clone)]
struct ElementDef {
    name: String,
    count: usize,
    props: Vec<PropDef>,
}

fn parse_header<R: BufRead>(
    reader: &mut R,
) -> Result<(PlyFormat, Vec<ElementDef>), PlyError> {
    let mut line = String::new();
    let mut line_no = 0usize;
    let read_line = |reader: &mut R, line: &mut String, line_no: &mut usize| {
        line.clear();
        *line_no += 1;
        let n = reader.read_line(line)?;
        if n == 0 {
            return Err(PlyError::BadHeader {
                line: *line_no,
                message: "file ends before end_header".into(),
            });
        }
        Ok(())
    };

    read_line(reader, &mut line, &mut line_no)?;
    if line.trim_end() != "ply" {
        return Err(PlyError::NotPly);
    }

    let mut format = None;
    let mut elements: Vec<ElementDef> = Vec::new();
    loop {
        read_line(reader, &mut line, &mut line_no)?;
        let trimmed = line.trim_end();
        let mut words = trimmed.split_whitespace();
        let keyword = words.next().unwrap_or("");
        match keyword {
            "comment" | "obj_info" | "" => {}
            "format" => {
                let name = words.next().unwrap_or("");
                format = Some(match name {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(PlyError::UnsupportedFormat(other.to_string())),
                });
            }
            "element" => {
                let name = words
                    .next()
                    .ok_or_else(|| PlyError::BadHeader {
                        line: line_no,
                        message: "element without a name".into(),
                    })?
                    .to_string();
                let count: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| PlyError::BadHeader {
                        line: line_no,
                        message: format!("element '{name}' without a valid count"),
                    })?;
                elements.push(ElementDef {
                    name,
                    count,
                    props: Vec::new(),
                });
            }
            "property" => {
                let element = elements.last_mut().ok_or_else(|| PlyError::BadHeader {
                    line: line_no,
                    message: "property before any element".into(),
                })?;
                let first = words.next().unwrap_or("");
                let kind = if first == "list" {
                    let count = words.next().and_then(Scalar::from_name);
                    let item = words.next().and_then(Scalar::from_name);
                    match (count, item) {
                        (Some(count), Some(item)) => PropKind::List { count, item },
                        _ => {
                            return Err(PlyError::BadHeader {
                                line: line_no,
                                message: "list property with unknown scalar types".into(),
                            })
                        }
                    }
                } else {
                    match Scalar::from_name(first) {
                        Some(s) => PropKind::Scalar(s),
                        None => {
                            return Err(PlyError::BadHeader {
                                line: line_no,
                                message: format!("unknown property type '{first}'"),
                            })
                        }
                    }
                };
                let name = words
                    .next()
                    .ok_or_else(|| PlyError::BadHeader {
                        line: line_no,
                        message: "property without a name".into(),
                    })?
                    .to_string();
                element.props.push(PropDef { name, kind });
            }
            "end_header" => break,
            other => {
                return Err(PlyError::BadHeader {
                    line: line_no,
                    message: format!("unknown keyword '{other}'"),
                })
            }
        }
    }

    match format {
        Some(f) => Ok((f, elements)),
        None => Err(PlyError::BadHeader {
            line: line_no,
            message: "no format line before end_header".into(),
        }),
    }
}

/// Pulls scalars one at a time from the data section, in ASCII or binary.
enum Source<R> {
    Ascii {
        reader: R,
        tokens: VecDeque<String>,
    },
    Binary {
        reader: R,
        buf: [u8; 8],
    },
}

impl<R: BufRead> Source<R> {
    fn new(reader: R, format: PlyFormat) -> Self {
        match format {
            PlyFormat::Ascii => Source::Ascii {
                reader,
                tokens: VecDeque::new(),
            },
            PlyFormat::BinaryLittleEndian => Source::Binary {
                reader,
                buf: [0; 8],
            },
        }
    }

    /// Next scalar widened to f64, or an error naming the element and entry.
    fn next(&mut self, scalar: Scalar, element: &str, index: usize) -> Result<f64, PlyError> {
        match self {
            Source::Ascii { reader, tokens } => {
                while tokens.is_empty() {
                    let mut line = String::new();
                    if reader.read_line(&mut line)? == 0 {
                        return Err(PlyError::UnexpectedEof {
                            element: element.to_string(),
                            index,
                        });
                    }
                    tokens.extend(line.split_whitespace().map(str::to_string));
                }
                let token = tokens.pop_front().unwrap();
                token.parse::<f64>().map_err(|_| PlyError::BadValue {
                    element: element.to_string(),
                    index,
                    message: format!("'{token}' is not a number"),
                })
            }
            Source::Binary { reader, buf } => {
                let n = scalar.size();
                reader
                    .read_exact(&mut buf[..n])
                    .map_err(|_| PlyError::UnexpectedEof {
                        element: element.to_string(),
                        index,
                    })?;
                Ok(scalar.decode_le(&buf[..n]))
            }
        }
    }
}

fn find_scalar_prop(element: &ElementDef, name: &str) -> Option<usize> {
    element
        .props
        .iter()
        .position(|p| p.name == name && matches!(p.kind, PropKind::Scalar(_)))
}

/// Loads a triangle mesh from a PLY file.
///
/// Vertex positions come from the `x`/`y`/`z` properties; normals are taken
/// from `nx`/`ny`/`nz` when all three are present and are renormalized to
/// unit length (a zero or non-finite normal is an error). Faces must be
/// triangles.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh, PlyError> {
    let file = File::open(path.as_ref())?;
    let mut reader = BufReader::new(file);
    let (format, elements) = parse_header(&mut reader)?;
    let mut source = Source::new(reader, format);

    let vertex_def = elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or(PlyError::MissingElement("vertex"))?;
    for coord in ["x", "y", "z"] {
        if find_scalar_prop(vertex_def, coord).is_none() {
            return Err(PlyError::MissingProperty {
                element: "vertex",
                property: coord,
            });
        }
    }
    let has_normals = ["nx", "ny", "nz"]
        .iter()
        .all(|n| find_scalar_prop(vertex_def, n).is_some());

    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut normals: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for element in &elements {
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        let list_prop = element
            .props
            .iter()
            .position(|p| matches!(p.kind, PropKind::List { .. }));
        for row in 0..element.count {
            let mut position = Point3::origin();
            let mut normal = Vector3::zeros();
            let mut face: Vec<f64> = Vec::new();
            for (pi, prop) in element.props.iter().enumerate() {
                match prop.kind {
                    PropKind::Scalar(s) => {
                        let value = source.next(s, &element.name, row)?;
                        if is_vertex {
                            match prop.name.as_str() {
                                "x" => position.x = value,
                                "y" => position.y = value,
                                "z" => position.z = value,
                                "nx" => normal.x = value,
                                "ny" => normal.y = value,
                                "nz" => normal.z = value,
                                _ => {}
                            }
                        }
                    }
                    PropKind::List { count, item } => {
                        let n = source.next(count, &element.name, row)?;
                        if !(n.is_finite() && (0.0..=1e6).contains(&n)) {
                            return Err(PlyError::BadValue {
                                element: element.name.clone(),
                                index: row,
                                message: format!("invalid list length {n}"),
                            });
                        }
                        let n = n as usize;
                        let keep = is_face && Some(pi) == list_prop;
                        for _ in 0..n {
                            let value = source.next(item, &element.name, row)?;
                            if keep {
                                face.push(value);
                            }
                        }
                        if keep && face.len() != 3 {
                            return Err(PlyError::NonTriangularFace {
                                face: row,
                                count: face.len(),
                            });
                        }
                    }
                }
            }
            if is_vertex {
                vertices.push(position);
                if has_normals {
                    normals.push(normal);
                }
            } else if is_face {
                if face.len() != 3 {
                    return Err(PlyError::NonTriangularFace {
                        face: row,
                        count: face.len(),
                    });
                }
                let mut tri = [0u32; 3];
                for (slot, value) in tri.iter_mut().zip(&face) {
                    if value.fract() != 0.0 || *value < 0.0 || *value > u32::MAX as f64 {
                        return Err(PlyError::BadValue {
                            element: "face".into(),
                            index: row,
                            message: format!("invalid vertex index {value}"),
                        });
                    }
                    *slot = *value as u32;
                }
                triangles.push(tri);
            }
        }
    }

    let vertex_normals = if has_normals {
        let mut unit = Vec::with_capacity(normals.len());
        for (vi, n) in normals.iter().enumerate() {
            let len = n.norm();
            if !len.is_finite() || len < 1e-12 {
                return Err(PlyError::BadValue {
                    element: "vertex".into(),
                    index: vi,
                    message: "normal is zero or non-finite".into(),
                });
            }
            unit.push(n / len);
        }
        Some(unit)
    } else {
        None
    };

    Ok(TriMesh::new(vertices, triangles, vertex_normals)?)
}

/// Writes a mesh as PLY with `double` precision coordinates.
///
/// Normals are written when the mesh has them. ASCII output uses the shortest
/// decimal form that parses back to the same `f64`, so ASCII and binary
/// round-trips are both exact.
pub fn save_mesh(
    path: impl AsRef<Path>,
    mesh: &TriMesh,
    format: PlyFormat,
) -> Result<(), PlyError> {
    mesh.validate()?;
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);

    let format_name = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply")?;
    writeln!(w, "format {format_name} 1.0")?;
    writeln!(w, "element vertex {}", mesh.vertices.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    if mesh.vertex_normals.is_some() {
        writeln!(w, "property double nx")?;
        writeln!(w, "property double ny")?;
        writeln!(w, "property double nz")?;
    }
    writeln!(w, "element face {}", mesh.triangles.len())?;
    writeln!(w, "property list uchar uint vertex_indices")?;
    writeln!(w, "end_header")?;

    match format {
        PlyFormat::Ascii => {
            for (vi, v) in mesh.vertices.iter().enumerate() {
                write!(w, "{} {} {}", v.x, v.y, v.z)?;
                if let Some(normals) = &mesh.vertex_normals {
                    let n = normals[vi];
                    write!(w, " {} {} {}", n.x, n.y, n.z)?;
                }
                writeln!(w)?;
            }
            for tri in &mesh.triangles {
                writeln!(w, "3 {} {} {}", tri[0], tri[1], tri[2])?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for (vi, v) in mesh.vertices.iter().enumerate() {
                for c in [v.x, v.y, v.z] {
                    w.write_all(&c.to_le_bytes())?;
                }
                if let Some(normals) = &mesh.vertex_normals {
                    for c in normals[vi].iter() {
                        w.write_all(&c.to_le_bytes())?;
                    }
                }
            }
            for tri in &mesh.triangles {
                w.write_all(&[3u8])?;
                for &index in tri {
                    w.write_all(&index.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
