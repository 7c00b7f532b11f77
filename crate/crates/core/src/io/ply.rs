//! PLY point clouds and triangle meshes. ASCII and binary little-endian are
//! read; binary little-endian is written.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{LabeledPointCloud, Point3, Rgb, TriMesh};

const FORMAT: &str = "ply";

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
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::format(FORMAT, format!("unknown property type {other:?}"))),
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

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => f64::from(b[0] as i8),
            Scalar::U8 => f64::from(b[0]),
            Scalar::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Scalar::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Scalar::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Column {
    Scalar(Vec<f64>),
    List(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
    columns: Vec<Column>,
}

impl Element {
    fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.props
            .iter()
            .position(|p| p.name == name)
            .and_then(|i| match &self.columns[i] {
                Column::Scalar(v) => Some(v.as_slice()),
                Column::List(_) => None,
            })
    }

    fn list(&self, names: &[&str]) -> Option<&[Vec<f64>]> {
        self.props
            .iter()
            .position(|p| names.contains(&p.name.as_str()))
            .and_then(|i| match &self.columns[i] {
                Column::List(v) => Some(v.as_slice()),
                Column::Scalar(_) => None,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

fn parse_header(bytes: &[u8]) -> Result<(Encoding, Vec<Element>, usize)> {
    let end_marker = b"end_header";
    let pos = bytes
        .windows(end_marker.len())
        .position(|w| w == end_marker)
        .ok_or_else(|| Error::format(FORMAT, "missing end_header"))?;
    let mut body = pos + end_marker.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) == Some(&b'\n') {
        body += 1;
    }
    let header = std::str::from_utf8(&bytes[..pos])
        .map_err(|_| Error::format(FORMAT, "header is not UTF-8"))?;
    let mut lines = header.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("ply") {
        return Err(Error::format(FORMAT, "missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok[0] {
            "format" => {
                encoding = Some(match tok.get(1).copied() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLe,
                    other => {
                        return Err(Error::format(FORMAT, format!("unsupported format {other:?}")))
                    }
                });
            }
            "comment" | "obj_info" => {}
            "element" => {
                let (Some(name), Some(count)) = (tok.get(1), tok.get(2)) else {
                    return Err(Error::format(FORMAT, format!("bad element line {line:?}")));
                };
                let count = count
                    .parse()
                    .map_err(|_| Error::format(FORMAT, format!("bad element count in {line:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                    columns: Vec::new(),
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(FORMAT, "property before any element"))?;
                let prop = match tok.as_slice() {
                    ["property", "list", c, i, name] => Property {
                        name: name.to_string(),
                        kind: Kind::List {
                            count: Scalar::parse(c)?,
                            item: Scalar::parse(i)?,
                        },
                    },
                    ["property", t, name] => Property {
                        name: name.to_string(),
                        kind: Kind::Scalar(Scalar::parse(t)?),
                    },
                    _ => return Err(Error::format(FORMAT, format!("bad property line {line:?}"))),
                };
                el.props.push(prop);
            }
            other => return Err(Error::format(FORMAT, format!("unknown header keyword {other:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::format(FORMAT, "missing format line"))?;
    Ok((encoding, elements, body))
}

fn parse(bytes: &[u8]) -> Result<Vec<Element>> {
    let (encoding, mut elements, body) = parse_header(bytes)?;
    for el in &mut elements {
        el.columns = el
            .props
            .iter()
            .map(|p| match p.kind {
                Kind::Scalar(_) => Column::Scalar(Vec::with_capacity(el.count)),
                Kind::List { .. } => Column::List(Vec::with_capacity(el.count)),
            })
            .collect();
    }
    match encoding {
        Encoding::BinaryLe => read_binary(&bytes[body..], &mut elements)?,
        Encoding::Ascii => {
            let text = std::str::from_utf8(&bytes[body..])
                .map_err(|_| Error::format(FORMAT, "ASCII body is not UTF-8"))?;
            read_ascii(text, &mut elements)?
        }
    }
    Ok(elements)
}

fn read_binary(data: &[u8], elements: &mut [Element]) -> Result<()> {
    let truncated = || Error::format(FORMAT, "binary body truncated");
    let mut at = 0usize;
    let mut take = |s: Scalar| -> Result<f64> {
        let b = data.get(at..at + s.size()).ok_or_else(truncated)?;
        at += s.size();
        Ok(s.decode(b))
    };
    for el in elements.iter_mut() {
        for _ in 0..el.count {
            for (p, col) in el.props.iter().zip(el.columns.iter_mut()) {
                match (&p.kind, col) {
                    (Kind::Scalar(s), Column::Scalar(v)) => v.push(take(*s)?),
                    (Kind::List { count, item }, Column::List(v)) => {
                        let n = take(*count)?;
                        if n < 0.0 {
                            return Err(Error::format(FORMAT, "negative list length"));
                        }
                        let items = (0..n as usize).map(|_| take(*item)).collect::<Result<Vec<_>>>()?;
                        v.push(items);
                    }
                    _ => unreachable!("columns mirror properties"),
                }
            }
        }
    }
    Ok(())
}

fn read_ascii(text: &str, elements: &mut [Element]) -> Result<()> {
    let mut tokens = text.split_ascii_whitespace();
    let mut next = || -> Result<f64> {
        let t = tokens
            .next()
            .ok_or_else(|| Error::format(FORMAT, "ASCII body truncated"))?;
        t.parse::<f64>()
            .map_err(|_| Error::format(FORMAT, format!("bad number {t:?}")))
    };
    for el in elements.iter_mut() {
        for _ in 0..el.count {
            for (p, col) in el.props.iter().zip(el.columns.iter_mut()) {
                match (&p.kind, col) {
                    (Kind::Scalar(s), Column::Scalar(v)) => {
                        let x = next()?;
                        v.push(if *s == Scalar::F32 { f64::from(x as f32) } else { x });
                    }
                    (Kind::List { item, .. }, Column::List(v)) => {
                        let n = next()?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(Error::format(FORMAT, format!("bad list length {n}")));
                        }
                        let items = (0..n as usize)
                            .map(|_| next().map(|x| if *item == Scalar::F32 { f64::from(x as f32) } else { x }))
                            .collect::<Result<Vec<_>>>()?;
                        v.push(items);
                    }
                    _ => unreachable!("columns mirror properties"),
                }
            }
        }
    }
    Ok(())
}

fn vertex_element(elements: &[Element]) -> Result<&Element> {
    elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| Error::format(FORMAT, "no vertex element"))
}

fn positions(v: &Element) -> Result<Vec<Point3>> {
    let col = |n: &str| {
        v.scalar(n)
            .ok_or_else(|| Error::format(FORMAT, format!("vertex property {n} missing")))
    };
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    Ok((0..v.count).map(|i| Point3::new(x[i], y[i], z[i])).collect())
}

fn colors(v: &Element, names: [&str; 3]) -> Result<Option<Vec<Rgb>>> {
    let cols: Vec<Option<&[f64]>> = names.iter().map(|n| v.scalar(n)).collect();
    match (cols[0], cols[1], cols[2]) {
        (Some(r), Some(g), Some(b)) => (0..v.count)
            .map(|i| {
                let mut c = [0u8; 3];
                for (slot, val) in c.iter_mut().zip([r[i], g[i], b[i]]) {
                    if !(0.0..=255.0).contains(&val) || val.fract() != 0.0 {
                        return Err(Error::format(FORMAT, format!("color value {val} not a byte")));
                    }
                    *slot = val as u8;
                }
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
        (None, None, None) => Ok(None),
        _ => Err(Error::format(FORMAT, format!("incomplete color triple {names:?}"))),
    }
}

/// Decodes a point cloud. Unknown vertex properties and other elements are
/// ignored.
pub fn parse_point_cloud(bytes: &[u8]) -> Result<LabeledPointCloud> {
    let elements = parse(bytes)?;
    let v = vertex_element(&elements)?;
    let points = positions(v)?;
    let colors_ = colors(v, ["red", "green", "blue"])?;
    let source_colors = colors(v, ["source_red", "source_green", "source_blue"])?;
    let ids = v
        .scalar("instance_id")
        .map(|ids| {
            ids.iter()
                .map(|&id| {
                    if id.fract() != 0.0 || id < f64::from(i32::MIN) || id > f64::from(i32::MAX) {
                        Err(Error::format(FORMAT, format!("instance_id {id} not an integer")))
                    } else {
                        Ok(id as i32)
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let mut cloud = LabeledPointCloud::new(points, colors_, ids)?;
    cloud.source_colors = source_colors;
    cloud.validate()?;
    Ok(cloud)
}

fn header(out: &mut Vec<u8>, lines: &[String]) {
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    for l in lines {
        out.extend_from_slice(l.as_bytes());
        out.push(b'\n');
    }
    out.extend_from_slice(b"end_header\n");
}

fn push_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

/// Binary little-endian encoding: `x y z` as float, optional `red green blue`
/// as uchar, `instance_id` as int, `source_red source_green source_blue`.
pub fn encode_point_cloud(cloud: &LabeledPointCloud) -> Result<Vec<u8>> {
    cloud.validate()?;
    let mut lines = vec![
        format!("element vertex {}", cloud.len()),
        "property float x".into(),
        "property float y".into(),
        "property float z".into(),
    ];
    if cloud.colors.is_some() {
        lines.extend(["red", "green", "blue"].map(|c| format!("property uchar {c}")));
    }
    if cloud.instance_ids.is_some() {
        lines.push("property int instance_id".into());
    }
    if cloud.source_colors.is_some() {
        lines.extend(["source_red", "source_green", "source_blue"].map(|c| format!("property uchar {c}")));
    }
    let mut out = Vec::with_capacity(64 + cloud.len() * 22);
    header(&mut out, &lines);
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        for a in 0..3 {
            push_f32(&mut out, p[a]);
        }
        if let Some(c) = &cloud.colors {
            out.extend_from_slice(&c[i]);
        }
        if let Some(ids) = &cloud.instance_ids {
            out.extend_from_slice(&ids[i].to_le_bytes());
        }
        if let Some(c) = &cloud.source_colors {
            out.extend_from_slice(&c[i]);
        }
    }
    Ok(out)
}

/// Decodes a mesh from `vertex` and `face` elements. Polygons with more than
/// three corners are fan-triangulated.
pub fn parse_mesh(bytes: &[u8]) -> Result<TriMesh> {
    let elements = parse(bytes)?;
    let vertices = positions(vertex_element(&elements)?)?;
    let faces = match elements.iter().find(|e| e.name == "face") {
        None => Vec::new(),
        Some(f) => {
            let lists = f
                .list(&["vertex_indices", "vertex_index"])
                .ok_or_else(|| Error::format(FORMAT, "face element without vertex_indices"))?;
            let mut faces = Vec::with_capacity(lists.len());
            for poly in lists {
                if poly.len() < 3 {
                    return Err(Error::format(FORMAT, format!("face with {} corners", poly.len())));
                }
                let idx = poly
                    .iter()
                    .map(|&v| {
                        if v < 0.0 || v.fract() != 0.0 {
                            Err(Error::format(FORMAT, format!("bad vertex index {v}")))
                        } else {
                            Ok(v as usize)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            faces
        }
    };
    TriMesh::new(vertices, faces)
}

pub fn encode_mesh(mesh: &TriMesh) -> Vec<u8> {
    let lines = vec![
        format!("element vertex {}", mesh.vertices.len()),
        "property float x".into(),
        "property float y".into(),
        "property float z".into(),
        format!("element face {}", mesh.faces.len()),
        "property list uchar int vertex_indices".into(),
    ];
    let mut out = Vec::with_capacity(128 + mesh.vertices.len() * 12 + mesh.faces.len() * 13);
    header(&mut out, &lines);
    for p in &mesh.vertices {
        for a in 0..3 {
            push_f32(&mut out, p[a]);
        }
    }
    for f in &mesh.faces {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<LabeledPointCloud> {
    parse_point_cloud(&read_file(path.as_ref())?)
}

pub fn write_point_cloud(path: impl AsRef<Path>, cloud: &LabeledPointCloud) -> Result<()> {
    write_file(path.as_ref(), &encode_point_cloud(cloud)?)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    parse_mesh(&read_file(path.as_ref())?)
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    write_file(path.as_ref(), &encode_mesh(mesh))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f32_round(p: Point3) -> Point3 {
        p.map(|v| f64::from(v as f32))
    }

    #[test]
    fn cloud_round_trip() {
        let cloud = LabeledPointCloud {
            points: vec![Point3::new(0.1, -2.5, 3.0), Point3::new(1e-3, 7.25, -0.3)],
            colors: Some(vec![[1, 2, 3], [250, 0, 9]]),
            instance_ids: Some(vec![-1, 42]),
            source_colors: Some(vec![[9, 9, 9], [0, 0, 255]]),
        };
        let bytes = encode_point_cloud(&cloud).unwrap();
        let back = parse_point_cloud(&bytes).unwrap();
        assert_eq!(back.points, cloud.points.iter().map(|&p| f32_round(p)).collect::<Vec<_>>());
        assert_eq!(back.colors, cloud.colors);
        assert_eq!(back.instance_ids, cloud.instance_ids);
        assert_eq!(back.source_colors, cloud.source_colors);
        assert_eq!(encode_point_cloud(&back).unwrap(), bytes);
    }

    #[test]
    fn bare_points() {
        let cloud = LabeledPointCloud::from_points(vec![Point3::new(1.0, 2.0, 3.0)]);
        let back = parse_point_cloud(&encode_point_cloud(&cloud).unwrap()).unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn ascii_with_extra_properties() {
        let text = "ply\r\nformat ascii 1.0\r\ncomment hand written\r\nelement vertex 2\r\n\
            property double x\r\nproperty double y\r\nproperty double z\r\nproperty float nx\r\n\
            property uchar red\r\nproperty uchar green\r\nproperty uchar blue\r\nproperty int instance_id\r\n\
            element face 1\r\nproperty list uchar int vertex_indices\r\nend_header\r\n\
            0.5 1 2 0.1 10 20 30 3\r\n-1 -2 -3 0.2 0 0 0 -1\r\n3 0 1 1\r\n";
        let cloud = parse_point_cloud(text.as_bytes()).unwrap();
        assert_eq!(cloud.points[0], Point3::new(0.5, 1.0, 2.0));
        assert_eq!(cloud.colors.unwrap()[0], [10, 20, 30]);
        assert_eq!(cloud.instance_ids.unwrap(), vec![3, -1]);
    }

    #[test]
    fn mesh_round_trip_and_quads() {
        let mesh = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.3),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let bytes = encode_mesh(&mesh);
        let back = parse_mesh(&bytes).unwrap();
        assert_eq!(back.faces, mesh.faces);
        assert_eq!(encode_mesh(&back), bytes);

        let quad = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\n\
            property float z\nelement face 1\nproperty list uchar uint vertex_index\nend_header\n\
            0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let m = parse_mesh(quad.as_bytes()).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_point_cloud(b"not a ply").is_err());
        assert!(parse_point_cloud(b"ply\nformat binary_big_endian 1.0\nend_header\n").is_err());
        let truncated = "ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\n\
            property float y\nproperty float z\nend_header\n";
        let mut bytes = truncated.as_bytes().to_vec();
        bytes.extend_from_slice(&[0u8; 12]);
        assert!(parse_point_cloud(&bytes).is_err());
        let no_z = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n";
        assert!(parse_point_cloud(no_z.as_bytes()).is_err());
        let partial_color = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
            property float z\nproperty uchar red\nend_header\n1 2 3 4\n";
        assert!(parse_point_cloud(partial_color.as_bytes()).is_err());
        let bad_index = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n\
            property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
            0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n";
        assert!(parse_mesh(bad_index.as_bytes()).is_err());
    }
}
