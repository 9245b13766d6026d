//! ASCII Gmsh MSH 2.2 import/export, restricted to the subset the
//! simulator needs: `$Nodes`, plus triangles (type 2) and tets (type 4) in
//! `$Elements`. Triangle physical tags map to boundary labels through a
//! caller-supplied [`TagTable`]; entries of any other element type (points,
//! lines, ...) are skipped.

use super::{BoundaryLabel, Mesh, MeshError};
use crate::geo::Point3;
use std::collections::HashMap;

/// Maps MSH physical tags to boundary labels. The default is the
/// convention used by [`write_msh`]: 1 = TOP, 2 = BOTTOM, 3 = LATERAL.
#[derive(Debug, Clone)]
pub struct TagTable {
    pub map: HashMap<i64, BoundaryLabel>,
}

impl Default for TagTable {
    fn default() -> Self {
        let mut map = HashMap::new();
        map.insert(1, BoundaryLabel::Top);
        map.insert(2, BoundaryLabel::Bottom);
        map.insert(3, BoundaryLabel::Lateral);
        TagTable { map }
    }
}

impl TagTable {
    pub fn label_tag(label: BoundaryLabel) -> i64 {
        match label {
            BoundaryLabel::Top => 1,
            BoundaryLabel::Bottom => 2,
            BoundaryLabel::Lateral => 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MshError {
    #[error("line {line}: unsupported MSH version {version:?}; only ASCII 2.2 is supported")]
    UnsupportedVersion { version: String, line: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("element {element} references node id {node}, which is not among the {nnodes} declared nodes")]
    DanglingNode {
        element: u64,
        node: i64,
        nnodes: usize,
    },
    #[error("line {line}: triangle physical tag {tag} has no boundary label in the tag table")]
    UnknownTag { tag: i64, line: usize },
    #[error("triangle {verts:?} does not match any boundary facet of the tetrahedra")]
    StrayTriangle { verts: [usize; 3] },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-empty line as (1-based line number, trimmed content).
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.inner.by_ref() {
            let t = raw.trim();
            if !t.is_empty() {
                return Some((i + 1, t));
            }
        }
        None
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> MshError {
    MshError::Parse {
        line,
        msg: msg.into(),
    }
}

fn expect_line(lines: &mut Lines, what: &str) -> Result<(usize, String), MshError> {
    lines
        .next_content()
        .map(|(n, s)| (n, s.to_owned()))
        .ok_or_else(|| parse_err(0, format!("unexpected end of file, expected {what}")))
}

/// Parses ASCII MSH 2.2 content into a labeled [`Mesh`].
pub fn read_msh(text: &str, tags: &TagTable) -> Result<Mesh, MshError> {
    let mut lines = Lines::new(text);

    // $MeshFormat
    let (n, header) = expect_line(&mut lines, "$MeshFormat")?;
    if header != "$MeshFormat" {
        return Err(parse_err(n, format!("expected $MeshFormat, found {header:?}")));
    }
    let (n, fmt) = expect_line(&mut lines, "version line")?;
    let mut it = fmt.split_whitespace();
    let version = it.next().unwrap_or("");
    let file_type = it.next().unwrap_or("");
    if version != "2.2" {
        return Err(MshError::UnsupportedVersion {
            version: version.to_owned(),
            line: n,
        });
    }
    if file_type != "0" {
        return Err(parse_err(n, "binary MSH files are not supported"));
    }
    let (n, end) = expect_line(&mut lines, "$EndMeshFormat")?;
    if end != "$EndMeshFormat" {
        return Err(parse_err(n, format!("expected $EndMeshFormat, found {end:?}")));
    }

    // $Nodes
    let (n, header) = expect_line(&mut lines, "$Nodes")?;
    if header != "$Nodes" {
        return Err(parse_err(n, format!("expected $Nodes, found {header:?}")));
    }
    let (n, count) = expect_line(&mut lines, "node count")?;
    let nnodes: usize = count
        .parse()
        .map_err(|_| parse_err(n, format!("invalid node count {count:?}")))?;
    let mut vertices: Vec<Point3> = Vec::new();
    let mut node_index: HashMap<i64, usize> = HashMap::new();
    for _ in 0..nnodes {
        let (ln, line) = expect_line(&mut lines, "node line")?;
        if line.starts_with('$') {
            return Err(parse_err(ln, "node section ended before the declared count"));
        }
        let mut it = line.split_whitespace();
        let id: i64 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(ln, "missing node id"))?;
        let mut coord = [0.0f64; 3];
        for c in &mut coord {
            *c = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(ln, "node needs three coordinates"))?;
        }
        if node_index.insert(id, vertices.len()).is_some() {
            return Err(parse_err(ln, format!("duplicate node id {id}")));
        }
        vertices.push(coord);
    }
    let (n, end) = expect_line(&mut lines, "$EndNodes")?;
    if end != "$EndNodes" {
        return Err(parse_err(n, format!("expected $EndNodes, found {end:?}")));
    }

    // $Elements
    let (n, header) = expect_line(&mut lines, "$Elements")?;
    if header != "$Elements" {
        return Err(parse_err(n, format!("expected $Elements, found {header:?}")));
    }
    let (n, count) = expect_line(&mut lines, "element count")?;
    let nelems: usize = count
        .parse()
        .map_err(|_| parse_err(n, format!("invalid element count {count:?}")))?;
    let mut tets: Vec<[usize; 4]> = Vec::new();
    let mut tri_labels: HashMap<[usize; 3], (BoundaryLabel, [usize; 3])> = HashMap::new();
    for _ in 0..nelems {
        let (ln, line) = expect_line(&mut lines, "element line")?;
        if line.starts_with('$') {
            return Err(parse_err(ln, "element section ended before the declared count"));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(parse_err(ln, "element line needs id, type and tag count"));
        }
        let eid: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(ln, format!("invalid element id {:?}", fields[0])))?;
        let etype: u32 = fields[1]
            .parse()
            .map_err(|_| parse_err(ln, format!("invalid element type {:?}", fields[1])))?;
        let ntags: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(ln, format!("invalid tag count {:?}", fields[2])))?;
        let node_fields = fields.get(3 + ntags..).unwrap_or(&[]);
        let resolve = |raw: &str| -> Result<usize, MshError> {
            let id: i64 = raw
                .parse()
                .map_err(|_| parse_err(ln, format!("invalid node reference {raw:?}")))?;
            node_index.get(&id).copied().ok_or(MshError::DanglingNode {
                element: eid,
                node: id,
                nnodes: vertices.len(),
            })
        };
        match etype {
            2 => {
                if node_fields.len() < 3 {
                    return Err(parse_err(ln, "triangle needs 3 node references"));
                }
                let phys: i64 = if ntags >= 1 {
                    fields[3]
                        .parse()
                        .map_err(|_| parse_err(ln, format!("invalid physical tag {:?}", fields[3])))?
                } else {
                    return Err(parse_err(ln, "triangle carries no physical tag"));
                };
                let label = *tags
                    .map
                    .get(&phys)
                    .ok_or(MshError::UnknownTag { tag: phys, line: ln })?;
                let verts = [
                    resolve(node_fields[0])?,
                    resolve(node_fields[1])?,
                    resolve(node_fields[2])?,
                ];
                let mut key = verts;
                key.sort_unstable();
                tri_labels.insert(key, (label, verts));
            }
            4 => {
                if node_fields.len() < 4 {
                    return Err(parse_err(ln, "tetrahedron needs 4 node references"));
                }
                tets.push([
                    resolve(node_fields[0])?,
                    resolve(node_fields[1])?,
                    resolve(node_fields[2])?,
                    resolve(node_fields[3])?,
                ]);
            }
            // Points, lines and higher-order elements are not part of the
            // volume mesh; skip them.
            _ => {}
        }
    }
    let (n, end) = expect_line(&mut lines, "$EndElements")?;
    if end != "$EndElements" {
        return Err(parse_err(n, format!("expected $EndElements, found {end:?}")));
    }

    let mut used = vec![false; tri_labels.len().max(1)];
    let mut order: Vec<&[usize; 3]> = tri_labels.keys().collect();
    order.sort_unstable();
    let index_of: HashMap<[usize; 3], usize> =
        order.iter().enumerate().map(|(i, k)| (**k, i)).collect();

    let mesh = Mesh::assemble(
        vertices,
        tets,
        |facet, _| {
            let mut key = *facet;
            key.sort_unstable();
            tri_labels.get(&key).map(|(label, _)| *label)
        },
        true,
    )?;
    for f in &mesh.boundary_facets {
        let mut key = f.verts;
        key.sort_unstable();
        if let Some(&i) = index_of.get(&key) {
            used[i] = true;
        }
    }
    for (key, &i) in &index_of {
        if !used[i] {
            return Err(MshError::StrayTriangle { verts: *key });
        }
    }
    Ok(mesh)
}

/// Serializes a mesh in the same MSH 2.2 subset read by [`read_msh`].
/// Coordinates use shortest round-trip formatting, so a write/read cycle
/// reproduces them bit-exactly.
pub fn write_msh(mesh: &Mesh) -> String {
    let mut out = String::new();
    out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    out.push_str("$Nodes\n");
    out.push_str(&format!("{}\n", mesh.nvertices()));
    for (i, v) in mesh.vertices.iter().enumerate() {
        out.push_str(&format!("{} {} {} {}\n", i + 1, v[0], v[1], v[2]));
    }
    out.push_str("$EndNodes\n$Elements\n");
    out.push_str(&format!(
        "{}\n",
        mesh.boundary_facets.len() + mesh.ntets()
    ));
    let mut eid = 1usize;
    for f in &mesh.boundary_facets {
        let tag = TagTable::label_tag(f.label);
        out.push_str(&format!(
            "{eid} 2 2 {tag} {tag} {} {} {}\n",
            f.verts[0] + 1,
            f.verts[1] + 1,
            f.verts[2] + 1
        ));
        eid += 1;
    }
    for t in &mesh.tets {
        out.push_str(&format!(
            "{eid} 4 2 10 10 {} {} {} {}\n",
            t[0] + 1,
            t[1] + 1,
            t[2] + 1,
            t[3] + 1
        ));
        eid += 1;
    }
    out.push_str("$EndElements\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_solid, GeometrySpec};

    const ONE_TET: &str = "\
$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
5
1 2 2 2 2 1 2 3
2 2 2 3 3 1 2 4
3 2 2 3 3 1 3 4
4 2 2 1 1 2 3 4
5 4 2 10 10 1 2 3 4
$EndElements
";

    #[test]
    fn minimal_one_tet_file() {
        let mesh = read_msh(ONE_TET, &TagTable::default()).unwrap();
        assert_eq!(mesh.nvertices(), 4);
        assert_eq!(mesh.ntets(), 1);
        assert_eq!(mesh.boundary_facets.len(), 4);
        assert!((mesh.volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn unsupported_version_is_named() {
        let text = ONE_TET.replace("2.2 0 8", "4.1 0 8");
        match read_msh(&text, &TagTable::default()) {
            Err(MshError::UnsupportedVersion { version, .. }) => assert_eq!(version, "4.1"),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_node_cites_element_and_id() {
        let text = ONE_TET.replace("5 4 2 10 10 1 2 3 4", "5 4 2 10 10 1 2 3 99");
        match read_msh(&text, &TagTable::default()) {
            Err(MshError::DanglingNode { element, node, nnodes }) => {
                assert_eq!(element, 5);
                assert_eq!(node, 99);
                assert_eq!(nnodes, 4);
            }
            other => panic!("expected dangling-node error, got {other:?}"),
        }
    }

    #[test]
    fn missing_boundary_tags_list_facets() {
        // Drop one of the four triangles: its facet ends up unlabeled.
        let text = ONE_TET
            .replace("5\n1 2 2 2 2 1 2 3\n", "4\n")
            .replace("$EndElements", "$EndElements");
        match read_msh(&text, &TagTable::default()) {
            Err(MshError::Mesh(MeshError::UnlabeledFacets { count, .. })) => assert_eq!(count, 1),
            other => panic!("expected unlabeled-facet error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_tag_is_reported() {
        let text = ONE_TET.replace("4 2 2 1 1 2 3 4", "4 2 2 7 7 2 3 4");
        match read_msh(&text, &TagTable::default()) {
            Err(MshError::UnknownTag { tag, .. }) => assert_eq!(tag, 7),
            other => panic!("expected unknown-tag error, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let spec = GeometrySpec::default();
        let mesh = generate_solid(&spec, [3, 3, 3]).unwrap();
        let text = write_msh(&mesh);
        let back = read_msh(&text, &TagTable::default()).unwrap();
        assert_eq!(back.nvertices(), mesh.nvertices());
        assert_eq!(back.tets, mesh.tets);
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            assert_eq!(a, b, "coordinates must survive a write/read cycle exactly");
        }
        assert_eq!(back.counts_by_label(), mesh.counts_by_label());
    }

    #[test]
    fn truncated_and_garbage_inputs_error_cleanly() {
        for text in [
            "",
            "$MeshFormat",
            "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n12\n1 0 0 0\n$EndNodes",
            "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\nx\n$EndNodes\n",
        ] {
            assert!(read_msh(text, &TagTable::default()).is_err());
        }
    }
}
