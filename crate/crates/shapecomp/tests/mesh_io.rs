use std::path::Path;

use proptest::prelude::*;
use shapecomp::mesh_io::{format_obj, format_ply, load_mesh, parse_obj, parse_ply, save_mesh};
use shapecomp::Error;
use shapecomp_core::mesh::{cylinder, icosphere, Mesh};

fn origin() -> &'static Path {
    Path::new("test.obj")
}

#[test]
fn obj_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = icosphere(2);
    let path = dir.path().join("sphere.obj");
    save_mesh(&mesh, &path).unwrap();
    let back = load_mesh(&path).unwrap();
    assert_eq!(back.faces(), mesh.faces());
    assert_eq!(back.vertices(), mesh.vertices());
}

#[test]
fn ply_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = cylinder(5, 7, 0.3, 1.0);
    let path = dir.path().join("cyl.ply");
    save_mesh(&mesh, &path).unwrap();
    let back = load_mesh(&path).unwrap();
    assert_eq!(back.faces(), mesh.faces());
    assert_eq!(back.vertices(), mesh.vertices());
}

#[test]
fn triangle_round_trip() {
    let mesh = Mesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
    let back = parse_obj(&format_obj(&mesh), origin()).unwrap();
    assert_eq!(back, mesh);
}

#[test]
fn quad_face_is_rejected_with_line_number() {
    let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n# quad\nf 1 2 3 4\n";
    let err = parse_obj(text, origin()).unwrap_err();
    assert!(err.to_string().contains("non-triangular face at line 6"), "{err}");
    assert!(matches!(err, Error::Parse { line: 6, .. }));
}

#[test]
fn malformed_number_reports_its_line() {
    let text = "v 0 0 0\nv 1 zero 0\n";
    assert!(matches!(parse_obj(text, origin()), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn obj_tolerates_whitespace_runs_and_slash_indices() {
    let text = "# comment\nv\t0  0 0\nv 1 0\t\t0\nv 0 1 0\nvn 0 0 1\nf 1/1/1   2//1 3\n";
    let mesh = parse_obj(text, origin()).unwrap();
    assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    let neg = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n", origin()).unwrap();
    assert_eq!(neg.faces(), &[[0, 1, 2]]);
}

#[test]
fn out_of_range_face_is_an_error() {
    assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n", origin()).is_err());
    assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", origin()).is_err());
}

#[test]
fn ply_with_extra_properties_and_comments() {
    let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 3\nproperty float nx\nproperty float x\n\
                property float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
                9 0 0 0\n9 1 0 0\n9 0 1 0\n3 0 1 2\n";
    let (v, f) = parse_ply(text, Path::new("a.ply")).unwrap();
    assert_eq!(v, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    assert_eq!(f, vec![[0, 1, 2]]);
}

#[test]
fn ply_rejects_binary_quads_and_truncation() {
    let binary = "ply\nformat binary_little_endian 1.0\nend_header\n";
    assert!(matches!(
        parse_ply(binary, Path::new("b.ply")),
        Err(Error::Parse { line: 2, .. })
    ));
    let quad = format_ply(
        &[[0.0; 3], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
        &[[0, 1, 2]],
    )
    .replace("3 0 1 2", "4 0 1 2 3");
    let err = parse_ply(&quad, Path::new("q.ply")).unwrap_err();
    assert!(err.to_string().contains("non-triangular face"), "{err}");
    let short = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
    assert!(parse_ply(short, Path::new("s.ply")).is_err());
}

#[test]
fn ply_vertex_count_matches_header() {
    let mesh = cylinder(41, 84, 0.3, 1.0);
    assert_eq!(mesh.vertex_count(), 3446);
    let (v, f) = parse_ply(&format_ply(mesh.vertices(), mesh.faces()), Path::new("big.ply")).unwrap();
    assert_eq!(v.len(), 3446);
    assert_eq!(f.len(), mesh.faces().len());
}

#[test]
fn unknown_extension_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(save_mesh(&icosphere(0), &dir.path().join("x.stl")).is_err());
    assert!(matches!(
        load_mesh(&dir.path().join("missing.obj")),
        Err(Error::Io { .. })
    ));
}

proptest! {
    #[test]
    fn random_vertices_round_trip_through_both_formats(coords in prop::collection::vec(-1e6f64..1e6, 12..=12)) {
        let v: Vec<[f64; 3]> = coords.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        let mesh = Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        prop_assert_eq!(&parse_obj(&format_obj(&mesh), origin()).unwrap(), &mesh);
        let (pv, pf) = parse_ply(&format_ply(mesh.vertices(), mesh.faces()), Path::new("p.ply")).unwrap();
        prop_assert_eq!(pv.as_slice(), mesh.vertices());
        prop_assert_eq!(pf.as_slice(), mesh.faces());
    }
}
