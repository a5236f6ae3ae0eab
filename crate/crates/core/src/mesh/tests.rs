use super::*;
use alloc::collections::BTreeSet;
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn triangle() -> Mesh {
    Mesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap()
}

fn strip() -> Mesh {
    Mesh::new(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
        vec![[0, 1, 2], [1, 3, 2]],
    )
    .unwrap()
}

#[test]
fn rejects_bad_faces_and_non_finite_vertices() {
    let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    assert!(Mesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
    assert!(Mesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
    let mut bad = v;
    bad[1][2] = f64::NAN;
    assert!(Mesh::new(bad, vec![[0, 1, 2]]).is_err());
}

#[test]
fn triangle_one_ring_is_complete() {
    let g = build_neighborhoods(&triangle(), 1).unwrap();
    assert_eq!(g.neighbors(0), &[1, 2]);
    assert_eq!(g.neighbors(1), &[0, 2]);
    assert_eq!(g.neighbors(2), &[0, 1]);
}

#[test]
fn strip_two_ring_is_complete() {
    let g = build_neighborhoods(&strip(), 2).unwrap();
    for i in 0..4 {
        let expected: Vec<usize> = (0..4).filter(|&j| j != i).collect();
        assert_eq!(g.neighbors(i), expected.as_slice());
    }
    // 0 and 3 are not adjacent at ring 1
    let g1 = build_neighborhoods(&strip(), 1).unwrap();
    assert!(!g1.neighbors(0).contains(&3));
}

#[test]
fn zero_ring_is_rejected() {
    assert!(build_neighborhoods(&triangle(), 0).is_err());
}

#[test]
fn icosphere_level1_degrees_match_edge_enumeration() {
    let m = icosphere(1);
    assert_eq!(m.vertex_count(), 42);
    // brute force: every ordered vertex pair, adjacent if some face holds both
    let n = m.vertex_count();
    let g = build_neighborhoods(&m, 1).unwrap();
    for i in 0..n {
        let deg = (0..n)
            .filter(|&j| j != i && m.faces().iter().any(|f| f.contains(&i) && f.contains(&j)))
            .count();
        assert!(deg == 5 || deg == 6, "vertex {i} has degree {deg}");
        assert_eq!(g.neighbors(i).len(), deg);
    }
}

#[test]
fn isolated_vertices_are_flagged() {
    let m = Mesh::new(
        vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [5.0, 5.0, 5.0]],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let g = build_neighborhoods(&m, 2).unwrap();
    assert_eq!(g.isolated_vertices(), vec![3]);
}

/// Naive closure: expand the frontier `depth` times over all vertices.
fn closure_oracle(g: &NeighborhoodGraph, v: usize, depth: usize) -> BTreeSet<usize> {
    let mut set = BTreeSet::from([v]);
    for _ in 0..depth {
        let mut next = set.clone();
        for i in 0..g.vertex_count() {
            if set.iter().any(|&s| g.neighbors(s).contains(&i)) {
                next.insert(i);
            }
        }
        set = next;
    }
    set
}

#[test]
fn receptive_field_examples() {
    let tri = build_neighborhoods(&triangle(), 1).unwrap();
    assert_eq!(receptive_field(&tri, 1, 0).unwrap(), vec![1]);
    assert_eq!(receptive_field(&tri, 1, 1).unwrap(), vec![0, 1, 2]);
    assert!(receptive_field(&tri, 3, 1).is_err());

    let ico = build_neighborhoods(&icosphere(1), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let v = rng.random_range(0..42);
        let got: BTreeSet<usize> = receptive_field(&ico, v, 2).unwrap().into_iter().collect();
        assert_eq!(got, closure_oracle(&ico, v, 2));
    }
}

#[test]
fn shape_radius_examples() {
    let c = cube([-1.0; 3], [1.0; 3]);
    assert!((shape_radius(&c) - 3f64.sqrt()).abs() < 1e-12);
    let single = Mesh::new(vec![[3.0, 4.0, 5.0]], vec![]).unwrap();
    assert_eq!(shape_radius(&single), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts: Vec<[f64; 3]> = (0..100)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let cloud = Mesh::new(pts.clone(), vec![]).unwrap();
    let n = pts.len() as f64;
    let cx: f64 = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy: f64 = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let cz: f64 = pts.iter().map(|p| p[2]).sum::<f64>() / n;
    let mut best = 0.0f64;
    for p in &pts {
        let d = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2) + (p[2] - cz).powi(2)).sqrt();
        best = best.max(d);
    }
    assert!((shape_radius(&cloud) - best).abs() < 1e-12);
}

#[test]
fn unit_cube_volume_and_orientation() {
    let c = cube([0.0; 3], [1.0; 3]);
    let vol = signed_volume(&c);
    assert!((vol.value - 1.0).abs() < 1e-9);
    assert!(vol.watertight);

    let mirrored = c.map_vertices(|v| [-v[0], v[1], v[2]]).unwrap();
    assert!((signed_volume(&mirrored).value + 1.0).abs() < 1e-9);
}

#[test]
fn open_mesh_is_not_watertight() {
    let vol = signed_volume(&strip());
    assert!(!vol.watertight);
    assert!(signed_volume(&icosphere(1)).watertight);
    assert!(signed_volume(&cylinder(5, 8, 0.3, 1.0)).watertight);
}

#[test]
fn cylinder_volume_approaches_analytic() {
    let m = cylinder(6, 64, 0.5, 1.0);
    let v = signed_volume(&m).value;
    let exact = core::f64::consts::PI * 0.25 * 2.0;
    assert!(v > 0.0 && (v - exact).abs() / exact < 0.01, "{v} vs {exact}");
}

#[test]
fn icosphere_volume_matches_monte_carlo() {
    let m = icosphere(2);
    let normals: Vec<([f64; 3], [f64; 3])> = (0..m.faces().len())
        .map(|k| (m.vertices()[m.faces()[k][0]], m.face_normal(k)))
        .collect();
    let inside = |p: [f64; 3]| {
        normals
            .iter()
            .all(|&(a, n)| crate::math::dot3(crate::math::sub3(p, a), n) <= 0.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples = 1_000_000;
    let mut hits = 0usize;
    for _ in 0..samples {
        let p = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        if inside(p) {
            hits += 1;
        }
    }
    let mc = 8.0 * hits as f64 / samples as f64;
    let v = signed_volume(&m).value;
    assert!((v - mc).abs() / mc < 0.01, "volume {v} vs monte carlo {mc}");
}

#[test]
fn correspondence_rejects_repeats_and_bad_weights() {
    assert!(Correspondence::new(vec![(0, 1), (1, 1)], None).is_err());
    assert!(Correspondence::new(vec![(0, 1), (0, 2)], None).is_err());
    assert!(Correspondence::new(vec![(0, 1)], Some(vec![1.5])).is_err());
    assert!(Correspondence::new(vec![(0, 1)], Some(vec![0.5, 0.5])).is_err());
    let c = Correspondence::new(vec![(0, 2), (1, 0)], Some(vec![0.5, 1.0])).unwrap();
    let x = [[0.0; 3], [1.0; 3], [2.0; 3]];
    assert_eq!(c.select(&x), vec![[2.0; 3], [0.0; 3]]);
    assert!(c.check_bounds(2, 3).is_ok());
    assert!(c.check_bounds(1, 3).is_err());
}

fn random_rigid(ax: f64, ay: f64, az: f64, t: [f64; 3]) -> impl Fn(&[f64; 3]) -> [f64; 3] {
    let r = Rotation3::from_euler_angles(ax, ay, az);
    move |v: &[f64; 3]| {
        let p = r * Vector3::new(v[0], v[1], v[2]);
        [p.x + t[0], p.y + t[1], p.z + t[2]]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn neighborhoods_are_symmetric(level in 0usize..2, ring in 1usize..4) {
        let g = build_neighborhoods(&icosphere(level), ring).unwrap();
        prop_assert!(g.is_symmetric());
        let c = build_neighborhoods(&cylinder(4, 7, 0.3, 1.0), ring).unwrap();
        prop_assert!(c.is_symmetric());
    }

    #[test]
    fn receptive_fields_are_nested(v in 0usize..42, d in 0usize..4) {
        let g = build_neighborhoods(&icosphere(1), 1).unwrap();
        let small = receptive_field(&g, v, d).unwrap();
        let big = receptive_field(&g, v, d + 1).unwrap();
        prop_assert!(small.iter().all(|x| big.binary_search(x).is_ok()));
    }

    #[test]
    fn radius_and_volume_are_rigid_invariant(
        ax in -3.0f64..3.0, ay in -3.0f64..3.0, az in -3.0f64..3.0,
        tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
        s in 0.2f64..3.0,
    ) {
        let m = icosphere(1).map_vertices(|v| [v[0] * 1.3, v[1], v[2] * 0.7]).unwrap();
        let moved = m.map_vertices(random_rigid(ax, ay, az, [tx, ty, tz])).unwrap();
        prop_assert!((shape_radius(&m) - shape_radius(&moved)).abs() < 1e-9);
        let v0 = signed_volume(&m).value;
        prop_assert!((v0 - signed_volume(&moved).value).abs() < 1e-9);
        let scaled = m.map_vertices(|v| [v[0] * s, v[1] * s, v[2] * s]).unwrap();
        prop_assert!((signed_volume(&scaled).value - v0 * s * s * s).abs() < 1e-9 * (1.0 + s * s * s));
    }
}
