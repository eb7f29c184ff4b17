use proptest::prelude::*;
use tdnns::mesh2d::{build_cook_tri_mesh, build_rect_tri_mesh, cross, Mesh2D, Point};

fn closed_polygon_defect(m: &Mesh2D, t: usize) -> f64 {
    let mut s = Point::zeros();
    for (i, &e) in m.tri_edges(t).iter().enumerate() {
        let f = m.facet_frame(e);
        s += m.tri_edge_signs(t)[i] * f.length * f.normal;
    }
    s.norm()
}

fn assert_structure(m: &Mesh2D) {
    m.check_invariants().unwrap();
    for t in 0..m.num_triangles() {
        let [a, b, c] = m.tri_points(t);
        assert!(cross(b - a, c - a) > 0.0);
        assert!(closed_polygon_defect(m, t) < 1e-12 * m.max_diameter());
    }
    for e in 0..m.num_edges() {
        let f = m.facet_frame(e);
        assert!((f.normal.norm() - 1.0).abs() < 1e-14);
        assert!((f.tangent.norm() - 1.0).abs() < 1e-14);
        assert!((f.normal - Point::new(f.tangent.y, -f.tangent.x)).norm() < 1e-15);
        let n_adj = m.edge_triangles(e).len();
        assert_eq!(n_adj, if m.is_boundary_edge(e) { 1 } else { 2 });
        if m.is_boundary_edge(e) {
            assert!(m.edge_region(e).is_some());
        } else {
            assert_eq!(f.sides.len(), 2);
            assert_eq!(f.sides[0].1 * f.sides[1].1, -1.0);
        }
    }
    let euler = m.num_vertices() as i64 - m.num_edges() as i64 + m.num_triangles() as i64;
    assert_eq!(euler, 1);
}

#[test]
fn rect_mesh_counts() {
    let m = build_rect_tri_mesh(1, 1, 1.0, 1.0, Point::zeros()).unwrap();
    assert_eq!((m.num_vertices(), m.num_edges(), m.num_triangles()), (4, 5, 2));
    let m = build_rect_tri_mesh(10, 1, 10.0, 0.1, Point::zeros()).unwrap();
    assert_eq!((m.num_vertices(), m.num_edges(), m.num_triangles()), (22, 41, 20));
    for r in ["left", "right", "top", "bottom"] {
        assert!(m.has_region(r));
    }
}

#[test]
fn rect_mesh_rejects_bad_input() {
    assert!(build_rect_tri_mesh(0, 2, 1.0, 1.0, Point::zeros()).is_err());
    assert!(build_rect_tri_mesh(2, 2, 0.0, 1.0, Point::zeros()).is_err());
    assert!(build_rect_tri_mesh(2, 2, 1.0, -2.0, Point::zeros()).is_err());
}

#[test]
fn cook_mesh_geometry() {
    let m = build_cook_tri_mesh(1).unwrap();
    assert_eq!((m.num_vertices(), m.num_edges(), m.num_triangles()), (4, 5, 2));
    let m = build_cook_tri_mesh(2).unwrap();
    assert_eq!((m.num_vertices(), m.num_edges(), m.num_triangles()), (9, 16, 8));
    for c in [(0.0, 0.0), (48.0, 44.0), (48.0, 60.0), (0.0, 44.0)] {
        let p = Point::new(c.0, c.1);
        assert!(m.vertices().iter().any(|v| (v - p).norm() < 1e-12));
    }
    assert!(build_cook_tri_mesh(0).is_err());
    assert_structure(&m);
}

#[test]
fn facet_frame_examples() {
    let m = build_rect_tri_mesh(1, 1, 1.0, 1.0, Point::zeros()).unwrap();
    let find = |p: usize, q: usize| (0..m.num_edges()).find(|&e| m.edges()[e] == [p, q]).unwrap();
    let f = m.facet_frame(find(0, 1));
    assert_eq!(f.tangent, Point::new(1.0, 0.0));
    assert_eq!(f.normal, Point::new(0.0, -1.0));
    assert_eq!(f.length, 1.0);
    let f = m.facet_frame(find(0, 3));
    assert!((f.length - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn refinement_examples() {
    let m = build_rect_tri_mesh(1, 1, 1.0, 1.0, Point::zeros()).unwrap();
    let r = m.uniform_refine();
    assert_eq!(r.num_triangles(), 8);
    assert_eq!(r.num_vertices(), m.num_vertices() + m.num_edges());
    assert!((r.total_area() - 1.0).abs() < 1e-15);
    assert_eq!(r.region_names().len(), 4);
}

#[test]
fn mesh_file_is_byte_stable() {
    let m = build_cook_tri_mesh(3).unwrap().jitter_interior(0.2, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mesh.json");
    m.write(&path).unwrap();
    let back = Mesh2D::read(&path).unwrap();
    assert_eq!(back.to_json(), m.to_json());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), m.to_json());
}

proptest! {
    #[test]
    fn generated_meshes_satisfy_invariants(nx in 1usize..7, ny in 1usize..7, lx in 0.1f64..50.0, ly in 0.1f64..50.0, refine in any::<bool>(), seed in 0u64..1000) {
        let mut m = build_rect_tri_mesh(nx, ny, lx, ly, Point::new(-1.0, 2.0)).unwrap();
        prop_assert_eq!(m.num_triangles(), 2 * nx * ny);
        if refine {
            m = m.uniform_refine();
        }
        let area = m.total_area();
        m = m.jitter_interior(0.2, seed).unwrap();
        prop_assert!((m.total_area() - area).abs() < 1e-10 * area);
        assert_structure(&m);
    }

    #[test]
    fn cook_meshes_satisfy_invariants(n in 1usize..9) {
        let m = build_cook_tri_mesh(n).unwrap();
        prop_assert!((m.total_area() - 1440.0).abs() < 1e-9);
        assert_structure(&m);
        assert_structure(&m.uniform_refine());
    }
}
