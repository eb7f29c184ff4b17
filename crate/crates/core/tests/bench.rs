mod common;

use std::f64::consts::PI;
use std::process::Command;

use common::*;
use nalgebra::Vector2;
use tdnns::bench::*;
use tdnns::forms::{condense::State, Discretization, Field, Method, MethodKind};
use tdnns::material::Variant;
use tdnns::mesh2d::{build_rect_tri_mesh, Point};
use tdnns::solver::{SolveReport, ULState};

#[test]
fn eoc_examples() {
    let h = [0.5, 0.25];
    assert!((eoc(&[1e-2, 1.25e-3], &h)[0].unwrap() - 3.0).abs() < 1e-12);
    assert!((eoc(&[1e-2, 2.5e-3], &h)[0].unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(eoc(&[1e-2, 1e-2], &h)[0], Some(0.0));
    assert_eq!(eoc(&[1e-2, 0.0], &h)[0], None);
    assert_eq!(eoc(&[1e-2, 1e-3], &[0.5, 0.5])[0], None);
}

#[test]
fn rotation_readouts() {
    let r = Vector2::new(0.0, 1.0);
    assert_eq!(tip_rotation(&r, &r, 0.0).unwrap(), 0.0);
    let rot = |a: f64| rotation(a) * r;
    assert!((tip_rotation(&r, &rot(0.3), 0.0).unwrap() - 0.3).abs() < 1e-15);
    let a = tip_rotation(&r, &rot(PI - 0.01), 0.0).unwrap();
    let b = tip_rotation(&r, &rot(2.0 * PI - 0.02), a).unwrap();
    assert!((b - (2.0 * PI - 0.02)).abs() < 1e-12);
    assert!((unwrap_angle(PI, 0.0 + 2.0 * PI) - 2.0 * PI).abs() < 1e-15);
    assert!(tip_rotation(&r, &Vector2::zeros(), 0.0).is_err());
}

#[test]
fn circle_moment_value() {
    let m0 = circle_moment(CIRCLE_MU, CIRCLE_THICKNESS, CIRCLE_LENGTH);
    assert!((m0 - 104.720).abs() < 5e-4);
    assert!((m0 - 4.0 * PI * 1e4 / 1200.0).abs() < 1e-12);
}

#[test]
fn manufactured_solution_values() {
    let m = manufactured_fields();
    assert_eq!((m.u)(&Point::new(0.3, 0.0)), Vector2::zeros());
    let f1 = (m.body)(&Point::new(0.4, 1.0));
    assert!((f1 - Vector2::new(-1.76630, 0.0)).norm() < 1e-5);
    let top = m.tractions.iter().find(|(n, _)| n == "top").unwrap();
    assert!(((top.1)(&Point::new(0.2, 1.0)) - Vector2::new(1.5, 0.0)).norm() < 1e-14);
    // f = −div P(F(U_ex)) by central differences of the material law.
    let l = law(Variant::NeoHookeDet, 1.0, 1.0);
    let p_at = |x: &Point| l.pk1(&(Mat2::identity() + (m.grad)(x))).unwrap();
    let h = 1e-5;
    for (x, y) in [(0.1, 0.2), (0.5, 0.5), (0.9, 0.1), (0.3, 0.8), (0.7, 0.95)] {
        let q = Point::new(x, y);
        let dx = (p_at(&Point::new(x + h, y)) - p_at(&Point::new(x - h, y))) / (2.0 * h);
        let dy = (p_at(&Point::new(x, y + h)) - p_at(&Point::new(x, y - h))) / (2.0 * h);
        let div = Vector2::new(dx[(0, 0)] + dy[(0, 1)], dx[(1, 0)] + dy[(1, 1)]);
        assert!(((m.body)(&q) + div).norm() < 1e-8);
        assert!((p_at(&q) - shearing_stress(&q)).norm() < 1e-14);
        // Gradient of U_ex against central differences.
        let du = ((m.u)(&Point::new(x, y + h)) - (m.u)(&Point::new(x, y - h))) / (2.0 * h);
        assert!((du.x - (m.grad)(&q)[(0, 1)]).abs() < 1e-9);
    }
}

#[test]
fn error_norms_examples() {
    // Zero state: the error norms are the norms of U_ex and of ∇U_ex.
    let mesh = shearing_plate_mesh(2, 1).unwrap();
    let m = manufactured_fields();
    let u = |y: f64| 0.5 * y.powi(3) + 0.5 * (0.5 * PI * y).sin();
    let du = |y: f64| 1.5 * y * y + 0.25 * PI * (0.5 * PI * y).cos();
    let nu = integrate_1d(|y| u(y).powi(2), 0.0, 1.0, 8).sqrt();
    let ng = integrate_1d(|y| du(y).powi(2), 0.0, 1.0, 8).sqrt();
    for kind in [MethodKind::Std, MethodKind::Flift] {
        let d = Discretization::new(mesh.clone(), Method::new(kind, 2)).unwrap();
        let (eu, eg) = error_norms(&d, &d.initial_state(), &*m.u, &*m.grad).unwrap();
        assert!((eu - nu).abs() < 1e-6 * nu, "{eu} vs {nu}");
        assert!((eg - ng).abs() < 1e-6 * ng, "{eg} vs {ng}");
    }
    // A representable exact field gives vanishing errors.
    let g = Mat2::new(0.1, 0.2, -0.3, 0.05);
    let uq = move |p: &Point| g * p + Vector2::new(0.1 * p.y * p.y, 0.2 * p.x * p.y);
    let gq = move |p: &Point| g + Mat2::new(0.0, 0.2 * p.y, 0.2 * p.y, 0.2 * p.x);
    for kind in [MethodKind::Std, MethodKind::Flift, MethodKind::Clift, MethodKind::FClift] {
        let d = Discretization::new(mesh.clone(), Method::new(kind, 2)).unwrap();
        let mut x = d.initial_state();
        let us = d.space(Field::U).unwrap().interpolate(&d.mesh, &uq).unwrap();
        d.field_slice_mut(Field::U, &mut x).unwrap().copy_from_slice(&us);
        for f in [Field::Fsym, Field::C] {
            if let Some(s) = d.space(f) {
                let v = s
                    .project_sym(&d.mesh, &|_, p| {
                        let fm = Mat2::identity() + gq(p);
                        if f == Field::C {
                            fm.transpose() * fm
                        } else {
                            0.5 * (fm + fm.transpose())
                        }
                    })
                    .unwrap();
                d.field_slice_mut(f, &mut x).unwrap().copy_from_slice(&v);
            }
        }
        let (eu, eg) = error_norms(&d, &x, &uq, &gq).unwrap();
        assert!(eu < 1e-12 && eg < 1e-12, "{kind:?}: {eu:e} {eg:e}");
    }
}

fn solution_with(x: Vec<f64>, ul: Option<ULState>) -> Solution {
    Solution {
        state: State::new(x),
        ul,
        report: SolveReport::default(),
    }
}

#[test]
fn point_deflection_examples() {
    let mesh = build_rect_tri_mesh(4, 1, 10.0, 1.0, Point::zeros()).unwrap();
    let tip = Point::new(10.0, 0.5);
    for kind in [MethodKind::Std, MethodKind::Flift] {
        let d = Discretization::new(mesh.clone(), Method::new(kind, 2)).unwrap();
        let sol = solution_with(d.initial_state(), None);
        assert_eq!(point_deflection(&d, &sol, &tip).unwrap(), 0.0);
        let mut x = d.initial_state();
        let u = d.space(Field::U).unwrap().interpolate(&d.mesh, &|_| Vector2::new(0.0, 0.7)).unwrap();
        d.field_slice_mut(Field::U, &mut x).unwrap().copy_from_slice(&u);
        let sol = solution_with(x, None);
        assert!((point_deflection(&d, &sol, &tip).unwrap() - 0.7).abs() < 1e-13);
        assert!((point_deflection(&d, &sol, &Point::new(3.3, 0.2)).unwrap() - 0.7).abs() < 1e-13);
        assert!(point_displacement(&d, &sol, &Point::new(11.0, 0.5)).is_err());
        let mut ul = ULState::new(&d).unwrap();
        ul.u0 = ul.space.interpolate(&d.mesh, &|_| Vector2::new(0.0, -0.4)).unwrap();
        let sol = solution_with(d.initial_state(), Some(ul));
        assert!((point_deflection(&d, &sol, &tip).unwrap() + 0.4).abs() < 1e-13);
    }
}

#[test]
fn benchmark_rows_are_byte_stable() {
    let mut spec = BenchmarkSpec::new(BenchName::ThinBeam, MethodKind::Clift);
    spec.grid = (4, 1);
    spec.force = 0.2;
    let a = run_benchmark(&spec).unwrap();
    let b = run_benchmark(&spec).unwrap();
    assert!(a.success);
    assert_eq!(to_csv(&a.rows), to_csv(&b.rows));
    let csv = to_csv(&a.rows);
    assert!(csv.starts_with(CSV_HEADER));
    let d = &a.problem.d;
    let partition: usize = [Field::U, Field::Alpha]
        .iter()
        .map(|&f| d.space(f).unwrap().dofs.n_coupling)
        .sum();
    for r in &a.rows {
        assert_eq!(r.ncoupling, partition);
        assert!(r.ncoupling <= r.ndof);
        assert_eq!(r.ndof, d.n_total);
        assert_eq!(r.ne, 8);
    }
    let w = a.rows.iter().find(|r| r.quantity == "w_A").unwrap().value.unwrap();
    let line = csv.lines().find(|l| l.contains(",w_A,")).unwrap();
    assert_eq!(line.rsplit(',').next().unwrap().parse::<f64>().unwrap(), format!("{w:.10e}").parse::<f64>().unwrap());
}

#[test]
fn failed_rows_carry_the_marker() {
    let r = ResultRow {
        method: "F".into(),
        order: 2,
        ne: 8,
        ndof: 100,
        ncoupling: 40,
        quantity: "w_A".into(),
        value: None,
    };
    assert_eq!(r.csv(), "F,2,8,100,40,w_A,-");
    let ok = ResultRow { value: Some(7.5), ..r };
    assert_eq!(ok.csv(), "F,2,8,100,40,w_A,7.5000000000e0");
}

#[test]
fn spec_validation() {
    let mut s = BenchmarkSpec::new(BenchName::Cooks, MethodKind::Flift);
    s.grid = (0, 3);
    assert!(build_problem(&s).is_err());
    let mut s = BenchmarkSpec::new(BenchName::EndMoment, MethodKind::Flift);
    s.ul = false;
    assert!(build_problem(&s).is_err());
    let s = BenchmarkSpec::new(BenchName::EndMoment, MethodKind::Std);
    assert!(build_problem(&s).is_err());
    let mut s = BenchmarkSpec::new(BenchName::ThinBeam, MethodKind::LinearTDNNS);
    s.ul = true;
    assert!(build_problem(&s).is_err());
    assert_eq!(BenchName::parse("cooks"), Some(BenchName::Cooks));
    assert_eq!(BenchName::parse("shearing_plate").map(|b| b.name()), Some("shearing_plate"));
    assert!(convergence_study(&BenchmarkSpec::new(BenchName::Cooks, MethodKind::Flift), 2).is_err());
}

/// The thin-beam geometry sits in the large-deflection regime of the
/// plane-strain elastica, and the mixed solution on the coarse grid is
/// close to it.
#[test]
fn thin_beam_against_elastica() {
    let (mu, lambda) = (6000.0, 24000.0);
    let e_plane = 4.0 * mu * (mu + lambda) / (2.0 * mu + lambda);
    let ei = e_plane * BEAM_THICKNESS.powi(3) / 12.0;
    let p = BEAM_THICKNESS;
    // Linear-theory limit as a sanity check of the shooting oracle.
    let small = elastica_tip_deflection(1e-4 * p, ei, BEAM_LENGTH);
    assert!((small - 1e-4 * p * BEAM_LENGTH.powi(3) / (3.0 * ei)).abs() < 1e-6 * small);
    let w_el = elastica_tip_deflection(p, ei, BEAM_LENGTH);
    assert!((w_el - 7.4457).abs() < 1e-3, "{w_el}");
    let spec = BenchmarkSpec::new(BenchName::ThinBeam, MethodKind::Flift);
    let out = run_benchmark(&spec).unwrap();
    let w = out.rows.iter().find(|r| r.quantity == "w_A").unwrap().value.unwrap();
    println!("elastica {w_el:.4}, Flift 10x1 {w:.4}");
    assert!(((w - w_el) / w_el).abs() < 0.01);
}

#[test]
fn vtk_export() {
    let mut spec = BenchmarkSpec::new(BenchName::ThinBeam, MethodKind::Flift);
    spec.grid = (4, 1);
    spec.force = 0.1;
    let out = run_benchmark(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.vtk");
    write_vtk(&path, &out.problem, out.solution.as_ref().unwrap()).unwrap();
    let s = std::fs::read_to_string(&path).unwrap();
    for key in ["POINTS 10 double", "CELLS 8 32", "VECTORS displacement", "SCALARS J", "SCALARS vonMises"] {
        assert!(s.contains(key), "{key}");
    }
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tdnns")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let (code, stdout) = cli(&["run", "--bench", "thin_beam", "--method", "F", "--grid", "4,1", "--force", "0.1", "--out", o, "--vtk"]);
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(dir.path().join("results.csv")).unwrap(), stdout);
    assert!(dir.path().join("deformed.vtk").exists());
    let (code, stdout) = cli(&["run", "--bench", "cooks", "--method", "std", "--grid", "1", "--force", "1e6", "--loadsteps", "1", "--out", o]);
    assert_eq!(code, 2);
    assert!(stdout.contains(",w_A,-"));
    let (code, _) = cli(&["run", "--bench", "nope", "--out", o]);
    assert_eq!(code, 1);
    let (code, stdout) = cli(&["convergence", "--bench", "shearing_plate", "--method", "std", "--levels", "2", "--out", o]);
    assert_eq!(code, 0);
    assert!(stdout.contains(",eoc_u,"));
}
