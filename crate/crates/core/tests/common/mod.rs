#![allow(dead_code)]

use rand::Rng;
use tdnns::material::{HyperelasticLaw, LameParams, Variant};

pub use tdnns::material::Mat2;

pub const VARIANTS: [Variant; 3] = [Variant::NeoHookeDet, Variant::NeoHookeLog, Variant::StVenantKirchhoff];

pub fn law(v: Variant, mu: f64, lambda: f64) -> HyperelasticLaw {
    HyperelasticLaw::new(v, LameParams::new(mu, lambda).unwrap())
}

pub fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Random deformation gradient with det F = j.
pub fn gradient_with_det<R: Rng>(rng: &mut R, j: f64) -> Mat2 {
    let a = Mat2::from_fn(|_, _| rng.random_range(-0.3..0.3));
    let f0 = Mat2::identity() + a;
    f0 * (j / f0.determinant()).sqrt()
}

/// Random deformation gradient with det F in [0.5, 2].
pub fn random_gradient<R: Rng>(rng: &mut R) -> Mat2 {
    let j = rng.random_range(0.5..2.0);
    gradient_with_det(rng, j)
}

/// Central difference of a scalar function of a 2×2 matrix, entry (i, j).
pub fn fd_entry(g: impl Fn(&Mat2) -> f64, m: &Mat2, i: usize, j: usize, h: f64) -> f64 {
    let mut p = *m;
    let mut q = *m;
    p[(i, j)] += h;
    q[(i, j)] -= h;
    (g(&p) - g(&q)) / (2.0 * h)
}

/// Central difference of a scalar function of a symmetric matrix along the
/// symmetric direction of entry (i, j).
pub fn fd_sym(g: impl Fn(&Mat2) -> f64, m: &Mat2, i: usize, j: usize, h: f64) -> f64 {
    let mut e = Mat2::zeros();
    e[(i, j)] = 1.0;
    e[(j, i)] = 1.0;
    (g(&(m + h * e)) - g(&(m - h * e))) / (2.0 * h)
}

pub fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1e-300)
}

/// Composite Gauss-Legendre integral of f over [a, b] with n panels.
pub fn integrate_1d(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let g = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (0.0, 0.568_888_888_888_888_9),
        (0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let h = (b - a) / n as f64;
    let mut s = 0.0;
    for p in 0..n {
        let m = a + (p as f64 + 0.5) * h;
        for (x, w) in g {
            s += w * 0.5 * h * f(m + 0.5 * h * x);
        }
    }
    s
}

use nalgebra::{DVector, Vector2};
use tdnns::forms::{Discretization, Field};
use tdnns::mesh2d::Point;

/// Fields of a state evaluated at a reference point of one element.
pub struct PointFields {
    pub u: Vector2<f64>,
    pub grad_u: Mat2,
    pub sym: Vec<(Field, Mat2)>,
}

impl PointFields {
    pub fn get(&self, f: Field) -> Option<Mat2> {
        self.sym.iter().find(|(g, _)| *g == f).map(|(_, m)| *m)
    }
}

pub fn eval_fields(d: &Discretization, x: &[f64], t: usize, l: [f64; 2]) -> PointFields {
    let us = d.space(Field::U).unwrap();
    let ue = DVector::from_vec(us.gather(t, d.field_slice(Field::U, x).unwrap()));
    let e = us.eval_vec(t, l).unwrap();
    let v = &e.val * &ue;
    let g = &e.grad * &ue;
    let mut sym = Vec::new();
    for f in [Field::Fsym, Field::Psym, Field::C, Field::Sigma, Field::Stress] {
        if let Some(s) = d.space(f) {
            let c = DVector::from_vec(s.gather(t, d.field_slice(f, x).unwrap()));
            let m = s.eval_sym(l).unwrap() * c;
            sym.push((f, Mat2::new(m[0], m[2], m[2], m[1])));
        }
    }
    PointFields {
        u: Vector2::new(v[0], v[1]),
        grad_u: Mat2::new(g[0], g[2], g[3], g[1]),
        sym,
    }
}

/// Tensor-product Gauss rule on a triangle through the collapsed square.
pub fn integrate_triangle(f: impl Fn(&Point) -> f64, p: [Point; 3], panels: usize) -> f64 {
    let jac = tdnns::mesh2d::cross(p[1] - p[0], p[2] - p[0]).abs();
    integrate_1d(
        |s| {
            integrate_1d(
                |r| {
                    let a = s;
                    let b = (1.0 - s) * r;
                    (1.0 - s) * f(&(p[0] + a * (p[1] - p[0]) + b * (p[2] - p[0])))
                },
                0.0,
                1.0,
                panels,
            )
        },
        0.0,
        1.0,
        panels,
    ) * jac
}

/// Gauss rule along the segment a→b; the integrand receives the point.
pub fn integrate_segment(f: impl Fn(&Point) -> f64, a: Point, b: Point, panels: usize) -> f64 {
    (b - a).norm() * integrate_1d(|s| f(&(a + s * (b - a))), 0.0, 1.0, panels)
}

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use tdnns::forms::condense::{assemble_condensed, assemble_monolithic, back_substitute, State};
use tdnns::forms::{Dirichlet, Loads, Method, MethodKind};
use tdnns::material::skw;
use tdnns::mesh2d::build_rect_tri_mesh;
use tdnns::solver::{run_load_steps, NewtonConfig, Problem};

pub const ALL_METHODS: [MethodKind; 5] = [
    MethodKind::Std,
    MethodKind::LinearTDNNS,
    MethodKind::Flift,
    MethodKind::Clift,
    MethodKind::FClift,
];

pub const NONLINEAR_METHODS: [MethodKind; 3] = [MethodKind::Flift, MethodKind::Clift, MethodKind::FClift];

/// Method of order k, with the given stabilization for C-lifting.
pub fn method_with(kind: MethodKind, k: usize, c1: f64, c2: f64) -> Method {
    let m = Method::new(kind, k);
    if kind == MethodKind::Clift {
        m.with_stabilization(c1, c2).unwrap()
    } else {
        m
    }
}

pub fn sample_loads() -> Loads {
    Loads {
        body: Some(Arc::new(|x| Vector2::new(0.3 * x.y, -0.2 + x.x))),
        tractions: vec![("right".into(), Arc::new(|x| Vector2::new(0.1, 0.2 * x.y)))],
        end_moment: None,
        factor: 1.0,
    }
}

pub fn perturbed_state<R: Rng>(d: &Discretization, rng: &mut R, amp: f64) -> Vec<f64> {
    let mut x = d.initial_state();
    for v in x.iter_mut() {
        *v += amp * rng.random_range(-1.0..1.0);
    }
    x
}

pub const PATCH_F: [f64; 4] = [1.1, 0.2, -0.05, 0.95];

/// Patch test: homogeneous deformation prescribed on the whole boundary of a
/// jittered square. Returns the largest quadrature-point deviation of F, C
/// and P from their exact values, and the solution with its discretization.
pub fn patch_test(kind: MethodKind, k: usize) -> (f64, f64, f64, Discretization, Vec<f64>) {
    let fbar = Mat2::new(PATCH_F[0], PATCH_F[1], PATCH_F[2], PATCH_F[3]);
    let mesh = build_rect_tri_mesh(2, 2, 1.0, 1.0, Point::zeros())
        .unwrap()
        .jitter_interior(0.2, 3)
        .unwrap();
    let d = Discretization::new(mesh, method_with(kind, k, 1.0, 0.5)).unwrap();
    let law = law(Variant::NeoHookeDet, 1.0, 2.0);
    let gm = fbar - Mat2::identity();
    let bcs: Vec<Dirichlet> = ["left", "right", "top", "bottom"]
        .iter()
        .map(|r| Dirichlet {
            region: (*r).into(),
            datum: Arc::new(move |x: &Point| gm * x),
        })
        .collect();
    let loads = Loads::none();
    let p = Problem {
        d: &d,
        law: &law,
        loads: &loads,
        bcs: &bcs,
    };
    let cfg = NewtonConfig {
        atol: 1e-13,
        rtol: 1e-14,
        ..NewtonConfig::default()
    }
    .with_load_steps(1);
    let (s, _) = run_load_steps(&p, State::new(d.initial_state()), &cfg).unwrap();
    let (cbar, pbar) = (fbar.transpose() * fbar, law.pk1(&fbar).unwrap());
    let (mut ef, mut ec, mut ep): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for t in 0..d.mesh.num_triangles() {
        for l in &d.quad_vol.points {
            let pf = eval_fields(&d, &s.x, t, *l);
            let w = skw(pf.grad_u[(1, 0)] - pf.grad_u[(0, 1)]);
            let f = match pf.get(Field::Fsym) {
                Some(fs) => fs + w,
                None => Mat2::identity() + pf.grad_u,
            };
            ef = ef.max((f - fbar).amax());
            if let Some(c) = pf.get(Field::C) {
                ec = ec.max((c - cbar).amax());
            } else {
                ec = ec.max((f.transpose() * f - cbar).amax());
            }
            if let Some(ps) = pf.get(Field::Psym) {
                let fs = pf.get(Field::Fsym).unwrap();
                let pk = ps + law.recover_pskw(&fs, &w).unwrap();
                ep = ep.max((pk - pbar).amax());
            }
            if let Some(sg) = pf.get(Field::Sigma) {
                ep = ep.max((f * sg - pbar).amax());
            }
        }
    }
    (ef, ec, ep, d, s.x)
}

/// Relative Frobenius difference between the condensed zero-state tangent of
/// a lifted method with a quadratic potential and the condensed linear
/// hybridized matrix on a 2×2 grid.
pub fn small_strain_difference(kind: MethodKind) -> f64 {
    let mesh = build_rect_tri_mesh(2, 2, 1.0, 1.0, Point::zeros()).unwrap();
    let law = law(Variant::StVenantKirchhoff, 1.3, 0.8);
    let cons = BTreeMap::new();
    let matrix = |kind| {
        let d = Discretization::new(mesh.clone(), Method::new(kind, 2)).unwrap();
        let s = State::new(d.initial_state());
        assemble_condensed(&d, &s, &law, &Loads::none(), &cons, None).unwrap().dense()
    };
    let lin = matrix(MethodKind::LinearTDNNS);
    (matrix(kind) - &lin).norm() / lin.norm()
}

/// Condensed solve with back-substitution against a dense monolithic solve on
/// a two-element mesh at a random state. Returns the relative increment
/// difference and the relative linearized local residual.
pub fn condensation_errors(kind: MethodKind, seed: u64) -> (f64, f64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mesh = build_rect_tri_mesh(1, 1, 1.0, 1.0, Point::zeros()).unwrap();
    let d = Discretization::new(mesh, method_with(kind, 2, 0.7, 0.4)).unwrap();
    let law = law(Variant::NeoHookeDet, 1.0, 1.5);
    let loads = sample_loads();
    let bcs = [Dirichlet {
        region: "left".into(),
        datum: Arc::new(|_: &Point| Vector2::zeros()),
    }];
    let cons: BTreeMap<usize, f64> = d.dirichlet_values(&bcs, 1.0, None).unwrap().into_iter().collect();
    let mut x = perturbed_state(&d, &mut rng, 0.05);
    for (&i, &v) in &cons {
        x[i] = v;
    }
    let state = State::new(x);
    let sys = assemble_condensed(&d, &state, &law, &loads, &cons, None).unwrap();
    let dc = sys.dense().lu().solve(&sys.rhs).unwrap();
    let dx = back_substitute(&sys, &state, &dc).unwrap();
    let (k, r, free) = assemble_monolithic(&d, &state.x, &law, &loads, &cons, None).unwrap();
    let dm = k.clone().lu().solve(&(-&r)).unwrap();
    let dxf = DVector::from_iterator(free.len(), free.iter().map(|&i| dx[i]));
    let inc = (&dxf - &dm).amax() / dm.amax();
    let lin = &k * &dxf + &r;
    let mut loc: f64 = 0.0;
    for (a, &i) in free.iter().enumerate() {
        if !d.is_coupling_flat(i) {
            loc = loc.max(lin[a].abs());
        }
    }
    (inc, loc / r.amax().max(1.0))
}

/// Smallest eigenvalue over the largest of the condensed linear hybridized
/// matrix on a 2×2 grid clamped on the left, and its asymmetry.
pub fn linear_condensed_spectrum() -> (f64, f64) {
    let mesh = build_rect_tri_mesh(2, 2, 1.0, 1.0, Point::zeros()).unwrap();
    let d = Discretization::new(mesh, Method::new(MethodKind::LinearTDNNS, 2)).unwrap();
    let law = law(Variant::NeoHookeDet, 1.0, 1.5);
    let bcs = [Dirichlet {
        region: "left".into(),
        datum: Arc::new(|_: &Point| Vector2::zeros()),
    }];
    let cons: BTreeMap<usize, f64> = d.dirichlet_values(&bcs, 1.0, None).unwrap().into_iter().collect();
    let sys = assemble_condensed(&d, &State::new(d.initial_state()), &law, &Loads::none(), &cons, None).unwrap();
    let a: DMatrix<f64> = sys.dense();
    let asym = (&a - a.transpose()).amax() / a.amax();
    let ev = a.symmetric_eigen().eigenvalues;
    (ev.min() / ev.max(), asym)
}

/// Tip deflection of an inextensible cantilever under an upward dead tip
/// load: shooting on θ″ = −(P/EI) cos θ, θ(0) = 0, θ′(L) = 0 with RK4.
pub fn elastica_tip_deflection(p: f64, ei: f64, l: f64) -> f64 {
    let n = 4000;
    let h = l / n as f64;
    let rhs = |y: [f64; 3]| [y[1], -p / ei * y[0].cos(), y[0].sin()];
    let integrate = |k0: f64| {
        let mut y = [0.0, k0, 0.0];
        for _ in 0..n {
            let k1 = rhs(y);
            let k2 = rhs(std::array::from_fn(|i| y[i] + 0.5 * h * k1[i]));
            let k3 = rhs(std::array::from_fn(|i| y[i] + 0.5 * h * k2[i]));
            let k4 = rhs(std::array::from_fn(|i| y[i] + h * k3[i]));
            for i in 0..3 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    };
    // θ′(0) lies between 0 and PL/EI; the end curvature changes sign once
    // while the tip angle stays below π/2.
    let (mut a, mut b) = (0.0, p * l / ei);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let y = integrate(m);
        if y[1] < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    integrate(0.5 * (a + b))[2]
}

use tdnns::forms::{element_system, Want};
use tdnns::material::{Convention, F_ORDER, V_ORDER};

/// Largest relative deviations found by the material oracle suite.
#[derive(Debug, Default)]
pub struct MaterialErrors {
    pub gradient: f64,
    pub hessian: f64,
    pub symmetry: f64,
    pub consistency: f64,
    pub objectivity: f64,
    pub f_vs_c: f64,
}

/// Central-difference checks of P, Σ and both tangents against the energy
/// on 50 random states per law and convention with det F in [0.5, 2], plus
/// F·Σ = P, objectivity under 20 rotations per state and F/C energy agreement.
pub fn material_oracle(seed: u64) -> MaterialErrors {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut e = MaterialErrors::default();
    for v in VARIANTS {
        for conv in [Convention::MuHalf, Convention::PaperHalf] {
            let l = law(v, 1.7, 2.3).with_convention(conv);
            for _ in 0..50 {
                let f = random_gradient(&mut rng);
                let c = f.transpose() * f;
                let p = l.pk1(&f).unwrap();
                let s = l.pk2(&c).unwrap();
                let tf = l.pk1_tangent(&f).unwrap();
                let tc = l.pk2_tangent(&c).unwrap();
                let hf = 1e-6 * f.amax();
                let hc = 1e-6 * c.amax();
                for i in 0..2 {
                    for j in 0..2 {
                        let d = fd_entry(|g| l.energy_f(g).unwrap(), &f, i, j, hf);
                        e.gradient = e.gradient.max(rel(d, p[(i, j)], p.amax().max(1.0)));
                    }
                }
                for &(i, j) in V_ORDER.iter() {
                    let d = fd_sym(|g| l.energy_c(g).unwrap(), &c, i, j, hc);
                    let want = if i == j { 0.5 * s[(i, j)] } else { s[(i, j)] };
                    e.gradient = e.gradient.max(rel(d, want, s.amax().max(1.0)));
                }
                for (col, &(m, n)) in F_ORDER.iter().enumerate() {
                    let mut fp = f;
                    let mut fm = f;
                    fp[(m, n)] += hf;
                    fm[(m, n)] -= hf;
                    let dp = (l.pk1(&fp).unwrap() - l.pk1(&fm).unwrap()) / (2.0 * hf);
                    for (row, &(i, j)) in F_ORDER.iter().enumerate() {
                        e.hessian = e.hessian.max(rel(dp[(i, j)], tf[(row, col)], tf.amax()));
                    }
                }
                for (col, &(k, q)) in V_ORDER.iter().enumerate() {
                    let mut dir = Mat2::zeros();
                    dir[(k, q)] = 1.0;
                    dir[(q, k)] = 1.0;
                    let ds = (l.pk2(&(c + hc * dir)).unwrap() - l.pk2(&(c - hc * dir)).unwrap()) / (2.0 * hc);
                    // A symmetric off-diagonal perturbation moves both c12 and c21.
                    let scale = if k == q { 1.0 } else { 2.0 };
                    for (row, &(i, j)) in V_ORDER.iter().enumerate() {
                        e.hessian = e.hessian.max(rel(ds[(i, j)], scale * tc[(row, col)], tc.amax()));
                    }
                }
                e.symmetry = e.symmetry.max((tf - tf.transpose()).amax() / tf.amax());
                e.symmetry = e.symmetry.max((s - s.transpose()).amax() / s.amax().max(1.0));
                let (_, _, hs) = l.energy_c_sym(&c).unwrap();
                e.symmetry = e.symmetry.max((hs - hs.transpose()).amax() / hs.amax());
                e.consistency = e.consistency.max((f * s - p).amax() / p.amax().max(1.0));
                let psi = l.energy_f(&f).unwrap();
                for _ in 0..20 {
                    let r = rotation(rng.random_range(-PI_F..PI_F));
                    e.objectivity = e.objectivity.max((l.energy_f(&(r * f)).unwrap() - psi).abs() / psi.abs().max(1.0));
                }
                e.f_vs_c = e.f_vs_c.max((l.energy_c(&c).unwrap() - psi).abs() / psi.abs().max(1.0));
            }
        }
    }
    e
}

const PI_F: f64 = std::f64::consts::PI;

/// Relative deviations of element residuals from central differences of the
/// element Lagrangian and of tangents from central differences of the
/// residual, over `trials` random states on a 2×2 grid.
pub fn element_fd_errors(kind: MethodKind, trials: usize, seed: u64) -> (f64, f64) {
    use rand::SeedableRng;
    let mesh = build_rect_tri_mesh(2, 2, 1.0, 1.0, Point::zeros()).unwrap();
    let law = law(Variant::NeoHookeDet, 1.0, 1.5);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let l = sample_loads();
    let d = Discretization::new(mesh.clone(), method_with(kind, 2, 0.7, 0.4)).unwrap();
    let (mut err_r, mut err_k): (f64, f64) = (0.0, 0.0);
    for trial in 0..trials {
        let x = perturbed_state(&d, &mut rng, 0.05);
        let t = trial % mesh.num_triangles();
        let es = element_system(&d, t, &x, &law, &l, None, Want::Tangent).unwrap();
        let k = es.tangent.as_ref().unwrap();
        let h = 1e-6;
        let scale_r = es.residual.amax().max(1.0);
        let scale_k = k.amax().max(1.0);
        for (a, &i) in es.dofs.iter().enumerate() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let ep = element_system(&d, t, &xp, &law, &l, None, Want::Residual).unwrap();
            let em = element_system(&d, t, &xm, &law, &l, None, Want::Residual).unwrap();
            let g = (ep.value - em.value) / (2.0 * h);
            err_r = err_r.max((g - es.residual[a]).abs() / scale_r);
            let col = (&ep.residual - &em.residual) / (2.0 * h);
            err_k = err_k.max((col - k.column(a)).amax() / scale_k);
        }
    }
    (err_r, err_k)
}
