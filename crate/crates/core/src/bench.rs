//! Benchmark drivers, manufactured solution, error norms, readouts and output.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DVector, Matrix2, Vector2};

use crate::fespace::{quad_rule, QuadDomain};
use crate::forms::condense::State;
use crate::forms::{
    Dirichlet, Discretization, EndMoment, Field, FormError, Loads, Method, MethodKind, VecFn,
};
use crate::material::{cauchy_stress, skw, von_mises, HyperelasticLaw, LameParams, Variant};
use crate::mesh2d::{build_cook_tri_mesh, build_rect_tri_mesh, Mesh2D, MeshError, Point};
use crate::solver::{
    run_load_steps, run_ul_load_steps, ul_advance, NewtonConfig, Problem, SolveReport, SolverError,
    ULState,
};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("forms: {0}")]
    Form(#[from] FormError),
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
    #[error("invalid benchmark parameters: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchName {
    ShearingPlate,
    Cooks,
    ThinBeam,
    EndMoment,
}

impl BenchName {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "shearing_plate" => Some(BenchName::ShearingPlate),
            "cooks" | "cook" => Some(BenchName::Cooks),
            "thin_beam" => Some(BenchName::ThinBeam),
            "end_moment" | "circle" => Some(BenchName::EndMoment),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BenchName::ShearingPlate => "shearing_plate",
            BenchName::Cooks => "cooks",
            BenchName::ThinBeam => "thin_beam",
            BenchName::EndMoment => "end_moment",
        }
    }
}

pub const COOK_MU: f64 = 80.194;
pub const COOK_LAMBDA: f64 = 40889.8;
pub const BEAM_LENGTH: f64 = 10.0;
pub const BEAM_THICKNESS: f64 = 0.1;
pub const CIRCLE_LENGTH: f64 = 100.0;
pub const CIRCLE_THICKNESS: f64 = 1.0;
pub const CIRCLE_MU: f64 = 1e4;
/// Jitter of interior vertices for the shearing-plate meshes, relative to h.
pub const JITTER: f64 = 0.2;
pub const JITTER_SEED: u64 = 17;

/// Moment bending a beam of length `l` into a full circle: 4πμt³/(12L) (λ = 0).
pub fn circle_moment(mu: f64, t: f64, l: f64) -> f64 {
    4.0 * PI * mu * t.powi(3) / (12.0 * l)
}

#[derive(Clone, Debug)]
pub struct BenchmarkSpec {
    pub bench: BenchName,
    pub method: MethodKind,
    pub order: usize,
    pub grid: (usize, usize),
    /// Traction magnitude (Cook, thin beam) or trial moment (end moment; 0
    /// requests the secant search for a full turn).
    pub force: f64,
    pub newton: NewtonConfig,
    pub c1: f64,
    pub c2: f64,
    pub ul: bool,
    /// Uniform refinements applied to the shearing-plate base mesh.
    pub refinements: usize,
}

impl BenchmarkSpec {
    /// Benchmark defaults: k = 2, grids 8×8 (Cook), 10×1 (thin beam), 20×1
    /// (end moment), 2×2 jittered (shearing plate); load steps 4, 12 for the
    /// end moment and 1 for the mildly nonlinear shearing plate; stabilization
    /// only for C-lifting.
    pub fn new(bench: BenchName, method: MethodKind) -> Self {
        let (grid, force, steps, ul) = match bench {
            BenchName::ShearingPlate => ((2, 2), 1.0, 1, false),
            BenchName::Cooks => ((8, 8), 8.0, 4, false),
            BenchName::ThinBeam => ((10, 1), 1.0, 4, false),
            BenchName::EndMoment => ((20, 1), 0.0, 12, true),
        };
        let (c1, c2) = match (bench, method) {
            (BenchName::ShearingPlate, MethodKind::Clift) => (1.0, 0.0),
            (BenchName::Cooks, MethodKind::Clift) => (0.5 * COOK_MU, 0.5 * COOK_MU),
            _ => (0.0, 0.0),
        };
        Self {
            bench,
            method,
            order: 2,
            grid,
            force,
            newton: NewtonConfig::default().with_load_steps(steps),
            c1,
            c2,
            ul,
            refinements: 0,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(BenchError::Invalid("grid counts must be >= 1".into()));
        }
        if !self.force.is_finite() {
            return Err(BenchError::Invalid("force must be finite".into()));
        }
        if self.bench == BenchName::EndMoment && !self.ul {
            return Err(BenchError::Invalid("the end-moment benchmark requires UL".into()));
        }
        if self.ul && self.method == MethodKind::LinearTDNNS {
            return Err(BenchError::Invalid("UL is not defined for the linear method".into()));
        }
        self.newton.validate()?;
        Ok(())
    }

    pub fn method(&self) -> Result<Method, BenchError> {
        Ok(Method::new(self.method, self.order)
            .with_stabilization(self.c1, self.c2)?
            .with_ul(self.ul))
    }
}

/// Exact shearing-plate displacement U = (½y³ + ½ sin(πy/2), 0).
pub fn shearing_u(x: &Point) -> Vector2<f64> {
    let y = x.y;
    Vector2::new(0.5 * y.powi(3) + 0.5 * (0.5 * PI * y).sin(), 0.0)
}

fn shearing_du(y: f64) -> f64 {
    1.5 * y * y + 0.25 * PI * (0.5 * PI * y).cos()
}

/// Exact displacement gradient.
pub fn shearing_grad(x: &Point) -> Matrix2<f64> {
    Matrix2::new(0.0, shearing_du(x.y), 0.0, 0.0)
}

/// Body force f = −div P(F_ex) for Ψ₁ with μ = λ = 1.
pub fn shearing_body(x: &Point) -> Vector2<f64> {
    let y = x.y;
    Vector2::new(-3.0 * y + PI * PI / 8.0 * (0.5 * PI * y).sin(), 0.0)
}

/// Exact first Piola–Kirchhoff stress [[0, u′], [u′, 0]].
pub fn shearing_stress(x: &Point) -> Matrix2<f64> {
    let d = shearing_du(x.y);
    Matrix2::new(0.0, d, d, 0.0)
}

/// Manufactured shearing-plate data on the unit square.
pub struct Manufactured {
    pub u: VecFn,
    pub grad: Arc<dyn Fn(&Point) -> Matrix2<f64> + Send + Sync>,
    pub body: VecFn,
    /// Tractions g = P_ex N on the Neumann regions left, right and top.
    pub tractions: Vec<(String, VecFn)>,
}

pub fn manufactured_fields() -> Manufactured {
    let traction = |n: Vector2<f64>| -> VecFn { Arc::new(move |x| shearing_stress(x) * n) };
    Manufactured {
        u: Arc::new(shearing_u),
        grad: Arc::new(shearing_grad),
        body: Arc::new(shearing_body),
        tractions: vec![
            ("left".into(), traction(Vector2::new(-1.0, 0.0))),
            ("right".into(), traction(Vector2::new(1.0, 0.0))),
            ("top".into(), traction(Vector2::new(0.0, 1.0))),
        ],
    }
}

/// Jittered n×n unit-square mesh refined `levels` times.
pub fn shearing_plate_mesh(n: usize, levels: usize) -> Result<Mesh2D, MeshError> {
    let mut m = build_rect_tri_mesh(n, n, 1.0, 1.0, Point::zeros())?.jitter_interior(JITTER, JITTER_SEED)?;
    for _ in 0..levels {
        m = m.uniform_refine();
    }
    Ok(m)
}

fn zero() -> VecFn {
    Arc::new(|_| Vector2::zeros())
}

/// A fully specified boundary value problem.
pub struct BenchProblem {
    pub d: Discretization,
    pub law: HyperelasticLaw,
    pub loads: Loads,
    pub bcs: Vec<Dirichlet>,
}

impl BenchProblem {
    pub fn problem(&self) -> Problem<'_> {
        Problem {
            d: &self.d,
            law: &self.law,
            loads: &self.loads,
            bcs: &self.bcs,
        }
    }
}

/// Mesh, material, loads and boundary conditions of a benchmark. For the end
/// moment `force` is the applied moment.
pub fn build_problem(spec: &BenchmarkSpec) -> Result<BenchProblem, BenchError> {
    spec.validate()?;
    let method = spec.method()?;
    let (nx, ny) = spec.grid;
    let f = spec.force;
    let clamp = |r: &str| {
        vec![Dirichlet {
            region: r.into(),
            datum: zero(),
        }]
    };
    let (mesh, law, loads, bcs) = match spec.bench {
        BenchName::ShearingPlate => {
            let m = manufactured_fields();
            (
                shearing_plate_mesh(nx, spec.refinements)?,
                HyperelasticLaw::new(Variant::NeoHookeDet, LameParams::new(1.0, 1.0).unwrap()),
                Loads {
                    body: Some(m.body),
                    tractions: m.tractions,
                    end_moment: None,
                    factor: 1.0,
                },
                clamp("bottom"),
            )
        }
        BenchName::Cooks => (
            build_cook_tri_mesh(nx)?,
            HyperelasticLaw::new(
                Variant::NeoHookeLog,
                LameParams::new(COOK_MU, COOK_LAMBDA).unwrap(),
            ),
            Loads {
                tractions: vec![("right".into(), Arc::new(move |_| Vector2::new(0.0, f)))],
                factor: 1.0,
                ..Default::default()
            },
            clamp("left"),
        ),
        BenchName::ThinBeam => (
            build_rect_tri_mesh(nx, ny, BEAM_LENGTH, BEAM_THICKNESS, Point::zeros())?,
            HyperelasticLaw::new(Variant::NeoHookeLog, LameParams::new(6000.0, 24000.0).unwrap()),
            Loads {
                tractions: vec![("right".into(), Arc::new(move |_| Vector2::new(0.0, f)))],
                factor: 1.0,
                ..Default::default()
            },
            clamp("left"),
        ),
        BenchName::EndMoment => {
            if method.kind == MethodKind::Std {
                return Err(BenchError::Invalid(
                    "the follower moment acts on the facet traces of the hybridized methods".into(),
                ));
            }
            (
                build_rect_tri_mesh(nx, ny, CIRCLE_LENGTH, CIRCLE_THICKNESS, Point::zeros())?,
                HyperelasticLaw::new(Variant::NeoHookeLog, LameParams::new(CIRCLE_MU, 0.0).unwrap()),
                Loads {
                    end_moment: Some(EndMoment {
                        region: "right".into(),
                        moment: f,
                        thickness: CIRCLE_THICKNESS,
                    }),
                    factor: 1.0,
                    ..Default::default()
                },
                clamp("left"),
            )
        }
    };
    Ok(BenchProblem {
        d: Discretization::new(mesh, method)?,
        law,
        loads,
        bcs,
    })
}

/// Converged solution: the final state, and with UL the intermediate
/// configuration holding the total displacement.
pub struct Solution {
    pub state: State,
    pub ul: Option<ULState>,
    pub report: SolveReport,
}

pub fn solve(bp: &BenchProblem, cfg: &NewtonConfig) -> Result<Solution, SolverError> {
    let p = bp.problem();
    if bp.d.method.ul {
        let (ul, state, report) = run_ul_load_steps(&p, cfg)?;
        Ok(Solution {
            state,
            ul: Some(ul),
            report,
        })
    } else {
        let (state, report) = run_load_steps(&p, State::new(bp.d.initial_state()), cfg)?;
        Ok(Solution {
            state,
            ul: None,
            report,
        })
    }
}

/// Degree of the quadrature used for error norms.
pub fn error_quadrature_degree(k: usize) -> usize {
    2 * k + 4
}

/// Displacement and its gradient measure at a reference point of element t:
/// u and the deformation gradient (F_sym + skw(curl u) for the F-based
/// methods, I + ∇u otherwise) or, for C-lifting, the lifted C.
fn element_fields(
    d: &Discretization,
    x: &[f64],
    t: usize,
    l: [f64; 2],
) -> Result<(Vector2<f64>, Matrix2<f64>), FormError> {
    let us = d.space(Field::U).unwrap();
    let xe = DVector::from_vec(us.gather(t, d.field_slice(Field::U, x).unwrap()));
    let ev = us.eval_vec(t, l)?;
    let u = &ev.val * &xe;
    let g = &ev.grad * &xe;
    let grad = Matrix2::new(g[0], g[2], g[3], g[1]);
    let sym_at = |f: Field| -> Result<Matrix2<f64>, FormError> {
        let s = d.space(f).unwrap();
        let v = s.eval_sym(l)? * DVector::from_vec(s.gather(t, d.field_slice(f, x).unwrap()));
        Ok(Matrix2::new(v[0], v[2], v[2], v[1]))
    };
    let m = match d.method.kind {
        MethodKind::Flift | MethodKind::FClift => sym_at(Field::Fsym)? + skw(grad[(1, 0)] - grad[(0, 1)]),
        MethodKind::Clift => sym_at(Field::C)?,
        MethodKind::Std | MethodKind::LinearTDNNS => Matrix2::identity() + grad,
    };
    Ok((Vector2::new(u[0], u[1]), m))
}

/// L² errors ‖U − U_ex‖ and ‖F − F_ex‖ (‖C − C_ex‖ for C-lifting) of a Total
/// Lagrangian state.
pub fn error_norms(
    d: &Discretization,
    x: &[f64],
    u_ex: &dyn Fn(&Point) -> Vector2<f64>,
    grad_ex: &dyn Fn(&Point) -> Matrix2<f64>,
) -> Result<(f64, f64), FormError> {
    let q = quad_rule(QuadDomain::Triangle, error_quadrature_degree(d.method.order));
    let us = d.space(Field::U).unwrap();
    let (mut eu, mut eg) = (0.0, 0.0);
    for t in 0..d.mesh.num_triangles() {
        let g = us.geom(t);
        for (l, w) in q.points.iter().zip(&q.weights) {
            let xq = g.map(*l);
            let (u, m) = element_fields(d, x, t, *l)?;
            let f_ex = Matrix2::identity() + grad_ex(&xq);
            let m_ex = if d.method.kind == MethodKind::Clift {
                f_ex.transpose() * f_ex
            } else {
                f_ex
            };
            let wt = w * 2.0 * g.area;
            eu += wt * (u - u_ex(&xq)).norm_squared();
            eg += wt * (m - m_ex).norm_squared();
        }
    }
    Ok((eu.sqrt(), eg.sqrt()))
}

/// Orders of convergence log(e_i/e_{i+1}) / log(h_i/h_{i+1}); `None` where an
/// error vanishes or mesh sizes do not decrease.
pub fn eoc(errors: &[f64], h: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .zip(h.windows(2))
        .map(|(e, h)| {
            (e[0] > 0.0 && e[1] > 0.0 && h[1] < h[0]).then(|| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        })
        .collect()
}

/// Total displacement at a physical point: the element value of u (lowest
/// containing element) or, with UL, the continuous u₀.
pub fn point_displacement(
    d: &Discretization,
    sol: &Solution,
    p: &Point,
) -> Result<Vector2<f64>, FormError> {
    if let Some(ul) = &sol.ul {
        return Ok(ul.space.eval_vector_field(&d.mesh, &ul.u0, p)?);
    }
    let us = d.space(Field::U).unwrap();
    Ok(us.eval_vector_field(&d.mesh, d.field_slice(Field::U, &sol.state.x).unwrap(), p)?)
}

pub fn point_deflection(d: &Discretization, sol: &Solution, p: &Point) -> Result<f64, FormError> {
    Ok(point_displacement(d, sol, p)?.y)
}

/// ‖U‖_{L²} of the total displacement.
pub fn displacement_l2(d: &Discretization, sol: &Solution) -> Result<f64, FormError> {
    let q = quad_rule(QuadDomain::Triangle, error_quadrature_degree(d.method.order));
    let mut s = 0.0;
    for t in 0..d.mesh.num_triangles() {
        let (sp, coef) = match &sol.ul {
            Some(ul) => (&ul.space, &ul.u0[..]),
            None => (
                d.space(Field::U).unwrap(),
                d.field_slice(Field::U, &sol.state.x).unwrap(),
            ),
        };
        let xe = DVector::from_vec(sp.gather(t, coef));
        let g = sp.geom(t);
        for (l, w) in q.points.iter().zip(&q.weights) {
            let u = sp.eval_vec(t, *l)?.val * &xe;
            s += w * 2.0 * g.area * u.norm_squared();
        }
    }
    Ok(s.sqrt())
}

/// Unwrapped angle: the representative of `raw` (mod 2π) closest to `previous`.
pub fn unwrap_angle(previous: f64, raw: f64) -> f64 {
    let mut a = raw;
    while a - previous > PI {
        a -= 2.0 * PI;
    }
    while a - previous < -PI {
        a += 2.0 * PI;
    }
    a
}

/// Rotation of a deformed facet direction relative to its reference
/// direction, unwrapped against `previous`.
pub fn tip_rotation(
    reference: &Vector2<f64>,
    deformed: &Vector2<f64>,
    previous: f64,
) -> Result<f64, BenchError> {
    if !(deformed.norm() > 0.0) || !(reference.norm() > 0.0) {
        return Err(BenchError::Invalid("degenerate end facet".into()));
    }
    let raw = (reference.x * deformed.y - reference.y * deformed.x).atan2(reference.dot(deformed));
    Ok(unwrap_angle(previous, raw))
}

/// Tip rotation of an end-moment run with moment `m`.
pub fn end_moment_rotation(spec: &BenchmarkSpec, m: f64) -> Result<(f64, SolveReport), BenchError> {
    let mut s = spec.clone();
    s.force = m;
    let bp = build_problem(&s)?;
    let sol = solve(&bp, &s.newton)?;
    Ok((sol.ul.unwrap().rotation, sol.report))
}

/// Secant iteration on the moment for a tip rotation of 2π (tolerance 1e−6 rad).
/// Returns the moment and the number of rotation evaluations.
pub fn end_moment_drive(spec: &BenchmarkSpec) -> Result<(f64, usize), BenchError> {
    let target = 2.0 * PI;
    let m0 = circle_moment(CIRCLE_MU, CIRCLE_THICKNESS, CIRCLE_LENGTH);
    let (mut ma, mut mb) = (m0, 1.01 * m0);
    let mut ra = end_moment_rotation(spec, ma)?.0 - target;
    let mut rb = end_moment_rotation(spec, mb)?.0 - target;
    let mut evals = 2;
    for _ in 0..20 {
        if rb.abs() <= 1e-6 {
            return Ok((mb, evals));
        }
        let den = rb - ra;
        if den == 0.0 || !den.is_finite() {
            break;
        }
        let mc = mb - rb * (mb - ma) / den;
        if !(mc > 0.0 && mc.is_finite()) {
            break;
        }
        ma = mb;
        ra = rb;
        mb = mc;
        rb = end_moment_rotation(spec, mb)?.0 - target;
        evals += 1;
    }
    Err(SolverError::Secant(format!("no convergence (last moment {mb}, rotation error {rb:.3e})")).into())
}

/// One CSV line of a benchmark result.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub order: usize,
    pub ne: usize,
    pub ndof: usize,
    pub ncoupling: usize,
    pub quantity: String,
    /// `None` marks a failed run.
    pub value: Option<f64>,
}

pub const CSV_HEADER: &str = "method,order,ne,ndof,ncoupling,quantity,value";

impl ResultRow {
    pub fn csv(&self) -> String {
        let v = self.value.map_or("-".to_string(), |v| format!("{v:.10e}"));
        format!(
            "{},{},{},{},{},{},{}",
            self.method, self.order, self.ne, self.ndof, self.ncoupling, self.quantity, v
        )
    }
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

/// Readout point of the Cook membrane: upper corner of the loaded edge.
pub fn cook_point_a() -> Point {
    Point::new(48.0, 60.0)
}

pub fn beam_tip() -> Point {
    Point::new(BEAM_LENGTH, 0.5 * BEAM_THICKNESS)
}

/// Result of one benchmark run.
pub struct RunOutcome {
    pub rows: Vec<ResultRow>,
    pub success: bool,
    pub problem: BenchProblem,
    pub solution: Option<Solution>,
    pub error: Option<String>,
}

fn row(d: &Discretization, q: &str, v: Option<f64>) -> ResultRow {
    ResultRow {
        method: d.method.kind.name().to_string(),
        order: d.method.order,
        ne: d.mesh.num_triangles(),
        ndof: d.n_total,
        ncoupling: d.n_coupling(),
        quantity: q.to_string(),
        value: v,
    }
}

/// Names of the readouts of a benchmark.
fn quantities(b: BenchName) -> &'static [&'static str] {
    match b {
        BenchName::ShearingPlate => &["error_u", "error_grad", "norm_u"],
        BenchName::Cooks => &["w_A", "norm_u"],
        BenchName::ThinBeam => &["w_A", "norm_u"],
        BenchName::EndMoment => &["moment", "rotation"],
    }
}

/// Mesh → spaces → load stepping → readouts. Solver failures yield rows
/// with the failure marker.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<RunOutcome, BenchError> {
    let mut spec = spec.clone();
    let mut moment = None;
    if spec.bench == BenchName::EndMoment && spec.force == 0.0 {
        let probe = build_problem(&spec)?;
        match end_moment_drive(&spec) {
            Ok((m, _)) => {
                moment = Some(m);
                spec.force = m;
            }
            Err(e) => return Ok(failed(probe, spec.bench, e.to_string())),
        }
    }
    let bp = build_problem(&spec)?;
    let sol = match solve(&bp, &spec.newton) {
        Ok(s) => s,
        Err(e) => return Ok(failed(bp, spec.bench, e.to_string())),
    };
    let d = &bp.d;
    let mut rows = Vec::new();
    match spec.bench {
        BenchName::ShearingPlate => {
            let m = manufactured_fields();
            let (eu, eg) = error_norms(d, &sol.state.x, &*m.u, &*m.grad)?;
            rows.push(row(d, "error_u", Some(eu)));
            rows.push(row(d, "error_grad", Some(eg)));
        }
        BenchName::Cooks => rows.push(row(d, "w_A", Some(point_deflection(d, &sol, &cook_point_a())?))),
        BenchName::ThinBeam => rows.push(row(d, "w_A", Some(point_deflection(d, &sol, &beam_tip())?))),
        BenchName::EndMoment => {
            rows.push(row(d, "moment", Some(moment.unwrap_or(spec.force))));
            rows.push(row(d, "rotation", sol.ul.as_ref().map(|u| u.rotation)));
        }
    }
    if spec.bench != BenchName::EndMoment {
        rows.push(row(d, "norm_u", Some(displacement_l2(d, &sol)?)));
    }
    for (i, s) in sol.report.steps.iter().enumerate() {
        rows.push(row(d, &format!("newton_iterations_step_{}", i + 1), Some(s.iterations as f64)));
    }
    Ok(RunOutcome {
        rows,
        success: true,
        problem: bp,
        solution: Some(sol),
        error: None,
    })
}

fn failed(bp: BenchProblem, b: BenchName, err: String) -> RunOutcome {
    let rows = quantities(b).iter().map(|q| row(&bp.d, q, None)).collect();
    RunOutcome {
        rows,
        success: false,
        problem: bp,
        solution: None,
        error: Some(err),
    }
}

/// Shearing-plate refinement study: errors and rates on `levels` meshes
/// obtained by uniform refinement of the jittered base grid.
pub fn convergence_study(
    spec: &BenchmarkSpec,
    levels: usize,
) -> Result<(Vec<ResultRow>, bool), BenchError> {
    if spec.bench != BenchName::ShearingPlate {
        return Err(BenchError::Invalid("convergence studies use the shearing plate".into()));
    }
    let mut rows = Vec::new();
    let (mut eu, mut eg, mut h) = (Vec::new(), Vec::new(), Vec::new());
    let mut ok = true;
    for lvl in 0..levels {
        let mut s = spec.clone();
        s.refinements = lvl;
        let out = run_benchmark(&s)?;
        ok &= out.success;
        let get = |q: &str| out.rows.iter().find(|r| r.quantity == q).and_then(|r| r.value);
        if let (Some(a), Some(b)) = (get("error_u"), get("error_grad")) {
            eu.push(a);
            eg.push(b);
            h.push(out.problem.d.mesh.max_diameter());
        }
        let d = &out.problem.d;
        rows.extend(out.rows.iter().filter(|r| !r.quantity.starts_with("newton")).cloned());
        if lvl > 0 {
            let n = eu.len();
            let rate = |e: &[f64]| {
                if n >= 2 && n == lvl + 1 {
                    eoc(&e[n - 2..], &h[n - 2..])[0]
                } else {
                    None
                }
            };
            rows.push(row(d, "eoc_u", rate(&eu)));
            rows.push(row(d, "eoc_grad", rate(&eg)));
        }
    }
    Ok((rows, ok))
}

/// Continuous displacement of a Total Lagrangian solution by the same nodal
/// reconstruction used for UL configuration updates.
pub fn continuous_displacement(bp: &BenchProblem, sol: &Solution) -> Result<ULState, SolverError> {
    if let Some(ul) = &sol.ul {
        return Ok(ul.clone());
    }
    let p = bp.problem();
    let ul0 = ULState::new(&bp.d)?;
    Ok(ul_advance(&ul0, &p, &sol.state, 1.0)?.0)
}

/// Legacy ASCII VTK of the deformed mesh with point data `displacement`, `J`
/// and `vonMises` (Cauchy stress), vertex values averaged over elements.
pub fn write_vtk(path: &Path, bp: &BenchProblem, sol: &Solution) -> Result<(), BenchError> {
    let ul = continuous_displacement(bp, sol)?;
    let mesh = &bp.d.mesh;
    let nv = mesh.num_vertices();
    let mut jac = vec![0.0; nv];
    let mut vm = vec![0.0; nv];
    let mut cnt = vec![0usize; nv];
    for t in 0..mesh.num_triangles() {
        let local = ul.space.gather(t, &ul.u0);
        for (i, l) in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]].into_iter().enumerate() {
            let v = mesh.triangles()[t][i];
            let jet = ul.space.vec_jet(t, l, &local).map_err(FormError::from)?;
            let f = Matrix2::identity() + jet.grad;
            jac[v] += f.determinant();
            if let Ok(p) = bp.law.pk1(&f) {
                if let Ok(s) = cauchy_stress(&p, &f) {
                    vm[v] += von_mises(&s);
                }
            }
            cnt[v] += 1;
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\ntdnns deformed mesh\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for (v, x) in mesh.vertices().iter().enumerate() {
        let _ = writeln!(s, "{:.10e} {:.10e} 0", x.x + ul.u0[2 * v], x.y + ul.u0[2 * v + 1]);
    }
    let nt = mesh.num_triangles();
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(s, "5");
    }
    let _ = writeln!(s, "POINT_DATA {nv}\nVECTORS displacement double");
    for v in 0..nv {
        let _ = writeln!(s, "{:.10e} {:.10e} 0", ul.u0[2 * v], ul.u0[2 * v + 1]);
    }
    for (name, data) in [("J", &jac), ("vonMises", &vm)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in 0..nv {
            let _ = writeln!(s, "{:.10e}", data[v] / cnt[v].max(1) as f64);
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}
