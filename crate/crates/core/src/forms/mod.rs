//! Element residuals and tangents of the standard, linear TDNNS, F-lifted,
//! C-lifted and FC-lifted formulations, load functionals and static
//! condensation.
//!
//! Each element integrand is written as a scalar Lagrangian density of a small
//! quantity vector z = B x_e at a quadrature point (see [`terms`]); residuals
//! and tangents are Bᵀ∇ψ and Bᵀ∇²ψ B.

pub mod condense;
pub mod follower;
pub mod terms;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::fespace::{
    eval_monomials, gauss_legendre, quad_rule, shifted_legendre, FeError, FeSpace, QuadDomain, QuadRule,
    SpaceFamily,
};
use crate::material::{compliance_matrix, HyperelasticLaw, Mat2, MaterialError};
use crate::mesh2d::{Mesh2D, Point};
pub use condense::{assemble_condensed, back_substitute, CondensedSystem};
pub use follower::EndMoment;
use terms::{Acc, Lin2, LinS};

pub use crate::material::skw as skw_op;

#[derive(Debug, thiserror::Error)]
pub enum FormError {
    #[error("material: {0}")]
    Material(#[from] MaterialError),
    #[error("space: {0}")]
    Space(#[from] FeError),
    #[error("singular local block in element {0}")]
    SingularLocal(usize),
    #[error("stale recovery data (generation {expected}, state {found})")]
    Stale { expected: u64, found: u64 },
    #[error("invalid method configuration: {0}")]
    Config(String),
    #[error("intermediate configuration degenerate in element {0}")]
    Configuration(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Std,
    LinearTDNNS,
    Flift,
    Clift,
    FClift,
}

impl MethodKind {
    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::Std => "std",
            MethodKind::LinearTDNNS => "linear",
            MethodKind::Flift => "F",
            MethodKind::Clift => "C",
            MethodKind::FClift => "FC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "std" | "Std" => Some(MethodKind::Std),
            "linear" | "lin" => Some(MethodKind::LinearTDNNS),
            "F" | "f" | "Flift" => Some(MethodKind::Flift),
            "C" | "c" | "Clift" => Some(MethodKind::Clift),
            "FC" | "fc" | "FClift" => Some(MethodKind::FClift),
            _ => None,
        }
    }

    pub fn is_nonlinear_mixed(&self) -> bool {
        matches!(self, MethodKind::Flift | MethodKind::Clift | MethodKind::FClift)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Method {
    pub kind: MethodKind,
    pub order: usize,
    /// Order of C and Σ in the FC method.
    pub order_c: usize,
    pub c1: f64,
    pub c2: f64,
    pub ul: bool,
}

impl Method {
    pub fn new(kind: MethodKind, order: usize) -> Self {
        Self {
            kind,
            order,
            order_c: order,
            c1: 0.0,
            c2: 0.0,
            ul: false,
        }
    }

    pub fn with_stabilization(mut self, c1: f64, c2: f64) -> Result<Self, FormError> {
        if (c1 != 0.0 || c2 != 0.0) && self.kind != MethodKind::Clift {
            return Err(FormError::Config("stabilization only applies to C-lifting".into()));
        }
        if c1 < 0.0 || c2 < 0.0 {
            return Err(FormError::Config("stabilization constants must be >= 0".into()));
        }
        self.c1 = c1;
        self.c2 = c2;
        Ok(self)
    }

    pub fn with_ul(mut self, ul: bool) -> Self {
        self.ul = ul;
        self
    }

    pub fn with_order_c(mut self, k: usize) -> Self {
        self.order_c = k;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    U,
    Alpha,
    Fsym,
    Psym,
    C,
    Sigma,
    Stress,
}

pub type VecFn = Arc<dyn Fn(&Point) -> Vector2<f64> + Send + Sync>;

/// Dead loads: body force and tractions on named boundary regions, plus an
/// optional follower end moment. All are multiplied by `factor`.
#[derive(Clone, Default)]
pub struct Loads {
    pub body: Option<VecFn>,
    pub tractions: Vec<(String, VecFn)>,
    pub end_moment: Option<EndMoment>,
    pub factor: f64,
}

impl Loads {
    pub fn none() -> Self {
        Self {
            factor: 1.0,
            ..Default::default()
        }
    }
    pub fn scaled(&self, factor: f64) -> Self {
        let mut l = self.clone();
        l.factor = factor;
        l
    }
}

/// Prescribed displacement on a boundary region (both components).
#[derive(Clone)]
pub struct Dirichlet {
    pub region: String,
    pub datum: VecFn,
}

/// Geometry of the intermediate configuration used by the Updated Lagrangian
/// kernels: a continuous displacement u₀ in vector Lagrange space.
#[derive(Clone, Copy)]
pub struct UlContext<'a> {
    pub space: &'a FeSpace,
    pub u0: &'a [f64],
}

/// F₀ and derived quantities at a point.
#[derive(Clone, Debug)]
pub struct Frame {
    pub u0: Vector2<f64>,
    pub f0: Mat2,
    pub j0: f64,
    /// F₀⁻ᵀ.
    pub a: Mat2,
    /// ∂_X(F₀⁻ᵀ), ∂_Y(F₀⁻ᵀ).
    pub da: [Mat2; 2],
    pub f0_inv: Mat2,
    pub identity: bool,
}

impl Frame {
    pub fn identity() -> Self {
        Self {
            u0: Vector2::zeros(),
            f0: Mat2::identity(),
            j0: 1.0,
            a: Mat2::identity(),
            da: [Mat2::zeros(); 2],
            f0_inv: Mat2::identity(),
            identity: true,
        }
    }

    /// Transformed outward normal n₀ and surface ratio J_bnd,₀ for a reference normal.
    pub fn normal(&self, n: &Vector2<f64>) -> (Vector2<f64>, f64) {
        if self.identity {
            return (*n, 1.0);
        }
        let m = self.a * n;
        let len = m.norm();
        (m / len, self.j0 * len)
    }
}

impl UlContext<'_> {
    pub fn frame(&self, t: usize, l: [f64; 2]) -> Result<Frame, FormError> {
        let local = self.space.gather(t, self.u0);
        if local.iter().all(|&v| v == 0.0) {
            return Ok(Frame::identity());
        }
        let jet = self.space.vec_jet(t, l, &local)?;
        let f0 = Mat2::identity() + jet.grad;
        let j0 = f0.determinant();
        if !(j0 > 0.0) {
            return Err(FormError::Configuration(t));
        }
        let f0_inv = f0.try_inverse().ok_or(FormError::Configuration(t))?;
        let a = f0_inv.transpose();
        let da = [0, 1].map(|k| -a * jet.dgrad[k].transpose() * a);
        Ok(Frame {
            u0: jet.val,
            f0,
            j0,
            a,
            da,
            f0_inv,
            identity: false,
        })
    }
}

/// All spaces of one method on one mesh with a flat global numbering.
pub struct Discretization {
    pub mesh: Mesh2D,
    pub method: Method,
    pub fields: Vec<(Field, FeSpace)>,
    pub offsets: Vec<usize>,
    pub n_total: usize,
    pub quad_vol: QuadRule,
    pub quad_facet: QuadRule,
    /// Column ranges of each field in the element vector.
    pub elem_ranges: Vec<(usize, usize)>,
    /// Element-vector positions that are coupling dofs.
    pub elem_coupling: Vec<bool>,
}

/// Per-element residual and tangent over the element dofs (flat numbering).
#[derive(Clone, Debug)]
pub struct ElementSystem {
    pub dofs: Vec<usize>,
    pub coupling: Vec<usize>,
    pub local: Vec<usize>,
    pub value: f64,
    pub residual: DVector<f64>,
    pub tangent: Option<DMatrix<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Want {
    Value,
    Residual,
    Tangent,
}

impl Discretization {
    pub fn new(mesh: Mesh2D, method: Method) -> Result<Self, FormError> {
        let k = method.order;
        let make = |f| FeSpace::new(&mesh, f, k);
        let mut fields = Vec::new();
        match method.kind {
            MethodKind::Std => fields.push((Field::U, make(SpaceFamily::LagrangeVec)?)),
            kind => {
                fields.push((Field::U, make(SpaceFamily::Nedelec)?));
                fields.push((Field::Alpha, make(SpaceFamily::FacetNormal)?));
                let sym = || make(SpaceFamily::BrokenSym);
                let sym_c = || FeSpace::new(&mesh, SpaceFamily::BrokenSym, method.order_c);
                match kind {
                    MethodKind::LinearTDNNS => fields.push((Field::Stress, sym()?)),
                    MethodKind::Flift => {
                        fields.push((Field::Fsym, sym()?));
                        fields.push((Field::Psym, sym()?));
                    }
                    MethodKind::Clift => {
                        fields.push((Field::C, sym()?));
                        fields.push((Field::Sigma, sym()?));
                    }
                    MethodKind::FClift => {
                        fields.push((Field::Fsym, sym()?));
                        fields.push((Field::Psym, sym()?));
                        fields.push((Field::C, sym_c()?));
                        fields.push((Field::Sigma, sym_c()?));
                    }
                    MethodKind::Std => unreachable!(),
                }
            }
        }
        if method.kind != MethodKind::Clift && (method.c1 != 0.0 || method.c2 != 0.0) {
            return Err(FormError::Config("stabilization only applies to C-lifting".into()));
        }
        let mut offsets = Vec::new();
        let mut n_total = 0;
        let mut elem_ranges = Vec::new();
        let mut elem_coupling = Vec::new();
        let mut pos = 0;
        for (f, s) in &fields {
            offsets.push(n_total);
            n_total += s.dofs.n_dofs;
            let ne = s.n_element_dofs();
            elem_ranges.push((pos, ne));
            pos += ne;
            let d0 = s.dofs.element_dofs(0);
            for &d in d0 {
                elem_coupling.push(matches!(f, Field::U | Field::Alpha) && s.dofs.is_coupling(d));
            }
        }
        let deg = match method.kind {
            MethodKind::LinearTDNNS => 2 * k + 2,
            _ => 4 * k.max(method.order_c) + 2,
        };
        Ok(Self {
            mesh,
            method,
            fields,
            offsets,
            n_total,
            quad_vol: quad_rule(QuadDomain::Triangle, deg),
            quad_facet: quad_rule(QuadDomain::Edge, deg),
            elem_ranges,
            elem_coupling,
        })
    }

    pub fn field_index(&self, f: Field) -> Option<usize> {
        self.fields.iter().position(|(g, _)| *g == f)
    }

    pub fn space(&self, f: Field) -> Option<&FeSpace> {
        self.field_index(f).map(|i| &self.fields[i].1)
    }

    pub fn field_slice<'a>(&self, f: Field, x: &'a [f64]) -> Option<&'a [f64]> {
        let i = self.field_index(f)?;
        let n = self.fields[i].1.dofs.n_dofs;
        Some(&x[self.offsets[i]..self.offsets[i] + n])
    }

    pub fn field_slice_mut<'a>(&self, f: Field, x: &'a mut [f64]) -> Option<&'a mut [f64]> {
        let i = self.field_index(f)?;
        let n = self.fields[i].1.dofs.n_dofs;
        Some(&mut x[self.offsets[i]..self.offsets[i] + n])
    }

    /// Flat dof indices of element `t`, field by field.
    pub fn element_dofs(&self, t: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, (_, s)) in self.fields.iter().enumerate() {
            out.extend(s.dofs.element_dofs(t).iter().map(|d| d + self.offsets[i]));
        }
        out
    }

    pub fn n_coupling(&self) -> usize {
        self.fields
            .iter()
            .filter(|(f, _)| matches!(f, Field::U | Field::Alpha))
            .map(|(_, s)| s.dofs.n_coupling)
            .sum()
    }

    pub fn is_coupling_flat(&self, d: usize) -> bool {
        for (i, (f, s)) in self.fields.iter().enumerate() {
            let o = self.offsets[i];
            if d >= o && d < o + s.dofs.n_dofs {
                return matches!(f, Field::U | Field::Alpha) && s.dofs.is_coupling(d - o);
            }
        }
        false
    }

    /// Reference state: zero displacement and multipliers, F_sym = C = I, zero stresses.
    pub fn initial_state(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_total];
        for (i, (f, s)) in self.fields.iter().enumerate() {
            if matches!(f, Field::Fsym | Field::C) {
                let id = s.sym_identity_local();
                for t in 0..self.mesh.num_triangles() {
                    for (j, &d) in s.dofs.element_dofs(t).iter().enumerate() {
                        x[self.offsets[i] + d] = id[j];
                    }
                }
            }
        }
        x
    }

    /// Constrained flat dofs and values for the given Dirichlet data scaled by
    /// `factor`. With a UL context the values are those of u_D − u₀ expressed in
    /// the intermediate configuration.
    pub fn dirichlet_values(
        &self,
        bcs: &[Dirichlet],
        factor: f64,
        ul: Option<&UlContext>,
    ) -> Result<Vec<(usize, f64)>, FormError> {
        let mut out = std::collections::BTreeMap::new();
        let mesh = &self.mesh;
        for bc in bcs {
            let edges = mesh.region_edges(&bc.region).map_err(FeError::from)?;
            let datum = |x: &Point| factor * (bc.datum)(x);
            match (self.method.kind, ul) {
                (_, None) => {
                    for (i, (f, s)) in self.fields.iter().enumerate() {
                        if matches!(f, Field::U | Field::Alpha) {
                            for (d, v) in s.essential_values(mesh, &edges, &datum)? {
                                out.insert(self.offsets[i] + d, v);
                            }
                        }
                    }
                }
                (MethodKind::Std, Some(ctx)) => {
                    let s = &self.fields[0].1;
                    for (d, v) in s.essential_values(mesh, &edges, &datum)? {
                        out.insert(d, v - ctx.u0[d]);
                    }
                }
                (_, Some(ctx)) => {
                    let k = self.method.order;
                    let iu = self.field_index(Field::U).unwrap();
                    let ia = self.field_index(Field::Alpha).unwrap();
                    let (qs, qw) = gauss_legendre(k + 8);
                    for &e in &edges {
                        let (t, i) = mesh.edge_triangles(e)[0];
                        let sign = mesh.tri_edge_signs(t)[i];
                        let fr = mesh.facet_frame(e);
                        let g = self.fields[iu].1.geom(t);
                        let [p, q] = mesh.edges()[e];
                        let (xp, xq) = (mesh.vertices()[p], mesh.vertices()[q]);
                        let mut mt = vec![0.0; k + 1];
                        let mut mn = vec![0.0; k + 1];
                        for (s, w) in qs.iter().zip(&qw) {
                            let xs = xp + *s * (xq - xp);
                            let f0 = ctx.frame(t, g.edge_point(i, sign, *s))?;
                            let rem = datum(&xs) - f0.u0;
                            let vt = rem.dot(&(f0.f0 * fr.tangent));
                            let vn = rem.dot(&f0.normal(&fr.normal).0);
                            let leg = shifted_legendre(k, *s);
                            for j in 0..=k {
                                let c = (2 * j + 1) as f64 * w * leg[j];
                                mt[j] += c * vt;
                                mn[j] += c * vn;
                            }
                        }
                        for j in 0..=k {
                            out.insert(self.offsets[iu] + e * (k + 1) + j, mt[j]);
                            out.insert(self.offsets[ia] + e * (k + 1) + j, mn[j]);
                        }
                    }
                }
            }
        }
        Ok(out.into_iter().collect())
    }
}

/// Layout of the quantity vector per method.
struct Layout {
    nz_vol: usize,
    nz_fac: usize,
    /// (field index, first z row) of broken fields in the volume vector.
    vol_sym: Vec<(usize, usize)>,
    /// First z row of u in the volume vector.
    vol_u: usize,
    /// Field index of the stress tested against normal-normal traces.
    fac_stress: Option<usize>,
    fac_grad: bool,
}

fn layout(d: &Discretization) -> Layout {
    let fi = |f| d.field_index(f).unwrap();
    match d.method.kind {
        MethodKind::Std => Layout {
            nz_vol: 6,
            nz_fac: 2,
            vol_sym: vec![],
            vol_u: 4,
            fac_stress: None,
            fac_grad: false,
        },
        MethodKind::LinearTDNNS => Layout {
            nz_vol: 9,
            nz_fac: 6,
            vol_sym: vec![(fi(Field::Stress), 4)],
            vol_u: 7,
            fac_stress: Some(fi(Field::Stress)),
            fac_grad: false,
        },
        MethodKind::Flift => Layout {
            nz_vol: 12,
            nz_fac: 6,
            vol_sym: vec![(fi(Field::Fsym), 4), (fi(Field::Psym), 7)],
            vol_u: 10,
            fac_stress: Some(fi(Field::Psym)),
            fac_grad: false,
        },
        MethodKind::Clift => Layout {
            nz_vol: 12,
            nz_fac: 10,
            vol_sym: vec![(fi(Field::C), 4), (fi(Field::Sigma), 7)],
            vol_u: 10,
            fac_stress: Some(fi(Field::Sigma)),
            fac_grad: true,
        },
        MethodKind::FClift => Layout {
            nz_vol: 18,
            nz_fac: 6,
            vol_sym: vec![
                (fi(Field::Fsym), 4),
                (fi(Field::Psym), 7),
                (fi(Field::C), 10),
                (fi(Field::Sigma), 13),
            ],
            vol_u: 16,
            fac_stress: Some(fi(Field::Psym)),
            fac_grad: false,
        },
    }
}

/// Values (2×n) and gradient rows (4×n) of the displacement basis in the
/// working configuration, given reference evaluations and a frame.
fn transform_u(
    kind: MethodKind,
    val: &DMatrix<f64>,
    grad: &DMatrix<f64>,
    fr: &Frame,
) -> (DMatrix<f64>, DMatrix<f64>) {
    if fr.identity {
        return (val.clone(), grad.clone());
    }
    let n = val.ncols();
    let mut v = DMatrix::zeros(2, n);
    let mut g = DMatrix::zeros(4, n);
    for b in 0..n {
        let vh = Vector2::new(val[(0, b)], val[(1, b)]);
        let gh = Matrix2::new(grad[(0, b)], grad[(2, b)], grad[(3, b)], grad[(1, b)]);
        let (vb, hb) = if kind == MethodKind::Std {
            (vh, gh)
        } else {
            let mut h = fr.a * gh;
            for k in 0..2 {
                let c = fr.da[k] * vh;
                h[(0, k)] += c.x;
                h[(1, k)] += c.y;
            }
            (fr.a * vh, h)
        };
        let gx = hb * fr.f0_inv;
        v[(0, b)] = vb.x;
        v[(1, b)] = vb.y;
        g[(0, b)] = gx[(0, 0)];
        g[(1, b)] = gx[(1, 1)];
        g[(2, b)] = gx[(0, 1)];
        g[(3, b)] = gx[(1, 0)];
    }
    (v, g)
}

/// Pointwise data passed to the integrands.
struct VolPoint<'a> {
    w: f64,
    j0: f64,
    f0: &'a Mat2,
    body: Vector2<f64>,
}

fn vol_integrand(
    kind: MethodKind,
    m: &Method,
    law: &HyperelasticLaw,
    lay: &Layout,
    z: &[f64],
    p: &VolPoint,
    acc: &mut Acc,
) -> Result<(), MaterialError> {
    let id = Mat2::identity();
    let g = Lin2::general(z, 0);
    let wj = p.w * p.j0;
    let u = [LinS::var(z, lay.vol_u), LinS::var(z, lay.vol_u + 1)];
    match kind {
        MethodKind::Std => {
            let f = g.add_const(&id).mul_right(p.f0);
            acc.add_psi_f(p.w, law, &f)?;
        }
        MethodKind::LinearTDNNS => {
            let s = Lin2::sym(z, 4);
            let a = compliance_matrix(&law.params);
            let sv = [LinS::var(z, 4), LinS::var(z, 5), LinS::var(z, 6)];
            let wt = [1.0, 1.0, 2.0];
            for i in 0..3 {
                for j in 0..3 {
                    if a[(i, j)] != 0.0 {
                        acc.add_prod(-0.5 * p.w * wt[i] * a[(i, j)], &sv[i], &sv[j]);
                    }
                }
            }
            acc.add_frob(p.w, &s, &g);
        }
        MethodKind::Flift => {
            let fs = Lin2::sym(z, 4);
            let ps = Lin2::sym(z, 7);
            let f = fs.add(&g.skew(), 1.0).mul_right(p.f0);
            acc.add_psi_f(p.w, law, &f)?;
            acc.add_frob(wj, &ps, &g);
            acc.add_frob(-wj, &fs.add_const(&(-id)), &ps);
        }
        MethodKind::Clift => {
            let c = Lin2::sym(z, 4);
            let s = Lin2::sym(z, 7);
            let cc = if p.f0 == &id {
                c
            } else {
                c.mul_right(p.f0).mul_left(&p.f0.transpose())
            };
            acc.add_psi_c(p.w, law, &cc)?;
            let f = g.add_const(&id);
            acc.add_half_ftf_s(wj, &f, &s);
            acc.add_frob(-0.5 * wj, &c, &s);
            if m.c2 != 0.0 {
                acc.add_dist2(m.c2 * wj, &c, &f);
            }
        }
        MethodKind::FClift => {
            let fs = Lin2::sym(z, 4);
            let ps = Lin2::sym(z, 7);
            let c = Lin2::sym(z, 10);
            let s = Lin2::sym(z, 13);
            let cc = if p.f0 == &id {
                c
            } else {
                c.mul_right(p.f0).mul_left(&p.f0.transpose())
            };
            acc.add_psi_c(p.w, law, &cc)?;
            acc.add_frob(wj, &ps, &g);
            acc.add_frob(-wj, &fs.add_const(&(-id)), &ps);
            acc.add_frob(-0.5 * wj, &c, &s);
            let f = fs.add(&g.skew(), 1.0);
            acc.add_half_ftf_s(wj, &f, &s);
        }
    }
    if p.body != Vector2::zeros() {
        acc.add_lin(-p.w * p.body.x, &u[0]);
        acc.add_lin(-p.w * p.body.y, &u[1]);
    }
    Ok(())
}

struct FacetPoint {
    w: f64,
    jb: f64,
    n: Vector2<f64>,
    h: f64,
    traction: Option<Vector2<f64>>,
}

fn facet_integrand(kind: MethodKind, m: &Method, z: &[f64], p: &FacetPoint, acc: &mut Acc) {
    let u = [LinS::var(z, 0), LinS::var(z, 1)];
    let n = [p.n.x, p.n.y];
    if kind != MethodKind::Std {
        let mut un = u[0].scale(n[0]);
        un.axpy(n[1], &u[1]);
        let alpha = LinS::var(z, 2);
        let mut jump = alpha;
        jump.axpy(-1.0, &un);
        let s = Lin2::sym(z, 3);
        let wj = p.w * p.jb;
        let f = if kind == MethodKind::Clift {
            Lin2::general(z, 6).add_const(&Mat2::identity())
        } else {
            Lin2::constant(&Mat2::identity())
        };
        acc.add_a_nfsn(wj, &jump, &f, &s, &n);
        if kind == MethodKind::Clift && m.c1 != 0.0 {
            acc.add_sq(wj * m.c1 / p.h, &jump);
        }
        if let Some(g) = p.traction {
            let gn = g.dot(&p.n);
            let gt = g - gn * p.n;
            acc.add_lin(-p.w * gt.x, &u[0]);
            acc.add_lin(-p.w * gt.y, &u[1]);
            acc.add_lin(-p.w * gn, &alpha);
        }
    } else if let Some(g) = p.traction {
        acc.add_lin(-p.w * g.x, &u[0]);
        acc.add_lin(-p.w * g.y, &u[1]);
    }
}

/// Nonzero block of B: z rows `r0..r0+nr` act on element columns `c0..c0+nc`.
#[derive(Clone, Copy)]
struct Block {
    r0: usize,
    nr: usize,
    c0: usize,
    nc: usize,
}

/// Adds Bᵀg and BᵀHB block by block, skipping structurally zero blocks of H.
fn add_system(
    b: &DMatrix<f64>,
    blocks: &[Block],
    acc: &Acc,
    want: Want,
    res: &mut DVector<f64>,
    tan: &mut Option<DMatrix<f64>>,
    value: &mut f64,
) {
    *value += acc.v;
    if want == Want::Value {
        return;
    }
    for bl in blocks {
        let g = DVector::from_column_slice(&acc.g[bl.r0..bl.r0 + bl.nr]);
        res.rows_mut(bl.c0, bl.nc)
            .gemv_tr(1.0, &b.view((bl.r0, bl.c0), (bl.nr, bl.nc)), &g, 1.0);
    }
    let Some(k) = tan.as_mut() else { return };
    let nzr = b.nrows();
    let bs = b.as_slice();
    let ne = k.nrows();
    let ks = k.as_mut_slice();
    // Row-major copies of the blocks: bt[r * nc + a] = B[r0 + r, c0 + a].
    let bt: Vec<Vec<f64>> = blocks
        .iter()
        .map(|bl| {
            let mut v = vec![0.0; bl.nr * bl.nc];
            for a in 0..bl.nc {
                for r in 0..bl.nr {
                    v[r * bl.nc + a] = bs[(bl.c0 + a) * nzr + bl.r0 + r];
                }
            }
            v
        })
        .collect();
    let mut hb = Vec::new();
    for (bi, ti) in blocks.iter().zip(&bt) {
        for (bj, tj) in blocks.iter().zip(&bt) {
            let hblk = |r: usize, q: usize| acc.h[bi.r0 + r][bj.r0 + q];
            if (0..bi.nr).all(|r| (0..bj.nr).all(|q| hblk(r, q) == 0.0)) {
                continue;
            }
            // hb[r * nc_j + c] = Σ_q H[r][q] B_j[q][c].
            hb.clear();
            hb.resize(bi.nr * bj.nc, 0.0);
            for r in 0..bi.nr {
                let row = &mut hb[r * bj.nc..(r + 1) * bj.nc];
                for q in 0..bj.nr {
                    let h = hblk(r, q);
                    if h != 0.0 {
                        for (x, y) in row.iter_mut().zip(&tj[q * bj.nc..(q + 1) * bj.nc]) {
                            *x += h * y;
                        }
                    }
                }
            }
            for c in 0..bj.nc {
                let col = &mut ks[(bj.c0 + c) * ne + bi.c0..(bj.c0 + c) * ne + bi.c0 + bi.nc];
                for r in 0..bi.nr {
                    let w = hb[r * bj.nc + c];
                    if w != 0.0 {
                        for (x, y) in col.iter_mut().zip(&ti[r * bi.nc..(r + 1) * bi.nc]) {
                            *x += w * y;
                        }
                    }
                }
            }
        }
    }
}

/// Residual/tangent of the element Lagrangian (value always, gradient and
/// Hessian on request). Loads are those of `loads` times `loads.factor`,
/// excluding the follower end moment, which is assembled globally.
pub fn element_system(
    d: &Discretization,
    t: usize,
    x: &[f64],
    law: &HyperelasticLaw,
    loads: &Loads,
    ul: Option<&UlContext>,
    want: Want,
) -> Result<ElementSystem, FormError> {
    let mesh = &d.mesh;
    let kind = d.method.kind;
    let lay = layout(d);
    let dofs = d.element_dofs(t);
    let ne = dofs.len();
    let xe = DVector::from_iterator(ne, dofs.iter().map(|&i| x[i]));
    let mut res = DVector::zeros(ne);
    let mut tan = if want == Want::Tangent {
        Some(DMatrix::zeros(ne, ne))
    } else {
        None
    };
    let mut value = 0.0;
    let (us, (u0c, nu)) = (&d.fields[0].1, d.elem_ranges[0]);
    let geom = us.geom(t);
    let k = d.method.order;
    let area = geom.area;
    let body = loads.body.as_ref();

    let mut acc = Acc::new(lay.nz_vol);
    let mut b = DMatrix::zeros(lay.nz_vol, ne);
    let ub = |r0, nr| Block { r0, nr, c0: u0c, nc: nu };
    let mut vol_blocks = vec![ub(0, 4), ub(lay.vol_u, 2)];
    for &(fi, row) in &lay.vol_sym {
        let (c0, nc) = d.elem_ranges[fi];
        vol_blocks.push(Block { r0: row, nr: 3, c0, nc });
    }
    for (l, wr) in d.quad_vol.points.iter().zip(&d.quad_vol.weights) {
        let mono = eval_monomials(k, l[0], l[1], false);
        let ev = us.eval_vec_mono(t, &mono)?;
        let fr = match ul {
            Some(c) => c.frame(t, *l)?,
            None => Frame::identity(),
        };
        let (v, g) = transform_u(kind, &ev.val, &ev.grad, &fr);
        b.fill(0.0);
        b.view_mut((0, u0c), (4, nu)).copy_from(&g);
        b.view_mut((lay.vol_u, u0c), (2, nu)).copy_from(&v);
        for &(fi, row) in &lay.vol_sym {
            let s = &d.fields[fi].1;
            let (c0, nc) = d.elem_ranges[fi];
            let sb = if s.order == k {
                s.eval_sym_mono(&mono)
            } else {
                s.eval_sym_mono(&eval_monomials(s.order, l[0], l[1], false))
            };
            b.view_mut((row, c0), (3, nc)).copy_from(&sb);
        }
        let z = &b * &xe;
        let xq = geom.map(*l);
        let bf = body.map_or(Vector2::zeros(), |f| loads.factor * f(&xq));
        acc.reset();
        let p = VolPoint {
            w: wr * 2.0 * area,
            j0: fr.j0,
            f0: &fr.f0,
            body: bf,
        };
        vol_integrand(kind, &d.method, law, &lay, z.as_slice(), &p, &mut acc)?;
        add_system(&b, &vol_blocks, &acc, want, &mut res, &mut tan, &mut value);
    }

    let signs = mesh.tri_edge_signs(t);
    let alpha = d.field_index(Field::Alpha);
    let mut acc = Acc::new(lay.nz_fac);
    let mut b = DMatrix::zeros(lay.nz_fac, ne);
    let mut fac_blocks = vec![ub(0, 2)];
    if let Some(ai) = alpha {
        let (c0, nc) = d.elem_ranges[ai];
        fac_blocks.push(Block { r0: 2, nr: 1, c0, nc });
    }
    if let Some(fi) = lay.fac_stress {
        let (c0, nc) = d.elem_ranges[fi];
        fac_blocks.push(Block { r0: 3, nr: 3, c0, nc });
    }
    if lay.fac_grad {
        fac_blocks.push(ub(6, 4));
    }
    for (i, e) in mesh.tri_edges(t).into_iter().enumerate() {
        let frm = mesh.facet_frame(e);
        let traction = mesh.edge_region(e).and_then(|r| {
            loads
                .tractions
                .iter()
                .find(|(name, _)| name == r)
                .map(|(_, g)| g)
        });
        if kind == MethodKind::Std && traction.is_none() {
            continue;
        }
        let n_ref = signs[i] * frm.normal;
        let h = area / frm.length;
        for (ps, wr) in d.quad_facet.points.iter().zip(&d.quad_facet.weights) {
            let s = ps[0];
            let l = geom.edge_point(i, signs[i], s);
            let mono = eval_monomials(k, l[0], l[1], false);
            let ev = us.eval_vec_mono(t, &mono)?;
            let fr = match ul {
                Some(c) => c.frame(t, l)?,
                None => Frame::identity(),
            };
            let (v, g) = transform_u(kind, &ev.val, &ev.grad, &fr);
            let (n0, jb) = fr.normal(&n_ref);
            b.fill(0.0);
            b.view_mut((0, u0c), (2, nu)).copy_from(&v);
            if let Some(ai) = alpha {
                let (c0, _) = d.elem_ranges[ai];
                let leg = shifted_legendre(k, s);
                for j in 0..=k {
                    b[(2, c0 + i * (k + 1) + j)] = signs[i] * leg[j];
                }
            }
            if let Some(fi) = lay.fac_stress {
                let sp = &d.fields[fi].1;
                let (c0, nc) = d.elem_ranges[fi];
                let sb = sp.eval_sym_mono(&eval_monomials(sp.order, l[0], l[1], false));
                b.view_mut((3, c0), (3, nc)).copy_from(&sb);
            }
            if lay.fac_grad {
                b.view_mut((6, u0c), (4, nu)).copy_from(&g);
            }
            let z = &b * &xe;
            let xq = geom.map(l);
            acc.reset();
            let p = FacetPoint {
                w: wr * frm.length,
                jb,
                n: n0,
                h,
                traction: traction.map(|g| loads.factor * g(&xq)),
            };
            facet_integrand(kind, &d.method, z.as_slice(), &p, &mut acc);
            add_system(&b, &fac_blocks, &acc, want, &mut res, &mut tan, &mut value);
        }
    }
    let (coupling, local): (Vec<usize>, Vec<usize>) =
        (0..ne).partition(|&i| d.elem_coupling[i]);
    Ok(ElementSystem {
        dofs,
        coupling,
        local,
        value,
        residual: res,
        tangent: tan,
    })
}

/// Element value of the discrete Lagrangian of the configured method.
pub fn lagrangian(
    d: &Discretization,
    t: usize,
    x: &[f64],
    law: &HyperelasticLaw,
    loads: &Loads,
    ul: Option<&UlContext>,
) -> Result<f64, FormError> {
    Ok(element_system(d, t, x, law, loads, ul, Want::Value)?.value)
}

fn expect_kind(d: &Discretization, k: MethodKind) -> Result<(), FormError> {
    if d.method.kind != k {
        return Err(FormError::Config(format!(
            "discretization is {:?}, expected {:?}",
            d.method.kind, k
        )));
    }
    Ok(())
}

/// Element value of the F-lifted Lagrangian with gradient splitting.
pub fn lagrangian_f(
    d: &Discretization,
    t: usize,
    x: &[f64],
    law: &HyperelasticLaw,
    loads: &Loads,
) -> Result<f64, FormError> {
    expect_kind(d, MethodKind::Flift)?;
    lagrangian(d, t, x, law, loads, None)
}

/// Element value of the C-lifted Lagrangian including stabilization.
pub fn lagrangian_c(
    d: &Discretization,
    t: usize,
    x: &[f64],
    law: &HyperelasticLaw,
    loads: &Loads,
) -> Result<f64, FormError> {
    expect_kind(d, MethodKind::Clift)?;
    lagrangian(d, t, x, law, loads, None)
}

/// Element value of the FC Lagrangian.
pub fn lagrangian_fc(
    d: &Discretization,
    t: usize,
    x: &[f64],
    law: &HyperelasticLaw,
    loads: &Loads,
) -> Result<f64, FormError> {
    expect_kind(d, MethodKind::FClift)?;
    lagrangian(d, t, x, law, loads, None)
}

/// Element contribution ∫_T P:∇u − ∮_∂T P_nn u_n of the distributional
/// pairing, and the companion hybrid term ∮_∂T P_nn α_n.
/// `u` are Nédélec element coefficients, `p` BrokenSym element coefficients
/// and `alpha` FacetNormal element coefficients.
pub fn duality_eps_pair(
    mesh: &Mesh2D,
    ned: &FeSpace,
    sym: &FeSpace,
    t: usize,
    u: &[f64],
    p: &[f64],
    alpha: &[f64],
) -> Result<(f64, f64), FormError> {
    let k = ned.order.max(sym.order);
    let qv = quad_rule(QuadDomain::Triangle, 2 * k);
    let qf = quad_rule(QuadDomain::Edge, 2 * k);
    let g = ned.geom(t);
    let ue = DVector::from_column_slice(u);
    let pe = DVector::from_column_slice(p);
    let mut vol = 0.0;
    for (l, w) in qv.points.iter().zip(&qv.weights) {
        let ev = ned.eval_vec(t, *l)?;
        let gr = &ev.grad * &ue;
        let s = sym.eval_sym(*l)? * &pe;
        vol += w * 2.0 * g.area * (s[0] * gr[0] + s[1] * gr[1] + s[2] * (gr[2] + gr[3]));
    }
    let (mut jump, mut hyb) = (0.0, 0.0);
    let signs = mesh.tri_edge_signs(t);
    for (i, e) in mesh.tri_edges(t).into_iter().enumerate() {
        let fr = mesh.facet_frame(e);
        let n = signs[i] * fr.normal;
        for (ps, w) in qf.points.iter().zip(&qf.weights) {
            let l = g.edge_point(i, signs[i], ps[0]);
            let uv = ned.eval_vec(t, l)?.val * &ue;
            let s = sym.eval_sym(l)? * &pe;
            let pnn = n.x * n.x * s[0] + n.y * n.y * s[1] + 2.0 * n.x * n.y * s[2];
            let leg = shifted_legendre(ned.order, ps[0]);
            let a: f64 = (0..=ned.order)
                .map(|j| signs[i] * alpha[i * (ned.order + 1) + j] * leg[j])
                .sum();
            jump += w * fr.length * pnn * (uv[0] * n.x + uv[1] * n.y);
            hyb += w * fr.length * pnn * a;
        }
    }
    Ok((vol - jump, hyb))
}

/// External work ∫ f·u + ∫_{Γ_N} (g_T·u_T + g_N α_N) of one element (the
/// normal traction pairs with α, the tangential one with u).
pub fn external_load(
    d: &Discretization,
    t: usize,
    x: &[f64],
    loads: &Loads,
) -> Result<f64, FormError> {
    let mesh = &d.mesh;
    let us = &d.fields[0].1;
    let g = us.geom(t);
    let ue = DVector::from_vec(us.gather(t, &d.field_slice(Field::U, x).unwrap().to_vec()));
    let mut w_ext = 0.0;
    if let Some(f) = &loads.body {
        for (l, w) in d.quad_vol.points.iter().zip(&d.quad_vol.weights) {
            let u = us.eval_vec(t, *l)?.val * &ue;
            let fv = loads.factor * f(&g.map(*l));
            w_ext += w * 2.0 * g.area * (fv.x * u[0] + fv.y * u[1]);
        }
    }
    let k = d.method.order;
    let signs = mesh.tri_edge_signs(t);
    let alpha = d.field_slice(Field::Alpha, x);
    for (i, e) in mesh.tri_edges(t).into_iter().enumerate() {
        let Some(reg) = mesh.edge_region(e) else { continue };
        let Some((_, gf)) = loads.tractions.iter().find(|(n, _)| n == reg) else { continue };
        let fr = mesh.facet_frame(e);
        let n = signs[i] * fr.normal;
        for (ps, w) in d.quad_facet.points.iter().zip(&d.quad_facet.weights) {
            let l = g.edge_point(i, signs[i], ps[0]);
            let u = us.eval_vec(t, l)?.val * &ue;
            let u = Vector2::new(u[0], u[1]);
            let gv = loads.factor * gf(&g.map(l));
            let val = match alpha {
                None => gv.dot(&u),
                Some(a) => {
                    let leg = shifted_legendre(k, ps[0]);
                    let an: f64 = (0..=k).map(|j| signs[i] * a[e * (k + 1) + j] * leg[j]).sum();
                    let gn = gv.dot(&n);
                    (gv - gn * n).dot(&u) + gn * an
                }
            };
            w_ext += w * fr.length * val;
        }
    }
    Ok(w_ext)
}
