//! Finite-element spaces on triangles: continuous vector Lagrange, full-P_k
//! Nédélec, facet-normal hybrid multipliers and broken symmetric matrices.
//!
//! Bases are built per physical element from barycentric monomials and a dual
//! basis of the degrees of freedom, so no reference Piola maps are needed.

pub mod poly;
pub mod quadrature;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};

use crate::mesh2d::{Mesh2D, Point};
pub use poly::{dim_p, eval_monomials, exponents, ElementGeom, MonoEval};
pub use quadrature::{gauss_legendre, quad_rule, shifted_legendre, QuadDomain, QuadRule};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum FeError {
    #[error("order {0} not supported (1..={MAX_ORDER})")]
    UnsupportedOrder(usize),
    #[error("operation not available for {0:?}")]
    WrongFamily(SpaceFamily),
    #[error("reference point ({0}, {1}) outside the reference triangle")]
    OutsideReference(f64, f64),
    #[error("point ({0}, {1}) outside the mesh")]
    OutsideMesh(f64, f64),
    #[error(transparent)]
    Mesh(#[from] crate::mesh2d::MeshError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceFamily {
    LagrangeVec,
    Nedelec,
    FacetNormal,
    BrokenSym,
}

/// Degree-of-freedom layout. Coupling dofs are numbered first, so a dof is
/// coupling exactly when its index is below `n_coupling`.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub n_dofs: usize,
    pub n_coupling: usize,
    /// Dofs per vertex, per edge and per element interior.
    pub per_vertex: usize,
    pub per_edge: usize,
    pub per_interior: usize,
    elem: Vec<Vec<usize>>,
    constrained: BTreeMap<usize, f64>,
}

impl DofMap {
    pub fn element_dofs(&self, t: usize) -> &[usize] {
        &self.elem[t]
    }
    pub fn is_coupling(&self, dof: usize) -> bool {
        dof < self.n_coupling
    }
    pub fn n_local(&self) -> usize {
        self.n_dofs - self.n_coupling
    }
    pub fn constrain(&mut self, dof: usize, value: f64) {
        self.constrained.insert(dof, value);
    }
    pub fn constrained(&self) -> &BTreeMap<usize, f64> {
        &self.constrained
    }
    pub fn clear_constraints(&mut self) {
        self.constrained.clear();
    }
}

/// Values (2×n) and gradients (4×n, rows ∂u1/∂x, ∂u2/∂y, ∂u1/∂y, ∂u2/∂x) of
/// the vector basis functions of one element.
#[derive(Clone, Debug)]
pub struct VecEval {
    pub val: DMatrix<f64>,
    pub grad: DMatrix<f64>,
}

/// Value, gradient and second derivatives of a vector field at a point.
#[derive(Clone, Debug)]
pub struct VecJet {
    pub val: Vector2<f64>,
    pub grad: Matrix2<f64>,
    /// d/dx and d/dy of the gradient.
    pub dgrad: [Matrix2<f64>; 2],
}

#[derive(Clone, Debug)]
pub struct FeSpace {
    pub family: SpaceFamily,
    pub order: usize,
    pub dofs: DofMap,
    geom: Vec<ElementGeom>,
    /// Primitive-to-basis coefficients per element (Nédélec, Lagrange).
    coef: Vec<DMatrix<f64>>,
    /// Lagrange node positions per element in reference coordinates.
    nodes: Vec<[f64; 2]>,
}

fn vec4(m: &Matrix2<f64>) -> [f64; 4] {
    [m[(0, 0)], m[(1, 1)], m[(0, 1)], m[(1, 0)]]
}

impl FeSpace {
    pub fn new(mesh: &Mesh2D, family: SpaceFamily, order: usize) -> Result<Self, FeError> {
        if order == 0 || order > MAX_ORDER {
            return Err(FeError::UnsupportedOrder(order));
        }
        let k = order;
        let (nv, ne, nt) = (mesh.num_vertices(), mesh.num_edges(), mesh.num_triangles());
        let geom: Vec<ElementGeom> = (0..nt).map(|t| ElementGeom::new(mesh, t)).collect();
        let nm = dim_p(k);
        let mut elem = Vec::with_capacity(nt);
        let mut coef = Vec::new();
        let mut nodes = Vec::new();
        let dofs = match family {
            SpaceFamily::Nedelec => {
                let nb = (k + 1) * (k - 1);
                let nc = (k + 1) * ne;
                for t in 0..nt {
                    let mut d = Vec::with_capacity(2 * nm);
                    for e in mesh.tri_edges(t) {
                        d.extend((0..=k).map(|j| e * (k + 1) + j));
                    }
                    d.extend((0..nb).map(|b| nc + t * nb + b));
                    elem.push(d);
                    coef.push(nedelec_coefficients(mesh, &geom[t], t, k));
                }
                DofMap {
                    n_dofs: nc + nt * nb,
                    n_coupling: nc,
                    per_vertex: 0,
                    per_edge: k + 1,
                    per_interior: nb,
                    elem,
                    constrained: BTreeMap::new(),
                }
            }
            SpaceFamily::FacetNormal => {
                for t in 0..nt {
                    let mut d = Vec::with_capacity(3 * (k + 1));
                    for e in mesh.tri_edges(t) {
                        d.extend((0..=k).map(|j| e * (k + 1) + j));
                    }
                    elem.push(d);
                }
                DofMap {
                    n_dofs: (k + 1) * ne,
                    n_coupling: (k + 1) * ne,
                    per_vertex: 0,
                    per_edge: k + 1,
                    per_interior: 0,
                    elem,
                    constrained: BTreeMap::new(),
                }
            }
            SpaceFamily::BrokenSym => {
                let nl = 3 * nm;
                for t in 0..nt {
                    elem.push((0..nl).map(|i| t * nl + i).collect());
                }
                DofMap {
                    n_dofs: nt * nl,
                    n_coupling: 0,
                    per_vertex: 0,
                    per_edge: 0,
                    per_interior: nl,
                    elem,
                    constrained: BTreeMap::new(),
                }
            }
            SpaceFamily::LagrangeVec => {
                let ni = (k - 1) * k.saturating_sub(2) / 2;
                let ncn = nv + (k - 1) * ne;
                let nc = 2 * ncn;
                for t in 0..nt {
                    let tri = mesh.triangles()[t];
                    let signs = mesh.tri_edge_signs(t);
                    let mut node_ids = Vec::new();
                    let mut pts = Vec::new();
                    let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
                    for i in 0..3 {
                        node_ids.push(tri[i]);
                        pts.push(corners[i]);
                    }
                    for (i, e) in mesh.tri_edges(t).into_iter().enumerate() {
                        for j in 1..k {
                            node_ids.push(nv + e * (k - 1) + j - 1);
                            pts.push(geom[t].edge_point(i, signs[i], j as f64 / k as f64));
                        }
                    }
                    let mut d: Vec<usize> = Vec::new();
                    for n in &node_ids {
                        d.push(2 * n);
                        d.push(2 * n + 1);
                    }
                    let mut b = 0;
                    for a in 1..k {
                        for c in 1..k {
                            if a + c < k {
                                pts.push([a as f64 / k as f64, c as f64 / k as f64]);
                                d.push(nc + t * 2 * ni + 2 * b);
                                d.push(nc + t * 2 * ni + 2 * b + 1);
                                b += 1;
                            }
                        }
                    }
                    elem.push(d);
                    let mut vdm = DMatrix::zeros(nm, nm);
                    for (r, p) in pts.iter().enumerate() {
                        let m = eval_monomials(k, p[0], p[1], false);
                        for c in 0..nm {
                            vdm[(r, c)] = m.v[c];
                        }
                    }
                    coef.push(vdm.try_inverse().expect("unisolvent Lagrange nodes"));
                    if t == 0 {
                        nodes = pts.clone();
                    }
                }
                DofMap {
                    n_dofs: nc + nt * 2 * ni,
                    n_coupling: nc,
                    per_vertex: 2,
                    per_edge: 2 * (k - 1),
                    per_interior: 2 * ni,
                    elem,
                    constrained: BTreeMap::new(),
                }
            }
        };
        Ok(Self {
            family,
            order,
            dofs,
            geom,
            coef,
            nodes,
        })
    }

    pub fn geom(&self, t: usize) -> &ElementGeom {
        &self.geom[t]
    }

    /// Lagrange node positions in reference coordinates: vertices, edge
    /// nodes, interior nodes.
    pub fn lagrange_nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn n_element_dofs(&self) -> usize {
        self.dofs.elem.first().map_or(0, |d| d.len())
    }

    /// Number of primitive monomials.
    pub fn n_mono(&self) -> usize {
        dim_p(self.order)
    }

    fn check_ref(l: [f64; 2]) -> Result<(), FeError> {
        let tol = 1e-12;
        if l[0] < -tol || l[1] < -tol || l[0] + l[1] > 1.0 + tol {
            return Err(FeError::OutsideReference(l[0], l[1]));
        }
        Ok(())
    }

    /// Vector basis (Nédélec or LagrangeVec) at reference point `l`.
    pub fn eval_vec(&self, t: usize, l: [f64; 2]) -> Result<VecEval, FeError> {
        Self::check_ref(l)?;
        let m = eval_monomials(self.order, l[0], l[1], false);
        self.eval_vec_mono(t, &m)
    }

    /// Like `eval_vec` with precomputed monomials.
    pub fn eval_vec_mono(&self, t: usize, m: &MonoEval) -> Result<VecEval, FeError> {
        let g = &self.geom[t];
        let nm = m.v.len();
        match self.family {
            SpaceFamily::Nedelec => {
                let c = &self.coef[t];
                let n = c.ncols();
                // Primitive p_m ∇λ_a has value p_m ∇λ_a and gradient ∇λ_a ⊗ ∇p_m.
                let mut pv = DMatrix::zeros(2, 2 * nm);
                let mut pg = DMatrix::zeros(4, 2 * nm);
                for a in 0..2 {
                    let gl = g.grad_l[a];
                    for i in 0..nm {
                        let col = a * nm + i;
                        let gp = g.grad(m.d1[i], m.d2[i]);
                        pv[(0, col)] = m.v[i] * gl.x;
                        pv[(1, col)] = m.v[i] * gl.y;
                        pg[(0, col)] = gl.x * gp.x;
                        pg[(1, col)] = gl.y * gp.y;
                        pg[(2, col)] = gl.x * gp.y;
                        pg[(3, col)] = gl.y * gp.x;
                    }
                }
                let _ = n;
                Ok(VecEval {
                    val: &pv * c,
                    grad: &pg * c,
                })
            }
            SpaceFamily::LagrangeVec => {
                let c = &self.coef[t];
                let nn = c.ncols();
                let mut val = DMatrix::zeros(2, 2 * nn);
                let mut grad = DMatrix::zeros(4, 2 * nn);
                for n in 0..nn {
                    let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
                    for i in 0..nm {
                        v += c[(i, n)] * m.v[i];
                        d1 += c[(i, n)] * m.d1[i];
                        d2 += c[(i, n)] * m.d2[i];
                    }
                    let gp = g.grad(d1, d2);
                    val[(0, 2 * n)] = v;
                    val[(1, 2 * n + 1)] = v;
                    grad[(0, 2 * n)] = gp.x;
                    grad[(2, 2 * n)] = gp.y;
                    grad[(1, 2 * n + 1)] = gp.y;
                    grad[(3, 2 * n + 1)] = gp.x;
                }
                Ok(VecEval { val, grad })
            }
            f => Err(FeError::WrongFamily(f)),
        }
    }

    /// Scalar Lagrange shape functions (one per node) at `l`.
    pub fn lagrange_shapes(&self, t: usize, l: [f64; 2]) -> Result<Vec<f64>, FeError> {
        if self.family != SpaceFamily::LagrangeVec {
            return Err(FeError::WrongFamily(self.family));
        }
        Self::check_ref(l)?;
        let m = eval_monomials(self.order, l[0], l[1], false);
        let c = &self.coef[t];
        Ok((0..c.ncols())
            .map(|n| (0..m.v.len()).map(|i| c[(i, n)] * m.v[i]).sum())
            .collect())
    }

    /// Value, gradient and gradient derivatives of a vector field from its
    /// element coefficients (Nédélec or LagrangeVec).
    pub fn vec_jet(&self, t: usize, l: [f64; 2], local: &[f64]) -> Result<VecJet, FeError> {
        let m = eval_monomials(self.order, l[0], l[1], true);
        let g = &self.geom[t];
        let nm = m.v.len();
        // Coefficients of the field in primitive form: u = Σ_i p_i w_i with w_i ∈ R².
        let mut w = vec![Vector2::zeros(); nm];
        let c = &self.coef[t];
        match self.family {
            SpaceFamily::Nedelec => {
                let x = DVector::from_column_slice(local);
                let pc = c * x;
                for i in 0..nm {
                    w[i] = pc[i] * g.grad_l[0] + pc[nm + i] * g.grad_l[1];
                }
            }
            SpaceFamily::LagrangeVec => {
                for i in 0..nm {
                    for n in 0..c.ncols() {
                        w[i] += c[(i, n)] * Vector2::new(local[2 * n], local[2 * n + 1]);
                    }
                }
            }
            f => return Err(FeError::WrongFamily(f)),
        }
        let mut jet = VecJet {
            val: Vector2::zeros(),
            grad: Matrix2::zeros(),
            dgrad: [Matrix2::zeros(); 2],
        };
        for i in 0..nm {
            jet.val += m.v[i] * w[i];
            jet.grad += w[i] * g.grad(m.d1[i], m.d2[i]).transpose();
            let h = g.hess(m.d11[i], m.d12[i], m.d22[i]);
            for k in 0..2 {
                jet.dgrad[k] += w[i] * h.column(k).transpose();
            }
        }
        Ok(jet)
    }

    /// Broken symmetric basis at `l`: 3×n matrix of components (s11, s22, s12).
    pub fn eval_sym(&self, l: [f64; 2]) -> Result<DMatrix<f64>, FeError> {
        if self.family != SpaceFamily::BrokenSym {
            return Err(FeError::WrongFamily(self.family));
        }
        Self::check_ref(l)?;
        let m = eval_monomials(self.order, l[0], l[1], false);
        Ok(self.eval_sym_mono(&m))
    }

    pub fn eval_sym_mono(&self, m: &MonoEval) -> DMatrix<f64> {
        let nm = m.v.len();
        let mut out = DMatrix::zeros(3, 3 * nm);
        for c in 0..3 {
            for i in 0..nm {
                out[(c, c * nm + i)] = m.v[i];
            }
        }
        out
    }

    /// Element-local coefficient vector of the constant identity in BrokenSym.
    pub fn sym_identity_local(&self) -> Vec<f64> {
        let nm = self.n_mono();
        let mut v = vec![0.0; 3 * nm];
        v[0] = 1.0;
        v[nm] = 1.0;
        v
    }

    /// Facet basis (shifted Legendre) at global edge parameter `s`.
    pub fn eval_facet(&self, s: f64) -> Vec<f64> {
        shifted_legendre(self.order, s)
    }

    /// Basis functions at a reference point as (value, gradient) pairs for
    /// vector families, or (symmetric matrix, zero) for BrokenSym.
    pub fn eval_basis(
        &self,
        t: usize,
        l: [f64; 2],
    ) -> Result<Vec<(Vec<f64>, Vec<f64>)>, FeError> {
        match self.family {
            SpaceFamily::Nedelec | SpaceFamily::LagrangeVec => {
                let e = self.eval_vec(t, l)?;
                Ok((0..e.val.ncols())
                    .map(|i| {
                        (
                            vec![e.val[(0, i)], e.val[(1, i)]],
                            (0..4).map(|r| e.grad[(r, i)]).collect(),
                        )
                    })
                    .collect())
            }
            SpaceFamily::BrokenSym => {
                let e = self.eval_sym(l)?;
                Ok((0..e.ncols())
                    .map(|i| {
                        let (a, b, c) = (e[(0, i)], e[(1, i)], e[(2, i)]);
                        (vec![a, c, c, b], vec![0.0; 4])
                    })
                    .collect())
            }
            f => Err(FeError::WrongFamily(f)),
        }
    }

    /// Gathers the element-local coefficients of a global vector.
    pub fn gather(&self, t: usize, global: &[f64]) -> Vec<f64> {
        self.dofs.elem[t].iter().map(|&d| global[d]).collect()
    }

    /// Evaluates a vector field at a physical point using the lowest-index
    /// containing element.
    pub fn eval_vector_field(
        &self,
        mesh: &Mesh2D,
        coeffs: &[f64],
        x: &Point,
    ) -> Result<Vector2<f64>, FeError> {
        let t = mesh.locate(x).ok_or(FeError::OutsideMesh(x.x, x.y))?;
        self.eval_vector_in(t, coeffs, x)
    }

    /// Evaluates a vector field in a given element at a physical point.
    pub fn eval_vector_in(
        &self,
        t: usize,
        coeffs: &[f64],
        x: &Point,
    ) -> Result<Vector2<f64>, FeError> {
        let l = self.geom[t].to_ref(x);
        let l = [l[0].clamp(0.0, 1.0), l[1].clamp(0.0, 1.0 - l[0].clamp(0.0, 1.0))];
        let e = self.eval_vec(t, l)?;
        let loc = DVector::from_vec(self.gather(t, coeffs));
        let v = e.val * loc;
        Ok(Vector2::new(v[0], v[1]))
    }

    /// Evaluates a broken symmetric field at a physical point.
    pub fn eval_sym_field(
        &self,
        mesh: &Mesh2D,
        coeffs: &[f64],
        x: &Point,
    ) -> Result<Matrix2<f64>, FeError> {
        let t = mesh.locate(x).ok_or(FeError::OutsideMesh(x.x, x.y))?;
        let l = self.geom[t].to_ref(x);
        let e = self.eval_sym([l[0].max(0.0), l[1].max(0.0)])?;
        let loc = DVector::from_vec(self.gather(t, coeffs));
        let v = e * loc;
        Ok(Matrix2::new(v[0], v[2], v[2], v[1]))
    }

    /// Moments (2j+1)∫ f(x(s), s) P_j(s) ds along a mesh edge, parameter in
    /// the global edge direction.
    pub fn edge_moments(
        &self,
        mesh: &Mesh2D,
        e: usize,
        f: &dyn Fn(&Point, f64) -> f64,
    ) -> Vec<f64> {
        edge_moments(mesh, e, self.order, f)
    }

    /// Computes and registers constrained dof values on a boundary region:
    /// tangential moments (Nédélec), normal moments (FacetNormal) or nodal
    /// values (LagrangeVec) of `datum`.
    pub fn interpolate_essential(
        &mut self,
        mesh: &Mesh2D,
        region: &str,
        datum: &dyn Fn(&Point) -> Vector2<f64>,
    ) -> Result<Vec<(usize, f64)>, FeError> {
        let edges = mesh.region_edges(region)?;
        let vals = self.essential_values(mesh, &edges, datum)?;
        for &(d, v) in &vals {
            self.dofs.constrain(d, v);
        }
        Ok(vals)
    }

    /// Constrained dof values on the given edges without registering them.
    pub fn essential_values(
        &self,
        mesh: &Mesh2D,
        edges: &[usize],
        datum: &dyn Fn(&Point) -> Vector2<f64>,
    ) -> Result<Vec<(usize, f64)>, FeError> {
        let k = self.order;
        let mut out = BTreeMap::new();
        for &e in edges {
            let fr = mesh.facet_frame(e);
            match self.family {
                SpaceFamily::Nedelec => {
                    let m = self.edge_moments(mesh, e, &|x, _| datum(x).dot(&fr.tangent));
                    for (j, v) in m.into_iter().enumerate() {
                        out.insert(e * (k + 1) + j, v);
                    }
                }
                SpaceFamily::FacetNormal => {
                    let m = self.edge_moments(mesh, e, &|x, _| datum(x).dot(&fr.normal));
                    for (j, v) in m.into_iter().enumerate() {
                        out.insert(e * (k + 1) + j, v);
                    }
                }
                SpaceFamily::LagrangeVec => {
                    let nv = mesh.num_vertices();
                    let [p, q] = mesh.edges()[e];
                    let (xp, xq) = (mesh.vertices()[p], mesh.vertices()[q]);
                    let mut put = |node: usize, x: Point| {
                        let v = datum(&x);
                        out.insert(2 * node, v.x);
                        out.insert(2 * node + 1, v.y);
                    };
                    put(p, xp);
                    put(q, xq);
                    for j in 1..k {
                        let s = j as f64 / k as f64;
                        put(nv + e * (k - 1) + j - 1, xp + s * (xq - xp));
                    }
                }
                f => return Err(FeError::WrongFamily(f)),
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Interpolant of a vector field into the whole space (Nédélec, FacetNormal,
    /// LagrangeVec). Nédélec interiors use the local L² projection of the
    /// remainder onto the element bubbles.
    pub fn interpolate(
        &self,
        mesh: &Mesh2D,
        f: &dyn Fn(&Point) -> Vector2<f64>,
    ) -> Result<Vec<f64>, FeError> {
        let mut x = vec![0.0; self.dofs.n_dofs];
        let all: Vec<usize> = (0..mesh.num_edges()).collect();
        match self.family {
            SpaceFamily::FacetNormal => {
                for (d, v) in self.essential_values(mesh, &all, f)? {
                    x[d] = v;
                }
            }
            SpaceFamily::LagrangeVec => {
                for (d, v) in self.essential_values(mesh, &all, f)? {
                    x[d] = v;
                }
                for t in 0..mesh.num_triangles() {
                    let g = &self.geom[t];
                    let dofs = &self.dofs.elem[t];
                    let ncorner = 3 * self.order;
                    for (n, p) in self.nodes.iter().enumerate().skip(ncorner) {
                        let v = f(&g.map(*p));
                        x[dofs[2 * n]] = v.x;
                        x[dofs[2 * n + 1]] = v.y;
                    }
                }
            }
            SpaceFamily::Nedelec => {
                for (d, v) in self.essential_values(mesh, &all, f)? {
                    x[d] = v;
                }
                let k = self.order;
                let ned = 3 * (k + 1);
                let nb = self.dofs.per_interior;
                if nb > 0 {
                    let q = quad_rule(QuadDomain::Triangle, 2 * k + 6);
                    for t in 0..mesh.num_triangles() {
                        let g = &self.geom[t];
                        let dofs = &self.dofs.elem[t];
                        let xe: Vec<f64> = dofs[..ned].iter().map(|&d| x[d]).collect();
                        let mut mass = DMatrix::zeros(nb, nb);
                        let mut rhs = DVector::zeros(nb);
                        for (p, w) in q.points.iter().zip(&q.weights) {
                            let e = self.eval_vec(t, *p)?;
                            let ue = e.val.columns(0, ned) * DVector::from_column_slice(&xe);
                            let r = f(&g.map(*p)) - Vector2::new(ue[0], ue[1]);
                            let b = e.val.columns(ned, nb);
                            mass += *w * b.transpose() * b;
                            rhs += *w * b.transpose() * DVector::from_column_slice(r.as_slice());
                        }
                        let c = mass.lu().solve(&rhs).expect("bubble mass invertible");
                        for i in 0..nb {
                            x[dofs[ned + i]] = c[i];
                        }
                    }
                }
            }
            SpaceFamily::BrokenSym => return Err(FeError::WrongFamily(self.family)),
        }
        Ok(x)
    }

    /// Element-wise L² projection of the symmetric part of a matrix field.
    pub fn project_sym(
        &self,
        mesh: &Mesh2D,
        f: &dyn Fn(usize, &Point) -> Matrix2<f64>,
    ) -> Result<Vec<f64>, FeError> {
        if self.family != SpaceFamily::BrokenSym {
            return Err(FeError::WrongFamily(self.family));
        }
        let q = quad_rule(QuadDomain::Triangle, 2 * self.order + 6);
        let mut x = vec![0.0; self.dofs.n_dofs];
        let n = 3 * self.n_mono();
        for t in 0..mesh.num_triangles() {
            let g = &self.geom[t];
            let mut mass = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            for (p, w) in q.points.iter().zip(&q.weights) {
                let b = self.eval_sym(*p)?;
                let m = f(t, &g.map(*p));
                let s = DVector::from_vec(vec![m[(0, 0)], m[(1, 1)], 0.5 * (m[(0, 1)] + m[(1, 0)])]);
                // Frobenius inner product weights the off-diagonal component twice.
                let wt = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 2.0]));
                mass += *w * b.transpose() * &wt * &b;
                rhs += *w * b.transpose() * &wt * s;
            }
            let c = mass.cholesky().expect("sym mass SPD").solve(&rhs);
            let dofs = &self.dofs.elem[t];
            for i in 0..n {
                x[dofs[i]] = c[i];
            }
        }
        Ok(x)
    }
}

/// Moments (2j+1)∫₀¹ f(x(s), s) P_j(s) ds, j = 0..=k, along edge `e`.
pub fn edge_moments(
    mesh: &Mesh2D,
    e: usize,
    k: usize,
    f: &dyn Fn(&Point, f64) -> f64,
) -> Vec<f64> {
    let (s, w) = gauss_legendre(k + 8);
    let [p, q] = mesh.edges()[e];
    let (xp, xq) = (mesh.vertices()[p], mesh.vertices()[q]);
    let mut out = vec![0.0; k + 1];
    for (si, wi) in s.iter().zip(&w) {
        let x = xp + *si * (xq - xp);
        let v = f(&x, *si);
        let l = shifted_legendre(k, *si);
        for j in 0..=k {
            out[j] += (2 * j + 1) as f64 * wi * v * l[j];
        }
    }
    out
}

/// Primitive-to-basis coefficients of the Nédélec element on triangle `t`.
/// Columns 0..3(k+1) are the edge functions (tangential trace P_j on their
/// own edge, zero on the others), the rest span the bubbles.
fn nedelec_coefficients(mesh: &Mesh2D, g: &ElementGeom, t: usize, k: usize) -> DMatrix<f64> {
    let nm = dim_p(k);
    let n = 2 * nm;
    let ne = 3 * (k + 1);
    let signs = mesh.tri_edge_signs(t);
    let edges = mesh.tri_edges(t);
    let (qs, qw) = gauss_legendre(k + 2);
    // Functionals with the unnormalized tangent τ = x_hi − x_lo.
    let mut d = DMatrix::<f64>::zeros(ne, n);
    for i in 0..3 {
        let [p, q] = mesh.edges()[edges[i]];
        let tau = mesh.vertices()[q] - mesh.vertices()[p];
        let gt = [g.grad_l[0].dot(&tau), g.grad_l[1].dot(&tau)];
        for (s, w) in qs.iter().zip(&qw) {
            let l = g.edge_point(i, signs[i], *s);
            let m = eval_monomials(k, l[0], l[1], false);
            let leg = shifted_legendre(k, *s);
            for j in 0..=k {
                let r = i * (k + 1) + j;
                for a in 0..2 {
                    for mi in 0..nm {
                        d[(r, a * nm + mi)] += (2 * j + 1) as f64 * w * leg[j] * m.v[mi] * gt[a];
                    }
                }
            }
        }
    }
    let ddt: DMatrix<f64> = &d * d.transpose();
    let pinv = d.transpose() * ddt.try_inverse().expect("edge functionals independent");
    let mut c = DMatrix::zeros(n, n);
    for i in 0..3 {
        let len = mesh.edge_length(edges[i]);
        for j in 0..=k {
            let col = i * (k + 1) + j;
            c.set_column(col, &(pinv.column(col) * len));
        }
    }
    if n > ne {
        let proj = DMatrix::identity(n, n) - &pinv * &d;
        let eig = SymmetricEigen::new(proj);
        let mut col = ne;
        for i in 0..n {
            if eig.eigenvalues[i] > 0.5 {
                c.set_column(col, &eig.eigenvectors.column(i));
                col += 1;
            }
        }
        assert_eq!(col, n, "bubble space dimension");
    }
    c
}

/// Flattens a 2×2 matrix in the (11, 22, 12, 21) ordering.
pub fn mat_to_vec4(m: &Matrix2<f64>) -> [f64; 4] {
    vec4(m)
}
