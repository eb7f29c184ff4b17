//! Damped Newton iteration on the condensed system, load stepping, sparse
//! direct solves and the Updated Lagrangian driver.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DVector, Matrix2, Vector2};

use crate::fespace::{FeSpace, SpaceFamily};
use crate::forms::condense::State;
use crate::forms::{
    assemble_condensed, back_substitute, follower, CondensedSystem, Dirichlet, Discretization,
    Field, FormError, Loads, MethodKind, UlContext,
};
use crate::material::HyperelasticLaw;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("factorization breakdown: {0}")]
    Breakdown(String),
    #[error("no convergence in {iterations} iterations (residual {residual:.3e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("inadmissible state persists after {0} halvings")]
    Domain(usize),
    #[error("load step bisection exhausted at factor {0}")]
    BisectionExhausted(f64),
    #[error("secant iteration failed: {0}")]
    Secant(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Form(#[from] FormError),
}

impl SolverError {
    /// Failures that a smaller load step may cure.
    pub fn is_recoverable(&self) -> bool {
        match self {
            SolverError::Breakdown(_) | SolverError::MaxIterations { .. } | SolverError::Domain(_) => {
                true
            }
            SolverError::Form(e) => is_domain(e),
            _ => false,
        }
    }
}

fn is_domain(e: &FormError) -> bool {
    matches!(
        e,
        FormError::Material(_) | FormError::Configuration(_) | FormError::SingularLocal(_)
    )
}

#[derive(Clone, Debug)]
pub struct NewtonConfig {
    pub atol: f64,
    /// Relative to the first residual of each load step.
    pub rtol: f64,
    pub max_iter: usize,
    pub halving: f64,
    pub max_halvings: usize,
    /// A trial step counts as an increase when its residual exceeds
    /// `growth_limit` times the current one; 1 gives strictly monotone damping.
    pub growth_limit: f64,
    pub load_steps: usize,
    /// A load increment is bisected at most this many times.
    pub max_bisections: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            atol: 1e-8,
            rtol: 1e-10,
            max_iter: 30,
            halving: 0.5,
            max_halvings: 10,
            growth_limit: 1e4,
            load_steps: 4,
            max_bisections: 6,
        }
    }
}

impl NewtonConfig {
    pub fn with_load_steps(mut self, n: usize) -> Self {
        self.load_steps = n;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.atol > 0.0 && self.rtol > 0.0) {
            return Err(SolverError::Config("tolerances must be positive".into()));
        }
        if self.max_iter == 0 || self.load_steps == 0 {
            return Err(SolverError::Config("iteration and step counts must be >= 1".into()));
        }
        if !(self.growth_limit >= 1.0) {
            return Err(SolverError::Config("growth limit must be >= 1".into()));
        }
        if !(self.halving > 0.0 && self.halving < 1.0) {
            return Err(SolverError::Config("halving factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Newton history of one load step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub factor: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    /// Discrete Lagrangian value at each iterate.
    pub values: Vec<f64>,
    /// (iteration, number of halvings) for every damped update.
    pub damping: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    pub steps: Vec<StepReport>,
    /// Attempts that failed and were bisected.
    pub failed_attempts: usize,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn total_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.iterations).sum()
    }
}

/// Sums duplicate (row, col) entries; output sorted by column then row.
fn merge_entries(entries: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut e: Vec<(usize, usize, f64)> = entries.iter().map(|&(i, j, v)| (j, i, v)).collect();
    e.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(e.len());
    for (j, i, v) in e {
        match out.last_mut() {
            Some(last) if last.0 == i && last.1 == j => last.2 += v,
            _ => out.push((i, j, v)),
        }
    }
    out
}

fn residual_rel(m: &[(usize, usize, f64)], x: &DVector<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let mut r = b.clone();
    let mut row_abs = vec![0.0; b.len()];
    for &(i, j, v) in m {
        r[i] -= v * x[j];
        row_abs[i] += v.abs();
    }
    let a_inf = row_abs.iter().cloned().fold(0.0, f64::max);
    let x_inf = x.amax();
    let b_inf = b.amax();
    // Implied condition estimate beyond 1e14 is treated as singular.
    if !(x_inf.is_finite() && a_inf * x_inf <= 1e14 * b_inf) {
        return (r, f64::INFINITY);
    }
    let rel = r.amax() / (a_inf * x_inf + b_inf);
    (r, if rel.is_finite() { rel } else { f64::INFINITY })
}

/// Solves `K x = b` for a sparse matrix given as (row, col, value) entries with
/// duplicates summed. Symmetric matrices use a sparse Cholesky factorization
/// and fall back to LU; the normwise backward error
/// ‖r‖∞ / (‖K‖∞‖x‖∞ + ‖b‖∞) must not exceed 1e-10.
pub fn sparse_solve_entries(
    n: usize,
    entries: &[(usize, usize, f64)],
    rhs: &DVector<f64>,
    symmetric: bool,
) -> Result<DVector<f64>, SolverError> {
    if rhs.len() != n {
        return Err(SolverError::Config("right-hand side dimension mismatch".into()));
    }
    if n == 0 || rhs.norm() == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let m = merge_entries(entries);
    let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    let to_vec = |x: Mat<f64>| DVector::from_iterator(n, (0..n).map(|i| x[(i, 0)]));
    let full: Vec<Triplet<usize, usize, f64>> = m.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &full)
        .map_err(|e| SolverError::Breakdown(format!("{e:?}")))?;
    let refine = |solve: &dyn Fn(&Mat<f64>) -> Mat<f64>| -> Option<DVector<f64>> {
        let mut x = to_vec(solve(&b));
        for _ in 0..2 {
            let (r, rel) = residual_rel(&m, &x, rhs);
            if rel <= 1e-10 {
                return Some(x);
            }
            if !rel.is_finite() {
                return None;
            }
            let rm = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
            x += to_vec(solve(&rm));
        }
        let (_, rel) = residual_rel(&m, &x, rhs);
        (rel <= 1e-10).then_some(x)
    };
    if symmetric {
        let lower: Vec<Triplet<usize, usize, f64>> = m
            .iter()
            .filter(|&&(i, j, _)| i >= j)
            .map(|&(i, j, v)| Triplet::new(i, j, v))
            .collect();
        if let Ok(al) = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &lower) {
            if let Ok(llt) = al.sp_cholesky(Side::Lower) {
                if let Some(x) = refine(&|v| llt.solve(v)) {
                    return Ok(x);
                }
            }
        }
    }
    let lu = a
        .sp_lu()
        .map_err(|e| SolverError::Breakdown(format!("{e:?}")))?;
    refine(&|v| lu.solve(v))
        .ok_or_else(|| SolverError::Breakdown("linear residual above 1e-10 (singular matrix)".into()))
}

/// Solves the condensed Newton system for the coupling increment.
pub fn sparse_solve(sys: &CondensedSystem) -> Result<DVector<f64>, SolverError> {
    sparse_solve_entries(sys.n, &sys.entries, &sys.rhs, sys.symmetric)
}

/// Discretization, material, loads and Dirichlet data of one boundary value problem.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub d: &'a Discretization,
    pub law: &'a HyperelasticLaw,
    pub loads: &'a Loads,
    pub bcs: &'a [Dirichlet],
}

fn constraints(
    p: &Problem,
    factor: f64,
    ul: Option<&UlContext>,
) -> Result<BTreeMap<usize, f64>, SolverError> {
    Ok(p.d.dirichlet_values(p.bcs, factor, ul)?.into_iter().collect())
}

/// Damped Newton iteration at load factor `factor` starting from `state`
/// (Dirichlet dofs are overwritten with their prescribed values).
pub fn newton(
    p: &Problem,
    mut state: State,
    factor: f64,
    cfg: &NewtonConfig,
    ul: Option<&UlContext>,
) -> Result<(State, StepReport), SolverError> {
    cfg.validate()?;
    let cons = constraints(p, factor, ul)?;
    let mut x = state.x.clone();
    for (&i, &v) in &cons {
        x[i] = v;
    }
    state.set(x);
    let loads = p.loads.scaled(factor);
    let mut sys = assemble_condensed(p.d, &state, p.law, &loads, &cons, ul)?;
    let r0 = sys.residual_norm;
    let mut rep = StepReport {
        factor,
        residuals: vec![r0],
        values: vec![sys.value],
        ..Default::default()
    };
    for it in 0..=cfg.max_iter {
        let r = sys.residual_norm;
        if !r.is_finite() {
            return Err(SolverError::Domain(0));
        }
        if r <= cfg.atol || r <= cfg.rtol * r0 {
            rep.iterations = it;
            return Ok((state, rep));
        }
        if it == cfg.max_iter {
            break;
        }
        let dc = sparse_solve(&sys)?;
        let dx = back_substitute(&sys, &state, &dc)?;
        let mut s = 1.0;
        let mut accepted = None;
        let mut fallback: Option<(State, CondensedSystem, usize)> = None;
        for h in 0..=cfg.max_halvings {
            let mut trial = state.clone();
            trial.update(s, &dx);
            match assemble_condensed(p.d, &trial, p.law, &loads, &cons, ul) {
                Ok(ts) if ts.residual_norm < r * cfg.growth_limit => {
                    accepted = Some((trial, ts, h));
                    break;
                }
                Ok(ts) => {
                    if ts.residual_norm.is_finite() && fallback.is_none() {
                        fallback = Some((trial, ts, h));
                    }
                }
                Err(e) if is_domain(&e) => {}
                Err(e) => return Err(e.into()),
            }
            s *= cfg.halving;
        }
        let (ns, nsys, h) = accepted
            .or(fallback)
            .ok_or(SolverError::Domain(cfg.max_halvings))?;
        if h > 0 {
            rep.damping.push((it, h));
        }
        state = ns;
        sys = nsys;
        rep.residuals.push(sys.residual_norm);
        rep.values.push(sys.value);
    }
    Err(SolverError::MaxIterations {
        iterations: cfg.max_iter,
        residual: sys.residual_norm,
    })
}

/// Drives Newton through a load ramp, calling `solve` for each target factor
/// with the previous factor; failed increments are bisected.
fn ramp<S: Clone>(
    cfg: &NewtonConfig,
    mut state: S,
    mut solve: impl FnMut(&S, f64, f64) -> Result<(S, StepReport), SolverError>,
) -> Result<(S, SolveReport), SolverError> {
    cfg.validate()?;
    let start = Instant::now();
    let n = cfg.load_steps;
    let mut pending: Vec<f64> = (1..=n).rev().map(|i| i as f64 / n as f64).collect();
    let min_step = 1.0 / n as f64 / 2f64.powi(cfg.max_bisections as i32);
    let mut report = SolveReport::default();
    let mut prev = 0.0;
    while let Some(&f) = pending.last() {
        match solve(&state, prev, f) {
            Ok((s, rep)) => {
                state = s;
                prev = f;
                pending.pop();
                report.steps.push(rep);
            }
            Err(e) if e.is_recoverable() => {
                report.failed_attempts += 1;
                let mid = 0.5 * (prev + f);
                if mid - prev < min_step * (1.0 - 1e-12) {
                    return Err(SolverError::BisectionExhausted(f));
                }
                pending.push(mid);
            }
            Err(e) => return Err(e),
        }
    }
    report.wall_time = start.elapsed();
    Ok((state, report))
}

/// Total Lagrangian load stepping: loads ramp linearly from 0 to 1 in
/// `cfg.load_steps` steps, each warm-started from the previous one.
pub fn run_load_steps(
    p: &Problem,
    state0: State,
    cfg: &NewtonConfig,
) -> Result<(State, SolveReport), SolverError> {
    ramp(cfg, state0, |s, _, f| newton(p, s.clone(), f, cfg, None))
}

/// Intermediate configuration of the Updated Lagrangian scheme: the
/// continuous displacement u₀ in vector Lagrange space of the method order.
#[derive(Clone, Debug)]
pub struct ULState {
    pub space: FeSpace,
    pub u0: Vec<f64>,
    /// Last converged end-facet chord (follower moment runs).
    pub chord: Option<Vector2<f64>>,
    /// Accumulated chord rotation (radians, unwrapped).
    pub rotation: f64,
}

impl ULState {
    pub fn new(d: &Discretization) -> Result<Self, SolverError> {
        let space = FeSpace::new(&d.mesh, SpaceFamily::LagrangeVec, d.method.order)
            .map_err(FormError::from)?;
        let n = space.dofs.n_dofs;
        Ok(Self {
            space,
            u0: vec![0.0; n],
            chord: None,
            rotation: 0.0,
        })
    }
}

/// Quadrature-point data of the intermediate configuration for the forms kernels.
pub fn ul_forms_context(ul: &ULState) -> UlContext<'_> {
    UlContext {
        space: &ul.space,
        u0: &ul.u0,
    }
}

/// Signed angle from `a` to `b` in (−π, π].
fn angle_between(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x * b.y - a.y * b.x).atan2(a.dot(b))
}

/// Adds the converged increment to u₀ and returns the new intermediate
/// configuration with a warm-start state for the next step.
///
/// The increment is reconstructed as a continuous nodal field: nodes on edges
/// take the single-valued facet trace (tangential part from u, normal part from
/// α), vertices average the traces of their edges, interior nodes take the
/// element value of u. Nodes on Dirichlet regions are set to the prescribed
/// data. Broken fields restart from F_sym = C = I with stresses expressed in
/// the new configuration.
pub fn ul_advance(
    ul: &ULState,
    p: &Problem,
    x: &State,
    factor: f64,
) -> Result<(ULState, State), SolverError> {
    let d = p.d;
    let mesh = &d.mesh;
    let ctx = ul_forms_context(ul);
    let ls = &ul.space;
    let k = ls.order;
    let mut u0 = ul.u0.clone();
    if d.method.kind == MethodKind::Std {
        for (a, b) in u0.iter_mut().zip(d.field_slice(Field::U, &x.x).unwrap()) {
            *a += b;
        }
    } else {
        let nv = mesh.num_vertices();
        let mut sum: BTreeMap<usize, (Vector2<f64>, usize)> = BTreeMap::new();
        for e in 0..mesh.num_edges() {
            let [a, b] = mesh.edges()[e];
            let mut nodes = vec![(a, 0.0), (b, 1.0)];
            nodes.extend((1..k).map(|j| (nv + e * (k - 1) + j - 1, j as f64 / k as f64)));
            for (node, s) in nodes {
                let tr = follower::trace(d, &x.x, Some(&ctx), e, s)?;
                let v = sum.entry(node).or_insert((Vector2::zeros(), 0));
                v.0 += tr.u;
                v.1 += 1;
            }
        }
        for (node, (v, c)) in sum {
            u0[2 * node] += v.x / c as f64;
            u0[2 * node + 1] += v.y / c as f64;
        }
        let us = d.space(Field::U).unwrap();
        let xu = d.field_slice(Field::U, &x.x).unwrap();
        for t in 0..mesh.num_triangles() {
            let dofs = ls.dofs.element_dofs(t);
            let xe = DVector::from_vec(us.gather(t, xu));
            for (n, l) in ls.lagrange_nodes().iter().enumerate().skip(3 * k) {
                let v = us.eval_vec(t, *l).map_err(FormError::from)?.val * &xe;
                let fr = ctx.frame(t, *l)?;
                let v = fr.a * Vector2::new(v[0], v[1]);
                u0[dofs[2 * n]] += v.x;
                u0[dofs[2 * n + 1]] += v.y;
            }
        }
    }
    for bc in p.bcs {
        let edges = mesh.region_edges(&bc.region).map_err(|e| FormError::Config(e.to_string()))?;
        let datum = |x: &crate::mesh2d::Point| factor * (bc.datum)(x);
        for (i, v) in ls.essential_values(mesh, &edges, &datum).map_err(FormError::from)? {
            u0[i] = v;
        }
    }
    let next = ULState {
        space: ul.space.clone(),
        u0,
        chord: ul.chord,
        rotation: ul.rotation,
    };
    let ctx = ul_forms_context(&next);
    for t in 0..mesh.num_triangles() {
        for l in &d.quad_vol.points {
            ctx.frame(t, *l)?;
        }
    }
    let mut xn = d.initial_state();
    let f0_at = |t: usize, x: &crate::mesh2d::Point| -> Option<(Matrix2<f64>, f64)> {
        let l = ls.geom(t).to_ref(x);
        let fr = ctx.frame(t, [l[0], l[1]]).ok()?;
        Some((fr.f0, fr.j0))
    };
    let law = p.law;
    if let Some(ps) = d.space(Field::Psym) {
        let v = ps
            .project_sym(mesh, &|t, x| {
                f0_at(t, x)
                    .and_then(|(f0, j0)| law.pk1(&f0).ok().map(|p| p * f0.transpose() / j0))
                    .unwrap_or_else(Matrix2::zeros)
            })
            .map_err(FormError::from)?;
        d.field_slice_mut(Field::Psym, &mut xn).unwrap().copy_from_slice(&v);
    }
    if let Some(ss) = d.space(Field::Sigma) {
        let v = ss
            .project_sym(mesh, &|t, x| {
                f0_at(t, x)
                    .and_then(|(f0, j0)| {
                        law.pk2(&(f0.transpose() * f0)).ok().map(|s| f0 * s * f0.transpose() / j0)
                    })
                    .unwrap_or_else(Matrix2::zeros)
            })
            .map_err(FormError::from)?;
        d.field_slice_mut(Field::Sigma, &mut xn).unwrap().copy_from_slice(&v);
    }
    Ok((next, State::new(xn)))
}

/// Updated Lagrangian load stepping: each converged step is absorbed into u₀
/// and the next step is posed on the new intermediate configuration. With a
/// follower end moment the chord rotation is accumulated across steps.
pub fn run_ul_load_steps(
    p: &Problem,
    cfg: &NewtonConfig,
) -> Result<(ULState, State, SolveReport), SolverError> {
    let d = p.d;
    let mut ul0 = ULState::new(d)?;
    if let Some(em) = &p.loads.end_moment {
        let x0 = d.initial_state();
        let (c, _) = follower::current_chord(d, &x0, &em.region, None)?;
        ul0.chord = Some(c);
    }
    let x0 = State::new(d.initial_state());
    let ((ul, x), report) = ramp(cfg, (ul0, x0), |(ul, x), _, f| {
        let ctx = ul_forms_context(ul);
        let (xs, rep) = newton(p, x.clone(), f, cfg, Some(&ctx))?;
        let (mut next, xn) = ul_advance(ul, p, &xs, f)?;
        if let Some(em) = &p.loads.end_moment {
            let (c, _) = follower::current_chord(d, &xs.x, &em.region, Some(&ctx))?;
            if let Some(prev) = ul.chord {
                next.rotation += angle_between(&prev, &c);
            }
            next.chord = Some(c);
        }
        Ok(((next, xn), rep))
    })?;
    Ok((ul, x, report))
}
