//! Static condensation of local dofs and global assembly of the coupling system.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::{
    element_system, follower, Discretization, FormError, Loads, UlContext, Want,
};
use crate::material::HyperelasticLaw;

/// Per-element data needed to recover local increments.
#[derive(Clone, Debug)]
struct Recovery {
    dofs: Vec<usize>,
    coupling: Vec<usize>,
    local: Vec<usize>,
    kll: Option<LU<f64, Dyn, Dyn>>,
    klc: DMatrix<f64>,
    rl: DVector<f64>,
}

/// Schur-complement system on the free coupling dofs.
#[derive(Clone, Debug)]
pub struct CondensedSystem {
    /// Number of free coupling dofs.
    pub n: usize,
    /// Flat dof → free coupling index (`usize::MAX` if local or constrained).
    pub free_index: Vec<usize>,
    /// Matrix entries (row, col, value); duplicates are summed.
    pub entries: Vec<(usize, usize, f64)>,
    /// Right-hand side −r̃ of the Newton system.
    pub rhs: DVector<f64>,
    /// False when a follower load adds a non-symmetric contribution.
    pub symmetric: bool,
    /// Euclidean norm of the full residual over all unconstrained dofs.
    pub residual_norm: f64,
    /// Sum of element Lagrangian values.
    pub value: f64,
    pub generation: u64,
    /// Current end-facet chord when a follower moment is present.
    pub chord: Option<nalgebra::Vector2<f64>>,
    recovery: Vec<Recovery>,
}

/// Coefficient vector of all fields with a generation counter that changes on
/// every update.
#[derive(Clone, Debug)]
pub struct State {
    pub x: Vec<f64>,
    pub generation: u64,
}

impl State {
    pub fn new(x: Vec<f64>) -> Self {
        Self { x, generation: 0 }
    }
    /// x ← x + s·dx.
    pub fn update(&mut self, s: f64, dx: &[f64]) {
        for (a, b) in self.x.iter_mut().zip(dx) {
            *a += s * b;
        }
        self.generation += 1;
    }
    pub fn set(&mut self, x: Vec<f64>) {
        self.x = x;
        self.generation += 1;
    }
}

/// Flat dof → free coupling index; constrained and local dofs map to `usize::MAX`.
pub fn free_coupling_index(
    d: &Discretization,
    constrained: &BTreeMap<usize, f64>,
) -> (Vec<usize>, usize) {
    let mut idx = vec![usize::MAX; d.n_total];
    let mut n = 0;
    for (i, slot) in idx.iter_mut().enumerate() {
        if d.is_coupling_flat(i) && !constrained.contains_key(&i) {
            *slot = n;
            n += 1;
        }
    }
    (idx, n)
}

fn lu_ok(lu: &LU<f64, Dyn, Dyn>) -> bool {
    let u = lu.u();
    let n = u.nrows();
    if n == 0 {
        return true;
    }
    let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].abs()).collect();
    let mx = diag.iter().cloned().fold(0.0, f64::max);
    mx > 0.0 && diag.iter().all(|&v| v > 1e-13 * mx && v.is_finite())
}

/// Assembles the condensed Newton system at state `x`.
pub fn assemble_condensed(
    d: &Discretization,
    state: &State,
    law: &HyperelasticLaw,
    loads: &Loads,
    constrained: &BTreeMap<usize, f64>,
    ul: Option<&UlContext>,
) -> Result<CondensedSystem, FormError> {
    let (free_index, n) = free_coupling_index(d, constrained);
    let mut rc = DVector::<f64>::zeros(n);
    let mut entries = Vec::new();
    let mut recovery = Vec::with_capacity(d.mesh.num_triangles());
    let mut local_sq = 0.0;
    let mut value = 0.0;
    let mut rfull = DVector::<f64>::zeros(n);
    for t in 0..d.mesh.num_triangles() {
        let es = element_system(d, t, &state.x, law, loads, ul, Want::Tangent)?;
        value += es.value;
        let k = es.tangent.as_ref().unwrap();
        let (c, l) = (&es.coupling, &es.local);
        let kcc = k.select_rows(c).select_columns(c);
        let r_c = es.residual.select_rows(c);
        let (s, rt, rec) = if l.is_empty() {
            (
                kcc,
                r_c,
                Recovery {
                    dofs: es.dofs.clone(),
                    coupling: c.clone(),
                    local: vec![],
                    kll: None,
                    klc: DMatrix::zeros(0, c.len()),
                    rl: DVector::zeros(0),
                },
            )
        } else {
            let kll = k.select_rows(l).select_columns(l);
            let klc = k.select_rows(l).select_columns(c);
            let kcl = k.select_rows(c).select_columns(l);
            let rl = es.residual.select_rows(l);
            let lu = kll.lu();
            if !lu_ok(&lu) {
                return Err(FormError::SingularLocal(t));
            }
            let x = lu.solve(&klc).ok_or(FormError::SingularLocal(t))?;
            let y = lu.solve(&rl).ok_or(FormError::SingularLocal(t))?;
            local_sq += rl.norm_squared();
            (
                kcc - &kcl * x,
                r_c - &kcl * y,
                Recovery {
                    dofs: es.dofs.clone(),
                    coupling: c.clone(),
                    local: l.clone(),
                    kll: Some(lu),
                    klc,
                    rl,
                },
            )
        };
        let gi: Vec<usize> = c.iter().map(|&p| free_index[es.dofs[p]]).collect();
        for (a, &ga) in gi.iter().enumerate() {
            if ga == usize::MAX {
                continue;
            }
            rc[ga] += rt[a];
            rfull[ga] += es.residual[c[a]];
            for (b, &gb) in gi.iter().enumerate() {
                if gb != usize::MAX && s[(a, b)] != 0.0 {
                    entries.push((ga, gb, s[(a, b)]));
                }
            }
        }
        recovery.push(rec);
    }
    let mut symmetric = true;
    let mut chord = None;
    if let Some(em) = &loads.end_moment {
        let fc = follower::end_moment_contribution(d, &state.x, em, loads.factor, ul)?;
        symmetric = false;
        chord = Some(fc.chord);
        for (i, v) in fc.residual {
            let g = free_index[i];
            if g != usize::MAX {
                rc[g] += v;
                rfull[g] += v;
            }
        }
        for (i, j, v) in fc.tangent {
            let (gi, gj) = (free_index[i], free_index[j]);
            if gi != usize::MAX && gj != usize::MAX {
                entries.push((gi, gj, v));
            }
        }
    }
    let residual_norm = (rfull.norm_squared() + local_sq).sqrt();
    Ok(CondensedSystem {
        n,
        free_index,
        entries,
        rhs: -rc,
        symmetric,
        residual_norm,
        value,
        generation: state.generation,
        chord,
        recovery,
    })
}

/// Squared norms of the free coupling residual and of the local residual.
pub fn residual_vector_parts(
    d: &Discretization,
    x: &[f64],
    law: &HyperelasticLaw,
    loads: &Loads,
    free_index: &[usize],
    n: usize,
    ul: Option<&UlContext>,
) -> Result<(f64, f64), FormError> {
    let mut rc = DVector::<f64>::zeros(n);
    let mut local = 0.0;
    for t in 0..d.mesh.num_triangles() {
        let es = element_system(d, t, x, law, loads, ul, Want::Residual)?;
        for &p in &es.coupling {
            let g = free_index[es.dofs[p]];
            if g != usize::MAX {
                rc[g] += es.residual[p];
            }
        }
        for &p in &es.local {
            local += es.residual[p].powi(2);
        }
    }
    if let Some(em) = &loads.end_moment {
        let fc = follower::end_moment_contribution(d, x, em, loads.factor, ul)?;
        for (i, v) in fc.residual {
            let g = free_index[i];
            if g != usize::MAX {
                rc[g] += v;
            }
        }
    }
    Ok((rc.norm_squared(), local))
}

/// Full residual norm over all unconstrained dofs.
pub fn residual_norm(
    d: &Discretization,
    x: &[f64],
    law: &HyperelasticLaw,
    loads: &Loads,
    constrained: &BTreeMap<usize, f64>,
    ul: Option<&UlContext>,
) -> Result<f64, FormError> {
    let (idx, n) = free_coupling_index(d, constrained);
    let (a, b) = residual_vector_parts(d, x, law, loads, &idx, n, ul)?;
    Ok((a + b).sqrt())
}

/// Flat increment from a coupling update: free coupling dofs take `dc`,
/// constrained dofs stay fixed, local dofs solve their eliminated rows.
pub fn back_substitute(
    sys: &CondensedSystem,
    state: &State,
    dc: &DVector<f64>,
) -> Result<Vec<f64>, FormError> {
    if sys.generation != state.generation {
        return Err(FormError::Stale {
            expected: sys.generation,
            found: state.generation,
        });
    }
    let mut dx = vec![0.0; state.x.len()];
    for (flat, &g) in sys.free_index.iter().enumerate() {
        if g != usize::MAX {
            dx[flat] = dc[g];
        }
    }
    for rec in &sys.recovery {
        if rec.local.is_empty() {
            continue;
        }
        let dce = DVector::from_iterator(
            rec.coupling.len(),
            rec.coupling.iter().map(|&p| dx[rec.dofs[p]]),
        );
        let rhs = -(&rec.rl + &rec.klc * dce);
        let dl = rec.kll.as_ref().unwrap().solve(&rhs).ok_or(FormError::SingularLocal(0))?;
        for (a, &p) in rec.local.iter().enumerate() {
            dx[rec.dofs[p]] = dl[a];
        }
    }
    Ok(dx)
}

impl CondensedSystem {
    /// Dense copy of the condensed matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }
}

/// Dense monolithic Newton system over all unconstrained dofs (coupling and
/// local), returned with the list of flat dofs indexing its rows.
pub fn assemble_monolithic(
    d: &Discretization,
    x: &[f64],
    law: &HyperelasticLaw,
    loads: &Loads,
    constrained: &BTreeMap<usize, f64>,
    ul: Option<&UlContext>,
) -> Result<(DMatrix<f64>, DVector<f64>, Vec<usize>), FormError> {
    let free: Vec<usize> = (0..d.n_total).filter(|i| !constrained.contains_key(i)).collect();
    let mut pos = vec![usize::MAX; d.n_total];
    for (a, &f) in free.iter().enumerate() {
        pos[f] = a;
    }
    let n = free.len();
    let mut k = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for t in 0..d.mesh.num_triangles() {
        let es = element_system(d, t, x, law, loads, ul, Want::Tangent)?;
        let ke = es.tangent.unwrap();
        for (a, &fa) in es.dofs.iter().enumerate() {
            let pa = pos[fa];
            if pa == usize::MAX {
                continue;
            }
            r[pa] += es.residual[a];
            for (b, &fb) in es.dofs.iter().enumerate() {
                let pb = pos[fb];
                if pb != usize::MAX {
                    k[(pa, pb)] += ke[(a, b)];
                }
            }
        }
    }
    if let Some(em) = &loads.end_moment {
        let fc = follower::end_moment_contribution(d, x, em, loads.factor, ul)?;
        for (i, v) in fc.residual {
            if pos[i] != usize::MAX {
                r[pos[i]] += v;
            }
        }
        for (i, j, v) in fc.tangent {
            if pos[i] != usize::MAX && pos[j] != usize::MAX {
                k[(pos[i], pos[j])] += v;
            }
        }
    }
    Ok((k, r, free))
}
