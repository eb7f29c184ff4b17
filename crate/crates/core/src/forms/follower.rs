//! Follower end moment: a traction linear through the thickness acting along
//! the normal of the current end-facet chord.

use nalgebra::{Matrix2, Vector2};

use super::{Discretization, Field, FormError, Frame, UlContext};
use crate::fespace::{gauss_legendre, shifted_legendre};
use crate::mesh2d::{Mesh2D, Point};

/// Couple of magnitude `moment` on the boundary region `region` of a beam of
/// thickness `thickness`: g(ξ) = −(12 M / t³) ξ n̄, where n̄ is the unit normal
/// of the current chord and ξ the reference coordinate across the section.
/// Positive moments rotate the section counter-clockwise.
#[derive(Clone, Debug)]
pub struct EndMoment {
    pub region: String,
    pub moment: f64,
    pub thickness: f64,
}

#[derive(Clone, Debug)]
pub struct FollowerContribution {
    pub work: f64,
    /// (flat dof, residual entry) with residual = −∂W/∂x at frozen direction.
    pub residual: Vec<(usize, f64)>,
    /// (row, col, value) of the load-stiffness.
    pub tangent: Vec<(usize, usize, f64)>,
    pub chord: Vector2<f64>,
    pub chord_ref: Vector2<f64>,
}

/// Displacement trace at an edge point expressed in coupling dofs: tangential
/// part from u, normal part from α, both in the intermediate configuration.
pub struct Trace {
    pub x_ref: Point,
    /// Increment ũ (the full displacement without a UL context).
    pub u: Vector2<f64>,
    /// Current position X + u₀ + ũ.
    pub pos: Point,
    pub dofs: Vec<(usize, Vector2<f64>)>,
}

/// Single-valued facet trace at parameter `s` (global edge direction) of edge `e`.
pub fn trace(
    d: &Discretization,
    x: &[f64],
    ul: Option<&UlContext>,
    e: usize,
    s: f64,
) -> Result<Trace, FormError> {
    let mesh = &d.mesh;
    let k = d.method.order;
    let (t, i) = mesh.edge_triangles(e)[0];
    let sign = mesh.tri_edge_signs(t)[i];
    let iu = d.field_index(Field::U).unwrap();
    let ia = d.field_index(Field::Alpha).ok_or_else(|| {
        FormError::Config("end moment requires a hybridized method".into())
    })?;
    let g = d.fields[iu].1.geom(t);
    let l = g.edge_point(i, sign, s);
    let fr0 = match ul {
        Some(c) => c.frame(t, l)?,
        None => Frame::identity(),
    };
    let fr = mesh.facet_frame(e);
    let (t0, scale, n0) = if fr0.identity {
        (fr.tangent, 1.0, fr.normal)
    } else {
        let ft = fr0.f0 * fr.tangent;
        let len = ft.norm();
        (ft / len, 1.0 / len, fr0.normal(&fr.normal).0)
    };
    let leg = shifted_legendre(k, s);
    let mut dofs = Vec::with_capacity(2 * (k + 1));
    for j in 0..=k {
        dofs.push((d.offsets[iu] + e * (k + 1) + j, t0 * leg[j] * scale));
    }
    for j in 0..=k {
        dofs.push((d.offsets[ia] + e * (k + 1) + j, n0 * leg[j]));
    }
    let u: Vector2<f64> = dofs.iter().map(|(i, c)| c * x[*i]).sum();
    let x_ref = g.map(l);
    Ok(Trace {
        x_ref,
        u,
        pos: x_ref + fr0.u0 + u,
        dofs,
    })
}

/// End points (edge, parameter) of a straight boundary region ordered so the
/// chord normal (d_y, −d_x) points outward.
pub fn chord_endpoints(mesh: &Mesh2D, region: &str) -> Result<[(usize, f64); 2], FormError> {
    let edges = mesh
        .region_edges(region)
        .map_err(|e| FormError::Config(e.to_string()))?;
    let mut count = std::collections::BTreeMap::new();
    for &e in &edges {
        for v in mesh.edges()[e] {
            *count.entry(v).or_insert(0) += 1;
        }
    }
    let ends: Vec<usize> = count.iter().filter(|(_, &c)| c == 1).map(|(&v, _)| v).collect();
    if ends.len() != 2 {
        return Err(FormError::Config(format!("region {region} is not a simple segment")));
    }
    let locate = |v: usize| -> (usize, f64) {
        for &e in &edges {
            let [p, q] = mesh.edges()[e];
            if p == v {
                return (e, 0.0);
            }
            if q == v {
                return (e, 1.0);
            }
        }
        unreachable!()
    };
    let e0 = edges[0];
    let (t, i) = mesh.edge_triangles(e0)[0];
    let n_out = mesh.tri_edge_signs(t)[i] * mesh.facet_frame(e0).normal;
    let (a, b) = (mesh.vertices()[ends[0]], mesh.vertices()[ends[1]]);
    let dv = b - a;
    if Vector2::new(dv.y, -dv.x).dot(&n_out) > 0.0 {
        Ok([locate(ends[0]), locate(ends[1])])
    } else {
        Ok([locate(ends[1]), locate(ends[0])])
    }
}

/// Current and reference chord of the end region.
pub fn current_chord(
    d: &Discretization,
    x: &[f64],
    region: &str,
    ul: Option<&UlContext>,
) -> Result<(Vector2<f64>, Vector2<f64>), FormError> {
    let [(ea, sa), (eb, sb)] = chord_endpoints(&d.mesh, region)?;
    let a = trace(d, x, ul, ea, sa)?;
    let b = trace(d, x, ul, eb, sb)?;
    Ok((b.pos - a.pos, b.x_ref - a.x_ref))
}

pub fn end_moment_contribution(
    d: &Discretization,
    x: &[f64],
    em: &EndMoment,
    factor: f64,
    ul: Option<&UlContext>,
) -> Result<FollowerContribution, FormError> {
    let mesh = &d.mesh;
    let [(ea, sa), (eb, sb)] = chord_endpoints(mesh, &em.region)?;
    let a = trace(d, x, ul, ea, sa)?;
    let b = trace(d, x, ul, eb, sb)?;
    let c = b.pos - a.pos;
    let dref = b.x_ref - a.x_ref;
    let mid = 0.5 * (a.x_ref + b.x_ref);
    let dhat = dref / dref.norm();
    let cl = c.norm();
    if !(cl > 0.0) {
        return Err(FormError::Config("degenerate end chord".into()));
    }
    let ch = c / cl;
    let nb = Vector2::new(ch.y, -ch.x);
    let rot = Matrix2::new(0.0, 1.0, -1.0, 0.0);
    let dn = rot * (Matrix2::identity() - ch * ch.transpose()) / cl;
    let mut dc: Vec<(usize, Vector2<f64>)> = b.dofs.clone();
    dc.extend(a.dofs.iter().map(|(i, v)| (*i, -v)));
    let dn_dc: Vec<(usize, Vector2<f64>)> = dc.iter().map(|(i, v)| (*i, dn * v)).collect();
    let t3 = em.thickness.powi(3);
    let mut out = FollowerContribution {
        work: 0.0,
        residual: Vec::new(),
        tangent: Vec::new(),
        chord: c,
        chord_ref: dref,
    };
    let (qs, qw) = gauss_legendre(d.method.order + 4);
    for e in mesh.region_edges(&em.region).map_err(|e| FormError::Config(e.to_string()))? {
        let len = mesh.edge_length(e);
        for (s, w) in qs.iter().zip(&qw) {
            let tp = trace(d, x, ul, e, *s)?;
            let xi = (tp.x_ref - mid).dot(&dhat);
            let sigma = -12.0 * em.moment * factor * xi / t3;
            let g = sigma * nb;
            let wl = w * len;
            let u: Vector2<f64> = tp.dofs.iter().map(|(i, c)| c * x[*i]).sum();
            out.work += wl * g.dot(&u);
            for (i, ci) in &tp.dofs {
                out.residual.push((*i, -wl * g.dot(ci)));
                for (j, dj) in &dn_dc {
                    out.tangent.push((*i, *j, -wl * sigma * ci.dot(dj)));
                }
            }
        }
    }
    Ok(out)
}
