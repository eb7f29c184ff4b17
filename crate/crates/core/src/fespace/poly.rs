//! Barycentric monomials on a physical triangle.

use nalgebra::{Matrix2, Vector2};

use crate::mesh2d::{Mesh2D, Point};

/// Exponents (p, q) of λ1^p λ2^q with p + q ≤ k, ordered by total degree.
pub fn exponents(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for d in 0..=k {
        for q in 0..=d {
            out.push((d - q, q));
        }
    }
    out
}

pub fn dim_p(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Values and derivatives with respect to (λ1, λ2).
#[derive(Clone, Debug, Default)]
pub struct MonoEval {
    pub v: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d11: Vec<f64>,
    pub d12: Vec<f64>,
    pub d22: Vec<f64>,
}

fn pw(x: f64, n: usize) -> f64 {
    x.powi(n as i32)
}

pub fn eval_monomials(k: usize, l1: f64, l2: f64, second: bool) -> MonoEval {
    let ex = exponents(k);
    let n = ex.len();
    let mut m = MonoEval {
        v: Vec::with_capacity(n),
        d1: Vec::with_capacity(n),
        d2: Vec::with_capacity(n),
        ..Default::default()
    };
    for &(p, q) in &ex {
        let (a, b) = (pw(l1, p), pw(l2, q));
        let da = if p > 0 { p as f64 * pw(l1, p - 1) } else { 0.0 };
        let db = if q > 0 { q as f64 * pw(l2, q - 1) } else { 0.0 };
        m.v.push(a * b);
        m.d1.push(da * b);
        m.d2.push(a * db);
        if second {
            let dda = if p > 1 { (p * (p - 1)) as f64 * pw(l1, p - 2) } else { 0.0 };
            let ddb = if q > 1 { (q * (q - 1)) as f64 * pw(l2, q - 2) } else { 0.0 };
            m.d11.push(dda * b);
            m.d12.push(da * db);
            m.d22.push(a * ddb);
        }
    }
    m
}

/// Affine geometry of one triangle; reference coordinates are (λ1, λ2).
#[derive(Clone, Debug)]
pub struct ElementGeom {
    pub x: [Point; 3],
    /// ∇λ1, ∇λ2 (constant on the element).
    pub grad_l: [Vector2<f64>; 2],
    pub area: f64,
    pub diameter: f64,
}

impl ElementGeom {
    pub fn new(mesh: &Mesh2D, t: usize) -> Self {
        let x = mesh.tri_points(t);
        let jac = Matrix2::from_columns(&[x[1] - x[0], x[2] - x[0]]);
        let jinv = jac.try_inverse().expect("non-degenerate triangle");
        let grad_l = [jinv.row(0).transpose(), jinv.row(1).transpose()];
        Self {
            x,
            grad_l,
            area: mesh.area(t),
            diameter: mesh.diameter(t),
        }
    }

    pub fn map(&self, l: [f64; 2]) -> Point {
        self.x[0] + l[0] * (self.x[1] - self.x[0]) + l[1] * (self.x[2] - self.x[0])
    }

    pub fn to_ref(&self, x: &Point) -> [f64; 2] {
        let d = x - self.x[0];
        [self.grad_l[0].dot(&d), self.grad_l[1].dot(&d)]
    }

    /// Physical gradient of a function from its (λ1, λ2) derivatives.
    pub fn grad(&self, d1: f64, d2: f64) -> Vector2<f64> {
        d1 * self.grad_l[0] + d2 * self.grad_l[1]
    }

    /// Physical Hessian from second (λ1, λ2) derivatives.
    pub fn hess(&self, d11: f64, d12: f64, d22: f64) -> Matrix2<f64> {
        let (g1, g2) = (self.grad_l[0], self.grad_l[1]);
        d11 * g1 * g1.transpose()
            + d12 * (g1 * g2.transpose() + g2 * g1.transpose())
            + d22 * g2 * g2.transpose()
    }

    /// Reference coordinates of the point at parameter `s` along local edge `i`,
    /// measured in the global direction of that edge.
    pub fn edge_point(&self, i: usize, sign: f64, s: f64) -> [f64; 2] {
        let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let (p, q) = if sign > 0.0 {
            (corners[i], corners[(i + 1) % 3])
        } else {
            (corners[(i + 1) % 3], corners[i])
        };
        [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_derivatives_fd() {
        let k = 3;
        let (l1, l2, h) = (0.3, 0.2, 1e-6);
        let m = eval_monomials(k, l1, l2, true);
        let p = eval_monomials(k, l1 + h, l2, true);
        let q = eval_monomials(k, l1, l2 + h, true);
        for i in 0..m.v.len() {
            assert!(((p.v[i] - m.v[i]) / h - m.d1[i]).abs() < 1e-5);
            assert!(((q.v[i] - m.v[i]) / h - m.d2[i]).abs() < 1e-5);
            assert!(((p.d1[i] - m.d1[i]) / h - m.d11[i]).abs() < 1e-5);
            assert!(((q.d1[i] - m.d1[i]) / h - m.d12[i]).abs() < 1e-5);
            assert!(((q.d2[i] - m.d2[i]) / h - m.d22[i]).abs() < 1e-5);
        }
        assert_eq!(m.v.len(), dim_p(k));
    }
}
