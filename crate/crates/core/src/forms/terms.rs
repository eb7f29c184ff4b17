//! Quadrature-point integrands as functions of a small quantity vector z.
//!
//! Every matrix or scalar quantity entering an integrand is affine in z; the
//! accumulator collects value, gradient and Hessian with respect to z.

use crate::material::{HyperelasticLaw, Mat2, MaterialError, F_ORDER};

/// Maximum length of the quantity vector.
pub const NZ: usize = 18;

/// Scalar affine in z.
#[derive(Clone, Copy, Debug)]
pub struct LinS {
    pub c: f64,
    pub d: [f64; NZ],
}

impl LinS {
    pub fn constant(c: f64) -> Self {
        Self { c, d: [0.0; NZ] }
    }
    pub fn var(z: &[f64], i: usize) -> Self {
        let mut d = [0.0; NZ];
        d[i] = 1.0;
        Self { c: z[i], d }
    }
    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        out.c *= s;
        for x in out.d.iter_mut() {
            *x *= s;
        }
        out
    }
    pub fn axpy(&mut self, s: f64, o: &LinS) {
        self.c += s * o.c;
        for (x, y) in self.d.iter_mut().zip(&o.d) {
            *x += s * y;
        }
    }
}

/// 2×2 matrix affine in z, entries in row-major order (11, 12, 21, 22).
#[derive(Clone, Copy, Debug)]
pub struct Lin2 {
    pub e: [LinS; 4],
}

#[inline]
fn rm(i: usize, j: usize) -> usize {
    2 * i + j
}

impl Lin2 {
    pub fn constant(m: &Mat2) -> Self {
        let mut e = [LinS::constant(0.0); 4];
        for i in 0..2 {
            for j in 0..2 {
                e[rm(i, j)] = LinS::constant(m[(i, j)]);
            }
        }
        Self { e }
    }
    /// General matrix from z[i0..i0+4] in the (11, 22, 12, 21) ordering.
    pub fn general(z: &[f64], i0: usize) -> Self {
        let mut e = [LinS::constant(0.0); 4];
        for (r, &(i, j)) in F_ORDER.iter().enumerate() {
            e[rm(i, j)] = LinS::var(z, i0 + r);
        }
        Self { e }
    }
    /// Symmetric matrix from z[i0..i0+3] = (s11, s22, s12).
    pub fn sym(z: &[f64], i0: usize) -> Self {
        let s12 = LinS::var(z, i0 + 2);
        Self {
            e: [LinS::var(z, i0), s12, s12, LinS::var(z, i0 + 1)],
        }
    }
    pub fn get(&self, i: usize, j: usize) -> &LinS {
        &self.e[rm(i, j)]
    }
    pub fn value(&self) -> Mat2 {
        Mat2::new(self.e[0].c, self.e[1].c, self.e[2].c, self.e[3].c)
    }
    pub fn add(&self, o: &Lin2, s: f64) -> Lin2 {
        let mut out = *self;
        for k in 0..4 {
            out.e[k].axpy(s, &o.e[k]);
        }
        out
    }
    pub fn add_const(&self, m: &Mat2) -> Lin2 {
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.e[rm(i, j)].c += m[(i, j)];
            }
        }
        out
    }
    pub fn transpose(&self) -> Lin2 {
        Lin2 {
            e: [self.e[0], self.e[2], self.e[1], self.e[3]],
        }
    }
    /// ½ (A − Aᵀ).
    pub fn skew(&self) -> Lin2 {
        self.add(&self.transpose(), -1.0).scale(0.5)
    }
    pub fn scale(&self, s: f64) -> Lin2 {
        Lin2 {
            e: self.e.map(|x| x.scale(s)),
        }
    }
    /// A · M for a constant M.
    pub fn mul_right(&self, m: &Mat2) -> Lin2 {
        let mut e = [LinS::constant(0.0); 4];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    e[rm(i, j)].axpy(m[(k, j)], &self.e[rm(i, k)]);
                }
            }
        }
        Lin2 { e }
    }
    /// M · A for a constant M.
    pub fn mul_left(&self, m: &Mat2) -> Lin2 {
        let mut e = [LinS::constant(0.0); 4];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    e[rm(i, j)].axpy(m[(i, k)], &self.e[rm(k, j)]);
                }
            }
        }
        Lin2 { e }
    }
}

/// Value, gradient and Hessian accumulator over the first `nz` components.
#[derive(Clone, Debug)]
pub struct Acc {
    pub nz: usize,
    pub v: f64,
    pub g: [f64; NZ],
    pub h: [[f64; NZ]; NZ],
}

impl Acc {
    pub fn new(nz: usize) -> Self {
        assert!(nz <= NZ);
        Self {
            nz,
            v: 0.0,
            g: [0.0; NZ],
            h: [[0.0; NZ]; NZ],
        }
    }

    pub fn reset(&mut self) {
        self.v = 0.0;
        self.g = [0.0; NZ];
        self.h = [[0.0; NZ]; NZ];
    }

    fn outer(&mut self, w: f64, a: &[f64; NZ], b: &[f64; NZ]) {
        let n = self.nz;
        for i in 0..n {
            if a[i] == 0.0 {
                continue;
            }
            let wa = w * a[i];
            for j in 0..n {
                self.h[i][j] += wa * b[j];
            }
        }
    }

    fn sym_outer(&mut self, w: f64, a: &[f64; NZ], b: &[f64; NZ]) {
        self.outer(w, a, b);
        self.outer(w, b, a);
    }

    fn grad(&mut self, w: f64, a: &[f64; NZ]) {
        for i in 0..self.nz {
            self.g[i] += w * a[i];
        }
    }

    /// w · a.
    pub fn add_lin(&mut self, w: f64, a: &LinS) {
        self.v += w * a.c;
        self.grad(w, &a.d);
    }

    /// w · a · b.
    pub fn add_prod(&mut self, w: f64, a: &LinS, b: &LinS) {
        self.v += w * a.c * b.c;
        self.grad(w * b.c, &a.d);
        self.grad(w * a.c, &b.d);
        self.sym_outer(w, &a.d, &b.d);
    }

    /// w · a².
    pub fn add_sq(&mut self, w: f64, a: &LinS) {
        self.add_prod(w, a, a);
    }

    /// w · a · b · c.
    pub fn add_triple(&mut self, w: f64, a: &LinS, b: &LinS, c: &LinS) {
        self.v += w * a.c * b.c * c.c;
        self.grad(w * b.c * c.c, &a.d);
        self.grad(w * a.c * c.c, &b.d);
        self.grad(w * a.c * b.c, &c.d);
        self.sym_outer(w * c.c, &a.d, &b.d);
        self.sym_outer(w * b.c, &a.d, &c.d);
        self.sym_outer(w * a.c, &b.d, &c.d);
    }

    /// w · A:B.
    pub fn add_frob(&mut self, w: f64, a: &Lin2, b: &Lin2) {
        for k in 0..4 {
            self.add_prod(w, &a.e[k], &b.e[k]);
        }
    }

    /// w · Ψ(A).
    pub fn add_psi_f(&mut self, w: f64, law: &HyperelasticLaw, a: &Lin2) -> Result<(), MaterialError> {
        let f = a.value();
        let psi = law.energy_f(&f)?;
        let p = law.pk1(&f)?;
        let t = law.pk1_tangent(&f)?;
        self.v += w * psi;
        for (r, &(i, j)) in F_ORDER.iter().enumerate() {
            let dr = &a.get(i, j).d;
            self.grad(w * p[(i, j)], dr);
            for (c, &(m, n)) in F_ORDER.iter().enumerate() {
                let tc = t[(r, c)];
                if tc != 0.0 {
                    let dc = a.get(m, n).d;
                    self.outer(w * tc, dr, &dc);
                }
            }
        }
        Ok(())
    }

    /// w · Ψ(C) for a symmetric C.
    pub fn add_psi_c(&mut self, w: f64, law: &HyperelasticLaw, c: &Lin2) -> Result<(), MaterialError> {
        let cv = c.value();
        let (psi, g, h) = law.energy_c_sym(&cv)?;
        let comps = [c.get(0, 0).d, c.get(1, 1).d, c.get(0, 1).d];
        self.v += w * psi;
        for a in 0..3 {
            self.grad(w * g[a], &comps[a]);
            for b in 0..3 {
                self.outer(w * h[(a, b)], &comps[a], &comps[b]);
            }
        }
        Ok(())
    }

    /// w · ½ tr(FᵀF S).
    pub fn add_half_ftf_s(&mut self, w: f64, f: &Lin2, s: &Lin2) {
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    self.add_triple(0.5 * w, f.get(k, i), f.get(k, j), s.get(i, j));
                }
            }
        }
    }

    /// w · a · (nᵀ F S n).
    pub fn add_a_nfsn(&mut self, w: f64, a: &LinS, f: &Lin2, s: &Lin2, n: &[f64; 2]) {
        for i in 0..2 {
            for k in 0..2 {
                for j in 0..2 {
                    let c = n[i] * n[j];
                    if c != 0.0 {
                        self.add_triple(w * c, a, f.get(i, k), s.get(k, j));
                    }
                }
            }
        }
    }

    /// w · |C − FᵀF|².
    pub fn add_dist2(&mut self, w: f64, c: &Lin2, f: &Lin2) {
        for i in 0..2 {
            for j in 0..2 {
                let cij = c.get(i, j);
                let mut r = cij.c;
                let mut dr = cij.d;
                for k in 0..2 {
                    let (fa, fb) = (f.get(k, i), f.get(k, j));
                    r -= fa.c * fb.c;
                    for z in 0..self.nz {
                        dr[z] -= fa.c * fb.d[z] + fb.c * fa.d[z];
                    }
                }
                self.v += w * r * r;
                self.grad(2.0 * w * r, &dr);
                self.outer(2.0 * w, &dr, &dr);
                for k in 0..2 {
                    let (fa, fb) = (f.get(k, i), f.get(k, j));
                    self.sym_outer(-2.0 * w * r, &fa.d, &fb.d);
                }
            }
        }
    }
}
