//! Hyperelastic laws in deformation-gradient and Cauchy-Green form with
//! closed-form first and second derivatives.
//!
//! F-tangents use the component ordering (11, 22, 12, 21). C-tangents use
//! Voigt ordering (11, 22, 12) with engineering doubling of the shear strain:
//! dΣ = T · (dC11, dC22, 2 dC12).

use nalgebra::{Matrix2, Matrix3, Matrix4};

pub type Mat2 = Matrix2<f64>;
pub type Tangent4 = Matrix4<f64>;
pub type TangentSym = Matrix3<f64>;

/// Index pairs of the (11, 22, 12, 21) ordering.
pub const F_ORDER: [(usize, usize); 4] = [(0, 0), (1, 1), (0, 1), (1, 0)];
/// Index pairs of the Voigt ordering.
pub const V_ORDER: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MaterialError {
    #[error("non-positive determinant {0}")]
    NonPositiveJacobian(f64),
    #[error("Cauchy-Green tensor not positive definite")]
    NotPositiveDefinite,
    #[error("degenerate moduli mu={0}, lambda={1}")]
    DegenerateModuli(f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LameParams {
    pub mu: f64,
    pub lambda: f64,
}

impl LameParams {
    pub fn new(mu: f64, lambda: f64) -> Result<Self, MaterialError> {
        if !(mu > 0.0 && lambda >= 0.0) {
            return Err(MaterialError::DegenerateModuli(mu, lambda));
        }
        Ok(Self { mu, lambda })
    }

    /// Lamé parameters from Young's modulus and Poisson's ratio.
    pub fn from_young_poisson(e: f64, nu: f64) -> Result<Self, MaterialError> {
        Self::new(e / (2.0 * (1.0 + nu)), e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Ψ₁ = a/2 (tr C − 2) − μ ln J + λ/2 (J − 1)².
    NeoHookeDet,
    /// Ψ₂ = a/2 (tr C − 2) − μ ln J + λ/2 (ln J)².
    NeoHookeLog,
    /// Ψ = μ E:E + λ/2 (tr E)², quadratic in the Green strain.
    StVenantKirchhoff,
}

/// Leading coefficient `a` of the trace term: `MuHalf` uses a = μ, `PaperHalf` a = 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convention {
    PaperHalf,
    MuHalf,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperelasticLaw {
    pub variant: Variant,
    pub params: LameParams,
    pub convention: Convention,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicState {
    pub f: Mat2,
    pub c: Mat2,
    pub e: Mat2,
    pub j: f64,
}

pub fn kinematics(grad_u: &Mat2) -> KinematicState {
    let f = Mat2::identity() + grad_u;
    let c = f.transpose() * f;
    KinematicState {
        f,
        c,
        e: 0.5 * (c - Mat2::identity()),
        j: f.determinant(),
    }
}

fn inv_t(f: &Mat2) -> Result<(Mat2, f64), MaterialError> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(MaterialError::NonPositiveJacobian(j));
    }
    let inv = Mat2::new(f[(1, 1)], -f[(0, 1)], -f[(1, 0)], f[(0, 0)]) / j;
    Ok((inv.transpose(), j))
}

fn check_spd(c: &Mat2) -> Result<(Mat2, f64), MaterialError> {
    let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
    if !(c[(0, 0)] > 0.0 && det > 0.0) {
        return Err(MaterialError::NotPositiveDefinite);
    }
    let inv = Mat2::new(c[(1, 1)], -c[(0, 1)], -c[(1, 0)], c[(0, 0)]) / det;
    Ok((inv, det))
}

impl HyperelasticLaw {
    pub fn new(variant: Variant, params: LameParams) -> Self {
        Self {
            variant,
            params,
            convention: Convention::MuHalf,
        }
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    fn a(&self) -> f64 {
        match self.convention {
            Convention::MuHalf => self.params.mu,
            Convention::PaperHalf => 1.0,
        }
    }

    /// Volumetric part W(J) and the coefficients β = J W'(J), γ = J β'(J).
    fn volumetric(&self, j: f64) -> (f64, f64, f64) {
        let LameParams { mu, lambda } = self.params;
        match self.variant {
            Variant::NeoHookeDet => (
                -mu * j.ln() + 0.5 * lambda * (j - 1.0).powi(2),
                -mu + lambda * (j - 1.0) * j,
                lambda * (2.0 * j - 1.0) * j,
            ),
            Variant::NeoHookeLog => {
                let lj = j.ln();
                (-mu * lj + 0.5 * lambda * lj * lj, -mu + lambda * lj, lambda)
            }
            Variant::StVenantKirchhoff => unreachable!(),
        }
    }

    /// Ψ(F).
    pub fn energy_f(&self, f: &Mat2) -> Result<f64, MaterialError> {
        if self.variant == Variant::StVenantKirchhoff {
            return self.energy_c(&(f.transpose() * f));
        }
        let (_, j) = inv_t(f)?;
        let (w, _, _) = self.volumetric(j);
        Ok(0.5 * self.a() * (f.norm_squared() - 2.0) + w)
    }

    /// Ψ as a function of C.
    pub fn energy_c(&self, c: &Mat2) -> Result<f64, MaterialError> {
        if self.variant == Variant::StVenantKirchhoff {
            let LameParams { mu, lambda } = self.params;
            let e = 0.5 * (c - Mat2::identity());
            return Ok(mu * e.norm_squared() + 0.5 * lambda * e.trace().powi(2));
        }
        let (_, det) = check_spd(c)?;
        let (w, _, _) = self.volumetric(det.sqrt());
        Ok(0.5 * self.a() * (c.trace() - 2.0) + w)
    }

    /// First Piola-Kirchhoff stress P = ∂Ψ/∂F.
    pub fn pk1(&self, f: &Mat2) -> Result<Mat2, MaterialError> {
        if self.variant == Variant::StVenantKirchhoff {
            return Ok(f * self.pk2(&(f.transpose() * f))?);
        }
        let (a_inv, j) = inv_t(f)?;
        let (_, beta, _) = self.volumetric(j);
        Ok(self.a() * f + beta * a_inv)
    }

    /// ∂P/∂F in the (11, 22, 12, 21) ordering.
    pub fn pk1_tangent(&self, f: &Mat2) -> Result<Tangent4, MaterialError> {
        let mut t = Tangent4::zeros();
        if self.variant == Variant::StVenantKirchhoff {
            let LameParams { mu, lambda } = self.params;
            let s = self.pk2(&(f.transpose() * f))?;
            for (r, &(i, jj)) in F_ORDER.iter().enumerate() {
                for (c, &(m, n)) in F_ORDER.iter().enumerate() {
                    let d = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
                    let ftf = (0..2).map(|k| f[(i, k)] * f[(m, k)]).sum::<f64>();
                    t[(r, c)] = d(i, m) * s[(n, jj)]
                        + mu * (f[(i, n)] * f[(m, jj)] + ftf * d(jj, n))
                        + lambda * f[(m, n)] * f[(i, jj)];
                }
            }
            return Ok(t);
        }
        let (ai, j) = inv_t(f)?;
        let (_, beta, gamma) = self.volumetric(j);
        let a = self.a();
        for (r, &(i, jj)) in F_ORDER.iter().enumerate() {
            for (c, &(m, n)) in F_ORDER.iter().enumerate() {
                let id = if i == m && jj == n { a } else { 0.0 };
                t[(r, c)] = id + gamma * ai[(i, jj)] * ai[(m, n)] - beta * ai[(i, n)] * ai[(m, jj)];
            }
        }
        Ok(t)
    }

    /// Second Piola-Kirchhoff stress Σ = 2 ∂Ψ/∂C.
    pub fn pk2(&self, c: &Mat2) -> Result<Mat2, MaterialError> {
        if self.variant == Variant::StVenantKirchhoff {
            let LameParams { mu, lambda } = self.params;
            let e = 0.5 * (c - Mat2::identity());
            return Ok(2.0 * mu * e + lambda * e.trace() * Mat2::identity());
        }
        let (ci, det) = check_spd(c)?;
        let (_, beta, _) = self.volumetric(det.sqrt());
        Ok(self.a() * Mat2::identity() + beta * ci)
    }

    /// dΣ/dC in Voigt form (see module docs).
    pub fn pk2_tangent(&self, c: &Mat2) -> Result<TangentSym, MaterialError> {
        let (ci, beta, gamma) = if self.variant == Variant::StVenantKirchhoff {
            let LameParams { mu, lambda } = self.params;
            // dΣ = μ dC + λ/2 tr(dC) I, expressed with the same template below.
            let mut t = TangentSym::zeros();
            for (r, &(i, j)) in V_ORDER.iter().enumerate() {
                for (s, &(k, l)) in V_ORDER.iter().enumerate() {
                    let d = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
                    t[(r, s)] = 0.5 * lambda * d(i, j) * d(k, l)
                        + 0.5 * mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k));
                }
            }
            return Ok(t);
        } else {
            let (ci, det) = check_spd(c)?;
            let (_, beta, gamma) = self.volumetric(det.sqrt());
            (ci, beta, gamma)
        };
        let mut t = TangentSym::zeros();
        for (r, &(i, j)) in V_ORDER.iter().enumerate() {
            for (s, &(k, l)) in V_ORDER.iter().enumerate() {
                t[(r, s)] = 0.5 * gamma * ci[(i, j)] * ci[(k, l)]
                    - 0.5 * beta * (ci[(i, k)] * ci[(l, j)] + ci[(i, l)] * ci[(k, j)]);
            }
        }
        Ok(t)
    }

    /// Ψ(C) with its gradient and Hessian with respect to the independent
    /// symmetric components (c11, c22, c12), where c12 fills both off-diagonals.
    pub fn energy_c_sym(
        &self,
        c: &Mat2,
    ) -> Result<(f64, [f64; 3], TangentSym), MaterialError> {
        let psi = self.energy_c(c)?;
        let s = self.pk2(c)?;
        let t = self.pk2_tangent(c)?;
        let g = [0.5 * s[(0, 0)], 0.5 * s[(1, 1)], s[(0, 1)]];
        let left = Matrix3::from_diagonal(&nalgebra::Vector3::new(0.5, 0.5, 1.0));
        let right = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, 2.0));
        Ok((psi, g, left * t * right))
    }

    /// Skew part of P(F_sym + W).
    pub fn recover_pskw(&self, f_sym: &Mat2, w: &Mat2) -> Result<Mat2, MaterialError> {
        let p = self.pk1(&(f_sym + w))?;
        Ok(0.5 * (p - p.transpose()))
    }
}

/// σ = J⁻¹ P Fᵀ.
pub fn cauchy_stress(p: &Mat2, f: &Mat2) -> Result<Mat2, MaterialError> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(MaterialError::NonPositiveJacobian(j));
    }
    Ok(p * f.transpose() / j)
}

/// σ = 2μ ε + λ tr(ε) I.
pub fn linear_stress(p: &LameParams, eps: &Mat2) -> Mat2 {
    2.0 * p.mu * eps + p.lambda * eps.trace() * Mat2::identity()
}

/// Inverse of `linear_stress` in two dimensions.
pub fn linear_compliance(p: &LameParams, sigma: &Mat2) -> Result<Mat2, MaterialError> {
    if !(p.mu > 0.0 && 2.0 * p.lambda + 2.0 * p.mu > 0.0) {
        return Err(MaterialError::DegenerateModuli(p.mu, p.lambda));
    }
    let c = p.lambda / (2.0 * p.mu + 2.0 * p.lambda);
    Ok((sigma - c * sigma.trace() * Mat2::identity()) / (2.0 * p.mu))
}

/// Compliance as a 3×3 matrix acting on (s11, s22, s12) and yielding
/// (e11, e22, e12); D⁻¹σ:σ = sᵀ A s with the factor 2 on the shear product.
pub fn compliance_matrix(p: &LameParams) -> TangentSym {
    let c = p.lambda / (2.0 * p.mu + 2.0 * p.lambda);
    let m = 1.0 / (2.0 * p.mu);
    Matrix3::new(m * (1.0 - c), -m * c, 0.0, -m * c, m * (1.0 - c), 0.0, 0.0, 0.0, m)
}

/// Skew matrix ½ [[0, −v], [v, 0]].
pub fn skw(v: f64) -> Mat2 {
    Mat2::new(0.0, -0.5 * v, 0.5 * v, 0.0)
}

/// Plane von Mises equivalent of a symmetric 2×2 stress.
pub fn von_mises(s: &Mat2) -> f64 {
    let (a, b, c) = (s[(0, 0)], s[(1, 1)], 0.5 * (s[(0, 1)] + s[(1, 0)]));
    (a * a - a * b + b * b + 3.0 * c * c).sqrt()
}
