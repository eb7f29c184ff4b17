//! Gauss rules on the unit interval and collapsed Gauss rules on the
//! reference triangle (0,0), (1,0), (0,1).

#[derive(Clone, Debug)]
pub enum QuadDomain {
    Triangle,
    Edge,
}

/// Points are (ξ, η) on the reference triangle, or (s, 0) on [0, 1].
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// n-point Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, t);
        dp = if d != 0.0 { d } else { dp };
        x[i] = 0.5 * (1.0 - t);
        w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Shifted Legendre polynomials P_0..P_k on [0, 1], with ∫ P_j² = 1/(2j+1).
pub fn shifted_legendre(k: usize, s: f64) -> Vec<f64> {
    let t = 2.0 * s - 1.0;
    let mut out = Vec::with_capacity(k + 1);
    out.push(1.0);
    if k >= 1 {
        out.push(t);
    }
    for j in 2..=k {
        let p = ((2 * j - 1) as f64 * t * out[j - 1] - (j - 1) as f64 * out[j - 2]) / j as f64;
        out.push(p);
    }
    out
}

/// Rule exact for polynomials of total degree `degree` on the given domain.
pub fn quad_rule(domain: QuadDomain, degree: usize) -> QuadRule {
    match domain {
        QuadDomain::Edge => {
            let n = degree / 2 + 1;
            let (x, w) = gauss_legendre(n);
            QuadRule {
                points: x.iter().map(|&s| [s, 0.0]).collect(),
                weights: w,
                degree,
            }
        }
        QuadDomain::Triangle => {
            // Duffy map ξ = u, η = v(1-u) with Jacobian (1-u).
            let n = (degree + 2).div_ceil(2);
            let (x, w) = gauss_legendre(n);
            let mut points = Vec::with_capacity(n * n);
            let mut weights = Vec::with_capacity(n * n);
            for (u, wu) in x.iter().zip(&w) {
                for (v, wv) in x.iter().zip(&w) {
                    points.push([*u, v * (1.0 - u)]);
                    weights.push(wu * wv * (1.0 - u));
                }
            }
            QuadRule {
                points,
                weights,
                degree,
            }
        }
    }
}
