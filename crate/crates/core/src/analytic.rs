//! Closed-form fields on the sphere, represented through their
//! one-homogeneous extensions to R^3 \ {0}.
//!
//! A function f on S^2 extends to F(x) = |x| f(x/|x|). Working with F
//! instead of f pays off twice:
//!
//! * the gnomonic chart lift of f is the restriction of F to the chart's
//!   tangent plane, so lifted values and their planar derivatives come
//!   from F's Euclidean derivatives with no chain rule on the sphere;
//! * for a support function q, the surface position is X = grad F_q(nu),
//!   and the tangential tensor D^2 f + f I is the Euclidean Hessian of F
//!   restricted to the tangent plane.
//!
//! Everything here supplies `value`, `gradient` and `hessian` of F in
//! closed form.

use crate::geom::{Mat3, Vec3};
use std::sync::Arc;

/// A one-homogeneous function F on R^3 \ {0} with two derivatives.
pub trait HomogeneousFn: Send + Sync {
    fn value(&self, x: Vec3) -> f64;
    fn gradient(&self, x: Vec3) -> Vec3;
    fn hessian(&self, x: Vec3) -> Mat3;
}

/// Shared handle to an analytic closure.
pub type AnalyticFn = Arc<dyn HomogeneousFn>;

/// Value of f on the unit sphere (F restricted to |x| = 1).
pub fn sphere_value(f: &dyn HomogeneousFn, nu: Vec3) -> f64 {
    f.value(nu)
}

/// Tangential sphere gradient Df = grad F - f nu at a unit vector.
pub fn sphere_gradient(f: &dyn HomogeneousFn, nu: Vec3) -> Vec3 {
    let g = f.gradient(nu);
    g - nu * f.value(nu)
}

/// F(x) = c |x|.
#[derive(Debug, Clone)]
pub struct ConstantField(pub f64);

impl HomogeneousFn for ConstantField {
    fn value(&self, x: Vec3) -> f64 {
        self.0 * x.norm()
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        x * (self.0 / x.norm())
    }

    fn hessian(&self, x: Vec3) -> Mat3 {
        let r = x.norm();
        let xhat = x / r;
        (Mat3::identity() + xhat.outer(xhat) * -1.0) * (self.0 / r)
    }
}

/// F(x) = a . x — the support function of a point; its tangential
/// Hessian-plus-identity vanishes identically.
#[derive(Debug, Clone)]
pub struct LinearField(pub Vec3);

impl HomogeneousFn for LinearField {
    fn value(&self, x: Vec3) -> f64 {
        self.0.dot(x)
    }

    fn gradient(&self, _x: Vec3) -> Vec3 {
        self.0
    }

    fn hessian(&self, _x: Vec3) -> Mat3 {
        Mat3::ZERO
    }
}

/// F(x) = |A x| for a symmetric positive definite A; equivalently
/// sqrt(x^T M x) with M = A^2. This is both the ellipsoidal-norm
/// anisotropy density and the support function of the ellipsoid A(S^2).
#[derive(Debug, Clone)]
pub struct EllipsoidalNorm {
    /// M = A^T A, symmetric positive definite.
    m: Mat3,
}

impl EllipsoidalNorm {
    pub fn from_matrix(a: Mat3) -> Self {
        EllipsoidalNorm { m: a.transpose().matmul(&a) }
    }

    pub fn from_diagonal(d: Vec3) -> Self {
        EllipsoidalNorm { m: Mat3::diagonal(Vec3::new(d.x * d.x, d.y * d.y, d.z * d.z)) }
    }
}

impl HomogeneousFn for EllipsoidalNorm {
    fn value(&self, x: Vec3) -> f64 {
        self.m.quad(x, x).sqrt()
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        self.m.apply(x) / self.value(x)
    }

    fn hessian(&self, x: Vec3) -> Mat3 {
        let f = self.value(x);
        let mx = self.m.apply(x);
        self.m * (1.0 / f) + mx.outer(mx) * (-1.0 / (f * f * f))
    }
}

/// One term c * |x|^s * x1^a x2^b x3^c. With s = 1 - (a+b+c) the term is
/// one-homogeneous; sums of these express harmonic perturbations.
#[derive(Debug, Clone, Copy)]
pub struct RadialMonomial {
    pub coef: f64,
    pub exps: [u32; 3],
    pub norm_pow: f64,
}

impl RadialMonomial {
    pub fn homogeneous(coef: f64, exps: [u32; 3]) -> Self {
        let deg: u32 = exps.iter().sum();
        RadialMonomial { coef, exps, norm_pow: 1.0 - deg as f64 }
    }

    fn mono_value(&self, x: Vec3) -> f64 {
        x.x.powi(self.exps[0] as i32) * x.y.powi(self.exps[1] as i32) * x.z.powi(self.exps[2] as i32)
    }

    fn mono_gradient(&self, x: Vec3) -> Vec3 {
        let mut g = Vec3::ZERO;
        let comps = [x.x, x.y, x.z];
        for i in 0..3 {
            let e = self.exps[i];
            if e == 0 {
                continue;
            }
            let mut v = e as f64;
            for (j, &c) in comps.iter().enumerate() {
                let mut p = self.exps[j];
                if j == i {
                    p -= 1;
                }
                v *= c.powi(p as i32);
            }
            match i {
                0 => g.x = v,
                1 => g.y = v,
                _ => g.z = v,
            }
        }
        g
    }

    fn mono_hessian(&self, x: Vec3) -> Mat3 {
        let comps = [x.x, x.y, x.z];
        let mut h = Mat3::ZERO;
        for i in 0..3 {
            for j in i..3 {
                let mut e = self.exps;
                let mut factor = 1.0;
                // d/dx_i
                if e[i] == 0 {
                    continue;
                }
                factor *= e[i] as f64;
                e[i] -= 1;
                // d/dx_j
                if e[j] == 0 {
                    continue;
                }
                factor *= e[j] as f64;
                e[j] -= 1;
                let mut v = factor;
                for (k, &c) in comps.iter().enumerate() {
                    v *= c.powi(e[k] as i32);
                }
                h.rows[i][j] = v;
                h.rows[j][i] = v;
            }
        }
        h
    }
}

impl HomogeneousFn for RadialMonomial {
    fn value(&self, x: Vec3) -> f64 {
        self.coef * x.norm().powf(self.norm_pow) * self.mono_value(x)
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let r = x.norm();
        let p = self.norm_pow;
        let g_r = x * (p * r.powf(p - 2.0)); // grad |x|^p
        let pv = self.mono_value(x);
        let pg = self.mono_gradient(x);
        (g_r * pv + pg * r.powf(p)) * self.coef
    }

    fn hessian(&self, x: Vec3) -> Mat3 {
        let r = x.norm();
        let p = self.norm_pow;
        let rp = r.powf(p);
        let rp2 = p * r.powf(p - 2.0);
        let rp4 = p * (p - 2.0) * r.powf(p - 4.0);
        let pv = self.mono_value(x);
        let pg = self.mono_gradient(x);
        let ph = self.mono_hessian(x);
        let g_r = x * rp2;
        // H(|x|^p) = p|x|^(p-2) I + p(p-2)|x|^(p-4) x x^T
        let h_r = Mat3::identity() * rp2 + x.outer(x) * rp4;
        (h_r * pv + g_r.outer(pg) + pg.outer(g_r) + ph * rp) * self.coef
    }
}

/// Sum of one-homogeneous terms; still one-homogeneous.
pub struct SumField {
    terms: Vec<(f64, AnalyticFn)>,
}

impl SumField {
    pub fn new(terms: Vec<(f64, AnalyticFn)>) -> Self {
        SumField { terms }
    }

    /// a * f + b * g.
    pub fn linear_combination(a: f64, f: AnalyticFn, b: f64, g: AnalyticFn) -> Self {
        SumField { terms: vec![(a, f), (b, g)] }
    }
}

impl HomogeneousFn for SumField {
    fn value(&self, x: Vec3) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.value(x)).sum()
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let mut g = Vec3::ZERO;
        for (c, f) in &self.terms {
            g += f.gradient(x) * *c;
        }
        g
    }

    fn hessian(&self, x: Vec3) -> Mat3 {
        let mut h = Mat3::ZERO;
        for (c, f) in &self.terms {
            h = h + f.hessian(x) * *c;
        }
        h
    }
}

/// F(x) = (sum_i |x_i|^p + eps |x|^p)^(1/p): a smoothed p-norm whose unit
/// sphere is a rounded cube for larger p. Requires p >= 2.
#[derive(Debug, Clone)]
pub struct SmoothedPNorm {
    pub p: f64,
    pub eps: f64,
}

impl SmoothedPNorm {
    fn inner(&self, x: Vec3) -> f64 {
        let p = self.p;
        x.x.abs().powf(p) + x.y.abs().powf(p) + x.z.abs().powf(p) + self.eps * x.norm().powf(p)
    }

    fn inner_gradient(&self, x: Vec3) -> Vec3 {
        let p = self.p;
        let signed_pow = |v: f64| v.signum() * v.abs().powf(p - 1.0);
        let mut g = Vec3::new(signed_pow(x.x), signed_pow(x.y), signed_pow(x.z)) * p;
        g += x * (self.eps * p * x.norm().powf(p - 2.0));
        g
    }

    fn inner_hessian(&self, x: Vec3) -> Mat3 {
        let p = self.p;
        let diag = Vec3::new(
            x.x.abs().powf(p - 2.0),
            x.y.abs().powf(p - 2.0),
            x.z.abs().powf(p - 2.0),
        ) * (p * (p - 1.0));
        let r = x.norm();
        Mat3::diagonal(diag)
            + Mat3::identity() * (self.eps * p * r.powf(p - 2.0))
            + x.outer(x) * (self.eps * p * (p - 2.0) * r.powf(p - 4.0))
    }
}

impl HomogeneousFn for SmoothedPNorm {
    fn value(&self, x: Vec3) -> f64 {
        self.inner(x).powf(1.0 / self.p)
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let g = self.inner(x);
        let inv_p = 1.0 / self.p;
        self.inner_gradient(x) * (inv_p * g.powf(inv_p - 1.0))
    }

    fn hessian(&self, x: Vec3) -> Mat3 {
        let g = self.inner(x);
        let inv_p = 1.0 / self.p;
        let dg = self.inner_gradient(x);
        dg.outer(dg) * (inv_p * (inv_p - 1.0) * g.powf(inv_p - 2.0))
            + self.inner_hessian(x) * (inv_p * g.powf(inv_p - 1.0))
    }
}

/// Real solid harmonics up to degree 3. The degree-l harmonic polynomial
/// H_{l,m} is returned as monomials; the one-homogeneous sphere term is
/// |x|^(1-l) H_{l,m}(x).
///
/// Conventions (unnormalized, Legendre-style so that (2,0) restricted to
/// the sphere is (3 z^2 - 1)/2):
///
/// (0,0) 1;        (1,-1) y, (1,0) z, (1,1) x
/// (2,-2) xy, (2,-1) yz, (2,0) (2z^2-x^2-y^2)/2, (2,1) xz, (2,2) (x^2-y^2)/2
/// (3,0) z(2z^2-3x^2-3y^2)/2, (3,±1..±3) standard tesseral polynomials
pub fn solid_harmonic_terms(l: u32, m: i32) -> Option<Vec<RadialMonomial>> {
    let t = |c: f64, e: [u32; 3]| RadialMonomial::homogeneous(c, e);
    let terms = match (l, m) {
        (0, 0) => vec![t(1.0, [0, 0, 0])],
        (1, -1) => vec![t(1.0, [0, 1, 0])],
        (1, 0) => vec![t(1.0, [0, 0, 1])],
        (1, 1) => vec![t(1.0, [1, 0, 0])],
        (2, -2) => vec![t(1.0, [1, 1, 0])],
        (2, -1) => vec![t(1.0, [0, 1, 1])],
        (2, 0) => vec![t(1.0, [0, 0, 2]), t(-0.5, [2, 0, 0]), t(-0.5, [0, 2, 0])],
        (2, 1) => vec![t(1.0, [1, 0, 1])],
        (2, 2) => vec![t(0.5, [2, 0, 0]), t(-0.5, [0, 2, 0])],
        (3, -3) => vec![t(3.0, [2, 1, 0]), t(-1.0, [0, 3, 0])],
        (3, -2) => vec![t(1.0, [1, 1, 1])],
        (3, -1) => vec![t(4.0, [0, 1, 2]), t(-1.0, [2, 1, 0]), t(-1.0, [0, 3, 0])],
        (3, 0) => vec![t(1.0, [0, 0, 3]), t(-1.5, [2, 0, 1]), t(-1.5, [0, 2, 1])],
        (3, 1) => vec![t(4.0, [1, 0, 2]), t(-1.0, [3, 0, 0]), t(-1.0, [1, 2, 0])],
        (3, 2) => vec![t(1.0, [2, 0, 1]), t(-1.0, [0, 2, 1])],
        (3, 3) => vec![t(1.0, [3, 0, 0]), t(-3.0, [1, 2, 0])],
        _ => return None,
    };
    Some(terms)
}

/// base + sum of c_k * harmonic_(l_k, m_k), as a single closure.
pub struct HarmonicPerturbation {
    base: f64,
    terms: Vec<RadialMonomial>,
}

impl HarmonicPerturbation {
    pub fn new(base: f64, coeffs: &[(u32, i32, f64)]) -> Option<Self> {
        let mut terms = Vec::new();
        for &(l, m, c) in coeffs {
            let mut ts = solid_harmonic_terms(l, m)?;
            for t in &mut ts {
                t.coef *= c;
            }
            terms.extend(ts);
        }
        Some(HarmonicPerturbation { base, terms })
    }
}

impl HomogeneousFn for HarmonicPerturbation {
    fn value(&self, x: Vec3) -> f64 {
        self.base * x.norm() + self.terms.iter().map(|t| t.value(x)).sum::<f64>()
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let mut g = x * (self.base / x.norm());
        for t in &self.terms {
            g += t.gradient(x);
        }
        g
    }

    fn hessian(&self, x: Vec3) -> Mat3 {
        let r = x.norm();
        let xhat = x / r;
        let mut h = (Mat3::identity() + xhat.outer(xhat) * -1.0) * (self.base / r);
        for t in &self.terms {
            h = h + t.hessian(x);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(f: &dyn HomogeneousFn, x: Vec3) -> Vec3 {
        let h = 1e-5;
        let mut g = Vec3::ZERO;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            match i {
                0 => {
                    xp.x += h;
                    xm.x -= h;
                }
                1 => {
                    xp.y += h;
                    xm.y -= h;
                }
                _ => {
                    xp.z += h;
                    xm.z -= h;
                }
            }
            let d = (f.value(xp) - f.value(xm)) / (2.0 * h);
            match i {
                0 => g.x = d,
                1 => g.y = d,
                _ => g.z = d,
            }
        }
        g
    }

    fn fd_hessian(f: &dyn HomogeneousFn, x: Vec3) -> Mat3 {
        let h = 1e-5;
        let mut m = Mat3::ZERO;
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            match j {
                0 => {
                    xp.x += h;
                    xm.x -= h;
                }
                1 => {
                    xp.y += h;
                    xm.y -= h;
                }
                _ => {
                    xp.z += h;
                    xm.z -= h;
                }
            }
            let gp = f.gradient(xp);
            let gm = f.gradient(xm);
            let col = (gp - gm) / (2.0 * h);
            m.rows[0][j] = col.x;
            m.rows[1][j] = col.y;
            m.rows[2][j] = col.z;
        }
        m
    }

    fn check_field(f: &dyn HomogeneousFn) {
        let points = [
            Vec3::new(0.3, -0.4, 0.86),
            Vec3::new(-0.7, 0.2, 0.4),
            Vec3::new(0.1, 0.9, -0.5),
        ];
        for x in points {
            // Homogeneity of degree 1 and Euler identities.
            let v = f.value(x);
            assert!((f.value(x * 2.0) - 2.0 * v).abs() < 1e-10 * (1.0 + v.abs()));
            let g = f.gradient(x);
            assert!((g.dot(x) - v).abs() < 1e-10 * (1.0 + v.abs()));
            let hx = f.hessian(x).apply(x);
            assert!(hx.norm() < 1e-9, "hessian must annihilate the radial direction");
            // Finite-difference agreement.
            assert!((g - fd_gradient(f, x)).norm() < 1e-7);
            let hfd = fd_hessian(f, x);
            let h = f.hessian(x);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((h.rows[i][j] - hfd.rows[i][j]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn constant_field_derivatives() {
        check_field(&ConstantField(1.3));
    }

    #[test]
    fn linear_field_derivatives() {
        check_field(&LinearField(Vec3::new(0.3, -0.1, 0.2)));
    }

    #[test]
    fn ellipsoidal_norm_derivatives() {
        check_field(&EllipsoidalNorm::from_diagonal(Vec3::new(1.0, 1.0, 2.0)));
        check_field(&EllipsoidalNorm::from_diagonal(Vec3::new(1.3, 1.0, 0.7)));
    }

    #[test]
    fn smoothed_p_norm_derivatives() {
        check_field(&SmoothedPNorm { p: 4.0, eps: 1e-2 });
        check_field(&SmoothedPNorm { p: 6.0, eps: 1e-2 });
    }

    #[test]
    fn harmonic_perturbation_derivatives() {
        let f = HarmonicPerturbation::new(1.0, &[(2, 0, 0.1), (3, 2, 0.05), (2, -2, 0.07)]).unwrap();
        check_field(&f);
    }

    #[test]
    fn solid_harmonics_are_harmonic() {
        // The trace of the Euclidean Hessian of the degree-l polynomial
        // (without the |x|^(1-l) factor) must vanish.
        for l in 0..=3u32 {
            for m in -(l as i32)..=(l as i32) {
                let terms = solid_harmonic_terms(l, m).unwrap();
                let x = Vec3::new(0.23, -0.61, 0.47);
                let mut lap = 0.0;
                for t in &terms {
                    let bare = RadialMonomial { coef: 1.0, exps: t.exps, norm_pow: 0.0 };
                    let h = bare.mono_hessian(x);
                    lap += t.coef * (h.rows[0][0] + h.rows[1][1] + h.rows[2][2]);
                }
                assert!(lap.abs() < 1e-12, "harmonic ({l},{m}) has nonzero Laplacian {lap}");
            }
        }
    }

    mod properties {
        use super::super::*;
        use proptest::prelude::*;

        fn point() -> impl Strategy<Value = Vec3> {
            (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
                .prop_filter_map("away from origin", |(x, y, z)| {
                    let v = Vec3::new(x, y, z);
                    (v.norm() > 0.2).then_some(v)
                })
        }

        fn fields() -> Vec<AnalyticFn> {
            vec![
                std::sync::Arc::new(ConstantField(1.2)),
                std::sync::Arc::new(EllipsoidalNorm::from_diagonal(Vec3::new(1.1, 0.8, 1.5))),
                std::sync::Arc::new(SmoothedPNorm { p: 4.0, eps: 1e-2 }),
                std::sync::Arc::new(
                    HarmonicPerturbation::new(1.0, &[(2, 1, 0.1), (3, -2, 0.05)]).unwrap(),
                ),
            ]
        }

        proptest! {
            #[test]
            fn one_homogeneity_and_euler(x in point(), t in 0.1..3.0f64) {
                for f in fields() {
                    let v = f.value(x);
                    // F(t x) = t F(x) and grad F(t x) = grad F(x).
                    prop_assert!((f.value(x * t) - t * v).abs() < 1e-10 * (1.0 + v.abs()));
                    prop_assert!((f.gradient(x * t) - f.gradient(x)).norm() < 1e-9);
                    // Euler: grad F . x = F, and the Hessian kills x.
                    prop_assert!((f.gradient(x).dot(x) - v).abs() < 1e-10 * (1.0 + v.abs()));
                    prop_assert!(f.hessian(x).apply(x).norm() < 1e-8);
                }
            }

            #[test]
            fn hessian_is_minus_one_homogeneous(x in point(), t in 0.5..2.0f64) {
                for f in fields() {
                    let h1 = f.hessian(x * t);
                    let h0 = f.hessian(x);
                    for i in 0..3 {
                        for j in 0..3 {
                            prop_assert!((t * h1.rows[i][j] - h0.rows[i][j]).abs() < 1e-8);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn p2_restriction_matches_legendre() {
        // (2,0) on the sphere equals (3 z^2 - 1)/2.
        let terms = solid_harmonic_terms(2, 0).unwrap();
        let f = HarmonicPerturbation { base: 0.0, terms };
        let nu = Vec3::new(0.48, -0.6, 0.64).normalized();
        let expect = 0.5 * (3.0 * nu.z * nu.z - 1.0);
        assert!((f.value(nu) - expect).abs() < 1e-14);
    }
}
