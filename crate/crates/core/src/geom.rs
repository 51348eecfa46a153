//! Small dense linear algebra used throughout the crate: 3-vectors,
//! symmetric 3x3 matrices (Euclidean Hessians), symmetric 2x2 matrices
//! (tangential curvature tensors), unit directions, and half-integers
//! for line-field rotation indices.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Plain 3-vector with `f64` components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self / self.norm()
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    /// Outer product `self * other^T`, returned as a full 3x3 matrix.
    pub fn outer(self, other: Vec3) -> Mat3 {
        Mat3::from_rows(self.x * other, self.y * other, self.z * other)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Full 3x3 matrix, row major. Used for Euclidean Hessians of the
/// one-homogeneous extensions, which are symmetric by construction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat3 {
    pub rows: [[f64; 3]; 3],
}

impl Mat3 {
    pub const ZERO: Mat3 = Mat3 { rows: [[0.0; 3]; 3] };

    pub fn identity() -> Mat3 {
        let mut m = Mat3::ZERO;
        m.rows[0][0] = 1.0;
        m.rows[1][1] = 1.0;
        m.rows[2][2] = 1.0;
        m
    }

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Mat3 {
        Mat3 {
            rows: [[r0.x, r0.y, r0.z], [r1.x, r1.y, r1.z], [r2.x, r2.y, r2.z]],
        }
    }

    pub fn diagonal(d: Vec3) -> Mat3 {
        let mut m = Mat3::ZERO;
        m.rows[0][0] = d.x;
        m.rows[1][1] = d.y;
        m.rows[2][2] = d.z;
        m
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.rows[0][0] * v.x + self.rows[0][1] * v.y + self.rows[0][2] * v.z,
            self.rows[1][0] * v.x + self.rows[1][1] * v.y + self.rows[1][2] * v.z,
            self.rows[2][0] * v.x + self.rows[2][1] * v.y + self.rows[2][2] * v.z,
        )
    }

    /// Bilinear form `a^T M b`.
    pub fn quad(&self, a: Vec3, b: Vec3) -> f64 {
        a.dot(self.apply(b))
    }

    pub fn transpose(&self) -> Mat3 {
        let r = &self.rows;
        Mat3 {
            rows: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }

    pub fn matmul(&self, o: &Mat3) -> Mat3 {
        let mut m = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += self.rows[i][k] * o.rows[k][j];
                }
                m.rows[i][j] = s;
            }
        }
        m
    }

    pub fn det(&self) -> f64 {
        let r = &self.rows;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        let mut m = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.rows[i][j] = self.rows[i][j] + o.rows[i][j];
            }
        }
        m
    }
}

impl Mul<f64> for Mat3 {
    type Output = Mat3;
    fn mul(self, s: f64) -> Mat3 {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.rows[i][j] *= s;
            }
        }
        m
    }
}

/// Symmetric 2x2 matrix stored as its three independent entries.
///
/// Symmetry is exact by construction: only `a11`, `a12`, `a22` exist.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymMat2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl SymMat2 {
    pub const ZERO: SymMat2 = SymMat2 { a11: 0.0, a12: 0.0, a22: 0.0 };

    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        SymMat2 { a11, a12, a22 }
    }

    pub fn identity() -> Self {
        SymMat2::new(1.0, 0.0, 1.0)
    }

    pub fn trace(self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn frobenius_norm(self) -> f64 {
        (self.a11 * self.a11 + 2.0 * self.a12 * self.a12 + self.a22 * self.a22).sqrt()
    }

    /// Eigenvalues sorted descending: `(lambda_plus, lambda_minus)`.
    pub fn eigenvalues(self) -> (f64, f64) {
        let mean = 0.5 * (self.a11 + self.a22);
        let half_diff = 0.5 * (self.a11 - self.a22);
        let r = (half_diff * half_diff + self.a12 * self.a12).sqrt();
        (mean + r, mean - r)
    }

    pub fn min_eigenvalue(self) -> f64 {
        self.eigenvalues().1
    }

    pub fn is_positive_definite(self) -> bool {
        self.a11 > 0.0 && self.det() > 0.0
    }

    /// Angle (mod pi) of the eigendirection belonging to the larger
    /// eigenvalue, in `[0, pi)`.
    pub fn major_eigenangle(self) -> f64 {
        let two_theta = f64::atan2(2.0 * self.a12, self.a11 - self.a22);
        let mut theta = 0.5 * two_theta;
        if theta < 0.0 {
            theta += std::f64::consts::PI;
        }
        if theta >= std::f64::consts::PI {
            theta -= std::f64::consts::PI;
        }
        theta
    }

    pub fn inverse(self) -> SymMat2 {
        let d = self.det();
        SymMat2::new(self.a22 / d, -self.a12 / d, self.a11 / d)
    }

    /// Trace of the (generally non-symmetric) product `self * other`.
    pub fn trace_product(self, other: SymMat2) -> f64 {
        self.a11 * other.a11 + 2.0 * self.a12 * other.a12 + self.a22 * other.a22
    }

    /// Congruence transform `U^T * self * U` for an upper-triangular
    /// `U = [[u11, u12], [0, u22]]`.
    pub fn congruence_upper(self, u11: f64, u12: f64, u22: f64) -> SymMat2 {
        // M U = [[a11*u11, a11*u12 + a12*u22], [a12*u11, a12*u12 + a22*u22]]
        let b11 = self.a11 * u11;
        let b12 = self.a11 * u12 + self.a12 * u22;
        let b21 = self.a12 * u11;
        let b22 = self.a12 * u12 + self.a22 * u22;
        SymMat2::new(u11 * b11, u11 * b12, u12 * b12 + u22 * b22).symmetrized_with(u12 * b11 + u22 * b21)
    }

    fn symmetrized_with(mut self, a21: f64) -> SymMat2 {
        // a12 and a21 agree analytically; average guards rounding.
        self.a12 = 0.5 * (self.a12 + a21);
        self
    }

    /// Rotate into the frame spanned by the orthonormal pair given as the
    /// angle of its first axis: returns components in that rotated frame.
    pub fn rotated(self, angle: f64) -> SymMat2 {
        let (s, c) = angle.sin_cos();
        // R^T M R with R = [[c, -s], [s, c]] (columns are the new axes).
        let a11 = c * c * self.a11 + 2.0 * s * c * self.a12 + s * s * self.a22;
        let a22 = s * s * self.a11 - 2.0 * s * c * self.a12 + c * c * self.a22;
        let a12 = (c * c - s * s) * self.a12 + s * c * (self.a22 - self.a11);
        SymMat2::new(a11, a12, a22)
    }
}

impl Add for SymMat2 {
    type Output = SymMat2;
    fn add(self, o: SymMat2) -> SymMat2 {
        SymMat2::new(self.a11 + o.a11, self.a12 + o.a12, self.a22 + o.a22)
    }
}

impl Sub for SymMat2 {
    type Output = SymMat2;
    fn sub(self, o: SymMat2) -> SymMat2 {
        SymMat2::new(self.a11 - o.a11, self.a12 - o.a12, self.a22 - o.a22)
    }
}

impl Mul<f64> for SymMat2 {
    type Output = SymMat2;
    fn mul(self, s: f64) -> SymMat2 {
        SymMat2::new(self.a11 * s, self.a12 * s, self.a22 * s)
    }
}

/// Unit vector on the sphere. Construction always renormalizes, keeping
/// `|v| = 1` within 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction3(Vec3);

impl Direction3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Direction3(Vec3::new(x, y, z).normalized())
    }

    pub fn from_vec(v: Vec3) -> Self {
        Direction3(v.normalized())
    }

    pub fn as_vec(self) -> Vec3 {
        self.0
    }

    pub fn x(self) -> f64 {
        self.0.x
    }

    pub fn y(self) -> f64 {
        self.0.y
    }

    pub fn z(self) -> f64 {
        self.0.z
    }

    pub fn dot(self, other: Direction3) -> f64 {
        self.0.dot(other.0)
    }

    /// Geodesic (great-circle) distance to another direction.
    pub fn geodesic_distance(self, other: Direction3) -> f64 {
        self.0.dot(other.0).clamp(-1.0, 1.0).acos()
    }

    /// A deterministic orthonormal tangent pair `(t1, t2)` with
    /// `t1 x t2 = self`.
    pub fn tangent_basis(self) -> (Vec3, Vec3) {
        let n = self.0;
        let helper = if n.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        let t1 = (helper - n * helper.dot(n)).normalized();
        let t2 = n.cross(t1);
        (t1, t2)
    }
}

/// Exact half-integer, stored as twice its value.
///
/// Rotation indices of line fields live in (1/2)Z; keeping them exact
/// avoids floating-point comparisons in Poincare-Hopf bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HalfInteger(i32);

impl HalfInteger {
    pub const ZERO: HalfInteger = HalfInteger(0);

    /// Build from twice the value (e.g. `-1` for `-1/2`).
    pub fn from_doubled(doubled: i32) -> Self {
        HalfInteger(doubled)
    }

    pub fn from_integer(n: i32) -> Self {
        HalfInteger(2 * n)
    }

    /// Nearest half-integer to `x`, together with the rounding distance.
    pub fn round_from(x: f64) -> (Self, f64) {
        let doubled = (2.0 * x).round();
        (HalfInteger(doubled as i32), (x - doubled / 2.0).abs())
    }

    pub fn doubled(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl Add for HalfInteger {
    type Output = HalfInteger;
    fn add(self, o: HalfInteger) -> HalfInteger {
        HalfInteger(self.0 + o.0)
    }
}

impl std::iter::Sum for HalfInteger {
    fn sum<I: Iterator<Item = HalfInteger>>(iter: I) -> HalfInteger {
        iter.fold(HalfInteger::ZERO, |a, b| a + b)
    }
}

impl std::fmt::Display for HalfInteger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_is_unit() {
        let d = Direction3::new(1.0, 2.0, -3.0);
        assert!((d.as_vec().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tangent_basis_right_handed() {
        for v in [
            Direction3::new(0.0, 0.0, 1.0),
            Direction3::new(1.0, -1.0, 0.5),
            Direction3::new(-0.3, 0.9, -0.1),
        ] {
            let (t1, t2) = v.tangent_basis();
            assert!((t1.norm() - 1.0).abs() < 1e-12);
            assert!((t2.norm() - 1.0).abs() < 1e-12);
            assert!(t1.dot(t2).abs() < 1e-12);
            assert!((t1.cross(t2) - v.as_vec()).norm() < 1e-12);
        }
    }

    #[test]
    fn symmat2_eigen_consistency() {
        let m = SymMat2::new(2.0, 0.7, -1.0);
        let (lp, lm) = m.eigenvalues();
        assert!((lp + lm - m.trace()).abs() < 1e-12);
        assert!((lp * lm - m.det()).abs() < 1e-12);
        // Verify the major eigenangle really is an eigendirection.
        let theta = m.major_eigenangle();
        let (s, c) = theta.sin_cos();
        let vx = m.a11 * c + m.a12 * s;
        let vy = m.a12 * c + m.a22 * s;
        assert!((vx - lp * c).abs() < 1e-12);
        assert!((vy - lp * s).abs() < 1e-12);
    }

    #[test]
    fn congruence_matches_dense() {
        let m = SymMat2::new(1.5, -0.4, 0.9);
        let (u11, u12, u22) = (1.2, 0.3, 0.8);
        let s = m.congruence_upper(u11, u12, u22);
        // Dense reference.
        let u = [[u11, u12], [0.0, u22]];
        let md = [[m.a11, m.a12], [m.a12, m.a22]];
        let mut mu = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    mu[i][j] += md[i][k] * u[k][j];
                }
            }
        }
        let mut utmu = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    utmu[i][j] += u[k][i] * mu[k][j];
                }
            }
        }
        assert!((s.a11 - utmu[0][0]).abs() < 1e-14);
        assert!((s.a12 - utmu[0][1]).abs() < 1e-14);
        assert!((s.a22 - utmu[1][1]).abs() < 1e-14);
    }

    #[test]
    fn half_integer_rounding() {
        let (h, d) = HalfInteger::round_from(-0.498);
        assert_eq!(h.doubled(), -1);
        assert!(d < 0.01);
        assert_eq!(h.to_string(), "-1/2");
        assert_eq!(HalfInteger::from_integer(2).to_string(), "2");
    }
}
