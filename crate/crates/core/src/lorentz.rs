//! Representations used by the construction: SU(2) Wigner matrices, the
//! M = 0 principal series of SL(2,C) restricted to its `(l n | . | 0 0)`
//! column, and the one-dimensional characters of the 1+1 Lorentz group.
//!
//! Conventions: a rotation by angle `theta` about the unit axis `n` is
//! `u = exp(-i theta n.sigma / 2)`, Wigner matrices are `exp(-i theta n.J)`
//! in the basis `m = j, j-1, ..., -j` (so `R^{1/2}(u) = u`), spherical
//! harmonics are orthonormal with the Condon-Shortley phase.
//!
//! The principal series with `c = i q` is realized on `L^2(S^2)`: a group
//! element `g` acts as `(U(g) f)(n) = w^{-1 + i q} f(n')` where
//! `Lambda(g)^{-1} (1, n) = w (1, n')`. For the boost `b_zeta` along `z`,
//! `w = cosh zeta - sinh zeta cos(theta)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Mul;

use crate::special::{
    gauss_legendre, gauss_legendre_on, harmonic_index, spherical_harmonics, spherical_harmonics_at,
    wigner_small_d,
};
use crate::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest `2j` accepted by [`su2_wigner_d`].
pub const TWO_J_MAX: u32 = 40;

/// An element of SU(2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Su2(pub [[Complex64; 2]; 2]);

impl Su2 {
    /// Checked constructor: unitary with unit determinant to 1e-12.
    pub fn new(m: [[Complex64; 2]; 2]) -> Result<Self> {
        let u = Su2(m);
        let dev = u.unitarity_defect();
        if dev > 1e-12 {
            return Err(Error::NotUnitary(dev));
        }
        Ok(u)
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Su2([[one, zero], [zero, one]])
    }

    /// Rotation by `angle` about `axis` (normalized internally).
    pub fn axis_angle(axis: [f64; 3], angle: f64) -> Result<Self> {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(norm > 0.0) || !angle.is_finite() {
            return Err(Error::InvalidParameter("rotation axis must be nonzero".into()));
        }
        let (nx, ny, nz) = (axis[0] / norm, axis[1] / norm, axis[2] / norm);
        let c = (0.5 * angle).cos();
        let s = (0.5 * angle).sin();
        Ok(Su2([
            [Complex64::new(c, -s * nz), Complex64::new(-s * ny, -s * nx)],
            [Complex64::new(s * ny, -s * nx), Complex64::new(c, s * nz)],
        ]))
    }

    /// Element with z-y-z Euler angles.
    pub fn euler_zyz(alpha: f64, beta: f64, gamma: f64) -> Self {
        let rz = |a: f64| Su2::axis_angle([0.0, 0.0, 1.0], a).expect("valid axis");
        let ry = Su2::axis_angle([0.0, 1.0, 0.0], beta).expect("valid axis");
        rz(alpha) * ry * rz(gamma)
    }

    /// `max |u u^dagger - 1| + |det u - 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        let m = &self.0;
        let mut dev: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e: Complex64 = (0..2).map(|k| m[i][k] * m[j][k].conj()).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((e - target).norm());
            }
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        dev + (det - 1.0).norm()
    }

    pub fn inverse(&self) -> Self {
        let m = &self.0;
        Su2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    /// The SO(3) image, `R_ij = tr(sigma_i u sigma_j u^dagger) / 2`.
    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let sigma = pauli();
        let ud = self.inverse();
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let prod = mat2_mul(&mat2_mul(&mat2_mul(&sigma[i], &self.0), &sigma[j]), &ud.0);
                r[i][j] = 0.5 * (prod[0][0] + prod[1][1]).re;
            }
        }
        r
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        mat3_apply(&self.rotation_matrix(), v)
    }
}

impl Mul for Su2 {
    type Output = Su2;
    fn mul(self, rhs: Su2) -> Su2 {
        Su2(mat2_mul(&self.0, &rhs.0))
    }
}

fn pauli() -> [[[Complex64; 2]; 2]; 3] {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    [[[z, o], [o, z]], [[z, -I], [I, z]], [[o, z], [z, -o]]]
}

fn mat2_mul(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub(crate) fn mat3_apply(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2];
    }
    out
}

/// `R^j(u)` in the basis `m = j, j-1, ..., -j`.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerRotationMatrix {
    pub two_j: u32,
    pub entries: DMatrix<Complex64>,
}

impl WignerRotationMatrix {
    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    /// Entry `R^j_{m' m}` addressed by doubled magnetic numbers.
    pub fn get(&self, two_mp: i64, two_m: i64) -> Complex64 {
        let tj = self.two_j as i64;
        self.entries[(((tj - two_mp) / 2) as usize, ((tj - two_m) / 2) as usize)]
    }
}

/// Wigner rotation matrix of spin `j = two_j / 2`.
pub fn su2_wigner_d(two_j: u32, u: &Su2) -> Result<WignerRotationMatrix> {
    if two_j > TWO_J_MAX {
        return Err(Error::SpinTooLarge(two_j as f64 / 2.0, TWO_J_MAX as f64 / 2.0));
    }
    // u = [[e^{-iA} c, -e^{-iB} s], [e^{iB} s, e^{iA} c]] with A = (alpha+gamma)/2,
    // B = (alpha-gamma)/2, c = cos(beta/2), s = sin(beta/2).
    let a = u.0[0][0];
    let b = u.0[0][1];
    let beta = 2.0 * b.norm().atan2(a.norm());
    let half_sum = if a.norm() > 1e-300 { -a.arg() } else { 0.0 };
    let half_diff = if b.norm() > 1e-300 { -(-b).arg() } else { 0.0 };
    let n = two_j as usize + 1;
    let tj = two_j as i64;
    let mut entries = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for r in 0..n {
        let two_mp = tj - 2 * r as i64;
        for c in 0..n {
            let two_m = tj - 2 * c as i64;
            // e^{-i m' alpha - i m gamma} = e^{-i (m'+m) A - i (m'-m) B}; both sums integral.
            let sum = ((two_mp + two_m) / 2) as f64;
            let diff = ((two_mp - two_m) / 2) as f64;
            let phase = Complex64::from_polar(1.0, -sum * half_sum - diff * half_diff);
            entries[(r, c)] = phase * wigner_small_d(tj, two_mp, two_m, beta);
        }
    }
    Ok(WignerRotationMatrix { two_j, entries })
}

/// Label of a Gamma point: multiplicity index, `M` (always 0 here) and the
/// principal-series parameter `c = i q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaLabel {
    pub nu: u32,
    pub m: i32,
    pub q: f64,
}

impl GammaLabel {
    pub fn principal(nu: u32, q: f64) -> Self {
        GammaLabel { nu, m: 0, q }
    }

    pub fn c(&self) -> Complex64 {
        Complex64::new(0.0, self.q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m != 0 {
            return Err(Error::Unsupported(format!("M = {} (only M = 0 is implemented)", self.m)));
        }
        if !self.q.is_finite() {
            return Err(Error::InvalidParameter("non-finite q".into()));
        }
        Ok(())
    }
}

fn principal_q(c: Complex64) -> Result<f64> {
    if c.re.abs() > 1e-15 || !c.im.is_finite() {
        return Err(Error::SupplementarySeries(c));
    }
    Ok(c.im)
}

/// Below this rapidity the closed forms cancel badly; plain Gauss-Legendre in
/// `cos theta` is exact to rounding there.
const SMALL_ZETA: f64 = 0.05;
/// Absolute error budget for the recursion before falling back to quadrature.
const RECURSION_BUDGET: f64 = 1e-12;
/// Quadrature order used by the fallback path.
const FALLBACK_ORDER: usize = 64;

/// `(l 0 | U(b_zeta) | 0 0)` for `l = 0..=l_max`, plus the number of orders
/// that had to be taken from quadrature.
pub fn boost_elements(c: Complex64, l_max: usize, zeta: f64) -> Result<(Vec<Complex64>, usize)> {
    let q = principal_q(c)?;
    if !zeta.is_finite() {
        return Err(Error::InvalidParameter("non-finite rapidity".into()));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); l_max + 1];
    let az = zeta.abs();
    if az == 0.0 {
        out[0] = Complex64::new(1.0, 0.0);
        return Ok((out, 0));
    }
    let mut fallbacks = 0;
    if az < SMALL_ZETA {
        // Integrand (cosh - sinh x)^{-1+iq} is entire near [-1, 1] here.
        let (x, w) = gauss_legendre(32 + l_max);
        let (ch, sh) = (az.cosh(), az.sinh());
        let s = Complex64::new(-1.0, q);
        for (l, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (xi, wi) in x.iter().zip(&w) {
                acc += Complex64::new(ch - sh * xi, 0.0).powc(s) * crate::special::legendre_p(l, *xi) * *wi;
            }
            *o = acc * (0.5 * ((2 * l + 1) as f64).sqrt());
        }
    } else {
        let (ch, sh) = (az.cosh(), az.sinh());
        let z = ch / sh;
        // B_l = int_{-1}^{1} P_l(x) (cosh - sinh x)^{-1 + i q} dx
        let (i1, b0) = if q.abs() < 1e-9 {
            (2.0 * az, Complex64::new(2.0 * az / sh, 0.0))
        } else {
            let i1 = 2.0 * (q * az).sin() / q;
            (i1, Complex64::new(i1 / sh, 0.0))
        };
        let one_iq = Complex64::new(1.0, q);
        let i2 = 2.0 * (one_iq * az).sinh() / one_iq;
        let b1 = (ch * i1 - i2) / (sh * sh);
        let mut b = vec![b0, b1];
        // The dominant (second-kind) solution grows like coth(zeta/2)^l; the
        // seeds carry a cancellation error of order eps / zeta^2.
        let growth = 1.0 / (0.5 * az).tanh();
        let scale = b0.norm().max(b1.norm());
        let mut est = 64.0 * f64::EPSILON * scale / az.min(1.0).powi(2);
        for l in 1..l_max {
            let lf = l as f64;
            let next = ((2.0 * lf + 1.0) * z * b[l] - Complex64::new(lf, -q) * b[l - 1]) / Complex64::new(lf + 1.0, q);
            b.push(next);
        }
        b.truncate(l_max + 1);
        for (l, o) in out.iter_mut().enumerate() {
            if l >= 2 {
                est *= growth;
            }
            if l >= 2 && est * ((2 * l + 1) as f64).sqrt() > RECURSION_BUDGET {
                *o = oracle_boost_element(c, l, 0, az, FALLBACK_ORDER)?;
                fallbacks += 1;
            } else {
                *o = b[l] * (0.5 * ((2 * l + 1) as f64).sqrt());
            }
        }
    }
    if zeta < 0.0 {
        for (l, o) in out.iter_mut().enumerate() {
            if l % 2 == 1 {
                *o = -*o;
            }
        }
    }
    Ok((out, fallbacks))
}

/// Single principal-series boost matrix element `d_l(zeta) = (l 0|U(b_zeta)|0 0)`.
pub fn boost_element(c: Complex64, l: usize, zeta: f64) -> Result<Complex64> {
    Ok(boost_elements(c, l, zeta)?.0[l])
}

/// Cached `d_l(zeta)` for one `c`, `l <= l_max` and a fixed list of rapidities.
#[derive(Clone, Debug)]
pub struct BoostElementTable {
    c: Complex64,
    l_max: usize,
    zetas: Vec<f64>,
    entries: Vec<Complex64>,
    fallbacks: usize,
}

impl BoostElementTable {
    pub fn build(c: Complex64, l_max: usize, zetas: &[f64]) -> Result<Self> {
        let mut entries = Vec::with_capacity(zetas.len() * (l_max + 1));
        let mut fallbacks = 0;
        for &z in zetas {
            let (row, fb) = boost_elements(c, l_max, z)?;
            entries.extend(row);
            fallbacks += fb;
        }
        Ok(BoostElementTable { c, l_max, zetas: zetas.to_vec(), entries, fallbacks })
    }

    pub fn c(&self) -> Complex64 {
        self.c
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn zetas(&self) -> &[f64] {
        &self.zetas
    }

    /// Number of entries that came from quadrature instead of the recursion.
    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    pub fn get(&self, l: usize, zeta_index: usize) -> Complex64 {
        self.entries[zeta_index * (self.l_max + 1) + l]
    }
}

/// Boost-adapted quadrature on the sphere: nodes `(cos theta, phi)` and
/// weights for `int dOmega`, with `cos theta = (cosh z - e^v)/sinh z`
/// sampled by Gauss-Legendre in `v`. The multiplier `w = e^v` is returned
/// with each node.
fn boost_adapted_sphere(zeta: f64, order: usize) -> Vec<(f64, f64, f64, f64)> {
    let az = zeta.abs();
    let n_phi = 2 * order;
    let mut nodes = Vec::with_capacity(order * n_phi);
    let (vs, ws) = gauss_legendre_on(order, -az, az);
    let (ch, sh) = (zeta.cosh(), zeta.sinh());
    for (v, wv) in vs.iter().zip(&ws) {
        let w = v.exp();
        let ct = ((ch - w) / sh).clamp(-1.0, 1.0);
        let weight = wv * w / sh.abs() * 2.0 * PI / n_phi as f64;
        for p in 0..n_phi {
            let phi = 2.0 * PI * (p as f64 + 0.5) / n_phi as f64;
            nodes.push((ct, phi, w, weight));
        }
    }
    nodes
}

/// Image direction `n'` and multiplier `w` of `n` under `Lambda(b_zeta)^{-1}`.
fn boosted_direction(ct: f64, phi: f64, zeta: f64) -> ([f64; 3], f64) {
    let st = (1.0 - ct * ct).max(0.0).sqrt();
    let w = zeta.cosh() - zeta.sinh() * ct;
    let n = [st * phi.cos() / w, st * phi.sin() / w, (ct * zeta.cosh() - zeta.sinh()) / w];
    (n, w)
}

/// General principal-series matrix element `(l n | U(b_zeta) | l' n')` by
/// direct quadrature on the sphere.
pub fn oracle_boost_matrix_element(
    c: Complex64,
    bra: (usize, i64),
    ket: (usize, i64),
    zeta: f64,
    order: usize,
) -> Result<Complex64> {
    let q = principal_q(c)?;
    if order < 8 {
        return Err(Error::InvalidParameter(format!("quadrature order {order} < 8")));
    }
    let (l, n) = bra;
    let (lp, np) = ket;
    if n.unsigned_abs() as usize > l || np.unsigned_abs() as usize > lp {
        return Err(Error::InvalidParameter("|n| > l".into()));
    }
    let lm = l.max(lp);
    if zeta.abs() < 1e-14 {
        let v = if bra == ket { 1.0 } else { 0.0 };
        return Ok(Complex64::new(v, 0.0));
    }
    let s = Complex64::new(-1.0, q);
    let mut acc = Complex64::new(0.0, 0.0);
    for (ct, phi, _, weight) in boost_adapted_sphere(zeta, order) {
        let (np_dir, w) = boosted_direction(ct, phi, zeta);
        let y_bra = spherical_harmonics(lm, ct, phi)[harmonic_index(l, n)];
        let y_ket = spherical_harmonics_at(lm, np_dir)[harmonic_index(lp, np)];
        acc += y_bra.conj() * Complex64::new(w, 0.0).powc(s) * y_ket * weight;
    }
    Ok(acc)
}

/// `(l n | U(b_zeta) | 0 0)` by sphere quadrature; the slow reference for
/// [`boost_element`].
pub fn oracle_boost_element(c: Complex64, l: usize, n: i64, zeta: f64, order: usize) -> Result<Complex64> {
    oracle_boost_matrix_element(c, (l, n), (0, 0), zeta, order)
}

/// Rotation carrying `z` to the unit vector `khat`: `R_z(phi) R_y(theta)`.
pub fn rotation_to(khat: [f64; 3]) -> Su2 {
    let (ct, phi) = crate::special::direction_angles(khat);
    Su2::euler_zyz(phi, ct.acos(), 0.0)
}

fn check_unit(khat: [f64; 3]) -> Result<()> {
    let n = (khat[0] * khat[0] + khat[1] * khat[1] + khat[2] * khat[2]).sqrt();
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("|khat| = {n} is not 1")));
    }
    Ok(())
}

/// `sqrt(4 pi / (2l+1))`, the constant relating the `(n, 0)` column of a
/// Wigner matrix to a conjugated spherical harmonic.
pub fn column_constant(l: usize) -> f64 {
    (4.0 * PI / (2 * l + 1) as f64).sqrt()
}

/// `D^{0c}_{l n 0 0}(a_k)` for `a_k = r(khat) b_zeta`:
/// `sqrt(4 pi/(2l+1)) conj(Y_ln(khat)) d_l(zeta)`.
pub fn assemble_d_ln00(c: Complex64, l: usize, n: i64, khat: [f64; 3], zeta: f64) -> Result<Complex64> {
    check_unit(khat)?;
    if n.unsigned_abs() as usize > l {
        return Err(Error::InvalidParameter("|n| > l".into()));
    }
    let y = spherical_harmonics_at(l, khat)[harmonic_index(l, n)];
    Ok(column_constant(l) * y.conj() * boost_element(c, l, zeta)?)
}

/// `(l n | U(r(khat)) U(b_zeta) | 0 0)` by sphere quadrature, evaluating the
/// rotated harmonic pointwise. Reference for [`assemble_d_ln00`].
pub fn oracle_assembled_d(c: Complex64, l: usize, n: i64, khat: [f64; 3], zeta: f64, order: usize) -> Result<Complex64> {
    check_unit(khat)?;
    let q = principal_q(c)?;
    if zeta.abs() < 1e-14 {
        // U(b) = 1: project the constant function.
        return oracle_rotated_constant(l, n, khat, order);
    }
    let r = rotation_to(khat).rotation_matrix();
    let s = Complex64::new(-1.0, q);
    let y00 = (1.0 / (4.0 * PI)).sqrt();
    let mut acc = Complex64::new(0.0, 0.0);
    // (U(r)U(b)Y00)(m) = (U(b)Y00)(r^{-1} m); substitute m = r m'.
    for (ct, phi, w, weight) in boost_adapted_sphere(zeta, order) {
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        let mprime = [st * phi.cos(), st * phi.sin(), ct];
        let m = mat3_apply(&r, mprime);
        let y = spherical_harmonics_at(l, m)[harmonic_index(l, n)];
        acc += y.conj() * Complex64::new(w, 0.0).powc(s) * y00 * weight;
    }
    Ok(acc)
}

fn oracle_rotated_constant(l: usize, n: i64, _khat: [f64; 3], order: usize) -> Result<Complex64> {
    let (ct, wt) = gauss_legendre(order);
    let n_phi = 2 * order;
    let y00 = (1.0 / (4.0 * PI)).sqrt();
    let mut acc = Complex64::new(0.0, 0.0);
    for (c, w) in ct.iter().zip(&wt) {
        for p in 0..n_phi {
            let phi = 2.0 * PI * p as f64 / n_phi as f64;
            let y = spherical_harmonics(l, *c, phi)[harmonic_index(l, n)];
            acc += y.conj() * y00 * (w * 2.0 * PI / n_phi as f64);
        }
    }
    Ok(acc)
}

/// One-dimensional unitary character of the 1+1 Lorentz group,
/// `exp(i q zeta)` for the principal-series label `c = i q`.
pub fn character_1p1(c: Complex64, zeta: f64) -> Complex64 {
    Complex64::from_polar(1.0, c.im * zeta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    fn c(q: f64) -> Complex64 {
        Complex64::new(0.0, q)
    }

    /// exp(-i theta J_y) for j = 1 from the power series of the generator.
    fn expm_series(gen: &DMatrix<Complex64>, theta: f64) -> DMatrix<Complex64> {
        let n = gen.nrows();
        let a = gen * Complex64::new(0.0, -theta);
        let mut term = DMatrix::<Complex64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..60 {
            term = &term * &a / Complex64::new(k as f64, 0.0);
            sum += &term;
        }
        sum
    }

    #[test]
    fn spin_zero_and_half() {
        let u = Su2::axis_angle([0.3, -1.0, 0.4], 1.3).unwrap();
        let r0 = su2_wigner_d(0, &u).unwrap();
        assert!((r0.entries[(0, 0)] - 1.0).norm() < 1e-15);
        let r = su2_wigner_d(1, &u).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((r.entries[(i, j)] - u.0[i][j]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn spin_one_matches_generator_exponential() {
        // J_y in basis (1, 0, -1).
        let s = 1.0 / 2f64.sqrt();
        let z = Complex64::new(0.0, 0.0);
        let jy = DMatrix::from_row_slice(
            3,
            3,
            &[z, Complex64::new(0.0, -s), z, Complex64::new(0.0, s), z, Complex64::new(0.0, -s), z, Complex64::new(0.0, s), z],
        );
        let expected = expm_series(&jy, PI / 2.0);
        let u = Su2::axis_angle([0.0, 1.0, 0.0], PI / 2.0).unwrap();
        let r = su2_wigner_d(2, &u).unwrap();
        assert!(max_abs(&(r.entries.clone() - expected)) < 1e-13);
    }

    #[test]
    fn wigner_group_law_and_unitarity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut draw = || {
                Su2::euler_zyz(rng.random_range(-PI..PI), rng.random_range(0.0..PI), rng.random_range(-PI..PI))
            };
            let (u1, u2) = (draw(), draw());
            for two_j in 0..=6 {
                let a = su2_wigner_d(two_j, &(u1 * u2)).unwrap().entries;
                let b = su2_wigner_d(two_j, &u1).unwrap().entries * su2_wigner_d(two_j, &u2).unwrap().entries;
                assert!(max_abs(&(a.clone() - b)) < 1e-10);
                let n = a.nrows();
                assert!(max_abs(&(a.adjoint() * &a - DMatrix::identity(n, n))) < 1e-12);
            }
        }
        assert!(matches!(su2_wigner_d(TWO_J_MAX + 1, &Su2::identity()), Err(Error::SpinTooLarge(..))));
    }

    #[test]
    fn harmonics_rotate_with_wigner_matrices() {
        // Y_lm(R^{-1} r) = sum_m' Y_lm'(r) D^l_{m'm}(R)
        let u = Su2::axis_angle([1.0, 2.0, -0.5], 0.9).unwrap();
        let rinv = u.inverse().rotation_matrix();
        let v = [0.2, -0.6, 0.774_596_669_241_483_4];
        let y = spherical_harmonics_at(3, v);
        let y_rot = spherical_harmonics_at(3, mat3_apply(&rinv, v));
        for l in 0..=3usize {
            let d = su2_wigner_d(2 * l as u32, &u).unwrap();
            for m in -(l as i64)..=(l as i64) {
                let mut acc = Complex64::new(0.0, 0.0);
                for mp in -(l as i64)..=(l as i64) {
                    acc += y[harmonic_index(l, mp)] * d.get(2 * mp, 2 * m);
                }
                assert!((acc - y_rot[harmonic_index(l, m)]).norm() < 1e-13, "l={l} m={m}");
            }
        }
    }

    #[test]
    fn rotation_matrix_is_active() {
        let u = Su2::axis_angle([0.0, 0.0, 1.0], PI / 2.0).unwrap();
        let v = u.rotate([1.0, 0.0, 0.0]);
        assert!((v[0]).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);
        let k = [0.48, -0.6, 0.64];
        let z = rotation_to(k).rotate([0.0, 0.0, 1.0]);
        for i in 0..3 {
            assert!((z[i] - k[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn boost_identity_and_zonal_closed_form() {
        assert!((boost_element(c(1.0), 0, 0.0).unwrap() - 1.0).norm() < 1e-15);
        assert!(boost_element(c(1.0), 3, 0.0).unwrap().norm() < 1e-15);
        for &q in &[0.5f64, 1.0, 2.0] {
            for &z in &[0.01f64, 0.3, 1.0, 2.5] {
                let closed = (q * z).sin() / (q * z.sinh());
                let oracle = oracle_boost_element(c(q), 0, 0, z, 48).unwrap();
                assert!((oracle - closed).norm() < 1e-12, "q={q} z={z}");
                assert!((boost_element(c(q), 0, z).unwrap() - closed).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn boost_element_matches_oracle_at_l2() {
        let fast = boost_element(c(1.0), 2, 1.0).unwrap();
        let slow = oracle_boost_element(c(1.0), 2, 0, 1.0, 64).unwrap();
        assert!((fast - slow).norm() < 1e-8);
    }

    #[test]
    fn oracle_respects_axial_symmetry_and_converges() {
        assert!(oracle_boost_element(c(1.0), 2, 1, 0.7, 16).unwrap().norm() < 1e-15);
        assert_eq!(oracle_boost_element(c(1.0), 2, 0, 0.0, 16).unwrap(), Complex64::new(0.0, 0.0));
        for l in 0..=4 {
            for &z in &[0.2, 1.0, 2.0] {
                let a = oracle_boost_element(c(1.0), l, 0, z, 32).unwrap();
                let b = oracle_boost_element(c(1.0), l, 0, z, 64).unwrap();
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn boost_parity_relation() {
        for l in 0..=4 {
            let plus = oracle_boost_element(c(1.5), l, 0, 0.8, 48).unwrap();
            let minus = oracle_boost_element(c(1.5), l, 0, -0.8, 48).unwrap();
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            assert!((minus - plus * sign).norm() < 1e-12);
            assert!((boost_element(c(1.5), l, -0.8).unwrap() - minus).norm() < 1e-10);
        }
    }

    #[test]
    fn boost_column_is_unit_norm() {
        for &z in &[0.1, 0.7, 1.5] {
            let (d, _) = boost_elements(c(1.0), 40, z).unwrap();
            let total: f64 = d.iter().map(|x| x.norm_sqr()).sum();
            assert!((total - 1.0).abs() < 1e-8, "zeta={z} total={total}");
            assert!(d.iter().all(|x| x.norm() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn supplementary_series_rejected() {
        assert!(matches!(boost_element(Complex64::new(0.5, 0.0), 0, 1.0), Err(Error::SupplementarySeries(_))));
    }

    #[test]
    fn assembled_matches_rotation_boost_composition() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let ct: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(-PI..PI);
            let st = (1.0 - ct * ct).sqrt();
            let k = [st * phi.cos(), st * phi.sin(), ct];
            let z: f64 = rng.random_range(0.05..2.0);
            for l in 0..=3usize {
                for n in -(l as i64)..=(l as i64) {
                    let fast = assemble_d_ln00(c(1.0), l, n, k, z).unwrap();
                    let slow = oracle_assembled_d(c(1.0), l, n, k, z, 48).unwrap();
                    assert!((fast - slow).norm() < 1e-8, "l={l} n={n} {fast} {slow}");
                }
            }
        }
        assert!(assemble_d_ln00(c(1.0), 2, 1, [0.0, 0.0, 1.0], 0.5).unwrap().norm() < 1e-15);
        assert!(assemble_d_ln00(c(1.0), 0, 0, [0.0, 0.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn character_is_unitary_homomorphism() {
        let cc = c(2.0);
        assert_eq!(character_1p1(cc, 0.0), Complex64::new(1.0, 0.0));
        assert!((character_1p1(cc, PI).norm() - 1.0).abs() < 1e-15);
        let (a, b) = (0.37, -1.2);
        assert!((character_1p1(cc, a) * character_1p1(cc, b) - character_1p1(cc, a + b)).norm() < 1e-15);
    }
}
