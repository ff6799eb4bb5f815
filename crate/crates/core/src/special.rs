//! Special functions and quadrature rules shared by the representation and
//! field code: Gauss-Legendre nodes, spherical harmonics (Condon-Shortley),
//! spherical Bessel functions of the first kind and Wigner small-d.

use num_complex::Complex64;
use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes increasing.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    (
        x.iter().map(|xi| mid + half * xi).collect(),
        w.iter().map(|wi| half * wi).collect(),
    )
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Legendre polynomial `P_l(x)`.
pub fn legendre_p(l: usize, x: f64) -> f64 {
    let mut p0 = 1.0;
    if l == 0 {
        return p0;
    }
    let mut p1 = x;
    for k in 2..=l {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Number of `(l, m)` pairs with `l <= l_max`.
pub const fn harmonic_count(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Flat index of `(l, m)` in the `l^2 + l + m` layout.
pub fn harmonic_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    ((l * l + l) as i64 + m) as usize
}

/// Inverse of [`harmonic_index`].
pub fn harmonic_lm(index: usize) -> (usize, i64) {
    let l = (index as f64).sqrt() as usize;
    let l = if (l + 1) * (l + 1) <= index { l + 1 } else { l };
    (l, index as i64 - (l * l + l) as i64)
}

/// All orthonormal spherical harmonics `Y_lm(theta, phi)` with `l <= l_max`,
/// in [`harmonic_index`] order, Condon-Shortley phase included.
pub fn spherical_harmonics(l_max: usize, cos_theta: f64, phi: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); harmonic_count(l_max)];
    let x = cos_theta.clamp(-1.0, 1.0);
    let s = (1.0 - x * x).max(0.0).sqrt();
    // Normalized associated Legendre functions N_lm P_l^m(x), m >= 0,
    // N_lm = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!), Condon-Shortley included.
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            let mf = m as f64;
            pmm *= -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        let mut p_prev = 0.0;
        let mut p_cur = pmm;
        for l in m..=l_max {
            if l > m {
                let lf = l as f64;
                let mf = m as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
                let p_next = a * (x * p_cur - b * p_prev);
                p_prev = p_cur;
                p_cur = p_next;
            }
            let phase = Complex64::from_polar(1.0, m as f64 * phi);
            out[harmonic_index(l, m as i64)] = phase * p_cur;
            if m > 0 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                out[harmonic_index(l, -(m as i64))] = (phase * p_cur).conj() * sign;
            }
        }
    }
    out
}

/// Spherical harmonics at a unit vector.
pub fn spherical_harmonics_at(l_max: usize, v: [f64; 3]) -> Vec<Complex64> {
    let (cos_theta, phi) = direction_angles(v);
    spherical_harmonics(l_max, cos_theta, phi)
}

/// `(cos theta, phi)` of a nonzero 3-vector.
pub fn direction_angles(v: [f64; 3]) -> (f64, f64) {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if r == 0.0 {
        return (1.0, 0.0);
    }
    ((v[2] / r).clamp(-1.0, 1.0), v[1].atan2(v[0]))
}

/// Spherical Bessel functions `j_0(x) ..= j_n(x)`.
///
/// Upward recurrence is used for `x > n`, Miller's downward recurrence
/// otherwise; the small-argument branch uses the leading series term.
pub fn spherical_bessel_j(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    let ax = x.abs();
    if ax < 1e-8 {
        out[0] = 1.0 - x * x / 6.0;
        let mut term = 1.0;
        for (l, o) in out.iter_mut().enumerate().skip(1) {
            term *= x / (2 * l + 1) as f64;
            *o = term;
        }
        return out;
    }
    let j0 = x.sin() / x;
    out[0] = j0;
    if n == 0 {
        return out;
    }
    if ax > n as f64 {
        let mut jm = j0;
        let mut jc = (x.sin() / x - x.cos()) / x;
        out[1] = jc;
        for l in 1..n {
            let jn = (2 * l + 1) as f64 / x * jc - jm;
            jm = jc;
            jc = jn;
            out[l + 1] = jc;
        }
        return out;
    }
    // Downward recurrence from well above both n and x.
    let start = n + 20 + (ax as usize) + ((40.0 * (n as f64 + ax).sqrt()) as usize);
    let mut jp = 0.0;
    let mut jc = 1e-300;
    let mut tmp = vec![0.0; n + 1];
    for l in (1..=start).rev() {
        let jm = (2 * l + 1) as f64 / x * jc - jp;
        jp = jc;
        jc = jm;
        if jc.abs() > 1e250 {
            jc *= 1e-250;
            jp *= 1e-250;
            for t in tmp.iter_mut() {
                *t *= 1e-250;
            }
        }
        if l - 1 <= n {
            tmp[l - 1] = jc;
        }
    }
    // Normalize against whichever of j_0, j_1 is better conditioned.
    let j1 = (x.sin() / x - x.cos()) / x;
    let scale = if j0.abs() > j1.abs() { j0 / tmp[0] } else { j1 / tmp[1] };
    for (o, t) in out.iter_mut().zip(tmp.iter()) {
        *o = t * scale;
    }
    out
}

fn ln_factorial(n: i64) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Wigner small-d `d^j_{m'm}(beta)` with `j = two_j / 2`, `m' = two_mp / 2`,
/// `m = two_m / 2` (all doubled so half-integers are exact).
pub fn wigner_small_d(two_j: i64, two_mp: i64, two_m: i64, beta: f64) -> f64 {
    let jpm = (two_j + two_m) / 2;
    let jmm = (two_j - two_m) / 2;
    let jpmp = (two_j + two_mp) / 2;
    let jmmp = (two_j - two_mp) / 2;
    let mpmm = (two_mp - two_m) / 2;
    let c = (0.5 * beta).cos();
    let s = (0.5 * beta).sin();
    let pref = 0.5 * (ln_factorial(jpmp) + ln_factorial(jmmp) + ln_factorial(jpm) + ln_factorial(jmm));
    let k_min = 0.max(-mpmm);
    let k_max = jpm.min(jmmp);
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let denom = ln_factorial(jpm - k) + ln_factorial(k) + ln_factorial(jmmp - k) + ln_factorial(k + mpmm);
        let sign = if (k + mpmm) % 2 == 0 { 1.0 } else { -1.0 };
        // cos^(2j + m - m' - 2k) sin^(2k + m' - m)
        let pc = two_j - mpmm - 2 * k;
        let ps = 2 * k + mpmm;
        sum += sign * (pref - denom).exp() * c.powi(pc as i32) * s.powi(ps as i32);
    }
    sum
}
