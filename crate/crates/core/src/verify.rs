//! Property checks binding the construction's guarantees to numbers.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    coordinate_moments, density, evaluate_field, momentum_space_total, oracle_direct_field, probability, tau_matrix,
    DensityField, EventBox, EventRegion, SpacetimeGrid,
};
use crate::kernel::{kernel_conjugate, validate_isometry, validate_subnormalization, KernelFamily, KernelMode};
use crate::state::{
    apply_boost_1p1_reported, apply_rotation, apply_translation_with_loss, random_state, Homogeneous, MassShellGrid,
    PoincareElement, SpacetimeDim, WaveFunction,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub pass: bool,
    /// States, kernels and seeds the check ran on.
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckResult {
    fn new(name: &str, tolerance: f64, provenance: &str) -> Self {
        CheckResult {
            name: name.into(),
            measured: BTreeMap::new(),
            tolerance,
            pass: false,
            provenance: provenance.into(),
            notes: Vec::new(),
        }
    }

    fn put(&mut self, key: &str, value: f64) {
        self.measured.insert(key.into(), value);
    }

    /// One-line summary.
    pub fn summary(&self) -> String {
        let vals: Vec<String> = self.measured.iter().map(|(k, v)| format!("{k}={v:.3e}")).collect();
        format!("{} {} tol={:.1e} {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.tolerance, vals.join(" "))
    }
}

fn rho_of(psi: &WaveFunction, k: &KernelFamily, grid: &SpacetimeGrid) -> Result<DensityField> {
    Ok(density(&evaluate_field(psi, k, grid)?))
}

/// Position-space total `int rho` against `||psi||^2` (normalized kernels) or
/// against the momentum-space total (sub-normalized kernels), with the
/// momentum-space path, the partial-wave cutoff and the box shell itemized.
pub fn check_normalization(psi: &WaveFunction, k: &KernelFamily, grid: &SpacetimeGrid, tol: f64) -> Result<CheckResult> {
    let mut r = CheckResult::new("normalization", tol, &format!("{:?} state, {:?} kernel", psi.dim(), k.mode()));
    let rho = rho_of(psi, k, grid)?;
    let moments = coordinate_moments(&rho);
    let mom = momentum_space_total(psi, k)?;
    let norm = psi.norm_squared();
    let expected = match k.mode() {
        KernelMode::Normalized => norm,
        KernelMode::Subnormalized => {
            r.notes.push(format!("sub-normalized kernel: total {:.6} below ||psi||^2 = {norm:.6} as expected", mom.total));
            mom.total
        }
    };
    let deviation = (moments.total - expected).abs();
    r.put("position_total", moments.total);
    r.put("momentum_total", mom.total);
    r.put("momentum_truncated", mom.truncated);
    r.put("norm_squared", norm);
    r.put("deviation", deviation);
    r.put("l_residual", mom.l_residual);
    r.put("l_tail_ratio", mom.tail_ratio);
    r.put("box_shell_residual", moments.boundary_residual);
    r.put("position_vs_truncated", (moments.total - mom.truncated).abs());
    if mom.tail_ratio > 0.01 {
        r.notes.push(format!("partial-wave tail ratio {:.3e} exceeds 1%", mom.tail_ratio));
    }
    if moments.truncated {
        r.notes.push("density is not negligible on the box boundary".into());
    }
    r.pass = deviation <= tol;
    Ok(r)
}

fn is_lattice(v: f64, step: f64) -> bool {
    let n = (v / step).round();
    (v - n * step).abs() <= 1e-9 * step
}

fn sample_indices(n: usize, count: usize, seed: u64) -> Vec<usize> {
    if n <= count {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random_range(0..n)).collect()
}

/// Points in the central half of the grid box, where the density lives.
fn central_points(grid: &SpacetimeGrid) -> Vec<usize> {
    let bounds = grid.bounds();
    (0..grid.len())
        .filter(|&i| {
            let p = grid.point(i);
            match grid {
                SpacetimeGrid::Mink4 { .. } => {
                    let rr = (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt();
                    p[0].abs() <= 0.5 * bounds[0].1.max(-bounds[0].0) && rr <= 0.5 * bounds[1].1
                }
                _ => p.iter().zip(&bounds).all(|(x, (lo, hi))| {
                    let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                    (x - c).abs() <= 0.5 * h
                }),
            }
        })
        .collect()
}

const COVARIANCE_SAMPLES: usize = 400;

/// `max_x |rho(U(g) psi, g x) - rho(psi, x)|`.
///
/// Lattice translations compare grid values directly; boosts (1+1),
/// rotations (3+1) and off-lattice translations evaluate the transformed
/// density at the moved points.
pub fn check_covariance(
    psi: &WaveFunction,
    k: &KernelFamily,
    grid: &SpacetimeGrid,
    g: &PoincareElement,
    tol: f64,
    seed: u64,
) -> Result<CheckResult> {
    let d = psi.dim().coords();
    if g.translation.len() != d {
        return Err(Error::DimensionMismatch(format!("{}-translation in {d} dimensions", g.translation.len())));
    }
    let mut r = CheckResult::new("covariance", tol, &format!("{:?} state, element {:?}, seed {seed}", psi.dim(), g));
    let rho = rho_of(psi, k, grid)?;
    let max_rho = rho.values.iter().cloned().fold(0.0, f64::max);
    // U(y, a) psi = U(y, 1) U(0, a) psi.
    let (moved, interp) = match (g.homogeneous, psi.dim()) {
        (Homogeneous::Identity, _) => (psi.clone(), 0.0),
        (Homogeneous::Boost(z), SpacetimeDim::Mink2) => {
            let b = apply_boost_1p1_reported(psi, z)?;
            (b.state, b.interpolation_error)
        }
        (Homogeneous::Rotation(u), SpacetimeDim::Mink4) => (apply_rotation(psi, &u)?, 0.0),
        (h, dim) => return Err(Error::Unsupported(format!("{h:?} on a {dim:?} state"))),
    };
    let (moved, lost) = apply_translation_with_loss(&moved, &g.translation)?;
    r.put("interpolation_error", interp);
    r.put("translation_norm_loss", lost);

    let candidates = central_points(grid);
    let sample: Vec<usize> = sample_indices(candidates.len(), COVARIANCE_SAMPLES, seed).iter().map(|&j| candidates[j]).collect();
    let mut deviation: f64 = 0.0;
    let lattice = lattice_shift(grid, g);
    if let Some(shift) = lattice {
        // Grid-exact comparison.
        let rho2 = rho_of(&moved, k, grid)?;
        let mut compared = 0usize;
        for i in 0..grid.len() {
            if let Some(j) = shift(i) {
                deviation = deviation.max((rho2.values[j] - rho.values[i]).abs());
                compared += 1;
            }
        }
        r.put("points_compared", compared as f64);
        r.notes.push("lattice translation: grid values compared directly".into());
    } else {
        match (psi.dim(), g.homogeneous) {
            (SpacetimeDim::Mink4, Homogeneous::Rotation(_)) if g.translation[1..].iter().all(|v| *v == 0.0) => {
                let SpacetimeGrid::Mink4 { t, r: rax, sphere } = grid else { unreachable!() };
                if !is_lattice(g.translation[0], t.step) {
                    return Err(Error::Unsupported("3+1 rotation checks need a lattice time shift".into()));
                }
                let shift = (g.translation[0] / t.step).round() as i64;
                let field2 = evaluate_field(&moved, k, grid)?;
                let Homogeneous::Rotation(u) = g.homogeneous else { unreachable!() };
                let na = sphere.len();
                for &i in &sample {
                    let it = i / (rax.len * na);
                    let ir = (i / na) % rax.len;
                    let it2 = it as i64 + shift;
                    if it2 < 0 || it2 >= t.len as i64 {
                        continue;
                    }
                    let dir = u.rotate(sphere.direction(i % na));
                    let v = field2.polar_density(it2 as usize, ir, dir)?;
                    deviation = deviation.max((v - rho.values[i]).abs());
                }
            }
            _ => {
                let pts: Vec<Vec<f64>> = sample.iter().map(|&i| g.act_on_point(&grid.point(i))).collect();
                let vals = oracle_direct_field(&moved, k, &pts)?;
                let omega: Vec<f64> = k.gammas().iter().map(|p| p.weight).collect();
                let n_wave = vals.first().map_or(1, |v| v.len() / omega.len());
                for (j, &i) in sample.iter().enumerate() {
                    let v: f64 = vals[j].iter().enumerate().map(|(c, z)| omega[c / n_wave] * z.norm_sqr()).sum();
                    deviation = deviation.max((v - rho.values[i]).abs());
                }
            }
        }
        r.put("points_compared", sample.len() as f64);
    }
    r.put("max_deviation", deviation);
    r.put("max_density", max_rho);
    r.pass = deviation <= tol;
    Ok(r)
}

type Shift = Box<dyn Fn(usize) -> Option<usize>>;

/// Index map `x -> x + y` for a pure translation by whole grid steps.
fn lattice_shift(grid: &SpacetimeGrid, g: &PoincareElement) -> Option<Shift> {
    if g.homogeneous != Homogeneous::Identity {
        return None;
    }
    let y = g.translation.clone();
    match grid.clone() {
        SpacetimeGrid::Time1 { t } => {
            is_lattice(y[0], t.step).then(|| {
                let s = (y[0] / t.step).round() as i64;
                Box::new(move |i: usize| {
                    let j = i as i64 + s;
                    (j >= 0 && j < t.len as i64).then_some(j as usize)
                }) as Shift
            })
        }
        SpacetimeGrid::Mink2 { t, x } => (is_lattice(y[0], t.step) && is_lattice(y[1], x.step)).then(|| {
            let (s0, s1) = ((y[0] / t.step).round() as i64, (y[1] / x.step).round() as i64);
            Box::new(move |i: usize| {
                let (a, b) = ((i / x.len) as i64 + s0, (i % x.len) as i64 + s1);
                (a >= 0 && a < t.len as i64 && b >= 0 && b < x.len as i64).then(|| a as usize * x.len + b as usize)
            }) as Shift
        }),
        SpacetimeGrid::Mink4 { t, r, sphere } => {
            (y[1..].iter().all(|v| *v == 0.0) && is_lattice(y[0], t.step)).then(|| {
                let s = (y[0] / t.step).round() as i64;
                let block = r.len * sphere.len();
                Box::new(move |i: usize| {
                    let it = (i / block) as i64 + s;
                    (it >= 0 && it < t.len as i64).then(|| it as usize * block + i % block)
                }) as Shift
            })
        }
    }
}

/// Strict positivity on a seeded random state: `rho >= 0` everywhere and
/// every grid cell in the central half of the box has positive probability.
pub fn check_positivity(
    k: &KernelFamily,
    state_grid: &MassShellGrid,
    grid: &SpacetimeGrid,
    seed: u64,
) -> Result<CheckResult> {
    let psi = random_state(state_grid, k.n_sigma(), seed)?;
    check_positivity_of(&psi, k, grid, &format!("random state seed {seed}"))
}

pub fn check_positivity_of(psi: &WaveFunction, k: &KernelFamily, grid: &SpacetimeGrid, provenance: &str) -> Result<CheckResult> {
    if !(psi.norm_squared() > 0.0) {
        return Err(Error::InvalidState("positivity is asserted for nonzero states only".into()));
    }
    let mut r = CheckResult::new("positivity", 0.0, provenance);
    let rho = rho_of(psi, k, grid)?;
    let min_rho = rho.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let cells = central_points(grid);
    let min_cell = cells.iter().map(|&i| rho.values[i] * grid.weight(i)).fold(f64::INFINITY, f64::min);
    r.put("min_density", min_rho);
    r.put("min_cell_probability", min_cell);
    r.put("cells", cells.len() as f64);
    r.pass = min_rho >= 0.0 && min_cell > 0.0;
    Ok(r)
}

/// `|mean(U(y) psi) - mean(psi) - y|` per coordinate.
pub fn check_first_moment_shift(
    psi: &WaveFunction,
    k: &KernelFamily,
    grid: &SpacetimeGrid,
    y: &[f64],
    tol: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("first_moment_shift", tol, &format!("{:?} state, y = {y:?}", psi.dim()));
    let (moved, lost) = apply_translation_with_loss(psi, y)?;
    let m0 = coordinate_moments(&rho_of(psi, k, grid)?);
    let m1 = coordinate_moments(&rho_of(&moved, k, grid)?);
    let mut worst: f64 = 0.0;
    for (a, ya) in y.iter().enumerate() {
        let shift = m1.mean[a] - m0.mean[a];
        r.put(&format!("shift_{a}"), shift);
        worst = worst.max((shift - ya).abs());
    }
    r.put("max_deviation", worst);
    r.put("translation_norm_loss", lost);
    r.put("box_shell_residual", m0.boundary_residual.max(m1.boundary_residual));
    r.pass = worst <= tol;
    Ok(r)
}

/// Default margin for "strictly inside (0, 1)".
pub const NON_PROJECTOR_DELTA: f64 = 1e-3;

/// Spectrum of the Galerkin matrix of `tau(I)`: passes iff it lies in
/// `[-bound_tol, 1 + bound_tol]` and some eigenvalue is in `(delta, 1 - delta)`.
pub fn check_non_projector(
    k: &KernelFamily,
    grid: &SpacetimeGrid,
    region: &EventRegion,
    basis: &[WaveFunction],
    delta: f64,
    bound_tol: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("non_projector", bound_tol, &format!("{} basis states", basis.len()));
    let tau = tau_matrix(k, grid, region, basis)?;
    for (i, e) in tau.eigenvalues.iter().enumerate() {
        r.put(&format!("eigenvalue_{i}"), *e);
    }
    let inside = tau.eigenvalues.iter().filter(|e| **e > delta && **e < 1.0 - delta).count();
    let bounded = tau.eigenvalues.iter().all(|e| *e >= -bound_tol && *e <= 1.0 + bound_tol);
    r.put("interior_eigenvalues", inside as f64);
    r.put("delta", delta);
    if inside == 0 && tau.eigenvalues.iter().all(|e| *e >= 1.0 - delta) {
        r.notes.push("projection-like at box scale: the region covers the support".into());
    }
    if tau.clipped {
        r.notes.push("region clipped to the grid box".into());
    }
    r.pass = bounded && inside > 0;
    Ok(r)
}

/// `max_x |rho_{K V}(psi, x) - rho_K(V psi, x)|`.
pub fn check_kernel_conjugation(
    psi: &WaveFunction,
    k: &KernelFamily,
    v: &[DMatrix<Complex64>],
    grid: &SpacetimeGrid,
    tol: f64,
) -> Result<CheckResult> {
    let mut r = CheckResult::new("kernel_conjugation", tol, &format!("{} channels", k.n_sigma()));
    let kv = kernel_conjugate(k, v)?;
    let a = rho_of(psi, &kv, grid)?;
    let b = rho_of(&psi.mix_channels(v)?, k, grid)?;
    let dev = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let max = a.values.iter().cloned().fold(0.0, f64::max);
    r.put("max_deviation", dev);
    r.put("max_density", max);
    r.pass = dev <= tol;
    Ok(r)
}

/// Isometry condition on the kernel, with the worst mass node and entry.
pub fn check_isometry(k: &KernelFamily, tol: f64) -> CheckResult {
    let rep = validate_isometry(k, tol);
    let mut r = CheckResult::new("isometry", tol, &format!("{} labels, {} channels", k.n_gamma(), k.n_sigma()));
    r.put("max_gram_deviation", rep.max_value);
    r.put("worst_mass", rep.worst.mass);
    if !rep.pass {
        let (a, b) = rep.worst.entry.unwrap_or((0, 0));
        r.notes.push(format!("worst at mass node {} (mu = {}), entry ({a}, {b})", rep.worst.mass_index, rep.worst.mass));
    }
    r.pass = rep.pass;
    r
}

/// Kernel scaled by `s`: the Gram bound holds with `lambda_max = s^2` and the
/// total probability is `s^2 ||psi||^2`.
pub fn check_subnormalization(
    psi: &WaveFunction,
    k: &KernelFamily,
    grid: &SpacetimeGrid,
    s: f64,
    tol: f64,
) -> Result<CheckResult> {
    let ks = k.scaled(s)?;
    let rep = validate_subnormalization(&ks, tol);
    let total = rho_of(psi, &ks, grid)?.total();
    let expected = s * s * psi.norm_squared();
    let mut r = CheckResult::new("subnormalization", tol, &format!("scale {s}"));
    r.put("lambda_max", rep.max_value);
    r.put("total", total);
    r.put("expected_total", expected);
    r.put("deviation", (total - expected).abs());
    r.pass = rep.pass && (total - expected).abs() <= tol && (rep.max_value - s * s).abs() <= tol;
    Ok(r)
}

/// Total probability over the region `[a, b]` in the first coordinate and
/// everything in the others.
pub fn slab(dim: SpacetimeDim, a: Option<f64>, b: Option<f64>) -> EventRegion {
    let d = dim.coords();
    let mut lo = vec![None; d];
    let mut hi = vec![None; d];
    lo[0] = a;
    hi[0] = b;
    EventRegion::single(EventBox { lo, hi })
}

/// Probability of `region` for `psi`.
pub fn region_probability(psi: &WaveFunction, k: &KernelFamily, grid: &SpacetimeGrid, region: &EventRegion) -> Result<f64> {
    Ok(probability(&rho_of(psi, k, grid)?, region)?.probability)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{random_isometric_kernel, random_unitary};
    use crate::state::{make_test_state, AxisGrid, StateRecipe};

    fn time_case() -> (WaveFunction, KernelFamily, SpacetimeGrid) {
        let grid = MassShellGrid::time1(AxisGrid::midpoint(0.5, 8.5, 128).unwrap()).unwrap();
        let psi = make_test_state(
            &StateRecipe::GaussianEnergy { center: 4.5, width: 0.4, channel_weights: Some(vec![0.6, 0.8]) },
            &grid,
        )
        .unwrap();
        let k = random_isometric_kernel(SpacetimeDim::Time1, 2, 3, grid.mass_axis().nodes(), 2).unwrap();
        let st = SpacetimeGrid::conjugate_time(grid.mass_axis(), 256).unwrap();
        (psi, k, st)
    }

    #[test]
    fn time_axis_battery() {
        let (psi, k, st) = time_case();
        assert!(check_normalization(&psi, &k, &st, 1e-10).unwrap().pass);
        let sub = check_normalization(&psi, &k.scaled(0.5).unwrap(), &st, 1e-10).unwrap();
        assert!(sub.pass && (sub.measured["position_total"] - 0.25).abs() < 1e-10);
        let SpacetimeGrid::Time1 { t } = &st else { panic!() };
        let g = PoincareElement::translation(vec![7.0 * t.step]);
        let c = check_covariance(&psi, &k, &st, &g, 1e-14, 0).unwrap();
        assert!(c.pass, "{}", c.summary());
        let off = PoincareElement::translation(vec![1.3]);
        assert!(check_covariance(&psi, &k, &st, &off, 1e-12, 0).unwrap().pass);
        let m = check_first_moment_shift(&psi, &k, &st, &[1.5], 1e-10).unwrap();
        assert!(m.pass, "{}", m.summary());
        let zero = check_first_moment_shift(&psi, &k, &st, &[0.0], 0.0).unwrap();
        assert_eq!(zero.measured["max_deviation"], 0.0);
        assert!(check_positivity(&k, psi.grid(), &st, 5).unwrap().pass);
        assert!(check_isometry(&k, 1e-12).pass);
        let half = check_subnormalization(&psi, &k, &st, 0.5, 1e-10).unwrap();
        assert!(half.pass && (half.measured["lambda_max"] - 0.25).abs() < 1e-12);
        assert!(check_positivity_of(&psi.scaled(Complex64::new(0.0, 0.0)), &k, &st, "zero").is_err());
    }

    #[test]
    fn conjugation_by_phases_and_unitaries() {
        let (psi, k, st) = time_case();
        let n = psi.grid().mass_axis().len();
        let v: Vec<_> = (0..n).map(|m| random_unitary(2, m as u64)).collect();
        assert!(check_kernel_conjugation(&psi, &k, &v, &st, 1e-12).unwrap().pass);
        let id: Vec<_> = (0..n).map(|_| DMatrix::identity(2, 2)).collect();
        assert_eq!(check_kernel_conjugation(&psi, &k, &id, &st, 0.0).unwrap().measured["max_deviation"], 0.0);
    }

    #[test]
    fn half_line_is_not_a_projection() {
        let (psi, k, st) = time_case();
        let grid = psi.grid().clone();
        let mut basis: Vec<WaveFunction> = Vec::new();
        for c in [3.0, 4.0, 5.0] {
            let mut b = make_test_state(
                &StateRecipe::GaussianEnergy { center: c, width: 0.4, channel_weights: Some(vec![0.6, 0.8]) },
                &grid,
            )
            .unwrap();
            for e in &basis {
                let ov = e.inner(&b).unwrap();
                b = b.combine(Complex64::new(1.0, 0.0), e, -ov).unwrap();
            }
            basis.push(b.normalized().unwrap());
        }
        let half = slab(SpacetimeDim::Time1, Some(0.0), None);
        let r = check_non_projector(&k, &st, &half, &basis, NON_PROJECTOR_DELTA, 1e-8).unwrap();
        assert!(r.pass, "{}", r.summary());
        let full = check_non_projector(&k, &st, &EventRegion::everything(SpacetimeDim::Time1), &basis, 1e-3, 1e-8).unwrap();
        assert!(!full.pass && !full.notes.is_empty());
    }
}
