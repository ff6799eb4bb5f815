//! Event densities and the quantities integrated from them.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{evaluate_field, IntertwinedField};
use super::grid::{EventRegion, SpacetimeGrid};
use crate::kernel::KernelFamily;
use crate::state::WaveFunction;
use crate::{Error, Result};

/// `rho(x) = sum_gamma omega_gamma sum_{ln} |Psi_{gamma ln}(x)|^2` on grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub grid: SpacetimeGrid,
    pub values: Vec<f64>,
}

impl DensityField {
    /// `sum_x rho(x) w(x)` over the whole grid.
    pub fn total(&self) -> f64 {
        self.values.iter().enumerate().map(|(i, v)| v * self.grid.weight(i)).sum()
    }
}

pub fn density(field: &IntertwinedField) -> DensityField {
    let n = field.grid().len();
    let parts: Vec<Vec<f64>> = (0..field.n_gamma() * field.n_wave())
        .into_par_iter()
        .map(|c| {
            let (g, w) = (c / field.n_wave(), c % field.n_wave());
            let om = field.omega()[g];
            field.component(g, w).iter().map(|z| om * z.norm_sqr()).collect()
        })
        .collect();
    // Fixed summation order keeps results independent of the thread count.
    let mut values = vec![0.0; n];
    for p in &parts {
        for (v, x) in values.iter_mut().zip(p) {
            *v += x;
        }
    }
    DensityField { grid: field.grid().clone(), values }
}

/// `sum_gamma omega_gamma sum_{ln} conj(Psi^a) Psi^b` on grid points, the
/// density of the sesquilinear form `(a, tau(.) b)`.
pub fn cross_density(a: &IntertwinedField, b: &IntertwinedField) -> Result<Vec<Complex64>> {
    if a.grid() != b.grid() || a.omega() != b.omega() || a.n_wave() != b.n_wave() {
        return Err(Error::DimensionMismatch("fields were evaluated with different grids or kernels".into()));
    }
    let n = a.grid().len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for g in 0..a.n_gamma() {
        for w in 0..a.n_wave() {
            let (fa, fb) = (a.component(g, w), b.component(g, w));
            for i in 0..n {
                out[i] += a.omega()[g] * fa[i].conj() * fb[i];
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityReport {
    pub probability: f64,
    /// The region reached outside the sampled box and was clipped to it.
    pub clipped: bool,
}

/// `int_I rho` by cell-overlap quadrature (point membership on 3+1 grids).
pub fn probability(rho: &DensityField, region: &EventRegion) -> Result<ProbabilityReport> {
    region.check(rho.grid.dim())?;
    let probability = rho
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| v * rho.grid.weight(i) * region.fraction(&rho.grid, i))
        .sum();
    Ok(ProbabilityReport { probability, clipped: region.exceeds(&rho.grid) })
}

/// Moments of the density over the sampled box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// `int rho`.
    pub total: f64,
    /// `int x^a rho`.
    pub first: Vec<f64>,
    /// `int x^a x^b rho`.
    pub second: Vec<Vec<f64>>,
    /// `first / total`, the event coordinates.
    pub mean: Vec<f64>,
    /// Centered second moments divided by the total.
    pub covariance: Vec<Vec<f64>>,
    pub min_covariance_eigenvalue: f64,
    pub covariance_psd: bool,
    /// Probability carried by the outermost layer of grid cells.
    pub boundary_residual: f64,
    /// `max rho` on the boundary relative to `max rho`.
    pub boundary_ratio: f64,
    /// Set when the boundary ratio exceeds `1e-8`: the box truncates the density.
    pub truncated: bool,
}

pub fn coordinate_moments(rho: &DensityField) -> MomentReport {
    let d = rho.grid.dim().coords();
    let mut total = 0.0;
    let mut first = vec![0.0; d];
    let mut second = vec![vec![0.0; d]; d];
    let (mut boundary, mut bmax, mut max) = (0.0, 0.0f64, 0.0f64);
    for (i, v) in rho.values.iter().enumerate() {
        let w = rho.grid.weight(i) * v;
        let x = rho.grid.point(i);
        total += w;
        for a in 0..d {
            first[a] += x[a] * w;
            for b in 0..d {
                second[a][b] += x[a] * x[b] * w;
            }
        }
        max = max.max(*v);
        if rho.grid.on_boundary(i) {
            boundary += w;
            bmax = bmax.max(*v);
        }
    }
    let mean: Vec<f64> = first.iter().map(|f| f / total).collect();
    let covariance: Vec<Vec<f64>> =
        (0..d).map(|a| (0..d).map(|b| second[a][b] / total - mean[a] * mean[b]).collect()).collect();
    let cov = DMatrix::from_fn(d, d, |a, b| covariance[a][b]);
    let min_eig = SymmetricEigen::new(cov).eigenvalues.min();
    let scale = (0..d).map(|a| covariance[a][a].abs()).fold(0.0, f64::max);
    let boundary_ratio = if max > 0.0 { bmax / max } else { 0.0 };
    MomentReport {
        total,
        first,
        second,
        mean,
        covariance,
        min_covariance_eigenvalue: min_eig,
        covariance_psd: min_eig >= -1e-10 * scale.max(1e-300),
        boundary_residual: boundary,
        boundary_ratio,
        truncated: boundary_ratio > 1e-8,
    }
}

/// Galerkin matrix of `tau(I)` in an orthonormal basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauMatrix {
    /// Row-major `[re, im]` entries.
    pub entries: Vec<Vec<[f64; 2]>>,
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    pub clipped: bool,
}

impl TauMatrix {
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.entries.len();
        DMatrix::from_fn(n, n, |a, b| Complex64::new(self.entries[a][b][0], self.entries[a][b][1]))
    }
}

/// Basis Gram matrices may deviate from the identity by at most this much.
pub const BASIS_TOLERANCE: f64 = 1e-8;

/// `M_ab = int_I sum omega conj(Psi^a) Psi^b` for an orthonormal basis.
pub fn tau_matrix(
    k: &KernelFamily,
    grid: &SpacetimeGrid,
    region: &EventRegion,
    basis: &[WaveFunction],
) -> Result<TauMatrix> {
    region.check(grid.dim())?;
    let n = basis.len();
    if n == 0 {
        return Err(Error::NonOrthonormalBasis(1.0));
    }
    let mut dev: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let id = if a == b { 1.0 } else { 0.0 };
            dev = dev.max((basis[a].inner(&basis[b])? - id).norm());
        }
    }
    if dev > BASIS_TOLERANCE {
        return Err(Error::NonOrthonormalBasis(dev));
    }
    let fields: Vec<IntertwinedField> =
        basis.par_iter().map(|psi| evaluate_field(psi, k, grid)).collect::<Result<_>>()?;
    let weights: Vec<f64> = (0..grid.len()).map(|i| grid.weight(i) * region.fraction(grid, i)).collect();
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for a in 0..n {
        for b in a..n {
            let cd = cross_density(&fields[a], &fields[b])?;
            let v: Complex64 = cd.iter().zip(&weights).map(|(z, w)| z * w).sum();
            m[(a, b)] = v;
            m[(b, a)] = v.conj();
        }
        m[(a, a)].im = 0.0;
    }
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let entries = (0..n).map(|a| (0..n).map(|b| [m[(a, b)].re, m[(a, b)].im]).collect()).collect();
    Ok(TauMatrix { entries, eigenvalues, clipped: region.exceeds(grid) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::grid::EventBox;
    use crate::kernel::KernelFamily;
    use crate::state::{make_test_state, AxisGrid, MassShellGrid, SpacetimeDim, StateRecipe};

    fn setup() -> (WaveFunction, KernelFamily, SpacetimeGrid) {
        let grid = MassShellGrid::time1(AxisGrid::midpoint(0.5, 8.5, 128).unwrap()).unwrap();
        let psi = make_test_state(&StateRecipe::GaussianEnergy { center: 4.5, width: 0.4, channel_weights: None }, &grid)
            .unwrap();
        let k = KernelFamily::trivial(SpacetimeDim::Time1, 1, grid.mass_axis().nodes(), 0.0).unwrap();
        let st = SpacetimeGrid::conjugate_time(grid.mass_axis(), 256).unwrap();
        (psi, k, st)
    }

    #[test]
    fn density_is_single_mode_modulus() {
        let (psi, k, st) = setup();
        let f = evaluate_field(&psi, &k, &st).unwrap();
        let rho = density(&f);
        for (v, z) in rho.values.iter().zip(f.component(0, 0)) {
            assert_eq!(*v, z.norm_sqr());
        }
        assert!((rho.total() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn symmetric_density_splits_in_half() {
        let (psi, k, st) = setup();
        let rho = density(&evaluate_field(&psi, &k, &st).unwrap());
        let pos = EventRegion::single(EventBox { lo: vec![Some(0.0)], hi: vec![None] });
        let p = probability(&rho, &pos).unwrap();
        // |Psi(t)|^2 of a real Gaussian amplitude is even in t.
        assert!((p.probability - 0.5).abs() < 1e-12, "{}", p.probability);
        assert!(p.clipped);
        assert_eq!(probability(&rho, &EventRegion::empty()).unwrap().probability, 0.0);
        let m = coordinate_moments(&rho);
        assert!(m.mean[0].abs() < 1e-12);
        assert!(m.covariance_psd && !m.truncated);
        // Amplitude exp(-(E - c)^2 / (4 w^2)) gives |Psi(t)|^2 ~ exp(-2 w^2 t^2).
        assert!((m.covariance[0][0] - 1.0 / (4.0 * 0.16)).abs() < 1e-10, "{}", m.covariance[0][0]);
    }

    #[test]
    fn tau_matrix_on_full_and_empty_regions() {
        let (psi, k, st) = setup();
        let grid = psi.grid().clone();
        let b1 = make_test_state(&StateRecipe::GaussianEnergy { center: 3.0, width: 0.4, channel_weights: None }, &grid).unwrap();
        let overlap = psi.inner(&b1).unwrap();
        let b1 = b1.combine(Complex64::new(1.0, 0.0), &psi, -overlap).unwrap().normalized().unwrap();
        let basis = vec![psi.clone(), b1];
        let full = tau_matrix(&k, &st, &EventRegion::everything(SpacetimeDim::Time1), &basis).unwrap();
        let id = full.matrix() - DMatrix::identity(2, 2);
        assert!(id.iter().all(|z| z.norm() < 1e-12));
        let empty = tau_matrix(&k, &st, &EventRegion::empty(), &basis).unwrap();
        assert!(empty.eigenvalues.iter().all(|e| e.abs() < 1e-15));
        let dup = vec![psi.clone(), psi];
        assert!(matches!(tau_matrix(&k, &st, &EventRegion::empty(), &dup), Err(Error::NonOrthonormalBasis(_))));
    }
}
