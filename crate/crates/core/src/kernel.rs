//! Kernel families `F_{gamma sigma}(mu)` over a finite label set with weights
//! `omega_gamma`, and their normalization checks.
//!
//! The event density is normalized exactly when, at every mass node, the
//! weighted Gram matrix `G_{sigma sigma'} = sum_gamma omega_gamma
//! conj(F_{gamma sigma}) F_{gamma sigma'}` is the identity. A sub-normalized
//! density only needs `G <= 1`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lorentz::GammaLabel;
use crate::state::{SpacetimeDim, WaveFunction};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    Normalized,
    Subnormalized,
}

/// Label `gamma` with its weight `omega_gamma > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPoint {
    pub label: GammaLabel,
    pub weight: f64,
}

/// Default Gram tolerance for analytically built kernels.
pub const ANALYTIC_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelFamily {
    dim: SpacetimeDim,
    gammas: Vec<GammaPoint>,
    n_sigma: usize,
    mass_nodes: Vec<f64>,
    /// Layout `[(mass * n_gamma + gamma) * n_sigma + sigma]`.
    values: Vec<Complex64>,
    mode: KernelMode,
    tolerance: f64,
}

impl KernelFamily {
    pub fn new(
        dim: SpacetimeDim,
        gammas: Vec<GammaPoint>,
        n_sigma: usize,
        mass_nodes: Vec<f64>,
        values: Vec<Complex64>,
        mode: KernelMode,
    ) -> Result<Self> {
        if gammas.is_empty() || n_sigma == 0 || mass_nodes.is_empty() {
            return Err(Error::InvalidKernel("kernel needs labels, channels and mass nodes".into()));
        }
        if values.len() != gammas.len() * n_sigma * mass_nodes.len() {
            return Err(Error::InvalidKernel(format!(
                "expected {} kernel values, got {}",
                gammas.len() * n_sigma * mass_nodes.len(),
                values.len()
            )));
        }
        for g in &gammas {
            if !(g.weight > 0.0) || !g.weight.is_finite() {
                return Err(Error::InvalidKernel(format!("label weight {} is not positive", g.weight)));
            }
            if dim != SpacetimeDim::Time1 {
                g.label.validate()?;
            }
            if dim == SpacetimeDim::Mink4 && (g.label.nu != 0 || g.label.m != 0) {
                return Err(Error::Unsupported("3+1 kernels are implemented for M = 0 labels only".into()));
            }
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidKernel("non-finite kernel value".into()));
        }
        Ok(KernelFamily { dim, gammas, n_sigma, mass_nodes, values, mode, tolerance: ANALYTIC_TOLERANCE })
    }

    /// `F = 1`: one label per channel.
    pub fn trivial(dim: SpacetimeDim, n_sigma: usize, mass_nodes: &[f64], q: f64) -> Result<Self> {
        let gammas = (0..n_sigma).map(|_| GammaPoint { label: GammaLabel::principal(0, q), weight: 1.0 }).collect();
        let mut values = vec![Complex64::new(0.0, 0.0); n_sigma * n_sigma * mass_nodes.len()];
        for m in 0..mass_nodes.len() {
            for s in 0..n_sigma {
                values[(m * n_sigma + s) * n_sigma + s] = Complex64::new(1.0, 0.0);
            }
        }
        KernelFamily::new(dim, gammas, n_sigma, mass_nodes.to_vec(), values, KernelMode::Normalized)
    }

    /// Tolerance used when the kernel is checked before evaluation.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn dim(&self) -> SpacetimeDim {
        self.dim
    }

    pub fn gammas(&self) -> &[GammaPoint] {
        &self.gammas
    }

    pub fn n_gamma(&self) -> usize {
        self.gammas.len()
    }

    pub fn n_sigma(&self) -> usize {
        self.n_sigma
    }

    pub fn mass_nodes(&self) -> &[f64] {
        &self.mass_nodes
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, mass: usize, gamma: usize, sigma: usize) -> Complex64 {
        self.values[(mass * self.gammas.len() + gamma) * self.n_sigma + sigma]
    }

    /// `F(mu_m)` as an `n_gamma x n_sigma` matrix.
    pub fn matrix(&self, mass: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.gammas.len(), self.n_sigma, |g, s| self.get(mass, g, s))
    }

    /// Weighted Gram matrix at one mass node.
    pub fn gram(&self, mass: usize) -> DMatrix<Complex64> {
        let f = self.matrix(mass);
        let w = DMatrix::from_fn(self.gammas.len(), self.gammas.len(), |a, b| {
            if a == b { Complex64::new(self.gammas[a].weight, 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        f.adjoint() * w * f
    }

    /// `s F`, declared sub-normalized when `|s| < 1`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !s.is_finite() || s.abs() > 1.0 {
            return Err(Error::InvalidParameter(format!("scale {s} must lie in [-1, 1]")));
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|z| *z *= s);
        if s.abs() < 1.0 {
            out.mode = KernelMode::Subnormalized;
        }
        Ok(out)
    }

    /// Check that `psi` lives on the mass nodes and channels of this kernel.
    pub fn check_state(&self, psi: &WaveFunction) -> Result<()> {
        if psi.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!("{:?} state with a {:?} kernel", psi.dim(), self.dim)));
        }
        if psi.n_channels() != self.n_sigma {
            return Err(Error::DimensionMismatch(format!(
                "state has {} channels, kernel {}",
                psi.n_channels(),
                self.n_sigma
            )));
        }
        if psi.grid().mass_axis().nodes() != self.mass_nodes.as_slice() {
            return Err(Error::DimensionMismatch("kernel is sampled on different mass nodes than the state".into()));
        }
        Ok(())
    }

    /// Validate according to the declared mode at the kernel's tolerance.
    pub fn ensure_valid(&self) -> Result<GramReport> {
        let report = match self.mode {
            KernelMode::Normalized => validate_isometry(self, self.tolerance),
            KernelMode::Subnormalized => validate_subnormalization(self, self.tolerance),
        };
        if !report.pass {
            return Err(Error::UnvalidatedKernel(format!(
                "{:?} check failed, worst value {:e} at {:?}",
                self.mode, report.max_value, report.worst
            )));
        }
        Ok(report)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramMetric {
    /// `max |G - I|` over entries.
    MaxDeviation,
    /// Largest eigenvalue of `G`.
    MaxEigenvalue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeGram {
    pub mass_index: usize,
    pub mass: f64,
    pub value: f64,
}

/// Where the worst Gram value occurred. `entry` is the offending matrix
/// entry for the deviation metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub mass_index: usize,
    pub mass: f64,
    pub entry: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub metric: GramMetric,
    pub tolerance: f64,
    pub nodes: Vec<NodeGram>,
    pub max_value: f64,
    pub min_eigenvalue: Option<f64>,
    pub worst: Offender,
    pub pass: bool,
}

/// `pass` iff `max |G(mu) - I| <= tol` at every mass node.
pub fn validate_isometry(k: &KernelFamily, tol: f64) -> GramReport {
    let per: Vec<(f64, (usize, usize))> = (0..k.mass_nodes.len())
        .into_par_iter()
        .map(|m| {
            let g = k.gram(m);
            let mut worst = (0.0, (0, 0));
            for a in 0..g.nrows() {
                for b in 0..g.ncols() {
                    let id = if a == b { 1.0 } else { 0.0 };
                    let d = (g[(a, b)] - id).norm();
                    if d > worst.0 {
                        worst = (d, (a, b));
                    }
                }
            }
            worst
        })
        .collect();
    let (mi, &(max_value, entry)) =
        per.iter().enumerate().fold((0, &per[0]), |best, cur| if cur.1 .0 > best.1 .0 { cur } else { best });
    GramReport {
        metric: GramMetric::MaxDeviation,
        tolerance: tol,
        nodes: per
            .iter()
            .enumerate()
            .map(|(i, (v, _))| NodeGram { mass_index: i, mass: k.mass_nodes[i], value: *v })
            .collect(),
        max_value,
        min_eigenvalue: None,
        worst: Offender { mass_index: mi, mass: k.mass_nodes[mi], entry: Some(entry) },
        pass: max_value <= tol,
    }
}

/// `pass` iff `lambda_max(G(mu)) <= 1 + tol` at every mass node, which is the
/// quadratic-form bound `sum_gamma omega |sum_sigma F c_sigma|^2 <= |c|^2`.
pub fn validate_subnormalization(k: &KernelFamily, tol: f64) -> GramReport {
    let per: Vec<(f64, f64)> = (0..k.mass_nodes.len())
        .into_par_iter()
        .map(|m| {
            let eig = SymmetricEigen::new(k.gram(m)).eigenvalues;
            (eig.max(), eig.min())
        })
        .collect();
    let (mi, max_value) = per
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v.0 > best.1 { (i, v.0) } else { best });
    let min_eigenvalue = per.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    GramReport {
        metric: GramMetric::MaxEigenvalue,
        tolerance: tol,
        nodes: per
            .iter()
            .enumerate()
            .map(|(i, v)| NodeGram { mass_index: i, mass: k.mass_nodes[i], value: v.0 })
            .collect(),
        max_value,
        min_eigenvalue: Some(min_eigenvalue),
        worst: Offender { mass_index: mi, mass: k.mass_nodes[mi], entry: None },
        pass: max_value <= 1.0 + tol,
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im)
    })
}

/// Gram-Schmidt orthonormalization of the columns (QR with a positive
/// diagonal in `R`, which makes the result unique and smooth in the input).
fn orthonormal_columns(a: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..q.nrows() {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Seeded Haar-like random unitary of size `n`.
pub fn random_unitary(n: usize, seed: u64) -> DMatrix<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    orthonormal_columns(gaussian_matrix(&mut rng, n, n))
}

/// Seeded random kernel whose Gram matrix is the identity at every mass
/// node. At node `mu` the columns of `A + t(mu) B` are orthonormalized, with
/// `t` the node's relative position, so `F` varies smoothly with the mass.
/// Labels get `q` in `[0.5, 2]` and unit weights.
pub fn random_isometric_kernel(
    dim: SpacetimeDim,
    n_sigma: usize,
    n_gamma: usize,
    mass_nodes: &[f64],
    seed: u64,
) -> Result<KernelFamily> {
    if n_gamma < n_sigma {
        return Err(Error::InvalidKernel(format!("an isometry needs n_gamma >= n_sigma, got {n_gamma} < {n_sigma}")));
    }
    if n_sigma == 0 || mass_nodes.is_empty() {
        return Err(Error::InvalidKernel("empty kernel".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(&mut rng, n_gamma, n_sigma);
    let b = gaussian_matrix(&mut rng, n_gamma, n_sigma);
    let gammas = (0..n_gamma)
        .map(|_| {
            let u: f64 = rand::Rng::random_range(&mut rng, 0.5..2.0);
            GammaPoint { label: GammaLabel::principal(0, u), weight: 1.0 }
        })
        .collect();
    let (lo, hi) = (mass_nodes[0], mass_nodes[mass_nodes.len() - 1]);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut values = Vec::with_capacity(n_gamma * n_sigma * mass_nodes.len());
    for mu in mass_nodes {
        let t = (mu - lo) / span;
        let q = orthonormal_columns(&a + &b * Complex64::new(t, 0.0));
        for g in 0..n_gamma {
            for s in 0..n_sigma {
                values.push(q[(g, s)]);
            }
        }
    }
    KernelFamily::new(dim, gammas, n_sigma, mass_nodes.to_vec(), values, KernelMode::Normalized)
}

/// `F'(mu) = F(mu) V(mu)` for unitaries `V(mu)` acting on the channel index.
pub fn kernel_conjugate(k: &KernelFamily, v: &[DMatrix<Complex64>]) -> Result<KernelFamily> {
    if v.len() != k.mass_nodes.len() {
        return Err(Error::DimensionMismatch(format!("{} unitaries for {} mass nodes", v.len(), k.mass_nodes.len())));
    }
    let mut out = k.clone();
    for (m, vm) in v.iter().enumerate() {
        if vm.nrows() != k.n_sigma || vm.ncols() != k.n_sigma {
            return Err(Error::DimensionMismatch("unitary size differs from channel count".into()));
        }
        let defect = (vm.adjoint() * vm - DMatrix::identity(k.n_sigma, k.n_sigma))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if defect > 1e-10 {
            return Err(Error::NotUnitary(defect));
        }
        let f = k.matrix(m) * vm;
        for g in 0..k.n_gamma() {
            for s in 0..k.n_sigma {
                out.values[(m * k.n_gamma() + g) * k.n_sigma + s] = f[(g, s)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(n: usize) -> Vec<f64> {
        (0..n).map(|i| 1.0 + 0.1 * i as f64).collect()
    }

    fn single_node(gammas: usize, sigma: usize, vals: &[f64]) -> KernelFamily {
        let g = (0..gammas).map(|_| GammaPoint { label: GammaLabel::principal(0, 1.0), weight: 1.0 }).collect();
        let v = vals.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        KernelFamily::new(SpacetimeDim::Time1, g, sigma, vec![1.0], v, KernelMode::Normalized).unwrap()
    }

    #[test]
    fn phase_kernel_is_exactly_isometric() {
        let mut k = KernelFamily::trivial(SpacetimeDim::Time1, 1, &nodes(5), 0.0).unwrap();
        k.values.iter_mut().enumerate().for_each(|(i, z)| *z = Complex64::from_polar(1.0, 0.3 * i as f64));
        let r = validate_isometry(&k, 0.0);
        assert!(r.pass);
        assert!(r.max_value < 1e-15);
    }

    #[test]
    fn rotation_pair_and_rank_one_examples() {
        for alpha in [0.0, 0.4, 1.3, 2.9] {
            let k = single_node(2, 1, &[f64::cos(alpha), f64::sin(alpha)]);
            assert!(validate_isometry(&k, 1e-15).pass);
        }
        let bad = single_node(1, 2, &[1.0, 1.0]);
        let r = validate_isometry(&bad, 1e-10);
        assert!(!r.pass);
        assert!((r.max_value - 1.0).abs() < 1e-15);
        assert_eq!(r.worst.entry, Some((0, 1)));
    }

    #[test]
    fn subnormalization_bounds() {
        let k = random_isometric_kernel(SpacetimeDim::Mink2, 2, 3, &nodes(8), 5).unwrap();
        let r = validate_subnormalization(&k.scaled(0.5).unwrap(), 1e-12);
        assert!(r.pass);
        assert!((r.max_value - 0.25).abs() < 1e-12);
        let r1 = validate_subnormalization(&k, 1e-12);
        assert!(r1.pass && (r1.max_value - 1.0).abs() < 1e-12);
        let r2 = validate_subnormalization(&single_node(2, 1, &[1.0, 1.0]), 1e-12);
        assert!(!r2.pass && (r2.max_value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn random_kernels_are_isometric_and_deterministic() {
        for seed in 0..20 {
            let k = random_isometric_kernel(SpacetimeDim::Time1, 3, 5, &nodes(16), seed).unwrap();
            assert!(validate_isometry(&k, 1e-12).pass);
        }
        let a = random_isometric_kernel(SpacetimeDim::Mink2, 2, 2, &nodes(4), 9).unwrap();
        let b = random_isometric_kernel(SpacetimeDim::Mink2, 2, 2, &nodes(4), 9).unwrap();
        assert_eq!(a, b);
        let one = random_isometric_kernel(SpacetimeDim::Time1, 1, 1, &nodes(6), 2).unwrap();
        assert!(one.values.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
        assert!(random_isometric_kernel(SpacetimeDim::Time1, 3, 2, &nodes(4), 0).is_err());
    }

    #[test]
    fn random_kernel_is_smooth_in_mass() {
        let k = random_isometric_kernel(SpacetimeDim::Time1, 2, 3, &nodes(200), 11).unwrap();
        let jump = (1..200)
            .map(|m| (k.matrix(m) - k.matrix(m - 1)).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        assert!(jump < 0.05, "jump {jump}");
    }

    #[test]
    fn conjugation_preserves_isometry_and_inverts() {
        let k = random_isometric_kernel(SpacetimeDim::Time1, 3, 4, &nodes(6), 1).unwrap();
        let v: Vec<_> = (0..6).map(|m| random_unitary(3, 100 + m)).collect();
        let kv = kernel_conjugate(&k, &v).unwrap();
        assert!(validate_isometry(&kv, 1e-12).pass);
        let vinv: Vec<_> = v.iter().map(|m| m.adjoint()).collect();
        let back = kernel_conjugate(&kv, &vinv).unwrap();
        let d = k.values.iter().zip(&back.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-12);
        let id: Vec<_> = (0..6).map(|_| DMatrix::identity(3, 3)).collect();
        assert_eq!(kernel_conjugate(&k, &id).unwrap(), k);
        let mut bad = id.clone();
        bad[2][(0, 0)] = Complex64::new(2.0, 0.0);
        assert!(matches!(kernel_conjugate(&k, &bad), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn report_serializes() {
        let k = KernelFamily::trivial(SpacetimeDim::Time1, 2, &nodes(3), 0.0).unwrap();
        let json = serde_json::to_string(&validate_isometry(&k, 1e-10)).unwrap();
        assert!(json.contains("\"pass\":true"));
    }
}
