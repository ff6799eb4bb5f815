//! Momentum-space wave functions on discretized mass shells and the unitary
//! Poincaré action on them.
//!
//! Units `hbar = 1`, metric `(+, -, -, -)`. On the shell of mass `mu` a
//! momentum is parametrized by its rapidity, `k^0 = mu cosh zeta`,
//! `|k| = mu sinh zeta`. The integration measures are `dE` (time axis),
//! `mu dmu dzeta` (1+1) and `mu^3 sinh^2 zeta dmu dzeta dOmega` (3+1).
//! In 3+1 dimensions the angular dependence is stored as partial waves.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lorentz::{su2_wigner_d, Su2};
use crate::special::{gauss_legendre, harmonic_count, harmonic_lm, spherical_harmonics};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacetimeDim {
    /// Time axis only.
    Time1,
    /// 1+1 Minkowski space.
    Mink2,
    /// 3+1 Minkowski space.
    Mink4,
}

impl SpacetimeDim {
    /// Number of spacetime coordinates.
    pub fn coords(self) -> usize {
        match self {
            SpacetimeDim::Time1 => 1,
            SpacetimeDim::Mink2 => 2,
            SpacetimeDim::Mink4 => 4,
        }
    }
}

/// One-dimensional quadrature: strictly increasing nodes, positive weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl AxisGrid {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::InvalidGrid("nodes and weights must be nonempty and of equal length".into()));
        }
        if nodes.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite node or weight".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("nodes must be strictly increasing".into()));
        }
        if weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidGrid("quadrature weights must be positive".into()));
        }
        Ok(AxisGrid { nodes, weights })
    }

    /// Midpoint rule with `n` cells on `[min, max]`.
    pub fn midpoint(min: f64, max: f64, n: usize) -> Result<Self> {
        if n == 0 || !(max > min) {
            return Err(Error::InvalidGrid(format!("bad midpoint grid [{min}, {max}] with {n} cells")));
        }
        let h = (max - min) / n as f64;
        let nodes = (0..n).map(|i| min + (i as f64 + 0.5) * h).collect();
        AxisGrid::new(nodes, vec![h; n])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Spacing if the nodes are equispaced and every weight equals it.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.nodes.len() < 2 {
            return None;
        }
        let h = (self.nodes[self.nodes.len() - 1] - self.nodes[0]) / (self.nodes.len() - 1) as f64;
        let tol = 1e-12 * h.abs().max(self.nodes[0].abs());
        let equispaced = self.nodes.iter().enumerate().all(|(i, x)| (x - (self.nodes[0] + i as f64 * h)).abs() <= tol);
        let equal_weights = self.weights.iter().all(|w| (w - h).abs() <= 1e-12 * h);
        (equispaced && equal_weights).then_some(h)
    }

    fn min(&self) -> f64 {
        self.nodes[0]
    }

    fn max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }
}

/// Discretized positive-energy spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dim", rename_all = "snake_case")]
pub enum MassShellGrid {
    Time1 { energy: AxisGrid },
    Mink2 { mass: AxisGrid, rapidity: AxisGrid },
    Mink4 { mass: AxisGrid, rapidity: AxisGrid, l_max: usize },
}

/// Four-momentum data at one grid node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentumNode {
    pub mass: f64,
    pub rapidity: f64,
    /// `k^0` (the energy on the time axis).
    pub energy: f64,
    /// `k^1` in 1+1, `|k|` in 3+1, zero on the time axis.
    pub spatial: f64,
}

fn check_spectrum(axis: &AxisGrid, what: &str) -> Result<()> {
    if axis.nodes().iter().any(|m| *m <= 0.0) {
        return Err(Error::InvalidGrid(format!("{what} nodes must be strictly positive")));
    }
    if axis.len() < 2 {
        return Err(Error::InvalidGrid(format!(
            "{what} spectrum needs at least 2 nodes (a single node is a discrete mass level)"
        )));
    }
    Ok(())
}

impl MassShellGrid {
    pub fn time1(energy: AxisGrid) -> Result<Self> {
        check_spectrum(&energy, "energy")?;
        Ok(MassShellGrid::Time1 { energy })
    }

    pub fn mink2(mass: AxisGrid, rapidity: AxisGrid) -> Result<Self> {
        check_spectrum(&mass, "mass")?;
        Ok(MassShellGrid::Mink2 { mass, rapidity })
    }

    pub fn mink4(mass: AxisGrid, rapidity: AxisGrid, l_max: usize) -> Result<Self> {
        check_spectrum(&mass, "mass")?;
        if rapidity.nodes().iter().any(|z| *z < 0.0) {
            return Err(Error::InvalidGrid("3+1 rapidities are radial and must be >= 0".into()));
        }
        if l_max > 12 {
            return Err(Error::InvalidGrid(format!("l_max = {l_max} exceeds the supported 12")));
        }
        Ok(MassShellGrid::Mink4 { mass, rapidity, l_max })
    }

    /// Re-run constructor validation (for deserialized grids).
    pub fn validated(self) -> Result<Self> {
        match self {
            MassShellGrid::Time1 { energy } => Self::time1(energy),
            MassShellGrid::Mink2 { mass, rapidity } => Self::mink2(mass, rapidity),
            MassShellGrid::Mink4 { mass, rapidity, l_max } => Self::mink4(mass, rapidity, l_max),
        }
    }

    pub fn dim(&self) -> SpacetimeDim {
        match self {
            MassShellGrid::Time1 { .. } => SpacetimeDim::Time1,
            MassShellGrid::Mink2 { .. } => SpacetimeDim::Mink2,
            MassShellGrid::Mink4 { .. } => SpacetimeDim::Mink4,
        }
    }

    /// Mass nodes (energy nodes on the time axis); kernels are sampled here.
    pub fn mass_axis(&self) -> &AxisGrid {
        match self {
            MassShellGrid::Time1 { energy } => energy,
            MassShellGrid::Mink2 { mass, .. } | MassShellGrid::Mink4 { mass, .. } => mass,
        }
    }

    pub fn rapidity_axis(&self) -> Option<&AxisGrid> {
        match self {
            MassShellGrid::Time1 { .. } => None,
            MassShellGrid::Mink2 { rapidity, .. } | MassShellGrid::Mink4 { rapidity, .. } => Some(rapidity),
        }
    }

    pub fn l_max(&self) -> Option<usize> {
        match self {
            MassShellGrid::Mink4 { l_max, .. } => Some(*l_max),
            _ => None,
        }
    }

    fn n_rapidity(&self) -> usize {
        self.rapidity_axis().map_or(1, AxisGrid::len)
    }

    /// Number of momentum nodes (energy, or mass x rapidity).
    pub fn node_count(&self) -> usize {
        self.mass_axis().len() * self.n_rapidity()
    }

    /// Number of angular components per node: 1, or `(l_max + 1)^2`.
    pub fn wave_count(&self) -> usize {
        self.l_max().map_or(1, harmonic_count)
    }

    /// Node index of `(mass index, rapidity index)`.
    pub fn node_index(&self, i_mass: usize, i_rapidity: usize) -> usize {
        i_mass * self.n_rapidity() + i_rapidity
    }

    pub fn mass_index(&self, node: usize) -> usize {
        node / self.n_rapidity()
    }

    pub fn rapidity_index(&self, node: usize) -> usize {
        node % self.n_rapidity()
    }

    pub fn momentum(&self, node: usize) -> MomentumNode {
        match self {
            MassShellGrid::Time1 { energy } => {
                let e = energy.nodes()[node];
                MomentumNode { mass: e, rapidity: 0.0, energy: e, spatial: 0.0 }
            }
            MassShellGrid::Mink2 { mass, rapidity } | MassShellGrid::Mink4 { mass, rapidity, .. } => {
                let mu = mass.nodes()[self.mass_index(node)];
                let z = rapidity.nodes()[self.rapidity_index(node)];
                MomentumNode { mass: mu, rapidity: z, energy: mu * z.cosh(), spatial: mu * z.sinh() }
            }
        }
    }

    /// Quadrature weight of the invariant measure at a node.
    pub fn measure(&self, node: usize) -> f64 {
        match self {
            MassShellGrid::Time1 { energy } => energy.weights()[node],
            MassShellGrid::Mink2 { mass, rapidity } => {
                let (i, j) = (self.mass_index(node), self.rapidity_index(node));
                mass.nodes()[i] * mass.weights()[i] * rapidity.weights()[j]
            }
            MassShellGrid::Mink4 { mass, rapidity, .. } => {
                let (i, j) = (self.mass_index(node), self.rapidity_index(node));
                let mu = mass.nodes()[i];
                let sh = rapidity.nodes()[j].sinh();
                mu * mu * mu * sh * sh * mass.weights()[i] * rapidity.weights()[j]
            }
        }
    }
}

/// Multiplicity channel `sigma` carrying spin `j = two_j / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub two_j: u32,
}

/// Sampled momentum-space state. Layout of `samples`:
/// `[(channel * waves + wave) * nodes + node]`, where `wave` is the
/// partial-wave index `l^2 + l + n` in 3+1 and always 0 otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    grid: MassShellGrid,
    channels: Vec<Channel>,
    samples: Vec<Complex64>,
}

impl WaveFunction {
    pub fn zeros(grid: MassShellGrid, n_channels: usize) -> Result<Self> {
        if n_channels == 0 {
            return Err(Error::InvalidState("at least one channel is required".into()));
        }
        let len = n_channels * grid.wave_count() * grid.node_count();
        Ok(WaveFunction {
            grid,
            channels: vec![Channel { two_j: 0 }; n_channels],
            samples: vec![Complex64::new(0.0, 0.0); len],
        })
    }

    pub fn from_samples(grid: MassShellGrid, channels: Vec<Channel>, samples: Vec<Complex64>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidState("at least one channel is required".into()));
        }
        if channels.iter().any(|c| c.two_j != 0) {
            return Err(Error::Unsupported("only spin-0 channels are implemented".into()));
        }
        if samples.len() != channels.len() * grid.wave_count() * grid.node_count() {
            return Err(Error::InvalidState(format!(
                "expected {} samples, got {}",
                channels.len() * grid.wave_count() * grid.node_count(),
                samples.len()
            )));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite sample".into()));
        }
        Ok(WaveFunction { grid, channels, samples })
    }

    pub fn grid(&self) -> &MassShellGrid {
        &self.grid
    }

    pub fn dim(&self) -> SpacetimeDim {
        self.grid.dim()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    fn offset(&self, channel: usize, wave: usize) -> usize {
        (channel * self.grid.wave_count() + wave) * self.grid.node_count()
    }

    pub fn get(&self, channel: usize, wave: usize, node: usize) -> Complex64 {
        self.samples[self.offset(channel, wave) + node]
    }

    pub fn set(&mut self, channel: usize, wave: usize, node: usize, value: Complex64) {
        let o = self.offset(channel, wave);
        self.samples[o + node] = value;
    }

    /// Samples of one `(channel, wave)` block over all nodes.
    pub fn block(&self, channel: usize, wave: usize) -> &[Complex64] {
        let o = self.offset(channel, wave);
        &self.samples[o..o + self.grid.node_count()]
    }

    fn block_mut(&mut self, channel: usize, wave: usize) -> &mut [Complex64] {
        let o = self.offset(channel, wave);
        let n = self.grid.node_count();
        &mut self.samples[o..o + n]
    }

    /// `(self, other)` with the grid measure, antilinear in `self`.
    pub fn inner(&self, other: &WaveFunction) -> Result<Complex64> {
        self.check_compatible(other)?;
        let nodes = self.grid.node_count();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, (a, b)) in self.samples.iter().zip(&other.samples).enumerate() {
            acc += a.conj() * b * self.grid.measure(i % nodes);
        }
        Ok(acc)
    }

    pub fn channel_norm_squared(&self, channel: usize) -> f64 {
        (0..self.grid.wave_count())
            .map(|w| {
                self.block(channel, w).iter().enumerate().map(|(i, z)| z.norm_sqr() * self.grid.measure(i)).sum::<f64>()
            })
            .sum()
    }

    /// `||psi||^2` with the invariant measure of the grid.
    pub fn norm_squared(&self) -> f64 {
        (0..self.n_channels()).map(|c| self.channel_norm_squared(c)).sum()
    }

    pub fn scaled(&self, factor: Complex64) -> WaveFunction {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|z| *z *= factor);
        out
    }

    /// `a self + b other`.
    pub fn combine(&self, a: Complex64, other: &WaveFunction, b: Complex64) -> Result<WaveFunction> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (z, w) in out.samples.iter_mut().zip(&other.samples) {
            *z = a * *z + b * w;
        }
        Ok(out)
    }

    pub fn normalized(&self) -> Result<WaveFunction> {
        let n = self.norm_squared();
        if !(n > 0.0) {
            return Err(Error::InvalidState("cannot normalize the zero state".into()));
        }
        Ok(self.scaled(Complex64::new(1.0 / n.sqrt(), 0.0)))
    }

    /// Apply a unitary on the channel index at every node:
    /// `psi'_sigma = sum_sigma' V_{sigma sigma'} psi_sigma'`.
    pub fn mix_channels(&self, unitaries: &[nalgebra::DMatrix<Complex64>]) -> Result<WaveFunction> {
        let n_mass = self.grid.mass_axis().len();
        if unitaries.len() != n_mass {
            return Err(Error::DimensionMismatch(format!("{} unitaries for {n_mass} mass nodes", unitaries.len())));
        }
        let ns = self.n_channels();
        let mut out = self.clone();
        for w in 0..self.grid.wave_count() {
            for node in 0..self.grid.node_count() {
                let v = &unitaries[self.grid.mass_index(node)];
                if v.nrows() != ns || v.ncols() != ns {
                    return Err(Error::DimensionMismatch("unitary size differs from channel count".into()));
                }
                for s in 0..ns {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for sp in 0..ns {
                        acc += v[(s, sp)] * self.get(sp, w, node);
                    }
                    out.set(s, w, node, acc);
                }
            }
        }
        Ok(out)
    }

    pub fn check_compatible(&self, other: &WaveFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::DimensionMismatch("states live on different grids".into()));
        }
        if self.channels != other.channels {
            return Err(Error::DimensionMismatch("states have different channel sets".into()));
        }
        Ok(())
    }
}

/// `||psi||^2`.
pub fn norm_squared(psi: &WaveFunction) -> f64 {
    psi.norm_squared()
}

/// Homogeneous part of a Poincaré element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Homogeneous {
    Identity,
    /// Spatial rotation, 3+1 only.
    Rotation(Su2),
    /// Boost with the given rapidity, 1+1 only.
    Boost(f64),
}

/// `(x, a)`: translation by `x` after the homogeneous transformation `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoincareElement {
    pub translation: Vec<f64>,
    pub homogeneous: Homogeneous,
}

impl PoincareElement {
    pub fn translation(x: Vec<f64>) -> Self {
        PoincareElement { translation: x, homogeneous: Homogeneous::Identity }
    }

    pub fn rotation(u: Su2) -> Self {
        PoincareElement { translation: vec![0.0; 4], homogeneous: Homogeneous::Rotation(u) }
    }

    pub fn boost(zeta: f64) -> Self {
        PoincareElement { translation: vec![0.0; 2], homogeneous: Homogeneous::Boost(zeta) }
    }

    /// `Lambda(a) x + y`.
    pub fn act_on_point(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        match self.homogeneous {
            Homogeneous::Identity => {}
            Homogeneous::Boost(z) => {
                let (ch, sh) = (z.cosh(), z.sinh());
                out[0] = ch * x[0] + sh * x[1];
                out[1] = sh * x[0] + ch * x[1];
            }
            Homogeneous::Rotation(u) => {
                let v = u.rotate([x[1], x[2], x[3]]);
                out[1..4].copy_from_slice(&v);
            }
        }
        for (o, y) in out.iter_mut().zip(&self.translation) {
            *o += y;
        }
        out
    }

    /// The inverse element.
    pub fn inverse(&self) -> PoincareElement {
        let homogeneous = match self.homogeneous {
            Homogeneous::Identity => Homogeneous::Identity,
            Homogeneous::Boost(z) => Homogeneous::Boost(-z),
            Homogeneous::Rotation(u) => Homogeneous::Rotation(u.inverse()),
        };
        let lin = PoincareElement { translation: vec![0.0; self.translation.len()], homogeneous };
        let t = lin.act_on_point(&self.translation);
        PoincareElement { translation: t.iter().map(|v| -v).collect(), homogeneous }
    }
}

fn check_vector(psi: &WaveFunction, x: &[f64]) -> Result<()> {
    let d = psi.dim().coords();
    if x.len() != d {
        return Err(Error::DimensionMismatch(format!("{}-vector applied to a {d}-dimensional state", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite translation".into()));
    }
    Ok(())
}

/// `U(x, 1) psi`: multiplication by `exp(i k_alpha x^alpha)`.
///
/// In 3+1 dimensions a spatial translation couples partial waves; the result
/// is projected back onto `l <= l_max` and the discarded norm is reported
/// by [`apply_translation_with_loss`].
pub fn apply_translation(psi: &WaveFunction, x: &[f64]) -> Result<WaveFunction> {
    Ok(apply_translation_with_loss(psi, x)?.0)
}

/// As [`apply_translation`], also returning the norm lost to the partial-wave
/// cutoff (zero except for spatial translations in 3+1).
pub fn apply_translation_with_loss(psi: &WaveFunction, x: &[f64]) -> Result<(WaveFunction, f64)> {
    check_vector(psi, x)?;
    let grid = psi.grid().clone();
    let mut out = psi.clone();
    let phases: Vec<Complex64> = (0..grid.node_count())
        .map(|node| {
            let k = grid.momentum(node);
            let arg = match grid.dim() {
                SpacetimeDim::Time1 => k.energy * x[0],
                SpacetimeDim::Mink2 => k.energy * x[0] - k.spatial * x[1],
                SpacetimeDim::Mink4 => k.energy * x[0],
            };
            Complex64::from_polar(1.0, arg)
        })
        .collect();
    for c in 0..psi.n_channels() {
        for w in 0..grid.wave_count() {
            for (z, p) in out.block_mut(c, w).iter_mut().zip(&phases) {
                *z *= p;
            }
        }
    }
    if grid.dim() == SpacetimeDim::Mink4 && x[1..].iter().any(|v| *v != 0.0) {
        let before = out.norm_squared();
        out = spatial_translation_partial_waves(&out, [x[1], x[2], x[3]]);
        let lost = (before - out.norm_squared()).max(0.0);
        return Ok((out, lost));
    }
    Ok((out, 0.0))
}

/// Multiply by `exp(-i kvec . y)` in the partial-wave basis, truncated at
/// `l_max`: `T_ab = int dOmega conj(Y_a) exp(-i kappa khat.y) Y_b`.
fn spatial_translation_partial_waves(psi: &WaveFunction, y: [f64; 3]) -> WaveFunction {
    let grid = psi.grid();
    let l_max = grid.l_max().expect("3+1 grid");
    let nw = grid.wave_count();
    let ylen = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
    let kappa_max = (0..grid.node_count()).map(|n| grid.momentum(n).spatial).fold(0.0, f64::max);
    let n_theta = l_max + (kappa_max * ylen).ceil() as usize + 16;
    let n_phi = 2 * n_theta;
    let (ct, wt) = gauss_legendre(n_theta);
    // Angular nodes with harmonics and the projection of khat on y.
    let mut ang = Vec::with_capacity(n_theta * n_phi);
    for (c, w) in ct.iter().zip(&wt) {
        for p in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * p as f64 / n_phi as f64;
            let s = (1.0 - c * c).max(0.0).sqrt();
            let proj = s * phi.cos() * y[0] + s * phi.sin() * y[1] + c * y[2];
            let weight = w * 2.0 * std::f64::consts::PI / n_phi as f64;
            ang.push((spherical_harmonics(l_max, *c, phi), proj, weight));
        }
    }
    let mut out = psi.clone();
    let mut t = vec![Complex64::new(0.0, 0.0); nw * nw];
    for node in 0..grid.node_count() {
        let kappa = grid.momentum(node).spatial;
        t.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (ys, proj, weight) in &ang {
            let ph = Complex64::from_polar(*weight, -kappa * proj);
            for a in 0..nw {
                let ya = ys[a].conj() * ph;
                for b in 0..nw {
                    t[a * nw + b] += ya * ys[b];
                }
            }
        }
        for c in 0..psi.n_channels() {
            let v: Vec<Complex64> = (0..nw).map(|b| psi.get(c, b, node)).collect();
            for a in 0..nw {
                let acc: Complex64 = (0..nw).map(|b| t[a * nw + b] * v[b]).sum();
                out.set(c, a, node, acc);
            }
        }
    }
    out
}

/// `U(0, u) psi` for a rotation in 3+1: `psi'_{l m'} = sum_m R^l_{m'm}(u) psi_{lm}`,
/// equivalently `psi'(k) = psi(R(u)^{-1} k)`.
pub fn apply_rotation(psi: &WaveFunction, u: &Su2) -> Result<WaveFunction> {
    let l_max = psi
        .grid()
        .l_max()
        .ok_or_else(|| Error::DimensionMismatch("rotations act on 3+1 states only".into()))?;
    let defect = u.unitarity_defect();
    if defect > 1e-12 {
        return Err(Error::NotUnitary(defect));
    }
    let mut out = psi.clone();
    let nodes = psi.grid().node_count();
    for l in 0..=l_max {
        let r = su2_wigner_d(2 * l as u32, u)?;
        let base = l * l;
        for c in 0..psi.n_channels() {
            for node in 0..nodes {
                for mp in 0..(2 * l + 1) {
                    // Wigner rows run m = l..-l, harmonic index runs n = -l..l.
                    let mut acc = Complex64::new(0.0, 0.0);
                    for m in 0..(2 * l + 1) {
                        acc += r.entries[(2 * l - mp, 2 * l - m)] * psi.get(c, base + m, node);
                    }
                    out.set(c, base + mp, node, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Result of a rapidity shift.
#[derive(Clone, Debug)]
pub struct BoostedState {
    pub state: WaveFunction,
    /// `max |cubic - quintic|` over the shifted samples, an estimate of the
    /// interpolation error.
    pub interpolation_error: f64,
}

/// Relative weight allowed to leave the rapidity grid under a boost.
const ESCAPE_TOLERANCE: f64 = 1e-10;

/// `U(0, b_zeta0) psi` in 1+1: `psi'(mu, zeta) = psi(mu, zeta - zeta0)` by cubic
/// interpolation along the rapidity axis.
pub fn apply_boost_1p1(psi: &WaveFunction, zeta0: f64) -> Result<WaveFunction> {
    Ok(apply_boost_1p1_reported(psi, zeta0)?.state)
}

pub fn apply_boost_1p1_reported(psi: &WaveFunction, zeta0: f64) -> Result<BoostedState> {
    let MassShellGrid::Mink2 { mass, rapidity } = psi.grid() else {
        return Err(Error::DimensionMismatch("rapidity boosts act on 1+1 states only".into()));
    };
    if !zeta0.is_finite() {
        return Err(Error::InvalidParameter("non-finite rapidity".into()));
    }
    let grid = psi.grid();
    let zs = rapidity.nodes();
    let (zmin, zmax) = (rapidity.min(), rapidity.max());
    // Weight that the shift would push beyond the grid.
    let total = psi.norm_squared();
    let mut escaped = 0.0;
    for c in 0..psi.n_channels() {
        for node in 0..grid.node_count() {
            let z = zs[grid.rapidity_index(node)] + zeta0;
            if z < zmin || z > zmax {
                escaped += psi.get(c, 0, node).norm_sqr() * grid.measure(node);
            }
        }
    }
    if total > 0.0 && escaped > ESCAPE_TOLERANCE * total {
        return Err(Error::SupportEscapes(escaped / total));
    }
    let mut out = psi.clone();
    let mut err: f64 = 0.0;
    let nz = zs.len();
    for c in 0..psi.n_channels() {
        for im in 0..mass.len() {
            let row: Vec<Complex64> = (0..nz).map(|iz| psi.get(c, 0, grid.node_index(im, iz))).collect();
            for (iz, z) in zs.iter().enumerate() {
                let src = z - zeta0;
                let cubic = lagrange_interpolate(zs, &row, src, 4);
                let quintic = lagrange_interpolate(zs, &row, src, 6);
                err = err.max((cubic - quintic).norm());
                out.set(c, 0, grid.node_index(im, iz), cubic);
            }
        }
    }
    Ok(BoostedState { state: out, interpolation_error: err })
}

/// Lagrange interpolation through the `points` nodes nearest to `x`; zero
/// outside the node range.
fn lagrange_interpolate(xs: &[f64], ys: &[Complex64], x: f64, points: usize) -> Complex64 {
    let n = xs.len();
    if x < xs[0] || x > xs[n - 1] {
        return Complex64::new(0.0, 0.0);
    }
    let hit = xs.iter().position(|v| (v - x).abs() <= 1e-13 * (1.0 + x.abs()));
    if let Some(i) = hit {
        return ys[i];
    }
    let right = xs.partition_point(|v| *v < x);
    let half = points / 2;
    let start = right.saturating_sub(half).min(n.saturating_sub(points));
    let end = (start + points).min(n);
    let mut acc = Complex64::new(0.0, 0.0);
    for i in start..end {
        let mut l = 1.0;
        for j in start..end {
            if j != i {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += ys[i] * l;
    }
    acc
}

/// Built-in state families. Gaussian profiles have amplitude
/// `exp(-(x - center)^2 / (4 width^2))`, so `width` is the standard deviation
/// of the probability density in that variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateRecipe {
    /// Time axis: Gaussian in energy.
    GaussianEnergy {
        center: f64,
        width: f64,
        #[serde(default)]
        channel_weights: Option<Vec<f64>>,
    },
    /// 1+1: product of Gaussians in mass and rapidity.
    GaussianMassRapidity {
        mass_center: f64,
        mass_width: f64,
        rapidity_center: f64,
        rapidity_width: f64,
        #[serde(default)]
        channel_weights: Option<Vec<f64>>,
    },
    /// 3+1: Gaussian radial profile in `(mu, zeta)` times one `Y_ln`.
    GaussianPartialWave {
        mass_center: f64,
        mass_width: f64,
        rapidity_center: f64,
        rapidity_width: f64,
        l: usize,
        n: i64,
        #[serde(default)]
        channel_weights: Option<Vec<f64>>,
    },
    /// Seeded random superposition of Gaussian packets.
    Random {
        seed: u64,
        #[serde(default = "default_channels")]
        channels: usize,
    },
}

fn default_channels() -> usize {
    1
}

fn gaussian(x: f64, center: f64, width: f64) -> f64 {
    let d = (x - center) / width;
    (-0.25 * d * d).exp()
}

fn channel_amplitudes(weights: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    let w = weights.clone().unwrap_or_else(|| vec![1.0]);
    if w.is_empty() || w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState("channel weights must be finite and nonempty".into()));
    }
    let n: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(Error::InvalidState("channel weights vanish".into()));
    }
    Ok(w.iter().map(|v| v / n).collect())
}

fn check_width(w: f64) -> Result<()> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::InvalidState(format!("Gaussian width must be positive, got {w}")));
    }
    Ok(())
}

/// Build a normalized state from a recipe on the given grid.
pub fn make_test_state(recipe: &StateRecipe, grid: &MassShellGrid) -> Result<WaveFunction> {
    let unsupported = || Error::Unsupported(format!("recipe {recipe:?} on a {:?} grid", grid.dim()));
    match recipe {
        StateRecipe::GaussianEnergy { center, width, channel_weights } => {
            if grid.dim() != SpacetimeDim::Time1 {
                return Err(unsupported());
            }
            check_width(*width)?;
            let profile: Vec<Complex64> = (0..grid.node_count())
                .map(|n| Complex64::new(gaussian(grid.momentum(n).energy, *center, *width), 0.0))
                .collect();
            channel_product(grid, &profile, 0, channel_weights)
        }
        StateRecipe::GaussianMassRapidity { mass_center, mass_width, rapidity_center, rapidity_width, channel_weights } => {
            if grid.dim() != SpacetimeDim::Mink2 {
                return Err(unsupported());
            }
            check_width(*mass_width)?;
            check_width(*rapidity_width)?;
            let profile = radial_profile(grid, *mass_center, *mass_width, *rapidity_center, *rapidity_width);
            channel_product(grid, &profile, 0, channel_weights)
        }
        StateRecipe::GaussianPartialWave { mass_center, mass_width, rapidity_center, rapidity_width, l, n, channel_weights } => {
            let Some(l_max) = grid.l_max() else { return Err(unsupported()) };
            if *l > l_max || n.unsigned_abs() as usize > *l {
                return Err(Error::InvalidState(format!("(l, n) = ({l}, {n}) outside l_max = {l_max}")));
            }
            check_width(*mass_width)?;
            check_width(*rapidity_width)?;
            let profile = radial_profile(grid, *mass_center, *mass_width, *rapidity_center, *rapidity_width);
            channel_product(grid, &profile, crate::special::harmonic_index(*l, *n), channel_weights)
        }
        StateRecipe::Random { seed, channels } => random_state(grid, *channels, *seed),
    }
}

fn radial_profile(grid: &MassShellGrid, mc: f64, mw: f64, zc: f64, zw: f64) -> Vec<Complex64> {
    (0..grid.node_count())
        .map(|n| {
            let k = grid.momentum(n);
            Complex64::new(gaussian(k.mass, mc, mw) * gaussian(k.rapidity, zc, zw), 0.0)
        })
        .collect()
}

fn channel_product(grid: &MassShellGrid, profile: &[Complex64], wave: usize, weights: &Option<Vec<f64>>) -> Result<WaveFunction> {
    let amps = channel_amplitudes(weights)?;
    let norm: f64 = profile.iter().enumerate().map(|(i, z)| z.norm_sqr() * grid.measure(i)).sum();
    if !(norm > 0.0) {
        return Err(Error::InvalidState("profile vanishes on the grid".into()));
    }
    let scale = 1.0 / norm.sqrt();
    let mut psi = WaveFunction::zeros(grid.clone(), amps.len())?;
    for (c, a) in amps.iter().enumerate() {
        for (node, z) in profile.iter().enumerate() {
            psi.set(c, wave, node, z * (a * scale));
        }
    }
    Ok(psi)
}

/// Seeded random normalized state: a few Gaussian packets with random
/// centers in the middle half of the grid, random complex amplitudes per
/// channel and (in 3+1) per partial wave with `l <= min(l_max, 2)`.
pub fn random_state(grid: &MassShellGrid, channels: usize, seed: u64) -> Result<WaveFunction> {
    if channels == 0 {
        return Err(Error::InvalidState("at least one channel is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = WaveFunction::zeros(grid.clone(), channels)?;
    let mass = grid.mass_axis();
    let (m0, m1) = (mass.min(), mass.max());
    let m_span = m1 - m0;
    let z_axis = grid.rapidity_axis();
    let packets = 3;
    let waves: Vec<usize> = (0..grid.wave_count()).filter(|w| harmonic_lm(*w).0 <= 2).collect();
    for _ in 0..packets {
        let mc = m0 + m_span * rng.random_range(0.35..0.65);
        let mw = m_span * rng.random_range(0.05..0.08);
        let (zc, zw) = match z_axis {
            Some(z) => {
                let span = z.max() - z.min();
                (z.min() + span * rng.random_range(0.35..0.65), span * rng.random_range(0.05..0.08))
            }
            None => (0.0, 1.0),
        };
        for c in 0..channels {
            for &w in &waves {
                let amp = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                for node in 0..grid.node_count() {
                    let k = grid.momentum(node);
                    let mut v = gaussian(k.mass, mc, mw);
                    if z_axis.is_some() {
                        v *= gaussian(k.rapidity, zc, zw);
                    }
                    let cur = psi.get(c, w, node);
                    psi.set(c, w, node, cur + amp * v);
                }
            }
        }
    }
    psi.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::spherical_harmonics_at;
    use proptest::prelude::*;

    fn grid1() -> MassShellGrid {
        MassShellGrid::time1(AxisGrid::midpoint(0.5, 8.5, 256).unwrap()).unwrap()
    }

    fn grid2() -> MassShellGrid {
        MassShellGrid::mink2(AxisGrid::midpoint(0.5, 3.5, 48).unwrap(), AxisGrid::midpoint(-1.5, 1.5, 64).unwrap())
            .unwrap()
    }

    fn grid4(l_max: usize) -> MassShellGrid {
        MassShellGrid::mink4(AxisGrid::midpoint(0.5, 3.5, 12).unwrap(), AxisGrid::midpoint(0.0, 2.0, 16).unwrap(), l_max)
            .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(AxisGrid::new(vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(AxisGrid::new(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(AxisGrid::new(vec![1.0], vec![1.0, 2.0]).is_err());
        let single = AxisGrid::new(vec![1.0], vec![1.0]).unwrap();
        assert!(MassShellGrid::time1(single).is_err());
        assert!(MassShellGrid::time1(AxisGrid::midpoint(-1.0, 1.0, 8).unwrap()).is_err());
        let neg = AxisGrid::midpoint(-1.0, 1.0, 8).unwrap();
        assert!(MassShellGrid::mink4(AxisGrid::midpoint(1.0, 2.0, 4).unwrap(), neg, 2).is_err());
        assert_eq!(AxisGrid::midpoint(0.0, 1.0, 4).unwrap().uniform_step(), Some(0.25));
    }

    #[test]
    fn gaussian_recipes_are_normalized() {
        let r1 = StateRecipe::GaussianEnergy { center: 4.0, width: 0.5, channel_weights: None };
        assert!((make_test_state(&r1, &grid1()).unwrap().norm_squared() - 1.0).abs() < 1e-12);
        let r2 = StateRecipe::GaussianMassRapidity {
            mass_center: 2.0,
            mass_width: 0.2,
            rapidity_center: 0.0,
            rapidity_width: 0.2,
            channel_weights: None,
        };
        assert!((make_test_state(&r2, &grid2()).unwrap().norm_squared() - 1.0).abs() < 1e-12);
        let r4 = StateRecipe::GaussianPartialWave {
            mass_center: 2.0,
            mass_width: 0.3,
            rapidity_center: 1.0,
            rapidity_width: 0.2,
            l: 1,
            n: -1,
            channel_weights: None,
        };
        assert!((make_test_state(&r4, &grid4(2)).unwrap().norm_squared() - 1.0).abs() < 1e-12);
        assert!(matches!(make_test_state(&r4, &grid2()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn channel_weights_split_the_norm() {
        let r = StateRecipe::GaussianEnergy { center: 4.0, width: 0.5, channel_weights: Some(vec![0.6, 0.8]) };
        let psi = make_test_state(&r, &grid1()).unwrap();
        assert!((psi.channel_norm_squared(0) - 0.36).abs() < 1e-12);
        assert!((psi.channel_norm_squared(1) - 0.64).abs() < 1e-12);
    }

    #[test]
    fn random_state_is_reproducible() {
        let a = random_state(&grid2(), 2, 7).unwrap();
        let b = random_state(&grid2(), 2, 7).unwrap();
        let c = random_state(&grid2(), 2, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spatial_translation_in_3p1_is_nearly_unitary_and_matches_plane_wave() {
        let r = StateRecipe::GaussianPartialWave {
            mass_center: 1.0,
            mass_width: 0.1,
            rapidity_center: 0.3,
            rapidity_width: 0.05,
            l: 0,
            n: 0,
            channel_weights: None,
        };
        let grid = grid4(8);
        let psi = make_test_state(&r, &grid).unwrap();
        let y = [0.0, 0.3, -0.2, 0.4];
        let (moved, lost) = apply_translation_with_loss(&psi, &y).unwrap();
        assert!(lost < 1e-6, "lost {lost}");
        // Compare with exp(-i kvec.y) psi in a direction.
        let khat = [0.48, -0.6, 0.64];
        let ys = spherical_harmonics_at(8, khat);
        for node in [40usize, 70, 100] {
            let k = grid.momentum(node);
            let dot = k.spatial * (khat[0] * y[1] + khat[1] * y[2] + khat[2] * y[3]);
            let want = psi.get(0, 0, node) * ys[0] * Complex64::from_polar(1.0, -dot);
            let got: Complex64 = (0..grid.wave_count()).map(|w| moved.get(0, w, node) * ys[w]).sum();
            assert!((got - want).norm() < 1e-6 * (1.0 + want.norm()), "node {node}: {got} vs {want}");
        }
    }

    #[test]
    fn rotation_moves_the_angular_profile() {
        let grid = grid4(3);
        let psi = random_state(&grid, 1, 3).unwrap();
        let u = Su2::axis_angle([0.3, -0.5, 0.8], 1.1).unwrap();
        let rotated = apply_rotation(&psi, &u).unwrap();
        assert!((rotated.norm_squared() - 1.0).abs() < 1e-12);
        let k = [0.36, 0.48, 0.8];
        let back = u.inverse().rotate(k);
        let (ya, yb) = (spherical_harmonics_at(3, k), spherical_harmonics_at(3, back));
        for node in [5usize, 60, 150] {
            let lhs: Complex64 = (0..grid.wave_count()).map(|w| rotated.get(0, w, node) * ya[w]).sum();
            let rhs: Complex64 = (0..grid.wave_count()).map(|w| psi.get(0, w, node) * yb[w]).sum();
            assert!((lhs - rhs).norm() < 1e-12);
        }
        assert!(apply_rotation(&random_state(&grid2(), 1, 1).unwrap(), &u).is_err());
    }

    #[test]
    fn boost_shifts_rapidity_and_detects_escape() {
        let grid = grid2();
        let r = StateRecipe::GaussianMassRapidity {
            mass_center: 2.0,
            mass_width: 0.2,
            rapidity_center: -0.3,
            rapidity_width: 0.15,
            channel_weights: None,
        };
        let psi = make_test_state(&r, &grid).unwrap();
        let b = apply_boost_1p1_reported(&psi, 0.4).unwrap();
        assert!(b.interpolation_error < 1e-3);
        assert!((b.state.norm_squared() - 1.0).abs() < 1e-3);
        let moved = StateRecipe::GaussianMassRapidity {
            mass_center: 2.0,
            mass_width: 0.2,
            rapidity_center: 0.1,
            rapidity_width: 0.15,
            channel_weights: None,
        };
        let want = make_test_state(&moved, &grid).unwrap();
        let diff = b.state.combine(Complex64::new(1.0, 0.0), &want, Complex64::new(-1.0, 0.0)).unwrap();
        assert!(diff.norm_squared().sqrt() < 1e-3);
        assert!(matches!(apply_boost_1p1(&psi, 2.0), Err(Error::SupportEscapes(_))));
    }

    #[test]
    fn poincare_inverse_composes_to_identity() {
        let g = PoincareElement { translation: vec![0.3, -1.2], homogeneous: Homogeneous::Boost(0.7) };
        let x = [1.5, 0.25];
        let y = g.inverse().act_on_point(&g.act_on_point(&x));
        assert!((y[0] - x[0]).abs() < 1e-12 && (y[1] - x[1]).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let psi = random_state(&grid1(), 1, 0).unwrap();
        assert!(matches!(apply_translation(&psi, &[1.0, 2.0]), Err(Error::DimensionMismatch(_))));
        let other = random_state(&grid2(), 1, 0).unwrap();
        assert!(psi.inner(&other).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn translations_preserve_norm(seed in 0u64..1000, t in -20.0f64..20.0, x in -20.0f64..20.0) {
            let p1 = random_state(&grid1(), 2, seed).unwrap();
            prop_assert!((apply_translation(&p1, &[t]).unwrap().norm_squared() - 1.0).abs() < 1e-12);
            let p2 = random_state(&grid2(), 1, seed).unwrap();
            prop_assert!((apply_translation(&p2, &[t, x]).unwrap().norm_squared() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn translations_compose(seed in 0u64..1000, a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let p = random_state(&grid2(), 1, seed).unwrap();
            let two = apply_translation(&apply_translation(&p, &[a, b]).unwrap(), &[c, a]).unwrap();
            let one = apply_translation(&p, &[a + c, b + a]).unwrap();
            let d = two.combine(Complex64::new(1.0, 0.0), &one, Complex64::new(-1.0, 0.0)).unwrap();
            prop_assert!(d.norm_squared() < 1e-20);
        }

        #[test]
        fn rotations_compose(seed in 0u64..1000, a in 0.0f64..6.0, b in 0.0f64..3.0, c in 0.0f64..6.0) {
            let grid = grid4(2);
            let p = random_state(&grid, 1, seed).unwrap();
            let u = Su2::euler_zyz(a, b, c);
            let v = Su2::euler_zyz(c, a / 2.0, b);
            let two = apply_rotation(&apply_rotation(&p, &v).unwrap(), &u).unwrap();
            let one = apply_rotation(&p, &(u * v)).unwrap();
            let d = two.combine(Complex64::new(1.0, 0.0), &one, Complex64::new(-1.0, 0.0)).unwrap();
            prop_assert!(d.norm_squared() < 1e-20);
        }
    }
}
