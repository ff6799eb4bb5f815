//! The intertwined field
//! `Psi_{gamma l n}(x) = (2 pi)^{-d/2} int d^d k exp(-i x.k) D_{ln00}(a_k) sum_sigma F_{gamma sigma}(mu) psi_sigma(k)`.
//!
//! Fast paths:
//! * time axis: one FFT per label on the grid conjugate to a uniform energy
//!   axis, falling back to a direct sum on other grids;
//! * 1+1: the phase factorizes, `exp(-i(t k0 - x k1)) = exp(-i t k0) exp(i x k1)`,
//!   so the field on the `(t, x)` lattice is one matrix product per label;
//! * 3+1: plane-wave expansion in spherical harmonics reduces the field to
//!   radial coefficients `h_{gamma l n, L M}(t, r)` with
//!   `Psi_{gamma l n}(t, r xhat) = sum_{LM} h_{gamma l n, LM}(t, r) Y_LM(xhat)`.
//!
//! [`oracle_direct_field`] evaluates the defining momentum integral at single
//! points with no factorization or expansion.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::grid::{SpacetimeGrid, SphereQuadrature, UniformAxis};
use crate::kernel::KernelFamily;
use crate::lorentz::{boost_element, character_1p1, column_constant, BoostElementTable};
use crate::special::{gauss_legendre, harmonic_count, harmonic_index, harmonic_lm, spherical_bessel_j, spherical_harmonics};
use crate::state::{AxisGrid, MassShellGrid, SpacetimeDim, WaveFunction};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Amplitudes below this fraction of the largest one are ignored when
/// estimating the momentum bandwidth for the sampling check.
const BANDWIDTH_CUTOFF: f64 = 1e-14;

/// One nonzero radial coefficient `h_{gamma, wave, LM}(t, r)` of a 3+1 field.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarBlock {
    pub gamma: usize,
    pub wave: usize,
    pub lm: usize,
    /// Indexed `it * n_r + ir`.
    pub values: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    /// `[(gamma * n_wave + wave) * n_points + point]`.
    Sampled(Vec<Complex64>),
    Polar { l_out: usize, blocks: Vec<PolarBlock>, by_component: Vec<Vec<usize>> },
}

/// `Psi_{gamma, wave}` on a spacetime grid. `wave` is the `(l, n)` index in
/// 3+1 and always 0 otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct IntertwinedField {
    grid: SpacetimeGrid,
    omega: Vec<f64>,
    n_wave: usize,
    storage: Storage,
}

impl IntertwinedField {
    pub fn grid(&self) -> &SpacetimeGrid {
        &self.grid
    }

    /// Label weights `omega_gamma`.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn n_gamma(&self) -> usize {
        self.omega.len()
    }

    pub fn n_wave(&self) -> usize {
        self.n_wave
    }

    /// Radial coefficient blocks (3+1 only).
    pub fn polar_blocks(&self) -> Option<(usize, &[PolarBlock])> {
        match &self.storage {
            Storage::Polar { l_out, blocks, .. } => Some((*l_out, blocks)),
            Storage::Sampled(_) => None,
        }
    }

    /// Values of one component at every grid point.
    pub fn component(&self, gamma: usize, wave: usize) -> Vec<Complex64> {
        let n = self.grid.len();
        match &self.storage {
            Storage::Sampled(v) => {
                let o = (gamma * self.n_wave + wave) * n;
                v[o..o + n].to_vec()
            }
            Storage::Polar { l_out, blocks, by_component } => {
                let SpacetimeGrid::Mink4 { t, r, sphere } = &self.grid else { unreachable!() };
                let ys = sphere_harmonics(sphere, *l_out);
                let na = sphere.len();
                let mut out = vec![ZERO; n];
                for &b in &by_component[gamma * self.n_wave + wave] {
                    let blk = &blocks[b];
                    for it in 0..t.len {
                        for ir in 0..r.len {
                            let h = blk.values[it * r.len + ir];
                            let base = (it * r.len + ir) * na;
                            for a in 0..na {
                                out[base + a] += h * ys[a][blk.lm];
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// 3+1 component at time node `it`, radial node `ir` and an arbitrary
    /// unit direction.
    pub fn polar_value(&self, gamma: usize, wave: usize, it: usize, ir: usize, dir: [f64; 3]) -> Result<Complex64> {
        let Storage::Polar { l_out, blocks, by_component } = &self.storage else {
            return Err(Error::DimensionMismatch("direction evaluation needs a 3+1 field".into()));
        };
        let SpacetimeGrid::Mink4 { r, .. } = &self.grid else { unreachable!() };
        let ys = crate::special::spherical_harmonics_at(*l_out, dir);
        Ok(by_component[gamma * self.n_wave + wave]
            .iter()
            .map(|&b| blocks[b].values[it * r.len + ir] * ys[blocks[b].lm])
            .sum())
    }

    /// `sum_gamma omega_gamma sum_wave |Psi|^2` at a 3+1 `(it, ir, direction)`.
    pub fn polar_density(&self, it: usize, ir: usize, dir: [f64; 3]) -> Result<f64> {
        let mut acc = 0.0;
        for g in 0..self.n_gamma() {
            for w in 0..self.n_wave {
                acc += self.omega[g] * self.polar_value(g, w, it, ir, dir)?.norm_sqr();
            }
        }
        Ok(acc)
    }
}

fn sphere_harmonics(sphere: &SphereQuadrature, l_max: usize) -> Vec<Vec<Complex64>> {
    (0..sphere.len())
        .map(|a| {
            let (c, p) = sphere.angles(a);
            spherical_harmonics(l_max, c, p)
        })
        .collect()
}

/// `sum_sigma F_{gamma sigma}(mu) psi_{sigma, wave}` at every node.
fn kernel_applied(psi: &WaveFunction, k: &KernelFamily, gamma: usize, wave: usize) -> Vec<Complex64> {
    let grid = psi.grid();
    (0..grid.node_count())
        .map(|node| {
            let m = grid.mass_index(node);
            (0..k.n_sigma()).map(|s| k.get(m, gamma, s) * psi.get(s, wave, node)).sum()
        })
        .collect()
}

fn check_sampling(step: f64, span: f64, axis: &str) -> Result<()> {
    if step * span >= 2.0 * PI {
        return Err(Error::Aliasing(format!(
            "{axis} step {step} is too coarse for momentum bandwidth {span} (need step * bandwidth < 2 pi)"
        )));
    }
    Ok(())
}

/// Range of a momentum coordinate over the nodes where any amplitude is
/// significant.
fn significant_range(amps: &[Vec<Complex64>], coord: impl Fn(usize) -> f64) -> (f64, f64) {
    let n = amps.first().map_or(0, Vec::len);
    let weight: Vec<f64> = (0..n).map(|i| amps.iter().map(|a| a[i].norm()).sum()).collect();
    let max = weight.iter().cloned().fold(0.0, f64::max);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, w) in weight.iter().enumerate() {
        if *w > BANDWIDTH_CUTOFF * max {
            lo = lo.min(coord(i));
            hi = hi.max(coord(i));
        }
    }
    if hi >= lo { (lo, hi) } else { (0.0, 0.0) }
}

fn significant_span(amps: &[Vec<Complex64>], coord: impl Fn(usize) -> f64) -> f64 {
    let (lo, hi) = significant_range(amps, coord);
    hi - lo
}

fn check_inputs(psi: &WaveFunction, k: &KernelFamily, dim: SpacetimeDim) -> Result<()> {
    k.check_state(psi)?;
    if dim != psi.dim() {
        return Err(Error::DimensionMismatch(format!("{:?} grid for a {:?} state", dim, psi.dim())));
    }
    Ok(())
}

/// Evaluate the field of `psi` under kernel `k` on `grid`.
pub fn evaluate_field(psi: &WaveFunction, k: &KernelFamily, grid: &SpacetimeGrid) -> Result<IntertwinedField> {
    check_inputs(psi, k, grid.dim())?;
    k.ensure_valid()?;
    let omega: Vec<f64> = k.gammas().iter().map(|g| g.weight).collect();
    match grid {
        SpacetimeGrid::Time1 { t } => {
            let values = time_field(psi, k, t)?;
            Ok(IntertwinedField { grid: grid.clone(), omega, n_wave: 1, storage: Storage::Sampled(values) })
        }
        SpacetimeGrid::Mink2 { t, x } => {
            let values = plane_field(psi, k, t, x)?;
            Ok(IntertwinedField { grid: grid.clone(), omega, n_wave: 1, storage: Storage::Sampled(values) })
        }
        SpacetimeGrid::Mink4 { t, r, sphere } => polar_field(psi, k, t, r, sphere, grid.clone(), omega),
    }
}

fn is_conjugate(t: &UniformAxis, energy: &AxisGrid) -> bool {
    let Some(de) = energy.uniform_step() else { return false };
    let period = t.step * t.len as f64 * de / (2.0 * PI);
    (period - 1.0).abs() < 1e-12 && (t.start + (t.len / 2) as f64 * t.step).abs() < 1e-9 * t.step
}

fn time_field(psi: &WaveFunction, k: &KernelFamily, t: &UniformAxis) -> Result<Vec<Complex64>> {
    let MassShellGrid::Time1 { energy } = psi.grid() else { unreachable!() };
    let pref = (2.0 * PI).powf(-0.5);
    let amps: Vec<Vec<Complex64>> = (0..k.n_gamma())
        .map(|g| {
            let f = kernel_applied(psi, k, g, 0);
            f.iter().zip(energy.weights()).map(|(v, w)| v * *w).collect()
        })
        .collect();
    check_sampling(t.step, significant_span(&amps, |i| energy.nodes()[i]), "time")?;
    let m = t.len;
    let e = energy.nodes();
    let mut out = vec![ZERO; k.n_gamma() * m];
    if is_conjugate(t, energy) {
        let fft = FftPlanner::new().plan_fft_forward(m);
        for (g, a) in amps.iter().enumerate() {
            let mut buf = vec![ZERO; m];
            buf[..a.len()].copy_from_slice(a);
            fft.process(&mut buf);
            for p in 0..m {
                let mm = p as i64 - (m / 2) as i64;
                let tm = t.node(p);
                let phase = Complex64::from_polar(pref, -tm * e[0]);
                out[g * m + p] = buf[mm.rem_euclid(m as i64) as usize] * phase;
            }
        }
    } else {
        for (g, a) in amps.iter().enumerate() {
            let vals: Vec<Complex64> = (0..m)
                .into_par_iter()
                .map(|p| {
                    let tm = t.node(p);
                    a.iter().zip(e).map(|(v, ei)| v * Complex64::from_polar(pref, -tm * ei)).sum()
                })
                .collect();
            out[g * m..(g + 1) * m].copy_from_slice(&vals);
        }
    }
    Ok(out)
}

/// `W(node) * character * (F psi)` for the 1+1 field.
fn plane_amplitudes(psi: &WaveFunction, k: &KernelFamily) -> Vec<Vec<Complex64>> {
    let grid = psi.grid();
    (0..k.n_gamma())
        .map(|g| {
            let c = k.gammas()[g].label.c();
            kernel_applied(psi, k, g, 0)
                .iter()
                .enumerate()
                .map(|(node, v)| v * grid.measure(node) * character_1p1(c, grid.momentum(node).rapidity))
                .collect()
        })
        .collect()
}

fn plane_field(psi: &WaveFunction, k: &KernelFamily, t: &UniformAxis, x: &UniformAxis) -> Result<Vec<Complex64>> {
    let grid = psi.grid();
    let n = grid.node_count();
    let amps = plane_amplitudes(psi, k);
    let k0: Vec<f64> = (0..n).map(|i| grid.momentum(i).energy).collect();
    let k1: Vec<f64> = (0..n).map(|i| grid.momentum(i).spatial).collect();
    check_sampling(t.step, significant_span(&amps, |i| k0[i]), "time")?;
    check_sampling(x.step, significant_span(&amps, |i| k1[i]), "space")?;
    let pref = 1.0 / (2.0 * PI);
    let tx = DMatrix::from_fn(t.len, n, |a, j| Complex64::from_polar(pref, -t.node(a) * k0[j]));
    let xx = DMatrix::from_fn(n, x.len, |j, b| Complex64::from_polar(1.0, x.node(b) * k1[j]));
    let per: Vec<Vec<Complex64>> = amps
        .par_iter()
        .map(|g| {
            let mut a = tx.clone();
            for (j, gj) in g.iter().enumerate() {
                a.column_mut(j).scale_mut_complex(*gj);
            }
            let psi_tx = a * &xx;
            let mut v = Vec::with_capacity(t.len * x.len);
            for ia in 0..t.len {
                for ib in 0..x.len {
                    v.push(psi_tx[(ia, ib)]);
                }
            }
            v
        })
        .collect();
    Ok(per.concat())
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, s: Complex64);
}

impl<S: nalgebra::StorageMut<Complex64, nalgebra::Dyn, nalgebra::U1>> ScaleComplex
    for nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S>
{
    fn scale_mut_complex(&mut self, s: Complex64) {
        self.iter_mut().for_each(|z| *z *= s);
    }
}

/// `int dOmega conj(Y_LM) conj(Y_ln) Y_l'n'` for all index triples up to
/// the given degrees, by exact quadrature.
pub struct Gaunt {
    l_max: usize,
    l_out: usize,
    sphere: SphereQuadrature,
    ys: Vec<Vec<Complex64>>,
}

impl Gaunt {
    pub fn new(l_max: usize) -> Self {
        let l_out = 2 * l_max;
        let sphere = SphereQuadrature::exact_to(l_out + 2 * l_max);
        let ys = sphere_harmonics(&sphere, l_out);
        Gaunt { l_max, l_out, sphere, ys }
    }

    /// Coefficient for `(L, M)`, `(l, n)`, `(l', n')`; zero off the selection
    /// rules `M = n' - n`, `L + l + l'` even, triangle inequality.
    pub fn get(&self, big: (usize, i64), ln: (usize, i64), lpnp: (usize, i64)) -> Complex64 {
        let (ll, mm) = big;
        let ((l, n), (lp, np)) = (ln, lpnp);
        if mm != np - n || (ll + l + lp) % 2 == 1 || ll > l + lp || ll + l.min(lp) < l.max(lp) {
            return ZERO;
        }
        if mm.unsigned_abs() as usize > ll || l > self.l_max || lp > self.l_max || ll > self.l_out {
            return ZERO;
        }
        let (a, b, c) = (harmonic_index(ll, mm), harmonic_index(l, n), harmonic_index(lp, np));
        (0..self.sphere.len()).map(|i| self.ys[i][a].conj() * self.ys[i][b].conj() * self.ys[i][c] * self.sphere.weight(i)).sum()
    }
}

fn polar_field(
    psi: &WaveFunction,
    k: &KernelFamily,
    t: &UniformAxis,
    r: &UniformAxis,
    sphere: &SphereQuadrature,
    grid: SpacetimeGrid,
    omega: Vec<f64>,
) -> Result<IntertwinedField> {
    let sgrid = psi.grid();
    let l_max = sgrid.l_max().expect("3+1 state");
    let l_out = 2 * l_max;
    if sphere.degree < 2 * l_out + 1 {
        return Err(Error::InvalidGrid(format!(
            "sphere rule of degree {} cannot integrate |Psi|^2 and first moments for L = {l_out} (need {})",
            sphere.degree,
            2 * l_out + 1
        )));
    }
    let n_nodes = sgrid.node_count();
    let n_wave = harmonic_count(l_max);
    let zetas = sgrid.rapidity_axis().expect("3+1 grid").nodes().to_vec();
    let k0: Vec<f64> = (0..n_nodes).map(|i| sgrid.momentum(i).energy).collect();
    let kappa: Vec<f64> = (0..n_nodes).map(|i| sgrid.momentum(i).spatial).collect();
    let gaunt = Gaunt::new(l_max);

    // Kernel-applied partial waves per label, and boost elements per label.
    let fpsi: Vec<Vec<Vec<Complex64>>> =
        (0..k.n_gamma()).map(|g| (0..n_wave).map(|w| kernel_applied(psi, k, g, w)).collect()).collect();
    let tables: Vec<BoostElementTable> = k
        .gammas()
        .iter()
        .map(|g| BoostElementTable::build(g.label.c(), l_max, &zetas))
        .collect::<Result<_>>()?;

    // Amplitudes g_{gamma, ln, LM}(node), keyed deterministically.
    let mut amps: BTreeMap<(usize, usize, usize), Vec<Complex64>> = BTreeMap::new();
    for g in 0..k.n_gamma() {
        for w in 0..n_wave {
            let (l, n) = harmonic_lm(w);
            for wp in 0..n_wave {
                let src = &fpsi[g][wp];
                if src.iter().all(|z| *z == ZERO) {
                    continue;
                }
                let (lp, np) = harmonic_lm(wp);
                let mm = np - n;
                let mut ll = l.abs_diff(lp);
                while ll <= l + lp {
                    if mm.unsigned_abs() as usize <= ll {
                        let cg = gaunt.get((ll, mm), (l, n), (lp, np));
                        if cg.norm() > 1e-14 {
                            let lm = harmonic_index(ll, mm);
                            let pref = Complex64::i().powu(ll as u32) / PI * column_constant(l) * cg;
                            let entry = amps.entry((g, w, lm)).or_insert_with(|| vec![ZERO; n_nodes]);
                            for node in 0..n_nodes {
                                let d = tables[g].get(l, sgrid.rapidity_index(node));
                                entry[node] += pref * sgrid.measure(node) * d * src[node];
                            }
                        }
                    }
                    ll += 2;
                }
            }
        }
    }
    let amp_list: Vec<Vec<Complex64>> = amps.values().cloned().collect();
    check_sampling(t.step, significant_span(&amp_list, |i| k0[i]), "time")?;
    let kappa_max = significant_range(&amp_list, |i| kappa[i]).1;
    check_sampling(r.step, 2.0 * kappa_max, "radial")?;

    // Phases and Bessel values shared by all blocks.
    let phases: Vec<Vec<Complex64>> =
        (0..t.len).map(|it| k0.iter().map(|e| Complex64::from_polar(1.0, -t.node(it) * e)).collect()).collect();
    let bessel: Vec<Vec<Vec<f64>>> = (0..r.len)
        .into_par_iter()
        .map(|ir| kappa.iter().map(|kk| spherical_bessel_j(l_out, r.node(ir) * kk)).collect())
        .collect();

    let keys: Vec<(usize, usize, usize)> = amps.keys().cloned().collect();
    let mut blocks: Vec<PolarBlock> =
        keys.iter().map(|&(gamma, wave, lm)| PolarBlock { gamma, wave, lm, values: vec![ZERO; t.len * r.len] }).collect();
    for ll in 0..=l_out {
        let members: Vec<usize> = (0..keys.len()).filter(|&b| harmonic_lm(keys[b].2).0 == ll).collect();
        if members.is_empty() {
            continue;
        }
        let gmat = DMatrix::from_fn(n_nodes, members.len(), |node, j| amps[&keys[members[j]]][node]);
        let rows: Vec<DMatrix<Complex64>> = (0..t.len)
            .into_par_iter()
            .map(|it| {
                let p = DMatrix::from_fn(r.len, n_nodes, |ir, node| phases[it][node] * bessel[ir][node][ll]);
                p * &gmat
            })
            .collect();
        for (it, h) in rows.iter().enumerate() {
            for (j, &b) in members.iter().enumerate() {
                for ir in 0..r.len {
                    blocks[b].values[it * r.len + ir] = h[(ir, j)];
                }
            }
        }
    }
    let mut by_component = vec![Vec::new(); k.n_gamma() * n_wave];
    for (b, blk) in blocks.iter().enumerate() {
        by_component[blk.gamma * n_wave + blk.wave].push(b);
    }
    Ok(IntertwinedField { grid, omega, n_wave, storage: Storage::Polar { l_out, blocks, by_component } })
}

/// Slow reference: the defining momentum-space sum evaluated independently
/// at each point. Returns `values[point][gamma * n_wave + wave]`.
///
/// 3+1 momenta are integrated over directions with a Gauss-Legendre x
/// uniform product rule whose order grows with `kappa |x|`, using plane-wave
/// phases directly; the partial-wave state is resummed at each direction.
pub fn oracle_direct_field(psi: &WaveFunction, k: &KernelFamily, points: &[Vec<f64>]) -> Result<Vec<Vec<Complex64>>> {
    check_inputs(psi, k, psi.dim())?;
    let d = psi.dim().coords();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch(format!("{}-point for a {d}-dimensional state", p.len())));
    }
    let grid = psi.grid();
    let n = grid.node_count();
    match psi.dim() {
        SpacetimeDim::Time1 => Ok(points
            .par_iter()
            .map(|p| {
                (0..k.n_gamma())
                    .map(|g| {
                        let mut acc = ZERO;
                        for node in 0..n {
                            let e = grid.momentum(node).energy;
                            let m = grid.mass_index(node);
                            let f: Complex64 = (0..k.n_sigma()).map(|s| k.get(m, g, s) * psi.get(s, 0, node)).sum();
                            acc += Complex64::from_polar(grid.measure(node), -p[0] * e) * f;
                        }
                        acc / (2.0 * PI).sqrt()
                    })
                    .collect()
            })
            .collect()),
        SpacetimeDim::Mink2 => Ok(points
            .par_iter()
            .map(|p| {
                (0..k.n_gamma())
                    .map(|g| {
                        let q = k.gammas()[g].label.q;
                        let mut acc = ZERO;
                        for node in 0..n {
                            let mom = grid.momentum(node);
                            let m = grid.mass_index(node);
                            let f: Complex64 = (0..k.n_sigma()).map(|s| k.get(m, g, s) * psi.get(s, 0, node)).sum();
                            let arg = -(p[0] * mom.energy - p[1] * mom.spatial) + q * mom.rapidity;
                            acc += Complex64::from_polar(grid.measure(node), arg) * f;
                        }
                        acc / (2.0 * PI)
                    })
                    .collect()
            })
            .collect()),
        SpacetimeDim::Mink4 => oracle_polar(psi, k, points),
    }
}

fn oracle_polar(psi: &WaveFunction, k: &KernelFamily, points: &[Vec<f64>]) -> Result<Vec<Vec<Complex64>>> {
    let grid = psi.grid();
    let l_max = grid.l_max().expect("3+1 grid");
    let n_wave = harmonic_count(l_max);
    let n = grid.node_count();
    let zetas = grid.rapidity_axis().expect("3+1 grid").nodes();
    // d_l(zeta) per label, evaluated element by element.
    let mut dl = vec![vec![vec![ZERO; zetas.len()]; l_max + 1]; k.n_gamma()];
    for (g, table) in dl.iter_mut().enumerate() {
        let c = k.gammas()[g].label.c();
        for (l, row) in table.iter_mut().enumerate() {
            for (j, z) in zetas.iter().enumerate() {
                row[j] = boost_element(c, l, *z)?;
            }
        }
    }
    let kappa_max = (0..n).map(|i| grid.momentum(i).spatial).fold(0.0, f64::max);
    Ok(points
        .par_iter()
        .map(|p| {
            let rad = (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt();
            let n_theta = ((kappa_max * rad) / 2.0).ceil() as usize + 2 * l_max + 24;
            let n_phi = 2 * n_theta;
            let (ct, wt) = gauss_legendre(n_theta);
            let mut acc = vec![ZERO; k.n_gamma() * n_wave];
            for (cth, wth) in ct.iter().zip(&wt) {
                let sth = (1.0 - cth * cth).max(0.0).sqrt();
                for ip in 0..n_phi {
                    let phi = 2.0 * PI * ip as f64 / n_phi as f64;
                    let khat = [sth * phi.cos(), sth * phi.sin(), *cth];
                    let dot = khat[0] * p[1] + khat[1] * p[2] + khat[2] * p[3];
                    let ys = spherical_harmonics(l_max, *cth, phi);
                    let wa = wth * 2.0 * PI / n_phi as f64;
                    for node in 0..n {
                        let mom = grid.momentum(node);
                        let m = grid.mass_index(node);
                        let iz = grid.rapidity_index(node);
                        let phase = Complex64::from_polar(wa * grid.measure(node), -(p[0] * mom.energy - mom.spatial * dot));
                        for g in 0..k.n_gamma() {
                            // psi resummed at this direction, then the kernel.
                            let mut f = ZERO;
                            for s in 0..k.n_sigma() {
                                let mut v = ZERO;
                                for (wp, y) in ys.iter().enumerate() {
                                    v += psi.get(s, wp, node) * y;
                                }
                                f += k.get(m, g, s) * v;
                            }
                            if f == ZERO {
                                continue;
                            }
                            let base = phase * f;
                            for (w, y) in ys.iter().enumerate() {
                                let l = harmonic_lm(w).0;
                                acc[g * n_wave + w] += base * column_constant(l) * y.conj() * dl[g][l][iz];
                            }
                        }
                    }
                }
            }
            acc.iter().map(|z| z / (4.0 * PI * PI)).collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{make_test_state, random_state, StateRecipe};

    fn time_setup() -> (WaveFunction, KernelFamily) {
        let grid = MassShellGrid::time1(AxisGrid::midpoint(0.5, 8.5, 128).unwrap()).unwrap();
        let psi = make_test_state(
            &StateRecipe::GaussianEnergy { center: 4.5, width: 0.4, channel_weights: Some(vec![0.6, 0.8]) },
            &grid,
        )
        .unwrap();
        let k = crate::kernel::random_isometric_kernel(SpacetimeDim::Time1, 2, 3, grid.mass_axis().nodes(), 4).unwrap();
        (psi, k)
    }

    #[test]
    fn fft_and_direct_paths_agree_with_oracle() {
        let (psi, k) = time_setup();
        let grid = SpacetimeGrid::conjugate_time(psi.grid().mass_axis(), 256).unwrap();
        let fast = evaluate_field(&psi, &k, &grid).unwrap();
        let pts: Vec<Vec<f64>> = [0usize, 17, 128, 200, 255].iter().map(|i| grid.point(*i)).collect();
        let oracle = oracle_direct_field(&psi, &k, &pts).unwrap();
        for (j, i) in [0usize, 17, 128, 200, 255].iter().enumerate() {
            for g in 0..3 {
                assert!((fast.component(g, 0)[*i] - oracle[j][g]).norm() < 1e-13);
            }
        }
        // A shifted grid is not conjugate and takes the direct path.
        let SpacetimeGrid::Time1 { t } = &grid else { panic!() };
        let shifted = SpacetimeGrid::time(UniformAxis::new(t.start + 0.1, t.step, t.len).unwrap());
        let direct = evaluate_field(&psi, &k, &shifted).unwrap();
        let o = oracle_direct_field(&psi, &k, &[shifted.point(40)]).unwrap();
        assert!((direct.component(1, 0)[40] - o[0][1]).norm() < 1e-13);
    }

    #[test]
    fn zero_state_gives_zero_field() {
        let (psi, k) = time_setup();
        let zero = psi.scaled(ZERO);
        let grid = SpacetimeGrid::conjugate_time(psi.grid().mass_axis(), 128).unwrap();
        let f = evaluate_field(&zero, &k, &grid).unwrap();
        assert!(f.component(0, 0).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn undersampled_grids_are_rejected() {
        let (psi, k) = time_setup();
        let coarse = SpacetimeGrid::time(UniformAxis::cells(-10.0, 10.0, 8).unwrap());
        assert!(matches!(evaluate_field(&psi, &k, &coarse), Err(Error::Aliasing(_))));
    }

    #[test]
    fn unvalidated_kernels_are_rejected() {
        let (psi, k) = time_setup();
        let mut vals = k.values().to_vec();
        vals[0] += 0.1;
        let bad = KernelFamily::new(
            SpacetimeDim::Time1,
            k.gammas().to_vec(),
            2,
            k.mass_nodes().to_vec(),
            vals,
            crate::kernel::KernelMode::Normalized,
        )
        .unwrap();
        let grid = SpacetimeGrid::conjugate_time(psi.grid().mass_axis(), 128).unwrap();
        assert!(matches!(evaluate_field(&psi, &bad, &grid), Err(Error::UnvalidatedKernel(_))));
    }

    #[test]
    fn plane_field_matches_oracle() {
        let grid = MassShellGrid::mink2(AxisGrid::midpoint(0.5, 3.5, 24).unwrap(), AxisGrid::midpoint(-1.5, 1.5, 24).unwrap())
            .unwrap();
        let psi = random_state(&grid, 2, 3).unwrap();
        let k = crate::kernel::random_isometric_kernel(SpacetimeDim::Mink2, 2, 2, grid.mass_axis().nodes(), 8).unwrap();
        let st = SpacetimeGrid::plane(UniformAxis::cells(-6.0, 6.0, 40).unwrap(), UniformAxis::cells(-6.0, 6.0, 40).unwrap());
        let f = evaluate_field(&psi, &k, &st).unwrap();
        let idx = [0usize, 333, 801, 1599];
        let o = oracle_direct_field(&psi, &k, &idx.iter().map(|i| st.point(*i)).collect::<Vec<_>>()).unwrap();
        for (j, i) in idx.iter().enumerate() {
            for g in 0..2 {
                assert!((f.component(g, 0)[*i] - o[j][g]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn gaunt_coefficients_match_closed_forms() {
        let ga = Gaunt::new(2);
        // conj(Y_00) Y_00 = 1 / (4 pi) = Y_00 / sqrt(4 pi).
        let want = 1.0 / (4.0 * PI).sqrt();
        assert!((ga.get((0, 0), (0, 0), (0, 0)) - want).norm() < 1e-14);
        // conj(Y_1n) Y_1n integrates against Y_00 to 1 / sqrt(4 pi).
        assert!((ga.get((0, 0), (1, 1), (1, 1)) - want).norm() < 1e-14);
        assert_eq!(ga.get((1, 0), (1, 0), (1, 0)), ZERO);
    }

    #[test]
    fn polar_field_matches_oracle() {
        let grid = MassShellGrid::mink4(AxisGrid::midpoint(0.6, 1.4, 6).unwrap(), AxisGrid::midpoint(0.0, 1.2, 8).unwrap(), 2)
            .unwrap();
        let psi = random_state(&grid, 1, 2).unwrap();
        let k = crate::kernel::random_isometric_kernel(SpacetimeDim::Mink4, 1, 2, grid.mass_axis().nodes(), 1).unwrap();
        let st = SpacetimeGrid::polar(UniformAxis::cells(-4.0, 4.0, 8).unwrap(), 4.0, 8, 9).unwrap();
        let f = evaluate_field(&psi, &k, &st).unwrap();
        let idx = [0usize, 1234, 3000, st.len() - 1];
        let pts: Vec<Vec<f64>> = idx.iter().map(|i| st.point(*i)).collect();
        let o = oracle_direct_field(&psi, &k, &pts).unwrap();
        for (j, i) in idx.iter().enumerate() {
            for g in 0..2 {
                for w in 0..9 {
                    let fast = f.component(g, w)[*i];
                    assert!((fast - o[j][g * 9 + w]).norm() < 1e-10, "{i} {g} {w}: {fast} vs {}", o[j][g * 9 + w]);
                }
            }
        }
    }
}
