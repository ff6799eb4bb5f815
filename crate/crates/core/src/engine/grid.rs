//! Spacetime sampling grids and event regions.

use serde::{Deserialize, Serialize};

use crate::special::gauss_legendre;
use crate::state::{AxisGrid, SpacetimeDim};
use crate::{Error, Result};

/// Equispaced nodes `start + i * step`, `i = 0..len`, each the center of a
/// cell of width `step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformAxis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformAxis {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if len == 0 || !(step > 0.0) || !start.is_finite() || !step.is_finite() {
            return Err(Error::InvalidGrid(format!("bad axis start={start} step={step} len={len}")));
        }
        Ok(UniformAxis { start, step, len })
    }

    /// Cell centers of `n` equal cells covering `[min, max]`.
    pub fn cells(min: f64, max: f64, n: usize) -> Result<Self> {
        if n == 0 || !(max > min) {
            return Err(Error::InvalidGrid(format!("bad axis [{min}, {max}] with {n} cells")));
        }
        let h = (max - min) / n as f64;
        UniformAxis::new(min + 0.5 * h, h, n)
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.node(i)).collect()
    }

    /// Lower and upper edge of the sampled box.
    pub fn bounds(&self) -> (f64, f64) {
        (self.start - 0.5 * self.step, self.node(self.len - 1) + 0.5 * self.step)
    }

    /// Fraction of cell `i` inside `[a, b]`.
    pub fn overlap(&self, i: usize, a: f64, b: f64) -> f64 {
        let c = self.node(i);
        let lo = (c - 0.5 * self.step).max(a);
        let hi = (c + 0.5 * self.step).min(b);
        ((hi - lo) / self.step).clamp(0.0, 1.0)
    }
}

/// Product rule on the unit sphere: Gauss-Legendre in `cos theta`, uniform in
/// `phi`. Integrates spherical polynomials of degree `<= degree` exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereQuadrature {
    pub degree: usize,
    pub cos_theta: Vec<f64>,
    pub phi: Vec<f64>,
    directions: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl SphereQuadrature {
    pub fn exact_to(degree: usize) -> Self {
        let n_theta = degree / 2 + 1;
        let n_phi = degree + 1;
        let (ct, wt) = gauss_legendre(n_theta);
        let phi: Vec<f64> = (0..n_phi).map(|p| 2.0 * std::f64::consts::PI * p as f64 / n_phi as f64).collect();
        let mut directions = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (c, w) in ct.iter().zip(&wt) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for p in &phi {
                directions.push([s * p.cos(), s * p.sin(), *c]);
                weights.push(w * 2.0 * std::f64::consts::PI / n_phi as f64);
            }
        }
        SphereQuadrature { degree, cos_theta: ct, phi, directions, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn direction(&self, a: usize) -> [f64; 3] {
        self.directions[a]
    }

    pub fn weight(&self, a: usize) -> f64 {
        self.weights[a]
    }

    /// `(cos theta, phi)` of node `a`.
    pub fn angles(&self, a: usize) -> (f64, f64) {
        (self.cos_theta[a / self.phi.len()], self.phi[a % self.phi.len()])
    }
}

/// Spacetime sampling. The 3+1 grid is polar: uniform `t`, uniform radial
/// cells starting at `r = 0`, and a sphere rule for directions; point index
/// `(it * n_r + ir) * n_sphere + a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dim", rename_all = "snake_case")]
pub enum SpacetimeGrid {
    Time1 { t: UniformAxis },
    Mink2 { t: UniformAxis, x: UniformAxis },
    Mink4 { t: UniformAxis, r: UniformAxis, sphere: SphereQuadrature },
}

impl SpacetimeGrid {
    pub fn time(t: UniformAxis) -> Self {
        SpacetimeGrid::Time1 { t }
    }

    pub fn plane(t: UniformAxis, x: UniformAxis) -> Self {
        SpacetimeGrid::Mink2 { t, x }
    }

    /// Polar grid with `n_r` radial cells on `[0, r_max]` and a sphere rule of
    /// the given exactness degree.
    pub fn polar(t: UniformAxis, r_max: f64, n_r: usize, sphere_degree: usize) -> Result<Self> {
        let r = UniformAxis::cells(0.0, r_max, n_r)?;
        Ok(SpacetimeGrid::Mink4 { t, r, sphere: SphereQuadrature::exact_to(sphere_degree) })
    }

    /// Time grid conjugate to a uniform energy axis: `M` nodes `t_m = m dt`,
    /// `m = -M/2 .. M/2 - 1`, `dt = 2 pi / (M dE)`. On this grid the field is
    /// a discrete Fourier transform and Parseval holds exactly for `M >= N`.
    pub fn conjugate_time(energy: &AxisGrid, m: usize) -> Result<Self> {
        let de = energy
            .uniform_step()
            .ok_or_else(|| Error::InvalidGrid("conjugate time grid needs a uniform energy axis".into()))?;
        if m < energy.len() {
            return Err(Error::Aliasing(format!("{m} time nodes cannot resolve {} energy nodes", energy.len())));
        }
        let dt = 2.0 * std::f64::consts::PI / (m as f64 * de);
        Ok(SpacetimeGrid::Time1 { t: UniformAxis::new(-((m / 2) as f64) * dt, dt, m)? })
    }

    pub fn dim(&self) -> SpacetimeDim {
        match self {
            SpacetimeGrid::Time1 { .. } => SpacetimeDim::Time1,
            SpacetimeGrid::Mink2 { .. } => SpacetimeDim::Mink2,
            SpacetimeGrid::Mink4 { .. } => SpacetimeDim::Mink4,
        }
    }

    pub fn time_axis(&self) -> &UniformAxis {
        match self {
            SpacetimeGrid::Time1 { t } | SpacetimeGrid::Mink2 { t, .. } | SpacetimeGrid::Mink4 { t, .. } => t,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SpacetimeGrid::Time1 { t } => t.len,
            SpacetimeGrid::Mink2 { t, x } => t.len * x.len,
            SpacetimeGrid::Mink4 { t, r, sphere } => t.len * r.len * sphere.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian coordinates of point `i`.
    pub fn point(&self, i: usize) -> Vec<f64> {
        match self {
            SpacetimeGrid::Time1 { t } => vec![t.node(i)],
            SpacetimeGrid::Mink2 { t, x } => vec![t.node(i / x.len), x.node(i % x.len)],
            SpacetimeGrid::Mink4 { t, r, sphere } => {
                let (it, rest) = (i / (r.len * sphere.len()), i % (r.len * sphere.len()));
                let (ir, a) = (rest / sphere.len(), rest % sphere.len());
                let (rv, n) = (r.node(ir), sphere.direction(a));
                vec![t.node(it), rv * n[0], rv * n[1], rv * n[2]]
            }
        }
    }

    /// Quadrature weight of point `i` for `d^d x`.
    pub fn weight(&self, i: usize) -> f64 {
        match self {
            SpacetimeGrid::Time1 { t } => t.step,
            SpacetimeGrid::Mink2 { t, x } => t.step * x.step,
            SpacetimeGrid::Mink4 { t, r, sphere } => {
                let ir = (i / sphere.len()) % r.len;
                let rv = r.node(ir);
                t.step * rv * rv * r.step * sphere.weight(i % sphere.len())
            }
        }
    }

    /// Fraction of point `i`'s cell inside an axis-aligned box. The 3+1 grid
    /// counts whole points by membership.
    pub fn box_fraction(&self, i: usize, b: &EventBox) -> f64 {
        match self {
            SpacetimeGrid::Time1 { t } => t.overlap(i, b.lo(0), b.hi(0)),
            SpacetimeGrid::Mink2 { t, x } => {
                t.overlap(i / x.len, b.lo(0), b.hi(0)) * x.overlap(i % x.len, b.lo(1), b.hi(1))
            }
            SpacetimeGrid::Mink4 { .. } => {
                let p = self.point(i);
                let inside = p.iter().enumerate().all(|(a, v)| *v >= b.lo(a) && *v <= b.hi(a));
                if inside { 1.0 } else { 0.0 }
            }
        }
    }

    /// Whether point `i` lies on the outermost layer of the box.
    pub fn on_boundary(&self, i: usize) -> bool {
        match self {
            SpacetimeGrid::Time1 { t } => i == 0 || i + 1 == t.len,
            SpacetimeGrid::Mink2 { t, x } => {
                let (a, b) = (i / x.len, i % x.len);
                a == 0 || a + 1 == t.len || b == 0 || b + 1 == x.len
            }
            SpacetimeGrid::Mink4 { t, r, sphere } => {
                let it = i / (r.len * sphere.len());
                let ir = (i / sphere.len()) % r.len;
                it == 0 || it + 1 == t.len || ir + 1 == r.len
            }
        }
    }

    /// Bounding box `[lo, hi]` per Cartesian coordinate.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match self {
            SpacetimeGrid::Time1 { t } => vec![t.bounds()],
            SpacetimeGrid::Mink2 { t, x } => vec![t.bounds(), x.bounds()],
            SpacetimeGrid::Mink4 { t, r, .. } => {
                let rmax = r.bounds().1;
                vec![t.bounds(), (-rmax, rmax), (-rmax, rmax), (-rmax, rmax)]
            }
        }
    }
}

/// Axis-aligned box; `None` bounds are unbounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventBox {
    pub lo: Vec<Option<f64>>,
    pub hi: Vec<Option<f64>>,
}

impl EventBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        EventBox { lo: lo.into_iter().map(Some).collect(), hi: hi.into_iter().map(Some).collect() }
    }

    pub fn lo(&self, a: usize) -> f64 {
        self.lo[a].unwrap_or(f64::NEG_INFINITY)
    }

    pub fn hi(&self, a: usize) -> f64 {
        self.hi[a].unwrap_or(f64::INFINITY)
    }

    pub fn is_empty(&self) -> bool {
        (0..self.lo.len()).any(|a| self.hi(a) <= self.lo(a))
    }
}

/// Borel set for probabilities: a finite union of disjoint boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRegion {
    pub boxes: Vec<EventBox>,
}

impl EventRegion {
    pub fn single(b: EventBox) -> Self {
        EventRegion { boxes: vec![b] }
    }

    pub fn empty() -> Self {
        EventRegion { boxes: Vec::new() }
    }

    /// The whole spacetime.
    pub fn everything(dim: SpacetimeDim) -> Self {
        let d = dim.coords();
        EventRegion::single(EventBox { lo: vec![None; d], hi: vec![None; d] })
    }

    pub fn check(&self, dim: SpacetimeDim) -> Result<()> {
        for b in &self.boxes {
            if b.lo.len() != dim.coords() || b.hi.len() != dim.coords() {
                return Err(Error::DimensionMismatch(format!(
                    "region box has {} coordinates, spacetime {}",
                    b.lo.len(),
                    dim.coords()
                )));
            }
        }
        let live: Vec<&EventBox> = self.boxes.iter().filter(|b| !b.is_empty()).collect();
        for (i, a) in live.iter().enumerate() {
            for b in &live[i + 1..] {
                if (0..dim.coords()).all(|c| a.lo(c).max(b.lo(c)) < a.hi(c).min(b.hi(c))) {
                    return Err(Error::InvalidParameter("region boxes overlap".into()));
                }
            }
        }
        Ok(())
    }

    /// Whether some box reaches beyond the sampled grid box.
    pub fn exceeds(&self, grid: &SpacetimeGrid) -> bool {
        let bounds = grid.bounds();
        self.boxes.iter().filter(|b| !b.is_empty()).any(|b| {
            bounds.iter().enumerate().any(|(a, (lo, hi))| b.lo(a) < lo - 1e-12 || b.hi(a) > hi + 1e-12)
        })
    }

    /// Weight of point `i` in the region (sum over boxes, clamped to 1).
    pub fn fraction(&self, grid: &SpacetimeGrid, i: usize) -> f64 {
        self.boxes.iter().filter(|b| !b.is_empty()).map(|b| grid.box_fraction(i, b)).sum::<f64>().min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::spherical_harmonics;

    #[test]
    fn overlapping_boxes_are_rejected() {
        let a = EventBox::new(vec![0.0, 0.0], vec![2.0, 2.0]);
        let touching = EventBox::new(vec![2.0, 0.0], vec![3.0, 2.0]);
        let inside = EventBox::new(vec![1.0, 1.0], vec![1.5, 1.5]);
        assert!(EventRegion { boxes: vec![a.clone(), touching] }.check(SpacetimeDim::Mink2).is_ok());
        assert!(EventRegion { boxes: vec![a, inside] }.check(SpacetimeDim::Mink2).is_err());
    }

    #[test]
    fn cell_overlap() {
        let ax = UniformAxis::cells(0.0, 1.0, 4).unwrap();
        assert_eq!(ax.nodes(), vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(ax.overlap(0, 0.0, 0.125), 0.5);
        assert_eq!(ax.overlap(1, 0.0, 0.125), 0.0);
        assert_eq!(ax.overlap(3, f64::NEG_INFINITY, f64::INFINITY), 1.0);
    }

    #[test]
    fn sphere_rule_is_exact_for_harmonic_products() {
        let q = SphereQuadrature::exact_to(8);
        let mut worst: f64 = 0.0;
        for a in 0..25 {
            for b in 0..25 {
                let mut s = num_complex::Complex64::new(0.0, 0.0);
                for i in 0..q.len() {
                    let (c, p) = q.angles(i);
                    let y = spherical_harmonics(4, c, p);
                    s += y[a].conj() * y[b] * q.weight(i);
                }
                let id = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - id).norm());
            }
        }
        assert!(worst < 1e-13, "{worst}");
    }

    #[test]
    fn conjugate_time_grid() {
        let e = AxisGrid::midpoint(1.0, 5.0, 64).unwrap();
        let SpacetimeGrid::Time1 { t } = SpacetimeGrid::conjugate_time(&e, 128).unwrap() else { panic!() };
        assert_eq!(t.len, 128);
        assert!((t.node(64)).abs() < 1e-15);
        assert!((t.step * 128.0 * 4.0 / 64.0 - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!(matches!(SpacetimeGrid::conjugate_time(&e, 32), Err(Error::Aliasing(_))));
    }

    #[test]
    fn polar_volume() {
        let g = SpacetimeGrid::polar(UniformAxis::cells(0.0, 1.0, 1).unwrap(), 2.0, 400, 4).unwrap();
        let v: f64 = (0..g.len()).map(|i| g.weight(i)).sum();
        let want = 4.0 / 3.0 * std::f64::consts::PI * 8.0;
        assert!((v - want).abs() < 1e-4 * want);
    }

    #[test]
    fn region_fractions() {
        let g = SpacetimeGrid::plane(UniformAxis::cells(-1.0, 1.0, 4).unwrap(), UniformAxis::cells(-1.0, 1.0, 4).unwrap());
        let half = EventRegion::single(EventBox { lo: vec![Some(0.0), None], hi: vec![None, None] });
        let total: f64 = (0..g.len()).map(|i| half.fraction(&g, i) * g.weight(i)).sum();
        assert!((total - 2.0).abs() < 1e-14);
        assert!(half.exceeds(&g));
        assert!(!EventRegion::single(EventBox::new(vec![-0.5, -0.5], vec![0.5, 0.5])).exceeds(&g));
        assert_eq!(EventRegion::empty().fraction(&g, 3), 0.0);
    }
}
