//! Scenario files: one JSON document describing grids, state, kernel,
//! requested outputs and verification settings.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::engine::{EventRegion, SpacetimeGrid, UniformAxis};
use crate::kernel::{random_isometric_kernel, random_unitary, GammaPoint, KernelFamily, KernelMode};
use crate::lorentz::Su2;
use crate::state::{make_test_state, AxisGrid, Homogeneous, MassShellGrid, PoincareElement, StateRecipe, WaveFunction};
use crate::verify::{self, CheckResult};
use crate::{Error, Result};

/// Environment variable multiplying every tolerance of a scenario.
pub const TOLERANCE_SCALE_VAR: &str = "COVPOV_TOL_SCALE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub state_grid: StateGridSpec,
    pub state: StateRecipe,
    pub kernel: KernelSpec,
    pub spacetime: SpacetimeSpec,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Midpoint rule on `[min, max]` with `n` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl AxisSpec {
    fn axis(&self) -> Result<AxisGrid> {
        AxisGrid::midpoint(self.min, self.max, self.n)
    }

    fn cells(&self) -> Result<UniformAxis> {
        UniformAxis::cells(self.min, self.max, self.n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dim", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateGridSpec {
    Time1 { energy: AxisSpec },
    Mink2 { mass: AxisSpec, rapidity: AxisSpec },
    Mink4 { mass: AxisSpec, rapidity: AxisSpec, l_max: usize },
}

impl StateGridSpec {
    pub fn build(&self) -> Result<MassShellGrid> {
        match self {
            StateGridSpec::Time1 { energy } => MassShellGrid::time1(energy.axis()?),
            StateGridSpec::Mink2 { mass, rapidity } => MassShellGrid::mink2(mass.axis()?, rapidity.axis()?),
            StateGridSpec::Mink4 { mass, rapidity, l_max } => {
                MassShellGrid::mink4(mass.axis()?, rapidity.axis()?, *l_max)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `F = 1`, one label per channel.
    Trivial {
        #[serde(default = "one")]
        channels: usize,
        #[serde(default = "one_f")]
        q: f64,
    },
    /// Seeded smooth isometry.
    RandomIsometric { channels: usize, labels: usize, seed: u64 },
    /// Explicit table, `values[(m * labels + gamma) * channels + sigma] = [re, im]`.
    Explicit {
        gammas: Vec<GammaPoint>,
        channels: usize,
        values: Vec<[f64; 2]>,
        #[serde(default)]
        subnormalized: bool,
    },
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn build(&self, grid: &MassShellGrid) -> Result<KernelFamily> {
        let dim = grid.dim();
        let nodes = grid.mass_axis().nodes();
        match self {
            KernelSpec::Trivial { channels, q } => KernelFamily::trivial(dim, *channels, nodes, *q),
            KernelSpec::RandomIsometric { channels, labels, seed } => {
                random_isometric_kernel(dim, *channels, *labels, nodes, *seed)
            }
            KernelSpec::Explicit { gammas, channels, values, subnormalized } => KernelFamily::new(
                dim,
                gammas.clone(),
                *channels,
                nodes.to_vec(),
                values.iter().map(|v| Complex64::new(v[0], v[1])).collect(),
                if *subnormalized { KernelMode::Subnormalized } else { KernelMode::Normalized },
            ),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            KernelSpec::Trivial { channels, .. }
            | KernelSpec::RandomIsometric { channels, .. }
            | KernelSpec::Explicit { channels, .. } => *channels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dim", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpacetimeSpec {
    /// Time axis conjugate to the energy grid, with `samples` points.
    Time1 { samples: usize },
    Mink2 { t: AxisSpec, x: AxisSpec },
    Mink4 { t: AxisSpec, r_max: f64, n_r: usize, sphere_degree: usize },
}

impl SpacetimeSpec {
    pub fn build(&self, grid: &MassShellGrid) -> Result<SpacetimeGrid> {
        let g = match self {
            SpacetimeSpec::Time1 { samples } => SpacetimeGrid::conjugate_time(grid.mass_axis(), *samples)?,
            SpacetimeSpec::Mink2 { t, x } => SpacetimeGrid::plane(t.cells()?, x.cells()?),
            SpacetimeSpec::Mink4 { t, r_max, n_r, sphere_degree } => {
                SpacetimeGrid::polar(t.cells()?, *r_max, *n_r, *sphere_degree)?
            }
        };
        if g.dim() != grid.dim() {
            return Err(Error::Scenario(format!(
                "spacetime: {:?} grid for a {:?} state grid",
                g.dim(),
                grid.dim()
            )));
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedRegion {
    pub name: String,
    pub region: EventRegion,
}

/// Region plus basis states, orthonormalized in the listed order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauSpec {
    pub region: EventRegion,
    pub basis: Vec<StateRecipe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "yes")]
    pub density: bool,
    #[serde(default = "yes")]
    pub moments: bool,
    #[serde(default)]
    pub regions: Vec<NamedRegion>,
    #[serde(default)]
    pub tau: Option<TauSpec>,
    #[serde(default)]
    pub verify: Option<VerifySpec>,
}

fn yes() -> bool {
    true
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { density: true, moments: true, regions: Vec::new(), tau: None, verify: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationSpec {
    pub axis: [f64; 3],
    pub angle: f64,
}

/// `(y, Lambda)` with at most one of boost and rotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpec {
    #[serde(default)]
    pub translation: Option<Vec<f64>>,
    #[serde(default)]
    pub boost: Option<f64>,
    #[serde(default)]
    pub rotation: Option<RotationSpec>,
    /// Overrides the tolerance picked from the element type.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl ElementSpec {
    pub fn build(&self, d: usize) -> Result<PoincareElement> {
        let translation = self.translation.clone().unwrap_or_else(|| vec![0.0; d]);
        let homogeneous = match (self.boost, self.rotation) {
            (Some(_), Some(_)) => return Err(Error::Scenario("element: give a boost or a rotation, not both".into())),
            (Some(z), None) => Homogeneous::Boost(z),
            (None, Some(r)) => Homogeneous::Rotation(Su2::axis_angle(r.axis, r.angle)?),
            (None, None) => Homogeneous::Identity,
        };
        Ok(PoincareElement { translation, homogeneous })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default)]
    pub covariance: Vec<ElementSpec>,
    #[serde(default)]
    pub moment_shift: Option<Vec<f64>>,
    #[serde(default)]
    pub positivity_seeds: Vec<u64>,
    /// Number of random channel unitaries for the conjugation check.
    #[serde(default)]
    pub conjugation_trials: usize,
    #[serde(default)]
    pub non_projector: Option<TauSpec>,
    #[serde(default)]
    pub subnormal_scale: Option<f64>,
}

/// Tolerances are scenario data; the defaults suit exact-path 1+0 and 1+1
/// grids.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub normalization: f64,
    pub isometry: f64,
    /// Lattice translations.
    pub covariance_exact: f64,
    /// Off-lattice translations and rotations.
    pub covariance_resampled: f64,
    /// Boosts, which go through interpolation on the rapidity grid.
    pub covariance_interpolated: f64,
    pub first_moment: f64,
    pub kernel_conjugation: f64,
    pub spectrum_bound: f64,
    pub non_projector_delta: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            normalization: 1e-8,
            isometry: 1e-12,
            covariance_exact: 1e-12,
            covariance_resampled: 1e-6,
            covariance_interpolated: 1e-4,
            first_moment: 1e-8,
            kernel_conjugation: 1e-10,
            spectrum_bound: 1e-8,
            non_projector_delta: verify::NON_PROJECTOR_DELTA,
        }
    }
}

impl Tolerances {
    /// Every tolerance times `s`; the interior margin is left alone.
    pub fn scaled(&self, s: f64) -> Self {
        Tolerances {
            normalization: self.normalization * s,
            isometry: self.isometry * s,
            covariance_exact: self.covariance_exact * s,
            covariance_resampled: self.covariance_resampled * s,
            covariance_interpolated: self.covariance_interpolated * s,
            first_moment: self.first_moment * s,
            kernel_conjugation: self.kernel_conjugation * s,
            spectrum_bound: self.spectrum_bound * s,
            non_projector_delta: self.non_projector_delta,
        }
    }
}

/// Reads the tolerance scale from the environment, defaulting to 1.
pub fn tolerance_scale_from_env() -> Result<f64> {
    match std::env::var(TOLERANCE_SCALE_VAR) {
        Err(_) => Ok(1.0),
        Ok(v) => match v.trim().parse::<f64>() {
            Ok(s) if s > 0.0 && s.is_finite() => Ok(s),
            _ => Err(Error::Scenario(format!("{TOLERANCE_SCALE_VAR}={v:?} is not a positive number"))),
        },
    }
}

/// Everything a scenario builds before any field is evaluated.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub state_grid: MassShellGrid,
    pub psi: WaveFunction,
    pub kernel: KernelFamily,
    pub grid: SpacetimeGrid,
}

impl Scenario {
    /// Parses and schema-checks a scenario. Errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Scenario(format!("{}: {}", e.path(), e.inner())))?;
        s.check()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Cross-reference checks that need no numerics.
    pub fn check(&self) -> Result<()> {
        let dim = match &self.state_grid {
            StateGridSpec::Time1 { .. } => 1,
            StateGridSpec::Mink2 { .. } => 2,
            StateGridSpec::Mink4 { .. } => 4,
        };
        let st = match &self.spacetime {
            SpacetimeSpec::Time1 { .. } => 1,
            SpacetimeSpec::Mink2 { .. } => 2,
            SpacetimeSpec::Mink4 { .. } => 4,
        };
        if dim != st {
            return Err(Error::Scenario(format!("spacetime.dim: {st}-dimensional grid for a {dim}-dimensional state")));
        }
        let mut all: Vec<(String, &EventRegion)> =
            self.outputs.regions.iter().map(|r| (format!("outputs.regions.{}", r.name), &r.region)).collect();
        if let Some(t) = &self.outputs.tau {
            all.push(("outputs.tau.region".into(), &t.region));
        }
        if let Some(v) = &self.outputs.verify {
            if let Some(t) = &v.non_projector {
                all.push(("outputs.verify.non_projector.region".into(), &t.region));
            }
            for (i, e) in v.covariance.iter().enumerate() {
                if let Some(y) = &e.translation {
                    if y.len() != dim {
                        return Err(Error::Scenario(format!("outputs.verify.covariance[{i}].translation: needs {dim} entries")));
                    }
                }
            }
            if let Some(y) = &v.moment_shift {
                if y.len() != dim {
                    return Err(Error::Scenario(format!("outputs.verify.moment_shift: needs {dim} entries")));
                }
            }
        }
        for (name, r) in all {
            if r.boxes.iter().any(|b| b.lo.len() != dim || b.hi.len() != dim) {
                return Err(Error::Scenario(format!("{name}: boxes need {dim} coordinates")));
            }
        }
        Ok(())
    }

    pub fn prepare(&self) -> Result<Prepared> {
        let state_grid = self.state_grid.build()?;
        let psi = make_test_state(&self.state, &state_grid)?;
        let kernel = self.kernel.build(&state_grid)?;
        kernel.check_state(&psi)?;
        let grid = self.spacetime.build(&state_grid)?;
        Ok(Prepared { state_grid, psi, kernel, grid })
    }
}

/// Gram-Schmidt over the recipes in order.
pub fn orthonormal_basis(recipes: &[StateRecipe], grid: &MassShellGrid) -> Result<Vec<WaveFunction>> {
    let mut basis: Vec<WaveFunction> = Vec::new();
    for (i, rcp) in recipes.iter().enumerate() {
        let mut b = make_test_state(rcp, grid)?;
        for _ in 0..2 {
            for e in &basis {
                let ov = e.inner(&b)?;
                b = b.combine(Complex64::new(1.0, 0.0), e, -ov)?;
            }
        }
        if b.norm_squared() < 1e-12 {
            return Err(Error::Scenario(format!("basis[{i}] is linearly dependent on earlier states")));
        }
        basis.push(b.normalized()?);
    }
    Ok(basis)
}

/// Runs the battery requested by the scenario; checks are independent and
/// merged in a fixed order.
pub fn run_verify_suite(s: &Scenario, seed: u64, tol_scale: f64) -> Result<Vec<CheckResult>> {
    let p = s.prepare()?;
    let tol = s.tolerances.scaled(tol_scale);
    let spec = s.outputs.verify.clone().unwrap_or(VerifySpec {
        covariance: Vec::new(),
        moment_shift: None,
        positivity_seeds: Vec::new(),
        conjugation_trials: 0,
        non_projector: None,
        subnormal_scale: None,
    });
    let d = p.grid.dim().coords();
    let mut out = vec![verify::check_isometry(&p.kernel, tol.isometry)];
    out.push(verify::check_normalization(&p.psi, &p.kernel, &p.grid, tol.normalization)?);
    for (i, e) in spec.covariance.iter().enumerate() {
        let g = e.build(d)?;
        let t = e.tolerance.map(|t| t * tol_scale).unwrap_or(match g.homogeneous {
            Homogeneous::Boost(_) => tol.covariance_interpolated,
            Homogeneous::Rotation(_) => tol.covariance_resampled,
            Homogeneous::Identity => tol.covariance_exact,
        });
        let mut r = verify::check_covariance(&p.psi, &p.kernel, &p.grid, &g, t, seed.wrapping_add(i as u64))?;
        r.name = format!("covariance[{i}]");
        out.push(r);
    }
    if let Some(y) = &spec.moment_shift {
        out.push(verify::check_first_moment_shift(&p.psi, &p.kernel, &p.grid, y, tol.first_moment)?);
    }
    let seeds = if spec.positivity_seeds.is_empty() { vec![seed] } else { spec.positivity_seeds.clone() };
    for sd in seeds {
        let mut r = verify::check_positivity(&p.kernel, &p.state_grid, &p.grid, sd)?;
        r.name = format!("positivity[seed {sd}]");
        out.push(r);
    }
    if let Some(t) = &spec.non_projector {
        let basis = orthonormal_basis(&t.basis, &p.state_grid)?;
        out.push(verify::check_non_projector(
            &p.kernel,
            &p.grid,
            &t.region,
            &basis,
            tol.non_projector_delta,
            tol.spectrum_bound,
        )?);
    }
    for trial in 0..spec.conjugation_trials {
        let n = p.kernel.n_sigma();
        let v: Vec<DMatrix<Complex64>> = (0..p.state_grid.mass_axis().len())
            .map(|m| random_unitary(n, seed.wrapping_mul(1_000_003).wrapping_add((trial * 4096 + m) as u64)))
            .collect();
        let mut r = verify::check_kernel_conjugation(&p.psi, &p.kernel, &v, &p.grid, tol.kernel_conjugation)?;
        r.name = format!("kernel_conjugation[{trial}]");
        out.push(r);
    }
    if let Some(sc) = spec.subnormal_scale {
        out.push(verify::check_subnormalization(&p.psi, &p.kernel, &p.grid, sc, tol.normalization)?);
    }
    Ok(out)
}
