//! First-order upwind discretization of `U_t + ΛU_x = (K/ε)U` on `[0, L]`
//! with constant inflow at `x = 0`, plus the energy and norm diagnostics of
//! the perturbation `Φ = U − B` around a steady state.
//!
//! All velocities are positive, so every characteristic enters at `x = 0`:
//! the inflow node is pinned to `U₀(0)` and no condition is imposed at
//! `x = L`. Advection is explicit upwind; the reaction is either forward
//! Euler or backward Euler (IMEX), applied after the advection sub-step.
//!
//! The discrete energy is `E = Σ_j w_j Φ_jᵀ A₀ Φ_j` (trapezoid weights `w_j`),
//! the dissipation rate is `Σ_j w_j Σ_{i≥2} V_{j,i}²` with `V = PΦ`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::max_norm;
use crate::relaxation::StabilityCertificate;
use crate::steady::{SteadyError, SteadyProfile};
use crate::system_model::{InitialData, ModelError, SystemSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("grid needs at least 8 cells, got {0}")]
    TooFewCells(usize),
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("cfl must lie in (0, 1], got {0}")]
    BadCfl(f64),
    #[error("initial data incompatible with the inflow boundary: |Phi(0,0)| = {phi0:e}, |Phi_x(0,0)| = {slope:e}")]
    Compatibility { phi0: f64, slope: f64 },
    #[error("non-finite value after step {step}")]
    NonFinite { step: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("initial data: {0}")]
    InitialData(#[from] ModelError),
    #[error("steady state: {0}")]
    Steady(#[from] SteadyError),
    #[error("singular matrix in the {0} solve")]
    Singular(&'static str),
}

/// Uniform grid `x_j = j·dx`, `j = 0..=n_cells`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub length: f64,
    pub n_cells: usize,
    pub dx: f64,
    pub warnings: Vec<String>,
}

impl Grid {
    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_cells).map(|j| self.x(j))
    }

    fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n_cells;
        let dx = self.dx;
        (0..=n).map(move |j| if j == 0 || j == n { 0.5 * dx } else { dx })
    }
}

/// Builds the grid; warns when the domain is shorter than five layer widths.
pub fn make_grid(x_max: f64, n_cells: usize, layer_width: Option<f64>) -> Result<Grid, SolverError> {
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(SolverError::NonPositive("x_max"));
    }
    if n_cells < 8 {
        return Err(SolverError::TooFewCells(n_cells));
    }
    let mut warnings = Vec::new();
    if let Some(w) = layer_width {
        if x_max < 5.0 * w {
            let msg = format!(
                "domain length {x_max} is shorter than 5 layer widths ({:.6})",
                5.0 * w
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(Grid {
        length: x_max,
        n_cells,
        dx: x_max / n_cells as f64,
        warnings,
    })
}

/// Solution on the grid at time `t`; row `j` holds `U(x_j, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub t: f64,
    pub u: DMatrix<f64>,
    pub inflow: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Explicit,
    Imex,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Explicit => "explicit",
            Scheme::Imex => "imex",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompatMode {
    Strict,
    Permissive,
}

/// Which steady state the perturbation `Φ` is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// The fixed point of the discrete scheme with the same inflow.
    Discrete,
    /// The exact profile sampled on the nodes.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub cfl: f64,
    pub scheme: Scheme,
    pub t_end: f64,
    pub output_stride: usize,
    pub compat: CompatMode,
    pub compat_tol: f64,
    pub reference: Reference,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            cfl: 0.9,
            scheme: Scheme::Imex,
            t_end: 40.0,
            output_stride: 10,
            compat: CompatMode::Strict,
            compat_tol: 1e-10,
            reference: Reference::Discrete,
        }
    }
}

/// Uniform time step landing exactly on `t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStep {
    pub dt: f64,
    pub n_steps: usize,
    /// Whether the explicit reaction bound, not the CFL, set the step.
    pub reaction_limited: bool,
}

pub fn time_step(spec: &SystemSpec, grid: &Grid, config: &SchemeConfig) -> Result<TimeStep, SolverError> {
    if !(config.cfl > 0.0 && config.cfl <= 1.0) {
        return Err(SolverError::BadCfl(config.cfl));
    }
    if !(config.t_end >= 0.0 && config.t_end.is_finite()) {
        return Err(SolverError::NonPositive("t_end"));
    }
    let lmax = spec.lambda().max_speed();
    let dt_adv = config.cfl * grid.dx / lmax;
    let mut dt_max = dt_adv;
    let mut reaction_limited = false;
    if config.scheme == Scheme::Explicit {
        let knorm = max_norm(&spec.effective_rates());
        if knorm > 0.0 && dt_adv * knorm > 1.0 {
            dt_max = 1.0 / knorm;
            reaction_limited = true;
            log::warn!("explicit reaction bound reduces dt from {dt_adv:e} to {dt_max:e}");
        }
    }
    if config.t_end == 0.0 {
        return Ok(TimeStep {
            dt: dt_max,
            n_steps: 0,
            reaction_limited,
        });
    }
    let n_steps = (config.t_end / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok(TimeStep {
        dt: config.t_end / n_steps as f64,
        n_steps,
        reaction_limited,
    })
}

/// One-step map of the scheme with a fixed `dt`.
#[derive(Debug, Clone)]
pub struct Stepper {
    courant: DVector<f64>,
    /// Row-vector form of the reaction update: `u_row ← u_row · reactionᵀ`.
    reaction_t: DMatrix<f64>,
    k_dt: DMatrix<f64>,
    scheme: Scheme,
    dt: f64,
}

impl Stepper {
    pub fn new(spec: &SystemSpec, grid: &Grid, scheme: Scheme, dt: f64) -> Result<Self, SolverError> {
        let r = spec.dim();
        let k_dt = spec.effective_rates() * dt;
        let eye = DMatrix::<f64>::identity(r, r);
        let reaction = match scheme {
            Scheme::Explicit => &eye + &k_dt,
            // (I − dt K) is factorized once; r is small, so its inverse is kept.
            Scheme::Imex => (&eye - &k_dt)
                .lu()
                .try_inverse()
                .ok_or(SolverError::Singular("implicit reaction"))?,
        };
        Ok(Self {
            courant: spec.lambda().diagonal() * (dt / grid.dx),
            reaction_t: reaction.transpose(),
            k_dt,
            scheme,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn advect(&self, u: &DMatrix<f64>, inflow: &DVector<f64>) -> DMatrix<f64> {
        let (n, r) = u.shape();
        let mut out = DMatrix::zeros(n, r);
        for i in 0..r {
            let nu = self.courant[i];
            let src = u.column(i);
            let mut dst = out.column_mut(i);
            dst[0] = inflow[i];
            for j in 1..n {
                dst[j] = src[j] - nu * (src[j] - src[j - 1]);
            }
        }
        out
    }

    /// Advances one step; also returns the state the reaction acted on
    /// (post-advection for the explicit scheme, post-step for IMEX).
    pub fn step_detailed(&self, state: &GridState, index: usize) -> Result<(GridState, DMatrix<f64>), SolverError> {
        let advected = self.advect(&state.u, &state.inflow);
        let mut u = &advected * &self.reaction_t;
        u.row_mut(0).copy_from(&state.inflow.transpose());
        if u.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite { step: index });
        }
        let reacted = match self.scheme {
            Scheme::Explicit => advected,
            Scheme::Imex => u.clone(),
        };
        Ok((
            GridState {
                t: state.t + self.dt,
                u,
                inflow: state.inflow.clone(),
            },
            reacted,
        ))
    }

    pub fn step(&self, state: &GridState) -> Result<GridState, SolverError> {
        Ok(self.step_detailed(state, 0)?.0)
    }

    /// Fixed point of the step map with the given inflow, marched node by node.
    pub fn fixed_point(&self, inflow: &DVector<f64>, n_nodes: usize) -> Result<DMatrix<f64>, SolverError> {
        let r = inflow.len();
        let eye = DMatrix::<f64>::identity(r, r);
        let courant = DMatrix::from_diagonal(&self.courant);
        let (lhs, rhs) = match self.scheme {
            // (I − dtK)⁻¹((I − N)u_j + N u_{j−1}) = u_j  ⇔  (N − dtK) u_j = N u_{j−1}
            Scheme::Imex => (&courant - &self.k_dt, courant.clone()),
            // (I + dtK)((I − N)u_j + N u_{j−1}) = u_j
            Scheme::Explicit => {
                let t = &eye + &self.k_dt;
                (&eye - &t * (&eye - &courant), &t * &courant)
            }
        };
        let lu = lhs.lu();
        let mut out = DMatrix::zeros(n_nodes, r);
        out.row_mut(0).copy_from(&inflow.transpose());
        for j in 1..n_nodes {
            let prev: DVector<f64> = out.row(j - 1).transpose();
            let next = lu
                .solve(&(&rhs * prev))
                .ok_or(SolverError::Singular("discrete steady state"))?;
            out.row_mut(j).copy_from(&next.transpose());
        }
        Ok(out)
    }
}

/// One step with the run's time step.
pub fn step(spec: &SystemSpec, grid: &Grid, config: &SchemeConfig, state: &GridState) -> Result<GridState, SolverError> {
    let ts = time_step(spec, grid, config)?;
    Stepper::new(spec, grid, config.scheme, ts.dt)?.step(state)
}

/// Discrete equilibrium of the scheme used by `config`, with inflow `b0`.
pub fn discrete_steady_state(
    spec: &SystemSpec,
    grid: &Grid,
    config: &SchemeConfig,
    b0: &DVector<f64>,
) -> Result<DMatrix<f64>, SolverError> {
    let ts = time_step(spec, grid, config)?;
    Stepper::new(spec, grid, config.scheme, ts.dt)?.fixed_point(b0, grid.n_nodes())
}

/// Sample the exact profile on the nodes.
pub fn sample_profile(profile: &SteadyProfile, grid: &Grid) -> Result<DMatrix<f64>, SolverError> {
    let r = profile.dim();
    let mut out = DMatrix::zeros(grid.n_nodes(), r);
    for (j, x) in grid.nodes().enumerate() {
        out.row_mut(j).copy_from(&profile.eval(x)?.transpose());
    }
    Ok(out)
}

/// `U₀ = B`, with the exact slope attached.
pub fn steady_data(profile: &SteadyProfile) -> InitialData {
    let (p, q) = (profile.clone(), profile.clone());
    InitialData::closed_with_slope(
        profile.dim(),
        move |x| p.eval(x.max(0.0)).expect("profile is defined on x >= 0"),
        move |x| q.derivative(x.max(0.0)).expect("profile is defined on x >= 0"),
    )
}

/// `U₀ = B + A x² exp(−(x − x₀)²/σ²)·(1,…,1)`; value and slope of the bump vanish at 0.
pub fn bump_data(profile: &SteadyProfile, amplitude: f64, center: f64, width: f64) -> InitialData {
    let (p, q) = (profile.clone(), profile.clone());
    let gauss = move |x: f64| (-((x - center) / width).powi(2)).exp();
    InitialData::closed_with_slope(
        profile.dim(),
        move |x| {
            let bump = amplitude * x * x * gauss(x);
            p.eval(x.max(0.0)).expect("profile is defined on x >= 0").add_scalar(bump)
        },
        move |x| {
            let g = gauss(x);
            let slope = amplitude * g * (2.0 * x - 2.0 * x * x * (x - center) / (width * width));
            q.derivative(x.max(0.0)).expect("profile is defined on x >= 0").add_scalar(slope)
        },
    )
}

/// Compatibility residuals recorded at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityResiduals {
    /// `|Φ(0,0)|_∞`.
    pub phi0: f64,
    /// `|U₀'(0) − B'(0)|_∞`, with `U₀'(0)` from [`InitialData::slope_at_zero`].
    pub slope: f64,
}

pub fn initialize(
    spec: &SystemSpec,
    u0: &InitialData,
    grid: &Grid,
    profile: &SteadyProfile,
    config: &SchemeConfig,
) -> Result<(GridState, CompatibilityResiduals), SolverError> {
    let r = spec.dim();
    if u0.dim() != r || profile.dim() != r {
        return Err(SolverError::Dimension(format!(
            "system r = {r}, initial data r = {}, profile r = {}",
            u0.dim(),
            profile.dim()
        )));
    }
    let mut u = DMatrix::zeros(grid.n_nodes(), r);
    for (j, x) in grid.nodes().enumerate() {
        u.row_mut(j).copy_from(&u0.eval(x)?.transpose());
    }
    let b = sample_profile(profile, grid)?;
    let phi = &u - &b;
    let phi0 = phi.row(0).amax();
    let slope = (u0.slope_at_zero()? - profile.derivative(0.0)?).amax();
    let residuals = CompatibilityResiduals { phi0, slope };
    if phi0 > config.compat_tol || slope > config.compat_tol {
        match config.compat {
            CompatMode::Strict => return Err(SolverError::Compatibility { phi0, slope }),
            CompatMode::Permissive => log::warn!(
                "running with incompatible initial data: |Phi(0,0)| = {phi0:e}, |Phi_x(0,0)| = {slope:e}"
            ),
        }
    }
    let inflow = u.row(0).transpose();
    Ok((GridState { t: 0.0, u, inflow }, residuals))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSample {
    pub t: f64,
    /// `‖Φ‖_{L²}`.
    pub l2: f64,
    /// `‖Φ‖_{H¹}`.
    pub h1: f64,
    /// `‖Φ‖_{H²}`.
    pub h2: f64,
    /// `max_j |Φ(x_j)|` with the Euclidean norm over components.
    pub sup: f64,
    pub energy: f64,
    pub diss_rate: f64,
    pub cum_diss: f64,
    /// `sup / (√2 ‖Φ‖^{1/2} ‖Φ_x‖^{1/2})`, zero for `Φ ≡ 0`.
    pub gn_ratio: f64,
    /// `‖Φ_x‖_{L²}`.
    pub dx_norm: f64,
    /// `|Φ_x(0)|_∞` and `|Φ_xx(0)|_∞`.
    pub boundary_slope: f64,
    pub boundary_curvature: f64,
    /// `max_j |U(x_j) − B(x_j)|` against the exact profile.
    pub sup_exact: f64,
}

fn first_derivative(f: &DMatrix<f64>, dx: f64) -> DMatrix<f64> {
    let (n, r) = f.shape();
    DMatrix::from_fn(n, r, |j, i| {
        if j == 0 {
            (-3.0 * f[(0, i)] + 4.0 * f[(1, i)] - f[(2, i)]) / (2.0 * dx)
        } else if j == n - 1 {
            (3.0 * f[(j, i)] - 4.0 * f[(j - 1, i)] + f[(j - 2, i)]) / (2.0 * dx)
        } else {
            (f[(j + 1, i)] - f[(j - 1, i)]) / (2.0 * dx)
        }
    })
}

fn second_derivative(f: &DMatrix<f64>, dx: f64) -> DMatrix<f64> {
    let (n, r) = f.shape();
    let h2 = dx * dx;
    DMatrix::from_fn(n, r, |j, i| {
        if j == 0 {
            (2.0 * f[(0, i)] - 5.0 * f[(1, i)] + 4.0 * f[(2, i)] - f[(3, i)]) / h2
        } else if j == n - 1 {
            (2.0 * f[(j, i)] - 5.0 * f[(j - 1, i)] + 4.0 * f[(j - 2, i)] - f[(j - 3, i)]) / h2
        } else {
            (f[(j + 1, i)] - 2.0 * f[(j, i)] + f[(j - 1, i)]) / h2
        }
    })
}

fn weighted_sq(f: &DMatrix<f64>, weights: &[f64]) -> f64 {
    f.row_iter()
        .zip(weights)
        .map(|(row, w)| w * row.norm_squared())
        .sum()
}

/// Trapezoidal `Σ_j w_j Φ_jᵀ A₀ Φ_j`.
pub fn energy(phi: &DMatrix<f64>, a0: &DVector<f64>, grid: &Grid) -> f64 {
    phi.row_iter()
        .zip(grid.weights())
        .map(|(row, w)| w * row.iter().zip(a0.iter()).map(|(v, a)| a * v * v).sum::<f64>())
        .sum()
}

/// Trapezoidal `Σ_j w_j Σ_{i≥2} V_{j,i}²`, `V = PΦ`.
pub fn dissipation_rate(phi: &DMatrix<f64>, p: &DMatrix<f64>, grid: &Grid) -> f64 {
    let v = phi * p.transpose();
    let r = v.ncols();
    v.columns(1, r - 1)
        .row_iter()
        .zip(grid.weights())
        .map(|(row, w)| w * row.norm_squared())
        .sum()
}

/// Diagnostics of a perturbation `Φ` sampled on the grid.
pub fn perturbation_diagnostics(
    phi: &DMatrix<f64>,
    a0: &DVector<f64>,
    p: &DMatrix<f64>,
    grid: &Grid,
    t: f64,
) -> DiagnosticsSample {
    let weights: Vec<f64> = grid.weights().collect();
    let dphi = first_derivative(phi, grid.dx);
    let ddphi = second_derivative(phi, grid.dx);
    let l2_sq = weighted_sq(phi, &weights);
    let dx_sq = weighted_sq(&dphi, &weights);
    let dxx_sq = weighted_sq(&ddphi, &weights);
    let sup = phi
        .row_iter()
        .map(|row| row.norm())
        .fold(0.0_f64, f64::max);
    let denom = 2f64.sqrt() * l2_sq.sqrt().sqrt() * dx_sq.sqrt().sqrt();
    let gn_ratio = if denom > 0.0 { sup / denom } else { 0.0 };
    DiagnosticsSample {
        t,
        l2: l2_sq.sqrt(),
        h1: (l2_sq + dx_sq).sqrt(),
        h2: (l2_sq + dx_sq + dxx_sq).sqrt(),
        sup,
        energy: energy(phi, a0, grid),
        diss_rate: dissipation_rate(phi, p, grid),
        cum_diss: 0.0,
        gn_ratio,
        dx_norm: dx_sq.sqrt(),
        boundary_slope: dphi.row(0).amax(),
        boundary_curvature: ddphi.row(0).amax(),
        sup_exact: sup,
    }
}

/// Diagnostics of `state` measured from the sampled `reference`.
pub fn diagnostics(
    state: &GridState,
    cert: &StabilityCertificate,
    reference: &DMatrix<f64>,
    grid: &Grid,
) -> DiagnosticsSample {
    let phi = &state.u - reference;
    perturbation_diagnostics(&phi, &cert.sym.a0, &cert.split.p, grid, state.t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSeries {
    pub samples: Vec<DiagnosticsSample>,
    /// Sample-to-sample increases of `E` beyond `1e-12·E(0)`.
    pub energy_violations: usize,
    /// Step-to-step increases of `E` beyond `1e-12·E(0)`.
    pub step_energy_violations: usize,
    /// `max_t (E(t) + κ·cum_diss(t)) / E(0)` over all steps.
    pub max_energy_budget: f64,
    /// `κ = min(S) / max(A₀)`.
    pub kappa: f64,
    /// `max_j |B_h(x_j) − B(x_j)|`, discrete versus exact steady state.
    pub steady_floor: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// First sample time with `sup ≤ 10^{-k}·sup(0)`, `k = 1..=8`.
    pub decay_summary: Vec<(f64, Option<f64>)>,
}

impl DiagnosticsSeries {
    pub fn initial(&self) -> Option<&DiagnosticsSample> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&DiagnosticsSample> {
        self.samples.last()
    }

    fn finalize(&mut self) {
        let e0 = self.samples.first().map_or(0.0, |s| s.energy);
        self.energy_violations = self
            .samples
            .windows(2)
            .filter(|w| w[1].energy > w[0].energy + 1e-12 * e0)
            .count();
        self.decay_summary = (1..=8)
            .map(|k| {
                let tol = 10f64.powi(-k);
                (tol, decay_time(self, tol))
            })
            .collect();
    }
}

/// First sample time with `sup ≤ tol·sup(0)`.
pub fn decay_time(series: &DiagnosticsSeries, tol: f64) -> Option<f64> {
    let initial = series.samples.first()?.sup;
    series
        .samples
        .iter()
        .find(|s| s.sup <= tol * initial)
        .map(|s| s.t)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: DiagnosticsSeries,
    pub state: GridState,
    pub compatibility: CompatibilityResiduals,
}

/// A failed run with whatever was recorded before the failure.
#[derive(Debug, Clone, Error)]
#[error("{source}")]
pub struct RunFailure {
    #[source]
    pub source: SolverError,
    pub partial: Option<Box<DiagnosticsSeries>>,
}

impl From<SolverError> for RunFailure {
    fn from(source: SolverError) -> Self {
        Self {
            source,
            partial: None,
        }
    }
}

/// Advances to `t_end`, sampling diagnostics every `output_stride` steps and at the end.
pub fn run(
    spec: &SystemSpec,
    u0: &InitialData,
    grid: &Grid,
    config: &SchemeConfig,
    cert: &StabilityCertificate,
    profile: &SteadyProfile,
) -> Result<RunOutput, RunFailure> {
    let r = spec.dim();
    if cert.sym.a0.len() != r {
        return Err(SolverError::Dimension("certificate does not match the system".into()).into());
    }
    let (mut state, compatibility) = initialize(spec, u0, grid, profile, config)?;
    let ts = time_step(spec, grid, config)?;
    let stepper = Stepper::new(spec, grid, config.scheme, ts.dt)?;

    let exact = sample_profile(profile, grid)?;
    let discrete = stepper.fixed_point(&state.inflow, grid.n_nodes())?;
    let steady_floor = (&discrete - &exact)
        .row_iter()
        .map(|row| row.norm())
        .fold(0.0_f64, f64::max);
    let reference = match config.reference {
        Reference::Discrete => discrete,
        Reference::Exact => exact.clone(),
    };

    let a0 = &cert.sym.a0;
    let p = &cert.split.p;
    let kappa = cert.split.s.min() / a0.max();
    let sup_exact = |u: &DMatrix<f64>| {
        (u - &exact)
            .row_iter()
            .map(|row| row.norm())
            .fold(0.0_f64, f64::max)
    };
    let sample = |state: &GridState, cum: f64| {
        let mut s = diagnostics(state, cert, &reference, grid);
        s.cum_diss = cum;
        s.sup_exact = sup_exact(&state.u);
        s
    };

    let stride = config.output_stride.max(1);
    let mut series = DiagnosticsSeries {
        samples: vec![sample(&state, 0.0)],
        energy_violations: 0,
        step_energy_violations: 0,
        max_energy_budget: 1.0,
        kappa,
        steady_floor,
        dt: ts.dt,
        n_steps: ts.n_steps,
        decay_summary: Vec::new(),
    };
    let e0 = series.samples[0].energy;
    let mut e_prev = e0;
    let mut cum = 0.0;

    for n in 1..=ts.n_steps {
        let (mut next, reacted) = match stepper.step_detailed(&state, n) {
            Ok(v) => v,
            Err(source) => {
                series.finalize();
                return Err(RunFailure {
                    source,
                    partial: Some(Box::new(series)),
                });
            }
        };
        if n == ts.n_steps {
            next.t = config.t_end;
        }
        cum += ts.dt * dissipation_rate(&(&reacted - &reference), p, grid);
        let e = energy(&(&next.u - &reference), a0, grid);
        if e > e_prev + 1e-12 * e0 {
            series.step_energy_violations += 1;
        }
        if e0 > 0.0 {
            series.max_energy_budget = series.max_energy_budget.max((e + kappa * cum) / e0);
        }
        e_prev = e;
        state = next;
        if n % stride == 0 || n == ts.n_steps {
            series.samples.push(sample(&state, cum));
        }
    }
    series.finalize();
    Ok(RunOutput {
        series,
        state,
        compatibility,
    })
}
