//! Boundary-layer steady states `Λ B' = K B` on the half line.
//!
//! With `M = KΛ⁻¹` and `W = ΛB`, the steady equation becomes `W' = MW`, so
//! `B(x) = Λ⁻¹ exp(Mx) Λ B(0)`. `M` has a simple zero eigenvalue with right
//! kernel `Λξ` and left kernel `1ᵀ`; every other mode decays, which makes the
//! profile bounded and gives the far-field limit
//! `B(∞) = ξ (1ᵀΛB(0)) / (1ᵀΛξ)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{complex_eigenvalues, max_norm, vec_max_norm};
use crate::relaxation::{kernel_vector, AnalysisError};
use crate::system_model::{check_rate_assumptions, SystemSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteadyError {
    #[error("generator has {0} near-zero eigenvalues, expected exactly one")]
    ZeroEigenvalues(usize),
    #[error("generator does not inherit H1-H3: {0}")]
    Inheritance(String),
    #[error("kernel: {0}")]
    Kernel(#[from] AnalysisError),
    #[error("eigenvalue iteration did not converge")]
    EigenFailure,
    #[error("evaluation point x = {0} is negative")]
    NegativeX(f64),
    #[error("boundary vector has {got} components, system has {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("imaginary residue {0:e} in a real profile")]
    ImaginaryResidue(f64),
}

/// Spectral data of `M = KΛ⁻¹` (with `K` the effective rates `K/ε`).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpectrum {
    pub m: DMatrix<f64>,
    /// `Λξ`, normalized to unit sum.
    pub zero_right: DVector<f64>,
    /// The all-ones row.
    pub zero_left: DVector<f64>,
    /// Nonzero eigenvalues, sorted by real part descending.
    pub stable_rates: Vec<Complex64>,
    /// `−max Re(stable_rates)`.
    pub slowest_decay: f64,
    /// `|1ᵀM|_∞ / ‖M‖_max`.
    pub left_residual: f64,
    /// `|M Λξ|_∞ / ‖M‖_max`.
    pub right_residual: f64,
    /// Kernel vector of `K` (unit sum).
    pub xi: DVector<f64>,
}

pub fn generator(spec: &SystemSpec) -> Result<GeneratorSpectrum, SteadyError> {
    let k = spec.effective_rates();
    let lam = spec.lambda().diagonal();
    let r = spec.dim();
    let m = DMatrix::from_fn(r, r, |i, j| k[(i, j)] / lam[j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SteadyError::Kernel(AnalysisError::NonFinite));
    }
    let scale = max_norm(&m).max(f64::MIN_POSITIVE);

    let (h1, h2, h3) = check_rate_assumptions(&m, 1e-13 * scale);
    for (name, v) in [("H1", h1), ("H2", h2), ("H3", h3)] {
        if let Some(w) = v.witness {
            return Err(SteadyError::Inheritance(format!("{name}: {w}")));
        }
    }

    let xi = kernel_vector(&k, 1e-12)?.xi;
    let mut zero_right = xi.component_mul(lam);
    zero_right /= zero_right.sum();
    let zero_left = DVector::from_element(r, 1.0);
    let left_residual = vec_max_norm(&(m.transpose() * &zero_left)) / scale;
    let right_residual = vec_max_norm(&(&m * &zero_right)) / scale;

    let eig = complex_eigenvalues(&m).ok_or(SteadyError::EigenFailure)?;
    let zero_tol = 1e-10 * scale;
    let zeros = eig.iter().filter(|z| z.norm() <= zero_tol).count();
    if zeros != 1 {
        return Err(SteadyError::ZeroEigenvalues(zeros));
    }
    let mut stable_rates: Vec<Complex64> =
        eig.into_iter().filter(|z| z.norm() > zero_tol).collect();
    stable_rates.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let slowest_decay = -stable_rates
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(GeneratorSpectrum {
        m,
        zero_right,
        zero_left,
        stable_rates,
        slowest_decay,
        left_residual,
        right_residual,
        xi,
    })
}

/// How `exp(Mx)` is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    /// `exp(Mx) = Π₀ + Σ_k e^{μ_k x} v_k w_kᵀ` over the decaying modes.
    Spectral {
        rates: Vec<Complex64>,
        /// Right eigenvectors as columns.
        right: DMatrix<Complex64>,
        /// Left eigenvectors as rows, `left · right = I`.
        left: DMatrix<Complex64>,
        condition: f64,
    },
    /// Scaling-and-squaring Padé exponential at every evaluation.
    Pade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReprChoice {
    /// Spectral when the eigenvector basis is well conditioned.
    Auto,
    Spectral,
    Pade,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    pub choice: ReprChoice,
    /// Largest eigenvector condition number accepted for the spectral form.
    pub condition_threshold: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            choice: ReprChoice::Auto,
            condition_threshold: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyProfile {
    lambda: DVector<f64>,
    k: DMatrix<f64>,
    m: DMatrix<f64>,
    boundary: DVector<f64>,
    /// `Π₀ = (Λξ) 1ᵀ / (1ᵀΛξ)`, the spectral projector of `M` on its kernel.
    kernel_projector: DMatrix<f64>,
    repr: Representation,
    far_field: DVector<f64>,
    layer_width: f64,
    slowest_decay: f64,
    /// `|B(50/decay) − B(∞)|_∞`.
    far_field_check: f64,
}

fn null_vector(a: &DMatrix<Complex64>) -> DVector<Complex64> {
    let svd = nalgebra::SVD::new(a.clone(), false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let idx = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    v_t.row(idx).transpose().map(|z| z.conj())
}

fn spectral_representation(gen: &GeneratorSpectrum) -> Option<Representation> {
    let r = gen.m.nrows();
    let mc = gen.m.map(|v| Complex64::new(v, 0.0));
    let mut right = DMatrix::<Complex64>::zeros(r, r);
    right.set_column(0, &gen.zero_right.map(|v| Complex64::new(v, 0.0)));
    for (k, &mu) in gen.stable_rates.iter().enumerate() {
        let shifted = &mc - DMatrix::<Complex64>::identity(r, r) * mu;
        let v = null_vector(&shifted);
        right.set_column(k + 1, &v);
    }
    let sv = right.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let left = right.clone().try_inverse()?;
    Some(Representation::Spectral {
        rates: gen.stable_rates.clone(),
        right,
        left,
        condition,
    })
}

/// Bounded steady solution with `B(0) = b0`.
pub fn steady_profile(spec: &SystemSpec, b0: &DVector<f64>) -> Result<SteadyProfile, SteadyError> {
    steady_profile_with(spec, b0, ProfileOptions::default())
}

pub fn steady_profile_with(
    spec: &SystemSpec,
    b0: &DVector<f64>,
    options: ProfileOptions,
) -> Result<SteadyProfile, SteadyError> {
    let r = spec.dim();
    if b0.len() != r {
        return Err(SteadyError::Dimension {
            got: b0.len(),
            expected: r,
        });
    }
    let gen = generator(spec)?;
    let lambda = spec.lambda().diagonal().clone();
    let ones = DVector::from_element(r, 1.0);
    let kernel_projector = &gen.zero_right * ones.transpose() / gen.zero_right.sum();

    let spectral = match options.choice {
        ReprChoice::Pade => None,
        ReprChoice::Spectral => spectral_representation(&gen),
        ReprChoice::Auto => spectral_representation(&gen).filter(|rep| match rep {
            Representation::Spectral { condition, .. } => *condition < options.condition_threshold,
            Representation::Pade => false,
        }),
    };
    let repr = spectral.unwrap_or(Representation::Pade);

    let far_field = far_field_from(&gen.xi, &lambda, b0);
    let mut profile = SteadyProfile {
        lambda,
        k: spec.effective_rates(),
        m: gen.m,
        boundary: b0.clone(),
        kernel_projector,
        repr,
        far_field,
        layer_width: 1.0 / gen.slowest_decay,
        slowest_decay: gen.slowest_decay,
        far_field_check: f64::NAN,
    };
    let far = profile.eval(50.0 / gen.slowest_decay)?;
    profile.far_field_check = vec_max_norm(&(far - &profile.far_field));
    Ok(profile)
}

fn far_field_from(xi: &DVector<f64>, lambda: &DVector<f64>, b0: &DVector<f64>) -> DVector<f64> {
    let flux = lambda.dot(b0);
    let norm = lambda.dot(xi);
    xi * (flux / norm)
}

/// `lim_{x→∞} B(x) = ξ (1ᵀΛb₀) / (1ᵀΛξ)`.
pub fn far_field(spec: &SystemSpec, b0: &DVector<f64>) -> Result<DVector<f64>, SteadyError> {
    if b0.len() != spec.dim() {
        return Err(SteadyError::Dimension {
            got: b0.len(),
            expected: spec.dim(),
        });
    }
    let xi = kernel_vector(&spec.effective_rates(), 1e-12)?.xi;
    Ok(far_field_from(&xi, spec.lambda().diagonal(), b0))
}

/// e-folding length of the slowest decaying mode.
pub fn layer_width(spec: &SystemSpec) -> Result<f64, SteadyError> {
    Ok(1.0 / generator(spec)?.slowest_decay)
}

impl SteadyProfile {
    pub fn boundary(&self) -> &DVector<f64> {
        &self.boundary
    }

    pub fn far_field(&self) -> &DVector<f64> {
        &self.far_field
    }

    pub fn layer_width(&self) -> f64 {
        self.layer_width
    }

    pub fn slowest_decay(&self) -> f64 {
        self.slowest_decay
    }

    pub fn far_field_check(&self) -> f64 {
        self.far_field_check
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn dim(&self) -> usize {
        self.boundary.len()
    }

    fn check_x(x: f64) -> Result<(), SteadyError> {
        if x < 0.0 || x.is_nan() {
            Err(SteadyError::NegativeX(x))
        } else {
            Ok(())
        }
    }

    fn real_part(&self, v: DVector<Complex64>) -> Result<DVector<f64>, SteadyError> {
        let scale = vec_max_norm(&self.boundary).max(f64::MIN_POSITIVE);
        let im = v.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if im > 1e-12 * scale {
            return Err(SteadyError::ImaginaryResidue(im));
        }
        Ok(v.map(|z| z.re))
    }

    /// `exp(Mx)`.
    pub fn propagator(&self, x: f64) -> Result<DMatrix<f64>, SteadyError> {
        Self::check_x(x)?;
        match &self.repr {
            Representation::Pade => Ok((&self.m * x).exp()),
            Representation::Spectral {
                rates, right, left, ..
            } => {
                let r = self.dim();
                let mut acc = self.kernel_projector.map(|v| Complex64::new(v, 0.0));
                for (k, mu) in rates.iter().enumerate() {
                    let e = (mu * x).exp();
                    acc += right.column(k + 1) * left.row(k + 1) * e;
                }
                let im = acc.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
                if im > 1e-12 * r as f64 {
                    return Err(SteadyError::ImaginaryResidue(im));
                }
                Ok(acc.map(|z| z.re))
            }
        }
    }

    /// `B(x)`. Exactly `B(0)` at `x = 0`.
    pub fn eval(&self, x: f64) -> Result<DVector<f64>, SteadyError> {
        Self::check_x(x)?;
        if x == 0.0 {
            return Ok(self.boundary.clone());
        }
        let w0 = self.boundary.component_mul(&self.lambda);
        match &self.repr {
            Representation::Pade => {
                let w = (&self.m * x).exp() * w0;
                Ok(w.component_div(&self.lambda))
            }
            Representation::Spectral {
                rates, right, left, ..
            } => {
                // B(x) = b0 + Λ⁻¹ Σ_k c_k (e^{μ_k x} − 1) v_k, exact at x = 0.
                let w0c = w0.map(|v| Complex64::new(v, 0.0));
                let mut dw = DVector::<Complex64>::zeros(self.dim());
                for (k, mu) in rates.iter().enumerate() {
                    let ck = (left.row(k + 1) * &w0c)[0];
                    dw += right.column(k + 1) * (ck * expm1(mu * x));
                }
                let dw = self.real_part(dw)?;
                Ok(&self.boundary + dw.component_div(&self.lambda))
            }
        }
    }

    /// `B'(x) = Λ⁻¹ M exp(Mx) Λ B(0)`, from the representation itself.
    pub fn derivative(&self, x: f64) -> Result<DVector<f64>, SteadyError> {
        Self::check_x(x)?;
        let w0 = self.boundary.component_mul(&self.lambda);
        match &self.repr {
            Representation::Pade => {
                let w = &self.m * (&self.m * x).exp() * w0;
                Ok(w.component_div(&self.lambda))
            }
            Representation::Spectral {
                rates, right, left, ..
            } => {
                let w0c = w0.map(|v| Complex64::new(v, 0.0));
                let mut dw = DVector::<Complex64>::zeros(self.dim());
                for (k, mu) in rates.iter().enumerate() {
                    let ck = (left.row(k + 1) * &w0c)[0];
                    dw += right.column(k + 1) * (ck * mu * (mu * x).exp());
                }
                Ok(self.real_part(dw)?.component_div(&self.lambda))
            }
        }
    }

    /// `1ᵀΛB(x)`, constant in `x` for an exact steady state.
    pub fn flux(&self, x: f64) -> Result<f64, SteadyError> {
        Ok(self.lambda.dot(&self.eval(x)?))
    }
}

fn expm1(z: Complex64) -> Complex64 {
    // e^z − 1 without cancellation for small |z|.
    if z.norm() < 1e-5 {
        z + z * z / 2.0 + z * z * z / 6.0
    } else {
        z.exp() - Complex64::new(1.0, 0.0)
    }
}

/// `max_x |Λ B'(x) − K B(x)|_∞` over the sample points.
pub fn steady_residual(profile: &SteadyProfile, xs: &[f64]) -> Result<f64, SteadyError> {
    let mut worst = 0.0_f64;
    for &x in xs {
        let b = profile.eval(x)?;
        let db = profile.derivative(x)?;
        let res = db.component_mul(&profile.lambda) - &profile.k * b;
        worst = worst.max(vec_max_norm(&res));
    }
    Ok(worst)
}
