//! Relaxation structure of `U_t + ΛU_x = KU`.
//!
//! The pipeline builds, for a conservative irreducible rate matrix `K`:
//!
//! 1. the positive kernel vector `ξ` (`Kξ = 0`),
//! 2. the reduction `L₁ K L₁⁻¹ = [[0, 0], [β, K₂]]` with `K₂ = K₁ − β·1ᵀ`,
//!    whose invertibility makes the zero eigenvalue simple,
//! 3. the diagonal symmetrizer `A₀ = D⁻¹`, `D = diag(ξ)`,
//! 4. the orthogonal split `A₀K + KᵀA₀ = −Pᵀ diag(0, S) P`,
//! 5. the detailed-balance check (`KD` symmetric or not),
//! 6. a skew-symmetric compensating matrix `H` and margin `c > 0` with
//!    `HΛ − ΛH ⪰ cI − Pᵀ diag(0, I) P`.
//!
//! Every identity is re-checked independently of its construction and the
//! results are collected in a [`StabilityCertificate`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{
    canonical_sign, complex_eigenvalues, max_norm, min_singular_value, min_symmetric_eigenvalue,
    sorted_symmetric_eigen, vec_max_norm,
};
use crate::system_model::{SystemSpec, VelocityMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("kernel dimension != 1 ({count} singular values below {threshold:e})")]
    KernelDimension { count: usize, threshold: f64 },
    #[error("kernel vector has a non-positive entry {value:e} at index {index}")]
    NonPositiveKernel { index: usize, value: f64 },
    #[error("kernel residual {residual:e} exceeds {limit:e}")]
    KernelResidual { residual: f64, limit: f64 },
    #[error("system dimension must be at least 2, got {0}")]
    TooSmall(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("first row of L1 K L1^-1 is not zero (residual {0:e}); columns of K do not sum to zero")]
    ReductionFirstRow(f64),
    #[error("zero eigenvalue not simple: K2 is singular (smallest singular value {0:e})")]
    ZeroEigenvalueNotSimple(f64),
    #[error("eigenvalue iteration did not converge")]
    EigenFailure,
    #[error("symmetric part has {0} near-zero eigenvalues, expected exactly one")]
    DegenerateSplit(usize),
    #[error("symmetric part has a positive eigenvalue {0:e}")]
    PositiveEigenvalue(f64),
    #[error("first column of P^T is not sign-definite (entry {0:e})")]
    SplitSign(f64),
    #[error(
        "no compensating matrix with positive margin found (best margin {best:e}, \
         non-collinearity of Lambda*phi vs phi {collinearity:e})"
    )]
    NoCompensatingMatrix { best: f64, collinearity: f64 },
    #[error("verification of `{check}` failed: {value:e} against limit {limit:e}")]
    Verification {
        check: &'static str,
        value: f64,
        limit: f64,
    },
    #[error("dimension mismatch between inputs")]
    Dimension,
}

/// Construction and verification tolerances (both relative).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub construction: f64,
    pub verification: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            construction: 1e-12,
            verification: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelVector {
    /// Strictly positive, entries sum to one.
    pub xi: DVector<f64>,
    /// `|Kξ|_∞`.
    pub residual: f64,
}

fn ensure_finite(m: &DMatrix<f64>) -> Result<(), AnalysisError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AnalysisError::NonFinite)
    }
}

/// Positive kernel vector of `K` from its minimal right singular direction.
pub fn kernel_vector(k: &DMatrix<f64>, tol: f64) -> Result<KernelVector, AnalysisError> {
    ensure_finite(k)?;
    let r = k.nrows();
    let scale = max_norm(k);
    let threshold = tol * scale.max(f64::MIN_POSITIVE);
    let svd = nalgebra::SVD::new(k.clone(), false, true);
    let v_t = svd.v_t.as_ref().ok_or(AnalysisError::EigenFailure)?;
    let count = svd.singular_values.iter().filter(|&&s| s <= threshold).count();
    if count != 1 {
        return Err(AnalysisError::KernelDimension { count, threshold });
    }
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(AnalysisError::TooSmall(r))?;
    let mut xi: DVector<f64> = v_t.row(idx).transpose();
    if xi.sum() < 0.0 {
        xi.neg_mut();
    }
    if let Some((index, &value)) = xi.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(AnalysisError::NonPositiveKernel { index, value });
    }
    xi /= xi.sum();
    let residual = vec_max_norm(&(k * &xi));
    if residual > threshold {
        return Err(AnalysisError::KernelResidual {
            residual,
            limit: threshold,
        });
    }
    Ok(KernelVector { xi, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchurReduction {
    pub l1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub det_k2: f64,
    pub spectral_abscissa_k2: f64,
    /// Max entry of the first row of `L₁KL₁⁻¹`.
    pub first_row_residual: f64,
    /// Mismatch between the lower blocks of `L₁KL₁⁻¹` and `(β, K₂)`.
    pub block_residual: f64,
}

fn l1_matrices(r: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut l1 = DMatrix::identity(r, r);
    let mut l1_inv = DMatrix::identity(r, r);
    for j in 1..r {
        l1[(0, j)] = 1.0;
        l1_inv[(0, j)] = -1.0;
    }
    (l1, l1_inv)
}

/// Block reduction of `K` by `L₁ = [[1, 1ᵀ], [0, I]]`.
pub fn schur_reduction(k: &DMatrix<f64>, tol: f64) -> Result<SchurReduction, AnalysisError> {
    ensure_finite(k)?;
    let r = k.nrows();
    if r < 2 {
        return Err(AnalysisError::TooSmall(r));
    }
    let scale = max_norm(k).max(f64::MIN_POSITIVE);
    let (l1, l1_inv) = l1_matrices(r);
    let conj = &l1 * k * &l1_inv;
    let first_row_residual = conj.row(0).amax();
    if first_row_residual > tol * scale {
        return Err(AnalysisError::ReductionFirstRow(first_row_residual));
    }

    let beta: DVector<f64> = k.view((1, 0), (r - 1, 1)).column(0).into_owned();
    let k1 = k.view((1, 1), (r - 1, r - 1)).into_owned();
    let ones = DMatrix::from_element(1, r - 1, 1.0);
    let k2 = &k1 - &beta * &ones;

    let block_residual = (conj.view((1, 1), (r - 1, r - 1)) - &k2)
        .amax()
        .max((conj.view((1, 0), (r - 1, 1)) - &beta).amax());

    let sigma_min = min_singular_value(&k2);
    if sigma_min <= tol * scale {
        return Err(AnalysisError::ZeroEigenvalueNotSimple(sigma_min));
    }
    let det_k2 = k2.clone().determinant();
    let spectral_abscissa_k2 = complex_eigenvalues(&k2)
        .ok_or(AnalysisError::EigenFailure)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(SchurReduction {
        l1,
        k2,
        beta,
        det_k2,
        spectral_abscissa_k2,
        first_row_residual,
        block_residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Sorted by real part, descending.
    pub eigenvalues: Vec<Complex64>,
    pub zero_count: usize,
    /// Exactly one zero eigenvalue and every other one strictly in the left half-plane.
    pub passed: bool,
    /// `max_j (k_jj + Σ_{i≠j} |k_ij|)`: the right edge of the Gershgorin column discs.
    pub gershgorin_bound: f64,
}

pub fn spectrum_report(k: &DMatrix<f64>, tol: f64) -> Result<SpectrumReport, AnalysisError> {
    ensure_finite(k)?;
    let r = k.nrows();
    let scale = max_norm(k).max(f64::MIN_POSITIVE);
    let mut eigenvalues = complex_eigenvalues(k).ok_or(AnalysisError::EigenFailure)?;
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let zero_count = eigenvalues.iter().filter(|z| z.norm() <= tol * scale).count();
    let rest_stable = eigenvalues
        .iter()
        .filter(|z| z.norm() > tol * scale)
        .all(|z| z.re < -tol * scale);
    let gershgorin_bound = (0..r)
        .map(|j| {
            k[(j, j)]
                + (0..r)
                    .filter(|&i| i != j)
                    .map(|i| k[(i, j)].abs())
                    .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SpectrumReport {
        passed: zero_count == 1 && rest_stable,
        eigenvalues,
        zero_count,
        gershgorin_bound,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Symmetrizer {
    pub d: DVector<f64>,
    pub a0: DVector<f64>,
    /// `‖(A₀K + KᵀA₀) − D⁻¹(KD + DKᵀ)D⁻¹‖_max / ‖A₀K + KᵀA₀‖_max`.
    pub identity_residual: f64,
}

impl Symmetrizer {
    /// The symmetric dissipative part `A₀K + KᵀA₀`.
    pub fn symmetric_part(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let a0k = DMatrix::from_diagonal(&self.a0) * k;
        &a0k + a0k.transpose()
    }
}

pub fn build_symmetrizer(k: &DMatrix<f64>, xi: &KernelVector) -> Symmetrizer {
    let d = xi.xi.clone();
    let a0 = d.map(|v| 1.0 / v);
    let dm = DMatrix::from_diagonal(&d);
    let dinv = DMatrix::from_diagonal(&a0);
    let lhs = {
        let a0k = &dinv * k;
        &a0k + a0k.transpose()
    };
    let kd = k * &dm;
    let rhs = &dinv * (&kd + kd.transpose()) * &dinv;
    let identity_residual = max_norm(&(&lhs - rhs)) / max_norm(&lhs).max(f64::MIN_POSITIVE);
    Symmetrizer {
        d,
        a0,
        identity_residual,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSplit {
    /// Orthogonal; rows are eigenvectors, the first spans the kernel.
    pub p: DMatrix<f64>,
    /// Strictly positive, ascending.
    pub s: DVector<f64>,
    /// `‖sym + Pᵀ diag(0, S) P‖_max`.
    pub reconstruction_residual: f64,
}

impl SpectralSplit {
    /// `φ`, the first column of `Pᵀ`.
    pub fn kernel_direction(&self) -> DVector<f64> {
        self.p.row(0).transpose()
    }

    /// `Pᵀ diag(0, I_{r−1}) P`, the projector onto the dissipative modes.
    pub fn dissipative_projector(&self) -> DMatrix<f64> {
        let r = self.p.nrows();
        let phi = self.kernel_direction();
        DMatrix::identity(r, r) - &phi * phi.transpose()
    }

    /// `Pᵀ diag(0, S) P`.
    pub fn dissipation_matrix(&self) -> DMatrix<f64> {
        let mut diag = DVector::zeros(self.p.nrows());
        diag.rows_mut(1, self.s.len()).copy_from(&self.s);
        self.p.transpose() * DMatrix::from_diagonal(&diag) * &self.p
    }
}

/// Symmetric eigendecomposition of `A₀K + KᵀA₀`, ordered zero first then by
/// increasing magnitude, with the kernel row of `P` made entrywise positive.
pub fn spectral_split(sym: &DMatrix<f64>, tol: f64) -> Result<SpectralSplit, AnalysisError> {
    ensure_finite(sym)?;
    let r = sym.nrows();
    if sym.ncols() != r {
        return Err(AnalysisError::Dimension);
    }
    let scale = max_norm(sym).max(f64::MIN_POSITIVE);
    let (values, vectors) = sorted_symmetric_eigen(sym).ok_or(AnalysisError::EigenFailure)?;

    if let Some(&pos) = values.iter().find(|&&v| v > tol * scale) {
        return Err(AnalysisError::PositiveEigenvalue(pos));
    }
    let zeros = values.iter().filter(|v| v.abs() <= tol * scale).count();
    if zeros != 1 {
        return Err(AnalysisError::DegenerateSplit(zeros));
    }

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()));

    let mut p = DMatrix::zeros(r, r);
    for (row, &idx) in order.iter().enumerate() {
        let mut v: DVector<f64> = vectors.column(idx).into_owned();
        if row == 0 {
            if v.sum() < 0.0 {
                v.neg_mut();
            }
            if let Some(&bad) = v.iter().find(|x| **x <= 0.0) {
                return Err(AnalysisError::SplitSign(bad));
            }
        } else {
            canonical_sign(&mut v);
        }
        p.set_row(row, &v.transpose());
    }
    let s = DVector::from_iterator(r - 1, order[1..].iter().map(|&i| -values[i]));

    let mut diag = DVector::zeros(r);
    diag.rows_mut(1, r - 1).copy_from(&s);
    let reconstruction_residual =
        max_norm(&(sym + p.transpose() * DMatrix::from_diagonal(&diag) * &p));

    Ok(SpectralSplit {
        p,
        s,
        reconstruction_residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetailedBalance {
    pub is_symmetric: bool,
    pub max_asymmetry: f64,
    pub kd: DMatrix<f64>,
}

/// Whether `KD` is symmetric; `tol` is relative to `‖KD‖_max`.
pub fn detailed_balance_check(k: &DMatrix<f64>, d: &DVector<f64>, tol: f64) -> DetailedBalance {
    let kd = k * DMatrix::from_diagonal(d);
    let max_asymmetry = max_norm(&(&kd - kd.transpose()));
    DetailedBalance {
        is_symmetric: max_asymmetry <= tol * max_norm(&kd),
        max_asymmetry,
        kd,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompensationStrategy {
    RankTwoAnsatz,
    FullSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompensatingPair {
    /// Skew-symmetric.
    pub h: DMatrix<f64>,
    pub c: f64,
    /// `min eig(HΛ − ΛH − cI + Pᵀ diag(0, I) P)`.
    pub min_eig_slack: f64,
    pub strategy: CompensationStrategy,
    /// Ansatz scale `δ`, when the ansatz was used.
    pub delta: Option<f64>,
}

/// `HΛ − ΛH` for diagonal `Λ`: entry `(i, j)` is `h_ij (λ_j − λ_i)`.
fn commutator(h: &DMatrix<f64>, lam: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] * (lam[j] - lam[i]))
}

/// Margin of a candidate `H`: `min eig(HΛ − ΛH + Pᵀ diag(0, I) P)`.
pub fn compensation_margin(h: &DMatrix<f64>, lam: &DVector<f64>, projector: &DMatrix<f64>) -> f64 {
    min_symmetric_eigenvalue(&(commutator(h, lam) + projector))
}

fn skew_from_params(params: &[f64], r: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(r, r);
    let mut it = params.iter();
    for i in 0..r {
        for j in (i + 1)..r {
            let v = *it.next().unwrap();
            h[(i, j)] = v;
            h[(j, i)] = -v;
        }
    }
    h
}

fn finish_pair(
    h: DMatrix<f64>,
    lam: &DVector<f64>,
    projector: &DMatrix<f64>,
    strategy: CompensationStrategy,
    delta: Option<f64>,
) -> CompensatingPair {
    let r = h.nrows();
    let c = compensation_margin(&h, lam, projector);
    let slack = min_symmetric_eigenvalue(
        &(commutator(&h, lam) - DMatrix::identity(r, r) * c + projector),
    );
    CompensatingPair {
        h,
        c,
        min_eig_slack: slack,
        strategy,
        delta,
    }
}

/// Skew-symmetric `H` and margin `c > 0` with `HΛ − ΛH ⪰ cI − Pᵀ diag(0, I) P`.
///
/// Tries the rank-two family `H(δ) = δ(φwᵀ − wφᵀ)`, `w = Λφ`, first; the
/// margin is concave in `δ`, so a log sweep over both signs followed by a
/// golden-section refinement finds its maximum. Falls back to a Nelder–Mead
/// search over all skew parameters.
pub fn compensating_matrix(
    lambda: &VelocityMatrix,
    split: &SpectralSplit,
    xi: &KernelVector,
) -> Result<CompensatingPair, AnalysisError> {
    let r = lambda.dim();
    if split.p.nrows() != r || xi.xi.len() != r {
        return Err(AnalysisError::Dimension);
    }
    let lam = lambda.diagonal();
    let projector = split.dissipative_projector();
    let phi = split.kernel_direction();
    let w = phi.component_mul(lam);
    let generator = &phi * w.transpose() - &w * phi.transpose();

    let margin_at = |delta: f64| compensation_margin(&(&generator * delta), lam, &projector);

    let mut grid: Vec<f64> = (-32..=32).map(|k| 10f64.powf(k as f64 / 8.0)).collect();
    let negatives: Vec<f64> = grid.iter().map(|d| -d).collect();
    grid.extend(negatives);
    grid.push(0.0);
    grid.sort_by(f64::total_cmp);
    let values: Vec<f64> = grid.iter().map(|&d| margin_at(d)).collect();
    let best = (0..grid.len())
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    let (mut lo, mut hi) = (
        grid[best.saturating_sub(1)],
        grid[(best + 1).min(grid.len() - 1)],
    );
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let (mut f1, mut f2) = (margin_at(x1), margin_at(x2));
    for _ in 0..100 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = margin_at(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = margin_at(x1);
        }
        if (hi - lo).abs() <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
    }
    let candidates = [(grid[best], values[best]), (x1, f1), (x2, f2)];
    let (delta, margin) = candidates
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();

    // Margins at rounding level are not a certificate.
    let floor = 1e-12 * (1.0 + lam.amax());
    if margin > floor {
        return Ok(finish_pair(
            &generator * delta,
            lam,
            &projector,
            CompensationStrategy::RankTwoAnsatz,
            Some(delta),
        ));
    }

    let pair = compensating_matrix_full_search(lambda, split)?;
    if pair.c > floor {
        return Ok(pair);
    }
    let along = phi.dot(&w);
    let collinearity = (&w - &phi * along).norm() / w.norm().max(f64::MIN_POSITIVE);
    Err(AnalysisError::NoCompensatingMatrix {
        best: margin.max(pair.c),
        collinearity,
    })
}

/// Derivative-free maximization of the margin over all `r(r−1)/2` skew parameters.
pub fn compensating_matrix_full_search(
    lambda: &VelocityMatrix,
    split: &SpectralSplit,
) -> Result<CompensatingPair, AnalysisError> {
    let r = lambda.dim();
    if split.p.nrows() != r {
        return Err(AnalysisError::Dimension);
    }
    let lam = lambda.diagonal();
    let projector = split.dissipative_projector();
    let n = r * (r - 1) / 2;
    let objective = |x: &[f64]| -compensation_margin(&skew_from_params(x, r), lam, &projector);

    let mut best = vec![0.0; n];
    let mut best_val = objective(&best);
    for step in [1.0, 0.3, 0.1] {
        let (x, v) = nelder_mead(&objective, &best, step, 4000);
        if v < best_val {
            best = x;
            best_val = v;
        }
    }
    Ok(finish_pair(
        skew_from_params(&best, r),
        lam,
        &projector,
        CompensationStrategy::FullSearch,
        None,
    ))
}

fn nelder_mead(
    f: &impl Fn(&[f64]) -> f64,
    start: &[f64],
    step: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let n = start.len();
    if n == 0 {
        return (Vec::new(), f(start));
    }
    let mut simplex: Vec<Vec<f64>> = (0..=n)
        .map(|i| {
            let mut p = start.to_vec();
            if i > 0 {
                p[i - 1] += step;
            }
            p
        })
        .collect();
    let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    for _ in 0..max_iter {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        if (vals[n] - vals[0]).abs() <= 1e-14 * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|k| centroid[k] + t * (simplex[n][k] - centroid[k]))
                .collect()
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < vals[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                vals[n] = fe;
            } else {
                simplex[n] = reflected;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = reflected;
            vals[n] = fr;
        } else {
            let contracted = if fr < vals[n] { along(-0.5) } else { along(0.5) };
            let fc = f(&contracted);
            if fc < vals[n].min(fr) {
                simplex[n] = contracted;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = (0..n)
                        .map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]))
                        .collect();
                    vals[i] = f(&shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[best].clone(), vals[best])
}

/// One verified identity or inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            value,
            limit,
            passed: value <= limit,
        }
    }

    fn at_least(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            value,
            limit,
            passed: value >= limit,
        }
    }

    fn above(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            value,
            limit,
            passed: value > limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub lambda: DVector<f64>,
    /// The reaction matrix that was analysed (`K/ε`).
    pub k: DMatrix<f64>,
    pub epsilon: f64,
    pub kernel: KernelVector,
    pub schur: SchurReduction,
    pub spectrum: SpectrumReport,
    pub sym: Symmetrizer,
    pub split: SpectralSplit,
    pub detailed_balance: DetailedBalance,
    pub comp: CompensatingPair,
    pub tolerances: Tolerances,
    pub checks: Vec<Check>,
}

/// Stage at which certification stopped.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("certification failed at stage `{stage}`: {source}")]
pub struct CertifyError {
    pub stage: &'static str,
    #[source]
    pub source: AnalysisError,
}

fn stage<T>(name: &'static str, r: Result<T, AnalysisError>) -> Result<T, CertifyError> {
    r.map_err(|source| CertifyError {
        stage: name,
        source,
    })
}

pub fn certify(spec: &SystemSpec) -> Result<StabilityCertificate, CertifyError> {
    certify_with(spec, Tolerances::default())
}

pub fn certify_with(spec: &SystemSpec, tol: Tolerances) -> Result<StabilityCertificate, CertifyError> {
    let k = spec.effective_rates();
    let kernel = stage("kernel", kernel_vector(&k, tol.construction))?;
    let schur = stage("schur", schur_reduction(&k, tol.construction))?;
    let spectrum = stage("spectrum", spectrum_report(&k, tol.verification))?;
    let sym = build_symmetrizer(&k, &kernel);
    let split = stage(
        "split",
        spectral_split(&sym.symmetric_part(&k), tol.verification),
    )?;
    let detailed_balance = detailed_balance_check(&k, &sym.d, tol.construction);
    let comp = stage(
        "compensating",
        compensating_matrix(spec.lambda(), &split, &kernel),
    )?;
    let mut cert = StabilityCertificate {
        lambda: spec.lambda().diagonal().clone(),
        k,
        epsilon: spec.epsilon(),
        kernel,
        schur,
        spectrum,
        sym,
        split,
        detailed_balance,
        comp,
        tolerances: tol,
        checks: Vec::new(),
    };
    cert.checks = cert.verify();
    if let Some(bad) = cert.checks.iter().find(|c| !c.passed) {
        return Err(CertifyError {
            stage: "verify",
            source: AnalysisError::Verification {
                check: bad.name,
                value: bad.value,
                limit: bad.limit,
            },
        });
    }
    Ok(cert)
}

impl StabilityCertificate {
    /// Re-derives every residual from the stored matrices alone.
    pub fn verify(&self) -> Vec<Check> {
        let r = self.k.nrows();
        let knorm = max_norm(&self.k).max(f64::MIN_POSITIVE);
        let tol = self.tolerances.verification;
        let xi = &self.kernel.xi;
        let p = &self.split.p;
        let a0 = DMatrix::from_diagonal(&self.sym.a0);
        let mut checks = Vec::new();

        checks.push(Check::at_most(
            "kernel_residual",
            vec_max_norm(&(&self.k * xi)),
            tol * knorm,
        ));
        checks.push(Check::above(
            "kernel_positive",
            xi.iter().copied().fold(f64::INFINITY, f64::min),
            0.0,
        ));
        checks.push(Check::at_most("kernel_sum", (xi.sum() - 1.0).abs(), tol));

        let (l1, l1_inv) = l1_matrices(r);
        let conj = &l1 * &self.k * &l1_inv;
        checks.push(Check::at_most(
            "reduction_first_row",
            conj.row(0).amax(),
            tol * knorm,
        ));
        checks.push(Check::at_most(
            "reduction_block",
            (conj.view((1, 1), (r - 1, r - 1)) - &self.schur.k2).amax(),
            tol * knorm,
        ));
        let k2_abscissa = complex_eigenvalues(&self.schur.k2)
            .map(|ev| ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
            .unwrap_or(f64::NAN);
        checks.push(Check::at_most("k2_stable", k2_abscissa, -tol * knorm));

        let a0_ok = self
            .sym
            .a0
            .iter()
            .zip(xi.iter())
            .map(|(a, x)| (a * x - 1.0).abs())
            .fold(0.0, f64::max);
        checks.push(Check::at_most("symmetrizer_inverse", a0_ok, tol));

        let symm = {
            let a0k = &a0 * &self.k;
            &a0k + a0k.transpose()
        };
        checks.push(Check::at_most(
            "reconstruction",
            max_norm(&(&symm + self.split.dissipation_matrix())),
            tol * knorm,
        ));
        checks.push(Check::at_most(
            "orthogonality",
            max_norm(&(p * p.transpose() - DMatrix::identity(r, r))),
            1e-12,
        ));
        let phi = self.split.kernel_direction();
        let unit_xi = xi / xi.norm();
        checks.push(Check::at_most(
            "kernel_consistency",
            max_norm(&(&phi * phi.transpose() - &unit_xi * unit_xi.transpose())),
            tol,
        ));
        checks.push(Check::above(
            "s_positive",
            self.split.s.iter().copied().fold(f64::INFINITY, f64::min),
            0.0,
        ));
        checks.push(Check::at_most(
            "p_kernel_tail",
            (p * xi).rows(1, r - 1).amax(),
            tol,
        ));

        let h = &self.comp.h;
        checks.push(Check::at_most("h_skew", max_norm(&(h + h.transpose())), 0.0));
        checks.push(Check::above("margin_positive", self.comp.c, 0.0));
        let slack = min_symmetric_eigenvalue(
            &(commutator(h, &self.lambda) - DMatrix::identity(r, r) * self.comp.c
                + self.split.dissipative_projector()),
        );
        checks.push(Check::at_least("kawashima_slack", slack, -tol));
        checks
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}
