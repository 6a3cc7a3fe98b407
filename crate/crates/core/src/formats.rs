//! Text formats: system config files, tabular outputs and the certificate document.
//!
//! Config grammar (TOML subset):
//!
//! ```text
//! r = 2                          # optional, cross-checked when present
//! lambda = [1.0, 2.0]            # r positive velocities
//! K = [[-1.0, 1.0], [1.0, -1.0]] # r rows of r rates, k_ij = rate j -> i
//! epsilon = 1.0                  # optional, default 1
//! ```
//!
//! Floats in every output are written with 17 significant digits (`{:.16e}`).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::ibvp::{DiagnosticsSeries, GridState, Grid};
use crate::relaxation::{Check, StabilityCertificate};
use crate::steady::{SteadyError, SteadyProfile};
use crate::system_model::{ModelError, SystemSpec};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: dimension mismatch: {message}")]
    Dimension { path: String, message: String },
    #[error("{path}: {source}")]
    Model {
        path: String,
        #[source]
        source: ModelError,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    r: Option<usize>,
    lambda: Vec<f64>,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
    epsilon: Option<f64>,
}

/// Parses config text; `origin` names the source in error messages.
pub fn parse_spec_str(text: &str, origin: &str) -> Result<SystemSpec, FormatError> {
    let file: SpecFile = toml::from_str(text).map_err(|e| FormatError::Schema {
        path: origin.to_string(),
        message: e.to_string().replace('\n', " ").trim().to_string(),
    })?;
    let dim = |message: String| FormatError::Dimension {
        path: origin.to_string(),
        message,
    };
    let r = file.r.unwrap_or(file.lambda.len());
    if file.lambda.len() != r {
        return Err(dim(format!("r = {r} but lambda has {} entries", file.lambda.len())));
    }
    if file.k.len() != r {
        return Err(dim(format!("r = {r} but K has {} rows", file.k.len())));
    }
    if let Some((i, row)) = file.k.iter().enumerate().find(|(_, row)| row.len() != r) {
        return Err(dim(format!("K row {} has {} entries, expected {r}", i + 1, row.len())));
    }
    let model = |source| FormatError::Model {
        path: origin.to_string(),
        source,
    };
    let spec = SystemSpec::from_parts(&file.lambda, &file.k).map_err(model)?;
    match file.epsilon {
        Some(eps) => spec.with_epsilon(eps).map_err(model),
        None => Ok(spec),
    }
}

pub fn parse_spec_file(path: &Path) -> Result<SystemSpec, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_spec_str(&text, &path.display().to_string())
}

/// Renders a spec in the config grammar.
pub fn render_spec(spec: &SystemSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "r = {}", spec.dim());
    let _ = writeln!(out, "lambda = {}", vector(spec.lambda().diagonal()));
    let _ = writeln!(out, "K = {}", matrix(spec.rates().matrix()));
    let _ = writeln!(out, "epsilon = {}", num(spec.epsilon()));
    out
}

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn vector(v: &DVector<f64>) -> String {
    let items: Vec<String> = v.iter().map(|&x| num(x)).collect();
    format!("[{}]", items.join(", "))
}

fn matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|row| {
            let items: Vec<String> = row.iter().map(|&x| num(x)).collect();
            format!("[{}]", items.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn csv_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let items: Vec<String> = values.into_iter().map(num).collect();
    out.push_str(&items.join(","));
    out.push('\n');
}

pub const DIAGNOSTICS_HEADER: &str = "t,l2,h1,h2,sup,energy,diss_rate,cum_diss,gn_ratio";

pub fn diagnostics_table(series: &DiagnosticsSeries) -> String {
    let mut out = format!("{DIAGNOSTICS_HEADER}\n");
    for s in &series.samples {
        csv_row(
            &mut out,
            [s.t, s.l2, s.h1, s.h2, s.sup, s.energy, s.diss_rate, s.cum_diss, s.gn_ratio],
        );
    }
    out
}

fn header(first: &str, prefix: &str, r: usize) -> String {
    let mut h = first.to_string();
    for i in 1..=r {
        let _ = write!(h, ",{prefix}_{i}");
    }
    h.push('\n');
    h
}

pub fn state_table(state: &GridState, grid: &Grid) -> String {
    let mut out = header("x", "u", state.u.ncols());
    for (j, row) in state.u.row_iter().enumerate() {
        csv_row(&mut out, std::iter::once(grid.x(j)).chain(row.iter().copied()));
    }
    out
}

/// Profile sampled at `x_j = j·x_max/n`, `j = 0..=n`.
pub fn profile_table(profile: &SteadyProfile, x_max: f64, n: usize) -> Result<String, SteadyError> {
    let mut out = header("x", "B", profile.dim());
    for j in 0..=n {
        let x = x_max * j as f64 / n as f64;
        let b = profile.eval(x)?;
        csv_row(&mut out, std::iter::once(x).chain(b.iter().copied()));
    }
    Ok(out)
}

/// Certificate document (TOML). Matrices are row-major nested arrays.
pub fn certificate_document(cert: &StabilityCertificate) -> String {
    let mut out = String::new();
    let status = if cert.passed() { "pass" } else { "fail" };
    let _ = writeln!(out, "status = \"{status}\"");
    let _ = writeln!(out, "r = {}", cert.lambda.len());
    let _ = writeln!(out, "epsilon = {}", num(cert.epsilon));
    let _ = writeln!(out, "lambda = {}", vector(&cert.lambda));
    let _ = writeln!(out, "K_eff = {}", matrix(&cert.k));
    let _ = writeln!(out, "xi = {}", vector(&cert.kernel.xi));
    let _ = writeln!(out, "A0 = {}", matrix(&DMatrix::from_diagonal(&cert.sym.a0)));
    let _ = writeln!(out, "S = {}", vector(&cert.split.s));
    let _ = writeln!(out, "P = {}", matrix(&cert.split.p));
    let _ = writeln!(out, "H = {}", matrix(&cert.comp.h));
    let _ = writeln!(out, "c = {}", num(cert.comp.c));
    let _ = writeln!(out, "K2 = {}", matrix(&cert.schur.k2));
    let _ = writeln!(out, "det_K2 = {}", num(cert.schur.det_k2));
    let _ = writeln!(out, "detailed_balance = {}", cert.detailed_balance.is_symmetric);
    let _ = writeln!(out, "max_asymmetry = {}", num(cert.detailed_balance.max_asymmetry));
    for check in &cert.checks {
        let _ = writeln!(out, "\n[[check]]");
        let _ = writeln!(out, "name = \"{}\"", check.name);
        let _ = writeln!(out, "value = {}", num(check.value));
        let _ = writeln!(out, "limit = {}", num(check.limit));
        let _ = writeln!(out, "passed = {}", check.passed);
    }
    out
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct DocumentCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

/// A certificate read back from its document.
#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct CertificateDocument {
    pub status: String,
    pub r: usize,
    pub epsilon: f64,
    pub lambda: Vec<f64>,
    #[serde(rename = "K_eff")]
    pub k_eff: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
    #[serde(rename = "A0")]
    pub a0: Vec<Vec<f64>>,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    pub c: f64,
    #[serde(rename = "K2")]
    pub k2: Vec<Vec<f64>>,
    #[serde(rename = "det_K2")]
    pub det_k2: f64,
    pub detailed_balance: bool,
    pub max_asymmetry: f64,
    #[serde(default)]
    pub check: Vec<DocumentCheck>,
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

impl CertificateDocument {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let doc: Self = toml::from_str(text).map_err(|e| FormatError::Schema {
            path: "certificate".into(),
            message: e.to_string().replace('\n', " ").trim().to_string(),
        })?;
        let r = doc.r;
        let square = |m: &Vec<Vec<f64>>| m.len() == r && m.iter().all(|row| row.len() == r);
        if doc.lambda.len() != r
            || doc.xi.len() != r
            || doc.s.len() + 1 != r
            || !square(&doc.k_eff)
            || !square(&doc.a0)
            || !square(&doc.p)
            || !square(&doc.h)
        {
            return Err(FormatError::Dimension {
                path: "certificate".into(),
                message: format!("entries inconsistent with r = {r}"),
            });
        }
        Ok(doc)
    }

    pub fn k_eff(&self) -> DMatrix<f64> {
        to_matrix(&self.k_eff)
    }

    pub fn p(&self) -> DMatrix<f64> {
        to_matrix(&self.p)
    }

    pub fn h(&self) -> DMatrix<f64> {
        to_matrix(&self.h)
    }

    pub fn a0(&self) -> DMatrix<f64> {
        to_matrix(&self.a0)
    }

    /// Recomputes the central identities from the stored matrices alone.
    pub fn reverify(&self, tol: f64) -> Vec<Check> {
        let r = self.r;
        let k = self.k_eff();
        let a0 = self.a0();
        let p = self.p();
        let h = self.h();
        let kn = crate::linalg::max_norm(&k).max(f64::MIN_POSITIVE);
        let mut s_full = DVector::zeros(r);
        s_full.rows_mut(1, r - 1).copy_from(&DVector::from_vec(self.s.clone()));
        let recon = &a0 * &k + k.transpose() * &a0 + p.transpose() * DMatrix::from_diagonal(&s_full) * &p;
        let xi = DVector::from_vec(self.xi.clone());
        let lam = DMatrix::from_diagonal(&DVector::from_vec(self.lambda.clone()));
        let mut proj = DVector::from_element(r, 1.0);
        proj[0] = 0.0;
        let margin = &h * &lam - &lam * &h - DMatrix::identity(r, r) * self.c
            + p.transpose() * DMatrix::from_diagonal(&proj) * &p;
        let check = |name: &'static str, value: f64, limit: f64| Check {
            name,
            value,
            limit,
            passed: value <= limit,
        };
        vec![
            check("reconstruction", crate::linalg::max_norm(&recon), tol * kn),
            check(
                "orthogonality",
                crate::linalg::max_norm(&(&p * p.transpose() - DMatrix::identity(r, r))),
                1e-12,
            ),
            check("kernel_residual", (&k * &xi).amax(), tol * kn),
            check("kernel_positive", -xi.min(), 0.0 - f64::MIN_POSITIVE),
            check("h_skew", crate::linalg::max_norm(&(&h + h.transpose())), tol),
            check("c_positive", -self.c, 0.0 - f64::MIN_POSITIVE),
            check(
                "kawashima_slack",
                -crate::linalg::min_symmetric_eigenvalue(&((&margin + margin.transpose()) * 0.5)),
                tol,
            ),
        ]
    }
}
