//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use axon_relax::system_model::{catalog, Catalog, SystemSpec};
use nalgebra::{DMatrix, DVector};

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut a = m.clone();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs()))
            .unwrap();
        if a[(p, c)] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap_rows(p, c);
            d = -d;
        }
        d *= a[(c, c)];
        for i in c + 1..n {
            let f = a[(i, c)] / a[(c, c)];
            for j in c..n {
                a[(i, j)] -= f * a[(c, j)];
            }
        }
    }
    d
}

fn minor(m: &DMatrix<f64>, skip: usize) -> DMatrix<f64> {
    m.clone().remove_row(skip).remove_column(skip)
}

/// Kernel of a conservative irreducible rate matrix from principal minors
/// (matrix-tree theorem): `ξ_i ∝ det(−K)` with row and column `i` removed.
pub fn kernel_by_minors(k: &DMatrix<f64>) -> DVector<f64> {
    let r = k.nrows();
    let neg = -k;
    let v = DVector::from_fn(r, |i, _| det(&minor(&neg, i)));
    let s = v.sum();
    v / s
}

/// Characteristic polynomial coefficients of a 3×3 matrix:
/// `t³ − c1 t² + c2 t − c3`.
pub fn char_poly3(k: &DMatrix<f64>) -> (f64, f64, f64) {
    let c1 = k.trace();
    let c2 = (0..3).map(|i| det(&minor(k, i))).sum();
    (c1, c2, det(k))
}

/// Adaptive RK4 (step doubling) for `w' = m w` from 0 to each requested `x`.
pub fn rk4_path(m: &DMatrix<f64>, w0: &DVector<f64>, xs: &[f64], rtol: f64) -> Vec<DVector<f64>> {
    let f = |w: &DVector<f64>| m * w;
    let step = |w: &DVector<f64>, h: f64| {
        let k1 = f(w);
        let k2 = f(&(w + &k1 * (h / 2.0)));
        let k3 = f(&(w + &k2 * (h / 2.0)));
        let k4 = f(&(w + &k3 * h));
        w + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    };
    let mut out = Vec::with_capacity(xs.len());
    let mut x = 0.0;
    let mut w = w0.clone();
    let mut h: f64 = 1e-3;
    for &target in xs {
        while x < target {
            let hh = h.min(target - x);
            let full = step(&w, hh);
            let half = step(&step(&w, hh / 2.0), hh / 2.0);
            let err = (&full - &half).amax() / (1.0 + half.amax());
            if err <= rtol || hh < 1e-12 {
                x += hh;
                // local extrapolation
                w = &half + (&half - &full) / 15.0;
                if err < rtol / 64.0 {
                    h = hh * 2.0;
                }
            } else {
                h = hh / 2.0;
            }
        }
        out.push(w.clone());
    }
    out
}

pub fn random_spec(r: usize, seed: u64) -> SystemSpec {
    catalog(&Catalog::RandomValid { r, seed }).unwrap()
}

pub fn two_state() -> SystemSpec {
    catalog(&Catalog::TwoState { a: 1.0, b: 1.0 }).unwrap()
}

pub fn counterexample() -> SystemSpec {
    catalog(&Catalog::Counterexample4x4).unwrap()
}

/// Three-state cycle 1 → 2 → 3 → 1 with distinct rates.
pub fn three_cycle() -> SystemSpec {
    catalog(&Catalog::ThreeState {
        offdiag: [0.0, 0.7, 1.3, 0.0, 0.0, 2.1],
    })
    .unwrap()
}

pub fn e1(r: usize) -> DVector<f64> {
    let mut e = DVector::zeros(r);
    e[0] = 1.0;
    e
}

/// Closed form of the 2×2 steady state with inflow (1, 0).
pub fn two_state_profile(x: f64) -> [f64; 2] {
    let e = (-1.5 * x).exp();
    [1.0 / 3.0 + 2.0 / 3.0 * e, 1.0 / 3.0 - 1.0 / 3.0 * e]
}

use axon_relax::ibvp::{self, RunOutput, Scheme, SchemeConfig};
use axon_relax::relaxation::certify;
use axon_relax::steady::steady_profile;

pub struct BumpRun {
    pub nx: usize,
    pub x_max: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub stride: usize,
}

impl Default for BumpRun {
    fn default() -> Self {
        Self {
            nx: 2000,
            x_max: 20.0,
            t_end: 40.0,
            scheme: Scheme::Imex,
            stride: 10,
        }
    }
}

/// Bump perturbation (A = 0.1, x₀ = 2, σ = 0.5) of the steady state with inflow e₁.
pub fn bump_run(spec: &SystemSpec, run: &BumpRun) -> (RunOutput, ibvp::Grid) {
    let cert = certify(spec).unwrap();
    let prof = steady_profile(spec, &e1(spec.dim())).unwrap();
    let grid = ibvp::make_grid(run.x_max, run.nx, Some(prof.layer_width())).unwrap();
    let config = SchemeConfig {
        cfl: 0.9,
        scheme: run.scheme,
        t_end: run.t_end,
        output_stride: run.stride,
        ..SchemeConfig::default()
    };
    let u0 = ibvp::bump_data(&prof, 0.1, 2.0, 0.5);
    let out = ibvp::run(spec, &u0, &grid, &config, &cert, &prof).unwrap();
    (out, grid)
}
