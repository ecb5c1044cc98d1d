//! Decay of products of augmented matrices.

use crate::error::{Error, Result};
use crate::stats::{linear_fit, LineFit};

use super::SparseMat;

/// Spreads at or below this are treated as roundoff and left out of fits.
const SPREAD_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct DiagnosticsInput<'a> {
    pub w_hats: &'a [SparseMat],
    pub a_hats: &'a [SparseMat],
    pub n: usize,
    pub common_roots: &'a [usize],
    pub m_bar: f64,
    pub t_window: usize,
    pub d_cap: usize,
    /// Number of leading steps to analyse.
    pub window: usize,
    /// A product counts as converged once its spread is below this.
    pub spread_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    /// `(k − t, w_spread, a_spread)` for the forward products from `t = 0`.
    pub rows: Vec<(usize, f64, f64)>,
    pub w_fit: Option<LineFit>,
    pub a_fit: Option<LineFit>,
    pub w_converged_at: Option<usize>,
    pub a_converged_at: Option<usize>,
    /// Largest `|row sum − 1|` over the Ŵ products.
    pub w_row_residual: f64,
    /// Largest `|column sum − 1|` over the Â products.
    pub a_col_residual: f64,
    /// Row average of the backward product down to step 0, once converged.
    pub psi0: Option<Vec<f64>>,
    /// Largest `‖ψ^{t+1}ᵀ Ŵ^t − ψ^tᵀ‖∞` over converged backward products.
    pub psi_residual: f64,
    /// Smallest ψ entry at a common root over converged backward products.
    pub eta_hat: Option<f64>,
    /// `m̄^{K₁}` with `K₁ = (2n − 1)T + nD`.
    pub eta_theory: f64,
    /// A column of the converged forward Â product.
    pub xi: Option<Vec<f64>>,
}

impl DecayReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k_minus_t,w_spread,a_spread\n");
        for (k, w, a) in &self.rows {
            s.push_str(&format!("{k},{w:e},{a:e}\n"));
        }
        s
    }
}

/// Largest difference between rows, taken column by column.
fn row_spread(m: &[Vec<f64>]) -> f64 {
    let dim = m.first().map_or(0, Vec::len);
    (0..dim)
        .map(|c| {
            let (lo, hi) = m
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[c]), hi.max(r[c]))
                });
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Largest difference between columns, taken row by row.
fn col_spread(m: &[Vec<f64>]) -> f64 {
    m.iter()
        .map(|r| {
            let (lo, hi) = r
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            hi - lo
        })
        .fold(0.0, f64::max)
}

fn identity(dim: usize) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|r| (0..dim).map(|c| f64::from(u8::from(r == c))).collect())
        .collect()
}

fn log_fit(points: &[(usize, f64)]) -> Option<LineFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|&&(_, s)| s > SPREAD_FLOOR)
        .map(|&(k, s)| (k as f64, s.ln()))
        .unzip();
    linear_fit(&xs, &ys)
}

pub fn contraction_diagnostics(input: &DiagnosticsInput<'_>) -> Result<DecayReport> {
    let w = input.window;
    if w < 2 || input.w_hats.len() < w || input.a_hats.len() < w {
        return Err(Error::InsufficientData(format!(
            "need {w} matrices of each kind, have {} and {}",
            input.w_hats.len(),
            input.a_hats.len()
        )));
    }
    let dw = input.w_hats[0].dim();
    let da = input.a_hats[0].dim();

    let mut mw = identity(dw);
    let mut ma = identity(da);
    let mut rows = Vec::with_capacity(w);
    let mut w_row_residual = 0.0f64;
    let mut a_col_residual = 0.0f64;
    let (mut w_conv, mut a_conv) = (None, None);
    for k in 0..w {
        mw = input.w_hats[k].apply(&mw);
        ma = input.a_hats[k].apply(&ma);
        let ws = row_spread(&mw);
        let as_ = col_spread(&ma);
        for r in &mw {
            w_row_residual = w_row_residual.max((r.iter().sum::<f64>() - 1.0).abs());
        }
        for c in 0..da {
            let s: f64 = ma.iter().map(|r| r[c]).sum();
            a_col_residual = a_col_residual.max((s - 1.0).abs());
        }
        if w_conv.is_none() && ws < input.spread_tol {
            w_conv = Some(k);
        }
        if a_conv.is_none() && as_ < input.spread_tol {
            a_conv = Some(k);
        }
        rows.push((k, ws, as_));
    }
    let w_fit = log_fit(&rows.iter().map(|&(k, s, _)| (k, s)).collect::<Vec<_>>());
    let a_fit = log_fit(&rows.iter().map(|&(k, _, s)| (k, s)).collect::<Vec<_>>());
    let xi = a_conv.map(|_| ma.iter().map(|r| r[0]).collect());

    // backward products Ŵ^{K:t} = Ŵ^K ⋯ Ŵ^t
    let mut back = identity(dw);
    let mut prev_psi: Option<Vec<f64>> = None;
    let mut psi_residual = 0.0f64;
    let mut eta_hat: Option<f64> = None;
    let mut psi0 = None;
    for t in (0..w).rev() {
        back = input.w_hats[t].left_mul_dense(&back);
        if row_spread(&back) >= input.spread_tol {
            prev_psi = None;
            continue;
        }
        let psi: Vec<f64> = (0..dw)
            .map(|c| back.iter().map(|r| r[c]).sum::<f64>() / dw as f64)
            .collect();
        if let Some(next) = &prev_psi {
            let lhs = input.w_hats[t].left_mul_dense(std::slice::from_ref(next));
            let res = lhs[0]
                .iter()
                .zip(&psi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            psi_residual = psi_residual.max(res);
        }
        for &r in input.common_roots {
            eta_hat = Some(eta_hat.map_or(psi[r], |e: f64| e.min(psi[r])));
        }
        if t == 0 {
            psi0 = Some(psi.clone());
        }
        prev_psi = Some(psi);
    }

    let n = input.n as f64;
    let k1 = (2.0 * n - 1.0) * input.t_window as f64 + n * input.d_cap as f64;
    Ok(DecayReport {
        rows,
        w_fit,
        a_fit,
        w_converged_at: w_conv,
        a_converged_at: a_conv,
        w_row_residual,
        a_col_residual,
        psi0,
        psi_residual,
        eta_hat,
        eta_theory: input.m_bar.powf(k1),
        xi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_short_window() {
        let m = vec![SparseMat::identity(2)];
        let input = DiagnosticsInput {
            w_hats: &m,
            a_hats: &m,
            n: 1,
            common_roots: &[0],
            m_bar: 1.0,
            t_window: 1,
            d_cap: 0,
            window: 5,
            spread_tol: 1e-8,
        };
        assert!(matches!(
            contraction_diagnostics(&input),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn averaging_matrix_converges_in_one_step() {
        let avg = SparseMat {
            rows: vec![vec![(0, 0.5), (1, 0.5)]; 2],
        };
        let m = vec![avg; 4];
        let input = DiagnosticsInput {
            w_hats: &m,
            a_hats: &m,
            n: 2,
            common_roots: &[0, 1],
            m_bar: 0.5,
            t_window: 2,
            d_cap: 0,
            window: 4,
            spread_tol: 1e-8,
        };
        let rep = contraction_diagnostics(&input).unwrap();
        assert_eq!(rep.w_converged_at, Some(0));
        assert_eq!(rep.psi0, Some(vec![0.5, 0.5]));
        assert_eq!(rep.eta_hat, Some(0.5));
        assert!(rep.eta_theory <= 0.5);
    }
}
