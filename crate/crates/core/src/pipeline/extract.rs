//! Component extraction and attention inspection.
//!
//! Every receiver's current slice goes through the first encoder layer
//! (before the nonlinearity). The stacked features
//! are band-passed, reduced by PCA to `W` dimensions and unmixed by joint
//! diagonalization of lagged covariances, giving `W` candidate source
//! waveforms.

use nalgebra::{DMatrix, SymmetricEigen};

use super::model::SeparatorModel;
use super::pairs::assemble;
use super::prepare::Prepared;
use super::PipelineError;
use crate::dsp;

const JD_MAX_SWEEPS: usize = 100;
const JD_TOL: f64 = 1e-9;
/// Lags for the joint diagonalization, seconds.
const SOBI_LAGS_S: [f64; 10] = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0, 1.5, 2.0, 2.5, 3.0];
/// Eigenvalues below this fraction of the largest are treated as empty.
const RANK_TOL: f64 = 1e-10;
/// Time step between samples used for attention averaging.
const ATTENTION_STRIDE: usize = 5;

fn check(model: &SeparatorModel, prep: &Prepared) -> Result<usize, PipelineError> {
    if model.dims.receivers != prep.receivers || model.dims.window != prep.window {
        return Err(PipelineError::Shape(format!(
            "model expects {} receivers x {} bins, data has {} x {}",
            model.dims.receivers, model.dims.window, prep.receivers, prep.window
        )));
    }
    Ok((model.lag_s * prep.fps).round() as usize)
}

/// `[T][M * hidden0]` first-layer encoder features (current half, before the
/// nonlinearity) of every receiver's own slice. Fusing receivers first would
/// discard the spatial diversity that separating several sources needs.
pub fn receiver_features(model: &SeparatorModel, prep: &Prepared) -> Result<Vec<Vec<f64>>, PipelineError> {
    check(model, prep)?;
    let (w_off, inp, out) = model.first_layer();
    let half = inp / 2;
    Ok((0..prep.len)
        .map(|t| {
            let mut row = Vec::with_capacity(prep.receivers * out);
            for m in 0..prep.receivers {
                let s = prep.slice(m, t);
                for o in 0..out {
                    let wr = &model.params[w_off + o * inp..w_off + o * inp + half];
                    row.push(wr.iter().zip(s).map(|(x, y)| x * y).sum::<f64>());
                }
            }
            row
        })
        .collect())
}

/// Whitened top-`k` principal components, `[k][T]`. Degenerate directions are zero.
fn pca_whiten(cols: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let p = cols.len();
    let t = cols.first().map_or(0, Vec::len);
    let x = DMatrix::from_fn(t, p, |r, c| cols[c][r]);
    let cov = (x.transpose() * &x) / t.max(1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..p).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[idx[0]].max(0.0);
    idx.iter()
        .take(k)
        .map(|&i| {
            let lam = eig.eigenvalues[i];
            if top == 0.0 || lam <= RANK_TOL * top {
                return vec![0.0; t];
            }
            let v = eig.eigenvectors.column(i);
            let proj = &x * v;
            proj.iter().map(|z| z / lam.sqrt()).collect()
        })
        .collect()
}

/// Second-order blind identification: joint diagonalization of symmetrized
/// lagged covariances of the whitened rows by Jacobi rotations. Separates
/// sources with distinct autocorrelation, e.g. a breathing waveform from its
/// harmonics or from another subject breathing at a different rate.
fn sobi(x: &[Vec<f64>], lags: &[usize]) -> Vec<Vec<f64>> {
    let live: Vec<usize> = (0..x.len()).filter(|&i| x[i].iter().any(|v| *v != 0.0)).collect();
    let k = live.len();
    let t = x.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; t]; x.len()];
    if k == 0 || t == 0 {
        return out;
    }
    let mut mats: Vec<DMatrix<f64>> = lags
        .iter()
        .filter(|&&l| l < t)
        .map(|&l| {
            DMatrix::from_fn(k, k, |a, b| {
                let (xa, xb) = (&x[live[a]], &x[live[b]]);
                (0..t - l).map(|i| xa[i] * xb[i + l] + xb[i] * xa[i + l]).sum::<f64>() / (2 * (t - l)) as f64
            })
        })
        .collect();
    let mut v = DMatrix::<f64>::identity(k, k);
    for _ in 0..JD_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let (mut g00, mut g01, mut g11) = (0.0, 0.0, 0.0);
                for m in &mats {
                    let (a, b) = (m[(p, p)] - m[(q, q)], m[(p, q)] + m[(q, p)]);
                    g00 += a * a;
                    g01 += a * b;
                    g11 += b * b;
                }
                let (ton, toff) = (g00 - g11, 2.0 * g01);
                let theta = 0.5 * toff.atan2(ton + (ton * ton + toff * toff).sqrt());
                let (c, s) = (theta.cos(), theta.sin());
                if s.abs() <= JD_TOL {
                    continue;
                }
                rotated = true;
                for m in &mut mats {
                    for j in 0..k {
                        let (a, b) = (m[(p, j)], m[(q, j)]);
                        m[(p, j)] = c * a + s * b;
                        m[(q, j)] = c * b - s * a;
                    }
                    for j in 0..k {
                        let (a, b) = (m[(j, p)], m[(j, q)]);
                        m[(j, p)] = c * a + s * b;
                        m[(j, q)] = c * b - s * a;
                    }
                }
                for j in 0..k {
                    let (a, b) = (v[(j, p)], v[(j, q)]);
                    v[(j, p)] = c * a + s * b;
                    v[(j, q)] = c * b - s * a;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    for (r, &i) in live.iter().enumerate() {
        out[i] = (0..t).map(|n| (0..k).map(|j| v[(j, r)] * x[live[j]][n]).sum()).collect();
    }
    out
}

fn unit_variance(mut x: Vec<f64>) -> Vec<f64> {
    let m = dsp::mean(&x);
    x.iter_mut().for_each(|v| *v -= m);
    let s = dsp::std(&x);
    if s > 1e-12 {
        x.iter_mut().for_each(|v| *v /= s);
    } else {
        x.iter_mut().for_each(|v| *v = 0.0);
    }
    x
}

/// `W` band-limited, unit-variance candidate source waveforms.
pub fn extract_components(
    model: &SeparatorModel,
    prep: &Prepared,
    band_hz: (f64, f64),
) -> Result<Vec<Vec<f64>>, PipelineError> {
    let feats = receiver_features(model, prep)?;
    let p = feats.first().map_or(0, Vec::len);
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|c| {
            let col: Vec<f64> = feats.iter().map(|r| r[c]).collect();
            dsp::bandpass(&col, prep.fps, band_hz.0, band_hz.1)
        })
        .collect();
    let white = pca_whiten(&cols, model.dims.heads);
    let lags: Vec<usize> = SOBI_LAGS_S.iter().map(|l| ((l * prep.fps).round() as usize).max(1)).collect();
    let mut comps = sobi(&white, &lags);
    comps.resize(model.dims.heads, vec![0.0; prep.len]);
    Ok(comps
        .into_iter()
        .map(|c| unit_variance(dsp::bandpass(&c, prep.fps, band_hz.0, band_hz.1)))
        .collect())
}

/// Softmax weights averaged over time and heads, summed per board, normalized to 1.
pub fn attention_weights(model: &SeparatorModel, prep: &Prepared, n_boards: usize) -> Result<Vec<f64>, PipelineError> {
    let lag = check(model, prep)?;
    let per = prep.receivers * 2 * prep.row_len();
    let mut buf = vec![0.0; per];
    let mut acc = vec![0.0; prep.receivers];
    for t in (lag.min(prep.len - 1)..prep.len).step_by(ATTENTION_STRIDE) {
        assemble(prep, t, lag, &mut buf);
        let att = model.attention_fuse(&buf)?;
        for row in att.weights.chunks_exact(prep.receivers) {
            acc.iter_mut().zip(row).for_each(|(a, w)| *a += w);
        }
    }
    let mut boards = vec![0.0; n_boards];
    for (m, a) in acc.iter().enumerate() {
        let b = prep.receiver_board[m];
        if b >= n_boards {
            return Err(PipelineError::Shape(format!("receiver {m} maps to board {b} of {n_boards}")));
        }
        boards[b] += a;
    }
    let tot: f64 = boards.iter().sum();
    boards.iter_mut().for_each(|v| *v /= tot);
    Ok(boards)
}
