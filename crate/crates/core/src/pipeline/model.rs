//! Multi-head attention over receivers, a shared tanh encoder and a logistic
//! discriminator, with exact reverse-mode gradients.
//!
//! Per head `w` and sample with receiver inputs `y_m` (length `D = 4N`):
//!
//! ```text
//! q      = Wq_w^T mean_m(y_m) + q0_w
//! k_m    = Wk_w^T y_m + e_{w,m}
//! a_m    = softmax_m(q . k_m / sqrt(d_k))
//! Z_w    = sum_m a_m y_m
//! p_w    = sigmoid(v . E(Z_w) + c)
//! ```
//!
//! The loss is binary cross-entropy averaged over samples and heads.
//! Parameters live in one flat vector in declaration order:
//! `wq, q0, wk, e, (weight, bias) per encoder layer, v, c`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// attention heads `W`
    pub heads: usize,
    /// receivers `M`
    pub receivers: usize,
    /// window width `N`
    pub window: usize,
    pub d_k: usize,
    /// encoder layer widths after the input
    pub hidden: Vec<usize>,
}

impl ModelDims {
    pub fn input_dim(&self) -> usize {
        4 * self.window
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.heads == 0 || self.receivers == 0 || self.window == 0 || self.d_k == 0 {
            return Err(PipelineError::Config("model dimensions must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(PipelineError::Config("encoder needs at least one non-empty layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Offsets {
    wq: usize,
    q0: usize,
    wk: usize,
    e: usize,
    /// (weight, bias, in, out)
    layers: Vec<(usize, usize, usize, usize)>,
    v: usize,
    c: usize,
    total: usize,
}

impl Offsets {
    fn new(d: &ModelDims) -> Self {
        let dim = d.input_dim();
        let mut o = 0;
        let mut take = |n: usize| {
            let s = o;
            o += n;
            s
        };
        let wq = take(d.heads * dim * d.d_k);
        let q0 = take(d.heads * d.d_k);
        let wk = take(d.heads * dim * d.d_k);
        let e = take(d.heads * d.receivers * d.d_k);
        let mut layers = Vec::new();
        let mut inp = dim;
        for &out in &d.hidden {
            let w = take(out * inp);
            let b = take(out);
            layers.push((w, b, inp, out));
            inp = out;
        }
        let v = take(inp);
        let c = take(1);
        Self { wq, q0, wk, e, layers, v, c, total: o }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatorModel {
    pub dims: ModelDims,
    /// positive-pair lag the model was trained with, seconds
    pub lag_s: f64,
    pub params: Vec<f64>,
    off: Offsets,
}

/// Per-head attention output for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// `[W][M]` softmax weights
    pub weights: Vec<f64>,
    /// `[W][D]` fused head outputs
    pub z: Vec<f64>,
}

/// One training example: `[M][D]` receiver inputs and a 0/1 label.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub inputs: &'a [f64],
    pub label: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-(y ln p + (1 - y) ln(1 - p))` from the logit, without cancellation.
fn bce_from_logit(logit: f64, label: f64) -> f64 {
    let softplus = if logit > 0.0 { logit + (-logit).exp().ln_1p() } else { logit.exp().ln_1p() };
    softplus - label * logit
}

/// Binary cross-entropy of a probability.
pub fn bce(p: f64, label: f64) -> f64 {
    let eps = 1e-300;
    -(label * p.max(eps).ln() + (1.0 - label) * (1.0 - p).max(eps).ln())
}

impl SeparatorModel {
    pub fn zeros(dims: ModelDims, lag_s: f64) -> Result<Self, PipelineError> {
        dims.validate()?;
        let off = Offsets::new(&dims);
        Ok(Self { params: vec![0.0; off.total], dims, lag_s, off })
    }

    /// Scaled Gaussian init; key and query projections start tied, offsets at zero.
    pub fn init(dims: ModelDims, lag_s: f64, seed: u64) -> Result<Self, PipelineError> {
        let mut m = Self::zeros(dims, lag_s)?;
        let mut g = rng::stream(rng::key(&[seed, rng::tag::MODEL_INIT]));
        let mut normal = |s: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut g);
            z * s
        };
        let d = m.dims.clone();
        let dim = d.input_dim();
        let sq = 1.0 / (dim as f64).sqrt();
        let n_att = d.heads * dim * d.d_k;
        for i in 0..n_att {
            let v = normal(sq);
            m.params[m.off.wq + i] = v;
            m.params[m.off.wk + i] = v;
        }
        for &(w, _, inp, out) in &m.off.layers.clone() {
            let s = 1.0 / (inp as f64).sqrt();
            for i in 0..inp * out {
                m.params[w + i] = normal(s);
            }
        }
        let last = *d.hidden.last().unwrap();
        for i in 0..last {
            m.params[m.off.v + i] = normal(1.0 / (last as f64).sqrt());
        }
        Ok(m)
    }

    /// Add `scale * dirs` (row-major `[D][d_k]`) to every head's query and
    /// key projections.
    pub fn seed_attention(&mut self, dirs: &[f64], scale: f64) -> Result<(), PipelineError> {
        let n = self.dims.input_dim() * self.dims.d_k;
        if dirs.len() != n {
            return Err(PipelineError::Shape(format!("expected {n} direction entries, got {}", dirs.len())));
        }
        for w in 0..self.dims.heads {
            for (i, &u) in dirs.iter().enumerate() {
                self.params[self.off.wq + w * n + i] += scale * u;
                self.params[self.off.wk + w * n + i] += scale * u;
            }
        }
        Ok(())
    }

    /// Rebuild from a flat parameter vector (checkpoint loading).
    pub fn from_params(dims: ModelDims, lag_s: f64, params: Vec<f64>) -> Result<Self, PipelineError> {
        dims.validate()?;
        let off = Offsets::new(&dims);
        if params.len() != off.total {
            return Err(PipelineError::Shape(format!("expected {} parameters, got {}", off.total, params.len())));
        }
        Ok(Self { dims, lag_s, params, off })
    }

    pub fn n_params(&self) -> usize {
        self.off.total
    }

    pub fn e_offset(&self) -> usize {
        self.off.e
    }

    /// First encoder layer `(weight offset, in, out)`.
    pub fn first_layer(&self) -> (usize, usize, usize) {
        let (w, _, i, o) = self.off.layers[0];
        (w, i, o)
    }

    fn check_inputs(&self, inputs: &[f64]) -> Result<(), PipelineError> {
        let want = self.dims.receivers * self.dims.input_dim();
        if inputs.len() != want {
            return Err(PipelineError::Shape(format!(
                "expected {} receivers x {} inputs = {want} values, got {}",
                self.dims.receivers,
                self.dims.input_dim(),
                inputs.len()
            )));
        }
        Ok(())
    }

    fn mean_input(&self, inputs: &[f64]) -> Vec<f64> {
        let dim = self.dims.input_dim();
        let mut ybar = vec![0.0; dim];
        for y in inputs.chunks_exact(dim) {
            ybar.iter_mut().zip(y).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / self.dims.receivers as f64;
        ybar.iter_mut().for_each(|a| *a *= inv);
        ybar
    }

    fn head_attention(&self, w: usize, inputs: &[f64], ybar: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = &self.dims;
        let (dim, dk, mm) = (d.input_dim(), d.d_k, d.receivers);
        let p = &self.params;
        let wq = &p[self.off.wq + w * dim * dk..][..dim * dk];
        let wk = &p[self.off.wk + w * dim * dk..][..dim * dk];
        let mut q = p[self.off.q0 + w * dk..][..dk].to_vec();
        for (i, &x) in ybar.iter().enumerate() {
            for j in 0..dk {
                q[j] += wq[i * dk + j] * x;
            }
        }
        let mut keys = p[self.off.e + w * mm * dk..][..mm * dk].to_vec();
        for (m, y) in inputs.chunks_exact(dim).enumerate() {
            let k = &mut keys[m * dk..(m + 1) * dk];
            for (i, &x) in y.iter().enumerate() {
                let row = &wk[i * dk..(i + 1) * dk];
                for j in 0..dk {
                    k[j] += row[j] * x;
                }
            }
        }
        let scale = 1.0 / (dk as f64).sqrt();
        let s: Vec<f64> = (0..mm)
            .map(|m| scale * (0..dk).map(|j| q[j] * keys[m * dk + j]).sum::<f64>())
            .collect();
        let smax = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut a: Vec<f64> = s.iter().map(|v| (v - smax).exp()).collect();
        let tot: f64 = a.iter().sum();
        a.iter_mut().for_each(|v| *v /= tot);
        let mut z = vec![0.0; dim];
        for (m, y) in inputs.chunks_exact(dim).enumerate() {
            z.iter_mut().zip(y).for_each(|(zz, yy)| *zz += a[m] * yy);
        }
        (q, keys, a, z)
    }

    /// Scaled dot-product attention for every head.
    pub fn attention_fuse(&self, inputs: &[f64]) -> Result<Attention, PipelineError> {
        self.check_inputs(inputs)?;
        let ybar = self.mean_input(inputs);
        let mut weights = Vec::with_capacity(self.dims.heads * self.dims.receivers);
        let mut z = Vec::with_capacity(self.dims.heads * self.dims.input_dim());
        for w in 0..self.dims.heads {
            let (_, _, a, zz) = self.head_attention(w, inputs, &ybar);
            weights.extend(a);
            z.extend(zz);
        }
        Ok(Attention { weights, z })
    }

    fn encode(&self, z: &[f64]) -> (Vec<Vec<f64>>, f64) {
        let p = &self.params;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.off.layers.len());
        let mut x: &[f64] = z;
        let mut owned;
        for &(w, b, inp, out) in &self.off.layers {
            owned = vec![0.0; out];
            for o in 0..out {
                let row = &p[w + o * inp..w + (o + 1) * inp];
                let s: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                owned[o] = (s + p[b + o]).tanh();
            }
            acts.push(owned);
            x = acts.last().unwrap();
        }
        let h = acts.last().unwrap();
        let logit = p[self.off.c] + h.iter().zip(&p[self.off.v..]).map(|(a, b)| a * b).sum::<f64>();
        (acts, logit)
    }

    /// Discriminator probability for one head output `z` (length `D`).
    pub fn discriminate(&self, z: &[f64]) -> Result<f64, PipelineError> {
        if z.len() != self.dims.input_dim() {
            return Err(PipelineError::Shape(format!("head output has {} values, expected {}", z.len(), self.dims.input_dim())));
        }
        Ok(sigmoid(self.encode(z).1))
    }

    /// Mean BCE over samples and heads.
    pub fn loss(&self, batch: &[Sample]) -> Result<f64, PipelineError> {
        self.batch_pass(batch, false).map(|(l, _)| l)
    }

    /// Loss and exact gradient of the mean BCE.
    pub fn gradients(&self, batch: &[Sample]) -> Result<(f64, Vec<f64>), PipelineError> {
        self.batch_pass(batch, true)
    }

    /// Forward (and optionally backward) pass over the whole batch as dense
    /// matrix products. Key and query projections of all heads are computed
    /// in one product; the encoder runs per head on `[features x samples]`.
    fn batch_pass(&self, batch: &[Sample], with_grad: bool) -> Result<(f64, Vec<f64>), PipelineError> {
        let d = &self.dims;
        let (dim, dk, mm, nh) = (d.input_dim(), d.d_k, d.receivers, d.heads);
        let n = batch.len();
        let mut grad = if with_grad { vec![0.0; self.off.total] } else { Vec::new() };
        for s in batch {
            self.check_inputs(s.inputs)?;
        }
        if n == 0 {
            return Ok((0.0, grad));
        }
        let p = &self.params;
        let norm = 1.0 / (n * nh) as f64;
        let scale = 1.0 / (dk as f64).sqrt();

        // column b * mm + m holds receiver m of sample b
        let mut yt = DMatrix::<f64>::zeros(dim, n * mm);
        for (b, s) in batch.iter().enumerate() {
            yt.as_mut_slice()[b * mm * dim..(b + 1) * mm * dim].copy_from_slice(s.inputs);
        }
        let inv = 1.0 / mm as f64;
        let ybar = DMatrix::from_fn(n, dim, |b, c| (0..mm).map(|m| yt[(c, b * mm + m)]).sum::<f64>() * inv);
        let proj = |base: usize| {
            DMatrix::from_fn(dim, nh * dk, |i, col| p[base + (col / dk) * dim * dk + i * dk + col % dk])
        };
        let q_all = &ybar * proj(self.off.wq);
        let k_all = yt.tr_mul(&proj(self.off.wk));
        let (mut dq_all, mut dk_all) = if with_grad {
            (DMatrix::<f64>::zeros(n, nh * dk), DMatrix::<f64>::zeros(n * mm, nh * dk))
        } else {
            (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0))
        };

        let mut tot = 0.0;
        let mut q = vec![0.0; dk];
        for w in 0..nh {
            let q0 = &p[self.off.q0 + w * dk..][..dk];
            let e = &p[self.off.e + w * mm * dk..][..mm * dk];
            let kc = |b: usize, m: usize, j: usize| k_all[(b * mm + m, w * dk + j)] + e[m * dk + j];
            // [M x n] softmax weights
            let mut a = DMatrix::<f64>::zeros(mm, n);
            for b in 0..n {
                for j in 0..dk {
                    q[j] = q_all[(b, w * dk + j)] + q0[j];
                }
                let mut col = a.column_mut(b);
                let mut smax = f64::NEG_INFINITY;
                for m in 0..mm {
                    let s = scale * (0..dk).map(|j| q[j] * kc(b, m, j)).sum::<f64>();
                    col[m] = s;
                    smax = smax.max(s);
                }
                let mut t = 0.0;
                for m in 0..mm {
                    col[m] = (col[m] - smax).exp();
                    t += col[m];
                }
                col.iter_mut().for_each(|v| *v /= t);
            }
            // [D x n] fused outputs
            let mut zt = DMatrix::<f64>::zeros(dim, n);
            for b in 0..n {
                zt.column_mut(b).gemv(1.0, &yt.columns(b * mm, mm), &a.column(b), 0.0);
            }

            let mut acts: Vec<DMatrix<f64>> = Vec::with_capacity(self.off.layers.len());
            for (l, &(wo, bo, inp, out)) in self.off.layers.iter().enumerate() {
                let x = if l == 0 { &zt } else { &acts[l - 1] };
                let wl = DMatrix::from_row_slice(out, inp, &p[wo..wo + out * inp]);
                let mut h = wl * x;
                for o in 0..out {
                    h.row_mut(o).iter_mut().for_each(|v| *v = (*v + p[bo + o]).tanh());
                }
                acts.push(h);
            }
            let h = acts.last().unwrap();
            let v = &p[self.off.v..self.off.v + h.nrows()];
            let mut dlogit = vec![0.0; n];
            for b in 0..n {
                let logit = p[self.off.c] + h.column(b).iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
                if !logit.is_finite() {
                    return Err(PipelineError::NonFinite { iteration: None });
                }
                tot += bce_from_logit(logit, batch[b].label);
                dlogit[b] = (sigmoid(logit) - batch[b].label) * norm;
            }
            if !with_grad {
                continue;
            }

            // discriminator
            for i in 0..v.len() {
                grad[self.off.v + i] += h.row(i).iter().zip(&dlogit).map(|(a, b)| a * b).sum::<f64>();
            }
            grad[self.off.c] += dlogit.iter().sum::<f64>();
            let mut dh = DMatrix::from_fn(v.len(), n, |i, b| dlogit[b] * v[i]);

            // encoder, last layer first
            for (l, &(wo, bo, inp, out)) in self.off.layers.iter().enumerate().rev() {
                let x = if l == 0 { &zt } else { &acts[l - 1] };
                dh.zip_apply(&acts[l], |g, a| *g *= 1.0 - a * a);
                let gw = &dh * x.transpose();
                for o in 0..out {
                    grad[bo + o] += dh.row(o).sum();
                    for i in 0..inp {
                        grad[wo + o * inp + i] += gw[(o, i)];
                    }
                }
                let wl = DMatrix::from_row_slice(out, inp, &p[wo..wo + out * inp]);
                dh = wl.tr_mul(&dh);
            }
            let dzt = dh;

            // attention
            let mut da = DMatrix::<f64>::zeros(mm, n);
            for b in 0..n {
                da.column_mut(b).gemv_tr(1.0, &yt.columns(b * mm, mm), &dzt.column(b), 0.0);
            }
            for b in 0..n {
                for j in 0..dk {
                    q[j] = q_all[(b, w * dk + j)] + q0[j];
                }
                let adot: f64 = a.column(b).dot(&da.column(b));
                for m in 0..mm {
                    let ds = a[(m, b)] * (da[(m, b)] - adot) * scale;
                    for j in 0..dk {
                        dq_all[(b, w * dk + j)] += ds * kc(b, m, j);
                        dk_all[(b * mm + m, w * dk + j)] = ds * q[j];
                    }
                }
            }
            let e_o = self.off.e + w * mm * dk;
            for j in 0..dk {
                for (r, g) in dk_all.column(w * dk + j).iter().enumerate() {
                    grad[e_o + (r % mm) * dk + j] += g;
                }
                grad[self.off.q0 + w * dk + j] += dq_all.column(w * dk + j).sum();
            }
        }
        if with_grad {
            let gwk = &yt * &dk_all;
            let gwq = ybar.tr_mul(&dq_all);
            for col in 0..nh * dk {
                let (w, j) = (col / dk, col % dk);
                for i in 0..dim {
                    grad[self.off.wk + w * dim * dk + i * dk + j] += gwk[(i, col)];
                    grad[self.off.wq + w * dim * dk + i * dk + j] += gwq[(i, col)];
                }
            }
        }
        let loss = tot * norm;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(PipelineError::NonFinite { iteration: None });
        }
        Ok((loss, grad))
    }
}
