//! GRU decoder with an optional layer-norm head, written out by hand with
//! exact backpropagation through time.
//!
//! ```text
//! stacked input -> tanh(affine) -> GRU x layers -> [LayerNorm -> dropout -> tanh(affine)] -> affine -> logits
//! ```

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub layer_norm_head: bool,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    /// `in x 3H`, gate blocks ordered reset | update | candidate.
    pub w_x: Array2<f64>,
    /// `H x 3H`.
    pub w_h: Array2<f64>,
    pub b_x: Array1<f64>,
    pub b_h: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Model weights. The same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub layers: Vec<GruLayer>,
    pub head: Option<HeadParams>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Self {
        let (i, h, c) = (config.input_dim, config.hidden, config.num_classes);
        let layers = (0..config.layers)
            .map(|_| GruLayer {
                w_x: Array2::zeros((h, 3 * h)),
                w_h: Array2::zeros((h, 3 * h)),
                b_x: Array1::zeros(3 * h),
                b_h: Array1::zeros(3 * h),
            })
            .collect();
        let head = config.layer_norm_head.then(|| HeadParams {
            ln_gain: Array1::zeros(h),
            ln_bias: Array1::zeros(h),
            w: Array2::zeros((h, h)),
            b: Array1::zeros(h),
        });
        ModelParams {
            w_in: Array2::zeros((i, h)),
            b_in: Array1::zeros(h),
            layers,
            head,
            w_out: Array2::zeros((h, c)),
            b_out: Array1::zeros(c),
            config,
        }
    }

    /// Uniform `±1/sqrt(fan_in)` initialization; layer-norm gain starts at 1.
    pub fn init(config: ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(config);
        let fill = |a: &mut [f64], fan_in: usize, rng: &mut ChaCha8Rng| {
            let k = 1.0 / (fan_in as f64).sqrt();
            let u = Uniform::new_inclusive(-k, k).unwrap();
            for v in a {
                *v = u.sample(rng);
            }
        };
        let (i, h) = (p.config.input_dim, p.config.hidden);
        fill(p.w_in.as_slice_mut().unwrap(), i, rng);
        fill(p.b_in.as_slice_mut().unwrap(), i, rng);
        for l in &mut p.layers {
            fill(l.w_x.as_slice_mut().unwrap(), h, rng);
            fill(l.w_h.as_slice_mut().unwrap(), h, rng);
            fill(l.b_x.as_slice_mut().unwrap(), h, rng);
            fill(l.b_h.as_slice_mut().unwrap(), h, rng);
        }
        if let Some(hd) = &mut p.head {
            hd.ln_gain.fill(1.0);
            fill(hd.w.as_slice_mut().unwrap(), h, rng);
            fill(hd.b.as_slice_mut().unwrap(), h, rng);
        }
        fill(p.w_out.as_slice_mut().unwrap(), h, rng);
        fill(p.b_out.as_slice_mut().unwrap(), h, rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config.clone())
    }

    /// `(name, shape)` of every tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.tensors().into_iter().map(|(n, s, _)| (n, s)).collect()
    }

    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        out.push(("w_in".into(), self.w_in.shape().to_vec(), self.w_in.as_slice().unwrap()));
        out.push(("b_in".into(), self.b_in.shape().to_vec(), self.b_in.as_slice().unwrap()));
        for (k, l) in self.layers.iter().enumerate() {
            out.push((format!("gru{k}.w_x"), l.w_x.shape().to_vec(), l.w_x.as_slice().unwrap()));
            out.push((format!("gru{k}.w_h"), l.w_h.shape().to_vec(), l.w_h.as_slice().unwrap()));
            out.push((format!("gru{k}.b_x"), l.b_x.shape().to_vec(), l.b_x.as_slice().unwrap()));
            out.push((format!("gru{k}.b_h"), l.b_h.shape().to_vec(), l.b_h.as_slice().unwrap()));
        }
        if let Some(h) = &self.head {
            out.push(("head.ln_gain".into(), h.ln_gain.shape().to_vec(), h.ln_gain.as_slice().unwrap()));
            out.push(("head.ln_bias".into(), h.ln_bias.shape().to_vec(), h.ln_bias.as_slice().unwrap()));
            out.push(("head.w".into(), h.w.shape().to_vec(), h.w.as_slice().unwrap()));
            out.push(("head.b".into(), h.b.shape().to_vec(), h.b.as_slice().unwrap()));
        }
        out.push(("w_out".into(), self.w_out.shape().to_vec(), self.w_out.as_slice().unwrap()));
        out.push(("b_out".into(), self.b_out.shape().to_vec(), self.b_out.as_slice().unwrap()));
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|(_, _, d)| d).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.w_in.as_slice_mut().unwrap(), self.b_in.as_slice_mut().unwrap()];
        for l in &mut self.layers {
            out.push(l.w_x.as_slice_mut().unwrap());
            out.push(l.w_h.as_slice_mut().unwrap());
            out.push(l.b_x.as_slice_mut().unwrap());
            out.push(l.b_h.as_slice_mut().unwrap());
        }
        if let Some(h) = &mut self.head {
            out.push(h.ln_gain.as_slice_mut().unwrap());
            out.push(h.ln_bias.as_slice_mut().unwrap());
            out.push(h.w.as_slice_mut().unwrap());
            out.push(h.b.as_slice_mut().unwrap());
        }
        out.push(self.w_out.as_slice_mut().unwrap());
        out.push(self.b_out.as_slice_mut().unwrap());
        out
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// `self += other`.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in self.slices_mut() {
            for x in a.iter_mut() {
                *x *= k;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Forward-pass mode; training enables head dropout.
pub enum Mode<'a> {
    Eval,
    Train { dropout: f64, rng: &'a mut ChaCha8Rng },
}

#[derive(Debug, Clone)]
struct GruCache {
    reset: Array2<f64>,
    update: Array2<f64>,
    cand: Array2<f64>,
    /// Recurrent part of the candidate pre-activation, before the reset gate.
    hidden_cand: Array2<f64>,
    out: Array2<f64>,
}

#[derive(Debug, Clone)]
struct HeadCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    /// Dropout multipliers (0 or 1/(1-p)), absent in eval mode.
    mask: Option<Array2<f64>>,
    dropped: Array2<f64>,
    act: Array2<f64>,
}

/// Activations retained for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    proj: Array2<f64>,
    gru: Vec<GruCache>,
    head: Option<HeadCache>,
}

fn check_finite(a: &Array2<f64>, layer: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(layer.to_string()))
    }
}

fn gru_forward(layer: &GruLayer, input: ArrayView2<'_, f64>) -> GruCache {
    let t_len = input.nrows();
    let h = layer.w_h.nrows();
    let gx = input.dot(&layer.w_x) + &layer.b_x;
    let mut reset = Array2::zeros((t_len, h));
    let mut update = Array2::zeros((t_len, h));
    let mut cand = Array2::zeros((t_len, h));
    let mut hidden_cand = Array2::zeros((t_len, h));
    let mut out = Array2::zeros((t_len, h));
    let mut prev = Array1::<f64>::zeros(h);
    for t in 0..t_len {
        let gh = prev.dot(&layer.w_h) + &layer.b_h;
        let gxt = gx.row(t);
        for j in 0..h {
            let r = sigmoid(gxt[j] + gh[j]);
            let z = sigmoid(gxt[h + j] + gh[h + j]);
            let hn = gh[2 * h + j];
            let n = (gxt[2 * h + j] + r * hn).tanh();
            reset[[t, j]] = r;
            update[[t, j]] = z;
            cand[[t, j]] = n;
            hidden_cand[[t, j]] = hn;
            out[[t, j]] = (1.0 - z) * n + z * prev[j];
        }
        prev.assign(&out.row(t));
    }
    GruCache {
        reset,
        update,
        cand,
        hidden_cand,
        out,
    }
}

/// Returns `(d input, layer gradients)` given the gradient on the layer output.
fn gru_backward(
    layer: &GruLayer,
    input: ArrayView2<'_, f64>,
    cache: &GruCache,
    d_out: ArrayView2<'_, f64>,
) -> (Array2<f64>, GruLayer) {
    let (t_len, h) = cache.out.dim();
    let mut d_gx = Array2::<f64>::zeros((t_len, 3 * h));
    let mut d_gh = Array2::<f64>::zeros((t_len, 3 * h));
    let mut d_next = Array1::<f64>::zeros(h);
    let w_h_t = layer.w_h.t();
    for t in (0..t_len).rev() {
        let mut direct = Array1::<f64>::zeros(h);
        for j in 0..h {
            let dh = d_out[[t, j]] + d_next[j];
            let hp = if t > 0 { cache.out[[t - 1, j]] } else { 0.0 };
            let (r, z, n, hn) = (
                cache.reset[[t, j]],
                cache.update[[t, j]],
                cache.cand[[t, j]],
                cache.hidden_cand[[t, j]],
            );
            let dn = dh * (1.0 - z);
            let dz = dh * (hp - n);
            let dan = dn * (1.0 - n * n);
            let dar = dan * hn * r * (1.0 - r);
            let daz = dz * z * (1.0 - z);
            d_gx[[t, j]] = dar;
            d_gx[[t, h + j]] = daz;
            d_gx[[t, 2 * h + j]] = dan;
            d_gh[[t, j]] = dar;
            d_gh[[t, h + j]] = daz;
            d_gh[[t, 2 * h + j]] = dan * r;
            direct[j] = dh * z;
        }
        d_next = direct + d_gh.row(t).dot(&w_h_t);
    }
    let mut prev_h = Array2::<f64>::zeros((t_len, h));
    if t_len > 1 {
        prev_h.slice_mut(s![1.., ..]).assign(&cache.out.slice(s![..t_len - 1, ..]));
    }
    let grads = GruLayer {
        w_x: input.t().dot(&d_gx),
        w_h: prev_h.t().dot(&d_gh),
        b_x: d_gx.sum_axis(Axis(0)),
        b_h: d_gh.sum_axis(Axis(0)),
    };
    let d_input = d_gx.dot(&layer.w_x.t());
    (d_input, grads)
}

fn layer_norm(x: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>) {
    let (t_len, h) = x.dim();
    let mut xhat = Array2::zeros((t_len, h));
    let mut inv_std = Array1::zeros(t_len);
    for t in 0..t_len {
        let row = x.row(t);
        let mean = row.sum() / h as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[t] = is;
        for j in 0..h {
            xhat[[t, j]] = (row[j] - mean) * is;
        }
    }
    (xhat, inv_std)
}

/// Runs the network on a `T x input_dim` stacked feature matrix.
pub fn forward(params: &ModelParams, input: ArrayView2<'_, f64>, mode: Mode<'_>) -> Result<(Array2<f64>, ForwardCache)> {
    let cfg = &params.config;
    if input.ncols() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "input width {} != model input_dim {}",
            input.ncols(),
            cfg.input_dim
        )));
    }
    if input.nrows() == 0 {
        return Err(Error::Shape("empty input sequence".into()));
    }
    let proj = (input.dot(&params.w_in) + &params.b_in).mapv(f64::tanh);
    check_finite(&proj, "input projection")?;
    let mut gru = Vec::with_capacity(params.layers.len());
    for (k, layer) in params.layers.iter().enumerate() {
        let below = if k == 0 { proj.view() } else { gru.last().map(|c: &GruCache| c.out.view()).unwrap() };
        let c = gru_forward(layer, below);
        check_finite(&c.out, &format!("gru layer {k}"))?;
        gru.push(c);
    }
    let top = gru.last().map_or(proj.view(), |c| c.out.view());
    let (features, head) = match &params.head {
        Some(hp) => {
            let (xhat, inv_std) = layer_norm(top);
            let normed = &xhat * &hp.ln_gain + &hp.ln_bias;
            let (dropped, mask) = match mode {
                Mode::Train { dropout, rng } if dropout > 0.0 => {
                    let keep = 1.0 / (1.0 - dropout);
                    let mask = normed.mapv(|_| if rng.random::<f64>() < dropout { 0.0 } else { keep });
                    (&normed * &mask, Some(mask))
                }
                _ => (normed, None),
            };
            let act = (dropped.dot(&hp.w) + &hp.b).mapv(f64::tanh);
            check_finite(&act, "head")?;
            (
                act.clone(),
                Some(HeadCache {
                    xhat,
                    inv_std,
                    mask,
                    dropped,
                    act,
                }),
            )
        }
        None => (top.to_owned(), None),
    };
    let logits = features.dot(&params.w_out) + &params.b_out;
    check_finite(&logits, "output projection")?;
    Ok((
        logits,
        ForwardCache {
            input: input.to_owned(),
            proj,
            gru,
            head,
        },
    ))
}

/// Gradients of all parameters given `d loss / d logits`.
pub fn backward(params: &ModelParams, cache: &ForwardCache, d_logits: ArrayView2<'_, f64>) -> ModelParams {
    let mut g = params.zeros_like();
    let top = cache.gru.last().map_or(cache.proj.view(), |c| c.out.view());
    let features = match &cache.head {
        Some(hc) => hc.act.view(),
        None => top,
    };
    g.w_out = features.t().dot(&d_logits);
    g.b_out = d_logits.sum_axis(Axis(0));
    let d_features = d_logits.dot(&params.w_out.t());

    let mut d_top = match (&params.head, &cache.head) {
        (Some(hp), Some(hc)) => {
            let d_pre = &d_features * &hc.act.mapv(|a| 1.0 - a * a);
            let gh = g.head.as_mut().unwrap();
            gh.w = hc.dropped.t().dot(&d_pre);
            gh.b = d_pre.sum_axis(Axis(0));
            let mut d_normed = d_pre.dot(&hp.w.t());
            if let Some(mask) = &hc.mask {
                d_normed *= mask;
            }
            gh.ln_gain = (&d_normed * &hc.xhat).sum_axis(Axis(0));
            gh.ln_bias = d_normed.sum_axis(Axis(0));
            let d_xhat = &d_normed * &hp.ln_gain;
            let (t_len, h) = d_xhat.dim();
            let mut d_top = Array2::zeros((t_len, h));
            for t in 0..t_len {
                let dx = d_xhat.row(t);
                let xh = hc.xhat.row(t);
                let sum_dx = dx.sum();
                let sum_dx_xh = dx.dot(&xh);
                let k = hc.inv_std[t] / h as f64;
                for j in 0..h {
                    d_top[[t, j]] = k * (h as f64 * dx[j] - sum_dx - xh[j] * sum_dx_xh);
                }
            }
            d_top
        }
        _ => d_features,
    };

    for k in (0..params.layers.len()).rev() {
        let below = if k == 0 { cache.proj.view() } else { cache.gru[k - 1].out.view() };
        let (d_below, lg) = gru_backward(&params.layers[k], below, &cache.gru[k], d_top.view());
        g.layers[k] = lg;
        d_top = d_below;
    }
    let d_pre = &d_top * &cache.proj.mapv(|a| 1.0 - a * a);
    g.w_in = cache.input.t().dot(&d_pre);
    g.b_in = d_pre.sum_axis(Axis(0));
    g
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        crate::math::log_softmax_in_place(row.as_slice_mut().unwrap());
    }
    out
}

/// Maps `d loss / d log_probs` to `d loss / d logits`.
pub fn log_softmax_backward(log_probs: ArrayView2<'_, f64>, d_log_probs: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = d_log_probs.to_owned();
    for (mut row, lp) in out.rows_mut().into_iter().zip(log_probs.rows()) {
        let total = row.sum();
        for (v, &l) in row.iter_mut().zip(lp.iter()) {
            *v -= l.exp() * total;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny(layer_norm_head: bool, classes: usize) -> ModelParams {
        let cfg = ModelConfig {
            input_dim: 3,
            hidden: 4,
            layers: 2,
            layer_norm_head,
            num_classes: classes,
        };
        ModelParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let p = ModelParams::zeros(ModelConfig {
            input_dim: 3,
            hidden: 4,
            layers: 1,
            layer_norm_head: false,
            num_classes: 5,
        });
        let x = Array2::from_elem((6, 3), 0.7);
        let (logits, _) = forward(&p, x.view(), Mode::Eval).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
        let lp = log_softmax(logits.view());
        assert!(lp.iter().all(|&v| (v - -(5f64).ln()).abs() < 1e-15));
    }

    #[test]
    fn single_unit_gru_by_hand() {
        // One hidden unit, identity-ish input projection, no head.
        let cfg = ModelConfig {
            input_dim: 1,
            hidden: 1,
            layers: 1,
            layer_norm_head: false,
            num_classes: 1,
        };
        let mut p = ModelParams::zeros(cfg);
        p.w_in[[0, 0]] = 1.0;
        let l = &mut p.layers[0];
        l.w_x.assign(&ndarray::array![[0.5, -0.3, 0.8]]);
        l.b_x.assign(&ndarray::array![0.1, 0.2, -0.1]);
        l.b_h.assign(&ndarray::array![0.05, -0.05, 0.3]);
        p.w_out[[0, 0]] = 1.0;
        let x = ndarray::array![[0.6]];
        let (logits, _) = forward(&p, x.view(), Mode::Eval).unwrap();

        let u = 0.6f64.tanh();
        let r = sigmoid(0.5 * u + 0.1 + 0.05);
        let z = sigmoid(-0.3 * u + 0.2 - 0.05);
        let n = (0.8 * u - 0.1 + r * 0.3).tanh();
        let h = (1.0 - z) * n;
        assert!((logits[[0, 0]] - h).abs() < 1e-15);
    }

    #[test]
    fn batch_copies_are_identical() {
        let p = tiny(true, 6);
        let x = Array2::from_shape_fn((7, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let a = forward(&p, x.view(), Mode::Eval).unwrap().0;
        let b = forward(&p, x.view(), Mode::Eval).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let p = tiny(true, 9);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - j as f64) * 3.0);
        let lp = log_softmax(forward(&p, x.view(), Mode::Eval).unwrap().0.view());
        for r in lp.rows() {
            assert!((r.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn nan_input_names_layer() {
        let p = tiny(false, 4);
        let mut x = Array2::zeros((3, 3));
        x[[1, 1]] = f64::NAN;
        match forward(&p, x.view(), Mode::Eval) {
            Err(Error::Numerical(layer)) => assert_eq!(layer, "input projection"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn width_mismatch() {
        let p = tiny(false, 4);
        assert!(matches!(forward(&p, Array2::zeros((3, 2)).view(), Mode::Eval), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_matches_finite_differences_on_linear_loss() {
        for head in [false, true] {
            let p = tiny(head, 5);
            let x = Array2::from_shape_fn((4, 3), |(i, j)| ((i + 2 * j) as f64).cos());
            let weights = Array2::from_shape_fn((4, 5), |(i, j)| ((i * 5 + j) as f64 * 0.7).sin());
            let loss = |q: &ModelParams| (forward(q, x.view(), Mode::Eval).unwrap().0 * &weights).sum();
            let (_, cache) = forward(&p, x.view(), Mode::Eval).unwrap();
            let g = backward(&p, &cache, weights.view());
            let analytic: Vec<f64> = g.slices().concat();
            let mut q = p.clone();
            let mut idx = 0;
            let n = q.num_params();
            while idx < n {
                let (ti, off) = locate(&q, idx);
                let orig = q.slices()[ti][off];
                q.slices_mut()[ti][off] = orig + 1e-6;
                let up = loss(&q);
                q.slices_mut()[ti][off] = orig - 1e-6;
                let down = loss(&q);
                q.slices_mut()[ti][off] = orig;
                let fd = (up - down) / 2e-6;
                assert!((fd - analytic[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "head={head} param {idx}: {fd} vs {}", analytic[idx]);
                idx += 1;
            }
        }
    }

    fn locate(p: &ModelParams, mut idx: usize) -> (usize, usize) {
        for (i, s) in p.slices().iter().enumerate() {
            if idx < s.len() {
                return (i, idx);
            }
            idx -= s.len();
        }
        unreachable!()
    }
}
