//! Dense building blocks with hand-written backward passes.
//!
//! Rows are sequence positions. Every `*_backward` function accumulates
//! parameter gradients into the supplied gradient struct and returns the
//! gradient with respect to its input.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in × out`
    pub w: Array2<f64>,
    /// `1 × out`
    pub b: Array2<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((inputs, outputs)),
            b: Array2::zeros((1, outputs)),
        }
    }

    pub fn forward(&self, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    pub fn backward(&self, x: &ArrayView2<'_, f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.w += &x.t().dot(dy);
        grad.b += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array2<f64>,
    pub beta: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array2::ones((1, dim)),
            beta: Array2::zeros((1, dim)),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            gamma: Array2::zeros((1, dim)),
            beta: Array2::zeros((1, dim)),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / d;
        let centered = x - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
        let xhat = centered * &inv_std.view().insert_axis(Axis(1));
        let y = &xhat * &self.gamma + &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Array2<f64>, grad: &mut LayerNorm) -> Array2<f64> {
        grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d = dy.ncols() as f64;
        let dxhat = dy * &self.gamma;
        let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
        let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
        let mut dx = dxhat - &mean_dxhat.insert_axis(Axis(1));
        dx -= &(&cache.xhat * &mean_dxhat_xhat.insert_axis(Axis(1)));
        dx * &cache.inv_std.view().insert_axis(Axis(1))
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise softmax in place.
pub fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if max == f64::NEG_INFINITY {
            row.fill(0.0);
            continue;
        }
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
}

impl Attention {
    pub fn zeros(d: usize) -> Self {
        Self {
            q: Linear::zeros(d, d),
            k: Linear::zeros(d, d),
            v: Linear::zeros(d, d),
            o: Linear::zeros(d, d),
        }
    }

    /// Bidirectional multi-head self-attention over every row of `x`.
    pub fn forward(&self, x: &Array2<f64>, n_heads: usize) -> (Array2<f64>, AttentionCache) {
        let xv = x.view();
        let q = self.q.forward(&xv);
        let k = self.k.forward(&xv);
        let v = self.v.forward(&xv);
        let d = x.ncols();
        let dh = d / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut context = Array2::zeros(x.raw_dim());
        let mut probs = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            softmax_rows(&mut scores);
            context.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let out = self.o.forward(&context.view());
        (
            out,
            AttentionCache {
                q,
                k,
                v,
                probs,
                context,
            },
        )
    }

    pub fn backward(
        &self,
        x: &Array2<f64>,
        cache: &AttentionCache,
        dy: &Array2<f64>,
        grad: &mut Attention,
    ) -> Array2<f64> {
        let n_heads = cache.probs.len();
        let d = x.ncols();
        let dh = d / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dcontext = self.o.backward(&cache.context.view(), dy, &mut grad.o);
        let mut dq = Array2::zeros(x.raw_dim());
        let mut dk = Array2::zeros(x.raw_dim());
        let mut dv = Array2::zeros(x.raw_dim());
        for (h, p) in cache.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let dctx = dcontext.slice(cols);
            let dp = dctx.dot(&cache.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&dctx));
            let row_dot = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
            let ds = (dp - &row_dot) * p * scale;
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let xv = x.view();
        let mut dx = self.q.backward(&xv, &dq, &mut grad.q);
        dx += &self.k.backward(&xv, &dk, &mut grad.k);
        dx += &self.v.backward(&xv, &dv, &mut grad.v);
        dx
    }
}
