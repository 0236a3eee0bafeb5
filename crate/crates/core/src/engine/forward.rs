// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-norm decoder forward pass with residual-stream taps and injections.
//!
//! Block `l` computes
//!
//! ```text
//! h = x + Wo · attn(norm1(x))
//! x' = h + W_out · gelu(W_in · norm2(h))
//! ```
//!
//! Both taps and injections act on `x`, the input of block `l` (the
//! residual stream after block `l - 1`). An injection adds row `i` of its
//! `ae` onto position `i` before the block runs; a tap at the same layer
//! then observes the injected value.
//!
//! Prefill and single-token steps share one per-position kernel, so a
//! cached continuation computes exactly what a full recompute would.

use std::collections::BTreeMap;

use super::bundle::{ModelBundle, NormRefs};
use super::config::{NormKind, PosScheme};
use super::plan::{InjectionPlan, TapRequest};
use super::tensor::Tensor;
use super::vocab::TokenId;
use crate::error::{Error, Result};

/// Per-layer keys and values for every position seen so far.
#[derive(Debug, Clone)]
pub struct KvCache {
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
    len: usize,
}

impl KvCache {
    fn new(n_layers: usize) -> Self {
        Self {
            keys: vec![Vec::new(); n_layers],
            values: vec![Vec::new(); n_layers],
            len: 0,
        }
    }

    /// Number of cached positions.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Output of [`ModelBundle::prefill`].
#[derive(Debug, Clone)]
pub struct Prefill {
    /// Next-token logits at the last prompt position, `[vocab_size]`.
    pub logits: Tensor,
    /// Block inputs for each tapped layer, `[n_tokens, d_model]`.
    pub tapped: BTreeMap<usize, Tensor>,
    pub cache: KvCache,
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[o] = W[o, :] · x` for a row-major `[out, in]` matrix.
fn matvec(w: &Tensor, x: &[f32], out: &mut [f32]) {
    let cols = w.cols();
    for (o, slot) in out.iter_mut().enumerate() {
        *slot = dot(&w.data()[o * cols..(o + 1) * cols], x);
    }
}

fn gelu(x: f32) -> f32 {
    const SQRT_2_OVER_PI: f32 = 0.797_884_6;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

impl ModelBundle {
    fn norm(&self, refs: &NormRefs, x: &[f32], out: &mut [f32]) {
        let eps = self.config().norm_eps;
        let n = x.len() as f32;
        let w = self.t(refs.weight).data();
        match self.config().norm {
            NormKind::RmsNorm => {
                let ms = x.iter().map(|v| v * v).sum::<f32>() / n;
                let inv = 1.0 / (ms + eps).sqrt();
                for ((o, v), g) in out.iter_mut().zip(x).zip(w) {
                    *o = v * inv * g;
                }
            }
            NormKind::LayerNorm => {
                let mean = x.iter().sum::<f32>() / n;
                let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
                let inv = 1.0 / (var + eps).sqrt();
                let b = self.t(refs.bias.expect("layernorm has a bias")).data();
                for (((o, v), g), bb) in out.iter_mut().zip(x).zip(w).zip(b) {
                    *o = (v - mean) * inv * g + bb;
                }
            }
        }
    }

    fn rope(&self, v: &mut [f32], pos: usize) {
        let cfg = self.config();
        let hd = cfg.head_dim();
        let half = hd / 2;
        for head in v.chunks_exact_mut(hd) {
            for i in 0..half {
                let freq = cfg.rope_theta.powf(-((2 * i) as f32) / hd as f32);
                let (sin, cos) = (pos as f32 * freq).sin_cos();
                let (a, b) = (head[i], head[i + half]);
                head[i] = a * cos - b * sin;
                head[i + half] = b * cos + a * sin;
            }
        }
    }

    /// Runs block `l` on `n` rows of `x` at positions `start..start + n`,
    /// appending their keys and values to the cache.
    fn block(&self, l: usize, x: &mut [f32], start: usize, cache: &mut KvCache) {
        let cfg = self.config();
        let d = cfg.d_model;
        let hd = cfg.head_dim();
        let n = x.len() / d;
        let refs = &self.layout.blocks[l];
        let scale = 1.0 / (hd as f32).sqrt();

        let mut h = vec![0.0; d];
        let mut q = vec![0.0; n * d];
        for i in 0..n {
            let pos = start + i;
            self.norm(&refs.norm1, &x[i * d..(i + 1) * d], &mut h);
            let mut k = vec![0.0; d];
            let mut v = vec![0.0; d];
            matvec(self.t(refs.wq), &h, &mut q[i * d..(i + 1) * d]);
            matvec(self.t(refs.wk), &h, &mut k);
            matvec(self.t(refs.wv), &h, &mut v);
            if cfg.pos_scheme == PosScheme::Rotary {
                self.rope(&mut q[i * d..(i + 1) * d], pos);
                self.rope(&mut k, pos);
            }
            cache.keys[l].extend_from_slice(&k);
            cache.values[l].extend_from_slice(&v);
        }

        let keys = &cache.keys[l];
        let values = &cache.values[l];
        let mut attn = vec![0.0; d];
        let mut proj = vec![0.0; d];
        let mut up = vec![0.0; cfg.d_ff];
        let mut scores = Vec::with_capacity(start + n);
        for i in 0..n {
            let pos = start + i;
            for head in 0..cfg.n_heads {
                let off = head * hd;
                let qh = &q[i * d + off..i * d + off + hd];
                scores.clear();
                scores.extend((0..=pos).map(|j| dot(qh, &keys[j * d + off..j * d + off + hd]) * scale));
                let max = scores.iter().fold(f32::NEG_INFINITY, |m, &s| m.max(s));
                let mut total = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    total += *s;
                }
                let out = &mut attn[off..off + hd];
                out.fill(0.0);
                for (j, s) in scores.iter().enumerate() {
                    let p = s / total;
                    for (o, vv) in out.iter_mut().zip(&values[j * d + off..j * d + off + hd]) {
                        *o += p * vv;
                    }
                }
            }
            let row = &mut x[i * d..(i + 1) * d];
            matvec(self.t(refs.wo), &attn, &mut proj);
            for (r, p) in row.iter_mut().zip(&proj) {
                *r += p;
            }

            self.norm(&refs.norm2, row, &mut h);
            matvec(self.t(refs.w_in), &h, &mut up);
            for u in up.iter_mut() {
                *u = gelu(*u);
            }
            matvec(self.t(refs.w_out), &up, &mut proj);
            for (r, p) in row.iter_mut().zip(&proj) {
                *r += p;
            }
        }
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::EmptyPrompt);
        }
        let max_seq = self.config().max_seq;
        if tokens.len() > max_seq {
            return Err(Error::PromptTooLong {
                len: tokens.len(),
                max_seq,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config().vocab_size) {
            return Err(Error::Vocab(format!("token id {bad} is outside the vocabulary")));
        }
        Ok(())
    }

    fn check_plan(&self, n_tokens: usize, plan: &InjectionPlan) -> Result<()> {
        for e in plan.entries() {
            if e.layer >= self.n_layers() {
                return Err(Error::LayerOutOfRange {
                    layer: e.layer,
                    n_layers: self.n_layers(),
                });
            }
            if e.ae.cols() != self.d_model() {
                return Err(Error::Plan(format!(
                    "layer {}: ae width {} does not match d_model {}",
                    e.layer,
                    e.ae.cols(),
                    self.d_model()
                )));
            }
            if n_tokens < e.mtl() {
                return Err(Error::PromptShorterThanVector {
                    len: n_tokens,
                    mtl: e.mtl(),
                    layer: e.layer,
                });
            }
        }
        Ok(())
    }

    fn logits(&self, last: &[f32]) -> Tensor {
        let mut h = vec![0.0; self.d_model()];
        self.norm(&self.layout.final_norm, last, &mut h);
        let mut logits = vec![0.0; self.config().vocab_size];
        matvec(self.t(self.layout.lm_head), &h, &mut logits);
        Tensor::new(vec![logits.len()], logits).expect("logits shape")
    }

    fn embed(&self, tokens: &[TokenId], start: usize) -> Vec<f32> {
        let d = self.d_model();
        let tok = self.t(self.layout.tok_embed);
        let mut x = Vec::with_capacity(tokens.len() * d);
        for (i, &t) in tokens.iter().enumerate() {
            let row = tok.row(t as usize);
            match self.layout.pos_embed {
                Some(p) => {
                    let pos = self.t(p).row(start + i);
                    x.extend(row.iter().zip(pos).map(|(a, b)| a + b));
                }
                None => x.extend_from_slice(row),
            }
        }
        x
    }

    /// Full forward pass over a prompt.
    ///
    /// `tapped[l]` is the input of block `l`, after any injection at `l`.
    /// Plan entries add their `ae` onto positions `[0, mtl)`; a prompt
    /// shorter than some `mtl` is an error.
    pub fn prefill(
        &self,
        tokens: &[TokenId],
        taps: &TapRequest,
        plan: Option<&InjectionPlan>,
    ) -> Result<Prefill> {
        self.check_tokens(tokens)?;
        if let Some(layer) = taps.iter().find(|&l| l >= self.n_layers()) {
            return Err(Error::LayerOutOfRange {
                layer,
                n_layers: self.n_layers(),
            });
        }
        if let Some(plan) = plan {
            self.check_plan(tokens.len(), plan)?;
        }

        let d = self.d_model();
        let mut cache = KvCache::new(self.n_layers());
        let mut x = self.embed(tokens, 0);
        let mut tapped = BTreeMap::new();
        for l in 0..self.n_layers() {
            if let Some(ae) = plan.and_then(|p| p.get(l)) {
                for (r, a) in x.iter_mut().zip(ae.data()) {
                    *r += a;
                }
            }
            if taps.contains(l) {
                tapped.insert(l, Tensor::new(vec![tokens.len(), d], x.clone())?);
            }
            self.block(l, &mut x, 0, &mut cache);
        }
        cache.len = tokens.len();
        let logits = self.logits(&x[(tokens.len() - 1) * d..]);
        Ok(Prefill {
            logits,
            tapped,
            cache,
        })
    }

    /// Runs blocks `layer..n_layers` on a caller-supplied block input
    /// `[n_tokens, d_model]` and returns last-position logits.
    pub fn continue_from(&self, layer: usize, residual: &Tensor) -> Result<Tensor> {
        if layer >= self.n_layers() {
            return Err(Error::LayerOutOfRange {
                layer,
                n_layers: self.n_layers(),
            });
        }
        let d = self.d_model();
        if residual.shape().len() != 2 || residual.cols() != d || residual.rows() == 0 {
            return Err(Error::Tensor(format!(
                "residual must be [n_tokens, {d}], got {:?}",
                residual.shape()
            )));
        }
        if residual.rows() > self.config().max_seq {
            return Err(Error::PromptTooLong {
                len: residual.rows(),
                max_seq: self.config().max_seq,
            });
        }
        let mut cache = KvCache::new(self.n_layers());
        let mut x = residual.data().to_vec();
        for l in layer..self.n_layers() {
            self.block(l, &mut x, 0, &mut cache);
        }
        Ok(self.logits(&x[(residual.rows() - 1) * d..]))
    }

    /// Feeds one token at the next position and returns its logits.
    pub fn step(&self, cache: &mut KvCache, token: TokenId) -> Result<Tensor> {
        self.check_tokens(&[token])?;
        let max_seq = self.config().max_seq;
        if cache.len >= max_seq {
            return Err(Error::PromptTooLong {
                len: cache.len + 1,
                max_seq,
            });
        }
        let start = cache.len;
        let mut x = self.embed(&[token], start);
        for l in 0..self.n_layers() {
            self.block(l, &mut x, start, cache);
        }
        cache.len += 1;
        Ok(self.logits(&x))
    }

    /// Greedy decoding with a KV cache.
    ///
    /// The plan is applied during prefill only; later positions see it
    /// through the cached keys and values. Decoding stops after `max_new`
    /// tokens, after a stop token (which is included in the output), or at
    /// the end of the context window.
    pub fn generate(
        &self,
        tokens: &[TokenId],
        plan: Option<&InjectionPlan>,
        max_new: usize,
    ) -> Result<Vec<TokenId>> {
        check_max_new(max_new)?;
        let Prefill {
            mut logits,
            mut cache,
            ..
        } = self.prefill(tokens, &TapRequest::none(), plan)?;
        let mut out = Vec::new();
        loop {
            let next = logits.argmax() as TokenId;
            out.push(next);
            if self.done(tokens.len(), &out, max_new) {
                return Ok(out);
            }
            logits = self.step(&mut cache, next)?;
        }
    }

    /// Greedy decoding by full recomputation, re-applying the plan to
    /// positions `[0, mtl)` at every step. Reference path for
    /// [`ModelBundle::generate`].
    pub fn generate_uncached(
        &self,
        tokens: &[TokenId],
        plan: Option<&InjectionPlan>,
        max_new: usize,
    ) -> Result<Vec<TokenId>> {
        check_max_new(max_new)?;
        let mut seq = tokens.to_vec();
        let mut out = Vec::new();
        loop {
            let logits = self.prefill(&seq, &TapRequest::none(), plan)?.logits;
            let next = logits.argmax() as TokenId;
            out.push(next);
            seq.push(next);
            if self.done(tokens.len(), &out, max_new) {
                return Ok(out);
            }
        }
    }

    fn done(&self, n_prompt: usize, out: &[TokenId], max_new: usize) -> bool {
        let last = *out.last().expect("at least one generated token");
        out.len() >= max_new
            || self.vocab().is_stop(last)
            || n_prompt + out.len() > self.config().max_seq
    }
}

fn check_max_new(max_new: usize) -> Result<()> {
    if max_new == 0 {
        return Err(Error::Prompt("max_new must be at least 1".into()));
    }
    Ok(())
}
