//! Four-stage hierarchical shifted-window attention encoder.

use candle_core::{Device, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::layers::{gelu, LayerNorm, Linear, ParamStore};
use rand_chacha::ChaCha8Rng;

pub const PATCH: usize = 4;
pub const N_STAGES: usize = 4;
const MASK_FILL: f64 = -100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    #[default]
    Full,
    /// Diagnostic: every attention map is the identity, so a block only mixes
    /// features within a token.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub base_dim: usize,
    pub window: usize,
    pub depths: [usize; N_STAGES],
    pub heads: [usize; N_STAGES],
    pub tile_size: usize,
    pub mlp_ratio: usize,
    #[serde(default)]
    pub attention: AttentionMode,
}

impl EncoderConfig {
    pub fn desk(in_channels: usize) -> Self {
        EncoderConfig {
            in_channels,
            base_dim: 32,
            window: 4,
            depths: [2, 2, 2, 2],
            heads: [1, 2, 4, 8],
            tile_size: 64,
            mlp_ratio: 4,
            attention: AttentionMode::Full,
        }
    }

    pub fn paper(in_channels: usize) -> Self {
        EncoderConfig {
            in_channels,
            base_dim: 128,
            window: 8,
            depths: [2, 2, 18, 2],
            heads: [4, 8, 16, 32],
            tile_size: 256,
            mlp_ratio: 4,
            attention: AttentionMode::Full,
        }
    }

    /// Token grid side at stage `s`.
    pub fn resolution(&self, s: usize) -> usize {
        self.tile_size / PATCH >> s
    }

    pub fn stage_dim(&self, s: usize) -> usize {
        self.base_dim << s
    }

    /// Window side at stage `s` (clamped to the stage resolution).
    pub fn stage_window(&self, s: usize) -> usize {
        self.window.min(self.resolution(s))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.in_channels == 0 {
            return bad("encoder needs at least one input channel".into());
        }
        if self.base_dim < 8 {
            return bad(format!("base_dim {} < 8", self.base_dim));
        }
        let stride = PATCH << (N_STAGES - 1);
        if self.tile_size == 0 || self.tile_size % stride != 0 {
            return bad(format!("tile size {} must be a positive multiple of {stride}", self.tile_size));
        }
        if self.window == 0 || self.mlp_ratio == 0 {
            return bad("window and mlp_ratio must be positive".into());
        }
        for s in 0..N_STAGES {
            let (r, w) = (self.resolution(s), self.stage_window(s));
            if r % w != 0 {
                return bad(format!("stage {s}: window {w} does not tile resolution {r}"));
            }
            if self.heads[s] == 0 || self.stage_dim(s) % self.heads[s] != 0 {
                return bad(format!(
                    "stage {s}: dim {} not divisible by {} heads",
                    self.stage_dim(s),
                    self.heads[s]
                ));
            }
            if self.depths[s] == 0 {
                return bad(format!("stage {s} has depth 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct WindowAttention {
    qkv: Linear,
    proj: Linear,
    rel_table: Tensor,
    rel_index: Tensor,
    heads: usize,
    tokens: usize,
}

impl WindowAttention {
    fn new(ps: &mut ParamStore, name: &str, dim: usize, heads: usize, window: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let side = 2 * window - 1;
        let n = window * window;
        let mut idx = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let dr = (i / window) as i64 - (j / window) as i64 + window as i64 - 1;
                let dc = (i % window) as i64 - (j % window) as i64 + window as i64 - 1;
                idx.push((dr * side as i64 + dc) as u32);
            }
        }
        Ok(WindowAttention {
            qkv: Linear::new(ps, &format!("{name}.qkv"), dim, 3 * dim, true, rng)?,
            proj: Linear::new(ps, &format!("{name}.proj"), dim, dim, true, rng)?,
            rel_table: ps.trunc_normal(&format!("{name}.rel_bias"), &[side * side, heads], 0.02, rng)?,
            rel_index: Tensor::from_vec(idx, n * n, &Device::Cpu)?,
            heads,
            tokens: n,
        })
    }

    /// `x`: (B·nW, N, C). `mask`: (nW, N, N) additive.
    fn forward(&self, x: &Tensor, mask: Option<&Tensor>, mode: AttentionMode) -> Result<Tensor> {
        let (bn, n, c) = x.dims3()?;
        let hd = c / self.heads;
        let qkv = self.qkv.forward(x)?.reshape((bn, n, 3, self.heads, hd))?.permute([2, 0, 3, 1, 4])?;
        let v = qkv.get(2)?.contiguous()?;
        let out = match mode {
            AttentionMode::Identity => v,
            AttentionMode::Full => {
                let q = (qkv.get(0)? * (hd as f64).powf(-0.5))?.contiguous()?;
                let k = qkv.get(1)?.contiguous()?;
                let mut attn = q.matmul(&k.t()?)?;
                let bias = self
                    .rel_table
                    .index_select(&self.rel_index, 0)?
                    .reshape((n, n, self.heads))?
                    .permute([2, 0, 1])?;
                attn = attn.broadcast_add(&bias)?;
                if let Some(m) = mask {
                    let nw = m.dim(0)?;
                    attn = attn
                        .reshape((bn / nw, nw, self.heads, n, n))?
                        .broadcast_add(&m.unsqueeze(1)?.unsqueeze(0)?)?
                        .reshape((bn, self.heads, n, n))?;
                }
                let attn = candle_nn::ops::softmax(&attn, D::Minus1)?;
                attn.matmul(&v)?
            }
        };
        let out = out.transpose(1, 2)?.reshape((bn, n, c))?;
        debug_assert_eq!(n, self.tokens);
        self.proj.forward(&out)
    }
}

#[derive(Debug, Clone)]
struct SwinBlock {
    norm1: LayerNorm,
    attn: WindowAttention,
    norm2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
    window: usize,
    shift: usize,
    mask: Option<Tensor>,
}

fn window_partition(x: &Tensor, w: usize) -> Result<Tensor> {
    let (b, h, wd, c) = x.dims4()?;
    Ok(x.reshape((b, h / w, w, wd / w, w, c))?
        .permute([0, 1, 3, 2, 4, 5])?
        .reshape((b * (h / w) * (wd / w), w * w, c))?)
}

fn window_reverse(x: &Tensor, w: usize, b: usize, h: usize, wd: usize) -> Result<Tensor> {
    let c = x.dim(2)?;
    Ok(x.reshape((b, h / w, wd / w, w, w, c))?
        .permute([0, 1, 3, 2, 4, 5])?
        .reshape((b, h, wd, c))?)
}

/// Additive mask keeping attention inside the regions that were contiguous
/// before the cyclic shift.
fn shift_mask(res: usize, w: usize, s: usize, ps: &ParamStore) -> Result<Tensor> {
    let bounds = [0, res - w, res - s, res];
    let region = |i: usize| (0..3).find(|&k| i >= bounds[k] && i < bounds[k + 1]).unwrap_or(2);
    let nwin = res / w;
    let n = w * w;
    let mut m = Vec::with_capacity(nwin * nwin * n * n);
    for wr in 0..nwin {
        for wc in 0..nwin {
            let label = |t: usize| region(wr * w + t / w) * 3 + region(wc * w + t % w);
            for i in 0..n {
                for j in 0..n {
                    m.push(if label(i) == label(j) { 0.0 } else { MASK_FILL });
                }
            }
        }
    }
    Ok(Tensor::from_vec(m, (nwin * nwin, n, n), ps.device())?.to_dtype(ps.dtype())?)
}

impl SwinBlock {
    #[allow(clippy::too_many_arguments)]
    fn new(
        ps: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        res: usize,
        window: usize,
        shifted: bool,
        mlp_ratio: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let shift = if shifted && res > window { window / 2 } else { 0 };
        let mask = if shift > 0 {
            Some(shift_mask(res, window, shift, ps)?)
        } else {
            None
        };
        Ok(SwinBlock {
            norm1: LayerNorm::new(ps, &format!("{name}.norm1"), dim)?,
            attn: WindowAttention::new(ps, &format!("{name}.attn"), dim, heads, window, rng)?,
            norm2: LayerNorm::new(ps, &format!("{name}.norm2"), dim)?,
            fc1: Linear::new(ps, &format!("{name}.mlp.fc1"), dim, dim * mlp_ratio, true, rng)?,
            fc2: Linear::new(ps, &format!("{name}.mlp.fc2"), dim * mlp_ratio, dim, true, rng)?,
            window,
            shift,
            mask,
        })
    }

    /// `x`: (B, R, R, C).
    fn forward(&self, x: &Tensor, mode: AttentionMode) -> Result<Tensor> {
        let (b, h, w, _) = x.dims4()?;
        let s = self.shift as i32;
        let mut y = self.norm1.forward(x)?;
        if s > 0 {
            y = y.roll(-s, 1)?.roll(-s, 2)?;
        }
        let win = window_partition(&y, self.window)?;
        let att = self.attn.forward(&win, self.mask.as_ref(), mode)?;
        let mut y = window_reverse(&att, self.window, b, h, w)?;
        if s > 0 {
            y = y.roll(s, 1)?.roll(s, 2)?;
        }
        let x = (x + y)?;
        let m = self.fc2.forward(&gelu(&self.fc1.forward(&self.norm2.forward(&x)?)?)?)?;
        Ok((x + m)?)
    }
}

#[derive(Debug, Clone)]
struct PatchMerging {
    norm: LayerNorm,
    reduction: Linear,
}

impl PatchMerging {
    /// (B, R, R, C) → (B, R/2, R/2, 2C); concatenation order is
    /// (even row, even col), (odd, even), (even, odd), (odd, odd).
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, h, w, c) = x.dims4()?;
        let y = x
            .reshape((b, h / 2, 2, w / 2, 2, c))?
            .permute([0, 1, 3, 4, 2, 5])?
            .reshape((b, h / 2, w / 2, 4 * c))?;
        self.reduction.forward(&self.norm.forward(&y)?)
    }
}

#[derive(Debug, Clone)]
struct Stage {
    blocks: Vec<SwinBlock>,
    norm_out: LayerNorm,
    merge: Option<PatchMerging>,
}

#[derive(Debug, Clone)]
pub struct SwinEncoder {
    pub config: EncoderConfig,
    patch_embed: Linear,
    patch_norm: LayerNorm,
    stages: Vec<Stage>,
}

impl SwinEncoder {
    pub fn new(ps: &mut ParamStore, name: &str, config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let c = config;
        let patch_embed = Linear::new(
            ps,
            &format!("{name}.patch_embed"),
            c.in_channels * PATCH * PATCH,
            c.base_dim,
            true,
            rng,
        )?;
        let patch_norm = LayerNorm::new(ps, &format!("{name}.patch_norm"), c.base_dim)?;
        let mut stages = Vec::with_capacity(N_STAGES);
        for s in 0..N_STAGES {
            let dim = c.stage_dim(s);
            let blocks = (0..c.depths[s])
                .map(|i| {
                    SwinBlock::new(
                        ps,
                        &format!("{name}.stage{s}.block{i}"),
                        dim,
                        c.heads[s],
                        c.resolution(s),
                        c.stage_window(s),
                        i % 2 == 1,
                        c.mlp_ratio,
                        rng,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let norm_out = LayerNorm::new(ps, &format!("{name}.stage{s}.norm_out"), dim)?;
            let merge = if s + 1 < N_STAGES {
                Some(PatchMerging {
                    norm: LayerNorm::new(ps, &format!("{name}.stage{s}.merge.norm"), 4 * dim)?,
                    reduction: Linear::new(ps, &format!("{name}.stage{s}.merge.reduction"), 4 * dim, 2 * dim, false, rng)?,
                })
            } else {
                None
            };
            stages.push(Stage { blocks, norm_out, merge });
        }
        Ok(SwinEncoder {
            config: config.clone(),
            patch_embed,
            patch_norm,
            stages,
        })
    }

    /// `x`: (B, C, H, W) normalized input. Returns the feature pyramid, stage
    /// `s` shaped (B, H/4/2ˢ, W/4/2ˢ, d·2ˢ).
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let (b, c, h, w) = x.dims4()?;
        if c != self.config.in_channels {
            return Err(Error::DimMismatch {
                expected: self.config.in_channels,
                actual: c,
            });
        }
        if h != self.config.tile_size || w != self.config.tile_size {
            return Err(Error::DimMismatch {
                expected: self.config.tile_size,
                actual: if h != self.config.tile_size { h } else { w },
            });
        }
        let (hp, wp) = (h / PATCH, w / PATCH);
        let patches = x
            .reshape((b, c, hp, PATCH, wp, PATCH))?
            .permute([0, 2, 4, 1, 3, 5])?
            .reshape((b, hp, wp, c * PATCH * PATCH))?;
        let mut x = self.patch_norm.forward(&self.patch_embed.forward(&patches)?)?;
        let mode = self.config.attention;
        let mut out = Vec::with_capacity(N_STAGES);
        for stage in &self.stages {
            for blk in &stage.blocks {
                x = blk.forward(&x, mode)?;
            }
            out.push(stage.norm_out.forward(&x)?);
            if let Some(m) = &stage.merge {
                x = m.forward(&x)?;
            }
        }
        Ok(out)
    }
}
