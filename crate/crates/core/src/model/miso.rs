//! The full two-tower model: satellite and covariate encoders, per-stage
//! implicit decoders, the coordinate encoder and the task heads.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::geo::BoundingBox;
use crate::data::observations::Task;
use crate::data::stack::{BandGroup, CovariateStack};
use crate::data::tile::Tile;
use crate::error::{Error, Result};
use crate::model::encoder::{EncoderConfig, SwinEncoder, N_STAGES};
use crate::model::geo::GeoEncoder;
use crate::model::layers::{init_rng, Linear, ParamStore};
use crate::model::liif::{fuse, multiscale_query, Aggregation, MlpDecoder, QueryBatch};

pub const CHECKPOINT_FORMAT: &str = "soilmap-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub satellite: EncoderConfig,
    pub covariate: EncoderConfig,
    /// Shared embedding width `D`.
    pub embed_dim: usize,
    pub pe_frequencies: usize,
    pub aggregation: Aggregation,
    pub seed: u64,
}

impl ModelConfig {
    pub fn desk(n_sat: usize, n_cov: usize) -> Self {
        ModelConfig {
            satellite: EncoderConfig::desk(n_sat),
            covariate: EncoderConfig::desk(n_cov),
            embed_dim: 256,
            pe_frequencies: 10,
            aggregation: Aggregation::Sum,
            seed: 0,
        }
    }

    pub fn paper(n_sat: usize, n_cov: usize) -> Self {
        ModelConfig {
            satellite: EncoderConfig::paper(n_sat),
            covariate: EncoderConfig::paper(n_cov),
            embed_dim: 1024,
            pe_frequencies: 10,
            aggregation: Aggregation::Sum,
            seed: 0,
        }
    }

    pub fn tile_size(&self) -> usize {
        self.satellite.tile_size
    }

    pub fn validate(&self) -> Result<()> {
        self.satellite.validate()?;
        self.covariate.validate()?;
        if self.satellite.tile_size != self.covariate.tile_size {
            return Err(Error::InvalidArgument("both encoders must share the tile size".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::InvalidArgument("embed_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Input normalization and coordinate frame stored with the model so
/// inference matches training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelContext {
    pub band_names: Vec<String>,
    pub satellite_bands: Vec<usize>,
    pub covariate_bands: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Study bounding box used to normalize coordinates to `[-1, 1]`.
    pub bbox: BoundingBox,
}

impl ModelContext {
    pub fn from_stack(stack: &CovariateStack) -> Self {
        ModelContext {
            band_names: stack.bands().iter().map(|b| b.name.clone()).collect(),
            satellite_bands: stack.group_indices(BandGroup::Satellite),
            covariate_bands: stack.group_indices(BandGroup::Covariate),
            mean: stack.stats().mean.clone(),
            std: stack.stats().std.clone(),
            bbox: stack.bounds(),
        }
    }

    /// Stack must carry the same bands in the same order.
    pub fn check_stack(&self, stack: &CovariateStack) -> Result<()> {
        let names: Vec<&str> = stack.bands().iter().map(|b| b.name.as_str()).collect();
        if names != self.band_names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::BandShapeMismatch(format!(
                "stack bands {names:?} differ from the model's {:?}",
                self.band_names
            )));
        }
        Ok(())
    }
}

/// Per-query embeddings of one tile: (Q, D) each.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub g_sat: Tensor,
    pub g_cov: Tensor,
    pub fused: Tensor,
}

#[derive(Debug, Clone)]
pub struct MisoModel {
    pub config: ModelConfig,
    pub context: ModelContext,
    pub params: ParamStore,
    sat_encoder: SwinEncoder,
    cov_encoder: SwinEncoder,
    sat_decoders: Vec<MlpDecoder>,
    cov_decoders: Vec<MlpDecoder>,
    pub geo: GeoEncoder,
    nsp_head: Linear,
    tax_head: Linear,
}

impl MisoModel {
    pub fn new(config: &ModelConfig, context: &ModelContext, dtype: DType) -> Result<Self> {
        config.validate()?;
        if config.satellite.in_channels != context.satellite_bands.len() || config.covariate.in_channels != context.covariate_bands.len() {
            return Err(Error::DimMismatch {
                expected: config.satellite.in_channels + config.covariate.in_channels,
                actual: context.satellite_bands.len() + context.covariate_bands.len(),
            });
        }
        let mut ps = ParamStore::new(dtype);
        let mut rng = init_rng(config.seed, 0);
        let d = config.embed_dim;
        let sat_encoder = SwinEncoder::new(&mut ps, "sat", &config.satellite, &mut rng)?;
        let cov_encoder = SwinEncoder::new(&mut ps, "cov", &config.covariate, &mut rng)?;
        let decoders = |ps: &mut ParamStore, name: &str, enc: &EncoderConfig, rng: &mut _| {
            (0..N_STAGES)
                .map(|s| MlpDecoder::new(ps, &format!("{name}.liif{s}"), enc.stage_dim(s), d, rng))
                .collect::<Result<Vec<_>>>()
        };
        let sat_decoders = decoders(&mut ps, "sat", &config.satellite, &mut rng)?;
        let cov_decoders = decoders(&mut ps, "cov", &config.covariate, &mut rng)?;
        let geo = GeoEncoder::new(&mut ps, "geo", config.pe_frequencies, d, &mut rng)?;
        let nsp_head = Linear::new(&mut ps, "head.nsp", d, 1, true, &mut rng)?;
        let tax_head = Linear::new(&mut ps, "head.taxonomy", d, Task::Taxonomy.num_classes(), true, &mut rng)?;
        Ok(MisoModel {
            config: config.clone(),
            context: context.clone(),
            params: ps,
            sat_encoder,
            cov_encoder,
            sat_decoders,
            cov_decoders,
            geo,
            nsp_head,
            tax_head,
        })
    }

    /// Deep copy with its own parameter storage.
    pub fn duplicate(&self) -> Result<Self> {
        let m = MisoModel::new(&self.config, &self.context, self.dtype())?;
        for (name, var) in self.params.iter() {
            m.params.assign(name, var.as_tensor())?;
        }
        Ok(m)
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    /// Z-scores the tile with the stored statistics and splits it into the
    /// two modality tensors, each (1, C, H, W).
    pub fn tile_tensors(&self, tile: &Tile) -> Result<(Tensor, Tensor)> {
        let ctx = &self.context;
        if tile.channels != ctx.band_names.len() {
            return Err(Error::DimMismatch {
                expected: ctx.band_names.len(),
                actual: tile.channels,
            });
        }
        if tile.size != self.config.tile_size() {
            return Err(Error::DimMismatch {
                expected: self.config.tile_size(),
                actual: tile.size,
            });
        }
        let n = tile.size * tile.size;
        let build = |bands: &[usize]| -> Result<Tensor> {
            let mut v = Vec::with_capacity(bands.len() * n);
            for &b in bands {
                let (m, s) = (ctx.mean[b], ctx.std[b]);
                for &x in tile.channel(b) {
                    if !x.is_finite() {
                        return Err(Error::NonFinite(format!("tile band {b}")));
                    }
                    v.push((x as f64 - m) / s);
                }
            }
            Ok(Tensor::from_vec(v, (1, bands.len(), tile.size, tile.size), self.params.device())?.to_dtype(self.dtype())?)
        };
        Ok((build(&ctx.satellite_bands)?, build(&ctx.covariate_bands)?))
    }

    /// Feature pyramids of both encoders for a batch of tiles.
    pub fn encode(&self, tiles: &[&Tile]) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        let mut sat = Vec::with_capacity(tiles.len());
        let mut cov = Vec::with_capacity(tiles.len());
        for t in tiles {
            let (s, c) = self.tile_tensors(t)?;
            sat.push(s);
            cov.push(c);
        }
        let sat = Tensor::cat(&sat, 0)?;
        let cov = Tensor::cat(&cov, 0)?;
        Ok((self.sat_encoder.forward(&sat)?, self.cov_encoder.forward(&cov)?))
    }

    /// Embeddings at tile-normalized query coordinates on one tile.
    pub fn embed(&self, tile: &Tile, queries: &[(f64, f64)]) -> Result<Embeddings> {
        let tagged: Vec<(usize, (f64, f64))> = queries.iter().map(|&q| (0, q)).collect();
        self.embed_batch(&[tile], &tagged)
    }

    /// Embeddings for queries tagged with the index of their tile; one
    /// encoder pass serves the whole batch.
    pub fn embed_batch(&self, tiles: &[&Tile], queries: &[(usize, (f64, f64))]) -> Result<Embeddings> {
        if queries.is_empty() || tiles.is_empty() {
            return Err(Error::InsufficientData("no query locations".into()));
        }
        if let Some(&(t, _)) = queries.iter().find(|(t, _)| *t >= tiles.len()) {
            return Err(Error::OutOfBounds(format!("query refers to tile {t} of {}", tiles.len())));
        }
        let (zs, zc) = self.encode(tiles)?;
        let batches = (0..N_STAGES)
            .map(|s| QueryBatch::batched(queries, self.config.satellite.resolution(s), &self.params))
            .collect::<Result<Vec<_>>>()?;
        let agg = self.config.aggregation;
        let g_sat = multiscale_query(&zs, &self.sat_decoders, &batches, agg)?;
        let g_cov = multiscale_query(&zc, &self.cov_decoders, &batches, agg)?;
        let fused = fuse(&g_sat, &g_cov)?;
        Ok(Embeddings { g_sat, g_cov, fused })
    }

    /// Coordinates normalized by the study box; points outside are clamped
    /// with a warning.
    pub fn normalize_coords(&self, planar: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let b = &self.context.bbox;
        planar
            .iter()
            .map(|&(x, y)| {
                if !b.contains(x, y) {
                    log::warn!("coordinate ({x:.1}, {y:.1}) outside the study box; clamped");
                }
                b.normalize(x, y)
            })
            .collect()
    }

    pub fn geo_embed(&self, planar: &[(f64, f64)]) -> Result<Tensor> {
        self.geo.embed(&self.normalize_coords(planar), &self.params)
    }

    /// Raw logits: (Q, 1) for NSP, (Q, 7) for taxonomy.
    pub fn logits(&self, fused: &Tensor, task: Task) -> Result<Tensor> {
        match task {
            Task::Nsp => self.nsp_head.forward(fused),
            Task::Taxonomy => self.tax_head.forward(fused),
        }
    }

    /// Class probability rows (`[absence, presence]` for NSP), computed in
    /// f64 on the host.
    pub fn predict_tile(&self, tile: &Tile, queries: &[(f64, f64)], task: Task) -> Result<Vec<Vec<f64>>> {
        let e = self.embed(tile, queries)?;
        self.probabilities(&e.fused, task)
    }

    /// Host-side probability rows for fused embeddings.
    pub fn probabilities(&self, fused: &Tensor, task: Task) -> Result<Vec<Vec<f64>>> {
        let logits: Vec<Vec<f64>> = self.logits(fused, task)?.to_dtype(DType::F64)?.to_vec2()?;
        Ok(logits.iter().map(|l| probabilities(l, task)).collect())
    }

    pub fn save(&self, path: &Path, step: u64, meta: &BTreeMap<String, String>) -> Result<()> {
        let mut header = format!(
            "format: {CHECKPOINT_FORMAT}\nconfig: {}\ncontext: {}\nstep: {step}\n",
            serde_json::to_string(&self.config)?,
            serde_json::to_string(&self.context)?
        );
        for (k, v) in meta {
            if k.contains(':') || k.contains('\n') || v.contains('\n') {
                return Err(Error::InvalidArgument(format!("metadata entry `{k}` is not header-safe")));
            }
            header.push_str(&format!("meta.{k}: {v}\n"));
        }
        header.push_str(&format!("tensors: {}\n\n", self.params.names().count()));
        let mut body = header.into_bytes();
        for (name, var) in self.params.iter() {
            let dims = var.dims();
            body.extend_from_slice(&(name.len() as u32).to_le_bytes());
            body.extend_from_slice(name.as_bytes());
            body.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for &d in dims {
                body.extend_from_slice(&(d as u64).to_le_bytes());
            }
            let values: Vec<f32> = var.as_tensor().flatten_all()?.to_dtype(DType::F32)?.to_vec1()?;
            for v in values {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&body).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint into a model of the requested dtype.
    pub fn load(path: &Path, dtype: DType) -> Result<(Self, CheckpointInfo)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut fields = BTreeMap::new();
        let mut meta = BTreeMap::new();
        loop {
            let mut line = String::new();
            let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                return Err(Error::MalformedHeader("checkpoint header not terminated".into()));
            }
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                break;
            }
            let (k, v) = line
                .split_once(": ")
                .ok_or_else(|| Error::MalformedHeader(format!("bad header line `{line}`")))?;
            match k.strip_prefix("meta.") {
                Some(mk) => {
                    meta.insert(mk.to_string(), v.to_string());
                }
                None => {
                    fields.insert(k.to_string(), v.to_string());
                }
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .ok_or_else(|| Error::MalformedHeader(format!("checkpoint header lacks `{k}`")))
        };
        if get("format")? != CHECKPOINT_FORMAT {
            return Err(Error::MalformedHeader(format!(
                "unsupported checkpoint format `{}`",
                get("format")?
            )));
        }
        let config: ModelConfig = serde_json::from_str(get("config")?)?;
        let context: ModelContext = serde_json::from_str(get("context")?)?;
        let step: u64 = get("step")?.parse().map_err(|_| Error::MalformedHeader("bad step".into()))?;
        let count: usize = get("tensors")?
            .parse()
            .map_err(|_| Error::MalformedHeader("bad tensor count".into()))?;
        let model = MisoModel::new(&config, &context, dtype)?;
        let mut rest = Vec::new();
        reader.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            if pos + n > rest.len() {
                return Err(Error::Format("truncated checkpoint payload".into()));
            }
            pos += n;
            Ok(&rest[pos - n..pos])
        };
        let mut seen = 0usize;
        for _ in 0..count {
            let nl = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
            let name = String::from_utf8(take(nl)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let nd = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
            let mut dims = Vec::with_capacity(nd);
            for _ in 0..nd {
                dims.push(u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize);
            }
            let n: usize = dims.iter().product();
            let raw = take(4 * n)?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::from_vec(values, dims, model.params.device())?;
            model.params.assign(&name, &t)?;
            seen += 1;
        }
        if pos != rest.len() {
            return Err(Error::Format("trailing bytes after checkpoint tensors".into()));
        }
        let expected = model.params.names().count();
        if seen != expected {
            return Err(Error::Format(format!("checkpoint has {seen} tensors, model needs {expected}")));
        }
        Ok((model, CheckpointInfo { step, meta }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointInfo {
    pub step: u64,
    pub meta: BTreeMap<String, String>,
}

/// Sigmoid (NSP, as `[1-p, p]`) or softmax (taxonomy) of one logit row.
pub fn probabilities(logits: &[f64], task: Task) -> Vec<f64> {
    match task {
        Task::Nsp => {
            let x = logits[0];
            let p = if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            };
            vec![1.0 - p, p]
        }
        Task::Taxonomy => {
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        }
    }
}
