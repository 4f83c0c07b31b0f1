//! Desk-scale synthetic world: a covariate stack built from smooth correlated
//! random fields, clustered field observations labelled by documented rules,
//! and a Voronoi region partition.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! [`SynthConfig::seed`]; independent parts of the world draw from separate
//! ChaCha streams so toggling label noise never changes the covariates or the
//! sampling locations.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::geo::GeoTransform;
use crate::data::observations::{FieldObservation, SoilOrder};
use crate::data::partition::RegionPartition;
use crate::data::resample::{upsample_band, Grid};
use crate::data::stack::{BandGroup, BandInfo, CovariateStack};
use crate::error::{Error, Result};

pub const RNG_ALGORITHM: &str = "chacha8";

const STREAM_FIELDS: u64 = 0;
const STREAM_POINTS: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_REGIONS: u64 = 3;

pub const SATELLITE_BANDS: [&str; 9] = ["B02", "B03", "B04", "B05", "B06", "B07", "B08", "B11", "B12"];
pub const TERRAIN_BANDS: [&str; 7] = [
    "elevation",
    "aspect",
    "max_curvature",
    "slope",
    "stream_power_index",
    "topographic_position_index",
    "saga_wetness_index",
];
pub const CLIMATE_BANDS: [&str; 3] = ["mean_annual_precipitation", "summer_warmth_index", "min_jan_temperature"];

const ZONE_NAMES: [&str; 7] = [
    "continuous",
    "discontinuous",
    "sporadic",
    "isolated",
    "unfrozen",
    "glacier",
    "waterbody",
];

/// Standardization constant for one channel: `z = (value - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Standardizer {
    pub center: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn z(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }
}

/// Every constant of the labelling rules, so labels can be recomputed from
/// covariate pixels outside the generator.
///
/// NSP score: `s = Σ weight_i · z_i(channel_i) + noise`, presence iff
/// `s > threshold`, where the threshold is the `1 - target_prevalence`
/// quantile of the scores at the sampled points.
///
/// Taxonomy, first matching rule wins (z-values include the same noise):
/// 1. NSP presence → Gelisols
/// 2. `z(saga_wetness_index) > histosol_wetness` → Histosols
/// 3. `z(elevation) > andisol_elevation` → Andisols
/// 4. `z(stream_power_index) > entisol_stream_power` → Entisols
/// 5. `z(mean_annual_precipitation) < mollisol_dryness` → Mollisols
/// 6. `z(mean_annual_precipitation) > spodosol_wetness` → Spodosols
/// 7. otherwise Inceptisols
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRule {
    pub score_channels: [String; 3],
    pub score_weights: [f64; 3],
    pub score_standardizers: [Standardizer; 3],
    pub target_prevalence: f64,
    /// Amplitude of the spatially correlated latent term (not observable in
    /// the covariates).
    pub latent_amplitude: f64,
    pub latent_length: f64,
    /// Half-width of the i.i.d. uniform noise term.
    pub iid_amplitude: f64,
    pub elevation: Standardizer,
    pub wetness: Standardizer,
    pub stream_power: Standardizer,
    pub precipitation: Standardizer,
    pub histosol_wetness: f64,
    pub andisol_elevation: f64,
    pub entisol_stream_power: f64,
    pub mollisol_dryness: f64,
    pub spodosol_wetness: f64,
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule {
            score_channels: ["min_jan_temperature".into(), "saga_wetness_index".into(), "B04".into()],
            score_weights: [-1.0, 0.6, 0.5],
            score_standardizers: [
                Standardizer { center: -25.0, scale: 5.0 },
                Standardizer { center: 8.0, scale: 2.0 },
                Standardizer { center: 0.06, scale: 0.02 },
            ],
            target_prevalence: 0.23,
            latent_amplitude: 0.15,
            latent_length: 1200.0,
            iid_amplitude: 0.05,
            elevation: Standardizer {
                center: 450.0,
                scale: 250.0,
            },
            wetness: Standardizer { center: 8.0, scale: 2.0 },
            stream_power: Standardizer { center: 2.0, scale: 1.0 },
            precipitation: Standardizer {
                center: 500.0,
                scale: 150.0,
            },
            histosol_wetness: 1.0,
            andisol_elevation: 1.0,
            entisol_stream_power: 1.0,
            mollisol_dryness: -1.3,
            spodosol_wetness: 0.3,
        }
    }
}

impl LabelRule {
    /// Noise-free NSP score from the three score-channel values.
    pub fn nsp_score(&self, values: [f64; 3]) -> f64 {
        (0..3)
            .map(|i| self.score_weights[i] * self.score_standardizers[i].z(values[i]))
            .sum()
    }

    /// Taxonomy rule given the NSP label, the standardized-and-noised
    /// elevation / wetness, and the raw stream-power and precipitation values.
    pub fn soil_order(&self, nsp_presence: bool, z_elevation: f64, z_wetness: f64, stream_power: f64, precipitation: f64) -> SoilOrder {
        let z_spi = self.stream_power.z(stream_power);
        let z_p = self.precipitation.z(precipitation);
        if nsp_presence {
            SoilOrder::Gelisols
        } else if z_wetness > self.histosol_wetness {
            SoilOrder::Histosols
        } else if z_elevation > self.andisol_elevation {
            SoilOrder::Andisols
        } else if z_spi > self.entisol_stream_power {
            SoilOrder::Entisols
        } else if z_p < self.mollisol_dryness {
            SoilOrder::Mollisols
        } else if z_p > self.spodosol_wetness {
            SoilOrder::Spodosols
        } else {
            SoilOrder::Inceptisols
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub rng_algorithm: String,
    pub width: usize,
    pub height: usize,
    /// Meters per pixel.
    pub pixel_size: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub n_points: usize,
    pub n_satellite_bands: usize,
    pub n_regions: usize,
    /// Survey areas are laid out on a `survey_grid × survey_grid` lattice.
    pub survey_grid: usize,
    pub survey_radius: f64,
    pub sites_per_area: usize,
    pub site_spread: f64,
    /// Native resolution of the climate normals before interpolation.
    pub climate_resolution: f64,
    pub field_components: usize,
    pub noise_free: bool,
    pub label_rule: LabelRule,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            rng_algorithm: RNG_ALGORITHM.into(),
            width: 640,
            height: 640,
            pixel_size: 100.0,
            origin_x: 200_000.0,
            origin_y: 1_700_000.0,
            n_points: 3000,
            n_satellite_bands: 9,
            n_regions: 5,
            survey_grid: 3,
            survey_radius: 2500.0,
            sites_per_area: 12,
            site_spread: 150.0,
            climate_resolution: 800.0,
            field_components: 48,
            noise_free: false,
            label_rule: LabelRule::default(),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.rng_algorithm != RNG_ALGORITHM {
            return Err(Error::InvalidArgument(format!(
                "unsupported rng `{}` (only `{RNG_ALGORITHM}`)",
                self.rng_algorithm
            )));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidArgument(format!(
                "degenerate world {}x{} (need at least 16x16)",
                self.width, self.height
            )));
        }
        if !(self.pixel_size > 0.0) || !(self.climate_resolution >= self.pixel_size) {
            return Err(Error::InvalidArgument("invalid pixel/climate resolution".into()));
        }
        if self.n_points < 50 {
            return Err(Error::InvalidArgument(format!("need at least 50 points, got {}", self.n_points)));
        }
        if !(3..=9).contains(&self.n_satellite_bands) {
            return Err(Error::InvalidArgument("satellite band count must be in 3..=9".into()));
        }
        if self.n_regions == 0 || self.survey_grid == 0 || self.sites_per_area == 0 {
            return Err(Error::InvalidArgument("degenerate region/site layout".into()));
        }
        if self.field_components == 0 {
            return Err(Error::InvalidArgument("field_components must be positive".into()));
        }
        Ok(())
    }
}

/// Output of [`generate_synthetic_world`].
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub stack: CovariateStack,
    pub observations: Vec<FieldObservation>,
    pub partition: RegionPartition,
    /// Score threshold used for NSP labels.
    pub nsp_threshold: f64,
    pub config: SynthConfig,
}

/// Stationary, approximately unit-variance Gaussian random field with a
/// squared-exponential covariance of length `length` (random Fourier
/// features).
#[derive(Debug, Clone)]
pub struct SmoothField {
    kx: Vec<f64>,
    ky: Vec<f64>,
    phase: Vec<f64>,
}

impl SmoothField {
    pub fn new(rng: &mut ChaCha8Rng, length: f64, components: usize) -> Self {
        let normal = Normal::new(0.0, 1.0 / length).expect("positive length");
        let mut kx = Vec::with_capacity(components);
        let mut ky = Vec::with_capacity(components);
        let mut phase = Vec::with_capacity(components);
        for _ in 0..components {
            kx.push(normal.sample(rng));
            ky.push(normal.sample(rng));
            phase.push(rng.random::<f64>() * std::f64::consts::TAU);
        }
        SmoothField { kx, ky, phase }
    }

    fn norm(&self) -> f64 {
        (2.0 / self.kx.len() as f64).sqrt()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let s: f64 = (0..self.kx.len())
            .map(|k| (self.kx[k] * x + self.ky[k] * y + self.phase[k]).cos())
            .sum();
        s * self.norm()
    }

    /// Evaluates on the tensor grid `xs × ys`, row-major (rows follow `ys`).
    pub fn eval_grid(&self, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let (w, h) = (xs.len(), ys.len());
        let mut out = vec![0f64; w * h];
        let mut ca = vec![0f64; w];
        let mut sa = vec![0f64; w];
        for k in 0..self.kx.len() {
            for (c, &x) in xs.iter().enumerate() {
                let a = self.kx[k] * x + self.phase[k];
                ca[c] = a.cos();
                sa[c] = a.sin();
            }
            for (r, &y) in ys.iter().enumerate() {
                let b = self.ky[k] * y;
                let (cb, sb) = (b.cos(), b.sin());
                let row = &mut out[r * w..(r + 1) * w];
                for c in 0..w {
                    row[c] += ca[c] * cb - sa[c] * sb;
                }
            }
        }
        let n = self.norm();
        out.iter_mut().for_each(|v| *v *= n);
        out
    }
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates the desk-scale world. Deterministic in `config`.
pub fn generate_synthetic_world(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let transform = GeoTransform::north_up(config.origin_x, config.origin_y, config.pixel_size)?;
    let xs: Vec<f64> = (0..w).map(|c| transform.pixel_center(c as i64, 0).0).collect();
    let ys: Vec<f64> = (0..h).map(|r| transform.pixel_center(0, r as i64).1).collect();
    let k = config.field_components;

    // Latent fields, drawn in a fixed order.
    let mut rng = rng_stream(config.seed, STREAM_FIELDS);
    let elev = SmoothField::new(&mut rng, 6000.0, k);
    let wet = SmoothField::new(&mut rng, 2500.0, k);
    let veg = SmoothField::new(&mut rng, 1500.0, k);
    let asp = SmoothField::new(&mut rng, 3000.0, k);
    let rough = SmoothField::new(&mut rng, 800.0, k);
    let temp = SmoothField::new(&mut rng, 15000.0, k);
    let precip = SmoothField::new(&mut rng, 12000.0, k);
    let texture: Vec<SmoothField> = (0..config.n_satellite_bands)
        .map(|_| SmoothField::new(&mut rng, 600.0, k))
        .collect();

    let e = elev.eval_grid(&xs, &ys);
    let wv = wet.eval_grid(&xs, &ys);
    let v = veg.eval_grid(&xs, &ys);
    let a = asp.eval_grid(&xs, &ys);
    let r = rough.eval_grid(&xs, &ys);
    let n = w * h;
    let combine = |f: &dyn Fn(usize) -> f64| -> Vec<f32> { (0..n).map(|i| f(i) as f32).collect() };

    let mut bands = Vec::new();
    let mut data = Vec::new();

    // Satellite reflectances: vegetation and wetness signal plus band texture.
    const SAT_BASE: [f64; 9] = [0.04, 0.07, 0.06, 0.11, 0.20, 0.24, 0.25, 0.18, 0.10];
    const SAT_VEG: [f64; 9] = [-0.008, -0.006, -0.016, 0.004, 0.03, 0.04, 0.05, -0.01, -0.015];
    const SAT_WET: [f64; 9] = [-0.004, -0.005, -0.008, -0.01, -0.012, -0.015, -0.02, -0.03, -0.02];
    for b in 0..config.n_satellite_bands {
        let tex = texture[b].eval_grid(&xs, &ys);
        let grid = if SATELLITE_BANDS[b] == "B04" {
            // red: standardized by the score rule as center 0.06, scale 0.02
            combine(&|i| 0.06 + 0.02 * (-0.8 * v[i] - 0.5 * wv[i] + 0.33 * tex[i]))
        } else {
            combine(&|i| SAT_BASE[b] + SAT_VEG[b] * v[i] + SAT_WET[b] * wv[i] + 0.006 * tex[i])
        };
        bands.push(BandInfo::new(SATELLITE_BANDS[b], BandGroup::Satellite));
        data.push(grid);
    }

    // Terrain derivatives.
    let terrain: [Vec<f32>; 7] = [
        combine(&|i| 450.0 + 250.0 * e[i]),
        combine(&|i| (180.0 + 90.0 * a[i]).clamp(0.0, 360.0)),
        combine(&|i| 0.02 * r[i]),
        combine(&|i| (8.0 + 3.0 * (0.6 * r[i] + 0.5 * a[i])).max(0.0)),
        combine(&|i| 2.0 + 0.7 * wv[i] + 0.7 * r[i]),
        combine(&|i| 1.5 * r[i]),
        combine(&|i| 8.0 + 2.0 * (0.8 * wv[i] - 0.6 * e[i])),
    ];
    for (name, grid) in TERRAIN_BANDS.iter().zip(terrain) {
        bands.push(BandInfo::new(*name, BandGroup::Covariate));
        data.push(grid);
    }

    // Climate normals: evaluated on the coarse native grid, then bilinearly
    // interpolated to the stack resolution.
    let ratio = config.climate_resolution / config.pixel_size;
    let cw = ((w as f64 / ratio).ceil() as usize).max(2);
    let ch = ((h as f64 / ratio).ceil() as usize).max(2);
    let cxs: Vec<f64> = (0..cw)
        .map(|c| config.origin_x + (c as f64 + 0.5) * config.climate_resolution)
        .collect();
    let cys: Vec<f64> = (0..ch)
        .map(|r| config.origin_y - (r as f64 + 0.5) * config.climate_resolution)
        .collect();
    let ce = elev.eval_grid(&cxs, &cys);
    let ct = temp.eval_grid(&cxs, &cys);
    let cp = precip.eval_grid(&cxs, &cys);
    let coarse: [Vec<f32>; 3] = [
        (0..cw * ch).map(|i| (500.0 + 150.0 * cp[i]) as f32).collect(),
        (0..cw * ch).map(|i| (45.0 + 8.0 * (0.6 * ct[i] + 0.8 * cp[i])) as f32).collect(),
        (0..cw * ch).map(|i| (-25.0 + 5.0 * (0.8 * ct[i] - 0.6 * ce[i])) as f32).collect(),
    ];
    for (name, grid) in CLIMATE_BANDS.iter().zip(coarse) {
        let up = upsample_band(&Grid::new(cw, ch, grid)?, config.climate_resolution, config.pixel_size)?;
        let mut fine = Vec::with_capacity(n);
        for row in 0..h {
            let src_row = row.min(up.height - 1);
            for col in 0..w {
                fine.push(up.get(col.min(up.width - 1), src_row));
            }
        }
        bands.push(BandInfo::new(*name, BandGroup::Covariate));
        data.push(fine);
    }

    let mut stack = CovariateStack::new(w, h, bands, data, transform, -9999.0)?;
    stack.meta_mut().insert("synth.seed".into(), config.seed.to_string());
    stack.meta_mut().insert("synth.rng".into(), config.rng_algorithm.clone());

    let locations = sample_locations(config, &transform)?;
    let (observations, nsp_threshold) = label_points(config, &stack, &locations)?;
    let partition = voronoi_partition(config, &transform)?;

    Ok(SynthWorld {
        stack,
        observations,
        partition,
        nsp_threshold,
        config: config.clone(),
    })
}

/// Clustered sampling: survey areas on a jittered lattice, sites inside each
/// area, points scattered around sites (Gaussian truncated at 3σ).
fn sample_locations(config: &SynthConfig, t: &GeoTransform) -> Result<Vec<(f64, f64, usize)>> {
    let mut rng = rng_stream(config.seed, STREAM_POINTS);
    let world_w = config.width as f64 * config.pixel_size;
    let world_h = config.height as f64 * config.pixel_size;
    let g = config.survey_grid;
    let (cell_w, cell_h) = (world_w / g as f64, world_h / g as f64);
    let radius = config
        .survey_radius
        .min(0.5 * cell_w.min(cell_h) - 3.0 * config.site_spread)
        .max(0.0);
    let mut areas = Vec::new();
    for gy in 0..g {
        for gx in 0..g {
            let jx = (rng.random::<f64>() - 0.5) * 0.1 * cell_w;
            let jy = (rng.random::<f64>() - 0.5) * 0.1 * cell_h;
            let cx = config.origin_x + (gx as f64 + 0.5) * cell_w + jx;
            let cy = config.origin_y - (gy as f64 + 0.5) * cell_h + jy;
            areas.push((cx, cy));
        }
    }
    let mut sites = Vec::new();
    for (ai, &(cx, cy)) in areas.iter().enumerate() {
        for _ in 0..config.sites_per_area {
            let rr = radius * rng.random::<f64>().sqrt();
            let th = rng.random::<f64>() * std::f64::consts::TAU;
            sites.push((cx + rr * th.cos(), cy + rr * th.sin(), ai));
        }
    }
    let normal = Normal::new(0.0, config.site_spread).expect("positive spread");
    let b = {
        let (x0, y0) = t.pixel_to_planar(0.5, 0.5);
        let (x1, y1) = t.pixel_to_planar(config.width as f64 - 0.5, config.height as f64 - 0.5);
        (x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1))
    };
    let mut out = Vec::with_capacity(config.n_points);
    for i in 0..config.n_points {
        let area = i % areas.len();
        let per_area = config.sites_per_area;
        let site = &sites[area * per_area + rng.random_range(0..per_area)];
        loop {
            let dx: f64 = normal.sample(&mut rng);
            let dy: f64 = normal.sample(&mut rng);
            if dx.hypot(dy) > 3.0 * config.site_spread {
                continue;
            }
            let (x, y) = (site.0 + dx, site.1 + dy);
            if x > b.0 && x < b.2 && y > b.1 && y < b.3 {
                out.push((x, y, site.2));
                break;
            }
        }
    }
    Ok(out)
}

/// Values of a band at the pixel under a point.
fn pixel_value(stack: &CovariateStack, band: usize, x: f64, y: f64) -> Result<f64> {
    let (c, r) = stack
        .pixel_of(x, y)
        .ok_or_else(|| Error::OutOfBounds("sample outside stack".into()))?;
    Ok(stack.get(band, c, r) as f64)
}

fn band(stack: &CovariateStack, name: &str) -> Result<usize> {
    stack
        .band_index(name)
        .ok_or_else(|| Error::InvalidArgument(format!("label rule needs band `{name}`")))
}

/// Noise-free NSP score of the pixel under `(x, y)`.
pub fn nsp_score_at(rule: &LabelRule, stack: &CovariateStack, x: f64, y: f64) -> Result<f64> {
    let mut vals = [0.0; 3];
    for (i, name) in rule.score_channels.iter().enumerate() {
        vals[i] = pixel_value(stack, band(stack, name)?, x, y)?;
    }
    Ok(rule.nsp_score(vals))
}

fn label_points(config: &SynthConfig, stack: &CovariateStack, locations: &[(f64, f64, usize)]) -> Result<(Vec<FieldObservation>, f64)> {
    let rule = &config.label_rule;
    let mut rng = rng_stream(config.seed, STREAM_NOISE);
    let latent = SmoothField::new(&mut rng, rule.latent_length, config.field_components);
    let (lat_amp, iid_amp) = if config.noise_free {
        (0.0, 0.0)
    } else {
        (rule.latent_amplitude, rule.iid_amplitude)
    };
    let mut noise = Vec::with_capacity(locations.len());
    for &(x, y, _) in locations {
        let l = latent.eval(x, y).clamp(-2.0, 2.0) * lat_amp;
        let u = (rng.random::<f64>() * 2.0 - 1.0) * iid_amp;
        noise.push(l + u);
    }
    let scores: Vec<f64> = locations
        .iter()
        .zip(&noise)
        .map(|(&(x, y, _), nz)| Ok(nsp_score_at(rule, stack, x, y)? + nz))
        .collect::<Result<_>>()?;
    let threshold = prevalence_threshold(&scores, rule.target_prevalence);

    let (be, bw, bs, bp) = (
        band(stack, "elevation")?,
        band(stack, "saga_wetness_index")?,
        band(stack, "stream_power_index")?,
        band(stack, "mean_annual_precipitation")?,
    );
    let mut obs = Vec::with_capacity(locations.len());
    for (i, &(x, y, area)) in locations.iter().enumerate() {
        let presence = scores[i] > threshold;
        let ze = rule.elevation.z(pixel_value(stack, be, x, y)?) + noise[i];
        let zw = rule.wetness.z(pixel_value(stack, bw, x, y)?) + noise[i];
        let order = rule.soil_order(presence, ze, zw, pixel_value(stack, bs, x, y)?, pixel_value(stack, bp, x, y)?);
        let year = 2005 + rng.random_range(0..15);
        let month = 6 + rng.random_range(0..3);
        let day = 1 + rng.random_range(0..28);
        obs.push(FieldObservation {
            x,
            y,
            nsp: Some(presence as u8),
            tax: Some(order),
            date: format!("{year:04}-{month:02}-{day:02}"),
            source: format!("synthetic-area{area}"),
        });
    }
    Ok((obs, threshold))
}

/// Threshold splitting sorted scores so that `round(n * prevalence)` lie above.
pub fn prevalence_threshold(scores: &[f64], prevalence: f64) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let above = ((n as f64) * prevalence).round() as usize;
    let k = n.saturating_sub(above).clamp(1, n - 1);
    0.5 * (sorted[k - 1] + sorted[k])
}

fn voronoi_partition(config: &SynthConfig, t: &GeoTransform) -> Result<RegionPartition> {
    let mut rng = rng_stream(config.seed, STREAM_REGIONS);
    let seeds: Vec<(f64, f64)> = (0..config.n_regions)
        .map(|_| {
            (
                rng.random::<f64>() * config.width as f64,
                rng.random::<f64>() * config.height as f64,
            )
        })
        .collect();
    let mut labels = Vec::with_capacity(config.width * config.height);
    for r in 0..config.height {
        for c in 0..config.width {
            let (px, py) = (c as f64 + 0.5, r as f64 + 0.5);
            let best = seeds
                .iter()
                .enumerate()
                .map(|(i, s)| (i, (s.0 - px).powi(2) + (s.1 - py).powi(2)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            labels.push(best as i32);
        }
    }
    let regions: BTreeMap<i32, String> = (0..config.n_regions)
        .map(|i| {
            let name = ZONE_NAMES.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("zone-{i}"));
            (i as i32, name)
        })
        .collect();
    RegionPartition::new("permafrost-zones", regions, config.width, config.height, *t, labels)
}
