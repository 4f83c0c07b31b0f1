use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use candle_core::DType;
use soilmap::data::{
    generate_synthetic_world, read_observations, write_observations, CovariateStack, FieldObservation, RegionPartition, Task,
};
use soilmap::evaluation::regional::regions_of;
use soilmap::evaluation::report::class_names;
use soilmap::evaluation::{
    emit_report, read_predictions, write_predictions, EvalContext, MetricsReport, PointPrediction, ReportFormat, REPORT_FORMAT,
};
use soilmap::model::{MisoModel, ModelContext};
use soilmap::mosaic::{predict_region, ForestPredictor, MosaicPlan, PixelRegion};
use soilmap::provenance::Provenance;
use soilmap::rf::{rf_fold, FoldSearch, Forest};
use soilmap::splits::{make_split, FoldAssignment, SplitScheme, N_FOLDS};
use soilmap::training::{finetune_fold, pretrain};
use soilmap::{Error, Result};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Miso,
    Rf,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Miso => "miso",
            ModelKind::Rf => "rf",
        }
    }
}

/// Resolved configuration plus the on-disk layout under `paths.out`.
pub struct Run {
    pub cfg: RunConfig,
    pub prov: Provenance,
}

impl Run {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let prov = cfg.provenance()?;
        std::fs::create_dir_all(&cfg.paths.out).map_err(|e| Error::io(&cfg.paths.out, e))?;
        let run = Run { cfg, prov };
        let record = run.out().join(format!("config-{}.toml", &run.prov.config_hash[..12]));
        std::fs::write(&record, run.cfg.to_toml()?).map_err(|e| Error::io(&record, e))?;
        Ok(run)
    }

    fn out(&self) -> &Path {
        &self.cfg.paths.out
    }

    fn stack_path(&self) -> PathBuf {
        self.cfg.paths.stack.clone().unwrap_or_else(|| self.out().join("stack.smr"))
    }

    fn observations_path(&self) -> PathBuf {
        self.cfg
            .paths
            .observations
            .clone()
            .unwrap_or_else(|| self.out().join("observations.csv"))
    }

    fn partition_prefix(&self) -> PathBuf {
        self.cfg.paths.partition.clone().unwrap_or_else(|| self.out().join("regions"))
    }

    fn folds_path(&self, scheme: SplitScheme) -> PathBuf {
        self.out().join(format!("folds-{scheme}.csv"))
    }

    fn pretrained_path(&self) -> PathBuf {
        self.out().join("pretrained.ckpt")
    }

    pub fn model_dir(&self, kind: ModelKind, task: Task, scheme: SplitScheme) -> PathBuf {
        self.out().join(format!("{}-{}-{scheme}", kind.as_str(), task.as_str()))
    }

    pub fn report_dir(&self, task: Task, scheme: SplitScheme) -> PathBuf {
        self.out().join(format!("report-{}-{scheme}", task.as_str()))
    }

    fn meta(&self) -> BTreeMap<String, String> {
        self.prov.meta()
    }

    /// Warns when an upstream artifact was produced under another config.
    fn check_upstream(&self, what: &Path, found: Option<Provenance>) {
        match found {
            Some(p) if p.config_hash != self.prov.config_hash => log::warn!(
                "config hash mismatch: {} was written under {} (current {})",
                what.display(),
                p.config_hash,
                self.prov.config_hash
            ),
            Some(_) => {}
            None => log::warn!("{} carries no provenance record", what.display()),
        }
    }

    fn require(&self, path: &Path) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "missing input")))
        }
    }

    fn load_stack(&self) -> Result<CovariateStack> {
        let p = self.stack_path();
        self.require(&p)?;
        let s = CovariateStack::load(&p)?;
        self.check_upstream(&p, Provenance::from_meta(s.meta()));
        Ok(s)
    }

    fn load_observations(&self) -> Result<Vec<FieldObservation>> {
        let p = self.observations_path();
        self.require(&p)?;
        self.check_upstream(&p, comment_provenance(&p)?);
        read_observations(&p)
    }

    fn load_folds(&self, scheme: SplitScheme, n: usize) -> Result<FoldAssignment> {
        let p = self.folds_path(scheme);
        self.require(&p)?;
        self.check_upstream(&p, comment_provenance(&p)?);
        let f = FoldAssignment::load(&p)?;
        if f.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                actual: f.len(),
            });
        }
        Ok(f)
    }

    fn load_partition(&self) -> Result<Option<RegionPartition>> {
        let prefix = self.partition_prefix();
        if !prefix.with_extension("csv").exists() {
            log::info!("no partition at {}; regional tables skipped", prefix.display());
            return Ok(None);
        }
        RegionPartition::load(&prefix).map(Some)
    }

    fn load_miso(&self, path: &Path) -> Result<MisoModel> {
        self.require(path)?;
        let (m, info) = MisoModel::load(path, DType::F32)?;
        self.check_upstream(path, Provenance::from_meta(&info.meta));
        Ok(m)
    }

    fn load_forest(&self, path: &Path) -> Result<Forest> {
        self.require(path)?;
        let f = Forest::load(path)?;
        self.check_upstream(path, Provenance::from_text(&f.meta));
        Ok(f)
    }

    pub fn synth(&self) -> Result<()> {
        let mut world = generate_synthetic_world(&self.cfg.synth)?;
        world.stack.meta_mut().extend(self.meta());
        world.stack.save(&self.stack_path())?;
        write_observations(&self.observations_path(), &world.observations, &self.prov.lines())?;
        world.partition.save(&self.partition_prefix(), &self.meta())?;
        log::info!(
            "synth: {}x{} stack, {} observations, {} regions",
            world.stack.width(),
            world.stack.height(),
            world.observations.len(),
            world.partition.regions.len()
        );
        Ok(())
    }

    pub fn split(&self) -> Result<PathBuf> {
        let obs = self.load_observations()?;
        let pts: Vec<(f64, f64)> = obs.iter().map(|o| (o.x, o.y)).collect();
        let scheme = self.cfg.scheme()?;
        let folds = make_split(&pts, scheme, self.cfg.seed)?;
        let p = self.folds_path(scheme);
        folds.save(&p, &self.prov.line())?;
        log::info!("split {scheme}: fold sizes {:?}", folds.fold_sizes());
        Ok(p)
    }

    fn new_model(&self, stack: &CovariateStack) -> Result<MisoModel> {
        let ctx = ModelContext::from_stack(stack);
        let mc = self
            .cfg
            .model
            .build(ctx.satellite_bands.len(), ctx.covariate_bands.len(), self.cfg.seed);
        MisoModel::new(&mc, &ctx, DType::F32)
    }

    pub fn pretrain(&self) -> Result<()> {
        let stack = self.load_stack()?;
        let model = self.new_model(&stack)?;
        let dir = self.out().join("pretrain");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let log = pretrain(&model, &stack, &self.cfg.train, Some(&dir), &self.meta())?;
        log.write_csv(&dir.join("log.csv"), &self.prov.lines())?;
        let steps = (self.cfg.train.pretrain_epochs * self.cfg.train.pretrain_steps_per_epoch) as u64;
        model.save(&self.pretrained_path(), steps, &self.meta())
    }

    fn selected(folds: &Option<Vec<usize>>) -> Result<Vec<usize>> {
        let f = folds.clone().unwrap_or_else(|| (0..N_FOLDS).collect());
        if let Some(bad) = f.iter().find(|&&k| k >= N_FOLDS) {
            return Err(Error::InvalidArgument(format!("fold {bad} out of range")));
        }
        Ok(f)
    }

    pub fn finetune(&self, task: Task, folds_sel: &Option<Vec<usize>>, from_scratch: bool) -> Result<PathBuf> {
        let stack = self.load_stack()?;
        let obs = self.load_observations()?;
        let scheme = self.cfg.scheme()?;
        let folds = self.load_folds(scheme, obs.len())?;
        let base = if from_scratch {
            self.new_model(&stack)?
        } else {
            self.load_miso(&self.pretrained_path())?
        };
        let dir = self.model_dir(ModelKind::Miso, task, scheme);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut preds = Vec::new();
        for fold in Self::selected(folds_sel)? {
            let out = finetune_fold(&base, &stack, obs.as_slice(), &folds, fold, task, &self.cfg.train)?;
            out.model
                .save(&dir.join(format!("fold-{fold}.ckpt")), out.log.rows.len() as u64, &self.meta())?;
            out.log.write_csv(&dir.join(format!("log-{fold}.csv")), &self.prov.lines())?;
            log::info!(
                "finetune {} fold {fold}: {} held-out predictions",
                task.as_str(),
                out.predictions.len()
            );
            preds.extend(out.predictions);
        }
        self.write_fold_predictions(&dir, preds)
    }

    pub fn train_rf(&self, task: Task, folds_sel: &Option<Vec<usize>>) -> Result<PathBuf> {
        let stack = self.load_stack()?;
        let obs = self.load_observations()?;
        let scheme = self.cfg.scheme()?;
        let folds = self.load_folds(scheme, obs.len())?;
        let search = (self.cfg.rf_search.iterations > 0).then(|| FoldSearch {
            space: self.cfg.rf_search.space.clone(),
            iterations: self.cfg.rf_search.iterations,
        });
        let dir = self.model_dir(ModelKind::Rf, task, scheme);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut preds = Vec::new();
        for fold in Self::selected(folds_sel)? {
            let mut out = rf_fold(&stack, obs.as_slice(), &folds, fold, task, &self.cfg.rf, search.as_ref())?;
            out.forest.meta = self.prov.line();
            out.forest.save(&dir.join(format!("fold-{fold}.rf")))?;
            if let Some(s) = &out.search {
                let p = dir.join(format!("search-{fold}.json"));
                std::fs::write(&p, serde_json::to_string_pretty(s)?).map_err(|e| Error::io(&p, e))?;
            }
            log::info!(
                "rf {} fold {fold}: oob {:?}, {} held-out predictions",
                task.as_str(),
                out.forest.oob_accuracy,
                out.predictions.len()
            );
            preds.extend(out.predictions);
        }
        self.write_fold_predictions(&dir, preds)
    }

    fn write_fold_predictions(&self, dir: &Path, mut preds: Vec<PointPrediction>) -> Result<PathBuf> {
        preds.sort_by_key(|p| p.index);
        let p = dir.join("predictions.csv");
        write_predictions(&p, &preds, &self.prov.lines())?;
        Ok(p)
    }

    pub fn predict(
        &self,
        task: Task,
        kind: ModelKind,
        fold: usize,
        window: Option<PixelRegion>,
        output: Option<PathBuf>,
    ) -> Result<PathBuf> {
        if fold >= N_FOLDS {
            return Err(Error::InvalidArgument(format!("fold {fold} out of range")));
        }
        let stack = self.load_stack()?;
        let scheme = self.cfg.scheme()?;
        let region = window.unwrap_or_else(|| PixelRegion::whole(&stack));
        let dir = self.model_dir(kind, task, scheme);
        let mut raster = match kind {
            ModelKind::Miso => {
                let model = self.load_miso(&dir.join(format!("fold-{fold}.ckpt")))?;
                model.context.check_stack(&stack)?;
                let plan = MosaicPlan::new(&stack, region, model.config.tile_size(), &self.cfg.mosaic)?;
                predict_region(&model, &stack, &plan, task)?
            }
            ModelKind::Rf => {
                let forest = self.load_forest(&dir.join(format!("fold-{fold}.rf")))?;
                let predictor = ForestPredictor {
                    forest: &forest,
                    buffer_d: self.cfg.rf.buffer_d,
                    include_xy: self.cfg.rf.include_xy,
                };
                let plan = MosaicPlan::new(&stack, region, self.cfg.model.tile_size, &self.cfg.mosaic)?;
                predict_region(&predictor, &stack, &plan, task)?
            }
        };
        raster.meta.extend(self.meta());
        raster.meta.insert("model".into(), kind.as_str().into());
        raster.meta.insert("fold".into(), fold.to_string());
        let path = output.unwrap_or_else(|| dir.join(format!("map-fold{fold}.smr")));
        raster.save(&path)?;
        log::info!("predict: {}x{} raster at {}", raster.width, raster.height, path.display());
        Ok(path)
    }

    /// Scores held-out predictions of each `(name, csv)` pair; defaults to
    /// every model directory present for the task and scheme.
    pub fn evaluate(&self, task: Task, inputs: &[(String, PathBuf)]) -> Result<MetricsReport> {
        let obs = self.load_observations()?;
        let scheme = self.cfg.scheme()?;
        let folds = self.load_folds(scheme, obs.len())?;
        let inputs: Vec<(String, PathBuf)> = if inputs.is_empty() {
            [ModelKind::Miso, ModelKind::Rf]
                .iter()
                .map(|&k| (k.as_str().to_string(), self.model_dir(k, task, scheme).join("predictions.csv")))
                .filter(|(_, p)| p.exists())
                .collect()
        } else {
            inputs.to_vec()
        };
        if inputs.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no prediction files for {} under {}",
                task.as_str(),
                self.out().display()
            )));
        }
        let labels: Vec<Option<usize>> = obs.iter().map(|o| o.label(task)).collect();
        let partition = self.load_partition()?;
        let pts: Vec<(f64, f64)> = obs.iter().map(|o| (o.x, o.y)).collect();
        let region_ids = partition.as_ref().map(|p| regions_of(&pts, p));
        let ctx = EvalContext {
            task,
            labels: &labels,
            folds: &folds,
            regions: region_ids.as_deref().zip(partition.as_ref().map(|p| &p.regions)),
            excluded_zones: &self.cfg.evaluate.excluded_zones,
            threshold: self.cfg.evaluate.threshold,
            n_bins: self.cfg.evaluate.n_bins,
        };
        let mut models = Vec::new();
        for (name, path) in &inputs {
            self.require(path)?;
            self.check_upstream(path, comment_provenance(path)?);
            models.push(ctx.evaluate_model(name, &read_predictions(path)?)?);
        }
        let report = MetricsReport {
            format: REPORT_FORMAT.into(),
            scheme: scheme.to_string(),
            task,
            threshold: self.cfg.evaluate.threshold,
            class_names: class_names(task),
            provenance: self.meta(),
            zones_truth: ctx.zones_truth(),
            models,
        };
        let mut formats = vec![ReportFormat::Json];
        if self.cfg.evaluate.svg {
            formats.push(ReportFormat::Svg);
        }
        emit_report(&report, &self.report_dir(task, scheme), &formats)?;
        Ok(report)
    }

    /// Plain-text summary of an emitted report, also written next to it.
    pub fn report(&self, task: Task, input: Option<PathBuf>) -> Result<String> {
        let path = match input {
            Some(p) => p,
            None => self.report_dir(task, self.cfg.scheme()?).join("report.json"),
        };
        self.require(&path)?;
        let r = MetricsReport::load(&path)?;
        self.check_upstream(&path, Provenance::from_meta(&r.provenance));
        let text = summarize(&r);
        let out = path.with_file_name("summary.txt");
        std::fs::write(&out, &text).map_err(|e| Error::io(&out, e))?;
        Ok(text)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".into(), |x| format!("{x:.2}"))
}

pub fn summarize(r: &MetricsReport) -> String {
    let mut s = format!("task={} scheme={} threshold={}\n", r.task.as_str(), r.scheme, r.threshold);
    for m in &r.models {
        for (k, v) in &m.mean {
            s.push_str(&format!("{} mean {k} {}\n", m.model, fmt_opt(*v)));
        }
        for f in &m.folds {
            s.push_str(&format!(
                "{} fold {} n={} accuracy {:.2}\n",
                m.model,
                f.fold,
                f.n_points,
                f.confusion.accuracy()
            ));
        }
        if let Some(rows) = &m.regional {
            for row in rows.iter().filter(|row| !row.flagged) {
                s.push_str(&format!(
                    "{} region {} class {} n={} accuracy {}\n",
                    m.model,
                    row.name,
                    r.class_names.get(row.class).map_or("?", String::as_str),
                    row.n_points,
                    fmt_opt(row.accuracy)
                ));
            }
        }
    }
    s
}

/// Provenance from the leading `#` lines of a text artifact.
fn comment_provenance(path: &Path) -> Result<Option<Provenance>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    Ok(Provenance::from_text(&header.join(" ")))
}

pub fn parse_window(s: &str) -> std::result::Result<PixelRegion, String> {
    let v: Vec<&str> = s.split(',').map(str::trim).collect();
    if v.len() != 4 {
        return Err("expected col,row,width,height".into());
    }
    let bad = |e: std::num::ParseIntError| e.to_string();
    Ok(PixelRegion {
        col: v[0].parse().map_err(bad)?,
        row: v[1].parse().map_err(bad)?,
        width: v[2].parse().map_err(bad)?,
        height: v[3].parse().map_err(bad)?,
    })
}
