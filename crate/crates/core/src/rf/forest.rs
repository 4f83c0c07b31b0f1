use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rf::tree::{Columns, Tree, TreeParams};

/// Random forest settings. Defaults are the configuration reported for the
/// soil-mapping baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RFConfig {
    pub n_trees: usize,
    pub min_samples_split: usize,
    pub max_depth: usize,
    /// Meters; covariates are averaged over this disk.
    pub buffer_d: f64,
    pub include_xy: bool,
    pub seed: u64,
}

impl Default for RFConfig {
    fn default() -> Self {
        RFConfig {
            n_trees: 253,
            min_samples_split: 5,
            max_depth: 16,
            buffer_d: 50.0,
            include_xy: true,
            seed: 0,
        }
    }
}

impl RFConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be >= 1".into()));
        }
        if !(self.buffer_d >= 0.0) {
            return Err(Error::InvalidArgument("buffer_d must be >= 0".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidArgument("min_samples_split must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Out-of-bag accuracy in percent over samples left out by ≥ 1 tree.
    pub oob_accuracy: Option<f64>,
    /// Free-form metadata persisted with the forest (config echo, provenance).
    pub meta: String,
}

/// `floor(sqrt(F))`, at least 1.
pub fn sqrt_features(n_features: usize) -> usize {
    ((n_features as f64).sqrt().floor() as usize).max(1)
}

/// Bagged CART ensemble. Tree `t` draws from ChaCha8 stream `t` of the seed,
/// so the result does not depend on the thread schedule.
pub fn train_rf(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, config: &RFConfig) -> Result<Forest> {
    config.validate()?;
    if rows.is_empty() {
        return Err(Error::InsufficientData("random forest needs training rows".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: rows.len(),
            actual: labels.len(),
        });
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Label(format!("label {bad} out of range for {n_classes} classes")));
    }
    let n_features = rows[0].len();
    if rows.iter().any(|r| r.len() != n_features) {
        return Err(Error::Format("ragged feature rows".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("feature row {r:?}")));
    }
    let cols: Vec<Vec<f64>> = (0..n_features).map(|f| rows.iter().map(|r| r[f]).collect()).collect();
    let columns = Columns { cols: &cols };
    let params = TreeParams {
        max_depth: config.max_depth,
        min_samples_split: config.min_samples_split,
        max_features: sqrt_features(n_features),
    };
    let n = rows.len();
    let grown: Vec<(Tree, Vec<bool>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let mut in_bag = vec![false; n];
            let samples: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    in_bag[i] = true;
                    i
                })
                .collect();
            (Tree::fit(&columns, labels, n_classes, samples, params, &mut rng), in_bag)
        })
        .collect();
    let mut oob_sum = vec![0.0f64; n * n_classes];
    let mut oob_hits = vec![0usize; n];
    for (tree, in_bag) in &grown {
        for i in 0..n {
            if !in_bag[i] {
                tree.accumulate_proba(&rows[i], &mut oob_sum[i * n_classes..(i + 1) * n_classes]);
                oob_hits[i] += 1;
            }
        }
    }
    let (mut correct, mut scored) = (0usize, 0usize);
    for i in 0..n {
        if oob_hits[i] > 0 {
            scored += 1;
            let p = &oob_sum[i * n_classes..(i + 1) * n_classes];
            correct += usize::from(crate::evaluation::metrics::argmax(p) == labels[i]);
        }
    }
    Ok(Forest {
        n_classes,
        n_features,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        oob_accuracy: (scored > 0).then(|| 100.0 * correct as f64 / scored as f64),
        meta: String::new(),
    })
}

impl Forest {
    /// Mean of per-tree leaf class frequencies.
    pub fn predict_proba_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(Error::DimMismatch {
                expected: self.n_features,
                actual: row.len(),
            });
        }
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            t.accumulate_proba(row, &mut p);
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        Ok(p)
    }

    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.par_iter().map(|r| self.predict_proba_row(r)).collect()
    }

    const MAGIC: &'static [u8; 4] = b"SMRF";
    const VERSION: u32 = 1;

    /// Versioned little-endian binary of flattened node arrays.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(Self::MAGIC);
        put_u32(&mut b, Self::VERSION);
        put_u32(&mut b, self.n_classes as u32);
        put_u32(&mut b, self.n_features as u32);
        put_u32(&mut b, self.trees.len() as u32);
        b.push(u8::from(self.oob_accuracy.is_some()));
        b.extend_from_slice(&self.oob_accuracy.unwrap_or(0.0).to_le_bytes());
        put_u32(&mut b, self.meta.len() as u32);
        b.extend_from_slice(self.meta.as_bytes());
        for t in &self.trees {
            put_u32(&mut b, t.n_nodes() as u32);
            for i in 0..t.n_nodes() {
                b.extend_from_slice(&t.feature[i].to_le_bytes());
                b.extend_from_slice(&t.threshold[i].to_le_bytes());
                put_u32(&mut b, t.left[i]);
                put_u32(&mut b, t.right[i]);
            }
            for &c in &t.counts {
                put_u32(&mut b, c);
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { b: bytes, pos: 0 };
        if r.take(4)? != Self::MAGIC {
            return Err(Error::Format("not a forest file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported forest version {version}")));
        }
        let n_classes = r.u32()? as usize;
        let n_features = r.u32()? as usize;
        let n_trees = r.u32()? as usize;
        let has_oob = r.take(1)?[0] != 0;
        let oob = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let meta_len = r.u32()? as usize;
        let meta = String::from_utf8(r.take(meta_len)?.to_vec()).map_err(|_| Error::Format("forest metadata is not UTF-8".into()))?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let nodes = r.u32()? as usize;
            let mut t = Tree {
                n_classes,
                feature: Vec::with_capacity(nodes),
                threshold: Vec::with_capacity(nodes),
                left: Vec::with_capacity(nodes),
                right: Vec::with_capacity(nodes),
                counts: Vec::with_capacity(nodes * n_classes),
            };
            for _ in 0..nodes {
                t.feature.push(i32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")));
                t.threshold.push(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")));
                t.left.push(r.u32()?);
                t.right.push(r.u32()?);
            }
            for _ in 0..nodes * n_classes {
                t.counts.push(r.u32()?);
            }
            for i in 0..nodes {
                let bad_feature = t.feature[i] >= n_features as i32;
                let bad_child =
                    t.feature[i] >= 0 && (t.left[i] as usize >= nodes || t.right[i] as usize >= nodes || t.left[i] as usize <= i);
                if bad_feature || bad_child {
                    return Err(Error::Format(format!("corrupt forest node {i}")));
                }
            }
            trees.push(t);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after forest".into()));
        }
        Ok(Forest {
            n_classes,
            n_features,
            trees,
            oob_accuracy: has_oob.then_some(oob),
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.b.len() {
            return Err(Error::Format("truncated forest file".into()));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
