//! Five-fold cross-validation designs: random and spatial holdout.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitScheme {
    Random,
    /// Clusters are connected components at linking distance `eps` meters.
    SpatialHoldout {
        eps: f64,
    },
}

impl SplitScheme {
    pub const SH_1KM: SplitScheme = SplitScheme::SpatialHoldout { eps: 1000.0 };
    pub const SH_10KM: SplitScheme = SplitScheme::SpatialHoldout { eps: 10_000.0 };

    pub fn eps(&self) -> f64 {
        match self {
            SplitScheme::Random => 0.0,
            SplitScheme::SpatialHoldout { eps } => *eps,
        }
    }

    /// Accepts `random` or `sh-<km>km` (e.g. `sh-1km`, `sh-2.5km`).
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "random" {
            return Ok(SplitScheme::Random);
        }
        let km = s
            .strip_prefix("sh-")
            .and_then(|r| r.strip_suffix("km"))
            .and_then(|r| r.parse::<f64>().ok())
            .filter(|k| *k > 0.0 && k.is_finite())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split scheme `{s}`")))?;
        Ok(SplitScheme::SpatialHoldout { eps: km * 1000.0 })
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitScheme::Random => f.write_str("random"),
            SplitScheme::SpatialHoldout { eps } => write!(f, "sh-{}km", eps / 1000.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub scheme: SplitScheme,
    pub seed: u64,
    /// Fold in `0..N_FOLDS` per observation index.
    pub fold_of: Vec<usize>,
    /// Cluster id per observation index (spatial schemes only).
    pub cluster_of: Option<Vec<usize>>,
}

impl FoldAssignment {
    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn fold_sizes(&self) -> [usize; N_FOLDS] {
        let mut s = [0; N_FOLDS];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }

    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    /// Writes `index,cluster,fold` with a leading comment recording the scheme.
    pub fn save(&self, path: &Path, provenance: &str) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut body = format!(
            "# scheme={} eps={} seed={} balance=points {provenance}\nindex,cluster,fold\n",
            self.scheme,
            self.scheme.eps(),
            self.seed
        );
        for (i, fold) in self.fold_of.iter().enumerate() {
            let cluster = self.cluster_of.as_ref().map(|c| c[i].to_string()).unwrap_or_default();
            body.push_str(&format!("{i},{cluster},{fold}\n"));
        }
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut scheme = None;
        let mut seed = 0u64;
        let mut fold_of = Vec::new();
        let mut clusters = Vec::new();
        let mut header_seen = false;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if let Some(comment) = line.strip_prefix('#') {
                for kv in comment.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("scheme", v)) => scheme = Some(SplitScheme::parse(v)?),
                        Some(("seed", v)) => seed = v.parse().map_err(|_| Error::Format(format!("bad seed `{v}`")))?,
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                if line.trim() != "index,cluster,fold" {
                    return Err(Error::Format("fold file header must be `index,cluster,fold`".into()));
                }
                header_seen = true;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Format(format!("bad fold row `{line}`")));
            }
            let idx: usize = parts[0].parse().map_err(|_| Error::Format(format!("bad index in `{line}`")))?;
            if idx != fold_of.len() {
                return Err(Error::Format(format!("fold rows out of order at `{line}`")));
            }
            let fold: usize = parts[2].parse().map_err(|_| Error::Format(format!("bad fold in `{line}`")))?;
            if fold >= N_FOLDS {
                return Err(Error::Format(format!("fold {fold} out of range")));
            }
            fold_of.push(fold);
            clusters.push(if parts[1].is_empty() {
                None
            } else {
                Some(
                    parts[1]
                        .parse::<usize>()
                        .map_err(|_| Error::Format(format!("bad cluster in `{line}`")))?,
                )
            });
        }
        let scheme = scheme.ok_or_else(|| Error::Format("fold file lacks a scheme comment".into()))?;
        let cluster_of = if clusters.iter().all(Option::is_some) && !clusters.is_empty() {
            Some(clusters.into_iter().map(Option::unwrap).collect())
        } else {
            None
        };
        Ok(FoldAssignment {
            scheme,
            seed,
            fold_of,
            cluster_of,
        })
    }
}

/// Seeded permutation; fold = rank mod 5, so fold sizes differ by at most one.
pub fn random_split(points: &[(f64, f64)], seed: u64) -> Result<FoldAssignment> {
    if points.len() < N_FOLDS {
        return Err(Error::InsufficientData(format!(
            "random split needs at least {N_FOLDS} points, got {}",
            points.len()
        )));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; points.len()];
    for (rank, &i) in order.iter().enumerate() {
        fold_of[i] = rank % N_FOLDS;
    }
    Ok(FoldAssignment {
        scheme: SplitScheme::Random,
        seed,
        fold_of,
        cluster_of: None,
    })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components of the graph linking points at distance ≤ `eps`
/// (density clustering with minimum cluster size 1). Ids are numbered by
/// first appearance in index order.
pub fn spatial_cluster(points: &[(f64, f64)], eps: f64) -> Result<Vec<usize>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let cell = |p: &(f64, f64)| ((p.0 / eps).floor() as i64, (p.1 / eps).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let eps2 = eps * eps;
    let mut uf = UnionFind::new(points.len());
    for (i, p) in points.iter().enumerate() {
        let (cx, cy) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = grid.get(&(cx + dx, cy + dy)) {
                    for &j in bucket {
                        if j > i {
                            let q = &points[j];
                            if (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) <= eps2 {
                                uf.union(i, j);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut ids = HashMap::new();
    Ok((0..points.len())
        .map(|i| {
            let root = uf.find(i);
            let next = ids.len();
            *ids.entry(root).or_insert(next)
        })
        .collect())
}

/// Clusters at `eps`, shuffles clusters by seed, then assigns them
/// largest-first to the fold with the fewest points so far.
pub fn spatial_split(points: &[(f64, f64)], eps: f64, seed: u64) -> Result<FoldAssignment> {
    let cluster_of = spatial_cluster(points, eps)?;
    let n_clusters = cluster_of.iter().max().map_or(0, |m| m + 1);
    if n_clusters < N_FOLDS {
        return Err(Error::InsufficientData(format!(
            "spatial split at eps={eps} m found {n_clusters} clusters, need at least {N_FOLDS}"
        )));
    }
    let mut sizes = vec![0usize; n_clusters];
    for &c in &cluster_of {
        sizes[c] += 1;
    }
    let mut order: Vec<usize> = (0..n_clusters).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // stable: shuffled order breaks ties between equal sizes
    order.sort_by(|a, b| sizes[*b].cmp(&sizes[*a]));
    let mut load = [0usize; N_FOLDS];
    let mut fold_of_cluster = vec![0; n_clusters];
    for c in order {
        let f = (0..N_FOLDS).min_by_key(|&f| (load[f], f)).unwrap_or(0);
        fold_of_cluster[c] = f;
        load[f] += sizes[c];
    }
    Ok(FoldAssignment {
        scheme: SplitScheme::SpatialHoldout { eps },
        seed,
        fold_of: cluster_of.iter().map(|&c| fold_of_cluster[c]).collect(),
        cluster_of: Some(cluster_of),
    })
}

/// Dispatches on the scheme.
pub fn make_split(points: &[(f64, f64)], scheme: SplitScheme, seed: u64) -> Result<FoldAssignment> {
    match scheme {
        SplitScheme::Random => random_split(points, seed),
        SplitScheme::SpatialHoldout { eps } => spatial_split(points, eps, seed),
    }
}
