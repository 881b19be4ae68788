//! Dataset and configuration files, synthetic data, reports and the
//! command-line interface.
//!
//! File formats are plain text:
//!
//! * features: one node per line, values separated by the manifest delimiter;
//! * labels: one integer class id per line;
//! * split (optional): `<node> <train|val|test>` per line;
//! * edges (optional): `src dst weight` per line;
//! * manifest: `key=value` lines naming the files above, relative to the
//!   manifest's directory.

mod cli;
mod report;
mod synthetic;

pub use cli::run_cli;
pub use report::{read_reports, ReportRecord, ReportWriter};
pub use synthetic::{
    generate_ba, generate_er, generate_planted, generate_sbm, PlantedConfig,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::rng::{stream_rng, Stream};
use crate::numerics::{Matrix, SparseGraph};
use crate::trainer::{Dataset, ExperimentConfig, FeatureKind};

/// Environment variable naming the root for relative dataset paths.
pub const DATA_DIR_ENV: &str = "LGL_DATA_DIR";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub split: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub feature_kind: FeatureKind,
    pub delimiter: char,
    /// Standardize continuous features per column at load time.
    pub standardize: bool,
    /// Used when no split file is given.
    pub train_count: usize,
    pub val_count: usize,
    pub split_seed: u64,
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// `key=value` lines, skipping blanks and `#` comments.
fn parse_kv(path: &Path, text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, i + 1, "expected key=value"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Resolves a relative path against `LGL_DATA_DIR` when it does not exist
/// as given.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Ok(root) = std::env::var(DATA_DIR_ENV) {
            let candidate = Path::new(&root).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let path = resolve_data_path(path);
        let text = read_text(&path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&path, &text, base)
    }

    fn parse(path: &Path, text: &str, base: &Path) -> Result<Self> {
        let kv = parse_kv(path, text)?;
        let get = |k: &str| {
            kv.get(k)
                .cloned()
                .ok_or_else(|| Error::Dataset(format!("{}: missing `{k}`", path.display())))
        };
        let num = |k: &str, default: usize| -> Result<usize> {
            kv.get(k).map_or(Ok(default), |v| {
                v.parse()
                    .map_err(|_| Error::Dataset(format!("{}: bad `{k}` value `{v}`", path.display())))
            })
        };
        let delimiter = match kv.get("delimiter").map(String::as_str) {
            None | Some(",") => ',',
            Some("tab") | Some("\t") => '\t',
            Some("space") | Some(" ") | Some("") => ' ',
            Some(d) if d.chars().count() == 1 => d.chars().next().unwrap(),
            Some(d) => return Err(Error::Dataset(format!("bad delimiter `{d}`"))),
        };
        let feature_kind = FeatureKind::parse(kv.get("feature_kind").map_or("continuous", |s| s))?;
        Ok(DatasetManifest {
            name: kv.get("name").cloned().unwrap_or_default(),
            features: base.join(get("features")?),
            labels: base.join(get("labels")?),
            split: kv.get("split").map(|s| base.join(s)),
            edges: kv.get("edges").map(|s| base.join(s)),
            feature_kind,
            delimiter,
            standardize: match kv.get("standardize").map(String::as_str) {
                None | Some("true") => true,
                Some("false") => false,
                Some(v) => return Err(Error::Dataset(format!("bad `standardize` value `{v}`"))),
            },
            train_count: num("train_count", 20)?,
            val_count: num("val_count", 20)?,
            split_seed: num("split_seed", 0)? as u64,
        })
    }
}

fn parse_features(path: &Path, text: &str, delimiter: char) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if delimiter == ' ' {
            line.split_whitespace().collect()
        } else {
            line.split(delimiter).collect()
        };
        if *cols.get_or_insert(fields.len()) != fields.len() {
            return Err(parse_err(path, i + 1, format!("expected {} values", cols.unwrap())));
        }
        for f in fields {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("`{f}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, i + 1, "non-finite feature value"));
            }
            data.push(v);
        }
        rows += 1;
    }
    Matrix::new(rows, cols.unwrap_or(0), data)
}

fn parse_labels(path: &Path, text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("label `{}` is not a class id", l.trim())))
        })
        .collect()
}

type Splits = (Vec<usize>, Vec<usize>, Vec<usize>);

fn parse_split(path: &Path, text: &str) -> Result<Splits> {
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        let (Some(node), Some(set)) = (it.next(), it.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(parse_err(path, i + 1, "expected `<node> <train|val|test>`"));
        };
        let node: usize = node
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad node index `{node}`")))?;
        match set {
            "train" => train.push(node),
            "val" => val.push(node),
            "test" => test.push(node),
            other => return Err(parse_err(path, i + 1, format!("unknown split `{other}`"))),
        }
    }
    Ok((train, val, test))
}

fn parse_edges(path: &Path, text: &str, n: usize) -> Result<SparseGraph> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 3 && fields.len() != 2 {
            return Err(parse_err(path, i + 1, "expected `src dst weight`"));
        }
        let idx = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad node index `{s}`")))
        };
        let w = match fields.get(2) {
            Some(s) => s
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad weight `{s}`")))?,
            None => 1.0,
        };
        entries.push((idx(fields[0])?, idx(fields[1])?, w));
    }
    SparseGraph::from_triplets(n, entries).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))
}

/// Per-column zero mean and unit (population) variance; constant columns
/// are only centred.
pub fn standardize(x: &mut Matrix) {
    let (n, f) = x.shape();
    if n == 0 {
        return;
    }
    for j in 0..f {
        let mean = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            x.set(i, j, (x.get(i, j) - mean) / sd);
        }
    }
}

/// Class-interleaved ordering: nodes of each class are shuffled, then
/// classes are visited round-robin. Prefixes of the result are as
/// class-balanced as the class sizes allow.
pub fn stratified_order(y: &[usize], seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, Stream::Split);
    let classes = y.iter().copied().max().map_or(0, |c| c + 1);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in y.iter().enumerate() {
        buckets[c].push(i);
    }
    for b in &mut buckets {
        b.shuffle(&mut rng);
        b.reverse();
    }
    let mut order = Vec::with_capacity(y.len());
    while order.len() < y.len() {
        for b in &mut buckets {
            if let Some(i) = b.pop() {
                order.push(i);
            }
        }
    }
    order
}

/// Stratified split: `train` nodes, then `val`, the rest for testing.
pub fn stratified_split(y: &[usize], train: usize, val: usize, seed: u64) -> Result<Splits> {
    if train + val >= y.len() {
        return Err(Error::Dataset(format!(
            "{train} train + {val} validation nodes leave no test nodes out of {}",
            y.len()
        )));
    }
    let order = stratified_order(y, seed);
    let mut tr = order[..train].to_vec();
    let mut va = order[train..train + val].to_vec();
    let mut te = order[train + val..].to_vec();
    tr.sort_unstable();
    va.sort_unstable();
    te.sort_unstable();
    Ok((tr, va, te))
}

pub fn load_dataset(manifest: &DatasetManifest) -> Result<Dataset> {
    let mut x = parse_features(&manifest.features, &read_text(&manifest.features)?, manifest.delimiter)?;
    let y = parse_labels(&manifest.labels, &read_text(&manifest.labels)?)?;
    if y.len() != x.rows() {
        return Err(Error::Dataset(format!(
            "{} has {} rows but {} has {} labels",
            manifest.features.display(),
            x.rows(),
            manifest.labels.display(),
            y.len()
        )));
    }
    if manifest.feature_kind == FeatureKind::Continuous && manifest.standardize {
        standardize(&mut x);
    }
    let (train, val, test) = match &manifest.split {
        Some(p) => parse_split(p, &read_text(p)?)?,
        None => stratified_split(&y, manifest.train_count, manifest.val_count, manifest.split_seed)?,
    };
    let graph = match &manifest.edges {
        Some(p) => Some(parse_edges(p, &read_text(p)?, x.rows())?),
        None => None,
    };
    let num_classes = y.iter().copied().max().map_or(0, |c| c + 1);
    let ds = Dataset {
        name: manifest.name.clone(),
        x,
        y,
        num_classes,
        train,
        val,
        test,
        graph,
        feature_kind: manifest.feature_kind,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes `<name>.{features,labels,split,edges,manifest}` into `dir` and
/// returns the manifest path. Features are stored as loaded, so the
/// manifest disables standardization.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = if dataset.name.is_empty() { "dataset" } else { &dataset.name };
    let mut features = String::new();
    for i in 0..dataset.n() {
        let row: Vec<String> = dataset.x.row(i).iter().map(|v| format!("{v:?}")).collect();
        features.push_str(&row.join(","));
        features.push('\n');
    }
    let labels: String = dataset.y.iter().map(|c| format!("{c}\n")).collect();
    let mut split = String::new();
    for (set, idx) in [("train", &dataset.train), ("val", &dataset.val), ("test", &dataset.test)] {
        for i in idx.iter() {
            let _ = writeln!(split, "{i} {set}");
        }
    }
    write_text(&dir.join(format!("{name}.features")), &features)?;
    write_text(&dir.join(format!("{name}.labels")), &labels)?;
    write_text(&dir.join(format!("{name}.split")), &split)?;
    let mut manifest = format!(
        "name={name}\nfeatures={name}.features\nlabels={name}.labels\nsplit={name}.split\nfeature_kind={}\ndelimiter=,\nstandardize=false\n",
        dataset.feature_kind.name()
    );
    if let Some(g) = &dataset.graph {
        write_text(&dir.join(format!("{name}.edges")), &format_edges(g))?;
        let _ = writeln!(manifest, "edges={name}.edges");
    }
    let path = dir.join(format!("{name}.manifest"));
    write_text(&path, &manifest)?;
    Ok(path)
}

/// `src dst weight` lines for every stored entry.
pub fn format_edges(g: &SparseGraph) -> String {
    g.iter().map(|(r, c, w)| format!("{r} {c} {w:?}\n")).collect()
}

pub fn read_edges(path: &Path, n: Option<usize>) -> Result<SparseGraph> {
    let text = read_text(path)?;
    let n = match n {
        Some(n) => n,
        None => text
            .lines()
            .flat_map(|l| l.split_whitespace().take(2))
            .filter_map(|s| s.parse::<usize>().ok())
            .max()
            .map_or(0, |m| m + 1),
    };
    parse_edges(path, &text, n)
}

pub fn write_edges(path: &Path, g: &SparseGraph) -> Result<()> {
    write_text(path, &format_edges(g))
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = read_text(path)?;
    ExperimentConfig::parse(&text).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn write_config(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    write_text(path, &cfg.to_string())
}
