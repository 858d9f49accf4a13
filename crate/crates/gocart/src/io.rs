//! File formats: dataset CSV, tree and model JSON, layout JSON, metrics and
//! trace CSV. All writes go through a temp file plus rename so readers never
//! observe a partial file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dpt::{DyadicTree, Hyperrectangle, TreeNode};
use crate::error::{Error, Result};
use crate::evalmetrics::MetricsRow;
use crate::glasso::{EdgeSet, GlassoConfig, PrecisionEstimate};
use crate::greedy::SplitTrace;
use crate::numerics::{cholesky_logdet, spd_inverse, SymMatrix};
use crate::risk::{FittedTree, LeafModel, RiskReport, RiskRow};
use crate::simdata::RegionLayout;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `bytes` atomically: temp file in the destination directory, then
/// rename over the target.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let ctx = || format!("writing {}", path.display());
    fs::create_dir_all(dir).map_err(Error::io(ctx()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(Error::io(ctx()))?;
    std::io::Write::write_all(&mut tmp, bytes).map_err(Error::io(ctx()))?;
    tmp.persist(path)
        .map_err(|e| Error::io(ctx())(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(Error::json(format!("encoding {}", path.display())))?;
    atomic_write(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(Error::json(format!("decoding {}", path.display())))
}

// ---------------------------------------------------------------------------
// Dataset CSV: header x1..xd,y1..yp, one observation per row, 17 significant
// digits so values round-trip bit-for-bit.

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let d = data.covariate_dim();
    let p = data.response_dim();
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (1..=d)
        .map(|k| format!("x{k}"))
        .chain((1..=p).map(|k| format!("y{k}")))
        .collect();
    let ctx = || format!("writing {}", path.display());
    wtr.write_record(&header).map_err(Error::csv(ctx()))?;
    for i in 0..data.len() {
        let row: Vec<String> = data
            .x_row(i)
            .iter()
            .chain(data.y_row(i))
            .map(|&v| fmt(v))
            .collect();
        wtr.write_record(&row).map_err(Error::csv(ctx()))?;
    }
    let bytes = wtr.into_inner().expect("vec writer cannot fail");
    atomic_write(path, &bytes)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let ctx = || format!("reading {}", path.display());
    let mut rdr = csv::Reader::from_path(path).map_err(Error::csv(ctx()))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(Error::csv(ctx()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let d = header.iter().take_while(|h| h.starts_with('x')).count();
    let p = header.len() - d;
    let mut bad = Vec::new();
    for (k, h) in header.iter().enumerate() {
        let want = if k < d {
            format!("x{}", k + 1)
        } else {
            format!("y{}", k - d + 1)
        };
        if *h != want {
            bad.push(format!("column {} is `{h}`, expected `{want}`", k + 1));
        }
    }
    if d == 0 || p == 0 || !bad.is_empty() {
        return Err(Error::Data(format!(
            "{}: bad dataset header [{}]",
            path.display(),
            bad.join("; ")
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(Error::csv(ctx()))?;
        if rec.len() != d + p {
            return Err(Error::Data(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                i + 2,
                rec.len(),
                d + p
            )));
        }
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {} column {}: `{field}` is not a number",
                    path.display(),
                    i + 2,
                    k + 1
                ))
            })?;
            if k < d {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    Dataset::new(d, p, xs, ys)
}

// ---------------------------------------------------------------------------
// Tree JSON + per-leaf model files.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RectDoc {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl From<&Hyperrectangle> for RectDoc {
    fn from(r: &Hyperrectangle) -> Self {
        RectDoc {
            lower: r.lower.clone(),
            upper: r.upper.clone(),
        }
    }
}

impl RectDoc {
    fn to_rect(&self) -> Hyperrectangle {
        Hyperrectangle {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDoc {
    pub rect: RectDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<NodeDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_ref: Option<String>,
}

/// Affine map taking each raw covariate range onto [0,1]; recorded so that
/// predictions on raw coordinates invert it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleDoc {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl RescaleDoc {
    /// Per-column min/max of a covariate block; constant columns get a unit
    /// span so the map stays invertible.
    pub fn fit(data: &Dataset) -> Self {
        let d = data.covariate_dim();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for i in 0..data.len() {
            for (k, &v) in data.x_row(i).iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        for k in 0..d {
            if !(max[k] > min[k]) {
                max[k] = min[k] + 1.0;
            }
        }
        RescaleDoc { min, max }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    }

    pub fn invert(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| lo + v * (hi - lo))
            .collect()
    }

    /// Rescales every covariate of a dataset into [0,1]^d.
    pub fn transform(&self, data: &Dataset) -> Dataset {
        let d = data.covariate_dim();
        let p = data.response_dim();
        let mut xs = Vec::with_capacity(data.len() * d);
        let mut ys = Vec::with_capacity(data.len() * p);
        for i in 0..data.len() {
            xs.extend(self.apply(data.x_row(i)));
            ys.extend_from_slice(data.y_row(i));
        }
        Dataset::new(d, p, xs, ys).expect("same shape as input")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeDoc {
    pub dims: usize,
    #[serde(rename = "K")]
    pub k_max: u32,
    pub root: NodeDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescale: Option<RescaleDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDoc {
    pub mu: Vec<f64>,
    /// Dense precision matrix, row-major rows.
    pub omega: Vec<Vec<f64>>,
    pub lambda: f64,
    pub edges: Vec<(usize, usize)>,
    pub n_train: usize,
}

fn node_doc(node: &TreeNode, leaf_idx: &mut usize) -> NodeDoc {
    match node {
        TreeNode::Leaf { rect } => {
            let id = *leaf_idx;
            *leaf_idx += 1;
            NodeDoc {
                rect: rect.into(),
                leaf: Some(true),
                split_dim: None,
                children: None,
                model_ref: Some(model_file_name(id)),
            }
        }
        TreeNode::Split {
            rect,
            dim,
            children,
        } => NodeDoc {
            rect: rect.into(),
            leaf: None,
            split_dim: Some(*dim),
            children: Some(vec![
                node_doc(&children[0], leaf_idx),
                node_doc(&children[1], leaf_idx),
            ]),
            model_ref: None,
        },
    }
}

fn doc_node(doc: &NodeDoc) -> Result<TreeNode> {
    match (&doc.children, doc.split_dim) {
        (Some(children), Some(dim)) if children.len() == 2 => Ok(TreeNode::Split {
            rect: doc.rect.to_rect(),
            dim,
            children: Box::new([doc_node(&children[0])?, doc_node(&children[1])?]),
        }),
        (None, None) => Ok(TreeNode::Leaf {
            rect: doc.rect.to_rect(),
        }),
        _ => Err(Error::Data(
            "tree node must have either both split_dim and two children, or neither".into(),
        )),
    }
}

pub fn model_file_name(leaf: usize) -> String {
    format!("leaf_{leaf:03}.json")
}

fn model_doc(model: &LeafModel) -> ModelDoc {
    let p = model.prec.omega.order();
    let omega = (0..p)
        .map(|i| (0..p).map(|j| model.prec.omega.get(i, j)).collect())
        .collect();
    ModelDoc {
        mu: model.mu.clone(),
        omega,
        lambda: model.prec.lambda,
        edges: model.prec.edges.iter().copied().collect(),
        n_train: model.n_train,
    }
}

fn doc_model(doc: &ModelDoc) -> Result<LeafModel> {
    let p = doc.mu.len();
    let rows: Vec<f64> = doc.omega.iter().flatten().copied().collect();
    if doc.omega.len() != p || rows.len() != p * p {
        return Err(Error::Data(format!(
            "model omega must be {p}x{p} to match mu"
        )));
    }
    let omega = SymMatrix::from_rows(p, &rows);
    let (f, log_det) = cholesky_logdet(&omega)?;
    let sigma = spd_inverse(&f);
    Ok(LeafModel {
        mu: doc.mu.clone(),
        prec: PrecisionEstimate {
            omega,
            sigma,
            lambda: doc.lambda,
            edges: doc.edges.iter().copied().collect::<EdgeSet>(),
            log_det,
        },
        n_train: doc.n_train,
    })
}

/// Writes tree.json plus one leaf_NNN.json per leaf into `dir`.
pub fn write_model(dir: &Path, fitted: &FittedTree, rescale: Option<&RescaleDoc>) -> Result<()> {
    let mut leaf_idx = 0;
    let doc = TreeDoc {
        dims: fitted.tree.dims,
        k_max: fitted.tree.k_max,
        root: node_doc(&fitted.tree.root, &mut leaf_idx),
        rescale: rescale.cloned(),
    };
    write_json(&dir.join("tree.json"), &doc)?;
    for (i, model) in fitted.models.iter().enumerate() {
        write_json(&dir.join(model_file_name(i)), &model_doc(model))?;
    }
    Ok(())
}

/// Reads a model directory back into a fitted tree and its recorded rescale
/// transform, if any.
pub fn read_model(dir: &Path) -> Result<(FittedTree, Option<RescaleDoc>)> {
    let doc: TreeDoc = read_json(&dir.join("tree.json"))?;
    let root = doc_node(&doc.root)?;
    let tree = DyadicTree {
        dims: doc.dims,
        k_max: doc.k_max,
        root,
    };
    let mut models = Vec::new();
    // Leaf order matches the writer's depth-first left-to-right numbering.
    let mut refs = Vec::new();
    collect_refs(&doc.root, &mut refs)?;
    for r in refs {
        let mdoc: ModelDoc = read_json(&dir.join(&r))?;
        models.push(doc_model(&mdoc)?);
    }
    Ok((FittedTree::new(tree, models), doc.rescale))
}

fn collect_refs(node: &NodeDoc, out: &mut Vec<String>) -> Result<()> {
    match &node.children {
        Some(children) => {
            for c in children {
                collect_refs(c, out)?;
            }
            Ok(())
        }
        None => {
            out.push(
                node.model_ref
                    .clone()
                    .ok_or_else(|| Error::Data("leaf node is missing model_ref".into()))?,
            );
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Layout, metrics, trace, risk report.

pub fn write_layout(path: &Path, layout: &RegionLayout) -> Result<()> {
    write_json(path, layout)
}

pub fn read_layout(path: &Path) -> Result<RegionLayout> {
    read_json(path)
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let ctx = || format!("writing {}", path.display());
    for row in rows {
        wtr.serialize(row).map_err(Error::csv(ctx()))?;
    }
    if rows.is_empty() {
        wtr.write_record(["run", "region", "precision", "recall", "f1"])
            .map_err(Error::csv(ctx()))?;
    }
    atomic_write(path, &wtr.into_inner().expect("vec writer cannot fail"))
}

pub fn write_trace(path: &Path, trace: &[SplitTrace]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let ctx = || format!("writing {}", path.display());
    wtr.write_record(["node", "dim", "gain", "accepted", "lower", "upper"])
        .map_err(Error::csv(ctx()))?;
    for t in trace {
        let join = |v: &[f64]| v.iter().map(|&x| fmt(x)).collect::<Vec<_>>().join(";");
        wtr.write_record([
            t.node.to_string(),
            t.dim.to_string(),
            fmt(t.gain),
            t.accepted.to_string(),
            join(&t.lower),
            join(&t.upper),
        ])
        .map_err(Error::csv(ctx()))?;
    }
    atomic_write(path, &wtr.into_inner().expect("vec writer cannot fail"))
}

pub fn write_risk_report(path: &Path, report: &RiskReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let ctx = || format!("writing {}", path.display());
    for row in &report.rows {
        wtr.serialize(row).map_err(Error::csv(ctx()))?;
    }
    if report.rows.is_empty() {
        wtr.write_record(["id", "leaves", "empirical", "heldout", "penalty", "total"])
            .map_err(Error::csv(ctx()))?;
    }
    atomic_write(path, &wtr.into_inner().expect("vec writer cannot fail"))
}

pub fn read_risk_report(path: &Path) -> Result<RiskReport> {
    let ctx = || format!("reading {}", path.display());
    let mut rdr = csv::Reader::from_path(path).map_err(Error::csv(ctx()))?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<RiskRow>() {
        rows.push(rec.map_err(Error::csv(ctx()))?);
    }
    Ok(RiskReport { rows })
}

// ---------------------------------------------------------------------------
// Flat key = value config files.

#[derive(Debug, Clone, Default)]
pub struct ConfigMap(pub std::collections::BTreeMap<String, String>);

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    map.insert(k.trim().to_owned(), v.trim().to_owned());
                }
                None => {
                    return Err(Error::Data(format!(
                        "config line {}: expected key = value, got `{line}`",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(ConfigMap(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(Error::io(format!("reading {}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                Error::Data(format!("config key `{key}`: cannot parse `{raw}`"))
            }),
        }
    }
}

/// Applies recognized config keys over a default glasso configuration.
pub fn glasso_config_from(map: &ConfigMap) -> Result<GlassoConfig> {
    let mut cfg = GlassoConfig::default();
    if let Some(v) = map.get_parsed("glasso_tol")? {
        cfg.tol = v;
    }
    if let Some(v) = map.get_parsed("glasso_max_outer")? {
        cfg.max_outer = v;
    }
    if let Some(v) = map.get_parsed("glasso_zero_thresh")? {
        cfg.zero_thresh = v;
    }
    Ok(cfg)
}

pub fn output_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
