//! Batch front door: data generation, fitting, evaluation, and export.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dpt::DyadicTree;
use crate::error::{Error, Result};
use crate::evalmetrics::{edge_metrics, MetricsRow};
use crate::exact;
use crate::glasso::GlassoConfig;
use crate::greedy::{grow, GreedyConfig};
use crate::io::{
    self, atomic_write, read_dataset, read_model, write_dataset, write_layout, write_metrics,
    write_model, write_risk_report, write_trace, ConfigMap, RescaleDoc,
};
use crate::risk::{fit_leaf, FitConfig, FittedTree, LeafModel, RiskReport, RiskRow};
use crate::simdata::{self, GraphTruth, RegionLayout};
use crate::baselines;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser)]
#[command(name = "gocart", version, about = "Graph-valued regression by dyadic partitioning")]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic datasets plus their ground truth.
    Generate(GenerateArgs),
    /// Fit a model to a generated or imported dataset.
    Fit(FitArgs),
    /// Score a fitted model against the ground truth.
    Eval(EvalArgs),
    /// Export a fitted model for inspection or plotting.
    Export(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Regions22,
    Chain,
    Grid,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sample size (regions22) or chain length.
    #[arg(long)]
    n: Option<usize>,
    /// Covariate dimension (regions22).
    #[arg(long)]
    d: Option<usize>,
    /// Response dimension.
    #[arg(long)]
    p: Option<usize>,
    /// Grid side length.
    #[arg(long)]
    side: Option<usize>,
    /// Optional layout file overriding the canonical 22-region geometry.
    #[arg(long)]
    layout: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitMethod {
    Greedy,
    ExactHeldout,
    ExactPenalized,
    GlassoPooled,
    Parametric,
    Kernel,
}

#[derive(Clone, Copy, ValueEnum)]
enum RescaleKind {
    Minmax,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    method: FitMethod,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    heldout: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k_max: Option<u32>,
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Penalty multiplier for exact-penalized.
    #[arg(long)]
    gamma: Option<f64>,
    /// Query point for the kernel method, comma-separated.
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Glasso penalty for kernel / pooled methods.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_x: Option<f64>,
    #[arg(long)]
    lambda_y: Option<f64>,
    /// Affinely map raw covariates into [0,1]^d before fitting.
    #[arg(long, value_enum)]
    rescale: Option<RescaleKind>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Run identifier copied into each metrics row.
    #[arg(long, default_value_t = 0)]
    run: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Dot,
    Json,
    Plotdata,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    format: ExportFormat,
    #[arg(long)]
    out: PathBuf,
}

/// Ground-truth file written next to generated datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthDoc {
    Regions { layout: RegionLayout },
    Chain { graphs: Vec<GraphTruth> },
    Grid { graphs: Vec<Vec<GraphTruth>> },
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Version/help requests are successes, not usage errors.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => EXIT_USAGE,
        Error::NotPositiveDefinite { .. }
        | Error::NoConvergence { .. }
        | Error::SolverAtLambda { .. }
        | Error::DegenerateWeights => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Export(a) => cmd_export(a),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigMap> {
    match path {
        Some(p) => ConfigMap::load(p),
        None => Ok(ConfigMap::default()),
    }
}

/// Seed precedence: CLI flag, then GOCART_SEED, then config file, then 0.
fn resolve_seed(flag: Option<u64>, cfg: &ConfigMap) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(raw) = std::env::var("GOCART_SEED") {
        return raw
            .parse()
            .map_err(|_| Error::Data(format!("GOCART_SEED: cannot parse `{raw}`")));
    }
    Ok(cfg.get_parsed("seed")?.unwrap_or(0))
}

fn fit_config_from(map: &ConfigMap) -> Result<FitConfig> {
    let mut fit = FitConfig {
        glasso: io::glasso_config_from(map)?,
        ..FitConfig::default()
    };
    if let Some(v) = map.get_parsed("num_lambdas")? {
        fit.num_lambdas = v;
    }
    if let Some(v) = map.get_parsed("lambda_ratio")? {
        fit.lambda_ratio = v;
    }
    if let Some(v) = map.get_parsed("refit")? {
        fit.refit = v;
    }
    Ok(fit)
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let seed = resolve_seed(a.seed, &cfg)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let p = a.p.unwrap_or(20);
    let (train, heldout, truth) = match a.kind {
        GenKind::Regions22 => {
            let n = a.n.unwrap_or(10_000);
            let d = a.d.unwrap_or(10);
            let layout = match &a.layout {
                Some(path) => io::read_layout(path)?,
                None => simdata::canonical_layout(p, 10, 4, &mut rng)?,
            };
            let (train, heldout) = simdata::gen_from_layout(&layout, n, d, &mut rng)?;
            write_layout(&a.out.join("layout.json"), &layout)?;
            (train, heldout, TruthDoc::Regions { layout })
        }
        GenKind::Chain => {
            let n = a.n.unwrap_or(1000);
            let (train, heldout, graphs) = simdata::gen_chain(n, p, &mut rng)?;
            (train, heldout, TruthDoc::Chain { graphs })
        }
        GenKind::Grid => {
            let side = a.side.unwrap_or(100);
            let (train, heldout, graphs) = simdata::gen_grid(side, p, &mut rng)?;
            (train, heldout, TruthDoc::Grid { graphs })
        }
    };
    write_dataset(&a.out.join("train.csv"), &train)?;
    write_dataset(&a.out.join("heldout.csv"), &heldout)?;
    let text = serde_json::to_string_pretty(&truth).map_err(Error::json("encoding truth.json"))?;
    atomic_write(&a.out.join("truth.json"), text.as_bytes())?;
    Ok(())
}

fn root_only_model(d: usize, model: LeafModel) -> FittedTree {
    FittedTree::new(DyadicTree::root_only(d, 0), vec![model])
}

fn mean_of(data: &Dataset) -> Vec<f64> {
    let p = data.response_dim();
    let mut mu = vec![0.0; p];
    for i in 0..data.len() {
        for (m, v) in mu.iter_mut().zip(data.y_row(i)) {
            *m += v;
        }
    }
    for m in mu.iter_mut() {
        *m /= data.len() as f64;
    }
    mu
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    if matches!(a.method, FitMethod::Kernel) && (a.x0.is_none() || a.bandwidth.is_none()) {
        return Err(Error::Usage(
            "kernel method requires --x0 and --bandwidth".into(),
        ));
    }
    let cfg = load_config(&a.config)?;
    let seed = resolve_seed(a.seed, &cfg)?;
    let fit_cfg = fit_config_from(&cfg)?;
    let glasso_cfg: GlassoConfig = fit_cfg.glasso;

    let raw_train = read_dataset(&a.train)?;
    let raw_heldout = a.heldout.as_ref().map(|p| read_dataset(p)).transpose()?;

    let rescale = a.rescale.map(|RescaleKind::Minmax| RescaleDoc::fit(&raw_train));
    let train = match &rescale {
        Some(rs) => rs.transform(&raw_train),
        None => raw_train,
    };
    let heldout = match (&rescale, raw_heldout) {
        (Some(rs), Some(h)) => Some(rs.transform(&h)),
        (None, h) => h,
        (_, None) => None,
    };
    let need_heldout = || {
        heldout
            .clone()
            .ok_or_else(|| Error::Data("this method requires --heldout".into()))
    };
    let d = train.covariate_dim();
    let p = train.response_dim();

    let k_max = match a.k_max {
        Some(v) => v,
        None => cfg.get_parsed("k_max")?.unwrap_or(10),
    };
    let min_leaf = match a.min_leaf {
        Some(v) => v,
        None => cfg.get_parsed("min_leaf")?.unwrap_or(10),
    };

    let mut report: Option<RiskReport> = None;
    let mut trace = None;
    let fitted = match a.method {
        FitMethod::Greedy => {
            let heldout = need_heldout()?;
            let gc = GreedyConfig {
                k_max,
                min_leaf,
                fit: fit_cfg,
                seed,
            };
            let res = grow(&train, &heldout, &gc)?;
            trace = Some(res.trace);
            res.fitted
        }
        FitMethod::ExactHeldout => {
            let heldout = need_heldout()?;
            let (ft, rep) = exact::fit_heldout(&train, &heldout, k_max, &fit_cfg)?;
            report = Some(rep);
            ft
        }
        FitMethod::ExactPenalized => {
            let gamma = match a.gamma {
                Some(v) => v,
                None => cfg.get_parsed("gamma")?.unwrap_or(1.0),
            };
            let (ft, rep) = exact::fit_penalized(&train, k_max, gamma, &fit_cfg)?;
            report = Some(rep);
            ft
        }
        FitMethod::GlassoPooled => {
            let heldout = need_heldout()?;
            let all: Vec<usize> = (0..train.len()).collect();
            let all_h: Vec<usize> = (0..heldout.len()).collect();
            let model = fit_leaf(
                &train.gather_y(&all),
                &heldout.gather_y(&all_h),
                p,
                &fit_cfg,
            )?;
            root_only_model(d, model)
        }
        FitMethod::Parametric => {
            let lx = a.lambda_x.unwrap_or(0.0);
            let ly = a.lambda_y.unwrap_or(0.0);
            let prec = baselines::parametric_fit(&train, lx, ly, &glasso_cfg)?;
            root_only_model(
                d,
                LeafModel {
                    mu: mean_of(&train),
                    prec,
                    n_train: train.len(),
                },
            )
        }
        FitMethod::Kernel => {
            let (x0, h) = match (&a.x0, a.bandwidth) {
                (Some(x0), Some(h)) => (x0.clone(), h),
                _ => {
                    return Err(Error::Usage(
                        "kernel method requires --x0 and --bandwidth".into(),
                    ))
                }
            };
            let lambda = a.lambda.unwrap_or(0.1);
            let x0 = match &rescale {
                Some(rs) => rs.apply(&x0),
                None => x0,
            };
            let (mu, _) = baselines::kernel_moments(&train, &x0, h)?;
            let prec = baselines::kernel_fit(&train, &x0, h, lambda, &glasso_cfg)?;
            root_only_model(
                d,
                LeafModel {
                    mu,
                    prec,
                    n_train: train.len(),
                },
            )
        }
    };

    write_model(&a.out, &fitted, rescale.as_ref())?;
    if let Some(t) = &trace {
        write_trace(&a.out.join("trace.csv"), t)?;
    }
    let report = report.unwrap_or_else(|| risk_report_for(&fitted, &train, heldout.as_ref()));
    write_risk_report(&a.out.join("risk.csv"), &report)?;
    Ok(())
}

fn risk_report_for(ft: &FittedTree, train: &Dataset, heldout: Option<&Dataset>) -> RiskReport {
    let empirical = crate::risk::empirical_risk(ft, train).unwrap_or(f64::NAN);
    let heldout = heldout.and_then(|h| crate::risk::heldout_risk(ft, h).ok());
    RiskReport {
        rows: vec![RiskRow {
            id: 0,
            leaves: ft.partition.len(),
            empirical,
            heldout,
            penalty: None,
            total: heldout.unwrap_or(empirical),
        }],
    }
}

fn read_truth(dir: &Path) -> Result<TruthDoc> {
    let path = dir.join("truth.json");
    let text = std::fs::read_to_string(&path)
        .map_err(Error::io(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(Error::json(format!("decoding {}", path.display())))
}

fn probe<'a>(ft: &'a FittedTree, rescale: &Option<RescaleDoc>, x: &[f64]) -> Result<&'a LeafModel> {
    let x = match rescale {
        Some(rs) => rs.apply(x),
        None => x.to_vec(),
    };
    ft.predict(&x)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (ft, rescale) = read_model(&a.model)?;
    let truth = read_truth(&a.truth)?;
    let mut rows = Vec::new();
    let mut push = |region: usize, est: &crate::glasso::EdgeSet, want: &crate::glasso::EdgeSet| {
        let (precision, recall, f1) = edge_metrics(est, want);
        rows.push(MetricsRow {
            run: a.run,
            region,
            precision,
            recall,
            f1,
        });
    };
    match &truth {
        TruthDoc::Regions { layout } => {
            for (i, region) in layout.regions.iter().enumerate() {
                let mut x = vec![0.5; ft.tree.dims];
                for k in 0..2 {
                    x[k] = 0.5 * (region.rect.lower[k] + region.rect.upper[k]);
                }
                let model = probe(&ft, &rescale, &x)?;
                push(i, &model.prec.edges, &region.graph.edges);
            }
        }
        TruthDoc::Chain { graphs } => {
            let n = graphs.len();
            for (t, g) in graphs.iter().enumerate() {
                let x = vec![(t as f64 + 0.5) / n as f64];
                let model = probe(&ft, &rescale, &x)?;
                push(t, &model.prec.edges, &g.edges);
            }
        }
        TruthDoc::Grid { graphs } => {
            let side = graphs.len();
            for (i, row) in graphs.iter().enumerate() {
                for (j, g) in row.iter().enumerate() {
                    let x = vec![
                        (i as f64 + 0.5) / side as f64,
                        (j as f64 + 0.5) / side as f64,
                    ];
                    let model = probe(&ft, &rescale, &x)?;
                    push(i * side + j, &model.prec.edges, &g.edges);
                }
            }
        }
    }
    write_metrics(&a.out, &rows)?;
    Ok(())
}

fn dot_escape_graph(name: &str, p: usize, edges: &crate::glasso::EdgeSet) -> String {
    let mut out = format!("graph {name} {{\n");
    for v in 0..p {
        out.push_str(&format!("  n{v};\n"));
    }
    for (a, b) in edges {
        out.push_str(&format!("  n{a} -- n{b};\n"));
    }
    out.push_str("}\n");
    out
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let (ft, rescale) = read_model(&a.model)?;
    match a.format {
        ExportFormat::Dot => {
            // Tree structure as a digraph, one node per tree cell.
            let mut out = String::from("digraph tree {\n");
            let mut stack = vec![(0usize, &ft.tree.root)];
            let mut next_id = 1;
            while let Some((id, node)) = stack.pop() {
                let rect = node.rect();
                let label = format!("{:?}..{:?}", rect.lower, rect.upper);
                out.push_str(&format!("  t{id} [label=\"{label}\"];\n"));
                if let crate::dpt::TreeNode::Split { children, dim, .. } = node {
                    for child in children.iter() {
                        out.push_str(&format!("  t{id} -> t{next_id} [label=\"x{}\"]; \n", dim + 1));
                        stack.push((next_id, child));
                        next_id += 1;
                    }
                }
            }
            out.push_str("}\n");
            atomic_write(&a.out.join("tree.dot"), out.as_bytes())?;
            for (i, model) in ft.models.iter().enumerate() {
                let name = format!("leaf_{i:03}");
                let dot = dot_escape_graph(&name, model.prec.omega.order(), &model.prec.edges);
                atomic_write(&a.out.join(format!("{name}.dot")), dot.as_bytes())?;
            }
        }
        ExportFormat::Json => {
            #[derive(Serialize)]
            struct Combined<'a> {
                dims: usize,
                #[serde(rename = "K")]
                k_max: u32,
                leaves: Vec<LeafOut<'a>>,
                rescale: &'a Option<RescaleDoc>,
            }
            #[derive(Serialize)]
            struct LeafOut<'a> {
                lower: &'a [f64],
                upper: &'a [f64],
                mu: &'a [f64],
                lambda: f64,
                edges: Vec<(usize, usize)>,
            }
            let leaves = ft
                .partition
                .cells
                .iter()
                .zip(&ft.models)
                .map(|(cell, m)| LeafOut {
                    lower: &cell.lower,
                    upper: &cell.upper,
                    mu: &m.mu,
                    lambda: m.prec.lambda,
                    edges: m.prec.edges.iter().copied().collect(),
                })
                .collect();
            let doc = Combined {
                dims: ft.tree.dims,
                k_max: ft.tree.k_max,
                leaves,
                rescale: &rescale,
            };
            let text =
                serde_json::to_string_pretty(&doc).map_err(Error::json("encoding model.json"))?;
            atomic_write(&a.out.join("model.json"), text.as_bytes())?;
        }
        ExportFormat::Plotdata => {
            // Region polygons, one leaf per row.
            let mut wtr = csv::Writer::from_writer(Vec::new());
            let ctx = || "writing partition.csv".to_string();
            wtr.write_record(["leaf", "lower", "upper", "edges"])
                .map_err(Error::csv(ctx()))?;
            for (i, (cell, m)) in ft.partition.cells.iter().zip(&ft.models).enumerate() {
                let join = |v: &[f64]| {
                    v.iter()
                        .map(|x| format!("{x:.16e}"))
                        .collect::<Vec<_>>()
                        .join(";")
                };
                wtr.write_record([
                    i.to_string(),
                    join(&cell.lower),
                    join(&cell.upper),
                    m.prec.edges.len().to_string(),
                ])
                .map_err(Error::csv(ctx()))?;
            }
            atomic_write(
                &a.out.join("partition.csv"),
                &wtr.into_inner().expect("vec writer cannot fail"),
            )?;
            // Held-out risk after each accepted split, if a trace exists.
            let trace_path = a.model.join("trace.csv");
            if trace_path.exists() {
                let text = std::fs::read_to_string(&trace_path)
                    .map_err(Error::io(format!("reading {}", trace_path.display())))?;
                let mut out = String::from("split,node,dim,gain\n");
                let mut split_no = 0;
                for line in text.lines().skip(1) {
                    let fields: Vec<&str> = line.split(',').collect();
                    if fields.len() >= 4 && fields[3] == "true" {
                        out.push_str(&format!(
                            "{split_no},{},{},{}\n",
                            fields[0], fields[1], fields[2]
                        ));
                        split_no += 1;
                    }
                }
                atomic_write(&a.out.join("risk_per_split.csv"), out.as_bytes())?;
            }
        }
    }
    Ok(())
}
