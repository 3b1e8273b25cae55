//! `ses`: generate benchmarks, train, explain, evaluate, ablate and check
//! gradients.

mod output;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ses_core::checkpoint;
use ses_core::datasets::{self, SyntheticKind, SyntheticSpec};
use ses_core::gradcheck;
use ses_core::graph::{k_hop, Split};
use ses_core::masks::explanations;
use ses_core::metrics::MetricsReport;
use ses_core::objectives::write_loss_csv;
use ses_core::trainer::{self, ensure_split, TrainConfig, Variant};
use ses_core::{Dataset, Error, RunArtifacts};

use output::{hash_files, Manifest, OutDir};

#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::runtime(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_validation() { 2 } else { 3 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Parser)]
#[command(
    name = "ses",
    version,
    about = "Self-explained and self-supervised graph neural network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark graph with ground-truth motifs.
    Generate(GenerateArgs),
    /// Run both training phases and write model, masks, explanations and logs.
    Train(TrainArgs),
    /// Explain one node from a trained checkpoint.
    Explain(ExplainArgs),
    /// Compute metrics of a trained checkpoint.
    Evaluate(EvaluateArgs),
    /// Train ablated variants and report their metrics.
    Ablate(AblateArgs),
    /// Finite-difference check of every gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Graph JSON, or a whitespace-separated edge list.
    #[arg(long)]
    data: PathBuf,
    /// `node label` lines (edge-list input only).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// One feature row per node (edge-list input only; identity if absent).
    #[arg(long)]
    features: Option<PathBuf>,
}

impl DataArgs {
    fn is_json(&self) -> bool {
        self.data
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    }

    fn load(&self) -> Result<Dataset, Failure> {
        if self.is_json() {
            if self.labels.is_some() || self.features.is_some() {
                return Err(Failure::validation(
                    "--labels/--features apply to edge-list input only",
                ));
            }
            return Ok(datasets::load_json_graph(&self.data)?);
        }
        let graph =
            datasets::load_edge_list(&self.data, self.labels.as_deref(), self.features.as_deref())?;
        Ok(Dataset {
            graph,
            ground_truth: None,
        })
    }

    fn hash(&self) -> Result<String, Failure> {
        let paths: Vec<&Path> = [
            Some(self.data.as_path()),
            self.labels.as_deref(),
            self.features.as_deref(),
        ]
        .into_iter()
        .flatten()
        .collect();
        hash_files(&paths)
    }

    fn record(&self, manifest: &mut Manifest) -> Result<(), Failure> {
        manifest.dataset = Some(self.data.display().to_string());
        manifest.dataset_hash = Some(self.hash()?);
        Ok(())
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON file with any subset of the training options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override one option, e.g. `--set alpha=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::validation(format!("{}: {e}", p.display())))?;
                TrainConfig::from_json(&text)?
            }
            None => TrainConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        for kv in &self.overrides {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                Failure::validation(format!("--set expects KEY=VALUE, got {kv:?}"))
            })?;
            cfg = cfg.with_override(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// ba_shapes, ba_community, tree_cycle or tree_grid.
    #[arg(long)]
    kind: SyntheticKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Random extra edges as a fraction of the edge count.
    #[arg(long)]
    perturbation: Option<f64>,
    #[arg(long)]
    motifs: Option<usize>,
    /// Node count of the BA base graph.
    #[arg(long)]
    base_size: Option<usize>,
    /// Depth of the balanced binary tree base.
    #[arg(long)]
    tree_depth: Option<u32>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    node: usize,
    #[arg(long)]
    top_t: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated subset of accuracy, auc, fidelity, cluster.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    /// Features removed per node for Fidelity+.
    #[arg(long)]
    top_t: Option<usize>,
    /// motif_incident, all_k_hop or motif_edges.
    #[arg(long)]
    auc_candidates: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// no_mf, no_ms, no_xent, no_triplet, no_mxent or all.
    #[arg(long)]
    variant: String,
    /// Also train the unablated model for comparison.
    #[arg(long)]
    include_full: bool,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Explain(a) => explain(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Ablate(a) => ablate(a),
        Command::Gradcheck(a) => run_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn generate(a: GenerateArgs) -> Result<(), Failure> {
    let mut spec = SyntheticSpec::new(a.kind, a.seed);
    if let Some(p) = a.perturbation {
        spec.perturbation = p;
    }
    if let Some(m) = a.motifs {
        spec.motif_count = m;
    }
    if let Some(b) = a.base_size {
        spec.base_size = b;
    }
    if let Some(d) = a.tree_depth {
        spec.tree_depth = d;
    }
    let clock = Instant::now();
    let data: Dataset = datasets::generate(&spec)?;
    let mut out = OutDir::create(&a.out)?;
    let path = out.path("graph.json");
    datasets::save_json_graph(&path, &data, false)?;
    out.mark("graph.json");
    out.json("spec.json", &spec)?;
    let mut manifest = Manifest::new("generate");
    manifest.seed = Some(a.seed);
    manifest.dataset = Some(path.display().to_string());
    manifest.dataset_hash = Some(hash_files(&[&path])?);
    manifest
        .timings
        .insert("generate".into(), clock.elapsed().as_secs_f64());
    println!(
        "{}: {} nodes, {} edges, {} classes -> {}",
        a.kind.name(),
        data.graph.num_nodes(),
        data.graph.undirected_edges().len(),
        data.graph.num_classes(),
        path.display()
    );
    out.finish(manifest)
}

fn write_run(out: &mut OutDir, run: &RunArtifacts, cfg: &TrainConfig) -> Result<(), Failure> {
    out.json("metrics.json", &run.metrics)?;
    let mut csv = Vec::new();
    write_loss_csv(&mut csv, &run.log).map_err(|e| Failure::runtime(e.to_string()))?;
    out.write("loss_log.csv", csv)?;
    let records: Vec<_> = (0..run.graph.num_nodes())
        .map(|i| run.explanations.node_record(i, cfg.top_t))
        .collect();
    out.json("explanations.json", &records)?;
    out.json("pairs.json", &run.pairs.to_map())?;
    checkpoint::save(&out.path("checkpoint"), cfg, &run.model.store, &run.masks)?;
    out.mark("checkpoint/checkpoint.json");
    out.mark("checkpoint/checkpoint.bin");
    out.json("checkpoint/split.json", &run.graph.split())?;
    Ok(())
}

fn timings(run: &RunArtifacts) -> BTreeMap<String, f64> {
    let t = run.timings;
    BTreeMap::from([
        ("prepare".into(), t.prepare),
        ("explainable".into(), t.explainable),
        ("pairs".into(), t.pairs),
        ("epl".into(), t.epl),
        ("evaluate".into(), t.evaluate),
    ])
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let cfg = a.config.resolve()?;
    let data = a.data.load()?;
    let run = trainer::run_ses(&data, &cfg)?;
    let mut out = OutDir::create(&a.out)?;
    write_run(&mut out, &run, &cfg)?;
    let mut manifest = Manifest::new("train").with_config(&cfg);
    a.data.record(&mut manifest)?;
    manifest.timings = timings(&run);
    manifest.metrics.insert("final".into(), run.metrics.clone());
    print!("{}", run.metrics.table());
    out.finish(manifest)
}

struct Restored {
    data: Dataset,
    cfg: TrainConfig,
    model: ses_core::Model,
    masks: ses_core::MaskSet,
    khop: ses_core::graph::KHopAdjacency,
}

fn restore(checkpoint_dir: &Path, data_args: &DataArgs) -> Result<Restored, Failure> {
    let ckpt: ses_core::Checkpoint = checkpoint::load(checkpoint_dir)?;
    let mut data = data_args.load()?;
    if ckpt.feature_mask.dim() != data.graph.features().dim() {
        return Err(Failure::validation(format!(
            "checkpoint was trained on a {:?} feature matrix, data has {:?}",
            ckpt.feature_mask.dim(),
            data.graph.features().dim()
        )));
    }
    let split_path = checkpoint_dir.join("split.json");
    if split_path.exists() {
        let text = std::fs::read_to_string(&split_path).map_err(|e| Failure::io(&split_path, e))?;
        let split: Vec<Split> = serde_json::from_str(&text)
            .map_err(|e| Failure::validation(format!("{}: {e}", split_path.display())))?;
        data.graph = data.graph.with_split(split)?;
    } else {
        data.graph = ensure_split(data.graph, data.ground_truth.is_some(), &ckpt.config)?;
    }
    let khop = k_hop(&data.graph, ckpt.config.k)?;
    let masks = ckpt.mask_set(Arc::clone(khop.pattern()))?;
    Ok(Restored {
        cfg: ckpt.config.clone(),
        model: ses_core::Model::from_store(ckpt.store)?,
        data,
        masks,
        khop,
    })
}

fn explain(a: ExplainArgs) -> Result<(), Failure> {
    let r = restore(&a.checkpoint, &a.data)?;
    let n = r.data.graph.num_nodes();
    if a.node >= n {
        return Err(Failure::validation(format!(
            "node {} out of range for {n} nodes",
            a.node
        )));
    }
    let expl = explanations(&r.masks, &r.data.graph, &r.khop)?;
    let record = expl.node_record(a.node, a.top_t.unwrap_or(r.cfg.top_t));
    let mut out = OutDir::create(&a.out)?;
    out.json(&format!("node_{}.json", a.node), &record)?;
    out.write(
        &format!("node_{}.dot", a.node),
        expl.to_dot(&r.data.graph, a.node),
    )?;
    for (j, w) in &record.neighbors {
        println!("{j}\t{w:.4}");
    }
    let mut manifest = Manifest::new("explain").with_config(&r.cfg);
    a.data.record(&mut manifest)?;
    out.finish(manifest)
}

const METRIC_NAMES: [&str; 4] = ["accuracy", "auc", "fidelity", "cluster"];

fn evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let wanted: Vec<String> = if a.metrics.is_empty() {
        Vec::new()
    } else {
        for m in &a.metrics {
            if !METRIC_NAMES.contains(&m.as_str()) {
                return Err(Failure::validation(format!(
                    "unknown metric {m:?}; expected one of {METRIC_NAMES:?}"
                )));
            }
        }
        a.metrics.clone()
    };
    let r = restore(&a.checkpoint, &a.data)?;
    let truth = r.data.ground_truth.as_ref();
    if wanted.iter().any(|m| m == "auc") && truth.is_none() {
        return Err(Failure::validation(
            "explanation AUC needs ground-truth edges in the data file",
        ));
    }
    let mut cfg = r.cfg.clone();
    if let Some(t) = a.top_t {
        cfg.top_t = t;
    }
    if let Some(mode) = &a.auc_candidates {
        cfg = cfg.with_override("auc_candidates", mode)?;
    }
    let clock = Instant::now();
    let expl = explanations(&r.masks, &r.data.graph, &r.khop)?;
    let full = trainer::evaluate(&r.data.graph, truth, &r.model, &r.masks, &expl, &cfg)?;
    let keep = |name: &str| wanted.is_empty() || wanted.iter().any(|m| m == name);
    let report = MetricsReport {
        test_accuracy: full.test_accuracy.filter(|_| keep("accuracy")),
        explanation_auc: full.explanation_auc.filter(|_| keep("auc")),
        fidelity_plus: full.fidelity_plus.filter(|_| keep("fidelity")),
        silhouette: full.silhouette.filter(|_| keep("cluster")),
        calinski_harabasz: full.calinski_harabasz.filter(|_| keep("cluster")),
    };
    print!("{}", report.table());
    if let Some(dir) = a.out {
        let mut out = OutDir::create(&dir)?;
        out.json("metrics.json", &report)?;
        let mut manifest = Manifest::new("evaluate").with_config(&cfg);
        a.data.record(&mut manifest)?;
        manifest
            .timings
            .insert("evaluate".into(), clock.elapsed().as_secs_f64());
        manifest.metrics.insert("final".into(), report);
        out.finish(manifest)?;
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<(), Failure> {
    let variants: Vec<Variant> = if a.variant == "all" {
        Variant::ALL.to_vec()
    } else {
        vec![a.variant.parse::<Variant>()?]
    };
    let base = a.config.resolve()?;
    let data = a.data.load()?;
    let mut runs: Vec<(String, TrainConfig)> = Vec::new();
    if a.include_full {
        runs.push(("full".into(), base.clone()));
    }
    runs.extend(
        variants
            .iter()
            .map(|v| (v.name().to_owned(), v.apply(&base))),
    );

    let mut out = OutDir::create(&a.out)?;
    let mut manifest = Manifest::new("ablate").with_config(&base);
    a.data.record(&mut manifest)?;
    for (name, cfg) in &runs {
        log::info!("ablation {name}");
        let run = trainer::run_ses(&data, cfg)?;
        out.json(&format!("{name}/metrics.json"), &run.metrics)?;
        let mut csv = Vec::new();
        write_loss_csv(&mut csv, &run.log).map_err(|e| Failure::runtime(e.to_string()))?;
        out.write(&format!("{name}/loss_log.csv"), csv)?;
        let total: f64 = timings(&run).values().sum();
        manifest.timings.insert(name.clone(), total);
        println!("{name}");
        for (k, v) in run.metrics.rows() {
            println!("  {k:<18} {v:.4}");
        }
        manifest.metrics.insert(name.clone(), run.metrics);
    }
    out.json("ablation.json", &manifest.metrics)?;
    out.finish(manifest)
}

fn run_gradcheck(a: GradcheckArgs) -> Result<(), Failure> {
    let clock = Instant::now();
    let results = gradcheck::standard_suite(a.seed, a.eps)?;
    for r in &results {
        let verdict = if r.passes(a.tolerance) { "ok" } else { "FAIL" };
        println!(
            "{verdict:<4} {:<24} {:>5} entries  max rel err {:.2e}",
            r.name, r.entries, r.max_rel_error
        );
    }
    if let Some(dir) = a.out {
        let mut out = OutDir::create(&dir)?;
        out.json("gradcheck.json", &results)?;
        let mut manifest = Manifest::new("gradcheck");
        manifest.seed = Some(a.seed);
        manifest
            .timings
            .insert("gradcheck".into(), clock.elapsed().as_secs_f64());
        out.finish(manifest)?;
    }
    gradcheck::require_all(&results, a.tolerance).map_err(|e| Failure::runtime(e.to_string()))
}
