//! Two-phase training: explainable co-training of encoder and mask
//! generator, then enhanced predictive learning (epl) of the encoder on
//! mask-weighted inputs with a triplet objective.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Owner, ParamStore, Tape, Var};
use crate::datasets::{Dataset, GroundTruth};
use crate::encoder::{
    column, encode, normalize_matrix, EncoderParams, NormalizedAdjacency, SelfLoops,
};
use crate::error::{Error, Result};
use crate::graph::{
    k_hop, negative_candidates, random_split, Graph, KHopAdjacency, NegativeCandidates, Split,
};
use crate::masks::{
    explanations, feature_mask, structure_mask, Explanations, MaskGeneratorParams, MaskSet,
};
use crate::metrics::{self, AucCandidates, MetricsReport};
use crate::objectives::{
    cross_entropy, epl_objective, explainable_objective, gather_triplets, masked_cross_entropy,
    subgraph_loss, triplet_features, triplet_loss, LossBreakdown, Phase,
};
use crate::optim::{Adam, AdamConfig};
use crate::pairs::{build_pairs, PairSets};
use crate::rng;
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub hidden: usize,
    pub k: usize,
    pub r: f64,
    pub margin: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epochs_explainable: usize,
    pub epochs_epl: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub encoder_bias: bool,
    pub mask_input: MaskInput,
    /// Train/val/test fractions for graphs without a stored split. Unset
    /// means 0.8/0.1/0.1 with ground truth and 0.6/0.2/0.2 otherwise.
    pub split: Option<(f64, f64, f64)>,
    pub top_t: usize,
    pub auc_candidates: AucCandidates,
    /// Use all-ones in place of `M_f`.
    pub no_mf: bool,
    /// Use the raw adjacency in the epl forward pass.
    pub no_ms: bool,
    /// Triplet term only in epl.
    pub no_xent: bool,
    /// Cross entropy only in epl.
    pub no_triplet: bool,
    /// Drop the masked cross entropy from the explainable objective.
    pub no_mxent: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            hidden: 128,
            k: 2,
            r: 0.8,
            margin: 1.0,
            alpha: 0.5,
            beta: 0.5,
            epochs_explainable: 300,
            epochs_epl: 15,
            seed: 0,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            encoder_bias: false,
            mask_input: MaskInput::PreActivation,
            split: None,
            top_t: 5,
            auc_candidates: AucCandidates::MotifIncident,
            no_mf: false,
            no_ms: false,
            no_xent: false,
            no_triplet: false,
            no_mxent: false,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.lr > 0.0 && self.lr.is_finite(), || {
            format!("lr must be positive, got {}", self.lr)
        })?;
        check(self.hidden > 0, || "hidden must be positive".into())?;
        check(self.k >= 1, || "k must be at least 1".into())?;
        check(self.r > 0.0 && self.r <= 1.0, || {
            format!("r must be in (0, 1], got {}", self.r)
        })?;
        check(self.margin >= 0.0, || {
            format!("margin must be nonnegative, got {}", self.margin)
        })?;
        check((0.0..=1.0).contains(&self.alpha), || {
            format!("alpha must be in [0, 1], got {}", self.alpha)
        })?;
        check((0.0..=1.0).contains(&self.beta), || {
            format!("beta must be in [0, 1], got {}", self.beta)
        })?;
        check((0.0..1.0).contains(&self.adam_beta1), || {
            "adam_beta1 must be in [0, 1)".into()
        })?;
        check((0.0..1.0).contains(&self.adam_beta2), || {
            "adam_beta2 must be in [0, 1)".into()
        })?;
        check(self.adam_eps > 0.0, || "adam_eps must be positive".into())?;
        check(!(self.no_xent && self.no_triplet), || {
            "no_xent and no_triplet leave no epl objective".into()
        })?;
        if let Some((a, b, c)) = self.split {
            check(
                a > 0.0 && b >= 0.0 && c >= 0.0 && (a + b + c - 1.0).abs() < 1e-6,
                || format!("split fractions must be nonnegative and sum to 1, got ({a}, {b}, {c})"),
            )?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key=value`, parsing the value as JSON and falling back to a
    /// plain string (so `auc_candidates=all_k_hop` works unquoted).
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut tree = serde_json::to_value(self).expect("config serializes");
        let slot = tree
            .get_mut(key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown config key `{key}`")))?;
        *slot =
            serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.into()));
        let cfg: Self = serde_json::from_value(tree)
            .map_err(|e| Error::InvalidArgument(format!("{key}={value}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Weight of the triplet term in epl after ablation switches.
    pub fn effective_beta(&self) -> f64 {
        if self.no_xent {
            1.0
        } else if self.no_triplet {
            0.0
        } else {
            self.beta
        }
    }
}

/// Which first-layer output feeds the mask generator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskInput {
    #[default]
    PreActivation,
    PostActivation,
}

/// The five ablations, each flipping one config switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    NoMf,
    NoMs,
    NoXent,
    NoTriplet,
    NoMxent,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Self::NoMf,
        Self::NoMs,
        Self::NoXent,
        Self::NoTriplet,
        Self::NoMxent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::NoMf => "no_mf",
            Self::NoMs => "no_ms",
            Self::NoXent => "no_xent",
            Self::NoTriplet => "no_triplet",
            Self::NoMxent => "no_mxent",
        }
    }

    pub fn apply(self, cfg: &TrainConfig) -> TrainConfig {
        let mut c = cfg.clone();
        match self {
            Self::NoMf => c.no_mf = true,
            Self::NoMs => c.no_ms = true,
            Self::NoXent => c.no_xent = true,
            Self::NoTriplet => c.no_triplet = true,
            Self::NoMxent => c.no_mxent = true,
        }
        c
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ablation variant {s:?}")))
    }
}

/// Parameters of both networks in one store.
#[derive(Debug, Clone)]
pub struct Model<S> {
    pub store: ParamStore<S>,
    pub encoder: EncoderParams,
    pub masks: MaskGeneratorParams,
}

impl<S: Scalar> Model<S> {
    /// Xavier-uniform weights and zero biases from the `init` stream.
    pub fn initialize(num_features: usize, num_classes: usize, cfg: &TrainConfig) -> Result<Self> {
        let mut rng = rng::substream(cfg.seed, rng::INIT);
        let mut store = ParamStore::new();
        let encoder = EncoderParams::register(
            &mut store,
            num_features,
            cfg.hidden,
            num_classes,
            cfg.encoder_bias,
            &mut rng,
        )?;
        let masks = MaskGeneratorParams::register(&mut store, cfg.hidden, num_features, &mut rng)?;
        Ok(Self {
            store,
            encoder,
            masks,
        })
    }

    pub fn from_store(store: ParamStore<S>) -> Result<Self> {
        Ok(Self {
            encoder: EncoderParams::from_store(&store)?,
            masks: MaskGeneratorParams::from_store(&store)?,
            store,
        })
    }
}

/// Gives nodes a split when the graph has none (everything in training).
pub fn ensure_split<S: Scalar>(
    graph: Graph<S>,
    has_truth: bool,
    cfg: &TrainConfig,
) -> Result<Graph<S>> {
    if graph.split().iter().any(|&s| s != Split::Train) {
        return Ok(graph);
    }
    let ratios = cfg.split.unwrap_or(if has_truth {
        (0.8, 0.1, 0.1)
    } else {
        (0.6, 0.2, 0.2)
    });
    let split = random_split(graph.num_nodes(), ratios, cfg.seed)?;
    graph.with_split(split)
}

/// Inputs shared by both phases.
pub struct Prepared<S> {
    pub khop: KHopAdjacency,
    pub negatives: NegativeCandidates,
    khop_loops: SelfLoops,
    base_norm: SparseMatrix<S>,
    train: Vec<usize>,
    val: Vec<usize>,
}

impl<S: Scalar> Prepared<S> {
    pub fn new(graph: &Graph<S>, cfg: &TrainConfig) -> Result<Self> {
        let khop = k_hop(graph, cfg.k)?;
        let negatives = negative_candidates(graph, &khop, cfg.seed);
        let train = graph.nodes_in(Split::Train);
        if train.is_empty() {
            return Err(Error::InvalidArgument("no training nodes".into()));
        }
        Ok(Self {
            khop_loops: SelfLoops::new(khop.pattern())?,
            base_norm: normalize_matrix(&SparseMatrix::ones(Arc::clone(graph.adjacency())))?,
            negatives,
            khop,
            train,
            val: graph.nodes_in(Split::Val),
        })
    }
}

fn const_adjacency<S: Scalar>(tape: &Tape<S>, m: &SparseMatrix<S>) -> NormalizedAdjacency {
    NormalizedAdjacency {
        pattern: Arc::clone(m.pattern()),
        values: tape.constant(column(m.values())),
    }
}

fn hadamard<S: Scalar>(a: &Array2<S>, b: &Array2<S>) -> Array2<S> {
    let mut out = a.clone();
    Zip::from(&mut out).and(b).for_each(|o, &v| *o *= v);
    out
}

fn finite<S: Scalar>(tape: &Tape<S>, v: Var, epoch: usize, component: &'static str) -> Result<f64> {
    let x = tape.scalar(v).as_f64();
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFiniteLoss { epoch, component })
    }
}

fn val_accuracy<S: Scalar>(logits: &Array2<S>, labels: &[usize], val: &[usize]) -> f64 {
    metrics::accuracy(logits, labels, val).unwrap_or(f64::NAN)
}

struct ExplainableForward {
    logits: Var,
    feature: Var,
    structure: Var,
    negative: Var,
    xent: Var,
    sub: Var,
    m_xent: Option<Var>,
    total: Var,
}

fn explainable_forward<S: Scalar>(
    tape: &Tape<S>,
    graph: &Graph<S>,
    prep: &Prepared<S>,
    model: &Model<S>,
    cfg: &TrainConfig,
) -> Result<ExplainableForward> {
    let enc = model.encoder.bind(tape, &model.store);
    let mv = model.masks.bind(tape, &model.store);
    let x = tape.constant(graph.features().clone());
    let out = encode(tape, &const_adjacency(tape, &prep.base_norm), x, &enc)?;
    let xent = cross_entropy(tape, out.logits, graph.labels(), &prep.train)?;
    let h = match cfg.mask_input {
        MaskInput::PreActivation => out.hidden,
        MaskInput::PostActivation => tape.relu(out.hidden),
    };
    let feature = feature_mask(tape, h, &mv)?;
    let structure = structure_mask(tape, h, prep.khop.sources(), prep.khop.targets(), &mv)?;
    let (neg_src, neg_tgt) = prep.negatives.pairs();
    let negative = structure_mask(tape, h, &neg_src, &neg_tgt, &mv)?;
    let sub = subgraph_loss(tape, structure, negative)?;
    let m_xent = if cfg.no_mxent {
        None
    } else {
        let masked_x = if cfg.no_mf { x } else { tape.mul(feature, x)? };
        Some(masked_cross_entropy(
            tape,
            &prep.khop_loops,
            structure,
            masked_x,
            &enc,
            graph.labels(),
            &prep.train,
        )?)
    };
    let total = explainable_objective(tape, cfg.alpha, xent, sub, m_xent)?;
    Ok(ExplainableForward {
        logits: out.logits,
        feature,
        structure,
        negative,
        xent,
        sub,
        m_xent,
        total,
    })
}

/// Explainable phase: one Adam over encoder and mask generator. Returns the
/// mask snapshot after the last update and the per-epoch log.
pub fn train_explainable<S: Scalar>(
    graph: &Graph<S>,
    prep: &Prepared<S>,
    model: &mut Model<S>,
    cfg: &TrainConfig,
) -> Result<(MaskSet<S>, Vec<LossBreakdown>)> {
    let ids = model.store.ids().collect();
    let mut adam = Adam::new(&model.store, ids, cfg.adam());
    let mut log = Vec::with_capacity(cfg.epochs_explainable);
    for epoch in 1..=cfg.epochs_explainable {
        let tape = Tape::new();
        let f = explainable_forward(&tape, graph, prep, model, cfg)?;
        let row = LossBreakdown {
            epoch,
            phase: Phase::Explainable,
            xent: finite(&tape, f.xent, epoch, "xent")?,
            sub: finite(&tape, f.sub, epoch, "sub")?,
            m_xent: f
                .m_xent
                .map(|m| finite(&tape, m, epoch, "m_xent"))
                .transpose()?
                .unwrap_or(0.0),
            triplet: 0.0,
            total: finite(&tape, f.total, epoch, "total")?,
            val_accuracy: val_accuracy(&tape.value(f.logits), graph.labels(), &prep.val),
        };
        log::debug!(
            "explainable epoch {epoch}: total {:.5} val {:.4}",
            row.total,
            row.val_accuracy
        );
        log.push(row);
        let grads = tape.backward(f.total)?;
        model.store.zero_grad();
        grads.accumulate_into(&mut model.store);
        adam.step(&mut model.store)?;
    }
    let tape = Tape::new();
    let f = explainable_forward(&tape, graph, prep, model, cfg)?;
    let masks = MaskSet::new(
        tape.value(f.feature),
        tape.value(f.structure).iter().copied().collect(),
        tape.value(f.negative).iter().copied().collect(),
        Arc::clone(prep.khop.pattern()),
    )?;
    Ok((masks, log))
}

/// Fixed inputs of the epl forward pass: `M_f ⊙ X` and the normalised
/// `M̂_s ⊙ A`, or their raw counterparts under the ablation switches.
#[derive(Debug, Clone)]
pub struct MaskedInputs<S> {
    pub features: Array2<S>,
    pub adjacency: SparseMatrix<S>,
    feature_mask: Option<Array2<S>>,
}

impl<S: Scalar> MaskedInputs<S> {
    pub fn new(graph: &Graph<S>, masks: &MaskSet<S>, cfg: &TrainConfig) -> Result<Self> {
        let a = graph.adjacency();
        let weights = if cfg.no_ms {
            SparseMatrix::ones(Arc::clone(a))
        } else {
            SparseMatrix::new(Arc::clone(a), masks.restrict_to(a)?)?
        };
        let feature_mask = (!cfg.no_mf).then(|| masks.feature.clone());
        let mut inputs = Self {
            features: graph.features().clone(),
            adjacency: normalize_matrix(&weights)?,
            feature_mask,
        };
        inputs.features = inputs.mask_features(graph.features());
        Ok(inputs)
    }

    /// Applies the feature mask to arbitrary features (used by Fidelity+).
    pub fn mask_features(&self, x: &Array2<S>) -> Array2<S> {
        match &self.feature_mask {
            Some(m) => hadamard(m, x),
            None => x.clone(),
        }
    }

    fn logits(&self, tape: &Tape<S>, x: Array2<S>, model: &Model<S>) -> Result<Var> {
        let enc = model.encoder.bind(tape, &model.store);
        Ok(encode(
            tape,
            &const_adjacency(tape, &self.adjacency),
            tape.constant(x),
            &enc,
        )?
        .logits)
    }

    /// `Ẑ` for the given (unmasked) features.
    pub fn predict(&self, x: &Array2<S>, model: &Model<S>) -> Result<Array2<S>> {
        let tape = Tape::new();
        let z = self.logits(&tape, self.mask_features(x), model)?;
        Ok(tape.value(z))
    }
}

/// Epl phase: fresh Adam over the encoder only; masks stay frozen.
pub fn train_epl<S: Scalar>(
    graph: &Graph<S>,
    prep: &Prepared<S>,
    inputs: &MaskedInputs<S>,
    pairs: &PairSets,
    model: &mut Model<S>,
    cfg: &TrainConfig,
) -> Result<(Array2<S>, Vec<LossBreakdown>)> {
    let index = triplet_features(pairs)?;
    let beta = cfg.effective_beta();
    let mut adam = Adam::new(&model.store, model.store.ids_of(Owner::Encoder), cfg.adam());
    let mut log = Vec::with_capacity(cfg.epochs_epl);
    for epoch in 1..=cfg.epochs_epl {
        let tape = Tape::new();
        let z = inputs.logits(&tape, inputs.features.clone(), model)?;
        let xent = cross_entropy(&tape, z, graph.labels(), &prep.train)?;
        let triplet = if index.num_anchors == 0 {
            tape.constant(Array2::zeros((1, 1)))
        } else {
            let stacks = gather_triplets(&tape, z, &index)?;
            triplet_loss(&tape, stacks, &index.segment, index.num_anchors, cfg.margin)?
        };
        let total = epl_objective(&tape, beta, triplet, xent)?;
        let row = LossBreakdown {
            epoch,
            phase: Phase::Epl,
            xent: finite(&tape, xent, epoch, "xent")?,
            sub: 0.0,
            m_xent: 0.0,
            triplet: finite(&tape, triplet, epoch, "triplet")?,
            total: finite(&tape, total, epoch, "total")?,
            val_accuracy: val_accuracy(&tape.value(z), graph.labels(), &prep.val),
        };
        log::debug!(
            "epl epoch {epoch}: total {:.5} val {:.4}",
            row.total,
            row.val_accuracy
        );
        log.push(row);
        let grads = tape.backward(total)?;
        model.store.zero_grad();
        grads.accumulate_into(&mut model.store);
        adam.step(&mut model.store)?;
    }
    let z = inputs.predict(graph.features(), model)?;
    Ok((z, log))
}

/// Wall-clock seconds per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub prepare: f64,
    pub explainable: f64,
    pub pairs: f64,
    pub epl: f64,
    pub evaluate: f64,
}

pub struct RunArtifacts<S> {
    pub graph: Graph<S>,
    pub khop: KHopAdjacency,
    pub model: Model<S>,
    pub masks: MaskSet<S>,
    pub explanations: Explanations<S>,
    pub pairs: PairSets,
    /// `Ẑ` after epl.
    pub embeddings: Array2<S>,
    pub log: Vec<LossBreakdown>,
    /// Test accuracy of the plain encoder at the end of the explainable phase.
    pub explainable_accuracy: Option<f64>,
    pub metrics: MetricsReport,
    pub timings: Timings,
}

/// Metrics of a trained model. AUC needs ground truth; the rest need test
/// nodes.
pub fn evaluate<S: Scalar>(
    graph: &Graph<S>,
    truth: Option<&GroundTruth>,
    model: &Model<S>,
    masks: &MaskSet<S>,
    explanations: &Explanations<S>,
    cfg: &TrainConfig,
) -> Result<MetricsReport> {
    let inputs = MaskedInputs::new(graph, masks, cfg)?;
    let z = inputs.predict(graph.features(), model)?;
    let test = graph.nodes_in(Split::Test);
    let mut report = MetricsReport {
        explanation_auc: truth.and_then(|t| {
            metrics::explanation_auc(
                &explanations.subgraph,
                graph.adjacency(),
                t,
                cfg.auc_candidates,
            )
        }),
        ..Default::default()
    };
    if !test.is_empty() {
        report.test_accuracy = Some(metrics::accuracy(&z, graph.labels(), &test)?);
        report.fidelity_plus = Some(metrics::fidelity_plus(
            |x| inputs.predict(x, model),
            graph.features(),
            &explanations.feature,
            graph.labels(),
            &test,
            cfg.top_t,
        )?);
        if let Some(stats) = metrics::cluster_stats(&z, graph.labels(), &test) {
            report.silhouette = Some(stats.silhouette);
            report.calinski_harabasz = Some(stats.calinski_harabasz);
        }
    }
    Ok(report)
}

fn plain_accuracy<S: Scalar>(
    graph: &Graph<S>,
    prep: &Prepared<S>,
    model: &Model<S>,
) -> Result<Option<f64>> {
    let test = graph.nodes_in(Split::Test);
    if test.is_empty() {
        return Ok(None);
    }
    let tape = Tape::new();
    let enc = model.encoder.bind(&tape, &model.store);
    let x = tape.constant(graph.features().clone());
    let out = encode(&tape, &const_adjacency(&tape, &prep.base_norm), x, &enc)?;
    Ok(Some(metrics::accuracy(
        &tape.value(out.logits),
        graph.labels(),
        &test,
    )?))
}

/// Full pipeline: split, k-hop and negatives, initialization, explainable
/// phase, pair sampling, epl phase, explanations and metrics.
pub fn run_ses<S: Scalar>(data: &Dataset<S>, cfg: &TrainConfig) -> Result<RunArtifacts<S>> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let clock = Instant::now();
    let graph = ensure_split(data.graph.clone(), data.ground_truth.is_some(), cfg)?;
    let prep = Prepared::new(&graph, cfg)?;
    let mut model = Model::initialize(graph.num_features(), graph.num_classes(), cfg)?;
    timings.prepare = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (masks, mut log) = train_explainable(&graph, &prep, &mut model, cfg)?;
    let explainable_accuracy = plain_accuracy(&graph, &prep, &model)?;
    timings.explainable = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let pairs = build_pairs(
        &masks.structure,
        &prep.khop,
        &prep.negatives,
        cfg.r,
        cfg.seed,
    )?;
    timings.pairs = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let inputs = MaskedInputs::new(&graph, &masks, cfg)?;
    let (embeddings, epl_log) = train_epl(&graph, &prep, &inputs, &pairs, &mut model, cfg)?;
    log.extend(epl_log);
    timings.epl = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let explanations = explanations(&masks, &graph, &prep.khop)?;
    let metrics = evaluate(
        &graph,
        data.ground_truth.as_ref(),
        &model,
        &masks,
        &explanations,
        cfg,
    )?;
    timings.evaluate = clock.elapsed().as_secs_f64();

    Ok(RunArtifacts {
        khop: prep.khop,
        graph,
        model,
        masks,
        explanations,
        pairs,
        embeddings,
        log,
        explainable_accuracy,
        metrics,
        timings,
    })
}
