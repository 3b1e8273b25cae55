//! Central finite-difference checks of tape gradients.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::encoder::{encode, normalize, EncoderVars, NormalizedAdjacency, SelfLoops};
use crate::error::{Error, Result};
use crate::graph::{k_hop, negative_candidates, Graph};
use crate::masks::{feature_mask, structure_mask, MaskVars};
use crate::objectives::{
    cross_entropy, epl_objective, explainable_objective, masked_cross_entropy, subgraph_loss,
    triplet_loss,
};
use crate::rng;
use crate::scalar::Scalar;
use crate::sparse::SparsePattern;

pub const DEFAULT_EPS: f64 = 1e-5;
/// Denominator floor of the relative error, so entries whose true gradient
/// is zero are judged by their absolute error.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

impl CheckResult {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares `d f / d inputs` from the tape against central differences.
/// `f` must build a scalar from the given input variables.
pub fn check<S, F>(name: &str, inputs: &[Array2<S>], eps: f64, f: F) -> Result<CheckResult>
where
    S: Scalar,
    F: Fn(&Tape<S>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Array2<S>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
        Ok(tape.scalar(f(&tape, &vars)?).as_f64())
    };
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.variable(v.clone())).collect();
    let root = f(&tape, &vars)?;
    let grads = tape.backward(root)?;

    let mut worst: f64 = 0.0;
    let mut entries = 0;
    let mut probe = inputs.to_vec();
    for (k, &var) in vars.iter().enumerate() {
        let zero = Array2::zeros(inputs[k].raw_dim());
        let analytic = grads.wrt(var).unwrap_or(&zero);
        for idx in 0..inputs[k].len() {
            let (r, c) = (idx / inputs[k].ncols(), idx % inputs[k].ncols());
            let base = inputs[k][[r, c]];
            probe[k][[r, c]] = base + S::of(eps);
            let up = eval(&probe)?;
            probe[k][[r, c]] = base - S::of(eps);
            let down = eval(&probe)?;
            probe[k][[r, c]] = base;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[[r, c]].as_f64();
            let denom = a.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
            entries += 1;
        }
    }
    Ok(CheckResult {
        name: name.into(),
        entries,
        max_rel_error: worst,
    })
}

struct Inputs {
    rng: rng::Rng,
}

impl Inputs {
    fn uniform(&mut self, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| self.rng.random_range(-1.0..1.0))
    }

    /// Values bounded away from zero, for ops with a kink there.
    fn away(&mut self, r: usize, c: usize) -> Array2<f64> {
        self.uniform(r, c)
            .mapv(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 })
    }

    fn positive(&mut self, r: usize, c: usize) -> Array2<f64> {
        self.uniform(r, c).mapv(|v| v.abs() + 0.2)
    }
}

/// Reduces any output to a scalar through fixed weights, so every output
/// entry contributes to the checked gradient.
fn project(tape: &Tape<f64>, out: Var, salt: u64) -> Result<Var> {
    let (r, c) = tape.shape(out);
    let mut rng = rng::substream(salt, "gradcheck-projection");
    let w = Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0));
    Ok(tape.sum(tape.mul(out, tape.constant(w))?))
}

fn toy_graph() -> Result<Graph<f64>> {
    let edges = [
        (0, 1),
        (1, 2),
        (2, 3),
        (3, 0),
        (3, 4),
        (4, 5),
        (5, 6),
        (6, 4),
    ];
    let x = Array2::from_shape_fn((7, 4), |(i, j)| ((i * 4 + j) % 5) as f64 * 0.3 - 0.4);
    Graph::new(7, &edges, x, vec![0, 1, 2, 0, 1, 2, 0])
}

type Case = (
    String,
    Vec<Array2<f64>>,
    Box<dyn Fn(&Tape<f64>, &[Var]) -> Result<Var>>,
);

fn case<F>(name: &str, inputs: Vec<Array2<f64>>, f: F) -> Case
where
    F: Fn(&Tape<f64>, &[Var]) -> Result<Var> + 'static,
{
    (name.into(), inputs, Box::new(f))
}

/// Every differentiable primitive and every composite loss, on toy inputs.
pub fn standard_suite(seed: u64, eps: f64) -> Result<Vec<CheckResult>> {
    let mut g = Inputs {
        rng: rng::substream(seed, "gradcheck"),
    };
    let pattern = Arc::new(SparsePattern::from_entries(
        4,
        3,
        [(0, 0), (0, 2), (1, 1), (3, 0), (3, 1), (3, 2)],
    )?);
    let graph = toy_graph()?;
    let khop = k_hop(&graph, 2)?;
    let negatives = negative_candidates(&graph, &khop, seed);
    let (neg_src, neg_tgt) = negatives.pairs();
    let adj_loops = SelfLoops::new(graph.adjacency())?;
    let khop_loops = SelfLoops::new(khop.pattern())?;
    let train: Vec<usize> = (0..graph.num_nodes()).collect();
    let labels = graph.labels().to_vec();
    let x = graph.features().clone();
    let (n, f, hid, c) = (
        graph.num_nodes(),
        graph.num_features(),
        5,
        graph.num_classes(),
    );
    let nnz_a = graph.adjacency().nnz();
    let (khop_src, khop_tgt) = (khop.sources().to_vec(), khop.targets().to_vec());

    let mut cases: Vec<Case> = vec![
        case("matmul", vec![g.uniform(3, 4), g.uniform(4, 2)], |t, v| {
            project(t, t.matmul(v[0], v[1])?, 1)
        }),
        case("sparse_matmul", vec![g.uniform(6, 1), g.uniform(3, 2)], {
            let p = Arc::clone(&pattern);
            move |t, v| project(t, t.sparse_matmul(&p, v[0], v[1])?, 2)
        }),
        case(
            "add_bias_row",
            vec![g.uniform(3, 2), g.uniform(1, 2)],
            |t, v| project(t, t.add_bias_row(v[0], v[1])?, 3),
        ),
        case("add", vec![g.uniform(2, 3), g.uniform(2, 3)], |t, v| {
            project(t, t.add(v[0], v[1])?, 4)
        }),
        case("sub", vec![g.uniform(2, 3), g.uniform(2, 3)], |t, v| {
            project(t, t.sub(v[0], v[1])?, 5)
        }),
        case("mul", vec![g.uniform(2, 3), g.uniform(2, 3)], |t, v| {
            project(t, t.mul(v[0], v[1])?, 6)
        }),
        case("scale", vec![g.uniform(2, 3)], |t, v| {
            project(t, t.scale(v[0], -1.7), 7)
        }),
        case("add_scalar", vec![g.uniform(2, 3)], |t, v| {
            project(t, t.add_scalar(v[0], 0.3), 8)
        }),
        case(
            "concat_columns",
            vec![g.uniform(2, 3), g.uniform(2, 1)],
            |t, v| project(t, t.concat_columns(v[0], v[1])?, 9),
        ),
        case(
            "concat_rows",
            vec![g.uniform(2, 3), g.uniform(1, 3)],
            |t, v| project(t, t.concat_rows(v[0], v[1])?, 10),
        ),
        case("slice_rows", vec![g.uniform(5, 2)], |t, v| {
            project(t, t.slice_rows(v[0], 1, 4)?, 11)
        }),
        case("gather_rows", vec![g.uniform(4, 2)], |t, v| {
            project(t, t.gather_rows(v[0], &[3, 0, 3, 1])?, 12)
        }),
        case("scatter_add_rows", vec![g.uniform(4, 2)], |t, v| {
            project(t, t.scatter_add_rows(v[0], &[2, 0, 2, 4], 5)?, 13)
        }),
        case("relu", vec![g.away(3, 3)], |t, v| {
            project(t, t.relu(v[0]), 14)
        }),
        case(
            "sigmoid",
            vec![g.uniform(3, 3).mapv(|v| v * 4.0)],
            |t, v| project(t, t.sigmoid(v[0]), 15),
        ),
        case(
            "log_softmax_rows",
            vec![g.uniform(3, 4).mapv(|v| v * 3.0)],
            |t, v| project(t, t.log_softmax_rows(v[0]), 16),
        ),
        case("powf", vec![g.positive(3, 2)], |t, v| {
            project(t, t.powf(v[0], -0.5), 17)
        }),
        case("mean_abs_error", vec![g.away(4, 1)], |t, v| {
            t.mean_abs_error(v[0], Array2::zeros((4, 1)))
        }),
        case("segment_norm", vec![g.uniform(5, 3)], |t, v| {
            project(t, t.segment_norm(v[0], &[0, 1, 0, 2, 1], 3)?, 18)
        }),
        case("euclidean_row_norm", vec![g.uniform(4, 3)], |t, v| {
            project(t, t.euclidean_row_norm(v[0]), 19)
        }),
        case("sum", vec![g.uniform(3, 2)], |t, v| Ok(t.sum(v[0]))),
        case("mean", vec![g.uniform(3, 2)], |t, v| Ok(t.mean(v[0]))),
    ];

    cases.push(case("normalize", vec![g.positive(nnz_a, 1)], {
        let loops = adj_loops.clone();
        move |t, v| {
            let adj = normalize(t, &loops, v[0])?;
            project(t, adj.values, 20)
        }
    }));

    let encoder_inputs = vec![
        g.uniform(f, hid),
        g.uniform(hid, c),
        g.uniform(1, hid),
        g.uniform(1, c),
    ];
    let mask_inputs = vec![
        g.uniform(hid, hid),
        g.uniform(1, hid),
        g.uniform(hid, f),
        g.uniform(1, f),
        g.uniform(2 * hid, 1),
        g.uniform(1, 1),
    ];
    let enc_vars = |v: &[Var]| EncoderVars {
        w1: v[0],
        w2: v[1],
        b1: Some(v[2]),
        b2: Some(v[3]),
    };
    let mask_vars = |v: &[Var]| MaskVars {
        mlp_w1: v[0],
        mlp_b1: v[1],
        mlp_w2: v[2],
        mlp_b2: v[3],
        edge_w: v[4],
        edge_b: v[5],
    };
    let const_adj = |t: &Tape<f64>, loops: &SelfLoops, nnz: usize| -> Result<NormalizedAdjacency> {
        normalize(t, loops, t.constant(Array2::ones((nnz, 1))))
    };

    cases.push(case("encode", encoder_inputs.clone(), {
        let (loops, x) = (adj_loops.clone(), x.clone());
        move |t, v| {
            let out = encode(
                t,
                &const_adj(t, &loops, nnz_a)?,
                t.constant(x.clone()),
                &enc_vars(v),
            )?;
            let h = project(t, out.hidden, 21)?;
            t.add(h, project(t, out.logits, 22)?)
        }
    }));
    let hidden_in = g.uniform(n, hid);
    cases.push(case("feature_mask", mask_inputs.clone(), {
        let h = hidden_in.clone();
        move |t, v| {
            project(
                t,
                feature_mask(t, t.constant(h.clone()), &mask_vars(v))?,
                23,
            )
        }
    }));
    cases.push(case("structure_mask", mask_inputs.clone(), {
        let (h, src, tgt) = (hidden_in.clone(), khop_src.clone(), khop_tgt.clone());
        move |t, v| {
            project(
                t,
                structure_mask(t, t.constant(h.clone()), &src, &tgt, &mask_vars(v))?,
                24,
            )
        }
    }));
    cases.push(case(
        "cross_entropy",
        vec![g.uniform(n, c).mapv(|v| v * 2.0)],
        {
            let (labels, train) = (labels.clone(), train.clone());
            move |t, v| cross_entropy(t, v[0], &labels, &train)
        },
    ));
    cases.push(case(
        "subgraph_loss",
        vec![
            g.uniform(6, 1).mapv(|v| 0.5 + 0.4 * v),
            g.uniform(4, 1).mapv(|v| 0.5 + 0.4 * v),
        ],
        |t, v| subgraph_loss(t, v[0], v[1]),
    ));
    cases.push(case(
        "masked_cross_entropy",
        [
            encoder_inputs.clone(),
            vec![g.positive(khop.len(), 1), g.positive(n, f)],
        ]
        .concat(),
        {
            let (loops, x, labels, train) =
                (khop_loops.clone(), x.clone(), labels.clone(), train.clone());
            move |t, v| {
                let masked = t.mul(v[5], t.constant(x.clone()))?;
                masked_cross_entropy(t, &loops, v[4], masked, &enc_vars(v), &labels, &train)
            }
        },
    ));
    cases.push(case(
        "explainable_objective",
        [encoder_inputs.clone(), mask_inputs].concat(),
        {
            let (adj_loops, khop_loops, x, labels, train) = (
                adj_loops.clone(),
                khop_loops.clone(),
                x.clone(),
                labels.clone(),
                train.clone(),
            );
            move |t, v| {
                let enc = enc_vars(&v[..4]);
                let mv = mask_vars(&v[4..]);
                let xc = t.constant(x.clone());
                let out = encode(t, &const_adj(t, &adj_loops, nnz_a)?, xc, &enc)?;
                let xent = cross_entropy(t, out.logits, &labels, &train)?;
                let mf = feature_mask(t, out.hidden, &mv)?;
                let ms = structure_mask(t, out.hidden, &khop_src, &khop_tgt, &mv)?;
                let msneg = structure_mask(t, out.hidden, &neg_src, &neg_tgt, &mv)?;
                let sub = subgraph_loss(t, ms, msneg)?;
                let mx = masked_cross_entropy(
                    t,
                    &khop_loops,
                    ms,
                    t.mul(mf, xc)?,
                    &enc,
                    &labels,
                    &train,
                )?;
                explainable_objective(t, 0.5, xent, sub, Some(mx))
            }
        },
    ));
    let (a, p, q) = (g.uniform(5, 3), g.uniform(5, 3), g.uniform(5, 3));
    cases.push(case("triplet_loss", vec![a, p, q], |t, v| {
        triplet_loss(t, (v[0], v[1], v[2]), &[0, 0, 1, 2, 2], 3, 1.0)
    }));
    cases.push(case(
        "epl_objective",
        vec![g.uniform(n, c), g.uniform(n, c)],
        {
            let (labels, train) = (labels.clone(), train.clone());
            move |t, v| {
                let z = t.add(v[0], v[1])?;
                let anchors = t.gather_rows(z, &[0, 0, 3, 5])?;
                let pos = t.gather_rows(z, &[1, 3, 4, 6])?;
                let neg = t.gather_rows(z, &[5, 6, 1, 2])?;
                let trip = triplet_loss(t, (anchors, pos, neg), &[0, 0, 1, 2], 3, 1.0)?;
                let xent = cross_entropy(t, z, &labels, &train)?;
                epl_objective(t, 0.5, trip, xent)
            }
        },
    ));

    cases
        .into_iter()
        .map(|(name, inputs, f)| check(&name, &inputs, eps, f))
        .collect()
}

/// Fails with the first check above `tolerance`.
pub fn require_all(results: &[CheckResult], tolerance: f64) -> Result<()> {
    match results.iter().find(|r| !r.passes(tolerance)) {
        Some(r) => Err(Error::NonFiniteGradient(format!(
            "gradient check `{}` failed: relative error {:.3e}",
            r.name, r.max_rel_error
        ))),
        None => Ok(()),
    }
}
