//! Trained models, their common prediction surface and portable text form.
//!
//! Forest format:
//!
//! ```text
//! forest v1
//! params <n_trees> <max_features> <min_leaf>
//! seed <u64>
//! oob <accuracy|none>
//! tree <node count>
//! split <feature> <threshold>      (preorder; left subtree follows)
//! leaf <reading count> <video count>
//! ...
//! ```
//!
//! MLP format:
//!
//! ```text
//! mlp v1
//! dims 16 32 1
//! mean <16 values>
//! std <16 values>
//! constant <16 flags 0|1>
//! params <577 values: W1 row-major, b1, w2, b2>
//! ```

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::forest::{train_forest, ForestModel, ForestParams, Node, Tree};
use super::mlp::{train_mlp, MlpModel, MlpParams, N_HIDDEN, N_INPUT, N_PARAMS};
use super::standardize::StandardizerParams;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{ActivityLabel, FeatureRow, N_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rf,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Rf, ModelKind::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Mlp => "mlp",
        }
    }

    /// Column heading used in evaluation tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Rf => "Random Forest",
            ModelKind::Mlp => "Neural Network",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rf" | "forest" | "random_forest" => Ok(ModelKind::Rf),
            "mlp" | "nn" | "neural_network" => Ok(ModelKind::Mlp),
            other => Err(format!("unknown model {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub forest: ForestParams,
    pub mlp: MlpParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: ActivityLabel,
    /// Video-watching share of tree votes, or the network's sigmoid output.
    pub score: f64,
}

pub trait Predictor: Send + Sync {
    fn predict(&self, x: &FeatureRow) -> Prediction;
}

/// Something that can be fit on a training split.
pub trait Classifier: Sync {
    fn name(&self) -> String;
    fn fit(&self, x: &[FeatureRow], y: &[ActivityLabel], seed: u64, exec: Exec) -> Result<Box<dyn Predictor>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Rf(ForestModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Rf(_) => ModelKind::Rf,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            Model::Rf(m) => forest_to_text(m),
            Model::Mlp(m) => mlp_to_text(m),
        }
    }

    pub fn from_text(text: &str) -> Result<Model> {
        let first = text.lines().next().unwrap_or("").trim();
        match first {
            "forest v1" => Ok(Model::Rf(forest_from_text(text)?)),
            "mlp v1" => Ok(Model::Mlp(mlp_from_text(text)?)),
            other => Err(Error::Format { line: 1, message: format!("unknown model header {other:?}") }),
        }
    }
}

impl Predictor for Model {
    fn predict(&self, x: &FeatureRow) -> Prediction {
        match self {
            Model::Rf(m) => {
                let (label, _) = m.predict_votes(x);
                Prediction { label, score: m.video_share(x) }
            }
            Model::Mlp(m) => {
                let score = m.score(x);
                let label = if score > 0.5 { ActivityLabel::VideoWatching } else { ActivityLabel::Reading };
                Prediction { label, score }
            }
        }
    }
}

/// Train a model of the given kind.
pub fn train(kind: ModelKind, cfg: &ModelConfig, x: &[FeatureRow], y: &[ActivityLabel], seed: u64, exec: Exec) -> Result<Model> {
    match kind {
        ModelKind::Rf => Ok(Model::Rf(train_forest(x, y, &cfg.forest, seed, exec)?)),
        ModelKind::Mlp => Ok(Model::Mlp(train_mlp(x, y, &cfg.mlp, seed)?.model)),
    }
}

/// A model kind plus hyperparameters, usable with [`super::evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub kind: ModelKind,
    pub config: ModelConfig,
}

impl Classifier for Learner {
    fn name(&self) -> String {
        self.kind.display_name().to_string()
    }

    fn fit(&self, x: &[FeatureRow], y: &[ActivityLabel], seed: u64, exec: Exec) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(train(self.kind, &self.config, x, y, seed, exec)?))
    }
}

fn join(vals: impl IntoIterator<Item = f64>) -> String {
    vals.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn forest_to_text(m: &ForestModel) -> String {
    let mut s = String::from("forest v1\n");
    let p = &m.params;
    let _ = writeln!(s, "params {} {} {}", p.n_trees, p.max_features, p.min_leaf);
    let _ = writeln!(s, "seed {}", m.seed);
    match m.oob_accuracy {
        Some(a) => writeln!(s, "oob {a}"),
        None => writeln!(s, "oob none"),
    }
    .ok();
    for t in &m.trees {
        let _ = writeln!(s, "tree {}", t.nodes.len());
        for n in &t.nodes {
            match n {
                Node::Split { feature, threshold, .. } => writeln!(s, "split {feature} {threshold}"),
                Node::Leaf { counts } => writeln!(s, "leaf {} {}", counts[0], counts[1]),
            }
            .ok();
        }
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { inner: text.lines().enumerate() }
    }

    /// Next non-blank line split into words, with its 1-based number.
    fn next(&mut self) -> Result<(u64, Vec<&'a str>)> {
        for (i, l) in self.inner.by_ref() {
            if !l.trim().is_empty() {
                return Ok((i as u64 + 1, l.split_whitespace().collect()));
            }
        }
        Err(Error::Format { line: 0, message: "unexpected end of model".into() })
    }

    fn expect(&mut self, key: &str, n: usize) -> Result<(u64, Vec<&'a str>)> {
        let (line, w) = self.next()?;
        if w.first() != Some(&key) || w.len() != n + 1 {
            return Err(Error::Format { line, message: format!("expected {key:?} with {n} values") });
        }
        Ok((line, w[1..].to_vec()))
    }
}

fn parse<T: FromStr>(line: u64, s: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e: T::Err| Error::Format { line, message: format!("{s:?}: {e}") })
}

fn forest_from_text(text: &str) -> Result<ForestModel> {
    let mut lines = Lines::new(text);
    lines.next()?;
    let (l, p) = lines.expect("params", 3)?;
    let params = ForestParams { n_trees: parse(l, p[0])?, max_features: parse(l, p[1])?, min_leaf: parse(l, p[2])? };
    let (l, s) = lines.expect("seed", 1)?;
    let seed = parse(l, s[0])?;
    let (l, o) = lines.expect("oob", 1)?;
    let oob_accuracy = if o[0] == "none" { None } else { Some(parse(l, o[0])?) };

    fn node(lines: &mut Lines, out: &mut Vec<Node>) -> Result<()> {
        let (l, w) = lines.next()?;
        match (w.first().copied(), w.len()) {
            (Some("leaf"), 3) => {
                out.push(Node::Leaf { counts: [parse(l, w[1])?, parse(l, w[2])?] });
                Ok(())
            }
            (Some("split"), 3) => {
                let at = out.len();
                out.push(Node::Split { feature: parse(l, w[1])?, threshold: parse(l, w[2])?, right: 0 });
                node(lines, out)?;
                let right = out.len();
                if let Node::Split { right: slot, .. } = &mut out[at] {
                    *slot = right;
                }
                node(lines, out)
            }
            _ => Err(Error::Format { line: l, message: "expected a split or leaf node".into() }),
        }
    }

    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let (l, c) = lines.expect("tree", 1)?;
        let count: usize = parse(l, c[0])?;
        let mut nodes = Vec::with_capacity(count);
        node(&mut lines, &mut nodes)?;
        if nodes.len() != count {
            return Err(Error::Format { line: l, message: format!("tree declares {count} nodes, found {}", nodes.len()) });
        }
        let tree = Tree { nodes };
        tree.check()?;
        trees.push(tree);
    }
    Ok(ForestModel { trees, params, seed, oob_accuracy })
}

fn mlp_to_text(m: &MlpModel) -> String {
    let sd = &m.standardizer;
    let flags: Vec<&str> = sd.constant.iter().map(|c| if *c { "1" } else { "0" }).collect();
    format!(
        "mlp v1\ndims {N_INPUT} {N_HIDDEN} 1\nmean {}\nstd {}\nconstant {}\nparams {}\n",
        join(sd.mean),
        join(sd.std),
        flags.join(" "),
        join(m.params.iter().copied())
    )
}

fn mlp_from_text(text: &str) -> Result<MlpModel> {
    let mut lines = Lines::new(text);
    lines.next()?;
    let (l, d) = lines.expect("dims", 3)?;
    if d != [N_INPUT.to_string(), N_HIDDEN.to_string(), "1".to_string()] {
        return Err(Error::Format { line: l, message: format!("unsupported dims {}", d.join(" ")) });
    }
    let floats = |l: u64, w: &[&str]| w.iter().map(|s| parse::<f64>(l, s)).collect::<Result<Vec<_>>>();
    let (l, mean) = lines.expect("mean", N_FEATURES)?;
    let mean = floats(l, &mean)?;
    let (l, std) = lines.expect("std", N_FEATURES)?;
    let std = floats(l, &std)?;
    let (l, c) = lines.expect("constant", N_FEATURES)?;
    let constant = c
        .iter()
        .map(|s| match *s {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Format { line: l, message: format!("flag {other:?}") }),
        })
        .collect::<Result<Vec<_>>>()?;
    let (l, p) = lines.expect("params", N_PARAMS)?;
    let params = floats(l, &p)?;
    let m = MlpModel {
        standardizer: StandardizerParams {
            mean: mean.try_into().expect("length checked"),
            std: std.try_into().expect("length checked"),
            constant: constant.try_into().expect("length checked"),
        },
        params,
    };
    m.check()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn data(n: usize) -> (Vec<FeatureRow>, Vec<ActivityLabel>) {
        let mut rng = seed::rng(17);
        let x: Vec<FeatureRow> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-3.0..3.0))).collect();
        let y = x
            .iter()
            .map(|r| if r[2] + 0.3 * r[5] > 0.0 { ActivityLabel::VideoWatching } else { ActivityLabel::Reading })
            .collect();
        (x, y)
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let (x, y) = data(80);
        let cfg = ModelConfig {
            forest: ForestParams { n_trees: 7, ..ForestParams::default() },
            mlp: MlpParams { epochs: 5, ..MlpParams::default() },
        };
        for kind in ModelKind::ALL {
            let m = train(kind, &cfg, &x, &y, 3, Exec::Sequential).unwrap();
            let back = Model::from_text(&m.to_text()).unwrap();
            assert_eq!(back, m);
            for r in &x {
                assert_eq!(back.predict(r).score.to_bits(), m.predict(r).score.to_bits());
            }
        }
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(Model::from_text("svm v1\n").is_err());
        assert!(Model::from_text("forest v1\nparams 1 0 2\nseed 1\noob none\ntree 3\nsplit 2 0.5\nleaf 1 0\n").is_err());
        assert!(Model::from_text("mlp v1\ndims 16 8 1\n").is_err());
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("forest".parse::<ModelKind>().unwrap(), ModelKind::Rf);
        assert_eq!("nn".parse::<ModelKind>().unwrap(), ModelKind::Mlp);
        assert!("svm".parse::<ModelKind>().is_err());
    }
}
