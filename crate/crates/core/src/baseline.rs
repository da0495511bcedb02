//! Multinomial logistic regression over word-pair features.
//!
//! A small probe that checks sampled pairs carry learnable signal. Features
//! are structural (offset, tree distance, direction, POS pair, word lengths)
//! and never include the dependency label itself.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deptree::{CharSpan, DepTree, TokenId};
use crate::sampler::PairExample;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("span {0:?} does not match a token of the sentence")]
    UnresolvedSpan(CharSpan),
    #[error("example text does not match the tree text")]
    TextMismatch,
    #[error("training data has {0} class(es); at least 2 are needed")]
    TooFewClasses(usize),
    #[error("{examples} examples but {labels} labels")]
    LengthMismatch { examples: usize, labels: usize },
    #[error("feature dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("learning rate must be positive and finite, got {0}")]
    BadLearningRate(f64),
}

/// Number of dense features before the POS-pair one-hot block.
const DENSE: usize = 5;

/// POS-pair buckets, most frequent first, plus a trailing out-of-vocabulary
/// bucket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pairs: Vec<String>,
}

impl Vocab {
    /// Keeps the `cap` most frequent keys; ties go to the smaller key.
    pub fn build<I: IntoIterator<Item = String>>(keys: I, cap: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for k in keys {
            *counts.entry(k).or_default() += 1;
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Vocab { pairs: ranked.into_iter().take(cap).map(|(k, _)| k).collect() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Length of feature vectors built with this vocabulary.
    pub fn dim(&self) -> usize {
        DENSE + self.pairs.len() + 1
    }

    fn bucket(&self, key: &str) -> usize {
        self.pairs.iter().position(|p| p == key).unwrap_or(self.pairs.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

fn resolve(t: &DepTree, span: CharSpan) -> Result<TokenId, BaselineError> {
    t.tokens()
        .iter()
        .find(|tok| tok.char_span == span)
        .map(|tok| tok.index)
        .ok_or(BaselineError::UnresolvedSpan(span))
}

/// POS-pair key of an example, the unit the vocabulary counts.
pub fn pos_pair_key(ex: &PairExample, t: &DepTree) -> Result<String, BaselineError> {
    let (i, j) = (resolve(t, ex.span_i)?, resolve(t, ex.span_j)?);
    Ok(format!("{}|{}", t.tokens()[i - 1].upos, t.tokens()[j - 1].upos))
}

/// `[j - i, distance, head(i) = j, len(i), len(j), one-hot POS pair...]`.
pub fn featurize(ex: &PairExample, t: &DepTree, vocab: &Vocab) -> Result<FeatureVector, BaselineError> {
    if ex.text != t.text() {
        return Err(BaselineError::TextMismatch);
    }
    let (i, j) = (resolve(t, ex.span_i)?, resolve(t, ex.span_j)?);
    let (ti, tj) = (&t.tokens()[i - 1], &t.tokens()[j - 1]);
    let mut v = vec![0.0; vocab.dim()];
    v[0] = j as f64 - i as f64;
    v[1] = t.distance(i, j).expect("resolved tokens") as f64;
    v[2] = f64::from(u8::from(ti.head == j));
    v[3] = ti.form.chars().count() as f64;
    v[4] = tj.form.chars().count() as f64;
    v[DENSE + vocab.bucket(&format!("{}|{}", ti.upos, tj.upos))] = 1.0;
    Ok(FeatureVector(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub classes: Vec<String>,
    pub dim: usize,
    /// Row-major `classes x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Per-feature standardisation fitted on the training set.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub l2: f64,
}

impl LinearModel {
    pub fn zeros(classes: Vec<String>, dim: usize, l2: f64) -> Self {
        let k = classes.len();
        LinearModel {
            classes,
            dim,
            weights: vec![0.0; k * dim],
            bias: vec![0.0; k],
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            l2,
        }
    }

    fn check(&self, fv: &FeatureVector) -> Result<(), BaselineError> {
        if fv.0.len() == self.dim {
            Ok(())
        } else {
            Err(BaselineError::DimensionMismatch { expected: self.dim, got: fv.0.len() })
        }
    }

    fn standardise(&self, fv: &FeatureVector) -> Vec<f64> {
        fv.0.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes.len())
            .map(|c| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Most probable class (lowest index on ties) and the class probabilities.
pub fn predict(m: &LinearModel, fv: &FeatureVector) -> Result<(String, Vec<f64>), BaselineError> {
    m.check(fv)?;
    let probs = softmax(&m.scores(&m.standardise(fv)));
    let mut best = 0;
    for (c, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = c;
        }
    }
    Ok((m.classes[best].clone(), probs))
}

/// Mean cross-entropy plus `l2 / 2 * |W|^2` over standardised inputs.
fn objective(m: &LinearModel, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let ce: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let s = m.scores(x);
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - s[y]
        })
        .sum();
    ce / xs.len() as f64 + 0.5 * m.l2 * m.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`objective`]: weights row-major, then biases.
fn gradient(m: &LinearModel, xs: &[Vec<f64>], ys: &[usize]) -> Vec<f64> {
    let (k, d) = (m.classes.len(), m.dim);
    let mut g = vec![0.0; k * d + k];
    for (x, &y) in xs.iter().zip(ys) {
        let p = softmax(&m.scores(x));
        for c in 0..k {
            let delta = p[c] - f64::from(u8::from(c == y));
            for (f, v) in x.iter().enumerate() {
                g[c * d + f] += delta * v;
            }
            g[k * d + c] += delta;
        }
    }
    let n = xs.len() as f64;
    for (idx, gi) in g.iter_mut().enumerate() {
        *gi /= n;
        if idx < k * d {
            *gi += m.l2 * m.weights[idx];
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 0.1, epochs: 30, batch: 32, l2: 1e-4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub model: LinearModel,
    /// Objective on the whole training set before training and after each
    /// epoch.
    pub losses: Vec<f64>,
}

/// Mini-batch gradient descent from zero weights. The seed only orders the
/// batches.
pub fn train(xs: &[FeatureVector], labels: &[String], cfg: &TrainConfig) -> Result<TrainOutput, BaselineError> {
    if xs.len() != labels.len() {
        return Err(BaselineError::LengthMismatch { examples: xs.len(), labels: labels.len() });
    }
    if cfg.batch == 0 {
        return Err(BaselineError::ZeroBatch);
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(BaselineError::BadLearningRate(cfg.lr));
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(BaselineError::TooFewClasses(classes.len()));
    }
    let dim = xs[0].0.len();
    let mut model = LinearModel::zeros(classes, dim, cfg.l2);
    for fv in xs {
        model.check(fv)?;
    }

    let n = xs.len() as f64;
    for f in 0..dim {
        let mean = xs.iter().map(|x| x.0[f]).sum::<f64>() / n;
        let var = xs.iter().map(|x| (x.0[f] - mean).powi(2)).sum::<f64>() / n;
        model.mean[f] = mean;
        model.scale[f] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let zs: Vec<Vec<f64>> = xs.iter().map(|x| model.standardise(x)).collect();
    let ys: Vec<usize> = labels
        .iter()
        .map(|l| model.classes.binary_search(l).expect("label in class list"))
        .collect();

    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..zs.len()).collect();
    let mut losses = vec![objective(&model, &zs, &ys)];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| zs[i].clone()).collect();
            let by: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
            let g = gradient(&model, &bx, &by);
            let kd = model.weights.len();
            for (w, gi) in model.weights.iter_mut().zip(&g[..kd]) {
                *w -= cfg.lr * gi;
            }
            for (b, gi) in model.bias.iter_mut().zip(&g[kd..]) {
                *b -= cfg.lr * gi;
            }
        }
        let loss = objective(&model, &zs, &ys);
        if !loss.is_finite() {
            return Err(BaselineError::Diverged { epoch });
        }
        losses.push(loss);
    }
    Ok(TrainOutput { model, losses })
}

fn prepare(m: &LinearModel, batch: &[(FeatureVector, usize)]) -> Result<(Vec<Vec<f64>>, Vec<usize>), BaselineError> {
    for (fv, _) in batch {
        m.check(fv)?;
    }
    Ok((batch.iter().map(|(fv, _)| m.standardise(fv)).collect(), batch.iter().map(|(_, y)| *y).collect()))
}

/// Analytic gradient of the training objective on `batch` (class indices).
pub fn analytic_gradient(m: &LinearModel, batch: &[(FeatureVector, usize)]) -> Result<Vec<f64>, BaselineError> {
    let (xs, ys) = prepare(m, batch)?;
    Ok(gradient(m, &xs, &ys))
}

/// Central finite differences of the training objective.
pub fn numeric_gradient(
    m: &LinearModel,
    batch: &[(FeatureVector, usize)],
    epsilon: f64,
) -> Result<Vec<f64>, BaselineError> {
    let (xs, ys) = prepare(m, batch)?;
    let mut probe = m.clone();
    let count = m.weights.len() + m.bias.len();
    Ok((0..count)
        .map(|idx| {
            let orig = *param_mut(&mut probe, idx);
            *param_mut(&mut probe, idx) = orig + epsilon;
            let up = objective(&probe, &xs, &ys);
            *param_mut(&mut probe, idx) = orig - epsilon;
            let down = objective(&probe, &xs, &ys);
            *param_mut(&mut probe, idx) = orig;
            (up - down) / (2.0 * epsilon)
        })
        .collect())
}

/// Parameter `idx` in gradient order: weights, then biases.
fn param_mut(m: &mut LinearModel, idx: usize) -> &mut f64 {
    let kd = m.weights.len();
    if idx < kd {
        &mut m.weights[idx]
    } else {
        &mut m.bias[idx - kd]
    }
}

/// `max |a - n| / max(|a| + |n|, 1e-6)` over all entries. The floor keeps
/// finite-difference round-off on zero entries from dominating.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

pub fn grad_check(m: &LinearModel, batch: &[(FeatureVector, usize)], epsilon: f64) -> Result<f64, BaselineError> {
    let a = analytic_gradient(m, batch)?;
    let n = numeric_gradient(m, batch, epsilon)?;
    Ok(max_relative_error(&a, &n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub task: String,
    pub label: String,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Accuracy per `(task, gold label)`, sorted by task then label.
pub fn accuracy_report(
    m: &LinearModel,
    xs: &[FeatureVector],
    labels: &[String],
    task: &str,
) -> Result<Vec<AccuracyRow>, BaselineError> {
    if xs.len() != labels.len() {
        return Err(BaselineError::LengthMismatch { examples: xs.len(), labels: labels.len() });
    }
    let predicted: Vec<String> =
        xs.par_iter().map(|x| predict(m, x).map(|p| p.0)).collect::<Result<_, _>>()?;
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (gold, pred) in labels.iter().zip(&predicted) {
        let e = tally.entry(gold).or_default();
        e.0 += 1;
        e.1 += usize::from(gold == pred);
    }
    Ok(tally
        .into_iter()
        .map(|(label, (count, correct))| AccuracyRow {
            task: task.to_string(),
            label: label.to_string(),
            count,
            correct,
            accuracy: correct as f64 / count as f64,
        })
        .collect())
}

pub fn write_accuracy_tsv<W: Write>(rows: &[AccuracyRow], mut out: W) -> io::Result<()> {
    writeln!(out, "task\tlabel\tcount\tcorrect\taccuracy")?;
    for r in rows {
        writeln!(out, "{}\t{}\t{}\t{}\t{:.4}", r.task, r.label, r.count, r.correct, r.accuracy)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deptree::Token;
    use crate::sampler::Task;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> DepTree {
        let tokens = vec![
            Token::new("全厂", "NOUN", "n", 2, "ATT"),
            Token::new("职工", "NOUN", "n", 3, "SBV"),
            Token::new("听取", "VERB", "v", 0, "HED"),
            Token::new("报告", "NOUN", "n", 3, "VOB"),
        ];
        DepTree::from_tokens(Vec::new(), tokens).unwrap()
    }

    fn ex(t: &DepTree, i: usize, j: usize, label: &str) -> PairExample {
        PairExample {
            text: t.text().to_string(),
            span_i: t.tokens()[i - 1].char_span,
            span_j: t.tokens()[j - 1].char_span,
            task: Task::Dsp,
            label: label.to_string(),
            source_id: "1".to_string(),
        }
    }

    #[test]
    fn features_by_hand() {
        let t = fixture();
        let vocab = Vocab::build(["NOUN|NOUN".to_string(), "NOUN|VERB".into(), "NOUN|NOUN".into()], 8);
        assert_eq!(vocab.dim(), 5 + 2 + 1);
        let fv = featurize(&ex(&t, 1, 2, "child"), &t, &vocab).unwrap();
        assert_eq!(fv.0, vec![1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 0.0, 0.0]);
        let fv = featurize(&ex(&t, 1, 4, "others"), &t, &vocab).unwrap();
        assert_eq!(fv.0, vec![3.0, 3.0, 0.0, 2.0, 2.0, 1.0, 0.0, 0.0]);
        let fv = featurize(&ex(&t, 3, 1, "others"), &t, &vocab).unwrap();
        assert_eq!(fv.0, vec![-2.0, 2.0, 0.0, 2.0, 2.0, 0.0, 0.0, 1.0]);

        let mut bad = ex(&t, 1, 2, "child");
        bad.span_i = (1, 3);
        assert_eq!(featurize(&bad, &t, &vocab), Err(BaselineError::UnresolvedSpan((1, 3))));
    }

    #[test]
    fn vocab_cap_and_ties() {
        let v = Vocab::build(["b", "a", "c", "c"].map(String::from), 2);
        assert_eq!(v.pairs, vec!["c".to_string(), "a".to_string()]);
    }

    #[test]
    fn softmax_by_hand_and_shift() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        for (k, v) in p.iter().enumerate() {
            assert!((v - ((k + 1) as f64).exp() / z).abs() < 1e-12);
        }
        let q = softmax(&[101.0, 102.0, 103.0]);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_model_is_uniform_and_tie_breaks_low() {
        let m = LinearModel::zeros(vec!["a".into(), "b".into(), "c".into()], 3, 0.0);
        let (label, probs) = predict(&m, &FeatureVector(vec![1.0, -2.0, 0.5])).unwrap();
        assert_eq!(label, "a");
        assert!(probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
        assert_eq!(
            predict(&m, &FeatureVector(vec![1.0])),
            Err(BaselineError::DimensionMismatch { expected: 3, got: 1 })
        );
    }

    fn separable(n: usize, seed: u64) -> (Vec<FeatureVector>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let dir = rng.gen_bool(0.5);
            let v = vec![rng.gen_range(-5.0..5.0), f64::from(u8::from(dir)), rng.gen_range(1.0..4.0), rng.gen_range(0.0..1.0)];
            xs.push(FeatureVector(v));
            ys.push(if dir { "child".to_string() } else { "parent".to_string() });
        }
        (xs, ys)
    }

    #[test]
    fn training_contract() {
        let (xs, ys) = separable(300, 1);
        let cfg = TrainConfig { lr: 0.5, epochs: 20, batch: 16, l2: 1e-4, seed: 7 };
        let out = train(&xs, &ys, &cfg).unwrap();
        assert!(out.losses.last().unwrap() <= &out.losses[0]);
        let correct = xs.iter().zip(&ys).filter(|(x, y)| &predict(&out.model, x).unwrap().0 == *y).count();
        assert!(correct as f64 / xs.len() as f64 >= 0.99);
        assert_eq!(out, train(&xs, &ys, &cfg).unwrap());

        let zero = train(&xs, &ys, &TrainConfig { epochs: 0, ..cfg }).unwrap();
        assert!(zero.model.weights.iter().all(|&w| w == 0.0));
        assert_eq!(zero.losses.len(), 1);

        let one = vec!["child".to_string(); xs.len()];
        assert_eq!(train(&xs, &one, &cfg), Err(BaselineError::TooFewClasses(1)));
    }

    #[test]
    fn full_batch_loss_is_non_increasing() {
        let (xs, ys) = separable(120, 3);
        let cfg = TrainConfig { lr: 1e-2, epochs: 40, batch: xs.len(), l2: 1e-4, seed: 0 };
        let out = train(&xs, &ys, &cfg).unwrap();
        for w in out.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn divergence_names_epoch() {
        let xs = vec![FeatureVector(vec![1.0]), FeatureVector(vec![-1.0])];
        let ys = vec!["a".to_string(), "b".to_string()];
        let cfg = TrainConfig { lr: 1e308, epochs: 5, batch: 1, l2: 1.0, seed: 0 };
        assert!(matches!(train(&xs, &ys, &cfg), Err(BaselineError::Diverged { epoch: 1 })));
    }

    #[test]
    fn gradient_check() {
        let (xs, ys) = separable(40, 5);
        let trained = train(&xs, &ys, &TrainConfig { epochs: 3, ..TrainConfig::default() }).unwrap().model;
        let batch: Vec<(FeatureVector, usize)> =
            xs.iter().cloned().zip(ys.iter().map(|y| usize::from(y == "parent"))).take(12).collect();
        assert!(grad_check(&trained, &batch, 1e-5).unwrap() < 1e-4);

        let zero = LinearModel::zeros(trained.classes.clone(), trained.dim, 1e-4);
        let a = analytic_gradient(&zero, &batch).unwrap();
        assert!(a.iter().all(|g| g.is_finite()));
        assert!(grad_check(&zero, &batch, 1e-5).unwrap() < 1e-4);

        let mut broken = analytic_gradient(&trained, &batch).unwrap();
        broken[0] += 1.0;
        let n = numeric_gradient(&trained, &batch, 1e-5).unwrap();
        assert!(max_relative_error(&broken, &n) > 1e-4);
    }

    #[test]
    fn accuracy_tsv() {
        let m = LinearModel::zeros(vec!["child".into(), "parent".into()], 1, 0.0);
        let xs = vec![FeatureVector(vec![0.0]); 3];
        let ys = vec!["child".to_string(), "parent".into(), "child".into()];
        let rows = accuracy_report(&m, &xs, &ys, "DSP").unwrap();
        let mut buf = Vec::new();
        write_accuracy_tsv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "task\tlabel\tcount\tcorrect\taccuracy\nDSP\tchild\t2\t2\t1.0000\nDSP\tparent\t1\t0\t0.0000\n"
        );
    }
}
