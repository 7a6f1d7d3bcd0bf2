//! Linear classification probes on frozen encoder features, plus the two
//! from-scratch baselines (linear on pixels, encoder + linear on pixels).

use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{ListaEncoder, EncoderGrads};
use crate::numerics::{cast, Matrix, SeededRng};
use crate::optim::{AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub samples_per_class: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub n_classes: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            samples_per_class: 10,
            epochs: 200,
            lr: 1e-3,
            seed: 0,
            n_classes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    /// accuracies as fractions in `[0, 1]`
    pub top1: f64,
    pub top3: f64,
    /// epoch whose parameters were kept (1-based)
    pub selected_epoch: usize,
    /// top-1 of the kept classifier on the validation subset, if one was drawn
    pub val_top1: Option<f64>,
}

/// Softmax classifier `scores = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub w: Matrix<f64>,
    pub b: Array1<f64>,
}

impl LinearClassifier {
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        Self {
            w: Matrix::zeros((n_classes, n_features)),
            b: Array1::zeros(n_classes),
        }
    }

    pub fn scores(&self, x: &Matrix<f64>) -> Matrix<f64> {
        let mut s = self.w.dot(x);
        s += &self.b.view().insert_axis(Axis(1));
        s
    }

    /// Fraction of samples whose label is among the `k` highest scores.
    pub fn accuracy(&self, x: &Matrix<f64>, labels: &[u8], k: usize) -> f64 {
        top_k_accuracy(&self.scores(x), labels, k)
    }
}

pub fn top_k_accuracy(scores: &Matrix<f64>, labels: &[u8], k: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = scores
        .axis_iter(Axis(1))
        .zip(labels)
        .filter(|(col, &y)| {
            let sy = col[y as usize];
            let rank = col
                .iter()
                .enumerate()
                .filter(|&(c, &s)| s > sy || (s == sy && c < y as usize))
                .count();
            rank < k
        })
        .count();
    hits as f64 / labels.len() as f64
}

/// Mean cross-entropy and its gradient with respect to the scores.
fn softmax_ce(scores: &Matrix<f64>, labels: &[u8]) -> (f64, Matrix<f64>) {
    let n = labels.len() as f64;
    let mut g = scores.clone();
    let mut loss = 0.0;
    for (mut col, &y) in g.axis_iter_mut(Axis(1)).zip(labels) {
        let m = col.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        col.mapv_inplace(|v| (v - m).exp());
        let z = col.sum();
        col /= z;
        loss -= col[y as usize].ln();
        col[y as usize] -= 1.0;
        col /= n;
    }
    (loss / n, g)
}

/// Exactly `per_class` indices of each class `0..n_classes`, shuffled.
pub fn stratified_subset(labels: &[u8], per_class: usize, n_classes: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(per_class * n_classes);
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] as usize == c).collect();
        if idx.is_empty() {
            return Err(Error::Data(format!("class {c} has no samples")));
        }
        if idx.len() < per_class {
            return Err(Error::Data(format!(
                "class {c} has {} samples, {per_class} requested",
                idx.len()
            )));
        }
        idx.shuffle(rng);
        out.extend_from_slice(&idx[..per_class]);
    }
    out.shuffle(rng);
    Ok(out)
}

/// Full-batch Adam on the softmax cross-entropy. With a validation set the
/// parameters of the epoch with the best validation top-1 accuracy are kept,
/// otherwise those of the last epoch.
pub fn train_classifier(
    x: &Matrix<f64>,
    labels: &[u8],
    val: Option<(&Matrix<f64>, &[u8])>,
    cfg: &ProbeConfig,
) -> (LinearClassifier, usize) {
    let mut clf = LinearClassifier::zeros(cfg.n_classes, x.nrows());
    let mut adam = AdamState::<f64>::new(AdamConfig {
        lr: cfg.lr,
        ..Default::default()
    });
    let mut best = (clf.clone(), cfg.epochs, f64::NEG_INFINITY);
    for epoch in 1..=cfg.epochs {
        let (_, g) = softmax_ce(&clf.scores(x), labels);
        let gw = g.dot(&x.t());
        let gb = g.sum_axis(Axis(1));
        adam.step(
            vec![
                ("w", clf.w.as_slice_mut().expect("contiguous")),
                ("b", clf.b.as_slice_mut().expect("contiguous")),
            ],
            &[("w", gw.as_slice().expect("contiguous")), ("b", gb.as_slice().expect("contiguous"))],
        )
        .expect("shapes fixed");
        if let Some((vx, vy)) = val {
            let acc = clf.accuracy(vx, vy, 1);
            if acc > best.2 {
                best = (clf.clone(), epoch, acc);
            }
        }
    }
    match val {
        Some(_) if cfg.epochs > 0 => (best.0, best.1),
        _ => (clf, cfg.epochs),
    }
}

struct Split {
    x: Matrix<f64>,
    y: Vec<u8>,
}

fn labels_of(ds: &Dataset) -> Result<&[u8]> {
    ds.labels
        .as_deref()
        .ok_or_else(|| Error::Data(format!("dataset {} has no labels", ds.source)))
}

/// Stratified training subset and, when at least two samples per class are
/// used, an equally sized stratified validation subset from `val`.
fn draw_splits(train: &Dataset, val: Option<&Dataset>, cfg: &ProbeConfig) -> Result<(Split, Option<Split>)> {
    let mut rng = SeededRng::substream(cfg.seed, "probe");
    let idx = stratified_subset(labels_of(train)?, cfg.samples_per_class, cfg.n_classes, &mut rng)?;
    let tr = train.subset(&idx);
    let tr = Split {
        x: cast(tr.samples.view()),
        y: tr.labels.expect("labelled"),
    };
    let va = match val {
        Some(v) if cfg.samples_per_class >= 2 => {
            let idx = stratified_subset(labels_of(v)?, cfg.samples_per_class, cfg.n_classes, &mut rng)?;
            let v = v.subset(&idx);
            Some(Split {
                x: cast(v.samples.view()),
                y: v.labels.expect("labelled"),
            })
        }
        _ => None,
    };
    Ok((tr, va))
}

fn score(clf: &LinearClassifier, x: &Matrix<f64>, y: &[u8], epoch: usize, val: Option<(&Matrix<f64>, &[u8])>) -> ProbeResult {
    ProbeResult {
        top1: clf.accuracy(x, y, 1),
        top3: clf.accuracy(x, y, 3),
        selected_epoch: epoch,
        val_top1: val.map(|(vx, vy)| clf.accuracy(vx, vy, 1)),
    }
}

fn features(enc: &ListaEncoder<f32>, x: &Matrix<f32>) -> Result<Matrix<f64>> {
    Ok(cast(enc.encode(x)?.view()))
}

/// Linear classifier on the outputs of a frozen encoder.
pub fn probe(
    encoder: &ListaEncoder<f32>,
    train: &Dataset,
    val: Option<&Dataset>,
    test: &Dataset,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    let (tr, va) = draw_splits(train, val, cfg)?;
    let ftr = features(encoder, &tr.x.mapv(|v| v as f32))?;
    let fva = va
        .as_ref()
        .map(|v| features(encoder, &v.x.mapv(|x| x as f32)))
        .transpose()?;
    let fval = fva.as_ref().zip(va.as_ref().map(|v| v.y.as_slice()));
    let (clf, epoch) = train_classifier(&ftr, &tr.y, fval, cfg);
    let fte = features(encoder, &test.samples)?;
    Ok(score(&clf, &fte, labels_of(test)?, epoch, fval))
}

/// Baseline: linear classifier directly on the inputs.
pub fn probe_linear_on_raw(train: &Dataset, val: Option<&Dataset>, test: &Dataset, cfg: &ProbeConfig) -> Result<ProbeResult> {
    let (tr, va) = draw_splits(train, val, cfg)?;
    let val = va.as_ref().map(|v| (&v.x, v.y.as_slice()));
    let (clf, epoch) = train_classifier(&tr.x, &tr.y, val, cfg);
    Ok(score(&clf, &cast(test.samples.view()), labels_of(test)?, epoch, val))
}

/// Baseline: a freshly initialized encoder and a linear classifier trained
/// jointly from scratch under the same budget.
pub fn probe_lista_on_raw(
    train: &Dataset,
    val: Option<&Dataset>,
    test: &Dataset,
    cfg: &ProbeConfig,
    latent_dim: usize,
    lista_iters: usize,
) -> Result<ProbeResult> {
    let (tr, va) = draw_splits(train, val, cfg)?;
    let mut enc = ListaEncoder::<f64>::random(tr.x.nrows(), latent_dim, lista_iters, &mut SeededRng::substream(cfg.seed, "init"));
    let mut clf = LinearClassifier::zeros(cfg.n_classes, latent_dim);
    let mut adam = AdamState::<f64>::new(AdamConfig {
        lr: cfg.lr,
        ..Default::default()
    });
    let mut best: Option<(ListaEncoder<f64>, LinearClassifier, usize, f64)> = None;
    for epoch in 1..=cfg.epochs {
        let cache = enc.forward(&tr.x)?;
        let (_, g) = softmax_ce(&clf.scores(cache.output()), &tr.y);
        let gw = g.dot(&cache.output().t());
        let gb = g.sum_axis(Axis(1));
        let gfeat = clf.w.t().dot(&g);
        let ge: EncoderGrads<f64> = enc.backward(&tr.x, &cache, &gfeat)?;
        let mut params = enc.params_mut();
        params.push(("clf.w", clf.w.as_slice_mut().expect("contiguous")));
        params.push(("clf.b", clf.b.as_slice_mut().expect("contiguous")));
        let mut grads = ge.named();
        grads.push(("clf.w", gw.as_slice().expect("contiguous")));
        grads.push(("clf.b", gb.as_slice().expect("contiguous")));
        adam.step(params, &grads)?;
        if let Some(v) = &va {
            let acc = clf.accuracy(&enc.encode(&v.x)?, &v.y, 1);
            if best.as_ref().is_none_or(|b| acc > b.3) {
                best = Some((enc.clone(), clf.clone(), epoch, acc));
            }
        }
    }
    let (enc, clf, epoch) = match best {
        Some((e, c, ep, _)) => (e, c, ep),
        None => (enc, clf, cfg.epochs),
    };
    let fte = enc.encode(&cast(test.samples.view()))?;
    let fva = va.as_ref().map(|v| enc.encode(&v.x)).transpose()?;
    let val = fva.as_ref().zip(va.as_ref().map(|v| v.y.as_slice()));
    Ok(score(&clf, &fte, labels_of(test)?, epoch, val))
}
