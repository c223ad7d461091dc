//! Data hyper-cleaning over a synthetic labeled dataset.
//!
//! A fraction of training labels is corrupted; the upper variable is one
//! weight per training sample, squashed through a sigmoid and multiplied into
//! that sample's loss term, so the outer problem learns to down-weight bad
//! labels. The lower variable parameterizes a softmax classifier: a linear
//! model, or a two-layer tanh perceptron when `n_hidden > 0` (the non-convex
//! variant). Gaussian class blobs replace any real dataset so the whole
//! problem runs at desk scale with no data dependencies.

use super::BilevelProblem;
use crate::boxset::BoxSet;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::vector::Vector;

const CLASS_MEAN_SCALE: f64 = 3.0;
const BOUND: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct HypercleanConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub corrupt_fraction: f64,
    /// 0 selects the linear softmax classifier; > 0 a two-layer perceptron.
    pub n_hidden: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SyntheticHyperclean {
    cfg: HypercleanConfig,
    train: Dataset,
    val: Dataset,
    upper_box: BoxSet,
    lower_box: BoxSet,
}

pub fn synthetic_hyperclean(cfg: &HypercleanConfig) -> Result<SyntheticHyperclean> {
    if cfg.n_train == 0 || cfg.n_val == 0 || cfg.n_features == 0 || cfg.n_classes < 2 {
        return Err(Error::invalid(
            "dimensions must be positive and n_classes at least 2",
        ));
    }
    if cfg.n_classes > cfg.n_features {
        return Err(Error::invalid(
            "class means sit on a scaled simplex: n_classes must not exceed n_features",
        ));
    }
    if !(0.0..1.0).contains(&cfg.corrupt_fraction) {
        return Err(Error::invalid("corrupt_fraction must lie in [0, 1)"));
    }

    let mut rng = SplitMix64::new(cfg.seed);
    let train = generate_split(cfg, cfg.n_train, &mut rng);
    let val = generate_split(cfg, cfg.n_val, &mut rng);

    let mut train = train;
    let n_corrupt = (cfg.corrupt_fraction * cfg.n_train as f64).floor() as usize;
    let mut indices: Vec<usize> = (0..cfg.n_train).collect();
    // Fisher-Yates prefix selects the corrupted samples
    for i in 0..n_corrupt.min(cfg.n_train) {
        let j = i + rng.uniform_usize(cfg.n_train - i);
        indices.swap(i, j);
    }
    for &i in indices.iter().take(n_corrupt) {
        let old = train.labels[i];
        let shift = 1 + rng.uniform_usize(cfg.n_classes - 1);
        train.labels[i] = (old + shift) % cfg.n_classes;
    }

    let m = param_count(cfg);
    Ok(SyntheticHyperclean {
        upper_box: BoxSet::symmetric(cfg.n_train, BOUND),
        lower_box: BoxSet::symmetric(m, BOUND),
        cfg: cfg.clone(),
        train,
        val,
    })
}

fn generate_split(cfg: &HypercleanConfig, count: usize, rng: &mut SplitMix64) -> Dataset {
    let mut features = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % cfg.n_classes;
        let mut u = vec![0.0; cfg.n_features];
        u[label] = CLASS_MEAN_SCALE;
        for v in u.iter_mut() {
            *v += rng.normal();
        }
        features.push(u);
        labels.push(label);
    }
    Dataset { features, labels }
}

fn param_count(cfg: &HypercleanConfig) -> usize {
    let (d, c, h) = (cfg.n_features, cfg.n_classes, cfg.n_hidden);
    if h == 0 {
        c * d + c
    } else {
        h * d + h + c * h + c
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Stable log-softmax cross-entropy; returns the loss and dℓ/dlogits.
fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut dz: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    dz[label] -= 1.0;
    (loss, dz)
}

impl SyntheticHyperclean {
    pub fn config(&self) -> &HypercleanConfig {
        &self.cfg
    }

    pub fn train_features(&self) -> &[Vec<f64>] {
        &self.train.features
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.train.labels
    }

    /// Per-sample loss and gradient w.r.t. the classifier parameters.
    fn sample_loss_grad(&self, params: &[f64], u: &[f64], label: usize) -> (f64, Vec<f64>) {
        let (d, c, h) = (self.cfg.n_features, self.cfg.n_classes, self.cfg.n_hidden);
        let mut grad = vec![0.0; params.len()];
        if h == 0 {
            let (w, b) = params.split_at(c * d);
            let logits: Vec<f64> = (0..c)
                .map(|k| {
                    b[k] + w[k * d..(k + 1) * d]
                        .iter()
                        .zip(u.iter())
                        .map(|(a, x)| a * x)
                        .sum::<f64>()
                })
                .collect();
            let (loss, dz) = cross_entropy(&logits, label);
            let (gw, gb) = grad.split_at_mut(c * d);
            for k in 0..c {
                for j in 0..d {
                    gw[k * d + j] = dz[k] * u[j];
                }
                gb[k] = dz[k];
            }
            (loss, grad)
        } else {
            let (w1, rest) = params.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(c * h);

            let a1: Vec<f64> = (0..h)
                .map(|k| {
                    b1[k] + w1[k * d..(k + 1) * d]
                        .iter()
                        .zip(u.iter())
                        .map(|(a, x)| a * x)
                        .sum::<f64>()
                })
                .collect();
            let hid: Vec<f64> = a1.iter().map(|a| a.tanh()).collect();
            let logits: Vec<f64> = (0..c)
                .map(|k| {
                    b2[k] + w2[k * h..(k + 1) * h]
                        .iter()
                        .zip(hid.iter())
                        .map(|(a, x)| a * x)
                        .sum::<f64>()
                })
                .collect();
            let (loss, dz) = cross_entropy(&logits, label);

            let mut dh = vec![0.0; h];
            for k in 0..c {
                for j in 0..h {
                    dh[j] += w2[k * h + j] * dz[k];
                }
            }
            let da1: Vec<f64> = dh
                .iter()
                .zip(hid.iter())
                .map(|(g, t)| g * (1.0 - t * t))
                .collect();

            let (gw1, grest) = grad.split_at_mut(h * d);
            let (gb1, grest) = grest.split_at_mut(h);
            let (gw2, gb2) = grest.split_at_mut(c * h);
            for k in 0..h {
                for j in 0..d {
                    gw1[k * d + j] = da1[k] * u[j];
                }
                gb1[k] = da1[k];
            }
            for k in 0..c {
                for j in 0..h {
                    gw2[k * h + j] = dz[k] * hid[j];
                }
                gb2[k] = dz[k];
            }
            (loss, grad)
        }
    }

    fn sample_loss(&self, params: &[f64], u: &[f64], label: usize) -> f64 {
        self.sample_loss_grad(params, u, label).0
    }
}

impl BilevelProblem for SyntheticHyperclean {
    fn name(&self) -> &'static str {
        "synthetic-hyperclean"
    }

    fn upper_dim(&self) -> usize {
        self.cfg.n_train
    }

    fn lower_dim(&self) -> usize {
        param_count(&self.cfg)
    }

    fn upper_box(&self) -> &BoxSet {
        &self.upper_box
    }

    fn lower_box(&self) -> &BoxSet {
        &self.lower_box
    }

    fn upper_objective(&self, _x: &Vector, y: &Vector) -> f64 {
        self.val
            .features
            .iter()
            .zip(self.val.labels.iter())
            .map(|(u, &v)| self.sample_loss(y.as_slice(), u, v))
            .sum()
    }

    fn lower_objective(&self, x: &Vector, y: &Vector) -> f64 {
        self.train
            .features
            .iter()
            .zip(self.train.labels.iter())
            .enumerate()
            .map(|(i, (u, &v))| sigmoid(x[i]) * self.sample_loss(y.as_slice(), u, v))
            .sum()
    }

    fn grad_x_upper(&self, x: &Vector, _y: &Vector) -> Vector {
        // the validation loss does not touch the sample weights
        Vector::zeros(x.dim())
    }

    fn grad_y_upper(&self, _x: &Vector, y: &Vector) -> Vector {
        let mut acc = vec![0.0; y.dim()];
        for (u, &v) in self.val.features.iter().zip(self.val.labels.iter()) {
            let (_, g) = self.sample_loss_grad(y.as_slice(), u, v);
            for (a, b) in acc.iter_mut().zip(g.iter()) {
                *a += b;
            }
        }
        Vector::from_raw(acc)
    }

    fn grad_y_lower(&self, x: &Vector, y: &Vector) -> Vector {
        let mut acc = vec![0.0; y.dim()];
        for (i, (u, &v)) in self
            .train
            .features
            .iter()
            .zip(self.train.labels.iter())
            .enumerate()
        {
            let w = sigmoid(x[i]);
            let (_, g) = self.sample_loss_grad(y.as_slice(), u, v);
            for (a, b) in acc.iter_mut().zip(g.iter()) {
                *a += w * b;
            }
        }
        Vector::from_raw(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(hidden: usize) -> HypercleanConfig {
        HypercleanConfig {
            n_train: 9,
            n_val: 6,
            n_features: 4,
            n_classes: 3,
            corrupt_fraction: 0.3,
            n_hidden: hidden,
            seed: 42,
        }
    }

    #[test]
    fn zero_weights_halve_the_unweighted_loss() {
        let p = synthetic_hyperclean(&small_cfg(0)).unwrap();
        let x = Vector::zeros(9);
        let y = Vector::from_fn(p.lower_dim(), |i| 0.01 * (i as f64 + 1.0));
        let unweighted: f64 = p
            .train
            .features
            .iter()
            .zip(p.train.labels.iter())
            .map(|(u, &v)| p.sample_loss(y.as_slice(), u, v))
            .sum();
        let f = p.lower_objective(&x, &y);
        assert!((f - 0.5 * unweighted).abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_gives_bit_identical_datasets() {
        let a = synthetic_hyperclean(&small_cfg(0)).unwrap();
        let b = synthetic_hyperclean(&small_cfg(0)).unwrap();
        assert_eq!(a.train.labels, b.train.labels);
        assert_eq!(a.val.labels, b.val.labels);
        for (fa, fb) in a.train.features.iter().zip(b.train.features.iter()) {
            assert_eq!(fa, fb);
        }
    }

    #[test]
    fn corruption_changes_exactly_the_requested_count() {
        let cfg = small_cfg(0);
        let clean = synthetic_hyperclean(&HypercleanConfig {
            corrupt_fraction: 0.0,
            ..cfg.clone()
        })
        .unwrap();
        let dirty = synthetic_hyperclean(&cfg).unwrap();
        let flipped = clean
            .train
            .labels
            .iter()
            .zip(dirty.train.labels.iter())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(flipped, (0.3_f64 * 9.0).floor() as usize);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(synthetic_hyperclean(&HypercleanConfig {
            corrupt_fraction: 1.0,
            ..small_cfg(0)
        })
        .is_err());
        assert!(synthetic_hyperclean(&HypercleanConfig {
            n_classes: 9,
            ..small_cfg(0)
        })
        .is_err());
        assert!(synthetic_hyperclean(&HypercleanConfig {
            n_train: 0,
            ..small_cfg(0)
        })
        .is_err());
    }

    #[test]
    fn mlp_variant_has_expected_parameter_count() {
        let p = synthetic_hyperclean(&small_cfg(5)).unwrap();
        // 5*4 + 5 + 3*5 + 3
        assert_eq!(p.lower_dim(), 43);
    }
}
