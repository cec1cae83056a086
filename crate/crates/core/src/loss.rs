//! Pixel-wise negative log likelihood and the multi-task objective.
//!
//! The uncertainty-weighted task loss is `exp(-s) * nll + s` with `s = log(sigma^2)`
//! trained directly. [`scaled_nll_exact`] is the unapproximated loss under
//! `softmax(logits / sigma^2)`; it exists to measure the gap and is never trained.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{HeadLayout, ParamStore, LOG_VAR_DIST, LOG_VAR_SEG};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    SegOnly,
    DistOnly,
    MultitaskEqual,
    MultitaskUncertainty,
}

impl LossMode {
    /// In reporting order.
    pub const ALL: [LossMode; 4] = [
        LossMode::SegOnly,
        LossMode::DistOnly,
        LossMode::MultitaskEqual,
        LossMode::MultitaskUncertainty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::SegOnly => "seg_only",
            LossMode::DistOnly => "dist_only",
            LossMode::MultitaskEqual => "multitask_equal",
            LossMode::MultitaskUncertainty => "multitask_uncertainty",
        }
    }

    pub fn heads(self) -> HeadLayout {
        match self {
            LossMode::SegOnly => HeadLayout::Seg,
            LossMode::DistOnly => HeadLayout::Dist,
            LossMode::MultitaskEqual | LossMode::MultitaskUncertainty => HeadLayout::Cascade,
        }
    }

    pub fn uses_seg(self) -> bool {
        self != LossMode::DistOnly
    }

    pub fn uses_dist(self) -> bool {
        self != LossMode::SegOnly
    }

    pub fn learns_task_weights(self) -> bool {
        self == LossMode::MultitaskUncertainty
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown loss mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub mode: LossMode,
    pub lambda_seg: f64,
    pub lambda_dist: f64,
}

impl LossConfig {
    pub fn new(mode: LossMode) -> Self {
        Self {
            mode,
            lambda_seg: 1.0,
            lambda_dist: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for l in [self.lambda_seg, self.lambda_dist] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidConfig(format!("task weight {l} must be positive")));
            }
        }
        Ok(())
    }
}

/// Log-variances `s = log(sigma^2)` for the two tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskWeights {
    pub s_seg: f64,
    pub s_dist: f64,
    pub trainable: bool,
}

impl TaskWeights {
    pub fn from_params(params: &ParamStore, trainable: bool) -> Result<Self> {
        Ok(Self {
            s_seg: params.value(LOG_VAR_SEG)?.data()[0],
            s_dist: params.value(LOG_VAR_DIST)?.data()[0],
            trainable,
        })
    }
}

fn check_targets(logits: &Tensor, targets: &[usize]) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = logits.dims4()?;
    if targets.len() != n * h * w {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for logits {:?}",
            targets.len(),
            logits.shape()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::BadClassIndex { index: t, channels: c });
    }
    Ok((n, c, h * w))
}

/// Mean over pixels of `-log softmax(logits)[target]` and its gradient
/// with respect to the logits.
pub fn nll_with_grad(logits: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
    let (n, c, hw) = check_targets(logits, targets)?;
    let mut grad = Tensor::zeros(logits.shape());
    let x = logits.data();
    let g = grad.data_mut();
    let inv = 1.0 / (n * hw) as f64;
    let mut total = 0.0;
    for b in 0..n {
        let base = b * c * hw;
        for p in 0..hw {
            let mut m = f64::NEG_INFINITY;
            for k in 0..c {
                m = m.max(x[base + k * hw + p]);
            }
            let mut z = 0.0;
            for k in 0..c {
                z += (x[base + k * hw + p] - m).exp();
            }
            let lse = m + z.ln();
            let t = targets[b * hw + p];
            total += lse - x[base + t * hw + p];
            for k in 0..c {
                let prob = (x[base + k * hw + p] - lse).exp();
                g[base + k * hw + p] = inv * (prob - if k == t { 1.0 } else { 0.0 });
            }
        }
    }
    Ok((total * inv, grad))
}

pub fn nll_pixelwise(logits: &Tensor, targets: &[usize]) -> Result<f64> {
    nll_with_grad(logits, targets).map(|(l, _)| l)
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `-log softmax(logits)[target]` for one pixel.
pub fn nll_single(logits: &[f64], target: usize) -> f64 {
    log_sum_exp(logits.iter().copied()) - logits[target]
}

/// `-log softmax(logits / sigma2)[target]`, the unapproximated uncertainty loss.
pub fn scaled_nll_exact(logits: &[f64], target: usize, sigma2: f64) -> f64 {
    let inv = 1.0 / sigma2;
    log_sum_exp(logits.iter().map(|&x| x * inv)) - logits[target] * inv
}

/// `nll / sigma2 + log(sigma2)`, the approximation used for training.
pub fn scaled_nll_approx(logits: &[f64], target: usize, sigma2: f64) -> f64 {
    uncertainty_task_loss(nll_single(logits, target), sigma2.ln())
}

/// Index of the largest entry of `softmax(logits / sigma2)`; first on ties.
pub fn argmax_scaled(logits: &[f64], sigma2: f64) -> usize {
    let inv = 1.0 / sigma2;
    let mut best = 0;
    let mut probs: Vec<f64> = logits.iter().map(|&x| x * inv).collect();
    let lse = log_sum_exp(probs.iter().copied());
    probs.iter_mut().for_each(|p| *p = (*p - lse).exp());
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// `exp(-s) * nll + s`.
pub fn uncertainty_task_loss(nll: f64, s: f64) -> f64 {
    (-s).exp() * nll + s
}

/// `d/ds` of [`uncertainty_task_loss`].
pub fn uncertainty_task_loss_ds(nll: f64, s: f64) -> f64 {
    1.0 - (-s).exp() * nll
}

/// Total loss and the derivatives the trainer needs to back-propagate it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub seg_nll: Option<f64>,
    pub dist_nll: Option<f64>,
    /// `d total / d seg_nll`.
    pub seg_factor: f64,
    /// `d total / d dist_nll`.
    pub dist_factor: f64,
    pub grad_s_seg: f64,
    pub grad_s_dist: f64,
}

pub fn total_loss(
    seg_nll: Option<f64>,
    dist_nll: Option<f64>,
    weights: &TaskWeights,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    let need = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| Error::ModeMismatch(format!("{} needs the {what} loss", cfg.mode)))
    };
    let mut out = LossBreakdown {
        total: 0.0,
        seg_nll,
        dist_nll,
        seg_factor: 0.0,
        dist_factor: 0.0,
        grad_s_seg: 0.0,
        grad_s_dist: 0.0,
    };
    match cfg.mode {
        LossMode::SegOnly => {
            out.total = need(seg_nll, "segmentation")?;
            out.seg_factor = 1.0;
        }
        LossMode::DistOnly => {
            out.total = need(dist_nll, "distance")?;
            out.dist_factor = 1.0;
        }
        LossMode::MultitaskEqual => {
            let (s, d) = (need(seg_nll, "segmentation")?, need(dist_nll, "distance")?);
            out.total = cfg.lambda_seg * s + cfg.lambda_dist * d;
            out.seg_factor = cfg.lambda_seg;
            out.dist_factor = cfg.lambda_dist;
        }
        LossMode::MultitaskUncertainty => {
            let (s, d) = (need(seg_nll, "segmentation")?, need(dist_nll, "distance")?);
            out.total = uncertainty_task_loss(s, weights.s_seg) + uncertainty_task_loss(d, weights.s_dist);
            out.seg_factor = (-weights.s_seg).exp();
            out.dist_factor = (-weights.s_dist).exp();
            if weights.trainable {
                out.grad_s_seg = uncertainty_task_loss_ds(s, weights.s_seg);
                out.grad_s_dist = uncertainty_task_loss_ds(d, weights.s_dist);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn weights(s_seg: f64, s_dist: f64) -> TaskWeights {
        TaskWeights {
            s_seg,
            s_dist,
            trainable: true,
        }
    }

    #[test]
    fn uniform_two_class_is_ln2() {
        let logits = Tensor::zeros([2, 2, 3, 3]);
        let targets: Vec<usize> = (0..18).map(|i| i % 2).collect();
        let l = nll_pixelwise(&logits, &targets).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_logits_approach_zero() {
        let mut logits = Tensor::zeros([1, 2, 1, 2]);
        logits.data_mut()[0] = 200.0; // pixel 0, class 0
        logits.data_mut()[3] = 200.0; // pixel 1, class 1
        assert!(nll_pixelwise(&logits, &[0, 1]).unwrap() < 1e-80);
    }

    #[test]
    fn matches_per_pixel_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (n, c, h, w) = (2, 3, 4, 4);
        let logits = Tensor::new(
            [n, c, h, w],
            (0..n * c * h * w).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        )
        .unwrap();
        let targets: Vec<usize> = (0..n * h * w).map(|_| rng.gen_range(0..c)).collect();
        let mut sum = 0.0;
        for b in 0..n {
            for p in 0..h * w {
                let z: Vec<f64> = (0..c).map(|k| logits.data()[(b * c + k) * h * w + p]).collect();
                let denom: f64 = z.iter().map(|v| v.exp()).sum();
                sum += -(z[targets[b * h * w + p]].exp() / denom).ln();
            }
        }
        let expect = sum / (n * h * w) as f64;
        let got = nll_pixelwise(&logits, &targets).unwrap();
        assert!((got - expect).abs() <= 1e-6 * expect.abs());
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits = Tensor::new([1, 4, 2, 3], (0..24).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let targets: Vec<usize> = (0..6).map(|_| rng.gen_range(0..4)).collect();
        let (_, g) = nll_with_grad(&logits, &targets).unwrap();
        for i in 0..24 {
            let mut p = logits.clone();
            p.data_mut()[i] += 1e-6;
            let mut m = logits.clone();
            m.data_mut()[i] -= 1e-6;
            let fd = (nll_pixelwise(&p, &targets).unwrap() - nll_pixelwise(&m, &targets).unwrap()) / 2e-6;
            assert!((fd - g.data()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn nll_errors() {
        let logits = Tensor::zeros([1, 2, 2, 2]);
        assert!(matches!(nll_pixelwise(&logits, &[0, 1, 2, 0]), Err(Error::BadClassIndex { .. })));
        assert!(matches!(nll_pixelwise(&logits, &[0, 1]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn uncertainty_loss_reference_values() {
        assert_eq!(uncertainty_task_loss(0.6931, 0.0), 0.6931);
        let s = 0.6931f64.ln();
        let v = uncertainty_task_loss(0.6931, s);
        assert!((v - (1.0 + s)).abs() < 1e-12);
        assert!((v - 0.6335).abs() < 1e-4);
    }

    #[test]
    fn stationary_at_log_nll() {
        for nll in [0.1, 0.6931, 2.0] {
            let s = f64::ln(nll);
            let h = 1e-5;
            let fd = (uncertainty_task_loss(nll, s + h) - uncertainty_task_loss(nll, s - h)) / (2.0 * h);
            assert!(fd.abs() < 1e-9);
            assert!(uncertainty_task_loss_ds(nll, s).abs() < 1e-12);
        }
    }

    #[test]
    fn total_loss_modes() {
        let eq = LossConfig::new(LossMode::MultitaskEqual);
        let un = LossConfig::new(LossMode::MultitaskUncertainty);
        let w0 = weights(0.0, 0.0);
        assert!((total_loss(Some(0.5), Some(0.7), &w0, &eq).unwrap().total - 1.2).abs() < 1e-15);
        assert_eq!(
            total_loss(Some(0.5), Some(0.7), &w0, &eq).unwrap().total,
            total_loss(Some(0.5), Some(0.7), &w0, &un).unwrap().total
        );
        let seg = LossConfig::new(LossMode::SegOnly);
        assert_eq!(total_loss(Some(0.5), None, &w0, &seg).unwrap().total, 0.5);
        assert!(matches!(total_loss(None, Some(0.5), &w0, &seg), Err(Error::ModeMismatch(_))));
        let dist = LossConfig::new(LossMode::DistOnly);
        assert_eq!(total_loss(Some(9.0), Some(0.5), &w0, &dist).unwrap().total, 0.5);
        assert!(total_loss(Some(0.5), None, &w0, &un).is_err());
        let bad = LossConfig {
            lambda_seg: 0.0,
            ..eq
        };
        assert!(total_loss(Some(0.5), Some(0.5), &w0, &bad).is_err());
    }

    #[test]
    fn log_variance_gradients_match_finite_differences() {
        let cfg = LossConfig::new(LossMode::MultitaskUncertainty);
        let (seg, dist) = (0.37, 1.9);
        for (ss, sd) in [(0.0, 0.0), (-1.2, 0.8), (2.0, -0.3)] {
            let b = total_loss(Some(seg), Some(dist), &weights(ss, sd), &cfg).unwrap();
            let h = 1e-6;
            let f = |a: f64, c: f64| total_loss(Some(seg), Some(dist), &weights(a, c), &cfg).unwrap().total;
            let fd_seg = (f(ss + h, sd) - f(ss - h, sd)) / (2.0 * h);
            let fd_dist = (f(ss, sd + h) - f(ss, sd - h)) / (2.0 * h);
            assert!((fd_seg - b.grad_s_seg).abs() <= 1e-6 * b.grad_s_seg.abs().max(1e-3));
            assert!((fd_dist - b.grad_s_dist).abs() <= 1e-6 * b.grad_s_dist.abs().max(1e-3));
        }
        let frozen = TaskWeights {
            trainable: false,
            ..weights(0.5, 0.5)
        };
        let b = total_loss(Some(seg), Some(dist), &frozen, &cfg).unwrap();
        assert_eq!((b.grad_s_seg, b.grad_s_dist), (0.0, 0.0));
    }

    #[test]
    fn mode_names_roundtrip() {
        for m in LossMode::ALL {
            assert_eq!(m.as_str().parse::<LossMode>().unwrap(), m);
        }
        assert!("both".parse::<LossMode>().is_err());
    }

    proptest! {
        #[test]
        fn reduction_identity(seg in 0.0f64..10.0, dist in 0.0f64..10.0) {
            let w0 = weights(0.0, 0.0);
            let a = total_loss(Some(seg), Some(dist), &w0, &LossConfig::new(LossMode::MultitaskEqual)).unwrap();
            let b = total_loss(Some(seg), Some(dist), &w0, &LossConfig::new(LossMode::MultitaskUncertainty)).unwrap();
            prop_assert_eq!(a.total, b.total);
        }

        #[test]
        fn increasing_in_each_nll(seg in 0.0f64..10.0, dist in 0.0f64..10.0, d in 1e-6f64..1.0,
                                  ss in -3.0f64..3.0, sd in -3.0f64..3.0) {
            let w = weights(ss, sd);
            for mode in LossMode::ALL {
                let cfg = LossConfig::new(mode);
                let base = total_loss(Some(seg), Some(dist), &w, &cfg).unwrap().total;
                if mode.uses_seg() {
                    prop_assert!(total_loss(Some(seg + d), Some(dist), &w, &cfg).unwrap().total > base);
                }
                if mode.uses_dist() {
                    prop_assert!(total_loss(Some(seg), Some(dist + d), &w, &cfg).unwrap().total > base);
                }
            }
        }

        #[test]
        fn strictly_convex_in_s(nll in 1e-3f64..10.0, a in -5.0f64..5.0, b in -5.0f64..5.0, t in 0.01f64..0.99) {
            prop_assume!((a - b).abs() > 1e-3);
            let mid = t * a + (1.0 - t) * b;
            let lhs = uncertainty_task_loss(nll, mid);
            let rhs = t * uncertainty_task_loss(nll, a) + (1.0 - t) * uncertainty_task_loss(nll, b);
            prop_assert!(lhs < rhs);
            let star = nll.ln();
            prop_assert!(uncertainty_task_loss(nll, star) <= uncertainty_task_loss(nll, a));
        }

        #[test]
        fn scaling_never_changes_argmax(logits in prop::collection::vec(-20.0f64..20.0, 2..12), sigma2 in 0.25f64..4.0) {
            prop_assert_eq!(argmax_scaled(&logits, sigma2), argmax_scaled(&logits, 1.0));
        }
    }
}
