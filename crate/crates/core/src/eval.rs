//! Building IoU, pixel accuracy and tiled whole-scene prediction.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::Scene;
use crate::distxform::Mask;
use crate::error::{Error, Result};
use crate::net::Model;
use crate::tensor::Tensor;
use crate::trainer::normalize_byte;

/// Raw pixel counts; ratios are always derived from these.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub intersection: u64,
    pub union: u64,
    pub correct: u64,
    pub total: u64,
}

impl Counts {
    pub fn from_masks(pred: &Mask, gt: &Mask) -> Result<Self> {
        if pred.height() != gt.height() || pred.width() != gt.width() {
            return Err(Error::ExtentMismatch(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        let mut c = Counts { total: pred.values().len() as u64, ..Counts::default() };
        for (&p, &g) in pred.values().iter().zip(gt.values()) {
            c.intersection += u64::from(p & g);
            c.union += u64::from(p | g);
            c.correct += u64::from(p == g);
        }
        Ok(c)
    }

    pub fn add(&mut self, o: &Counts) {
        self.intersection += o.intersection;
        self.union += o.union;
        self.correct += o.correct;
        self.total += o.total;
    }

    /// Empty union counts as a perfect match.
    pub fn iou(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

pub fn iou_building(pred: &Mask, gt: &Mask) -> Result<f64> {
    Ok(Counts::from_masks(pred, gt)?.iou())
}

pub fn pixel_accuracy(pred: &Mask, gt: &Mask) -> Result<f64> {
    Ok(Counts::from_masks(pred, gt)?.accuracy())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub scenes: usize,
    pub counts: Counts,
}

impl GroupMetrics {
    fn add(&mut self, c: &Counts) {
        self.scenes += 1;
        self.counts.add(c);
    }
}

/// Per-location and overall metrics; the overall ratios come from summed counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: GroupMetrics,
    pub per_location: BTreeMap<String, GroupMetrics>,
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

impl MetricsReport {
    pub fn add(&mut self, location: &str, c: &Counts) {
        self.overall.add(c);
        self.per_location.entry(location.to_string()).or_default().add(c);
    }

    pub fn iou(&self) -> f64 {
        self.overall.counts.iou()
    }

    pub fn accuracy(&self) -> f64 {
        self.overall.counts.accuracy()
    }

    /// JSON with ratios at four decimals and the raw counts alongside.
    pub fn to_json(&self) -> serde_json::Value {
        let group = |g: &GroupMetrics| {
            json!({
                "iou": round4(g.counts.iou()),
                "accuracy": round4(g.counts.accuracy()),
                "scenes": g.scenes,
                "intersection": g.counts.intersection,
                "union": g.counts.union,
                "correct": g.counts.correct,
                "total": g.counts.total,
            })
        };
        let locs: serde_json::Map<_, _> = self
            .per_location
            .iter()
            .map(|(k, g)| (k.clone(), group(g)))
            .collect();
        json!({ "overall": group(&self.overall), "per_location": locs })
    }

    /// Reads the counts back from [`MetricsReport::to_json`] output.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let group = |g: &serde_json::Value| -> Result<GroupMetrics> {
            let n = |k: &str| {
                g[k].as_u64()
                    .ok_or_else(|| Error::InvalidConfig(format!("metrics report lacks {k:?}")))
            };
            Ok(GroupMetrics {
                scenes: n("scenes")? as usize,
                counts: Counts {
                    intersection: n("intersection")?,
                    union: n("union")?,
                    correct: n("correct")?,
                    total: n("total")?,
                },
            })
        };
        let per_location = v["per_location"]
            .as_object()
            .ok_or_else(|| Error::InvalidConfig("metrics report lacks per_location".into()))?
            .iter()
            .map(|(k, g)| Ok((k.clone(), group(g)?)))
            .collect::<Result<_>>()?;
        Ok(Self { overall: group(&v["overall"])?, per_location })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("location,scenes,iou,accuracy,intersection,union,correct,total\n");
        let rows = self
            .per_location
            .iter()
            .map(|(k, g)| (k.as_str(), g))
            .chain(std::iter::once(("overall", &self.overall)));
        for (name, g) in rows {
            let c = &g.counts;
            let _ = writeln!(
                s,
                "{name},{},{:.4},{:.4},{},{},{},{}",
                g.scenes,
                c.iou(),
                c.accuracy(),
                c.intersection,
                c.union,
                c.correct,
                c.total
            );
        }
        s
    }
}

/// Accumulates `(location, prediction, ground truth)` triples.
pub fn evaluate_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a Mask, &'a Mask)>) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    for (loc, pred, gt) in pairs {
        report.add(loc, &Counts::from_masks(pred, gt)?);
    }
    if report.overall.scenes == 0 {
        return Err(Error::EmptySplit);
    }
    Ok(report)
}

/// How building pixels are read off the network outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeRule {
    /// Argmax of the segmentation head; ties go to background.
    SegArgmax,
    /// Argmax distance class at or above the bin.
    DistThreshold(usize),
}

impl DecodeRule {
    /// The segmentation head when there is one, else the distance head at `K/2`.
    pub fn for_model(model: &Model) -> Self {
        let cfg = model.config();
        if cfg.heads.has_seg() {
            DecodeRule::SegArgmax
        } else {
            DecodeRule::DistThreshold(cfg.num_distance_classes / 2)
        }
    }
}

/// One window: start, and the sub-range `[lo, hi)` it owns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile {
    pub start: usize,
    pub lo: usize,
    pub hi: usize,
}

/// Windows at stride `patch`, with the last one moved flush to the border.
/// Every index in `0..extent` is owned by exactly one window.
pub fn tiles(extent: usize, patch: usize) -> Vec<Tile> {
    assert!(patch > 0 && patch <= extent);
    let mut out = Vec::new();
    let mut covered = 0;
    while covered < extent {
        let start = covered.min(extent - patch);
        out.push(Tile { start, lo: covered, hi: start + patch });
        covered = start + patch;
    }
    out
}

fn argmax(v: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Decodes one sample of the network output to building flags, row-major.
fn decode_sample(model: &Model, logits_dist: Option<&Tensor>, logits_seg: Option<&Tensor>, n: usize, rule: DecodeRule) -> Result<Vec<bool>> {
    let (logits, is_building): (&Tensor, Box<dyn Fn(usize) -> bool>) = match rule {
        DecodeRule::SegArgmax => (
            logits_seg.ok_or_else(|| Error::ModeMismatch("the network has no segmentation head".into()))?,
            Box::new(|c| c == 1),
        ),
        DecodeRule::DistThreshold(t) => {
            let k = model.config().num_distance_classes;
            if t == 0 || t >= k {
                return Err(Error::BadThreshold { bin: t, bins: k });
            }
            (
                logits_dist.ok_or_else(|| Error::ModeMismatch("the network has no distance head".into()))?,
                Box::new(move |c| c >= t),
            )
        }
    };
    let (_, c, h, w) = logits.dims4()?;
    let s = logits.sample(n);
    let plane = h * w;
    Ok((0..plane)
        .map(|p| is_building(argmax((0..c).map(|k| s[k * plane + p]))))
        .collect())
}

/// Whole-scene prediction stitched from `patch`-sized windows.
pub fn predict_scene(model: &Model, scene: &Scene, patch: usize, rule: DecodeRule) -> Result<Mask> {
    let (h, w) = (scene.height(), scene.width());
    if h < patch || w < patch {
        return Err(Error::SceneTooSmall { scene: scene.id.clone(), height: h, width: w, patch });
    }
    model.config().check_extent(patch, patch)?;
    let windows: Vec<(Tile, Tile)> = tiles(h, patch)
        .into_iter()
        .flat_map(|ty| tiles(w, patch).into_iter().map(move |tx| (ty, tx)))
        .collect();
    let mut mask = Mask::zeros(h, w)?;
    let plane = patch * patch;
    for chunk in windows.chunks(8) {
        let mut data = vec![0.0; chunk.len() * 3 * plane];
        for (b, (ty, tx)) in chunk.iter().enumerate() {
            for y in 0..patch {
                for x in 0..patch {
                    let rgb = scene.image.get_pixel((tx.start + x) as u32, (ty.start + y) as u32).0;
                    for c in 0..3 {
                        data[(b * 3 + c) * plane + y * patch + x] = normalize_byte(rgb[c]);
                    }
                }
            }
        }
        let out = model.predict(&Tensor::new([chunk.len(), 3, patch, patch], data)?)?;
        for (b, (ty, tx)) in chunk.iter().enumerate() {
            let flags = decode_sample(model, out.dist_logits.as_ref(), out.seg_logits.as_ref(), b, rule)?;
            for y in ty.lo..ty.hi {
                for x in tx.lo..tx.hi {
                    mask.set(y, x, flags[(y - ty.start) * patch + (x - tx.start)]);
                }
            }
        }
    }
    Ok(mask)
}

pub fn evaluate_model(model: &Model, scenes: &[Scene], patch: usize, rule: DecodeRule) -> Result<MetricsReport> {
    if scenes.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut report = MetricsReport::default();
    for s in scenes {
        let pred = predict_scene(model, s, patch, rule)?;
        report.add(&s.location, &Counts::from_masks(&pred, &s.mask)?);
    }
    Ok(report)
}

/// Median; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{HeadLayout, NetworkConfig};
    use image::{GenericImageView, RgbImage};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mask(h: usize, w: usize, p: f64, rng: &mut ChaCha8Rng) -> Mask {
        Mask::from_fn(h, w, |_, _| rng.gen_bool(p)).unwrap()
    }

    #[test]
    fn known_counts() {
        let p = Mask::new(1, 4, vec![1, 1, 0, 0]).unwrap();
        let g = Mask::new(1, 4, vec![0, 1, 1, 0]).unwrap();
        let c = Counts::from_masks(&p, &g).unwrap();
        assert_eq!(c, Counts { intersection: 1, union: 3, correct: 2, total: 4 });
        assert!((iou_building(&p, &g).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(pixel_accuracy(&p, &g).unwrap(), 0.5);
        let z = Mask::zeros(2, 2).unwrap();
        assert_eq!(iou_building(&z, &z).unwrap(), 1.0);
        assert!(matches!(Counts::from_masks(&p, &z), Err(Error::ExtentMismatch(_))));
    }

    #[test]
    fn counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let (h, w) = (rng.gen_range(1..30), rng.gen_range(1..30));
            let p = random_mask(h, w, rng.gen_range(0.0..1.0), &mut rng);
            let g = random_mask(h, w, rng.gen_range(0.0..1.0), &mut rng);
            let (mut i, mut u, mut a) = (0u64, 0u64, 0u64);
            for y in 0..h {
                for x in 0..w {
                    let (pv, gv) = (p.is_set(y, x), g.is_set(y, x));
                    i += u64::from(pv && gv);
                    u += u64::from(pv || gv);
                    a += u64::from(pv == gv);
                }
            }
            let c = Counts::from_masks(&p, &g).unwrap();
            assert_eq!((c.intersection, c.union, c.correct), (i, u, a));
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(bits in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..64)) {
            let n = bits.len();
            let p = Mask::from_bools(1, n, &bits.iter().map(|b| b.0).collect::<Vec<_>>()).unwrap();
            let g = Mask::from_bools(1, n, &bits.iter().map(|b| b.1).collect::<Vec<_>>()).unwrap();
            let a = iou_building(&p, &g).unwrap();
            prop_assert_eq!(a, iou_building(&g, &p).unwrap());
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(iou_building(&p, &p).unwrap(), 1.0);
            prop_assert_eq!(pixel_accuracy(&p, &p).unwrap(), 1.0);
            let acc = pixel_accuracy(&p, &g).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
        }
    }

    #[test]
    fn overall_sums_counts_not_ratios() {
        let mut r = MetricsReport::default();
        r.add("a", &Counts { intersection: 1, union: 1, correct: 1, total: 1 });
        r.add("b", &Counts { intersection: 0, union: 3, correct: 1, total: 3 });
        assert_eq!(r.iou(), 0.25);
        assert_eq!(r.accuracy(), 0.5);
        assert_eq!(r.per_location["a"].counts.iou(), 1.0);
        assert_eq!(r.overall.scenes, 2);
        let j = r.to_json();
        assert_eq!(j["overall"]["iou"], 0.25);
        assert_eq!(j["per_location"]["b"]["union"], 3);
        assert!(r.to_csv().ends_with("overall,2,0.2500,0.5000,1,4,2,4\n"));
        assert_eq!(MetricsReport::from_json(&j).unwrap(), r);
        assert!(matches!(evaluate_pairs(std::iter::empty()), Err(Error::EmptySplit)));
    }

    #[test]
    fn tiles_cover_once() {
        for extent in 1..40 {
            for patch in 1..=extent {
                let t = tiles(extent, patch);
                let mut owned = vec![0; extent];
                for tile in &t {
                    assert_eq!(tile.hi, tile.start + patch);
                    assert!(tile.start <= tile.lo && tile.lo <= tile.hi && tile.hi <= extent);
                    owned[tile.lo..tile.hi].iter_mut().for_each(|o| *o += 1);
                }
                assert!(owned.iter().all(|&o| o == 1), "{extent} {patch}");
            }
        }
        assert_eq!(tiles(20, 8).iter().map(|t| t.start).collect::<Vec<_>>(), vec![0, 8, 12]);
    }

    fn scene(h: usize, w: usize) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let image = RgbImage::from_fn(w as u32, h as u32, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()]));
        Scene::new("x", 1, image, random_mask(h, w, 0.3, &mut rng)).unwrap()
    }

    #[test]
    fn stitched_prediction_matches_per_window() {
        let cfg = NetworkConfig {
            stages: 2,
            channels_per_stage: vec![4, 6],
            convs_per_stage: vec![1, 1],
            heads: HeadLayout::Cascade,
            ..NetworkConfig::default()
        };
        let model = Model::new(cfg, 3).unwrap();
        let s = scene(20, 12);
        let full = predict_scene(&model, &s, 8, DecodeRule::DistThreshold(5)).unwrap();
        // The last row band starts at 12 and owns rows 16..20.
        let crop = s.image.view(4, 12, 8, 8).to_image();
        let sub = Scene::new("x", 1, crop, s.mask.crop((12, 4), (8, 8)).unwrap()).unwrap();
        let part = predict_scene(&model, &sub, 8, DecodeRule::DistThreshold(5)).unwrap();
        for y in 4..8 {
            for x in 4..8 {
                assert_eq!(part.is_set(y, x), full.is_set(12 + y, 4 + x));
            }
        }
        let rep = evaluate_model(&model, &[s.clone()], 8, DecodeRule::SegArgmax).unwrap();
        assert_eq!(rep.overall.counts.total, 240);
        assert!(predict_scene(&model, &s, 16, DecodeRule::SegArgmax).is_err());
        assert!(matches!(evaluate_model(&model, &[], 8, DecodeRule::SegArgmax), Err(Error::EmptySplit)));
    }

    #[test]
    fn median_rule() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
