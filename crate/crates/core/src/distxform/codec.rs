//! Signed truncated distance maps and their quantization into distance classes.

use super::edt::{squared_edt, EmptySeeds};
use super::{boundary_pixels, Mask, Raster};
use crate::error::{Error, Result};

/// Per-pixel signed distance to the building boundary, clamped to `[-radius, radius]`.
///
/// Positive inside buildings, negative outside, zero exactly on boundary pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistanceMap {
    radius: f64,
    values: Raster<f64>,
}

impl SignedDistanceMap {
    pub fn new(radius: f64, values: Raster<f64>) -> Result<Self> {
        check_radius(radius)?;
        for &v in values.data() {
            if !v.is_finite() || v.abs() > radius {
                return Err(Error::ThresholdMismatch { value: v, radius });
            }
        }
        Ok(Self { radius, values })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values.get(y, x)
    }

    pub fn values(&self) -> &Raster<f64> {
        &self.values
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius.is_finite() && radius > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(radius))
    }
}

/// `D(p) = sign(p) * min(dist(p, Q), R)` where `Q` is the boundary set of `mask`.
///
/// An all-background mask has an empty boundary set and maps to `-R` everywhere.
pub fn signed_truncated_distance(mask: &Mask, radius: f64) -> Result<SignedDistanceMap> {
    check_radius(radius)?;
    let boundary = boundary_pixels(mask);
    let sq = squared_edt(&boundary, EmptySeeds::Infinite)?;
    let values = Raster::from_fn(mask.height(), mask.width(), |y, x| {
        let d2 = sq.get(y, x);
        let dist = if d2 == u64::MAX {
            radius
        } else {
            (d2 as f64).sqrt().min(radius)
        };
        if mask.is_set(y, x) {
            dist
        } else {
            -dist
        }
    })?;
    Ok(SignedDistanceMap { radius, values })
}

/// Uniform quantizer over `[-R, R]` with `K` bins and zero as the middle edge.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpec {
    bins: usize,
    radius: f64,
    edges: Vec<f64>,
    representatives: Vec<f64>,
}

impl BinSpec {
    /// Largest bin count that fits an 8-bit class map.
    pub const MAX_BINS: usize = 256;

    pub fn new(bins: usize, radius: f64) -> Result<Self> {
        if bins == 0 || bins % 2 != 0 || bins > Self::MAX_BINS {
            return Err(Error::InvalidBinCount(bins));
        }
        check_radius(radius)?;
        // R * (2k - K) / K puts edges[K/2] at exactly 0 and the ends at exactly -R, +R.
        let k = bins as f64;
        let edges: Vec<f64> = (0..=bins)
            .map(|i| radius * ((2.0 * i as f64 - k) / k))
            .collect();
        let representatives = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
        Ok(Self {
            bins,
            radius,
            edges,
            representatives,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn representatives(&self) -> &[f64] {
        &self.representatives
    }

    /// Bin `k` with `edges[k] <= v < edges[k+1]`; `+R` goes to the last bin.
    pub fn bin_of(&self, v: f64) -> Result<usize> {
        if !v.is_finite() || v.abs() > self.radius {
            return Err(Error::ThresholdMismatch {
                value: v,
                radius: self.radius,
            });
        }
        let above = self.edges.partition_point(|&e| e <= v);
        Ok((above - 1).min(self.bins - 1))
    }

    /// First bin lying entirely at or above zero.
    pub fn zero_bin(&self) -> usize {
        self.bins / 2
    }
}

/// Per-pixel distance-class index in `[0, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceClassMap {
    bins: BinSpec,
    classes: Raster<u8>,
}

impl DistanceClassMap {
    pub fn new(bins: BinSpec, classes: Raster<u8>) -> Result<Self> {
        if let Some(&c) = classes.data().iter().find(|&&c| c as usize >= bins.bins()) {
            return Err(Error::BadClassIndex {
                index: c as usize,
                channels: bins.bins(),
            });
        }
        Ok(Self { bins, classes })
    }

    pub fn bins(&self) -> &BinSpec {
        &self.bins
    }

    pub fn classes(&self) -> &Raster<u8> {
        &self.classes
    }

    pub fn height(&self) -> usize {
        self.classes.height()
    }

    pub fn width(&self) -> usize {
        self.classes.width()
    }

    pub fn get(&self, y: usize, x: usize) -> usize {
        self.classes.get(y, x) as usize
    }

    /// Pixel count per bin.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.bins.bins()];
        for &c in self.classes.data() {
            h[c as usize] += 1;
        }
        h
    }
}

pub fn quantize(sdm: &SignedDistanceMap, bins: &BinSpec) -> Result<DistanceClassMap> {
    let mut classes = Vec::with_capacity(sdm.height() * sdm.width());
    for &v in sdm.values().data() {
        classes.push(bins.bin_of(v)? as u8);
    }
    DistanceClassMap::new(
        bins.clone(),
        Raster::new(sdm.height(), sdm.width(), classes)?,
    )
}

/// `K x H x W` binary planes, channel `k` set where the class map equals `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHot {
    bins: BinSpec,
    height: usize,
    width: usize,
    planes: Vec<u8>,
}

impl OneHot {
    pub fn channels(&self) -> usize {
        self.bins.bins()
    }

    pub fn channel(&self, k: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.planes[k * n..(k + 1) * n]
    }

    pub fn get(&self, k: usize, y: usize, x: usize) -> u8 {
        self.channel(k)[y * self.width + x]
    }

    /// `sum_k r_k * b_k(p)` per pixel.
    pub fn reconstruct(&self) -> Raster<f64> {
        let reps = self.bins.representatives();
        Raster::from_fn(self.height, self.width, |y, x| {
            (0..self.channels())
                .map(|k| reps[k] * self.get(k, y, x) as f64)
                .sum()
        })
        .expect("non-empty extent")
    }
}

pub fn encode_one_hot(dcm: &DistanceClassMap) -> OneHot {
    let (h, w) = (dcm.height(), dcm.width());
    let k = dcm.bins().bins();
    let mut planes = vec![0u8; k * h * w];
    for (i, &c) in dcm.classes().data().iter().enumerate() {
        planes[c as usize * h * w + i] = 1;
    }
    OneHot {
        bins: dcm.bins().clone(),
        height: h,
        width: w,
        planes,
    }
}

/// Building where the class index is `>= threshold_bin`.
pub fn decode_mask(dcm: &DistanceClassMap, threshold_bin: usize) -> Result<Mask> {
    let bins = dcm.bins().bins();
    if threshold_bin >= bins {
        return Err(Error::BadThreshold {
            bin: threshold_bin,
            bins,
        });
    }
    Mask::from_raster(dcm.classes().map(|c| (c as usize >= threshold_bin) as u8))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Mask {
        let density = rng.gen_range(0.05..0.95);
        Mask::from_fn(h, w, |_, _| rng.gen_bool(density)).unwrap()
    }

    /// Per-pixel minimum over the boundary set, then sign and clamp.
    fn brute_force_sdt(mask: &Mask, radius: f64) -> Vec<f64> {
        let q = boundary_pixels(mask);
        let (h, w) = (mask.height(), mask.width());
        let pts: Vec<(f64, f64)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .filter(|&(y, x)| q.is_set(y, x))
            .map(|(y, x)| (y as f64, x as f64))
            .collect();
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let d = pts
                    .iter()
                    .map(|&(py, px)| ((py - y as f64).powi(2) + (px - x as f64).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
                    .min(radius);
                out.push(if mask.is_set(y, x) { d } else { -d });
            }
        }
        out
    }

    #[test]
    fn all_background_is_minus_radius() {
        let m = Mask::zeros(8, 8).unwrap();
        let d = signed_truncated_distance(&m, 20.0).unwrap();
        assert!(d.values().data().iter().all(|&v| v == -20.0));
    }

    #[test]
    fn single_boundary_pixel_in_a_row() {
        let m = Mask::new(1, 5, vec![0, 0, 1, 0, 0]).unwrap();
        let d = signed_truncated_distance(&m, 20.0).unwrap();
        assert_eq!(d.values().data(), &[-2.0, -1.0, 0.0, -1.0, -2.0]);
    }

    #[test]
    fn rejects_bad_radius() {
        let m = Mask::zeros(2, 2).unwrap();
        assert!(matches!(
            signed_truncated_distance(&m, 0.0),
            Err(Error::InvalidThreshold(_))
        ));
        assert!(signed_truncated_distance(&m, f64::NAN).is_err());
    }

    #[test]
    fn deep_interior_and_exterior_reach_radius() {
        let m = Mask::from_fn(40, 40, |y, x| y < 40 && x < 18).unwrap();
        let d = signed_truncated_distance(&m, 5.0).unwrap();
        assert_eq!(d.get(20, 8), 5.0);
        assert_eq!(d.get(20, 30), -5.0);
        assert_eq!(d.get(20, 17), 0.0);
        assert_eq!(d.get(20, 18), -1.0);
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let m = random_mask(&mut rng, 32, 32);
            let d = signed_truncated_distance(&m, 20.0).unwrap();
            for (a, b) in d.values().data().iter().zip(brute_force_sdt(&m, 20.0)) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn bin_spec_layout() {
        let b = BinSpec::new(10, 20.0).unwrap();
        assert_eq!(b.edges()[0], -20.0);
        assert_eq!(b.edges()[5], 0.0);
        assert_eq!(b.edges()[10], 20.0);
        assert_eq!(b.representatives()[0], -18.0);
        assert_eq!(b.representatives()[9], 18.0);
        for w in b.edges().windows(2) {
            assert!((w[1] - w[0] - 4.0).abs() < 1e-12);
        }
        assert!(BinSpec::new(7, 20.0).is_err());
        assert!(BinSpec::new(0, 20.0).is_err());
        assert!(BinSpec::new(258, 20.0).is_err());
        assert!(BinSpec::new(4, -1.0).is_err());
    }

    #[test]
    fn zero_edge_lands_in_middle_bin_for_any_even_k() {
        for k in (2..=64).step_by(2) {
            for r in [1.0, 3.0, 7.5, 20.0, 33.3] {
                let b = BinSpec::new(k, r).unwrap();
                assert_eq!(b.edges()[k / 2], 0.0);
                assert_eq!(b.bin_of(0.0).unwrap(), k / 2);
                assert_eq!(b.bin_of(-1e-9).unwrap(), k / 2 - 1);
                assert_eq!(b.bin_of(r).unwrap(), k - 1);
                assert_eq!(b.bin_of(-r).unwrap(), 0);
            }
        }
    }

    #[test]
    fn quantize_reference_points() {
        let b = BinSpec::new(10, 20.0).unwrap();
        assert_eq!(b.bin_of(-20.0).unwrap(), 0);
        assert_eq!(b.bin_of(0.0).unwrap(), 5);
        assert_eq!(b.bin_of(20.0).unwrap(), 9);
        assert_eq!(b.bin_of(-0.0001).unwrap(), 4);
        assert_eq!(b.bin_of(4.0).unwrap(), 6);
        assert!(matches!(b.bin_of(20.5), Err(Error::ThresholdMismatch { .. })));
    }

    #[test]
    fn quantize_matches_linear_search() {
        let b = BinSpec::new(10, 20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vals: Vec<f64> = (0..400)
            .map(|i| match i % 4 {
                0 => b.edges()[rng.gen_range(0..=10)],
                _ => rng.gen_range(-20.0..=20.0),
            })
            .collect();
        let sdm = SignedDistanceMap::new(20.0, Raster::new(20, 20, vals.clone()).unwrap()).unwrap();
        let dcm = quantize(&sdm, &b).unwrap();
        for (i, &v) in vals.iter().enumerate() {
            let mut expect = 9;
            for k in 0..10 {
                if b.edges()[k] <= v && v < b.edges()[k + 1] {
                    expect = k;
                    break;
                }
            }
            assert_eq!(dcm.classes().data()[i] as usize, expect, "v = {v}");
        }
    }

    #[test]
    fn quantize_rejects_out_of_range() {
        let raster = Raster::new(1, 1, vec![-30.0]).unwrap();
        assert!(SignedDistanceMap::new(20.0, raster.clone()).is_err());
        let sdm = SignedDistanceMap::new(30.0, raster).unwrap();
        let b = BinSpec::new(10, 20.0).unwrap();
        assert!(matches!(quantize(&sdm, &b), Err(Error::ThresholdMismatch { .. })));
    }

    #[test]
    fn one_hot_two_bins() {
        let b = BinSpec::new(2, 1.0).unwrap();
        let dcm = DistanceClassMap::new(b, Raster::new(1, 2, vec![0, 1]).unwrap()).unwrap();
        let oh = encode_one_hot(&dcm);
        assert_eq!(oh.channel(0), &[1, 0]);
        assert_eq!(oh.channel(1), &[0, 1]);
    }

    #[test]
    fn one_hot_reconstruction_equals_representatives() {
        let b = BinSpec::new(10, 20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_mask(&mut rng, 24, 24);
        let dcm = quantize(&signed_truncated_distance(&m, 20.0).unwrap(), &b).unwrap();
        let oh = encode_one_hot(&dcm);
        let rec = oh.reconstruct();
        for y in 0..24 {
            for x in 0..24 {
                let sum: u32 = (0..10).map(|k| oh.get(k, y, x) as u32).sum();
                assert_eq!(sum, 1);
                assert_eq!(rec.get(y, x), b.representatives()[dcm.get(y, x)]);
            }
        }
    }

    #[test]
    fn decode_thresholds() {
        let b = BinSpec::new(10, 20.0).unwrap();
        let dcm = DistanceClassMap::new(b, Raster::new(1, 4, vec![0, 5, 8, 9]).unwrap()).unwrap();
        assert_eq!(decode_mask(&dcm, 0).unwrap().values(), &[1, 1, 1, 1]);
        assert_eq!(decode_mask(&dcm, 5).unwrap().values(), &[0, 1, 1, 1]);
        assert_eq!(decode_mask(&dcm, 9).unwrap().values(), &[0, 0, 0, 1]);
        assert!(matches!(decode_mask(&dcm, 10), Err(Error::BadThreshold { .. })));
    }

    #[test]
    fn class_map_rejects_bad_index() {
        let b = BinSpec::new(4, 20.0).unwrap();
        assert!(DistanceClassMap::new(b, Raster::new(1, 1, vec![4]).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_recovers_mask(
            h in 1usize..24,
            w in 1usize..24,
            half_k in 1usize..12,
            radius in 1.0f64..30.0,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_mask(&mut rng, h, w);
            let b = BinSpec::new(2 * half_k, radius).unwrap();
            let sdm = signed_truncated_distance(&m, radius).unwrap();
            let dcm = quantize(&sdm, &b).unwrap();
            prop_assert_eq!(decode_mask(&dcm, b.zero_bin()).unwrap(), m.clone());

            for y in 0..h {
                for x in 0..w {
                    let v = sdm.get(y, x);
                    prop_assert!(v.abs() <= radius);
                    if m.is_set(y, x) { prop_assert!(v >= 0.0); } else { prop_assert!(v < 0.0); }
                }
            }
        }
    }
}
