//! Random patch extraction with flip augmentation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Scene;
use crate::distxform::{quantize, signed_truncated_distance, BinSpec, DistanceClassMap};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::config::SceneSampling;

/// Maps a byte to roughly [-1, 1].
pub fn normalize_byte(v: u8) -> f64 {
    f64::from(v) / 127.5 - 1.0
}

/// One crop: origin, flips, and the scene it comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchDraw {
    pub scene: usize,
    pub y: usize,
    pub x: usize,
    pub flip_h: bool,
    pub flip_v: bool,
}

/// Network input and flattened `(n, y, x)` targets for both tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub input: Tensor,
    pub seg_targets: Vec<usize>,
    pub dist_targets: Vec<usize>,
}

/// Distance classes of a whole scene; patches are cropped from this so the
/// crop border is not mistaken for a building outline.
pub fn scene_distance_classes(scene: &Scene, bins: &BinSpec) -> Result<DistanceClassMap> {
    quantize(&signed_truncated_distance(&scene.mask, bins.radius())?, bins)
}

/// Stacks windows of scenes into a batch. `classes[i]` belongs to `scenes[d.scene]`.
pub fn assemble(
    scenes: &[Scene],
    classes: &[DistanceClassMap],
    draws: &[PatchDraw],
    patch: usize,
) -> Result<Batch> {
    let n = draws.len();
    let plane = patch * patch;
    let mut input = vec![0.0; n * 3 * plane];
    let mut seg = vec![0; n * plane];
    let mut dist = vec![0; n * plane];
    for (b, d) in draws.iter().enumerate() {
        let scene = scenes
            .get(d.scene)
            .ok_or_else(|| Error::ShapeMismatch(format!("no scene {}", d.scene)))?;
        if d.y + patch > scene.height() || d.x + patch > scene.width() {
            return Err(Error::SceneTooSmall {
                scene: scene.id.clone(),
                height: scene.height(),
                width: scene.width(),
                patch,
            });
        }
        let dcm = &classes[d.scene];
        for py in 0..patch {
            let sy = d.y + if d.flip_v { patch - 1 - py } else { py };
            for px in 0..patch {
                let sx = d.x + if d.flip_h { patch - 1 - px } else { px };
                let rgb = scene.image.get_pixel(sx as u32, sy as u32).0;
                for c in 0..3 {
                    input[(b * 3 + c) * plane + py * patch + px] = normalize_byte(rgb[c]);
                }
                let t = b * plane + py * patch + px;
                seg[t] = usize::from(scene.mask.is_set(sy, sx));
                dist[t] = dcm.get(sy, sx);
            }
        }
    }
    Ok(Batch {
        input: Tensor::new([n, 3, patch, patch], input)?,
        seg_targets: seg,
        dist_targets: dist,
    })
}

pub struct PatchSampler<'a> {
    scenes: &'a [Scene],
    classes: Vec<DistanceClassMap>,
    patch: usize,
    per_batch: usize,
    sampling: SceneSampling,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    left_in_scene: usize,
}

impl<'a> PatchSampler<'a> {
    pub fn new(
        scenes: &'a [Scene],
        bins: &BinSpec,
        patch: usize,
        per_batch: usize,
        sampling: SceneSampling,
        seed: u64,
    ) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::EmptySplit);
        }
        if let Some(s) = scenes.iter().find(|s| s.height() < patch || s.width() < patch) {
            return Err(Error::SceneTooSmall {
                scene: s.id.clone(),
                height: s.height(),
                width: s.width(),
                patch,
            });
        }
        let classes = scenes
            .iter()
            .map(|s| scene_distance_classes(s, bins))
            .collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Keep the sampling stream apart from the weight-init stream.
        rng.set_stream(1);
        Ok(Self {
            scenes,
            classes,
            patch,
            per_batch,
            sampling,
            rng,
            order: Vec::new(),
            cursor: 0,
            left_in_scene: 0,
        })
    }

    pub fn classes(&self) -> &[DistanceClassMap] {
        &self.classes
    }

    fn next_sequential_scene(&mut self, per_scene: usize) -> usize {
        if self.left_in_scene == 0 {
            if self.cursor == self.order.len() {
                self.order = (0..self.scenes.len()).collect();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            self.cursor += 1;
            self.left_in_scene = per_scene;
        }
        self.left_in_scene -= 1;
        self.order[self.cursor - 1]
    }

    fn draw_in(&mut self, scene: usize) -> PatchDraw {
        let s = &self.scenes[scene];
        PatchDraw {
            scene,
            y: self.rng.gen_range(0..=s.height() - self.patch),
            x: self.rng.gen_range(0..=s.width() - self.patch),
            flip_h: self.rng.gen_bool(0.5),
            flip_v: self.rng.gen_bool(0.5),
        }
    }

    pub fn next_draws(&mut self) -> Vec<PatchDraw> {
        let batch_scene = match self.sampling {
            SceneSampling::PerBatch => Some(self.rng.gen_range(0..self.scenes.len())),
            SceneSampling::Sequential(n) => Some(self.next_sequential_scene(n)),
            SceneSampling::PerPatch => None,
        };
        (0..self.per_batch)
            .map(|_| {
                let scene = batch_scene.unwrap_or_else(|| self.rng.gen_range(0..self.scenes.len()));
                self.draw_in(scene)
            })
            .collect()
    }

    pub fn next_batch(&mut self) -> Result<Batch> {
        let draws = self.next_draws();
        assemble(self.scenes, &self.classes, &draws, self.patch)
    }
}
