//! Synthetic aerial tiles: textured ground, roads, and straight-edged roofs.
//!
//! A mask pixel is building iff its centre lies inside a (possibly rotated)
//! rectangle. Roofs never touch each other, so every building is its own
//! connected component.

use image::{Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::distxform::Mask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub locations: Vec<String>,
    pub min_buildings: usize,
    pub max_buildings: usize,
    /// Side length range in pixels.
    pub min_side: f64,
    pub max_side: f64,
    /// Probability that a building is rotated by a random angle.
    pub rotated_fraction: f64,
    /// Per-pixel texture noise amplitude in 8-bit levels.
    pub noise: f64,
    pub max_roads: usize,
    /// Building-pixel fraction every scene must land in.
    pub min_density: f64,
    pub max_density: f64,
    /// Extents must be multiples of this (the network's `2^stages`).
    pub extent_multiple: usize,
    pub max_attempts: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            locations: ["north", "south", "east", "west", "central"]
                .map(String::from)
                .to_vec(),
            min_buildings: 3,
            max_buildings: 8,
            min_side: 10.0,
            max_side: 28.0,
            rotated_fraction: 0.3,
            noise: 12.0,
            max_roads: 2,
            min_density: 0.04,
            max_density: 0.45,
            extent_multiple: 8,
            max_attempts: 500,
        }
    }
}

impl SynthParams {
    pub fn validate(&self, extent: usize) -> Result<()> {
        let bad = |m: String| Err(Error::BadParams(m));
        if self.locations.is_empty() {
            return bad("at least one location".into());
        }
        if let Some(l) = self.locations.iter().find(|l| {
            l.is_empty() || l.ends_with(|c: char| c.is_ascii_digit()) || l.contains(['/', '\\'])
        }) {
            return bad(format!("location name {l:?} cannot be used in file names"));
        }
        if self.min_buildings > self.max_buildings {
            return bad("min_buildings > max_buildings".into());
        }
        if !(self.min_side >= 2.0 && self.min_side <= self.max_side) {
            return bad(format!("side range {}..{}", self.min_side, self.max_side));
        }
        if !(0.0..=1.0).contains(&self.rotated_fraction) || !(self.noise >= 0.0) {
            return bad("rotated_fraction must be in [0,1] and noise >= 0".into());
        }
        if !(0.0 <= self.min_density && self.min_density <= self.max_density && self.max_density <= 1.0) {
            return bad(format!("density band {}..{}", self.min_density, self.max_density));
        }
        if self.max_buildings == 0 && self.min_density > 0.0 {
            return bad("zero buildings cannot reach a positive density".into());
        }
        if self.extent_multiple == 0 || extent == 0 || extent % self.extent_multiple != 0 {
            return bad(format!(
                "extent {extent} is not a positive multiple of {}",
                self.extent_multiple
            ));
        }
        if self.max_side >= extent as f64 {
            return bad(format!("buildings up to {} px do not fit {extent} px", self.max_side));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Roof {
    cx: f64,
    cy: f64,
    half_w: f64,
    half_h: f64,
    cos: f64,
    sin: f64,
}

impl Roof {
    /// Coordinates of `(x, y)` in the roof frame.
    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.cx, y - self.cy);
        (dx * self.cos + dy * self.sin, -dx * self.sin + dy * self.cos)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.local(x, y);
        u.abs() <= self.half_w && v.abs() <= self.half_h
    }

    fn bounds(&self, margin: f64, extent: usize) -> (usize, usize, usize, usize) {
        let r = (self.half_w.hypot(self.half_h) + margin).ceil();
        let clamp = |v: f64| v.clamp(0.0, extent as f64) as usize;
        (
            clamp(self.cy - r),
            clamp(self.cy + r + 1.0),
            clamp(self.cx - r),
            clamp(self.cx + r + 1.0),
        )
    }
}

/// Bilinear upsampling of a coarse random grid, values in [0, 1].
fn smooth_noise(rng: &mut ChaCha8Rng, extent: usize, cells: usize) -> Vec<f64> {
    let g: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.gen()).collect();
    let scale = cells as f64 / extent as f64;
    let mut out = Vec::with_capacity(extent * extent);
    for y in 0..extent {
        let fy = (y as f64 + 0.5) * scale;
        let (iy, ty) = ((fy as usize).min(cells - 1), fy - (fy as usize).min(cells - 1) as f64);
        for x in 0..extent {
            let fx = (x as f64 + 0.5) * scale;
            let (ix, tx) = ((fx as usize).min(cells - 1), fx - (fx as usize).min(cells - 1) as f64);
            let at = |j: usize, i: usize| g[j * (cells + 1) + i];
            let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
            let bot = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn render_scene(rng: &mut ChaCha8Rng, extent: usize, p: &SynthParams) -> Result<(RgbImage, Mask)> {
    let n = extent;
    let field = smooth_noise(rng, n, 4);
    let grass = [70.0, 105.0, 55.0];
    let soil = [125.0, 105.0, 75.0];
    let mut rgb: Vec<[f64; 3]> = field
        .iter()
        .map(|&t| [0, 1, 2].map(|c| grass[c] * (1.0 - t) + soil[c] * t))
        .collect();

    for _ in 0..rng.gen_range(0..=p.max_roads) {
        let width = rng.gen_range(4..=8);
        let at = rng.gen_range(0..n - width);
        let tone = rng.gen_range(95.0..125.0);
        let vertical = rng.gen_bool(0.5);
        for a in at..at + width {
            for b in 0..n {
                let (y, x) = if vertical { (b, a) } else { (a, b) };
                rgb[y * n + x] = [tone, tone, tone + 5.0];
            }
        }
    }

    let mut mask = vec![false; n * n];
    let mut set = 0usize;
    let target = rng.gen_range(p.min_buildings..=p.max_buildings);
    let min_px = (p.min_density * (n * n) as f64).ceil() as usize;
    let max_px = (p.max_density * (n * n) as f64).floor() as usize;
    let mut roofs = Vec::new();
    let mut attempts = 0;
    while (roofs.len() < target || set < min_px) && roofs.len() < p.max_buildings.max(target) + 64 {
        attempts += 1;
        if attempts > p.max_attempts {
            break;
        }
        let w = rng.gen_range(p.min_side..=p.max_side);
        let h = rng.gen_range(p.min_side..=p.max_side);
        let angle = if rng.gen_bool(p.rotated_fraction) {
            rng.gen_range(0.0..std::f64::consts::FRAC_PI_2)
        } else {
            0.0
        };
        let roof = Roof {
            cx: rng.gen_range(0.0..n as f64),
            cy: rng.gen_range(0.0..n as f64),
            half_w: w / 2.0,
            half_h: h / 2.0,
            cos: angle.cos(),
            sin: angle.sin(),
        };
        let (y0, y1, x0, x1) = roof.bounds(0.0, n);
        let mut cover = Vec::new();
        let mut clash = false;
        for y in y0..y1 {
            for x in x0..x1 {
                if roof.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    // Keep a one-pixel background gap to other roofs.
                    let near = (y.saturating_sub(1)..(y + 2).min(n))
                        .any(|yy| (x.saturating_sub(1)..(x + 2).min(n)).any(|xx| mask[yy * n + xx]));
                    if near {
                        clash = true;
                        break;
                    }
                    cover.push(y * n + x);
                }
            }
            if clash {
                break;
            }
        }
        if clash || cover.len() < 4 || set + cover.len() > max_px {
            continue;
        }
        for &i in &cover {
            mask[i] = true;
        }
        set += cover.len();
        roofs.push((roof, cover));
    }
    if set < min_px {
        return Err(Error::BadParams(format!(
            "could not reach density {} within {} attempts",
            p.min_density, p.max_attempts
        )));
    }

    // Shadows fall on the ground to the lower right of each roof.
    let shadow = 2usize;
    for (_, cover) in &roofs {
        for &i in cover {
            let (y, x) = (i / n + shadow, i % n + shadow);
            if y < n && x < n && !mask[y * n + x] {
                rgb[y * n + x] = rgb[y * n + x].map(|v| v * 0.55);
            }
        }
    }

    for (roof, cover) in &roofs {
        let base = match rng.gen_range(0..4) {
            0 => [175.0, 80.0, 65.0],
            1 => [190.0, 190.0, 195.0],
            2 => [150.0, 150.0, 160.0],
            _ => [200.0, 170.0, 130.0],
        };
        let jitter: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(-15.0..15.0));
        let ridge_period = rng.gen_range(3.0..7.0);
        for &i in cover {
            let (u, _) = roof.local((i % n) as f64 + 0.5, (i / n) as f64 + 0.5);
            let ridge = 8.0 * (u * std::f64::consts::TAU / ridge_period).sin();
            rgb[i] = [0, 1, 2].map(|c| base[c] + jitter[c] + ridge);
        }
    }

    let mut img = RgbImage::new(n as u32, n as u32);
    for (i, px) in rgb.iter().enumerate() {
        let e = [0, 1, 2].map(|_| p.noise * rng.gen_range(-1.0..1.0));
        img.put_pixel(
            (i % n) as u32,
            (i / n) as u32,
            Rgb([to_u8(px[0] + e[0]), to_u8(px[1] + e[1]), to_u8(px[2] + e[2])]),
        );
    }
    Ok((img, Mask::from_bools(n, n, &mask)?))
}

/// `count` square scenes, assigned round-robin to `params.locations`.
pub fn generate_synthetic(count: usize, extent: usize, seed: u64, params: &SynthParams) -> Result<Vec<Scene>> {
    params.validate(extent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locs = params.locations.len();
    (0..count)
        .map(|i| {
            let (img, mask) = render_scene(&mut rng, extent, params)?;
            Scene::new(params.locations[i % locs].clone(), (i / locs + 1) as u32, img, mask)
        })
        .collect()
}
