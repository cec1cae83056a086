use super::Raster;
use crate::error::{Error, Result};

/// Binary building mask: 1 = building, 0 = background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask(Raster<u8>);

impl Mask {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidRaster(format!("mask value {v} is not 0 or 1")));
        }
        Ok(Self(Raster::new(height, width, values)?))
    }

    pub fn from_raster(raster: Raster<u8>) -> Result<Self> {
        let (h, w) = (raster.height(), raster.width());
        Self::new(h, w, raster.into_data())
    }

    pub fn from_bools(height: usize, width: usize, values: &[bool]) -> Result<Self> {
        Self::new(height, width, values.iter().map(|&b| b as u8).collect())
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        Ok(Self(Raster::from_fn(height, width, |y, x| f(y, x) as u8)?))
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Ok(Self(Raster::filled(height, width, 0)?))
    }

    pub fn ones(height: usize, width: usize) -> Result<Self> {
        Ok(Self(Raster::filled(height, width, 1)?))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    #[inline]
    pub fn is_set(&self, y: usize, x: usize) -> bool {
        self.0.get(y, x) == 1
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.0.set(y, x, value as u8);
    }

    pub fn values(&self) -> &[u8] {
        self.0.data()
    }

    pub fn raster(&self) -> &Raster<u8> {
        &self.0
    }

    pub fn count_set(&self) -> usize {
        self.0.data().iter().map(|&v| v as usize).sum()
    }

    pub fn crop(&self, origin: (usize, usize), size: (usize, usize)) -> Result<Self> {
        Ok(Self(self.0.crop(origin, size)?))
    }

    pub fn flip_horizontal(&self) -> Self {
        Self(self.0.flip_horizontal())
    }

    pub fn flip_vertical(&self) -> Self {
        Self(self.0.flip_vertical())
    }
}

/// Building pixels with a 4-connected background neighbour. Pixels outside the
/// raster count as background, so building pixels on the border are boundary.
pub fn boundary_pixels(mask: &Mask) -> Mask {
    let (h, w) = (mask.height(), mask.width());
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            if !mask.is_set(y, x) {
                continue;
            }
            let edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w;
            let touches_bg = edge
                || !mask.is_set(y - 1, x)
                || !mask.is_set(y + 1, x)
                || !mask.is_set(y, x - 1)
                || !mask.is_set(y, x + 1);
            if touches_bg {
                out[y * w + x] = 1;
            }
        }
    }
    Mask::new(h, w, out).expect("same extent as a valid mask")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_non_binary_values() {
        assert!(Mask::new(1, 2, vec![0, 2]).is_err());
        assert!(Mask::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn all_building_3x3_keeps_only_the_ring() {
        // The raster edge counts as background; the centre has none in reach.
        let m = Mask::ones(3, 3).unwrap();
        let want = Mask::new(3, 3, vec![1, 1, 1, 1, 0, 1, 1, 1, 1]).unwrap();
        assert_eq!(boundary_pixels(&m), want);
        assert_eq!(boundary_pixels(&Mask::ones(2, 2).unwrap()), Mask::ones(2, 2).unwrap());
    }

    #[test]
    fn single_building_pixel_row() {
        let m = Mask::new(1, 3, vec![0, 1, 0]).unwrap();
        assert_eq!(boundary_pixels(&m).values(), &[0, 1, 0]);
    }

    #[test]
    fn interior_of_5x5_block_is_not_boundary() {
        let m = Mask::ones(5, 5).unwrap();
        let b = boundary_pixels(&m);
        assert_eq!(b.count_set(), 16);
        assert!(!b.is_set(2, 2));
    }

    #[test]
    fn matches_neighbour_scan_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = Mask::from_fn(16, 16, |_, _| rng.gen_bool(0.6)).unwrap();
            let b = boundary_pixels(&m);
            for y in 0..16i64 {
                for x in 0..16i64 {
                    let mut expect = false;
                    if m.is_set(y as usize, x as usize) {
                        for (dy, dx) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                            let (ny, nx) = (y + dy, x + dx);
                            let outside = !(0..16).contains(&ny) || !(0..16).contains(&nx);
                            if outside || !m.is_set(ny as usize, nx as usize) {
                                expect = true;
                            }
                        }
                    }
                    assert_eq!(b.is_set(y as usize, x as usize), expect);
                }
            }
        }
    }
}
