use crate::error::{Error, Result};

/// Row-major single-channel raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidRaster(format!(
                "extent must be at least 1x1, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::InvalidRaster(format!(
                "{height}x{width} raster needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Raster<U> {
        Raster {
            height: self.height,
            width: self.width,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn same_extent<U>(&self, other: &Raster<U>) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Copies the `size.0 x size.1` window with top-left corner `origin`.
    pub fn crop(&self, origin: (usize, usize), size: (usize, usize)) -> Result<Self> {
        let (oy, ox) = origin;
        let (h, w) = size;
        if oy + h > self.height || ox + w > self.width {
            return Err(Error::InvalidRaster(format!(
                "crop {h}x{w} at ({oy},{ox}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Self::from_fn(h, w, |y, x| self.get(oy + y, ox + x))
    }

    /// Mirrors left-right.
    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.width) {
            row.reverse();
        }
        out
    }

    /// Mirrors top-bottom.
    pub fn flip_vertical(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.width).rev() {
            data.extend_from_slice(row);
        }
        Self {
            height: self.height,
            width: self.width,
            data,
        }
    }
}
