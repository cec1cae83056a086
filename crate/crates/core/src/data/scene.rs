use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageReader, RgbImage};

use crate::distxform::io::{read_mask_png, write_mask_png};
use crate::distxform::Mask;
use crate::error::{Error, Result};

/// One aerial tile with its building mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub location: String,
    pub index: u32,
    pub image: RgbImage,
    pub mask: Mask,
}

impl Scene {
    pub fn new(location: impl Into<String>, index: u32, image: RgbImage, mask: Mask) -> Result<Self> {
        let location = location.into();
        let (w, h) = image.dimensions();
        if (h as usize, w as usize) != (mask.height(), mask.width()) {
            return Err(Error::ExtentMismatch(format!(
                "{location}{index}: image {h}x{w}, mask {}x{}",
                mask.height(),
                mask.width()
            )));
        }
        Ok(Self {
            id: format!("{location}{index}"),
            location,
            index,
            image,
            mask,
        })
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }
}

/// Splits a file stem like `austin7` into `("austin", 7)`.
pub fn parse_scene_name(file_name: &str) -> Result<(String, u32)> {
    let stem = Path::new(file_name)
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::UnparseableName(file_name.to_string()))?;
    let digits = stem.len() - stem.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    let (loc, idx) = stem.split_at(stem.len() - digits);
    if loc.is_empty() || idx.is_empty() {
        return Err(Error::UnparseableName(file_name.to_string()));
    }
    let index = idx
        .parse()
        .map_err(|_| Error::UnparseableName(file_name.to_string()))?;
    Ok((loc.to_string(), index))
}

pub fn load_scene(image_path: &Path, mask_path: &Path) -> Result<Scene> {
    let name = image_path
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    let (location, index) = parse_scene_name(name)?;
    let image = ImageReader::open(image_path)?
        .with_guessed_format()?
        .decode()
        .map_err(|source| Error::Decode {
            path: image_path.to_path_buf(),
            source,
        })?
        .into_rgb8();
    let mask = read_mask_png(mask_path)?;
    Scene::new(location, index, image, mask)
}

pub fn images_dir(root: &Path) -> PathBuf {
    root.join("images")
}

pub fn gt_dir(root: &Path) -> PathBuf {
    root.join("gt")
}

/// Writes `images/<id>.png` and `gt/<id>.png` under `root`.
pub fn save_scene(root: &Path, scene: &Scene) -> Result<()> {
    fs::create_dir_all(images_dir(root))?;
    fs::create_dir_all(gt_dir(root))?;
    scene
        .image
        .save(images_dir(root).join(format!("{}.png", scene.id)))?;
    write_mask_png(&gt_dir(root).join(format!("{}.png", scene.id)), &scene.mask)
}

/// Loads every `images/*.png` with its `gt/` counterpart, ordered by location then index.
pub fn load_dataset(root: &Path) -> Result<Vec<Scene>> {
    let dir = images_dir(root);
    if !dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no image directory at {}", dir.display()),
        )));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    let mut scenes = paths
        .iter()
        .map(|p| load_scene(p, &gt_dir(root).join(p.file_name().unwrap())))
        .collect::<Result<Vec<_>>>()?;
    scenes.sort_by(|a, b| (&a.location, a.index).cmp(&(&b.location, b.index)));
    Ok(scenes)
}
