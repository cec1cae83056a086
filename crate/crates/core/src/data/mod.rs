//! Scenes, dataset splits, and the synthetic scene generator.

mod scene;
mod split;
mod synth;

pub use scene::{gt_dir, images_dir, load_dataset, load_scene, parse_scene_name, save_scene, Scene};
pub use split::{split_dataset, DatasetSplit, SplitRule};
pub use synth::{generate_synthetic, SynthParams};
