//! Dataset tooling: manifest ingestion, ground-truth density
//! rasterization, synthetic dataset generation, and description
//! augmentation.

pub mod descriptions;
pub mod manifest;
pub mod raster;
pub mod synth;

pub use descriptions::{
    fetch_descriptions, generalize_description, DescriptionClient, DescriptionRecord,
    DescriptionRequest, ReplayCache,
};
pub use manifest::{load_manifest, read_manifest, write_manifest, DatasetManifest};
pub use raster::{gt_density_from_dots, resize_density};
pub use synth::{generate_synthetic, Shape, SynthConfig};
