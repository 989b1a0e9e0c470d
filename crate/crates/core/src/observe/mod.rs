//! Observation spaces: the 96x96 RGB frame, its (4, 84, 84) preprocessed
//! stack, and a compact feature vector for cheap training runs.

mod features;
mod pipeline;
mod preprocess;
mod raster;

pub use features::{cast_ray, observe_features, FeatureConfig};
pub use pipeline::{AgentEnv, AgentStep, ObsMode, ObserveConfig};
pub use preprocess::{
    crop, luma, resize_84, to_grayscale, Crop, FrameStack, Plane, PROCESSED_SIZE, STACK_DEPTH,
};
pub use raster::{rasterize, view_radius, RawFrame, ANCHOR, CAR, FRAME_SIZE, GRASS, ROAD, WHEEL, ZOOM};
