pub mod dataset;
pub mod features;
pub mod geometry;
pub mod image;
pub mod kvconfig;
pub mod metrics;
pub mod morph;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod scorer;
pub mod toy;
pub mod trainer;
