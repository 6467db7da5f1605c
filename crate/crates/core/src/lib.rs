//! Support toolkit for object detection on privacy-blurred bedside video.
//!
//! The crate covers everything around the detector itself: the privacy box
//! blur, motion-based clip extraction, the temporal RGB channel encoding
//! (grayscale / pixel-change map / previous-box bitmap), rotated-box
//! geometry with exact IoU, dataset formats with a frame-level split, a
//! mAP@.5 + confusion-matrix evaluator, and a synthetic scene generator for
//! desk-scale end-to-end testing. Detector inputs and outputs cross the
//! boundary as files: packed raw frame streams and per-frame label or
//! detection text files.

pub mod clips;
pub mod dataset;
pub mod encoder;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod raster;
pub mod rng;
pub mod synth;
