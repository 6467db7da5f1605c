//! Synthetic bedside scenes with exact ground truth.
//!
//! Scenes are described by a [`SceneScript`]: flat-colored oriented
//! rectangles (with a faint actor-anchored speckle) on a constant
//! background, linear keyframe trajectories, per-pixel Gaussian noise and
//! the privacy blur. Rendering is deterministic given the script seed and
//! each frame renders independently, so frames may be generated in
//! parallel. Every painted rectangle is also emitted as an annotation, so
//! the ground truth matches the pixels by construction.

use crate::dataset::{Annotation, ClassId};
use crate::geometry::{OrientedBox, Point};
use crate::raster::{box_blur, Frame, RasterError, VideoMeta};
use crate::rng::{frame_rng, splitmix64};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Peak amplitude of the per-actor speckle texture, in gray levels.
const TEXTURE_AMPLITUDE: f64 = 6.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("actor {actor} has an empty trajectory")]
    EmptyTrajectory { actor: usize },
    #[error("actor {actor} trajectory is not strictly increasing at keyframe {keyframe}")]
    UnsortedTrajectory { actor: usize, keyframe: usize },
    #[error("actor {actor} keyframe {keyframe} references frame {frame} beyond frame_count {frame_count}")]
    FrameOutOfRange { actor: usize, keyframe: usize, frame: u64, frame_count: u64 },
    #[error("canvas must have positive fps and dimensions")]
    BadCanvas,
    #[error("noise sigma must be finite and non-negative, got {0}")]
    BadNoise(f64),
    #[error("frame index {0} is beyond frame_count {1}")]
    BadFrameIndex(u64, u64),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("script parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Box position of one actor at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: u64,
    pub bbox: OrientedBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub class: ClassId,
    /// Keyframes sorted by frame; box parameters interpolate linearly
    /// between them and hold constant outside the keyframed range.
    pub trajectory: Vec<Keyframe>,
    /// Base gray level of the painted rectangle.
    pub intensity: u8,
    /// Seed of the actor-anchored speckle texture.
    pub texture_seed: u64,
}

/// Complete scene description; serializes as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub video_id: String,
    pub canvas: VideoMeta,
    /// Background gray level.
    pub background: u8,
    pub actors: Vec<Actor>,
    /// Standard deviation of the per-pixel Gaussian noise.
    pub noise_sigma: f64,
    pub blur_radius: u32,
    pub blur_passes: u32,
    pub seed: u64,
}

impl SceneScript {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.canvas.fps <= 0.0 || self.canvas.width == 0 || self.canvas.height == 0 {
            return Err(SynthError::BadCanvas);
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(SynthError::BadNoise(self.noise_sigma));
        }
        for (a_idx, actor) in self.actors.iter().enumerate() {
            if actor.trajectory.is_empty() {
                return Err(SynthError::EmptyTrajectory { actor: a_idx });
            }
            for (k_idx, pair) in actor.trajectory.windows(2).enumerate() {
                if pair[1].frame <= pair[0].frame {
                    return Err(SynthError::UnsortedTrajectory { actor: a_idx, keyframe: k_idx + 1 });
                }
            }
            for (k_idx, kf) in actor.trajectory.iter().enumerate() {
                if kf.frame >= self.canvas.frame_count {
                    return Err(SynthError::FrameOutOfRange {
                        actor: a_idx,
                        keyframe: k_idx,
                        frame: kf.frame,
                        frame_count: self.canvas.frame_count,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let script: SceneScript = serde_json::from_str(text)?;
        script.validate()?;
        Ok(script)
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Box of `actor` at `frame`: linear interpolation of center, size and
/// angle between the surrounding keyframes, clamped at the trajectory ends.
/// Keyframe angles should avoid the +/- pi/2 wrap; interpolation is on the
/// stored values.
fn box_at(actor: &Actor, frame: u64) -> OrientedBox {
    let traj = &actor.trajectory;
    match traj.binary_search_by_key(&frame, |kf| kf.frame) {
        Ok(i) => traj[i].bbox,
        Err(0) => traj[0].bbox,
        Err(i) if i == traj.len() => traj[traj.len() - 1].bbox,
        Err(i) => {
            let (k0, k1) = (&traj[i - 1], &traj[i]);
            let t = (frame - k0.frame) as f64 / (k1.frame - k0.frame) as f64;
            let (a, b) = (&k0.bbox, &k1.bbox);
            OrientedBox::new(
                lerp(a.cx(), b.cx(), t),
                lerp(a.cy(), b.cy(), t),
                lerp(a.width(), b.width(), t),
                lerp(a.height(), b.height(), t),
                lerp(a.theta(), b.theta(), t),
            )
            .expect("interpolation of valid boxes stays valid")
        }
    }
}

/// Painting order puts the bed at the bottom, then patient, devices, staff.
fn paint_priority(class: ClassId) -> u8 {
    match class {
        ClassId::Bed => 0,
        ClassId::Patient => 1,
        ClassId::Devices => 2,
        ClassId::Staff => 3,
    }
}

/// Actor-anchored speckle in `[-TEXTURE_AMPLITUDE, TEXTURE_AMPLITUDE]`,
/// quantized to the box-local pixel grid so it travels with the actor.
fn speckle(texture_seed: u64, u: f64, v: f64) -> f64 {
    let qu = u.floor() as i64 as u64;
    let qv = v.floor() as i64 as u64;
    let h = splitmix64(texture_seed ^ qu.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ qv.rotate_left(17));
    let unit = (h >> 11) as f64 / (1u64 << 53) as f64; // [0, 1)
    (unit * 2.0 - 1.0) * TEXTURE_AMPLITUDE
}

/// Render one frame and its annotations.
///
/// Actors paint back-to-front as filled oriented rectangles, the whole
/// canvas gets seeded Gaussian noise, then the configured blur. Annotations
/// carry the exact interpolated boxes in script actor order.
pub fn render_frame(script: &SceneScript, index: u64) -> Result<(Frame, Vec<Annotation>), SynthError> {
    if index >= script.canvas.frame_count {
        return Err(SynthError::BadFrameIndex(index, script.canvas.frame_count));
    }
    let width = script.canvas.width;
    let height = script.canvas.height;
    let mut gray = vec![f64::from(script.background); width as usize * height as usize];

    let mut order: Vec<usize> = (0..script.actors.len()).collect();
    order.sort_by_key(|&i| paint_priority(script.actors[i].class));

    let mut annotations = Vec::with_capacity(script.actors.len());
    for &actor_idx in &order {
        let actor = &script.actors[actor_idx];
        let bbox = box_at(actor, index);
        paint_box(&mut gray, width, height, &bbox, actor);
    }
    for actor in &script.actors {
        annotations.push(Annotation {
            class: actor.class,
            bbox: box_at(actor, index),
            frame_index: index,
            video_id: script.video_id.clone(),
        });
    }

    let mut data = Vec::with_capacity(gray.len() * 3);
    if script.noise_sigma > 0.0 {
        let mut rng = frame_rng(script.seed, index);
        let normal = Normal::new(0.0, script.noise_sigma).expect("validated sigma");
        for &value in &gray {
            let noisy = (value + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
            data.extend_from_slice(&[noisy, noisy, noisy]);
        }
    } else {
        for &value in &gray {
            let v = value.round().clamp(0.0, 255.0) as u8;
            data.extend_from_slice(&[v, v, v]);
        }
    }
    let mut frame = Frame::new(width, height, 3, data, index)?;
    if script.blur_radius > 0 {
        frame = box_blur(&frame, script.blur_radius, script.blur_passes)?;
    }
    Ok((frame, annotations))
}

fn paint_box(gray: &mut [f64], width: u32, height: u32, bbox: &OrientedBox, actor: &Actor) {
    let (min, max) = bbox.aabb();
    let x0 = (min.x - 0.5).ceil().max(0.0) as u32;
    let y0 = (min.y - 0.5).ceil().max(0.0) as u32;
    if x0 >= width || y0 >= height || max.x < 0.0 || max.y < 0.0 {
        return;
    }
    let x1 = ((max.x - 0.5).floor().min(f64::from(width - 1))).max(0.0) as u32;
    let y1 = ((max.y - 0.5).floor().min(f64::from(height - 1))).max(0.0) as u32;
    let (sin, cos) = bbox.theta().sin_cos();
    let base = f64::from(actor.intensity);
    for y in y0..=y1 {
        let row = y as usize * width as usize;
        let py = f64::from(y) + 0.5;
        for x in x0..=x1 {
            let px = f64::from(x) + 0.5;
            if bbox.contains(Point::new(px, py)) {
                let dx = px - bbox.cx();
                let dy = py - bbox.cy();
                let u = dx * cos + dy * sin + bbox.width() / 2.0;
                let v = -dx * sin + dy * cos + bbox.height() / 2.0;
                gray[row + x as usize] = base + speckle(actor.texture_seed, u, v);
            }
        }
    }
}

/// Render the whole script.
pub fn render_video(script: &SceneScript) -> Result<(Vec<Frame>, Vec<Annotation>), SynthError> {
    script.validate()?;
    let mut frames = Vec::with_capacity(script.canvas.frame_count as usize);
    let mut annotations = Vec::new();
    for index in 0..script.canvas.frame_count {
        let (frame, mut frame_annotations) = render_frame(script, index)?;
        frames.push(frame);
        annotations.append(&mut frame_annotations);
    }
    Ok((frames, annotations))
}

/// Frame interval `[start, end)` in which the preset staff actor moves.
pub const PRESET_MOTION_START: u64 = 300;
pub const PRESET_MOTION_END: u64 = 450;
pub const PRESET_FRAME_COUNT: u64 = 750;

/// A 30 s, 640x400 @ 25 fps bedside scene: static bed, patient and two
/// devices, plus one staff actor that patrols along the bed between
/// [`PRESET_MOTION_START`] and [`PRESET_MOTION_END`] and stands still
/// otherwise. Blur and noise match the recording pipeline defaults.
pub fn preset_icu_scene(seed: u64) -> SceneScript {
    let canvas = VideoMeta { fps: 25.0, width: 640, height: 400, frame_count: PRESET_FRAME_COUNT };
    let obox = |cx: f64, cy: f64, w: f64, h: f64, theta: f64| {
        OrientedBox::new(cx, cy, w, h, theta).expect("preset boxes are valid")
    };
    let static_at = |bbox: OrientedBox| vec![Keyframe { frame: 0, bbox }];
    let texture = |label: &str| splitmix64(seed ^ crate::rng::derive_seed(seed, label));

    let staff_home = obox(130.0, 190.0, 120.0, 380.0, 0.0);
    let staff_far = obox(505.0, 190.0, 120.0, 380.0, 0.0);
    let actors = vec![
        Actor {
            class: ClassId::Bed,
            trajectory: static_at(obox(320.0, 300.0, 500.0, 170.0, 0.0)),
            intensity: 105,
            texture_seed: texture("bed"),
        },
        Actor {
            class: ClassId::Patient,
            trajectory: static_at(obox(330.0, 292.0, 380.0, 110.0, 0.05)),
            intensity: 150,
            texture_seed: texture("patient"),
        },
        Actor {
            class: ClassId::Devices,
            trajectory: static_at(obox(35.0, 120.0, 90.0, 150.0, -0.05)),
            intensity: 190,
            texture_seed: texture("device-left"),
        },
        Actor {
            class: ClassId::Devices,
            trajectory: static_at(obox(600.0, 110.0, 80.0, 130.0, 0.04)),
            intensity: 185,
            texture_seed: texture("device-right"),
        },
        Actor {
            class: ClassId::Staff,
            trajectory: vec![
                Keyframe { frame: 0, bbox: staff_home },
                Keyframe { frame: PRESET_MOTION_START, bbox: staff_home },
                Keyframe { frame: (PRESET_MOTION_START + PRESET_MOTION_END) / 2, bbox: staff_far },
                Keyframe { frame: PRESET_MOTION_END, bbox: staff_home },
                Keyframe { frame: PRESET_FRAME_COUNT - 1, bbox: staff_home },
            ],
            intensity: 235,
            texture_seed: texture("staff"),
        },
    ];
    SceneScript {
        video_id: format!("icu{:08x}", seed as u32),
        canvas,
        background: 24,
        actors,
        noise_sigma: 1.0,
        blur_radius: 6,
        blur_passes: 1,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clips::motion_series;
    use crate::raster::mean_abs_diff;

    fn tiny_canvas(frame_count: u64) -> VideoMeta {
        VideoMeta { fps: 25.0, width: 64, height: 48, frame_count }
    }

    fn plain_script(actors: Vec<Actor>, frame_count: u64) -> SceneScript {
        SceneScript {
            video_id: "t".into(),
            canvas: tiny_canvas(frame_count),
            background: 20,
            actors,
            noise_sigma: 0.0,
            blur_radius: 0,
            blur_passes: 1,
            seed: 5,
        }
    }

    #[test]
    fn zero_actor_script_is_constant_background() {
        let script = plain_script(Vec::new(), 4);
        let (frames, annotations) = render_video(&script).unwrap();
        assert_eq!(frames.len(), 4);
        assert!(annotations.is_empty());
        for f in &frames {
            assert!(f.data().iter().all(|&v| v == 20));
        }
    }

    #[test]
    fn static_actor_gives_identical_frames_and_constant_boxes() {
        let bbox = OrientedBox::new(30.0, 24.0, 16.0, 10.0, 0.2).unwrap();
        let actor = Actor {
            class: ClassId::Bed,
            trajectory: vec![Keyframe { frame: 0, bbox }],
            intensity: 140,
            texture_seed: 3,
        };
        let script = plain_script(vec![actor], 5);
        let (frames, annotations) = render_video(&script).unwrap();
        assert_eq!(annotations.len(), 5);
        for a in &annotations {
            assert_eq!(a.bbox, bbox);
            assert_eq!(a.class, ClassId::Bed);
        }
        for pair in frames.windows(2) {
            assert_eq!(pair[0].data(), pair[1].data());
        }
    }

    #[test]
    fn moving_actor_creates_motion_exactly_in_its_interval() {
        let at = |x: f64| OrientedBox::new(x, 24.0, 12.0, 12.0, 0.0).unwrap();
        let actor = Actor {
            class: ClassId::Staff,
            trajectory: vec![
                Keyframe { frame: 0, bbox: at(12.0) },
                Keyframe { frame: 5, bbox: at(12.0) },
                Keyframe { frame: 15, bbox: at(32.0) },
                Keyframe { frame: 19, bbox: at(32.0) },
            ],
            intensity: 200,
            texture_seed: 0,
        };
        let script = plain_script(vec![actor], 20);
        let (frames, _) = render_video(&script).unwrap();
        let series = motion_series(frames.iter(), 1).unwrap();
        for (index, value) in series {
            let moving = (6..=15).contains(&index);
            assert_eq!(value > 0.0, moving, "frame {index}: metric {value}");
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut script = preset_icu_scene(9);
        script.canvas.frame_count = 3;
        // trim trajectories to the shortened clip
        for actor in &mut script.actors {
            actor.trajectory.retain(|kf| kf.frame < 3);
        }
        let (a, _) = render_video(&script).unwrap();
        let (b, _) = render_video(&script).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trajectory_beyond_frame_count_is_rejected() {
        let bbox = OrientedBox::new(10.0, 10.0, 4.0, 4.0, 0.0).unwrap();
        let actor = Actor {
            class: ClassId::Bed,
            trajectory: vec![Keyframe { frame: 10, bbox }],
            intensity: 100,
            texture_seed: 0,
        };
        let script = plain_script(vec![actor], 5);
        assert!(matches!(render_video(&script), Err(SynthError::FrameOutOfRange { .. })));
    }

    #[test]
    fn script_json_round_trip() {
        let script = preset_icu_scene(33);
        let text = script.to_json();
        let back = SceneScript::from_json(&text).unwrap();
        assert_eq!(script, back);
    }

    #[test]
    fn preset_is_deterministic_per_seed() {
        assert_eq!(preset_icu_scene(7), preset_icu_scene(7));
        assert_ne!(preset_icu_scene(7).seed, preset_icu_scene(8).seed);
    }

    #[test]
    fn preset_annotations_cover_all_classes_every_frame() {
        let script = preset_icu_scene(1);
        for index in [0, PRESET_MOTION_START + 10, PRESET_FRAME_COUNT - 1] {
            let (_, annotations) = render_frame(&script, index).unwrap();
            let mut classes: Vec<ClassId> = annotations.iter().map(|a| a.class).collect();
            classes.sort();
            classes.dedup();
            assert_eq!(classes.len(), ClassId::COUNT);
        }
    }

    #[test]
    fn preset_motion_metric_clears_the_default_threshold() {
        // Metric above 2.0 while the staff walks, well below while static.
        let script = preset_icu_scene(4);
        let metric = |i: u64| {
            let (cur, _) = render_frame(&script, i).unwrap();
            let (prev, _) = render_frame(&script, i - 1).unwrap();
            mean_abs_diff(
                &crate::raster::to_grayscale(&cur).unwrap(),
                &crate::raster::to_grayscale(&prev).unwrap(),
            )
            .unwrap()
        };
        for i in [PRESET_MOTION_START + 1, PRESET_MOTION_START + 40, PRESET_MOTION_END] {
            let m = metric(i);
            assert!(m > 2.2, "moving frame {i}: metric {m} too small");
        }
        for i in [100, PRESET_MOTION_END + 60] {
            let m = metric(i);
            assert!(m < 1.0, "static frame {i}: metric {m} too large");
        }
    }
}
