//! Synthetic training data: textured rigid shapes over a textured background,
//! translating and rotating between two frames. Scenes are continuous
//! functions of space and time, so the intermediate frame is rendered at the
//! true pose and the displacement fields are analytic, including occlusion
//! regions where shapes uncover background.

use crate::error::{Error, Result};
use crate::flo;
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;
use crate::types::{FlowField, Image};
use std::path::PathBuf;

/// A training sample: two reference frames, the ground-truth intermediate
/// frame at time `t`, and (for synthetic scenes) the analytic flows.
#[derive(Debug, Clone)]
pub struct Triplet {
    pub frame0: Image,
    pub frame1: Image,
    pub target: Image,
    pub t: f64,
    pub flows: Option<(FlowField, FlowField)>,
}

/// Randomization ranges for scene synthesis.
#[derive(Debug, Clone)]
pub struct MotionConfig {
    /// Max background displacement per axis over the full frame interval.
    pub background_speed: f64,
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Max shape displacement per axis.
    pub shape_speed: f64,
    /// Max shape rotation in radians.
    pub max_rotation: f64,
    /// Half-extent range of shapes in pixels.
    pub min_size: f64,
    pub max_size: f64,
    /// Width of the soft alpha band at shape boundaries, in pixels.
    pub edge_softness: f64,
    /// Sinusoidal waves per texture channel.
    pub texture_waves: usize,
    /// Upper bound of the wave frequency in radians per pixel.
    pub texture_max_freq: f64,
}

impl MotionConfig {
    pub fn toy() -> Self {
        MotionConfig {
            background_speed: 4.0,
            min_shapes: 1,
            max_shapes: 2,
            shape_speed: 6.0,
            max_rotation: 0.12,
            min_size: 5.0,
            max_size: 12.0,
            edge_softness: 1.5,
            texture_waves: 4,
            texture_max_freq: 1.3,
        }
    }

    /// Everything static; frames and target coincide and flows vanish.
    pub fn zero_motion() -> Self {
        MotionConfig {
            background_speed: 0.0,
            min_shapes: 1,
            max_shapes: 1,
            shape_speed: 0.0,
            max_rotation: 0.0,
            min_size: 5.0,
            max_size: 10.0,
            edge_softness: 1.5,
            texture_waves: 2,
            texture_max_freq: 0.35,
        }
    }
}

#[derive(Debug, Clone)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

/// Smooth periodic texture: per-channel base plus two sinusoidal waves.
#[derive(Debug, Clone)]
struct Texture {
    base: [f64; 3],
    waves: [Vec<Wave>; 3],
}

impl Texture {
    fn random(rng: &mut Rng, n_waves: usize, max_freq: f64) -> Self {
        let mut waves: [Vec<Wave>; 3] = Default::default();
        let base = [
            rng.range(0.35, 0.65),
            rng.range(0.35, 0.65),
            rng.range(0.35, 0.65),
        ];
        let amp_hi = (0.42 / n_waves.max(1) as f64).min(0.14);
        for ch in waves.iter_mut() {
            for _ in 0..n_waves {
                let freq = rng.range(0.06, max_freq);
                let angle = rng.range(0.0, std::f64::consts::TAU);
                ch.push(Wave {
                    kx: freq * angle.cos(),
                    ky: freq * angle.sin(),
                    phase: rng.range(0.0, std::f64::consts::TAU),
                    amp: rng.range(0.04, amp_hi),
                });
            }
        }
        Texture { base, waves }
    }

    fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let mut c = self.base;
        for (ch, waves) in self.waves.iter().enumerate() {
            for w in waves {
                c[ch] += w.amp * (w.kx * x + w.ky * y + w.phase).sin();
            }
            c[ch] = c[ch].clamp(0.0, 1.0);
        }
        c
    }
}

#[derive(Debug, Clone, Copy)]
enum ShapeKind {
    Rect { half_w: f64, half_h: f64 },
    Disk { radius: f64 },
}

#[derive(Debug, Clone)]
struct Shape {
    kind: ShapeKind,
    center: (f64, f64),
    velocity: (f64, f64),
    rotation: f64,
    texture: Texture,
}

impl Shape {
    /// Signed distance to the boundary in local coordinates (negative inside).
    fn signed_distance(&self, qx: f64, qy: f64) -> f64 {
        match self.kind {
            ShapeKind::Rect { half_w, half_h } => (qx.abs() - half_w).max(qy.abs() - half_h),
            ShapeKind::Disk { radius } => (qx * qx + qy * qy).sqrt() - radius,
        }
    }

    /// Local coordinates of frame point (x, y) at time `t`.
    fn local_at(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let cx = self.center.0 + t * self.velocity.0;
        let cy = self.center.1 + t * self.velocity.1;
        let theta = -t * self.rotation;
        let (dx, dy) = (x - cx, y - cy);
        (
            theta.cos() * dx - theta.sin() * dy,
            theta.sin() * dx + theta.cos() * dy,
        )
    }

    /// Soft coverage in [0, 1] at time `t`.
    fn alpha(&self, x: f64, y: f64, t: f64, softness: f64) -> f64 {
        let (qx, qy) = self.local_at(x, y, t);
        let d = self.signed_distance(qx, qy);
        (0.5 - d / softness.max(1e-6)).clamp(0.0, 1.0)
    }

    /// Displacement of the surface point visible at (x, y, t0) over
    /// [t0, t1]: rigid motion about the moving centre.
    fn displacement(&self, x: f64, y: f64, t0: f64, t1: f64) -> (f64, f64) {
        let (qx, qy) = self.local_at(x, y, t0);
        let theta = t1 * self.rotation;
        let cx = self.center.0 + t1 * self.velocity.0;
        let cy = self.center.1 + t1 * self.velocity.1;
        let px = cx + theta.cos() * qx - theta.sin() * qy;
        let py = cy + theta.sin() * qx + theta.cos() * qy;
        (px - x, py - y)
    }
}

/// A fully-specified scene; rendering at any time is deterministic.
#[derive(Debug, Clone)]
pub struct Scene {
    h: usize,
    w: usize,
    background: Texture,
    background_velocity: (f64, f64),
    shapes: Vec<Shape>,
    edge_softness: f64,
}

impl Scene {
    /// Draws a random scene. Identical `(seed, size, config)` produce an
    /// identical scene.
    pub fn random(seed: u64, h: usize, w: usize, cfg: &MotionConfig) -> Scene {
        let mut rng = Rng::from_seed(derive_seed(seed, &[0x5cee]));
        let background = Texture::random(&mut rng, cfg.texture_waves, cfg.texture_max_freq);
        let background_velocity = (
            rng.range(-cfg.background_speed, cfg.background_speed),
            rng.range(-cfg.background_speed, cfg.background_speed),
        );
        let n = if cfg.max_shapes > cfg.min_shapes {
            cfg.min_shapes + rng.below(cfg.max_shapes - cfg.min_shapes + 1)
        } else {
            cfg.min_shapes
        };
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            let half_a = rng.range(cfg.min_size, cfg.max_size);
            let half_b = rng.range(cfg.min_size, cfg.max_size);
            let kind = if rng.uniform() < 0.5 {
                ShapeKind::Rect {
                    half_w: half_a,
                    half_h: half_b,
                }
            } else {
                ShapeKind::Disk { radius: half_a }
            };
            shapes.push(Shape {
                kind,
                center: (
                    rng.range(0.2 * w as f64, 0.8 * w as f64),
                    rng.range(0.2 * h as f64, 0.8 * h as f64),
                ),
                velocity: (
                    rng.range(-cfg.shape_speed, cfg.shape_speed),
                    rng.range(-cfg.shape_speed, cfg.shape_speed),
                ),
                rotation: rng.range(-cfg.max_rotation, cfg.max_rotation),
                texture: Texture::random(&mut rng, cfg.texture_waves, cfg.texture_max_freq),
            });
        }
        Scene {
            h,
            w,
            background,
            background_velocity,
            shapes,
            edge_softness: cfg.edge_softness,
        }
    }

    /// Renders the frame at time `t`.
    pub fn render(&self, t: f64) -> Image {
        let mut img = Tensor::zeros(&[self.h, self.w, 3]);
        for y in 0..self.h {
            for x in 0..self.w {
                let (fx, fy) = (x as f64, y as f64);
                let mut color = self.background.sample(
                    fx - t * self.background_velocity.0,
                    fy - t * self.background_velocity.1,
                );
                for shape in &self.shapes {
                    let a = shape.alpha(fx, fy, t, self.edge_softness);
                    if a > 0.0 {
                        let (qx, qy) = shape.local_at(fx, fy, t);
                        let sc = shape.texture.sample(qx, qy);
                        for c in 0..3 {
                            color[c] = (1.0 - a) * color[c] + a * sc[c];
                        }
                    }
                }
                for c in 0..3 {
                    img.set3(y, x, c, color[c]);
                }
            }
        }
        Image::new_unchecked(img)
    }

    /// Analytic displacement field of the visible surface from `t0` to `t1`.
    pub fn flow(&self, t0: f64, t1: f64) -> FlowField {
        let mut f = Tensor::zeros(&[self.h, self.w, 2]);
        for y in 0..self.h {
            for x in 0..self.w {
                let (fx, fy) = (x as f64, y as f64);
                // Topmost shape with majority coverage owns the pixel.
                let mut disp = (
                    (t1 - t0) * self.background_velocity.0,
                    (t1 - t0) * self.background_velocity.1,
                );
                for shape in self.shapes.iter().rev() {
                    if shape.alpha(fx, fy, t0, self.edge_softness) >= 0.5 {
                        disp = shape.displacement(fx, fy, t0, t1);
                        break;
                    }
                }
                f.set3(y, x, 0, disp.0);
                f.set3(y, x, 1, disp.1);
            }
        }
        FlowField::new_unchecked(f)
    }
}

/// Renders a full triplet with analytic bidirectional flows.
pub fn synth_triplet(
    seed: u64,
    size: (usize, usize),
    t: f64,
    cfg: &MotionConfig,
) -> Result<Triplet> {
    let (h, w) = size;
    if h < 8 || w < 8 {
        return Err(Error::validation(format!("degenerate triplet size {h}x{w}")));
    }
    if !(0.0 < t && t < 1.0) {
        return Err(Error::validation(format!("t must lie in (0, 1), got {t}")));
    }
    let scene = Scene::random(seed, h, w, cfg);
    Ok(Triplet {
        frame0: scene.render(0.0),
        frame1: scene.render(1.0),
        target: scene.render(t),
        t,
        flows: Some((scene.flow(0.0, 1.0), scene.flow(1.0, 0.0))),
    })
}

/// Sidecar tag identifying a synthetic pair on disk: enough to rebuild the
/// scene and its exact flows. Written as `synthetic.txt` next to the frames.
#[derive(Debug, Clone)]
pub struct SyntheticTag {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub t: f64,
    pub motion: MotionConfig,
}

pub const SYNTHETIC_TAG_FILE: &str = "synthetic.txt";

impl SyntheticTag {
    pub fn to_text(&self) -> String {
        let m = &self.motion;
        format!(
            "synthetic-triplet v1\nseed = {}\nheight = {}\nwidth = {}\nt = {}\n\
             background_speed = {}\nmin_shapes = {}\nmax_shapes = {}\nshape_speed = {}\n\
             max_rotation = {}\nmin_size = {}\nmax_size = {}\nedge_softness = {}\n\
             texture_waves = {}\ntexture_max_freq = {}\n",
            self.seed,
            self.height,
            self.width,
            self.t,
            m.background_speed,
            m.min_shapes,
            m.max_shapes,
            m.shape_speed,
            m.max_rotation,
            m.min_size,
            m.max_size,
            m.edge_softness,
            m.texture_waves,
            m.texture_max_freq
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("synthetic-triplet v1") {
            return Err(Error::format("not a synthetic triplet tag"));
        }
        let mut map = std::collections::BTreeMap::new();
        for line in lines {
            if let Some((k, v)) = line.split_once('=') {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| -> Result<String> {
            map.get(k)
                .cloned()
                .ok_or_else(|| Error::format(format!("synthetic tag missing key {k}")))
        };
        let pf = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::format(format!("synthetic tag: bad value for {k}")))
        };
        let pu = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::format(format!("synthetic tag: bad value for {k}")))
        };
        Ok(SyntheticTag {
            seed: get("seed")?
                .parse()
                .map_err(|_| Error::format("synthetic tag: bad seed"))?,
            height: pu("height")?,
            width: pu("width")?,
            t: pf("t")?,
            motion: MotionConfig {
                background_speed: pf("background_speed")?,
                min_shapes: pu("min_shapes")?,
                max_shapes: pu("max_shapes")?,
                shape_speed: pf("shape_speed")?,
                max_rotation: pf("max_rotation")?,
                min_size: pf("min_size")?,
                max_size: pf("max_size")?,
                edge_softness: pf("edge_softness")?,
                texture_waves: pu("texture_waves")?,
                texture_max_freq: pf("texture_max_freq")?,
            },
        })
    }

    pub fn rebuild(&self) -> Result<Triplet> {
        synth_triplet(self.seed, (self.height, self.width), self.t, &self.motion)
    }
}

/// Writes a synthetic triplet as a directory: `frame0.png`, `frame1.png`,
/// `gt.png`, `flow01.flo`, `flow10.flo` and the rebuildable sidecar tag.
pub fn write_triplet_dir(
    dir: impl AsRef<std::path::Path>,
    seed: u64,
    size: (usize, usize),
    t: f64,
    cfg: &MotionConfig,
) -> Result<Triplet> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let triplet = synth_triplet(seed, size, t, cfg)?;
    crate::pngio::write_png(dir.join("frame0.png"), &triplet.frame0)?;
    crate::pngio::write_png(dir.join("frame1.png"), &triplet.frame1)?;
    crate::pngio::write_png(dir.join("gt.png"), &triplet.target)?;
    let (f01, f10) = triplet.flows.as_ref().unwrap();
    flo::write_flow_file(dir.join("flow01.flo"), f01)?;
    flo::write_flow_file(dir.join("flow10.flo"), f10)?;
    let tag = SyntheticTag {
        seed,
        height: size.0,
        width: size.1,
        t,
        motion: cfg.clone(),
    };
    std::fs::write(dir.join(SYNTHETIC_TAG_FILE), tag.to_text())?;
    Ok(triplet)
}

/// Where bidirectional flows come from. The provider is frozen: its outputs
/// are constants to the optimizer, mirroring a pretrained motion estimator.
#[derive(Debug, Clone)]
pub enum FlowProvider {
    /// Exact analytic fields carried by synthetic triplets.
    SyntheticGroundTruth,
    /// Middlebury files on disk.
    FlowFiles { path01: PathBuf, path10: PathBuf },
}

impl FlowProvider {
    pub fn provide(&self, triplet: &Triplet) -> Result<(FlowField, FlowField)> {
        let (h, w) = triplet.frame0.size();
        let (f01, f10) = match self {
            FlowProvider::SyntheticGroundTruth => triplet
                .flows
                .clone()
                .ok_or_else(|| Error::validation("triplet carries no analytic flows"))?,
            FlowProvider::FlowFiles { path01, path10 } => (
                flo::read_flow_file(path01)?,
                flo::read_flow_file(path10)?,
            ),
        };
        for (name, f) in [("flow01", &f01), ("flow10", &f10)] {
            if f.size() != (h, w) {
                return Err(Error::dimension(format!(
                    "{name} is {}x{} but frames are {h}x{w}",
                    f.size().0,
                    f.size().1
                )));
            }
        }
        Ok((f01, f10))
    }
}
