//! Arm-2-Balls environment.
//!
//! A planar 7-joint arm with unit total length sits at the origin of the
//! `[-1, 1]²` scene. One ball can be grasped by touching it with the arm tip
//! and then follows the tip for the rest of the episode; a second, smaller
//! ball (the distractor) performs a Gaussian random walk that the arm cannot
//! influence. The agent perceives the scene as a 64×64 single-channel image
//! in which only the two balls are drawn.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_JOINTS: usize = 7;
pub const N_BASIS: usize = 4;
pub const THETA_DIM: usize = N_JOINTS * N_BASIS;
pub const DEFAULT_HORIZON: usize = 50;
pub const GRASP_RADIUS: f64 = 0.1;
pub const DEFAULT_SIGMA_D: f64 = 0.02;
pub const BALL_INIT: Point = [0.6, 0.6];

pub const BASIS_CENTERS: [f64; N_BASIS] = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
pub const BASIS_WIDTH: f64 = 0.15;

pub const IMAGE_SIZE: usize = 64;
pub const BALL_RADIUS: f64 = 0.15;
pub const DISTRACTOR_RADIUS: f64 = 0.08;
pub const BALL_INTENSITY: f32 = 1.0;
pub const DISTRACTOR_INTENSITY: f32 = 0.5;

pub const DATASET_MAGIC: &[u8; 8] = b"A2BDS001";

pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("segment lengths must be positive and sum to 1 (got sum {0})")]
    BadSegments(f64),
    #[error("parameterization must have {THETA_DIM} components in [-1, 1]")]
    BadParameterization,
    #[error("position {0:?} outside [-1, 1]^2")]
    OutOfBounds(Point),
    #[error("dataset must contain at least one record")]
    EmptyDataset,
    #[error("dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset {path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn clip_point(p: Point) -> Point {
    [p[0].clamp(-1.0, 1.0), p[1].clamp(-1.0, 1.0)]
}

fn in_bounds(p: Point) -> bool {
    p.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub joint_angles: [f64; N_JOINTS],
    pub segment_lengths: [f64; N_JOINTS],
}

impl ArmConfig {
    pub fn new(joint_angles: [f64; N_JOINTS], segment_lengths: [f64; N_JOINTS]) -> Result<Self, SimError> {
        let sum: f64 = segment_lengths.iter().sum();
        if segment_lengths.iter().any(|l| l.is_nan() || *l <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(SimError::BadSegments(sum));
        }
        Ok(Self { joint_angles, segment_lengths })
    }

    /// Arm with seven equal segments of length 1/7.
    pub fn equal_segments(joint_angles: [f64; N_JOINTS]) -> Self {
        Self { joint_angles, segment_lengths: [1.0 / N_JOINTS as f64; N_JOINTS] }
    }

    pub fn tip(&self) -> Point {
        forward_kinematics(self)
    }
}

/// Tip position of the planar chain. Joint angles are relative, so each
/// segment points along the running sum of the angles before it.
pub fn forward_kinematics(arm: &ArmConfig) -> Point {
    let mut heading = 0.0;
    let mut tip = [0.0, 0.0];
    for (angle, len) in arm.joint_angles.iter().zip(arm.segment_lengths.iter()) {
        heading += angle;
        tip[0] += len * heading.cos();
        tip[1] += len * heading.sin();
    }
    tip
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub arm: ArmConfig,
    pub ball_pos: Point,
    pub distractor_pos: Point,
    pub grasped: bool,
}

/// Initial state of an episode that the agent observes but does not choose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub distractor_init: Point,
    pub ball_init: Point,
}

impl Context {
    pub fn new(distractor_init: Point, ball_init: Point) -> Result<Self, SimError> {
        for p in [distractor_init, ball_init] {
            if !in_bounds(p) {
                return Err(SimError::OutOfBounds(p));
            }
        }
        Ok(Self { distractor_init, ball_init })
    }

    /// Distractor uniform in the scene, ball at its fixed start.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            distractor_init: [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)],
            ball_init: BALL_INIT,
        }
    }

    /// Flat `(distractor_x, distractor_y, ball_x, ball_y)` used in nearest-neighbour queries.
    pub fn as_array(&self) -> [f64; 4] {
        [self.distractor_init[0], self.distractor_init[1], self.ball_init[0], self.ball_init[1]]
    }
}

/// Motor-primitive weights: 4 radial-basis weights per joint, joint-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Parameterization([f64; THETA_DIM]);

impl Parameterization {
    pub fn new(values: [f64; THETA_DIM]) -> Result<Self, SimError> {
        if values.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)) {
            Ok(Self(values))
        } else {
            Err(SimError::BadParameterization)
        }
    }

    pub fn zeros() -> Self {
        Self([0.0; THETA_DIM])
    }

    /// Clamps every component into `[-1, 1]`.
    pub fn clipped(mut values: [f64; THETA_DIM]) -> Self {
        for v in values.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        Self(values)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut values = [0.0; THETA_DIM];
        for v in values.iter_mut() {
            *v = rng.random_range(-1.0..=1.0);
        }
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn values(&self) -> &[f64; THETA_DIM] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Parameterization {
    type Error = SimError;
    fn try_from(v: Vec<f64>) -> Result<Self, SimError> {
        let arr: [f64; THETA_DIM] = v.try_into().map_err(|_| SimError::BadParameterization)?;
        Self::new(arr)
    }
}

impl From<Parameterization> for Vec<f64> {
    fn from(p: Parameterization) -> Vec<f64> {
        p.0.to_vec()
    }
}

pub fn basis(b: usize, phase: f64) -> f64 {
    let d = phase - BASIS_CENTERS[b];
    (-d * d / (2.0 * BASIS_WIDTH * BASIS_WIDTH)).exp()
}

/// Joint angles commanded by `theta` at step `t` of a `horizon`-step episode.
pub fn motor_primitive_eval(theta: &Parameterization, t: usize, horizon: usize) -> [f64; N_JOINTS] {
    debug_assert!(t <= horizon && horizon > 0);
    let phase = t as f64 / horizon as f64;
    let phi: [f64; N_BASIS] = std::array::from_fn(|b| basis(b, phase));
    std::array::from_fn(|j| {
        let w = &theta.0[j * N_BASIS..(j + 1) * N_BASIS];
        let s: f64 = w.iter().zip(phi.iter()).map(|(w, p)| w * p).sum();
        (PI * s).clamp(-PI, PI)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image64 {
    pixels: Vec<f32>,
}

impl Image64 {
    pub fn zeros() -> Self {
        Self { pixels: vec![0.0; IMAGE_SIZE * IMAGE_SIZE] }
    }

    pub fn from_pixels(pixels: Vec<f32>) -> Option<Self> {
        (pixels.len() == IMAGE_SIZE * IMAGE_SIZE && pixels.iter().all(|p| (0.0..=1.0).contains(p)))
            .then_some(Self { pixels })
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * IMAGE_SIZE + col]
    }

    /// Row-major intensities.
    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|p| (p * 255.0).round() as u8).collect()
    }
}

/// Scene coordinates to continuous pixel coordinates `(col, row)`; row 0 is y = +1.
pub fn scene_to_pixel(p: Point) -> (f64, f64) {
    let half = IMAGE_SIZE as f64 / 2.0;
    ((p[0] + 1.0) * half, (1.0 - p[1]) * half)
}

const SUPERSAMPLE: usize = 4;

fn disc_coverage(center_px: (f64, f64), radius_px: f64, row: usize, col: usize) -> f64 {
    let (cx, cy) = center_px;
    let (x0, y0) = (col as f64, row as f64);
    // quick reject / accept on the pixel square
    let nx = cx.clamp(x0, x0 + 1.0);
    let ny = cy.clamp(y0, y0 + 1.0);
    if (nx - cx).powi(2) + (ny - cy).powi(2) > radius_px * radius_px {
        return 0.0;
    }
    let fx = if cx - x0 > 0.5 { x0 } else { x0 + 1.0 };
    let fy = if cy - y0 > 0.5 { y0 } else { y0 + 1.0 };
    if (fx - cx).powi(2) + (fy - cy).powi(2) <= radius_px * radius_px {
        return 1.0;
    }
    let step = 1.0 / SUPERSAMPLE as f64;
    let mut hits = 0;
    for sy in 0..SUPERSAMPLE {
        for sx in 0..SUPERSAMPLE {
            let px = x0 + (sx as f64 + 0.5) * step;
            let py = y0 + (sy as f64 + 0.5) * step;
            if (px - cx).powi(2) + (py - cy).powi(2) <= radius_px * radius_px {
                hits += 1;
            }
        }
    }
    hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
}

fn draw_disc(img: &mut Image64, center: Point, radius: f64, intensity: f32) {
    let scale = IMAGE_SIZE as f64 / 2.0;
    let c = scene_to_pixel(center);
    let r = radius * scale;
    let lo_col = ((c.0 - r).floor().max(0.0)) as usize;
    let hi_col = ((c.0 + r).ceil().min(IMAGE_SIZE as f64)) as usize;
    let lo_row = ((c.1 - r).floor().max(0.0)) as usize;
    let hi_row = ((c.1 + r).ceil().min(IMAGE_SIZE as f64)) as usize;
    for row in lo_row..hi_row {
        for col in lo_col..hi_col {
            let v = (disc_coverage(c, r, row, col) as f32) * intensity;
            let px = &mut img.pixels[row * IMAGE_SIZE + col];
            *px = px.max(v);
        }
    }
}

/// Renders the two balls as anti-aliased discs on a black background.
/// Overlaps keep the brighter value.
pub fn render_scene(ball: Point, distractor: Point) -> Image64 {
    let mut img = Image64::zeros();
    draw_disc(&mut img, distractor, DISTRACTOR_RADIUS, DISTRACTOR_INTENSITY);
    draw_disc(&mut img, ball, BALL_RADIUS, BALL_INTENSITY);
    img
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    pub final_state: EnvState,
    pub trajectory: Vec<EnvState>,
    pub observation: Image64,
    /// `(ball_x, ball_y, distractor_x, distractor_y)` at the end of the episode.
    pub true_features: [f64; 4],
}

impl RolloutResult {
    pub fn ball(&self) -> Point {
        self.final_state.ball_pos
    }

    pub fn grasped(&self) -> bool {
        self.final_state.grasped
    }
}

/// Environment dynamics. Cheap to copy; all randomness comes from the
/// distractor stream passed to [`ArmEnv::rollout`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmEnv {
    pub segment_lengths: [f64; N_JOINTS],
    pub horizon: usize,
    pub sigma_d: f64,
    /// Skip rasterisation when only feature-space encoders are used.
    pub render: bool,
}

impl Default for ArmEnv {
    fn default() -> Self {
        Self {
            segment_lengths: [1.0 / N_JOINTS as f64; N_JOINTS],
            horizon: DEFAULT_HORIZON,
            sigma_d: DEFAULT_SIGMA_D,
            render: true,
        }
    }
}

impl ArmEnv {
    pub fn with_sigma_d(sigma_d: f64) -> Self {
        Self { sigma_d, ..Self::default() }
    }

    /// Runs one episode. Arm starts fully extended (all joints at 0); at each
    /// step `t = 1..=horizon` it moves to the motor-primitive pose, grasps
    /// the ball on first contact, and the distractor takes one walk step.
    pub fn rollout<R: Rng + ?Sized>(
        &self,
        ctx: &Context,
        theta: &Parameterization,
        distractor_rng: &mut R,
    ) -> RolloutResult {
        let walk = (self.sigma_d > 0.0).then(|| Normal::new(0.0, self.sigma_d).expect("finite sigma_d"));
        let mut state = EnvState {
            arm: ArmConfig { joint_angles: [0.0; N_JOINTS], segment_lengths: self.segment_lengths },
            ball_pos: ctx.ball_init,
            distractor_pos: ctx.distractor_init,
            grasped: false,
        };
        let mut trajectory = Vec::with_capacity(self.horizon + 1);
        trajectory.push(state);
        for t in 1..=self.horizon {
            state.arm.joint_angles = motor_primitive_eval(theta, t, self.horizon);
            let tip = state.arm.tip();
            if !state.grasped {
                let d = ((tip[0] - state.ball_pos[0]).powi(2) + (tip[1] - state.ball_pos[1]).powi(2)).sqrt();
                if d <= GRASP_RADIUS {
                    state.grasped = true;
                }
            }
            if state.grasped {
                state.ball_pos = clip_point(tip);
            }
            if let Some(walk) = &walk {
                let step = [walk.sample(distractor_rng), walk.sample(distractor_rng)];
                state.distractor_pos =
                    clip_point([state.distractor_pos[0] + step[0], state.distractor_pos[1] + step[1]]);
            }
            trajectory.push(state);
        }
        let observation = if self.render {
            render_scene(state.ball_pos, state.distractor_pos)
        } else {
            Image64::zeros()
        };
        RolloutResult {
            final_state: state,
            trajectory,
            observation,
            true_features: [state.ball_pos[0], state.ball_pos[1], state.distractor_pos[0], state.distractor_pos[1]],
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub seed: u64,
}

/// In-memory view of an `A2BDS001` dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub header: DatasetHeader,
    /// `n * 4096` row-major uint8 pixels.
    pub pixels: Vec<u8>,
    /// `(ball_x, ball_y, distractor_x, distractor_y)` per record.
    pub positions: Vec<[f32; 4]>,
}

impl Dataset {
    pub fn image(&self, i: usize) -> Image64 {
        let n = IMAGE_SIZE * IMAGE_SIZE;
        let px = self.pixels[i * n..(i + 1) * n].iter().map(|b| *b as f32 / 255.0).collect();
        Image64 { pixels: px }
    }
}

/// Writes `n` rendered scenes with uniform ball and distractor positions.
pub fn generate_dataset(n: usize, seed: u64, path: &Path) -> Result<DatasetHeader, SimError> {
    if n == 0 {
        return Err(SimError::EmptyDataset);
    }
    let io = |source| SimError::Io { path: path.to_path_buf(), source };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let header = DatasetHeader { n, h: IMAGE_SIZE, w: IMAGE_SIZE, c: 1, seed };
    let mut positions = Vec::with_capacity(n);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let json = serde_json::to_vec(&header).expect("header serializes");
    out.write_all(DATASET_MAGIC).map_err(io)?;
    out.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    out.write_all(&json).map_err(io)?;
    for _ in 0..n {
        let p: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let img = render_scene([p[0], p[1]], [p[2], p[3]]);
        out.write_all(&img.to_bytes()).map_err(io)?;
        positions.push(p);
    }
    for p in &positions {
        for v in p {
            out.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)?;
    Ok(header)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, SimError> {
    let bytes = std::fs::read(path).map_err(|source| SimError::Io { path: path.to_path_buf(), source })?;
    let bad = |msg: &str| SimError::Format { path: path.to_path_buf(), msg: msg.to_string() };
    if bytes.len() < 12 || &bytes[..8] != DATASET_MAGIC {
        return Err(bad("bad magic"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = 12 + hlen;
    let header: DatasetHeader = bytes
        .get(12..body)
        .ok_or_else(|| bad("truncated header"))
        .and_then(|h| serde_json::from_slice(h).map_err(|e| bad(&e.to_string())))?;
    if header.h != IMAGE_SIZE || header.w != IMAGE_SIZE || header.c != 1 {
        return Err(bad("unsupported image shape"));
    }
    let npx = header.n * IMAGE_SIZE * IMAGE_SIZE;
    if bytes.len() != body + npx + header.n * 16 {
        return Err(bad("length does not match header"));
    }
    let pixels = bytes[body..body + npx].to_vec();
    let positions = bytes[body + npx..]
        .chunks_exact(16)
        .map(|c| std::array::from_fn(|k| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap())))
        .collect();
    Ok(Dataset { header, pixels, positions })
}
