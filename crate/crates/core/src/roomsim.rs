//! Shoebox image-source room simulator.
//!
//! Each image source contributes `gain / (4 pi d)` at the fractional delay
//! `d / c * fs`, split across the two neighbouring samples by linear
//! interpolation. Images are enumerated on the integer lattice
//! `|i| + |j| + |k| <= max_image_order`, where `|i|` is the number of
//! reflections off the two x walls.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irdata::{GridPoint, IrSet, Manifest, MicCounts, MicGroup, PositionId, SCHEMA_VERSION};

pub type Point = [f64; 3];

fn default_speed_of_sound() -> f64 {
    343.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Room extent along x, y, z in meters.
    pub dimensions: Point,
    /// Pressure reflection coefficients in wall order x=0, x=Lx, y=0, y=Ly, z=0, z=Lz.
    pub wall_reflection_beta: [f64; 6],
    pub max_image_order: usize,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
    pub sample_rate_hz: u32,
    #[serde(rename = "ir_length_K")]
    pub ir_length: usize,
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.dimensions.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(Error::invalid("room dimensions must be positive"));
        }
        if !self
            .wall_reflection_beta
            .iter()
            .all(|b| (0.0..1.0).contains(b))
        {
            return Err(Error::invalid("wall reflection coefficients must lie in [0, 1)"));
        }
        if !(self.speed_of_sound.is_finite() && self.speed_of_sound > 0.0) {
            return Err(Error::invalid("speed of sound must be positive"));
        }
        if self.sample_rate_hz == 0 || self.ir_length == 0 {
            return Err(Error::invalid("sample rate and IR length must be positive"));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.iter()
            .zip(&self.dimensions)
            .all(|(c, d)| c.is_finite() && *c > 0.0 && c < d)
    }

    fn check_inside(&self, p: &Point, what: &str) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::invalid(format!("{what} {p:?} is not strictly inside the room")))
        }
    }
}

/// One mirrored copy of a source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageSource {
    pub position: Point,
    /// Product of the wall reflection coefficients along the path.
    pub gain: f64,
    pub order: usize,
}

/// Image position and reflection gain along one axis for lattice index `i`.
fn axis_image(i: i64, x: f64, len: f64, beta_near: f64, beta_far: f64) -> (f64, f64) {
    let pos = i as f64 * len + if i % 2 == 0 { x } else { len - x };
    let a = i.unsigned_abs() as i32;
    let (near, far) = if i >= 0 { (a / 2, (a + 1) / 2) } else { ((a + 1) / 2, a / 2) };
    (pos, beta_near.powi(near) * beta_far.powi(far))
}

/// All image sources of `source` up to the room's `max_image_order`.
pub fn image_sources(room: &RoomSpec, source: &Point) -> Vec<ImageSource> {
    let order = room.max_image_order as i64;
    let b = &room.wall_reflection_beta;
    let mut out = Vec::new();
    for i in -order..=order {
        let rem_i = order - i.abs();
        let (x, gx) = axis_image(i, source[0], room.dimensions[0], b[0], b[1]);
        for j in -rem_i..=rem_i {
            let rem_j = rem_i - j.abs();
            let (y, gy) = axis_image(j, source[1], room.dimensions[1], b[2], b[3]);
            for k in -rem_j..=rem_j {
                let (z, gz) = axis_image(k, source[2], room.dimensions[2], b[4], b[5]);
                out.push(ImageSource {
                    position: [x, y, z],
                    gain: gx * gy * gz,
                    order: (i.abs() + j.abs() + k.abs()) as usize,
                });
            }
        }
    }
    out
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Impulse response from `source` to `mic`, `room.ir_length` samples long.
pub fn simulate_ir(room: &RoomSpec, source: &Point, mic: &Point) -> Result<Vec<f64>> {
    room.validate()?;
    room.check_inside(source, "source")?;
    room.check_inside(mic, "microphone")?;
    if distance(source, mic) == 0.0 {
        return Err(Error::invalid("source and microphone coincide"));
    }
    let k = room.ir_length;
    let fs = room.sample_rate_hz as f64;
    let mut h = vec![0.0; k];
    for img in image_sources(room, source) {
        if img.gain == 0.0 {
            continue;
        }
        let d = distance(&img.position, mic);
        let delay = d * fs / room.speed_of_sound;
        let n0 = delay.floor();
        if n0 >= k as f64 {
            continue;
        }
        let n0 = n0 as usize;
        let frac = delay - n0 as f64;
        let amp = img.gain / (4.0 * PI * d);
        h[n0] += amp * (1.0 - frac);
        if n0 + 1 < k {
            h[n0 + 1] += amp * frac;
        }
    }
    Ok(h)
}

/// Regular listener grid in the horizontal plane; ids run along x first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Point,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<Point> {
        let mut pts = Vec::with_capacity(self.nx * self.ny);
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                pts.push([
                    self.origin[0] + ix as f64 * self.spacing,
                    self.origin[1] + iy as f64 * self.spacing,
                    self.origin[2],
                ]);
            }
        }
        pts
    }
}

/// Loudspeaker and microphone layout. Bright and observation mics are given
/// as offsets from the listener and move with it; dark mics are fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub loudspeakers: Vec<Point>,
    pub bright_offsets: Vec<Point>,
    pub observation_offsets: Vec<Point>,
    pub dark_mics: Vec<Point>,
    pub grid: GridSpec,
}

/// Absolute microphone positions for one listener position.
#[derive(Clone, Debug, PartialEq)]
pub struct MicPoints {
    pub bright: Vec<Point>,
    pub dark: Vec<Point>,
    pub observation: Vec<Point>,
}

impl MicPoints {
    pub fn group(&self, group: MicGroup) -> &[Point] {
        match group {
            MicGroup::Bright => &self.bright,
            MicGroup::Dark => &self.dark,
            MicGroup::Observation => &self.observation,
        }
    }
}

fn translate(p: &Point, by: &Point) -> Point {
    [p[0] + by[0], p[1] + by[1], p[2] + by[2]]
}

impl SceneGeometry {
    pub fn listener_positions(&self) -> Vec<Point> {
        self.grid.points()
    }

    pub fn mic_points_at(&self, listener: &Point) -> MicPoints {
        MicPoints {
            bright: self.bright_offsets.iter().map(|o| translate(listener, o)).collect(),
            dark: self.dark_mics.clone(),
            observation: self
                .observation_offsets
                .iter()
                .map(|o| translate(listener, o))
                .collect(),
        }
    }

    pub fn mic_points(&self, pos: PositionId) -> MicPoints {
        self.mic_points_at(&self.listener_positions()[pos.0])
    }

    fn validate(&self) -> Result<()> {
        if self.loudspeakers.is_empty()
            || self.bright_offsets.is_empty()
            || self.observation_offsets.is_empty()
            || self.dark_mics.is_empty()
        {
            return Err(Error::invalid("scene needs loudspeakers and mics in every group"));
        }
        if self.grid.nx == 0 || self.grid.ny == 0 {
            return Err(Error::invalid("listener grid is empty"));
        }
        if (self.grid.spacing.is_nan() || self.grid.spacing <= 0.0) && self.grid.nx * self.grid.ny > 1 {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        Ok(())
    }
}

/// Everything `gen-scene` needs: `scene.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub room: RoomSpec,
    pub geometry: SceneGeometry,
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("serializable");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn build(&self) -> Result<IrSet> {
        build_scene_irset(&self.room, &self.geometry)
    }
}

/// Simulates every (position, group, mic, loudspeaker) IR of a scene.
pub fn build_scene_irset(room: &RoomSpec, geom: &SceneGeometry) -> Result<IrSet> {
    room.validate()?;
    geom.validate()?;
    let listeners = geom.listener_positions();
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        sample_rate_hz: room.sample_rate_hz,
        ir_length: room.ir_length,
        num_loudspeakers: geom.loudspeakers.len(),
        mics: MicCounts {
            bright: geom.bright_offsets.len(),
            dark: geom.dark_mics.len(),
            observation: geom.observation_offsets.len(),
        },
        grid: listeners
            .iter()
            .enumerate()
            .map(|(i, p)| GridPoint {
                id: PositionId(i),
                x: p[0],
                y: p[1],
                z: p[2],
                original_id: None,
            })
            .collect(),
    };

    let blocks = listeners
        .par_iter()
        .map(|listener| {
            let mics = geom.mic_points_at(listener);
            let mut block = Vec::with_capacity(manifest.position_len());
            for group in MicGroup::ALL {
                for mic in mics.group(group) {
                    for ls in &geom.loudspeakers {
                        block.extend(simulate_ir(room, ls, mic)?);
                    }
                }
            }
            Ok(block)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    IrSet::new(manifest, blocks.concat())
}

/// The small canonical scene used by tests and the default CLI runs:
/// a 4 x 5 x 3 m room, 8 kHz, K = 256, three loudspeakers, two mics per
/// group and a 3 x 3 listener grid at 10 cm spacing.
///
/// The loudspeakers form a short angled line beside the listener grid and
/// the dark zone sits about 0.6 m on the other side. Placement was chosen so
/// that a filter designed for one grid point loses contrast at the others;
/// with loudspeakers far from the grid every position looks alike and the
/// tracking schemes cannot be told apart.
pub fn desk_scene() -> SceneFile {
    SceneFile {
        room: RoomSpec {
            dimensions: [4.0, 5.0, 3.0],
            wall_reflection_beta: [0.5; 6],
            max_image_order: 2,
            speed_of_sound: 343.0,
            sample_rate_hz: 8000,
            ir_length: 256,
        },
        geometry: SceneGeometry {
            loudspeakers: vec![[2.61, 1.51, 1.18], [2.73, 1.72, 1.26], [2.85, 1.92, 1.11]],
            bright_offsets: vec![[-0.12, 0.0, 0.0], [-0.12, 0.05, 0.0]],
            observation_offsets: vec![[-0.075, 0.35, 0.1], [0.075, 0.35, 0.0]],
            dark_mics: vec![[1.49, 2.19, 1.2], [1.59, 2.19, 1.2]],
            grid: GridSpec {
                origin: [2.16, 1.89, 1.2],
                spacing: 0.1,
                nx: 3,
                ny: 3,
            },
        },
    }
}

/// A full-size scene: 48 kHz,
/// K = 4000, a 10-element line array plus two headrest loudspeakers,
/// 10 bright, 12 dark and 4 observation mics, 5 x 3 grid. Far too heavy
/// for CI.
pub fn full_scale_scene() -> SceneFile {
    let mut loudspeakers: Vec<Point> = (0..10)
        .map(|i| [2.55 + 0.1 * i as f64, 1.3, 1.21])
        .collect();
    loudspeakers.push([2.77, 3.45, 1.3]);
    loudspeakers.push([3.23, 3.45, 1.3]);
    let bright_offsets = (0..10)
        .map(|i| [-0.2 + 0.05 * (i % 5) as f64, -0.05 * (i / 5) as f64, 0.09])
        .collect();
    let observation_offsets = vec![
        [-0.075, 0.45, 0.15],
        [0.075, 0.45, 0.15],
        [-0.075, 0.45, 0.04],
        [0.075, 0.45, 0.04],
    ];
    let dark_mics = (0..12)
        .map(|i| [1.4 + 0.1 * (i % 4) as f64, 3.0 + 0.1 * (i / 4) as f64, 1.02])
        .collect();
    SceneFile {
        room: RoomSpec {
            dimensions: [10.0, 6.0, 3.0],
            wall_reflection_beta: [0.6; 6],
            max_image_order: 3,
            speed_of_sound: 343.0,
            sample_rate_hz: 48_000,
            ir_length: 4000,
        },
        geometry: SceneGeometry {
            loudspeakers,
            bright_offsets,
            observation_offsets,
            dark_mics,
            grid: GridSpec {
                origin: [2.8, 3.0, 1.2],
                spacing: 0.1,
                nx: 5,
                ny: 3,
            },
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_room(order: usize, beta: f64) -> RoomSpec {
        RoomSpec {
            dimensions: [6.0, 7.0, 5.0],
            wall_reflection_beta: [beta; 6],
            max_image_order: order,
            speed_of_sound: 343.0,
            sample_rate_hz: 343,
            ir_length: 16,
        }
    }

    #[test]
    fn direct_path_integer_delay() {
        let room = unit_room(0, 0.5);
        let h = simulate_ir(&room, &[2.0, 2.0, 2.0], &[3.0, 2.0, 2.0]).unwrap();
        let expected = 1.0 / (4.0 * PI);
        assert!((h[1] - expected).abs() < 1e-15);
        assert!(h.iter().enumerate().all(|(i, &x)| i == 1 || x == 0.0));
    }

    #[test]
    fn zero_beta_kills_reflections() {
        let src = [2.0, 2.0, 2.0];
        let mic = [3.1, 2.4, 1.7];
        let direct = simulate_ir(&unit_room(0, 0.0), &src, &mic).unwrap();
        for order in 1..4 {
            assert_eq!(simulate_ir(&unit_room(order, 0.0), &src, &mic).unwrap(), direct);
        }
    }

    #[test]
    fn reflections_add_energy() {
        let src = [2.0, 2.0, 2.0];
        let mic = [3.1, 2.4, 1.7];
        let mut room = unit_room(2, 0.0);
        room.sample_rate_hz = 8000;
        room.ir_length = 512;
        let e0: f64 = simulate_ir(&room, &src, &mic).unwrap().iter().map(|x| x * x).sum();
        room.wall_reflection_beta = [0.5; 6];
        let e1: f64 = simulate_ir(&room, &src, &mic).unwrap().iter().map(|x| x * x).sum();
        assert!(e0.is_finite() && e1.is_finite() && e0 <= e1);
    }

    #[test]
    fn image_lattice_count_matches_enumeration() {
        for order in 0..=3usize {
            let o = order as i64;
            let brute = (-o..=o)
                .flat_map(|i| (-o..=o).flat_map(move |j| (-o..=o).map(move |k| (i, j, k))))
                .filter(|(i, j, k)| i.abs() + j.abs() + k.abs() <= o)
                .count();
            let room = unit_room(order, 0.5);
            assert_eq!(image_sources(&room, &[1.0, 1.0, 1.0]).len(), brute);
        }
    }

    #[test]
    fn first_order_images_are_wall_mirrors() {
        let room = unit_room(1, 0.5);
        let src = [1.0, 2.0, 3.0];
        let imgs = image_sources(&room, &src);
        let mirrors = [
            [-1.0, 2.0, 3.0],
            [11.0, 2.0, 3.0],
            [1.0, -2.0, 3.0],
            [1.0, 12.0, 3.0],
            [1.0, 2.0, -3.0],
            [1.0, 2.0, 7.0],
        ];
        for m in mirrors {
            let img = imgs.iter().find(|i| i.position == m).expect("mirror present");
            assert_eq!((img.order, img.gain), (1, 0.5));
        }
    }

    #[test]
    fn invalid_points() {
        let room = unit_room(1, 0.5);
        assert!(simulate_ir(&room, &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]).is_err());
        assert!(simulate_ir(&room, &[1.0, 1.0, 1.0], &[7.0, 1.0, 1.0]).is_err());
        assert!(simulate_ir(&room, &[0.0, 1.0, 1.0], &[2.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn listener_moves_rigid_mics() {
        let g = desk_scene().geometry;
        let a = g.mic_points(PositionId(0));
        let b = g.mic_points(PositionId(1));
        for (pa, pb) in a.bright.iter().zip(&b.bright).chain(a.observation.iter().zip(&b.observation)) {
            assert!((pb[0] - pa[0] - 0.1).abs() < 1e-12);
            assert_eq!((pa[1], pa[2]), (pb[1], pb[2]));
        }
        assert_eq!(a.dark, b.dark);
    }

    #[test]
    fn single_position_scene_counts() {
        let mut scene = desk_scene();
        scene.geometry.loudspeakers.truncate(1);
        scene.geometry.bright_offsets.truncate(1);
        scene.geometry.dark_mics.truncate(1);
        scene.geometry.observation_offsets.truncate(1);
        scene.geometry.grid.nx = 1;
        scene.geometry.grid.ny = 1;
        let set = scene.build().unwrap();
        assert_eq!(set.num_positions(), 1);
        assert_eq!(set.position_block(PositionId(0)).len(), 3 * 256);
    }

    #[test]
    fn scene_json_round_trip() {
        let scene = desk_scene();
        let text = serde_json::to_string(&scene).unwrap();
        assert!(text.contains("\"ir_length_K\":256"));
        let back: SceneFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, scene);
    }
}
