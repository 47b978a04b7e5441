//! Feature-importance maps as structured scene descriptions. Coordinates are
//! in a 100 x 60 first-person view of the intersection, y pointing down, with
//! the horizon at y = 20.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::templates::BrightnessConfig;
use super::AdvisorError;
use crate::world::Direction;

pub const SCENE_WIDTH: f64 = 100.0;
pub const SCENE_HEIGHT: f64 = 60.0;
pub const HORIZON_Y: f64 = 20.0;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionKind {
    DirectionBlob,
    BuildingOutline,
    TreeOutline,
    SkyRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionColor {
    Green,
    Red,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub region_kind: RegionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    pub color: RegionColor,
    pub brightness: f64,
    pub polygon: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapExplanation {
    pub regions: Vec<Region>,
}

impl FeatureMapExplanation {
    pub fn sky_brightness(&self) -> Option<f64> {
        self.regions.iter().find(|r| r.region_kind == RegionKind::SkyRegion).map(|r| r.brightness)
    }

    pub fn blob(&self, d: Direction) -> Option<&Region> {
        self.regions.iter().find(|r| r.region_kind == RegionKind::DirectionBlob && r.direction == Some(d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneArm {
    pub direction: Direction,
    /// Road surface of the arm.
    pub road: Vec<Point>,
    /// Where the importance blob sits on that road.
    pub blob: Vec<Point>,
}

/// Static geometry of the view for a given set of open roads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width: f64,
    pub height: f64,
    pub horizon_y: f64,
    pub arms: Vec<SceneArm>,
    pub buildings: Vec<Vec<Point>>,
    pub trees: Vec<Vec<Point>>,
    pub sky: Vec<Point>,
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

fn diamond(cx: f64, cy: f64, rx: f64, ry: f64) -> Vec<Point> {
    vec![[cx, cy - ry], [cx + rx, cy], [cx, cy + ry], [cx - rx, cy]]
}

fn arm(direction: Direction) -> SceneArm {
    match direction {
        Direction::Left => SceneArm {
            direction,
            road: vec![[0.0, 32.0], [38.0, 32.0], [34.0, 42.0], [0.0, 44.0]],
            blob: diamond(16.0, 38.0, 9.0, 4.0),
        },
        Direction::Straight => SceneArm {
            direction,
            road: vec![[44.0, HORIZON_Y], [56.0, HORIZON_Y], [62.0, 32.0], [38.0, 32.0]],
            blob: diamond(50.0, 26.0, 5.0, 4.0),
        },
        Direction::Right => SceneArm {
            direction,
            road: vec![[62.0, 32.0], [100.0, 32.0], [100.0, 44.0], [66.0, 42.0]],
            blob: diamond(84.0, 38.0, 9.0, 4.0),
        },
    }
}

pub fn scene_layout(open: &[Direction]) -> Scene {
    let mut dirs = open.to_vec();
    dirs.sort();
    dirs.dedup();
    Scene {
        width: SCENE_WIDTH,
        height: SCENE_HEIGHT,
        horizon_y: HORIZON_Y,
        arms: dirs.into_iter().map(arm).collect(),
        buildings: vec![
            rect(2.0, 6.0, 18.0, 31.0),
            rect(22.0, 12.0, 38.0, 31.0),
            rect(62.0, 10.0, 78.0, 31.0),
            rect(82.0, 4.0, 98.0, 31.0),
        ],
        trees: vec![diamond(8.0, 50.0, 5.0, 5.0), diamond(92.0, 50.0, 5.0, 5.0)],
        sky: rect(0.0, 0.0, SCENE_WIDTH, HORIZON_Y),
    }
}

fn sample<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64, inclusive: bool) -> f64 {
    if inclusive {
        rng.random_range(lo..=hi)
    } else {
        rng.random_range(lo..hi)
    }
}

/// Green blob on `suggested`, red blobs on the other offered roads, dim
/// building and tree outlines. A bright sky region appears iff `!correct`;
/// correct maps show a dim sky half of the time.
pub fn render_feature_map<R: Rng + ?Sized>(
    correct: bool,
    suggested: Direction,
    offered: &[Direction],
    rng: &mut R,
    cfg: &BrightnessConfig,
) -> Result<FeatureMapExplanation, AdvisorError> {
    cfg.validate()?;
    if !offered.contains(&suggested) {
        return Err(AdvisorError::Invariant(format!("suggested {suggested} is not offered")));
    }
    let scene = scene_layout(offered);
    let mut regions = Vec::new();
    for a in &scene.arms {
        let green = a.direction == suggested;
        regions.push(Region {
            region_kind: RegionKind::DirectionBlob,
            direction: Some(a.direction),
            color: if green { RegionColor::Green } else { RegionColor::Red },
            brightness: 1.0,
            polygon: a.blob.clone(),
        });
    }
    let outlines = scene
        .buildings
        .iter()
        .map(|p| (RegionKind::BuildingOutline, p))
        .chain(scene.trees.iter().map(|p| (RegionKind::TreeOutline, p)));
    for (kind, poly) in outlines {
        regions.push(Region {
            region_kind: kind,
            direction: None,
            color: RegionColor::Neutral,
            brightness: sample(rng, cfg.correct_min, cfg.correct_max, false),
            polygon: poly.clone(),
        });
    }
    let sky = if correct {
        rng.random_bool(0.5).then(|| sample(rng, cfg.correct_min, cfg.correct_max, false))
    } else {
        Some(sample(rng, cfg.incorrect_min, cfg.incorrect_max, true))
    };
    if let Some(brightness) = sky {
        regions.push(Region {
            region_kind: RegionKind::SkyRegion,
            direction: None,
            color: RegionColor::Neutral,
            brightness,
            polygon: scene.sky.clone(),
        });
    }
    Ok(FeatureMapExplanation { regions })
}
