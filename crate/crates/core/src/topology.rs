//! Single-floor dual-stripe layout: two rows of rooms either side of a
//! corridor, node placement, and a log-distance + wall-penetration pathloss.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cap on rejection-sampling attempts when placing infrastructure.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid floor dimension `{name}` = {value}: must be strictly positive")]
    InvalidDimension { name: &'static str, value: f64 },
    #[error("could not place infrastructure with {min_distance} m separation after {attempts} attempts")]
    PlacementFailed { attempts: usize, min_distance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.min.x + self.max.x) / 2.0,
            (self.min.y + self.max.y) / 2.0,
        )
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::new(
            self.min.x + rng.random::<f64>() * self.width(),
            self.min.y + rng.random::<f64>() * self.height(),
        )
    }

    fn overlaps_interior(&self, other: &Rect) -> bool {
        self.min.x < other.max.x
            && other.min.x < self.max.x
            && self.min.y < other.max.y
            && other.min.y < self.max.y
    }
}

/// Dual-stripe floor description. Rows run along x; the corridor separates
/// the bottom row from the top row in y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FloorPlan {
    pub room_rows: u32,
    pub rooms_per_row: u32,
    pub room_size: f64,
    pub corridor_width: f64,
    pub origin: Point,
}

impl Default for FloorPlan {
    fn default() -> Self {
        Self {
            room_rows: 2,
            rooms_per_row: 20,
            room_size: 10.0,
            corridor_width: 10.0,
            origin: Point::new(0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloorGeometry {
    pub plan: FloorPlan,
    pub rooms: Vec<Rect>,
    pub corridor: Rect,
    pub extent: Rect,
}

pub fn generate_floor(plan: &FloorPlan) -> Result<FloorGeometry, TopologyError> {
    for (name, value) in [
        ("room_rows", plan.room_rows as f64),
        ("rooms_per_row", plan.rooms_per_row as f64),
        ("room_size", plan.room_size),
        ("corridor_width", plan.corridor_width),
    ] {
        if value <= 0.0 || !value.is_finite() {
            return Err(TopologyError::InvalidDimension { name, value });
        }
    }
    if plan.room_rows != 2 {
        // the corridor sits between exactly two rows
        return Err(TopologyError::InvalidDimension {
            name: "room_rows",
            value: plan.room_rows as f64,
        });
    }

    let o = plan.origin;
    let s = plan.room_size;
    let length = plan.rooms_per_row as f64 * s;
    let corridor_lo = o.y + s;
    let corridor_hi = corridor_lo + plan.corridor_width;

    let mut rooms = Vec::with_capacity(2 * plan.rooms_per_row as usize);
    for row_y in [o.y, corridor_hi] {
        for i in 0..plan.rooms_per_row {
            let x0 = o.x + i as f64 * s;
            rooms.push(Rect {
                min: Point::new(x0, row_y),
                max: Point::new(x0 + s, row_y + s),
            });
        }
    }
    let corridor = Rect {
        min: Point::new(o.x, corridor_lo),
        max: Point::new(o.x + length, corridor_hi),
    };
    let extent = Rect {
        min: o,
        max: Point::new(o.x + length, corridor_hi + s),
    };
    Ok(FloorGeometry {
        plan: plan.clone(),
        rooms,
        corridor,
        extent,
    })
}

impl FloorGeometry {
    /// True when no two tiles share interior area.
    pub fn tiles_disjoint(&self) -> bool {
        let tiles: Vec<&Rect> = self.rooms.iter().chain(std::iter::once(&self.corridor)).collect();
        for (i, a) in tiles.iter().enumerate() {
            for b in &tiles[i + 1..] {
                if a.overlaps_interior(b) {
                    return false;
                }
            }
        }
        true
    }

    /// Number of interior walls crossed by the straight segment a-b.
    ///
    /// Corridor walls span the full floor length; partition walls between
    /// neighbouring rooms only exist inside the two room rows.
    pub fn walls_between(&self, a: &Point, b: &Point) -> u32 {
        // canonical ordering keeps the count symmetric bit-for-bit
        let (a, b) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
        let s = self.plan.room_size;
        let lo = self.corridor.min.y;
        let hi = self.corridor.max.y;
        let mut walls = 0;

        for wall_y in [lo, hi] {
            if (a.y < wall_y && b.y > wall_y) || (a.y > wall_y && b.y < wall_y) {
                walls += 1;
            }
        }

        let ox = self.plan.origin.x;
        let first = ((a.x - ox) / s).floor() as i64 + 1;
        let last = ((b.x - ox) / s).ceil() as i64 - 1;
        for k in first.max(1)..=last.min(self.plan.rooms_per_row as i64 - 1) {
            let wx = ox + k as f64 * s;
            if wx <= a.x || wx >= b.x {
                continue;
            }
            let y = a.y + (b.y - a.y) * (wx - a.x) / (b.x - a.x);
            if y < lo || y > hi {
                walls += 1;
            }
        }
        walls
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Pico,
    Ap,
    LteUser,
    WlanUser,
}

impl NodeKind {
    pub fn is_wlan(self) -> bool {
        matches!(self, NodeKind::Ap | NodeKind::WlanUser)
    }

    pub fn is_infrastructure(self) -> bool {
        matches!(self, NodeKind::Pico | NodeKind::Ap)
    }

    pub fn label(self) -> &'static str {
        match self {
            NodeKind::Pico => "pico",
            NodeKind::Ap => "ap",
            NodeKind::LteUser => "lte_user",
            NodeKind::WlanUser => "wlan_user",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Heights {
    pub infrastructure: f64,
    pub user: f64,
}

impl Default for Heights {
    fn default() -> Self {
        Self {
            infrastructure: 3.0,
            user: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodePosition {
    pub node_id: usize,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl NodePosition {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn distance_3d(&self, other: &NodePosition) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Places one Pico and two APs uniformly in the corridor with pairwise
/// separation of at least `min_distance`. Node ids are 0 (Pico), 1 and 2.
pub fn place_infrastructure<R: Rng + ?Sized>(
    geometry: &FloorGeometry,
    min_distance: f64,
    heights: &Heights,
    rng: &mut R,
) -> Result<Vec<NodePosition>, TopologyError> {
    let kinds = [NodeKind::Pico, NodeKind::Ap, NodeKind::Ap];
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let pts: Vec<Point> = kinds.iter().map(|_| geometry.corridor.sample(rng)).collect();
        let separated = (0..pts.len())
            .all(|i| (i + 1..pts.len()).all(|j| pts[i].distance(&pts[j]) >= min_distance));
        if separated {
            return Ok(kinds
                .iter()
                .zip(pts)
                .enumerate()
                .map(|(node_id, (&kind, p))| NodePosition {
                    node_id,
                    kind,
                    x: p.x,
                    y: p.y,
                    z: heights.infrastructure,
                })
                .collect());
        }
    }
    Err(TopologyError::PlacementFailed {
        attempts: MAX_PLACEMENT_ATTEMPTS,
        min_distance,
    })
}

/// Uniform i.i.d. user positions over the whole floor. LTE users come first,
/// ids start at `first_id`.
pub fn place_users<R: Rng + ?Sized>(
    geometry: &FloorGeometry,
    n_lte: usize,
    n_wlan: usize,
    first_id: usize,
    heights: &Heights,
    rng: &mut R,
) -> Vec<NodePosition> {
    std::iter::repeat_n(NodeKind::LteUser, n_lte)
        .chain(std::iter::repeat_n(NodeKind::WlanUser, n_wlan))
        .enumerate()
        .map(|(i, kind)| {
            let p = geometry.extent.sample(rng);
            NodePosition {
                node_id: first_id + i,
                kind,
                x: p.x,
                y: p.y,
                z: heights.user,
            }
        })
        .collect()
}

/// Resamples a single user position uniformly over the floor.
pub fn resample_user<R: Rng + ?Sized>(
    geometry: &FloorGeometry,
    node: &NodePosition,
    rng: &mut R,
) -> NodePosition {
    let p = geometry.extent.sample(rng);
    NodePosition {
        x: p.x,
        y: p.y,
        ..*node
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathlossModel {
    /// Loss at the 1 m reference distance (dB).
    pub reference_loss: f64,
    pub distance_exponent: f64,
    /// Penetration loss per interior wall (dB).
    pub wall_loss: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        Self {
            reference_loss: 38.46,
            distance_exponent: 2.0,
            wall_loss: 5.0,
        }
    }
}

impl PathlossModel {
    /// Loss for a 3D distance and a wall count. Distances below 1 m are
    /// floored to 1 m.
    pub fn loss_db(&self, distance_m: f64, walls: u32) -> f64 {
        let d = distance_m.max(1.0);
        let pl = self.reference_loss
            + 10.0 * self.distance_exponent * d.log10()
            + self.wall_loss * walls as f64;
        pl.max(0.0)
    }
}

pub fn path_loss(
    a: &NodePosition,
    b: &NodePosition,
    model: &PathlossModel,
    geometry: &FloorGeometry,
) -> f64 {
    let walls = geometry.walls_between(&a.point(), &b.point());
    model.loss_db(a.distance_3d(b), walls)
}

pub fn received_power(tx_dbm: f64, pl_db: f64, gain_db: f64) -> f64 {
    tx_dbm + gain_db - pl_db
}
