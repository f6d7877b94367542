//! Floorplan, cameras and scenario parameters.

use serde::{Deserialize, Serialize};
use trajtensor_core::baselines::CameraDistanceMatrix;
use trajtensor_core::BoundingBox;

use crate::error::{DataError, Result};

/// Axis-aligned floor rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0]
    }
}

/// Direction the camera looks along, on the floorplan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewAxis {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub id: usize,
    pub fov: Rect,
    pub axis: ViewAxis,
    /// Apparent box height (fraction of the frame) at the near FOV edge.
    pub near_height: f64,
    /// Apparent box height at the far FOV edge.
    pub far_height: f64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let f = &self.fov;
        if !(f.x_max > f.x_min && f.y_max > f.y_min) {
            return Err(DataError::Config(format!("camera {} has an empty field of view", self.id)));
        }
        if !(self.near_height > self.far_height && self.far_height > 0.0 && self.near_height <= 1.0) {
            return Err(DataError::Config(format!(
                "camera {} needs 1 >= near height > far height > 0",
                self.id
            )));
        }
        Ok(())
    }

    /// Floor position: middle of the near FOV edge.
    pub fn position(&self) -> [f64; 2] {
        let f = &self.fov;
        let c = f.center();
        match self.axis {
            ViewAxis::PlusX => [f.x_min, c[1]],
            ViewAxis::MinusX => [f.x_max, c[1]],
            ViewAxis::PlusY => [c[0], f.y_min],
            ViewAxis::MinusY => [c[0], f.y_max],
        }
    }

    /// Fractions `(lateral, depth)` of `p` across the FOV, both in `[0, 1]`.
    /// Depth 0 is the near edge; lateral 0 is the image's left edge.
    fn fractions(&self, p: [f64; 2]) -> (f64, f64) {
        let f = &self.fov;
        let fx = (p[0] - f.x_min) / (f.x_max - f.x_min);
        let fy = (p[1] - f.y_min) / (f.y_max - f.y_min);
        match self.axis {
            ViewAxis::PlusY => (1.0 - fx, fy),
            ViewAxis::MinusY => (fx, 1.0 - fy),
            ViewAxis::PlusX => (fy, fx),
            ViewAxis::MinusX => (1.0 - fy, 1.0 - fx),
        }
    }

    /// Noise-free box of an agent at floor point `p`, or `None` outside the
    /// FOV. Lateral position maps linearly to image x and depth to image y
    /// (near edge at the bottom); height interpolates near→far and width is
    /// 0.4 × height. The mapping keeps the near-edge box inside the frame.
    pub fn project(&self, p: [f64; 2]) -> Option<BoundingBox> {
        if !self.fov.contains(p) {
            return None;
        }
        let (lat, depth) = self.fractions(p);
        let h = self.near_height + (self.far_height - self.near_height) * depth;
        let w = 0.4 * h;
        let cx = 0.5 + (lat - 0.5) * (1.0 - 0.4 * self.near_height);
        let cy = 0.5 + (0.5 - depth) * (1.0 - self.near_height);
        Some(BoundingBox {
            x1: cx - w / 2.0,
            y1: cy - h / 2.0,
            x2: cx + w / 2.0,
            y2: cy + h / 2.0,
        })
    }
}

/// Adds uniform noise in `±jitter` to every coordinate and clamps the box
/// to the frame, keeping a minimal positive size.
pub fn jitter_box(b: BoundingBox, noise: [f64; 4]) -> BoundingBox {
    const MIN: f64 = 1e-3;
    let x1 = (b.x1 + noise[0]).clamp(0.0, 1.0 - MIN);
    let y1 = (b.y1 + noise[1]).clamp(0.0, 1.0 - MIN);
    let x2 = (b.x2 + noise[2]).clamp(x1 + MIN, 1.0);
    let y2 = (b.y2 + noise[3]).clamp(y1 + MIN, 1.0);
    BoundingBox { x1, y1, x2, y2 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

/// An agent that follows a fixed node route once, then leaves the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAgent {
    pub day: usize,
    pub start_step: usize,
    /// Speed in m/s.
    pub speed: f64,
    pub route: Vec<usize>,
}

/// Missing fields take their values from [`ScenarioConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub cameras: Vec<CameraModel>,
    pub nodes: Vec<Node>,
    pub edges: Vec<[usize; 2]>,
    /// Randomly walking agents, assigned to days round-robin.
    pub agents: usize,
    #[serde(default)]
    pub scripted: Vec<ScriptedAgent>,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Maximum sideways offset from the corridor centre line (m).
    pub lateral_spread: f64,
    pub sample_rate_hz: f64,
    pub observed: usize,
    pub horizon: usize,
    /// Uniform box noise magnitude (normalized image units).
    pub jitter: f64,
    pub days: usize,
    pub steps_per_day: usize,
}

impl Default for ScenarioConfig {
    /// H-shaped corridor (two 20 m corridors joined by a 20 m crossbar)
    /// watched by five cameras; the crossbar camera overlaps both left
    /// corridor cameras near the left junction.
    fn default() -> Self {
        let node = |name: &str, x: f64, y: f64| Node { name: name.into(), x, y };
        let cam = |id, x_min, x_max, y_min, y_max, axis| CameraModel {
            id,
            fov: Rect { x_min, x_max, y_min, y_max },
            axis,
            near_height: 0.6,
            far_height: 0.2,
        };
        Self {
            cameras: vec![
                cam(0, -1.5, 1.5, 9.0, 18.0, ViewAxis::PlusY),
                cam(1, -1.5, 1.5, 1.0, 11.0, ViewAxis::MinusY),
                cam(2, 18.5, 21.5, 12.5, 19.0, ViewAxis::PlusY),
                cam(3, 18.5, 21.5, 1.0, 7.5, ViewAxis::MinusY),
                cam(4, -1.0, 12.0, 8.5, 11.5, ViewAxis::PlusX),
            ],
            nodes: vec![
                node("A", 0.0, 20.0),
                node("B", 0.0, 10.0),
                node("C", 0.0, 0.0),
                node("D", 20.0, 20.0),
                node("E", 20.0, 10.0),
                node("F", 20.0, 0.0),
            ],
            edges: vec![[0, 1], [1, 2], [3, 4], [4, 5], [1, 4]],
            agents: 40,
            scripted: Vec::new(),
            speed_min: 0.8,
            speed_max: 1.6,
            lateral_spread: 0.6,
            sample_rate_hz: 5.0,
            observed: 10,
            horizon: 60,
            jitter: 0.005,
            days: 10,
            steps_per_day: 4000,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DataError::Config(m));
        if self.cameras.is_empty() {
            return bad("no cameras".into());
        }
        for (i, c) in self.cameras.iter().enumerate() {
            if c.id != i {
                return bad(format!("camera ids must be 0..k in order; entry {i} has id {}", c.id));
            }
            c.validate()?;
        }
        if self.agents == 0 && self.scripted.is_empty() {
            return bad("scenario has zero agents".into());
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return bad("speed range must be positive and ordered".into());
        }
        if self.sample_rate_hz <= 0.0 || self.observed == 0 || self.horizon == 0 || self.days == 0 {
            return bad("sample rate, observed, horizon and days must be positive".into());
        }
        if self.steps_per_day == 0 || !(self.jitter >= 0.0) || !(self.lateral_spread >= 0.0) {
            return bad("steps_per_day must be positive; jitter and lateral spread non-negative".into());
        }
        if self.nodes.is_empty() {
            return bad("corridor graph has no nodes".into());
        }
        for e in &self.edges {
            if e[0] >= self.nodes.len() || e[1] >= self.nodes.len() || e[0] == e[1] {
                return bad(format!("bad corridor edge {e:?}"));
            }
        }
        if self.nodes.len() > 1 && !self.connected() {
            return bad("corridor graph is disconnected".into());
        }
        for s in &self.scripted {
            if s.day >= self.days || s.speed <= 0.0 || s.route.is_empty() {
                return bad("scripted agent needs a valid day, positive speed and a route".into());
            }
            if s.route.windows(2).any(|w| !self.has_edge(w[0], w[1])) {
                return bad(format!("scripted route {:?} leaves the corridor graph", s.route));
            }
        }
        Ok(())
    }

    pub fn neighbours(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|e| {
                if e[0] == node {
                    Some(e[1])
                } else if e[1] == node {
                    Some(e[0])
                } else {
                    None
                }
            })
            .collect()
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.iter().any(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a))
    }

    fn connected(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for m in self.neighbours(n) {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn node_pos(&self, n: usize) -> [f64; 2] {
        [self.nodes[n].x, self.nodes[n].y]
    }

    /// Euclidean floor distances between camera positions.
    pub fn distance_matrix(&self) -> CameraDistanceMatrix {
        let pos: Vec<[f64; 2]> = self.cameras.iter().map(CameraModel::position).collect();
        let rows = pos
            .iter()
            .map(|a| pos.iter().map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()).collect())
            .collect();
        CameraDistanceMatrix::new(rows).expect("euclidean distances are symmetric")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera() -> CameraModel {
        CameraModel {
            id: 0,
            fov: Rect { x_min: -1.0, x_max: 1.0, y_min: 0.0, y_max: 8.0 },
            axis: ViewAxis::PlusY,
            near_height: 0.6,
            far_height: 0.2,
        }
    }

    #[test]
    fn centre_of_view_projects_to_centre_of_frame() {
        let b = camera().project([0.0, 4.0]).unwrap();
        let (cx, cy) = b.center();
        assert!((cx - 0.5).abs() < 1e-12 && (cy - 0.5).abs() < 1e-12);
        assert!((b.height() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn near_edge_has_near_height_and_stays_in_frame() {
        let b = camera().project([0.0, 0.0]).unwrap();
        assert!((b.height() - 0.6).abs() < 1e-12);
        assert!((b.width() - 0.24).abs() < 1e-12);
        assert!((b.y2 - 1.0).abs() < 1e-12);
        for x in [-1.0, 1.0] {
            let b = camera().project([x, 0.0]).unwrap();
            assert!(b.x1 >= -1e-12 && b.x2 <= 1.0 + 1e-12);
            b.validate().unwrap();
        }
    }

    #[test]
    fn outside_view_is_absent() {
        assert!(camera().project([2.0, 4.0]).is_none());
        assert!(camera().project([0.0, -0.1]).is_none());
    }

    #[test]
    fn every_axis_keeps_boxes_valid() {
        for axis in [ViewAxis::PlusX, ViewAxis::MinusX, ViewAxis::PlusY, ViewAxis::MinusY] {
            let c = CameraModel { axis, ..camera() };
            for (x, y) in [(-1.0, 0.0), (1.0, 8.0), (0.3, 2.5), (-0.7, 7.9)] {
                c.project([x, y]).unwrap().validate().unwrap();
            }
        }
    }

    #[test]
    fn projection_is_continuous() {
        let c = camera();
        let a = c.project([0.2, 3.0]).unwrap().to_array();
        let b = c.project([0.2 + 1e-7, 3.0 + 1e-7]).unwrap().to_array();
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-6));
    }

    #[test]
    fn default_scenario_is_valid_and_distances_symmetric() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let d = cfg.distance_matrix();
        for i in 0..5 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..5 {
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
    }

    #[test]
    fn config_errors() {
        let mut cfg = ScenarioConfig::default();
        cfg.agents = 0;
        assert!(matches!(cfg.validate(), Err(DataError::Config(_))));
        let mut cfg = ScenarioConfig::default();
        cfg.edges.retain(|e| *e != [1, 4]);
        assert!(matches!(cfg.validate(), Err(DataError::Config(_))));
    }
}
