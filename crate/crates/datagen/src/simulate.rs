//! Agents walking the corridor graph, observed by the cameras.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajtensor_core::{BoundingBox, CameraTrack};

use crate::error::Result;
use crate::sample::MctfSample;
use crate::scenario::{jitter_box, ScenarioConfig};

/// Per-step floor positions of one agent; `None` while off the floorplan.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPath {
    pub agent: usize,
    pub day: usize,
    pub positions: Vec<Option<[f64; 2]>>,
}

struct Walker {
    from: usize,
    to: usize,
    along: f64,
    offset: f64,
}

fn edge_geometry(cfg: &ScenarioConfig, a: usize, b: usize) -> ([f64; 2], [f64; 2], f64) {
    let (pa, pb) = (cfg.node_pos(a), cfg.node_pos(b));
    let d = [pb[0] - pa[0], pb[1] - pa[1]];
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    (pa, [d[0] / len, d[1] / len], len)
}

fn place(cfg: &ScenarioConfig, w: &Walker) -> [f64; 2] {
    let (pa, dir, _) = edge_geometry(cfg, w.from, w.to);
    // Offset to the walker's right of the direction of travel.
    let normal = [dir[1], -dir[0]];
    [
        pa[0] + dir[0] * w.along + normal[0] * w.offset,
        pa[1] + dir[1] * w.along + normal[1] * w.offset,
    ]
}

fn next_node<R: Rng>(cfg: &ScenarioConfig, at: usize, came_from: usize, rng: &mut R) -> usize {
    let options: Vec<usize> = cfg.neighbours(at).into_iter().filter(|&n| n != came_from).collect();
    if options.is_empty() {
        came_from
    } else {
        options[rng.gen_range(0..options.len())]
    }
}

/// Random walk: the agent starts at a random point of a random corridor
/// and keeps walking, turning back at dead ends after a random pause
/// outside the floorplan.
fn random_path(cfg: &ScenarioConfig, agent: usize, total: usize, rng: &mut ChaCha8Rng) -> AgentPath {
    let day = agent % cfg.days;
    let speed = rng.gen_range(cfg.speed_min..=cfg.speed_max) / cfg.sample_rate_hz;
    let mut positions = Vec::with_capacity(total);
    if cfg.edges.is_empty() {
        let p = cfg.node_pos(0);
        return AgentPath { agent, day, positions: vec![Some(p); total] };
    }
    let e = cfg.edges[rng.gen_range(0..cfg.edges.len())];
    let (from, to) = if rng.gen::<bool>() { (e[0], e[1]) } else { (e[1], e[0]) };
    let len = edge_geometry(cfg, from, to).2;
    let mut w = Walker {
        from,
        to,
        along: rng.gen_range(0.0..len),
        offset: rng.gen_range(-cfg.lateral_spread..=cfg.lateral_spread),
    };
    let mut pause = 0usize;
    while positions.len() < total {
        if pause > 0 {
            pause -= 1;
            positions.push(None);
            continue;
        }
        positions.push(Some(place(cfg, &w)));
        w.along += speed;
        let mut len = edge_geometry(cfg, w.from, w.to).2;
        while w.along >= len {
            let rest = w.along - len;
            let next = next_node(cfg, w.to, w.from, rng);
            if next == w.from && cfg.neighbours(w.to).len() == 1 {
                // Dead end: the agent leaves through an exit for a while.
                pause = rng.gen_range(10..150);
            }
            w = Walker {
                from: w.to,
                to: next,
                along: rest,
                offset: rng.gen_range(-cfg.lateral_spread..=cfg.lateral_spread),
            };
            len = edge_geometry(cfg, w.from, w.to).2;
        }
    }
    AgentPath { agent, day, positions }
}

fn scripted_path(cfg: &ScenarioConfig, agent: usize, total: usize) -> AgentPath {
    let s = &cfg.scripted[agent - cfg.agents];
    let step = s.speed / cfg.sample_rate_hz;
    let mut positions = vec![None; total];
    let mut t = s.start_step;
    if s.route.len() == 1 {
        if t < total {
            positions[t] = Some(cfg.node_pos(s.route[0]));
        }
        return AgentPath { agent, day: s.day, positions };
    }
    let mut along = 0.0;
    for leg in s.route.windows(2) {
        let (pa, dir, len) = edge_geometry(cfg, leg[0], leg[1]);
        while along < len && t < total {
            positions[t] = Some([pa[0] + dir[0] * along, pa[1] + dir[1] * along]);
            along += step;
            t += 1;
        }
        along -= len;
    }
    if t < total {
        positions[t] = Some(cfg.node_pos(*s.route.last().unwrap()));
    }
    AgentPath { agent, day: s.day, positions }
}

/// Floor paths of every agent over a day plus the forecast horizon.
pub fn simulate_paths(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<AgentPath>> {
    cfg.validate()?;
    let total = cfg.steps_per_day + cfg.horizon;
    let mut paths = Vec::with_capacity(cfg.agents + cfg.scripted.len());
    for agent in 0..cfg.agents {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(agent as u64);
        paths.push(random_path(cfg, agent, total, &mut rng));
    }
    for i in 0..cfg.scripted.len() {
        paths.push(scripted_path(cfg, cfg.agents + i, total));
    }
    Ok(paths)
}

/// Per-camera boxes of one agent (`[camera][step]`).
pub fn observe(cfg: &ScenarioConfig, path: &AgentPath, seed: u64) -> Vec<Vec<Option<BoundingBox>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a69_7474_6572);
    rng.set_stream(path.agent as u64);
    cfg.cameras
        .iter()
        .map(|cam| {
            path.positions
                .iter()
                .map(|p| {
                    let b = p.and_then(|p| cam.project(p))?;
                    if cfg.jitter == 0.0 {
                        return Some(b);
                    }
                    let mut noise = [0.0; 4];
                    noise.iter_mut().for_each(|n| *n = rng.gen_range(-cfg.jitter..=cfg.jitter));
                    Some(jitter_box(b, noise))
                })
                .collect()
        })
        .collect()
}

fn window(track: &[Option<BoundingBox>], start: isize, len: usize) -> Vec<Option<BoundingBox>> {
    (0..len as isize)
        .map(|i| {
            let t = start + i;
            if t < 0 {
                None
            } else {
                track.get(t as usize).copied().flatten()
            }
        })
        .collect()
}

fn sparse(camera_boxes: Vec<Vec<Option<BoundingBox>>>) -> Vec<CameraTrack> {
    camera_boxes
        .into_iter()
        .enumerate()
        .filter(|(_, b)| b.iter().any(Option::is_some))
        .map(|(camera, boxes)| CameraTrack { camera, boxes })
        .collect()
}

/// Departure events of one agent. A departure from camera `c` at step `t`
/// means the agent is visible in `c` at `t` and not at `t + 1`; it becomes a
/// sample when the agent is visible in any camera within the next
/// `horizon` steps.
pub fn departures(cfg: &ScenarioConfig, path: &AgentPath, boxes: &[Vec<Option<BoundingBox>>]) -> Vec<MctfSample> {
    let (n, m) = (cfg.observed, cfg.horizon);
    let mut out = Vec::new();
    for t in 0..cfg.steps_per_day {
        for (c, track) in boxes.iter().enumerate() {
            if track[t].is_none() || track.get(t + 1).copied().flatten().is_some() {
                continue;
            }
            let future: Vec<_> = boxes.iter().map(|b| window(b, t as isize + 1, m)).collect();
            if !future.iter().flatten().any(Option::is_some) {
                continue;
            }
            let input: Vec<_> = boxes.iter().map(|b| window(b, t as isize + 1 - n as isize, n)).collect();
            out.push(MctfSample {
                id: 0,
                day: path.day,
                agent: path.agent,
                departure_step: t,
                departure_camera: c,
                input: sparse(input),
                future: sparse(future),
            });
        }
    }
    out
}

/// Runs the scenario and returns all samples ordered by day, departure
/// step, agent and camera, with ids assigned in that order.
pub fn generate_samples(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<MctfSample>> {
    let mut samples = Vec::new();
    for path in simulate_paths(cfg, seed)? {
        let boxes = observe(cfg, &path, seed);
        samples.extend(departures(cfg, &path, &boxes));
    }
    samples.sort_by_key(|s| (s.day, s.departure_step, s.agent, s.departure_camera));
    for (i, s) in samples.iter_mut().enumerate() {
        s.id = i;
    }
    Ok(samples)
}
