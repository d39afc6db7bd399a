//! Scene-file schema and validation.
//!
//! A scene file is one TOML document carrying the arm geometry, the prior
//! discretization, the obstacle set, and the task list. Units are meters,
//! radians, and seconds throughout. Unknown fields are rejected so schema
//! drift fails loudly; `format_version` gates future layout changes.

use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::Vector2;
use serde::Deserialize;

use narrowplan_core::environment::{Obstacle, Scene};
use narrowplan_core::gp::GpModel;
use narrowplan_core::kinematics::{ArmModel, Ccb};
use narrowplan_core::objective::config_collision;

pub const FORMAT_VERSION: u32 = 1;

/// Class thresholds on the in-collision CCB count of the initial trajectory.
pub const CLASS_A_MAX: usize = 8;
pub const CLASS_B_MAX: usize = 15;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    format_version: u32,
    arm: ArmSection,
    gp: GpSection,
    scene: SceneSection,
    #[serde(default, rename = "task")]
    tasks: Vec<TaskSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmSection {
    link_lengths: Vec<f64>,
    #[serde(default)]
    base_position: [f64; 2],
    #[serde(default)]
    base_orientation: f64,
    joint_limits: Option<Vec<[f64; 2]>>,
    /// Evenly spread balls per link; ignored when explicit balls are given.
    #[serde(default = "default_balls_per_link")]
    balls_per_link: usize,
    #[serde(default = "default_ball_radius")]
    ball_radius: f64,
    #[serde(default, rename = "ball")]
    balls: Vec<BallSection>,
}

fn default_balls_per_link() -> usize {
    3
}

fn default_ball_radius() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BallSection {
    link: usize,
    offset: f64,
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GpSection {
    n_support: usize,
    total_time: f64,
    #[serde(default = "default_qc")]
    qc: f64,
    #[serde(default = "default_n_ip")]
    n_ip: usize,
}

fn default_qc() -> f64 {
    1.0
}

fn default_n_ip() -> usize {
    8
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneSection {
    epsilon: f64,
    bounds: [[f64; 2]; 2],
    #[serde(default, rename = "obstacle")]
    obstacles: Vec<ObstacleSection>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ObstacleSection {
    Circle { center: [f64; 2], radius: f64 },
    Box { min: [f64; 2], max: [f64; 2] },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSection {
    id: String,
    #[serde(default)]
    class: Option<String>,
    start: Vec<f64>,
    goal: Vec<f64>,
    #[serde(default)]
    repeats: Option<usize>,
}

/// Task difficulty class, either pinned in the file or derived from the
/// in-collision CCB count of the linear initial trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskClass {
    A,
    B,
    C,
}

impl fmt::Display for TaskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskClass::A => "A",
            TaskClass::B => "B",
            TaskClass::C => "C",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub id: String,
    pub class: TaskClass,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub repeats: Option<usize>,
    /// In-collision CCB count on the initial trajectory (the class metric).
    pub initial_collisions: usize,
}

/// A loaded and validated scene file.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub arm: ArmModel,
    pub scene: Scene,
    pub tasks: Vec<TaskSpec>,
    pub n_support: usize,
    pub total_time: f64,
    pub qc: f64,
    pub n_ip: usize,
}

impl Loaded {
    pub fn task(&self, id: &str) -> Result<&TaskSpec> {
        self.tasks
            .iter()
            .find(|t| t.id == id)
            .with_context(|| format!("task '{id}' not found in scene file"))
    }

    pub fn problem(&self, task: &TaskSpec) -> narrowplan_core::isago::PlanProblem {
        narrowplan_core::isago::PlanProblem {
            arm: self.arm.clone(),
            scene: self.scene.clone(),
            start: task.start.clone(),
            goal: task.goal.clone(),
            n_support: self.n_support,
            total_time: self.total_time,
            qc: self.qc,
            n_ip: self.n_ip,
        }
    }
}

/// Counts in-collision balls over the support states of the linear initial
/// trajectory (boundaries excluded, matching the optimizer's cost support).
pub fn initial_collision_count(
    arm: &ArmModel,
    scene: &Scene,
    loaded_gp: &GpModel,
) -> Result<usize> {
    let mut count = 0;
    for state in &loaded_gp.mean.support {
        for (b, x) in arm.ball_positions(&state.position)?.iter().enumerate() {
            let (d, _, _) = scene.signed_distance(*x);
            if d - arm.balls[b].radius < 0.0 {
                count += 1;
            }
        }
    }
    Ok(count)
}

pub fn classify(count: usize) -> TaskClass {
    if count <= CLASS_A_MAX {
        TaskClass::A
    } else if count <= CLASS_B_MAX {
        TaskClass::B
    } else {
        TaskClass::C
    }
}

/// Parses and validates a scene file.
pub fn load_scene(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scene file {}", path.display()))?;
    let file: SceneFile = toml::from_str(&text)
        .with_context(|| format!("cannot parse scene file {}", path.display()))?;

    if file.format_version != FORMAT_VERSION {
        bail!("unsupported format_version {} (expected {FORMAT_VERSION})", file.format_version);
    }

    // Arm.
    let a = &file.arm;
    for (i, l) in a.link_lengths.iter().enumerate() {
        if !(*l > 0.0) {
            bail!("arm.link_lengths[{i}] must be positive, got {l}");
        }
    }
    if a.balls.is_empty() && a.balls_per_link == 0 {
        bail!("arm.balls_per_link must be positive when no explicit balls are given");
    }
    if !(a.ball_radius > 0.0) {
        bail!("arm.ball_radius must be positive, got {}", a.ball_radius);
    }
    let dof = a.link_lengths.len();
    let limits = match &a.joint_limits {
        Some(l) => {
            if l.len() != dof {
                bail!("arm.joint_limits has {} entries for {dof} links", l.len());
            }
            for (i, [lo, hi]) in l.iter().enumerate() {
                if !(lo <= hi) {
                    bail!("arm.joint_limits[{i}] has lo > hi");
                }
            }
            l.clone()
        }
        None => vec![[-std::f64::consts::PI, std::f64::consts::PI]; dof],
    };
    let arm = if a.balls.is_empty() {
        let mut arm = ArmModel::with_uniform_balls(
            a.link_lengths.clone(),
            Vector2::new(a.base_position[0], a.base_position[1]),
            a.base_orientation,
            a.balls_per_link,
            a.ball_radius,
        )
        .map_err(|e| anyhow::anyhow!("arm: {e}"))?;
        arm.joint_limits = limits;
        arm
    } else {
        let balls = a
            .balls
            .iter()
            .map(|b| Ccb { link_index: b.link, offset_fraction: b.offset, radius: b.radius })
            .collect();
        ArmModel::new(
            a.link_lengths.clone(),
            Vector2::new(a.base_position[0], a.base_position[1]),
            a.base_orientation,
            limits,
            balls,
        )
        .map_err(|e| anyhow::anyhow!("arm.ball: {e}"))?
    };

    // Scene.
    let s = &file.scene;
    if !(s.epsilon > 0.0) {
        bail!("scene.epsilon must be positive, got {}", s.epsilon);
    }
    let (bmin, bmax) = (s.bounds[0], s.bounds[1]);
    if !(bmin[0] < bmax[0] && bmin[1] < bmax[1]) {
        bail!("scene.bounds min corner must lie strictly below max corner");
    }
    let inside = |p: [f64; 2]| {
        p[0] >= bmin[0] && p[0] <= bmax[0] && p[1] >= bmin[1] && p[1] <= bmax[1]
    };
    let mut obstacles = Vec::with_capacity(s.obstacles.len());
    for (i, o) in s.obstacles.iter().enumerate() {
        let obstacle = match o {
            ObstacleSection::Circle { center, radius } => {
                if !(*radius > 0.0) {
                    bail!("scene.obstacle[{i}] circle radius must be positive");
                }
                if !inside([center[0] - radius, center[1] - radius])
                    || !inside([center[0] + radius, center[1] + radius])
                {
                    bail!("scene.obstacle[{i}] extends outside scene.bounds");
                }
                Obstacle::Circle { center: Vector2::new(center[0], center[1]), radius: *radius }
            }
            ObstacleSection::Box { min, max } => {
                if !(min[0] < max[0] && min[1] < max[1]) {
                    bail!("scene.obstacle[{i}] box min corner must lie strictly below max");
                }
                if !inside(*min) || !inside(*max) {
                    bail!("scene.obstacle[{i}] extends outside scene.bounds");
                }
                Obstacle::Box {
                    min: Vector2::new(min[0], min[1]),
                    max: Vector2::new(max[0], max[1]),
                }
            }
        };
        obstacles.push(obstacle);
    }
    let scene = Scene::new(
        obstacles,
        s.epsilon,
        [Vector2::new(bmin[0], bmin[1]), Vector2::new(bmax[0], bmax[1])],
    )
    .map_err(|e| anyhow::anyhow!("scene: {e}"))?;

    // GP discretization.
    let g = &file.gp;
    if g.n_support == 0 {
        bail!("gp.n_support must be at least 1");
    }
    if !(g.total_time > 0.0) {
        bail!("gp.total_time must be positive");
    }
    if !(g.qc > 0.0) {
        bail!("gp.qc must be positive");
    }

    // Tasks.
    let mut tasks = Vec::with_capacity(file.tasks.len());
    for t in &file.tasks {
        if t.start.len() != dof || t.goal.len() != dof {
            bail!("task '{}': start/goal must have {dof} joints", t.id);
        }
        if tasks.iter().any(|prev: &TaskSpec| prev.id == t.id) {
            bail!("task '{}': duplicate id", t.id);
        }
        for (which, q) in [("start", &t.start), ("goal", &t.goal)] {
            if let Some((ball, d)) = config_collision(&arm, &scene, q)
                .map_err(|e| anyhow::anyhow!("task '{}': {e}", t.id))?
            {
                bail!(
                    "task '{}': {which} configuration is in collision (ball {ball}, depth {d:.4})",
                    t.id
                );
            }
        }
        let gp = GpModel::new(&t.start, &t.goal, g.n_support, g.total_time, g.qc)
            .map_err(|e| anyhow::anyhow!("task '{}': {e}", t.id))?;
        let initial_collisions = initial_collision_count(&arm, &scene, &gp)?;
        let class = match t.class.as_deref() {
            None => classify(initial_collisions),
            Some("A") => TaskClass::A,
            Some("B") => TaskClass::B,
            Some("C") => TaskClass::C,
            Some(other) => bail!("task '{}': unknown class '{other}' (A, B, or C)", t.id),
        };
        tasks.push(TaskSpec {
            id: t.id.clone(),
            class,
            start: t.start.clone(),
            goal: t.goal.clone(),
            repeats: t.repeats,
            initial_collisions,
        });
    }

    Ok(Loaded {
        arm,
        scene,
        tasks,
        n_support: g.n_support,
        total_time: g.total_time,
        qc: g.qc,
        n_ip: g.n_ip,
    })
}
