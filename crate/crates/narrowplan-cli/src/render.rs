//! Trajectory dumps and standalone SVG rendering of a planned motion.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use narrowplan_core::environment::{collision_cost, Obstacle, Scene};
use narrowplan_core::gp::{State, Trajectory};
use narrowplan_core::kinematics::ArmModel;

/// Writes per-waypoint positions and velocities, boundaries included:
/// `t,q0..q{D-1},v0..v{D-1}`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let d = traj.dim();
    let mut out = String::from("t");
    for j in 0..d {
        write!(out, ",q{j}").unwrap();
    }
    for j in 0..d {
        write!(out, ",v{j}").unwrap();
    }
    out.push('\n');
    for i in 0..=traj.n_support() + 1 {
        let s = traj.state(i);
        write!(out, "{:.6}", i as f64 * traj.dt).unwrap();
        for v in s.position.iter().chain(s.velocity.iter()) {
            write!(out, ",{v:.12}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Reads a trajectory dump back; the inverse of [`trajectory_csv`].
pub fn parse_trajectory_csv(text: &str, dof: usize) -> Result<Trajectory> {
    let mut states = Vec::new();
    let mut dt = 0.0;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue; // header
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().context("bad number in trajectory CSV"))
            .collect::<Result<_>>()?;
        if fields.len() != 1 + 2 * dof {
            bail!(
                "trajectory CSV line {} has {} fields, expected {}",
                lineno + 1,
                fields.len(),
                1 + 2 * dof
            );
        }
        if lineno == 2 {
            dt = fields[0];
        }
        states.push(State {
            position: fields[1..1 + dof].to_vec(),
            velocity: fields[1 + dof..].to_vec(),
        });
    }
    if states.len() < 3 {
        bail!("trajectory CSV needs at least start, one support state, and goal");
    }
    let goal = states.pop().unwrap();
    let start = states.remove(0);
    Ok(Trajectory { start, goal, support: states, dt })
}

fn svg_coords(scene: &Scene) -> (f64, f64, f64, f64) {
    let [min, max] = scene.bounds;
    (min.x, min.y, max.x - min.x, max.y - min.y)
}

/// Renders the scene, every arm pose of the trajectory, and the collision
/// state of each ball into a standalone SVG document. The y axis is flipped
/// so the workspace appears in conventional orientation.
pub fn render_svg(arm: &ArmModel, scene: &Scene, traj: &Trajectory) -> Result<String> {
    let (x0, y0, w, h) = svg_coords(scene);
    let stroke = (w.max(h) / 300.0).max(1e-3);
    let mut out = String::new();
    write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{x0} {} {w} {h}\" width=\"800\" height=\"{:.0}\">\n",
        -y0 - h,
        800.0 * h / w
    )
    .unwrap();
    // Flip y once via a group transform.
    out.push_str("<g transform=\"scale(1,-1)\">\n");
    write!(
        out,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{w}\" height=\"{h}\" fill=\"#fafafa\" stroke=\"#888\" stroke-width=\"{stroke}\"/>\n"
    )
    .unwrap();

    for obs in &scene.obstacles {
        match obs {
            Obstacle::Circle { center, radius } => write!(
                out,
                "<circle cx=\"{}\" cy=\"{}\" r=\"{radius}\" fill=\"#555\" fill-opacity=\"0.8\"/>\n",
                center.x, center.y
            )
            .unwrap(),
            Obstacle::Box { min, max } => write!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#555\" fill-opacity=\"0.8\"/>\n",
                min.x,
                min.y,
                max.x - min.x,
                max.y - min.y
            )
            .unwrap(),
        }
    }

    let n_states = traj.n_support() + 2;
    for i in 0..n_states {
        let s = traj.state(i);
        let joints = arm.joint_positions(&s.position)?;
        let frac = i as f64 / (n_states - 1) as f64;
        let shade = (40.0 + 180.0 * frac) as u8;
        let bold = i == 0 || i == n_states - 1;
        let mut points = String::new();
        for p in &joints {
            write!(points, "{:.5},{:.5} ", p.x, p.y).unwrap();
        }
        write!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"rgb({shade},{shade},255)\" stroke-width=\"{}\" stroke-linecap=\"round\"/>\n",
            points.trim_end(),
            if bold { 2.0 * stroke } else { stroke }
        )
        .unwrap();

        for (b, x) in arm.ball_positions(&s.position)?.iter().enumerate() {
            let (dist, _, _) = scene.signed_distance(*x);
            let d = dist - arm.balls[b].radius;
            let (c, _) = collision_cost(d, scene.epsilon);
            let fill = if d < 0.0 {
                "#d33"
            } else if c > 0.0 {
                "#e90"
            } else {
                "#3a3"
            };
            write!(
                out,
                "<circle cx=\"{:.5}\" cy=\"{:.5}\" r=\"{}\" fill=\"{fill}\" fill-opacity=\"0.35\"/>\n",
                x.x, x.y, arm.balls[b].radius
            )
            .unwrap();
        }
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, arm: &ArmModel, scene: &Scene, traj: &Trajectory) -> Result<()> {
    let svg = render_svg(arm, scene, traj)?;
    std::fs::write(path, svg).with_context(|| format!("cannot write {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use narrowplan_core::scenarios;

    #[test]
    fn trajectory_csv_roundtrip() {
        let trap = scenarios::pinch_trap();
        let text = trajectory_csv(&trap.pinched);
        let back = parse_trajectory_csv(&text, 2).unwrap();
        assert_eq!(back.n_support(), trap.pinched.n_support());
        assert!((back.dt - trap.pinched.dt).abs() < 1e-9);
        for i in 0..=back.n_support() + 1 {
            for j in 0..2 {
                assert!(
                    (back.state(i).position[j] - trap.pinched.state(i).position[j]).abs() < 1e-9
                );
            }
        }
    }

    #[test]
    fn svg_is_wellformed_and_marks_collisions() {
        let trap = scenarios::pinch_trap();
        let svg = render_svg(&trap.ctx.arm, &trap.ctx.scene, &trap.pinched).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count() >= 2, true);
        assert!(svg.contains("#d33"), "the pinched trajectory has balls in collision");
        assert!(svg.contains("#3a3"), "boundary poses are collision-free");
    }
}
