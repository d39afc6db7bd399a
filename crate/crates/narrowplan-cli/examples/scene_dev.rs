use narrowplan_cli::scene;
use narrowplan_core::isago::{plan, IsagoConfig, PlanMode, PlanStatus};
use std::path::Path;

fn main() {
    let path = std::env::args().nth(1).unwrap_or("crates/narrowplan-cli/scenes/bookshelf_gap.toml".into());
    let loaded = match scene::load_scene(Path::new(&path)) {
        Ok(l) => l,
        Err(e) => { eprintln!("LOAD ERROR: {e:#}"); std::process::exit(1); }
    };
    println!("tasks:");
    for t in &loaded.tasks {
        println!("  {}: class {} ({} in-collision CCBs)", t.id, t.class, t.initial_collisions);
    }
    let quick = std::env::args().nth(2).map(|s| s == "plan").unwrap_or(false);
    if quick {
        let cfg = IsagoConfig::default();
        for t in &loaded.tasks {
            let problem = loaded.problem(t);
            for mode in [PlanMode::Isago, PlanMode::AgdOnly] {
                let mut wins = 0;
                let mut time = 0.0;
                for seed in 0..3u64 {
                    let r = plan(&problem, &cfg, seed, mode).unwrap();
                    if r.status == PlanStatus::Success { wins += 1; }
                    time += r.wall_time_s;
                }
                println!("  {} [{}]: {}/3 mean {:.2}s", t.id, mode.name(), wins, time / 3.0);
            }
        }
    }
}
