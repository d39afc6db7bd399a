use narrowplan_core::{agd::{self, AgdConfig}, scenarios};

fn main() {
    let mut ok = 0;
    for seed in 0..10u64 {
        let (ctx, start) = scenarios::quadratic_problem(seed);
        let out = agd::run(&ctx, &start, 1.0, &AgdConfig::default()).unwrap();
        let dev0 = (start.flatten() - ctx.gp.mean.flatten()).norm();
        let dev = (out.trajectory.flatten() - ctx.gp.mean.flatten()).norm();
        let mut min_g2 = f64::INFINITY;
        let mut bound_ok = true;
        for (i, it) in out.trace.iterations.iter().enumerate() {
            let nn = i + 1;
            min_g2 = min_g2.min(it.grad_norm * it.grad_norm);
            let rhs = 96.0 * it.lipschitz * dev0 * dev0 / ((nn * nn * (nn + 1)) as f64);
            if min_g2 > rhs { bound_ok = false; }
        }
        let good = out.status == agd::AgdStatus::Converged && out.trace.iterations.len() <= 50 && bound_ok;
        if good { ok += 1; }
        println!("seed {seed}: {:?} iters {} restarts {} dev0 {:.3} dev_final {:.6} bound {bound_ok}",
            out.status, out.trace.iterations.len(), out.trace.restarts, dev0, dev);
    }
    println!("OK {ok}/10");
}
