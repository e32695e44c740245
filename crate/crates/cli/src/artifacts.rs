//! Per-run output files.

use anyhow::{Context, Result};
use mirrorflow::experiment::Outcome;
use std::fs;
use std::path::Path;

pub const CSV_COLUMNS: [&str; 8] = ["t", "gap", "lagrangian_gap", "feasibility", "lyapunov", "mu", "x_norm", "lambda_norm"];

pub fn write_all(dir: &Path, o: &Outcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_csv(&dir.join("trajectory.csv"), o)?;
    let summary = serde_json::to_string_pretty(&o.summary())?;
    fs::write(dir.join("summary.json"), summary + "\n").context("writing summary.json")?;
    fs::write(dir.join("plot.gp"), plot_script(o)).context("writing plot.gp")?;
    Ok(())
}

/// `{}` prints the shortest representation that round-trips, so equal runs
/// give byte-identical files.
fn write_csv(path: &Path, o: &Outcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(CSV_COLUMNS)?;
    let r = &o.report;
    for k in 0..r.times.len() {
        let mu = r.mu[k].map(|m| m.to_string()).unwrap_or_default();
        w.write_record([
            r.times[k].to_string(),
            r.primal_gap[k].to_string(),
            r.lagrangian_gap[k].to_string(),
            r.feasibility[k].to_string(),
            r.lyapunov[k].to_string(),
            mu,
            r.x_norm[k].to_string(),
            r.lambda_norm[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn plot_script(o: &Outcome) -> String {
    let r = &o.report;
    let a2v0 = r.params.alpha * r.params.alpha * r.v0;
    let feas = match r.family {
        mirrorflow::dynamics::Family::Centralized => "||Ax - b||",
        mirrorflow::dynamics::Family::Consensus => "x'Lx",
        mirrorflow::dynamics::Family::Monotropic => "lambda'L lambda",
    };
    let reference = if a2v0.is_finite() {
        format!(", {a2v0:e}/x**2 with lines dt 2 lc rgb 'gray' title 'alpha^2 V0 / t^2'")
    } else {
        String::new()
    };
    format!(
        "# gnuplot script; run `gnuplot plot.gp` in this directory to produce plot.png.\n\
         set datafile separator ','\n\
         set terminal pngcairo size 1500,450\n\
         set output 'plot.png'\n\
         set logscale xy\n\
         set format y '10^{{%L}}'\n\
         set xlabel 't'\n\
         set key top right\n\
         set multiplot layout 1,3 title '{} / {}, alpha = {}'\n\
         set title '|f(x(t)) - f*|'\n\
         plot 'trajectory.csv' using 1:2 skip 1 with lines lw 2 title 'gap'\n\
         set title 'Lagrangian gap'\n\
         plot 'trajectory.csv' using 1:3 skip 1 with lines lw 2 title 'gap'{reference}\n\
         set title '{feas}'\n\
         plot 'trajectory.csv' using 1:4 skip 1 with lines lw 2 title '{feas}'\n\
         unset multiplot\n",
        o.config.problem.label(),
        r.system,
        r.params.alpha,
    )
}
