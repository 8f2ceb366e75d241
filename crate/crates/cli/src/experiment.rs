use std::path::PathBuf;

use demoselect_core::harness::{render_audit, render_table, run_analysis, run_experiment, ExperimentConfig};

use crate::{write_output, ConfigArgs, Failure};

fn load(a: &ConfigArgs) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(|d| cfg.resolve(d)))
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, out))
}

pub fn compare(a: ConfigArgs) -> Result<(), Failure> {
    let (cfg, out) = load(&a)?;
    let report = run_experiment(&cfg)?;
    let path = out.join("report.json");
    write_output(&path, &report.to_json())?;
    print!("{}", render_table(&report));
    let exceeded = report.audit.iter().filter(|r| !r.within_bound).count();
    println!("\naudit: {} cells, {exceeded} over bound", report.audit.len());
    println!("wrote {}", path.display());
    Ok(())
}

fn percent(share: f64) -> String {
    format!("{:.2}%", 100.0 * share)
}

pub fn analyze(a: ConfigArgs) -> Result<(), Failure> {
    let (cfg, out) = load(&a)?;
    let analysis = run_analysis(&cfg)?;
    let path = out.join("analysis.json");
    write_output(&path, &analysis.to_json())?;
    for s in &analysis.seeds {
        println!(
            "seed {}: task best {} covers {} of queries",
            s.seed,
            s.coincidence.task_best,
            percent(s.coincidence.fraction)
        );
        for r in &s.ranks {
            println!("  {:<24} top-ranked on {} of queries", r.strategy, percent(r.top_share));
        }
    }
    println!("mean coincidence fraction {:.4}", analysis.mean_fraction);
    println!("wrote {}", path.display());
    Ok(())
}

pub fn audit(a: ConfigArgs) -> Result<(), Failure> {
    let (cfg, out) = load(&a)?;
    let report = run_experiment(&cfg)?;
    let path = out.join("audit.json");
    let json = serde_json::to_string_pretty(&report.audit).expect("serializes") + "\n";
    write_output(&path, &json)?;
    print!("{}", render_audit(&report.audit));
    println!("wrote {}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::percent;

    #[test]
    fn shares_render_as_percentages() {
        assert_eq!(percent(0.27), "27.00%");
        assert_eq!(percent(0.1503), "15.03%");
        assert_eq!(percent(1.0), "100.00%");
    }
}
