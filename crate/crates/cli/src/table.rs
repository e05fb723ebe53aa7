use ctbart::estimate::{aggregate, PosteriorSummary};
use ctbart::experiment::OracleReport;

fn join(xs: impl Iterator<Item = String>) -> String {
    xs.collect::<Vec<_>>().join(" / ")
}

/// Averages per algorithm, one line each.
pub fn print_summary(runs: &[PosteriorSummary]) {
    let Some(first) = runs.first() else { return };
    let monitored = first.monitored();
    println!(
        "{:<6} {:>4} {:>10} {:>10}  {:<28} {:<20} {:>8}  ESS/s ({})",
        "alg",
        "reps",
        "mse",
        "mse(1/n)",
        format!("ESS ({})", monitored.join("/")),
        "activity",
        "unique",
        monitored.join("/")
    );
    for agg in aggregate(runs) {
        let reps = runs.iter().filter(|s| s.algorithm == agg.algorithm).count();
        let ess = join(
            monitored
                .iter()
                .map(|m| format!("{:.0}", agg.ess.get(m).copied().unwrap_or(f64::NAN))),
        );
        let activity = join(agg.activity.iter().map(|a| format!("{a:.2}")));
        let per_second = if agg.ess_per_second.is_empty() {
            "-".to_string()
        } else {
            join(monitored.iter().map(|m| {
                format!(
                    "{:.1}",
                    agg.ess_per_second.get(m).copied().unwrap_or(f64::NAN)
                )
            }))
        };
        println!(
            "{:<6} {:>4} {:>10.4} {:>10.4}  {:<28} {:<20} {:>8.1}  {}",
            agg.algorithm.name(),
            reps,
            agg.mse,
            agg.mse_unweighted,
            ess,
            activity,
            agg.unique_trees,
            per_second
        );
    }
}

pub fn print_oracle(report: &OracleReport) {
    println!(
        "{:<40} {:>10} {:>10} {:>10}",
        "tree", "exact", "CT-A", "RJ-A"
    );
    for row in report
        .rows
        .iter()
        .filter(|r| r.exact > 0.0 || r.ct_estimate > 0.0 || r.rj_estimate > 0.0)
    {
        println!(
            "{:<40} {:>10.5} {:>10.5} {:>10.5}",
            row.tree, row.exact, row.ct_estimate, row.rj_estimate
        );
    }
    let hidden = report
        .rows
        .iter()
        .filter(|r| r.exact == 0.0 && r.ct_estimate == 0.0 && r.rj_estimate == 0.0)
        .count();
    if hidden > 0 {
        println!("({hidden} trees of zero mass not shown)");
    }
    println!(
        "TV distance: CT-A {:.5}, RJ-A {:.5} ({} steps each)",
        report.tv_ct, report.tv_rj, report.jumps
    );
}
