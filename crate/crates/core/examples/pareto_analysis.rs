//! Turn per-trial evaluation records into confidence intervals, a Pareto
//! front, improvements over the thinking parent and a phase-change window.
//!
//! ```text
//! cargo run --example pareto_analysis
//! ```

use merge_spectrum::pareto::{analyze, parse_records, ReportOptions};

fn main() -> merge_spectrum::Result<()> {
    // a synthetic sweep: accuracy jumps between strength 0.6 and 0.7 while
    // token use rises steadily
    let mut lines = Vec::new();
    let strengths = [0.0, 0.2, 0.4, 0.5, 0.6, 0.65, 0.7, 0.8, 0.9, 1.0];
    for (i, &s) in strengths.iter().enumerate() {
        let (id, method) = if s == 1.0 {
            ("think".to_string(), "parent")
        } else {
            (format!("wa-{s}"), "weighted_average")
        };
        let accuracy =
            0.2 + 0.5 / (1.0 + (-(s - 0.65) / 0.03f64).exp()) - if s == 1.0 { 0.05 } else { 0.0 };
        let tokens = 3000 + 900 * i as u64;
        let trials: Vec<String> = (0..30)
            .map(|t| {
                format!(
                    r#"{{"correct":{},"output_tokens":{}}}"#,
                    (t as f64) < accuracy * 30.0,
                    tokens + 10 * t
                )
            })
            .collect();
        lines.push(format!(
            r#"{{"model_id":"{id}","method":"{method}","strength":{s},"benchmark":"math","trials":[{}]}}"#,
            trials.join(",")
        ));
    }
    let records = parse_records(&lines.join("\n"))?;
    let report = analyze(&records, "think", &ReportOptions::default())?;

    let bench = &report.benchmarks[0];
    println!(
        "{:>6} {:>8} {:>17} {:>8}",
        "lambda", "acc", "90% CI", "tokens"
    );
    for p in &bench.points {
        println!(
            "{:>6.2} {:>8.3} [{:.3}, {:.3}] {:>8.0}",
            p.strength, p.accuracy_mean, p.accuracy_ci.0, p.accuracy_ci.1, p.mean_tokens
        );
    }
    let front: Vec<String> = bench.front.iter().map(|p| p.model_id.clone()).collect();
    println!("front: {}", front.join(", "));
    for imp in &bench.improvements {
        println!(
            "{} improves on the parent (CI-robust: {})",
            imp.point.model_id, imp.ci_robust
        );
    }
    for phase in &bench.phase_changes {
        if let Some(r) = &phase.report {
            println!(
                "{}: steepest step {:?}, half of the gain inside {:?}",
                phase.method, r.max_slope_interval, r.gain_window
            );
        }
    }
    Ok(())
}
