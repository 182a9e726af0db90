//! Plain-text diagnostic dump of a fit.

use std::fmt::Write;

use crate::irls::FitResult;

pub fn dump_fit(title: &str, fit: &FitResult) -> String {
    let mut out = String::new();
    let labels = fit.labels();
    let _ = writeln!(out, "# {title}");
    let _ = writeln!(out, "family: {}", fit.family.name());
    let _ = writeln!(out, "n_obs: {}", fit.n_obs);
    let _ = writeln!(out, "n_clusters: {}", fit.n_clusters);
    let _ = writeln!(out, "converged: {}", fit.converged);
    let _ = writeln!(out, "iterations: {}", fit.n_iterations);
    let _ = writeln!(out, "deviance: {:.12e}", fit.deviance);
    let _ = writeln!(out, "dispersion: {:.12e}", fit.dispersion);
    if !fit.dropped.is_empty() {
        let _ = writeln!(out, "dropped: {}", fit.dropped.join(", "));
    }
    let _ = writeln!(out, "\n## iteration trace");
    for rec in &fit.trace {
        let _ = writeln!(
            out,
            "{:>4}  deviance={:.12e}  halvings={}",
            rec.iteration, rec.deviance, rec.step_halvings
        );
    }
    let _ = writeln!(out, "\n## coefficients");
    let _ = writeln!(out, "{:<28} {:>16} {:>14} {:>14}", "term", "estimate", "model_se", "robust_se");
    for (j, label) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:<28} {:>16.8e} {:>14.6e} {:>14.6e}",
            label,
            fit.coefficients[j],
            fit.model_se(j),
            fit.robust_se(j)
        );
    }
    for (name, m) in [("model covariance", &fit.model_cov), ("robust covariance", &fit.robust_cov)] {
        let _ = writeln!(out, "\n## {name}");
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.6e}", m[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}
