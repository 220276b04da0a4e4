use std::fmt::Write;

use super::{DiagnosticsReport, RegionObservation, MAP_POINTS};

const MAP_SIZE: f64 = 600.0;
const MAP_MARGIN: f64 = 10.0;

fn fmt_opt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        "n/a".into()
    }
}

fn bar(p: f64) -> String {
    "#".repeat((p * 40.0).round().clamp(0.0, 40.0) as usize)
}

/// Human-readable report.
pub fn render_markdown(report: &DiagnosticsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Diagnostics report\n");
    let _ = writeln!(s, "- version: {}", report.version);
    let _ = writeln!(s, "- seed: {}", report.seed);
    let _ = writeln!(s, "- regions: {}", report.regions.len());
    let _ = writeln!(
        s,
        "- χ² tests: {} ({} rejected at adjusted p < 0.05)",
        report.total_tests, report.rejected_tests
    );
    if report.flagged_regions.is_empty() {
        let _ = writeln!(s, "- flagged regions: none");
    } else {
        let _ = writeln!(s, "- flagged regions: {}", report.flagged_regions.join(", "));
    }

    for r in &report.regions {
        let _ = writeln!(s, "\n## Region {}\n", r.region_id);
        let _ = writeln!(s, "- method: {}", r.method);
        let _ = writeln!(s, "- households: {}", r.households);
        let _ = writeln!(s, "- persons: {}", r.persons);
        let _ = writeln!(s, "- household variables: {}", r.household_variables.join(", "));
        let _ = writeln!(s, "- person variables: {}", r.person_variables.join(", "));
        if let Some(map) = &r.map {
            let _ = writeln!(s, "- map: [{map}]({map})");
        }
        if let Some(ipf) = &r.ipf {
            let _ = writeln!(
                s,
                "- IPF: {} iterations, converged: {}, max deviation {:.3e}",
                ipf.iterations, ipf.converged, ipf.max_deviation
            );
        }
        for f in &r.flags {
            let _ = writeln!(s, "- **FLAG** {f}");
        }

        let tests: Vec<_> = report.tests.iter().filter(|t| t.region_id == r.region_id).collect();
        if !tests.is_empty() {
            let _ = writeln!(s, "\n| variable | MAE | χ² | df | p | adjusted p | rejected |");
            let _ = writeln!(s, "|---|---|---|---|---|---|---|");
            for t in tests {
                let m = r.mae.iter().find(|m| m.variable == t.variable).map_or(f64::NAN, |m| m.mae);
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.3} | {} | {:.3e} | {:.3e} | {} |",
                    t.variable,
                    fmt_opt(m),
                    t.statistic,
                    t.df,
                    t.p_value,
                    t.adjusted_p_value,
                    if t.rejected { "yes" } else { "no" }
                );
            }
        }

        for b in &r.barplots {
            let _ = writeln!(s, "\n`{}` (generated / target):\n\n```", b.variable);
            let w = b.categories.iter().map(String::len).max().unwrap_or(0);
            for (k, c) in b.categories.iter().enumerate() {
                let _ = writeln!(s, "{c:>w$} gen {:.3} {}", b.generated[k], bar(b.generated[k]));
                let _ = writeln!(s, "{:>w$} tgt {:.3} {}", "", b.target[k], bar(b.target[k]));
            }
            let _ = writeln!(s, "```");
        }

        if !r.capacity.is_empty() {
            let _ = writeln!(s, "\n| component | kind | capacity | assigned | utilization |");
            let _ = writeln!(s, "|---|---|---|---|---|");
            for c in &r.capacity {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {:.3} |",
                    c.component_id, c.kind, c.capacity, c.assigned, c.utilization
                );
            }
        }
    }
    s
}

/// Scatter of household locations over the region outline, or `None` when
/// the region has no extent.
pub fn render_svg_map(obs: &RegionObservation) -> Option<String> {
    let bb = obs.bbox?;
    let (w, h) = (bb.max_lon - bb.min_lon, bb.max_lat - bb.min_lat);
    let span = w.max(h);
    if !(span > 0.0) {
        return None;
    }
    let scale = (MAP_SIZE - 2.0 * MAP_MARGIN) / span;
    let x = |lon: f64| MAP_MARGIN + (lon - bb.min_lon) * scale;
    let y = |lat: f64| MAP_MARGIN + (bb.max_lat - lat) * scale;
    let (width, height) = (w * scale + 2.0 * MAP_MARGIN, h * scale + 2.0 * MAP_MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(s, "<title>Region {}</title>", obs.region_id);
    for ring in &obs.outline {
        let pts: Vec<String> = ring.iter().map(|p| format!("{:.2},{:.2}", x(p.lon), y(p.lat))).collect();
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="none" stroke="#333" stroke-width="1"/>"##,
            pts.join(" ")
        );
    }
    for p in obs.locations.iter().take(MAP_POINTS) {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="#c0392b" fill-opacity="0.6"/>"##,
            x(p.lon),
            y(p.lat)
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}
