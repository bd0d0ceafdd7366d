//! Self-contained SVG line plots: stacked panels, one polyline each, no
//! external assets.

use std::fmt::Write as _;

const PANEL_W: f64 = 860.0;
const PANEL_H: f64 = 170.0;
const MARGIN_L: f64 = 90.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_TOP: f64 = 24.0;
const PANEL_GAP: f64 = 46.0;

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.5}")
    }
}

/// Renders `series` (label, samples) against the shared time axis into one
/// SVG document with one panel per series.
pub fn render(t: &[f64], series: &[(String, Vec<f64>)], time_label: &str) -> String {
    let n_panels = series.len();
    let total_w = MARGIN_L + PANEL_W + MARGIN_R;
    let total_h = MARGIN_TOP + n_panels as f64 * (PANEL_H + PANEL_GAP);
    let (t0, t1) = (
        t.first().copied().unwrap_or(0.0),
        t.last().copied().unwrap_or(1.0),
    );
    let t_span = if t1 > t0 { t1 - t0 } else { 1.0 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for (idx, (label, values)) in series.iter().enumerate() {
        let top = MARGIN_TOP + idx as f64 * (PANEL_H + PANEL_GAP);
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values {
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        if !vmin.is_finite() || !vmax.is_finite() {
            vmin = 0.0;
            vmax = 1.0;
        }
        if (vmax - vmin).abs() < 1e-300 {
            // Flat series: widen the window so the line sits mid-panel.
            let pad = if vmax == 0.0 { 1.0 } else { vmax.abs() * 0.1 };
            vmin -= pad;
            vmax += pad;
        }
        let v_span = vmax - vmin;

        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_L}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#888"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN_L}" y="{}" fill="#000">{}</text>"#,
            top - 8.0,
            label
        );
        // y-axis extrema labels.
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" fill="#444">{}</text>"#,
            MARGIN_L - 6.0,
            top + 12.0,
            fmt_tick(vmax)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" fill="#444">{}</text>"#,
            MARGIN_L - 6.0,
            top + PANEL_H,
            fmt_tick(vmin)
        );

        let mut pts = String::new();
        for (k, &v) in values.iter().enumerate() {
            let x = MARGIN_L + (t[k] - t0) / t_span * PANEL_W;
            let y = top + PANEL_H - (v - vmin) / v_span * PANEL_H;
            let _ = write!(pts, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="#1f6fb2" stroke-width="1.2"/>"#,
            pts.trim_end()
        );

        // Time labels under the last panel only.
        if idx == n_panels - 1 {
            let _ = writeln!(
                svg,
                r#"<text x="{MARGIN_L}" y="{}" fill="#444">{}</text>"#,
                top + PANEL_H + 18.0,
                fmt_tick(t0)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end" fill="#444">{}</text>"#,
                MARGIN_L + PANEL_W,
                top + PANEL_H + 18.0,
                fmt_tick(t1)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="#000">{}</text>"#,
                MARGIN_L + PANEL_W / 2.0,
                top + PANEL_H + 34.0,
                time_label
            );
        }
    }
    let _ = writeln!(svg, "</svg>");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_panels() {
        let t = vec![0.0, 0.5, 1.0];
        let series = vec![
            ("y1 [m]".to_string(), vec![0.0, 1.0, 0.5]),
            ("u [V]".to_string(), vec![1.0, 1.0, 1.0]), // flat series
        ];
        let svg = render(&t, &series, "t [s]");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("y1 [m]"));
        assert!(svg.contains("t [s]"));
        assert!(!svg.contains("NaN"));
    }
}
