//! Minimal SVG line charts for the runtime-scaling results (log-log axes).

use std::io::Write;

use crate::runtime::RuntimeRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Writes a log-log chart of mean runtime against bucket size, one
/// polyline per method.
pub fn write_runtime_svg(rows: &[RuntimeRow], mut w: impl Write) -> std::io::Result<()> {
    let mut methods: Vec<String> = rows.iter().map(|r| r.method.clone()).collect();
    methods.sort();
    methods.dedup();

    let xs: Vec<f64> = rows.iter().map(|r| r.bucket as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_s.max(1e-9)).collect();
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        let fx = (x.ln() - x_lo.ln()) / (x_hi.ln() - x_lo.ln()).max(1e-12);
        let fy = (y.ln() - y_lo.ln()) / (y_hi.ln() - y_lo.ln()).max(1e-12);
        (MARGIN + fx * (WIDTH - 2.0 * MARGIN), HEIGHT - MARGIN - fy * (HEIGHT - 2.0 * MARGIN))
    };

    writeln!(
        w,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )?;
    writeln!(w, "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>")?;
    writeln!(
        w,
        "  <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">Evaluation time vs grid size (log-log)</text>",
        MARGIN
    )?;
    // axes
    writeln!(
        w,
        "  <line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    )?;
    writeln!(
        w,
        "  <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    )?;
    writeln!(
        w,
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">bus count</text>",
        WIDTH / 2.0 - 30.0,
        HEIGHT - 18.0
    )?;
    writeln!(
        w,
        "  <text x=\"14\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 {})\">seconds</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )?;

    for (mi, method) in methods.iter().enumerate() {
        let color = COLORS[mi % COLORS.len()];
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| &r.method == method)
            .map(|r| (r.bucket as f64, r.mean_s.max(1e-9)))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite buckets"));
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        writeln!(
            w,
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            path.join(" ")
        )?;
        for &(x, y) in &pts {
            let (px, py) = to_px(x, y);
            writeln!(w, "  <circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"3\" fill=\"{color}\"/>")?;
        }
        writeln!(
            w,
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{method}</text>",
            WIDTH - MARGIN - 90.0,
            MARGIN + 18.0 * (mi as f64 + 1.0)
        )?;
    }
    writeln!(w, "</svg>")?;
    Ok(())
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0f64, f64::max);
    if lo.is_finite() && hi > 0.0 {
        (lo, hi)
    } else {
        (1e-6, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_output_is_well_formed() {
        let rows = vec![
            RuntimeRow { bucket: 20, method: "gnn".into(), mean_s: 0.1, median_s: 0.1, n: 3 },
            RuntimeRow { bucket: 50, method: "gnn".into(), mean_s: 0.2, median_s: 0.2, n: 3 },
            RuntimeRow { bucket: 20, method: "nr".into(), mean_s: 0.01, median_s: 0.01, n: 3 },
            RuntimeRow { bucket: 50, method: "nr".into(), mean_s: 0.05, median_s: 0.05, n: 3 },
        ];
        let mut out = Vec::new();
        write_runtime_svg(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
        assert_eq!(text.matches("<polyline").count(), 2);
    }
}
