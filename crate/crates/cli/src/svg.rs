//! Precision-recall plot as a standalone SVG document.

use std::fmt::Write;

use loopgate::PrPoint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn x_of(recall: f64) -> f64 {
    LEFT + recall.clamp(0.0, 1.0) * (WIDTH - LEFT - RIGHT)
}

fn y_of(precision: f64) -> f64 {
    HEIGHT - BOTTOM - precision.clamp(0.0, 1.0) * (HEIGHT - TOP - BOTTOM)
}

/// Points drawn for one curve: the first precision is carried back to recall 0.
fn polyline_points(curve: &[PrPoint]) -> String {
    let mut pts = Vec::with_capacity(curve.len() + 1);
    if let Some(first) = curve.first() {
        pts.push((0.0, first.precision));
    }
    pts.extend(curve.iter().map(|p| (p.recall, p.precision)));
    pts.iter()
        .map(|&(r, p)| format!("{:.2},{:.2}", x_of(r), y_of(p)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One polyline per `(sigma, curve)`, legend labeled by sigma.
pub fn pr_plot(series: &[(f64, &[PrPoint])]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let (x, y) = (x_of(v), y_of(v));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            y_of(0.0),
            y_of(1.0)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            x_of(0.0),
            x_of(1.0)
        );
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{v:.1}</text>"#, y_of(0.0) + 18.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, x_of(0.0) - 8.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x_of(0.0),
        y_of(1.0),
        x_of(1.0) - x_of(0.0),
        y_of(0.0) - y_of(1.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Recall</text>"#,
        0.5 * (x_of(0.0) + x_of(1.0)),
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">Precision</text>"#,
        0.5 * (y_of(0.0) + y_of(1.0)),
        0.5 * (y_of(0.0) + y_of(1.0))
    );

    for (i, (sigma, curve)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<polyline class="pr" data-sigma="{sigma}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            polyline_points(curve)
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 20.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text class="legend" x="{:.2}" y="{:.2}">σ = {sigma}</text>"#,
            lx + 30.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
