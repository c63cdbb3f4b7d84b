//! Minimal self-contained log-log SVG plots.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    /// Points with non-positive or non-finite coordinates are skipped and
    /// break the polyline.
    pub points: Vec<(f64, f64)>,
    /// Shade everything above the curve (an excluded region).
    pub shade_above: bool,
}

pub struct LogLogPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn usable(p: &(f64, f64)) -> bool {
    p.0.is_finite() && p.1.is_finite() && p.0 > 0.0 && p.1 > 0.0
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Decade range covering `lo..=hi`, at least one decade wide.
fn decades(lo: f64, hi: f64) -> (i32, i32) {
    let a = lo.log10().floor() as i32;
    let mut b = hi.log10().ceil() as i32;
    if b <= a {
        b = a + 1;
    }
    (a, b)
}

impl LogLogPlot {
    pub fn render(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(usable)
            .collect();
        let (xlo, xhi, ylo, yhi) = if pts.is_empty() {
            (1.0, 10.0, 1.0, 10.0)
        } else {
            let f = |sel: fn(&(f64, f64)) -> f64, max: bool| {
                pts.iter()
                    .map(sel)
                    .fold(if max { f64::MIN } else { f64::MAX }, |a, b| if max { a.max(b) } else { a.min(b) })
            };
            (f(|p| p.0, false), f(|p| p.0, true), f(|p| p.1, false), f(|p| p.1, true))
        };
        let (dx0, dx1) = decades(xlo, xhi);
        let (dy0, dy1) = decades(ylo, yhi);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x.log10() - f64::from(dx0)) / f64::from(dx1 - dx0) * pw;
        let sy = |y: f64| TOP + ph - (y.log10() - f64::from(dy0)) / f64::from(dy1 - dy0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(s, r#"<clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath>"#);

        // Shaded regions first so curves and grid stay visible.
        for (i, series) in self.series.iter().enumerate() {
            if !series.shade_above {
                continue;
            }
            for run in runs(&series.points) {
                let mut poly = String::new();
                for &(x, y) in &run {
                    let _ = write!(poly, "{:.2},{:.2} ", sx(x), sy(y));
                }
                let _ = write!(poly, "{:.2},{TOP:.2} {:.2},{TOP:.2}", sx(run[run.len() - 1].0), sx(run[0].0));
                let _ = writeln!(
                    s,
                    r#"<polygon points="{poly}" fill="{}" fill-opacity="0.18" stroke="none" clip-path="url(#plot)"/>"#,
                    COLORS[i % COLORS.len()]
                );
            }
        }

        for d in dx0..=dx1 {
            let x = sx(10f64.powi(d));
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"##,
                TOP + ph,
                TOP + ph + 18.0
            );
        }
        for d in dy0..=dy1 {
            let y = sy(10f64.powi(d));
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            for run in runs(&series.points) {
                let mut line = String::new();
                for &(x, y) in &run {
                    let _ = write!(line, "{:.2},{:.2} ", sx(x), sy(y));
                }
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8" clip-path="url(#plot)"/>"#,
                    line.trim_end()
                );
            }
            let ly = TOP + 16.0 + 16.0 * i as f64;
            let lx = LEFT + pw - 170.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Maximal runs of usable points.
fn runs(points: &[(f64, f64)]) -> Vec<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for p in points {
        if usable(p) {
            cur.push(*p);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_ticks_and_shading() {
        let plot = LogLogPlot {
            title: "a < b".into(),
            x_label: "rC [m]".into(),
            y_label: "lambda [1/s]".into(),
            series: vec![Series {
                label: "demo".into(),
                points: vec![(1e-8, 1e-5), (1e-7, 1e-9), (f64::NAN, 1.0), (1e-6, 1e-7), (1e-5, 1e-3)],
                shade_above: true,
            }],
        };
        let svg = plot.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("1e-8") && svg.contains("1e-5"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(!svg.contains("NaN"));
    }
}
