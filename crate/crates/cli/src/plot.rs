//! Minimal deterministic SVG line charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional `(x, lo, hi)` band drawn beneath the line.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, band: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PlotError {
    #[error("no series to plot")]
    NoSeries,
    #[error("series `{0}` has no plottable points")]
    EmptySeries(String),
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(vals: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in vals {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        (0..=4)
            .map(|i| {
                let t = self.lo + (self.hi - self.lo) * i as f64 / 4.0;
                let v = if self.log { 10f64.powf(t) } else { t };
                (i as f64 / 4.0, format!("{v:.3e}"))
            })
            .collect()
    }
}

fn usable(p: &(f64, f64), spec: &PlotSpec) -> bool {
    p.0.is_finite() && p.1.is_finite() && (!spec.log_x || p.0 > 0.0) && (!spec.log_y || p.1 > 0.0)
}

/// Renders `series` as a standalone SVG document.
///
/// Output depends only on the inputs; coordinates are printed with two decimals.
pub fn render_svg(spec: &PlotSpec, series: &[Series]) -> Result<String, PlotError> {
    if series.is_empty() {
        return Err(PlotError::NoSeries);
    }
    let mut pts: Vec<Vec<(f64, f64)>> = Vec::new();
    for s in series {
        let p: Vec<_> = s.points.iter().copied().filter(|p| usable(p, spec)).collect();
        if p.is_empty() {
            return Err(PlotError::EmptySeries(s.label.clone()));
        }
        pts.push(p);
    }
    let bands = series.iter().flat_map(|s| s.band.iter().flatten());
    let xs = pts.iter().flatten().map(|p| p.0);
    let ys = pts
        .iter()
        .flatten()
        .map(|p| p.1)
        .chain(bands.flat_map(|b| [b.1, b.2]).filter(|v| v.is_finite() && (!spec.log_y || *v > 0.0)));
    let ax = Axis::fit(xs, spec.log_x);
    let ay = Axis::fit(ys, spec.log_y);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + ax.frac(x) * pw;
    let py = |y: f64| TOP + (1.0 - ay.frac(y)) * ph;

    let mut o = String::new();
    let _ = writeln!(o, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(o, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(o, r#"<text x="{:.2}" y="22" font-size="14" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, esc(&spec.title));
    let _ = writeln!(o, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for (f, label) in ax.ticks() {
        let x = LEFT + f * pw;
        let _ = writeln!(o, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 4.0);
        let _ = writeln!(o, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, TOP + ph + 16.0);
    }
    for (f, label) in ay.ticks() {
        let y = TOP + (1.0 - f) * ph;
        let _ = writeln!(o, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, esc(&spec.x_label));
    let _ = writeln!(
        o,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(&spec.y_label)
    );
    for (i, (s, p)) in series.iter().zip(&pts).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some(band) = &s.band {
            let ok: Vec<_> = band
                .iter()
                .filter(|b| usable(&(b.0, b.1), spec) && usable(&(b.0, b.2), spec))
                .collect();
            if !ok.is_empty() {
                let mut d = String::new();
                for b in &ok {
                    let _ = write!(d, "{:.2},{:.2} ", px(b.0), py(b.2));
                }
                for b in ok.iter().rev() {
                    let _ = write!(d, "{:.2},{:.2} ", px(b.0), py(b.1));
                }
                let _ = writeln!(o, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, d.trim_end());
            }
        }
        let mut d = String::new();
        for q in p {
            let _ = write!(d, "{:.2},{:.2} ", px(q.0), py(q.1));
        }
        let _ = writeln!(o, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end());
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = W - RIGHT + 10.0;
        let _ = writeln!(o, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 24.0, ly + 4.0, esc(&s.label));
    }
    o.push_str("</svg>\n");
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_series_has_one_polyline() {
        let s = Series::line("a", vec![(1.0, 1.0), (2.0, 4.0), (3.0, 9.0)]);
        let svg = render_svg(&PlotSpec::default(), &[s]).unwrap();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 0);
    }

    #[test]
    fn byte_stable() {
        let s = Series {
            label: "median <rel err>".into(),
            points: vec![(100.0, 0.5), (200.0, 0.1)],
            band: Some(vec![(100.0, 0.4, 0.6), (200.0, 0.05, 0.2)]),
        };
        let spec = PlotSpec { title: "t".into(), log_y: true, ..Default::default() };
        let a = render_svg(&spec, std::slice::from_ref(&s)).unwrap();
        assert_eq!(a, render_svg(&spec, &[s]).unwrap());
        assert!(a.contains("&lt;rel err&gt;"));
        assert_eq!(a.matches("<polygon").count(), 1);
    }

    #[test]
    fn empty_series_rejected() {
        assert_eq!(render_svg(&PlotSpec::default(), &[]), Err(PlotError::NoSeries));
        let spec = PlotSpec { log_y: true, ..Default::default() };
        let s = Series::line("zeros", vec![(1.0, 0.0)]);
        assert_eq!(render_svg(&spec, &[s]), Err(PlotError::EmptySeries("zeros".into())));
    }
}
