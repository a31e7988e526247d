//! Hand-emitted SVG figures. Fixed viewBox, fixed palette, numbers printed
//! to six significant digits: the output is a pure function of the data,
//! with no timestamps or generated ids, so regenerating a figure from the
//! same inputs is byte-identical.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Six significant digits, fixed-point where the magnitude allows.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        format!("{v:.5e}")
    } else {
        let dec = (5 - mag).max(0) as usize;
        format!("{v:.dec$}")
    }
}

struct Axis {
    min: f64,
    max: f64,
}

impl Axis {
    fn from_values(values: impl Iterator<Item = f64>) -> Axis {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            if v.is_finite() {
                min = min.min(v);
                max = max.max(v);
            }
        }
        if !min.is_finite() || !max.is_finite() {
            return Axis { min: 0.0, max: 1.0 };
        }
        if min == max {
            min -= 0.5;
            max += 0.5;
        } else {
            let pad = 0.05 * (max - min);
            min -= pad;
            max += pad;
        }
        Axis { min, max }
    }

    fn ticks(&self) -> Vec<f64> {
        (0..5)
            .map(|i| self.min + (self.max - self.min) * i as f64 / 4.0)
            .collect()
    }
}

struct Frame {
    x: Axis,
    y: Axis,
}

impl Frame {
    fn sx(&self, v: f64) -> f64 {
        MARGIN_L + (v - self.x.min) / (self.x.max - self.x.min) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, v: f64) -> f64 {
        HEIGHT - MARGIN_B
            - (v - self.y.min) / (self.y.max - self.y.min) * (HEIGHT - MARGIN_T - MARGIN_B)
    }

    fn render_frame(&self, out: &mut String, title: &str, x_label: &str, y_label: &str) {
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
             font-family=\"monospace\" font-size=\"12\">\n"
        ));
        out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
        out.push_str(&format!(
            "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            WIDTH / 2.0,
            escape(title)
        ));
        let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
        let (y0, y1) = (HEIGHT - MARGIN_B, MARGIN_T);
        out.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"#000000\"/>\n"
        ));
        out.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"#000000\"/>\n"
        ));
        for t in self.x.ticks() {
            let sx = self.sx(t);
            out.push_str(&format!(
                "<line x1=\"{sx}\" y1=\"{y0}\" x2=\"{sx}\" y2=\"{}\" stroke=\"#000000\"/>\n",
                y0 + 5.0
            ));
            out.push_str(&format!(
                "<text x=\"{sx}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                y0 + 20.0,
                fmt_sig(t)
            ));
        }
        for t in self.y.ticks() {
            let sy = self.sy(t);
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{sy}\" x2=\"{x0}\" y2=\"{sy}\" stroke=\"#000000\"/>\n",
                x0 - 5.0
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
                x0 - 8.0,
                sy + 4.0,
                fmt_sig(t)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        ));
        out.push_str(&format!(
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            escape(y_label)
        ));
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter of (x, y) points with an optional least-squares line and a
/// caption (typically the correlation and p-value).
pub fn scatter_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[(f64, f64)],
    caption: &str,
) -> String {
    let frame = Frame {
        x: Axis::from_values(points.iter().map(|p| p.0)),
        y: Axis::from_values(points.iter().map(|p| p.1)),
    };
    let mut out = String::new();
    frame.render_frame(&mut out, title, x_label, y_label);

    if let Some((slope, intercept)) = least_squares_line(points) {
        let (x0, x1) = (frame.x.min, frame.x.max);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            fmt_sig(frame.sx(x0)),
            fmt_sig(frame.sy(slope * x0 + intercept).clamp(MARGIN_T, HEIGHT - MARGIN_B)),
            fmt_sig(frame.sx(x1)),
            fmt_sig(frame.sy(slope * x1 + intercept).clamp(MARGIN_T, HEIGHT - MARGIN_B)),
            PALETTE[1]
        ));
    }
    for &(x, y) in points {
        out.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.8\"/>\n",
            fmt_sig(frame.sx(x)),
            fmt_sig(frame.sy(y)),
            PALETTE[0]
        ));
    }
    if !caption.is_empty() {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            WIDTH - MARGIN_R - 4.0,
            MARGIN_T + 14.0,
            escape(caption)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// One polyline per named series, with a legend.
pub fn line_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let frame = Frame {
        x: Axis::from_values(series.iter().flat_map(|s| s.1.iter().map(|p| p.0))),
        y: Axis::from_values(series.iter().flat_map(|s| s.1.iter().map(|p| p.1))),
    };
    let mut out = String::new();
    frame.render_frame(&mut out, title, x_label, y_label);
    for (i, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt_sig(frame.sx(x)), fmt_sig(frame.sy(y))))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            coords.join(" ")
        ));
        let ly = MARGIN_T + 14.0 + 14.0 * i as f64;
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            WIDTH - MARGIN_R - 110.0,
            ly - 4.0,
            WIDTH - MARGIN_R - 90.0,
            ly - 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            WIDTH - MARGIN_R - 84.0,
            ly,
            escape(name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn least_squares_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_sig_examples() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1.00000");
        assert_eq!(fmt_sig(0.25), "0.250000");
        assert_eq!(fmt_sig(123456.0), "123456");
        assert_eq!(fmt_sig(-0.000123456), "-0.000123456");
        assert!(fmt_sig(1.0e9).contains('e'));
    }

    #[test]
    fn svg_is_deterministic_and_clean() {
        let points = vec![(0.0, 0.1), (0.5, 0.4), (1.0, 0.9)];
        let a = scatter_svg("t", "x", "y", &points, "r = 0.99");
        let b = scatter_svg("t", "x", "y", &points, "r = 0.99");
        assert_eq!(a, b);
        assert!(!a.to_lowercase().contains("date"));
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn line_plot_renders_all_series() {
        let series = vec![
            ("V1".to_string(), vec![(0.0, 0.0), (1.0, 1.0)]),
            ("IFS".to_string(), vec![(0.0, 0.0), (1.0, 0.5)]),
        ];
        let svg = line_svg("traj", "step", "score", &series);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("V1"));
        assert!(svg.contains("IFS"));
    }
}
