//! Minimal static SVG line charts. No interactivity, no dependencies: a
//! fixed-size canvas, autoscaled axes with a handful of ticks, one polyline
//! per series, and a text legend.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

const COLORS: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    (0..=4).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect()
}

impl LineChart {
    pub fn render(&self) -> String {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (_, pts) in &self.series {
            for &(x, y) in pts {
                if x.is_finite() && y.is_finite() {
                    xs.push(x);
                    ys.push(y);
                }
            }
        }
        let (x_lo, x_hi) = bounds(&xs);
        let (y_lo, y_hi) = bounds(&ys);
        let x_span = (x_hi - x_lo).max(f64::MIN_POSITIVE);
        let y_span = (y_hi - y_lo).max(f64::MIN_POSITIVE);
        let plot_w = WIDTH - MARGIN_L - MARGIN_R;
        let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
        let px = |x: f64| MARGIN_L + (x - x_lo) / x_span * plot_w;
        let py = |y: f64| HEIGHT - MARGIN_B - (y - y_lo) / y_span * plot_h;

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"12\">\n"
        ));
        out.push_str(&format!(
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            WIDTH / 2.0,
            escape(&self.title)
        ));

        // Axes.
        out.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B,
            WIDTH - MARGIN_R,
            HEIGHT - MARGIN_B
        ));
        out.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B
        ));
        for t in nice_ticks(x_lo, x_hi) {
            let x = px(t);
            out.push_str(&format!(
                "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n\
                 <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{t:.3}</text>\n",
                HEIGHT - MARGIN_B,
                HEIGHT - MARGIN_B + 5.0,
                HEIGHT - MARGIN_B + 20.0
            ));
        }
        for t in nice_ticks(y_lo, y_hi) {
            let y = py(t);
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{y}\" x2=\"{MARGIN_L}\" y2=\"{y}\" stroke=\"black\"/>\n\
                 <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{t:.3}</text>\n",
                MARGIN_L - 5.0,
                MARGIN_L - 8.0,
                y + 4.0
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        ));

        for (idx, (label, pts)) in self.series.iter().enumerate() {
            let color = COLORS[idx % COLORS.len()];
            let path: Vec<String> = pts
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            if !path.is_empty() {
                out.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                    path.join(" ")
                ));
            }
            let ly = MARGIN_T + 14.0 * idx as f64;
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
                 <text x=\"{}\" y=\"{}\">{}</text>\n",
                WIDTH - 190.0,
                WIDTH - 170.0,
                WIDTH - 165.0,
                ly + 4.0,
                escape(label)
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_svg() {
        let chart = LineChart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![("a".into(), vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)])],
        };
        let svg = chart.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("polyline"));
    }

    #[test]
    fn degenerate_data_does_not_panic() {
        let chart = LineChart {
            title: "empty".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![("a".into(), vec![])],
        };
        let svg = chart.render();
        assert!(svg.contains("</svg>"));
    }
}
