//! Minimal static SVG charts.

use std::fmt::Write;

use super::fit::RateFit;

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Drawn as a dashed line `y = e^intercept x^slope`.
    pub fit: Option<RateFit>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn from_logs(mut lo: f64, mut hi: f64) -> Self {
        if !(lo.is_finite() && hi.is_finite()) {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Axis { lo: lo - pad, hi: hi + pad }
    }

    fn frac(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
}

/// Log-log scatter of every series with optional fitted power laws.
pub fn loglog_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = || {
        series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
    };
    let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts() {
        xlo = xlo.min(x.log10());
        xhi = xhi.max(x.log10());
        ylo = ylo.min(y.log10());
        yhi = yhi.max(y.log10());
    }
    let xa = Axis::from_logs(xlo, xhi);
    let ya = Axis::from_logs(ylo, yhi);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |lx: f64| LEFT + xa.frac(lx) * pw;
    let py = |ly: f64| TOP + (1.0 - ya.frac(ly)) * ph;

    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(
        out,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>"
    );
    for (axis, horizontal) in [(&xa, true), (&ya, false)] {
        let mut t = axis.lo.ceil() as i32;
        let ticks_at = |lv: f64| if horizontal { px(lv) } else { py(lv) };
        let span = axis.hi - axis.lo;
        let step = if span < 1.5 { None } else { Some(1) };
        let mut marks: Vec<f64> = Vec::new();
        match step {
            Some(_) => {
                while (t as f64) <= axis.hi {
                    marks.push(t as f64);
                    t += 1;
                }
            }
            None => {
                for i in 0..=4 {
                    marks.push(axis.lo + span * (0.1 + 0.2 * i as f64));
                }
            }
        }
        for lv in marks {
            let p = ticks_at(lv);
            let label = format!("{:.3}", 10f64.powf(lv));
            let label = label.trim_end_matches('0').trim_end_matches('.');
            if horizontal {
                let _ = writeln!(
                    out,
                    "<line x1=\"{p:.1}\" y1=\"{}\" x2=\"{p:.1}\" y2=\"{}\" stroke=\"black\"/><text x=\"{p:.1}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
                    TOP + ph,
                    TOP + ph + 5.0,
                    TOP + ph + 18.0
                );
            } else {
                let _ = writeln!(
                    out,
                    "<line x1=\"{}\" y1=\"{p:.1}\" x2=\"{LEFT}\" y2=\"{p:.1}\" stroke=\"black\"/><text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>",
                    LEFT - 5.0,
                    LEFT - 8.0,
                    p + 4.0
                );
            }
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        LEFT + pw / 2.0,
        H - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for &(x, y) in &s.points {
            if x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>",
                    px(x.log10()),
                    py(y.log10())
                );
            }
        }
        if let Some(f) = s.fit {
            let ln10 = std::f64::consts::LN_10;
            let line_y = |lx: f64| (f.intercept + f.slope * lx * ln10) / ln10;
            let (a, b) = (xa.lo, xa.hi);
            let _ = writeln!(
                out,
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" stroke-dasharray=\"5,4\"/>",
                px(a),
                py(line_y(a).clamp(ya.lo, ya.hi)),
                px(b),
                py(line_y(b).clamp(ya.lo, ya.hi))
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let label = match s.fit {
            Some(f) => format!("{} ({:.3})", s.label, f.slope),
            None => s.label.clone(),
        };
        let _ = writeln!(
            out,
            "<circle cx=\"{:.1}\" cy=\"{ly:.1}\" r=\"4\" fill=\"{color}\"/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            W - RIGHT + 15.0,
            W - RIGHT + 25.0,
            ly + 4.0,
            escape(&label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One row per check, green for pass and red for fail.
pub fn status_svg(title: &str, rows: &[(String, bool)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    for (i, (label, ok)) in rows.iter().enumerate() {
        let y = TOP + 20.0 * i as f64;
        let (color, word) = if *ok { ("#2ca02c", "pass") } else { ("#d62728", "FAIL") };
        let _ = writeln!(
            out,
            "<rect x=\"{LEFT}\" y=\"{y:.1}\" width=\"40\" height=\"16\" fill=\"{color}\"/><text x=\"{:.1}\" y=\"{:.1}\" fill=\"white\" text-anchor=\"middle\">{word}</text><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            LEFT + 20.0,
            y + 12.0,
            LEFT + 50.0,
            y + 12.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out.replacen(&format!("height=\"{H}\""), &format!("height=\"{}\"", (TOP + 20.0 * rows.len() as f64 + 20.0).max(H)), 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_contains_every_point_and_fit() {
        let s = vec![
            Series {
                label: "C1".into(),
                points: vec![(50.0, 0.1), (100.0, 0.07), (200.0, 0.05)],
                fit: Some(RateFit { slope: -0.5, intercept: 0.0, r2: 1.0 }),
            },
            Series {
                label: "a<b".into(),
                points: vec![(50.0, 0.05), (0.0, 1.0)],
                fit: None,
            },
        ];
        let svg = loglog_svg("t", "n", "W1", &s);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        // 4 plotted points + 2 legend markers
        assert_eq!(svg.matches("<circle").count(), 6);
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn empty_series_still_renders() {
        let svg = loglog_svg("t", "n", "W1", &[]);
        assert!(svg.contains("</svg>"));
        let svg = status_svg("verify", &[("group".into(), true), ("lemma1".into(), false)]);
        assert!(svg.contains("FAIL") && svg.contains("pass"));
    }
}
