//! Static SVG line plots over the day, with shaded confidence bands.

use std::fmt::Write;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

pub struct Series {
    pub label: String,
    /// Minutes of the day.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub struct Plot {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed reference line at zero.
    pub zero_line: bool,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    step * mag
}

impl Plot {
    pub fn render(&self) -> String {
        let finite = |v: &&f64| v.is_finite();
        let values = self
            .series
            .iter()
            .flat_map(|s| s.lower.iter().chain(&s.upper).chain(&s.y));
        let mut lo = values.clone().filter(finite).fold(f64::INFINITY, |a, &b| a.min(b));
        let mut hi = values.filter(finite).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if self.zero_line {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        if !lo.is_finite() || !hi.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        let (lo, hi) = (lo - pad, hi + pad);
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let sx = |m: f64| LEFT + plot_w * m / 1440.0;
        let sy = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            out,
            r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
            LEFT + plot_w / 2.0,
            escape(&self.title)
        );

        // axes and ticks
        let _ = writeln!(
            out,
            r##"<g stroke="#333" stroke-width="1"><line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}"/></g>"##,
            b = TOP + plot_h,
            r = LEFT + plot_w
        );
        for h in (0..=24).step_by(3) {
            let x = sx(h as f64 * 60.0);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{t}" stroke="#333"/><text x="{x:.2}" y="{ty}" text-anchor="middle">{h}</text>"##,
                b = TOP + plot_h,
                t = TOP + plot_h + 5.0,
                ty = TOP + plot_h + 20.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">hour of day</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 8.0
        );
        let step = nice_step(hi - lo);
        let mut tick = (lo / step).ceil() * step;
        while tick <= hi {
            let y = sy(tick);
            let label = if tick.abs() < step * 1e-9 { 0.0 } else { tick };
            let _ = writeln!(
                out,
                r##"<line x1="{l}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#333"/><text x="{tx}" y="{ty:.2}" text-anchor="end">{label}</text>"##,
                l = LEFT - 5.0,
                tx = LEFT - 8.0,
                ty = y + 4.0
            );
            tick += step;
        }
        let _ = writeln!(
            out,
            r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
        if self.zero_line {
            let y = sy(0.0);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="#000" stroke-dasharray="6 4"/>"##,
                r = LEFT + plot_w
            );
        }

        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mut band = String::new();
            for (x, u) in s.x.iter().zip(&s.upper) {
                let _ = write!(band, "{:.2},{:.2} ", sx(*x), sy(*u));
            }
            for (x, l) in s.x.iter().zip(&s.lower).rev() {
                let _ = write!(band, "{:.2},{:.2} ", sx(*x), sy(*l));
            }
            let _ = writeln!(
                out,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.trim_end()
            );
            let mut d = String::new();
            for (i, (x, y)) in s.x.iter().zip(&s.y).enumerate() {
                let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx(*x), sy(*y));
            }
            let _ = writeln!(
                out,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"><title>{}</title></path>"#,
                escape(&s.label)
            );
            let ly = TOP + 10.0 + 20.0 * k as f64;
            let lx = LEFT + plot_w + 15.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}
