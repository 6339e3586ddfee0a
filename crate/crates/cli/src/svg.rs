//! Lookback × holding heatmaps as standalone SVG.
//!
//! Output is plain text built from integer geometry and fixed-precision labels, so the same
//! grid renders to the same bytes everywhere.

use std::fmt::Write;

const CELL_W: usize = 52;
const CELL_H: usize = 28;
const LEFT: usize = 72;
const TOP: usize = 56;
const LEGEND_W: usize = 150;
const LEGEND_STEPS: usize = 10;

const RED: (u8, u8, u8) = (215, 48, 39);
const BLUE: (u8, u8, u8) = (44, 123, 182);
const WHITE: (u8, u8, u8) = (255, 255, 255);
/// Failed cells.
pub const MISSING: &str = "#cccccc";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColorScale {
    /// Sign only: `>= 0` red, `< 0` blue.
    TwoColor,
    /// Blue at `lo`, white at 0, red at `hi`; values outside are clamped.
    Diverging { lo: f64, hi: f64 },
    /// White at `lo`, red at `hi`.
    Sequential { lo: f64, hi: f64 },
}

impl ColorScale {
    /// Symmetric diverging scale spanning the largest absolute value (1 if there is none).
    pub fn symmetric_from(values: &[Option<f64>]) -> Self {
        let m = values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let m = if m > 0.0 { m } else { 1.0 };
        ColorScale::Diverging { lo: -m, hi: m }
    }

    /// Sequential scale from 0 to the largest value (1 if there is none).
    pub fn zero_to_max(values: &[Option<f64>]) -> Self {
        let m = values.iter().flatten().fold(0.0f64, |a, v| a.max(*v));
        ColorScale::Sequential {
            lo: 0.0,
            hi: if m > 0.0 { m } else { 1.0 },
        }
    }

    pub fn color(&self, v: f64) -> String {
        let rgb = match *self {
            ColorScale::TwoColor => {
                if v >= 0.0 {
                    RED
                } else {
                    BLUE
                }
            }
            ColorScale::Diverging { lo, hi } => {
                if v >= 0.0 {
                    mix(WHITE, RED, if hi > 0.0 { v / hi } else { 1.0 })
                } else {
                    mix(WHITE, BLUE, if lo < 0.0 { v / lo } else { 1.0 })
                }
            }
            ColorScale::Sequential { lo, hi } => mix(WHITE, RED, if hi > lo { (v - lo) / (hi - lo) } else { 1.0 }),
        };
        format!("#{:02x}{:02x}{:02x}", rgb.0, rgb.1, rgb.2)
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            ColorScale::TwoColor => None,
            ColorScale::Diverging { lo, hi } | ColorScale::Sequential { lo, hi } => Some((lo, hi)),
        }
    }
}

fn mix(a: (u8, u8, u8), b: (u8, u8, u8), t: f64) -> (u8, u8, u8) {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let ch = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    (ch(a.0, b.0), ch(a.1, b.1), ch(a.2, b.2))
}

pub struct Heatmap<'a> {
    pub title: &'a str,
    pub row_label: &'a str,
    pub col_label: &'a str,
    pub rows: &'a [usize],
    pub cols: &'a [usize],
    /// Row-major, `rows.len() * cols.len()` entries.
    pub values: &'a [Option<f64>],
    pub scale: ColorScale,
    /// Multiplier applied to cell and legend labels (100 for percentages).
    pub label_factor: f64,
    pub label_decimals: usize,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Heatmap<'_> {
    fn label(&self, v: f64) -> String {
        format!("{:.*}", self.label_decimals, v * self.label_factor)
    }

    pub fn render(&self) -> String {
        assert_eq!(self.values.len(), self.rows.len() * self.cols.len());
        let grid_w = CELL_W * self.cols.len();
        let grid_h = CELL_H * self.rows.len();
        let width = LEFT + grid_w + 24 + LEGEND_W;
        let height = TOP + grid_h.max(LEGEND_STEPS * 14 + 40) + 40;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<title>{}</title>"#, escape(self.title));
        let _ = writeln!(
            s,
            r#"<text x="{LEFT}" y="20" font-size="14">{}</text>"#,
            escape(self.title)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + grid_w / 2,
            TOP - 22,
            escape(self.col_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            TOP + grid_h / 2,
            TOP + grid_h / 2,
            escape(self.row_label)
        );
        for (c, k) in self.cols.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{k}</text>"#,
                LEFT + c * CELL_W + CELL_W / 2,
                TOP - 6
            );
        }
        for (r, j) in self.rows.iter().enumerate() {
            let y = TOP + r * CELL_H;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{j}</text>"#,
                LEFT - 6,
                y + CELL_H / 2 + 4
            );
            for (c, k) in self.cols.iter().enumerate() {
                let x = LEFT + c * CELL_W;
                let v = self.values[r * self.cols.len() + c];
                let (fill, text) = match v {
                    Some(v) => (self.scale.color(v), self.label(v)),
                    None => (MISSING.to_string(), String::new()),
                };
                let _ = writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#ffffff" data-j="{j}" data-k="{k}"/>"##
                );
                if !text.is_empty() {
                    let _ = writeln!(
                        s,
                        r#"<text x="{}" y="{}" text-anchor="middle">{text}</text>"#,
                        x + CELL_W / 2,
                        y + CELL_H / 2 + 4
                    );
                }
            }
        }
        self.legend(&mut s, LEFT + grid_w + 24);
        s.push_str("</svg>\n");
        s
    }

    fn legend(&self, s: &mut String, x: usize) {
        let y0 = TOP;
        match self.scale.bounds() {
            None => {
                let _ = writeln!(s, r#"<g class="legend" data-kind="two-color">"#);
                for (i, (v, name)) in [(1.0, "+1 momentum"), (-1.0, "-1 contrarian")].iter().enumerate() {
                    let y = y0 + i * 20;
                    let _ = writeln!(
                        s,
                        r#"<rect x="{x}" y="{y}" width="16" height="14" fill="{}"/>"#,
                        self.scale.color(*v)
                    );
                    let _ = writeln!(s, r#"<text x="{}" y="{}">{name}</text>"#, x + 22, y + 11);
                }
                s.push_str("</g>\n");
            }
            Some((lo, hi)) => {
                let _ = writeln!(s, r#"<g class="legend" data-min="{lo}" data-max="{hi}">"#);
                for i in 0..=LEGEND_STEPS {
                    // Top of the bar is `hi`.
                    let v = hi - (hi - lo) * i as f64 / LEGEND_STEPS as f64;
                    let y = y0 + i * 14;
                    let _ = writeln!(
                        s,
                        r#"<rect x="{x}" y="{y}" width="16" height="14" fill="{}"/>"#,
                        self.scale.color(v)
                    );
                }
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}">max {}</text>"#,
                    x + 22,
                    y0 + 11,
                    self.label(hi)
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}">min {}</text>"#,
                    x + 22,
                    y0 + LEGEND_STEPS * 14 + 11,
                    self.label(lo)
                );
                s.push_str("</g>\n");
            }
        }
    }
}
