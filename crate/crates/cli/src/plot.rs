//! Relative-error contour plots of a loss surface as standalone SVG 1.1.
//!
//! Axes are log2(lr) horizontally and log2(bs) vertically. Contours come from
//! marching squares over the grid nodes, with segments chained through shared
//! cell edges so that every contour is emitted as one path.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use hpscale_core::surface::{LossSurface, Metric};
use hpscale_core::{Error, Result};

pub const DEFAULT_LEVELS_PERMILLE: [f64; 4] = [1.0, 2.5, 5.0, 10.0];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 560.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerKind {
    Inside,
    /// Drawn clamped onto the hull boundary with a triangle glyph.
    OutOfHull,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub label: String,
    pub lr: f64,
    pub bs: f64,
    pub kind: MarkerKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub metric: Metric,
    pub levels_permille: Vec<f64>,
    pub markers: Vec<Marker>,
    /// Written into the SVG `<desc>`.
    pub provenance: String,
}

/// Fixed-precision coordinate formatting keeps output byte-stable.
fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Maps log2 coordinates to pixels.
struct Frame {
    u0: f64,
    u1: f64,
    v0: f64,
    v1: f64,
}

impl Frame {
    fn plot_w() -> f64 {
        WIDTH - LEFT - RIGHT
    }

    fn plot_h() -> f64 {
        HEIGHT - TOP - BOTTOM
    }

    fn x(&self, u: f64) -> f64 {
        if self.u1 == self.u0 {
            LEFT + Self::plot_w() / 2.0
        } else {
            LEFT + (u - self.u0) / (self.u1 - self.u0) * Self::plot_w()
        }
    }

    fn y(&self, v: f64) -> f64 {
        if self.v1 == self.v0 {
            TOP + Self::plot_h() / 2.0
        } else {
            TOP + Self::plot_h() - (v - self.v0) / (self.v1 - self.v0) * Self::plot_h()
        }
    }
}

/// A cell edge: `H(i, j)` joins nodes `(i, j)`–`(i+1, j)`, `V(i, j)` joins
/// `(i, j)`–`(i, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// A contour as a sequence of points in (u, v); `closed` when it loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub level_permille: f64,
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

/// Marching squares on node values `z[i][j]` at coordinates `(us[i], vs[j])`.
/// A node is "above" when `z > level`.
pub fn contours(us: &[f64], vs: &[f64], z: &[Vec<f64>], level: f64) -> Vec<Contour> {
    let (nu, nv) = (us.len(), vs.len());
    if nu < 2 || nv < 2 {
        return Vec::new();
    }
    let above = |i: usize, j: usize| z[i][j] > level;
    let crossing = |e: Edge| -> (f64, f64) {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (a, b) = (z[i0][j0], z[i1][j1]);
        let t = (level - a) / (b - a);
        (us[i0] + t * (us[i1] - us[i0]), vs[j0] + t * (vs[j1] - vs[j0]))
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for i in 0..nu - 1 {
        for j in 0..nv - 1 {
            // corners counter-clockwise from (i, j)
            let c = [above(i, j), above(i + 1, j), above(i + 1, j + 1), above(i, j + 1)];
            let bottom = Edge::H(i, j);
            let right = Edge::V(i + 1, j);
            let top = Edge::H(i, j + 1);
            let left = Edge::V(i, j);
            let sides = [(bottom, c[0] != c[1]), (right, c[1] != c[2]), (top, c[2] != c[3]), (left, c[3] != c[0])];
            let cut: Vec<Edge> = sides.iter().filter(|s| s.1).map(|s| s.0).collect();
            match cut.len() {
                2 => segments.push((cut[0], cut[1])),
                4 => {
                    let centre = (z[i][j] + z[i + 1][j] + z[i + 1][j + 1] + z[i][j + 1]) / 4.0;
                    if (centre > level) == c[0] {
                        // corners 0 and 2 joined through the centre
                        segments.push((bottom, right));
                        segments.push((top, left));
                    } else {
                        segments.push((bottom, left));
                        segments.push((right, top));
                    }
                }
                _ => {}
            }
        }
    }

    let mut at: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        at.entry(*a).or_default().push(k);
        at.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let walk = |start: Edge, used: &mut Vec<bool>| -> (Vec<Edge>, bool) {
        let mut path = vec![start];
        let mut cur = start;
        while let Some(&k) = at[&cur].iter().find(|&&k| !used[k]) {
            used[k] = true;
            let (a, b) = segments[k];
            cur = if a == cur { b } else { a };
            if cur == start {
                return (path, true);
            }
            path.push(cur);
        }
        (path, false)
    };

    let mut out = Vec::new();
    let level_permille = level * 1000.0;
    // open contours start at boundary edges, which touch a single segment
    let ends: Vec<Edge> = at.iter().filter(|(_, v)| v.len() == 1).map(|(e, _)| *e).collect();
    for e in ends {
        if at[&e].iter().all(|&k| used[k]) {
            continue;
        }
        let (path, closed) = walk(e, &mut used);
        out.push(Contour { level_permille, points: path.into_iter().map(crossing).collect(), closed });
    }
    let starts: Vec<Edge> = at.keys().copied().collect();
    for e in starts {
        if at[&e].iter().all(|&k| used[k]) {
            continue;
        }
        let (path, closed) = walk(e, &mut used);
        out.push(Contour { level_permille, points: path.into_iter().map(crossing).collect(), closed });
    }
    out
}

fn path_data(frame: &Frame, c: &Contour) -> String {
    let mut d = String::new();
    for (k, &(u, v)) in c.points.iter().enumerate() {
        let cmd = if k == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{},{} ", num(frame.x(u)), num(frame.y(v)));
    }
    if c.closed {
        d.push('Z');
    }
    d.trim_end().to_string()
}

fn lr_label(lr: f64) -> String {
    let e = lr.log2();
    if (e * 2.0 - (e * 2.0).round()).abs() < 1e-9 {
        format!("2^{}", (e * 2.0).round() / 2.0)
    } else {
        format!("{lr:.3e}")
    }
}

pub fn render_svg(s: &LossSurface, opts: &PlotOptions) -> Result<String> {
    if !s.is_complete_grid() {
        return Err(Error::Shape("plot needs a complete lr x bs grid".into()));
    }
    for &l in &opts.levels_permille {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Argument(format!("contour level {l} must be finite and > 0")));
        }
    }
    let opt = s.find_optimum(opts.metric)?;
    let us: Vec<f64> = s.lr_axis().iter().map(|v| v.log2()).collect();
    let vs: Vec<f64> = s.bs_axis().iter().map(|&b| (b as f64).log2()).collect();
    let z: Vec<Vec<f64>> = (0..us.len())
        .map(|i| {
            (0..vs.len())
                .map(|j| {
                    let l = s.cell_loss(i, j, opts.metric).expect("complete grid");
                    (l - opt.loss) / opt.loss
                })
                .collect()
        })
        .collect();
    let frame = Frame { u0: us[0], u1: us[us.len() - 1], v0: vs[0], v1: vs[vs.len() - 1] };

    let mut o = String::new();
    let _ = writeln!(o, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="11">"#,
        WIDTH, HEIGHT, WIDTH, HEIGHT
    );
    let _ = writeln!(o, "<desc>{}</desc>", escape(&opts.provenance));
    let _ = writeln!(o, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let title = format!(
        "relative {} loss error (per-mille), N={:e}, D={:e}",
        match opts.metric {
            Metric::Train => "train",
            Metric::Val => "val",
        },
        s.scale().n_params(),
        s.scale().d_tokens()
    );
    let _ = writeln!(o, r#"<text x="{}" y="24" font-size="13">{}</text>"#, num(LEFT), escape(&title));

    // frame, ticks and grid nodes
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        o,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333333"/>"##,
        num(x0),
        num(y0),
        num(x1 - x0),
        num(y1 - y0)
    );
    let _ = writeln!(o, r#"<g id="lr-ticks" text-anchor="end">"#);
    for (lr, &u) in s.lr_axis().iter().zip(&us) {
        let x = frame.x(u);
        let _ = writeln!(
            o,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#333333"/><text x="{0}" y="{3}" transform="rotate(-45 {0} {3})">{4}</text>"##,
            num(x),
            num(y1),
            num(y1 + 5.0),
            num(y1 + 16.0),
            escape(&lr_label(*lr))
        );
    }
    let _ = writeln!(o, "</g>");
    let _ = writeln!(o, r#"<g id="bs-ticks" text-anchor="end">"#);
    for (bs, &v) in s.bs_axis().iter().zip(&vs) {
        let y = frame.y(v);
        let _ = writeln!(
            o,
            r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#333333"/><text x="{3}" y="{4}">{5}</text>"##,
            num(x0 - 5.0),
            num(y),
            num(x0),
            num(x0 - 8.0),
            num(y + 4.0),
            bs
        );
    }
    let _ = writeln!(o, "</g>");
    let _ = writeln!(
        o,
        r#"<text x="{}" y="{}" text-anchor="middle">learning rate (log scale)</text>"#,
        num((x0 + x1) / 2.0),
        num(HEIGHT - 10.0)
    );
    let _ = writeln!(
        o,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">batch size, tokens (log scale)</text>"#,
        num((y0 + y1) / 2.0)
    );
    let _ = writeln!(o, r##"<g id="nodes" fill="#bbbbbb">"##);
    for &u in &us {
        for &v in &vs {
            let _ = writeln!(o, r#"<circle cx="{}" cy="{}" r="1.5"/>"#, num(frame.x(u)), num(frame.y(v)));
        }
    }
    let _ = writeln!(o, "</g>");

    // contours
    let _ = writeln!(o, r#"<g id="contours" fill="none" stroke-width="1.5">"#);
    for (k, &level) in opts.levels_permille.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        for c in contours(&us, &vs, &z, level / 1000.0) {
            let _ = writeln!(
                o,
                r#"<path class="contour" data-level="{}" stroke="{colour}" d="{}"/>"#,
                level,
                path_data(&frame, &c)
            );
        }
    }
    let _ = writeln!(o, "</g>");

    // optimum
    let (ox, oy) = (frame.x(opt.hp.lr.log2()), frame.y((opt.hp.bs_tokens as f64).log2()));
    let _ = writeln!(
        o,
        r##"<g id="optimum"><path d="M{},{} L{},{} M{},{} L{},{}" stroke="#000000" stroke-width="2"/><circle cx="{}" cy="{}" r="6" fill="none" stroke="#000000"/></g>"##,
        num(ox - 6.0),
        num(oy),
        num(ox + 6.0),
        num(oy),
        num(ox),
        num(oy - 6.0),
        num(ox),
        num(oy + 6.0),
        num(ox),
        num(oy)
    );

    // overlay markers
    let _ = writeln!(o, r#"<g id="markers">"#);
    for m in &opts.markers {
        if !(m.lr > 0.0 && m.bs > 0.0 && m.lr.is_finite() && m.bs.is_finite()) {
            continue;
        }
        let u = m.lr.log2().clamp(frame.u0, frame.u1);
        let v = m.bs.log2().clamp(frame.v0, frame.v1);
        let (x, y) = (frame.x(u), frame.y(v));
        match m.kind {
            MarkerKind::Inside => {
                let _ = writeln!(
                    o,
                    r##"<circle class="marker" cx="{}" cy="{}" r="4" fill="#d62728"/>"##,
                    num(x),
                    num(y)
                );
            }
            MarkerKind::OutOfHull => {
                let _ = writeln!(
                    o,
                    r##"<path class="marker out-of-hull" d="M{},{} L{},{} L{},{} Z" fill="none" stroke="#d62728" stroke-width="1.5"/>"##,
                    num(x),
                    num(y - 6.0),
                    num(x - 5.0),
                    num(y + 4.0),
                    num(x + 5.0),
                    num(y + 4.0)
                );
            }
        }
        let suffix = if m.kind == MarkerKind::OutOfHull { " (out of hull)" } else { "" };
        let _ = writeln!(
            o,
            r#"<text x="{}" y="{}">{}{}</text>"#,
            num(x + 7.0),
            num(y - 5.0),
            escape(&m.label),
            suffix
        );
    }
    let _ = writeln!(o, "</g>");

    // legend
    let lx = x1 + 20.0;
    let _ = writeln!(o, r#"<g id="legend">"#);
    for (k, &level) in opts.levels_permille.iter().enumerate() {
        let y = y0 + 10.0 + 18.0 * k as f64;
        let _ = writeln!(
            o,
            r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{3}" stroke-width="2"/><text x="{4}" y="{5}">{6} ‰</text>"#,
            num(lx),
            num(y),
            num(lx + 20.0),
            PALETTE[k % PALETTE.len()],
            num(lx + 26.0),
            num(y + 4.0),
            level
        );
    }
    let y = y0 + 10.0 + 18.0 * opts.levels_permille.len() as f64;
    let _ = writeln!(
        o,
        r#"<text x="{}" y="{}">+ optimum: lr={:.4e}, bs={}</text>"#,
        num(lx),
        num(y + 4.0),
        opt.hp.lr,
        opt.hp.bs_tokens
    );
    let _ = writeln!(o, "</g>");
    let _ = writeln!(o, "</svg>");
    Ok(o)
}
