//! Hand-rolled static SVG rendering: annotated graph drawings, line charts,
//! and histograms. Output is deterministic for equal inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use causal_graph::{CausalGraph, EdgeClass};

use crate::CliError;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#17becf",
];

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Longest-path layering: roots at layer 0, every node one past its deepest
/// parent. Returns (layer, slot within layer) per node id.
fn layered_positions(g: &CausalGraph) -> Vec<(usize, usize)> {
    let n = g.n_observed() + g.n_hidden();
    let mut layer = vec![0usize; n];
    for &id in g.topological_order() {
        for &p in g.parents_of(id) {
            layer[id] = layer[id].max(layer[p] + 1);
        }
    }
    let mut next_slot: BTreeMap<usize, usize> = BTreeMap::new();
    let mut pos = vec![(0usize, 0usize); n];
    for &id in g.topological_order() {
        let slot = next_slot.entry(layer[id]).or_insert(0);
        pos[id] = (layer[id], *slot);
        *slot += 1;
    }
    pos
}

fn edge_color(class: Option<EdgeClass>) -> &'static str {
    match class {
        Some(EdgeClass::Unconfounded) => "#4a4a4a",
        Some(EdgeClass::ProxyIdentifiable) => "#1f77b4",
        Some(EdgeClass::Unidentifiable) => "#d62728",
        None => "#b0b0b0",
    }
}

/// Draws the graph with nodes layered by causal depth and observed edges
/// colored by their identifiability class. Hidden nodes and their edges are
/// dashed.
pub fn render_graph(
    g: &CausalGraph,
    classes: &BTreeMap<(String, String), EdgeClass>,
    highlight: Option<(&str, &str)>,
    path: &Path,
) -> Result<(), CliError> {
    let pos = layered_positions(g);
    let n_layers = pos.iter().map(|&(l, _)| l + 1).max().unwrap_or(1);
    let layer_width = vec![0usize; n_layers]
        .iter()
        .enumerate()
        .map(|(l, _)| pos.iter().filter(|&&(pl, _)| pl == l).count())
        .collect::<Vec<_>>();
    let max_width = layer_width.iter().copied().max().unwrap_or(1);

    let r = 24.0;
    let x_gap = 130.0;
    let y_gap = 110.0;
    let width = 80.0 + max_width as f64 * x_gap + 170.0;
    let height = 70.0 + n_layers as f64 * y_gap;
    let center = |id: usize| -> (f64, f64) {
        let (l, s) = pos[id];
        let w = layer_width[l] as f64;
        let x = 40.0 + (max_width as f64 - w) * x_gap / 2.0 + (s as f64 + 0.5) * x_gap;
        let y = 50.0 + l as f64 * y_gap;
        (x, y)
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    out.push_str("<defs>\n");
    for color in ["#4a4a4a", "#1f77b4", "#d62728", "#b0b0b0"] {
        let _ = writeln!(
            out,
            "<marker id=\"arrow-{}\" viewBox=\"0 0 10 10\" refX=\"9\" refY=\"5\" markerWidth=\"7\" markerHeight=\"7\" orient=\"auto-start-reverse\"><path d=\"M 0 0 L 10 5 L 0 10 z\" fill=\"{color}\"/></marker>",
            &color[1..]
        );
    }
    out.push_str("</defs>\n");

    for (p_name, c_name) in g.edges() {
        let p = g.node_id(p_name).expect("edge endpoint");
        let c = g.node_id(c_name).expect("edge endpoint");
        let (x1, y1) = center(p);
        let (x2, y2) = center(c);
        let dx = x2 - x1;
        let dy = y2 - y1;
        let len = (dx * dx + dy * dy).sqrt().max(1e-9);
        let (sx, sy) = (x1 + dx / len * r, y1 + dy / len * r);
        let (ex, ey) = (x2 - dx / len * (r + 4.0), y2 - dy / len * (r + 4.0));
        let class = classes.get(&(p_name.clone(), c_name.clone())).copied();
        let color = edge_color(class);
        let dash = if g.is_hidden(p) || g.is_hidden(c) {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "<line x1=\"{sx:.1}\" y1=\"{sy:.1}\" x2=\"{ex:.1}\" y2=\"{ey:.1}\" stroke=\"{color}\" stroke-width=\"2\"{dash} marker-end=\"url(#arrow-{})\"/>",
            &color[1..]
        );
    }

    let total = g.n_observed() + g.n_hidden();
    for id in 0..total {
        let (x, y) = center(id);
        let name = g.name(id);
        let hidden = g.is_hidden(id);
        let fill = if hidden { "#f2f2f2" } else { "#e8f0fe" };
        let dash = if hidden {
            " stroke-dasharray=\"5 3\""
        } else {
            ""
        };
        let highlighted = highlight
            .map(|(t, y_)| name == t || name == y_)
            .unwrap_or(false);
        let stroke = if highlighted { "#ff7f0e" } else { "#333333" };
        let sw = if highlighted { 3.5 } else { 1.5 };
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"{r}\" fill=\"{fill}\" stroke=\"{stroke}\" stroke-width=\"{sw}\"{dash}/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
            y + 4.5,
            esc(name)
        );
    }

    let lx = width - 160.0;
    let entries = [
        ("unconfounded", "#4a4a4a"),
        ("identifiable", "#1f77b4"),
        ("unidentifiable", "#d62728"),
        ("hidden edge", "#b0b0b0"),
    ];
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = 26.0 + i as f64 * 18.0;
        let _ = writeln!(
            out,
            "<line x1=\"{lx:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{color}\" stroke-width=\"2.5\"/>",
            lx + 26.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{label}</text>",
            lx + 32.0,
            y + 4.0
        );
    }
    out.push_str("</svg>\n");
    write_file(path, &out)
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if (hi - lo).abs() < 1e-12 {
        return vec![lo];
    }
    (0..=count)
        .map(|i| lo + (hi - lo) * i as f64 / count as f64)
        .collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_owned()
    } else if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// Line chart with markers, one polyline per series.
pub fn render_line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    path: &Path,
) -> Result<(), CliError> {
    let (w, h) = (620.0, 400.0);
    let (ml, mr, mt, mb) = (70.0, 150.0, 50.0, 55.0);
    let pw = w - ml - mr;
    let ph = h - mt - mb;

    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let ys: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .collect();
    let (x_lo, x_hi) = bounds(&xs, 0.0);
    let (y_lo, y_hi) = bounds(&ys, 0.05);
    let to_x = |v: f64| ml + (v - x_lo) / (x_hi - x_lo).max(1e-12) * pw;
    let to_y = |v: f64| mt + ph - (v - y_lo) / (y_hi - y_lo).max(1e-12) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">{}</text>",
        ml + pw / 2.0,
        esc(title)
    );

    for tick in nice_ticks(y_lo, y_hi, 5) {
        let y = to_y(tick);
        let _ = writeln!(
            out,
            "<line x1=\"{ml}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#e0e0e0\"/>",
            ml + pw
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{}</text>",
            ml - 8.0,
            y + 4.0,
            fmt_tick(tick)
        );
    }
    for tick in nice_ticks(x_lo, x_hi, 5.min(xs.len().max(1))) {
        let x = to_x(tick);
        let _ = writeln!(
            out,
            "<line x1=\"{x:.1}\" y1=\"{mt}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#efefef\"/>",
            mt + ph
        );
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            mt + ph + 18.0,
            fmt_tick(tick)
        );
    }
    let _ = writeln!(
        out,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw:.1}\" height=\"{ph:.1}\" fill=\"none\" stroke=\"#555\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        ml + pw / 2.0,
        h - 12.0,
        esc(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 {:.1})\">{}</text>",
        mt + ph / 2.0,
        mt + ph / 2.0,
        esc(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for &(x, y) in &s.points {
            let _ = write!(points, "{:.1},{:.1} ", to_x(x), to_y(y));
        }
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            points.trim_end()
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3.5\" fill=\"{color}\"/>",
                to_x(x),
                to_y(y)
            );
        }
        let ly = mt + 10.0 + i as f64 * 20.0;
        let lx = w - mr + 14.0;
        let _ = writeln!(
            out,
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2.5\"/>",
            lx + 24.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>",
            lx + 30.0,
            ly + 4.0,
            esc(&s.name)
        );
    }
    out.push_str("</svg>\n");
    write_file(path, &out)
}

fn bounds(values: &[f64], pad_fraction: f64) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let span = (hi - lo).max(1e-9);
    let lo = if lo > 0.0 && lo - span * pad_fraction < 0.0 {
        0.0
    } else {
        lo - span * pad_fraction
    };
    (lo, hi + span * pad_fraction)
}

/// Histogram of a sample, `bins` equal-width bars.
pub fn render_histogram(
    title: &str,
    x_label: &str,
    values: &[f64],
    bins: usize,
    path: &Path,
) -> Result<(), CliError> {
    let (w, h) = (560.0, 380.0);
    let (ml, mr, mt, mb) = (70.0, 30.0, 50.0, 55.0);
    let pw = w - ml - mr;
    let ph = h - mt - mb;

    let bins = bins.max(1);
    let (lo, hi) = bounds(values, 0.0);
    let width = (hi - lo).max(1e-12) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let max_count = counts.iter().copied().max().unwrap_or(1).max(1);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">{}</text>",
        ml + pw / 2.0,
        esc(title)
    );
    for (k, &count) in counts.iter().enumerate() {
        let bar_h = ph * count as f64 / max_count as f64;
        let x = ml + pw * k as f64 / bins as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{bar_h:.1}\" fill=\"#1f77b4\" stroke=\"white\"/>",
            mt + ph - bar_h,
            pw / bins as f64
        );
    }
    let _ = writeln!(
        out,
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw:.1}\" height=\"{ph:.1}\" fill=\"none\" stroke=\"#555\"/>"
    );
    for tick in nice_ticks(lo, hi, 5) {
        let x = ml + (tick - lo) / (hi - lo).max(1e-12) * pw;
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            mt + ph + 18.0,
            fmt_tick(tick)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        ml + pw / 2.0,
        h - 12.0,
        esc(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 {:.1})\">count</text>",
        mt + ph / 2.0,
        mt + ph / 2.0
    );
    out.push_str("</svg>\n");
    write_file(path, &out)
}
