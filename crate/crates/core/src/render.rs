//! Deterministic SVG rendering of triplots and aspect bar charts.
//!
//! Output depends only on the result document and the [`RenderSpec`]:
//! coordinates are printed with two decimals and values with three.

use std::fmt::Write as _;

use crate::aspect::AspectExplanation;
use crate::triplot::{TriplotMode, TriplotResult};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    pub width: f64,
    pub height: f64,
    pub margin_top: f64,
    pub margin_right: f64,
    pub margin_bottom: f64,
    pub margin_left: f64,
    pub panel_gap: f64,
    pub font_size: f64,
    /// Space reserved for variable names.
    pub label_width: f64,
    pub bar_color: String,
    pub negative_color: String,
    pub stroke_color: String,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            width: 1200.0,
            height: 500.0,
            margin_top: 40.0,
            margin_right: 20.0,
            margin_bottom: 40.0,
            margin_left: 20.0,
            panel_gap: 10.0,
            font_size: 11.0,
            label_width: 120.0,
            bar_color: "#4878a8".into(),
            negative_color: "#c8553d".into(),
            stroke_color: "#333333".into(),
        }
    }
}

fn c(v: f64) -> String {
    // adding 0.0 turns -0.0 into 0.0
    format!("{:.2}", v + 0.0)
}

fn v3(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(ch),
        }
    }
    out
}

fn open_svg(out: &mut String, spec: &RenderSpec) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="{f}">"#,
        w = c(spec.width),
        h = c(spec.height),
        f = c(spec.font_size)
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        c(spec.width),
        c(spec.height)
    );
}

fn text(out: &mut String, class: &str, x: f64, y: f64, anchor: &str, body: &str) {
    let _ = writeln!(
        out,
        r#"<text class="{class}" x="{}" y="{}" text-anchor="{anchor}" dominant-baseline="middle">{}</text>"#,
        c(x),
        c(y),
        escape(body)
    );
}

/// Maps values in `[lo, hi]` (always containing 0) onto `[x0, x1]`.
struct Scale {
    lo: f64,
    hi: f64,
    x0: f64,
    x1: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, x0: f64, x1: f64) -> Self {
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Self { lo, hi, x0, x1 }
    }

    fn at(&self, v: f64) -> f64 {
        if self.hi == self.lo {
            return self.x0;
        }
        self.x0 + (v - self.lo) / (self.hi - self.lo) * (self.x1 - self.x0)
    }
}

fn bar(out: &mut String, spec: &RenderSpec, scale: &Scale, v: f64, y: f64, h: f64) {
    let (z, e) = (scale.at(0.0), scale.at(v));
    let fill = if v < 0.0 { &spec.negative_color } else { &spec.bar_color };
    let _ = writeln!(
        out,
        r#"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
        c(z.min(e)),
        c(y),
        c((e - z).abs()),
        c(h),
        fill
    );
}

/// Three panels sharing one row per variable (dendrogram order): leaf
/// importance bars, group-importance trajectories over merge steps, and the
/// clustering tree on a correlation axis.
pub fn render_triplot(result: &TriplotResult, spec: &RenderSpec) -> String {
    let p = result.leaves.len();
    let order = result.tree.leaf_order();
    let mut row_of = vec![0usize; p];
    for (r, &j) in order.iter().enumerate() {
        row_of[j] = r;
    }
    let top = spec.margin_top;
    let bottom = spec.height - spec.margin_bottom;
    let row_h = (bottom - top) / p.max(1) as f64;
    let row_y = |j: usize| top + (row_of[j] as f64 + 0.5) * row_h;

    let inner = spec.width - spec.margin_left - spec.margin_right - 2.0 * spec.panel_gap;
    let panel_w = inner / 3.0;
    let left_x = spec.margin_left;
    let mid_x = left_x + panel_w + spec.panel_gap;
    let right_x = mid_x + panel_w + spec.panel_gap;

    let mut out = String::new();
    open_svg(&mut out, spec);
    let (title_left, title_mid) = match result.mode {
        TriplotMode::Global => ("variable importance", "group importance by merge step"),
        TriplotMode::Local => ("variable contribution", "group contribution by merge step"),
    };
    text(&mut out, "panel-title", left_x + panel_w / 2.0, top / 2.0, "middle", title_left);
    text(&mut out, "panel-title", mid_x + panel_w / 2.0, top / 2.0, "middle", title_mid);
    text(&mut out, "panel-title", right_x + panel_w / 2.0, top / 2.0, "middle", "correlation clustering");

    // left panel
    let label_w = spec.label_width.min(panel_w / 2.0);
    let bar_scale = Scale::new(
        result.leaves.iter().map(|l| l.importance),
        left_x + label_w,
        left_x + panel_w - 45.0,
    );
    let _ = writeln!(out, r#"<g class="leaf-panel">"#);
    for (j, leaf) in result.leaves.iter().enumerate() {
        let y = row_y(j);
        text(&mut out, "var-label", left_x + label_w - 4.0, y, "end", &leaf.name);
        bar(&mut out, spec, &bar_scale, leaf.importance, y - 0.3 * row_h, 0.6 * row_h);
        let vx = bar_scale.at(leaf.importance.max(0.0)) + 3.0;
        text(&mut out, "value-label", vx, y, "start", &v3(leaf.importance));
    }
    let _ = writeln!(out, "</g>");

    // middle panel
    let steps = p.saturating_sub(1);
    let step_x = |t: usize| mid_x + 10.0 + (t as f64) * (panel_w - 50.0) / steps.max(1) as f64;
    let all_values: Vec<f64> = result
        .leaf_importance()
        .into_iter()
        .chain(result.node_importance())
        .collect();
    let (vmin, vmax) = all_values
        .iter()
        .fold((0.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let offset = |v: f64| {
        if vmax == vmin {
            0.0
        } else {
            (v - vmin) / (vmax - vmin) * 0.7 * row_h
        }
    };
    // value carried by each variable after t merges
    let mut current = result.leaf_importance();
    let mut trajectories: Vec<Vec<f64>> = current.iter().map(|&v| vec![v]).collect();
    for (merge, node) in result.tree.merges().iter().zip(&result.nodes) {
        for &j in &merge.members {
            current[j] = node.importance;
        }
        for (traj, &v) in trajectories.iter_mut().zip(&current) {
            traj.push(v);
        }
    }
    let _ = writeln!(out, r#"<g class="trajectory-panel">"#);
    for (j, traj) in trajectories.iter().enumerate() {
        let base = row_y(j) + 0.35 * row_h;
        let mut d = format!("M{},{}", c(step_x(0)), c(base - offset(traj[0])));
        for (t, &v) in traj.iter().enumerate().skip(1) {
            let _ = write!(d, " H{} V{}", c(step_x(t)), c(base - offset(v)));
        }
        let _ = write!(d, " H{}", c(step_x(steps) + 10.0));
        let _ = writeln!(
            out,
            r#"<path class="trajectory" d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            spec.bar_color
        );
    }
    for (t, (merge, node)) in result.tree.merges().iter().zip(&result.nodes).enumerate() {
        let ys: Vec<f64> = merge.members.iter().map(|&j| row_y(j)).collect();
        let y = ys.iter().sum::<f64>() / ys.len() as f64;
        let x = step_x(t + 1);
        let _ = writeln!(
            out,
            r#"<circle class="node" cx="{}" cy="{}" r="3" fill="{}"/>"#,
            c(x),
            c(y),
            spec.stroke_color
        );
        text(&mut out, "node-label", x + 4.0, y - 8.0, "start", &v3(node.importance));
    }
    for t in 0..=steps {
        text(&mut out, "axis-label", step_x(t), bottom + 14.0, "middle", &t.to_string());
    }
    text(&mut out, "axis-title", mid_x + panel_w / 2.0, bottom + 30.0, "middle", "merge step");
    let _ = writeln!(out, "</g>");

    // right panel
    let tree_x0 = right_x + 10.0;
    let tree_x1 = right_x + panel_w - label_w.min(80.0);
    let max_h = result
        .tree
        .merges()
        .iter()
        .fold(0.0f64, |a, m| a.max(m.height));
    let hx = |h: f64| {
        if max_h > 0.0 {
            tree_x0 + h / max_h * (tree_x1 - tree_x0)
        } else {
            tree_x0
        }
    };
    let mut node_pos: Vec<(f64, f64)> = (0..p).map(|j| (hx(0.0), row_y(j))).collect();
    let _ = writeln!(out, r#"<g class="dendrogram-panel">"#);
    for m in result.tree.merges() {
        let (lx, ly) = node_pos[m.left];
        let (rx, ry) = node_pos[m.right];
        let x = hx(m.height);
        let _ = writeln!(
            out,
            r#"<path class="junction" d="M{},{} H{} V{} H{}" fill="none" stroke="{}"/>"#,
            c(lx),
            c(ly),
            c(x),
            c(ry),
            c(rx),
            spec.stroke_color
        );
        node_pos.push((x, (ly + ry) / 2.0));
    }
    for (j, leaf) in result.leaves.iter().enumerate() {
        text(&mut out, "var-label", tree_x1 + 6.0, row_y(j), "start", &leaf.name);
    }
    let _ = writeln!(
        out,
        r#"<line class="axis" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}"/>"#,
        c(tree_x0),
        c(bottom),
        c(tree_x1),
        c(bottom),
        spec.stroke_color
    );
    for k in 0..=4 {
        let h = max_h * k as f64 / 4.0;
        text(&mut out, "axis-label", hx(h), bottom + 14.0, "middle", &format!("{:.2}", 1.0 - h + 0.0));
        if max_h == 0.0 {
            break;
        }
    }
    text(&mut out, "axis-title", (tree_x0 + tree_x1) / 2.0, bottom + 30.0, "middle", "correlation");
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

/// Diverging horizontal bars around a zero line, in the explanation's order.
pub fn render_aspects(expl: &AspectExplanation, spec: &RenderSpec) -> String {
    let m = expl.aspects.len();
    let top = spec.margin_top;
    let bottom = spec.height - spec.margin_bottom;
    let row_h = (bottom - top) / m.max(1) as f64;
    let x0 = spec.margin_left + spec.label_width;
    let x1 = spec.width - spec.margin_right - 60.0;
    let zero = (x0 + x1) / 2.0;
    let half = (x1 - x0) / 2.0;
    let max_abs = expl
        .aspects
        .iter()
        .fold(0.0f64, |a, x| a.max(x.contribution.abs()));

    let mut out = String::new();
    open_svg(&mut out, spec);
    text(&mut out, "panel-title", (x0 + x1) / 2.0, top / 2.0, "middle", "aspect contribution");
    for (i, a) in expl.aspects.iter().enumerate() {
        let y = top + (i as f64 + 0.5) * row_h;
        let w = if max_abs > 0.0 { a.contribution.abs() / max_abs * half } else { 0.0 };
        let (x, fill) = if a.contribution < 0.0 {
            (zero - w, &spec.negative_color)
        } else {
            (zero, &spec.bar_color)
        };
        text(&mut out, "var-label", x0 - 4.0, y, "end", &a.aspect);
        let _ = writeln!(
            out,
            r#"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            c(x),
            c(y - 0.3 * row_h),
            c(w),
            c(0.6 * row_h),
            fill
        );
        let (lx, anchor) = if a.contribution < 0.0 { (x - 3.0, "end") } else { (x + w + 3.0, "start") };
        text(&mut out, "value-label", lx, y, anchor, &v3(a.contribution));
    }
    let _ = writeln!(
        out,
        r#"<line class="zero-line" x1="{z}" y1="{}" x2="{z}" y2="{}" stroke="{}"/>"#,
        c(top),
        c(bottom),
        spec.stroke_color,
        z = c(zero)
    );
    out.push_str("</svg>\n");
    out
}
