//! The three plot kinds. Everything renders through [`crate::svg`]; the
//! input is either a results CSV or a saved episode file.

use crate::episode_io::load_episode;
use crate::runner::RESULTS_HEADER;
use crate::svg::{color, Svg};
use graphfsl::metrics::{pca_2d, summarize};
use graphfsl::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    LossVsShots,
    LossVsHardness,
    PcaTask,
}

impl std::str::FromStr for PlotKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "loss-vs-shots" => Ok(Self::LossVsShots),
            "loss-vs-hardness" => Ok(Self::LossVsHardness),
            "pca-task" => Ok(Self::PcaTask),
            _ => Err(format!(
                "unknown plot kind {s:?} (loss-vs-shots|loss-vs-hardness|pca-task)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvRow {
    pub seed: u64,
    pub shots: usize,
    pub h: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub learner: String,
    pub accuracy: f64,
    pub loss: f64,
    pub hardness: f64,
}

pub fn parse_results_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != RESULTS_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {RESULTS_HEADER:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!("expected 9 fields, got {}", fields.len()),
            });
        }
        let err = |what: &str| Error::Parse {
            line: i + 2,
            msg: format!("bad {what}"),
        };
        rows.push(CsvRow {
            seed: fields[0].parse().map_err(|_| err("seed"))?,
            shots: fields[1].parse().map_err(|_| err("shots"))?,
            h: fields[2].parse().map_err(|_| err("h"))?,
            sigma: fields[3].parse().map_err(|_| err("sigma"))?,
            lambda: fields[4].parse().map_err(|_| err("lambda"))?,
            learner: fields[5].to_string(),
            accuracy: fields[6].parse().map_err(|_| err("accuracy"))?,
            loss: fields[7].parse().map_err(|_| err("loss"))?,
            hardness: fields[8].parse().map_err(|_| err("hardness"))?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Insufficient("results file has no data rows".into()));
    }
    Ok(rows)
}

fn arms_in_order(rows: &[CsvRow]) -> Vec<String> {
    let mut arms: Vec<String> = Vec::new();
    for r in rows {
        if !arms.contains(&r.learner) {
            arms.push(r.learner.clone());
        }
    }
    arms
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;

/// Data-to-pixel mapping for the plot area.
struct Frame {
    left: f64,
    top: f64,
    w: f64,
    h: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        let pad = |lo: f64, hi: f64| {
            let span = hi - lo;
            if span > 0.0 {
                (lo - 0.08 * span, hi + 0.08 * span)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (xmin, xmax) = pad(xmin, xmax);
        let (ymin, ymax) = pad(ymin, ymax);
        Self {
            left: 62.0,
            top: 18.0,
            w: WIDTH - 62.0 - 140.0,
            h: HEIGHT - 18.0 - 46.0,
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.xmin) / (self.xmax - self.xmin) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.top + self.h - (y - self.ymin) / (self.ymax - self.ymin) * self.h
    }
}

fn draw_axes(svg: &mut Svg, fr: &Frame, xlabel: &str, ylabel: &str) {
    let x0 = fr.left;
    let y0 = fr.top + fr.h;
    svg.line(x0, fr.top, x0, y0, "#333333", 1.0);
    svg.line(x0, y0, x0 + fr.w, y0, "#333333", 1.0);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = fr.xmin + t * (fr.xmax - fr.xmin);
        let yv = fr.ymin + t * (fr.ymax - fr.ymin);
        let xp = fr.px(xv);
        let yp = fr.py(yv);
        svg.line(xp, y0, xp, y0 + 4.0, "#333333", 1.0);
        svg.text(xp - 12.0, y0 + 16.0, 10.0, &format!("{xv:.2}"));
        svg.line(x0 - 4.0, yp, x0, yp, "#333333", 1.0);
        svg.text(x0 - 46.0, yp + 3.0, 10.0, &format!("{yv:.2}"));
    }
    svg.text(x0 + fr.w / 2.0 - 20.0, HEIGHT - 10.0, 11.0, xlabel);
    svg.text(8.0, fr.top + 10.0, 11.0, ylabel);
}

fn draw_legend(svg: &mut Svg, fr: &Frame, names: &[String]) {
    svg.group_start("legend");
    let lx = fr.left + fr.w + 14.0;
    for (i, name) in names.iter().enumerate() {
        let ly = fr.top + 14.0 + 18.0 * i as f64;
        svg.line(lx, ly - 3.0, lx + 16.0, ly - 3.0, color(i), 2.0);
        svg.text(lx + 20.0, ly, 10.0, name);
    }
    svg.group_end();
}

/// Mean query loss per shot count, one line per arm, with shaded 95%
/// confidence bands. Cells sharing a shot count pool together.
pub fn loss_vs_shots(rows: &[CsvRow]) -> Result<String> {
    let arms = arms_in_order(rows);
    let mut shots: Vec<usize> = rows.iter().map(|r| r.shots).collect();
    shots.sort_unstable();
    shots.dedup();

    // per arm, per shot: (mean, ci)
    let mut series: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for arm in &arms {
        let mut pts = Vec::new();
        for &k in &shots {
            let losses: Vec<f64> = rows
                .iter()
                .filter(|r| &r.learner == arm && r.shots == k)
                .map(|r| r.loss)
                .collect();
            if losses.is_empty() {
                continue;
            }
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            let ci = summarize(&losses).map(|s| s.ci).unwrap_or(0.0);
            ymin = ymin.min(mean - ci);
            ymax = ymax.max(mean + ci);
            pts.push((k as f64, mean, ci));
        }
        series.push(pts);
    }
    let fr = Frame::new(
        shots[0] as f64,
        *shots.last().unwrap() as f64,
        ymin,
        ymax,
    );
    let mut svg = Svg::new(WIDTH, HEIGHT);
    draw_axes(&mut svg, &fr, "shots", "loss");
    for (i, pts) in series.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        svg.group_start("band");
        if pts.len() > 1 {
            let mut poly: Vec<(f64, f64)> = pts
                .iter()
                .map(|&(x, m, c)| (fr.px(x), fr.py(m + c)))
                .collect();
            poly.extend(pts.iter().rev().map(|&(x, m, c)| (fr.px(x), fr.py(m - c))));
            svg.polygon(&poly, color(i), 0.18);
        }
        svg.group_end();
        svg.group_start("series");
        let line: Vec<(f64, f64)> = pts.iter().map(|&(x, m, _)| (fr.px(x), fr.py(m))).collect();
        if line.len() > 1 {
            svg.polyline(&line, color(i), 2.0);
        }
        for &(x, y) in &line {
            svg.circle(x, y, 3.0, color(i));
        }
        svg.group_end();
    }
    draw_legend(&mut svg, &fr, &arms);
    Ok(svg.finish())
}

/// Per-episode loss against task hardness, one color per arm.
pub fn loss_vs_hardness(rows: &[CsvRow]) -> Result<String> {
    let arms = arms_in_order(rows);
    let xmin = rows.iter().map(|r| r.hardness).fold(f64::INFINITY, f64::min);
    let xmax = rows.iter().map(|r| r.hardness).fold(f64::NEG_INFINITY, f64::max);
    let ymin = rows.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
    let ymax = rows.iter().map(|r| r.loss).fold(f64::NEG_INFINITY, f64::max);
    let fr = Frame::new(xmin, xmax, ymin, ymax);
    let mut svg = Svg::new(WIDTH, HEIGHT);
    draw_axes(&mut svg, &fr, "hardness", "loss");
    svg.group_start("points");
    for r in rows {
        let ci = arms.iter().position(|a| a == &r.learner).unwrap_or(0);
        svg.circle(fr.px(r.hardness), fr.py(r.loss), 2.5, color(ci));
    }
    svg.group_end();
    draw_legend(&mut svg, &fr, &arms);
    Ok(svg.finish())
}

/// A saved episode in its first two principal directions: support squares,
/// query dots, classifier crosses, and (when weights are present) the
/// nearest-classifier region sampled on a grid.
pub fn pca_task(episode_text: &str) -> Result<String> {
    let (ep, weights) = load_episode(episode_text)?;
    let mut points: Vec<Vec<f64>> = Vec::new();
    for e in ep.support.iter().chain(&ep.query) {
        points.push(e.x.clone());
    }
    if let Some(w) = &weights {
        points.extend(w.iter().cloned());
    }
    let pca = pca_2d(&points)?;
    let coords = &pca.coords;
    let n_support = ep.support.len();
    let n_query = ep.query.len();
    let wstart = n_support + n_query;

    let xmin = coords.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
    let xmax = coords.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max);
    let ymin = coords.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min);
    let ymax = coords.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max);
    let fr = Frame::new(xmin, xmax, ymin, ymax);
    let mut svg = Svg::new(WIDTH, HEIGHT);

    if weights.is_some() {
        // nearest projected classifier, Euclidean in the plane
        let cls: Vec<(f64, f64)> = coords[wstart..].iter().map(|c| (c[0], c[1])).collect();
        svg.group_start("regions");
        let n = 28;
        for gi in 0..n {
            for gj in 0..n {
                let cx = fr.xmin + (gi as f64 + 0.5) / n as f64 * (fr.xmax - fr.xmin);
                let cy = fr.ymin + (gj as f64 + 0.5) / n as f64 * (fr.ymax - fr.ymin);
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (ci, &(wx, wy)) in cls.iter().enumerate() {
                    let d = (cx - wx).powi(2) + (cy - wy).powi(2);
                    if d < best_d {
                        best_d = d;
                        best = ci;
                    }
                }
                let px = fr.px(cx);
                let py = fr.py(cy);
                let cw = fr.w / n as f64;
                let ch = fr.h / n as f64;
                svg.rect(px - cw / 2.0, py - ch / 2.0, cw, ch, color(best), 0.15);
            }
        }
        svg.group_end();
    }

    draw_axes(&mut svg, &fr, "pc1", "pc2");
    svg.group_start("support");
    for (i, e) in ep.support.iter().enumerate() {
        let c = &coords[i];
        svg.square(fr.px(c[0]), fr.py(c[1]), 4.0, color(e.y));
    }
    svg.group_end();
    svg.group_start("query");
    for (i, e) in ep.query.iter().enumerate() {
        let c = &coords[n_support + i];
        svg.circle(fr.px(c[0]), fr.py(c[1]), 2.5, color(e.y));
    }
    svg.group_end();
    if weights.is_some() {
        svg.group_start("classifiers");
        for (ci, c) in coords[wstart..].iter().enumerate() {
            svg.cross(fr.px(c[0]), fr.py(c[1]), 5.0, color(ci));
        }
        svg.group_end();
    }
    draw_legend(&mut svg, &fr, &ep.classes);
    Ok(svg.finish())
}

/// Dispatch for the CLI: CSV input for the loss plots, an episode file for
/// pca-task.
pub fn render(kind: PlotKind, input_text: &str) -> Result<String> {
    match kind {
        PlotKind::LossVsShots => loss_vs_shots(&parse_results_csv(input_text)?),
        PlotKind::LossVsHardness => loss_vs_hardness(&parse_results_csv(input_text)?),
        PlotKind::PcaTask => pca_task(input_text),
    }
}
