//! Decision timelines per epoch: who was decided when, and whether correctly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::EpochLog;
use crate::error::{ErdError, Result};
use crate::metrics::Outcome;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub user_id: String,
    /// Posts read when the final verdict was issued.
    pub pred_time: usize,
    /// Checkpoint at which the user retired.
    pub checkpoint: usize,
    pub total_posts: usize,
    pub outcome: Outcome,
}

impl TimelineEntry {
    pub fn unread_posts(&self) -> usize {
        self.total_posts.saturating_sub(self.pred_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Train,
    Validation,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Validation => "validation",
        }
    }

    fn entries<F: Scalar>(self, log: &EpochLog<F>) -> &[TimelineEntry] {
        match self {
            Stage::Train => &log.train.timeline,
            Stage::Validation => &log.validation.stage.timeline,
        }
    }
}

pub const TIMELINE_CSV_HEADER: &str = "epoch,user_id,pred_time,result,outcome,total_posts,unread_posts";

pub fn timeline_csv<F: Scalar>(logs: &[EpochLog<F>], stage: Stage) -> String {
    let mut out = String::from(TIMELINE_CSV_HEADER);
    out.push('\n');
    for log in logs {
        for e in stage.entries(log) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                log.epoch,
                e.user_id,
                e.pred_time,
                if e.outcome.is_correct() { "correct" } else { "wrong" },
                e.outcome.code(),
                e.total_posts,
                e.unread_posts()
            );
        }
    }
    out
}

const BAR_W: usize = 6;
const PANEL_H: usize = 220;
const LEFT: usize = 50;
const TOP: usize = 30;
const GAP: usize = 40;

/// One panel per epoch. Bars grow upward by posts read (green correct, red
/// wrong), with unread posts stacked in gray; a dashed line marks θ.
pub fn timeline_svg<F: Scalar>(logs: &[EpochLog<F>], stage: Stage, theta: usize, window_size: usize) -> String {
    let n_users = logs.iter().map(|l| stage.entries(l).len()).max().unwrap_or(0);
    let max_posts = logs
        .iter()
        .flat_map(|l| stage.entries(l))
        .map(|e| e.total_posts.max(e.pred_time))
        .chain([theta])
        .max()
        .unwrap_or(1);
    let step = window_size.max(1);
    let y_max = max_posts.div_ceil(step) * step;
    let width = LEFT + n_users * BAR_W + 20;
    let height = logs.len() * (PANEL_H + GAP) + TOP;
    let scale = PANEL_H as f64 / y_max as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (pi, log) in logs.iter().enumerate() {
        let y0 = TOP + pi * (PANEL_H + GAP);
        let base = y0 + PANEL_H;
        let y_of = |posts: usize| base as f64 - posts as f64 * scale;
        let _ = writeln!(svg, r#"<g class="epoch" data-epoch="{}">"#, log.epoch);
        let _ = writeln!(
            svg,
            r#"<text x="{LEFT}" y="{}">{} epoch {}</text>"#,
            y0 - 8,
            stage.name(),
            log.epoch
        );
        let mut tick = 0;
        while tick <= y_max {
            let y = y_of(tick);
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{tick}</text>"##,
                width - 20,
                LEFT - 4,
                y + 3.0
            );
            tick += step;
        }
        for (i, e) in stage.entries(log).iter().enumerate() {
            let x = LEFT + i * BAR_W;
            let color = if e.outcome.is_correct() { "#2ca02c" } else { "#d62728" };
            let _ = writeln!(
                svg,
                r##"<rect x="{x}" y="{:.1}" width="{}" height="{:.1}" fill="{color}"><title>{} {} k={}</title></rect>"##,
                y_of(e.pred_time),
                BAR_W - 1,
                e.pred_time as f64 * scale,
                e.user_id,
                e.outcome.code(),
                e.pred_time
            );
            if e.unread_posts() > 0 {
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x}" y="{:.1}" width="{}" height="{:.1}" fill="#bbb"/>"##,
                    y_of(e.total_posts),
                    BAR_W - 1,
                    e.unread_posts() as f64 * scale
                );
            }
        }
        let yt = y_of(theta);
        let _ = writeln!(
            svg,
            r##"<line class="theta" data-theta="{theta}" x1="{LEFT}" x2="{}" y1="{yt:.1}" y2="{yt:.1}" stroke="black" stroke-dasharray="6,4"/>"##,
            width - 20
        );
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `timeline_<stage>.csv` and `timeline_<stage>.svg` into `dir`.
pub fn export_timeline<F: Scalar>(
    logs: &[EpochLog<F>],
    stage: Stage,
    dir: impl AsRef<Path>,
    theta: usize,
    window_size: usize,
) -> Result<(PathBuf, PathBuf)> {
    if logs.is_empty() {
        return Err(ErdError::Contract("no epoch logs to export".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ErdError::io(dir, e))?;
    let csv = dir.join(format!("timeline_{}.csv", stage.name()));
    let svg = dir.join(format!("timeline_{}.svg", stage.name()));
    fs::write(&csv, timeline_csv(logs, stage)).map_err(|e| ErdError::io(&csv, e))?;
    fs::write(&svg, timeline_svg(logs, stage, theta, window_size)).map_err(|e| ErdError::io(&svg, e))?;
    Ok((csv, svg))
}
