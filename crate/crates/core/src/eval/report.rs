use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::phase::Phase;
use crate::error::{Error, Result};

/// Which scheduler a series belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheduler {
    Ddqn,
    Static,
    Sacd,
}

impl Scheduler {
    pub const ALL: [Scheduler; 3] = [Scheduler::Ddqn, Scheduler::Static, Scheduler::Sacd];

    pub fn name(self) -> &'static str {
        match self {
            Scheduler::Ddqn => "ddqn",
            Scheduler::Static => "static",
            Scheduler::Sacd => "sacd",
        }
    }
}

/// One scheduler's per-slot trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerSeries {
    pub scheduler: Scheduler,
    pub slots: Vec<usize>,
    pub demand_ul: Vec<u64>,
    pub demand_dl: Vec<u64>,
    /// Allocated share of capacity in percent.
    pub alloc_ul_pct: Vec<f64>,
    pub alloc_dl_pct: Vec<f64>,
    /// Backlog after service; always zero for the queue-less scheduler.
    pub queue_ul: Vec<u64>,
    pub queue_dl: Vec<u64>,
    pub served_ul: Vec<u64>,
    pub served_dl: Vec<u64>,
    /// Action (or frame) index per slot.
    pub action: Vec<usize>,
}

impl SchedulerSeries {
    pub fn new(scheduler: Scheduler, capacity: usize) -> Self {
        SchedulerSeries {
            scheduler,
            slots: Vec::with_capacity(capacity),
            demand_ul: Vec::with_capacity(capacity),
            demand_dl: Vec::with_capacity(capacity),
            alloc_ul_pct: Vec::with_capacity(capacity),
            alloc_dl_pct: Vec::with_capacity(capacity),
            queue_ul: Vec::with_capacity(capacity),
            queue_dl: Vec::with_capacity(capacity),
            served_ul: Vec::with_capacity(capacity),
            served_dl: Vec::with_capacity(capacity),
            action: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// FNV-1a over `(slot, ul, dl)`; equal across schedulers fed the same demand.
    pub fn demand_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for i in 0..self.len() {
            for v in [self.slots[i] as u64, self.demand_ul[i], self.demand_dl[i]] {
                for b in v.to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn switches(&self) -> usize {
        self.action.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// `slot,demand,alloc_pct,queue,served` for one direction.
    pub fn write_direction<W: Write>(&self, w: &mut W, ul: bool) -> std::io::Result<()> {
        writeln!(w, "slot,demand,alloc_pct,queue,served")?;
        for i in 0..self.len() {
            let (d, a, q, s) = if ul {
                (self.demand_ul[i], self.alloc_ul_pct[i], self.queue_ul[i], self.served_ul[i])
            } else {
                (self.demand_dl[i], self.alloc_dl_pct[i], self.queue_dl[i], self.served_dl[i])
            };
            writeln!(w, "{},{d},{},{q},{s}", self.slots[i], fmt_pct(a))?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_pct(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.1}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QueueStats {
    pub mean: f64,
    pub max: u64,
    pub slots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerMetrics {
    pub scheduler: Scheduler,
    /// `(phase, [ul, dl])`, phases in `Phase::ALL` order.
    pub queues: Vec<(Phase, [QueueStats; 2])>,
    /// Served over arrived UL bits in peak slots, percent, capped at 100.
    pub peak_ul_utilization_pct: f64,
    pub peak_dl_served_mean: f64,
    pub peak_dl_served_median: f64,
    pub switch_rate: f64,
    /// Action index → count over the whole span.
    pub action_counts: Vec<usize>,
    /// Per phase: modal action and its share of the phase's slots.
    pub modal_actions: Vec<(Phase, usize, f64)>,
    /// Per phase: action changes per slot within the phase.
    pub phase_switch_rates: Vec<(Phase, f64)>,
}

impl SchedulerMetrics {
    pub fn queue(&self, phase: Phase, ul: bool) -> QueueStats {
        self.queues
            .iter()
            .find(|(p, _)| *p == phase)
            .map(|(_, q)| q[if ul { 0 } else { 1 }])
            .unwrap_or_default()
    }

    pub fn modal(&self, phase: Phase) -> Option<(usize, f64)> {
        self.modal_actions.iter().find(|(p, ..)| *p == phase).map(|&(_, a, f)| (a, f))
    }

    pub fn phase_switch_rate(&self, phase: Phase) -> f64 {
        self.phase_switch_rates
            .iter()
            .find(|(p, _)| *p == phase)
            .map_or(0.0, |&(_, r)| r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub capacity: u64,
    pub span: (usize, usize),
    pub phase_slots: Vec<(Phase, usize)>,
    pub schedulers: Vec<SchedulerMetrics>,
    /// `1 - mean DDQN peak UL queue / mean static peak UL queue`, percent.
    pub queue_buildup_reduction_pct: f64,
    /// DDQN vs SAC-D median peak DL served.
    pub dl_gain_bits: f64,
    pub dl_gain_pct: f64,
    /// Stitched forecast over the span.
    pub forecast_mae_ul_bits: f64,
    pub forecast_mae_dl_bits: f64,
    pub demand_hash: u64,
}

impl EvalReport {
    pub fn scheduler(&self, s: Scheduler) -> &SchedulerMetrics {
        self.schedulers
            .iter()
            .find(|m| m.scheduler == s)
            .expect("every scheduler is reported")
    }

    pub fn forecast_mae_pct(&self) -> (f64, f64) {
        let c = self.capacity as f64;
        (100.0 * self.forecast_mae_ul_bits / c, 100.0 * self.forecast_mae_dl_bits / c)
    }

    /// Long-form CSV: `scheduler,metric,phase,direction,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scheduler,metric,phase,direction,value\n");
        let mut row = |sched: &str, metric: &str, phase: &str, dir: &str, value: String| {
            writeln!(s, "{sched},{metric},{phase},{dir},{value}").expect("string write");
        };
        for (p, n) in &self.phase_slots {
            row("all", "slots", p.name(), "", n.to_string());
        }
        for m in &self.schedulers {
            let name = m.scheduler.name();
            for (p, q) in &m.queues {
                for (d, qs) in ["ul", "dl"].iter().zip(q) {
                    row(name, "queue_mean_bits", p.name(), d, format!("{:.3}", qs.mean));
                    row(name, "queue_max_bits", p.name(), d, qs.max.to_string());
                }
            }
            row(name, "utilization_pct", "PEAK", "ul", format!("{:.4}", m.peak_ul_utilization_pct));
            row(name, "served_mean_bits", "PEAK", "dl", format!("{:.3}", m.peak_dl_served_mean));
            row(name, "served_median_bits", "PEAK", "dl", format!("{:.3}", m.peak_dl_served_median));
            row(name, "switch_rate", "", "", format!("{:.6}", m.switch_rate));
            for (p, r) in &m.phase_switch_rates {
                row(name, "switch_rate", p.name(), "", format!("{r:.6}"));
            }
            for (p, a, f) in &m.modal_actions {
                row(name, "modal_action", p.name(), "", a.to_string());
                row(name, "modal_share", p.name(), "", format!("{f:.6}"));
            }
            for (a, c) in m.action_counts.iter().enumerate() {
                row(name, &format!("action_{a}_count"), "", "", c.to_string());
            }
        }
        row("ddqn", "queue_buildup_reduction_pct", "PEAK", "ul", format!("{:.4}", self.queue_buildup_reduction_pct));
        row("ddqn", "dl_gain_vs_sacd_bits", "PEAK", "dl", format!("{:.3}", self.dl_gain_bits));
        row("ddqn", "dl_gain_vs_sacd_pct", "PEAK", "dl", format!("{:.4}", self.dl_gain_pct));
        let (pu, pd) = self.forecast_mae_pct();
        row("forecaster", "mae_bits", "", "ul", format!("{:.3}", self.forecast_mae_ul_bits));
        row("forecaster", "mae_bits", "", "dl", format!("{:.3}", self.forecast_mae_dl_bits));
        row("forecaster", "mae_pct_capacity", "", "ul", format!("{pu:.4}"));
        row("forecaster", "mae_pct_capacity", "", "dl", format!("{pd:.4}"));
        row("all", "demand_hash", "", "", format!("{:016x}", self.demand_hash));
        s
    }

    pub fn to_text(&self, action_labels: &dyn Fn(Scheduler, usize) -> String) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "slots {}..{}  capacity {} bits/slot", self.span.0, self.span.1, self.capacity);
        let phases: Vec<String> = self.phase_slots.iter().map(|(p, n)| format!("{} {n}", p.name())).collect();
        let _ = writeln!(w, "phases: {}", phases.join(", "));
        let (pu, pd) = self.forecast_mae_pct();
        let _ = writeln!(
            w,
            "forecaster MAE: UL {:.0} bits/slot ({pu:.2}%), DL {:.0} bits/slot ({pd:.2}%)\n",
            self.forecast_mae_ul_bits, self.forecast_mae_dl_bits
        );
        let _ = writeln!(
            w,
            "{:<8} {:>14} {:>14} {:>14} {:>10} {:>12} {:>8}",
            "", "peak UL queue", "peak DL queue", "idle DL queue", "UL util%", "peak DL srv", "switch"
        );
        for m in &self.schedulers {
            let _ = writeln!(
                w,
                "{:<8} {:>14.0} {:>14.0} {:>14.0} {:>10.1} {:>12.0} {:>8.4}",
                m.scheduler.name(),
                m.queue(Phase::Peak, true).mean,
                m.queue(Phase::Peak, false).mean,
                m.queue(Phase::Idle, false).mean,
                m.peak_ul_utilization_pct,
                m.peak_dl_served_median,
                m.switch_rate
            );
        }
        let _ = writeln!(w);
        for m in &self.schedulers {
            let modal: Vec<String> = m
                .modal_actions
                .iter()
                .map(|(p, a, f)| format!("{} {} ({:.1}%)", p.name(), action_labels(m.scheduler, *a), 100.0 * f))
                .collect();
            let _ = writeln!(w, "{:<8} modal: {}", m.scheduler.name(), modal.join(", "));
        }
        let _ = writeln!(w);
        let _ = writeln!(w, "UL queue buildup reduction vs static: {:.2}%", self.queue_buildup_reduction_pct);
        let _ = writeln!(
            w,
            "peak DL throughput gain vs SAC-D: {:.0} bits/slot ({:.2}%)",
            self.dl_gain_bits, self.dl_gain_pct
        );
        s
    }

    pub fn save(&self, csv_path: &Path, text_path: &Path, labels: &dyn Fn(Scheduler, usize) -> String) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        std::fs::write(text_path, self.to_text(labels)).map_err(|e| Error::io(text_path, e))
    }
}
