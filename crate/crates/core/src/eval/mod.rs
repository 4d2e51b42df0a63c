//! Runs the three schedulers over one trace and condenses the result.

mod phase;
mod report;

use std::ops::Range;
use std::path::Path;

pub use phase::{Phase, PhaseAnnotation};
pub use report::{EvalReport, QueueStats, Scheduler, SchedulerMetrics, SchedulerSeries};

use crate::baselines::{sacd_evaluate, static_run, SacdPolicy, StaticPolicy};
use crate::ddqn::{greedy_rollout, QNetwork};
use crate::env::{EnvConfig, SbfdEnv, SlotRecord};
use crate::error::{Error, Result};
use crate::forecaster::{stitched_forecast, ForecastModel, ForecastTable, StitchedForecast};
use crate::scalar::Scalar;
use crate::traffic::TrafficTrace;

pub struct CompareInputs<'a, T: Scalar> {
    pub trace: &'a TrafficTrace,
    pub phases: &'a PhaseAnnotation,
    pub forecaster: &'a ForecastModel<T>,
    pub ddqn: &'a QNetwork<T>,
    pub sacd: &'a SacdPolicy<T>,
    pub static_policy: StaticPolicy,
    pub env: EnvConfig,
    /// Cumulative-throughput reset period for SAC-D.
    pub sacd_episode_len: usize,
    /// Defaults to the longest horizon-aligned span after the first lookback.
    pub span: Option<Range<usize>>,
}

#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub report: EvalReport,
    pub series: Vec<SchedulerSeries>,
    pub forecast: StitchedForecast,
    pub phases: PhaseAnnotation,
}

impl CompareOutput {
    pub fn series(&self, s: Scheduler) -> &SchedulerSeries {
        self.series.iter().find(|x| x.scheduler == s).expect("every scheduler has a series")
    }
}

pub fn default_span(trace_len: usize, lookback: usize, horizon: usize) -> Result<Range<usize>> {
    let avail = trace_len.saturating_sub(lookback);
    let n = avail - avail % horizon.max(1);
    if n == 0 {
        return Err(Error::InsufficientTrace(format!(
            "{trace_len} slots leave nothing to evaluate after a {lookback}-slot lookback"
        )));
    }
    Ok(lookback..lookback + n)
}

fn queued_series(scheduler: Scheduler, records: &[SlotRecord]) -> SchedulerSeries {
    let mut s = SchedulerSeries::new(scheduler, records.len());
    for r in records {
        s.slots.push(r.slot);
        s.demand_ul.push(r.arr_ul);
        s.demand_dl.push(r.arr_dl);
        s.alloc_ul_pct.push(100.0 * r.alloc.frac_ul);
        s.alloc_dl_pct.push(100.0 * r.alloc.frac_dl);
        s.queue_ul.push(r.q_ul);
        s.queue_dl.push(r.q_dl);
        s.served_ul.push(r.served_ul);
        s.served_dl.push(r.served_dl);
        s.action.push(r.action);
    }
    s
}

pub fn run_compare<T: Scalar>(inputs: &CompareInputs<'_, T>) -> Result<CompareOutput> {
    let cfg = inputs.forecaster.config();
    let span = match &inputs.span {
        Some(s) => s.clone(),
        None => default_span(inputs.trace.len(), cfg.lookback, cfg.horizon)?,
    };
    if span.start < cfg.lookback || span.end > inputs.trace.len() || span.is_empty() {
        return Err(Error::InsufficientTrace(format!(
            "span {span:?} needs {} slots of history and must lie within {} slots",
            cfg.lookback,
            inputs.trace.len()
        )));
    }
    let phases = inputs.phases.restrict(span.clone())?;
    let n = span.len();
    inputs.env.validate()?;

    let table = ForecastTable::build_range(inputs.forecaster, inputs.trace, span.start..span.end + 1)?;
    let mut env = SbfdEnv::new(inputs.env, inputs.trace, &table)?;
    let ddqn = greedy_rollout(&mut env, inputs.ddqn, span.start, n)?;
    let fixed = static_run(inputs.trace, inputs.static_policy, &inputs.env, span.start, n)?;
    let sacd = sacd_evaluate(inputs.sacd, inputs.trace, span.start, n, inputs.sacd_episode_len, inputs.env.capacity)?;

    let mut sacd_series = SchedulerSeries::new(Scheduler::Sacd, n);
    for s in &sacd {
        let f = inputs.sacd.frames.get(s.frame)?;
        sacd_series.slots.push(s.slot);
        sacd_series.demand_ul.push(s.demand_ul);
        sacd_series.demand_dl.push(s.demand_dl);
        sacd_series.alloc_ul_pct.push(100.0 * f.ul);
        sacd_series.alloc_dl_pct.push(100.0 * f.dl);
        sacd_series.queue_ul.push(0);
        sacd_series.queue_dl.push(0);
        sacd_series.served_ul.push(s.served_ul);
        sacd_series.served_dl.push(s.served_dl);
        sacd_series.action.push(s.frame);
    }
    let series = vec![
        queued_series(Scheduler::Ddqn, &ddqn),
        queued_series(Scheduler::Static, &fixed),
        sacd_series,
    ];

    // Whole horizons only; the tail (< horizon slots) is left out of the MAE.
    let stitched_len = n - n % cfg.horizon;
    let norm = *inputs.forecaster.require_normalizer()?;
    let forecast = stitched_forecast(inputs.forecaster, inputs.trace, &norm, span.start, stitched_len)?;
    let n_actions = env.actions().len().max(inputs.sacd.frames.len());
    let report = build_report(&series, &phases, &forecast, inputs.trace, inputs.env.capacity, n_actions)?;
    Ok(CompareOutput {
        report,
        series,
        forecast,
        phases,
    })
}

/// Everything in the report is recomputed from the per-slot series.
pub fn build_report(
    series: &[SchedulerSeries],
    phases: &PhaseAnnotation,
    forecast: &StitchedForecast,
    trace: &TrafficTrace,
    capacity: u64,
    n_actions: usize,
) -> Result<EvalReport> {
    let hash = series.first().map_or(0, |s| s.demand_hash());
    if let Some(bad) = series.iter().find(|s| s.demand_hash() != hash) {
        return Err(Error::Config(format!(
            "scheduler `{}` saw a different demand stream",
            bad.scheduler.name()
        )));
    }
    let schedulers: Vec<SchedulerMetrics> = series.iter().map(|s| scheduler_metrics(s, phases, n_actions)).collect();
    let find = |s: Scheduler| schedulers.iter().find(|m| m.scheduler == s);
    let peak_ul = |s: Scheduler| find(s).map_or(0.0, |m| m.queue(Phase::Peak, true).mean);
    let static_q = peak_ul(Scheduler::Static);
    let queue_buildup_reduction_pct = if static_q > 0.0 {
        100.0 * (1.0 - peak_ul(Scheduler::Ddqn) / static_q)
    } else {
        0.0
    };
    let dl = |s: Scheduler| find(s).map_or(0.0, |m| m.peak_dl_served_median);
    let dl_gain_bits = dl(Scheduler::Ddqn) - dl(Scheduler::Sacd);
    let dl_gain_pct = if dl(Scheduler::Sacd) > 0.0 {
        100.0 * dl_gain_bits / dl(Scheduler::Sacd)
    } else {
        0.0
    };
    let (mae_ul, mae_dl) = if forecast.is_empty() { (0.0, 0.0) } else { forecast.mae_against(trace) };
    let mut phase_slots: Vec<(Phase, usize)> = Phase::ALL.iter().map(|&p| (p, 0)).collect();
    for t in phases.span() {
        if let Some(p) = phases.label(t) {
            phase_slots.iter_mut().find(|(q, _)| *q == p).expect("all phases listed").1 += 1;
        }
    }
    let span = phases.span();
    Ok(EvalReport {
        capacity,
        span: (span.start, span.end),
        phase_slots,
        schedulers,
        queue_buildup_reduction_pct,
        dl_gain_bits,
        dl_gain_pct,
        forecast_mae_ul_bits: mae_ul,
        forecast_mae_dl_bits: mae_dl,
        demand_hash: hash,
    })
}

fn median(v: &mut [u64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        (v[m - 1] as f64 + v[m] as f64) / 2.0
    }
}

pub fn scheduler_metrics(s: &SchedulerSeries, phases: &PhaseAnnotation, n_actions: usize) -> SchedulerMetrics {
    let mut queues = Vec::new();
    let mut modal_actions = Vec::new();
    let mut phase_switch_rates = Vec::new();
    let in_phase = |p: Phase| -> Vec<usize> { (0..s.len()).filter(|&i| phases.label(s.slots[i]) == Some(p)).collect() };
    for p in Phase::ALL {
        let idx = in_phase(p);
        if idx.is_empty() {
            continue;
        }
        let stats = |q: &[u64]| QueueStats {
            mean: idx.iter().map(|&i| q[i] as f64).sum::<f64>() / idx.len() as f64,
            max: idx.iter().map(|&i| q[i]).max().unwrap_or(0),
            slots: idx.len(),
        };
        queues.push((p, [stats(&s.queue_ul), stats(&s.queue_dl)]));
        let mut counts = vec![0usize; n_actions];
        for &i in &idx {
            if s.action[i] >= counts.len() {
                counts.resize(s.action[i] + 1, 0);
            }
            counts[s.action[i]] += 1;
        }
        let modal = (0..counts.len())
            .max_by_key(|&a| (counts[a], std::cmp::Reverse(a)))
            .unwrap_or(0);
        modal_actions.push((p, modal, counts[modal] as f64 / idx.len() as f64));
        let switches = idx.iter().filter(|&&i| i > 0 && s.action[i] != s.action[i - 1]).count();
        phase_switch_rates.push((p, switches as f64 / idx.len() as f64));
    }

    let peak = in_phase(Phase::Peak);
    let arrived: u64 = peak.iter().map(|&i| s.demand_ul[i]).sum();
    let served: u64 = peak.iter().map(|&i| s.served_ul[i]).sum();
    let peak_ul_utilization_pct = if arrived == 0 {
        100.0
    } else {
        (100.0 * served as f64 / arrived as f64).clamp(0.0, 100.0)
    };
    let mut dl: Vec<u64> = peak.iter().map(|&i| s.served_dl[i]).collect();
    let peak_dl_served_mean = if dl.is_empty() { 0.0 } else { dl.iter().sum::<u64>() as f64 / dl.len() as f64 };
    let peak_dl_served_median = median(&mut dl);

    let mut action_counts = vec![0usize; n_actions];
    for &a in &s.action {
        if a >= action_counts.len() {
            action_counts.resize(a + 1, 0);
        }
        action_counts[a] += 1;
    }
    SchedulerMetrics {
        scheduler: s.scheduler,
        queues,
        peak_ul_utilization_pct,
        peak_dl_served_mean,
        peak_dl_served_median,
        switch_rate: if s.is_empty() { 0.0 } else { s.switches() as f64 / s.len() as f64 },
        action_counts,
        modal_actions,
        phase_switch_rates,
    }
}

fn write_file(path: &Path, body: String) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub const PLOT_FILES: [&str; 3] = ["forecast.csv", "ul_alloc.csv", "dl_alloc.csv"];

const COLUMNS: &str = "\
forecast.csv    slot, true_ul, pred_ul, true_dl, pred_dl
                bits/slot; stitched 10-slot forecasts, each from true history
ul_alloc.csv    slot, demand, ddqn_alloc_pct, sacd_alloc_pct, static_alloc_pct, ddqn_queue, static_queue
dl_alloc.csv    same columns for the downlink
<sched>_<dir>.csv  slot, demand, alloc_pct, queue, served   (sched: ddqn|static|sacd, dir: ul|dl)
                queue is the backlog after service; sacd has no queue and reports 0
";

/// Figure-ready CSVs plus the raw per-scheduler series.
pub fn emit_plots(out: &CompareOutput, trace: &TrafficTrace, out_dir: &Path) -> Result<()> {
    if out.series.iter().any(|s| s.is_empty()) {
        return Err(Error::InsufficientTrace("nothing to plot".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut f = String::from("slot,true_ul,pred_ul,true_dl,pred_dl\n");
    for (k, p) in out.forecast.bits.iter().enumerate() {
        let t = out.forecast.start + k;
        let d = trace.slot(t);
        f.push_str(&format!("{t},{},{:.1},{},{:.1}\n", d.ul, p[0], d.dl, p[1]));
    }
    write_file(&out_dir.join(PLOT_FILES[0]), f)?;

    let (ddqn, fixed, sacd) = (out.series(Scheduler::Ddqn), out.series(Scheduler::Static), out.series(Scheduler::Sacd));
    for (ul, name) in [(true, PLOT_FILES[1]), (false, PLOT_FILES[2])] {
        let pick = |s: &SchedulerSeries, i: usize| {
            if ul {
                (s.demand_ul[i], s.alloc_ul_pct[i], s.queue_ul[i])
            } else {
                (s.demand_dl[i], s.alloc_dl_pct[i], s.queue_dl[i])
            }
        };
        let mut body = String::from("slot,demand,ddqn_alloc_pct,sacd_alloc_pct,static_alloc_pct,ddqn_queue,static_queue\n");
        for i in 0..ddqn.len() {
            let (d, a, q) = pick(ddqn, i);
            let (_, sa, _) = pick(sacd, i);
            let (_, fa, fq) = pick(fixed, i);
            body.push_str(&format!(
                "{},{d},{},{},{},{q},{fq}\n",
                ddqn.slots[i],
                report::fmt_pct(a),
                report::fmt_pct(sa),
                report::fmt_pct(fa)
            ));
        }
        write_file(&out_dir.join(name), body)?;
    }
    for s in &out.series {
        for (ul, dir) in [(true, "ul"), (false, "dl")] {
            let mut buf = Vec::new();
            s.write_direction(&mut buf, ul).expect("writing to memory");
            let path = out_dir.join(format!("{}_{dir}.csv", s.scheduler.name()));
            std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        }
    }
    write_file(&out_dir.join("columns.txt"), COLUMNS.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::SlotDemand;

    fn series(s: Scheduler, demand: &[(u64, u64)], actions: &[usize], q_ul: &[u64], served_dl: &[u64]) -> SchedulerSeries {
        let mut x = SchedulerSeries::new(s, demand.len());
        for (i, &(u, d)) in demand.iter().enumerate() {
            x.slots.push(10 + i);
            x.demand_ul.push(u);
            x.demand_dl.push(d);
            x.alloc_ul_pct.push(30.0);
            x.alloc_dl_pct.push(70.0);
            x.queue_ul.push(q_ul[i]);
            x.queue_dl.push(0);
            x.served_ul.push(u.min(30_000));
            x.served_dl.push(served_dl[i]);
            x.action.push(actions[i]);
        }
        x
    }

    fn setup() -> (Vec<SchedulerSeries>, PhaseAnnotation, TrafficTrace) {
        let demand = [(30_000, 80_000); 4].iter().chain(&[(200, 200); 2]).copied().collect::<Vec<_>>();
        let trace = TrafficTrace::new(
            (0..16)
                .map(|t| {
                    let (ul, dl) = if (10..16).contains(&t) { demand[t - 10] } else { (0, 0) };
                    SlotDemand { ul, dl }
                })
                .collect(),
        )
        .unwrap();
        let phases = PhaseAnnotation::new(10, vec![Phase::Peak; 4].into_iter().chain(vec![Phase::Idle; 2]).collect());
        let s = vec![
            series(Scheduler::Ddqn, &demand, &[1, 1, 0, 1, 0, 0], &[0, 0, 0, 1000, 0, 0], &[70_000, 70_000, 60_000, 70_000, 200, 200]),
            series(Scheduler::Static, &demand, &[2; 6], &[10_000, 20_000, 30_000, 40_000, 30_000, 20_000], &[80_000; 6]),
            series(Scheduler::Sacd, &demand, &[1; 6], &[0; 6], &[60_900, 60_900, 60_900, 60_900, 200, 200]),
        ];
        (s, phases, trace)
    }

    #[test]
    fn report_arithmetic() {
        let (s, phases, trace) = setup();
        let f = StitchedForecast { start: 10, bits: vec![[29_000.0, 80_500.0]; 4] };
        let r = build_report(&s, &phases, &f, &trace, 100_000, 5).unwrap();
        let d = r.scheduler(Scheduler::Ddqn);
        assert_eq!(d.queue(Phase::Peak, true).mean, 250.0);
        assert_eq!(d.queue(Phase::Peak, true).max, 1000);
        assert_eq!(d.modal(Phase::Peak), Some((1, 0.75)));
        assert_eq!(d.phase_switch_rate(Phase::Peak), 0.5);
        assert_eq!(d.switch_rate, 3.0 / 6.0);
        assert_eq!(d.peak_dl_served_median, 70_000.0);
        assert_eq!(d.peak_dl_served_mean, 67_500.0);
        assert_eq!(d.peak_ul_utilization_pct, 100.0);
        assert_eq!(r.scheduler(Scheduler::Static).queue(Phase::Peak, true).mean, 25_000.0);
        assert_eq!(r.queue_buildup_reduction_pct, 99.0);
        assert_eq!(r.dl_gain_bits, 9_100.0);
        assert!((r.dl_gain_pct - 14.942528735632184).abs() < 1e-9);
        assert_eq!((r.forecast_mae_ul_bits, r.forecast_mae_dl_bits), (1000.0, 500.0));
        assert_eq!(r.phase_slots, vec![(Phase::Peak, 4), (Phase::Idle, 2), (Phase::Mid, 0)]);

        let csv = r.to_csv();
        assert!(csv.contains("ddqn,queue_buildup_reduction_pct,PEAK,ul,99.0000\n"));
        assert!(csv.contains("sacd,served_median_bits,PEAK,dl,60900.000\n"));
        assert!(csv.contains("ddqn,modal_action,IDLE,,0\n"));
        assert_eq!(csv, build_report(&s, &phases, &f, &trace, 100_000, 5).unwrap().to_csv());
    }

    #[test]
    fn different_demand_streams_are_rejected() {
        let (mut s, phases, trace) = setup();
        s[2].demand_dl[5] += 1;
        let f = StitchedForecast { start: 10, bits: vec![] };
        assert!(matches!(build_report(&s, &phases, &f, &trace, 100_000, 5), Err(Error::Config(_))));
    }

    #[test]
    fn series_csv_columns() {
        let (s, ..) = setup();
        let mut buf = Vec::new();
        s[0].write_direction(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("slot,demand,alloc_pct,queue,served"));
        assert_eq!(lines.next(), Some("10,30000,30,0,30000"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn default_span_is_horizon_aligned() {
        assert_eq!(default_span(1000, 30, 10).unwrap(), 30..1000);
        assert_eq!(default_span(1005, 30, 10).unwrap(), 30..1000);
        assert!(default_span(35, 30, 10).is_err());
    }
}
