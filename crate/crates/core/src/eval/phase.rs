use std::io::Write;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::traffic::{ModulatedChain, TrafficTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Peak,
    Idle,
    Mid,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Peak, Phase::Idle, Phase::Mid];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Peak => "PEAK",
            Phase::Idle => "IDLE",
            Phase::Mid => "MID",
        }
    }

    /// UL above a quarter of capacity is peak; a combined load under 5%
    /// of capacity is idle; everything else is mid.
    pub fn classify(ul_bits: f64, dl_bits: f64, capacity: u64) -> Phase {
        let c = capacity as f64;
        if ul_bits > 0.25 * c {
            Phase::Peak
        } else if ul_bits + dl_bits < 0.05 * c {
            Phase::Idle
        } else {
            Phase::Mid
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown phase `{s}`")))
    }
}

/// One phase label per slot of `[start, start + labels.len())`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseAnnotation {
    start: usize,
    labels: Vec<Phase>,
}

impl PhaseAnnotation {
    pub fn new(start: usize, labels: Vec<Phase>) -> Self {
        PhaseAnnotation { start, labels }
    }

    /// Labels from the generator's hidden state, each state classified by
    /// its mean rates.
    pub fn from_hidden_states(trace: &TrafficTrace, chain: &ModulatedChain, capacity: u64) -> Result<Self> {
        let states = trace
            .hidden_states
            .as_ref()
            .ok_or_else(|| Error::InsufficientTrace("trace carries no hidden states".into()))?;
        let by_state: Vec<Phase> = (0..chain.n_states())
            .map(|s| {
                let (ul, dl) = chain.state_mean_bits(s);
                Phase::classify(ul, dl, capacity)
            })
            .collect();
        let labels = states
            .iter()
            .map(|&s| by_state.get(s as usize).copied().ok_or(Error::InvalidChain(format!("hidden state {s} out of range"))))
            .collect::<Result<_>>()?;
        Ok(PhaseAnnotation { start: 0, labels })
    }

    /// Per-slot threshold labels, for traces without hidden state.
    pub fn from_thresholds(trace: &TrafficTrace, capacity: u64) -> Self {
        PhaseAnnotation {
            start: 0,
            labels: trace
                .slots()
                .iter()
                .map(|s| Phase::classify(s.ul as f64, s.dl as f64, capacity))
                .collect(),
        }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn span(&self) -> Range<usize> {
        self.start..self.start + self.labels.len()
    }

    pub fn label(&self, slot: usize) -> Option<Phase> {
        slot.checked_sub(self.start).and_then(|i| self.labels.get(i)).copied()
    }

    /// Maximal runs of equal labels, in slot order.
    pub fn ranges(&self) -> Vec<(Phase, Range<usize>)> {
        let mut out: Vec<(Phase, Range<usize>)> = Vec::new();
        for (i, &p) in self.labels.iter().enumerate() {
            let t = self.start + i;
            match out.last_mut() {
                Some((q, r)) if *q == p => r.end = t + 1,
                _ => out.push((p, t..t + 1)),
            }
        }
        out
    }

    pub fn restrict(&self, span: Range<usize>) -> Result<Self> {
        if span.start < self.start || span.end > self.span().end || span.start > span.end {
            return Err(Error::InsufficientTrace(format!(
                "annotation covers {:?}, asked for {span:?}",
                self.span()
            )));
        }
        Ok(PhaseAnnotation {
            start: span.start,
            labels: self.labels[span.start - self.start..span.end - self.start].to_vec(),
        })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "slot,phase").expect("in-memory write");
        for (i, p) in self.labels.iter().enumerate() {
            writeln!(buf, "{},{}", self.start + i, p.name()).expect("in-memory write");
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            msg,
        };
        let mut lines = text.lines();
        if lines.next() != Some("slot,phase") {
            return Err(parse("expected header `slot,phase`".into()));
        }
        let mut start = None;
        let mut labels = Vec::new();
        for (n, line) in lines.enumerate() {
            let (slot, phase) = line.split_once(',').ok_or_else(|| parse(format!("line {}: `{line}`", n + 2)))?;
            let slot: usize = slot.parse().map_err(|_| parse(format!("line {}: bad slot", n + 2)))?;
            let s = *start.get_or_insert(slot);
            if slot != s + labels.len() {
                return Err(parse(format!("line {}: slots must be consecutive", n + 2)));
            }
            labels.push(phase.parse()?);
        }
        Ok(PhaseAnnotation {
            start: start.unwrap_or(0),
            labels,
        })
    }

    /// Sidecar path used next to a trace CSV: `foo.csv` → `foo.phases.csv`.
    pub fn sidecar_path(trace_path: &Path) -> std::path::PathBuf {
        let stem = trace_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        trace_path.with_file_name(format!("{stem}.phases.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{build_chain, generate_trace, ChainConfig};

    #[test]
    fn thresholds() {
        assert_eq!(Phase::classify(30_000.0, 80_000.0, 100_000), Phase::Peak);
        assert_eq!(Phase::classify(200.0, 200.0, 100_000), Phase::Idle);
        assert_eq!(Phase::classify(12_000.0, 35_000.0, 100_000), Phase::Mid);
    }

    #[test]
    fn hidden_state_labels_partition_the_trace() {
        let chain = build_chain(&ChainConfig::default_three_state()).unwrap();
        let t = generate_trace(&chain, 5000, 2).unwrap();
        let a = PhaseAnnotation::from_hidden_states(&t, &chain, 100_000).unwrap();
        let r = a.ranges();
        assert_eq!(r.first().unwrap().1.start, 0);
        assert_eq!(r.last().unwrap().1.end, 5000);
        assert!(r.windows(2).all(|w| w[0].1.end == w[1].1.start && w[0].0 != w[1].0));
        let states = t.hidden_states.as_ref().unwrap();
        let expect = [Phase::Peak, Phase::Idle, Phase::Mid];
        assert!((0..5000).all(|i| a.label(i) == Some(expect[states[i] as usize])));
    }

    #[test]
    fn csv_round_trip() {
        let a = PhaseAnnotation::new(3, vec![Phase::Idle, Phase::Idle, Phase::Peak]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.phases.csv");
        a.save_csv(&p).unwrap();
        assert_eq!(PhaseAnnotation::load_csv(&p).unwrap(), a);
        assert_eq!(PhaseAnnotation::sidecar_path(Path::new("/a/trace.csv")), Path::new("/a/trace.phases.csv"));
    }
}
