//! Per-slot UL/DL demand traces and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Demand arriving in one slot, in bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SlotDemand {
    pub ul: u64,
    pub dl: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficTrace {
    slots: Vec<SlotDemand>,
    pub seed: Option<u64>,
    /// Name of the generating chain; `None` for traces read from disk.
    pub chain_id: Option<String>,
    /// Hidden chain state per slot, when the trace was generated in-process.
    pub hidden_states: Option<Vec<u8>>,
}

impl TrafficTrace {
    pub fn new(slots: Vec<SlotDemand>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::TraceTooShort { len: 0, needed: 1 });
        }
        Ok(TrafficTrace {
            slots,
            seed: None,
            chain_id: None,
            hidden_states: None,
        })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[SlotDemand] {
        &self.slots
    }

    pub fn slot(&self, t: usize) -> SlotDemand {
        self.slots[t]
    }

    /// Copy of `[start, end)`, keeping hidden states aligned.
    pub fn slice(&self, start: usize, end: usize) -> Result<TrafficTrace> {
        if start >= end || end > self.len() {
            return Err(Error::InsufficientTrace(format!(
                "slice [{start}, {end}) of a {}-slot trace",
                self.len()
            )));
        }
        Ok(TrafficTrace {
            slots: self.slots[start..end].to_vec(),
            seed: self.seed,
            chain_id: self.chain_id.clone(),
            hidden_states: self.hidden_states.as_ref().map(|s| s[start..end].to_vec()),
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["slot", "ul_bits", "dl_bits"])?;
        for (t, s) in self.slots.iter().enumerate() {
            w.write_record([t.to_string(), s.ul.to_string(), s.dl.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["slot", "ul_bits", "dl_bits"] {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                msg: format!("expected header slot,ul_bits,dl_bits, got {:?}", headers),
            });
        }
        let mut slots = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |k: usize| -> Result<u64> {
                rec.get(k).and_then(|v| v.trim().parse().ok()).ok_or_else(|| Error::Parse {
                    path: origin.to_path_buf(),
                    msg: format!("row {}: bad field {k}", i + 1),
                })
            };
            if field(0)? != i as u64 {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    msg: format!("row {}: slots must be consecutive from 0", i + 1),
                });
            }
            slots.push(SlotDemand {
                ul: field(1)?,
                dl: field(2)?,
            });
        }
        TrafficTrace::new(slots)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }
}
