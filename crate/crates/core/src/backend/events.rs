//! Sparse observables recorded by the emulator, with CSV serialization.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// One digital spike event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpikeEvent {
    pub time_us: f64,
    pub batch: usize,
    pub unit: usize,
}

/// Time-sorted spike events of one population over one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpikeTrain {
    pub events: Vec<SpikeEvent>,
}

impl SpikeTrain {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Checks time range `[0, t_max)`, index bounds and time ordering.
    pub fn validate(&self, t_max_us: f64, batch: usize, units: usize) -> Result<()> {
        let mut last = 0.0f64;
        for e in &self.events {
            if e.time_us < 0.0 || e.time_us >= t_max_us {
                return Err(Error::Data(format!("spike time {} outside [0,{})", e.time_us, t_max_us)));
            }
            if e.batch >= batch || e.unit >= units {
                return Err(Error::Index(format!(
                    "spike event (batch {}, unit {}) outside population ({}, {})",
                    e.batch, e.unit, batch, units
                )));
            }
            if e.time_us < last {
                return Err(Error::Data("spike events are not time-sorted".into()));
            }
            last = e.time_us;
        }
        Ok(())
    }

    /// `time_us,batch,unit` rows with a header, times with 6 decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time_us,batch,unit")?;
        for e in &self.events {
            writeln!(w, "{:.6},{},{}", e.time_us, e.batch, e.unit)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut events = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "time_us,batch,unit" {
                    return Err(Error::Data(format!("unexpected spike CSV header: {line}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut field = || {
                parts
                    .next()
                    .ok_or_else(|| Error::Data(format!("short spike CSV row: {i}")))
            };
            events.push(SpikeEvent {
                time_us: field()?
                    .parse()
                    .map_err(|e| Error::Data(format!("bad time in row {i}: {e}")))?,
                batch: field()?
                    .parse()
                    .map_err(|e| Error::Data(format!("bad batch in row {i}: {e}")))?,
                unit: field()?
                    .parse()
                    .map_err(|e| Error::Data(format!("bad unit in row {i}: {e}")))?,
            });
        }
        Ok(SpikeTrain { events })
    }
}

/// One ADC reading of one unit's membrane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MembraneSample {
    pub time_us: f64,
    pub batch: usize,
    pub unit: usize,
    /// Digitized value in ADC counts.
    pub value: u16,
}

/// Sparse-in-time membrane recordings of one population.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MembraneSamples {
    pub samples: Vec<MembraneSample>,
}

impl MembraneSamples {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `time_us,batch,unit,adc_value` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time_us,batch,unit,adc_value")?;
        for s in &self.samples {
            writeln!(w, "{:.6},{},{},{}", s.time_us, s.batch, s.unit, s.value)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "time_us,batch,unit,adc_value" {
                    return Err(Error::Data(format!("unexpected membrane CSV header: {line}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut field = || {
                parts
                    .next()
                    .ok_or_else(|| Error::Data(format!("short membrane CSV row: {i}")))
            };
            samples.push(MembraneSample {
                time_us: field()?
                    .parse()
                    .map_err(|e| Error::Data(format!("bad time in row {i}: {e}")))?,
                batch: field()?
                    .parse()
                    .map_err(|e| Error::Data(format!("bad batch in row {i}: {e}")))?,
                unit: field()?
                    .parse()
                    .map_err(|e| Error::Data(format!("bad unit in row {i}: {e}")))?,
                value: field()?
                    .parse()
                    .map_err(|e| Error::Data(format!("bad value in row {i}: {e}")))?,
            });
        }
        Ok(MembraneSamples { samples })
    }
}
