//! Timing records (JSON lines), XYZ trajectories and observable tables.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::json;
use shortmd_core::engine::Observables;
use shortmd_core::{Domain, Section, SectionTimers};

/// One JSON object per line: `{"step_range":[first,last],"section":"Forces","seconds":…}`
/// for every section of every block, then a summary footer with the run totals.
pub struct TimingWriter {
    out: BufWriter<File>,
}

impl TimingWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(TimingWriter { out: BufWriter::new(File::create(path)?) })
    }

    /// Records the time spent in steps `first..=last`.
    pub fn block(&mut self, first: u64, last: u64, delta: &SectionTimers) -> io::Result<()> {
        for s in Section::ALL {
            let rec = json!({
                "step_range": [first, last],
                "section": s.name(),
                "seconds": delta.get(s).as_secs_f64(),
            });
            writeln!(self.out, "{rec}")?;
        }
        Ok(())
    }

    pub fn finish(mut self, steps: u64, totals: &SectionTimers) -> io::Result<()> {
        let mut sections = serde_json::Map::new();
        for s in Section::ALL {
            sections.insert(s.name().into(), json!(totals.get(s).as_secs_f64()));
        }
        let footer = json!({
            "summary": sections,
            "steps": steps,
            "total_seconds": totals.total().as_secs_f64(),
        });
        writeln!(self.out, "{footer}")?;
        self.out.flush()
    }
}

/// Standard XYZ: particle count, a comment line with step and box, then one
/// `type x y z` row per particle in id order.
pub struct XyzWriter {
    out: BufWriter<File>,
}

impl XyzWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(XyzWriter { out: BufWriter::new(File::create(path)?) })
    }

    pub fn frame(&mut self, step: u64, domain: &Domain) -> io::Result<()> {
        let ps = domain.particles();
        let l = domain.box_spec().lengths();
        writeln!(self.out, "{}", ps.len())?;
        writeln!(self.out, "step={step} box={} {} {}", l[0], l[1], l[2])?;
        for p in &ps {
            let [x, y, z] = p.position;
            writeln!(self.out, "{} {x:.8} {y:.8} {z:.8}", p.kind)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

pub fn write_observables(path: &Path, rows: &[Observables]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "step,kinetic,potential,total,temperature")?;
    for o in rows {
        writeln!(out, "{},{},{},{},{}", o.step, o.kinetic, o.potential, o.total, o.temperature)?;
    }
    out.flush()
}
