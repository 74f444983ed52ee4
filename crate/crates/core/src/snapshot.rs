//! Density snapshots and their on-disk formats, shared by both solvers.
//!
//! CSV: `# `-prefixed header lines, then `kind,t,site,x,rho` rows.
//!
//! Binary (little-endian): magic `CHMK`, version `u32`, sites `u32`, `dx`
//! `f64`, `dt` `f64`, snapshot count `u64`, kind `u8`; then per snapshot
//! `t` as `f64` followed by `sites` densities as `f64`. The count is patched
//! in when the writer is finished.

use std::io::{self, BufRead, Read, Seek, SeekFrom, Write};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CHMK";
pub const VERSION: u32 = 1;
const COUNT_OFFSET: u64 = 4 + 4 + 4 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub rho: Vec<f64>,
    /// Live particle count, for particle runs.
    pub particles: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Mc,
    Ks,
}

impl SolverKind {
    pub fn tag(self) -> &'static str {
        match self {
            SolverKind::Mc => "mc",
            SolverKind::Ks => "ks",
        }
    }

    fn byte(self) -> u8 {
        match self {
            SolverKind::Mc => 0,
            SolverKind::Ks => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(SolverKind::Mc),
            1 => Ok(SolverKind::Ks),
            _ => Err(Error::Format(format!("unknown solver kind byte {b}"))),
        }
    }

    fn from_tag(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(SolverKind::Mc),
            "ks" => Ok(SolverKind::Ks),
            _ => Err(Error::Format(format!("unknown solver kind {s:?}"))),
        }
    }
}

/// Write `text` as `# `-prefixed comment lines.
pub fn write_header<W: Write>(w: &mut W, text: &str) -> io::Result<()> {
    for line in text.lines() {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

pub struct CsvSnapshotWriter<W: Write> {
    w: W,
    kind: SolverKind,
    dx: f64,
}

impl<W: Write> CsvSnapshotWriter<W> {
    pub fn new(mut w: W, kind: SolverKind, dx: f64, header: &str) -> io::Result<Self> {
        write_header(&mut w, header)?;
        writeln!(w, "kind,t,site,x,rho")?;
        Ok(Self { w, kind, dx })
    }

    pub fn write(&mut self, s: &Snapshot) -> io::Result<()> {
        let tag = self.kind.tag();
        for (i, r) in s.rho.iter().enumerate() {
            let x = (i as f64 + 0.5) * self.dx;
            writeln!(self.w, "{tag},{},{i},{x},{r}", s.t)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.w.flush()?;
        Ok(self.w)
    }
}

/// Parse a CSV snapshot stream back into snapshots (particle counts are not
/// stored in this format).
pub fn read_csv<R: BufRead>(r: R) -> Result<(SolverKind, Vec<Snapshot>)> {
    let mut kind = None;
    let mut out: Vec<Snapshot> = Vec::new();
    let mut saw_columns = false;
    for line in r.lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_columns {
            if line.trim() != "kind,t,site,x,rho" {
                return Err(Error::Format(format!("unexpected column line {line:?}")));
            }
            saw_columns = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Format(format!("expected 5 fields in {line:?}")));
        }
        let k = SolverKind::from_tag(f[0])?;
        if *kind.get_or_insert(k) != k {
            return Err(Error::Format("mixed solver kinds".into()));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("{s:?}: {e}")))
        };
        let t = num(f[1])?;
        let site: usize = f[2]
            .parse()
            .map_err(|e| Error::Format(format!("{:?}: {e}", f[2])))?;
        let rho = num(f[4])?;
        match out.last_mut() {
            Some(s) if s.t == t && site == s.rho.len() => s.rho.push(rho),
            _ if site == 0 => out.push(Snapshot {
                t,
                rho: vec![rho],
                particles: None,
            }),
            _ => {
                return Err(Error::Format(format!(
                    "site {site} out of order at t = {t}"
                )))
            }
        }
    }
    let kind = kind.ok_or_else(|| Error::Format("no snapshot rows".into()))?;
    Ok((kind, out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryHeader {
    pub sites: u32,
    pub dx: f64,
    pub dt: f64,
    pub count: u64,
    pub kind: SolverKind,
}

pub struct BinarySnapshotWriter<W: Write + Seek> {
    w: W,
    sites: usize,
    count: u64,
}

impl<W: Write + Seek> BinarySnapshotWriter<W> {
    pub fn new(mut w: W, kind: SolverKind, sites: usize, dx: f64, dt: f64) -> Result<Self> {
        let sites32 = u32::try_from(sites).map_err(|_| Error::Format("too many sites".into()))?;
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&sites32.to_le_bytes())?;
        w.write_all(&dx.to_le_bytes())?;
        w.write_all(&dt.to_le_bytes())?;
        w.write_all(&0u64.to_le_bytes())?;
        w.write_all(&[kind.byte()])?;
        Ok(Self { w, sites, count: 0 })
    }

    pub fn write(&mut self, s: &Snapshot) -> Result<()> {
        if s.rho.len() != self.sites {
            return Err(Error::Format(format!(
                "snapshot has {} sites, stream has {}",
                s.rho.len(),
                self.sites
            )));
        }
        self.w.write_all(&s.t.to_le_bytes())?;
        for r in &s.rho {
            self.w.write_all(&r.to_le_bytes())?;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        let end = self.w.stream_position()?;
        self.w.seek(SeekFrom::Start(COUNT_OFFSET))?;
        self.w.write_all(&self.count.to_le_bytes())?;
        self.w.seek(SeekFrom::Start(end))?;
        self.w.flush()?;
        Ok(self.w)
    }
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated stream: {e}")))?;
    Ok(b)
}

pub fn read_binary<R: Read>(mut r: R) -> Result<(BinaryHeader, Vec<Snapshot>)> {
    if take::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let header = BinaryHeader {
        sites: u32::from_le_bytes(take(&mut r)?),
        dx: f64::from_le_bytes(take(&mut r)?),
        dt: f64::from_le_bytes(take(&mut r)?),
        count: u64::from_le_bytes(take(&mut r)?),
        kind: SolverKind::from_byte(take::<1, _>(&mut r)?[0])?,
    };
    let mut out = Vec::new();
    for _ in 0..header.count {
        let t = f64::from_le_bytes(take(&mut r)?);
        let rho = (0..header.sites)
            .map(|_| Ok(f64::from_le_bytes(take(&mut r)?)))
            .collect::<Result<Vec<f64>>>()?;
        out.push(Snapshot {
            t,
            rho,
            particles: None,
        });
    }
    Ok((header, out))
}
