use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::smc::ensemble::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Itu,
    Lu,
    Zeta,
    Probe,
    Term,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceKind::Itu => "ITU",
            TraceKind::Lu => "LU",
            TraceKind::Zeta => "ZETA",
            TraceKind::Probe => "PROBE",
            TraceKind::Term => "TERM",
        })
    }
}

impl FromStr for TraceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ITU" => TraceKind::Itu,
            "LU" => TraceKind::Lu,
            "ZETA" => TraceKind::Zeta,
            "PROBE" => TraceKind::Probe,
            "TERM" => TraceKind::Term,
            other => return Err(Error::Config(format!("unknown trace row kind {other:?}"))),
        })
    }
}

/// One row of the schedule trace.
///
/// `ITU` rows carry the mutation solves of a tempering step. An `LU` row
/// carries the `J` fine-level evaluations that open a level update and is
/// followed by one `ZETA` row per intermediate bridging step. `PROBE` rows
/// record the evaluations made by a cv probe; those are not part of
/// `cumulative_cost`, which sums the update solves only.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub s: usize,
    pub kind: TraceKind,
    pub k: usize,
    /// 1-based.
    pub level: usize,
    pub beta: f64,
    pub zeta: f64,
    pub ess: Option<f64>,
    pub cv: Option<f64>,
    pub solves: Vec<u64>,
    pub cumulative_cost: f64,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], n_levels: usize, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["s", "kind", "k", "level", "beta", "zeta", "ess", "cv"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=n_levels).map(|l| format!("solves_level_{l}")));
    header.push("cumulative_cost".into());
    wtr.write_record(&header)?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.s.to_string(),
            r.kind.to_string(),
            r.k.to_string(),
            r.level.to_string(),
            fmt_f64(r.beta),
            fmt_f64(r.zeta),
            opt(r.ess),
            opt(r.cv),
        ];
        rec.extend(r.solves.iter().map(u64::to_string));
        rec.push(fmt_f64(r.cumulative_cost));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let fixed = ["s", "kind", "k", "level", "beta", "zeta", "ess", "cv"];
    if header.len() < fixed.len() + 2 || fixed.iter().zip(header.iter()).any(|(a, b)| *a != b) {
        return Err(Error::Config("trace CSV header does not match the trace layout".into()));
    }
    let n_levels = header.len() - fixed.len() - 1;
    for l in 0..n_levels {
        if header[fixed.len() + l] != format!("solves_level_{}", l + 1) {
            return Err(Error::Config(format!(
                "unexpected trace column {:?}",
                &header[fixed.len() + l]
            )));
        }
    }
    if &header[header.len() - 1] != "cumulative_cost" {
        return Err(Error::Config("trace CSV must end with cumulative_cost".into()));
    }
    let bad = |what: &str, v: &str| Error::Config(format!("bad {what} {v:?} in trace"));
    let uint = |v: &str, what: &str| v.trim().parse::<usize>().map_err(|_| bad(what, v));
    let real = |v: &str, what: &str| {
        v.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| bad(what, v))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let opt = |v: &str, what: &str| {
            if v.is_empty() {
                Ok(None)
            } else {
                real(v, what).map(Some)
            }
        };
        let level = uint(&rec[3], "level")?;
        if level == 0 || level > n_levels {
            return Err(bad("level", &rec[3]));
        }
        rows.push(TraceRow {
            s: uint(&rec[0], "s")?,
            kind: rec[1].parse()?,
            k: uint(&rec[2], "k")?,
            level,
            beta: real(&rec[4], "beta")?,
            zeta: real(&rec[5], "zeta")?,
            ess: opt(&rec[6], "ess")?,
            cv: opt(&rec[7], "cv")?,
            solves: (0..n_levels)
                .map(|l| {
                    let v = &rec[fixed.len() + l];
                    v.trim().parse::<u64>().map_err(|_| bad("solve count", v))
                })
                .collect::<Result<_>>()?,
            cumulative_cost: real(&rec[fixed.len() + n_levels], "cumulative_cost")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let rows = vec![
            TraceRow {
                s: 1,
                kind: TraceKind::Itu,
                k: 1,
                level: 1,
                beta: 0.0123,
                zeta: 1.0,
                ess: Some(80.0),
                cv: Some(0.5),
                solves: vec![100, 0],
                cumulative_cost: 25.0,
            },
            TraceRow {
                s: 2,
                kind: TraceKind::Term,
                k: 1,
                level: 1,
                beta: 1.0,
                zeta: 1.0,
                ess: None,
                cv: None,
                solves: vec![0, 0],
                cumulative_cost: 25.0,
            },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&rows, 2, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("s,kind,k,level,beta,zeta,ess,cv,solves_level_1,solves_level_2,cumulative_cost\n"));
        assert_eq!(read_trace_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_trace_csv("a,b\n1,2\n".as_bytes()).is_err());
        let h = "s,kind,k,level,beta,zeta,ess,cv,solves_level_1,cumulative_cost\n";
        assert!(read_trace_csv(format!("{h}1,XYZ,0,1,0,1,,,0,0\n").as_bytes()).is_err());
        assert!(read_trace_csv(format!("{h}1,ITU,0,2,0,1,,,0,0\n").as_bytes()).is_err());
        assert!(read_trace_csv(format!("{h}1,ITU,0,1,inf,1,,,0,0\n").as_bytes()).is_err());
        assert_eq!(
            read_trace_csv(format!("{h}1,ITU,0,1,0.5,1,,,3,0.5\n").as_bytes())
                .unwrap()
                .len(),
            1
        );
    }
}
