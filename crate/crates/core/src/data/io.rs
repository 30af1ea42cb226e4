//! Dataset file: one JSON header line, then one record per segment.
//!
//! Text records are JSON lines with base-10 features. Binary records are packed
//! little-endian: `id u64, split u8, class_label i64, eval_label i64,
//! is_negative u8, modalities u32, dim u32, features f64[modalities * dim]`
//! with `-1` standing for an absent label.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::synth::{Dataset, Domain, DomainSpec, Segment};

pub const FORMAT_NAME: &str = "mmir-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Text,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Source,
    Target,
    TargetTest,
}

impl Split {
    fn code(self) -> u8 {
        match self {
            Split::Source => 0,
            Split::Target => 1,
            Split::TargetTest => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Split::Source),
            1 => Ok(Split::Target),
            2 => Ok(Split::TargetTest),
            _ => Err(Error::Format(format!("unknown split code {c}"))),
        }
    }

    fn domain(self) -> Domain {
        match self {
            Split::Source => Domain::Source,
            _ => Domain::Target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub source: usize,
    pub target: usize,
    pub target_test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub encoding: Encoding,
    pub spec: DomainSpec,
    pub counts: Counts,
}

#[derive(Serialize, Deserialize)]
struct TextRecord {
    id: usize,
    split: Split,
    domain: Domain,
    class_label: Option<usize>,
    eval_label: Option<usize>,
    is_negative: bool,
    features: Vec<Vec<f64>>,
}

fn splits(ds: &Dataset) -> impl Iterator<Item = (Split, &Segment)> {
    ds.source
        .iter()
        .map(|s| (Split::Source, s))
        .chain(ds.target.iter().map(|s| (Split::Target, s)))
        .chain(ds.target_test.iter().map(|s| (Split::TargetTest, s)))
}

pub fn write_to<W: Write>(ds: &Dataset, encoding: Encoding, mut w: W) -> Result<()> {
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        encoding,
        spec: ds.spec.clone(),
        counts: Counts {
            source: ds.source.len(),
            target: ds.target.len(),
            target_test: ds.target_test.len(),
        },
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (split, seg) in splits(ds) {
        let eval_label = (seg.domain == Domain::Target).then(|| seg.evaluation_label());
        match encoding {
            Encoding::Text => {
                let rec = TextRecord {
                    id: seg.id,
                    split,
                    domain: seg.domain,
                    class_label: seg.label(),
                    eval_label,
                    is_negative: seg.ground_truth_negative(),
                    features: seg.features.clone(),
                };
                serde_json::to_writer(&mut w, &rec)?;
                w.write_all(b"\n")?;
            }
            Encoding::Binary => {
                let opt = |v: Option<usize>| v.map_or(-1i64, |x| x as i64);
                w.write_all(&(seg.id as u64).to_le_bytes())?;
                w.write_all(&[split.code()])?;
                w.write_all(&opt(seg.label()).to_le_bytes())?;
                w.write_all(&opt(eval_label).to_le_bytes())?;
                w.write_all(&[seg.ground_truth_negative() as u8])?;
                let k = seg.features.len() as u32;
                let d = seg.features.first().map_or(0, |f| f.len()) as u32;
                w.write_all(&k.to_le_bytes())?;
                w.write_all(&d.to_le_bytes())?;
                for f in &seg.features {
                    if f.len() as u32 != d {
                        return Err(Error::Format(format!("segment {} has ragged features", seg.id)));
                    }
                    for v in f {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write(ds: &Dataset, encoding: Encoding, path: impl AsRef<Path>) -> Result<()> {
    write_to(ds, encoding, BufWriter::new(File::create(path)?))
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn label_from(raw: i64) -> Result<Option<usize>> {
    match raw {
        -1 => Ok(None),
        v if v >= 0 => Ok(Some(v as usize)),
        v => Err(Error::Format(format!("invalid label {v}"))),
    }
}

fn assemble(
    split: Split,
    id: usize,
    class_label: Option<usize>,
    eval_label: Option<usize>,
    is_negative: bool,
    features: Vec<Vec<f64>>,
) -> Result<Segment> {
    let domain = split.domain();
    let label = match domain {
        Domain::Source => class_label,
        Domain::Target => eval_label,
    }
    .ok_or_else(|| Error::Format(format!("segment {id} lacks its {domain} label")))?;
    Ok(Segment::new(id, domain, features, label, is_negative))
}

pub fn read_from<R: BufRead>(mut r: R) -> Result<Dataset> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset format {} v{}",
            header.format, header.version
        )));
    }
    let total = header.counts.source + header.counts.target + header.counts.target_test;
    let mut ds = Dataset {
        spec: header.spec.clone(),
        source: Vec::with_capacity(header.counts.source),
        target: Vec::with_capacity(header.counts.target),
        target_test: Vec::with_capacity(header.counts.target_test),
    };
    for _ in 0..total {
        let (split, seg) = match header.encoding {
            Encoding::Text => {
                line.clear();
                if r.read_line(&mut line)? == 0 {
                    return Err(Error::Format("truncated dataset file".into()));
                }
                let rec: TextRecord = serde_json::from_str(line.trim_end())?;
                if rec.domain != rec.split.domain() {
                    return Err(Error::Format(format!("segment {} domain/split mismatch", rec.id)));
                }
                let seg = assemble(
                    rec.split,
                    rec.id,
                    rec.class_label,
                    rec.eval_label,
                    rec.is_negative,
                    rec.features,
                )?;
                (rec.split, seg)
            }
            Encoding::Binary => {
                let id = u64::from_le_bytes(take(&mut r)?) as usize;
                let split = Split::from_code(take::<1>(&mut r)?[0])?;
                let class_label = label_from(i64::from_le_bytes(take(&mut r)?))?;
                let eval_label = label_from(i64::from_le_bytes(take(&mut r)?))?;
                let is_negative = take::<1>(&mut r)?[0] != 0;
                let k = u32::from_le_bytes(take(&mut r)?) as usize;
                let d = u32::from_le_bytes(take(&mut r)?) as usize;
                let mut features = Vec::with_capacity(k);
                for _ in 0..k {
                    let mut f = Vec::with_capacity(d);
                    for _ in 0..d {
                        f.push(f64::from_le_bytes(take(&mut r)?));
                    }
                    features.push(f);
                }
                let seg = assemble(split, id, class_label, eval_label, is_negative, features)?;
                (split, seg)
            }
        };
        match split {
            Split::Source => ds.source.push(seg),
            Split::Target => ds.target.push(seg),
            Split::TargetTest => ds.target_test.push(seg),
        }
    }
    if ds.source.len() != header.counts.source
        || ds.target.len() != header.counts.target
        || ds.target_test.len() != header.counts.target_test
    {
        return Err(Error::Format("split counts disagree with header".into()));
    }
    Ok(ds)
}

pub fn read(path: impl AsRef<Path>) -> Result<Dataset> {
    read_from(BufReader::new(File::open(path)?))
}
