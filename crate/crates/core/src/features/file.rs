//! Feature set persistence.
//!
//! Layout: the first line is `#` followed by a JSON [`FeatureHeader`]; the
//! rest is CSV with columns `role,x,y,re_0,im_0,...,re_{MF-1},im_{MF-1}`.
//! `x`/`y` are empty for unlabeled rows.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{AggregatedRtf, BandSelection, StftConfig};
use crate::error::{Error, Result};
use crate::sim::dataset::Role;

pub const FORMAT_NAME: &str = "mmgp-rtf-features";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureHeader {
    pub format: String,
    pub version: u32,
    pub nodes: usize,
    pub bins: usize,
    pub band: BandSelection,
    pub stft: StftConfig,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub role: Role,
    pub position: Option<[f64; 2]>,
    pub feature: AggregatedRtf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub stft: StftConfig,
    pub band: BandSelection,
    pub rows: Vec<FeatureRow>,
}

impl FeatureSet {
    pub fn new(stft: StftConfig, band: BandSelection) -> Self {
        FeatureSet {
            stft,
            band,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, role: Role, position: Option<[f64; 2]>, feature: AggregatedRtf) {
        self.rows.push(FeatureRow {
            role,
            position,
            feature,
        });
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.rows.first().map(|r| r.feature.shape())
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &FeatureRow> {
        self.rows.iter().filter(move |r| r.role == role)
    }

    pub fn header(&self) -> Result<FeatureHeader> {
        let (nodes, bins) = self
            .shape()
            .ok_or_else(|| Error::Input("feature set is empty".into()))?;
        if let Some(bad) = self.rows.iter().find(|r| r.feature.shape() != (nodes, bins)) {
            return Err(Error::Input(format!(
                "mixed feature shapes: {:?} vs {:?}",
                bad.feature.shape(),
                (nodes, bins)
            )));
        }
        Ok(FeatureHeader {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            nodes,
            bins,
            band: self.band.clone(),
            stft: self.stft,
            count: self.rows.len(),
        })
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let header = self.header()?;
        let io = |e| Error::Format(format!("write failed: {e}"));
        writeln!(out, "#{}", serde_json::to_string(&header)?).map_err(io)?;
        let mut w = csv::Writer::from_writer(out);
        let mut cols = vec!["role".to_string(), "x".into(), "y".into()];
        for j in 0..header.nodes * header.bins {
            cols.push(format!("re_{j}"));
            cols.push(format!("im_{j}"));
        }
        w.write_record(&cols)?;
        for row in &self.rows {
            let mut rec = vec![row.role.as_str().to_string()];
            match row.position {
                Some([x, y]) => {
                    rec.push(format!("{x:?}"));
                    rec.push(format!("{y:?}"));
                }
                None => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
            for c in row.feature.flat() {
                rec.push(format!("{:?}", c.re));
                rec.push(format!("{:?}", c.im));
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn read_from(input: impl std::io::Read) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut first = String::new();
        reader
            .read_line(&mut first)
            .map_err(|e| Error::Format(format!("read failed: {e}")))?;
        let json = first
            .trim_end()
            .strip_prefix('#')
            .ok_or_else(|| Error::Format("feature file must start with a '#' JSON header".into()))?;
        let header: FeatureHeader = serde_json::from_str(json)?;
        if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported feature format {} v{}",
                header.format, header.version
            )));
        }
        let width = header.nodes * header.bins;
        let mut rdr = csv::Reader::from_reader(reader);
        let mut set = FeatureSet::new(header.stft, header.band.clone());
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 3 + 2 * width {
                return Err(Error::Format(format!(
                    "row has {} columns, expected {}",
                    rec.len(),
                    3 + 2 * width
                )));
            }
            let role: Role = rec[0].parse()?;
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad number {s:?}: {e}")))
            };
            let position = if rec[1].is_empty() {
                None
            } else {
                Some([num(&rec[1])?, num(&rec[2])?])
            };
            let flat = (0..width)
                .map(|j| Ok(Complex64::new(num(&rec[3 + 2 * j])?, num(&rec[4 + 2 * j])?)))
                .collect::<Result<Vec<_>>>()?;
            set.push(role, position, AggregatedRtf::from_flat(header.nodes, header.bins, flat)?);
        }
        if set.rows.len() != header.count {
            return Err(Error::Format(format!(
                "header announces {} rows, found {}",
                header.count,
                set.rows.len()
            )));
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f)
    }
}
