use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundTruthMode {
    /// Query frame ids map to reference frame ids; tolerance in frames.
    FrameOffset,
    /// Planar positions per frame; tolerance in meters.
    Metric,
}

impl FromStr for GroundTruthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame-offset" => Ok(Self::FrameOffset),
            "metric" => Ok(Self::Metric),
            other => Err(Error::GroundTruth(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Correspondence {
    /// `None` marks a query frame with no counterpart in the reference traverse.
    FrameOffset(BTreeMap<u64, Option<u64>>),
    Metric {
        query: BTreeMap<u64, [f64; 2]>,
        reference: BTreeMap<u64, [f64; 2]>,
    },
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    tolerance: f64,
    correspondence: Correspondence,
}

impl GroundTruth {
    pub fn frame_offset(
        pairs: impl IntoIterator<Item = (u64, Option<u64>)>,
        tolerance: f64,
    ) -> Result<Self> {
        check_tolerance(tolerance)?;
        let mut map = BTreeMap::new();
        let mut last = None;
        for (q, r) in pairs {
            if last.is_some_and(|l| q <= l) {
                return Err(Error::GroundTruth(format!(
                    "query ids must be strictly increasing, {q} follows {}",
                    last.unwrap()
                )));
            }
            last = Some(q);
            map.insert(q, r);
        }
        Ok(Self {
            tolerance,
            correspondence: Correspondence::FrameOffset(map),
        })
    }

    pub fn metric(
        query: impl IntoIterator<Item = (u64, [f64; 2])>,
        reference: impl IntoIterator<Item = (u64, [f64; 2])>,
        tolerance: f64,
    ) -> Result<Self> {
        check_tolerance(tolerance)?;
        let query = collect_coords(query, "query")?;
        let reference = collect_coords(reference, "reference")?;
        Ok(Self {
            tolerance,
            correspondence: Correspondence::Metric { query, reference },
        })
    }

    pub fn mode(&self) -> GroundTruthMode {
        match self.correspondence {
            Correspondence::FrameOffset(_) => GroundTruthMode::FrameOffset,
            Correspondence::Metric { .. } => GroundTruthMode::Metric,
        }
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Whether reporting reference frame `ref_id` for query frame `query_id`
    /// is correct.
    pub fn is_match(&self, query_id: u64, ref_id: u64) -> Result<bool> {
        match &self.correspondence {
            Correspondence::FrameOffset(map) => Ok(match lookup(map, query_id)? {
                Some(truth) => truth.abs_diff(ref_id) as f64 <= self.tolerance,
                None => false,
            }),
            Correspondence::Metric { query, reference } => {
                let q = lookup(query, query_id)?;
                let r = reference.get(&ref_id).ok_or_else(|| {
                    Error::GroundTruth(format!("no coordinates for reference frame {ref_id}"))
                })?;
                Ok(planar_distance(q, r) <= self.tolerance)
            }
        }
    }

    /// Whether any reference frame is a correct answer for `query_id`; false
    /// for genuinely novel places.
    pub fn has_true_match(&self, query_id: u64) -> Result<bool> {
        match &self.correspondence {
            Correspondence::FrameOffset(map) => Ok(lookup(map, query_id)?.is_some()),
            Correspondence::Metric { query, reference } => {
                let q = lookup(query, query_id)?;
                Ok(reference
                    .values()
                    .any(|r| planar_distance(q, r) <= self.tolerance))
            }
        }
    }

    pub fn contains_query(&self, query_id: u64) -> bool {
        match &self.correspondence {
            Correspondence::FrameOffset(map) => map.contains_key(&query_id),
            Correspondence::Metric { query, .. } => query.contains_key(&query_id),
        }
    }

    /// Writes the frame-offset correspondence as `query_id,ref_id` CSV, with
    /// an empty `ref_id` for novel query frames.
    pub fn write_frame_offset_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let Correspondence::FrameOffset(map) = &self.correspondence else {
            return Err(Error::GroundTruth("not a frame-offset ground truth".into()));
        };
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["query_id", "ref_id"])?;
        for (q, r) in map {
            w.write_record([q.to_string(), r.map(|r| r.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_tolerance(tolerance: f64) -> Result<()> {
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(Error::GroundTruth(format!(
            "tolerance must be nonnegative, got {tolerance}"
        )));
    }
    Ok(())
}

fn lookup<V>(map: &BTreeMap<u64, V>, id: u64) -> Result<&V> {
    map.get(&id)
        .ok_or_else(|| Error::GroundTruth(format!("no ground truth for query frame {id}")))
}

fn planar_distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn collect_coords(
    rows: impl IntoIterator<Item = (u64, [f64; 2])>,
    which: &str,
) -> Result<BTreeMap<u64, [f64; 2]>> {
    let mut map = BTreeMap::new();
    let mut last = None;
    for (id, xy) in rows {
        if !xy.iter().all(|v| v.is_finite()) {
            return Err(Error::GroundTruth(format!(
                "{which} frame {id} has non-finite coordinates"
            )));
        }
        if last.is_some_and(|l| id <= l) {
            return Err(Error::GroundTruth(format!(
                "{which} frame ids must be strictly increasing at {id}"
            )));
        }
        last = Some(id);
        map.insert(id, xy);
    }
    Ok(map)
}

/// Loads ground truth from CSV.
///
/// Frame-offset mode reads `query_id,ref_id` from `path` (empty `ref_id`
/// marks a novel query frame). Metric mode reads `frame_id,x,y` for the query
/// traverse from `path` and for the reference traverse from `reference_path`.
pub fn load_ground_truth(
    path: impl AsRef<Path>,
    reference_path: Option<&Path>,
    mode: GroundTruthMode,
    tolerance: f64,
) -> Result<GroundTruth> {
    match mode {
        GroundTruthMode::FrameOffset => {
            let mut rdr = open_csv(path.as_ref(), &["query_id", "ref_id"])?;
            let mut pairs = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                let q = parse_id(rec.get(0), "query_id")?;
                let r = match rec.get(1).map(str::trim) {
                    None | Some("") => None,
                    Some(v) => Some(parse_id(Some(v), "ref_id")?),
                };
                pairs.push((q, r));
            }
            GroundTruth::frame_offset(pairs, tolerance)
        }
        GroundTruthMode::Metric => {
            let reference_path = reference_path.ok_or_else(|| {
                Error::GroundTruth("metric mode needs reference coordinates".into())
            })?;
            let query = read_coords(path.as_ref())?;
            let reference = read_coords(reference_path)?;
            GroundTruth::metric(query, reference, tolerance)
        }
    }
}

fn open_csv(path: &Path, columns: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::GroundTruth(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    for (i, col) in columns.iter().enumerate() {
        if headers.get(i) != Some(*col) {
            return Err(Error::GroundTruth(format!(
                "{}: expected column {i} to be {col:?}, header is {:?}",
                path.display(),
                headers.iter().collect::<Vec<_>>()
            )));
        }
    }
    Ok(rdr)
}

fn parse_id(field: Option<&str>, name: &str) -> Result<u64> {
    let field = field.ok_or_else(|| Error::GroundTruth(format!("missing {name}")))?;
    field
        .trim()
        .parse()
        .map_err(|_| Error::GroundTruth(format!("bad {name} {field:?}")))
}

fn read_coords(path: &Path) -> Result<Vec<(u64, [f64; 2])>> {
    let mut rdr = open_csv(path, &["frame_id", "x", "y"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = parse_id(rec.get(0), "frame_id")?;
        let mut xy = [0.0; 2];
        for (slot, col) in xy.iter_mut().zip(1..=2) {
            let field = rec
                .get(col)
                .filter(|f| !f.is_empty())
                .ok_or_else(|| Error::GroundTruth(format!("frame {id}: missing coordinate")))?;
            *slot = field
                .parse()
                .map_err(|_| Error::GroundTruth(format!("frame {id}: bad coordinate {field:?}")))?;
        }
        out.push((id, xy));
    }
    Ok(out)
}
