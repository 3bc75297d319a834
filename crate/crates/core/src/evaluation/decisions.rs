//! Per-frame decision log, one CSV row per query frame.
//!
//! Columns: `query_id,matched_ref_id,template_index,avg_quality,accepted,
//! seq_len,seq_start,excluded_channel,best:<channel>...`. `excluded_channel`
//! holds a channel name or is empty.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::sequence::MatchDecision;

const FIXED_COLUMNS: [&str; 8] = [
    "query_id",
    "matched_ref_id",
    "template_index",
    "avg_quality",
    "accepted",
    "seq_len",
    "seq_start",
    "excluded_channel",
];
const BEST_PREFIX: &str = "best:";

pub fn write_decisions<W: Write>(
    out: W,
    channels: &[impl AsRef<str>],
    decisions: &[MatchDecision],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(channels.iter().map(|c| format!("{BEST_PREFIX}{}", c.as_ref())));
    w.write_record(&header)?;
    for d in decisions {
        if d.channel_bests.len() != channels.len() {
            return Err(Error::DimensionMismatch {
                expected: channels.len(),
                actual: d.channel_bests.len(),
            });
        }
        let excluded = match d.excluded_channel {
            Some(c) => channels
                .get(c)
                .ok_or_else(|| Error::InvalidInput(format!("excluded channel {c} out of range")))?
                .as_ref()
                .to_string(),
            None => String::new(),
        };
        let mut row = vec![
            d.query_id.to_string(),
            d.ref_id.to_string(),
            d.template.to_string(),
            d.quality.to_string(),
            d.accepted.to_string(),
            d.seq_len.to_string(),
            d.seq_start.to_string(),
            excluded,
        ];
        row.extend(d.channel_bests.iter().map(usize::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a decision log back; returns the channel names and the decisions.
pub fn read_decisions<R: Read>(input: R) -> Result<(Vec<String>, Vec<MatchDecision>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.len() < FIXED_COLUMNS.len()
        || header.iter().zip(FIXED_COLUMNS).any(|(h, f)| h != f)
    {
        return Err(Error::InvalidInput(format!(
            "decision log header must start with {}",
            FIXED_COLUMNS.join(",")
        )));
    }
    let channels = header
        .iter()
        .skip(FIXED_COLUMNS.len())
        .map(|h| {
            h.strip_prefix(BEST_PREFIX)
                .map(str::to_string)
                .ok_or_else(|| Error::InvalidInput(format!("unexpected column {h:?}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut decisions = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |col: &str, v: &str| Error::InvalidInput(format!("row {row}: bad {col} {v:?}"));
        macro_rules! parse {
            ($i:expr) => {
                field($i).parse().map_err(|_| bad(FIXED_COLUMNS[$i], field($i)))?
            };
        }
        let excluded = match field(7) {
            "" => None,
            name => Some(
                channels
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| bad("excluded_channel", name))?,
            ),
        };
        let channel_bests = (FIXED_COLUMNS.len()..rec.len())
            .map(|i| field(i).parse().map_err(|_| bad("best", field(i))))
            .collect::<Result<Vec<usize>>>()?;
        decisions.push(MatchDecision {
            query_id: parse!(0),
            ref_id: parse!(1),
            template: parse!(2),
            quality: parse!(3),
            accepted: parse!(4),
            seq_len: parse!(5),
            seq_start: parse!(6),
            excluded_channel: excluded,
            channel_bests,
        });
    }
    Ok((channels, decisions))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let decisions = vec![
            MatchDecision {
                query_id: 3,
                template: 1,
                ref_id: 10,
                quality: 0.012_345_678_901_234_5,
                accepted: true,
                seq_len: 7,
                seq_start: 14,
                excluded_channel: Some(1),
                channel_bests: vec![1, 90, 2],
            },
            MatchDecision {
                query_id: 4,
                template: 0,
                ref_id: 0,
                quality: 3.5,
                accepted: false,
                seq_len: 20,
                seq_start: 0,
                excluded_channel: None,
                channel_bests: vec![0, 0, 0],
            },
        ];
        let names = ["sad", "hog", "cnn-pyramid"];
        let mut buf = Vec::new();
        write_decisions(&mut buf, &names, &decisions).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "query_id,matched_ref_id,template_index,avg_quality,accepted,seq_len,seq_start,excluded_channel,best:sad,best:hog,best:cnn-pyramid\n"
        ));
        let (channels, back) = read_decisions(buf.as_slice()).unwrap();
        assert_eq!(channels, names);
        assert_eq!(back, decisions);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_decisions("a,b\n1,2\n".as_bytes()).is_err());
    }
}
