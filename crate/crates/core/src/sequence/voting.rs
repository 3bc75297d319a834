use serde::{Deserialize, Serialize};

/// How the channel consensus location is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteMode {
    #[default]
    Median,
    Mean,
}

/// Outcome of one frame's channel vote.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteRecord {
    /// Single-frame best template per channel.
    pub bests: Vec<usize>,
    pub consensus: f64,
    /// Channel dropped for this frame; `None` with fewer than three channels.
    pub excluded: Option<usize>,
    /// More than one channel was equally far from the consensus.
    pub ambiguous: bool,
}

/// Drops the channel whose single-frame hypothesis lies furthest from the
/// consensus of all channels. Ties go to the lowest channel index.
pub fn vote_exclude_channel(bests: &[usize], mode: VoteMode) -> VoteRecord {
    let consensus = consensus(bests, mode);
    if bests.len() < 3 {
        return VoteRecord {
            bests: bests.to_vec(),
            consensus,
            excluded: None,
            ambiguous: false,
        };
    }
    let dist: Vec<f64> = bests.iter().map(|&b| (b as f64 - consensus).abs()).collect();
    let mut worst = 0;
    for (c, &d) in dist.iter().enumerate().skip(1) {
        if d > dist[worst] {
            worst = c;
        }
    }
    let ambiguous = dist.iter().filter(|&&d| d == dist[worst]).count() > 1;
    if ambiguous {
        log::debug!("ambiguous channel vote {bests:?}, excluding channel {worst}");
    }
    VoteRecord {
        bests: bests.to_vec(),
        consensus,
        excluded: Some(worst),
        ambiguous,
    }
}

fn consensus(bests: &[usize], mode: VoteMode) -> f64 {
    if bests.is_empty() {
        return 0.0;
    }
    match mode {
        VoteMode::Mean => bests.iter().map(|&b| b as f64).sum::<f64>() / bests.len() as f64,
        VoteMode::Median => {
            let mut sorted = bests.to_vec();
            sorted.sort_unstable();
            let mid = sorted.len() / 2;
            if sorted.len() % 2 == 1 {
                sorted[mid] as f64
            } else {
                (sorted[mid - 1] as f64 + sorted[mid] as f64) / 2.0
            }
        }
    }
}
