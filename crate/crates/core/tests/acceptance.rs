//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Tolerances and seeds are pinned here.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mpf_core::descriptors::{
    keypoint_distance, ChannelTemplates, Descriptor, DescriptorVector, KeypointSet, Metric,
    TemplateDatabase,
};
use mpf_core::evaluation::{sweep_pr, SyntheticRun, SyntheticWorld};
use mpf_core::fusion::{
    normalize_observation, viterbi_decode, viterbi_decode_naive, EmissionMatrix, TransitionModel,
    EPSILON,
};
use mpf_core::sequence::{
    localize_sequence, vote_exclude_channel, LocalizerConfig, VoteMode, DEFAULT_S_MIN,
};

const VITERBI_INSTANCES: usize = 500;
const VITERBI_MAX_TEMPLATES: usize = 8;
const VITERBI_MAX_LEN: usize = 5;
const VITERBI_BUDGET: Duration = Duration::from_secs(10);

const NORMALIZATION_VECTORS: usize = 1000;
const NORMALIZATION_BUDGET: Duration = Duration::from_secs(1);

const KEYPOINT_TRIPLES: usize = 1000;
const KEYPOINT_TOL: f64 = 1e-12;

const BANDED_INSTANCES: usize = 100;
const BANDED_MAX_TEMPLATES: usize = 64;

const FUSION_SEED: u64 = 1;
const FUSION_MIN_F1: f64 = 0.95;
const SINGLE_MAX_F1: f64 = 0.85;
const FUSION_BUDGET: Duration = Duration::from_secs(60);

const RELOCALIZATION_SEED: u64 = 1;
const REENTRY_FRAME: u64 = 70;
const LATENCY_SLACK: usize = 2;
const FIXED_BASELINE_MIN_LATENCY: usize = 18;

const AGREEMENT_QUALITY_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("viterbi-brute-force-oracle", viterbi_oracle),
        ("observation-normalization-properties", normalization_properties),
        ("keypoint-metric-axioms", keypoint_metric),
        ("banded-equals-naive-viterbi", banded_equivalence),
        ("fusion-benefit-synthetic", fusion_benefit),
        ("dynamic-sequence-latency", relocalization_latency),
        ("channel-voting", voting_suite),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "SKIP full-data-nordland-robotcar: needs external datasets and CNN tensors; run the CLI workflow described in the README"
    );
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn timed<T>(budget: Duration, f: impl FnOnce() -> Result<T, String>) -> Result<(T, Duration), String> {
    let start = Instant::now();
    let value = f()?;
    let elapsed = start.elapsed();
    ensure(elapsed < budget, || format!("took {elapsed:?}, budget {budget:?}"))?;
    Ok((value, elapsed))
}

fn random_model(rng: &mut ChaCha8Rng) -> TransitionModel {
    if rng.random_bool(0.5) {
        TransitionModel::default()
    } else {
        let v_min = rng.random_range(-2..=2);
        TransitionModel::new(v_min, v_min + rng.random_range(0..=4)).unwrap()
    }
}

/// Log emissions; a quarter of instances draw from a coarse grid to force ties.
fn random_emission(rng: &mut ChaCha8Rng, n: usize, tau: usize) -> EmissionMatrix {
    let coarse = rng.random_bool(0.25);
    let columns = (0..tau)
        .map(|_| {
            (0..n)
                .map(|_| {
                    if coarse {
                        -(rng.random_range(0..4) as f64)
                    } else {
                        rng.random_range(EPSILON..1.0 - EPSILON).ln() * rng.random_range(1..=4) as f64
                    }
                })
                .collect()
        })
        .collect();
    EmissionMatrix::from_columns(columns).unwrap()
}

/// Path score accumulated in the decoder's order: start from the first
/// emission, then add the transition and the next emission per step.
fn path_score(e: &EmissionMatrix, model: &TransitionModel, path: &[usize]) -> f64 {
    let mut score = e.get(path[0], 0);
    for t in 1..path.len() {
        let offset = path[t] as i64 - path[t - 1] as i64;
        let trans = if (model.v_min..=model.v_max).contains(&offset) {
            0.0
        } else {
            EPSILON.ln()
        };
        score = (score + trans) + e.get(path[t], t);
    }
    score
}

fn brute_force_best(e: &EmissionMatrix, model: &TransitionModel) -> f64 {
    let (n, tau) = (e.templates(), e.len());
    let mut path = vec![0usize; tau];
    let mut best = f64::NEG_INFINITY;
    loop {
        best = best.max(path_score(e, model, &path));
        let mut i = 0;
        while i < tau {
            path[i] += 1;
            if path[i] < n {
                break;
            }
            path[i] = 0;
            i += 1;
        }
        if i == tau {
            return best;
        }
    }
}

fn viterbi_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0001);
    let (_, elapsed) = timed(VITERBI_BUDGET, || {
        for i in 0..VITERBI_INSTANCES {
            let n = rng.random_range(1..=VITERBI_MAX_TEMPLATES);
            let tau = rng.random_range(1..=VITERBI_MAX_LEN);
            let e = random_emission(&mut rng, n, tau);
            let model = random_model(&mut rng);
            let r = viterbi_decode(&e, &model).map_err(|err| err.to_string())?;
            let oracle = brute_force_best(&e, &model);
            ensure(r.score == oracle, || {
                format!("instance {i} (N={n}, tau={tau}): decoder {} vs enumeration {oracle}", r.score)
            })?;
            let attained = path_score(&e, &model, &r.path);
            ensure(attained == oracle, || {
                format!("instance {i}: decoded path scores {attained}, optimum {oracle}")
            })?;
        }
        Ok(())
    })?;
    Ok(format!("{VITERBI_INSTANCES} instances exact in {elapsed:?}"))
}

fn normalization_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0002);
    let (_, elapsed) = timed(NORMALIZATION_BUDGET, || {
        for i in 0..NORMALIZATION_VECTORS {
            let n = rng.random_range(2..=64);
            let o_thresh = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..0.99) };
            let dist: Vec<f64> = if i % 10 == 0 {
                vec![rng.random_range(0.0..2.0); n]
            } else {
                (0..n).map(|_| rng.random_range(0.0..2.0)).collect()
            };
            let out = normalize_observation(&dist, o_thresh).map_err(|e| e.to_string())?;
            let v = out.values();
            ensure(v.iter().all(|x| (0.001..=0.999).contains(x)), || format!("vector {i}: value out of [0.001, 0.999]"))?;

            let lo = dist.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = dist.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi == lo {
                ensure(out.is_degenerate() && v.iter().all(|&x| x == EPSILON), || {
                    format!("vector {i}: degenerate input not all epsilon")
                })?;
                continue;
            }
            let nearest = dist.iter().position(|&d| d == lo).unwrap();
            ensure(out.best() == nearest, || format!("vector {i}: argmax {} vs nearest {nearest}", out.best()))?;
            for (k, (&d, &o)) in dist.iter().zip(v).enumerate() {
                let raw = (hi - d) / (hi - lo) - EPSILON;
                let floored = raw < o_thresh || raw < EPSILON;
                let expected = if floored { EPSILON } else { raw };
                ensure(o == expected, || format!("vector {i}[{k}]: {o} vs {expected} (raw {raw}, thresh {o_thresh})"))?;
            }
        }
        Ok(())
    })?;
    Ok(format!("{NORMALIZATION_VECTORS} vectors in {elapsed:?}"))
}

fn keypoint_metric() -> Outcome {
    let a = KeypointSet::new(vec![(0, 0)], (8, 8)).unwrap();
    let b = KeypointSet::new(vec![(3, 4)], (8, 8)).unwrap();
    let d = keypoint_distance(&a, &b).map_err(|e| e.to_string())?;
    ensure((d - 5.0).abs() <= KEYPOINT_TOL, || format!("3-4-5 distance {d}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0003);
    for i in 0..KEYPOINT_TRIPLES {
        let maps = rng.random_range(1..=16);
        let (h, w) = (rng.random_range(1..=20usize), rng.random_range(1..=20usize));
        let mut draw = || {
            let coords = (0..maps)
                .map(|_| (rng.random_range(0..w as u32), rng.random_range(0..h as u32)))
                .collect();
            KeypointSet::new(coords, (h, w)).unwrap()
        };
        let (x, y, z) = (draw(), draw(), draw());
        let dist = |p: &KeypointSet, q: &KeypointSet| keypoint_distance(p, q).unwrap();
        ensure(dist(&x, &x) == 0.0, || format!("triple {i}: identity"))?;
        ensure(dist(&x, &y) == dist(&y, &x), || format!("triple {i}: symmetry"))?;
        ensure(dist(&x, &z) <= dist(&x, &y) + dist(&y, &z) + KEYPOINT_TOL, || {
            format!("triple {i}: triangle inequality")
        })?;
    }
    Ok(format!("3-4-5 = {d}; {KEYPOINT_TRIPLES} triples satisfy the axioms"))
}

fn banded_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0004);
    for i in 0..BANDED_INSTANCES {
        let n = rng.random_range(1..=BANDED_MAX_TEMPLATES);
        let tau = rng.random_range(1..=25);
        let e = random_emission(&mut rng, n, tau);
        let model = random_model(&mut rng);
        let banded = viterbi_decode(&e, &model).map_err(|err| err.to_string())?;
        let naive = viterbi_decode_naive(&e, &model).map_err(|err| err.to_string())?;
        ensure(banded == naive, || format!("instance {i} (N={n}, tau={tau}) differs"))?;
    }
    Ok(format!("{BANDED_INSTANCES} instances bit-identical (path, scores, backpointers)"))
}

fn max_f1(run: &SyntheticRun, channels: &[String]) -> Result<f64, String> {
    let decisions = run
        .localize(channels, &LocalizerConfig::default())
        .map_err(|e| e.to_string())?;
    Ok(sweep_pr(&decisions, &run.ground_truth).map_err(|e| e.to_string())?.max_f1())
}

fn fusion_benefit() -> Outcome {
    let ((fused, singles), elapsed) = timed(FUSION_BUDGET, || {
        let run = SyntheticWorld::fusion_benchmark(FUSION_SEED)
            .generate()
            .map_err(|e| e.to_string())?;
        let names: Vec<String> = run.database.channel_names().into_iter().map(String::from).collect();
        let fused = max_f1(&run, &names)?;
        let singles = names
            .iter()
            .map(|n| max_f1(&run, std::slice::from_ref(n)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((fused, singles))
    })?;
    let worst_single = singles.iter().cloned().fold(0.0, f64::max);
    let detail = format!(
        "fused max F1 {fused:.4} (>= {FUSION_MIN_F1}), single-channel max F1 {:?} (each <= {SINGLE_MAX_F1}), {elapsed:?}",
        singles.iter().map(|f| (f * 1e4).round() / 1e4).collect::<Vec<_>>()
    );
    ensure(fused >= FUSION_MIN_F1 && worst_single <= SINGLE_MAX_F1, || detail.clone())?;
    Ok(detail)
}

/// Frames from re-entry up to and including the first accepted correct decision.
fn latency(run: &SyntheticRun, dynamic_length: bool) -> Result<usize, String> {
    let names: Vec<String> = run.database.channel_names().into_iter().map(String::from).collect();
    let config = LocalizerConfig {
        dynamic_length,
        ..LocalizerConfig::default()
    };
    let decisions = run.localize(&names, &config).map_err(|e| e.to_string())?;
    let first = decisions
        .iter()
        .find(|d| d.query_id >= REENTRY_FRAME && d.accepted)
        .ok_or("never accepted after re-entry")?;
    ensure(run.ground_truth.is_match(first.query_id, first.ref_id).unwrap_or(false), || {
        format!("first accepted decision after re-entry (frame {}) is wrong", first.query_id)
    })?;
    Ok((first.query_id - REENTRY_FRAME + 1) as usize)
}

fn relocalization_latency() -> Outcome {
    let world = SyntheticWorld::relocalization(RELOCALIZATION_SEED);
    ensure(
        world.novel.len() == 1
            && world.novel[0].end as u64 == REENTRY_FRAME
            && world.novel[0].end - world.novel[0].start == 30,
        || "scenario is not familiar -> 30 novel -> familiar".into(),
    )?;
    let run = world.generate().map_err(|e| e.to_string())?;
    let dynamic = latency(&run, true)?;
    let fixed = latency(&run, false)?;
    let limit = DEFAULT_S_MIN + LATENCY_SLACK;
    let detail = format!(
        "dynamic length accepts {dynamic} frames after re-entry (<= {limit}), fixed 20-frame window {fixed} (>= {FIXED_BASELINE_MIN_LATENCY})"
    );
    ensure(dynamic <= limit && fixed >= FIXED_BASELINE_MIN_LATENCY, || detail.clone())?;
    Ok(detail)
}

fn identical_channel_world(channels: usize) -> (TemplateDatabase, Vec<(u64, Vec<Descriptor>)>) {
    let mut w = SyntheticWorld::new(0x5EED_0007, 120, 1, 24);
    w.query_frames = 100;
    let run = w.generate().unwrap();
    let base = &run.database.channels()[0];
    let mut db = TemplateDatabase::new(run.database.frame_ids().to_vec());
    for c in 0..channels {
        let vecs: Vec<DescriptorVector> = (0..base.len())
            .map(|k| base.template(k).unwrap().as_vector().unwrap().clone())
            .collect();
        db.add_channel(ChannelTemplates::from_vectors(format!("copy-{c}"), Metric::Cosine, vecs).unwrap())
            .unwrap();
    }
    let queries = run
        .queries
        .into_iter()
        .map(|(id, d)| (id, vec![d[0].clone(); channels]))
        .collect();
    (db, queries)
}

fn voting_suite() -> Outcome {
    let r = vote_exclude_channel(&[100, 102, 101, 500], VoteMode::Median);
    ensure(r.excluded == Some(3), || format!("[100,102,101,500] excluded {:?}", r.excluded))?;

    let (db, queries) = identical_channel_world(4);
    let voting = localize_sequence(&db, &LocalizerConfig::default(), queries.clone()).map_err(|e| e.to_string())?;
    let plain = localize_sequence(
        &db,
        &LocalizerConfig {
            mpf: false,
            ..LocalizerConfig::default()
        },
        queries,
    )
    .map_err(|e| e.to_string())?;
    for (a, b) in voting.iter().zip(&plain) {
        let same = a.template == b.template
            && a.accepted == b.accepted
            && a.seq_len == b.seq_len
            && a.seq_start == b.seq_start
            && (a.quality - b.quality).abs() <= AGREEMENT_QUALITY_TOL * b.quality.abs().max(1.0);
        ensure(same, || format!("agreeing channels: frame {} differs with voting", a.query_id))?;
        ensure(a.excluded_channel == Some(0), || format!("frame {}: tie should exclude channel 0", a.query_id))?;
    }

    let run = SyntheticWorld::fusion_benchmark(FUSION_SEED).generate().map_err(|e| e.to_string())?;
    let names: Vec<String> = run.database.channel_names().into_iter().map(String::from).collect();
    for k in 2..=names.len() {
        let decisions = run.localize(&names[..k], &LocalizerConfig::default()).map_err(|e| e.to_string())?;
        let expected_excluded = k >= 3;
        ensure(
            decisions.iter().all(|d| d.excluded_channel.is_some() == expected_excluded),
            || format!("{k} channels: exclusion count per frame wrong"),
        )?;
    }
    Ok(format!(
        "outlier excluded; agreeing channels decide identically with and without voting over {} frames; one exclusion per frame with >= 3 channels, none with 2",
        voting.len()
    ))
}
