//! Shared test-instance generator: random attention problems with 1..=3
//! subjects whose text spans and motion masks are pairwise disjoint, the
//! regime the multi-subject composition is defined for.
#![allow(dead_code)] // compiled into several test targets with different needs

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tsa_core::layout::{frames_to_token_ranges, FrameInterval, SegmentationPlan};
use tsa_core::modulation::SubjectModulation;
use tsa_core::{ModulationParams, Span, Tensor2, VideoGrid};

pub struct Instance {
    pub seed: u64,
    pub q: Tensor2,
    pub k: Tensor2,
    pub d: usize,
    pub grid: VideoGrid,
    pub subjects: Vec<SubjectModulation>,
    pub subject_spans: Vec<Span>,
    pub params: ModulationParams,
}

pub fn gaussian_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2 {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Tensor2::new(rows, cols, data).unwrap()
}

fn distinct_sorted(
    rng: &mut ChaCha8Rng,
    range: std::ops::Range<usize>,
    count: usize,
) -> Vec<usize> {
    let mut pool: Vec<usize> = range.collect();
    pool.shuffle(rng);
    let mut picked: Vec<usize> = pool.into_iter().take(count).collect();
    picked.sort_unstable();
    picked
}

fn random_partition(rng: &mut ChaCha8Rng, frames: usize, parts: usize) -> SegmentationPlan {
    let cuts = distinct_sorted(rng, 1..frames, parts - 1);
    let mut intervals = Vec::with_capacity(parts);
    let mut start = 0;
    for &cut in &cuts {
        intervals.push(FrameInterval::new(start, cut));
        start = cut;
    }
    intervals.push(FrameInterval::new(start, frames));
    SegmentationPlan::new(intervals)
}

pub fn random_instance(seed: u64, max_subjects: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=32usize);
    let height = rng.random_range(1..=4usize);
    let width = rng.random_range(1..=4usize);

    let n_subjects = rng.random_range(1..=max_subjects);
    let events_per_subject: Vec<usize> = (0..n_subjects)
        .map(|_| rng.random_range(1..=4usize))
        .collect();
    let total_spans: usize = events_per_subject.iter().map(|e| e + 1).sum();

    let max_events = *events_per_subject.iter().max().unwrap();
    let frames = rng.random_range(max_events..=16usize);
    let grid = VideoGrid::new(frames, height, width);
    let n = grid.tokens();

    let m = rng.random_range((2 * total_spans).max(6)..=64usize);

    // 2·total_spans distinct points in [0, m) pair up into disjoint spans.
    let points = distinct_sorted(&mut rng, 0..m, 2 * total_spans);
    let mut spans = points.chunks_exact(2).map(|c| Span::new(c[0], c[1]));

    // Disjoint masks: each token belongs to at most one subject.
    let owners: Vec<usize> = (0..n).map(|_| rng.random_range(0..=n_subjects)).collect();

    let mut subjects = Vec::with_capacity(n_subjects);
    let mut subject_spans = Vec::with_capacity(n_subjects);
    for (s, &events) in events_per_subject.iter().enumerate() {
        let subject_span = spans.next().unwrap();
        let event_spans: Vec<Span> = (0..events).map(|_| spans.next().unwrap()).collect();
        let plan = random_partition(&mut rng, frames, events);
        let token_ranges = frames_to_token_ranges(&plan, &grid);
        let mask: Vec<u8> = owners.iter().map(|&o| u8::from(o == s + 1)).collect();
        subjects.push(SubjectModulation::new(mask, token_ranges, event_spans));
        subject_spans.push(subject_span);
    }

    let q = gaussian_tensor(&mut rng, n, d);
    let k = gaussian_tensor(&mut rng, m, d);

    Instance {
        seed,
        q,
        k,
        d,
        grid,
        subjects,
        subject_spans,
        params: ModulationParams::default(),
    }
}

/// Naive `f64` dot-product row of `Q·Kᵀ`, used as a test-side oracle.
pub fn naive_logit_row(q: &Tensor2, k: &Tensor2, x: usize) -> Vec<f32> {
    (0..k.rows())
        .map(|y| {
            let mut acc = 0.0f64;
            for i in 0..q.cols() {
                acc += f64::from(q.get(x, i)) * f64::from(k.get(y, i));
            }
            acc as f32
        })
        .collect()
}

pub fn max_abs_diff(a: &Tensor2, b: &Tensor2) -> f32 {
    assert_eq!(a.rows(), b.rows());
    assert_eq!(a.cols(), b.cols());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}
