//! `tsa bench`: wall-time comparison of vanilla attention, the fused
//! modulated path, and the dense reference on a synthetic instance.

use std::time::Instant;

use tsa_core::harness::{synth_inputs, SynthSpec};
use tsa_core::modulation::{dense_oracle, modulate, SubjectModulation, ORACLE_CELL_LIMIT};
use tsa_core::motion::motion_mask_from_logits;
use tsa_core::tensor::{matmul_qk, row_softmax};
use tsa_core::VideoGrid;

use crate::config::Config;
use crate::{BenchArgs, CliError};

const BENCH_EVENTS: usize = 4;

pub fn run(args: BenchArgs, config: &Config) -> Result<(), CliError> {
    let n = args.n.or(config.bench.n).unwrap_or(4096);
    let m = args.m.or(config.bench.m).unwrap_or(128);
    let d = args.d.or(config.bench.d).unwrap_or(64);
    let reps = args.reps.or(config.bench.reps).unwrap_or(20).max(1);
    let seed = args.seed.or(config.bench.seed).unwrap_or(0);

    if !n.is_multiple_of(64) || n / 64 < BENCH_EVENTS {
        return Err(CliError::Usage(format!(
            "--n must be a multiple of 64 with at least {} frames (8x8 frames), got {n}",
            BENCH_EVENTS
        )));
    }
    if m < BENCH_EVENTS + 2 {
        return Err(CliError::Usage(format!(
            "--m must be at least {}",
            BENCH_EVENTS + 2
        )));
    }

    let spec = SynthSpec {
        seed,
        grid: VideoGrid::new(n / 64, 8, 8),
        text_tokens: m,
        dim: d,
        heads: 1,
        events: BENCH_EVENTS,
        alpha: 0.5,
        sigma: 1.0,
        subject_strength: 2.0,
    };
    let instance = synth_inputs(&spec).map_err(CliError::data)?;
    let (q, k) = (&instance.heads[0].q, &instance.heads[0].k);
    let layout = &instance.layout;
    let params = layout.params;

    let logits = matmul_qk(q, k).map_err(CliError::data)?;
    let mask = motion_mask_from_logits(
        &logits,
        d,
        layout.text.subjects[0].subject_span,
        spec.grid,
        params.kernel,
    )
    .map_err(CliError::data)?;
    let subject =
        SubjectModulation::from_layout(layout, 0, mask.bits().to_vec()).map_err(CliError::data)?;
    let subjects = std::slice::from_ref(&subject);
    let sqrt_d = (d as f64).sqrt() as f32;

    let mut vanilla_times = Vec::with_capacity(reps);
    let mut fused_times = Vec::with_capacity(reps);
    let mut dense_times = Vec::with_capacity(reps);
    let dense_feasible = n * m <= ORACLE_CELL_LIMIT;
    for _ in 0..reps {
        let t = Instant::now();
        let a = row_softmax(&matmul_qk(q, k).map_err(CliError::data)?.map(|v| v / sqrt_d));
        vanilla_times.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(a);

        let t = Instant::now();
        let a = modulate(q, k, subjects, &params).map_err(CliError::data)?;
        fused_times.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(a);

        if dense_feasible {
            let t = Instant::now();
            let a = dense_oracle(q, k, subjects, &params).map_err(CliError::data)?;
            dense_times.push(t.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(a);
        }
    }

    let vanilla_ms = median(&mut vanilla_times);
    let fused_ms = median(&mut fused_times);
    let dense_ms = dense_feasible.then(|| median(&mut dense_times));

    let fused_over_vanilla = fused_ms / vanilla_ms;
    let dense_over_fused = dense_ms.map(|d| d / fused_ms);

    if args.json {
        let report = serde_json::json!({
            "n": n,
            "m": m,
            "d": d,
            "reps": reps,
            "seed": seed,
            "masked_tokens": mask.count_ones(),
            "vanilla_ms": vanilla_ms,
            "fused_ms": fused_ms,
            "dense_ms": dense_ms,
            "fused_over_vanilla": fused_over_vanilla,
            "dense_over_fused": dense_over_fused,
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        println!(
            "bench n={n} m={m} d={d} reps={reps} seed={seed} masked={}",
            mask.count_ones()
        );
        println!("{:<24}{:>12}", "path", "median ms");
        println!("{:<24}{:>12.3}", "vanilla attention", vanilla_ms);
        println!("{:<24}{:>12.3}", "fused modulated", fused_ms);
        match dense_ms {
            Some(ms) => println!("{:<24}{:>12.3}", "dense reference", ms),
            None => println!("{:<24}{:>12}", "dense reference", "skipped"),
        }
        println!("fused/vanilla ratio: {fused_over_vanilla:.3}");
        if let Some(r) = dense_over_fused {
            println!("dense/fused ratio:   {r:.3}");
        }
    }
    Ok(())
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}
