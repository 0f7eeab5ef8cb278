//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::panic;
use std::time::{Duration, Instant};

use common::{argmax_lowest, gaussian, oracle_scores, random_accumulator, rng, stacked_gram};
use layup::checkpoint::{load_accumulator_expecting, save_accumulator};
use layup::feature_io::{read_all, write_stream, Dtype, StreamReader};
use layup::{
    concat_features, generate_stream, memory_report, optimize_lambda, run_cil, run_ocl, universality_fraction,
    ClassifierKind, Error, ErrorCategory, LambdaSearchConfig, ResultMatrix, RidgeClassifier, RunConfig,
    StatAccumulator, SynthConfig,
};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gram_equivalence() -> Outcome {
    let mut r = rng(100);
    let rows: Vec<Vec<f64>> = (0..500).map(|_| (0..64).map(|_| r.random::<f64>()).collect()).collect();
    let start = Instant::now();
    let mut acc = StatAccumulator::new(64, 4, 1).unwrap();
    for (i, x) in rows.iter().enumerate() {
        acc.update_values(x, i % 4).unwrap();
    }
    let elapsed = start.elapsed();
    let oracle = stacked_gram(&rows);
    let worst = acc
        .gram()
        .iter()
        .zip(oracle.iter())
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0, f64::max);
    check(
        worst <= 1e-8 && elapsed < Duration::from_secs(1),
        format!("max rel err {worst:.2e}, {:.1} ms", elapsed.as_secs_f64() * 1e3),
    )
}

fn ridge_oracle() -> Outcome {
    let (acc, _) = random_accumulator(101, 40, 5, 300, 2.0);
    let mut r = rng(102);
    let points: Vec<Vec<f64>> = (0..500).map(|_| gaussian(&mut r, 40)).collect();
    let mut worst = 0.0f64;
    let mut label_mismatches = 0;
    for lambda in [1e-3, 1.0, 1e3] {
        let clf = RidgeClassifier::fit(&acc, lambda).unwrap();
        for x in &points {
            let p = clf.predict_values(x).unwrap();
            let o = oracle_scores(&acc, lambda, x);
            worst = p.scores.iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
            label_mismatches += usize::from(p.label != argmax_lowest(&o));
        }
    }
    check(
        worst <= 1e-6 && label_mismatches == 0,
        format!("max |Δscore| {worst:.2e}, {label_mismatches} label mismatches over 1500 predictions"),
    )
}

fn protocol_equivalence() -> Outcome {
    let start = Instant::now();
    let cfg = SynthConfig {
        layer_dims: vec![32; 6],
        num_classes: 20,
        num_tasks: 5,
        train_per_class: 50,
        informativeness: vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.0],
        separation: 2.0,
        seed: 103,
        ..Default::default()
    };
    let stream = generate_stream(&cfg).unwrap();
    let ocl = run_ocl(&stream, &RunConfig::ocl(6, 1.0)).unwrap();
    let cil = run_cil(&stream, &RunConfig::cil(6).with_lambda(1.0)).unwrap();
    let elapsed = start.elapsed();
    let worst = ocl
        .result_matrix
        .rows()
        .iter()
        .flatten()
        .zip(cil.result_matrix.rows().iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        worst <= 1e-9 && elapsed < Duration::from_secs(10),
        format!("max |ΔR| {worst:.1e}, A_5 {:.3}, {:.2} s", ocl.final_accuracy(), elapsed.as_secs_f64()),
    )
}

/// Class information concentrated in layer L-3 of an 8-layer stream.
fn layer_informativeness(seed: u64) -> SynthConfig {
    let mut informativeness = vec![0.1; 8];
    informativeness[4] = 1.0;
    informativeness[7] = 0.2;
    SynthConfig {
        layer_dims: vec![16; 8],
        num_classes: 20,
        num_tasks: 5,
        train_per_class: 40,
        informativeness,
        separation: 4.0,
        seed,
        ..Default::default()
    }
}

fn intra_layer_benefit() -> Outcome {
    let mut gaps = Vec::new();
    for seed in 0..5 {
        let stream = generate_stream(&layer_informativeness(seed)).unwrap();
        let k6 = run_cil(&stream, &RunConfig::cil(6).with_seed(seed)).unwrap().final_accuracy();
        let k1 = run_cil(&stream, &RunConfig::cil(1).with_seed(seed)).unwrap().final_accuracy();
        gaps.push(k6 - k1);
    }
    let detail = gaps.iter().map(|g| format!("{:+.1}", 100.0 * g)).collect::<Vec<_>>().join(", ");
    check(gaps.iter().all(|&g| g >= 0.10), format!("A_T(k=6) - A_T(k=1) per seed: {detail} points"))
}

fn shared_beats_separate() -> Outcome {
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..5 {
        let cfg = SynthConfig {
            layer_dims: vec![16; 4],
            num_classes: 20,
            num_tasks: 5,
            train_per_class: 40,
            informativeness: vec![0.6; 4],
            coupling: 0.7,
            latent_dim: 8,
            separation: 1.0,
            seed,
            ..Default::default()
        };
        let stream = generate_stream(&cfg).unwrap();
        let base = RunConfig::cil(4).with_lambda(1.0).with_seed(seed);
        let shared = run_cil(&stream, &base).unwrap().final_accuracy();
        let separate = run_cil(&stream, &base.clone().with_classifier(ClassifierKind::EnsembleSeparate))
            .unwrap()
            .final_accuracy();
        wins += usize::from(shared >= separate);
        pairs.push(format!("{shared:.3}/{separate:.3}"));
    }
    check(wins >= 4, format!("shared >= separate on {wins}/5 seeds ({})", pairs.join(", ")))
}

fn lambda_state_preservation() -> Outcome {
    let cfg = SynthConfig {
        layer_dims: vec![8; 3],
        num_classes: 6,
        num_tasks: 2,
        train_per_class: 25,
        informativeness: vec![0.5, 0.7, 1.0],
        seed: 104,
        ..Default::default()
    };
    let stream = generate_stream(&cfg).unwrap();
    let search = LambdaSearchConfig::default().with_seed(7);
    let mut searched = StatAccumulator::new(16, 6, 2).unwrap();
    let mut streamed = StatAccumulator::new(16, 6, 2).unwrap();
    let mut lambdas = Vec::new();
    let mut deterministic = true;
    let mut members = true;
    for task in &stream.train {
        let before = searched.clone();
        let out = optimize_lambda(&mut searched, task, &search, 2).unwrap();
        let mut again = before;
        let out2 = optimize_lambda(&mut again, task, &search, 2).unwrap();
        deterministic &= out == out2 && again == searched;
        members &= search.candidates.contains(&out.best_lambda);
        lambdas.push(out.best_lambda);
        for s in task {
            streamed.update(&concat_features(s, 2).unwrap(), s.label).unwrap();
        }
    }
    let rel = |a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>| (a - b).amax() / b.amax();
    let worst = rel(searched.gram(), streamed.gram()).max(rel(searched.proto_sums(), streamed.proto_sums()));
    check(
        worst <= 1e-10 && deterministic && members && searched.class_counts() == streamed.class_counts(),
        format!("max rel diff {worst:.1e}, λ per task {lambdas:?}, deterministic {deterministic}"),
    )
}

fn brute_forgetting(r: &[Vec<f64>], t: usize) -> f64 {
    (0..t)
        .map(|i| {
            let best = (i..t).map(|tp| r[tp][i]).fold(f64::NEG_INFINITY, f64::max);
            best - r[t][i]
        })
        .sum::<f64>()
        / t as f64
}

fn metrics() -> Outcome {
    let a = ResultMatrix::from_rows(vec![vec![0.9], vec![0.8, 0.9]]).unwrap().average_accuracy(1).unwrap();
    let f = ResultMatrix::from_rows(vec![vec![0.9], vec![0.7, 0.4]]).unwrap().average_forgetting(1).unwrap();
    let mut r = rng(105);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let t = r.random_range(1..10usize);
        let rows: Vec<Vec<f64>> = (1..=t).map(|n| (0..n).map(|_| r.random::<f64>()).collect()).collect();
        let m = ResultMatrix::from_rows(rows.clone()).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            worst = worst.max((m.average_accuracy(i).unwrap() - mean).abs());
            if i > 0 {
                worst = worst.max((m.average_forgetting(i).unwrap() - brute_forgetting(&rows, i)).abs());
            }
        }
    }
    check(
        (a - 0.85).abs() <= 1e-15 && (f - 0.2).abs() <= 1e-15 && worst <= 1e-15,
        format!("A_2 = {a}, F_2 = {f}, max oracle diff {worst:.1e}"),
    )
}

fn memory_accounting() -> Outcome {
    let r = memory_report(6, &[768; 12], 200).unwrap();
    let ranpac = r.baseline("RanPAC").unwrap();
    let ops = ranpac.ops_reduction.unwrap();
    check(
        r.gram_entries == 21_233_664 && ops >= 0.90 && (ranpac.memory_reduction - 0.81).abs() <= 0.01,
        format!(
            "gram entries {}, solve ops {:.3e}, ops reduction {:.1}%, memory reduction {:.1}%",
            r.gram_entries,
            r.solve_ops as f64,
            100.0 * ops,
            100.0 * ranpac.memory_reduction
        ),
    )
}

fn universality() -> Outcome {
    let mut fractions = Vec::new();
    for seed in 0..5 {
        let stream = generate_stream(&layer_informativeness(seed)).unwrap();
        fractions.push(universality_fraction(&stream, 6, &RunConfig::cil(6).with_seed(seed)).unwrap());
    }
    check(
        fractions.iter().all(|&f| f >= 0.8),
        format!("fraction per seed {fractions:?}"),
    )
}

fn format_robustness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        layer_dims: vec![6, 5, 4],
        num_classes: 10,
        num_tasks: 5,
        train_per_class: 100,
        informativeness: vec![0.5; 3],
        seed: 106,
        ..Default::default()
    };
    let stream = generate_stream(&cfg).unwrap();
    let samples: Vec<_> = stream.train.iter().flatten().cloned().collect();
    let path = dir.path().join("s.layf");
    write_stream(&samples, &stream.manifest, &path, Dtype::F32).unwrap();
    let (_, back) = read_all(&path).unwrap();
    let bitwise = back.len() == samples.len()
        && samples.iter().zip(&back).all(|(a, b)| {
            a.label == b.label
                && a.layer_features
                    .iter()
                    .flatten()
                    .zip(b.layer_features.iter().flatten())
                    .all(|(x, y)| (*x as f32).to_bits() == (*y as f32).to_bits())
        });

    let pristine = std::fs::read(&path).unwrap();
    let reject = |bytes: &[u8], want: fn(&Error) -> bool| {
        std::fs::write(&path, bytes).unwrap();
        match StreamReader::open(&path) {
            Err(e) => want(&e) && e.category() == ErrorCategory::Data,
            Ok(_) => false,
        }
    };
    let truncated = reject(&pristine[..pristine.len() - 30], |e| matches!(e, Error::Corruption { .. }));
    let mut magic = pristine.clone();
    magic[..4].copy_from_slice(b"XXXX");
    let bad_magic = reject(&magic, |e| matches!(e, Error::Format { .. }));
    let mut flipped = pristine.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    let bad_checksum = reject(&flipped, |e| matches!(e, Error::Corruption { .. }));

    let ckpt = dir.path().join("acc.layc");
    let mut whole = StatAccumulator::new(9, 10, 2).unwrap();
    let mut first = StatAccumulator::new(9, 10, 2).unwrap();
    for (i, s) in samples.iter().enumerate() {
        let f = concat_features(s, 2).unwrap();
        whole.update(&f, s.label).unwrap();
        if i < 500 {
            first.update(&f, s.label).unwrap();
        }
    }
    save_accumulator(&first, &ckpt).unwrap();
    let mut resumed = load_accumulator_expecting(&ckpt, 9, 10, 2).unwrap();
    for s in &samples[500..] {
        resumed.update(&concat_features(s, 2).unwrap(), s.label).unwrap();
    }
    let resume_err = (resumed.gram() - whole.gram()).amax() / whole.gram().amax();

    check(
        bitwise && truncated && bad_magic && bad_checksum && resume_err <= 1e-12,
        format!(
            "round-trip {bitwise}, truncated {truncated}, bad magic {bad_magic}, bad checksum {bad_checksum}, resume rel err {resume_err:.1e}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("streaming/batch Gram equivalence", gram_equivalence),
        ("ridge oracle equivalence", ridge_oracle),
        ("protocol equivalence", protocol_equivalence),
        ("intra-layer benefit", intra_layer_benefit),
        ("shared beats separate", shared_beats_separate),
        ("lambda-search state preservation", lambda_state_preservation),
        ("metrics", metrics),
        ("memory report", memory_accounting),
        ("universality", universality),
        ("format robustness", format_robustness),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
