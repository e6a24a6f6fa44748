//! Acceptance suite. Run with `cargo test -p cspine-core --test acceptance`.
//! Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use cspine_core::eval::{bench_inference, majority_baseline, BenchOptions};
use cspine_core::features::{EmbeddingIndex, HashedFeaturizerConfig};
use cspine_core::mtl::{backward, forward, joint_loss, mode_loss, Example, MtlParams, TaskLogits, TrainMode};
use cspine_core::pipeline::{compare_single_multitask, featurize_bundles, hashed_examples, segment_corpus, TrialConfig};
use cspine_core::segmenter::{audit_grouping, split_sentences, tag_text, GroupingRuleConfig};
use cspine_core::similarity::{
    distance_matrix, estimate_diameter, slice_conditionals, sliced_w2, upper_bound, Cloud, SwConfig,
};
use cspine_core::synth::{generate_corpus, label_counts, reference_marginals, GeneratorConfig, SynthCorpus};
use cspine_core::{eval, MotionSegment, PathologyTask, Report, TaskLabels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = (bool, String);

fn all_modes() -> [TrainMode; 4] {
    [
        TrainMode::SingleTask(PathologyTask::Disc),
        TrainMode::Multitask,
        TrainMode::AdapterSingle(PathologyTask::Foraminal),
        TrainMode::AdapterMultitask,
    ]
}

fn joint_loss_closed_form() -> Outcome {
    let oracle = 2.0 * 3f64.ln() + 2.0 * 2f64.ln();
    let mut worst: f64 = 0.0;
    for labels in [[0, 0, 0, 0], [2, 1, 1, 0], [1, 2, 0, 1]] {
        let l = joint_loss(&TaskLogits::zeros(), &TaskLabels(labels)).unwrap();
        worst = worst.max((l - 3.583519).abs()).max((l - oracle).abs());
    }
    (worst < 1e-6, format!("uniform-logit joint loss max error {worst:.2e}"))
}

fn batch_loss(p: &MtlParams, batch: &[Example]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let active = p.mode.active_tasks();
    batch
        .iter()
        .map(|e| mode_loss(&forward(p, &e.x, false, &mut rng).unwrap(), &e.labels, active).unwrap())
        .sum::<f64>()
        / batch.len() as f64
}

fn gradient_check() -> Outcome {
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch: Vec<Example> = (0..5)
        .map(|i| Example {
            x: (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
            labels: TaskLabels([i % 3, (i + 1) % 3, i % 2, (i + 1) % 2]),
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut frozen_ok = true;
    let mut checked = 0;
    for mode in all_modes() {
        let params = MtlParams::init(mode, 6, 5, 0.0, 0.3, 1.5, &mut rng);
        let (_, grads) = backward(&params, &batch, false, &mut rng).unwrap();
        let mask = params.trainable_mask();
        let grad_tensors: Vec<Vec<f64>> = grads.tensors().into_iter().map(|(_, t)| t.to_vec()).collect();
        for (k, trainable) in mask.iter().enumerate() {
            if !trainable {
                frozen_ok &= grad_tensors[k].iter().all(|&g| g == 0.0);
                continue;
            }
            for j in 0..grad_tensors[k].len() {
                let mut plus = params.clone();
                plus.weights.tensors_mut()[k][j] += h;
                let mut minus = params.clone();
                minus.weights.tensors_mut()[k][j] -= h;
                let numeric = (batch_loss(&plus, &batch) - batch_loss(&minus, &batch)) / (2.0 * h);
                let analytic = grad_tensors[k][j];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
        if mode.trunk_frozen() {
            frozen_ok &= grads.trunk.weight.iter().chain(&grads.trunk.bias).all(|&g| g == 0.0);
        }
    }
    (
        worst < 1e-4 && frozen_ok,
        format!("{checked} coordinates over 4 modes, max relative error {worst:.2e}, frozen trunk grads zero: {frozen_ok}"),
    )
}

fn mtl_parity(corpus: &SynthCorpus) -> Outcome {
    let segmented = segment_corpus(&corpus.reports, &corpus.bundles, &GroupingRuleConfig::default()).unwrap();
    let examples = hashed_examples(&segmented.bundles, &HashedFeaturizerConfig::default()).unwrap();
    let report = compare_single_multitask(&examples, &TrialConfig::default()).unwrap();
    let rows = report.rows(false);
    println!("{}", eval::format_f1_table(&rows));
    println!("majority baseline: {:?}", report.baseline.map(|b| (b * 1000.0).round() / 1000.0));
    let mut ok = true;
    let mut detail = Vec::new();
    for t in 0..4 {
        let (s, m, b) = (report.single[t].mean, report.multitask[t].mean, report.baseline[t]);
        ok &= (s - m).abs() <= 0.05 && s >= b + 0.10 && m >= b + 0.10;
        detail.push(format!("{} |Δ|={:.3} margin={:.3}", PathologyTask::ALL[t], (s - m).abs(), s.min(m) - b));
    }
    (ok, format!("5 seeds, {} test instances; {}", report.test_instances, detail.join(", ")))
}

fn inference_speedup(corpus: &SynthCorpus) -> Outcome {
    let feat = HashedFeaturizerConfig::default();
    let inputs: Vec<Vec<f64>> = hashed_examples(&corpus.bundles[..1000], &feat).unwrap().into_iter().map(|e| e.x).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ratios = Vec::new();
    for (multi, single) in [
        (TrainMode::Multitask, TrainMode::SingleTask as fn(PathologyTask) -> TrainMode),
        (TrainMode::AdapterMultitask, TrainMode::AdapterSingle),
    ] {
        let mt = MtlParams::init(multi, feat.dim, 256, 0.5, 1e-5, 1.0, &mut rng);
        let singles = PathologyTask::ALL.map(|t| MtlParams::init(single(t), feat.dim, 256, 0.5, 1e-5, 1.0, &mut rng));
        let [a, b] = bench_inference(&mt, &singles, &inputs, BenchOptions::default()).unwrap();
        println!("{}", eval::format_bench_table(&[a.clone(), b.clone()]));
        ratios.push(b.wall_seconds / a.wall_seconds);
    }
    (
        ratios.iter().all(|&r| r >= 3.0),
        format!("1000 inputs, median of 5: full ratio {:.2}, adapter ratio {:.2}", ratios[0], ratios[1]),
    )
}

fn sliced_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = SwConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for d in [2usize, 8, 768] {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let a = Cloud::from_rows(&[x.clone(), x.clone()]).unwrap();
        let b = Cloud::from_rows(&[y.clone(), y.clone()]).unwrap();
        let est = sliced_w2(&a, &b, &config).unwrap().estimate;
        let mut oracle_rng = ChaCha8Rng::seed_from_u64(99);
        let mut acc = 0.0;
        for _ in 0..10_000 {
            let theta: Vec<f64> = (0..d).map(|_| oracle_rng.sample(StandardNormal)).collect();
            let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            let proj: f64 = theta.iter().zip(x.iter().zip(&y)).map(|(t, (a, b))| t * (a - b)).sum::<f64>() / norm;
            acc += proj * proj;
        }
        let oracle = (acc / 10_000.0).sqrt();
        let rel = (est - oracle).abs() / oracle;
        ok &= rel < 0.10;
        lines.push(format!("d={d} rel {rel:.3}"));
    }
    let base: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
    let shift = 2.75;
    let a = Cloud::from_rows(&base.iter().map(|v| vec![*v]).collect::<Vec<_>>()).unwrap();
    let b = Cloud::from_rows(&base.iter().map(|v| vec![v + shift]).collect::<Vec<_>>()).unwrap();
    let err = (sliced_w2(&a, &b, &config).unwrap().estimate - shift).abs();
    ok &= err <= 1e-12;
    lines.push(format!("1-D translation error {err:.1e}"));
    (ok, lines.join(", "))
}

fn random_cloud(rng: &mut ChaCha8Rng, d: usize) -> Cloud {
    let n = rng.random_range(2..=50);
    let offset: f64 = rng.random_range(-2.0..2.0);
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| (0..d).map(|_| offset + rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    Cloud::from_rows(&rows).unwrap()
}

fn metric_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures: HashMap<&str, usize> = HashMap::new();
    for i in 0..1000 {
        let d = rng.random_range(1..=16);
        let config = SwConfig {
            seed: i,
            ..SwConfig::default()
        };
        let (a, b, c) = (random_cloud(&mut rng, d), random_cloud(&mut rng, d), random_cloud(&mut rng, d));
        let ab = sliced_w2(&a, &b, &config).unwrap();
        let ba = sliced_w2(&b, &a, &config).unwrap();
        if ab.estimate.to_bits() != ba.estimate.to_bits() || ab.stderr.to_bits() != ba.stderr.to_bits() {
            *failures.entry("symmetry").or_default() += 1;
        }
        if !(ab.estimate >= 0.0) {
            *failures.entry("non-negativity").or_default() += 1;
        }
        if sliced_w2(&a, &a, &config).unwrap().estimate != 0.0 {
            *failures.entry("identity").or_default() += 1;
        }
        let bc = sliced_w2(&b, &c, &config).unwrap();
        let ac = sliced_w2(&a, &c, &config).unwrap();
        let pooled = (ab.stderr.powi(2) + bc.stderr.powi(2) + ac.stderr.powi(2)).sqrt();
        if ac.estimate > ab.estimate + bc.estimate + 3.0 * pooled {
            *failures.entry("triangle").or_default() += 1;
        }
        let s: f64 = rng.random_range(-4.0..4.0);
        let scaled = sliced_w2(&a.scaled(s), &b.scaled(s), &config).unwrap().estimate;
        if (scaled - s.abs() * ab.estimate).abs() > 1e-9 * ab.estimate.max(1.0) {
            *failures.entry("dilation").or_default() += 1;
        }
    }
    let mut f: Vec<String> = failures.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    f.sort();
    (failures.is_empty(), format!("1000 random triples, failures [{}]", f.join(", ")))
}

fn bound_property(corpus: &SynthCorpus) -> Outcome {
    let feat = HashedFeaturizerConfig::default();
    let records = featurize_bundles(&corpus.bundles, &feat).unwrap();
    let index = EmbeddingIndex::new(records).unwrap();
    let clouds = slice_conditionals(&corpus.bundles, &index, true).unwrap();
    let matrix = distance_matrix(&clouds, &SwConfig::default()).unwrap();
    let refs: Vec<&Cloud> = clouds.iter().map(|c| &c.points).collect();
    let diameter = estimate_diameter(&refs).unwrap();
    let bound = upper_bound(diameter, 1.0).unwrap();
    let max = matrix.max_value().unwrap();
    let cells_ok = matrix.values.iter().flatten().flatten().all(|&v| v <= bound);
    let reported_ok = upper_bound(59.4, 1.0).unwrap() == 59.4;
    (
        cells_ok && reported_ok,
        format!(
            "{} clouds, largest cell {max:.4} <= diameter bound {bound:.4}; upper_bound(59.4, 1) exact: {reported_ok}",
            clouds.len()
        ),
    )
}

fn segmenter_fidelity() -> Outcome {
    let fixture = include_str!("fixtures/segment_variants.tsv");
    let (mut total, mut exact) = (0, 0);
    for line in fixture.lines().filter(|l| !l.is_empty()) {
        let (raw, canonical) = line.split_once('\t').unwrap();
        let expected: MotionSegment = canonical.parse().unwrap();
        for context in [raw.to_string(), format!("Mild stenosis at {raw}."), format!("{raw}: Disc bulge.")] {
            total += 1;
            let found: Vec<MotionSegment> = tag_text(&context).into_iter().map(|m| m.canonical).collect();
            if found == [expected] {
                exact += 1;
            }
        }
    }
    let f1 = ocr_mention_f1();
    (
        exact == total && f1 >= 0.9,
        format!("variants {exact}/{total} exact, OCR mention F1 {f1:.3}"),
    )
}

/// Micro F1 of the canonical mentions found in noised text against those of
/// the clean text, matched as per-report multisets. Characters are corrupted
/// at a total rate of 0.05.
fn ocr_mention_f1() -> f64 {
    let mut config = GeneratorConfig {
        n_reports: 300,
        ocr_fraction: 1.0,
        seed: 5,
        ..GeneratorConfig::default()
    };
    config.noise.char_sub_rate = 0.04;
    config.noise.char_drop_rate = 0.01;
    let corpus = generate_corpus(&config).unwrap();
    let (mut tp, mut gold_n, mut pred_n) = (0usize, 0usize, 0usize);
    for (i, r) in corpus.reports.iter().enumerate() {
        let count = |text: &str| {
            let mut m: HashMap<MotionSegment, usize> = HashMap::new();
            tag_text(text).into_iter().for_each(|x| *m.entry(x.canonical).or_default() += 1);
            m
        };
        let gold = count(corpus.clean_text(i));
        let pred = count(&r.text);
        gold_n += gold.values().sum::<usize>();
        pred_n += pred.values().sum::<usize>();
        tp += gold.iter().map(|(k, v)| (*v).min(*pred.get(k).unwrap_or(&0))).sum::<usize>();
    }
    2.0 * tp as f64 / (gold_n + pred_n) as f64
}

fn generator_fidelity(corpus: &SynthCorpus) -> Outcome {
    let counts = label_counts(&corpus.bundles);
    let n = corpus.bundles.len() as f64;
    let mut worst: f64 = 0.0;
    for (row, probs) in counts.iter().zip(reference_marginals()) {
        for (&k, p) in row.iter().zip(probs) {
            worst = worst.max((k as f64 / n - p).abs() / p);
        }
    }
    let rules = GroupingRuleConfig::default();
    let mut by_report: HashMap<&str, Vec<&cspine_core::synth::GoldAssignment>> = HashMap::new();
    corpus.assignments.iter().for_each(|a| by_report.entry(a.report_id.as_str()).or_default().push(a));
    let (mut recovered, mut total) = (0usize, 0usize);
    for (i, r) in corpus.reports.iter().enumerate() {
        let clean = Report {
            text: corpus.clean_text(i).to_string(),
            ..r.clone()
        };
        let audit = audit_grouping(&split_sentences(&clean), &rules).unwrap();
        let gold = &by_report[r.report_id.as_str()];
        total += gold.len();
        if audit.len() == gold.len() {
            recovered += audit.iter().zip(gold).filter(|(e, g)| e.text == g.text && e.segments == g.segments).count();
        }
    }
    (
        worst <= 0.03 && recovered == total,
        format!("max relative marginal error {:.4}, closure {recovered}/{total} sentences", worst),
    )
}

fn adapter_init() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = MtlParams::init(TrainMode::AdapterMultitask, 1024, 256, 0.5, 1e-5, 1.0, &mut rng);
    let adapter = params.weights.adapter.as_ref().unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let h: Vec<f64> = (0..256).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect();
        let out = adapter.forward(&h);
        let diff = out.iter().zip(&h).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    let (ap, tp) = (adapter.param_count(), params.trunk_param_count());
    (
        worst < 1e-3 && ap < tp,
        format!("max relative perturbation {worst:.2e}, adapter params {ap} < trunk params {tp}"),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let corpus = generate_corpus(&GeneratorConfig::default()).unwrap();
    let baseline = majority_baseline(&corpus.bundles.iter().map(|b| b.labels).collect::<Vec<_>>());
    println!("default corpus: {} reports, {} bundles, majority macro-F1 {:?}", corpus.reports.len(), corpus.bundles.len(), baseline);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("joint loss closed form", Box::new(joint_loss_closed_form)),
        ("gradient correctness", Box::new(gradient_check)),
        ("multitask parity", Box::new(|| mtl_parity(&corpus))),
        ("inference speedup", Box::new(|| inference_speedup(&corpus))),
        ("sliced Wasserstein oracle", Box::new(sliced_oracle)),
        ("metric axioms", Box::new(metric_axioms)),
        ("bound property", Box::new(|| bound_property(&corpus))),
        ("segmenter fidelity", Box::new(segmenter_fidelity)),
        ("generator fidelity", Box::new(|| generator_fidelity(&corpus))),
        ("adapter init", Box::new(adapter_init)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = run();
        failed += usize::from(!ok);
        println!(
            "{} criterion {} ({name}): {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed in {:.0}s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
