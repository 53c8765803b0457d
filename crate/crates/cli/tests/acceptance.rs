//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use occlubench::cutmix::{cutmix_batch, sample_lambda};
use occlubench::dataset::encode_label;
use occlubench::evaluator::load_report;
use occlubench::imagecore::{decode_image, encode_image, ImageFormat};
use occlubench::inpaint::harmonic_inpaint;
use occlubench::occlusion::{apply_mask, rasterize, Side};
use occlubench::trainer::layers::*;
use occlubench::trainer::{one_cycle, one_cycle_at, ScheduleConfig};
use occlubench::{Error, ImageTensor, MaskBitmap, MaskGeometry, MaskKind, Rng, SoftLabel};

/// Writes straight to stdout so the line shows even when the harness
/// captures output of passing tests.
fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn report(n: u32, ok: bool, detail: &str) {
    say(&format!(
        "criterion {n}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    ));
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_occlubench")
}

fn occlubench(args: &[&str]) {
    let out = Command::new(bin())
        .args(args)
        .arg("-q")
        .output()
        .expect("spawn occlubench");
    assert!(
        out.status.success(),
        "occlubench {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_split_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(11, 0);
    let mut sizes = vec![15usize; 307];
    let mut extra = 5478 - 15 * 307;
    while extra > 0 {
        let c = rng.below(307);
        if sizes[c] < 28 {
            sizes[c] += 1;
            extra -= 1;
        }
    }
    let mut csv = String::from("path,identity\n");
    for (c, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            csv.push_str(&format!("img/c{c:03}/{i:02}.png,celeb{c:03}\n"));
        }
    }
    let manifest = dir.path().join("manifest.csv");
    std::fs::write(&manifest, csv).unwrap();
    let out = dir.path().join("split");

    let t = Instant::now();
    let code = occlubench_cli::run([
        "occlubench",
        "prepare-split",
        "--manifest",
        s(&manifest),
        "--min-per-class",
        "15",
        "--val",
        "3",
        "--test",
        "2",
        "--out",
        s(&out),
        "--quiet",
    ]);
    let elapsed = t.elapsed();
    assert_eq!(code, 0);

    let lines = |name: &str| std::fs::read_to_string(out.join(name)).unwrap().lines().count() - 1;
    let (train, val, test) = (lines("train.csv"), lines("val.csv"), lines("test.csv"));
    let split: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("split.json")).unwrap()).unwrap();
    let json_counts: Vec<usize> = ["train", "val", "test"]
        .iter()
        .map(|k| split[k].as_array().unwrap().len())
        .collect();
    let ok = (train, val, test) == (3943, 921, 614)
        && json_counts == [3943, 921, 614]
        && elapsed < Duration::from_secs(1);
    report(
        1,
        ok,
        &format!(
            "train {train}, val {val}, test {test}, {:.3} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_mask_invariants() {
    let t = Instant::now();
    let g = MaskGeometry::default();
    let mut failures = Vec::new();
    for n in [64, 128, 512] {
        let m7 = rasterize(MaskKind::new(7, Side::None).unwrap(), n, n, &g).unwrap();
        let m8 = rasterize(MaskKind::new(8, Side::None).unwrap(), n, n, &g).unwrap();
        if !m7.bits().iter().zip(m8.bits()).all(|(a, b)| a != b) {
            failures.push(format!("7/8 not complementary at {n}"));
        }
        for id in [1, 5] {
            let l = rasterize(MaskKind::new(id, Side::Left).unwrap(), n, n, &g).unwrap();
            let r = rasterize(MaskKind::new(id, Side::Right).unwrap(), n, n, &g).unwrap();
            let mirrored = (0..n).all(|y| (0..n).all(|x| l.get(y, x) == r.get(y, n - 1 - x)));
            if !mirrored || l.count() != r.count() || l.count() == 0 {
                failures.push(format!("kind {id} sides not mirrored at {n}"));
            }
        }
    }

    let mut rng = Rng::new(2, 0);
    for id in 1..=MaskKind::COUNT {
        let side = if MaskKind::is_sided(id) {
            Side::Left
        } else {
            Side::None
        };
        let mask = rasterize(MaskKind::new(id, side).unwrap(), 64, 64, &g).unwrap();
        let img = ImageTensor::from_fn(64, 64, 3, |_, _, _| rng.unit() as f32).unwrap();
        let once = apply_mask(&img, &mask, 0.5).unwrap();
        let twice = apply_mask(&once, &mask, 0.5).unwrap();
        if once != twice {
            failures.push(format!("kind {id} application not idempotent"));
        }
        for y in 0..64 {
            for x in 0..64 {
                for c in 0..3 {
                    let v = once.get(y, x, c);
                    let expect = if mask.get(y, x) { 0.5 } else { img.get(y, x, c) };
                    if v.to_bits() != expect.to_bits() {
                        failures.push(format!("kind {id} pixel ({y},{x}) changed wrongly"));
                    }
                }
            }
        }
        let bytes = encode_image(&once, ImageFormat::Ppm);
        let decoded = decode_image(&bytes, ImageFormat::Ppm).unwrap().to_bytes();
        let grey_ok = (0..64 * 64)
            .filter(|&p| mask.bits()[p])
            .all(|p| decoded[3 * p..3 * p + 3] == [128, 128, 128]);
        if !grey_ok {
            failures.push(format!("kind {id} fill does not encode to 128"));
        }
    }
    let elapsed = t.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(5);
    report(
        2,
        ok,
        &format!("{} violations, {:.2} s", failures.len(), elapsed.as_secs_f64()),
    );
    assert!(ok, "{failures:?}");
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_cutmix_consistency() {
    let t = Instant::now();
    let mut rng = Rng::new(3, 0);
    let mut worst_label = 0.0f64;
    let mut area_mismatches = 0;
    let mut checked_area = 0;
    for _ in 0..1000 {
        let n = 2 + rng.below(7);
        let (h, w) = (4 + rng.below(29), 4 + rng.below(29));
        let k = 2 + rng.below(9);
        let alpha = [0.2, 0.5, 1.0, 2.0][rng.below(4)];
        let images: Vec<ImageTensor> = (0..n)
            .map(|_| ImageTensor::from_fn(h, w, 3, |_, _, _| rng.unit() as f32).unwrap())
            .collect();
        let labels: Vec<SoftLabel> = (0..n).map(|_| encode_label(rng.below(k), k).unwrap()).collect();
        let mixed = cutmix_batch(&images, &labels, alpha, &mut rng).unwrap();
        for (i, m) in mixed.iter().enumerate() {
            let j = m.partner;
            let probs = m.label.probs();
            let sum: f64 = probs.iter().sum();
            worst_label = worst_label.max((sum - 1.0).abs());
            if probs.iter().any(|&p| p < 0.0) {
                worst_label = f64::INFINITY;
            }
            for (c, &p) in probs.iter().enumerate() {
                let expect =
                    m.lambda_adj * labels[i].probs()[c] + (1.0 - m.lambda_adj) * labels[j].probs()[c];
                worst_label = worst_label.max((p - expect).abs());
            }
            if i == j {
                continue;
            }
            // Pixels are distinct random values, so the patch is exactly the
            // set of pixels taken from the partner.
            let mut patch = 0usize;
            for y in 0..h {
                for x in 0..w {
                    let from_partner = (0..3).all(|c| m.image.get(y, x, c) == images[j].get(y, x, c))
                        && (0..3).any(|c| images[i].get(y, x, c) != images[j].get(y, x, c));
                    patch += from_partner as usize;
                }
            }
            checked_area += 1;
            if m.lambda_adj != 1.0 - patch as f64 / (w * h) as f64 {
                area_mismatches += 1;
            }
        }
    }

    let mut draws: Vec<f64> = (0..10_000)
        .map(|_| sample_lambda(1.0, &mut rng).unwrap())
        .collect();
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max);

    let elapsed = t.elapsed();
    let ok = area_mismatches == 0 && worst_label <= 1e-12 && ks < 0.02 && elapsed < Duration::from_secs(10);
    report(
        3,
        ok,
        &format!(
            "{area_mismatches}/{checked_area} area mismatches, label error {worst_label:.1e}, KS {ks:.4}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 4

fn randv(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Worst relative error of `analytic` against central differences of `f`.
fn fd_check(x: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        let numeric = (fp - fm) / (2.0 * h);
        let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-4);
        worst = worst.max(err);
    }
    worst
}

/// Values spaced at least 0.01 apart and from zero, so ReLU kinks and max ties
/// stay outside the difference stencil.
fn spread(rng: &mut Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|i| (i as f64 - (n / 2) as f64) * 0.02 + 0.01)
        .collect();
    rng.shuffle(&mut v);
    v
}

#[test]
fn criterion_4_gradient_oracle() {
    let t = Instant::now();
    let mut rng = Rng::new(4, 0);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut bump = |name: &'static str, e: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(e);
    };
    for _ in 0..20 {
        // conv3x3
        let (ci, co, h, w) = (
            1 + rng.below(3),
            1 + rng.below(3),
            2 + rng.below(5),
            2 + rng.below(5),
        );
        let x = randv(&mut rng, ci * h * w);
        let wt = randv(&mut rng, co * ci * 9);
        let b = randv(&mut rng, co);
        let r = randv(&mut rng, co * h * w);
        let (mut dw, mut db, mut dx) = (vec![0.0; wt.len()], vec![0.0; co], vec![0.0; x.len()]);
        conv3x3_backward(&x, ci, h, w, &wt, co, &r, &mut dw, &mut db, Some(&mut dx));
        bump(
            "conv3x3 input",
            fd_check(&x, &dx, |v| dot(&conv3x3_forward(v, ci, h, w, &wt, &b, co), &r)),
        );
        bump(
            "conv3x3 weight",
            fd_check(&wt, &dw, |v| dot(&conv3x3_forward(&x, ci, h, w, v, &b, co), &r)),
        );
        bump(
            "conv3x3 bias",
            fd_check(&b, &db, |v| dot(&conv3x3_forward(&x, ci, h, w, &wt, v, co), &r)),
        );

        // relu
        let n = 4 + rng.below(30);
        let x = spread(&mut rng, n);
        let r = randv(&mut rng, n);
        let mut dx = vec![0.0; n];
        relu_backward(&x, &r, &mut dx);
        bump("relu", fd_check(&x, &dx, |v| dot(&relu_forward(v), &r)));

        // maxpool 2x2
        let (c, h, w) = (1 + rng.below(3), 2 * (1 + rng.below(3)), 2 * (1 + rng.below(3)));
        let x = spread(&mut rng, c * h * w);
        let (_, argmax) = maxpool2_forward(&x, c, h, w);
        let r = randv(&mut rng, c * (h / 2) * (w / 2));
        let mut dx = vec![0.0; x.len()];
        maxpool2_backward(&argmax, &r, &mut dx);
        bump(
            "maxpool2",
            fd_check(&x, &dx, |v| dot(&maxpool2_forward(v, c, h, w).0, &r)),
        );

        // global average pool
        let (c, h, w) = (1 + rng.below(4), 1 + rng.below(5), 1 + rng.below(5));
        let x = randv(&mut rng, c * h * w);
        let r = randv(&mut rng, c);
        let mut dx = vec![0.0; x.len()];
        global_avg_pool_backward(h, w, &r, &mut dx);
        bump(
            "global_avg_pool",
            fd_check(&x, &dx, |v| dot(&global_avg_pool_forward(v, c, h, w), &r)),
        );

        // linear
        let (ni, no) = (1 + rng.below(8), 1 + rng.below(8));
        let x = randv(&mut rng, ni);
        let wt = randv(&mut rng, ni * no);
        let b = randv(&mut rng, no);
        let r = randv(&mut rng, no);
        let (mut dw, mut db, mut dx) = (vec![0.0; wt.len()], vec![0.0; no], vec![0.0; ni]);
        linear_backward(&x, &wt, &r, &mut dw, &mut db, Some(&mut dx));
        bump(
            "linear input",
            fd_check(&x, &dx, |v| dot(&linear_forward(v, &wt, &b, no), &r)),
        );
        bump(
            "linear weight",
            fd_check(&wt, &dw, |v| dot(&linear_forward(&x, v, &b, no), &r)),
        );
        bump(
            "linear bias",
            fd_check(&b, &db, |v| dot(&linear_forward(&x, &wt, v, no), &r)),
        );

        // softmax cross-entropy with a soft target
        let k = 2 + rng.below(9);
        let z: Vec<f64> = (0..k).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.unit()).collect();
        let total: f64 = raw.iter().sum();
        let target: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let (_, dz) = soft_cross_entropy_row(&z, &target);
        bump(
            "softmax cross-entropy",
            fd_check(&z, &dz, |v| soft_cross_entropy_row(v, &target).0),
        );
    }
    let elapsed = t.elapsed();
    let max = worst.values().copied().fold(0.0, f64::max);
    let ok = max < 1e-6 && elapsed < Duration::from_secs(30);
    let detail = worst
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(4, ok, &format!("max relative error {max:.1e}: {detail}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_schedule_fixture() {
    let mut failures = Vec::new();
    for total in [100usize, 40, 400, 1000] {
        let cfg = ScheduleConfig {
            max_lr: 5e-3,
            total_steps: total,
            ..Default::default()
        };
        let b = total / 4;
        let lr = |step| one_cycle(step, &cfg).unwrap().0;
        if lr(b) != 5e-3 {
            failures.push(format!("total {total}: lr at boundary {:e}", lr(b)));
        }
        if lr(0) != 5e-3 / 25.0 {
            failures.push(format!("total {total}: start lr {:e}", lr(0)));
        }
        if lr(total) != 5e-3 / 1e4 {
            failures.push(format!("total {total}: final lr {:e}", lr(total)));
        }
        let bf = cfg.boundary();
        for eps in [1e-9, 1e-12] {
            let (l0, m0) = one_cycle_at(bf - eps, &cfg);
            let (l1, m1) = one_cycle_at(bf + eps, &cfg);
            if (l0 - l1).abs() > 1e-9 || (m0 - m1).abs() > 1e-9 {
                failures.push(format!("total {total}: jump at boundary"));
            }
        }
        // Dense sweep: adjacent samples differ by at most the curve's slope bound.
        let steps = 200_000;
        let dt = total as f64 / steps as f64;
        let slope = std::f64::consts::PI / 2.0 * 5e-3 / bf.min(total as f64 - bf);
        let mut prev = one_cycle_at(0.0, &cfg).0;
        for i in 1..=steps {
            let cur = one_cycle_at(i as f64 * dt, &cfg).0;
            if (cur - prev).abs() > slope * dt + 1e-9 {
                failures.push(format!(
                    "total {total}: discontinuity near step {}",
                    i as f64 * dt
                ));
                break;
            }
            prev = cur;
        }
    }
    let ok = failures.is_empty();
    report(
        5,
        ok,
        &format!(
            "boundary 5e-3, endpoints max/25 and max/1e4, {} violations",
            failures.len()
        ),
    );
    assert!(ok, "{failures:?}");
}

// ---------------------------------------------------------------- 6 and 7

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const OCCLUDED: [u8; 7] = [1, 2, 3, 4, 5, 6, 8];
const TRAIN_FLAGS: [&str; 6] = ["--max-lr", "0.1", "--batch-size", "16", "--epochs-unfrozen", "30"];

struct Experiment {
    _dir: tempfile::TempDir,
    /// (model, seed) -> condition -> top-1 error
    errors: BTreeMap<(String, u64), BTreeMap<String, f64>>,
    train_times: Vec<Duration>,
}

fn experiment() -> &'static Experiment {
    static EXP: OnceLock<Experiment> = OnceLock::new();
    EXP.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let p = |name: &str| dir.path().join(name);
        let t = |args: &[&str]| {
            let mut v = vec!["--threads", "1", "--seed", "0"];
            v.extend_from_slice(args);
            occlubench(&v)
        };
        t(&[
            "demo-dataset",
            "--classes",
            "20",
            "--per-class",
            "25",
            "--size",
            "32",
            "--out",
            s(&p("demo")),
        ]);
        t(&[
            "prepare-split",
            "--manifest",
            s(&p("demo/manifest.csv")),
            "--val",
            "3",
            "--test",
            "5",
            "--out",
            s(&p("split")),
        ]);
        let split = p("split/split.json");
        for k in OCCLUDED {
            let out = p(&format!("mask{k}"));
            t(&[
                "apply-masks",
                "--split",
                s(&split),
                "--part",
                "test",
                "--mask",
                &k.to_string(),
                "--out",
                s(&out),
            ]);
        }
        t(&[
            "inpaint",
            "--input",
            s(&p("mask6")),
            "--strategy",
            "mirror_then_harmonic",
            "--out",
            s(&p("rec6")),
        ]);

        let mut conditions: Vec<(String, PathBuf)> = vec![("clean".into(), p("split/test.csv"))];
        for k in OCCLUDED {
            conditions.push((format!("mask{k}"), p(&format!("mask{k}/manifest.csv"))));
        }
        conditions.push(("rec6".into(), p("rec6/manifest.csv")));

        let mut errors = BTreeMap::new();
        let mut train_times = Vec::new();
        for seed in SEEDS {
            for model in ["baseline", "cutmix"] {
                let out = p(&format!("{model}-{seed}"));
                let seed_s = seed.to_string();
                let mut args = vec![
                    "--threads",
                    "1",
                    "--seed",
                    &seed_s,
                    "train",
                    "--split",
                    s(&split),
                    "--out",
                    s(&out),
                ];
                args.extend_from_slice(&TRAIN_FLAGS);
                if model == "cutmix" {
                    args.push("--cutmix");
                }
                let start = Instant::now();
                occlubench(&args);
                train_times.push(start.elapsed());

                let eval_out = p(&format!("eval-{model}-{seed}"));
                let ckpt = out.join("model.ocrc");
                let specs: Vec<String> = conditions
                    .iter()
                    .map(|(id, m)| format!("{id}={}", m.display()))
                    .collect();
                let mut args = vec![
                    "--threads",
                    "1",
                    "evaluate",
                    "--checkpoint",
                    s(&ckpt),
                    "--out",
                    s(&eval_out),
                ];
                for spec in &specs {
                    args.push("--condition");
                    args.push(spec);
                }
                occlubench(&args);
                let rep = load_report(&eval_out.join("report.json")).unwrap();
                let by_id = rep
                    .conditions
                    .iter()
                    .map(|c| (c.id.clone(), c.top1_error))
                    .collect();
                errors.insert((model.to_string(), seed), by_id);
            }
        }
        Experiment {
            _dir: dir,
            errors,
            train_times,
        }
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn median_errors(exp: &Experiment, model: &str) -> BTreeMap<String, f64> {
    let first = &exp.errors[&(model.to_string(), SEEDS[0])];
    first
        .keys()
        .map(|cond| {
            let vals = SEEDS
                .iter()
                .map(|&s| exp.errors[&(model.to_string(), s)][cond])
                .collect();
            (cond.clone(), median(vals))
        })
        .collect()
}

#[test]
fn criterion_6_robustness_ordering() {
    let exp = experiment();
    let chance = 1.0 - 1.0 / 20.0;
    let mut failures = Vec::new();
    let mut degradation = BTreeMap::new();
    for model in ["baseline", "cutmix"] {
        let med = median_errors(exp, model);
        let clean = med["clean"];
        for k in OCCLUDED {
            if med[&format!("mask{k}")] < clean {
                failures.push(format!(
                    "{model}: mask{k} {:.3} below clean {clean:.3}",
                    med[&format!("mask{k}")]
                ));
            }
        }
        let m8 = med["mask8"];
        if !(0.5 * chance..=1.5 * chance).contains(&m8) {
            failures.push(format!("{model}: mask8 {m8:.3} outside chance band"));
        }
        let deg = (1..=6).map(|k| med[&format!("mask{k}")] - clean).sum::<f64>() / 6.0;
        degradation.insert(model, deg);
        say(&format!(
            "  {model} medians: {}",
            med.iter()
                .map(|(k, v)| format!("{k} {v:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    if degradation["cutmix"] >= degradation["baseline"] {
        failures.push("cutmix degradation not below baseline".into());
    }
    let slowest = exp.train_times.iter().max().unwrap();
    if *slowest > Duration::from_secs(300) {
        failures.push(format!("training took {:.0} s", slowest.as_secs_f64()));
    }
    let ok = failures.is_empty();
    report(
        6,
        ok,
        &format!(
            "mean degradation baseline {:.3}, cutmix {:.3}, slowest training {:.0} s{}",
            degradation["baseline"],
            degradation["cutmix"],
            slowest.as_secs_f64(),
            if ok {
                String::new()
            } else {
                format!("; {}", failures.join("; "))
            }
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_7_recovery() {
    let exp = experiment();
    let wins = SEEDS
        .iter()
        .filter(|&&s| {
            let e = &exp.errors[&("baseline".to_string(), s)];
            e["rec6"] < e["mask6"]
        })
        .count();
    let pairs: Vec<String> = SEEDS
        .iter()
        .map(|&s| {
            let e = &exp.errors[&("baseline".to_string(), s)];
            format!("{:.2}->{:.2}", e["mask6"], e["rec6"])
        })
        .collect();
    let ok = wins >= 4;
    report(
        7,
        ok,
        &format!(
            "recovery helps in {wins}/5 seeds, mask6->recovered {}",
            pairs.join(" ")
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 8

fn ramp(n: usize, vertical: bool) -> ImageTensor {
    ImageTensor::from_fn(n, n, 1, |y, x, _| {
        (if vertical { y } else { x }) as f32 / (n - 1) as f32
    })
    .unwrap()
}

#[test]
fn criterion_8_harmonic_solver() {
    let t = Instant::now();
    let g = MaskGeometry::default();
    // The verdict uses the horizontal ramp; the vertical one is reported for reference.
    let mut per_kind = Vec::new();
    let mut vertical_info = Vec::new();
    let mut ramp_ok = true;
    for id in 1..=7u8 {
        let sides: &[Side] = if MaskKind::is_sided(id) {
            &[Side::Left, Side::Right]
        } else {
            &[Side::None]
        };
        let mut worst = [0.0f32; 2];
        for n in [64, 128] {
            for &side in sides {
                let mask = rasterize(MaskKind::new(id, side).unwrap(), n, n, &g).unwrap();
                for (d, vertical) in [false, true].into_iter().enumerate() {
                    let img = ramp(n, vertical);
                    let (out, _) = harmonic_inpaint(&img, &mask, 1e-8, 200_000).unwrap();
                    for (a, b) in out.data().iter().zip(img.data()) {
                        worst[d] = worst[d].max((a - b).abs());
                    }
                }
            }
        }
        ramp_ok &= worst[0] <= 1e-3;
        per_kind.push(format!("kind {id} {:.1e}", worst[0]));
        vertical_info.push(format!("kind {id} {:.1e}", worst[1]));
    }
    say(&format!(
        "  vertical ramp max error: {}",
        vertical_info.join(", ")
    ));

    let mut rng = Rng::new(8, 0);
    let mut violations = 0;
    for case in 0..100 {
        let (h, w, c) = (4 + rng.below(29), 4 + rng.below(29), [1, 3][rng.below(2)]);
        let img = ImageTensor::from_fn(h, w, c, |_, _, _| rng.unit() as f32).unwrap();
        let mask = if case % 2 == 0 {
            let id = 1 + rng.below(7) as u8;
            let side = if MaskKind::is_sided(id) {
                Side::Left
            } else {
                Side::None
            };
            rasterize(MaskKind::new(id, side).unwrap(), h, w, &g).unwrap()
        } else {
            let p = rng.uniform(0.2, 0.8);
            let mut bits: Vec<bool> = (0..h * w).map(|_| rng.coin(p)).collect();
            bits[rng.below(h * w)] = false;
            MaskBitmap::new(MaskKind::new(2, Side::None).unwrap(), h, w, bits).unwrap()
        };
        if mask.count() == h * w {
            continue;
        }
        let (out, _) = harmonic_inpaint(&img, &mask, 1e-6, 20_000).unwrap();
        for ch in 0..c {
            let known: Vec<f32> = (0..h * w)
                .filter(|&p| !mask.bits()[p])
                .map(|p| img.get(p / w, p % w, ch))
                .collect();
            let lo = known.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = known.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            for p in 0..h * w {
                let v = out.get(p / w, p % w, ch);
                if v < lo || v > hi {
                    violations += 1;
                }
            }
        }
    }

    let full = MaskBitmap::uniform(16, 16, true);
    let no_boundary = matches!(
        harmonic_inpaint(&ImageTensor::filled(16, 16, 3, 0.2).unwrap(), &full, 1e-6, 100),
        Err(Error::NoBoundary)
    );

    let elapsed = t.elapsed();
    let ok = ramp_ok && violations == 0 && no_boundary && elapsed < Duration::from_secs(30);
    report(
        8,
        ok,
        &format!(
            "ramp max error {}; maximum-principle violations {violations}; no-boundary error {}; {:.2} s",
            per_kind.join(", "),
            if no_boundary { "raised" } else { "missing" },
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 9

fn pipeline(root: &Path, demo_manifest: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    let p = |name: &str| root.join(name);
    let t = |args: &[&str]| {
        let mut v = vec!["--threads", threads, "--seed", "7"];
        v.extend_from_slice(args);
        occlubench(&v)
    };
    t(&[
        "prepare-split",
        "--manifest",
        s(demo_manifest),
        "--min-per-class",
        "10",
        "--val",
        "2",
        "--test",
        "3",
        "--out",
        s(&p("split")),
    ]);
    let split = p("split/split.json");
    t(&[
        "apply-masks",
        "--split",
        s(&split),
        "--part",
        "test",
        "--mask",
        "1",
        "--out",
        s(&p("mask1")),
    ]);
    for (id, cutmix) in [("base", false), ("mix", true)] {
        let out = p(id);
        let mut args = vec![
            "train",
            "--split",
            s(&split),
            "--out",
            s(&out),
            "--arch",
            "tinyconv",
            "--epochs-unfrozen",
            "2",
            "--batch-size",
            "8",
            "--max-lr",
            "0.05",
        ];
        if cutmix {
            args.push("--cutmix");
        }
        t(&args);
        let clean = format!("clean={}", p("split/test.csv").display());
        let masked = format!("mask1={}", p("mask1/manifest.csv").display());
        let ckpt = p(id).join("model.ocrc");
        let eval = p(&format!("eval-{id}"));
        t(&[
            "evaluate",
            "--checkpoint",
            s(&ckpt),
            "--model-id",
            id,
            "--condition",
            &clean,
            "--condition",
            &masked,
            "--out",
            s(&eval),
        ]);
    }
    let (rb, rm) = (p("eval-base/report.json"), p("eval-mix/report.json"));
    t(&[
        "report",
        "--input",
        s(&rb),
        "--input",
        s(&rm),
        "--out",
        s(&p("cmp")),
    ]);

    let files = [
        "split/split.json",
        "mask1/manifest.csv",
        "mask1/masks.json",
        "base/model.ocrc",
        "mix/model.ocrc",
        "base/history.json",
        "mix/history.json",
        "eval-base/report.json",
        "eval-base/report.csv",
        "eval-base/chart.svg",
        "eval-mix/report.json",
        "cmp/comparison.json",
        "cmp/comparison.csv",
    ];
    files
        .iter()
        .map(|f| (f.to_string(), std::fs::read(p(f)).unwrap()))
        .collect()
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("demo");
    occlubench(&[
        "--seed",
        "3",
        "demo-dataset",
        "--classes",
        "5",
        "--per-class",
        "15",
        "--size",
        "24",
        "--out",
        s(&demo),
    ]);
    let manifest = demo.join("manifest.csv");
    let runs: Vec<_> = [("a", "1"), ("b", "4"), ("c", "4")]
        .iter()
        .map(|(name, threads)| pipeline(&dir.path().join(name), &manifest, threads))
        .collect();
    let mut differing = Vec::new();
    for other in &runs[1..] {
        for ((name, a), (_, b)) in runs[0].iter().zip(other) {
            if a != b {
                differing.push(name.clone());
            }
        }
    }
    let ok = differing.is_empty();
    report(
        9,
        ok,
        &format!(
            "{} artifacts compared across 3 runs (threads 1, 4, 4), {} differ",
            runs[0].len(),
            differing.len()
        ),
    );
    assert!(ok, "{differing:?}");
}
