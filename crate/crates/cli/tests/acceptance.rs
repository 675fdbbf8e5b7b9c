//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{analyze, evaluate, gen_and_capture, mockmap, read_json};
use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use xbiscope_cli::RunConfig;
use xbiscope_core::composite::{diff_mask, overlay_frames};
use xbiscope_core::detector::prompts::ADS_EXCLUSION_HEADER;
use xbiscope_core::detector::{parse_impact, parse_yes_no, ParseError};
use xbiscope_core::evaluate::{accuracy, confusion, macro_precision, macro_recall, Rational};
use xbiscope_core::{ConfusionMatrix, ImpactScore};

const METRICS_PAIRS: usize = 1000;
const METRICS_MAX_N: usize = 50;
const METRICS_BUDGET: Duration = Duration::from_secs(5);
const BURSTS: usize = 200;
const BURST_MAX_SIDE: u32 = 256;
const BURST_MAX_FRAMES: usize = 5;
const OVERLAY_BUDGET: Duration = Duration::from_secs(10);
const CLOSED_LOOP_BUDGET: Duration = Duration::from_secs(20);
const YES_NO_CASES: usize = 100;

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn site<'a>(report: &'a Value, id: &str) -> Result<&'a Value, String> {
    report["sites"]
        .as_array()
        .and_then(|s| s.iter().find(|s| s["site_id"] == id))
        .ok_or_else(|| format!("{id} missing from report sites"))
}

// 1 ------------------------------------------------------------------------

fn recount(pred: &[ImpactScore], truth: &[ImpactScore]) -> (Rational, Rational, Rational) {
    let n = pred.len() as u128;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count() as u128;
    let zero = Rational::from_integer(0);
    let (mut p_sum, mut r_sum) = (zero, zero);
    for l in ImpactScore::ALL {
        let tp = pred.iter().zip(truth).filter(|(p, t)| **p == l && **t == l).count() as u128;
        let predicted = pred.iter().filter(|p| **p == l).count() as u128;
        let actual = truth.iter().filter(|t| **t == l).count() as u128;
        if predicted > 0 {
            p_sum += Rational::new(tp, predicted);
        }
        if actual > 0 {
            r_sum += Rational::new(tp, actual);
        }
    }
    let four = Rational::from_integer(4);
    (Rational::new(hits, n), p_sum / four, r_sum / four)
}

fn metric_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..METRICS_PAIRS {
        let n = rng.random_range(1..=METRICS_MAX_N);
        let mut draw = || {
            (0..n)
                .map(|_| ImpactScore::ALL[rng.random_range(0..4)])
                .collect::<Vec<_>>()
        };
        let (pred, truth) = (draw(), draw());
        let m = confusion(&pred, &truth).map_err(|e| e.to_string())?;
        for (i, t) in ImpactScore::ALL.iter().enumerate() {
            for (j, p) in ImpactScore::ALL.iter().enumerate() {
                let c = pred.iter().zip(&truth).filter(|(pp, tt)| *pp == p && *tt == t).count() as u64;
                ensure(m.counts[i][j] == c, format!("case {case}: cell ({i},{j})"))?;
            }
        }
        let (acc, mp, mr) = recount(&pred, &truth);
        ensure(accuracy(&m).unwrap() == acc, format!("case {case}: accuracy"))?;
        ensure(macro_precision(&m) == mp, format!("case {case}: macro precision"))?;
        ensure(macro_recall(&m) == mr, format!("case {case}: macro recall"))?;
    }
    let t = started.elapsed();
    ensure(t < METRICS_BUDGET, format!("took {t:?}"))?;
    Ok(format!("{METRICS_PAIRS} pairs exact in {t:.2?}"))
}

// 2 ------------------------------------------------------------------------

fn worked_values() -> Outcome {
    let tp_fp = [(3, 1), (2, 2), (4, 0), (1, 3)];
    let mut m = ConfusionMatrix::default();
    for (j, (tp, fp)) in tp_fp.into_iter().enumerate() {
        m.counts[j][j] = tp;
        // false positives for column j come from the next label's row
        m.counts[(j + 1) % 4][j] = fp;
    }
    for (j, (tp, fp)) in tp_fp.into_iter().enumerate() {
        let l = ImpactScore::ALL[j];
        ensure((m.tp(l), m.fp(l)) == (tp, fp), format!("matrix setup for {l}"))?;
    }
    let mp = macro_precision(&m);
    ensure(mp == Rational::new(5, 8), format!("macro precision {mp}"))?;

    let mut m = ConfusionMatrix::default();
    m.counts[0][0] = 30;
    m.counts[1][1] = 20;
    m.counts[2][2] = 19;
    m.counts[3][3] = 10;
    m.counts[0][2] = 12;
    m.counts[2][1] = 9;
    let acc = accuracy(&m).unwrap();
    ensure(
        m.total() == 100 && acc == Rational::new(79, 100),
        format!("accuracy {acc} over {}", m.total()),
    )?;
    Ok("macro precision 5/8 = 0.625, accuracy 79/100 = 0.79".into())
}

// 3 ------------------------------------------------------------------------

fn random_burst(rng: &mut ChaCha8Rng) -> Vec<RgbImage> {
    let (w, h) = (
        rng.random_range(1..=BURST_MAX_SIDE),
        rng.random_range(1..=BURST_MAX_SIDE),
    );
    let n = rng.random_range(1..=BURST_MAX_FRAMES);
    let base = RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
    (0..n)
        .map(|_| {
            let (fw, fh) = (rng.random_range(w.div_ceil(2)..=w), rng.random_range(h.div_ceil(2)..=h));
            let mut f = RgbImage::from_fn(fw, fh, |x, y| *base.get_pixel(x, y));
            if rng.random_bool(0.7) {
                let (x0, y0) = (rng.random_range(0..fw), rng.random_range(0..fh));
                let (pw, ph) = (rng.random_range(1..=fw - x0), rng.random_range(1..=fh - y0));
                let c = Rgb([rng.random(), rng.random(), rng.random()]);
                for y in y0..y0 + ph {
                    for x in x0..x0 + pw {
                        f.put_pixel(x, y, c);
                    }
                }
            }
            f
        })
        .collect()
}

fn overlay_properties() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..BURSTS {
        let frames = random_burst(&mut rng);
        let o = overlay_frames(&frames).map_err(|e| e.to_string())?;

        let mut shuffled = frames.clone();
        shuffled.shuffle(&mut rng);
        let s = overlay_frames(&shuffled).unwrap();
        ensure(
            s.pixels.as_raw() == o.pixels.as_raw(),
            format!("burst {case}: order changed the overlay"),
        )?;

        let same = overlay_frames(&vec![frames[0].clone(); frames.len()]).unwrap();
        ensure(
            same.pixels == frames[0] && same.changed_pixels == 0,
            format!("burst {case}: identical frames"),
        )?;

        let (w, h) = o.pixels.dimensions();
        if frames.len() > 1 {
            let cropped: Vec<RgbImage> = frames
                .iter()
                .map(|f| RgbImage::from_fn(w, h, |x, y| *f.get_pixel(x, y)))
                .collect();
            let mask = diff_mask(&cropped).unwrap();
            for (x, y, m) in mask.enumerate_pixels() {
                if m.0[0] == 0 && o.pixels.get_pixel(x, y) != cropped[0].get_pixel(x, y) {
                    return Err(format!("burst {case}: static pixel ({x},{y}) altered"));
                }
            }
        }

        let k = frames.len().div_ceil(2);
        let mut bw = vec![RgbImage::from_pixel(w, h, Rgb([0, 0, 0])); k];
        bw.extend(vec![RgbImage::from_pixel(w, h, Rgb([255, 255, 255])); k]);
        let grey = overlay_frames(&bw).unwrap();
        ensure(
            grey.pixels.pixels().all(|p| p.0 == [128; 3]),
            format!("burst {case}: black/white blend"),
        )?;
    }
    let t = started.elapsed();
    ensure(t < OVERLAY_BUDGET, format!("took {t:?}"))?;
    Ok(format!("{BURSTS} bursts in {t:.2?}"))
}

// 4, 6, 7, 8 share one offline closed-loop run ------------------------------

fn closed_loop(root: &Path) -> Outcome {
    let started = Instant::now();
    let (tree, run) = gen_and_capture(root, 7);
    mockmap(&tree, &run, false);
    ensure(analyze(&run, &[]) == 0, "analyze exit status")?;
    let eval = evaluate(&run, &tree);
    let t = started.elapsed();
    for key in ["accuracy", "macro_precision", "macro_recall"] {
        ensure(eval[key] == 1.0, format!("{key} = {}", eval[key]))?;
    }
    let report = read_json(&run.join("report.json"));
    let blocked = report["skipped"]
        .as_array()
        .unwrap()
        .iter()
        .any(|s| s["site_id"] == "blk01" && s["reason"] == "blocked_precapture");
    ensure(blocked, "blk01 not skipped as blocked_precapture")?;
    ensure(t < CLOSED_LOOP_BUDGET, format!("took {t:?}"))?;
    Ok(format!(
        "accuracy = macro P = macro R = 1.0 over {} sites, blk01 skipped, {t:.2?} (offline frame import)",
        eval["scored"]
    ))
}

fn popup_isolation(run: &Path) -> Outcome {
    let report = read_json(&run.join("report.json"));
    let main = &site(&report, "pop01")?["xbi"]["findings"];
    ensure(
        main.as_array().is_some_and(|f| f.is_empty()),
        format!("main findings {main}"),
    )?;
    let rows: Vec<&Value> = report["popup_table"].as_array().unwrap().iter().collect();
    ensure(
        rows.iter().any(|r| r["site_id"] == "pop01"),
        "pop01 absent from popup_table",
    )?;
    ensure(
        rows.iter().all(|r| r["site_id"] == "pop01"),
        "other sites in popup_table",
    )?;
    Ok(format!("{} pop-up row(s), main list empty", rows.len()))
}

fn post_filter(run: &Path) -> Outcome {
    let report = read_json(&run.join("report.json"));
    let xbi = &site(&report, "bot01")?["xbi"];
    ensure(xbi["impact"] == "no_xbi", format!("impact {}", xbi["impact"]))?;
    ensure(
        xbi["post_filter"] == "dropped_blocked",
        format!("post_filter {}", xbi["post_filter"]),
    )?;
    let sidecar = read_json(&run.join("bot01/analysis.json"));
    let original = &sidecar["analysis"]["xbi"]["original"];
    ensure(
        original["impact"] == "significant_visual",
        format!("original {original}"),
    )?;
    ensure(
        original["findings"].as_array().is_some_and(|f| !f.is_empty()),
        "original findings lost",
    )?;
    Ok("bot01 demoted to no_xbi, original verdict kept in analysis.json".into())
}

fn determinism(run: &Path) -> Outcome {
    let first = std::fs::read(run.join("report.json")).map_err(|e| e.to_string())?;
    ensure(analyze(run, &[]) == 0, "second analyze")?;
    let second = std::fs::read(run.join("report.json")).unwrap();
    ensure(first == second, "report.json differs between runs")?;

    let base_text = std::fs::read_to_string(common::fixtures_config()).unwrap();
    let edits: [(&str, &str); 14] = [
        ("mode = \"xbi\"", "mode = \"regression\""),
        ("frames = 5", "frames = 4"),
        ("interval = 1.0", "interval = 1.5"),
        ("settle = 0.5", "settle = 0.25"),
        (
            "viewport_width = 640\npage_load_timeout = 10\n\n[[browsers]]",
            "viewport_width = 800\npage_load_timeout = 10\n\n[[browsers]]",
        ),
        (
            "page_load_timeout = 10\n\n[capture]",
            "page_load_timeout = 12\n\n[capture]",
        ),
        ("name = \"chrome\"", "name = \"edge\""),
        ("backend = \"mock\"", "backend = \"mock\"\nads = false"),
        ("backend = \"mock\"", "backend = \"mock\"\ndynamics = false"),
        ("rate_limit_per_minute = 0", "rate_limit_per_minute = 30"),
        ("retry_scale = 0.0", "retry_scale = 1.0"),
        ("action = \"click\"", "action = \"remove\""),
        ("output = \"../runs\"", "output = \"../elsewhere\""),
        ("mode = \"xbi\"", "mode = \"xbi\"\nblocked_keywords = [\"nope\"]"),
    ];
    let base = RunConfig::parse(&base_text).map_err(|e| e.to_string())?.digest();
    ensure(
        RunConfig::parse(&base_text).unwrap().digest() == base,
        "digest unstable",
    )?;
    let mut seen = std::collections::BTreeSet::from([base.clone()]);
    for (from, to) in edits {
        ensure(base_text.contains(from), format!("edit target {from:?} not in config"))?;
        let cfg = RunConfig::parse(&base_text.replacen(from, to, 1)).map_err(|e| format!("{to:?}: {e}"))?;
        ensure(seen.insert(cfg.digest()), format!("digest unchanged by {to:?}"))?;
    }
    let report = read_json(&run.join("report.json"));
    // load() resolves relative paths, so compare against the loaded config
    let loaded = RunConfig::load(Some(&common::fixtures_config())).map_err(|e| e.to_string())?;
    ensure(
        report["config_digest"] == loaded.digest().as_str(),
        "report digest is not the config digest",
    )?;
    Ok(format!(
        "report.json byte-identical ({} bytes), {} config edits give distinct digests",
        first.len(),
        edits.len()
    ))
}

// 5 ------------------------------------------------------------------------

fn xbi_prompt(run: &Path, site_id: &str) -> Result<String, String> {
    let sidecar = read_json(&run.join(site_id).join("analysis.json"));
    sidecar["prompts"]
        .as_array()
        .and_then(|p| p.iter().find(|p| p["stage"] == "xbi"))
        .and_then(|p| p["prompt"].as_str())
        .map(str::to_string)
        .ok_or_else(|| format!("{site_id}: no xbi prompt recorded"))
}

fn ablation(root: &Path) -> Outcome {
    let (tree, run) = gen_and_capture(root, 9);
    mockmap(&tree, &run, true);
    ensure(analyze(&run, &[]) == 0, "full analyze")?;
    let full = evaluate(&run, &tree)["accuracy"].as_f64().unwrap();
    ensure(
        xbi_prompt(&run, "ad01")?.contains(ADS_EXCLUSION_HEADER),
        "full prompt lacks the ad section",
    )?;

    ensure(analyze(&run, &["--no-ads"]) == 0, "--no-ads analyze")?;
    let ablated = evaluate(&run, &tree)["accuracy"].as_f64().unwrap();
    ensure(
        !xbi_prompt(&run, "ad01")?.contains(ADS_EXCLUSION_HEADER),
        "ad section still rendered",
    )?;
    let report = read_json(&run.join("report.json"));
    let flags = &site(&report, "ad01")?["stage_flags"];
    ensure(
        flags["ads_enabled"] == false && flags["dynamics_enabled"] == true,
        format!("stage_flags {flags}"),
    )?;
    ensure(ablated < full, format!("accuracy {ablated} not below {full}"))?;
    Ok(format!(
        "ad section dropped, accuracy {full:.3} -> {ablated:.3} under the adversarial mapping"
    ))
}

// 9 ------------------------------------------------------------------------

fn spellings(label: ImpactScore) -> Vec<String> {
    let words: Vec<&str> = label.label().split('-').collect();
    let letters: Vec<char> = words.concat().chars().collect();
    let seps = ["-", "_", " ", ""];
    let gaps = (words.len() - 1) as u32;
    let mut out = Vec::new();
    for mask in 0u32..(1 << letters.len()) {
        for pick in 0..seps.len().pow(gaps) {
            let (mut s, mut at, mut pick) = (String::new(), 0, pick);
            for (wi, w) in words.iter().enumerate() {
                for (k, c) in letters[at..at + w.len()].iter().enumerate() {
                    let upper = mask >> (at + k) & 1 == 1;
                    s.push(if upper {
                        c.to_ascii_uppercase()
                    } else {
                        c.to_ascii_lowercase()
                    });
                }
                at += w.len();
                if wi < words.len() - 1 {
                    s.push_str(seps[pick % seps.len()]);
                    pick /= seps.len();
                }
            }
            out.push(s);
        }
    }
    out
}

fn yes_no_oracle(text: &str) -> Option<bool> {
    let mut tok = String::new();
    for c in text.chars().chain([' ']) {
        if c.is_alphanumeric() {
            tok.push(c);
        } else {
            match tok.to_ascii_lowercase().as_str() {
                "yes" => return Some(true),
                "no" => return Some(false),
                _ => tok.clear(),
            }
        }
    }
    None
}

fn parser_totality() -> Outcome {
    let mut total = 0;
    for label in ImpactScore::ALL {
        for s in spellings(label) {
            ensure(parse_impact(&s) == Ok(label), format!("{s:?}"))?;
            total += 1;
        }
    }
    for text in ["", "Findings: none", "minor", "visual", "XBI"] {
        ensure(
            parse_impact(text) == Err(ParseError::NoImpactLabel),
            format!("accepted {text:?}"),
        )?;
    }
    for a in ImpactScore::ALL {
        for b in ImpactScore::ALL.into_iter().filter(|b| *b != a) {
            let text = format!("{} or maybe {}", a.label(), b.label());
            ensure(
                matches!(parse_impact(&text), Err(ParseError::AmbiguousImpact(_))),
                format!("accepted {text:?}"),
            )?;
        }
    }

    let words = [
        "yes",
        "No",
        "YES",
        "nO",
        "nope",
        "yesterday",
        "know",
        "noon",
        "maybe",
        "ok",
        "nó",
        "yes2",
    ];
    let seps = [" ", ", ", ".\n", "-", "_", "!", ":"];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut answered, mut unanswered) = (0, 0);
    for case in 0..YES_NO_CASES {
        let text: String = (0..rng.random_range(0..7))
            .map(|_| {
                format!(
                    "{}{}",
                    words[rng.random_range(0..words.len())],
                    seps[rng.random_range(0..seps.len())]
                )
            })
            .collect();
        let want = yes_no_oracle(&text);
        ensure(parse_yes_no(&text).ok() == want, format!("case {case}: {text:?}"))?;
        if want.is_some() {
            answered += 1;
        } else {
            unanswered += 1;
        }
    }
    Ok(format!(
        "{total} impact spellings accepted, 17 bad completions rejected, yes/no {answered} answered + {unanswered} rejected"
    ))
}

fn main() {
    // libtest flags (e.g. --nocapture) are accepted and ignored
    let tmp = tempfile::tempdir().expect("tempdir");
    let loop_dir = tmp.path().join("closed");
    let ablation_dir = tmp.path().join("ablation");
    std::fs::create_dir_all(&loop_dir).unwrap();
    std::fs::create_dir_all(&ablation_dir).unwrap();
    let run = loop_dir.join("run");

    let criteria: Vec<(&str, Check)> = vec![
        ("metric oracle equivalence", Box::new(metric_oracle)),
        ("worked metric values", Box::new(worked_values)),
        ("overlay properties", Box::new(overlay_properties)),
        ("closed-loop fixture run", Box::new(|| closed_loop(&loop_dir))),
        ("ablation behavior", Box::new(|| ablation(&ablation_dir))),
        ("pop-up isolation", Box::new(|| popup_isolation(&run))),
        ("post-inference filter", Box::new(|| post_filter(&run))),
        ("determinism", Box::new(|| determinism(&run))),
        ("parser totality", Box::new(parser_totality)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        match result {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
