//! Acceptance gate: one PASS/FAIL line per criterion. Exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use negcamp_core::annotator::{estimate_cost, ModelConfig};
use negcamp_core::reliability::{
    brennan_prediger, confusion, f1_scores, krippendorff_alpha_nominal, percent_agreement, RatingTable,
    ReliabilityError,
};
use negcamp_core::study::{
    aggregate_parties, build_design, cluster_robust_se, fit_model, fit_ols, marginal_mean, marginal_means_family,
    AggregationFilters, ColumnKind, DesignColumn, DesignMatrix, ModelVariant, SmallSampleCorrection,
};
use negcamp_core::synth::{party_panel, PanelSpec};
use negcamp_core::{Corpus, Document, PartyFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{fixture, full_run, negcamp, read_json, snapshot, status};

type Mat = Vec<Vec<f64>>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- oracles

fn alpha_pairwise(a: &[u8], b: &[u8]) -> Option<f64> {
    let pool: Vec<u8> = a.iter().chain(b).copied().collect();
    let n = pool.len() as f64;
    // Two raters per unit: each disagreeing unit contributes two ordered pairs, weight 1/(2-1).
    let d_o = 2.0 * a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / n;
    let ones = pool.iter().filter(|&&v| v == 1).count() as f64;
    let d_e = 2.0 * ones * (n - ones) / (n * (n - 1.0));
    (d_e > 0.0).then(|| 1.0 - d_o / d_e)
}

fn f1_oracle(gold: &[u8], pred: &[u8]) -> [f64; 5] {
    let n = gold.len() as f64;
    let mut f1 = [0.0; 2];
    let mut support = [0.0; 2];
    for c in 0..2u8 {
        let tp = gold.iter().zip(pred).filter(|(g, p)| **g == c && **p == c).count() as f64;
        let g = gold.iter().filter(|&&x| x == c).count() as f64;
        let p = pred.iter().filter(|&&x| x == c).count() as f64;
        support[c as usize] = g;
        f1[c as usize] = if g + p > 0.0 { 2.0 * tp / (g + p) } else { 0.0 };
    }
    let acc = gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64 / n;
    [acc, f1[0], f1[1], (support[0] * f1[0] + support[1] * f1[1]) / n, (f1[0] + f1[1]) / 2.0]
}

fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    a.iter().map(|r| (0..b[0].len()).map(|j| r.iter().zip(b).map(|(x, row)| x * row[j]).sum()).collect()).collect()
}

fn invert(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a.iter().enumerate().map(|(i, r)| {
        let mut row = r.clone();
        row.extend((0..n).map(|j| f64::from(u8::from(i == j))));
        row
    }).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot = m[c].clone();
                m[r].iter_mut().zip(pivot).for_each(|(v, q)| *v -= f * q);
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Normal-equation OLS: (beta, residuals, (X'X)^-1).
fn ols_oracle(x: &Mat, y: &[f64]) -> (Vec<f64>, Vec<f64>, Mat) {
    let xt = transpose(x);
    let inv = invert(&matmul(&xt, x));
    let xty: Vec<f64> = xt.iter().map(|r| r.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    let beta: Vec<f64> = inv.iter().map(|r| r.iter().zip(&xty).map(|(a, b)| a * b).sum()).collect();
    let resid = x.iter().zip(y).map(|(r, yi)| yi - r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).collect();
    (beta, resid, inv)
}

fn rows(d: &DesignMatrix) -> Mat {
    (0..d.n_obs()).map(|i| (0..d.n_params()).map(|j| d.x[(i, j)]).collect()).collect()
}

// ---------------------------------------------------------------- criteria

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let mut mismatches = Vec::new();
    let mut undefined = 0;
    for bits in 0u32..1024 {
        let a: Vec<u8> = (0..5).map(|i| ((bits >> i) & 1) as u8).collect();
        let b: Vec<u8> = (0..5).map(|i| ((bits >> (i + 5)) & 1) as u8).collect();
        let table = RatingTable::from_columns(&[&a, &b]);
        match (krippendorff_alpha_nominal(&table), alpha_pairwise(&a, &b)) {
            (Ok(x), Some(y)) if close(x, y) => {}
            (Err(ReliabilityError::AlphaUndefined), None) => undefined += 1,
            other => mismatches.push(format!("{bits}: alpha {other:?}")),
        }
        let p_o = a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64 / 5.0;
        if !close(brennan_prediger(&table, 2).unwrap(), (p_o - 0.5) / 0.5)
            || !close(percent_agreement(&table).unwrap(), p_o)
        {
            mismatches.push(format!("{bits}: agreement"));
        }
        let ids = |v: &[u8]| v.iter().enumerate().map(|(i, &l)| (format!("d{i}"), l)).collect::<BTreeMap<_, _>>();
        let f = f1_scores(&confusion(&ids(&a), &ids(&b)).unwrap());
        let want = f1_oracle(&a, &b);
        let got = [f.accuracy, f.f1_class0, f.f1_class1, f.f1_weighted, f.f1_macro];
        if !got.iter().zip(want).all(|(g, w)| close(*g, w)) {
            mismatches.push(format!("{bits}: f1 {got:?} vs {want:?}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches.is_empty() && undefined == 2 && secs < 10.0,
        format!("1024 tables, {} mismatches, {undefined} undefined in both, {secs:.2}s (limit 10s)", mismatches.len()),
    )
}

fn closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut exact = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..60);
        let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let b: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let p_o = a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64 / n as f64;
        if brennan_prediger(&RatingTable::from_columns(&[&a, &b]), 2).unwrap() == 2.0 * p_o - 1.0 {
            exact += 1;
        }
    }
    let (a, b) = ([0u8, 0, 1, 1], [0u8, 1, 1, 1]);
    let oracle = alpha_pairwise(&a, &b).unwrap();
    let got = krippendorff_alpha_nominal(&RatingTable::from_columns(&[&a, &b])).unwrap();
    outcome(
        exact == 100 && (got - oracle).abs() < 1e-4 && (got - 8.0 / 15.0).abs() < 1e-4,
        format!("kappa_BP exact on {exact}/100 tables; worked alpha {got:.6} vs oracle {oracle:.6}"),
    )
}

fn golden_end_to_end(scratch: &Path) -> (Outcome, Option<(f64, f64)>) {
    let golden = snapshot(&fixture("golden"));
    let start = Instant::now();
    let mut problems = Vec::new();
    for limit in ["1", "8", "16"] {
        let out = scratch.join(format!("golden-{limit}"));
        let codes = full_run(&out, &["--concurrency", limit]);
        if codes != [0, 0, 0] {
            problems.push(format!("concurrency {limit}: exit codes {codes:?}"));
            continue;
        }
        let got = snapshot(&out);
        for (name, bytes) in &golden {
            if got.get(name) != Some(bytes) {
                problems.push(format!("concurrency {limit}: {name} differs"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let tokens = &read_json(&scratch.join("golden-8/annotate_manifest.json"))["tokens"];
    let means = tokens["input_mean"].as_f64().zip(tokens["output_mean"].as_f64());
    (
        outcome(
            problems.is_empty() && secs < 5.0,
            format!(
                "{} files identical to golden at concurrency 1/8/16; {secs:.2}s (limit 5s){}",
                golden.len(),
                if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
            ),
        ),
        means,
    )
}

fn regression_recovery() -> Outcome {
    let truth = [("Government experience", -6.0), ("Anti-elite salience", 1.5), ("Ideological extreme", 1.6)];
    let mut hits = [0usize; 3];
    let reps = 200;
    for seed in 0..reps {
        let panel = party_panel(&PanelSpec { seed, ..Default::default() });
        let d = build_design(&panel.aggregates, &panel.meta, ModelVariant::Model1, None).unwrap();
        let fit = fit_model(&d, SmallSampleCorrection::Cr1).unwrap();
        for (h, (name, beta)) in hits.iter_mut().zip(truth) {
            let c = fit.coefficient(name).unwrap();
            *h += usize::from((c.estimate - beta).abs() <= 3.0 * c.se);
        }
    }
    let min_rate = hits.iter().map(|&h| h as f64 / reps as f64).fold(1.0, f64::min);

    // Within-country demeaning against the dummy fit.
    let mut fe_gap: f64 = 0.0;
    let mut ref_gap: f64 = 0.0;
    for seed in 0..10 {
        let spec = PanelSpec { seed: 300 + seed, ..Default::default() };
        let panel = party_panel(&spec);
        let d = build_design(&panel.aggregates, &panel.meta, ModelVariant::Model1, None).unwrap();
        let fit = fit_ols(&d).unwrap();
        let x = rows(&d);
        let slopes: Vec<usize> = (0..d.n_params()).filter(|&j| d.columns[j].kind == ColumnKind::Predictor).collect();
        let g = d.n_clusters();
        let mut sums = vec![vec![0.0; slopes.len() + 1]; g];
        let mut counts = vec![0.0; g];
        for i in 0..d.n_obs() {
            let c = d.clusters[i];
            counts[c] += 1.0;
            for (t, &j) in slopes.iter().enumerate() {
                sums[c][t] += x[i][j];
            }
            sums[c][slopes.len()] += d.y[i];
        }
        let xw: Mat = (0..d.n_obs())
            .map(|i| slopes.iter().enumerate().map(|(t, &j)| x[i][j] - sums[d.clusters[i]][t] / counts[d.clusters[i]]).collect())
            .collect();
        let yw: Vec<f64> =
            (0..d.n_obs()).map(|i| d.y[i] - sums[d.clusters[i]][slopes.len()] / counts[d.clusters[i]]).collect();
        let (bw, _, _) = ols_oracle(&xw, &yw);
        for (t, &j) in slopes.iter().enumerate() {
            fe_gap = fe_gap.max((fit.beta[j] - bw[t]).abs());
        }

        let a = fit_model(&d, SmallSampleCorrection::Cr1).unwrap();
        for other in ["DE", "PL", "UK"] {
            let d2 = build_design(&panel.aggregates, &panel.meta, ModelVariant::Model1, Some(other)).unwrap();
            let b = fit_model(&d2, SmallSampleCorrection::Cr1).unwrap();
            for (name, _) in truth {
                let (ca, cb) = (a.coefficient(name).unwrap(), b.coefficient(name).unwrap());
                ref_gap = ref_gap.max((ca.estimate - cb.estimate).abs()).max((ca.se - cb.se).abs());
            }
        }
    }
    outcome(
        min_rate >= 0.95 && fe_gap < 1e-8 && ref_gap < 1e-10,
        format!(
            "min coverage within 3 SE {:.3} (hits {hits:?}/{reps}); FE vs demeaning {fe_gap:.2e}; reference change {ref_gap:.2e}",
            min_rate
        ),
    )
}

fn singleton_cluster_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(12..60);
        let k = rng.random_range(2..6);
        let mut x = DMatrix::<f64>::zeros(n, k);
        let mut y = DVector::<f64>::zeros(n);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            for j in 1..k {
                x[(i, j)] = rng.random_range(-3.0..3.0);
            }
            y[i] = 1.0 + x[(i, 1)] + (0.5 + x[(i, 1)].abs()) * rng.random_range(-1.0..1.0);
        }
        let d = DesignMatrix {
            model: ModelVariant::Model1,
            y,
            x,
            columns: (0..k)
                .map(|j| DesignColumn {
                    name: format!("x{j}"),
                    kind: if j == 0 { ColumnKind::Intercept } else { ColumnKind::Predictor },
                })
                .collect(),
            party_ids: (0..n).map(|i| format!("p{i}")).collect(),
            clusters: (0..n).collect(),
            cluster_names: (0..n).map(|i| format!("c{i:03}")).collect(),
            reference_country: "c000".into(),
            families: vec![PartyFamily::Liberal; n],
            reference_family: None,
            excluded: Vec::new(),
        };
        let fit = fit_ols(&d).unwrap();
        let cr = cluster_robust_se(&fit, &d, SmallSampleCorrection::Cr1).unwrap();

        // HC1: (X'X)^-1 X' diag(e^2) X (X'X)^-1 * n/(n-k).
        let xm = rows(&d);
        let (_, e, inv) = ols_oracle(&xm, d.y.as_slice());
        let meat: Mat = (0..k)
            .map(|a| (0..k).map(|b| (0..n).map(|i| e[i] * e[i] * xm[i][a] * xm[i][b]).sum()).collect())
            .collect();
        let v = matmul(&matmul(&inv, &meat), &inv);
        let scale = n as f64 / (n - k) as f64;
        for j in 0..k {
            let want = (v[j][j] * scale).sqrt();
            worst = worst.max((cr.se[j] - want).abs() / want);
        }
    }
    outcome(worst < 1e-10, format!("50 designs, worst relative SE gap {worst:.2e} (limit 1e-10)"))
}

fn marginal_means_consistency() -> Outcome {
    let mut gap: f64 = 0.0;
    for seed in 0..20 {
        let mut spec = PanelSpec { seed, beta_extreme: 0.0, ..Default::default() };
        spec.family_offsets.insert(PartyFamily::Green, -3.0);
        let panel = party_panel(&spec);
        let d = build_design(&panel.aggregates, &panel.meta, ModelVariant::FamilyModel, None).unwrap();
        let fit = fit_model(&d, SmallSampleCorrection::Cr1).unwrap();
        let rows = marginal_means_family(&fit, &d).unwrap();
        let n: usize = rows.iter().map(|r| r.n_obs).sum();
        let weighted = rows.iter().map(|r| r.predicted * r.n_obs as f64).sum::<f64>() / n as f64;
        gap = gap.max((weighted - fit.ols.fitted.mean()).abs());
    }
    let reps = 100;
    let mut covered = 0;
    for seed in 0..reps {
        let mut spec = PanelSpec { seed: 900 + seed, beta_extreme: 0.0, ..Default::default() };
        spec.family_offsets.insert(PartyFamily::RadicalLeft, 10.0);
        let panel = party_panel(&spec);
        let d = build_design(&panel.aggregates, &panel.meta, ModelVariant::FamilyModel, None).unwrap();
        let fit = fit_model(&d, SmallSampleCorrection::Cr1).unwrap();
        let row = marginal_mean(&fit, &d, PartyFamily::RadicalLeft).unwrap();
        let truth = panel
            .meta
            .values()
            .map(|m| {
                let mut moved = m.clone();
                moved.family = PartyFamily::RadicalLeft;
                panel.expectation(&spec, &moved)
            })
            .sum::<f64>()
            / panel.meta.len() as f64;
        covered += usize::from(row.ci_low <= truth && truth <= row.ci_high);
    }
    outcome(
        gap < 1e-10 && covered >= 90,
        format!("weighted means vs mean fitted {gap:.2e}; planted +10 inside 95% CI in {covered}/{reps} panels"),
    )
}

fn party_docs(counts: &[(usize, usize)]) -> (Corpus, BTreeMap<String, u8>) {
    let mut docs = Vec::new();
    let mut labels = BTreeMap::new();
    for (p, &(orig, rt)) in counts.iter().enumerate() {
        for k in 0..orig + rt {
            let id = format!("p{p}-{k:05}");
            docs.push(Document {
                id: id.clone(),
                text: "message".into(),
                language: "en".into(),
                country: "IE".into(),
                author_id: format!("mp{p}"),
                party_id: format!("p{p}"),
                created_at: "2021-05-05T08:00:00Z".into(),
                is_retweet: k >= orig,
            });
            labels.insert(id, u8::from(k % 4 == 0));
        }
    }
    (Corpus::from_documents(docs), labels)
}

fn filter_contract() -> Outcome {
    let meta = Default::default();
    let (corpus, labels) = party_docs(&[(499, 0), (500, 0), (501, 0)]);
    let agg = aggregate_parties(&corpus, &labels, &meta, &AggregationFilters::default()).unwrap();
    let kept: Vec<&str> = agg.parties.iter().map(|p| p.party_id.as_str()).collect();
    let boundary = kept == ["p1", "p2"] && agg.below_threshold == ["p0"];

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for _ in 0..200 {
        let counts: Vec<(usize, usize)> =
            (0..rng.random_range(1..8)).map(|_| (rng.random_range(0..40), rng.random_range(0..15))).collect();
        let (corpus, labels) = party_docs(&counts);
        let lo = rng.random_range(0..50);
        let hi = lo + rng.random_range(0..30);
        let at = |min| {
            let f = AggregationFilters { min_tweets: min, ..Default::default() };
            aggregate_parties(&corpus, &labels, &meta, &f).unwrap()
        };
        let (loose, strict) = (at(lo), at(hi));
        if !strict.parties.iter().all(|p| loose.parties.iter().any(|q| q.party_id == p.party_id)) {
            violations += 1;
        }
    }
    outcome(
        boundary && violations == 0,
        format!("499 excluded / 500 included: {boundary}; monotonicity violations {violations}/200"),
    )
}

fn cost_estimate(means: Option<(f64, f64)>) -> Outcome {
    let Some((input_mean, output_mean)) = means else {
        return outcome(false, "no fixture token measurement (golden run failed)");
    };
    let config = ModelConfig::preset("gpt-4o-mini-2024-07-18");
    let cost = estimate_cost(18_066_672, input_mean, output_mean, &config);
    outcome(
        (78.0..=312.0).contains(&cost),
        format!("US${cost:.2} from {input_mean:.1} input / {output_mean:.1} output tokens per doc (band 78..312 around 156)"),
    )
}

fn annotation_robustness(scratch: &Path) -> Outcome {
    let golden = fs::read_to_string(fixture("golden/annotations.jsonl")).unwrap();
    let labels: Vec<(String, u64)> = golden
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["doc_id"].as_str().unwrap().to_string(), v["label"].as_u64().unwrap())
        })
        .collect();
    // Docs 0, 20, 40 answer with prose first (5%); every seventh doc fails transiently before answering.
    let script_line = |i: usize, id: &str, label: u64| {
        let mut script = Vec::new();
        if i % 7 == 3 {
            script.push(serde_json::json!({"fail": "transient"}));
            script.push(serde_json::json!({"fail": "rate_limited"}));
        }
        if i % 20 == 0 {
            script.push(serde_json::json!("It is hard to say."));
        }
        script.push(serde_json::json!(label.to_string()));
        serde_json::json!({"doc_id": id, "script": script}).to_string()
    };
    let mock_path = scratch.join("robust_mock.jsonl");
    let lines: Vec<String> = labels.iter().enumerate().map(|(i, (id, l))| script_line(i, id, *l)).collect();
    fs::write(&mock_path, lines.join("\n")).unwrap();

    let run = |name: &str, mock: &Path, extra: &[&str]| {
        let out = scratch.join(name);
        let config = fixture("run.toml");
        let mut args = vec![
            "annotate",
            "--config",
            config.to_str().unwrap(),
            "--mock",
            mock.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let code = status(&negcamp(&args));
        (code, fs::read_to_string(out.join("annotations.jsonl")).unwrap_or_default())
    };
    let (c1, a1) = run("robust-1", &mock_path, &["--concurrency", "1"]);
    let (c16, a16) = run("robust-16", &mock_path, &["--concurrency", "16"]);
    let got: Vec<(String, u64)> = a1
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["doc_id"].as_str().unwrap().to_string(), v["label"].as_u64().unwrap())
        })
        .collect();
    let complete = c1 == 0 && c16 == 0 && got == labels;
    let ordered = a1 == a16;

    let short_mock = scratch.join("short_mock.jsonl");
    fs::write(&short_mock, lines[5..].join("\n")).unwrap();
    let (over, _) = run("short-1pct", &short_mock, &["--failure-threshold", "0.01"]);
    let at = format!("{}", 5.0 / 60.0);
    let (equal, _) = run("short-at", &short_mock, &["--failure-threshold", &at]);
    outcome(
        complete && ordered && over == 3 && equal == 0,
        format!(
            "60/60 labels recovered: {complete}; identical at concurrency 1 and 16: {ordered}; 5 missing at 1% -> exit {over}; at exactly 5/60 -> exit {equal}"
        ),
    )
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let (golden, means) = golden_end_to_end(scratch.path());
    let results = [
        ("metric oracle equivalence", metric_oracles()),
        ("closed-form checks", closed_forms()),
        ("golden end-to-end", golden),
        ("regression recovery", regression_recovery()),
        ("clustered-SE oracle", singleton_cluster_oracle()),
        ("marginal means consistency", marginal_means_consistency()),
        ("filter contract", filter_contract()),
        ("cost estimator", cost_estimate(means)),
        ("annotation robustness", annotation_robustness(scratch.path())),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("{} criterion {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
