//! Acceptance suite. Each test pins one release criterion at its stated
//! tolerance and prints a PASS line; the suite is the exit gate for the
//! whole harness.

mod common;

use common::{acceptance_config, CountingTransport, ResponderTransport};
use dslbench::gateway::Gateway;
use dslbench::judging::{calibrate, ConfusionMatrix};
use dslbench::metrics::{
    accuracy, aggregate_pass_at_k, chi_square_test, pass_at_k, repair_gain, TaskOutcome,
};
use dslbench::orchestrator::{self, ExchangePurpose, GatewaySetup};
use dslbench::prompting::{
    self, augmentation_words, template_spec, DeliveryMode, ModelForm, TemplateId,
    INSTRUCTION_PREFIX,
};
use dslbench::report::chi_square_row;
use dslbench::validation::check_builtin;
use dslbench::TargetLanguage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::sync::Arc;
use std::time::Instant;
use tempfile::TempDir;

fn random_outcomes(rng: &mut ChaCha8Rng, max_n: usize) -> Vec<TaskOutcome> {
    let count = rng.gen_range(1..=12);
    (0..count)
        .map(|i| {
            let n = rng.gen_range(1..=max_n);
            let c = rng.gen_range(0..=n);
            let c_after = rng.gen_range(c..=n);
            TaskOutcome {
                task_id: format!("t{i}"),
                n,
                c,
                c_after_repair: c_after,
                wf_count: rng.gen_range(c_after..=n),
            }
        })
        .collect()
}

/// Criterion 1: pass@k equals brute-force subset enumeration for every
/// n <= 8, 0 <= c <= n, 1 <= k <= n, within 1e-12, in under a second.
#[test]
fn acceptance_1_pass_at_k_oracle_equivalence() {
    let started = Instant::now();
    let mut cases = 0usize;
    for n in 1..=8usize {
        for c in 0..=n {
            for k in 1..=n {
                let mut total = 0u64;
                let mut hit = 0u64;
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize != k {
                        continue;
                    }
                    total += 1;
                    if (mask & ((1u32 << c) - 1)) != 0 {
                        hit += 1;
                    }
                }
                let oracle = hit as f64 / total as f64;
                let formula = pass_at_k(n, c, k).unwrap();
                assert!(
                    (formula - oracle).abs() < 1e-12,
                    "n={n} c={c} k={k}: {formula} vs {oracle}"
                );
                cases += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "oracle sweep took {elapsed:?}");
    println!("ACCEPTANCE 1 pass@k oracle equivalence ({cases} cases, {elapsed:?}): PASS");
}

/// Criterion 2: accuracy is exactly pass@1 on 1,000 random outcome sets.
#[test]
fn acceptance_2_accuracy_is_pass_at_1() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_817);
    for _ in 0..1_000 {
        let outcomes = random_outcomes(&mut rng, 8);
        let acc = accuracy(&outcomes, false).unwrap();
        let p1 = aggregate_pass_at_k(&outcomes, 1, false).unwrap();
        assert_eq!(acc.to_bits(), p1.to_bits(), "accuracy != pass@1 on {outcomes:?}");

        let acc_r = accuracy(&outcomes, true).unwrap();
        let p1_r = aggregate_pass_at_k(&outcomes, 1, true).unwrap();
        assert_eq!(acc_r.to_bits(), p1_r.to_bits());
    }
    println!("ACCEPTANCE 2 accuracy == pass@1 (1000 random outcome sets, exact): PASS");
}

/// Criterion 3: chi-square fixed points and report-row formatting.
#[test]
fn acceptance_3_chi_square() {
    // Hand-computed 2x2: marginals 20/20, expected 10 everywhere.
    let result = chi_square_test(&[vec![12.0, 8.0], vec![8.0, 12.0]], 0.05).unwrap();
    assert_eq!(result.statistic, 1.6, "statistic must be exactly 1.6");
    assert_eq!(result.dof, 1);
    assert!((result.p_value - 0.2059).abs() < 1e-3);

    // Independent CDF oracle.
    let oracle = 1.0 - ChiSquared::new(1.0).unwrap().cdf(1.6);
    assert!(
        (result.p_value - oracle).abs() < 1e-3,
        "p {} vs oracle {oracle}",
        result.p_value
    );

    // Observed == expected.
    let identity = chi_square_test(&[vec![10.0, 10.0], vec![10.0, 10.0]], 0.05).unwrap();
    assert_eq!(identity.statistic, 0.0);
    assert_eq!(identity.p_value, 1.0);
    assert!(!identity.significant);

    // Report golden from injected values.
    let injected = dslbench::metrics::ChiSquareResult {
        statistic: 21.33,
        dof: 8,
        p_value: 0.0063,
        significant: true,
        alpha: 0.05,
    };
    let row = chi_square_row(TargetLanguage::Alloy, "GPT-4o", &injected);
    assert_eq!(row[2..], ["21.33", "0.0063", "8", "Significant"]);
    println!("ACCEPTANCE 3 chi-square statistic/p/golden row: PASS");
}

/// Criterion 4: the template table, round counts, verbatim prompt strings
/// and word-estimate additivity.
#[test]
fn acceptance_4_template_fidelity() {
    use ModelForm::*;
    let expect = [
        (TemplateId::PT1, true, None, false, None, 1),
        (TemplateId::PT2, false, Formal, false, None, 1),
        (TemplateId::PT3, false, Nl, false, None, 1),
        (TemplateId::PT4, false, Formal, true, None, 2),
        (TemplateId::PT5, false, Nl, true, None, 2),
        (TemplateId::PT6, true, None, false, Nl, 2),
        (TemplateId::PT7, true, None, false, Formal, 2),
        (TemplateId::PT8, true, Formal, false, None, 1),
        (TemplateId::PT9, true, Nl, false, None, 1),
    ];
    for (id, desc, model, explain, code, rounds) in expect {
        let spec = template_spec(id);
        assert_eq!(spec.include_description, desc, "{id}");
        assert_eq!(spec.domain_model_form, model, "{id}");
        assert_eq!(spec.explain_dm, explain, "{id}");
        assert_eq!(spec.code_dm, code, "{id}");
        assert_eq!(spec.rounds, rounds, "{id}");
    }

    let dataset = dslbench::dataset::load_dataset(&common::fixture_dataset()).unwrap();
    let domain = dataset.domain("traffic-accidents").unwrap();
    let task = dataset.task("t-acc-1").unwrap();

    // Rendered round counts across the whole table.
    for id in TemplateId::ALL {
        let plan = prompting::render(
            &template_spec(id),
            DeliveryMode::Op3Isolated,
            domain,
            &[task],
            TargetLanguage::Ocl,
        )
        .unwrap();
        assert_eq!(plan.rounds.len(), template_spec(id).rounds, "{id}");
    }

    // Verbatim strings in the PT1 render.
    let pt1 = prompting::render(
        &template_spec(TemplateId::PT1),
        DeliveryMode::Op3Isolated,
        domain,
        &[task],
        TargetLanguage::Ocl,
    )
    .unwrap();
    let joined: String = pt1.rounds[0].iter().map(|m| m.content.clone()).collect::<Vec<_>>().join("\n");
    assert!(joined.contains("Consider the context description of the domain"));
    assert!(joined.contains(INSTRUCTION_PREFIX));
    assert!(joined.contains("Code the following constraint in OCL:"));

    // Word-estimate additivity: the PT8 augmentation is exactly the PT1
    // augmentation plus the PT2 augmentation on the same domain.
    let aug = |id| {
        let plan = prompting::render(
            &template_spec(id),
            DeliveryMode::Op3Isolated,
            domain,
            &[task],
            TargetLanguage::Ocl,
        )
        .unwrap();
        augmentation_words(&plan)
    };
    assert_eq!(aug(TemplateId::PT8), aug(TemplateId::PT1) + aug(TemplateId::PT2));
    println!("ACCEPTANCE 4 template fidelity (table rows, rounds, verbatim strings, additivity): PASS");
}

/// Criterion 5: pipeline invariants on a replay-driven end-to-end run of
/// the fixture grid (2 domains, 6 tasks, 3 templates, OP1+OP3, k=3, both
/// repairs on).
#[test]
fn acceptance_5_pipeline_invariants() {
    let started = Instant::now();
    let replay_dir = TempDir::new().unwrap();
    let record_root = TempDir::new().unwrap();

    let config = acceptance_config("acc");
    let transport = Arc::new(ResponderTransport::new());
    let gateway = Gateway::record(replay_dir.path(), transport, None).unwrap();
    orchestrator::run_with_gateway(&config, record_root.path(), &gateway).unwrap();

    // Replay run (zero transport I/O checked via a counting transport).
    let counting = Arc::new(CountingTransport::new());
    let replay_gateway =
        Gateway::replay_with_transport(replay_dir.path(), counting.clone()).unwrap();
    let root = TempDir::new().unwrap();
    let store = orchestrator::run_with_gateway(&config, root.path(), &replay_gateway).unwrap();
    assert_eq!(counting.calls(), 0);

    let expected_records = 3 * 3 * 2 * 2 * 3 * 3; // languages x templates x deliveries x domains x tasks x k
    assert_eq!(store.records.len(), expected_records);

    // (a) Zero judge calls on WF-failed attempts.
    let mut wf_failed = 0;
    for record in &store.records {
        if !record.wf_passed() {
            assert!(record.verdict_initial.is_none(), "{}", record.attempt_id);
            assert!(record.verdict_final.is_none(), "{}", record.attempt_id);
            let judge_calls = store
                .exchanges
                .iter()
                .filter(|e| e.purpose == ExchangePurpose::Judge && e.context == record.attempt_id)
                .count();
            assert_eq!(judge_calls, 0, "judge ran on WF-failed {}", record.attempt_id);
            wf_failed += 1;
        }
    }
    assert!(wf_failed > 0, "fixture must exercise the WF-failed path");

    // (b) At most one repair per stage per attempt: structural fields plus
    // per-attempt exchange counts bounded by the repair mode.
    for record in &store.records {
        let wf_repair_calls = store
            .exchanges
            .iter()
            .filter(|e| e.purpose == ExchangePurpose::WfRepair && e.context == record.attempt_id)
            .count();
        let repaired = record.wf_repair.is_some() || record.wf_repair_failed.is_some();
        assert_eq!(wf_repair_calls, if repaired { 2 } else { 0 }, "{}", record.attempt_id);
        if record.wf_repair.is_some() {
            assert!(!record.wf_initial.as_ref().unwrap().passed);
        }

        let correctness_calls = store
            .exchanges
            .iter()
            .filter(|e| {
                e.purpose == ExchangePurpose::CorrectnessRepair && e.context == record.attempt_id
            })
            .count();
        let corr_repaired =
            record.correctness_repair.is_some() || record.correctness_repair_failed.is_some();
        assert_eq!(correctness_calls, if corr_repaired { 1 } else { 0 });
        if let Some(v) = &record.verdict_initial {
            if record.correctness_repair.is_some() {
                assert!(!v.correct, "repair ran on a correct attempt");
            }
        }
    }

    // (c) Exact exchange accounting against the closed form.
    let mut generation_groups = std::collections::BTreeSet::new();
    let mut expected_calls = 0usize;
    for record in &store.records {
        let rounds = template_spec(record.ids.template).rounds;
        let group = match record.ids.delivery {
            DeliveryMode::Op1Batch => format!(
                "{}/{}/{}/{}/{}/a{}",
                record.ids.language.key(),
                record.ids.provider,
                record.ids.template,
                record.ids.delivery.key(),
                record.ids.domain_id,
                record.ids.attempt_index
            ),
            _ => record.attempt_id.clone(),
        };
        if generation_groups.insert(group) {
            expected_calls += rounds;
        }
        if record.wf_repair.is_some() || record.wf_repair_failed.is_some() {
            expected_calls += 2; // two-call repair mode
        }
        if record.verdict_initial.is_some() {
            expected_calls += 1;
        }
        if record.correctness_repair.is_some() || record.correctness_repair_failed.is_some() {
            expected_calls += 1;
        }
        if record.verdict_final.is_some() {
            expected_calls += 1;
        }
        assert!(!record.judge_unparseable, "fixture judges always parse");
    }
    assert_eq!(store.exchanges.len(), expected_calls, "gateway call accounting mismatch");

    // (d) Deterministic replay runs produce byte-identical stores.
    let root_b = TempDir::new().unwrap();
    let setup = GatewaySetup::Replay(replay_dir.path().to_path_buf());
    orchestrator::run(&config, root_b.path(), &setup).unwrap();
    for file in ["config.json", "attempts.jsonl", "exchanges.jsonl"] {
        let a = std::fs::read(store.dir.join(file)).unwrap();
        let b = std::fs::read(root_b.path().join("acc").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 30, "offline run took {elapsed:?}");
    println!(
        "ACCEPTANCE 5 pipeline invariants (gate, single-pass, {} calls accounted, byte-identical, {elapsed:?}): PASS",
        store.exchanges.len()
    );
}

const APPENDIX_OCL: &str = "context Accident inv: \n    self.type = 'rear-end collision' implies self.crashedVehicles->size() = 2";
const APPENDIX_ALLOY: &str = "fact RearEndCollisionInvolvesTwoVehicles { \n    all a: Accident | a.type = RearEndCollision implies #a.crashedVehicles = 2 \n}";
const APPENDIX_PYTHON: &str = "def check_rear_end_collision_constraint(accidents):\n    for accident in accidents:\n        if accident['type'] == 'rear end collision' and len(accident['crashed_vehicles']) != 2:\n            return False\n\n    return True";

/// Criterion 6: the reference listings pass their builtin validators and a
/// 30-item mutation corpus fails with non-empty diagnostics, 100% on both
/// sides.
#[test]
fn acceptance_6_validator_soundness() {
    let references = [
        (APPENDIX_OCL, TargetLanguage::Ocl),
        (APPENDIX_ALLOY, TargetLanguage::Alloy),
        (APPENDIX_PYTHON, TargetLanguage::Python),
    ];
    for (text, language) in references {
        let result = check_builtin(text, language);
        assert!(result.passed, "{language} reference listing failed: {:?}", result.diagnostics);
    }

    let mutations: [(&str, TargetLanguage); 30] = [
        // OCL: deleted delimiters, misspelled keywords, unknown arrow ops.
        ("context Accident inv: self.type = 'rear-end collision' implies self.crashedVehicles->size( = 2", TargetLanguage::Ocl),
        ("context Accident inv: self.type = 'rear-end collision implies self.crashedVehicles->size() = 2", TargetLanguage::Ocl),
        ("context Accident inv: self.crashedVehicles->sizee() = 2", TargetLanguage::Ocl),
        ("context Accident inv: self.date->addDays(1) = self.end", TargetLanguage::Ocl),
        ("contxt Accident inv: self.x = 2", TargetLanguage::Ocl),
        ("context Accident nv: self.x = 2", TargetLanguage::Ocl),
        ("context Accident inv self.x = 2", TargetLanguage::Ocl),
        ("context Accident inv:", TargetLanguage::Ocl),
        ("context Accident inv: self.x = {2}", TargetLanguage::Ocl),
        ("context Accident inv: self.x->size() = 2)", TargetLanguage::Ocl),
        // Alloy.
        ("fact RearEnd { all a: Accident | #a.crashedVehicles = 2", TargetLanguage::Alloy),
        ("fcat RearEnd { no A }", TargetLanguage::Alloy),
        ("fact RearEnd { pred helper }", TargetLanguage::Alloy),
        ("fact RearEnd { sig Accident }", TargetLanguage::Alloy),
        ("fact RearEnd { all a: Accident | (a.x = 1] }", TargetLanguage::Alloy),
        ("fact RearEnd all a: Accident | a.x = 1", TargetLanguage::Alloy),
        ("fact RearEnd { a.x = 1; }", TargetLanguage::Alloy),
        ("fact RearEnd { a.x = 1 } }", TargetLanguage::Alloy),
        ("fact RearEnd { a.x = 1 ? 2 }", TargetLanguage::Alloy),
        ("fact RearEnd { all a: Accident | #a.crashedVehicles = 2 )", TargetLanguage::Alloy),
        // Baseline.
        ("def check_rear_end(accidents:\n    return True", TargetLanguage::Python),
        ("def check_rear_end(accidents)\n    return True", TargetLanguage::Python),
        ("def f(x):\n    if x:\n        return True\n      return False", TargetLanguage::Python),
        ("def f(a):\n    x = a['type'\n    return True", TargetLanguage::Python),
        ("def f(a):\n    return a == 'open", TargetLanguage::Python),
        ("def f(a):\n    x = 1\n      y = 2\n    return True", TargetLanguage::Python),
        ("", TargetLanguage::Python),
        ("def f(a):", TargetLanguage::Python),
        ("def f(a):\n    return (a]", TargetLanguage::Python),
        ("if x:\nreturn True", TargetLanguage::Python),
    ];
    for (i, (text, language)) in mutations.iter().enumerate() {
        let result = check_builtin(text, *language);
        assert!(!result.passed, "mutation {i} unexpectedly passed: {text:?}");
        assert!(
            !result.diagnostics.is_empty()
                && result.diagnostics.iter().all(|d| !d.message.trim().is_empty()),
            "mutation {i} lacks a usable diagnostic"
        );
    }
    println!("ACCEPTANCE 6 validator soundness (3 references pass, 30 mutations fail): PASS");
}

/// Criterion 7: calibration arithmetic on a 12-record fixture with a
/// hand-computed confusion matrix; zero denominators are N/A, never 0.
#[test]
fn acceptance_7_calibration_arithmetic() {
    // Hand-built: 3 TP, 1 FP, 1 FN, 5 TN overlap; 2 decisions unlabeled.
    let mut decisions: Vec<(String, bool)> = Vec::new();
    let mut labels = Vec::new();
    let mut label = |id: &str, value: bool| {
        labels.push(dslbench::dataset::ManualLabel {
            snippet_ref: id.to_string(),
            wf_label: Some(value),
            correctness_label: Some(value),
            annotator: "fixture".into(),
        });
    };
    for i in 0..3 {
        decisions.push((format!("tp{i}"), true));
        label(&format!("tp{i}"), true);
    }
    decisions.push(("fp0".into(), true));
    label("fp0", false);
    decisions.push(("fn0".into(), false));
    label("fn0", true);
    for i in 0..5 {
        decisions.push((format!("tn{i}"), false));
        label(&format!("tn{i}"), false);
    }
    decisions.push(("unlabeled0".into(), true));
    decisions.push(("unlabeled1".into(), false));
    assert_eq!(decisions.len(), 12);

    let calibration = calibrate(&decisions, &labels).unwrap();
    assert_eq!(calibration.matrix, ConfusionMatrix { tp: 3, fp: 1, fn_: 1, tn: 5 });
    assert_eq!(calibration.precision, Some(0.75));
    assert_eq!(calibration.recall, Some(0.75));

    // Zero-denominator: the judge never says correct.
    let negative: Vec<(String, bool)> =
        (0..5).map(|i| (format!("tn{i}"), false)).collect();
    let degenerate = calibrate(&negative, &labels).unwrap();
    assert_eq!(degenerate.precision, None, "precision must be N/A, not 0");
    assert_eq!(degenerate.matrix.tp + degenerate.matrix.fp, 0);
    println!("ACCEPTANCE 7 calibration arithmetic (confusion, precision/recall, N/A): PASS");
}

/// Criterion 8: aggregate pass@k is non-decreasing in k and repair gain is
/// never negative, over 1,000 randomized outcome sets.
#[test]
fn acceptance_8_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(77_210_399);
    for _ in 0..1_000 {
        let outcomes = random_outcomes(&mut rng, 6);
        let max_k = outcomes.iter().map(|o| o.n).min().unwrap();
        let mut previous = 0.0f64;
        for k in 1..=max_k {
            let value = aggregate_pass_at_k(&outcomes, k, false).unwrap();
            assert!(
                value >= previous,
                "pass@{k} = {value} < pass@{} = {previous} on {outcomes:?}",
                k - 1
            );
            previous = value;

            let gain = repair_gain(&outcomes, k).unwrap();
            assert!(gain >= 0.0, "repair gain {gain} negative at k={k} on {outcomes:?}");
        }
    }
    println!("ACCEPTANCE 8 monotonicity (pass@k in k, repair gain >= 0, 1000 sets): PASS");
}
