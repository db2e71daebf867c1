//! End-to-end acceptance run: one PASS/FAIL line per criterion, each under its
//! time limit. Run with `cargo test --test acceptance -- --nocapture` to see
//! the lines.

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::Value;

use elliptic_core::cartan_data::parse_label;
use elliptic_core::fock_oracle::{two_point_agreement, FockSpace};
use elliptic_core::free_field::{Conventions, CurrentKind};
use elliptic_core::lattice_series::{
    q_frac, q_int, window_equal, Exps, Monomial, Series, VarDesc, VariableTable, Window,
};
use elliptic_core::relation_checker::{
    check_serre, check_serre_mutated, CheckWindow, SerreMutation, Status,
};
use elliptic_core::theta_products::{theta, NomeBasis};
use elliptic_workbench::{report, run, Format, RunConfig, SuiteReport};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn config(text: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_text(text).expect("valid config");
    cfg
}

fn suite(text: &str) -> Result<(SuiteReport, Value), String> {
    let rep = run(&config(text)).map_err(|e| e.to_string())?;
    let v = serde_json::from_str(&report::emit(&rep, Format::Json)).map_err(|e| e.to_string())?;
    Ok((rep, v))
}

// 1. Series ring axioms.

fn small_table() -> Arc<VariableTable> {
    VariableTable::spectral_nomes(&["x"])
}

fn small_window() -> Window {
    Window::symmetric(&small_table(), 12, 12)
}

fn term() -> impl Strategy<Value = (Exps, elliptic_core::lattice_series::Q)> {
    (-2i32..=2, 0i32..=2, 0i32..=2, -5i64..=5, 1i64..=3).prop_map(|(x, p, q, n, d)| {
        let mut e = Exps::unit(0, 4 * x);
        e.0[1] = 4 * p;
        e.0[2] = 4 * q;
        (e, q_frac(n, d))
    })
}

fn series() -> impl Strategy<Value = Series> {
    prop::collection::vec(term(), 0..5)
        .prop_map(|ts| Series::from_terms(&small_table(), &small_window(), ts))
}

fn same(a: &Series, b: &Series) -> bool {
    !a.is_truncated() && !b.is_truncated() && window_equal(a, b, &small_window()).unwrap().equal
}

fn series_engine() -> Outcome {
    let cases = 256;
    let mut runner = TestRunner::new(Config {
        failure_persistence: None,
        ..Config::with_cases(cases)
    });
    runner
        .run(&(series(), series(), series()), |(a, b, c)| {
            let t = small_table();
            let w = small_window();
            prop_assert!(same(&(&a + &b), &(&b + &a)));
            prop_assert!(same(&(&(&a + &b) + &c), &(&a + &(&b + &c))));
            prop_assert!(same(&(&a + &a.neg()), &Series::zero(&t, &w)));
            prop_assert!(same(&(&a * &b), &(&b * &a)));
            prop_assert!(same(&(&(&a * &b) * &c), &(&a * &(&b * &c))));
            prop_assert!(same(&(&a * &(&b + &c)), &(&(&a * &b) + &(&a * &c))));
            prop_assert!(same(&(&a * &Series::one(&t, &w)), &a));
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let unit = (
        -2i32..=2,
        prop::sample::select(vec![-3i64, -1, 1, 2]),
        prop::collection::vec(term(), 0..4),
    );
    let mut runner = TestRunner::new(Config {
        failure_persistence: None,
        ..Config::with_cases(cases)
    });
    runner
        .run(&unit, |(x, c, ts)| {
            let t = small_table();
            let w = small_window();
            let lead = (Exps::unit(0, 4 * x), q_int(c));
            let rest = ts.into_iter().filter(|(e, _)| e.0[1] + e.0[2] > 0);
            let a = Series::from_terms(&t, &w, std::iter::once(lead).chain(rest));
            let inv = a.invert().unwrap();
            prop_assert!(
                window_equal(&(&a * &inv), &Series::one(&t, &w), &w)
                    .unwrap()
                    .equal
            );
            prop_assert!(window_equal(&inv.invert().unwrap(), &a, &w).unwrap().equal);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{cases} ring cases, {cases} inversions"))
}

// 2. Theta identities against the Jacobi sum.

fn zq() -> Arc<VariableTable> {
    VariableTable::new(vec![
        VarDesc::spectral("z"),
        VarDesc::nome("p"),
        VarDesc::nome("q"),
    ])
    .unwrap()
}

fn jacobi_sum(t: &Arc<VariableTable>, w: &Window) -> Series {
    let terms = (-40i32..=40)
        .filter(|n| (2 * n * (n - 1)) as i64 <= w.work())
        .map(|n| {
            let e = t.exps(&[("z", 4 * n), ("q", 2 * n * (n - 1))]).unwrap();
            (e, q_int(if n % 2 == 0 { 1 } else { -1 }))
        });
    Series::from_terms(t, w, terms)
}

fn theta_identities() -> Outcome {
    let t = zq();
    let nb = NomeBasis::of(&t).map_err(|e| e.to_string())?;
    let z = Monomial::unit(t.exps(&[("z", 4)]).unwrap());
    let qn = nb.exps(0, 4);
    for k in 0..=6 {
        let w = Window::with_bounds(&t, &[("z", -24, 24)], 4 * k).unwrap();
        let th = theta(&t, &w, &z, qn).map_err(|e| e.to_string())?;
        let r = window_equal(&th, &jacobi_sum(&t, &w), &w).map_err(|e| e.to_string())?;
        ensure(r.equal, format!("K_nome = {k}: {:?}", r.witness))?;
    }
    let w = Window::with_bounds(&t, &[("z", -24, 24)], 24).unwrap();
    let base = theta(&t, &w, &z, qn).map_err(|e| e.to_string())?;
    let rhs = base.mul_monomial(&Monomial::new(t.exps(&[("z", -4)]).unwrap(), q_int(-1)));
    let shifted = theta(&t, &w, &z.mul(&Monomial::unit(qn)), qn).map_err(|e| e.to_string())?;
    ensure(
        window_equal(&shifted, &rhs, &w).unwrap().equal,
        "quasi-periodicity",
    )?;
    let inverted = theta(&t, &w, &z.inv(), qn).map_err(|e| e.to_string())?;
    ensure(
        window_equal(&inverted, &rhs, &w).unwrap().equal,
        "inversion",
    )?;
    Ok("K_nome 0..=6, z in [-6,6]".into())
}

// 3. Product forms against Fock matrix elements.

fn contraction_oracle() -> Outcome {
    let points = [
        (q_frac(1, 2), q_frac(1, 3)),
        (q_frac(2, 3), q_frac(1, 2)),
        (q_frac(1, 3), q_frac(3, 5)),
    ];
    let (z, w) = (q_frac(1, 1), q_frac(1, 1_000_000));
    let mut compared = 0;
    let mut tail = 0f64;
    for label in ["A1", "A2"] {
        let cd = parse_label(label).unwrap();
        for (a, b) in &points {
            let s = FockSpace::new(cd.clone(), Conventions::literal(), a.clone(), b.clone(), 6)
                .map_err(|e| e.to_string())?;
            for x in [CurrentKind::E, CurrentKind::F] {
                for y in [CurrentKind::E, CurrentKind::F] {
                    for (i, j) in cd.node_pairs() {
                        let r = two_point_agreement(&s, x, i, y, j, &z, &w)
                            .map_err(|e| e.to_string())?;
                        ensure(
                            r.exact_match,
                            format!("{label} {x}{y} ({i},{j}) at p^1/4={a}: {r:?}"),
                        )?;
                        compared += 1;
                        tail = tail.max(r.tail_estimate);
                    }
                }
            }
        }
    }
    Ok(format!(
        "{compared} matrix elements at N = 6, largest tail {tail:.2e}"
    ))
}

// 4. EE and FF exchange with calibration.

fn status(v: &Value) -> &str {
    v["status"].as_str().unwrap_or("")
}

fn exchange_relations() -> Outcome {
    let (rep, v) = suite("algebra = A2\ncheck = EE,FF,HC\ncalibrate = true\n")?;
    ensure(rep.passed(), format!("A2 suite: {}", status(&v)))?;
    let literal_failed = v["entries"]
        .as_array()
        .unwrap()
        .iter()
        .any(|e| e["literal_status"].is_string());
    if literal_failed {
        let sols = v["calibration"]["solutions"].as_array().map_or(0, Vec::len);
        ensure(sols > 0, "no calibration certificate")?;
    }
    let (orth, ov) = suite("algebra = A3\nnodes = 0,2\ncheck = EE,FF\n")?;
    ensure(orth.passed(), format!("A3 (0,2): {}", status(&ov)))?;
    Ok(format!(
        "A2 {}, A_ij = 0 on A3 (0,2) {}",
        status(&v),
        status(&ov)
    ))
}

// 5. [E,F] structure.

fn ef_structure() -> Outcome {
    let (rep, v) =
        suite("algebra = A2\ncheck = EF\ncalibrate = true\ncalibration-box = with-h-shifts\n")?;
    ensure(rep.passed(), format!("EF suite: {}", status(&v)))?;
    let entry = &v["entries"][0];
    for d in entry["reports"]["decompositions"].as_array().unwrap() {
        let d = &d["decomposition"];
        ensure(d["orderings_agree"] == true, "orderings disagree")?;
        ensure(d["supports_match"] == true, "supports differ from {q, pq}")?;
        for t in d["terms"].as_array().unwrap() {
            ensure(
                t["operator_matches"] == true,
                format!("residue operator {}", t["operator"]),
            )?;
        }
    }
    let literal_pass = entry["literal_status"].is_null();
    if !literal_pass {
        ensure(
            v["calibration"]["solutions"]
                .as_array()
                .is_some_and(|s| !s.is_empty()),
            "no certificate",
        )?;
    }
    let offset = entry["literal"]["reports"]["reports"]
        .as_array()
        .into_iter()
        .flatten()
        .flat_map(|r| r["notes"].as_array().into_iter().flatten())
        .filter_map(|n| {
            n.as_str()?
                .strip_prefix("measured support offset ")
                .map(str::to_string)
        })
        .next();
    let offset = if literal_pass {
        "1".to_string()
    } else {
        offset.ok_or("literal offset not reported")?
    };
    Ok(format!("{}, literal offset {offset}", status(&v)))
}

// 6. Serre relations.

fn serre() -> Outcome {
    let cd = parse_label("A2").unwrap();
    let conv = Conventions::literal();
    let win = CheckWindow { kx: 2, knome: 3 };
    for field in [CurrentKind::E, CurrentKind::F] {
        let runs: Vec<_> = (0..2)
            .map(|_| check_serre(field, 0, 1, &cd, win, &conv).map(|r| r.without_timing()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let text: Vec<String> = runs
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        ensure(text[0] == text[1], format!("{field} verdict unstable"))?;
        ensure(
            runs[0].status == Status::Pass,
            format!("{field}: {:?}", runs[0].status),
        )?;
        let bad = check_serre_mutated(
            field,
            0,
            1,
            &cd,
            win,
            &conv,
            Some(SerreMutation::PsiArgument),
        )
        .map_err(|e| e.to_string())?;
        ensure(
            bad.status == Status::Fail,
            format!("{field} mutation did not flip"),
        )?;
    }
    Ok("E and F pass, mutations fail".into())
}

// 7. Hopf axioms.

fn a2_differences(v: &Value) -> Vec<String> {
    v["entries"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|e| e["reports"].as_array().into_iter().flatten())
        .flat_map(|r| r["parts"].as_array().into_iter().flatten())
        .filter(|p| !p["difference"].is_null())
        .map(|p| p["difference"].to_string())
        .collect()
}

fn hopf_axioms() -> Outcome {
    let (rep, v) = suite("check = a1,a2,a3,tau\n")?;
    ensure(rep.passed(), format!("defaults: {}", status(&v)))?;
    let numeric = "check = a2\nantipode-convention = numeric\n";
    let (bad, bv) = suite(numeric)?;
    ensure(!bad.passed(), "numeric antipode passed a2")?;
    let first = a2_differences(&bv);
    ensure(!first.is_empty(), "no witness")?;
    ensure(
        first == a2_differences(&suite(numeric)?.1),
        "witness unstable",
    )?;
    Ok(format!(
        "numeric antipode fails a2 with {} witness parts",
        first.len()
    ))
}

// 8. Homomorphism and iterated coproducts.

fn homomorphism() -> Outcome {
    let (rep, v) = suite("check = hom:H+H+,hom:H+H-,iter:2\ncharges = 1,1\nKx = 3\nKnome = 4\n")?;
    ensure(rep.passed(), format!("{}", v["entries"]))?;
    let count = |kind: &str| -> usize {
        v["entries"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|e| e["kind"] == kind)
            .flat_map(|e| e["reports"].as_array().into_iter().flatten())
            .map(|r| r["identities"].as_array().map_or(1, Vec::len))
            .sum()
    };
    Ok(format!(
        "{} coefficient identities, {} iterated coproducts",
        count("homomorphism"),
        count("iterated")
    ))
}

// 9. Scaling probe.

fn scaling() -> Outcome {
    let (rep, v) = suite("algebra = A1\ncheck = scaling\n")?;
    ensure(rep.passed(), format!("{}", v["entries"][0]))?;
    let diffs = &v["entries"][0]["reports"]["report"]["cauchy_differences"];
    Ok(format!("Cauchy differences {diffs}"))
}

// 10. Determinism.

fn determinism() -> Outcome {
    let args = [
        "run",
        "--algebra",
        "A2",
        "--check",
        "EE,FF,HC,EF,a1,a2,tau,hom:H+H-,iter:2,scaling",
        "--calibrate",
    ];
    let once = || {
        Command::new(env!("CARGO_BIN_EXE_workbench"))
            .args(args)
            .output()
            .map_err(|e| e.to_string())
    };
    let (a, b) = (once()?, once()?);
    ensure(!a.stdout.is_empty(), "empty report")?;
    ensure(a.stdout == b.stdout, "reports differ")?;
    Ok(format!("{} identical bytes", a.stdout.len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, u64, fn() -> Outcome); 10] = [
        ("series engine ring axioms", 30, series_engine),
        ("theta identities", 60, theta_identities),
        ("contraction oracle equivalence", 300, contraction_oracle),
        ("exchange relations at c = 1", 600, exchange_relations),
        ("[E,F] structure", 600, ef_structure),
        ("Serre relations", 900, serre),
        ("Hopf axioms", 10, hopf_axioms),
        ("coproduct homomorphism", 300, homomorphism),
        ("scaling probe", 10, scaling),
        ("determinism", 600, determinism),
    ];
    let mut failed = Vec::new();
    for (k, (name, limit, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(m) if took > Duration::from_secs(limit) => {
                Err(format!("{m}; over the {limit} s limit"))
            }
            o => o,
        };
        let (tag, msg) = match &outcome {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        println!(
            "criterion {:>2} {tag}  {name} ({:.1} s / {limit} s): {msg}",
            k + 1,
            took.as_secs_f64()
        );
        if outcome.is_err() {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
