//! JSON and text renderings of a suite report.

use std::fmt::Write;

use elliptic_core::lattice_series::Witness;

use crate::config::Format;
use crate::suite::{Body, Entry, SuiteReport, Verdict};

pub fn emit(report: &SuiteReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => text(report),
    }
}

fn label(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "PASS",
        Verdict::PassAfterCalibration => "PASS (calibrated)",
        Verdict::Inconclusive => "INCONCLUSIVE",
        Verdict::Fail => "FAIL",
    }
}

fn witness(out: &mut String, indent: &str, w: &Witness) {
    let _ = writeln!(
        out,
        "{indent}witness at {} (exponents {:?})",
        w.monomial, w.exponents
    );
    let _ = writeln!(out, "{indent}  lhs: {}", w.lhs);
    let _ = writeln!(out, "{indent}  rhs: {}", w.rhs);
}

fn details(out: &mut String, e: &Entry) {
    match &e.body {
        Body::Relation(rs) | Body::Ef { reports: rs, .. } => {
            for r in rs.iter().filter(|r| !r.passed()) {
                let _ = writeln!(out, "    {} ({},{}) failed", r.relation, r.i, r.j);
                if let Some(w) = &r.witness {
                    witness(out, "      ", w);
                }
                for p in r.parts.iter().filter(|p| !p.passed) {
                    let _ = writeln!(out, "      part {} ({},{})", p.relation, p.i, p.j);
                    if let Some(w) = &p.witness {
                        witness(out, "        ", w);
                    }
                }
            }
            let mut ef: Vec<(&str, &Body)> = vec![("", &e.body)];
            if let Some(l) = &e.literal {
                ef.push(("literal ", l));
            }
            for (tag, body) in ef {
                let Body::Ef { decompositions, .. } = body else {
                    continue;
                };
                for d in decompositions {
                    let dd = &d.decomposition;
                    let supports: Vec<&str> = dd.terms.iter().map(|t| t.support.as_str()).collect();
                    let _ = writeln!(
                        out,
                        "    {4}[E_{0},F_{0}] supports {{{1}}}, expected {{{2}}}, offset {3}",
                        d.i,
                        supports.join(", "),
                        dd.expected_supports.join(", "),
                        dd.measured_offset.as_deref().unwrap_or("none"),
                        tag
                    );
                }
            }
        }
        Body::Axiom(rs) => {
            for r in rs.iter().filter(|r| !r.status.passed()) {
                for p in r.parts.iter().filter(|p| !p.passed) {
                    let _ = writeln!(
                        out,
                        "    {} on {} failed",
                        r.axiom.name(),
                        r.generator.name()
                    );
                    let _ = writeln!(out, "      lhs: {}", p.lhs);
                    let _ = writeln!(out, "      rhs: {}", p.rhs);
                    let _ = writeln!(out, "      difference: {}", p.difference.join(" ; "));
                }
            }
        }
        Body::Homomorphism(rs) => {
            for r in rs.iter().filter(|r| !r.passed()) {
                for d in r.identities.iter().filter(|d| !d.passed) {
                    let _ = writeln!(
                        out,
                        "    {} ({},{}) terms {} * {}",
                        r.relation, r.i, r.j, d.terms[0], d.terms[1]
                    );
                    if let Some(w) = &d.witness {
                        witness(out, "      ", w);
                    }
                }
            }
        }
        Body::TauStructure(rs) => {
            for r in rs.iter().filter(|r| !r.changed) {
                let _ = writeln!(out, "    {} ({},{}) unchanged by tau", r.relation, r.i, r.j);
            }
        }
        Body::Iterated(rs) => {
            for r in rs.iter().filter(|r| r.mismatch.is_some()) {
                let _ = writeln!(
                    out,
                    "    {} m={} differs for split order {:?}",
                    r.generator.name(),
                    r.m,
                    r.mismatch
                );
            }
        }
        Body::TauLaws(r) => {
            for l in r.laws.iter().filter(|l| !l.passed) {
                let _ = writeln!(out, "    {} on {}", l.law, l.generator.name());
            }
        }
        Body::Oracle(_) | Body::Scaling { .. } => {}
    }
}

fn text(report: &SuiteReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} (schema {})",
        report.tool, report.version, report.schema_version
    );
    let _ = writeln!(
        out,
        "algebra {}, window Kx={} Knome={}",
        report.config.algebra, report.config.kx, report.config.knome
    );
    for e in &report.entries {
        let mut line = format!("{:<18} {}", label(e.status), e.check);
        if let Some(l) = e.literal_status {
            let _ = write!(line, " [literal: {}]", label(l));
        }
        if let Some(ms) = e.elapsed_ms {
            let _ = write!(line, " {ms:.1} ms");
        }
        let _ = writeln!(out, "{line}");
        details(&mut out, e);
    }
    if let Some(c) = &report.calibration {
        let _ = writeln!(
            out,
            "calibration: {} classes ({} assignments) over targets [{}]",
            c.classes_total,
            c.solution_count,
            c.targets
                .iter()
                .map(|t| t.name())
                .collect::<Vec<_>>()
                .join(", ")
        );
        if let Some(s) = c.solutions.first() {
            let _ = writeln!(out, "  certificate: {}", s.representative.describe());
        }
    }
    let s = &report.summary;
    let _ = writeln!(
        out,
        "{}: {} checks, {} passed, {} inconclusive, {} failed",
        label(report.status),
        s.checks,
        s.passed,
        s.inconclusive,
        s.failed
    );
    out
}
