//! Runs the requested checks and assembles the suite report.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use elliptic_core::cartan_data::{parse_label, CartanData};
use elliptic_core::fock_oracle::{
    annulus_samples, exchange_spotcheck, FockSpace, OracleError, SpotVerdict, SpotcheckReport,
};
use elliptic_core::free_field::Conventions;
use elliptic_core::hopf_family::{
    check_axiom, check_coproduct_homomorphism, check_iterated_coproduct, check_tau_laws,
    tau_changes_structure, AxiomReport, Direction, Generator, HomomorphismReport, HopfConventions,
    HopfError, IteratedReport, TauLawReport, TauStructureReport,
};
use elliptic_core::relation_checker::{
    calibrate_shifts, check_ef_commutator, check_target, CalibrationBox, CalibrationRequest,
    CalibrationResult, CheckError, CheckWindow, DeltaDecomposition, RelationReport, Status, Target,
};
use elliptic_core::theta_products::{
    scaling_probe, Relation, ScalingProbeConfig, ScalingProbeReport, ThetaError,
};

use crate::config::{BoxChoice, CheckId, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("{check}: {source}")]
    Check {
        check: String,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("configuration: {0}")]
    Config(String),
}

fn fail<E: std::error::Error + Send + Sync + 'static>(check: CheckId) -> impl Fn(E) -> SuiteError {
    move |e| SuiteError::Check {
        check: check.to_string(),
        source: Box::new(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    PassAfterCalibration,
    Inconclusive,
    Fail,
}

impl Verdict {
    fn of(s: Status) -> Verdict {
        match s {
            Status::Pass => Verdict::Pass,
            Status::PassAfterCalibration => Verdict::PassAfterCalibration,
            Status::Fail => Verdict::Fail,
        }
    }

    /// Worst of several verdicts.
    fn all(vs: impl IntoIterator<Item = Verdict>) -> Verdict {
        vs.into_iter().max().unwrap_or(Verdict::Pass)
    }

    pub fn passed(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::PassAfterCalibration)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EfDetail {
    pub i: usize,
    pub decomposition: DeltaDecomposition,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", content = "reports", rename_all = "kebab-case")]
pub enum Body {
    Relation(Vec<RelationReport>),
    Ef {
        reports: Vec<RelationReport>,
        decompositions: Vec<EfDetail>,
    },
    Axiom(Vec<AxiomReport>),
    TauLaws(TauLawReport),
    TauStructure(Vec<TauStructureReport>),
    Homomorphism(Vec<HomomorphismReport>),
    Iterated(Vec<IteratedReport>),
    Oracle(Vec<SpotcheckReport>),
    Scaling {
        config: ScalingProbeConfig,
        report: ScalingProbeReport,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct Entry {
    pub check: CheckId,
    pub status: Verdict,
    /// Verdict under the literal conventions when the entry was rerun with
    /// calibrated ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub literal_status: Option<Verdict>,
    #[serde(flatten)]
    pub body: Body,
    /// The literal run's reports, kept when the entry was rerun.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub literal: Option<Box<Body>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub checks: usize,
    pub passed: usize,
    pub inconclusive: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub status: Verdict,
    pub summary: Summary,
    pub entries: Vec<Entry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.status.passed()
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    cartan: CartanData,
    window: CheckWindow,
}

impl Ctx<'_> {
    fn pairs(&self) -> Vec<(usize, usize)> {
        match self.cfg.nodes {
            Some(p) => vec![p],
            None => self.cartan.node_pairs(),
        }
    }

    fn keep(&self, i: usize, j: usize) -> bool {
        self.cfg.nodes.is_none_or(|p| p == (i, j))
    }
}

fn relation_entry(
    ctx: &Ctx,
    id: CheckId,
    target: Target,
    conv: &Conventions,
) -> Result<Body, SuiteError> {
    if target == Target::EfCommutator {
        let mut reports = Vec::new();
        let mut decompositions = Vec::new();
        for (i, j) in ctx.pairs() {
            let (rep, dd) =
                check_ef_commutator(i, j, &ctx.cartan, ctx.window, conv).map_err(fail(id))?;
            reports.push(rep);
            if i == j {
                decompositions.push(EfDetail {
                    i,
                    decomposition: dd,
                });
            }
        }
        return Ok(Body::Ef {
            reports,
            decompositions,
        });
    }
    let reports = check_target(target, &ctx.cartan, ctx.window, conv).map_err(fail(id))?;
    let keep_all = matches!(target, Target::EfSupports);
    Ok(Body::Relation(
        reports
            .into_iter()
            .filter(|r| keep_all || ctx.keep(r.i, r.j))
            .collect(),
    ))
}

fn hopf_conventions(cfg: &RunConfig) -> HopfConventions {
    HopfConventions {
        charges: cfg.charge_reading,
        antipode: cfg.antipode_convention,
    }
}

fn scaling_config(cartan: &CartanData) -> ScalingProbeConfig {
    ScalingProbeConfig {
        eps: vec![0.1, 0.05, 0.025, 0.0125],
        hbar: 1.0,
        eta: 2.0,
        u: 0.3,
        a_ij: cartan.entry(0, 0),
    }
}

fn oracle_entry(
    ctx: &Ctx,
    id: CheckId,
    rel: Relation,
    conv: &Conventions,
) -> Result<Body, SuiteError> {
    let mut out = Vec::new();
    for s in &ctx.cfg.samples {
        let space = FockSpace::new(
            ctx.cartan.clone(),
            *conv,
            s.a.clone(),
            s.b.clone(),
            ctx.cfg.cutoff,
        )
        .map_err(fail::<OracleError>(id))?;
        for (i, j) in ctx.pairs() {
            let pts = annulus_samples(&space, rel, i, j).map_err(fail::<OracleError>(id))?;
            out.push(
                exchange_spotcheck(&space, rel.name(), i, j, &pts)
                    .map_err(fail::<OracleError>(id))?,
            );
        }
    }
    Ok(Body::Oracle(out))
}

fn run_one(ctx: &Ctx, id: CheckId, conv: &Conventions) -> Result<Body, SuiteError> {
    if let Some(t) = id.target() {
        return relation_entry(ctx, id, t, conv);
    }
    let hopf = hopf_conventions(ctx.cfg);
    Ok(match id {
        CheckId::Axiom(a) => Body::Axiom(
            Generator::ALL
                .into_par_iter()
                .map(|g| check_axiom(a, g, 0, 1, &hopf))
                .collect::<Result<_, _>>()
                .map_err(fail::<HopfError>(id))?,
        ),
        CheckId::TauLaws => Body::TauLaws(check_tau_laws().map_err(fail::<HopfError>(id))?),
        CheckId::TauStructure => Body::TauStructure(
            Relation::ALL
                .iter()
                // A_ij = 0 leaves every coefficient equal to 1
                .flat_map(|&r| {
                    ctx.pairs()
                        .into_iter()
                        .filter(|&(i, j)| ctx.cartan.entry(i, j) != 0)
                        .map(move |(i, j)| (r, i, j))
                })
                .map(|(r, i, j)| {
                    tau_changes_structure(r, i, j, &ctx.cartan, ctx.cfg.charges[0], ctx.window)
                })
                .collect::<Result<_, _>>()
                .map_err(fail::<HopfError>(id))?,
        ),
        CheckId::Homomorphism(rel) => {
            let mut out = Vec::new();
            for (i, j) in ctx.pairs() {
                for dir in [Direction::Plus, Direction::Minus] {
                    let r = check_coproduct_homomorphism(
                        rel,
                        i,
                        j,
                        &ctx.cartan,
                        dir,
                        ctx.cfg.charges,
                        ctx.window,
                    )
                    .map_err(fail::<HopfError>(id))?;
                    out.push(if ctx.cfg.timing {
                        r
                    } else {
                        r.without_timing()
                    });
                }
            }
            Body::Homomorphism(out)
        }
        CheckId::Iterated(m) => Body::Iterated(
            Generator::ALL
                .into_iter()
                .map(|g| check_iterated_coproduct(g, m, &hopf))
                .collect::<Result<_, _>>()
                .map_err(fail::<HopfError>(id))?,
        ),
        CheckId::Fock(rel) => oracle_entry(ctx, id, rel, conv)?,
        CheckId::Scaling => {
            let config = scaling_config(&ctx.cartan);
            let report = scaling_probe(&config).map_err(fail::<ThetaError>(id))?;
            Body::Scaling { config, report }
        }
        _ => unreachable!("relation checks handled above"),
    })
}

fn verdict(body: &Body) -> Verdict {
    match body {
        Body::Relation(rs) | Body::Ef { reports: rs, .. } => {
            Verdict::all(rs.iter().map(|r| Verdict::of(r.status)))
        }
        Body::Axiom(rs) => Verdict::all(rs.iter().map(|r| Verdict::of(r.status))),
        Body::TauLaws(r) => Verdict::of(r.status),
        Body::TauStructure(rs) => Verdict::all(rs.iter().map(|r| {
            if r.changed {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        })),
        Body::Homomorphism(rs) => Verdict::all(rs.iter().map(|r| Verdict::of(r.status))),
        Body::Iterated(rs) => Verdict::all(rs.iter().map(|r| Verdict::of(r.status))),
        Body::Oracle(rs) => Verdict::all(rs.iter().map(|r| match r.verdict {
            SpotVerdict::Pass => Verdict::Pass,
            SpotVerdict::Fail => Verdict::Fail,
            SpotVerdict::Inconclusive => Verdict::Inconclusive,
        })),
        Body::Scaling { report, .. } => {
            if report.converging {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
    }
}

fn strip_timing(body: Body) -> Body {
    match body {
        Body::Relation(rs) => {
            Body::Relation(rs.into_iter().map(RelationReport::without_timing).collect())
        }
        Body::Ef {
            reports,
            decompositions,
        } => Body::Ef {
            reports: reports
                .into_iter()
                .map(RelationReport::without_timing)
                .collect(),
            decompositions,
        },
        b => b,
    }
}

fn entry(ctx: &Ctx, id: CheckId, conv: &Conventions) -> Result<Entry, SuiteError> {
    let start = Instant::now();
    let mut body = run_one(ctx, id, conv)?;
    let elapsed = (start.elapsed().as_secs_f64() * 1e6).round() / 1e3;
    if !ctx.cfg.timing {
        body = strip_timing(body);
    }
    Ok(Entry {
        check: id,
        status: verdict(&body),
        literal_status: None,
        body,
        literal: None,
        elapsed_ms: ctx.cfg.timing.then_some(elapsed),
    })
}

fn calibration_request(ctx: &Ctx, targets: Vec<Target>) -> CalibrationRequest {
    let mut req = CalibrationRequest::new(targets);
    req.window = ctx.window;
    req.cocycle = ctx.cfg.cocycle;
    if ctx.cfg.calibration_box == BoxChoice::WithHShifts {
        req.search_box = CalibrationBox::default().with_h_shifts((-2, 2));
    }
    req
}

/// Executes every requested check. Results keep the requested order.
pub fn run(cfg: &RunConfig) -> Result<SuiteReport, SuiteError> {
    cfg.validate()
        .map_err(|e| SuiteError::Config(e.to_string()))?;
    let cartan = parse_label(&cfg.algebra).map_err(|e| SuiteError::Config(e.to_string()))?;
    let ctx = Ctx {
        cfg,
        cartan,
        window: CheckWindow {
            kx: cfg.kx,
            knome: cfg.knome,
        },
    };
    let literal = Conventions {
        cocycle: cfg.cocycle,
        ..Conventions::literal()
    };

    let mut entries: Vec<Entry> = cfg
        .checks
        .par_iter()
        .map(|&id| entry(&ctx, id, &literal))
        .collect::<Result<_, _>>()?;

    let mut calibration = None;
    let failing: Vec<usize> = (0..entries.len())
        .filter(|&k| !entries[k].status.passed() && entries[k].check.target().is_some())
        .collect();
    if cfg.calibrate && !failing.is_empty() {
        let mut targets: Vec<Target> = cfg.checks.iter().filter_map(|c| c.target()).collect();
        targets.dedup();
        let res = calibrate_shifts(&ctx.cartan, &calibration_request(&ctx, targets))
            .map_err(fail::<CheckError>(cfg.checks[failing[0]]))?;
        if let Some(class) = res.solutions.first() {
            let conv = class.representative;
            // one convention set for every relation check of the suite
            let relation: Vec<usize> = (0..entries.len())
                .filter(|&k| entries[k].check.target().is_some())
                .collect();
            let rerun: Vec<Entry> = relation
                .par_iter()
                .map(|&k| entry(&ctx, entries[k].check, &conv))
                .collect::<Result<_, _>>()?;
            for (k, mut e) in relation.iter().copied().zip(rerun) {
                let old = std::mem::replace(&mut entries[k], e.clone());
                e.literal_status = Some(old.status);
                e.literal = Some(Box::new(old.body));
                entries[k] = e;
            }
        }
        calibration = Some(if cfg.timing {
            res
        } else {
            res.without_timing()
        });
    }

    let mut summary = Summary {
        checks: entries.len(),
        ..Default::default()
    };
    for e in &entries {
        match e.status {
            Verdict::Pass | Verdict::PassAfterCalibration => summary.passed += 1,
            Verdict::Inconclusive => summary.inconclusive += 1,
            Verdict::Fail => summary.failed += 1,
        }
    }
    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        status: Verdict::all(entries.iter().map(|e| e.status)),
        summary,
        entries,
        calibration,
    })
}
