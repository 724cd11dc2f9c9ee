//! The four membership conditions and the full check built from them.

mod checks;
mod growth;
mod sampler;
mod samples;

pub use checks::{check_e1, check_e2, check_e3};
pub use growth::{check_e4, estimate_level, GrowthLevel, LevelEstimates};
pub use sampler::{sample_levels, SampleLevel, SamplingConfig};
pub use samples::{extend_h, Extension, HSample, NatSample, Origin, PartialHamiltonian, PositionSamples};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::expr::{decompose, Candidate, GameFrame, PiecewiseForm, Position};
use crate::geometry::norm;
use crate::nonsmooth::{analyze, CjClass, LocalAnalysis, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionId {
    E1,
    E2,
    E3,
    E4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "IN_VALF")]
    InValf,
    #[serde(rename = "NOT_IN_VALF")]
    NotInValf,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

impl Verdict {
    /// Process exit code for the verdict.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::InValf => 0,
            Verdict::NotInValf => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
    pub message: String,
    /// True when the failure does not depend on how `h` is extended beyond
    /// the limiting gradients.
    pub definitive: bool,
    pub detail: Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub gamma: f64,
    #[serde(rename = "L")]
    pub lipschitz_x: f64,
    #[serde(rename = "W")]
    pub time_modulus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub id: ConditionId,
    pub status: Status,
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Estimates>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn new(id: ConditionId, status: Status) -> Self {
        Self {
            id,
            status,
            witnesses: Vec::new(),
            estimates: None,
            notes: Vec::new(),
        }
    }

    pub fn from_witnesses(id: ConditionId, witnesses: Vec<Witness>) -> Self {
        let status = if witnesses.is_empty() {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            witnesses,
            ..Self::new(id, status)
        }
    }

    /// A failure none of whose witnesses is definitive only says the
    /// particular extension of `h` is bad, not that no extension works.
    fn soften(&mut self) {
        if self.status == Status::Fail && !self.witnesses.iter().any(|w| w.definitive) {
            self.status = Status::Inconclusive;
            self.notes
                .push("failures involve only extended values of h; another extension might pass".into());
        }
    }

    fn truncate(&mut self, max: usize) {
        if self.witnesses.len() > max {
            let total = self.witnesses.len();
            // Keep definitive witnesses first.
            self.witnesses.sort_by_key(|w| !w.definitive);
            self.witnesses.truncate(max);
            self.notes.push(format!("{total} witnesses found, {max} kept"));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub sampling: SamplingConfig,
    pub tol: f64,
    /// Relative change below which growth estimates count as stable.
    pub e4_stable: f64,
    /// Growth factor between levels that counts as divergence.
    pub e4_growth: f64,
    pub max_witnesses: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            tol: 1e-9,
            e4_stable: 0.10,
            e4_growth: 10.0,
            max_witnesses: 25,
        }
    }
}

/// Local structure at one representative point of each kink stratum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    /// Sign of each kink hyperplane; `0` where the point lies on it.
    pub pattern: Vec<i8>,
    pub position: Position,
    pub count: usize,
    pub cj_class: CjClass,
    pub limiting: Vec<(Vec<f64>, f64)>,
    pub dini_sub: Vec<Vec<f64>>,
    pub dini_super: Vec<Vec<f64>>,
    pub clarke: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingSummary {
    pub config: SamplingConfig,
    pub positions_per_level: Vec<usize>,
    pub nonsmooth: usize,
    pub cj_minus: usize,
    pub cj_plus: usize,
    pub neither: usize,
    pub hamiltonian_samples: usize,
    pub levels: Vec<LevelEstimates>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub candidate: Value,
    pub frame: GameFrame,
    pub hyperplanes: usize,
    pub pieces: usize,
    pub conditions: Vec<ConditionReport>,
    pub overall: Verdict,
    pub sampling: SamplingSummary,
    pub strata: Vec<StratumSummary>,
    pub warnings: Vec<String>,
    pub config: CheckConfig,
    pub seed: u64,
}

impl VerdictReport {
    pub fn condition(&self, id: ConditionId) -> &ConditionReport {
        self.conditions.iter().find(|c| c.id == id).expect("all four conditions present")
    }
}

/// Report plus what synthesis needs downstream.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub report: VerdictReport,
    pub form: PiecewiseForm,
    /// Limiting and extended samples from every level.
    pub hamiltonian: PartialHamiltonian,
}

fn combine(statuses: impl IntoIterator<Item = Status>) -> Verdict {
    let mut v = Verdict::InValf;
    for s in statuses {
        match s {
            Status::Fail => return Verdict::NotInValf,
            Status::Inconclusive => v = Verdict::Inconclusive,
            Status::Pass => {}
        }
    }
    v
}

/// Limiting samples plus extended one-sided samples at each analyzed position.
fn hamiltonian_samples(analyses: &[LocalAnalysis], tol: f64) -> Result<PartialHamiltonian> {
    let groups: Vec<PositionSamples> = analyses
        .par_iter()
        .map(|a| -> Result<PositionSamples> {
            let mut samples: Vec<HSample> = a
                .e1
                .iter()
                .map(|e| HSample {
                    s: e.s.clone(),
                    h: e.h,
                    origin: Origin::E1,
                })
                .collect();
            if let Some(e2) = &a.e2 {
                let limiting: Vec<(Vec<f64>, f64)> = a.e1.iter().map(|e| (e.s.clone(), e.h)).collect();
                for s in &e2.samples {
                    match extend_h(&limiting, s, tol) {
                        Ok(Extension::Value { h, .. }) => samples.push(HSample {
                            s: s.clone(),
                            h,
                            origin: Origin::E2,
                        }),
                        Ok(Extension::IllDefined { .. }) | Err(Error::NotInHull(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok(PositionSamples {
                position: a.position.clone(),
                samples,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PartialHamiltonian::new(groups))
}

fn growth_levels(per_level: &[PartialHamiltonian], zero_tol: f64) -> Vec<GrowthLevel> {
    let mut acc: Vec<NatSample> = Vec::new();
    let mut out = Vec::new();
    for (k, ph) in per_level.iter().enumerate() {
        acc.extend(ph.natural(zero_tol));
        out.push(GrowthLevel {
            t_floor: if k == 0 {
                None
            } else {
                Some(ph.groups.first().map(|g| g.position.t).unwrap_or(f64::NAN))
            },
            samples: acc.clone(),
        });
    }
    out
}

fn strata(pw: &PiecewiseForm, analyses: &[LocalAnalysis]) -> Vec<StratumSummary> {
    let mut map: BTreeMap<Vec<i8>, (usize, usize)> = BTreeMap::new();
    for (i, a) in analyses.iter().enumerate() {
        if a.smooth {
            continue;
        }
        let pattern = pw.sign_pattern(&a.position.coords());
        map.entry(pattern).and_modify(|e| e.1 += 1).or_insert((i, 1));
    }
    map.into_iter()
        .map(|(pattern, (i, count))| {
            let a = &analyses[i];
            StratumSummary {
                pattern,
                position: a.position.clone(),
                count,
                cj_class: a.cj_class,
                limiting: a.e1.iter().map(|e| (e.s.clone(), e.h)).collect(),
                dini_sub: a.sub.vertices.clone(),
                dini_super: a.sup.vertices.clone(),
                clarke: a.clarke.clone(),
            }
        })
        .collect()
}

fn warnings(pw: &PiecewiseForm, analyses: &[LocalAnalysis], cfg: &SamplingConfig) -> Vec<String> {
    let mut out = Vec::new();
    let degree = pw.pieces.iter().map(|p| p.poly.degree()).max().unwrap_or(0);
    if degree > 1 {
        out.push(format!(
            "pieces have polynomial degree {degree}; global Lipschitz bounds are checked on the sampled box only"
        ));
    }
    let half = 0.5 * (cfg.x_hi - cfg.x_lo);
    let mid = 0.5 * (cfg.x_hi + cfg.x_lo);
    let (mut inner, mut outer) = (0.0f64, 0.0f64);
    for a in analyses {
        let g = a.e1.iter().map(|e| norm(&e.s)).fold(0.0, f64::max);
        outer = outer.max(g);
        if a.position.x.iter().all(|v| (v - mid).abs() <= 0.5 * half) {
            inner = inner.max(g);
        }
    }
    if inner > 0.0 && outer > 1.5 * inner {
        out.push(format!(
            "spatial gradient bound grows from {inner:.3} on the inner half-box to {outer:.3} on the full box"
        ));
    }
    out
}

/// Run all four conditions on a candidate.
pub fn full_check(c: &Candidate, cfg: &CheckConfig) -> Result<CheckOutcome> {
    let pw = decompose(c)?;
    if pw.n() > MAX_DIM {
        return Err(Error::DimensionUnsupported { n: pw.n(), max: MAX_DIM });
    }
    let scfg = &cfg.sampling;
    let levels = sample_levels(&pw, scfg);
    let analyzed: Vec<Vec<LocalAnalysis>> = levels
        .iter()
        .map(|l| {
            l.positions
                .par_iter()
                .map(|p| analyze(&pw, p, scfg.e2_interior, scfg.seed))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let all: Vec<LocalAnalysis> = analyzed.iter().flatten().cloned().collect();

    let e1 = check_e1(&all)?;
    let mut e2 = check_e2(&all, cfg.tol)?;
    e2.soften();

    let per_level: Vec<PartialHamiltonian> = analyzed
        .iter()
        .map(|a| hamiltonian_samples(a, cfg.tol))
        .collect::<Result<_>>()?;
    let hamiltonian = PartialHamiltonian::new(per_level.iter().flat_map(|p| p.groups.clone()).collect());

    let mut e3 = check_e3(&hamiltonian, cfg.tol)?;
    e3.soften();

    let zero_tol = 1e-9;
    let (mut e4, level_estimates) = check_e4(&growth_levels(&per_level, zero_tol), cfg.e4_stable, cfg.e4_growth)?;
    if e4.status == Status::Fail {
        let limiting_only: Vec<PartialHamiltonian> = per_level.iter().map(|p| p.only(Origin::E1)).collect();
        let (e4_lim, _) = check_e4(&growth_levels(&limiting_only, zero_tol), cfg.e4_stable, cfg.e4_growth)?;
        if e4_lim.status == Status::Fail {
            for w in e4.witnesses.iter_mut() {
                w.definitive = true;
            }
            e4.notes.push("growth persists on limiting gradients alone".into());
        } else {
            e4.status = Status::Inconclusive;
            e4.notes.push("growth appears only on extended samples; limiting gradients alone do not diverge".into());
            e4.estimates = e4_lim.estimates;
        }
    }

    let mut conditions = vec![e1, e2, e3, e4];
    for c in conditions.iter_mut() {
        c.truncate(cfg.max_witnesses);
    }
    let overall = combine(conditions.iter().map(|c| c.status));

    let count = |k: CjClass| all.iter().filter(|a| a.cj_class == k && !a.smooth).count();
    let report = VerdictReport {
        candidate: c.to_json(),
        frame: c.frame,
        hyperplanes: pw.hyperplanes.len(),
        pieces: pw.pieces.len(),
        conditions,
        overall,
        sampling: SamplingSummary {
            config: scfg.clone(),
            positions_per_level: levels.iter().map(|l| l.positions.len()).collect(),
            nonsmooth: all.iter().filter(|a| !a.smooth).count(),
            cj_minus: count(CjClass::CjMinus),
            cj_plus: count(CjClass::CjPlus),
            neither: count(CjClass::Neither),
            hamiltonian_samples: hamiltonian.len(),
            levels: level_estimates,
        },
        strata: strata(&pw, &all),
        warnings: warnings(&pw, &analyzed[0], scfg),
        config: cfg.clone(),
        seed: scfg.seed,
    };
    Ok(CheckOutcome {
        report,
        form: pw,
        hamiltonian,
    })
}
