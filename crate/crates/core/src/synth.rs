//! Deterministic multi-domain synthetic ICU populations.
//!
//! Each stay draws seven standard-normal latent factors (six organ-system
//! factors plus standardised age). Measured concepts load on one factor, and
//! per-task latent risks are linear in the factors. Event probabilities are
//! `min(1, m * 0.5 * sigmoid(risk))` with `m` the prevalence multiplier, so
//! doubling `m` doubles the expected prevalence.
//!
//! All randomness comes from [`stay_stream`] keyed on
//! `(seed, domain_id, stay_index, stream)`, so stays can be generated in any
//! order and domains never share draws.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::num::NonZeroUsize;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::concept::{ConceptCatalog, ConceptId};
use crate::error::{Error, Result};
use crate::rng::{hash_str, keyed, stay_stream, StreamRng};
use crate::stay::{Event, EventRecord, Sex, StayStatic, StayTimeline};

/// Latent factors in coefficient order.
pub const FACTORS: [&str; 7] = ["cardiovascular", "respiratory", "renal", "hepatic", "inflammatory", "metabolic", "age"];
pub const N_FACTORS: usize = FACTORS.len();

const STREAM_PATIENT: u64 = 0;
const STREAM_OUTCOME: u64 = 1;
const STREAM_MEASURE: u64 = 2;
const STREAM_RENAL: u64 = 3;
const STREAM_INFECTION: u64 = 4;
const STREAM_COEF: u64 = 0x636f_6566;

const LOADING: f64 = 0.8;
const OU_TAU_H: f64 = 6.0;
const OU_SD: f64 = 0.35;
const MAX_ONSET_H: f64 = 168.0;

/// How a concept's values are produced from its standardised level `z`.
#[derive(Clone, Copy)]
struct ConceptModel {
    name: &'static str,
    center: f64,
    scale: f64,
    /// `center * exp(scale * z)` instead of `center + scale * z`.
    log: bool,
    rate: f64,
    factor: Option<(usize, f64)>,
}

const fn m(name: &'static str, center: f64, scale: f64, log: bool, rate: f64, factor: Option<(usize, f64)>) -> ConceptModel {
    ConceptModel { name, center, scale, log, rate, factor }
}

const CV: usize = 0;
const RESP: usize = 1;
const RENAL: usize = 2;
const HEP: usize = 3;
const INFL: usize = 4;
const MET: usize = 5;
const AGE: usize = 6;

const UP: f64 = 1.0;
const DOWN: f64 = -1.0;

/// Time-varying catalogue concepts except urine, which follows the renal model.
const MODELS: [ConceptModel; 47] = [
    m("sbp", 120.0, 18.0, false, 1.0, Some((CV, DOWN))),
    m("dbp", 65.0, 12.0, false, 1.0, Some((CV, DOWN))),
    m("hr", 88.0, 16.0, false, 1.0, Some((CV, UP))),
    m("map", 82.0, 12.0, false, 1.0, Some((CV, DOWN))),
    m("o2sat", 96.0, 2.5, false, 1.0, Some((RESP, DOWN))),
    m("resp", 19.0, 5.0, false, 1.0, Some((RESP, UP))),
    m("temp", 37.0, 0.6, false, 0.3, Some((INFL, UP))),
    m("alb", 3.2, 0.5, false, 1.0 / 24.0, Some((HEP, DOWN))),
    m("alp", 100.0, 0.4, true, 1.0 / 24.0, Some((HEP, UP))),
    m("alt", 35.0, 0.6, true, 1.0 / 24.0, Some((HEP, UP))),
    m("ast", 40.0, 0.6, true, 1.0 / 24.0, Some((HEP, UP))),
    m("be", 0.0, 3.5, false, 1.0 / 8.0, Some((MET, DOWN))),
    m("bicar", 24.0, 3.5, false, 1.0 / 8.0, Some((MET, DOWN))),
    m("bili", 0.8, 0.6, true, 1.0 / 24.0, Some((HEP, UP))),
    m("bili_dir", 0.3, 0.6, true, 1.0 / 48.0, Some((HEP, UP))),
    m("bnd", 5.0, 0.8, true, 1.0 / 72.0, Some((INFL, UP))),
    m("bun", 20.0, 0.5, true, 1.0 / 12.0, Some((RENAL, UP))),
    m("ca", 8.6, 0.6, false, 1.0 / 12.0, None),
    m("cai", 1.15, 0.08, false, 1.0 / 12.0, None),
    m("crea", 1.0, 0.3, true, 1.0 / 8.0, Some((RENAL, UP))),
    m("ck", 150.0, 0.9, true, 1.0 / 48.0, None),
    m("ckmb", 4.0, 0.8, true, 1.0 / 72.0, Some((CV, UP))),
    m("cl", 104.0, 4.0, false, 1.0 / 12.0, None),
    m("pco2", 40.0, 7.0, false, 1.0 / 6.0, Some((RESP, UP))),
    m("crp", 60.0, 0.9, true, 1.0 / 48.0, Some((INFL, UP))),
    m("fgn", 350.0, 0.3, true, 1.0 / 72.0, Some((INFL, UP))),
    m("glu", 130.0, 0.3, true, 1.0 / 6.0, Some((MET, UP))),
    m("hgb", 10.5, 1.6, false, 1.0 / 12.0, Some((MET, DOWN))),
    m("inr_pt", 1.2, 0.25, true, 1.0 / 24.0, Some((HEP, UP))),
    m("lact", 1.6, 0.5, true, 1.0 / 8.0, Some((CV, UP))),
    m("lymph", 12.0, 0.5, true, 1.0 / 48.0, Some((INFL, DOWN))),
    m("mch", 30.0, 2.0, false, 1.0 / 48.0, None),
    m("mchc", 33.0, 1.2, false, 1.0 / 48.0, None),
    m("mcv", 90.0, 5.0, false, 1.0 / 48.0, None),
    m("methb", 0.8, 0.4, true, 1.0 / 72.0, None),
    m("mg", 2.0, 0.25, false, 1.0 / 24.0, None),
    m("neut", 78.0, 8.0, false, 1.0 / 48.0, Some((INFL, UP))),
    m("po2", 95.0, 0.3, true, 1.0 / 6.0, Some((RESP, DOWN))),
    m("ptt", 32.0, 0.25, true, 1.0 / 24.0, Some((HEP, UP))),
    m("ph", 7.38, 0.06, false, 1.0 / 6.0, Some((MET, DOWN))),
    m("phos", 3.5, 0.3, true, 1.0 / 24.0, Some((RENAL, UP))),
    m("plt", 200.0, 0.4, true, 1.0 / 12.0, Some((HEP, DOWN))),
    m("k", 4.1, 0.45, false, 1.0 / 8.0, Some((RENAL, UP))),
    m("na", 139.0, 4.0, false, 1.0 / 12.0, None),
    m("tnt", 0.05, 1.0, true, 1.0 / 72.0, Some((CV, UP))),
    m("wbc", 11.0, 0.4, true, 1.0 / 12.0, Some((INFL, UP))),
    m("fio2", 40.0, 12.0, false, 0.25, Some((RESP, UP))),
];

const URINE_RATE: f64 = 0.85;
const URINE_ML_KG_H: f64 = 1.1;

/// Linear latent risk of one task: `intercept + weights . factors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskCoefficients {
    pub intercept: f64,
    pub weights: [f64; N_FACTORS],
}

impl TaskCoefficients {
    pub fn risk(&self, u: &[f64; N_FACTORS]) -> f64 {
        self.intercept + self.weights.iter().zip(u).map(|(w, x)| w * x).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeParams {
    pub mortality: TaskCoefficients,
    pub aki: TaskCoefficients,
    pub sepsis: TaskCoefficients,
}

impl Default for OutcomeParams {
    fn default() -> Self {
        OutcomeParams {
            mortality: TaskCoefficients { intercept: -1.6, weights: [0.9, 0.7, 0.5, 0.5, 0.4, 0.4, 0.5] },
            aki: TaskCoefficients { intercept: -1.0, weights: [0.4, 0.2, 1.0, 0.2, 0.4, 0.2, 0.3] },
            sepsis: TaskCoefficients { intercept: -1.2, weights: [0.5, 0.5, 0.2, 0.4, 1.0, 0.2, 0.2] },
        }
    }
}

impl OutcomeParams {
    fn tasks_mut(&mut self) -> [&mut TaskCoefficients; 3] {
        [&mut self.mortality, &mut self.aki, &mut self.sepsis]
    }
}

/// Domain shift controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftKnobs {
    /// Shift of a concept's standardised level, in units of its spread.
    pub feature_mean_offsets: BTreeMap<String, f64>,
    pub prevalence_multiplier: f64,
    pub measurement_rate_multiplier: f64,
    /// Standard deviation of the domain's random perturbation of every outcome coefficient.
    pub coefficient_perturbation: f64,
}

impl Default for ShiftKnobs {
    fn default() -> Self {
        ShiftKnobs {
            feature_mean_offsets: BTreeMap::new(),
            prevalence_multiplier: 1.0,
            measurement_rate_multiplier: 1.0,
            coefficient_perturbation: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainProfile {
    pub domain_id: String,
    pub n_stays: NonZeroUsize,
    /// Log-normal length of stay: `ln(hours) ~ N(los_log_mean, los_log_sd)`.
    #[serde(default = "default_los_log_mean")]
    pub los_log_mean: f64,
    #[serde(default = "default_los_log_sd")]
    pub los_log_sd: f64,
    /// Per-concept measurements per hour overriding the built-in rates.
    #[serde(default)]
    pub measurement_rates: BTreeMap<String, f64>,
    #[serde(default)]
    pub outcomes: OutcomeParams,
    #[serde(default)]
    pub shift: ShiftKnobs,
    /// Hospitals inside the domain; stays are assigned round-robin.
    #[serde(default = "one")]
    pub n_hospitals: usize,
}

fn default_los_log_mean() -> f64 {
    libm::log(60.0)
}

fn default_los_log_sd() -> f64 {
    0.8
}

fn one() -> usize {
    1
}

impl DomainProfile {
    pub fn new(domain_id: impl Into<String>, n_stays: NonZeroUsize) -> Self {
        DomainProfile {
            domain_id: domain_id.into(),
            n_stays,
            los_log_mean: default_los_log_mean(),
            los_log_sd: default_los_log_sd(),
            measurement_rates: BTreeMap::new(),
            outcomes: OutcomeParams::default(),
            shift: ShiftKnobs::default(),
            n_hospitals: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("profile `{}`: {msg}", self.domain_id)));
        if self.domain_id.is_empty() {
            return Err(Error::Config("profile domain_id must be non-empty".into()));
        }
        if !self.los_log_mean.is_finite() || !(self.los_log_sd.is_finite() && self.los_log_sd >= 0.0) {
            return bad("los parameters must be finite with los_log_sd >= 0".into());
        }
        if self.n_hospitals == 0 {
            return bad("n_hospitals must be at least 1".into());
        }
        let s = &self.shift;
        if !(s.prevalence_multiplier.is_finite() && s.prevalence_multiplier > 0.0) {
            return bad("prevalence_multiplier must be > 0".into());
        }
        if !(s.measurement_rate_multiplier.is_finite() && s.measurement_rate_multiplier >= 0.0) {
            return bad("measurement_rate_multiplier must be >= 0".into());
        }
        if !(s.coefficient_perturbation.is_finite() && s.coefficient_perturbation >= 0.0) {
            return bad("coefficient_perturbation must be >= 0".into());
        }
        for (name, r) in &self.measurement_rates {
            if concept_index(name).is_none() {
                return bad(format!("measurement rate for unknown concept `{name}`"));
            }
            if !(r.is_finite() && *r >= 0.0) {
                return bad(format!("measurement rate of `{name}` must be >= 0"));
            }
        }
        for (name, o) in &s.feature_mean_offsets {
            if concept_index(name).is_none() {
                return bad(format!("offset for unknown concept `{name}`"));
            }
            if !o.is_finite() {
                return bad(format!("offset of `{name}` must be finite"));
            }
        }
        let coefs = [&self.outcomes.mortality, &self.outcomes.aki, &self.outcomes.sepsis];
        if coefs.iter().any(|c| !c.intercept.is_finite() || c.weights.iter().any(|w| !w.is_finite())) {
            return bad("outcome coefficients must be finite".into());
        }
        Ok(())
    }

    /// Outcome coefficients after the domain's seeded perturbation.
    pub fn effective_outcomes(&self, seed: u64) -> OutcomeParams {
        let mut out = self.outcomes.clone();
        let sd = self.shift.coefficient_perturbation;
        if sd > 0.0 {
            let mut rng = keyed(&[seed, hash_str(&self.domain_id), STREAM_COEF]);
            for task in out.tasks_mut() {
                for w in task.weights.iter_mut() {
                    *w += sd * normal(&mut rng);
                }
            }
        }
        out
    }
}

/// Index into [`MODELS`] of a time-varying concept, or `MODELS.len()` for urine.
fn concept_index(name: &str) -> Option<usize> {
    if name == "urine" {
        return Some(MODELS.len());
    }
    MODELS.iter().position(|c| c.name == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub profiles: Vec<DomainProfile>,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(Error::Config("generator needs at least one profile".into()));
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for p in &self.profiles {
            p.validate()?;
            if !seen.insert(p.domain_id.as_str()) {
                return Err(Error::DuplicateDomain(p.domain_id.clone()));
            }
        }
        Ok(())
    }
}

/// One generated domain; stays are ordered by stay index.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDomain {
    pub domain_id: String,
    pub stays: Vec<StayTimeline>,
}

impl SyntheticDomain {
    pub fn statics(&self) -> impl Iterator<Item = &StayStatic> + '_ {
        self.stays.iter().map(|s| &s.stay)
    }

    /// Event rows in stay order, each stay's rows in time order.
    pub fn records(&self) -> impl Iterator<Item = EventRecord> + '_ {
        self.stays.iter().flat_map(|s| s.records())
    }

    pub fn into_stays(self) -> Vec<StayTimeline> {
        self.stays
    }
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

struct Resolved {
    outcomes: OutcomeParams,
    /// Per-model and urine rates after the multiplier.
    rates: Vec<f64>,
    offsets: Vec<f64>,
}

fn resolve(profile: &DomainProfile, seed: u64) -> Resolved {
    let n = MODELS.len() + 1;
    let mut rates: Vec<f64> = MODELS.iter().map(|c| c.rate).chain([URINE_RATE]).collect();
    let mut offsets = vec![0.0; n];
    for (name, r) in &profile.measurement_rates {
        rates[concept_index(name).expect("validated")] = *r;
    }
    for (name, o) in &profile.shift.feature_mean_offsets {
        offsets[concept_index(name).expect("validated")] = *o;
    }
    for r in rates.iter_mut() {
        *r *= profile.shift.measurement_rate_multiplier;
    }
    Resolved { outcomes: profile.effective_outcomes(seed), rates, offsets }
}

/// Generates one domain. Stays are independent given `(seed, domain_id, index)`.
pub fn generate_domain(profile: &DomainProfile, seed: u64) -> Result<SyntheticDomain> {
    profile.validate()?;
    let catalog = ConceptCatalog::default();
    let resolved = resolve(profile, seed);
    let stays = (0..profile.n_stays.get()).map(|i| generate_stay(profile, &resolved, &catalog, seed, i)).collect();
    Ok(SyntheticDomain { domain_id: profile.domain_id.clone(), stays })
}

/// Generates every profile; domains are keyed by id.
pub fn generate_multisite(config: &GeneratorConfig) -> Result<BTreeMap<String, SyntheticDomain>> {
    config.validate()?;
    config.profiles.iter().map(|p| Ok((p.domain_id.clone(), generate_domain(p, config.seed)?))).collect()
}

struct Outcomes {
    died: bool,
    aki_onset: Option<f64>,
    sepsis_onset: Option<f64>,
}

fn generate_stay(profile: &DomainProfile, r: &Resolved, catalog: &ConceptCatalog, seed: u64, index: usize) -> StayTimeline {
    let domain = profile.domain_id.as_str();
    let stream = |s| stay_stream(seed, domain, index as u64, s);

    let mut rng = stream(STREAM_PATIENT);
    let mut u = [0.0; N_FACTORS];
    for x in u.iter_mut().take(AGE) {
        *x = normal(&mut rng);
    }
    let age = (65.0 + 15.0 * normal(&mut rng)).clamp(18.0, 95.0);
    u[AGE] = (age - 65.0) / 15.0;
    let sex = if rng.random_bool(0.43) { Sex::Female } else { Sex::Male };
    let height_mean = if sex == Sex::Female { 162.0 } else { 176.0 };
    let height = (height_mean + 7.0 * normal(&mut rng)).clamp(140.0, 205.0);
    let weight = (78.0 + 16.0 * normal(&mut rng)).clamp(40.0, 200.0);
    let height = (!rng.random_bool(0.08)).then_some(height);
    let weight_recorded = !rng.random_bool(0.04);
    let los = libm::exp(profile.los_log_mean + profile.los_log_sd * normal(&mut rng)).clamp(2.0, 1000.0);
    // unique part of each concept's stay level
    let idio: Vec<f64> = (0..MODELS.len()).map(|_| normal(&mut rng)).collect();

    let out = draw_outcomes(profile, r, &u, los, stream(STREAM_OUTCOME));

    let mut stay = StayStatic::new(format!("{domain}-{index:06}"), domain, los);
    if profile.n_hospitals > 1 {
        stay.hospital_id = Some(format!("{domain}-h{}", index % profile.n_hospitals));
    }
    stay.age = Some(age);
    stay.sex = sex;
    stay.height = height;
    stay.weight = weight_recorded.then_some(weight);
    if out.died {
        stay.died_in_icu = true;
        stay.death_time = Some(los);
    }

    let mut events = Vec::new();
    let levels: Vec<f64> = MODELS
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let shared = c.factor.map_or(0.0, |(f, sign)| sign * LOADING * u[f]);
            let own = libm::sqrt(1.0 - if c.factor.is_some() { LOADING * LOADING } else { 0.0 }) * idio[j];
            shared + own + r.offsets[j]
        })
        .collect();
    measurements(&levels, r, los, catalog, &mut stream(STREAM_MEASURE), &mut events);

    let kidney_weight = if weight_recorded { weight } else { crate::labels::kdigo::DEFAULT_WEIGHT_KG };
    let crea_idx = concept_index("crea").expect("crea model");
    renal_streams(
        levels[crea_idx],
        u[RENAL],
        r.offsets[MODELS.len()],
        r.rates[crea_idx],
        r.rates[MODELS.len()],
        kidney_weight,
        los,
        out.aki_onset,
        catalog,
        &mut stream(STREAM_RENAL),
        &mut events,
    );
    infection_streams(&u, los, out.sepsis_onset, &mut stream(STREAM_INFECTION), &mut events);

    StayTimeline::new(stay, events)
}

fn draw_outcomes(profile: &DomainProfile, r: &Resolved, u: &[f64; N_FACTORS], los: f64, mut rng: StreamRng) -> Outcomes {
    let mult = profile.shift.prevalence_multiplier;
    let mut occurs = |c: &TaskCoefficients| {
        let p = (mult * 0.5 * sigmoid(c.risk(u))).min(1.0);
        rng.random::<f64>() < p
    };
    let died = occurs(&r.outcomes.mortality);
    let aki = occurs(&r.outcomes.aki);
    let sepsis = occurs(&r.outcomes.sepsis);
    // Onsets are drawn unconditionally so the multiplier only flips coins.
    let aki_at = 2.0 + rng.random::<f64>() * (los.min(MAX_ONSET_H) - 3.0).max(0.0);
    let sepsis_room = (los - 74.0).min(MAX_ONSET_H) - 4.0;
    let sepsis_at = 4.0 + rng.random::<f64>() * sepsis_room.max(0.0);
    Outcomes {
        died,
        aki_onset: (aki && aki_at + 1.0 < los).then_some(aki_at),
        sepsis_onset: (sepsis && sepsis_room > 0.0).then_some(sepsis_at),
    }
}

fn value_of(c: &ConceptModel, z: f64) -> f64 {
    if c.log {
        c.center * libm::exp(c.scale * z)
    } else {
        c.center + c.scale * z
    }
}

fn clamp_to(catalog: &ConceptCatalog, id: ConceptId, v: f64) -> f64 {
    match catalog.range(id) {
        Some((lo, hi)) => v.clamp(lo, hi),
        None => v,
    }
}

/// Poisson measurement times on `[0, los)` with hourly rate `rate`.
fn poisson_times(rate: f64, los: f64, rng: &mut StreamRng) -> Vec<f64> {
    let mut out = Vec::new();
    let Ok(exp) = Exp::new(rate) else { return out };
    if rate <= 0.0 {
        return out;
    }
    let mut t = exp.sample(rng);
    while t < los {
        out.push(t);
        t += exp.sample(rng);
    }
    out
}

/// Values follow an Ornstein-Uhlenbeck excursion around the stay level.
fn measurements(levels: &[f64], r: &Resolved, los: f64, catalog: &ConceptCatalog, rng: &mut StreamRng, out: &mut Vec<Event>) {
    for (j, c) in MODELS.iter().enumerate() {
        if c.name == "crea" {
            continue;
        }
        let id = ConceptId::from_name(c.name).expect("model names are catalogue concepts");
        let times = poisson_times(r.rates[j], los, rng);
        let mut x = OU_SD * normal(rng);
        let mut prev = 0.0;
        for t in times {
            let rho = libm::exp(-(t - prev) / OU_TAU_H);
            x = rho * x + OU_SD * libm::sqrt(1.0 - rho * rho) * normal(rng);
            prev = t;
            out.push(Event { time: t, concept: id, value: clamp_to(catalog, id, value_of(c, levels[j] + x)) });
        }
    }
}

/// Creatinine and urine output. After an AKI onset creatinine climbs towards
/// 2.2x baseline over 12 h and urine output falls to a third.
#[allow(clippy::too_many_arguments)]
fn renal_streams(
    crea_level: f64,
    renal: f64,
    urine_offset: f64,
    crea_rate: f64,
    urine_rate: f64,
    weight: f64,
    los: f64,
    aki: Option<f64>,
    catalog: &ConceptCatalog,
    rng: &mut StreamRng,
    out: &mut Vec<Event>,
) {
    let model = MODELS.iter().find(|c| c.name == "crea").expect("crea model");
    let mut base = value_of(model, crea_level);
    if rng.random_bool(0.01) {
        base = 4.0 + 2.0 * rng.random::<f64>();
    }
    let noisy = |v: f64, rng: &mut StreamRng| {
        let sd = (0.03 * v).min(0.06);
        clamp_to(catalog, ConceptId::CREA, (v + sd * normal(rng)).max(0.1))
    };
    let crea_at = |t: f64| match aki {
        Some(onset) if t >= onset => base * (1.0 + 1.2 * ((t - onset) / 12.0).min(1.0)),
        _ => base,
    };
    if rng.random_bool(0.5) {
        let n = 1 + usize::from(rng.random_bool(0.5));
        for _ in 0..n {
            let t = -2.0 - 46.0 * rng.random::<f64>();
            out.push(Event { time: t, concept: ConceptId::CREA, value: noisy(base, rng) });
        }
    }
    for t in poisson_times(crea_rate, los, rng) {
        out.push(Event { time: t, concept: ConceptId::CREA, value: noisy(crea_at(t), rng) });
    }

    let ml_kg_h = URINE_ML_KG_H * libm::exp(-0.15 * renal - 0.3 * urine_offset);
    let p = urine_rate.min(1.0);
    let mut prev = 0.0;
    let mut h = 1.0;
    while h <= los {
        if p > 0.0 && rng.random_bool(p) {
            let mut rate = ml_kg_h * libm::exp(0.25 * normal(rng));
            if aki.is_some_and(|onset| h > onset) {
                rate /= 3.0;
            }
            let volume = clamp_to(catalog, ConceptId::URINE, rate * weight * (h - prev));
            out.push(Event { time: h, concept: ConceptId::URINE, value: volume });
            prev = h;
        }
        h += 1.0;
    }
}

/// SOFA scores, antibiotic doses and cultures. A septic stay gets an 80 h
/// antibiotic course with a culture and a three-point SOFA rise at onset.
fn infection_streams(u: &[f64; N_FACTORS], los: f64, sepsis: Option<f64>, rng: &mut StreamRng, out: &mut Vec<Event>) {
    let severity = 2.0 + 0.8 * u[CV] + 0.5 * u[HEP] + 0.5 * u[RESP];
    let base = libm::round(severity).clamp(0.0, 16.0);
    let mut h = 0.5;
    while h < los {
        let mut v = base + f64::from(u8::from(rng.random_bool(0.3)));
        if sepsis.is_some_and(|onset| h >= onset) {
            v += 3.0;
        }
        out.push(Event { time: h, concept: ConceptId::SOFA, value: v });
        h += 1.0;
    }

    let dose = |t: f64, out: &mut Vec<Event>| out.push(Event { time: t, concept: ConceptId::ANTIBIOTIC, value: 1.0 });
    let culture = |t: f64, out: &mut Vec<Event>| out.push(Event { time: t, concept: ConceptId::CULTURE, value: 1.0 });
    match sepsis {
        Some(onset) => {
            let start = onset - 1.0;
            let end = (onset + 79.0).min(los - 0.5);
            let mut t = start;
            while t < end {
                dose(t, out);
                t += 8.0;
            }
            dose(end, out);
            culture(start + 6.0 * rng.random::<f64>(), out);
        }
        None => {
            // short prophylactic courses and stray cultures never qualify on their own
            if rng.random_bool(0.15) {
                let t0 = rng.random::<f64>() * (los - 1.0).max(0.0);
                let mut t = t0;
                while t <= t0 + 24.0 && t < los {
                    dose(t, out);
                    t += 8.0;
                }
            }
            if rng.random_bool(0.1) {
                culture(rng.random::<f64>() * los, out);
            }
        }
    }
}
