//! Brute-force restatements of the clinical label rules, plus generators of
//! small random stays.
//!
//! Every rule is evaluated from scratch over explicit windows at the time
//! being asked about. Nothing here shares code with the labelling module
//! beyond the input types.

use icudg_core::labels::{
    aki_onset, antibiotic_episodes, kdigo_stage, sepsis_onset, suspicion_of_infection, AbxEpisode, OnsetReason,
    SuspicionMode, SuspicionSource,
};
use icudg_core::{ConceptId, Event, StayStatic, StayTimeline};
use proptest::prelude::*;

const EPS: f64 = 1e-9;

fn series(stay: &StayTimeline, c: ConceptId) -> Vec<(f64, f64)> {
    stay.events.iter().filter(|e| e.concept == c).map(|e| (e.time, e.value)).collect()
}

fn end_of_stay(s: &StayStatic) -> Option<f64> {
    let los = s.icu_discharge.filter(|d| d.is_finite() && *d > 0.0)?;
    Some(match s.death_time {
        Some(d) if s.died_in_icu && d.is_finite() => d.min(los),
        _ => los,
    })
}

fn inside(s: &StayStatic, t: f64) -> bool {
    t >= 0.0 && end_of_stay(s).is_some_and(|e| t <= e)
}

fn min_over(xs: &[(f64, f64)], lo_open: f64, hi: f64) -> Option<f64> {
    let mut m: Option<f64> = None;
    for &(t, v) in xs {
        if t > lo_open && t <= hi {
            m = Some(m.map_or(v, |m| m.min(v)));
        }
    }
    m
}

/// Creatinine stage at `t`, judged on the last measurement at or before `t`.
pub fn creatinine_stage(crea: &[(f64, f64)], t: f64) -> u8 {
    let Some(&(tc, v)) = crea.iter().rfind(|x| x.0 <= t) else { return 0 };
    let base = min_over(crea, tc - 168.0, tc).unwrap();
    let recent = min_over(crea, tc - 48.0, tc).unwrap();
    let rise = v - recent >= 0.3 - EPS;
    let mut candidates = vec![0u8];
    if rise {
        candidates.push(1);
        if v >= 4.0 - EPS {
            candidates.push(3);
        }
    }
    if base > 0.0 {
        for (ratio, stage) in [(1.5, 1u8), (2.0, 2), (3.0, 3)] {
            if v / base >= ratio - EPS {
                candidates.push(stage);
            }
        }
    }
    candidates.into_iter().max().unwrap()
}

struct Collection {
    start: f64,
    time: f64,
    volume: f64,
    rate: f64,
}

fn collections(urine: &[(f64, f64)], weight: Option<f64>) -> Vec<Collection> {
    let w = match weight {
        Some(w) if w.is_finite() && w > 0.0 => w,
        _ => 75.0,
    };
    let mut times: Vec<f64> = urine.iter().map(|x| x.0).collect();
    times.dedup();
    let mut out = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let mut volume = 0.0;
        let mut first = true;
        for &(ti, v) in urine {
            if ti == t {
                volume = if first { v } else { volume + v };
                first = false;
            }
        }
        let start = if i > 0 && t - times[i - 1] <= 24.0 { times[i - 1] } else { t - 1.0 };
        out.push(Collection { start, time: t, volume, rate: volume / (t - start) / w });
    }
    out
}

/// Whether the union of qualifying collection intervals covers `(a, b]`.
fn covered(intervals: &[(f64, f64)], a: f64, b: f64) -> bool {
    let hit = |x: f64| intervals.iter().any(|&(s, e)| s < x && x <= e);
    let mut cuts = vec![a, b];
    for &(s, e) in intervals {
        cuts.extend([s, e].into_iter().filter(|&p| p > a && p < b));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2).all(|w| hit(0.5 * (w[0] + w[1])) && hit(w[1]))
}

/// Urine stage at `t`, judged on the last collection ending at or before `t`.
pub fn urine_stage(urine: &[(f64, f64)], weight: Option<f64>, t: f64) -> u8 {
    let cs = collections(urine, weight);
    let Some(k) = cs.iter().rposition(|c| c.time <= t) else { return 0 };
    let end = cs[k].time;
    let holds = |hours: f64, pred: &dyn Fn(&Collection) -> bool| {
        let iv: Vec<(f64, f64)> = cs[..=k]
            .iter()
            .filter(|c| pred(c) && c.time - c.start <= 12.0)
            .map(|c| (c.start, c.time))
            .collect();
        covered(&iv, end - hours, end)
    };
    if holds(24.0, &|c| c.rate < 0.3) || holds(12.0, &|c| c.volume <= 0.0) {
        3
    } else if holds(12.0, &|c| c.rate < 0.5) {
        2
    } else if holds(6.0, &|c| c.rate < 0.5) {
        1
    } else {
        0
    }
}

pub fn stage(stay: &StayTimeline, t: f64) -> u8 {
    let crea = series(stay, ConceptId::CREA);
    let urine = series(stay, ConceptId::URINE);
    creatinine_stage(&crea, t).max(urine_stage(&urine, stay.stay.weight, t))
}

/// `(hour, in_icu, stage)` of the first integer hour with stage >= 1.
pub fn aki(stay: &StayTimeline) -> Option<(f64, bool, u8)> {
    let times: Vec<f64> = stay
        .events
        .iter()
        .filter(|e| e.concept == ConceptId::CREA || e.concept == ConceptId::URINE)
        .map(|e| e.time)
        .collect();
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil();
    let mut h = lo;
    while h <= hi {
        let s = stage(stay, h);
        if s >= 1 {
            return Some((h, inside(&stay.stay, h), s));
        }
        h += 1.0;
    }
    None
}

/// Antibiotic courses as `(start, end)`.
pub fn episodes(doses: &[(f64, f64)], death: Option<f64>, discharge: Option<f64>) -> Vec<(f64, f64)> {
    let mut spans: Vec<(f64, f64, bool)> = doses
        .iter()
        .map(|&(t, v)| match discharge {
            Some(d) if v >= 2.0 => (t, d.max(t), true),
            _ => (t, t, false),
        })
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<Vec<(f64, f64, bool)>> = Vec::new();
    for (i, &sp) in spans.iter().enumerate() {
        let reach = spans[..i].iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        if i == 0 || sp.0 - reach > 24.0 {
            groups.push(vec![sp]);
        } else {
            groups.last_mut().unwrap().push(sp);
        }
    }
    groups
        .into_iter()
        .filter_map(|g| {
            let start = g.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
            let end = g.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            let whole = g.iter().any(|s| s.2);
            let fatal = death.is_some_and(|d| (end..=end + 24.0).contains(&d));
            (whole || fatal || end - start >= 72.0).then_some((start, end))
        })
        .collect()
}

pub fn suspicion(eps: &[(f64, f64)], cultures: &[f64], mode: SuspicionMode) -> Vec<(f64, SuspicionSource)> {
    let mut out = Vec::new();
    for &(start, _) in eps {
        let paired = match mode {
            SuspicionMode::AbxOnly => true,
            SuspicionMode::AbxAndCulture => cultures.iter().any(|&c| (start..=start + 24.0).contains(&c)),
        };
        if paired {
            out.push((start, SuspicionSource::AbxFirst));
        }
    }
    if mode == SuspicionMode::AbxAndCulture {
        for &c in cultures {
            if eps.iter().any(|&(s, _)| s > c && s <= c + 72.0) {
                out.push((c, SuspicionSource::CultureFirst));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out.dedup();
    out
}

pub fn dysfunction(sofa: &[(f64, f64)]) -> Vec<f64> {
    let mut out: Vec<f64> = sofa
        .iter()
        .filter(|&&(t, v)| min_over(sofa, t - 24.0, t).is_some_and(|m| v - m >= 2.0))
        .map(|x| x.0)
        .collect();
    out.dedup();
    out
}

/// `(onset, suspicion, in_icu)`: the earliest dysfunction and its earliest partner.
pub fn sepsis(stay: &StayTimeline, mode: SuspicionMode) -> Option<(f64, f64, bool)> {
    let s = &stay.stay;
    let death = if s.died_in_icu { s.death_time.or(s.icu_discharge) } else { None };
    let eps = episodes(&series(stay, ConceptId::ANTIBIOTIC), death, s.icu_discharge);
    let cultures: Vec<f64> = series(stay, ConceptId::CULTURE).into_iter().map(|x| x.0).collect();
    let sus = suspicion(&eps, &cultures, mode);
    let mut best: Option<(f64, f64)> = None;
    for d in dysfunction(&series(stay, ConceptId::SOFA)) {
        for &(t, _) in &sus {
            if t >= d - 24.0 && t <= d + 48.0 && best.is_none_or(|b| (d, t) < b) {
                best = Some((d, t));
            }
        }
    }
    best.map(|(d, t)| (d, t, inside(s, d)))
}

/// What a checked stay exercised.
#[derive(Debug, Default, Clone, Copy)]
pub struct Coverage {
    pub stage_queries: usize,
    pub aki_onsets: usize,
    pub episodes: usize,
    pub suspicions: usize,
    pub sepsis_onsets: usize,
}

impl std::ops::AddAssign for Coverage {
    fn add_assign(&mut self, o: Self) {
        self.stage_queries += o.stage_queries;
        self.aki_onsets += o.aki_onsets;
        self.episodes += o.episodes;
        self.suspicions += o.suspicions;
        self.sepsis_onsets += o.sepsis_onsets;
    }
}

/// Compares every label function with its oracle on one stay.
pub fn check(stay: &StayTimeline) -> Result<Coverage, String> {
    let mut cov = Coverage::default();
    let crea = series(stay, ConceptId::CREA);
    let urine = series(stay, ConceptId::URINE);
    let mut queries: Vec<f64> = stay.events.iter().map(|e| e.time).collect();
    queries.extend((-22..=122).map(f64::from));
    for t in queries {
        let got = kdigo_stage(&crea, &urine, stay.stay.weight, t);
        let want = stage(stay, t);
        if got != want {
            return Err(format!("kdigo_stage at {t}: got {got}, oracle {want}"));
        }
        cov.stage_queries += 1;
    }

    let on = aki_onset(stay);
    let got = on.raw_time.map(|t| {
        let s = match on.reason {
            OnsetReason::Kdigo { stage } => stage,
            _ => 0,
        };
        (t, on.in_icu, s)
    });
    let want = aki(stay);
    if got != want {
        return Err(format!("aki_onset: got {got:?}, oracle {want:?}"));
    }
    cov.aki_onsets += usize::from(on.onset_time().is_some());

    let s = &stay.stay;
    let death = if s.died_in_icu { s.death_time.or(s.icu_discharge) } else { None };
    let doses = series(stay, ConceptId::ANTIBIOTIC);
    let got_eps: Vec<AbxEpisode> = antibiotic_episodes(&doses, death, s.icu_discharge);
    let want_eps = episodes(&doses, death, s.icu_discharge);
    let pairs: Vec<(f64, f64)> = got_eps.iter().map(|e| (e.start, e.end)).collect();
    if pairs != want_eps {
        return Err(format!("antibiotic_episodes: got {pairs:?}, oracle {want_eps:?}"));
    }
    cov.episodes += pairs.len();

    let cultures: Vec<f64> = series(stay, ConceptId::CULTURE).into_iter().map(|x| x.0).collect();
    for mode in [SuspicionMode::AbxAndCulture, SuspicionMode::AbxOnly] {
        let got: Vec<(f64, SuspicionSource)> =
            suspicion_of_infection(&got_eps, &cultures, mode).iter().map(|e| (e.time, e.source)).collect();
        let want = suspicion(&want_eps, &cultures, mode);
        if got != want {
            return Err(format!("suspicion_of_infection ({mode:?}): got {got:?}, oracle {want:?}"));
        }
        cov.suspicions += got.len();

        let on = sepsis_onset(stay, mode);
        let got = on.raw_time.map(|t| {
            let sus = match on.reason {
                OnsetReason::Sepsis3 { suspicion } => suspicion,
                _ => f64::NAN,
            };
            (t, sus, on.in_icu)
        });
        let want = sepsis(stay, mode);
        if got != want {
            return Err(format!("sepsis_onset ({mode:?}): got {got:?}, oracle {want:?}"));
        }
        cov.sepsis_onsets += usize::from(on.onset_time().is_some());
    }
    Ok(cov)
}

fn half_hours(lo: i32, hi: i32) -> impl Strategy<Value = f64> {
    (lo * 2..=hi * 2).prop_map(|k| f64::from(k) * 0.5)
}

fn random_event() -> impl Strategy<Value = Event> {
    (0u8..10, half_hours(-20, 120), 0u32..1000).prop_map(|(kind, time, r)| {
        let (concept, value) = match kind {
            0..=2 => (ConceptId::CREA, 0.4 + f64::from(r % 46) * 0.1),
            3..=5 => (ConceptId::URINE, if r % 5 == 0 { 0.0 } else { f64::from(r % 40) * 5.0 }),
            6 | 7 => (ConceptId::SOFA, f64::from(r % 13)),
            8 => (ConceptId::ANTIBIOTIC, if r % 10 == 0 { 2.0 } else { 1.0 }),
            _ => (ConceptId::CULTURE, 1.0),
        };
        Event { time, concept, value }
    })
}

/// A regular antibiotic course, so that qualifying episodes are common.
fn course() -> impl Strategy<Value = Vec<Event>> {
    (half_hours(-20, 100), 8i32..=60, 0usize..=8).prop_map(|(start, step, n)| {
        (0..n)
            .map(|i| Event { time: start + i as f64 * f64::from(step) * 0.5, concept: ConceptId::ANTIBIOTIC, value: 1.0 })
            .collect()
    })
}

/// A run of low urine collections, so that sustained oliguria is common.
fn oliguria() -> impl Strategy<Value = Vec<Event>> {
    (half_hours(-10, 100), 1i32..=8, prop::collection::vec(0u32..6, 0..=12)).prop_map(|(start, step, vols)| {
        vols.iter()
            .enumerate()
            .map(|(i, &v)| Event {
                time: start + i as f64 * f64::from(step) * 0.5,
                concept: ConceptId::URINE,
                value: f64::from(v) * 10.0,
            })
            .collect()
    })
}

fn statics() -> impl Strategy<Value = StayStatic> {
    (half_hours(1, 150), 0u8..10, half_hours(-5, 180), prop::option::of(30u32..150), any::<bool>()).prop_map(
        |(discharge, fate, death, weight, has_death_time)| {
            let mut s = StayStatic::new("s", "d", discharge);
            s.weight = weight.map(f64::from);
            if fate < 3 {
                s.died_in_icu = true;
                s.death_time = has_death_time.then_some(death);
            }
            s
        },
    )
}

/// Stays with at most 50 events on a half-hour grid, so ties are frequent.
pub fn arb_stay() -> impl Strategy<Value = StayTimeline> {
    (statics(), prop::collection::vec(random_event(), 0..=30), course(), oliguria()).prop_map(
        |(s, mut events, c, u)| {
            events.extend(c);
            events.extend(u);
            StayTimeline::new(s, events)
        },
    )
}
