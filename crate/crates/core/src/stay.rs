//! In-memory representation of ICU stays and their clinical event streams.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::concept::{ConceptCatalog, ConceptId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
    #[default]
    Unknown,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
            Sex::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Some(Sex::Female),
            "male" | "m" => Some(Sex::Male),
            "unknown" | "" => Some(Sex::Unknown),
            _ => None,
        }
    }
}

/// Static description of one ICU stay. Times are hours since ICU admission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayStatic {
    pub stay_id: String,
    pub domain_id: String,
    /// Sub-site within the domain (e.g. a hospital inside a multi-centre database).
    #[serde(default)]
    pub hospital_id: Option<String>,
    pub age: Option<f64>,
    pub sex: Sex,
    pub height: Option<f64>,
    pub weight: Option<f64>,
    pub icu_discharge: Option<f64>,
    pub died_in_icu: bool,
    pub death_time: Option<f64>,
}

impl StayStatic {
    pub fn new(stay_id: impl Into<String>, domain_id: impl Into<String>, icu_discharge: f64) -> Self {
        StayStatic {
            stay_id: stay_id.into(),
            domain_id: domain_id.into(),
            hospital_id: None,
            age: Some(60.0),
            sex: Sex::Unknown,
            height: None,
            weight: None,
            icu_discharge: Some(icu_discharge),
            died_in_icu: false,
            death_time: None,
        }
    }

    /// Length of stay in hours, if the discharge time is valid.
    pub fn los(&self) -> Option<f64> {
        self.icu_discharge.filter(|d| d.is_finite() && *d > 0.0)
    }

    /// Time at which the stay ends: death if it happened in the ICU, else discharge.
    pub fn end_time(&self) -> Option<f64> {
        let los = self.los()?;
        match self.death_time {
            Some(d) if self.died_in_icu && d.is_finite() => Some(d.min(los)),
            _ => Some(los),
        }
    }

    pub fn hospital(&self) -> &str {
        self.hospital_id.as_deref().unwrap_or(&self.domain_id)
    }
}

/// A parsed event row, still carrying its stay id.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub stay_id: Arc<str>,
    pub time: f64,
    pub concept: ConceptId,
    pub value: f64,
}

/// An event inside a stay's timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub concept: ConceptId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StayTimeline {
    pub stay: StayStatic,
    /// Sorted by time; stable with respect to input order.
    pub events: Vec<Event>,
}

impl StayTimeline {
    pub fn new(stay: StayStatic, mut events: Vec<Event>) -> Self {
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        StayTimeline { stay, events }
    }

    pub fn id(&self) -> &str {
        &self.stay.stay_id
    }

    /// `(time, value)` pairs of one concept in time order.
    pub fn series(&self, concept: ConceptId) -> Vec<(f64, f64)> {
        self.events.iter().filter(|e| e.concept == concept).map(|e| (e.time, e.value)).collect()
    }

    pub fn times(&self, concept: ConceptId) -> Vec<f64> {
        self.events.iter().filter(|e| e.concept == concept).map(|e| e.time).collect()
    }

    /// Flattens the timeline back to event rows.
    pub fn records(&self) -> impl Iterator<Item = EventRecord> + '_ {
        let id: Arc<str> = Arc::from(self.stay.stay_id.as_str());
        self.events.iter().map(move |e| EventRecord {
            stay_id: id.clone(),
            time: e.time,
            concept: e.concept,
            value: e.value,
        })
    }
}

/// Groups events under their stays. Stays without events are kept.
pub fn assemble_stays(
    statics: Vec<StayStatic>,
    events: impl IntoIterator<Item = EventRecord>,
) -> Result<Vec<StayTimeline>> {
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (i, s) in statics.iter().enumerate() {
        if index.insert(s.stay_id.clone(), i).is_some() {
            return Err(Error::DuplicateStay(s.stay_id.clone()));
        }
    }
    let mut buckets: Vec<Vec<Event>> = (0..statics.len()).map(|_| Vec::new()).collect();
    for ev in events {
        let i = *index.get(&*ev.stay_id).ok_or_else(|| Error::OrphanEvent(String::from(&*ev.stay_id)))?;
        buckets[i].push(Event { time: ev.time, concept: ev.concept, value: ev.value });
    }
    Ok(statics.into_iter().zip(buckets).map(|(s, ev)| StayTimeline::new(s, ev)).collect())
}

/// Drops event values outside the catalogue's plausible ranges and blanks
/// implausible static measurements. Returns the number of values removed.
pub fn apply_plausibility_filter(mut timeline: StayTimeline, catalog: &ConceptCatalog) -> (StayTimeline, usize) {
    let in_range = |id: ConceptId, v: f64| match catalog.range(id) {
        Some((lo, hi)) => v >= lo && v <= hi,
        None => true,
    };
    let before = timeline.events.len();
    timeline.events.retain(|e| in_range(e.concept, e.value));
    let mut removed = before - timeline.events.len();

    let s = &mut timeline.stay;
    for (id, slot) in [(ConceptId::AGE, &mut s.age), (ConceptId::HEIGHT, &mut s.height), (ConceptId::WEIGHT, &mut s.weight)] {
        if let Some(v) = *slot {
            if !in_range(id, v) {
                *slot = None;
                removed += 1;
            }
        }
    }
    (timeline, removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(id: &str, t: f64, c: &str, v: f64) -> EventRecord {
        EventRecord { stay_id: Arc::from(id), time: t, concept: ConceptId::from_name(c).unwrap(), value: v }
    }

    #[test]
    fn assemble_partitions_and_sorts() {
        let statics = vec![StayStatic::new("a", "d", 10.0), StayStatic::new("b", "d", 10.0)];
        let events = vec![rec("a", 5.0, "hr", 1.0), rec("b", 1.0, "hr", 2.0), rec("a", 1.0, "hr", 3.0)];
        let tl = assemble_stays(statics, events).unwrap();
        assert_eq!(tl.len(), 2);
        assert_eq!(tl[0].events.len(), 2);
        assert_eq!(tl[1].events.len(), 1);
        assert_eq!(tl[0].events.iter().map(|e| e.time).collect::<Vec<_>>(), vec![1.0, 5.0]);
    }

    #[test]
    fn assemble_keeps_empty_stays_and_rejects_orphans() {
        let tl = assemble_stays(vec![StayStatic::new("a", "d", 10.0)], vec![]).unwrap();
        assert_eq!(tl.len(), 1);
        assert!(tl[0].events.is_empty());

        let err = assemble_stays(vec![StayStatic::new("a", "d", 10.0)], vec![rec("ghost", 1.0, "hr", 1.0)]);
        match err {
            Err(Error::OrphanEvent(id)) => assert_eq!(id, "ghost"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stable_sort_within_equal_times() {
        let statics = vec![StayStatic::new("a", "d", 10.0)];
        let events = vec![rec("a", 2.0, "hr", 1.0), rec("a", 2.0, "hr", 2.0), rec("a", 1.0, "hr", 0.0)];
        let tl = assemble_stays(statics, events).unwrap();
        let vals: Vec<f64> = tl[0].events.iter().map(|e| e.value).collect();
        assert_eq!(vals, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn plausibility_filter() {
        let cat = ConceptCatalog::default();
        let s = StayStatic::new("a", "d", 10.0);
        let tl = StayTimeline::new(
            s,
            vec![
                Event { time: 1.0, concept: ConceptId::from_name("hr").unwrap(), value: 900.0 },
                Event { time: 2.0, concept: ConceptId::from_name("hr").unwrap(), value: 80.0 },
                Event { time: 2.0, concept: ConceptId::SOFA, value: 40.0 },
            ],
        );
        let (out, removed) = apply_plausibility_filter(tl, &cat);
        assert_eq!(removed, 1);
        assert_eq!(out.events.len(), 2);
        let (again, removed2) = apply_plausibility_filter(out.clone(), &cat);
        assert_eq!(removed2, 0);
        assert_eq!(again, out);
    }
}
