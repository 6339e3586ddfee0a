use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;

use super::{IndexId, UniverseError, UniverseExpr};
use crate::marketdata::{InstrumentId, PriceStore};

pub const MEMBERSHIP_HEADER: &str = "index,instrument,start_date,end_date";

/// End date used for open-ended memberships.
pub const OPEN_END: NaiveDate = match NaiveDate::from_ymd_opt(9999, 12, 31) {
    Some(d) => d,
    None => panic!("valid date"),
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipInterval {
    pub index: IndexId,
    pub instrument: InstrumentId,
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestingViolation {
    pub date: NaiveDate,
    pub instrument: InstrumentId,
    /// The smaller index the instrument belongs to without belonging to `outer`.
    pub inner: IndexId,
    pub outer: IndexId,
}

/// Interval store: for each base index, per-instrument sorted, non-overlapping `[start, end]`
/// ranges. Instruments are referenced by their [`PriceStore`] index.
#[derive(Debug, Clone)]
pub struct MembershipCalendar {
    intervals: [Vec<Vec<(NaiveDate, NaiveDate)>>; 3],
    instruments: Vec<InstrumentId>,
}

fn slot(index: IndexId) -> usize {
    match index {
        IndexId::F => 0,
        IndexId::H => 1,
        IndexId::T => 2,
    }
}

impl MembershipCalendar {
    pub fn from_intervals(
        intervals: impl IntoIterator<Item = MembershipInterval>,
        store: &PriceStore,
    ) -> Result<Self, UniverseError> {
        Self::build(intervals.into_iter().map(|iv| (0, iv)), store)
    }

    fn build(rows: impl Iterator<Item = (u64, MembershipInterval)>, store: &PriceStore) -> Result<Self, UniverseError> {
        let n = store.instruments().len();
        let mut intervals: [Vec<Vec<(NaiveDate, NaiveDate)>>; 3] =
            [vec![Vec::new(); n], vec![Vec::new(); n], vec![Vec::new(); n]];
        for (line, iv) in rows {
            let inst = store
                .instrument_index(&iv.instrument)
                .ok_or_else(|| UniverseError::UnknownInstrument {
                    line,
                    instrument: iv.instrument.to_string(),
                })?;
            if iv.end < iv.start {
                return Err(UniverseError::EndBeforeStart {
                    line,
                    start: iv.start,
                    end: iv.end,
                });
            }
            intervals[slot(iv.index)][inst].push((iv.start, iv.end));
        }
        for index in IndexId::ALL {
            for (inst, list) in intervals[slot(index)].iter_mut().enumerate() {
                list.sort_unstable();
                if list.windows(2).any(|w| w[1].0 <= w[0].1) {
                    return Err(UniverseError::OverlappingInterval {
                        index,
                        instrument: store.instruments()[inst].to_string(),
                    });
                }
            }
        }
        Ok(Self {
            intervals,
            instruments: store.instruments().to_vec(),
        })
    }

    pub fn is_member(&self, index: IndexId, inst: usize, date: NaiveDate) -> bool {
        let list = &self.intervals[slot(index)][inst];
        // Last interval starting on or before `date`.
        let k = list.partition_point(|(start, _)| *start <= date);
        k > 0 && list[k - 1].1 >= date
    }

    /// Members of one base index on `date`, as instrument indices.
    pub fn base_members(&self, index: IndexId, date: NaiveDate) -> BTreeSet<usize> {
        (0..self.instruments.len())
            .filter(|&i| self.is_member(index, i, date))
            .collect()
    }

    /// Members of a universe expression on `date`. Always a subset of T's members.
    pub fn members(&self, expr: &UniverseExpr, date: NaiveDate) -> BTreeSet<usize> {
        expr.evaluate(&|id| self.base_members(id, date))
    }

    /// Dates at which any membership can change: every interval start and the day after
    /// every interval end.
    pub fn change_dates(&self) -> BTreeSet<NaiveDate> {
        let mut out = BTreeSet::new();
        for per_index in &self.intervals {
            for list in per_index {
                for (s, e) in list {
                    out.insert(*s);
                    if let Some(next) = e.succ_opt() {
                        out.insert(next);
                    }
                }
            }
        }
        out
    }

    /// Checks F ⊆ H ⊆ T at every membership change date. Violations are returned, not fatal.
    pub fn validate_nesting(&self) -> Vec<NestingViolation> {
        let mut out = Vec::new();
        for date in self.change_dates() {
            for inst in 0..self.instruments.len() {
                let f = self.is_member(IndexId::F, inst, date);
                let h = self.is_member(IndexId::H, inst, date);
                let t = self.is_member(IndexId::T, inst, date);
                let mut push = |inner, outer| {
                    out.push(NestingViolation {
                        date,
                        instrument: self.instruments[inst].clone(),
                        inner,
                        outer,
                    })
                };
                if f && !h {
                    push(IndexId::F, IndexId::H);
                }
                if h && !t {
                    push(IndexId::H, IndexId::T);
                }
            }
        }
        out
    }
}

/// Reads `membership.csv` and validates it against the store's instruments. Nesting
/// violations are logged as warnings.
pub fn load_membership(path: impl AsRef<Path>, store: &PriceStore) -> Result<MembershipCalendar, UniverseError> {
    let path = path.as_ref();
    let io = |e: csv::Error| UniverseError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(io)?;
    let header = rdr.headers().map_err(io)?.iter().collect::<Vec<_>>().join(",");
    if header != MEMBERSHIP_HEADER {
        return Err(UniverseError::MalformedRow {
            line: 1,
            reason: format!("expected header `{MEMBERSHIP_HEADER}`, found `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.into_records() {
        let rec = rec.map_err(|e| UniverseError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| UniverseError::MalformedRow { line, reason };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", rec.len())));
        }
        let index: IndexId = rec[0].trim().parse().map_err(bad)?;
        let instrument = InstrumentId::new(rec[1].trim()).map_err(|_| bad("empty instrument".into()))?;
        let date = |s: &str| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| bad(format!("not an ISO-8601 date: `{s}`")))
        };
        let start = date(&rec[2])?;
        let end = date(&rec[3])?;
        rows.push((
            line,
            MembershipInterval {
                index,
                instrument,
                start,
                end,
            },
        ));
    }
    let cal = MembershipCalendar::build(rows.into_iter(), store)?;
    let violations = cal.validate_nesting();
    if let Some(v) = violations.first() {
        log::warn!(
            "{}: {} nesting violations, first: {} in {} but not {} on {}",
            path.display(),
            violations.len(),
            v.instrument,
            v.inner,
            v.outer,
            v.date
        );
    }
    Ok(cal)
}

/// Groups consecutive `(date, member?)` observations into intervals.
///
/// Used by the synthetic generator to turn rebalance snapshots into change logs.
pub(crate) fn intervals_from_runs(
    index: IndexId,
    instrument: &InstrumentId,
    runs: &[(NaiveDate, NaiveDate, bool)],
) -> Vec<MembershipInterval> {
    let mut out: Vec<MembershipInterval> = Vec::new();
    let mut open: Option<(NaiveDate, NaiveDate)> = None;
    for &(start, end, member) in runs {
        match (member, open) {
            (true, None) => open = Some((start, end)),
            (true, Some((s, _))) => open = Some((s, end)),
            (false, Some((s, e))) => {
                out.push(MembershipInterval {
                    index,
                    instrument: instrument.clone(),
                    start: s,
                    end: e,
                });
                open = None;
            }
            (false, None) => {}
        }
    }
    if let Some((s, e)) = open {
        out.push(MembershipInterval {
            index,
            instrument: instrument.clone(),
            start: s,
            end: e,
        });
    }
    out
}
