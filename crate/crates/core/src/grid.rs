//! Time grids for exposure runs.
//!
//! Exposure dates usually coincide with the exercise/monitoring dates of the
//! product. A finer reporting grid (daily profiles with weekly exercise) is
//! supported by simulating on the union of both date sets: product events
//! update exercise/knock-out state, reporting dates record exposures, and
//! valuation between events uses a fractional-step moment matrix against the
//! next event's value polynomial.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Reporting grid selection for exposure profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureGrid {
    /// Report on the product's exercise/monitoring dates.
    Exercise,
    /// Report on an equally spaced grid of `usize` dates per year
    /// (252 for trading days), in addition to simulating the event dates.
    Daily(usize),
}

impl Default for ExposureGrid {
    fn default() -> Self {
        ExposureGrid::Exercise
    }
}

/// Union of event dates (exercise/monitoring) and reporting dates, sorted,
/// starting at 0 and ending at maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub times: Vec<f64>,
    /// Exercise/monitoring dates of the product.
    pub is_event: Vec<bool>,
    /// Dates at which exposures are reported.
    pub is_report: Vec<bool>,
}

/// Two grid dates closer than this are merged into one.
const MERGE_EPS: f64 = 1e-12;

impl TimeGrid {
    /// Event dates `u T / n_dates`, `u = 0..=n_dates`, plus reporting dates.
    pub fn build(maturity: f64, n_dates: usize, exposure: ExposureGrid) -> Result<Self> {
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(invalid("maturity", "must be > 0"));
        }
        if n_dates == 0 {
            return Err(invalid("n_dates", "need at least one period"));
        }
        let events: Vec<f64> =
            (0..=n_dates).map(|u| maturity * u as f64 / n_dates as f64).collect();
        let reports: Vec<f64> = match exposure {
            ExposureGrid::Exercise => events.clone(),
            ExposureGrid::Daily(per_year) => {
                if per_year == 0 {
                    return Err(invalid("exposure_grid", "daily grid needs >= 1 date per year"));
                }
                let n = (per_year as f64 * maturity).round().max(1.0) as usize;
                (0..=n).map(|d| maturity * d as f64 / n as f64).collect()
            }
        };

        let mut all: Vec<f64> = events.iter().chain(reports.iter()).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.dedup_by(|a, b| (*a - *b).abs() <= MERGE_EPS);

        let contains = |set: &[f64], t: f64| {
            set.binary_search_by(|x| x.partial_cmp(&t).unwrap())
                .map(|_| true)
                .unwrap_or_else(|i| {
                    (i > 0 && (set[i - 1] - t).abs() <= MERGE_EPS)
                        || (i < set.len() && (set[i] - t).abs() <= MERGE_EPS)
                })
        };
        let is_event: Vec<bool> = all.iter().map(|&t| contains(&events, t)).collect();
        let is_report: Vec<bool> = all.iter().map(|&t| contains(&reports, t)).collect();
        Ok(Self { times: all, is_event, is_report })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn report_times(&self) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.is_report)
            .filter_map(|(&t, &r)| r.then_some(t))
            .collect()
    }

    pub fn n_reports(&self) -> usize {
        self.is_report.iter().filter(|&&r| r).count()
    }

    /// Ordinal of an event date among events (the pricer's date index), for
    /// each grid position.
    pub fn event_ordinals(&self) -> Vec<Option<usize>> {
        let mut next = 0usize;
        self.is_event
            .iter()
            .map(|&e| {
                if e {
                    let u = next;
                    next += 1;
                    Some(u)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Index into `times` of the next event strictly after position `idx`.
    pub fn next_event_after(&self, idx: usize) -> Option<usize> {
        (idx + 1..self.len()).find(|&j| self.is_event[j])
    }
}
