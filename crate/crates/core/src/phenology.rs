//! Phenological transition detection from EVI curves and derivation of the
//! four local season windows.
//!
//! Transitions follow the amplitude-threshold definition: greenup and
//! dormancy are the first and last days the curve crosses 15% of its
//! seasonal amplitude, maturity and senescence the first and last days it
//! crosses 90%. "Crossed" is read as a closed comparison (EVI >= threshold).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geogrid::{haversine_km, GeoPoint, EARTH_RADIUS_KM};
use crate::{Error, Result};

pub fn days_in_year(year: i32) -> u32 {
    if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 {
        366
    } else {
        365
    }
}

/// Daily EVI values for one year. No-data days are NaN.
#[derive(Debug, Clone)]
pub struct EviCurve {
    pub year: i32,
    pub values: Vec<f64>,
}

impl EviCurve {
    pub fn new(year: i32, values: Vec<f64>) -> Result<Self> {
        let expect = days_in_year(year) as usize;
        if values.len() != expect {
            return Err(Error::Invalid(format!(
                "EVI curve for {year} must have {expect} days, found {}",
                values.len()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            if v.is_finite() && !(-1.0..=1.0).contains(v) {
                return Err(Error::Invalid(format!("EVI value {v} out of [-1,1] at day {}", i + 1)));
            }
        }
        Ok(EviCurve { year, values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhenoConfig {
    pub low_fraction: f64,
    pub high_fraction: f64,
}

impl Default for PhenoConfig {
    fn default() -> Self {
        PhenoConfig { low_fraction: 0.15, high_fraction: 0.90 }
    }
}

impl PhenoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low_fraction && self.low_fraction < self.high_fraction && self.high_fraction < 1.0)
        {
            return Err(Error::Config("require 0 < low_fraction < high_fraction < 1".into()));
        }
        Ok(())
    }
}

/// Transition days of year (1-based). Absent when the curve gave no signal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhenoDates {
    pub greenup: Option<u32>,
    pub maturity: Option<u32>,
    pub senescence: Option<u32>,
    pub dormancy: Option<u32>,
}

impl PhenoDates {
    pub fn is_complete(&self) -> bool {
        self.greenup.is_some()
            && self.maturity.is_some()
            && self.senescence.is_some()
            && self.dormancy.is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.greenup.is_none()
            && self.maturity.is_none()
            && self.senescence.is_none()
            && self.dormancy.is_none()
    }
}

/// First/last threshold crossings of the curve's seasonal amplitude.
/// A flat or all-no-data curve yields absent transitions.
pub fn detect_transitions(curve: &EviCurve, cfg: &PhenoConfig) -> Result<PhenoDates> {
    cfg.validate()?;
    let valid: Vec<(u32, f64)> = curve
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(i, v)| (i as u32 + 1, *v))
        .collect();
    if valid.len() < 2 {
        return Ok(PhenoDates::default());
    }
    let min = valid.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    let max = valid.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    let amplitude = max - min;
    if amplitude <= 0.0 {
        return Ok(PhenoDates::default());
    }
    let t_low = min + cfg.low_fraction * amplitude;
    let t_high = min + cfg.high_fraction * amplitude;

    let first = |t: f64| valid.iter().find(|(_, v)| *v >= t).map(|(d, _)| *d);
    let last = |t: f64| valid.iter().rev().find(|(_, v)| *v >= t).map(|(d, _)| *d);

    Ok(PhenoDates {
        greenup: first(t_low),
        maturity: first(t_high),
        senescence: last(t_high),
        dormancy: last(t_low),
    })
}

fn median_day(mut days: Vec<u32>) -> Option<u32> {
    if days.is_empty() {
        return None;
    }
    days.sort_unstable();
    let n = days.len();
    if n % 2 == 1 {
        Some(days[n / 2])
    } else {
        Some((days[n / 2 - 1] + days[n / 2]) / 2)
    }
}

/// Per-variable median across years; each variable aggregates independently
/// over the years where it is present. Even counts take the floored mean of
/// the two central values.
pub fn median_phenology(per_year: &[PhenoDates]) -> PhenoDates {
    let collect = |f: fn(&PhenoDates) -> Option<u32>| {
        median_day(per_year.iter().filter_map(f).collect())
    };
    PhenoDates {
        greenup: collect(|p| p.greenup),
        maturity: collect(|p| p.maturity),
        senescence: collect(|p| p.senescence),
        dormancy: collect(|p| p.dormancy),
    }
}

/// Fills absent transition values from the nearest point that has complete
/// dates. Ties break on the lowest donor id. Present values are kept.
pub fn fill_missing(
    points: &[GeoPoint],
    known: &BTreeMap<u64, PhenoDates>,
) -> Result<BTreeMap<u64, PhenoDates>> {
    let donors: Vec<&GeoPoint> = points
        .iter()
        .filter(|p| known.get(&p.id).map(|d| d.is_complete()).unwrap_or(false))
        .collect();
    if donors.is_empty() {
        return Err(Error::NoDonor);
    }
    let mut out = BTreeMap::new();
    for p in points {
        let current = known.get(&p.id).copied().unwrap_or_default();
        if current.is_complete() {
            out.insert(p.id, current);
            continue;
        }
        let mut best: Option<(&GeoPoint, f64)> = None;
        for d in &donors {
            let dist = haversine_km(p, d, EARTH_RADIUS_KM);
            let better = match best {
                None => true,
                Some((b, bd)) => dist < bd || (dist == bd && d.id < b.id),
            };
            if better {
                best = Some((d, dist));
            }
        }
        let donor = known[&best.unwrap().0.id];
        out.insert(
            p.id,
            PhenoDates {
                greenup: current.greenup.or(donor.greenup),
                maturity: current.maturity.or(donor.maturity),
                senescence: current.senescence.or(donor.senescence),
                dormancy: current.dormancy.or(donor.dormancy),
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonMode {
    Phenological,
    Calendar,
}

pub const SEASON_NAMES: [&str; 4] = ["spring", "summer", "autumn", "winter"];

/// One cyclic window. `start_day` is 1-based; the window covers `length`
/// consecutive days wrapping past the end of the year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonWindow {
    pub start_day: u32,
    pub length: u32,
    pub target_day: u32,
}

impl SeasonWindow {
    pub fn contains(&self, doy: u32, year_length: u32) -> bool {
        let off = (doy as i64 - self.start_day as i64).rem_euclid(year_length as i64);
        (off as u32) < self.length
    }

    /// Cyclic day distance from `doy` to the target day.
    pub fn target_distance(&self, doy: u32, year_length: u32) -> u32 {
        let d = (doy as i64 - self.target_day as i64).rem_euclid(year_length as i64) as u32;
        d.min(year_length - d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonWindows {
    pub mode: SeasonMode,
    pub year_length: u32,
    /// spring, summer, autumn, winter
    pub windows: [SeasonWindow; 4],
    /// Set when degenerate phenology forced a calendar fallback.
    pub fallback: bool,
}

fn wrap_day(unrolled: i64, year_length: u32) -> u32 {
    ((unrolled - 1).rem_euclid(year_length as i64) + 1) as u32
}

fn window_from_unrolled(start: i64, end: i64, year_length: u32) -> SeasonWindow {
    // midpoint rounds half up so targets land on whole days; the round-up
    // can only escape a length-1 window, so clamp to the last covered day
    let target = (start + end + 1).div_euclid(2).min(end - 1);
    SeasonWindow {
        start_day: wrap_day(start, year_length),
        length: (end - start) as u32,
        target_day: wrap_day(target, year_length),
    }
}

fn day_of_year(month: u32, day: u32, year_length: u32) -> i64 {
    let lengths: [u32; 12] = if year_length == 366 {
        [31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31]
    } else {
        [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31]
    };
    lengths[..(month - 1) as usize].iter().sum::<u32>() as i64 + day as i64
}

/// Meteorological calendar seasons with mid-month targets.
pub fn calendar_windows(year_length: u32) -> SeasonWindows {
    let mar1 = day_of_year(3, 1, year_length);
    let jun1 = day_of_year(6, 1, year_length);
    let sep1 = day_of_year(9, 1, year_length);
    let dec1 = day_of_year(12, 1, year_length);
    let y = year_length as i64;
    let target = |m, d| wrap_day(day_of_year(m, d, year_length), year_length);
    let win = |start: i64, end: i64, t: u32| SeasonWindow {
        start_day: wrap_day(start, year_length),
        length: (end - start) as u32,
        target_day: t,
    };
    SeasonWindows {
        mode: SeasonMode::Calendar,
        year_length,
        windows: [
            win(mar1, jun1, target(4, 15)),
            win(jun1, sep1, target(7, 15)),
            win(sep1, dec1, target(10, 15)),
            win(dec1, mar1 + y, target(1, 15)),
        ],
        fallback: false,
    }
}

/// Builds the four season windows. Phenological mode partitions the year at
/// the transition days; coincident transitions are nudged forward one day,
/// and orderings that cannot be repaired that way fall back to calendar
/// windows with the `fallback` flag set.
pub fn season_windows(
    pheno: &PhenoDates,
    mode: SeasonMode,
    year_length: u32,
) -> Result<SeasonWindows> {
    if mode == SeasonMode::Calendar {
        return Ok(calendar_windows(year_length));
    }
    let (g, m, s, d) = match (pheno.greenup, pheno.maturity, pheno.senescence, pheno.dormancy) {
        (Some(g), Some(m), Some(s), Some(d)) => (g, m, s, d),
        _ => return Err(Error::Invalid("phenological mode requires complete transition dates".into())),
    };
    for v in [g, m, s, d] {
        if v == 0 || v > year_length {
            return Err(Error::Invalid(format!("transition day {v} outside 1..={year_length}")));
        }
    }
    let y = year_length as i64;
    let days = [g as i64, m as i64, s as i64, d as i64];
    let mut seq = [days[0]; 4];
    let mut repaired = false;
    for k in 1..4 {
        let mut off = (days[k] - days[k - 1]).rem_euclid(y);
        if off == 0 {
            off = 1;
            repaired = true;
        }
        seq[k] = seq[k - 1] + off;
    }
    let end = days[0] + y;
    if seq[3] >= end {
        // inverted ordering, not repairable by nudging
        let mut w = calendar_windows(year_length);
        w.fallback = true;
        return Ok(w);
    }
    let _ = repaired;
    Ok(SeasonWindows {
        mode: SeasonMode::Phenological,
        year_length,
        windows: [
            window_from_unrolled(seq[0], seq[1], year_length),
            window_from_unrolled(seq[1], seq[2], year_length),
            window_from_unrolled(seq[2], seq[3], year_length),
            window_from_unrolled(seq[3], end, year_length),
        ],
        fallback: false,
    })
}

/// Double-logistic EVI generator used as a test oracle source.
#[derive(Debug, Clone, Copy)]
pub struct DoubleLogistic {
    pub base: f64,
    pub amplitude: f64,
    pub rise_day: f64,
    pub fall_day: f64,
    pub rise_rate: f64,
    pub fall_rate: f64,
}

pub fn synth_evi(params: &DoubleLogistic, year: i32) -> Result<EviCurve> {
    if params.amplitude < 0.0
        || params.rise_rate <= 0.0
        || params.fall_rate <= 0.0
        || params.base < -1.0
        || params.base + params.amplitude > 1.0
    {
        return Err(Error::Invalid("double-logistic parameters out of range".into()));
    }
    let n = days_in_year(year) as usize;
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let values = (0..n)
        .map(|i| {
            let t = (i + 1) as f64;
            params.base
                + params.amplitude
                    * (sigmoid(params.rise_rate * (t - params.rise_day))
                        - sigmoid(params.fall_rate * (t - params.fall_day)))
        })
        .collect();
    EviCurve::new(year, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn triangular_curve() -> EviCurve {
        let values = (1..=365)
            .map(|d| {
                if d < 100 || d > 300 {
                    0.0
                } else if d <= 200 {
                    (d - 100) as f64 / 100.0
                } else {
                    (300 - d) as f64 / 100.0
                }
            })
            .collect();
        EviCurve::new(2021, values).unwrap()
    }

    /// Independent daily scan over every day, kept free of the production
    /// first/last shortcut.
    fn brute_force_transitions(curve: &EviCurve, cfg: &PhenoConfig) -> PhenoDates {
        let valid: Vec<(u32, f64)> = curve
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| (i as u32 + 1, *v))
            .collect();
        if valid.len() < 2 {
            return PhenoDates::default();
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (_, v) in &valid {
            min = min.min(*v);
            max = max.max(*v);
        }
        if max <= min {
            return PhenoDates::default();
        }
        let t_low = min + cfg.low_fraction * (max - min);
        let t_high = min + cfg.high_fraction * (max - min);
        let mut out = PhenoDates::default();
        for (d, v) in &valid {
            if *v >= t_low {
                if out.greenup.is_none() {
                    out.greenup = Some(*d);
                }
                out.dormancy = Some(*d);
            }
            if *v >= t_high {
                if out.maturity.is_none() {
                    out.maturity = Some(*d);
                }
                out.senescence = Some(*d);
            }
        }
        out
    }

    #[test]
    fn triangular_transitions() {
        let got = detect_transitions(&triangular_curve(), &PhenoConfig::default()).unwrap();
        assert_eq!(
            got,
            PhenoDates {
                greenup: Some(115),
                maturity: Some(190),
                senescence: Some(210),
                dormancy: Some(285),
            }
        );
    }

    #[test]
    fn constant_curve_has_no_transitions() {
        let curve = EviCurve::new(2021, vec![0.3; 365]).unwrap();
        let got = detect_transitions(&curve, &PhenoConfig::default()).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn zero_amplitude_synth_is_constant() {
        let params = DoubleLogistic {
            base: 0.2,
            amplitude: 0.0,
            rise_day: 100.0,
            fall_day: 250.0,
            rise_rate: 0.1,
            fall_rate: 0.1,
        };
        let c = synth_evi(&params, 2021).unwrap();
        assert!(c.values.iter().all(|v| (*v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn synth_rejects_bad_params() {
        let params = DoubleLogistic {
            base: 0.5,
            amplitude: 0.8,
            rise_day: 100.0,
            fall_day: 250.0,
            rise_rate: 0.1,
            fall_rate: 0.1,
        };
        assert!(synth_evi(&params, 2021).is_err());
    }

    #[test]
    fn mirrored_params_give_symmetric_transitions() {
        let params = DoubleLogistic {
            base: 0.0,
            amplitude: 0.9,
            rise_day: 120.0,
            fall_day: 246.0, // symmetric around day 183
            rise_rate: 0.15,
            fall_rate: 0.15,
        };
        let c = synth_evi(&params, 2021).unwrap();
        let t = detect_transitions(&c, &PhenoConfig::default()).unwrap();
        let (g, d) = (t.greenup.unwrap() as i64, t.dormancy.unwrap() as i64);
        let (m, s) = (t.maturity.unwrap() as i64, t.senescence.unwrap() as i64);
        assert!(((g + d) - 366).abs() <= 1, "greenup {g} dormancy {d}");
        assert!(((m + s) - 366).abs() <= 1, "maturity {m} senescence {s}");
    }

    #[test]
    fn median_rules() {
        let mk = |g| PhenoDates { greenup: Some(g), ..Default::default() };
        let odd = median_phenology(&[mk(100), mk(110), mk(180)]);
        assert_eq!(odd.greenup, Some(110));
        let even = median_phenology(&[mk(100), mk(111)]);
        assert_eq!(even.greenup, Some(105));
        let single = median_phenology(&[mk(42)]);
        assert_eq!(single.greenup, Some(42));
        assert_eq!(odd.maturity, None);
    }

    #[test]
    fn gap_fill_single_donor_and_tie_break() {
        let pts = vec![
            GeoPoint { id: 0, lat: 0.0, lon: 1.0 }, // missing, equidistant from 3 and 7
            GeoPoint { id: 3, lat: 0.0, lon: 0.0 },
            GeoPoint { id: 7, lat: 0.0, lon: 2.0 },
        ];
        let full = |g| PhenoDates {
            greenup: Some(g),
            maturity: Some(g + 10),
            senescence: Some(g + 20),
            dormancy: Some(g + 30),
        };
        let mut known = BTreeMap::new();
        known.insert(3, full(100));
        known.insert(7, full(200));
        let out = fill_missing(&pts, &known).unwrap();
        assert_eq!(out[&0], full(100));
        assert_eq!(out[&3], full(100));
    }

    #[test]
    fn gap_fill_no_donor_errors() {
        let pts = vec![GeoPoint { id: 0, lat: 0.0, lon: 0.0 }];
        assert!(matches!(fill_missing(&pts, &BTreeMap::new()), Err(Error::NoDonor)));
    }

    #[test]
    fn window_lengths_and_targets() {
        let pheno = PhenoDates {
            greenup: Some(115),
            maturity: Some(190),
            senescence: Some(210),
            dormancy: Some(285),
        };
        let w = season_windows(&pheno, SeasonMode::Phenological, 365).unwrap();
        let lengths: Vec<u32> = w.windows.iter().map(|x| x.length).collect();
        assert_eq!(lengths, vec![75, 20, 75, 195]);
        assert_eq!(lengths.iter().sum::<u32>(), 365);
        assert_eq!(w.windows[3].target_day, 18);
        assert!(!w.fallback);
    }

    #[test]
    fn equally_spaced_windows() {
        let pheno = PhenoDates {
            greenup: Some(1),
            maturity: Some(92),
            senescence: Some(183),
            dormancy: Some(274),
        };
        let w = season_windows(&pheno, SeasonMode::Phenological, 365).unwrap();
        let lengths: Vec<u32> = w.windows.iter().map(|x| x.length).collect();
        assert_eq!(lengths, vec![91, 91, 91, 92]);
    }

    #[test]
    fn calendar_targets() {
        let w = calendar_windows(365);
        let targets: Vec<u32> = w.windows.iter().map(|x| x.target_day).collect();
        assert_eq!(targets, vec![105, 196, 288, 15]); // Apr 15, Jul 15, Oct 15, Jan 15
        assert_eq!(w.windows.iter().map(|x| x.length).sum::<u32>(), 365);
        for win in &w.windows {
            assert!(win.contains(win.target_day, 365));
        }
    }

    #[test]
    fn inverted_ordering_falls_back() {
        let pheno = PhenoDates {
            greenup: Some(100),
            maturity: Some(50),
            senescence: Some(200),
            dormancy: Some(150),
        };
        let w = season_windows(&pheno, SeasonMode::Phenological, 365).unwrap();
        assert!(w.fallback);
        assert_eq!(w.mode, SeasonMode::Calendar);
    }

    #[test]
    fn coincident_days_are_nudged() {
        let pheno = PhenoDates {
            greenup: Some(100),
            maturity: Some(100),
            senescence: Some(200),
            dormancy: Some(300),
        };
        let w = season_windows(&pheno, SeasonMode::Phenological, 365).unwrap();
        assert!(!w.fallback);
        assert_eq!(w.windows[0].length, 1);
        assert_eq!(w.windows.iter().map(|x| x.length).sum::<u32>(), 365);
    }

    fn arb_logistic() -> impl Strategy<Value = DoubleLogistic> {
        (
            -0.2f64..0.2,
            0.2f64..0.7,
            30.0f64..150.0,
            180.0f64..330.0,
            0.03f64..0.4,
            0.03f64..0.4,
        )
            .prop_map(|(base, amplitude, rise_day, fall_day, rise_rate, fall_rate)| {
                DoubleLogistic { base, amplitude, rise_day, fall_day, rise_rate, fall_rate }
            })
    }

    proptest! {
        #[test]
        fn detect_matches_brute_force(params in arb_logistic()) {
            let curve = synth_evi(&params, 2021).unwrap();
            let cfg = PhenoConfig::default();
            prop_assert_eq!(
                detect_transitions(&curve, &cfg).unwrap(),
                brute_force_transitions(&curve, &cfg)
            );
        }

        #[test]
        fn threshold_monotonicity(params in arb_logistic(), low in 0.05f64..0.4) {
            let curve = synth_evi(&params, 2021).unwrap();
            let a = detect_transitions(&curve, &PhenoConfig { low_fraction: low, high_fraction: 0.9 }).unwrap();
            let b = detect_transitions(&curve, &PhenoConfig { low_fraction: low + 0.05, high_fraction: 0.9 }).unwrap();
            if let (Some(g1), Some(g2)) = (a.greenup, b.greenup) {
                prop_assert!(g2 >= g1);
            }
            if let (Some(d1), Some(d2)) = (a.dormancy, b.dormancy) {
                prop_assert!(d2 <= d1);
            }
        }

        #[test]
        fn shift_equivariance(params in arb_logistic(), raw_shift in 1u32..365) {
            let curve = synth_evi(&params, 2021).unwrap();
            let n = curve.values.len();
            let cfg = PhenoConfig::default();
            let base = detect_transitions(&curve, &cfg).unwrap();
            // first/last semantics only commute with shifts that keep the
            // above-threshold region away from the year boundary
            prop_assume!(base.greenup.unwrap() > 1);
            let max_shift = n as u32 - base.dormancy.unwrap();
            prop_assume!(max_shift >= 1);
            let shift = raw_shift % max_shift + 1;
            let shifted: Vec<f64> = (0..n)
                .map(|i| curve.values[(i + n - shift as usize) % n])
                .collect();
            let shifted = EviCurve::new(2021, shifted).unwrap();
            let moved = detect_transitions(&shifted, &cfg).unwrap();
            let sh = |d: Option<u32>| d.map(|x| (x - 1 + shift) % n as u32 + 1);
            prop_assert_eq!(moved.greenup, sh(base.greenup));
            prop_assert_eq!(moved.maturity, sh(base.maturity));
            prop_assert_eq!(moved.senescence, sh(base.senescence));
            prop_assert_eq!(moved.dormancy, sh(base.dormancy));
        }

        #[test]
        fn window_partition(g in 1u32..=365, m in 1u32..=365, s in 1u32..=365, d in 1u32..=365) {
            let pheno = PhenoDates {
                greenup: Some(g), maturity: Some(m), senescence: Some(s), dormancy: Some(d),
            };
            let w = season_windows(&pheno, SeasonMode::Phenological, 365).unwrap();
            prop_assert_eq!(w.windows.iter().map(|x| x.length).sum::<u32>(), 365);
            for win in &w.windows {
                prop_assert!(win.length >= 1);
                prop_assert!(win.contains(win.target_day, 365));
            }
            // disjointness: each day belongs to exactly one window
            for day in 1..=365u32 {
                let hits = w.windows.iter().filter(|win| win.contains(day, 365)).count();
                prop_assert_eq!(hits, 1);
            }
        }

        #[test]
        fn gap_fill_idempotent(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_pcg::Pcg64::seed_from_u64(seed);
            let pts: Vec<GeoPoint> = (0..20)
                .map(|id| GeoPoint {
                    id,
                    lat: rng.gen_range(-80.0..80.0),
                    lon: rng.gen_range(-180.0..180.0),
                })
                .collect();
            let mut known = BTreeMap::new();
            for p in &pts {
                known.insert(p.id, PhenoDates {
                    greenup: Some(rng.gen_range(1..=365)),
                    maturity: Some(rng.gen_range(1..=365)),
                    senescence: Some(rng.gen_range(1..=365)),
                    dormancy: Some(rng.gen_range(1..=365)),
                });
            }
            let filled = fill_missing(&pts, &known).unwrap();
            prop_assert_eq!(filled, known);
        }
    }
}
