//! Poisson photon arrivals with marks, and their reduction to idle/busy cycles.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marks::MarkModel;
use crate::sum::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonEvent {
    pub arrival: f64,
    pub duration: f64,
    pub energy: f64,
}

/// One observed cycle: idle period followed by a busy period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub idle: f64,
    pub duration: f64,
    pub energy: f64,
}

impl Cycle {
    fn validate(&self) -> Result<()> {
        let ok = [self.idle, self.duration, self.energy].iter().all(|v| *v > 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidEvents(format!("cycle fields must be positive and finite: {self:?}")))
        }
    }
}

/// Simulation metadata carried alongside the cycles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleMetadata {
    pub lambda_true: Option<f64>,
    pub seed: Option<u64>,
    pub model: Option<String>,
}

/// Immutable, nonempty ordered collection of cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSet {
    cycles: Vec<Cycle>,
    meta: CycleMetadata,
}

impl CycleSet {
    pub fn new(cycles: Vec<Cycle>, meta: CycleMetadata) -> Result<Self> {
        if cycles.is_empty() {
            return Err(Error::EmptyStream);
        }
        for c in &cycles {
            c.validate()?;
        }
        Ok(Self { cycles, meta })
    }

    pub fn from_cycles(cycles: Vec<Cycle>) -> Result<Self> {
        Self::new(cycles, CycleMetadata::default())
    }

    pub fn cycles(&self) -> &[Cycle] {
        &self.cycles
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn meta(&self) -> &CycleMetadata {
        &self.meta
    }

    pub fn lambda_true(&self) -> Option<f64> {
        self.meta.lambda_true
    }

    pub fn seed(&self) -> Option<u64> {
        self.meta.seed
    }

    pub fn idles(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        self.cycles.iter().map(|c| c.idle)
    }

    pub fn durations(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        self.cycles.iter().map(|c| c.duration)
    }

    pub fn energies(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        self.cycles.iter().map(|c| c.energy)
    }

    pub fn max_duration(&self) -> f64 {
        self.durations().fold(0.0, f64::max)
    }

    /// First `n` cycles (all of them if fewer).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::new(self.cycles[..n.min(self.len())].to_vec(), self.meta.clone())
    }

    /// Writes the `idle,duration,energy` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(out);
        writeln!(w, "idle,duration,energy")?;
        for c in &self.cycles {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", c.idle, c.duration, c.energy)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, meta: CycleMetadata) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
        if headers.is_empty() {
            return Err(Error::EmptyStream);
        }
        if headers.iter().collect::<Vec<_>>() != ["idle", "duration", "energy"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `idle,duration,energy`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut cycles = Vec::new();
        for record in reader.deserialize::<Cycle>() {
            let line = cycles.len() + 2;
            let cycle = record.map_err(|e| csv_error(e, line))?;
            cycle.validate().map_err(|e| Error::Parse { line, message: e.to_string() })?;
            cycles.push(cycle);
        }
        Self::new(cycles, meta)
    }
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::Deserialize { err, .. } => Error::Parse { line, message: err.to_string() },
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

/// When to stop generating photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop once exactly `n` busy periods have closed.
    NumCycles(usize),
    /// Observe the process on `[0, T]`, dropping the busy period in progress at `T`.
    FixedDuration(f64),
}

/// Streaming reduction of time-ordered photons into cycles.
///
/// A busy period stays open while arrivals fall at or before the current end
/// `max(T_i + X_i)`; an arrival strictly after the end opens the next cycle.
#[derive(Debug, Default)]
struct ClusterBuilder {
    start: f64,
    end: f64,
    energy: NeumaierSum,
    open: bool,
    last_end: f64,
    last_arrival: f64,
}

impl ClusterBuilder {
    /// Feeds one photon; returns the cycle closed by this arrival, if any.
    fn push(&mut self, e: PhotonEvent) -> Option<Cycle> {
        let mut closed = None;
        if self.open && e.arrival > self.end {
            closed = Some(self.close());
        }
        if !self.open {
            self.open = true;
            self.start = e.arrival;
            self.end = e.arrival + e.duration;
            self.energy = NeumaierSum::new();
        }
        self.end = self.end.max(e.arrival + e.duration);
        self.energy.add(e.energy);
        self.last_arrival = e.arrival;
        closed
    }

    fn close(&mut self) -> Cycle {
        self.open = false;
        let cycle = Cycle { idle: self.start - self.last_end, duration: self.end - self.start, energy: self.energy.sum() };
        self.last_end = self.end;
        cycle
    }

    fn finish(&mut self) -> Option<Cycle> {
        self.open.then(|| self.close())
    }
}

fn validate_event(e: &PhotonEvent, prev: f64) -> Result<()> {
    if !(e.duration > 0.0 && e.energy > 0.0) || !e.duration.is_finite() || !e.energy.is_finite() {
        return Err(Error::InvalidMark { x: e.duration, y: e.energy });
    }
    if !(e.arrival > prev) || !e.arrival.is_finite() {
        return Err(Error::InvalidEvents(format!("arrivals must be positive and strictly increasing, got {} after {prev}", e.arrival)));
    }
    Ok(())
}

/// Reduces a finite, time-ordered photon stream to its cycles. The stream is
/// taken to be complete: the last busy period ends with the last pulse.
pub fn extract_cycles(events: &[PhotonEvent]) -> Result<CycleSet> {
    let mut builder = ClusterBuilder::default();
    let mut cycles = Vec::new();
    let mut prev = 0.0;
    for e in events {
        validate_event(e, prev)?;
        prev = e.arrival;
        cycles.extend(builder.push(*e));
    }
    cycles.extend(builder.finish());
    CycleSet::from_cycles(cycles)
}

fn validate_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("lambda must be positive and finite, got {lambda}")))
    }
}

fn validate_stop(stop: StopRule) -> Result<()> {
    match stop {
        StopRule::NumCycles(n) if n >= 1 => Ok(()),
        StopRule::FixedDuration(t) if t > 0.0 && t.is_finite() => Ok(()),
        _ => Err(Error::Config(format!("invalid stop rule {stop:?}"))),
    }
}

/// Drives the photon generator, handing every kept event to `sink`. Returns
/// the number of complete cycles produced.
fn generate<F: FnMut(PhotonEvent, Option<Cycle>)>(
    lambda: f64,
    model: &MarkModel,
    stop: StopRule,
    seed: u64,
    mut sink: F,
) -> Result<Option<Cycle>> {
    validate_lambda(lambda)?;
    validate_stop(stop)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaps = Exp::new(lambda).map_err(|e| Error::Config(e.to_string()))?;
    let mut builder = ClusterBuilder::default();
    let mut t = 0.0;
    let mut closed = 0usize;
    loop {
        t += gaps.sample(&mut rng);
        let mark = model.sample(&mut rng)?;
        let e = PhotonEvent { arrival: t, duration: mark.duration, energy: mark.energy };
        match stop {
            StopRule::NumCycles(n) => {
                if builder.open && e.arrival > builder.end {
                    let c = builder.close();
                    closed += 1;
                    if closed == n {
                        // the confirming arrival belongs to cycle n + 1
                        return Ok(Some(c));
                    }
                    sink(e, Some(c));
                    builder.push(e);
                } else {
                    sink(e, builder.push(e));
                }
            }
            StopRule::FixedDuration(horizon) => {
                if e.arrival > horizon {
                    // the open cluster is complete only if it ended inside the window
                    return Ok(if builder.open && builder.end <= horizon { builder.finish() } else { None });
                }
                sink(e, builder.push(e));
            }
        }
    }
}

/// Simulates the marked Poisson stream. Under `NumCycles(n)` the returned
/// events make up exactly `n` complete busy periods; under `FixedDuration`
/// photons of the busy period in progress at the horizon are dropped.
pub fn simulate_photons(lambda: f64, model: &MarkModel, stop: StopRule, seed: u64) -> Result<Vec<PhotonEvent>> {
    let mut events = Vec::new();
    let mut pending = Vec::new();
    let last = generate(lambda, model, stop, seed, |e, closed| {
        if closed.is_some() {
            events.append(&mut pending);
        }
        pending.push(e);
    })?;
    if last.is_some() {
        events.append(&mut pending);
    }
    Ok(events)
}

/// Simulates and reduces in one streaming pass; identical to
/// `extract_cycles(&simulate_photons(..))` without materializing photons.
pub fn simulate_cycles(lambda: f64, model: &MarkModel, stop: StopRule, seed: u64) -> Result<CycleSet> {
    let mut cycles = Vec::new();
    if let StopRule::NumCycles(n) = stop {
        cycles.reserve(n);
    }
    let last = generate(lambda, model, stop, seed, |_, closed| cycles.extend(closed))?;
    cycles.extend(last);
    CycleSet::new(cycles, CycleMetadata { lambda_true: Some(lambda), seed: Some(seed), model: Some(model.describe()) })
}

/// Empirical cycle means against their closed forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n: usize,
    pub mean_duration: f64,
    pub se_duration: f64,
    pub target_duration: f64,
    pub z_duration: f64,
    pub mean_energy: f64,
    pub se_energy: f64,
    pub target_energy: f64,
    pub z_energy: f64,
}

impl MomentReport {
    pub fn passes(&self, z_max: f64) -> bool {
        self.z_duration.abs() <= z_max && self.z_energy.abs() <= z_max
    }
}

/// `E[X'] = (e^{λE[X]} - 1)/λ`.
pub fn busy_duration_mean(lambda: f64, mean_x: f64) -> f64 {
    (lambda * mean_x).exp_m1() / lambda
}

/// `E[Y'] = E[Y] e^{λE[X]}`.
pub fn busy_energy_mean(lambda: f64, mean_x: f64, mean_y: f64) -> f64 {
    mean_y * (lambda * mean_x).exp()
}

pub(crate) fn mean_and_se<I: Iterator<Item = f64> + Clone>(values: I) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().collect::<NeumaierSum>().sum() / n;
    let ss = values.map(|v| (v - mean) * (v - mean)).collect::<NeumaierSum>().sum();
    let var = if n > 1.0 { ss / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

pub fn cycle_moment_check(cycles: &CycleSet, lambda: f64, mean_x: f64, mean_y: f64) -> MomentReport {
    let (mean_duration, se_duration) = mean_and_se(cycles.durations());
    let (mean_energy, se_energy) = mean_and_se(cycles.energies());
    let target_duration = busy_duration_mean(lambda, mean_x);
    let target_energy = busy_energy_mean(lambda, mean_x, mean_y);
    MomentReport {
        n: cycles.len(),
        mean_duration,
        se_duration,
        target_duration,
        z_duration: (mean_duration - target_duration) / se_duration,
        mean_energy,
        se_energy,
        target_energy,
        z_energy: (mean_energy - target_energy) / se_energy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marks::{build_bimodal_model, build_mg_infinity_model, ServiceDist};

    fn ev(arrival: f64, duration: f64, energy: f64) -> PhotonEvent {
        PhotonEvent { arrival, duration, energy }
    }

    #[test]
    fn single_event() {
        let set = extract_cycles(&[ev(2.0, 3.0, 7.0)]).unwrap();
        assert_eq!(set.cycles(), &[Cycle { idle: 2.0, duration: 3.0, energy: 7.0 }]);
    }

    #[test]
    fn overlapping_pair_forms_one_cycle() {
        let set = extract_cycles(&[ev(1.0, 3.0, 2.0), ev(2.0, 1.0, 5.0)]).unwrap();
        assert_eq!(set.cycles(), &[Cycle { idle: 1.0, duration: 3.0, energy: 7.0 }]);
    }

    #[test]
    fn disjoint_pair_forms_two_cycles() {
        let set = extract_cycles(&[ev(1.0, 1.0, 2.0), ev(5.0, 2.0, 3.0)]).unwrap();
        assert_eq!(
            set.cycles(),
            &[Cycle { idle: 1.0, duration: 1.0, energy: 2.0 }, Cycle { idle: 3.0, duration: 2.0, energy: 3.0 }]
        );
    }

    #[test]
    fn chained_overlap_extends_busy_period() {
        // third pulse overlaps only the second
        let set = extract_cycles(&[ev(1.0, 2.0, 1.0), ev(2.5, 2.0, 1.0), ev(4.0, 1.0, 1.0)]).unwrap();
        assert_eq!(set.cycles(), &[Cycle { idle: 1.0, duration: 4.0, energy: 3.0 }]);
    }

    #[test]
    fn arrival_at_busy_end_joins_cycle() {
        let set = extract_cycles(&[ev(1.0, 2.0, 1.0), ev(3.0, 1.0, 1.0)]).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.cycles()[0].duration, 3.0);
    }

    #[test]
    fn empty_stream() {
        assert!(matches!(extract_cycles(&[]), Err(Error::EmptyStream)));
    }

    #[test]
    fn rejects_unsorted_or_bad_marks() {
        assert!(extract_cycles(&[ev(2.0, 1.0, 1.0), ev(1.0, 1.0, 1.0)]).is_err());
        assert!(matches!(extract_cycles(&[ev(1.0, 0.0, 1.0)]), Err(Error::InvalidMark { .. })));
    }

    #[test]
    fn num_cycles_is_exact_and_streaming_matches_events() {
        let model = build_bimodal_model();
        for n in [1, 2, 17, 500] {
            let events = simulate_photons(0.04, &model, StopRule::NumCycles(n), 9).unwrap();
            let from_events = extract_cycles(&events).unwrap();
            let streamed = simulate_cycles(0.04, &model, StopRule::NumCycles(n), 9).unwrap();
            assert_eq!(from_events.len(), n);
            assert_eq!(from_events.cycles(), streamed.cycles());
        }
    }

    #[test]
    fn fixed_duration_drops_trailing_cluster() {
        let model = build_bimodal_model();
        let horizon = 5000.0;
        let events = simulate_photons(0.04, &model, StopRule::FixedDuration(horizon), 4).unwrap();
        let set = extract_cycles(&events).unwrap();
        let streamed = simulate_cycles(0.04, &model, StopRule::FixedDuration(horizon), 4).unwrap();
        assert_eq!(set.cycles(), streamed.cycles());
        let end: f64 = set.cycles().iter().map(|c| c.idle + c.duration).sum();
        assert!(end <= horizon);
        assert!(events.iter().all(|e| e.arrival + e.duration <= horizon));
    }

    #[test]
    fn same_seed_same_events() {
        let model = build_bimodal_model();
        let a = simulate_photons(0.04, &model, StopRule::NumCycles(50), 1).unwrap();
        let b = simulate_photons(0.04, &model, StopRule::NumCycles(50), 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn energy_is_conserved() {
        let model = build_bimodal_model();
        let events = simulate_photons(0.2, &model, StopRule::NumCycles(300), 2).unwrap();
        let set = extract_cycles(&events).unwrap();
        let photons: NeumaierSum = events.iter().map(|e| e.energy).collect();
        let cycles: NeumaierSum = set.energies().collect();
        assert!((photons.sum() - cycles.sum()).abs() <= 1e-12 * photons.sum());
    }

    #[test]
    fn mean_gap_matches_rate() {
        let model = build_bimodal_model();
        let events = simulate_photons(0.04, &model, StopRule::NumCycles(100_000), 3).unwrap();
        let n = events.len() as f64;
        let mean_gap = events.last().unwrap().arrival / n;
        let se = 25.0 / n.sqrt();
        assert!((mean_gap - 25.0).abs() < 3.0 * se, "{mean_gap}");
    }

    #[test]
    fn closed_form_targets() {
        assert!((busy_duration_mean(0.04, 20.0) - (0.8f64.exp() - 1.0) / 0.04).abs() < 1e-12);
        assert!((busy_duration_mean(1e-12, 20.0) - 20.0).abs() < 1e-9);
        assert!((busy_energy_mean(0.04, 20.0, 112.0) - 112.0 * 0.8f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn mg_infinity_moments() {
        let model = build_mg_infinity_model(ServiceDist::Exponential { rate: 1.0 }).unwrap();
        let set = simulate_cycles(0.5, &model, StopRule::NumCycles(50_000), 8).unwrap();
        let r = cycle_moment_check(&set, 0.5, 1.0, 1.0);
        assert!(r.passes(4.0), "{r:?}");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let model = build_bimodal_model();
        let set = simulate_cycles(0.04, &model, StopRule::NumCycles(200), 5).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = CycleSet::read_csv(buf.as_slice(), set.meta().clone()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let text = "idle,duration,energy\n1,2,3\n1,x,3\n";
        let err = CycleSet::read_csv(text.as_bytes(), CycleMetadata::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let text = "idle,duration,energy\n1,2,3\n-1,2,3\n";
        let err = CycleSet::read_csv(text.as_bytes(), CycleMetadata::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let empty = "idle,duration,energy\n";
        assert!(matches!(CycleSet::read_csv(empty.as_bytes(), CycleMetadata::default()), Err(Error::EmptyStream)));
    }
}
