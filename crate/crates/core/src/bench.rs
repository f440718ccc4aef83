//! Deployment measurements: latency and throughput across batch sizes,
//! peak-memory probing, and the energy/carbon estimator.
//!
//! The harness is built on three injectable traits. [`Clock`] supplies
//! monotonic wall time, [`MemoryProbe`] reports a peak-memory high-water
//! mark, and [`BatchRunner`] processes one batch of prompts end to end
//! (tokenization, forward pass, and decoding all inside the timed region).
//! Fake implementations of all three make every timing path exactly
//! testable; [`MonotonicClock`], [`ResidentPeakProbe`], and [`ModelRunner`]
//! are the real ones.

use std::cell::Cell;
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{generate, DecodeConfig, ModelConfig, ModelError, ParameterSet};
use crate::seed;
use crate::vocab;

/// Allowed deviation of `throughput * latency` from 1.
pub const RECIPROCAL_TOLERANCE: f64 = 0.01;

/// Where the measured model ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    /// Host CPU.
    Cpu,
    /// Any accelerator device.
    Accelerator,
}

/// Why a measurement or estimate failed.
#[derive(Debug, Error)]
pub enum BenchError {
    /// No prompts were supplied.
    #[error("no prompts to measure")]
    EmptyPrompts,
    /// Batch sizes must be positive and ascending.
    #[error("invalid batch sizes: {detail}")]
    InvalidBatchSizes {
        /// What was wrong.
        detail: String,
    },
    /// The clock reported no elapsed time across a measured repetition.
    #[error("clock reported zero elapsed time for batch size {batch_size}")]
    ZeroElapsed {
        /// Batch size being measured.
        batch_size: usize,
    },
    /// No records were supplied to the consistency check.
    #[error("no records to check")]
    EmptyRecords,
    /// A record violates the reciprocal law beyond tolerance.
    #[error(
        "record for batch {batch_size} violates throughput*latency=1: product {product:.4}"
    )]
    ReciprocalViolation {
        /// Offending record's batch size.
        batch_size: usize,
        /// The throughput-latency product.
        product: f64,
    },
    /// A carbon-estimate input was not positive.
    #[error("{field} must be positive, got {value}")]
    NonPositiveInput {
        /// Which input.
        field: &'static str,
        /// The value given.
        value: f64,
    },
    /// The measured model failed.
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Monotonic time source.
pub trait Clock {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&mut self) -> Duration;
}

/// Real clock backed by [`Instant`].
#[derive(Debug)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    /// A clock whose origin is now.
    pub fn new() -> Self {
        MonotonicClock { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        MonotonicClock::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&mut self) -> Duration {
        self.origin.elapsed()
    }
}

/// Scripted clock for tests; clones share one notion of now, so a fake
/// runner can advance the same clock the harness reads.
#[derive(Debug, Clone, Default)]
pub struct FakeClock {
    now: Rc<Cell<Duration>>,
}

impl FakeClock {
    /// A fake clock at time zero.
    pub fn new() -> Self {
        FakeClock::default()
    }

    /// Moves time forward.
    pub fn advance(&self, by: Duration) {
        self.now.set(self.now.get() + by);
    }
}

impl Clock for FakeClock {
    fn now(&mut self) -> Duration {
        self.now.get()
    }
}

/// Peak-memory source. `None` means the probe could not measure, which is
/// recorded as absent rather than zero.
pub trait MemoryProbe {
    /// Peak memory in megabytes, if measurable.
    fn peak_mb(&mut self) -> Option<f64>;
}

/// Reads the process's peak resident set size from `/proc/self/status`.
#[derive(Debug, Default)]
pub struct ResidentPeakProbe;

impl MemoryProbe for ResidentPeakProbe {
    fn peak_mb(&mut self) -> Option<f64> {
        let status = std::fs::read_to_string("/proc/self/status").ok()?;
        let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
        let kb: f64 = line
            .trim_start_matches("VmHWM:")
            .trim()
            .trim_end_matches("kB")
            .trim()
            .parse()
            .ok()?;
        Some(kb / 1024.0)
    }
}

/// Probe returning a fixed value, or `None` to exercise the absent path.
#[derive(Debug, Clone, Copy)]
pub struct FakeProbe {
    /// The value every call reports.
    pub value: Option<f64>,
}

impl MemoryProbe for FakeProbe {
    fn peak_mb(&mut self) -> Option<f64> {
        self.value
    }
}

/// Processes one batch of prompts end to end.
pub trait BatchRunner {
    /// Runs every prompt in the batch through the full pipeline.
    fn run_batch(&mut self, prompts: &[String]) -> Result<(), BenchError>;
}

/// Real runner: byte-encodes each prompt and decodes with the model.
pub struct ModelRunner<'a> {
    params: &'a ParameterSet,
    config: &'a ModelConfig,
    decode: DecodeConfig,
    seed: u64,
    prompts_run: u64,
}

impl<'a> ModelRunner<'a> {
    /// Wraps a model for measurement with the given decoding options.
    pub fn new(
        params: &'a ParameterSet,
        config: &'a ModelConfig,
        decode: DecodeConfig,
        seed: u64,
    ) -> Self {
        ModelRunner { params, config, decode, seed, prompts_run: 0 }
    }
}

impl BatchRunner for ModelRunner<'_> {
    fn run_batch(&mut self, prompts: &[String]) -> Result<(), BenchError> {
        for prompt in prompts {
            let mut ids = vocab::encode(prompt, true);
            if ids.len() > self.config.context_length {
                ids.truncate(self.config.context_length - 1);
                ids.push(vocab::EOS_ID);
            }
            generate(
                self.params,
                self.config,
                &ids,
                &self.decode,
                seed::derive(self.seed, self.prompts_run),
            )?;
            self.prompts_run += 1;
        }
        Ok(())
    }
}

/// Fake runner costing a fixed duration per prompt on a shared [`FakeClock`].
#[derive(Debug, Clone)]
pub struct FixedCostRunner {
    clock: FakeClock,
    /// Simulated cost per prompt.
    pub per_prompt: Duration,
}

impl FixedCostRunner {
    /// A runner that advances `clock` by `per_prompt` for every prompt.
    pub fn new(clock: FakeClock, per_prompt: Duration) -> Self {
        FixedCostRunner { clock, per_prompt }
    }
}

impl BatchRunner for FixedCostRunner {
    fn run_batch(&mut self, prompts: &[String]) -> Result<(), BenchError> {
        self.clock
            .advance(self.per_prompt * prompts.len() as u32);
        Ok(())
    }
}

/// One measured configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    /// Effective batch size (requested size clamped to the prompt count).
    pub batch_size: usize,
    /// Mean seconds per prompt.
    pub latency_s: f64,
    /// Prompts per second.
    pub throughput: f64,
    /// Peak memory in megabytes; absent when the probe could not measure.
    pub peak_memory_mb: Option<f64>,
    /// Where the model ran.
    pub device: Device,
    /// Prompts processed per repetition.
    pub prompt_count: usize,
}

/// Harness options.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchOptions {
    /// Timed repetitions per batch size; the mean is reported.
    pub reps: usize,
    /// Device label recorded on every record.
    pub device: Device,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { reps: 3, device: Device::Cpu }
    }
}

/// Measures every batch size over the whole prompt set.
///
/// Per batch size: one untimed warm-up batch, then `reps` timed passes over
/// all prompts in batches of that size. Latency is mean wall time per
/// prompt and throughput its exact reciprocal, so every record satisfies
/// the reciprocal law by construction. Batch sizes larger than the prompt
/// count are clamped (the record shows the effective size). An empty
/// `batch_sizes` list yields an empty result.
pub fn run_bench<R, C, P>(
    runner: &mut R,
    clock: &mut C,
    probe: &mut P,
    prompts: &[String],
    batch_sizes: &[usize],
    options: &BenchOptions,
) -> Result<Vec<BenchRecord>, BenchError>
where
    R: BatchRunner,
    C: Clock,
    P: MemoryProbe,
{
    if prompts.is_empty() {
        return Err(BenchError::EmptyPrompts);
    }
    if batch_sizes.iter().any(|&b| b == 0) {
        return Err(BenchError::InvalidBatchSizes {
            detail: "batch size 0 is not measurable".into(),
        });
    }
    if batch_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::InvalidBatchSizes {
            detail: "batch sizes must be strictly ascending".into(),
        });
    }
    let reps = options.reps.max(1);

    let mut records = Vec::with_capacity(batch_sizes.len());
    for &requested in batch_sizes {
        let batch_size = requested.min(prompts.len());

        runner.run_batch(&prompts[..batch_size])?;

        let mut total = Duration::ZERO;
        for _ in 0..reps {
            let start = clock.now();
            for chunk in prompts.chunks(batch_size) {
                runner.run_batch(chunk)?;
            }
            total += clock.now().saturating_sub(start);
        }
        let mean_seconds = total.as_secs_f64() / reps as f64;
        if mean_seconds <= 0.0 {
            return Err(BenchError::ZeroElapsed { batch_size });
        }

        records.push(BenchRecord {
            batch_size,
            latency_s: mean_seconds / prompts.len() as f64,
            throughput: prompts.len() as f64 / mean_seconds,
            peak_memory_mb: probe.peak_mb(),
            device: options.device,
            prompt_count: prompts.len(),
        });
    }
    Ok(records)
}

/// Outcome of [`consistency_check`]: how many records passed the hard
/// reciprocal check and any informational flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Records that passed the reciprocal check.
    pub records_checked: usize,
    /// Informational observations, such as non-monotone latency.
    pub flags: Vec<String>,
}

/// Verifies the reciprocal law on every record and flags latency that rises
/// with batch size.
///
/// `throughput * latency_s` farther than [`RECIPROCAL_TOLERANCE`] from 1 is
/// a hard error. Latency increasing from one batch size to the next is only
/// flagged: published scalability tables shrink monotonically, but real
/// hardware is not obliged to.
pub fn consistency_check(records: &[BenchRecord]) -> Result<ConsistencyReport, BenchError> {
    if records.is_empty() {
        return Err(BenchError::EmptyRecords);
    }
    for record in records {
        let product = record.throughput * record.latency_s;
        if (product - 1.0).abs() >= RECIPROCAL_TOLERANCE {
            return Err(BenchError::ReciprocalViolation {
                batch_size: record.batch_size,
                product,
            });
        }
    }
    let mut flags = Vec::new();
    for pair in records.windows(2) {
        if pair[1].latency_s > pair[0].latency_s {
            flags.push(format!(
                "latency rose from {:.4} s at batch {} to {:.4} s at batch {}",
                pair[0].latency_s, pair[0].batch_size, pair[1].latency_s, pair[1].batch_size
            ));
        }
    }
    Ok(ConsistencyReport { records_checked: records.len(), flags })
}

/// Renders records as CSV: `batch,latency_s,throughput,peak_mem_mb`.
pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from("batch,latency_s,throughput,peak_mem_mb\n");
    for r in records {
        let mem = r
            .peak_memory_mb
            .map_or(String::new(), |m| format!("{m:.2}"));
        out.push_str(&format!(
            "{},{:.6},{:.4},{}\n",
            r.batch_size, r.latency_s, r.throughput, mem
        ));
    }
    out
}

/// Energy and emission for a training or inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonEstimate {
    /// Per-device power draw in kilowatts.
    pub tdp_kw: f64,
    /// Number of devices.
    pub device_count: u32,
    /// Wall-clock hours.
    pub hours: f64,
    /// Grid carbon intensity in kg CO2 per kWh.
    pub intensity_kg_per_kwh: f64,
    /// `tdp_kw * device_count * hours`.
    pub energy_kwh: f64,
    /// `energy_kwh * intensity_kg_per_kwh`.
    pub emission_kg: f64,
}

/// Estimates energy use and carbon emission from power, device count,
/// duration, and grid intensity. Every input must be positive.
pub fn carbon_estimate(
    tdp_kw: f64,
    device_count: u32,
    hours: f64,
    intensity_kg_per_kwh: f64,
) -> Result<CarbonEstimate, BenchError> {
    for (field, value) in [
        ("tdp_kw", tdp_kw),
        ("hours", hours),
        ("intensity_kg_per_kwh", intensity_kg_per_kwh),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(BenchError::NonPositiveInput { field, value });
        }
    }
    if device_count == 0 {
        return Err(BenchError::NonPositiveInput { field: "device_count", value: 0.0 });
    }
    let energy_kwh = tdp_kw * device_count as f64 * hours;
    Ok(CarbonEstimate {
        tdp_kw,
        device_count,
        hours,
        intensity_kg_per_kwh,
        energy_kwh,
        emission_kg: energy_kwh * intensity_kg_per_kwh,
    })
}

/// Published CPU scalability rows (batch, latency s, throughput /s,
/// memory MB) used as consistency-check fixtures.
pub const CPU_SCALABILITY_ROWS: [(usize, f64, f64, f64); 7] = [
    (1, 0.5646, 1.77, 2216.37),
    (2, 0.2692, 3.71, 2330.37),
    (4, 0.155, 6.45, 2418.31),
    (8, 0.0949, 10.54, 2582.26),
    (16, 0.0855, 11.7, 2601.56),
    (32, 0.0828, 12.07, 2742.99),
    (64, 0.0806, 12.41, 2743.99),
];

/// Published GPU scalability rows used as consistency-check fixtures.
pub const GPU_SCALABILITY_ROWS: [(usize, f64, f64, f64); 7] = [
    (1, 1.0927, 0.92, 1166.09),
    (2, 0.1592, 6.28, 1177.29),
    (4, 0.1296, 7.72, 1192.34),
    (8, 0.0810, 12.34, 1238.53),
    (16, 0.0439, 22.80, 1322.05),
    (32, 0.0409, 24.48, 1487.59),
    (64, 0.0146, 68.26, 1812.68),
];

/// Builds records from a published fixture table.
pub fn fixture_records(rows: &[(usize, f64, f64, f64)], device: Device) -> Vec<BenchRecord> {
    rows.iter()
        .map(|&(batch_size, latency_s, throughput, mem)| BenchRecord {
            batch_size,
            latency_s,
            throughput,
            peak_memory_mb: Some(mem),
            device,
            prompt_count: 200,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DecodeMode;

    fn prompts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("prompt {i}")).collect()
    }

    #[test]
    fn fixed_cost_runner_reproduces_injected_costs() {
        let clock = FakeClock::new();
        let mut runner = FixedCostRunner::new(clock.clone(), Duration::from_millis(10));
        let mut harness_clock = clock.clone();
        let mut probe = FakeProbe { value: Some(512.0) };
        let records = run_bench(
            &mut runner,
            &mut harness_clock,
            &mut probe,
            &prompts(100),
            &[1, 4],
            &BenchOptions::default(),
        )
        .unwrap();

        assert_eq!(records.len(), 2);
        for record in &records {
            assert!((record.latency_s - 0.010).abs() / 0.010 < 0.02);
            assert!((record.throughput - 100.0).abs() / 100.0 < 0.02);
            assert!((record.throughput * record.latency_s - 1.0).abs() < 1e-12);
            assert_eq!(record.peak_memory_mb, Some(512.0));
            assert_eq!(record.prompt_count, 100);
        }
    }

    #[test]
    fn identical_fake_schedules_give_identical_records() {
        let run = || {
            let clock = FakeClock::new();
            let mut runner = FixedCostRunner::new(clock.clone(), Duration::from_millis(7));
            let mut harness_clock = clock.clone();
            let mut probe = FakeProbe { value: Some(64.0) };
            run_bench(
                &mut runner,
                &mut harness_clock,
                &mut probe,
                &prompts(30),
                &[1, 2, 8],
                &BenchOptions::default(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn oversized_batch_is_clamped_and_probe_failure_is_absent() {
        let clock = FakeClock::new();
        let mut runner = FixedCostRunner::new(clock.clone(), Duration::from_millis(5));
        let mut harness_clock = clock.clone();
        let mut probe = FakeProbe { value: None };
        let records = run_bench(
            &mut runner,
            &mut harness_clock,
            &mut probe,
            &prompts(3),
            &[8],
            &BenchOptions::default(),
        )
        .unwrap();
        assert_eq!(records[0].batch_size, 3);
        assert_eq!(records[0].peak_memory_mb, None);
    }

    #[test]
    fn input_validation() {
        let clock = FakeClock::new();
        let mut runner = FixedCostRunner::new(clock.clone(), Duration::from_millis(1));
        let mut probe = FakeProbe { value: None };
        let options = BenchOptions::default();

        let empty: Vec<String> = Vec::new();
        assert!(matches!(
            run_bench(&mut runner, &mut clock.clone(), &mut probe, &empty, &[1], &options),
            Err(BenchError::EmptyPrompts)
        ));
        assert!(matches!(
            run_bench(&mut runner, &mut clock.clone(), &mut probe, &prompts(2), &[2, 1], &options),
            Err(BenchError::InvalidBatchSizes { .. })
        ));
        assert!(matches!(
            run_bench(&mut runner, &mut clock.clone(), &mut probe, &prompts(2), &[0], &options),
            Err(BenchError::InvalidBatchSizes { .. })
        ));
        let none: [usize; 0] = [];
        let records =
            run_bench(&mut runner, &mut clock.clone(), &mut probe, &prompts(2), &none, &options)
                .unwrap();
        assert!(records.is_empty());

        // A runner that costs nothing trips the zero-elapsed guard.
        let frozen = FakeClock::new();
        let mut free_runner = FixedCostRunner::new(frozen.clone(), Duration::ZERO);
        assert!(matches!(
            run_bench(&mut free_runner, &mut frozen.clone(), &mut probe, &prompts(2), &[1], &options),
            Err(BenchError::ZeroElapsed { batch_size: 1 })
        ));
    }

    #[test]
    fn published_scalability_rows_pass_consistency() {
        for (rows, device) in [
            (&CPU_SCALABILITY_ROWS, Device::Cpu),
            (&GPU_SCALABILITY_ROWS, Device::Accelerator),
        ] {
            let records = fixture_records(rows, device);
            let report = consistency_check(&records).unwrap();
            assert_eq!(report.records_checked, 7);
            assert!(report.flags.is_empty(), "unexpected flags: {:?}", report.flags);
        }
    }

    #[test]
    fn fabricated_reciprocal_violation_is_a_hard_error() {
        let mut records = fixture_records(&CPU_SCALABILITY_ROWS[..1], Device::Cpu);
        records[0].throughput = 2.0;
        records[0].latency_s = 1.0;
        assert!(matches!(
            consistency_check(&records),
            Err(BenchError::ReciprocalViolation { batch_size: 1, .. })
        ));
        assert!(matches!(
            consistency_check(&[]),
            Err(BenchError::EmptyRecords)
        ));
    }

    #[test]
    fn rising_latency_is_flagged_not_failed() {
        let mut records = fixture_records(&CPU_SCALABILITY_ROWS[..2], Device::Cpu);
        records.swap(0, 1);
        for (i, r) in records.iter_mut().enumerate() {
            r.batch_size = 1 << i;
        }
        let report = consistency_check(&records).unwrap();
        assert_eq!(report.flags.len(), 1);
        assert!(report.flags[0].contains("latency rose"));
    }

    #[test]
    fn real_model_runner_produces_consistent_records() {
        let config = ModelConfig::tiny();
        let params = ParameterSet::zeros(&config);
        let decode = DecodeConfig {
            mode: DecodeMode::Greedy,
            max_length: 4,
            ..DecodeConfig::default()
        };
        let mut runner = ModelRunner::new(&params, &config, decode, 1);
        let mut clock = MonotonicClock::new();
        let mut probe = ResidentPeakProbe;
        let records = run_bench(
            &mut runner,
            &mut clock,
            &mut probe,
            &prompts(4),
            &[1, 2],
            &BenchOptions { reps: 1, device: Device::Cpu },
        )
        .unwrap();
        consistency_check(&records).unwrap();
        assert!(records.iter().all(|r| r.latency_s > 0.0));
    }

    #[test]
    fn resident_peak_probe_reads_something_on_linux() {
        let mut probe = ResidentPeakProbe;
        if let Some(mb) = probe.peak_mb() {
            assert!(mb > 0.0);
        }
    }

    #[test]
    fn carbon_reference_values_are_exact() {
        let estimate = carbon_estimate(0.25, 2, 600.0, 0.7).unwrap();
        assert_eq!(estimate.energy_kwh, 300.0);
        assert_eq!(estimate.emission_kg, 210.0);

        let small = carbon_estimate(0.5, 4, 10.0, 0.5).unwrap();
        assert_eq!(small.energy_kwh, 20.0);
        assert_eq!(small.emission_kg, 10.0);
    }

    #[test]
    fn carbon_scales_linearly_and_vanishes_with_time() {
        let base = carbon_estimate(0.25, 2, 600.0, 0.7).unwrap();
        let doubled = carbon_estimate(0.5, 2, 600.0, 0.7).unwrap();
        assert!((doubled.emission_kg - 2.0 * base.emission_kg).abs() < 1e-9);
        let brief = carbon_estimate(0.25, 1, 1e-9, 0.7).unwrap();
        assert!(brief.emission_kg < 1e-9);
    }

    #[test]
    fn carbon_rejects_non_positive_inputs() {
        assert!(matches!(
            carbon_estimate(0.0, 1, 1.0, 1.0),
            Err(BenchError::NonPositiveInput { field: "tdp_kw", .. })
        ));
        assert!(matches!(
            carbon_estimate(1.0, 0, 1.0, 1.0),
            Err(BenchError::NonPositiveInput { field: "device_count", .. })
        ));
        assert!(matches!(
            carbon_estimate(1.0, 1, -1.0, 1.0),
            Err(BenchError::NonPositiveInput { field: "hours", .. })
        ));
        assert!(matches!(
            carbon_estimate(1.0, 1, 1.0, f64::NAN),
            Err(BenchError::NonPositiveInput { field: "intensity_kg_per_kwh", .. })
        ));
    }

    #[test]
    fn csv_rendering_includes_absent_memory_as_empty() {
        let mut records = fixture_records(&CPU_SCALABILITY_ROWS[..1], Device::Cpu);
        records[0].peak_memory_mb = None;
        let csv = records_to_csv(&records);
        assert!(csv.starts_with("batch,latency_s,throughput,peak_mem_mb\n"));
        assert!(csv.contains("1,0.564600,1.7700,\n"));
    }
}
