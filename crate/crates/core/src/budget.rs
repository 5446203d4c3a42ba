//! Learning-rate schedules and compute/energy/carbon estimates.
//!
//! All quantities here are closed-form estimates used for planning and
//! reporting, not measurements: training compute is the standard `6 * N * D`
//! approximation, inference prefill is `2 * N * D`, decode latency is the
//! memory-bandwidth bound, and wall time divides total FLOPs by sustained
//! accelerator throughput. Energy multiplies wall time by board power and a
//! whole-node overhead factor, and carbon multiplies energy by a grid
//! intensity. The defaults describe a small V100 setup; everything is
//! overridable through flat `key = value` profile files.

use std::path::Path;

use crate::kv::{self, Fields, KvError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BudgetError {
    #[error("{0}")]
    Config(#[from] KvError),
    #[error("token position {tokens} outside schedule range [0, {total}]")]
    OutOfRange { tokens: f64, total: f64 },
}

/// Transformer geometry as published in a model card or config.
///
/// `n_heads * d_head` is intentionally not validated against `d_model`:
/// published configurations exist where the two disagree, and the estimates
/// below only depend on `n_params` and `n_ctx`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelShape {
    pub n_params: f64,
    pub n_layers: u32,
    pub d_model: u32,
    pub n_heads: u32,
    pub d_head: u32,
    pub n_ctx: u32,
    pub vocab_size: u32,
}

impl ModelShape {
    pub fn from_entries(entries: Vec<kv::Entry>) -> Result<Self, BudgetError> {
        let mut f = Fields::new(entries)?;
        let shape = ModelShape {
            n_params: f.require_f64("n_params")?,
            n_layers: f.require_u32("n_layers")?,
            d_model: f.require_u32("d_model")?,
            n_heads: f.require_u32("n_heads")?,
            d_head: f.require_u32("d_head")?,
            n_ctx: f.require_u32("n_ctx")?,
            vocab_size: f.require_u32("vocab_size")?,
        };
        f.finish()?;
        if shape.n_params <= 0.0 {
            return Err(KvError::new(0, "n_params must be positive").into());
        }
        Ok(shape)
    }

    pub fn from_file(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_entries(kv::parse_flat(&text).map_err(invalid_data)?).map_err(invalid_data)
    }
}

/// Optimization recipe for a pretraining run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainPlan {
    pub peak_lr: f64,
    pub min_lr_ratio: f64,
    pub warmup_tokens: f64,
    pub total_tokens: f64,
    pub batch_tokens: u64,
    pub epochs: u32,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip_norm: f64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            peak_lr: 6.0e-4,
            min_lr_ratio: 0.1,
            warmup_tokens: 171e6,
            total_tokens: 16.5e9,
            batch_tokens: 500_000,
            epochs: 3,
            adam_beta1: 0.9,
            adam_beta2: 0.95,
            adam_eps: 1e-8,
            grad_clip_norm: 1.0,
        }
    }
}

impl TrainPlan {
    pub fn min_lr(&self) -> f64 {
        self.min_lr_ratio * self.peak_lr
    }

    /// Any subset of keys may appear; the rest keep their defaults.
    pub fn from_entries(entries: Vec<kv::Entry>) -> Result<Self, BudgetError> {
        let mut f = Fields::new(entries)?;
        let mut plan = TrainPlan::default();
        if let Some(v) = f.take_f64("peak_lr")? {
            plan.peak_lr = v;
        }
        if let Some(v) = f.take_f64("min_lr_ratio")? {
            plan.min_lr_ratio = v;
        }
        if let Some(v) = f.take_f64("warmup_tokens")? {
            plan.warmup_tokens = v;
        }
        if let Some(v) = f.take_f64("total_tokens")? {
            plan.total_tokens = v;
        }
        if let Some(v) = f.take_u64("batch_tokens")? {
            plan.batch_tokens = v;
        }
        if let Some(v) = f.take_u32("epochs")? {
            plan.epochs = v;
        }
        if let Some(v) = f.take_f64("adam_beta1")? {
            plan.adam_beta1 = v;
        }
        if let Some(v) = f.take_f64("adam_beta2")? {
            plan.adam_beta2 = v;
        }
        if let Some(v) = f.take_f64("adam_eps")? {
            plan.adam_eps = v;
        }
        if let Some(v) = f.take_f64("grad_clip_norm")? {
            plan.grad_clip_norm = v;
        }
        f.finish()?;
        if plan.warmup_tokens < 0.0 || plan.total_tokens < plan.warmup_tokens {
            return Err(KvError::new(0, "need 0 <= warmup_tokens <= total_tokens").into());
        }
        Ok(plan)
    }

    pub fn from_file(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_entries(kv::parse_flat(&text).map_err(invalid_data)?).map_err(invalid_data)
    }
}

/// Accelerator setup used for wall-time, energy and cost estimates.
///
/// `node_power_factor` scales GPU board power up to whole-node draw; 1.0
/// counts the GPUs alone, 2.0 is a conservative bound that doubles board
/// power to cover host CPU, memory and cooling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardwareProfile {
    pub name: String,
    pub gpu_count: u32,
    /// Sustained per-GPU throughput in TFLOP/s.
    pub peak_tflops: f64,
    pub power_per_gpu_w: f64,
    pub node_power_factor: f64,
    pub mem_bandwidth_gb_s: f64,
    pub grid_kg_co2_per_kwh: f64,
    pub energy_price_per_kwh: f64,
}

impl HardwareProfile {
    /// Four-GPU training node, GPU board power only, moderate-carbon grid.
    pub fn v100_cluster() -> Self {
        HardwareProfile {
            name: "v100-cluster".to_string(),
            gpu_count: 4,
            peak_tflops: 112.0,
            power_per_gpu_w: 300.0,
            node_power_factor: 1.0,
            mem_bandwidth_gb_s: 900.0,
            grid_kg_co2_per_kwh: 0.4,
            energy_price_per_kwh: 35.0,
        }
    }

    /// Single V100 with whole-node power bound and a fossil-heavy grid.
    pub fn v100_single() -> Self {
        HardwareProfile {
            name: "v100-single".to_string(),
            gpu_count: 1,
            peak_tflops: 112.0,
            power_per_gpu_w: 300.0,
            node_power_factor: 2.0,
            mem_bandwidth_gb_s: 900.0,
            grid_kg_co2_per_kwh: 0.485,
            energy_price_per_kwh: 35.0,
        }
    }

    pub fn from_entries(entries: Vec<kv::Entry>) -> Result<Self, BudgetError> {
        let mut f = Fields::new(entries)?;
        let name = f.take_str("name").map(|(_, v)| v).unwrap_or_else(|| "custom".to_string());
        let profile = HardwareProfile {
            name,
            gpu_count: f.require_u32("gpu_count")?,
            peak_tflops: f.require_f64("peak_tflops")?,
            power_per_gpu_w: f.require_f64("power_per_gpu_w")?,
            node_power_factor: f.require_f64("node_power_factor")?,
            mem_bandwidth_gb_s: f.require_f64("mem_bandwidth_gb_s")?,
            grid_kg_co2_per_kwh: f.require_f64("grid_kg_co2_per_kwh")?,
            energy_price_per_kwh: f.require_f64("energy_price_per_kwh")?,
        };
        f.finish()?;
        if profile.gpu_count == 0 || profile.peak_tflops <= 0.0 || profile.mem_bandwidth_gb_s <= 0.0 {
            return Err(KvError::new(0, "gpu_count, peak_tflops and mem_bandwidth_gb_s must be positive").into());
        }
        Ok(profile)
    }

    pub fn from_file(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_entries(kv::parse_flat(&text).map_err(invalid_data)?).map_err(invalid_data)
    }
}

fn invalid_data(e: impl std::fmt::Display) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string())
}

/// Learning rate after `tokens_seen` tokens: linear warmup from 0 to
/// `peak_lr` over `warmup_tokens`, then cosine decay to
/// `min_lr_ratio * peak_lr` at `total_tokens`.
pub fn lr_at(plan: &TrainPlan, tokens_seen: f64) -> Result<f64, BudgetError> {
    if !tokens_seen.is_finite() || tokens_seen < 0.0 || tokens_seen > plan.total_tokens {
        return Err(BudgetError::OutOfRange { tokens: tokens_seen, total: plan.total_tokens });
    }
    if tokens_seen <= plan.warmup_tokens {
        if plan.warmup_tokens == 0.0 {
            return Ok(plan.peak_lr);
        }
        return Ok(plan.peak_lr * (tokens_seen / plan.warmup_tokens));
    }
    let min_lr = plan.min_lr();
    let progress = (tokens_seen - plan.warmup_tokens) / (plan.total_tokens - plan.warmup_tokens);
    Ok(min_lr + 0.5 * (plan.peak_lr - min_lr) * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Total training compute: `6 * n_params * n_tokens` FLOPs.
pub fn training_flops(n_params: f64, n_tokens: f64) -> f64 {
    6.0 * n_params * n_tokens
}

/// Prefill compute for a prompt: `2 * n_params * prompt_tokens` FLOPs.
pub fn inference_prefill_flops(n_params: f64, prompt_tokens: f64) -> f64 {
    2.0 * n_params * prompt_tokens
}

/// Per-token decode latency in milliseconds, assuming every weight is read
/// once per token at the profile's memory bandwidth (decimal GB/s).
pub fn memory_bound_latency_ms(n_params: f64, bytes_per_param: f64, profile: &HardwareProfile) -> f64 {
    let bytes = n_params * bytes_per_param;
    bytes / (profile.mem_bandwidth_gb_s * 1e9) * 1e3
}

/// Lower bound on wall time in hours: FLOPs divided by aggregate sustained
/// throughput. Real runs are slower; this is the ideal-utilization floor.
pub fn wall_time_lower_bound_hours(flops: f64, profile: &HardwareProfile) -> f64 {
    flops / (profile.gpu_count as f64 * profile.peak_tflops * 1e12) / 3600.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyEstimate {
    pub kwh: f64,
    pub co2_kg: f64,
}

/// Energy and carbon for a run of `hours` on the whole profile:
/// `hours * gpu_count * power * node_power_factor`, then the grid intensity.
pub fn energy_and_carbon(hours: f64, profile: &HardwareProfile) -> EnergyEstimate {
    let kwh = hours * profile.gpu_count as f64 * profile.power_per_gpu_w * profile.node_power_factor / 1000.0;
    EnergyEstimate { kwh, co2_kg: kwh * profile.grid_kg_co2_per_kwh }
}

/// Energy in joules for one inference step of `latency_ms` on a single GPU
/// at board power (no node overhead factor).
pub fn inference_energy_j(latency_ms: f64, profile: &HardwareProfile) -> f64 {
    latency_ms / 1e3 * profile.power_per_gpu_w
}

/// Electricity cost for an energy amount, in the profile's currency.
pub fn energy_cost(kwh: f64, profile: &HardwareProfile) -> f64 {
    kwh * profile.energy_price_per_kwh
}

/// Gradient-accumulation layout for reaching `batch_tokens` per optimizer
/// step with `micro_batch_seqs` sequences of `n_ctx` tokens per micro-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GradAccumPlan {
    pub accum_steps: u64,
    pub micro_batch_seqs: u64,
    pub seqs_per_step: u64,
    pub tokens_per_step: u64,
}

pub fn grad_accum_plan(batch_tokens: u64, n_ctx: u64, micro_batch_seqs: u64) -> GradAccumPlan {
    assert!(n_ctx > 0 && micro_batch_seqs > 0, "n_ctx and micro_batch_seqs must be positive");
    let micro_tokens = n_ctx * micro_batch_seqs;
    let accum_steps = batch_tokens.div_ceil(micro_tokens);
    let seqs_per_step = accum_steps * micro_batch_seqs;
    GradAccumPlan { accum_steps, micro_batch_seqs, seqs_per_step, tokens_per_step: seqs_per_step * n_ctx }
}

impl GradAccumPlan {
    /// Micro-steps each replica runs under `dp`-way data parallelism.
    pub fn per_replica_steps(&self, dp: u64) -> u64 {
        assert!(dp > 0);
        self.accum_steps.div_ceil(dp)
    }
}

/// Full planning summary for one (shape, plan, hardware) combination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingEstimate {
    pub n_params: f64,
    pub n_ctx: u32,
    pub batch_tokens: u64,
    pub epochs: u32,
    pub total_tokens: f64,
    pub flops_per_step: f64,
    pub flops_per_epoch: f64,
    pub total_flops: f64,
    pub wall_hours_lower_bound: f64,
    pub energy: EnergyEstimate,
    pub energy_cost: f64,
}

pub fn estimate_training(shape: &ModelShape, plan: &TrainPlan, profile: &HardwareProfile) -> TrainingEstimate {
    let tokens_per_epoch = if plan.epochs > 0 { plan.total_tokens / plan.epochs as f64 } else { plan.total_tokens };
    let total_flops = training_flops(shape.n_params, plan.total_tokens);
    let wall_hours = wall_time_lower_bound_hours(total_flops, profile);
    let energy = energy_and_carbon(wall_hours, profile);
    TrainingEstimate {
        n_params: shape.n_params,
        n_ctx: shape.n_ctx,
        batch_tokens: plan.batch_tokens,
        epochs: plan.epochs,
        total_tokens: plan.total_tokens,
        flops_per_step: training_flops(shape.n_params, plan.batch_tokens as f64),
        flops_per_epoch: training_flops(shape.n_params, tokens_per_epoch),
        total_flops,
        wall_hours_lower_bound: wall_hours,
        energy,
        energy_cost: energy_cost(energy.kwh, profile),
    }
}

/// Per-query inference summary for a prompt of `prompt_tokens`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceEstimate {
    pub prompt_tokens: f64,
    pub prefill_flops: f64,
    pub latency_ms_per_token: f64,
    pub energy_j_per_token: f64,
}

pub fn estimate_inference(
    n_params: f64,
    prompt_tokens: f64,
    bytes_per_param: f64,
    profile: &HardwareProfile,
) -> InferenceEstimate {
    let latency = memory_bound_latency_ms(n_params, bytes_per_param, profile);
    InferenceEstimate {
        prompt_tokens,
        prefill_flops: inference_prefill_flops(n_params, prompt_tokens),
        latency_ms_per_token: latency,
        energy_j_per_token: inference_energy_j(latency, profile),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn warmup_is_linear_and_hits_peak_exactly() {
        let plan = TrainPlan::default();
        assert_eq!(lr_at(&plan, 0.0).unwrap(), 0.0);
        assert_eq!(lr_at(&plan, 85.5e6).unwrap(), 3.0e-4);
        assert_eq!(lr_at(&plan, 171e6).unwrap(), 6.0e-4);
    }

    #[test]
    fn decay_ends_at_min_lr_exactly() {
        let plan = TrainPlan::default();
        let end = lr_at(&plan, plan.total_tokens).unwrap();
        assert_eq!(end, plan.min_lr());
        assert!(close(end, 6.0e-5, 1e-12));
    }

    #[test]
    fn schedule_is_continuous_at_warmup_boundary() {
        let plan = TrainPlan::default();
        let left = lr_at(&plan, plan.warmup_tokens - 1.0).unwrap();
        let right = lr_at(&plan, plan.warmup_tokens + 1.0).unwrap();
        let peak = lr_at(&plan, plan.warmup_tokens).unwrap();
        assert!((left - peak).abs() < 1e-10);
        assert!((right - peak).abs() < 1e-10);
        assert_eq!(peak, plan.peak_lr);
    }

    #[test]
    fn schedule_rejects_out_of_range() {
        let plan = TrainPlan::default();
        assert!(matches!(lr_at(&plan, -1.0), Err(BudgetError::OutOfRange { .. })));
        assert!(matches!(lr_at(&plan, plan.total_tokens + 1.0), Err(BudgetError::OutOfRange { .. })));
        assert!(lr_at(&plan, f64::NAN).is_err());
    }

    #[test]
    fn zero_warmup_starts_at_peak() {
        let plan = TrainPlan { warmup_tokens: 0.0, ..TrainPlan::default() };
        assert_eq!(lr_at(&plan, 0.0).unwrap(), plan.peak_lr);
    }

    #[test]
    fn training_flops_anchors() {
        assert!(close(training_flops(134e6, 180e6), 144.72e15, 1e-12));
        assert!(close(training_flops(3.21e9, 504e6), 9707.04e15, 1e-12));
    }

    #[test]
    fn prefill_flops_anchors() {
        assert!(close(inference_prefill_flops(134e6, 12.0), 3.216e9, 1e-12));
        assert!(close(inference_prefill_flops(3.21e9, 33.0), 0.21186e12, 1e-12));
    }

    #[test]
    fn latency_anchors() {
        let hw = HardwareProfile::v100_single();
        assert!(close(memory_bound_latency_ms(134e6, 4.0, &hw), 0.5955555555, 1e-9));
        assert!(close(memory_bound_latency_ms(3.24e9, 2.0, &hw), 7.2, 1e-12));
    }

    #[test]
    fn wall_time_anchor() {
        let hw = HardwareProfile::v100_single();
        let hours = wall_time_lower_bound_hours(144.72e15, &hw);
        assert!(close(hours, 0.36, 0.03), "got {hours}");
    }

    #[test]
    fn cluster_energy_is_exact() {
        let hw = HardwareProfile::v100_cluster();
        let e = energy_and_carbon(66.0, &hw);
        assert!(close(e.kwh, 79.2, 1e-3));
        assert!(close(e.co2_kg, 31.68, 1e-3));
    }

    #[test]
    fn single_node_energy_uses_power_factor() {
        let hw = HardwareProfile::v100_single();
        let e = energy_and_carbon(23.17, &hw);
        assert!(close(e.kwh, 13.902, 1e-9));
        assert!(close(e.co2_kg, 6.74247, 1e-9));
    }

    #[test]
    fn inference_energy_anchors() {
        let hw = HardwareProfile::v100_single();
        assert!(close(inference_energy_j(0.60, &hw), 0.18, 1e-12));
        assert!(close(inference_energy_j(7.20, &hw), 2.16, 1e-12));
    }

    #[test]
    fn kwh_and_joules_are_dimensionally_consistent() {
        // hours * W on one GPU with factor 1: kWh * 3.6e6 == J
        let hw = HardwareProfile { gpu_count: 1, node_power_factor: 1.0, ..HardwareProfile::v100_single() };
        let hours = 0.75;
        let kwh = energy_and_carbon(hours, &hw).kwh;
        let joules = inference_energy_j(hours * 3600.0 * 1e3, &hw);
        assert!(close(kwh * 3.6e6, joules, 1e-12));
    }

    #[test]
    fn cost_ratio_between_profiles() {
        let hw = HardwareProfile::v100_single();
        let small = energy_cost(energy_and_carbon(0.36, &hw).kwh, &hw);
        let large = energy_cost(energy_and_carbon(23.17, &hw).kwh, &hw);
        assert!(close(large / small, 64.6, 0.02), "got {}", large / small);
    }

    #[test]
    fn grad_accum_examples() {
        let plan = grad_accum_plan(500_000, 1024, 8);
        assert_eq!(plan.accum_steps, 62);
        assert_eq!(plan.per_replica_steps(4), 16);
        assert_eq!(plan.seqs_per_step, 496);

        let exact = grad_accum_plan(524_288, 1024, 8);
        assert_eq!(exact.accum_steps, 64);
        assert_eq!(exact.seqs_per_step, 512);
        assert_eq!(exact.tokens_per_step, 524_288);
    }

    #[test]
    fn shape_file_round_trip() {
        let text = "n_params = 134e6\nn_layers = 12\nd_model = 768\nn_heads = 16\nd_head = 64\nn_ctx = 1024\nvocab_size = 32000\n";
        let shape = ModelShape::from_entries(kv::parse_flat(text).unwrap()).unwrap();
        assert_eq!(shape.n_params, 134e6);
        // head geometry is reported as-is even when n_heads * d_head != d_model
        assert_eq!(shape.n_heads as u64 * shape.d_head as u64, 1024);
        assert_eq!(shape.d_model, 768);
    }

    #[test]
    fn plan_file_rejects_unknown_keys() {
        let err = TrainPlan::from_entries(kv::parse_flat("peak_lr = 1e-3\nbogus = 2\n").unwrap());
        match err {
            Err(BudgetError::Config(e)) => assert_eq!(e.line, 2),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn profile_presets_differ_in_power_accounting() {
        let cluster = HardwareProfile::v100_cluster();
        let single = HardwareProfile::v100_single();
        assert_eq!(cluster.node_power_factor, 1.0);
        assert_eq!(single.node_power_factor, 2.0);
        assert_eq!(cluster.gpu_count, 4);
        assert_eq!(single.gpu_count, 1);
    }

    #[test]
    fn estimate_training_composes_the_pieces() {
        let shape = ModelShape {
            n_params: 134e6,
            n_layers: 12,
            d_model: 768,
            n_heads: 16,
            d_head: 64,
            n_ctx: 1024,
            vocab_size: 32000,
        };
        let plan = TrainPlan { total_tokens: 180e6, epochs: 3, ..TrainPlan::default() };
        let hw = HardwareProfile::v100_single();
        let est = estimate_training(&shape, &plan, &hw);
        assert!(close(est.total_flops, 144.72e15, 1e-12));
        assert!(close(est.flops_per_epoch, est.total_flops / 3.0, 1e-12));
        assert!(close(est.flops_per_step, 6.0 * 134e6 * 500_000.0, 1e-12));
        assert!(close(est.wall_hours_lower_bound, 0.36, 0.03));
    }
}
