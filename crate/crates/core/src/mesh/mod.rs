//! 2D mesh of compute units: ring schedule, distributed attention and a
//! bulk-synchronous timing and energy model.

pub mod mrca;
pub mod sim;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use mrca::{assign_compute, mrca_schedule, validate_schedule, MrcaSchedule, ValidationReport};
pub use sim::{run_drattention, run_ring_baseline, MeshRun, SimReport, TraceEvent};

/// Bytes per payload element (16-bit activations).
pub const ELEMENT_BYTES: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub rows: usize,
    pub cols: usize,
    /// Bytes per second.
    pub link_bandwidth: f64,
    /// Seconds per hop.
    pub link_latency: f64,
    /// Joules per bit per hop.
    pub link_energy: f64,
    pub dram_bandwidth: f64,
    pub dram_latency: f64,
    pub dram_energy: f64,
    /// Equivalent additions per second per CU.
    pub cu_throughput: f64,
    /// Joules per equivalent addition.
    pub cu_energy: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            rows: 5,
            cols: 5,
            link_bandwidth: 250e9,
            link_latency: 20e-9,
            link_energy: 1.0e-12,
            dram_bandwidth: 512e9,
            dram_latency: 100e-9,
            dram_energy: 6.0e-12,
            cu_throughput: 1e12,
            cu_energy: 0.5e-12,
        }
    }
}

impl MeshConfig {
    pub fn grid(rows: usize, cols: usize) -> Self {
        MeshConfig {
            rows,
            cols,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(invalid("mesh needs at least one row and one column"));
        }
        let positive = [
            self.link_bandwidth,
            self.link_latency,
            self.link_energy,
            self.dram_bandwidth,
            self.dram_latency,
            self.dram_energy,
            self.cu_throughput,
            self.cu_energy,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("mesh parameters must be positive and finite"));
        }
        Ok(())
    }

    /// Store-and-forward time of one message over `hops` links.
    pub fn transfer_time(&self, bytes: u64, hops: usize) -> f64 {
        if hops == 0 {
            return 0.0;
        }
        hops as f64 * (self.link_latency + bytes as f64 / self.link_bandwidth)
    }

    pub fn link_energy_of(&self, bytes: u64, hops: usize) -> f64 {
        (bytes * 8) as f64 * hops as f64 * self.link_energy
    }
}

/// Time and energy of one bulk-synchronous step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCost {
    pub compute_time: f64,
    pub comm_time: f64,
    pub step_time: f64,
    pub energy: f64,
}

/// One CU doing `work` equivalent additions while a message of `bytes`
/// crosses `hops` links.
pub fn estimate_step(work: f64, bytes: u64, hops: usize, mesh: &MeshConfig) -> StepCost {
    let compute_time = work / mesh.cu_throughput;
    let comm_time = if bytes == 0 { 0.0 } else { mesh.transfer_time(bytes, hops) };
    StepCost {
        compute_time,
        comm_time,
        step_time: compute_time.max(comm_time),
        energy: mesh.link_energy_of(bytes, hops) + work * mesh.cu_energy,
    }
}
