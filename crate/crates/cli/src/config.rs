//! Per-command configuration files. Unknown keys are rejected.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crossattn_core::cost::{CostWeights, DseCandidate};
use crossattn_core::mesh::MeshConfig;
use crossattn_core::sads::{radius_serde, SadsParams, DEFAULT_RADIUS};
use crossattn_core::sufa::AttentionMode;
use crossattn_core::workload::RowProfile;
use crossattn_core::AttentionConfig;

/// Why a configuration could not be used.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Parses `path`, or falls back to `default` when no file is given.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, default: impl FnOnce() -> T) -> Result<T, ConfigError> {
    let Some(path) = path else {
        return Ok(default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        ConfigError(format!("config error at `{at}`: {}", e.into_inner()))
    })
}

fn default_queries() -> usize {
    64
}

fn default_block() -> usize {
    16
}

fn default_heads() -> usize {
    1
}

fn default_bits() -> u32 {
    8
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

fn default_gain() -> f64 {
    1.0
}

fn default_mode() -> AttentionMode {
    AttentionMode::SufaDesc
}

/// Attention, selection and predictor parameters shared by several commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct WorkloadConfig {
    pub S: usize,
    pub d_h: usize,
    #[serde(default = "default_heads")]
    pub N_h: usize,
    #[serde(default = "default_queries")]
    pub T: usize,
    #[serde(default = "default_block")]
    pub B_r: usize,
    #[serde(default = "default_block")]
    pub B_c: usize,
    pub k: f64,
    pub n: usize,
    #[serde(default = "default_radius", with = "radius_serde")]
    pub r: f64,
    #[serde(default = "default_bits")]
    pub W: u32,
    #[serde(default = "default_mode")]
    pub mode: AttentionMode,
    #[serde(default)]
    pub profile: RowProfile,
    #[serde(default = "default_gain")]
    pub query_gain: f64,
    #[serde(default)]
    pub weights: CostWeights,
}

impl WorkloadConfig {
    pub fn demo() -> Self {
        WorkloadConfig {
            S: 1024,
            d_h: 64,
            N_h: 1,
            T: 64,
            B_r: 16,
            B_c: 16,
            k: 0.2,
            n: 4,
            r: DEFAULT_RADIUS,
            W: 8,
            mode: AttentionMode::SufaDesc,
            profile: RowProfile::default(),
            query_gain: 1.0,
            weights: CostWeights::default(),
        }
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            seq_len: self.S,
            head_dim: self.d_h,
            heads: self.N_h,
            queries: self.T,
            block_rows: self.B_r,
            block_cols: self.B_c,
        }
    }

    pub fn sads(&self) -> SadsParams {
        SadsParams::new(self.n, self.k, self.r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct OverheadSweep {
    pub S_list: Vec<usize>,
    pub B_c: usize,
    pub d_h: usize,
    pub N_h: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct SadsSweepConfig {
    pub S: usize,
    pub k: f64,
    pub n_list: Vec<usize>,
    #[serde(default = "default_radius", with = "radius_serde")]
    pub r: f64,
    /// Standard deviation of the Gaussian score rows.
    pub std: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct OrderCase {
    pub S: usize,
    pub d_h: usize,
    pub B_c: usize,
    pub k: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct DseSweep {
    pub S: usize,
    pub d_h: usize,
    pub T: usize,
    pub k: f64,
    #[serde(default = "default_radius", with = "radius_serde")]
    pub r: f64,
    pub n_list: Vec<usize>,
    pub B_c_list: Vec<usize>,
    pub dse_alpha: f64,
    pub dse_beta: f64,
}

impl DseSweep {
    pub fn candidates(&self) -> Vec<DseCandidate> {
        self.n_list
            .iter()
            .flat_map(|&segments| {
                self.B_c_list.iter().map(move |&block_cols| DseCandidate {
                    segments,
                    block_cols,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesConfig {
    pub overhead: OverheadSweep,
    pub sads: SadsSweepConfig,
    pub order: Vec<OrderCase>,
    pub dse: DseSweep,
    #[serde(default)]
    pub weights: CostWeights,
}

impl CurvesConfig {
    pub fn demo() -> Self {
        CurvesConfig {
            overhead: OverheadSweep {
                S_list: vec![64, 128, 256, 512, 1024, 2048],
                B_c: 16,
                d_h: 128,
                N_h: 32,
            },
            sads: SadsSweepConfig {
                S: 1024,
                k: 0.25,
                n_list: vec![1, 2, 4, 8, 16],
                r: DEFAULT_RADIUS,
                std: 2.0,
                rows: 16,
            },
            order: vec![
                OrderCase {
                    S: 1024,
                    d_h: 64,
                    B_c: 16,
                    k: 0.25,
                    rows: 16,
                },
                OrderCase {
                    S: 8192,
                    d_h: 128,
                    B_c: 16,
                    k: 0.25,
                    rows: 128,
                },
            ],
            dse: DseSweep {
                S: 1024,
                d_h: 64,
                T: 16,
                k: 0.25,
                r: DEFAULT_RADIUS,
                n_list: vec![1, 2, 4, 8, 16],
                B_c_list: vec![16],
                dse_alpha: 0.58,
                dse_beta: 0.63,
            },
            weights: CostWeights::default(),
        }
    }
}

fn default_pad() -> bool {
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct MeshCmdConfig {
    #[serde(default)]
    pub mesh: MeshConfig,
    pub N_list: Vec<usize>,
    pub workload: WorkloadConfig,
    #[serde(default = "default_pad")]
    pub pad: bool,
}

impl MeshCmdConfig {
    pub fn demo() -> Self {
        MeshCmdConfig {
            mesh: MeshConfig::default(),
            N_list: vec![1, 3, 5, 7],
            workload: WorkloadConfig {
                S: 400,
                d_h: 32,
                T: 400,
                k: 0.25,
                n: 4,
                ..WorkloadConfig::demo()
            },
            pad: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct EncodeConfig {
    /// Matrix file (JSON envelope or headerless CSV); synthetic when absent.
    #[serde(default)]
    pub input: Option<String>,
    /// Synthetic shape, used when `input` is absent.
    #[serde(default)]
    pub H: Option<usize>,
    #[serde(default)]
    pub d_h: Option<usize>,
    #[serde(default = "default_bits")]
    pub W: u32,
}

impl EncodeConfig {
    pub fn demo() -> Self {
        EncodeConfig {
            input: None,
            H: Some(64),
            d_h: Some(64),
            W: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct MrcaConfig {
    pub N_list: Vec<usize>,
}

impl MrcaConfig {
    pub fn demo() -> Self {
        MrcaConfig {
            N_list: vec![1, 3, 5, 7, 9, 11],
        }
    }
}
