//! JSON documents for systems, networks, delay profiles, gains and stability
//! reports. Matrices are stored row-major; sensor indices are 0-based.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::{GainMatrix, StabilityReport, TauStar};
use crate::linalg::{matrix_from_row_major, row_major, Matrix};
use crate::model::{DelayProfile, LtiSystem, SensorNetwork};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub n: usize,
    pub a: Vec<f64>,
    pub c_rows: Vec<Vec<f64>>,
    pub q_var: f64,
    pub r_var: f64,
}

impl SystemDoc {
    pub fn from_system(sys: &LtiSystem) -> Self {
        SystemDoc {
            n: sys.n(),
            a: row_major(sys.a()),
            c_rows: (0..sys.n_sensors()).map(|i| sys.c().row(i).iter().copied().collect()).collect(),
            q_var: sys.q_var(),
            r_var: sys.r_var(),
        }
    }

    pub fn to_system(&self) -> Result<LtiSystem> {
        let a = matrix_from_row_major(self.n, self.n, &self.a)?;
        let flat: Vec<f64> = self.c_rows.iter().flatten().copied().collect();
        if self.c_rows.iter().any(|r| r.len() != self.n) {
            return Err(Error::Dimension(format!("every output row must have {} entries", self.n)));
        }
        let c = matrix_from_row_major(self.c_rows.len(), self.n, &flat)?;
        LtiSystem::new(a, c, self.q_var, self.r_var)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub n_sensors: usize,
    /// `[from, to]` pairs, self-loops included.
    pub edges: Vec<[usize; 2]>,
    pub p: Vec<f64>,
}

impl NetworkDoc {
    pub fn from_network(net: &SensorNetwork) -> Self {
        NetworkDoc {
            n_sensors: net.n_sensors(),
            edges: net.edges().iter().map(|&(j, i)| [j, i]).collect(),
            p: row_major(net.p()),
        }
    }

    pub fn to_network(&self) -> Result<SensorNetwork> {
        let p = matrix_from_row_major(self.n_sensors, self.n_sensors, &self.p)?;
        let edges: BTreeSet<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        SensorNetwork::new(edges, p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDelay {
    pub from: usize,
    pub to: usize,
    pub delay: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub tau_bar: usize,
    pub tau: Vec<LinkDelay>,
}

impl DelayDoc {
    pub fn from_profile(profile: &DelayProfile, label: Option<String>) -> Self {
        DelayDoc {
            label,
            tau_bar: profile.tau_bar(),
            tau: profile
                .entries()
                .iter()
                .filter(|(&(i, j), _)| i != j)
                .map(|(&(i, j), &d)| LinkDelay { from: j, to: i, delay: d })
                .collect(),
        }
    }

    pub fn to_profile(&self) -> Result<DelayProfile> {
        let tau: BTreeMap<(usize, usize), usize> = self.tau.iter().map(|l| ((l.to, l.from), l.delay)).collect();
        DelayProfile::new(tau, self.tau_bar)
    }
}

/// A generated problem instance: plant, network and the delay profiles to run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub system: SystemDoc,
    pub network: NetworkDoc,
    #[serde(default)]
    pub delays: Vec<DelayDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainDoc {
    pub n: usize,
    /// One row-major `n x n` block per sensor.
    pub blocks: Vec<Vec<f64>>,
}

impl GainDoc {
    pub fn from_gain(k: &GainMatrix) -> Self {
        GainDoc {
            n: k.block_dim(),
            blocks: k.blocks().iter().map(row_major).collect(),
        }
    }

    pub fn to_gain(&self) -> Result<GainMatrix> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| matrix_from_row_major(self.n, self.n, b))
            .collect::<Result<Vec<Matrix>>>()?;
        GainMatrix::new(blocks)
    }
}

/// `tau_star` is a number, or a string `">=T"` when the scan hit its cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDoc {
    pub rho_closed_loop: f64,
    pub tau_star: serde_json::Value,
    pub rho_aug_bound_by_tau: BTreeMap<usize, f64>,
    pub rate_by_tau: BTreeMap<usize, f64>,
}

impl ReportDoc {
    pub fn from_report(r: &StabilityReport) -> Self {
        let tau_star = match r.tau_star {
            TauStar::Finite(t) => serde_json::Value::from(t),
            TauStar::AtLeast(_) => serde_json::Value::from(r.tau_star.to_string()),
        };
        ReportDoc {
            rho_closed_loop: r.rho_closed_loop,
            tau_star,
            rho_aug_bound_by_tau: r.rho_aug_bound_by_tau.clone(),
            rate_by_tau: r.rate_by_tau.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignDoc {
    pub gain: GainDoc,
    pub report: ReportDoc,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}
