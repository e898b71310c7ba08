//! JSON model configuration. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ImpactCurve, IntensityCurve, MarketModel, MonotoneTable, QuoteDomain, ReadingCurve,
    SizeLadder, TierSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub ladder: Vec<f64>,
    pub sigma_bp_per_sqrt_day: f64,
    #[serde(rename = "gamma_per_bp_M")]
    pub gamma_per_bp_m: f64,
    pub rho_per_day: f64,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quote_domain: Option<QuoteDomainConfig>,
    pub tiers: Vec<TierConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuoteDomainConfig {
    pub min_bp: f64,
    pub max_bp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierConfig {
    pub intensity_bid: Vec<IntensityConfig>,
    pub intensity_ask: Vec<IntensityConfig>,
    pub impact: Vec<ImpactConfig>,
    pub weights: Vec<f64>,
    pub reading: ReadingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum IntensityConfig {
    Exponential { lambda0: f64, kappa: f64 },
    Tabulated { table: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ImpactConfig {
    Zero {},
    Exponential { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReadingConfig {
    Zero {},
    Linear { slope: f64 },
}

impl IntensityConfig {
    fn build(&self) -> Result<IntensityCurve> {
        Ok(match self {
            IntensityConfig::Exponential { lambda0, kappa } => {
                IntensityCurve::exponential(*lambda0, *kappa)
            }
            IntensityConfig::Tabulated { table } => {
                let pts: Vec<(f64, f64)> = table.iter().map(|p| (p[0], p[1])).collect();
                IntensityCurve::Tabulated(MonotoneTable::new(&pts)?)
            }
        })
    }

    fn from_curve(c: &IntensityCurve) -> Self {
        match c {
            IntensityCurve::Exponential { lambda0, kappa } => IntensityConfig::Exponential {
                lambda0: *lambda0,
                kappa: *kappa,
            },
            IntensityCurve::Tabulated(t) => IntensityConfig::Tabulated {
                table: t.points().map(|(d, l)| [d, l]).collect(),
            },
        }
    }
}

impl ModelConfig {
    pub fn into_model(&self) -> Result<MarketModel> {
        let tiers = self
            .tiers
            .iter()
            .map(|t| {
                Ok(TierSpec {
                    intensity_bid: t.intensity_bid.iter().map(IntensityConfig::build).collect::<Result<_>>()?,
                    intensity_ask: t.intensity_ask.iter().map(IntensityConfig::build).collect::<Result<_>>()?,
                    impact: t
                        .impact
                        .iter()
                        .map(|z| match *z {
                            ImpactConfig::Zero {} => ImpactCurve::Zero,
                            ImpactConfig::Exponential { alpha, beta } => {
                                ImpactCurve::Exponential { alpha, beta }
                            }
                        })
                        .collect(),
                    weights: t.weights.clone(),
                    reading: match t.reading {
                        ReadingConfig::Zero {} => ReadingCurve::Zero,
                        ReadingConfig::Linear { slope } => ReadingCurve::Linear { slope },
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MarketModel {
            ladder: SizeLadder::new(self.ladder.clone()),
            tiers,
            sigma: self.sigma_bp_per_sqrt_day,
            gamma: self.gamma_per_bp_m,
            rho: self.rho_per_day,
            epsilon: self.epsilon,
            quote_domain: self
                .quote_domain
                .as_ref()
                .map(|d| QuoteDomain {
                    min: d.min_bp,
                    max: d.max_bp,
                })
                .unwrap_or_default(),
        })
    }

    pub fn from_model(m: &MarketModel) -> Self {
        ModelConfig {
            ladder: m.ladder.sizes().to_vec(),
            sigma_bp_per_sqrt_day: m.sigma,
            gamma_per_bp_m: m.gamma,
            rho_per_day: m.rho,
            epsilon: m.epsilon,
            quote_domain: Some(QuoteDomainConfig {
                min_bp: m.quote_domain.min,
                max_bp: m.quote_domain.max,
            }),
            tiers: m
                .tiers
                .iter()
                .map(|t| TierConfig {
                    intensity_bid: t.intensity_bid.iter().map(IntensityConfig::from_curve).collect(),
                    intensity_ask: t.intensity_ask.iter().map(IntensityConfig::from_curve).collect(),
                    impact: t
                        .impact
                        .iter()
                        .map(|z| match *z {
                            ImpactCurve::Zero => ImpactConfig::Zero {},
                            ImpactCurve::Exponential { alpha, beta } => {
                                ImpactConfig::Exponential { alpha, beta }
                            }
                        })
                        .collect(),
                    weights: t.weights.clone(),
                    reading: match t.reading {
                        ReadingCurve::Zero => ReadingConfig::Zero {},
                        ReadingCurve::Linear { slope } => ReadingConfig::Linear { slope },
                    },
                })
                .collect(),
        }
    }
}

pub fn parse_model(json: &str) -> Result<MarketModel> {
    let cfg: ModelConfig = serde_json::from_str(json)?;
    cfg.into_model()
}

pub fn load_model(path: &Path) -> Result<MarketModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

pub fn model_to_json(m: &MarketModel) -> String {
    serde_json::to_string_pretty(&ModelConfig::from_model(m)).expect("config serializes")
}
