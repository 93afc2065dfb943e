//! The framework variants: DC solver x training strategy x weight sharing.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DcMode {
    /// Exact data consistency (closed form or conjugate gradients).
    Cg,
    /// A single steepest-descent step (proximal-gradient style).
    Sd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrainingMode {
    EndToEnd,
    PretrainedDenoiser,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sharing {
    WithSharing,
    NoSharing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VariantSpec {
    pub dc_mode: DcMode,
    pub training: TrainingMode,
    pub sharing: Sharing,
}

impl VariantSpec {
    /// CG-ET-WS, the proposed configuration.
    pub const MODL: VariantSpec = VariantSpec {
        dc_mode: DcMode::Cg,
        training: TrainingMode::EndToEnd,
        sharing: Sharing::WithSharing,
    };
    pub const SD_ET_WS: VariantSpec = VariantSpec {
        dc_mode: DcMode::Sd,
        training: TrainingMode::EndToEnd,
        sharing: Sharing::WithSharing,
    };
    pub const CG_ET_NS: VariantSpec = VariantSpec {
        dc_mode: DcMode::Cg,
        training: TrainingMode::EndToEnd,
        sharing: Sharing::NoSharing,
    };
    pub const CG_PD_NS: VariantSpec = VariantSpec {
        dc_mode: DcMode::Cg,
        training: TrainingMode::PretrainedDenoiser,
        sharing: Sharing::NoSharing,
    };

    pub fn new(dc_mode: DcMode, training: TrainingMode, sharing: Sharing) -> Result<Self> {
        if training == TrainingMode::PretrainedDenoiser && sharing == Sharing::WithSharing {
            return Err(Error::Parameter(
                "pre-trained denoisers are distinct per iteration; use no sharing".into(),
            ));
        }
        Ok(Self {
            dc_mode,
            training,
            sharing,
        })
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dc = match self.dc_mode {
            DcMode::Cg => "CG",
            DcMode::Sd => "SD",
        };
        let tr = match self.training {
            TrainingMode::EndToEnd => "ET",
            TrainingMode::PretrainedDenoiser => "PD",
        };
        let sh = match self.sharing {
            Sharing::WithSharing => "WS",
            Sharing::NoSharing => "NS",
        };
        write!(f, "{dc}-{tr}-{sh}")
    }
}

impl FromStr for VariantSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<String> = s.split('-').map(|p| p.trim().to_ascii_lowercase()).collect();
        let [dc, tr, sh] = &parts[..] else {
            return Err(Error::Parameter(format!("variant must look like CG-ET-WS, got {s:?}")));
        };
        VariantSpec::new(dc.parse()?, tr.parse()?, sh.parse()?)
    }
}

impl FromStr for DcMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cg" => Ok(DcMode::Cg),
            "sd" => Ok(DcMode::Sd),
            _ => Err(Error::Parameter(format!("dc_mode must be cg or sd, got {s:?}"))),
        }
    }
}

impl FromStr for TrainingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "et" => Ok(TrainingMode::EndToEnd),
            "pd" => Ok(TrainingMode::PretrainedDenoiser),
            _ => Err(Error::Parameter(format!("training must be et or pd, got {s:?}"))),
        }
    }
}

impl FromStr for Sharing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ws" => Ok(Sharing::WithSharing),
            "ns" => Ok(Sharing::NoSharing),
            _ => Err(Error::Parameter(format!("sharing must be ws or ns, got {s:?}"))),
        }
    }
}

impl DcMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DcMode::Cg => "cg",
            DcMode::Sd => "sd",
        }
    }
}

impl TrainingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainingMode::EndToEnd => "et",
            TrainingMode::PretrainedDenoiser => "pd",
        }
    }
}

impl Sharing {
    pub fn as_str(self) -> &'static str {
        match self {
            Sharing::WithSharing => "ws",
            Sharing::NoSharing => "ns",
        }
    }
}
