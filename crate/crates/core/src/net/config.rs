use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MAX_BRANCHES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fusion {
    Sum,
    Concatenate,
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fusion::Sum => "sum",
            Fusion::Concatenate => "concatenate",
        })
    }
}

impl FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Fusion::Sum),
            "concatenate" | "concat" => Ok(Fusion::Concatenate),
            _ => Err(Error::config(format!("unknown fusion mode `{s}`"))),
        }
    }
}

/// Weight initialisation. Biases always start at zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Init {
    /// `N(0, 0.01^2)` for every weight.
    #[default]
    Gaussian,
    /// `N(0, 2 / fan_in)`, with `fan_in = in_channels * k * k`.
    He,
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Init::Gaussian => "gaussian",
            Init::He => "he",
        })
    }
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Init::Gaussian),
            "he" => Ok(Init::He),
            _ => Err(Error::config(format!("unknown init `{s}`"))),
        }
    }
}

/// Architecture description. Widths follow the published layer tables: the
/// "wide" layers use `cascade_channels` (64 by default) and the "detail"
/// layers (scale 1 downsampling, the first scale 2 layer, the later
/// transposed convolutions) use `min(32, wide)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub branches: Vec<usize>,
    pub cascade_depth: usize,
    pub cascade_channels: usize,
    pub fusion: Fusion,
    pub skip_in_branch: bool,
    pub input_channels: usize,
    pub narrow_channels: bool,
    pub init: Init,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            branches: (1..=MAX_BRANCHES).collect(),
            cascade_depth: 5,
            cascade_channels: 64,
            fusion: Fusion::Sum,
            skip_in_branch: false,
            input_channels: 3,
            narrow_channels: false,
            init: Init::Gaussian,
        }
    }
}

impl NetworkConfig {
    pub fn variant(v: Variant) -> Self {
        let base = NetworkConfig::default();
        match v {
            Variant::Default => base,
            Variant::Concate => NetworkConfig { fusion: Fusion::Concatenate, ..base },
            Variant::Skip => NetworkConfig { skip_in_branch: true, ..base },
            Variant::C32 => NetworkConfig { narrow_channels: true, ..base },
            Variant::B123 => NetworkConfig { branches: vec![1, 2, 3], ..base },
            Variant::B135 => NetworkConfig { branches: vec![1, 3, 5], ..base },
            Variant::B15 => NetworkConfig { branches: vec![1, 5], ..base },
        }
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::config(format!("invalid value `{value}` for network setting `{key}`"));
        match key {
            "branches" => {
                self.branches = value
                    .split(',')
                    .map(|b| b.trim().parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?
            }
            "cascade_depth" => self.cascade_depth = value.parse().map_err(|_| bad())?,
            "cascade_channels" => self.cascade_channels = value.parse().map_err(|_| bad())?,
            "fusion" => self.fusion = value.parse()?,
            "skip_in_branch" => self.skip_in_branch = value.parse().map_err(|_| bad())?,
            "input_channels" => self.input_channels = value.parse().map_err(|_| bad())?,
            "narrow_channels" => self.narrow_channels = value.parse().map_err(|_| bad())?,
            "init" => self.init = value.parse()?,
            _ => return Err(Error::config(format!("unknown network setting `{key}`"))),
        }
        Ok(())
    }

    pub fn grayscale(mut self) -> Self {
        self.input_channels = 1;
        self
    }

    pub fn wide_channels(&self) -> usize {
        if self.narrow_channels {
            self.cascade_channels.min(32)
        } else {
            self.cascade_channels
        }
    }

    pub fn detail_channels(&self) -> usize {
        self.wide_channels().min(32)
    }

    pub fn max_branch(&self) -> usize {
        self.branches.iter().copied().max().unwrap_or(1)
    }

    /// Input height and width must be multiples of this.
    pub fn required_divisor(&self) -> usize {
        1 << (self.max_branch() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.branches.contains(&1) {
            return Err(Error::config("branch 1 must be present"));
        }
        if self.branches.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(format!(
                "branches must be strictly increasing, got {:?}",
                self.branches
            )));
        }
        if let Some(&b) = self.branches.iter().find(|&&b| b == 0 || b > MAX_BRANCHES) {
            return Err(Error::config(format!("branch {b} outside 1..={MAX_BRANCHES}")));
        }
        if self.cascade_depth == 0 {
            return Err(Error::config("cascade depth must be at least 1"));
        }
        if self.cascade_channels == 0 {
            return Err(Error::config("cascade channels must be positive"));
        }
        if !matches!(self.input_channels, 1 | 3) {
            return Err(Error::config(format!(
                "input channels must be 1 or 3, got {}",
                self.input_channels
            )));
        }
        Ok(())
    }
}

/// The published architecture variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Default,
    Concate,
    Skip,
    C32,
    B123,
    B135,
    B15,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Default,
        Variant::Concate,
        Variant::Skip,
        Variant::C32,
        Variant::B123,
        Variant::B135,
        Variant::B15,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Default => "default",
            Variant::Concate => "v_concate",
            Variant::Skip => "v_skip",
            Variant::C32 => "v_c32",
            Variant::B123 => "v_b123",
            Variant::B135 => "v_b135",
            Variant::B15 => "v_b15",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown variant `{s}`")))
    }
}
