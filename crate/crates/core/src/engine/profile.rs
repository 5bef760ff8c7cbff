use std::fmt::Write as _;

use super::{EngineError, TechniqueId};

/// Which techniques to apply, in order, and the ranges they draw from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObfuscationProfile {
    pub techniques: Vec<TechniqueId>,
    pub pad_min: u32,
    pub pad_max: u32,
    pub delay_min_us: u64,
    pub delay_max_us: u64,
    pub rng_seed: u64,
    /// Running maximum payload length seen by constant-size padding.
    pub constant_size_state: usize,
}

impl Default for ObfuscationProfile {
    fn default() -> Self {
        ObfuscationProfile {
            techniques: vec![TechniqueId::Padding],
            pad_min: 1,
            pad_max: 256,
            delay_min_us: 10_000,
            delay_max_us: 100_000,
            rng_seed: 0,
            constant_size_state: 0,
        }
    }
}

impl ObfuscationProfile {
    pub fn new(techniques: Vec<TechniqueId>) -> Self {
        ObfuscationProfile {
            techniques,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_padding(mut self, min: u32, max: u32) -> Self {
        self.pad_min = min;
        self.pad_max = max;
        self
    }

    pub fn with_delay_us(mut self, min: u64, max: u64) -> Self {
        self.delay_min_us = min;
        self.delay_max_us = max;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let err = |m: String| Err(EngineError::Profile(m));
        if self.techniques.is_empty() {
            return err("technique chain is empty".into());
        }
        if self.techniques.iter().filter(|&&t| t == TechniqueId::Delay).count() > 1 {
            return err("delay may appear at most once".into());
        }
        if !(1 <= self.pad_min && self.pad_min <= self.pad_max && self.pad_max <= 65_535) {
            return err(format!(
                "padding range {}..{} must satisfy 1 <= min <= max <= 65535",
                self.pad_min, self.pad_max
            ));
        }
        if self.delay_min_us > self.delay_max_us {
            return err(format!(
                "delay range {}..{} us is inverted",
                self.delay_min_us, self.delay_max_us
            ));
        }
        Ok(())
    }

    /// True when at least one technique splices recovery headers.
    pub fn carries_headers(&self) -> bool {
        self.techniques.iter().any(|t| t.header_count() > 0)
    }

    pub fn has_delay(&self) -> bool {
        self.techniques.contains(&TechniqueId::Delay)
    }

    /// Payload-changing techniques in application order (delay excluded).
    pub fn payload_techniques(&self) -> impl Iterator<Item = TechniqueId> + '_ {
        self.techniques.iter().copied().filter(|&t| t != TechniqueId::Delay)
    }

    /// Display name such as `padding+delay`.
    pub fn chain_name(&self) -> String {
        self.techniques
            .iter()
            .map(|t| t.name())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// The parameter set an adapting adversary is tested against after
    /// retraining on this profile: padding ranges halve to 1..128, constant
    /// padding and fragmentation gain a 0.01-0.1 s delay, and delay widens to
    /// 0.01-0.2 s.
    pub fn retrain_variant(&self) -> ObfuscationProfile {
        let mut b = self.clone();
        b.constant_size_state = 0;
        b.rng_seed = self.rng_seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let pads = self.techniques.iter().any(|t| {
            matches!(t, TechniqueId::Padding | TechniqueId::PadXor | TechniqueId::PadShift)
        });
        if pads {
            b.pad_min = 1;
            b.pad_max = 128;
        }
        let needs_delay = self
            .techniques
            .iter()
            .any(|t| matches!(t, TechniqueId::ConstPad | TechniqueId::Fragment));
        if self.has_delay() {
            b.delay_min_us = 10_000;
            b.delay_max_us = 200_000;
        } else if needs_delay {
            b.techniques.push(TechniqueId::Delay);
            b.delay_min_us = 10_000;
            b.delay_max_us = 100_000;
        }
        b
    }

    /// Parses `key = value` lines. Recognized keys: `technique_chain`,
    /// `pad_min`, `pad_max`, `delay_min_us`, `delay_max_us`, `seed`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, EngineError> {
        let mut p = ObfuscationProfile::default();
        let mut chain_seen = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                EngineError::Profile(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let num = |v: &str| {
                v.replace('_', "").parse::<u64>().map_err(|_| {
                    EngineError::Profile(format!("line {}: '{v}' is not a number", lineno + 1))
                })
            };
            match key {
                "technique_chain" => {
                    p.techniques = parse_chain(value)?;
                    chain_seen = true;
                }
                "pad_min" => p.pad_min = num(value)?.min(u64::from(u32::MAX)) as u32,
                "pad_max" => p.pad_max = num(value)?.min(u64::from(u32::MAX)) as u32,
                "delay_min_us" => p.delay_min_us = num(value)?,
                "delay_max_us" => p.delay_max_us = num(value)?,
                "seed" => p.rng_seed = num(value)?,
                other => {
                    return Err(EngineError::Profile(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        if !chain_seen {
            return Err(EngineError::Profile("missing technique_chain".into()));
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "technique_chain = {}", self.techniques.iter().map(|t| t.name()).collect::<Vec<_>>().join(", "));
        let _ = writeln!(s, "pad_min = {}", self.pad_min);
        let _ = writeln!(s, "pad_max = {}", self.pad_max);
        let _ = writeln!(s, "delay_min_us = {}", self.delay_min_us);
        let _ = writeln!(s, "delay_max_us = {}", self.delay_max_us);
        let _ = writeln!(s, "seed = {}", self.rng_seed);
        s
    }
}

/// Parses a comma- or `+`-separated technique list.
pub fn parse_chain(value: &str) -> Result<Vec<TechniqueId>, EngineError> {
    value
        .split([',', '+'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let p = ObfuscationProfile::new(vec![TechniqueId::PadXor, TechniqueId::Delay])
            .with_padding(2, 99)
            .with_delay_us(5, 6)
            .with_seed(1234);
        assert_eq!(ObfuscationProfile::parse(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn parse_accepts_comments_and_aliases() {
        let p = ObfuscationProfile::parse(
            "# session\n technique_chain = Fragmentation + delay  # two parts\nseed=7\n",
        )
        .unwrap();
        assert_eq!(p.techniques, vec![TechniqueId::Fragment, TechniqueId::Delay]);
        assert_eq!(p.rng_seed, 7);
        assert_eq!((p.pad_min, p.pad_max), (1, 256));
    }

    #[test]
    fn parse_errors() {
        for bad in [
            "technique_chain = padding, teleport",
            "technique_chain = padding\npad_min = 0",
            "technique_chain = padding\npad_min = 9\npad_max = 3",
            "technique_chain = delay, delay",
            "pad_min = 3",
            "technique_chain = padding\ncolour = blue",
            "technique_chain = padding\nseed = -1",
            "technique_chain",
        ] {
            assert!(
                matches!(ObfuscationProfile::parse(bad), Err(EngineError::Profile(_))),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn retrain_variant_ranges() {
        let pad = ObfuscationProfile::new(vec![TechniqueId::PadShift]).retrain_variant();
        assert_eq!((pad.pad_min, pad.pad_max), (1, 128));
        let cp = ObfuscationProfile::new(vec![TechniqueId::ConstPad]).retrain_variant();
        assert_eq!(cp.techniques, vec![TechniqueId::ConstPad, TechniqueId::Delay]);
        assert_eq!((cp.delay_min_us, cp.delay_max_us), (10_000, 100_000));
        let d = ObfuscationProfile::new(vec![TechniqueId::Delay]).retrain_variant();
        assert_eq!((d.delay_min_us, d.delay_max_us), (10_000, 200_000));
        assert_ne!(d.rng_seed, 0);
    }
}
