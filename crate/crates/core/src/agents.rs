//! The fixed 32-agent population: a full factorial over four binary
//! behavioral traits and the initial trading style.
//!
//! Agent ids encode the factorial cell in little-endian bit order:
//! bit 0 = loss aversion, bit 1 = herding, bit 2 = wealth differentiation,
//! bit 3 = mispricing sensitivity, bit 4 = initial style (0 = Technical,
//! 1 = Fundamental). Id 0 is the all-weak technical agent, id 31 the
//! all-strong fundamental agent.

use serde::{Deserialize, Serialize};

/// Trading style. `Tech` trades on price/indicator signals, `Fund` on
/// balance-sheet quality and the mispricing gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Style {
    Tech,
    Fund,
}

impl Style {
    pub fn opposite(self) -> Style {
        match self {
            Style::Tech => Style::Fund,
            Style::Fund => Style::Tech,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Style::Tech => "Technical",
            Style::Fund => "Fundamental",
        }
    }
}

/// The four binary behavioral predispositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraitVector {
    pub loss_aversion: bool,
    pub herding: bool,
    pub wealth_diff: bool,
    pub mispricing: bool,
}

impl TraitVector {
    pub fn bit(&self, driver: Driver) -> bool {
        match driver {
            Driver::LossAversion => self.loss_aversion,
            Driver::Herding => self.herding,
            Driver::WealthDiff => self.wealth_diff,
            Driver::Mispricing => self.mispricing,
        }
    }
}

/// Behavioral drivers under test. Each pairs with one alignment metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Driver {
    LossAversion,
    Herding,
    WealthDiff,
    Mispricing,
}

impl Driver {
    pub const ALL: [Driver; 4] = [
        Driver::LossAversion,
        Driver::Herding,
        Driver::WealthDiff,
        Driver::Mispricing,
    ];

    /// Stable key used in reports and JSON output.
    pub fn key(self) -> &'static str {
        match self {
            Driver::LossAversion => "loss_aversion",
            Driver::Herding => "herding",
            Driver::WealthDiff => "wealth_diff",
            Driver::Mispricing => "mispricing",
        }
    }

    /// Human-readable name, matching the report table rows.
    pub fn label(self) -> &'static str {
        match self {
            Driver::LossAversion => "Loss Aversion",
            Driver::Herding => "Herding",
            Driver::WealthDiff => "Wealth Differentiation",
            Driver::Mispricing => "Price Misalignment",
        }
    }

    /// Name of the metric column this driver is scored against.
    pub fn metric_key(self) -> &'static str {
        match self {
            Driver::LossAversion => "las",
            Driver::Herding => "has",
            Driver::WealthDiff => "aas",
            Driver::Mispricing => "mas",
        }
    }
}

/// One agent of the factorial population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: u8,
    pub traits: TraitVector,
    pub initial_style: Style,
    /// Concatenated persona prompt (one block per trait, strong or weak).
    pub persona_text: String,
}

const PERSONA_LOSS_STRONG: &str = include_str!("resources/persona_loss_aversion_strong.txt");
const PERSONA_LOSS_WEAK: &str = include_str!("resources/persona_loss_aversion_weak.txt");
const PERSONA_HERD_STRONG: &str = include_str!("resources/persona_herding_strong.txt");
const PERSONA_HERD_WEAK: &str = include_str!("resources/persona_herding_weak.txt");
const PERSONA_WEALTH_STRONG: &str = include_str!("resources/persona_wealth_diff_strong.txt");
const PERSONA_WEALTH_WEAK: &str = include_str!("resources/persona_wealth_diff_weak.txt");
const PERSONA_MISPRICE_STRONG: &str = include_str!("resources/persona_mispricing_strong.txt");
const PERSONA_MISPRICE_WEAK: &str = include_str!("resources/persona_mispricing_weak.txt");

/// Persona block for one trait in strong or weak form.
pub fn persona_block(driver: Driver, strong: bool) -> &'static str {
    match (driver, strong) {
        (Driver::LossAversion, true) => PERSONA_LOSS_STRONG,
        (Driver::LossAversion, false) => PERSONA_LOSS_WEAK,
        (Driver::Herding, true) => PERSONA_HERD_STRONG,
        (Driver::Herding, false) => PERSONA_HERD_WEAK,
        (Driver::WealthDiff, true) => PERSONA_WEALTH_STRONG,
        (Driver::WealthDiff, false) => PERSONA_WEALTH_WEAK,
        (Driver::Mispricing, true) => PERSONA_MISPRICE_STRONG,
        (Driver::Mispricing, false) => PERSONA_MISPRICE_WEAK,
    }
}

/// Decode the trait vector from an agent id (bits 0..3).
pub fn traits_of_id(id: u8) -> TraitVector {
    TraitVector {
        loss_aversion: id & 1 != 0,
        herding: id & 2 != 0,
        wealth_diff: id & 4 != 0,
        mispricing: id & 8 != 0,
    }
}

/// Decode the initial style from an agent id (bit 4).
pub fn style_of_id(id: u8) -> Style {
    if id & 16 != 0 {
        Style::Fund
    } else {
        Style::Tech
    }
}

/// Build the full population of 32 agents, ordered by id.
pub fn build_population() -> Vec<AgentSpec> {
    (0u8..32)
        .map(|id| {
            let traits = traits_of_id(id);
            let persona_text = [
                persona_block(Driver::LossAversion, traits.loss_aversion),
                persona_block(Driver::Herding, traits.herding),
                persona_block(Driver::WealthDiff, traits.wealth_diff),
                persona_block(Driver::Mispricing, traits.mispricing),
            ]
            .join("\n");
            AgentSpec {
                id,
                traits,
                initial_style: style_of_id(id),
                persona_text,
            }
        })
        .collect()
}

/// Split agent ids into (trait = strong, trait = weak) cohorts for a driver.
pub fn cohorts(driver: Driver) -> (Vec<u8>, Vec<u8>) {
    let mut strong = Vec::new();
    let mut weak = Vec::new();
    for id in 0u8..32 {
        if traits_of_id(id).bit(driver) {
            strong.push(id);
        } else {
            weak.push(id);
        }
    }
    (strong, weak)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_is_full_factorial() {
        let pop = build_population();
        assert_eq!(pop.len(), 32);
        // Every (traits, style) cell appears exactly once.
        let mut seen = std::collections::BTreeSet::new();
        for a in &pop {
            seen.insert((
                a.traits.loss_aversion,
                a.traits.herding,
                a.traits.wealth_diff,
                a.traits.mispricing,
                a.initial_style,
            ));
        }
        assert_eq!(seen.len(), 32);
    }

    #[test]
    fn id_bit_layout() {
        let pop = build_population();
        let a0 = &pop[0];
        assert_eq!(
            a0.traits,
            TraitVector {
                loss_aversion: false,
                herding: false,
                wealth_diff: false,
                mispricing: false
            }
        );
        assert_eq!(a0.initial_style, Style::Tech);

        let a31 = &pop[31];
        assert_eq!(
            a31.traits,
            TraitVector {
                loss_aversion: true,
                herding: true,
                wealth_diff: true,
                mispricing: true
            }
        );
        assert_eq!(a31.initial_style, Style::Fund);

        // Bit 0 is loss aversion, bit 4 is style.
        assert!(pop[1].traits.loss_aversion);
        assert_eq!(pop[1].initial_style, Style::Tech);
        assert_eq!(pop[16].initial_style, Style::Fund);
        assert!(!pop[16].traits.loss_aversion);
    }

    #[test]
    fn styles_split_evenly() {
        let pop = build_population();
        let tech = pop.iter().filter(|a| a.initial_style == Style::Tech).count();
        assert_eq!(tech, 16);
    }

    #[test]
    fn persona_concatenation_follows_bits() {
        let pop = build_population();
        // Agent 5 = 0b00101: loss aversion strong, herding weak, wealth strong,
        // mispricing weak, technical.
        let a = &pop[5];
        assert!(a.traits.loss_aversion && !a.traits.herding && a.traits.wealth_diff);
        assert!(a.persona_text.contains("Loss Aversion (Strong / Consistent)"));
        assert!(a.persona_text.contains("Herding (Weak / Inconsistent)"));
        assert!(a
            .persona_text
            .contains("Wealth Differentiation Sensitivity (Strong / Consistent)"));
        assert!(a
            .persona_text
            .contains("Price Misalignment Sensitivity (Weak / Inconsistent)"));
        // Blocks appear in fixed trait order.
        let i_loss = a.persona_text.find("Loss Aversion").unwrap();
        let i_herd = a.persona_text.find("Herding").unwrap();
        let i_wealth = a.persona_text.find("Wealth Differentiation").unwrap();
        let i_mis = a.persona_text.find("Price Misalignment").unwrap();
        assert!(i_loss < i_herd && i_herd < i_wealth && i_wealth < i_mis);
    }

    #[test]
    fn cohorts_are_balanced_16_16() {
        for d in Driver::ALL {
            let (strong, weak) = cohorts(d);
            assert_eq!(strong.len(), 16);
            assert_eq!(weak.len(), 16);
            for id in &strong {
                assert!(traits_of_id(*id).bit(d));
            }
        }
    }
}
