//! Seeded synthetic transaction tables shaped like ERC-20 token transfer exports.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{IngestError, TransactionRecord, TransactionTable, SECONDS_PER_DAY};

const TOKENS: [(&str, &str); 6] = [
    ("Moss Carbon Credit", "MCO2"),
    ("Wrapped Ether", "WETH"),
    ("Tether USD", "USDT"),
    ("USD Coin", "USDC"),
    ("Toucan Protocol: Base Carbon Tonne", "BCT"),
    ("Dai Stablecoin", "DAI"),
];

const BASE_BLOCK: u64 = 14_000_000;
const BASE_TIME: i64 = 1_640_995_200; // 2022-01-01T00:00:00Z

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueDistribution {
    LogNormal { mu: f64, sigma: f64 },
    Uniform { min: f64, max: f64 },
}

/// Controls the shape of a synthetic table.
///
/// With `groups > 1` every record belongs to a planted group (`i % groups`), and each
/// group gets its own block era, hour of day, address pool, token and value scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthProfile {
    pub name: String,
    pub senders: usize,
    pub receivers: usize,
    pub tokens: usize,
    pub groups: usize,
    pub value: ValueDistribution,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            name: "default".into(),
            senders: 10,
            receivers: 10,
            tokens: 3,
            groups: 1,
            value: ValueDistribution::LogNormal { mu: 3.0, sigma: 1.5 },
        }
    }
}

impl SynthProfile {
    pub fn three_blobs() -> Self {
        Self {
            name: "3-blobs".into(),
            senders: 4,
            receivers: 4,
            tokens: 3,
            groups: 3,
            value: ValueDistribution::LogNormal { mu: 3.0, sigma: 0.3 },
        }
    }

    pub fn single_token() -> Self {
        Self {
            name: "single-token".into(),
            tokens: 1,
            ..Self::default()
        }
    }
}

impl FromStr for SynthProfile {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(Self::default()),
            "3-blobs" | "three-blobs" => Ok(Self::three_blobs()),
            "single-token" => Ok(Self::single_token()),
            other => Err(IngestError::UnknownProfile(other.to_owned())),
        }
    }
}

/// Planted group of each row for a profile (all zeros when `groups <= 1`).
pub fn planted_groups(n: usize, profile: &SynthProfile) -> Vec<usize> {
    let g = profile.groups.max(1);
    (0..n).map(|i| i % g).collect()
}

fn hex_string(rng: &mut ChaCha8Rng, nibbles: usize) -> String {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(nibbles + 2);
    s.push_str("0x");
    for _ in 0..nibbles {
        s.push(HEX[rng.random_range(0..16)] as char);
    }
    s
}

fn token(i: usize) -> (String, String) {
    match TOKENS.get(i) {
        Some((name, sym)) => (name.to_string(), sym.to_string()),
        None => (format!("Token {i}"), format!("TK{i}")),
    }
}

pub fn synth_transactions(
    seed: u64,
    n: usize,
    profile: &SynthProfile,
) -> Result<TransactionTable, IngestError> {
    if n == 0 {
        return Err(IngestError::ZeroRecords);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = profile.groups.max(1);
    let blobs = groups > 1;
    let pool = |rng: &mut ChaCha8Rng, per_group: usize| -> Vec<String> {
        let total = if blobs { per_group.max(1) * groups } else { per_group.max(1) };
        (0..total).map(|_| hex_string(rng, 40)).collect()
    };
    let senders = pool(&mut rng, profile.senders);
    let receivers = pool(&mut rng, profile.receivers);
    let n_tokens = profile.tokens.max(1);

    let mut records = Vec::with_capacity(n);
    for (i, g) in planted_groups(n, profile).into_iter().enumerate() {
        let pick = |rng: &mut ChaCha8Rng, pool: &[String], per_group: usize| -> String {
            if blobs {
                let per = per_group.max(1);
                // Half of each group's traffic comes from its first address.
                let j = if rng.random_bool(0.5) { 0 } else { rng.random_range(0..per) };
                pool[g * per + j].clone()
            } else {
                pool[rng.random_range(0..pool.len())].clone()
            }
        };
        let from_address = pick(&mut rng, &senders, profile.senders);
        let to_address = pick(&mut rng, &receivers, profile.receivers);
        let tok = if blobs { g % n_tokens } else { rng.random_range(0..n_tokens) };
        let (token_name, token_symbol) = token(tok);

        let block_number = if blobs {
            BASE_BLOCK + g as u64 * 250_000 + rng.random_range(0..2_000)
        } else {
            BASE_BLOCK + rng.random_range(0..500_000)
        };
        let day = rng.random_range(0..365) as i64;
        let second_of_day = if blobs {
            let center = (4 + 8 * g as i64) * 3_600;
            (center + rng.random_range(-3_600..3_600)).rem_euclid(SECONDS_PER_DAY as i64)
        } else {
            rng.random_range(0..SECONDS_PER_DAY as i64)
        };
        let timestamp = BASE_TIME + day * SECONDS_PER_DAY as i64 + second_of_day;

        let scale = if blobs { 20f64.powi(g as i32) } else { 1.0 };
        let token_value = scale
            * match profile.value {
                ValueDistribution::LogNormal { mu, sigma } => LogNormal::new(mu, sigma)
                    .map(|d| d.sample(&mut rng))
                    .unwrap_or(mu.exp()),
                ValueDistribution::Uniform { min, max } => rng.random_range(min..=max),
            };
        let gwei = if blobs { 20.0 + 40.0 * g as f64 } else { 30.0 };
        let gas_price = (gwei * rng.random_range(0.9..1.1) * 1e9).round();

        records.push(TransactionRecord {
            block_number,
            transaction_hash: hex_string(&mut rng, 64),
            timestamp,
            from_address,
            to_address,
            token_name,
            token_symbol,
            token_value,
            gas_price,
        });
        debug_assert_eq!(records.len(), i + 1);
    }
    Ok(TransactionTable { records })
}
