//! Channels used throughout the tests and the guide, embedded from
//! `fixtures/*.json`.

use crate::channel::ChannelSpec;

pub const TABLE1: &str = include_str!("../fixtures/table1.json");
pub const TABLE2: &str = include_str!("../fixtures/table2.json");
pub const EXAMPLE9: &str = include_str!("../fixtures/example9.json");
pub const EXAMPLE6: &str = include_str!("../fixtures/example6.json");
pub const ZERO: &str = include_str!("../fixtures/zero.json");

fn load(text: &str) -> ChannelSpec {
    ChannelSpec::from_json(text).expect("embedded fixture parses")
}

/// `q = 2, T = 1, M = N = 2`: a degraded channel that is not
/// rank-symmetric.
pub fn table1() -> ChannelSpec {
    load(TABLE1)
}

/// `q = 2, T = 1, M = N = 2`: row-space symmetric and not degraded, with
/// `C = C_SS = 1`.
pub fn table2() -> ChannelSpec {
    load(TABLE2)
}

/// `q = 2, T = 1, M = N = 2`: rank-symmetric without being uniform given
/// rank.
pub fn example9() -> ChannelSpec {
    load(EXAMPLE9)
}

/// `q = 2, T = 1, M = N = 2`: `H` is the identity or `diag(1, 0)` with
/// equal probability. The three rank-one inputs see different erasure
/// probabilities, so the subspace degradation is not unique, and `C > C_SS`.
pub fn example6() -> ChannelSpec {
    load(EXAMPLE6)
}

/// `H = 0` with probability one.
pub fn zero() -> ChannelSpec {
    load(ZERO)
}
