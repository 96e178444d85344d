/// Enumeration budgets guarding against exponential blowups.
///
/// Every enumerating routine checks its exact item count against the
/// relevant field before allocating anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Matrices or subspaces produced by a single enumeration.
    pub enumeration: u64,
    /// Entries of one per-row-space table `E -> Pr{D H = E}`.
    pub core_table: u64,
    /// Entries `q^{TM} * q^{TN}` of a full transition table.
    pub naive_table: u64,
    /// Deterministic degradations (or rank-to-subspace assignments) tried
    /// by the subspace-coding optimizers.
    pub degradations: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            enumeration: 10_000_000,
            core_table: 1 << 20,
            naive_table: 1 << 24,
            degradations: 100_000,
        }
    }
}

impl Limits {
    /// Scales every budget to the same value; handy for the CLI `--budget` flag.
    pub fn uniform(limit: u64) -> Self {
        Limits {
            enumeration: limit,
            core_table: limit,
            naive_table: limit,
            degradations: limit,
        }
    }
}
