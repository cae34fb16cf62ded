//! Multiply-accumulate instrumentation attached to every operator run.

/// Counts of work done and work avoided by one operator invocation.
///
/// `macs` is the number of multiply-accumulate terms the operator's inner
/// loops iterate over (range-check rejections included: the loop trip is
/// the cost model). `zeros_skipped` is the number of terms the
/// corresponding brute-force oracle would have executed on structurally
/// known zeros but this operator never visits, so
/// `macs + zeros_skipped == oracle macs` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpStats {
    pub macs: u64,
    pub zeros_skipped: u64,
}

impl OpStats {
    pub fn new(macs: u64, zeros_skipped: u64) -> Self {
        OpStats {
            macs,
            zeros_skipped,
        }
    }

    /// Work of the equivalent brute-force oracle.
    pub fn oracle_macs(&self) -> u64 {
        self.macs + self.zeros_skipped
    }

    /// Floating point operations, counting 2 per multiply-accumulate.
    pub fn flops(&self) -> u64 {
        2 * self.macs
    }
}
