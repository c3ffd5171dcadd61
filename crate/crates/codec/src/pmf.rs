//! Coder-facing quantized CDF tables.
//!
//! A table maps an integer alphabet [s_min, s_max] to 16-bit frequencies:
//! every symbol gets at least one count, the counts total exactly 2^16,
//! and rounding uses the largest-remainder method so table construction is
//! deterministic across encoder and decoder.

use crate::error::{CodecError, Result};

pub const PMF_PRECISION_BITS: u32 = 16;
pub const PMF_TOTAL: u32 = 1 << PMF_PRECISION_BITS;

/// Default coding alphabet for both latents and hyper-latents. Encoders
/// clamp symbols into this range and report the clamp count.
pub const ALPHABET_MIN: i32 = -127;
pub const ALPHABET_MAX: i32 = 128;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PmfTable {
    s_min: i32,
    /// cdf[0] = 0, cdf[span] = 2^16, strictly increasing.
    cdf: Vec<u32>,
}

impl PmfTable {
    /// Quantize a probability vector over [s_min, s_min + probs.len()).
    /// Values may be unnormalized; negatives are treated as zero mass.
    pub fn from_probs(s_min: i32, probs: &[f64]) -> Result<Self> {
        let span = probs.len();
        if span == 0 {
            return Err(CodecError::Config("empty alphabet".into()));
        }
        if span as u64 > PMF_TOTAL as u64 {
            return Err(CodecError::Config(format!(
                "alphabet span {span} exceeds 2^{PMF_PRECISION_BITS}"
            )));
        }
        let clean: Vec<f64> = probs.iter().map(|&p| if p.is_finite() && p > 0.0 { p } else { 0.0 }).collect();
        let total: f64 = clean.iter().sum();

        // Every symbol gets one count up front (decodability), then the
        // remaining budget is split proportionally by largest remainder,
        // which spreads the decodability cost across the alphabet instead
        // of concentrating it on the peak.
        let budget = PMF_TOTAL as u64 - span as u64;
        let mut counts = vec![1u32; span];
        let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(span);
        let mut assigned: u64 = 0;
        for (i, &p) in clean.iter().enumerate() {
            let ideal = if total > 0.0 {
                p / total * budget as f64
            } else {
                budget as f64 / span as f64
            };
            let fl = ideal.floor();
            counts[i] += fl as u32;
            assigned += fl as u64;
            remainders.push((i, ideal - fl));
        }
        let mut leftover = budget.saturating_sub(assigned) as i64;
        // ties break toward lower symbol index
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut ri = 0;
        while leftover > 0 {
            counts[remainders[ri % span].0] += 1;
            leftover -= 1;
            ri += 1;
        }

        let mut cdf = Vec::with_capacity(span + 1);
        let mut acc = 0u32;
        cdf.push(0);
        for &c in &counts {
            acc += c;
            cdf.push(acc);
        }
        debug_assert_eq!(acc, PMF_TOTAL);
        Ok(Self { s_min, cdf })
    }

    #[inline]
    pub fn s_min(&self) -> i32 {
        self.s_min
    }

    #[inline]
    pub fn span(&self) -> usize {
        self.cdf.len() - 1
    }

    #[inline]
    pub fn contains(&self, symbol: i32) -> bool {
        let off = symbol as i64 - self.s_min as i64;
        off >= 0 && (off as usize) < self.span()
    }

    #[inline]
    pub fn index_of(&self, symbol: i32) -> usize {
        (symbol - self.s_min) as usize
    }

    #[inline]
    pub fn symbol_at(&self, index: usize) -> i32 {
        self.s_min + index as i32
    }

    #[inline]
    pub fn cum(&self, index: usize) -> u32 {
        self.cdf[index]
    }

    #[inline]
    pub fn freq(&self, index: usize) -> u32 {
        self.cdf[index + 1] - self.cdf[index]
    }

    /// Index of the symbol whose [cum, cum+freq) interval contains `value`.
    #[inline]
    pub fn index_of_cum(&self, value: u32) -> usize {
        // partition_point of cdf[i] <= value, minus one
        let idx = self.cdf.partition_point(|&c| c <= value);
        (idx - 1).min(self.span() - 1)
    }

    /// Dequantized probability of a symbol index.
    pub fn prob(&self, index: usize) -> f64 {
        self.freq(index) as f64 / PMF_TOTAL as f64
    }

    /// KL divergence in bits/symbol from a reference pmf (same alphabet)
    /// to this table's dequantized pmf.
    pub fn kl_bits_from(&self, reference: &[f64]) -> f64 {
        assert_eq!(reference.len(), self.span());
        let total: f64 = reference.iter().sum();
        let mut kl = 0.0;
        for (i, &p) in reference.iter().enumerate() {
            let p = p / total;
            if p > 0.0 {
                kl += p * (p / self.prob(i)).log2();
            }
        }
        kl
    }
}

/// Cell probabilities of the default alphabet under a Gaussian mixture,
/// with the out-of-alphabet tails folded into the edge symbols.
pub fn gmm_alphabet_probs(weights: &[f64], means: &[f64], scales: &[f64]) -> Vec<f64> {
    let span = (ALPHABET_MAX - ALPHABET_MIN + 1) as usize;
    let mut probs = vec![0.0f64; span];
    for ((&w, &mu), &sg) in weights.iter().zip(means).zip(scales) {
        if w <= 0.0 {
            continue;
        }
        // component CDF at every cell edge
        let mut prev = crate::gmm::normal_cdf((ALPHABET_MIN as f64 - 0.5 - mu) / sg);
        for (i, slot) in probs.iter_mut().enumerate() {
            let edge = ALPHABET_MIN as f64 + i as f64 + 0.5;
            let next = crate::gmm::normal_cdf((edge - mu) / sg);
            *slot += w * (next - prev);
            prev = next;
        }
        // fold tails into the edge cells
        let low_tail = crate::gmm::normal_cdf((ALPHABET_MIN as f64 - 0.5 - mu) / sg);
        let high_tail = 1.0 - crate::gmm::normal_cdf((ALPHABET_MAX as f64 + 0.5 - mu) / sg);
        probs[0] += w * low_tail;
        probs[span - 1] += w * high_tail;
    }
    probs
}
