//! The outer online WAIC accumulator: consumes one h-vector per MCMC sample,
//! keeps a logSumExp state (lppd) and a Welford state (p_WAIC) per partition
//! element and checkpoint fraction, and finalizes to WAIC. State size depends
//! on M and the fraction count only, never on the number of samples; a
//! versioned binary checkpoint makes runs resumable bit-for-bit.

use crate::accum::{LogSumExpState, WelfordState};
use crate::error::{Error, Result};
use crate::partition::PartitionSpec;
use crate::predictive::{MarginalH, Mode, PredictiveConfig, CHECKPOINT_FRACTIONS};
use crate::util::fnv64;

/// One MCMC sample's log predictive densities, fraction-major: conditional
/// samples carry M values, marginal samples 4·M (one block per checkpoint
/// fraction).
#[derive(Debug, Clone, PartialEq)]
pub struct HVector {
    fractions: usize,
    m: usize,
    values: Vec<f64>,
}

impl HVector {
    pub fn conditional(h: Vec<f64>) -> Self {
        HVector { fractions: 1, m: h.len(), values: h }
    }

    pub fn marginal(h: &MarginalH) -> Self {
        let m = h.by_fraction[0].len();
        let mut values = Vec::with_capacity(4 * m);
        for frac in &h.by_fraction {
            debug_assert_eq!(frac.len(), m);
            values.extend_from_slice(frac);
        }
        HVector { fractions: 4, m, values }
    }

    /// Rebuild from the flat stream layout.
    pub fn from_flat(fractions: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if fractions == 0 || m == 0 || values.len() != fractions * m {
            return Err(Error::LengthMismatch { expected: fractions * m, got: values.len() });
        }
        Ok(HVector { fractions, m, values })
    }

    pub fn fractions(&self) -> usize {
        self.fractions
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn fraction(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    /// Flat fraction-major values, the order the stream format uses.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
struct FractionAccum {
    lppd: Vec<LogSumExpState>,
    pwaic: Vec<WelfordState>,
    /// Per element: how many -inf h values arrived (they join the lppd
    /// average but make the sample variance undefined).
    neg_inf: Vec<u32>,
}

impl FractionAccum {
    fn new(m: usize) -> Self {
        FractionAccum {
            lppd: vec![LogSumExpState::new(); m],
            pwaic: vec![WelfordState::new(); m],
            neg_inf: vec![0; m],
        }
    }
}

/// Streaming WAIC accumulator for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct WaicState {
    m: usize,
    mode: Mode,
    k: Option<u32>,
    samples: u64,
    partition_digest: u64,
    fractions: Vec<FractionAccum>,
}

impl WaicState {
    /// Zeroed state sized for the partition: one fraction in conditional
    /// mode, four in marginal mode.
    pub fn init(partition: &PartitionSpec, config: &PredictiveConfig) -> WaicState {
        Self::with_dims(partition.len(), partition.digest(), config.mode, Some(config.k))
    }

    /// Init for an externally produced stream whose inner draw count is
    /// unknown.
    pub fn init_for_stream(partition: &PartitionSpec, mode: Mode) -> WaicState {
        Self::with_dims(partition.len(), partition.digest(), mode, None)
    }

    fn with_dims(m: usize, partition_digest: u64, mode: Mode, k: Option<u32>) -> WaicState {
        let nfrac = match mode {
            Mode::Conditional => 1,
            Mode::Marginal => CHECKPOINT_FRACTIONS.len(),
        };
        WaicState {
            m,
            mode,
            k: if mode == Mode::Conditional { Some(1) } else { k },
            samples: 0,
            partition_digest,
            fractions: (0..nfrac).map(|_| FractionAccum::new(m)).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn partition_digest(&self) -> u64 {
        self.partition_digest
    }

    pub fn fraction_count(&self) -> usize {
        self.fractions.len()
    }

    /// Heap footprint in bytes. Constant in the number of samples consumed;
    /// the constant-memory acceptance check asserts exactly this.
    pub fn heap_bytes(&self) -> usize {
        self.fractions
            .iter()
            .map(|f| {
                f.lppd.capacity() * std::mem::size_of::<LogSumExpState>()
                    + f.pwaic.capacity() * std::mem::size_of::<WelfordState>()
                    + f.neg_inf.capacity() * std::mem::size_of::<u32>()
            })
            .sum::<usize>()
            + self.fractions.capacity() * std::mem::size_of::<FractionAccum>()
    }

    /// Consume one sample's h-vector(s). The update is atomic: on any
    /// validation error the state is unchanged.
    pub fn update(&mut self, h: &HVector) -> Result<()> {
        if h.m() != self.m {
            return Err(Error::LengthMismatch { expected: self.m, got: h.m() });
        }
        if h.fractions() != self.fractions.len() {
            return Err(Error::LengthMismatch {
                expected: self.fractions.len(),
                got: h.fractions(),
            });
        }
        for f in 0..h.fractions() {
            for (i, &v) in h.fraction(f).iter().enumerate() {
                if v.is_nan() || v == f64::INFINITY {
                    return Err(Error::NonFiniteH { fraction: f, element: i, value: v });
                }
            }
        }
        for (accum, f) in self.fractions.iter_mut().zip(0..) {
            let values = h.fraction(f);
            for i in 0..self.m {
                let v = values[i];
                accum.lppd[i].update(v)?;
                if v == f64::NEG_INFINITY {
                    accum.neg_inf[i] += 1;
                } else {
                    accum.pwaic[i].update(v)?;
                }
            }
        }
        self.samples += 1;
        Ok(())
    }

    /// Finalize to per-fraction WAIC, lppd, p_WAIC and per-element vectors.
    /// Read-only: the state can keep accumulating afterwards.
    pub fn finalize(&self) -> Result<WaicResult> {
        if self.samples < 2 {
            return Err(Error::InsufficientSamples { have: self.samples, need: 2 });
        }
        let fraction_labels: &[f64] = match self.mode {
            Mode::Conditional => &[1.0],
            Mode::Marginal => &CHECKPOINT_FRACTIONS,
        };
        let mut by_fraction = Vec::with_capacity(self.fractions.len());
        for (accum, &fraction) in self.fractions.iter().zip(fraction_labels) {
            let mut lppd_by_element = Vec::with_capacity(self.m);
            let mut p_waic_by_element = Vec::with_capacity(self.m);
            let mut neg_inf_warnings = 0u64;
            for i in 0..self.m {
                lppd_by_element.push(accum.lppd[i].finalize(self.samples)?);
                if accum.neg_inf[i] > 0 {
                    // Sample variance over values including -inf is unbounded;
                    // the element (and the model) gets an infinite penalty.
                    neg_inf_warnings += accum.neg_inf[i] as u64;
                    p_waic_by_element.push(f64::INFINITY);
                } else {
                    p_waic_by_element.push(accum.pwaic[i].finalize()?);
                }
            }
            let lppd: f64 = lppd_by_element.iter().sum();
            let p_waic: f64 = p_waic_by_element.iter().sum();
            by_fraction.push(FractionResult {
                fraction,
                waic: -2.0 * (lppd - p_waic),
                lppd,
                p_waic,
                lppd_by_element,
                p_waic_by_element,
                neg_inf_warnings,
            });
        }
        Ok(WaicResult {
            m: self.m,
            samples: self.samples,
            mode: self.mode,
            k: self.k,
            by_fraction,
        })
    }

    /// Serialize the full state: versioned, little-endian, digest-protected.
    pub fn save(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.fractions.len() * self.m * 52);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.mode {
            Mode::Conditional => 0,
            Mode::Marginal => 1,
        });
        out.extend_from_slice(&self.k.unwrap_or(0).to_le_bytes());
        out.extend_from_slice(&(self.m as u64).to_le_bytes());
        out.extend_from_slice(&self.samples.to_le_bytes());
        out.extend_from_slice(&self.partition_digest.to_le_bytes());
        out.push(self.fractions.len() as u8);
        for accum in &self.fractions {
            for s in &accum.lppd {
                let (count, max, sum) = s.parts();
                out.extend_from_slice(&count.to_le_bytes());
                out.extend_from_slice(&max.to_le_bytes());
                out.extend_from_slice(&sum.to_le_bytes());
            }
            for w in &accum.pwaic {
                let (count, mean, m2) = w.parts();
                out.extend_from_slice(&count.to_le_bytes());
                out.extend_from_slice(&mean.to_le_bytes());
                out.extend_from_slice(&m2.to_le_bytes());
            }
            for &n in &accum.neg_inf {
                out.extend_from_slice(&n.to_le_bytes());
            }
        }
        let digest = fnv64(&out);
        out.extend_from_slice(&digest.to_le_bytes());
        out
    }

    /// Restore a state produced by [`WaicState::save`], verifying version and
    /// integrity digest. Round trips bit-for-bit.
    pub fn load(bytes: &[u8]) -> Result<WaicState> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic".to_string()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::CorruptCheckpoint(format!(
                "unsupported version {version} (expected {VERSION})"
            )));
        }
        let mode = match r.u8()? {
            0 => Mode::Conditional,
            1 => Mode::Marginal,
            other => {
                return Err(Error::CorruptCheckpoint(format!("unknown mode tag {other}")));
            }
        };
        let k = r.u32()?;
        let m = r.u64()? as usize;
        let samples = r.u64()?;
        let partition_digest = r.u64()?;
        let nfrac = r.u8()? as usize;
        let expected_frac = match mode {
            Mode::Conditional => 1,
            Mode::Marginal => CHECKPOINT_FRACTIONS.len(),
        };
        if nfrac != expected_frac {
            return Err(Error::CorruptCheckpoint(format!(
                "fraction count {nfrac} inconsistent with mode {mode}"
            )));
        }
        let mut fractions = Vec::with_capacity(nfrac);
        for _ in 0..nfrac {
            let mut accum = FractionAccum::new(m);
            for s in accum.lppd.iter_mut() {
                *s = LogSumExpState::from_parts(r.u64()?, r.f64()?, r.f64()?);
            }
            for w in accum.pwaic.iter_mut() {
                *w = WelfordState::from_parts(r.u64()?, r.f64()?, r.f64()?);
            }
            for n in accum.neg_inf.iter_mut() {
                *n = r.u32()?;
            }
            fractions.push(accum);
        }
        let body_len = r.consumed();
        let stored = r.u64()?;
        if r.remaining() != 0 {
            return Err(Error::CorruptCheckpoint("trailing bytes".to_string()));
        }
        if fnv64(&bytes[..body_len]) != stored {
            return Err(Error::CorruptCheckpoint("digest mismatch".to_string()));
        }
        Ok(WaicState {
            m,
            mode,
            k: if k == 0 { None } else { Some(k) },
            samples,
            partition_digest,
            fractions,
        })
    }
}

const MAGIC: &[u8; 8] = b"OWAICCKP";
const VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptCheckpoint("truncated".to_string()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn consumed(&self) -> usize {
        self.pos
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Finalized WAIC with one entry per checkpoint fraction (the last entry is
/// the full-budget value).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WaicResult {
    pub m: usize,
    pub samples: u64,
    pub mode: Mode,
    /// Inner Monte Carlo draw count; `None` for ingested streams that did not
    /// declare one.
    pub k: Option<u32>,
    pub by_fraction: Vec<FractionResult>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FractionResult {
    /// Fraction of the inner Monte Carlo budget this row used.
    pub fraction: f64,
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub lppd_by_element: Vec<f64>,
    pub p_waic_by_element: Vec<f64>,
    /// Count of `-inf` log predictive densities absorbed across elements.
    pub neg_inf_warnings: u64,
}

impl WaicResult {
    /// The full-budget (fraction 1.0) result.
    pub fn primary(&self) -> &FractionResult {
        self.by_fraction.last().expect("at least one fraction")
    }
}

impl std::fmt::Display for WaicResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "WAIC over M={} elements, S={} samples, {} mode{}",
            self.m,
            self.samples,
            self.mode,
            match self.k {
                Some(k) if self.mode == Mode::Marginal => format!(", K={k}"),
                _ => String::new(),
            }
        )?;
        writeln!(f, "{:>9} {:>14} {:>14} {:>12}", "fraction", "WAIC", "lppd", "p_WAIC")?;
        for row in &self.by_fraction {
            writeln!(
                f,
                "{:>9.2} {:>14.4} {:>14.4} {:>12.4}",
                row.fraction, row.waic, row.lppd, row.p_waic
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::build_partition;
    use crate::tol::{rel_close, TOL};

    fn nodes(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("z[{i}]")).collect()
    }

    fn conditional_state(m: usize) -> WaicState {
        let part = build_partition(&nodes(m), None).unwrap();
        WaicState::init(&part, &PredictiveConfig::conditional())
    }

    #[test]
    fn init_sizes_by_mode() {
        let part = build_partition(&nodes(3), None).unwrap();
        let cond = WaicState::init(&part, &PredictiveConfig::conditional());
        assert_eq!(cond.fraction_count(), 1);
        assert_eq!(cond.m(), 3);
        let marg = WaicState::init(&part, &PredictiveConfig::marginal(100).unwrap());
        assert_eq!(marg.fraction_count(), 4);
    }

    #[test]
    fn identical_vectors_give_zero_pwaic() {
        let mut st = conditional_state(3);
        let h = vec![-1.0, -2.5, 0.25];
        for _ in 0..10 {
            st.update(&HVector::conditional(h.clone())).unwrap();
        }
        let res = st.finalize().unwrap();
        let row = res.primary();
        assert_eq!(row.p_waic, 0.0);
        let expect_lppd: f64 = h.iter().sum();
        assert!(rel_close(row.lppd, expect_lppd, TOL.lse_rel));
    }

    #[test]
    fn two_zero_samples_give_zero_waic() {
        let mut st = conditional_state(1);
        st.update(&HVector::conditional(vec![0.0])).unwrap();
        st.update(&HVector::conditional(vec![0.0])).unwrap();
        let res = st.finalize().unwrap();
        assert_eq!(res.primary().waic, 0.0);
        assert_eq!(res.primary().lppd, 0.0);
        assert_eq!(res.primary().p_waic, 0.0);
    }

    #[test]
    fn hand_computed_log1_log3() {
        let mut st = conditional_state(1);
        st.update(&HVector::conditional(vec![1.0f64.ln()])).unwrap();
        st.update(&HVector::conditional(vec![3.0f64.ln()])).unwrap();
        let res = st.finalize().unwrap();
        let row = res.primary();
        let ln3 = 3.0f64.ln();
        assert!(rel_close(row.lppd, 2.0f64.ln(), TOL.lse_rel));
        assert!(rel_close(row.p_waic, ln3 * ln3 / 2.0, TOL.welford_rel));
        assert!(rel_close(row.waic, -2.0 * (2.0f64.ln() - ln3 * ln3 / 2.0), 1e-12));
        // The identity holds exactly as computed, not just approximately.
        assert_eq!(row.waic, -2.0 * (row.lppd - row.p_waic));
    }

    #[test]
    fn length_mismatch_is_rejected_atomically() {
        let mut st = conditional_state(3);
        st.update(&HVector::conditional(vec![0.0, 0.0, 0.0])).unwrap();
        let before = st.clone();
        assert!(st.update(&HVector::conditional(vec![0.0, 0.0])).is_err());
        assert_eq!(st, before);
        assert_eq!(st.samples(), 1);
    }

    #[test]
    fn non_finite_h_is_rejected_with_element_index() {
        let mut st = conditional_state(2);
        let err = st.update(&HVector::conditional(vec![0.0, f64::NAN])).unwrap_err();
        match err {
            Error::NonFiniteH { fraction: 0, element: 1, .. } => {}
            other => panic!("unexpected error: {other}"),
        }
        assert_eq!(st.samples(), 0);
    }

    #[test]
    fn neg_inf_h_gives_finite_lppd_and_infinite_pwaic() {
        let mut st = conditional_state(1);
        st.update(&HVector::conditional(vec![-1.0])).unwrap();
        st.update(&HVector::conditional(vec![f64::NEG_INFINITY])).unwrap();
        st.update(&HVector::conditional(vec![-1.5])).unwrap();
        let res = st.finalize().unwrap();
        let row = res.primary();
        assert!(row.lppd.is_finite());
        assert_eq!(row.p_waic, f64::INFINITY);
        assert_eq!(row.neg_inf_warnings, 1);
    }

    #[test]
    fn finalize_needs_two_samples() {
        let mut st = conditional_state(1);
        st.update(&HVector::conditional(vec![0.0])).unwrap();
        assert!(matches!(
            st.finalize(),
            Err(Error::InsufficientSamples { have: 1, need: 2 })
        ));
    }

    #[test]
    fn checkpoint_round_trip_fresh_and_used() {
        let mut st = conditional_state(4);
        assert_eq!(WaicState::load(&st.save()).unwrap(), st);
        for s in 0..50 {
            let h: Vec<f64> = (0..4).map(|i| -((s * 4 + i) as f64).sin() * 10.0).collect();
            st.update(&HVector::conditional(h)).unwrap();
        }
        let loaded = WaicState::load(&st.save()).unwrap();
        assert_eq!(loaded, st);
        assert_eq!(loaded.finalize().unwrap(), st.finalize().unwrap());
    }

    #[test]
    fn resume_equals_uninterrupted() {
        let series: Vec<Vec<f64>> = (0..200)
            .map(|s| (0..3).map(|i| ((s * 3 + i) as f64 * 0.7).cos() * 5.0 - 3.0).collect())
            .collect();
        let mut full = conditional_state(3);
        for h in &series {
            full.update(&HVector::conditional(h.clone())).unwrap();
        }
        let mut first = conditional_state(3);
        for h in &series[..100] {
            first.update(&HVector::conditional(h.clone())).unwrap();
        }
        let bytes = first.save();
        let mut resumed = WaicState::load(&bytes).unwrap();
        for h in &series[100..] {
            resumed.update(&HVector::conditional(h.clone())).unwrap();
        }
        assert_eq!(resumed, full);
        let a = resumed.finalize().unwrap();
        let b = full.finalize().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let mut st = conditional_state(2);
        st.update(&HVector::conditional(vec![0.0, 1.0])).unwrap();
        let bytes = st.save();
        for cut in [0, 4, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(WaicState::load(&bytes[..cut]), Err(Error::CorruptCheckpoint(_))),
                "cut at {cut} must fail"
            );
        }
    }

    #[test]
    fn corrupted_byte_is_rejected() {
        let mut st = conditional_state(2);
        st.update(&HVector::conditional(vec![0.5, 1.0])).unwrap();
        let mut bytes = st.save();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(WaicState::load(&bytes).is_err());
    }

    #[test]
    fn footprint_is_constant_in_samples() {
        let mut st = conditional_state(7);
        let h: Vec<f64> = (0..7).map(|i| i as f64 * 0.1).collect();
        st.update(&HVector::conditional(h.clone())).unwrap();
        let before = st.heap_bytes();
        for _ in 0..10_000 {
            st.update(&HVector::conditional(h.clone())).unwrap();
        }
        assert_eq!(st.heap_bytes(), before);
    }

    #[test]
    fn marginal_update_checks_fraction_count() {
        let part = build_partition(&nodes(2), None).unwrap();
        let mut st = WaicState::init(&part, &PredictiveConfig::marginal(8).unwrap());
        assert!(st.update(&HVector::conditional(vec![0.0, 0.0])).is_err());
        let flat = HVector::from_flat(4, 2, vec![0.0; 8]).unwrap();
        st.update(&flat).unwrap();
        assert_eq!(st.samples(), 1);
    }
}
