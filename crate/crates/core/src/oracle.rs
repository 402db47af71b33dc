//! Offline reference implementation: stores the full M×S matrix of log
//! predictive densities and computes lppd, p_WAIC and WAIC by batch formulas
//! (shifted logSumExp, two-pass variance). Deliberately independent of the
//! streaming accumulators so the two paths can check each other; memory and
//! speed are non-goals here.

use std::io::BufRead;

use crate::engine::{FractionResult, WaicResult};
use crate::error::{Error, Result};
use crate::predictive::{Mode, CHECKPOINT_FRACTIONS};
use crate::stream::StreamReader;

/// Dense matrix of `h_m(theta^s)` values, sample-major in memory.
#[derive(Debug, Clone)]
pub struct HMatrix {
    m: usize,
    s: usize,
    values: Vec<f64>,
}

impl HMatrix {
    pub fn new(m: usize) -> Self {
        HMatrix { m, s: 0, values: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::LengthMismatch { expected: 1, got: 0 });
        }
        let s = rows[0].len();
        let mut out = HMatrix::new(m);
        for si in 0..s {
            let col: Vec<f64> = rows
                .iter()
                .map(|row| *row.get(si).unwrap_or(&f64::NAN))
                .collect();
            out.push_sample(&col)?;
        }
        Ok(out)
    }

    /// Append one sample's length-M vector.
    pub fn push_sample(&mut self, h: &[f64]) -> Result<()> {
        if h.len() != self.m {
            return Err(Error::LengthMismatch { expected: self.m, got: h.len() });
        }
        for (i, &v) in h.iter().enumerate() {
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::NonFiniteH { fraction: 0, element: i, value: v });
            }
        }
        self.values.extend_from_slice(h);
        self.s += 1;
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn value(&self, element: usize, sample: usize) -> f64 {
        self.values[sample * self.m + element]
    }

    fn row(&self, element: usize) -> Vec<f64> {
        (0..self.s).map(|s| self.value(element, s)).collect()
    }
}

/// Per-row batch results. Rows are reduced in value-sorted order, so the
/// outcome is exactly invariant to the order samples arrived in.
fn row_stats(row: &[f64]) -> (f64, f64) {
    let s = row.len() as f64;
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in HMatrix"));
    let max = *sorted.last().expect("nonempty row");
    let lppd = if max == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        let sum: f64 = sorted.iter().map(|&h| (h - max).exp()).sum();
        max + sum.ln() - s.ln()
    };
    let p_waic = if sorted[0] == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        let mean: f64 = sorted.iter().sum::<f64>() / s;
        sorted.iter().map(|&h| (h - mean) * (h - mean)).sum::<f64>() / (s - 1.0)
    };
    (lppd, p_waic)
}

fn fraction_from_matrix(h: &HMatrix, fraction: f64) -> Result<FractionResult> {
    if h.s() < 2 {
        return Err(Error::InsufficientSamples { have: h.s() as u64, need: 2 });
    }
    let mut lppd_by_element = Vec::with_capacity(h.m());
    let mut p_waic_by_element = Vec::with_capacity(h.m());
    for m in 0..h.m() {
        let (lppd, p_waic) = row_stats(&h.row(m));
        lppd_by_element.push(lppd);
        p_waic_by_element.push(p_waic);
    }
    let lppd: f64 = lppd_by_element.iter().sum();
    let p_waic: f64 = p_waic_by_element.iter().sum();
    Ok(FractionResult {
        fraction,
        waic: -2.0 * (lppd - p_waic),
        lppd,
        p_waic,
        lppd_by_element,
        p_waic_by_element,
        neg_inf_warnings: 0,
    })
}

/// Batch WAIC over a stored h-matrix.
pub fn offline_waic(h: &HMatrix) -> Result<WaicResult> {
    Ok(WaicResult {
        m: h.m(),
        samples: h.s() as u64,
        mode: Mode::Conditional,
        k: None,
        by_fraction: vec![fraction_from_matrix(h, 1.0)?],
    })
}

/// Load a full h-vector stream into memory and compute WAIC by batch
/// formulas; marginal streams produce one result per checkpoint fraction.
pub fn offline_from_stream<R: BufRead>(reader: R) -> Result<WaicResult> {
    let mut stream = StreamReader::new(reader)?;
    let m = stream.m();
    let mode = stream.mode();
    let nfrac = match mode {
        Mode::Conditional => 1,
        Mode::Marginal => 4,
    };
    let mut matrices: Vec<HMatrix> = (0..nfrac).map(|_| HMatrix::new(m)).collect();
    while let Some(sample) = stream.next_sample() {
        let h = sample?;
        for (f, matrix) in matrices.iter_mut().enumerate() {
            matrix.push_sample(h.fraction(f))?;
        }
    }
    let samples = matrices[0].s() as u64;
    let mut by_fraction = Vec::with_capacity(nfrac);
    for (f, matrix) in matrices.iter().enumerate() {
        let label = if mode == Mode::Conditional { 1.0 } else { CHECKPOINT_FRACTIONS[f] };
        by_fraction.push(fraction_from_matrix(matrix, label)?);
    }
    Ok(WaicResult { m, samples, mode, k: None, by_fraction })
}
