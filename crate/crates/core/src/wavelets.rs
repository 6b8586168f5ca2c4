//! Diffusion wavelet banks.
//!
//! A bank is a strictly increasing list of diffusion times
//! `0 = t_0 < t_1 < ... < t_J`. It defines band-pass filters
//! `Psi_j = T^{t_j} - T^{t_{j+1}}` and the low-pass filter `Phi = T^{t_J}`
//! for any diffusion operator `T` (scalar `P` or vector `Q`). With the
//! dyadic list `0, 1, 2, 4, ..., 2^J` this gives `Psi_0 = I - T`,
//! `Psi_j = T^{2^{j-1}} - T^{2^j}` and `Phi_J = T^{2^J}`.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffusion_ops::{check_len, DiffusionOperator};
use crate::error::{Error, Result};
use crate::linalg::min_symmetric_eigenvalue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BankMode {
    Dyadic,
    Infogain,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveletBank {
    scales: Vec<usize>,
    mode: BankMode,
}

impl WaveletBank {
    /// Scales `0, 1, 2, 4, ..., 2^J`.
    pub fn dyadic(j: usize) -> Self {
        let mut scales = vec![0];
        scales.extend((0..=j).map(|k| 1usize << k));
        Self {
            scales,
            mode: BankMode::Dyadic,
        }
    }

    pub fn custom(scales: Vec<usize>) -> Result<Self> {
        Self::with_mode(scales, BankMode::Custom)
    }

    pub fn with_mode(scales: Vec<usize>, mode: BankMode) -> Result<Self> {
        if scales.len() < 2 || scales[0] != 0 || scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "scales must start at 0, be strictly increasing and have at least two entries: {scales:?}"
            )));
        }
        Ok(Self { scales, mode })
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }

    pub fn mode(&self) -> BankMode {
        self.mode
    }

    /// Number of band-pass filters (`J + 1` for a dyadic bank of order `J`).
    pub fn band_pass_count(&self) -> usize {
        self.scales.len() - 1
    }

    /// Band-pass filters plus the low-pass filter.
    pub fn filter_count(&self) -> usize {
        self.scales.len()
    }

    pub fn t_max(&self) -> usize {
        *self.scales.last().expect("non-empty")
    }
}

/// Applies every filter of `bank` to `signal`.
///
/// Returns `[Psi_0 s, ..., Psi_{J} s, Phi s]`, computed with exactly
/// `t_max` sparse applications of `op`.
pub fn wavelet_transform<O: DiffusionOperator + ?Sized>(
    op: &O,
    bank: &WaveletBank,
    signal: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_len(op.signal_len(), signal.len())?;
    let mut out = Vec::with_capacity(bank.filter_count());
    let mut previous = signal.to_vec();
    let mut current = signal.to_vec();
    let mut scratch = vec![0.0; signal.len()];
    for window in bank.scales().windows(2) {
        for _ in window[0]..window[1] {
            op.apply_into(&current, &mut scratch);
            std::mem::swap(&mut current, &mut scratch);
        }
        out.push(previous.iter().zip(&current).map(|(a, b)| a - b).collect());
        previous.copy_from_slice(&current);
    }
    out.push(previous);
    Ok(out)
}

/// Dense matrices of every filter in the bank.
pub fn dense_filters<O: DiffusionOperator + ?Sized>(
    op: &O,
    bank: &WaveletBank,
) -> Result<Vec<Array2<f64>>> {
    let t = op.to_dense()?;
    let dim = t.nrows();
    let mut previous = Array2::<f64>::eye(dim);
    let mut power = Array2::<f64>::eye(dim);
    let mut out = Vec::with_capacity(bank.filter_count());
    for window in bank.scales().windows(2) {
        for _ in window[0]..window[1] {
            power = t.dot(&power);
        }
        out.push(&previous - &power);
        previous = power.clone();
    }
    out.push(previous);
    Ok(out)
}

/// Smallest `t >= 1` at which the normalized decay of one signal passes each
/// quantile.
///
/// The decay curve is `c(t) = |T^t x - T^{t_max} x|_1`; progress is
/// `p(t) = (c(0) - c(t)) / (c(0) - c(t_max))`, made monotone by a running
/// maximum.
pub fn signal_quantile_scales<O: DiffusionOperator + ?Sized>(
    op: &O,
    signal: &[f64],
    t_max: usize,
    quantiles: &[f64],
) -> Result<Vec<usize>> {
    check_len(op.signal_len(), signal.len())?;
    let mut powers = Vec::with_capacity(t_max + 1);
    powers.push(signal.to_vec());
    let mut scratch = vec![0.0; signal.len()];
    for t in 0..t_max {
        op.apply_into(&powers[t], &mut scratch);
        powers.push(scratch.clone());
    }
    let stationary = &powers[t_max];
    let decay: Vec<f64> = powers
        .iter()
        .map(|p| p.iter().zip(stationary).map(|(a, b)| (a - b).abs()).sum())
        .collect();
    let scale: f64 = signal.iter().map(|v| v.abs()).sum();
    let total = decay[0] - decay[t_max];
    if !(total > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::FlatDecay);
    }
    let mut progress = Vec::with_capacity(t_max + 1);
    let mut running = f64::NEG_INFINITY;
    for c in &decay {
        running = running.max((decay[0] - c) / total);
        progress.push(running);
    }
    Ok(quantiles
        .iter()
        .map(|&q| {
            (1..=t_max)
                .find(|&t| progress[t] >= q)
                .unwrap_or(t_max)
        })
        .collect())
}

/// Median rounded half-up to an integer.
fn median_half_up(values: &mut [usize]) -> usize {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        // (a + b) / 2 rounded half-up
        (values[n / 2 - 1] + values[n / 2]).div_ceil(2)
    }
}

/// Merges per-signal quantile scales into a bank: median per quantile,
/// united with `{0, 1, t_max}`.
pub fn merge_quantile_scales(per_signal: &[Vec<usize>], t_max: usize) -> Result<WaveletBank> {
    if per_signal.is_empty() {
        return Err(Error::AllSignalsFlat);
    }
    let width = per_signal[0].len();
    let mut scales = vec![0, 1, t_max];
    for q in 0..width {
        let mut column: Vec<usize> = per_signal.iter().map(|s| s[q]).collect();
        scales.push(median_half_up(&mut column));
    }
    scales.sort_unstable();
    scales.dedup();
    WaveletBank::with_mode(scales, BankMode::Infogain)
}

/// Data-driven scale selection from the `l1` decay of diffused signals.
///
/// Signals whose decay curve is flat are skipped; if all are flat the
/// selection fails with [`Error::AllSignalsFlat`].
pub fn infogain_scales<O: DiffusionOperator + ?Sized>(
    op: &O,
    signals: &[Vec<f64>],
    t_max: usize,
    quantiles: &[f64],
) -> Result<WaveletBank> {
    let per_signal = collect_quantile_scales(op, signals, t_max, quantiles)?;
    merge_quantile_scales(&per_signal, t_max)
}

/// Per-signal scales with flat signals dropped; used to pool signals across
/// several graphs before a single merge.
pub fn collect_quantile_scales<O: DiffusionOperator + ?Sized>(
    op: &O,
    signals: &[Vec<f64>],
    t_max: usize,
    quantiles: &[f64],
) -> Result<Vec<Vec<usize>>> {
    validate_infogain(t_max, quantiles)?;
    let mut out = Vec::with_capacity(signals.len());
    for signal in signals {
        match signal_quantile_scales(op, signal, t_max, quantiles) {
            Ok(s) => out.push(s),
            Err(Error::FlatDecay) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn validate_infogain(t_max: usize, quantiles: &[f64]) -> Result<()> {
    if t_max < 2 {
        return Err(Error::InvalidArgument(format!("t_max must be >= 2, got {t_max}")));
    }
    if quantiles.is_empty()
        || quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0))
        || quantiles.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidArgument(format!(
            "quantiles must be strictly increasing in (0, 1): {quantiles:?}"
        )));
    }
    Ok(())
}

/// Measured frame behaviour of a bank on one operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameBoundReport {
    /// Smallest `sum_j |Psi_j w|^2 + |Phi w|^2` over the unit trial signals.
    pub min_ratio: f64,
    /// Largest such energy.
    pub max_ratio: f64,
    /// `d_max / d_min`, the upper frame bound.
    pub upper_bound: f64,
    /// Smallest eigenvalue of `sum_j Psi_j^T Psi_j + Phi^T Phi`.
    pub frame_operator_min_eig: f64,
}

impl FrameBoundReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_ratio <= self.upper_bound + tol && self.frame_operator_min_eig > 0.0
    }
}

/// Energy of the wavelet coefficients of `signal`.
pub fn wavelet_energy<O: DiffusionOperator + ?Sized>(
    op: &O,
    bank: &WaveletBank,
    signal: &[f64],
) -> Result<f64> {
    Ok(wavelet_transform(op, bank, signal)?
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>())
        .sum())
}

/// Checks the two-sided frame inequality on random unit signals and
/// certifies the lower bound through the dense frame operator.
///
/// `degrees` are the (weighted) vertex degrees the operator was built from.
pub fn verify_frame_bounds<O: DiffusionOperator + ?Sized>(
    op: &O,
    bank: &WaveletBank,
    degrees: &[f64],
    trials: usize,
    seed: u64,
) -> Result<FrameBoundReport> {
    check_len(op.nodes(), degrees.len())?;
    let d_min = degrees.iter().copied().fold(f64::INFINITY, f64::min);
    let d_max = degrees.iter().copied().fold(0.0, f64::max);
    let filters = dense_filters(op, bank)?;
    let dim = op.signal_len();
    let mut frame_op = Array2::<f64>::zeros((dim, dim));
    for f in &filters {
        frame_op = frame_op + f.t().dot(f);
    }
    let frame_operator_min_eig = min_symmetric_eigenvalue(&frame_op)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = 0.0f64;
    for _ in 0..trials {
        let mut w: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        w.iter_mut().for_each(|v| *v /= norm);
        let e = wavelet_energy(op, bank, &w)?;
        min_ratio = min_ratio.min(e);
        max_ratio = max_ratio.max(e);
    }
    Ok(FrameBoundReport {
        min_ratio,
        max_ratio,
        upper_bound: d_max / d_min,
        frame_operator_min_eig,
    })
}
