//! Phase-lag connectivity: sensor-space PLI, component-space PLI on fitted
//! trial profiles, scalp maps of a component pair, and region summaries.
//!
//! The phase lag index of two complex series `u, v` over trials is
//! `|mean_k sign(Im(u_k · conj(v_k)))|` with `sign(0) = 0`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::FactorModel;
use crate::tensor::{ComplexTensor, RMatrix, C64};

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// PLI between two equally long complex series.
pub fn pli(u: &[C64], v: &[C64]) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::invalid(format!("PLI needs two equal non-empty series, got {} and {}", u.len(), v.len())));
    }
    let s: f64 = u.iter().zip(v).map(|(a, b)| sign0((a * b.conj()).im)).sum();
    Ok((s / u.len() as f64).abs())
}

/// Symmetric PLI matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PliMatrix {
    pub values: RMatrix,
    /// Frequency index the matrix belongs to; `None` when band-aggregated.
    pub freq_index: Option<usize>,
}

impl PliMatrix {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Elementwise mean over several per-frequency matrices.
    pub fn band_mean(mats: &[PliMatrix]) -> Result<PliMatrix> {
        let first = mats.first().ok_or_else(|| Error::invalid("no matrices to average"))?;
        let mut acc = RMatrix::zeros(first.len(), first.len());
        for m in mats {
            if m.len() != first.len() {
                return Err(Error::invalid("PLI matrices differ in size"));
            }
            acc += &m.values;
        }
        acc /= mats.len() as f64;
        Ok(PliMatrix { values: acc, freq_index: None })
    }
}

/// Channel-by-channel PLI at every frequency of `x`.
pub fn sensor_pli(x: &ComplexTensor) -> Result<Vec<PliMatrix>> {
    let d = x.dims();
    if d.trials < 2 {
        return Err(Error::invalid("sensor PLI needs at least two trials"));
    }
    let mut out = Vec::with_capacity(d.freqs);
    for (f, slab) in x.slabs().enumerate() {
        let mut values = RMatrix::zeros(d.channels, d.channels);
        for i in 0..d.channels {
            for j in i + 1..d.channels {
                let s: f64 = slab.row(i).iter().zip(slab.row(j).iter()).map(|(a, b)| sign0((a * b.conj()).im)).sum();
                let v = (s / d.trials as f64).abs();
                values[(i, j)] = v;
                values[(j, i)] = v;
            }
        }
        out.push(PliMatrix { values, freq_index: Some(f) });
    }
    Ok(out)
}

fn check_pair(model: &FactorModel, i: usize, j: usize) -> Result<()> {
    let r = model.rank();
    if i == j {
        return Err(Error::invalid(format!("component PLI needs two distinct components, got {i} twice")));
    }
    if i >= r || j >= r {
        return Err(Error::invalid(format!("component pair ({i}, {j}) out of range for rank {r}")));
    }
    Ok(())
}

/// PLI between the activations `s_i(f) = p_i(f)·y_i(f)` and `s_j(f)`.
pub fn component_pli(model: &FactorModel, i: usize, j: usize, f: usize) -> Result<f64> {
    check_pair(model, i, j)?;
    if f >= model.dims().freqs {
        return Err(Error::invalid(format!("frequency index {f} out of range")));
    }
    pli(&model.component_series(i, f), &model.component_series(j, f))
}

/// Frequency indices whose frequency lies in `[lo, hi]` (inclusive).
pub fn band_bins(freqs: &[f64], band: (f64, f64)) -> Result<Vec<usize>> {
    let (lo, hi) = band;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::invalid(format!("invalid band {lo}:{hi}")));
    }
    let bins: Vec<usize> = freqs.iter().enumerate().filter(|(_, &v)| v >= lo && v <= hi).map(|(i, _)| i).collect();
    if bins.is_empty() {
        return Err(Error::invalid(format!("band {lo}:{hi} contains no frequency bins")));
    }
    Ok(bins)
}

/// Component PLI averaged over `bins`.
pub fn band_component_pli(model: &FactorModel, i: usize, j: usize, bins: &[usize]) -> Result<f64> {
    if bins.is_empty() {
        return Err(Error::invalid("empty band"));
    }
    let mut total = 0.0;
    for &f in bins {
        total += component_pli(model, i, j, f)?;
    }
    Ok(total / bins.len() as f64)
}

/// Mean activation magnitude `(1/L) Σ_l (|s_i(f_l)| + |s_j(f_l)|)`, where
/// `|s(f)|` is the mean over trials of `|p(f)·y(f,k)|`.
pub fn band_magnitude(model: &FactorModel, i: usize, j: usize, bins: &[usize]) -> Result<f64> {
    check_pair(model, i, j)?;
    if bins.is_empty() {
        return Err(Error::invalid("empty band"));
    }
    let mean_abs = |c: usize, f: usize| {
        let s = model.component_series(c, f);
        s.iter().map(|z| z.norm()).sum::<f64>() / s.len() as f64
    };
    let total: f64 = bins.iter().map(|&f| mean_abs(i, f) + mean_abs(j, f)).sum();
    Ok(total / bins.len() as f64)
}

/// The component pair with the largest band PLI (lowest indices on ties).
pub fn best_pair(model: &FactorModel, bins: &[usize]) -> Result<Option<(usize, usize, f64)>> {
    let r = model.rank();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..r {
        for j in i + 1..r {
            let v = band_component_pli(model, i, j, bins)?;
            if best.is_none_or(|b| v > b.2) {
                best = Some((i, j, v));
            }
        }
    }
    Ok(best)
}

/// Largest band PLI over all component pairs; 0 for a single component.
pub fn best_coupling(model: &FactorModel, bins: &[usize]) -> Result<f64> {
    Ok(best_pair(model, bins)?.map_or(0.0, |b| b.2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityMap {
    /// `m × m` nonnegative symmetric matrix.
    pub matrix: RMatrix,
    pub source_pair: (usize, usize),
    pub coupling: f64,
    pub band_hz: (f64, f64),
}

impl ConnectivityMap {
    /// Absolute row sums, the per-electrode connection strength.
    pub fn strengths(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect()
    }

    /// Electrode indices sorted by decreasing strength (stable on ties).
    pub fn strongest(&self, n: usize) -> Vec<usize> {
        let s = self.strengths();
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        order.truncate(n);
        order
    }
}

/// Frequency-weighted scalp map of components `i, j`:
/// `Ψ · w · |a_i a_jᵀ + a_j a_iᵀ|` (elementwise magnitude), with `Ψ` the band
/// PLI and `w` the band activation magnitude.
pub fn scalp_map(
    model: &FactorModel,
    i: usize,
    j: usize,
    bins: &[usize],
    band_hz: (f64, f64),
) -> Result<ConnectivityMap> {
    let coupling = band_component_pli(model, i, j, bins)?;
    let weight = band_magnitude(model, i, j, bins)?;
    let a = model.spatial();
    let (ai, aj) = (a.column(i), a.column(j));
    let scale = coupling * weight;
    let m = a.nrows();
    let matrix = RMatrix::from_fn(m, m, |c, d| scale * (ai[c] * aj[d] + aj[c] * ai[d]).abs());
    Ok(ConnectivityMap { matrix, source_pair: (i, j), coupling, band_hz })
}

/// Scalp regions of the default five-way partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Frontal,
    Central,
    Parietal,
    Occipital,
    Temporal,
}

impl Region {
    pub const ALL: [Region; 5] = [Region::Frontal, Region::Central, Region::Parietal, Region::Occipital, Region::Temporal];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Frontal => "frontal",
            Region::Central => "central",
            Region::Parietal => "parietal",
            Region::Occipital => "occipital",
            Region::Temporal => "temporal",
        }
    }
}

/// Region of an electrode on the unit upper hemisphere, nose along `+x`.
///
/// With polar angle `θ` from `+z` and azimuth `φ` from `+x`: `θ < 30°` is
/// central; otherwise `|φ| ≤ 45°` frontal, `45° < |φ| < 135°` temporal, and
/// `|φ| ≥ 135°` parietal when `θ < 60°`, occipital beyond.
pub fn region_of(p: &Vector3<f64>) -> Region {
    let r = p.norm();
    let theta = if r > 0.0 { (p.z / r).clamp(-1.0, 1.0).acos().to_degrees() } else { 0.0 };
    let phi = p.y.atan2(p.x).to_degrees().abs();
    if theta < 30.0 {
        Region::Central
    } else if phi <= 45.0 {
        Region::Frontal
    } else if phi < 135.0 {
        Region::Temporal
    } else if theta < 60.0 {
        Region::Parietal
    } else {
        Region::Occipital
    }
}

pub fn default_regions(electrodes: &[Vector3<f64>]) -> Vec<Option<usize>> {
    electrodes.iter().map(|p| Some(region_of(p).index())).collect()
}

/// Region-pair averages of a map: entry `(r, s)` is the mean of
/// `matrix[c, d]` over electrodes `c ∈ r`, `d ∈ s`, `c ≠ d`; 0 where no such
/// pair exists.
pub fn region_group(matrix: &RMatrix, labels: &[Option<usize>], n_regions: usize) -> Result<RMatrix> {
    let m = matrix.nrows();
    if matrix.ncols() != m || labels.len() != m {
        return Err(Error::invalid(format!(
            "{} labels for a {}×{} map",
            labels.len(),
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let mut groups = Vec::with_capacity(m);
    for (e, l) in labels.iter().enumerate() {
        match l {
            Some(g) if *g < n_regions => groups.push(*g),
            Some(g) => return Err(Error::invalid(format!("electrode {e} has region {g} ≥ {n_regions}"))),
            None => return Err(Error::invalid(format!("electrode {e} has no region label"))),
        }
    }
    let mut sum = RMatrix::zeros(n_regions, n_regions);
    let mut count = RMatrix::zeros(n_regions, n_regions);
    for c in 0..m {
        for d in 0..m {
            if c != d {
                sum[(groups[c], groups[d])] += matrix[(c, d)];
                count[(groups[c], groups[d])] += 1.0;
            }
        }
    }
    Ok(sum.zip_map(&count, |s, n| if n > 0.0 { s / n } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::{ParafacModel, Parafac2Model};
    use crate::rng::seeded;
    use crate::tensor::{CMatrix, Dims};
    use proptest::prelude::*;
    use rand::Rng;

    /// PLI from phase angles: `sign(sin(arg u − arg v))`, zero where either
    /// value vanishes or the phases coincide.
    fn polar_pli(u: &[C64], v: &[C64]) -> f64 {
        let s: f64 = u
            .iter()
            .zip(v)
            .map(|(a, b)| {
                if a.norm() == 0.0 || b.norm() == 0.0 {
                    return 0.0;
                }
                let d = (a.arg() - b.arg()).sin();
                if d.abs() < 1e-300 {
                    0.0
                } else {
                    d.signum()
                }
            })
            .sum();
        (s / u.len() as f64).abs()
    }

    fn random_phases(n: usize, rng: &mut crate::rng::Rng) -> Vec<C64> {
        (0..n).map(|_| C64::from_polar(rng.random_range(0.5..2.0), rng.random_range(-3.14..3.14))).collect()
    }

    #[test]
    fn identical_channels_have_zero_pli() {
        let u = random_phases(50, &mut seeded(1));
        assert_eq!(pli(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn constant_quarter_lag_gives_one() {
        let u = random_phases(50, &mut seeded(2));
        let v: Vec<C64> = u.iter().map(|z| z * C64::i()).collect();
        assert_eq!(pli(&u, &v).unwrap(), 1.0);
        assert_eq!(pli(&v, &u).unwrap(), 1.0);
    }

    #[test]
    fn independent_phases_give_small_pli() {
        let mut rng = seeded(3);
        let u = random_phases(10_000, &mut rng);
        let v = random_phases(10_000, &mut rng);
        assert!(pli(&u, &v).unwrap() < 0.03);
    }

    #[test]
    fn sensor_pli_matches_polar_oracle() {
        let mut rng = seeded(4);
        for _ in 0..20 {
            let dims = Dims::new(5, 3, 40);
            let x = ComplexTensor::from_fn(dims, |_, _, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap();
            let mats = sensor_pli(&x).unwrap();
            for (f, m) in mats.iter().enumerate() {
                assert_eq!(m.freq_index, Some(f));
                for i in 0..5 {
                    assert_eq!(m.values[(i, i)], 0.0);
                    for j in 0..5 {
                        if i == j {
                            continue;
                        }
                        let u: Vec<C64> = (0..40).map(|k| x.get(i, f, k)).collect();
                        let v: Vec<C64> = (0..40).map(|k| x.get(j, f, k)).collect();
                        assert!((m.values[(i, j)] - polar_pli(&u, &v)).abs() < 1e-12);
                        assert_eq!(m.values[(i, j)], m.values[(j, i)]);
                    }
                }
            }
        }
    }

    #[test]
    fn sensor_pli_needs_two_trials() {
        let x = ComplexTensor::zeros(Dims::new(3, 2, 1)).unwrap();
        assert!(sensor_pli(&x).is_err());
    }

    #[test]
    fn component_pli_matches_raw_factor_oracle() {
        let mut rng = seeded(5);
        let dims = Dims::new(6, 4, 30);
        for n in 0..20 {
            let model: FactorModel = if n % 2 == 0 {
                ParafacModel::random(dims, 3, &mut rng).into()
            } else {
                Parafac2Model::random(dims, 3, &mut rng).into()
            };
            for f in 0..dims.freqs {
                // Raw entries: s_i(f, k) = P[f, i] · Y(f)[i, k], Y(f) = H·Q(f)ᴴ or Yᵀ.
                let series = |i: usize| -> Vec<C64> {
                    (0..dims.trials)
                        .map(|k| {
                            let y = match &model {
                                FactorModel::Parafac(m) => m.trial[(k, i)],
                                FactorModel::Parafac2(m) => {
                                    (0..3).map(|c| m.h[(i, c)] * m.q[f][(k, c)].conj()).sum()
                                }
                            };
                            model.spectral()[(f, i)] * y
                        })
                        .collect()
                };
                for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                    let expected = polar_pli(&series(i), &series(j));
                    assert!((component_pli(&model, i, j, f).unwrap() - expected).abs() < 1e-12);
                    assert_eq!(component_pli(&model, i, j, f).unwrap(), component_pli(&model, j, i, f).unwrap());
                }
            }
        }
    }

    fn model_with_trials(y: CMatrix) -> FactorModel {
        let r = y.ncols();
        ParafacModel {
            spatial: RMatrix::identity(4, r),
            spectral: CMatrix::from_element(3, r, C64::new(1.0, 0.0)),
            trial: y,
        }
        .into()
    }

    #[test]
    fn component_pli_special_cases() {
        let mut rng = seeded(6);
        let base = random_phases(64, &mut rng);
        let rot = C64::from_polar(1.0, 1.1);
        let y = CMatrix::from_fn(64, 2, |k, c| if c == 0 { base[k] } else { base[k] * rot });
        let m = model_with_trials(y);
        assert_eq!(component_pli(&m, 0, 1, 0).unwrap(), 1.0);
        assert!(matches!(component_pli(&m, 1, 1, 0), Err(Error::InvalidInput(_))));

        let real = CMatrix::from_fn(64, 2, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0));
        assert_eq!(component_pli(&model_with_trials(real), 0, 1, 2).unwrap(), 0.0);

        let a = random_phases(10_000, &mut rng);
        let b = random_phases(10_000, &mut rng);
        let ind = CMatrix::from_fn(10_000, 2, |k, c| if c == 0 { a[k] } else { b[k] });
        assert!(component_pli(&model_with_trials(ind), 0, 1, 1).unwrap() < 0.03);
    }

    #[test]
    fn band_bins_select_inclusive_range() {
        let freqs: Vec<f64> = (1..=40).map(f64::from).collect();
        assert_eq!(band_bins(&freqs, (8.0, 12.0)).unwrap(), vec![7, 8, 9, 10, 11]);
        assert!(band_bins(&freqs, (50.0, 60.0)).is_err());
        assert!(band_bins(&freqs, (12.0, 8.0)).is_err());
    }

    #[test]
    fn scalp_map_outer_product_structure() {
        let mut y = CMatrix::from_fn(16, 2, |k, _| C64::from_polar(1.0, 0.3 * k as f64));
        for k in 0..16 {
            y[(k, 1)] = y[(k, 0)] * C64::i();
        }
        let m = model_with_trials(y);
        let bins = [0, 1, 2];
        let w = band_magnitude(&m, 0, 1, &bins).unwrap();
        assert!((w - 2.0).abs() < 1e-12);
        let map = scalp_map(&m, 0, 1, &bins, (1.0, 3.0)).unwrap();
        assert_eq!(map.coupling, 1.0);
        for c in 0..4 {
            for d in 0..4 {
                let expected = if (c, d) == (0, 1) || (c, d) == (1, 0) { w } else { 0.0 };
                assert!((map.matrix[(c, d)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_coupling_gives_zero_map() {
        let y = CMatrix::from_fn(16, 2, |k, c| C64::new(1.0 + k as f64, c as f64 * 0.0 + 0.5));
        let m = model_with_trials(y);
        let map = scalp_map(&m, 0, 1, &[0, 1], (1.0, 2.0)).unwrap();
        assert_eq!(map.coupling, 0.0);
        assert!(map.matrix.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn best_pair_prefers_coupled_components() {
        let mut rng = seeded(7);
        let base = random_phases(200, &mut rng);
        let other = random_phases(200, &mut rng);
        let y = CMatrix::from_fn(200, 3, |k, c| match c {
            0 => other[k],
            1 => base[k],
            _ => base[k] * C64::from_polar(1.0, 0.8),
        });
        let m = model_with_trials(y);
        let (i, j, v) = best_pair(&m, &[0, 1, 2]).unwrap().unwrap();
        assert_eq!((i, j), (1, 2));
        assert_eq!(v, 1.0);
        assert_eq!(best_coupling(&m, &[0]).unwrap(), 1.0);
    }

    #[test]
    fn region_group_cases() {
        let mut rng = seeded(8);
        let m = 9;
        let sym = |rng: &mut crate::rng::Rng| {
            let a = RMatrix::from_fn(m, m, |_, _| rng.random_range(0.0..1.0));
            &a + a.transpose()
        };
        let map = sym(&mut rng);
        let one = region_group(&map, &vec![Some(0); m], 1).unwrap();
        let off: f64 = (0..m).flat_map(|c| (0..m).map(move |d| (c, d))).filter(|(c, d)| c != d).map(|(c, d)| map[(c, d)]).sum();
        assert!((one[(0, 0)] - off / (m * (m - 1)) as f64).abs() < 1e-12);

        let labels: Vec<Option<usize>> = (0..m).map(|e| Some(e % 3)).collect();
        let blocks = RMatrix::from_fn(3, 3, |r, s| (1 + r + 3 * s.min(r) + s.max(r)) as f64);
        let block_map = RMatrix::from_fn(m, m, |c, d| blocks[(c % 3, d % 3)]);
        let grouped = region_group(&block_map, &labels, 3).unwrap();
        assert!((grouped - &blocks).abs().max() < 1e-12);

        let grouped = region_group(&map, &labels, 4).unwrap();
        for r in 0..4 {
            for s in 0..4 {
                let (mut tot, mut n) = (0.0, 0);
                for c in 0..m {
                    for d in 0..m {
                        if c != d && labels[c] == Some(r) && labels[d] == Some(s) {
                            tot += map[(c, d)];
                            n += 1;
                        }
                    }
                }
                let expected = if n == 0 { 0.0 } else { tot / n as f64 };
                assert!((grouped[(r, s)] - expected).abs() < 1e-12);
            }
        }

        let mut missing = labels.clone();
        missing[4] = None;
        assert!(matches!(region_group(&map, &missing, 3), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn default_regions_cover_all_five() {
        let electrodes = crate::synth::electrode_positions(108);
        let labels = default_regions(&electrodes);
        for r in Region::ALL {
            assert!(labels.iter().any(|l| *l == Some(r.index())), "{} empty", r.name());
        }
        assert_eq!(region_of(&Vector3::new(0.0, 0.0, 1.0)), Region::Central);
        assert_eq!(region_of(&Vector3::new(1.0, 0.0, 0.2)), Region::Frontal);
        assert_eq!(region_of(&Vector3::new(0.0, -1.0, 0.2)), Region::Temporal);
        assert_eq!(region_of(&Vector3::new(-1.0, 0.0, 0.2)), Region::Occipital);
        assert_eq!(region_of(&Vector3::new(-1.0, 0.0, 1.2)), Region::Parietal);
    }

    proptest! {
        #[test]
        fn pli_is_bounded_symmetric_and_scale_blind(
            seed in 0u64..10_000,
            n in 2usize..60,
            scales in prop::collection::vec(0.01f64..100.0, 60),
        ) {
            let mut rng = seeded(seed);
            let u = random_phases(n, &mut rng);
            let v = random_phases(n, &mut rng);
            let p = pli(&u, &v).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert_eq!(p, pli(&v, &u).unwrap());
            let us: Vec<C64> = u.iter().zip(&scales).map(|(z, s)| z * *s).collect();
            prop_assert_eq!(p, pli(&us, &v).unwrap());
        }
    }
}
