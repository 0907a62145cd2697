//! Synthetic load profiles, power-flow-certified trajectory datasets and
//! depth-1 Hankel stacks.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::RadialNetwork;
use crate::powerflow::{self, InjectionVector, PowerFlowError, ResidualReport};

/// Singular values below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("power flow failed at step {step}: {source}")]
    NoConvergence { step: usize, source: PowerFlowError },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("measured set must contain the slack node 0 and valid node ids")]
    InvalidMeasuredSet,
    #[error("dataset file: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadCategory {
    Household,
    Commercial,
    Agricultural,
}

impl LoadCategory {
    pub const ALL: [LoadCategory; 3] =
        [LoadCategory::Household, LoadCategory::Commercial, LoadCategory::Agricultural];

    fn index(self) -> usize {
        self as usize
    }

    /// Daily shape at hour `h` in [0, 24), in [0.05, 1].
    pub fn shape(self, h: f64) -> f64 {
        let w = 2.0 * PI / 24.0;
        match self {
            // morning and evening peaks
            LoadCategory::Household => {
                0.5 + 0.2 * (w * (h - 20.0)).cos() + 0.25 * (2.0 * w * (h - 7.5)).cos()
            }
            // midday plateau
            LoadCategory::Commercial => {
                0.55 + 0.35 * (w * (h - 13.0)).cos() + 0.08 * (2.0 * w * (h - 13.0)).cos()
            }
            // early-morning peak
            LoadCategory::Agricultural => {
                0.45 + 0.3 * (w * (h - 6.0)).cos() + 0.15 * (2.0 * w * (h - 5.0)).cos()
            }
        }
    }
}

/// Tunables for [`synth_profiles_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub peak_min: f64,
    pub peak_max: f64,
    pub pf_min: f64,
    pub pf_max: f64,
    /// Relative per-node, per-step amplitude jitter.
    pub jitter: f64,
    /// Per-step power-factor jitter.
    pub pf_jitter: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { peak_min: 0.005, peak_max: 0.03, pf_min: 0.88, pf_max: 0.97, jitter: 0.3, pf_jitter: 0.03 }
    }
}

/// Per-node daily load profiles.
///
/// The injection of node `i` at absolute step `t` is
/// `-scale * peak_p[i] * multiplier(i, t)` with reactive power from the
/// step's power factor. Multipliers combine the category shape with a
/// deterministic per-node, per-step jitter so that the recorded inputs span
/// all `2n` directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfileSet {
    pub t_day: usize,
    /// One row of `t_day` multipliers per category.
    pub shapes: Vec<Vec<f64>>,
    pub assignment: Vec<LoadCategory>,
    pub peak_p: Vec<f64>,
    pub power_factor: Vec<f64>,
    pub jitter: f64,
    pub pf_jitter: f64,
    pub jitter_seed: u64,
    pub scale: f64,
}

pub fn synth_profiles(n: usize, t_day: usize, seed: u64) -> LoadProfileSet {
    synth_profiles_with(n, t_day, seed, &ProfileOptions::default())
}

pub fn synth_profiles_with(n: usize, t_day: usize, seed: u64, opts: &ProfileOptions) -> LoadProfileSet {
    assert!(n >= 1 && t_day >= 2, "need n >= 1 and t_day >= 2");
    let shapes = LoadCategory::ALL
        .iter()
        .map(|c| (0..t_day).map(|k| c.shape(24.0 * k as f64 / t_day as f64)).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = Vec::with_capacity(n);
    let mut peak_p = Vec::with_capacity(n);
    let mut power_factor = Vec::with_capacity(n);
    for _ in 0..n {
        assignment.push(LoadCategory::ALL[rng.random_range(0..3)]);
        peak_p.push(rng.random_range(opts.peak_min..=opts.peak_max));
        power_factor.push(rng.random_range(opts.pf_min..=opts.pf_max));
    }
    LoadProfileSet {
        t_day,
        shapes,
        assignment,
        peak_p,
        power_factor,
        jitter: opts.jitter,
        pf_jitter: opts.pf_jitter,
        jitter_seed: seed ^ 0x9e37_79b9_7f4a_7c15,
        scale: 1.0,
    }
}

impl LoadProfileSet {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Same nodes and categories with a different jitter realization.
    pub fn with_jitter_seed(&self, seed: u64) -> Self {
        Self { jitter_seed: seed ^ 0x9e37_79b9_7f4a_7c15, ..self.clone() }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { scale: self.scale * factor, ..self.clone() }
    }

    /// Multiplier of non-slack node `i` (1-based) at absolute step `t`.
    pub fn multiplier(&self, i: usize, t: usize) -> f64 {
        let base = self.shapes[self.assignment[i - 1].index()][t % self.t_day];
        let u = unit_hash(self.jitter_seed, i as u64, t as u64, 0);
        (base * (1.0 + self.jitter * (2.0 * u - 1.0))).max(0.0)
    }

    pub fn step_power_factor(&self, i: usize, t: usize) -> f64 {
        let u = unit_hash(self.jitter_seed, i as u64, t as u64, 1);
        (self.power_factor[i - 1] + self.pf_jitter * (2.0 * u - 1.0)).clamp(0.05, 1.0)
    }

    pub fn injection(&self, t: usize) -> InjectionVector {
        let n = self.n();
        let mut inj = InjectionVector::zeros(n);
        for i in 1..=n {
            let p = -self.scale * self.peak_p[i - 1] * self.multiplier(i, t);
            let pf = self.step_power_factor(i, t);
            inj.p[i - 1] = p;
            inj.q[i - 1] = p * (1.0 - pf * pf).sqrt() / pf;
        }
        inj
    }
}

/// Counter-based uniform draw in [0, 1) (splitmix64 finalizer).
fn unit_hash(seed: u64, a: u64, b: u64, c: u64) -> f64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xd1b5_4a32_d192_ed03))
        .wrapping_add(c.wrapping_mul(0x8cb9_2ba7_2f3d_8dd7));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Provenance stored next to a dataset on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// External bus number of each internal node, slack first.
    pub node_ids: Vec<i64>,
    pub base_mva: f64,
    pub base_kv: f64,
    pub seed: u64,
    /// Present for reduced-output datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured: Option<Vec<usize>>,
}

/// Recorded input/output samples, one column per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub meta: DatasetMeta,
    /// `2n x T`, rows `p_1..p_n, q_1..q_n`.
    pub u: DMatrix<f64>,
    /// `(4n + 1) x T` for full outputs, `(4|R+| + 1) x T` when reduced.
    pub y: DMatrix<f64>,
    pub certificates: Vec<ResidualReport>,
}

impl TrajectoryDataset {
    pub fn n(&self) -> usize {
        self.meta.n
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.u.ncols() == 0
    }

    pub fn input(&self, t: usize) -> InjectionVector {
        InjectionVector::from_stacked(self.u.column(t).as_slice())
    }

    /// Subset of the recorded steps, in the given order.
    pub fn columns(&self, cols: &[usize]) -> Self {
        let certificates = if self.certificates.len() == self.len() {
            cols.iter().map(|&c| self.certificates[c]).collect()
        } else {
            Vec::new()
        };
        Self {
            meta: DatasetMeta { t: cols.len(), ..self.meta.clone() },
            u: self.u.select_columns(cols.iter()),
            y: self.y.select_columns(cols.iter()),
            certificates,
        }
    }

    /// Keeps only the output rows of the measured nodes (plus `v0`).
    pub fn reduced(&self, measured: &MeasuredSet) -> Result<Self, DataError> {
        let rows = output_rows(self.n(), measured)?;
        if self.meta.measured.is_some() {
            return Err(DataError::InvalidMeasuredSet);
        }
        let y = self.y.select_rows(rows.iter());
        let mut meta = self.meta.clone();
        meta.measured = match measured {
            MeasuredSet::Full => None,
            MeasuredSet::Nodes(s) => Some(s.iter().copied().collect()),
        };
        Ok(Self { meta, u: self.u.clone(), y, certificates: self.certificates.clone() })
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir)?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| DataError::Io(e.to_string()))?;
        fs::write(dir.join("meta.json"), meta + "\n")?;
        write_matrix_csv(&dir.join("u.csv"), &self.u)?;
        write_matrix_csv(&dir.join("y.csv"), &self.y)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, DataError> {
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)
            .map_err(|e| DataError::Io(format!("meta.json: {e}")))?;
        let u = read_matrix_csv(&dir.join("u.csv"))?;
        let y = read_matrix_csv(&dir.join("y.csv"))?;
        let n = meta.n;
        let m = match &meta.measured {
            None => 4 * n + 1,
            Some(s) => 4 * (s.len() - 1) + 1,
        };
        if u.nrows() != 2 * n {
            return Err(DataError::DimensionMismatch { expected: 2 * n, got: u.nrows() });
        }
        if y.nrows() != m {
            return Err(DataError::DimensionMismatch { expected: m, got: y.nrows() });
        }
        if u.ncols() != meta.t || y.ncols() != meta.t {
            return Err(DataError::DimensionMismatch { expected: meta.t, got: u.ncols().min(y.ncols()) });
        }
        Ok(Self { meta, u, y, certificates: Vec::new() })
    }
}

fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| DataError::Io(e.to_string()))?;
    for r in 0..m.nrows() {
        w.write_record(m.row(r).iter().map(|v| format!("{v:e}")))
            .map_err(|e| DataError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>, DataError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| DataError::Io(e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| DataError::Io(format!("bad number {s:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(DataError::Io(format!("{}: ragged rows", path.display())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

/// Runs the oracle at every step of `days` days and records certified samples.
pub fn generate_dataset(
    net: &RadialNetwork,
    profiles: &LoadProfileSet,
    days: usize,
    v0: f64,
) -> Result<TrajectoryDataset, DataError> {
    generate_steps(net, profiles, 0, days * profiles.t_day, v0)
}

/// Like [`generate_dataset`] for absolute steps `start..start + len`.
pub fn generate_steps(
    net: &RadialNetwork,
    profiles: &LoadProfileSet,
    start: usize,
    len: usize,
    v0: f64,
) -> Result<TrajectoryDataset, DataError> {
    let n = net.n();
    if profiles.n() != n {
        return Err(DataError::DimensionMismatch { expected: n, got: profiles.n() });
    }
    let samples: Vec<_> = (start..start + len)
        .into_par_iter()
        .map(|t| {
            let inj = profiles.injection(t);
            let state = powerflow::solve_distflow(
                net,
                &inj,
                v0,
                powerflow::DEFAULT_TOL_PF,
                powerflow::DEFAULT_MAX_ITER,
            )
            .map_err(|source| DataError::NoConvergence { step: t, source })?;
            let cert = powerflow::residuals(net, &state, &inj)
                .map_err(|source| DataError::NoConvergence { step: t, source })?;
            Ok((inj.stacked(), state.stacked(), cert))
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    let mut u = DMatrix::zeros(2 * n, len);
    let mut y = DMatrix::zeros(4 * n + 1, len);
    let mut certificates = Vec::with_capacity(len);
    for (k, (uu, yy, cert)) in samples.into_iter().enumerate() {
        u.set_column(k, &DVector::from_vec(uu));
        y.set_column(k, &DVector::from_vec(yy));
        certificates.push(cert);
    }
    let meta = DatasetMeta {
        n,
        t: len,
        node_ids: net.external_ids().to_vec(),
        base_mva: net.base_mva(),
        base_kv: net.base_kv(),
        seed: profiles.jitter_seed ^ 0x9e37_79b9_7f4a_7c15,
        measured: None,
    };
    Ok(TrajectoryDataset { meta, u, y, certificates })
}

/// Which nodes carry output sensors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasuredSet {
    Full,
    Nodes(BTreeSet<usize>),
}

impl MeasuredSet {
    /// Measured non-slack nodes in ascending order.
    pub fn non_slack(&self, n: usize) -> Vec<usize> {
        match self {
            MeasuredSet::Full => (1..=n).collect(),
            MeasuredSet::Nodes(s) => s.iter().copied().filter(|&i| i != 0).collect(),
        }
    }

    pub fn is_full(&self, n: usize) -> bool {
        match self {
            MeasuredSet::Full => true,
            MeasuredSet::Nodes(s) => s.len() == n + 1,
        }
    }
}

/// Row indices of `y` kept for `measured`: P, Q, l, v blocks restricted to
/// the measured non-slack nodes, then v0.
pub fn output_rows(n: usize, measured: &MeasuredSet) -> Result<Vec<usize>, DataError> {
    if let MeasuredSet::Nodes(s) = measured {
        if !s.contains(&0) || s.iter().any(|&i| i > n) {
            return Err(DataError::InvalidMeasuredSet);
        }
    }
    let kept = measured.non_slack(n);
    let mut rows = Vec::with_capacity(4 * kept.len() + 1);
    for block in 0..4 {
        rows.extend(kept.iter().map(|&i| block * n + i - 1));
    }
    rows.push(4 * n);
    Ok(rows)
}

/// Depth-1 Hankel matrices of inputs and (possibly reduced) outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelSystem {
    pub n: usize,
    pub h_u: DMatrix<f64>,
    pub h_y: DMatrix<f64>,
    pub measured: MeasuredSet,
    pub stacked_rank: usize,
    pub pe_satisfied: bool,
}

impl HankelSystem {
    pub fn t(&self) -> usize {
        self.h_u.ncols()
    }

    pub fn stacked(&self) -> DMatrix<f64> {
        let (mu, my, t) = (self.h_u.nrows(), self.h_y.nrows(), self.t());
        let mut h = DMatrix::zeros(mu + my, t);
        h.rows_mut(0, mu).copy_from(&self.h_u);
        h.rows_mut(mu, my).copy_from(&self.h_y);
        h
    }

    /// Measured non-slack nodes, ascending.
    pub fn measured_nodes(&self) -> Vec<usize> {
        self.measured.non_slack(self.n)
    }
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

pub fn build_hankel(ds: &TrajectoryDataset, measured: &MeasuredSet) -> Result<HankelSystem, DataError> {
    if ds.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let n = ds.n();
    let y_r = match &ds.meta.measured {
        None => ds.y.select_rows(output_rows(n, measured)?.iter()),
        Some(stored) => {
            let stored: BTreeSet<usize> = stored.iter().copied().collect();
            let want = match measured {
                MeasuredSet::Full => (0..=n).collect(),
                MeasuredSet::Nodes(s) => s.clone(),
            };
            if !want.is_subset(&stored) {
                return Err(DataError::InvalidMeasuredSet);
            }
            let stored_list: Vec<usize> = stored.iter().copied().filter(|&i| i != 0).collect();
            let k = stored_list.len();
            let want_list: Vec<usize> = want.iter().copied().filter(|&i| i != 0).collect();
            let mut rows = Vec::new();
            for block in 0..4 {
                for i in &want_list {
                    let pos = stored_list.binary_search(i).expect("subset checked");
                    rows.push(block * k + pos);
                }
            }
            rows.push(4 * k);
            ds.y.select_rows(rows.iter())
        }
    };
    let measured = if measured.is_full(n) { MeasuredSet::Full } else { measured.clone() };
    let mut hs = HankelSystem {
        n,
        h_u: ds.u.clone(),
        h_y: y_r,
        measured,
        stacked_rank: 0,
        pe_satisfied: false,
    };
    hs.stacked_rank = numerical_rank(&hs.stacked());
    hs.pe_satisfied = hs.measured == MeasuredSet::Full && hs.stacked_rank == 3 * n + 1;
    Ok(hs)
}

/// Least-squares column-span membership.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub g: DVector<f64>,
    pub residual: f64,
}

/// Solves `[H_u; H_y] g = [u; y]` in the least-squares sense and reports
/// whether the residual infinity-norm is within `tol`.
pub fn check_static_membership(
    hs: &HankelSystem,
    u: &[f64],
    y: &[f64],
    tol: f64,
) -> Result<Membership, DataError> {
    if u.len() != hs.h_u.nrows() {
        return Err(DataError::DimensionMismatch { expected: hs.h_u.nrows(), got: u.len() });
    }
    if y.len() != hs.h_y.nrows() {
        return Err(DataError::DimensionMismatch { expected: hs.h_y.nrows(), got: y.len() });
    }
    let h = hs.stacked();
    let w = DVector::from_iterator(u.len() + y.len(), u.iter().chain(y).copied());
    let g = least_squares(&h, &w);
    let residual = (&h * &g - &w).amax();
    Ok(Membership { member: residual <= tol, g, residual })
}

/// Minimum-norm least-squares solution via the SVD with the crate rank
/// tolerance.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.is_empty() {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DVector::zeros(a.ncols());
    }
    svd.solve(b, RANK_TOL * smax).expect("U and V were computed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::RawBranch;

    fn tree(n: usize) -> RadialNetwork {
        let buses: Vec<i64> = (0..=n as i64).collect();
        let raw: Vec<RawBranch> = (1..=n as i64)
            .map(|i| RawBranch { from: i, to: (i - 1) / 2, r: 0.01 + 0.001 * i as f64, x: 0.02 })
            .collect();
        RadialNetwork::from_raw(1.0, 1.0, 0, &buses, &raw).unwrap()
    }

    #[test]
    fn profiles_are_deterministic() {
        let a = synth_profiles(10, 96, 7);
        let b = synth_profiles(10, 96, 7);
        assert_eq!(a, b);
        assert_eq!(a.assignment.len(), 10);
        assert_ne!(a, synth_profiles(10, 96, 8));
    }

    #[test]
    fn multipliers_stay_in_range() {
        let p = synth_profiles(40, 96, 3);
        for i in 1..=40 {
            for t in 0..96 * 3 {
                let m = p.multiplier(i, t);
                assert!((0.0..=1.5).contains(&m), "{m}");
            }
        }
        for c in LoadCategory::ALL {
            for k in 0..9600 {
                let s = c.shape(24.0 * k as f64 / 9600.0);
                assert!((0.0..=1.0).contains(&s));
            }
        }
    }

    #[test]
    fn dataset_shape_and_certificates() {
        let net = tree(6);
        let p = synth_profiles(6, 96, 1);
        let ds = generate_dataset(&net, &p, 1, 1.0).unwrap();
        assert_eq!(ds.len(), 96);
        assert_eq!(ds.y.nrows(), 25);
        assert!(ds.certificates.iter().all(|c| c.max() <= 1e-10));
        let inj = p.injection(5);
        assert_eq!(ds.u.column(5).as_slice(), inj.stacked().as_slice());
    }

    #[test]
    fn zero_peaks_give_flat_outputs() {
        let net = tree(4);
        let mut p = synth_profiles(4, 8, 1);
        p.peak_p.iter_mut().for_each(|x| *x = 0.0);
        let ds = generate_dataset(&net, &p, 1, 1.0).unwrap();
        for t in 0..8 {
            let col = ds.y.column(t);
            assert!(col.rows(0, 12).iter().all(|&x| x == 0.0));
            assert!(col.rows(12, 5).iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn rank_and_membership_basics() {
        let net = tree(5);
        let p = synth_profiles(5, 96, 2);
        let ds = generate_dataset(&net, &p, 1, 1.0).unwrap();
        let hs = build_hankel(&ds, &MeasuredSet::Full).unwrap();
        assert_eq!(hs.stacked_rank, 16);
        assert!(hs.pe_satisfied);

        let short = generate_steps(&net, &p, 0, 10, 1.0).unwrap();
        let hs_short = build_hankel(&short, &MeasuredSet::Full).unwrap();
        assert!(hs_short.stacked_rank <= 10);
        assert!(!hs_short.pe_satisfied);

        let col = 17;
        let m = check_static_membership(
            &hs,
            ds.u.column(col).as_slice(),
            ds.y.column(col).as_slice(),
            1e-9,
        )
        .unwrap();
        assert!(m.member);

        let zero = check_static_membership(&hs, &[0.0; 10], &[0.0; 21], 1e-12).unwrap();
        assert!(zero.member);
        assert!(zero.g.amax() == 0.0);
    }

    #[test]
    fn identical_columns_have_rank_one() {
        let net = tree(3);
        let p = synth_profiles(3, 4, 2);
        let mut ds = generate_dataset(&net, &p, 1, 1.0).unwrap();
        for t in 1..ds.len() {
            let (u0, y0) = (ds.u.column(0).clone_owned(), ds.y.column(0).clone_owned());
            ds.u.set_column(t, &u0);
            ds.y.set_column(t, &y0);
        }
        assert_eq!(build_hankel(&ds, &MeasuredSet::Full).unwrap().stacked_rank, 1);
    }

    #[test]
    fn reduced_rows_and_errors() {
        assert_eq!(
            output_rows(3, &MeasuredSet::Nodes(BTreeSet::from([0, 2]))).unwrap(),
            vec![1, 4, 7, 10, 12]
        );
        assert!(output_rows(3, &MeasuredSet::Nodes(BTreeSet::from([1, 2]))).is_err());
        let net = tree(3);
        let ds = generate_dataset(&net, &synth_profiles(3, 4, 1), 1, 1.0).unwrap();
        let empty = generate_steps(&net, &synth_profiles(3, 4, 1), 0, 0, 1.0).unwrap();
        assert!(matches!(build_hankel(&empty, &MeasuredSet::Full), Err(DataError::EmptyDataset)));
        let hs = build_hankel(&ds, &MeasuredSet::Full).unwrap();
        assert!(check_static_membership(&hs, &[0.0; 5], &[0.0; 13], 1e-9).is_err());
    }
}
