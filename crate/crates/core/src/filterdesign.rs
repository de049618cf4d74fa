//! Time-domain control filter design.
//!
//! Filters are stacked as `q = [q_1; ...; q_L]` with `L * J` coefficients.
//! For each zone the covariance is `R = sum_m H_m^T H_m`, where `H_m` places
//! the `L` convolution matrices of microphone `m` side by side.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irdata::{IrSet, MicGroup, PositionId};
use crate::signal::convolve;

/// Relative residual above which the linear solves are refined.
const REFINE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Acc,
    Pm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Acc => "acc",
            Method::Pm => "pm",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "acc" => Ok(Method::Acc),
            "pm" => Ok(Method::Pm),
            other => Err(Error::invalid(format!("unknown design method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    /// Ridge weight on `||q||^2`.
    pub lambda: f64,
    /// Dark-zone weight of the PM objective.
    pub zeta: f64,
    /// Zero-based index of the loudspeaker that defines the desired bright-zone pressure.
    pub l_ref: usize,
    /// Modeling delay of the desired pressure, in samples.
    pub delay: usize,
    /// Taps per loudspeaker filter (J).
    pub filter_len: usize,
}

impl DesignParams {
    /// Defaults for the 8 kHz desk scene.
    pub fn desk() -> Self {
        DesignParams {
            lambda: 1e-5,
            zeta: 0.5,
            l_ref: 1,
            delay: 16,
            filter_len: 32,
        }
    }

    /// Defaults for full-size 48 kHz scenes.
    pub fn full_scale() -> Self {
        DesignParams {
            lambda: 1e-5,
            zeta: 0.5,
            l_ref: 5,
            delay: 500,
            filter_len: 1000,
        }
    }

    pub fn validate(&self, num_loudspeakers: usize) -> Result<()> {
        if self.filter_len == 0 {
            return Err(Error::invalid("filter length J must be at least 1"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return Err(Error::invalid("zeta must lie in [0, 1]"));
        }
        if self.l_ref >= num_loudspeakers {
            return Err(Error::invalid(format!(
                "reference loudspeaker {} out of range (L = {num_loudspeakers})",
                self.l_ref
            )));
        }
        if self.delay >= self.filter_len {
            return Err(Error::invalid(format!(
                "modeling delay {} must be below J = {}",
                self.delay, self.filter_len
            )));
        }
        Ok(())
    }
}

/// Implicit Toeplitz operator of one IR: maps a length-J filter to the
/// length-(K+J-1) pressure it produces.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvolutionMatrix {
    ir: Vec<f64>,
    filter_len: usize,
}

impl ConvolutionMatrix {
    pub fn new(ir: &[f64], filter_len: usize) -> Result<Self> {
        if ir.is_empty() || filter_len == 0 {
            return Err(Error::invalid("convolution matrix needs K >= 1 and J >= 1"));
        }
        Ok(ConvolutionMatrix {
            ir: ir.to_vec(),
            filter_len,
        })
    }

    pub fn rows(&self) -> usize {
        self.ir.len() + self.filter_len - 1
    }

    pub fn cols(&self) -> usize {
        self.filter_len
    }

    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        assert_eq!(q.len(), self.filter_len);
        convolve(&self.ir, q)
    }

    /// `H^T p` for a length-(K+J-1) vector `p`.
    pub fn apply_transpose(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.rows());
        (0..self.filter_len)
            .map(|j| {
                self.ir
                    .iter()
                    .zip(&p[j..])
                    .map(|(h, x)| h * x)
                    .sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows(), self.cols());
        for c in 0..self.filter_len {
            for (k, &h) in self.ir.iter().enumerate() {
                m[(c + k, c)] = h;
            }
        }
        m
    }
}

/// `L*J x L*J` spatial covariance of one zone.
#[derive(Clone, Debug, PartialEq)]
pub struct ZoneCovariance {
    pub matrix: DMatrix<f64>,
    pub zone: MicGroup,
    /// `None` for position-averaged covariances.
    pub position: Option<PositionId>,
}

/// `sum_k a[k] b[k + lag]` for every lag in `-(J-1)..=(J-1)`, indexed by `lag + J - 1`.
fn cross_correlation(a: &[f64], b: &[f64], max_lag: usize, out: &mut [f64]) {
    let n = a.len() as isize;
    for (slot, lag) in (-(max_lag as isize)..=max_lag as isize).enumerate() {
        let (lo, hi) = (0.max(-lag), n.min(n - lag));
        let mut acc = 0.0;
        for k in lo..hi {
            acc += a[k as usize] * b[(k + lag) as usize];
        }
        out[slot] += acc;
    }
}

/// `R = sum_m H_m^T H_m` over the mics of `group` at `pos`.
pub fn zone_covariance(
    set: &IrSet,
    pos: PositionId,
    group: MicGroup,
    filter_len: usize,
) -> Result<ZoneCovariance> {
    if group == MicGroup::Observation {
        return Err(Error::invalid("covariances are defined for the bright and dark zones only"));
    }
    if filter_len == 0 {
        return Err(Error::invalid("filter length J must be at least 1"));
    }
    set.check_position(pos)?;
    let l_count = set.num_loudspeakers();
    let j = filter_len;
    let lags = 2 * j - 1;
    let mut matrix = DMatrix::zeros(l_count * j, l_count * j);
    let mut xc = vec![0.0; lags];
    for l1 in 0..l_count {
        for l2 in l1..l_count {
            xc.iter_mut().for_each(|x| *x = 0.0);
            for m in 0..set.mic_count(group) {
                cross_correlation(set.ir(pos, group, m, l1), set.ir(pos, group, m, l2), j - 1, &mut xc);
            }
            // Block (l1, l2) entry (r, c) is the correlation at lag r - c.
            for r in 0..j {
                for c in 0..j {
                    let v = xc[r + j - 1 - c];
                    matrix[(l1 * j + r, l2 * j + c)] = v;
                    matrix[(l2 * j + c, l1 * j + r)] = v;
                }
            }
        }
    }
    Ok(ZoneCovariance {
        matrix,
        zone: group,
        position: Some(pos),
    })
}

/// Elementwise mean of same-zone covariances.
pub fn mean_covariance(items: &[&ZoneCovariance]) -> Result<ZoneCovariance> {
    let first = items
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty covariance list"))?;
    let mut sum = DMatrix::zeros(first.matrix.nrows(), first.matrix.ncols());
    for c in items {
        if c.matrix.shape() != sum.shape() || c.zone != first.zone {
            return Err(Error::invalid("covariances to average disagree in shape or zone"));
        }
        sum += &c.matrix;
    }
    Ok(ZoneCovariance {
        matrix: sum / items.len() as f64,
        zone: first.zone,
        position: None,
    })
}

/// Target bright-zone pressures: the reference loudspeaker's IR delayed by
/// the modeling delay, one length-(K+J-1) vector per bright mic.
#[derive(Clone, Debug, PartialEq)]
pub struct DesiredPressure {
    pub signals: Vec<Vec<f64>>,
    pub l_ref: usize,
    pub delay: usize,
}

impl DesiredPressure {
    pub fn energy(&self) -> f64 {
        self.signals.iter().flatten().map(|x| x * x).sum()
    }
}

pub fn desired_pressure(
    set: &IrSet,
    pos: PositionId,
    l_ref: usize,
    delay: usize,
    filter_len: usize,
) -> Result<DesiredPressure> {
    set.check_position(pos)?;
    if filter_len == 0 || delay >= filter_len {
        return Err(Error::invalid(format!(
            "modeling delay {delay} must lie in [0, J-1] with J = {filter_len}"
        )));
    }
    if l_ref >= set.num_loudspeakers() {
        return Err(Error::invalid(format!("reference loudspeaker {l_ref} out of range")));
    }
    let len = set.ir_length() + filter_len - 1;
    let signals = (0..set.mic_count(MicGroup::Bright))
        .map(|m| {
            let mut d = vec![0.0; len];
            let h = set.ir(pos, MicGroup::Bright, m, l_ref);
            let n = h.len().min(len - delay);
            d[delay..delay + n].copy_from_slice(&h[..n]);
            d
        })
        .collect();
    Ok(DesiredPressure {
        signals,
        l_ref,
        delay,
    })
}

/// `r = sum_m H_m^T d_m` over the bright mics.
pub fn cross_vector(
    set: &IrSet,
    pos: PositionId,
    desired: &DesiredPressure,
    filter_len: usize,
) -> Result<DVector<f64>> {
    set.check_position(pos)?;
    let rows = set.ir_length() + filter_len - 1;
    if desired.signals.len() != set.mic_count(MicGroup::Bright)
        || desired.signals.iter().any(|d| d.len() != rows)
    {
        return Err(Error::invalid("desired pressure does not match the IR set and J"));
    }
    let l_count = set.num_loudspeakers();
    let mut r = DVector::zeros(l_count * filter_len);
    for (m, d) in desired.signals.iter().enumerate() {
        for l in 0..l_count {
            let h = ConvolutionMatrix::new(set.ir(pos, MicGroup::Bright, m, l), filter_len)?;
            for (j, v) in h.apply_transpose(d).into_iter().enumerate() {
                r[l * filter_len + j] += v;
            }
        }
    }
    Ok(r)
}

fn check_square(c: &ZoneCovariance, n: usize) -> Result<()> {
    if c.matrix.nrows() != n || c.matrix.ncols() != n {
        return Err(Error::invalid(format!(
            "covariance is {}x{}, expected {n}x{n}",
            c.matrix.nrows(),
            c.matrix.ncols()
        )));
    }
    Ok(())
}

fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves the SPD system `a x = b`, with up to two steps of iterative refinement.
fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = a.clone().cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "{what} system is not positive definite (condition estimate {:.3e})",
            condition_estimate(a)
        ))
    })?;
    let mut x = chol.solve(b);
    let b_norm = b.norm();
    for _ in 0..2 {
        let res = b - a * &x;
        if res.norm() <= REFINE_TOL * b_norm {
            break;
        }
        x += chol.solve(&res);
    }
    Ok(x)
}

/// Weighted pressure matching: solves
/// `((1-zeta) R_B + zeta R_D + lambda I) q = (1-zeta) r`.
pub fn design_pm(
    r_bright: &ZoneCovariance,
    r_dark: &ZoneCovariance,
    cross: &DVector<f64>,
    zeta: f64,
    lambda: f64,
) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::invalid("zeta must lie in [0, 1]"));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    let n = cross.len();
    check_square(r_bright, n)?;
    check_square(r_dark, n)?;
    let mut a = &r_bright.matrix * (1.0 - zeta) + &r_dark.matrix * zeta;
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    spd_solve(&a, &(cross * (1.0 - zeta)), "pressure-matching")
}

/// Principal generalized eigenpair of `(R_B, R_D + lambda I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AccSolution {
    /// Scaled so that `q^T R_B q` equals the requested power target.
    pub q: DVector<f64>,
    /// Largest generalized eigenvalue (the regularized contrast of `q`).
    pub eigenvalue: f64,
}

/// Acoustic contrast control. `R_D + lambda I = C C^T` is factored, the
/// whitened problem `C^-1 R_B C^-T v = mu v` solved, and `q = C^-T v`
/// rescaled to `q^T R_B q = power_target` with its largest-magnitude entry
/// made positive.
pub fn design_acc(
    r_bright: &ZoneCovariance,
    r_dark: &ZoneCovariance,
    lambda: f64,
    power_target: f64,
) -> Result<AccSolution> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid("lambda must be positive"));
    }
    if !(power_target.is_finite() && power_target >= 0.0) {
        return Err(Error::invalid("power target must be finite and non-negative"));
    }
    let n = r_bright.matrix.nrows();
    check_square(r_bright, n)?;
    check_square(r_dark, n)?;
    let mut a = r_dark.matrix.clone();
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    let chol = a.clone().cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "regularized dark covariance is not positive definite (condition estimate {:.3e})",
            condition_estimate(&a)
        ))
    })?;
    let c = chol.l();
    let half = c
        .solve_lower_triangular(&r_bright.matrix)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut whitened = c
        .solve_lower_triangular(&half.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    whitened = (&whitened + whitened.transpose()) * 0.5;

    let eig = SymmetricEigen::try_new(whitened, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut best = 0;
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v > eig.eigenvalues[best] {
            best = i;
        }
    }
    let v = eig.eigenvectors.column(best).into_owned();
    let mut q = c
        .transpose()
        .solve_upper_triangular(&v)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;

    let bright_power = q.dot(&(&r_bright.matrix * &q));
    if power_target > 0.0 {
        if bright_power.is_nan() || bright_power <= 0.0 {
            return Err(Error::Numerical(
                "principal eigenvector radiates no bright-zone energy".into(),
            ));
        }
        q *= (power_target / bright_power).sqrt();
    } else {
        q.fill(0.0);
    }
    fix_sign(&mut q);
    let denom = q.dot(&(&a * &q));
    let eigenvalue = if denom > 0.0 {
        q.dot(&(&r_bright.matrix * &q)) / denom
    } else {
        eig.eigenvalues[best]
    };
    Ok(AccSolution { q, eigenvalue })
}

/// Makes the first largest-magnitude entry positive.
fn fix_sign(q: &mut DVector<f64>) {
    let mut idx = 0;
    for (i, v) in q.iter().enumerate() {
        if v.abs() > q[idx].abs() {
            idx = i;
        }
    }
    if !q.is_empty() && q[idx] < 0.0 {
        q.neg_mut();
    }
}

/// `q^T R_B q / q^T (R_D + lambda I) q`.
pub fn regularized_contrast(
    r_bright: &ZoneCovariance,
    r_dark: &ZoneCovariance,
    lambda: f64,
    q: &DVector<f64>,
) -> f64 {
    let num = q.dot(&(&r_bright.matrix * q));
    let den = q.dot(&(&r_dark.matrix * q)) + lambda * q.norm_squared();
    num / den
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterTag {
    Position(PositionId),
    Mix,
}

/// `L` control filters of length `J`, stored stacked.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlFilterSet {
    coefficients: Vec<f64>,
    num_loudspeakers: usize,
    pub method: Method,
    pub tag: FilterTag,
    pub params: DesignParams,
    /// Generalized eigenvalue for ACC designs.
    pub eigenvalue: Option<f64>,
}

impl ControlFilterSet {
    pub fn new(
        coefficients: Vec<f64>,
        num_loudspeakers: usize,
        method: Method,
        tag: FilterTag,
        params: DesignParams,
    ) -> Result<Self> {
        if num_loudspeakers == 0 || coefficients.len() != num_loudspeakers * params.filter_len {
            return Err(Error::invalid(format!(
                "filter set has {} coefficients, expected L*J = {}*{}",
                coefficients.len(),
                num_loudspeakers,
                params.filter_len
            )));
        }
        if !coefficients.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("non-finite filter coefficient"));
        }
        Ok(ControlFilterSet {
            coefficients,
            num_loudspeakers,
            method,
            tag,
            params,
            eigenvalue: None,
        })
    }

    /// Unit impulse on every loudspeaker; handy for pass-through runs.
    pub fn identity(num_loudspeakers: usize, params: DesignParams) -> Self {
        let j = params.filter_len;
        let mut c = vec![0.0; num_loudspeakers * j];
        for l in 0..num_loudspeakers {
            c[l * j] = 1.0;
        }
        ControlFilterSet::new(c, num_loudspeakers, Method::Pm, FilterTag::Mix, params)
            .expect("identity filters are valid")
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    pub fn filter(&self, l: usize) -> &[f64] {
        let j = self.params.filter_len;
        &self.coefficients[l * j..(l + 1) * j]
    }

    pub fn num_loudspeakers(&self) -> usize {
        self.num_loudspeakers
    }

    pub fn filter_len(&self) -> usize {
        self.params.filter_len
    }
}

/// Everything a per-position design needs, computed from one IR set.
#[derive(Clone, Debug)]
pub struct PositionDesignData {
    pub r_bright: ZoneCovariance,
    pub r_dark: ZoneCovariance,
    pub cross: DVector<f64>,
    /// `||d_B||^2`, the ACC power target.
    pub desired_energy: f64,
}

impl PositionDesignData {
    pub fn compute(set: &IrSet, pos: PositionId, params: &DesignParams) -> Result<Self> {
        params.validate(set.num_loudspeakers())?;
        let j = params.filter_len;
        let desired = desired_pressure(set, pos, params.l_ref, params.delay, j)?;
        Ok(PositionDesignData {
            r_bright: zone_covariance(set, pos, MicGroup::Bright, j)?,
            r_dark: zone_covariance(set, pos, MicGroup::Dark, j)?,
            cross: cross_vector(set, pos, &desired, j)?,
            desired_energy: desired.energy(),
        })
    }
}

fn design_from_data(
    data: &PositionDesignData,
    method: Method,
    params: &DesignParams,
    num_loudspeakers: usize,
    tag: FilterTag,
) -> Result<ControlFilterSet> {
    let (q, eigenvalue) = match method {
        Method::Pm => (
            design_pm(&data.r_bright, &data.r_dark, &data.cross, params.zeta, params.lambda)?,
            None,
        ),
        Method::Acc => {
            let sol = design_acc(&data.r_bright, &data.r_dark, params.lambda, data.desired_energy)?;
            (sol.q, Some(sol.eigenvalue))
        }
    };
    let mut set = ControlFilterSet::new(q.as_slice().to_vec(), num_loudspeakers, method, tag, *params)?;
    set.eigenvalue = eigenvalue;
    Ok(set)
}

/// The optimal filter set for a single listener position.
pub fn design_position(
    set: &IrSet,
    pos: PositionId,
    method: Method,
    params: &DesignParams,
) -> Result<ControlFilterSet> {
    let data = PositionDesignData::compute(set, pos, params)?;
    design_from_data(&data, method, params, set.num_loudspeakers(), FilterTag::Position(pos))
}

/// One filter set designed on position-averaged covariances (and, for PM,
/// averaged cross vectors; for ACC, the averaged power target).
pub fn design_mix(
    data: &[PositionDesignData],
    method: Method,
    params: &DesignParams,
    num_loudspeakers: usize,
) -> Result<ControlFilterSet> {
    if data.is_empty() {
        return Err(Error::invalid("mix design needs at least one position"));
    }
    let s = data.len() as f64;
    let r_bright = mean_covariance(&data.iter().map(|d| &d.r_bright).collect::<Vec<_>>())?;
    let r_dark = mean_covariance(&data.iter().map(|d| &d.r_dark).collect::<Vec<_>>())?;
    let mut cross = DVector::zeros(data[0].cross.len());
    let mut energy = 0.0;
    for d in data {
        if d.cross.len() != cross.len() {
            return Err(Error::invalid("cross vectors disagree in length"));
        }
        cross += &d.cross;
        energy += d.desired_energy;
    }
    let mixed = PositionDesignData {
        r_bright,
        r_dark,
        cross: cross / s,
        desired_energy: energy / s,
    };
    design_from_data(&mixed, method, params, num_loudspeakers, FilterTag::Mix)
}

/// Per-position filter bank, indexed densely by the IR set's positions.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterDictionary {
    method: Method,
    params: DesignParams,
    entries: Vec<ControlFilterSet>,
    original_ids: Vec<PositionId>,
}

impl FilterDictionary {
    pub fn new(
        method: Method,
        params: DesignParams,
        entries: Vec<ControlFilterSet>,
        original_ids: Vec<PositionId>,
    ) -> Result<Self> {
        if entries.is_empty() || entries.len() != original_ids.len() {
            return Err(Error::invalid("dictionary needs one original id per entry"));
        }
        let l = entries[0].num_loudspeakers();
        if entries
            .iter()
            .any(|e| e.num_loudspeakers() != l || e.filter_len() != params.filter_len)
        {
            return Err(Error::invalid("dictionary entries disagree in (L, J)"));
        }
        Ok(FilterDictionary {
            method,
            params,
            entries,
            original_ids,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn params(&self) -> &DesignParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_loudspeakers(&self) -> usize {
        self.entries[0].num_loudspeakers()
    }

    pub fn entries(&self) -> &[ControlFilterSet] {
        &self.entries
    }

    pub fn original_ids(&self) -> &[PositionId] {
        &self.original_ids
    }

    pub fn get(&self, pos: PositionId) -> Result<&ControlFilterSet> {
        self.entries
            .get(pos.0)
            .ok_or_else(|| Error::invalid(format!("no dictionary entry for position {}", pos.0)))
    }
}

/// The observation-mic IRs of a dictionary's positions. Shares the IR set
/// rather than copying it.
#[derive(Clone, Debug)]
pub struct ObservationIrs {
    set: Arc<IrSet>,
}

impl ObservationIrs {
    pub fn new(set: Arc<IrSet>) -> Self {
        ObservationIrs { set }
    }

    pub fn num_positions(&self) -> usize {
        self.set.num_positions()
    }

    pub fn num_mics(&self) -> usize {
        self.set.mic_count(MicGroup::Observation)
    }

    pub fn num_loudspeakers(&self) -> usize {
        self.set.num_loudspeakers()
    }

    pub fn ir_length(&self) -> usize {
        self.set.ir_length()
    }

    pub fn ir(&self, pos: PositionId, mic: usize, ls: usize) -> &[f64] {
        self.set.ir(pos, MicGroup::Observation, mic, ls)
    }

    pub fn irset(&self) -> &Arc<IrSet> {
        &self.set
    }
}

/// Filter dictionary and Mix Data filter of one IR set.
#[derive(Clone, Debug)]
pub struct DesignBank {
    pub dictionary: FilterDictionary,
    pub mix: ControlFilterSet,
    pub observation: ObservationIrs,
}

/// Designs one filter set per position plus the mix filter over all of them.
pub fn build_dictionaries(set: &Arc<IrSet>, method: Method, params: &DesignParams) -> Result<DesignBank> {
    params.validate(set.num_loudspeakers())?;
    let l = set.num_loudspeakers();
    let mut entries = Vec::with_capacity(set.num_positions());
    let mut data = Vec::with_capacity(set.num_positions());
    for pos in set.positions() {
        let d = PositionDesignData::compute(set, pos, params)?;
        entries.push(design_from_data(&d, method, params, l, FilterTag::Position(pos))?);
        data.push(d);
    }
    let mix = design_mix(&data, method, params, l)?;
    let dictionary = FilterDictionary::new(method, *params, entries, set.original_ids())?;
    Ok(DesignBank {
        dictionary,
        mix,
        observation: ObservationIrs::new(Arc::clone(set)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irdata::{GridPoint, Manifest, MicCounts, SCHEMA_VERSION};

    fn cov(m: DMatrix<f64>, zone: MicGroup) -> ZoneCovariance {
        ZoneCovariance {
            matrix: m,
            zone,
            position: None,
        }
    }

    fn delta_set(k: usize) -> IrSet {
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            sample_rate_hz: 8000,
            ir_length: k,
            num_loudspeakers: 1,
            mics: MicCounts {
                bright: 1,
                dark: 1,
                observation: 1,
            },
            grid: vec![GridPoint {
                id: PositionId(0),
                x: 0.0,
                y: 0.0,
                z: 0.0,
                original_id: None,
            }],
        };
        IrSet::from_fn(manifest, |_, _, _, _| {
            let mut h = vec![0.0; k];
            h[0] = 1.0;
            Ok(h)
        })
        .unwrap()
    }

    #[test]
    fn delta_conv_matrix_pads() {
        let h = ConvolutionMatrix::new(&[1.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(h.apply(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0, 0.0, 0.0]);
        assert_eq!(h.rows(), 5);
        let h = ConvolutionMatrix::new(&[1.0, 1.0], 2).unwrap();
        assert_eq!(h.apply(&[1.0, -1.0]), vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn transpose_is_adjoint() {
        let h = ConvolutionMatrix::new(&[0.5, -1.0, 2.0, 0.25], 3).unwrap();
        let dense = h.to_dense();
        let p: Vec<f64> = (0..6).map(|i| (i as f64 * 0.7).sin()).collect();
        let via_dense = dense.transpose() * DVector::from_column_slice(&p);
        for (a, b) in h.apply_transpose(&p).iter().zip(via_dense.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn delta_covariance_is_identity() {
        let set = delta_set(1);
        let r = zone_covariance(&set, PositionId(0), MicGroup::Bright, 2).unwrap();
        assert_eq!(r.matrix, DMatrix::identity(2, 2));
        assert!(zone_covariance(&set, PositionId(0), MicGroup::Observation, 2).is_err());
    }

    #[test]
    fn zero_irs_give_zero_covariance() {
        let set = delta_set(3);
        let zero = IrSet::from_fn(set.manifest().clone(), |_, _, _, _| Ok(vec![0.0; 3])).unwrap();
        let r = zone_covariance(&zero, PositionId(0), MicGroup::Dark, 4).unwrap();
        assert!(r.matrix.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn desired_pressure_shifts() {
        let manifest = delta_set(4).manifest().clone();
        let set = IrSet::from_fn(manifest, |_, _, _, _| Ok(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        let d = desired_pressure(&set, PositionId(0), 0, 3, 4).unwrap();
        assert_eq!(d.signals[0], vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
        let d0 = desired_pressure(&set, PositionId(0), 0, 0, 4).unwrap();
        assert_eq!(d0.signals[0], vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0]);
        assert_eq!(d0.energy(), d.energy());
        assert!(desired_pressure(&set, PositionId(0), 0, 4, 4).is_err());
        assert!(desired_pressure(&set, PositionId(0), 1, 0, 4).is_err());
    }

    #[test]
    fn delta_cross_vector() {
        let set = delta_set(1);
        let d = desired_pressure(&set, PositionId(0), 0, 0, 2).unwrap();
        let r = cross_vector(&set, PositionId(0), &d, 2).unwrap();
        assert_eq!(r.as_slice(), &[1.0, 0.0]);
        let zero = DesiredPressure {
            signals: vec![vec![0.0; 2]],
            l_ref: 0,
            delay: 0,
        };
        assert!(cross_vector(&set, PositionId(0), &zero, 2).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pm_degenerate_cases() {
        let rb = cov(DMatrix::from_diagonal_element(3, 3, 2.0), MicGroup::Bright);
        let rd = cov(DMatrix::identity(3, 3), MicGroup::Dark);
        let r = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert!(design_pm(&rb, &rd, &r, 1.0, 1e-5).unwrap().iter().all(|&x| x == 0.0));
        let zero = DVector::zeros(3);
        assert!(design_pm(&rb, &rd, &zero, 0.5, 1e-5).unwrap().iter().all(|&x| x == 0.0));
        assert!(design_pm(&rb, &rd, &r, 1.5, 1e-5).is_err());
        assert!(design_pm(&rb, &rd, &r, 0.5, 0.0).is_err());
    }

    #[test]
    fn pm_reports_indefinite_system() {
        let rb = cov(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -10.0])), MicGroup::Bright);
        let rd = cov(DMatrix::zeros(2, 2), MicGroup::Dark);
        let err = design_pm(&rb, &rd, &DVector::from_vec(vec![1.0, 1.0]), 0.0, 1e-5).unwrap_err();
        assert!(matches!(err, Error::Numerical(ref m) if m.contains("condition estimate")));
    }

    #[test]
    fn acc_diagonal_case() {
        let rb = cov(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])), MicGroup::Bright);
        let rd = cov(DMatrix::identity(2, 2), MicGroup::Dark);
        let sol = design_acc(&rb, &rd, 1e-12, 2.0).unwrap();
        assert!((sol.q[0] - 1.0).abs() < 1e-9 && sol.q[1].abs() < 1e-9);
        assert!((sol.eigenvalue - 2.0).abs() < 1e-9);
    }

    #[test]
    fn acc_degenerate_is_deterministic() {
        let rb = cov(DMatrix::identity(3, 3), MicGroup::Bright);
        let rd = cov(DMatrix::identity(3, 3), MicGroup::Dark);
        let a = design_acc(&rb, &rd, 1e-6, 1.0).unwrap();
        let b = design_acc(&rb, &rd, 1e-6, 1.0).unwrap();
        assert_eq!(a, b);
        let idx = a.q.iamax();
        assert!(a.q[idx] > 0.0);
        assert!((a.q.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mix_of_one_equals_position_design() {
        let set = Arc::new(delta_set(4));
        let params = DesignParams {
            lambda: 1e-3,
            zeta: 0.5,
            l_ref: 0,
            delay: 1,
            filter_len: 3,
        };
        let data = PositionDesignData::compute(&set, PositionId(0), &params).unwrap();
        for method in [Method::Acc, Method::Pm] {
            let single = design_position(&set, PositionId(0), method, &params).unwrap();
            let mix = design_mix(std::slice::from_ref(&data), method, &params, 1).unwrap();
            assert_eq!(single.coefficients(), mix.coefficients());
            let twice = design_mix(&[data.clone(), data.clone()], method, &params, 1).unwrap();
            for (a, b) in single.coefficients().iter().zip(twice.coefficients()) {
                assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            }
        }
        assert!(design_mix(&[], Method::Pm, &params, 1).is_err());
    }

    #[test]
    fn params_validation() {
        let p = DesignParams::desk();
        assert!(p.validate(3).is_ok());
        assert!(p.validate(1).is_err());
        assert!(DesignParams { delay: 32, ..p }.validate(3).is_err());
        assert!(DesignParams { zeta: -0.1, ..p }.validate(3).is_err());
        assert!(DesignParams::full_scale().validate(12).is_ok());
    }
}
