//! Exact-in-distribution sampling of the truncated mode expansion
//! u(t) = Σ_{k≤K} Y_k(t) φ_k.
//!
//! Each mode (Y_k, Ẏ_k) is a Gaussian Markov process with the transition
//! law of [`mode_transition`]; there is no time-discretisation error.

use std::io::Write;
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{bail, Result};
use crate::kernel::{integral_v2, kernel_v, mode_transition, WaveParams};
use crate::quadrature::integrate;
use crate::spectrum::Spectrum;

/// Transition mean Φ and a factor F with F Fᵀ = Q.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLaw {
    pub h: f64,
    pub phi: [[f64; 2]; 2],
    pub factor: [[f64; 2]; 2],
}

/// Cholesky of a 2×2 covariance, pivoting on the larger diagonal entry.
pub fn noise_factor(q: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let (a, b, c) = (q[0][0], q[0][1], q[1][1]);
    let scale = a.abs() + c.abs();
    if scale == 0.0 {
        return Ok([[0.0; 2]; 2]);
    }
    if a < -1e-14 * scale || c < -1e-14 * scale {
        bail!(Structural, "noise covariance has a negative variance: {q:?}");
    }
    let tol = 1e-12 * scale * scale;
    if a >= c {
        let l11 = a.max(0.0).sqrt();
        let l21 = b / l11;
        let r = c - l21 * l21;
        if r * a < -tol {
            bail!(Structural, "noise covariance is not positive semi-definite: {q:?}");
        }
        Ok([[l11, 0.0], [l21, r.max(0.0).sqrt()]])
    } else {
        let l22 = c.max(0.0).sqrt();
        let l12 = b / l22;
        let r = a - l12 * l12;
        if r * c < -tol {
            bail!(Structural, "noise covariance is not positive semi-definite: {q:?}");
        }
        Ok([[r.max(0.0).sqrt(), l12], [0.0, l22]])
    }
}

pub fn step_law(p: &WaveParams, h: f64) -> Result<StepLaw> {
    let tr = mode_transition(p, h)?;
    Ok(StepLaw {
        h,
        phi: tr.phi,
        factor: noise_factor(&tr.q)?,
    })
}

pub fn step_laws(params: &[WaveParams], h: f64) -> Result<Vec<StepLaw>> {
    params.par_iter().map(|p| step_law(p, h)).collect()
}

/// Mixes a replica index into a master seed (SplitMix64 finaliser).
pub fn replica_seed(seed: u64, replica: u64) -> u64 {
    let mut z = seed ^ replica.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Two standard normals for (mode, step): ChaCha20 keyed by the seed, stream
/// = mode, counter = step. Exactly two 64-bit words are consumed per call.
fn normal_pair(key: &[u8; 32], mode: u64, step: u64) -> (f64, f64) {
    let mut rng = ChaCha20Rng::from_seed(*key);
    rng.set_stream(mode);
    rng.set_word_pos(u128::from(step) * 4);
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

fn key_from_seed(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&replica_seed(seed, i as u64).to_le_bytes());
    }
    key
}

/// Mode amplitudes (Y_k, Ẏ_k) without spatial data.
#[derive(Clone, Debug)]
pub struct ModeChain {
    t: f64,
    step: u64,
    params: Vec<WaveParams>,
    y: Vec<[f64; 2]>,
    key: [u8; 32],
    noise: bool,
}

impl ModeChain {
    /// Negative eigenvalues within round-off of zero are clamped to zero.
    pub fn new(eigenvalues: &[f64], beta: f64, seed: u64, initial: Option<&[[f64; 2]]>) -> Result<Self> {
        let params = eigenvalues
            .iter()
            .map(|&l| {
                if l < -1e-8 * (1.0 + eigenvalues.last().copied().unwrap_or(0.0).abs()) {
                    bail!(Validation, "negative eigenvalue {l}");
                }
                WaveParams::new(beta, l.max(0.0))
            })
            .collect::<Result<Vec<_>>>()?;
        let y = match initial {
            None => vec![[0.0; 2]; params.len()],
            Some(init) if init.len() == params.len() => init.to_vec(),
            Some(init) => bail!(
                Validation,
                "initial data has {} modes, expected {}",
                init.len(),
                params.len()
            ),
        };
        Ok(ModeChain {
            t: 0.0,
            step: 0,
            params,
            y,
            key: key_from_seed(seed),
            noise: true,
        })
    }

    /// Deterministic evolution (Q treated as 0); for testing the mean dynamics.
    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn modes(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[WaveParams] {
        &self.params
    }

    pub fn amplitudes(&self) -> &[[f64; 2]] {
        &self.y
    }

    pub fn advance(&mut self, h: f64) -> Result<()> {
        let laws = step_laws(&self.params, h)?;
        self.advance_with(&laws)
    }

    /// Applies precomputed laws (one per mode, all with the same step).
    pub fn advance_with(&mut self, laws: &[StepLaw]) -> Result<()> {
        if laws.len() != self.y.len() {
            bail!(Validation, "{} step laws for {} modes", laws.len(), self.y.len());
        }
        let h = laws.first().map_or(0.0, |l| l.h);
        if !(h > 0.0) || laws.iter().any(|l| l.h != h) {
            bail!(Validation, "step laws must share one positive step");
        }
        let (key, step, noise) = (&self.key, self.step, self.noise);
        let update = |(k, (y, law)): (usize, (&mut [f64; 2], &StepLaw))| {
            let (p, f) = (&law.phi, &law.factor);
            let mean = [
                p[0][0] * y[0] + p[0][1] * y[1],
                p[1][0] * y[0] + p[1][1] * y[1],
            ];
            let (z0, z1) = if noise { normal_pair(key, k as u64, step) } else { (0.0, 0.0) };
            *y = [
                mean[0] + f[0][0] * z0 + f[0][1] * z1,
                mean[1] + f[1][0] * z0 + f[1][1] * z1,
            ];
        };
        if self.y.len() >= 256 {
            self.y.par_iter_mut().zip(laws).enumerate().for_each(update);
        } else {
            self.y.iter_mut().zip(laws).enumerate().for_each(update);
        }
        self.t += h;
        self.step += 1;
        Ok(())
    }
}

/// Replica sums of Y_k, Y_jY_k and (Y_jY_k)² at one time; K×K arrays are
/// row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleMoments {
    pub t: f64,
    pub replicas: usize,
    pub modes: usize,
    sum: Vec<f64>,
    cross: Vec<f64>,
    cross_sq: Vec<f64>,
}

impl EnsembleMoments {
    fn new(t: f64, modes: usize) -> Self {
        EnsembleMoments {
            t,
            replicas: 0,
            modes,
            sum: vec![0.0; modes],
            cross: vec![0.0; modes * modes],
            cross_sq: vec![0.0; modes * modes],
        }
    }

    fn record(&mut self, y: &[[f64; 2]]) {
        self.replicas += 1;
        let k = self.modes;
        for j in 0..k {
            self.sum[j] += y[j][0];
            for i in j..k {
                let p = y[j][0] * y[i][0];
                self.cross[j * k + i] += p;
                self.cross_sq[j * k + i] += p * p;
            }
        }
    }

    fn merge(&mut self, other: &Self) {
        self.replicas += other.replicas;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
        for (a, b) in self.cross_sq.iter_mut().zip(&other.cross_sq) {
            *a += b;
        }
    }

    /// Sample mean of Y_k and its standard error.
    pub fn mean(&self, k: usize) -> (f64, f64) {
        let n = self.replicas as f64;
        let m = self.sum[k] / n;
        let var = (self.cross[k * self.modes + k] / n - m * m) * n / (n - 1.0);
        (m, (var / n).sqrt())
    }

    /// Estimate of E[Y_jY_k] (both modes centred) and its standard error.
    pub fn second_moment(&self, j: usize, k: usize) -> (f64, f64) {
        let (j, k) = (j.min(k), j.max(k));
        let n = self.replicas as f64;
        let idx = j * self.modes + k;
        let m = self.cross[idx] / n;
        let var = (self.cross_sq[idx] / n - m * m) * n / (n - 1.0);
        (m, (var / n).sqrt())
    }
}

const ENSEMBLE_CHUNK: u64 = 1024;

/// Runs `replicas` independent chains from zero and accumulates moments at
/// each output time. Replica r uses seed `replica_seed(seed, r)`; chunks are
/// merged in a fixed order, so results do not depend on the thread count.
pub fn mode_ensemble(
    eigenvalues: &[f64],
    beta: f64,
    seed: u64,
    times: &[f64],
    replicas: u64,
) -> Result<Vec<EnsembleMoments>> {
    if replicas < 2 {
        bail!(Validation, "an ensemble needs at least 2 replicas");
    }
    if times.is_empty() || !(times[0] > 0.0) || times.windows(2).any(|w| w[0] >= w[1]) {
        bail!(Validation, "output times must be positive and strictly increasing");
    }
    let template = ModeChain::new(eigenvalues, beta, 0, None)?;
    let mut prev = 0.0;
    let mut laws = Vec::with_capacity(times.len());
    for &t in times {
        laws.push(step_laws(template.params(), t - prev)?);
        prev = t;
    }
    let k = eigenvalues.len();
    let chunks: Vec<u64> = (0..replicas.div_ceil(ENSEMBLE_CHUNK)).collect();
    let partial: Vec<Vec<EnsembleMoments>> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc: Vec<EnsembleMoments> = times.iter().map(|&t| EnsembleMoments::new(t, k)).collect();
            for r in c * ENSEMBLE_CHUNK..((c + 1) * ENSEMBLE_CHUNK).min(replicas) {
                let mut chain = template.clone();
                chain.key = key_from_seed(replica_seed(seed, r));
                for (law, m) in laws.iter().zip(acc.iter_mut()) {
                    chain.advance_with(law)?;
                    m.record(chain.amplitudes());
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total: Vec<EnsembleMoments> = times.iter().map(|&t| EnsembleMoments::new(t, k)).collect();
    for part in &partial {
        for (a, b) in total.iter_mut().zip(part) {
            a.merge(b);
        }
    }
    Ok(total)
}

/// Simulation state bound to a spectrum.
#[derive(Clone, Debug)]
pub struct SimulationState {
    pub chain: ModeChain,
    pub spectrum: Arc<Spectrum>,
    pub beta: f64,
    pub seed: u64,
}

pub fn init_simulation(
    spectrum: Arc<Spectrum>,
    beta: f64,
    modes: usize,
    seed: u64,
    initial: Option<&[[f64; 2]]>,
) -> Result<SimulationState> {
    if modes == 0 || modes > spectrum.len() {
        bail!(Validation, "mode count {modes} outside 1..={}", spectrum.len());
    }
    let chain = ModeChain::new(&spectrum.eigenvalues[..modes], beta, seed, initial)?;
    Ok(SimulationState {
        chain,
        spectrum,
        beta,
        seed,
    })
}

pub fn advance(state: &mut SimulationState, h: f64) -> Result<()> {
    state.chain.advance(h)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldSample {
    pub t: f64,
    pub vertices: Vec<usize>,
    pub values: Vec<f64>,
}

fn assemble(state: &SimulationState, vertices: &[usize], component: usize) -> Result<FieldSample> {
    let sp = &state.spectrum;
    let y = state.chain.amplitudes();
    let values = vertices
        .iter()
        .map(|&v| {
            Ok(match sp.row_of(v)? {
                None => 0.0,
                Some(r) => y.iter().enumerate().map(|(k, yk)| yk[component] * sp.vectors[(r, k)]).sum(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(FieldSample {
        t: state.chain.time(),
        vertices: vertices.to_vec(),
        values,
    })
}

/// u(t, x) = Σ_{k≤K} Y_k φ_k(x); pinned vertices give exactly 0.
pub fn field_at(state: &SimulationState, vertices: &[usize]) -> Result<FieldSample> {
    assemble(state, vertices, 0)
}

/// Mode-truncated velocity Σ_{k≤K} Ẏ_k φ_k(x).
pub fn velocity_at(state: &SimulationState, vertices: &[usize]) -> Result<FieldSample> {
    assemble(state, vertices, 1)
}

/// Rows `t,vertex_id,u`.
pub fn write_trajectory_csv<W: Write>(samples: &[FieldSample], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,vertex_id,u")?;
    for s in samples {
        for (v, u) in s.vertices.iter().zip(&s.values) {
            writeln!(out, "{},{v},{u:e}", s.t)?;
        }
    }
    Ok(())
}

/// E[(Y(s+t) − Y(s))²] from zero data at time 0.
///
/// By the Markov property at time s this equals aᵀQ(s)a + Q₁₁(t) with
/// a = (Φ₁₁(t) − 1, Φ₁₂(t)).
pub fn increment_variance(p: &WaveParams, s: f64, t: f64) -> Result<f64> {
    Ok(increment_variances(p, s, &[t])?[0])
}

/// [`increment_variance`] for several lags sharing one base time.
pub fn increment_variances(p: &WaveParams, s: f64, lags: &[f64]) -> Result<Vec<f64>> {
    if !(s.is_finite() && s >= 0.0) || lags.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        bail!(Validation, "times must be finite and non-negative (s = {s}, lags = {lags:?})");
    }
    let q = if s > 0.0 { Some(mode_transition(p, s)?.q) } else { None };
    lags.iter()
        .map(|&t| {
            if t == 0.0 {
                return Ok(0.0);
            }
            let lag = mode_transition(p, t)?;
            let Some(q) = q else {
                return Ok(lag.q[0][0]);
            };
            let a = [lag.phi11_minus_one, lag.phi[0][1]];
            let quad = a[0] * a[0] * q[0][0] + 2.0 * a[0] * a[1] * q[0][1] + a[1] * a[1] * q[1][1];
            Ok(quad + lag.q[0][0])
        })
        .collect()
}

/// The defining integral ∫₀ˢ (V(t+r) − V(r))² dr + ∫₀ᵗ V² by quadrature.
pub fn increment_variance_quadrature(p: &WaveParams, s: f64, t: f64) -> Result<f64> {
    if !(s.is_finite() && s >= 0.0 && t.is_finite() && t >= 0.0) {
        bail!(Validation, "times must be finite and non-negative (s = {s}, t = {t})");
    }
    let first = integrate(
        |r| (kernel_v(p, t + r).unwrap_or(f64::NAN) - kernel_v(p, r).unwrap_or(f64::NAN)).powi(2),
        0.0,
        s,
        1e-11,
        0.0,
    )?;
    Ok(first + integral_v2(p, t)?)
}
