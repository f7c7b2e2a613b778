//! Discrete-time perturbed Wasserstein gradient flow over weighted particles.
//!
//! A particle `theta = (w, u)` in `R^{d+1}` represents the unit `x -> w [u^T x]+`. The measure
//! is `rho = sum_j omega_j delta_{theta_j}`, the objective is
//! `L[rho] = R(int Phi drho) + int V drho` with `R(a) = sum_i log(1 + exp(-y_i a_i))` and
//! `V(theta) = lambda |theta|^2`, and each step combines transport along
//! `v = -grad L'[rho]`, decay of existing mass at rate `sigma`, and injection of fresh
//! mass drawn uniformly from the unit sphere.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::stats::{sigmoid, softplus};
use crate::rng::{tags, Seed};

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    /// `(w, u_1, ..., u_d)`.
    pub theta: DVector<f64>,
    pub weight: f64,
    /// Step at which the particle was created (0 for the initial ensemble).
    pub born: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleEnsemble {
    pub particles: Vec<Particle>,
}

impl ParticleEnsemble {
    /// Equal-weight ensemble from a list of parameter vectors.
    pub fn uniform(thetas: Vec<DVector<f64>>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::Degenerate("ensemble needs at least one particle".into()));
        }
        let w = 1.0 / thetas.len() as f64;
        Ok(ParticleEnsemble {
            particles: thetas.into_iter().map(|theta| Particle { theta, weight: w, born: 0 }).collect(),
        })
    }

    /// `m` particles with i.i.d. `N(0, scale^2)` coordinates in `R^{d+1}` and weight `1/m`.
    pub fn gaussian(m: usize, d: usize, scale: f64, seed: Seed) -> Result<Self> {
        let thetas = (0..m as u64)
            .map(|j| {
                let mut rng = seed.rng_at(tags::WGF_INIT, j);
                DVector::from_fn(d + 1, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        ParticleEnsemble::uniform(thetas)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }
    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }
    pub fn total_mass(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }
    /// `W^2 = sum_j omega_j |theta_j|^2`.
    pub fn second_moment(&self) -> f64 {
        self.particles.iter().map(|p| p.weight * p.theta.norm_squared()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WgfConfig {
    pub sigma: f64,
    pub eta: f64,
    pub lambda: f64,
    pub inject_count: usize,
    pub prune_threshold: f64,
    pub steps: usize,
    /// Upper bound on the number of particles kept after each step. Particles inside the
    /// grace period are never evicted, so the bound can be exceeded by at most
    /// `inject_count * grace_steps` young particles plus the initial ensemble.
    pub max_particles: usize,
    /// Particles younger than this many steps are never evicted by the cap.
    pub grace_steps: usize,
}

impl Default for WgfConfig {
    fn default() -> Self {
        WgfConfig {
            sigma: 1e-4,
            eta: 1e-2,
            lambda: 1e-3,
            inject_count: 8,
            prune_threshold: 0.0,
            steps: 1000,
            max_particles: 100_000,
            grace_steps: 100,
        }
    }
}

impl WgfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !(self.sigma >= 0.0) || self.eta * self.sigma >= 1.0 {
            return Err(Error::Config("need eta > 0, sigma >= 0 and eta * sigma < 1".into()));
        }
        if !(self.lambda >= 0.0) || !(self.prune_threshold >= 0.0) {
            return Err(Error::Config("lambda and prune threshold must be non-negative".into()));
        }
        if self.inject_count == 0 || self.max_particles == 0 {
            return Err(Error::Config("inject_count and max_particles must be positive".into()));
        }
        Ok(())
    }
}

/// Data in the layout the flow needs.
#[derive(Debug, Clone)]
pub struct WgfData {
    xs: Vec<DVector<f64>>,
    ys: Vec<f64>,
    d: usize,
}

impl WgfData {
    pub fn new(data: &Dataset) -> Result<Self> {
        if data.kind() != LabelKind::Binary {
            return Err(Error::Domain("the flow needs binary labels".into()));
        }
        Ok(WgfData { xs: data.examples().iter().map(|e| e.x.clone()).collect(), ys: data.targets(), d: data.d() })
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    fn check(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.d + 1 {
            return Err(Error::Dimension(format!("particle has length {}, expected {}", theta.len(), self.d + 1)));
        }
        Ok(())
    }

    /// `Phi_i(theta) = w [u^T x_i]+` for every example.
    pub fn phi(&self, theta: &DVector<f64>) -> Vec<f64> {
        let w = theta[0];
        let u = theta.rows(1, self.d);
        self.xs.iter().map(|x| w * u.dot(x).max(0.0)).collect()
    }

    /// Constants bounding `|L'[rho](theta)|` on the unit sphere: `M_R = sqrt(n)` bounds
    /// `|grad R|`, `B_Phi = sqrt(sum |x_i|^2) / 2` bounds `|Phi(theta)|` (since `|w||u| <= 1/2`),
    /// and `V = lambda` on the sphere.
    pub fn constants(&self, lambda: f64) -> FlowConstants {
        let m_r = (self.n() as f64).sqrt();
        let b_phi = 0.5 * self.xs.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
        FlowConstants { m_r, b_phi, b_v_upper: lambda, b_v_lower: lambda, b_l: m_r * b_phi + lambda }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConstants {
    pub m_r: f64,
    pub b_phi: f64,
    pub b_v_upper: f64,
    pub b_v_lower: f64,
    pub b_l: f64,
}

/// `R'` evaluated at the aggregate prediction of an ensemble, frozen for one step.
#[derive(Debug, Clone)]
pub struct FrozenField {
    r_prime: Vec<f64>,
    lambda: f64,
}

/// `sum_j omega_j Phi(theta_j)`.
pub fn aggregate(ens: &ParticleEnsemble, data: &WgfData) -> Result<Vec<f64>> {
    let mut a = vec![0.0; data.n()];
    for p in &ens.particles {
        data.check(&p.theta)?;
        if p.weight == 0.0 {
            continue;
        }
        for (ai, ph) in a.iter_mut().zip(data.phi(&p.theta)) {
            *ai += p.weight * ph;
        }
    }
    Ok(a)
}

/// `L[rho]`.
pub fn distributional_loss(ens: &ParticleEnsemble, data: &WgfData, lambda: f64) -> Result<f64> {
    let a = aggregate(ens, data)?;
    let r: f64 = a.iter().zip(&data.ys).map(|(a, y)| softplus(-y * a)).sum();
    Ok(r + lambda * ens.second_moment())
}

impl FrozenField {
    pub fn new(ens: &ParticleEnsemble, data: &WgfData, lambda: f64) -> Result<Self> {
        let a = aggregate(ens, data)?;
        let r_prime = a.iter().zip(&data.ys).map(|(a, y)| -y * sigmoid(-y * a)).collect();
        Ok(FrozenField { r_prime, lambda })
    }

    /// `L'(theta) = <R', Phi(theta)> + V(theta)`.
    pub fn l_prime(&self, data: &WgfData, theta: &DVector<f64>) -> Result<f64> {
        data.check(theta)?;
        let phi = data.phi(theta);
        Ok(self.r_prime.iter().zip(&phi).map(|(r, p)| r * p).sum::<f64>() + self.lambda * theta.norm_squared())
    }

    /// `-grad L'(theta)` with `relu'(0) = 0`.
    pub fn velocity(&self, data: &WgfData, theta: &DVector<f64>) -> Result<DVector<f64>> {
        data.check(theta)?;
        let d = data.d;
        let w = theta[0];
        let u = theta.rows(1, d);
        let mut g = DVector::zeros(d + 1);
        for (x, r) in data.xs.iter().zip(&self.r_prime) {
            let z = u.dot(x);
            if z > 0.0 {
                g[0] += r * z;
                let mut gu = g.rows_mut(1, d);
                gu.axpy(r * w, x, 1.0);
            }
        }
        g.axpy(2.0 * self.lambda, theta, 1.0);
        Ok(-g)
    }
}

/// `L'[rho](theta)` for the current ensemble.
pub fn l_prime(ens: &ParticleEnsemble, data: &WgfData, lambda: f64, theta: &DVector<f64>) -> Result<f64> {
    FrozenField::new(ens, data, lambda)?.l_prime(data, theta)
}

/// `v[rho](theta)` for the current ensemble.
pub fn velocity(ens: &ParticleEnsemble, data: &WgfData, lambda: f64, theta: &DVector<f64>) -> Result<DVector<f64>> {
    FrozenField::new(ens, data, lambda)?.velocity(data, theta)
}

/// Uniform point on the unit sphere in `R^dim`.
pub fn uniform_sphere(dim: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-300 {
            return v / n;
        }
    }
}

/// One step driven by an arbitrary velocity field: transport, decay, injection, pruning and the
/// particle cap. `step_index` names the step for seeding and particle ages.
pub fn step_with<F>(ens: &ParticleEnsemble, velocity: F, dim: usize, cfg: &WgfConfig, seed: Seed, step_index: usize) -> Result<ParticleEnsemble>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    cfg.validate()?;
    let decay = 1.0 - cfg.eta * cfg.sigma;
    let mut next = Vec::with_capacity(ens.len() + cfg.inject_count);
    for p in &ens.particles {
        let v = velocity(&p.theta)?;
        let theta = &p.theta + v * cfg.eta;
        next.push(Particle { theta, weight: p.weight * decay, born: p.born });
    }
    for (j, p) in next.iter().enumerate() {
        if p.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::ParticleNonFinite { index: j });
        }
    }
    if cfg.sigma > 0.0 {
        let mut rng = seed.rng_at(tags::WGF_INJECT, step_index as u64);
        let w = cfg.eta * cfg.sigma / cfg.inject_count as f64;
        for _ in 0..cfg.inject_count {
            next.push(Particle { theta: uniform_sphere(dim, &mut rng), weight: w, born: step_index + 1 });
        }
    }
    let before = next.len();
    if cfg.prune_threshold > 0.0 {
        next.retain(|p| p.weight >= cfg.prune_threshold);
    }
    if next.len() > cfg.max_particles {
        evict(&mut next, cfg, step_index + 1);
    }
    let after: f64 = next.iter().map(|p| p.weight).sum();
    if after <= 0.0 {
        return Err(Error::Degenerate("all particle mass was pruned".into()));
    }
    // Removed mass goes back to the survivors in proportion to their weights; this also
    // absorbs rounding drift so the total stays 1.
    if next.len() < before || (after - 1.0).abs() > 1e-12 {
        let scale = 1.0 / after;
        for p in &mut next {
            p.weight *= scale;
        }
    }
    Ok(ParticleEnsemble { particles: next })
}

/// Drops the particles with the smallest `omega |theta|^2` among those past the grace period
/// until the cap holds (or no old particle remains).
fn evict(ps: &mut Vec<Particle>, cfg: &WgfConfig, now: usize) {
    let excess = ps.len() - cfg.max_particles;
    let mut old: Vec<(f64, usize)> = ps
        .iter()
        .enumerate()
        .filter(|(_, p)| now.saturating_sub(p.born) >= cfg.grace_steps)
        .map(|(j, p)| (p.weight * p.theta.norm_squared(), j))
        .collect();
    old.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut drop = vec![false; ps.len()];
    for &(_, j) in old.iter().take(excess) {
        drop[j] = true;
    }
    let mut k = 0;
    ps.retain(|_| {
        let keep = !drop[k];
        k += 1;
        keep
    });
}

/// One step of the flow on data.
pub fn step(ens: &ParticleEnsemble, data: &WgfData, cfg: &WgfConfig, seed: Seed, step_index: usize) -> Result<ParticleEnsemble> {
    let field = FrozenField::new(ens, data, cfg.lambda)?;
    step_with(ens, |t| field.velocity(data, t), data.d + 1, cfg, seed, step_index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub second_moment: f64,
    pub n_particles: usize,
    pub min_loss: f64,
    pub total_mass: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub ensemble: ParticleEnsemble,
    /// One row per iterate, `steps + 1` rows.
    pub trace: Vec<TraceRow>,
}

/// Runs `cfg.steps` steps and records loss, second moment and particle count at every iterate.
pub fn run(ens0: &ParticleEnsemble, data: &WgfData, cfg: &WgfConfig, seed: Seed) -> Result<RunOutput> {
    cfg.validate()?;
    let mut ens = ens0.clone();
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut min_loss = f64::INFINITY;
    for t in 0..=cfg.steps {
        let loss = distributional_loss(&ens, data, cfg.lambda)?;
        min_loss = min_loss.min(loss);
        trace.push(TraceRow {
            step: t,
            loss,
            second_moment: ens.second_moment(),
            n_particles: ens.len(),
            min_loss,
            total_mass: ens.total_mass(),
        });
        if t < cfg.steps {
            ens = step(&ens, data, cfg, seed, t)?;
        }
    }
    Ok(RunOutput { ensemble: ens, trace })
}

/// Upper bound on `W_t^2` after `t` steps of size `eta`, or `None` when its denominator is
/// not positive: `(L0 + s sigma B_L) / (b_V - s sigma B_L)` with `s = t eta`.
pub fn second_moment_bound(l0: f64, t: usize, cfg: &WgfConfig, c: &FlowConstants) -> Option<f64> {
    let s = t as f64 * cfg.eta;
    let den = c.b_v_lower - s * cfg.sigma * c.b_l;
    if den > 0.0 {
        Some((l0 + s * cfg.sigma * c.b_l) / den)
    } else {
        None
    }
}

/// Largest permitted increase of the loss over `k` steps: `eta sigma k B_L (W_max^2 + 1) + slack`.
pub fn window_increase_bound(k: usize, w_max_sq: f64, cfg: &WgfConfig, c: &FlowConstants, slack: f64) -> f64 {
    cfg.eta * cfg.sigma * k as f64 * c.b_l * (w_max_sq + 1.0) + slack
}
