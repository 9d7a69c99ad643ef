use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::VectorStepper;
use super::{DynamicsError, IntegratorConfig, Program};
use crate::hilbert::{OperatorMatrix, StateVector};
use crate::model::{Channel, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    pub n: usize,
    pub seed: u64,
    /// Keep the normalized state just before every jump.
    pub record_pre_jump: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    pub channel: Channel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre_jump_state: Option<StateVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOutcome {
    pub stage: String,
    pub label: String,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub seed: u64,
    pub jumps: Vec<JumpRecord>,
    pub outcomes: Vec<MeasurementOutcome>,
    /// Every postselected measurement gave its required outcome. Sampling
    /// stops at the first failed one.
    pub postselected: bool,
    /// Normalized state at the end (or where the trajectory stopped).
    pub final_state: StateVector,
    /// Norm² of the conditional state at the end relative to the last
    /// renormalization.
    pub survival_weight: f64,
}

impl TrajectoryRecord {
    pub fn jumps_on(&self, pred: impl Fn(&Channel) -> bool) -> usize {
        self.jumps.iter().filter(|j| pred(&j.channel)).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub n: usize,
    pub postselected: usize,
    /// Total jumps per channel, in first-seen order across the ensemble.
    pub jumps_per_channel: Vec<(Channel, usize)>,
}

impl TrajectorySummary {
    pub fn from_records(records: &[TrajectoryRecord]) -> Self {
        let mut counts: Vec<(Channel, usize)> = Vec::new();
        for r in records {
            for j in &r.jumps {
                match counts.iter_mut().find(|(c, _)| *c == j.channel) {
                    Some((_, n)) => *n += 1,
                    None => counts.push((j.channel, 1)),
                }
            }
        }
        Self {
            n: records.len(),
            postselected: records.iter().filter(|r| r.postselected).count(),
            jumps_per_channel: counts,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` in an ensemble with base seed `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

struct Prepared<'a> {
    program: &'a Program,
    heffs: Vec<OperatorMatrix>,
    steps: Vec<u64>,
}

impl<'a> Prepared<'a> {
    fn new(program: &'a Program, cfg: &IntegratorConfig) -> Result<Self, DynamicsError> {
        let heffs = program.effective_hamiltonians()?;
        let jump_rate = program.max_jump_rate();
        let steps = program
            .stages
            .iter()
            .zip(&heffs)
            .map(|(s, h)| cfg.steps_for(s.duration, h.max_abs_entry().max(jump_rate)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            program,
            heffs,
            steps,
        })
    }

    fn run(
        &self,
        psi0: &StateVector,
        index: usize,
        seed: u64,
        record_pre_jump: bool,
    ) -> Result<TrajectoryRecord, DynamicsError> {
        let program = self.program;
        program.check_dim(psi0.dim())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lossy = !program.collapse.is_empty();
        let draw = |rng: &mut ChaCha8Rng| if lossy { rng.random::<f64>() } else { 0.0 };
        let mut psi = psi0.normalized()?;
        let mut threshold = draw(&mut rng);
        let mut stepper = VectorStepper::new(psi.dim());
        let mut trial = psi.clone();
        let mut jumps = Vec::new();
        let mut outcomes = Vec::new();
        let mut postselected = true;
        let mut t = 0.0;

        'stages: for ((stage, heff), &steps) in program.stages.iter().zip(&self.heffs).zip(&self.steps) {
            for u in &stage.preparations {
                psi = psi.apply(u);
            }
            let dt = if steps > 0 { stage.duration / steps as f64 } else { 0.0 };
            for _ in 0..steps {
                let mut remaining = dt;
                loop {
                    let n0 = psi.norm_sqr();
                    trial.amplitudes_mut().copy_from_slice(psi.amplitudes());
                    stepper.step(heff, trial.amplitudes_mut(), remaining);
                    let n1 = trial.norm_sqr();
                    if n1 >= threshold {
                        std::mem::swap(&mut psi, &mut trial);
                        t += remaining;
                        break;
                    }
                    let frac = if n0 > n1 { ((n0 - threshold) / (n0 - n1)).clamp(0.0, 1.0) } else { 1.0 };
                    let tau = frac * remaining;
                    trial.amplitudes_mut().copy_from_slice(psi.amplitudes());
                    stepper.step(heff, trial.amplitudes_mut(), tau);
                    std::mem::swap(&mut psi, &mut trial);
                    t += tau;
                    remaining -= tau;
                    self.jump(&mut psi, &mut rng, t, record_pre_jump, &mut jumps)?;
                    threshold = draw(&mut rng);
                    if remaining <= 1e-12 * dt {
                        break;
                    }
                }
            }
            if !psi.is_finite() {
                return Err(DynamicsError::Instability {
                    time: t,
                    what: "non-finite amplitude".into(),
                });
            }
            for m in &stage.measurements {
                let n2 = psi.norm_sqr();
                let u: f64 = rng.random::<f64>() * n2;
                let mut acc = 0.0;
                let mut chosen = m.outcomes.len() - 1;
                for (k, (_, p)) in m.outcomes.iter().enumerate() {
                    acc += psi.expectation(p).re;
                    if u < acc {
                        chosen = k;
                        break;
                    }
                }
                let (outcome, proj) = &m.outcomes[chosen];
                psi = psi.apply(proj);
                psi.normalize()?;
                threshold = draw(&mut rng);
                outcomes.push(MeasurementOutcome {
                    stage: stage.label.clone(),
                    label: m.label.clone(),
                    outcome: *outcome,
                });
                if m.postselect.is_some_and(|want| want != *outcome) {
                    postselected = false;
                    break 'stages;
                }
            }
        }
        let survival_weight = psi.norm_sqr();
        psi.normalize()?;
        Ok(TrajectoryRecord {
            index,
            seed,
            jumps,
            outcomes,
            postselected,
            final_state: psi,
            survival_weight,
        })
    }

    fn jump(
        &self,
        psi: &mut StateVector,
        rng: &mut ChaCha8Rng,
        time: f64,
        record_pre_jump: bool,
        jumps: &mut Vec<JumpRecord>,
    ) -> Result<(), DynamicsError> {
        let images: Vec<StateVector> = self.program.collapse.iter().map(|c| psi.apply(&c.op)).collect();
        let weights: Vec<f64> = images.iter().map(|v| v.norm_sqr()).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            psi.normalize()?;
            return Ok(());
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut k = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let pre_jump_state = if record_pre_jump { Some(psi.normalized()?) } else { None };
        jumps.push(JumpRecord {
            time,
            channel: self.program.collapse[k].channel,
            pre_jump_state,
        });
        let mut next = images.into_iter().nth(k).expect("index in range");
        next.normalize()?;
        *psi = next;
        Ok(())
    }
}

/// One quantum trajectory with the threshold (waiting-time) method.
pub fn run_trajectory(
    program: &Program,
    psi0: &StateVector,
    cfg: &IntegratorConfig,
    seed: u64,
    record_pre_jump: bool,
) -> Result<TrajectoryRecord, DynamicsError> {
    Prepared::new(program, cfg)?.run(psi0, 0, seed, record_pre_jump)
}

/// `opts.n` independent trajectories seeded by [`derive_seed`], returned
/// in index order regardless of scheduling.
pub fn sample_trajectories(
    program: &Program,
    psi0: &StateVector,
    cfg: &IntegratorConfig,
    opts: &TrajectoryOptions,
) -> Result<Vec<TrajectoryRecord>, DynamicsError> {
    let prepared = Prepared::new(program, cfg)?;
    (0..opts.n)
        .into_par_iter()
        .map(|i| prepared.run(psi0, i, derive_seed(opts.seed, i as u64), opts.record_pre_jump))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Stage;
    use crate::hilbert::{ModeId, Polarization, Site};
    use crate::model::CollapseOperator;
    use num_complex::Complex64 as C64;

    fn decay_program(kappa: f64, t: f64) -> Program {
        let a = OperatorMatrix::from_triplets(2, vec![(0, 1, C64::new(kappa.sqrt(), 0.0))]);
        Program {
            dim: 2,
            stages: vec![Stage {
                label: "wait".into(),
                preparations: vec![],
                hamiltonian: OperatorMatrix::zeros(2),
                duration: t,
                measurements: vec![],
            }],
            collapse: vec![CollapseOperator {
                channel: Channel::Cavity(ModeId::new(Site::CavityA, Polarization::L)),
                op: a,
            }],
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }

    #[test]
    fn exponential_waiting_times() {
        let kappa = 1.0;
        let t = 1.0;
        let p = decay_program(kappa, t);
        let excited = StateVector::from_amplitudes(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let opts = TrajectoryOptions { n: 4000, seed: 11, record_pre_jump: false };
        let recs = sample_trajectories(&p, &excited, &IntegratorConfig::default(), &opts).unwrap();
        let jumped = recs.iter().filter(|r| !r.jumps.is_empty()).count() as f64 / opts.n as f64;
        let expect = 1.0 - (-kappa * t).exp();
        let se = (expect * (1.0 - expect) / opts.n as f64).sqrt();
        assert!((jumped - expect).abs() < 4.0 * se, "{jumped} vs {expect}");
        let mean_time: f64 = recs.iter().flat_map(|r| r.jumps.iter().map(|j| j.time)).sum::<f64>()
            / recs.iter().map(|r| r.jumps.len()).sum::<usize>() as f64;
        // truncated exponential mean on [0, t]
        let want = 1.0 / kappa - t * (-kappa * t).exp() / expect;
        assert!((mean_time - want).abs() < 0.03, "{mean_time} vs {want}");
    }

    #[test]
    fn lossless_program_never_jumps() {
        let mut p = decay_program(1.0, 1.0);
        p.collapse.clear();
        let psi = StateVector::from_amplitudes(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let r = run_trajectory(&p, &psi, &IntegratorConfig::default(), 1, false).unwrap();
        assert!(r.jumps.is_empty());
        assert!((r.survival_weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_record() {
        let p = decay_program(2.0, 1.0);
        let psi = StateVector::from_amplitudes(vec![C64::new(0.6, 0.0), C64::new(0.8, 0.0)]);
        let opts = TrajectoryOptions { n: 50, seed: 5, record_pre_jump: true };
        let a = sample_trajectories(&p, &psi, &IntegratorConfig::default(), &opts).unwrap();
        let b = sample_trajectories(&p, &psi, &IntegratorConfig::default(), &opts).unwrap();
        assert_eq!(a, b);
    }
}
