use rand::Rng as _;

use crate::error::{Error, Result};
use crate::features::trig_encode;
use crate::plant::Plant;
use crate::seed::Rng;

use super::{Dataset, Provenance, Sample};

/// A static state `(q, Δq)`.
pub type State = (Vec<f64>, Vec<f64>);

/// Smallest increment magnitude in randomly generated states, rad.
pub const DQ_MIN: f64 = 1e-3;
/// Largest increment magnitude in randomly generated states, rad.
pub const DQ_MAX: f64 = 0.05;
/// Default cap on the size of a systematic grid.
pub const GRID_CAP: usize = 2_000_000;

/// Evenly spaced positions per joint (limits included), crossed over all
/// joints, each visited once with `Δq = +dq_mag·1` and once with
/// `Δq = -dq_mag·1`. Size is `2·points^n`.
pub fn systematic_sample_grid(
    limits: &[[f64; 2]],
    points_per_joint: usize,
    dq_mag: f64,
    cap: usize,
) -> Result<Vec<State>> {
    if points_per_joint < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least 2 points per joint, got {points_per_joint}"
        )));
    }
    if !(dq_mag > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "grid increment must be > 0, got {dq_mag}"
        )));
    }
    let n = limits.len();
    let size = 2u128 * (points_per_joint as u128).saturating_pow(n as u32);
    if size > cap as u128 {
        return Err(Error::GridTooLarge { size, cap });
    }
    let axes: Vec<Vec<f64>> = limits
        .iter()
        .map(|&[lo, hi]| {
            let last = (points_per_joint - 1) as f64;
            (0..points_per_joint)
                .map(|k| {
                    if k + 1 == points_per_joint {
                        hi
                    } else {
                        lo + (hi - lo) * k as f64 / last
                    }
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(size as usize);
    let mut index = vec![0usize; n];
    loop {
        let q: Vec<f64> = index.iter().zip(&axes).map(|(&k, ax)| ax[k]).collect();
        out.push((q.clone(), vec![dq_mag; n]));
        out.push((q, vec![-dq_mag; n]));
        // Odometer increment, last joint fastest.
        let mut j = n;
        loop {
            if j == 0 {
                return Ok(out);
            }
            j -= 1;
            index[j] += 1;
            if index[j] < points_per_joint {
                break;
            }
            index[j] = 0;
        }
    }
}

/// Uniform positions within limits; per-joint direction uniform in `{+, -}`
/// with magnitude uniform in `[DQ_MIN, DQ_MAX]`.
pub fn random_sample_states(limits: &[[f64; 2]], count: usize, rng: &mut Rng) -> Result<Vec<State>> {
    if count == 0 {
        return Err(Error::InvalidParameter("state count must be >= 1".into()));
    }
    Ok((0..count)
        .map(|_| {
            let q = limits
                .iter()
                .map(|&[lo, hi]| lo + (hi - lo) * rng.random::<f64>())
                .collect();
            let dq = limits
                .iter()
                .map(|_| {
                    let mag = rng.random_range(DQ_MIN..=DQ_MAX);
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            (q, dq)
        })
        .collect())
}

/// Measures each state on the plant. `x1` encodes the noisy position.
pub fn collect_dataset(p: &Plant, states: &[State], rng: &mut Rng) -> Result<Dataset> {
    let kinds = p.robot.joint_kinds();
    let samples = states
        .iter()
        .map(|(q, dq)| {
            let (q_meas, dq, tau) = p.measure_sample(q, dq, rng)?;
            Ok(Sample {
                x1: trig_encode(&q_meas, &kinds)?,
                x2: dq,
                y: tau,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        provenance: Provenance::System,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::NoiseParams;
    use crate::seed;

    #[test]
    fn grid_sizes() {
        let limits = vec![[-1.0, 1.0]; 6];
        assert_eq!(systematic_sample_grid(&limits, 4, 0.01, GRID_CAP).unwrap().len(), 8192);
        assert_eq!(systematic_sample_grid(&[[0.0, 1.0]], 2, 0.01, GRID_CAP).unwrap().len(), 4);
        assert!(matches!(
            systematic_sample_grid(&limits, 20, 0.01, GRID_CAP),
            Err(Error::GridTooLarge { .. })
        ));
        assert!(systematic_sample_grid(&limits, 1, 0.01, GRID_CAP).is_err());
    }

    #[test]
    fn grid_is_linspace_with_both_directions() {
        let limits = [[-0.3, 0.9], [0.0, 2.0]];
        let g = systematic_sample_grid(&limits, 4, 0.02, GRID_CAP).unwrap();
        for (j, &[lo, hi]) in limits.iter().enumerate() {
            let mut vals: Vec<f64> = g.iter().map(|(q, _)| q[j]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            assert_eq!(vals.len(), 4);
            assert_eq!(vals[0], lo);
            assert_eq!(vals[3], hi);
            let step = (hi - lo) / 3.0;
            for w in vals.windows(2) {
                assert!((w[1] - w[0] - step).abs() < 1e-12);
            }
        }
        for pair in g.chunks(2) {
            assert_eq!(pair[0].0, pair[1].0);
            assert!(pair[0].1.iter().all(|d| *d == 0.02));
            assert!(pair[1].1.iter().all(|d| *d == -0.02));
        }
    }

    #[test]
    fn random_states_respect_bounds() {
        let limits = [[-0.7, 1.1], [2.0, 3.0]];
        let one = random_sample_states(&limits, 1, &mut seed::rng(1)).unwrap();
        assert_eq!(one.len(), 1);
        let states = random_sample_states(&limits, 10_000, &mut seed::rng(2)).unwrap();
        for (q, dq) in &states {
            for (j, &[lo, hi]) in limits.iter().enumerate() {
                assert!(q[j] >= lo && q[j] < hi);
                assert!(dq[j].abs() >= DQ_MIN && dq[j].abs() <= DQ_MAX);
            }
        }
        // Mean within 3 standard errors of the midpoint.
        for (j, &[lo, hi]) in limits.iter().enumerate() {
            let mean = states.iter().map(|(q, _)| q[j]).sum::<f64>() / states.len() as f64;
            let se = (hi - lo) / 12f64.sqrt() / (states.len() as f64).sqrt();
            assert!((mean - 0.5 * (lo + hi)).abs() < 3.0 * se);
        }
        let positive = states.iter().filter(|(_, dq)| dq[0] > 0.0).count();
        assert!((positive as f64 / 10_000.0 - 0.5).abs() < 0.02);
        assert_eq!(states, random_sample_states(&limits, 10_000, &mut seed::rng(2)).unwrap());
        assert!(random_sample_states(&limits, 0, &mut seed::rng(2)).is_err());
    }

    #[test]
    fn collected_inputs_encode_noisy_positions() {
        let p = Plant::fixture();
        let states = random_sample_states(&p.robot.joint_limits, 20, &mut seed::rng(3)).unwrap();
        let d = collect_dataset(&p, &states, &mut seed::rng(4)).unwrap();
        assert_eq!(d.len(), 20);
        assert_eq!(d.provenance, Provenance::System);
        // Replay the measurement stream to recover the noisy positions.
        let mut rng = seed::rng(4);
        let kinds = p.robot.joint_kinds();
        for ((q, dq), s) in states.iter().zip(&d.samples) {
            let (q_meas, _, tau) = p.measure_sample(q, dq, &mut rng).unwrap();
            assert_ne!(&q_meas, q);
            assert_eq!(s.x1, trig_encode(&q_meas, &kinds).unwrap());
            assert_eq!(s.y, tau);
            assert_eq!(&s.x2, dq);
        }
    }

    #[test]
    fn noiseless_collection_is_exact() {
        let mut p = Plant::fixture();
        p.noise = NoiseParams::noiseless(6);
        let states = random_sample_states(&p.robot.joint_limits, 1, &mut seed::rng(5)).unwrap();
        let d = collect_dataset(&p, &states, &mut seed::rng(6)).unwrap();
        let (q, dq) = &states[0];
        assert_eq!(d.samples[0].y, p.true_compensation_torque(q, dq).unwrap());
    }
}
