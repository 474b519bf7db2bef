//! Flood/wastage hinge losses and the supervised forecaster loss.
//!
//! Each loss exists twice: an eager form over plain slices (reporting,
//! baselines) and a tape form (training). Tests pin the two to each other
//! and to hand-derived values.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};

/// Per-station flood (upper) and wastage (lower) stage thresholds in feet.
#[derive(Clone, Debug, PartialEq)]
pub struct Thresholds {
    flood: Vec<f64>,
    waste: Vec<f64>,
}

impl Thresholds {
    pub fn new(flood: Vec<f64>, waste: Vec<f64>) -> Result<Self> {
        if flood.len() != waste.len() {
            return Err(Error::Config(format!(
                "threshold lengths differ: {} vs {}",
                flood.len(),
                waste.len()
            )));
        }
        for (i, (f, w)) in flood.iter().zip(&waste).enumerate() {
            if w >= f {
                return Err(Error::Config(format!(
                    "station {i}: wastage threshold {w} must lie below flood threshold {f}"
                )));
            }
        }
        Ok(Thresholds { flood, waste })
    }

    /// Same pair of thresholds at every station.
    pub fn uniform(n_stations: usize, flood: f64, waste: f64) -> Result<Self> {
        Self::new(vec![flood; n_stations], vec![waste; n_stations])
    }

    /// The 3.5 ft / 0.0 ft defaults.
    pub fn default_for(n_stations: usize) -> Self {
        Self::uniform(n_stations, 3.5, 0.0).expect("default thresholds are ordered")
    }

    pub fn n_stations(&self) -> usize {
        self.flood.len()
    }

    pub fn flood(&self) -> &[f64] {
        &self.flood
    }

    pub fn waste(&self) -> &[f64] {
        &self.waste
    }
}

/// Sum of squared exceedances above the flood threshold. Zero iff no level
/// exceeds its station threshold. `levels` is row-major steps x stations.
pub fn flood_loss_l1(levels: &[f64], n_stations: usize, thr: &Thresholds) -> f64 {
    debug_assert_eq!(levels.len() % n_stations, 0);
    levels
        .chunks(n_stations)
        .flat_map(|row| row.iter().zip(thr.flood()))
        .map(|(v, f)| {
            let e = (v - f).max(0.0);
            e * e
        })
        .sum()
}

/// Sum of squared shortfalls below the wastage threshold.
pub fn wastage_loss_l2(levels: &[f64], n_stations: usize, thr: &Thresholds) -> f64 {
    debug_assert_eq!(levels.len() % n_stations, 0);
    levels
        .chunks(n_stations)
        .flat_map(|row| row.iter().zip(thr.waste()))
        .map(|(v, w)| {
            let e = (v - w).min(0.0);
            e * e
        })
        .sum()
}

/// `alpha * L1 + beta * L2`. Weights must be nonnegative and not both zero.
pub fn total_loss(l1: f64, l2: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_weights(alpha, beta)?;
    Ok(alpha * l1 + beta * l2)
}

/// Mean over horizon steps of the squared error summed over stations.
pub fn evaluator_loss(pred: &[f64], obs: &[f64], horizon: usize) -> Result<f64> {
    if pred.len() != obs.len() {
        return Err(Error::dim(
            "evaluator_loss",
            format!("{} vs {} values", pred.len(), obs.len()),
        ));
    }
    let sq: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum();
    Ok(sq / horizon as f64)
}

fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if alpha < 0.0 || beta < 0.0 || (alpha == 0.0 && beta == 0.0) {
        return Err(Error::Config(format!(
            "loss weights must be nonnegative and not both zero, got alpha={alpha} beta={beta}"
        )));
    }
    Ok(())
}

// ── tape forms ──────────────────────────────────────────────────────

/// Tape form of [`flood_loss_l1`]; `levels` columns are stations.
pub fn flood_loss_l1_t(tape: &mut Tape, levels: &Tensor, thr: &Thresholds) -> Result<Tensor> {
    let neg = Tensor::new(vec![1, thr.n_stations()], thr.flood().iter().map(|f| -f).collect())?;
    let shifted = tape.add_row_broadcast(levels, &neg)?;
    let hinge = tape.relu(&shifted);
    let sq = tape.mul(&hinge, &hinge)?;
    Ok(tape.sum_all(&sq))
}

/// Tape form of [`wastage_loss_l2`]; uses `min(v-w, 0)^2 == relu(w-v)^2`.
pub fn wastage_loss_l2_t(tape: &mut Tape, levels: &Tensor, thr: &Thresholds) -> Result<Tensor> {
    let neg_levels = tape.mul_scalar(levels, -1.0);
    let waste = Tensor::new(vec![1, thr.n_stations()], thr.waste().to_vec())?;
    let shifted = tape.add_row_broadcast(&neg_levels, &waste)?;
    let hinge = tape.relu(&shifted);
    let sq = tape.mul(&hinge, &hinge)?;
    Ok(tape.sum_all(&sq))
}

/// Tape form of [`total_loss`].
pub fn total_loss_t(
    tape: &mut Tape,
    l1: &Tensor,
    l2: &Tensor,
    alpha: f64,
    beta: f64,
) -> Result<Tensor> {
    check_weights(alpha, beta)?;
    let a = tape.mul_scalar(l1, alpha);
    let b = tape.mul_scalar(l2, beta);
    tape.add(&a, &b)
}

/// Tape form of [`evaluator_loss`].
pub fn evaluator_loss_t(
    tape: &mut Tape,
    pred: &Tensor,
    obs: &Tensor,
    horizon: usize,
) -> Result<Tensor> {
    let sq = tape.squared_error(pred, obs)?;
    Ok(tape.mul_scalar(&sq, 1.0 / horizon as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check::{central_diff, max_rel_err};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn thr1() -> Thresholds {
        Thresholds::uniform(1, 3.5, 0.0).unwrap()
    }

    #[test]
    fn rejects_unordered_thresholds() {
        assert!(Thresholds::uniform(2, 1.0, 1.0).is_err());
        assert!(Thresholds::uniform(2, 1.0, 2.0).is_err());
    }

    #[test]
    fn l1_hand_values() {
        let t = thr1();
        assert_eq!(flood_loss_l1(&[2.0, 3.5, 1.0], 1, &t), 0.0);
        assert!((flood_loss_l1(&[4.5], 1, &t) - 1.0).abs() < 1e-12);
        let v = flood_loss_l1(&[4.5, 3.0, 4.0], 1, &t);
        assert!((v - 1.25).abs() < 1e-12);
    }

    #[test]
    fn l2_hand_values() {
        let t = thr1();
        assert_eq!(wastage_loss_l2(&[0.0, 1.0, 3.0], 1, &t), 0.0);
        assert!((wastage_loss_l2(&[-1.0], 1, &t) - 1.0).abs() < 1e-12);
        let v = wastage_loss_l2(&[-0.5, 0.2], 1, &t);
        assert!((v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn total_loss_hand_values_and_guards() {
        assert_eq!(total_loss(2.5, 9.0, 1.0, 0.0).unwrap(), 2.5);
        assert!((total_loss(1.25, 0.25, 1.0, 1.0).unwrap() - 1.5).abs() < 1e-12);
        assert!(total_loss(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(total_loss(1.0, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn total_loss_is_one_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (l1, l2) = (rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0));
            let (a, b) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0));
            let s = rng.gen_range(0.1..5.0);
            let base = total_loss(l1, l2, a, b).unwrap();
            let scaled = total_loss(l1, l2, s * a, s * b).unwrap();
            assert!((scaled - s * base).abs() < 1e-12 * (1.0 + scaled.abs()));
        }
    }

    #[test]
    fn evaluator_loss_hand_values() {
        assert_eq!(evaluator_loss(&[1.0, 2.0], &[1.0, 2.0], 2).unwrap(), 0.0);
        let v = evaluator_loss(&[0.1, 0.0, 0.0, 0.0], &[0.0; 4], 1).unwrap();
        assert!((v - 0.01).abs() < 1e-15);
    }

    #[test]
    fn evaluator_loss_station_permutation_invariant() {
        let pred = [0.3, -0.2, 1.1, 0.4, 0.0, 0.9];
        let obs = [0.1, 0.2, 1.0, 0.5, -0.1, 1.2];
        // permute the two station columns of a 3x2 layout in both args
        let perm_p = [-0.2, 0.3, 0.4, 1.1, 0.9, 0.0];
        let perm_o = [0.2, 0.1, 0.5, 1.0, 1.2, -0.1];
        let a = evaluator_loss(&pred, &obs, 3).unwrap();
        let b = evaluator_loss(&perm_p, &perm_o, 3).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn tape_forms_match_eager_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let thr = Thresholds::uniform(4, 3.5, 0.0).unwrap();
        for _ in 0..20 {
            let levels: Vec<f64> = (0..24).map(|_| rng.gen_range(-2.0..6.0)).collect();
            let lt = Tensor::new(vec![6, 4], levels.clone()).unwrap();
            let mut tape = Tape::new();
            let l1t = flood_loss_l1_t(&mut tape, &lt, &thr).unwrap();
            let l2t = wastage_loss_l2_t(&mut tape, &lt, &thr).unwrap();
            assert!((l1t.item() - flood_loss_l1(&levels, 4, &thr)).abs() < 1e-12);
            assert!((l2t.item() - wastage_loss_l2(&levels, 4, &thr)).abs() < 1e-12);
        }
    }

    #[test]
    fn hinge_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let thr = Thresholds::uniform(2, 3.5, 0.0).unwrap();
        let mut checked = 0;
        while checked < 10 {
            let levels: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..6.0)).collect();
            // keep clear of both hinge points
            if levels.iter().any(|v| (v - 3.5).abs() < 1e-3 || v.abs() < 1e-3) {
                continue;
            }
            let mut tape = Tape::new();
            let lt = tape.input(&Tensor::new(vec![4, 2], levels.clone()).unwrap());
            let l1 = flood_loss_l1_t(&mut tape, &lt, &thr).unwrap();
            let l2 = wastage_loss_l2_t(&mut tape, &lt, &thr).unwrap();
            let tot = total_loss_t(&mut tape, &l1, &l2, 1.0, 1.0).unwrap();
            let g = tape.backward(&tot).unwrap();
            let analytic = g.wrt(&lt).unwrap();

            let thr_c = thr.clone();
            let numeric = central_diff(
                |x: &[f64]| {
                    flood_loss_l1(x, 2, &thr_c) + wastage_loss_l2(x, 2, &thr_c)
                },
                &levels,
                1e-6,
            );
            assert!(max_rel_err(analytic.data(), &numeric) < 1e-6);
            checked += 1;
        }
    }
}
