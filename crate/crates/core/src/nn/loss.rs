use super::{shape_err, NnError};

/// Mean squared error and its gradient with respect to `prediction`.
pub fn mse_loss(prediction: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), NnError> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(shape_err(format!(
            "prediction has {} values, target {}",
            prediction.len(),
            target.len()
        )));
    }
    let n = prediction.len() as f64;
    let mut loss = 0.0;
    let grad = prediction
        .iter()
        .zip(target)
        .map(|(p, y)| {
            let d = p - y;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Mean absolute error; evaluation only.
pub fn mae_loss(prediction: &[f64], target: &[f64]) -> Result<f64, NnError> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(shape_err(format!(
            "prediction has {} values, target {}",
            prediction.len(),
            target.len()
        )));
    }
    let n = prediction.len() as f64;
    Ok(prediction.iter().zip(target).map(|(p, y)| (p - y).abs()).sum::<f64>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_values() {
        let (l, g) = mse_loss(&[1.0, 0.0], &[0.0, 2.0]).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g, vec![1.0, -2.0]);
        assert_eq!(mae_loss(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 1.5);
        let (l, g) = mse_loss(&[3.0, -1.0], &[3.0, -1.0]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
        assert_eq!(mae_loss(&[3.0], &[3.0]).unwrap(), 0.0);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae_loss(&[1.0], &[]).is_err());
    }

    #[test]
    fn mse_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, g) = mse_loss(&p, &y).unwrap();
        let eps = 1e-5;
        for i in 0..p.len() {
            let mut a = p.clone();
            a[i] += eps;
            let mut b = p.clone();
            b[i] -= eps;
            let num = (mse_loss(&a, &y).unwrap().0 - mse_loss(&b, &y).unwrap().0) / (2.0 * eps);
            let rel = (g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-7);
            assert!(rel < 1e-8, "index {i}: {rel}");
        }
    }

    #[test]
    fn mae_bounded_by_rmse() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let n = rng.random_range(1..30);
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mse = mse_loss(&p, &y).unwrap().0;
            assert!(mae_loss(&p, &y).unwrap() <= mse.sqrt() + 1e-12);
        }
    }
}
