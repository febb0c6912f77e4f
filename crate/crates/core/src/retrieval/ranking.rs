use std::collections::HashSet;

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{FactorModel, MfConfig, ModelKind, Result, RetrievalError};
use crate::corpus::{Dataset, ItemIdx};
use crate::num::Real;
use crate::seed;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Implicit-feedback MF trained with the pairwise BPR objective. Every train
/// interaction is a positive; each is contrasted with `cfg.negatives` items
/// drawn uniformly from those the user has not interacted with.
pub fn train_ranking_mf<T: Real>(train: &Dataset, cfg: &MfConfig) -> Result<FactorModel<T>> {
    if train.n_interactions() == 0 {
        return Err(RetrievalError::EmptyTrain);
    }
    cfg.validate()?;
    let mut model = FactorModel::zeroed(train, ModelKind::Ranking, cfg.dim, cfg.seed);
    if cfg.epochs == 0 {
        return Ok(model);
    }
    model.randomize_factors(cfg.seed);
    let n_items = train.n_items();
    let seen: Vec<HashSet<ItemIdx>> =
        (0..train.n_users()).map(|u| train.user_ratings(u).iter().map(|r| r.item).collect()).collect();
    let lr = T::lit(cfg.learning_rate);
    let reg = T::lit(cfg.regularization);
    let d = cfg.dim;
    let mut rng = seed::rng(seed::derive(cfg.seed, "mf-ranking-order"));
    let mut order: Vec<usize> = (0..train.n_interactions()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut steps = 0usize;
        for &idx in &order {
            let r = train.ratings()[idx];
            let (u, i) = (r.user, r.item);
            if seen[u].len() >= n_items {
                continue;
            }
            for _ in 0..cfg.negatives {
                let j = loop {
                    let j = rng.gen_range(0..n_items);
                    if !seen[u].contains(&j) {
                        break j;
                    }
                };
                let x = (model.score(u, i) - model.score(u, j)).to_f64_lossy();
                loss -= sigmoid(x).max(f64::MIN_POSITIVE).ln();
                steps += 1;
                let g = T::lit(sigmoid(-x));
                model.item_bias[i] = model.item_bias[i] + lr * (g - reg * model.item_bias[i]);
                model.item_bias[j] = model.item_bias[j] + lr * (-g - reg * model.item_bias[j]);
                for f in 0..d {
                    let pu = model.user_factors[u * d + f];
                    let qi = model.item_factors[i * d + f];
                    let qj = model.item_factors[j * d + f];
                    model.user_factors[u * d + f] = pu + lr * (g * (qi - qj) - reg * pu);
                    model.item_factors[i * d + f] = qi + lr * (g * pu - reg * qi);
                    model.item_factors[j * d + f] = qj + lr * (-(g * pu) - reg * qj);
                }
            }
        }
        let loss = if steps == 0 { 0.0 } else { loss / steps as f64 };
        debug!("ranking-mf epoch {epoch}: bpr loss {loss:.5}");
        if !loss.is_finite() || model.item_bias.iter().any(|x| !x.is_finite()) {
            return Err(RetrievalError::Diverged { epoch, loss });
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}
