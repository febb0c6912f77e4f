use log::debug;
use rand::seq::SliceRandom;

use super::{FactorModel, MfConfig, ModelKind, Result, RetrievalError};
use crate::corpus::{Dataset, ItemIdx, UserIdx};
use crate::num::Real;
use crate::seed;

/// Partial derivatives of [`sample_loss`] for one observed rating.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub user_bias: T,
    pub item_bias: T,
    pub user_factors: Vec<T>,
    pub item_factors: Vec<T>,
}

/// `½(r − r̂)² + ½λ(b_u² + b_i² + ‖p_u‖² + ‖q_i‖²)` with the unclamped
/// prediction `r̂ = μ + b_u + b_i + p_u·q_i`.
pub fn sample_loss<T: Real>(model: &FactorModel<T>, u: UserIdx, i: ItemIdx, rating: T, reg: T) -> T {
    let half = T::lit(0.5);
    let e = rating - model.score(u, i);
    let norm: T = model.user_row(u).iter().chain(model.item_row(i)).map(|&x| x * x).sum();
    let bias = model.user_bias[u] * model.user_bias[u] + model.item_bias[i] * model.item_bias[i];
    half * e * e + half * reg * (bias + norm)
}

pub fn squared_error_gradient<T: Real>(
    model: &FactorModel<T>,
    u: UserIdx,
    i: ItemIdx,
    rating: T,
    reg: T,
) -> Gradient<T> {
    let e = rating - model.score(u, i);
    let p = model.user_row(u);
    let q = model.item_row(i);
    Gradient {
        user_bias: reg * model.user_bias[u] - e,
        item_bias: reg * model.item_bias[i] - e,
        user_factors: p.iter().zip(q).map(|(&pf, &qf)| reg * pf - e * qf).collect(),
        item_factors: p.iter().zip(q).map(|(&pf, &qf)| reg * qf - e * pf).collect(),
    }
}

fn apply<T: Real>(model: &mut FactorModel<T>, u: UserIdx, i: ItemIdx, g: &Gradient<T>, lr: T) {
    let d = model.dim;
    model.user_bias[u] = model.user_bias[u] - lr * g.user_bias;
    model.item_bias[i] = model.item_bias[i] - lr * g.item_bias;
    for f in 0..d {
        model.user_factors[u * d + f] = model.user_factors[u * d + f] - lr * g.user_factors[f];
        model.item_factors[i * d + f] = model.item_factors[i * d + f] - lr * g.item_factors[f];
    }
}

/// Biased MF fitted by SGD on squared error. Each epoch visits the train
/// ratings in a seeded shuffled order. With zero epochs the model keeps zero
/// factors and the mean train rating.
pub fn train_rating_mf<T: Real>(train: &Dataset, cfg: &MfConfig) -> Result<FactorModel<T>> {
    if train.n_interactions() == 0 {
        return Err(RetrievalError::EmptyTrain);
    }
    cfg.validate()?;
    let mut model = FactorModel::zeroed(train, ModelKind::Rating, cfg.dim, cfg.seed);
    if cfg.epochs == 0 {
        return Ok(model);
    }
    model.randomize_factors(cfg.seed);
    let lr = T::lit(cfg.learning_rate);
    let reg = T::lit(cfg.regularization);
    let mut rng = seed::rng(seed::derive(cfg.seed, "mf-rating-order"));
    let mut order: Vec<usize> = (0..train.n_interactions()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for &idx in &order {
            let r = train.ratings()[idx];
            let rating = T::lit(r.rating);
            let g = squared_error_gradient(&model, r.user, r.item, rating, reg);
            let e = (rating - model.score(r.user, r.item)).to_f64_lossy();
            sse += e * e;
            apply(&mut model, r.user, r.item, &g, lr);
        }
        let loss = sse / order.len() as f64;
        debug!("rating-mf epoch {epoch}: mse {loss:.5}");
        if !loss.is_finite() || model.user_factors.iter().any(|x| !x.is_finite()) {
            return Err(RetrievalError::Diverged { epoch, loss });
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}
