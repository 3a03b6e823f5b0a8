use std::sync::Arc;

use guidesampler_core::oracle::{auroc, brute_force_posterior};
use guidesampler_core::predictors::{
    exact_marginal_predictor, product_predictor, train_noisy_classifier, ClassifierConfig, TableCleanPredictor,
    TimePredictor,
};
use guidesampler_core::{RandomSource, SequenceSpace, TabularDistribution, TokenSequence};

#[test]
fn classifier_recovers_planted_linear_signal() {
    let space = SequenceSpace::with_sizes(6, 4).unwrap();
    let mut rng = RandomSource::new(1, 0);
    let weights: Vec<f64> = (0..24).map(|_| rng.uniform() * 2.0 - 1.0).collect();
    let signal = |x: &TokenSequence| x.tokens().iter().enumerate().map(|(d, &s)| weights[d * 4 + s]).sum::<f64>();
    let draw = |rng: &mut RandomSource| {
        let tokens = (0..6).map(|_| (rng.uniform() * 4.0) as usize).collect();
        let x = TokenSequence::new(tokens, space.alphabet()).unwrap();
        // Label noise: flip with a logistic probability around zero signal.
        let y = rng.uniform() < 1.0 / (1.0 + (-4.0 * signal(&x)).exp());
        (x, y)
    };
    let train: Vec<_> = (0..800).map(|_| draw(&mut rng)).collect();
    let test: Vec<_> = (0..400).map(|_| draw(&mut rng)).collect();
    let model = train_noisy_classifier(&train, &ClassifierConfig::default(), &mut rng).unwrap();
    let scores: Vec<f64> = test.iter().map(|(x, _)| model.likelihood(&x.to_masked()).unwrap()).collect();
    let labels: Vec<bool> = test.iter().map(|(_, y)| *y).collect();
    let area = auroc(&scores, &labels).unwrap();
    assert!(area >= 0.9, "held-out AUROC {area}");

    // Partially masked inputs still rank better than chance.
    let mut masked_scores = Vec::new();
    for (x, _) in &test {
        let mut xt = x.to_masked();
        xt.set(0, space.alphabet().mask_index());
        xt.set(3, space.alphabet().mask_index());
        masked_scores.push(model.likelihood(&xt).unwrap());
    }
    assert!(auroc(&masked_scores, &labels).unwrap() > 0.6);
}

#[test]
fn bayes_products_commute() {
    let space = SequenceSpace::with_sizes(4, 3).unwrap();
    let mut rng = RandomSource::new(2, 0);
    let p = TabularDistribution::from_unnormalized(space, (0..81).map(|_| rng.uniform()).collect()).unwrap();
    let parts: Vec<TableCleanPredictor> = (0..3)
        .map(|_| TableCleanPredictor::new(space, (0..81).map(|_| 0.01 + 0.98 * rng.uniform()).collect()).unwrap())
        .collect();
    let joint = |x: &TokenSequence| parts.iter().map(|c| c.values()[x.encode()]).product::<f64>();
    let direct = brute_force_posterior(&p, &joint, 1.0).unwrap();
    for order in [[0, 1, 2], [2, 0, 1], [1, 2, 0]] {
        let mut tilted = p.clone();
        for i in order {
            tilted = brute_force_posterior(&tilted, &parts[i], 1.0).unwrap();
        }
        for (a, b) in tilted.weights().iter().zip(direct.weights()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    // The time-dependent product agrees with the clean product on clean input.
    let p = Arc::new(p);
    let timed: Vec<Arc<dyn TimePredictor>> = parts
        .iter()
        .map(|c| Arc::new(exact_marginal_predictor(c, p.clone()).unwrap()) as Arc<dyn TimePredictor>)
        .collect();
    let product = product_predictor(timed).unwrap();
    for x in space.iter() {
        assert!((product.likelihood(&x.to_masked()).unwrap() - joint(&x)).abs() <= 1e-9);
    }
}
