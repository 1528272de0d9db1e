use std::sync::OnceLock;

use stpath::history::{
    decoherence_matrix, destructive_null, screen_amplitude, screen_profile, slit_histories, ScreenProfile, SlitConfig,
};
use stpath::oracle::twoslit::{model_distribution, model_nulls};
use stpath::C64;

/// Central region for the visibility check: about one fringe period each side.
const CENTRAL: f64 = 10.0;

fn desk_profile() -> &'static ScreenProfile {
    static P: OnceLock<ScreenProfile> = OnceLock::new();
    P.get_or_init(|| screen_profile(&SlitConfig::desk()).unwrap())
}

#[test]
fn distributions_are_normalized() {
    let p = desk_profile();
    for which in [false, true] {
        let total: f64 = p.distribution(which).probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn which_slit_is_mean_of_single_slits() {
    let p = desk_profile();
    let both = p.distribution(true);
    let (a, b) = (p.single_slit(0), p.single_slit(1));
    for i in 0..both.probabilities.len() {
        let mean = 0.5 * (a.probabilities[i] + b.probabilities[i]);
        assert!((both.probabilities[i] - mean).abs() < 1e-12);
    }
}

#[test]
fn fringes_are_visible_and_match_model() {
    let cfg = SlitConfig::desk();
    let dist = desk_profile().distribution(false);
    let v = dist.visibility(CENTRAL);
    assert!(v > 0.9, "visibility {v}");

    let model = model_distribution(&cfg).unwrap();
    let model_dist = stpath::history::ScreenDistribution { centers: dist.centers.clone(), probabilities: model };
    assert!((v - model_dist.visibility(CENTRAL)).abs() < 0.05);

    // Every model null has a distribution minimum within one bin.
    let w = cfg.bin_width();
    let minima = dist.minima();
    let nulls = model_nulls(&cfg).unwrap();
    assert!(nulls.len() >= 4, "{nulls:?}");
    for n in nulls.iter().filter(|n| n.abs() < cfg.screen.hi - w) {
        assert!(minima.iter().any(|m| (m - n).abs() <= w), "null {n} vs minima {minima:?}");
    }
}

#[test]
fn propagator_phase_nulls_are_dark() {
    let cfg = SlitConfig::desk();
    let w = cfg.bin_width();
    let peak = desk_profile()
        .samples
        .iter()
        .flatten()
        .map(|s| (s[0] + s[1]).norm_sqr())
        .fold(0.0, f64::max);
    for n in model_nulls(&cfg).unwrap().into_iter().filter(|n| n.abs() < CENTRAL) {
        let x = destructive_null(&cfg, n - w, n + w).unwrap();
        assert!((x - n).abs() <= w, "{x} vs model {n}");
        let dark = screen_amplitude(&cfg, &[x]).unwrap().norm_sqr();
        assert!(dark < 1e-3 * peak, "{dark} vs {peak}");
    }
}

#[test]
fn labeled_histories_decohere() {
    let p = desk_profile();
    let hs = slit_histories(p, true);
    let d = decoherence_matrix(&hs).unwrap();
    let mut trace = 0.0;
    for (i, row) in d.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i == j {
                assert!(v.im == 0.0 && v.re >= 0.0);
                trace += v.re;
            } else {
                assert_eq!(*v, C64::new(0.0, 0.0));
            }
        }
    }
    let probs: f64 = d.iter().enumerate().map(|(i, r)| r[i].re / trace).sum();
    assert!((probs - 1.0).abs() < 1e-12);
}

#[test]
fn unlabeled_histories_interfere() {
    let hs = slit_histories(desk_profile(), false);
    let d = decoherence_matrix(&hs).unwrap();
    let off = (0..hs.len()).flat_map(|i| (0..hs.len()).filter(move |&j| j != i).map(move |j| (i, j)));
    let largest = off.map(|(i, j)| d[i][j].norm()).fold(0.0, f64::max);
    assert!(largest > 0.0);
}

#[test]
fn lambda_route_gives_same_amplitudes() {
    let cfg = SlitConfig::desk();
    let lam = SlitConfig { route: stpath::propagator::Route::Lambda, ..cfg.clone() };
    for u in [-13.0, 0.0, 3.9, 17.5] {
        let a = screen_amplitude(&cfg, &[u]).unwrap();
        let b = screen_amplitude(&lam, &[u]).unwrap();
        assert!((a - b).norm() / a.norm() < 1e-3, "{u}: {a} vs {b}");
    }
}
