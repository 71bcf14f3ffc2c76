//! Joint-distribution tests for every sampler block at desk scale, each paired
//! with a mis-scaled copy of the same update that must be caught.

use sfda_core::config::SeasonalKind;
use sfda_core::numerics::DrawScale;
use sfda_core::sampler::{Block, Fault};
use sfda_core::synth::geweke::{geweke_test, GewekeConfig, GewekeReport};

fn run(blocks: &[Block], seasonal: SeasonalKind, fault: Option<Block>) -> GewekeReport {
    let mut c = GewekeConfig::desk(blocks, seasonal, 11);
    c.fault = fault.map(|block| Fault {
        block,
        scale: DrawScale(0.5),
    });
    geweke_test(&c).unwrap()
}

fn check(blocks: &[Block], seasonal: SeasonalKind) {
    let ok = run(blocks, seasonal, None);
    assert!(ok.passed(), "{blocks:?}: {:?}", ok.worst());
    let bad = run(blocks, seasonal, Some(blocks[0]));
    assert!(bad.max_abs_z() > 4.0, "fault in {:?} went unnoticed: {:?}", blocks[0], bad.worst());
}

#[test]
fn loadings() {
    check(&[Block::Loadings], SeasonalKind::Garch);
}

#[test]
fn local_shrinkage() {
    check(&[Block::LocalShrinkage], SeasonalKind::Garch);
}

#[test]
fn increments() {
    check(&[Block::Increments], SeasonalKind::Garch);
}

#[test]
fn residual_precision() {
    check(&[Block::ResidualPrecision], SeasonalKind::Garch);
}

#[test]
fn factors() {
    check(&[Block::Factors], SeasonalKind::Garch);
}

#[test]
fn coefficients() {
    check(&[Block::Coefficients], SeasonalKind::Garch);
}

#[test]
fn garch_levels() {
    check(&[Block::Levels], SeasonalKind::Garch);
}

#[test]
fn grand_mean() {
    check(&[Block::GrandMean], SeasonalKind::Garch);
}

#[test]
fn garch_parameters() {
    let r = run(&[Block::Alpha, Block::Persistence], SeasonalKind::Garch, None);
    assert!(r.passed(), "{:?}", r.worst());
}

#[test]
fn beta() {
    check(&[Block::Beta], SeasonalKind::Garch);
}

#[test]
fn beta_precision() {
    check(&[Block::BetaPrecision], SeasonalKind::Garch);
}

#[test]
fn error_precision() {
    check(&[Block::ErrorPrecision], SeasonalKind::Garch);
}

#[test]
fn ar_levels() {
    check(&[Block::Levels], SeasonalKind::Ar);
}

#[test]
fn ar_coefficients() {
    check(&[Block::ArCoefficients], SeasonalKind::Ar);
}

#[test]
fn ar_innovation_variance() {
    check(&[Block::InnovationVariance], SeasonalKind::Ar);
}

#[test]
fn full_sampler_garch() {
    let blocks = GewekeConfig::full_sampler_blocks(SeasonalKind::Garch);
    let mut c = GewekeConfig::desk(&blocks, SeasonalKind::Garch, 5);
    c.sweeps = 5_000;
    c.marginal_draws = 5_000;
    let r = geweke_test(&c).unwrap();
    assert!(r.passed(), "{:?}", r.worst());
}

#[test]
fn full_sampler_ar() {
    let blocks = GewekeConfig::full_sampler_blocks(SeasonalKind::Ar);
    let mut c = GewekeConfig::desk(&blocks, SeasonalKind::Ar, 6);
    c.sweeps = 5_000;
    c.marginal_draws = 5_000;
    let r = geweke_test(&c).unwrap();
    assert!(r.passed(), "{:?}", r.worst());
}
