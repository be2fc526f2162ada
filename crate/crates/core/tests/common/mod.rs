#![allow(dead_code)]

use drnet_core::netparse::{parse_network, NetworkSource};
use drnet_core::ReactionNetwork;

pub fn load(text: &str) -> (ReactionNetwork, Vec<f64>) {
    let parsed = parse_network(&NetworkSource::new(text, "<test>"))
        .unwrap_or_else(|d| panic!("bad test network: {d:?}"));
    (parsed.network, parsed.initial.values)
}

/// 2X ⇌ 2Y, ∅ ⇌ X, ∅ ⇌ Y.
pub fn two_dimers(k: [f64; 6], c0: [f64; 2]) -> (ReactionNetwork, Vec<f64>) {
    load(&format!(
        "species X, Y
         2X <-> 2Y : {}, {}
         0 <-> X : {}, {}
         0 <-> Y : {}, {}
         init X = {}, Y = {}",
        k[0], k[1], k[2], k[3], k[4], k[5], c0[0], c0[1]
    ))
}

pub fn two_dimers_dr() -> (ReactionNetwork, Vec<f64>) {
    two_dimers([4.0, 1.0, 1.0, 0.5, 2.0, 0.5], [1.0, 2.0])
}

/// X ⇌ 2Y, ∅ ⇌ X, ∅ ⇌ Y.
pub fn monomer_dimer(k: [f64; 6], c0: [f64; 2]) -> (ReactionNetwork, Vec<f64>) {
    load(&format!(
        "species X, Y
         X <-> 2Y : {}, {}
         0 <-> X : {}, {}
         0 <-> Y : {}, {}
         init X = {}, Y = {}",
        k[0], k[1], k[2], k[3], k[4], k[5], c0[0], c0[1]
    ))
}

pub fn decaying_dimerization() -> (ReactionNetwork, Vec<f64>) {
    load(
        "species X, Y, Z
         X <-> 2Y : 9, 1
         X -> Z : 2
         Y -> 0 : 1
         init X = 900, Y = 90, Z = 100",
    )
}

pub fn linear_without_dr() -> (ReactionNetwork, Vec<f64>) {
    load(
        "species X, Y, Z
         X <-> 2Y : 9, 1
         X -> Z : 2
         Y -> 0 : 4
         Y -> 4Y : 1
         init X = 900, Y = 90, Z = 100",
    )
}

pub fn x_plus_y(k: [f64; 8], c0: [f64; 2]) -> (ReactionNetwork, Vec<f64>) {
    load(&format!(
        "species X, Y
         0 <-> X + Y : {}, {}
         0 <-> X : {}, {}
         0 <-> Y : {}, {}
         X <-> Y : {}, {}
         init X = {}, Y = {}",
        k[0], k[1], k[2], k[3], k[4], k[5], k[6], k[7], c0[0], c0[1]
    ))
}

pub fn chain(k: [f64; 6], c0: [f64; 2]) -> (ReactionNetwork, Vec<f64>) {
    load(&format!(
        "species X, Y
         X <-> 2X + Y : {}, {}
         2X + Y <-> X + 2Y : {}, {}
         X + 2Y <-> Y : {}, {}
         init X = {}, Y = {}",
        k[0], k[1], k[2], k[3], k[4], k[5], c0[0], c0[1]
    ))
}

pub fn cascade(c0: [f64; 4]) -> (ReactionNetwork, Vec<f64>) {
    load(&format!(
        "species X, Y, Z, W
         Z -> 2X : 2
         2X -> 2Y : 2
         2Y -> W : 2
         X -> 0 : 1
         Y -> 0 : 1
         init X = {}, Y = {}, Z = {}, W = {}",
        c0[0], c0[1], c0[2], c0[3]
    ))
}
