use gpkit_core::agape::{AnnealConfig, EmulatorState, Oracle};
use gpkit_core::rng::derive_seed;

#[test]
fn diag() {
    let seed = 1u64;
    let mut oracle = Oracle::builtin("toy-log-pair").unwrap();
    let initial = vec![vec![0.1], vec![3.4], vec![6.7], vec![10.0]];
    let anneal = AnnealConfig { seed: derive_seed(seed, 0x6147_0000), ..Default::default() };
    let mut outputs = Vec::new();
    for n in &initial { outputs.push(oracle.evaluate(n).unwrap()); }
    let mut state = EmulatorState::from_data(oracle.domain().to_vec(), initial, outputs, 0.2, anneal.seed).unwrap();
    for t in 0..12 {
        let info = state.step(&mut oracle, &anneal).unwrap();
        let y = info.node[0];
        let d0 = state.diversity(0, &[y]).unwrap();
        let h0 = state.geometry(0, &[y]).unwrap();
        let probe = 5.0;
        let dp = state.diversity(0, &[probe]).unwrap();
        let hp = state.geometry(0, &[probe]).unwrap();
        let ap = state.acquisition(&[probe]).unwrap();
        println!("t {t:2} chose {y:8.5} acq {:10.3e} | post: D(y) {d0:9.2e} H(y) {h0:9.2e} | probe5: D {dp:9.2e} H {hp:9.2e} A {ap:9.2e}", info.acquisition);
    }
}
