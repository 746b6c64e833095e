//! Frozen reference values, each derived independently of the code under
//! test (closed forms or brute force).

use nearcomm_core::algebra::{decompose_instance, DecomposeConfig};
use nearcomm_core::graph::{generate_regular_graph, QuditGraph};
use nearcomm_core::instance::{classical_instance, generate_commuting_instance, perturb_instance, BlockStyle};
use nearcomm_core::linalg::{self, CMat, C64};
use nearcomm_core::operators::{schmidt_decompose_matrix, Side};
use nearcomm_core::oracle::{self, GlobalState, DEFAULT_CAP};
use nearcomm_core::rounding::{sweep_round, RoundingConfig};
use nearcomm_core::seed;
use nearcomm_core::witness::{build_witness, evaluate_energy, np_verify, witness_to_circuit, WitnessConfig};

fn swap(d: usize) -> CMat {
    CMat::from_fn(d * d, d * d, |r, c| {
        let (i, j) = (r / d, r % d);
        if c == j * d + i { linalg::ONE } else { linalg::ZERO }
    })
}

#[test]
fn swap_and_antisymmetric_projector_schmidt_coefficients() {
    // SWAP is a permutation after realignment: d² unit singular values.
    let s = schmidt_decompose_matrix(&swap(3), 3, Side::Left).unwrap();
    assert_eq!(s.terms.len(), 9);
    assert!(s.coefficients().iter().all(|c| (c - 1.0).abs() < 1e-12));
    // (I - SWAP)/2 on qubits: four coefficients of 1/2.
    let p = (linalg::identity(4) - swap(2)) * C64::new(0.5, 0.0);
    let s = schmidt_decompose_matrix(&p, 2, Side::Right).unwrap();
    assert_eq!(s.terms.len(), 4);
    assert!(s.coefficients().iter().all(|c| (c - 0.5).abs() < 1e-12));
}

/// Minimum number of violated edges over all colorings.
fn brute_force(graph: &QuditGraph, d: usize, forbidden: &[Vec<(usize, usize)>]) -> usize {
    (0..d.pow(graph.n as u32))
        .map(|mut x| {
            let digits: Vec<usize> = (0..graph.n).rev().map(|_| { let r = x % d; x /= d; r }).collect::<Vec<_>>().into_iter().rev().collect();
            graph.edges.iter().zip(forbidden).filter(|(&(u, v), f)| f.contains(&(digits[u], digits[v]))).count()
        })
        .min()
        .unwrap()
}

#[test]
fn odd_cycle_frustration_is_one() {
    let g = QuditGraph::new(5, 2, vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]).unwrap();
    let forbidden = vec![vec![(0, 0), (1, 1)]; 5];
    assert_eq!(brute_force(&g, 2, &forbidden), 1);
    let inst = classical_instance(g, 2, &forbidden, 0).unwrap();
    let (e0, _) = oracle::exact_ground_energy(&inst, DEFAULT_CAP).unwrap();
    assert!((e0 - 1.0).abs() < 1e-9);
    let zeros = GlobalState::basis(5, 2, &[0; 5]).unwrap();
    assert!((oracle::state_energy(&zeros, &inst, DEFAULT_CAP).unwrap() - 5.0).abs() < 1e-12);
    let structures = decompose_instance(&inst, &DecomposeConfig::default()).unwrap();
    let (w, _) = build_witness(&inst, &structures, &WitnessConfig::default()).unwrap();
    assert!((evaluate_energy(&w, &inst).unwrap().total - 1.0).abs() < 1e-12);
}

#[test]
fn random_classical_instances_match_brute_force() {
    for s in 0..6u64 {
        let g = generate_regular_graph(8, 3, s).unwrap();
        let mut rng = seed::rng(s);
        let forbidden: Vec<Vec<(usize, usize)>> = (0..g.edge_count())
            .map(|_| {
                let mut all = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
                rand::seq::SliceRandom::shuffle(all.as_mut_slice(), &mut rng);
                all.truncate(2);
                all
            })
            .collect();
        let truth = brute_force(&g, 2, &forbidden) as f64;
        let inst = classical_instance(g, 2, &forbidden, s).unwrap();
        let (e0, _) = oracle::exact_ground_energy(&inst, DEFAULT_CAP).unwrap();
        assert!((e0 - truth).abs() < 1e-9, "seed {s}: {e0} vs {truth}");
        let structures = decompose_instance(&inst, &DecomposeConfig::default()).unwrap();
        let (w, report) = build_witness(&inst, &structures, &WitnessConfig::default()).unwrap();
        assert!((report.energy - truth).abs() < 1e-9);
        assert!((evaluate_energy(&w, &inst).unwrap().total - truth).abs() < 1e-9);
    }
}

#[test]
fn diagonal_product_state_counts_violations() {
    let g = generate_regular_graph(6, 3, 9).unwrap();
    let forbidden: Vec<Vec<(usize, usize)>> = (0..g.edge_count()).map(|e| if e % 3 == 0 { vec![(0, 0)] } else { vec![(1, 0)] }).collect();
    let inst = classical_instance(g.clone(), 2, &forbidden, 0).unwrap();
    let structures = decompose_instance(&inst, &DecomposeConfig::default()).unwrap();
    let mut w = build_witness(&inst, &structures, &WitnessConfig::default()).unwrap().0;
    // Point every vertex at the block spanned by |0⟩.
    for v in 0..g.n {
        w.assignment.0[v] = w.structures[v].blocks.iter().position(|b| b.isometry[(0, 0)].norm() > 0.5).unwrap();
    }
    let expected = (0..g.edge_count()).filter(|e| e % 3 == 0).count() as f64;
    assert_eq!(evaluate_energy(&w, &inst).unwrap().total, expected);
}

#[test]
fn chain_on_perturbed_instances() {
    for (delta, s) in [(1e-3, 21u64), (1e-2, 22), (1e-1, 23)] {
        let g = generate_regular_graph(8, 3, s).unwrap();
        let seed_inst = generate_commuting_instance(g.clone(), 4, s, true, BlockStyle::Auto).unwrap();
        let h = perturb_instance(&seed_inst, delta, s).unwrap();
        let (hhat, report) = sweep_round(&h, &RoundingConfig::default()).unwrap();
        let structures = decompose_instance(&hhat, &DecomposeConfig::default()).unwrap();
        let (w, _) = build_witness(&hhat, &structures, &WitnessConfig::default()).unwrap();
        let m = h.m() as f64;
        let on_hat = evaluate_energy(&w, &hhat).unwrap().total;
        let on_h = evaluate_energy(&w, &h).unwrap().total;
        let max_dist = report.term_distance.iter().copied().fold(0.0, f64::max);
        assert!(on_hat <= 1e-8);
        assert!((on_h - on_hat).abs() <= max_dist * m + 1e-6);
        assert!(on_h <= report.epsilon_report * m + 1e-6);
        let r = 2.0 * report.epsilon_report + 1e-3;
        assert_eq!(np_verify(&w, &h, r.min(0.99)).accepted(), on_h < r.min(0.99) * m);
        assert!(!np_verify(&w, &h, on_h / m * 0.5).accepted());
        let circuit = witness_to_circuit(&w, &g);
        let state = oracle::expand_witness(&w, &g, 1 << 16).unwrap();
        assert!(oracle::apply_circuit(&circuit, 1 << 16).unwrap().fidelity(&state) >= 1.0 - 1e-9);
        assert!((oracle::state_energy(&state, &h, 1 << 16).unwrap() - on_h).abs() <= 1e-9);
    }
}
