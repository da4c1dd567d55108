use std::collections::HashMap;

use errw::branching::{Tree, STAR};
use errw::dirichlet::{
    errw_path_probability, quenched_path_probability, sample_graph_environment, sequential_urn_probability,
    two_path_product, WeightedDigraph,
};
use errw::reversal::{walks, MarkedTree};
use errw::rng::stream;
use errw::walk::{simulate_errw, WalkOptions};
use errw::Params;
use rand::Rng;

fn binary_digraph(p: &Params) -> WeightedDigraph {
    MarkedTree::regular(2, 3, 1, p).unwrap().digraph(false).unwrap()
}

#[test]
fn gamma_product_equals_urn_product_on_all_short_paths() {
    for (ap, ac) in [(1.0, 0.5), (2.0, 3.0)] {
        let p = Params::new(ap, ac).unwrap();
        let g = binary_digraph(&p);
        let paths = walks(&g, 0, 8);
        assert!(paths.len() > 1000);
        for path in &paths {
            let a = errw_path_probability(&g, path).unwrap();
            let b = sequential_urn_probability(&g, path).unwrap();
            assert!((a - b).abs() <= 1e-12 * b, "{path:?}: {a} vs {b}");
        }
    }
}

#[test]
fn two_path_orders_agree() {
    let p = Params::new(1.3, 0.8).unwrap();
    let g = binary_digraph(&p);
    let mut rng = stream(21, 0, 0);
    let walk = |rng: &mut errw::rng::StreamRng| {
        let len = rng.random_range(1..7);
        let mut path = vec![rng.random_range(0..g.n_vertices())];
        for _ in 0..len {
            let s: Vec<usize> = g.successors(*path.last().unwrap()).collect();
            path.push(s[rng.random_range(0..s.len())]);
        }
        path
    };
    for _ in 0..1000 {
        let (a, b) = (walk(&mut rng), walk(&mut rng));
        let ab = two_path_product(&g, &a, &b).unwrap();
        let ba = two_path_product(&g, &b, &a).unwrap();
        assert!((ab - ba).abs() <= 1e-12 * ab.max(ba));
    }
}

#[test]
fn two_path_product_is_the_dirichlet_mean() {
    let p = Params::new(1.0, 1.0).unwrap();
    let g = binary_digraph(&p);
    let mut rng = stream(22, 0, 0);
    let pairs = [(vec![0, 1, 2, 1, 3], vec![2, 1, 0, 1, 2]), (vec![1, 2, 4], vec![3, 1, 2, 4, 2])];
    for (a, b) in &pairs {
        let target = two_path_product(&g, a, b).unwrap();
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                let eta = sample_graph_environment(&g, &mut rng).unwrap();
                quenched_path_probability(&g, &eta, a).unwrap() * quenched_path_probability(&g, &eta, b).unwrap()
            })
            .collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let se = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0) / n as f64).sqrt();
        assert!((m - target).abs() < 4.0 * se, "{a:?} {b:?}: {m} vs {target} (se {se})");
    }
}

#[test]
fn errw_frequencies_match_path_probabilities() {
    let p = Params::new(1.0, 0.5).unwrap();
    let mut tree = Tree::root_only(100);
    for v in 0..7 {
        tree.attach(v, 2).unwrap();
    }
    // digraph index = tree index + 1, with 0 for the root's parent
    let mut g = WeightedDigraph::new(tree.len() + 1).unwrap();
    g.add_edge(0, 1, p.alpha_c).unwrap();
    g.add_edge(1, 0, p.alpha_p).unwrap();
    for v in 1..tree.len() as u32 {
        let q = tree.parent(v) as usize + 1;
        g.add_edge(q, v as usize + 1, p.alpha_c).unwrap();
        g.add_edge(v as usize + 1, q, p.alpha_p).unwrap();
    }
    let runs = 1_000_000;
    let mut rng = stream(23, 0, 0);
    let mut freq: HashMap<Vec<usize>, u64> = HashMap::new();
    let opts = WalkOptions::default();
    for _ in 0..runs {
        let traj = simulate_errw(&mut tree, &p, 0, 3, &opts, &mut rng).unwrap();
        let key: Vec<usize> = traj.vertices.iter().map(|&v| if v == STAR { 0 } else { v as usize + 1 }).collect();
        *freq.entry(key).or_insert(0) += 1;
    }
    let paths: Vec<Vec<usize>> = walks(&g, 1, 3).into_iter().filter(|w| w.len() == 4).collect();
    let total: f64 = paths.iter().map(|w| errw_path_probability(&g, w).unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for w in &paths {
        let prob = errw_path_probability(&g, w).unwrap();
        let hat = freq.get(w).copied().unwrap_or(0) as f64 / runs as f64;
        let se = (prob * (1.0 - prob) / runs as f64).sqrt();
        assert!((hat - prob).abs() < 4.0 * se, "{w:?}: {hat} vs {prob}");
    }
}
