//! Acceptance checks. Each test prints one PASS/FAIL line.

mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use common::{report, toy};
use ctbart::chain::{chain_rng, run_chain, ChainRecord};
use ctbart::config::{Algorithm, RunConfig};
use ctbart::ct::{
    enumerate_moves, full_split_log_ratio, mu_proposal_log_density, MoveCandidate, MoveSet,
    SplitValues,
};
use ctbart::data::Dataset;
use ctbart::estimate::{
    occupancy, post_burnin, predict, rao_blackwell_mean, sample_mean, variable_activity,
    PosteriorSummary, Weighting,
};
use ctbart::experiment::run_simulated;
use ctbart::likelihood::{log_full_likelihood, log_marginal_likelihood, CellModel, SuffStats};
use ctbart::moves::Move;
use ctbart::oracle::{enumerate_trees, exact_posterior, total_variation};
use ctbart::posterior::TreeFit;
use ctbart::prior::{log_birth_prior_ratio, log_mu_prior, log_tree_prior, PriorConfig};
use ctbart::simdata::SimConfig;
use ctbart::tree::{SplitRule, Tree};
use rand::Rng;
use rand_distr::{Distribution, Normal};

const REPLICATIONS: usize = 10;
const ITERATIONS: u64 = 20_000;
const BURNIN: u64 = 1_000;

// ---------------------------------------------------------------- 1

#[test]
fn exact_posterior_oracle() {
    let start = Instant::now();
    let data = toy();
    let prior = PriorConfig::default();
    let exact = exact_posterior(&data, &prior, 1.0, 2).unwrap().as_map();
    let mut tv = Vec::new();
    for alg in [Algorithm::CtA, Algorithm::RjA] {
        let mut run = RunConfig::new(alg, 50_000);
        run.fixed_sigma2 = Some(1.0);
        let chain = run_chain(&data, &prior, &run, &mut chain_rng(1, 0)).unwrap();
        let occ = occupancy(&chain, Weighting::for_algorithm(alg)).unwrap();
        tv.push(total_variation(&occ, &exact));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = tv.iter().all(|d| *d < 0.02) && secs <= 60.0;
    report(
        1,
        "exact posterior oracle",
        pass,
        &format!(
            "TV CT-A {:.4}, RJ-A {:.4} (< 0.02); {secs:.1}s",
            tv[0], tv[1]
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

fn log_posterior(tree: &Tree, data: &Dataset, prior: &PriorConfig, sigma2: f64) -> f64 {
    let ll = log_marginal_likelihood(tree, data, sigma2, prior);
    if ll == f64::NEG_INFINITY {
        ll
    } else {
        ll + log_tree_prior(tree, data, prior)
    }
}

/// Joint log posterior of a tree and its terminal values.
fn log_joint(tree: &Tree, data: &Dataset, prior: &PriorConfig, sigma2: f64) -> f64 {
    let stats = SuffStats::compute(tree, data);
    if stats.min_count() < data.min_node_size() {
        return f64::NEG_INFINITY;
    }
    let mu: f64 = tree
        .terminal_nodes()
        .iter()
        .map(|l| log_mu_prior(tree.mu(*l).unwrap(), prior))
        .sum();
    log_full_likelihood(tree, data, sigma2).unwrap() + mu + log_tree_prior(tree, data, prior)
}

fn rate_of(cands: &[MoveCandidate], mv: &Move) -> f64 {
    cands
        .iter()
        .find(|c| c.mv == *mv)
        .map_or(f64::NEG_INFINITY, |c| c.log_rate)
}

struct Balance {
    checked: usize,
    worst: f64,
}

impl Balance {
    fn check(&mut self, lhs: f64, rhs: f64) {
        if lhs == f64::NEG_INFINITY && rhs == f64::NEG_INFINITY {
            return;
        }
        self.checked += 1;
        let gap = (lhs - rhs).abs();
        self.worst = if gap.is_nan() {
            f64::INFINITY
        } else {
            self.worst.max(gap)
        };
    }
}

fn all_rules(data: &Dataset) -> Vec<SplitRule> {
    (0..data.d())
        .flat_map(|v| (0..data.n_cuts(v)).map(move |c| SplitRule::new(v, c)))
        .collect()
}

/// Births and their reverse deaths with terminal values integrated out.
fn marginal_birth_death(data: &Dataset, prior: &PriorConfig, sigma2: f64, b: &mut Balance) {
    for tree in enumerate_trees(data, 2).unwrap() {
        let lp = log_posterior(&tree, data, prior, sigma2);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let out = enumerate_moves(&tree, data, sigma2, prior, MoveSet::BirthDeath);
        for leaf in tree.terminal_nodes() {
            for rule in all_rules(data) {
                let birth = Move::Birth { leaf, rule };
                let (grown, map) = tree.apply_birth_mapped(leaf, rule).unwrap();
                let back = enumerate_moves(&grown, data, sigma2, prior, MoveSet::BirthDeath);
                let death = Move::Death {
                    node: map[leaf.0].unwrap(),
                };
                let lp_grown = log_posterior(&grown, data, prior, sigma2);
                b.check(
                    lp + rate_of(&out, &birth),
                    lp_grown + rate_of(&back, &death),
                );
            }
        }
    }
}

/// Births and their reverse deaths carrying terminal values, with the
/// proposal densities of the new values on each side.
fn full_birth_death<R: Rng>(
    data: &Dataset,
    prior: &PriorConfig,
    sigma2: f64,
    rng: &mut R,
    b: &mut Balance,
) {
    let spread = Normal::new(0.5, 1.5).unwrap();
    let model = CellModel::new(sigma2, prior);
    let min = data.min_node_size();
    for topology in enumerate_trees(data, 2).unwrap() {
        let mut tree = topology.clone();
        for leaf in topology.terminal_nodes() {
            tree.set_mu(leaf, Some(spread.sample(rng))).unwrap();
        }
        let joint = log_joint(&tree, data, prior, sigma2);
        if joint == f64::NEG_INFINITY {
            continue;
        }
        let fit = TreeFit::new(tree.clone(), data, prior, sigma2);
        for leaf in tree.terminal_nodes() {
            for rule in all_rules(data) {
                let parent = fit.stats.get(leaf);
                let mu_parent = tree.mu(leaf).unwrap();
                let (left, right) = fit.split_stats(leaf, rule);
                let (mu_left, mu_right) = (spread.sample(rng), spread.sample(rng));
                let v = SplitValues {
                    parent,
                    mu_parent,
                    left,
                    mu_left,
                    right,
                    mu_right,
                };
                let lpr =
                    log_birth_prior_ratio(fit.depth(leaf), data.d(), data.n_cuts(rule.var), prior);
                let birth = full_split_log_ratio(&v, &model, prior, lpr, min).min(0.0);

                let (mut grown, map) = tree.apply_birth_mapped(leaf, rule).unwrap();
                let node = map[leaf.0].unwrap();
                let (l, r) = grown.children(node).unwrap();
                grown.set_mu(l, Some(mu_left)).unwrap();
                grown.set_mu(r, Some(mu_right)).unwrap();
                let gfit = TreeFit::new(grown.clone(), data, prior, sigma2);
                let (gl, gr, gp) = gfit.death_stats(node);
                let rv = SplitValues {
                    parent: gp,
                    mu_parent,
                    left: gl,
                    mu_left,
                    right: gr,
                    mu_right,
                };
                let glpr =
                    log_birth_prior_ratio(gfit.depth(node), data.d(), data.n_cuts(rule.var), prior);
                let death = (-full_split_log_ratio(&rv, &model, prior, glpr, min)).min(0.0);

                let q_children = mu_proposal_log_density(&left, sigma2, prior, mu_left)
                    + mu_proposal_log_density(&right, sigma2, prior, mu_right);
                let q_parent = mu_proposal_log_density(&parent, sigma2, prior, mu_parent);
                let lhs = joint + birth + q_children;
                let rhs = log_joint(&grown, data, prior, sigma2) + death + q_parent;
                if lhs.is_finite() || rhs.is_finite() {
                    b.check(lhs, rhs);
                }
            }
        }
    }
}

/// Rotations and the rotation leading back.
fn rotations(data: &Dataset, prior: &PriorConfig, sigma2: f64, b: &mut Balance) {
    for tree in enumerate_trees(data, 2).unwrap() {
        let lp = log_posterior(&tree, data, prior, sigma2);
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let out = enumerate_moves(&tree, data, sigma2, prior, MoveSet::BirthDeathRotate);
        for (node, dir) in tree.rotate_candidates() {
            let rotated = tree.apply_rotate(node, dir).unwrap();
            let back = enumerate_moves(&rotated, data, sigma2, prior, MoveSet::BirthDeathRotate);
            let reverse: Vec<&MoveCandidate> = back
                .iter()
                .filter(|c| {
                    matches!(c.mv, Move::Rotate { .. })
                        && c.mv.apply(&rotated).unwrap().topology_eq(&tree)
                })
                .collect();
            assert_eq!(reverse.len(), 1, "one rotation leads back from {rotated}");
            let lp_rot = log_posterior(&rotated, data, prior, sigma2);
            b.check(
                lp + rate_of(&out, &Move::Rotate { node, dir }),
                lp_rot + reverse[0].log_rate,
            );
        }
    }
}

/// Two variables with four cutpoints each: a depth-two space of 649 trees.
fn two_variables() -> Dataset {
    let n = 24;
    let x1: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let x2: Vec<f64> = (0..n)
        .map(|i| ((i * 7) % n) as f64 / n as f64 + 0.01)
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| ((i * 3) as f64).sin() + if x2[i] > 0.5 { 1.5 } else { 0.0 })
        .collect();
    Dataset::with_uniform_grid(vec![x1, x2], y, 4, 2).unwrap()
}

#[test]
fn detailed_balance() {
    let prior = PriorConfig::default();
    let mut rng = chain_rng(5, 0);
    let (mut marginal, mut full, mut rotate) = (
        Balance {
            checked: 0,
            worst: 0.0,
        },
        Balance {
            checked: 0,
            worst: 0.0,
        },
        Balance {
            checked: 0,
            worst: 0.0,
        },
    );
    for data in [toy(), toy().with_min_node_size(1).unwrap(), two_variables()] {
        for sigma2 in [1.0, 0.3] {
            marginal_birth_death(&data, &prior, sigma2, &mut marginal);
            full_birth_death(&data, &prior, sigma2, &mut rng, &mut full);
            rotations(&data, &prior, sigma2, &mut rotate);
        }
    }
    let tol = 1e-10;
    let pass = [&marginal, &full, &rotate]
        .iter()
        .all(|b| b.checked > 0 && b.worst < tol);
    report(
        2,
        "detailed balance",
        pass,
        &format!(
            "max |log gap| marginal {:.1e} over {} pairs, with values {:.1e} over {}, rotate {:.1e} over {} (< 1e-10)",
            marginal.worst, marginal.checked, full.worst, full.checked, rotate.worst, rotate.checked
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    adaptive(f, a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 50)
}

/// Log of the integral over every terminal value of likelihood times value
/// prior. The integrand is a product over cells, so each cell is integrated
/// on its own, scaled by its peak to avoid underflow.
fn quadrature_log_marginal(tree: &Tree, data: &Dataset, sigma2: f64, prior: &PriorConfig) -> f64 {
    let y = data.response();
    let mut total = 0.0;
    let members = tree.node_members(data);
    for leaf in tree.terminal_nodes() {
        let rows = &members[leaf.0];
        let log_f = |mu: f64| {
            let ll: f64 = rows
                .iter()
                .map(|i| {
                    -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln()
                        - (y[*i] - mu).powi(2) / (2.0 * sigma2)
                })
                .sum();
            ll + log_mu_prior(mu, prior)
        };
        let n = rows.len() as f64;
        let prec = n / sigma2 + 1.0 / prior.sigma_mu.powi(2);
        let mode = rows.iter().map(|i| y[*i]).sum::<f64>() / sigma2 / prec;
        let sd = prec.sqrt().recip();
        let peak = log_f(mode);
        let f = |mu: f64| (log_f(mu) - peak).exp();
        let integral = integrate(&f, mode - 40.0 * sd, mode + 40.0 * sd, 1e-13 * sd);
        total += peak + integral.ln();
    }
    total
}

#[test]
fn conjugate_marginal_matches_quadrature() {
    let mut rng = chain_rng(17, 0);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    while instances < 25 {
        let n = rng.random_range(6..40);
        let d = rng.random_range(1..=2);
        let columns: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let data = Dataset::with_uniform_grid(columns, y, 9, 1).unwrap();
        let terminals = rng.random_range(1..=3);
        let mut tree = Tree::root_only();
        while tree.n_terminal() < terminals {
            let leaves = tree.terminal_nodes();
            let leaf = leaves[rng.random_range(0..leaves.len())];
            let rule = SplitRule::new(rng.random_range(0..d), rng.random_range(0..9));
            tree = tree.apply_birth(leaf, rule).unwrap();
        }
        let sigma2 = rng.random_range(0.05..4.0);
        let prior = PriorConfig {
            sigma_mu: rng.random_range(0.1..3.0),
            ..PriorConfig::default()
        };
        let closed = log_marginal_likelihood(&tree, &data, sigma2, &prior);
        if !closed.is_finite() {
            // A cell is empty; draw again.
            continue;
        }
        let quad = quadrature_log_marginal(&tree, &data, sigma2, &prior);
        worst = worst.max((closed - quad).abs());
        instances += 1;
    }
    let pass = worst < 1e-6;
    report(
        3,
        "conjugate marginal likelihood",
        pass,
        &format!("max |closed form - quadrature| {worst:.2e} over 25 instances (< 1e-6)"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4, 5, 6

fn benchmark_runs(sigma2: f64, algorithms: &[Algorithm]) -> Vec<PosteriorSummary> {
    let sim = SimConfig {
        sigma2,
        seed: 2024,
        ..SimConfig::default()
    };
    let runs: Vec<RunConfig> = algorithms
        .iter()
        .map(|alg| {
            let mut run = RunConfig::new(*alg, ITERATIONS);
            run.burnin = BURNIN;
            run.seed = 7;
            run.replications = REPLICATIONS;
            run
        })
        .collect();
    run_simulated(&sim, &runs, |_, _| Ok(())).unwrap()
}

fn unit_noise_runs() -> &'static (Vec<PosteriorSummary>, f64) {
    static RUNS: OnceLock<(Vec<PosteriorSummary>, f64)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let runs = benchmark_runs(1.0, &Algorithm::ALL);
        (runs, start.elapsed().as_secs_f64())
    })
}

fn mean_of(runs: &[PosteriorSummary], alg: Algorithm, f: impl Fn(&PosteriorSummary) -> f64) -> f64 {
    let xs: Vec<f64> = runs.iter().filter(|s| s.algorithm == alg).map(f).collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn benchmark_at_unit_noise() {
    let (runs, secs) = unit_noise_runs();
    let mut lines = Vec::new();
    let mut pass = *secs <= 1800.0;
    for alg in Algorithm::ALL {
        let mse = mean_of(runs, alg, |s| s.mse);
        pass &= (mse - 1.02).abs() <= 0.08;
        lines.push(format!("{alg} mse {mse:.3}"));
    }
    let target = [0.26, 0.47, 0.26];
    let activity: Vec<f64> = (0..3)
        .map(|v| mean_of(runs, Algorithm::CtC, |s| s.activity[v]))
        .collect();
    pass &= activity
        .iter()
        .zip(target)
        .all(|(a, t)| (a - t).abs() <= 0.06);
    let unique: BTreeMap<Algorithm, f64> = Algorithm::ALL
        .iter()
        .map(|a| (*a, mean_of(runs, *a, |s| s.unique_trees)))
        .collect();
    let ordered = unique[&Algorithm::CtA] > unique[&Algorithm::RjA]
        && unique[&Algorithm::CtC] > unique[&Algorithm::RjA];
    pass &= ordered;
    report(
        4,
        "benchmark at noise variance 1",
        pass,
        &format!(
            "{}; CT-C activity {:.3?} (target {target:?} +- 0.06); unique trees CT-A {:.1}, CT-C {:.1}, RJ-A {:.1}; {secs:.0}s",
            lines.join(", "),
            activity,
            unique[&Algorithm::CtA],
            unique[&Algorithm::CtC],
            unique[&Algorithm::RjA]
        ),
    );
    assert!(pass);
}

#[test]
fn rao_blackwell_gain_at_low_noise() {
    let runs = benchmark_runs(0.01, &[Algorithm::CtC]);
    let rb = mean_of(&runs, Algorithm::CtC, |s| s.mse_noiseless.unwrap());
    let plain = mean_of(&runs, Algorithm::CtC, |s| {
        s.mse_noiseless_unweighted.unwrap()
    });
    let noisy = mean_of(&runs, Algorithm::CtC, |s| s.mse);
    let pass = rb < plain && rb <= 5e-4;
    report(
        5,
        "weighted estimator at noise variance 0.01",
        pass,
        &format!("CT-C error vs regression function: weighted {rb:.3e}, unweighted {plain:.3e} (weighted < unweighted, <= 5e-4); vs noisy test responses {noisy:.3e}"),
    );
    assert!(pass);
}

#[test]
fn continuous_time_mixes_faster() {
    let (runs, _) = unit_noise_runs();
    let names = ["x1", "x2", "x3"];
    let ratios: Vec<f64> = names
        .iter()
        .map(|v| {
            mean_of(runs, Algorithm::CtA, |s| s.ess[*v])
                / mean_of(runs, Algorithm::RjA, |s| s.ess[*v])
        })
        .collect();
    let pass = ratios.iter().all(|r| *r >= 3.0);
    report(
        6,
        "activity ESS CT-A over RJ-A",
        pass,
        &format!("ratios {ratios:.2?} (each >= 3)"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

fn trace_bits(chain: &[ChainRecord]) -> Vec<(String, u64, u64)> {
    chain
        .iter()
        .map(|r| {
            (
                r.tree.canonical(),
                r.sigma2.to_bits(),
                r.waiting_time.to_bits(),
            )
        })
        .collect()
}

#[test]
fn determinism() {
    let sim = ctbart::simdata::generate(&SimConfig {
        seed: 3,
        ..SimConfig::default()
    })
    .unwrap();
    let data = sim.data;
    let prior = PriorConfig::calibrated(data.response());
    let mut pass = true;
    let mut checked = Vec::new();
    for alg in Algorithm::ALL {
        let run = RunConfig {
            seed: 11,
            ..RunConfig::new(alg, 1500)
        };
        let traces: Vec<Vec<(String, u64, u64)>> = [1, 1, 4]
            .iter()
            .map(|threads| {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(*threads)
                    .build()
                    .unwrap();
                pool.install(|| {
                    trace_bits(
                        &run_chain(&data, &prior, &run, &mut chain_rng(run.seed, 0)).unwrap(),
                    )
                })
            })
            .collect();
        pass &= traces[0] == traces[1] && traces[0] == traces[2];
        let mut other = run.clone();
        other.parallel_candidates = false;
        pass &= trace_bits(&run_chain(&data, &prior, &other, &mut chain_rng(run.seed, 0)).unwrap())
            == traces[0];
        checked.push(alg.to_string());
    }
    report(
        7,
        "determinism",
        pass,
        &format!(
            "bitwise-equal traces across reruns and 1/4 worker threads for {}",
            checked.join(", ")
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

#[test]
fn equal_waits_make_estimators_agree() {
    let data = toy();
    let prior = PriorConfig::default();
    let mut pass = true;
    let mut compared = 0;
    for (alg, wait) in [
        (Algorithm::CtA, 0.37),
        (Algorithm::CtC, 1.0),
        (Algorithm::RjB, 2.5e-3),
    ] {
        let run = RunConfig::new(alg, 3000);
        let mut chain = run_chain(&data, &prior, &run, &mut chain_rng(4, 0)).unwrap();
        for r in chain.iter_mut() {
            r.waiting_time = wait;
        }
        let chain = post_burnin(&chain, 100);
        let g: [&dyn Fn(&ChainRecord) -> f64; 3] =
            [&|r| r.sigma2, &|r| r.tree.n_terminal() as f64, &|r| {
                f64::from(r.tree.n_internal() > 1)
            }];
        for g in g {
            pass &= rao_blackwell_mean(chain, g).unwrap().to_bits()
                == sample_mean(chain, g).unwrap().to_bits();
            compared += 1;
        }
        pass &= occupancy(chain, Weighting::RaoBlackwell).unwrap()
            == occupancy(chain, Weighting::SampleMean).unwrap();
        pass &= variable_activity(chain, 1, Weighting::RaoBlackwell).unwrap()
            == variable_activity(chain, 1, Weighting::SampleMean).unwrap();
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
        let a = predict(chain, &data, &prior, &rows, Weighting::RaoBlackwell).unwrap();
        let b = predict(chain, &data, &prior, &rows, Weighting::SampleMean).unwrap();
        pass &= a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
        compared += 3;
    }
    report(
        8,
        "equal holding times",
        pass,
        &format!("weighted and plain estimates bitwise equal on {compared} functionals"),
    );
    assert!(pass);
}
