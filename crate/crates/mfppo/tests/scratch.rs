//! Temporary diagnostic — deleted before shipping.

use mfppo::envs::scenario;
use mfppo::mdp::MeanFieldEnv;
use mfppo::net::{grouped_counts, DeepSetParams, FeatureLayout};
use mfppo::oracle::build_quotient;
use mfppo::policy::EnergyPolicy;
use mfppo::trainer::{mf_ppo, td_policy_evaluation, TrainSchedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn anatomy() {
    use mfppo::policy::Policy;
    use mfppo::trainer::{sgd_policy_improvement, sample_stationary};
    let env = scenario("nav-3x3-n2").unwrap();
    let q = build_quotient(env.as_ref()).unwrap();
    let na = q.num_actions;
    let nc = q.classes.len();
    let (_, greedy_star) = q.optimal_value(1e-10).unwrap();
    let layout = FeatureLayout::new(env.num_states(), na).unwrap();

    // A retreat-critical class and a split (approach) class for contrast.
    let c_r = 1usize;
    let c_a = (0..nc).find(|&c| greedy_star[c] == 0).unwrap();
    println!(
        "retreat class {c_r}: {:?}; approach class {c_a}: {:?}",
        q.classes[c_r], q.classes[c_a]
    );

    let k_total = 16usize;
    let schedule = TrainSchedule::new(k_total, 2000, 1.0, 0.9, 8.0, 8.0, 512, 512);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let actor_init = DeepSetParams::init(512, layout.dim(), 8.0, &mut rng).unwrap();
    let critic_init = actor_init.sibling_with_radius(8.0);
    let mut actor = actor_init.clone();
    let mut critic = critic_init.clone();

    let row_of = |p: &DeepSetParams, c: usize| -> Vec<f64> {
        let obs = q.classes[c].representative_obs();
        let counts = grouped_counts(&obs.population);
        (0..na)
            .map(|a| {
                p.forward_counts(obs.self_state, &counts, env.num_agents(), a, &layout).unwrap()
            })
            .collect()
    };

    for k in 0..k_total {
        let tau_k = schedule.tau(k);
        let policy_k = EnergyPolicy::new(actor.clone(), tau_k, na).unwrap();
        critic = td_policy_evaluation(env.as_ref(), &policy_k, critic, &schedule, &mut rng)
            .unwrap();
        actor = sgd_policy_improvement(
            env.as_ref(),
            &policy_k,
            &critic,
            actor,
            &schedule,
            k,
            &mut rng,
        )
        .unwrap();

        // Diagnostics: policy at the retreat class, critic and actor rows.
        let obs_r = q.classes[c_r].representative_obs();
        let pi_r = policy_k.action_distribution(&obs_r).unwrap();
        // Estimate nu_k(c_r) from 300 stationary draws.
        let mut hits = 0;
        for _ in 0..300 {
            let tr = sample_stationary(env.as_ref(), &policy_k, schedule.burn_in, &mut rng)
                .unwrap();
            let counts = grouped_counts(&tr.obs.population);
            let is_cr = tr.obs.self_state == obs_r.self_state
                && counts == grouped_counts(&obs_r.population);
            if is_cr {
                hits += 1;
            }
        }
        let crow = row_of(&critic, c_r);
        let arow = row_of(&actor, c_r);
        println!(
            "k={k:2} tau={tau_k:.3} | pi(c_r)={:?} nu~{:.3} | critic_r={:?} | actor_r={:?}",
            pi_r.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>(),
            hits as f64 / 300.0,
            crow.iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>(),
            arow.iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>(),
        );
    }
}

#[test]
fn sweep() {
    use mfppo::envs::{GridNavEnv, GridWorldSpec, RebalanceRule};
    use RebalanceRule::{Farthest, SecondNearest};
    for (n, gamma, slip, rule, landmarks) in [
        (2, 0.9, 0.1, SecondNearest, vec![(0, 0), (2, 2), (2, 0)]),
        (2, 0.9, 0.1, Farthest, vec![(0, 0), (2, 2), (2, 0)]),
        (2, 0.9, 0.1, Farthest, vec![(0, 0), (2, 2), (0, 2)]),
        (2, 0.9, 0.1, Farthest, vec![(0, 0), (2, 0), (0, 2)]),
        (2, 0.9, 0.1, Farthest, vec![(0, 0), (2, 2), (1, 1)]),
        (2, 0.9, 0.1, Farthest, vec![(0, 0), (2, 2), (2, 0), (0, 2)]),
        (2, 0.9, 0.1, SecondNearest, vec![(0, 0), (2, 2), (2, 0), (0, 2)]),
        (3, 0.9, 0.1, Farthest, vec![(0, 0), (2, 2), (2, 0)]),
        (2, 0.95, 0.1, Farthest, vec![(0, 0), (2, 2), (2, 0)]),
        (2, 0.85, 0.1, Farthest, vec![(0, 0), (2, 2), (2, 0)]),
        (2, 0.9, 0.2, Farthest, vec![(0, 0), (2, 2), (2, 0)]),
    ] {
        println!("n={n} gamma={gamma} slip={slip} rule={rule:?} landmarks={landmarks:?}");
        let env = GridNavEnv::with_rule(
            GridWorldSpec { side: 3, num_agents: n, gamma, slip },
            landmarks,
            rule,
            "sweep",
        )
        .unwrap();
        let q = build_quotient(&env).unwrap();
        let na = q.num_actions;
        let nc = q.classes.len();
        let (vstar, greedy_star) = q.optimal_value(1e-10).unwrap();
        let one_hot = |assign: &[usize]| -> Vec<Vec<f64>> {
            assign
                .iter()
                .map(|&a| {
                    let mut row = vec![0.0; na];
                    row[a] = 1.0;
                    row
                })
                .collect()
        };
        let star_rows = one_hot(&greedy_star);
        let nu_star = q.stationary_distribution(&star_rows).unwrap();
        let w_star: f64 = nu_star.iter().zip(&vstar).map(|(n, v)| n * v).sum();
        let weighted = |assign: &[usize]| -> f64 {
            let v = q.exact_v(&one_hot(assign)).unwrap();
            nu_star.iter().zip(&v).map(|(n, v)| n * v).sum()
        };
        let w_app = weighted(&vec![0; nc]);
        let w_reb = weighted(&vec![1; nc]);
        let uniform_rows = vec![vec![1.0 / na as f64; na]; nc];
        let q_u = q.exact_q(&uniform_rows).unwrap();
        let pi1: Vec<usize> = q_u
            .iter()
            .map(|row| (0..na).fold(0, |b, a| if row[a] > row[b] { a } else { b }))
            .collect();
        let w_pi1 = weighted(&pi1);
        // The visit-weighted mean action contrast under the uniform policy:
        // the signal the actor's fastest (global-offset) channel integrates.
        let sigma_u = q.stationary_distribution(&uniform_rows).unwrap();
        let g_global: f64 =
            sigma_u.iter().zip(&q_u).map(|(s, row)| s * (row[0] - row[1])).sum();
        // Same contrast restricted to the two most nu*-weighted classes.
        let mut order: Vec<usize> = (0..nc).collect();
        order.sort_by(|&a, &b| nu_star[b].total_cmp(&nu_star[a]));
        let fat: Vec<f64> =
            order.iter().take(2).map(|&c| q_u[c][0] - q_u[c][1]).collect();
        let hist_star: Vec<usize> =
            (0..na).map(|a| greedy_star.iter().filter(|&&g| g == a).count()).collect();
        println!(
            "  V*={w_star:.5} hist*={hist_star:?} | gap(app)={:.2}% gap(reb)={:.2}% gap(PI1)={:.3}% | g_global={:+.5} fat contrasts={:?}",
            100.0 * (w_star - w_app) / w_star.abs(),
            100.0 * (w_star - w_reb) / w_star.abs(),
            100.0 * (w_star - w_pi1) / w_star.abs(),
            g_global,
            fat.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>(),
        );
    }
}

#[test]
fn pipeline() {
    let gamma = 0.9;
    let env = scenario("nav-3x3-n2").unwrap();
    let env = env.as_ref();
    let q = build_quotient(env).unwrap();
    let nc = q.classes.len();
    let na = q.num_actions;
    let (vstar, greedy_star) = q.optimal_value(1e-10).unwrap();
    let star_rows: Vec<Vec<f64>> = greedy_star
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; na];
            row[a] = 1.0;
            row
        })
        .collect();
    let nu_star = q.stationary_distribution(&star_rows).unwrap();
    let vstar_weighted: f64 = nu_star.iter().zip(&vstar).map(|(n, v)| n * v).sum();
    let hist_star: Vec<usize> =
        (0..na).map(|a| greedy_star.iter().filter(|&&g| g == a).count()).collect();
    println!("nu*-weighted V*: {vstar_weighted:.6} hist*={hist_star:?}");
    let layout = FeatureLayout::new(env.num_states(), na).unwrap();

    for (k, seed) in [(16usize, 7u64), (64, 7)] {
        let start = std::time::Instant::now();
        let mut sched = TrainSchedule::new(k, 2000, 1.0, gamma, 32.0, 8.0, 512, 512);
        sched.seed = seed;
        let result = mf_ppo(env, &sched).unwrap();
        println!("  actor |w - w0| = {:.3} (ball 32)", result.actor.distance_from_init());
        let greedy: Vec<usize> = q
            .classes
            .iter()
            .map(|class| {
                let obs = class.representative_obs();
                let counts = grouped_counts(&obs.population);
                let row: Vec<f64> = (0..na)
                    .map(|a| {
                        result
                            .actor
                            .forward_counts(obs.self_state, &counts, env.num_agents(), a, &layout)
                            .unwrap()
                    })
                    .collect();
                (0..na).fold(0, |b, a| if row[a] > row[b] { a } else { b })
            })
            .collect();
        let rows: Vec<Vec<f64>> = greedy
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; na];
                row[a] = 1.0;
                row
            })
            .collect();
        let v = q.exact_v(&rows).unwrap();
        let w: f64 = nu_star.iter().zip(&v).map(|(n, v)| n * v).sum();
        let hist: Vec<usize> = (0..na).map(|a| greedy.iter().filter(|&&g| g == a).count()).collect();
        let agree = greedy.iter().zip(&greedy_star).filter(|(a, b)| a == b).count();
        println!(
            "K={k}: value={w:.6} gap={:.3}% hist={hist:?} agree*={agree}/{nc} wall={:.1}s",
            100.0 * (vstar_weighted - w) / vstar_weighted.abs(),
            start.elapsed().as_secs_f64()
        );

        // Final-critic diagnostics: its greedy ranking vs the exact Q of the
        // final greedy policy, and the rows at the retreat-critical classes.
        let mfppo::trainer::CriticParams::DeepSet(ref cp) = result.critic else { panic!() };
        let q_pi = q.exact_q(&rows).unwrap();
        let crit_rows: Vec<Vec<f64>> = q
            .classes
            .iter()
            .map(|class| {
                let obs = class.representative_obs();
                let counts = grouped_counts(&obs.population);
                (0..na)
                    .map(|a| {
                        cp.forward_counts(obs.self_state, &counts, env.num_agents(), a, &layout)
                            .unwrap()
                    })
                    .collect()
            })
            .collect();
        let crit_hist: Vec<usize> = (0..na)
            .map(|a| {
                crit_rows
                    .iter()
                    .filter(|row| (0..na).fold(0, |b, x| if row[x] > row[b] { x } else { b }) == a)
                    .count()
            })
            .collect();
        let crit_agree_star = crit_rows
            .iter()
            .zip(&greedy_star)
            .filter(|(row, &g)| (0..na).fold(0, |b, x| if row[x] > row[b] { x } else { b }) == g)
            .count();
        println!("  critic: greedy-hist={crit_hist:?} agree*={crit_agree_star}/{nc}");
        // Detail at the ten most nu*-weighted classes: star action, exact Q
        // under the uniform policy, critic row, actor row.
        let uniform_rows = vec![vec![1.0 / na as f64; na]; nc];
        let q_u = q.exact_q(&uniform_rows).unwrap();
        let sigma_u = q.stationary_distribution(&uniform_rows).unwrap();
        let mut order: Vec<usize> = (0..nc).collect();
        order.sort_by(|&a, &b| nu_star[b].total_cmp(&nu_star[a]));
        for &c in order.iter().take(10) {
            let arow: Vec<f64> = {
                let obs = q.classes[c].representative_obs();
                let counts = grouped_counts(&obs.population);
                (0..na)
                    .map(|a| {
                        result
                            .actor
                            .forward_counts(obs.self_state, &counts, env.num_agents(), a, &layout)
                            .unwrap()
                    })
                    .collect()
            };
            println!(
                "  c={c:2} nu*={:.3} sig_u={:.4} star={} pick={} | Qu={:?} crit={:?} act={:?}",
                nu_star[c],
                sigma_u[c],
                greedy_star[c],
                greedy[c],
                q_u[c].iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>(),
                crit_rows[c].iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>(),
                arow.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>(),
            );
        }
        let _ = &q_pi;
    }
}

#[test]
fn seeds() {
    let env = scenario("nav-3x3-n2").unwrap();
    let env = env.as_ref();
    let q = build_quotient(env).unwrap();
    let nc = q.classes.len();
    let na = q.num_actions;
    let (vstar, greedy_star) = q.optimal_value(1e-10).unwrap();
    let star_rows: Vec<Vec<f64>> = greedy_star
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; na];
            row[a] = 1.0;
            row
        })
        .collect();
    let nu_star = q.stationary_distribution(&star_rows).unwrap();
    let vstar_weighted: f64 = nu_star.iter().zip(&vstar).map(|(n, v)| n * v).sum();
    let layout = FeatureLayout::new(env.num_states(), na).unwrap();
    let start = std::time::Instant::now();

    let gap_of = |k: usize, seed: u64| -> f64 {
        let mut sched = TrainSchedule::new(k, 2000, 1.0, 0.9, 32.0, 8.0, 512, 512);
        sched.seed = seed;
        let result = mf_ppo(env, &sched).unwrap();
        let rows: Vec<Vec<f64>> = q
            .classes
            .iter()
            .map(|class| {
                let obs = class.representative_obs();
                let counts = grouped_counts(&obs.population);
                let row: Vec<f64> = (0..na)
                    .map(|a| {
                        result
                            .actor
                            .forward_counts(obs.self_state, &counts, env.num_agents(), a, &layout)
                            .unwrap()
                    })
                    .collect();
                let top = (0..na).fold(0, |b, a| if row[a] > row[b] { a } else { b });
                let mut r = vec![0.0; na];
                r[top] = 1.0;
                r
            })
            .collect();
        let v = q.exact_v(&rows).unwrap();
        let w: f64 = nu_star.iter().zip(&v).map(|(n, v)| n * v).sum();
        100.0 * (vstar_weighted - w) / vstar_weighted.abs()
    };

    for seeds in [[0u64, 1, 2, 3, 4], [11, 12, 13, 14, 15]] {
        let mut g16: Vec<f64> = seeds.iter().map(|&s| gap_of(16, s)).collect();
        let mut g64: Vec<f64> = seeds.iter().map(|&s| gap_of(64, s)).collect();
        g16.sort_by(f64::total_cmp);
        g64.sort_by(f64::total_cmp);
        println!(
            "seeds {seeds:?}: K=16 gaps {:?} median {:.2}% | K=64 gaps {:?} median {:.2}%",
            g16.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>(),
            g16[2],
            g64.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>(),
            g64[2],
        );
    }
    println!("total wall: {:.1}s (nc={nc})", start.elapsed().as_secs_f64());
}

#[test]
fn criterion5() {
    let env = scenario("tabular-3s-n4").unwrap();
    let env = env.as_ref();
    let q = build_quotient(env).unwrap();
    let nc = q.classes.len();
    let na = q.num_actions;
    let uniform_rows = vec![vec![1.0 / na as f64; na]; nc];
    let q_u = q.exact_q(&uniform_rows).unwrap();
    let sigma_u = q.stationary_distribution(&uniform_rows).unwrap();
    let layout = FeatureLayout::new(env.num_states(), na).unwrap();
    let start = std::time::Instant::now();

    let rmse_of = |p: &DeepSetParams| -> f64 {
        let mut num = 0.0;
        for (c, class) in q.classes.iter().enumerate() {
            let obs = class.representative_obs();
            let counts = grouped_counts(&obs.population);
            for a in 0..na {
                let f = p
                    .forward_counts(obs.self_state, &counts, env.num_agents(), a, &layout)
                    .unwrap();
                num += sigma_u[c] / na as f64 * (f - q_u[c][a]).powi(2);
            }
        }
        num.sqrt()
    };

    // Inline TD with both last-iterate and running-average trackers.
    use mfppo::trainer::sample_stationary;
    let t_total = 5000usize;
    let eta = 1.0 / (t_total as f64).sqrt();
    let gamma = 0.9;
    let burn_in = 50;
    let mut rmses: Vec<f64> = Vec::new();
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut critic = DeepSetParams::init(512, layout.dim(), 8.0, &mut rng).unwrap();
        let policy0 =
            EnergyPolicy::new(DeepSetParams::zeroed(layout.dim()), 1.0, na).unwrap();
        let mut sum = vec![0.0; critic.weights.len()];
        let mut counts_buf = Vec::new();
        for t in 0..t_total {
            for (s, w) in sum.iter_mut().zip(&critic.weights) {
                *s += w;
            }
            let tr = sample_stationary(env, &policy0, burn_in, &mut rng).unwrap();
            grouped_counts_into_scratch(&tr.obs.population, &mut counts_buf);
            let n = tr.obs.population.num_agents();
            let here = critic
                .forward_counts(tr.obs.self_state, &counts_buf, n, tr.action_id, &layout)
                .unwrap();
            let mut counts2 = Vec::new();
            grouped_counts_into_scratch(&tr.next_obs.population, &mut counts2);
            let there = critic
                .forward_counts(
                    tr.next_obs.self_state,
                    &counts2,
                    n,
                    tr.next_action_id,
                    &layout,
                )
                .unwrap();
            let delta = here - (1.0 - gamma) * tr.reward - gamma * there;
            critic.sgd_step_counts(
                tr.obs.self_state,
                &counts_buf,
                n,
                tr.action_id,
                &layout,
                eta * delta,
            );
            critic.project_ball();
            if (t + 1) % 1000 == 0 {
                let mut avg = critic.clone();
                for (a, s) in avg.weights.iter_mut().zip(&sum) {
                    *a = s / (t + 1) as f64;
                }
                println!(
                    "  seed {seed} t={}: last RMSE {:.4} avg RMSE {:.4} |w-w0| {:.2}",
                    t + 1,
                    rmse_of(&critic),
                    rmse_of(&avg),
                    critic.distance_from_init()
                );
            }
        }
        rmses.push(rmse_of(&critic));
    }
    rmses.sort_by(f64::total_cmp);
    println!("tabular TD last-iterate RMSEs: {rmses:?} wall {:.1}s",
        start.elapsed().as_secs_f64());
}

fn grouped_counts_into_scratch(config: &mfppo::mdp::JointConfig, out: &mut Vec<(usize, u32)>) {
    out.clear();
    out.extend(grouped_counts(config));
}

#[test]
fn criterion8() {
    use mfppo::trainer::{mf_ppo_with, CriticKind, TrainOptions};
    let env = scenario("nav-4x4-n4").unwrap();
    let env = env.as_ref();
    let start = std::time::Instant::now();
    let mut wins = 0;
    for seed in 0..5u64 {
        let mut sched = TrainSchedule::new(16, 1000, 1.0, 0.9, 32.0, 8.0, 512, 512);
        sched.seed = seed;
        let mut returns = [0.0f64; 2];
        for (i, kind) in [CriticKind::DeepSet, CriticKind::Mlp].into_iter().enumerate() {
            let options = TrainOptions { critic_kind: kind, ..TrainOptions::default() };
            let result = mf_ppo_with(env, &sched, &options).unwrap();
            returns[i] = result.records.last().unwrap().est_value;
        }
        println!("seed {seed}: deepset {:.4} mlp {:.4}", returns[0], returns[1]);
        if returns[0] > returns[1] {
            wins += 1;
        }
    }
    println!("deepset wins {wins}/5, wall {:.1}s", start.elapsed().as_secs_f64());
}

#[test]
fn diagnose() {
    let env = scenario("nav-3x3-n2").unwrap();
    let q = build_quotient(env.as_ref()).unwrap();
    let nc = q.classes.len();
    let na = q.num_actions;
    let (vstar, greedy_star) = q.optimal_value(1e-10).unwrap();
    let star_rows: Vec<Vec<f64>> = greedy_star
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; na];
            row[a] = 1.0;
            row
        })
        .collect();
    let nu_star = q.stationary_distribution(&star_rows).unwrap();
    let vstar_weighted: f64 = nu_star.iter().zip(&vstar).map(|(n, v)| n * v).sum();
    println!("nu*-weighted V*: {vstar_weighted:.6}");

    // Exact PI step 1: greedy w.r.t. Q under the uniform policy.
    let uniform_rows = vec![vec![1.0 / na as f64; na]; nc];
    let q_uniform = q.exact_q(&uniform_rows).unwrap();
    let pi1: Vec<usize> = q_uniform
        .iter()
        .map(|row| (0..na).fold(0, |b, a| if row[a] > row[b] { a } else { b }))
        .collect();
    let pi1_rows: Vec<Vec<f64>> = pi1
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; na];
            row[a] = 1.0;
            row
        })
        .collect();
    let v_pi1 = q.exact_v(&pi1_rows).unwrap();
    let w_pi1: f64 = nu_star.iter().zip(&v_pi1).map(|(n, v)| n * v).sum();
    let hist1: Vec<usize> = (0..na).map(|a| pi1.iter().filter(|&&g| g == a).count()).collect();
    println!(
        "PI-step-1 from exact Q_uniform: value={w_pi1:.6} gap={:.3}% hist={hist1:?}",
        100.0 * (vstar_weighted - w_pi1) / vstar_weighted.abs()
    );

    // Stationary class distribution under the uniform policy (TD's sigma_k).
    let sigma_u = q.stationary_distribution(&uniform_rows).unwrap();

    // k=0 TD probe: fit a fresh paired-init critic against the uniform policy
    // and compare its table to the oracle.
    let layout = FeatureLayout::new(env.num_states(), na).unwrap();
    let schedule = TrainSchedule::new(16, 2000, 1.0, 0.9, 8.0, 8.0, 512, 512);
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let critic0 = DeepSetParams::init(512, layout.dim(), 8.0, &mut rng).unwrap();
    let policy0 = EnergyPolicy::new(DeepSetParams::zeroed(layout.dim()), 1.0, na).unwrap();
    let fitted =
        td_policy_evaluation(env.as_ref(), &policy0, critic0, &schedule, &mut rng).unwrap();

    // Tabulate the fitted critic on every class representative.
    let mut rmse_num = 0.0;
    let mut rank_hits = 0;
    let mut weighted_rank_hits = 0.0;
    let mut qhat_rows: Vec<Vec<f64>> = Vec::with_capacity(nc);
    for (c, class) in q.classes.iter().enumerate() {
        let obs = class.representative_obs();
        let row: Vec<f64> = (0..na)
            .map(|a| {
                let counts = mfppo::net::grouped_counts(&obs.population);
                fitted
                    .forward_counts(obs.self_state, &counts, env.num_agents(), a, &layout)
                    .unwrap()
            })
            .collect();
        for a in 0..na {
            rmse_num += sigma_u[c] / na as f64 * (row[a] - q_uniform[c][a]).powi(2);
        }
        let top = (0..na).fold(0, |b, a| if row[a] > row[b] { a } else { b });
        if top == pi1[c] {
            rank_hits += 1;
            weighted_rank_hits += nu_star[c];
        }
        qhat_rows.push(row);
    }
    println!("k=0 TD: sigma-weighted RMSE vs exact Q_uniform = {:.4}", rmse_num.sqrt());
    println!(
        "k=0 TD: argmax agreement with PI-step-1: {rank_hits}/{nc} (nu*-weighted {:.3})",
        weighted_rank_hits
    );

    // Value of greedy w.r.t. the *estimated* Q.
    let ghat: Vec<usize> = qhat_rows
        .iter()
        .map(|row| (0..na).fold(0, |b, a| if row[a] > row[b] { a } else { b }))
        .collect();
    let ghat_rows: Vec<Vec<f64>> = ghat
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; na];
            row[a] = 1.0;
            row
        })
        .collect();
    let v_ghat = q.exact_v(&ghat_rows).unwrap();
    let w_ghat: f64 = nu_star.iter().zip(&v_ghat).map(|(n, v)| n * v).sum();
    let hist_g: Vec<usize> = (0..na).map(|a| ghat.iter().filter(|&&g| g == a).count()).collect();
    println!(
        "k=0 TD: greedy(Q-hat) value={w_ghat:.6} gap={:.3}% hist={hist_g:?}",
        100.0 * (vstar_weighted - w_ghat) / vstar_weighted.abs()
    );

    // Error decomposition at the three most nu*-weighted classes.
    let mut order: Vec<usize> = (0..nc).collect();
    order.sort_by(|&a, &b| nu_star[b].total_cmp(&nu_star[a]));
    for &c in order.iter().take(3) {
        println!(
            "class {c} (nu*={:.3}, sigma_u={:.4}): exact={:?}",
            nu_star[c],
            sigma_u[c],
            q_uniform[c].iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
        println!(
            "    qhat={:?}",
            qhat_rows[c].iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>()
        );
    }
}
