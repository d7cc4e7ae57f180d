//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reveal_core::belief::{self, BuildOptions};
use reveal_core::cassandra::{parse_pomdp, serialize_pomdp};
use reveal_core::mdp_solve::{almost_sure_parity, brute_force_parity_oracle, MdpGraph};
use reveal_core::pipeline::{self, SupportStrategy};
use reveal_core::random::{random_mdp, random_pomdp, RandomParams};
use reveal_core::revelation;
use reveal_core::sim::bad_metric;
use reveal_core::Pomdp;
use serde_json::Value;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus(name: &str) -> String {
    root().join("corpus").join(name).to_string_lossy().into_owned()
}

fn reveal(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_reveal"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`reveal {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn reveal_json(args: &[&str]) -> Result<Value, String> {
    serde_json::from_str(&reveal(args)?).map_err(|e| e.to_string())
}

fn expect<T: PartialEq + std::fmt::Debug>(what: &str, got: T, want: T) -> Check {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got:?}, want {want:?}"))
    }
}

fn within(limit: Duration, start: Instant) -> Check {
    let took = start.elapsed();
    if took < limit {
        Ok(())
    } else {
        Err(format!("took {took:?}, limit {limit:?}"))
    }
}

fn load(name: &str) -> Result<Pomdp, String> {
    let text = std::fs::read_to_string(corpus(name)).map_err(|e| e.to_string())?;
    parse_pomdp(&text).map_err(|e| e.to_string())
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let file = corpus("tiger.pomdp");
    let c = reveal_json(&["classify", &file])?;
    expect("strongly", &c["strongly_revealing"], &Value::Bool(true))?;
    expect("weakly", &c["weakly_revealing"], &Value::Bool(true))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let strat_path = dir.path().join("tiger.json");
    let s = reveal_json(&["solve", &file, "--strategy-out", strat_path.to_str().unwrap()])?;
    expect("answer", s["answer"].as_str(), Some("EXACT_YES"))?;
    let pomdp = load("tiger.pomdp")?;
    let strategy = SupportStrategy::from_json(
        &pomdp,
        &std::fs::read_to_string(&strat_path).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    for (support, action) in [
        (&["tiger-left", "tiger-right"][..], "listen"),
        (&["tiger-left"][..], "open-right"),
        (&["tiger-right"][..], "open-left"),
    ] {
        let b = pomdp.support_from_names(support).map_err(|e| e.to_string())?;
        let got = strategy.get(&b).map(|a| pomdp.action_name(a));
        expect(&format!("choice at {support:?}"), got, Some(action))?;
    }

    let csv_path = dir.path().join("metric.csv");
    let stats = reveal_json(&[
        "simulate",
        &file,
        "--strategy",
        strat_path.to_str().unwrap(),
        "--runs",
        "500",
        "--steps",
        "500",
        "--seed",
        "42",
        "--csv-out",
        csv_path.to_str().unwrap(),
    ])?;
    let done = stats["reached"]["done"].as_u64().unwrap_or(0);
    if done < 499 {
        return Err(format!("only {done}/500 runs absorbed in done"));
    }
    // from the first visit to `done` on, the metric must stay 0
    let csv = std::fs::read_to_string(&csv_path).map_err(|e| e.to_string())?;
    let done_prio = pomdp.priority(pomdp.state_index("done").unwrap());
    let mut runs: Vec<Vec<(u32, u64)>> = vec![Vec::new(); 500];
    for line in csv.lines().skip(1) {
        let f: Vec<u64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        runs[f[0] as usize].push((f[3] as u32, f[2]));
    }
    for (i, run) in runs.iter().enumerate() {
        // `done` is the only priority-2 state
        if let Some(k) = run.iter().position(|&(p, _)| p == done_prio) {
            if run[k..].iter().any(|&(_, m)| m != 0) {
                return Err(format!("run {i}: non-zero metric after absorption"));
            }
        }
    }
    within(Duration::from_secs(5), start)
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let file = corpus("leaky-loop.pomdp");
    let c = reveal_json(&["classify", &file])?;
    expect("weakly", &c["weakly_revealing"], &Value::Bool(false))?;
    let s = reveal_json(&["solve", &file])?;
    expect("belief_mdp_winning", &s["belief_mdp_winning"], &Value::Bool(true))?;
    expect("answer", s["answer"].as_str(), Some("UNKNOWN"))?;
    expect("regime", s["regime"].as_str(), Some("GENERAL"))?;
    within(Duration::from_secs(1), start)
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let file = corpus("infinite-memory.pomdp");
    let c = reveal_json(&["classify", &file])?;
    expect("strongly", &c["strongly_revealing"], &Value::Bool(false))?;
    expect("weakly", &c["weakly_revealing"], &Value::Bool(true))?;
    let pomdp = load("infinite-memory.pomdp")?;
    let bm = belief::build_belief_mdp(&pomdp, &BuildOptions::default()).map_err(|e| e.to_string())?;
    let mut prios = bm.priorities().values().to_vec();
    prios.sort_unstable();
    expect("lifted priorities", prios, vec![1, 1, 3])?;
    let s = reveal_json(&["solve", &file])?;
    expect("nodes", s["belief_mdp_nodes"].as_u64(), Some(3))?;
    expect("belief_mdp_winning", &s["belief_mdp_winning"], &Value::Bool(false))?;
    expect("answer", s["answer"].as_str(), Some("UNKNOWN"))?;
    expect("regime", s["regime"].as_str(), Some("WEAK_HIGH"))?;
    within(Duration::from_secs(1), start)
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let pomdp = load("guess-door.pomdp")?;
    let mdp = reveal_core::model::underlying_mdp(&pomdp);
    let sol = almost_sure_parity(&MdpGraph::from_mdp(&mdp), mdp.priorities.as_ref().unwrap());
    expect(
        "underlying MDP wins from the initial state",
        sol.winning[mdp.initial_state],
        true,
    )?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let sr = dir.path().join("sr.pomdp");
    reveal(&[
        "transform-sr",
        &corpus("guess-door.pomdp"),
        "--epsilon",
        "0.1",
        "-o",
        sr.to_str().unwrap(),
    ])?;
    let c = reveal_json(&["classify", sr.to_str().unwrap()])?;
    expect("sr variant strongly", &c["strongly_revealing"], &Value::Bool(true))?;
    let s = reveal_json(&["solve", sr.to_str().unwrap()])?;
    expect("sr variant answer", s["answer"].as_str(), Some("EXACT_NO"))?;
    within(Duration::from_secs(1), start)
}

fn criterion_5() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for n in 2..=8u32 {
        let start = Instant::now();
        let path = dir.path().join(format!("exp{n}.pomdp"));
        reveal(&["gen-exp", &n.to_string(), "-o", path.to_str().unwrap()])?;
        let all: Vec<String> = (0..=n).map(|i| format!("q{i}")).collect();
        let stats = reveal_json(&["export", path.to_str().unwrap(), "--stats", "--from", &all.join(",")])?;
        expect(
            &format!("n={n} distance"),
            stats["revelation_distance"].as_u64(),
            Some((1u64 << n) - 1),
        )?;
        within(Duration::from_secs(10), start)?;
    }
    Ok(())
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut agree = 0;
    for i in 0..200 {
        let states = 1 + i % 6;
        let actions = 1 + (i / 6) % 3;
        let mdp = random_mdp(&mut rng, states, actions, 3);
        let g = MdpGraph::from_mdp(&mdp);
        let prios = mdp.priorities.clone().unwrap();
        let oracle = brute_force_parity_oracle(&g, &prios).map_err(|e| e.to_string())?;
        if almost_sure_parity(&g, &prios).winning == oracle {
            agree += 1;
        }
    }
    expect("oracle agreement", agree, 200)?;
    within(Duration::from_secs(60), start)
}

fn random_small_pomdp(rng: &mut ChaCha8Rng, i: usize) -> Pomdp {
    let params = RandomParams {
        states: 1 + i % 5,
        actions: 1 + (i / 5) % 2,
        signals: 1 + (i / 10) % 3,
        max_priority: 3,
        max_branching: 3,
    };
    random_pomdp(rng, &params)
}

fn criterion_7() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut a, mut b, mut c) = (0, 0, 0);
    let (mut strong, mut weak) = (0, 0);
    for i in 0..100 {
        let p = random_small_pomdp(&mut rng, i);
        let v = revelation::classify(&p, 1 << 20).map_err(|e| e.to_string())?;
        strong += v.strongly as usize;
        weak += v.weakly as usize;
        if !v.strongly || v.weakly {
            a += 1;
        }
        let sr = pipeline::transform_sr(&p, 0.1).map_err(|e| e.to_string())?;
        if revelation::is_strongly_revealing(&sr).0 {
            b += 1;
        }
        let ok = !v.weakly || {
            let bm = belief::build_belief_mdp(&p, &BuildOptions::default()).map_err(|e| e.to_string())?;
            (0..bm.num_nodes()).all(|n| belief::revelation_distance(&bm, n, true).is_some())
        };
        if ok {
            c += 1;
        }
    }
    println!("  {strong} strongly and {weak} weakly revealing instances of 100");
    expect("(a) strongly => weakly", a, 100)?;
    expect("(b) transform_sr strongly revealing", b, 100)?;
    expect("(c) weakly => path to a singleton", c, 100)?;
    within(Duration::from_secs(60), start)
}

fn same_model(p: &Pomdp, q: &Pomdp) -> bool {
    p.state_names() == q.state_names()
        && p.action_names() == q.action_names()
        && p.signal_names() == q.signal_names()
        && p.priorities() == q.priorities()
        && (0..p.num_states()).all(|s| {
            (0..p.num_actions()).all(|a| {
                let (r1, r2) = (p.row(s, a), q.row(s, a));
                r1.len() == r2.len()
                    && r1
                        .iter()
                        .zip(r2)
                        .all(|(x, y)| x.signal == y.signal && x.next == y.next && (x.prob - y.prob).abs() <= 1e-9)
            })
        })
}

fn criterion_8() -> Check {
    let mut models = Vec::new();
    for name in ["tiger.pomdp", "leaky-loop.pomdp", "infinite-memory.pomdp", "guess-door.pomdp", "slow-reveal-2.pomdp"] {
        models.push((name.to_string(), load(name)?));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..100 {
        models.push((format!("random #{i}"), random_small_pomdp(&mut rng, i)));
    }
    let total = models.len();
    let mut ok = 0;
    for (name, p) in &models {
        match parse_pomdp(&serialize_pomdp(p)) {
            Ok(q) if same_model(p, &q) => ok += 1,
            Ok(_) => eprintln!("  {name}: round-trip changed the model"),
            Err(e) => eprintln!("  {name}: {e}"),
        }
    }
    expect("round-trips", ok, total)
}

fn main() {
    // sanity of the metric rule used by criterion 1
    assert_eq!(bad_metric(&[1, 1, 2, 1]), [0, 1, 0, 0]);
    let criteria: [Criterion; 8] = [
        ("tiger end-to-end", criterion_1),
        ("leaky loop: unsound abstraction", criterion_2),
        ("infinite-memory instance: incomplete abstraction", criterion_3),
        ("guess-door: strongly revealing variant", criterion_4),
        ("exponential revelation family", criterion_5),
        ("solver/oracle equivalence", criterion_6),
        ("revelation consistency", criterion_7),
        ("format round-trip", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(()) => println!("criterion {} ({name}): PASS", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL: {e}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
