//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p classroom-server --test acceptance`.

mod common;
#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use classroom_core::analytics::{compute_kpis, kc_summary, score_histogram, student_score};
use classroom_core::clustering::{
    agnes, choose_k, cut_tree, fit_all, gower_dissimilarity, select_model, DissimilarityMatrix, Linkage,
};
use classroom_core::domain::{class_progress, extract_features};
use classroom_core::ingest::{parse_events, ColumnMapping, ReplayPlan};
use classroom_core::{ActivityEvent, EventKind, EventLog, FeatureMatrix, InclusionPolicy};
use classroom_server::{ClusteringView, Engine, ServerConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn int_matrix(rng: &mut StdRng, n: usize, p: usize, hi: i64) -> Vec<Vec<i64>> {
    (0..n)
        .map(|_| (0..p).map(|_| rng.gen_range(0..=hi)).collect())
        .collect()
}

fn as_f64(rows: &[Vec<i64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

fn random_condensed(rng: &mut StdRng, n: usize, coarse: bool) -> DissimilarityMatrix {
    let c: Vec<f64> = (0..n * (n - 1) / 2)
        .map(|_| {
            if coarse {
                rng.gen_range(0..16) as f64 / 4.0
            } else {
                rng.gen::<f64>()
            }
        })
        .collect();
    DissimilarityMatrix::from_condensed(n, &c).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let (mut matrices, mut skipped) = (0, 0);
    while matrices < 500 {
        let (n, p) = (rng.gen_range(2..=12), rng.gen_range(1..=6));
        let hi = rng.gen_range(1..=9);
        let rows = int_matrix(&mut rng, n, p, hi);
        let Some(dq) = oracle::exact::gower(&rows) else {
            skipped += 1;
            continue;
        };
        let d = gower_dissimilarity(&FeatureMatrix::numeric(as_f64(&rows)).unwrap()).map_err(|e| e.to_string())?;
        for linkage in Linkage::ALL {
            let model = agnes(&d, linkage).map_err(|e| e.to_string())?;
            let members = model.trace.members();
            let want = oracle::exact::agnes(&dq, linkage);
            for (t, (m, &(lo, hi, h, size))) in model.trace.steps().iter().zip(&want).enumerate() {
                let got = (members[m.left][0], members[m.right][0]);
                ensure(got == (lo, hi) && m.size == size, || {
                    format!(
                        "{linkage} step {t}: partners {got:?} vs oracle {:?} on {rows:?}",
                        (lo, hi)
                    )
                })?;
                ensure((m.height - h).abs() <= 1e-9, || {
                    format!("{linkage} step {t}: height {} vs oracle {h}", m.height)
                })?;
            }
        }
        matrices += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{matrices} matrices x 4 linkages ({skipped} constant matrices redrawn), {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn single_mst_identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    for case in 0..120 {
        let n = rng.gen_range(2..=30);
        let d = random_condensed(&mut rng, n, case % 2 == 0);
        let mut heights: Vec<f64> = agnes(&d, Linkage::Single).unwrap().trace.heights().collect();
        heights.sort_by(f64::total_cmp);
        let mst = oracle::mst_weights(&d);
        ensure(heights == mst, || {
            format!("case {case} (n = {n}): {heights:?} vs {mst:?}")
        })?;
    }
    Ok("120 matrices, n <= 30, half with tied weights".into())
}

fn gower_invariance() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let mut checked = 0;
    for case in 0..300 {
        let (n, p) = (rng.gen_range(2..=15), rng.gen_range(1..=6));
        let rows = as_f64(&int_matrix(&mut rng, n, p, 8));
        let scale: Vec<f64> = (0..p)
            .map(|_| {
                if rng.gen() {
                    rng.gen_range(1..=1000) as f64
                } else {
                    rng.gen_range(1..=512) as f64 / 256.0
                }
            })
            .collect();
        let shift: Vec<f64> = (0..p).map(|_| rng.gen_range(-500..=500) as f64).collect();
        let fm = FeatureMatrix::numeric(rows).unwrap();
        let moved = fm.map_columns(|j, x| scale[j] * x + shift[j]).unwrap();
        let (d0, d1) = match (gower_dissimilarity(&fm), gower_dissimilarity(&moved)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(a), Err(b)) if a == b => continue,
            other => return Err(format!("case {case}: {other:?}")),
        };
        for i in 0..n {
            for j in 0..n {
                ensure(d0.get(i, j).to_bits() == d1.get(i, j).to_bits(), || {
                    format!("case {case}: d[{i}][{j}] {} vs {}", d0.get(i, j), d1.get(i, j))
                })?;
            }
        }
        let (m0, m1) = (fit_all(&d0).unwrap(), fit_all(&d1).unwrap());
        for (a, b) in m0.iter().zip(&m1) {
            ensure(a.ac.value.to_bits() == b.ac.value.to_bits(), || {
                format!("case {case}: {} AC differs", a.linkage)
            })?;
        }
        let (s0, s1) = (select_model(&m0).unwrap(), select_model(&m1).unwrap());
        ensure(s0.linkage == s1.linkage, || {
            format!("case {case}: selected linkage differs")
        })?;
        let a0 = cut_tree(&s0.trace, choose_k(&s0.trace, &d0, None).unwrap().k).unwrap();
        let a1 = cut_tree(&s1.trace, choose_k(&s1.trace, &d1, None).unwrap().k).unwrap();
        ensure(a0 == a1, || format!("case {case}: assignment differs"))?;
        checked += 1;
    }
    Ok(format!(
        "{checked} matrices, integer and dyadic scales with integer shifts; D, ACs, selection and assignment bit-identical"
    ))
}

fn ac_properties() -> Outcome {
    let mut rng = StdRng::seed_from_u64(4);
    for case in 0..500 {
        let n = rng.gen_range(2..=20);
        let d = random_condensed(&mut rng, n, case % 3 == 0);
        for m in fit_all(&d).unwrap() {
            ensure((0.0..=1.0).contains(&m.ac.value), || {
                format!("case {case}: {} AC {}", m.linkage, m.ac.value)
            })?;
        }
    }
    let pair = DissimilarityMatrix::from_condensed(2, &[0.7]).unwrap();
    for m in fit_all(&pair).unwrap() {
        ensure(m.ac.value == 0.0, || format!("n = 2 {} AC {}", m.linkage, m.ac.value))?;
    }
    let flat = DissimilarityMatrix::from_condensed(6, &[0.5; 15]).unwrap();
    for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
        let m = agnes(&flat, linkage).unwrap();
        ensure(m.trace.heights().all(|h| h == 0.5), || {
            format!("{linkage} heights not equal")
        })?;
        ensure(m.ac.value == 0.0, || {
            format!("equal heights {linkage} AC {}", m.ac.value)
        })?;
    }
    let pts = [0.0f64, 1.0, 3.0, 7.0];
    let rows = pts
        .iter()
        .map(|a| pts.iter().map(|b| (a - b).abs()).collect())
        .collect();
    let line = DissimilarityMatrix::from_rows((0..4).map(|i| i.to_string()).collect(), rows).unwrap();
    let ac = agnes(&line, Linkage::Complete).unwrap().ac.value;
    ensure((ac - 4.0 / 7.0).abs() <= 1e-12, || {
        format!("complete {{0,1,3,7}} AC {ac}")
    })?;
    Ok(format!(
        "500 random matrices in [0,1]; n = 2 and flat traces give 0; complete {{0,1,3,7}} = {ac:.15}"
    ))
}

fn hierarchy_nesting() -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    for case in 0..200 {
        let n = rng.gen_range(2..=20);
        let d = random_condensed(&mut rng, n, case % 2 == 0);
        for m in fit_all(&d).unwrap() {
            let one = cut_tree(&m.trace, 1).unwrap();
            ensure(one.k == 1 && one.member_of.iter().all(|&c| c == 0), || {
                format!("case {case}: k = 1")
            })?;
            let all = cut_tree(&m.trace, n).unwrap();
            ensure(all.member_of == (0..n).collect::<Vec<_>>(), || {
                format!("case {case}: k = n")
            })?;
            for k in 2..=n {
                let fine = cut_tree(&m.trace, k).unwrap();
                let coarse = cut_tree(&m.trace, k - 1).unwrap();
                for cluster in fine.clusters() {
                    let parent = coarse.member_of[cluster[0]];
                    ensure(cluster.iter().all(|&i| coarse.member_of[i] == parent), || {
                        format!("case {case} {}: k = {k} does not refine k - 1", m.linkage)
                    })?;
                }
            }
        }
    }
    Ok("200 matrices x 4 linkages, every k".into())
}

/// Ward wins AC ties, then Complete, Average, Single.
fn tie_rank(l: Linkage) -> usize {
    [Linkage::Single, Linkage::Average, Linkage::Complete, Linkage::Ward]
        .iter()
        .position(|&x| x == l)
        .unwrap()
}

fn demo_end_to_end() -> Outcome {
    let start = Instant::now();
    let cfg = ServerConfig::load(&repo_path("config/demo.json")).map_err(|e| e.to_string())?;
    let replay_cfg = cfg.replay.clone().ok_or("demo config has no replay")?;
    let parsed = parse_events(
        File::open(&replay_cfg.path).map_err(|e| e.to_string())?,
        &ColumnMapping::for_format(replay_cfg.format),
    )
    .map_err(|e| e.to_string())?;
    let total = parsed.events.len();
    let plan =
        ReplayPlan::new(parsed.events.clone(), replay_cfg.gap_ms, replay_cfg.speed).map_err(|e| e.to_string())?;

    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let (snap, report) = rt.block_on(async {
        let (engine, worker) =
            Engine::start(parsed.spec.clone(), cfg.analytics(), cfg.debounce_ms, cfg.stream_buffer).unwrap();
        let report = engine.spawn_replay(plan).await.unwrap();
        let snap = tokio::time::timeout(Duration::from_secs(10), engine.wait_for_coverage(total)).await;
        worker.abort();
        (snap, report)
    });
    let report = report.map_err(|e| e.to_string())?;
    let snap = snap.map_err(|_| "no snapshot covered the replay".to_string())?;
    let elapsed = start.elapsed();

    ensure(report.delivered == total, || {
        format!("delivered {} of {total}", report.delivered)
    })?;
    ensure(snap.events_seen == total, || {
        format!("events_seen {} vs {total}", snap.events_seen)
    })?;
    ensure(snap.kpis.completed_count == 20, || {
        format!("completed_count {}", snap.kpis.completed_count)
    })?;
    let c = match &snap.clustering {
        ClusteringView::Ready(c) => c,
        ClusteringView::Absent { reason, detail } => return Err(format!("clustering absent: {reason:?} {detail}")),
    };
    ensure(c.dendrogram.n == 20 && c.dendrogram.tree.leaf_count() == 20, || {
        "dendrogram is not 20 leaves".into()
    })?;
    ensure(c.models.len() == 4, || format!("{} models", c.models.len()))?;
    let best = c
        .models
        .iter()
        .max_by(|a, b| {
            a.ac.total_cmp(&b.ac)
                .then(tie_rank(a.linkage).cmp(&tie_rank(b.linkage)))
        })
        .unwrap();
    ensure(c.selected == best.linkage, || {
        format!("selected {} but argmax is {}", c.selected, best.linkage)
    })?;
    for cl in 0..c.k {
        ensure(
            snap.recommendations.iter().filter(|r| r.cluster == cl).count() >= 1,
            || format!("cluster {cl} has no recommendation"),
        )?;
    }

    // the same prefix through the oracles
    let fm = extract_features(&parsed.events, &parsed.spec, InclusionPolicy::ActiveOnly).unwrap();
    let int_rows: Vec<Vec<i64>> = fm
        .rows()
        .iter()
        .map(|r| r.iter().map(|&v| v as i64).collect())
        .collect();
    let dq = oracle::exact::gower(&int_rows).ok_or("demo features are constant")?;
    for m in &c.models {
        let merges: Vec<oracle::OracleMerge> = oracle::exact::agnes(&dq, m.linkage)
            .into_iter()
            .map(|(lo, hi, height, size)| oracle::OracleMerge { lo, hi, height, size })
            .collect();
        let want = oracle::naive_ac(20, &merges);
        ensure((m.ac - want).abs() < 1e-9, || {
            format!("{} AC {} vs oracle {want}", m.linkage, m.ac)
        })?;
    }
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{total} events at speed {}, selected {} (AC {:.4}), k = {}, {} recommendations, {:.1}s",
        replay_cfg.speed,
        c.selected,
        best.ac,
        c.k,
        snap.recommendations.len(),
        elapsed.as_secs_f64()
    ))
}

fn real_time_contract() -> Outcome {
    use common::sim::{run, Scenario};
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst = 0;
    for case in 0..60 {
        let interval = rng.gen_range(0..=2000);
        let mut t = rng.gen_range(0..100);
        let arrivals: Vec<u64> = (0..rng.gen_range(1..=150))
            .map(|_| {
                t += rng.gen_range(0..80);
                t
            })
            .collect();
        let last = *arrivals.last().unwrap();
        let mut joins: Vec<u64> = (0..4).map(|_| rng.gen_range(0..=last + interval)).collect();
        joins.sort();
        let r = run(&Scenario {
            students: 8,
            arrivals,
            interval_ms: interval,
            recompute_ms: 0,
            joins,
            buffer: 4,
        });
        let lag = r
            .coverage_lag()
            .ok_or_else(|| format!("case {case}: events never covered"))?;
        ensure(lag <= interval, || {
            format!("case {case}: covered {lag} ms after quiescence, interval {interval}")
        })?;
        worst = worst.max(lag);
        for s in &r.subscribers {
            ensure(s.versions.windows(2).all(|w| w[0] < w[1]), || {
                format!("case {case}: versions {:?}", s.versions)
            })?;
            ensure(s.initial == s.latest_at_join, || {
                format!(
                    "case {case}: joined at {} got v{} while v{} was current",
                    s.joined_at, s.initial, s.latest_at_join
                )
            })?;
        }
    }
    Ok(format!(
        "60 simulated streams x 4 subscribers; worst coverage lag {worst} ms"
    ))
}

fn analytics_conservation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    for case in 0..300 {
        let students = rng.gen_range(1..=15);
        let spec = common::small_spec(students);
        let mut log = EventLog::new(spec.clone());
        let len = rng.gen_range(0..200);
        for i in 0..len {
            log.ingest(common::nth_event(i * 31 + case, students), i as u64)
                .unwrap();
        }
        let events: &[ActivityEvent] = log.events();
        let fm = extract_features(events, &spec, InclusionPolicy::FullRoster).unwrap();
        let summary = kc_summary(&fm).unwrap();
        for t in &summary.kcs {
            let of_kc = |e: &&ActivityEvent| e.question_id.starts_with(&format!("{} ", t.kc_id));
            let wrong = events
                .iter()
                .filter(of_kc)
                .filter(|e| e.kind == EventKind::Response { correct: false })
                .count();
            let hints = events
                .iter()
                .filter(of_kc)
                .filter(|e| matches!(e.kind, EventKind::Hint { .. }))
                .count();
            ensure(
                t.incorrect_total as usize == wrong && t.hints_total as usize == hints,
                || {
                    format!(
                        "case {case}: {} totals {:?} vs recount ({wrong}, {hints})",
                        t.kc_id,
                        (t.incorrect_total, t.hints_total)
                    )
                },
            )?;
        }
        let scored = {
            let mut ids: Vec<&str> = events
                .iter()
                .filter(|e| matches!(e.kind, EventKind::Response { .. }))
                .map(|e| e.student_id.as_str())
                .collect();
            ids.sort();
            ids.dedup();
            ids.len()
        };
        let scores: Vec<f64> = class_progress(events, &spec).iter().filter_map(student_score).collect();
        for width in [5, 10, 20, 25] {
            let h = score_histogram(&scores, width).unwrap();
            ensure(h.bins.iter().sum::<u64>() as usize == scored, || {
                format!("case {case}: histogram mass")
            })?;
        }
        let k = compute_kpis(events, &spec, 1);
        if let (Some(lo), Some(mid), Some(hi)) = (k.min_score, k.median_score, k.max_score) {
            ensure(lo <= mid && mid <= hi, || {
                format!("case {case}: {lo} <= {mid} <= {hi} fails")
            })?;
        } else {
            ensure(scored == 0, || {
                format!("case {case}: KPIs absent with {scored} scored students")
            })?;
        }
    }
    Ok("300 random streams".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("single linkage / MST identity", single_mst_identity),
        ("Gower affine invariance", gower_invariance),
        ("agglomerative coefficient properties", ac_properties),
        ("hierarchy nesting", hierarchy_nesting),
        ("demo end-to-end replay", demo_end_to_end),
        ("real-time contract", real_time_contract),
        ("analytics conservation", analytics_conservation),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
