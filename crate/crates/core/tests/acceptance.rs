//! The acceptance gate: nine criteria, one printed verdict line each.
//!
//! The criteria are wall-clock capped, so a file-wide lock serializes them
//! and the three large evaluation grids are computed once behind shared
//! caches; the invariance bookkeeping of criterion 8 reads the same cached
//! entries its grids already produced.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use bethe_vectors::verify::{
    check_coset_family, check_route_cell, coset_families, worker_count, ReportEntry, RouteCell,
    Scale, Suite, Verdict,
};
use bethe_vectors::{cmd_compute, cmd_explain, cmd_verify, Case, Realization, Scalar};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const SEED: u64 = 1;

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|err| err.into_inner())
}

fn s(n: i64, d: i64) -> Scalar {
    Scalar::new(n, d).unwrap()
}

/// Prints the criterion verdict line and enforces it.
fn conclude(
    number: u32,
    title: &str,
    elapsed: Duration,
    cap: Option<Duration>,
    problems: Vec<String>,
) {
    let in_time = cap.map(|cap| elapsed <= cap).unwrap_or(true);
    let verdict = if problems.is_empty() && in_time {
        "PASS"
    } else {
        "FAIL"
    };
    match cap {
        Some(cap) => println!(
            "criterion {number} ({title}): {verdict} [{elapsed:.2?} elapsed, cap {cap:?}]"
        ),
        None => println!("criterion {number} ({title}): {verdict} [{elapsed:.2?} elapsed]"),
    }
    for problem in problems.iter().take(12) {
        println!("    {problem}");
    }
    assert!(
        problems.is_empty(),
        "criterion {number}: {} problem(s), first: {}",
        problems.len(),
        problems[0]
    );
    assert!(
        in_time,
        "criterion {number} exceeded its runtime cap: {elapsed:?}"
    );
}

fn failures(entries: &[ReportEntry]) -> Vec<String> {
    entries
        .iter()
        .filter(|e| e.verdict == Verdict::Fail)
        .map(|e| format!("{} at {}", e.check, e.point))
        .collect()
}

fn check_names(entries: &[ReportEntry]) -> BTreeSet<&str> {
    entries.iter().map(|e| e.check.as_str()).collect()
}

fn require_checks(entries: &[ReportEntry], expected: &[&str], problems: &mut Vec<String>) {
    let present = check_names(entries);
    for name in expected {
        if !present.contains(name) {
            problems.push(format!("check {name} never ran"));
        }
    }
}

// ---------------------------------------------------------------------------
// Shared evaluation grids (criteria 4, 5, 6 and 8).
// ---------------------------------------------------------------------------

struct GridRun {
    entries: Vec<ReportEntry>,
    elapsed: Duration,
}

fn run_cells(cells: &[RouteCell], points: usize) -> GridRun {
    let start = Instant::now();
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Vec<ReportEntry>>> =
        cells.iter().map(|_| Mutex::new(Vec::new())).collect();
    std::thread::scope(|scope| {
        for _ in 0..worker_count().min(cells.len().max(1)) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= cells.len() {
                    break;
                }
                let entries = check_route_cell(&cells[index], points, SEED);
                *slots[index].lock().unwrap() = entries;
            });
        }
    });
    GridRun {
        entries: slots
            .into_iter()
            .flat_map(|slot| slot.into_inner().unwrap())
            .collect(),
        elapsed: start.elapsed(),
    }
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for head in 0..=total {
        for mut tail in compositions(total - head, parts - 1) {
            let mut comp = vec![head];
            comp.append(&mut tail);
            out.push(comp);
        }
    }
    out
}

fn realizations() -> [Realization; 3] {
    [
        Realization::Vector,
        Realization::WedgePower { k: 2 },
        Realization::SymmetricPower { k: 2 },
    ]
}

/// One single-factor cell per realization, rank 2..=4, and nonzero variable
/// profile of total size at most three.
fn single_cells(case: Case, q: Option<Scalar>) -> Vec<RouteCell> {
    let mut cells = Vec::new();
    for n in 2..=4 {
        for realization in realizations() {
            for total in 1..=3 {
                for xi in compositions(total, n - 1) {
                    cells.push(RouteCell {
                        case,
                        q: q.clone(),
                        n,
                        realization: realization.clone(),
                        factors: 1,
                        xi,
                    });
                }
            }
        }
    }
    cells
}

/// Vector-representation tensor products for the splitting routes.
fn split_cells() -> Vec<RouteCell> {
    let settings = [
        (Case::Rational, None),
        (Case::Trigonometric, Some(s(2, 1))),
        (Case::Trigonometric, Some(s(2, 3))),
    ];
    let mut cells = Vec::new();
    for (case, q) in settings {
        for factors in [2, 3] {
            for n in [2, 3] {
                for total in 1..=2 {
                    for xi in compositions(total, n - 1) {
                        cells.push(RouteCell {
                            case,
                            q: q.clone(),
                            n,
                            realization: Realization::Vector,
                            factors,
                            xi,
                        });
                    }
                }
            }
        }
    }
    cells
}

static RATIONAL_GRID: OnceLock<GridRun> = OnceLock::new();
static TRIG_GRID: OnceLock<GridRun> = OnceLock::new();
static SPLIT_GRID: OnceLock<GridRun> = OnceLock::new();

fn rational_grid() -> &'static GridRun {
    RATIONAL_GRID.get_or_init(|| run_cells(&single_cells(Case::Rational, None), 20))
}

fn trig_cells() -> Vec<RouteCell> {
    let mut cells = single_cells(Case::Trigonometric, Some(s(2, 1)));
    cells.extend(single_cells(Case::Trigonometric, Some(s(2, 3))));
    cells
}

fn trig_grid() -> &'static GridRun {
    TRIG_GRID.get_or_init(|| run_cells(&trig_cells(), 20))
}

fn split_grid() -> &'static GridRun {
    SPLIT_GRID.get_or_init(|| run_cells(&split_cells(), 5))
}

// ---------------------------------------------------------------------------
// Criteria 1 and 2: structure constants of the algebra.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_r_matrix_suite() {
    let _gate = gate();
    let start = Instant::now();
    let entries = bethe_vectors::run_suite(Suite::RMatrix, SEED, Scale::Full);
    let elapsed = start.elapsed();
    let mut problems = failures(&entries);
    require_checks(
        &entries,
        &[
            "r-matrix/yang-baxter",
            "r-matrix/inversion",
            "r-matrix/degenerate-equal-arguments",
        ],
        &mut problems,
    );
    // Four algebra settings, three ranks, twenty points, two per-point checks.
    if entries.len() < 4 * 3 * (20 * 2) {
        problems.push(format!("only {} entries", entries.len()));
    }
    for needle in ["rational n=4", "q=2/1", "q=2/3", "q=-3/5"] {
        if !entries.iter().any(|e| e.point.contains(needle)) {
            problems.push(format!("no point covering {needle:?}"));
        }
    }
    conclude(
        1,
        "R-matrix suite",
        elapsed,
        Some(Duration::from_secs(10)),
        problems,
    );
}

#[test]
fn criterion_2_monodromy_exchange() {
    let _gate = gate();
    let start = Instant::now();
    let entries = bethe_vectors::run_suite(Suite::MonodromyExchange, SEED, Scale::Full);
    let elapsed = start.elapsed();
    let mut problems = failures(&entries);
    require_checks(
        &entries,
        &[
            "rtt/exchange",
            "rtt/classical-invariance",
            "rtt/loop-exchange-plus-plus",
            "rtt/loop-exchange-plus-minus",
            "rtt/loop-exchange-minus-minus",
        ],
        &mut problems,
    );
    conclude(
        2,
        "monodromy exchange and invariance",
        elapsed,
        Some(Duration::from_secs(30)),
        problems,
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: printed expansions through the explain entry point.
// ---------------------------------------------------------------------------

struct PrintedSpec {
    title: &'static str,
    case: Case,
    n: usize,
    xi: Vec<usize>,
}

fn printed_specs() -> Vec<PrintedSpec> {
    vec![
        PrintedSpec { title: "rank 2, one variable", case: Case::Rational, n: 2, xi: vec![1] },
        PrintedSpec { title: "rank 2, two variables", case: Case::Rational, n: 2, xi: vec![2] },
        PrintedSpec { title: "rank 2, three variables", case: Case::Rational, n: 2, xi: vec![3] },
        PrintedSpec { title: "rank 3", case: Case::Rational, n: 3, xi: vec![1, 1] },
        PrintedSpec { title: "rank 4", case: Case::Rational, n: 4, xi: vec![1, 1, 1] },
        PrintedSpec { title: "trig rank 3", case: Case::Trigonometric, n: 3, xi: vec![1, 1] },
        PrintedSpec { title: "trig rank 4", case: Case::Trigonometric, n: 4, xi: vec![1, 1, 1] },
    ]
}

fn monomial(case: Case, factors: &[(usize, usize, usize, usize)]) -> String {
    let head = match case {
        Case::Rational => "T",
        Case::Trigonometric => "L^-",
    };
    factors
        .iter()
        .map(|(row, col, block, index)| format!("{head}_{{{row}{col}}}(t^{block}_{index})"))
        .collect()
}

/// The hand-copied expansions: monomials with exact coefficients as
/// functions of the evaluation point.
fn printed_terms(spec: &PrintedSpec, t: &[Scalar], q: Option<&Scalar>) -> Vec<(String, Scalar)> {
    let one = Scalar::one();
    match (spec.case, spec.n) {
        (_, 2) => {
            let factors: Vec<(usize, usize, usize, usize)> =
                (1..=t.len()).map(|i| (1, 2, 1, i)).collect();
            vec![(monomial(spec.case, &factors), one)]
        }
        (Case::Rational, 3) => {
            let d21 = &t[1] - &t[0];
            vec![
                (monomial(spec.case, &[(1, 2, 1, 1), (2, 3, 2, 1)]), one),
                (
                    monomial(spec.case, &[(1, 3, 1, 1), (2, 2, 2, 1)]),
                    d21.inv().unwrap(),
                ),
            ]
        }
        (Case::Rational, 4) => {
            let d21 = &t[1] - &t[0];
            let d31 = &t[2] - &t[0];
            let d32 = &t[2] - &t[1];
            vec![
                (
                    monomial(spec.case, &[(1, 2, 1, 1), (2, 3, 2, 1), (3, 4, 3, 1)]),
                    one.clone(),
                ),
                (
                    monomial(spec.case, &[(1, 3, 1, 1), (2, 2, 2, 1), (3, 4, 3, 1)]),
                    d21.inv().unwrap(),
                ),
                (
                    monomial(spec.case, &[(1, 2, 1, 1), (2, 4, 2, 1), (3, 3, 3, 1)]),
                    d32.inv().unwrap(),
                ),
                (
                    monomial(spec.case, &[(1, 4, 1, 1), (2, 2, 2, 1), (3, 3, 3, 1)]),
                    (&d21 * &d32).inv().unwrap(),
                ),
                (
                    monomial(spec.case, &[(1, 3, 1, 1), (2, 4, 2, 1), (3, 2, 3, 1)]),
                    (&d21 * &d32).inv().unwrap(),
                ),
                (
                    monomial(spec.case, &[(1, 4, 1, 1), (2, 3, 2, 1), (3, 2, 3, 1)]),
                    (&(&d21 * &d32) + &one)
                        .div(&(&(&d21 * &d31) * &d32))
                        .unwrap(),
                ),
            ]
        }
        (Case::Trigonometric, 3) => {
            let q = q.unwrap();
            let g = q - &q.inv().unwrap();
            let d21 = &t[1] - &t[0];
            vec![
                (monomial(spec.case, &[(1, 2, 1, 1), (2, 3, 2, 1)]), one),
                (
                    monomial(spec.case, &[(1, 3, 1, 1), (2, 2, 2, 1)]),
                    &g * &t[1].div(&d21).unwrap(),
                ),
            ]
        }
        (Case::Trigonometric, 4) => {
            let q = q.unwrap();
            let g = q - &q.inv().unwrap();
            let d21 = &t[1] - &t[0];
            let d31 = &t[2] - &t[0];
            let d32 = &t[2] - &t[1];
            let pair = &(&g * &g) * &(&t[1] * &t[2]);
            vec![
                (
                    monomial(spec.case, &[(1, 2, 1, 1), (2, 3, 2, 1), (3, 4, 3, 1)]),
                    one.clone(),
                ),
                (
                    monomial(spec.case, &[(1, 3, 1, 1), (2, 2, 2, 1), (3, 4, 3, 1)]),
                    &g * &t[1].div(&d21).unwrap(),
                ),
                (
                    monomial(spec.case, &[(1, 2, 1, 1), (2, 4, 2, 1), (3, 3, 3, 1)]),
                    &g * &t[2].div(&d32).unwrap(),
                ),
                (
                    monomial(spec.case, &[(1, 4, 1, 1), (2, 2, 2, 1), (3, 3, 3, 1)]),
                    pair.div(&(&d21 * &d32)).unwrap(),
                ),
                (
                    monomial(spec.case, &[(1, 3, 1, 1), (2, 4, 2, 1), (3, 2, 3, 1)]),
                    pair.div(&(&d21 * &d32)).unwrap(),
                ),
                (
                    monomial(spec.case, &[(1, 4, 1, 1), (2, 3, 2, 1), (3, 2, 3, 1)]),
                    (&(&g * &t[2]) * &(&(&d21 * &d32) + &pair))
                        .div(&(&(&d21 * &d31) * &d32))
                        .unwrap(),
                ),
            ]
        }
        _ => unreachable!("no printed example for this shape"),
    }
}

/// Rejects tuples with vanishing evaluation denominators: coinciding values,
/// unit differences (rational), or q^{±2} ratios (trigonometric).
fn admissible(case: Case, q: Option<&Scalar>, values: &[Scalar]) -> bool {
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            match case {
                Case::Rational => {
                    let diff = &values[i] - &values[j];
                    if diff.is_zero()
                        || (&diff + &Scalar::one()).is_zero()
                        || (&diff - &Scalar::one()).is_zero()
                    {
                        return false;
                    }
                }
                Case::Trigonometric => {
                    if values[i] == values[j] {
                        return false;
                    }
                    let q2 = {
                        let q = q.unwrap();
                        q * q
                    };
                    let ratio = values[i].div(&values[j]).unwrap();
                    if ratio == q2 || ratio == q2.inv().unwrap() {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn sample_point(rng: &mut ChaCha8Rng, case: Case, q: Option<&Scalar>, count: usize) -> Vec<Scalar> {
    loop {
        let values: Vec<Scalar> = (0..count)
            .map(|_| s(rng.gen_range(1..=13), rng.gen_range(1..=13)))
            .collect();
        if admissible(case, q, &values) {
            return values;
        }
    }
}

fn example_job(spec: &PrintedSpec, t: &[Scalar], q: Option<&Scalar>) -> Value {
    let mut blocks: Vec<Vec<String>> = Vec::new();
    let mut taken = 0;
    for &k in &spec.xi {
        blocks.push(t[taken..taken + k].iter().map(|v| v.to_string()).collect());
        taken += k;
    }
    let mut job = json!({
        "case": match spec.case {
            Case::Rational => "rational",
            Case::Trigonometric => "trigonometric",
        },
        "n": spec.n,
        "modules": [{
            "n": spec.n,
            "realization": {"kind": "vector"},
            "x": match spec.case {
                Case::Rational => "-1/2",
                Case::Trigonometric => "1/2",
            },
        }],
        "xi": spec.xi,
        "t": blocks,
        "method": "trace",
    });
    if let Some(q) = q {
        job["q"] = json!(q.to_string());
    }
    job
}

fn explain_terms(dir: &Path, name: &str, job: &Value) -> Result<Vec<(String, Scalar)>, String> {
    let job_path = dir.join(format!("{name}.json"));
    let out_path = dir.join(format!("{name}-out.json"));
    std::fs::write(&job_path, serde_json::to_string_pretty(job).unwrap()).unwrap();
    cmd_explain(&job_path, &out_path).map_err(|err| format!("explain failed: {err}"))?;
    let file: Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    file["terms"]
        .as_array()
        .ok_or_else(|| "no terms array".to_string())?
        .iter()
        .map(|term| {
            let monomial = term["monomial"].as_str().unwrap_or_default().to_string();
            let coefficient: Scalar = term["coefficient"]
                .as_str()
                .unwrap_or_default()
                .parse()
                .map_err(|err| format!("bad coefficient in {monomial}: {err}"))?;
            Ok((monomial, coefficient))
        })
        .collect()
}

#[test]
fn criterion_3_printed_expansions() {
    let _gate = gate();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let qs = [s(2, 1), s(2, 3), s(-3, 5), s(2, 1), s(2, 3)];
    let mut problems = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for spec in printed_specs() {
        let total: usize = spec.xi.iter().sum();
        for point in 0..5 {
            let q = match spec.case {
                Case::Rational => None,
                Case::Trigonometric => Some(qs[point].clone()),
            };
            let t = sample_point(&mut rng, spec.case, q.as_ref(), total);
            let job = example_job(&spec, &t, q.as_ref());
            let name = format!("{}-{}", spec.title.replace([' ', ','], "-"), point);
            let got = match explain_terms(dir.path(), &name, &job) {
                Ok(terms) => terms,
                Err(err) => {
                    problems.push(format!("{} point {point}: {err}", spec.title));
                    continue;
                }
            };
            let mut expect = printed_terms(&spec, &t, q.as_ref());
            expect.sort();
            let mut got_sorted = got.clone();
            got_sorted.sort();
            if got_sorted != expect {
                problems.push(format!(
                    "{} point {point}: expansion disagrees with the printed terms \
                     (got {got_sorted:?}, expected {expect:?})",
                    spec.title
                ));
            }
        }
    }
    conclude(
        3,
        "printed expansions",
        start.elapsed(),
        Some(Duration::from_secs(60)),
        problems,
    );
}

// ---------------------------------------------------------------------------
// Criteria 4, 5, 6: route-equivalence grids.
// ---------------------------------------------------------------------------

fn grid_problems(run: &GridRun, cells: usize, points: usize) -> Vec<String> {
    let mut problems = failures(&run.entries);
    if run.entries.len() < cells * points {
        problems.push(format!(
            "only {} entries over {cells} cells",
            run.entries.len()
        ));
    }
    problems
}

#[test]
fn criterion_4_rational_route_grid() {
    let _gate = gate();
    let run = rational_grid();
    let cells = single_cells(Case::Rational, None);
    let mut problems = grid_problems(run, cells.len(), 20);
    require_checks(
        &run.entries,
        &[
            "routes/recursion-first",
            "routes/recursion-last",
            "routes/closed-first",
            "routes/closed-last",
            "routes/weight",
            "routes/block-symmetry",
        ],
        &mut problems,
    );
    conclude(
        4,
        "rational route grid",
        run.elapsed,
        Some(Duration::from_secs(600)),
        problems,
    );
}

#[test]
fn criterion_5_trigonometric_route_grid() {
    let _gate = gate();
    let run = trig_grid();
    let cells = trig_cells();
    let mut problems = grid_problems(run, cells.len(), 20);
    for needle in ["q=2/1", "q=2/3"] {
        if !run.entries.iter().any(|e| e.point.contains(needle)) {
            problems.push(format!("no point covering {needle:?}"));
        }
    }
    conclude(
        5,
        "trigonometric route grid",
        run.elapsed,
        Some(Duration::from_secs(900)),
        problems,
    );
}

#[test]
fn criterion_6_tensor_splitting() {
    let _gate = gate();
    let run = split_grid();
    let cells = split_cells();
    let mut problems = grid_problems(run, cells.len(), 5);
    // Both the iterated-binary and the direct n-ary splitting must agree
    // with the oracle on every point, which chains them to each other.
    require_checks(
        &run.entries,
        &["routes/split-binary", "routes/split-chain"],
        &mut problems,
    );
    conclude(
        6,
        "tensor splitting",
        run.elapsed,
        Some(Duration::from_secs(300)),
        problems,
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: identity lab and exchange relations.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_identity_lab() {
    let _gate = gate();
    let start = Instant::now();
    let mut entries = bethe_vectors::run_suite(Suite::Identities, SEED, Scale::Full);
    entries.extend(bethe_vectors::run_suite(
        Suite::ExchangeRelations,
        SEED,
        Scale::Full,
    ));
    let elapsed = start.elapsed();
    let mut problems = failures(&entries);
    require_checks(
        &entries,
        &[
            "identities/permutation-factorial",
            "identities/permutation-factorial-q",
            "identities/kernel-expansion",
            "identities/kernel-expansion-q",
            "identities/kernel-aligned",
            "identities/kernel-aligned-q",
            "identities/kernel-aligned-shift-variant-rejected",
            "identities/kernel-aligned-q-nonstrict-rejected",
            "identities/ladder-direct-vs-kernels",
            "identities/ladder-picks-vs-kernels",
            "exchange/a-a",
            "exchange/b-b",
            "exchange/a-b",
            "exchange/d-b",
            "exchange/d-d",
            "exchange/a-b-chain",
            "exchange/d-b-chain",
            "exchange/coproduct-b-chain",
            "exchange/d-b-prefactor-variant-rejected",
        ],
        &mut problems,
    );
    conclude(
        7,
        "identity lab",
        elapsed,
        Some(Duration::from_secs(300)),
        problems,
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: invariance bookkeeping over the cached grids, plus the coset
// restriction families.
// ---------------------------------------------------------------------------

fn invariance_problems(cells: &[RouteCell], run: &GridRun) -> Vec<String> {
    let mut problems = Vec::new();
    for cell in cells {
        let label = cell.label();
        let prefix = format!("{label} t=");
        let cell_entries: Vec<&ReportEntry> = run
            .entries
            .iter()
            .filter(|e| e.point.starts_with(&prefix))
            .collect();
        if !cell_entries
            .iter()
            .any(|e| e.check == "routes/weight" && e.verdict == Verdict::Pass)
        {
            problems.push(format!("cell {label}: no passing weight confirmation"));
        }
        let has_swap = cell.xi.iter().any(|&k| k >= 2);
        let symmetry_pass = cell_entries
            .iter()
            .any(|e| e.check == "routes/block-symmetry" && e.verdict == Verdict::Pass);
        if has_swap && !symmetry_pass {
            problems.push(format!("cell {label}: no passing block-symmetry entry"));
        }
    }
    problems
}

#[test]
fn criterion_8_invariance_and_coset() {
    let _gate = gate();
    let mut problems = Vec::new();
    problems.extend(invariance_problems(
        &single_cells(Case::Rational, None),
        rational_grid(),
    ));
    problems.extend(invariance_problems(&trig_cells(), trig_grid()));
    problems.extend(invariance_problems(&split_cells(), split_grid()));
    let start = Instant::now();
    let families = coset_families();
    if families.len() != 10 {
        problems.push(format!("{} coset families, expected 10", families.len()));
    }
    for family in &families {
        problems.extend(failures(&check_coset_family(family, SEED)));
    }
    conclude(
        8,
        "invariance and coset restriction",
        start.elapsed(),
        None,
        problems,
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: byte determinism of jobs and suites.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_determinism() {
    let _gate = gate();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();

    let job = json!({
        "case": "trigonometric",
        "n": 3,
        "q": "2/3",
        "modules": [{"n": 3, "realization": {"kind": "symmetric_power", "k": 2}, "x": "1/3"}],
        "xi": [2, 1],
        "t": [["5/2", "-3/2"], ["7/3"]],
        "method": "closed-first",
    });
    let job_path = dir.path().join("job.json");
    std::fs::write(&job_path, serde_json::to_string_pretty(&job).unwrap()).unwrap();
    let mut compute_outputs = Vec::new();
    for round in 0..2 {
        let out_path = dir.path().join(format!("result-{round}.json"));
        cmd_compute(&job_path, &out_path).unwrap();
        compute_outputs.push(std::fs::read(&out_path).unwrap());
    }
    if compute_outputs[0] != compute_outputs[1] {
        problems.push("repeated compute runs differ".into());
    }

    let explain_job = json!({
        "case": "rational",
        "n": 3,
        "modules": [{"n": 3, "realization": {"kind": "vector"}, "x": "1/3"}],
        "xi": [1, 1],
        "t": [["2/7"], ["9/5"]],
        "method": "trace",
    });
    let explain_path = dir.path().join("explain-job.json");
    std::fs::write(
        &explain_path,
        serde_json::to_string_pretty(&explain_job).unwrap(),
    )
    .unwrap();
    let mut explain_outputs = Vec::new();
    for round in 0..2 {
        let out_path = dir.path().join(format!("expansion-{round}.json"));
        cmd_explain(&explain_path, &out_path).unwrap();
        explain_outputs.push(std::fs::read(&out_path).unwrap());
    }
    if explain_outputs[0] != explain_outputs[1] {
        problems.push("repeated explain runs differ".into());
    }

    let mut report_outputs = Vec::new();
    for round in 0..2 {
        let out_path = dir.path().join(format!("report-{round}.json"));
        cmd_verify("identities", 9, "small", &out_path).unwrap();
        report_outputs.push(std::fs::read(&out_path).unwrap());
    }
    if report_outputs[0] != report_outputs[1] {
        problems.push("repeated verify runs differ".into());
    }

    let first = bethe_vectors::run_suite(Suite::CrossValidate, 5, Scale::Small);
    let second = bethe_vectors::run_suite(Suite::CrossValidate, 5, Scale::Small);
    if first != second {
        problems.push("repeated in-process suite runs differ".into());
    }

    conclude(9, "byte determinism", start.elapsed(), None, problems);
}
