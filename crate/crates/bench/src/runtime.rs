//! Runtime scaling: batched model inference versus per-case Newton-Raphson
//! over grid-size buckets.
//!
//! The model is timed as one batched forward over all grids of a bucket
//! (per-case graph rewrite, disjoint union, recurrent forward, candidate
//! selection), which is how a user would evaluate a workload of cases. NR
//! is timed per case including its admittance build. The headline `nr`
//! rows use the sparse linear path for every bucket so the scaling curve
//! reflects one algorithmic family; `nr_dense` and `nr_sparse` rows report
//! both paths separately.

use std::io::Write;
use std::time::Instant;

use gridflow_core::newton::{solve_nr, LinearSolverKind, NrOptions};
use gridflow_core::state::flat_state;
use gridflow_core::synth::{
    assign_node_types, case_rng, sample_supply_task, CountRange, GeneratorParams,
};
use gridflow_neural::graph::SolverGraph;
use gridflow_neural::infer::infer_union;
use gridflow_neural::{CaseBundle, ModelConfig, ModelParams};

use crate::mean_median;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BenchConfig {
    /// Upper bus-count bound per bucket, strictly increasing.
    pub size_buckets: Vec<usize>,
    pub cases_per_bucket: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            size_buckets: vec![20, 50, 100, 200, 300, 500],
            cases_per_bucket: 50,
            repetitions: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RuntimeRow {
    pub bucket: usize,
    pub method: String,
    pub mean_s: f64,
    pub median_s: f64,
    pub n: usize,
}

/// One persisted timing sample.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TimingSample {
    pub bucket: usize,
    pub method: String,
    pub repetition: usize,
    /// Case index within the bucket; the batched model times the whole
    /// bucket at once and has no per-case resolution.
    pub case_index: Option<usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BenchResult {
    pub rows: Vec<RuntimeRow>,
    pub samples: Vec<TimingSample>,
}

/// Sample standard error of the mean.
pub fn standard_error(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return f64::INFINITY;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// Generates NR-convergent ring-grid cases with bus counts in
/// `(lo..=hi)`, deterministic in (seed, bucket).
pub fn bucket_cases(
    lo: usize,
    hi: usize,
    count: usize,
    seed: u64,
) -> Vec<CaseBundle<f64>> {
    let mut params = GeneratorParams::synthetic_mv();
    params.topology.n_buses = CountRange(lo, hi);
    // larger grids need more rings to stay electrically plausible
    params.topology.rings = CountRange(1.max(lo / 40), 2.max(hi / 25));
    let nr_opts = NrOptions::default();
    let mut out = Vec::with_capacity(count);
    let mut stream = 0usize;
    while out.len() < count {
        let mut rng = case_rng(seed, stream);
        stream += 1;
        let net = gridflow_core::synth::generate_topology::<f64>(&params.topology, &mut rng);
        let net = assign_node_types(net, &params.supply, &mut rng);
        let net = sample_supply_task(net, &params.supply, &mut rng);
        if solve_nr(&net, &flat_state(&net), &nr_opts).is_ok() {
            out.push(CaseBundle::new(net).expect("generator produces valid networks"));
        }
    }
    out
}

/// Times the full batched-model evaluation of a bucket: per-case graph
/// rewrite, disjoint union, one randomized recurrent forward, and best
/// candidate selection.
fn time_model_once(
    bundles: &[CaseBundle<f64>],
    params: &ModelParams<f64>,
    cfg: &ModelConfig,
    seed: u64,
) -> f64 {
    let t0 = Instant::now();
    for b in bundles {
        let g = SolverGraph::build(&b.net);
        std::hint::black_box(g.arc_count());
    }
    let refs: Vec<&CaseBundle<f64>> = bundles.iter().collect();
    let inferences = infer_union(&refs, params, cfg, cfg.iterations_infer, 1, seed);
    std::hint::black_box(inferences.len());
    t0.elapsed().as_secs_f64()
}

fn time_nr_once(bundle: &CaseBundle<f64>, opts: &NrOptions<f64>) -> Option<f64> {
    let start = flat_state(&bundle.net);
    let t0 = Instant::now();
    let result = solve_nr(&bundle.net, &start, opts);
    let dt = t0.elapsed().as_secs_f64();
    result.ok().map(|_| dt)
}

pub fn bench_runtime(
    cfg: &BenchConfig,
    params: &ModelParams<f64>,
    model_cfg: &ModelConfig,
    nr_opts: &NrOptions<f64>,
) -> BenchResult {
    assert!(
        cfg.size_buckets.windows(2).all(|w| w[0] < w[1]),
        "buckets must be strictly increasing"
    );
    let mut rows = Vec::new();
    let mut samples = Vec::new();

    for (bi, &bucket) in cfg.size_buckets.iter().enumerate() {
        let lo = if bi == 0 { (bucket / 2).max(2) } else { cfg.size_buckets[bi - 1] + 1 };
        let bundles =
            bucket_cases(lo, bucket, cfg.cases_per_bucket, cfg.seed ^ (bucket as u64) << 16);

        // warm-up pass, excluded from the statistics
        time_model_once(&bundles[..1.min(bundles.len())], params, model_cfg, cfg.seed);
        let _ = time_nr_once(&bundles[0], nr_opts);

        let mut model_times = Vec::with_capacity(cfg.repetitions);
        for rep in 0..cfg.repetitions {
            let dt = time_model_once(&bundles, params, model_cfg, cfg.seed + rep as u64);
            model_times.push(dt);
            samples.push(TimingSample {
                bucket,
                method: "gnn".into(),
                repetition: rep,
                case_index: None,
                seconds: dt,
            });
        }
        let (mean_s, median_s) = mean_median(&model_times);
        rows.push(RuntimeRow {
            bucket,
            method: "gnn".into(),
            mean_s,
            median_s,
            n: model_times.len(),
        });

        for (method, kind) in [
            ("nr", LinearSolverKind::Sparse),
            ("nr_dense", LinearSolverKind::Dense),
            ("nr_sparse", LinearSolverKind::Sparse),
        ] {
            let opts = NrOptions { linear_solver: kind, ..*nr_opts };
            let mut times = Vec::new();
            for rep in 0..cfg.repetitions {
                for (ci, bundle) in bundles.iter().enumerate() {
                    if let Some(dt) = time_nr_once(bundle, &opts) {
                        times.push(dt);
                        samples.push(TimingSample {
                            bucket,
                            method: method.into(),
                            repetition: rep,
                            case_index: Some(ci),
                            seconds: dt,
                        });
                    }
                }
            }
            let (mean_s, median_s) = mean_median(&times);
            rows.push(RuntimeRow { bucket, method: method.into(), mean_s, median_s, n: times.len() });
        }
    }
    BenchResult { rows, samples }
}

/// Least-squares slope of ln(time) against ln(bucket size) for one method.
pub fn log_log_slope(rows: &[RuntimeRow], method: &str) -> f64 {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.method == method && r.mean_s > 0.0)
        .map(|r| ((r.bucket as f64).ln(), r.mean_s.ln()))
        .collect();
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub fn write_runtime_csv(rows: &[RuntimeRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "bucket,method,mean_s,median_s,n")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.bucket, r.method, r.mean_s, r.median_s, r.n)?;
    }
    Ok(())
}

pub fn write_samples_csv(samples: &[TimingSample], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "bucket,method,repetition,case_index,seconds")?;
    for s in samples {
        let case = s.case_index.map_or(String::new(), |c| c.to_string());
        writeln!(w, "{},{},{},{},{}", s.bucket, s.method, s.repetition, case, s.seconds)?;
    }
    Ok(())
}
