//! Accuracy evaluation: mean and median loss per node (MVA) for the flat
//! start, the trained model (best-of-restarts inference), and the
//! Newton-Raphson reference, per dataset.

use std::io::Write;

use gridflow_core::loss::loss_report;
use gridflow_core::newton::{solve_nr, NrOptions};
use gridflow_core::state::flat_state;
use gridflow_neural::{infer_best, CaseBundle, ModelConfig, ModelParams};

use crate::mean_median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Flat,
    Gnn,
    Nr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Flat => "flat",
            Method::Gnn => "gnn",
            Method::Nr => "nr",
        }
    }
}

/// One aggregate table row.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AccuracyRow {
    pub dataset: String,
    pub method: String,
    pub mean_mva: f64,
    pub median_mva: f64,
    pub n: usize,
}

/// One persisted per-case sample backing the aggregates.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CaseRecord {
    pub dataset: String,
    pub case_index: usize,
    pub method: String,
    pub mva_per_node: f64,
    /// NR iteration count, when the method is NR and it converged.
    pub nr_iterations: Option<usize>,
}

/// Loss per node of the flat start over a case set.
pub fn flat_baseline(bundles: &[CaseBundle<f64>]) -> (f64, f64) {
    let samples: Vec<f64> = bundles
        .iter()
        .map(|b| {
            let flat = flat_state(&b.net);
            loss_report(&b.net, &b.ybus, &flat).expect("consistent case").per_node_mva
        })
        .collect();
    mean_median(&samples)
}

/// Evaluates the requested methods on every case. The model is required
/// only when `Gnn` is requested; NR failures surface as an error.
pub fn eval_accuracy(
    dataset: &str,
    bundles: &[CaseBundle<f64>],
    model: Option<(&ModelParams<f64>, &ModelConfig)>,
    nr_opts: &NrOptions<f64>,
    methods: &[Method],
    seed: u64,
) -> Result<(Vec<AccuracyRow>, Vec<CaseRecord>), gridflow_core::NrError> {
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &method in methods {
        let mut samples = Vec::with_capacity(bundles.len());
        for (case_index, bundle) in bundles.iter().enumerate() {
            let (mva, nr_iterations) = match method {
                Method::Flat => {
                    let flat = flat_state(&bundle.net);
                    (loss_report(&bundle.net, &bundle.ybus, &flat).expect("case").per_node_mva, None)
                }
                Method::Gnn => {
                    let (params, cfg) = model.expect("gnn requested without a model");
                    let inf = infer_best(bundle, params, cfg, seed ^ case_index as u64);
                    (inf.loss.per_node_mva, None)
                }
                Method::Nr => {
                    let (state, report) = solve_nr(&bundle.net, &flat_state(&bundle.net), nr_opts)?;
                    let loss = loss_report(&bundle.net, &bundle.ybus, &state).expect("case");
                    (loss.per_node_mva, Some(report.iterations))
                }
            };
            samples.push(mva);
            records.push(CaseRecord {
                dataset: dataset.to_string(),
                case_index,
                method: method.name().to_string(),
                mva_per_node: mva,
                nr_iterations,
            });
        }
        let (mean_mva, median_mva) = mean_median(&samples);
        rows.push(AccuracyRow {
            dataset: dataset.to_string(),
            method: method.name().to_string(),
            mean_mva,
            median_mva,
            n: samples.len(),
        });
    }
    Ok((rows, records))
}

pub fn write_accuracy_csv(rows: &[AccuracyRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "dataset,method,mean_mva,median_mva,n")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.dataset, r.method, r.mean_mva, r.median_mva, r.n)?;
    }
    Ok(())
}

pub fn write_case_records_csv(records: &[CaseRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "dataset,case_index,method,mva_per_node,nr_iterations")?;
    for r in records {
        let iters = r.nr_iterations.map_or(String::new(), |i| i.to_string());
        writeln!(w, "{},{},{},{},{}", r.dataset, r.case_index, r.method, r.mva_per_node, iters)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridflow_core::network::{Branch, Bus, BusType, Network};

    fn zero_injection_bundle() -> CaseBundle<f64> {
        let net = Network {
            base_mva: 10.0,
            buses: vec![
                Bus { id: 0, bus_type: BusType::Slack, p: 0.0, q: 0.0, vm: 1.0, va: 0.0, base_kv: 20.0 },
                Bus { id: 1, bus_type: BusType::Pq, p: 0.0, q: 0.0, vm: 1.0, va: 0.0, base_kv: 20.0 },
            ],
            branches: vec![Branch {
                from_bus: 0,
                to_bus: 1,
                r: 0.01,
                x: 0.05,
                b_charging: 0.0,
                tap: 1.0,
                in_service: true,
            }],
        };
        CaseBundle::new(net).unwrap()
    }

    #[test]
    fn zero_injection_dataset_has_zero_flat_baseline() {
        let bundles = vec![zero_injection_bundle(), zero_injection_bundle()];
        let (mean, median) = flat_baseline(&bundles);
        assert_eq!(mean, 0.0);
        assert_eq!(median, 0.0);
    }

    #[test]
    fn empty_method_list_gives_header_only_csv() {
        let bundles = vec![zero_injection_bundle()];
        let (rows, records) =
            eval_accuracy("unit", &bundles, None, &NrOptions::default(), &[], 0).unwrap();
        assert!(rows.is_empty() && records.is_empty());
        let mut out = Vec::new();
        write_accuracy_csv(&rows, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "dataset,method,mean_mva,median_mva,n\n");
    }

    #[test]
    fn nr_rows_are_tiny_and_recomputable() {
        let bundles = vec![zero_injection_bundle()];
        let (rows, records) =
            eval_accuracy("unit", &bundles, None, &NrOptions::default(), &[Method::Nr, Method::Flat], 0)
                .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].mean_mva <= 1e-4);
        // aggregates match the per-case records
        let nr_records: Vec<f64> = records
            .iter()
            .filter(|r| r.method == "nr")
            .map(|r| r.mva_per_node)
            .collect();
        let (mean, _) = mean_median(&nr_records);
        assert_eq!(mean, rows[0].mean_mva);
    }
}
