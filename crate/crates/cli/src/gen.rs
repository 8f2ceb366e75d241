use std::path::PathBuf;

use clap::{Args, ValueEnum};
use demoselect_core::harness::{Manifest, ManifestEntry, MANIFEST_VERSION};
use demoselect_core::oracle::{Aggregator, Evaluator, LandscapeParams, OneShotMatrix, Planted, SubsetTable, SyntheticLandscape};
use demoselect_core::rng::SeededRng;
use demoselect_core::subsets::enumerate_subsets;
use demoselect_core::DemoSet;

use crate::{write_output, Failure};

/// Keeps feature draws independent of the landscape's own stream.
const FEATURE_SALT: u64 = 0x9e6c_63d0_676a_9a99;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggArg {
    Sum,
    Mean,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Number of demonstration candidates (ids 0..n).
    #[arg(long, default_value_t = 16)]
    n_demos: usize,
    /// Number of query-only samples (ids n_demos..n_demos+n_queries).
    #[arg(long, default_value_t = 20)]
    n_queries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// How per-demo scores combine into a set score.
    #[arg(long, value_enum, default_value_t = AggArg::Sum)]
    agg: AggArg,
    /// Pairwise interaction scale.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Noise scale.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Fraction of query columns won by the planted demo.
    #[arg(long)]
    planted_gamma: Option<f64>,
    /// Score of the planted demo on its columns.
    #[arg(long, default_value_t = 0.9)]
    planted_high: f64,
    /// Index of the planted demo.
    #[arg(long, default_value_t = 0)]
    planted_demo: usize,
    /// Largest set size written to the subset table (default: every size up
    /// to 8 demos, else 2).
    #[arg(long)]
    table_max_size: Option<usize>,
    /// Dimension of the random feature vectors.
    #[arg(long, default_value_t = 8)]
    feature_dim: usize,
}

pub fn run(a: GenArgs) -> Result<(), Failure> {
    let params = LandscapeParams {
        n_demos: a.n_demos,
        n_queries: a.n_queries,
        seed: a.seed,
        aggregator: match a.agg {
            AggArg::Sum => Aggregator::Sum,
            AggArg::Mean => Aggregator::Mean,
        },
        interaction_scale: a.lambda,
        noise_scale: a.sigma,
        planted: a.planted_gamma.map(|gamma| Planted {
            demo_index: a.planted_demo,
            gamma,
            high_value: a.planted_high,
        }),
    };
    if a.n_queries == 0 {
        return Err(Failure::usage("--n-queries must be positive"));
    }
    if a.feature_dim == 0 {
        return Err(Failure::usage("--feature-dim must be positive"));
    }
    let land = SyntheticLandscape::new(params.clone()).map_err(|e| Failure::usage(e.to_string()))?;
    let cap = a.table_max_size.unwrap_or(if a.n_demos <= 8 { a.n_demos } else { 2 });
    if cap == 0 || cap > a.n_demos {
        return Err(Failure::usage(format!("--table-max-size must be in 1..={}", a.n_demos)));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::data(format!("cannot create {}: {e}", a.out.display())))?;

    let demos = params.demo_ids();
    let queries = params.query_ids();
    // every id is a column so that pool members can serve as validation queries
    let columns: Vec<_> = demos.iter().chain(&queries).copied().collect();

    let mut values = Vec::with_capacity(demos.len() * columns.len());
    for &d in &demos {
        for &q in &columns {
            values.push(land.evaluate(&DemoSet::singleton(d), q)?.value());
        }
    }
    let matrix = OneShotMatrix::new(demos.clone(), columns.clone(), values)?;
    let matrix_path = a.out.join("matrix.csv");
    matrix.write(&matrix_path).map_err(|e| Failure::data(e.to_string()))?;

    let mut entries = Vec::new();
    for set in enumerate_subsets(&demos, Some(cap)).map_err(|e| Failure::usage(e.to_string()))? {
        for &q in columns.iter().filter(|&&q| !set.contains(q)) {
            entries.push(((set.clone(), q), land.evaluate(&set, q)?));
        }
    }
    let table = SubsetTable::from_entries(entries)?;
    let table_path = a.out.join("table.jsonl");
    table.write(&table_path).map_err(|e| Failure::data(e.to_string()))?;

    let mut rng = SeededRng::new(a.seed ^ FEATURE_SALT);
    let mut features = String::new();
    let mut samples = Vec::with_capacity(params.total_ids());
    for (row, id) in demos.iter().chain(&queries).enumerate() {
        let comps: Vec<String> = (0..a.feature_dim).map(|_| rng.uniform(-1.0, 1.0).to_string()).collect();
        features.push_str(&format!("{id},{}\n", comps.join(",")));
        samples.push(ManifestEntry {
            id: id.get(),
            mask: None,
            image: None,
            feature_row: Some(row),
        });
    }
    write_output(&a.out.join("features.csv"), &features)?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        samples,
        features: Some("features.csv".into()),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_output(&a.out.join("manifest.json"), &json)?;
    let json = serde_json::to_string_pretty(&params).expect("params serialize") + "\n";
    write_output(&a.out.join("landscape.json"), &json)?;

    println!("matrix      {} ({}x{})", matrix_path.display(), demos.len(), columns.len());
    println!("table       {} ({} entries, sets up to size {cap})", table_path.display(), table.len());
    println!("manifest    {}", a.out.join("manifest.json").display());
    println!("landscape   {}", a.out.join("landscape.json").display());
    if let Some(p) = &params.planted {
        println!("planted     demo {} on {} columns", p.demo_index, land.planted_columns().len());
    }
    Ok(())
}
