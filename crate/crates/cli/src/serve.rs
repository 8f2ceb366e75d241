use std::io;
use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use demoselect_core::oracle::external::{serve_matrix, MockFaults};
use demoselect_core::oracle::OneShotMatrix;
use demoselect_core::{Orientation, SampleId};

use crate::Failure;

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// One-shot matrix to answer from; multi-demo requests get the mean.
    #[arg(long, value_name = "FILE")]
    matrix: PathBuf,
    /// Reply with an error for this query id.
    #[arg(long)]
    error_on_query: Option<u64>,
    /// Exit silently after this many requests.
    #[arg(long)]
    exit_after: Option<u64>,
    /// Echo wrong request ids.
    #[arg(long)]
    wrong_id: bool,
    /// Delay before each reply, in milliseconds.
    #[arg(long)]
    delay_ms: Option<u64>,
    /// Declare lower-is-better scores (replies are negated).
    #[arg(long)]
    lower_better: bool,
}

pub fn run(a: ServeArgs) -> Result<(), Failure> {
    let matrix = OneShotMatrix::load(&a.matrix)?;
    let faults = MockFaults {
        error_on_query: a.error_on_query.map(SampleId),
        exit_after: a.exit_after,
        wrong_id: a.wrong_id,
        delay: a.delay_ms.map(Duration::from_millis),
        orientation: a.lower_better.then_some(Orientation::LowerBetter),
    };
    serve_matrix(&matrix, &faults, io::stdin().lock(), io::stdout().lock())
        .map_err(|e| Failure::data(format!("serve: {e}")))?;
    Ok(())
}
