use demoselect_core::SampleId;

/// Id list flag value; a newtype so clap treats it as one value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdArg(pub Vec<SampleId>);

pub fn parse_id_arg(s: &str) -> Result<IdArg, String> {
    parse_ids(s).map(IdArg)
}

/// Parses `3,1,4` or the half-open range `10..20`.
pub fn parse_ids(s: &str) -> Result<Vec<SampleId>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad range start {a:?}: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad range end {b:?}: {e}"))?;
        if a >= b {
            return Err(format!("empty range {s}"));
        }
        return Ok((a..b).map(SampleId).collect());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map(SampleId)
                .map_err(|e| format!("bad id {p:?}: {e}"))
        })
        .collect()
}
