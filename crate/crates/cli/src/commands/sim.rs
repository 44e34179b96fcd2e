//! `tsa denoise-sim`: run the mock denoising loop and write the per-step
//! alignment metrics CSV.

use tsa_core::harness::{run_sim, ScheduleSpec, SynthSpec};
use tsa_core::ModulationParams;

use crate::util::write_atomic;
use crate::{CliError, DenoiseSimArgs};

pub fn run(args: DenoiseSimArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.spec.display())))?;
    let spec: SynthSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.spec.display())))?;

    let schedule = parse_schedule(&args.schedule)?;
    let params =
        ModulationParams { apply_fraction: schedule.apply_fraction(), ..Default::default() };

    let report = run_sim(&spec, &schedule, &params).map_err(CliError::data)?;
    write_atomic(&args.out, report.to_csv().as_bytes())?;
    Ok(())
}

/// Parse `"steps=50,fraction=0.2"`.
fn parse_schedule(s: &str) -> Result<ScheduleSpec, CliError> {
    let mut steps = None;
    let mut fraction = None;
    for part in s.split(',') {
        let Some((key, value)) = part.split_once('=') else {
            return Err(CliError::Usage(format!("bad schedule component '{part}'")));
        };
        match key.trim() {
            "steps" => {
                steps = Some(
                    value
                        .trim()
                        .parse::<usize>()
                        .map_err(|e| CliError::Usage(format!("bad steps value '{value}': {e}")))?,
                )
            }
            "fraction" => {
                fraction =
                    Some(value.trim().parse::<f64>().map_err(|e| {
                        CliError::Usage(format!("bad fraction value '{value}': {e}"))
                    })?)
            }
            other => return Err(CliError::Usage(format!("unknown schedule key '{other}'"))),
        }
    }
    let steps = steps.ok_or_else(|| CliError::Usage("schedule needs steps=<count>".to_string()))?;
    let fraction =
        fraction.ok_or_else(|| CliError::Usage("schedule needs fraction=<value>".to_string()))?;
    ScheduleSpec::new(steps, fraction).map_err(|e| CliError::Usage(e.to_string()))
}
