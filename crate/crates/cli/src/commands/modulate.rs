//! `tsa modulate`: the full pipeline — motion masks per subject, then
//! event-aware modulated attention via the fused or dense path.

use tsa_core::modulation::{
    dense_bias, dense_oracle, dense_reinforcement, modulate, SubjectModulation,
};
use tsa_core::motion::motion_mask_from_logits;
use tsa_core::tensor::matmul_qk;

use crate::util::{
    check_shapes, normalize_layout, read_layout, read_tensor2, subject_path, write_tensor1_atomic,
    write_tensor2_atomic,
};
use crate::{CliError, ModulateArgs};

pub fn run(args: ModulateArgs) -> Result<(), CliError> {
    let q = read_tensor2(&args.q)?;
    let k = read_tensor2(&args.k)?;
    let layout = normalize_layout(read_layout(&args.layout)?)?;
    check_shapes(&q, &k, &layout)?;

    let logits = matmul_qk(&q, &k).map_err(CliError::data)?;
    let params = layout.params;
    let total = layout.text.subjects.len();

    let mut subjects = Vec::with_capacity(total);
    for (i, subject) in layout.text.subjects.iter().enumerate() {
        let mask = motion_mask_from_logits(
            &logits,
            q.cols(),
            subject.subject_span,
            layout.video,
            params.kernel,
        )
        .map_err(CliError::data)?;
        if let Some(base) = &args.emit_mask {
            write_tensor1_atomic(&subject_path(base, i, total), &mask.to_f32())?;
        }
        subjects.push(
            SubjectModulation::from_layout(&layout, i, mask.bits().to_vec())
                .map_err(CliError::data)?,
        );
    }

    if let Some(base) = &args.emit_bias {
        for (i, subject) in subjects.iter().enumerate() {
            let bias = dense_bias(&q, &k, subject).map_err(CliError::data)?;
            write_tensor2_atomic(&subject_path(base, i, total), &bias)?;
        }
    }
    if let Some(base) = &args.emit_reinforcement {
        for (i, subject) in subjects.iter().enumerate() {
            let reinforcement =
                dense_reinforcement(&q, &k, subject, &params).map_err(CliError::data)?;
            write_tensor2_atomic(&subject_path(base, i, total), &reinforcement)?;
        }
    }

    let attention = if args.oracle {
        dense_oracle(&q, &k, &subjects, &params).map_err(CliError::data)?
    } else {
        modulate(&q, &k, &subjects, &params).map_err(CliError::data)?
    };
    write_tensor2_atomic(&args.out, &attention)?;
    Ok(())
}
