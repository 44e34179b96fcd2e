//! `tsa mask`: motion-region extraction for one subject, optionally rendered
//! as per-frame PGM images.

use tsa_core::motion::motion_mask;
use tsa_core::pgm;
use tsa_core::viz::mask_frame_image;

use crate::config::Config;
use crate::util::{
    check_shapes, normalize_layout, read_layout, read_tensor2, write_atomic, write_tensor1_atomic,
};
use crate::{CliError, MaskArgs};

pub fn run(args: MaskArgs, config: &Config) -> Result<(), CliError> {
    let q = read_tensor2(&args.q)?;
    let k = read_tensor2(&args.k)?;
    let layout = normalize_layout(read_layout(&args.layout)?)?;
    check_shapes(&q, &k, &layout)?;

    let subject_idx = args.subject.or(config.mask.subject).unwrap_or(0);
    let subject = layout.text.subjects.get(subject_idx).ok_or_else(|| {
        CliError::Data(format!(
            "layout has {} subjects, no index {}",
            layout.text.subjects.len(),
            subject_idx
        ))
    })?;

    let mask = motion_mask(
        &q,
        &k,
        subject.subject_span,
        layout.video,
        layout.params.kernel,
    )
    .map_err(CliError::data)?;
    write_tensor1_atomic(&args.out, &mask.to_f32())?;

    if let Some(dir) = &args.pgm_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        for f in 0..layout.video.frames {
            let img = mask_frame_image(mask.bits(), &layout.video, f);
            write_atomic(&dir.join(format!("frame{f}.pgm")), &pgm::encode(&img))?;
        }
    }
    Ok(())
}
