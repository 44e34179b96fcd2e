//! `tsa viz`: one PGM heatmap per event and frame, normalized per event.

use tsa_core::pgm;
use tsa_core::viz::event_heatmaps;

use crate::util::{normalize_layout, read_layout, read_tensor2, write_atomic};
use crate::{CliError, VizArgs};

pub fn run(args: VizArgs) -> Result<(), CliError> {
    let attention = read_tensor2(&args.attn)?;
    let layout = normalize_layout(read_layout(&args.layout)?)?;
    if attention.rows() != layout.video.tokens() || attention.cols() != layout.text.num_tokens {
        return Err(CliError::Data(format!(
            "attention is {}x{} but the layout implies {}x{}",
            attention.rows(),
            attention.cols(),
            layout.video.tokens(),
            layout.text.num_tokens
        )));
    }
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out_dir.display())))?;

    // Events are numbered globally across subjects, in layout order.
    let mut event_idx = 0usize;
    for subject in &layout.text.subjects {
        for event in &subject.events {
            let maps =
                event_heatmaps(&attention, &layout.video, event.span).map_err(CliError::data)?;
            for (f, img) in maps.frames.iter().enumerate() {
                let path = args.out_dir.join(format!("event{event_idx}_frame{f}.pgm"));
                write_atomic(&path, &pgm::encode(img))?;
            }
            event_idx += 1;
        }
    }
    Ok(())
}
