pub mod ablate;
pub mod denoise;
pub mod eval;
pub mod gen_data;
pub mod grid_search;
pub mod train;

use std::path::Path;

use anyhow::{bail, Result};

/// Refuses to write into an existing non-empty directory unless --force.
pub fn claim_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)?.next().is_some();
        if non_empty && !force {
            bail!(
                "output directory {} is not empty (use --force to overwrite)",
                dir.display()
            );
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}
