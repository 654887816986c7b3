//! P6 portable-pixmap rendering of scan grids. No codec dependency; the
//! CSV sidecar is the analysis-grade output, the pixmap is for eyes.

use crate::scan::{ScanGrid, ScanMode};

/// Fixed case palette for `param-classify` scans
/// (0 derivative-to-zero, 1 subseq-to-infinity, 2 bounded-away-candidate,
/// 3+ indeterminate).
pub const CASE_PALETTE: [[u8; 3]; 4] = [
    [38, 110, 190],  // blue
    [205, 70, 56],   // red
    [237, 201, 81],  // yellow
    [128, 128, 128], // gray
];

/// Map a code byte to RGB under the given mode. Escape scans shade by
/// escape step (early escape bright, never-escaped black).
pub fn palette_rgb(mode: ScanMode, code: u8) -> [u8; 3] {
    match mode {
        ScanMode::ParamClassify => CASE_PALETTE[(code as usize).min(3)],
        ScanMode::DynamicalEscape => {
            if code == 255 {
                [0, 0, 0]
            } else {
                let t = 255u16.saturating_sub(code as u16 * 8).max(32) as u8;
                [t, t, 255 - code.min(223)]
            }
        }
    }
}

/// Binary P6: `P6\n<w> <h>\n255\n` followed by row-major RGB triples,
/// top row first.
pub fn render_ppm(grid: &ScanGrid, mode: ScanMode) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + grid.codes.len() * 3);
    out.extend_from_slice(format!("P6\n{} {}\n255\n", grid.width, grid.height).as_bytes());
    for &code in &grid.codes {
        out.extend_from_slice(&palette_rgb(mode, code));
    }
    out
}
