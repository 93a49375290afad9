//! Full-reference metrics and the per-domain evaluation protocol.

mod metrics;
mod protocol;
mod report;

pub use metrics::{
    gaussian_window, lpips, mse, psnr, ssim, PSNR_CAP_DB, PSNR_MSE_FLOOR, SSIM_K1, SSIM_K2, SSIM_SIGMA,
    SSIM_WINDOW,
};
pub use protocol::{
    evaluate, evaluate_with, AverageRow, EvalOptions, EvalRecord, EvalReport, IdentityRestorer,
    LpipsStatus, Panel, Restorer,
};
pub use report::{panel_grid, save_panel_grid, tile, GUTTER};
