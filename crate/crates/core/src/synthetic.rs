//! Synthetic two-domain scenes for desk-scale training runs.
//!
//! A scene is a handful of axis-aligned rectangles ("objects") on an empty
//! background. The same scene renders into two styles: the sim domain X
//! uses crisp high-contrast values, the real domain Y a compressed
//! palette. The object-occupancy mask doubles as dense ground truth for
//! the reference models.

use crate::projection::Grid;
use crate::rng::SplitMix64;

/// Scene geometry and the two domain palettes, values in [0, 1].
#[derive(Debug, Clone)]
pub struct SceneParams {
    pub h: usize,
    pub w: usize,
    pub min_rects: usize,
    pub max_rects: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub x_background: f32,
    pub x_fill: f32,
    pub y_background: f32,
    pub y_fill: f32,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            h: 32,
            w: 32,
            min_rects: 1,
            max_rects: 3,
            min_size: 6,
            max_size: 14,
            x_background: 0.05,
            x_fill: 0.95,
            y_background: 0.35,
            y_fill: 0.65,
        }
    }
}

/// One rectangle: top-left cell and extent, fully inside the grid.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

pub fn sample_scene(params: &SceneParams, rng: &mut SplitMix64) -> Vec<Rect> {
    let count = params.min_rects + rng.index_below(params.max_rects - params.min_rects + 1);
    (0..count)
        .map(|_| {
            let height = params.min_size + rng.index_below(params.max_size - params.min_size + 1);
            let width = params.min_size + rng.index_below(params.max_size - params.min_size + 1);
            let height = height.min(params.h);
            let width = width.min(params.w);
            Rect {
                row: rng.index_below(params.h - height + 1),
                col: rng.index_below(params.w - width + 1),
                height,
                width,
            }
        })
        .collect()
}

fn render(rects: &[Rect], h: usize, w: usize, background: f32, fill: f32) -> Grid {
    let mut grid = Grid::from_data(h, w, vec![background; h * w]).unwrap();
    for rect in rects {
        for r in rect.row..rect.row + rect.height {
            for c in rect.col..rect.col + rect.width {
                grid.set(r, c, fill);
            }
        }
    }
    grid
}

pub fn render_x(rects: &[Rect], params: &SceneParams) -> Grid {
    render(rects, params.h, params.w, params.x_background, params.x_fill)
}

pub fn render_y(rects: &[Rect], params: &SceneParams) -> Grid {
    render(rects, params.h, params.w, params.y_background, params.y_fill)
}

/// Object-occupancy mask: 1.0 inside rectangles, 0.0 elsewhere.
pub fn render_gt(rects: &[Rect], params: &SceneParams) -> Grid {
    render(rects, params.h, params.w, 0.0, 1.0)
}

/// Unpaired pools: X frames from one scene stream, Y frames from an
/// independent stream.
pub fn render_domain_pools(params: &SceneParams, n_each: usize, seed: u64) -> (Vec<Grid>, Vec<Grid>) {
    let mut root = SplitMix64::new(seed);
    let mut rng_x = root.split();
    let mut rng_y = root.split();
    let xs = (0..n_each).map(|_| render_x(&sample_scene(params, &mut rng_x), params)).collect();
    let ys = (0..n_each).map(|_| render_y(&sample_scene(params, &mut rng_y), params)).collect();
    (xs, ys)
}

/// Like [`render_domain_pools`] but each frame comes with its occupancy
/// ground truth, for the supervised extension.
pub fn render_supervised_pools(
    params: &SceneParams,
    n_each: usize,
    seed: u64,
) -> (Vec<(Grid, Grid)>, Vec<(Grid, Grid)>) {
    let mut root = SplitMix64::new(seed);
    let mut rng_x = root.split();
    let mut rng_y = root.split();
    let xs = (0..n_each)
        .map(|_| {
            let scene = sample_scene(params, &mut rng_x);
            (render_x(&scene, params), render_gt(&scene, params))
        })
        .collect();
    let ys = (0..n_each)
        .map(|_| {
            let scene = sample_scene(params, &mut rng_y);
            (render_y(&scene, params), render_gt(&scene, params))
        })
        .collect();
    (xs, ys)
}
