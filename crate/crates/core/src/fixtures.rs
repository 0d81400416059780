//! Small graphs and hierarchies used by tests, benchmarks and examples.

use crate::graph::{BaseGraph, Hierarchy};

pub fn path_graph(n: usize) -> BaseGraph {
    BaseGraph::new(vec![1; n], (1..n).map(|i| (i - 1, i)).collect()).expect("path graph")
}

pub fn cycle_graph(n: usize) -> BaseGraph {
    BaseGraph::new(vec![1; n], (0..n).map(|i| (i, (i + 1) % n)).collect()).expect("cycle graph")
}

pub fn triangle() -> BaseGraph {
    cycle_graph(3)
}

/// Vertices a, b, c, d joined in a cycle.
pub fn four_cycle() -> BaseGraph {
    cycle_graph(4).with_names(["a", "b", "c", "d"].map(String::from).to_vec())
}

/// The 4-cycle with coarse blocks {a, b} and {c, d}.
pub fn four_cycle_two_blocks() -> Hierarchy {
    Hierarchy::build(four_cycle(), &[vec![0, 0, 1, 1]]).expect("valid blocks")
}

/// Row-major `rows × cols` grid with unit populations.
pub fn grid_graph(rows: usize, cols: usize) -> BaseGraph {
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    BaseGraph::new(vec![1; rows * cols], edges).expect("grid graph")
}

/// Clockwise neighbor order for a grid (up, right, down, left).
pub fn grid_orientation(rows: usize, cols: usize) -> Vec<Vec<usize>> {
    let mut lists = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut list = Vec::new();
            if r > 0 {
                list.push((r - 1) * cols + c);
            }
            if c + 1 < cols {
                list.push(r * cols + c + 1);
            }
            if r + 1 < rows {
                list.push((r + 1) * cols + c);
            }
            if c > 0 {
                list.push(r * cols + c - 1);
            }
            lists.push(list);
        }
    }
    lists
}

/// Block map sending a `rows × cols` grid onto its `(rows/br) × (cols/bc)`
/// grid of rectangular blocks.
pub fn grid_block_map(rows: usize, cols: usize, br: usize, bc: usize) -> Vec<usize> {
    assert!(
        rows.is_multiple_of(br) && cols.is_multiple_of(bc),
        "block shape must tile the grid"
    );
    let coarse_cols = cols / bc;
    (0..rows * cols)
        .map(|v| (v / cols / br) * coarse_cols + (v % cols) / bc)
        .collect()
}

pub fn grid_with_blocks(rows: usize, cols: usize, br: usize, bc: usize) -> Hierarchy {
    Hierarchy::build(
        grid_graph(rows, cols),
        &[grid_block_map(rows, cols, br, bc)],
    )
    .expect("grid blocks")
}

/// Grid coarsened repeatedly by rectangular blocks; `blocks[k]` is the
/// block shape in units of level-k nodes.
pub fn nested_grid(rows: usize, cols: usize, blocks: &[(usize, usize)]) -> Hierarchy {
    let mut maps = Vec::new();
    let (mut r, mut c) = (rows, cols);
    for &(br, bc) in blocks {
        maps.push(grid_block_map(r, c, br, bc));
        r /= br;
        c /= bc;
    }
    Hierarchy::build(grid_graph(rows, cols), &maps).expect("nested grid")
}

/// Nested grid with `levels` coarsening steps of 8 children each,
/// alternating 2×4 and 4×2 blocks.
pub fn nested_grid_m8(levels: usize) -> Hierarchy {
    let blocks: Vec<(usize, usize)> = (0..levels)
        .map(|k| if k % 2 == 0 { (2, 4) } else { (4, 2) })
        .collect();
    let rows: usize = blocks.iter().map(|b| b.0).product();
    let cols: usize = blocks.iter().map(|b| b.1).product();
    nested_grid(rows, cols, &blocks)
}

/// 3×4 grid with unit populations and six 2×1 (vertical) blocks.
pub fn small_two_level() -> Hierarchy {
    let rows = 4;
    let cols = 3;
    Hierarchy::build(grid_graph(rows, cols), &[grid_block_map(rows, cols, 2, 1)])
        .expect("small fixture")
}
