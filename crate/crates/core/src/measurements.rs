//! Published DGEMM measurements (m = n = k = 4096) on an Exynos 5422
//! board: four Cortex-A15 and four Cortex-A7 cores at their top frequency,
//! power from the on-board A7 / A15 / DRAM / GPU sensors.
//!
//! Used to calibrate the default [`PowerModel`](crate::energy::PowerModel)
//! and [`ClusterProfile`](crate::simulate::ClusterProfile). Values are as
//! printed, including the rounding in `total`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub label: &'static str,
    pub fast_threads: usize,
    pub slow_threads: usize,
    /// Average watts of the A7 cluster.
    pub slow_watts: f64,
    /// Average watts of the A15 cluster.
    pub fast_watts: f64,
    pub dram_watts: f64,
    pub gpu_watts: f64,
    pub total_watts: f64,
    pub gflops: f64,
    pub gflops_per_watt: f64,
}

impl ReferenceRow {
    pub fn component_sum(&self) -> f64 {
        self.slow_watts + self.fast_watts + self.dram_watts + self.gpu_watts
    }

    pub fn is_fast_only(&self) -> bool {
        self.slow_threads == 0
    }

    pub fn is_slow_only(&self) -> bool {
        self.fast_threads == 0
    }
}

const fn row(
    label: &'static str,
    fast_threads: usize,
    slow_threads: usize,
    w: [f64; 5],
    gflops: f64,
    gflops_per_watt: f64,
) -> ReferenceRow {
    ReferenceRow {
        label,
        fast_threads,
        slow_threads,
        slow_watts: w[0],
        fast_watts: w[1],
        dram_watts: w[2],
        gpu_watts: w[3],
        total_watts: w[4],
        gflops,
        gflops_per_watt,
    }
}

#[allow(clippy::approx_constant)]
pub const REFERENCE_ROWS: [ReferenceRow; 10] = [
    row("Asymmetric BLIS", 4, 4, [0.785, 5.994, 0.191, 0.119, 7.091], 12.035, 1.697),
    row("1xA15", 1, 0, [0.109, 1.828, 0.060, 0.083, 2.081], 2.718, 1.305),
    row("2xA15", 2, 0, [0.124, 3.242, 0.076, 0.099, 3.543], 5.377, 1.517),
    row("3xA15", 3, 0, [0.135, 4.613, 0.091, 0.106, 4.946], 7.963, 1.609),
    row("4xA15", 4, 0, [0.140, 5.878, 0.105, 0.110, 6.233], 10.374, 1.664),
    row("1xA7", 0, 1, [0.305, 0.499, 0.066, 0.102, 0.973], 0.546, 0.560),
    row("2xA7", 0, 2, [0.488, 0.501, 0.072, 0.102, 1.164], 1.098, 0.942),
    row("3xA7", 0, 3, [0.661, 0.503, 0.084, 0.103, 1.352], 1.587, 1.173),
    row("4xA7", 0, 4, [0.831, 0.502, 0.089, 0.103, 1.526], 2.086, 1.366),
    row("Symmetric BLIS", 4, 4, [0.810, 3.440, 0.201, 0.109, 4.562], 3.897, 0.854),
];

pub fn reference_row(label: &str) -> Option<&'static ReferenceRow> {
    REFERENCE_ROWS.iter().find(|r| r.label == label)
}

/// Peak GFLOPS of the full fast and slow clusters in isolation.
pub fn reference_peaks() -> (f64, f64) {
    let fast = reference_row("4xA15").map_or(0.0, |r| r.gflops);
    let slow = reference_row("4xA7").map_or(0.0, |r| r.gflops);
    (fast, slow)
}
