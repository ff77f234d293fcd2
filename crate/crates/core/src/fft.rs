//! Square 2D complex FFTs with a per-thread plan cache.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Arc<Fft2>>> = RefCell::new(HashMap::new());
}

pub(crate) fn plan(n: usize) -> Arc<Fft2> {
    PLANS.with(|plans| {
        plans
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Fft2 {
                    n,
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    })
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

impl Fft2 {
    /// Unnormalized 2D transform `sum_x f(x) e^{-i n.x}`.
    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.forward, data);
    }

    /// Unnormalized inverse `sum_n c_n e^{i n.x}`.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inverse, data);
    }

    fn run(&self, fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.n * self.n);
        fft.process(data);
        transpose(data, self.n);
        fft.process(data);
        transpose(data, self.n);
    }
}
