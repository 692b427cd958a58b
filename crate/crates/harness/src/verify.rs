//! `floodbench verify`: finite-difference checks of every differentiable
//! kernel plus the numeric invariants of the losses.

use std::fmt::Write as _;

use anyhow::Result;
use floodbench_core::gradcheck::{
    standard_families, verify_family, verify_kind, KernelFamily, KernelKind, KernelVerification, DEFAULT_TOLERANCE,
};
use floodbench_core::losses::{channel_stats, composite_flood, spade_denorm, ssimse_loss, SpadeParams};
use floodbench_core::metrics::f05_from_counts;
use floodbench_core::{ChannelField, ConfusionCounts, Error, SoftMask};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

pub const DEFAULT_INSTANCES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub instances: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            instances: DEFAULT_INSTANCES,
            seed: 0,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub options: VerifyOptions,
    pub kernels: Vec<KernelVerification>,
    pub invariants: Vec<InvariantCheck>,
    pub passed: bool,
}

impl VerifyReport {
    /// Names of every failing kernel and invariant.
    pub fn failures(&self) -> Vec<&str> {
        self.kernels
            .iter()
            .filter(|k| !k.passed)
            .map(|k| k.kernel.as_str())
            .chain(self.invariants.iter().filter(|c| !c.passed).map(|c| c.name.as_str()))
            .collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kernel                max rel. deviation   tolerance   result");
        for k in &self.kernels {
            let _ = writeln!(
                s,
                "{:<21} {:<20.3e} {:<11.0e} {}",
                k.kernel,
                k.max_relative_deviation,
                k.tolerance,
                if k.passed { "ok" } else { "FAIL" }
            );
        }
        for c in &self.invariants {
            let _ = writeln!(
                s,
                "{:<42} {:<11} {} ({})",
                c.name,
                "",
                if c.passed { "ok" } else { "FAIL" },
                c.detail
            );
        }
        let failures = self.failures();
        if failures.is_empty() {
            let _ = writeln!(s, "all checks passed");
        } else {
            let _ = writeln!(s, "failed: {}", failures.join(", "));
        }
        s
    }
}

/// Grad-checks every family and runs the invariant suite.
pub fn run_verify(families: &[Box<dyn KernelFamily>], opts: &VerifyOptions) -> Result<VerifyReport> {
    let kernels = families
        .iter()
        .map(|f| verify_family(f.as_ref(), opts.instances, opts.seed, opts.tolerance))
        .collect::<Result<Vec<_>, _>>()?;
    let invariants = invariant_checks(opts.seed);
    let passed = kernels.iter().all(|k| k.passed) && invariants.iter().all(|c| c.passed);
    Ok(VerifyReport {
        options: *opts,
        kernels,
        invariants,
        passed,
    })
}

pub fn cmd_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    run_verify(&standard_families(), opts)
}

fn check(name: &str, passed: bool, detail: String) -> InvariantCheck {
    InvariantCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

pub fn invariant_checks(seed: u64) -> Vec<InvariantCheck> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x1a7a_c0de);
    vec![
        f05_example(),
        ssimse_scale_shift(&mut rng),
        spade_identity(&mut rng),
        composite_identity(&mut rng),
        non_differentiable_rejected(),
    ]
}

fn f05_example() -> InvariantCheck {
    let c = ConfusionCounts {
        tp: 3,
        fp: 1,
        fn_: 2,
        tn: 0,
    };
    let got = f05_from_counts(&c).unwrap_or(f64::NAN);
    let want = 5.0 / 7.0;
    check("f05_worked_example", (got - want).abs() <= 1e-12, format!("got {got}"))
}

fn ssimse_scale_shift(rng: &mut Xoshiro256PlusPlus) -> InvariantCheck {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(2..12), rng.random_range(2..12));
        let target: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..10.0)).collect();
        let a = rng.random_range(0.01..100.0);
        let b = rng.random_range(-100.0..100.0);
        let d: Vec<f64> = target.iter().map(|t| a * t + b).collect();
        let target = ChannelField::new(1, h, w, target).expect("finite target");
        let d = ChannelField::new(1, h, w, d).expect("finite disparity");
        match ssimse_loss(&d, &target) {
            Ok(v) => worst = worst.max(v),
            Err(Error::DegenerateDisparity) => {}
            Err(_) => worst = f64::NAN,
        }
    }
    check(
        "ssimse_scale_shift_invariance",
        worst <= 1e-9,
        format!("max loss {worst:.3e}"),
    )
}

fn spade_identity(rng: &mut Xoshiro256PlusPlus) -> InvariantCheck {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (c, h, w) = (rng.random_range(1..5), rng.random_range(2..10), rng.random_range(2..10));
        let a = ChannelField::from_fn(c, h, w, |_, _, _| rng.random_range(-50.0..50.0)).expect("finite");
        let u = ChannelField::filled(1, h, w, 0.0).expect("finite");
        let out = match spade_denorm(&a, &u, &SpadeParams::identity(1, c)) {
            Ok(o) => o,
            Err(_) => {
                worst = f64::NAN;
                continue;
            }
        };
        for (mu, sd) in channel_stats(&out) {
            worst = worst.max(mu.abs()).max((sd * sd - 1.0).abs());
        }
    }
    check(
        "spade_identity_normalization",
        worst <= 1e-9,
        format!("max deviation {worst:.3e}"),
    )
}

fn composite_identity(rng: &mut Xoshiro256PlusPlus) -> InvariantCheck {
    let mut mismatches = 0usize;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(1..12), rng.random_range(1..12));
        let x = ChannelField::from_fn(3, h, w, |_, _, _| rng.random::<f64>()).expect("finite");
        let p = ChannelField::from_fn(3, h, w, |_, _, _| rng.random::<f64>()).expect("finite");
        let m: Vec<f64> = (0..h * w)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        let mask = SoftMask::new(h, w, m.clone()).expect("binary mask");
        let Ok(out) = composite_flood(&x, &p, &mask) else {
            mismatches += 1;
            continue;
        };
        let plane = h * w;
        mismatches += out
            .values()
            .iter()
            .enumerate()
            .filter(|&(i, &v)| {
                let src = if m[i % plane] == 1.0 {
                    p.values()[i]
                } else {
                    x.values()[i]
                };
                v.to_bits() != src.to_bits()
            })
            .count();
    }
    check(
        "composite_identity",
        mismatches == 0,
        format!("{mismatches} mismatched values"),
    )
}

fn non_differentiable_rejected() -> InvariantCheck {
    let rejected = [KernelKind::GroundIntersection, KernelKind::Wgan].into_iter().all(|k| {
        matches!(
            verify_kind(k, 1, 0, DEFAULT_TOLERANCE),
            Err(Error::UnsupportedKernel(_))
        )
    });
    check("non_differentiable_rejected", rejected, "gi, wgan".into())
}
