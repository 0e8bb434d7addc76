//! Dispatch of one experiment to the core library. Sweep entries run in
//! parallel; tables are assembled afterwards in sweep order.

use std::time::Instant;

use ougap::diffusion::bounds::lower_bound_sweep;
use ougap::diffusion::bridge::sample_bridge;
use ougap::diffusion::sde::simulate_radial_pair;
use ougap::diffusion::tail::{default_grid, empirical_tail};
use ougap::diffusion::trial::rayleigh_trial_mode;
use ougap::jacobi::{build_knm, GeodesicData, JacobiSolution};
use ougap::operators::{assemble_operators, hardy_ratio, identity_residuals, perturb_j, sigma1, trial_mode, GridSpec};
use ougap::radial::{build_profile, h3_kernel_asymptotics, h3_normalization};
use ougap::semiclassical::{gap_row, laplace_constant, spectral_gap_with, Realization, Resolution, GAP_HEADER};
use ougap::{fmt12, gap_lower_bound, BridgeConfig, LowerBoundInputs, SdeConfig, WeightedPotential};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::config::*;
use crate::report::{RunReport, Table};
use crate::CliError;

type Timing = Vec<(String, f64)>;

fn timed<T>(f: impl FnOnce() -> Result<T, CliError>) -> Result<(T, f64), CliError> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn geodesic(g: &GeometrySpec) -> ougap::Result<GeodesicData> {
    match g {
        GeometrySpec::Constant { n, d, kappa } => GeodesicData::constant_curvature(*n, *d, *kappa),
        GeometrySpec::Radial { n, d, profile } => GeodesicData::radial(&build_profile(profile)?, *n, *d),
    }
}

fn backbones(geometry: &[GeometrySpec], steps: usize, timing: &mut Timing) -> Result<Vec<JacobiSolution>, CliError> {
    let out: Vec<(JacobiSolution, f64)> =
        geometry.par_iter().map(|g| timed(|| Ok(build_knm(&geodesic(g)?, steps)?))).collect::<Result<_, _>>()?;
    Ok(out
        .into_iter()
        .zip(geometry)
        .map(|((jac, secs), g)| {
            timing.push((format!("jacobi {}", g.tag()), secs));
            jac
        })
        .collect())
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt12).unwrap_or_default()
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let mut timing = Timing::new();
    let mut raw = Vec::new();
    let tables = match &cfg.body {
        Body::Sigma1(c) => run_sigma1(c, &mut timing)?,
        Body::Identities(c) => run_identities(c, cfg.seed, &mut timing)?,
        Body::Semiclassical(c) => run_semiclassical(c, &mut timing)?,
        Body::Simulate(c) => run_simulate(c, cfg.seed, &mut timing, &mut raw)?,
        Body::Bounds(c) => run_bounds(c)?,
        Body::KernelAsymptotics(c) => run_kernel(c)?,
    };
    Ok(RunReport { kind: cfg.kind, digest: cfg.digest(), seed: cfg.seed, tables, raw, timing })
}

/// 1 − κd²/π² for κ > 0 and 1 otherwise.
pub fn sigma1_closed_form(kappa: f64, d: f64) -> f64 {
    let k = kappa * d * d;
    if k > 0.0 {
        1.0 - k / std::f64::consts::PI.powi(2)
    } else {
        1.0
    }
}

fn run_sigma1(c: &Sigma1Config, timing: &mut Timing) -> Result<Vec<Table>, CliError> {
    let jacs = backbones(&c.geometry, c.numeric.steps, timing)?;
    let jobs: Vec<(usize, usize)> = (0..jacs.len()).flat_map(|g| c.numeric.m.iter().map(move |m| (g, *m))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(g, m)| {
            timed(|| {
                let ops = assemble_operators(&jacs[g], GridSpec::graded(m, jacs[g].geo.n, c.numeric.grading))?;
                Ok(sigma1(&ops)?)
            })
        })
        .collect::<Result<_, _>>()?;

    let tol = &c.tolerance;
    let mut table = Table::new(
        "sigma1",
        &["geometry", "n", "d", "m", "sigma1_eig", "sigma1_opnorm", "expected", "symmetry_defect", "riccati_vs_direct"],
    );
    for (&(g, m), (s, secs)) in jobs.iter().zip(results) {
        let geo = &c.geometry[g];
        let jac = &jacs[g];
        timing.push((format!("sigma1 {} m={m}", geo.tag()), secs));
        let expected = match geo {
            GeometrySpec::Constant { kappa, d, .. } => Some(sigma1_closed_form(*kappa, *d)),
            GeometrySpec::Radial { .. } => None,
        };
        let sym = jac.symmetry_defect().max(jac.direct_symmetry);
        let pass = (s.via_eig - s.via_opnorm).abs() <= tol.agree
            && expected.is_none_or(|e| (s.via_eig - e).abs() <= tol.closed_form)
            && sym <= tol.symmetry
            && jac.riccati_vs_direct <= tol.riccati;
        table.push(
            vec![
                geo.tag(),
                jac.geo.n.to_string(),
                fmt12(geo.d()),
                m.to_string(),
                fmt12(s.via_eig),
                fmt12(s.via_opnorm),
                opt(expected),
                fmt12(sym),
                fmt12(jac.riccati_vs_direct),
            ],
            pass,
        );
    }
    Ok(vec![table])
}

fn run_identities(c: &IdentitiesConfig, seed: u64, timing: &mut Timing) -> Result<Vec<Table>, CliError> {
    let jacs = backbones(&c.geometry, c.numeric.steps, timing)?;
    let jobs: Vec<(usize, usize)> = (0..jacs.len()).flat_map(|g| c.numeric.m.iter().map(move |m| (g, *m))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(g, m)| {
            timed(|| {
                let ops = assemble_operators(&jacs[g], GridSpec::graded(m, jacs[g].geo.n, c.numeric.grading))?;
                Ok(identity_residuals(&ops))
            })
        })
        .collect::<Result<_, _>>()?;

    let mut table = Table::new(
        "identities",
        &[
            "geometry",
            "d",
            "m",
            "res_sstar_s",
            "res_s_s2",
            "res_s2_s",
            "res_invstar_form",
            "res_inverse_form",
            "res_definitional",
            "max_identity",
            "min_decay",
        ],
    );
    let mut prev: Option<(usize, [f64; 5])> = None;
    for (&(g, m), (r, secs)) in jobs.iter().zip(results) {
        let geo = &c.geometry[g];
        timing.push((format!("identities {} m={m}", geo.tag()), secs));
        let cur = [r.s_star_s, r.s_s2, r.s2_s, r.inv_star_form, r.inverse_form];
        let decay = match prev {
            Some((pg, p)) if pg == g => Some(
                p.iter()
                    .zip(&cur)
                    .filter(|(a, _)| **a > c.tolerance.floor)
                    .map(|(a, b)| a / b)
                    .fold(f64::INFINITY, f64::min),
            ),
            _ => None,
        };
        prev = Some((g, cur));
        let pass = r.identity_max() < c.tolerance.residual && decay.is_none_or(|d| d >= c.tolerance.decay);
        let mut row = vec![geo.tag(), fmt12(geo.d()), m.to_string()];
        row.extend(cur.iter().map(|x| fmt12(*x)));
        row.extend([fmt12(r.definitional), fmt12(r.identity_max()), opt(decay)]);
        table.push(row, pass);
    }
    let mut tables = vec![table];

    if let Some(p) = &c.perturb {
        let (rec, secs) = timed(|| {
            let jac = build_knm(&geodesic(&p.geometry)?, p.steps)?;
            Ok(perturb_j(&jac, GridSpec::uniform(p.m, jac.geo.n), &p.eps, p.delta)?)
        })?;
        timing.push(("perturb".into(), secs));
        let mut t = Table::new("perturb", &["geometry", "delta", "eps", "norm", "slope", "doubled"]);
        let pass = rec.slope >= p.slope[0] && rec.slope <= p.slope[1];
        for (e, n) in rec.eps.iter().zip(&rec.norms) {
            t.push(
                vec![p.geometry.tag(), fmt12(rec.delta), fmt12(*e), fmt12(*n), fmt12(rec.slope), fmt12(rec.doubled)],
                pass,
            );
        }
        tables.push(t);
    }

    if let Some(h) = &c.hardy {
        let start = Instant::now();
        let cases: Vec<(u64, usize, f64)> = (0..h.cases as u64)
            .into_par_iter()
            .map(|i| {
                let s = seed.wrapping_add(i);
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
                let m = rng.gen_range(h.m_min..=h.m_max);
                let phi: Vec<f64> =
                    (0..m).map(|_| rng.gen_range(-1.0..1.0) * (1.0 + 10.0 * rng.gen::<f64>().powi(8))).collect();
                Ok((s, m, hardy_ratio(&GridSpec::uniform(m, 1), &phi)?))
            })
            .collect::<Result<_, CliError>>()?;
        let mut t = Table::new("hardy", &["case", "seed", "m", "ratio"]);
        for (i, (s, m, r)) in cases.into_iter().enumerate() {
            t.push(vec![i.to_string(), s.to_string(), m.to_string(), fmt12(r)], r < 4.0);
        }
        let g = GridSpec::graded(h.extremal_m, 1, h.extremal_grading);
        let phi: Vec<f64> = g.gaps().iter().map(|s| s.powf(-h.extremal_exponent)).collect();
        let r = hardy_ratio(&g, &phi)?;
        t.push(vec!["extremal".into(), String::new(), h.extremal_m.to_string(), fmt12(r)], r > h.extremal_floor && r < 4.0);
        timing.push(("hardy".into(), start.elapsed().as_secs_f64()));
        tables.push(t);
    }
    Ok(tables)
}

fn run_semiclassical(c: &SemiclassicalConfig, timing: &mut Timing) -> Result<Vec<Table>, CliError> {
    let pot = WeightedPotential::new(c.potential.clone())?;
    let mut res = Resolution::default_for(pot.n);
    if let Some(w) = c.numeric.widths {
        res.widths = w;
    }
    if let Some(p) = c.numeric.points_per_width {
        res.points_per_width = p;
    }
    let realizations: Vec<Realization> = match c.numeric.realization {
        RealizationChoice::Divergence => vec![Realization::Divergence],
        RealizationChoice::Schrodinger => vec![Realization::Schrodinger],
        RealizationChoice::Both => vec![Realization::Divergence, Realization::Schrodinger],
    };
    let jobs: Vec<(f64, Realization)> =
        c.numeric.lambda.iter().flat_map(|l| realizations.iter().map(move |r| (*l, *r))).collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(l, r)| timed(|| Ok(spectral_gap_with(&pot, l, r, &res)?)))
        .collect::<Result<_, _>>()?;

    let mut header: Vec<&str> = GAP_HEADER.to_vec();
    header.extend(["rel_err", "realization_gap"]);
    let mut table = Table::new("semiclassical", &header);
    let per = realizations.len();
    for (i, ((l, _), (g, secs))) in jobs.iter().zip(&results).enumerate() {
        timing.push((format!("gap lambda={} {}", fmt12(*l), gap_row(&pot, g)[3]), *secs));
        let rel = (g.e2_over_lambda - g.sigma1).abs() / g.sigma1;
        let base = &results[i - i % per].0;
        let agree = (per > 1).then(|| (base.e2 - results[i - i % per + 1].0.e2).abs() / base.e2);
        let pass = rel <= c.tolerance.gap && agree.is_none_or(|a| a <= c.tolerance.agree);
        let mut row = gap_row(&pot, g);
        row.extend([fmt12(rel), opt(agree)]);
        table.push(row, pass);
    }
    let mut tables = vec![table];

    if let Some(spec) = &c.laplace {
        let expected = pot.hess0.determinant().powf(-0.5);
        let values: Vec<f64> =
            spec.lambda.par_iter().map(|l| laplace_constant(&pot, *l)).collect::<ougap::Result<_>>()?;
        let mut t = Table::new("laplace", &["potential", "lambda", "value", "expected", "rel_err"]);
        for (l, v) in spec.lambda.iter().zip(values) {
            let rel = (v - expected).abs() / expected;
            t.push(vec![pot.kind.tag(), fmt12(*l), fmt12(v), fmt12(expected), fmt12(rel)], rel <= spec.tol);
        }
        tables.push(t);
    }
    Ok(tables)
}

fn run_simulate(
    c: &SimulateConfig,
    seed: u64,
    timing: &mut Timing,
    raw: &mut Vec<(String, Vec<u8>)>,
) -> Result<Vec<Table>, CliError> {
    match (&c.radial, &c.bridge) {
        (Some(r), None) => run_radial(r, &c.tolerance, seed, timing, raw),
        (None, Some(b)) => run_bridge(b, &c.tolerance, seed, timing),
        _ => Err(CliError::Schema("simulate needs exactly one of [radial] or [bridge]".into())),
    }
}

fn run_radial(
    r: &RadialSim,
    tol: &SimTolerance,
    seed: u64,
    timing: &mut Timing,
    raw: &mut Vec<(String, Vec<u8>)>,
) -> Result<Vec<Table>, CliError> {
    let profile = build_profile(&r.profile)?;
    let grid = default_grid(r.start, r.tail.span, r.tail.count);
    let mut table = Table::new(
        "simulate",
        &[
            "profile",
            "lambda",
            "paths",
            "steps",
            "violating_paths",
            "violating_steps",
            "max_excess",
            "floor_hits",
            "tail_slope",
            "c2",
            "fit_points",
            "slope_ratio",
        ],
    );
    let mut tail = Table::new("tail", &["lambda", "r", "count", "prob", "sparse"]);
    let mut first: Option<(f64, f64)> = None;
    for (i, &lambda) in r.lambda.iter().enumerate() {
        let cfg = SdeConfig {
            n: r.n,
            lambda,
            start: r.start,
            steps: r.steps,
            paths: r.paths,
            seed: seed.wrapping_add(i as u64),
            keep_paths: r.raw,
        };
        let (ens, secs) = timed(|| Ok(simulate_radial_pair(&profile, &cfg)?))?;
        timing.push((format!("sde lambda={}", fmt12(lambda)), secs));
        let dom = ens.dominance();
        let t = empirical_tail(&ens, &grid)?;
        let ratio = first.map(|(l0, s0)| (t.slope / s0) / (lambda / l0));
        if first.is_none() {
            first = Some((lambda, t.slope));
        }
        let pass = dom.violating_paths == 0
            && dom.floor_hits == 0
            && t.fit_points >= 2
            && ratio.is_none_or(|q| (q - 1.0).abs() <= tol.tail_ratio);
        table.push(
            vec![
                r.profile.tag(),
                fmt12(lambda),
                r.paths.to_string(),
                r.steps.to_string(),
                dom.violating_paths.to_string(),
                dom.violating_steps.to_string(),
                fmt12(dom.max_excess),
                dom.floor_hits.to_string(),
                fmt12(t.slope),
                fmt12(t.c2),
                t.fit_points.to_string(),
                opt(ratio),
            ],
            pass,
        );
        for row in &t.rows {
            let sparse = t.sparse.contains(&row.r);
            tail.push(vec![fmt12(lambda), fmt12(row.r), row.count.to_string(), fmt12(row.prob), sparse.to_string()], true);
        }
        if r.raw {
            let mut bytes = Vec::new();
            ens.write_raw(&mut bytes).map_err(|e| CliError::Io(e.to_string()))?;
            raw.push((format!("paths_{i}.bin"), bytes));
        }
    }
    Ok(vec![table, tail])
}

fn run_bridge(b: &BridgeSim, tol: &SimTolerance, seed: u64, timing: &mut Timing) -> Result<Vec<Table>, CliError> {
    let (tm, secs) = timed(|| {
        let jac = build_knm(&GeodesicData::constant_curvature(3, b.d, b.space.curvature())?, 1024)?;
        let ops = assemble_operators(&jac, GridSpec::uniform(b.op_m, 3))?;
        Ok(trial_mode(&ops, b.trial_eps)?)
    })?;
    timing.push(("trial mode".into(), secs));
    let mut table = Table::new(
        "simulate",
        &[
            "space",
            "lambda",
            "m",
            "d",
            "chains",
            "samples",
            "min_acceptance",
            "max_acceptance",
            "sigma1",
            "quotient_over_lambda",
            "se",
            "ess",
            "curvature_share",
        ],
    );
    for (i, &lambda) in b.lambda.iter().enumerate() {
        let cfg = BridgeConfig {
            space: b.space,
            lambda,
            m: b.m,
            d: b.d,
            chains: b.chains,
            samples: b.samples,
            thin: b.thin,
            burnin: b.burnin,
            seed: seed.wrapping_add(i as u64),
        };
        let ((ens, q), secs) = timed(|| {
            let ens = sample_bridge(&cfg)?;
            let q = rayleigh_trial_mode(&ens, &tm)?;
            Ok((ens, q))
        })?;
        timing.push((format!("bridge lambda={}", fmt12(lambda)), secs));
        let in_range = match tol.quotient {
            Some([lo, hi]) => q.quotient_over_lambda >= lo && q.quotient_over_lambda <= hi,
            None => (q.quotient_over_lambda - tm.sigma1).abs() <= tol.se_mult * q.se,
        };
        let pass = in_range && tol.min_ess.is_none_or(|e| q.ess >= e);
        table.push(
            vec![
                b.space.tag().into(),
                fmt12(lambda),
                b.m.to_string(),
                fmt12(b.d),
                b.chains.to_string(),
                b.samples.to_string(),
                fmt12(ens.min_acceptance),
                fmt12(ens.max_acceptance),
                fmt12(tm.sigma1),
                fmt12(q.quotient_over_lambda),
                fmt12(q.se),
                fmt12(q.ess),
                fmt12(q.curvature_share),
            ],
            pass,
        );
    }
    Ok(vec![table])
}

fn run_bounds(c: &BoundsConfig) -> Result<Vec<Table>, CliError> {
    let mut points = Table::new("bounds", &["alpha", "beta", "r0", "radius", "bound", "expected", "rel_err"]);
    for p in &c.point {
        let inp = LowerBoundInputs { alpha: p.alpha, beta: p.beta, r0: p.r0 };
        let b = gap_lower_bound(&inp)?;
        let rel = p.expected.map(|e| (b - e).abs() / e.abs().max(f64::MIN_POSITIVE));
        points.push(
            vec![fmt12(p.alpha), fmt12(p.beta), fmt12(p.r0), fmt12(inp.radius()), fmt12(b), opt(p.expected), opt(rel)],
            rel.is_none_or(|r| r <= c.tolerance.exact),
        );
    }
    let mut tables = vec![points];
    if let Some(s) = &c.sweep {
        let rows = lower_bound_sweep(s.c1, s.c2, s.r0, &s.lambda)?;
        let mut t = Table::new("sweep", &["lambda", "bound", "bound_over_lambda", "limit", "rel_dist"]);
        // only the largest λ is held to the limit tolerance
        let top = s.lambda.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for r in rows {
            let rel = (r.bound_over_lambda - r.limit).abs() / r.limit;
            let pass = r.lambda < top || rel <= c.tolerance.limit;
            t.push(vec![fmt12(r.lambda), fmt12(r.bound), fmt12(r.bound_over_lambda), fmt12(r.limit), fmt12(rel)], pass);
        }
        tables.push(t);
    }
    Ok(tables)
}

fn run_kernel(c: &KernelConfig) -> Result<Vec<Table>, CliError> {
    let rows = h3_kernel_asymptotics(&c.t, &c.r)?;
    let [lo, hi] = c.tolerance.ratio;
    let mut table = Table::new(
        "kernel_asymptotics",
        &["t", "r", "grad", "radial_hess", "tangential_hess", "ratio_grad", "ratio_radial", "ratio_tangential"],
    );
    let nr = c.r.len();
    for (i, row) in rows.iter().enumerate() {
        let ratios = (i >= nr).then(|| {
            let p = &rows[i - nr];
            [p.grad / row.grad, p.radial_hess / row.radial_hess, p.tangential_hess / row.tangential_hess]
        });
        let pass = ratios.is_none_or(|q| q.iter().all(|x| *x >= lo && *x <= hi));
        let mut out = vec![fmt12(row.t), fmt12(row.r), fmt12(row.grad), fmt12(row.radial_hess), fmt12(row.tangential_hess)];
        out.extend((0..3).map(|k| opt(ratios.map(|q| q[k]))));
        table.push(out, pass);
    }
    let mut norm = Table::new("normalization", &["t", "integral", "abs_err"]);
    for &t in &c.t {
        let v = h3_normalization(t)?;
        norm.push(vec![fmt12(t), fmt12(v), fmt12((v - 1.0).abs())], (v - 1.0).abs() <= c.tolerance.normalization);
    }
    Ok(vec![table, norm])
}
