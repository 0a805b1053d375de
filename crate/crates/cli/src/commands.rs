//! Subcommand implementations.

use std::f64::consts::TAU;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;
use wavegraph::catalog;
use wavegraph::classical::{classify, frobenius, gap_sweep, UNIMODULAR_TOL};
use wavegraph::coupler::{design_point_table, fit_measured_coupling, CouplerDesign, DeltaNTable};
use wavegraph::graph::DEFAULT_RATIONAL_BOUND;
use wavegraph::io::{read_records, read_spectrum_csv, spectrum_columns, SpectrumColumns, Table};
use wavegraph::length::{
    enumerate_orbits, find_peaks, length_spectrum, match_peaks, resample_uniform_k, Window,
};
use wavegraph::localization::{
    ensemble_summary, localization, BondIntensityProfile, IntensitySource, LocalizationReport,
};
use wavegraph::measured::{
    find_dips, k_to_lambda_nm, neff_from_fringe, normalize, MeasuredSpectrum,
};
use wavegraph::open::{open_poles, transmission_sweep, transmission_sweep_dispersive};
use wavegraph::operator::{assemble_sigma, eigenmode_with, QuantumMap};
use wavegraph::rmt::{
    calibrate_index, delta3_goe, delta3_gue, delta3_poisson, empirical_unfold, from_unfolded,
    goe_levels, gue_cdf, gue_pdf, nnsd, number_variance, poisson_cdf, poisson_levels, poisson_pdf,
    rigidity_delta3, sigma2_goe, sigma2_gue, sigma2_poisson, unfold_root_list, unfold_roots,
    wigner_goe_cdf, wigner_goe_pdf, Curve, LevelSource, UnfoldedSpectrum,
};
use wavegraph::spectral::{
    closed_spectrum, missing_fraction, weyl_count, ResonanceSet, Root, ScanOptions,
};
use wavegraph::{Dispersion, Graph, IndexModel, OpenGraph};

use crate::output::{Failure, Output, PlotStyle};
use crate::{
    ClassicalArgs, Cli, Command, CouplerArgs, CouplerSource, DispersionArg, GraphArgs, IngestArgs,
    LengthArgs, LocalizeArgs, NeffArgs, OrbitArgs, SpectrumArgs, StatsArgs, SyntheticKind,
    WindowArgs, WindowKind, DEFAULT_LAMBDA_WINDOW,
};

pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Validate(a) => validate(cli, a),
        Command::Classical(a) => classical(cli, a),
        Command::Spectrum(a) => spectrum(cli, a),
        Command::Stats(a) => stats(cli, a),
        Command::LengthSpectrum(a) => length(cli, a),
        Command::Orbits(a) => orbits(cli, a),
        Command::Localize(a) => localize(cli, a),
        Command::Coupler(a) => coupler(cli, a),
        Command::Ingest(a) => ingest(cli, a),
        Command::Neff(a) => neff(cli, a),
    }
}

fn graph_error(spec: &str, e: wavegraph::Error) -> Failure {
    match e {
        wavegraph::Error::Io(_) => Failure::Io(format!("{spec}: {e}")),
        _ => Failure::InvalidGraph(format!("  file: {spec}\n  problem: {e}")),
    }
}

fn read_graph(spec: &str) -> Result<Graph, Failure> {
    match spec {
        "btg" => Ok(catalog::btg()),
        "fg" => Ok(catalog::fg()),
        path => Graph::from_path(path).map_err(|e| graph_error(spec, e)),
    }
}

impl GraphArgs {
    fn spec(&self) -> Result<&str, Failure> {
        self.graph
            .as_deref()
            .ok_or_else(|| Failure::Other("--graph is required".into()))
    }

    /// Loads the graph, checks its lengths and applies index and coupling overrides.
    fn load(&self) -> Result<Graph, Failure> {
        let spec = self.spec()?;
        let g = read_graph(spec)?;
        g.validate_lengths(DEFAULT_RATIONAL_BOUND)
            .map_err(|e| graph_error(spec, e))?;
        let mut index = g.index;
        if let Some(n) = self.n_eff {
            index.n_eff = n;
        }
        if let Some(n) = self.n_g {
            index.n_g = n;
        }
        if let Some(d) = self.dispersion {
            index.dispersion = match d {
                DispersionArg::Constant => Dispersion::Constant,
                DispersionArg::Linear => Dispersion::Linear,
            };
        }
        if !(index.n_eff > 0.0 && index.n_g > 0.0) {
            return Err(Failure::Other("indices must be positive".into()));
        }
        let g = g.with_index(index);
        match self.coupling {
            Some(c) => g.with_uniform_coupling(c).map_err(Failure::from),
            None => Ok(g),
        }
    }

    /// [`Self::load`] followed by the optional Weyl-count calibration.
    fn load_calibrated(&self, k: (f64, f64)) -> Result<Graph, Failure> {
        let g = self.load()?;
        Ok(match self.calibrate_count {
            Some(n) => {
                let n_eff = calibrate_index(n, k.0, k.1, g.total_length());
                g.with_index(IndexModel::constant(n_eff))
            }
            None => g,
        })
    }
}

impl WindowArgs {
    fn k_range(&self) -> Result<(f64, f64), Failure> {
        let (a, b) = match (self.kmin, self.kmax, &self.lambda_window) {
            (Some(a), Some(b), _) => (a, b),
            (_, _, Some(w)) => (TAU / w[1], TAU / w[0]),
            _ => (TAU / DEFAULT_LAMBDA_WINDOW.1, TAU / DEFAULT_LAMBDA_WINDOW.0),
        };
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(Failure::Other(format!(
                "empty or invalid window: k in [{a}, {b}] 1/um"
            )));
        }
        Ok((a, b))
    }
}

fn add_window_meta(out: &mut Output, k: (f64, f64)) {
    out.add_meta("k_min", format!("{:.17e}", k.0));
    out.add_meta("k_max", format!("{:.17e}", k.1));
}

fn scan(g: &Graph, k: (f64, f64), grid_per_spacing: f64) -> Result<ResonanceSet, Failure> {
    let opts = ScanOptions {
        grid_per_spacing,
        ..ScanOptions::default()
    };
    Ok(closed_spectrum(g, k.0, k.1, opts)?)
}

fn validate(cli: &Cli, a: &GraphArgs) -> Result<(), Failure> {
    let spec = a.spec()?;
    let g = read_graph(spec)?;
    let mut problems = Vec::new();
    if !g.is_connected() {
        problems.push("graph is not connected".to_string());
    }
    if let Err(e) = g.validate_lengths(DEFAULT_RATIONAL_BOUND) {
        problems.push(e.to_string());
    }
    let sigma_defect = match assemble_sigma(&g) {
        Ok(s) => {
            let gram = s.adjoint() * &s;
            let defect = (0..gram.nrows())
                .flat_map(|i| (0..gram.ncols()).map(move |j| (i, j)))
                .map(|(i, j)| {
                    (gram[(i, j)].re - if i == j { 1.0 } else { 0.0 }).hypot(gram[(i, j)].im)
                })
                .fold(0.0, f64::max);
            Some(defect)
        }
        Err(e) => {
            problems.push(e.to_string());
            None
        }
    };
    let report = json!({
        "graph": spec,
        "vertices": g.vertices().len(),
        "bonds": g.num_bonds(),
        "leads": g.leads().len(),
        "total_length_um": g.total_length(),
        "max_bond_length_um": g.max_bond_length(),
        "n_eff": g.index.n_eff,
        "n_g": g.index.n_g,
        "connected": g.is_connected(),
        "commensurate_pair": g.commensurate_pair(DEFAULT_RATIONAL_BOUND).map(|(i, j, p, q)| {
            json!({"bonds": [g.bonds()[i].id, g.bonds()[j].id], "ratio": [p, q]})
        }),
        "sigma_unitarity_defect": sigma_defect,
        "valid": problems.is_empty(),
        "problems": problems,
    });
    let mut out = Output::new(cli, "validate")?;
    out.set_graph(spec, &g);
    out.json("validation.json", report)?;
    println!(
        "{spec}: {} vertices, {} bonds, L_tot {:.3} um",
        g.vertices().len(),
        g.num_bonds(),
        g.total_length()
    );
    if problems.is_empty() {
        println!("valid");
        Ok(())
    } else {
        Err(Failure::InvalidGraph(
            problems
                .iter()
                .map(|p| format!("  problem: {p}"))
                .collect::<Vec<_>>()
                .join("\n"),
        ))
    }
}

fn classical(cli: &Cli, a: &ClassicalArgs) -> Result<(), Failure> {
    let g = a.graph.load()?;
    let f = frobenius(&assemble_sigma(&g)?)?;
    let c = classify(&f);
    let mut out = Output::new(cli, "classical")?;
    out.set_graph(a.graph.spec()?, &g);
    let mut t = Table::new(&["re", "im", "modulus"]);
    for z in &c.eigenvalues {
        t.push(vec![z.re, z.im, z.norm()]);
    }
    out.table("pf_eigenvalues.csv", &t)?;
    out.plot_stub("pf_eigenvalues.csv", "re", &["im"], PlotStyle::Points)?;
    out.json(
        "classification.json",
        json!({
            "classification": c.summary(),
            "ergodic": c.is_ergodic,
            "mixing": c.is_mixing,
            "gap": c.gap,
            "unimodular_eigenvalues": c.unimodular.len(),
            "eigenvalue_minus_one": c.has_minus_one(UNIMODULAR_TOL),
            "stochastic_defect": f.stochastic_defect(),
        }),
    )?;
    println!("{}", c.summary());
    if a.gap_sweep {
        gap_sweep_table(a, &g, &mut out)?;
    }
    Ok(())
}

fn gap_sweep_table(a: &ClassicalArgs, g: &Graph, out: &mut Output) -> Result<(), Failure> {
    let design = coupler_design(&a.coupler, out)?;
    let k = a.window.k_range()?;
    if a.step_nm.is_nan() || a.step_nm <= 0.0 {
        return Err(Failure::Other("--step-nm must be positive".into()));
    }
    let (lo, hi) = (TAU * 1000.0 / k.1, TAU * 1000.0 / k.0);
    let n = ((hi - lo) / a.step_nm + 1e-9).floor() as usize;
    let lambdas: Vec<f64> = (0..=n)
        .map(|i| (lo + i as f64 * a.step_nm) / 1000.0)
        .collect();
    let couplings = lambdas
        .iter()
        .map(|&l| design.coupling(l))
        .collect::<wavegraph::Result<Vec<f64>>>()?;
    let sweep = gap_sweep(g, &lambdas, |l| design.coupling(l).unwrap_or(f64::NAN))?;
    let mut t = Table::new(&["lambda_nm", "C", "gap", "mixing"]);
    for ((l, c), cc) in sweep.iter().zip(&couplings) {
        t.push(vec![
            l * 1000.0,
            *cc,
            c.gap.unwrap_or(f64::NAN),
            if c.is_mixing { 1.0 } else { 0.0 },
        ]);
    }
    out.table("gap_sweep.csv", &t)?;
    out.plot_stub("gap_sweep.csv", "lambda_nm", &["gap"], PlotStyle::Line)?;
    let gaps: Vec<f64> = sweep.iter().filter_map(|(_, c)| c.gap).collect();
    if let (Some(min), Some(max)) = (
        gaps.iter().copied().reduce(f64::min),
        gaps.iter().copied().reduce(f64::max),
    ) {
        println!(
            "gap over {:.0}-{:.0} nm: {min:.4} to {max:.4}",
            lo,
            lo + n as f64 * a.step_nm
        );
    }
    Ok(())
}

fn spectrum(cli: &Cli, a: &SpectrumArgs) -> Result<(), Failure> {
    let k = a.window.k_range()?;
    let g = a.graph.load_calibrated(k)?;
    let mut out = Output::new(cli, "spectrum")?;
    out.set_graph(a.graph.spec()?, &g);
    add_window_meta(&mut out, k);
    if !a.open {
        let set = scan(&g, k, a.grid_per_spacing)?;
        let weyl = weyl_count(&g, k.1) - weyl_count(&g, k.0);
        let missing = missing_fraction(set.count(), &g, k.0, k.1);
        out.add_meta("weyl_count", format!("{weyl:.6}"));
        out.add_meta("missing_fraction", format!("{missing:.6}"));
        let mut t = Table::new(&[
            "k_um_inv",
            "lambda_nm",
            "multiplicity",
            "residual",
            "null_dim",
        ]);
        for r in &set.roots {
            t.push(vec![
                r.k,
                k_to_lambda_nm(r.k),
                r.multiplicity as f64,
                r.residual,
                r.null_dim as f64,
            ]);
        }
        out.table("roots.csv", &t)?;
        println!(
            "{} roots in [{:.6}, {:.6}] 1/um (Weyl {weyl:.1}, missing {:.2}%)",
            set.count(),
            k.0,
            k.1,
            100.0 * missing
        );
        return Ok(());
    }
    let open = if g.is_open() {
        OpenGraph::new(g.clone())?
    } else {
        OpenGraph::from_bus_placement(&g, a.bus_coupling)?
    };
    let set = scan(&open.closed_limit()?, k, a.grid_per_spacing)?;
    let poles = open_poles(&open, &set.roots)?;
    out.add_meta("bus_coupling", open.bus_coupling());
    let mut t = Table::new(&[
        "re",
        "im",
        "gamma",
        "Q",
        "lambda_nm",
        "seed_k",
        "multiplicity",
        "converged",
    ]);
    for p in &poles.poles {
        t.push(vec![
            p.k.re,
            p.k.im,
            p.gamma(),
            p.q(),
            k_to_lambda_nm(p.k.re),
            p.seed,
            p.multiplicity as f64,
            if p.converged { 1.0 } else { 0.0 },
        ]);
    }
    out.table("poles.csv", &t)?;
    if a.samples > 1 {
        let ks: Vec<f64> = (0..a.samples)
            .map(|i| k.0 + (k.1 - k.0) * i as f64 / (a.samples - 1) as f64)
            .collect();
        let sweep = transmission_sweep(&open, &ks)?;
        let mut t = Table::new(&["k_um_inv", "lambda_nm", "T2"]);
        for (kk, s) in ks.iter().zip(&sweep) {
            t.push(vec![*kk, k_to_lambda_nm(*kk), s.power()]);
        }
        out.table("transmission.csv", &t)?;
        out.plot_stub("transmission.csv", "lambda_nm", &["T2"], PlotStyle::Line)?;
    }
    println!(
        "{} poles at bus coupling {}, max shift {:.3e} 1/um, {} unconverged",
        poles.poles.len(),
        open.bus_coupling(),
        poles.max_shift(),
        poles.unpaired().count()
    );
    Ok(())
}

fn roots_from_table(t: &Table) -> Result<Vec<Root>, Failure> {
    let k = t.column(k_column(t).unwrap_or("k_um_inv"))?;
    let m = match t.column_index("multiplicity") {
        Some(_) => t.column("multiplicity")?,
        None => vec![1.0; k.len()],
    };
    Ok(k.iter()
        .zip(&m)
        .map(|(&k, &m)| Root {
            k,
            multiplicity: (m.round() as usize).max(1),
            residual: 0.0,
            null_dim: m.round() as usize,
        })
        .collect())
}

fn k_column(t: &Table) -> Option<&'static str> {
    ["k_um_inv", "k"]
        .into_iter()
        .find(|c| t.column_index(c).is_some())
}

fn meta_f64(t: &Table, key: &str) -> Option<f64> {
    t.meta_value(key).and_then(|v| v.parse().ok())
}

fn levels_from_file(
    path: &Path,
    graph: &GraphArgs,
    out: &mut Output,
) -> Result<UnfoldedSpectrum, Failure> {
    let t = Table::read_path(path)?;
    out.add_meta("input", path.display());
    if t.column_index("level").is_some() {
        return Ok(from_unfolded(t.column("level")?, LevelSource::Synthetic)?);
    }
    let roots = if k_column(&t).is_some() {
        roots_from_table(&t)?
    } else {
        let lambda = t.column("lambda_nm")?;
        let mut k: Vec<f64> = lambda.iter().map(|&l| TAU * 1000.0 / l).collect();
        k.sort_by(f64::total_cmp);
        k.iter()
            .map(|&k| Root {
                k,
                multiplicity: 1,
                residual: 0.0,
                null_dim: 1,
            })
            .collect()
    };
    let scale = match (
        meta_f64(&t, "density_index"),
        meta_f64(&t, "total_length_um"),
    ) {
        (Some(n), Some(l)) => Some((n, l)),
        _ if graph.graph.is_some() => {
            let g = graph.load()?;
            Some((g.index.density_index(), g.total_length()))
        }
        _ => None,
    };
    match scale {
        Some((n, l)) => {
            out.add_meta("density_index", format!("{n:.17e}"));
            out.add_meta("total_length_um", format!("{l:.17e}"));
            Ok(unfold_root_list(&roots, n, l)?)
        }
        None => {
            out.add_meta("unfolding", "empirical");
            let k: Vec<f64> = roots.iter().map(|r| r.k).collect();
            let raw = from_unfolded(k, LevelSource::Experiment)?;
            Ok(empirical_unfold(&raw))
        }
    }
}

fn curve_table(
    c: &Curve,
    goe: fn(f64) -> f64,
    gue: fn(f64) -> f64,
    poisson: fn(f64) -> f64,
) -> Table {
    let mut t = Table::new(&["l", "value", "std_err", "goe", "gue", "poisson"]);
    for p in &c.points {
        t.push(vec![
            p.l,
            p.value,
            p.std_err,
            goe(p.l),
            gue(p.l),
            poisson(p.l),
        ]);
    }
    if !c.dropped.is_empty() {
        let dropped: Vec<String> = c.dropped.iter().map(|l| l.to_string()).collect();
        t = t.with_meta("dropped_l", dropped.join(" "));
    }
    t
}

fn stats(cli: &Cli, a: &StatsArgs) -> Result<(), Failure> {
    let mut out = Output::new(cli, "stats")?;
    let u = if let Some(kind) = a.synthetic {
        out.add_meta("synthetic", format!("{kind:?}").to_lowercase());
        let u = match kind {
            SyntheticKind::Poisson => poisson_levels(a.levels, cli.seed),
            SyntheticKind::Goe => goe_levels(a.levels, cli.seed),
        };
        let mut t = Table::new(&["level"]);
        for &x in &u.levels {
            t.push(vec![x]);
        }
        out.table("levels.csv", &t)?;
        u
    } else if let Some(path) = &a.input {
        levels_from_file(path, &a.graph, &mut out)?
    } else if a.from_graph {
        let k = a.window.k_range()?;
        let g = a.graph.load_calibrated(k)?;
        out.set_graph(a.graph.spec()?, &g);
        add_window_meta(&mut out, k);
        unfold_roots(&scan(&g, k, a.grid_per_spacing)?, &g)?
    } else {
        return Err(Failure::Other(
            "stats needs --input, --from-graph or --synthetic".into(),
        ));
    };
    let s = nnsd(&u, a.bin_width);
    out.add_meta("levels", u.len());
    out.add_meta("split_degeneracies", u.split_degeneracies);
    let mut t = Table::new(&[
        "levels",
        "mean_spacing",
        "ks_goe",
        "ks_gue",
        "ks_poisson",
        "goe_margin",
    ]);
    t.push(vec![
        u.len() as f64,
        u.mean_spacing(),
        s.ks.goe,
        s.ks.gue,
        s.ks.poisson,
        s.ks.goe_margin(),
    ]);
    out.table("ks.csv", &t)?;
    let mut t = Table::new(&["s", "i_emp", "i_goe", "i_gue", "i_poisson"]);
    for &(x, i) in &s.cumulative {
        t.push(vec![x, i, wigner_goe_cdf(x), gue_cdf(x), poisson_cdf(x)]);
    }
    out.table("cumulative.csv", &t)?;
    out.plot_stub(
        "cumulative.csv",
        "s",
        &["i_emp", "i_goe", "i_gue", "i_poisson"],
        PlotStyle::Line,
    )?;
    if let Some(h) = &s.histogram {
        let mut t = Table::new(&["s", "p_emp", "p_goe", "p_gue", "p_poisson"])
            .with_meta("bin_width", h.bin_width());
        for (x, d) in h.centers().iter().zip(&h.density) {
            t.push(vec![
                *x,
                *d,
                wigner_goe_pdf(*x),
                gue_pdf(*x),
                poisson_pdf(*x),
            ]);
        }
        out.table("nnsd.csv", &t)?;
        out.plot_stub(
            "nnsd.csv",
            "s",
            &["p_emp", "p_goe", "p_gue", "p_poisson"],
            PlotStyle::Line,
        )?;
    }
    let sigma2 = number_variance(&u, &a.l_values);
    out.table(
        "sigma2.csv",
        &curve_table(&sigma2, sigma2_goe, sigma2_gue, sigma2_poisson),
    )?;
    out.plot_stub(
        "sigma2.csv",
        "l",
        &["value", "goe", "poisson"],
        PlotStyle::Line,
    )?;
    let delta3 = rigidity_delta3(&u, &a.l_values);
    out.table(
        "delta3.csv",
        &curve_table(&delta3, delta3_goe, delta3_gue, delta3_poisson),
    )?;
    out.plot_stub(
        "delta3.csv",
        "l",
        &["value", "goe", "poisson"],
        PlotStyle::Line,
    )?;
    println!(
        "{} levels: KS goe {:.4}, gue {:.4}, poisson {:.4}",
        u.len(),
        s.ks.goe,
        s.ks.gue,
        s.ks.poisson
    );
    Ok(())
}

fn length(cli: &Cli, a: &LengthArgs) -> Result<(), Failure> {
    if a.samples < 2 {
        return Err(Failure::Other("--samples must be at least 2".into()));
    }
    let mut out = Output::new(cli, "length-spectrum")?;
    let graph = match &a.graph.graph {
        Some(_) => Some(a.graph.load()?),
        None => None,
    };
    if let Some(g) = &graph {
        out.set_graph(a.graph.spec()?, g);
    }
    let (k, t2) = if let Some(path) = &a.input {
        out.add_meta("input", path.display());
        let t = Table::read_path(path)?;
        let cols = if t.column_index("k_um_inv").is_some() && t.column_index("T2").is_some() {
            SpectrumColumns {
                lambda_nm: t
                    .column("k_um_inv")?
                    .iter()
                    .map(|&k| TAU * 1000.0 / k)
                    .collect(),
                transmission: t.column("T2")?,
                reference: None,
            }
        } else {
            spectrum_columns(&t)?
        };
        let spec = match &cols.reference {
            Some(r) => normalize(&cols.lambda_nm, &cols.transmission, &cols.lambda_nm, r)?,
            None => MeasuredSpectrum::new(cols.lambda_nm, cols.transmission)?,
        };
        resample_uniform_k(&spec.lambda_nm, &spec.transmission, a.samples)?
    } else {
        let g = graph
            .as_ref()
            .ok_or_else(|| Failure::Other("length-spectrum needs --graph or --input".into()))?;
        let k = a.window.k_range()?;
        add_window_meta(&mut out, k);
        let open = if g.is_open() {
            OpenGraph::new(g.clone())?
        } else {
            OpenGraph::from_bus_placement(g, a.bus_coupling)?
        };
        out.add_meta("bus_coupling", open.bus_coupling());
        let ks: Vec<f64> = (0..a.samples)
            .map(|i| k.0 + (k.1 - k.0) * i as f64 / (a.samples - 1) as f64)
            .collect();
        let sweep = if a.graph.coupling.is_none() {
            let design = coupler_design(&a.coupler, &mut out)?;
            out.add_meta("couplers", "dispersive");
            for l in [TAU / k.1, TAU / k.0] {
                design.coupling(l)?;
            }
            transmission_sweep_dispersive(&open, &ks, &|l| design.coupling(l).unwrap_or(f64::NAN))?
        } else {
            out.add_meta("couplers", "uniform");
            transmission_sweep(&open, &ks)?
        };
        let t2: Vec<f64> = sweep.iter().map(|t| t.power()).collect();
        let mut t = Table::new(&["k_um_inv", "lambda_nm", "T2"]);
        for (kk, p) in ks.iter().zip(&t2) {
            t.push(vec![*kk, k_to_lambda_nm(*kk), *p]);
        }
        out.table("transmission.csv", &t)?;
        out.plot_stub("transmission.csv", "lambda_nm", &["T2"], PlotStyle::Line)?;
        (ks, t2)
    };
    let window = match a.taper {
        WindowKind::Hann => Window::Hann,
        WindowKind::Rect => Window::Rectangular,
    };
    let spec = length_spectrum(&k, &t2, window)?;
    out.add_meta("resolution_um", format!("{:.17e}", spec.resolution_um));
    let mut t = Table::new(&["optical_length_um", "magnitude"]);
    for (x, m) in spec.optical_length_um.iter().zip(&spec.magnitude) {
        t.push(vec![*x, *m]);
    }
    out.table("length_spectrum.csv", &t)?;
    out.plot_stub(
        "length_spectrum.csv",
        "optical_length_um",
        &["magnitude"],
        PlotStyle::Line,
    )?;
    let Some(g) = &graph else {
        let mut t = Table::new(&["optical_length_um", "magnitude"]);
        for p in find_peaks(&spec, a.threshold) {
            t.push(vec![p.optical_length_um, p.magnitude]);
        }
        println!("{} peaks above {}", t.rows.len(), a.threshold);
        return out.table("peaks.csv", &t);
    };
    let orbits = enumerate_orbits(g, a.l_max)?;
    let report = match_peaks(
        &spec,
        &orbits,
        a.threshold,
        g.index.density_index() * a.l_max,
    );
    let mut t = Table::new(&[
        "optical_length_um",
        "magnitude",
        "matched",
        "orbit_optical_um",
        "offset_um",
        "repetition",
    ]);
    for m in &report.matches {
        let o = m.orbit.map(|i| &orbits[i]);
        t.push(vec![
            m.peak.optical_length_um,
            m.peak.magnitude,
            if o.is_some() { 1.0 } else { 0.0 },
            o.map_or(f64::NAN, |o| o.optical_length_um),
            m.offset_um,
            o.map_or(0.0, |o| o.repetition as f64),
        ]);
    }
    out.table(
        "peaks.csv",
        &t.with_meta("peaks_beyond_orbit_range", report.out_of_range.len()),
    )?;
    for (i, m) in report.matches.iter().take(2).enumerate() {
        println!(
            "peak {}: {:.1} um (magnitude {:.3})",
            i + 1,
            m.peak.optical_length_um,
            m.peak.magnitude
        );
    }
    println!(
        "{:.0}% of {} peaks matched to orbits, {} beyond orbit range",
        100.0 * report.matched_fraction(),
        report.matches.len(),
        report.out_of_range.len()
    );
    Ok(())
}

fn orbits(cli: &Cli, a: &OrbitArgs) -> Result<(), Failure> {
    let g = a.graph.load()?;
    let orbits = enumerate_orbits(&g, a.l_max)?;
    let mut out = Output::new(cli, "orbits")?;
    out.set_graph(a.graph.spec()?, &g);
    out.add_meta("l_max_um", a.l_max);
    let basis = g.basis();
    let rows = orbits.iter().map(|o| {
        let path: Vec<String> = o
            .bonds
            .iter()
            .map(|&d| {
                let db = basis.get(d);
                format!(
                    "{}{}",
                    g.bonds()[db.bond].id,
                    if db.forward { "+" } else { "-" }
                )
            })
            .collect();
        vec![
            format!("{:.17e}", o.length_um),
            format!("{:.17e}", o.optical_length_um),
            format!("{:.17e}", o.weight),
            o.repetition.to_string(),
            path.join(" "),
        ]
    });
    out.text_table(
        "orbits.csv",
        &[
            "length_um",
            "optical_length_um",
            "weight",
            "repetition",
            "bond_sequence",
        ],
        rows,
    )?;
    println!("{} periodic orbits up to {} um", orbits.len(), a.l_max);
    Ok(())
}

fn profile(intensities: Vec<f64>, thg: bool) -> BondIntensityProfile {
    if thg {
        BondIntensityProfile::thg(intensities)
    } else {
        BondIntensityProfile::model(intensities)
    }
}

/// Profiles from rows of `bond_id, intensity` with optional `source` and
/// `mode` columns. Modes and bonds keep their first-appearance order.
fn long_profiles(
    header: &[String],
    rows: &[Vec<String>],
    thg: bool,
) -> Result<(Vec<BondIntensityProfile>, Vec<String>), Failure> {
    let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(bond), Some(value)) = (col("bond_id"), col("intensity")) else {
        return Err(Failure::Other(
            "long-format input needs bond_id and intensity columns".into(),
        ));
    };
    let (source, mode) = (col("source"), col("mode"));
    let mut modes: Vec<String> = Vec::new();
    let mut bonds: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    let mut mode_thg: Vec<bool> = Vec::new();
    for (line, r) in rows.iter().enumerate() {
        let m = mode.map_or("0", |i| r[i].as_str());
        let mi = match modes.iter().position(|x| x == m) {
            Some(i) => i,
            None => {
                modes.push(m.to_string());
                mode_thg.push(thg);
                modes.len() - 1
            }
        };
        let bi = match bonds.iter().position(|x| *x == r[bond]) {
            Some(i) => i,
            None => {
                bonds.push(r[bond].clone());
                bonds.len() - 1
            }
        };
        let v: f64 = r[value].parse().map_err(|_| {
            Failure::Other(format!("row {}: '{}' is not a number", line + 1, r[value]))
        })?;
        if source.is_some_and(|i| r[i].eq_ignore_ascii_case("thg")) {
            mode_thg[mi] = true;
        }
        cells.push((mi, bi, v));
    }
    let mut grid = vec![vec![None; bonds.len()]; modes.len()];
    for (mi, bi, v) in cells {
        if grid[mi][bi].replace(v).is_some() {
            return Err(Failure::Other(format!(
                "mode {} lists bond {} twice",
                modes[mi], bonds[bi]
            )));
        }
    }
    let profiles = grid
        .into_iter()
        .zip(&modes)
        .zip(mode_thg)
        .map(|((row, m), t)| {
            let vals = row
                .into_iter()
                .zip(&bonds)
                .map(|(v, b)| {
                    v.ok_or_else(|| Failure::Other(format!("mode {m} has no intensity for {b}")))
                })
                .collect::<Result<Vec<f64>, Failure>>()?;
            Ok(profile(vals, t))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    Ok((profiles, bonds))
}

fn localize(cli: &Cli, a: &LocalizeArgs) -> Result<(), Failure> {
    let mut out = Output::new(cli, "localize")?;
    let (ks, profiles, bond_names) = if let Some(path) = &a.input {
        out.add_meta("input", path.display());
        let (header, rows) = read_records(path)?;
        let (profiles, bonds) = if header.iter().any(|h| h.eq_ignore_ascii_case("bond_id")) {
            long_profiles(&header, &rows, a.thg)?
        } else {
            let t = Table::read_path(path)?;
            let profiles = t.rows.iter().map(|r| profile(r.clone(), a.thg)).collect();
            (profiles, t.header)
        };
        let thg = profiles
            .iter()
            .filter(|p| p.source == IntensitySource::Thg)
            .count();
        out.add_meta("thg_modes", thg);
        (vec![f64::NAN; profiles.len()], profiles, bonds)
    } else {
        let k = a.window.k_range()?;
        let g = a.graph.load_calibrated(k)?;
        out.set_graph(a.graph.spec()?, &g);
        add_window_meta(&mut out, k);
        let set = scan(&g, k, a.grid_per_spacing)?;
        let map = QuantumMap::new(&g)?;
        let modes = set
            .roots
            .par_iter()
            .map(|r| eigenmode_with(&map, &g, r.k))
            .collect::<wavegraph::Result<Vec<_>>>()?;
        let ks = modes.iter().map(|m| m.k).collect();
        let profiles = modes
            .into_iter()
            .map(|m| BondIntensityProfile::model(m.bond_intensity))
            .collect();
        (
            ks,
            profiles,
            g.bonds().iter().map(|b| b.id.clone()).collect(),
        )
    };
    let reports = profiles
        .iter()
        .map(localization)
        .collect::<wavegraph::Result<Vec<LocalizationReport>>>()?;
    let mut t = Table::new(&["mode", "k_um_inv", "entropy", "entropy_norm", "ipr"]);
    for (i, (r, k)) in reports.iter().zip(&ks).enumerate() {
        t.push(vec![i as f64, *k, r.entropy, r.entropy_norm, r.ipr]);
    }
    out.table("localization.csv", &t)?;
    out.plot_stub(
        "localization.csv",
        "mode",
        &["entropy_norm", "ipr"],
        PlotStyle::Points,
    )?;
    let mut header = vec!["mode".to_string()];
    header.extend(bond_names);
    let probs = Table {
        header,
        rows: reports
            .iter()
            .enumerate()
            .map(|(i, r)| {
                std::iter::once(i as f64)
                    .chain(r.p.iter().copied())
                    .collect()
            })
            .collect(),
        ..Table::default()
    };
    out.table("bond_probabilities.csv", &probs)?;
    if reports.len() >= 2 {
        let e = ensemble_summary(&reports)?;
        let mut t = Table::new(&[
            "modes",
            "entropy_norm_mean",
            "entropy_norm_std",
            "ipr_mean",
            "ipr_std",
        ]);
        t.push(vec![
            e.modes as f64,
            e.entropy_norm_mean,
            e.entropy_norm_std,
            e.ipr_mean,
            e.ipr_std,
        ]);
        out.table("localization_summary.csv", &t)?;
        println!(
            "{} modes: S_norm {:.3} +- {:.3}, IPR {:.4} +- {:.4}",
            e.modes, e.entropy_norm_mean, e.entropy_norm_std, e.ipr_mean, e.ipr_std
        );
    } else if let Some(r) = reports.first() {
        println!("1 mode: S_norm {:.3}, IPR {:.4}", r.entropy_norm, r.ipr);
    }
    Ok(())
}

/// Coupler from an index-difference table (`lambda_nm` with `delta_neff` or
/// `delta_n`), or the design point when no table is given.
fn coupler_design(src: &CouplerSource, out: &mut Output) -> Result<CouplerDesign, Failure> {
    let l_dc = src.l_dc;
    let table = match &src.coupler_table {
        Some(p) => {
            out.add_meta("coupler_table", p.display());
            let t = Table::read_path(p)?;
            let dn = ["delta_neff", "delta_n"]
                .into_iter()
                .find(|c| t.column_index(c).is_some())
                .unwrap_or("delta_neff");
            let rows: Vec<(f64, f64)> = t
                .column("lambda_nm")?
                .into_iter()
                .zip(t.column(dn)?)
                .collect();
            DeltaNTable::from_nm_rows(&rows)?
        }
        None => design_point_table(),
    };
    let design = CouplerDesign::new(table, l_dc.unwrap_or(CouplerDesign::design_point().l_dc_um));
    out.add_meta("l_dc_um", design.l_dc_um);
    Ok(design)
}

fn coupler(cli: &Cli, a: &CouplerArgs) -> Result<(), Failure> {
    let mut out = Output::new(cli, "coupler")?;
    let design = coupler_design(&a.coupler, &mut out)?;
    let (lo, hi) = match &a.lambda_window {
        Some(w) => (w[0], w[1]),
        None => design.table.band(),
    };
    if !(a.step_nm > 0.0 && hi > lo) {
        return Err(Failure::Other(
            "empty wavelength window or non-positive step".into(),
        ));
    }
    let n = ((hi - lo) * 1000.0 / a.step_nm + 1e-9).floor() as usize;
    let lambda_nm: Vec<f64> = (0..=n)
        .map(|i| lo * 1000.0 + i as f64 * a.step_nm)
        .collect();
    let rows = design.coupling_table(&lambda_nm)?;
    let mut t = Table::new(&["lambda_nm", "C", "l50_um", "delta_ng"]);
    for r in rows {
        t.push(r.to_vec());
    }
    out.table("coupling.csv", &t)?;
    out.plot_stub("coupling.csv", "lambda_nm", &["C"], PlotStyle::Line)?;
    let (a0, b0) = design.table.band();
    if (a0..=b0).contains(&1.55) {
        let dng = design.delta_ng(1.55)?;
        println!(
            "at 1550 nm: C {:.4}, l50 {:.3} um, dn_g {:.4}{}",
            design.coupling(1.55)?,
            design.l50(1.55)?,
            dng.value,
            if dng.near_zero { " (near zero)" } else { "" }
        );
    }
    if let Some(p) = &a.measured {
        let t = Table::read_path(p)?;
        let lambda = t.column("lambda_nm")?;
        let fit =
            fit_measured_coupling(&lambda, &t.column("p13")?, &t.column("p14")?, a.smoothing)?;
        let mut ft = Table::new(&["lambda_nm", "coupling_raw", "coupling_fit"])
            .with_meta("measured", p.display())
            .with_meta(
                "fit_form",
                match a.smoothing {
                    Some(_) => "smoothing spline",
                    None => "smoothing spline (GCV)",
                },
            )
            .with_meta("smoothing", format!("{:.17e}", fit.smoothing))
            .with_meta("rms_residual", format!("{:.6e}", fit.rms_residual()));
        for (l, c) in fit.lambda_nm.iter().zip(&fit.raw) {
            ft.push(vec![*l, *c, fit.eval(*l)]);
        }
        out.table("coupling_fit.csv", &ft)?;
        out.plot_stub(
            "coupling_fit.csv",
            "lambda_nm",
            &["coupling_raw", "coupling_fit"],
            PlotStyle::Line,
        )?;
        println!(
            "measured fit: smoothing {:.3e}, rms residual {:.3e}",
            fit.smoothing,
            fit.rms_residual()
        );
    }
    Ok(())
}

fn ingest(cli: &Cli, a: &IngestArgs) -> Result<(), Failure> {
    let cols = read_spectrum_csv(&a.input)?;
    let spec = if let Some(r) = &a.reference {
        let rc = read_spectrum_csv(r)?;
        normalize(
            &cols.lambda_nm,
            &cols.transmission,
            &rc.lambda_nm,
            &rc.transmission,
        )?
    } else if let Some(r) = &cols.reference {
        normalize(&cols.lambda_nm, &cols.transmission, &cols.lambda_nm, r)?
    } else {
        MeasuredSpectrum::new(cols.lambda_nm, cols.transmission)?
    };
    let report = find_dips(&spec, a.prominence, a.min_depth);
    let mut out = Output::new(cli, "ingest")?;
    out.add_meta("input", a.input.display());
    out.add_meta("clipped_samples", spec.clipped.len());
    let mut t = Table::new(&["lambda_nm", "k_um_inv", "transmission"]);
    for (l, v) in spec.lambda_nm.iter().zip(&spec.transmission) {
        t.push(vec![*l, TAU * 1000.0 / l, *v]);
    }
    out.table("normalized.csv", &t)?;
    out.plot_stub(
        "normalized.csv",
        "lambda_nm",
        &["transmission"],
        PlotStyle::Line,
    )?;
    let mut t = Table::new(&[
        "lambda_nm",
        "k_um_inv",
        "fwhm_nm",
        "fwhm_k",
        "Q",
        "depth",
        "baseline",
    ]);
    for f in &report.fits {
        t.push(vec![
            f.lambda0_nm,
            f.k0,
            f.fwhm_nm,
            f.fwhm_k,
            f.q,
            f.depth,
            f.baseline,
        ]);
    }
    out.table("dips.csv", &t)?;
    let mut t = Table::new(&["lambda_nm", "samples_in_fwhm"]);
    for u in &report.undersampled {
        t.push(vec![u.lambda_nm, u.samples_in_fwhm as f64]);
    }
    out.table("undersampled.csv", &t)?;
    let finesse = report.finesse();
    let max_q = report.max_q();
    let mut t = Table::new(&["detected", "undersampled", "finesse", "max_q"]);
    t.push(vec![
        report.detected() as f64,
        report.undersampled.len() as f64,
        finesse.unwrap_or(f64::NAN),
        max_q.unwrap_or(f64::NAN),
    ]);
    out.table("ingest_summary.csv", &t)?;
    println!(
        "{} dips fitted, {} undersampled, finesse {}, max Q {}",
        report.detected(),
        report.undersampled.len(),
        finesse.map_or("n/a".into(), |f| format!("{f:.3}")),
        max_q.map_or("n/a".into(), |q| format!("{q:.4e}"))
    );
    Ok(())
}

fn neff(cli: &Cli, a: &NeffArgs) -> Result<(), Failure> {
    let e = neff_from_fringe(a.r0, a.sigma_r0, a.lambda)?;
    let out = Output::new(cli, "neff")?;
    let mut t = Table::new(&["r0", "sigma_r0", "lambda_um", "n_eff", "sigma"]);
    t.push(vec![a.r0, a.sigma_r0, a.lambda, e.n_eff, e.sigma]);
    out.table("neff.csv", &t)?;
    println!("n_eff = {:.5} +- {:.5}", e.n_eff, e.sigma);
    Ok(())
}
