use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cocyclo::catalogue::{self, CatalogueEntry};
use cocyclo::correlations::{renormalisation_check, Boundary};
use cocyclo::lyapunov::{assess, birkhoff_log_frobenius, AssessOptions};
use cocyclo::mahler::mahler_multivariate;
use cocyclo::{
    birkhoff_exponent, builtin, distribution_function, empirical_pair_correlation, load_rule,
    riesz_product_comb, rule_to_json, upper_bound_ladder, BirkhoffOptions, BoundLadder,
    CocycleDensity, Conclusion, FactorFamily, FourierMatrix, GenTrigPoly, InflationRule,
    LadderOptions, QmcOptions,
};

const DEFAULT_SEED: u64 = 0x00c0_cc1e;

#[derive(Parser)]
#[command(name = "cocyclo", version, about = "Fourier cocycles, Lyapunov bounds and diffraction of inflation tilings")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "COCYCLO_WORKERS")]
    workers: Option<usize>,
    /// Seed for every randomised step.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write results here instead of standard output.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rule-file utilities.
    #[command(subcommand)]
    Rule(RuleCmd),
    /// Built-in rules.
    #[command(subcommand)]
    Catalogue(CatalogueCmd),
    /// Fourier-matrix utilities.
    #[command(subcommand)]
    Fourier(FourierCmd),
    /// Upper bounds and estimates for the maximal Lyapunov exponent.
    #[command(subcommand)]
    Lyapunov(LyapunovCmd),
    /// Decide whether the diffraction has no absolutely continuous part.
    Verdict(VerdictArgs),
    /// Empirical pair correlations and the renormalisation identity.
    Correlate(CorrelateArgs),
    /// Finite Riesz-product densities and distribution functions.
    Riesz(RieszArgs),
    /// Recompute published tables and figures.
    Reproduce(ReproduceArgs),
}

#[derive(Subcommand)]
enum RuleCmd {
    /// Check primitivity and the stone-inflation property.
    Validate { rule: String },
}

#[derive(Subcommand)]
enum CatalogueCmd {
    /// List built-in names.
    List,
    /// Write a built-in rule as a JSON rule file.
    Export { name: String },
}

#[derive(Subcommand)]
enum FourierCmd {
    /// Print det B(k) as a trigonometric polynomial.
    Det {
        rule: String,
        /// Use the reduced block of a catalogue entry.
        #[arg(long)]
        reduced: bool,
    },
}

#[derive(Subcommand)]
enum LyapunovCmd {
    /// Ladder of Mahler-measure upper bounds m_N.
    Bound {
        rule: String,
        #[arg(long, default_value_t = 6)]
        max_n: usize,
        #[arg(long)]
        reduced: bool,
    },
    /// Birkhoff-average estimates from random starting points.
    Birkhoff {
        rule: String,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long)]
        reduced: bool,
    },
}

#[derive(Args)]
struct VerdictArgs {
    rule: String,
    #[arg(long, default_value_t = 6)]
    max_n: usize,
    /// Also run Birkhoff averages (reported as a non-rigorous estimate).
    #[arg(long)]
    birkhoff: bool,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
}

#[derive(Args)]
struct CorrelateArgs {
    rule: String,
    #[arg(long)]
    level: usize,
    #[arg(long)]
    range: f64,
    /// Seed prototile of the supertile.
    #[arg(long, default_value_t = 0)]
    seed_type: usize,
    /// Evaluate the renormalisation identity on frequency-weighted supertiles instead.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct RieszArgs {
    /// `fejer:M`, `staggered:a`, or a rule (`builtin:NAME` or a file) for the cocycle density.
    family: String,
    /// Depth; defaults to the deepest level resolved by the grid.
    #[arg(long)]
    depth: Option<usize>,
    /// Grid cells per axis (even).
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Upper end of the sampled interval or square.
    #[arg(long, default_value_t = 1.0)]
    kmax: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Table1,
    Fig3,
    #[value(name = "mahler-1xy")]
    Mahler1xy,
    Fejer,
}

#[derive(Args)]
struct ReproduceArgs {
    target: Target,
    /// Base M for `fejer`.
    #[arg(long, default_value_t = 2)]
    m: i64,
    /// Depth for `fejer`.
    #[arg(long, default_value_t = 3)]
    depth: u32,
}

/// 9 significant digits.
fn sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

struct Report {
    sink: Box<dyn Write>,
}

impl Report {
    fn open(path: &Option<PathBuf>, command: &str, seed: u64, params: &str) -> Result<Self> {
        let sink: Box<dyn Write> = match path {
            Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
            None => Box::new(io::stdout().lock()),
        };
        let mut r = Report { sink };
        r.comment(&format!("cocyclo {} {command}", env!("CARGO_PKG_VERSION")))?;
        r.comment(&format!("seed={seed}"))?;
        if !params.is_empty() {
            r.comment(params)?;
        }
        Ok(r)
    }

    fn comment(&mut self, line: &str) -> Result<()> {
        writeln!(self.sink, "# {line}")?;
        Ok(())
    }

    fn rows<I, R>(&mut self, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(&mut self.sink);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.sink, "{text}")?;
        Ok(())
    }
}

enum Source {
    Builtin(Box<CatalogueEntry>),
    File(Box<InflationRule>),
}

impl Source {
    fn load(spec: &str) -> Result<Self> {
        if let Some(name) = spec.strip_prefix("builtin:") {
            Ok(Source::Builtin(Box::new(builtin(name)?)))
        } else {
            let rule = load_rule(spec.as_ref()).with_context(|| format!("loading rule file {spec}"))?;
            Ok(Source::File(Box::new(rule)))
        }
    }

    fn rule(&self) -> &InflationRule {
        match self {
            Source::Builtin(e) => &e.rule,
            Source::File(r) => r,
        }
    }

    fn reduced(&self) -> Option<&FourierMatrix> {
        match self {
            Source::Builtin(e) => e.reduced.as_ref(),
            Source::File(_) => None,
        }
    }

    fn matrix(&self, reduced: bool) -> Result<FourierMatrix> {
        if reduced {
            self.reduced()
                .cloned()
                .ok_or_else(|| anyhow!("no reduced matrix is known for this rule"))
        } else {
            Ok(FourierMatrix::from_rule(self.rule()))
        }
    }
}

fn ladder_options(max_n: usize, seed: u64) -> LadderOptions {
    let mut opts = LadderOptions {
        max_n,
        ..Default::default()
    };
    opts.qmc.seed = seed;
    opts
}

fn ladder_rows(ladder: &BoundLadder) -> Vec<Vec<String>> {
    ladder
        .rungs
        .iter()
        .map(|r| vec![r.n.to_string(), sig(r.value), sig(r.error)])
        .collect()
}

fn run(cli: Cli) -> Result<u8> {
    let seed = cli.seed;
    let out = &cli.output;
    match cli.command {
        Command::Rule(RuleCmd::Validate { rule }) => {
            let src = Source::load(&rule)?;
            let r = src.rule();
            r.check()?;
            let pf = r.pf_data()?;
            let stone = r.validate_stone_inflation();
            let mut rep = Report::open(out, "rule validate", seed, &format!("rule={rule}"))?;
            rep.line(&format!("name={}", r.name))?;
            rep.line(&format!("dimension={}", r.dim))?;
            rep.line(&format!("types={}", r.num_types()))?;
            rep.line("primitive=true")?;
            rep.line(&format!("lambda_pf={}", sig(pf.eigenvalue)))?;
            let freqs: Vec<String> = pf.frequencies.iter().map(|&f| sig(f)).collect();
            rep.line(&format!("frequencies={}", freqs.join(",")))?;
            rep.line(&format!("det_q={}", sig(r.expansion.det())))?;
            rep.line(&format!("stone={}", stone.passed()))?;
            if let Source::Builtin(e) = &src {
                for n in &e.notes {
                    rep.comment(n)?;
                }
            }
            Ok(0)
        }
        Command::Catalogue(CatalogueCmd::List) => {
            let mut rep = Report::open(out, "catalogue list", seed, "")?;
            for n in catalogue::NAMES {
                rep.line(if n == "staggered" { "staggered(M,N,[a1,...,a_(M-1)])" } else { n })?;
            }
            Ok(0)
        }
        Command::Catalogue(CatalogueCmd::Export { name }) => {
            let e = builtin(&name)?;
            let json = rule_to_json(&e.rule);
            match out {
                Some(p) => std::fs::write(p, json + "\n")?,
                None => writeln!(io::stdout(), "{json}")?,
            }
            Ok(0)
        }
        Command::Fourier(FourierCmd::Det { rule, reduced }) => {
            let src = Source::load(&rule)?;
            let det = src.matrix(reduced)?.det_polynomial()?.pruned(1e-12);
            let mut rep = Report::open(out, "fourier det", seed, &format!("rule={rule} reduced={reduced}"))?;
            rep.line(&det.to_string())?;
            Ok(0)
        }
        Command::Lyapunov(LyapunovCmd::Bound { rule, max_n, reduced }) => {
            let src = Source::load(&rule)?;
            let ladder = upper_bound_ladder(&src.matrix(reduced)?, &ladder_options(max_n, seed))?;
            let mut rep = Report::open(
                out,
                "lyapunov bound",
                seed,
                &format!("rule={rule} max_n={max_n} reduced={reduced} bounds={}", ladder.convention.as_str()),
            )?;
            rep.rows(&["N", "mN", "err"], ladder_rows(&ladder))?;
            Ok(0)
        }
        Command::Lyapunov(LyapunovCmd::Birkhoff { rule, samples, iters, reduced }) => {
            let src = Source::load(&rule)?;
            let opts = BirkhoffOptions {
                samples,
                iterations: iters,
                seed,
            };
            let est = birkhoff_exponent(&src.matrix(reduced)?, &opts)?;
            let mut rep = Report::open(
                out,
                "lyapunov birkhoff",
                seed,
                &format!("rule={rule} samples={samples} iters={iters} reduced={reduced}"),
            )?;
            rep.comment(&format!("chi={} stderr={}", sig(est.value), sig(est.std_error)))?;
            rep.rows(
                &["sampleIndex", "k", "estimate"],
                est.per_sample.iter().enumerate().map(|(i, (k, v))| {
                    let ks: Vec<String> = k.iter().map(|&x| sig(x)).collect();
                    vec![i.to_string(), ks.join(" "), sig(*v)]
                }),
            )?;
            Ok(0)
        }
        Command::Verdict(a) => {
            let src = Source::load(&a.rule)?;
            let opts = AssessOptions {
                ladder: ladder_options(a.max_n, seed),
                birkhoff: a.birkhoff.then_some(BirkhoffOptions {
                    samples: a.samples,
                    iterations: a.iters,
                    seed,
                }),
            };
            let res = assess(src.rule(), src.reduced(), &opts)?;
            let v = &res.verdict;
            let mut rep = Report::open(out, "verdict", seed, &format!("rule={} max_n={}", a.rule, a.max_n))?;
            rep.line(&format!("conclusion={}", v.conclusion.as_str()))?;
            rep.line(&format!("threshold={}", sig(v.threshold)))?;
            if let Some(b) = &v.bound {
                rep.line(&format!("bound={} error={} source={}", sig(b.value), sig(b.error), b.label))?;
                rep.line(&format!("margin={}", sig(v.margin)))?;
            }
            if let Some(t) = &v.trend {
                rep.line(&format!("trend={t}"))?;
            }
            rep.line(&format!("explanation={}", v.explanation))?;
            if let Some(l) = &res.ladder {
                rep.comment(&format!("ladder ({})", l.convention.as_str()))?;
                rep.rows(&["N", "mN", "err"], ladder_rows(l))?;
            }
            Ok(match v.conclusion {
                Conclusion::SingularDiffraction => 0,
                Conclusion::Inconclusive | Conclusion::Inapplicable => 2,
            })
        }
        Command::Correlate(a) => {
            let src = Source::load(&a.rule)?;
            let rule = src.rule();
            let (corr, report) = if a.check {
                let (c, r) = renormalisation_check(rule, a.level, a.range, Boundary::Eroded, seed)?;
                (c, Some(r))
            } else {
                let patch = rule.inflate_patch(a.seed_type, a.level)?;
                (empirical_pair_correlation(rule, &patch, a.range)?, None)
            };
            let mut rep = Report::open(
                out,
                "correlate",
                seed,
                &format!("rule={} level={} range={} check={}", a.rule, a.level, a.range, a.check),
            )?;
            rep.comment(&format!("window_mass={}", sig(corr.window_mass)))?;
            if let Some(r) = report {
                rep.comment(&format!(
                    "max_residual={} evaluated={} at={}",
                    sig(r.max_residual),
                    r.evaluated,
                    r.worst.map_or("-".into(), |(i, j, z)| format!("({i},{j},{z})"))
                ))?;
            }
            let basis = rule.basis.clone();
            rep.rows(
                &["i", "j", "z-coeffs", "z-float", "nu"],
                corr.entries().into_iter().map(|(i, j, z, nu)| {
                    let zf: Vec<String> = z.real_values(&basis).iter().map(|&x| sig(x)).collect();
                    vec![i.to_string(), j.to_string(), z.to_string(), zf.join(" "), sig(nu)]
                }),
            )?;
            Ok(0)
        }
        Command::Riesz(a) => riesz(a, seed, out),
        Command::Reproduce(a) => reproduce(a, seed, out),
    }
}

fn family(spec: &str) -> Result<FactorFamily> {
    if let Some(m) = spec.strip_prefix("fejer:") {
        let m: u32 = m.parse().context("fejer:M needs an integer M")?;
        if m < 2 {
            bail!("fejer:M needs M >= 2");
        }
        return Ok(FactorFamily::Fejer { m });
    }
    if let Some(a) = spec.strip_prefix("staggered:") {
        return Ok(FactorFamily::Staggered {
            a: a.parse().context("staggered:a needs a real a")?,
        });
    }
    let src = Source::load(spec)?;
    let pf = src.rule().pf_data()?;
    Ok(FactorFamily::Cocycle(CocycleDensity::new(
        FourierMatrix::from_rule(src.rule()),
        &pf.frequencies,
    )?))
}

fn riesz(a: RieszArgs, seed: u64, out: &Option<PathBuf>) -> Result<u8> {
    let fam = family(&a.family)?;
    if a.grid < 2 || !a.grid.is_multiple_of(2) {
        bail!("--grid must be even and at least 2");
    }
    let h = a.kmax / a.grid as f64;
    let (resolved, _) = fam.resolved_depth(h);
    let depth = a.depth.unwrap_or(resolved);
    if depth > resolved {
        eprintln!("warning: depth {depth} oscillates below the grid spacing; depth {resolved} is resolved");
    }
    let mut rep = Report::open(
        out,
        "riesz",
        seed,
        &format!("family={} depth={depth} grid={} kmax={}", a.family, a.grid, a.kmax),
    )?;
    match fam.dim() {
        1 => {
            let rows = (0..=a.grid)
                .map(|i| {
                    let k = i as f64 * h;
                    Ok(vec![sig(k), sig(fam.density(depth, &[k])?)])
                })
                .collect::<Result<Vec<_>>>()?;
            rep.rows(&["k1", "density"], rows)?;
        }
        2 => {
            let d = distribution_function(&fam, depth, a.kmax, a.kmax, a.grid)?;
            rep.comment(&format!("corner_error={}", sig(d.corner_error)))?;
            let mut rows = Vec::new();
            for j in 0..d.k2.len() {
                for i in 0..d.k1.len() {
                    rows.push(vec![sig(d.k1[i]), sig(d.k2[j]), sig(d.density_at(i, j)), sig(d.at(i, j))]);
                }
            }
            rep.rows(&["k1", "k2", "density", "F"], rows)?;
        }
        d => bail!("densities in dimension {d} are not sampled"),
    }
    Ok(0)
}

fn reproduce(a: ReproduceArgs, seed: u64, out: &Option<PathBuf>) -> Result<u8> {
    match a.target {
        Target::Table1 => {
            let e = builtin("abcd")?;
            let reduced = e.reduced.as_ref().expect("abcd has a reduced block");
            let ladder = upper_bound_ladder(reduced, &ladder_options(12, seed))?;
            let mut rep = Report::open(out, "reproduce table1", seed, "rule=abcd reduced=true max_n=12")?;
            rep.rows(&["N", "mN", "err"], ladder_rows(&ladder))?;
        }
        Target::Fig3 => {
            let e = builtin("frank-robinson")?;
            let b = e.fourier_matrix();
            let ladder = upper_bound_ladder(&b, &ladder_options(6, seed))?;
            let opts = BirkhoffOptions {
                samples: 64,
                iterations: 2000,
                seed,
            };
            let chi = birkhoff_exponent(&b, &opts)?;
            let m1 = birkhoff_log_frobenius(&b, &opts)?;
            let lambda = (1.0 + 13f64.sqrt()) / 2.0;
            let mut rep = Report::open(out, "reproduce fig3", seed, "rule=frank-robinson max_n=6 samples=64 iters=2000")?;
            rep.comment(&format!("bounds={} (compare with 2 chi)", ladder.convention.as_str()))?;
            rep.comment(&format!("two_log_lambda={}", sig(2.0 * lambda.ln())))?;
            rep.comment(&format!("birkhoff_2chi={} stderr={}", sig(2.0 * chi.value), sig(2.0 * chi.std_error)))?;
            rep.comment(&format!("birkhoff_m1={} stderr={}", sig(m1.value), sig(m1.std_error)))?;
            rep.comment(&format!("trend={}", ladder.trend()))?;
            rep.rows(&["N", "mN", "err"], ladder_rows(&ladder))?;
        }
        Target::Mahler1xy => {
            let p = GenTrigPoly::from_integer_terms(2, &[(&[0, 0], 1.0), (&[1, 0], 1.0), (&[0, 1], 1.0)]);
            let opts = QmcOptions {
                start_nodes: 1 << 12,
                tol: 1e-7,
                seed,
                ..Default::default()
            };
            let m = mahler_multivariate(&p, &opts)?;
            let mut rep = Report::open(out, "reproduce mahler-1xy", seed, "")?;
            rep.rows(
                &["polynomial", "mahler", "err", "method"],
                [vec!["1+x+y".into(), sig(m.value), sig(m.error), m.method.as_str().into()]],
            )?;
        }
        Target::Fejer => {
            let comb = riesz_product_comb(a.m, a.depth)?;
            let mut rep = Report::open(
                out,
                "reproduce fejer",
                seed,
                &format!("m={} depth={}", a.m, a.depth),
            )?;
            let mut atoms: Vec<_> = comb.atoms().map(|(x, w)| (x.coeff(0), *w)).collect();
            atoms.sort();
            rep.rows(
                &["l", "weight", "exact"],
                atoms.into_iter().map(|(l, w)| vec![l.to_string(), sig(*w.numer() as f64 / *w.denom() as f64), w.to_string()]),
            )?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) if e
            .downcast_ref::<io::Error>()
            .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
