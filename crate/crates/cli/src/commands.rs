use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use dataplan_core::allocate::{allocate_grid_oracle, allocate_proportional, ORACLE_MAX_SOURCES};
use dataplan_core::cost::{
    cost_breakdown, training_flops, AnnealingGeometry, CostBreakdown, MathPreset, ModelSpec,
    SourceCostParams, SourceKind,
};
use dataplan_core::diversity::{feed_binary, feed_text, NgramCounter, Vocabulary};
use dataplan_core::ingest::{build_utility_points, parse_manifest, TaskFilter};
use dataplan_core::scaling::{crossover, fit_all, rank_at_budget, FitOptions};
use dataplan_core::simulate::{
    generate_manifest, scenario_random, scenario_rank_flip_with_basis, NoiseSchedule,
};

use crate::args::{
    AllocateArgs, Command, CorpusFormat, CostArgs, DiversityArgs, KindArg, ManifestArgs,
    OutputArgs, Preset, ScenarioArg, ScheduleArg, SimulateArgs,
};
use crate::error::CliError;
use crate::report::{self, num, OracleCheck, PairCrossover, ReportBundle};
use crate::svg;

/// What a command produced; nothing is written until the command succeeds.
#[derive(Debug, Default)]
pub struct Output {
    /// Main CSV or manifest.
    pub primary: Vec<u8>,
    /// Where `primary` goes; standard output when unset.
    pub out: Option<PathBuf>,
    /// Side files such as SVG plots.
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub warnings: Vec<String>,
}

pub fn run_command(cmd: &Command, stdin: &mut dyn Read) -> Result<Output, CliError> {
    match cmd {
        Command::Fit(a) => {
            let bundle = load_bundle(&a.input, stdin)?;
            let primary = report::sections(vec![
                report::fits_table(&bundle.fits)?,
                report::points_table(&bundle.points)?,
            ]);
            Ok(finish(primary, &a.output, &bundle, &[]))
        }
        Command::Rank(a) => {
            let mut bundle = load_bundle(&a.input, stdin)?;
            bundle.ranking = rank_at_budget(&bundle.fits, a.budget)?;
            for r in &bundle.ranking {
                if r.extrapolated {
                    bundle.warnings.push(format!(
                        "prediction for '{}' at {} is extrapolated",
                        r.source_id,
                        num(a.budget)
                    ));
                }
            }
            if bundle.ranking.len() > 1 && bundle.ranking[0].tied {
                bundle
                    .warnings
                    .push("top of the ranking is tied; order among tied sources is by id".into());
            }
            let primary = report::rank_table(&bundle.ranking)?;
            Ok(finish(primary, &a.output, &bundle, &[a.budget]))
        }
        Command::Crossover(a) => {
            let mut bundle = load_bundle(&a.input, stdin)?;
            for (i, fa) in bundle.fits.iter().enumerate() {
                for fb in &bundle.fits[i + 1..] {
                    bundle.crossovers.push(PairCrossover {
                        source_a: fa.source_id.clone(),
                        source_b: fb.source_id.clone(),
                        outcome: crossover(fa, fb)?,
                    });
                }
            }
            let primary = report::crossover_table(&bundle.crossovers)?;
            let extra: Vec<f64> = bundle
                .crossovers
                .iter()
                .filter_map(|p| p.outcome.crossing().map(|x| x.compute))
                .collect();
            Ok(finish(primary, &a.output, &bundle, &extra))
        }
        Command::Allocate(a) => allocate(a, stdin),
        Command::Cost(a) => cost(a),
        Command::Diversity(a) => diversity(a, stdin),
        Command::Simulate(a) => simulate(a),
    }
}

fn read_text(path: &Path, stdin: &mut dyn Read) -> Result<String, CliError> {
    let mut text = String::new();
    let result = if path == Path::new("-") {
        stdin.read_to_string(&mut text)
    } else {
        File::open(path).and_then(|mut f| f.read_to_string(&mut text))
    };
    result.map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text)
}

/// Manifest to fitted laws, with run-level warnings surfaced.
fn load_bundle(args: &ManifestArgs, stdin: &mut dyn Read) -> Result<ReportBundle, CliError> {
    let set = parse_manifest(&read_text(&args.manifest, stdin)?)?;
    let filter = if args.tasks.is_empty() {
        TaskFilter::all()
    } else {
        TaskFilter::new(&args.tasks)?
    };
    let points = build_utility_points(&set, &filter, args.basis)?;
    let fits = fit_all(
        &points,
        FitOptions {
            drop_smallest: args.drop_smallest,
        },
    )?;
    let warnings = set
        .runs
        .iter()
        .filter_map(|r| {
            r.metadata
                .get("warning")
                .map(|w| format!("run {} at {} steps: {w}", r.source_id, r.steps))
        })
        .collect();
    Ok(ReportBundle {
        fits,
        points,
        warnings,
        ..ReportBundle::default()
    })
}

fn finish(
    primary: Vec<u8>,
    output: &OutputArgs,
    bundle: &ReportBundle,
    extra_compute: &[f64],
) -> Output {
    let mut files = Vec::new();
    if let Some(path) = &output.svg {
        let plot = svg::render(&bundle.fits, &bundle.points, extra_compute);
        files.push((path.clone(), plot.into_bytes()));
    }
    Output {
        primary,
        out: output.out.clone(),
        files,
        warnings: bundle.warnings.clone(),
    }
}

/// Oracle and closed form agree to within this relative amount when the
/// grid happens to contain the continuous optimum.
const GAP_ROUNDING: f64 = 1e-12;

fn allocate(a: &AllocateArgs, stdin: &mut dyn Read) -> Result<Output, CliError> {
    let mut bundle = load_bundle(&a.input, stdin)?;
    let plan = allocate_proportional(&bundle.fits, a.c_max)?;
    bundle.warnings.extend(plan.warnings.iter().cloned());

    if a.with_oracle {
        // the oracle searches the closed form's own support, where every
        // term is present and the closed form is the exact optimum
        let support: Vec<_> = bundle
            .fits
            .iter()
            .filter(|f| plan.assigned(&f.source_id) > 0.0)
            .cloned()
            .collect();
        if support.len() > ORACLE_MAX_SOURCES {
            bundle.warnings.push(format!(
                "oracle skipped: {} funded sources exceed its limit of {ORACLE_MAX_SOURCES}",
                support.len()
            ));
        } else {
            let oracle = allocate_grid_oracle(&support, a.c_max, a.resolution)?;
            let closed = plan.predicted_mixture_utility;
            let mut gap = oracle.predicted_mixture_utility - closed;
            if gap > 0.0 && gap <= GAP_ROUNDING * closed.abs().max(1.0) {
                gap = 0.0;
            }
            if gap > 0.0 {
                return Err(CliError::Internal(format!(
                    "grid oracle beat the closed-form plan by {gap:e}"
                )));
            }
            bundle.oracle = Some(OracleCheck {
                plan: oracle,
                resolution: a.resolution,
                gap,
            });
        }
    }
    let primary = report::allocation_tables(&bundle.fits, &plan, bundle.oracle.as_ref())?;
    bundle.plan = Some(plan);
    Ok(finish(primary, &a.output, &bundle, &[a.c_max]))
}

fn cost(a: &CostArgs) -> Result<Output, CliError> {
    let geom = AnnealingGeometry::new(a.batch_size, a.sequence_length, a.upsample_ratio, a.epochs)?;
    let trainee = ModelSpec::new(a.param_count)?;
    // |D| for the run; with --tokens the curated tokens fill the upsampled
    // share of every epoch
    let total_tokens = match (a.steps, a.tokens) {
        (Some(steps), _) => geom.total_tokens(steps),
        (None, Some(t)) => a.epochs * t / a.upsample_ratio,
        (None, None) => unreachable!("clap requires --steps or --tokens"),
    };

    let breakdown = if let Some(preset) = a.preset {
        let curated = a
            .tokens
            .unwrap_or_else(|| geom.upsampled_tokens(a.steps.unwrap_or(0)));
        let p = MathPreset::default();
        let curation = match preset {
            Preset::Tinygsm => p.tinygsm_cost_for_tokens(curated),
            Preset::TinygsmMind => p.tinygsm_mind_cost_for_tokens(curated),
        };
        CostBreakdown {
            basis: a.basis,
            training: training_flops(total_tokens, trainee),
            curation,
        }
    } else {
        let model = source_params(a)?.build()?;
        cost_breakdown(&model, &geom, total_tokens, trainee, a.basis)?
    };
    let row = vec![
        breakdown.basis.to_string(),
        num(breakdown.total()),
        num(breakdown.training),
        num(breakdown.curation),
    ];
    Ok(Output {
        primary: report::table(&report::COST_HEADER, [row])?,
        out: a.out.clone(),
        ..Output::default()
    })
}

/// Source flags to cost parameters, naming the missing flag when the set is
/// incoherent.
fn source_params(a: &CostArgs) -> Result<SourceCostParams, CliError> {
    let kind = match (a.zero_cost, a.kind) {
        (true, Some(k)) if k != KindArg::ZeroCost => {
            return Err(CliError::Usage("--zero-cost conflicts with --kind".into()))
        }
        (true, _) | (false, Some(KindArg::ZeroCost)) => SourceKind::ZeroCost,
        (false, Some(KindArg::Mbf)) => SourceKind::Mbf,
        (false, Some(KindArg::Synthetic)) => SourceKind::Synthetic,
        (false, Some(KindArg::Rephrase)) => SourceKind::RephraseComposite,
        (false, None) => {
            return Err(CliError::Usage(
                "one of --preset, --kind or --zero-cost is required".into(),
            ))
        }
    };
    let name = kind.as_str();
    let cost_flags = [
        ("--expansion-factor", a.expansion_factor.is_some()),
        ("--generator-params", a.generator_params.is_some()),
        (
            "--annotator-per-token-flops",
            a.annotator_per_token_flops.is_some(),
        ),
        (
            "--annotator-training-flops",
            a.annotator_training_flops.is_some(),
        ),
        ("--mbf-recall", a.mbf_recall.is_some()),
    ];
    match kind {
        SourceKind::ZeroCost => {
            if let Some((flag, _)) = cost_flags.iter().find(|(_, set)| *set) {
                return Err(CliError::Usage(format!(
                    "{flag} does not apply to zero-cost sources"
                )));
            }
        }
        SourceKind::Synthetic | SourceKind::RephraseComposite => {
            if a.generator_params.is_none() {
                return Err(CliError::Usage(format!(
                    "{name} sources require --generator-params"
                )));
            }
            if a.expansion_factor.is_none() {
                return Err(CliError::Usage(format!(
                    "{name} sources require --expansion-factor"
                )));
            }
        }
        SourceKind::Mbf => {
            if a.expansion_factor.unwrap_or(0.0) > 0.0 && a.generator_params.is_none() {
                return Err(CliError::Usage(
                    "--expansion-factor above 0 requires --generator-params".into(),
                ));
            }
        }
    }
    let mut p = SourceCostParams::new(kind);
    p.generator = a.generator_params.map(ModelSpec::new).transpose()?;
    p.expansion_factor = a.expansion_factor.unwrap_or(0.0);
    p.annotator_per_token_flops = a.annotator_per_token_flops.unwrap_or(0.0);
    p.annotator_training_flops = a.annotator_training_flops.unwrap_or(0.0);
    p.mbf_recall = a.mbf_recall.unwrap_or(1.0);
    Ok(p)
}

fn diversity(a: &DiversityArgs, stdin: &mut dyn Read) -> Result<Output, CliError> {
    let mut counter = NgramCounter::new(a.n_max)?;
    let read_err = |source| CliError::Read {
        path: a.corpus.clone(),
        source,
    };
    let reader: Box<dyn Read + '_> = if a.corpus == Path::new("-") {
        Box::new(stdin)
    } else {
        Box::new(File::open(&a.corpus).map_err(read_err)?)
    };
    match a.format {
        CorpusFormat::Text => feed_text(
            BufReader::with_capacity(1 << 20, reader),
            &mut counter,
            &mut Vocabulary::new(),
            a.per_document,
        )?,
        CorpusFormat::Binary => feed_binary(reader, &mut counter, a.per_document)?,
    }
    let report = counter.report();
    let mut warnings = Vec::new();
    let rows: Vec<Vec<String>> = report
        .per_n
        .iter()
        .map(|s| {
            if s.ratio_defaulted {
                warnings.push(format!("no {}-grams in corpus; ratio reported as 1.0", s.n));
            }
            vec![
                s.n.to_string(),
                s.distinct.to_string(),
                s.total.to_string(),
                num(s.ratio),
                num(s.entropy_bits),
            ]
        })
        .collect();
    Ok(Output {
        primary: report::table(&report::DIVERSITY_HEADER, rows)?,
        out: a.out.clone(),
        warnings,
        ..Output::default()
    })
}

fn simulate(a: &SimulateArgs) -> Result<Output, CliError> {
    let mut scenario = match a.scenario {
        ScenarioArg::RankFlip => scenario_rank_flip_with_basis(a.seed, a.basis),
        ScenarioArg::Random => {
            if a.sources == 0 {
                return Err(CliError::Usage("--sources must be at least 1".into()));
            }
            let mut s = scenario_random(a.seed, a.sources);
            s.basis = a.basis;
            s
        }
    };
    for s in &mut scenario.sources {
        s.noise_sigma = a.noise;
    }
    scenario.baseline_noise_sigma = a.noise;
    scenario.noise_schedule = match a.noise_schedule {
        ScheduleArg::Constant => NoiseSchedule::Constant,
        ScheduleArg::InverseSqrt => NoiseSchedule::InverseSqrtSteps,
    };
    let manifest = generate_manifest(&scenario)?;
    let mut files = Vec::new();
    if let Some(path) = &a.truth_out {
        let rows = scenario.sources.iter().map(|s| {
            vec![
                s.source_id.clone(),
                s.cost_model.kind().as_str().to_string(),
                num(s.true_intercept),
                num(s.true_slope),
                num(s.noise_sigma),
            ]
        });
        files.push((path.clone(), report::table(&report::TRUTH_HEADER, rows)?));
    }
    Ok(Output {
        primary: manifest.into_bytes(),
        out: a.out.clone(),
        files,
        warnings: Vec::new(),
    })
}
