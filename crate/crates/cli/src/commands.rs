use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use gae_core::data::{self, MatchFormat, Rejection, SyntheticSpec};
use gae_core::evaluation::{self, BenchmarkReport, HyperGrid, ModelKind};
use gae_core::model::ModelParams;
use gae_core::query::{self, DraftState, Recommendation};
use gae_core::training::{self, EpochStats};
use gae_core::{persist, AvatarRegistry, Dataset, Error, Roster, TrainConfig};
use gae_service::{ServiceConfig, ServiceError};

use crate::args::*;
use crate::output::{human_real, Cell, Format, Table};

/// Output closed early by the reader, e.g. piped into `head`; not an error.
pub const CLOSED: u8 = 0;
pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const NUMERICAL: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() {
            NUMERICAL
        } else if matches!(e, Error::InvalidConfig(_)) {
            USAGE
        } else {
            DATA
        };
        Failure::new(code, e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        let code = if e.kind() == io::ErrorKind::BrokenPipe { CLOSED } else { DATA };
        Failure::new(code, e.to_string())
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::InvalidPort => Failure::new(USAGE, e.to_string()),
            ServiceError::Model(inner) => Failure::from(inner).context("cannot load model"),
            ServiceError::Io(inner) => inner.into(),
        }
    }
}

impl Failure {
    fn context(self, what: impl Display) -> Self {
        Failure::new(self.code, format!("{what}: {}", self.message))
    }
}

trait Context<T> {
    fn context(self, what: impl Display) -> Result<T, Failure>;
}

impl<T, E: Into<Failure>> Context<T> for Result<T, E> {
    fn context(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| e.into().context(what))
    }
}

type Outcome = Result<(), Failure>;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Similar(a) => similar(a),
        Command::Pair(a) => pair(a),
        Command::Recommend(a) => recommend(a),
        Command::Synth(a) => synth(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Serve(a) => serve(a),
    }
}

fn print(table: &Table, format: Format) -> Outcome {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    table.write(format, &mut out)?;
    out.flush()?;
    Ok(())
}

fn report_rejections(path: &Path, rejected: &[Rejection]) {
    if rejected.is_empty() {
        return;
    }
    eprintln!("warning: {}: skipped {} invalid record(s)", path.display(), rejected.len());
    for r in rejected.iter().take(5) {
        eprintln!("  line {}: {}", r.line, r.reason);
    }
}

/// Loads a match log. With a registry, every avatar in the log must already
/// be known to it and indices follow the registry.
fn load_matches(path: &Path, known: Option<&AvatarRegistry>) -> Result<Dataset, Failure> {
    let at = path.display();
    let format = MatchFormat::from_path(path).context(&at)?;
    let loaded = match known {
        None => data::load_matches(path, format),
        Some(registry) => data::load_matches_with(path, format, registry.clone()),
    }
    .context(&at)?;
    report_rejections(path, &loaded.rejected);
    if let Some(registry) = known {
        let extra = &loaded.dataset.registry().names()[registry.len()..];
        if !extra.is_empty() {
            return Err(Failure::from(Error::UnknownAvatar(extra.to_vec())).context(&at));
        }
    }
    Ok(loaded.dataset)
}

fn load_model(path: &Path) -> Result<ModelParams, Failure> {
    persist::load_gae(path).context(path.display())
}

fn resolve(model: &ModelParams, names: &[String]) -> Result<Vec<usize>, Failure> {
    let names: Vec<&str> = names.iter().map(|n| n.trim()).filter(|n| !n.is_empty()).collect();
    Ok(model.registry().resolve(&names)?)
}

fn name(model: &ModelParams, id: usize) -> String {
    model.registry().name(id).unwrap_or("?").to_owned()
}

/// Like `Failure::from`, but names avatars instead of printing indices.
fn query_error(model: &ModelParams) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let message = match &e {
            Error::OverlappingRosters(id) => format!("avatar {} appears on both teams", name(model, *id)),
            Error::DuplicateAvatar(id) => format!("avatar {} is listed more than once", name(model, *id)),
            Error::SelfPair(id) => format!("pair query needs two distinct avatars, got {} twice", name(model, *id)),
            _ => return e.into(),
        };
        Failure::new(DATA, message)
    }
}

fn train(a: TrainArgs) -> Outcome {
    let config = TrainConfig {
        latent_dim: a.dim,
        learning_rate: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        l2_lambda: a.l2,
        seed: a.seed,
        ..TrainConfig::default()
    };
    config.validate()?;
    let data = load_matches(&a.data, None)?;
    let valid = match &a.valid {
        Some(path) => Some(load_matches(path, Some(data.registry()))?),
        None => None,
    };

    let mut out = io::stdout();
    let mut csv = csv::Writer::from_writer(io::stdout());
    let mut write_err: Option<io::Error> = None;
    let header = ["epoch", "loss", "penalized_loss", "validation_auc"];
    let mut emit = |cells: [String; 4]| -> io::Result<()> {
        match a.format {
            Format::Csv => {
                csv.write_record(&cells)?;
                csv.flush()
            }
            Format::Table => {
                writeln!(out, "{:>5}  {:>12}  {:>14}  {:>14}", cells[0], cells[1], cells[2], cells[3])?;
                out.flush()
            }
        }
    };
    emit(header.map(str::to_owned))?;
    let outcome = training::train_with_progress(&config, &data, valid.as_ref(), |s: &EpochStats| {
        let real = |x: f64| match a.format {
            Format::Csv => x.to_string(),
            Format::Table => human_real(x),
        };
        let cells = [
            s.epoch.to_string(),
            real(s.loss),
            real(s.penalized_loss),
            s.validation_auc.map(real).unwrap_or_else(|| match a.format {
                Format::Csv => String::new(),
                Format::Table => "-".into(),
            }),
        ];
        if write_err.is_none() {
            write_err = emit(cells).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    persist::save_gae(&outcome.model, &a.out).context(a.out.display())?;
    let kept = if valid.is_some() {
        format!(", kept epoch {}", outcome.best_epoch)
    } else {
        String::new()
    };
    eprintln!(
        "wrote {} ({} avatars, K={}{kept})",
        a.out.display(),
        outcome.model.n_avatars(),
        outcome.model.latent_dim()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let table = match &a.data {
        None => {
            let fail = query_error(&model);
            let red = Roster::new(resolve(&model, &a.red)?).map_err(&fail)?;
            let blue = Roster::new(resolve(&model, &a.blue)?).map_err(&fail)?;
            let p = model.win_probability(&red, &blue).map_err(&fail)?;
            let mut table = Table::new(&["p_red_win"]);
            table.push(vec![p.into()]);
            table
        }
        Some(path) => {
            let matches = load_matches(path, Some(model.registry()))?;
            let mut table = Table::new(&["match", "winner", "p_red_win"]);
            for (i, m) in matches.matches().iter().enumerate() {
                let p = model.win_probability(&m.red, &m.blue)?;
                let winner = if m.red_won { "red" } else { "blue" };
                table.push(vec![(i + 1).into(), winner.into(), p.into()]);
            }
            table
        }
    };
    print(&table, a.format)
}

fn eval(a: EvalArgs) -> Outcome {
    let grid_text = std::fs::read_to_string(&a.grid).context(a.grid.display())?;
    let grid: HyperGrid = toml::from_str(&grid_text)
        .map_err(|e| Failure::new(USAGE, format!("{}: {}", a.grid.display(), e.message())))?;
    let mut kinds: Vec<ModelKind> = a.model_kind.iter().map(|&k| k.into()).collect();
    kinds.sort();
    kinds.dedup();
    for &kind in &kinds {
        if grid.points(kind).is_empty() {
            return Err(Failure::new(
                USAGE,
                format!("{}: no [[{kind}]] entries for --model-kind {kind}", a.grid.display()),
            ));
        }
    }
    let data = load_matches(&a.data, None)?;
    let mut results = Vec::new();
    for &kind in &kinds {
        let folds = evaluation::cross_validate(&data, &grid.points(kind), a.folds, a.seed).context(kind)?;
        results.extend(folds);
    }
    let report = BenchmarkReport::new(results);
    let mut file = BufWriter::new(File::create(&a.report).context(a.report.display())?);
    report.write_csv(&mut file).context(a.report.display())?;
    file.flush().context(a.report.display())?;
    print!("{}", report.summary_table());
    io::stdout().flush()?;
    Ok(())
}

fn similar(a: SimilarArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let id = resolve(&model, std::slice::from_ref(&a.avatar))?[0];
    let mut table = Table::new(&["rank", "avatar", "similarity"]);
    for (rank, (other, sim)) in query::similar_avatars(&model, id, a.top_k).map_err(query_error(&model))?.into_iter().enumerate() {
        table.push(vec![(rank + 1).into(), name(&model, other).into(), sim.into()]);
    }
    print(&table, a.format)
}

fn pair(a: PairArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let ids = resolve(&model, &[a.a, a.b])?;
    let e = query::explain_pair(&model, ids[0], ids[1]).map_err(query_error(&model))?;
    let mut table = Table::new(&["synergy", "opposition", "similarity"]);
    table.push(vec![e.synergy.into(), e.opposition.into(), e.similarity.into()]);
    print(&table, a.format)
}

fn recommendation_row(model: &ModelParams, rank: Cell, r: &Recommendation) -> Vec<Cell> {
    vec![
        rank,
        name(model, r.avatar).into(),
        r.win_probability.into(),
        r.bias_delta.into(),
        r.synergy_delta.into(),
        r.opposition_delta.into(),
        Cell::Scores(
            r.similar_familiar
                .iter()
                .map(|&(id, sim)| (name(model, id), sim))
                .collect(),
        ),
    ]
}

fn recommend(a: RecommendArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let mut draft = DraftState::new(resolve(&model, &a.ally)?, resolve(&model, &a.enemy)?);
    if let Some(pool) = &a.pool {
        draft = draft.with_pool(resolve(&model, pool)?);
    }
    let mut table = Table::new(&[
        "rank",
        "avatar",
        "win_probability",
        "bias_delta",
        "synergy_delta",
        "opposition_delta",
        "similar_familiar",
    ]);
    let familiar_best = match &a.familiar {
        None => {
            for (i, r) in query::recommend_pick(&model, &draft, a.top_k).map_err(query_error(&model))?.iter().enumerate() {
                table.push(recommendation_row(&model, (i + 1).into(), r));
            }
            None
        }
        Some(familiar) => {
            draft = draft.with_familiar(resolve(&model, familiar)?);
            let out = query::recommend_with_familiarity(&model, &draft, a.top_k, a.sim_k).map_err(query_error(&model))?;
            for (i, r) in out.picks.iter().enumerate() {
                table.push(recommendation_row(&model, (i + 1).into(), r));
            }
            Some(out.familiar_best)
        }
    };
    match (a.format, familiar_best) {
        (_, None) => print(&table, a.format),
        (Format::Csv, Some(best)) => {
            match best {
                Some(r) => table.push(recommendation_row(&model, "familiar_best".into(), &r)),
                None => table.push(vec![
                    "familiar_best".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                    "".into(),
                    Cell::Scores(Vec::new()),
                ]),
            }
            print(&table, a.format)
        }
        (Format::Table, Some(best)) => {
            print(&table, a.format)?;
            match best {
                Some(r) => println!(
                    "\nbest familiar pick: {} (win probability {})",
                    name(&model, r.avatar),
                    human_real(r.win_probability)
                ),
                None => println!("\nbest familiar pick: none available"),
            }
            Ok(())
        }
    }
}

fn synth(a: SynthArgs) -> Outcome {
    let spec = SyntheticSpec {
        n_avatars: a.avatars,
        latent_dim: a.dim,
        ..SyntheticSpec::calibrated(a.matches, a.seed)
    };
    // validate the extension before generating anything
    MatchFormat::from_path(&a.out).context(a.out.display())?;
    let (data, truth) = data::generate_synthetic(&spec)?;
    data.save(&a.out).context(a.out.display())?;
    if let Some(path) = &a.truth {
        persist::save_gae(&truth, path).context(path.display())?;
    }
    let red_wins = data.matches().iter().filter(|m| m.red_won).count();
    let mut table = Table::new(&["matches", "avatars", "dim", "red_win_rate", "bayes_auc"]);
    table.push(vec![
        data.len().into(),
        a.avatars.into(),
        a.dim.into(),
        (red_wins as f64 / data.len().max(1) as f64).into(),
        data::bayes_auc(&truth, &data)?.into(),
    ]);
    print(&table, a.format)
}

fn gradcheck(a: GradcheckArgs) -> Outcome {
    if !(a.step > 0.0 && a.step.is_finite()) {
        return Err(Failure::new(USAGE, "--step must be positive"));
    }
    if !(a.l2 >= 0.0 && a.l2.is_finite()) {
        return Err(Failure::new(USAGE, "--l2 must be >= 0"));
    }
    let (model, batch) = training::gradcheck_fixture(a.avatars, a.dim, a.batch, a.seed)?;
    let report = training::finite_difference_check(&model, &batch, a.l2, a.step, a.tolerance)?;
    let mut table = Table::new(&["block", "max_relative_error", "max_absolute_error"]);
    for b in &report.blocks {
        table.push(vec![b.block.into(), b.max_relative_error.into(), b.max_absolute_error.into()]);
    }
    let worst_abs = report
        .blocks
        .iter()
        .map(|b| b.max_absolute_error)
        .fold(0.0, f64::max);
    table.push(vec!["max".into(), report.max_relative_error().into(), worst_abs.into()]);
    print(&table, a.format)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::new(
            NUMERICAL,
            format!(
                "max relative error {:e} exceeds tolerance {:e}",
                report.max_relative_error(),
                a.tolerance
            ),
        ))
    }
}

fn serve(a: ServeArgs) -> Outcome {
    let config = ServiceConfig {
        bind: a.bind,
        port: a.port,
        request_log: a.request_log,
        ..ServiceConfig::new(a.model)
    };
    let level = if a.request_log {
        tracing_subscriber::filter::LevelFilter::DEBUG
    } else {
        tracing_subscriber::filter::LevelFilter::INFO
    };
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_max_level(level)
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(gae_service::run(&config))?;
    Ok(())
}
