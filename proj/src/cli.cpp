#include "avs/cli.hpp"

#include "avs/checkpoint.hpp"
#include "avs/data.hpp"
#include "avs/metrics.hpp"
#include "avs/random.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

namespace avs {

namespace {

namespace fs = std::filesystem;

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Flags {
  std::string config, features, captions, val_captions, vocab, embeddings, precomputed, qrels,
      checkpoint, out, queries, run_file, stopwords;
  std::size_t min_count = kDefaultMinCount;
  std::size_t topn = kDefaultTopN;
  std::size_t pairs = 32, video_dim = 64, w2v_dim = kW2vDim, bert_dim = kBertDim;
  double tolerance = 1e-4, fault_scale = 1.0;
};

// Train-config flags, applied after the config file so they win.
struct ConfigFlag {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr ConfigFlag kConfigFlags[] = {
    {"--seed", "seed", "Seed for every random draw"},
    {"--threads", "threads", "Worker threads for scoring"},
    {"--encoders", "encoders", "Comma list of bow,w2v,gru|bigru,bert"},
    {"--fusion", "fusion", "sea | concat | transformed | avg"},
    {"--loss", "loss", "combined | single"},
    {"--dc", "space_dim", "Common space dimension"},
    {"--alpha", "alpha", "Triplet margin"},
    {"--batch-size", "batch_size", "Mini-batch size"},
    {"--lr0", "lr0", "Initial learning rate"},
    {"--restarts", "restarts", "Independent training runs"},
    {"--max-epochs", "max_epochs", "Epoch cap per run"},
    {"--gru-hidden", "gru_hidden", "GRU hidden size"},
    {"--gru-input", "gru_input", "GRU input embedding size"},
    {"--val-metric", "val_metric", "map | recall_sum"},
};

class ConfigOptions {
 public:
  void attach(CLI::App& app) {
    for (const auto& f : kConfigFlags) {
      auto* opt = app.add_option(f.flag, values_[f.key], f.help);
      options_.emplace_back(f.key, opt);
    }
  }

  TrainConfig resolve(const std::string& config_path) const {
    TrainConfig config;
    if (!config_path.empty()) {
      for (const auto& [key, value] : load_config_entries(config_path)) {
        apply_config_value(config, key, value);
      }
    }
    for (const auto& [key, opt] : options_) {
      if (opt->count() > 0) apply_config_value(config, key, values_.at(key));
    }
    config.validate();
    return config;
  }

  bool given(const std::string& key) const {
    for (const auto& [k, opt] : options_) {
      if (k == key) return opt->count() > 0;
    }
    return false;
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, CLI::Option*>> options_;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

ResourceRefs refs_from(const Flags& f) {
  ResourceRefs refs;
  if (!f.vocab.empty()) {
    const fs::path dir(f.vocab);
    if (fs::exists(dir / kBowVocabFile)) refs.bow_vocab = (dir / kBowVocabFile).string();
    if (fs::exists(dir / kSeqVocabFile)) refs.seq_vocab = (dir / kSeqVocabFile).string();
  }
  refs.embeddings = f.embeddings;
  refs.precomputed = f.precomputed;
  return refs;
}

std::vector<Sentence> load_queries(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open queries " + path);
  return read_queries(in);
}

std::vector<MultiSpaceModel<float>> load_models(const Flags& f) {
  require(f.checkpoint, "--checkpoint");
  ResourceRefs overrides;
  overrides.precomputed = f.precomputed;
  if (!f.vocab.empty()) overrides = refs_from(f);
  std::vector<MultiSpaceModel<float>> models;
  for (const auto& path : split_list(f.checkpoint)) {
    models.push_back(load_checkpoint(path, overrides).model);
  }
  if (models.empty()) throw UsageError("--checkpoint names no file");
  return models;
}

int cmd_build_vocab(const Flags& f, std::ostream& out) {
  require(f.captions, "--captions");
  require(f.out, "--out");
  const auto captions = CaptionSet::load(f.captions);
  StopwordList stopwords = default_stopwords();
  if (!f.stopwords.empty()) {
    std::ifstream in(f.stopwords);
    if (!in) throw DataError("cannot open stopwords " + f.stopwords);
    stopwords = parse_stopwords(in);
  }
  const auto corpus = captions.corpus();
  const auto bow = Vocabulary::build(corpus, f.min_count, false, stopwords);
  const auto seq = Vocabulary::build(corpus, f.min_count, true, stopwords);
  fs::create_directories(f.out);
  bow.save((fs::path(f.out) / kBowVocabFile).string());
  seq.save((fs::path(f.out) / kSeqVocabFile).string());
  out << "bow_vocab=" << bow.size() << " seq_vocab=" << seq.size() << '\n';
  return 0;
}

int cmd_train(const Flags& f, const TrainConfig& config, std::ostream& out) {
  require(f.captions, "--captions");
  require(f.features, "--features");
  require(f.out, "--out");
  const auto refs = refs_from(f);
  const auto resources = load_resources(refs, config.encoders);
  const auto features = FeatureStore::load(f.features);
  const auto train_captions = CaptionSet::load(f.captions);
  const auto val_captions =
      f.val_captions.empty() ? train_captions : CaptionSet::load(f.val_captions);

  fs::create_directories(f.out);
  const fs::path dir(f.out);
  {
    auto cfg = open_out(dir / "config.txt");
    write_config(cfg, config);
  }
  const auto result = fit({&train_captions, &features}, {&val_captions, &features}, resources, config,
                          &out);
  save_checkpoint((dir / "model.ckpt").string(), result.model, refs);
  {
    auto log = open_out(dir / "train.log");
    write_log(log, result.log);
  }
  {
    auto div = open_out(dir / "diversity.tsv");
    write_diversity(div, result.log);
  }
  {
    auto batches = open_out(dir / "batch_losses.tsv");
    char buf[96];
    for (const auto& b : result.log.batches) {
      std::snprintf(buf, sizeof buf, "%zu\t%zu\t%zu\t%.9g\n", b.restart, b.epoch, b.batch,
                    static_cast<double>(b.loss));
      batches << buf;
    }
  }
  for (const auto& note : result.log.notes) out << "note: " << note << '\n';
  char buf[160];
  std::snprintf(buf, sizeof buf, "best restart=%zu epoch=%zu %s=%.6f\n", result.log.best_restart,
                result.log.best_epoch, std::string(val_metric_name(config.val_metric)).c_str(),
                result.log.best_metric);
  out << buf;
  return 0;
}

int cmd_eval(const Flags& f, const TrainConfig& config, std::ostream& out) {
  std::unique_ptr<JudgmentPool> pool;
  Qrels qrels;
  if (!f.qrels.empty()) {
    pool = std::make_unique<JudgmentPool>(JudgmentPool::load(f.qrels));
    qrels = pool->relevant_sets();
  }
  std::vector<RankedList> runs;
  if (!f.run_file.empty()) {
    runs = load_run(f.run_file);
    if (f.qrels.empty()) {
      require(f.captions, "--captions or --qrels");
      qrels = CaptionSet::load(f.captions).qrels();
    }
  } else {
    require(f.features, "--features");
    const auto models = load_models(f);
    const auto collection = FeatureStore::load(f.features);
    std::vector<Sentence> queries;
    if (!f.queries.empty()) {
      queries = load_queries(f.queries);
    } else {
      require(f.captions, "--captions or --queries");
      const auto captions = CaptionSet::load(f.captions);
      queries = captions.sentences();
      if (f.qrels.empty()) qrels = captions.qrels();
    }
    if (qrels.empty()) throw UsageError("--qrels or --captions must provide relevance");
    runs = rank_queries(models, collection, queries, 0, config.threads);
  }
  const auto summary = evaluate(runs, qrels, pool.get());
  char buf[256];
  std::snprintf(buf, sizeof buf, "R@1=%.2f R@5=%.2f R@10=%.2f MedR=%zu mAP=%.4f", summary.r1,
                summary.r5, summary.r10, summary.median_rank, summary.map);
  out << buf;
  if (summary.mean_infap) {
    std::snprintf(buf, sizeof buf, " infAP=%.4f", *summary.mean_infap);
    out << buf;
  } else {
    out << " infAP=n/a";
  }
  out << " queries=" << summary.queries.size() << " excluded=" << summary.excluded << '\n';
  if (!f.out.empty()) {
    auto report = open_out(f.out);
    write_report(report, summary);
  }
  return 0;
}

int cmd_rank(const Flags& f, const TrainConfig& config, std::ostream& out) {
  require(f.features, "--features");
  require(f.queries, "--queries");
  const auto models = load_models(f);
  const auto collection = FeatureStore::load(f.features);
  const auto queries = load_queries(f.queries);
  const auto runs = rank_queries(models, collection, queries, f.topn, config.threads);
  if (f.out.empty()) {
    write_run(out, runs);
  } else {
    auto file = open_out(f.out);
    write_run(file, runs);
  }
  return 0;
}

GradCheckReport check_on_data(const CaptionSet& captions, const FeatureStore& features,
                              const TextResources& resources, const ModelConfig& mc,
                              std::size_t batch_size, const GradCheckOptions& options) {
  captions.check_against(features);
  Rng init(mix_seed(options.seed, 1));
  const auto model = MultiSpaceModel<float>::create(mc, resources, init).cast<double>();
  const BatchSampler sampler = [&](std::size_t attempt) {
    const auto batches = make_batches(captions, batch_size, options.seed, attempt + 1);
    return resolve_batch<double>(batches.at(0), captions, features);
  };
  return gradient_check(model, sampler, options);
}

int cmd_gradcheck(const Flags& f, const TrainConfig& config, const ConfigOptions& flags,
                  std::ostream& out) {
  GradCheckOptions check;
  check.tolerance = f.tolerance;
  check.analytic_scale = f.fault_scale;
  check.alpha = config.alpha;
  check.loss = config.loss;
  check.seed = config.seed;
  GradCheckReport report;
  if (f.captions.empty()) {
    FixtureCheckOptions o;
    o.check = check;
    o.encoders = config.encoders;
    o.fusion = config.fusion;
    if (flags.given("space_dim")) o.space_dim = config.space_dim;
    if (flags.given("batch_size")) o.batch_size = config.batch_size;
    if (flags.given("gru_hidden")) o.gru_hidden = config.gru_hidden;
    report = fixture_gradient_check(o);
  } else {
    require(f.features, "--features");
    const auto captions = CaptionSet::load(f.captions);
    const auto features = FeatureStore::load(f.features);
    const auto resources = load_resources(refs_from(f), config.encoders);
    report = check_on_data(captions, features, resources, model_config(config, features.dim()),
                           config.batch_size, check);
  }
  write_gradcheck_report(out, report);
  if (!report.passed) throw NumericalError("gradient check failed");
  return 0;
}

int cmd_make_fixture(const Flags& f, const TrainConfig& config, std::ostream& out) {
  require(f.out, "--out");
  FixtureOptions o;
  o.pairs = f.pairs;
  o.video_dim = f.video_dim;
  o.w2v_dim = f.w2v_dim;
  o.bert_dim = f.bert_dim;
  o.seed = config.seed;
  write_fixture(make_fixture(o), f.out);
  out << "pairs=" << o.pairs << " video_dim=" << o.video_dim << " dir=" << f.out << '\n';
  return 0;
}

}  // namespace

GradCheckReport fixture_gradient_check(const FixtureCheckOptions& o) {
  FixtureOptions fo;
  fo.pairs = 16;
  fo.video_dim = o.video_dim;
  fo.w2v_dim = o.word_dim;
  fo.bert_dim = o.word_dim;
  fo.seed = o.check.seed;
  const auto fixture = make_fixture(fo);
  const auto corpus = fixture.captions.corpus();
  TextResources resources;
  resources.bow_vocab = std::make_shared<Vocabulary>(Vocabulary::build(corpus, 1, false));
  resources.seq_vocab = std::make_shared<Vocabulary>(Vocabulary::build(corpus, 1, true));
  resources.w2v = std::make_shared<EmbeddingTable>(fixture.w2v);
  resources.precomputed = std::make_shared<PrecomputedStore>(fixture.precomputed);
  ModelConfig mc;
  mc.fusion = o.fusion;
  mc.encoders = o.encoders;
  mc.video_dim = o.video_dim;
  mc.space_dim = o.space_dim;
  mc.gru_hidden = o.gru_hidden;
  mc.gru_input = o.word_dim;
  mc.transform_dim = o.space_dim;
  return check_on_data(fixture.captions, fixture.features, resources, mc, o.batch_size, o.check);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-to-video retrieval with multiple sentence encoders and common spaces", "avs"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  ConfigOptions config_flags;
  app.add_option("--config", f.config, "key=value training configuration file");

  auto* build_vocab = app.add_subcommand("build-vocab", "Build bag-of-words and sequential vocabularies");
  build_vocab->add_option("--captions", f.captions, "Caption TSV");
  build_vocab->add_option("--out", f.out, "Output directory");
  build_vocab->add_option("--min-count", f.min_count, "Minimum word frequency");
  build_vocab->add_option("--stopwords", f.stopwords, "Stopword list replacing the built-in one");

  auto* train = app.add_subcommand("train", "Train a model and write checkpoint and logs");
  auto* eval = app.add_subcommand("eval", "Score a run file or a checkpoint");
  auto* rank = app.add_subcommand("rank", "Rank a video collection for each query");
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and numerical gradients");
  auto* make_fix = app.add_subcommand("make-fixture", "Write the synthetic orthogonal dataset");

  config_flags.attach(app);
  for (auto* sub : {train, eval, rank, gradcheck}) {
    sub->add_option("--features", f.features, "Video feature container");
    sub->add_option("--captions", f.captions, "Caption TSV");
    sub->add_option("--vocab", f.vocab, "Vocabulary directory");
    sub->add_option("--embeddings", f.embeddings, "Word embedding text file");
    sub->add_option("--precomputed", f.precomputed, "Precomputed sentence vectors");
  }
  train->add_option("--val-captions", f.val_captions, "Validation captions (default: training)");
  train->add_option("--out", f.out, "Output directory");
  for (auto* sub : {eval, rank}) {
    sub->add_option("--checkpoint", f.checkpoint, "Checkpoint, or a comma list to average");
    sub->add_option("--queries", f.queries, "Queries, one per line or id<TAB>text");
    sub->add_option("--out", f.out, rank == sub ? "Run file (default: stdout)" : "Per-query report");
  }
  eval->add_option("--qrels", f.qrels, "Judgment pool");
  eval->add_option("--run", f.run_file, "Run file to score instead of a checkpoint");
  rank->add_option("--topn", f.topn, "Results per query");
  gradcheck->add_option("--tolerance", f.tolerance, "Maximum relative error");
  gradcheck->add_option("--fault-scale", f.fault_scale, "Scale applied to analytic gradients");
  make_fix->add_option("--out", f.out, "Output directory");
  make_fix->add_option("--pairs", f.pairs, "Caption-video pairs");
  make_fix->add_option("--video-dim", f.video_dim, "Video feature dimension");
  make_fix->add_option("--w2v-dim", f.w2v_dim, "Word vector dimension");
  make_fix->add_option("--bert-dim", f.bert_dim, "Sentence vector dimension");

  std::vector<std::string> argv(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv.begin(), argv.end());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    const TrainConfig config = config_flags.resolve(f.config);
    if (build_vocab->parsed()) return cmd_build_vocab(f, out);
    if (train->parsed()) return cmd_train(f, config, out);
    if (eval->parsed()) return cmd_eval(f, config, out);
    if (rank->parsed()) return cmd_rank(f, config, out);
    if (gradcheck->parsed()) return cmd_gradcheck(f, config, config_flags, out);
    if (make_fix->parsed()) return cmd_make_fixture(f, config, out);
    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace avs
