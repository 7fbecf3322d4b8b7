#include "cli/commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "cli/manifest.hpp"
#include "sasv/cascade.hpp"
#include "sasv/error.hpp"
#include "sasv/fusion_mlp.hpp"
#include "sasv/metrics.hpp"
#include "sasv/scoring.hpp"
#include "sasv/synth.hpp"

namespace fs = std::filesystem;

namespace sasv::cli {

namespace {

struct Context {
  int argc;
  char** argv;
  std::ostream& out;
};

fs::path prepare_out_dir(const std::string& dir) {
  if (dir.empty()) throw InputError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

template <typename Fn>
void write_text(const fs::path& path, Fn&& fn) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InputError("cannot open '" + path.string() + "' for writing");
  fn(f);
  f.flush();
  if (!f) throw InputError("write failed for '" + path.string() + "'");
}

std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size() || v == 0) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw InputError("bad layer width '" + item + "' in --hidden");
    }
  }
  if (out.empty()) throw InputError("--hidden needs at least one width");
  return out;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string mode = "b1";
  std::string protocol, enrolment, spk_emb, cm_emb, out;
  std::string format = "text";
  double cm_weight = 1.0;
  bool normalize_enrol = false;
};

void cmd_score(const ScoreArgs& a, Context& ctx) {
  RunManifest manifest("score", ctx.argc, ctx.argv);
  const ScoreMode mode = parse_score_mode(a.mode);
  const StoreFormat format = parse_store_format(a.format);
  if (a.protocol.empty() || (mode != ScoreMode::CM && a.enrolment.empty()))
    throw InputError("--protocol and --enrolment are required");

  ProtocolSet protocol;
  if (mode == ScoreMode::CM) {
    protocol.trials = parse_trial_file(a.protocol).trials;
    if (!a.enrolment.empty()) protocol.enrolments = parse_enrolment_file(a.enrolment);
  } else {
    protocol = load_protocol(a.protocol, a.enrolment);
  }
  manifest.input("protocol", a.protocol);
  if (!a.enrolment.empty()) manifest.input("enrolment", a.enrolment);

  EmbeddingStore spk, cm;
  ScoringInputs inputs;
  if (mode != ScoreMode::CM) {
    if (a.spk_emb.empty()) throw InputError("--spk-emb is required for mode " + a.mode);
    spk = load_store(a.spk_emb, format);
    manifest.input("spk_emb", a.spk_emb);
    inputs.speaker = &spk;
  }
  if (mode != ScoreMode::ASV) {
    if (a.cm_emb.empty()) throw InputError("--cm-emb is required for mode " + a.mode);
    cm = load_store(a.cm_emb, format);
    manifest.input("cm_emb", a.cm_emb);
    inputs.cm = &cm;
  }

  const ScoreSet scores =
      score_protocol(protocol, inputs, mode, ScoringOptions{a.cm_weight, a.normalize_enrol});
  const fs::path dir = prepare_out_dir(a.out);
  save_score_file(dir / "scores.txt", scores);
  manifest.config("mode", a.mode);
  manifest.config("format", a.format);
  manifest.config("cm_weight", format_score(a.cm_weight));
  manifest.config("normalize_enrol", a.normalize_enrol ? "true" : "false");
  manifest.output(dir / "scores.txt");
  manifest.write(dir);
  if (protocol.duplicate_lines)
    ctx.out << "warning: " << protocol.duplicate_lines << " duplicate trial line(s) kept\n";
  ctx.out << "scored " << scores.size() << " trials -> " << (dir / "scores.txt").string() << '\n';
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string train_table, spk_emb, cm_emb, out;
  std::string format = "text";
  std::uint64_t seed = 0;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr_max = 0.1;
  double lr_min = 0.001;
  std::uint64_t period = 0;
  std::uint64_t restart_mult = 1;
  double leaky_slope = kDefaultLeakySlope;
  std::string hidden = "256,128,64";
};

void cmd_train_fusion(const TrainArgs& a, Context& ctx) {
  RunManifest manifest("train-fusion", ctx.argc, ctx.argv);
  const StoreFormat format = parse_store_format(a.format);
  const TrainTable table = load_train_table(a.train_table);
  const EmbeddingStore spk = load_store(a.spk_emb, format);
  const EmbeddingStore cm = load_store(a.cm_emb, format);
  manifest.input("train_table", a.train_table);
  manifest.input("spk_emb", a.spk_emb);
  manifest.input("cm_emb", a.cm_emb);

  TrainConfig config;
  config.batch_size = a.batch_size;
  config.epochs = a.epochs;
  config.seed = a.seed;
  config.schedule = ScheduleConfig{a.lr_max, a.lr_min, a.period, a.restart_mult};
  config.hidden = parse_widths(a.hidden);
  config.leaky_slope = a.leaky_slope;

  // One generator for the whole run: pair sampling, then initialisation and shuffles.
  Rng rng(a.seed);
  const auto pairs = build_train_pairs(table, rng);
  const TrainResult result = train(spk, cm, pairs, config, rng);

  const MlpShape shape{spk.dim(), cm.dim(), config.hidden};
  const MlpModel model{result.params, describe_training(config, result.schedule, shape)};
  const fs::path dir = prepare_out_dir(a.out);
  save_model(dir / "model.bin", model);
  write_text(dir / "loss.csv", [&](std::ostream& f) { write_loss_trace(f, result.trace); });
  write_text(dir / "train_summary.txt", [&](std::ostream& f) {
    f << "pairs=" << pairs.size() << '\n'
      << "steps=" << result.trace.size() << '\n'
      << "final_loss=" << (result.trace.empty() ? std::string("NA") : format_score(result.trace.back().loss)) << '\n'
      << "train_accuracy=" << format_score(result.train_accuracy) << '\n';
  });

  manifest.seed(a.seed);
  for (const auto& [k, v] : model.metadata) manifest.config(k, v);
  manifest.output(dir / "model.bin");
  manifest.output(dir / "loss.csv");
  manifest.output(dir / "train_summary.txt");
  manifest.write(dir);
  ctx.out << "trained on " << pairs.size() << " pairs, " << result.trace.size() << " steps\n"
          << "train_accuracy=" << format_percent(result.train_accuracy) << "%\n";
}

// ---------------------------------------------------------------------------

struct ScoreFusionArgs {
  std::string model, protocol, enrolment, spk_emb, cm_emb, out;
  std::string format = "text";
};

void cmd_score_fusion(const ScoreFusionArgs& a, Context& ctx) {
  RunManifest manifest("score-fusion", ctx.argc, ctx.argv);
  const StoreFormat format = parse_store_format(a.format);
  const MlpModel model = load_model(a.model);
  const ProtocolSet protocol = load_protocol(a.protocol, a.enrolment);
  const EmbeddingStore spk = load_store(a.spk_emb, format);
  const EmbeddingStore cm = load_store(a.cm_emb, format);
  for (const auto& [role, path] : {std::pair<const char*, const std::string&>{"model", a.model},
                                   {"protocol", a.protocol},
                                   {"enrolment", a.enrolment},
                                   {"spk_emb", a.spk_emb},
                                   {"cm_emb", a.cm_emb}})
    manifest.input(role, path);

  const ScoreSet scores = score_b2(model.params, protocol, spk, cm, model.leaky_slope());
  const fs::path dir = prepare_out_dir(a.out);
  save_score_file(dir / "scores.txt", scores);
  manifest.config("format", a.format);
  manifest.output(dir / "scores.txt");
  manifest.write(dir);
  ctx.out << "scored " << scores.size() << " trials -> " << (dir / "scores.txt").string() << '\n';
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string scores, out;
  std::string name = "system";
};

void cmd_eval(const EvalArgs& a, Context& ctx, bool breakdown) {
  RunManifest manifest(breakdown ? "breakdown" : "eval", ctx.argc, ctx.argv);
  const ScoreSet scores = load_score_file(a.scores);
  manifest.input("scores", a.scores);
  const EvalReport report = evaluate(scores);
  const fs::path dir = prepare_out_dir(a.out);
  const fs::path file = dir / (breakdown ? "breakdown.txt" : "report.txt");
  auto emit = [&](std::ostream& o) {
    if (breakdown)
      write_breakdown(o, report, a.name);
    else
      write_report(o, report, a.name);
  };
  write_text(file, emit);
  manifest.config("name", a.name);
  manifest.output(file);
  manifest.write(dir);
  emit(ctx.out);
}

// ---------------------------------------------------------------------------

struct CascadeArgs {
  std::string dev_cm, dev_asv, eval_cm, eval_asv, out;
  std::optional<double> tau_cm, tau_asv;
};

void cmd_cascade(const CascadeArgs& a, Context& ctx) {
  RunManifest manifest("cascade", ctx.argc, ctx.argv);
  Thresholds th;
  if (a.tau_cm || a.tau_asv) {
    if (!a.tau_cm || !a.tau_asv) throw InputError("--tau-cm and --tau-asv must be given together");
    th = manual_thresholds(*a.tau_cm, *a.tau_asv);
  } else {
    if (a.dev_cm.empty() || a.dev_asv.empty())
      throw InputError("--dev-cm and --dev-asv are required unless thresholds are given");
    th = pick_thresholds(load_score_file(a.dev_cm, ScoreKind::CM),
                         load_score_file(a.dev_asv, ScoreKind::ASV));
    manifest.input("dev_cm", a.dev_cm);
    manifest.input("dev_asv", a.dev_asv);
  }
  const ScoreSet eval_cm = load_score_file(a.eval_cm, ScoreKind::CM);
  const ScoreSet eval_asv = load_score_file(a.eval_asv, ScoreKind::ASV);
  manifest.input("eval_cm", a.eval_cm);
  manifest.input("eval_asv", a.eval_asv);

  const HterReport report = cascade_report(eval_cm, eval_asv, th);
  const fs::path dir = prepare_out_dir(a.out);
  write_text(dir / "hter_report.txt", [&](std::ostream& o) { write_hter_report(o, report); });
  manifest.config("tau_cm", format_score(th.tau_cm));
  manifest.config("tau_asv", format_score(th.tau_asv));
  manifest.output(dir / "hter_report.txt");
  manifest.write(dir);
  write_hter_report(ctx.out, report);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  SynthConfig config;
  std::string out;
  std::string format = "text";
};

void cmd_synth(const SynthArgs& a, Context& ctx) {
  RunManifest manifest("synth", ctx.argc, ctx.argv);
  const StoreFormat format = parse_store_format(a.format);
  const SynthCorpus corpus = generate(a.config);
  const fs::path dir = prepare_out_dir(a.out);
  const CorpusPaths paths = save_corpus(dir, corpus, format);
  const SynthConfig& c = a.config;
  manifest.seed(c.seed);
  manifest.config("format", a.format);
  manifest.config("n_speakers", std::to_string(c.n_speakers));
  manifest.config("utts_per_speaker", std::to_string(c.utts_per_speaker));
  manifest.config("enrol_per_speaker", std::to_string(c.enrol_per_speaker));
  manifest.config("n_attacks", std::to_string(c.n_attacks));
  manifest.config("spoofs_per_attack_per_speaker", std::to_string(c.spoofs_per_attack_per_speaker));
  manifest.config("nontargets_per_model", std::to_string(c.nontargets_per_model));
  manifest.config("spk_dim", std::to_string(c.spk_dim));
  manifest.config("cm_dim", std::to_string(c.cm_dim));
  manifest.config("speaker_spread", format_score(c.speaker_spread));
  manifest.config("spoof_extra_spread", format_score(c.spoof_extra_spread));
  manifest.config("spoof_cm_separation", format_score(c.spoof_cm_separation));
  manifest.config("cm_embedding_noise", format_score(c.cm_embedding_noise));
  for (const fs::path& p : {paths.spk_emb, paths.cm_emb, paths.cm_logits, paths.train_table,
                            paths.dev_trials, paths.dev_enrolment, paths.eval_trials,
                            paths.eval_enrolment})
    manifest.output(p);
  manifest.write(dir);
  ctx.out << "wrote corpus to " << dir.string() << ": " << corpus.spk.size() << " utterances, "
          << corpus.dev.trials.size() << " dev trials, " << corpus.eval.trials.size()
          << " eval trials\n";
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spoofing-aware speaker verification back-end toolkit", "sasv"};
  app.require_subcommand(1);
  std::function<void(Context&)> action;

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "Score a protocol with ASV, CM or B1 score-sum fusion");
  sc->add_option("--mode", score.mode, "asv | cm | b1")->capture_default_str();
  sc->add_option("--protocol", score.protocol, "Trial file")->required();
  sc->add_option("--enrolment", score.enrolment, "Enrolment file");
  sc->add_option("--spk-emb", score.spk_emb, "Speaker embedding store");
  sc->add_option("--cm-emb", score.cm_emb, "CM store: 2-d logits or 1-d scores");
  sc->add_option("--out", score.out, "Output directory")->required();
  sc->add_option("--format", score.format, "Store format: text | binary")->capture_default_str();
  sc->add_option("--cm-weight", score.cm_weight, "Weight on the CM score in b1 mode")
      ->capture_default_str();
  sc->add_flag("--normalize-enrol", score.normalize_enrol,
               "Length-normalise enrolment embeddings before averaging");
  sc->callback([&] { action = [&](Context& c) { cmd_score(score, c); }; });

  TrainArgs tr;
  auto* tc = app.add_subcommand("train-fusion", "Train the DNN fusion back-end");
  tc->add_option("--train-table", tr.train_table, "Training table: speaker utt source")->required();
  tc->add_option("--spk-emb", tr.spk_emb, "Speaker embedding store")->required();
  tc->add_option("--cm-emb", tr.cm_emb, "CM embedding store")->required();
  tc->add_option("--out", tr.out, "Output directory")->required();
  tc->add_option("--format", tr.format, "Store format: text | binary")->capture_default_str();
  tc->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
  tc->add_option("--epochs", tr.epochs)->capture_default_str();
  tc->add_option("--batch-size", tr.batch_size)->capture_default_str();
  tc->add_option("--lr-max", tr.lr_max)->capture_default_str();
  tc->add_option("--lr-min", tr.lr_min)->capture_default_str();
  tc->add_option("--period", tr.period, "Steps in the first cycle; 0 = one epoch")
      ->capture_default_str();
  tc->add_option("--restart-mult", tr.restart_mult)->capture_default_str();
  tc->add_option("--leaky-slope", tr.leaky_slope)->capture_default_str();
  tc->add_option("--hidden", tr.hidden, "Hidden widths, comma separated")->capture_default_str();
  tc->callback([&] { action = [&](Context& c) { cmd_train_fusion(tr, c); }; });

  ScoreFusionArgs sf;
  auto* sfc = app.add_subcommand("score-fusion", "Score a protocol with a trained fusion model");
  sfc->add_option("--model", sf.model)->required();
  sfc->add_option("--protocol", sf.protocol)->required();
  sfc->add_option("--enrolment", sf.enrolment)->required();
  sfc->add_option("--spk-emb", sf.spk_emb)->required();
  sfc->add_option("--cm-emb", sf.cm_emb, "CM embedding store")->required();
  sfc->add_option("--out", sf.out, "Output directory")->required();
  sfc->add_option("--format", sf.format)->capture_default_str();
  sfc->callback([&] { action = [&](Context& c) { cmd_score_fusion(sf, c); }; });

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "SV-, SPF- and SASV-EER report for a score file");
  evc->add_option("--scores", ev.scores)->required();
  evc->add_option("--out", ev.out, "Output directory")->required();
  evc->add_option("--name", ev.name, "System label in the table")->capture_default_str();
  evc->callback([&] { action = [&](Context& c) { cmd_eval(ev, c, false); }; });

  EvalArgs bd;
  auto* bdc = app.add_subcommand("breakdown", "Per-attack SPF-EER table");
  bdc->add_option("--scores", bd.scores)->required();
  bdc->add_option("--out", bd.out, "Output directory")->required();
  bdc->add_option("--name", bd.name)->capture_default_str();
  bdc->callback([&] { action = [&](Context& c) { cmd_eval(bd, c, true); }; });

  CascadeArgs ca;
  auto* cac = app.add_subcommand("cascade", "Cascaded CM -> ASV decisions and HTERs");
  cac->add_option("--dev-cm", ca.dev_cm, "Development CM score file");
  cac->add_option("--dev-asv", ca.dev_asv, "Development ASV score file");
  cac->add_option("--eval-cm", ca.eval_cm)->required();
  cac->add_option("--eval-asv", ca.eval_asv)->required();
  cac->add_option("--tau-cm", ca.tau_cm, "Manual CM threshold");
  cac->add_option("--tau-asv", ca.tau_asv, "Manual ASV threshold");
  cac->add_option("--out", ca.out, "Output directory")->required();
  cac->callback([&] { action = [&](Context& c) { cmd_cascade(ca, c); }; });

  SynthArgs sy;
  auto* syc = app.add_subcommand("synth", "Generate a synthetic corpus");
  SynthConfig& cfg = sy.config;
  syc->add_option("--out", sy.out, "Output directory")->required();
  syc->add_option("--format", sy.format)->capture_default_str();
  syc->add_option("--seed", cfg.seed)->capture_default_str();
  syc->add_option("--speakers", cfg.n_speakers, "Speakers per partition")->capture_default_str();
  syc->add_option("--utts", cfg.utts_per_speaker)->capture_default_str();
  syc->add_option("--enrol", cfg.enrol_per_speaker)->capture_default_str();
  syc->add_option("--attacks", cfg.n_attacks)->capture_default_str();
  syc->add_option("--spoofs", cfg.spoofs_per_attack_per_speaker)->capture_default_str();
  syc->add_option("--nontargets", cfg.nontargets_per_model, "Per model; 0 = all")
      ->capture_default_str();
  syc->add_option("--spk-dim", cfg.spk_dim)->capture_default_str();
  syc->add_option("--cm-dim", cfg.cm_dim)->capture_default_str();
  syc->add_option("--speaker-spread", cfg.speaker_spread)->capture_default_str();
  syc->add_option("--spoof-extra-spread", cfg.spoof_extra_spread)->capture_default_str();
  syc->add_option("--cm-separation", cfg.spoof_cm_separation)->capture_default_str();
  syc->add_option("--cm-noise", cfg.cm_embedding_noise)->capture_default_str();
  syc->callback([&] { action = [&](Context& c) { cmd_synth(sy, c); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  Context ctx{argc, argv, out};
  try {
    action(ctx);
  } catch (const NumericError& e) {
    err << "sasv: numerical failure: " << e.what() << '\n';
    return kExitNumericError;
  } catch (const std::exception& e) {
    err << "sasv: error: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitOk;
}

}  // namespace sasv::cli
