#include "sasv/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "sasv/error.hpp"
#include "sasv/rng.hpp"

namespace sasv {

void SynthConfig::validate() const {
  if (n_speakers < 2) throw InputError("synth: need at least 2 speakers per partition");
  if (utts_per_speaker < 2) throw InputError("synth: need at least 2 utterances per speaker");
  if (enrol_per_speaker < 1 || enrol_per_speaker >= utts_per_speaker)
    throw InputError("synth: enrol_per_speaker must be in [1, utts_per_speaker)");
  if (n_attacks > 99) throw InputError("synth: at most 99 attacks");
  if (n_attacks > 0 && spoofs_per_attack_per_speaker < 1)
    throw InputError("synth: spoofs_per_attack_per_speaker must be >= 1");
  if (spk_dim < 2 || cm_dim < 2) throw InputError("synth: dimensions must be >= 2");
  for (double v : {speaker_spread, spoof_extra_spread, spoof_cm_separation, cm_embedding_noise})
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InputError("synth: spreads and separations must be finite and non-negative");
}

namespace {

std::vector<double> unit_vector(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (double& x : v) {
      x = rng.normal();
      sq += x * x;
    }
  } while (sq == 0.0);
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
  return v;
}

std::string numbered(const char* fmt, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, n);
  return buf;
}

struct Generator {
  const SynthConfig& cfg;
  Rng rng;
  std::vector<double> cm_direction;
  SynthCorpus corpus;

  explicit Generator(const SynthConfig& c)
      : cfg(c), rng(c.seed), corpus{EmbeddingStore(c.spk_dim), EmbeddingStore(c.cm_dim),
                                    EmbeddingStore(2), {}, {}, {}} {
    cm_direction = unit_vector(cfg.cm_dim, rng);
  }

  // Appends one utterance's speaker embedding, CM embedding and CM logits.
  void emit(const std::string& utt, const std::vector<double>& centroid, double noise_norm,
            bool bonafide) {
    std::vector<double> spk(centroid);
    const double sd = noise_norm / std::sqrt(static_cast<double>(cfg.spk_dim));
    for (double& x : spk) x += sd * rng.normal();

    const double mean = (bonafide ? 0.5 : -0.5) * cfg.spoof_cm_separation;
    const double latent = mean + rng.normal();
    std::vector<double> cm(cfg.cm_dim);
    for (std::size_t k = 0; k < cm.size(); ++k)
      cm[k] = latent * cm_direction[k] + cfg.cm_embedding_noise * rng.normal();

    corpus.spk.add(utt, std::span<const double>(spk));
    corpus.cm.add(utt, std::span<const double>(cm));
    const double logits[2] = {latent, 0.0};
    corpus.cm_logits.add(utt, std::span<const double>(logits));
  }

  double spoof_noise() const {
    return std::sqrt(cfg.speaker_spread * cfg.speaker_spread +
                     cfg.spoof_extra_spread * cfg.spoof_extra_spread);
  }

  struct SpeakerUtts {
    std::string speaker;
    std::vector<std::string> bonafide;
    std::vector<std::pair<std::string, std::string>> spoofs;  // (utt, attack)
  };

  std::vector<SpeakerUtts> partition(char prefix) {
    std::vector<SpeakerUtts> out;
    for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
      SpeakerUtts su;
      su.speaker = prefix + numbered("%04zu", s + 1);
      const std::vector<double> centroid = unit_vector(cfg.spk_dim, rng);
      for (std::size_t u = 0; u < cfg.utts_per_speaker; ++u) {
        std::string utt = su.speaker + numbered("_B%03zu", u + 1);
        emit(utt, centroid, cfg.speaker_spread, true);
        su.bonafide.push_back(std::move(utt));
      }
      for (std::size_t a = 0; a < cfg.n_attacks; ++a) {
        const std::string attack = numbered("A%02zu", a + 1);
        for (std::size_t k = 0; k < cfg.spoofs_per_attack_per_speaker; ++k) {
          std::string utt = su.speaker + "_" + attack + numbered("_%03zu", k + 1);
          emit(utt, centroid, spoof_noise(), false);
          su.spoofs.emplace_back(std::move(utt), attack);
        }
      }
      out.push_back(std::move(su));
    }
    return out;
  }

  ProtocolSet protocol(const std::vector<SpeakerUtts>& speakers) {
    ProtocolSet p;
    const std::size_t n_enrol = cfg.enrol_per_speaker;
    for (const SpeakerUtts& su : speakers) {
      EnrolmentModel m{su.speaker, {su.bonafide.begin(), su.bonafide.begin() + n_enrol}};
      p.enrolments.emplace(su.speaker, std::move(m));
    }
    for (std::size_t s = 0; s < speakers.size(); ++s) {
      const SpeakerUtts& su = speakers[s];
      for (std::size_t u = n_enrol; u < su.bonafide.size(); ++u)
        p.trials.push_back(make_trial(su.speaker, su.bonafide[u], std::string(kBonafide),
                                      TrialKind::Target));

      std::vector<const std::string*> pool;
      for (std::size_t o = 0; o < speakers.size(); ++o) {
        if (o == s) continue;
        for (std::size_t u = n_enrol; u < speakers[o].bonafide.size(); ++u)
          pool.push_back(&speakers[o].bonafide[u]);
      }
      std::size_t take = pool.size();
      if (cfg.nontargets_per_model > 0 && cfg.nontargets_per_model < pool.size()) {
        take = cfg.nontargets_per_model;
        // Partial Fisher-Yates: the first `take` entries become the sample.
        for (std::size_t i = 0; i < take; ++i) {
          const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
          std::swap(pool[i], pool[j]);
        }
      }
      for (std::size_t i = 0; i < take; ++i)
        p.trials.push_back(make_trial(su.speaker, *pool[i], std::string(kBonafide),
                                      TrialKind::NonTarget));

      for (const auto& [utt, attack] : su.spoofs)
        p.trials.push_back(make_trial(su.speaker, utt, attack, TrialKind::Spoof));
    }
    return p;
  }
};

}  // namespace

SynthCorpus generate(const SynthConfig& config) {
  config.validate();
  Generator g(config);

  for (const auto& su : g.partition('T')) {
    for (const auto& utt : su.bonafide)
      g.corpus.train.push_back({su.speaker, utt, std::string(kBonafide)});
    for (const auto& [utt, attack] : su.spoofs) g.corpus.train.push_back({su.speaker, utt, attack});
  }
  const auto dev = g.partition('D');
  g.corpus.dev = g.protocol(dev);
  const auto eval = g.partition('E');
  g.corpus.eval = g.protocol(eval);
  return std::move(g.corpus);
}

CorpusPaths corpus_paths(const std::filesystem::path& dir, StoreFormat format) {
  const std::string ext = format == StoreFormat::Binary ? ".bin" : ".txt";
  return {dir / ("spk_emb" + ext),    dir / ("cm_emb" + ext),     dir / ("cm_logits" + ext),
          dir / "train_table.txt",    dir / "dev_trials.txt",     dir / "dev_enrolment.txt",
          dir / "eval_trials.txt",    dir / "eval_enrolment.txt"};
}

CorpusPaths save_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus,
                        StoreFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create directory '" + dir.string() + "': " + ec.message());
  const CorpusPaths paths = corpus_paths(dir, format);
  save_store(paths.spk_emb, corpus.spk, format);
  save_store(paths.cm_emb, corpus.cm, format);
  save_store(paths.cm_logits, corpus.cm_logits, format);
  save_train_table(paths.train_table, corpus.train);
  save_trial_file(paths.dev_trials, corpus.dev.trials);
  save_enrolment_file(paths.dev_enrolment, corpus.dev.enrolments);
  save_trial_file(paths.eval_trials, corpus.eval.trials);
  save_enrolment_file(paths.eval_enrolment, corpus.eval.enrolments);
  return paths;
}

}  // namespace sasv
