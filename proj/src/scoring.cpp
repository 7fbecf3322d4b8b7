#include "sasv/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "sasv/error.hpp"
#include "text_util.hpp"

namespace sasv {

void ScoreSet::validate() const {
  if (trials.size() != scores.size())
    throw InputError("score set has " + std::to_string(trials.size()) + " trials but " +
                     std::to_string(scores.size()) + " scores");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (!std::isfinite(s)) throw InputError("trial " + std::to_string(i + 1) + ": non-finite score");
    if (kind == ScoreKind::ASV && (s < -1.0 || s > 1.0))
      throw InputError("trial " + std::to_string(i + 1) + ": ASV score outside [-1, 1]");
    if (kind == ScoreKind::CM && (s < 0.0 || s > 1.0))
      throw InputError("trial " + std::to_string(i + 1) + ": CM score outside [0, 1]");
  }
}

std::string_view score_kind_name(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::ASV:
      return "asv";
    case ScoreKind::CM:
      return "cm";
    case ScoreKind::Fused:
      return "fused";
  }
  return "";
}

double cosine_score(std::span<const double> enrol, std::span<const double> test) {
  if (enrol.size() != test.size())
    throw InputError("cosine_score: dimension mismatch (" + std::to_string(enrol.size()) +
                     " vs " + std::to_string(test.size()) + ")");
  double dot = 0.0, ee = 0.0, tt = 0.0;
  for (std::size_t k = 0; k < enrol.size(); ++k) {
    dot += enrol[k] * test[k];
    ee += enrol[k] * enrol[k];
    tt += test[k] * test[k];
  }
  if (ee == 0.0) throw InputError("cosine_score: enrolment embedding has zero norm");
  if (tt == 0.0) throw InputError("cosine_score: test embedding has zero norm");
  const double c = dot / (std::sqrt(ee) * std::sqrt(tt));
  return std::clamp(c, -1.0, 1.0);
}

double cm_score(double bonafide_logit, double spoof_logit) {
  if (!std::isfinite(bonafide_logit) || !std::isfinite(spoof_logit))
    throw InputError("cm_score: non-finite logit");
  const double m = std::max(bonafide_logit, spoof_logit);
  const double b = std::exp(bonafide_logit - m);
  const double s = std::exp(spoof_logit - m);
  return b / (b + s);
}

double cm_record_score(std::span<const float> record) {
  if (record.size() == 1) {
    const double s = record[0];
    if (!(s >= 0.0 && s <= 1.0)) throw InputError("CM score record outside [0, 1]");
    return s;
  }
  if (record.size() == 2) return cm_score(record[0], record[1]);
  throw InputError("bad CM record: dimension " + std::to_string(record.size()) +
                   " (expected 2 logits or 1 score)");
}

double score_sum(double asv, double cm, double cm_weight) {
  if (!(asv >= -1.0 && asv <= 1.0))
    throw InputError("score_sum: ASV score " + format_score(asv) + " outside [-1, 1]");
  if (!(cm >= 0.0 && cm <= 1.0))
    throw InputError("score_sum: CM score " + format_score(cm) + " outside [0, 1]");
  if (!(cm_weight >= 0.0) || !std::isfinite(cm_weight))
    throw InputError("score_sum: CM weight must be finite and non-negative");
  return asv + cm_weight * cm;
}

ScoreMode parse_score_mode(std::string_view name) {
  const std::string lower = detail::to_lower(name);
  if (lower == "asv") return ScoreMode::ASV;
  if (lower == "cm") return ScoreMode::CM;
  if (lower == "b1") return ScoreMode::B1;
  throw InputError("unknown score mode '" + std::string(name) + "' (expected asv|cm|b1)");
}

namespace {

ScoreKind kind_for(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::ASV:
      return ScoreKind::ASV;
    case ScoreMode::CM:
      return ScoreKind::CM;
    case ScoreMode::B1:
      return ScoreKind::Fused;
  }
  return ScoreKind::Fused;
}

void check_inputs(const ScoringInputs& inputs, ScoreMode mode) {
  if (mode != ScoreMode::CM && inputs.speaker == nullptr)
    throw InputError("speaker embedding store required for this scoring mode");
  if (mode != ScoreMode::ASV && inputs.cm == nullptr)
    throw InputError("CM store required for this scoring mode");
}

const EnrolmentModel& model_for(const ProtocolSet& protocol, const Trial& trial) {
  auto it = protocol.enrolments.find(trial.speaker_model);
  if (it == protocol.enrolments.end())
    throw LookupError("speaker model '" + trial.speaker_model + "' has no enrolment");
  return it->second;
}

// Everything except the enrolment mean, which the callers supply.
double score_with_mean(const Trial& trial, const Embedding* mean, const ScoringInputs& inputs,
                       ScoreMode mode, const ScoringOptions& options) {
  double asv = 0.0;
  if (mode != ScoreMode::CM) {
    auto row = inputs.speaker->at(trial.test_utt);
    Embedding test(row.begin(), row.end());
    try {
      asv = cosine_score(*mean, test);
    } catch (const InputError& e) {
      throw InputError(std::string(e.what()) + " (model '" + trial.speaker_model +
                       "', test '" + trial.test_utt + "')");
    }
    if (mode == ScoreMode::ASV) return asv;
  }
  const double cm = cm_record_score(inputs.cm->at(trial.test_utt));
  if (mode == ScoreMode::CM) return cm;
  return score_sum(asv, cm, options.cm_weight);
}

template <typename Fn>
void with_trial_context(std::size_t index, Fn&& fn) {
  const std::string prefix = "trial " + std::to_string(index + 1) + ": ";
  try {
    fn();
  } catch (const LookupError& e) {
    throw LookupError(prefix + e.what());
  } catch (const InputError& e) {
    throw InputError(prefix + e.what());
  }
}

}  // namespace

ScoreSet score_protocol(const ProtocolSet& protocol, const ScoringInputs& inputs, ScoreMode mode,
                        const ScoringOptions& options) {
  check_inputs(inputs, mode);
  const std::size_t n = protocol.trials.size();

  // Distinct models in first-use order, then their means in parallel.
  std::vector<const EnrolmentModel*> models;
  std::vector<std::size_t> model_of(n, 0);
  std::vector<std::exception_ptr> errors(n);
  if (mode != ScoreMode::CM) {
    std::unordered_map<std::string_view, std::size_t> slot;
    for (std::size_t i = 0; i < n; ++i) {
      const Trial& t = protocol.trials[i];
      auto [it, inserted] = slot.try_emplace(t.speaker_model, models.size());
      if (inserted) {
        auto e = protocol.enrolments.find(t.speaker_model);
        models.push_back(e == protocol.enrolments.end() ? nullptr : &e->second);
      }
      model_of[i] = it->second;
    }
  }
  std::vector<Embedding> means(models.size());
  std::vector<std::exception_ptr> mean_errors(models.size());
  const MeanOptions mean_options{options.length_normalize_enrol};
  const auto n_models = static_cast<std::ptrdiff_t>(models.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t m = 0; m < n_models; ++m) {
    try {
      if (models[m] == nullptr) throw LookupError("speaker model has no enrolment");
      means[m] = mean_enrolment(*inputs.speaker, *models[m], mean_options);
    } catch (...) {
      mean_errors[m] = std::current_exception();
    }
  }

  ScoreSet out{protocol.trials, std::vector<double>(n, 0.0), kind_for(mode)};
  const auto n_trials = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n_trials; ++i) {
    try {
      with_trial_context(i, [&] {
        const Trial& t = protocol.trials[i];
        const Embedding* mean = nullptr;
        if (mode != ScoreMode::CM) {
          if (mean_errors[model_of[i]]) {
            // Re-derive the message with this trial's model name.
            model_for(protocol, t);
            std::rethrow_exception(mean_errors[model_of[i]]);
          }
          mean = &means[model_of[i]];
        }
        out.scores[i] = score_with_mean(t, mean, inputs, mode, options);
      });
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace reference {

ScoreSet score_protocol(const ProtocolSet& protocol, const ScoringInputs& inputs, ScoreMode mode,
                        const ScoringOptions& options) {
  check_inputs(inputs, mode);
  ScoreSet out{protocol.trials, {}, kind_for(mode)};
  out.scores.reserve(protocol.trials.size());
  for (std::size_t i = 0; i < protocol.trials.size(); ++i) {
    with_trial_context(i, [&] {
      const Trial& t = protocol.trials[i];
      Embedding mean;
      if (mode != ScoreMode::CM)
        mean = mean_enrolment(*inputs.speaker, model_for(protocol, t),
                              MeanOptions{options.length_normalize_enrol});
      out.scores.push_back(score_with_mean(t, &mean, inputs, mode, options));
    });
  }
  return out;
}

}  // namespace reference

std::string format_score(double score) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, score, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

void write_scores(std::ostream& out, const ScoreSet& scores) {
  for (std::size_t i = 0; i < scores.size(); ++i)
    out << format_trial(scores.trials[i]) << ' ' << format_score(scores.scores[i]) << '\n';
}

ScoreSet read_scores(std::istream& in, const std::string& source_name, ScoreKind kind) {
  ScoreSet set;
  set.kind = kind;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line)) continue;
    const auto fields = detail::split_ws(line);
    if (fields.size() != 5)
      throw ParseError(source_name, lineno,
                       "expected 5 fields, found " + std::to_string(fields.size()));
    double score = 0.0;
    const char* first = fields[4].data();
    const char* last = first + fields[4].size();
    auto [ptr, ec] = std::from_chars(first, last, score);
    if (ec != std::errc() || ptr != last || !std::isfinite(score))
      throw ParseError(source_name, lineno, "bad score '" + std::string(fields[4]) + "'");
    try {
      set.trials.push_back(trial_from_fields(fields[0], fields[1], fields[2], fields[3]));
    } catch (const InputError& e) {
      throw ParseError(source_name, lineno, e.what());
    }
    set.scores.push_back(score);
  }
  try {
    set.validate();
  } catch (const InputError& e) {
    throw InputError(source_name + ": " + e.what());
  }
  return set;
}

void save_score_file(const std::filesystem::path& path, const ScoreSet& scores) {
  auto out = detail::open_output(path);
  write_scores(out, scores);
  detail::finish_output(out, path);
}

ScoreSet load_score_file(const std::filesystem::path& path, ScoreKind kind) {
  auto in = detail::open_input(path);
  return read_scores(in, path.string(), kind);
}

}  // namespace sasv
