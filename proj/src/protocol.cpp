#include "sasv/protocol.hpp"

#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include "sasv/error.hpp"
#include "text_util.hpp"

namespace sasv {

TrialKey TrialKey::spoof(std::string attack_id) {
  if (attack_id.empty()) throw InputError("spoof key requires an attack id");
  if (detail::to_lower(attack_id) == kBonafide)
    throw InputError("spoof key cannot carry the bonafide source");
  return TrialKey(TrialKind::Spoof, std::move(attack_id));
}

std::string_view TrialKey::token() const {
  switch (kind_) {
    case TrialKind::Target:
      return "target";
    case TrialKind::NonTarget:
      return "nontarget";
    case TrialKind::Spoof:
      return "spoof";
  }
  return "";
}

Trial make_trial(std::string speaker_model, std::string test_utt,
                 std::string source, TrialKind kind) {
  const bool bonafide = detail::to_lower(source) == kBonafide;
  if (kind == TrialKind::Spoof) {
    if (bonafide) throw InputError("source/key mismatch: spoof trial with bonafide source");
    TrialKey key = TrialKey::spoof(source);
    return Trial{std::move(speaker_model), std::move(test_utt), std::move(source),
                 std::move(key)};
  }
  if (!bonafide)
    throw InputError("source/key mismatch: " +
                     std::string(kind == TrialKind::Target ? "target" : "nontarget") +
                     " trial with source '" + source + "'");
  return Trial{std::move(speaker_model), std::move(test_utt), std::string(kBonafide),
               kind == TrialKind::Target ? TrialKey::target() : TrialKey::nontarget()};
}

Trial trial_from_fields(std::string_view speaker_model, std::string_view test_utt,
                        std::string_view source, std::string_view key) {
  const std::string lower = detail::to_lower(key);
  TrialKind kind;
  if (lower == "target") {
    kind = TrialKind::Target;
  } else if (lower == "nontarget") {
    kind = TrialKind::NonTarget;
  } else if (lower == "spoof") {
    kind = TrialKind::Spoof;
  } else {
    throw InputError("unknown key '" + std::string(key) + "'");
  }
  return make_trial(std::string(speaker_model), std::string(test_utt), std::string(source), kind);
}

std::string_view subset_name(Subset which) {
  switch (which) {
    case Subset::SV:
      return "SV";
    case Subset::SPF:
      return "SPF";
    case Subset::SASV:
      return "SASV";
  }
  return "";
}

bool is_asvspoof_attack_id(std::string_view id) {
  if (id.size() < 2 || id[0] != 'A') return false;
  for (std::size_t i = 1; i < id.size(); ++i)
    if (id[i] < '0' || id[i] > '9') return false;
  return true;
}

TrialList parse_trials(std::istream& in, const std::string& source_name) {
  TrialList list;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line)) continue;
    const auto fields = detail::split_ws(line);
    if (fields.size() != 4)
      throw ParseError(source_name, lineno,
                       "expected 4 fields, found " + std::to_string(fields.size()));
    try {
      list.trials.push_back(trial_from_fields(fields[0], fields[1], fields[2], fields[3]));
    } catch (const InputError& e) {
      throw ParseError(source_name, lineno, e.what());
    }
    if (!seen.insert(format_trial(list.trials.back())).second) ++list.duplicate_lines;
  }
  return list;
}

TrialList parse_trial_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_trials(in, path.string());
}

EnrolmentMap parse_enrolments(std::istream& in, const std::string& source_name) {
  EnrolmentMap models;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line)) continue;
    const auto fields = detail::split_ws(line);
    if (fields.size() == 1)
      throw ParseError(source_name, lineno, "empty enrolment list for '" +
                                                std::string(fields[0]) + "'");
    if (fields.size() != 2)
      throw ParseError(source_name, lineno,
                       "expected 2 fields, found " + std::to_string(fields.size()));

    EnrolmentModel model{std::string(fields[0]), {}};
    std::set<std::string_view> utts;
    std::string_view list = fields[1];
    std::size_t start = 0;
    while (start <= list.size()) {
      std::size_t comma = list.find(',', start);
      if (comma == std::string_view::npos) comma = list.size();
      std::string_view utt = list.substr(start, comma - start);
      if (utt.empty())
        throw ParseError(source_name, lineno, "empty utterance id in enrolment list");
      if (!utts.insert(utt).second)
        throw ParseError(source_name, lineno,
                         "duplicate enrolment utterance '" + std::string(utt) + "'");
      model.enrol_utts.emplace_back(utt);
      start = comma + 1;
    }
    if (models.contains(model.speaker_model))
      throw ParseError(source_name, lineno,
                       "duplicate speaker model '" + model.speaker_model + "'");
    std::string id = model.speaker_model;
    models.emplace(std::move(id), std::move(model));
  }
  return models;
}

EnrolmentMap parse_enrolment_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_enrolments(in, path.string());
}

void check_enrolled(const ProtocolSet& protocol) {
  for (std::size_t i = 0; i < protocol.trials.size(); ++i) {
    const Trial& t = protocol.trials[i];
    if (!protocol.enrolments.contains(t.speaker_model))
      throw LookupError("trial " + std::to_string(i + 1) + ": speaker model '" +
                        t.speaker_model + "' has no enrolment");
  }
}

ProtocolSet load_protocol(const std::filesystem::path& trial_path,
                          const std::filesystem::path& enrolment_path) {
  TrialList list = parse_trial_file(trial_path);
  ProtocolSet protocol{std::move(list.trials), parse_enrolment_file(enrolment_path),
                       list.duplicate_lines};
  check_enrolled(protocol);
  return protocol;
}

bool in_subset(const Trial& trial, Subset which) {
  switch (which) {
    case Subset::SV:
      return trial.key.kind() != TrialKind::Spoof;
    case Subset::SPF:
      return trial.key.kind() != TrialKind::NonTarget;
    case Subset::SASV:
      return true;
  }
  return false;
}

std::vector<Trial> subset(const std::vector<Trial>& trials, Subset which) {
  std::vector<Trial> out;
  for (const Trial& t : trials)
    if (in_subset(t, which)) out.push_back(t);
  return out;
}

std::string format_trial(const Trial& trial) {
  std::string s;
  s.reserve(trial.speaker_model.size() + trial.test_utt.size() + trial.source.size() + 14);
  s += trial.speaker_model;
  s += ' ';
  s += trial.test_utt;
  s += ' ';
  s += trial.source;
  s += ' ';
  s += trial.key.token();
  return s;
}

void write_trials(std::ostream& out, const std::vector<Trial>& trials) {
  for (const Trial& t : trials) out << format_trial(t) << '\n';
}

void write_enrolments(std::ostream& out, const EnrolmentMap& enrolments) {
  for (const auto& [id, model] : enrolments) {
    out << id << ' ';
    for (std::size_t i = 0; i < model.enrol_utts.size(); ++i) {
      if (i) out << ',';
      out << model.enrol_utts[i];
    }
    out << '\n';
  }
}

void save_trial_file(const std::filesystem::path& path, const std::vector<Trial>& trials) {
  auto out = detail::open_output(path);
  write_trials(out, trials);
  detail::finish_output(out, path);
}

void save_enrolment_file(const std::filesystem::path& path, const EnrolmentMap& enrolments) {
  auto out = detail::open_output(path);
  write_enrolments(out, enrolments);
  detail::finish_output(out, path);
}

}  // namespace sasv
