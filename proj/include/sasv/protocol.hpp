#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sasv {

enum class TrialKind { Target, NonTarget, Spoof };

inline constexpr std::string_view kBonafide = "bonafide";

/// Ground-truth label of a trial. Spoof keys carry the attack id.
class TrialKey {
 public:
  static TrialKey target() { return TrialKey(TrialKind::Target, {}); }
  static TrialKey nontarget() { return TrialKey(TrialKind::NonTarget, {}); }
  static TrialKey spoof(std::string attack_id);

  TrialKind kind() const { return kind_; }
  bool is_spoof() const { return kind_ == TrialKind::Spoof; }
  // Empty unless kind() == Spoof.
  const std::string& attack_id() const { return attack_id_; }

  /// Canonical lowercase token: target, nontarget or spoof.
  std::string_view token() const;

  friend bool operator==(const TrialKey&, const TrialKey&) = default;

 private:
  TrialKey(TrialKind kind, std::string attack_id)
      : kind_(kind), attack_id_(std::move(attack_id)) {}

  TrialKind kind_;
  std::string attack_id_;
};

struct Trial {
  std::string speaker_model;
  std::string test_utt;
  std::string source;  // "bonafide" or an attack id
  TrialKey key = TrialKey::target();

  friend bool operator==(const Trial&, const Trial&) = default;
};

/// Builds a trial after checking that source and key agree.
Trial make_trial(std::string speaker_model, std::string test_utt,
                 std::string source, TrialKind kind);

/// Builds a trial from the four fields of a trial line. The key token is
/// matched case-insensitively.
Trial trial_from_fields(std::string_view speaker_model, std::string_view test_utt,
                        std::string_view source, std::string_view key);

struct EnrolmentModel {
  std::string speaker_model;
  std::vector<std::string> enrol_utts;

  friend bool operator==(const EnrolmentModel&, const EnrolmentModel&) = default;
};

using EnrolmentMap = std::map<std::string, EnrolmentModel>;

struct TrialList {
  std::vector<Trial> trials;
  // Lines that repeat an earlier line exactly. They are kept.
  std::size_t duplicate_lines = 0;
};

struct ProtocolSet {
  std::vector<Trial> trials;
  EnrolmentMap enrolments;
  std::size_t duplicate_lines = 0;

  friend bool operator==(const ProtocolSet&, const ProtocolSet&) = default;
};

enum class Subset { SV, SPF, SASV };

std::string_view subset_name(Subset which);

/// True for ids of the form A<digits>, as used by ASVspoof attack labels.
bool is_asvspoof_attack_id(std::string_view id);

TrialList parse_trials(std::istream& in, const std::string& source_name);
TrialList parse_trial_file(const std::filesystem::path& path);

EnrolmentMap parse_enrolments(std::istream& in, const std::string& source_name);
EnrolmentMap parse_enrolment_file(const std::filesystem::path& path);

/// Parses both files and checks that every trial's model is enrolled.
ProtocolSet load_protocol(const std::filesystem::path& trial_path,
                          const std::filesystem::path& enrolment_path);

/// Throws LookupError if a trial references a model missing from enrolments.
void check_enrolled(const ProtocolSet& protocol);

std::vector<Trial> subset(const std::vector<Trial>& trials, Subset which);

/// Whether a trial is part of the given subset.
bool in_subset(const Trial& trial, Subset which);

std::string format_trial(const Trial& trial);
void write_trials(std::ostream& out, const std::vector<Trial>& trials);
void write_enrolments(std::ostream& out, const EnrolmentMap& enrolments);
void save_trial_file(const std::filesystem::path& path, const std::vector<Trial>& trials);
void save_enrolment_file(const std::filesystem::path& path, const EnrolmentMap& enrolments);

}  // namespace sasv
