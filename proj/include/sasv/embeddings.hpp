#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sasv/protocol.hpp"

namespace sasv {

/// Working-precision vector used by all downstream arithmetic.
using Embedding = std::vector<double>;

enum class StoreFormat { Text, Binary };

/// Fixed-dimension float32 vectors keyed by utterance id.
///
/// Records keep their insertion order, which is also the order in which they
/// are saved. Values are checked to be finite on insertion; zero vectors are
/// accepted.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  void add(std::string id, std::span<const float> values);
  void add(std::string id, std::span<const double> values);

  bool contains(std::string_view id) const;
  /// Throws LookupError naming the id when absent.
  std::span<const float> at(std::string_view id) const;
  Embedding embedding(std::string_view id) const;

  const std::string& id(std::size_t index) const { return ids_[index]; }
  std::span<const float> row(std::size_t index) const;

  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

EmbeddingStore read_text_store(std::istream& in, const std::string& source_name);
EmbeddingStore read_binary_store(std::istream& in, const std::string& source_name);
void write_text_store(std::ostream& out, const EmbeddingStore& store);
void write_binary_store(std::ostream& out, const EmbeddingStore& store);

EmbeddingStore load_store(const std::filesystem::path& path, StoreFormat format);
void save_store(const std::filesystem::path& path, const EmbeddingStore& store,
                StoreFormat format);

StoreFormat parse_store_format(std::string_view name);

struct MeanOptions {
  // Scale each enrolment embedding to unit length before averaging.
  bool length_normalize = false;
};

/// Component-wise mean of a model's enrolment embeddings.
///
/// Accumulation follows the lexicographic order of utterance ids, so the
/// result is bit-identical for any ordering of the enrolment list.
Embedding mean_enrolment(const EmbeddingStore& store, const EnrolmentModel& model,
                         MeanOptions options = {});

}  // namespace sasv
