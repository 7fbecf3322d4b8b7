#include "sasv/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include "binary_io.hpp"
#include "sasv/error.hpp"
#include "text_util.hpp"

namespace sasv {

namespace {

constexpr char kStoreMagic[4] = {'S', 'A', 'S', 'V'};
constexpr std::uint8_t kStoreVersion = 1;

}  // namespace

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw InputError("embedding dimension must be positive");
}

void EmbeddingStore::add(std::string id, std::span<const float> values) {
  if (id.empty()) throw InputError("empty utterance id");
  if (dim_ == 0) {
    if (values.empty()) throw InputError("embedding '" + id + "' has no components");
    dim_ = values.size();
  }
  if (values.size() != dim_)
    throw InputError("embedding '" + id + "' has dimension " + std::to_string(values.size()) +
                     ", store dimension is " + std::to_string(dim_));
  for (std::size_t k = 0; k < values.size(); ++k)
    if (!std::isfinite(values[k]))
      throw InputError("embedding '" + id + "' has a non-finite value at component " +
                       std::to_string(k));
  if (index_.contains(id)) throw InputError("duplicate utterance id '" + id + "'");
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  values_.insert(values_.end(), values.begin(), values.end());
}

void EmbeddingStore::add(std::string id, std::span<const double> values) {
  std::vector<float> narrowed(values.size());
  std::transform(values.begin(), values.end(), narrowed.begin(),
                 [](double v) { return static_cast<float>(v); });
  add(std::move(id), std::span<const float>(narrowed));
}

bool EmbeddingStore::contains(std::string_view id) const {
  return index_.find(std::string(id)) != index_.end();
}

std::span<const float> EmbeddingStore::at(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) throw LookupError("utterance '" + std::string(id) + "' not in store");
  return row(it->second);
}

Embedding EmbeddingStore::embedding(std::string_view id) const {
  auto r = at(id);
  return Embedding(r.begin(), r.end());
}

std::span<const float> EmbeddingStore::row(std::size_t index) const {
  return std::span<const float>(values_).subspan(index * dim_, dim_);
}

EmbeddingStore read_text_store(std::istream& in, const std::string& source_name) {
  EmbeddingStore store;
  std::vector<float> values;
  std::string line;
  std::size_t lineno = 0;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line)) continue;
    ++record;
    const auto fields = detail::split_ws(line);
    if (fields.size() < 2)
      throw ParseError(source_name, lineno, "record " + std::to_string(record) + " has no values");
    values.clear();
    for (std::size_t k = 1; k < fields.size(); ++k) {
      float v = 0.0f;
      const char* first = fields[k].data();
      const char* last = first + fields[k].size();
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last)
        throw ParseError(source_name, lineno,
                         "record " + std::to_string(record) + ": bad number '" +
                             std::string(fields[k]) + "'");
      values.push_back(v);
    }
    try {
      store.add(std::string(fields[0]), std::span<const float>(values));
    } catch (const InputError& e) {
      throw ParseError(source_name, lineno, "record " + std::to_string(record) + ": " + e.what());
    }
  }
  if (store.dim() == 0)
    throw InputError(source_name + ": empty text store, dimension is indeterminate");
  return store;
}

void write_text_store(std::ostream& out, const EmbeddingStore& store) {
  char buf[32];
  for (std::size_t i = 0; i < store.size(); ++i) {
    out << store.id(i);
    for (float v : store.row(i)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out << ' ';
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
}

EmbeddingStore read_binary_store(std::istream& in, const std::string& source_name) {
  char magic[4];
  std::uint8_t version = 0;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kStoreMagic))
    throw InputError(source_name + ": corrupt header (bad magic)");
  if (!detail::get_le(in, version) || version != kStoreVersion)
    throw InputError(source_name + ": corrupt header (unsupported version)");
  if (!detail::get_le(in, dim) || !detail::get_le(in, count))
    throw InputError(source_name + ": corrupt header (truncated)");
  if (dim == 0) throw InputError(source_name + ": corrupt header (zero dimension)");

  EmbeddingStore store(dim);
  std::vector<float> values(dim);
  std::string id;
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::string where = source_name + ": record " + std::to_string(r);
    std::uint16_t id_len = 0;
    if (!detail::get_le(in, id_len)) throw InputError(where + ": corrupt record (truncated id)");
    id.assign(id_len, '\0');
    if (id_len && !in.read(id.data(), id_len))
      throw InputError(where + ": corrupt record (truncated id)");
    for (std::uint32_t k = 0; k < dim; ++k)
      if (!detail::get_f32(in, values[k]))
        throw InputError(where + ": corrupt record (expected " + std::to_string(dim) +
                         " values, found " + std::to_string(k) + ")");
    try {
      store.add(id, std::span<const float>(values));
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw InputError(source_name + ": trailing bytes after " + std::to_string(count) + " records");
  return store;
}

void write_binary_store(std::ostream& out, const EmbeddingStore& store) {
  if (store.dim() == 0) throw InputError("cannot write a store without a dimension");
  out.write(kStoreMagic, 4);
  detail::put_le<std::uint8_t>(out, kStoreVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
  detail::put_le<std::uint64_t>(out, store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& id = store.id(i);
    if (id.size() > 0xFFFF) throw InputError("utterance id too long: " + id.substr(0, 32) + "...");
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (float v : store.row(i)) detail::put_f32(out, v);
  }
}

EmbeddingStore load_store(const std::filesystem::path& path, StoreFormat format) {
  if (format == StoreFormat::Binary) {
    auto in = detail::open_input(path, std::ios::in | std::ios::binary);
    return read_binary_store(in, path.string());
  }
  auto in = detail::open_input(path);
  return read_text_store(in, path.string());
}

void save_store(const std::filesystem::path& path, const EmbeddingStore& store,
                StoreFormat format) {
  if (format == StoreFormat::Binary) {
    auto out = detail::open_output(path, std::ios::out | std::ios::binary);
    write_binary_store(out, store);
    detail::finish_output(out, path);
  } else {
    auto out = detail::open_output(path);
    write_text_store(out, store);
    detail::finish_output(out, path);
  }
}

StoreFormat parse_store_format(std::string_view name) {
  if (name == "text") return StoreFormat::Text;
  if (name == "binary") return StoreFormat::Binary;
  throw InputError("unknown store format '" + std::string(name) + "' (expected text|binary)");
}

Embedding mean_enrolment(const EmbeddingStore& store, const EnrolmentModel& model,
                         MeanOptions options) {
  if (model.enrol_utts.empty())
    throw InputError("speaker model '" + model.speaker_model + "' has no enrolment utterances");
  std::vector<const std::string*> order;
  order.reserve(model.enrol_utts.size());
  for (const auto& u : model.enrol_utts) order.push_back(&u);
  std::sort(order.begin(), order.end(),
            [](const std::string* a, const std::string* b) { return *a < *b; });

  Embedding sum(store.dim(), 0.0);
  for (const std::string* utt : order) {
    std::span<const float> e;
    try {
      e = store.at(*utt);
    } catch (const LookupError&) {
      throw LookupError("speaker model '" + model.speaker_model + "': enrolment utterance '" +
                        *utt + "' not in store");
    }
    double scale = 1.0;
    if (options.length_normalize) {
      double sq = 0.0;
      for (float v : e) sq += static_cast<double>(v) * v;
      if (sq == 0.0)
        throw InputError("enrolment utterance '" + *utt + "' has zero norm, cannot normalize");
      scale = 1.0 / std::sqrt(sq);
    }
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += scale * static_cast<double>(e[k]);
  }
  if (order.size() > 1) {
    const double n = static_cast<double>(order.size());
    for (double& v : sum) v /= n;
  }
  return sum;
}

}  // namespace sasv
