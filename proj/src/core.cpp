#include "fedit/core.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <iterator>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace fedit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidUtf8: return "InvalidUtf8";
    case ErrorCode::InvalidDocument: return "InvalidDocument";
    case ErrorCode::EmptyTokenList: return "EmptyTokenList";
    case ErrorCode::PoolTooSmall: return "PoolTooSmall";
    case ErrorCode::MissingDomainTag: return "MissingDomainTag";
    case ErrorCode::BackendUnreachable: return "BackendUnreachable";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NameSetMismatch: return "NameSetMismatch";
    case ErrorCode::TrainerFailure: return "TrainerFailure";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::CheckpointFormat: return "CheckpointFormat";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

BackendError::BackendError(int status, std::string body)
    : Error(ErrorCode::BackendError, "status " + std::to_string(status) + ": " + body),
      status_(status),
      body_(std::move(body)) {}

// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t Rng::next_u64() noexcept {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::next_double() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::next_below(std::uint64_t bound) noexcept {
  // Reject the top partial bucket so every residue is equally likely.
  const std::uint64_t limit = bound * (UINT64_MAX / bound);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

Rng seeded_rng(std::uint64_t seed, std::string_view stream_label) noexcept {
  Rng mixer(seed ^ fnv1a64(stream_label));
  return Rng(mixer.next_u64());
}

std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t count, Rng& rng) {
  if (count > n) {
    throw Error(ErrorCode::ConfigError,
                "cannot draw " + std::to_string(count) + " of " + std::to_string(n));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

// ---------------------------------------------------------------------------

std::optional<std::string> Document::domain() const {
  if (auto it = meta.find("domain"); it != meta.end()) return it->second;
  return std::nullopt;
}

void validate(const Document& doc) {
  if (doc.id.empty()) throw Error(ErrorCode::InvalidDocument, "document id is empty");
  if (trim(doc.text).empty()) {
    throw Error(ErrorCode::InvalidDocument, "document '" + doc.id + "' has blank text");
  }
}

SelectionPolicy parse_policy(std::string_view text) {
  using K = SelectionPolicy::Kind;
  if (text == "retrieval") return {K::Retrieval};
  if (text == "random-in-domain") return {K::RandomInDomain};
  if (text == "fixed-in-domain") return {K::FixedInDomain};
  if (text == "random-out-domain") return {K::RandomOutDomain};
  constexpr std::string_view mixed = "random-mixed:";
  if (text.starts_with(mixed)) {
    auto rest = text.substr(mixed.size());
    auto comma = rest.find(',');
    std::size_t in = 0, out = 0;
    if (comma != std::string_view::npos) {
      auto a = rest.substr(0, comma), b = rest.substr(comma + 1);
      auto ra = std::from_chars(a.data(), a.data() + a.size(), in);
      auto rb = std::from_chars(b.data(), b.data() + b.size(), out);
      if (ra.ec == std::errc{} && ra.ptr == a.data() + a.size() && rb.ec == std::errc{} &&
          rb.ptr == b.data() + b.size()) {
        return SelectionPolicy::mixed(in, out);
      }
    }
  }
  throw Error(ErrorCode::ConfigError, "unknown selection policy '" + std::string(text) + "'");
}

std::string to_string(const SelectionPolicy& policy) {
  using K = SelectionPolicy::Kind;
  switch (policy.kind) {
    case K::Retrieval: return "retrieval";
    case K::RandomInDomain: return "random-in-domain";
    case K::FixedInDomain: return "fixed-in-domain";
    case K::RandomOutDomain: return "random-out-domain";
    case K::RandomMixed:
      return "random-mixed:" + std::to_string(policy.in_count) + "," + std::to_string(policy.out_count);
  }
  return "retrieval";
}

void FederationConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (num_clients == 0) fail("num_clients must be positive");
  if (rounds == 0) fail("rounds must be positive");
  if (clients_per_round == 0) fail("clients_per_round must be positive");
  if (clients_per_round > num_clients) fail("clients_per_round exceeds num_clients");
  if (!(learning_rate > 0.0f)) fail("learning_rate must be > 0");
  if (batch_size == 0) fail("batch_size must be positive");
  if (local_steps == 0) fail("local_steps must be positive");
  if (k_examples == 0) fail("k_examples must be >= 1");
  if (checkpoint_interval == 0) fail("checkpoint_interval must be positive");
  if (parallelism == 0) fail("parallelism must be positive");
  if (selection_policy.kind == SelectionPolicy::Kind::RandomMixed &&
      selection_policy.in_count + selection_policy.out_count != k_examples) {
    fail("random-mixed counts must sum to k_examples");
  }
}

// ---------------------------------------------------------------------------

std::uint64_t Tensor::element_count() const noexcept {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void ParameterSet::insert(std::string name, Tensor tensor) {
  if (tensor.element_count() != tensor.data.size()) {
    throw Error(ErrorCode::ShapeMismatch, name + ": shape does not match data length");
  }
  if (find(name) != nullptr) throw Error(ErrorCode::ConfigError, "duplicate tensor name " + name);
  entries_.emplace_back(std::move(name), std::move(tensor));
}

const Tensor* ParameterSet::find(std::string_view name) const noexcept {
  for (const auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

Tensor* ParameterSet::find(std::string_view name) noexcept {
  for (auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::uint64_t ParameterSet::element_count() const noexcept {
  std::uint64_t n = 0;
  for (const auto& [_, t] : entries_) n += t.data.size();
  return n;
}

double ParameterSet::checksum() const noexcept {
  double sum = 0.0;
  for (const auto& [_, t] : entries_) {
    for (float v : t.data) sum += v;
  }
  return sum;
}

std::vector<float> ParameterSet::flatten() const {
  std::vector<float> out;
  out.reserve(element_count());
  for (const auto& [_, t] : entries_) out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

void ParameterSet::assign_flat(std::span<const float> values) {
  if (values.size() != element_count()) {
    throw Error(ErrorCode::ShapeMismatch, "flat vector length does not match parameter set");
  }
  std::size_t offset = 0;
  for (auto& [_, t] : entries_) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), t.data.size(), t.data.begin());
    offset += t.data.size();
  }
}

void require_compatible(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::NameSetMismatch, "tensor counts differ");
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) {
      throw Error(ErrorCode::NameSetMismatch, "'" + ia->first + "' vs '" + ib->first + "'");
    }
    if (ia->second.shape != ib->second.shape) throw Error(ErrorCode::ShapeMismatch, ia->first);
  }
}

ParameterSet zeros_from_spec(std::string_view spec) {
  ParameterSet params;
  std::string item;
  std::stringstream ss{std::string(spec)};
  while (std::getline(ss, item, ',')) {
    auto colon = item.find(':');
    if (colon == std::string::npos || colon == 0) {
      throw Error(ErrorCode::ConfigError, "bad shape spec item '" + item + "'");
    }
    Tensor t;
    std::string dims = item.substr(colon + 1);
    std::stringstream ds(dims);
    std::string dim;
    while (std::getline(ds, dim, 'x')) {
      std::uint64_t d = 0;
      auto r = std::from_chars(dim.data(), dim.data() + dim.size(), d);
      if (r.ec != std::errc{} || r.ptr != dim.data() + dim.size() || d == 0) {
        throw Error(ErrorCode::ConfigError, "bad dimension in '" + item + "'");
      }
      t.shape.push_back(d);
    }
    if (t.shape.empty()) throw Error(ErrorCode::ConfigError, "empty shape in '" + item + "'");
    t.data.assign(t.element_count(), 0.0f);
    params.insert(item.substr(0, colon), std::move(t));
  }
  if (params.empty()) throw Error(ErrorCode::ConfigError, "empty shape spec");
  return params;
}

// ---------------------------------------------------------------------------

void parallel_for(std::size_t n, std::size_t parallelism,
                  const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(parallelism, 1), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

std::string trim(std::string_view text) {
  constexpr std::string_view ws = " \t\n\r\f\v";
  const auto first = text.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(ws);
  return std::string(text.substr(first, last - first + 1));
}

}  // namespace fedit
