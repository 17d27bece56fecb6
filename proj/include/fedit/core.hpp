#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fedit {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorCode {
  ConfigError,
  MalformedLine,
  DuplicateId,
  InvalidUtf8,
  InvalidDocument,
  EmptyTokenList,
  PoolTooSmall,
  MissingDomainTag,
  BackendUnreachable,
  BackendError,
  ShapeMismatch,
  NameSetMismatch,
  TrainerFailure,
  IdMismatch,
  CheckpointFormat,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a code; what() starts with the
/// code name so it is greppable from CLI stderr.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// Raised by HTTP backends on a non-2xx answer after retries are exhausted.
class BackendError : public Error {
 public:
  BackendError(int status, std::string body);

  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// SplitMix64 counter generator. The stream is fully defined by the state
/// word so it is identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t state) noexcept : state_(state) {}

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 bits of mantissa.
  double next_double() noexcept;
  /// Uniform integer in [0, bound); bound must be > 0. Rejection sampled.
  std::uint64_t next_below(std::uint64_t bound) noexcept;

 private:
  std::uint64_t state_;
};

/// Independent stream per (seed, label): the label's FNV-1a hash is mixed
/// into the seed before the first draw.
Rng seeded_rng(std::uint64_t seed, std::string_view stream_label) noexcept;

/// Uniform draw of `count` distinct indices from [0, n), returned in draw
/// order (partial Fisher-Yates).
std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t count, Rng& rng);

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct Document {
  std::string id;
  std::string text;
  std::map<std::string, std::string> meta;

  std::optional<std::string> domain() const;

  friend bool operator==(const Document&, const Document&) = default;
};

/// Throws InvalidDocument when id is empty or text is blank.
void validate(const Document& doc);

struct Example {
  Document document;
  std::string instruction;
  std::string response;
  std::optional<std::string> domain;

  friend bool operator==(const Example&, const Example&) = default;
};

struct InstructionPair {
  std::string instruction;
  std::string response;
  std::string source_doc_id;
  std::optional<float> reward_score;
  bool kept = true;

  friend bool operator==(const InstructionPair&, const InstructionPair&) = default;
};

struct SelectionPolicy {
  enum class Kind { Retrieval, RandomInDomain, FixedInDomain, RandomOutDomain, RandomMixed };

  Kind kind = Kind::Retrieval;
  // Only meaningful for RandomMixed.
  std::size_t in_count = 0;
  std::size_t out_count = 0;

  static SelectionPolicy retrieval() { return {}; }
  static SelectionPolicy mixed(std::size_t in, std::size_t out) {
    return {Kind::RandomMixed, in, out};
  }

  bool domain_aware() const noexcept { return kind != Kind::Retrieval; }

  friend bool operator==(const SelectionPolicy&, const SelectionPolicy&) = default;
};

/// "retrieval", "random-in-domain", "fixed-in-domain", "random-out-domain",
/// "random-mixed:IN,OUT".
SelectionPolicy parse_policy(std::string_view text);
std::string to_string(const SelectionPolicy& policy);

struct FederationConfig {
  std::size_t num_clients = 5;
  std::size_t rounds = 200;
  std::size_t clients_per_round = 2;
  std::uint64_t seed = 0;
  float learning_rate = 2e-5f;
  std::size_t batch_size = 16;
  std::size_t local_steps = 10;
  std::size_t k_examples = 3;
  SelectionPolicy selection_policy;
  std::size_t checkpoint_interval = 10;
  std::size_t parallelism = 4;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
};

struct Tensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t element_count() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Ordered name -> tensor map; iteration order is insertion order.
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  ParameterSet() = default;

  /// Throws ShapeMismatch if product(shape) != data.size(), ConfigError on a
  /// duplicate name.
  void insert(std::string name, Tensor tensor);

  const Tensor* find(std::string_view name) const noexcept;
  Tensor* find(std::string_view name) noexcept;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::uint64_t element_count() const noexcept;

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }

  /// Sum of every element, accumulated in f64.
  double checksum() const noexcept;

  /// Flatten all tensors in insertion order.
  std::vector<float> flatten() const;
  /// Inverse of flatten(); values.size() must equal element_count().
  void assign_flat(std::span<const float> values);

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<Entry> entries_;
};

/// Throws NameSetMismatch or ShapeMismatch(name) unless `a` and `b` have the
/// same names in the same order with identical shapes.
void require_compatible(const ParameterSet& a, const ParameterSet& b);

/// "name:2x3,other:4" -> zero-filled tensors in the given order.
ParameterSet zeros_from_spec(std::string_view spec);

// ---------------------------------------------------------------------------
// Small utilities shared by the pipeline stages
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on up to `parallelism` threads. Rethrows the
/// exception of the lowest failing index after all workers finish.
void parallel_for(std::size_t n, std::size_t parallelism, const std::function<void(std::size_t)>& fn);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

std::string trim(std::string_view text);

}  // namespace fedit
