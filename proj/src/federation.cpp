#include "fedit/federation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fedit/checkpoint.hpp"

namespace fedit {

using nlohmann::json;

TrainResult IdentityTrainer::train(std::size_t, const std::string&, const ParameterSet& params,
                                   const std::vector<InstructionPair>& dataset, const TrainHyperparams&) const {
  return {params, dataset.size(), 0.0f};
}

// ---------------------------------------------------------------------------

double Quadratic::loss(std::span<const double> w) const {
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double residual = -b[r];
    for (std::size_t c = 0; c < cols; ++c) residual += a[r * cols + c] * w[c];
    total += residual * residual;
  }
  return 0.5 * total;
}

std::vector<double> Quadratic::gradient(std::span<const double> w) const {
  std::vector<double> grad(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double residual = -b[r];
    for (std::size_t c = 0; c < cols; ++c) residual += a[r * cols + c] * w[c];
    for (std::size_t c = 0; c < cols; ++c) grad[c] += a[r * cols + c] * residual;
  }
  return grad;
}

SimulatedTrainer::SimulatedTrainer(std::map<std::string, Quadratic> objectives) : objectives_(std::move(objectives)) {
  for (const auto& [id, q] : objectives_) {
    if (q.a.size() != q.rows * q.cols || q.b.size() != q.rows) {
      throw Error(ErrorCode::ConfigError, "quadratic for '" + id + "' has inconsistent dimensions");
    }
  }
}

SimulatedTrainer SimulatedTrainer::generate(const std::vector<std::string>& client_ids, std::size_t dim,
                                            std::size_t rows, std::uint64_t seed) {
  std::map<std::string, Quadratic> objectives;
  const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(dim, 1)));
  for (const auto& id : client_ids) {
    Rng rng = seeded_rng(seed, "sim-trainer/" + id);
    Quadratic q{rows, dim, std::vector<double>(rows * dim), std::vector<double>(rows)};
    for (auto& v : q.a) v = (2.0 * rng.next_double() - 1.0) * scale;
    for (auto& v : q.b) v = 2.0 * rng.next_double() - 1.0;
    objectives.emplace(id, std::move(q));
  }
  return SimulatedTrainer(std::move(objectives));
}

const Quadratic& SimulatedTrainer::objective(const std::string& client_id) const {
  auto it = objectives_.find(client_id);
  if (it == objectives_.end()) throw Error(ErrorCode::ConfigError, "no simulated objective for '" + client_id + "'");
  return it->second;
}

TrainResult SimulatedTrainer::train(std::size_t, const std::string& client_id, const ParameterSet& params,
                                    const std::vector<InstructionPair>& dataset,
                                    const TrainHyperparams& hyper) const {
  const Quadratic& q = objective(client_id);
  const auto flat = params.flatten();
  if (flat.size() != q.cols) {
    throw Error(ErrorCode::ShapeMismatch, "simulated objective for '" + client_id + "' expects " +
                                              std::to_string(q.cols) + " parameters");
  }
  std::vector<double> w(flat.begin(), flat.end());
  const double lr = hyper.learning_rate;
  double loss_sum = 0.0;
  for (std::size_t step = 0; step < hyper.local_steps; ++step) {
    loss_sum += q.loss(w);
    const auto grad = q.gradient(w);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * grad[i];
  }
  const double mean_loss = hyper.local_steps == 0 ? q.loss(w) : loss_sum / static_cast<double>(hyper.local_steps);

  std::vector<float> updated(w.size());
  std::transform(w.begin(), w.end(), updated.begin(), [](double v) { return static_cast<float>(v); });
  TrainResult result{params, dataset.size(), static_cast<float>(mean_loss)};
  result.params.assign_flat(updated);
  return result;
}

// ---------------------------------------------------------------------------

json make_train_request(std::size_t round, const std::string& client_id, const ParameterSet& params,
                        const std::vector<InstructionPair>& dataset, const TrainHyperparams& hyper) {
  json rows = json::array();
  for (const auto& p : dataset) rows.push_back({{"instruction", p.instruction}, {"response", p.response}});
  return {{"round", round},
          {"client_id", client_id},
          {"params_ftp1_b64", base64_encode(encode_ftp1(params))},
          {"dataset", std::move(rows)},
          {"hyperparams",
           {{"learning_rate", hyper.learning_rate},
            {"batch_size", hyper.batch_size},
            {"local_steps", hyper.local_steps},
            {"seed", hyper.seed}}}};
}

TrainResult parse_train_response(const json& body) {
  try {
    TrainResult result;
    result.params = decode_ftp1(base64_decode(body.at("params_ftp1_b64").get<std::string>())).params;
    result.num_examples = body.at("num_examples").get<std::size_t>();
    result.train_loss = body.at("train_loss").get<float>();
    return result;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendError, std::string("malformed train response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

std::vector<std::string> sample_clients(const std::vector<std::string>& all_ids, std::size_t clients_per_round,
                                        Rng& rng) {
  std::vector<std::string> out;
  for (auto i : draw_without_replacement(all_ids.size(), clients_per_round, rng)) out.push_back(all_ids[i]);
  return out;
}

namespace {

ParameterSet weighted_sum(const std::vector<const ParameterSet*>& params, const std::vector<std::size_t>& sizes) {
  if (params.empty()) throw Error(ErrorCode::ConfigError, "aggregate needs at least one client");
  double total = 0.0;
  for (auto n : sizes) {
    if (n == 0) throw Error(ErrorCode::ConfigError, "client dataset size must be positive");
    total += static_cast<double>(n);
  }
  for (std::size_t m = 1; m < params.size(); ++m) require_compatible(*params[0], *params[m]);

  std::vector<double> weights(sizes.size());
  for (std::size_t m = 0; m < sizes.size(); ++m) weights[m] = static_cast<double>(sizes[m]) / total;

  ParameterSet out = *params[0];
  std::ptrdiff_t t = 0;
  std::vector<const float*> inputs(params.size());
  for (auto& [name, tensor] : out) {
    for (std::size_t m = 0; m < params.size(); ++m) inputs[m] = (params[m]->begin() + t)->second.data.data();
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
      double acc = 0.0;
      for (std::size_t m = 0; m < params.size(); ++m) acc += weights[m] * static_cast<double>(inputs[m][i]);
      tensor.data[i] = static_cast<float>(acc);
    }
    ++t;
  }
  return out;
}

bool bits_less(const ParameterSet& a, const ParameterSet& b) {
  const auto fa = a.flatten();
  const auto fb = b.flatten();
  return std::lexicographical_compare(fa.begin(), fa.end(), fb.begin(), fb.end(), [](float x, float y) {
    return std::bit_cast<std::uint32_t>(x) < std::bit_cast<std::uint32_t>(y);
  });
}

}  // namespace

ParameterSet aggregate(const std::vector<ClientUpdate>& updates) {
  std::vector<const ClientUpdate*> order;
  for (const auto& u : updates) order.push_back(&u);
  std::sort(order.begin(), order.end(), [](auto* x, auto* y) { return x->client_id < y->client_id; });
  std::vector<const ParameterSet*> params;
  std::vector<std::size_t> sizes;
  for (auto* u : order) {
    params.push_back(&u->params);
    sizes.push_back(u->num_examples);
  }
  return weighted_sum(params, sizes);
}

ParameterSet aggregate(const std::vector<ParameterSet>& client_params, const std::vector<std::size_t>& sizes) {
  if (client_params.size() != sizes.size()) {
    throw Error(ErrorCode::ConfigError, "parameter and size lists differ in length");
  }
  if (client_params.empty()) throw Error(ErrorCode::ConfigError, "aggregate needs at least one client");
  for (std::size_t m = 1; m < client_params.size(); ++m) require_compatible(client_params[0], client_params[m]);

  std::vector<std::size_t> order(client_params.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (sizes[x] != sizes[y]) return sizes[x] < sizes[y];
    return bits_less(client_params[x], client_params[y]);
  });
  std::vector<const ParameterSet*> params;
  std::vector<std::size_t> sorted_sizes;
  for (auto i : order) {
    params.push_back(&client_params[i]);
    sorted_sizes.push_back(sizes[i]);
  }
  return weighted_sum(params, sorted_sizes);
}

// ---------------------------------------------------------------------------

json to_json(const RoundRecord& record) {
  json j = {{"round", record.round},
            {"sampled_client_ids", record.sampled_client_ids},
            {"weights", record.weights},
            {"train_losses", record.train_losses},
            {"checksum", record.checksum}};
  if (record.error) j["error"] = *record.error;
  return j;
}

std::string round_checkpoint_name(std::size_t completed_rounds) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "round_%04zu.ftp1", completed_rounds);
  return buf;
}

FederationResult run_federation(const FederationConfig& config, const std::vector<GeneratedDataset>& clients,
                                const ParameterSet& init, const TrainerBackend& trainer,
                                const std::optional<std::filesystem::path>& checkpoint_dir) {
  config.validate();
  if (clients.size() != config.num_clients) {
    throw Error(ErrorCode::ConfigError, "num_clients is " + std::to_string(config.num_clients) + " but " +
                                            std::to_string(clients.size()) + " client datasets were given");
  }
  std::vector<std::string> ids;
  std::map<std::string, std::vector<InstructionPair>> kept;
  for (const auto& c : clients) {
    auto pairs = c.kept_pairs();
    if (pairs.empty()) throw Error(ErrorCode::ConfigError, "client '" + c.client_id + "' has no kept pairs");
    if (!kept.emplace(c.client_id, std::move(pairs)).second) throw Error(ErrorCode::DuplicateId, c.client_id);
    ids.push_back(c.client_id);
  }

  std::ofstream records_out;
  if (checkpoint_dir) {
    std::filesystem::create_directories(*checkpoint_dir);
    records_out.open(*checkpoint_dir / kRoundRecordsFile, std::ios::binary | std::ios::trunc);
    if (!records_out) throw Error(ErrorCode::IoError, "cannot write round records in " + checkpoint_dir->string());
  }
  auto emit = [&](const RoundRecord& r) {
    if (records_out.is_open()) {
      records_out << to_json(r).dump() << '\n';
      records_out.flush();
    }
  };

  FederationResult result{init, {}};
  Rng sampling = seeded_rng(config.seed, "sampling");

  for (std::size_t round = 0; round < config.rounds; ++round) {
    RoundRecord record;
    record.round = round;
    record.sampled_client_ids = sample_clients(ids, config.clients_per_round, sampling);

    const auto& sampled = record.sampled_client_ids;
    std::vector<std::optional<TrainResult>> results(sampled.size());
    std::vector<std::string> failures(sampled.size());
    parallel_for(sampled.size(), config.parallelism, [&](std::size_t i) {
      const auto& id = sampled[i];
      const auto& data = kept.at(id);
      TrainHyperparams hyper{config.learning_rate, config.batch_size, config.local_steps,
                             seeded_rng(config.seed, "train/" + std::to_string(round) + "/" + id).next_u64()};
      try {
        auto r = trainer.train(round, id, result.final_params, data, hyper);
        require_compatible(result.final_params, r.params);
        if (r.num_examples != data.size()) {
          throw Error(ErrorCode::TrainerFailure, "trainer reported " + std::to_string(r.num_examples) +
                                                     " examples, dataset has " + std::to_string(data.size()));
        }
        results[i] = std::move(r);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    });

    for (std::size_t i = 0; i < sampled.size(); ++i) {
      if (!failures[i].empty()) {
        record.error = "client " + sampled[i] + ": " + failures[i];
        result.records.push_back(record);
        emit(record);
        throw Error(ErrorCode::TrainerFailure,
                    "client '" + sampled[i] + "' failed in round " + std::to_string(round) + ": " + failures[i]);
      }
    }

    std::vector<ClientUpdate> updates;
    double total = 0.0;
    for (std::size_t i = 0; i < sampled.size(); ++i) {
      updates.push_back({sampled[i], std::move(results[i]->params), results[i]->num_examples});
      record.train_losses.push_back(results[i]->train_loss);
      total += static_cast<double>(results[i]->num_examples);
    }
    for (const auto& u : updates) record.weights.push_back(static_cast<float>(static_cast<double>(u.num_examples) / total));

    result.final_params = aggregate(updates);
    record.checksum = result.final_params.checksum();
    result.records.push_back(record);
    emit(record);

    const std::size_t completed = round + 1;
    if (checkpoint_dir && (completed % config.checkpoint_interval == 0 || completed == config.rounds)) {
      write_checkpoint(*checkpoint_dir / round_checkpoint_name(completed), result.final_params,
                       {static_cast<std::int64_t>(completed), config.seed});
    }
  }
  if (checkpoint_dir) {
    write_checkpoint(*checkpoint_dir / kFinalCheckpointFile, result.final_params,
                     {static_cast<std::int64_t>(config.rounds), config.seed});
  }
  return result;
}

}  // namespace fedit
